use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, SimError};
use crate::selection::Scheme;

/// What happened in one communication round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    /// Test accuracy of the global model after aggregation.
    pub accuracy: f64,
    /// Sample-weighted loss of this round's uploads; carried over from the
    /// last round that had any, `None` before the first.
    pub global_loss: Option<f64>,
    pub selected: Vec<usize>,
    pub uploaded: Vec<usize>,
    pub dropped: Vec<usize>,
    pub bytes_up: u64,
    /// From the round start until the last accepted upload lands, or the
    /// deadline when anything was dropped.
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheme: Scheme,
    pub rounds: usize,
    pub final_accuracy: f64,
    pub final_global_loss: Option<f64>,
    pub mean_selected: f64,
    pub mean_uploaded: f64,
    pub total_selected: usize,
    pub total_uploaded: usize,
    pub total_dropped: usize,
    pub total_bytes_up: u64,
    pub total_time_s: f64,
}

impl RunSummary {
    pub fn from_logs(scheme: Scheme, logs: &[RoundLog]) -> Self {
        let rounds = logs.len();
        let total_selected: usize = logs.iter().map(|l| l.selected.len()).sum();
        let total_uploaded: usize = logs.iter().map(|l| l.uploaded.len()).sum();
        let per_round = |n: usize| if rounds == 0 { 0.0 } else { n as f64 / rounds as f64 };
        Self {
            scheme,
            rounds,
            final_accuracy: logs.last().map_or(0.0, |l| l.accuracy),
            final_global_loss: logs.last().and_then(|l| l.global_loss),
            mean_selected: per_round(total_selected),
            mean_uploaded: per_round(total_uploaded),
            total_selected,
            total_uploaded,
            total_dropped: logs.iter().map(|l| l.dropped.len()).sum(),
            total_bytes_up: logs.iter().map(|l| l.bytes_up).sum(),
            total_time_s: logs.iter().map(|l| l.time_s).sum(),
        }
    }
}

const HEADER: [&str; 8] = [
    "round",
    "accuracy",
    "global_loss",
    "n_selected",
    "n_uploaded",
    "n_dropped",
    "bytes_up",
    "selected_ids",
];

/// Header plus one row per round. Floats carry six decimals; a missing
/// global loss is an empty field.
pub fn write_csv<W: Write>(logs: &[RoundLog], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for l in logs {
        let ids: Vec<String> = l.selected.iter().map(|i| i.to_string()).collect();
        w.write_record([
            l.round.to_string(),
            format!("{:.6}", l.accuracy),
            l.global_loss.map(|g| format!("{g:.6}")).unwrap_or_default(),
            l.selected.len().to_string(),
            l.uploaded.len().to_string(),
            l.dropped.len().to_string(),
            l.bytes_up.to_string(),
            ids.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(logs: &[RoundLog], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(logs, std::io::BufWriter::new(file)).map_err(|source| SimError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_summary(summary: &RunSummary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    std::fs::write(path, text + "\n").map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(round: usize) -> RoundLog {
        RoundLog {
            round,
            accuracy: 0.5 + round as f64 / 1000.0,
            global_loss: (round > 1).then_some(1.0 / 3.0),
            selected: vec![1, 4, 7],
            uploaded: vec![1, 7],
            dropped: vec![4],
            bytes_up: 400,
            time_s: 20.0,
        }
    }

    #[test]
    fn csv_shape() {
        let logs: Vec<RoundLog> = (1..=100).map(log).collect();
        let mut buf = Vec::new();
        write_csv(&logs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 101);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "round,accuracy,global_loss,n_selected,n_uploaded,n_dropped,bytes_up,selected_ids"
        );
        assert_eq!(lines.next().unwrap(), "1,0.501000,,3,2,1,400,1;4;7");
        assert_eq!(lines.next().unwrap(), "2,0.502000,0.333333,3,2,1,400,1;4;7");
        let mut again = Vec::new();
        write_csv(&logs, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn empty_logs_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rounds.csv");
        emit_csv(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
        let err = emit_csv(&[], dir.path().join("no/such/dir.csv")).unwrap_err();
        assert!(err.to_string().contains("dir.csv"));
    }

    #[test]
    fn summary_from_logs() {
        let logs: Vec<RoundLog> = (1..=4).map(log).collect();
        let s = RunSummary::from_logs(Scheme::Dcs, &logs);
        assert_eq!(s.mean_selected, 3.0);
        assert_eq!(s.mean_uploaded, 2.0);
        assert_eq!(s.total_dropped, 4);
        assert_eq!(s.final_accuracy, logs[3].accuracy);
        assert_eq!(RunSummary::from_logs(Scheme::Dcs, &[]).mean_selected, 0.0);
    }
}
