//! Closed-form overhead of keeping every participant's state fresh on the
//! server versus exchanging models with the selected clients.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::selection::Scheme;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OverheadError {
    #[error("invalid scenario: {0}")]
    InvalidArgument(String),
    #[error("model overhead is zero, so state overhead never crosses it")]
    NoCrossover,
    #[error("unknown preset `{0}` (expected gboard-ccs, gboard-fuzzy or tokyo)")]
    UnknownPreset(String),
    #[error("bad tau grid `{0}` (expected start:stop:step with 0 < start <= stop, step > 0)")]
    BadGrid(String),
}

pub type Result<T> = std::result::Result<T, OverheadError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadScenario {
    /// N, participants keeping an active state.
    pub n_participants: f64,
    /// s, bytes of one full state message.
    pub state_size_bytes: f64,
    /// Bytes of one compressed evaluation message.
    pub eval_size_bytes: f64,
    /// t, seconds per communication round.
    pub round_length_s: f64,
    /// τ, seconds between state messages.
    pub send_interval_s: f64,
    /// m, bytes of one model upload.
    pub model_size_bytes: f64,
    pub clients_per_round: f64,
    pub latency_cloud_s: f64,
    pub latency_dsrc_s: f64,
    /// Link rate for serializing model and state payloads.
    pub link_rate_mbps: f64,
    pub bidirectional_state: bool,
}

impl OverheadScenario {
    pub const PRESETS: [&'static str; 3] = ["gboard-ccs", "gboard-fuzzy", "tokyo"];

    pub fn gboard_ccs() -> Self {
        Self {
            n_participants: 1.5e6,
            state_size_bytes: 100.0,
            eval_size_bytes: 30.0,
            round_length_s: 72.0,
            send_interval_s: 1.0,
            model_size_bytes: 1.4e6,
            clients_per_round: 300.0,
            latency_cloud_s: 0.2,
            latency_dsrc_s: 0.04,
            link_rate_mbps: 10.4,
            bidirectional_state: true,
        }
    }

    pub fn gboard_fuzzy() -> Self {
        Self {
            state_size_bytes: 30.0,
            ..Self::gboard_ccs()
        }
    }

    pub fn tokyo() -> Self {
        Self {
            n_participants: 3.09e6,
            model_size_bytes: 5.2e6,
            clients_per_round: 1000.0,
            ..Self::gboard_ccs()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "gboard-ccs" => Ok(Self::gboard_ccs()),
            "gboard-fuzzy" => Ok(Self::gboard_fuzzy()),
            "tokyo" => Ok(Self::tokyo()),
            other => Err(OverheadError::UnknownPreset(other.into())),
        }
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self {
            send_interval_s: tau,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_participants", self.n_participants),
            ("state_size_bytes", self.state_size_bytes),
            ("eval_size_bytes", self.eval_size_bytes),
            ("round_length_s", self.round_length_s),
            ("send_interval_s", self.send_interval_s),
            ("link_rate_mbps", self.link_rate_mbps),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OverheadError::InvalidArgument(format!("{key} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("model_size_bytes", self.model_size_bytes),
            ("clients_per_round", self.clients_per_round),
            ("latency_cloud_s", self.latency_cloud_s),
            ("latency_dsrc_s", self.latency_dsrc_s),
        ];
        for (key, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(OverheadError::InvalidArgument(format!("{key} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    fn direction_factor(&self) -> f64 {
        if self.bidirectional_state {
            2.0
        } else {
            1.0
        }
    }

    /// State messages per round across all participants.
    pub fn sends_per_round(&self) -> f64 {
        self.n_participants * self.round_length_s / self.send_interval_s
    }
}

/// Bytes per round spent on state maintenance: `N s t / τ`, doubled when
/// both directions are counted.
pub fn state_overhead(sc: &OverheadScenario) -> f64 {
    sc.direction_factor() * sc.sends_per_round() * sc.state_size_bytes
}

/// Bytes per round uploaded by the selected clients.
pub fn model_overhead(sc: &OverheadScenario) -> f64 {
    sc.clients_per_round * sc.model_size_bytes
}

/// Send interval at which state overhead equals model overhead.
pub fn crossover_tau(sc: &OverheadScenario) -> Result<f64> {
    let model = model_overhead(sc);
    if !(model > 0.0) {
        return Err(OverheadError::NoCrossover);
    }
    Ok(sc.direction_factor() * sc.n_participants * sc.state_size_bytes * sc.round_length_s / model)
}

/// Summed per-participant communication time in one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBreakdown {
    /// One full latency per state message.
    pub state_latency_s: f64,
    /// Serialization of the state payload itself.
    pub state_transmission_s: f64,
    pub model_exchange_s: f64,
}

impl TimeBreakdown {
    pub fn total(&self) -> f64 {
        self.state_latency_s + self.state_transmission_s + self.model_exchange_s
    }
}

/// Centralized schemes push state to the cloud (full state for random
/// selection, the evaluation only for fuzzy ranking). The distributed scheme
/// sends evaluations over DSRC.
pub fn accumulated_time(sc: &OverheadScenario, scheme: Scheme) -> TimeBreakdown {
    let (latency, payload) = match scheme {
        Scheme::CcsRandom => (sc.latency_cloud_s, sc.state_size_bytes),
        Scheme::CcsFuzzy => (sc.latency_cloud_s, sc.eval_size_bytes),
        Scheme::Dcs => (sc.latency_dsrc_s, sc.eval_size_bytes),
    };
    let sends = sc.sends_per_round();
    let rate = sc.link_rate_mbps * 1e6;
    TimeBreakdown {
        state_latency_s: sends * latency,
        state_transmission_s: sends * payload * 8.0 / rate,
        model_exchange_s: sc.clients_per_round
            * (sc.model_size_bytes * 8.0 / rate + sc.latency_cloud_s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub tau_s: f64,
    pub state_bytes: f64,
    pub model_bytes: f64,
    pub accumulated_time_ccs: f64,
    pub accumulated_time_ccs_fuzzy: f64,
    pub accumulated_time_dcs: f64,
}

pub fn overhead_row(sc: &OverheadScenario, tau: f64) -> OverheadRow {
    let s = sc.with_tau(tau);
    OverheadRow {
        tau_s: tau,
        state_bytes: state_overhead(&s),
        model_bytes: model_overhead(&s),
        accumulated_time_ccs: accumulated_time(&s, Scheme::CcsRandom).total(),
        accumulated_time_ccs_fuzzy: accumulated_time(&s, Scheme::CcsFuzzy).total(),
        accumulated_time_dcs: accumulated_time(&s, Scheme::Dcs).total(),
    }
}

/// Parses `start:stop:step` into the inclusive grid of send intervals.
pub fn parse_tau_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || OverheadError::BadGrid(spec.into());
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(start > 0.0 && stop >= start && step > 0.0) || !stop.is_finite() {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

pub fn overhead_grid(sc: &OverheadScenario, taus: &[f64]) -> Result<Vec<OverheadRow>> {
    sc.validate()?;
    if let Some(&t) = taus.iter().find(|&&t| !(t > 0.0)) {
        return Err(OverheadError::InvalidArgument(format!("send interval must be positive, got {t}")));
    }
    Ok(taus.iter().map(|&t| overhead_row(sc, t)).collect())
}

pub fn write_overhead_csv<W: Write>(rows: &[OverheadRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "tau_s",
        "state_bytes",
        "model_bytes",
        "accumulated_time_ccs",
        "accumulated_time_ccs_fuzzy",
        "accumulated_time_dcs",
    ])?;
    for r in rows {
        w.write_record(
            [
                r.tau_s,
                r.state_bytes,
                r.model_bytes,
                r.accumulated_time_ccs,
                r.accumulated_time_ccs_fuzzy,
                r.accumulated_time_dcs,
            ]
            .map(|v| format!("{v:.6}")),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn state_overhead_examples() {
        let uni = OverheadScenario {
            bidirectional_state: false,
            ..OverheadScenario::gboard_ccs()
        };
        assert_eq!(state_overhead(&uni), 1.08e10);
        assert_eq!(state_overhead(&uni.with_tau(72.0)), 1.5e8);
        let fuzzy = OverheadScenario {
            state_size_bytes: 30.0,
            ..uni.clone()
        };
        assert!(rel(state_overhead(&fuzzy), 3.24e9) < 1e-15);
        assert_eq!(state_overhead(&OverheadScenario::gboard_ccs()), 2.16e10);
    }

    #[test]
    fn model_overhead_examples() {
        assert_eq!(model_overhead(&OverheadScenario::gboard_ccs()), 4.2e8);
        assert_eq!(model_overhead(&OverheadScenario::tokyo()), 5.2e9);
        let none = OverheadScenario {
            clients_per_round: 0.0,
            ..OverheadScenario::gboard_ccs()
        };
        assert_eq!(model_overhead(&none), 0.0);
        assert_eq!(crossover_tau(&none), Err(OverheadError::NoCrossover));
    }

    #[test]
    fn crossover_examples() {
        let ccs = crossover_tau(&OverheadScenario::gboard_ccs()).unwrap();
        let fuzzy = crossover_tau(&OverheadScenario::gboard_fuzzy()).unwrap();
        assert!((ccs - 51.43).abs() < 0.005);
        assert!((fuzzy - 15.43).abs() < 0.005);
        let big = OverheadScenario {
            model_size_bytes: 2.8e6,
            ..OverheadScenario::gboard_ccs()
        };
        assert!(rel(crossover_tau(&big).unwrap(), ccs / 2.0) < 1e-15);
    }

    #[test]
    fn accumulated_time_examples() {
        let tokyo = OverheadScenario::tokyo();
        let ccs = accumulated_time(&tokyo, Scheme::CcsRandom);
        assert!(rel(ccs.state_latency_s, 4.4496e7) < 1e-12);
        let dcs = accumulated_time(&tokyo, Scheme::Dcs);
        assert!(rel(ccs.state_latency_s, 5.0 * dcs.state_latency_s) < 1e-12);
        let once = accumulated_time(&tokyo.with_tau(72.0), Scheme::CcsRandom);
        assert!(rel(once.state_latency_s, 3.09e6 * 0.2) < 1e-12);
        assert_eq!(ccs.model_exchange_s, dcs.model_exchange_s);
    }

    #[test]
    fn presets_and_grid() {
        for p in OverheadScenario::PRESETS {
            OverheadScenario::preset(p).unwrap().validate().unwrap();
        }
        assert!(OverheadScenario::preset("bogus").is_err());
        assert_eq!(parse_tau_grid("1:5:1").unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(parse_tau_grid("0.5:1.0:0.25").unwrap(), vec![0.5, 0.75, 1.0]);
        for bad in ["0:5:1", "5:1:1", "1:5", "1:5:0", "a:b:c"] {
            assert!(parse_tau_grid(bad).is_err(), "{bad}");
        }
        let rows = overhead_grid(&OverheadScenario::gboard_ccs(), &[1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_overhead_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("tau_s,state_bytes,model_bytes,accumulated_time_ccs,"));
    }

    proptest! {
        #[test]
        fn state_overhead_decreasing_and_linear(tau in 0.1f64..100.0, dt in 0.01f64..10.0, k in 1.0f64..5.0) {
            let sc = OverheadScenario::gboard_ccs();
            prop_assert!(state_overhead(&sc.with_tau(tau + dt)) < state_overhead(&sc.with_tau(tau)));
            let base = state_overhead(&sc.with_tau(tau));
            let scaled_n = OverheadScenario { n_participants: sc.n_participants * k, ..sc.with_tau(tau) };
            let scaled_s = OverheadScenario { state_size_bytes: sc.state_size_bytes * k, ..sc.with_tau(tau) };
            let scaled_t = OverheadScenario { round_length_s: sc.round_length_s * k, ..sc.with_tau(tau) };
            for s in [scaled_n, scaled_s, scaled_t] {
                prop_assert!(rel(state_overhead(&s), k * base) < 1e-12);
            }
        }

        #[test]
        fn crossover_balances(n in 1e3f64..1e7, s in 1.0f64..500.0, m in 1e3f64..1e7, c in 1.0f64..2000.0, bi in any::<bool>()) {
            let sc = OverheadScenario {
                n_participants: n, state_size_bytes: s, model_size_bytes: m, clients_per_round: c,
                bidirectional_state: bi, ..OverheadScenario::gboard_ccs()
            };
            let tau = crossover_tau(&sc).unwrap();
            prop_assert!(rel(state_overhead(&sc.with_tau(tau)), model_overhead(&sc)) < 1e-9);
        }

        #[test]
        fn scheme_ordering(tau in 0.1f64..200.0) {
            let sc = OverheadScenario::tokyo().with_tau(tau);
            let t = |k| accumulated_time(&sc, k).total();
            prop_assert!(t(Scheme::Dcs) < t(Scheme::CcsFuzzy));
            prop_assert!(t(Scheme::CcsFuzzy) < t(Scheme::CcsRandom));
        }
    }
}
