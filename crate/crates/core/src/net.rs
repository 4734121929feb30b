//! Cellular capacity by distance, CWND-style throughput prediction, MAX C/I
//! uplink scheduling and transfer/training durations.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mobility::RoadConfig;

pub const BEST_THROUGHPUT_MBPS: f64 = 10.4;
pub const WORST_THROUGHPUT_MBPS: f64 = 0.24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{bytes} bytes cannot be sent over a zero-capacity link")]
    Unreachable { bytes: u64 },
}

pub type Result<T> = std::result::Result<T, NetError>;

/// Eight throughput tiers, geometric from 0.24 Mbps (index 0) up to
/// 10.4 Mbps (index 7). Higher index means a better MCS.
pub fn default_mcs_tiers() -> Vec<f64> {
    let k = 8;
    let ratio = (BEST_THROUGHPUT_MBPS / WORST_THROUGHPUT_MBPS).powf(1.0 / (k - 1) as f64);
    (0..k)
        .map(|i| match i {
            0 => WORST_THROUGHPUT_MBPS,
            7 => BEST_THROUGHPUT_MBPS,
            _ => WORST_THROUGHPUT_MBPS * ratio.powi(i as i32),
        })
        .collect()
}

/// Base stations spread evenly along the road, each with a tiered MCS table
/// over its coverage radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellularModel {
    bs_positions: Vec<f64>,
    coverage_radius: f64,
    tiers: Vec<f64>,
    road: RoadConfig,
}

impl CellularModel {
    pub fn new(road: RoadConfig, bs_count: usize, tiers: Vec<f64>, overlap: f64) -> Result<Self> {
        if bs_count == 0 {
            return Err(NetError::InvalidArgument("bs_count must be positive".into()));
        }
        if tiers.is_empty() || tiers.iter().any(|&t| !(t > 0.0)) {
            return Err(NetError::InvalidArgument(
                "mcs_tiers must be a non-empty list of positive rates".into(),
            ));
        }
        if tiers.windows(2).any(|w| w[1] < w[0]) {
            return Err(NetError::InvalidArgument(
                "mcs_tiers must be non-decreasing from worst to best".into(),
            ));
        }
        if !(overlap >= 1.0) {
            return Err(NetError::InvalidArgument(format!(
                "overlap factor must be at least 1, got {overlap}"
            )));
        }
        let spacing = road.length / bs_count as f64;
        Ok(Self {
            bs_positions: (0..bs_count).map(|k| (k as f64 + 0.5) * spacing).collect(),
            coverage_radius: spacing / 2.0 * overlap,
            tiers,
            road,
        })
    }

    pub fn with_defaults(road: RoadConfig) -> Self {
        Self::new(road, 2, default_mcs_tiers(), 1.2).expect("valid defaults")
    }

    pub fn bs_positions(&self) -> &[f64] {
        &self.bs_positions
    }

    pub fn coverage_radius(&self) -> f64 {
        self.coverage_radius
    }

    pub fn tiers(&self) -> &[f64] {
        &self.tiers
    }

    /// Nearest base station and the ring distance to it.
    pub fn serving_bs(&self, position: f64) -> (usize, f64) {
        self.bs_positions
            .iter()
            .map(|&b| self.road.ring_distance(position, b))
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, d)| if d < best.1 { (i, d) } else { best })
    }

    /// Tier widths are uniform across the coverage radius; anything beyond it
    /// gets the worst tier.
    pub fn mcs_index(&self, distance: f64) -> usize {
        let k = self.tiers.len();
        let width = self.coverage_radius / k as f64;
        let steps = (distance.max(0.0) / width).floor() as usize;
        k - 1 - steps.min(k - 1)
    }

    pub fn tier_rate(&self, mcs: usize) -> f64 {
        self.tiers[mcs]
    }

    /// Achievable rate in Mbps with `fraction` of the uplink resource blocks.
    pub fn capacity(&self, distance: f64, fraction: f64) -> f64 {
        self.tiers[self.mcs_index(distance)] * fraction.clamp(0.0, 1.0)
    }
}

/// Sliding mean over recently achieved throughputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputPredictor {
    window: VecDeque<f64>,
    capacity: usize,
    prior: f64,
}

impl ThroughputPredictor {
    pub fn new(capacity: usize, prior: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(NetError::InvalidArgument("predictor window must hold at least one sample".into()));
        }
        Ok(Self {
            window: VecDeque::with_capacity(capacity),
            capacity,
            prior,
        })
    }

    pub fn observe(&mut self, mbps: f64) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(mbps.max(0.0));
    }

    pub fn predict(&self) -> f64 {
        if self.window.is_empty() {
            return self.prior;
        }
        self.window.iter().sum::<f64>() / self.window.len() as f64
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }
}

impl Default for ThroughputPredictor {
    fn default() -> Self {
        Self::new(16, WORST_THROUGHPUT_MBPS).expect("valid defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferJob {
    pub bytes: u64,
    pub capacity_mbps: f64,
    pub one_way_latency: f64,
}

/// Serialization time plus one latency; an empty payload still pays the
/// latency.
pub fn transfer_time(job: &TransferJob) -> Result<f64> {
    if job.bytes == 0 {
        return Ok(job.one_way_latency);
    }
    if !(job.capacity_mbps > 0.0) {
        return Err(NetError::Unreachable { bytes: job.bytes });
    }
    Ok(job.bytes as f64 * 8.0 / (job.capacity_mbps * 1e6) + job.one_way_latency)
}

/// How the per-client training duration is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingTimeForm {
    /// `E * ceil(|D| / B) * B_exe / C`: seconds per batch, faster with larger C.
    #[default]
    PerBatch,
    /// `E * C * |D| / (B * B_exe)`, kept for auditing.
    AsTypeset,
}

pub fn training_time(
    epochs: usize,
    compute_ratio: f64,
    samples: usize,
    batch_size: usize,
    batch_exec: f64,
    form: TrainingTimeForm,
) -> Result<f64> {
    if epochs == 0 || samples == 0 || batch_size == 0 || !(compute_ratio > 0.0) || !(batch_exec > 0.0)
    {
        return Err(NetError::InvalidArgument(
            "training time inputs must all be positive".into(),
        ));
    }
    Ok(match form {
        TrainingTimeForm::PerBatch => {
            epochs as f64 * samples.div_ceil(batch_size) as f64 * batch_exec / compute_ratio
        }
        TrainingTimeForm::AsTypeset => {
            epochs as f64 * compute_ratio * samples as f64 / (batch_size as f64 * batch_exec)
        }
    })
}

/// Service order under MAX C/I when every contender is ready at once:
/// highest MCS first, lowest id among equals.
pub fn schedule_max_ci(contenders: &[(u32, usize)]) -> Vec<u32> {
    let mut order = contenders.to_vec();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(id, _)| id).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UplinkRequest {
    pub id: u32,
    pub bs: usize,
    pub ready_at: f64,
    pub bytes: u64,
    pub mcs: usize,
    pub capacity_mbps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UplinkResult {
    pub id: u32,
    /// Arrival time at the server: last byte sent plus one latency.
    pub finish_at: f64,
    /// Goodput seen by the sender, queueing included.
    pub achieved_mbps: f64,
}

/// Interval during which one request held every uplink resource block of
/// its base station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceSegment {
    pub bs: usize,
    pub id: u32,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UplinkSchedule {
    pub results: Vec<UplinkResult>,
    pub segments: Vec<ServiceSegment>,
}

/// Preemptive MAX C/I over each base station independently: at every instant
/// the ready request with the highest MCS (lowest id on ties) gets the whole
/// uplink. Results come back in request order.
pub fn simulate_uplinks(requests: &[UplinkRequest], latency: f64) -> Result<UplinkSchedule> {
    if let Some(r) = requests.iter().find(|r| r.bytes > 0 && !(r.capacity_mbps > 0.0)) {
        return Err(NetError::Unreachable { bytes: r.bytes });
    }
    let mut results: Vec<Option<UplinkResult>> = vec![None; requests.len()];
    let mut segments = Vec::new();
    let mut stations: Vec<usize> = requests.iter().map(|r| r.bs).collect();
    stations.sort_unstable();
    stations.dedup();
    for bs in stations {
        let members: Vec<usize> = (0..requests.len()).filter(|&i| requests[i].bs == bs).collect();
        let mut remaining: Vec<f64> = members.iter().map(|&i| requests[i].bytes as f64 * 8.0).collect();
        for (slot, &i) in members.iter().enumerate() {
            if requests[i].bytes == 0 {
                results[i] = Some(UplinkResult {
                    id: requests[i].id,
                    finish_at: requests[i].ready_at + latency,
                    achieved_mbps: requests[i].capacity_mbps,
                });
                remaining[slot] = 0.0;
            }
        }
        let mut t = f64::NEG_INFINITY;
        loop {
            let active = |slot: usize, t: f64| remaining[slot] > 0.0 && requests[members[slot]].ready_at <= t;
            let serving = (0..members.len()).filter(|&s| active(s, t)).max_by(|&a, &b| {
                let (ra, rb) = (&requests[members[a]], &requests[members[b]]);
                ra.mcs.cmp(&rb.mcs).then(rb.id.cmp(&ra.id))
            });
            let next_arrival = members
                .iter()
                .enumerate()
                .filter(|&(s, &i)| remaining[s] > 0.0 && requests[i].ready_at > t)
                .map(|(_, &i)| requests[i].ready_at)
                .fold(f64::INFINITY, f64::min);
            let Some(slot) = serving else {
                if next_arrival.is_finite() {
                    t = next_arrival;
                    continue;
                }
                break;
            };
            let req = &requests[members[slot]];
            let rate = req.capacity_mbps * 1e6;
            let done_at = t + remaining[slot] / rate;
            let end = done_at.min(next_arrival);
            segments.push(ServiceSegment {
                bs,
                id: req.id,
                start: t,
                end,
            });
            if done_at <= next_arrival {
                remaining[slot] = 0.0;
                results[members[slot]] = Some(UplinkResult {
                    id: req.id,
                    finish_at: done_at + latency,
                    achieved_mbps: req.bytes as f64 * 8.0 / ((done_at - req.ready_at) * 1e6),
                });
            } else {
                remaining[slot] -= (end - t) * rate;
            }
            t = end;
        }
    }
    Ok(UplinkSchedule {
        results: results.into_iter().map(|r| r.expect("every request completes")).collect(),
        segments,
    })
}
