//! Vehicles on a ring road of fixed length, moving at constant speed, and
//! DSRC neighbourhoods by ring distance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadConfig {
    pub length: f64,
    pub dsrc_range: f64,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self {
            length: 1000.0,
            dsrc_range: 200.0,
        }
    }
}

impl RoadConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.length > 0.0) {
            return Err(format!("road length must be positive, got {}", self.length));
        }
        if !(self.dsrc_range > 0.0 && self.dsrc_range <= self.length) {
            return Err(format!(
                "DSRC range must lie in (0, {}], got {}",
                self.length, self.dsrc_range
            ));
        }
        Ok(())
    }

    /// Shortest distance between two positions around the ring.
    pub fn ring_distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs() % self.length;
        d.min(self.length - d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleKinematics {
    pub position: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlacementPolicy {
    Uniform,
    /// Best-ranked half packed into one window, the rest into a window on
    /// the far side of the ring.
    Extreme { cluster_window: f64 },
}

impl PlacementPolicy {
    pub fn validate(&self, road: &RoadConfig) -> Result<(), String> {
        match *self {
            PlacementPolicy::Uniform => Ok(()),
            PlacementPolicy::Extreme { cluster_window } => {
                if cluster_window > 0.0 && cluster_window <= road.length / 2.0 {
                    Ok(())
                } else {
                    Err(format!(
                        "cluster window must lie in (0, {}], got {cluster_window}",
                        road.length / 2.0
                    ))
                }
            }
        }
    }
}

/// Initial positions indexed by vehicle id.
///
/// `ranking` lists vehicle ids best first and fixes `n`; it only matters for
/// extreme placement.
pub fn init_placement(
    policy: &PlacementPolicy,
    road: &RoadConfig,
    ranking: &[usize],
    seed: u64,
) -> Vec<f64> {
    let mut rng = stream_rng(seed, &[0x706c_6163]);
    let n = ranking.len();
    let mut positions = vec![0.0; n];
    match *policy {
        PlacementPolicy::Uniform => {
            for p in &mut positions {
                *p = rng.gen_range(0.0..road.length);
            }
        }
        PlacementPolicy::Extreme { cluster_window } => {
            let top = n.div_ceil(2);
            let far = road.length / 2.0;
            for (rank, &id) in ranking.iter().enumerate() {
                let base = if rank < top { 0.0 } else { far };
                positions[id] = base + rng.gen_range(0.0..cluster_window);
            }
        }
    }
    positions
}

/// Per-vehicle speeds. Under extreme placement every vehicle shares one
/// speed so the clusters keep their shape as they travel.
pub fn init_speeds(policy: &PlacementPolicy, n: usize, min: f64, max: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, &[0x7370_6564]);
    let mut draw = || if max > min { rng.gen_range(min..max) } else { min };
    match policy {
        PlacementPolicy::Uniform => (0..n).map(|_| draw()).collect(),
        PlacementPolicy::Extreme { .. } => vec![draw(); n],
    }
}

/// Free-way motion: constant speed, wrapping at the road end.
pub fn step(k: VehicleKinematics, dt: f64, road: &RoadConfig) -> VehicleKinematics {
    VehicleKinematics {
        position: (k.position + k.speed * dt).rem_euclid(road.length),
        speed: k.speed,
    }
}

/// Every vehicle other than `i` within `range` around the ring.
pub fn neighbors(positions: &[f64], i: usize, range: f64, road: &RoadConfig) -> Vec<usize> {
    positions
        .iter()
        .enumerate()
        .filter(|&(j, &p)| j != i && road.ring_distance(positions[i], p) <= range)
        .map(|(j, _)| j)
        .collect()
}

pub fn neighbor_sets(positions: &[f64], range: f64, road: &RoadConfig) -> Vec<Vec<usize>> {
    (0..positions.len())
        .map(|i| neighbors(positions, i, range, road))
        .collect()
}
