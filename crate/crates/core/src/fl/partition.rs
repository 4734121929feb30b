use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FlError, Result};
use crate::numeric::stream_rng;

/// Target sample count per vehicle, before rounding down to a multiple of
/// the per-vehicle class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantityProfile {
    pub targets: Vec<usize>,
}

impl QuantityProfile {
    /// The first `large_vehicles` ids get `large` samples, the rest `small`.
    pub fn tiered(vehicles: usize, large_vehicles: usize, large: usize, small: usize) -> Self {
        Self {
            targets: (0..vehicles)
                .map(|v| if v < large_vehicles { large } else { small })
                .collect(),
        }
    }

    /// 30 vehicles: ids 0-11 hold about 4500 samples, ids 12-29 about 45.
    pub fn table3() -> Self {
        Self::tiered(30, 12, 4500, 45)
    }

    pub fn uniform(vehicles: usize, per_vehicle: usize) -> Self {
        Self {
            targets: vec![per_vehicle; vehicles],
        }
    }

    pub fn vehicles(&self) -> usize {
        self.targets.len()
    }
}

/// Per-vehicle sample indices into the source dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub vehicles: Vec<Vec<usize>>,
}

impl PartitionManifest {
    /// Writes `vehicle_id,sample_index` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |source| FlError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["vehicle_id", "sample_index"]).map_err(csv_err)?;
        for (v, idx) in self.vehicles.iter().enumerate() {
            for i in idx {
                w.write_record([v.to_string(), i.to_string()]).map_err(csv_err)?;
            }
        }
        w.flush().map_err(|source| FlError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let csv_err = |source| FlError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut vehicles: Vec<Vec<usize>> = Vec::new();
        for row in r.deserialize::<(usize, usize)>() {
            let (v, i) = row.map_err(csv_err)?;
            if vehicles.len() <= v {
                vehicles.resize(v + 1, Vec::new());
            }
            vehicles[v].push(i);
        }
        Ok(Self { vehicles })
    }

    pub fn is_disjoint(&self) -> bool {
        let mut all: Vec<usize> = self.vehicles.iter().flatten().copied().collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == n
    }
}

/// Label-skew partition: every vehicle draws equal per-class counts from
/// `classes_per_vehicle` distinct classes, without any sample being shared.
///
/// Vehicles are filled largest target first. Each picks the classes with the
/// most samples left (random tie-break), which keeps heavily demanded classes
/// from running dry.
pub fn partition_noniid(
    labels: &[u8],
    classes: usize,
    classes_per_vehicle: usize,
    profile: &QuantityProfile,
    seed: u64,
) -> Result<PartitionManifest> {
    if classes_per_vehicle == 0 || classes_per_vehicle > classes {
        return Err(FlError::InvalidArgument(format!(
            "classes per vehicle must lie in [1, {classes}], got {classes_per_vehicle}"
        )));
    }
    let mut rng = stream_rng(seed, &[0x7061_7274]);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        let pool = pools.get_mut(l as usize).ok_or_else(|| {
            FlError::InvalidArgument(format!("label {l} at index {i} exceeds {classes} classes"))
        })?;
        pool.push(i);
    }
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }

    let mut order: Vec<usize> = (0..profile.vehicles()).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(profile.targets[v]));

    let mut vehicles = vec![Vec::new(); profile.vehicles()];
    for v in order {
        let per_class = profile.targets[v] / classes_per_vehicle;
        if per_class == 0 {
            return Err(FlError::InvalidArgument(format!(
                "vehicle {v} targets {} samples, fewer than {classes_per_vehicle} classes",
                profile.targets[v]
            )));
        }
        let mut ranked: Vec<(usize, u64, usize)> = pools
            .iter()
            .enumerate()
            .map(|(c, p)| (p.len(), rng.gen::<u64>(), c))
            .collect();
        ranked.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = ranked[..classes_per_vehicle].iter().map(|r| r.2).collect();
        chosen.sort_unstable();
        for c in chosen {
            let pool = &mut pools[c];
            if pool.len() < per_class {
                return Err(FlError::Capacity {
                    class: c,
                    vehicle: v,
                    needed: per_class,
                    available: pool.len(),
                });
            }
            vehicles[v].extend(pool.drain(pool.len() - per_class..));
        }
        vehicles[v].sort_unstable();
    }
    Ok(PartitionManifest { vehicles })
}
