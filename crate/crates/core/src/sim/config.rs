use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Result, SimError};
use crate::fl::{Hyperparams, ModelSpec, DEFAULT_SEPARATION};
use crate::fuzzy::RawObjectives;
use crate::mobility::{PlacementPolicy, RoadConfig};
use crate::net::{default_mcs_tiers, TrainingTimeForm, WORST_THROUGHPUT_MBPS};
use crate::selection::{Scheme, DEFAULT_EXPIRY_ROUNDS, DEFAULT_PER_AREA, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    Synthetic,
    Idx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    Uniform,
    Extreme,
}

/// Every simulator setting as one flat JSON object. Absent keys take the
/// desk-scale defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub rounds: usize,
    pub vehicles: usize,
    pub seed: u64,
    /// Threads used for local training and loss passes.
    pub workers: usize,

    pub road_length_m: f64,
    pub dsrc_range_m: f64,
    pub placement: Placement,
    pub cluster_window_m: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,

    pub bs_count: usize,
    /// Rates in Mbps from worst to best MCS.
    pub mcs_tiers: Vec<f64>,
    pub coverage_overlap: f64,
    pub latency_cloud_s: f64,
    pub latency_dsrc_s: f64,
    pub predictor_window: usize,
    pub predictor_prior_mbps: f64,
    pub deadline_s: f64,
    pub broadcast_time_s: f64,
    pub batch_exec_s: f64,
    /// Epochs charged by the timing model, independent of `epochs`.
    pub timing_epochs: usize,
    pub training_time_form: TrainingTimeForm,
    /// Upload size; parameter count times four when absent.
    pub model_bytes: Option<u64>,
    pub compute_ratio_min: f64,
    pub compute_ratio_max: f64,

    pub model: ModelSpec,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,

    pub dataset_source: DatasetSource,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub synthetic_train_per_class: usize,
    pub synthetic_test_per_class: usize,
    pub synthetic_separation: f64,

    pub classes_per_vehicle: usize,
    pub large_vehicles: usize,
    pub large_samples: usize,
    pub small_samples: usize,

    pub clients_per_round: usize,
    pub threshold: f64,
    pub per_area: usize,
    pub expiry_rounds: u64,
    pub rule_base: Option<PathBuf>,
    /// Normalization maxima for sample quantity, throughput (Mbps), compute
    /// ratio and loss.
    pub maxima: RawObjectives,
    pub historical_means: [f64; 4],
    /// Let each vehicle center its "middle" loss set on its own smoothed
    /// loss history instead of the fixed historical mean.
    pub adaptive_loss_mean: bool,
    /// Weight of the newest observation in that history.
    pub loss_mean_smoothing: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Dcs,
            rounds: 100,
            vehicles: 30,
            seed: 0,
            workers: 1,
            road_length_m: 1000.0,
            dsrc_range_m: 200.0,
            placement: Placement::Uniform,
            cluster_window_m: 200.0,
            speed_min_mps: 10.0,
            speed_max_mps: 30.0,
            bs_count: 2,
            mcs_tiers: default_mcs_tiers(),
            coverage_overlap: 1.2,
            latency_cloud_s: 0.2,
            latency_dsrc_s: 0.04,
            predictor_window: 16,
            predictor_prior_mbps: WORST_THROUGHPUT_MBPS,
            deadline_s: 20.0,
            broadcast_time_s: 0.2,
            batch_exec_s: 0.06,
            timing_epochs: 1,
            training_time_form: TrainingTimeForm::PerBatch,
            model_bytes: None,
            compute_ratio_min: 0.5,
            compute_ratio_max: 1.0,
            model: ModelSpec::desk_mlp(),
            learning_rate: 0.05,
            batch_size: 20,
            epochs: 1,
            dataset_source: DatasetSource::Synthetic,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            synthetic_train_per_class: 7000,
            synthetic_test_per_class: 500,
            synthetic_separation: DEFAULT_SEPARATION,
            classes_per_vehicle: 9,
            large_vehicles: 12,
            large_samples: 4500,
            small_samples: 45,
            clients_per_round: 5,
            threshold: DEFAULT_THRESHOLD,
            per_area: DEFAULT_PER_AREA,
            expiry_rounds: DEFAULT_EXPIRY_ROUNDS,
            rule_base: None,
            maxima: [4500.0, 10.4, 1.0, std::f64::consts::LN_10],
            historical_means: [0.5; 4],
            adaptive_loss_mean: true,
            loss_mean_smoothing: 0.5,
        }
    }
}

fn check(ok: bool, key: &str, reason: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(SimError::Config {
            key: key.into(),
            reason: reason(),
        })
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    check(v > 0.0 && v.is_finite(), key, || format!("must be positive, got {v}"))
}

fn nonnegative(key: &str, v: f64) -> Result<()> {
    check(v >= 0.0 && v.is_finite(), key, || format!("must be nonnegative, got {v}"))
}

fn count(key: &str, v: usize) -> Result<()> {
    check(v > 0, key, || "must be positive".into())
}

impl SimConfig {
    /// Parses a config file; relative dataset and rule-base paths resolve
    /// against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            SimError::Json { source, .. } => SimError::Json {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.train_images,
            &mut cfg.train_labels,
            &mut cfg.test_images,
            &mut cfg.test_labels,
            &mut cfg.rule_base,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| SimError::Json {
            path: PathBuf::from("<inline>"),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn road(&self) -> RoadConfig {
        RoadConfig {
            length: self.road_length_m,
            dsrc_range: self.dsrc_range_m,
        }
    }

    pub fn placement_policy(&self) -> PlacementPolicy {
        match self.placement {
            Placement::Uniform => PlacementPolicy::Uniform,
            Placement::Extreme => PlacementPolicy::Extreme {
                cluster_window: self.cluster_window_m,
            },
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
        }
    }

    /// Checks every key; the error names the first offending one.
    pub fn validate(&self) -> Result<()> {
        count("rounds", self.rounds)?;
        count("vehicles", self.vehicles)?;
        count("workers", self.workers)?;
        positive("road_length_m", self.road_length_m)?;
        check(
            self.dsrc_range_m > 0.0 && self.dsrc_range_m <= self.road_length_m,
            "dsrc_range_m",
            || format!("must lie in (0, road_length_m], got {}", self.dsrc_range_m),
        )?;
        if self.placement == Placement::Extreme {
            self.placement_policy()
                .validate(&self.road())
                .map_err(|reason| SimError::Config {
                    key: "cluster_window_m".into(),
                    reason,
                })?;
        }
        nonnegative("speed_min_mps", self.speed_min_mps)?;
        check(self.speed_max_mps >= self.speed_min_mps && self.speed_max_mps.is_finite(), "speed_max_mps", || {
            format!("must be at least speed_min_mps, got {}", self.speed_max_mps)
        })?;
        count("bs_count", self.bs_count)?;
        check(
            !self.mcs_tiers.is_empty()
                && self.mcs_tiers.iter().all(|&t| t > 0.0 && t.is_finite())
                && self.mcs_tiers.windows(2).all(|w| w[0] <= w[1]),
            "mcs_tiers",
            || "must be a non-empty, non-decreasing list of positive rates".into(),
        )?;
        check(self.coverage_overlap >= 1.0, "coverage_overlap", || {
            format!("must be at least 1, got {}", self.coverage_overlap)
        })?;
        nonnegative("latency_cloud_s", self.latency_cloud_s)?;
        nonnegative("latency_dsrc_s", self.latency_dsrc_s)?;
        count("predictor_window", self.predictor_window)?;
        positive("predictor_prior_mbps", self.predictor_prior_mbps)?;
        positive("deadline_s", self.deadline_s)?;
        nonnegative("broadcast_time_s", self.broadcast_time_s)?;
        positive("batch_exec_s", self.batch_exec_s)?;
        count("timing_epochs", self.timing_epochs)?;
        if let Some(b) = self.model_bytes {
            check(b > 0, "model_bytes", || "must be positive".into())?;
        }
        positive("compute_ratio_min", self.compute_ratio_min)?;
        check(
            self.compute_ratio_max >= self.compute_ratio_min && self.compute_ratio_max.is_finite(),
            "compute_ratio_max",
            || format!("must be at least compute_ratio_min, got {}", self.compute_ratio_max),
        )?;
        self.model.param_count().map_err(|e| SimError::Config {
            key: "model".into(),
            reason: e.to_string(),
        })?;
        self.hyperparams().validate().map_err(|e| SimError::Config {
            key: "learning_rate/batch_size/epochs".into(),
            reason: e.to_string(),
        })?;
        match self.dataset_source {
            DatasetSource::Synthetic => {
                count("synthetic_train_per_class", self.synthetic_train_per_class)?;
                count("synthetic_test_per_class", self.synthetic_test_per_class)?;
                nonnegative("synthetic_separation", self.synthetic_separation)?;
            }
            DatasetSource::Idx => {
                for (key, p) in [
                    ("train_images", &self.train_images),
                    ("train_labels", &self.train_labels),
                    ("test_images", &self.test_images),
                    ("test_labels", &self.test_labels),
                ] {
                    match p {
                        None => {
                            return Err(SimError::Config {
                                key: key.into(),
                                reason: "required when dataset_source is idx".into(),
                            })
                        }
                        Some(p) if !p.is_file() => {
                            return Err(SimError::Config {
                                key: key.into(),
                                reason: format!("file not found: {}", p.display()),
                            })
                        }
                        Some(_) => {}
                    }
                }
            }
        }
        let classes = self.model.classes();
        check(
            self.classes_per_vehicle >= 1 && self.classes_per_vehicle <= classes,
            "classes_per_vehicle",
            || format!("must lie in [1, {classes}], got {}", self.classes_per_vehicle),
        )?;
        check(self.large_vehicles <= self.vehicles, "large_vehicles", || {
            format!("exceeds vehicles ({})", self.vehicles)
        })?;
        check(self.large_samples >= self.classes_per_vehicle, "large_samples", || {
            "must be at least classes_per_vehicle".into()
        })?;
        check(self.small_samples >= self.classes_per_vehicle, "small_samples", || {
            "must be at least classes_per_vehicle".into()
        })?;
        nonnegative("threshold", self.threshold)?;
        count("per_area", self.per_area)?;
        check(self.expiry_rounds >= 1, "expiry_rounds", || "must be at least 1".into())?;
        if let Some(p) = &self.rule_base {
            check(p.is_file(), "rule_base", || format!("file not found: {}", p.display()))?;
        }
        for (v, &m) in self.maxima.iter().enumerate() {
            check(m > 0.0 && m.is_finite(), "maxima", || format!("entry {v} must be positive, got {m}"))?;
        }
        for (v, &h) in self.historical_means.iter().enumerate() {
            check(h > 0.0 && h < 1.0, "historical_means", || {
                format!("entry {v} must lie strictly inside (0, 1), got {h}")
            })?;
        }
        check(
            self.loss_mean_smoothing > 0.0 && self.loss_mean_smoothing <= 1.0,
            "loss_mean_smoothing",
            || format!("must lie in (0, 1], got {}", self.loss_mean_smoothing),
        )?;
        Ok(())
    }
}
