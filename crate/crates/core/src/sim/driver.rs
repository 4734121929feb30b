use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::audit::{AuditLog, Channel, Endpoint, MessageKind};
use super::config::{DatasetSource, SimConfig};
use super::report::{RoundLog, RunSummary};
use super::{Result, SimError};
use crate::fl::{
    accuracy, fedavg, global_loss, local_train, loss_pass, partition_noniid, read_idx_images,
    read_idx_labels, Dataset, Network, ParamVector, QuantityProfile, SyntheticSource,
};
use crate::fuzzy::{default_rule_base, evaluate, normalize, FuzzyEvaluator, MembershipFamily, RuleBase};
use crate::mobility::{init_placement, init_speeds, neighbor_sets, step, VehicleKinematics};
use crate::net::{simulate_uplinks, training_time, CellularModel, ThroughputPredictor, UplinkRequest};
use crate::numeric::{stream_rng, stream_seed};
use crate::selection::{
    broadcast_evaluations, dcs_round, select_ccs_fuzzy, select_ccs_random, EvalTable, Scheme,
};

/// Keeps the adaptive loss center clear of the universe edges.
const LOSS_CENTER_MIN: f64 = 0.02;

const STREAM_DATA: u64 = 0x6461_7461;
const STREAM_PARTITION: u64 = 0x7061_7274;
const STREAM_COMPUTE: u64 = 0x636f_6d70;
const STREAM_PLACEMENT: u64 = 0x706f_7369;
const STREAM_INIT: u64 = 0x696e_6974;
const STREAM_SELECT: u64 = 0x7365_6c65;
const STREAM_TRAIN: u64 = 0x7472_6169;

/// Train and test splits shared by every vehicle.
#[derive(Debug, Clone)]
pub struct SimData {
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub logs: Vec<RoundLog>,
    pub summary: RunSummary,
    pub audit: AuditLog,
    pub final_params: ParamVector,
}

/// Loads IDX files or draws the synthetic clusters for `cfg.seed`.
pub fn load_data(cfg: &SimConfig) -> Result<SimData> {
    let classes = cfg.model.classes();
    match cfg.dataset_source {
        DatasetSource::Synthetic => {
            let source = SyntheticSource::new(
                classes,
                cfg.model.input_dim(),
                cfg.synthetic_separation,
                stream_seed(cfg.seed, &[STREAM_DATA]),
            )?;
            Ok(SimData {
                train: source.sample(cfg.synthetic_train_per_class, stream_seed(cfg.seed, &[STREAM_DATA, 1])),
                test: source.sample(cfg.synthetic_test_per_class, stream_seed(cfg.seed, &[STREAM_DATA, 2])),
            })
        }
        DatasetSource::Idx => {
            let load = |images: &Option<std::path::PathBuf>, labels: &Option<std::path::PathBuf>, key: &str| {
                let (Some(images), Some(labels)) = (images, labels) else {
                    return Err(SimError::Config {
                        key: key.into(),
                        reason: "required when dataset_source is idx".into(),
                    });
                };
                let lab = read_idx_labels(labels)?;
                Ok(read_idx_images(images)?.into_dataset(lab, classes, labels)?)
            };
            Ok(SimData {
                train: load(&cfg.train_images, &cfg.train_labels, "train_images")?,
                test: load(&cfg.test_images, &cfg.test_labels, "test_images")?,
            })
        }
    }
}

pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    run_with_data(cfg, &data)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Vehicle {
    kin: VehicleKinematics,
    compute_ratio: f64,
    predictor: ThroughputPredictor,
    table: EvalTable,
    /// Smoothed history of this vehicle's normalized loss.
    loss_center: Option<f64>,
}

fn evaluator(cfg: &SimConfig) -> Result<FuzzyEvaluator> {
    let rules = match &cfg.rule_base {
        None => default_rule_base(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
                path: path.clone(),
                source,
            })?;
            text.parse::<RuleBase>()?
        }
    };
    let mut families = [MembershipFamily::default(); 4];
    for (f, &h) in families.iter_mut().zip(&cfg.historical_means) {
        *f = MembershipFamily::new(h)?;
    }
    Ok(FuzzyEvaluator::new(families, rules))
}

/// Runs every round on pre-loaded data. The outcome depends only on the
/// config and the data, not on `cfg.workers`.
pub fn run_with_data(cfg: &SimConfig, data: &SimData) -> Result<RunOutput> {
    cfg.validate()?;
    let net = Network::new(&cfg.model)?;
    for (name, d) in [("train", &data.train), ("test", &data.test)] {
        if d.dim() != net.input_dim() || d.classes() != net.classes() || d.is_empty() {
            return Err(SimError::Config {
                key: "model".into(),
                reason: format!(
                    "{name} split has {} samples of dim {} with {} classes, model expects dim {} and {} classes",
                    d.len(),
                    d.dim(),
                    d.classes(),
                    net.input_dim(),
                    net.classes()
                ),
            });
        }
    }
    let n = cfg.vehicles;
    let seed = cfg.seed;
    let profile = QuantityProfile::tiered(n, cfg.large_vehicles, cfg.large_samples, cfg.small_samples);
    let manifest = partition_noniid(
        data.train.labels(),
        net.classes(),
        cfg.classes_per_vehicle,
        &profile,
        stream_seed(seed, &[STREAM_PARTITION]),
    )?;
    let locals: Vec<Dataset> = manifest
        .vehicles
        .iter()
        .map(|idx| data.train.subset(idx))
        .collect::<std::result::Result<_, _>>()?;

    let eval = evaluator(cfg)?;
    let road = cfg.road();
    let cellular = CellularModel::new(road, cfg.bs_count, cfg.mcs_tiers.clone(), cfg.coverage_overlap)?;
    let mut rng = stream_rng(seed, &[STREAM_COMPUTE]);
    let compute: Vec<f64> = (0..n)
        .map(|_| {
            if cfg.compute_ratio_max > cfg.compute_ratio_min {
                rng.gen_range(cfg.compute_ratio_min..=cfg.compute_ratio_max)
            } else {
                cfg.compute_ratio_min
            }
        })
        .collect();

    // extreme placement packs the vehicles that look best before training
    let prior_scores = (0..n)
        .map(|i| {
            let raw = [
                locals[i].len() as f64,
                cfg.predictor_prior_mbps,
                compute[i],
                (net.classes() as f64).ln(),
            ];
            Ok(eval.evaluate(raw, cfg.maxima)?.score)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut ranking: Vec<usize> = (0..n).collect();
    ranking.sort_by(|&a, &b| prior_scores[b].total_cmp(&prior_scores[a]).then(a.cmp(&b)));
    let policy = cfg.placement_policy();
    let positions = init_placement(&policy, &road, &ranking, stream_seed(seed, &[STREAM_PLACEMENT]));
    let speeds = init_speeds(
        &policy,
        n,
        cfg.speed_min_mps,
        cfg.speed_max_mps,
        stream_seed(seed, &[STREAM_PLACEMENT, 1]),
    );
    let mut vehicles: Vec<Vehicle> = (0..n)
        .map(|i| {
            Ok(Vehicle {
                kin: VehicleKinematics {
                    position: positions[i],
                    speed: speeds[i],
                },
                compute_ratio: compute[i],
                predictor: ThroughputPredictor::new(cfg.predictor_window, cfg.predictor_prior_mbps)?,
                table: EvalTable::new(i),
                loss_center: None,
            })
        })
        .collect::<Result<_>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| SimError::Config {
            key: "workers".into(),
            reason: e.to_string(),
        })?;
    let hyper = cfg.hyperparams();
    let model_bytes = cfg.model_bytes.unwrap_or(net.param_count() as u64 * 4);
    let everyone: Vec<usize> = (0..n).collect();
    let mut params = net.init_params(stream_seed(seed, &[STREAM_INIT]));
    let mut last_loss = None;
    let mut audit = AuditLog::default();
    let mut logs = Vec::with_capacity(cfg.rounds);

    for round in 1..=cfg.rounds {
        if round > 1 {
            for v in &mut vehicles {
                v.kin = step(v.kin, cfg.deadline_s, &road);
            }
        }
        let serving: Vec<(usize, f64)> = vehicles.iter().map(|v| cellular.serving_bs(v.kin.position)).collect();

        // global model goes to everyone; the download doubles as a rate probe
        for (i, v) in vehicles.iter_mut().enumerate() {
            v.predictor.observe(cellular.capacity(serving[i].1, 1.0));
            audit.record(round, Endpoint::Server, Endpoint::Vehicle(i), Channel::Cellular, MessageKind::GlobalModel);
        }

        let scores = if cfg.scheme == Scheme::CcsRandom {
            None
        } else {
            let losses: Vec<f64> = pool.install(|| {
                locals
                    .par_iter()
                    .map(|d| loss_pass(&net, &params, d))
                    .collect::<std::result::Result<_, _>>()
            })?;
            let s = (0..n)
                .map(|i| {
                    let raw = [
                        locals[i].len() as f64,
                        vehicles[i].predictor.predict(),
                        vehicles[i].compute_ratio,
                        losses[i],
                    ];
                    let mut families = eval.families;
                    if let Some(center) = vehicles[i].loss_center {
                        let c = center.clamp(LOSS_CENTER_MIN, 1.0 - LOSS_CENTER_MIN);
                        families[3] = MembershipFamily::with_params([0.0, c, 1.0], eval.families[3].sigma())?;
                    }
                    Ok(evaluate(raw, cfg.maxima, &families, &eval.rules, &eval.universe)?.score)
                })
                .collect::<Result<Vec<f64>>>()?;
            if cfg.adaptive_loss_mean {
                for (v, &l) in vehicles.iter_mut().zip(&losses) {
                    let x = normalize(l, cfg.maxima[3])?;
                    let a = cfg.loss_mean_smoothing;
                    v.loss_center = Some(v.loss_center.map_or(x, |c| a * x + (1.0 - a) * c));
                }
            }
            Some(s)
        };

        let (outcome, selection_delay) = match cfg.scheme {
            Scheme::CcsRandom => {
                for i in 0..n {
                    audit.record(round, Endpoint::Vehicle(i), Endpoint::Server, Channel::Cellular, MessageKind::State);
                }
                let seed = stream_seed(seed, &[STREAM_SELECT, round as u64]);
                (select_ccs_random(&everyone, cfg.clients_per_round, seed), 0.0)
            }
            Scheme::CcsFuzzy => {
                let scores = scores.as_ref().expect("scored");
                for i in 0..n {
                    audit.record(round, Endpoint::Vehicle(i), Endpoint::Server, Channel::Cellular, MessageKind::Evaluation);
                }
                let map: BTreeMap<usize, f64> = scores.iter().copied().enumerate().collect();
                (select_ccs_fuzzy(&map, cfg.clients_per_round), 0.0)
            }
            Scheme::Dcs => {
                let scores = scores.as_ref().expect("scored");
                let positions: Vec<f64> = vehicles.iter().map(|v| v.kin.position).collect();
                let nb = neighbor_sets(&positions, cfg.dsrc_range_m, &road);
                for (i, ns) in nb.iter().enumerate() {
                    if scores[i] >= cfg.threshold {
                        for &j in ns {
                            audit.record(round, Endpoint::Vehicle(i), Endpoint::Vehicle(j), Channel::Dsrc, MessageKind::Evaluation);
                        }
                    }
                }
                let mut tables: Vec<EvalTable> = vehicles.iter().map(|v| v.table.clone()).collect();
                broadcast_evaluations(&mut tables, scores, &nb, round as u64, cfg.threshold, cfg.expiry_rounds);
                let outcome = dcs_round(&tables, cfg.threshold, cfg.per_area);
                for (v, t) in vehicles.iter_mut().zip(tables) {
                    v.table = t;
                }
                (outcome, cfg.latency_dsrc_s)
            }
        };
        let selected = outcome.clients;

        let requests = selected
            .iter()
            .map(|&c| {
                let train_s = training_time(
                    cfg.timing_epochs,
                    vehicles[c].compute_ratio,
                    locals[c].len(),
                    cfg.batch_size,
                    cfg.batch_exec_s,
                    cfg.training_time_form,
                )?;
                let (bs, distance) = serving[c];
                let mcs = cellular.mcs_index(distance);
                Ok(UplinkRequest {
                    id: c as u32,
                    bs,
                    ready_at: cfg.broadcast_time_s + selection_delay + train_s,
                    bytes: model_bytes,
                    mcs,
                    capacity_mbps: cellular.tier_rate(mcs),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let schedule = simulate_uplinks(&requests, cfg.latency_cloud_s)?;
        let mut uploaded = Vec::new();
        let mut dropped = Vec::new();
        let mut last_arrival = cfg.broadcast_time_s + selection_delay;
        for r in &schedule.results {
            let c = r.id as usize;
            vehicles[c].predictor.observe(r.achieved_mbps);
            if r.finish_at <= cfg.deadline_s {
                uploaded.push(c);
                last_arrival = last_arrival.max(r.finish_at);
            } else {
                dropped.push(c);
            }
        }

        // stragglers would be discarded anyway, so only on-time clients train
        let trained: Vec<_> = pool.install(|| {
            uploaded
                .par_iter()
                .map(|&c| {
                    let s = stream_seed(seed, &[STREAM_TRAIN, round as u64, c as u64]);
                    local_train(&net, &params, &locals[c], &hyper, s)
                })
                .collect::<std::result::Result<Vec<_>, _>>()
        })?;
        for &c in &uploaded {
            audit.record(round, Endpoint::Vehicle(c), Endpoint::Server, Channel::Cellular, MessageKind::LocalModel);
        }
        if !trained.is_empty() {
            let contributions: Vec<(ParamVector, u64)> =
                trained.iter().map(|(w, r)| (w.clone(), r.samples as u64)).collect();
            params = fedavg(&contributions)?;
            let losses: Vec<(f64, u64)> = trained.iter().map(|(_, r)| (r.post_loss, r.samples as u64)).collect();
            last_loss = Some(global_loss(&losses)?);
        }
        let acc = accuracy(&net, &params, &data.test)?;
        logs.push(RoundLog {
            round,
            accuracy: acc,
            global_loss: last_loss,
            bytes_up: uploaded.len() as u64 * model_bytes,
            time_s: if dropped.is_empty() { last_arrival } else { cfg.deadline_s },
            selected,
            uploaded,
            dropped,
        });
    }
    let summary = RunSummary::from_logs(cfg.scheme, &logs);
    Ok(RunOutput {
        logs,
        summary,
        audit,
        final_params: params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fl::ModelSpec;

    fn small(scheme: Scheme) -> SimConfig {
        SimConfig {
            scheme,
            rounds: 4,
            vehicles: 8,
            large_vehicles: 3,
            large_samples: 60,
            small_samples: 12,
            classes_per_vehicle: 2,
            model: ModelSpec::Mlp {
                input: 16,
                hidden: vec![8],
                classes: 4,
            },
            synthetic_train_per_class: 80,
            synthetic_test_per_class: 20,
            clients_per_round: 3,
            ..SimConfig::default()
        }
    }

    #[test]
    fn every_scheme_runs_and_keeps_invariants() {
        for scheme in Scheme::ALL {
            let out = run(&small(scheme)).unwrap();
            assert_eq!(out.logs.len(), 4);
            for l in &out.logs {
                assert!((0.0..=1.0).contains(&l.accuracy));
                assert!(l.uploaded.iter().all(|u| l.selected.contains(u)));
                let mut both: Vec<usize> = l.uploaded.iter().chain(&l.dropped).copied().collect();
                both.sort_unstable();
                assert_eq!(both, l.selected);
                assert!(l.time_s <= 20.0);
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut a = small(Scheme::CcsFuzzy);
        a.workers = 1;
        let mut b = a.clone();
        b.workers = 3;
        let (ra, rb) = (run(&a).unwrap(), run(&b).unwrap());
        assert_eq!(ra.logs, rb.logs);
        assert_eq!(ra.final_params, rb.final_params);
    }

    #[test]
    fn dcs_server_sees_only_models() {
        let out = run(&small(Scheme::Dcs)).unwrap();
        let inbound = out.audit.server_inbound_kinds();
        assert!(inbound.iter().all(|&k| k == MessageKind::LocalModel), "{inbound:?}");
        let fuzzy = run(&small(Scheme::CcsFuzzy)).unwrap();
        assert!(fuzzy.audit.server_inbound_kinds().contains(&MessageKind::Evaluation));
    }

    #[test]
    fn no_uploads_carry_the_model_forward() {
        let mut c = small(Scheme::Dcs);
        c.threshold = 100.0;
        let data = load_data(&c).unwrap();
        let out = run_with_data(&c, &data).unwrap();
        assert!(out.logs.iter().all(|l| l.selected.is_empty() && l.global_loss.is_none()));
        let net = Network::new(&c.model).unwrap();
        assert_eq!(out.final_params, net.init_params(stream_seed(c.seed, &[STREAM_INIT])));
    }

    #[test]
    fn slow_links_become_stragglers() {
        let mut c = small(Scheme::CcsRandom);
        c.clients_per_round = 8;
        c.mcs_tiers = vec![0.24];
        c.model_bytes = Some(5_200_000);
        let out = run(&c).unwrap();
        for l in &out.logs {
            assert!(l.uploaded.is_empty());
            assert_eq!(l.dropped, l.selected);
            assert_eq!(l.bytes_up, 0);
        }
    }
}
