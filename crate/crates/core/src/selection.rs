//! Client selection: centralized random, centralized ranking of fuzzy
//! scores, and distributed neighbour-local top-m election.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::numeric::stream_rng;

pub const DEFAULT_THRESHOLD: f64 = 37.5;
pub const DEFAULT_PER_AREA: usize = 2;
pub const DEFAULT_EXPIRY_ROUNDS: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    CcsRandom,
    CcsFuzzy,
    Dcs,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::CcsRandom, Scheme::CcsFuzzy, Scheme::Dcs];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::CcsRandom => "ccs-random",
            Scheme::CcsFuzzy => "ccs-fuzzy",
            Scheme::Dcs => "dcs",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected ccs-random, ccs-fuzzy or dcs)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub score: f64,
    pub round: u64,
}

/// Scores a vehicle has heard from its neighbours, plus its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    owner: usize,
    entries: BTreeMap<usize, EvalEntry>,
}

impl EvalTable {
    pub fn new(owner: usize) -> Self {
        Self {
            owner,
            entries: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    /// Keeps the newer of the existing and incoming entry.
    pub fn insert(&mut self, id: usize, score: f64, round: u64) {
        match self.entries.get(&id) {
            Some(e) if e.round > round => {}
            _ => {
                self.entries.insert(id, EvalEntry { score, round });
            }
        }
    }

    pub fn get(&self, id: usize) -> Option<EvalEntry> {
        self.entries.get(&id).copied()
    }

    pub fn own(&self) -> Option<EvalEntry> {
        self.get(self.owner)
    }

    /// Drops entries that are `expiry` or more rounds old at `round`, so with
    /// an expiry of one only the current round's entries survive.
    pub fn expire(&mut self, round: u64, expiry: u64) {
        self.entries.retain(|_, e| round.saturating_sub(e.round) < expiry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, EvalEntry)> + '_ {
        self.entries.iter().map(|(&id, &e)| (id, e))
    }

    /// The `m` best ids by score, lowest id first among equals.
    pub fn top_m(&self, m: usize) -> Vec<usize> {
        rank(self.entries.iter().map(|(&id, e)| (id, e.score)), m)
    }
}

fn rank(scores: impl Iterator<Item = (usize, f64)>, n: usize) -> Vec<usize> {
    let mut all: Vec<(usize, f64)> = scores.collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.into_iter().take(n).map(|(id, _)| id).collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionOutcome {
    /// Selected ids, ascending.
    pub clients: Vec<usize>,
    /// Scores the decision was based on; empty for random selection.
    pub scores: BTreeMap<usize, f64>,
}

impl SelectionOutcome {
    fn from_ids(mut clients: Vec<usize>, scores: BTreeMap<usize, f64>) -> Self {
        clients.sort_unstable();
        Self { clients, scores }
    }
}

/// Uniform sample of `min(n, |participants|)` ids without replacement.
pub fn select_ccs_random(participants: &[usize], n: usize, seed: u64) -> SelectionOutcome {
    let mut rng = stream_rng(seed, &[0x7261_6e64]);
    let k = n.min(participants.len());
    let picked = sample(&mut rng, participants.len(), k)
        .into_iter()
        .map(|i| participants[i])
        .collect();
    SelectionOutcome::from_ids(picked, BTreeMap::new())
}

/// The `n` highest scores, lowest id first among equals.
pub fn select_ccs_fuzzy(evaluations: &BTreeMap<usize, f64>, n: usize) -> SelectionOutcome {
    let picked = rank(evaluations.iter().map(|(&id, &s)| (id, s)), n);
    SelectionOutcome::from_ids(picked, evaluations.clone())
}

/// One DSRC exchange. Every table expires stale entries and records its
/// owner's fresh score; then each vehicle at or above `threshold` sends its
/// score to every neighbour, senders and receivers in ascending id order.
pub fn broadcast_evaluations(
    tables: &mut [EvalTable],
    scores: &[f64],
    neighbors: &[Vec<usize>],
    round: u64,
    threshold: f64,
    expiry: u64,
) {
    for t in tables.iter_mut() {
        t.expire(round, expiry);
        let owner = t.owner;
        t.insert(owner, scores[owner], round);
    }
    for (sender, &score) in scores.iter().enumerate() {
        if score < threshold {
            continue;
        }
        let mut receivers = neighbors[sender].clone();
        receivers.sort_unstable();
        for r in receivers {
            tables[r].insert(sender, score, round);
        }
    }
}

/// Each vehicle decides alone from its own table: it becomes a client when
/// its score clears `threshold` and its id is in the table's top `m`.
pub fn dcs_round(tables: &[EvalTable], threshold: f64, m: usize) -> SelectionOutcome {
    let mut clients = Vec::new();
    let mut scores = BTreeMap::new();
    for t in tables {
        let Some(own) = t.own() else { continue };
        if own.score >= threshold && t.top_m(m).contains(&t.owner) {
            clients.push(t.owner);
            scores.insert(t.owner, own.score);
        }
    }
    SelectionOutcome::from_ids(clients, scores)
}
