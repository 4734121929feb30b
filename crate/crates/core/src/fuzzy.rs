//! Mamdani fuzzy evaluator.
//!
//! Four crisp objectives (sample quantity, available throughput, computational
//! capability, local loss) are normalized to `[0, 1]`, fuzzified into three
//! Gaussian linguistics each, pushed through an 81-entry rule base with
//! min/max inference and collapsed back to a score on `[0, 100]` by the
//! centre of gravity of the aggregated output set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Linguistic terms per input variable (low, middle, high).
pub const LINGUISTICS: usize = 3;
/// Output levels `L0..=L8`.
pub const LEVELS: usize = 9;
/// Size of a complete rule base over four inputs.
pub const RULE_COUNT: usize = 81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuzzyError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("aggregated output set has zero membership everywhere")]
    DegenerateSet,
    #[error("rule table line {line}: {reason}")]
    RuleTable { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, FuzzyError>;

/// Scales `value` by `max_value` and clamps the result at 1.
pub fn normalize(value: f64, max_value: f64) -> Result<f64> {
    if !(max_value > 0.0) || !max_value.is_finite() {
        return Err(FuzzyError::InvalidArgument(format!(
            "maximum must be positive, got {max_value}"
        )));
    }
    if !(value >= 0.0) {
        return Err(FuzzyError::InvalidArgument(format!(
            "value must be non-negative, got {value}"
        )));
    }
    Ok((value / max_value).min(1.0))
}

/// The four normalized objectives of one participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuzzyInput {
    pub sq: f64,
    pub ta: f64,
    pub cc: f64,
    pub lf: f64,
}

impl FuzzyInput {
    pub fn new(sq: f64, ta: f64, cc: f64, lf: f64) -> Result<Self> {
        for (name, v) in [("sq", sq), ("ta", ta), ("cc", cc), ("lf", lf)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(FuzzyError::InvalidArgument(format!(
                    "{name} = {v} lies outside [0, 1]"
                )));
            }
        }
        Ok(Self { sq, ta, cc, lf })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.sq, self.ta, self.cc, self.lf]
    }
}

/// Three Gaussian linguistics (low, middle, high) over `[0, 1]`.
///
/// The middle peak sits at the historical mean of the variable; the low and
/// high peaks sit at the ends of the interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipFamily {
    centers: [f64; LINGUISTICS],
    sigma: f64,
}

impl MembershipFamily {
    /// Centers `(0, historical_mean, 1)` with sigma a quarter of the smaller
    /// gap between adjacent centers.
    pub fn new(historical_mean: f64) -> Result<Self> {
        if !(historical_mean > 0.0 && historical_mean < 1.0) {
            return Err(FuzzyError::InvalidArgument(format!(
                "historical mean must lie in (0, 1), got {historical_mean}"
            )));
        }
        let gap = historical_mean.min(1.0 - historical_mean);
        Self::with_params([0.0, historical_mean, 1.0], gap / 4.0)
    }

    pub fn with_params(centers: [f64; LINGUISTICS], sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(FuzzyError::InvalidArgument(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !(centers[0] < centers[1] && centers[1] < centers[2]) {
            return Err(FuzzyError::InvalidArgument(format!(
                "centers must be strictly ascending, got {centers:?}"
            )));
        }
        if centers.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(FuzzyError::InvalidArgument(format!(
                "centers must lie in [0, 1], got {centers:?}"
            )));
        }
        Ok(Self { centers, sigma })
    }

    pub fn centers(&self) -> [f64; LINGUISTICS] {
        self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn historical_mean(&self) -> f64 {
        self.centers[1]
    }

    pub fn degrees(&self, x: f64) -> [f64; LINGUISTICS] {
        fuzzify(x, self)
    }
}

impl Default for MembershipFamily {
    fn default() -> Self {
        Self::new(0.5).expect("0.5 is a valid historical mean")
    }
}

/// Gaussian membership degree of `x` in each linguistic of `family`.
pub fn fuzzify(x: f64, family: &MembershipFamily) -> [f64; LINGUISTICS] {
    let two_var = 2.0 * family.sigma * family.sigma;
    family.centers.map(|c| (-(x - c) * (x - c) / two_var).exp())
}

/// Output level `L0..=L8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Level(u8);

impl Level {
    pub fn new(index: usize) -> Option<Self> {
        (index < LEVELS).then_some(Self(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

/// Linguistic scores `(sq, ta, cc, lf)`, each 0 (low), 1 (middle) or 2 (high).
pub type Antecedent = [usize; 4];

/// Consequent level for every one of the 81 antecedent combinations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleBase {
    consequents: [Level; RULE_COUNT],
}

fn rule_index(a: Antecedent) -> usize {
    a[0] + 3 * a[1] + 9 * a[2] + 27 * a[3]
}

fn rule_antecedent(index: usize) -> Antecedent {
    [index % 3, (index / 3) % 3, (index / 9) % 3, index / 27]
}

/// Iterator over all 81 antecedents in table order (sq fastest, lf slowest).
pub fn antecedents() -> impl Iterator<Item = Antecedent> {
    (0..RULE_COUNT).map(rule_antecedent)
}

/// The default rule base: the loss term counts double and the sum is shifted
/// and clamped onto `L0..=L8`.
pub fn default_rule_base() -> RuleBase {
    let consequents = std::array::from_fn(|i| {
        let [sq, ta, cc, lf] = rule_antecedent(i);
        let raw = (sq + ta + cc + 2 * lf) as i64 - 2;
        Level(raw.clamp(0, LEVELS as i64 - 1) as u8)
    });
    RuleBase { consequents }
}

impl Default for RuleBase {
    fn default() -> Self {
        default_rule_base()
    }
}

impl RuleBase {
    pub fn consequent(&self, antecedent: Antecedent) -> Level {
        self.consequents[rule_index(antecedent)]
    }

    pub fn set(&mut self, antecedent: Antecedent, level: Level) {
        self.consequents[rule_index(antecedent)] = level;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Antecedent, Level)> + '_ {
        self.consequents
            .iter()
            .enumerate()
            .map(|(i, &l)| (rule_antecedent(i), l))
    }

    /// Flat text table: one `sq ta cc lf level` line per rule.
    pub fn to_table(&self) -> String {
        let mut out = String::with_capacity(RULE_COUNT * 10);
        for ([sq, ta, cc, lf], level) in self.iter() {
            out.push_str(&format!("{sq} {ta} {cc} {lf} {}\n", level.index()));
        }
        out
    }
}

impl FromStr for RuleBase {
    type Err = FuzzyError;

    /// Parses the flat table format. Blank lines and `#` comments are skipped;
    /// every combination must appear exactly once.
    fn from_str(s: &str) -> Result<Self> {
        let mut seen = [false; RULE_COUNT];
        let mut consequents = [Level(0); RULE_COUNT];
        for (n, raw) in s.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |reason: String| FuzzyError::RuleTable { line, reason };
            let fields = body
                .split_whitespace()
                .map(|f| f.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(e.to_string()))?;
            let [sq, ta, cc, lf, level] = fields[..] else {
                return Err(err(format!("expected 5 fields, found {}", fields.len())));
            };
            if [sq, ta, cc, lf].iter().any(|&v| v >= LINGUISTICS) {
                return Err(err("linguistic index out of range 0..=2".into()));
            }
            let level =
                Level::new(level).ok_or_else(|| err(format!("level {level} out of range 0..=8")))?;
            let idx = rule_index([sq, ta, cc, lf]);
            if seen[idx] {
                return Err(err(format!("duplicate rule {sq} {ta} {cc} {lf}")));
            }
            seen[idx] = true;
            consequents[idx] = level;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(FuzzyError::RuleTable {
                line: s.lines().count(),
                reason: format!("missing rule {:?}", rule_antecedent(missing)),
            });
        }
        Ok(Self { consequents })
    }
}

/// Nine Gaussian output levels over `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputLevels {
    pub centers: [f64; LEVELS],
    pub sigma: f64,
}

impl Default for OutputLevels {
    fn default() -> Self {
        Self {
            centers: std::array::from_fn(|k| 12.5 * k as f64),
            sigma: 6.25,
        }
    }
}

impl OutputLevels {
    pub fn membership(&self, level: usize, y: f64) -> f64 {
        let d = y - self.centers[level];
        (-d * d / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Level with maximal membership at `y`; the lower level wins ties.
    pub fn classify(&self, y: f64) -> Level {
        let mut best = 0;
        let mut best_mu = self.membership(0, y);
        for k in 1..LEVELS {
            let mu = self.membership(k, y);
            if mu > best_mu {
                best = k;
                best_mu = mu;
            }
        }
        Level(best as u8)
    }
}

/// Discretized output universe with the level memberships tabulated.
#[derive(Debug, Clone)]
pub struct OutputUniverse {
    points: Vec<f64>,
    levels: OutputLevels,
    table: Vec<[f64; LEVELS]>,
}

impl OutputUniverse {
    pub fn new(lo: f64, hi: f64, step: f64, levels: OutputLevels) -> Result<Self> {
        if !(step > 0.0 && hi > lo) {
            return Err(FuzzyError::InvalidArgument(format!(
                "bad universe [{lo}, {hi}] step {step}"
            )));
        }
        let n = ((hi - lo) / step).round() as usize + 1;
        let points: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        let table = points
            .iter()
            .map(|&y| std::array::from_fn(|k| levels.membership(k, y)))
            .collect();
        Ok(Self {
            points,
            levels,
            table,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn levels(&self) -> &OutputLevels {
        &self.levels
    }
}

impl Default for OutputUniverse {
    /// `[0, 100]` at step 0.1.
    fn default() -> Self {
        Self::new(0.0, 100.0, 0.1, OutputLevels::default()).expect("valid default universe")
    }
}

/// A fuzzy set sampled on a finite list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzySet {
    pub points: Vec<f64>,
    pub membership: Vec<f64>,
}

impl FuzzySet {
    pub fn new(points: Vec<f64>, membership: Vec<f64>) -> Result<Self> {
        if points.len() != membership.len() {
            return Err(FuzzyError::InvalidArgument(format!(
                "{} points but {} membership values",
                points.len(),
                membership.len()
            )));
        }
        Ok(Self { points, membership })
    }

    pub fn centroid(&self) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (&a, &mu) in self.points.iter().zip(&self.membership) {
            num += a * mu;
            den += mu;
        }
        if !(den > 0.0) {
            return Err(FuzzyError::DegenerateSet);
        }
        Ok(num / den)
    }
}

/// Defuzzified output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: f64,
    pub level: Level,
}

/// Firing strength of the strongest rule concluding each level.
///
/// For a fixed level, max over rules of `min(level, strength)` equals
/// `min(level, max strength)`, so only the per-level maxima are kept.
fn level_strengths(
    input: &FuzzyInput,
    families: &[MembershipFamily; 4],
    rules: &RuleBase,
) -> [f64; LEVELS] {
    let x = input.as_array();
    let deg: [[f64; LINGUISTICS]; 4] = std::array::from_fn(|v| fuzzify(x[v], &families[v]));
    let mut strength = [0.0f64; LEVELS];
    for (i, level) in rules.consequents.iter().enumerate() {
        let [a, b, c, d] = rule_antecedent(i);
        let fire = deg[0][a].min(deg[1][b]).min(deg[2][c]).min(deg[3][d]);
        let s = &mut strength[level.index()];
        if fire > *s {
            *s = fire;
        }
    }
    strength
}

/// Mamdani min/max inference onto the discretized output universe.
pub fn infer(
    input: &FuzzyInput,
    families: &[MembershipFamily; 4],
    rules: &RuleBase,
    universe: &OutputUniverse,
) -> FuzzySet {
    let strength = level_strengths(input, families, rules);
    let membership = universe
        .table
        .iter()
        .map(|mu| {
            mu.iter()
                .zip(&strength)
                .fold(0.0f64, |acc, (&m, &s)| acc.max(m.min(s)))
        })
        .collect();
    FuzzySet {
        points: universe.points.clone(),
        membership,
    }
}

/// Centre of gravity of `set`, labelled with the best-matching level.
pub fn defuzzify_cog(set: &FuzzySet, levels: &OutputLevels) -> Result<Evaluation> {
    let score = set.centroid()?.clamp(0.0, 100.0);
    Ok(Evaluation {
        score,
        level: levels.classify(score),
    })
}

/// Raw objective values in evaluator order: sample quantity, throughput,
/// computational capability, loss.
pub type RawObjectives = [f64; 4];

/// Full pipeline: normalize, fuzzify, infer, defuzzify.
pub fn evaluate(
    raw: RawObjectives,
    maxima: RawObjectives,
    families: &[MembershipFamily; 4],
    rules: &RuleBase,
    universe: &OutputUniverse,
) -> Result<Evaluation> {
    let mut x = [0.0; 4];
    for v in 0..4 {
        x[v] = normalize(raw[v], maxima[v])?;
    }
    let input = FuzzyInput::new(x[0], x[1], x[2], x[3])?;
    defuzzify_cog(&infer(&input, families, rules, universe), universe.levels())
}

/// Owns everything a participant needs to score itself.
#[derive(Debug, Clone)]
pub struct FuzzyEvaluator {
    pub families: [MembershipFamily; 4],
    pub rules: RuleBase,
    pub universe: OutputUniverse,
}

impl Default for FuzzyEvaluator {
    fn default() -> Self {
        Self {
            families: [MembershipFamily::default(); 4],
            rules: default_rule_base(),
            universe: OutputUniverse::default(),
        }
    }
}

impl FuzzyEvaluator {
    pub fn new(families: [MembershipFamily; 4], rules: RuleBase) -> Self {
        Self {
            families,
            rules,
            universe: OutputUniverse::default(),
        }
    }

    pub fn evaluate(&self, raw: RawObjectives, maxima: RawObjectives) -> Result<Evaluation> {
        evaluate(raw, maxima, &self.families, &self.rules, &self.universe)
    }

    pub fn evaluate_normalized(&self, input: &FuzzyInput) -> Result<Evaluation> {
        defuzzify_cog(
            &infer(input, &self.families, &self.rules, &self.universe),
            self.universe.levels(),
        )
    }
}
