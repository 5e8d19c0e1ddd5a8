//! Selection mechanisms, their exact laws, and privacy accounting.
//!
//! All weights are `exp(-epsilon * score / (2 delta))` computed in log space
//! with a max shift; class and residual multiplicities enter as log
//! binomials so `C(p, s)` never has to fit in a float.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::data::{DataBounds, Dataset};
use crate::enumeration::{score_table, EnumeratedSupports, Mode, ScoredSupport, BRUTE_FORCE_CAP};
use crate::error::{Error, Result};
use crate::solvers::{InnerSolver, LossKind, Objective};
use crate::support::{binomial, ln_binomial, sample_at_mistakes, sample_uniform_support, Support};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensitivityBound {
    pub delta: f64,
    pub loss: LossKind,
    pub bounds: DataBounds,
    pub radius: f64,
    pub s: usize,
    /// Sample size, for the hinge bound only.
    pub n: Option<usize>,
}

/// `2 b_y^2 + 2 b_x^2 r^2 s` for the residual sum of squares.
pub fn sensitivity_ls(bounds: DataBounds, radius: f64, s: usize) -> Result<SensitivityBound> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::invalid("radius must be nonnegative"));
    }
    let delta = 2.0 * bounds.by * bounds.by + 2.0 * bounds.bx * bounds.bx * radius * radius * s as f64;
    Ok(SensitivityBound { delta, loss: LossKind::LeastSquares, bounds, radius, s, n: None })
}

/// `(1 + r b_x sqrt(s)) / n` for the mean hinge loss.
pub fn sensitivity_hinge(bounds: DataBounds, radius: f64, s: usize, n: usize) -> Result<SensitivityBound> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::invalid("radius must be nonnegative"));
    }
    let delta = (1.0 + radius * bounds.bx * (s as f64).sqrt()) / n as f64;
    Ok(SensitivityBound { delta, loss: LossKind::Hinge, bounds, radius, s, n: Some(n) })
}

pub fn sensitivity(loss: LossKind, bounds: DataBounds, radius: f64, s: usize, n: usize) -> Result<SensitivityBound> {
    match loss {
        LossKind::LeastSquares => sensitivity_ls(bounds, radius, s),
        LossKind::Hinge => sensitivity_hinge(bounds, radius, s, n),
    }
}

/// Number of rejection rounds `T` in the residual sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    Finite(u64),
    Infinite,
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Finite(t) => write!(f, "{t}"),
            Horizon::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Horizon {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Horizon::Infinite),
            t => t
                .parse::<u64>()
                .ok()
                .filter(|&t| t > 0)
                .map(Horizon::Finite)
                .ok_or_else(|| Error::invalid(format!("bad horizon {t:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub horizon: Horizon,
    pub r_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// A specific support.
    Support(Support),
    /// Everything outside the enumerated top-R set.
    Residual,
    /// Mistake class `k`.
    Class(usize),
}

/// A finite probability vector over outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionDistribution {
    pub outcomes: Vec<Outcome>,
    pub weights: Vec<f64>,
}

impl SelectionDistribution {
    /// Normalizes `exp(log_weights)` with a max shift.
    pub fn from_log_weights(outcomes: Vec<Outcome>, log_weights: &[f64]) -> Result<Self> {
        if outcomes.is_empty() || outcomes.len() != log_weights.len() {
            return Err(Error::invalid("outcome and weight counts differ or are empty"));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::NonFinite("log weights"));
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        Ok(SelectionDistribution { outcomes, weights: raw.iter().map(|w| w / total).collect() })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn probability(&self, outcome: &Outcome) -> f64 {
        self.outcomes.iter().zip(&self.weights).filter(|(o, _)| *o == outcome).map(|(_, w)| w).sum()
    }

    pub fn sample_slot<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        WeightedIndex::new(&self.weights).expect("weights are a probability vector").sample(rng)
    }
}

fn log_weight(score: f64, epsilon: f64, delta: f64) -> f64 {
    -epsilon * score / (2.0 * delta)
}

fn check_privacy_inputs(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon must be nonnegative and finite"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta must be positive"));
    }
    Ok(())
}

/// `ln(C(p, s) - r)`.
fn ln_residual_count(p: usize, s: usize, r: usize) -> f64 {
    match binomial(p, s) {
        Some(c) => ((c - r as u128) as f64).ln(),
        None => {
            let ln_c = ln_binomial(p, s);
            ln_c + (-((r as f64).ln() - ln_c).exp()).ln_1p()
        }
    }
}

/// `P0`: slot `k < R` for the `k`-th enumerated support, and a residual slot
/// of multiplicity `C(p, s) - R` scored at the `R`-th score.
pub fn build_p0(e: &EnumeratedSupports, delta: f64, epsilon: f64) -> Result<SelectionDistribution> {
    check_privacy_inputs(epsilon, delta)?;
    if e.mode == Mode::Mistakes {
        return Err(Error::invalid("build_p0 needs a ranked enumeration"));
    }
    let r = e.items.len();
    let total = binomial(e.p, e.s).unwrap_or(u128::MAX);
    if r == 0 || r as u128 >= total {
        return Err(Error::invalid(format!("need 1 <= R < C(p, s), got R = {r}")));
    }
    let mut outcomes: Vec<Outcome> = e.items.iter().map(|i| Outcome::Support(i.support.clone())).collect();
    let mut logs: Vec<f64> = e.items.iter().map(|i| log_weight(i.score, epsilon, delta)).collect();
    let worst = e.items.iter().map(|i| i.score).fold(f64::NEG_INFINITY, f64::max);
    outcomes.push(Outcome::Residual);
    logs.push(ln_residual_count(e.p, e.s, r) + log_weight(worst, epsilon, delta));
    SelectionDistribution::from_log_weights(outcomes, &logs)
}

/// Draws from the top-R mechanism: an enumerated support, or for the
/// residual slot up to `T` uniform draws stopping at the first one outside
/// the enumerated set.
pub fn sample_top_r<R: Rng + ?Sized>(
    e: &EnumeratedSupports,
    dist: &SelectionDistribution,
    horizon: Horizon,
    rng: &mut R,
) -> Support {
    match &dist.outcomes[dist.sample_slot(rng)] {
        Outcome::Support(s) => s.clone(),
        _ => {
            let top: HashSet<&Support> = e.items.iter().map(|i| &i.support).collect();
            let mut round = 0u64;
            loop {
                round += 1;
                let draw = sample_uniform_support(e.p, e.s, rng);
                let last = matches!(horizon, Horizon::Finite(t) if round >= t);
                if !top.contains(&draw) || last {
                    return draw;
                }
            }
        }
    }
}

/// Class `k` gets weight `C(p - s, k) C(s, k) exp(-epsilon R(S_k) / (2 delta))`.
pub fn mistakes_distribution(e: &EnumeratedSupports, delta: f64, epsilon: f64) -> Result<SelectionDistribution> {
    check_privacy_inputs(epsilon, delta)?;
    if e.mode != Mode::Mistakes || e.items.len() != e.s.min(e.p - e.s) + 1 {
        return Err(Error::invalid("mistakes_distribution needs one support per mistake class"));
    }
    let (p, s) = (e.p, e.s);
    let logs: Vec<f64> = e
        .items
        .iter()
        .enumerate()
        .map(|(k, i)| ln_binomial(p - s, k) + ln_binomial(s, k) + log_weight(i.score, epsilon, delta))
        .collect();
    SelectionDistribution::from_log_weights((0..logs.len()).map(Outcome::Class).collect(), &logs)
}

/// Draws a class, then a uniform support with exactly that many mistakes.
pub fn sample_mistakes<R: Rng + ?Sized>(e: &EnumeratedSupports, dist: &SelectionDistribution, rng: &mut R) -> Support {
    let center = &e.items[0].support;
    match dist.outcomes[dist.sample_slot(rng)] {
        Outcome::Class(0) => center.clone(),
        Outcome::Class(k) => sample_at_mistakes(center, e.p, k, rng),
        _ => unreachable!("mistakes distributions only hold classes"),
    }
}

/// The exponential mechanism over an explicit score table.
pub fn exact_exponential_mechanism(table: &[(Support, f64)], delta: f64, epsilon: f64) -> Result<SelectionDistribution> {
    check_privacy_inputs(epsilon, delta)?;
    if table.is_empty() {
        return Err(Error::EmptyInput);
    }
    let outcomes = table.iter().map(|(s, _)| Outcome::Support(s.clone())).collect();
    let logs: Vec<f64> = table.iter().map(|(_, v)| log_weight(*v, epsilon, delta)).collect();
    SelectionDistribution::from_log_weights(outcomes, &logs)
}

/// Plain scores from a sorted table.
pub fn plain_scores(table: &[ScoredSupport]) -> Vec<(Support, f64)> {
    table.iter().map(|i| (i.support.clone(), i.score)).collect()
}

/// Scores of the modified mechanism: the true score inside the top `r_count`
/// of the sorted `table`, the `r_count`-th score outside.
pub fn top_r_scores(table: &[ScoredSupport], r_count: usize) -> Result<Vec<(Support, f64)>> {
    if r_count == 0 || r_count > table.len() {
        return Err(Error::invalid("R out of range for the score table"));
    }
    let cutoff = table[r_count - 1].score;
    Ok(table
        .iter()
        .enumerate()
        .map(|(k, i)| (i.support.clone(), if k < r_count { i.score } else { cutoff }))
        .collect())
}

/// Scores of the mistakes mechanism: every support takes the minimum score
/// of its mistake class around the best support in the sorted `table`.
pub fn mistakes_scores(table: &[ScoredSupport]) -> Result<Vec<(Support, f64)>> {
    let center = &table.first().ok_or(Error::EmptyInput)?.support;
    let mut class_min: HashMap<usize, f64> = HashMap::new();
    for i in table {
        let k = i.support.mistakes_from(center);
        let e = class_min.entry(k).or_insert(f64::INFINITY);
        *e = e.min(i.score);
    }
    Ok(table.iter().map(|i| (i.support.clone(), class_min[&i.support.mistakes_from(center)])).collect())
}

/// Per-support probabilities of a distribution built by [`build_p0`] when
/// the residual sampler never gives up, over every support in `table`.
pub fn top_r_support_law(dist: &SelectionDistribution, table: &[ScoredSupport]) -> Result<Vec<(Support, f64)>> {
    let listed = dist.outcomes.iter().filter(|o| matches!(o, Outcome::Support(_))).count();
    let outside = table.len() - listed;
    let residual = dist.probability(&Outcome::Residual);
    Ok(table
        .iter()
        .map(|i| {
            let listed_p = dist.probability(&Outcome::Support(i.support.clone()));
            let p = if listed_p == 0.0 && outside > 0 { residual / outside as f64 } else { listed_p };
            (i.support.clone(), p)
        })
        .collect())
}

/// Per-support probabilities of a class distribution: class mass spread
/// uniformly over the class.
pub fn mistakes_support_law(e: &EnumeratedSupports, dist: &SelectionDistribution, table: &[ScoredSupport]) -> Vec<(Support, f64)> {
    let center = &e.items[0].support;
    table
        .iter()
        .map(|i| {
            let k = i.support.mistakes_from(center);
            let size = binomial(e.p - e.s, k).unwrap_or(0) * binomial(e.s, k).unwrap_or(0);
            (i.support.clone(), dist.probability(&Outcome::Class(k)) / size as f64)
        })
        .collect()
}

/// `log(e^eps + q^T / delta0) - log(1 - q^T)` with `q = R / C(p, s)` and
/// `delta0 = exp(-n eps b_y^2 / (2 delta)) / C(p, s)`; `eps` when `T` is
/// infinite.
pub fn epsilon_prime(params: &PrivacyParams, p: usize, s: usize, n: usize, delta: f64, by: f64) -> Result<f64> {
    let eps = params.epsilon;
    check_privacy_inputs(eps, delta)?;
    let ln_c = ln_binomial(p, s);
    let r = params.r_count as f64;
    if params.r_count < 1 || r.ln() >= ln_c {
        return Err(Error::invalid("need 1 <= R < C(p, s) so that q < 1"));
    }
    let t = match params.horizon {
        Horizon::Infinite => return Ok(eps),
        Horizon::Finite(t) => t as f64,
    };
    let ln_q_t = t * (r.ln() - ln_c);
    // ln(q^T / delta0)
    let ln_ratio = ln_q_t + n as f64 * eps * by * by / (2.0 * delta) + ln_c;
    let (hi, lo) = if eps >= ln_ratio { (eps, ln_ratio) } else { (ln_ratio, eps) };
    let log_sum = hi + (lo - hi).exp().ln_1p();
    Ok(log_sum - (-ln_q_t.exp()).ln_1p())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MechanismKind {
    Exponential,
    TopR(usize),
    Mistakes,
}

impl MechanismKind {
    pub fn name(self) -> String {
        match self {
            MechanismKind::Exponential => "exp_mech_exact".into(),
            MechanismKind::TopR(r) => format!("top_r_{r}"),
            MechanismKind::Mistakes => "mistakes".into(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AuditSpec {
    pub mechanism: MechanismKind,
    pub epsilon: f64,
    pub loss: LossKind,
    pub s: usize,
    pub radius: f64,
    pub bounds: DataBounds,
    pub solver: InnerSolver,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub mechanism: String,
    pub epsilon: f64,
    pub max_log_ratio: f64,
    /// `R(S_2) - R(S_1) > 2 delta` on both datasets.
    pub gap_ok: bool,
}

impl AuditReport {
    pub const HEADER: [&'static str; 5] = ["mechanism", "epsilon", "max_log_ratio", "gap_ok", "seed"];

    pub fn csv_row(&self, seed: u64) -> Vec<String> {
        vec![
            self.mechanism.clone(),
            self.epsilon.to_string(),
            self.max_log_ratio.to_string(),
            self.gap_ok.to_string(),
            seed.to_string(),
        ]
    }
}

/// Exact outcome law of `spec.mechanism` on a clipped dataset, with the
/// sorted score table it came from.
pub fn exact_law(d: &Dataset, spec: &AuditSpec) -> Result<(Vec<(Support, f64)>, Vec<ScoredSupport>, f64)> {
    let d = spec.loss.clip(d, spec.bounds);
    let obj = Objective::new(&d, spec.loss)?;
    let delta = sensitivity(spec.loss, spec.bounds, spec.radius, spec.s, d.n())?.delta;
    let table = score_table(&obj, spec.s, spec.radius, &spec.solver, BRUTE_FORCE_CAP)?;
    let scores = match spec.mechanism {
        MechanismKind::Exponential => plain_scores(&table),
        MechanismKind::TopR(r) => top_r_scores(&table, r)?,
        MechanismKind::Mistakes => mistakes_scores(&table)?,
    };
    let dist = exact_exponential_mechanism(&scores, delta, spec.epsilon)?;
    let law = scores.into_iter().map(|(s, _)| s).zip(dist.weights).collect();
    Ok((law, table, delta))
}

/// Max over supports of `|log P(S | d) - log P(S | d')|` for the exact
/// mechanism laws on the clipped datasets, plus the gap condition.
pub fn privacy_audit(d: &Dataset, d_prime: &Dataset, spec: &AuditSpec) -> Result<AuditReport> {
    let differing = d.rows_differing(d_prime)?;
    if differing > 1 {
        return Err(Error::NotNeighbors(differing));
    }
    let (law, table, delta) = exact_law(d, spec)?;
    let (law_prime, table_prime, _) = exact_law(d_prime, spec)?;
    let other: HashMap<&Support, f64> = law_prime.iter().map(|(s, p)| (s, *p)).collect();
    let max_log_ratio = law
        .iter()
        .map(|(s, p)| (p.ln() - other[s].ln()).abs())
        .fold(0.0, f64::max);
    let gap = |t: &[ScoredSupport]| t.len() < 2 || t[1].score - t[0].score > 2.0 * delta;
    Ok(AuditReport {
        mechanism: spec.mechanism.name(),
        epsilon: spec.epsilon,
        max_log_ratio,
        gap_ok: gap(&table) && gap(&table_prime),
    })
}
