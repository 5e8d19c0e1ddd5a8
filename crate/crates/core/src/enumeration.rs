//! Ranked supports for the selection mechanisms.
//!
//! Candidate supports are found with outer approximation on the penalized
//! objective and then re-scored with the unpenalized ball-constrained loss
//! `R(S, D)`, which is what the mechanisms consume. Because the two
//! objectives can order near-ties differently, every enumeration records how
//! many positions of the penalized order differ from the final order by `R`.

use std::io::Write;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::milp::SubsetLimit;
use crate::oa::{oa_solve, warmstart_cuts, Cut, OaConfig, OaOutcome, OaProblem};
use crate::solvers::{iht_from_moments, support_penalized_value, support_score, InnerSolver, LossKind, Moments, Objective, SolverOptions};
use crate::support::{binomial, one_swap_neighbors, Combinations, Support};

/// Default cap on the number of supports [`brute_force_enumerate`] scores.
pub const BRUTE_FORCE_CAP: u128 = 500_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    TopR,
    Mistakes,
    Practical,
    BruteForce,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::TopR => "top_r",
            Mode::Mistakes => "mistakes",
            Mode::Practical => "practical",
            Mode::BruteForce => "brute_force",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top_r" => Ok(Mode::TopR),
            "mistakes" => Ok(Mode::Mistakes),
            "practical" => Ok(Mode::Practical),
            "brute_force" => Ok(Mode::BruteForce),
            other => Err(Error::invalid(format!("unknown enumeration mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSupport {
    pub support: Support,
    /// `R(S, D)`.
    pub score: f64,
    /// Penalized objective at the binary support; diagnostic only, `NaN`
    /// when not computed.
    pub penalized_score: f64,
}

/// One outer-approximation solve made during an enumeration.
#[derive(Clone, Debug)]
pub struct OaRecord {
    pub limits: Vec<SubsetLimit>,
    pub outcome: OaOutcome,
}

#[derive(Clone, Debug)]
pub struct EnumeratedSupports {
    /// Top-R and brute-force modes: nondecreasing in score, ties
    /// lexicographic. Mistakes mode: item `k` has exactly `k` mistakes
    /// relative to item 0. Practical mode: nondecreasing in score.
    pub items: Vec<ScoredSupport>,
    pub mode: Mode,
    pub p: usize,
    pub s: usize,
    /// Positions where the penalized order differs from the score order.
    pub rank_disagreements: usize,
    /// Practical mode only: whether every one-mistake penalized value is at
    /// most the penalized value of the best support with two or more
    /// mistakes.
    pub check_passed: Option<bool>,
    pub solves: Vec<OaRecord>,
}

impl EnumeratedSupports {
    pub fn supports(&self) -> Vec<Support> {
        self.items.iter().map(|i| i.support.clone()).collect()
    }

    /// CSV with columns `rank,indices,score` (1-based rank and indices).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["rank", "indices", "score"])?;
        for (k, item) in self.items.iter().enumerate() {
            w.write_record([(k + 1).to_string(), item.support.to_one_based_string(), item.score.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn by_score(a: &ScoredSupport, b: &ScoredSupport) -> std::cmp::Ordering {
    a.score.total_cmp(&b.score).then_with(|| a.support.cmp(&b.support))
}

fn count_disagreements(before: &[Support], after: &[ScoredSupport]) -> usize {
    before.iter().zip(after).filter(|(a, b)| **a != b.support).count()
}

#[derive(Clone, Debug)]
pub struct EnumerationSettings {
    pub s: usize,
    pub radius: f64,
    pub oa: OaConfig,
    pub solver: InnerSolver,
    /// Percentage of features (by `|X'y|`) used for warm-start cuts; `None`
    /// disables them.
    pub warm_start_pct: Option<f64>,
    /// Seeds the noise lifts.
    pub seed: u64,
    /// Use the incumbent of an outer-approximation solve that stopped
    /// without certifying `tol` instead of failing.
    pub accept_uncertified: bool,
}

impl EnumerationSettings {
    pub fn new(s: usize, radius: f64, lambda: f64) -> Self {
        EnumerationSettings {
            s,
            radius,
            oa: OaConfig::new(lambda),
            solver: InnerSolver::default(),
            warm_start_pct: Some(10.0),
            seed: 0,
            accept_uncertified: false,
        }
    }
}

/// Holds the data, a shared cut pool and the noise stream across the OA
/// solves of one or more enumerations on the same dataset.
pub struct Enumerator {
    objective: Objective,
    settings: EnumerationSettings,
    pool: Vec<Cut>,
    rng: ChaCha8Rng,
    init: Support,
    warmed: bool,
    best: Option<(Support, OaRecord)>,
}

impl Enumerator {
    pub fn new(d: &Dataset, loss: LossKind, settings: EnumerationSettings) -> Result<Self> {
        Self::from_objective(Objective::new(d, loss)?, d, settings)
    }

    fn from_objective(objective: Objective, d: &Dataset, settings: EnumerationSettings) -> Result<Self> {
        let p = objective.p();
        if settings.s == 0 || settings.s > p {
            return Err(Error::invalid(format!("need 1 <= s <= p, got s = {}, p = {p}", settings.s)));
        }
        settings.oa.validate()?;
        // IHT runs on the least-squares surrogate for either loss.
        let init = iht_from_moments(&Moments::from_dataset(d), settings.s, settings.oa.lambda, &SolverOptions::pgd())?;
        let rng = ChaCha8Rng::seed_from_u64(settings.seed);
        Ok(Enumerator { objective, settings, pool: Vec::new(), rng, init, warmed: false, best: None })
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn p(&self) -> usize {
        self.objective.p()
    }

    pub fn cut_count(&self) -> usize {
        self.pool.len()
    }

    /// `R(S, D)`.
    pub fn score(&self, support: &Support) -> Result<f64> {
        support_score(&self.objective, support, self.settings.radius, &self.settings.solver)
    }

    pub fn penalized(&self, support: &Support) -> Result<f64> {
        support_penalized_value(
            &self.objective,
            support,
            self.settings.oa.lambda,
            self.settings.radius,
            &self.settings.solver,
        )
    }

    fn scored(&self, support: Support) -> Result<ScoredSupport> {
        Ok(ScoredSupport { score: self.score(&support)?, penalized_score: self.penalized(&support)?, support })
    }

    /// One OA solve under `limits` plus `|S| = s`. Exclusions alone would
    /// let the master fall back to a strict subset of an excluded support.
    pub fn solve(&mut self, limits: &[SubsetLimit]) -> Result<(Support, OaRecord)> {
        let (s, p) = (self.settings.s, self.p());
        let problem = OaProblem {
            objective: &self.objective,
            s,
            radius: self.settings.radius,
            config: &self.settings.oa,
            solver: &self.settings.solver,
        };
        if !self.warmed {
            self.warmed = true;
            if let Some(pct) = self.settings.warm_start_pct {
                let cuts = warmstart_cuts(&problem, &self.init, pct, &mut self.rng)?;
                self.pool.extend(cuts);
            }
        }
        let mut all = limits.to_vec();
        all.push(SubsetLimit { indices: Support::from_sorted((0..p).collect()), min: s, max: s });
        let outcome = match oa_solve(&problem, &all, &mut self.pool, &self.init, &mut self.rng) {
            Ok(o) => o,
            Err(Error::NotConverged { gap, incumbent, .. }) if self.settings.accept_uncertified => {
                warn!("outer approximation stopped at gap {gap:.2e}; using its incumbent {}", incumbent.support);
                *incumbent
            }
            Err(e) => return Err(e),
        };
        Ok((outcome.support.clone(), OaRecord { limits: all, outcome }))
    }

    /// `S_1`, the unconstrained optimum, cached.
    fn best(&mut self) -> Result<(Support, OaRecord)> {
        if self.best.is_none() {
            self.best = Some(self.solve(&[])?);
        }
        Ok(self.best.clone().expect("just set"))
    }

    /// The first `r_count` supports of the exclusion sequence, re-scored and
    /// sorted by `R`.
    pub fn top_r(&mut self, r_count: usize) -> Result<EnumeratedSupports> {
        let (p, s) = (self.p(), self.settings.s);
        check_count(p, s, r_count)?;
        let mut order = Vec::with_capacity(r_count);
        let mut solves = Vec::with_capacity(r_count);
        let mut limits = Vec::new();
        for k in 0..r_count {
            let (support, record) = if k == 0 { self.best()? } else { self.solve(&limits)? };
            limits.push(SubsetLimit::exclusion(&support));
            order.push(support);
            solves.push(record);
        }
        let mut items = order.iter().cloned().map(|s| self.scored(s)).collect::<Result<Vec<_>>>()?;
        items.sort_by(by_score);
        let rank_disagreements = count_disagreements(&order, &items);
        if rank_disagreements > 0 {
            info!("top-R: penalized and unpenalized orders differ at {rank_disagreements} positions");
        }
        Ok(EnumeratedSupports { items, mode: Mode::TopR, p, s, rank_disagreements, check_passed: None, solves })
    }

    /// Item `k` is the best support with exactly `k` mistakes relative to the
    /// best support, for `k = 0..=min(s, p - s)`.
    pub fn mistakes(&mut self) -> Result<EnumeratedSupports> {
        let (p, s) = (self.p(), self.settings.s);
        let kmax = s.min(p - s);
        let (center, first) = self.best()?;
        let mut classes: Vec<Option<(Support, OaRecord)>> = vec![None; kmax + 1];
        classes[0] = Some((center.clone(), first));
        for k in 1..=kmax {
            if classes[k].is_some() {
                continue;
            }
            let at_least = [SubsetLimit::at_most(&center, s - k)];
            let (support, record) = self.solve(&at_least)?;
            let found = support.mistakes_from(&center);
            if found == k {
                classes[k] = Some((support, record));
                continue;
            }
            // The best support with at least k mistakes is the best of its own
            // class, and class k needs a solve restricted to exactly k.
            if classes[found].is_none() {
                classes[found] = Some((support, record));
            }
            let exact = [SubsetLimit { indices: center.clone(), min: s - k, max: s - k }];
            let (support, record) = self.solve(&exact)?;
            debug_assert_eq!(support.mistakes_from(&center), k);
            classes[k] = Some((support, record));
        }
        let mut items = Vec::with_capacity(kmax + 1);
        let mut solves = Vec::with_capacity(kmax + 1);
        for (support, record) in classes.into_iter().map(|c| c.expect("every class filled")) {
            items.push(self.scored(support)?);
            solves.push(record);
        }
        Ok(EnumeratedSupports {
            items,
            mode: Mode::Mistakes,
            p,
            s,
            rank_disagreements: 0,
            check_passed: None,
            solves,
        })
    }

    /// The best support, all one-swap neighbors scored directly, and the best
    /// support with at least two mistakes: `2 + (p - s) s` items when
    /// `2 <= min(s, p - s)`.
    pub fn practical(&mut self) -> Result<EnumeratedSupports> {
        let (p, s) = (self.p(), self.settings.s);
        let (center, first) = self.best()?;
        let mut solves = vec![first];
        let mut items = vec![self.scored(center.clone())?];
        let mut worst_one_swap = f64::NEG_INFINITY;
        for nb in one_swap_neighbors(&center, p) {
            let item = self.scored(nb)?;
            worst_one_swap = worst_one_swap.max(item.penalized_score);
            items.push(item);
        }
        let mut check_passed = None;
        if s.min(p - s) >= 2 {
            let (support, record) = self.solve(&[SubsetLimit::at_most(&center, s - 2)])?;
            let item = self.scored(support)?;
            let ok = worst_one_swap <= item.penalized_score;
            if !ok {
                warn!("practical top-R: a one-mistake support has a larger penalized value than the best two-mistake support");
            }
            check_passed = Some(ok);
            items.push(item);
            solves.push(record);
        }
        items.sort_by(by_score);
        let mut penalized_order = items.clone();
        penalized_order.sort_by(|a, b| a.penalized_score.total_cmp(&b.penalized_score).then_with(|| a.support.cmp(&b.support)));
        let order: Vec<Support> = penalized_order.into_iter().map(|i| i.support).collect();
        let rank_disagreements = count_disagreements(&order, &items);
        Ok(EnumeratedSupports { items, mode: Mode::Practical, p, s, rank_disagreements, check_passed, solves })
    }
}

fn check_count(p: usize, s: usize, r_count: usize) -> Result<()> {
    let total = binomial(p, s).unwrap_or(u128::MAX);
    if r_count == 0 || r_count as u128 >= total {
        return Err(Error::invalid(format!("need 1 <= R < C(p, s) = {total}, got R = {r_count}")));
    }
    Ok(())
}

pub fn top_r_enumerate(d: &Dataset, loss: LossKind, settings: EnumerationSettings, r_count: usize) -> Result<EnumeratedSupports> {
    Enumerator::new(d, loss, settings)?.top_r(r_count)
}

pub fn mistakes_enumerate(d: &Dataset, loss: LossKind, settings: EnumerationSettings) -> Result<EnumeratedSupports> {
    Enumerator::new(d, loss, settings)?.mistakes()
}

pub fn practical_top_r(d: &Dataset, loss: LossKind, settings: EnumerationSettings) -> Result<EnumeratedSupports> {
    Enumerator::new(d, loss, settings)?.practical()
}

/// Every size-`s` support with its score `R(S, D)`, sorted by score with
/// lexicographic ties. Errors if there are more than `cap` supports.
pub fn score_table(obj: &Objective, s: usize, radius: f64, solver: &InnerSolver, cap: u128) -> Result<Vec<ScoredSupport>> {
    let p = obj.p();
    let count = binomial(p, s).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let mut table = Combinations::new(p, s)
        .map(|support| {
            Ok(ScoredSupport {
                score: support_score(obj, &support, radius, solver)?,
                penalized_score: f64::NAN,
                support,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    table.sort_by(by_score);
    Ok(table)
}

/// Exact top `r_count` supports by scoring all of them.
pub fn brute_force_enumerate(
    d: &Dataset,
    loss: LossKind,
    s: usize,
    radius: f64,
    r_count: usize,
    solver: &InnerSolver,
) -> Result<EnumeratedSupports> {
    let obj = Objective::new(d, loss)?;
    let p = obj.p();
    if r_count == 0 || r_count as u128 > binomial(p, s).unwrap_or(u128::MAX) {
        return Err(Error::invalid("need 1 <= R <= C(p, s)"));
    }
    let mut items = score_table(&obj, s, radius, solver, BRUTE_FORCE_CAP)?;
    items.truncate(r_count);
    Ok(EnumeratedSupports {
        items,
        mode: Mode::BruteForce,
        p,
        s,
        rank_disagreements: 0,
        check_passed: None,
        solves: Vec::new(),
    })
}
