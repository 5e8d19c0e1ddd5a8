//! Exact solver for the outer-approximation master problem
//!
//! ```text
//! min eta  s.t.  eta >= value_k + grad_k'(z - anchor_k)   for every cut k
//!                sum_i z_i <= s
//!                lo_j <= sum_{i in I_j} z_i <= hi_j          for every subset limit j
//!                z in {0,1}^p
//! ```
//!
//! Best-first branch-and-bound over an LP relaxation solved by a dense,
//! bounded-variable dual simplex. The objective of the relaxation (`w >= 0`,
//! after shifting `eta` by a global lower bound) has nonnegative costs, so the
//! all-slack basis is dual feasible and no phase one is needed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::oa::Cut;
use crate::support::{binomial, Combinations, Support};

/// Integrality tolerance on relaxed `z` values.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Primal feasibility tolerance inside the simplex.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// At or below this many size-`s` supports the exhaustive path is used.
pub const EXHAUSTIVE_FALLBACK: u128 = 5_000;
/// Default cap for [`solve_master_exhaustive`].
pub const EXHAUSTIVE_CAP: u128 = 2_000_000;

const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_SWITCH: usize = 50;
const COST_PERTURBATION: f64 = 1e-9;
/// Violated cuts added to a node LP per round.
const CUTS_PER_ROUND: usize = 8;
/// Node budget of [`solve_master_bnb`].
pub const DEFAULT_MAX_NODES: usize = 500_000;

/// `min <= |z ∩ indices| <= max`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetLimit {
    pub indices: Support,
    pub min: usize,
    pub max: usize,
}

impl SubsetLimit {
    /// Forbids selecting all of `support`: `sum_{i in S} z_i <= |S| - 1`.
    pub fn exclusion(support: &Support) -> Self {
        SubsetLimit { indices: support.clone(), min: 0, max: support.len().saturating_sub(1) }
    }

    /// At most `max` of `indices` may be selected.
    pub fn at_most(indices: &Support, max: usize) -> Self {
        SubsetLimit { indices: indices.clone(), min: 0, max }
    }

    fn count(&self, z: &[bool]) -> usize {
        self.indices.indices().iter().filter(|&&i| z[i]).count()
    }

    pub fn satisfied_by(&self, z: &[bool]) -> bool {
        let c = self.count(z);
        self.min <= c && c <= self.max
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MasterProblem<'a> {
    pub p: usize,
    pub s: usize,
    pub cuts: &'a [Cut],
    pub limits: &'a [SubsetLimit],
}

#[derive(Clone, Debug, PartialEq)]
pub struct MilpSolution {
    pub z: Vec<bool>,
    pub eta: f64,
    pub node_count: usize,
    pub proven_optimal: bool,
}

impl MilpSolution {
    pub fn support(&self) -> Support {
        Support::from_mask(&self.z)
    }
}

/// Cuts in intercept form: `value_k + grad_k'(z - anchor_k) = intercept_k + grad_k'z`.
struct AffineModel {
    intercepts: Vec<f64>,
    grads: Vec<Vec<f64>>,
}

impl AffineModel {
    fn new(cuts: &[Cut]) -> Self {
        AffineModel {
            intercepts: cuts.iter().map(Cut::intercept).collect(),
            grads: cuts.iter().map(|c| c.gradient.clone()).collect(),
        }
    }

    fn eval_relaxed(&self, k: usize, z: &[f64]) -> f64 {
        self.intercepts[k] + self.grads[k].iter().zip(z).map(|(g, v)| g * v).sum::<f64>()
    }

    fn eval(&self, z: &[bool]) -> f64 {
        self.intercepts
            .iter()
            .zip(&self.grads)
            .map(|(a, g)| a + g.iter().zip(z).filter(|(_, &b)| b).map(|(gi, _)| gi).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl MasterProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.cuts.is_empty() {
            return Err(Error::invalid("master problem needs at least one cut"));
        }
        if self.cuts.iter().any(|c| c.gradient.len() != self.p || c.anchor.len() != self.p) {
            return Err(Error::invalid("cut dimension differs from p"));
        }
        if self
            .limits
            .iter()
            .any(|l| l.indices.max_index().is_some_and(|m| m >= self.p) || l.min > l.max)
        {
            return Err(Error::invalid("subset limit out of range"));
        }
        Ok(())
    }

    pub fn is_feasible(&self, z: &[bool]) -> bool {
        z.len() == self.p
            && z.iter().filter(|&&b| b).count() <= self.s
            && self.limits.iter().all(|l| l.satisfied_by(z))
    }

    /// `max_k (value_k + grad_k'(z - anchor_k))`.
    pub fn model_value(&self, z: &[bool]) -> f64 {
        AffineModel::new(self.cuts).eval(z)
    }
}

/// Exact optimum by enumerating every support of size at most `s`. Larger
/// supports are visited first, so ties favor full-size supports, then
/// lexicographic order.
pub fn solve_master_exhaustive(mp: &MasterProblem<'_>, cap: u128) -> Result<MilpSolution> {
    mp.validate()?;
    let count = binomial(mp.p, mp.s).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let model = AffineModel::new(mp.cuts);
    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut visited = 0;
    for size in (0..=mp.s.min(mp.p)).rev() {
        for support in Combinations::new(mp.p, size) {
            visited += 1;
            let z = support.to_mask(mp.p);
            if !mp.limits.iter().all(|l| l.satisfied_by(&z)) {
                continue;
            }
            let eta = model.eval(&z);
            if best.as_ref().is_none_or(|(b, _)| eta < *b) {
                best = Some((eta, z));
            }
        }
    }
    let (eta, z) = best.ok_or(Error::Infeasible)?;
    Ok(MilpSolution { z, eta, node_count: visited, proven_optimal: true })
}

/// Solves the master problem exactly: exhaustively when there are at most
/// [`EXHAUSTIVE_FALLBACK`] size-`s` supports, otherwise by branch-and-bound.
/// `hint` is an optional feasible point used as the initial incumbent.
pub fn solve_master(mp: &MasterProblem<'_>, hint: Option<&[bool]>) -> Result<MilpSolution> {
    solve_master_limited(mp, hint, DEFAULT_MAX_NODES)
}

/// [`solve_master`] with a branch-and-bound node budget. When the budget
/// runs out the best point found is returned with `proven_optimal` false.
pub fn solve_master_limited(mp: &MasterProblem<'_>, hint: Option<&[bool]>, max_nodes: usize) -> Result<MilpSolution> {
    match binomial(mp.p, mp.s) {
        Some(c) if c <= EXHAUSTIVE_FALLBACK => solve_master_exhaustive(mp, EXHAUSTIVE_CAP),
        _ => solve_master_bnb_limited(mp, hint, max_nodes),
    }
}

/// Variable fixings for a node: `None` free, `Some(v)` fixed to `v`.
pub type Fixings = Vec<Option<bool>>;

struct Node {
    bound: f64,
    id: usize,
    fixed: Fixings,
    relaxed: Vec<f64>,
    /// Cuts binding at the node's relaxation.
    cuts: Vec<usize>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.id.cmp(&self.id))
    }
}

/// Relaxation solution at a node.
#[derive(Clone, Debug)]
pub struct Relaxation {
    /// Lower bound on `eta` over the node.
    pub bound: f64,
    /// Relaxed `z` (fixed coordinates at their fixed value).
    pub z: Vec<f64>,
}

/// Branch-and-bound without the exhaustive shortcut.
pub fn solve_master_bnb(mp: &MasterProblem<'_>, hint: Option<&[bool]>) -> Result<MilpSolution> {
    solve_master_bnb_limited(mp, hint, DEFAULT_MAX_NODES)
}

pub fn solve_master_bnb_limited(
    mp: &MasterProblem<'_>,
    hint: Option<&[bool]>,
    max_nodes: usize,
) -> Result<MilpSolution> {
    let search = branch_and_bound(mp, hint, max_nodes, None)?;
    let (eta, z) = search.incumbent.ok_or(Error::Infeasible)?;
    Ok(MilpSolution { z, eta, node_count: search.node_count, proven_optimal: search.exhausted })
}

/// Outcome of [`search_master`].
#[derive(Clone, Debug, PartialEq)]
pub enum CutoffSearch {
    /// A feasible point whose model value is below the cutoff. The search
    /// stops at the first one found, so it need not be the minimizer.
    Below { solution: MilpSolution, lower_bound: f64 },
    /// Every feasible point has model value at least `lower_bound`, which is
    /// at least the cutoff up to pruning slack.
    NoneBelow { lower_bound: f64, node_count: usize },
    /// The node budget ran out first; `lower_bound` is still valid.
    Unresolved { lower_bound: f64, node_count: usize },
}

/// Looks for any feasible point with model value below `cutoff`, or proves
/// there is none. Cheaper than [`solve_master`] because subtrees whose bound
/// reaches the cutoff are pruned immediately. Errors with `Infeasible` when
/// no feasible point exists at all.
pub fn search_master(
    mp: &MasterProblem<'_>,
    hint: Option<&[bool]>,
    cutoff: f64,
    max_nodes: usize,
) -> Result<CutoffSearch> {
    let exhaustive = binomial(mp.p, mp.s).is_some_and(|c| c <= EXHAUSTIVE_FALLBACK);
    if exhaustive {
        let sol = solve_master_exhaustive(mp, EXHAUSTIVE_CAP)?;
        return Ok(if sol.eta < cutoff {
            CutoffSearch::Below { lower_bound: sol.eta, solution: sol }
        } else {
            CutoffSearch::NoneBelow { lower_bound: sol.eta, node_count: sol.node_count }
        });
    }
    let search = branch_and_bound(mp, hint, max_nodes, Some(cutoff))?;
    match search.incumbent {
        Some((eta, z)) if eta < cutoff => Ok(CutoffSearch::Below {
            solution: MilpSolution { z, eta, node_count: search.node_count, proven_optimal: false },
            lower_bound: search.lower_bound,
        }),
        _ if !search.exhausted => {
            Ok(CutoffSearch::Unresolved { lower_bound: search.lower_bound, node_count: search.node_count })
        }
        Some(_) => Ok(CutoffSearch::NoneBelow { lower_bound: search.lower_bound, node_count: search.node_count }),
        None if search.lower_bound.is_finite() => {
            Ok(CutoffSearch::NoneBelow { lower_bound: search.lower_bound, node_count: search.node_count })
        }
        None => Err(Error::Infeasible),
    }
}

struct Search {
    incumbent: Option<(f64, Vec<bool>)>,
    node_count: usize,
    /// Whether the tree was fully explored (or, with a cutoff, stopped
    /// because a point below it was found).
    exhausted: bool,
    /// Proven lower bound on the model over the feasible set.
    lower_bound: f64,
}

/// Best-first branch-and-bound. With a cutoff, subtrees are pruned against
/// `min(incumbent, cutoff)` and the search returns as soon as the incumbent
/// drops below the cutoff.
fn branch_and_bound(
    mp: &MasterProblem<'_>,
    hint: Option<&[bool]>,
    max_nodes: usize,
    cutoff: Option<f64>,
) -> Result<Search> {
    mp.validate()?;
    let model = AffineModel::new(mp.cuts);
    let floor = global_floor(mp, &model);
    let mut incumbent: Option<(f64, Vec<bool>)> = None;
    let offer = |z: Vec<bool>, incumbent: &mut Option<(f64, Vec<bool>)>| {
        if mp.is_feasible(&z) {
            let eta = model.eval(&z);
            if incumbent.as_ref().is_none_or(|(b, _)| eta < *b) {
                *incumbent = Some((eta, z));
            }
        }
    };
    let cutoff_value = cutoff.unwrap_or(f64::INFINITY);
    let found = |incumbent: &Option<(f64, Vec<bool>)>| cutoff.is_some() && incumbent.as_ref().is_some_and(|(e, _)| *e < cutoff_value);
    let threshold = |incumbent: &Option<(f64, Vec<bool>)>| {
        let t = incumbent.as_ref().map_or(cutoff_value, |(e, _)| e.min(cutoff_value));
        if t.is_finite() { t - prune_slack(t) } else { t }
    };
    // Smallest bound among subtrees discarded against the threshold.
    let mut fathomed = f64::INFINITY;
    let finish = |incumbent: Option<(f64, Vec<bool>)>, node_count, exhausted, open: f64, fathomed: f64| {
        let inc = incumbent.as_ref().map_or(f64::INFINITY, |(e, _)| *e);
        Search { incumbent, node_count, exhausted, lower_bound: open.min(fathomed).min(inc) }
    };
    if let Some(h) = hint {
        if h.len() == mp.p {
            offer(h.to_vec(), &mut incumbent);
        }
    }
    if found(&incumbent) {
        let bound = root_bound(mp, &model, floor)?;
        return Ok(finish(incumbent, 1, true, bound, fathomed));
    }

    let root_fixed: Fixings = vec![None; mp.p];
    let Some((root, root_cuts)) = node_relaxation(mp, &model, floor, &root_fixed, &[])? else {
        return Ok(finish(incumbent, 1, true, f64::INFINITY, fathomed));
    };
    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    heap.push(Node { bound: root.bound, id: next_id, fixed: root_fixed, relaxed: root.z, cuts: root_cuts });
    next_id += 1;
    let mut node_count = 1;

    while let Some(node) = heap.pop() {
        if node.bound >= threshold(&incumbent) {
            fathomed = fathomed.min(node.bound);
            continue;
        }
        offer(round_relaxed(mp, &node.fixed, &node.relaxed), &mut incumbent);
        if found(&incumbent) {
            return Ok(finish(incumbent, node_count, true, node.bound, fathomed));
        }

        let branch = pick_branch(&node.fixed, &node.relaxed);
        let Some(var) = branch else {
            // Integral relaxation: its rounding is optimal for the subtree.
            let z: Vec<bool> = node.relaxed.iter().map(|&v| v > 0.5).collect();
            offer(z, &mut incumbent);
            fathomed = fathomed.min(node.bound);
            if found(&incumbent) {
                return Ok(finish(incumbent, node_count, true, node.bound, fathomed));
            }
            continue;
        };
        for value in [true, false] {
            let mut fixed = node.fixed.clone();
            fixed[var] = Some(value);
            if !fixings_consistent(mp, &fixed) {
                continue;
            }
            if node_count >= max_nodes {
                let open = heap.iter().map(|n| n.bound).fold(node.bound, f64::min);
                return Ok(finish(incumbent, node_count, false, open, fathomed));
            }
            node_count += 1;
            if let Some((relax, cuts)) = node_relaxation(mp, &model, floor, &fixed, &node.cuts)? {
                if relax.bound < threshold(&incumbent) {
                    heap.push(Node { bound: relax.bound, id: next_id, fixed, relaxed: relax.z, cuts });
                    next_id += 1;
                } else {
                    fathomed = fathomed.min(relax.bound);
                }
            }
        }
    }
    Ok(finish(incumbent, node_count, true, f64::INFINITY, fathomed))
}

fn root_bound(mp: &MasterProblem<'_>, model: &AffineModel, floor: f64) -> Result<f64> {
    Ok(node_relaxation(mp, model, floor, &vec![None; mp.p], &[])?.map_or(f64::INFINITY, |(r, _)| r.bound))
}

fn prune_slack(incumbent: f64) -> f64 {
    1e-12 * incumbent.abs().max(1.0)
}

/// `max_k min_{z in [0,1]^p, sum z <= s} cut_k(z)`: a lower bound on `eta`
/// over every node.
fn global_floor(mp: &MasterProblem<'_>, model: &AffineModel) -> f64 {
    model
        .intercepts
        .iter()
        .zip(&model.grads)
        .map(|(a, g)| {
            let mut neg: Vec<f64> = g.iter().copied().filter(|v| *v < 0.0).collect();
            neg.sort_by(f64::total_cmp);
            a + neg.iter().take(mp.s).sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn fixings_consistent(mp: &MasterProblem<'_>, fixed: &Fixings) -> bool {
    let ones = fixed.iter().filter(|f| **f == Some(true)).count();
    if ones > mp.s {
        return false;
    }
    mp.limits.iter().all(|l| {
        let (mut on, mut free) = (0, 0);
        for &i in l.indices.indices() {
            match fixed[i] {
                Some(true) => on += 1,
                None => free += 1,
                Some(false) => {}
            }
        }
        on <= l.max && on + free >= l.min
    })
}

fn pick_branch(fixed: &Fixings, relaxed: &[f64]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, (&v, f)) in relaxed.iter().zip(fixed).enumerate() {
        if f.is_some() {
            continue;
        }
        let frac = (v - v.round()).abs();
        if frac <= INTEGRALITY_TOL {
            continue;
        }
        let dist = (v - 0.5).abs();
        if best.is_none_or(|(d, _)| dist < d) {
            best = Some((dist, i));
        }
    }
    best.map(|(_, i)| i)
}

/// Keeps fixed ones, then fills up to `s` with the largest relaxed values.
fn round_relaxed(mp: &MasterProblem<'_>, fixed: &Fixings, relaxed: &[f64]) -> Vec<bool> {
    let mut z: Vec<bool> = fixed.iter().map(|f| *f == Some(true)).collect();
    let mut free: Vec<usize> = (0..mp.p).filter(|&i| fixed[i].is_none()).collect();
    free.sort_by(|&a, &b| relaxed[b].total_cmp(&relaxed[a]).then(a.cmp(&b)));
    let room = mp.s.saturating_sub(z.iter().filter(|&&b| b).count());
    for &i in free.iter().take(room) {
        if relaxed[i] > INTEGRALITY_TOL {
            z[i] = true;
        }
    }
    z
}

/// LP relaxation bound at a node, or `None` if the node is infeasible.
pub fn relaxation_bound(mp: &MasterProblem<'_>, fixed: &Fixings) -> Result<Option<Relaxation>> {
    mp.validate()?;
    if fixed.len() != mp.p {
        return Err(Error::invalid("fixings length differs from p"));
    }
    if !fixings_consistent(mp, fixed) {
        return Ok(None);
    }
    let model = AffineModel::new(mp.cuts);
    Ok(node_relaxation(mp, &model, global_floor(mp, &model), fixed, &[])?.map(|(r, _)| r))
}

/// Cuts enter the node LP lazily. Starting from `seed`, the most violated
/// cuts are added until the relaxed point satisfies every cut, so the bound
/// equals the full relaxation. Also returns the cuts binding at the optimum,
/// which seed the children.
fn node_relaxation(
    mp: &MasterProblem<'_>,
    model: &AffineModel,
    floor: f64,
    fixed: &Fixings,
    seed: &[usize],
) -> Result<Option<(Relaxation, Vec<usize>)>> {
    let ncuts = model.intercepts.len();
    let mut in_set = vec![false; ncuts];
    let mut active = Vec::with_capacity(seed.len() + CUTS_PER_ROUND);
    for &k in seed {
        if k < ncuts && !in_set[k] {
            in_set[k] = true;
            active.push(k);
        }
    }
    loop {
        let Some(relax) = restricted_relaxation(mp, model, floor, fixed, &active)? else {
            return Ok(None);
        };
        let tol = 1e-9 * relax.bound.abs().max(1.0);
        let mut violated: Vec<(f64, usize)> = (0..ncuts)
            .filter(|&k| !in_set[k])
            .map(|k| (model.eval_relaxed(k, &relax.z) - relax.bound, k))
            .filter(|(v, _)| *v > tol)
            .collect();
        if violated.is_empty() {
            let binding = active.into_iter().filter(|&k| model.eval_relaxed(k, &relax.z) >= relax.bound - tol).collect();
            return Ok(Some((relax, binding)));
        }
        violated.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, k) in violated.iter().take(CUTS_PER_ROUND) {
            in_set[k] = true;
            active.push(k);
        }
    }
}

/// LP relaxation at a node using only the cuts in `cuts`.
fn restricted_relaxation(
    mp: &MasterProblem<'_>,
    model: &AffineModel,
    floor: f64,
    fixed: &Fixings,
    cuts: &[usize],
) -> Result<Option<Relaxation>> {
    let free: Vec<usize> = (0..mp.p).filter(|&i| fixed[i].is_none()).collect();
    let nf = free.len();
    let w_col = nf;
    let ncols = nf + 1;
    let ones_fixed = |idx: &[usize]| idx.iter().filter(|&&i| fixed[i] == Some(true)).count();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();

    // cut_k: sum_free g_ki z_i - w <= floor - intercept_k - sum_{fixed 1} g_ki
    for &k in cuts {
        let (a, g) = (model.intercepts[k], &model.grads[k]);
        let mut row = vec![0.0; ncols];
        for (c, &i) in free.iter().enumerate() {
            row[c] = g[i];
        }
        row[w_col] = -1.0;
        let fixed_part: f64 = (0..mp.p).filter(|&i| fixed[i] == Some(true)).map(|i| g[i]).sum();
        rows.push(row);
        rhs.push(floor - a - fixed_part);
    }
    // cardinality
    let all: Vec<usize> = (0..mp.p).collect();
    let card_room = mp.s as f64 - ones_fixed(&all) as f64;
    let mut row = vec![0.0; ncols];
    for c in 0..nf {
        row[c] = 1.0;
    }
    rows.push(row);
    rhs.push(card_room);
    for l in mp.limits {
        let on = ones_fixed(l.indices.indices()) as f64;
        let mut row = vec![0.0; ncols];
        let mut any = false;
        for (c, &i) in free.iter().enumerate() {
            if l.indices.contains(i) {
                row[c] = 1.0;
                any = true;
            }
        }
        if !any {
            if on < l.min as f64 || on > l.max as f64 {
                return Ok(None);
            }
            continue;
        }
        rows.push(row.clone());
        rhs.push(l.max as f64 - on);
        if l.min as f64 > on {
            rows.push(row.iter().map(|v| -v).collect());
            rhs.push(on - l.min as f64);
        }
    }
    let mut cost = vec![0.0; ncols];
    cost[w_col] = 1.0;
    let mut upper = vec![1.0; ncols];
    upper[w_col] = f64::INFINITY;

    let lp = BoundedLp { a: rows, b: rhs, c: cost, upper };
    match lp.solve()? {
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Optimal { x, objective } => {
            let mut z: Vec<f64> = fixed.iter().map(|f| if *f == Some(true) { 1.0 } else { 0.0 }).collect();
            for (c, &i) in free.iter().enumerate() {
                z[i] = x[c].clamp(0.0, 1.0);
            }
            Ok(Some(Relaxation { bound: floor + objective, z }))
        }
    }
}

/// `min c'x  s.t.  A x <= b,  0 <= x <= upper`, with `c >= 0`.
pub(crate) struct BoundedLp {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
}

impl BoundedLp {
    /// Dual simplex on a dense tableau, starting from the all-slack basis with
    /// every structural variable at its lower bound. Pivot rules: most
    /// violated row, then Bland's rule after repeated degenerate pivots.
    ///
    /// Zero-cost bounded columns get a tiny positive cost so the dual is not
    /// degenerate (master LPs price only the epigraph variable). The reported
    /// objective subtracts the largest possible effect of that perturbation,
    /// so it never exceeds the true optimum.
    pub fn solve(&self) -> Result<LpOutcome> {
        let m = self.a.len();
        let n = self.c.len();
        let width = n + m;
        if self.c.iter().any(|&c| c < 0.0) {
            return Err(Error::Simplex("costs must be nonnegative"));
        }
        // tableau = B^-1 [A | I], beta = B^-1 b
        let mut tab: Vec<Vec<f64>> = self
            .a
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let mut t = row.clone();
                t.resize(width, 0.0);
                t[n + r] = 1.0;
                t
            })
            .collect();
        let mut beta = self.b.clone();
        let scale = self.c.iter().fold(1.0_f64, |a, &c| a.max(c));
        let mut cost = self.c.clone();
        let mut slack = 0.0;
        for (j, c) in cost.iter_mut().enumerate() {
            if *c == 0.0 && self.upper[j].is_finite() && self.upper[j] > 0.0 {
                let eps = COST_PERTURBATION * scale * (1.0 + (j as f64 * 0.618_033_988_75).fract());
                *c = eps;
                slack += eps * self.upper[j];
            }
        }
        let mut reduced = cost.clone();
        reduced.resize(width, 0.0);
        let mut upper = self.upper.clone();
        upper.resize(width, f64::INFINITY);
        let mut basis: Vec<usize> = (n..width).collect();
        let mut at_upper = vec![false; width];
        let mut is_basic = vec![false; width];
        for &b in &basis {
            is_basic[b] = true;
        }

        let mut bland = false;
        let mut degenerate_run = 0;
        let max_iters = 50 * width + 100;
        for _ in 0..max_iters {
            // basic values
            let mut xb = beta.clone();
            for j in 0..width {
                if at_upper[j] {
                    for r in 0..m {
                        xb[r] -= tab[r][j] * upper[j];
                    }
                }
            }
            // leaving row
            let mut leave: Option<(usize, bool, f64)> = None; // (row, below, violation)
            for r in 0..m {
                let var = basis[r];
                let (viol, below) = if xb[r] < -FEASIBILITY_TOL {
                    (-xb[r], true)
                } else if xb[r] > upper[var] + FEASIBILITY_TOL {
                    (xb[r] - upper[var], false)
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some((lr, _, lv)) => {
                        if bland {
                            var < basis[lr]
                        } else {
                            viol > lv
                        }
                    }
                };
                if better {
                    leave = Some((r, below, viol));
                }
            }
            let Some((r, below, _)) = leave else {
                let mut x = vec![0.0; n];
                for j in 0..n {
                    if at_upper[j] {
                        x[j] = upper[j];
                    }
                }
                for (row, &var) in basis.iter().enumerate() {
                    if var < n {
                        x[var] = xb[row];
                    }
                }
                let perturbed: f64 = x.iter().zip(&cost).map(|(a, b)| a * b).sum();
                let objective = (perturbed - slack).max(0.0);
                return Ok(LpOutcome::Optimal { x, objective });
            };

            // entering column by the dual ratio test
            let row = &tab[r];
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..width {
                if is_basic[j] || upper[j] == 0.0 {
                    continue;
                }
                let alpha = row[j];
                let eligible = if below {
                    (!at_upper[j] && alpha < -PIVOT_TOL) || (at_upper[j] && alpha > PIVOT_TOL)
                } else {
                    (!at_upper[j] && alpha > PIVOT_TOL) || (at_upper[j] && alpha < -PIVOT_TOL)
                };
                if !eligible {
                    continue;
                }
                let ratio = reduced[j].abs() / alpha.abs();
                let better = match enter {
                    None => true,
                    Some((ej, er)) => {
                        ratio < er - 1e-15 || (ratio <= er + 1e-15 && (bland && j < ej || !bland && alpha.abs() > tab[r][ej].abs()))
                    }
                };
                if better {
                    enter = Some((j, ratio));
                }
            }
            let Some((q, ratio)) = enter else {
                return Ok(LpOutcome::Infeasible);
            };
            if ratio <= 1e-14 {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_SWITCH {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }

            // pivot
            let leaving = basis[r];
            let piv = tab[r][q];
            for v in tab[r].iter_mut() {
                *v /= piv;
            }
            beta[r] /= piv;
            let pivot_row = tab[r].clone();
            let pivot_beta = beta[r];
            for i in 0..m {
                if i == r {
                    continue;
                }
                let f = tab[i][q];
                if f != 0.0 {
                    for (t, p) in tab[i].iter_mut().zip(&pivot_row) {
                        *t -= f * p;
                    }
                    beta[i] -= f * pivot_beta;
                }
            }
            let f = reduced[q];
            if f != 0.0 {
                for (d, p) in reduced.iter_mut().zip(&pivot_row) {
                    *d -= f * p;
                }
            }
            basis[r] = q;
            is_basic[q] = true;
            at_upper[q] = false;
            is_basic[leaving] = false;
            at_upper[leaving] = !below;
        }
        Err(Error::Simplex("iteration limit reached"))
    }
}
