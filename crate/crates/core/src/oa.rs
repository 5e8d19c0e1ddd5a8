//! Outer approximation for the penalized support problem.
//!
//! For weights `z in (0,1]^p` let
//!
//! ```text
//! c(z) = min_{||beta|| <= r}  fit(beta) + k * sum_i beta_i^2 / z_i
//! ```
//!
//! with `k = lambda/2n` (least squares) or `lambda/n` (hinge). `c` is convex
//! and nonincreasing in every `z_i`, and by Danskin's theorem
//! `dc/dz_i = -k * beta_i^2 / z_i^2` at the inner minimizer. Binary iterates
//! are lifted into the interior by replacing every zero with a small uniform
//! draw, and each lifted evaluation yields a global affine under-estimator
//! (a [`Cut`]). The master problem over the cuts is solved exactly by
//! [`crate::milp`].

use std::collections::HashSet;

use log::debug;
use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::milp::{search_master, solve_master_limited, CutoffSearch, MasterProblem, SubsetLimit, DEFAULT_MAX_NODES};
use crate::solvers::{solve_weighted, support_penalized_value, InnerSolver, Objective, WeightedProblem};
use crate::support::Support;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OaConfig {
    pub lambda: f64,
    /// Zero coordinates are lifted to `Unif[a, b]`.
    pub a: f64,
    pub b: f64,
    /// Relative gap `|c(z) - eta| / c(z)` required to stop, with `c(z)` the
    /// value at the binary iterate.
    pub tol: f64,
    pub max_oa_iters: usize,
    /// Also require that the master returns a support that has already been
    /// evaluated, which makes the returned support optimal for the
    /// under-estimator rather than merely within `tol`. Off by default; it
    /// can cost many more iterations on large `p`.
    pub exact: bool,
    /// Branch-and-bound node budget per master solve. Running out ends the
    /// solve as not converged.
    pub max_master_nodes: usize,
}

impl OaConfig {
    pub fn new(lambda: f64) -> Self {
        OaConfig {
            lambda,
            a: 0.001,
            b: 0.005,
            tol: 0.005,
            max_oa_iters: 500,
            exact: false,
            max_master_nodes: DEFAULT_MAX_NODES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if !(0.0 < self.a && self.a <= self.b && self.b < 1.0) {
            return Err(Error::invalid("need 0 < a <= b < 1"));
        }
        if !(self.tol > 0.0) || self.max_oa_iters == 0 || self.max_master_nodes == 0 {
            return Err(Error::invalid("tol, max_oa_iters and max_master_nodes must be positive"));
        }
        Ok(())
    }
}

/// `eta >= value + gradient'(z - anchor)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl Cut {
    /// `value - gradient'anchor`.
    pub fn intercept(&self) -> f64 {
        self.value - self.gradient.iter().zip(&self.anchor).map(|(g, a)| g * a).sum::<f64>()
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.value
            + self
                .gradient
                .iter()
                .zip(&self.anchor)
                .zip(z)
                .map(|((g, a), zi)| g * (zi - a))
                .sum::<f64>()
    }

    /// The binary point this cut was generated at (lifted coordinates are
    /// strictly below one).
    pub fn origin(&self) -> Support {
        Support::from_mask(&self.anchor.iter().map(|&a| a == 1.0).collect::<Vec<_>>())
    }
}

/// `zhat_i = 1` where `z_i` is set, `Unif[a, b]` elsewhere.
pub fn add_noise<R: Rng + ?Sized>(z: &[bool], cfg: &OaConfig, rng: &mut R) -> Vec<f64> {
    z.iter()
        .map(|&on| if on { 1.0 } else if cfg.a == cfg.b { cfg.a } else { rng.random_range(cfg.a..=cfg.b) })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub beta: DVector<f64>,
}

impl Evaluation {
    pub fn cut(&self, zhat: &[f64]) -> Cut {
        Cut { value: self.value, gradient: self.gradient.clone(), anchor: zhat.to_vec() }
    }
}

/// `c(zhat)` and its gradient.
pub fn penalized_value_and_gradient(
    objective: &Objective,
    zhat: &[f64],
    lambda: f64,
    radius: f64,
    solver: &InnerSolver,
    warm: Option<&DVector<f64>>,
) -> Result<Evaluation> {
    let prob = WeightedProblem { objective, weights: zhat, lambda, radius };
    let sol = solve_weighted(&prob, solver, warm)?;
    let k = objective.penalty_scale(lambda);
    let gradient = sol.beta.iter().zip(zhat).map(|(b, z)| -k * b * b / (z * z)).collect();
    Ok(Evaluation { value: sol.objective, gradient, beta: sol.beta })
}

/// Everything an OA run needs besides constraints and the cut pool.
#[derive(Clone, Copy, Debug)]
pub struct OaProblem<'a> {
    pub objective: &'a Objective,
    pub s: usize,
    pub radius: f64,
    pub config: &'a OaConfig,
    pub solver: &'a InnerSolver,
}

impl OaProblem<'_> {
    fn evaluate<R: Rng + ?Sized>(
        &self,
        z: &[bool],
        warm: Option<&DVector<f64>>,
        rng: &mut R,
    ) -> Result<(Vec<f64>, Evaluation)> {
        let zhat = add_noise(z, self.config, rng);
        let ev = penalized_value_and_gradient(
            self.objective,
            &zhat,
            self.config.lambda,
            self.radius,
            self.solver,
            warm,
        )?;
        Ok((zhat, ev))
    }

    /// `c` at a binary point: the restricted problem with unit weights.
    fn binary_value(&self, support: &Support) -> Result<f64> {
        support_penalized_value(self.objective, support, self.config.lambda, self.radius, self.solver)
    }
}

/// Cuts at the one-swap neighbors of `s_hat1` that bring in one of the top
/// `m_pct` percent of features by `|X'y|` (members of `s_hat1` excluded from
/// the pool).
pub fn warmstart_cuts<R: Rng + ?Sized>(
    problem: &OaProblem<'_>,
    s_hat1: &Support,
    m_pct: f64,
    rng: &mut R,
) -> Result<Vec<Cut>> {
    if !(m_pct > 0.0 && m_pct <= 100.0) {
        return Err(Error::invalid("m_pct must lie in (0, 100]"));
    }
    let p = problem.objective.p();
    let corr = problem.objective.correlations();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| corr[j].abs().total_cmp(&corr[i].abs()).then(i.cmp(&j)));
    let take = (m_pct / 100.0 * p as f64).floor() as usize;
    let pool: Vec<usize> = order[..take.min(p)].iter().copied().filter(|&i| !s_hat1.contains(i)).collect();

    let mut cuts = Vec::with_capacity(pool.len() * s_hat1.len());
    let mut warm: Option<DVector<f64>> = None;
    for &drop in s_hat1.indices() {
        for &add in &pool {
            let mut z = s_hat1.to_mask(p);
            z[drop] = false;
            z[add] = true;
            let (zhat, ev) = problem.evaluate(&z, warm.as_ref(), rng)?;
            cuts.push(ev.cut(&zhat));
            warm = Some(ev.beta);
        }
    }
    Ok(cuts)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OaIteration {
    pub eta: f64,
    /// `c` at the noisy lift.
    pub lifted_value: f64,
    /// `c` at the binary iterate.
    pub value: f64,
    pub gap: f64,
    /// Nodes the master solve visited.
    pub master_nodes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OaOutcome {
    pub support: Support,
    /// `c` at the returned binary support.
    pub penalized_objective: f64,
    /// `c` at the noisy lift of the returned support.
    pub lifted_objective: f64,
    /// Master value at termination, a lower bound on `c` over the feasible set.
    pub lower_bound: f64,
    pub gap: f64,
    pub iterations: usize,
    pub trace: Vec<OaIteration>,
}

/// Exclusion constraints `sum_{i in S} z_i <= s - 1`.
pub fn exclusion_limits(exclusions: &[Support]) -> Vec<SubsetLimit> {
    exclusions.iter().map(SubsetLimit::exclusion).collect()
}

fn relative_gap(eta: f64, value: f64) -> f64 {
    (eta - value).abs() / value.max(f64::MIN_POSITIVE)
}

/// Outer approximation under `sum z <= s` and `limits`.
///
/// `pool` holds previously generated cuts; they stay valid under any
/// constraints, so new cuts are appended for reuse by later solves. If
/// `init` has not been evaluated yet its cut is added first.
pub fn oa_solve<R: Rng + ?Sized>(
    problem: &OaProblem<'_>,
    limits: &[SubsetLimit],
    pool: &mut Vec<Cut>,
    init: &Support,
    rng: &mut R,
) -> Result<OaOutcome> {
    problem.config.validate()?;
    let p = problem.objective.p();
    if problem.s == 0 || problem.s > p {
        return Err(Error::invalid(format!("need 1 <= s <= p, got s = {}", problem.s)));
    }
    if init.max_index().is_some_and(|m| m >= p) {
        return Err(Error::invalid("initial support out of range"));
    }
    let mut evaluated: HashSet<Support> = pool.iter().map(Cut::origin).collect();
    let mut warm: Option<DVector<f64>> = None;
    if !evaluated.contains(init) {
        let (zhat, ev) = problem.evaluate(&init.to_mask(p), None, rng)?;
        pool.push(ev.cut(&zhat));
        evaluated.insert(init.clone());
        warm = Some(ev.beta);
    }

    let mut trace = Vec::new();
    // Best evaluated point under `limits`: (binary value, lifted value, z).
    let mut incumbent: Option<(f64, f64, Vec<bool>)> = None;
    let mut lower = f64::NEG_INFINITY;
    let finish = |(value, lifted, z): (f64, f64, Vec<bool>), lower: f64, trace: Vec<OaIteration>| OaOutcome {
        support: Support::from_mask(&z),
        penalized_objective: value,
        lifted_objective: lifted,
        lower_bound: lower,
        gap: relative_gap(lower, value),
        iterations: trace.len(),
        trace,
    };
    for _ in 0..problem.config.max_oa_iters {
        let mp = MasterProblem { p, s: problem.s, cuts: pool, limits };
        // Without `exact`, the master only has to produce a point that beats
        // the incumbent by more than `tol`, or prove that none exists.
        let cutoff = match &incumbent {
            Some((v, _, _)) if !problem.config.exact => Some(v - problem.config.tol * v.abs()),
            _ => None,
        };
        let (sol, eta) = match cutoff {
            None => {
                let hint = incumbent.as_ref().map(|(_, _, z)| z.as_slice());
                let sol = solve_master_limited(&mp, hint, problem.config.max_master_nodes)?;
                if !sol.proven_optimal {
                    if let Some(best) = incumbent {
                        let gap = relative_gap(lower, best.0);
                        return Err(Error::NotConverged { iterations: trace.len(), gap, incumbent: Box::new(finish(best, lower, trace)) });
                    }
                }
                let eta = sol.eta;
                (sol, eta)
            }
            Some(c) => match search_master(&mp, None, c, problem.config.max_master_nodes)? {
                CutoffSearch::Unresolved { lower_bound, .. } => {
                    lower = lower.max(lower_bound);
                    let best = incumbent.expect("a cutoff needs an incumbent");
                    let gap = relative_gap(lower, best.0);
                    debug!("oa master ran out of nodes at gap {gap:.2e}");
                    return Err(Error::NotConverged { iterations: trace.len(), gap, incumbent: Box::new(finish(best, lower, trace)) });
                }
                CutoffSearch::Below { solution, lower_bound } => (solution, lower_bound),
                CutoffSearch::NoneBelow { lower_bound, node_count } => {
                    lower = lower.max(lower_bound);
                    let best = incumbent.expect("a cutoff needs an incumbent");
                    trace.push(OaIteration {
                        eta: lower,
                        lifted_value: best.1,
                        value: best.0,
                        gap: relative_gap(lower, best.0),
                        master_nodes: node_count,
                    });
                    debug!("oa certified: lower {lower:.6e} incumbent {:.6e}", best.0);
                    return Ok(finish(best, lower, trace));
                }
            },
        };
        lower = lower.max(eta);
        let support = sol.support();
        let repeat = evaluated.contains(&support);

        let (zhat, ev) = problem.evaluate(&sol.z, warm.as_ref(), rng)?;
        let value = problem.binary_value(&support)?;
        pool.push(ev.cut(&zhat));
        evaluated.insert(support.clone());
        if incumbent.as_ref().is_none_or(|(v, _, _)| value < *v) {
            incumbent = Some((value, ev.value, sol.z.clone()));
        }
        warm = Some(ev.beta);

        if problem.config.exact {
            // Certify on the master minimizer itself.
            let gap = relative_gap(sol.eta, value);
            trace.push(OaIteration { eta: sol.eta, lifted_value: ev.value, value, gap, master_nodes: sol.node_count });
            debug!("oa iter {}: eta {:.6e} c {value:.6e} gap {gap:.2e} {support}", trace.len(), sol.eta);
            if gap <= problem.config.tol && repeat {
                return Ok(finish((value, ev.value, sol.z), sol.eta, trace));
            }
        } else {
            let best = incumbent.clone().expect("just set");
            let gap = relative_gap(lower, best.0);
            trace.push(OaIteration { eta: lower, lifted_value: ev.value, value, gap, master_nodes: sol.node_count });
            debug!("oa iter {}: lower {lower:.6e} c {value:.6e} gap {gap:.2e} {support}", trace.len());
            if gap <= problem.config.tol {
                return Ok(finish(best, lower, trace));
            }
        }
    }
    let last_gap = trace.last().map_or(f64::INFINITY, |t| t.gap);
    let best = incumbent.expect("at least one iteration");
    Err(Error::NotConverged { iterations: trace.len(), gap: last_gap, incumbent: Box::new(finish(best, lower, trace)) })
}
