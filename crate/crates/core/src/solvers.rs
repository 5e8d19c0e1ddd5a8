//! Ball-constrained inner solvers.
//!
//! Every solve minimizes a loss plus a weighted ridge term over
//! `||beta||_2 <= r`:
//!
//! * least squares: `(1/2n)||y - X beta||^2 + (lambda/2n) sum beta_i^2 / w_i`,
//!   solved by projected gradient descent with a fixed `1/L` step;
//! * hinge: `(1/n) sum max(0, 1 - y_i x_i' beta) + (lambda/n) sum beta_i^2 / w_i`,
//!   solved by projected subgradient with step `1/sqrt(t)`.
//!
//! The iterative solvers are slow to reach the accuracy outer approximation
//! needs, so the defaults are exact alternatives: [`ridge_direct`] for least
//! squares and the interior-point [`hinge_conic`] for the hinge loss.
//!
//! Least-squares solves work from the sufficient statistics `X'X/n`, `X'y/n`
//! and `y'y/n`, so one iteration costs `O(p^2)` regardless of `n`.

use nalgebra::{DMatrix, DVector};

use crate::data::{clip_dataset, clip_features, DataBounds, Dataset};
use crate::error::{Error, Result};
use crate::support::Support;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    LeastSquares,
    Hinge,
}

impl LossKind {
    /// Clips to the bounds the sensitivity of this loss assumes. The hinge
    /// loss keeps its `{-1, +1}` labels.
    pub fn clip(self, d: &Dataset, bounds: DataBounds) -> Dataset {
        match self {
            LossKind::LeastSquares => clip_dataset(d, bounds),
            LossKind::Hinge => clip_features(d, bounds.bx),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::LeastSquares => "least_squares",
            LossKind::Hinge => "hinge",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "least_squares" | "least-squares" | "ls" => Ok(LossKind::LeastSquares),
            "hinge" => Ok(LossKind::Hinge),
            other => Err(Error::invalid(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop when the objective changes by less than this (relative) over a
    /// window of [`STOP_WINDOW`] iterations.
    pub rel_tol: f64,
    /// Cap on power iterations for the Lipschitz estimate.
    pub power_iters: usize,
}

/// Width of the objective-change window used by the stopping rule.
pub const STOP_WINDOW: usize = 5;

/// Multiplicative inflation applied to the power-iteration estimate of `L`.
pub const LIPSCHITZ_INFLATION: f64 = 1.05;

impl SolverOptions {
    pub fn pgd() -> Self {
        SolverOptions { max_iters: 10_000, rel_tol: 1e-8, power_iters: 500 }
    }

    pub fn subgradient() -> Self {
        SolverOptions { max_iters: 5_000, rel_tol: 1e-8, power_iters: 500 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.power_iters == 0 || !(self.rel_tol > 0.0) {
            return Err(Error::invalid("solver options must be positive"));
        }
        Ok(())
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self::pgd()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LsMethod {
    Pgd,
    #[default]
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HingeMethod {
    Subgradient,
    #[default]
    Conic,
}

/// Per-loss solver settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerSolver {
    pub ls_method: LsMethod,
    pub hinge_method: HingeMethod,
    pub pgd: SolverOptions,
    pub subgradient: SolverOptions,
}

impl InnerSolver {
    /// The iterative solvers for both losses.
    pub fn iterative() -> Self {
        InnerSolver { ls_method: LsMethod::Pgd, hinge_method: HingeMethod::Subgradient, ..Self::default() }
    }

    pub fn with_pgd() -> Self {
        InnerSolver { ls_method: LsMethod::Pgd, ..Self::default() }
    }
}

impl Default for InnerSolver {
    fn default() -> Self {
        InnerSolver {
            ls_method: LsMethod::Direct,
            hinge_method: HingeMethod::Conic,
            pgd: SolverOptions::pgd(),
            subgradient: SolverOptions::subgradient(),
        }
    }
}

/// Least-squares sufficient statistics, all scaled by `1/n`.
#[derive(Clone, Debug)]
pub struct Moments {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

impl Moments {
    pub fn from_dataset(d: &Dataset) -> Self {
        let n = d.n() as f64;
        let xt = d.x().transpose();
        Moments {
            gram: &xt * d.x() / n,
            xty: &xt * d.y() / n,
            yty: d.y().norm_squared() / n,
            n: d.n(),
        }
    }

    fn restrict(&self, support: &Support) -> Moments {
        let idx = support.indices();
        Moments {
            gram: DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.gram[(idx[a], idx[b])]),
            xty: DVector::from_fn(idx.len(), |a, _| self.xty[idx[a]]),
            yty: self.yty,
            n: self.n,
        }
    }
}

/// The data side of an inner problem, prepared once and reused across solves.
#[derive(Clone, Debug)]
pub enum Objective {
    LeastSquares(Moments),
    Hinge { x: DMatrix<f64>, y: DVector<f64> },
}

impl Objective {
    pub fn new(d: &Dataset, loss: LossKind) -> Result<Self> {
        if !d.is_finite() {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(match loss {
            LossKind::LeastSquares => Objective::LeastSquares(Moments::from_dataset(d)),
            LossKind::Hinge => {
                if let Some(&bad) = d.y().iter().find(|&&v| v != 1.0 && v != -1.0) {
                    return Err(Error::InvalidLabel(bad));
                }
                Objective::Hinge { x: d.x().clone(), y: d.y().clone() }
            }
        })
    }

    pub fn loss(&self) -> LossKind {
        match self {
            Objective::LeastSquares(_) => LossKind::LeastSquares,
            Objective::Hinge { .. } => LossKind::Hinge,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Objective::LeastSquares(m) => m.n,
            Objective::Hinge { x, .. } => x.nrows(),
        }
    }

    pub fn p(&self) -> usize {
        match self {
            Objective::LeastSquares(m) => m.xty.len(),
            Objective::Hinge { x, .. } => x.ncols(),
        }
    }

    /// The same problem over the columns in `support` only.
    pub fn restrict(&self, support: &Support) -> Objective {
        match self {
            Objective::LeastSquares(m) => Objective::LeastSquares(m.restrict(support)),
            Objective::Hinge { x, y } => Objective::Hinge {
                x: x.select_columns(support.indices()),
                y: y.clone(),
            },
        }
    }

    /// `X'y` (unscaled), used to rank features for warm-start cuts.
    pub fn correlations(&self) -> DVector<f64> {
        match self {
            Objective::LeastSquares(m) => &m.xty * m.n as f64,
            Objective::Hinge { x, y } => x.transpose() * y,
        }
    }

    /// Data-fit term: `(1/2n)||y - X beta||^2` or the mean hinge loss.
    pub fn fit(&self, beta: &DVector<f64>) -> f64 {
        match self {
            Objective::LeastSquares(m) => {
                let v = 0.5 * (m.yty - 2.0 * beta.dot(&m.xty) + beta.dot(&(&m.gram * beta)));
                v.max(0.0)
            }
            Objective::Hinge { x, y } => {
                let margins = x * beta;
                margins
                    .iter()
                    .zip(y.iter())
                    .map(|(m, yi)| (1.0 - yi * m).max(0.0))
                    .sum::<f64>()
                    / y.len() as f64
            }
        }
    }

    /// Converts a fit value to the selection score scale: the residual sum
    /// of squares for least squares, the mean hinge loss for hinge.
    pub fn fit_to_score(&self, fit: f64) -> f64 {
        match self {
            Objective::LeastSquares(m) => 2.0 * m.n as f64 * fit,
            Objective::Hinge { .. } => fit,
        }
    }

    /// Coefficient `k` of the ridge term `k * sum beta_i^2 / w_i`.
    pub fn penalty_scale(&self, lambda: f64) -> f64 {
        match self {
            Objective::LeastSquares(m) => lambda / (2.0 * m.n as f64),
            Objective::Hinge { x, .. } => lambda / x.nrows() as f64,
        }
    }
}

/// Weighted ridge problem over the `radius` ball.
#[derive(Clone, Copy, Debug)]
pub struct WeightedProblem<'a> {
    pub objective: &'a Objective,
    pub weights: &'a [f64],
    pub lambda: f64,
    pub radius: f64,
}

impl WeightedProblem<'_> {
    fn validate(&self) -> Result<()> {
        if self.weights.len() != self.objective.p() {
            return Err(Error::invalid("weight vector length differs from p"));
        }
        if let Some(w) = self.weights.iter().find(|&&w| !(w > 0.0 && w <= 1.0)) {
            return Err(Error::invalid(format!("weights must lie in (0, 1], found {w}")));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be nonnegative and finite"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid("radius must be positive and finite"));
        }
        Ok(())
    }

    pub fn penalty(&self, beta: &DVector<f64>) -> f64 {
        let k = self.objective.penalty_scale(self.lambda);
        k * beta
            .iter()
            .zip(self.weights)
            .map(|(b, w)| b * b / w)
            .sum::<f64>()
    }

    pub fn value(&self, beta: &DVector<f64>) -> f64 {
        self.objective.fit(beta) + self.penalty(beta)
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Euclidean projection onto the `radius` ball, in place.
pub fn project_ball(v: &mut DVector<f64>, radius: f64) {
    let norm = v.norm();
    if norm > radius {
        *v *= radius / norm;
    }
}

/// Largest eigenvalue of `gram + diag(extra)` by power iteration with a
/// Rayleigh-quotient estimate. `gram` must be symmetric positive
/// semidefinite.
pub fn max_eigenvalue(gram: &DMatrix<f64>, extra: &[f64], iters: usize) -> f64 {
    let p = gram.nrows();
    if p == 0 {
        return 0.0;
    }
    // Deterministic start with no special alignment to coordinate axes.
    let mut v = DVector::from_fn(p, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64 / 13.0);
    v /= v.norm();
    let apply = |v: &DVector<f64>| {
        let mut w = gram * v;
        for (i, e) in extra.iter().enumerate() {
            w[i] += e * v[i];
        }
        w
    };
    let mut estimate = 0.0;
    for _ in 0..iters {
        let w = apply(&v);
        let rayleigh = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (rayleigh - estimate).abs() <= 1e-13 * rayleigh.abs() {
            estimate = rayleigh;
            break;
        }
        estimate = rayleigh;
    }
    // The Rayleigh quotient of the final vector is at least as good.
    v.dot(&apply(&v)).max(estimate)
}

/// `L = (1/n) lambda_max(X'X + lambda Diag(1/zhat))`, the gradient Lipschitz
/// constant of the weighted least-squares objective.
pub fn lipschitz_constant(d: &Dataset, lambda: f64, zhat: &[f64], power_iters: usize) -> Result<f64> {
    let m = Moments::from_dataset(d);
    lipschitz_from_moments(&m, lambda, zhat, power_iters)
}

pub(crate) fn lipschitz_from_moments(
    m: &Moments,
    lambda: f64,
    zhat: &[f64],
    power_iters: usize,
) -> Result<f64> {
    if zhat.len() != m.xty.len() {
        return Err(Error::invalid("weight vector length differs from p"));
    }
    if let Some(z) = zhat.iter().find(|&&z| !(z > 0.0)) {
        return Err(Error::invalid(format!("weights must be positive, found {z}")));
    }
    let n = m.n as f64;
    let extra: Vec<f64> = zhat.iter().map(|z| lambda / (n * z)).collect();
    Ok(max_eigenvalue(&m.gram, &extra, power_iters))
}

fn window_converged(history: &[f64], rel_tol: f64) -> bool {
    if history.len() <= STOP_WINDOW {
        return false;
    }
    let now = history[history.len() - 1];
    let then = history[history.len() - 1 - STOP_WINDOW];
    (then - now).abs() <= rel_tol * now.abs().max(f64::MIN_POSITIVE)
}

/// Projected gradient descent for the weighted least-squares problem.
///
/// Starts from `init` (projected onto the ball) or zero. The step is
/// `1/L` with `L` the inflated power-iteration estimate; if a step ever
/// increases the objective the step is halved, so the reported objective
/// never increases.
pub fn pgd_ridge(
    prob: &WeightedProblem<'_>,
    opts: &SolverOptions,
    init: Option<&DVector<f64>>,
) -> Result<Solution> {
    prob.validate()?;
    opts.validate()?;
    let Objective::LeastSquares(m) = prob.objective else {
        return Err(Error::invalid("pgd_ridge requires a least-squares objective"));
    };
    let p = m.xty.len();
    let n = m.n as f64;
    let diag: Vec<f64> = prob.weights.iter().map(|w| prob.lambda / (n * w)).collect();
    let mut lip = LIPSCHITZ_INFLATION * max_eigenvalue(&m.gram, &diag, opts.power_iters);
    if !(lip > 0.0) {
        // Zero design and zero penalty: every feasible point is optimal.
        let beta = init.cloned().unwrap_or_else(|| DVector::zeros(p));
        let mut beta = beta;
        project_ball(&mut beta, prob.radius);
        let objective = prob.value(&beta);
        return Ok(Solution { beta, objective, iterations: 0 });
    }

    let mut beta = match init {
        Some(b) if b.len() == p => b.clone(),
        Some(_) => return Err(Error::invalid("initial point has the wrong length")),
        None => DVector::zeros(p),
    };
    project_ball(&mut beta, prob.radius);
    let value = |b: &DVector<f64>, gb: &DVector<f64>| -> f64 {
        let fit = (0.5 * (m.yty - 2.0 * b.dot(&m.xty) + b.dot(gb))).max(0.0);
        let pen: f64 = b.iter().zip(&diag).map(|(bi, di)| 0.5 * di * bi * bi).sum();
        fit + pen
    };
    let mut g_beta = &m.gram * &beta;
    let mut current = value(&beta, &g_beta);
    let mut history = vec![current];
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        // grad = G beta - X'y/n + diag .* beta
        let mut grad = &g_beta - &m.xty;
        for i in 0..p {
            grad[i] += diag[i] * beta[i];
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut next = &beta - &grad / lip;
            project_ball(&mut next, prob.radius);
            let g_next = &m.gram * &next;
            let v = value(&next, &g_next);
            if v <= current + 1e-15 * current.abs() {
                let moved = (&next - &beta).norm();
                beta = next;
                g_beta = g_next;
                current = v.min(current);
                accepted = moved > 0.0;
                break;
            }
            lip *= 2.0;
        }
        history.push(current);
        if !accepted || window_converged(&history, opts.rel_tol) {
            break;
        }
    }
    if !current.is_finite() {
        return Err(Error::NonFinite("pgd objective"));
    }
    Ok(Solution { beta, objective: current, iterations })
}

/// Exact minimizer of the weighted least-squares problem.
///
/// With `A = X'X/n + Diag(lambda/(n w))` and `b = X'y/n` the minimizer is
/// `(A + mu I)^-1 b` for the smallest `mu >= 0` that lands in the ball; `mu`
/// is found by safeguarded Newton on `1/||beta(mu)|| - 1/r`.
pub fn ridge_direct(prob: &WeightedProblem<'_>) -> Result<Solution> {
    prob.validate()?;
    let Objective::LeastSquares(m) = prob.objective else {
        return Err(Error::invalid("ridge_direct requires a least-squares objective"));
    };
    let p = m.xty.len();
    let n = m.n as f64;
    let mut a = m.gram.clone();
    for (i, w) in prob.weights.iter().enumerate() {
        a[(i, i)] += prob.lambda / (n * w);
    }
    let b = &m.xty;
    let r = prob.radius;
    let bnorm = b.norm();
    let finish = |beta: DVector<f64>, iterations: usize| {
        let objective = prob.value(&beta);
        if !objective.is_finite() {
            return Err(Error::NonFinite("least-squares objective"));
        }
        Ok(Solution { beta, objective, iterations })
    };
    if bnorm == 0.0 {
        return finish(DVector::zeros(p), 0);
    }
    let solve_at = |mu: f64| -> Option<(DVector<f64>, f64)> {
        let mut shifted = a.clone();
        for i in 0..p {
            shifted[(i, i)] += mu;
        }
        let chol = shifted.cholesky()?;
        let beta = chol.solve(b);
        // ||L^-1 beta||^2 = beta' (A + mu I)^-1 beta
        let w = chol.l().solve_lower_triangular(&beta)?;
        Some((beta, w.norm_squared()))
    };
    if let Some((beta, _)) = solve_at(0.0) {
        if beta.norm() <= r {
            return finish(beta, 1);
        }
    }
    // ||beta(mu)|| <= ||b|| / mu, so mu = ||b|| / r is feasible.
    let (mut lo, mut hi) = (0.0f64, bnorm / r);
    let mut mu = hi;
    let mut best = None;
    for it in 1..=200 {
        let Some((beta, q)) = solve_at(mu) else {
            lo = mu;
            mu = 0.5 * (lo + hi);
            continue;
        };
        let norm = beta.norm();
        if norm > r {
            lo = mu;
        } else {
            hi = mu;
            best = Some(beta.clone());
        }
        let converged = (norm - r).abs() <= 1e-14 * r;
        if converged || hi - lo <= 1e-15 * hi.max(1e-300) {
            // A collapsed bracket with an infeasible iterate falls back to the
            // feasible end; a converged iterate is at most rounding off the ball.
            let mut beta = if converged || norm <= r { beta } else { best.clone().unwrap_or(beta) };
            project_ball(&mut beta, r);
            return finish(beta, it);
        }
        // phi(mu) = 1/||beta|| - 1/r, phi'(mu) = q / ||beta||^3
        let step = (1.0 / norm - 1.0 / r) * norm.powi(3) / q;
        let next = mu - step;
        mu = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    let mut beta = best.ok_or(Error::Numerical("ball multiplier search failed"))?;
    project_ball(&mut beta, r);
    finish(beta, 200)
}

/// Projected subgradient method for the weighted hinge problem; returns the
/// best iterate seen. Runs the full iteration budget unless the objective
/// reaches zero, since best-so-far values plateau between improvements.
pub fn subgrad_hinge(
    prob: &WeightedProblem<'_>,
    opts: &SolverOptions,
    init: Option<&DVector<f64>>,
) -> Result<Solution> {
    prob.validate()?;
    opts.validate()?;
    let Objective::Hinge { x, y } = prob.objective else {
        return Err(Error::invalid("subgrad_hinge requires a hinge objective"));
    };
    let (n, p) = (x.nrows(), x.ncols());
    let scale = 2.0 * prob.lambda / n as f64;
    let mut beta = match init {
        Some(b) if b.len() == p => b.clone(),
        Some(_) => return Err(Error::invalid("initial point has the wrong length")),
        None => DVector::zeros(p),
    };
    project_ball(&mut beta, prob.radius);

    let mut best = beta.clone();
    let mut best_value = f64::INFINITY;
    let mut iterations = 0;
    for t in 1..=opts.max_iters {
        iterations = t;
        let margins = x * &beta;
        let mut hinge = 0.0;
        let mut sub = DVector::<f64>::zeros(p);
        for i in 0..n {
            let ym = y[i] * margins[i];
            if ym < 1.0 {
                hinge += 1.0 - ym;
                // sub -= y_i x_i
                for j in 0..p {
                    sub[j] -= y[i] * x[(i, j)];
                }
            }
        }
        let value = hinge / n as f64 + prob.penalty(&beta);
        if value < best_value {
            best_value = value;
            best.copy_from(&beta);
        }
        if best_value == 0.0 {
            break;
        }
        sub /= n as f64;
        for j in 0..p {
            sub[j] += scale * beta[j] / prob.weights[j];
        }
        if sub.norm() == 0.0 {
            break;
        }
        let step = 1.0 / (t as f64).sqrt();
        beta -= sub * step;
        project_ball(&mut beta, prob.radius);
    }
    if !best_value.is_finite() {
        return Err(Error::NonFinite("subgradient objective"));
    }
    Ok(Solution { beta: best, objective: best_value, iterations })
}

/// Dispatches on the loss kind.
pub fn solve_weighted(
    prob: &WeightedProblem<'_>,
    solver: &InnerSolver,
    init: Option<&DVector<f64>>,
) -> Result<Solution> {
    match prob.objective.loss() {
        LossKind::LeastSquares if solver.ls_method == LsMethod::Direct => ridge_direct(prob),
        LossKind::LeastSquares => pgd_ridge(prob, &solver.pgd, init),
        LossKind::Hinge if solver.hinge_method == HingeMethod::Conic => hinge_conic(prob),
        LossKind::Hinge => subgrad_hinge(prob, &solver.subgradient, init),
    }
}

/// Interior-point solve of the weighted hinge problem as a second-order
/// cone program.
///
/// Substituting `beta = sqrt(w) * gamma` turns the penalty into
/// `k ||gamma||^2`, so tiny weights do not make the program ill-scaled.
/// Variables are `(gamma, xi)` with `xi_i >= 1 - y_i x_i' beta`, `xi >= 0`
/// and `(r, sqrt(w) * gamma)` in the second-order cone.
pub fn hinge_conic(prob: &WeightedProblem<'_>) -> Result<Solution> {
    use clarabel::algebra::CscMatrix;
    use clarabel::solver::{
        DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus,
    };

    prob.validate()?;
    let Objective::Hinge { x, y } = prob.objective else {
        return Err(Error::invalid("hinge_conic requires a hinge objective"));
    };
    let (n, p) = (x.nrows(), x.ncols());
    let nf = n as f64;
    let k = prob.objective.penalty_scale(prob.lambda);
    let root_w: Vec<f64> = prob.weights.iter().map(|w| w.sqrt()).collect();
    let dim = p + n;

    let diag: Vec<usize> = if k > 0.0 { (0..p).collect() } else { Vec::new() };
    let quad = CscMatrix::new_from_triplets(dim, dim, diag.clone(), diag.clone(), vec![2.0 * k; diag.len()]);
    let mut q = vec![0.0; dim];
    q[p..].iter_mut().for_each(|v| *v = 1.0 / nf);

    let rows = 2 * n + p + 1;
    let (mut ai, mut aj, mut av) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = vec![0.0; rows];
    for i in 0..n {
        for j in 0..p {
            let v = -y[i] * x[(i, j)] * root_w[j];
            if v != 0.0 {
                ai.push(i);
                aj.push(j);
                av.push(v);
            }
        }
        ai.push(i);
        aj.push(p + i);
        av.push(-1.0);
        b[i] = -1.0;
        ai.push(n + i);
        aj.push(p + i);
        av.push(-1.0);
    }
    b[2 * n] = prob.radius;
    for j in 0..p {
        ai.push(2 * n + 1 + j);
        aj.push(j);
        av.push(-root_w[j]);
    }
    let a = CscMatrix::new_from_triplets(rows, dim, ai, aj, av);
    let cones = [NonnegativeConeT(2 * n), SecondOrderConeT(p + 1)];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .tol_feas(1e-10)
        .build()
        .map_err(|_| Error::Numerical("conic solver settings"))?;
    let mut solver =
        DefaultSolver::new(&quad, &q, &a, &b, &cones, settings).map_err(|_| Error::Numerical("conic solver setup"))?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        _ => return Err(Error::Numerical("conic hinge solve did not converge")),
    }
    let mut beta = DVector::from_iterator(p, solver.solution.x[..p].iter().zip(&root_w).map(|(g, s)| g * s));
    project_ball(&mut beta, prob.radius);
    let objective = prob.value(&beta);
    if !objective.is_finite() {
        return Err(Error::NonFinite("conic hinge objective"));
    }
    Ok(Solution { beta, objective, iterations: solver.info.iterations as usize })
}

/// `R(S, D)`: the unpenalized ball-constrained loss restricted to `support`,
/// on the score scale (residual sum of squares, or mean hinge loss).
pub fn support_score(obj: &Objective, support: &Support, radius: f64, solver: &InnerSolver) -> Result<f64> {
    let sub = obj.restrict(support);
    let ones = vec![1.0; support.len()];
    let prob = WeightedProblem { objective: &sub, weights: &ones, lambda: 0.0, radius };
    let sol = solve_weighted(&prob, solver, None)?;
    Ok(sub.fit_to_score(sol.objective))
}

/// The penalized objective at a binary support: the ridge problem restricted
/// to `support` with unit weights (coefficients outside it are zero).
pub fn support_penalized_value(
    obj: &Objective,
    support: &Support,
    lambda: f64,
    radius: f64,
    solver: &InnerSolver,
) -> Result<f64> {
    let sub = obj.restrict(support);
    let ones = vec![1.0; support.len()];
    let prob = WeightedProblem { objective: &sub, weights: &ones, lambda, radius };
    Ok(solve_weighted(&prob, solver, None)?.objective)
}

/// Iterative hard thresholding on `(1/2n)||y - X beta||^2 + (lambda/2n)||beta||^2`
/// from `beta = 0`, keeping the `s` largest entries of each gradient step.
/// Stops when the kept index set repeats.
pub fn iht_warmstart(d: &Dataset, s: usize, lambda: f64, opts: &SolverOptions) -> Result<Support> {
    let m = Moments::from_dataset(d);
    iht_from_moments(&m, s, lambda, opts)
}

pub(crate) fn iht_from_moments(m: &Moments, s: usize, lambda: f64, opts: &SolverOptions) -> Result<Support> {
    let p = m.xty.len();
    if s == 0 || s > p {
        return Err(Error::invalid(format!("need 1 <= s <= p, got s = {s}, p = {p}")));
    }
    let n = m.n as f64;
    let ridge = lambda / n;
    let lip = max_eigenvalue(&m.gram, &vec![ridge; p], opts.power_iters);
    if !(lip > 0.0) {
        return Ok(Support::from_sorted((0..s).collect()));
    }
    let mut beta = DVector::<f64>::zeros(p);
    let mut support: Option<Support> = None;
    for _ in 0..opts.max_iters {
        let grad = &m.gram * &beta - &m.xty + &beta * ridge;
        let u = &beta - grad / lip;
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| u[b].abs().total_cmp(&u[a].abs()).then(a.cmp(&b)));
        let mut keep: Vec<usize> = order[..s].to_vec();
        keep.sort_unstable();
        let next_support = Support::from_sorted(keep);
        beta = DVector::zeros(p);
        for &i in next_support.indices() {
            beta[i] = u[i];
        }
        if support.as_ref() == Some(&next_support) {
            break;
        }
        support = Some(next_support);
    }
    Ok(support.expect("at least one iteration"))
}
