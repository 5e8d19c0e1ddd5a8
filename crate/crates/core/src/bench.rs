//! Synthetic support-recovery experiments and their metrics.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{generate_classification, generate_synthetic, DataBounds, Dataset, SynthConfig};
use crate::dp::{
    build_p0, exact_exponential_mechanism, mistakes_distribution, plain_scores, sample_mistakes, sample_top_r, sensitivity,
    Horizon, Outcome,
};
use crate::enumeration::{score_table, EnumerationSettings, Enumerator, BRUTE_FORCE_CAP};
use crate::error::{Error, Result};
use crate::oa::OaConfig;
use crate::solvers::{InnerSolver, LossKind};
use crate::support::{Combinations, Support};

/// `2 |A ∩ B| / (|A| + |B|)`.
pub fn f1_score(selected: &Support, truth: &Support) -> Result<f64> {
    if selected.is_empty() || truth.is_empty() {
        return Err(Error::invalid("F1 needs nonempty supports"));
    }
    Ok(2.0 * selected.intersection_len(truth) as f64 / (selected.len() + truth.len()) as f64)
}

/// `min_S beta*' D(S) beta* / |S* \ S|` over size-`s` supports `S != S*`,
/// where `D(S)` is the residual covariance of the missed true features after
/// regressing them on `X_S`, all from `X'X/n`. Supports whose Gram block is
/// singular are skipped.
pub fn identifiability_margin(x: &DMatrix<f64>, beta_star: &DVector<f64>, s: usize) -> Result<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    if beta_star.len() != p {
        return Err(Error::invalid("beta* length differs from p"));
    }
    let truth = Support::from_mask(&beta_star.iter().map(|b| *b != 0.0).collect::<Vec<_>>());
    if truth.len() != s || s == 0 {
        return Err(Error::invalid("beta* must have exactly s nonzero entries"));
    }
    let sigma = x.transpose() * x / n as f64;
    let block = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |a, b| sigma[(rows[a], cols[b])]);
    let mut best = f64::INFINITY;
    for support in Combinations::new(p, s) {
        if support == truth {
            continue;
        }
        let missed: Vec<usize> = truth.indices().iter().copied().filter(|&i| !support.contains(i)).collect();
        let kept = support.indices();
        let Some(chol) = block(kept, kept).cholesky() else {
            warn!("singular Gram block for {support}, skipped");
            continue;
        };
        let cross = block(kept, &missed);
        let resid = block(&missed, &missed) - cross.transpose() * chol.solve(&cross);
        let b = DVector::from_iterator(missed.len(), missed.iter().map(|&i| beta_star[i]));
        best = best.min(b.dot(&(resid * &b)) / missed.len() as f64);
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    TopR,
    Mistakes,
    ExpMechExact,
    /// Non-private best subset selection.
    Bss,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::TopR => "top_r",
            Method::Mistakes => "mistakes",
            Method::ExpMechExact => "exp_mech_exact",
            Method::Bss => "bss",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "top_r" => Ok(Method::TopR),
            "mistakes" => Ok(Method::Mistakes),
            "exp_mech_exact" => Ok(Method::ExpMechExact),
            "bss" => Ok(Method::Bss),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub loss: LossKind,
    pub p: usize,
    pub s: usize,
    pub rho: f64,
    pub snr: f64,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub draws_per_trial: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub tol: f64,
    /// Require a repeated master solution before stopping.
    pub exact: bool,
    /// Node budget per master solve; an exhausted budget keeps the best
    /// support found so far.
    pub max_master_nodes: usize,
    pub b_x: f64,
    pub b_y: f64,
    pub seed: u64,
    /// Number of supports for the top-R method; `None` uses the practical
    /// `2 + (p - s) s` strategy.
    pub r_count: Option<usize>,
    pub horizon: Horizon,
    pub warm_start_pct: f64,
    pub clip: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: vec![Method::TopR, Method::Mistakes],
            loss: LossKind::LeastSquares,
            p: 100,
            s: 5,
            rho: 0.1,
            snr: 5.0,
            n_grid: vec![500, 1000, 2000, 4000],
            trials: 10,
            draws_per_trial: 50,
            epsilon: 1.0,
            lambda: 120.0,
            r: 1.1,
            a: 0.001,
            b: 0.005,
            tol: 0.005,
            exact: false,
            max_master_nodes: 20_000,
            b_x: 0.5,
            b_y: 0.5,
            seed: 0,
            r_count: None,
            horizon: Horizon::Infinite,
            warm_start_pct: 10.0,
            clip: true,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').filter(|v| !v.trim().is_empty()).map(|v| parse_value(key, v)).collect()
}

impl ExperimentConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "method" | "methods" => self.methods = parse_list(key, value)?,
            "loss" => self.loss = parse_value(key, value)?,
            "p" => self.p = parse_value(key, value)?,
            "s" => self.s = parse_value(key, value)?,
            "rho" => self.rho = parse_value(key, value)?,
            "snr" => self.snr = parse_value(key, value)?,
            "n_grid" => self.n_grid = parse_list(key, value)?,
            "trials" => self.trials = parse_value(key, value)?,
            "draws_per_trial" => self.draws_per_trial = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "r" => self.r = parse_value(key, value)?,
            "a" => self.a = parse_value(key, value)?,
            "b" => self.b = parse_value(key, value)?,
            "tol" => self.tol = parse_value(key, value)?,
            "exact" => self.exact = parse_value(key, value)?,
            "max_master_nodes" => self.max_master_nodes = parse_value(key, value)?,
            "b_x" => self.b_x = parse_value(key, value)?,
            "b_y" => self.b_y = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "r_count" | "R" => {
                self.r_count = match value.trim() {
                    "practical" | "" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "T" | "horizon" => self.horizon = parse_value(key, value)?,
            "warm_start_pct" => self.warm_start_pct = parse_value(key, value)?,
            "clip" => self.clip = parse_value(key, value)?,
            other => return Err(Error::invalid(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses flat `key=value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key=value", lineno + 1)))?;
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.n_grid.is_empty() {
            return Err(Error::invalid("methods and n_grid must be nonempty"));
        }
        if self.trials == 0 || self.draws_per_trial == 0 {
            return Err(Error::invalid("trials and draws_per_trial must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.r > 0.0) {
            return Err(Error::invalid("epsilon and r must be positive"));
        }
        DataBounds::new(self.b_x, self.b_y)?;
        self.oa_config().validate()?;
        for &n in &self.n_grid {
            self.synth(n, 0).validate()?;
        }
        Ok(())
    }

    /// Outer-approximation settings implied by this configuration.
    pub fn oa_config(&self) -> OaConfig {
        OaConfig {
            a: self.a,
            b: self.b,
            tol: self.tol,
            exact: self.exact,
            max_master_nodes: self.max_master_nodes,
            ..OaConfig::new(self.lambda)
        }
    }

    fn synth(&self, n: usize, seed: u64) -> SynthConfig {
        SynthConfig { n, p: self.p, s: self.s, rho: self.rho, snr: self.snr, seed }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub method: Method,
    pub n: usize,
    pub trial: usize,
    pub draw: usize,
    pub support: Support,
    pub correct: bool,
    pub f1: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialFailure {
    pub method: Method,
    pub n: usize,
    pub trial: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub n: usize,
    pub trials: usize,
    pub mean_correct: f64,
    pub se_correct: f64,
    pub mean_f1: f64,
    pub se_f1: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

pub const RESULT_HEADER: [&str; 14] =
    ["method", "loss", "n", "p", "s", "epsilon", "snr", "rho", "trial", "draw", "indices", "correct", "f1", "wall_time"];

pub const AGGREGATE_HEADER: [&str; 7] = ["method", "n", "trials", "mean_correct", "se_correct", "mean_f1", "se_f1"];

impl ExperimentOutput {
    pub fn csv_rows(&self, cfg: &ExperimentConfig) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.method.name().to_string(),
                    cfg.loss.name().to_string(),
                    r.n.to_string(),
                    cfg.p.to_string(),
                    cfg.s.to_string(),
                    cfg.epsilon.to_string(),
                    cfg.snr.to_string(),
                    cfg.rho.to_string(),
                    r.trial.to_string(),
                    r.draw.to_string(),
                    r.support.to_one_based_string(),
                    u8::from(r.correct).to_string(),
                    r.f1.to_string(),
                    format!("{:.6}", r.wall_time),
                ]
            })
            .collect()
    }

    /// Per `(method, n)`: the mean over trials of the per-trial means, and
    /// the standard error of those trial means.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        use std::collections::BTreeMap;
        let mut per_trial: BTreeMap<(Method, usize, usize), (f64, f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = per_trial.entry((r.method, r.n, r.trial)).or_default();
            e.0 += f64::from(u8::from(r.correct));
            e.1 += r.f1;
            e.2 += 1;
        }
        let mut grouped: BTreeMap<(Method, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for ((m, n, _), (c, f, k)) in per_trial {
            let g = grouped.entry((m, n)).or_default();
            g.0.push(c / k as f64);
            g.1.push(f / k as f64);
        }
        grouped
            .into_iter()
            .map(|((method, n), (c, f))| {
                let (mean_correct, se_correct) = mean_se(&c);
                let (mean_f1, se_f1) = mean_se(&f);
                Aggregate { method, n, trials: c.len(), mean_correct, se_correct, mean_f1, se_f1 }
            })
            .collect()
    }
}

impl Aggregate {
    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.method.name().to_string(),
            self.n.to_string(),
            self.trials.to_string(),
            self.mean_correct.to_string(),
            self.se_correct.to_string(),
            self.mean_f1.to_string(),
            self.se_f1.to_string(),
        ]
    }
}

/// Mean and standard error (sample standard deviation over `sqrt(k)`).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Seeds for trial `trial` at sample size `n`, independent of the rest of
/// the grid: `(data seed, mechanism seed)`.
pub fn trial_seeds(master: u64, n: usize, trial: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((n as u64) << 24) | trial as u64);
    (rng.next_u64(), rng.next_u64())
}

/// Generated (and optionally clipped) data for one trial.
pub fn trial_dataset(cfg: &ExperimentConfig, n: usize, trial: usize) -> Result<(Dataset, Support)> {
    let (data_seed, _) = trial_seeds(cfg.seed, n, trial);
    let synth = cfg.synth(n, data_seed);
    let (d, truth) = match cfg.loss {
        LossKind::LeastSquares => generate_synthetic(&synth)?,
        LossKind::Hinge => generate_classification(&synth)?,
    };
    let d = if cfg.clip { cfg.loss.clip(&d, DataBounds::new(cfg.b_x, cfg.b_y)?) } else { d };
    Ok((d, truth.support))
}

fn method_rng(mech_seed: u64, method: Method) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mech_seed);
    rng.set_stream(method as u64 + 1);
    rng
}

/// Runs one `(n, trial)` cell for every configured method.
pub fn run_trial(cfg: &ExperimentConfig, n: usize, trial: usize) -> (Vec<TrialResult>, Vec<TrialFailure>) {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let fail = |method, e: Error| TrialFailure { method, n, trial, message: e.to_string() };
    let (d, truth) = match trial_dataset(cfg, n, trial) {
        Ok(v) => v,
        Err(e) => {
            failures.extend(cfg.methods.iter().map(|&m| fail(m, Error::invalid(e.to_string()))));
            return (rows, failures);
        }
    };
    let (_, mech_seed) = trial_seeds(cfg.seed, n, trial);
    let settings = EnumerationSettings {
        s: cfg.s,
        radius: cfg.r,
        oa: cfg.oa_config(),
        solver: InnerSolver::default(),
        warm_start_pct: Some(cfg.warm_start_pct),
        seed: mech_seed,
        accept_uncertified: true,
    };
    let mut enumerator = None;
    for &method in &cfg.methods {
        let start = Instant::now();
        let mut rng = method_rng(mech_seed, method);
        let result = (|| -> Result<Vec<Support>> {
            if enumerator.is_none() && method != Method::ExpMechExact {
                enumerator = Some(Enumerator::new(&d, cfg.loss, settings.clone())?);
            }
            let bounds = DataBounds::new(cfg.b_x, cfg.b_y)?;
            let delta = sensitivity(cfg.loss, bounds, cfg.r, cfg.s, n)?.delta;
            let draws = cfg.draws_per_trial;
            Ok(match method {
                Method::TopR => {
                    let en = enumerator.as_mut().expect("created above");
                    let e = match cfg.r_count {
                        Some(r) => en.top_r(r)?,
                        None => en.practical()?,
                    };
                    let dist = build_p0(&e, delta, cfg.epsilon)?;
                    (0..draws).map(|_| sample_top_r(&e, &dist, cfg.horizon, &mut rng)).collect()
                }
                Method::Mistakes => {
                    let e = enumerator.as_mut().expect("created above").mistakes()?;
                    let dist = mistakes_distribution(&e, delta, cfg.epsilon)?;
                    (0..draws).map(|_| sample_mistakes(&e, &dist, &mut rng)).collect()
                }
                Method::ExpMechExact => {
                    let obj = crate::solvers::Objective::new(&d, cfg.loss)?;
                    let table = score_table(&obj, cfg.s, cfg.r, &settings.solver, BRUTE_FORCE_CAP)?;
                    let dist = exact_exponential_mechanism(&plain_scores(&table), delta, cfg.epsilon)?;
                    (0..draws)
                        .map(|_| match &dist.outcomes[dist.sample_slot(&mut rng)] {
                            Outcome::Support(s) => s.clone(),
                            _ => unreachable!("exact mechanism outcomes are supports"),
                        })
                        .collect()
                }
                Method::Bss => {
                    let best = enumerator.as_mut().expect("created above").top_r(1)?.items[0].support.clone();
                    vec![best; draws]
                }
            })
        })();
        let elapsed = start.elapsed().as_secs_f64();
        match result {
            Ok(supports) => {
                for (draw, support) in supports.into_iter().enumerate() {
                    let f1 = f1_score(&support, &truth).unwrap_or(0.0);
                    rows.push(TrialResult {
                        method,
                        n,
                        trial,
                        draw,
                        correct: support == truth,
                        f1,
                        support,
                        wall_time: elapsed,
                    });
                }
            }
            Err(e) => {
                warn!("{method} n={n} trial={trial} failed: {e}");
                failures.push(fail(method, e));
            }
        }
    }
    (rows, failures)
}

/// Every `(n, trial)` cell in grid order; failed cells are recorded and
/// skipped.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut out = ExperimentOutput::default();
    for &n in &cfg.n_grid {
        for trial in 0..cfg.trials {
            let (rows, failures) = run_trial(cfg, n, trial);
            info!("n={n} trial={trial}: {} rows, {} failures", rows.len(), failures.len());
            out.rows.extend(rows);
            out.failures.extend(failures);
        }
    }
    Ok(out)
}
