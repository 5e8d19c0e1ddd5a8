//! Command-line front end for private support selection.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dpss::bench::{identifiability_margin, run_experiment, ExperimentConfig, AGGREGATE_HEADER, RESULT_HEADER};
use dpss::data::{
    generate_classification, generate_synthetic, parse_coefficients, read_dataset, write_coefficients, write_dataset,
    write_results,
};
use dpss::dp::{
    build_p0, exact_exponential_mechanism, mistakes_distribution, plain_scores, privacy_audit, sample_mistakes,
    sample_top_r, sensitivity, AuditReport, AuditSpec, Horizon, MechanismKind, Outcome,
};
use dpss::enumeration::{brute_force_enumerate, score_table, EnumeratedSupports, EnumerationSettings, Enumerator, BRUTE_FORCE_CAP};
use dpss::solvers::InnerSolver;
use dpss::{DataBounds, Dataset, LossKind, Objective, Support, SynthConfig};

#[derive(Parser)]
#[command(name = "dpss", version, about = "Differentially private best subset selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData(GenData),
    /// Rank supports of a dataset.
    Enumerate(Enumerate),
    /// Draw one private support.
    Select(Select),
    /// Exact privacy audit on two neighboring datasets.
    Audit(Audit),
    /// Run a support-recovery sweep.
    Experiment(Experiment),
    /// Identifiability margin of a planted model.
    Margin(Margin),
}

#[derive(Clone, Copy, ValueEnum)]
enum Loss {
    Ls,
    Hinge,
}

impl From<Loss> for LossKind {
    fn from(l: Loss) -> Self {
        match l {
            Loss::Ls => LossKind::LeastSquares,
            Loss::Hinge => LossKind::Hinge,
        }
    }
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    s: usize,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    #[arg(long, default_value_t = 5.0)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `hinge` draws `{-1, +1}` labels.
    #[arg(long, value_enum, default_value = "ls")]
    loss: Loss,
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the planted coefficients here.
    #[arg(long)]
    truth: Option<PathBuf>,
}

/// Options shared by every command that scores supports.
#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    s: usize,
    #[arg(long, value_enum, default_value = "ls")]
    loss: Loss,
    /// Radius of the coefficient ball.
    #[arg(long, default_value_t = 1.1)]
    radius: f64,
    #[arg(long, default_value_t = 0.5)]
    b_x: f64,
    #[arg(long, default_value_t = 0.5)]
    b_y: f64,
    /// Use the data as given instead of clipping to `b_x`, `b_y`.
    #[arg(long)]
    no_clip: bool,
}

impl ModelArgs {
    fn bounds(&self) -> Result<DataBounds> {
        Ok(DataBounds::new(self.b_x, self.b_y)?)
    }

    fn load(&self) -> Result<Dataset> {
        let d = read_dataset(&self.data).with_context(|| format!("reading {}", self.data.display()))?;
        Ok(if self.no_clip { d } else { LossKind::from(self.loss).clip(&d, self.bounds()?) })
    }
}

#[derive(Args)]
struct OaArgs {
    #[arg(long, default_value_t = 120.0)]
    lambda: f64,
    /// Lower end of the lift noise.
    #[arg(long, default_value_t = 0.001)]
    a: f64,
    /// Upper end of the lift noise.
    #[arg(long, default_value_t = 0.005)]
    b: f64,
    #[arg(long, default_value_t = 0.005)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_oa_iters: usize,
    /// Percentage of features used for warm-start cuts; 0 disables them.
    #[arg(long, default_value_t = 10.0)]
    warm_start_pct: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep iterating until the master repeats a support.
    #[arg(long)]
    exact: bool,
    /// Node budget for each master solve.
    #[arg(long, default_value_t = dpss::milp::DEFAULT_MAX_NODES)]
    max_master_nodes: usize,
    /// Keep the best support found when a solve runs out of budget.
    #[arg(long)]
    accept_uncertified: bool,
}

impl OaArgs {
    fn settings(&self, s: usize, radius: f64) -> EnumerationSettings {
        let mut st = EnumerationSettings::new(s, radius, self.lambda);
        st.oa.a = self.a;
        st.oa.b = self.b;
        st.oa.tol = self.tol;
        st.oa.max_oa_iters = self.max_oa_iters;
        st.oa.exact = self.exact;
        st.oa.max_master_nodes = self.max_master_nodes;
        st.accept_uncertified = self.accept_uncertified;
        st.warm_start_pct = (self.warm_start_pct > 0.0).then_some(self.warm_start_pct);
        st.seed = self.seed;
        st
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    TopR,
    Mistakes,
    Practical,
    BruteForce,
}

#[derive(Args)]
struct Enumerate {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    oa: OaArgs,
    #[arg(long, value_enum, default_value = "top-r")]
    mode: Mode,
    /// Number of supports for `top-r` and `brute-force`.
    #[arg(long = "r-count", short = 'R', default_value_t = 10)]
    r_count: usize,
    /// Output CSV; standard output when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mechanism {
    TopR,
    Mistakes,
    /// Exponential mechanism over every support (small `p` only).
    Exact,
}

#[derive(Args)]
struct Select {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    oa: OaArgs,
    #[arg(long, value_enum, default_value = "mistakes")]
    mechanism: Mechanism,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// `R` for the top-R mechanism; the practical variant when omitted.
    #[arg(long = "r-count", short = 'R')]
    r_count: Option<usize>,
    /// Rejection-sampling horizon `T` (`inf` for unbounded).
    #[arg(long, default_value = "inf")]
    horizon: Horizon,
    /// Seed for the mechanism's randomness.
    #[arg(long, default_value_t = 0)]
    draw_seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum AuditMechanism {
    Exponential,
    TopR,
    Mistakes,
}

#[derive(Args)]
struct Audit {
    #[command(flatten)]
    model: ModelArgs,
    /// The neighboring dataset (differs from `--data` in at most one row).
    #[arg(long)]
    neighbor: PathBuf,
    #[arg(long, value_enum, default_value = "top-r")]
    mechanism: AuditMechanism,
    #[arg(long = "r-count", short = 'R', default_value_t = 5)]
    r_count: usize,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Copied into the report's `seed` column.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Experiment {
    /// Flat `key=value` file; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides applied after the file, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Per-draw results CSV.
    #[arg(long, short)]
    out: PathBuf,
    /// Per-(method, n) aggregate CSV.
    #[arg(long)]
    aggregates: Option<PathBuf>,
}

#[derive(Args)]
struct Margin {
    #[arg(long)]
    data: PathBuf,
    /// Coefficient CSV with header `index,beta` and 1-based indices.
    #[arg(long)]
    beta: PathBuf,
    #[arg(long)]
    s: usize,
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn gen_data(args: GenData) -> Result<()> {
    let cfg = SynthConfig { n: args.n, p: args.p, s: args.s, rho: args.rho, snr: args.snr, seed: args.seed };
    let (d, truth) = match LossKind::from(args.loss) {
        LossKind::LeastSquares => generate_synthetic(&cfg)?,
        LossKind::Hinge => generate_classification(&cfg)?,
    };
    write_dataset(&d, &args.out)?;
    if let Some(path) = &args.truth {
        write_coefficients(&truth.beta, File::create(path)?)?;
    }
    eprintln!("true support {}", truth.support);
    Ok(())
}

fn enumerate(args: Enumerate) -> Result<()> {
    let d = args.model.load()?;
    let loss = args.model.loss.into();
    let settings = args.oa.settings(args.model.s, args.model.radius);
    let e = match args.mode {
        Mode::BruteForce => brute_force_enumerate(&d, loss, args.model.s, args.model.radius, args.r_count, &settings.solver)?,
        Mode::TopR => Enumerator::new(&d, loss, settings)?.top_r(args.r_count)?,
        Mode::Mistakes => Enumerator::new(&d, loss, settings)?.mistakes()?,
        Mode::Practical => Enumerator::new(&d, loss, settings)?.practical()?,
    };
    report_enumeration(&e);
    e.write_csv(output(args.out.as_ref())?)?;
    Ok(())
}

fn report_enumeration(e: &EnumeratedSupports) {
    if e.rank_disagreements > 0 {
        eprintln!("penalized and unpenalized orders differ at {} positions", e.rank_disagreements);
    }
    if e.check_passed == Some(false) {
        eprintln!("warning: practical top-R check failed");
    }
}

fn select(args: Select) -> Result<()> {
    let d = args.model.load()?;
    let loss: LossKind = args.model.loss.into();
    let delta = sensitivity(loss, args.model.bounds()?, args.model.radius, args.model.s, d.n())?.delta;
    let mut rng = ChaCha8Rng::seed_from_u64(args.draw_seed);
    let support = match args.mechanism {
        Mechanism::TopR => {
            let mut en = Enumerator::new(&d, loss, args.oa.settings(args.model.s, args.model.radius))?;
            let e = match args.r_count {
                Some(r) => en.top_r(r)?,
                None => en.practical()?,
            };
            report_enumeration(&e);
            let dist = build_p0(&e, delta, args.epsilon)?;
            sample_top_r(&e, &dist, args.horizon, &mut rng)
        }
        Mechanism::Mistakes => {
            let mut en = Enumerator::new(&d, loss, args.oa.settings(args.model.s, args.model.radius))?;
            let e = en.mistakes()?;
            let dist = mistakes_distribution(&e, delta, args.epsilon)?;
            sample_mistakes(&e, &dist, &mut rng)
        }
        Mechanism::Exact => {
            let obj = Objective::new(&d, loss)?;
            let table = score_table(&obj, args.model.s, args.model.radius, &InnerSolver::default(), BRUTE_FORCE_CAP)?;
            let dist = exact_exponential_mechanism(&plain_scores(&table), delta, args.epsilon)?;
            match &dist.outcomes[dist.sample_slot(&mut rng)] {
                Outcome::Support(s) => s.clone(),
                _ => bail!("exact mechanism produced a non-support outcome"),
            }
        }
    };
    println!("{}", support.to_one_based_string());
    Ok(())
}

fn audit(args: Audit) -> Result<()> {
    let d = read_dataset(&args.model.data).with_context(|| format!("reading {}", args.model.data.display()))?;
    let d2 = read_dataset(&args.neighbor).with_context(|| format!("reading {}", args.neighbor.display()))?;
    let spec = AuditSpec {
        mechanism: match args.mechanism {
            AuditMechanism::Exponential => MechanismKind::Exponential,
            AuditMechanism::TopR => MechanismKind::TopR(args.r_count),
            AuditMechanism::Mistakes => MechanismKind::Mistakes,
        },
        epsilon: args.epsilon,
        loss: args.model.loss.into(),
        s: args.model.s,
        radius: args.model.radius,
        bounds: args.model.bounds()?,
        solver: InnerSolver::default(),
    };
    let report = privacy_audit(&d, &d2, &spec)?;
    write_results(output(args.out.as_ref())?, &AuditReport::HEADER, &[report.csv_row(args.seed)])?;
    Ok(())
}

fn experiment(args: Experiment) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for kv in &args.overrides {
        let Some((key, value)) = kv.split_once('=') else {
            bail!("override {kv:?} is not key=value");
        };
        cfg.set(key.trim(), value.trim())?;
    }
    cfg.validate()?;
    let out = run_experiment(&cfg)?;
    for f in &out.failures {
        eprintln!("failed: {} n={} trial={}: {}", f.method.name(), f.n, f.trial, f.message);
    }
    write_results(File::create(&args.out)?, &RESULT_HEADER, &out.csv_rows(&cfg))?;
    let aggregates = out.aggregates();
    if let Some(path) = &args.aggregates {
        let rows: Vec<Vec<String>> = aggregates.iter().map(|a| a.csv_row()).collect();
        write_results(File::create(path)?, &AGGREGATE_HEADER, &rows)?;
    }
    for a in &aggregates {
        eprintln!(
            "{:>10} n={:<6} correct {:.3} ± {:.3}  f1 {:.3}",
            a.method.name(),
            a.n,
            a.mean_correct,
            a.se_correct,
            a.mean_f1
        );
    }
    Ok(())
}

fn margin(args: Margin) -> Result<()> {
    let d = read_dataset(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    let beta = parse_coefficients(File::open(&args.beta)?, d.p())?;
    let truth = Support::from_mask(&beta.iter().map(|v| *v != 0.0).collect::<Vec<_>>());
    if truth.len() != args.s {
        bail!("beta has {} nonzero entries, expected s = {}", truth.len(), args.s);
    }
    println!("{}", identifiability_margin(d.x(), &beta, args.s)?);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::GenData(a) => gen_data(a),
        Command::Enumerate(a) => enumerate(a),
        Command::Select(a) => select(a),
        Command::Audit(a) => audit(a),
        Command::Experiment(a) => experiment(a),
        Command::Margin(a) => margin(a),
    }
}
