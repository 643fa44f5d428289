use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anisocs::coherence::{coherence_report, optimal_pi_block, optimal_pi_isolated};
use anisocs::harness::{
    compare_densities, derive_seed, emit_results, run_lemma_checks, run_recovery_curve, to_csv,
    to_json, Stream, Tabular, TailCheckOptions,
};
use anisocs::recovery::{
    adjudicate, check_certificate, random_signal_on, relative_error, solve_bp,
};
use anisocs::{
    AmplitudeLaw, AngleSpan, BlockDictionary, BoundParams, DictionarySource, Error,
    ExperimentConfig, FrequencyGrid, OutputFormat, PiMode, RadialLayout, RadialOffset, Result,
    SamplingDistribution, SignModel, SolverOptions, SuccessMode, SupportSet, TrajectorySpec,
    DEFAULT_BOUND_CONSTANT,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Worker threads for Monte Carlo runs; defaults to the rayon choice.
const WORKERS_ENV: &str = "ANISOCS_WORKERS";

#[derive(Parser, Debug)]
#[command(
    name = "anisocs",
    version,
    about = "Anisotropic compressed sensing with variable-density block sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a sampling dictionary and write it as JSON.
    DictGen(DictGenArgs),
    /// Coherence quantities of a dictionary for one support and density.
    Coherence(CoherenceArgs),
    /// Support-aware optimal sampling density.
    OptimalPi(OptimalPiArgs),
    /// Draw one sensing matrix and signal, run basis pursuit and the certificate.
    Recover(RecoverArgs),
    /// Monte Carlo recovery curve over a grid of m.
    Montecarlo(ExperimentArgs),
    /// Uniform against optimal density on common random numbers.
    CompareDensities(ExperimentArgs),
    /// Empirical tail frequencies against the concentration bounds.
    LemmaCheck(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Identity,
    CartesianIsolated,
    CartesianLines,
    Radial,
    Spiral,
}

#[derive(Args, Debug)]
struct DictGenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// `64` or `16x16`; for `identity` only the point count matters.
    #[arg(long)]
    grid: FrequencyGrid,
    #[arg(long)]
    spokes: Option<usize>,
    /// Samples per spoke (radial) or per arc (spiral).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value = "half-step")]
    offset: RadialOffset,
    #[arg(long, default_value = "half")]
    span: AngleSpan,
    /// Spoke rotation as a fraction of the angular step.
    #[arg(long, default_value_t = 0.0)]
    angle_offset: f64,
    #[arg(long, default_value_t = 1.0)]
    radius_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    radius_exponent: f64,
    #[arg(long)]
    turns: Option<f64>,
    #[arg(long, default_value_t = 1)]
    arcs: usize,
    /// Compose with an orthonormal Haar synthesis of this depth.
    #[arg(long, default_value_t = 0)]
    wavelet_levels: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DictArgs {
    /// Dictionary JSON file.
    #[arg(long)]
    dict: PathBuf,
    /// Zero-based support indices, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    support: Vec<usize>,
}

#[derive(Args, Debug)]
struct CoherenceArgs {
    #[command(flatten)]
    dict: DictArgs,
    /// `uniform`, `optimal`, or comma separated block weights.
    #[arg(long, default_value = "uniform")]
    pi: String,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_BOUND_CONSTANT)]
    c_const: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OptimalPiArgs {
    #[command(flatten)]
    dict: DictArgs,
    /// Use the per-row cost table; needs a dictionary of single rows.
    #[arg(long)]
    isolated: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SignArg {
    Rademacher,
    Steinhaus,
}

impl From<SignArg> for SignModel {
    fn from(s: SignArg) -> Self {
        match s {
            SignArg::Rademacher => SignModel::Rademacher,
            SignArg::Steinhaus => SignModel::Steinhaus,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PiArg {
    Uniform,
    Optimal,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuccessArg {
    Adjudicate,
    Certificate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol_feas: Option<f64>,
    #[arg(long)]
    tol_gap: Option<f64>,
    #[arg(long)]
    tol_success: Option<f64>,
}

impl SolverArgs {
    fn apply(&self, opts: &mut SolverOptions) {
        if let Some(v) = self.max_iters {
            opts.max_iters = v;
        }
        if let Some(v) = self.tol_feas {
            opts.tol_feas = v;
        }
        if let Some(v) = self.tol_gap {
            opts.tol_gap = v;
        }
        if let Some(v) = self.tol_success {
            opts.tol_success = v;
        }
    }
}

#[derive(Args, Debug)]
struct RecoverArgs {
    #[command(flatten)]
    dict: DictArgs,
    /// Number of block draws.
    #[arg(long)]
    m: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "rademacher")]
    sign_model: SignArg,
    #[arg(long, value_enum, default_value = "uniform")]
    pi: PiArg,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Experiment settings from `--config`, overridden by any flag given.
#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long)]
    s: Option<usize>,
    /// Zero-based support; drawn from the seed when absent.
    #[arg(long, value_delimiter = ',')]
    support: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    experiment_id: Option<String>,
    #[arg(long, value_enum)]
    sign_model: Option<SignArg>,
    #[arg(long, value_enum)]
    pi: Option<PiArg>,
    #[arg(long, value_enum)]
    success: Option<SuccessArg>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Output file; falls back to the config's outputs, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn missing(flag: &str) -> Error {
    Error::Config(format!("{flag} is required without --config"))
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig {
                experiment_id: "experiment".into(),
                dictionary: DictionarySource::File {
                    path: self.dict.clone().ok_or_else(|| missing("--dict"))?,
                },
                sign_model: SignModel::Rademacher,
                amplitudes: AmplitudeLaw::Ones,
                s: self
                    .s
                    .or(self.support.as_ref().map(Vec::len))
                    .ok_or_else(|| missing("--s"))?,
                support: None,
                m_values: self.m.clone().ok_or_else(|| missing("--m"))?,
                trials: self.trials.ok_or_else(|| missing("--trials"))?,
                seed: self.seed.ok_or_else(|| missing("--seed"))?,
                pi_mode: PiMode::Uniform,
                solver: SolverOptions::default(),
                success: SuccessMode::Adjudicate,
                epsilon: 0.01,
                tails: TailCheckOptions::default(),
                output: Default::default(),
            },
        };
        if let Some(p) = &self.dict {
            cfg.dictionary = DictionarySource::File { path: p.clone() };
        }
        if let Some(v) = self.s {
            cfg.s = v;
        }
        if let Some(v) = &self.support {
            cfg.support = Some(v.clone());
            if self.s.is_none() {
                cfg.s = v.len();
            }
        }
        if let Some(v) = &self.m {
            cfg.m_values = v.clone();
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.experiment_id {
            cfg.experiment_id = v.clone();
        }
        if let Some(v) = self.sign_model {
            cfg.sign_model = v.into();
        }
        if let Some(v) = self.pi {
            cfg.pi_mode = match v {
                PiArg::Uniform => PiMode::Uniform,
                PiArg::Optimal => PiMode::Optimal,
            };
        }
        if let Some(v) = self.success {
            cfg.success = match v {
                SuccessArg::Adjudicate => SuccessMode::Adjudicate,
                SuccessArg::Certificate => SuccessMode::Certificate,
            };
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        self.solver.apply(&mut cfg.solver);
        cfg.validate()?;
        Ok(cfg)
    }

    fn emit<T: Tabular>(&self, cfg: &ExperimentConfig, table: &T) -> Result<()> {
        let format = match self.format {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        };
        if let Some(path) = &self.out {
            return emit_results(table, format, path);
        }
        if cfg.output.csv.is_some() || cfg.output.json.is_some() {
            return anisocs::harness::emit_configured(table, &cfg.output);
        }
        let text = match format {
            OutputFormat::Csv => to_csv(table)?,
            OutputFormat::Json => to_json(table)?,
        };
        print!("{text}");
        Ok(())
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = to_json(value)?;
    match out {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_with_support(args: &DictArgs) -> Result<(BlockDictionary, SupportSet)> {
    let dict = BlockDictionary::load(&args.dict)?;
    let support = SupportSet::new(args.support.clone(), dict.n())?;
    Ok((dict, support))
}

fn dict_gen(args: &DictGenArgs) -> Result<()> {
    let need = |v: Option<usize>, flag: &str| {
        v.ok_or_else(|| Error::Usage(format!("--kind needs {flag}")))
    };
    let grid = args.grid.clone();
    let dict = match args.kind {
        Kind::Identity => BlockDictionary::identity(grid.n())?,
        kind => {
            let spec = match kind {
                Kind::CartesianIsolated => TrajectorySpec::CartesianIsolated { grid },
                Kind::CartesianLines => TrajectorySpec::CartesianLines { grid },
                Kind::Radial => TrajectorySpec::Radial {
                    grid,
                    spokes: need(args.spokes, "--spokes")?,
                    samples: need(args.samples, "--samples")?,
                    layout: RadialLayout {
                        offset: args.offset,
                        span: args.span,
                        angle_offset: args.angle_offset,
                        radius_scale: args.radius_scale,
                        radius_exponent: args.radius_exponent,
                    },
                },
                Kind::Spiral => TrajectorySpec::Spiral {
                    grid,
                    turns: args.turns,
                    samples: need(args.samples, "--samples")?,
                    arcs: args.arcs,
                    radius_scale: args.radius_scale,
                    radius_exponent: args.radius_exponent,
                },
                Kind::Identity => unreachable!(),
            };
            let d = spec.build()?;
            anisocs::trajectories::wavelet_compose(&d, spec.grid(), args.wavelet_levels)?
        }
    };
    dict.save(&args.out)?;
    eprintln!(
        "wrote {}: n = {}, {} blocks, anisotropy {:.3e}",
        args.out.display(),
        dict.n(),
        dict.block_count(),
        dict.anisotropy()?
    );
    Ok(())
}

fn parse_pi(
    spec: &str,
    dict: &BlockDictionary,
    support: &SupportSet,
) -> Result<SamplingDistribution> {
    match spec {
        "uniform" => SamplingDistribution::uniform(dict.block_count()),
        "optimal" => Ok(optimal_pi_block(dict, dict.gram_inverse(), support)?.0),
        list => {
            let w = list
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Usage(format!("--pi: {e}")))?;
            if w.len() != dict.block_count() {
                return Err(Error::Usage(format!(
                    "--pi has {} weights for {} blocks",
                    w.len(),
                    dict.block_count()
                )));
            }
            SamplingDistribution::from_weights(&w)
        }
    }
}

fn coherence(args: &CoherenceArgs) -> Result<()> {
    let (dict, support) = load_with_support(&args.dict)?;
    let pi = parse_pi(&args.pi, &dict, &support)?;
    let params = BoundParams::with_constant(args.epsilon, args.c_const, dict.n())?;
    let report = coherence_report(&dict, &pi, &support, &params)?;
    write_json(&report, args.out.as_deref())
}

#[derive(Serialize)]
struct OptimalPiReport {
    theta: f64,
    pi: Vec<f64>,
}

fn optimal_pi(args: &OptimalPiArgs) -> Result<()> {
    let (dict, support) = load_with_support(&args.dict)?;
    let (pi, theta) = if args.isolated {
        optimal_pi_isolated(&dict, dict.gram_inverse(), &support)?
    } else {
        optimal_pi_block(&dict, dict.gram_inverse(), &support)?
    };
    let report = OptimalPiReport {
        theta,
        pi: pi.probabilities().to_vec(),
    };
    write_json(&report, args.out.as_deref())
}

#[derive(Serialize)]
struct RecoverReport {
    m: usize,
    rows: usize,
    drawn_blocks: Vec<usize>,
    relative_error: f64,
    success: bool,
    iterations: usize,
    converged: bool,
    constraint_residual: f64,
    certificate: anisocs::CertificateReport,
}

fn recover(args: &RecoverArgs) -> Result<()> {
    let (dict, support) = load_with_support(&args.dict)?;
    let pi = match args.pi {
        PiArg::Uniform => SamplingDistribution::uniform(dict.block_count())?,
        PiArg::Optimal => optimal_pi_block(&dict, dict.gram_inverse(), &support)?.0,
    };
    let mut opts = SolverOptions::default();
    args.solver.apply(&mut opts);
    let draw = dict.draw_sensing(
        &pi,
        args.m,
        derive_seed(args.seed, "recover", args.m, 0, Stream::Draw),
    )?;
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(args.seed, "recover", args.m, 0, Stream::Signal));
    let sig = random_signal_on(
        support,
        args.sign_model.into(),
        AmplitudeLaw::Ones,
        &mut rng,
    )?;
    let a = draw.a.as_mat();
    let y = a * sig.x.as_vec();
    let result = solve_bp(a, &y, &opts)?;
    let certificate = check_certificate(a, dict.gram_inverse(), &sig)?;
    let report = RecoverReport {
        m: args.m,
        rows: a.nrows(),
        drawn_blocks: draw.drawn_blocks.clone(),
        relative_error: relative_error(&sig, &result),
        success: adjudicate(&sig, &result, opts.tol_success)?,
        iterations: result.iterations,
        converged: result.converged,
        constraint_residual: result.constraint_residual,
        certificate,
    };
    write_json(&report, args.out.as_deref())
}

fn configure_workers() -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "{WORKERS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn run(cli: &Cli) -> Result<()> {
    configure_workers()?;
    match &cli.command {
        Command::DictGen(a) => dict_gen(a),
        Command::Coherence(a) => coherence(a),
        Command::OptimalPi(a) => optimal_pi(a),
        Command::Recover(a) => recover(a),
        Command::Montecarlo(a) => {
            let cfg = a.resolve()?;
            let curve = run_recovery_curve(&cfg)?;
            eprint!("{}", anisocs::harness::describe_curve(&curve));
            a.emit(&cfg, &curve)
        }
        Command::CompareDensities(a) => {
            let cfg = a.resolve()?;
            let cmp = compare_densities(&cfg)?;
            eprintln!(
                "theta uniform {:.6e}, optimal {:.6e}; bound uniform {}, optimal {}",
                cmp.theta_uniform, cmp.theta_optimal, cmp.m_bound_uniform, cmp.m_bound_optimal
            );
            a.emit(&cfg, &cmp)
        }
        Command::LemmaCheck(a) => {
            let cfg = a.resolve()?;
            let report = run_lemma_checks(&cfg)?;
            a.emit(&cfg, &report)?;
            if !report.all_pass() {
                eprintln!("some tail checks failed");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("anisocs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
