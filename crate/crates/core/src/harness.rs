//! Experiment engine: Monte Carlo recovery curves, density comparisons,
//! empirical checks of the concentration inequalities, and result files.
//!
//! Every random quantity is seeded from `derive_seed(master, experiment, m, trial, stream)`,
//! so results do not depend on the order in which rayon schedules trials.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block_model::{BlockDictionary, SamplingDistribution};
use crate::coherence::{
    cross_column_coherence_from_gram, lambda_for, lemma_tail_bounds,
    local_isometry_deviation_from_gram, measurement_bound, optimal_pi_block, theta_for,
    BoundParams, SupportSet,
};
use crate::error::{Error, Result};
use crate::numerics::{norm_two_two, select_columns, select_rows, CMat, CVec};
use crate::recovery::{
    adjudicate, check_certificate, random_signal_on, solve_bp, AmplitudeLaw, SignModel,
    SolverOptions,
};
use crate::trajectories::{wavelet_compose, TrajectorySpec};

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959_963_984_540_054;

// ---------------------------------------------------------------------------
// seeds

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Independent random streams of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Signal = 1,
    Draw = 2,
    Support = 3,
    Tail = 4,
}

/// Seed of one trial's stream; a pure function of its arguments.
pub fn derive_seed(
    master: u64,
    experiment_id: &str,
    m: usize,
    trial: usize,
    stream: Stream,
) -> u64 {
    let mut h = splitmix64(master ^ splitmix64(fnv1a(experiment_id)));
    h = splitmix64(h ^ m as u64);
    h = splitmix64(h ^ trial as u64);
    splitmix64(h ^ stream as u64)
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DictionarySource {
    File {
        path: PathBuf,
    },
    Identity {
        n: usize,
    },
    Trajectory {
        #[serde(flatten)]
        spec: TrajectorySpec,
        #[serde(default)]
        wavelet_levels: usize,
    },
}

impl DictionarySource {
    /// Load or generate; validation failures are reported as configuration errors.
    pub fn build(&self) -> Result<BlockDictionary> {
        let built = match self {
            DictionarySource::File { path } => BlockDictionary::load(path),
            DictionarySource::Identity { n } => BlockDictionary::identity(*n),
            DictionarySource::Trajectory {
                spec,
                wavelet_levels,
            } => spec
                .build()
                .and_then(|d| wavelet_compose(&d, spec.grid(), *wavelet_levels)),
        };
        built.map_err(|e| match e {
            Error::Io { .. } | Error::Config(_) => e,
            other => Error::Config(format!("dictionary: {other}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PiMode {
    #[default]
    Uniform,
    /// Support-aware minimizer of `Θ_S`, recomputed per support.
    Optimal,
    Explicit {
        pi: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SuccessMode {
    /// Relative ℓ2 error of the BP solution within `solver.tol_success`.
    #[default]
    Adjudicate,
    /// Pass of the dual certificate; BP is not run.
    Certificate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

/// Settings of the tail checks that are not shared with recovery runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TailCheckOptions {
    /// Bound values at which the lemma and Bernstein thresholds are placed.
    pub target_bounds: Vec<f64>,
    pub hoeffding_trials: usize,
    pub hoeffding_u: Vec<f64>,
    pub hoeffding_len: usize,
    pub steinhaus_lambda: f64,
    pub bernstein_trials: usize,
}

impl Default for TailCheckOptions {
    fn default() -> Self {
        TailCheckOptions {
            target_bounds: vec![0.5, 0.2, 0.05],
            hoeffding_trials: 100_000,
            hoeffding_u: vec![2.0, 3.0, 4.0],
            hoeffding_len: 8,
            steinhaus_lambda: 0.5,
            bernstein_trials: 10_000,
        }
    }
}

fn default_experiment_id() -> String {
    "experiment".into()
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_sign_model() -> SignModel {
    SignModel::Rademacher
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_experiment_id")]
    pub experiment_id: String,
    pub dictionary: DictionarySource,
    #[serde(default = "default_sign_model")]
    pub sign_model: SignModel,
    #[serde(default)]
    pub amplitudes: AmplitudeLaw,
    pub s: usize,
    /// Fixed support (zero-based); drawn per trial when absent.
    #[serde(default)]
    pub support: Option<Vec<usize>>,
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub pi_mode: PiMode,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub success: SuccessMode,
    /// Failure probability used for the reported measurement bounds.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub tails: TailCheckOptions,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.m_values.is_empty() || self.m_values.contains(&0) {
            return Err(Error::Config(
                "m values must be present and at least 1".into(),
            ));
        }
        if self.s == 0 {
            return Err(Error::Config("sparsity s must be at least 1".into()));
        }
        if let Some(sup) = &self.support {
            if sup.len() != self.s {
                return Err(Error::Config(format!(
                    "support has {} indices but s = {}",
                    sup.len(),
                    self.s
                )));
            }
        }
        if self.sign_model == SignModel::Explicit {
            return Err(Error::Config("experiments need a random sign model".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config("epsilon must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn sorted_m(&self) -> Vec<usize> {
        let mut ms = self.m_values.clone();
        ms.sort_unstable();
        ms.dedup();
        ms
    }

    fn fixed_support(&self, n: usize) -> Result<Option<SupportSet>> {
        self.support
            .as_ref()
            .map(|idx| {
                SupportSet::new(idx.clone(), n).map_err(|e| Error::Config(format!("support: {e}")))
            })
            .transpose()
    }

    /// The configured support, or one drawn from the master seed.
    fn support_or_drawn(&self, n: usize) -> Result<SupportSet> {
        if let Some(s) = self.fixed_support(n)? {
            return Ok(s);
        }
        if self.s > n {
            return Err(Error::Config(format!("s = {} exceeds n = {n}", self.s)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            self.seed,
            &self.experiment_id,
            0,
            0,
            Stream::Support,
        ));
        SupportSet::new(sample(&mut rng, n, self.s).into_vec(), n)
    }
}

// ---------------------------------------------------------------------------
// recovery curves

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub wilson_ci_low: f64,
    pub wilson_ci_high: f64,
    pub mean_solve_iters: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct RecoveryCurve {
    pub rows: Vec<RecoveryRow>,
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

impl RecoveryRow {
    fn from_counts(m: usize, trials: usize, successes: usize, total_iters: usize) -> Self {
        let (lo, hi) = wilson_interval(successes, trials, WILSON_Z);
        RecoveryRow {
            m,
            trials,
            successes,
            success_rate: successes as f64 / trials as f64,
            wilson_ci_low: lo,
            wilson_ci_high: hi,
            mean_solve_iters: total_iters as f64 / trials as f64,
        }
    }
}

enum PiSource {
    Fixed(SamplingDistribution),
    OptimalPerSupport,
}

struct TrialContext<'a> {
    cfg: &'a ExperimentConfig,
    dict: &'a BlockDictionary,
    support: Option<&'a SupportSet>,
    pi: PiSource,
}

#[derive(Clone, Copy)]
struct TrialOutcome {
    success: bool,
    iterations: usize,
}

impl<'a> TrialContext<'a> {
    fn new(
        cfg: &'a ExperimentConfig,
        dict: &'a BlockDictionary,
        support: Option<&'a SupportSet>,
        mode: &PiMode,
    ) -> Result<Self> {
        let pi = match mode {
            PiMode::Uniform => PiSource::Fixed(SamplingDistribution::uniform(dict.block_count())?),
            PiMode::Explicit { pi } => {
                let dist = SamplingDistribution::new(pi.clone())
                    .map_err(|e| Error::Config(format!("pi: {e}")))?;
                dict.check_pi(&dist)
                    .map_err(|e| Error::Config(format!("pi: {e}")))?;
                PiSource::Fixed(dist)
            }
            PiMode::Optimal => match support {
                Some(s) => PiSource::Fixed(optimal_pi_block(dict, dict.gram_inverse(), s)?.0),
                None => PiSource::OptimalPerSupport,
            },
        };
        if cfg.s > dict.n() {
            return Err(Error::Config(format!(
                "s = {} exceeds n = {}",
                cfg.s,
                dict.n()
            )));
        }
        Ok(TrialContext {
            cfg,
            dict,
            support,
            pi,
        })
    }

    fn run(&self, m: usize, trial: usize) -> Result<TrialOutcome> {
        let cfg = self.cfg;
        let n = self.dict.n();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            &cfg.experiment_id,
            m,
            trial,
            Stream::Signal,
        ));
        let support = match self.support {
            Some(s) => s.clone(),
            None => SupportSet::new(sample(&mut rng, n, cfg.s).into_vec(), n)?,
        };
        let sig = random_signal_on(support, cfg.sign_model, cfg.amplitudes, &mut rng)?;
        let pi_owned;
        let pi = match &self.pi {
            PiSource::Fixed(p) => p,
            PiSource::OptimalPerSupport => {
                pi_owned = optimal_pi_block(self.dict, self.dict.gram_inverse(), &sig.support)?.0;
                &pi_owned
            }
        };
        let draw_seed = derive_seed(cfg.seed, &cfg.experiment_id, m, trial, Stream::Draw);
        let draw = self.dict.draw_sensing(pi, m, draw_seed)?;
        match cfg.success {
            SuccessMode::Certificate => {
                let report = check_certificate(draw.a.as_mat(), self.dict.gram_inverse(), &sig)?;
                Ok(TrialOutcome {
                    success: report.verdict.is_pass(),
                    iterations: 0,
                })
            }
            SuccessMode::Adjudicate => {
                let y = draw.a.as_mat() * sig.x.as_vec();
                let result = solve_bp(draw.a.as_mat(), &y, &cfg.solver)?;
                Ok(TrialOutcome {
                    success: adjudicate(&sig, &result, cfg.solver.tol_success)?,
                    iterations: result.iterations,
                })
            }
        }
    }

    fn curve(&self) -> Result<RecoveryCurve> {
        let mut rows = Vec::new();
        for m in self.cfg.sorted_m() {
            let outcomes = (0..self.cfg.trials)
                .into_par_iter()
                .map(|t| self.run(m, t))
                .collect::<Result<Vec<_>>>()?;
            let successes = outcomes.iter().filter(|o| o.success).count();
            let iters = outcomes.iter().map(|o| o.iterations).sum();
            rows.push(RecoveryRow::from_counts(
                m,
                self.cfg.trials,
                successes,
                iters,
            ));
        }
        Ok(RecoveryCurve { rows })
    }
}

/// Success rate against `m` for the configured density.
pub fn run_recovery_curve(cfg: &ExperimentConfig) -> Result<RecoveryCurve> {
    cfg.validate()?;
    let dict = cfg.dictionary.build()?;
    run_recovery_curve_on(cfg, &dict)
}

/// [`run_recovery_curve`] on an already built dictionary.
pub fn run_recovery_curve_on(
    cfg: &ExperimentConfig,
    dict: &BlockDictionary,
) -> Result<RecoveryCurve> {
    cfg.validate()?;
    let support = cfg.fixed_support(dict.n())?;
    TrialContext::new(cfg, dict, support.as_ref(), &cfg.pi_mode)?.curve()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityComparison {
    pub support: Vec<usize>,
    pub theta_uniform: f64,
    pub theta_optimal: f64,
    pub lambda_uniform: f64,
    pub lambda_optimal: f64,
    pub m_bound_uniform: u64,
    pub m_bound_optimal: u64,
    pub optimal_pi: Vec<f64>,
    pub uniform: RecoveryCurve,
    pub optimal: RecoveryCurve,
}

/// Uniform against support-optimal density on the same signals and draw seeds.
pub fn compare_densities(cfg: &ExperimentConfig) -> Result<DensityComparison> {
    cfg.validate()?;
    let dict = cfg.dictionary.build()?;
    compare_densities_on(cfg, &dict)
}

pub fn compare_densities_on(
    cfg: &ExperimentConfig,
    dict: &BlockDictionary,
) -> Result<DensityComparison> {
    cfg.validate()?;
    let support = cfg.support_or_drawn(dict.n())?;
    let x = dict.gram_inverse();
    let uniform_pi = SamplingDistribution::uniform(dict.block_count())?;
    let (optimal_pi, _) = optimal_pi_block(dict, x, &support)?;
    let (theta_uniform, _) = theta_for(dict, x, &uniform_pi, &support)?;
    let (theta_optimal, _) = theta_for(dict, x, &optimal_pi, &support)?;
    let (lambda_uniform, _) = lambda_for(dict, x, &uniform_pi, &support)?;
    let (lambda_optimal, _) = lambda_for(dict, x, &optimal_pi, &support)?;
    let params = BoundParams::new(cfg.epsilon, dict.n())?;
    let uniform = TrialContext::new(cfg, dict, Some(&support), &PiMode::Uniform)?.curve()?;
    let optimal = TrialContext::new(
        cfg,
        dict,
        Some(&support),
        &PiMode::Explicit {
            pi: optimal_pi.probabilities().to_vec(),
        },
    )?
    .curve()?;
    Ok(DensityComparison {
        support: support.indices().to_vec(),
        theta_uniform,
        theta_optimal,
        lambda_uniform,
        lambda_optimal,
        m_bound_uniform: measurement_bound(theta_uniform, &params)?,
        m_bound_optimal: measurement_bound(theta_optimal, &params)?,
        optimal_pi: optimal_pi.probabilities().to_vec(),
        uniform,
        optimal,
    })
}

// ---------------------------------------------------------------------------
// tail checks

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailVerdict {
    Pass,
    Fail,
    Vacuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCheckRow {
    pub name: String,
    pub parameters: String,
    pub theoretical_bound: f64,
    pub empirical_frequency: f64,
    pub trials: usize,
    pub pass: TailVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct TailCheckReport {
    pub rows: Vec<TailCheckRow>,
}

impl TailCheckReport {
    /// No row failed (vacuous rows do not count against the report).
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass != TailVerdict::Fail)
    }
}

/// `empirical ≤ bound + 3·√(bound(1 − bound)/trials)`, judged only when `bound < 1`.
pub fn judge_tail(bound: f64, empirical: f64, trials: usize) -> TailVerdict {
    if bound.is_nan() || bound >= 1.0 {
        return TailVerdict::Vacuous;
    }
    let se = (bound * (1.0 - bound) / trials as f64).sqrt();
    if empirical <= bound + 3.0 * se {
        TailVerdict::Pass
    } else {
        TailVerdict::Fail
    }
}

fn tail_row(
    name: &str,
    parameters: String,
    bound: f64,
    exceed: usize,
    trials: usize,
) -> TailCheckRow {
    let empirical = exceed as f64 / trials as f64;
    TailCheckRow {
        name: name.into(),
        parameters,
        theoretical_bound: bound,
        empirical_frequency: empirical,
        trials,
        pass: judge_tail(bound, empirical, trials),
    }
}

/// Positive root of `a x² − b x − c = 0` with `a, b, c ≥ 0`.
fn positive_root(a: f64, b: f64, c: f64) -> f64 {
    (b + (b * b + 4.0 * a * c).sqrt()) / (2.0 * a)
}

/// Smallest `δ` at which the local-isometry bound equals `target`.
pub fn delta_for_bound(lambda: f64, m: usize, s: usize, target: f64) -> f64 {
    // m δ² = L·4Λ(2Λ + δ/3),  L = ln(2s/target)
    let l = (2.0 * s as f64 / target).ln().max(0.0);
    positive_root(m as f64, 4.0 * lambda * l / 3.0, 8.0 * lambda * lambda * l)
}

/// Smallest `t` at which the cross-column bound equals `target`.
pub fn t_for_bound(theta: f64, m: usize, n: usize, target: f64) -> f64 {
    // m t²/2 = L·(4Θ²(1 + 1/√m) + 2Θt/3),  L = ln(n/target)
    let l = (n as f64 / target).ln().max(0.0);
    let m = m as f64;
    positive_root(
        m / 2.0,
        2.0 * theta * l / 3.0,
        4.0 * theta * theta * (1.0 + 1.0 / m.sqrt()) * l,
    )
}

struct SampledGram {
    deviation: f64,
    cross: f64,
}

fn sample_gram_statistics(
    dict: &BlockDictionary,
    pi: &SamplingDistribution,
    support: &SupportSet,
    m: usize,
    seed: u64,
) -> Result<SampledGram> {
    let drawn = pi.draw_indices(m, seed)?;
    let gram = dict.weighted_gram(&dict.draw_weights(pi, &drawn));
    let x = dict.gram_inverse();
    Ok(SampledGram {
        deviation: local_isometry_deviation_from_gram(&gram, x, support)?,
        cross: cross_column_coherence_from_gram(&gram, x, support)?,
    })
}

fn lemma_rows(
    cfg: &ExperimentConfig,
    label: &str,
    dict: &BlockDictionary,
    pi: &SamplingDistribution,
    support: &SupportSet,
) -> Result<Vec<TailCheckRow>> {
    let x = dict.gram_inverse();
    let (theta, _) = theta_for(dict, x, pi, support)?;
    let (lambda, _) = lambda_for(dict, x, pi, support)?;
    let s = support.len();
    let n = dict.n();
    let mut rows = Vec::new();
    for m in cfg.sorted_m() {
        let stats = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(
                    cfg.seed,
                    &format!("{}/lemma/{label}", cfg.experiment_id),
                    m,
                    t,
                    Stream::Draw,
                );
                sample_gram_statistics(dict, pi, support, m, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        for &target in &cfg.tails.target_bounds {
            let delta = delta_for_bound(lambda, m, s, target);
            let t = t_for_bound(theta, m, n, target);
            let (p2, p3) = lemma_tail_bounds(theta, lambda, m, s, n, delta, t);
            let dev_exceed = stats.iter().filter(|g| g.deviation >= delta).count();
            let level = theta / (m as f64).sqrt() + t;
            let cross_exceed = stats.iter().filter(|g| g.cross >= level).count();
            rows.push(tail_row(
                "local_isometry",
                format!("dict={label};m={m};s={s};lambda={lambda:.6e};delta={delta:.6e}"),
                p2,
                dev_exceed,
                cfg.trials,
            ));
            rows.push(tail_row(
                "cross_column",
                format!("dict={label};m={m};n={n};theta={theta:.6e};t={t:.6e}"),
                p3,
                cross_exceed,
                cfg.trials,
            ));
        }
    }
    Ok(rows)
}

fn hoeffding_vectors(
    len: usize,
    complex: bool,
    rng: &mut impl Rng,
) -> Vec<(&'static str, Vec<Complex64>)> {
    let mut e1 = vec![Complex64::new(0.0, 0.0); len];
    e1[0] = Complex64::new(1.0, 0.0);
    let flat = vec![Complex64::new(1.0, 0.0); len];
    let random = (0..len)
        .map(|_| {
            let re = rng.random_range(-1.0..1.0);
            let im = if complex {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            };
            Complex64::new(re, im)
        })
        .collect();
    vec![("e1", e1), ("flat", flat), ("random", random)]
}

fn hoeffding_rows(cfg: &ExperimentConfig) -> Result<Vec<TailCheckRow>> {
    let opts = &cfg.tails;
    if opts.hoeffding_len == 0 || opts.hoeffding_trials == 0 {
        return Ok(Vec::new());
    }
    let lambda = opts.steinhaus_lambda;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Config("Steinhaus lambda must lie in (0, 1)".into()));
    }
    let mut rows = Vec::new();
    for (model, complex) in [(SignModel::Rademacher, false), (SignModel::Steinhaus, true)] {
        let name = match model {
            SignModel::Rademacher => "hoeffding_rademacher",
            _ => "hoeffding_steinhaus",
        };
        let mut vec_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            &format!("{}/{name}", cfg.experiment_id),
            0,
            0,
            Stream::Support,
        ));
        for (label, a) in hoeffding_vectors(opts.hoeffding_len, complex, &mut vec_rng) {
            let a_norm = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            // |Σ ε_i a_i| / ‖a‖₂ per trial
            let ratios: Vec<f64> = (0..opts.hoeffding_trials)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(
                        cfg.seed,
                        &format!("{}/{name}/{label}", cfg.experiment_id),
                        0,
                        t,
                        Stream::Tail,
                    );
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let sum: Complex64 = a
                        .iter()
                        .map(|&ai| {
                            let eps = match model {
                                SignModel::Rademacher => {
                                    if rng.random::<bool>() {
                                        1.0.into()
                                    } else {
                                        (-1.0).into()
                                    }
                                }
                                _ => Complex64::from_polar(
                                    1.0,
                                    rng.random_range(0.0..std::f64::consts::TAU),
                                ),
                            };
                            eps * ai
                        })
                        .sum();
                    sum.norm() / a_norm
                })
                .collect();
            for &u in &opts.hoeffding_u {
                let bound = match model {
                    SignModel::Rademacher => 2.0 * (-u * u / 2.0).exp(),
                    _ => (-lambda * u * u).exp() / (1.0 - lambda),
                };
                let exceed = ratios.iter().filter(|&&r| r >= u).count();
                let params = match model {
                    SignModel::Rademacher => format!("a={label};len={};u={u}", a.len()),
                    _ => format!("a={label};len={};u={u};lambda={lambda}", a.len()),
                };
                rows.push(tail_row(name, params, bound, exceed, opts.hoeffding_trials));
            }
        }
    }
    Ok(rows)
}

/// Per-block summands of the sampled local-isometry and cross-column sums.
struct Ensemble {
    probs: Vec<f64>,
    /// `P_S X B_k*B_k P_S* / π_k − I_s`
    matrices: Vec<CMat>,
    /// `P_S X B_k*B_k e_i / π_k` for the tracked off-support column `i`
    vectors: Vec<CVec>,
    column: usize,
}

fn ensemble(
    dict: &BlockDictionary,
    pi: &SamplingDistribution,
    support: &SupportSet,
) -> Result<Ensemble> {
    let x = dict.gram_inverse();
    let px = select_rows(x, support.indices());
    let s = support.len();
    let column = *support
        .complement()
        .first()
        .ok_or_else(|| Error::usage("support covers every index; no off-support column"))?;
    let mut probs = Vec::new();
    let mut matrices = Vec::new();
    let mut vectors = Vec::new();
    for (k, &p) in pi.probabilities().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let b = dict.block(k);
        let bb = b.adjoint() * &b;
        let n_k = &px * bb / Complex64::new(p, 0.0);
        let m_k = select_columns(&n_k, support.indices()) - CMat::identity(s, s);
        vectors.push(n_k.column(column).into_owned());
        matrices.push(m_k);
        probs.push(p);
    }
    Ok(Ensemble {
        probs,
        matrices,
        vectors,
        column,
    })
}

fn bernstein_rows(
    cfg: &ExperimentConfig,
    label: &str,
    dict: &BlockDictionary,
    pi: &SamplingDistribution,
    support: &SupportSet,
) -> Result<Vec<TailCheckRow>> {
    let trials = cfg.tails.bernstein_trials;
    if trials == 0 {
        return Ok(Vec::new());
    }
    let ens = ensemble(dict, pi, support)?;
    let s = support.len();
    let mut rows = Vec::new();
    for m in cfg.sorted_m() {
        let mf = m as f64;
        // exact constants of the sums Σ_j Y_j with Y_j = summand / m
        let b_mat = ens
            .matrices
            .iter()
            .map(norm_two_two)
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max)
            / mf;
        let mut var_left = CMat::zeros(s, s);
        let mut var_right = CMat::zeros(s, s);
        for (mk, &p) in ens.matrices.iter().zip(&ens.probs) {
            var_left += mk * mk.adjoint() * Complex64::new(p, 0.0);
            var_right += mk.adjoint() * mk * Complex64::new(p, 0.0);
        }
        let sigma2_mat = norm_two_two(&var_left)?.max(norm_two_two(&var_right)?) / mf;

        let mean: CVec = ens
            .vectors
            .iter()
            .zip(&ens.probs)
            .fold(CVec::zeros(s), |acc, (v, &p)| {
                acc + v * Complex64::new(p, 0.0)
            });
        let centered: Vec<CVec> = ens.vectors.iter().map(|v| v - &mean).collect();
        let k_vec = centered.iter().map(|v| v.norm()).fold(0.0, f64::max) / mf;
        let mut cov = CMat::zeros(s, s);
        let mut second = 0.0;
        for (v, &p) in centered.iter().zip(&ens.probs) {
            cov += v * v.adjoint() * Complex64::new(p, 0.0);
            second += p * v.norm_squared();
        }
        let sigma2_vec = norm_two_two(&cov)? / mf;
        let mu = (second / mf).sqrt();

        let tag = format!("{}/bernstein/{label}", cfg.experiment_id);
        let stats = (0..trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(cfg.seed, &tag, m, t, Stream::Draw);
                let drawn = pi.draw_indices(m, seed)?;
                let mut sum_m = CMat::zeros(s, s);
                let mut sum_v = CVec::zeros(s);
                for &k in &drawn {
                    let j = dense_index(pi, k);
                    sum_m += &ens.matrices[j];
                    sum_v += &centered[j];
                }
                Ok((
                    norm_two_two(&(sum_m / Complex64::new(mf, 0.0)))?,
                    sum_v.norm() / mf,
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        for &target in &cfg.tails.target_bounds {
            // matrix: 2s exp(−(t²/2)/(σ² + Bt/3)) = target
            let l = (2.0 * s as f64 / target).ln().max(0.0);
            let t_mat = positive_root(0.5, b_mat * l / 3.0, sigma2_mat * l);
            let bound_mat = 2.0
                * s as f64
                * (-(t_mat * t_mat / 2.0) / (sigma2_mat + b_mat * t_mat / 3.0)).exp();
            let exceed = stats.iter().filter(|(d, _)| *d >= t_mat).count();
            rows.push(tail_row(
                "matrix_bernstein",
                format!(
                    "dict={label};m={m};d={s};sigma2={sigma2_mat:.6e};B={b_mat:.6e};t={t_mat:.6e}"
                ),
                bound_mat,
                exceed,
                trials,
            ));
            // vector: exp(−(t²/2)/(σ² + 2Kμ + tK/3)) = target
            let l = (1.0 / target).ln().max(0.0);
            let t_vec = positive_root(0.5, k_vec * l / 3.0, (sigma2_vec + 2.0 * k_vec * mu) * l);
            let bound_vec = (-(t_vec * t_vec / 2.0)
                / (sigma2_vec + 2.0 * k_vec * mu + t_vec * k_vec / 3.0))
                .exp();
            let exceed = stats.iter().filter(|(_, z)| *z > mu + t_vec).count();
            rows.push(tail_row(
                "vector_bernstein",
                format!(
                    "dict={label};m={m};column={};sigma2={sigma2_vec:.6e};K={k_vec:.6e};mu={mu:.6e};t={t_vec:.6e}",
                    ens.column
                ),
                bound_vec,
                exceed,
                trials,
            ));
        }
    }
    Ok(rows)
}

/// Position of block `k` among the blocks with positive probability.
fn dense_index(pi: &SamplingDistribution, k: usize) -> usize {
    pi.probabilities()[..k].iter().filter(|&&p| p > 0.0).count()
}

/// All tail checks on the configured dictionary, support and density.
pub fn run_lemma_checks(cfg: &ExperimentConfig) -> Result<TailCheckReport> {
    cfg.validate()?;
    let dict = cfg.dictionary.build()?;
    run_lemma_checks_on(cfg, "config", &dict)
}

pub fn run_lemma_checks_on(
    cfg: &ExperimentConfig,
    label: &str,
    dict: &BlockDictionary,
) -> Result<TailCheckReport> {
    cfg.validate()?;
    let support = cfg.support_or_drawn(dict.n())?;
    let pi = match &cfg.pi_mode {
        PiMode::Uniform => SamplingDistribution::uniform(dict.block_count())?,
        PiMode::Optimal => optimal_pi_block(dict, dict.gram_inverse(), &support)?.0,
        PiMode::Explicit { pi } => SamplingDistribution::new(pi.clone())?,
    };
    dict.check_pi(&pi)
        .map_err(|e| Error::Config(format!("pi: {e}")))?;
    let mut rows = lemma_rows(cfg, label, dict, &pi, &support)?;
    rows.extend(bernstein_rows(cfg, label, dict, &pi, &support)?);
    rows.extend(hoeffding_rows(cfg)?);
    Ok(TailCheckReport { rows })
}

// ---------------------------------------------------------------------------
// output

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::usage(format!("unknown output format {s:?}"))),
        }
    }
}

/// Doubles with 17 significant digits, enough to round-trip exactly.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Anything written as a flat table.
pub trait Tabular: Serialize {
    fn header(&self) -> Vec<&'static str>;
    fn records(&self) -> Vec<Vec<String>>;
}

const CURVE_FIELDS: [&str; 7] = [
    "m",
    "trials",
    "successes",
    "success_rate",
    "wilson_ci_low",
    "wilson_ci_high",
    "mean_solve_iters",
];

fn curve_record(r: &RecoveryRow) -> Vec<String> {
    vec![
        r.m.to_string(),
        r.trials.to_string(),
        r.successes.to_string(),
        format_f64(r.success_rate),
        format_f64(r.wilson_ci_low),
        format_f64(r.wilson_ci_high),
        format_f64(r.mean_solve_iters),
    ]
}

impl Tabular for RecoveryCurve {
    fn header(&self) -> Vec<&'static str> {
        CURVE_FIELDS.to_vec()
    }
    fn records(&self) -> Vec<Vec<String>> {
        self.rows.iter().map(curve_record).collect()
    }
}

impl Tabular for DensityComparison {
    fn header(&self) -> Vec<&'static str> {
        let mut h = vec!["density"];
        h.extend(CURVE_FIELDS);
        h
    }
    fn records(&self) -> Vec<Vec<String>> {
        let tagged = |name: &str, c: &RecoveryCurve| -> Vec<Vec<String>> {
            c.rows
                .iter()
                .map(|r| {
                    let mut rec = vec![name.to_string()];
                    rec.extend(curve_record(r));
                    rec
                })
                .collect()
        };
        let mut out = tagged("uniform", &self.uniform);
        out.extend(tagged("optimal", &self.optimal));
        out
    }
}

impl Tabular for TailCheckReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "name",
            "parameters",
            "theoretical_bound",
            "empirical_frequency",
            "trials",
            "pass",
        ]
    }
    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let verdict = match r.pass {
                    TailVerdict::Pass => "pass",
                    TailVerdict::Fail => "fail",
                    TailVerdict::Vacuous => "vacuous",
                };
                vec![
                    r.name.clone(),
                    r.parameters.clone(),
                    format_f64(r.theoretical_bound),
                    format_f64(r.empirical_frequency),
                    r.trials.to_string(),
                    verdict.to_string(),
                ]
            })
            .collect()
    }
}

/// Render a table as CSV text with `\n` line endings.
pub fn to_csv<T: Tabular>(table: &T) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Numeric(format!("csv encoding: {e}"));
    w.write_record(table.header()).map_err(fail)?;
    for rec in table.records() {
        w.write_record(&rec).map_err(fail)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Numeric(format!("csv encoding: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Numeric(format!("csv encoding: {e}")))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numeric(format!("json encoding: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Write a result table to `path`.
pub fn emit_results<T: Tabular>(table: &T, format: OutputFormat, path: &Path) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => to_csv(table)?,
        OutputFormat::Json => to_json(table)?,
    };
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write to whichever of the configured outputs are set.
pub fn emit_configured<T: Tabular>(table: &T, out: &OutputPaths) -> Result<()> {
    if let Some(p) = &out.csv {
        emit_results(table, OutputFormat::Csv, p)?;
    }
    if let Some(p) = &out.json {
        emit_results(table, OutputFormat::Json, p)?;
    }
    Ok(())
}

/// Short human-readable summary of a recovery curve.
pub fn describe_curve(curve: &RecoveryCurve) -> String {
    let mut s = String::new();
    for r in &curve.rows {
        let _ = writeln!(
            s,
            "m = {:>5}  success {:>4}/{:<4} rate {:.3}  95% CI [{:.3}, {:.3}]",
            r.m, r.successes, r.trials, r.success_rate, r.wilson_ci_low, r.wilson_ci_high
        );
    }
    s
}
