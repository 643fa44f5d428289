//! Basis pursuit, exact-recovery certificates and recovery adjudication.
//!
//! The solver is a Chambolle–Pock primal-dual iteration on
//! `min ‖x‖₁ s.t. Ax = y` over `Cⁿ`, with complex soft-thresholding as the
//! proximal map of the ℓ1 norm. Every few hundred iterations it tries to
//! *polish* the iterate: guess the support, solve the restricted least-squares
//! system, and build the minimum-norm dual vector on that support. If that dual
//! vector is feasible (`‖A*w‖_∞ ≤ 1`) the polished point satisfies the KKT
//! conditions and the solve stops with a certified optimum.

use nalgebra::{DVector, SVD};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coherence::SupportSet;
use crate::error::{Error, Result};
use crate::numerics::{
    l1_norm, linf_norm, norm_two_two, select_columns, select_rows, sgn, singular_values,
    solve_square, CMat, CVec, ComplexVector, SIGMA_TOL_REL,
};

/// Margin under 1 that condition (ii) must clear.
pub const CERTIFICATE_MARGIN: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignModel {
    Rademacher,
    Steinhaus,
    Explicit,
}

/// Distribution of the moduli `|x_j|` on the support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "law")]
pub enum AmplitudeLaw {
    #[default]
    Ones,
    Uniform {
        low: f64,
        high: f64,
    },
}

/// A sparse vector together with its support and sign pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalInstance {
    pub x: ComplexVector,
    pub support: SupportSet,
    pub sign_model: SignModel,
    pub amplitudes: Vec<f64>,
}

impl SignalInstance {
    /// Wrap an explicit vector; the support is its set of nonzero entries.
    pub fn from_vector(x: ComplexVector) -> Result<Self> {
        let idx: Vec<usize> = (0..x.len()).filter(|&i| x[i].norm() > 0.0).collect();
        let support = SupportSet::new(idx, x.len())?;
        let amplitudes = support.indices().iter().map(|&i| x[i].norm()).collect();
        Ok(SignalInstance {
            x,
            support,
            sign_model: SignModel::Explicit,
            amplitudes,
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `sgn(x_S)`.
    pub fn sign_on_support(&self) -> CVec {
        CVec::from_iterator(
            self.support.len(),
            self.support.indices().iter().map(|&i| sgn(self.x[i])),
        )
    }
}

/// Random `s`-sparse signal with a uniformly drawn support.
pub fn random_signal(
    n: usize,
    s: usize,
    sign_model: SignModel,
    amplitude_law: AmplitudeLaw,
    seed: u64,
) -> Result<SignalInstance> {
    if s == 0 || s > n {
        return Err(Error::usage(format!(
            "sparsity must satisfy 1 <= s <= n, got s = {s}, n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = SupportSet::new(sample(&mut rng, n, s).into_vec(), n)?;
    random_signal_on(support, sign_model, amplitude_law, &mut rng)
}

/// Random signs and amplitudes on a given support.
pub fn random_signal_on(
    support: SupportSet,
    sign_model: SignModel,
    amplitude_law: AmplitudeLaw,
    rng: &mut impl Rng,
) -> Result<SignalInstance> {
    let n = support.n();
    let mut x = CVec::zeros(n);
    let mut amplitudes = Vec::with_capacity(support.len());
    for &i in support.indices() {
        let sign = match sign_model {
            SignModel::Rademacher => {
                if rng.random::<bool>() {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(-1.0, 0.0)
                }
            }
            SignModel::Steinhaus => {
                Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
            }
            SignModel::Explicit => {
                return Err(Error::usage("explicit sign model cannot be sampled"))
            }
        };
        let amp = match amplitude_law {
            AmplitudeLaw::Ones => 1.0,
            AmplitudeLaw::Uniform { low, high } => {
                if !(low > 0.0 && high >= low) {
                    return Err(Error::usage("amplitude range must satisfy 0 < low <= high"));
                }
                if high == low {
                    low
                } else {
                    rng.random_range(low..high)
                }
            }
        };
        amplitudes.push(amp);
        x[i] = sign * amp;
    }
    Ok(SignalInstance {
        x: ComplexVector::wrap(x),
        support,
        sign_model,
        amplitudes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Feasibility tolerance, relative: `‖Ax − y‖₂ ≤ tol_feas (1 + ‖y‖₂)`.
    pub tol_feas: f64,
    /// Relative duality gap tolerance.
    pub tol_gap: f64,
    /// Adjudication tolerance on the relative ℓ2 error.
    pub tol_success: f64,
    pub check_every: usize,
    /// Try support polishing every this many iterations; 0 disables it.
    pub polish_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 200_000,
            tol_feas: 1e-9,
            tol_gap: 1e-9,
            tol_success: 1e-4,
            check_every: 20,
            polish_every: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub x_hat: ComplexVector,
    pub objective: f64,
    pub constraint_residual: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn soft_threshold(v: &mut CVec, tau: f64) {
    for z in v.iter_mut() {
        let r = z.norm();
        *z = if r <= tau {
            Complex64::new(0.0, 0.0)
        } else {
            *z * ((r - tau) / r)
        };
    }
}

/// Relative gap between `‖x‖₁` and the dual objective of `w` scaled into the unit ℓ∞ ball.
fn duality_gap(a: &CMat, y: &CVec, x: &CVec, w: &CVec) -> f64 {
    let primal = l1_norm(x);
    let aw = a.ad_mul(w);
    let scale = linf_norm(&aw).max(1.0);
    let dual = y.dotc(w).re / scale;
    (primal - dual).abs() / primal.max(1.0)
}

/// Restricted least squares on the numerical support of `x`, certified by a dual vector.
fn polish(a: &CMat, y: &CVec, x: &CVec, tol_feas: f64, tol_gap: f64) -> Option<(CVec, f64)> {
    let n = x.len();
    let peak = linf_norm(x);
    if peak == 0.0 {
        return None;
    }
    let support: Vec<usize> = (0..n).filter(|&j| x[j].norm() > 1e-6 * peak).collect();
    if support.len() > a.nrows() {
        return None;
    }
    let a_t = select_columns(a, &support);
    let svd = SVD::new(a_t, true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= SIGMA_TOL_REL * smax {
        return None;
    }
    let x_t = svd.solve(y, 0.0).ok()?;
    let mut candidate = CVec::zeros(n);
    for (k, &j) in support.iter().enumerate() {
        candidate[j] = x_t[k];
    }
    if (a * &candidate - y).norm() > tol_feas {
        return None;
    }
    // minimum-norm w with A_T* w = sgn(x_T): w = U Σ⁻¹ V* sgn(x_T)
    let signs = x_t.map(sgn);
    let u = svd.u.as_ref()?;
    let v_t = svd.v_t.as_ref()?;
    let mut coeff = v_t * signs;
    for (c, s) in coeff.iter_mut().zip(svd.singular_values.iter()) {
        *c /= *s;
    }
    let w = u * coeff;
    let gap = duality_gap(a, y, &candidate, &w);
    if gap <= tol_gap {
        Some((candidate, gap))
    } else {
        None
    }
}

/// Equality-constrained complex ℓ1 minimization.
///
/// Hitting `max_iters` is not an error: the last iterate is returned with
/// `converged = false`.
pub fn solve_bp(a: &CMat, y: &CVec, opts: &SolverOptions) -> Result<RecoveryResult> {
    if a.nrows() != y.len() {
        return Err(Error::usage(format!(
            "A has {} rows but y has length {}",
            a.nrows(),
            y.len()
        )));
    }
    let lip = norm_two_two(a)?;
    if lip == 0.0 {
        return Err(Error::usage("sensing matrix is zero"));
    }
    let n = a.ncols();
    let tol_feas = opts.tol_feas * (1.0 + y.norm());
    let tau = 0.99 / lip;
    let sigma = 0.99 / lip;

    let mut x = CVec::zeros(n);
    let mut x_bar = x.clone();
    let mut z = CVec::zeros(a.nrows());
    let mut ax = CVec::zeros(a.nrows());
    let mut grad = CVec::zeros(n);

    let finish = |x: CVec, gap: f64, iterations: usize, converged: bool| {
        let residual = (a * &x - y).norm();
        Ok(RecoveryResult {
            objective: l1_norm(&x),
            constraint_residual: residual,
            duality_gap: gap,
            x_hat: ComplexVector::new(x)?,
            iterations,
            converged,
        })
    };

    let mut gap = f64::INFINITY;
    for iter in 0..=opts.max_iters {
        if iter % opts.check_every.max(1) == 0 || iter == opts.max_iters {
            let residual = (a * &x - y).norm();
            // optimality: -A*z ∈ ∂‖x‖₁, so w = -z is the dual variable
            gap = duality_gap(a, y, &x, &(-&z));
            if residual <= tol_feas && gap <= opts.tol_gap {
                return finish(x, gap, iter, true);
            }
            if opts.polish_every > 0 && iter > 0 && iter % opts.polish_every == 0 {
                if let Some((xp, pgap)) = polish(a, y, &x, tol_feas, opts.tol_gap) {
                    return finish(xp, pgap, iter, true);
                }
            }
        }
        if iter == opts.max_iters {
            break;
        }
        // dual ascent on the constraint: z ← z + σ(A x̄ − y)
        ax.gemv(
            Complex64::new(1.0, 0.0),
            a,
            &x_bar,
            Complex64::new(0.0, 0.0),
        );
        z.axpy(
            Complex64::new(sigma, 0.0),
            &(&ax - y),
            Complex64::new(1.0, 0.0),
        );
        // primal prox step: x ← soft(x − τ A*z, τ)
        grad.gemv_ad(Complex64::new(1.0, 0.0), a, &z, Complex64::new(0.0, 0.0));
        let mut x_new = &x - grad.scale(tau);
        soft_threshold(&mut x_new, tau);
        x_bar = x_new.scale(2.0) - &x;
        x = x_new;
    }
    finish(x, gap, opts.max_iters, false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "reason")]
pub enum Verdict {
    Pass,
    Fail(String),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Outcome of the exact-recovery certificate for one sensing matrix and signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub injective: bool,
    /// Smallest singular value of `P_S X A*A P_S*`.
    pub min_singular_on_support: f64,
    /// `max_{l ∈ S^c} |⟨(P_S X A*A P_S*)⁻¹ P_S X A*A e_l, sgn(x_S)⟩|`; absent when not injective.
    pub max_dual_correlation: Option<f64>,
    /// `‖P_S A*h − sgn(x_S)‖_∞` for the explicit dual vector `h`.
    pub dual_residual: Option<f64>,
    /// `max_{l ∈ S^c} |(A*h)_l|`.
    pub max_offsupport_dual: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualVector {
    pub h: ComplexVector,
    pub dual_residual: f64,
    pub max_offsupport_dual: f64,
}

fn check_dims(a: &CMat, x: &CMat, support: &SupportSet) -> Result<()> {
    let n = a.ncols();
    if x.shape() != (n, n) || support.n() != n {
        return Err(Error::usage(format!(
            "dimension mismatch: A has {n} columns, X is {}x{}, support over {}",
            x.nrows(),
            x.ncols(),
            support.n()
        )));
    }
    Ok(())
}

/// `h = A X P_S* (P_S A*A X P_S*)⁻¹ sgn(x_S)`, which satisfies `P_S A*h = sgn(x_S)`.
pub fn dual_vector(a: &CMat, x: &CMat, support: &SupportSet, sign_s: &CVec) -> Result<DualVector> {
    check_dims(a, x, support)?;
    if sign_s.len() != support.len() {
        return Err(Error::usage("sign vector length differs from support size"));
    }
    let s = support.indices();
    let x_cols = select_columns(x, s);
    // A*A X P_S*  (n × s)
    let gx = a.ad_mul(&(a * &x_cols));
    let on_support = select_rows(&gx, s);
    let coeff = solve_square(
        &on_support,
        &CMat::from_column_slice(s.len(), 1, sign_s.as_slice()),
    )?;
    let coeff = DVector::from_column_slice(coeff.as_slice());
    let h = a * (&x_cols * &coeff);
    let ah = a.ad_mul(&h);
    let dual_residual = s
        .iter()
        .zip(sign_s.iter())
        .map(|(&j, sj)| (ah[j] - sj).norm())
        .fold(0.0, f64::max);
    let max_offsupport_dual = support
        .complement()
        .iter()
        .map(|&l| ah[l].norm())
        .fold(0.0, f64::max);
    Ok(DualVector {
        h: ComplexVector::new(h)?,
        dual_residual,
        max_offsupport_dual,
    })
}

/// Evaluate both certificate conditions by dense solves.
pub fn check_certificate(a: &CMat, x: &CMat, sig: &SignalInstance) -> Result<CertificateReport> {
    let support = &sig.support;
    check_dims(a, x, support)?;
    let s = support.indices();
    let gram = a.ad_mul(a);
    // P_S X A*A  (s × n)
    let xg = select_rows(x, s) * &gram;
    let g = select_columns(&xg, s);
    let sv = singular_values(&g)?;
    let min_sv = *sv.last().unwrap();
    let injective = min_sv > SIGMA_TOL_REL * sv[0];
    if !injective {
        return Ok(CertificateReport {
            injective,
            min_singular_on_support: min_sv,
            max_dual_correlation: None,
            dual_residual: None,
            max_offsupport_dual: None,
            verdict: Verdict::Fail("P_S X A*A P_S* is not injective".into()),
        });
    }
    let sign_s = sig.sign_on_support();
    let off = support.complement();
    let max_corr = if off.is_empty() {
        0.0
    } else {
        let v = solve_square(&g, &select_columns(&xg, &off))?;
        v.column_iter()
            .map(|col| col.dotc(&sign_s).norm())
            .fold(0.0, f64::max)
    };
    let dual = dual_vector(a, x, support, &sign_s)?;
    let verdict = if max_corr < 1.0 - CERTIFICATE_MARGIN {
        Verdict::Pass
    } else {
        Verdict::Fail(format!("max dual correlation {max_corr:.6} is not below 1"))
    };
    Ok(CertificateReport {
        injective,
        min_singular_on_support: min_sv,
        max_dual_correlation: Some(max_corr),
        dual_residual: Some(dual.dual_residual),
        max_offsupport_dual: Some(dual.max_offsupport_dual),
        verdict,
    })
}

/// Success iff `‖x̂ − x‖₂ / max(‖x‖₂, 1) ≤ tol` (inclusive).
pub fn adjudicate(sig: &SignalInstance, result: &RecoveryResult, tol: f64) -> Result<bool> {
    if sig.x.len() != result.x_hat.len() {
        return Err(Error::usage("recovered vector has the wrong length"));
    }
    Ok(relative_error(sig, result) <= tol)
}

pub fn relative_error(sig: &SignalInstance, result: &RecoveryResult) -> f64 {
    (result.x_hat.as_vec() - sig.x.as_vec()).norm() / sig.x.norm().max(1.0)
}
