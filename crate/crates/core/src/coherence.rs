//! Support-restricted coherence quantities, optimal sampling densities and
//! measurement-count bounds.
//!
//! All quantities take the anisotropy correction `X = (A₀*A₀)⁻¹` explicitly. For a
//! random block `B = B_k/√π_k` (probability `π_k`) the almost-sure bounds reduce to a
//! maximum over blocks with `π_k > 0`:
//!
//! * `Θ_S = max_k √(‖B_k*B_k X P_S*‖_{∞→∞} ‖P_S X B_k*B_k‖_{∞→∞}) / π_k`
//! * `Λ_S = max_k ‖P_S X B_k*B_k P_S*‖_{2→2} / π_k`
//!
//! Both are the least such bounds, so `Λ_S ≤ Θ_S` always holds.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::block_model::{BlockDictionary, SamplingDistribution, SensingDraw};
use crate::error::{Error, Result};
use crate::numerics::{norm_inf_inf, norm_two_two, select_columns, select_rows, CMat};

/// Default numerical constant of the measurement bound.
pub const DEFAULT_BOUND_CONSTANT: f64 = 128.0;

/// A nonempty sorted set of distinct zero-based column indices below `n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupportSet {
    indices: Vec<usize>,
    n: usize,
}

impl SupportSet {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::usage("support must be nonempty"));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::usage("support indices must be distinct"));
        }
        if let Some(&bad) = indices.last().filter(|&&i| i >= n) {
            return Err(Error::usage(format!(
                "support index {bad} out of range for n = {n}"
            )));
        }
        Ok(SupportSet { indices, n })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// `S^c` in increasing order.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.n).filter(|i| !self.contains(*i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceProfile {
    pub theta: f64,
    pub lambda: f64,
    /// `√(C¹_k C²_k)`; `Θ_S` is the max of these over `π_k` for `π_k > 0`.
    pub per_block_theta: Vec<f64>,
    /// `‖P_S X B_k*B_k P_S*‖_{2→2}`; `Λ_S` is the max of these over `π_k`.
    pub per_block_lambda: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Isolated,
    Block,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub kind: CostKind,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl CostTable {
    /// `√(c¹_k c²_k)` per item.
    pub fn geometric_means(&self) -> Vec<f64> {
        self.c1
            .iter()
            .zip(&self.c2)
            .map(|(a, b)| (a * b).sqrt())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub epsilon: f64,
    pub c_const: f64,
    pub n: usize,
}

impl BoundParams {
    pub fn new(epsilon: f64, n: usize) -> Result<Self> {
        Self::with_constant(epsilon, DEFAULT_BOUND_CONSTANT, n)
    }

    pub fn with_constant(epsilon: f64, c_const: f64, n: usize) -> Result<Self> {
        let p = BoundParams {
            epsilon,
            c_const,
            n,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::usage(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.c_const > 0.0 && self.c_const.is_finite()) {
            return Err(Error::usage("bound constant must be positive"));
        }
        if self.n == 0 {
            return Err(Error::usage("n must be positive"));
        }
        Ok(())
    }
}

fn check_inputs(dict: &BlockDictionary, x: &CMat, support: &SupportSet) -> Result<()> {
    let n = dict.n();
    if x.shape() != (n, n) {
        return Err(Error::usage(format!(
            "X must be {n}x{n}, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if support.n() != n {
        return Err(Error::usage(format!(
            "support is over {} indices, dictionary has n = {n}",
            support.n()
        )));
    }
    Ok(())
}

/// `(C¹_k, C²_k)` for block `B_k`.
fn block_costs(b: &CMat, x_cols_s: &CMat, x_rows_s: &CMat) -> Result<(f64, f64)> {
    // B_k*B_k X P_S* = B_k* (B_k X P_S*)
    let left = b.adjoint() * (b * x_cols_s);
    // P_S X B_k*B_k = (P_S X B_k*) B_k
    let right = (x_rows_s * b.adjoint()) * b;
    Ok((norm_inf_inf(&left)?, norm_inf_inf(&right)?))
}

/// Block costs `C¹_{S,k} = ‖D_k*D_k X P_S*‖_{∞→∞}` and `C²_{S,k} = ‖P_S X D_k*D_k‖_{∞→∞}`.
pub fn block_cost_table(
    dict: &BlockDictionary,
    x: &CMat,
    support: &SupportSet,
) -> Result<CostTable> {
    check_inputs(dict, x, support)?;
    let xc = select_columns(x, support.indices());
    let xr = select_rows(x, support.indices());
    let mut c1 = Vec::with_capacity(dict.block_count());
    let mut c2 = Vec::with_capacity(dict.block_count());
    for k in 0..dict.block_count() {
        let (a, b) = block_costs(&dict.block(k), &xc, &xr)?;
        c1.push(a);
        c2.push(b);
    }
    Ok(CostTable {
        kind: CostKind::Block,
        c1,
        c2,
    })
}

/// Isolated costs `c¹_{S,k} = ‖a_k‖_∞ ‖a_k* X P_S*‖_1` and
/// `c²_{S,k} = ‖P_S X a_k‖_∞ ‖a_k*‖_1`, where `a_k*` is row `k` of `A₀`.
pub fn isolated_cost_table(
    dict: &BlockDictionary,
    x: &CMat,
    support: &SupportSet,
) -> Result<CostTable> {
    check_inputs(dict, x, support)?;
    if !dict.is_isolated() {
        return Err(Error::usage(
            "isolated cost table needs single-row blocks (d_k = 1)",
        ));
    }
    let xc = select_columns(x, support.indices());
    let xr = select_rows(x, support.indices());
    let a0 = dict.a0();
    let n = dict.n();
    let mut c1 = Vec::with_capacity(n);
    let mut c2 = Vec::with_capacity(n);
    for k in 0..n {
        let row = a0.row(k);
        let linf = row.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let l1: f64 = row.iter().map(|z| z.norm()).sum();
        let proj: f64 = (row * &xc).iter().map(|z| z.norm()).sum();
        let a_k: DVector<_> = row.adjoint();
        let col = &xr * a_k;
        let col_inf = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        c1.push(linf * proj);
        c2.push(col_inf * l1);
    }
    Ok(CostTable {
        kind: CostKind::Isolated,
        c1,
        c2,
    })
}

/// Largest `value_k / π_k` over blocks with positive probability.
fn max_over_support_of_pi(values: &[f64], pi: &SamplingDistribution) -> f64 {
    values
        .iter()
        .zip(pi.probabilities())
        .filter(|(_, &p)| p > 0.0)
        .map(|(v, p)| v / p)
        .fold(0.0, f64::max)
}

/// Per-block symmetrized values `√(C¹_k C²_k)`.
pub fn per_block_theta(dict: &BlockDictionary, x: &CMat, support: &SupportSet) -> Result<Vec<f64>> {
    Ok(block_cost_table(dict, x, support)?.geometric_means())
}

/// Per-block `‖P_S X B_k*B_k P_S*‖_{2→2}`.
pub fn per_block_lambda(
    dict: &BlockDictionary,
    x: &CMat,
    support: &SupportSet,
) -> Result<Vec<f64>> {
    check_inputs(dict, x, support)?;
    let xr = select_rows(x, support.indices());
    (0..dict.block_count())
        .map(|k| {
            let b = dict.block(k);
            let bs = select_columns(&b, support.indices());
            norm_two_two(&((&xr * b.adjoint()) * bs))
        })
        .collect()
}

/// `Θ_S` as the least almost-sure bound, with its per-block values.
pub fn theta_for(
    dict: &BlockDictionary,
    x: &CMat,
    pi: &SamplingDistribution,
    support: &SupportSet,
) -> Result<(f64, Vec<f64>)> {
    dict.check_pi(pi)?;
    let per_block = per_block_theta(dict, x, support)?;
    Ok((max_over_support_of_pi(&per_block, pi), per_block))
}

/// `Λ_S` as the least almost-sure bound, with its per-block values.
pub fn lambda_for(
    dict: &BlockDictionary,
    x: &CMat,
    pi: &SamplingDistribution,
    support: &SupportSet,
) -> Result<(f64, Vec<f64>)> {
    dict.check_pi(pi)?;
    let per_block = per_block_lambda(dict, x, support)?;
    Ok((max_over_support_of_pi(&per_block, pi), per_block))
}

pub fn coherence_profile(
    dict: &BlockDictionary,
    x: &CMat,
    pi: &SamplingDistribution,
    support: &SupportSet,
) -> Result<CoherenceProfile> {
    let (theta, per_block_theta) = theta_for(dict, x, pi, support)?;
    let (lambda, per_block_lambda) = lambda_for(dict, x, pi, support)?;
    Ok(CoherenceProfile {
        theta,
        lambda,
        per_block_theta,
        per_block_lambda,
    })
}

/// `Θ_S` with `X` replaced by the identity: the symmetrized isotropic coherence.
pub fn theta_isotropic(
    dict: &BlockDictionary,
    pi: &SamplingDistribution,
    support: &SupportSet,
) -> Result<f64> {
    let n = dict.n();
    Ok(theta_for(dict, &CMat::identity(n, n), pi, support)?.0)
}

fn optimal_from_costs(table: &CostTable) -> Result<(SamplingDistribution, f64)> {
    let weights = table.geometric_means();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::usage(
            "all sampling costs vanish; the support is incompatible with the dictionary",
        ));
    }
    let pi = SamplingDistribution::from_weights(&weights)?;
    Ok((pi, total))
}

/// Density minimizing `Θ_S` for single-row blocks: `π_k ∝ √(c¹_k c²_k)`, minimum `Σ_k √(c¹_k c²_k)`.
pub fn optimal_pi_isolated(
    dict: &BlockDictionary,
    x: &CMat,
    support: &SupportSet,
) -> Result<(SamplingDistribution, f64)> {
    optimal_from_costs(&isolated_cost_table(dict, x, support)?)
}

/// Density minimizing `Θ_S` for block sampling: `π_k ∝ √(C¹_k C²_k)`, minimum `Σ_k √(C¹_k C²_k)`.
pub fn optimal_pi_block(
    dict: &BlockDictionary,
    x: &CMat,
    support: &SupportSet,
) -> Result<(SamplingDistribution, f64)> {
    optimal_from_costs(&block_cost_table(dict, x, support)?)
}

/// Smallest admissible draw count: `⌈max(c Θ(Θ+2) ln²(8n/ε), Θ²)⌉ + 1`.
pub fn measurement_bound(theta: f64, params: &BoundParams) -> Result<u64> {
    params.validate()?;
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::usage(format!("theta must be positive, got {theta}")));
    }
    let log = (8.0 * params.n as f64 / params.epsilon).ln();
    let main = params.c_const * theta * (theta + 2.0) * log * log;
    Ok(main.max(theta * theta).ceil() as u64 + 1)
}

/// `⌈64 Λ(2Λ+1) ln(8n/ε) ln(8s/ε)⌉`.
pub fn proof_side_bound(lambda: f64, n: usize, s: usize, epsilon: f64) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::usage("epsilon must lie in (0, 1)"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) || n == 0 || s == 0 {
        return Err(Error::usage("lambda must be nonnegative and n, s positive"));
    }
    let ln_n = (8.0 * n as f64 / epsilon).ln();
    let ln_s = (8.0 * s as f64 / epsilon).ln();
    Ok((64.0 * lambda * (2.0 * lambda + 1.0) * ln_n * ln_s).ceil() as u64)
}

/// `‖P_S X G P_S* − I_s‖_{2→2}` for a Gram `G = A*A`.
pub fn local_isometry_deviation_from_gram(
    gram: &CMat,
    x: &CMat,
    support: &SupportSet,
) -> Result<f64> {
    let s = support.len();
    let xr = select_rows(x, support.indices());
    let m = select_columns(&(&xr * gram), support.indices()) - CMat::identity(s, s);
    norm_two_two(&m)
}

/// `‖P_S X A*A P_S* − I_s‖_{2→2}`.
pub fn local_isometry_deviation(draw: &SensingDraw, x: &CMat, support: &SupportSet) -> Result<f64> {
    local_isometry_deviation_from_gram(&draw.gram(), x, support)
}

/// `max_{i ∈ S^c} ‖P_S X G e_i‖_2` for a Gram `G = A*A`.
pub fn cross_column_coherence_from_gram(
    gram: &CMat,
    x: &CMat,
    support: &SupportSet,
) -> Result<f64> {
    let off = support.complement();
    if off.is_empty() {
        return Err(Error::usage(
            "cross-column coherence needs a nonempty complement of the support",
        ));
    }
    let xr = select_rows(x, support.indices());
    let prod = &xr * gram;
    Ok(off
        .iter()
        .map(|&i| prod.column(i).norm())
        .fold(0.0, f64::max))
}

/// `max_{i ∈ S^c} ‖P_S X A*A e_i‖_2`.
pub fn cross_column_coherence(draw: &SensingDraw, x: &CMat, support: &SupportSet) -> Result<f64> {
    cross_column_coherence_from_gram(&draw.gram(), x, support)
}

/// Right-hand sides of the local-isometry and cross-column tail bounds:
///
/// * `p2 = 2s exp(−m δ² / (4Λ(2Λ + δ/3)))`
/// * `p3 = n exp(−(m t²/2) / (4Θ² + 4Θ²/√m + 2Θt/3))`
pub fn lemma_tail_bounds(
    theta: f64,
    lambda: f64,
    m: usize,
    s: usize,
    n: usize,
    delta: f64,
    t: f64,
) -> (f64, f64) {
    let m = m as f64;
    let p2 = 2.0
        * s as f64
        * (-(m * delta * delta) / (4.0 * lambda * (2.0 * lambda + delta / 3.0))).exp();
    let denom = 4.0 * theta * theta + 4.0 * theta * theta / m.sqrt() + 2.0 * theta * t / 3.0;
    let p3 = n as f64 * (-(m * t * t / 2.0) / denom).exp();
    (p2, p3)
}

/// Summary written by the `coherence` CLI subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub theta: f64,
    pub lambda: f64,
    pub pi_star: Vec<f64>,
    pub m_min: u64,
    pub per_block: Vec<PerBlockEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerBlockEntry {
    pub block: usize,
    pub pi: f64,
    pub theta: f64,
    pub lambda: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Coherence of `π`, the optimal density, and the bound at the given `π`.
pub fn coherence_report(
    dict: &BlockDictionary,
    pi: &SamplingDistribution,
    support: &SupportSet,
    params: &BoundParams,
) -> Result<CoherenceReport> {
    let x = dict.gram_inverse();
    let profile = coherence_profile(dict, x, pi, support)?;
    let costs = block_cost_table(dict, x, support)?;
    let (pi_star, _) = optimal_from_costs(&costs)?;
    let m_min = if profile.theta > 0.0 {
        measurement_bound(profile.theta, params)?
    } else {
        0
    };
    let per_block = (0..dict.block_count())
        .map(|k| PerBlockEntry {
            block: k,
            pi: pi.probabilities()[k],
            theta: profile.per_block_theta[k],
            lambda: profile.per_block_lambda[k],
            c1: costs.c1[k],
            c2: costs.c2[k],
        })
        .collect();
    Ok(CoherenceReport {
        theta: profile.theta,
        lambda: profile.lambda,
        pi_star: pi_star.probabilities().to_vec(),
        m_min,
        per_block,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{c64, ComplexMatrix};
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dft(n: usize) -> ComplexMatrix {
        let s = 1.0 / (n as f64).sqrt();
        ComplexMatrix::new(DMatrix::from_fn(n, n, |k, j| {
            Complex64::from_polar(s, -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64)
        }))
        .unwrap()
    }

    fn random_dict(rng: &mut impl Rng, n: usize, sizes: &[usize]) -> BlockDictionary {
        let a0 = DMatrix::from_fn(n, n, |_, _| {
            c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let mut blocks = Vec::new();
        let mut r = 0;
        for &d in sizes {
            blocks.push(ComplexMatrix::new(a0.rows(r, d).into_owned()).unwrap());
            r += d;
        }
        BlockDictionary::assemble(&blocks).unwrap()
    }

    // Direct entrywise evaluation of the defining formula, one block at a time.
    fn theta_oracle(dict: &BlockDictionary, pi: &[f64], s: &[usize]) -> f64 {
        let x = dict.gram_inverse();
        let n = dict.n();
        let mut best = 0.0f64;
        for k in 0..dict.block_count() {
            if pi[k] == 0.0 {
                continue;
            }
            let b = dict.block(k);
            let mut bb = DMatrix::<Complex64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    for r in 0..b.nrows() {
                        bb[(i, j)] += b[(r, i)].conj() * b[(r, j)] / pi[k];
                    }
                }
            }
            let bbx = &bb * x.as_mat();
            let xbb = x.as_mat() * &bb;
            let mut left = 0.0f64;
            for i in 0..n {
                left = left.max(s.iter().map(|&j| bbx[(i, j)].norm()).sum());
            }
            let mut right = 0.0f64;
            for &i in s {
                right = right.max((0..n).map(|j| xbb[(i, j)].norm()).sum());
            }
            best = best.max((left * right).sqrt());
        }
        best
    }

    #[test]
    fn support_set_validation() {
        assert!(SupportSet::new(vec![], 4).is_err());
        assert!(SupportSet::new(vec![1, 1], 4).is_err());
        assert!(SupportSet::new(vec![4], 4).is_err());
        let s = SupportSet::new(vec![3, 0], 4).unwrap();
        assert_eq!(s.indices(), &[0, 3]);
        assert_eq!(s.complement(), vec![1, 2]);
    }

    #[test]
    fn identity_dictionary_theta() {
        let n = 8;
        let d = BlockDictionary::identity(n).unwrap();
        let x = d.gram_inverse();
        let s = SupportSet::new(vec![1, 4, 6], n).unwrap();
        let uniform = SamplingDistribution::uniform(n).unwrap();
        let (theta, _) = theta_for(&d, x, &uniform, &s).unwrap();
        assert!((theta - n as f64).abs() < 1e-12);
        let mut w = vec![0.0; n];
        for &i in s.indices() {
            w[i] = 1.0;
        }
        let on_s = SamplingDistribution::from_weights(&w).unwrap();
        let (theta, _) = theta_for(&d, x, &on_s, &s).unwrap();
        assert!((theta - 3.0).abs() < 1e-12);
        let (lambda, _) = lambda_for(&d, x, &on_s, &s).unwrap();
        assert!((lambda - 3.0).abs() < 1e-12);
    }

    #[test]
    fn theta_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let d = random_dict(&mut rng, 8, &[3, 5]);
            let pi = SamplingDistribution::new(vec![0.3, 0.7]).unwrap();
            let s = SupportSet::new(vec![0, 5, 6], 8).unwrap();
            let (theta, _) = theta_for(&d, d.gram_inverse(), &pi, &s).unwrap();
            let oracle = theta_oracle(&d, &[0.3, 0.7], s.indices());
            assert!((theta - oracle).abs() <= 1e-10 * oracle);
        }
    }

    #[test]
    fn unitary_single_block_lambda_is_one() {
        let d = BlockDictionary::assemble(&[dft(8)]).unwrap();
        let pi = SamplingDistribution::uniform(1).unwrap();
        let s = SupportSet::new(vec![2, 3, 7], 8).unwrap();
        let (lambda, _) = lambda_for(&d, d.gram_inverse(), &pi, &s).unwrap();
        assert!((lambda - 1.0).abs() < 1e-10);
        let costs = block_cost_table(&d, d.gram_inverse(), &s).unwrap();
        assert!((costs.c1[0] - 1.0).abs() < 1e-10);
        assert!((costs.c2[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn isolated_costs_identity_and_dft() {
        let n = 6;
        let s = SupportSet::new(vec![0, 3], n).unwrap();
        let id = BlockDictionary::identity(n).unwrap();
        let t = isolated_cost_table(&id, id.gram_inverse(), &s).unwrap();
        for k in 0..n {
            let e = if s.contains(k) { 1.0 } else { 0.0 };
            assert_eq!(t.c1[k], e);
            assert_eq!(t.c2[k], e);
        }
        // |entries| = 1/√n: c¹ = (1/√n)(s/√n) = s/n while c² = (1/√n)(n/√n) = 1
        let f = BlockDictionary::isolated(&dft(n)).unwrap();
        let t = isolated_cost_table(&f, f.gram_inverse(), &s).unwrap();
        for k in 0..n {
            assert!((t.c1[k] - 2.0 / n as f64).abs() < 1e-12);
            assert!((t.c2[k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_cost_rejects_blocks() {
        let d = BlockDictionary::assemble(&[dft(4)]).unwrap();
        let s = SupportSet::new(vec![0], 4).unwrap();
        assert!(matches!(
            isolated_cost_table(&d, d.gram_inverse(), &s),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn isolated_anisotropic_costs_match_entrywise_evaluation() {
        let a0 = ComplexMatrix::from_rows(&[
            vec![c64(1., 0.), c64(0.5, 0.), c64(0., 0.), c64(0., 0.2)],
            vec![c64(0., 0.), c64(1., 0.), c64(0.3, -0.1), c64(0., 0.)],
            vec![c64(0.2, 0.), c64(0., 0.), c64(2., 0.), c64(0.1, 0.)],
            vec![c64(0., 0.), c64(0., 0.4), c64(0., 0.), c64(1., 0.)],
        ])
        .unwrap();
        let d = BlockDictionary::isolated(&a0).unwrap();
        let x = d.gram_inverse();
        let s = [1usize, 2];
        let support = SupportSet::new(s.to_vec(), 4).unwrap();
        let t = isolated_cost_table(&d, x, &support).unwrap();
        for k in 0..4 {
            let linf = (0..4).map(|j| a0[(k, j)].norm()).fold(0.0, f64::max);
            let l1: f64 = (0..4).map(|j| a0[(k, j)].norm()).sum();
            let mut proj = 0.0;
            for &c in &s {
                let mut acc = c64(0., 0.);
                for j in 0..4 {
                    acc += a0[(k, j)] * x[(j, c)];
                }
                proj += acc.norm();
            }
            let mut col_inf = 0.0f64;
            for &r in &s {
                let mut acc = c64(0., 0.);
                for j in 0..4 {
                    acc += x[(r, j)] * a0[(k, j)].conj();
                }
                col_inf = col_inf.max(acc.norm());
            }
            assert!((t.c1[k] - linf * proj).abs() < 1e-12);
            assert!((t.c2[k] - col_inf * l1).abs() < 1e-12);
        }
        // block costs agree with isolated ones when d_k = 1
        let b = block_cost_table(&d, x, &support).unwrap();
        for k in 0..4 {
            assert!((b.c1[k] - t.c1[k]).abs() <= 1e-12 * t.c1[k].max(1.0));
            assert!((b.c2[k] - t.c2[k]).abs() <= 1e-12 * t.c2[k].max(1.0));
        }
    }

    #[test]
    fn optimal_pi_identity() {
        let d = BlockDictionary::identity(4).unwrap();
        let s = SupportSet::new(vec![0, 1], 4).unwrap();
        let (pi, theta) = optimal_pi_isolated(&d, d.gram_inverse(), &s).unwrap();
        assert_eq!(pi.probabilities(), &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(theta, 2.0);
    }

    #[test]
    fn optimal_pi_dft() {
        let d = BlockDictionary::isolated(&dft(4)).unwrap();
        let s = SupportSet::new(vec![1, 2], 4).unwrap();
        let (pi, theta) = optimal_pi_isolated(&d, d.gram_inverse(), &s).unwrap();
        for p in pi.probabilities() {
            assert!((p - 0.25).abs() < 1e-12);
        }
        // Σ_k √(s/n) = √(s n)
        assert!((theta - 8.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn optimal_pi_block_single_and_symmetric() {
        let single = BlockDictionary::assemble(&[dft(4)]).unwrap();
        let s = SupportSet::new(vec![0, 3], 4).unwrap();
        let (pi, theta) = optimal_pi_block(&single, single.gram_inverse(), &s).unwrap();
        assert_eq!(pi.probabilities(), &[1.0]);
        let t = block_cost_table(&single, single.gram_inverse(), &s).unwrap();
        assert!((theta - (t.c1[0] * t.c2[0]).sqrt()).abs() < 1e-15);

        // the two halves of the DFT are related by a modulation, hence symmetric
        let f = dft(4);
        let halves = [
            ComplexMatrix::new(f.rows(0, 2).into_owned()).unwrap(),
            ComplexMatrix::new(f.rows(2, 2).into_owned()).unwrap(),
        ];
        let d = BlockDictionary::assemble(&halves).unwrap();
        let (pi, _) = optimal_pi_block(&d, d.gram_inverse(), &s).unwrap();
        assert!((pi.probabilities()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn optimal_theta_reproduced_by_theta_for() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_dict(&mut rng, 6, &[1; 6]);
        let s = SupportSet::new(vec![1, 4], 6).unwrap();
        let (pi, theta) = optimal_pi_isolated(&d, d.gram_inverse(), &s).unwrap();
        let (direct, _) = theta_for(&d, d.gram_inverse(), &pi, &s).unwrap();
        assert!((direct - theta).abs() <= 1e-10 * theta);
    }

    #[test]
    fn all_zero_costs_rejected() {
        // block 0 touches only column 0, block 1 only column 1; with pi on neither
        // the support still has costs, so build a table of zeros explicitly
        let table = CostTable {
            kind: CostKind::Block,
            c1: vec![0.0, 0.0],
            c2: vec![0.0, 1.0],
        };
        assert!(matches!(optimal_from_costs(&table), Err(Error::Usage(_))));
    }

    #[test]
    fn measurement_bound_formula() {
        let p = BoundParams::new(0.01, 1024).unwrap();
        let l = (819200.0f64).ln();
        let expected = (128.0 * 10.0 * 12.0 * l * l).ceil() as u64 + 1;
        assert_eq!(measurement_bound(10.0, &p).unwrap(), expected);
        assert!((l - 13.616083533).abs() < 1e-8);

        let tiny = BoundParams::with_constant(0.5, 1e-30, 2).unwrap();
        assert_eq!(measurement_bound(1e6, &tiny).unwrap(), 1_000_000_000_001);

        assert!(BoundParams::new(1.0, 4).is_err());
        assert!(BoundParams::with_constant(0.1, 0.0, 4).is_err());
    }

    #[test]
    fn proof_side_bound_formula() {
        assert_eq!(proof_side_bound(1.0, 8, 8, 0.5).unwrap(), 4521);
        assert_eq!(proof_side_bound(0.0, 8, 8, 0.5).unwrap(), 0);
        let mut last = 0;
        for l in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let m = proof_side_bound(l, 64, 4, 0.1).unwrap();
            assert!(m > last);
            last = m;
        }
    }

    #[test]
    fn tail_bound_values() {
        let (p2, _) = lemma_tail_bounds(1.0, 1.0, 100, 4, 16, 0.5, 0.5);
        assert!((p2 - 8.0 * (-75.0f64 / 26.0).exp()).abs() < 1e-15);
        let (_, p3) = lemma_tail_bounds(1.0, 1.0, 100, 4, 16, 0.5, 0.5);
        assert!((p3 - 16.0 * (-12.5 / (4.0 + 0.4 + 1.0 / 3.0f64)).exp()).abs() < 1e-14);
        let mut last = f64::INFINITY;
        for delta in [0.1, 1.0, 5.0, 10.0, 30.0] {
            let (p2, _) = lemma_tail_bounds(1.0, 1.0, 100, 4, 16, delta, 0.5);
            assert!(p2 < last);
            last = p2;
        }
        assert!(last < 1e-80);
    }

    #[test]
    fn deviation_statistics_vanish_for_full_unitary_block() {
        let d = BlockDictionary::assemble(&[dft(8)]).unwrap();
        let pi = SamplingDistribution::uniform(1).unwrap();
        let draw = d.draw_sensing(&pi, 3, 1).unwrap();
        let s = SupportSet::new(vec![1, 5], 8).unwrap();
        let x = d.gram_inverse();
        assert!(local_isometry_deviation(&draw, x, &s).unwrap() < 1e-12);
        assert!(cross_column_coherence(&draw, x, &s).unwrap() < 1e-12);
    }

    #[test]
    fn cross_coherence_zero_on_identity_and_full_support_rejected() {
        let d = BlockDictionary::identity(6).unwrap();
        let pi = SamplingDistribution::uniform(6).unwrap();
        let draw = d.draw_sensing(&pi, 10, 77).unwrap();
        let s = SupportSet::new(vec![0, 2], 6).unwrap();
        assert_eq!(
            cross_column_coherence(&draw, d.gram_inverse(), &s).unwrap(),
            0.0
        );
        let full = SupportSet::new((0..6).collect(), 6).unwrap();
        assert!(cross_column_coherence(&draw, d.gram_inverse(), &full).is_err());
    }

    #[test]
    fn cross_coherence_matches_column_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = random_dict(&mut rng, 6, &[2, 2, 2]);
        let pi = SamplingDistribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        let draw = d.draw_sensing(&pi, 5, 3).unwrap();
        let s = SupportSet::new(vec![1, 3], 6).unwrap();
        let x = d.gram_inverse();
        let got = cross_column_coherence(&draw, x, &s).unwrap();
        let g = draw.gram();
        let mut best = 0.0f64;
        for i in [0usize, 2, 4, 5] {
            let mut sq = 0.0;
            for &r in s.indices() {
                let mut acc = c64(0., 0.);
                for j in 0..6 {
                    acc += x[(r, j)] * g[(j, i)];
                }
                sq += acc.norm_sqr();
            }
            best = best.max(sq.sqrt());
        }
        assert!((got - best).abs() <= 1e-12 * best.max(1.0));
    }

    #[test]
    fn deviation_below_lambda_plus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = random_dict(&mut rng, 6, &[3, 3]);
        let pi = SamplingDistribution::new(vec![0.4, 0.6]).unwrap();
        let s = SupportSet::new(vec![0, 4], 6).unwrap();
        let x = d.gram_inverse();
        let (lambda, _) = lambda_for(&d, x, &pi, &s).unwrap();
        for seed in 0..20 {
            let draw = d.draw_sensing(&pi, 4, seed).unwrap();
            let dev = local_isometry_deviation(&draw, x, &s).unwrap();
            assert!(dev <= lambda + 1.0 + 1e-10);
        }
    }

    #[test]
    fn deviation_decays_with_m() {
        let n = 8;
        let d = BlockDictionary::identity(n).unwrap();
        let s = SupportSet::new(vec![1, 2, 5], n).unwrap();
        let mut w = vec![0.0; n];
        for &i in s.indices() {
            w[i] = 1.0;
        }
        let pi = SamplingDistribution::from_weights(&w).unwrap();
        let mean_dev = |m: usize| {
            (0..40)
                .map(|seed| {
                    let draw = d.draw_sensing(&pi, m, seed).unwrap();
                    local_isometry_deviation(&draw, d.gram_inverse(), &s).unwrap()
                })
                .sum::<f64>()
                / 40.0
        };
        let small = mean_dev(30);
        let large = mean_dev(3000);
        assert!(large < small / 5.0, "{small} -> {large}");
    }
}
