#![allow(dead_code)]

use anisocs::numerics::c64;
use anisocs::trajectories::dictionary_from_frequencies;
use anisocs::{BlockDictionary, CMat, CVec, ComplexMatrix, FrequencyGrid, SamplingDistribution};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use rand::Rng;

/// 1-D Fourier rows at `k + U(−jitter, jitter)`, grouped into contiguous blocks.
pub fn jittered_fourier(
    rng: &mut impl Rng,
    n: usize,
    block_rows: usize,
    jitter: f64,
) -> BlockDictionary {
    let grid = FrequencyGrid::one_d(n).unwrap();
    let freqs: Vec<Vec<f64>> = (0..n)
        .map(|k| vec![k as f64 + rng.random_range(-jitter..=jitter)])
        .collect();
    let blocks: Vec<Vec<Vec<f64>>> = freqs.chunks(block_rows).map(<[_]>::to_vec).collect();
    dictionary_from_frequencies(&grid, &blocks).unwrap()
}

/// Dense random complex blocks of `block_rows` rows (the last one may be shorter); strongly anisotropic.
pub fn random_dense(rng: &mut impl Rng, n: usize, block_rows: usize) -> BlockDictionary {
    let mut sizes = Vec::new();
    let mut left = n;
    while left > 0 {
        let d = block_rows.min(left);
        sizes.push(d);
        left -= d;
    }
    random_dense_sized(rng, n, &sizes)
}

pub fn random_dense_sized(rng: &mut impl Rng, n: usize, sizes: &[usize]) -> BlockDictionary {
    let blocks: Vec<ComplexMatrix> = sizes
        .iter()
        .map(|&d| {
            ComplexMatrix::new(DMatrix::from_fn(d, n, |_, _| {
                c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }))
            .unwrap()
        })
        .collect();
    BlockDictionary::assemble(&blocks).unwrap()
}

/// Uniform point of the probability simplex (normalized exponentials).
pub fn random_simplex(rng: &mut impl Rng, k: usize) -> SamplingDistribution {
    let w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    SamplingDistribution::from_weights(&w).unwrap()
}

/// Real basis pursuit `min ‖x‖₁ s.t. Ax = y` over `x ∈ ℝⁿ`, with the complex
/// constraint split into real and imaginary rows and `x = p − q`, `p, q ≥ 0`.
pub fn lp_split_bp(a: &CMat, y: &CVec) -> Option<Vec<f64>> {
    let n = a.ncols();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let p: Vec<_> = (0..n)
        .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    let q: Vec<_> = (0..n)
        .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    for i in 0..a.nrows() {
        for (coef, rhs) in [
            ((0..n).map(|j| a[(i, j)].re).collect::<Vec<_>>(), y[i].re),
            ((0..n).map(|j| a[(i, j)].im).collect::<Vec<_>>(), y[i].im),
        ] {
            if coef.iter().all(|c| c.abs() < 1e-14) {
                continue;
            }
            let terms: Vec<_> = (0..n)
                .flat_map(|j| [(p[j], coef[j]), (q[j], -coef[j])])
                .collect();
            lp.add_constraint(terms.as_slice(), ComparisonOp::Eq, rhs);
        }
    }
    let sol = lp.solve().ok()?;
    Some((0..n).map(|j| sol[p[j]] - sol[q[j]]).collect())
}

/// `min_π max_k t_k/π_k` as a linear program: maximize `φ` subject to
/// `π_k ≥ t_k φ`, `Σ π_k = 1`, `π ≥ 0`; the minimum is `1/φ`.
pub fn lp_min_theta(t: &[f64]) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let phi = lp.add_var(1.0, (0.0, f64::INFINITY));
    let pi: Vec<_> = t.iter().map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    for (k, &tk) in t.iter().enumerate() {
        lp.add_constraint([(pi[k], 1.0), (phi, -tk)], ComparisonOp::Ge, 0.0);
    }
    let sum: Vec<_> = pi.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(sum.as_slice(), ComparisonOp::Eq, 1.0);
    let sol = lp.solve().expect("bounded LP");
    1.0 / sol[phi]
}

fn theta_at(t: &[f64], pi: &[f64]) -> f64 {
    t.iter()
        .zip(pi)
        .map(|(&tk, &pk)| {
            if pk > 0.0 {
                tk / pk
            } else if tk > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Zooming grid search for `min_π max_k t_k/π_k` over the 2-simplex (three blocks).
pub fn grid_min_theta3(t: &[f64; 3]) -> f64 {
    let steps = 24;
    let (mut c0, mut c1, mut width) = (1.0 / 3.0, 1.0 / 3.0, 1.0);
    let mut best = f64::INFINITY;
    for _ in 0..60 {
        let mut arg = (c0, c1);
        for i in 0..=steps {
            for j in 0..=steps {
                let p0 = c0 + width * (i as f64 / steps as f64 - 0.5);
                let p1 = c1 + width * (j as f64 / steps as f64 - 0.5);
                let p2 = 1.0 - p0 - p1;
                if p0 < 0.0 || p1 < 0.0 || p2 < 0.0 {
                    continue;
                }
                let v = theta_at(t, &[p0, p1, p2]);
                if v < best {
                    best = v;
                    arg = (p0, p1);
                }
            }
        }
        c0 = arg.0;
        c1 = arg.1;
        width *= 0.5;
    }
    best
}
