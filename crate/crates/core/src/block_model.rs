//! Block dictionaries, sampling distributions and random sensing draws.
//!
//! A [`BlockDictionary`] stacks `M` row blocks `B_k` (each `d_k × n`, with `Σ d_k = n`)
//! into the square matrix `A₀`. A sensing draw picks `m` blocks i.i.d. from a
//! [`SamplingDistribution`] `π` and stacks `B_{k_l} / √(m π_{k_l})`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coherence::SupportSet;
use crate::error::{Error, Result};
use crate::numerics::{gram_inverse_of, norm_two_two, select_columns, CMat, ComplexMatrix};

const PI_SUM_TOL: f64 = 1e-12;

/// The measurement dictionary `A₀` partitioned into row blocks, with its Gram inverse `X`.
#[derive(Clone, Debug)]
pub struct BlockDictionary {
    block_sizes: Vec<usize>,
    offsets: Vec<usize>,
    a0: ComplexMatrix,
    gram_inverse: ComplexMatrix,
}

impl BlockDictionary {
    /// Stack `blocks` into `A₀`, validating `Σ d_k = n` and invertibility of `A₀*A₀`.
    pub fn assemble(blocks: &[ComplexMatrix]) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::usage("dictionary needs at least one block"));
        }
        let n = blocks[0].ncols();
        if n == 0 {
            return Err(Error::usage("dictionary dimension must be at least 1"));
        }
        if let Some((k, b)) = blocks.iter().enumerate().find(|(_, b)| b.ncols() != n) {
            return Err(Error::usage(format!(
                "block {k} has {} columns, expected {n}",
                b.ncols()
            )));
        }
        if let Some(k) = blocks.iter().position(|b| b.nrows() == 0) {
            return Err(Error::usage(format!("block {k} has no rows")));
        }
        let block_sizes: Vec<usize> = blocks.iter().map(|b| b.nrows()).collect();
        let total: usize = block_sizes.iter().sum();
        if total != n {
            return Err(Error::usage(format!(
                "block row counts sum to {total}, expected n = {n}"
            )));
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut a0 = CMat::zeros(n, n);
        let mut row = 0;
        for b in blocks {
            offsets.push(row);
            a0.rows_mut(row, b.nrows()).copy_from(b.as_mat());
            row += b.nrows();
        }
        let x = gram_inverse_of(&a0)?;
        Ok(BlockDictionary {
            block_sizes,
            offsets,
            a0: ComplexMatrix::wrap(a0),
            gram_inverse: ComplexMatrix::wrap(x),
        })
    }

    /// Single-row blocks from an `n × n` matrix.
    pub fn isolated(a0: &ComplexMatrix) -> Result<Self> {
        let blocks: Vec<ComplexMatrix> = (0..a0.nrows())
            .map(|i| ComplexMatrix::wrap(a0.rows(i, 1).into_owned()))
            .collect();
        Self::assemble(&blocks)
    }

    /// Standard-basis dictionary: the rows of `I_n`, one per block.
    pub fn identity(n: usize) -> Result<Self> {
        Self::isolated(&ComplexMatrix::identity(n))
    }

    pub fn n(&self) -> usize {
        self.a0.ncols()
    }

    pub fn block_count(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn a0(&self) -> &ComplexMatrix {
        &self.a0
    }

    /// `B_k` as an owned `d_k × n` matrix.
    pub fn block(&self, k: usize) -> CMat {
        self.a0
            .rows(self.offsets[k], self.block_sizes[k])
            .into_owned()
    }

    pub fn blocks(&self) -> Vec<ComplexMatrix> {
        (0..self.block_count())
            .map(|k| ComplexMatrix::wrap(self.block(k)))
            .collect()
    }

    /// True when every block is a single row.
    pub fn is_isolated(&self) -> bool {
        self.block_sizes.iter().all(|&d| d == 1)
    }

    /// `X = (A₀*A₀)⁻¹`, computed once at assembly.
    ///
    /// `E[B*B] = Σ_k π_k B_k*B_k/π_k = A₀*A₀`, so `X` does not depend on `π`.
    pub fn gram_inverse(&self) -> &ComplexMatrix {
        &self.gram_inverse
    }

    /// `A₀*A₀`.
    pub fn gram(&self) -> CMat {
        self.a0.adjoint() * self.a0.as_mat()
    }

    /// `Σ_k w_k B_k*B_k` without materializing the stacked draw.
    pub fn weighted_gram(&self, block_weights: &[f64]) -> CMat {
        let n = self.n();
        let mut scaled = self.a0.as_mat().clone();
        for (k, &w) in block_weights.iter().enumerate() {
            let mut rows = scaled.rows_mut(self.offsets[k], self.block_sizes[k]);
            rows *= Complex64::new(w, 0.0);
        }
        let g = self.a0.adjoint() * scaled;
        debug_assert_eq!(g.nrows(), n);
        g
    }

    /// Per-block weights `count_k / (m π_k)` of the Gram `A*A` for a sequence of drawn blocks.
    pub fn draw_weights(&self, pi: &SamplingDistribution, drawn: &[usize]) -> Vec<f64> {
        let m = drawn.len() as f64;
        let mut w = vec![0.0; self.block_count()];
        for &k in drawn {
            w[k] += 1.0;
        }
        for (k, wk) in w.iter_mut().enumerate() {
            if *wk > 0.0 {
                *wk /= m * pi.probabilities()[k];
            }
        }
        w
    }

    /// Draw the sensing matrix `A = (1/√m)(B_{k_l}/√π_{k_l})_l`.
    pub fn draw_sensing(
        &self,
        pi: &SamplingDistribution,
        m: usize,
        seed: u64,
    ) -> Result<SensingDraw> {
        self.check_pi(pi)?;
        let drawn = pi.draw_indices(m, seed)?;
        let rows: usize = drawn.iter().map(|&k| self.block_sizes[k]).sum();
        let mut a = CMat::zeros(rows, self.n());
        let mut r = 0;
        for &k in &drawn {
            let d = self.block_sizes[k];
            let scale = 1.0 / (m as f64 * pi.probabilities()[k]).sqrt();
            a.rows_mut(r, d)
                .copy_from(&self.a0.rows(self.offsets[k], d));
            a.rows_mut(r, d).scale_mut(scale);
            r += d;
        }
        Ok(SensingDraw {
            m,
            drawn_blocks: drawn,
            a: ComplexMatrix::wrap(a),
            seed,
        })
    }

    pub(crate) fn check_pi(&self, pi: &SamplingDistribution) -> Result<()> {
        if pi.len() != self.block_count() {
            return Err(Error::usage(format!(
                "sampling distribution has {} entries, dictionary has {} blocks",
                pi.len(),
                self.block_count()
            )));
        }
        Ok(())
    }

    /// Replace `A₀` by `A₀ Ψ` keeping the block partition.
    pub fn right_multiply(&self, psi: &CMat) -> Result<Self> {
        let product = self.a0.as_mat() * psi;
        let blocks: Vec<ComplexMatrix> = self
            .offsets
            .iter()
            .zip(&self.block_sizes)
            .map(|(&o, &d)| ComplexMatrix::wrap(product.rows(o, d).into_owned()))
            .collect();
        Self::assemble(&blocks)
    }

    /// `‖A₀*A₀ − I‖_{2→2}`: zero exactly in the isotropic case.
    pub fn anisotropy(&self) -> Result<f64> {
        let n = self.n();
        norm_two_two(&(self.gram() - CMat::identity(n, n)))
    }

    pub fn to_file_format(&self) -> DictionaryFile {
        DictionaryFile {
            n: self.n(),
            blocks: (0..self.block_count())
                .map(|k| BlockRows {
                    rows: self
                        .block(k)
                        .row_iter()
                        .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_file_format(file: &DictionaryFile) -> Result<Self> {
        let mut blocks = Vec::with_capacity(file.blocks.len());
        for (k, b) in file.blocks.iter().enumerate() {
            if let Some(r) = b.rows.iter().position(|r| r.len() != file.n) {
                return Err(Error::usage(format!(
                    "block {k} row {r} has {} entries, expected n = {}",
                    b.rows[r].len(),
                    file.n
                )));
            }
            let m = DMatrix::from_fn(b.rows.len(), file.n, |i, j| {
                let [re, im] = b.rows[i][j];
                Complex64::new(re, im)
            });
            blocks.push(ComplexMatrix::new(m)?);
        }
        let dict = Self::assemble(&blocks)?;
        if dict.n() != file.n {
            return Err(Error::usage("declared n does not match block data"));
        }
        Ok(dict)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file_format()).expect("dictionary serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: DictionaryFile = serde_json::from_str(s)
            .map_err(|e| Error::Config(format!("invalid dictionary JSON: {e}")))?;
        Self::from_file_format(&file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: DictionaryFile = serde_json::from_str(&s).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_file_format(&file)
    }
}

/// On-disk dictionary layout: `{"n": int, "blocks": [{"rows": [[[re, im], ...], ...]}, ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryFile {
    pub n: usize,
    pub blocks: Vec<BlockRows>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRows {
    pub rows: Vec<Vec<[f64; 2]>>,
}

/// Probability vector `π` over blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SamplingDistribution {
    pi: Vec<f64>,
    cdf: Vec<f64>,
}

impl SamplingDistribution {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::usage("empty sampling distribution"));
        }
        if pi.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::usage("probabilities must be finite and nonnegative"));
        }
        let total: f64 = pi.iter().sum();
        if total == 0.0 {
            return Err(Error::usage("sampling distribution has no mass"));
        }
        if (total - 1.0).abs() > PI_SUM_TOL {
            return Err(Error::usage(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let cdf = pi
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(SamplingDistribution { pi, cdf })
    }

    /// Normalize nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::usage("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::usage("weights have no mass"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; m])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// Inverse-CDF sampling of one index from a uniform variate in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let k = self.cdf.partition_point(|&c| c <= u);
        if k < self.pi.len() {
            k
        } else {
            // u beyond the rounded total: fall back to the last block with mass
            self.pi.iter().rposition(|&p| p > 0.0).expect("has mass")
        }
    }

    /// `m` i.i.d. indices from a ChaCha8 stream seeded with `seed`.
    pub fn draw_indices(&self, m: usize, seed: u64) -> Result<Vec<usize>> {
        if m == 0 {
            return Err(Error::usage("draw count m must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..m)
            .map(|_| self.sample_with(rng.random::<f64>()))
            .collect())
    }
}

impl TryFrom<Vec<f64>> for SamplingDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SamplingDistribution> for Vec<f64> {
    fn from(d: SamplingDistribution) -> Self {
        d.pi
    }
}

/// A realized sensing matrix and the blocks it was stacked from.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingDraw {
    pub m: usize,
    pub drawn_blocks: Vec<usize>,
    pub a: ComplexMatrix,
    pub seed: u64,
}

impl SensingDraw {
    /// `A*A`.
    pub fn gram(&self) -> CMat {
        self.a.adjoint() * self.a.as_mat()
    }
}

/// Columns of `m` indexed by `support`, in increasing order (right-multiplication by `P_S*`).
pub fn restrict_columns(m: &CMat, support: &SupportSet) -> Result<CMat> {
    if let Some(&bad) = support.indices().iter().find(|&&i| i >= m.ncols()) {
        return Err(Error::usage(format!(
            "support index {bad} out of range for {} columns",
            m.ncols()
        )));
    }
    Ok(select_columns(m, support.indices()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::c64;

    fn dft(n: usize) -> CMat {
        let s = 1.0 / (n as f64).sqrt();
        DMatrix::from_fn(n, n, |k, j| {
            Complex64::from_polar(s, -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64)
        })
    }

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        (a - b).iter().all(|z| z.norm() <= tol)
    }

    #[test]
    fn identity_dictionary_has_identity_gram_inverse() {
        let d = BlockDictionary::identity(4).unwrap();
        assert_eq!(d.block_count(), 4);
        assert_eq!(d.block_sizes(), &[1, 1, 1, 1]);
        assert!(close(d.gram_inverse(), &CMat::identity(4, 4), 1e-15));
    }

    #[test]
    fn dft_halves_are_isotropic() {
        let f = dft(4);
        let blocks = vec![
            ComplexMatrix::wrap(f.rows(0, 2).into_owned()),
            ComplexMatrix::wrap(f.rows(2, 2).into_owned()),
        ];
        let d = BlockDictionary::assemble(&blocks).unwrap();
        assert_eq!(d.block_count(), 2);
        assert!(close(d.gram_inverse(), &CMat::identity(4, 4), 1e-12));
    }

    #[test]
    fn duplicated_row_is_singular() {
        let blocks = vec![
            ComplexMatrix::from_real(1, 3, &[1., 0., 0.]).unwrap(),
            ComplexMatrix::from_real(2, 3, &[1., 0., 0., 0., 1., 0.]).unwrap(),
        ];
        assert!(matches!(
            BlockDictionary::assemble(&blocks),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn size_mismatch_is_usage_error() {
        let blocks = vec![ComplexMatrix::from_real(1, 3, &[1., 0., 0.]).unwrap()];
        assert!(matches!(
            BlockDictionary::assemble(&blocks),
            Err(Error::Usage(_))
        ));
        let ragged = vec![
            ComplexMatrix::from_real(1, 2, &[1., 0.]).unwrap(),
            ComplexMatrix::from_real(1, 3, &[0., 1., 0.]).unwrap(),
        ];
        assert!(matches!(
            BlockDictionary::assemble(&ragged),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn gram_inverse_of_lower_triangular_pair() {
        // A0 = [[1,0],[1,1]]: A0*A0 = [[2,1],[1,1]], inverse [[1,-1],[-1,2]] (det 1)
        let a0 = ComplexMatrix::from_real(2, 2, &[1., 0., 1., 1.]).unwrap();
        let d = BlockDictionary::isolated(&a0).unwrap();
        let expected = ComplexMatrix::from_real(2, 2, &[1., -1., -1., 2.]).unwrap();
        assert!(close(d.gram_inverse(), &expected, 1e-14));
    }

    #[test]
    fn unitary_dictionary_has_identity_gram_inverse() {
        let d = BlockDictionary::isolated(&ComplexMatrix::new(dft(8)).unwrap()).unwrap();
        assert!(close(d.gram_inverse(), &CMat::identity(8, 8), 1e-12));
    }

    #[test]
    fn single_block_draw_reproduces_gram() {
        let f = dft(4);
        let d = BlockDictionary::assemble(&[ComplexMatrix::new(f.clone()).unwrap()]).unwrap();
        let pi = SamplingDistribution::uniform(1).unwrap();
        for m in [1, 3, 7] {
            let draw = d.draw_sensing(&pi, m, 42).unwrap();
            assert!(close(&draw.gram(), &d.gram(), 1e-13));
        }
    }

    #[test]
    fn zero_probability_block_never_drawn() {
        let pi = SamplingDistribution::new(vec![0.25, 0.25, 0.0, 0.5]).unwrap();
        let idx = pi.draw_indices(100_000, 7).unwrap();
        assert!(idx.iter().all(|&k| k != 2));
        // inverse-CDF edge: a leading zero-mass block is never selected either
        let lead = SamplingDistribution::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(lead.sample_with(0.0), 1);
        assert_eq!(lead.sample_with(1.0), 1);
    }

    #[test]
    fn all_zero_pi_rejected() {
        assert!(SamplingDistribution::new(vec![0.0, 0.0]).is_err());
        assert!(SamplingDistribution::from_weights(&[0.0, 0.0]).is_err());
        assert!(SamplingDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(SamplingDistribution::new(vec![-0.5, 1.5]).is_err());
    }

    #[test]
    fn draw_scaling_matches_definition() {
        let d = BlockDictionary::identity(3).unwrap();
        let pi = SamplingDistribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        let draw = d.draw_sensing(&pi, 4, 9).unwrap();
        for (l, &k) in draw.drawn_blocks.iter().enumerate() {
            let expected = 1.0 / (4.0 * pi.probabilities()[k]).sqrt();
            assert!((draw.a[(l, k)] - c64(expected, 0.0)).norm() < 1e-15);
        }
        let w = d.draw_weights(&pi, &draw.drawn_blocks);
        assert!(close(&d.weighted_gram(&w), &draw.gram(), 1e-14));
    }

    #[test]
    fn seed_determinism() {
        let d = BlockDictionary::identity(5).unwrap();
        let pi = SamplingDistribution::uniform(5).unwrap();
        let a = d.draw_sensing(&pi, 12, 1234).unwrap();
        let b = d.draw_sensing(&pi, 12, 1234).unwrap();
        assert_eq!(a, b);
        let c = d.draw_sensing(&pi, 12, 1235).unwrap();
        assert_ne!(a.drawn_blocks, c.drawn_blocks);
    }

    #[test]
    fn restrict_columns_examples() {
        let i4 = CMat::identity(4, 4);
        // {1,3} in one-based numbering
        let s = SupportSet::new(vec![0, 2], 4).unwrap();
        let r = restrict_columns(&i4, &s).unwrap();
        assert_eq!(r.shape(), (4, 2));
        assert_eq!(r[(0, 0)], c64(1., 0.));
        assert_eq!(r[(2, 1)], c64(1., 0.));
        let m = DMatrix::from_fn(3, 3, |i, j| c64((3 * i + j) as f64, 0.0));
        let full = SupportSet::new(vec![0, 1, 2], 3).unwrap();
        assert_eq!(restrict_columns(&m, &full).unwrap(), m);
        let mid = SupportSet::new(vec![1], 3).unwrap();
        assert_eq!(
            restrict_columns(&m, &mid).unwrap(),
            m.columns(1, 1).into_owned()
        );
        let oob = SupportSet::new(vec![5], 6).unwrap();
        assert!(restrict_columns(&m, &oob).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_identical() {
        let a0 = DMatrix::from_fn(3, 3, |i, j| {
            c64(
                0.1 * (i as f64 + 1.0) + 1.0 / 3.0 * j as f64,
                (i * j) as f64 * 0.7,
            )
        }) + CMat::identity(3, 3);
        let d = BlockDictionary::isolated(&ComplexMatrix::new(a0).unwrap()).unwrap();
        let back = BlockDictionary::from_json(&d.to_json()).unwrap();
        assert_eq!(back.a0(), d.a0());
        assert_eq!(back.block_sizes(), d.block_sizes());
    }

    #[test]
    fn loader_validates() {
        let bad = r#"{"n": 2, "blocks": [{"rows": [[[1,0],[0,0]]]}, {"rows": [[[1,0],[0,0]]]}]}"#;
        assert!(matches!(
            BlockDictionary::from_json(bad),
            Err(Error::Singular { .. })
        ));
        let short = r#"{"n": 2, "blocks": [{"rows": [[[1,0]]]}]}"#;
        assert!(matches!(
            BlockDictionary::from_json(short),
            Err(Error::Usage(_))
        ));
    }
}
