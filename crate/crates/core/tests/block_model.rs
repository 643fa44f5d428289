use anisocs::numerics::{c64, norm_two_two};
use anisocs::{BlockDictionary, CMat, ComplexMatrix, SamplingDistribution};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dictionary(rng: &mut impl Rng, n: usize, block_rows: usize) -> BlockDictionary {
    let blocks: Vec<ComplexMatrix> = (0..n / block_rows)
        .map(|_| {
            ComplexMatrix::new(DMatrix::from_fn(block_rows, n, |_, _| {
                c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }))
            .unwrap()
        })
        .collect();
    BlockDictionary::assemble(&blocks).unwrap()
}

fn random_pi(rng: &mut impl Rng, k: usize) -> SamplingDistribution {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    SamplingDistribution::from_weights(&w).unwrap()
}

#[test]
fn sampled_gram_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let dict = random_dictionary(&mut rng, 16, 2);
    let pi = random_pi(&mut rng, dict.block_count());
    let truth = dict.gram();
    let (t, m) = (200, 2000);
    let grams: Vec<CMat> = (0..t)
        .map(|seed| dict.draw_sensing(&pi, m, seed).unwrap().gram())
        .collect();
    for i in 0..16 {
        for j in 0..16 {
            for part in [
                |z: num_complex::Complex64| z.re,
                |z: num_complex::Complex64| z.im,
            ] {
                let xs: Vec<f64> = grams.iter().map(|g| part(g[(i, j)])).collect();
                let mean = xs.iter().sum::<f64>() / t as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
                let se = (var / t as f64).sqrt();
                let err = (mean - part(truth[(i, j)])).abs();
                assert!(
                    err <= 5.0 * se + 1e-12,
                    "entry ({i},{j}): error {err:e}, se {se:e}"
                );
            }
        }
    }
}

#[test]
fn doubling_blocks_leaves_x_times_gram_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let dict = random_dictionary(&mut rng, 8, 2);
    let doubled_blocks: Vec<ComplexMatrix> = dict
        .blocks()
        .into_iter()
        .map(|b| ComplexMatrix::new(b.into_inner() * c64(2.0, 0.0)).unwrap())
        .collect();
    let doubled = BlockDictionary::assemble(&doubled_blocks).unwrap();
    let pi = random_pi(&mut rng, dict.block_count());
    for seed in 0..5 {
        let a = dict.draw_sensing(&pi, 13, seed).unwrap();
        let b = doubled.draw_sensing(&pi, 13, seed).unwrap();
        assert_eq!(a.drawn_blocks, b.drawn_blocks);
        let lhs = dict.gram_inverse().as_mat() * a.gram();
        let rhs = doubled.gram_inverse().as_mat() * b.gram();
        assert_eq!(lhs, rhs);
    }
}

#[test]
fn identity_sampled_gram_averages_to_identity() {
    let n = 16;
    let dict = BlockDictionary::identity(n).unwrap();
    let pi = SamplingDistribution::uniform(n).unwrap();
    let mut mean = CMat::zeros(n, n);
    for seed in 0..50 {
        mean += dict.draw_sensing(&pi, 10_000, seed).unwrap().gram();
    }
    mean /= c64(50.0, 0.0);
    // each diagonal entry has standard deviation √((1 − 1/n)·n/(50·10⁴)) ≈ 0.0055
    let dev = norm_two_two(&(mean - CMat::identity(n, n))).unwrap();
    assert!(dev < 0.03, "deviation {dev}");
}
