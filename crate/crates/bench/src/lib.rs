//! Fixtures shared by the benchmarks.

use anisocs::recovery::random_signal;
use anisocs::{
    AmplitudeLaw, BlockDictionary, FrequencyGrid, RadialLayout, SamplingDistribution, SignModel,
    SignalInstance, SupportSet, TrajectorySpec,
};

/// Well-conditioned 8×8 radial dictionary: 16 spokes of 4 samples.
pub fn radial_8x8() -> BlockDictionary {
    TrajectorySpec::Radial {
        grid: FrequencyGrid::two_d(8, 8).unwrap(),
        spokes: 16,
        samples: 4,
        layout: RadialLayout::rotated(),
    }
    .build()
    .unwrap()
}

pub fn support(n: usize, s: usize) -> SupportSet {
    SupportSet::new((0..s).map(|i| i * n / s).collect(), n).unwrap()
}

pub fn uniform(dict: &BlockDictionary) -> SamplingDistribution {
    SamplingDistribution::uniform(dict.block_count()).unwrap()
}

pub fn signal(n: usize, s: usize, seed: u64) -> SignalInstance {
    random_signal(n, s, SignModel::Steinhaus, AmplitudeLaw::Ones, seed).unwrap()
}
