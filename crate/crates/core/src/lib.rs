//! Anisotropic compressed sensing with variable-density block sampling.
//!
//! A block dictionary `A₀` whose Gram matrix need not be the identity is sampled
//! block by block with probabilities `π`; [`coherence`] measures how many draws a
//! support needs, [`recovery`] solves basis pursuit and checks dual certificates,
//! and [`harness`] runs the Monte Carlo experiments.

pub mod block_model;
pub mod coherence;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod recovery;
pub mod trajectories;

pub use block_model::{BlockDictionary, DictionaryFile, SamplingDistribution, SensingDraw};
pub use coherence::{
    BoundParams, CoherenceProfile, CoherenceReport, CostKind, CostTable, SupportSet,
    DEFAULT_BOUND_CONSTANT,
};
pub use error::{Error, Result};
pub use harness::{
    DensityComparison, DictionarySource, ExperimentConfig, OutputFormat, PiMode, RecoveryCurve,
    RecoveryRow, SuccessMode, TailCheckReport, TailCheckRow, TailVerdict,
};
pub use numerics::{CMat, CVec, ComplexMatrix, ComplexVector};
pub use recovery::{
    AmplitudeLaw, CertificateReport, RecoveryResult, SignModel, SignalInstance, SolverOptions,
    Verdict,
};
pub use trajectories::{AngleSpan, FrequencyGrid, RadialLayout, RadialOffset, TrajectorySpec};
