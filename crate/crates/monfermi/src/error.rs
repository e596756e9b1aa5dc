//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Invalid simulation parameters, rejected before any evolution starts.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("lattice size must be even and at least 2, got {0}")]
    BadLatticeSize(usize),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("measurement rate must be nonnegative, got {0}")]
    BadGamma(f64),
    #[error("burn-in {burn_in} must lie in [0, t_final), t_final = {t_final}")]
    BadBurnIn { burn_in: f64, t_final: f64 },
    #[error("sampling interval must be positive, got {0}")]
    BadSampleInterval(f64),
    #[error(
        "jump-unraveling convergence bound violated: 4*gamma*L*dt = {value:.6} exceeds 0.1; \
         reduce dt (gamma = {gamma}, L = {l}, dt = {dt})"
    )]
    JumpBound { value: f64, gamma: f64, l: usize, dt: f64 },
    #[error("ensemble needs at least one trajectory")]
    NoTrajectories,
    #[error("{list} list must not be empty")]
    EmptyList { list: &'static str },
    #[error("no sampling time falls between burn-in {burn_in} and t_final {t_final}")]
    NoSamples { burn_in: f64, t_final: f64 },
    #[error("smoothing window must be an odd positive bin count, got {0}")]
    BadSmoothWindow(usize),
    #[error("prominence must lie in [0, 1], got {0}")]
    BadProminence(f64),
}

/// Failures while building or renormalizing a Slater state.
#[derive(Debug, Error)]
pub enum StateError {
    #[error("rank-deficient state: smallest |R| diagonal {min_diag:.3e} is below 1e-13")]
    RankDeficient { min_diag: f64 },
    #[error("matrix columns are not orthonormal: max deviation {max_dev:.3e}")]
    NotOrthonormal { max_dev: f64 },
    #[error("linear-algebra backend failure: {0}")]
    Backend(#[from] ndarray_linalg::error::LinalgError),
}

/// A single trajectory failed; the step index locates the event.
#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("step {step}: {source}")]
    Step {
        step: u64,
        #[source]
        source: StateError,
    },
    #[error("step {step}: total jump probability {total:.4} is not below 1; dt is too large")]
    JumpProbabilityOverflow { step: u64, total: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Errors from the exact Fock-space oracle.
#[derive(Debug, Error)]
pub enum FockError {
    #[error("oracle basis too large: binomial({l}, {n}) = {dim} exceeds the 10^4 cap")]
    DimensionCap { l: usize, n: usize, dim: u64 },
    #[error("oracle supports at most 14 sites, got {0}")]
    TooManySites(usize),
    #[error("particle number {n} exceeds site count {l}")]
    TooManyParticles { l: usize, n: usize },
}

/// Errors from ensemble statistics.
#[derive(Debug, Error)]
pub enum StatsError {
    #[error("histogram bin counts differ: {a} vs {b}")]
    BinMismatch { a: usize, b: usize },
    #[error("histogram holds no samples")]
    EmptyHistogram,
    #[error("power-law fit needs at least 3 distinct sizes, got {0}")]
    TooFewSizes(usize),
    #[error("power-law fit requires positive values, got {value} at L = {l}")]
    NonpositiveValue { l: usize, value: f64 },
}

/// Errors raised by ensemble orchestration and output emission.
#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("verification lattice must have at most 10 sites, got {0}")]
    VerifyTooLarge(usize),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(
        "{failed} of {total} trajectories failed (more than 10%); first failure: \
         cell {cell_id}, trajectory {traj_index}, master seed {master_seed}: {source}"
    )]
    TooManyFailures {
        failed: usize,
        total: usize,
        cell_id: u32,
        traj_index: u32,
        master_seed: u64,
        #[source]
        source: TrajectoryError,
    },
    #[error("trajectory failed: cell {cell_id}, trajectory {traj_index}, master seed {master_seed}: {source}")]
    Trajectory {
        cell_id: u32,
        traj_index: u32,
        master_seed: u64,
        #[source]
        source: TrajectoryError,
    },
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}
