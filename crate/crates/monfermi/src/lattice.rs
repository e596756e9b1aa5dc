//! Single-particle Hamiltonian of the chain and its propagators.
//!
//! The chain is a periodic nearest-neighbor hopping model. All time evolution
//! in the trajectory engine happens through dense `L x L` propagators built
//! once per parameter set from the exact spectral decomposition, so step cost
//! is a single matrix product regardless of dt.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::error::ConfigError;

/// Nearest-neighbor hopping matrix with periodic boundary conditions.
#[derive(Debug, Clone)]
pub struct HoppingMatrix {
    l: usize,
    lambda: f64,
    entries: Array2<f64>,
}

impl HoppingMatrix {
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }
}

/// Build the hopping matrix with amplitude `lambda / 2` on each bond.
///
/// For L = 2 the two sites are joined by both the forward and the wrap-around
/// bond; accumulating `+=` per bond keeps that doubling instead of
/// overwriting it.
pub fn build_hopping(l: usize, lambda: f64) -> Result<HoppingMatrix, ConfigError> {
    if l < 2 || l % 2 != 0 {
        return Err(ConfigError::BadLatticeSize(l));
    }
    let mut entries = Array2::<f64>::zeros((l, l));
    let half = lambda / 2.0;
    for j in 0..l {
        let k = (j + 1) % l;
        entries[[j, k]] += half;
        entries[[k, j]] += half;
    }
    Ok(HoppingMatrix { l, lambda, entries })
}

/// Eigenpairs of a hopping matrix: `matrix = modes * diag(frequencies) * modes^T`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub frequencies: Array1<f64>,
    pub modes: Array2<f64>,
}

/// Real-symmetric eigendecomposition, frequencies ascending.
pub fn spectral_decompose(h: &HoppingMatrix) -> SpectralDecomposition {
    let (frequencies, modes) = h
        .entries
        .eigh(UPLO::Lower)
        .expect("hopping matrix is real symmetric; eigh cannot fail on finite input");
    SpectralDecomposition { frequencies, modes }
}

/// What a propagator represents, used for debug display and sanity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PropagatorKind {
    /// `exp(-i H dt)`.
    Unitary,
    /// Jump-unraveling no-jump generator `exp(-3 gamma dt / 2) * exp(-i H dt)`.
    JumpEffective { gamma: f64 },
}

/// Dense single-particle propagator over one step of length `dt`.
#[derive(Debug, Clone)]
pub struct Propagator {
    entries: Array2<Complex64>,
    dt: f64,
    kind: PropagatorKind,
}

impl Propagator {
    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn kind(&self) -> PropagatorKind {
        self.kind
    }

    pub fn l(&self) -> usize {
        self.entries.nrows()
    }

    /// `out = self.entries * m`, the per-step hot path.
    ///
    /// Routed directly through matrixmultiply's complex kernel: the arrays are
    /// standard-layout, so this is a plain row-major GEMM. Going through a
    /// system BLAS here is both slower on this workload and an unnecessary
    /// source of nondeterminism across machines.
    pub fn apply_into(&self, m: &Array2<Complex64>, out: &mut Array2<Complex64>) {
        let (l, n) = (m.nrows(), m.ncols());
        assert_eq!(self.entries.ncols(), l, "propagator/state size mismatch");
        assert_eq!(out.nrows(), l);
        assert_eq!(out.ncols(), n);
        let a = self
            .entries
            .as_slice()
            .expect("propagator is standard layout");
        let b = m.as_slice().expect("state matrix is standard layout");
        let c = out.as_slice_mut().expect("output matrix is standard layout");
        // Complex64 is repr(C) with [re, im] layout, matching CGemmOption's
        // `[f64; 2]` element type.
        unsafe {
            matrixmultiply::zgemm(
                matrixmultiply::CGemmOption::Standard,
                matrixmultiply::CGemmOption::Standard,
                l,
                l,
                n,
                [1.0, 0.0],
                a.as_ptr().cast(),
                l as isize,
                1,
                b.as_ptr().cast(),
                n as isize,
                1,
                [0.0, 0.0],
                c.as_mut_ptr().cast(),
                n as isize,
                1,
            );
        }
    }

    /// Convenience wrapper allocating the output.
    pub fn apply(&self, m: &Array2<Complex64>) -> Array2<Complex64> {
        let mut out = Array2::zeros((m.nrows(), m.ncols()));
        self.apply_into(m, &mut out);
        out
    }

    /// Strip the decay scalar off a jump-effective propagator, leaving the
    /// unitary factor; a unitary propagator is returned as is. Useful where
    /// the scalar is known to be removed by a later renormalization anyway.
    pub fn unitary_part(&self) -> Propagator {
        match self.kind {
            PropagatorKind::Unitary => self.clone(),
            PropagatorKind::JumpEffective { gamma } => {
                let undo = (1.5 * gamma * self.dt).exp();
                Propagator {
                    entries: self.entries.mapv(|z| z * undo),
                    dt: self.dt,
                    kind: PropagatorKind::Unitary,
                }
            }
        }
    }
}

fn propagator_from_phases(
    spec: &SpectralDecomposition,
    phases: &Array1<Complex64>,
    scale: f64,
    dt: f64,
    kind: PropagatorKind,
) -> Propagator {
    let l = spec.frequencies.len();
    let mut entries = Array2::<Complex64>::zeros((l, l));
    // entries = scale * V diag(phases) V^T with real V.
    for j in 0..l {
        for k in 0..l {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, phase) in phases.iter().enumerate() {
                acc += phase * spec.modes[[j, m]] * spec.modes[[k, m]];
            }
            entries[[j, k]] = scale * acc;
        }
    }
    Propagator { entries, dt, kind }
}

/// `exp(-i H dt)` from the spectral decomposition of `H`.
pub fn unitary_propagator(h: &HoppingMatrix, dt: f64) -> Propagator {
    let spec = spectral_decompose(h);
    let phases = spec
        .frequencies
        .mapv(|w| Complex64::from_polar(1.0, -w * dt));
    propagator_from_phases(&spec, &phases, 1.0, dt, PropagatorKind::Unitary)
}

/// No-jump propagator of the jump unraveling.
///
/// The dephasing no-jump generator acts on a Slater state as the unitary
/// propagator times the scalar `exp(-3 gamma dt / 2)`; the scalar is
/// renormalized away afterwards but is kept here so the operator matches its
/// definition literally.
pub fn qj_effective_propagator(h: &HoppingMatrix, gamma: f64, dt: f64) -> Propagator {
    let spec = spectral_decompose(h);
    let phases = spec
        .frequencies
        .mapv(|w| Complex64::from_polar(1.0, -w * dt));
    let scale = (-1.5 * gamma * dt).exp();
    propagator_from_phases(&spec, &phases, scale, dt, PropagatorKind::JumpEffective { gamma })
}
