//! Slater-determinant states and the observables read off them.
//!
//! A pure Gaussian state of N fermions on L sites is stored as the L x N
//! matrix of orbital amplitudes with orthonormal columns. Every observable the
//! simulator records (occupations, correlation matrix, entanglement entropy,
//! inverse participation ratio) is a closed-form function of that matrix.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{EighInto, QR, UPLO};
use num_complex::Complex64;

use crate::error::{ConfigError, StateError};

/// Smallest |R| diagonal accepted by [`renormalize`] before a trajectory is
/// declared rank-deficient.
pub const RANK_TOLERANCE: f64 = 1e-13;

/// Pure Slater-determinant state with orthonormal orbital matrix.
#[derive(Debug, Clone)]
pub struct SlaterState {
    u: Array2<Complex64>,
    l: usize,
    n: usize,
}

impl SlaterState {
    /// Wrap an explicit orbital matrix, verifying column orthonormality.
    pub fn new(u: Array2<Complex64>) -> Result<Self, StateError> {
        let n = u.ncols();
        let gram = gram_matrix(&u.view());
        let mut max_dev = 0.0f64;
        for j in 0..n {
            for k in 0..n {
                let target = if j == k { 1.0 } else { 0.0 };
                let dev = (gram[[j, k]] - Complex64::new(target, 0.0)).norm();
                max_dev = max_dev.max(dev);
            }
        }
        if max_dev > 1e-10 {
            return Err(StateError::NotOrthonormal { max_dev });
        }
        let l = u.nrows();
        Ok(Self { u, l, n })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn orbitals(&self) -> &Array2<Complex64> {
        &self.u
    }

    /// Site occupations `n_j = sum_mu |U_{j mu}|^2`.
    pub fn occupations(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.l);
        self.occupations_into(&mut out);
        out
    }

    /// In-place variant for the step loop.
    pub fn occupations_into(&self, out: &mut Array1<f64>) {
        occupations_of(&self.u.view(), out);
    }

    /// Two-point function `C = U U^dagger`.
    pub fn correlation_matrix(&self) -> CorrelationMatrix {
        let ud = self.u.t().mapv(|z| z.conj());
        CorrelationMatrix { c: self.u.dot(&ud) }
    }

    /// Von Neumann entropy of the first `ell` contiguous sites, natural log.
    pub fn entanglement_entropy(&self, ell: usize) -> f64 {
        assert!(ell >= 1 && ell <= self.l, "subsystem length {ell} outside 1..={}", self.l);
        entropy_of_block(&self.u.view(), ell)
    }

    /// Half-chain entropy, the default subsystem.
    pub fn half_chain_entropy(&self) -> f64 {
        self.entanglement_entropy(self.l / 2)
    }

    /// `(2/L) sum_mu sum_j |U_{j mu}|^4` at half filling.
    ///
    /// The value depends on the orbital basis the evolution + QR pipeline
    /// produces, not just on the physical state: a unitary remix of columns
    /// changes it. Column-wise phases drop out of |U|^4, which is the only
    /// gauge freedom QR with positive-diagonal-free R leaves unfixed; the
    /// quantity is therefore well defined along a trajectory.
    pub fn ipr_instant(&self) -> f64 {
        assert_eq!(2 * self.n, self.l, "participation ratio is defined at half filling");
        ipr_of_orbitals(&self.u.view())
    }
}

/// Néel product state: column `mu` (1-based) is the unit vector on site
/// `2 mu`, so occupations alternate 0,1,0,1,...
pub fn neel_state(l: usize) -> Result<SlaterState, ConfigError> {
    if l < 2 || l % 2 != 0 {
        return Err(ConfigError::BadLatticeSize(l));
    }
    let n = l / 2;
    let mut u = Array2::<Complex64>::zeros((l, n));
    for mu in 0..n {
        u[[2 * mu + 1, mu]] = Complex64::new(1.0, 0.0);
    }
    Ok(SlaterState { u, l, n })
}

/// QR-renormalize a propagated (generally non-orthonormal) orbital matrix.
///
/// Returns `Q1` of the thin decomposition `V = Q1 R1`. A diagonal of `R1`
/// smaller than [`RANK_TOLERANCE`] in magnitude means the columns have become
/// numerically dependent and the trajectory cannot continue.
pub fn renormalize(v: Array2<Complex64>) -> Result<SlaterState, StateError> {
    let l = v.nrows();
    let n = v.ncols();
    let u = qr_orthonormalize(&v)?;
    Ok(SlaterState { u, l, n })
}

/// Thin-QR orthonormalization on a raw orbital matrix, shared by
/// [`renormalize`] and the trajectory step loop.
pub(crate) fn qr_orthonormalize(v: &Array2<Complex64>) -> Result<Array2<Complex64>, StateError> {
    let n = v.ncols();
    let (q, r) = v.qr()?;
    let min_diag = (0..n).map(|i| r[[i, i]].norm()).fold(f64::INFINITY, f64::min);
    if min_diag < RANK_TOLERANCE {
        return Err(StateError::RankDeficient { min_diag });
    }
    Ok(q)
}

/// Wrap an orbital matrix known to be orthonormal (output of QR); skips the
/// verification that [`SlaterState::new`] performs.
pub(crate) fn from_orthonormal(u: Array2<Complex64>) -> SlaterState {
    let l = u.nrows();
    let n = u.ncols();
    SlaterState { u, l, n }
}

/// Row-wise squared norms of a raw orbital matrix.
pub(crate) fn occupations_of(u: &ArrayView2<Complex64>, out: &mut Array1<f64>) {
    debug_assert_eq!(out.len(), u.nrows());
    for (j, row) in u.axis_iter(Axis(0)).enumerate() {
        out[j] = row.iter().map(|z| z.norm_sqr()).sum();
    }
}

/// Hermitian two-point function of a Slater state.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    c: Array2<Complex64>,
}

impl CorrelationMatrix {
    pub fn entries(&self) -> &Array2<Complex64> {
        &self.c
    }

    pub fn l(&self) -> usize {
        self.c.nrows()
    }

    /// Diagonal of C, equal to the site occupations.
    pub fn occupations(&self) -> Array1<f64> {
        Array1::from_iter(self.c.diag().iter().map(|z| z.re))
    }
}

pub(crate) fn gram_matrix(u: &ArrayView2<Complex64>) -> Array2<Complex64> {
    let ud = u.t().mapv(|z| z.conj());
    ud.dot(u)
}

/// Max elementwise deviation of `U^dagger U` from the identity.
pub(crate) fn orthonormality_deviation(u: &ArrayView2<Complex64>) -> f64 {
    let gram = gram_matrix(u);
    let n = gram.nrows();
    let mut max_dev = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            let target = if j == k { 1.0 } else { 0.0 };
            max_dev = max_dev.max((gram[[j, k]] - Complex64::new(target, 0.0)).norm());
        }
    }
    max_dev
}

fn binary_entropy_sum(nu: f64) -> f64 {
    // Eigenvalues of the restricted correlation matrix sit in [0,1] up to
    // roundoff; clamp before taking logs and use 0 ln 0 = 0.
    let nu = nu.clamp(0.0, 1.0);
    let mut s = 0.0;
    if nu > 0.0 {
        s -= nu * nu.ln();
    }
    if nu < 1.0 {
        s -= (1.0 - nu) * (1.0 - nu).ln();
    }
    s
}

pub(crate) fn entropy_of_block(u: &ArrayView2<Complex64>, ell: usize) -> f64 {
    let n = u.ncols();
    // Spectrum of the ell x ell block of C = U U^dagger equals the spectrum
    // of the N x N Gram matrix B^dagger B of the truncated orbitals B
    // (first ell rows), padded with zeros. The Gram form keeps the eigensolve
    // at size min(ell, N) independent of which is larger.
    let b = u.slice(ndarray::s![..ell, ..]);
    let spectrum: Array1<f64> = if ell <= n {
        let bd = b.t().mapv(|z| z.conj());
        let small = b.dot(&bd);
        small
            .eigh_into(UPLO::Lower)
            .expect("Hermitian Gram matrix eigensolve")
            .0
    } else {
        let bd = b.t().mapv(|z| z.conj());
        let small = bd.dot(&b);
        small
            .eigh_into(UPLO::Lower)
            .expect("Hermitian Gram matrix eigensolve")
            .0
    };
    spectrum.iter().map(|&nu| binary_entropy_sum(nu)).sum()
}

pub(crate) fn ipr_of_orbitals(u: &ArrayView2<Complex64>) -> f64 {
    let l = u.nrows() as f64;
    let quartic: f64 = u.iter().map(|z| z.norm_sqr().powi(2)).sum();
    2.0 / l * quartic
}
