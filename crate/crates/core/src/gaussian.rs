//! Gaussian states of bosonic modes in the quadrature picture.
//!
//! Quadratures are ordered `x1, p1, x2, p2, ...` with `x = (a + a†)/√2`, so the
//! vacuum has variance 1/2 in every quadrature. States are immutable values:
//! every operation returns a new state.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};

/// Field amplitude `α` of a coherent displacement.
///
/// Displacing vacuum by `α` sets the mode mean to `(√2 Re α, √2 Im α)`.
pub type ComplexAmplitude = Complex64;

/// Absolute tolerance on eigenvalues used by the physicality test.
pub const PHYSICALITY_TOL: f64 = 1e-9;
/// Relative tolerance on covariance symmetry.
pub const SYMMETRY_TOL: f64 = 1e-12;

const VACUUM_VARIANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Vacuum on `n_modes` modes: zero mean, covariance `I/2`.
    pub fn vacuum(n_modes: usize) -> Result<Self> {
        Self::thermal(n_modes, 0.0)
    }

    /// Product of thermal states with `occupation` photons per mode.
    pub fn thermal(n_modes: usize, occupation: f64) -> Result<Self> {
        if n_modes == 0 {
            return invalid("state needs at least one mode");
        }
        ensure_finite("occupation", occupation)?;
        if occupation < 0.0 {
            return invalid(format!("occupation must be >= 0, got {occupation}"));
        }
        let dim = 2 * n_modes;
        Ok(Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim) * (occupation + VACUUM_VARIANCE),
        })
    }

    /// Builds a state from raw moments, checking dimensions and symmetry.
    pub fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 || dim % 2 != 0 {
            return invalid(format!("mean length must be a positive even number, got {dim}"));
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return invalid(format!(
                "covariance is {}x{}, expected {dim}x{dim}",
                cov.nrows(),
                cov.ncols()
            ));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return invalid("moments must be finite");
        }
        if !is_symmetric(&cov) {
            return invalid("covariance is not symmetric");
        }
        Ok(Self { mean, cov })
    }

    pub fn n_modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    fn check_mode(&self, i: usize) -> Result<()> {
        if i < self.n_modes() {
            Ok(())
        } else {
            invalid(format!("mode index {i} out of range for {} modes", self.n_modes()))
        }
    }

    /// Applies a linear symplectic map: `mean ← S·mean`, `cov ← S·cov·Sᵀ`.
    pub fn apply_symplectic(&self, s: &DMatrix<f64>) -> Result<Self> {
        self.apply_linear(s)
    }

    fn apply_linear(&self, s: &DMatrix<f64>) -> Result<Self> {
        let dim = self.mean.len();
        if s.nrows() != dim || s.ncols() != dim {
            return invalid(format!("symplectic map must be {dim}x{dim}"));
        }
        let cov = s * &self.cov * s.transpose();
        Ok(Self {
            mean: s * &self.mean,
            cov: symmetrize(cov),
        })
    }

    /// Two-mode squeezer acting as `a → cosh r·a + e^{iφ} sinh r·b†` on modes `i` (a) and `j` (b).
    pub fn two_mode_squeeze(&self, i: usize, j: usize, r: f64, phi: f64) -> Result<Self> {
        self.check_mode(i)?;
        self.check_mode(j)?;
        let s = two_mode_squeeze_matrix(self.n_modes(), i, j, r, phi)?;
        self.apply_symplectic(&s)
    }

    /// Rotates mode `i` by `theta` (`a → e^{iθ} a`).
    pub fn phase_shift(&self, i: usize, theta: f64) -> Result<Self> {
        self.check_mode(i)?;
        let s = phase_shift_matrix(self.n_modes(), i, theta)?;
        self.apply_symplectic(&s)
    }

    /// Beam-splitter loss on mode `i` with power transmission `eta_t` into a
    /// thermal environment holding `n_env` photons. The environment is traced out.
    pub fn loss_channel(&self, i: usize, eta_t: f64, n_env: f64) -> Result<Self> {
        self.check_mode(i)?;
        ensure_finite("eta_t", eta_t)?;
        ensure_finite("n_env", n_env)?;
        if !(0.0..=1.0).contains(&eta_t) {
            return invalid(format!("transmission must lie in [0, 1], got {eta_t}"));
        }
        if n_env < 0.0 {
            return invalid(format!("environment occupation must be >= 0, got {n_env}"));
        }
        let amp = eta_t.sqrt();
        let mut x = DMatrix::identity(self.mean.len(), self.mean.len());
        x[(2 * i, 2 * i)] = amp;
        x[(2 * i + 1, 2 * i + 1)] = amp;
        let mut out = self.apply_linear(&x)?;
        let added = (1.0 - eta_t) * (n_env + VACUUM_VARIANCE);
        out.cov[(2 * i, 2 * i)] += added;
        out.cov[(2 * i + 1, 2 * i + 1)] += added;
        Ok(out)
    }

    /// Classical additive Gaussian noise of `variance` on both quadratures of mode `i`.
    pub fn add_noise(&self, i: usize, variance: f64) -> Result<Self> {
        self.check_mode(i)?;
        ensure_finite("variance", variance)?;
        if variance < 0.0 {
            return invalid(format!("added noise variance must be >= 0, got {variance}"));
        }
        let mut out = self.clone();
        out.cov[(2 * i, 2 * i)] += variance;
        out.cov[(2 * i + 1, 2 * i + 1)] += variance;
        Ok(out)
    }

    pub fn displace(&self, i: usize, alpha: ComplexAmplitude) -> Result<Self> {
        self.check_mode(i)?;
        ensure_finite("Re alpha", alpha.re)?;
        ensure_finite("Im alpha", alpha.im)?;
        let mut out = self.clone();
        out.mean[2 * i] += std::f64::consts::SQRT_2 * alpha.re;
        out.mean[2 * i + 1] += std::f64::consts::SQRT_2 * alpha.im;
        Ok(out)
    }

    /// Mean and covariance block of mode `i`.
    pub fn marginal(&self, i: usize) -> Result<(Vector2<f64>, Matrix2<f64>)> {
        self.check_mode(i)?;
        let k = 2 * i;
        let mean = Vector2::new(self.mean[k], self.mean[k + 1]);
        let cov = Matrix2::new(
            self.cov[(k, k)],
            self.cov[(k, k + 1)],
            self.cov[(k + 1, k)],
            self.cov[(k + 1, k + 1)],
        );
        Ok((mean, cov))
    }

    /// True iff the covariance is symmetric and `cov + (i/2)Ω ⪰ 0` within tolerance.
    ///
    /// The Hermitian test is carried out on its real 4n×4n embedding
    /// `[[V, -Ω/2], [Ω/2, V]]`, which is PSD iff `V + (i/2)Ω` is.
    pub fn check_physical(&self) -> bool {
        if !is_symmetric(&self.cov) || self.cov.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let dim = self.mean.len();
        let half_omega = symplectic_form(self.n_modes()) * 0.5;
        let mut big = DMatrix::zeros(2 * dim, 2 * dim);
        big.view_mut((0, 0), (dim, dim)).copy_from(&self.cov);
        big.view_mut((dim, dim), (dim, dim)).copy_from(&self.cov);
        big.view_mut((0, dim), (dim, dim)).copy_from(&(-&half_omega));
        big.view_mut((dim, 0), (dim, dim)).copy_from(&half_omega);
        let eig = nalgebra::SymmetricEigen::new(big);
        eig.eigenvalues.iter().all(|&l| l >= -PHYSICALITY_TOL)
    }

    /// `det(2·cov)`; equals 1 for pure states.
    pub fn purity_det(&self) -> f64 {
        (&self.cov * 2.0).determinant()
    }

    pub(crate) fn require_physical(self, stage: &str) -> Result<Self> {
        if self.check_physical() {
            Ok(self)
        } else {
            Err(Error::Unphysical(format!("state violates the uncertainty bound after {stage}")))
        }
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);
    (0..m.nrows()).all(|r| (0..r).all(|c| (m[(r, c)] - m[(c, r)]).abs() <= SYMMETRY_TOL * scale))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Standard symplectic form `Ω = ⊕ [[0, 1], [-1, 0]]`.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Symplectic matrix of the two-mode squeezer on modes `i`, `j`.
///
/// In quadratures the 4×4 block reads `[[c·I, s·R], [s·R, c·I]]` with
/// `R = [[cos φ, sin φ], [sin φ, -cos φ]]`, which is symmetric under `i ↔ j`.
pub fn two_mode_squeeze_matrix(n_modes: usize, i: usize, j: usize, r: f64, phi: f64) -> Result<DMatrix<f64>> {
    if i >= n_modes || j >= n_modes {
        return invalid(format!("mode indices ({i}, {j}) out of range for {n_modes} modes"));
    }
    if i == j {
        return invalid("two-mode squeezer needs two distinct modes");
    }
    ensure_finite("r", r)?;
    ensure_finite("phi", phi)?;
    if r < 0.0 {
        return invalid(format!("squeezing parameter must be >= 0, got {r}"));
    }
    let (c, s) = (r.cosh(), r.sinh());
    let (sin, cos) = phi.sin_cos();
    let refl = [[cos, sin], [sin, -cos]];
    let mut m = DMatrix::identity(2 * n_modes, 2 * n_modes);
    let (a, b) = (2 * i, 2 * j);
    for row in 0..2 {
        for col in 0..2 {
            let diag = if row == col { c } else { 0.0 };
            m[(a + row, a + col)] = diag;
            m[(b + row, b + col)] = diag;
            m[(a + row, b + col)] = s * refl[row][col];
            m[(b + row, a + col)] = s * refl[row][col];
        }
    }
    Ok(m)
}

/// Symplectic matrix rotating mode `i` by `theta`.
pub fn phase_shift_matrix(n_modes: usize, i: usize, theta: f64) -> Result<DMatrix<f64>> {
    if i >= n_modes {
        return invalid(format!("mode index {i} out of range for {n_modes} modes"));
    }
    ensure_finite("theta", theta)?;
    let (sin, cos) = theta.sin_cos();
    let mut m = DMatrix::identity(2 * n_modes, 2 * n_modes);
    let k = 2 * i;
    m[(k, k)] = cos;
    m[(k, k + 1)] = -sin;
    m[(k + 1, k)] = sin;
    m[(k + 1, k + 1)] = cos;
    Ok(m)
}

/// Largest absolute entry of `S·Ω·Sᵀ − Ω`.
pub fn symplectic_defect(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows() / 2;
    let omega = symplectic_form(n);
    (s * &omega * s.transpose() - omega).amax()
}
