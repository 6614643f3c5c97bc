//! MMSE channel estimation from de-spread pilot observations.
//!
//! The estimators condition on the two most recent pilots, `y(t) = h(t) + w(t)`
//! and `y(t-1) = h(t-1) + w(t-1)` with `w ~ CN(0, s I)`, exploiting the
//! Gauss-Markov structure of the channel: the stacked observation
//! `zeta = [y(t); y(t-1)]` is jointly Gaussian with `h(t)`, so the conditional
//! mean is linear, `h_hat = E zeta`, and the conditional covariance `Z` does
//! not depend on the realization. A memoryless estimator that sees only
//! `y(t)` is provided for the mismatched baselines.
//!
//! For the scalar model `A = a I`, `C = c I` everything reduces to three
//! numbers: `h_hat = e_hat y(t) + e_check y(t-1)` with per-antenna error
//! variance `z`.

use crate::{C64, CMatrix, CVector, Error, Result};

/// Two-lag MMSE coefficients for the scalar channel model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarConditionalStats {
    /// Weight on the current pilot `y(t)`.
    pub e_hat: f64,
    /// Weight on the previous pilot `y(t-1)`.
    pub e_check: f64,
    /// Per-antenna conditional error variance of `h(t)` given both pilots.
    pub z: f64,
    /// Effective pilot-noise variance the coefficients were built for.
    pub s: f64,
}

impl ScalarConditionalStats {
    /// Per-antenna variance of the estimate itself, `c - z`.
    pub fn estimate_var(&self, c: f64) -> f64 {
        c - self.z
    }
}

/// Two-lag MMSE coefficients for `A = a I`, `C = c I` and pilot-noise
/// variance `s`.
///
/// Closed form: with `D = (c+s)^2 - a^2 c^2`,
/// `e_hat = c (c + s - a^2 c) / D`, `e_check = a c s / D`, and
/// `z = c s (c + s - a^2 c) / D`. A noiseless pilot (`s = 0`) yields the
/// exact observation, `(1, 0, 0)`.
///
/// # Errors
///
/// [`Error::OutOfDomain`] when `c < 0`, `s < 0`, `|a| > 1`, or an input is
/// not finite.
pub fn scalar_conditional(c: f64, a: f64, s: f64) -> Result<ScalarConditionalStats> {
    if !c.is_finite() || c < 0.0 {
        return Err(Error::OutOfDomain(format!(
            "channel variance c must be non-negative, got {c}"
        )));
    }
    if !s.is_finite() || s < 0.0 {
        return Err(Error::OutOfDomain(format!(
            "pilot-noise variance s must be non-negative, got {s}"
        )));
    }
    if !a.is_finite() || a.abs() > 1.0 {
        return Err(Error::OutOfDomain(format!(
            "transition coefficient must satisfy |a| <= 1, got {a}"
        )));
    }
    if s == 0.0 {
        return Ok(ScalarConditionalStats {
            e_hat: 1.0,
            e_check: 0.0,
            z: 0.0,
            s,
        });
    }
    let d = (c + s) * (c + s) - a * a * c * c;
    let e_hat = c * (c + s - a * a * c) / d;
    let e_check = a * c * s / d;
    let z = c * s * (c + s - a * a * c) / d;
    Ok(ScalarConditionalStats { e_hat, e_check, z, s })
}

/// Two-lag MMSE operators for the general matrix channel model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalStats {
    /// Estimator matrix: `h_hat = E zeta`, shape `N_r x 2 N_r`.
    pub e: CMatrix,
    /// Conditional error covariance of `h(t)` given the stacked pilots.
    pub z: CMatrix,
    /// Covariance of the estimate itself, `C - Z`.
    pub r_mmse: CMatrix,
    /// Effective pilot-noise variance the operators were built for.
    pub s: f64,
}

impl ConditionalStats {
    /// Number of receive antennas.
    pub fn n_r(&self) -> usize {
        self.e.nrows()
    }

    /// Applies the estimator to a stacked observation.
    ///
    /// # Errors
    ///
    /// [`Error::Dimension`] when the observation length is not `2 N_r`.
    pub fn estimate(&self, zeta: &StackedEstimate) -> Result<CVector> {
        mmse_estimate(self, zeta)
    }
}

/// Stacked two-pilot observation `zeta = [y(t); y(t-1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedEstimate {
    /// The stacked observation vector of length `2 N_r`.
    pub zeta: CVector,
}

impl StackedEstimate {
    /// Stacks the current and previous de-spread pilot observations.
    ///
    /// # Errors
    ///
    /// [`Error::Dimension`] when the two observations differ in length.
    pub fn new(obs_t: &CVector, obs_tm1: &CVector) -> Result<Self> {
        if obs_t.len() != obs_tm1.len() {
            return Err(Error::Dimension(format!(
                "stacked pilots need equal lengths, got {} and {}",
                obs_t.len(),
                obs_tm1.len()
            )));
        }
        let n = obs_t.len();
        let zeta = CVector::from_fn(2 * n, |i, _| if i < n { obs_t[i] } else { obs_tm1[i - n] });
        Ok(StackedEstimate { zeta })
    }

    /// Number of receive antennas (half the stacked length).
    pub fn n_r(&self) -> usize {
        self.zeta.len() / 2
    }
}

/// Builds the two-lag MMSE operators for the matrix model `(A, C)` with
/// pilot-noise variance `s`.
///
/// The stacked pilot covariance is the 2x2 block matrix
/// `[[C + s I, A C], [C A^H, C + s I]]` and the cross-covariance of `h(t)`
/// with the stack is `[C, A C]`. For `s > 0` the diagonal blocks are positive
/// definite and the solve uses their Cholesky factors with a Schur complement
/// for the second block row; for `s = 0` (or a defective block) the stacked
/// covariance can be singular, so the solve falls back to a pseudo-inverse of
/// the full `2 N_r` matrix.
///
/// # Errors
///
/// [`Error::Dimension`] on shape mismatch, [`Error::OutOfDomain`] for a
/// negative `s`, and [`Error::SingularBlock`] when even the pseudo-inverse
/// path fails.
pub fn conditional_matrices(c: &CMatrix, a: &CMatrix, s: f64) -> Result<ConditionalStats> {
    let n = c.nrows();
    if c.ncols() != n || a.nrows() != n || a.ncols() != n {
        return Err(Error::Dimension(format!(
            "conditional_matrices: A is {}x{}, C is {}x{}",
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if !s.is_finite() || s < 0.0 {
        return Err(Error::OutOfDomain(format!(
            "pilot-noise variance s must be non-negative, got {s}"
        )));
    }

    let ac = a * c; // A C
    let r2 = ac.adjoint(); // C A^H

    let e = if s > 0.0 {
        schur_solve(c, &ac, &r2, s).or_else(|| pinv_solve(c, &ac, &r2, s))
    } else {
        pinv_solve(c, &ac, &r2, s)
    }
    .ok_or_else(|| {
        Error::SingularBlock("stacked pilot covariance could not be inverted".into())
    })?;

    // Z = C - E [C; C A^H], symmetrized to wash out rounding asymmetry.
    let ezh = e.view((0, 0), (n, n)) * c + e.view((0, n), (n, n)) * &r2;
    let r_mmse = (&ezh + ezh.adjoint()) * C64::new(0.5, 0.0);
    let z = c - &r_mmse;
    Ok(ConditionalStats { e, z, r_mmse, s })
}

/// Schur-complement solve of `Cov E^H = [C; C A^H]` using the positive
/// definite diagonal blocks `B = C + s I`. Returns `None` when a Cholesky
/// factorization fails.
fn schur_solve(c: &CMatrix, ac: &CMatrix, r2: &CMatrix, s: f64) -> Option<CMatrix> {
    let n = c.nrows();
    let mut b = c.clone();
    for i in 0..n {
        b[(i, i)] += C64::new(s, 0.0);
    }
    let chol_b = b.clone().cholesky()?;
    let binv_d = chol_b.solve(ac);
    let schur = &b - r2 * &binv_d;
    let chol_s = schur.cholesky()?;
    let binv_r1 = chol_b.solve(c);
    let x2 = chol_s.solve(&(r2 - r2 * &binv_r1));
    let x1 = chol_b.solve(&(c - ac * &x2));
    let mut e = CMatrix::zeros(n, 2 * n);
    e.view_mut((0, 0), (n, n)).copy_from(&x1.adjoint());
    e.view_mut((0, n), (n, n)).copy_from(&x2.adjoint());
    Some(e)
}

/// Pseudo-inverse solve for a (possibly singular) stacked covariance.
fn pinv_solve(c: &CMatrix, ac: &CMatrix, r2: &CMatrix, s: f64) -> Option<CMatrix> {
    let n = c.nrows();
    let mut cov = CMatrix::zeros(2 * n, 2 * n);
    cov.view_mut((0, 0), (n, n)).copy_from(c);
    cov.view_mut((0, n), (n, n)).copy_from(ac);
    cov.view_mut((n, 0), (n, n)).copy_from(r2);
    cov.view_mut((n, n), (n, n)).copy_from(c);
    for i in 0..2 * n {
        cov[(i, i)] += C64::new(s, 0.0);
    }
    let eps = 1e-12 * cov.norm().max(f64::MIN_POSITIVE);
    let pinv = cov.pseudo_inverse(eps).ok()?;
    let mut p = CMatrix::zeros(n, 2 * n);
    p.view_mut((0, 0), (n, n)).copy_from(c);
    p.view_mut((0, n), (n, n)).copy_from(ac);
    Some(p * pinv)
}

/// Applies the matrix estimator: `h_hat = E zeta`.
///
/// # Errors
///
/// [`Error::Dimension`] when the stacked length is not `2 N_r`.
pub fn mmse_estimate(stats: &ConditionalStats, zeta: &StackedEstimate) -> Result<CVector> {
    if zeta.zeta.len() != stats.e.ncols() {
        return Err(Error::Dimension(format!(
            "estimator expects a stacked length of {}, got {}",
            stats.e.ncols(),
            zeta.zeta.len()
        )));
    }
    Ok(&stats.e * &zeta.zeta)
}

/// Scalar-model estimate `h_hat = e_hat y(t) + e_check y(t-1)`.
pub fn mmse_estimate_iid(
    stats: &ScalarConditionalStats,
    obs_t: &CVector,
    obs_tm1: &CVector,
) -> CVector {
    debug_assert_eq!(obs_t.len(), obs_tm1.len());
    let (eh, ec) = (stats.e_hat, stats.e_check);
    CVector::from_fn(obs_t.len(), |i, _| obs_t[i] * eh + obs_tm1[i] * ec)
}

/// Memoryless (single-pilot) MMSE operators.
#[derive(Debug, Clone, PartialEq)]
pub struct MemorylessStats {
    /// Estimator matrix: `h_hat = G y(t)` with `G = C (C + s I)^-1`.
    pub gain: CMatrix,
    /// Error covariance `Q = C - G C`.
    pub q: CMatrix,
}

impl MemorylessStats {
    /// Applies the memoryless estimator to the current pilot.
    pub fn estimate(&self, obs_t: &CVector) -> CVector {
        &self.gain * obs_t
    }
}

/// Builds the memoryless MMSE operators for covariance `C` and pilot-noise
/// variance `s`.
///
/// # Errors
///
/// [`Error::OutOfDomain`] for a negative `s`, [`Error::SingularBlock`] when
/// `C + s I` cannot be inverted (even via pseudo-inverse).
pub fn memoryless_stats(c: &CMatrix, s: f64) -> Result<MemorylessStats> {
    if !s.is_finite() || s < 0.0 {
        return Err(Error::OutOfDomain(format!(
            "pilot-noise variance s must be non-negative, got {s}"
        )));
    }
    let n = c.nrows();
    let mut b = c.clone();
    for i in 0..n {
        b[(i, i)] += C64::new(s, 0.0);
    }
    let gain = match b.clone().cholesky() {
        // (C + sI)^-1 C equals C (C + sI)^-1: both are rational functions of C.
        Some(chol) => chol.solve(c),
        None => {
            let eps = 1e-12 * b.norm().max(f64::MIN_POSITIVE);
            let pinv = b
                .pseudo_inverse(eps)
                .map_err(|_| Error::SingularBlock("C + s I could not be inverted".into()))?;
            c * pinv
        }
    };
    let qc = c - &gain * c;
    let q = (&qc + qc.adjoint()) * C64::new(0.5, 0.0);
    Ok(MemorylessStats { gain, q })
}

/// Memoryless estimate `h_hat = C (C + s I)^-1 y(t)` computed in one shot.
///
/// # Errors
///
/// Propagates the errors of [`memoryless_stats`], plus [`Error::Dimension`]
/// when the observation length does not match `C`.
pub fn memoryless_estimate(c: &CMatrix, s: f64, obs_t: &CVector) -> Result<CVector> {
    if obs_t.len() != c.nrows() {
        return Err(Error::Dimension(format!(
            "observation length {} does not match C ({}x{})",
            obs_t.len(),
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(memoryless_stats(c, s)?.estimate(obs_t))
}

/// Scalar memoryless gain `c / (c + s)`; a noiseless pilot gives 1.
pub fn memoryless_gain_iid(c: f64, s: f64) -> f64 {
    debug_assert!(c >= 0.0 && s >= 0.0);
    if s == 0.0 {
        1.0
    } else {
        c / (c + s)
    }
}

/// Scalar memoryless error variance `q = c s / (c + s)`.
pub fn memoryless_q_iid(c: f64, s: f64) -> f64 {
    debug_assert!(c >= 0.0 && s >= 0.0);
    if s == 0.0 {
        0.0
    } else {
        c * s / (c + s)
    }
}
