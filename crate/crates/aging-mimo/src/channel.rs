//! Time-varying Rayleigh channel model.
//!
//! Each user's uplink channel evolves as a first-order Gauss-Markov process:
//! `h(t) = A h(t-1) + theta(t)` with `theta(t) ~ CN(0, Theta)` and
//! `Theta = C - A C A^H`, chosen so that `CN(0, C)` is the stationary law of
//! the chain. The scalar specialization `A = a I`, `C = c I` is the workhorse
//! of the simulation fast path; the matrix forms are kept fully general.
//!
//! Every sampling helper takes `&mut impl Rng` and draws a fixed, documented
//! number of variates in a fixed order, so a given `(master seed, trial)`
//! pair reproduces bit-identical realizations regardless of thread count.

use crate::{C64, CMatrix, CVector, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

/// System-level configuration shared by every user in a scenario.
///
/// The per-user block power budget is split between pilot and data symbols:
/// `tau_p * P_p + tau_d * P = P_tot`, so the data power `P` is derived, not
/// configured. See [`UserParams::new`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of single-antenna users served in the same resource block.
    pub k: u32,
    /// Number of receive antennas at the base station.
    pub n_r: u32,
    /// Pilot symbols per coherence block.
    pub tau_p: u32,
    /// Data symbols per coherence block.
    pub tau_d: u32,
    /// Per-user energy budget for one block (same unit as the powers).
    pub p_tot: f64,
    /// Noise variance per antenna on the pilot observation, before the
    /// de-spreading gain `alpha^2 P_p tau_p` is applied.
    pub sigma_p2: f64,
    /// Noise variance per antenna on the data observation.
    pub sigma_d2: f64,
}

impl SystemConfig {
    /// Checks that every field lies in its admissible range.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Config`] when a count is zero or a power/variance is
    /// not a positive finite number.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.n_r == 0 {
            return Err(Error::Config("n_r must be at least 1".into()));
        }
        if self.tau_p == 0 {
            return Err(Error::Config("tau_p must be at least 1".into()));
        }
        if self.tau_d == 0 {
            return Err(Error::Config("tau_d must be at least 1".into()));
        }
        for (name, v) in [
            ("p_tot", self.p_tot),
            ("sigma_p2", self.sigma_p2),
            ("sigma_d2", self.sigma_d2),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Non-fatal diagnostics for configurations that are admissible but
    /// suspicious. Currently flags `k > tau_p`, where orthogonal pilot
    /// sequences cannot exist and the independent-interference model used
    /// throughout is optimistic.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.k > self.tau_p {
            out.push(format!(
                "k = {} exceeds tau_p = {}: orthogonal pilots cannot be assigned to all \
                 users, so results ignore pilot contamination",
                self.k, self.tau_p
            ));
        }
        out
    }
}

/// Per-user parameters for the scalar channel model `A = a I`, `C = c I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserParams {
    /// Large-scale amplitude gain (linear; `alpha^2` is the power gain).
    pub alpha: f64,
    /// AR(1) state-transition coefficient, `|a| < 1`.
    pub a: f64,
    /// Stationary per-antenna channel variance.
    pub c: f64,
    /// Pilot power.
    pub p_p: f64,
    /// Data power, derived from the block budget.
    pub p: f64,
}

impl UserParams {
    /// Builds user parameters, deriving the data power from the block budget
    /// `P = (P_tot - tau_p * P_p) / tau_d`.
    ///
    /// # Errors
    ///
    /// [`Error::Config`] when `alpha`, `c`, or `p_p` is not positive or
    /// `|a| >= 1`; [`Error::InfeasibleBudget`] when the pilot allocation
    /// consumes the whole budget (`P <= 0`).
    pub fn new(alpha: f64, a: f64, c: f64, p_p: f64, cfg: &SystemConfig) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Config(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        if !a.is_finite() || a.abs() >= 1.0 {
            return Err(Error::Config(format!(
                "a must satisfy |a| < 1 for a stationary channel, got {a}"
            )));
        }
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::Config(format!(
                "c must be positive and finite, got {c}"
            )));
        }
        if !p_p.is_finite() || p_p <= 0.0 {
            return Err(Error::Config(format!(
                "p_p must be positive and finite, got {p_p}"
            )));
        }
        let p = derived_data_power(p_p, cfg)?;
        Ok(UserParams { alpha, a, c, p_p, p })
    }

    /// Same as [`UserParams::new`] but takes the large-scale loss in dB and
    /// converts it to the linear amplitude gain `alpha = 10^(-dB/20)`.
    pub fn from_pathloss_db(
        pathloss_db: f64,
        a: f64,
        c: f64,
        p_p: f64,
        cfg: &SystemConfig,
    ) -> Result<Self> {
        Self::new(10f64.powf(-pathloss_db / 20.0), a, c, p_p, cfg)
    }

    /// Effective noise variance `s` on the de-spread pilot observation
    /// `y = h + w`, `w ~ CN(0, s I)` with `s = sigma_p^2 / (alpha^2 P_p tau_p)`.
    pub fn pilot_noise_var(&self, cfg: &SystemConfig) -> f64 {
        cfg.sigma_p2 / (self.alpha * self.alpha * self.p_p * f64::from(cfg.tau_p))
    }

    /// Received data-power weight `w = alpha^2 P` of this user.
    pub fn data_weight(&self) -> f64 {
        self.alpha * self.alpha * self.p
    }
}

/// Per-user parameters for the general matrix channel model.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixUserParams {
    /// Large-scale amplitude gain (linear).
    pub alpha: f64,
    /// State-transition matrix `A`.
    pub a: CMatrix,
    /// Stationary channel covariance `C` (Hermitian PSD).
    pub c: CMatrix,
    /// Pilot power.
    pub p_p: f64,
    /// Data power, derived from the block budget.
    pub p: f64,
}

impl MatrixUserParams {
    /// Builds matrix user parameters, validating that `C` is Hermitian PSD
    /// and that the implied process-noise covariance `C - A C A^H` is PSD
    /// (i.e. the pair `(A, C)` admits `CN(0, C)` as a stationary law).
    ///
    /// # Errors
    ///
    /// [`Error::Dimension`] on non-square or mismatched shapes,
    /// [`Error::NotPsd`] when `C` or the process-noise covariance fails the
    /// PSD check, [`Error::Config`] / [`Error::InfeasibleBudget`] as in
    /// [`UserParams::new`].
    pub fn new(alpha: f64, a: CMatrix, c: CMatrix, p_p: f64, cfg: &SystemConfig) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Config(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        if !p_p.is_finite() || p_p <= 0.0 {
            return Err(Error::Config(format!(
                "p_p must be positive and finite, got {p_p}"
            )));
        }
        check_square_pair(&a, &c)?;
        check_hermitian_psd(&c, "C")?;
        // Validates stationarity of (A, C) as a side effect.
        process_noise_cov(&a, &c)?;
        let p = derived_data_power(p_p, cfg)?;
        Ok(MatrixUserParams { alpha, a, c, p_p, p })
    }

    /// Number of receive antennas this covariance model describes.
    pub fn n_r(&self) -> usize {
        self.c.nrows()
    }

    /// Effective noise variance on the de-spread pilot observation.
    pub fn pilot_noise_var(&self, cfg: &SystemConfig) -> f64 {
        cfg.sigma_p2 / (self.alpha * self.alpha * self.p_p * f64::from(cfg.tau_p))
    }

    /// Received data-power weight `w = alpha^2 P` of this user.
    pub fn data_weight(&self) -> f64 {
        self.alpha * self.alpha * self.p
    }
}

fn derived_data_power(p_p: f64, cfg: &SystemConfig) -> Result<f64> {
    let p = (cfg.p_tot - f64::from(cfg.tau_p) * p_p) / f64::from(cfg.tau_d);
    if !p.is_finite() || p <= 0.0 {
        return Err(Error::InfeasibleBudget(format!(
            "pilot allocation tau_p * P_p = {} leaves no data power out of P_tot = {}",
            f64::from(cfg.tau_p) * p_p,
            cfg.p_tot
        )));
    }
    Ok(p)
}

fn check_square_pair(a: &CMatrix, c: &CMatrix) -> Result<()> {
    if a.nrows() != a.ncols() || c.nrows() != c.ncols() {
        return Err(Error::Dimension(format!(
            "A and C must be square, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if a.nrows() != c.nrows() {
        return Err(Error::Dimension(format!(
            "A is {0}x{0} but C is {1}x{1}",
            a.nrows(),
            c.nrows()
        )));
    }
    Ok(())
}

fn check_hermitian_psd(m: &CMatrix, label: &str) -> Result<()> {
    let herm_err: f64 = (m - m.adjoint()).norm();
    let scale = m.norm().max(1.0);
    if herm_err > 1e-10 * scale {
        return Err(Error::NotPsd(format!(
            "{label} is not Hermitian (asymmetry {herm_err:.3e})"
        )));
    }
    let floor = -1e-10 * m.trace().re.max(0.0);
    let eig = m.clone().symmetric_eigen();
    if let Some(min) = eig
        .eigenvalues
        .iter()
        .copied()
        .min_by(|x, y| x.total_cmp(y))
    {
        if min < floor {
            return Err(Error::NotPsd(format!(
                "{label} has negative eigenvalue {min:.6e}"
            )));
        }
    }
    Ok(())
}

/// Process-noise covariance `Theta = C - A C A^H` of the Gauss-Markov chain,
/// returned in symmetrized form.
///
/// # Errors
///
/// [`Error::Dimension`] on shape mismatch; [`Error::NotPsd`] when an
/// eigenvalue of the symmetrized result falls below `-1e-10 * trace(C)`,
/// which means `CN(0, C)` is not a stationary law for the transition `A`.
pub fn process_noise_cov(a: &CMatrix, c: &CMatrix) -> Result<CMatrix> {
    check_square_pair(a, c)?;
    let raw = c - a * c * a.adjoint();
    let theta = (&raw + raw.adjoint()) * C64::new(0.5, 0.0);
    let floor = -1e-10 * c.trace().re.max(0.0);
    let eig = theta.clone().symmetric_eigen();
    if let Some(min) = eig
        .eigenvalues
        .iter()
        .copied()
        .min_by(|x, y| x.total_cmp(y))
    {
        if min < floor {
            return Err(Error::NotPsd(format!(
                "process-noise covariance has eigenvalue {min:.6e}; (A, C) is not stationary"
            )));
        }
    }
    Ok(theta)
}

/// Factor `F` with `F F^H = M` for a Hermitian PSD matrix `M`.
///
/// Uses Cholesky when `M` is positive definite and falls back to an
/// eigendecomposition with tiny negative eigenvalues clamped to zero, so
/// rank-deficient covariances (including the zero matrix) are accepted.
///
/// # Errors
///
/// [`Error::NotPsd`] when an eigenvalue falls below `-1e-10 * trace(M)`.
pub fn psd_factor(m: &CMatrix) -> Result<CMatrix> {
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = m.clone().symmetric_eigen();
    let floor = -1e-10 * m.trace().re.max(0.0);
    let mut vals = eig.eigenvalues;
    for v in vals.iter_mut() {
        if *v < floor {
            return Err(Error::NotPsd(format!(
                "matrix has negative eigenvalue {v:.6e}"
            )));
        }
        *v = v.max(0.0);
    }
    let mut f = eig.eigenvectors;
    for (j, lambda) in vals.iter().enumerate() {
        let s = lambda.sqrt();
        f.column_mut(j).iter_mut().for_each(|x| *x *= s);
    }
    Ok(f)
}

/// Draws `z ~ CN(0, var * I_n)`: independent entries with variance `var`
/// split evenly between real and imaginary parts.
///
/// Always consumes exactly `2 n` standard-normal variates (real part first
/// for each entry, in index order), even when `var = 0`, so downstream draws
/// stay aligned across parameter sweeps.
pub fn complex_gaussian_vector<R: Rng + ?Sized>(n: usize, var: f64, rng: &mut R) -> CVector {
    debug_assert!(var >= 0.0, "variance must be non-negative");
    let sd = (var / 2.0).sqrt();
    CVector::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(sd * re, sd * im)
    })
}

/// Draws one channel vector from the stationary law `CN(0, C)`.
///
/// # Errors
///
/// Propagates [`Error::NotPsd`] from the factorization of `C`.
pub fn sample_stationary<R: Rng + ?Sized>(c: &CMatrix, rng: &mut R) -> Result<CVector> {
    let f = psd_factor(c)?;
    let g = complex_gaussian_vector(c.nrows(), 1.0, rng);
    Ok(&f * g)
}

/// Stationary draw for the scalar model `C = c I_n`.
pub fn sample_stationary_iid<R: Rng + ?Sized>(c: f64, n: usize, rng: &mut R) -> CVector {
    debug_assert!(c >= 0.0, "stationary variance must be non-negative");
    complex_gaussian_vector(n, c, rng)
}

/// One step of the Gauss-Markov recursion `h(t) = A h(t-1) + theta(t)` with
/// `theta ~ CN(0, Theta)`.
///
/// Factors `Theta` on every call; when stepping a long chain with a fixed
/// model, factor once with [`psd_factor`] and use [`ar1_step_with_factor`].
///
/// # Errors
///
/// [`Error::Dimension`] on shape mismatch, [`Error::NotPsd`] from the
/// factorization of `Theta`.
pub fn ar1_step<R: Rng + ?Sized>(
    a: &CMatrix,
    theta: &CMatrix,
    h_prev: &CVector,
    rng: &mut R,
) -> Result<CVector> {
    let f = psd_factor(theta)?;
    ar1_step_with_factor(a, &f, h_prev, rng)
}

/// Same as [`ar1_step`] but takes a pre-computed factor `F` with
/// `F F^H = Theta`.
///
/// # Errors
///
/// [`Error::Dimension`] on shape mismatch.
pub fn ar1_step_with_factor<R: Rng + ?Sized>(
    a: &CMatrix,
    theta_factor: &CMatrix,
    h_prev: &CVector,
    rng: &mut R,
) -> Result<CVector> {
    let n = h_prev.len();
    if a.nrows() != n || a.ncols() != n || theta_factor.nrows() != n {
        return Err(Error::Dimension(format!(
            "ar1_step: A is {}x{}, factor is {}x{}, state has length {n}",
            a.nrows(),
            a.ncols(),
            theta_factor.nrows(),
            theta_factor.ncols()
        )));
    }
    let g = complex_gaussian_vector(theta_factor.ncols(), 1.0, rng);
    Ok(a * h_prev + theta_factor * g)
}

/// One step of the scalar-model recursion `h(t) = a h(t-1) + theta(t)` with
/// `theta ~ CN(0, (1 - a^2) c I)`.
pub fn ar1_step_iid<R: Rng + ?Sized>(a: f64, c: f64, h_prev: &CVector, rng: &mut R) -> CVector {
    debug_assert!(a.abs() <= 1.0, "|a| must not exceed 1");
    debug_assert!(c >= 0.0, "stationary variance must be non-negative");
    let noise = complex_gaussian_vector(h_prev.len(), (1.0 - a * a) * c, rng);
    h_prev.map(|x| x * a) + noise
}

/// De-spread pilot observation `y = h + w`, `w ~ CN(0, s I)`, where `s` is
/// the effective pilot-noise variance (see [`UserParams::pilot_noise_var`]).
pub fn received_pilot<R: Rng + ?Sized>(h: &CVector, s: f64, rng: &mut R) -> CVector {
    h + complex_gaussian_vector(h.len(), s, rng)
}

/// Received data vector `y = sum_k amp_k x_k h_k + n`, `n ~ CN(0, sigma_d2 I)`,
/// where `amp_k = alpha_k sqrt(P_k)` is each user's received amplitude.
///
/// # Errors
///
/// [`Error::Dimension`] when the slices disagree in length, are empty, or the
/// channel vectors have inconsistent sizes.
pub fn received_data<R: Rng + ?Sized>(
    amps: &[f64],
    channels: &[CVector],
    symbols: &[C64],
    sigma_d2: f64,
    rng: &mut R,
) -> Result<CVector> {
    if amps.is_empty() || amps.len() != channels.len() || amps.len() != symbols.len() {
        return Err(Error::Dimension(format!(
            "received_data: got {} amplitudes, {} channels, {} symbols",
            amps.len(),
            channels.len(),
            symbols.len()
        )));
    }
    let n = channels[0].len();
    if channels.iter().any(|h| h.len() != n) {
        return Err(Error::Dimension(
            "received_data: channel vectors have inconsistent lengths".into(),
        ));
    }
    let mut y = complex_gaussian_vector(n, sigma_d2, rng);
    for ((&amp, h), &x) in amps.iter().zip(channels).zip(symbols) {
        let scale = x * amp;
        y.zip_apply(h, |yi, hi| *yi += scale * hi);
    }
    Ok(y)
}

/// Uniform QPSK symbol from `{(+-1 +- i) / sqrt(2)}`; consumes one draw.
pub fn qpsk_symbol<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    const POINTS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    let (re, im) = POINTS[rng.gen_range(0..4usize)];
    C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Deterministic per-trial RNG: a ChaCha8 generator seeded with the master
/// seed and moved to stream `trial + 1`.
///
/// Streams are independent, so trials can run on any number of threads in
/// any order and still reproduce the single-threaded results bit for bit.
/// Stream 0 is reserved for scenario-level draws.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial + 1);
    rng
}
