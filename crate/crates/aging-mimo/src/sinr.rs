//! Instantaneous and large-system SINR evaluation.
//!
//! The MSE-optimal combiner admits the classical quadratic-form SINR
//! `gamma = b^H J_1^-1 b`, where `J_1` is the data covariance with the target
//! user's signal term removed. As the antenna count grows, `gamma`
//! concentrates around a deterministic equivalent that depends on the users
//! only through the per-user estimate-covariance weights `phi_k` and the
//! effective noise level `beta`; [`det_equiv_general`] computes that fixed
//! point, [`iid_sinr_root`] solves the equivalent scalar root problem, and
//! [`symmetric_sinr`] specializes it to identical users in closed form.
//!
//! Conventions: user 0 is the target; `phis[0]` is its weight and every
//! other entry belongs to an interferer.

use crate::receivers::{build_b_j, Receiver};
use crate::{C64, CMatrix, Error, ReceiverInputs, Result};

/// Per-user signal weights for the large-system SINR machinery.
///
/// `Scalar` describes the isotropic model where user `k` contributes the
/// weight `phi_k = alpha_k^2 P_k (e_hat_k c_k + e_check_k c_k a_k)` per
/// antenna and the effective noise is `beta = sum_k alpha_k^2 P_k z_k +
/// sigma_d^2`. `Matrix` generalizes the weights to full covariance matrices
/// `Phi_k = alpha_k^2 P_k R_mmse,k` while keeping the effective noise
/// isotropic at level `beta`.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiFamily {
    /// Isotropic per-user weights.
    Scalar {
        /// `phi_k` for each user; entry 0 is the target.
        phis: Vec<f64>,
        /// Effective noise level.
        beta: f64,
    },
    /// Full covariance weights with isotropic effective noise.
    Matrix {
        /// `Phi_k` for each user; entry 0 is the target.
        phis: Vec<CMatrix>,
        /// Effective noise level.
        beta: f64,
    },
}

impl PhiFamily {
    /// Number of users described by the family.
    pub fn k(&self) -> usize {
        match self {
            PhiFamily::Scalar { phis, .. } => phis.len(),
            PhiFamily::Matrix { phis, .. } => phis.len(),
        }
    }

    /// Effective noise level.
    pub fn beta(&self) -> f64 {
        match self {
            PhiFamily::Scalar { beta, .. } | PhiFamily::Matrix { beta, .. } => *beta,
        }
    }

    fn validate(&self, n_r: usize) -> Result<()> {
        if n_r == 0 {
            return Err(Error::OutOfDomain("n_r must be at least 1".into()));
        }
        if self.k() == 0 {
            return Err(Error::OutOfDomain("phi family needs at least one user".into()));
        }
        let beta = self.beta();
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::OutOfDomain(format!(
                "effective noise beta must be positive, got {beta}"
            )));
        }
        match self {
            PhiFamily::Scalar { phis, .. } => {
                for (k, &p) in phis.iter().enumerate() {
                    if !p.is_finite() || p <= 0.0 {
                        return Err(Error::OutOfDomain(format!(
                            "phi[{k}] must be positive, got {p}"
                        )));
                    }
                }
            }
            PhiFamily::Matrix { phis, .. } => {
                for (k, p) in phis.iter().enumerate() {
                    if p.nrows() != n_r || p.ncols() != n_r {
                        return Err(Error::Dimension(format!(
                            "Phi[{k}] is {}x{}, expected {n_r}x{n_r}",
                            p.nrows(),
                            p.ncols()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-user large-system weight `phi = alpha^2 P (e_hat c + e_check c a)`.
pub fn phi_scalar(user: &crate::UserParams, stats: &crate::ScalarConditionalStats) -> f64 {
    user.data_weight() * (stats.e_hat * user.c + stats.e_check * user.c * user.a)
}

/// Matrix weight `Phi = alpha^2 P R_mmse` (the weighted covariance of the
/// two-lag estimate).
pub fn phi_matrix(user: &crate::MatrixUserParams, stats: &crate::ConditionalStats) -> CMatrix {
    &stats.r_mmse * C64::new(user.data_weight(), 0.0)
}

/// Builds the scalar family for a set of users: weights `phi_k` plus the
/// effective noise `beta = sum_k alpha_k^2 P_k z_k + sigma_d^2`.
///
/// # Errors
///
/// [`Error::Dimension`] when the slices disagree or are empty.
pub fn scalar_phi_family(
    users: &[crate::UserParams],
    stats: &[crate::ScalarConditionalStats],
    sigma_d2: f64,
) -> Result<PhiFamily> {
    if users.is_empty() || users.len() != stats.len() {
        return Err(Error::Dimension(format!(
            "phi family needs matching user/stats slices, got {} and {}",
            users.len(),
            stats.len()
        )));
    }
    let phis = users
        .iter()
        .zip(stats)
        .map(|(u, st)| phi_scalar(u, st))
        .collect();
    let beta = users
        .iter()
        .zip(stats)
        .map(|(u, st)| u.data_weight() * st.z)
        .sum::<f64>()
        + sigma_d2;
    Ok(PhiFamily::Scalar { phis, beta })
}

/// Options for the deterministic-equivalent fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Residual tolerance on the (dimensionless) interference coordinates.
    pub tol: f64,
    /// Iteration budget.
    pub max_iter: u64,
    /// Damping factor for the matrix-path Picard updates, in `(0, 1]`;
    /// the scalar path uses a bracketed Newton step and ignores it.
    pub damping: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-10,
            max_iter: 200,
            damping: 1.0,
        }
    }
}

/// Converged state of the deterministic-equivalent fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointState {
    /// Large-system SINR of the target user.
    pub gamma: f64,
    /// Interference coordinates `delta_k`, one per interferer (users `k >= 2`).
    pub delta: Vec<f64>,
    /// Fixed-point evaluations performed.
    pub iterations: u64,
    /// Residual at the final iterate (max change over the coordinates).
    pub residual: f64,
}

/// Deterministic equivalent of the optimal-combiner SINR.
///
/// Solves the coupled fixed point
/// `delta_k = tr[Phi_k (beta I + sum_{j>=2} Phi_j / (1 + delta_j))^-1]`
/// and returns `gamma = delta_1`. For the scalar family the interference
/// coordinates collapse onto one unknown, which is found by a bracketed
/// Newton iteration on the defect of the one-dimensional map (a handful of
/// evaluations); the matrix family runs damped Picard sweeps.
///
/// # Errors
///
/// [`Error::OutOfDomain`] / [`Error::Dimension`] on invalid inputs,
/// [`Error::NoConvergence`] when the iteration budget is exhausted, and
/// [`Error::SolveFailure`] if a matrix-path factorization fails.
pub fn det_equiv_general(
    family: &PhiFamily,
    n_r: usize,
    opts: &FixedPointOptions,
) -> Result<FixedPointState> {
    family.validate(n_r)?;
    if !(opts.tol > 0.0) || !(opts.damping > 0.0 && opts.damping <= 1.0) || opts.max_iter == 0 {
        return Err(Error::OutOfDomain(format!(
            "fixed-point options out of range: tol = {}, max_iter = {}, damping = {}",
            opts.tol, opts.max_iter, opts.damping
        )));
    }
    match family {
        PhiFamily::Scalar { phis, beta } => scalar_newton(phis, *beta, n_r, opts),
        PhiFamily::Matrix { phis, beta } => matrix_picard(phis, *beta, n_r, opts),
    }
}

/// Scalar-family solver: all interference coordinates share one unknown
/// `t in (0, 1]` with `delta_k = N_r phi_k' t` (primes are beta-normalized),
/// and `t` is the unique fixed point of the increasing map
/// `g(t) = 1 / (1 + sum_k phi_k' / (1 + N_r phi_k' t))`.
fn scalar_newton(
    phis: &[f64],
    beta: f64,
    n_r: usize,
    opts: &FixedPointOptions,
) -> Result<FixedPointState> {
    let nr = n_r as f64;
    let ph: Vec<f64> = phis.iter().map(|p| p / beta).collect();
    if ph.len() == 1 {
        return Ok(FixedPointState {
            gamma: nr * ph[0],
            delta: Vec::new(),
            iterations: 0,
            residual: 0.0,
        });
    }
    let intf = &ph[1..];
    let sum_intf: f64 = intf.iter().sum();
    let max_intf = intf.iter().copied().fold(0.0, f64::max);
    let mut lo = 1.0 / (1.0 + sum_intf);
    let mut hi = 1.0;
    let mut t = lo;
    let mut iterations = 0u64;
    let mut residual = f64::INFINITY;

    while iterations < opts.max_iter {
        let mut s_u = 0.0;
        let mut s_u2 = 0.0;
        for &f in intf {
            let u = 1.0 / (1.0 + nr * f * t);
            s_u += f * u;
            s_u2 += f * f * u * u;
        }
        let gt = 1.0 / (1.0 + s_u);
        let gp = nr * s_u2 * gt * gt;
        let h = gt - t;
        residual = nr * max_intf * h.abs();
        iterations += 1;
        if h.abs() <= 1e-15 * t.max(1.0) || residual <= opts.tol * 1e-4 {
            t = gt;
            break;
        }
        if h > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - h / (gp - 1.0);
        t = if lo < newton && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    if residual > opts.tol {
        return Err(Error::NoConvergence(format!(
            "scalar fixed point stalled at residual {residual:.3e} after {iterations} iterations"
        )));
    }
    Ok(FixedPointState {
        gamma: ph[0] * nr * t,
        delta: intf.iter().map(|f| nr * f * t).collect(),
        iterations,
        residual,
    })
}

/// Real part of `tr(A B)` without forming the product.
fn trace_prod_re(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for l in 0..n {
            acc += (a[(i, l)] * b[(l, i)]).re;
        }
    }
    acc
}

/// Matrix-family solver: damped Picard sweeps on the interference
/// coordinates, beta-normalized so the deterministic part of the resolvent
/// is the identity.
fn matrix_picard(
    phis: &[CMatrix],
    beta: f64,
    n_r: usize,
    opts: &FixedPointOptions,
) -> Result<FixedPointState> {
    let inv_beta = C64::new(1.0 / beta, 0.0);
    let phn: Vec<CMatrix> = phis.iter().map(|p| p * inv_beta).collect();
    let k = phn.len();
    let resolvent = |delta: &[f64]| -> Result<CMatrix> {
        let mut m = CMatrix::identity(n_r, n_r);
        for (j, phi) in phn.iter().enumerate().skip(1) {
            m += phi * C64::new(1.0 / (1.0 + delta[j - 1]), 0.0);
        }
        let chol = m.cholesky().ok_or_else(|| {
            Error::SolveFailure("deterministic-equivalent resolvent is not positive definite".into())
        })?;
        Ok(chol.inverse())
    };

    let mut delta = vec![1.0f64; k - 1];
    let mut iterations = 0u64;
    let mut residual = 0.0f64;
    let mut converged = k == 1;
    while !converged && iterations < opts.max_iter {
        let minv = resolvent(&delta)?;
        residual = 0.0;
        for j in 1..k {
            let fresh = trace_prod_re(&phn[j], &minv);
            let next = (1.0 - opts.damping) * delta[j - 1] + opts.damping * fresh;
            residual = residual.max((next - delta[j - 1]).abs());
            delta[j - 1] = next;
        }
        iterations += 1;
        let scale = delta.iter().copied().fold(1.0, f64::max);
        converged = residual <= opts.tol * scale;
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "matrix fixed point stalled at residual {residual:.3e} after {iterations} iterations"
        )));
    }
    let minv = resolvent(&delta)?;
    Ok(FixedPointState {
        gamma: trace_prod_re(&phn[0], &minv),
        delta,
        iterations,
        residual,
    })
}

/// Root form of the scalar deterministic equivalent: the unique positive
/// `gamma` with `beta = N_r phi_1 / gamma - sum_{k>=2} phi_k / (1 + gamma phi_k / phi_1)`.
///
/// A single user gives the closed form `gamma = N_r phi_1 / beta`; otherwise
/// the root is bracketed in `[N_r phi_1 / (beta + sum phi_k), N_r phi_1 / beta]`,
/// bisected, and polished with Newton steps until the beta-normalized defect
/// falls below `1e-12`.
///
/// # Errors
///
/// [`Error::OutOfDomain`] on invalid inputs, [`Error::NoConvergence`] if the
/// polish cannot reach the target residual.
pub fn iid_sinr_root(phis: &[f64], beta: f64, n_r: usize) -> Result<f64> {
    PhiFamily::Scalar {
        phis: phis.to_vec(),
        beta,
    }
    .validate(n_r)?;
    let nr = n_r as f64;
    let phi1 = phis[0];
    if phis.len() == 1 {
        return Ok(nr * phi1 / beta);
    }
    let intf = &phis[1..];
    let defect = |gamma: f64| -> f64 {
        let mut acc = nr * phi1 / gamma - beta;
        for &p in intf {
            acc -= p / (1.0 + gamma * p / phi1);
        }
        acc
    };
    let defect_slope = |gamma: f64| -> f64 {
        let mut acc = -nr * phi1 / (gamma * gamma);
        for &p in intf {
            let d = 1.0 + gamma * p / phi1;
            acc += p * p / (phi1 * d * d);
        }
        acc
    };
    let sum_intf: f64 = intf.iter().sum();
    let mut lo = nr * phi1 / (beta + sum_intf);
    let mut hi = nr * phi1 / beta;
    // Bisection: the defect is positive at lo and non-positive at hi.
    for _ in 0..200 {
        if hi - lo <= 1e-16 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if defect(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut gamma = 0.5 * (lo + hi);
    for _ in 0..4 {
        let slope = defect_slope(gamma);
        if slope == 0.0 {
            break;
        }
        gamma -= defect(gamma) / slope;
    }
    if !(defect(gamma).abs() <= 1e-12 * beta) {
        return Err(Error::NoConvergence(format!(
            "SINR root polish left defect {:.3e} (beta {beta:.3e})",
            defect(gamma)
        )));
    }
    Ok(gamma)
}

/// Closed-form large-system SINR for `K` identical users: the positive root
/// of `r g^2 + (r - N_r + K - 1) g - N_r = 0` with `r = beta / phi`.
///
/// # Errors
///
/// [`Error::OutOfDomain`] on non-positive `phi`, `beta`, `n_r`, or `k`.
pub fn symmetric_sinr(phi: f64, beta: f64, n_r: usize, k: usize) -> Result<f64> {
    if !phi.is_finite() || phi <= 0.0 {
        return Err(Error::OutOfDomain(format!("phi must be positive, got {phi}")));
    }
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::OutOfDomain(format!(
            "beta must be positive, got {beta}"
        )));
    }
    if n_r == 0 || k == 0 {
        return Err(Error::OutOfDomain(
            "n_r and k must both be at least 1".into(),
        ));
    }
    let r = beta / phi;
    let nr = n_r as f64;
    let b = r - nr + (k as f64 - 1.0);
    // Numerically stable positive quadratic root.
    let disc = (b * b + 4.0 * r * nr).sqrt();
    Ok(if b >= 0.0 {
        2.0 * nr / (b + disc)
    } else {
        (disc - b) / (2.0 * r)
    })
}

/// Instantaneous SINR of the MSE-optimal combiner: `gamma = b^H J_1^-1 b`
/// with `J_1 = J - b b^H` (the data covariance without the target user's
/// signal term), evaluated through a Cholesky solve.
///
/// # Errors
///
/// [`Error::SolveFailure`] when `J_1` is not positive definite; input
/// validation errors as in [`build_b_j`].
pub fn instantaneous_sinr(inputs: &ReceiverInputs) -> Result<f64> {
    let (b, mut j1) = build_b_j(inputs)?;
    j1.gerc(C64::new(-1.0, 0.0), &b, &b, C64::new(1.0, 0.0));
    let chol = j1.cholesky().ok_or_else(|| {
        Error::SolveFailure("interference-plus-noise covariance is not positive definite".into())
    })?;
    let x = chol.solve(&b);
    Ok(b.dotc(&x).re)
}

/// Instantaneous SINR of an arbitrary combiner `G = w^H`:
/// `gamma(G) = w_1 |G v_1|^2 / (G J_1 G^H)`.
///
/// # Errors
///
/// [`Error::OutOfDomain`] when the interference-plus-noise power at the
/// combiner output is not positive; input validation errors as in
/// [`build_b_j`].
pub fn receiver_sinr(receiver: &Receiver, inputs: &ReceiverInputs) -> Result<f64> {
    let (b, mut j1) = build_b_j(inputs)?;
    j1.gerc(C64::new(-1.0, 0.0), &b, &b, C64::new(1.0, 0.0));
    let w = &receiver.w;
    let num = w.dotc(&b).norm_sqr();
    let denom = w.dotc(&(&j1 * w)).re;
    if !(denom > 0.0) {
        return Err(Error::OutOfDomain(format!(
            "interference-plus-noise power at the combiner output is {denom}"
        )));
    }
    Ok(num / denom)
}

/// Monte Carlo estimate of the average SINR (linear units, not dB) of one
/// receiver on a single-point scenario. Convenience wrapper over the
/// simulation engine for callers that want a number instead of result rows.
///
/// # Errors
///
/// [`Error::Config`] when the scenario carries a sweep, is invalid, or
/// `trials == 0`; numerical failures propagate from the trial kernel.
pub fn average_sinr_mc(
    scenario: &crate::Scenario,
    kind: crate::ReceiverKind,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    crate::sim::single_point_mean_linear(scenario, kind, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian_vector, trial_rng};
    use crate::estimation::scalar_conditional;
    use crate::receivers::{
        build_receiver, conditional_mse, g_mrc, g_proposed, MrcVariant, ReceiverKind,
        UserRealization,
    };
    use crate::{SystemConfig, UserParams};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    fn scaled_eye(n: usize, s: f64) -> CMatrix {
        CMatrix::identity(n, n) * C64::new(s, 0.0)
    }

    fn cfg() -> SystemConfig {
        SystemConfig {
            k: 3,
            n_r: 8,
            tau_p: 1,
            tau_d: 11,
            p_tot: 250.0,
            sigma_p2: 1.0,
            sigma_d2: 1.0,
        }
    }

    /// Builds receiver inputs with `v_k` drawn from the estimate law
    /// `CN(0, (c_k - z_k) I)`, which is all the SINR quadratic form needs.
    fn random_inputs<R: Rng + ?Sized>(
        n_r: usize,
        users: &[(f64, f64, f64)], // (weight, c, z)
        sigma_d2: f64,
        rng: &mut R,
    ) -> ReceiverInputs {
        let users = users
            .iter()
            .map(|&(w, c, z)| {
                let v = complex_gaussian_vector(n_r, c - z, rng);
                UserRealization {
                    alpha: w.sqrt(),
                    p: 1.0,
                    a: C64::new(0.5, 0.0),
                    v: v.clone(),
                    z: scaled_eye(n_r, z),
                    h_mem: v,
                    q: scaled_eye(n_r, z),
                    c: scaled_eye(n_r, c),
                    h_true: None,
                }
            })
            .collect();
        ReceiverInputs { sigma_d2, users }
    }

    #[test]
    fn phi_weight_matches_closed_forms() {
        let c = cfg();
        let u = UserParams::new(1.0, 0.0, 1.0, 100.0, &c).unwrap();
        // Override the derived power for a unit weight.
        let u = UserParams { p: 1.0, ..u };
        let st = scalar_conditional(1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(phi_scalar(&u, &st), 0.5, max_relative = 1e-14);

        let u9 = UserParams { a: 0.9, ..u };
        let st9 = scalar_conditional(1.0, 0.9, 1.0).unwrap();
        assert_relative_eq!(phi_scalar(&u9, &st9), 0.6269592476489028, max_relative = 1e-12);

        // Noiseless pilots: phi = alpha^2 P c.
        let st0 = scalar_conditional(1.0, 0.9, 0.0).unwrap();
        assert_relative_eq!(phi_scalar(&u9, &st0), 1.0, max_relative = 1e-14);

        // phi always equals alpha^2 P (c - z).
        assert_relative_eq!(
            phi_scalar(&u9, &st9),
            u9.data_weight() * st9.estimate_var(1.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn matrix_phi_reduces_to_scalar_weight() {
        let c = cfg();
        let mu = crate::MatrixUserParams::new(1.0, scaled_eye(3, 0.9), scaled_eye(3, 1.0), 100.0, &c)
            .unwrap();
        let stats = crate::estimation::conditional_matrices(&mu.c, &mu.a, 1.0).unwrap();
        let phi = phi_matrix(&mu, &stats);
        let su = UserParams {
            alpha: 1.0,
            a: 0.9,
            c: 1.0,
            p_p: 100.0,
            p: mu.p,
        };
        let sst = scalar_conditional(1.0, 0.9, 1.0).unwrap();
        let want = phi_scalar(&su, &sst);
        assert!((phi - scaled_eye(3, want)).norm() <= 1e-10 * want);
    }

    #[test]
    fn single_user_root_is_closed_form() {
        let gamma = iid_sinr_root(&[0.7], 0.35, 16).unwrap();
        assert_relative_eq!(gamma, 16.0 * 0.7 / 0.35, max_relative = 1e-14);
        let st = det_equiv_general(
            &PhiFamily::Scalar {
                phis: vec![0.7],
                beta: 0.35,
            },
            16,
            &FixedPointOptions::default(),
        )
        .unwrap();
        assert_eq!(st.iterations, 0);
        assert_relative_eq!(st.gamma, 32.0, max_relative = 1e-14);
    }

    #[test]
    fn symmetric_closed_form_hits_the_quadratic_root() {
        // r = 1, N_r = 4, K = 3: g^2 - 2g - 4 = 0 ... with
        // b = 1 - 4 + 2 = -1: g^2 ... check directly against the quadratic.
        let g = symmetric_sinr(1.0, 1.0, 4, 3).unwrap();
        assert_relative_eq!(g, (1.0 + 17.0f64.sqrt()) / 2.0, max_relative = 1e-14);
        // And it solves the quadratic exactly.
        let resid = g * g + (1.0 - 4.0 + 2.0) * g - 4.0;
        assert_abs_diff_eq!(resid, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_and_root_solvers_agree() {
        for &(phi, beta, n_r, k) in &[
            (1.0, 1.0, 4usize, 3usize),
            (0.3, 1.7, 32, 10),
            (2.5, 0.4, 100, 50),
            (0.05, 3.0, 20, 20),
        ] {
            let a = symmetric_sinr(phi, beta, n_r, k).unwrap();
            let b = iid_sinr_root(&vec![phi; k], beta, n_r).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn newton_path_matches_root_within_budget() {
        let mut rng = trial_rng(301, 0);
        for trial in 0..50 {
            let k = rng.gen_range(1..=10usize);
            let n_r = rng.gen_range(k.max(2)..=128usize);
            let phis: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..5.0)).collect();
            let beta = rng.gen_range(0.1..5.0);
            let opts = FixedPointOptions {
                tol: 1e-8,
                ..FixedPointOptions::default()
            };
            let st = det_equiv_general(
                &PhiFamily::Scalar {
                    phis: phis.clone(),
                    beta,
                },
                n_r,
                &opts,
            )
            .unwrap();
            let root = iid_sinr_root(&phis, beta, n_r).unwrap();
            assert_relative_eq!(st.gamma, root, max_relative = 1e-8);
            assert!(
                st.iterations <= 10,
                "trial {trial}: {} iterations (K = {k}, N_r = {n_r})",
                st.iterations
            );
        }
    }

    #[test]
    fn matrix_path_matches_scalar_path_on_isotropic_weights() {
        let phis = [1.3, 0.4, 0.9, 0.2];
        let beta = 0.8;
        let n_r = 8;
        let scalar = iid_sinr_root(&phis, beta, n_r).unwrap();
        let family = PhiFamily::Matrix {
            phis: phis.iter().map(|&p| scaled_eye(n_r, p)).collect(),
            beta,
        };
        let st = det_equiv_general(&family, n_r, &FixedPointOptions::default()).unwrap();
        assert_relative_eq!(st.gamma, scalar, max_relative = 1e-8);

        // Damped run converges to the same point.
        let damped = det_equiv_general(
            &family,
            n_r,
            &FixedPointOptions {
                damping: 0.5,
                ..FixedPointOptions::default()
            },
        )
        .unwrap();
        assert_relative_eq!(damped.gamma, scalar, max_relative = 1e-8);
    }

    #[test]
    fn matrix_single_user_is_a_trace() {
        let phi = scaled_eye(4, 0.5);
        let st = det_equiv_general(
            &PhiFamily::Matrix {
                phis: vec![phi],
                beta: 2.0,
            },
            4,
            &FixedPointOptions::default(),
        )
        .unwrap();
        // gamma = tr(Phi) / beta = 4 * 0.5 / 2.
        assert_relative_eq!(st.gamma, 1.0, max_relative = 1e-14);
        assert_eq!(st.iterations, 0);
    }

    #[test]
    fn root_is_monotone_and_scale_invariant() {
        let base = iid_sinr_root(&[1.0, 0.5, 0.5], 1.0, 16).unwrap();
        // More antennas help.
        assert!(iid_sinr_root(&[1.0, 0.5, 0.5], 1.0, 32).unwrap() > base);
        // More noise hurts.
        assert!(iid_sinr_root(&[1.0, 0.5, 0.5], 2.0, 16).unwrap() < base);
        // An extra interferer hurts.
        assert!(iid_sinr_root(&[1.0, 0.5, 0.5, 0.5], 1.0, 16).unwrap() < base);
        // Common rescaling of every power leaves the SINR unchanged.
        let scaled = iid_sinr_root(&[3.0, 1.5, 1.5], 3.0, 16).unwrap();
        assert_relative_eq!(scaled, base, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(iid_sinr_root(&[], 1.0, 4).is_err());
        assert!(iid_sinr_root(&[1.0, 0.0], 1.0, 4).is_err());
        assert!(iid_sinr_root(&[1.0], 0.0, 4).is_err());
        assert!(iid_sinr_root(&[1.0], 1.0, 0).is_err());
        assert!(symmetric_sinr(1.0, 1.0, 4, 0).is_err());
        let bad_opts = FixedPointOptions {
            damping: 0.0,
            ..FixedPointOptions::default()
        };
        assert!(det_equiv_general(
            &PhiFamily::Scalar {
                phis: vec![1.0],
                beta: 1.0
            },
            4,
            &bad_opts
        )
        .is_err());
    }

    #[test]
    fn optimal_sinr_matches_receiver_form_and_mse() {
        let mut rng = trial_rng(302, 0);
        for _ in 0..10 {
            let inputs = random_inputs(
                6,
                &[(2.0, 1.0, 0.3), (0.8, 1.5, 0.5), (0.5, 0.7, 0.2)],
                0.9,
                &mut rng,
            );
            let gamma = instantaneous_sinr(&inputs).unwrap();
            let prop = g_proposed(&inputs).unwrap();
            let via_receiver = receiver_sinr(&prop, &inputs).unwrap();
            assert_relative_eq!(gamma, via_receiver, max_relative = 1e-10);

            // gamma* = 1/MSE* - 1.
            let (b, j) = crate::receivers::build_b_j(&inputs).unwrap();
            let mse = conditional_mse(&prop, &b, &j);
            assert_relative_eq!(gamma, 1.0 / mse - 1.0, max_relative = 1e-9);

            // No other receiver beats the optimal quadratic form.
            for kind in [
                ReceiverKind::Naive,
                ReceiverKind::ConventionalInst,
                ReceiverKind::ArAwareCov,
                ReceiverKind::ConventionalCov,
                ReceiverKind::Mrc(MrcVariant::TwoLag),
            ] {
                let r = build_receiver(kind, &inputs).unwrap();
                let g = receiver_sinr(&r, &inputs).unwrap();
                assert!(g <= gamma * (1.0 + 1e-10), "{} beat the optimum", kind.name());
            }
        }
    }

    #[test]
    fn matched_filter_sinr_is_classical_in_the_clean_case() {
        // Single user with perfect pilots (z = 0): the matched filter on the
        // exact channel attains gamma = w_1 |h|^2 / sigma_d2, and so does the
        // optimal combiner.
        let mut rng = trial_rng(304, 0);
        let inputs = random_inputs(5, &[(1.8, 1.2, 0.0)], 0.6, &mut rng);
        let h = inputs.users[0].v.clone();
        let mrc = g_mrc(&inputs, MrcVariant::TwoLag).unwrap();
        let want = 1.8 * h.norm_squared() / 0.6;
        assert_relative_eq!(receiver_sinr(&mrc, &inputs).unwrap(), want, max_relative = 1e-12);
        assert_relative_eq!(instantaneous_sinr(&inputs).unwrap(), want, max_relative = 1e-10);
    }

    #[test]
    fn sinr_concentrates_with_antenna_count() {
        let users = [(1.0, 1.0, 0.2), (0.7, 1.0, 0.3), (0.4, 1.0, 0.1)];
        let sigma_d2 = 0.5;
        let beta: f64 = users.iter().map(|&(w, _, z)| w * z).sum::<f64>() + sigma_d2;
        let phis: Vec<f64> = users.iter().map(|&(w, c, z)| w * (c - z)).collect();
        let mut variances = Vec::new();
        for (i, &n_r) in [8usize, 32, 128].iter().enumerate() {
            let gamma_bar = iid_sinr_root(&phis, beta, n_r).unwrap();
            let mut rng = trial_rng(303, i as u64);
            let trials = 200;
            let ratios: Vec<f64> = (0..trials)
                .map(|_| {
                    let inputs = random_inputs(n_r, &users, sigma_d2, &mut rng);
                    instantaneous_sinr(&inputs).unwrap() / gamma_bar
                })
                .collect();
            let mean = ratios.iter().sum::<f64>() / trials as f64;
            let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
                / (trials - 1) as f64;
            variances.push(var);
        }
        assert!(
            variances[0] > variances[1] && variances[1] > variances[2],
            "variances do not shrink: {variances:?}"
        );
    }
}
