//! Linear uplink receivers.
//!
//! Every receiver is a combining row `G = w^H` applied to the data
//! observation, so the symbol estimate is `x_hat = G y(t)`. The receivers
//! differ only in which channel statistics they plug into the regularized
//! quadratic form they invert:
//!
//! * [`ReceiverKind::Proposed`] — MSE-optimal combiner built from the two-lag
//!   MMSE estimates `v_k` and their conditional error covariances `Z_k`.
//! * [`ReceiverKind::ProposedPerfectCsi`] — the same combiner fed the true
//!   channels with zero error covariance; a genie upper bound.
//! * [`ReceiverKind::Naive`] — treats the memoryless estimate of the target
//!   user as the true channel and ignores multi-user interference.
//! * [`ReceiverKind::ConventionalInst`] — MMSE combiner built from memoryless
//!   estimates and error covariances of all users.
//! * [`ReceiverKind::ArAwareCov`] — uses the two-lag statistics for the
//!   target user but only stationary covariances for the interferers.
//! * [`ReceiverKind::ConventionalCov`] — memoryless statistics for the
//!   target user, stationary covariances for the interferers.
//! * [`ReceiverKind::Mrc`] — matched filtering on one of three channel
//!   proxies, see [`MrcVariant`].
//!
//! The target user is always entry 0 of [`ReceiverInputs::users`].

use crate::{C64, CMatrix, CVector, Error, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Channel proxy used by the matched-filter (MRC) receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MrcVariant {
    /// `mrc1`: memoryless estimate of the current channel.
    Memoryless,
    /// `mrc2`: two-lag MMSE estimate of the current channel.
    TwoLag,
    /// `mrc3`: one-step prediction `a v` of the next channel state.
    Predicted,
}

/// The receiver families the toolkit can build and evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReceiverKind {
    Proposed,
    ProposedPerfectCsi,
    Naive,
    ConventionalInst,
    ArAwareCov,
    ConventionalCov,
    Mrc(MrcVariant),
}

impl ReceiverKind {
    /// Every receiver kind, in canonical reporting order.
    pub const ALL: [ReceiverKind; 9] = [
        ReceiverKind::Proposed,
        ReceiverKind::ProposedPerfectCsi,
        ReceiverKind::Naive,
        ReceiverKind::ConventionalInst,
        ReceiverKind::ArAwareCov,
        ReceiverKind::ConventionalCov,
        ReceiverKind::Mrc(MrcVariant::Memoryless),
        ReceiverKind::Mrc(MrcVariant::TwoLag),
        ReceiverKind::Mrc(MrcVariant::Predicted),
    ];

    /// Stable identifier used in configuration files and result tables.
    pub fn name(&self) -> &'static str {
        match self {
            ReceiverKind::Proposed => "proposed",
            ReceiverKind::ProposedPerfectCsi => "proposed_perfect_csi",
            ReceiverKind::Naive => "naive",
            ReceiverKind::ConventionalInst => "conventional_inst",
            ReceiverKind::ArAwareCov => "ar_aware_cov",
            ReceiverKind::ConventionalCov => "conventional_cov",
            ReceiverKind::Mrc(MrcVariant::Memoryless) => "mrc1",
            ReceiverKind::Mrc(MrcVariant::TwoLag) => "mrc2",
            ReceiverKind::Mrc(MrcVariant::Predicted) => "mrc3",
        }
    }

    /// Parses the identifier produced by [`ReceiverKind::name`].
    ///
    /// # Errors
    ///
    /// [`Error::Config`] for an unknown identifier.
    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown receiver '{s}' (expected one of: {})",
                    Self::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }
}

impl fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl Serialize for ReceiverKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ReceiverKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ReceiverKind::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Everything a receiver needs to know about one user in one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRealization {
    /// Large-scale amplitude gain.
    pub alpha: f64,
    /// Data power.
    pub p: f64,
    /// Transition coefficient assumed by the receiver (used by `mrc3`).
    pub a: C64,
    /// Two-lag MMSE estimate of the current channel.
    pub v: CVector,
    /// Conditional error covariance of the two-lag estimate.
    pub z: CMatrix,
    /// Memoryless estimate of the current channel.
    pub h_mem: CVector,
    /// Error covariance of the memoryless estimate.
    pub q: CMatrix,
    /// Stationary channel covariance.
    pub c: CMatrix,
    /// True channel realization, when the scenario tracks it (needed by the
    /// perfect-CSI receiver and by conditional-MSE validation).
    pub h_true: Option<CVector>,
}

impl UserRealization {
    /// Received data-power weight `w = alpha^2 P`.
    pub fn weight(&self) -> f64 {
        self.alpha * self.alpha * self.p
    }

    /// Received amplitude `alpha sqrt(P)`.
    pub fn amplitude(&self) -> f64 {
        self.alpha * self.p.sqrt()
    }
}

/// One coherence block's worth of per-user statistics; user 0 is the target.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverInputs {
    /// Data-observation noise variance per antenna.
    pub sigma_d2: f64,
    /// Per-user realizations; must be non-empty and dimensionally consistent.
    pub users: Vec<UserRealization>,
}

impl ReceiverInputs {
    /// Number of receive antennas.
    pub fn n_r(&self) -> usize {
        self.users.first().map_or(0, |u| u.v.len())
    }

    fn validate(&self) -> Result<()> {
        if self.users.is_empty() {
            return Err(Error::Dimension("receiver inputs need at least one user".into()));
        }
        if !self.sigma_d2.is_finite() || self.sigma_d2 < 0.0 {
            return Err(Error::OutOfDomain(format!(
                "sigma_d2 must be non-negative, got {}",
                self.sigma_d2
            )));
        }
        let n = self.users[0].v.len();
        for (k, u) in self.users.iter().enumerate() {
            let square = |m: &CMatrix| m.nrows() == n && m.ncols() == n;
            let h_true_ok = u.h_true.as_ref().map_or(true, |h| h.len() == n);
            if u.v.len() != n
                || u.h_mem.len() != n
                || !square(&u.z)
                || !square(&u.q)
                || !square(&u.c)
                || !h_true_ok
            {
                return Err(Error::Dimension(format!(
                    "user {k} has inconsistent dimensions (expected {n} antennas)"
                )));
            }
        }
        Ok(())
    }
}

/// A built combiner `G = w^H` together with the kind that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Receiver {
    /// Column vector whose adjoint is the combining row.
    pub w: CVector,
    /// The receiver family this combiner belongs to.
    pub kind: ReceiverKind,
}

impl Receiver {
    /// Applies the combiner: `x_hat = G y = w^H y`.
    pub fn estimate_symbol(&self, y: &CVector) -> C64 {
        estimate_symbol(self, y)
    }
}

/// Builds the matched pair `(b, J)` of the MSE-optimal combiner: the target
/// cross-correlation `b = alpha_1 sqrt(P_1) v_1` and the conditional data
/// covariance `J = sum_k w_k (v_k v_k^H + Z_k) + sigma_d^2 I`.
///
/// # Errors
///
/// [`Error::Dimension`] / [`Error::OutOfDomain`] on inconsistent inputs.
pub fn build_b_j(inputs: &ReceiverInputs) -> Result<(CVector, CMatrix)> {
    inputs.validate()?;
    let n = inputs.n_r();
    let mut j = CMatrix::identity(n, n) * C64::new(inputs.sigma_d2, 0.0);
    for u in &inputs.users {
        let w = u.weight();
        j.gerc(C64::new(w, 0.0), &u.v, &u.v, C64::new(1.0, 0.0));
        j += &u.z * C64::new(w, 0.0);
    }
    let b = &inputs.users[0].v * C64::new(inputs.users[0].amplitude(), 0.0);
    Ok((b, j))
}

/// Solves `M w = rhs_scale * rhs` by Cholesky and (optionally) verifies the
/// normal-equations residual `|M w - rhs_scale * rhs| <= 1e-8 |rhs_scale * rhs|`.
fn solve_spd(
    m: &CMatrix,
    rhs: &CVector,
    rhs_scale: f64,
    check_residual: bool,
    what: &str,
) -> Result<CVector> {
    let chol = m.clone().cholesky().ok_or_else(|| {
        Error::SolveFailure(format!("{what}: covariance is not positive definite"))
    })?;
    let scaled = rhs * C64::new(rhs_scale, 0.0);
    let w = chol.solve(&scaled);
    if check_residual {
        let resid = (m * &w - &scaled).norm();
        let floor = 1e-8 * scaled.norm();
        if resid > floor {
            return Err(Error::SolveFailure(format!(
                "{what}: normal-equations residual {resid:.3e} exceeds {floor:.3e}"
            )));
        }
    }
    Ok(w)
}

/// MSE-optimal combiner `w = J^-1 b` from the two-lag statistics.
///
/// # Errors
///
/// [`Error::SolveFailure`] when `J` cannot be factored or the solve residual
/// exceeds `1e-8 |b|`; dimension errors as in [`build_b_j`].
pub fn g_proposed(inputs: &ReceiverInputs) -> Result<Receiver> {
    let (b, j) = build_b_j(inputs)?;
    let w = solve_spd(&j, &b, 1.0, true, "proposed receiver")?;
    Ok(Receiver {
        w,
        kind: ReceiverKind::Proposed,
    })
}

/// Single-user matched MMSE receiver that trusts the memoryless estimate:
/// `w = alpha_1 sqrt(P_1) (w_1 m_1 m_1^H + sigma_d^2 I)^-1 m_1`.
///
/// # Errors
///
/// As in [`g_proposed`].
pub fn g_naive(inputs: &ReceiverInputs) -> Result<Receiver> {
    inputs.validate()?;
    let n = inputs.n_r();
    let u0 = &inputs.users[0];
    let mut m = CMatrix::identity(n, n) * C64::new(inputs.sigma_d2, 0.0);
    m.gerc(C64::new(u0.weight(), 0.0), &u0.h_mem, &u0.h_mem, C64::new(1.0, 0.0));
    let w = solve_spd(&m, &u0.h_mem, u0.amplitude(), false, "naive receiver")?;
    Ok(Receiver {
        w,
        kind: ReceiverKind::Naive,
    })
}

/// MMSE combiner built entirely from memoryless statistics:
/// `w = alpha_1 sqrt(P_1) (sum_k w_k (m_k m_k^H + Q_k) + sigma_d^2 I)^-1 m_1`.
///
/// # Errors
///
/// As in [`g_proposed`].
pub fn g_conventional_inst(inputs: &ReceiverInputs) -> Result<Receiver> {
    inputs.validate()?;
    let n = inputs.n_r();
    let mut m = CMatrix::identity(n, n) * C64::new(inputs.sigma_d2, 0.0);
    for u in &inputs.users {
        let w = u.weight();
        m.gerc(C64::new(w, 0.0), &u.h_mem, &u.h_mem, C64::new(1.0, 0.0));
        m += &u.q * C64::new(w, 0.0);
    }
    let u0 = &inputs.users[0];
    let w = solve_spd(&m, &u0.h_mem, u0.amplitude(), false, "conventional-inst receiver")?;
    Ok(Receiver {
        w,
        kind: ReceiverKind::ConventionalInst,
    })
}

/// Covariance-level combiner with two-lag statistics for the target user and
/// stationary covariances for the interferers:
/// `w = alpha_1 sqrt(P_1) (w_1 (v_1 v_1^H + Z_1) + sum_{k>=2} w_k C_k + sigma_d^2 I)^-1 v_1`.
///
/// # Errors
///
/// As in [`g_proposed`].
pub fn g_ar_aware_cov(inputs: &ReceiverInputs) -> Result<Receiver> {
    inputs.validate()?;
    let n = inputs.n_r();
    let u0 = &inputs.users[0];
    let mut m = CMatrix::identity(n, n) * C64::new(inputs.sigma_d2, 0.0);
    m.gerc(C64::new(u0.weight(), 0.0), &u0.v, &u0.v, C64::new(1.0, 0.0));
    m += &u0.z * C64::new(u0.weight(), 0.0);
    for u in inputs.users.iter().skip(1) {
        m += &u.c * C64::new(u.weight(), 0.0);
    }
    let w = solve_spd(&m, &u0.v, u0.amplitude(), false, "covariance receiver")?;
    Ok(Receiver {
        w,
        kind: ReceiverKind::ArAwareCov,
    })
}

/// Covariance-level combiner with memoryless statistics for the target user:
/// `w = alpha_1 sqrt(P_1) (w_1 (m_1 m_1^H + Q_1) + sum_{k>=2} w_k C_k + sigma_d^2 I)^-1 m_1`.
///
/// # Errors
///
/// As in [`g_proposed`].
pub fn g_conventional_cov(inputs: &ReceiverInputs) -> Result<Receiver> {
    inputs.validate()?;
    let n = inputs.n_r();
    let u0 = &inputs.users[0];
    let mut m = CMatrix::identity(n, n) * C64::new(inputs.sigma_d2, 0.0);
    m.gerc(C64::new(u0.weight(), 0.0), &u0.h_mem, &u0.h_mem, C64::new(1.0, 0.0));
    m += &u0.q * C64::new(u0.weight(), 0.0);
    for u in inputs.users.iter().skip(1) {
        m += &u.c * C64::new(u.weight(), 0.0);
    }
    let w = solve_spd(&m, &u0.h_mem, u0.amplitude(), false, "covariance receiver")?;
    Ok(Receiver {
        w,
        kind: ReceiverKind::ConventionalCov,
    })
}

/// Matched filter `w = v / |v|^2` on the chosen channel proxy of the target
/// user, so that `G v = 1`.
///
/// # Errors
///
/// [`Error::ZeroVector`] when the proxy vanishes; dimension errors as in
/// [`build_b_j`].
pub fn g_mrc(inputs: &ReceiverInputs, variant: MrcVariant) -> Result<Receiver> {
    inputs.validate()?;
    let u0 = &inputs.users[0];
    let proxy: CVector = match variant {
        MrcVariant::Memoryless => u0.h_mem.clone(),
        MrcVariant::TwoLag => u0.v.clone(),
        MrcVariant::Predicted => &u0.v * u0.a,
    };
    let norm2 = proxy.norm_squared();
    if norm2 <= 0.0 || !norm2.is_finite() {
        return Err(Error::ZeroVector(
            "matched-filter channel proxy has zero norm".into(),
        ));
    }
    Ok(Receiver {
        w: proxy / C64::new(norm2, 0.0),
        kind: ReceiverKind::Mrc(variant),
    })
}

/// Builds the requested receiver from one block's statistics.
///
/// The perfect-CSI variant rewrites the inputs (true channels as estimates,
/// zero error covariance) and then applies the MSE-optimal construction.
///
/// # Errors
///
/// Propagates the per-receiver errors; [`Error::OutOfDomain`] when the
/// perfect-CSI variant is requested without true channel realizations.
pub fn build_receiver(kind: ReceiverKind, inputs: &ReceiverInputs) -> Result<Receiver> {
    match kind {
        ReceiverKind::Proposed => g_proposed(inputs),
        ReceiverKind::ProposedPerfectCsi => {
            let genie = perfect_csi_inputs(inputs)?;
            let mut r = g_proposed(&genie)?;
            r.kind = ReceiverKind::ProposedPerfectCsi;
            Ok(r)
        }
        ReceiverKind::Naive => g_naive(inputs),
        ReceiverKind::ConventionalInst => g_conventional_inst(inputs),
        ReceiverKind::ArAwareCov => g_ar_aware_cov(inputs),
        ReceiverKind::ConventionalCov => g_conventional_cov(inputs),
        ReceiverKind::Mrc(variant) => g_mrc(inputs, variant),
    }
}

/// Replaces every user's estimate by its true channel with zero error
/// covariance, keeping powers and noise unchanged.
pub fn perfect_csi_inputs(inputs: &ReceiverInputs) -> Result<ReceiverInputs> {
    let n = inputs.n_r();
    let users = inputs
        .users
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let h = u.h_true.clone().ok_or_else(|| {
                Error::OutOfDomain(format!(
                    "perfect-CSI receiver requires the true channel of user {k}"
                ))
            })?;
            Ok(UserRealization {
                v: h.clone(),
                z: CMatrix::zeros(n, n),
                h_mem: h,
                q: CMatrix::zeros(n, n),
                ..u.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReceiverInputs {
        sigma_d2: inputs.sigma_d2,
        users,
    })
}

/// Conditional symbol MSE of an arbitrary combiner against the matched pair
/// from [`build_b_j`]: `MSE(G) = w^H J w - 2 Re(w^H b) + 1`.
pub fn conditional_mse(receiver: &Receiver, b: &CVector, j: &CMatrix) -> f64 {
    let w = &receiver.w;
    let quad = w.dotc(&(j * w)).re;
    let lin = w.dotc(b).re;
    quad - 2.0 * lin + 1.0
}

/// Applies a combiner to a data observation: `x_hat = w^H y`.
pub fn estimate_symbol(receiver: &Receiver, y: &CVector) -> C64 {
    debug_assert_eq!(receiver.w.len(), y.len());
    receiver.w.dotc(y)
}
