//! Monte Carlo simulation engine.
//!
//! [`run_scenario`] expands a [`Scenario`] into sweep points and, for each
//! point, estimates the average uplink SINR of every requested receiver by
//! simulating channel realizations. The per-trial kernel never forms an
//! `N_r x N_r` system: every receiver in the catalog reduces — exactly, via
//! the matrix inversion lemma — to a small `K x K` solve over Gram matrices
//! of the per-user estimate vectors, which keeps hundred-antenna scenarios
//! cheap.
//!
//! # Determinism
//!
//! Trial `t` of a run draws from an RNG stream derived only from
//! `(master_seed, t)`, and per-trial variates are drawn in a fixed order
//! (per user: stale channel, innovation, current pilot noise, stale pilot
//! noise). Results are therefore bit-identical across thread counts and
//! across receiver subsets; reductions use pairwise summation over the
//! trial-ordered samples so not even floating-point addition order varies.

use crate::channel::{
    ar1_step_iid, received_pilot, sample_stationary_iid, trial_rng, UserParams,
};
use crate::estimation::{
    memoryless_gain_iid, memoryless_q_iid, scalar_conditional, ScalarConditionalStats,
};
use crate::output::{CdfPoint, ResultRow};
use crate::receivers::{MrcVariant, ReceiverKind};
use crate::scenario::{Scenario, SweepPoint};
use crate::sinr::{det_equiv_general, iid_sinr_root, scalar_phi_family, FixedPointOptions, PhiFamily};
use crate::{CMatrix, CVector, Error, Result, C64};
use nalgebra::DVector;
use rayon::prelude::*;

/// How close the assumed aging coefficient must be to the true one before
/// the mismatch machinery is bypassed in favor of the exact matched path.
const MATCHED_TOL: f64 = 1e-15;

/// Number of equi-probability quantiles reported per distribution.
const CDF_POINTS: usize = 200;

/// Per-point precomputation shared by every trial.
struct PointContext<'a> {
    n_r: usize,
    sigma_d2: f64,
    users: &'a [UserParams],
    /// Two-lag conditional statistics at the true aging coefficients.
    stats: Vec<ScalarConditionalStats>,
    /// Data weights `w_k = alpha_k^2 P_k`.
    weights: Vec<f64>,
    /// Effective noise `beta = sum_k w_k z_k + sigma_d^2`.
    beta: f64,
    /// Memoryless estimator gains.
    mem_gain: Vec<f64>,
    /// Effective noise of the memoryless covariance model,
    /// `xi = sum_k w_k q_k + sigma_d^2`.
    xi: f64,
    /// Mismatched filter statistics, present when the receivers assume an
    /// aging coefficient that differs from the truth.
    mismatch: Option<MismatchContext>,
    needs_memoryless: bool,
    needs_true_channel: bool,
}

/// Filter statistics computed at the assumed (wrong) aging coefficient.
struct MismatchContext {
    stats: Vec<ScalarConditionalStats>,
    /// Effective noise the mismatched receiver believes in,
    /// `sum_k w_k z_hat_k + sigma_d^2`.
    beta_assumed: f64,
}

fn uses_memoryless(kind: ReceiverKind) -> bool {
    matches!(
        kind,
        ReceiverKind::Naive
            | ReceiverKind::ConventionalInst
            | ReceiverKind::ConventionalCov
            | ReceiverKind::Mrc(MrcVariant::Memoryless)
    )
}

fn uses_two_lag(kind: ReceiverKind) -> bool {
    matches!(
        kind,
        ReceiverKind::Proposed
            | ReceiverKind::ArAwareCov
            | ReceiverKind::Mrc(MrcVariant::TwoLag)
            | ReceiverKind::Mrc(MrcVariant::Predicted)
    )
}

impl<'a> PointContext<'a> {
    fn build(point: &'a SweepPoint, receivers: &[ReceiverKind]) -> Result<Self> {
        let users = &point.users[..];
        let sigma_d2 = point.system.sigma_d2;
        let mut stats = Vec::with_capacity(users.len());
        let mut weights = Vec::with_capacity(users.len());
        let mut mem_gain = Vec::with_capacity(users.len());
        let mut xi = sigma_d2;
        for u in users {
            let s = u.pilot_noise_var(&point.system);
            stats.push(scalar_conditional(u.c, u.a, s)?);
            weights.push(u.data_weight());
            mem_gain.push(memoryless_gain_iid(u.c, s));
            xi += u.data_weight() * memoryless_q_iid(u.c, s);
        }
        let beta: f64 = users
            .iter()
            .zip(&stats)
            .map(|(u, st)| u.data_weight() * st.z)
            .sum::<f64>()
            + sigma_d2;
        let mismatch = match point.assumed_a {
            Some(assumed)
                if users.iter().any(|u| (u.a - assumed).abs() >= MATCHED_TOL)
                    && receivers.iter().any(|&k| uses_two_lag(k)) =>
            {
                let mut hat = Vec::with_capacity(users.len());
                for u in users {
                    let s = u.pilot_noise_var(&point.system);
                    hat.push(scalar_conditional(u.c, assumed, s)?);
                }
                let beta_assumed = users
                    .iter()
                    .zip(&hat)
                    .map(|(u, st)| u.data_weight() * st.z)
                    .sum::<f64>()
                    + sigma_d2;
                Some(MismatchContext {
                    stats: hat,
                    beta_assumed,
                })
            }
            _ => None,
        };
        Ok(PointContext {
            n_r: point.system.n_r as usize,
            sigma_d2,
            users,
            stats,
            weights,
            beta,
            mem_gain,
            xi,
            mismatch,
            needs_memoryless: receivers.iter().any(|&k| uses_memoryless(k)),
            needs_true_channel: receivers.contains(&ReceiverKind::ProposedPerfectCsi),
        })
    }

    fn k(&self) -> usize {
        self.users.len()
    }
}

/// Hermitian Gram matrix `G[i][j] = cols[i]^H cols[j]`.
fn gram(cols: &[CVector]) -> CMatrix {
    let k = cols.len();
    let mut g = CMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let d = cols[i].dotc(&cols[j]);
            g[(i, j)] = d;
            if i != j {
                g[(j, i)] = d.conj();
            }
        }
    }
    g
}

/// Cross Gram matrix `X[i][j] = left[i]^H right[j]`.
fn cross_gram(left: &[CVector], right: &[CVector]) -> CMatrix {
    let mut x = CMatrix::zeros(left.len(), right.len());
    for i in 0..left.len() {
        for j in 0..right.len() {
            x[(i, j)] = left[i].dotc(&right[j]);
        }
    }
    x
}

/// SINR of an explicit combiner `g` given its inner products with the
/// conditional-mean vectors of all users (`g_dot_v[j] = g^H v_j`), its
/// squared norm, the data weights, and the effective noise floor.
fn combining_gamma(g_dot_v: &[C64], g_norm2: f64, weights: &[f64], beta: f64) -> Result<f64> {
    let num = weights[0] * g_dot_v[0].norm_sqr();
    let interference: f64 = (1..g_dot_v.len())
        .map(|j| weights[j] * g_dot_v[j].norm_sqr())
        .sum();
    let den = interference + beta * g_norm2;
    if !den.is_finite() || !num.is_finite() || den <= 0.0 {
        return Err(Error::SolveFailure(format!(
            "combiner SINR is degenerate (signal {num}, denominator {den})"
        )));
    }
    Ok(num / den)
}

/// SINR of the conditional-MMSE combiner for user 1, computed from the Gram
/// matrix of the per-user mean vectors via the matrix inversion lemma:
/// with `S = G + diag(beta / w_k)` and `u = G e_1`,
/// `q = w_1 (G_11 - u^H S^{-1} u) / beta` and `gamma = q / (1 - q)`.
fn mmse_gamma(gram: &CMatrix, weights: &[f64], beta: f64) -> Result<f64> {
    let k = weights.len();
    let mut s = gram.clone();
    for i in 0..k {
        s[(i, i)] += C64::new(beta / weights[i], 0.0);
    }
    let chol = s.cholesky().ok_or_else(|| {
        Error::SolveFailure("Gram system for the conditional-MMSE SINR is not positive definite".into())
    })?;
    let u: DVector<C64> = gram.column(0).into_owned();
    let x = chol.solve(&u);
    let q = weights[0] * (gram[(0, 0)].re - u.dotc(&x).re) / beta;
    if !(q >= 0.0 && q < 1.0) {
        return Err(Error::SolveFailure(format!(
            "conditional-MMSE quadratic form left [0, 1) (q = {q}); the scenario is too \
             ill-conditioned for a meaningful SINR"
        )));
    }
    Ok(q / (1.0 - q))
}

/// SINR of the regularized-covariance combiner `g = x_1 - X S^{-1} p`,
/// where `X` collects the receiver's own mean vectors (Gram `gram_own`,
/// regularizer `diag(noise / w_k)`), and the true per-user means enter
/// through `cross[i][j] = x_i^H v_j`. Evaluated against the true model
/// `(weights, beta)`.
fn regularized_gamma(
    gram_own: &CMatrix,
    cross: &CMatrix,
    own_noise: f64,
    weights: &[f64],
    beta: f64,
) -> Result<f64> {
    let k = weights.len();
    let mut s = gram_own.clone();
    for i in 0..k {
        s[(i, i)] += C64::new(own_noise / weights[i], 0.0);
    }
    let chol = s.cholesky().ok_or_else(|| {
        Error::SolveFailure("Gram system for a covariance combiner is not positive definite".into())
    })?;
    let p: DVector<C64> = gram_own.column(0).into_owned();
    let y = chol.solve(&p);
    let mut g_dot_v = vec![C64::new(0.0, 0.0); k];
    for j in 0..k {
        let mut acc = cross[(0, j)];
        for i in 0..k {
            acc -= y[i].conj() * cross[(i, j)];
        }
        g_dot_v[j] = acc;
    }
    let t = gram_own * &y;
    let g_norm2 = gram_own[(0, 0)].re - 2.0 * p.dotc(&y).re + y.dotc(&t).re;
    combining_gamma(&g_dot_v, g_norm2, weights, beta)
}

/// Everything one trial produces: the per-user estimate vectors and their
/// Gram matrices, built lazily from the receiver needs.
struct TrialState {
    /// Gram of the true-coefficient two-lag estimates `v_k`.
    gram_v: CMatrix,
    /// Gram of the memoryless estimates `m_k`, when needed.
    gram_m: Option<CMatrix>,
    /// Cross Gram `m_i^H v_j`, when needed.
    cross_mv: Option<CMatrix>,
    /// Gram of the true channels `h_k`, when needed.
    gram_h: Option<CMatrix>,
    /// Gram of the mismatched estimates and their cross Gram with the true
    /// means, when a mismatched coefficient is assumed.
    gram_vhat: Option<CMatrix>,
    cross_vhat_v: Option<CMatrix>,
}

fn run_trial_state(ctx: &PointContext<'_>, master_seed: u64, trial: u64) -> TrialState {
    let mut rng = trial_rng(master_seed, trial);
    let k = ctx.k();
    let mut v = Vec::with_capacity(k);
    let mut m = if ctx.needs_memoryless {
        Vec::with_capacity(k)
    } else {
        Vec::new()
    };
    let mut h = if ctx.needs_true_channel {
        Vec::with_capacity(k)
    } else {
        Vec::new()
    };
    let mut vhat = if ctx.mismatch.is_some() {
        Vec::with_capacity(k)
    } else {
        Vec::new()
    };
    for (idx, u) in ctx.users.iter().enumerate() {
        let s = ctx.stats[idx].s;
        // Fixed draw order per user: stale channel, AR(1) innovation,
        // current pilot noise, stale pilot noise. Every draw happens
        // unconditionally so the stream stays aligned across receiver sets.
        let h_prev = sample_stationary_iid(u.c, ctx.n_r, &mut rng);
        let h_now = ar1_step_iid(u.a, u.c, &h_prev, &mut rng);
        let y_now = received_pilot(&h_now, s, &mut rng);
        let y_prev = received_pilot(&h_prev, s, &mut rng);
        let st = &ctx.stats[idx];
        v.push(&y_now * C64::new(st.e_hat, 0.0) + &y_prev * C64::new(st.e_check, 0.0));
        if ctx.needs_memoryless {
            m.push(&y_now * C64::new(ctx.mem_gain[idx], 0.0));
        }
        if let Some(mm) = &ctx.mismatch {
            let st = &mm.stats[idx];
            vhat.push(&y_now * C64::new(st.e_hat, 0.0) + &y_prev * C64::new(st.e_check, 0.0));
        }
        if ctx.needs_true_channel {
            h.push(h_now);
        }
    }
    TrialState {
        gram_v: gram(&v),
        gram_m: ctx.needs_memoryless.then(|| gram(&m)),
        cross_mv: ctx.needs_memoryless.then(|| cross_gram(&m, &v)),
        gram_h: ctx.needs_true_channel.then(|| gram(&h)),
        gram_vhat: ctx.mismatch.is_some().then(|| gram(&vhat)),
        cross_vhat_v: ctx.mismatch.is_some().then(|| cross_gram(&vhat, &v)),
    }
}

/// Matched filter on a proxy vector whose inner products with the true
/// means sit in `row` (`row[j] = proxy^H v_j`) and whose squared norm is
/// `norm2`.
fn matched_filter_gamma(
    row: impl Fn(usize) -> C64,
    norm2: f64,
    weights: &[f64],
    beta: f64,
) -> Result<f64> {
    let k = weights.len();
    let g_dot_v: Vec<C64> = (0..k).map(row).collect();
    combining_gamma(&g_dot_v, norm2, weights, beta)
}

fn trial_gamma(
    ctx: &PointContext<'_>,
    state: &TrialState,
    kind: ReceiverKind,
) -> Result<f64> {
    let w = &ctx.weights;
    match kind {
        ReceiverKind::Proposed => match &ctx.mismatch {
            None => mmse_gamma(&state.gram_v, w, ctx.beta),
            Some(mm) => regularized_gamma(
                state.gram_vhat.as_ref().expect("mismatch Gram"),
                state.cross_vhat_v.as_ref().expect("mismatch cross Gram"),
                mm.beta_assumed,
                w,
                ctx.beta,
            ),
        },
        ReceiverKind::ProposedPerfectCsi => {
            let gram_h = state.gram_h.as_ref().expect("true-channel Gram");
            mmse_gamma(gram_h, w, ctx.sigma_d2)
        }
        // All three collapse to a matched filter on the memoryless
        // estimate m_1: rank-one regularized inverses keep the direction.
        ReceiverKind::Naive
        | ReceiverKind::ConventionalCov
        | ReceiverKind::Mrc(MrcVariant::Memoryless) => {
            let cross = state.cross_mv.as_ref().expect("memoryless cross Gram");
            let gm = state.gram_m.as_ref().expect("memoryless Gram");
            matched_filter_gamma(|j| cross[(0, j)], gm[(0, 0)].re, w, ctx.beta)
        }
        ReceiverKind::ConventionalInst => regularized_gamma(
            state.gram_m.as_ref().expect("memoryless Gram"),
            state.cross_mv.as_ref().expect("memoryless cross Gram"),
            ctx.xi,
            w,
            ctx.beta,
        ),
        // Matched filters on the (possibly mismatched) two-lag estimate;
        // the prediction scaling `a v_1` drops out of the SINR ratio.
        ReceiverKind::ArAwareCov
        | ReceiverKind::Mrc(MrcVariant::TwoLag)
        | ReceiverKind::Mrc(MrcVariant::Predicted) => match &ctx.mismatch {
            None => matched_filter_gamma(
                |j| state.gram_v[(0, j)],
                state.gram_v[(0, 0)].re,
                w,
                ctx.beta,
            ),
            Some(_) => {
                let cross = state.cross_vhat_v.as_ref().expect("mismatch cross Gram");
                let gvh = state.gram_vhat.as_ref().expect("mismatch Gram");
                matched_filter_gamma(|j| cross[(0, j)], gvh[(0, 0)].re, w, ctx.beta)
            }
        },
    }
}

fn run_trial(
    ctx: &PointContext<'_>,
    receivers: &[ReceiverKind],
    master_seed: u64,
    trial: u64,
) -> Result<Vec<f64>> {
    let state = run_trial_state(ctx, master_seed, trial);
    receivers
        .iter()
        .map(|&kind| {
            trial_gamma(ctx, &state, kind).map_err(|e| {
                Error::SolveFailure(format!("trial {trial}, receiver {kind}: {e}"))
            })
        })
        .collect()
}

/// Sums `xs` by recursive halving, which keeps the rounding error of long
/// Monte Carlo reductions near `O(log n)` ulps and is independent of the
/// thread count (the samples are already in trial order).
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Linear-domain mean and standard error of a sample set.
fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = pairwise_sum(samples) / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = samples.iter().map(|&g| (g - mean) * (g - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Equi-probability quantiles of the sample distribution: 200 points at
/// `p_i = (i - 0.5) / 200`, each reported in dB.
fn cdf_points(samples: &[f64]) -> Vec<CdfPoint> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    (1..=CDF_POINTS)
        .map(|i| {
            let p = (i as f64 - 0.5) / CDF_POINTS as f64;
            let idx = ((p * n as f64).ceil() as usize).saturating_sub(1).min(n - 1);
            CdfPoint {
                p,
                sinr_db: to_db(sorted[idx]),
            }
        })
        .collect()
}

struct DeqFields {
    thm2_db: f64,
    fp_db: f64,
    iters: u64,
}

fn deq_for_point(ctx: &PointContext<'_>) -> Result<DeqFields> {
    let family = scalar_phi_family(ctx.users, &ctx.stats, ctx.sigma_d2)?;
    let PhiFamily::Scalar { phis, beta } = &family else {
        unreachable!("scalar_phi_family builds the scalar variant")
    };
    let thm2 = iid_sinr_root(phis, *beta, ctx.n_r)?;
    let state = det_equiv_general(&family, ctx.n_r, &FixedPointOptions::default())?;
    Ok(DeqFields {
        thm2_db: to_db(thm2),
        fp_db: to_db(state.gamma),
        iters: state.iterations,
    })
}

/// Whether the deterministic-equivalent columns apply: only the `proposed`
/// receiver has a large-system limit in this catalog, and only when its
/// filter runs at the true aging coefficient.
fn deq_applies(kind: ReceiverKind, ctx: &PointContext<'_>) -> bool {
    kind == ReceiverKind::Proposed && ctx.mismatch.is_none()
}

fn base_row(point: &SweepPoint, kind: ReceiverKind, trials: u64, seed: u64) -> ResultRow {
    ResultRow {
        sweep_var: point.sweep_var.clone(),
        sweep_value: point.sweep_value,
        receiver: kind.name().to_string(),
        mc_mean_db: None,
        ci_lo_db: None,
        ci_hi_db: None,
        deq_thm2_db: None,
        deq_fp_db: None,
        fp_iters: None,
        trials,
        seed,
        error: None,
        cdf: None,
    }
}

fn run_point(sc: &Scenario, point: &SweepPoint) -> Result<Vec<ResultRow>> {
    let trials = if sc.is_analysis_only() { 0 } else { sc.trials };
    if let Some(marker) = &point.budget_error {
        return Ok(sc
            .receivers
            .iter()
            .map(|&kind| {
                let mut row = base_row(point, kind, trials, sc.master_seed);
                row.error = Some(marker.clone());
                row
            })
            .collect());
    }
    let ctx = PointContext::build(point, &sc.receivers)?;
    let deq = if sc.receivers.iter().any(|&k| deq_applies(k, &ctx)) {
        Some(deq_for_point(&ctx)?)
    } else {
        None
    };
    let samples: Option<Vec<Vec<f64>>> = if trials > 0 {
        let per_trial: Vec<Vec<f64>> = (0..trials)
            .into_par_iter()
            .map(|t| run_trial(&ctx, &sc.receivers, sc.master_seed, t))
            .collect::<Result<_>>()?;
        // Transpose to per-receiver sample vectors in trial order.
        let mut per_receiver = vec![Vec::with_capacity(per_trial.len()); sc.receivers.len()];
        for trial in &per_trial {
            for (r, &g) in trial.iter().enumerate() {
                per_receiver[r].push(g);
            }
        }
        Some(per_receiver)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(sc.receivers.len());
    for (r, &kind) in sc.receivers.iter().enumerate() {
        let mut row = base_row(point, kind, trials, sc.master_seed);
        if let Some(samples) = &samples {
            let (mean, se) = mean_and_se(&samples[r]);
            row.mc_mean_db = Some(to_db(mean));
            row.ci_lo_db = Some(to_db(mean - 1.96 * se));
            row.ci_hi_db = Some(to_db(mean + 1.96 * se));
            if sc.cdf {
                row.cdf = Some(cdf_points(&samples[r]));
            }
        }
        if let (Some(deq), true) = (&deq, deq_applies(kind, &ctx)) {
            row.deq_thm2_db = Some(deq.thm2_db);
            row.deq_fp_db = Some(deq.fp_db);
            row.fp_iters = Some(deq.iters);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Runs a scenario to completion and returns one row per
/// (sweep point, receiver) pair, point-major, receivers in request order.
///
/// # Errors
///
/// [`Error::Config`] for invalid scenarios; numerical failures
/// ([`Error::SolveFailure`], [`Error::NoConvergence`], ...) abort the run.
pub fn run_scenario(sc: &Scenario) -> Result<Vec<ResultRow>> {
    let points = sc.points()?;
    let mut rows = Vec::new();
    for point in &points {
        rows.extend(run_point(sc, point)?);
    }
    Ok(rows)
}

/// Same as [`run_scenario`] but on a dedicated thread pool of the given
/// size (`None` uses the global pool). The output is bit-identical for
/// every thread count.
///
/// # Errors
///
/// As [`run_scenario`]; additionally [`Error::Config`] when the pool cannot
/// be built.
pub fn run_scenario_with_threads(sc: &Scenario, threads: Option<usize>) -> Result<Vec<ResultRow>> {
    match threads {
        None => run_scenario(sc),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build a {n}-thread pool: {e}")))?;
            pool.install(|| run_scenario(sc))
        }
    }
}

/// Monte Carlo mean SINR (linear units) of one receiver on a single-point
/// scenario, for library callers that need the raw average rather than
/// formatted rows.
pub(crate) fn single_point_mean_linear(
    scenario: &Scenario,
    kind: ReceiverKind,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    if scenario.sweep.is_some() {
        return Err(Error::Config(
            "average SINR estimation expects a single-point scenario without a sweep".into(),
        ));
    }
    let mut sc = scenario.clone();
    sc.receivers = vec![kind];
    sc.trials = trials;
    sc.master_seed = seed;
    sc.cdf = false;
    sc.analysis_only = false;
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let points = sc.points()?;
    let ctx = PointContext::build(&points[0], &sc.receivers)?;
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(&ctx, &sc.receivers, seed, t))
        .collect::<Result<_>>()?;
    let samples: Vec<f64> = per_trial.iter().map(|t| t[0]).collect();
    Ok(mean_and_se(&samples).0)
}
