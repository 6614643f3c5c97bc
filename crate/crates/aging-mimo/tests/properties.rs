//! Property-based invariants of the library, checked over randomized inputs.

use aging_mimo::channel::{
    process_noise_cov, psd_factor, received_pilot, sample_stationary_iid, trial_rng, SystemConfig,
    UserParams,
};
use aging_mimo::estimation::{conditional_matrices, memoryless_gain_iid, scalar_conditional};
use aging_mimo::output::{csv_string, emit_json, fmt_sig9, Metadata, ResultRow};
use aging_mimo::receivers::{build_receiver, perfect_csi_inputs, ReceiverInputs, UserRealization};
use aging_mimo::scenario::UserTemplate;
use aging_mimo::sinr::{
    det_equiv_general, iid_sinr_root, receiver_sinr, scalar_phi_family, symmetric_sinr,
    FixedPointOptions,
};
use aging_mimo::{CMatrix, CVector, PhiFamily, ReceiverKind, Scenario, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn identity_scaled(n: usize, x: f64) -> CMatrix {
    CMatrix::identity(n, n) * C64::new(x, 0.0)
}

/// A strictly positive, well-scaled float strategy.
fn pos(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// The scalar two-lag estimator is the isotropic special case of the
    /// matrix operators.
    #[test]
    fn scalar_and_matrix_conditional_stats_agree(
        c in pos(1e-2, 1e2),
        a in -0.99f64..0.99,
        s in pos(1e-4, 1e2),
    ) {
        let scalar = scalar_conditional(c, a, s).unwrap();
        let n = 3;
        let stats = conditional_matrices(
            &identity_scaled(n, c),
            &identity_scaled(n, a),
            s,
        ).unwrap();
        for i in 0..n {
            prop_assert!((stats.e[(i, i)].re - scalar.e_hat).abs() <= 1e-10 * scalar.e_hat.abs().max(1.0));
            prop_assert!((stats.e[(i, n + i)].re - scalar.e_check).abs() <= 1e-10 * scalar.e_check.abs().max(1.0));
            prop_assert!((stats.z[(i, i)].re - scalar.z).abs() <= 1e-10 * scalar.z.max(1.0));
            prop_assert!(
                (stats.r_mmse[(i, i)].re - scalar.estimate_var(c)).abs()
                    <= 1e-10 * scalar.estimate_var(c).max(1.0)
            );
        }
    }

    /// More pilot noise always means a weaker current-pilot gain and a
    /// larger conditional error, and the error never exceeds the prior.
    #[test]
    fn noisier_pilots_estimate_worse(
        c in pos(1e-2, 1e2),
        a in -0.99f64..0.99,
        s in pos(1e-4, 1e2),
        factor in pos(1.01, 1e3),
    ) {
        let clean = scalar_conditional(c, a, s).unwrap();
        let noisy = scalar_conditional(c, a, s * factor).unwrap();
        prop_assert!(noisy.e_hat < clean.e_hat);
        prop_assert!(noisy.z > clean.z);
        prop_assert!(clean.z > 0.0 && clean.z < c);
        prop_assert!(memoryless_gain_iid(c, s * factor) < memoryless_gain_iid(c, s));
    }

    /// The pilot/data power split satisfies the total budget identity.
    #[test]
    fn power_budget_is_exhausted_exactly(
        p_tot in pos(1.0, 1e4),
        frac in 0.01f64..0.99,
        tau_p in 1u32..4,
        tau_d in 4u32..16,
    ) {
        let cfg = SystemConfig {
            k: 2,
            n_r: 4,
            tau_p,
            tau_d,
            p_tot,
            sigma_p2: 1e-7,
            sigma_d2: 1e-7,
        };
        let p_p = frac * p_tot / f64::from(tau_p);
        let user = UserParams::new(1e-4, 0.5, 1.0, p_p, &cfg).unwrap();
        let spent = f64::from(tau_p) * p_p + f64::from(tau_d) * user.p;
        prop_assert!((spent - p_tot).abs() <= 1e-12 * p_tot);
        prop_assert!(user.p > 0.0);
    }

    /// The deterministic-equivalent root grows when any single user's
    /// signal weight grows, and is invariant under common rescaling of all
    /// weights and the noise floor.
    #[test]
    fn iid_root_is_monotone_and_scale_invariant(
        phis in prop::collection::vec(pos(1e-2, 10.0), 1..6),
        beta in pos(1e-2, 10.0),
        n_r in 2usize..64,
        bump in pos(1.1, 4.0),
        scale in pos(1e-6, 1e6),
    ) {
        let base = iid_sinr_root(&phis, beta, n_r).unwrap();
        let mut bumped = phis.clone();
        bumped[0] *= bump;
        let up = iid_sinr_root(&bumped, beta, n_r).unwrap();
        prop_assert!(up > base, "bumping phi_1 from {} lowered the root {base} -> {up}", phis[0]);
        let scaled_phis: Vec<f64> = phis.iter().map(|p| p * scale).collect();
        let scaled = iid_sinr_root(&scaled_phis, beta * scale, n_r).unwrap();
        prop_assert!((scaled - base).abs() <= 1e-9 * base);
    }

    /// For equal weights the quadratic closed form and the general root
    /// finder locate the same solution.
    #[test]
    fn symmetric_closed_form_matches_general_root(
        phi in pos(1e-2, 10.0),
        beta in pos(1e-2, 10.0),
        n_r in 1usize..200,
        k in 1usize..24,
    ) {
        let closed = symmetric_sinr(phi, beta, n_r, k).unwrap();
        let root = iid_sinr_root(&vec![phi; k], beta, n_r).unwrap();
        prop_assert!((closed - root).abs() <= 1e-12 * closed.max(1.0));
    }

    /// The matrix-valued fixed point collapses to the scalar root when the
    /// per-user weight matrices are isotropic.
    #[test]
    fn matrix_fixed_point_matches_scalar_root(
        phis in prop::collection::vec(pos(5e-2, 5.0), 1..4),
        beta in pos(5e-2, 5.0),
        n_r in 2usize..32,
    ) {
        let scalar = iid_sinr_root(&phis, beta, n_r).unwrap();
        let mats: Vec<CMatrix> = phis.iter().map(|&p| identity_scaled(n_r, p)).collect();
        let family = PhiFamily::Matrix { phis: mats, beta };
        let state = det_equiv_general(&family, n_r, &FixedPointOptions::default()).unwrap();
        prop_assert!(
            (state.gamma - scalar).abs() <= 1e-8 * scalar.max(1e-8),
            "matrix {} vs scalar {scalar}",
            state.gamma
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// Every root-based pilot optimum is a genuine stationary point of the
    /// stored quartic.
    #[test]
    fn pilot_optimum_is_stationary(
        k in 1u32..40,
        a in 0.0f64..0.95,
        p_tot in pos(50.0, 1000.0),
    ) {
        let mut problem = aging_mimo::scenario::preset_pilot_problem(k, a);
        problem.p_tot = p_tot;
        let opt = problem.optimal_pilot_power().unwrap();
        prop_assert!(opt.p_p > 0.0 && opt.p_p < problem.max_pilot_power());
        if !opt.grid_fallback {
            let q = problem.quartic_coeffs();
            let desc = q.descending();
            let mag: f64 = desc
                .iter()
                .enumerate()
                .map(|(i, &coef)| (coef * opt.p_p.powi(4 - i as i32)).abs())
                .sum();
            prop_assert!(
                q.eval(opt.p_p).abs() <= 1e-7 * mag,
                "quartic residual {} exceeds 1e-7 of term magnitude {mag}",
                q.eval(opt.p_p)
            );
        }
        // The optimum beats nearby feasible powers.
        let obj = problem.objective(opt.p_p).unwrap();
        for shift in [0.97, 1.03] {
            let p = opt.p_p * shift;
            if p > 0.0 && p < problem.max_pilot_power() {
                prop_assert!(problem.objective(p).unwrap() >= obj * (1.0 - 1e-9));
            }
        }
    }

    /// The pilot objective equals the effective-noise-over-signal form
    /// assembled from the estimator statistics.
    #[test]
    fn pilot_objective_matches_estimator_assembly(
        k in 1u32..30,
        a in 0.0f64..0.95,
        frac in 0.05f64..0.95,
    ) {
        let problem = aging_mimo::scenario::preset_pilot_problem(k, a);
        let p_p = frac * problem.max_pilot_power();
        let cfg = SystemConfig {
            k,
            n_r: 8,
            tau_p: problem.tau_p,
            tau_d: problem.tau_d,
            p_tot: problem.p_tot,
            sigma_p2: problem.sigma_p2,
            sigma_d2: problem.sigma_d2,
        };
        let user = UserParams::new(problem.alpha, a, problem.c, p_p, &cfg).unwrap();
        let stats = scalar_conditional(user.c, a, user.pilot_noise_var(&cfg)).unwrap();
        let users = vec![user; k as usize];
        let all_stats = vec![stats; k as usize];
        let family = scalar_phi_family(&users, &all_stats, problem.sigma_d2).unwrap();
        let PhiFamily::Scalar { phis, beta } = &family else { unreachable!() };
        let assembled = problem.c * problem.c * (f64::from(k) + beta / phis[0]);
        let objective = problem.objective(p_p).unwrap();
        prop_assert!((assembled - objective).abs() <= 1e-10 * objective);
    }

    /// Covariance square roots reproduce their matrix, and the AR(1)
    /// process-noise covariance closes the stationarity identity
    /// `A C A^H + Theta = C`.
    #[test]
    fn psd_factorization_and_process_noise_close(
        n in 1usize..6,
        seed in 0u64..1000,
        a in -0.95f64..0.95,
        c_scale in pos(0.1, 10.0),
    ) {
        let mut rng = trial_rng(7000 + seed, 0);
        // Random PSD matrix B B^H + eps I.
        let b = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rand::Rng::gen_range(&mut rng, -1.0..1.0), rand::Rng::gen_range(&mut rng, -1.0..1.0))
        });
        let psd = &b * b.adjoint() + CMatrix::identity(n, n) * C64::new(1e-6, 0.0);
        let root = psd_factor(&psd).unwrap();
        let back = &root * root.adjoint();
        prop_assert!((&back - &psd).norm() <= 1e-9 * psd.norm());

        let a_mat = identity_scaled(n, a);
        let c_mat = identity_scaled(n, c_scale);
        let theta = process_noise_cov(&a_mat, &c_mat).unwrap();
        let closed = &a_mat * &c_mat * a_mat.adjoint() + &theta;
        prop_assert!((&closed - &c_mat).norm() <= 1e-12 * c_mat.norm());
    }
}

/// Replays the engine's draw sequence for one trial and rebuilds every
/// receiver at full antenna dimension.
fn dense_gammas(scenario: &Scenario, kinds: &[ReceiverKind]) -> Vec<f64> {
    let cfg = &scenario.system;
    let template = scenario.user.as_ref().expect("shared template");
    let n_r = cfg.n_r as usize;
    let mut rng = trial_rng(scenario.master_seed, 0);
    let mut users = Vec::new();
    for _ in 0..cfg.k {
        let u = UserParams::from_pathloss_db(
            template.alpha_db,
            template.a,
            template.c,
            template.p_p,
            cfg,
        )
        .unwrap();
        let s = u.pilot_noise_var(cfg);
        let stats = scalar_conditional(u.c, u.a, s).unwrap();
        let h_prev = sample_stationary_iid(u.c, n_r, &mut rng);
        let h_now = aging_mimo::channel::ar1_step_iid(u.a, u.c, &h_prev, &mut rng);
        let y_now = received_pilot(&h_now, s, &mut rng);
        let y_prev = received_pilot(&h_prev, s, &mut rng);
        let v: CVector = &y_now * C64::new(stats.e_hat, 0.0) + &y_prev * C64::new(stats.e_check, 0.0);
        let gain = memoryless_gain_iid(u.c, s);
        let q = aging_mimo::estimation::memoryless_q_iid(u.c, s);
        users.push(UserRealization {
            alpha: u.alpha,
            p: u.p,
            a: C64::new(u.a, 0.0),
            v,
            z: identity_scaled(n_r, stats.z),
            h_mem: &y_now * C64::new(gain, 0.0),
            q: identity_scaled(n_r, q),
            c: identity_scaled(n_r, u.c),
            h_true: Some(h_now),
        });
    }
    let inputs = ReceiverInputs {
        sigma_d2: cfg.sigma_d2,
        users,
    };
    let genie = perfect_csi_inputs(&inputs).unwrap();
    kinds
        .iter()
        .map(|&kind| {
            let (inp, build_kind) = if kind == ReceiverKind::ProposedPerfectCsi {
                (&genie, ReceiverKind::Proposed)
            } else {
                (&inputs, kind)
            };
            let receiver = build_receiver(build_kind, inp).unwrap();
            receiver_sinr(&receiver, inp).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The Gram-domain Monte Carlo kernel agrees with explicit receiver
    /// construction at full antenna dimension for every receiver in the
    /// catalog, across random scenarios.
    #[test]
    fn simulation_kernel_matches_dense_receivers(
        k in 1u32..4,
        extra_antennas in 1u32..6,
        a in 0.0f64..0.95,
        seed in 0u64..10_000,
        noise_scale in pos(1.0, 200.0),
    ) {
        let n_r = k + extra_antennas;
        let alpha = 10f64.powf(-4.5);
        let noise = alpha * alpha * noise_scale;
        let scenario = Scenario {
            system: SystemConfig {
                k,
                n_r,
                tau_p: 1,
                tau_d: 11,
                p_tot: 250.0,
                sigma_p2: noise,
                sigma_d2: noise,
            },
            user: Some(UserTemplate { alpha_db: 90.0, a, c: 1.0, p_p: 100.0 }),
            users: None,
            receivers: ReceiverKind::ALL.to_vec(),
            assumed_a: None,
            trials: 1,
            master_seed: seed,
            sweep: None,
            cdf: false,
            analysis_only: false,
        };
        let rows = aging_mimo::run_scenario(&scenario).unwrap();
        let dense = dense_gammas(&scenario, &scenario.receivers);
        for (row, &gamma) in rows.iter().zip(&dense) {
            // One trial: the mean is the trial's SINR.
            let kernel = 10f64.powf(row.mc_mean_db.unwrap() / 10.0);
            prop_assert!(
                (kernel - gamma).abs() <= 1e-9 * gamma.max(1e-12),
                "{}: kernel {kernel} vs dense {gamma}",
                row.receiver
            );
        }
        // The optimal receiver dominates the whole catalog on every draw.
        let proposed = dense[0];
        for (i, &g) in dense.iter().enumerate() {
            if scenario.receivers[i] != ReceiverKind::ProposedPerfectCsi {
                prop_assert!(g <= proposed * (1.0 + 1e-9));
            }
        }
    }
}

fn arb_row() -> impl Strategy<Value = ResultRow> {
    (
        prop::option::of(-40.0f64..40.0),
        prop::option::of(-40.0f64..40.0),
        prop::option::of(0u64..100),
        0u64..1_000_000,
        any::<u64>(),
        prop::option::of("[A-Za-z]{3,12}"),
        -10.0f64..1000.0,
    )
        .prop_map(|(mc, deq, iters, trials, seed, error, sweep_value)| ResultRow {
            sweep_var: "P_p".to_string(),
            sweep_value,
            receiver: "proposed".to_string(),
            mc_mean_db: mc,
            ci_lo_db: mc.map(|m| m - 0.25),
            ci_hi_db: mc.map(|m| m + 0.25),
            deq_thm2_db: deq,
            deq_fp_db: deq.map(|d| d + 1e-4),
            fp_iters: iters,
            trials,
            seed,
            error,
            cdf: None,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// CSV cells hold nine significant digits: re-parsing and re-formatting
    /// a cell is the identity, and the parsed value matches the source to
    /// within nine-digit rounding.
    #[test]
    fn csv_numbers_survive_a_round_trip(rows in prop::collection::vec(arb_row(), 1..8)) {
        let text = csv_string(&rows);
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader.headers().unwrap().clone();
        prop_assert_eq!(headers.iter().collect::<Vec<_>>().join(","), aging_mimo::output::CSV_HEADER);
        for (record, row) in reader.records().zip(&rows) {
            let record = record.unwrap();
            let cell = record.get(3).unwrap();
            match (&row.error, row.mc_mean_db) {
                (Some(err), _) => prop_assert_eq!(cell, format!("ERR:{err}")),
                (None, Some(v)) => {
                    prop_assert_eq!(cell, fmt_sig9(v));
                    let parsed: f64 = cell.parse().unwrap();
                    prop_assert!((parsed - v).abs() <= 1e-8 * v.abs().max(1e-8));
                    prop_assert_eq!(fmt_sig9(parsed), fmt_sig9(v));
                }
                (None, None) => prop_assert_eq!(cell, ""),
            }
            let trials_cell: u64 = record.get(9).unwrap().parse().unwrap();
            prop_assert_eq!(trials_cell, row.trials);
        }
    }

    /// JSON output deserializes back to the exact rows and metadata.
    #[test]
    fn json_round_trips_exactly(rows in prop::collection::vec(arb_row(), 0..6)) {
        let scenario = Scenario {
            system: SystemConfig {
                k: 2,
                n_r: 4,
                tau_p: 1,
                tau_d: 11,
                p_tot: 250.0,
                sigma_p2: 1e-7,
                sigma_d2: 1e-7,
            },
            user: Some(UserTemplate { alpha_db: 90.0, a: 0.5, c: 1.0, p_p: 100.0 }),
            users: None,
            receivers: vec![ReceiverKind::Proposed],
            assumed_a: None,
            trials: 10,
            master_seed: 7,
            sweep: None,
            cdf: false,
            analysis_only: false,
        };
        let metadata = Metadata {
            tool: "aging-mimo".to_string(),
            version: "test".to_string(),
            note: String::new(),
            scenario,
        };
        let mut buf = Vec::new();
        emit_json(&metadata, &rows, &mut buf).unwrap();
        let value: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let back: Vec<ResultRow> =
            serde_json::from_value(value.get("rows").unwrap().clone()).unwrap();
        prop_assert_eq!(back, rows);
        let meta_back: Metadata =
            serde_json::from_value(value.get("metadata").unwrap().clone()).unwrap();
        prop_assert_eq!(meta_back, metadata);
    }
}

/// Conditional estimates are uncorrelated with their errors (orthogonality)
/// in aggregate; checked once with a fixed seed rather than as a proptest
/// because it needs many draws.
#[test]
fn estimator_orthogonality_holds_in_aggregate() {
    let c = 1.0;
    let a = 0.85;
    let s = 0.3;
    let stats = scalar_conditional(c, a, s).unwrap();
    let mut rng = trial_rng(424_242, 0);
    let trials = 200_000;
    let mut cross = C64::new(0.0, 0.0);
    let mut est_power = 0.0;
    for _ in 0..trials {
        let h_prev = sample_stationary_iid(c, 1, &mut rng);
        let h_now = aging_mimo::channel::ar1_step_iid(a, c, &h_prev, &mut rng);
        let y_now = received_pilot(&h_now, s, &mut rng);
        let y_prev = received_pilot(&h_prev, s, &mut rng);
        let v = y_now[0] * stats.e_hat + y_prev[0] * stats.e_check;
        let err = h_now[0] - v;
        cross += v.conj() * err;
        est_power += v.norm_sqr();
    }
    let n = trials as f64;
    let cross_mean = cross / C64::new(n, 0.0);
    let est_var = est_power / n;
    // E v* (h - v) = 0; the sample mean concentrates at O(1/sqrt(n)).
    let tol = 4.0 * (est_var * stats.z / n).sqrt();
    assert!(
        cross_mean.norm() <= tol,
        "orthogonality violated: |{cross_mean}| > {tol}"
    );
    assert!((est_var - stats.estimate_var(c)).abs() <= 5e-2 * stats.estimate_var(c));
}

/// The matrix estimator path agrees with dense linear algebra on a random
/// non-isotropic model (rotation-mixed aging).
#[test]
fn matrix_estimator_matches_dense_solve() {
    let n = 4;
    let mut rng = trial_rng(515_151, 0);
    let b = CMatrix::from_fn(n, n, |_, _| {
        C64::new(
            rand::Rng::gen_range(&mut rng, -1.0..1.0),
            rand::Rng::gen_range(&mut rng, -1.0..1.0),
        )
    });
    let c = &b * b.adjoint() + CMatrix::identity(n, n) * C64::new(0.5, 0.0);
    // A = 0.6 e^{i theta} I keeps |A| < 1 while exercising complex algebra.
    let a = CMatrix::identity(n, n) * C64::from_polar(0.6, 0.7);
    let s = 0.4;
    let stats = conditional_matrices(&c, &a, s).unwrap();
    // Dense reference: E = [C, A C] [[C + sI, A C], [C A^H, C + sI]]^{-1}.
    let eye = DMatrix::<C64>::identity(n, n) * C64::new(s, 0.0);
    let mut sigma = DMatrix::<C64>::zeros(2 * n, 2 * n);
    sigma.view_mut((0, 0), (n, n)).copy_from(&(&c + &eye));
    sigma.view_mut((0, n), (n, n)).copy_from(&(&a * &c));
    sigma.view_mut((n, 0), (n, n)).copy_from(&(&c * a.adjoint()));
    sigma.view_mut((n, n), (n, n)).copy_from(&(&c + &eye));
    let mut cross = DMatrix::<C64>::zeros(n, 2 * n);
    cross.view_mut((0, 0), (n, n)).copy_from(&c);
    cross.view_mut((0, n), (n, n)).copy_from(&(&a * &c));
    let e_dense = &cross * sigma.clone().try_inverse().unwrap();
    assert!((&stats.e - &e_dense).norm() <= 1e-9 * e_dense.norm());
    let z_dense = &c - &e_dense * cross.adjoint();
    assert!((&stats.z - &z_dense).norm() <= 1e-9 * c.norm());
}
