//! Pilot power optimization under a total energy budget.
//!
//! With `tau_p` pilot symbols at power `P_p` and `tau_d` data symbols at
//! power `P = (P_tot - tau_p P_p) / tau_d`, raising the pilot power improves
//! the channel estimate but starves the payload. For symmetric users the
//! average-SINR-optimal pilot power minimizes a smooth scalar objective
//! `f(P_p)` whose stationary points are the real roots of an explicit
//! quartic; [`PilotOptProblem::optimal_pilot_power`] solves that quartic via
//! a companion-matrix eigendecomposition and falls back to a dense grid scan
//! whenever a finite-difference audit of the quartic fails to validate.

use crate::{Error, Result};
use nalgebra::DMatrix;

/// Symmetric-user pilot power optimization instance.
///
/// All `k` users share the same large-scale gain `alpha`, aging coefficient
/// `a`, fading variance `c`, and power policy, so one scalar objective covers
/// the whole cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotOptProblem {
    /// Number of users.
    pub k: u32,
    /// Pilot symbols per coherence block.
    pub tau_p: u32,
    /// Data symbols per coherence block.
    pub tau_d: u32,
    /// Total per-block energy budget shared by pilots and data.
    pub p_tot: f64,
    /// Large-scale amplitude gain (not squared).
    pub alpha: f64,
    /// AR(1) aging coefficient, `|a| < 1`.
    pub a: f64,
    /// Stationary per-antenna fading variance.
    pub c: f64,
    /// Pilot-side noise variance.
    pub sigma_p2: f64,
    /// Data-side noise variance.
    pub sigma_d2: f64,
}

/// Coefficients of the stationarity quartic `c4 p^4 + ... + c1 p + c0`,
/// whose interior real roots are the stationary points of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarticCoeffs {
    pub c4: f64,
    pub c3: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl QuarticCoeffs {
    /// Evaluates the quartic at `p` (Horner form).
    pub fn eval(&self, p: f64) -> f64 {
        (((self.c4 * p + self.c3) * p + self.c2) * p + self.c1) * p + self.c0
    }

    /// Coefficients in descending-degree order.
    pub fn descending(&self) -> [f64; 5] {
        [self.c4, self.c3, self.c2, self.c1, self.c0]
    }
}

/// Result of a pilot power optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotOptimum {
    /// Optimal pilot power.
    pub p_p: f64,
    /// Objective value at the optimum (lower is better).
    pub objective: f64,
    /// True when the quartic failed its audit and a dense grid scan
    /// produced the answer instead.
    pub grid_fallback: bool,
}

/// Points in the dense scan used when the quartic audit fails.
const GRID_POINTS: usize = 10_000;

impl PilotOptProblem {
    /// Checks that the instance lies in the supported domain.
    ///
    /// # Errors
    ///
    /// [`Error::OutOfDomain`] when any field is non-finite or outside its
    /// admissible range.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.tau_p == 0 || self.tau_d == 0 {
            return Err(Error::OutOfDomain(
                "user count and block lengths must be at least 1".into(),
            ));
        }
        let positives = [
            ("p_tot", self.p_tot),
            ("alpha", self.alpha),
            ("c", self.c),
            ("sigma_p2", self.sigma_p2),
            ("sigma_d2", self.sigma_d2),
        ];
        for (name, v) in positives {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::OutOfDomain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !self.a.is_finite() || self.a.abs() >= 1.0 {
            return Err(Error::OutOfDomain(format!(
                "aging coefficient must satisfy |a| < 1, got {}",
                self.a
            )));
        }
        Ok(())
    }

    /// Largest pilot power that leaves the data phase any energy at all.
    pub fn max_pilot_power(&self) -> f64 {
        self.p_tot / self.tau_p as f64
    }

    /// Scalar objective whose minimizer maximizes the symmetric average
    /// SINR. Up to a positive constant this is `beta / phi + k`, expressed
    /// directly in `P_p`:
    /// `(k c + sigma_d^2 tau_d / (alpha^2 (P_tot - P_p tau_p)))
    ///  * ((c+s)^2 - a^2 c^2) / ((1+a^2) s + c (1-a^2))`
    /// with `s = sigma_p^2 / (alpha^2 P_p tau_p)`.
    ///
    /// # Errors
    ///
    /// [`Error::OutOfDomain`] when `p_p` leaves the open feasible interval
    /// `(0, p_tot / tau_p)`.
    pub fn objective(&self, p_p: f64) -> Result<f64> {
        if !p_p.is_finite() || p_p <= 0.0 || p_p >= self.max_pilot_power() {
            return Err(Error::OutOfDomain(format!(
                "pilot power {p_p} outside the open interval (0, {})",
                self.max_pilot_power()
            )));
        }
        let (a2, c) = (self.alpha * self.alpha, self.c);
        let aa = self.a * self.a;
        let tau_p = self.tau_p as f64;
        let tau_d = self.tau_d as f64;
        let s = self.sigma_p2 / (a2 * p_p * tau_p);
        let num = (c + s) * (c + s) - aa * c * c;
        let den = (1.0 + aa) * s + c * (1.0 - aa);
        let load = self.k as f64 * c + self.sigma_d2 * tau_d / (a2 * (self.p_tot - p_p * tau_p));
        Ok(load * num / den)
    }

    /// Coefficients of the polynomial carrying the objective's stationarity
    /// condition: `f'(p) = 0` exactly when the quartic vanishes.
    pub fn quartic_coeffs(&self) -> QuarticCoeffs {
        let a2 = self.alpha * self.alpha;
        let aa = self.a * self.a;
        let (c, k) = (self.c, self.k as f64);
        let (sp2, sd2) = (self.sigma_p2, self.sigma_d2);
        let tau_p = self.tau_p as f64;
        let tau_d = self.tau_d as f64;
        let p_tot = self.p_tot;
        let am1 = aa - 1.0;
        let ap1 = aa + 1.0;
        let c4 = am1 * am1 * c.powi(3) * a2.powi(3) * (k * sp2 - sd2 * tau_d) * tau_p.powi(4);
        let c3 = 2.0
            * am1
            * c
            * c
            * a2
            * a2
            * sp2
            * (-am1 * c * k * p_tot * a2 - k * sp2 + 2.0 * sd2 * tau_d)
            * tau_p.powi(3);
        let c2 = c
            * a2
            * sp2
            * (am1 * am1 * c * c * k * p_tot * p_tot * a2 * a2
                + sp2 * (ap1 * k * sp2 + (aa - 5.0) * sd2 * tau_d)
                + am1 * c * p_tot * a2 * (4.0 * k * sp2 + am1 * sd2 * tau_d))
            * tau_p
            * tau_p;
        let c1 = -2.0
            * sp2
            * sp2
            * (am1 * c * p_tot * a2 + ap1 * sp2)
            * (c * k * p_tot * a2 + sd2 * tau_d)
            * tau_p;
        let c0 = ap1 * p_tot * sp2.powi(3) * (c * k * p_tot * a2 + sd2 * tau_d);
        QuarticCoeffs { c4, c3, c2, c1, c0 }
    }

    /// Denominator polynomial of `f'`: the stationarity quartic equals
    /// `-lambda f'(p) Dl(p)^2` for a positive constant `lambda`, with
    /// `Dl(p) = alpha^2 (P_tot - p tau_p) p ((1+a^2) kappa + c (1-a^2) p)`
    /// and `kappa = sigma_p^2 / (alpha^2 tau_p)`.
    fn derivative_denominator(&self, p: f64) -> f64 {
        let a2 = self.alpha * self.alpha;
        let aa = self.a * self.a;
        let tau_p = self.tau_p as f64;
        let kappa = self.sigma_p2 / (a2 * tau_p);
        a2 * (self.p_tot - p * tau_p) * p * ((1.0 + aa) * kappa + self.c * (1.0 - aa) * p)
    }

    /// Audits the quartic against a central finite difference of the
    /// objective: the ratio `-quartic(p) / (f'(p) Dl(p)^2)` must be one
    /// positive constant across the feasible interval. Returns `true` when
    /// the audit passes.
    fn stationarity_audit(&self) -> bool {
        const POINTS: usize = 32;
        let p_max = self.max_pilot_power();
        let quartic = self.quartic_coeffs();
        let h = 1e-5 * p_max;
        let mut products = [0.0f64; POINTS];
        let mut values = [0.0f64; POINTS];
        for (i, (prod, val)) in products.iter_mut().zip(values.iter_mut()).enumerate() {
            let p = (0.06 + 0.88 * i as f64 / (POINTS - 1) as f64) * p_max;
            let (Ok(hi), Ok(lo)) = (self.objective(p + h), self.objective(p - h)) else {
                return false;
            };
            let fd = (hi - lo) / (2.0 * h);
            let dl = self.derivative_denominator(p);
            *prod = fd * dl * dl;
            *val = quartic.eval(p);
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return false;
        }
        // Estimate the constant at the best-conditioned point, then demand
        // pointwise agreement relative to the quartic's own scale.
        let j = (0..POINTS)
            .max_by(|&i, &j| products[i].abs().total_cmp(&products[j].abs()))
            .expect("nonempty");
        if products[j] == 0.0 {
            return false;
        }
        let lambda = -values[j] / products[j];
        if !(lambda > 0.0) || !lambda.is_finite() {
            return false;
        }
        (0..POINTS).all(|i| (values[i] + lambda * products[i]).abs() <= 1e-6 * scale)
    }

    fn grid_minimum(&self) -> Result<PilotOptimum> {
        let p_max = self.max_pilot_power();
        let mut best = (0usize, f64::INFINITY);
        for i in 1..=GRID_POINTS {
            let p = p_max * i as f64 / (GRID_POINTS + 1) as f64;
            let v = self.objective(p)?;
            if v < best.1 {
                best = (i, v);
            }
        }
        if best.0 == 1 || best.0 == GRID_POINTS {
            return Err(Error::NoInteriorRoot(format!(
                "objective minimum pinned to the feasibility boundary near p = {}",
                p_max * best.0 as f64 / (GRID_POINTS + 1) as f64
            )));
        }
        Ok(PilotOptimum {
            p_p: p_max * best.0 as f64 / (GRID_POINTS + 1) as f64,
            objective: best.1,
            grid_fallback: true,
        })
    }

    /// Finds the pilot power minimizing [`PilotOptProblem::objective`].
    ///
    /// Solves the stationarity quartic, keeps the real roots inside the
    /// feasible interval, audits the quartic against a finite difference of
    /// the objective, and picks the candidate with the smallest objective.
    /// When the audit fails or no interior root survives, a dense
    /// 10^4-point grid scan answers instead (`grid_fallback = true`).
    ///
    /// # Errors
    ///
    /// [`Error::OutOfDomain`] on invalid instances, [`Error::NoInteriorRoot`]
    /// when even the grid scan finds no interior minimizer.
    pub fn optimal_pilot_power(&self) -> Result<PilotOptimum> {
        self.validate()?;
        let p_max = self.max_pilot_power();
        let roots = real_roots_in_interval(&self.quartic_coeffs().descending(), 0.0, p_max);
        if !roots.is_empty() && self.stationarity_audit() {
            let mut best: Option<PilotOptimum> = None;
            for p in roots {
                let v = self.objective(p)?;
                if best.map_or(true, |b| v < b.objective) {
                    best = Some(PilotOptimum {
                        p_p: p,
                        objective: v,
                        grid_fallback: false,
                    });
                }
            }
            return Ok(best.expect("nonempty candidate set"));
        }
        self.grid_minimum()
    }
}

/// Real roots of a real polynomial (descending coefficients) that lie
/// strictly inside `(lo, hi)`, via the companion-matrix eigenvalues of the
/// polynomial rescaled to the unit interval. Leading coefficients smaller
/// than `1e-14` of the largest rescaled coefficient are dropped, so exact
/// and near degree degenerations reduce the polynomial instead of poisoning
/// the eigenproblem. A root is accepted as real when its imaginary part is
/// at most `1e-9 (1 + |Re|)`.
fn real_roots_in_interval(desc: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let span = hi.max(lo.abs()).max(1.0);
    // Rescale x = span * y so candidate roots map near the unit scale.
    let n = desc.len();
    let scaled: Vec<f64> = desc
        .iter()
        .enumerate()
        .map(|(i, &coef)| coef * span.powi((n - 1 - i) as i32))
        .collect();
    let max_mag = scaled.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max_mag == 0.0 {
        return Vec::new();
    }
    let lead = match scaled.iter().position(|&v| v.abs() > 1e-14 * max_mag) {
        Some(i) => i,
        None => return Vec::new(),
    };
    let reduced = &scaled[lead..];
    let degree = reduced.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for row in 1..degree {
        companion[(row, row - 1)] = 1.0;
    }
    for row in 0..degree {
        // Monic tail coefficient of degree `row` goes in the last column.
        companion[(row, degree - 1)] = -reduced[degree - row] / reduced[0];
    }
    let eigen = companion.complex_eigenvalues();
    let mut roots: Vec<f64> = eigen
        .iter()
        .filter_map(|ev| {
            let re = ev.re * span;
            let im = ev.im * span;
            (im.abs() <= 1e-9 * (1.0 + re.abs()) && re > lo && re < hi).then_some(re)
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}
