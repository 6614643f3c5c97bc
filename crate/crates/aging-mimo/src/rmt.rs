//! Small random-matrix oracles.
//!
//! These routines cross-check the large-system SINR machinery from first
//! principles. The key object is the rank-one dyad built from `n` independent
//! complex Gaussian antenna gains with per-antenna variances `lambda_i`: its
//! single nonzero eigenvalue is `omega = sum_i Y_i` with `Y_i` exponential of
//! mean `lambda_i`. Sampling `omega` directly gives unbiased estimates of
//! spectral moments and Stieltjes transforms without ever forming a matrix,
//! which makes the oracles cheap enough to pin into tests.

use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Exp};

/// Monte Carlo draw of the nonzero dyad eigenvalue `omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadSpectrumSample {
    /// Matrix dimension (the dyad has `n - 1` zero eigenvalues).
    pub n: usize,
    /// Mean of the per-antenna variances.
    pub lambda_bar: f64,
    /// Realizations of `omega`.
    pub samples: Vec<f64>,
}

/// Mean estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    /// Point estimate.
    pub value: f64,
    /// Standard error of the mean (zero when only one draw is available).
    pub std_err: f64,
    /// Number of Monte Carlo draws behind the estimate.
    pub trials: usize,
}

fn mean_and_se(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = values.len();
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0, n);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt(), n)
}

fn validate_lambdas(n: usize, lambdas: &[f64]) -> Result<()> {
    if n == 0 {
        return Err(Error::OutOfDomain("dyad dimension must be at least 1".into()));
    }
    if lambdas.len() != n {
        return Err(Error::Dimension(format!(
            "expected {n} per-antenna variances, got {}",
            lambdas.len()
        )));
    }
    for (i, &l) in lambdas.iter().enumerate() {
        if !l.is_finite() || l <= 0.0 {
            return Err(Error::OutOfDomain(format!(
                "lambda[{i}] must be positive, got {l}"
            )));
        }
    }
    Ok(())
}

/// Draws `trials` realizations of the nonzero dyad eigenvalue
/// `omega = sum_i Y_i`, `Y_i ~ Exp(mean lambda_i)`.
///
/// # Errors
///
/// [`Error::OutOfDomain`] / [`Error::Dimension`] on invalid `n`, `lambdas`,
/// or a zero trial count.
pub fn sample_dyad_spectrum<R: Rng + ?Sized>(
    n: usize,
    lambdas: &[f64],
    trials: usize,
    rng: &mut R,
) -> Result<DyadSpectrumSample> {
    validate_lambdas(n, lambdas)?;
    if trials == 0 {
        return Err(Error::OutOfDomain("trial count must be at least 1".into()));
    }
    let dists: Vec<Exp<f64>> = lambdas
        .iter()
        .map(|&l| Exp::new(1.0 / l).expect("positive rate"))
        .collect();
    let samples = (0..trials)
        .map(|_| dists.iter().map(|d| d.sample(rng)).sum())
        .collect();
    Ok(DyadSpectrumSample {
        n,
        lambda_bar: lambdas.iter().sum::<f64>() / n as f64,
        samples,
    })
}

/// Scaled spectral-moment oracle `E[(omega / n)^r]` for `r in {1, 2, 3}`.
///
/// For equal variances `lambda` the `r = 2` value is exactly
/// `(n + 1) lambda^2 / n`, which pins the estimator in tests.
///
/// # Errors
///
/// [`Error::OutOfDomain`] for an unsupported moment order or invalid inputs.
pub fn dyad_moment_oracle<R: Rng + ?Sized>(
    n: usize,
    lambdas: &[f64],
    r: u32,
    trials: usize,
    rng: &mut R,
) -> Result<MomentEstimate> {
    if !(1..=3).contains(&r) {
        return Err(Error::OutOfDomain(format!(
            "moment order must be 1, 2, or 3, got {r}"
        )));
    }
    let dyad = sample_dyad_spectrum(n, lambdas, trials, rng)?;
    let scale = n as f64;
    let powers: Vec<f64> = dyad
        .samples
        .iter()
        .map(|&w| (w / scale).powi(r as i32))
        .collect();
    let (value, std_err, trials) = mean_and_se(powers.iter().copied());
    Ok(MomentEstimate {
        value,
        std_err,
        trials,
    })
}

/// Empirical Stieltjes transform `G(s) = E[1 / (X - s)]` of a sampled
/// spectrum.
///
/// # Errors
///
/// [`Error::PoleProximity`] when `s` comes within `1e-12` of a sample,
/// [`Error::OutOfDomain`] for an empty sample set.
pub fn empirical_stieltjes(samples: &[f64], s: f64) -> Result<MomentEstimate> {
    if samples.is_empty() {
        return Err(Error::OutOfDomain("empty spectrum sample".into()));
    }
    for &x in samples {
        if (x - s).abs() < 1e-12 {
            return Err(Error::PoleProximity(format!(
                "evaluation point {s} is within 1e-12 of spectral sample {x}"
            )));
        }
    }
    let values: Vec<f64> = samples.iter().map(|&x| 1.0 / (x - s)).collect();
    let (value, std_err, trials) = mean_and_se(values.iter().copied());
    Ok(MomentEstimate {
        value,
        std_err,
        trials,
    })
}

/// Stieltjes transform of the full `n`-point dyad spectrum, which places
/// `n - 1` atoms at zero next to the sampled eigenvalue:
/// `G(s) = ((n-1)/n) (1 / -s) + (1/n) E[1 / (omega - s)]`.
///
/// # Errors
///
/// [`Error::PoleProximity`] when `s` comes within `1e-12` of zero (the bulk
/// atom) or of a sampled eigenvalue.
pub fn full_spectrum_stieltjes(dyad: &DyadSpectrumSample, s: f64) -> Result<MomentEstimate> {
    if s.abs() < 1e-12 {
        return Err(Error::PoleProximity(format!(
            "evaluation point {s} sits on the zero eigenvalues of the dyad"
        )));
    }
    let top = empirical_stieltjes(&dyad.samples, s)?;
    let n = dyad.n as f64;
    Ok(MomentEstimate {
        value: (n - 1.0) / n * (1.0 / -s) + top.value / n,
        std_err: top.std_err / n,
        trials: top.trials,
    })
}
