//! Closed-form limit objects and Monte Carlo oracles.
//!
//! Gathered here are the scaling-limit predictions the simulations are
//! checked against: the deterministic disk limit map `z ↦ (1+αT)^{1/α} z`,
//! the one-step angular variance `ρ(c)⁻¹` with its `(16/(3π))·c^{3/2}`
//! asymptote, the Brownian time change `s(t) = (32/(3πa))(1 − 1/√(1+at))`,
//! and a Kingman-coalescent sampler for the limiting branch-count law.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::conformal::GammaKernel;
use crate::error::{Error, Result};
use crate::rng::RunRng;

/// Variance per unit rescaled time of the limiting circular Brownian flow.
pub const LIMIT_DIFFUSIVITY: f64 = 16.0 / (3.0 * PI);

/// Truncation depth of the coalescent sampler: the discarded tail of the
/// merge-time series has mean 2/K = 10⁻⁴, below every tolerance in use.
pub const KINGMAN_K_MAX: usize = 20_000;

/// A packaged limit prediction, as attached to experiment reports.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitPrediction {
    /// Scale factor of the deterministic disk limit.
    DiskMap { alpha: f64, t: f64, factor: f64 },
    /// Endpoint-displacement variance per unit rescaled time.
    Diffusivity { value: f64 },
    /// Accumulated Brownian time at flow parameter `a`.
    TimeChange { a: f64, t: f64, value: f64 },
    /// Monte Carlo branch-count law ℙ(B = j), j = 1.., with standard errors.
    BranchLaw {
        a: f64,
        n_mc: usize,
        pmf: Vec<f64>,
        standard_errors: Vec<f64>,
    },
}

impl LimitPrediction {
    /// Basic well-formedness: finite values; a branch law is a probability
    /// vector summing to 1 within twice its Monte Carlo standard error.
    pub fn validate(&self) -> Result<()> {
        let fin = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{what} is not finite: {v}")))
            }
        };
        match self {
            LimitPrediction::DiskMap { alpha, t, factor } => {
                fin(*alpha, "alpha")?;
                fin(*t, "t")?;
                fin(*factor, "factor")
            }
            LimitPrediction::Diffusivity { value } => fin(*value, "value"),
            LimitPrediction::TimeChange { a, t, value } => {
                fin(*a, "a")?;
                fin(*t, "t")?;
                fin(*value, "value")
            }
            LimitPrediction::BranchLaw {
                n_mc,
                pmf,
                standard_errors,
                ..
            } => {
                if pmf.len() != standard_errors.len() {
                    return Err(Error::Domain(
                        "pmf and standard errors must align".into(),
                    ));
                }
                let mut sum = 0.0;
                for &p in pmf {
                    fin(p, "pmf entry")?;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::Domain(format!("pmf entry {p} outside [0,1]")));
                    }
                    sum += p;
                }
                let se_sum = (sum * (1.0 - sum).max(0.0) / *n_mc as f64).sqrt();
                if sum > 1.0 + 1e-12 || sum < 1.0 - 2.0 * se_sum - 1e-12 {
                    return Err(Error::Domain(format!(
                        "branch law sums to {sum}, outside 1 ± 2·SE"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Scale factor `(1 + αT)^{1/α}` of the disk limit, with the `α = 0` branch
/// `e^T` taken explicitly (the power form loses precision below α ≈ 10⁻⁸).
pub fn limit_map_factor(t: f64, alpha: f64) -> Result<f64> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Domain(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    if alpha == 0.0 {
        Ok(t.exp())
    } else {
        Ok(((alpha * t).ln_1p() / alpha).exp())
    }
}

/// Deterministic disk limit map `Ψ_T(z) = (1+αT)^{1/α}·z` (`e^T·z` at α = 0).
/// Multiplicative in `z` by construction: the scale factor is computed once.
pub fn limit_map(t: f64, alpha: f64, z: Complex64) -> Result<Complex64> {
    Ok(limit_map_factor(t, alpha)? * z)
}

/// One-step angular variance `ρ(c)⁻¹ = (1/2π)∫₀^{2π} γ̃_c(x)² dx`, by split
/// quadrature: a fine Simpson grid over the peak `|x| ≤ 10√c` and a
/// log-substituted Simpson grid over the tail up to π. Both grids are
/// doubled until the value moves by less than 10⁻³ relative.
pub fn rho_inverse(c: f64) -> Result<f64> {
    const REQUIRED: f64 = 1e-3;
    if !c.is_finite() || c <= 0.0 || c > 0.1 {
        return Err(Error::Domain(format!(
            "capacity must lie in (0, 0.1], got {c}"
        )));
    }
    let kernel = GammaKernel::new(c)?;
    let split = (10.0 * c.sqrt()).min(PI);
    let mut n = 1000usize;
    let mut prev = gamma_sq_integral(&kernel, split, n);
    let mut rel_change = f64::INFINITY;
    for _ in 0..6 {
        n *= 2;
        let next = gamma_sq_integral(&kernel, split, n);
        rel_change = (next - prev).abs() / next.abs();
        if rel_change < REQUIRED {
            return Ok(next / PI);
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence {
        achieved: prev / PI,
        rel_change,
        required: REQUIRED,
    })
}

/// `∫₀^π γ̃(x)² dx` with `n` Simpson intervals on each piece. The integrand
/// is even, so this is half of the full-circle integral.
fn gamma_sq_integral(kernel: &GammaKernel, split: f64, n: usize) -> f64 {
    let f = |x: f64| {
        let g = kernel.tilde(x);
        g * g
    };
    let peak = simpson(&f, 0.0, split, n);
    let tail = if split < PI {
        // u = log x flattens the ~(c/x)² decay for the tail grid
        let g = |u: f64| {
            let x = u.exp();
            f(x) * x
        };
        simpson(&g, split.ln(), PI.ln(), n)
    } else {
        0.0
    };
    peak + tail
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        sum += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// Accumulated variance of the limiting flow by rescaled time `t`, at flow
/// parameter `a`: `(32/(3πa))·(1 − 1/√(1+at))`. Written through `expm1` and
/// `ln_1p` so small `at` keeps full relative precision.
pub fn brownian_time_change(t: f64, a: f64) -> Result<f64> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain(format!(
            "time must be non-negative, got {t}"
        )));
    }
    if !a.is_finite() || a <= 0.0 {
        return Err(Error::Domain(format!(
            "flow parameter must be positive, got {a}"
        )));
    }
    let one_minus_inv_sqrt = -(-0.5 * (a * t).ln_1p()).exp_m1();
    Ok(32.0 / (3.0 * PI * a) * one_minus_inv_sqrt)
}

/// Coalescent threshold `8/(9πa)` against which merge times are compared to
/// read off the branch count.
pub fn branch_threshold(a: f64) -> Result<f64> {
    if !a.is_finite() || a <= 0.0 {
        return Err(Error::Domain(format!(
            "flow parameter must be positive, got {a}"
        )));
    }
    Ok(8.0 / (9.0 * PI * a))
}

/// One sample of the coalescent merge time `τ_j = Σ_{k=j+1}^{K} E_k`, with
/// `E_k` independent exponentials of rate `k(k−1)/2` and `K` the truncation
/// depth [`KINGMAN_K_MAX`]. Draws descend from `k = K`, so a sample for
/// level `j` shares its stream prefix with deeper levels from the same seed.
pub fn kingman_tau_sample(j: usize, rng: &mut RunRng) -> Result<f64> {
    if j == 0 {
        return Err(Error::Domain("coalescent levels start at 1".into()));
    }
    let mut acc = 0.0;
    for k in (j + 1..=KINGMAN_K_MAX).rev() {
        acc += level_exponential(k, rng);
    }
    Ok(acc)
}

/// All merge times from one coalescent sample path: entry `j−1` holds `τ_j`,
/// for `j = 1..=K`. One descending sweep of the same draws as
/// [`kingman_tau_sample`], so `profile[j−1]` from a fresh seed is
/// bit-identical to the single-level sample from that seed. The profile is
/// strictly decreasing (each level adds one positive exponential), with
/// `τ_K = 0`.
pub fn kingman_tau_profile(rng: &mut RunRng) -> Vec<f64> {
    let mut profile = vec![0.0; KINGMAN_K_MAX];
    let mut acc = 0.0;
    for k in (2..=KINGMAN_K_MAX).rev() {
        acc += level_exponential(k, rng);
        profile[k - 2] = acc;
    }
    profile
}

#[inline]
fn level_exponential(k: usize, rng: &mut RunRng) -> f64 {
    let rate = 0.5 * (k as f64) * (k as f64 - 1.0);
    rng.exponential(rate)
}

/// Branch count read off one coalescent profile: the smallest level `j`
/// whose merge time is at or below the threshold.
pub fn branch_from_profile(profile: &[f64], threshold: f64) -> usize {
    // profile is non-increasing; find the first entry ≤ threshold
    profile.partition_point(|&tau| tau > threshold) + 1
}

/// Monte Carlo cumulative probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CdfEstimate {
    pub p: f64,
    pub standard_error: f64,
    pub n_mc: usize,
}

/// Monte Carlo estimate of `ℙ(B ≤ j) = ℙ(τ_j ≤ 8/(9πa))` with standard
/// error `√(p̂(1−p̂)/n)`.
pub fn branch_count_cdf(j: usize, a: f64, n_mc: usize, rng: &mut RunRng) -> Result<CdfEstimate> {
    if j == 0 {
        return Err(Error::Domain("coalescent levels start at 1".into()));
    }
    if n_mc < 1_000 {
        return Err(Error::Domain(format!(
            "Monte Carlo size must be at least 1000, got {n_mc}"
        )));
    }
    let threshold = branch_threshold(a)?;
    let mut hits = 0usize;
    for _ in 0..n_mc {
        if kingman_tau_sample(j, rng)? <= threshold {
            hits += 1;
        }
    }
    let p = hits as f64 / n_mc as f64;
    Ok(CdfEstimate {
        p,
        standard_error: (p * (1.0 - p) / n_mc as f64).sqrt(),
        n_mc,
    })
}

/// Monte Carlo branch-count law `ℙ(B = j)` for `j = 1..=j_max`, sampled from
/// full coalescent profiles.
pub fn branch_count_pmf(
    a: f64,
    j_max: usize,
    n_mc: usize,
    rng: &mut RunRng,
) -> Result<LimitPrediction> {
    if j_max == 0 {
        return Err(Error::Domain("need at least one branch level".into()));
    }
    if n_mc < 1_000 {
        return Err(Error::Domain(format!(
            "Monte Carlo size must be at least 1000, got {n_mc}"
        )));
    }
    let threshold = branch_threshold(a)?;
    let mut counts = vec![0usize; j_max];
    for _ in 0..n_mc {
        let profile = kingman_tau_profile(rng);
        let b = branch_from_profile(&profile, threshold);
        if b <= j_max {
            counts[b - 1] += 1;
        }
    }
    let pmf: Vec<f64> = counts.iter().map(|&c| c as f64 / n_mc as f64).collect();
    let standard_errors = pmf
        .iter()
        .map(|&p| (p * (1.0 - p) / n_mc as f64).sqrt())
        .collect();
    Ok(LimitPrediction::BranchLaw {
        a,
        n_mc,
        pmf,
        standard_errors,
    })
}
