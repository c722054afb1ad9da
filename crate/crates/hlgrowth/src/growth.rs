//! Cluster growth: angle sampling, capacity-increment rules, event logs.
//!
//! A cluster of `N` particles is the composition `Φ_N = f_1 ∘ … ∘ f_N` of
//! rotated slit maps. The attachment angles are i.i.d. uniform; the capacity
//! increments follow one of three rules:
//!
//! * **Sigma(σ)** — the random rule `c_{n+1} = c / |Φ′_n(e^{σ+iθ_{n+1}})|^α`,
//!   which reads the expansion of the current cluster map slightly outside
//!   the unit circle. This is the genuinely history-dependent model; each
//!   step costs one derivative evaluation through all prior maps, so an
//!   `N`-particle run performs exactly `N(N−1)/2` single-map evaluations.
//! * **Starred** — the deterministic sequence `c*_k = c / (1 + αc(k−1))`,
//!   the small-capacity limit of the Sigma rule.
//! * **Infinity** — the deterministic recursion `c_k = c·q(k)` with
//!   `q(1) = 1`, `q(k) = exp(−αc Σ_{j<k} q(j))`, obtained by reading the
//!   derivative at infinity (where `|Φ′_n| → e^{αC_n}`).

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::conformal::{self, ParticleEvent, SlitKernel};
use crate::error::{Error, Result};
use crate::rng::RunRng;

/// Derivative moduli below this raise a numerical-failure error instead of
/// producing an astronomically large capacity increment.
pub const DERIVATIVE_UNDERFLOW: f64 = 1e-300;

/// How often growth progress callbacks fire, in particles.
pub const PROGRESS_STRIDE: usize = 1_000;

/// Capacity-increment rule.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Regularization {
    /// Random rule reading `|Φ′_n|` on the circle of radius e^σ.
    Sigma { sigma: f64 },
    /// Deterministic rule reading the derivative at infinity.
    Infinity,
    /// Deterministic closed-form sequence c/(1 + αc(k−1)).
    Starred,
}

/// Run length: either a particle count or a capacity-time budget `T`
/// (converted to `N = ⌊T/c⌋` particles).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Horizon {
    Particles(usize),
    CapacityTime(f64),
}

impl Horizon {
    /// Number of particles this horizon yields at base capacity `c`.
    pub fn particle_count(&self, c: f64) -> usize {
        match *self {
            Horizon::Particles(n) => n,
            Horizon::CapacityTime(t) => (t / c).floor() as usize,
        }
    }
}

/// Full parameter set for one growth run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GrowthParams {
    /// Base capacity increment c > 0.
    pub base_capacity: f64,
    /// Feedback exponent α ≥ 0.
    pub alpha: f64,
    pub regularization: Regularization,
    pub horizon: Horizon,
}

impl GrowthParams {
    pub fn validate(&self) -> Result<()> {
        if !self.base_capacity.is_finite() || self.base_capacity <= 0.0 {
            return Err(Error::Domain(format!(
                "base capacity must be positive, got {}",
                self.base_capacity
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Domain(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if let Regularization::Sigma { sigma } = self.regularization {
            if !sigma.is_finite() || sigma <= 0.0 {
                return Err(Error::Domain(format!(
                    "sigma must be positive, got {sigma}"
                )));
            }
        }
        if let Horizon::CapacityTime(t) = self.horizon {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Domain(format!(
                    "capacity-time horizon must be non-negative, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Seed for the growth RNG. Identical seed + params reproduce identical
/// event lists bit-for-bit (same build, same platform).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RngSeed {
    pub seed: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

/// A grown cluster: parameters, the ordered event log, and cumulative
/// capacities. Immutable after construction and safe to share across
/// threads; the slit-map kernels are materialized lazily on first
/// evaluation.
#[derive(Debug)]
pub struct ClusterState {
    params: GrowthParams,
    events: Vec<ParticleEvent>,
    /// cumulative[n] = C_n = Σ_{k≤n} c_k, with cumulative[0] = 0.
    cumulative: Vec<f64>,
    /// Fused map evaluations performed while growing (the Sigma-rule cost).
    map_evaluations: u64,
    kernels: OnceLock<Vec<SlitKernel>>,
}

impl Clone for ClusterState {
    fn clone(&self) -> Self {
        Self {
            params: self.params,
            events: self.events.clone(),
            cumulative: self.cumulative.clone(),
            map_evaluations: self.map_evaluations,
            kernels: OnceLock::new(),
        }
    }
}

impl ClusterState {
    /// Rebuild a state from a stored event log (e.g. a run record). The
    /// evaluation counter is zero: no growth work was performed here.
    pub fn from_events(params: GrowthParams, events: Vec<ParticleEvent>) -> Result<Self> {
        params.validate()?;
        let mut cumulative = Vec::with_capacity(events.len() + 1);
        cumulative.push(0.0);
        for (i, ev) in events.iter().enumerate() {
            if !ev.capacity.is_finite() || ev.capacity <= 0.0 {
                return Err(Error::Domain(format!(
                    "event {i}: capacity must be positive, got {}",
                    ev.capacity
                )));
            }
            if !ev.slit_length.is_finite() || ev.slit_length <= 0.0 {
                return Err(Error::Domain(format!(
                    "event {i}: slit length must be positive, got {}",
                    ev.slit_length
                )));
            }
            cumulative.push(cumulative[i] + ev.capacity);
        }
        Ok(Self {
            params,
            events,
            cumulative,
            map_evaluations: 0,
            kernels: OnceLock::new(),
        })
    }

    pub fn params(&self) -> &GrowthParams {
        &self.params
    }

    pub fn events(&self) -> &[ParticleEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Cumulative capacities: entry n holds C_n = Σ_{k≤n} c_k (entry 0 is 0),
    /// built by sequential accumulation so resumed sums match bitwise.
    pub fn cumulative_capacities(&self) -> &[f64] {
        &self.cumulative
    }

    /// Total capacity C_N of the whole cluster.
    pub fn final_capacity(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Number of fused single-map evaluations performed during growth.
    pub fn map_evaluations(&self) -> u64 {
        self.map_evaluations
    }

    /// Slit-map kernels for every event, built on first use.
    pub fn kernels(&self) -> &[SlitKernel] {
        self.kernels.get_or_init(|| {
            self.events
                .iter()
                .map(|ev| SlitKernel::from_event(ev).expect("validated event"))
                .collect()
        })
    }

    /// `(Φ_N(z), Φ′_N(z))` for the full cluster map.
    pub fn evaluate(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        conformal::compose_evaluate_kernels(self.kernels(), z)
    }

    /// `(Φ_n(z), Φ′_n(z))` for the n-particle prefix, 0 ≤ n ≤ len.
    pub fn evaluate_prefix(&self, n: usize, z: Complex64) -> Result<(Complex64, Complex64)> {
        if n > self.len() {
            return Err(Error::Domain(format!(
                "prefix {n} exceeds cluster size {}",
                self.len()
            )));
        }
        conformal::compose_evaluate_kernels(&self.kernels()[..n], z)
    }
}

/// Deterministic capacity sequence `c*_k = c / (1 + αc(k−1))`, `k ≥ 1`.
pub fn starred_capacity(k: usize, c: f64, alpha: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("particle index starts at 1".into()));
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::Domain(format!("capacity must be positive, got {c}")));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Domain(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    Ok(c / (1.0 + alpha * c * (k - 1) as f64))
}

/// Deterministic capacity sequence of the infinity rule: `c·q(k)` with
/// `q(1) = 1`, `q(k) = exp(−αc Σ_{j<k} q(j))`. Exact recursion, no sampling.
pub fn infinity_regularized_sequence(c: f64, alpha: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("sequence length must be at least 1".into()));
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::Domain(format!("capacity must be positive, got {c}")));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Domain(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut q_sum = 0.0;
    let mut q = 1.0;
    for _ in 0..n {
        out.push(c * q);
        q_sum += q;
        q = (-alpha * c * q_sum).exp();
    }
    Ok(out)
}

/// Next Sigma-rule capacity increment for a cluster in `state`:
/// `c / |Φ′_n(e^{σ+iθ})|^α` with `n = state.len()`. An empty state returns
/// the base capacity (the composition is the identity).
///
/// Defined only under the Sigma rule; the other rules do not read the map.
pub fn next_capacity_hl(state: &ClusterState, theta_next: f64) -> Result<f64> {
    let Regularization::Sigma { sigma } = state.params.regularization else {
        return Err(Error::Domain(
            "next_capacity_hl requires the Sigma regularization".into(),
        ));
    };
    let c = state.params.base_capacity;
    if state.is_empty() {
        return Ok(c);
    }
    let z = Complex64::from_polar(sigma.exp(), theta_next);
    let (_, deriv) = conformal::compose_evaluate_kernels(state.kernels(), z)?;
    sigma_rule_capacity(c, state.params.alpha, deriv, state.len() + 1)
}

/// `c / |Φ′|^α` with the underflow / non-finiteness guard shared by
/// [`next_capacity_hl`] and the growth loop. `step` is the 1-based index of
/// the particle being attached, used in error reports.
fn sigma_rule_capacity(c: f64, alpha: f64, deriv: Complex64, step: usize) -> Result<f64> {
    let m = deriv.norm();
    if !m.is_finite() || m < DERIVATIVE_UNDERFLOW {
        return Err(Error::Numerical {
            step,
            what: format!("composition derivative modulus {m:e} outside the usable range"),
        });
    }
    let next = c / m.powf(alpha);
    if !next.is_finite() || next <= 0.0 {
        return Err(Error::Numerical {
            step,
            what: format!(
                "capacity increment {next:e} from derivative modulus {m:e} is not usable"
            ),
        });
    }
    Ok(next)
}

/// Grow a cluster. Deterministic given `(params, seed)`.
pub fn grow(params: &GrowthParams, seed: RngSeed) -> Result<ClusterState> {
    grow_with_progress(params, seed, |_| {})
}

/// As [`grow`], invoking `progress(particles_done)` every
/// [`PROGRESS_STRIDE`] particles and once at completion.
pub fn grow_with_progress(
    params: &GrowthParams,
    seed: RngSeed,
    mut progress: impl FnMut(usize),
) -> Result<ClusterState> {
    params.validate()?;
    let c = params.base_capacity;
    let alpha = params.alpha;
    let n = params.horizon.particle_count(c);

    let mut rng = RunRng::seed_from_u64(seed.seed);
    let mut events: Vec<ParticleEvent> = Vec::with_capacity(n);
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    let mut kernels: Vec<SlitKernel> = Vec::with_capacity(n);
    let mut evaluations: u64 = 0;

    // Deterministic rules get their whole capacity sequence up front.
    let fixed: Option<Vec<f64>> = match params.regularization {
        Regularization::Sigma { .. } => None,
        Regularization::Starred => Some(
            (1..=n)
                .map(|k| starred_capacity(k, c, alpha))
                .collect::<Result<_>>()?,
        ),
        Regularization::Infinity => {
            if n == 0 {
                Some(Vec::new())
            } else {
                Some(infinity_regularized_sequence(c, alpha, n)?)
            }
        }
    };

    for k in 1..=n {
        let theta = rng.uniform_angle();
        let capacity = match (&params.regularization, &fixed) {
            (Regularization::Sigma { sigma }, _) => {
                if k == 1 {
                    c
                } else {
                    // Φ′_{k−1}(e^{σ+iθ_k}): chain-rule product through all
                    // prior kernels, newest applied first.
                    let z = Complex64::from_polar(sigma.exp(), theta);
                    let mut w = z;
                    let mut deriv = Complex64::new(1.0, 0.0);
                    for (index, kernel) in kernels.iter().enumerate().rev() {
                        let (value, factor) = kernel.apply_with_deriv_indexed(index, w)?;
                        evaluations += 1;
                        deriv *= factor;
                        w = value;
                    }
                    sigma_rule_capacity(c, alpha, deriv, k)?
                }
            }
            (_, Some(seq)) => seq[k - 1],
            (_, None) => unreachable!("deterministic rules are precomputed"),
        };
        let event = ParticleEvent::new(theta, capacity).map_err(|e| match e {
            Error::Domain(what) => Error::Numerical { step: k, what },
            other => other,
        })?;
        kernels.push(SlitKernel::from_event(&event)?);
        cumulative.push(cumulative[k - 1] + capacity);
        events.push(event);
        if k % PROGRESS_STRIDE == 0 {
            progress(k);
        }
    }
    progress(n);

    let state = ClusterState {
        params: *params,
        events,
        cumulative,
        map_evaluations: evaluations,
        kernels: OnceLock::new(),
    };
    // The growth loop already built the kernels; keep them.
    state.kernels.set(kernels).expect("fresh OnceLock");
    Ok(state)
}

/// Cumulative capacity C_n = Σ_{k≤n} c_k, with C_0 = 0.
pub fn total_capacity(state: &ClusterState, n: usize) -> Result<f64> {
    state
        .cumulative
        .get(n)
        .copied()
        .ok_or_else(|| Error::Domain(format!("prefix {n} exceeds cluster size {}", state.len())))
}

/// Result of the slit arclength quadrature: the estimate, a self-comparison
/// error estimate (difference against a half-resolution pass), and the
/// number of quadrature nodes skipped because the composition hit a
/// singular point (best-effort flag).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArclengthEstimate {
    pub value: f64,
    pub error_estimate: f64,
    pub singular_skips: usize,
}

/// Physical arclength of particle `k`'s slit after distortion by the prior
/// cluster map: `∫₁^{1+d_k} |Φ′_{k−1}(r e^{iθ_k})| dr`, by composite
/// Gauss–Legendre along the slit preimage. `quad_points` is the total node
/// budget (≥ 2); nodes are grouped into 5-point panels.
///
/// `k = 1` returns `d₁` exactly (the prior composition is the identity).
pub fn particle_arclength(
    state: &ClusterState,
    k: usize,
    quad_points: usize,
) -> Result<ArclengthEstimate> {
    if k == 0 || k > state.len() {
        return Err(Error::Domain(format!(
            "particle index {k} outside 1..={}",
            state.len()
        )));
    }
    if quad_points < 2 {
        return Err(Error::Domain(format!(
            "quadrature needs at least 2 points, got {quad_points}"
        )));
    }
    let ev = state.events[k - 1];
    if k == 1 {
        return Ok(ArclengthEstimate {
            value: ev.slit_length,
            error_estimate: 0.0,
            singular_skips: 0,
        });
    }
    let prefix = &state.kernels()[..k - 1];
    let panels = quad_points.div_ceil(5).max(1);
    let (value, skips) = arclength_pass(prefix, ev, panels);
    let (coarse, _) = arclength_pass(prefix, ev, (panels / 2).max(1));
    Ok(ArclengthEstimate {
        value,
        error_estimate: (value - coarse).abs(),
        singular_skips: skips,
    })
}

/// One composite 5-point Gauss–Legendre pass over `panels` equal pieces of
/// the slit segment. Singular nodes are skipped and counted; each panel is
/// scaled by the weight fraction that survived (best-effort).
fn arclength_pass(prefix: &[SlitKernel], ev: ParticleEvent, panels: usize) -> (f64, usize) {
    const NODES: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683_1,
        0.0,
        0.538_469_310_105_683_1,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.236_926_885_056_189_08,
        0.478_628_670_499_366_47,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_47,
        0.236_926_885_056_189_08,
    ];
    let (sin, cos) = ev.theta.sin_cos();
    let dir = Complex64::new(cos, sin);
    let h = ev.slit_length / panels as f64;
    let mut total = 0.0;
    let mut skips = 0usize;
    for p in 0..panels {
        let mid = 1.0 + (p as f64 + 0.5) * h;
        let mut panel_sum = 0.0;
        let mut weight_used = 0.0;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            let r = mid + 0.5 * h * x;
            match conformal::compose_evaluate_kernels(prefix, dir * r) {
                Ok((_, deriv)) => {
                    panel_sum += w * deriv.norm();
                    weight_used += w;
                }
                Err(_) => skips += 1,
            }
        }
        if weight_used > 0.0 {
            // Rescale so skipped nodes inherit the panel average.
            total += panel_sum * (2.0 / weight_used) * (0.5 * h);
        }
    }
    (total, skips)
}
