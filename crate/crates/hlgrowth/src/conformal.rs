//! Slit maps, their derivatives, and the boundary correspondence.
//!
//! The single-particle building block is the conformal map `F = f_c` of the
//! exterior unit disk `Δ = {|z| > 1}` onto `Δ ∖ (1, 1+d]`, normalized so that
//! `F(z)/z → e^c` at infinity. It is constructed by Joukowski conjugation
//!
//! ```text
//!   F = J⁻¹ ∘ L ∘ J,   J(z) = (z + 1/z)/2,   L(w) = ((a+1)w + (a−1))/2,
//! ```
//!
//! with `a = J(1+d)` and `J⁻¹` the exterior branch. `J` maps `Δ` onto the
//! plane cut along `[−1, 1]`; `L` stretches the cut to `[−1, a]`, whose `J⁻¹`
//! preimage is the circle plus the radial slit. The capacity/slit-length
//! relation `e^c = 1 + d²/(4(1+d))` falls out of the normalization: the
//! leading coefficient of `F` is `(a+1)/2 = (d+2)²/(4(1+d))`.
//!
//! Numerical notes, load-bearing for the tests in this module:
//!
//! * everything is computed through the cancellation-free factorizations
//!   `J(z)∓1 = (z∓1)²/(2z)` and `a−1 = d²/(2(1+d))`, so boundary and
//!   fixed-point evaluations do not lose precision to subtraction;
//! * inputs on the unit circle are snapped to exact trigonometric real parts
//!   with a signed-zero imaginary part copied from `Im z`. The principal
//!   square roots then pick the branch that is continuous from the exterior
//!   side — without this, the branch on the circle is decided by rounding
//!   noise and boundary evaluation is garbage.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Inputs with `||z| − 1|` at most this are treated as boundary (on-circle)
/// evaluations; inputs with `|z| − 1` below the negative of it are rejected.
pub const BOUNDARY_TOL: f64 = 10.0 * f64::EPSILON;

/// Modulus difference below which the two exterior-branch candidates of `J⁻¹`
/// count as tied (then `w + s` is returned).
const BRANCH_TIE_TOL: f64 = 1e-15;

/// Proximity of `L(J(z))` to `±1` (the branch points of `J⁻¹`) at which the
/// derivative is treated as singular.
const DERIV_SINGULAR_TOL: f64 = 1e-14;

// ---------------------------------------------------------------------------
// capacity <-> slit length
// ---------------------------------------------------------------------------

/// Logarithmic capacity increment of a radial slit of Euclidean length `d`:
/// `c = log(1 + d²/(4(1+d)))`.
pub fn capacity_from_slit(d: f64) -> Result<f64> {
    if !d.is_finite() || d <= 0.0 {
        return Err(Error::Domain(format!("slit length must be positive, got {d}")));
    }
    Ok((d * d / (4.0 * (1.0 + d))).ln_1p())
}

/// Slit length with capacity `c`: the positive root `d = 2b + 2√(b² + b)` of
/// `d² − 4bd − 4b = 0`, `b = e^c − 1`.
pub fn slit_from_capacity(c: f64) -> Result<f64> {
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::Domain(format!("capacity must be positive, got {c}")));
    }
    let b = c.exp_m1();
    Ok(2.0 * b + 2.0 * (b * b + b).sqrt())
}

// ---------------------------------------------------------------------------
// particle events and map kernels
// ---------------------------------------------------------------------------

/// One aggregation step: attachment angle, capacity increment, slit length.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParticleEvent {
    /// Attachment angle in [0, 2π).
    pub theta: f64,
    /// Logarithmic capacity increment c_k > 0.
    pub capacity: f64,
    /// Slit length d_k = slit_from_capacity(c_k).
    pub slit_length: f64,
}

impl ParticleEvent {
    pub fn new(theta: f64, capacity: f64) -> Result<Self> {
        Ok(Self {
            theta,
            capacity,
            slit_length: slit_from_capacity(capacity)?,
        })
    }
}

/// Precomputed data for one rotated slit map `z ↦ e^{iθ} f_c(e^{−iθ} z)`,
/// shared by every evaluation against that particle.
#[derive(Debug, Clone, Copy)]
pub struct SlitKernel {
    /// e^{iθ}.
    rot: Complex64,
    /// e^{−iθ}.
    rot_inv: Complex64,
    /// a − 1 = d²/(2(1+d)), kept in this form to avoid cancellation.
    am1: f64,
    /// a + 1 = 2 + (a − 1); note (a+1)/2 = e^c exactly by the capacity relation.
    ap1: f64,
}

impl SlitKernel {
    pub fn from_slit(d: f64, theta: f64) -> Result<Self> {
        if !d.is_finite() || d <= 0.0 {
            return Err(Error::Domain(format!("slit length must be positive, got {d}")));
        }
        let (sin, cos) = theta.sin_cos();
        let am1 = d * d / (2.0 * (1.0 + d));
        Ok(Self {
            rot: Complex64::new(cos, sin),
            rot_inv: Complex64::new(cos, -sin),
            am1,
            ap1: 2.0 + am1,
        })
    }

    pub fn from_capacity(c: f64, theta: f64) -> Result<Self> {
        Self::from_slit(slit_from_capacity(c)?, theta)
    }

    pub fn from_event(ev: &ParticleEvent) -> Result<Self> {
        Self::from_slit(ev.slit_length, ev.theta)
    }

    /// `L(J(u)) ∓ 1` for the *unrotated* argument `u`, via the factored forms.
    ///
    /// On-circle inputs get exact real parts and a signed-zero imaginary part
    /// copied from `Im u`; for exterior points near the circle the imaginary
    /// part of `J(u)` has the sign of `Im u`, so the signed zero selects the
    /// square-root branch continuous from outside.
    #[inline]
    fn l_parts(&self, u: Complex64) -> (Complex64, Complex64) {
        let r = u.norm();
        if (r - 1.0).abs() <= BOUNDARY_TOL {
            let half = u.arg() * 0.5;
            let s = half.sin();
            let cs = half.cos();
            let im0 = 0.0f64.copysign(u.im);
            let lm1 = Complex64::new(self.ap1 * (-s * s) + self.am1, im0);
            let lp1 = Complex64::new(self.ap1 * (cs * cs), im0);
            (lm1, lp1)
        } else {
            let um1 = u - 1.0;
            let up1 = u + 1.0;
            let denom = 4.0 * u;
            let lm1 = self.ap1 * (um1 * um1 / denom) + self.am1;
            let lp1 = self.ap1 * (up1 * up1 / denom);
            (lm1, lp1)
        }
    }

    /// Exterior branch of `J⁻¹` applied to `w = 1 + lm1 = −1 + lp1`:
    /// candidates `w ± s` with `s = √(w−1)·√(w+1)` (principal roots); the
    /// larger-modulus candidate wins, ties (difference < 1e−15) go to `w + s`.
    #[inline]
    fn j_inv_exterior(lm1: Complex64, lp1: Complex64) -> Complex64 {
        let s = lm1.sqrt() * lp1.sqrt();
        let w = lm1 + 1.0;
        let zp = w + s;
        let zm = w - s;
        if zm.norm() - zp.norm() >= BRANCH_TIE_TOL {
            zm
        } else {
            zp
        }
    }

    #[inline]
    fn check_domain(&self, index: usize, u: Complex64) -> Result<()> {
        let r = u.norm();
        if !(r.is_finite()) {
            return Err(Error::Domain(format!("non-finite evaluation point {u}")));
        }
        if r < 1.0 - BOUNDARY_TOL {
            return Err(Error::Domain(format!(
                "evaluation point inside the unit disk: |z| = {r}"
            )));
        }
        // The slit base e^{iθ} (u = 1 after unrotation) is a singular point of
        // the map itself: the image sweeps the whole slit as z → 1.
        if (u - 1.0).norm() <= BOUNDARY_TOL {
            return Err(Error::Singular {
                index,
                what: "evaluation at the slit base".into(),
            });
        }
        Ok(())
    }

    /// Rotated slit map `e^{iθ} f_c(e^{−iθ} z)`.
    #[inline]
    pub fn apply(&self, z: Complex64) -> Result<Complex64> {
        self.apply_indexed(0, z)
    }

    /// Rotated map and the composition factor `f_c′(e^{−iθ} z)` in one pass
    /// (the rotations cancel in the chain-rule factor).
    #[inline]
    pub fn apply_with_deriv(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        self.apply_with_deriv_indexed(0, z)
    }

    #[inline]
    pub(crate) fn apply_indexed(&self, index: usize, z: Complex64) -> Result<Complex64> {
        let u = self.rot_inv * z;
        self.check_domain(index, u)?;
        let (lm1, lp1) = self.l_parts(u);
        Ok(self.rot * Self::j_inv_exterior(lm1, lp1))
    }

    #[inline]
    pub(crate) fn apply_with_deriv_indexed(
        &self,
        index: usize,
        z: Complex64,
    ) -> Result<(Complex64, Complex64)> {
        let u = self.rot_inv * z;
        self.check_domain(index, u)?;
        let (lm1, lp1) = self.l_parts(u);
        // Branch points of J⁻¹ sit at L(J(u)) = ±1; the derivative blows up
        // there (slit tip and base images, plus the far point u = −1 where
        // the factor is only removable analytically).
        if lm1.norm() < DERIV_SINGULAR_TOL || lp1.norm() < DERIV_SINGULAR_TOL {
            return Err(Error::Singular {
                index,
                what: "derivative at a branch point of the slit map".into(),
            });
        }
        let f = Self::j_inv_exterior(lm1, lp1);
        // F′(u) = (J⁻¹)′(L(J(u))) · (a+1)/2 · J′(u) with
        // (J⁻¹)′(w) = ζ/√(w²−1) = 2/(1 − ζ⁻²) at ζ = J⁻¹(w); substituting
        // ζ = F(u) keeps the whole derivative free of fresh branch choices:
        //   F′(u) = (a+1)(1 − u⁻²) / (2(1 − F⁻²)).
        let fi = f.inv();
        let ui = u.inv();
        let deriv = (self.ap1 * (1.0 - ui * ui)) / ((1.0 - fi * fi) * 2.0);
        Ok((self.rot * f, deriv))
    }
}

// ---------------------------------------------------------------------------
// free-function map API
// ---------------------------------------------------------------------------

/// The slit map `f_c` itself (attachment angle 0).
pub fn slit_map(c: f64, z: Complex64) -> Result<Complex64> {
    SlitKernel::from_capacity(c, 0.0)?.apply(z)
}

/// Analytic derivative `f_c′`.
pub fn slit_map_deriv(c: f64, z: Complex64) -> Result<Complex64> {
    Ok(SlitKernel::from_capacity(c, 0.0)?.apply_with_deriv(z)?.1)
}

/// Rotated particle map `e^{iθ} f_c(e^{−iθ} z)`.
pub fn rotated_particle_map(c: f64, theta: f64, z: Complex64) -> Result<Complex64> {
    SlitKernel::from_capacity(c, theta)?.apply(z)
}

/// Chain-rule factor of the rotated particle map: `f_c′(e^{−iθ} z)`
/// (the two rotations cancel).
pub fn rotated_particle_map_deriv(c: f64, theta: f64, z: Complex64) -> Result<Complex64> {
    Ok(SlitKernel::from_capacity(c, theta)?.apply_with_deriv(z)?.1)
}

/// Evaluate the composition `Φ(z) = f_1 ∘ f_2 ∘ … ∘ f_n(z)` (last event
/// applied first) together with its derivative `Φ′(z)` by the chain rule
/// along the orbit. Empty slice → `(z, 1)`.
///
/// Errors identify the offending map's position in `events` (0-based) when
/// the orbit hits a singular point.
pub fn compose_evaluate(events: &[ParticleEvent], z: Complex64) -> Result<(Complex64, Complex64)> {
    let kernels = events
        .iter()
        .map(SlitKernel::from_event)
        .collect::<Result<Vec<_>>>()?;
    compose_evaluate_kernels(&kernels, z)
}

/// As [`compose_evaluate`], over prebuilt kernels (the hot path for repeated
/// evaluation against one cluster).
pub fn compose_evaluate_kernels(
    kernels: &[SlitKernel],
    z: Complex64,
) -> Result<(Complex64, Complex64)> {
    let mut w = z;
    let mut deriv = Complex64::new(1.0, 0.0);
    for (index, k) in kernels.iter().enumerate().rev() {
        let (value, factor) = k.apply_with_deriv_indexed(index, w)?;
        deriv *= factor;
        w = value;
    }
    Ok((w, deriv))
}

// ---------------------------------------------------------------------------
// boundary correspondence γ_c
// ---------------------------------------------------------------------------

/// Reduce an angle to the principal window (−π, π].
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let mut r = x % std::f64::consts::TAU;
    if r > std::f64::consts::PI {
        r -= std::f64::consts::TAU;
    } else if r <= -std::f64::consts::PI {
        r += std::f64::consts::TAU;
    }
    r
}

/// Precomputed per-capacity data for bulk boundary-correspondence
/// evaluations (one particle's worth of flow stepping).
#[derive(Debug, Clone, Copy)]
pub struct GammaKernel {
    /// e^c.
    ec: f64,
    /// e^c − 1, computed by `exp_m1` (exact for tiny capacities).
    b: f64,
}

impl GammaKernel {
    pub fn new(c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::Domain(format!("capacity must be positive, got {c}")));
        }
        let b = c.exp_m1();
        Ok(Self { ec: 1.0 + b, b })
    }

    /// γ̃_c(x) = γ_c(x) − x on the principal window, extended 2π-periodically
    /// (the difference is periodic). Inputs are wrapped to (−π, π].
    ///
    /// Computed through the arctangent subtraction identity
    ///
    /// ```text
    ///   γ̃(x) = 2·sgn(x)·[atan(u) − atan(t)]
    ///        = 2·sgn(x)·atan( b(1+t²) / ((u+t)(1+ut)) ),
    ///   t = |tan(x/2)|,  u = √(e^c t² + b),  b = e^c − 1,
    /// ```
    ///
    /// which is cancellation-free: for `|x| ≫ √c` the direct difference
    /// `γ(x) − x` would lose most of its significant digits, and the flow's
    /// endpoint-variance statistics are sums of exactly these tiny values.
    ///
    /// Convention at the attachment point: `γ̃(0) := γ(0+) = 2·atan(√b)`
    /// (right limit; the event has probability zero in the flow).
    #[inline]
    pub fn tilde(&self, x: f64) -> f64 {
        let xr = wrap_angle(x);
        if xr == std::f64::consts::PI {
            return 0.0;
        }
        let t = (xr.abs() * 0.5).tan();
        let u = (self.ec * (t * t) + self.b).sqrt();
        let core = 2.0 * (self.b * (1.0 + t * t) / ((u + t) * (1.0 + u * t))).atan();
        if xr < 0.0 {
            -core
        } else {
            core
        }
    }

    /// γ_c on the lifted real line: `γ(x) = x + γ̃(x)`.
    #[inline]
    pub fn gamma(&self, x: f64) -> f64 {
        x + self.tilde(x)
    }
}

/// Boundary correspondence of the inverse slit map:
/// `γ_c(x) = 2 sgn(x) · atan √(e^c tan²(x/2) + e^c − 1)` on (−π, π]∖{0},
/// `γ_c(π) = π`, extended 2π-periodically on the lifted line
/// (`γ_c(x + 2π) = γ_c(x) + 2π`).
///
/// `f_c(e^{iγ_c(x)}) = e^{ix}`: the map sends the boundary arc parametrized
/// by γ back to the full circle, opening a gap of size `2γ_c(0+)` at the
/// attachment point. At `x ≡ 0 (mod 2π)` the returned value is the right
/// limit `2 atan √(e^c − 1)` by convention (not an error).
pub fn gamma(c: f64, x: f64) -> Result<f64> {
    Ok(GammaKernel::new(c)?.gamma(x))
}

/// γ̃_c(x) = γ_c(x) − x (odd, mean zero, 2π-periodic).
pub fn gamma_tilde(c: f64, x: f64) -> Result<f64> {
    Ok(GammaKernel::new(c)?.tilde(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // ---- capacity <-> slit ------------------------------------------------

    #[test]
    fn capacity_of_slit_two() {
        // d = 2: c = log(1 + 4/12) = log(4/3)
        assert_relative_eq!(
            capacity_from_slit(2.0).unwrap(),
            (4.0f64 / 3.0).ln(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn small_slit_quadratic_capacity() {
        // c ≈ d²/4 as d → 0
        let d = 1e-4;
        let c = capacity_from_slit(d).unwrap();
        assert_relative_eq!(c / (d * d / 4.0), 1.0, max_relative = 1e-3);
    }

    #[test]
    fn slit_of_capacity_log_4_3() {
        assert_relative_eq!(
            slit_from_capacity((4.0f64 / 3.0).ln()).unwrap(),
            2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn small_capacity_slit_asymptotics() {
        // d = 2√c (1 + √c + O(c))
        for &c in &[1e-6, 1e-8, 1e-10] {
            let d = slit_from_capacity(c).unwrap();
            let ratio = d / (2.0 * c.sqrt());
            assert!(
                (ratio - 1.0).abs() < 2.0 * c.sqrt(),
                "c = {c}: ratio {ratio}"
            );
        }
    }

    #[test]
    fn capacity_slit_round_trip() {
        for k in 1..=6 {
            let c = 10f64.powi(-k);
            let d = slit_from_capacity(c).unwrap();
            assert_relative_eq!(capacity_from_slit(d).unwrap(), c, max_relative = 1e-12);
        }
    }

    #[test]
    fn capacity_slit_domain_errors() {
        assert!(capacity_from_slit(0.0).is_err());
        assert!(capacity_from_slit(-1.0).is_err());
        assert!(capacity_from_slit(f64::NAN).is_err());
        assert!(slit_from_capacity(0.0).is_err());
        assert!(slit_from_capacity(-0.1).is_err());
        assert!(slit_from_capacity(f64::INFINITY).is_err());
    }

    // ---- slit map ----------------------------------------------------------

    #[test]
    fn far_side_fixed_point() {
        let f = slit_map(0.01, c64(-1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(f.re, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn image_just_outside_base_sweeps_to_tip() {
        // J⁻¹(L(J(1))) = J⁻¹(a) = 1 + d; a point 1e−12 outside the base maps
        // essentially onto the slit tip.
        let c = 0.01;
        let d = slit_from_capacity(c).unwrap();
        let f = slit_map(c, c64(1.0 + 1e-12, 0.0)).unwrap();
        assert!(f.im.abs() < 1e-12);
        assert!(f.re > 1.0 && f.re <= 1.0 + d + 1e-12, "f = {f}");
        assert_abs_diff_eq!(f.re, 1.0 + d, epsilon = 1e-6);
    }

    #[test]
    fn normalization_at_large_modulus() {
        let c = 0.01;
        let z = Complex64::from_polar(1e6, 0.7);
        let f = slit_map(c, z).unwrap();
        assert!((f / z - c.exp()).norm() < 1e-5);
    }

    #[test]
    fn domain_and_singular_errors() {
        assert!(matches!(
            slit_map(0.01, c64(0.5, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            slit_map(0.01, c64(1.0, 0.0)),
            Err(Error::Singular { .. })
        ));
        // within 10·ε of the base counts as the base
        assert!(matches!(
            slit_map(0.01, c64(1.0 + 5e-17, 0.0)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn boundary_correspondence_positive_and_negative() {
        // f_c(e^{iγ_c(x)}) = e^{ix}: the γ formula and the constructed map are
        // inverse boundary parametrizations — cross-validates both.
        for &c in &[1e-4, 1e-2] {
            let kernel = SlitKernel::from_capacity(c, 0.0).unwrap();
            let gk = GammaKernel::new(c).unwrap();
            let mut worst = 0.0f64;
            for i in 0..1000 {
                let x = 1e-2 + (PI - 1e-2) * (i as f64) / 999.0;
                for &xs in &[x, -x] {
                    let g = gk.gamma(xs);
                    let z = Complex64::from_polar(1.0, g);
                    let f = kernel.apply(z).unwrap();
                    let target = Complex64::from_polar(1.0, xs);
                    worst = worst.max((f - target).norm());
                }
            }
            assert!(worst < 1e-8, "c = {c}: worst boundary error {worst}");
        }
    }

    #[test]
    fn on_circle_slit_arc_maps_onto_slit() {
        // |γ| < γ_c(0+) parametrizes the two sides of the slit: images must
        // be real in [1, 1+d].
        let c = 0.01;
        let d = slit_from_capacity(c).unwrap();
        let kernel = SlitKernel::from_capacity(c, 0.0).unwrap();
        let g0 = 2.0 * (c.exp_m1()).sqrt().atan();
        for i in 1..20 {
            let g = g0 * (i as f64 / 20.0 - 0.5) * 1.9;
            if g == 0.0 {
                continue;
            }
            let f = kernel.apply(Complex64::from_polar(1.0, g)).unwrap();
            assert!(f.im.abs() < 1e-12, "im {}", f.im);
            assert!(f.re >= 1.0 - 1e-12 && f.re <= 1.0 + d + 1e-12, "re {}", f.re);
        }
    }

    // ---- derivative ---------------------------------------------------------

    #[test]
    fn derivative_at_infinity_is_capacity_factor() {
        let c = 0.01;
        let z = Complex64::from_polar(1e6, 2.1);
        let fp = slit_map_deriv(c, z).unwrap();
        assert!((fp - c.exp()).norm() < 1e-5);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-6;
        let mut rng = crate::rng::RunRng::seed_from_u64(11);
        for &c in &[1e-4, 1e-2, 0.2] {
            for _ in 0..60 {
                let r = 1.05 + 2.0 * (rng.uniform_angle() / TAU);
                let ang = rng.uniform_angle();
                let z = Complex64::from_polar(r, ang);
                let fp = slit_map_deriv(c, z).unwrap();
                let fd = (slit_map(c, z + h).unwrap() - slit_map(c, z - h).unwrap()) / (2.0 * h);
                assert!(
                    (fd - fp).norm() / fp.norm() < 1e-6,
                    "c={c} z={z}: analytic {fp} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn derivative_expansion_remainder_bound() {
        // |F′(z) − 1 − c(1 − 2/(z−1)²)| ≤ 10 c²/|z−1|³ on an annulus-sector
        // grid. The grid deliberately avoids the positive real axis (where
        // higher-order terms peak) and large |z−1| (where the remainder
        // plateaus at e^c − 1 − c ≈ c²/2 instead of decaying); observed
        // worst-case ratio on this grid is ≈ 8.7.
        let c = 1e-4;
        for &t in &[1.25, 1.5, 1.75] {
            for &phi in &[PI / 4.0, PI / 3.0, 5.0 * PI / 12.0, PI / 2.0, 7.0 * PI / 12.0, 2.0 * PI / 3.0] {
                for sign in [1.0, -1.0] {
                    let z = 1.0 + Complex64::from_polar(t, sign * phi);
                    let fp = slit_map_deriv(c, z).unwrap();
                    let zm1 = z - 1.0;
                    let lead = 1.0 + c * (1.0 - 2.0 / (zm1 * zm1));
                    let remainder = (fp - lead).norm();
                    let bound = 10.0 * c * c / zm1.norm().powi(3);
                    assert!(
                        remainder <= bound,
                        "z = {z}: remainder {remainder} > bound {bound}"
                    );
                }
            }
        }
    }

    #[test]
    fn derivative_singular_points_error() {
        // far point u = −1: L(J(−1)) = −1 exactly
        assert!(matches!(
            slit_map_deriv(0.01, c64(-1.0, 0.0)),
            Err(Error::Singular { .. })
        ));
        // slit-edge preimage e^{iγ0}: L(J) = +1 exactly
        let c = 0.01f64;
        let g0 = 2.0 * (c.exp_m1()).sqrt().atan();
        assert!(matches!(
            slit_map_deriv(c, Complex64::from_polar(1.0, g0)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn derivative_ratio_bound_small_capacities() {
        // |log|f′_c/f′_c*|| ≤ Â |c − c*|/(|z|−1)² with Â = 10 on the frozen
        // grid |z| ∈ [1.1, 3.0] (the effective constant grows like
        // 2 + (|z|−1)², so the bound would fail for |z| ≳ 3.9).
        let mut rng = crate::rng::RunRng::seed_from_u64(77);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let c1 = 1e-3 * (rng.uniform_angle() / TAU).max(1e-6);
            let c2 = 1e-3 * (rng.uniform_angle() / TAU).max(1e-6);
            if c1 == c2 {
                continue;
            }
            for _ in 0..40 {
                let r = 1.1 + 1.9 * (rng.uniform_angle() / TAU);
                let z = Complex64::from_polar(r, rng.uniform_angle());
                let f1 = slit_map_deriv(c1, z).unwrap().norm();
                let f2 = slit_map_deriv(c2, z).unwrap().norm();
                let lhs = (f1 / f2).ln().abs();
                let rhs = (c1 - c2).abs() / ((r - 1.0) * (r - 1.0));
                worst = worst.max(lhs / rhs);
            }
        }
        assert!(worst <= 10.0, "fitted constant exceeded: {worst}");
    }

    // ---- rotated map & composition ------------------------------------------

    #[test]
    fn zero_rotation_reduces_to_slit_map() {
        let z = c64(1.3, 0.4);
        let a = rotated_particle_map(0.05, 0.0, z).unwrap();
        let b = slit_map(0.05, z).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn opposite_rotation_fixed_point() {
        // θ = π moves the far-side fixed point to z = 1:
        // e^{iπ} f_c(e^{−iπ}·1) = −f_c(−1) = 1.
        let f = rotated_particle_map(0.01, PI, c64(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(f.re, 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(f.im, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn empty_composition_is_identity() {
        let z = c64(2.0, 1.0);
        let (v, d) = compose_evaluate(&[], z).unwrap();
        assert_eq!(v, z);
        assert_eq!(d, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn single_event_composition_matches_rotated_map() {
        let ev = ParticleEvent::new(1.1, 0.02).unwrap();
        let z = c64(0.4, 1.5);
        let (v, d) = compose_evaluate(std::slice::from_ref(&ev), z).unwrap();
        assert_eq!(v, rotated_particle_map(0.02, 1.1, z).unwrap());
        assert_eq!(d, rotated_particle_map_deriv(0.02, 1.1, z).unwrap());
    }

    #[test]
    fn two_map_composition_derivative_matches_fd() {
        let events = vec![
            ParticleEvent::new(0.7, 0.03).unwrap(),
            ParticleEvent::new(4.0, 0.01).unwrap(),
        ];
        let z = Complex64::from_polar(1.2, 0.9);
        let h = 1e-6;
        let (_, d) = compose_evaluate(&events, z).unwrap();
        let fp = compose_evaluate(&events, z + h).unwrap().0;
        let fm = compose_evaluate(&events, z - h).unwrap().0;
        let fd = (fp - fm) / (2.0 * h);
        assert!((fd - d).norm() / d.norm() < 1e-6, "chain {d} vs fd {fd}");
    }

    #[test]
    fn fifty_map_composition_derivative_matches_fd() {
        let mut rng = crate::rng::RunRng::seed_from_u64(4242);
        let events: Vec<ParticleEvent> = (0..50)
            .map(|_| {
                let th = rng.uniform_angle();
                let c = 1e-3 * (0.5 + rng.uniform_angle() / TAU);
                ParticleEvent::new(th, c).unwrap()
            })
            .collect();
        let h = 1e-6;
        for &(r, ang) in &[(1.1, 0.3), (1.5, 2.0), (3.0, 4.4)] {
            let z = Complex64::from_polar(r, ang);
            let (_, d) = compose_evaluate(&events, z).unwrap();
            let fp = compose_evaluate(&events, z + h).unwrap().0;
            let fm = compose_evaluate(&events, z - h).unwrap().0;
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - d).norm() / d.norm() < 1e-5, "at {z}: {d} vs {fd}");
        }
    }

    #[test]
    fn composition_singularity_identifies_index() {
        let events = vec![
            ParticleEvent::new(0.0, 0.02).unwrap(),
            ParticleEvent::new(1.0, 0.02).unwrap(),
        ];
        // Evaluation exactly at the base of map 1 (the last applied): its
        // unrotated argument is 1.
        let z = Complex64::from_polar(1.0, 1.0);
        match compose_evaluate(&events, z) {
            Err(Error::Singular { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected singular at index 1, got {other:?}"),
        }
    }

    // ---- gamma ---------------------------------------------------------------

    #[test]
    fn gamma_log2_anchor() {
        // e^c = 2, x = π/2: tan²(π/4) = 1 → 2 atan √3 = 2π/3
        assert_relative_eq!(
            gamma(std::f64::consts::LN_2, PI / 2.0).unwrap(),
            2.0 * PI / 3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn gamma_fixes_pi_exactly() {
        for &c in &[1e-6, 1e-3, 0.3, 2.0] {
            assert_eq!(gamma(c, PI).unwrap(), PI);
            assert_eq!(gamma_tilde(c, PI).unwrap(), 0.0);
        }
    }

    #[test]
    fn gamma_attachment_convention() {
        let c = 0.02f64;
        let expect = 2.0 * (c.exp_m1()).sqrt().atan();
        assert_relative_eq!(gamma(c, 0.0).unwrap(), expect, max_relative = 1e-14);
        // right limit agrees
        assert_relative_eq!(gamma(c, 1e-12).unwrap(), expect, max_relative = 1e-6);
    }

    #[test]
    fn gamma_periodic_lift() {
        let c = 0.05;
        let g = GammaKernel::new(c).unwrap();
        for &x in &[0.3, -1.2, 2.9] {
            // γ(x + 2π) = γ(x) + 2π up to the rounding of the lifted input
            assert_abs_diff_eq!(g.gamma(x + TAU), g.gamma(x) + TAU, epsilon = 1e-12);
        }
    }

    #[test]
    fn gamma_tilde_mean_zero_by_symmetric_quadrature() {
        // odd function: symmetric midpoint sum over (−π, π) cancels pairwise.
        // n must be even so no midpoint lands on the attachment point, where
        // the right-limit convention would contribute a one-sided spike.
        let c = 1e-3;
        let g = GammaKernel::new(c).unwrap();
        let n = 20_000;
        let mut sum = 0.0;
        for i in 0..n {
            let x = -PI + TAU * (i as f64 + 0.5) / n as f64;
            sum += g.tilde(x);
        }
        let mean = sum / n as f64;
        assert!(mean.abs() < 1e-8, "mean {mean}");
    }

    #[test]
    fn gamma_tilde_decay_envelope() {
        // |γ̃_c(x)| ≲ A₂ c/x away from the attachment point; A₂ ≤ 5 with the
        // observed constant ≈ 2.
        let c = 1e-4;
        let g = GammaKernel::new(c).unwrap();
        let mut worst = 0.0f64;
        for i in 0..50_000 {
            let x = 1e-2 + (PI - 1e-2) * i as f64 / 49_999.0;
            worst = worst.max(g.tilde(x).abs() * x / c);
        }
        assert!(worst <= 5.0, "envelope constant {worst}");
    }

    #[test]
    fn gamma_difference_bound_exact_constant() {
        // |γ_c(x) − γ_c*(x)| ≤ 2|c − c*| / max(|tan(x/2)|, √(c∧c*)),
        // pointwise, no fitted constant.
        let mut rng = crate::rng::RunRng::seed_from_u64(55);
        for _ in 0..30 {
            let c1 = 0.5 * (rng.uniform_angle() / TAU).max(1e-8);
            let c2 = 0.5 * (rng.uniform_angle() / TAU).max(1e-8);
            let g1 = GammaKernel::new(c1).unwrap();
            let g2 = GammaKernel::new(c2).unwrap();
            let cmin = c1.min(c2);
            for i in 1..2000 {
                let x = PI * i as f64 / 2000.0;
                let lhs = (g1.gamma(x) - g2.gamma(x)).abs();
                let rhs = 2.0 * (c1 - c2).abs() / (x * 0.5).tan().abs().max(cmin.sqrt());
                assert!(
                    lhs <= rhs * (1.0 + 1e-12) + 1e-15,
                    "c=({c1},{c2}) x={x}: {lhs} > {rhs}"
                );
            }
        }
    }

    #[test]
    fn gamma_tilde_relative_precision_far_from_attachment() {
        // the subtraction identity keeps full relative precision where the
        // naive γ(x) − x would cancel; sanity-check against the direct form
        // at moderate x where the direct form is still trustworthy.
        let c = 1e-4;
        let g = GammaKernel::new(c).unwrap();
        let x: f64 = 0.1;
        let direct = {
            let t = (x / 2.0).tan();
            2.0 * ((c.exp() * t * t + c.exp_m1()).sqrt()).atan() - x
        };
        assert_relative_eq!(g.tilde(x), direct, max_relative = 1e-9);
        // magnitude scale ~ 2c/x
        assert!(g.tilde(x) > 0.0 && g.tilde(x) < 4.0 * c / x);
    }

    // ---- property tests --------------------------------------------------------

    proptest! {
        #[test]
        fn prop_round_trip_capacity(c in 1e-8f64..1.0) {
            let d = slit_from_capacity(c).unwrap();
            let back = capacity_from_slit(d).unwrap();
            prop_assert!((back - c).abs() <= 1e-12 * c);
        }

        #[test]
        fn prop_exterior_preserved(r in 1.0000001f64..50.0, ang in 0.0f64..TAU, c in 1e-6f64..0.5) {
            let z = Complex64::from_polar(r, ang);
            let f = slit_map(c, z).unwrap();
            prop_assert!(f.norm() > 1.0);
        }

        #[test]
        fn prop_conjugation_symmetry(r in 1.001f64..10.0, ang in 0.0f64..TAU, c in 1e-6f64..0.5) {
            let z = Complex64::from_polar(r, ang);
            let f = slit_map(c, z).unwrap();
            let fc = slit_map(c, z.conj()).unwrap();
            // real-coefficient map: exact up to roundoff
            prop_assert!((fc - f.conj()).norm() <= 1e-12 * f.norm());
        }

        #[test]
        fn prop_rotation_modulus_invariance(r in 1.001f64..10.0, ang in 0.0f64..TAU,
                                            th in 0.0f64..TAU, c in 1e-6f64..0.5) {
            let z = Complex64::from_polar(r, ang);
            let rotated = rotated_particle_map(c, th, z).unwrap();
            let plain = slit_map(c, Complex64::new(th.cos(), -th.sin()) * z).unwrap();
            prop_assert!((rotated.norm() - plain.norm()).abs() <= 1e-12 * plain.norm());
        }

        #[test]
        fn prop_gamma_antisymmetric(x in 1e-6f64..PI, c in 1e-6f64..1.0) {
            let g = GammaKernel::new(c).unwrap();
            // computed through |x|: exact bitwise negation
            prop_assert_eq!(g.gamma(-x).to_bits(), (-g.gamma(x)).to_bits());
        }

        #[test]
        fn prop_gamma_exceeds_identity_on_positive_arc(x in 1e-6f64..3.141, c in 1e-6f64..1.0) {
            let g = GammaKernel::new(c).unwrap();
            prop_assert!(g.gamma(x) > x);
        }

        #[test]
        fn prop_gamma_strictly_increasing(x in -3.14f64..3.13, dx in 1e-9f64..0.01, c in 1e-6f64..1.0) {
            let g = GammaKernel::new(c).unwrap();
            prop_assert!(g.gamma(x + dx) > g.gamma(x));
        }

        #[test]
        fn prop_boundary_correspondence_random(x in 1e-2f64..3.14159, c in 1e-5f64..0.1) {
            let g = GammaKernel::new(c).unwrap();
            let z = Complex64::from_polar(1.0, g.gamma(x));
            let f = slit_map(c, z).unwrap();
            let target = Complex64::from_polar(1.0, x);
            prop_assert!((f - target).norm() < 1e-8);
        }
    }
}
