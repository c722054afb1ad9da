//! Deterministic SVG rendering of clusters and boundary-flow fans.
//!
//! Particle `k` occupies the region the cluster map of the first `k−1`
//! particles assigns to its slit, so it is drawn as the polyline image of
//! sampled points on `(1, 1+d_k]·e^{iθ_k}` under that prefix composition —
//! later particles never move it. Output is plain SVG 1.1 assembled from
//! fixed-format strings: identical inputs yield byte-identical files.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::flow::{default_coalescence_tol, evolve_tracers};
use crate::growth::ClusterState;
use crate::rng::RunRng;

/// Number of bins in the final-gap histogram attached to flow renders.
pub const GAP_HISTOGRAM_BINS: usize = 36;

/// Visual parameters for both render paths.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RenderStyle {
    /// Image width in pixels.
    pub width: u32,
    /// Image height in pixels.
    pub height: u32,
    /// Particles per color band.
    pub epoch_size: usize,
    /// Stroke colors cycled per epoch (clusters) or per tracer (flows).
    pub palette: Vec<String>,
    /// Sample points per slit (the boundary sample density).
    pub samples_per_slit: usize,
    /// Stroke width in pixels.
    pub stroke_width: f64,
    /// Above this many particles the render subsamples uniformly.
    pub particle_budget: usize,
    /// Seed of the subsampling draw (recorded in the output metadata).
    pub subsample_seed: u64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            width: 1024,
            height: 1024,
            epoch_size: 2500,
            palette: [
                "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            samples_per_slit: 6,
            stroke_width: 1.0,
            particle_budget: 25_000,
            subsample_seed: 0,
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<()> {
        if self.width < 64 || self.height < 64 {
            return Err(Error::Config(format!(
                "image size {}x{} is below the 64-pixel minimum",
                self.width, self.height
            )));
        }
        if self.epoch_size < 1 {
            return Err(Error::Config("epoch size must be at least 1".into()));
        }
        if self.samples_per_slit < 2 {
            return Err(Error::Config(
                "boundary sample density must be at least 2 per slit".into(),
            ));
        }
        if self.palette.is_empty() {
            return Err(Error::Config("palette must not be empty".into()));
        }
        if !(self.stroke_width > 0.0 && self.stroke_width.is_finite()) {
            return Err(Error::Config("stroke width must be positive".into()));
        }
        if self.particle_budget < 1 {
            return Err(Error::Config("particle budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// A rendered image plus the machine-readable metadata embedded in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered<M> {
    pub svg: String,
    pub meta: M,
}

/// Metadata of a cluster render (also embedded as JSON in the SVG `<desc>`).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClusterRenderMeta {
    pub particles_total: usize,
    pub particles_drawn: usize,
    pub polylines_emitted: usize,
    /// Samples skipped because a prefix map was evaluated at (numerically)
    /// a slit base.
    pub singular_skips: usize,
    /// Present iff the particle budget forced uniform subsampling.
    pub subsample_seed: Option<u64>,
    /// Largest |Φ_{k−1}(sample)| over all drawn samples (world units).
    /// Individual protruding tips push this several percent past the
    /// typical rim; it fixes the viewBox.
    pub max_radius: f64,
    /// Outer radius of the visible rim: median tip radius over the latest
    /// tenth of the drawn particles (0 when nothing is drawn).
    pub rim_radius: f64,
    /// World-to-pixel transform: px = center_x + scale·x, py = center_y − scale·y.
    pub scale: f64,
    pub center_x: f64,
    pub center_y: f64,
}

/// Metadata of a flow render.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FlowRenderMeta {
    pub tracers: usize,
    pub steps: usize,
    /// Histogram of final circular gaps between adjacent tracer angles,
    /// on equal-width bins over [0, 2π]; merged tracers land in bin 0.
    pub gap_histogram: Vec<usize>,
    pub distinct_final_angles: usize,
}

fn fmt_px(v: f64) -> String {
    format!("{v:.3}")
}

fn svg_open(out: &mut String, style: &RenderStyle, title: &str, desc_json: &str) {
    let (w, h) = (style.width, style.height);
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <title>{title}</title>\n<desc>{desc_json}</desc>\n\
         <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n"
    );
}

fn polyline(out: &mut String, points: &[(f64, f64)], color: &str, width: f64) {
    let _ = write!(out, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"");
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{},{}", fmt_px(*x), fmt_px(*y));
    }
    out.push_str("\"/>\n");
}

/// Uniform subsample of `budget` indices from `1..=n`, sorted ascending.
fn subsample_indices(n: usize, budget: usize, seed: u64) -> Vec<usize> {
    let mut rng = RunRng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (1..=n).collect();
    for i in 0..budget {
        let j = i + (rng.next_u64() as usize) % (n - i);
        pool.swap(i, j);
    }
    pool.truncate(budget);
    pool.sort_unstable();
    pool
}

/// Render a grown cluster: unit-circle underlay plus one polyline per drawn
/// particle, colored by arrival epoch. Samples whose prefix evaluation hits
/// a singular point are skipped and counted; polylines with fewer than two
/// surviving points are dropped.
pub fn render_cluster(state: &ClusterState, style: &RenderStyle) -> Result<Rendered<ClusterRenderMeta>> {
    style.validate()?;
    let n = state.len();

    let (drawn, subsample_seed) = if n > style.particle_budget {
        (
            subsample_indices(n, style.particle_budget, style.subsample_seed),
            Some(style.subsample_seed),
        )
    } else {
        ((1..=n).collect(), None)
    };

    // Sample each drawn particle's slit and push it through the prefix map.
    let m = style.samples_per_slit;
    let events = state.events();
    let traced: Vec<(usize, Vec<Complex64>, usize)> = drawn
        .par_iter()
        .map(|&k| -> Result<(usize, Vec<Complex64>, usize)> {
            let ev = &events[k - 1];
            let mut pts = Vec::with_capacity(m);
            let mut skips = 0usize;
            for j in 1..=m {
                let r = 1.0 + ev.slit_length * (j as f64 / m as f64);
                let z = Complex64::from_polar(r, ev.theta);
                match state.evaluate_prefix(k - 1, z) {
                    Ok((w, _deriv)) => pts.push(w),
                    Err(Error::Singular { .. }) => skips += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok((k, pts, skips))
        })
        .collect::<Result<_>>()?;

    let mut max_radius = 0.0f64;
    let mut singular_skips = 0usize;
    for (_, pts, skips) in &traced {
        singular_skips += skips;
        for p in pts {
            max_radius = max_radius.max(p.norm());
        }
    }
    // rim radius: median tip over the latest tenth of the drawn particles
    let rim_radius = {
        let tail = traced.len().div_ceil(10);
        let mut tips: Vec<f64> = traced[traced.len() - tail..]
            .iter()
            .filter_map(|(_, pts, _)| pts.last().map(|p| p.norm()))
            .collect();
        tips.sort_by(f64::total_cmp);
        if tips.is_empty() {
            0.0
        } else {
            tips[tips.len() / 2]
        }
    };

    let extent = max_radius.max(1.0) * 1.05;
    let scale = f64::from(style.width.min(style.height)) / (2.0 * extent);
    let center_x = f64::from(style.width) / 2.0;
    let center_y = f64::from(style.height) / 2.0;
    let to_px = |p: Complex64| (center_x + scale * p.re, center_y - scale * p.im);

    let mut meta = ClusterRenderMeta {
        particles_total: n,
        particles_drawn: drawn.len(),
        polylines_emitted: 0,
        singular_skips,
        subsample_seed,
        max_radius,
        rim_radius,
        scale,
        center_x,
        center_y,
    };
    let mut body = String::new();
    let _ = write!(
        body,
        "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"#999999\" stroke-width=\"{}\"/>\n",
        fmt_px(center_x),
        fmt_px(center_y),
        fmt_px(scale),
        style.stroke_width
    );
    for (k, pts, _) in &traced {
        if pts.len() < 2 {
            continue;
        }
        let epoch = (k - 1) / style.epoch_size;
        let color = &style.palette[epoch % style.palette.len()];
        let px: Vec<(f64, f64)> = pts.iter().map(|&p| to_px(p)).collect();
        polyline(&mut body, &px, color, style.stroke_width);
        meta.polylines_emitted += 1;
    }

    let mut svg = String::new();
    svg_open(
        &mut svg,
        style,
        "cluster",
        &serde_json::to_string(&meta).expect("metadata serializes"),
    );
    svg.push_str(&body);
    svg.push_str("</svg>\n");
    Ok(Rendered { svg, meta })
}

/// Render the boundary flow of a grown cluster as tracer trajectories
/// (lifted angle against particle index). Coalescence makes merged tracers
/// share samples, so surviving gaps appear as fans between trajectory
/// bundles. The final-gap histogram is recorded in the metadata.
pub fn render_flow(
    state: &ClusterState,
    tracer_count: usize,
    sample_stride: usize,
    style: &RenderStyle,
) -> Result<Rendered<FlowRenderMeta>> {
    style.validate()?;
    let n = state.len();

    let mut meta = FlowRenderMeta {
        tracers: tracer_count,
        steps: n,
        gap_histogram: vec![0; GAP_HISTOGRAM_BINS],
        distinct_final_angles: 0,
    };
    let mut body = String::new();

    if tracer_count > 0 && n > 0 {
        let xs: Vec<f64> = (0..tracer_count)
            .map(|i| TAU * i as f64 / tracer_count as f64)
            .collect();
        let tol = default_coalescence_tol(state.params().base_capacity);
        let (paths, _partition) = evolve_tracers(state, 0, n, &xs, tol, sample_stride)?;

        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for path in &paths {
            for s in &path.samples {
                let v = s.value();
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let span = (hi - lo).max(1e-9);
        let pad = 0.04 * f64::from(style.width.min(style.height));
        let x_of = |idx: usize| {
            pad + (f64::from(style.width) - 2.0 * pad) * idx as f64 / n.max(1) as f64
        };
        let y_of =
            |v: f64| pad + (f64::from(style.height) - 2.0 * pad) * (hi - v) / span;

        for (i, path) in paths.iter().enumerate() {
            if path.samples.len() < 2 {
                continue;
            }
            let color = &style.palette[i % style.palette.len()];
            let px: Vec<(f64, f64)> = path
                .samples
                .iter()
                .map(|s| (x_of(s.index), y_of(s.value())))
                .collect();
            polyline(&mut body, &px, color, style.stroke_width);
        }

        // final circular gaps between adjacent tracer angles
        let mut final_angles: Vec<f64> = paths
            .iter()
            .map(|p| p.samples.last().expect("nonempty samples").angle)
            .collect();
        final_angles.sort_by(f64::total_cmp);
        meta.distinct_final_angles = 1 + final_angles
            .windows(2)
            .filter(|w| w[0].to_bits() != w[1].to_bits())
            .count();
        let bin_width = TAU / GAP_HISTOGRAM_BINS as f64;
        for i in 0..final_angles.len() {
            let next = final_angles[(i + 1) % final_angles.len()];
            let gap = (next - final_angles[i]).rem_euclid(TAU);
            let bin = ((gap / bin_width) as usize).min(GAP_HISTOGRAM_BINS - 1);
            meta.gap_histogram[bin] += 1;
        }
    }

    let mut svg = String::new();
    svg_open(
        &mut svg,
        style,
        "boundary flow",
        &serde_json::to_string(&meta).expect("metadata serializes"),
    );
    svg.push_str(&body);
    svg.push_str("</svg>\n");
    Ok(Rendered { svg, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{capacity_from_slit, ParticleEvent, BOUNDARY_TOL};
    use crate::growth::{grow, GrowthParams, Horizon, Regularization, RngSeed};

    fn small_style() -> RenderStyle {
        RenderStyle {
            width: 400,
            height: 400,
            ..RenderStyle::default()
        }
    }

    fn event(theta: f64, capacity: f64) -> ParticleEvent {
        ParticleEvent::new(theta, capacity).unwrap()
    }

    fn state_from(events: Vec<ParticleEvent>) -> ClusterState {
        let params = GrowthParams {
            base_capacity: 0.01,
            alpha: 0.0,
            regularization: Regularization::Starred,
            horizon: Horizon::Particles(events.len()),
        };
        ClusterState::from_events(params, events).unwrap()
    }

    fn extract_polylines(svg: &str) -> Vec<(String, Vec<(f64, f64)>)> {
        let mut out = Vec::new();
        for chunk in svg.split("<polyline ").skip(1) {
            let stroke = chunk.split("stroke=\"").nth(1).unwrap();
            let color = stroke.split('"').next().unwrap().to_string();
            let pts = chunk.split("points=\"").nth(1).unwrap();
            let pts = pts.split('"').next().unwrap();
            let coords = pts
                .split(' ')
                .map(|pair| {
                    let mut it = pair.split(',');
                    (
                        it.next().unwrap().parse::<f64>().unwrap(),
                        it.next().unwrap().parse::<f64>().unwrap(),
                    )
                })
                .collect();
            out.push((color, coords));
        }
        out
    }

    #[test]
    fn empty_cluster_is_circle_only() {
        let rendered = render_cluster(&state_from(vec![]), &small_style()).unwrap();
        assert_eq!(rendered.meta.polylines_emitted, 0);
        assert!(!rendered.svg.contains("<polyline"));
        assert!(rendered.svg.contains("<circle"));
        assert_eq!(rendered.meta.max_radius, 0.0);
    }

    #[test]
    fn single_particle_is_a_radial_slit() {
        let theta = 2.1;
        let c = 0.04;
        let state = state_from(vec![event(theta, c)]);
        let d = state.events()[0].slit_length;
        let rendered = render_cluster(&state, &small_style()).unwrap();
        let meta = &rendered.meta;
        assert_eq!(meta.polylines_emitted, 1);
        let lines = extract_polylines(&rendered.svg);
        assert_eq!(lines.len(), 1);
        for (px, py) in &lines[0].1 {
            let x = (px - meta.center_x) / meta.scale;
            let y = (meta.center_y - py) / meta.scale;
            let r = x.hypot(y);
            let ang = y.atan2(x);
            assert!((ang - theta).abs() < 1e-3, "angle {ang} vs {theta}");
            assert!(r > 1.0 && r <= 1.0 + d + 1e-3, "radius {r}");
        }
        assert!((meta.max_radius - (1.0 + d)).abs() < 1e-12);
        assert_eq!(meta.rim_radius.to_bits(), meta.max_radius.to_bits());
    }

    #[test]
    fn identical_inputs_render_identical_bytes() {
        let params = GrowthParams {
            base_capacity: 2e-3,
            alpha: 1.0,
            regularization: Regularization::Starred,
            horizon: Horizon::Particles(60),
        };
        let state = grow(&params, RngSeed::new(4)).unwrap();
        let a = render_cluster(&state, &small_style()).unwrap();
        let b = render_cluster(&state, &small_style()).unwrap();
        assert_eq!(a.svg, b.svg);
        let fa = render_flow(&state, 12, 5, &small_style()).unwrap();
        let fb = render_flow(&state, 12, 5, &small_style()).unwrap();
        assert_eq!(fa.svg, fb.svg);
    }

    #[test]
    fn epoch_coloring_cycles_through_palette() {
        let events: Vec<ParticleEvent> = (0..10)
            .map(|i| event(0.5 + 0.37 * i as f64, 0.01))
            .collect();
        let state = state_from(events);
        let mut style = small_style();
        style.epoch_size = 3;
        style.palette = vec!["#aaa111".into(), "#bbb222".into(), "#ccc333".into()];
        let rendered = render_cluster(&state, &style).unwrap();
        let lines = extract_polylines(&rendered.svg);
        assert_eq!(lines.len(), 10);
        let expect = |k: usize| &style.palette[((k - 1) / 3) % 3];
        for (k, (color, _)) in lines.iter().enumerate() {
            assert_eq!(color, expect(k + 1), "particle {}", k + 1);
        }
    }

    #[test]
    fn budget_forces_recorded_subsampling() {
        let events: Vec<ParticleEvent> = (0..50)
            .map(|i| event(0.11 * i as f64, 0.005))
            .collect();
        let state = state_from(events);
        let mut style = small_style();
        style.particle_budget = 10;
        style.subsample_seed = 7;
        let a = render_cluster(&state, &style).unwrap();
        assert_eq!(a.meta.particles_drawn, 10);
        assert_eq!(a.meta.particles_total, 50);
        assert_eq!(a.meta.subsample_seed, Some(7));
        assert_eq!(a.meta.polylines_emitted, 10);
        let b = render_cluster(&state, &style).unwrap();
        assert_eq!(a.svg, b.svg);
    }

    #[test]
    fn singular_samples_are_skipped_and_counted() {
        // Particle 2 sits at the same angle as particle 1 with a slit so
        // short that its first sample point lands within the singularity
        // tolerance of particle 1's base.
        let d_tiny = 2.0 * BOUNDARY_TOL;
        let c_tiny = capacity_from_slit(d_tiny).unwrap();
        let state = state_from(vec![event(0.0, 0.01), event(0.0, c_tiny)]);
        let mut style = small_style();
        style.samples_per_slit = 2;
        let rendered = render_cluster(&state, &style).unwrap();
        assert_eq!(rendered.meta.singular_skips, 1);
        // particle 2 has one surviving sample -> no polyline for it
        assert_eq!(rendered.meta.polylines_emitted, 1);
    }

    #[test]
    fn desk_scale_outer_radius_tracks_disk_limit() {
        // starred capacities, α = 1, c = 10⁻³, N = 1000: the cluster fills
        // a disk of radius (1 + αcN)^{1/α} = 2 up to a few percent
        let params = GrowthParams {
            base_capacity: 1e-3,
            alpha: 1.0,
            regularization: Regularization::Starred,
            horizon: Horizon::Particles(1000),
        };
        let state = grow(&params, RngSeed::new(12)).unwrap();
        let rendered = render_cluster(&state, &small_style()).unwrap();
        let r = rendered.meta.rim_radius;
        assert!((r - 2.0).abs() / 2.0 < 0.05, "outer rim radius {r}");
        // stray tips protrude beyond the rim but only by a bounded factor
        let m = rendered.meta.max_radius;
        assert!(m >= r && m < 1.25 * 2.0, "extreme tip radius {m}");
    }

    #[test]
    fn zero_tracers_render_empty_flow() {
        let state = state_from(vec![event(1.0, 0.01)]);
        let rendered = render_flow(&state, 0, 1, &small_style()).unwrap();
        assert!(!rendered.svg.contains("<polyline"));
        assert_eq!(rendered.meta.tracers, 0);
        assert_eq!(rendered.meta.gap_histogram.iter().sum::<usize>(), 0);
    }

    #[test]
    fn flow_gap_histogram_counts_every_tracer() {
        let params = GrowthParams {
            base_capacity: 1e-4,
            alpha: 0.01, // a = 1 in units of √c
            regularization: Regularization::Starred,
            horizon: Horizon::Particles(3000),
        };
        let state = grow(&params, RngSeed::new(8)).unwrap();
        let rendered = render_flow(&state, 8, 100, &small_style()).unwrap();
        assert_eq!(rendered.meta.gap_histogram.iter().sum::<usize>(), 8);
        assert!(rendered.meta.distinct_final_angles >= 1);
        assert!(rendered.meta.distinct_final_angles <= 8);
        // 8 tracers with ≥ 2 samples each were drawn
        assert_eq!(extract_polylines(&rendered.svg).len(), 8);
    }

    #[test]
    fn style_validation_rejects_degenerate_settings() {
        let state = state_from(vec![]);
        for bad in [
            RenderStyle {
                samples_per_slit: 1,
                ..RenderStyle::default()
            },
            RenderStyle {
                epoch_size: 0,
                ..RenderStyle::default()
            },
            RenderStyle {
                palette: vec![],
                ..RenderStyle::default()
            },
            RenderStyle {
                particle_budget: 0,
                ..RenderStyle::default()
            },
            RenderStyle {
                width: 10,
                ..RenderStyle::default()
            },
        ] {
            assert!(render_cluster(&state, &bad).is_err());
        }
    }
}
