//! Boundary flow on the circle: tracer evolution, coalescence, and gap
//! statistics.
//!
//! The boundary correspondence of each particle map pushes angles around the
//! circle: one growth event `(θ_k, c_k)` moves a boundary point `y` to
//! `y + γ̃_{c_k}(y − θ_k)`. Iterating over the event log of a cluster gives
//! the harmonic-measure flow between two time indices, which for small base
//! capacity behaves like a coalescing system of circular Brownian motions
//! after the `t ↦ ⌊t·c^{−3/2}⌋` time change.
//!
//! Positions are represented as an angle in `[0, 2π)` plus an integer
//! winding. Two lifts of the same circle point have identical angle bits, so
//! they receive identical updates forever and their lifted difference is
//! conserved *exactly* — the winding-consistency invariant holds at the bit
//! level, not just within rounding error.

use std::f64::consts::TAU;

use crate::conformal::GammaKernel;
use crate::error::{Error, Result};
use crate::growth::ClusterState;

/// Default coalescence tolerance: one hundredth of the particle scale
/// `d ≍ 2√c`. The discrete flow is injective, so exact meeting never occurs;
/// below particle scale two tracers are dynamically indistinguishable.
pub fn default_coalescence_tol(c: f64) -> f64 {
    1e-2 * c.sqrt()
}

/// Default gap threshold for branch counting: eight grid spacings, which
/// separates surviving macroscopic gaps from grid-scale noise.
pub fn default_gap_threshold(grid_size: usize) -> f64 {
    8.0 * (TAU / grid_size as f64)
}

/// The diffusive time change `t ↦ N_t = ⌊t·c^{−3/2}⌋`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeScale {
    pub c: f64,
}

impl TimeScale {
    pub fn new(c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::Domain(format!("capacity must be positive, got {c}")));
        }
        Ok(Self { c })
    }

    /// Number of growth steps corresponding to rescaled time `t`.
    ///
    /// Values of `t·c^{−3/2}` within a few ulps of an integer are snapped to
    /// it before flooring: decimal parameters like `c = 10⁻⁴` place the real
    /// value `10⁶` one rounding error below the integer, and a bare floor
    /// would be off by one from the intended count.
    pub fn steps(&self, t: f64) -> Result<usize> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Domain(format!(
                "rescaled time must be non-negative, got {t}"
            )));
        }
        let x = t / (self.c * self.c.sqrt());
        let r = x.round();
        let snapped = if (x - r).abs() <= 4.0 * f64::EPSILON * x {
            r
        } else {
            x.floor()
        };
        Ok(snapped as usize)
    }
}

/// A circle position as angle-plus-winding. Lifted value = angle + 2π·winding.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TracerPos {
    angle: f64,
    winding: i64,
}

impl TracerPos {
    fn from_lifted(x: f64) -> Self {
        let w = (x / TAU).floor();
        let mut angle = x - w * TAU;
        let mut winding = w as i64;
        // guard the seam against rounding in the reduction above
        if angle >= TAU {
            angle -= TAU;
            winding += 1;
        } else if angle < 0.0 {
            angle += TAU;
            winding -= 1;
        }
        Self { angle, winding }
    }

    fn advance(&mut self, delta: f64) {
        let mut a = self.angle + delta;
        while a >= TAU {
            a -= TAU;
            self.winding += 1;
        }
        while a < 0.0 {
            a += TAU;
            self.winding -= 1;
        }
        self.angle = a;
    }
}

/// One recorded point of a flow path. `angle`/`winding` are exact: two lifts
/// of the same start point produce bitwise-equal angles and windings offset
/// by the lift count. [`FlowSample::value`] renders the lifted coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub index: usize,
    pub angle: f64,
    pub winding: i64,
}

impl FlowSample {
    pub fn value(&self) -> f64 {
        self.angle + TAU * self.winding as f64
    }
}

/// Trajectory of one boundary point under the flow from `start_index` on.
/// `start_value` is the caller's lifted start coordinate, verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPath {
    pub start_index: usize,
    pub start_value: f64,
    pub samples: Vec<FlowSample>,
}

impl FlowPath {
    /// Final recorded time index.
    pub fn final_index(&self) -> usize {
        self.samples.last().expect("paths hold ≥ 1 sample").index
    }

    /// Final lifted position.
    pub fn final_value(&self) -> f64 {
        self.samples.last().expect("paths hold ≥ 1 sample").value()
    }

    /// Lifted displacement over the whole recorded window.
    pub fn displacement(&self) -> f64 {
        self.final_value() - self.start_value
    }
}

/// Permanent merge of two tracer blocks, identified by the first member of
/// each block at merge time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeEvent {
    pub into: usize,
    pub absorbed: usize,
    pub step: usize,
}

/// Result of coalescing evolution: who merged with whom, when, and the final
/// blocks (original tracer ids, in circular order).
#[derive(Debug, Clone, PartialEq)]
pub struct CoalescencePartition {
    pub start_angles: Vec<f64>,
    pub merges: Vec<MergeEvent>,
    pub blocks: Vec<Vec<usize>>,
}

/// One flow step: `y + γ̃_c(y − θ)`, total on the lifted line (the angle
/// difference is wrapped internally; the attachment point itself uses the
/// right-limit convention).
pub fn flow_step(y: f64, theta: f64, c: f64) -> Result<f64> {
    let kernel = GammaKernel::new(c)?;
    Ok(y + kernel.tilde(y - theta))
}

/// Evolve a single boundary point through events `m+1..=n`, recording every
/// `sample_stride`-th step (plus the start and the endpoint).
pub fn flow_trajectory(
    state: &ClusterState,
    m: usize,
    n: usize,
    x: f64,
    sample_stride: usize,
) -> Result<FlowPath> {
    check_window(state, m, n)?;
    if sample_stride == 0 {
        return Err(Error::Domain("sample stride must be at least 1".into()));
    }
    if !x.is_finite() {
        return Err(Error::Domain(format!("start angle must be finite, got {x}")));
    }
    let mut pos = TracerPos::from_lifted(x);
    let mut samples = Vec::with_capacity((n - m) / sample_stride + 2);
    samples.push(FlowSample {
        index: m,
        angle: pos.angle,
        winding: pos.winding,
    });
    for k in m + 1..=n {
        let ev = state.events()[k - 1];
        let kernel = GammaKernel::new(ev.capacity)?;
        pos.advance(kernel.tilde(pos.angle - ev.theta));
        if (k - m) % sample_stride == 0 || k == n {
            samples.push(FlowSample {
                index: k,
                angle: pos.angle,
                winding: pos.winding,
            });
        }
    }
    Ok(FlowPath {
        start_index: m,
        start_value: x,
        samples,
    })
}

fn check_window(state: &ClusterState, m: usize, n: usize) -> Result<()> {
    if m > n || n > state.len() {
        return Err(Error::Domain(format!(
            "flow window {m}..{n} outside the event log (length {})",
            state.len()
        )));
    }
    Ok(())
}

struct Block {
    pos: TracerPos,
    members: Vec<BlockMember>,
}

struct BlockMember {
    id: usize,
    /// Extra windings relative to the block position (±1 per wrap merge):
    /// all members of a block sit at the same circle angle.
    winding_offset: i64,
}

/// Evolve `xs` (sorted angles in `[0, 2π)`) in lockstep through events
/// `m+1..=n`, permanently merging tracers whose circular separation drops
/// below `coalescence_tol`. Merged tracers are snapped onto their block's
/// position (they were indistinguishable below the tolerance) and share all
/// subsequent updates, so a block costs one map-kernel evaluation per step
/// regardless of its size.
///
/// Paths record every `sample_stride`-th step plus start and endpoint.
pub fn evolve_tracers(
    state: &ClusterState,
    m: usize,
    n: usize,
    xs: &[f64],
    coalescence_tol: f64,
    sample_stride: usize,
) -> Result<(Vec<FlowPath>, CoalescencePartition)> {
    check_window(state, m, n)?;
    if sample_stride == 0 {
        return Err(Error::Domain("sample stride must be at least 1".into()));
    }
    if !coalescence_tol.is_finite() || coalescence_tol <= 0.0 {
        return Err(Error::Domain(format!(
            "coalescence tolerance must be positive, got {coalescence_tol}"
        )));
    }
    if xs.is_empty() {
        return Err(Error::Domain("need at least one tracer".into()));
    }
    for (i, &x) in xs.iter().enumerate() {
        if !(0.0..TAU).contains(&x) {
            return Err(Error::Domain(format!(
                "tracer {i} start angle {x} outside [0, 2π)"
            )));
        }
        if i > 0 && x < xs[i - 1] {
            return Err(Error::Domain("tracer start angles must be sorted".into()));
        }
    }

    let mut blocks: Vec<Block> = xs
        .iter()
        .enumerate()
        .map(|(id, &x)| Block {
            pos: TracerPos {
                angle: x,
                winding: 0,
            },
            members: vec![BlockMember {
                id,
                winding_offset: 0,
            }],
        })
        .collect();
    let mut paths: Vec<FlowPath> = xs
        .iter()
        .map(|&x| FlowPath {
            start_index: m,
            start_value: x,
            samples: vec![FlowSample {
                index: m,
                angle: x,
                winding: 0,
            }],
        })
        .collect();
    let mut merges = Vec::new();

    merge_pass(&mut blocks, m, coalescence_tol, &mut merges);
    for k in m + 1..=n {
        let ev = state.events()[k - 1];
        let kernel = GammaKernel::new(ev.capacity)?;
        for b in blocks.iter_mut() {
            let delta = kernel.tilde(b.pos.angle - ev.theta);
            b.pos.advance(delta);
        }
        merge_pass(&mut blocks, k, coalescence_tol, &mut merges);
        if (k - m) % sample_stride == 0 || k == n {
            for b in &blocks {
                for member in &b.members {
                    paths[member.id].samples.push(FlowSample {
                        index: k,
                        angle: b.pos.angle,
                        winding: b.pos.winding + member.winding_offset,
                    });
                }
            }
        }
    }

    let partition = CoalescencePartition {
        start_angles: xs.to_vec(),
        merges,
        blocks: blocks
            .iter()
            .map(|b| b.members.iter().map(|m| m.id).collect())
            .collect(),
    };
    Ok((paths, partition))
}

/// Merge circularly adjacent blocks closer than `tol`. The block list is in
/// circular order (order preservation keeps it that way); adjacent gaps are
/// measured on the circle, so the pair wrapping the seam is included.
fn merge_pass(blocks: &mut Vec<Block>, step: usize, tol: f64, merges: &mut Vec<MergeEvent>) {
    let mut i = 0;
    while blocks.len() > 1 && i + 1 < blocks.len() {
        let gap = (blocks[i + 1].pos.angle - blocks[i].pos.angle).rem_euclid(TAU);
        if gap < tol {
            absorb(blocks, i, i + 1, step, merges);
        } else {
            i += 1;
        }
    }
    if blocks.len() > 1 {
        let last = blocks.len() - 1;
        let gap = (blocks[0].pos.angle - blocks[last].pos.angle).rem_euclid(TAU);
        if gap < tol {
            absorb(blocks, last, 0, step, merges);
        }
    }
}

fn absorb(
    blocks: &mut Vec<Block>,
    keep: usize,
    gone: usize,
    step: usize,
    merges: &mut Vec<MergeEvent>,
) {
    let gone_block = blocks.remove(gone);
    let keep = if gone < keep { keep - 1 } else { keep };
    let kb = &mut blocks[keep];
    // Winding shift that keeps each absorbed member's lifted value fixed
    // (up to the sub-tolerance snap onto the surviving block's angle).
    let dw = (gone_block.pos.winding - kb.pos.winding)
        + ((gone_block.pos.angle - kb.pos.angle) / TAU).round() as i64;
    merges.push(MergeEvent {
        into: kb.members[0].id,
        absorbed: gone_block.members[0].id,
        step,
    });
    kb.members.extend(gone_block.members.into_iter().map(|m| BlockMember {
        id: m.id,
        winding_offset: m.winding_offset + dw,
    }));
}

/// Unbiased sample variance of lifted endpoint displacements over a family
/// of flow paths sharing one time window.
pub fn diffusivity_estimate(paths: &[FlowPath]) -> Result<f64> {
    if paths.len() < 2 {
        return Err(Error::Domain(format!(
            "variance requires at least 2 runs, got {}",
            paths.len()
        )));
    }
    let s = paths[0].start_index;
    let t = paths[0].final_index();
    for p in paths {
        if p.start_index != s || p.final_index() != t {
            return Err(Error::Domain(
                "all runs must share the same start and end indices".into(),
            ));
        }
    }
    let disp: Vec<f64> = paths.iter().map(FlowPath::displacement).collect();
    let mean = disp.iter().sum::<f64>() / disp.len() as f64;
    let ss = disp.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>();
    Ok(ss / (disp.len() - 1) as f64)
}

/// Count surviving flow branches: evolve `grid_size` uniform tracers from
/// index 0 to `N_t`, then count circular gaps of at least `gap_threshold`
/// between consecutive final positions (minimum one branch). Uses the
/// default coalescence tolerance for the cluster's base capacity.
pub fn branch_count(
    state: &ClusterState,
    grid_size: usize,
    t: f64,
    gap_threshold: f64,
) -> Result<usize> {
    branch_count_with_tol(
        state,
        grid_size,
        t,
        gap_threshold,
        default_coalescence_tol(state.params().base_capacity),
    )
}

/// As [`branch_count`] with an explicit coalescence tolerance (experiments
/// report sensitivity to it).
pub fn branch_count_with_tol(
    state: &ClusterState,
    grid_size: usize,
    t: f64,
    gap_threshold: f64,
    coalescence_tol: f64,
) -> Result<usize> {
    let gaps = branch_gaps_with_tol(state, grid_size, t, gap_threshold, coalescence_tol)?;
    Ok(gaps.len().max(1))
}

/// One detected flow gap: its angular midpoint and its width.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BranchGap {
    /// Midpoint of the gap interval, in [0, 2π).
    pub location: f64,
    /// Circular gap width, ≥ the detection threshold.
    pub size: f64,
}

/// The circular gaps of at least `gap_threshold` between consecutive final
/// tracer positions, in tracer order. [`branch_count_with_tol`] is the
/// length of this list clamped below at one; the locations feed uniformity
/// diagnostics (each surviving gap marks one flow branch).
pub fn branch_gaps_with_tol(
    state: &ClusterState,
    grid_size: usize,
    t: f64,
    gap_threshold: f64,
    coalescence_tol: f64,
) -> Result<Vec<BranchGap>> {
    if grid_size < 8 {
        return Err(Error::Domain(format!(
            "branch counting needs a grid of at least 8 tracers, got {grid_size}"
        )));
    }
    if !gap_threshold.is_finite() || gap_threshold <= 0.0 {
        return Err(Error::Domain(format!(
            "gap threshold must be positive, got {gap_threshold}"
        )));
    }
    let scale = TimeScale::new(state.params().base_capacity)?;
    let n_t = scale.steps(t)?;
    if n_t > state.len() {
        return Err(Error::Domain(format!(
            "time {t} needs {n_t} events but the cluster has {}",
            state.len()
        )));
    }
    let xs: Vec<f64> = (0..grid_size)
        .map(|i| TAU * i as f64 / grid_size as f64)
        .collect();
    let stride = n_t.max(1);
    let (paths, _) = evolve_tracers(state, 0, n_t, &xs, coalescence_tol, stride)?;
    let finals: Vec<f64> = paths
        .iter()
        .map(|p| p.samples.last().expect("nonempty").angle)
        .collect();
    let mut gaps = Vec::new();
    for i in 0..grid_size {
        let gap = (finals[(i + 1) % grid_size] - finals[i]).rem_euclid(TAU);
        if gap >= gap_threshold {
            gaps.push(BranchGap {
                location: (finals[i] + 0.5 * gap).rem_euclid(TAU),
                size: gap,
            });
        }
    }
    Ok(gaps)
}
