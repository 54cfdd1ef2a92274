//! Simulation time grids.
//!
//! Two construction modes: plain uniform, and uniform with geometric
//! refinement into the cells adjacent to singular times (where a pricing
//! denominator vanishes and the equilibrium drift becomes stiff). The
//! refinement ratio is chosen per singularity from the local mean-reversion
//! rate so the explicit drift step stays stable, and the refinement depth
//! scales the last resolved gap like `1/m`, which is what makes
//! bridge-error convergence measurable under grid halving.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest step the refinement will produce.
pub const MIN_STEP: f64 = 1.4901161193847656e-8; // 2^-26
/// Target stability margin: step * local rate stays below this.
const STABILITY_MARGIN: f64 = 1.5;
/// Total gap reduction of the refined cell (2^-12 for ratio 1/2).
const DEPTH_FACTOR: f64 = 4096.0;

/// A refinement instruction around one singular time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineMark {
    /// The singular time (must lie in `(0, 1]`).
    pub time: f64,
    /// Local mean-reversion rate `kappa` approaching from the left:
    /// step sizes contract so that `step * kappa / gap <= margin`.
    pub rate_left: f64,
    /// Rate on the right side (interval restart layer); `None` for the
    /// terminal time or when no restart occurs.
    pub rate_right: Option<f64>,
}

impl RefineMark {
    pub fn terminal(rate: f64) -> Self {
        RefineMark { time: 1.0, rate_left: rate, rate_right: None }
    }
}

fn ratio_for(rate: f64) -> f64 {
    // step_j = (1 - ratio) * gap_j and D ~ |D'| * gap, so stability wants
    // (1 - ratio) * rate <= margin.
    let rate = rate.clamp(1e-2, 1e9);
    (1.0 - STABILITY_MARGIN / rate).clamp(0.5, 0.999)
}

/// Geometric node family approaching `t` from one side: covers the whole
/// stiff region (`step * rate / gap` bounded), not just the adjacent cell,
/// and bottoms out at `cell / DEPTH_FACTOR` so the deepest resolved gap
/// scales with the base resolution.
fn push_cascade(out: &mut Vec<f64>, t: f64, dir: f64, cell: f64, rate: f64, span_cap: f64) {
    let rate = rate.clamp(1e-2, 1e9);
    let ratio = ratio_for(rate);
    let floor = (cell / DEPTH_FACTOR).max(MIN_STEP);
    let u_far = (cell * (0.75 * rate).max(1.0)).min(span_cap.max(cell));
    let mut u = u_far;
    while u > floor {
        out.push(t + dir * u);
        u *= ratio;
    }
}

/// Strictly increasing node times `0 = s_0 < ... < s_m = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `m` cells (`m + 1` nodes).
    pub fn uniform(m: usize) -> Result<Self> {
        Self::uniform_with_marks(m, &[])
    }

    /// Uniform grid that additionally contains every mark as a node.
    pub fn uniform_with_marks(m: usize, marks: &[f64]) -> Result<Self> {
        if m < 2 {
            return Err(Error::domain("grid needs at least 2 cells"));
        }
        let mut nodes: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
        nodes.extend(marks.iter().copied());
        Self::from_nodes(nodes)
    }

    /// Uniform grid refined geometrically towards each singular time.
    ///
    /// `extra_marks` are plain nodes (probe times, partition breakpoints)
    /// inserted without refinement.
    pub fn geometric(m: usize, refine: &[RefineMark], extra_marks: &[f64]) -> Result<Self> {
        if m < 2 {
            return Err(Error::domain("grid needs at least 2 cells"));
        }
        let mut nodes: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
        nodes.extend(extra_marks.iter().copied());
        for r in refine {
            if !(r.time > 0.0 && r.time <= 1.0) {
                return Err(Error::domain(format!("singular time {} outside (0, 1]", r.time)));
            }
            nodes.push(r.time);
        }
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

        let mut extra = Vec::new();
        for r in refine {
            let idx = nodes.iter().position(|&t| (t - r.time).abs() < 1e-15).unwrap();
            let prev_sing = refine
                .iter()
                .map(|o| o.time)
                .filter(|&t| t < r.time - 1e-15)
                .fold(0.0f64, f64::max);
            let next_sing = refine
                .iter()
                .map(|o| o.time)
                .filter(|&t| t > r.time + 1e-15)
                .fold(1.0f64, f64::min);
            if idx > 0 {
                let cell = r.time - nodes[idx - 1];
                push_cascade(&mut extra, r.time, -1.0, cell, r.rate_left, 0.5 * (r.time - prev_sing));
            }
            // Restart layer after an interior breakpoint.
            if let Some(rate) = r.rate_right {
                if idx + 1 < nodes.len() {
                    let cell = nodes[idx + 1] - r.time;
                    push_cascade(&mut extra, r.time, 1.0, cell, rate, 0.5 * (next_sing - r.time));
                }
            }
        }
        nodes.extend(extra);
        Self::from_nodes(nodes)
    }

    /// Builds from arbitrary times; sorts, deduplicates, and requires the
    /// endpoints 0 and 1.
    pub fn from_nodes(mut nodes: Vec<f64>) -> Result<Self> {
        if nodes.iter().any(|t| !t.is_finite() || !(0.0..=1.0).contains(t)) {
            return Err(Error::domain("grid nodes must lie in [0, 1]"));
        }
        nodes.push(0.0);
        nodes.push(1.0);
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        if nodes.len() < 3 {
            return Err(Error::domain("grid needs at least 2 cells"));
        }
        Ok(TimeGrid { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of steps (cells).
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Index of the node closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let i = self.nodes.partition_point(|&s| s < t);
        if i == 0 {
            return 0;
        }
        if i >= self.nodes.len() {
            return self.nodes.len() - 1;
        }
        if (self.nodes[i] - t).abs() < (t - self.nodes[i - 1]).abs() {
            i
        } else {
            i - 1
        }
    }

    /// Node index holding exactly `t`, if present.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = self.nearest(t);
        ((self.nodes[k] - t).abs() < 1e-12).then_some(k)
    }

    /// Nodes up to and including the last one `<= t_max`.
    pub fn prefix(&self, t_max: f64) -> &[f64] {
        let end = self.nodes.partition_point(|&s| s <= t_max);
        &self.nodes[..end]
    }
}
