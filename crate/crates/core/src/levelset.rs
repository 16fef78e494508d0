//! Level sets of simulated fields as graphs over space (`t = h_λ(x)`) or
//! over a transverse hyperplane (`x_n = h(x′)`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rd_solver::{Field, SnapshotSeries};

/// Above this many valid samples the Lipschitz estimate only pairs samples
/// within a local index window.
pub const ALL_PAIRS_LIMIT: usize = 2000;
/// Half-width (in samples) of the pairing window used for large graphs.
pub const PAIR_WINDOW: usize = 3;
/// At most this many offending base points are listed in a crossing error.
const MAX_REPORTED: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    TimeGraph,
    SpaceGraph,
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Orientation::TimeGraph => "time_graph",
            Orientation::SpaceGraph => "space_graph",
        })
    }
}

/// Heights sampled on a tensor grid of base points. Invalid samples hold
/// NaN and are flagged in `valid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelGraph {
    pub orientation: Orientation,
    pub lambda: f64,
    /// Coordinates along each base axis; axis 0 varies fastest in `heights`.
    pub axes: Vec<Vec<f64>>,
    pub heights: Vec<f64>,
    pub valid: Vec<bool>,
}

impl LevelGraph {
    /// Builds a graph, marking non-finite heights invalid.
    pub fn new(
        orientation: Orientation,
        lambda: f64,
        axes: Vec<Vec<f64>>,
        heights: Vec<f64>,
    ) -> Result<Self> {
        let expected: usize = axes.iter().map(Vec::len).product();
        if heights.len() != expected {
            return Err(Error::Invalid(format!(
                "graph has {} heights for {expected} base points",
                heights.len()
            )));
        }
        for axis in &axes {
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Invalid(
                    "base coordinates must increase strictly".into(),
                ));
            }
        }
        let valid: Vec<bool> = heights.iter().map(|h| h.is_finite()).collect();
        let heights = heights
            .into_iter()
            .map(|h| if h.is_finite() { h } else { f64::NAN })
            .collect();
        Ok(Self {
            orientation,
            lambda,
            axes,
            heights,
            valid,
        })
    }

    /// Samples `h` on the given axes; non-finite values become invalid.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(
        orientation: Orientation,
        lambda: f64,
        axes: Vec<Vec<f64>>,
        h: F,
    ) -> Result<Self> {
        let n: usize = axes.iter().map(Vec::len).product();
        let mut heights = Vec::with_capacity(n);
        let mut scratch = Vec::new();
        for k in 0..n {
            base_point_into(&axes, k, &mut scratch);
            heights.push(h(&scratch));
        }
        Self::new(orientation, lambda, axes, heights)
    }

    pub fn base_dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn base_point(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.axes.len());
        base_point_into(&self.axes, k, &mut out);
        out
    }

    fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.axes.len());
        for axis in &self.axes {
            out.push(k % axis.len());
            k /= axis.len();
        }
        out
    }

    fn flat_index(&self, ij: &[usize]) -> usize {
        let mut k = 0;
        let mut stride = 1;
        for (a, &i) in ij.iter().enumerate() {
            k += i * stride;
            stride *= self.axes[a].len();
        }
        k
    }

    /// Multilinear interpolation of the height at `x`. `None` outside the
    /// sampled box or when a neighbouring sample is invalid.
    pub fn height_at(&self, x: &[f64]) -> Option<f64> {
        if x.len() != self.axes.len() {
            return None;
        }
        if self.axes.is_empty() {
            return self.valid[0].then_some(self.heights[0]);
        }
        let mut lower = Vec::with_capacity(x.len());
        let mut frac = Vec::with_capacity(x.len());
        for (axis, &xi) in self.axes.iter().zip(x) {
            let n = axis.len();
            if n == 1 {
                if xi != axis[0] {
                    return None;
                }
                lower.push(0);
                frac.push(0.0);
                continue;
            }
            if !(xi >= axis[0] && xi <= axis[n - 1]) {
                return None;
            }
            let i = crate::numerics::bracket(axis, xi).min(n - 2);
            lower.push(i);
            frac.push((xi - axis[i]) / (axis[i + 1] - axis[i]));
        }
        let corners = 1usize << x.len();
        let mut acc = 0.0;
        let mut ij = lower.clone();
        for c in 0..corners {
            let mut w = 1.0;
            for a in 0..x.len() {
                let up = (c >> a) & 1 == 1;
                ij[a] = lower[a] + usize::from(up);
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if w == 0.0 {
                continue;
            }
            if ij.iter().zip(&self.axes).any(|(&i, ax)| i >= ax.len()) {
                return None;
            }
            let k = self.flat_index(&ij);
            if !self.valid[k] {
                return None;
            }
            acc += w * self.heights[k];
        }
        Some(acc)
    }

    /// Neighbour offsets (in samples) used for windowed pairing.
    fn window_offsets(&self) -> Vec<Vec<isize>> {
        let w = PAIR_WINDOW as isize;
        let mut out = vec![Vec::new()];
        for _ in 0..self.axes.len() {
            let mut next = Vec::new();
            for o in &out {
                for d in -w..=w {
                    let mut v = o.clone();
                    v.push(d);
                    next.push(v);
                }
            }
            out = next;
        }
        out.retain(|o| {
            // Keep each unordered pair once: first nonzero offset positive.
            o.iter().find(|&&d| d != 0).is_some_and(|&d| d > 0)
        });
        out
    }
}

fn base_point_into(axes: &[Vec<f64>], mut k: usize, out: &mut Vec<f64>) {
    out.clear();
    for axis in axes {
        out.push(axis[k % axis.len()]);
        k /= axis.len();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CrossState {
    Below,
    StartedAbove,
    Crossed,
    Offending,
}

/// Accumulates a time-graph from snapshots delivered in time order, so
/// long runs need not be stored.
#[derive(Debug, Clone)]
pub struct TimeGraphBuilder {
    lambda: f64,
    grid: Option<crate::rd_solver::Grid>,
    last_time: f64,
    prev: Vec<f64>,
    state: Vec<CrossState>,
    heights: Vec<f64>,
}

impl TimeGraphBuilder {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            grid: None,
            last_time: f64::NEG_INFINITY,
            prev: Vec::new(),
            state: Vec::new(),
            heights: Vec::new(),
        }
    }

    pub fn push(&mut self, field: &Field) -> Result<()> {
        let lambda = self.lambda;
        match &self.grid {
            None => {
                self.grid = Some(field.grid.clone());
                self.state = field
                    .values
                    .iter()
                    .map(|&v| {
                        if v >= lambda {
                            CrossState::StartedAbove
                        } else {
                            CrossState::Below
                        }
                    })
                    .collect();
                self.heights = vec![f64::NAN; field.values.len()];
                self.prev = field.values.clone();
                self.last_time = field.time;
                return Ok(());
            }
            Some(g) => {
                if *g != field.grid {
                    return Err(Error::Invalid(
                        "snapshot grid differs from earlier snapshots".into(),
                    ));
                }
                if !(field.time > self.last_time) {
                    return Err(Error::Invalid("snapshot times must increase".into()));
                }
            }
        }
        let (t0, t1) = (self.last_time, field.time);
        self.state
            .par_iter_mut()
            .zip(self.heights.par_iter_mut())
            .zip(self.prev.par_iter_mut())
            .zip(field.values.par_iter())
            .for_each(|(((state, h), prev), &v)| {
                match *state {
                    CrossState::Below if v >= lambda => {
                        let s = (lambda - *prev) / (v - *prev);
                        *h = t0 + s * (t1 - t0);
                        *state = CrossState::Crossed;
                    }
                    CrossState::StartedAbove | CrossState::Crossed if v < lambda => {
                        *state = CrossState::Offending;
                    }
                    _ => {}
                }
                *prev = v;
            });
        self.last_time = t1;
        Ok(())
    }

    pub fn finish(self) -> Result<LevelGraph> {
        let grid = self.grid.ok_or(Error::TooFewSamples {
            needed: 1,
            found: 0,
        })?;
        let offending: Vec<usize> = self
            .state
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == CrossState::Offending)
            .map(|(k, _)| k)
            .collect();
        if !offending.is_empty() {
            return Err(Error::MultipleCrossings {
                lambda: self.lambda,
                points: offending
                    .iter()
                    .take(MAX_REPORTED)
                    .map(|&k| grid.position(k))
                    .collect(),
            });
        }
        let heights = self
            .state
            .iter()
            .zip(&self.heights)
            .map(|(s, &h)| {
                if *s == CrossState::Crossed {
                    h
                } else {
                    f64::NAN
                }
            })
            .collect();
        let axes = (0..grid.dim()).map(|a| grid.axis_coords(a)).collect();
        LevelGraph::new(Orientation::TimeGraph, self.lambda, axes, heights)
    }
}

/// `h_λ(x)`: the interpolated time at which `u(x, ·)` first reaches
/// `lambda`. Nodes already at or above `lambda` in the first snapshot, or
/// never reaching it, are invalid. A node that falls back below `lambda`
/// makes the extraction fail.
pub fn extract_graph_time(series: &SnapshotSeries, lambda: f64) -> Result<LevelGraph> {
    let mut builder = TimeGraphBuilder::new(lambda);
    for field in &series.snapshots {
        builder.push(field)?;
    }
    builder.finish()
}

/// Space-graph of the `lambda` level along `axis`: on every line parallel
/// to `axis` the single crossing position. Lines without a crossing are
/// invalid; lines crossing more than once are reported.
pub fn extract_graph_space(field: &Field, lambda: f64, axis: usize) -> Result<LevelGraph> {
    let grid = &field.grid;
    if axis >= grid.dim() {
        return Err(Error::Invalid(format!(
            "axis {axis} out of range for a {}D field",
            grid.dim()
        )));
    }
    let n_axis = grid.nodes(axis);
    let transverse: Vec<usize> = (0..grid.dim()).filter(|&a| a != axis).collect();
    let lines: usize = transverse.iter().map(|&a| grid.nodes(a)).product();
    let mut heights = vec![f64::NAN; lines];
    let mut offending = Vec::new();
    for (line, height) in heights.iter_mut().enumerate() {
        let node = |i: usize| -> usize {
            match grid.dim() {
                1 => i,
                _ if axis == 0 => grid.index(&[i, line]),
                _ => grid.index(&[line, i]),
            }
        };
        let mut crossings = 0;
        let mut pos = f64::NAN;
        let mut prev = field.values[node(0)];
        for i in 1..n_axis {
            let v = field.values[node(i)];
            if (prev < lambda) != (v < lambda) {
                crossings += 1;
                let s = (lambda - prev) / (v - prev);
                pos = grid.coord(axis, i - 1) + s * grid.dx();
            }
            prev = v;
        }
        match crossings {
            0 => {}
            1 => *height = pos,
            _ => offending.push(line),
        }
    }
    let axes: Vec<Vec<f64>> = transverse.iter().map(|&a| grid.axis_coords(a)).collect();
    if !offending.is_empty() {
        return Err(Error::MultipleCrossings {
            lambda,
            points: offending
                .iter()
                .take(MAX_REPORTED)
                .map(|&l| axes.iter().map(|ax| ax[l]).collect())
                .collect(),
        });
    }
    LevelGraph::new(Orientation::SpaceGraph, lambda, axes, heights)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    pub global_l: f64,
    /// Base points of the pair attaining the maximum.
    pub pair: (Vec<f64>, Vec<f64>),
    pub all_pairs: bool,
}

fn pair_slope(graph: &LevelGraph, a: usize, b: usize) -> f64 {
    let pa = graph.base_point(a);
    let pb = graph.base_point(b);
    let d: f64 = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    (graph.heights[a] - graph.heights[b]).abs() / d
}

/// Largest difference quotient `|Δh| / |Δx|` over valid sample pairs.
pub fn lipschitz_estimate(graph: &LevelGraph) -> Result<LipschitzEstimate> {
    let valid: Vec<usize> = (0..graph.len()).filter(|&k| graph.valid[k]).collect();
    if valid.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: valid.len(),
        });
    }
    let all_pairs = valid.len() <= ALL_PAIRS_LIMIT;
    let best = if all_pairs {
        valid
            .par_iter()
            .enumerate()
            .map(|(i, &a)| {
                let mut best = (f64::NEG_INFINITY, a, a);
                for &b in &valid[i + 1..] {
                    let s = pair_slope(graph, a, b);
                    if s > best.0 {
                        best = (s, a, b);
                    }
                }
                best
            })
            .reduce(|| (f64::NEG_INFINITY, 0, 0), max_pair)
    } else {
        let offsets = graph.window_offsets();
        valid
            .par_iter()
            .map(|&a| {
                let ij = graph.multi_index(a);
                let mut best = (f64::NEG_INFINITY, a, a);
                for o in &offsets {
                    let mut nb = Vec::with_capacity(ij.len());
                    let mut inside = true;
                    for (ax, (&i, &d)) in ij.iter().zip(o).enumerate() {
                        let j = i as isize + d;
                        if j < 0 || j as usize >= graph.axes[ax].len() {
                            inside = false;
                            break;
                        }
                        nb.push(j as usize);
                    }
                    if !inside {
                        continue;
                    }
                    let b = graph.flat_index(&nb);
                    if !graph.valid[b] {
                        continue;
                    }
                    let s = pair_slope(graph, a, b);
                    if s > best.0 {
                        best = (s, a, b);
                    }
                }
                best
            })
            .reduce(|| (f64::NEG_INFINITY, 0, 0), max_pair)
    };
    if !best.0.is_finite() {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: 1,
        });
    }
    Ok(LipschitzEstimate {
        global_l: best.0,
        pair: (graph.base_point(best.1), graph.base_point(best.2)),
        all_pairs,
    })
}

/// Ties resolve to the lower index pair so the reduction is order-free.
fn max_pair(a: (f64, usize, usize), b: (f64, usize, usize)) -> (f64, usize, usize) {
    if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
        b
    } else {
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityRatio {
    /// `+∞` when no interior node has a non-negligible gradient.
    pub min_ratio: f64,
    pub location: Option<Vec<f64>>,
    pub qualifying_nodes: usize,
}

/// Minimum of `∂ₜu / |∇u|` over interior nodes of snapshot `t_index` with
/// `|∇u| > 1e−8`, using centered differences in time and space.
pub fn monotonicity_ratio(series: &SnapshotSeries, t_index: usize) -> Result<MonotonicityRatio> {
    if t_index == 0 || t_index + 1 >= series.len() {
        return Err(Error::Invalid(format!(
            "snapshot {t_index} needs a neighbour on each side (series has {})",
            series.len()
        )));
    }
    let before = &series.snapshots[t_index - 1];
    let here = &series.snapshots[t_index];
    let after = &series.snapshots[t_index + 1];
    let grid = &here.grid;
    let dt = after.time - before.time;
    let h2 = 2.0 * grid.dx();
    let interior = |ij: &[usize]| {
        ij.iter()
            .enumerate()
            .all(|(a, &i)| i > 0 && i + 1 < grid.nodes(a))
    };
    let best = (0..grid.len())
        .into_par_iter()
        .filter_map(|k| {
            let ij = grid.multi_index(k);
            if !interior(&ij) {
                return None;
            }
            let mut g2 = 0.0;
            for a in 0..grid.dim() {
                let mut lo = ij.clone();
                let mut hi = ij.clone();
                lo[a] -= 1;
                hi[a] += 1;
                let d = (here.values[grid.index(&hi)] - here.values[grid.index(&lo)]) / h2;
                g2 += d * d;
            }
            let g = g2.sqrt();
            if g <= 1e-8 {
                return None;
            }
            let ut = (after.values[k] - before.values[k]) / dt;
            Some((ut / g, k, 1usize))
        })
        .reduce(
            || (f64::INFINITY, usize::MAX, 0),
            |a, b| {
                let count = a.2 + b.2;
                let pick = if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                };
                (pick.0, pick.1, count)
            },
        );
    Ok(MonotonicityRatio {
        min_ratio: best.0,
        location: (best.1 != usize::MAX).then(|| grid.position(best.1)),
        qualifying_nodes: best.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rd_solver::{Boundary, Grid};

    const KS: f64 = 0.353_553_390_593_273_8;

    fn logistic(z: f64) -> f64 {
        1.0 / (1.0 + (-z / std::f64::consts::SQRT_2).exp())
    }

    fn planar_series(dx: f64, dt_rec: f64, n: usize) -> SnapshotSeries {
        let grid = Grid::line(-20.0, 20.0, dx, Boundary::Neumann).unwrap();
        let mut s = SnapshotSeries::new(dt_rec);
        for k in 0..n {
            let t = k as f64 * dt_rec;
            s.push(Field::from_fn(&grid, t, |x| logistic(x[0] + KS * t)))
                .unwrap();
        }
        s
    }

    #[test]
    fn planar_time_graph_is_linear() {
        let s = planar_series(0.05, 0.05, 1200);
        let g = extract_graph_time(&s, 0.5).unwrap();
        let mut checked = 0;
        for k in 0..g.len() {
            if g.valid[k] {
                let x = g.base_point(k)[0];
                assert!((g.heights[k] + x / KS).abs() < 2e-3, "x = {x}");
                checked += 1;
            }
        }
        assert!(checked > 100);
        let l = lipschitz_estimate(&g).unwrap();
        assert!((l.global_l * KS - 1.0).abs() < 0.01, "{}", l.global_l);
    }

    #[test]
    fn saturated_series_has_no_graph() {
        let grid = Grid::line(0.0, 10.0, 0.1, Boundary::Neumann).unwrap();
        let mut s = SnapshotSeries::new(1.0);
        for t in 0..3 {
            let mut f = Field::constant(&grid, 1.0);
            f.time = t as f64;
            s.push(f).unwrap();
        }
        let g = extract_graph_time(&s, 0.5).unwrap();
        assert_eq!(g.valid_count(), 0);
        assert!(g.heights.iter().all(|h| h.is_nan()));
    }

    #[test]
    fn downward_crossing_is_reported() {
        let grid = Grid::line(0.0, 10.0, 0.5, Boundary::Neumann).unwrap();
        let mut s = SnapshotSeries::new(1.0);
        for (t, v) in [(0.0, 0.2), (1.0, 0.8), (2.0, 0.3)] {
            let mut f = Field::constant(&grid, v);
            f.time = t;
            s.push(f).unwrap();
        }
        match extract_graph_time(&s, 0.5) {
            Err(Error::MultipleCrossings { points, .. }) => assert_eq!(points.len(), 21),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn space_graph_of_profile() {
        let grid = Grid::square(-10.0, 10.0, 0.05, Boundary::Neumann).unwrap();
        let f = Field::from_fn(&grid, 0.0, |x| logistic(x[1]));
        let g = extract_graph_space(&f, 0.5, 1).unwrap();
        assert_eq!(g.base_dim(), 1);
        assert!(g.heights.iter().all(|h| h.abs() < 1e-4));
        let g = extract_graph_space(&f, 0.75, 1).unwrap();
        let target = std::f64::consts::SQRT_2 * 3f64.ln();
        assert!((target - 1.5537).abs() < 1e-4);
        assert!(g.heights.iter().all(|h| (h - target).abs() < 1e-3));
    }

    #[test]
    fn lipschitz_of_simple_graphs() {
        let axis: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let line = LevelGraph::from_fn(Orientation::TimeGraph, 0.5, vec![axis.clone()], |x| {
            2.0 * x[0]
        })
        .unwrap();
        assert!((lipschitz_estimate(&line).unwrap().global_l - 2.0).abs() < 1e-12);
        let flat = LevelGraph::from_fn(Orientation::TimeGraph, 0.5, vec![axis], |_| 3.0).unwrap();
        assert_eq!(lipschitz_estimate(&flat).unwrap().global_l, 0.0);
    }

    #[test]
    fn windowed_lipschitz_on_large_graph() {
        let axis: Vec<f64> = (0..80).map(|i| i as f64 * 0.25).collect();
        let g = LevelGraph::from_fn(Orientation::TimeGraph, 0.5, vec![axis.clone(), axis], |x| {
            x[0] - x[1]
        })
        .unwrap();
        let l = lipschitz_estimate(&g).unwrap();
        assert!(!l.all_pairs);
        assert!((l.global_l - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let g = LevelGraph::new(
            Orientation::TimeGraph,
            0.5,
            vec![vec![0.0, 1.0]],
            vec![1.0, f64::NAN],
        )
        .unwrap();
        assert!(matches!(
            lipschitz_estimate(&g),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn height_interpolation_respects_mask() {
        let g = LevelGraph::new(
            Orientation::TimeGraph,
            0.5,
            vec![vec![0.0, 1.0, 2.0]],
            vec![0.0, 1.0, f64::NAN],
        )
        .unwrap();
        assert_eq!(g.height_at(&[0.5]), Some(0.5));
        assert_eq!(g.height_at(&[1.0]), Some(1.0));
        assert_eq!(g.height_at(&[1.5]), None);
        assert_eq!(g.height_at(&[-0.1]), None);
    }

    #[test]
    fn planar_monotonicity_ratio() {
        let s = planar_series(0.01, 0.01, 3);
        let r = monotonicity_ratio(&s, 1).unwrap();
        assert!((r.min_ratio - KS).abs() < 1e-4, "{}", r.min_ratio);
    }

    #[test]
    fn constant_series_ratio_is_infinite() {
        let grid = Grid::line(0.0, 10.0, 0.1, Boundary::Neumann).unwrap();
        let mut s = SnapshotSeries::new(1.0);
        for t in 0..3 {
            let mut f = Field::constant(&grid, 0.4);
            f.time = t as f64;
            s.push(f).unwrap();
        }
        let r = monotonicity_ratio(&s, 1).unwrap();
        assert_eq!(r.min_ratio, f64::INFINITY);
        assert!(r.location.is_none());
    }
}
