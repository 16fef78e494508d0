//! Limit Hamilton-Jacobi problem of the blow-down: Hopf-Lax representations
//! on either side of a boundary graph, the travelling-wave variant,
//! straight backward characteristics and eikonal checks on sampled graphs.
//!
//! Forward side (`t > h(x)`):
//! `Φ(x,t) = inf_y (κ*+β₊)(t−h(y)) + |x−y|² / (4β₊(t−h(y)))` over `h(y) < t`.
//!
//! Backward side (`t < h(x)`):
//! `Φ(x,t) = sup_y (κ*−β₋)(t−h(y)) − |x−y|² / (4β₋(t−h(y)))` over `h(y) < t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levelset::{lipschitz_estimate, LevelGraph, Orientation};
use crate::nonlinearity::Nonlinearity;
use crate::numerics::{brent_min, nelder_mead};
use crate::wave1d::tail_rates;

/// Seeds per axis for multi-start minimization.
pub const SEEDS_PER_AXIS: usize = 64;
/// Number of best seeds that are refined locally.
const REFINED_SEEDS: usize = 4;
/// Relative tolerance for `|ξ| = 1/κ*`.
pub const ADMISSIBLE_TOL: f64 = 1e-12;
/// Relative jump between one-sided gradients that marks a ridge sample.
pub const RIDGE_JUMP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HJParams {
    pub kappa_star: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
    /// Drift speed of the travelling wave; equals `kappa_star` unless set.
    pub kappa: f64,
}

impl HJParams {
    pub fn new(kappa_star: f64, beta_plus: f64, beta_minus: f64, kappa: f64) -> Result<Self> {
        for (name, v) in [
            ("kappa_star", kappa_star),
            ("beta_plus", beta_plus),
            ("beta_minus", beta_minus),
            ("kappa", kappa),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            kappa_star,
            beta_plus,
            beta_minus,
            kappa,
        })
    }

    /// Constants of `spec` at its minimal speed `kappa_star`.
    pub fn from_spec(spec: &Nonlinearity, kappa_star: f64) -> Result<Self> {
        let rates = tail_rates(spec, kappa_star);
        Self::new(kappa_star, rates.beta_plus, rates.beta_minus, kappa_star)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    /// `√(1 + κ*/β₊ + κ²/(4β₊²))`.
    pub fn k_plus(&self) -> f64 {
        let (k, b) = (self.kappa, self.beta_plus);
        (1.0 + self.kappa_star / b + k * k / (4.0 * b * b)).sqrt()
    }

    /// `√(1 − κ*/β₋ + κ²/(4β₋²))`.
    pub fn k_minus(&self) -> f64 {
        let (k, b) = (self.kappa, self.beta_minus);
        (1.0 - self.kappa_star / b + k * k / (4.0 * b * b)).sqrt()
    }

    fn require_backward(&self) -> Result<()> {
        if self.beta_minus < self.kappa_star {
            return Err(Error::Invalid(format!(
                "backward representation needs beta_minus >= kappa_star ({} < {})",
                self.beta_minus, self.kappa_star
            )));
        }
        Ok(())
    }
}

/// A sampled graph with its Lipschitz estimate cached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledBoundary {
    pub graph: LevelGraph,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BoundaryGraph {
    Sampled(SampledBoundary),
    /// `h(y) = ξ·y`.
    Planar(Vec<f64>),
    /// `h(y) = min_{ξ∈Ξ} ξ·y`.
    SupportSet(Vec<Vec<f64>>),
}

impl BoundaryGraph {
    pub fn sampled(graph: LevelGraph) -> Result<Self> {
        let lipschitz = lipschitz_estimate(&graph)?.global_l;
        Ok(BoundaryGraph::Sampled(SampledBoundary { graph, lipschitz }))
    }

    pub fn support_set(xi: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = xi.first() else {
            return Err(Error::Invalid("support set is empty".into()));
        };
        if xi.iter().any(|v| v.len() != first.len()) {
            return Err(Error::Invalid(
                "support directions differ in dimension".into(),
            ));
        }
        Ok(BoundaryGraph::SupportSet(xi))
    }

    pub fn dim(&self) -> usize {
        match self {
            BoundaryGraph::Sampled(s) => s.graph.base_dim(),
            BoundaryGraph::Planar(xi) => xi.len(),
            BoundaryGraph::SupportSet(xi) => xi[0].len(),
        }
    }

    /// `h(y)`, or `None` where a sampled graph is undefined.
    pub fn height(&self, y: &[f64]) -> Option<f64> {
        match self {
            BoundaryGraph::Sampled(s) => s.graph.height_at(y),
            BoundaryGraph::Planar(xi) => Some(dot(xi, y)),
            BoundaryGraph::SupportSet(xi) => {
                Some(xi.iter().map(|v| dot(v, y)).fold(f64::INFINITY, f64::min))
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            BoundaryGraph::Sampled(s) => s.lipschitz,
            BoundaryGraph::Planar(xi) => norm(xi),
            BoundaryGraph::SupportSet(xi) => xi.iter().map(|v| norm(v)).fold(0.0, f64::max),
        }
    }

    /// Analytic boundaries used as blow-down limits need `|ξ| = 1/κ*`.
    pub fn check_admissible(&self, kappa_star: f64) -> Result<()> {
        let target = 1.0 / kappa_star;
        let dirs: Vec<&Vec<f64>> = match self {
            BoundaryGraph::Sampled(_) => return Ok(()),
            BoundaryGraph::Planar(xi) => vec![xi],
            BoundaryGraph::SupportSet(xi) => xi.iter().collect(),
        };
        for xi in dirs {
            let n = norm(xi);
            if (n - target).abs() > ADMISSIBLE_TOL * target {
                return Err(Error::Invalid(format!(
                    "|xi| = {n} differs from 1/kappa_star = {target}"
                )));
            }
        }
        Ok(())
    }

    /// Samples the boundary on a tensor grid.
    pub fn sample(
        &self,
        axes: Vec<Vec<f64>>,
        orientation: Orientation,
        lambda: f64,
    ) -> Result<LevelGraph> {
        LevelGraph::from_fn(orientation, lambda, axes, |y| {
            self.height(y).unwrap_or(f64::NAN)
        })
    }

    /// Direction candidates used to find a point with `h(y) < t`.
    fn descent_directions(&self) -> Vec<Vec<f64>> {
        let dirs: Vec<&Vec<f64>> = match self {
            BoundaryGraph::Sampled(_) => return Vec::new(),
            BoundaryGraph::Planar(xi) => vec![xi],
            BoundaryGraph::SupportSet(xi) => xi.iter().collect(),
        };
        dirs.into_iter()
            .filter(|v| norm(v) > 0.0)
            .map(|v| {
                let n = norm(v);
                v.iter().map(|c| -c / n).collect()
            })
            .collect()
    }
}

/// `min_{ξ∈Ξ} ξ·x`.
pub fn support_representation(xi: &[Vec<f64>], x: &[f64]) -> Result<f64> {
    if xi.is_empty() {
        return Err(Error::Invalid("support set is empty".into()));
    }
    if xi.iter().any(|v| v.len() != x.len()) {
        return Err(Error::Invalid(
            "support direction and point differ in dimension".into(),
        ));
    }
    Ok(xi.iter().map(|v| dot(v, x)).fold(f64::INFINITY, f64::min))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Multi-start minimization of `obj` over the closed ball `|y − c| ≤ r`:
/// a seed lattice followed by local refinement of the best seeds.
fn minimize_in_ball<F>(obj: F, center: &[f64], radius: f64) -> Option<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = center.len();
    if dim == 0 {
        let v = obj(&[]);
        return v.is_finite().then(|| (Vec::new(), v));
    }
    if dim > 2 {
        return None;
    }
    let n = SEEDS_PER_AXIS;
    let spacing = 2.0 * radius / (n - 1) as f64;
    let mut seeds: Vec<(Vec<f64>, f64)> = (0..n.pow(dim as u32))
        .into_par_iter()
        .filter_map(|k| {
            let y: Vec<f64> = (0..dim)
                .map(|a| center[a] - radius + spacing * ((k / n.pow(a as u32)) % n) as f64)
                .collect();
            if dist2(&y, center) > radius * radius * (1.0 + 1e-12) {
                return None;
            }
            let v = obj(&y);
            v.is_finite().then_some((y, v))
        })
        .collect();
    let v0 = obj(center);
    if v0.is_finite() {
        seeds.push((center.to_vec(), v0));
    }
    if seeds.is_empty() {
        return None;
    }
    seeds.sort_by(|a, b| a.1.total_cmp(&b.1));
    seeds.truncate(REFINED_SEEDS);
    let scale = radius
        .max(center.iter().fold(0.0f64, |m, c| m.max(c.abs())))
        .max(1.0);
    let mut best = seeds[0].clone();
    for (y0, v0) in seeds {
        let (y, v) = if dim == 1 {
            let (x, fx) = brent_min(
                |s| obj(&[s]),
                y0[0] - spacing,
                y0[0] + spacing,
                1e-13 * scale,
            );
            (vec![x], fx)
        } else {
            nelder_mead(|y| obj(y), &y0, spacing, 1e-13 * scale, 0.0, 4000)
        };
        let (y, v) = if v < v0 { (y, v) } else { (y0, v0) };
        if v < best.1 {
            best = (y, v);
        }
    }
    Some(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopfLax {
    pub value: f64,
    /// Boundary point attaining the infimum (forward) or supremum (backward).
    pub argopt: Vec<f64>,
}

fn check_point(x: &[f64], boundary: &BoundaryGraph) -> Result<()> {
    if x.len() != boundary.dim() {
        return Err(Error::Invalid(format!(
            "point has dimension {} but the boundary has {}",
            x.len(),
            boundary.dim()
        )));
    }
    Ok(())
}

/// Forward Hopf-Lax value at `(x, t)` with `t > h(x)`.
pub fn hopf_lax_forward(
    x: &[f64],
    t: f64,
    boundary: &BoundaryGraph,
    params: &HJParams,
) -> Result<HopfLax> {
    check_point(x, boundary)?;
    let hx = boundary
        .height(x)
        .ok_or_else(|| Error::Region(format!("boundary undefined at {x:?}")))?;
    if !(t > hx) {
        return Err(Error::Region(format!(
            "forward formula needs t > h(x); t = {t}, h(x) = {hx}"
        )));
    }
    let a = params.kappa_star + params.beta_plus;
    let b4 = 4.0 * params.beta_plus;
    let obj = |y: &[f64]| -> f64 {
        match boundary.height(y) {
            Some(h) if t > h => {
                let s = t - h;
                a * s + dist2(x, y) / (b4 * s)
            }
            _ => f64::INFINITY,
        }
    };
    // a·s + d²/(4β₊s) ≥ d·√(a/β₊), so minimizers lie within this radius.
    let v_up = a * (t - hx);
    let radius = v_up * (params.beta_plus / a).sqrt() * (1.0 + 1e-9);
    let (argopt, value) = minimize_in_ball(obj, x, radius)
        .ok_or_else(|| Error::Region("no feasible boundary point".into()))?;
    Ok(HopfLax { value, argopt })
}

/// Backward Hopf-Lax value at `(x, t)` with `t < h(x)`; requires
/// `β₋ ≥ κ*` and some boundary point below `t`.
pub fn hopf_lax_backward(
    x: &[f64],
    t: f64,
    boundary: &BoundaryGraph,
    params: &HJParams,
) -> Result<HopfLax> {
    params.require_backward()?;
    check_point(x, boundary)?;
    let hx = boundary
        .height(x)
        .ok_or_else(|| Error::Region(format!("boundary undefined at {x:?}")))?;
    if !(t < hx) {
        return Err(Error::Region(format!(
            "backward formula needs t < h(x); t = {t}, h(x) = {hx}"
        )));
    }
    let c = params.kappa_star - params.beta_minus;
    let b4 = 4.0 * params.beta_minus;
    let objective = |y: &[f64]| -> f64 {
        match boundary.height(y) {
            Some(h) if h < t => {
                let s = t - h;
                c * s - dist2(x, y) / (b4 * s)
            }
            _ => f64::NEG_INFINITY,
        }
    };
    // Any admissible point gives a lower bound for the supremum.
    let gap = hx - t;
    let mut low = f64::NEG_INFINITY;
    match boundary {
        BoundaryGraph::Sampled(s) => {
            let g = &s.graph;
            low = (0..g.len())
                .into_par_iter()
                .filter(|&k| g.valid[k] && g.heights[k] < t)
                .map(|k| objective(&g.base_point(k)))
                .reduce(|| f64::NEG_INFINITY, f64::max);
        }
        _ => {
            for dir in boundary.descent_directions() {
                let lip = boundary.lipschitz();
                let step = 2.0 * gap / lip;
                let y: Vec<f64> = x.iter().zip(&dir).map(|(xi, d)| xi + step * d).collect();
                low = low.max(objective(&y));
            }
        }
    }
    if !low.is_finite() {
        return Err(Error::EmptyAdmissibleSet);
    }
    // With s < Lip·|x−y| the objective is below −|x−y|/(4β₋·Lip).
    let radius = b4 * boundary.lipschitz() * low.abs() * (1.0 + 1e-9);
    let (argopt, neg) =
        minimize_in_ball(|y| -objective(y), x, radius).ok_or(Error::EmptyAdmissibleSet)?;
    Ok(HopfLax {
        value: -neg,
        argopt,
    })
}

/// Samples of `Φ(·, t − ε)` on a tensor grid (axis 0 fastest). Non-finite
/// values are skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slice {
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl Slice {
    pub fn from_fn<F: Fn(&[f64]) -> f64>(axes: Vec<Vec<f64>>, f: F) -> Self {
        let g = LevelGraph::from_fn(Orientation::TimeGraph, 0.0, axes, &f)
            .expect("axes must be increasing");
        let values = (0..g.len()).map(|k| f(&g.base_point(k))).collect();
        Self {
            axes: g.axes,
            values,
        }
    }

    fn point(&self, ij: &[usize]) -> Vec<f64> {
        ij.iter()
            .enumerate()
            .map(|(a, &i)| self.axes[a][i])
            .collect()
    }

    fn flat(&self, ij: &[usize]) -> usize {
        let mut k = 0;
        let mut stride = 1;
        for (a, &i) in ij.iter().enumerate() {
            k += i * stride;
            stride *= self.axes[a].len();
        }
        k
    }

    /// Largest centered-difference gradient norm over interior samples.
    pub fn lipschitz_surrogate(&self) -> f64 {
        let dim = self.axes.len();
        let total: usize = self.axes.iter().map(Vec::len).product();
        let mut best: f64 = 0.0;
        'nodes: for k in 0..total {
            let mut ij = Vec::with_capacity(dim);
            let mut r = k;
            for ax in &self.axes {
                ij.push(r % ax.len());
                r /= ax.len();
            }
            let mut g2 = 0.0;
            for a in 0..dim {
                if ij[a] == 0 || ij[a] + 1 >= self.axes[a].len() {
                    continue 'nodes;
                }
                let mut lo = ij.clone();
                let mut hi = ij.clone();
                lo[a] -= 1;
                hi[a] += 1;
                let d = (self.values[self.flat(&hi)] - self.values[self.flat(&lo)])
                    / (self.axes[a][hi[a]] - self.axes[a][lo[a]]);
                if !d.is_finite() {
                    continue 'nodes;
                }
                g2 += d * d;
            }
            best = best.max(g2.sqrt());
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalStep {
    pub value: f64,
    pub minimizer: Vec<f64>,
    /// Localization radius `Kε` that was searched.
    pub radius: f64,
}

/// One step of the localized Hopf-Lax formula:
/// `min_{|y−x| ≤ Kε} Φ(y, t−ε) + (κ*+β₊)ε + |x−y|²/(4β₊ε)` with
/// `K = 4β₊·Lip + 1`. `lipschitz` overrides the slice's own surrogate.
pub fn local_hopf_lax_step(
    slice: &Slice,
    x: &[f64],
    eps: f64,
    params: &HJParams,
    lipschitz: Option<f64>,
) -> Result<LocalStep> {
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("eps must be positive, got {eps}")));
    }
    let dim = slice.axes.len();
    if x.len() != dim || dim == 0 || dim > 2 {
        return Err(Error::Invalid(
            "point dimension does not match the slice".into(),
        ));
    }
    let lip = lipschitz.unwrap_or_else(|| slice.lipschitz_surrogate());
    let k = 4.0 * params.beta_plus * lip + 1.0;
    let radius = k * eps;
    for (ax, &xi) in slice.axes.iter().zip(x) {
        if xi - radius < ax[0] || xi + radius > ax[ax.len() - 1] {
            return Err(Error::BallNotCovered {
                center: x.to_vec(),
                required: radius,
            });
        }
    }
    let add = (params.kappa_star + params.beta_plus) * eps;
    let b4e = 4.0 * params.beta_plus * eps;
    let objective = |ij: &[usize]| -> Option<f64> {
        let y = slice.point(ij);
        if dist2(&y, x) > radius * radius {
            return None;
        }
        let v = slice.values[slice.flat(ij)];
        v.is_finite().then(|| v + add + dist2(&y, x) / b4e)
    };
    // Index range of the ball along each axis.
    let ranges: Vec<(usize, usize)> = slice
        .axes
        .iter()
        .zip(x)
        .map(|(ax, &xi)| {
            let lo = ax.partition_point(|&c| c < xi - radius);
            let hi = ax.partition_point(|&c| c <= xi + radius);
            (lo, hi)
        })
        .collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut ij = vec![0; dim];
    let counts: Vec<usize> = ranges.iter().map(|(lo, hi)| hi - lo).collect();
    let total: usize = counts.iter().product();
    for k in 0..total {
        let mut r = k;
        for a in 0..dim {
            ij[a] = ranges[a].0 + r % counts[a];
            r /= counts[a];
        }
        if let Some(v) = objective(&ij) {
            if best.as_ref().is_none_or(|b| v < b.1) {
                best = Some((ij.clone(), v));
            }
        }
    }
    let (ij, v) = best.ok_or_else(|| Error::BallNotCovered {
        center: x.to_vec(),
        required: radius,
    })?;
    // Per-axis parabola through the discrete minimum and its neighbours.
    let mut minimizer = slice.point(&ij);
    let mut value = v;
    for a in 0..dim {
        if ij[a] == 0 || ij[a] + 1 >= slice.axes[a].len() {
            continue;
        }
        let mut lo = ij.clone();
        let mut hi = ij.clone();
        lo[a] -= 1;
        hi[a] += 1;
        let (Some(fl), Some(fh)) = (objective(&lo), objective(&hi)) else {
            continue;
        };
        let h = slice.axes[a][ij[a] + 1] - slice.axes[a][ij[a]];
        let curv = fl - 2.0 * v + fh;
        if curv <= 0.0 {
            continue;
        }
        let shift = 0.5 * h * (fl - fh) / curv;
        minimizer[a] += shift;
        value -= (fl - fh) * (fl - fh) / (8.0 * curv);
    }
    Ok(LocalStep {
        value,
        minimizer,
        radius,
    })
}

/// Travelling-wave value at `x = (x′, x_n)` on the side `region_sign` of
/// the space-graph `x_n = h(x′)`:
/// `+1`: `inf_{y′} K₊·D − (κ/2β₊)(x_n − h(y′))`,
/// `−1`: `−inf_{y′} K₋·D − (κ/2β₋)(x_n − h(y′))`,
/// with `D = √(|x′−y′|² + (x_n − h(y′))²)`.
pub fn tw_value(
    x: &[f64],
    boundary: &BoundaryGraph,
    params: &HJParams,
    region_sign: i32,
) -> Result<f64> {
    let Some((&xn, xp)) = x.split_last() else {
        return Err(Error::Invalid(
            "point must have at least one coordinate".into(),
        ));
    };
    check_point(xp, boundary)?;
    let hx = boundary
        .height(xp)
        .ok_or_else(|| Error::Region(format!("boundary undefined at {xp:?}")))?;
    let (k, beta) = match region_sign {
        1 => (params.k_plus(), params.beta_plus),
        -1 => {
            params.require_backward()?;
            (params.k_minus(), params.beta_minus)
        }
        other => {
            return Err(Error::Invalid(format!(
                "region sign must be +1 or -1, got {other}"
            )))
        }
    };
    let inside = if region_sign == 1 { xn > hx } else { xn < hx };
    if !inside {
        return Err(Error::Region(format!(
            "x_n = {xn} is not on side {region_sign} of h(x') = {hx}"
        )));
    }
    let c = params.kappa / (2.0 * beta);
    let obj = |y: &[f64]| -> f64 {
        match boundary.height(y) {
            Some(h) => {
                let dn = xn - h;
                k * (dist2(xp, y) + dn * dn).sqrt() - c * dn
            }
            None => f64::INFINITY,
        }
    };
    // obj ≥ (K − c)·D, so minimizers satisfy |x′−y′| ≤ obj(x′)/(K − c).
    let g0 = obj(xp);
    let margin = k - c;
    let radius = if margin > 1e-12 * k {
        g0 / margin * (1.0 + 1e-9)
    } else {
        // Degenerate growth: search a generous multiple of the offset.
        100.0 * (xn - hx).abs()
    };
    let (_, v) = minimize_in_ball(obj, xp, radius)
        .ok_or_else(|| Error::Region("no feasible boundary point".into()))?;
    Ok(if region_sign == 1 { v } else { -v })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Characteristic {
    pub start_x: Vec<f64>,
    pub start_t: f64,
    pub p0: Vec<f64>,
    pub hit_time: f64,
    pub hit_point: Vec<f64>,
    pub value_at_start: f64,
    pub beta_plus: f64,
    /// `κ* + β₊ + β₊|p₀|²`.
    pub decay_rate: f64,
    /// `|h(hit_point) − hit_time|`; `None` where the boundary is undefined.
    pub residual: Option<f64>,
}

impl Characteristic {
    /// `x(s) = x₀ − 2β₊(t₀ − s)p₀`.
    pub fn point_at(&self, s: f64) -> Vec<f64> {
        self.start_x
            .iter()
            .zip(&self.p0)
            .map(|(x, p)| x - 2.0 * self.beta_plus * (self.start_t - s) * p)
            .collect()
    }

    pub fn value_at(&self, s: f64) -> f64 {
        self.value_at_start - self.decay_rate * (self.start_t - s)
    }
}

/// Straight backward characteristic from `(x0, t0)` with gradient `p0`
/// and value `value_at_start`, followed until the value reaches zero.
pub fn trace_characteristic(
    x0: &[f64],
    t0: f64,
    p0: &[f64],
    value_at_start: f64,
    boundary: &BoundaryGraph,
    params: &HJParams,
) -> Result<Characteristic> {
    check_point(x0, boundary)?;
    if p0.len() != x0.len() {
        return Err(Error::Invalid(
            "gradient and point differ in dimension".into(),
        ));
    }
    if !(value_at_start > 0.0) {
        return Err(Error::Invalid(format!(
            "value at start must be positive, got {value_at_start}"
        )));
    }
    let bp = params.beta_plus;
    let rate = params.kappa_star + bp + bp * dot(p0, p0);
    let hit_time = t0 - value_at_start / rate;
    let hit_point: Vec<f64> = x0
        .iter()
        .zip(p0)
        .map(|(x, p)| x - 2.0 * bp * (t0 - hit_time) * p)
        .collect();
    let residual = boundary.height(&hit_point).map(|h| (h - hit_time).abs());
    Ok(Characteristic {
        start_x: x0.to_vec(),
        start_t: t0,
        p0: p0.to_vec(),
        hit_time,
        hit_point,
        value_at_start,
        beta_plus: bp,
        decay_rate: rate,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EikonalSample {
    pub point: Vec<f64>,
    pub grad_sq: f64,
    /// `(|∇h|² − target) / target`.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EikonalResidual {
    pub target: f64,
    pub samples: Vec<EikonalSample>,
    pub ridge_points: usize,
    pub excluded_near_ridge: usize,
    pub max_abs_relative: f64,
    pub mean_abs_relative: f64,
}

/// Eikonal target: `1/κ*²` for time-graphs, `κ²/κ*² − 1` for space-graphs.
pub fn eikonal_target(orientation: Orientation, params: &HJParams) -> f64 {
    let ks2 = params.kappa_star * params.kappa_star;
    match orientation {
        Orientation::TimeGraph => 1.0 / ks2,
        Orientation::SpaceGraph => params.kappa * params.kappa / ks2 - 1.0,
    }
}

/// Centered-difference `|∇h|² − target` at valid samples whose full
/// stencil is valid. Samples where forward and backward one-sided
/// gradients differ by more than `RIDGE_JUMP` relative are ridge points;
/// samples within `ridge_margin` of a ridge point are left out.
pub fn eikonal_residual(
    graph: &LevelGraph,
    params: &HJParams,
    ridge_margin: f64,
) -> Result<EikonalResidual> {
    let target = eikonal_target(graph.orientation, params);
    let dim = graph.base_dim();
    if dim == 0 || dim > 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    let n: Vec<usize> = graph.axes.iter().map(Vec::len).collect();
    let flat = |ij: &[usize]| -> usize {
        match ij {
            [i] => *i,
            [i, j] => i + n[0] * j,
            _ => unreachable!(),
        }
    };
    struct Local {
        k: usize,
        central: f64,
        ridge: bool,
    }
    let locals: Vec<Local> = (0..graph.len())
        .into_par_iter()
        .filter_map(|k| {
            if !graph.valid[k] {
                return None;
            }
            let ij: Vec<usize> = match dim {
                1 => vec![k],
                _ => vec![k % n[0], k / n[0]],
            };
            let mut cen = 0.0;
            for a in 0..dim {
                if ij[a] == 0 || ij[a] + 1 >= n[a] {
                    return None;
                }
                let mut lo = ij.clone();
                let mut hi = ij.clone();
                lo[a] -= 1;
                hi[a] += 1;
                let (kl, kh) = (flat(&lo), flat(&hi));
                if !graph.valid[kl] || !graph.valid[kh] {
                    return None;
                }
                let ax = &graph.axes[a];
                let df = (graph.heights[kh] - graph.heights[k]) / (ax[hi[a]] - ax[ij[a]]);
                let db = (graph.heights[k] - graph.heights[kl]) / (ax[ij[a]] - ax[lo[a]]);
                let dc = (graph.heights[kh] - graph.heights[kl]) / (ax[hi[a]] - ax[lo[a]]);
                cen += dc * dc;
                let jump = (df - db).abs();
                if jump > RIDGE_JUMP * df.abs().max(db.abs()) && jump > 0.0 {
                    return Some(Local {
                        k,
                        central: cen,
                        ridge: true,
                    });
                }
            }
            Some(Local {
                k,
                central: cen,
                ridge: false,
            })
        })
        .collect();
    let ridges: Vec<Vec<f64>> = locals
        .iter()
        .filter(|l| l.ridge)
        .map(|l| graph.base_point(l.k))
        .collect();
    let margin2 = ridge_margin * ridge_margin;
    let mut excluded = 0;
    let mut samples = Vec::new();
    for l in locals.iter().filter(|l| !l.ridge) {
        let p = graph.base_point(l.k);
        if ridge_margin > 0.0 && ridges.iter().any(|r| dist2(r, &p) <= margin2) {
            excluded += 1;
            continue;
        }
        samples.push(EikonalSample {
            point: p,
            grad_sq: l.central,
            relative: (l.central - target) / target,
        });
    }
    let max_abs_relative = samples.iter().map(|s| s.relative.abs()).fold(0.0, f64::max);
    let mean_abs_relative = if samples.is_empty() {
        f64::NAN
    } else {
        samples.iter().map(|s| s.relative.abs()).sum::<f64>() / samples.len() as f64
    };
    Ok(EikonalResidual {
        target,
        samples,
        ridge_points: ridges.len(),
        excluded_near_ridge: excluded,
        max_abs_relative,
        mean_abs_relative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const KS: f64 = 0.353_553_390_593_273_8;
    const BP: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn params() -> HJParams {
        HJParams::new(KS, BP, BP, KS).unwrap()
    }

    fn xi_len() -> f64 {
        1.0 / KS
    }

    /// Grid scan with repeated zooming; independent of the library minimizer.
    fn zoom_search<F: Fn(&[f64]) -> f64>(f: F, center: &[f64], half: f64, rounds: usize) -> f64 {
        let mut c = center.to_vec();
        let mut h = half;
        let mut best = f64::INFINITY;
        let m = 200;
        for _ in 0..rounds {
            let mut arg = c.clone();
            let total = if c.len() == 1 {
                m + 1
            } else {
                (m + 1) * (m + 1)
            };
            for k in 0..total {
                let y: Vec<f64> = (0..c.len())
                    .map(|a| {
                        let i = if a == 0 { k % (m + 1) } else { k / (m + 1) };
                        c[a] - h + 2.0 * h * i as f64 / m as f64
                    })
                    .collect();
                let v = f(&y);
                if v < best {
                    best = v;
                    arg = y;
                }
            }
            c = arg;
            h *= 4.0 / m as f64;
        }
        best
    }

    #[test]
    fn k_constants_collapse_at_minimal_speed() {
        for theta in [0.1, 0.25, 0.4] {
            let spec = Nonlinearity::bistable_cubic(theta).unwrap();
            let ks = (1.0 - 2.0 * theta) / std::f64::consts::SQRT_2;
            let p = HJParams::from_spec(&spec, ks).unwrap();
            assert!((p.k_plus() - (1.0 + ks / (2.0 * p.beta_plus))).abs() <= 1e-12);
            assert!((p.k_minus() - (1.0 - ks / (2.0 * p.beta_minus))).abs() <= 1e-12);
        }
    }

    #[test]
    fn forward_planar_example() {
        let b = BoundaryGraph::Planar(vec![xi_len()]);
        b.check_admissible(KS).unwrap();
        let r = hopf_lax_forward(&[0.0], 1.0, &b, &params()).unwrap();
        assert!((r.value - 0.353_553_39).abs() < 1e-8);
        let b2 = BoundaryGraph::Planar(vec![xi_len(), 0.0]);
        let r = hopf_lax_forward(&[0.0, 0.0], 1.0, &b2, &params()).unwrap();
        assert!((r.value - KS).abs() < 1e-8);
    }

    #[test]
    fn forward_matches_brute_force_on_planar() {
        let xi = [0.6 * xi_len(), -0.8 * xi_len()];
        let b = BoundaryGraph::Planar(xi.to_vec());
        let (x, t) = ([0.4, -1.3], 5.0);
        let r = hopf_lax_forward(&x, t, &b, &params()).unwrap();
        let a = KS + BP;
        let brute = zoom_search(
            |y| {
                let s = t - (xi[0] * y[0] + xi[1] * y[1]);
                if s <= 0.0 {
                    f64::INFINITY
                } else {
                    a * s + dist2(&x, y) / (4.0 * BP * s)
                }
            },
            &x,
            10.0,
            6,
        );
        let exact = KS * (t - dot(&xi, &x));
        assert!((brute - exact).abs() < 1e-9);
        assert!((r.value - exact).abs() < 1e-9);
    }

    #[test]
    fn forward_flat_boundary() {
        let b = BoundaryGraph::Planar(vec![0.0, 0.0]);
        let r = hopf_lax_forward(&[1.5, -2.0], 1.0, &b, &params()).unwrap();
        assert!((r.value - (KS + BP)).abs() < 1e-10);
        assert!(dist2(&r.argopt, &[1.5, -2.0]).sqrt() < 1e-6);
    }

    #[test]
    fn forward_rejects_backward_points() {
        let b = BoundaryGraph::Planar(vec![xi_len()]);
        assert!(matches!(
            hopf_lax_forward(&[1.0], 1.0, &b, &params()),
            Err(Error::Region(_))
        ));
    }

    #[test]
    fn backward_planar_identity() {
        let b = BoundaryGraph::Planar(vec![0.0, xi_len()]);
        let (x, t) = ([0.3, 2.0], 1.0);
        let r = hopf_lax_backward(&x, t, &b, &params()).unwrap();
        let exact = KS * (t - xi_len() * 2.0);
        assert!(exact < 0.0);
        assert!((r.value - exact).abs() < 1e-9, "{} vs {exact}", r.value);
    }

    #[test]
    fn backward_flat_is_empty() {
        let b = BoundaryGraph::Planar(vec![0.0]);
        assert_eq!(
            hopf_lax_backward(&[0.5], -1.0, &b, &params()),
            Err(Error::EmptyAdmissibleSet)
        );
    }

    #[test]
    fn backward_requires_beta_minus_above_speed() {
        let p = HJParams::new(KS, BP, 0.5 * KS, KS).unwrap();
        let b = BoundaryGraph::Planar(vec![xi_len()]);
        assert!(matches!(
            hopf_lax_backward(&[1.0], 0.0, &b, &p),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn backward_v_front_matches_brute_force() {
        let l = xi_len();
        let xi = vec![vec![l, 0.0], vec![-l, 0.0]];
        let b = BoundaryGraph::support_set(xi.clone()).unwrap();
        let (x, t) = ([0.0, 0.0], -1.0);
        let r = hopf_lax_backward(&x, t, &b, &params()).unwrap();
        let c = KS - BP;
        let brute = -zoom_search(
            |y| {
                let h = support_representation(&xi, y).unwrap();
                if h >= t {
                    f64::INFINITY
                } else {
                    let s = t - h;
                    -(c * s - dist2(&x, y) / (4.0 * BP * s))
                }
            },
            &x,
            10.0,
            6,
        );
        assert!((r.value - brute).abs() < 1e-6, "{} vs {brute}", r.value);
    }

    fn planar_slice(xi: &[f64], t: f64, half: f64, step: f64) -> Slice {
        let n = (2.0 * half / step).round() as usize;
        let axis: Vec<f64> = (0..=n).map(|i| -half + i as f64 * step).collect();
        let axes = vec![axis; xi.len()];
        Slice::from_fn(axes, |y| KS * (t - dot(xi, y)))
    }

    #[test]
    fn local_step_reproduces_planar_solution() {
        let xi = [0.6 * xi_len(), 0.8 * xi_len()];
        let (t, eps) = (1.0, 0.25);
        let slice = planar_slice(&xi, t - eps, 4.0, 0.05);
        let x = [0.13, -0.21];
        let r = local_hopf_lax_step(&slice, &x, eps, &params(), None).unwrap();
        assert!((r.value - KS * (t - dot(&xi, &x))).abs() < 1e-8);
        // Minimizer sits at x − 2β₊ε∇Φ with ∇Φ = −κ*ξ.
        for a in 0..2 {
            let expected = x[a] + 2.0 * BP * eps * KS * xi[a];
            assert!((r.minimizer[a] - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn local_step_on_constant_slice() {
        let axis: Vec<f64> = (0..=80).map(|i| -2.0 + i as f64 * 0.05).collect();
        let slice = Slice::from_fn(vec![axis], |_| 0.7);
        let r = local_hopf_lax_step(&slice, &[0.1], 0.1, &params(), None).unwrap();
        assert!((r.value - (0.7 + (KS + BP) * 0.1)).abs() < 1e-12);
        assert!((r.minimizer[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn local_step_reports_uncovered_ball() {
        let xi = [xi_len()];
        let slice = planar_slice(&xi, 0.0, 1.0, 0.05);
        match local_hopf_lax_step(&slice, &[0.0], 1.0, &params(), None) {
            Err(Error::BallNotCovered { required, .. }) => {
                assert!((required - (4.0 * BP * KS * xi_len() + 1.0)).abs() < 1e-9)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn iterated_local_steps_match_forward_formula() {
        let xi = [xi_len()];
        let (t_end, n) = (1.0, 8);
        let eps = t_end / n as f64;
        let step = 0.01;
        let half = 6.0;
        let axis: Vec<f64> = (0..=(2.0 * half / step) as usize)
            .map(|i| -half + i as f64 * step)
            .collect();
        let t0 = 0.0;
        let mut slice = Slice::from_fn(vec![axis.clone()], |y| KS * (t0 - xi[0] * y[0]));
        let lip = KS * xi_len();
        for k in 1..=n {
            let reach = (4.0 * BP * lip + 1.0) * eps;
            let values = axis
                .iter()
                .map(|&x| {
                    if (x - axis[0]) < reach * k as f64
                        || (axis[axis.len() - 1] - x) < reach * k as f64
                    {
                        f64::NAN
                    } else {
                        local_hopf_lax_step(&slice, &[x], eps, &params(), Some(lip))
                            .unwrap()
                            .value
                    }
                })
                .collect();
            slice = Slice {
                axes: vec![axis.clone()],
                values,
            };
        }
        let b = BoundaryGraph::Planar(xi.to_vec());
        let x = -1.0;
        let i = ((x + half) / step).round() as usize;
        let hl = hopf_lax_forward(&[x], t_end, &b, &params()).unwrap().value;
        assert!(
            (slice.values[i] - hl).abs() < eps,
            "{} vs {hl}",
            slice.values[i]
        );
    }

    #[test]
    fn tw_value_flat_boundary() {
        let b = BoundaryGraph::Planar(vec![0.0]);
        let p = params();
        assert!((tw_value(&[0.2, 0.7], &b, &p, 1).unwrap() - 0.7).abs() < 1e-8);
        assert!((tw_value(&[0.2, -0.7], &b, &p, -1).unwrap() + 0.7).abs() < 1e-8);
        assert!(matches!(
            tw_value(&[0.2, -0.7], &b, &p, 1),
            Err(Error::Region(_))
        ));
    }

    #[test]
    fn tw_value_faster_drift_matches_brute_force() {
        let b = BoundaryGraph::Planar(vec![0.0]);
        let p = params().with_kappa(2.0 * KS);
        let v = tw_value(&[0.0, 1.0], &b, &p, 1).unwrap();
        let (k, c) = (p.k_plus(), p.kappa / (2.0 * p.beta_plus));
        let brute = zoom_search(|y| k * (y[0] * y[0] + 1.0).sqrt() - c, &[0.0], 20.0, 6);
        assert!((v - brute).abs() < 1e-9);
        assert!((v - (k - c)).abs() < 1e-9);
    }

    #[test]
    fn characteristic_example() {
        let b = BoundaryGraph::Planar(vec![xi_len()]);
        let c = trace_characteristic(&[0.0], 1.0, &[-1.0], KS, &b, &params()).unwrap();
        assert!((c.hit_time - 0.8).abs() < 1e-12);
        assert!((c.hit_point[0] - 0.282_842_712_474_619).abs() < 1e-12);
        assert!(c.residual.unwrap() <= 1e-8);
        assert!((c.value_at(c.hit_time)).abs() < 1e-12);
        assert_eq!(c.point_at(c.hit_time), c.hit_point);
    }

    #[test]
    fn characteristic_vertical_and_linear() {
        let b = BoundaryGraph::Planar(vec![0.0]);
        let c = trace_characteristic(&[0.3], 2.0, &[0.0], 0.5, &b, &params()).unwrap();
        assert_eq!(c.hit_point, vec![0.3]);
        assert!((c.hit_time - (2.0 - 0.5 / (KS + BP))).abs() < 1e-14);
        let d = trace_characteristic(&[0.3], 2.0, &[0.0], 1.0, &b, &params()).unwrap();
        assert!(((2.0 - d.hit_time) - 2.0 * (2.0 - c.hit_time)).abs() < 1e-14);
    }

    #[test]
    fn support_representation_examples() {
        let l = 2.828_43;
        let xi = vec![vec![l, 0.0], vec![-l, 0.0]];
        assert_eq!(support_representation(&xi, &[1.0, 0.0]).unwrap(), -l);
        assert_eq!(support_representation(&xi, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(
            support_representation(&xi[..1], &[0.5, 3.0]).unwrap(),
            0.5 * l
        );
        assert!(support_representation(&[], &[1.0]).is_err());
    }

    #[test]
    fn eikonal_residual_of_planar_and_v_front() {
        let axis: Vec<f64> = (0..=40).map(|i| -1.0 + i as f64 * 0.05).collect();
        let planar = BoundaryGraph::Planar(vec![0.6 / KS, 0.8 / KS]);
        let g = planar
            .sample(
                vec![axis.clone(), axis.clone()],
                Orientation::TimeGraph,
                0.5,
            )
            .unwrap();
        let r = eikonal_residual(&g, &params(), 0.0).unwrap();
        assert_eq!(r.ridge_points, 0);
        assert!(r.max_abs_relative < 1e-12);
        let v =
            BoundaryGraph::support_set(vec![vec![1.0 / KS, 0.0], vec![-1.0 / KS, 0.0]]).unwrap();
        let g = v
            .sample(vec![axis.clone(), axis], Orientation::TimeGraph, 0.5)
            .unwrap();
        let r = eikonal_residual(&g, &params(), 0.1).unwrap();
        assert!(r.ridge_points > 0);
        assert!(r.max_abs_relative < 1e-12);
        assert!(r.samples.iter().all(|s| s.point[0].abs() > 0.1));
    }

    proptest! {
        #[test]
        fn support_representation_is_homogeneous_and_concave(
            dirs in prop::collection::vec(0.0f64..std::f64::consts::TAU, 1..6),
            x in prop::array::uniform2(-5.0f64..5.0),
            y in prop::array::uniform2(-5.0f64..5.0),
            s in 0.01f64..50.0,
        ) {
            let xi: Vec<Vec<f64>> = dirs.iter().map(|a| vec![a.cos() / KS, a.sin() / KS]).collect();
            let hx = support_representation(&xi, &x).unwrap();
            let sx = [s * x[0], s * x[1]];
            let hsx = support_representation(&xi, &sx).unwrap();
            prop_assert!((hsx - s * hx).abs() <= 1e-12 * (1.0 + hsx.abs()));
            let hy = support_representation(&xi, &y).unwrap();
            let mid = [(x[0] + y[0]) / 2.0, (x[1] + y[1]) / 2.0];
            let hm = support_representation(&xi, &mid).unwrap();
            prop_assert!(hm >= 0.5 * (hx + hy) - 1e-12);
        }

        #[test]
        fn forward_planar_identity_random(
            angle in 0.0f64..std::f64::consts::TAU,
            x in prop::array::uniform2(-3.0f64..3.0),
            gap in 0.05f64..4.0,
        ) {
            let xi = vec![angle.cos() / KS, angle.sin() / KS];
            let t = dot(&xi, &x) + gap;
            let b = BoundaryGraph::Planar(xi);
            let r = hopf_lax_forward(&x, t, &b, &params()).unwrap();
            prop_assert!((r.value - KS * gap).abs() < 1e-8);
        }
    }
}
