//! Blow-down of simulated fronts: `Φ = g⁻¹∘u`, the rescaling
//! `Φ_ε(x,t) = εΦ(x/ε, t/ε)` (and `h_ε(x) = εh(x/ε)` for level graphs),
//! Cauchy diagnostics across an ε ladder and comparison with the
//! Hopf-Lax limit.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamilton_jacobi::{hopf_lax_backward, hopf_lax_forward, BoundaryGraph, HJParams};
use crate::levelset::{lipschitz_estimate, LevelGraph, Orientation};
use crate::numerics::fit_line;
use crate::rd_solver::{Boundary, Field, Grid};
use crate::wave1d::WaveProfile;

pub const DEFAULT_CLAMP: (f64, f64) = (1e-6, 1.0 - 1e-6);

/// `g⁻¹(u)` where `u` lies in the clamp band; `+∞` above it, `−∞` below.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiField {
    pub grid: Grid,
    pub time: f64,
    pub values: Vec<f64>,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
}

impl PhiField {
    pub fn finite_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }
}

pub fn phi_from_u(field: &Field, profile: &WaveProfile, clamp: (f64, f64)) -> Result<PhiField> {
    let (lo, hi) = clamp;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::Invalid(format!(
            "clamp band ({lo}, {hi}) must satisfy 0 < lo < hi < 1"
        )));
    }
    let values = field
        .values
        .par_iter()
        .map(|&u| {
            if u > hi {
                f64::INFINITY
            } else if u < lo {
                f64::NEG_INFINITY
            } else {
                profile.inverse(u).unwrap_or(f64::NAN)
            }
        })
        .collect();
    Ok(PhiField {
        grid: field.grid.clone(),
        time: field.time,
        values,
        clamp_lo: lo,
        clamp_hi: hi,
    })
}

/// Square (or interval) reference window `[−half_width, half_width]ⁿ`
/// sampled with `samples` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefWindow {
    pub half_width: f64,
    pub samples: usize,
}

impl RefWindow {
    pub fn axis(&self) -> Vec<f64> {
        let n = self.samples;
        (0..n)
            .map(|i| -self.half_width + 2.0 * self.half_width * i as f64 / (n - 1) as f64)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) || self.samples < 17 {
            return Err(Error::Invalid(
                "reference window needs a positive half-width and at least 17 samples".into(),
            ));
        }
        Ok(())
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    Ok(())
}

fn check_cover(extents: &[(f64, f64)], required: f64) -> Result<()> {
    let tol = 1e-9 * required.max(1.0);
    if extents
        .iter()
        .any(|&(lo, hi)| lo > -required + tol || hi < required - tol)
    {
        return Err(Error::WindowNotCovered { required });
    }
    Ok(())
}

/// Multilinear interpolation on grid values. Cells with a non-finite corner
/// take the value of the nearest node.
fn interpolate(grid: &Grid, values: &[f64], x: &[f64]) -> f64 {
    let dim = grid.dim();
    let mut lower = [0usize; 2];
    let mut frac = [0.0f64; 2];
    for a in 0..dim {
        let n = grid.nodes(a);
        let s = ((x[a] - grid.extents()[a].0) / grid.dx()).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        lower[a] = i;
        frac[a] = s - i as f64;
    }
    let corners = 1usize << dim;
    let mut acc = 0.0;
    let mut all_finite = true;
    let mut nearest = (f64::INFINITY, 0.0);
    for c in 0..corners {
        let mut ij = [0usize; 2];
        let mut w = 1.0;
        let mut d2 = 0.0;
        for a in 0..dim {
            let up = (c >> a) & 1 == 1;
            ij[a] = lower[a] + usize::from(up);
            let f = if up { frac[a] } else { 1.0 - frac[a] };
            w *= f;
            d2 += (1.0 - f) * (1.0 - f);
        }
        let v = values[grid.index(&ij[..dim])];
        if d2 < nearest.0 {
            nearest = (d2, v);
        }
        if w == 0.0 {
            continue;
        }
        if !v.is_finite() {
            all_finite = false;
        }
        acc += w * v;
    }
    if all_finite {
        acc
    } else {
        nearest.1
    }
}

fn window_grid(dim: usize, window: &RefWindow) -> Result<Grid> {
    let a = window.half_width;
    let dx = 2.0 * a / (window.samples - 1) as f64;
    Grid::new(vec![(-a, a); dim], dx, Boundary::Neumann)
}

/// `Φ_ε(x) = εΦ(x/ε)` on the reference window; the rescaled time is
/// `ε·time`.
pub fn rescale_phi(phi: &PhiField, eps: f64, window: &RefWindow) -> Result<PhiField> {
    check_eps(eps)?;
    window.validate()?;
    check_cover(phi.grid.extents(), window.half_width / eps)?;
    let grid = window_grid(phi.grid.dim(), window)?;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x: Vec<f64> = grid.position(k).iter().map(|c| c / eps).collect();
            let v = interpolate(&phi.grid, &phi.values, &x);
            if v.is_finite() {
                eps * v
            } else {
                v
            }
        })
        .collect();
    Ok(PhiField {
        grid,
        time: eps * phi.time,
        values,
        clamp_lo: phi.clamp_lo,
        clamp_hi: phi.clamp_hi,
    })
}

/// `h_ε(x) = εh(x/ε)` on the reference window; invalid where the source
/// graph is undefined.
pub fn rescale_graph(graph: &LevelGraph, eps: f64, window: &RefWindow) -> Result<LevelGraph> {
    check_eps(eps)?;
    window.validate()?;
    let extents: Vec<(f64, f64)> = graph
        .axes
        .iter()
        .map(|ax| (ax[0], ax[ax.len() - 1]))
        .collect();
    check_cover(&extents, window.half_width / eps)?;
    let axes = vec![window.axis(); graph.base_dim()];
    let probe = LevelGraph::from_fn(graph.orientation, graph.lambda, axes.clone(), |_| 0.0)?;
    let heights: Vec<f64> = (0..probe.len())
        .into_par_iter()
        .map(|k| {
            let x: Vec<f64> = probe.base_point(k).iter().map(|c| c / eps).collect();
            graph.height_at(&x).map_or(f64::NAN, |h| eps * h)
        })
        .collect();
    LevelGraph::new(graph.orientation, graph.lambda, axes, heights)
}

/// One level of an ε ladder, sampled on the shared reference window.
/// Non-finite values lie outside the finite band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaledLevel {
    pub eps: f64,
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl RescaledLevel {
    pub fn from_graph(eps: f64, graph: &LevelGraph) -> Self {
        Self {
            eps,
            axes: graph.axes.clone(),
            values: graph.heights.clone(),
        }
    }

    pub fn from_phi(eps: f64, phi: &PhiField) -> Self {
        Self {
            eps,
            axes: (0..phi.grid.dim())
                .map(|a| phi.grid.axis_coords(a))
                .collect(),
            values: phi.values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub eps: Vec<f64>,
    pub overlap_samples: usize,
    /// `sup |level_i − level_{i+1}|` on the overlap.
    pub sup_differences: Vec<f64>,
    /// Ratios of consecutive sup differences.
    pub decrement_factors: Vec<f64>,
    /// Per-level Lipschitz estimates on the overlap.
    pub lipschitz: Vec<f64>,
    /// Consecutive differences strictly decrease (or all vanish).
    pub cauchy: bool,
    /// `max lipschitz ≤ 2 · min lipschitz`.
    pub lipschitz_uniform: bool,
}

/// Compares consecutive ε levels on the samples finite in every level.
/// `mask` further restricts the compared region when given.
pub fn convergence_diagnostic(
    levels: &[RescaledLevel],
    mask: Option<&[bool]>,
) -> Result<ConvergenceReport> {
    if levels.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            found: levels.len(),
        });
    }
    let axes = &levels[0].axes;
    if levels.iter().any(|l| l.axes != *axes) {
        return Err(Error::Invalid(
            "levels are not sampled on the same window".into(),
        ));
    }
    let n = levels[0].values.len();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::Invalid("mask length differs from the window".into()));
        }
    }
    let overlap: Vec<bool> = (0..n)
        .map(|k| mask.is_none_or(|m| m[k]) && levels.iter().all(|l| l.values[k].is_finite()))
        .collect();
    let overlap_samples = overlap.iter().filter(|&&b| b).count();
    if overlap_samples == 0 {
        return Err(Error::EmptyOverlap);
    }
    let sup_differences: Vec<f64> = levels
        .windows(2)
        .map(|w| {
            (0..n)
                .filter(|&k| overlap[k])
                .map(|k| (w[0].values[k] - w[1].values[k]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let decrement_factors: Vec<f64> = sup_differences.windows(2).map(|d| d[1] / d[0]).collect();
    let cauchy = sup_differences.iter().all(|&d| d == 0.0)
        || sup_differences.windows(2).all(|d| d[1] < d[0]);
    let mut lipschitz = Vec::with_capacity(levels.len());
    for l in levels {
        let heights = (0..n)
            .map(|k| if overlap[k] { l.values[k] } else { f64::NAN })
            .collect();
        let g = LevelGraph::new(Orientation::TimeGraph, 0.0, l.axes.clone(), heights)?;
        lipschitz.push(lipschitz_estimate(&g)?.global_l);
    }
    let lmax = lipschitz.iter().copied().fold(0.0, f64::max);
    let lmin = lipschitz.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ConvergenceReport {
        eps: levels.iter().map(|l| l.eps).collect(),
        overlap_samples,
        sup_differences,
        decrement_factors,
        lipschitz,
        cauchy,
        lipschitz_uniform: lmax <= 2.0 * lmin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideStats {
    pub sup: f64,
    pub mean: f64,
    pub compared: usize,
    /// Samples where the representation could not be evaluated.
    pub failed: usize,
    /// Range of the compared `Φ_ε` values.
    pub value_range: f64,
}

impl SideStats {
    fn from_diffs(diffs: &[(f64, f64)], failed: usize) -> Self {
        let compared = diffs.len();
        let sup = diffs.iter().map(|d| d.0).fold(0.0, f64::max);
        let mean = if compared == 0 {
            f64::NAN
        } else {
            diffs.iter().map(|d| d.0).sum::<f64>() / compared as f64
        };
        let lo = diffs.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
        let hi = diffs.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
        Self {
            sup,
            mean,
            compared,
            failed,
            value_range: if compared == 0 { 0.0 } else { hi - lo },
        }
    }

    /// Fraction of attempted samples that were compared.
    pub fn coverage(&self) -> f64 {
        let total = self.compared + self.failed;
        if total == 0 {
            0.0
        } else {
            self.compared as f64 / total as f64
        }
    }

    /// `sup / value_range`.
    pub fn relative_sup(&self) -> f64 {
        self.sup / self.value_range
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjComparison {
    pub time: f64,
    pub plus: SideStats,
    pub minus: SideStats,
}

/// Compares finite samples of a rescaled `Φ_ε` with the forward (and, where
/// admissible, backward) Hopf-Lax value built on `boundary`. Every
/// `stride`-th sample along each axis is used; `region` optionally limits
/// the compared points.
pub fn compare_to_hj<R>(
    phi: &PhiField,
    boundary: &BoundaryGraph,
    params: &HJParams,
    stride: usize,
    region: R,
) -> Result<HjComparison>
where
    R: Fn(&[f64]) -> bool + Sync,
{
    if boundary.dim() != phi.grid.dim() {
        return Err(Error::Invalid(
            "boundary and field dimensions differ".into(),
        ));
    }
    let stride = stride.max(1);
    let t = phi.time;
    let points: Vec<usize> = (0..phi.grid.len())
        .filter(|&k| {
            phi.values[k].is_finite()
                && phi.grid.multi_index(k).iter().all(|i| i % stride == 0)
                && region(&phi.grid.position(k))
        })
        .collect();
    enum Outcome {
        Plus(f64, f64),
        Minus(f64, f64),
        PlusFailed,
        MinusFailed,
    }
    let outcomes: Vec<Outcome> = points
        .par_iter()
        .map(|&k| {
            let x = phi.grid.position(k);
            let v = phi.values[k];
            match boundary.height(&x) {
                Some(h) if t > h => match hopf_lax_forward(&x, t, boundary, params) {
                    Ok(r) => Outcome::Plus((v - r.value).abs(), v),
                    Err(_) => Outcome::PlusFailed,
                },
                Some(h) if t < h => match hopf_lax_backward(&x, t, boundary, params) {
                    Ok(r) => Outcome::Minus((v - r.value).abs(), v),
                    Err(_) => Outcome::MinusFailed,
                },
                _ if v >= 0.0 => Outcome::PlusFailed,
                _ => Outcome::MinusFailed,
            }
        })
        .collect();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    let (mut plus_failed, mut minus_failed) = (0, 0);
    for o in outcomes {
        match o {
            Outcome::Plus(d, v) => plus.push((d, v)),
            Outcome::Minus(d, v) => minus.push((d, v)),
            Outcome::PlusFailed => plus_failed += 1,
            Outcome::MinusFailed => minus_failed += 1,
        }
    }
    Ok(HjComparison {
        time: t,
        plus: SideStats::from_diffs(&plus, plus_failed),
        minus: SideStats::from_diffs(&minus, minus_failed),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemiconcavityReport {
    /// `max λ_max(∇²Φ)·Φ` over interior finite samples with `Φ > 0`.
    pub constant: f64,
    pub samples: usize,
}

/// Finite-difference semi-concavity constant of `Φ` on its finite band.
pub fn semiconcavity(phi: &PhiField) -> SemiconcavityReport {
    let grid = &phi.grid;
    let dim = grid.dim();
    let h2 = grid.dx() * grid.dx();
    let v = |ij: &[usize]| phi.values[grid.index(ij)];
    let (constant, samples) = (0..grid.len())
        .into_par_iter()
        .filter_map(|k| {
            let ij = grid.multi_index(k);
            if (0..dim).any(|a| ij[a] == 0 || ij[a] + 1 >= grid.nodes(a)) {
                return None;
            }
            let c = phi.values[k];
            if !(c.is_finite() && c > 0.0) {
                return None;
            }
            let shifted = |da: isize, db: isize| -> f64 {
                let mut p = ij.clone();
                p[0] = (p[0] as isize + da) as usize;
                if dim == 2 {
                    p[1] = (p[1] as isize + db) as usize;
                }
                v(&p)
            };
            let lam = if dim == 1 {
                (shifted(1, 0) - 2.0 * c + shifted(-1, 0)) / h2
            } else {
                let xx = (shifted(1, 0) - 2.0 * c + shifted(-1, 0)) / h2;
                let yy = (shifted(0, 1) - 2.0 * c + shifted(0, -1)) / h2;
                let xy = (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1))
                    / (4.0 * h2);
                0.5 * (xx + yy) + (0.25 * (xx - yy) * (xx - yy) + xy * xy).sqrt()
            };
            lam.is_finite().then_some((lam * c, 1usize))
        })
        .reduce(|| (f64::NEG_INFINITY, 0), |a, b| (a.0.max(b.0), a.1 + b.1));
    SemiconcavityReport { constant, samples }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    pub slope: f64,
    pub r2: f64,
    pub samples: usize,
}

/// Fits `ln u` against `t − h(x)` at nodes ahead of the front (`t < h(x)`)
/// with `u` in `[u_min, u_max]`.
pub fn tail_linearity(
    field: &Field,
    graph: &LevelGraph,
    u_min: f64,
    u_max: f64,
) -> Result<TailFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, &u) in field.values.iter().enumerate() {
        if !(u >= u_min && u <= u_max) {
            continue;
        }
        let x = field.grid.position(k);
        let Some(h) = graph.height_at(&x) else {
            continue;
        };
        if field.time < h {
            xs.push(field.time - h);
            ys.push(u.ln());
        }
    }
    let fit = fit_line(&xs, &ys).ok_or(Error::TooFewSamples {
        needed: 2,
        found: xs.len(),
    })?;
    Ok(TailFit {
        slope: fit.slope,
        r2: fit.r2,
        samples: xs.len(),
    })
}
