//! Explicit finite-difference solver for `∂ₜu − Δu = f(u)` in one and two
//! space dimensions.
//!
//! The update is forward Euler with the centered second-order Laplacian. It
//! reads only the previous snapshot, so rows can be updated in parallel and
//! the result does not depend on the number of workers. Under the step
//! bound enforced by [`max_stable_dt`] the scheme is monotone: ordered data
//! stay ordered and values stay in `[0, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::numerics::fit_line;

/// Minimum number of cells per axis.
pub const MIN_CELLS: usize = 16;
/// Measured fronts must stay at least this many cells from the boundary.
pub const BOUNDARY_GUARD_CELLS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Neumann,
    Periodic,
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neumann" => Ok(Boundary::Neumann),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(Error::Invalid(format!("unknown boundary '{other}'"))),
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Boundary::Neumann => "neumann",
            Boundary::Periodic => "periodic",
        })
    }
}

/// Uniform lattice on a box. Neumann grids carry nodes on both ends of each
/// axis; periodic grids identify `max` with `min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    extents: Vec<(f64, f64)>,
    dx: f64,
    boundary: Boundary,
    cells: Vec<usize>,
}

impl Grid {
    pub fn new(extents: Vec<(f64, f64)>, dx: f64, boundary: Boundary) -> Result<Self> {
        let dim = extents.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive, got {dx}"
            )));
        }
        let mut cells = Vec::with_capacity(dim);
        for &(lo, hi) in &extents {
            if !(hi > lo) {
                return Err(Error::InvalidGrid(format!("empty extent [{lo}, {hi}]")));
            }
            let n = ((hi - lo) / dx).round();
            if ((hi - lo) - n * dx).abs() > 1e-9 * (hi - lo) {
                return Err(Error::InvalidGrid(format!(
                    "extent [{lo}, {hi}] is not a multiple of dx = {dx}"
                )));
            }
            let n = n as usize;
            if n < MIN_CELLS {
                return Err(Error::InvalidGrid(format!(
                    "need at least {MIN_CELLS} cells per axis, got {n}"
                )));
            }
            cells.push(n);
        }
        Ok(Self {
            extents,
            dx,
            boundary,
            cells,
        })
    }

    pub fn line(lo: f64, hi: f64, dx: f64, boundary: Boundary) -> Result<Self> {
        Self::new(vec![(lo, hi)], dx, boundary)
    }

    pub fn square(lo: f64, hi: f64, dx: f64, boundary: Boundary) -> Result<Self> {
        Self::new(vec![(lo, hi), (lo, hi)], dx, boundary)
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extents
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Node count along `axis`.
    pub fn nodes(&self, axis: usize) -> usize {
        match self.boundary {
            Boundary::Neumann => self.cells[axis] + 1,
            Boundary::Periodic => self.cells[axis],
        }
    }

    pub fn len(&self) -> usize {
        (0..self.dim()).map(|a| self.nodes(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.extents[axis].0 + i as f64 * self.dx
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.nodes(axis)).map(|i| self.coord(axis, i)).collect()
    }

    /// Row-major flat index; axis 0 varies fastest.
    pub fn index(&self, ij: &[usize]) -> usize {
        match ij {
            [i] => *i,
            [i, j] => j * self.nodes(0) + i,
            _ => unreachable!(),
        }
    }

    pub fn multi_index(&self, k: usize) -> Vec<usize> {
        match self.dim() {
            1 => vec![k],
            _ => vec![k % self.nodes(0), k / self.nodes(0)],
        }
    }

    pub fn position(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coord(a, i))
            .collect()
    }
}

/// Largest step for which the explicit update is monotone:
/// `dt (2·dim/dx² + L_f) ≤ 1`.
pub fn max_stable_dt(grid: &Grid, spec: &Nonlinearity) -> f64 {
    let dx2 = grid.dx() * grid.dx();
    1.0 / (2.0 * grid.dim() as f64 / dx2 + spec.lipschitz())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: Grid,
    pub time: f64,
    pub values: Vec<f64>,
}

impl Field {
    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            time: 0.0,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(position)` at every node.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: &Grid, time: f64, f: F) -> Self {
        let values = (0..grid.len()).map(|k| f(&grid.position(k))).collect();
        Self {
            grid: grid.clone(),
            time,
            values,
        }
    }

    pub fn at(&self, ij: &[usize]) -> f64 {
        self.values[self.grid.index(ij)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Shifts values by `k` cells along `axis` (periodic wrap).
    pub fn shifted(&self, axis: usize, k: isize) -> Self {
        let n = self.grid.nodes(axis) as isize;
        let mut out = self.clone();
        for idx in 0..self.values.len() {
            let mut ij = self.grid.multi_index(idx);
            ij[axis] = ((ij[axis] as isize + k).rem_euclid(n)) as usize;
            out.values[self.grid.index(&ij)] = self.values[idx];
        }
        out
    }
}

/// `(1 − b)` inside the open ball `|x| < R`, zero outside.
pub fn init_indicator(grid: &Grid, radius: f64, b: f64) -> Result<Field> {
    if !(radius > 0.0) {
        return Err(Error::Invalid(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::Invalid(format!("b must lie in (0, 1), got {b}")));
    }
    for &(lo, hi) in grid.extents() {
        if !(lo < -radius && radius < hi) {
            return Err(Error::Invalid(format!(
                "ball of radius {radius} does not fit inside [{lo}, {hi}]"
            )));
        }
    }
    Ok(Field::from_fn(grid, 0.0, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 < radius * radius {
            1.0 - b
        } else {
            0.0
        }
    }))
}

/// Which worker pool runs the stencil updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Workers {
    /// Rayon's global pool (sized by `FRONTLAB_WORKERS` when the CLI starts).
    #[default]
    Global,
    /// A dedicated pool with this many threads.
    Fixed(usize),
}

/// Sizes rayon's global pool. Must run before any parallel work.
pub fn init_global_workers(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Invalid("worker count must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invalid(e.to_string()))
}

fn check_dt(grid: &Grid, spec: &Nonlinearity, dt: f64) -> Result<()> {
    let max_dt = max_stable_dt(grid, spec);
    if !(dt > 0.0) || dt > max_dt {
        return Err(Error::Cfl { dt, max_dt });
    }
    Ok(())
}

#[inline]
fn reflect(i: isize, n: isize, boundary: Boundary) -> usize {
    match boundary {
        Boundary::Periodic => i.rem_euclid(n) as usize,
        Boundary::Neumann => {
            if i < 0 {
                (-i) as usize
            } else if i >= n {
                (2 * (n - 1) - i) as usize
            } else {
                i as usize
            }
        }
    }
}

fn update_row(src: &[f64], dst: &mut [f64], grid: &Grid, spec: &Nonlinearity, dt: f64, row: usize) {
    let nx = grid.nodes(0) as isize;
    let r = dt / (grid.dx() * grid.dx());
    let bc = grid.boundary();
    match grid.dim() {
        1 => {
            for (i, out) in dst.iter_mut().enumerate() {
                let ii = i as isize;
                let u = src[i];
                let l = src[reflect(ii - 1, nx, bc)];
                let rr = src[reflect(ii + 1, nx, bc)];
                let v = u + r * (l + rr - 2.0 * u) + dt * spec.value(u);
                *out = v.clamp(0.0, 1.0);
            }
        }
        _ => {
            let ny = grid.nodes(1) as isize;
            let jj = row as isize;
            let base = row * nx as usize;
            let down = reflect(jj - 1, ny, bc) * nx as usize;
            let up = reflect(jj + 1, ny, bc) * nx as usize;
            for (i, out) in dst.iter_mut().enumerate() {
                let ii = i as isize;
                let u = src[base + i];
                let l = src[base + reflect(ii - 1, nx, bc)];
                let rr = src[base + reflect(ii + 1, nx, bc)];
                let d = src[down + i];
                let uu = src[up + i];
                let v = u + r * (l + rr + d + uu - 4.0 * u) + dt * spec.value(u);
                *out = v.clamp(0.0, 1.0);
            }
        }
    }
}

fn step_into(src: &Field, dst: &mut Field, spec: &Nonlinearity, dt: f64) {
    let grid = &src.grid;
    let row_len = match grid.dim() {
        1 => grid.len(),
        _ => grid.nodes(0),
    };
    if grid.dim() == 1 {
        // One row: split into fixed chunks; each node still reads only `src`.
        const CHUNK: usize = 4096;
        let n = grid.len();
        let nx = n as isize;
        let r = dt / (grid.dx() * grid.dx());
        let bc = grid.boundary();
        dst.values
            .par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| {
                let off = c * CHUNK;
                for (k, out) in chunk.iter_mut().enumerate() {
                    let i = (off + k) as isize;
                    let u = src.values[off + k];
                    let l = src.values[reflect(i - 1, nx, bc)];
                    let rr = src.values[reflect(i + 1, nx, bc)];
                    let v = u + r * (l + rr - 2.0 * u) + dt * spec.value(u);
                    *out = v.clamp(0.0, 1.0);
                }
            });
    } else {
        dst.values
            .par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(j, row)| update_row(&src.values, row, grid, spec, dt, j));
    }
    dst.time = src.time + dt;
}

/// One explicit step of size `dt`.
pub fn step(field: &Field, spec: &Nonlinearity, dt: f64) -> Result<Field> {
    check_dt(&field.grid, spec, dt)?;
    let mut out = field.clone();
    step_into(field, &mut out, spec, dt);
    Ok(out)
}

/// Sequential reference update used to cross-check the parallel kernel.
pub fn step_sequential(field: &Field, spec: &Nonlinearity, dt: f64) -> Result<Field> {
    check_dt(&field.grid, spec, dt)?;
    let mut out = field.clone();
    let grid = &field.grid;
    match grid.dim() {
        1 => update_row(&field.values, &mut out.values, grid, spec, dt, 0),
        _ => {
            let nx = grid.nodes(0);
            for j in 0..grid.nodes(1) {
                let (row, _) = out.values[j * nx..].split_at_mut(nx);
                update_row(&field.values, row, grid, spec, dt, j);
            }
        }
    }
    out.time = field.time + dt;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub spec: Nonlinearity,
    pub initial: Field,
    pub t_final: f64,
    pub dt: f64,
    /// Record a snapshot every this many steps (the final state is always
    /// recorded).
    pub record_every: usize,
    pub workers: Workers,
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        if self.t_final <= 0.0 {
            0
        } else {
            (self.t_final / self.dt - 1e-9).ceil() as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSeries {
    pub snapshots: Vec<Field>,
    pub dt_record: f64,
}

impl SnapshotSeries {
    pub fn new(dt_record: f64) -> Self {
        Self {
            snapshots: Vec::new(),
            dt_record,
        }
    }

    /// Appends a snapshot; times must increase and the grid must match.
    pub fn push(&mut self, field: Field) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if !(field.time > last.time) {
                return Err(Error::Invalid(format!(
                    "snapshot time {} does not exceed {}",
                    field.time, last.time
                )));
            }
            if field.grid != last.grid {
                return Err(Error::Invalid(
                    "snapshot grid differs from the series grid".into(),
                ));
            }
        }
        self.snapshots.push(field);
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|f| f.time).collect()
    }

    pub fn grid(&self) -> Option<&Grid> {
        self.snapshots.first().map(|f| &f.grid)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Snapshots with `t_a <= time <= t_b`.
    pub fn window(&self, t_a: f64, t_b: f64) -> SnapshotSeries {
        SnapshotSeries {
            snapshots: self
                .snapshots
                .iter()
                .filter(|f| f.time >= t_a && f.time <= t_b)
                .cloned()
                .collect(),
            dt_record: self.dt_record,
        }
    }
}

fn with_workers<T: Send>(workers: Workers, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Workers::Global => Ok(job()),
        Workers::Fixed(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Invalid(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs the configured simulation, handing every recorded snapshot to
/// `observe` instead of storing it. Returns the final field.
pub fn simulate_streaming<O>(config: &SimConfig, mut observe: O) -> Result<Field>
where
    O: FnMut(&Field) -> Result<()> + Send,
{
    check_dt(&config.initial.grid, &config.spec, config.dt)?;
    if config.record_every == 0 {
        return Err(Error::Invalid("record_every must be at least 1".into()));
    }
    let steps = config.steps();
    let t0 = config.initial.time;
    with_workers(config.workers, || {
        let mut current = config.initial.clone();
        let mut next = config.initial.clone();
        observe(&current)?;
        for n in 1..=steps {
            step_into(&current, &mut next, &config.spec, config.dt);
            next.time = t0 + n as f64 * config.dt;
            std::mem::swap(&mut current, &mut next);
            if n % config.record_every == 0 || n == steps {
                observe(&current)?;
            }
        }
        Ok(current)
    })?
}

/// Runs the configured simulation and stores every recorded snapshot.
pub fn simulate(config: &SimConfig) -> Result<SnapshotSeries> {
    let mut series = SnapshotSeries::new(config.record_every as f64 * config.dt);
    simulate_streaming(config, |f| series.push(f.clone()))?;
    Ok(series)
}

/// Smallest indicator radius in `[r_lo, r_hi]` (to within `tol`) whose
/// solution still exceeds `1 − b` somewhere at `t_final`.
///
/// Returns `None` when even `r_hi` fails to ignite. Assumes ignition is
/// monotone in the radius, which holds by comparison.
pub fn probe_ignition_radius(
    grid: &Grid,
    spec: &Nonlinearity,
    b: f64,
    dt: f64,
    t_final: f64,
    (r_lo, r_hi): (f64, f64),
    tol: f64,
) -> Result<Option<f64>> {
    if !(r_lo > 0.0 && r_lo < r_hi && tol > 0.0) {
        return Err(Error::Invalid(format!(
            "bad probe bracket [{r_lo}, {r_hi}] with tol {tol}"
        )));
    }
    let ignites = |r: f64| -> Result<bool> {
        let cfg = SimConfig {
            spec: spec.clone(),
            initial: init_indicator(grid, r, b)?,
            t_final,
            dt,
            record_every: usize::MAX,
            workers: Workers::Global,
        };
        Ok(simulate_streaming(&cfg, |_| Ok(()))?.max() > 1.0 - b)
    };
    if !ignites(r_hi)? {
        return Ok(None);
    }
    if ignites(r_lo)? {
        return Ok(Some(r_lo));
    }
    let (mut lo, mut hi) = (r_lo, r_hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ignites(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Position of the rightmost `lambda` crossing along axis 0 (through the
/// middle row in 2D), by linear interpolation between nodes.
pub fn rightmost_crossing(field: &Field, lambda: f64) -> Option<f64> {
    let grid = &field.grid;
    let nx = grid.nodes(0);
    let row = match grid.dim() {
        1 => 0,
        _ => grid.nodes(1) / 2,
    };
    let line = &field.values[row * nx..row * nx + nx];
    for i in (0..nx - 1).rev() {
        let (a, b) = (line[i] - lambda, line[i + 1] - lambda);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        if a * b <= 0.0 && a != b {
            let s = a / (a - b);
            return Some(grid.coord(0, i) + s * grid.dx());
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontSpeed {
    /// Magnitude of the fitted front velocity.
    pub speed: f64,
    /// Signed slope of position against time.
    pub velocity: f64,
    pub r2: f64,
    pub samples: usize,
}

/// Least-squares speed of the rightmost `lambda` crossing over the recorded
/// times in `[t_a, t_b]`.
pub fn measure_front_speed(
    series: &SnapshotSeries,
    lambda: f64,
    window: (f64, f64),
) -> Result<FrontSpeed> {
    let mut times = Vec::new();
    let mut positions = Vec::new();
    for field in series
        .snapshots
        .iter()
        .filter(|f| f.time >= window.0 && f.time <= window.1)
    {
        let x = rightmost_crossing(field, lambda).ok_or(Error::LevelAbsent {
            lambda,
            time: field.time,
        })?;
        let (lo, hi) = field.grid.extents()[0];
        let guard = BOUNDARY_GUARD_CELLS * field.grid.dx();
        if x - lo < guard || hi - x < guard {
            return Err(Error::FrontNearBoundary {
                position: x,
                cells: ((x - lo).min(hi - x) / field.grid.dx()).floor(),
                time: field.time,
            });
        }
        times.push(field.time);
        positions.push(x);
    }
    let fit = fit_line(&times, &positions).ok_or(Error::TooFewSamples {
        needed: 2,
        found: times.len(),
    })?;
    Ok(FrontSpeed {
        speed: fit.slope.abs(),
        velocity: fit.slope,
        r2: fit.r2,
        samples: times.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeEntry {
    pub time: f64,
    pub radius: f64,
    /// Minimum of `u` over grid nodes inside the cone section; `None` when
    /// the section holds no node.
    pub min_u: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeReport {
    pub threshold: f64,
    pub speed: f64,
    pub entries: Vec<ConeEntry>,
    pub pass: bool,
    /// Earliest recorded time at which the check failed.
    pub first_failure: Option<f64>,
}

/// Checks `u > 1 − b` on `{|x| < (κ* − δ)(t − D)}` for every recorded
/// `t ≥ D`, with the cone apex at the origin.
pub fn check_cone_propagation(
    series: &SnapshotSeries,
    kappa_star: f64,
    b: f64,
    delta: f64,
    d_grace: f64,
) -> ConeReport {
    let speed = kappa_star - delta;
    let threshold = 1.0 - b;
    let mut entries = Vec::new();
    for field in series.snapshots.iter().filter(|f| f.time >= d_grace) {
        let radius = speed * (field.time - d_grace);
        let r2 = radius * radius;
        let mut min_u: Option<f64> = None;
        if radius > 0.0 {
            for (k, &v) in field.values.iter().enumerate() {
                let x = field.grid.position(k);
                let d2: f64 = x.iter().map(|c| c * c).sum();
                if d2 < r2 {
                    min_u = Some(min_u.map_or(v, |m: f64| m.min(v)));
                }
            }
        }
        let pass = min_u.is_none_or(|m| m > threshold);
        entries.push(ConeEntry {
            time: field.time,
            radius,
            min_u,
            pass,
        });
    }
    let first_failure = entries.iter().find(|e| !e.pass).map(|e| e.time);
    ConeReport {
        threshold,
        speed,
        pass: first_failure.is_none(),
        entries,
        first_failure,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cubic() -> Nonlinearity {
        Nonlinearity::bistable_cubic(0.25).unwrap()
    }

    #[test]
    fn indicator_values() {
        let grid = Grid::line(-50.0, 150.0, 0.01, Boundary::Neumann).unwrap();
        let f = init_indicator(&grid, 10.0, 0.05).unwrap();
        let at = |x: f64| f.values[((x + 50.0) / 0.01).round() as usize];
        assert_eq!(at(0.0), 0.95);
        assert_eq!(at(20.0), 0.0);
        assert_eq!(at(-9.99), 0.95);
        assert_eq!(f.time, 0.0);
    }

    #[test]
    fn indicator_must_fit() {
        let grid = Grid::line(-50.0, 150.0, 0.1, Boundary::Neumann).unwrap();
        assert!(init_indicator(&grid, 60.0, 0.05).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::line(0.0, 1.0, 0.1, Boundary::Neumann).is_err());
        assert!(Grid::line(0.0, 10.0, 0.3, Boundary::Neumann).is_err());
        assert!(matches!(
            Grid::new(vec![(0.0, 2.0); 3], 0.1, Boundary::Neumann),
            Err(Error::UnsupportedDimension(3))
        ));
        let g = Grid::line(-50.0, 150.0, 0.1, Boundary::Neumann).unwrap();
        assert_eq!(g.len(), 2001);
        let p = Grid::line(0.0, 10.0, 0.5, Boundary::Periodic).unwrap();
        assert_eq!(p.len(), 20);
    }

    #[test]
    fn equilibria_are_fixed() {
        let grid = Grid::line(0.0, 10.0, 0.1, Boundary::Neumann).unwrap();
        for v in [0.0, 1.0] {
            let f = Field::constant(&grid, v);
            let out = step(&f, &cubic(), 1e-3).unwrap();
            assert!(out.values.iter().all(|&x| x == v));
        }
    }

    #[test]
    fn flat_half_state_grows_by_reaction() {
        let grid = Grid::line(0.0, 10.0, 0.1, Boundary::Neumann).unwrap();
        let f = Field::constant(&grid, 0.5);
        let out = step(&f, &cubic(), 1e-3).unwrap();
        for v in out.values {
            assert!((v - 0.500_062_5).abs() < 1e-15);
        }
    }

    #[test]
    fn cfl_violation_reports_bound() {
        let grid = Grid::line(0.0, 10.0, 0.1, Boundary::Neumann).unwrap();
        let f = Field::constant(&grid, 0.5);
        match step(&f, &cubic(), 0.01) {
            Err(Error::Cfl { max_dt, .. }) => {
                assert!(max_dt < 0.005 && max_dt > 0.0049);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parallel_matches_sequential_2d() {
        let grid = Grid::square(-8.0, 8.0, 0.25, Boundary::Neumann).unwrap();
        let f = Field::from_fn(&grid, 0.0, |x| {
            (0.5 + 0.4 * (x[0] * 0.7).sin() * (x[1] * 0.3).cos()).clamp(0.0, 1.0)
        });
        let dt = 0.9 * max_stable_dt(&grid, &cubic());
        let a = step(&f, &cubic(), dt).unwrap();
        let b = step_sequential(&f, &cubic(), dt).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn simulate_zero_horizon_returns_initial() {
        let grid = Grid::line(0.0, 10.0, 0.1, Boundary::Neumann).unwrap();
        let init = Field::constant(&grid, 0.3);
        let cfg = SimConfig {
            spec: cubic(),
            initial: init.clone(),
            t_final: 0.0,
            dt: 1e-3,
            record_every: 10,
            workers: Workers::Global,
        };
        let s = simulate(&cfg).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.snapshots[0], init);
    }

    #[test]
    fn simulate_keeps_one_fixed() {
        let grid = Grid::line(0.0, 10.0, 0.1, Boundary::Neumann).unwrap();
        let cfg = SimConfig {
            spec: cubic(),
            initial: Field::constant(&grid, 1.0),
            t_final: 1.0,
            dt: 2e-3,
            record_every: 50,
            workers: Workers::Global,
        };
        let s = simulate(&cfg).unwrap();
        assert!(s.snapshots.last().unwrap().time >= 1.0 - 2e-3);
        assert!(s
            .snapshots
            .iter()
            .all(|f| f.values.iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn stationary_field_has_no_front() {
        let grid = Grid::line(0.0, 10.0, 0.1, Boundary::Neumann).unwrap();
        let mut s = SnapshotSeries::new(1.0);
        for t in 0..3 {
            let mut f = Field::constant(&grid, 0.5);
            f.time = t as f64;
            s.push(f).unwrap();
        }
        assert!(matches!(
            measure_front_speed(&s, 0.5, (0.0, 2.0)),
            Err(Error::LevelAbsent { .. })
        ));
    }

    #[test]
    fn cone_passes_for_saturated_series() {
        let grid = Grid::line(-20.0, 20.0, 0.5, Boundary::Neumann).unwrap();
        let mut s = SnapshotSeries::new(10.0);
        for t in 0..6 {
            let mut f = Field::constant(&grid, 1.0);
            f.time = 10.0 * t as f64;
            s.push(f).unwrap();
        }
        let r = check_cone_propagation(&s, 0.35, 0.05, 0.035, 30.0);
        assert!(r.pass);
        assert_eq!(r.entries.len(), 3);
    }

    #[test]
    fn series_rejects_time_reversal() {
        let grid = Grid::line(0.0, 10.0, 0.1, Boundary::Neumann).unwrap();
        let mut s = SnapshotSeries::new(1.0);
        s.push(Field::constant(&grid, 0.0)).unwrap();
        assert!(s.push(Field::constant(&grid, 0.0)).is_err());
    }

    #[test]
    fn ignition_radius_is_bracketed() {
        let grid = Grid::line(-20.0, 20.0, 0.2, Boundary::Neumann).unwrap();
        let dt = 0.4 * 0.04;
        let r = probe_ignition_radius(&grid, &cubic(), 0.05, dt, 40.0, (0.2, 4.0), 0.05)
            .unwrap()
            .unwrap();
        assert!(r > 0.5 && r < 3.0, "{r}");
        let none =
            probe_ignition_radius(&grid, &cubic(), 0.05, dt, 40.0, (0.05, 0.1), 0.01).unwrap();
        assert!(none.is_none());
    }

    fn arb_field_1d(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, n)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn comparison_principle(a in arb_field_1d(41), gap in arb_field_1d(41), steps in 1usize..20) {
            let grid = Grid::line(0.0, 8.0, 0.2, Boundary::Neumann).unwrap();
            let mut u = Field::from_fn(&grid, 0.0, |_| 0.0);
            u.values.clone_from(&a);
            let mut v = u.clone();
            for (x, g) in v.values.iter_mut().zip(&gap) {
                *x = (*x + g * (1.0 - *x)).min(1.0);
            }
            let dt = max_stable_dt(&grid, &cubic());
            for _ in 0..steps {
                u = step(&u, &cubic(), dt).unwrap();
                v = step(&v, &cubic(), dt).unwrap();
                for (x, y) in u.values.iter().zip(&v.values) {
                    prop_assert!(x <= y);
                }
            }
        }

        #[test]
        fn invariant_region(a in arb_field_1d(41), theta in 0.05f64..0.45) {
            let spec = Nonlinearity::bistable_cubic(theta).unwrap();
            let grid = Grid::line(0.0, 8.0, 0.2, Boundary::Periodic).unwrap();
            let mut u = Field::constant(&grid, 0.0);
            u.values.copy_from_slice(&a[..40]);
            let dt = max_stable_dt(&grid, &spec);
            for _ in 0..50 {
                u = step(&u, &spec, dt).unwrap();
                prop_assert!(u.min() >= 0.0 && u.max() <= 1.0);
            }
        }

        #[test]
        fn periodic_translation_commutes(seed in prop::collection::vec(0.0f64..=1.0, 16 * 16), k in -15isize..16, axis in 0usize..2) {
            let grid = Grid::square(0.0, 4.0, 0.25, Boundary::Periodic).unwrap();
            let mut u = Field::constant(&grid, 0.0);
            u.values.copy_from_slice(&seed);
            let dt = 0.9 * max_stable_dt(&grid, &cubic());
            let a = step(&u.shifted(axis, k), &cubic(), dt).unwrap();
            let b = step(&u, &cubic(), dt).unwrap().shifted(axis, k);
            prop_assert_eq!(a.values, b.values);
        }

        #[test]
        fn worker_count_does_not_change_result(seed in prop::collection::vec(0.0f64..=1.0, 17 * 17)) {
            let grid = Grid::square(-2.0, 2.0, 0.25, Boundary::Neumann).unwrap();
            let mut u = Field::constant(&grid, 0.0);
            u.values.copy_from_slice(&seed);
            let run = |workers| {
                let cfg = SimConfig {
                    spec: cubic(),
                    initial: u.clone(),
                    t_final: 0.5,
                    dt: 0.01,
                    record_every: 10,
                    workers,
                };
                simulate(&cfg).unwrap()
            };
            let one = run(Workers::Fixed(1));
            prop_assert_eq!(&one, &run(Workers::Fixed(4)));
            prop_assert_eq!(&one, &run(Workers::Global));
        }
    }
}
