use std::path::{Path, PathBuf};

use frontlab::blowdown::{
    compare_to_hj, convergence_diagnostic, phi_from_u, rescale_graph, rescale_phi, RefWindow,
    RescaledLevel, DEFAULT_CLAMP,
};
use frontlab::config::RunConfig;
use frontlab::hamilton_jacobi::{
    eikonal_residual, hopf_lax_backward, hopf_lax_forward, support_representation,
    trace_characteristic, tw_value, BoundaryGraph, HJParams,
};
use frontlab::io::{
    fmt_f64, format_snapshot, parse_points, read_graph, read_snapshot, read_text, write_atomic,
    write_graph, write_json, write_snapshot,
};
use frontlab::levelset::{
    extract_graph_space, lipschitz_estimate, LevelGraph, Orientation, TimeGraphBuilder,
};
use frontlab::nonlinearity::Nonlinearity;
use frontlab::rd_solver::{
    check_cone_propagation, max_stable_dt, measure_front_speed, simulate_streaming, Field, Grid,
    SimConfig, SnapshotSeries, Workers,
};
use frontlab::verify::{run_suite, Suite};
use frontlab::wave1d::{compute_profile, minimal_speed};
use frontlab::{Error, Result};
use serde_json::{json, Value};

use crate::HjSetup;

const SPEED_TOL: f64 = 1e-10;
const DEFAULT_LAMBDA: f64 = 0.5;
const DEFAULT_EPS: [f64; 3] = [0.25, 0.125, 0.0625];
const DEFAULT_WINDOW_SAMPLES: usize = 241;
const DEFAULT_D_GRACE: f64 = 30.0;
const RIDGE_MARGIN: f64 = 0.5;

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    emit(&text)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

struct Setup {
    config: RunConfig,
    spec: Nonlinearity,
    grid: Grid,
    kappa_star: f64,
    dt: f64,
    record_every: usize,
    workers: Workers,
}

fn setup(config_path: &Path) -> Result<Setup> {
    let config = RunConfig::from_file(config_path)?;
    let spec = config.build_spec()?;
    let grid = config.build_grid()?;
    let kappa_star = minimal_speed(&spec, SPEED_TOL)?;
    let dt = config.time.dt.unwrap_or(0.9 * max_stable_dt(&grid, &spec));
    // Default: the front moves at most half a cell between records.
    let record_every = config
        .time
        .record_every
        .unwrap_or_else(|| ((grid.dx() / (2.0 * kappa_star)) / dt).floor().max(1.0) as usize);
    let workers = config.time.workers.map_or(Workers::Global, Workers::Fixed);
    Ok(Setup {
        config,
        spec,
        grid,
        kappa_star,
        dt,
        record_every,
        workers,
    })
}

fn sim_config(s: &Setup) -> Result<SimConfig> {
    Ok(SimConfig {
        spec: s.spec.clone(),
        initial: s.config.build_initial(&s.grid, &s.spec)?,
        t_final: s.config.time.t_final,
        dt: s.dt,
        record_every: s.record_every,
        workers: s.workers,
    })
}

pub fn wave(config_path: &Path, out: Option<&Path>) -> Result<bool> {
    let config = RunConfig::from_file(config_path)?;
    let spec = config.build_spec()?;
    let profile = compute_profile(&spec)?;
    if let Some(out) = out {
        let mut csv = String::from("t,g,g_prime\n");
        for i in 0..profile.t_grid.len() {
            csv.push_str(&format!(
                "{},{},{}\n",
                fmt_f64(profile.t_grid[i]),
                fmt_f64(profile.g_values[i]),
                fmt_f64(profile.g_prime[i])
            ));
        }
        write_atomic(out, csv.as_bytes())?;
    }
    print_json(&json!({
        "kind": format!("{:?}", spec.kind()),
        "theta": spec.theta(),
        "kappa_star": profile.kappa_star,
        "beta_plus": profile.beta_plus,
        "beta_minus": profile.beta_minus,
        "alpha_plus": profile.alpha_plus,
        "alpha_minus": profile.alpha_minus,
        "fitted_beta_plus": profile.fitted_beta_plus,
        "fitted_beta_minus": profile.fitted_beta_minus,
        "residual": profile.residual,
        "samples": profile.t_grid.len(),
    }))?;
    Ok(true)
}

/// Middle row of a 2D field as a 1D field (the row the speed is read on).
fn middle_row(field: &Field) -> Result<Field> {
    if field.grid.dim() == 1 {
        return Ok(field.clone());
    }
    let grid = Grid::new(
        vec![field.grid.extents()[0]],
        field.grid.dx(),
        field.grid.boundary(),
    )?;
    let nx = field.grid.nodes(0);
    let j = field.grid.nodes(1) / 2;
    Ok(Field {
        grid,
        time: field.time,
        values: field.values[j * nx..(j + 1) * nx].to_vec(),
    })
}

pub fn simulate(config_path: &Path, out: &Path) -> Result<bool> {
    let s = setup(config_path)?;
    let cfg = sim_config(&s)?;
    create_dir(out)?;
    let a = &s.config.analysis;
    let record_start = s.config.time.record_start.unwrap_or(f64::NEG_INFINITY);
    let cone = a.cone_b.zip(a.cone_delta);
    let d_grace = a.d_grace.unwrap_or(DEFAULT_D_GRACE);
    let mut rows = SnapshotSeries::new(s.record_every as f64 * s.dt);
    let mut cone_entries = Vec::new();
    let mut files = Vec::new();
    simulate_streaming(&cfg, |f| {
        if f.time >= record_start {
            let name = format!("snapshot_{:05}.txt", files.len());
            write_snapshot(&out.join(&name), f)?;
            files.push(json!({ "file": name, "time": f.time }));
        }
        if a.speed_window.is_some() {
            rows.push(middle_row(f)?)?;
        }
        if let Some((b, delta)) = cone {
            let mut one = SnapshotSeries::new(rows.dt_record);
            one.push(f.clone())?;
            cone_entries
                .extend(check_cone_propagation(&one, s.kappa_star, b, delta, d_grace).entries);
        }
        Ok(())
    })?;
    let mut analysis = serde_json::Map::new();
    if let Some(window) = a.speed_window {
        let lambda = a
            .lambda
            .as_ref()
            .and_then(|l| l.first().copied())
            .unwrap_or(DEFAULT_LAMBDA);
        let speed = measure_front_speed(&rows, lambda, window)?;
        analysis.insert(
            "front_speed".into(),
            json!({
                "lambda": lambda,
                "window": [window.0, window.1],
                "fit": speed,
                "relative_error": (speed.speed - s.kappa_star).abs() / s.kappa_star,
            }),
        );
    }
    if let Some((b, delta)) = cone {
        let first_failure = cone_entries.iter().find(|e| !e.pass).map(|e| e.time);
        analysis.insert(
            "cone".into(),
            json!({
                "b": b,
                "delta": delta,
                "d_grace": d_grace,
                "speed": s.kappa_star - delta,
                "pass": first_failure.is_none(),
                "first_failure": first_failure,
                "entries": cone_entries,
            }),
        );
    }
    let manifest = json!({
        "config": s.config.serialize(),
        "kappa_star": s.kappa_star,
        "dt": s.dt,
        "record_every": s.record_every,
        "steps": cfg.steps(),
        "snapshots": files,
        "analysis": analysis,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    let mut summary = manifest["analysis"].clone();
    if let Some(cone) = summary.get_mut("cone").and_then(Value::as_object_mut) {
        cone.remove("entries");
    }
    print_json(&json!({
        "snapshots": manifest["snapshots"].as_array().map_or(0, Vec::len),
        "dt": s.dt,
        "kappa_star": s.kappa_star,
        "analysis": summary,
    }))?;
    Ok(true)
}

fn lambda_name(prefix: &str, lambda: f64) -> String {
    format!("{prefix}_lambda_{lambda}.csv")
}

fn graph_summary(path: &Path, graph: &LevelGraph) -> Result<Value> {
    let lip = if graph.valid_count() >= 2 {
        Some(lipschitz_estimate(graph)?)
    } else {
        None
    };
    write_graph(path, graph, lip.as_ref())?;
    Ok(json!({
        "file": path.display().to_string(),
        "lambda": graph.lambda,
        "orientation": graph.orientation.to_string(),
        "valid": graph.valid_count(),
        "samples": graph.len(),
        "lipschitz": lip.map(|l| l.global_l),
    }))
}

pub fn levelset_run(run: &Path, lambdas: &[f64], out: &Path) -> Result<bool> {
    let manifest_text = read_text(&run.join("manifest.json"))?;
    let manifest: Value = serde_json::from_str(&manifest_text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("manifest: {e}"),
    })?;
    let lambdas = if lambdas.is_empty() {
        let config = manifest["config"]
            .as_str()
            .map(RunConfig::parse)
            .transpose()?
            .and_then(|c| c.analysis.lambda);
        config.unwrap_or_else(|| vec![DEFAULT_LAMBDA])
    } else {
        lambdas.to_vec()
    };
    let files: Vec<PathBuf> = manifest["snapshots"]
        .as_array()
        .ok_or_else(|| Error::Invalid("manifest has no snapshot list".into()))?
        .iter()
        .filter_map(|s| s["file"].as_str().map(|f| run.join(f)))
        .collect();
    let mut builders: Vec<TimeGraphBuilder> =
        lambdas.iter().map(|&l| TimeGraphBuilder::new(l)).collect();
    for file in &files {
        let field = read_snapshot(file)?;
        for b in &mut builders {
            b.push(&field)?;
        }
    }
    create_dir(out)?;
    let mut graphs = Vec::new();
    for (b, &lambda) in builders.into_iter().zip(&lambdas) {
        let graph = b.finish()?;
        graphs.push(graph_summary(
            &out.join(lambda_name("time_graph", lambda)),
            &graph,
        )?);
    }
    print_json(&json!({ "snapshots": files.len(), "graphs": graphs }))?;
    Ok(true)
}

pub fn levelset_snapshot(
    snapshot: &Path,
    axis: usize,
    lambdas: &[f64],
    out: &Path,
) -> Result<bool> {
    let field = read_snapshot(snapshot)?;
    let lambdas = if lambdas.is_empty() {
        vec![DEFAULT_LAMBDA]
    } else {
        lambdas.to_vec()
    };
    create_dir(out)?;
    let mut graphs = Vec::new();
    for lambda in lambdas {
        let graph = extract_graph_space(&field, lambda, axis)?;
        let name = lambda_name(&format!("space_graph_axis{axis}"), lambda);
        graphs.push(graph_summary(&out.join(name), &graph)?);
    }
    print_json(&json!({ "time": field.time, "graphs": graphs }))?;
    Ok(true)
}

pub fn blowdown(config_path: &Path, out: &Path) -> Result<bool> {
    let s = setup(config_path)?;
    let a = &s.config.analysis;
    let half_width = a
        .window_half_width
        .ok_or_else(|| Error::Invalid("blowdown needs [analysis] window_half_width".into()))?;
    let window = RefWindow {
        half_width,
        samples: a.window_samples.unwrap_or(DEFAULT_WINDOW_SAMPLES),
    };
    let eps = a.eps_ladder.clone().unwrap_or_else(|| DEFAULT_EPS.to_vec());
    let lambda = a
        .lambda
        .as_ref()
        .and_then(|l| l.first().copied())
        .unwrap_or(DEFAULT_LAMBDA);
    let record_start = s.config.time.record_start.unwrap_or(f64::NEG_INFINITY);
    let profile = compute_profile(&s.spec)?;
    let params = s.config.hj_params(&s.spec, s.kappa_star, Some(&profile))?;

    let cfg = sim_config(&s)?;
    let mut builder = TimeGraphBuilder::new(lambda);
    let mut phi_source = None;
    simulate_streaming(&cfg, |f| {
        if f.time >= record_start {
            builder.push(f)?;
        }
        if let Some(t) = a.compare_time {
            if phi_source.is_none() && f.time >= t {
                phi_source = Some(f.clone());
            }
        }
        Ok(())
    })?;
    let graph = builder.finish()?;
    create_dir(out)?;

    let levels: Vec<LevelGraph> = eps
        .iter()
        .map(|&e| rescale_graph(&graph, e, &window))
        .collect::<Result<_>>()?;
    let mut graph_files = Vec::new();
    for (e, level) in eps.iter().zip(&levels) {
        graph_files.push(graph_summary(
            &out.join(format!("time_graph_eps_{e}.csv")),
            level,
        )?);
    }
    let rescaled: Vec<RescaledLevel> = eps
        .iter()
        .zip(&levels)
        .map(|(&e, l)| RescaledLevel::from_graph(e, l))
        .collect();
    let convergence = convergence_diagnostic(&rescaled, None)?;

    let finest = levels
        .last()
        .ok_or_else(|| Error::Invalid("empty eps ladder".into()))?;
    let heights = (0..finest.len())
        .map(|k| {
            if levels.iter().all(|l| l.valid[k]) {
                finest.heights[k]
            } else {
                f64::NAN
            }
        })
        .collect();
    let overlap = LevelGraph::new(Orientation::TimeGraph, lambda, finest.axes.clone(), heights)?;
    let eik = eikonal_residual(&overlap, &params, RIDGE_MARGIN)?;

    let mut comparison = Value::Null;
    if let Some(field) = phi_source {
        let phi = phi_from_u(&field, &profile, DEFAULT_CLAMP)?;
        let boundary = BoundaryGraph::sampled(finest.clone())?;
        for &e in &eps {
            let r = rescale_phi(&phi, e, &window)?;
            let text = format_snapshot(&r.grid, r.time, Some(e), &r.values);
            write_atomic(&out.join(format!("phi_eps_{e}.txt")), text.as_bytes())?;
        }
        let e = *eps.last().expect("non-empty ladder");
        let r = rescale_phi(&phi, e, &window)?;
        let c = compare_to_hj(&r, &boundary, &params, 2, |_| true)?;
        comparison = json!({
            "snapshot_time": field.time,
            "eps": e,
            "plus": c.plus,
            "minus": c.minus,
            "plus_relative_sup": c.plus.relative_sup(),
        });
    }
    let report = json!({
        "lambda": lambda,
        "window": window,
        "params": params,
        "graphs": graph_files,
        "convergence": convergence,
        "eikonal": {
            "target": eik.target,
            "samples": eik.samples.len(),
            "ridge_points": eik.ridge_points,
            "excluded_near_ridge": eik.excluded_near_ridge,
            "max_abs_relative": eik.max_abs_relative,
            "mean_abs_relative": eik.mean_abs_relative,
        },
        "hj_comparison": comparison,
    });
    write_json(&out.join("blowdown.json"), &report)?;
    print_json(&report)?;
    Ok(true)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("'{v}' is not a number")))
        })
        .collect()
}

fn parse_boundary(spec: &str) -> Result<BoundaryGraph> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| Error::Invalid(format!("boundary '{spec}' must look like kind:data")))?;
    match kind {
        "planar" => Ok(BoundaryGraph::Planar(parse_list(rest)?)),
        "support" => {
            BoundaryGraph::support_set(rest.split(';').map(parse_list).collect::<Result<_>>()?)
        }
        "graph" => BoundaryGraph::sampled(read_graph(Path::new(rest))?),
        other => Err(Error::Invalid(format!("unknown boundary kind '{other}'"))),
    }
}

fn hj_params(setup: &HjSetup) -> Result<HJParams> {
    match (&setup.config, setup.params.as_slice()) {
        (Some(path), _) => {
            let config = RunConfig::from_file(path)?;
            let spec = config.build_spec()?;
            let ks = minimal_speed(&spec, SPEED_TOL)?;
            config.hj_params(&spec, ks, None)
        }
        (None, [ks, bp, bm]) => HJParams::new(*ks, *bp, *bm, *ks),
        _ => Err(Error::Invalid(
            "give --config or --params kappa_star,beta_plus,beta_minus".into(),
        )),
    }
}

pub enum EvalMode {
    Forward,
    Backward,
    Tw { region: i32, kappa: Option<f64> },
    Support,
}

pub fn hj_eval(mode: EvalMode, setup: &HjSetup, points: &Path, out: Option<&Path>) -> Result<bool> {
    let boundary = parse_boundary(&setup.boundary)?;
    let params = match mode {
        EvalMode::Support => None,
        _ => Some(hj_params(setup)?),
    };
    let rows = parse_points(&read_text(points)?)?;
    let dim = boundary.dim();
    let (input_cols, header): (usize, Vec<String>) = match mode {
        EvalMode::Forward | EvalMode::Backward => {
            let mut h: Vec<String> = (0..dim).map(|a| format!("x{a}")).collect();
            h.push("t".into());
            h.push("value".into());
            h.extend((0..dim).map(|a| format!("y{a}")));
            (dim + 1, h)
        }
        EvalMode::Tw { .. } => {
            let mut h: Vec<String> = (0..=dim).map(|a| format!("x{a}")).collect();
            h.push("value".into());
            (dim + 1, h)
        }
        EvalMode::Support => {
            let mut h: Vec<String> = (0..dim).map(|a| format!("x{a}")).collect();
            h.push("value".into());
            (dim, h)
        }
    };
    let mut csv = header.join(",");
    csv.push_str(",status\n");
    let mut failures = 0;
    for row in &rows {
        if row.len() != input_cols {
            return Err(Error::Invalid(format!(
                "points need {input_cols} columns for this mode, found {}",
                row.len()
            )));
        }
        let result: Result<(f64, Vec<f64>)> = match (&mode, &params) {
            (EvalMode::Forward, Some(p)) => {
                hopf_lax_forward(&row[..dim], row[dim], &boundary, p).map(|r| (r.value, r.argopt))
            }
            (EvalMode::Backward, Some(p)) => {
                hopf_lax_backward(&row[..dim], row[dim], &boundary, p).map(|r| (r.value, r.argopt))
            }
            (EvalMode::Tw { region, kappa }, Some(p)) => {
                let p = kappa.map_or(*p, |k| p.with_kappa(k));
                tw_value(row, &boundary, &p, *region).map(|v| (v, Vec::new()))
            }
            _ => match &boundary {
                BoundaryGraph::SupportSet(xi) => {
                    support_representation(xi, row).map(|v| (v, Vec::new()))
                }
                _ => Err(Error::Invalid(
                    "support mode needs a support: boundary".into(),
                )),
            },
        };
        let mut cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        let extra = if matches!(mode, EvalMode::Forward | EvalMode::Backward) {
            dim
        } else {
            0
        };
        match result {
            Ok((v, arg)) => {
                cells.push(fmt_f64(v));
                cells.extend(arg.into_iter().map(fmt_f64));
                cells.push("ok".into());
            }
            Err(e @ (Error::Invalid(_) | Error::UnsupportedDimension(_))) => return Err(e),
            Err(e) => {
                failures += 1;
                cells.extend(std::iter::repeat_n("NaN".to_string(), 1 + extra));
                cells.push(e.to_string().replace(',', ";"));
            }
        }
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    match out {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => emit(&csv)?,
    }
    if failures > 0 {
        eprintln!("{failures} of {} points could not be evaluated", rows.len());
    }
    Ok(true)
}

pub fn hj_characteristic(
    setup: &HjSetup,
    x0: &[f64],
    t0: f64,
    p0: &[f64],
    value: f64,
) -> Result<bool> {
    let boundary = parse_boundary(&setup.boundary)?;
    let params = hj_params(setup)?;
    let c = trace_characteristic(x0, t0, p0, value, &boundary, &params)?;
    print_json(&serde_json::to_value(&c).map_err(|e| Error::Io(e.to_string()))?)?;
    Ok(true)
}

pub fn verify(suite: Suite, out: Option<&Path>) -> Result<bool> {
    let report = run_suite(suite, |c| {
        eprintln!("{}", c.line());
        for d in &c.details {
            eprintln!("        {d}");
        }
    });
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    print_json(&serde_json::to_value(&report).map_err(|e| Error::Io(e.to_string()))?)?;
    Ok(report.pass)
}
