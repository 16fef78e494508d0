//! Snapshot and graph files. Every write goes to a temporary file in the
//! target directory and is renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levelset::{LevelGraph, LipschitzEstimate, Orientation};
use crate::rd_solver::{Boundary, Field, Grid};

/// Writes `bytes` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| Error::Io(e.error.to_string()))?;
    Ok(())
}

/// Reads a whole file; the error names the path.
pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// 17 significant digits; reloads bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: '{}'", s.trim()),
    })
}

/// Contents of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub grid: Grid,
    pub time: f64,
    /// Present on rescaled fields.
    pub eps: Option<f64>,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn into_field(self) -> Field {
        Field {
            grid: self.grid,
            time: self.time,
            values: self.values,
        }
    }
}

/// Header lines, then one row of node values per grid line (axis 0 along
/// the row).
pub fn format_snapshot(grid: &Grid, time: f64, eps: Option<f64>, values: &[f64]) -> String {
    let mut out = String::new();
    let extents: Vec<String> = grid
        .extents()
        .iter()
        .map(|(lo, hi)| format!("{},{}", fmt_f64(*lo), fmt_f64(*hi)))
        .collect();
    let _ = writeln!(out, "# dim={}", grid.dim());
    let _ = writeln!(out, "# extents={}", extents.join(";"));
    let _ = writeln!(out, "# dx={}", fmt_f64(grid.dx()));
    let _ = writeln!(out, "# boundary={}", grid.boundary());
    let _ = writeln!(out, "# time={}", fmt_f64(time));
    if let Some(e) = eps {
        let _ = writeln!(out, "# eps={}", fmt_f64(e));
    }
    let nx = grid.nodes(0);
    for row in values.chunks(nx) {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_snapshot(text: &str) -> Result<Snapshot> {
    let mut dim = None;
    let mut extents: Option<Vec<(f64, f64)>> = None;
    let mut dx = None;
    let mut boundary = Boundary::Neumann;
    let mut time = None;
    let mut eps = None;
    let mut rows: Vec<(usize, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('#') {
            if !rows.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "header after data rows".into(),
                });
            }
            let (key, value) = header.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("malformed header '{trimmed}'"),
            })?;
            let value = value.trim();
            match key.trim() {
                "dim" => {
                    let d: usize = value.parse().map_err(|_| Error::Parse {
                        line,
                        message: format!("bad dimension '{value}'"),
                    })?;
                    if !(1..=2).contains(&d) {
                        return Err(Error::UnsupportedDimension(d));
                    }
                    dim = Some(d);
                }
                "extents" => {
                    let mut ext = Vec::new();
                    for pair in value.split(';') {
                        let (lo, hi) = pair.split_once(',').ok_or_else(|| Error::Parse {
                            line,
                            message: format!("bad extent '{pair}'"),
                        })?;
                        ext.push((parse_f64(lo, line)?, parse_f64(hi, line)?));
                    }
                    extents = Some(ext);
                }
                "dx" => dx = Some(parse_f64(value, line)?),
                "boundary" => {
                    boundary = value.parse().map_err(|_| Error::Parse {
                        line,
                        message: format!("unknown boundary '{value}'"),
                    })?
                }
                "time" => time = Some(parse_f64(value, line)?),
                "eps" => eps = Some(parse_f64(value, line)?),
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown header key '{other}'"),
                    })
                }
            }
        } else {
            rows.push((line, trimmed));
        }
    }
    let missing = |what: &str| Error::Parse {
        line: 0,
        message: format!("missing header '{what}'"),
    };
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let extents = extents.ok_or_else(|| missing("extents"))?;
    let dx = dx.ok_or_else(|| missing("dx"))?;
    let time = time.ok_or_else(|| missing("time"))?;
    if extents.len() != dim {
        return Err(Error::Parse {
            line: 2,
            message: format!("{} extents for dimension {dim}", extents.len()),
        });
    }
    let grid = Grid::new(extents, dx, boundary).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let nx = grid.nodes(0);
    let expected_rows = if dim == 1 { 1 } else { grid.nodes(1) };
    if rows.len() != expected_rows {
        return Err(Error::Parse {
            line: rows.last().map_or(0, |r| r.0),
            message: format!("expected {expected_rows} data rows, found {}", rows.len()),
        });
    }
    let mut values = Vec::with_capacity(grid.len());
    for (line, row) in rows {
        let before = values.len();
        for cell in row.split(',') {
            values.push(parse_f64(cell, line)?);
        }
        if values.len() - before != nx {
            return Err(Error::Parse {
                line,
                message: format!("expected {nx} values, found {}", values.len() - before),
            });
        }
    }
    Ok(Snapshot {
        grid,
        time,
        eps,
        values,
    })
}

pub fn write_snapshot(path: &Path, field: &Field) -> Result<()> {
    write_atomic(
        path,
        format_snapshot(&field.grid, field.time, None, &field.values).as_bytes(),
    )
}

pub fn read_snapshot(path: &Path) -> Result<Field> {
    Ok(parse_snapshot(&read_text(path)?)?.into_field())
}

/// CSV of base coordinates, height and validity flag.
pub fn format_graph(graph: &LevelGraph) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = (0..graph.base_dim()).map(|a| format!("x{a}")).collect();
    header.push("height".into());
    header.push("valid".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for k in 0..graph.len() {
        let mut cells: Vec<String> = graph.base_point(k).into_iter().map(fmt_f64).collect();
        cells.push(fmt_f64(graph.heights[k]));
        cells.push(u8::from(graph.valid[k]).to_string());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
struct GraphSidecar<'a> {
    lambda: f64,
    orientation: String,
    samples: usize,
    valid_samples: usize,
    lipschitz_estimate: Option<&'a LipschitzEstimate>,
}

#[derive(Debug, Deserialize)]
struct SidecarHeader {
    lambda: f64,
    orientation: String,
}

/// Inverse of [`format_graph`]; the lattice axes are recovered from the
/// distinct coordinates of each column.
pub fn parse_graph(text: &str, orientation: Orientation, lambda: f64) -> Result<LevelGraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty graph file".into(),
    })?;
    let columns = header.split(',').count();
    if columns < 3 {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected x columns, height and valid; found {columns} columns"),
        });
    }
    let dim = columns - 2;
    let mut coords: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut heights = Vec::new();
    for (i, raw) in lines {
        let cells: Vec<&str> = raw.split(',').collect();
        if cells.len() != columns {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected {columns} columns, found {}", cells.len()),
            });
        }
        for a in 0..dim {
            coords[a].push(parse_f64(cells[a], i + 1)?);
        }
        let h = parse_f64(cells[dim], i + 1)?;
        let valid = cells[dim + 1].trim() == "1";
        heights.push(if valid { h } else { f64::NAN });
    }
    let axes = coords
        .into_iter()
        .map(|mut c| {
            c.sort_by(f64::total_cmp);
            c.dedup();
            c
        })
        .collect();
    LevelGraph::new(orientation, lambda, axes, heights)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut json_path = path.as_os_str().to_owned();
    json_path.push(".json");
    json_path.into()
}

/// Reads a graph written by [`write_graph`], including its sidecar.
pub fn read_graph(path: &Path) -> Result<LevelGraph> {
    let sidecar: SidecarHeader =
        serde_json::from_str(&read_text(&sidecar_path(path))?).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("graph sidecar: {e}"),
        })?;
    let orientation = match sidecar.orientation.as_str() {
        "time_graph" => Orientation::TimeGraph,
        "space_graph" => Orientation::SpaceGraph,
        other => return Err(Error::Invalid(format!("unknown orientation '{other}'"))),
    };
    parse_graph(&read_text(path)?, orientation, sidecar.lambda)
}

/// Writes `<path>` (CSV) and `<path>.json` with the level, orientation and
/// Lipschitz estimate.
pub fn write_graph(
    path: &Path,
    graph: &LevelGraph,
    lipschitz: Option<&LipschitzEstimate>,
) -> Result<()> {
    write_atomic(path, format_graph(graph).as_bytes())?;
    let sidecar = GraphSidecar {
        lambda: graph.lambda,
        orientation: graph.orientation.to_string(),
        samples: graph.len(),
        valid_samples: graph.valid_count(),
        lipschitz_estimate: lipschitz,
    };
    write_json(&sidecar_path(path), &sidecar)
}

/// Reads rows of comma-separated numbers, skipping blank and `#` lines.
pub fn parse_points(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| parse_f64(c, i + 1))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = out.first() {
            let first: &Vec<f64> = first;
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn snapshot_round_trip_is_exact() {
        let grid = Grid::square(-1.0, 1.0, 0.125, Boundary::Periodic).unwrap();
        let f = Field::from_fn(&grid, 0.1 + 0.2, |x| {
            (x[0] * 3.3).sin().abs() / 3.0 + x[1].abs() / 7.0
        });
        let text = format_snapshot(&f.grid, f.time, Some(0.0625), &f.values);
        let s = parse_snapshot(&text).unwrap();
        assert_eq!(s.eps, Some(0.0625));
        assert_eq!(s.clone().into_field(), f);
    }

    #[test]
    fn sentinels_survive() {
        let grid = Grid::line(0.0, 16.0, 1.0, Boundary::Neumann).unwrap();
        let mut values = vec![0.5; grid.len()];
        values[0] = f64::NEG_INFINITY;
        values[1] = f64::INFINITY;
        let s = parse_snapshot(&format_snapshot(&grid, 0.0, None, &values)).unwrap();
        assert_eq!(s.values, values);
    }

    #[test]
    fn three_dimensional_file_is_rejected() {
        let text = "# dim=3\n# extents=0,1;0,1;0,1\n# dx=0.05\n# time=0\n";
        assert_eq!(parse_snapshot(text), Err(Error::UnsupportedDimension(3)));
    }

    #[test]
    fn truncated_file_names_expected_rows() {
        let grid = Grid::square(0.0, 16.0, 1.0, Boundary::Neumann).unwrap();
        let f = Field::constant(&grid, 0.25);
        let text = format_snapshot(&f.grid, 0.0, None, &f.values);
        let cut: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        match parse_snapshot(&cut) {
            Err(Error::Parse { message, .. }) => {
                assert!(message.contains("expected 17 data rows"), "{message}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_header_reports_line() {
        let text = "# dim=1\n# extents 0,1\n";
        assert!(matches!(
            parse_snapshot(text),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn graph_export_has_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let g = LevelGraph::new(
            crate::levelset::Orientation::TimeGraph,
            0.5,
            vec![vec![0.0, 1.0, 2.0]],
            vec![0.0, 2.0, f64::NAN],
        )
        .unwrap();
        let l = crate::levelset::lipschitz_estimate(&g).unwrap();
        let p = dir.path().join("g.csv");
        write_graph(&p, &g, Some(&l)).unwrap();
        let csv = std::fs::read_to_string(&p).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().last().unwrap().ends_with(",0"));
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("g.csv.json")).unwrap())
                .unwrap();
        assert_eq!(json["lipschitz_estimate"]["global_l"], 2.0);
        assert_eq!(json["orientation"], "time_graph");
    }

    proptest! {
        #[test]
        fn random_fields_round_trip(
            cells in 16usize..24,
            two_d in any::<bool>(),
            values in prop::collection::vec(0.0f64..=1.0, 625),
            time in -1e3f64..1e3,
        ) {
            let hi = cells as f64 * 0.37;
            let extents = if two_d { vec![(0.0, hi), (0.0, hi)] } else { vec![(0.0, hi)] };
            let grid = Grid::new(extents, 0.37, Boundary::Neumann).unwrap();
            let f = Field { values: values[..grid.len()].to_vec(), time, grid };
            let back = parse_snapshot(&format_snapshot(&f.grid, f.time, None, &f.values)).unwrap().into_field();
            prop_assert_eq!(back, f);
        }
    }

    #[test]
    fn graph_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let axes = vec![vec![-1.0, 0.0, 0.5], vec![0.0, 0.25]];
        let g = LevelGraph::from_fn(Orientation::TimeGraph, 0.5, axes, |x| {
            if x[0] > 0.0 {
                f64::NAN
            } else {
                x[0] * 0.3 + x[1]
            }
        })
        .unwrap();
        write_graph(&path, &g, None).unwrap();
        let back = read_graph(&path).unwrap();
        assert_eq!(back.axes, g.axes);
        assert_eq!(back.valid, g.valid);
        for (a, b) in back.heights.iter().zip(&g.heights) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
        assert_eq!(back.lambda, 0.5);
    }
}
