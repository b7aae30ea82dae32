//! Run artifacts: cost history CSV, nodal shape snapshots and the zero
//! level set of the shape field.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! reading a file back reproduces the values bit for bit.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{io_err, Error, Result};
use crate::mesh::{Mesh, Point};
use crate::optimizer::{IterationRecord, RunHistory};

pub const HISTORY_HEADER: &str = "iter,cost,step,dcost,dg,seconds";

/// Exact zeros are nudged to this positive value when classifying signs.
const ZERO_NUDGE: f64 = 1e-30;

/// Connected piece of the zero level set. Closed curves repeat their first
/// point at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourPolyline {
    pub points: Vec<Point>,
}

impl ContourPolyline {
    pub fn is_closed(&self) -> bool {
        self.points.len() > 2 && self.points.first() == self.points.last()
    }

    pub fn length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .sum()
    }
}

/// Marching triangles on the P1 interpolant of `g`.
pub fn extract_zero_contour(mesh: &Mesh, g: &[f64]) -> Vec<ContourPolyline> {
    let value = |v: usize| if g[v] == 0.0 { ZERO_NUDGE } else { g[v] };
    let crossing = |a: usize, b: usize| -> Point {
        let (a, b) = (a.min(b), a.max(b));
        let (ga, gb) = (value(a), value(b));
        let t = ga / (ga - gb);
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    };

    // each segment joins two mesh edges, keyed by their sorted endpoints
    let mut segments: Vec<[(usize, usize); 2]> = Vec::new();
    for tri in &mesh.triangles {
        let mut cut = Vec::with_capacity(2);
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            let (a, b) = (tri[i], tri[j]);
            if (value(a) > 0.0) != (value(b) > 0.0) {
                cut.push((a.min(b), a.max(b)));
            }
        }
        if let [e0, e1] = cut[..] {
            segments.push([e0, e1]);
        }
    }

    let mut incident: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (s, seg) in segments.iter().enumerate() {
        for e in seg {
            incident.entry(*e).or_default().push(s);
        }
    }

    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let trace = |start_seg: usize, start_edge: (usize, usize), used: &mut Vec<bool>| {
        let mut edges = vec![start_edge];
        let (mut seg, mut edge) = (start_seg, start_edge);
        loop {
            used[seg] = true;
            let [e0, e1] = segments[seg];
            edge = if e0 == edge { e1 } else { e0 };
            edges.push(edge);
            match incident[&edge].iter().find(|&&s| !used[s]) {
                Some(&next) => seg = next,
                None => break,
            }
        }
        let points = edges.iter().map(|&(a, b)| crossing(a, b)).collect();
        ContourPolyline { points }
    };

    // open curves start at edges touched by a single segment (domain boundary)
    let mut starts: Vec<(&(usize, usize), &Vec<usize>)> = incident.iter().filter(|(_, s)| s.len() == 1).collect();
    starts.sort();
    for (&edge, segs) in starts {
        if !used[segs[0]] {
            lines.push(trace(segs[0], edge, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            lines.push(trace(s, segments[s][0], &mut used));
        }
    }
    lines
}

pub fn history_to_csv(history: &RunHistory) -> String {
    let mut out = String::with_capacity(64 * (history.records.len() + 2));
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    for r in &history.records {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?}",
            r.iter, r.cost, r.step, r.dcost, r.dg, r.seconds
        );
    }
    let _ = writeln!(out, "# termination={}", history.termination);
    out
}

pub fn write_history(history: &RunHistory, path: &Path) -> Result<()> {
    std::fs::write(path, history_to_csv(history)).map_err(io_err(path))
}

pub fn parse_history(text: &str, context: &str) -> Result<RunHistory> {
    let err = |line: usize, message: String| Error::Parse {
        context: context.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HISTORY_HEADER => {}
        _ => return Err(err(1, format!("expected header `{HISTORY_HEADER}`"))),
    }
    let mut records = Vec::new();
    let mut termination = None;
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(reason) = rest.trim().strip_prefix("termination=") {
                termination = Some(reason.parse().map_err(|e: Error| err(idx + 1, e.to_string()))?);
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(err(idx + 1, format!("expected 6 fields, got {}", fields.len())));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .parse()
                .map_err(|_| err(idx + 1, format!("`{}` is not a number", fields[k])))
        };
        records.push(IterationRecord {
            iter: fields[0]
                .parse()
                .map_err(|_| err(idx + 1, format!("`{}` is not an iteration index", fields[0])))?,
            cost: num(1)?,
            step: num(2)?,
            dcost: num(3)?,
            dg: num(4)?,
            seconds: num(5)?,
        });
    }
    let termination = termination.ok_or_else(|| err(text.lines().count(), "missing termination line".into()))?;
    Ok(RunHistory { records, termination })
}

pub fn read_history(path: &Path) -> Result<RunHistory> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_history(&text, &path.display().to_string())
}

pub fn snapshot_paths(dir: &Path, iter: usize) -> (PathBuf, PathBuf) {
    (dir.join(format!("shape_{iter:04}.csv")), dir.join(format!("contour_{iter:04}.txt")))
}

pub fn contour_to_text(lines: &[ContourPolyline]) -> String {
    let mut out = String::new();
    for (k, line) in lines.iter().enumerate() {
        let _ = writeln!(out, "polyline {k}");
        for p in &line.points {
            let _ = writeln!(out, "{:?} {:?}", p[0], p[1]);
        }
    }
    out
}

/// Writes `shape_XXXX.csv` (`x,y,g` per vertex) and `contour_XXXX.txt` into
/// `dir`, returning both paths.
pub fn write_field_snapshot(mesh: &Mesh, g: &[f64], iter: usize, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if g.len() != mesh.n_vertices() {
        return Err(Error::InvalidArgument(format!(
            "shape field has {} entries, mesh has {} vertices",
            g.len(),
            mesh.n_vertices()
        )));
    }
    let (shape_path, contour_path) = snapshot_paths(dir, iter);
    let mut csv = String::with_capacity(48 * g.len());
    csv.push_str("x,y,g\n");
    for (p, v) in mesh.vertices.iter().zip(g) {
        let _ = writeln!(csv, "{:?},{:?},{:?}", p[0], p[1], v);
    }
    std::fs::write(&shape_path, csv).map_err(io_err(&shape_path))?;
    let contour = contour_to_text(&extract_zero_contour(mesh, g));
    std::fs::write(&contour_path, contour).map_err(io_err(&contour_path))?;
    Ok((shape_path, contour_path))
}

/// Reads the `x,y,g` rows of a shape snapshot.
pub fn read_field_snapshot(path: &Path) -> Result<Vec<[f64; 3]>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let err = |line: usize, message: String| Error::Parse {
        context: path.display().to_string(),
        line,
        message,
    };
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let mut row = [0.0; 3];
        let mut fields = line.split(',');
        for slot in &mut row {
            let f = fields.next().ok_or_else(|| err(idx + 1, "expected 3 fields".into()))?;
            *slot = f.parse().map_err(|_| err(idx + 1, format!("`{f}` is not a number")))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;
    use crate::optimizer::Termination;
    use std::f64::consts::PI;

    #[test]
    fn no_sign_change_no_contour() {
        let mesh = build_structured_mesh(9).unwrap();
        assert!(extract_zero_contour(&mesh, &vec![1.0; 81]).is_empty());
        assert!(extract_zero_contour(&mesh, &vec![-1.0; 81]).is_empty());
        // exact zeros count as positive
        assert!(extract_zero_contour(&mesh, &vec![0.0; 81]).is_empty());
    }

    #[test]
    fn straight_line() {
        let mesh = build_structured_mesh(32).unwrap();
        let g: Vec<f64> = mesh.vertices.iter().map(|p| p[0]).collect();
        let lines = extract_zero_contour(&mesh, &g);
        assert_eq!(lines.len(), 1);
        let h = mesh.spacing();
        for p in &lines[0].points {
            assert!(p[0].abs() <= h);
        }
        assert!(!lines[0].is_closed());
        assert!((lines[0].length() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn circle_is_closed_with_right_length() {
        let mesh = build_structured_mesh(65).unwrap();
        let g: Vec<f64> = mesh.vertices.iter().map(|p| 0.25 - p[0] * p[0] - p[1] * p[1]).collect();
        let lines = extract_zero_contour(&mesh, &g);
        assert_eq!(lines.len(), 1);
        let c = &lines[0];
        assert!(c.is_closed());
        assert!((c.length() - PI).abs() <= 4.0 * mesh.spacing());
        for p in &c.points {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 0.5).abs() < mesh.spacing());
        }
    }

    #[test]
    fn two_components() {
        let mesh = build_structured_mesh(41).unwrap();
        let g: Vec<f64> = mesh
            .vertices
            .iter()
            .map(|p| {
                let a = 0.09 - (p[0] - 0.5).powi(2) - p[1].powi(2);
                let b = 0.09 - (p[0] + 0.5).powi(2) - p[1].powi(2);
                a.max(b)
            })
            .collect();
        let lines = extract_zero_contour(&mesh, &g);
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(ContourPolyline::is_closed));
    }

    fn history() -> RunHistory {
        RunHistory {
            records: vec![
                IterationRecord {
                    iter: 0,
                    cost: 0.1 + 0.2,
                    step: 0.0,
                    dcost: 0.0,
                    dg: 0.0,
                    seconds: 1e-7,
                },
                IterationRecord {
                    iter: 1,
                    cost: 1.0 / 3.0,
                    step: 2.5,
                    dcost: 1.234e-300,
                    dg: 71941.47552097,
                    seconds: 0.5,
                },
            ],
            termination: Termination::CostConverged,
        }
    }

    #[test]
    fn history_round_trip() {
        let h = history();
        let text = history_to_csv(&h);
        assert!(text.starts_with("iter,cost,step,dcost,dg,seconds\n"));
        assert!(text.ends_with("# termination=cost_converged\n"));
        assert_eq!(parse_history(&text, "mem").unwrap(), h);
    }

    #[test]
    fn history_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history(&history(), &path).unwrap();
        assert_eq!(read_history(&path).unwrap(), history());
        let missing = dir.path().join("nope/history.csv");
        let err = write_history(&history(), &missing).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn malformed_history() {
        assert!(parse_history("a,b\n", "x").is_err());
        assert!(parse_history("iter,cost,step,dcost,dg,seconds\n0,1,2\n# termination=stalled\n", "x").is_err());
        assert!(parse_history("iter,cost,step,dcost,dg,seconds\n0,1,2,3,4,5\n", "x").is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = build_structured_mesh(2).unwrap();
        let (shape, contour) = write_field_snapshot(&mesh, &[1.0; 4], 3, dir.path()).unwrap();
        assert!(shape.ends_with("shape_0003.csv"));
        assert!(contour.ends_with("contour_0003.txt"));
        assert_eq!(read_field_snapshot(&shape).unwrap().len(), 4);
        assert_eq!(std::fs::read_to_string(&contour).unwrap(), "");

        let mesh = build_structured_mesh(7).unwrap();
        let g: Vec<f64> = mesh.vertices.iter().map(|p| (p[0] * 3.1).sin() / 7.0 - p[1]).collect();
        let (shape, _) = write_field_snapshot(&mesh, &g, 12, dir.path()).unwrap();
        let rows = read_field_snapshot(&shape).unwrap();
        for ((row, p), v) in rows.iter().zip(&mesh.vertices).zip(&g) {
            assert_eq!(row[0].to_bits(), p[0].to_bits());
            assert_eq!(row[1].to_bits(), p[1].to_bits());
            assert_eq!(row[2].to_bits(), v.to_bits());
        }
    }
}
