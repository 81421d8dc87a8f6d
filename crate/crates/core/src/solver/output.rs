//! Run artifacts on disk: probe traces (CSV), activation maps (cloud text
//! plus a `lat` column) and potential snapshots (legacy VTK ASCII point
//! clouds). All writers format through `f64` `Display`, which is shortest
//! round-trip and byte-deterministic, so identical runs produce identical
//! files.

use crate::node_cloud::NodeCloud;
use crate::point::Point;
use crate::scalar::Real;
use super::metrics::LatMap;
use super::SolverError;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// `t,probe0,probe1,...` with one row per time sample.
pub fn write_traces<T: Real>(path: &Path, times: &[T], traces: &[Vec<T>]) -> Result<(), SolverError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "t")?;
    for k in 0..traces.len() {
        write!(w, ",probe{k}")?;
    }
    writeln!(w)?;
    for (row, &t) in times.iter().enumerate() {
        write!(w, "{}", t.to64())?;
        for tr in traces {
            write!(w, ",{}", tr[row].to64())?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_traces(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>), SolverError> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| SolverError::MetricInput("empty trace file".into()))??;
    let n_probes = header.split(',').count() - 1;
    let mut times = Vec::new();
    let mut traces = vec![Vec::new(); n_probes];
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let t: f64 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| SolverError::MetricInput("bad trace row".into()))?;
        times.push(t);
        for tr in traces.iter_mut() {
            let v: f64 = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| SolverError::MetricInput("short trace row".into()))?;
            tr.push(v);
        }
    }
    Ok((times, traces))
}

/// Node-cloud text format extended with a trailing `lat` column; nodes that
/// never activated carry `-1`.
pub fn write_lat<T: Real>(path: &Path, cloud: &NodeCloud<T>, lat: &LatMap<T>) -> Result<(), SolverError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# x y z boundary fx fy fz region lat")?;
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        let f = cloud.fiber(i);
        let lat_str = match lat.times[i] {
            Some(t) => format!("{}", t.to64()),
            None => "-1".to_string(),
        };
        writeln!(
            w,
            "{} {} {} {} {} {} {} {} {}",
            p.x.to64(),
            p.y.to64(),
            p.z.to64(),
            u8::from(cloud.is_boundary(i)),
            f.x.to64(),
            f.y.to64(),
            f.z.to64(),
            cloud.region(i),
            lat_str
        )?;
    }
    Ok(())
}

/// Parsed LAT rows: position, boundary flag, activation time (`None` for the
/// `-1` sentinel).
pub fn read_lat(path: &Path) -> Result<Vec<(Point<f64>, bool, Option<f64>)>, SolverError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f: Vec<&str> = body.split_whitespace().collect();
        if f.len() != 9 {
            return Err(SolverError::MetricInput(format!("LAT row needs 9 fields, got {}", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| SolverError::MetricInput("bad LAT number".into()));
        let lat = num(8)?;
        out.push((
            Point::new(num(0)?, num(1)?, num(2)?),
            f[3] == "1",
            if lat < 0.0 { None } else { Some(lat) },
        ));
    }
    Ok(out)
}

/// Legacy VTK ASCII snapshot: the cloud as vertex cells with one point
/// scalar field. Loads in ParaView and is byte-reproducible.
pub fn write_snapshot<T: Real>(
    path: &Path,
    cloud: &NodeCloud<T>,
    name: &str,
    values: &[T],
    title: &str,
) -> Result<(), SolverError> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = cloud.len();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n} double")?;
    for p in cloud.points() {
        writeln!(w, "{} {} {}", p.x.to64(), p.y.to64(), p.z.to64())?;
    }
    writeln!(w, "CELLS {n} {}", 2 * n)?;
    for i in 0..n {
        writeln!(w, "1 {i}")?;
    }
    writeln!(w, "CELL_TYPES {n}")?;
    for _ in 0..n {
        writeln!(w, "1")?;
    }
    writeln!(w, "POINT_DATA {n}")?;
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(w, "{}", v.to64())?;
    }
    Ok(())
}

/// Read back a snapshot written by [`write_snapshot`]: points and the scalar
/// field.
pub fn read_snapshot(path: &Path) -> Result<(Vec<Point<f64>>, Vec<f64>), SolverError> {
    let r = BufReader::new(File::open(path)?);
    let lines: Vec<String> = r.lines().collect::<Result<_, _>>()?;
    let bad = |why: &str| SolverError::MetricInput(format!("snapshot {}: {}", path.display(), why));
    let points_at = lines
        .iter()
        .position(|l| l.starts_with("POINTS "))
        .ok_or_else(|| bad("missing POINTS"))?;
    let n: usize = lines[points_at]
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad POINTS count"))?;
    let mut points = Vec::with_capacity(n);
    for l in &lines[points_at + 1..points_at + 1 + n] {
        let c: Vec<f64> = l.split_whitespace().filter_map(|s| s.parse().ok()).collect();
        if c.len() != 3 {
            return Err(bad("bad point row"));
        }
        points.push(Point::new(c[0], c[1], c[2]));
    }
    let table_at = lines
        .iter()
        .position(|l| l.starts_with("LOOKUP_TABLE"))
        .ok_or_else(|| bad("missing LOOKUP_TABLE"))?;
    let mut values = Vec::with_capacity(n);
    for l in &lines[table_at + 1..table_at + 1 + n] {
        values.push(l.trim().parse::<f64>().map_err(|_| bad("bad scalar row"))?);
    }
    Ok((points, values))
}
