//! File formats: binary trace files (`WTRC`), CSV node/field tables,
//! pseudo-frequency CSVs, and legacy-VTK ASCII unstructured grids for
//! external viewers.
//!
//! Trace layout: magic `WTRC`, little-endian u32 node count, u32 sample
//! count, f64 time step, f64 final time, the node ids as u32, then the
//! samples row-major (one row of samples per node).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read as _, Write as _};
use std::path::Path;

use crate::error::{Result, WaveError};
use crate::forward::TimeTraces;
use crate::geometry::Point2;
use crate::laplace::{PseudoFreqData, PseudoFreqGrid};
use crate::mesh::TriMesh;

const TRACE_MAGIC: &[u8; 4] = b"WTRC";

/// Write traces in the binary `WTRC` layout.
pub fn write_traces(path: &Path, traces: &TimeTraces) -> Result<()> {
    let n_nodes = traces.node_ids.len();
    let n_samples = traces.samples.first().map_or(0, Vec::len);
    if traces.samples.len() != n_nodes
        || traces.samples.iter().any(|row| row.len() != n_samples)
    {
        return Err(WaveError::DimMismatch(
            "trace write: ragged sample rows".into(),
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(TRACE_MAGIC)?;
    w.write_all(&(n_nodes as u32).to_le_bytes())?;
    w.write_all(&(n_samples as u32).to_le_bytes())?;
    w.write_all(&traces.tau.to_le_bytes())?;
    w.write_all(&traces.t_final.to_le_bytes())?;
    for &id in &traces.node_ids {
        w.write_all(&(id as u32).to_le_bytes())?;
    }
    for row in &traces.samples {
        for &v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read traces written by [`write_traces`].
pub fn read_traces(path: &Path) -> Result<TimeTraces> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TRACE_MAGIC {
        return Err(WaveError::Format(format!(
            "bad trace magic {magic:?}, expected {TRACE_MAGIC:?}"
        )));
    }
    let n_nodes = read_u32(&mut r)? as usize;
    let n_samples = read_u32(&mut r)? as usize;
    let tau = read_f64(&mut r)?;
    let t_final = read_f64(&mut r)?;
    if !(tau > 0.0 && t_final > 0.0) || n_samples == 0 {
        return Err(WaveError::Format(format!(
            "trace header invalid: tau={tau}, t_final={t_final}, samples={n_samples}"
        )));
    }
    let mut node_ids = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        node_ids.push(read_u32(&mut r)? as usize);
    }
    let mut samples = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let mut row = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            row.push(read_f64(&mut r)?);
        }
        samples.push(row);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(WaveError::Format("trailing bytes after trace data".into()));
    }
    Ok(TimeTraces { node_ids, tau, t_final, samples })
}

fn read_u32<R: std::io::Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: std::io::Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Write the mesh node table `id,x,y,marker` (marker 1 on the outer
/// boundary, 0 otherwise).
pub fn write_mesh_nodes(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "id,x,y,marker")?;
    for (i, p) in mesh.nodes.iter().enumerate() {
        let marker = u8::from(mesh.node_markers[i].on_outer);
        writeln!(w, "{i},{:.17e},{:.17e},{marker}", p.x, p.y)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a nodal scalar field as CSV `node_id,x,y,a`.
pub fn write_field_csv(path: &Path, mesh: &TriMesh, values: &[f64]) -> Result<()> {
    if values.len() != mesh.n_nodes() {
        return Err(WaveError::DimMismatch(format!(
            "field csv: {} values for {} nodes",
            values.len(),
            mesh.n_nodes()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "node_id,x,y,a")?;
    for (i, p) in mesh.nodes.iter().enumerate() {
        writeln!(w, "{i},{:.17e},{:.17e},{:.17e}", p.x, p.y, values[i])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a field CSV written by [`write_field_csv`], returning node
/// coordinates and values in node-id order.
pub fn read_field_table(path: &Path) -> Result<Vec<(Point2, f64)>> {
    let r = BufReader::new(File::open(path)?);
    let mut rows: Vec<(usize, Point2, f64)> = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if k == 0 {
            if line.trim() != "node_id,x,y,a" {
                return Err(WaveError::Format(format!("bad field csv header: {line}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(WaveError::Format(format!("bad field csv row {k}: {line}")));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|e| WaveError::Format(format!("row {k} {what}: {e}")))
        };
        let id: usize = cols[0]
            .trim()
            .parse()
            .map_err(|e| WaveError::Format(format!("row {k} id: {e}")))?;
        let p = Point2::new(num(cols[1], "x")?, num(cols[2], "y")?);
        rows.push((id, p, num(cols[3], "value")?));
    }
    rows.sort_by_key(|&(id, _, _)| id);
    for (k, &(id, _, _)) in rows.iter().enumerate() {
        if id != k {
            return Err(WaveError::Format(format!(
                "field csv node ids not contiguous at {k} (got {id})"
            )));
        }
    }
    Ok(rows.into_iter().map(|(_, p, a)| (p, a)).collect())
}

/// Read a field CSV written by [`write_field_csv`], returning the values in
/// node-id order.
pub fn read_field_csv(path: &Path) -> Result<Vec<f64>> {
    Ok(read_field_table(path)?.into_iter().map(|(_, a)| a).collect())
}

/// Write the mesh and one scalar field as a legacy-VTK ASCII unstructured
/// grid (`POINT_DATA`, scalar named `a`).
pub fn write_vtk(path: &Path, mesh: &TriMesh, values: &[f64], title: &str) -> Result<()> {
    if values.len() != mesh.n_nodes() {
        return Err(WaveError::DimMismatch(format!(
            "vtk: {} values for {} nodes",
            values.len(),
            mesh.n_nodes()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 2.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_nodes())?;
    for p in &mesh.nodes {
        writeln!(w, "{:.17e} {:.17e} 0", p.x, p.y)?;
    }
    let nt = mesh.triangles.len();
    writeln!(w, "CELLS {nt} {}", 4 * nt)?;
    for tri in &mesh.triangles {
        writeln!(w, "3 {} {} {}", tri[0], tri[1], tri[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.n_nodes())?;
    writeln!(w, "SCALARS a double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for &v in values {
        writeln!(w, "{v:.17e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read back the scalar `a` from a legacy-VTK file written by [`write_vtk`].
/// Only the point-data scalar block is parsed.
pub fn read_vtk_scalars(path: &Path) -> Result<Vec<f64>> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let mut count = None;
    for line in lines.by_ref() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("POINT_DATA ") {
            count = Some(rest.trim().parse::<usize>().map_err(|e| {
                WaveError::Format(format!("bad POINT_DATA count: {e}"))
            })?);
        } else if line.starts_with("LOOKUP_TABLE") {
            break;
        }
    }
    let count = count.ok_or_else(|| WaveError::Format("vtk: no POINT_DATA block".into()))?;
    let mut values = Vec::with_capacity(count);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        values.push(
            line.trim()
                .parse::<f64>()
                .map_err(|e| WaveError::Format(format!("vtk scalar: {e}")))?,
        );
        if values.len() == count {
            break;
        }
    }
    if values.len() != count {
        return Err(WaveError::Format(format!(
            "vtk: expected {count} scalars, found {}",
            values.len()
        )));
    }
    Ok(values)
}

/// Write pseudo-frequency point data as CSV `node_id,s,phi,psi`.
pub fn write_psi_csv(path: &Path, data: &PseudoFreqData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "node_id,s,phi,psi")?;
    let s = data.grid.s_values();
    for (node, (phi_row, psi_row)) in data.phi.iter().zip(&data.psi).enumerate() {
        for (k, &sv) in s.iter().enumerate() {
            writeln!(w, "{node},{sv:.17e},{:.17e},{:.17e}", phi_row[k], psi_row[k])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write the per-interval averaged data as CSV `node_id,n,psi_n`.
pub fn write_psi_n_csv(path: &Path, data: &PseudoFreqData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "node_id,n,psi_n")?;
    for (node, row) in data.psi_n.iter().enumerate() {
        for (n, &v) in row.iter().enumerate() {
            writeln!(w, "{node},{},{v:.17e}", n + 1)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read per-interval data written by [`write_psi_n_csv`]; returns
/// `psi_n[node][n-1]` for a grid with `n_intervals` intervals.
pub fn read_psi_n_csv(path: &Path, grid: &PseudoFreqGrid) -> Result<Vec<Vec<f64>>> {
    let r = BufReader::new(File::open(path)?);
    let n_ivals = grid.n_intervals();
    let mut rows: Vec<(usize, usize, f64)> = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if k == 0 {
            if line.trim() != "node_id,n,psi_n" {
                return Err(WaveError::Format(format!("bad psi_n header: {line}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(WaveError::Format(format!("bad psi_n row {k}: {line}")));
        }
        let node: usize = cols[0].trim().parse().map_err(|e| {
            WaveError::Format(format!("psi_n row {k} node: {e}"))
        })?;
        let n: usize = cols[1].trim().parse().map_err(|e| {
            WaveError::Format(format!("psi_n row {k} interval: {e}"))
        })?;
        let v: f64 = cols[2].trim().parse().map_err(|e| {
            WaveError::Format(format!("psi_n row {k} value: {e}"))
        })?;
        if n == 0 || n > n_ivals {
            return Err(WaveError::Format(format!(
                "psi_n row {k}: interval {n} outside 1..={n_ivals}"
            )));
        }
        rows.push((node, n, v));
    }
    let n_nodes = rows.iter().map(|&(node, _, _)| node + 1).max().unwrap_or(0);
    if rows.len() != n_nodes * n_ivals {
        return Err(WaveError::Format(format!(
            "psi_n: {} rows for {n_nodes} nodes x {n_ivals} intervals",
            rows.len()
        )));
    }
    let mut out = vec![vec![f64::NAN; n_ivals]; n_nodes];
    for (node, n, v) in rows {
        out[node][n - 1] = v;
    }
    if out.iter().flatten().any(|v| v.is_nan()) {
        return Err(WaveError::Format("psi_n: missing (node, interval) rows".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Circle, Point2, Rect};

    fn tiny_mesh() -> TriMesh {
        let omega = Rect::new(-0.5, 0.5, -0.5, 0.5);
        let circle = Circle::new(Point2::new(0.0, 0.0), 0.35);
        TriMesh::structured(&omega, 0.1, Some(&circle)).unwrap()
    }

    #[test]
    fn traces_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.bin");
        let traces = TimeTraces {
            node_ids: vec![3, 7, 12],
            tau: 0.001,
            t_final: 2.0,
            samples: vec![
                vec![0.0, 1.25e-3, -7.5e-1, std::f64::consts::PI],
                vec![1.0, 2.0, 3.0, 4.0],
                vec![-1.0, 0.5, 0.25, 0.125],
            ],
        };
        write_traces(&path, &traces).unwrap();
        let back = read_traces(&path).unwrap();
        assert_eq!(back, traces);
    }

    #[test]
    fn traces_reject_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(matches!(read_traces(&path), Err(WaveError::Format(_))));
    }

    #[test]
    fn field_csv_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let mesh = tiny_mesh();
        let values: Vec<f64> = (0..mesh.n_nodes())
            .map(|i| 1.0 + (i as f64).sin() * 1e-7)
            .collect();
        write_field_csv(&path, &mesh, &values).unwrap();
        let back = read_field_csv(&path).unwrap();
        assert_eq!(back, values);
    }

    #[test]
    fn vtk_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.vtk");
        let mesh = tiny_mesh();
        let values: Vec<f64> = (0..mesh.n_nodes()).map(|i| (i as f64).cos()).collect();
        write_vtk(&path, &mesh, &values, "coefficient").unwrap();
        let back = read_vtk_scalars(&path).unwrap();
        assert_eq!(back, values);
    }

    #[test]
    fn mesh_nodes_csv_has_header_and_all_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh_nodes.csv");
        let mesh = tiny_mesh();
        write_mesh_nodes(&path, &mesh).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "id,x,y,marker");
        assert_eq!(lines.len(), mesh.n_nodes() + 1);
    }

    #[test]
    fn psi_n_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi_n.csv");
        let grid = PseudoFreqGrid::new(1.0, 19.0, 1.0, 20.0, 0.01).unwrap();
        let n_ivals = grid.n_intervals();
        let psi_n: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..n_ivals).map(|n| (i * n_ivals + n) as f64 * 1e-3 + 1e-9).collect())
            .collect();
        let data = PseudoFreqData {
            grid: grid.clone(),
            phi: vec![vec![1.0; n_ivals + 1]; 5],
            psi: vec![vec![0.0; n_ivals + 1]; 5],
            psi_n: psi_n.clone(),
        };
        write_psi_n_csv(&path, &data).unwrap();
        let back = read_psi_n_csv(&path, &grid).unwrap();
        assert_eq!(back, psi_n);
    }
}
