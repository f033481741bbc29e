//! The three pipeline commands: simulate (forward data generation),
//! reconstruct (pseudo-frequency transform plus the layer-stripping sweep),
//! and evaluate (metrics of a reconstruction against the ground truth).

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use waverec_core::forward::run_forward;
use waverec_core::io::{
    read_field_table, read_traces, read_vtk_scalars, write_field_csv, write_mesh_nodes,
    write_traces, write_vtk,
};
use waverec_core::laplace::{add_noise, build_pseudo_freq_data};
use waverec_core::metrics::{compute_metrics, Metrics};
use waverec_core::phantom::build_phantom;
use waverec_core::stripping::{reconstruction_submesh, run_gcm};
use waverec_core::{TriMesh, WaveError};

use crate::config::ExperimentConfig;

/// Error tagged with the pipeline stage in which it occurred, for the
/// machine-readable stderr report.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: WaveError,
}

type CmdResult<T> = std::result::Result<T, StageError>;

trait Staged<T> {
    fn stage(self, stage: &'static str) -> CmdResult<T>;
}

impl<T> Staged<T> for Result<T, WaveError> {
    fn stage(self, stage: &'static str) -> CmdResult<T> {
        self.map_err(|error| StageError { stage, error })
    }
}

impl<T> Staged<T> for std::io::Result<T> {
    fn stage(self, stage: &'static str) -> CmdResult<T> {
        self.map_err(|e| StageError { stage, error: WaveError::Io(e) })
    }
}

/// Per-interval entry of `metrics.json`. `s` is the upper endpoint of the
/// pseudo-frequency interval the field belongs to. Full metrics are present
/// when the data directory carried the ground truth.
#[derive(Debug, Serialize)]
pub struct IntervalReport {
    pub n: usize,
    pub s: f64,
    pub max_a: f64,
    pub lag_converged: bool,
    pub inner_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
}

fn s_label(s: f64) -> String {
    if (s - s.round()).abs() < 1e-9 {
        format!("{}", s.round() as i64)
    } else {
        format!("{s}")
    }
}

/// Generate synthetic data: forward-solve the wave equation over the
/// configured phantom, record inside the reconstruction circle, add noise,
/// and write traces plus mesh, truth, and config-echo files.
pub fn run_simulate(config_path: &Path, out_dir: &Path) -> CmdResult<()> {
    let cfg = ExperimentConfig::load(config_path).stage("config")?;
    let domain = cfg.domain().stage("simulate")?;
    let sim = cfg.sim_config();
    let truth = build_phantom(&domain.fem, &cfg.circle(), &cfg.inclusions(), cfg.algorithm.d)
        .stage("simulate")?;
    let sub = reconstruction_submesh(&domain).stage("simulate")?;
    let traces = run_forward(&domain, &truth, &sim, &sub.to_global).stage("simulate")?;
    let noisy = add_noise(&traces, sim.sigma, sim.seed);

    fs::create_dir_all(out_dir).stage("io")?;
    write_traces(&out_dir.join("traces.bin"), &noisy).stage("io")?;
    write_mesh_nodes(&out_dir.join("mesh_nodes.csv"), &domain.fem).stage("io")?;
    write_vtk(&out_dir.join("truth.vtk"), &domain.fem, &truth.values, "true coefficient")
        .stage("io")?;
    write_field_csv(&out_dir.join("truth.csv"), &domain.fem, &truth.values).stage("io")?;
    let echo = File::create(out_dir.join("config_echo.json")).stage("io")?;
    serde_json::to_writer_pretty(BufWriter::new(echo), &cfg)
        .map_err(|e| WaveError::Format(format!("config echo: {e}")))
        .stage("io")?;
    Ok(())
}

/// Reconstruct the coefficient from recorded traces: Laplace-transform the
/// data, sweep the pseudo-frequency intervals, and write one field plus one
/// metrics entry per interval.
pub fn run_reconstruct(config_path: &Path, data_dir: &Path, out_dir: &Path) -> CmdResult<()> {
    let cfg = ExperimentConfig::load(config_path).stage("config")?;
    let domain = cfg.domain().stage("reconstruct")?;
    let sub = reconstruction_submesh(&domain).stage("reconstruct")?;
    let traces = read_traces(&data_dir.join("traces.bin")).stage("io")?;
    if traces.node_ids != sub.to_global {
        return Err(WaveError::MeshMismatch(format!(
            "trace file records {} nodes, reconstruction mesh expects {}",
            traces.node_ids.len(),
            sub.to_global.len()
        )))
        .stage("reconstruct");
    }
    let grid = cfg.grid().stage("config")?;
    let data = build_pseudo_freq_data(&grid, &traces).stage("reconstruct")?;
    let results = run_gcm(&domain, &data, &cfg.gcm(), &cfg.sim_config()).stage("reconstruct")?;

    let truth_path = data_dir.join("truth.vtk");
    let truth = if truth_path.exists() {
        Some(read_vtk_scalars(&truth_path).stage("io")?)
    } else {
        None
    };
    let exclusion = 3.0 * domain.h;

    fs::create_dir_all(out_dir).stage("io")?;
    let mut reports = Vec::with_capacity(results.len());
    for r in &results {
        let label = s_label(r.s_upper);
        write_vtk(
            &out_dir.join(format!("a_s{label}.vtk")),
            &domain.fem,
            &r.a.values,
            "reconstructed coefficient",
        )
        .stage("io")?;
        write_field_csv(&out_dir.join(format!("a_s{label}.csv")), &domain.fem, &r.a.values)
            .stage("io")?;
        let metrics = match &truth {
            Some(t) => {
                Some(compute_metrics(&domain.fem, t, &r.a.values, exclusion).stage("reconstruct")?)
            }
            None => None,
        };
        reports.push(IntervalReport {
            n: r.n,
            s: r.s_upper,
            max_a: r.max_a,
            lag_converged: r.lag_converged,
            inner_iterations: r.inner_iterations,
            metrics,
        });
    }
    let f = File::create(out_dir.join("metrics.json")).stage("io")?;
    serde_json::to_writer_pretty(BufWriter::new(f), &reports)
        .map_err(|e| WaveError::Format(format!("metrics: {e}")))
        .stage("io")?;
    Ok(())
}

fn read_field(path: &Path, mesh: &TriMesh) -> Result<Vec<f64>, WaveError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("vtk") => read_vtk_scalars(path),
        _ => {
            let table = read_field_table(path)?;
            for (i, (p, _)) in table.iter().enumerate() {
                if i >= mesh.n_nodes() || p.dist(&mesh.nodes[i]) > 1e-9 {
                    return Err(WaveError::MeshMismatch(format!(
                        "{}: node {i} does not match the configured mesh",
                        path.display()
                    )));
                }
            }
            Ok(table.into_iter().map(|(_, a)| a).collect())
        }
    }
}

/// Compare a reconstructed field against the truth and print metrics JSON
/// to stdout. Fields may be CSV node tables or scalar VTK files; both must
/// live on the configured mesh (the default geometry when no config given).
pub fn run_evaluate(
    truth_path: &Path,
    recon_path: &Path,
    config_path: Option<&PathBuf>,
) -> CmdResult<()> {
    let (mesh, h) = match config_path {
        Some(p) => {
            let cfg = ExperimentConfig::load(p).stage("config")?;
            (cfg.domain().stage("evaluate")?.fem, cfg.geometry.h)
        }
        None => {
            let (g, omega, circle, h) = waverec_core::mesh::reference_geometry();
            let domain = waverec_core::mesh::build_hybrid(&g, &omega, &circle, h)
                .stage("evaluate")?;
            (domain.fem, h)
        }
    };
    let truth = read_field(truth_path, &mesh).stage("evaluate")?;
    let recon = read_field(recon_path, &mesh).stage("evaluate")?;
    if truth.len() != mesh.n_nodes() || recon.len() != mesh.n_nodes() {
        return Err(WaveError::MeshMismatch(format!(
            "fields have {} and {} values, mesh has {} nodes",
            truth.len(),
            recon.len(),
            mesh.n_nodes()
        )))
        .stage("evaluate");
    }
    let metrics = compute_metrics(&mesh, &truth, &recon, 3.0 * h).stage("evaluate")?;
    let out = serde_json::to_string_pretty(&metrics)
        .map_err(|e| WaveError::Format(format!("metrics: {e}")))
        .stage("evaluate")?;
    println!("{out}");
    Ok(())
}

/// Short machine-readable code for each error kind.
pub fn error_code(e: &WaveError) -> &'static str {
    match e {
        WaveError::InvalidGeometry(_) => "InvalidGeometry",
        WaveError::MeshTooCoarse(_) => "MeshTooCoarse",
        WaveError::PointOutsideMesh { .. } => "PointOutsideMesh",
        WaveError::DimMismatch(_) => "DimMismatch",
        WaveError::SolverDiverged { .. } => "SolverDiverged",
        WaveError::UnstableConfig(_) => "UnstableConfig",
        WaveError::NumericalBlowup { .. } => "NumericalBlowup",
        WaveError::NonpositiveTransform { .. } => "NonpositiveTransform",
        WaveError::StateCorrupt(_) => "StateCorrupt",
        WaveError::TransformOverflow { .. } => "TransformOverflow",
        WaveError::SingularLumping { .. } => "SingularLumping",
        WaveError::InvalidPhantom(_) => "InvalidPhantom",
        WaveError::MeshMismatch(_) => "MeshMismatch",
        WaveError::Io(_) => "Io",
        WaveError::Format(_) => "Format",
    }
}
