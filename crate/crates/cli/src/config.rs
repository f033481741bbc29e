//! Experiment configuration: a single JSON document with geometry,
//! simulation, pseudo-frequency, algorithm, and phantom sections. Unknown
//! keys are hard errors so typos cannot silently change a run.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use waverec_core::forward::SimConfig;
use waverec_core::laplace::PseudoFreqGrid;
use waverec_core::mesh::build_hybrid;
use waverec_core::phantom::{Inclusion, InclusionShape};
use waverec_core::stripping::{GcmConfig, TailInit};
use waverec_core::{Circle, HybridDomain, Point2, Rect, Result, WaveError};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometrySection,
    pub sim: SimSection,
    pub pseudo_freq: PseudoFreqSection,
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub phantom: Vec<InclusionSection>,
}

/// Outer grid rectangle, inner FEM rectangle, reconstruction circle, and
/// mesh spacing. Rectangles are `[xmin, xmax, ymin, ymax]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub g_bounds: [f64; 4],
    pub omega_bounds: [f64; 4],
    pub circle_center: [f64; 2],
    pub circle_radius: f64,
    pub h: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub omega: f64,
    pub t_final: f64,
    pub tau: f64,
    pub sigma: f64,
    pub seed: u64,
    #[serde(default = "one")]
    pub abc_sign: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoFreqSection {
    pub s_low: f64,
    pub s_bar: f64,
    pub step: f64,
    pub lambda: f64,
    pub epsilon: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub m_inner_max: usize,
    pub inner_tol: f64,
    pub d: f64,
    pub tail_init: TailInit,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionSection {
    pub shape: InclusionShape,
    pub center: [f64; 2],
    #[serde(default)]
    pub radius: f64,
    pub value: f64,
}

fn one() -> f64 {
    1.0
}

fn rect(b: &[f64; 4]) -> Rect {
    Rect::new(b[0], b[1], b[2], b[3])
}

impl ExperimentConfig {
    /// Parse and validate a config file; every section constructor runs so
    /// an invalid document never reaches the pipeline.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let reader = BufReader::new(File::open(path)?);
        let cfg: ExperimentConfig = serde_json::from_reader(reader)
            .map_err(|e| WaveError::Format(format!("config {}: {e}", path.display())))?;
        cfg.sim_config().validate()?;
        // wave speed is at most 1 (a >= 1), so this is the binding CFL limit
        let cfl = 0.9 * cfg.geometry.h / std::f64::consts::SQRT_2;
        if cfg.sim.tau > cfl {
            return Err(WaveError::UnstableConfig(format!(
                "tau {} exceeds the stability limit {cfl:.6} for spacing {}",
                cfg.sim.tau, cfg.geometry.h
            )));
        }
        cfg.grid()?;
        for (k, inc) in cfg.phantom.iter().enumerate() {
            let i = inc.to_inclusion();
            if i.value < 1.0 || i.value > cfg.algorithm.d {
                return Err(WaveError::InvalidPhantom(format!(
                    "inclusion {k} value {} outside [1, {}]",
                    i.value, cfg.algorithm.d
                )));
            }
        }
        Ok(cfg)
    }

    pub fn circle(&self) -> Circle {
        Circle::new(
            Point2::new(self.geometry.circle_center[0], self.geometry.circle_center[1]),
            self.geometry.circle_radius,
        )
    }

    pub fn domain(&self) -> Result<HybridDomain> {
        build_hybrid(
            &rect(&self.geometry.g_bounds),
            &rect(&self.geometry.omega_bounds),
            &self.circle(),
            self.geometry.h,
        )
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            omega: self.sim.omega,
            t_final: self.sim.t_final,
            tau: self.sim.tau,
            sigma: self.sim.sigma,
            seed: self.sim.seed,
            abc_sign: self.sim.abc_sign,
            amplitude: self.sim.amplitude,
        }
    }

    pub fn grid(&self) -> Result<PseudoFreqGrid> {
        PseudoFreqGrid::new(
            self.pseudo_freq.s_low,
            self.pseudo_freq.s_bar,
            self.pseudo_freq.step,
            self.pseudo_freq.lambda,
            self.pseudo_freq.epsilon,
        )
    }

    pub fn gcm(&self) -> GcmConfig {
        GcmConfig {
            m_inner_max: self.algorithm.m_inner_max,
            inner_tol: self.algorithm.inner_tol,
            d: self.algorithm.d,
            tail_init: self.algorithm.tail_init,
        }
    }

    pub fn inclusions(&self) -> Vec<Inclusion> {
        self.phantom.iter().map(InclusionSection::to_inclusion).collect()
    }
}

impl InclusionSection {
    pub fn to_inclusion(&self) -> Inclusion {
        Inclusion {
            shape: self.shape,
            center: Point2::new(self.center[0], self.center[1]),
            radius: self.radius,
            value: self.value,
        }
    }
}
