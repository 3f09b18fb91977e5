//! Run configuration: a TOML file mirroring the library's problem and
//! optimizer settings. Every field has a default, unknown keys are
//! rejected, and each command writes the fully-resolved config next to
//! its outputs so a run can be reproduced from the artifact alone.

use anyhow::{Context, Result};
use pinnbeam::datagen::{CrackModel, FiberDataSpec, TemporalDataSpec};
use pinnbeam::oracle::{BeamGeometry, FourPointLoad, Material};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Beam geometry, material, and load layout. The dimensions are nominal
/// lab values chosen for the synthetic study — adjust to the specimen at
/// hand; nothing downstream assumes these numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamConfig {
    pub length_m: f64,
    pub height_m: f64,
    pub breadth_m: f64,
    pub youngs_pa: f64,
    pub poisson: f64,
    pub total_force_n: f64,
    pub load_x_m: f64,
    pub support_x_m: f64,
    pub patch_width_m: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        let g = BeamGeometry::default_lab_beam();
        let m = Material::concrete();
        let l = FourPointLoad::default_lab_load();
        BeamConfig {
            length_m: g.length,
            height_m: g.height,
            breadth_m: g.breadth,
            youngs_pa: m.youngs,
            poisson: m.poisson,
            total_force_n: l.total_force,
            load_x_m: l.load_x,
            support_x_m: l.support_x,
            patch_width_m: l.patch_width,
        }
    }
}

impl BeamConfig {
    pub fn geometry(&self) -> BeamGeometry {
        BeamGeometry {
            length: self.length_m,
            height: self.height_m,
            breadth: self.breadth_m,
        }
    }

    pub fn material(&self) -> Material {
        Material {
            youngs: self.youngs_pa,
            poisson: self.poisson,
        }
    }

    pub fn load(&self) -> FourPointLoad {
        FourPointLoad {
            total_force: self.total_force_n,
            load_x: self.load_x_m,
            support_x: self.support_x_m,
            patch_width: self.patch_width_m,
        }
    }
}

/// Synthetic strain-gauge time series.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemporalDataConfig {
    pub amplitude_microstrain: f64,
    pub omega_sq: f64,
    pub rate_hz: f64,
    pub duration_s: f64,
    pub noise_sigma_microstrain: f64,
    /// Samples at t ≤ this bound are the training window; the rest is
    /// held out for extrapolation scoring.
    pub train_end_s: f64,
    pub seed: u64,
}

impl Default for TemporalDataConfig {
    fn default() -> Self {
        let d = TemporalDataSpec::default();
        TemporalDataConfig {
            amplitude_microstrain: d.amp,
            omega_sq: d.omega_sq,
            rate_hz: d.rate_hz,
            duration_s: d.duration_s,
            noise_sigma_microstrain: d.noise_sigma,
            train_end_s: 6.0,
            seed: d.seed,
        }
    }
}

impl TemporalDataConfig {
    pub fn spec(&self) -> TemporalDataSpec {
        TemporalDataSpec {
            amp: self.amplitude_microstrain,
            omega_sq: self.omega_sq,
            rate_hz: self.rate_hz,
            duration_s: self.duration_s,
            noise_sigma: self.noise_sigma_microstrain,
            seed: self.seed,
        }
    }
}

/// Synthetic distributed fiber scans on the two outer fibers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiberDataConfig {
    pub n_compression: usize,
    pub n_tension: usize,
    pub fiber_inset_m: f64,
    pub noise_sigma_microstrain: f64,
    pub seed: u64,
    /// Local strain amplification bands on the tension fiber.
    pub cracks: bool,
    pub crack_centers_m: Vec<f64>,
    pub crack_width_m: f64,
    pub crack_amplification: f64,
}

impl Default for FiberDataConfig {
    fn default() -> Self {
        let d = FiberDataSpec::default();
        let c = CrackModel::default_two_cracks();
        FiberDataConfig {
            n_compression: d.n_compression,
            n_tension: d.n_tension,
            fiber_inset_m: d.fiber_inset,
            noise_sigma_microstrain: d.noise_sigma,
            seed: d.seed,
            cracks: true,
            crack_centers_m: c.centers,
            crack_width_m: c.width,
            crack_amplification: c.amplification,
        }
    }
}

impl FiberDataConfig {
    pub fn spec(&self, beam: &BeamConfig) -> FiberDataSpec {
        FiberDataSpec {
            geom: beam.geometry(),
            mat: beam.material(),
            load: beam.load(),
            n_compression: self.n_compression,
            n_tension: self.n_tension,
            fiber_inset: self.fiber_inset_m,
            noise_sigma: self.noise_sigma_microstrain,
            seed: self.seed,
            cracks: if self.cracks {
                Some(CrackModel {
                    centers: self.crack_centers_m.clone(),
                    width: self.crack_width_m,
                    amplification: self.crack_amplification,
                })
            } else {
                None
            },
        }
    }
}

/// Temporal surrogate training: a chain of overlapping windows, each run
/// through the Adam → L-BFGS schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemporalTrainConfig {
    pub t_ref_s: f64,
    pub strain_scale_microstrain: f64,
    pub w_ode: f64,
    pub w_data: f64,
    pub adam_epochs: usize,
    pub adam_lr: f64,
    pub lbfgs_memory: usize,
    pub lbfgs_iters: usize,
    pub label_rate_hz: f64,
    pub ode_residual_scale: f64,
    pub seed: u64,
}

impl Default for TemporalTrainConfig {
    fn default() -> Self {
        TemporalTrainConfig {
            t_ref_s: 8.0,
            strain_scale_microstrain: 100.0,
            w_ode: 1.0,
            w_data: 1.0,
            adam_epochs: 5000,
            adam_lr: 1e-3,
            lbfgs_memory: 100,
            lbfgs_iters: 2000,
            label_rate_hz: 10.0,
            ode_residual_scale: 0.1,
            seed: 0,
        }
    }
}

/// Natural-frequency identification from the measured window.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentifyConfig {
    pub omega_sq_init: f64,
    pub adam_epochs: usize,
    pub lbfgs_memory: usize,
    pub lbfgs_iters: usize,
    pub seed: u64,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig {
            omega_sq_init: 1.0,
            adam_epochs: 5000,
            lbfgs_memory: 100,
            lbfgs_iters: 2000,
            seed: 0,
        }
    }
}

/// Spatial surrogate training.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpatialTrainConfig {
    /// Data-variant selector (1: compression only; 2: both fibers;
    /// 3: tension down-weighted). The `--scenario` flag overrides; the
    /// resolved echo records whichever was used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<u8>,
    pub interior_points: usize,
    pub adam_epochs: usize,
    pub adam_lr: f64,
    pub lbfgs_memory: usize,
    pub lbfgs_iters: usize,
    pub w_pde: f64,
    pub w_bc: f64,
    pub w_exp_compression: f64,
    /// Tension misfit weight. Normally derived from the scenario (and
    /// omitted when the scenario uses no tension data); set explicitly to
    /// override.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_exp_tension: Option<f64>,
    pub w_rotation: f64,
    /// Remove the rigid-motion null space (vertical pin + zero-mean
    /// rotation penalty). Disable to leave displacements free up to a
    /// translation and rotation.
    pub null_space_pinning: bool,
    /// Full-field evaluation grid (columns × rows over the beam).
    pub field_grid_nx: usize,
    pub field_grid_ny: usize,
    pub seed: u64,
}

impl Default for SpatialTrainConfig {
    fn default() -> Self {
        SpatialTrainConfig {
            scenario: None,
            interior_points: 500,
            adam_epochs: 2000,
            adam_lr: 1e-3,
            lbfgs_memory: 50,
            lbfgs_iters: 500,
            w_pde: 1.0,
            w_bc: 1.0,
            w_exp_compression: 1.0,
            w_exp_tension: None,
            w_rotation: 1e-2,
            null_space_pinning: true,
            field_grid_nx: 100,
            field_grid_ny: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub beam: BeamConfig,
    pub temporal_data: TemporalDataConfig,
    pub fiber_data: FiberDataConfig,
    pub temporal_train: TemporalTrainConfig,
    pub identify: IdentifyConfig,
    pub spatial_train: SpatialTrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("invalid config file {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.beam;
        anyhow::ensure!(
            b.length_m > 0.0 && b.height_m > 0.0 && b.breadth_m > 0.0,
            "beam dimensions must be positive"
        );
        anyhow::ensure!(
            b.youngs_pa > 0.0 && (0.0..0.5).contains(&b.poisson),
            "material constants out of range"
        );
        let t = &self.temporal_data;
        anyhow::ensure!(
            t.rate_hz > 0.0 && t.duration_s > 0.0,
            "temporal sampling must be positive"
        );
        anyhow::ensure!(
            t.train_end_s > 0.0 && t.train_end_s <= t.duration_s,
            "train_end_s must lie inside the record"
        );
        anyhow::ensure!(
            t.noise_sigma_microstrain >= 0.0
                && self.fiber_data.noise_sigma_microstrain >= 0.0,
            "noise levels must be non-negative"
        );
        anyhow::ensure!(
            self.spatial_train.field_grid_nx >= 2 && self.spatial_train.field_grid_ny >= 2,
            "field grid must be at least 2x2"
        );
        Ok(())
    }

    /// Serialize with a stable layout for the resolved-config echo.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
