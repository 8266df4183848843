//! Experiment configuration: JSON schema, validation and the objects it builds.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wkbsplit::{ComplexField, GrenierParams, Grid, ModelParams, NormParams, RealField, WkbState};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub points: usize,
    /// Half period `L`; the box is `[-L, L)^d`.
    pub half_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub epsilons: Vec<f64>,
    pub lambda: f64,
    pub sigma: u32,
    /// Final time `T`.
    pub horizon: f64,
}

/// `a0(x) = A exp(-alpha |x|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeProfile {
    pub height: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PhaseProfile {
    Zero,
    /// `c exp(-alpha |x|^2)`
    Gaussian { height: f64, width: f64 },
    /// `c prod_j cos(k x_j)`, `k` a multiple of `pi / L` for periodicity
    Cosine { height: f64, wavenumber: f64 },
}

impl PhaseProfile {
    pub fn value(&self, x: [f64; 2], dim: usize) -> f64 {
        match *self {
            PhaseProfile::Zero => 0.0,
            PhaseProfile::Gaussian { height, width } => height * (-width * r2(x, dim)).exp(),
            PhaseProfile::Cosine { height, wavenumber } => {
                height * x[..dim].iter().map(|xj| (wavenumber * xj).cos()).product::<f64>()
            }
        }
    }

    /// First and second derivative of the one-dimensional profile.
    pub fn derivatives_1d(&self, x: f64) -> (f64, f64) {
        match *self {
            PhaseProfile::Zero => (0.0, 0.0),
            PhaseProfile::Gaussian { height, width } => {
                let g = height * (-width * x * x).exp();
                (-2.0 * width * x * g, (4.0 * width * width * x * x - 2.0 * width) * g)
            }
            PhaseProfile::Cosine { height, wavenumber: k } => {
                (-height * k * (k * x).sin(), -height * k * k * (k * x).cos())
            }
        }
    }
}

fn r2(x: [f64; 2], dim: usize) -> f64 {
    x[..dim].iter().map(|v| v * v).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub amplitude: AmplitudeProfile,
    pub phase: PhaseProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    pub ell: f64,
    pub nu: f64,
    pub m0: f64,
    pub m_ladder: Vec<f64>,
    /// Spectral band `|k| <= band` over which analytic norms are summed.
    pub band: Option<f64>,
    /// Budgets are checked on `[0, min(T, fraction * M0 / M)]`.
    pub horizon_fraction: f64,
    /// Decay rate of the weight used by the local-error study.
    pub local_m: f64,
    /// Sample count of the exact trajectory used by norm tracking.
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Simulate,
    Sweep,
    LocalError,
    NormTrack,
    CrossCheck,
}

impl Task {
    fn uses_norm_budgets(self) -> bool {
        matches!(self, Task::NormTrack)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub model: ModelSpec,
    pub initial: InitialSpec,
    pub time_steps: Vec<f64>,
    #[serde(default)]
    pub local: LocalSpec,
    #[serde(default)]
    pub cross_check: CrossCheckSpec,
    pub norms: NormSpec,
    pub reference_substeps: usize,
    pub output_dir: PathBuf,
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalSpec {
    /// Single-step times.
    pub times: Vec<f64>,
    /// Step at which the defect formula is evaluated by quadrature.
    pub integral_time: f64,
    pub integral_nodes: Vec<usize>,
}

impl Default for LocalSpec {
    fn default() -> Self {
        LocalSpec {
            times: (4..=9).map(|j| 2f64.powi(-j)).collect(),
            integral_time: 1.0 / 64.0,
            integral_nodes: vec![2, 4, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossCheckSpec {
    /// Time at which the eikonal flow is compared with characteristics.
    pub oracle_time: f64,
    pub iteration_horizon: f64,
    pub iteration_stages: usize,
}

impl Default for CrossCheckSpec {
    fn default() -> Self {
        CrossCheckSpec { oracle_time: 0.1, iteration_horizon: 0.05, iteration_stages: 8 }
    }
}

impl ExperimentConfig {
    /// One-dimensional desk configuration: `N = 512` on `[-2 pi, 2 pi)`, cubic
    /// defocusing, Gaussian data, `dt = 2^-5 T, ..., 2^-11 T`.
    pub fn desk(task: Task) -> Self {
        let horizon = if task.uses_norm_budgets() { 0.1 } else { 0.5 };
        ExperimentConfig {
            grid: GridSpec { dim: 1, points: 512, half_length: 2.0 * PI },
            model: ModelSpec {
                epsilons: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
                lambda: 1.0,
                sigma: 1,
                horizon,
            },
            initial: InitialSpec {
                amplitude: AmplitudeProfile { height: 1.0, width: 1.0 },
                phase: PhaseProfile::Gaussian { height: -0.25, width: 1.0 },
            },
            time_steps: (5..=11).map(|j| horizon * 2f64.powi(-j)).collect(),
            local: LocalSpec::default(),
            cross_check: CrossCheckSpec::default(),
            norms: NormSpec {
                ell: 4.0,
                nu: 1.0,
                m0: 0.5,
                m_ladder: vec![4.0, 8.0, 16.0, 32.0, 64.0],
                band: Some(16.0),
                horizon_fraction: 0.8,
                local_m: 0.5,
                samples: 256,
            },
            reference_substeps: 32,
            output_dir: PathBuf::from("out"),
            task,
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.to_path_buf(), e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let t = self.model.horizon;
        if !(t > 0.0 && t.is_finite()) {
            return bad(format!("horizon {t} must be positive"));
        }
        if self.model.epsilons.is_empty() {
            return bad("no epsilon values".into());
        }
        if let Some(e) = self.model.epsilons.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
            return bad(format!("epsilon {e} not in (0, 1]"));
        }
        if self.time_steps.is_empty() {
            return bad("no time steps".into());
        }
        for &dt in &self.time_steps {
            if !(dt > 0.0 && dt <= t) {
                return bad(format!("time step {dt} not in (0, T = {t}]"));
            }
            step_count(t, dt)?;
        }
        let l = &self.local;
        if let Some(s) = l.times.iter().chain([&l.integral_time]).find(|&&s| !(s > 0.0 && s.is_finite())) {
            return bad(format!("local time {s} must be positive"));
        }
        if l.integral_nodes.contains(&0) {
            return bad("quadrature node counts must be positive".into());
        }
        let c = &self.cross_check;
        if !(c.oracle_time > 0.0 && c.iteration_horizon > 0.0) || c.iteration_stages == 0 {
            return bad("cross-check times and stage count must be positive".into());
        }
        if self.reference_substeps == 0 {
            return bad("reference substeps must be positive".into());
        }
        let n = &self.norms;
        if n.m_ladder.is_empty() || n.m_ladder.iter().any(|&m| !(m > 0.0)) {
            return bad("M ladder must be nonempty and positive".into());
        }
        if !(n.horizon_fraction > 0.0 && n.horizon_fraction < 1.0) {
            return bad(format!("horizon fraction {} not in (0, 1)", n.horizon_fraction));
        }
        if self.task.uses_norm_budgets() {
            self.check_norm_horizon()?;
        }
        self.norm_params(n.m_ladder[0])?;
        self.build_grid()?;
        for &e in &self.model.epsilons {
            self.model_params(e)?;
        }
        Ok(())
    }

    /// Norm budgets need `T < M0 / min M` so that every ladder width stays positive.
    pub fn check_norm_horizon(&self) -> Result<(), HarnessError> {
        let n = &self.norms;
        let t = self.model.horizon;
        let m_min = n.m_ladder.iter().cloned().fold(f64::INFINITY, f64::min);
        if t >= n.m0 / m_min {
            return Err(HarnessError::Config(format!("T = {t} must be below M0 / min M = {}", n.m0 / m_min)));
        }
        if n.samples < 2 {
            return Err(HarnessError::Config("norm tracking needs at least two samples".into()));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>, HarnessError> {
        Ok(Grid::new(self.grid.dim, self.grid.points, self.grid.half_length)?)
    }

    pub fn model_params(&self, eps: f64) -> Result<ModelParams, HarnessError> {
        Ok(ModelParams::new(eps, self.model.lambda, self.model.sigma, self.model.horizon)?)
    }

    pub fn grenier_params(&self, eps: f64) -> Result<GrenierParams, HarnessError> {
        Ok(GrenierParams::new(&self.model_params(eps)?, self.reference_substeps)?)
    }

    /// Norm schedule `rho(t) = M0 - M t` at order `ell`.
    pub fn norm_params(&self, m: f64) -> Result<NormParams, HarnessError> {
        let n = &self.norms;
        let p = NormParams { nu: n.nu, band: n.band, ..NormParams::new(n.ell, n.m0, m)? };
        p.validate()?;
        Ok(p)
    }

    pub fn initial_state(&self, grid: &Arc<Grid>) -> Result<WkbState, HarnessError> {
        let dim = grid.dim();
        let a = self.initial.amplitude;
        let phase = RealField::from_fn(grid.clone(), |x| self.initial.phase.value(x, dim));
        let amp = ComplexField::from_fn(grid.clone(), |x| Complex64::new(a.height * (-a.width * r2(x, dim)).exp(), 0.0));
        Ok(WkbState::new(phase, amp, 0.0)?)
    }
}

/// `T / dt` as an integer; rejects steps that do not divide the horizon.
pub fn step_count(t: f64, dt: f64) -> Result<usize, HarnessError> {
    let n = (t / dt).round();
    if n < 1.0 || ((n * dt - t) / t).abs() > 1e-9 {
        return Err(HarnessError::Config(format!("time step {dt} does not divide T = {t}")));
    }
    Ok(n as usize)
}
