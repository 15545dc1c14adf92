//! JSON experiment configuration for the runner and the `qbattery` binary.
//!
//! ```json
//! {
//!   "battery": {"ising": {"J1": 0.5, "J2": 1.0, "J3": 0.5}},
//!   "state": {"thermal_mixture": {"alpha": 0.96, "T": 1.5}},
//!   "protocol": "variance",
//!   "parameters": {"b": [0.0, 0.45, 0.9], "alpha": [0.08, 0.96]},
//!   "sampling": {"n_unitaries": 100000, "seed": 7},
//!   "output": {"path": "out.csv", "format": "csv"}
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::battery::{BatteryHamiltonian, IsingFamily};
use crate::error::{Error, Result};
use crate::linalg::{self, JsonMatrix};
use crate::state::DensityMatrix;

pub const DEFAULT_N_UNITARIES: usize = 100_000;
pub const DEFAULT_BIN_WIDTH: f64 = 0.1;
/// Field of the reference histograms and TPM sweeps.
pub const DEFAULT_B: f64 = 0.45;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BatterySpec {
    Ising {
        #[serde(rename = "J1")]
        j1: f64,
        #[serde(rename = "J2")]
        j2: f64,
        #[serde(rename = "J3")]
        j3: f64,
        /// Used when `parameters.b` is absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<f64>,
    },
    Explicit {
        h_a: JsonMatrix,
        h_b: JsonMatrix,
        v: JsonMatrix,
        g: f64,
    },
}

impl Default for BatterySpec {
    fn default() -> Self {
        let r = IsingFamily::REFERENCE;
        BatterySpec::Ising {
            j1: r.j1,
            j2: r.j2,
            j3: r.j3,
            b: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    /// `α τ_AB + (1−α) τ_A⊗τ_B` from the local Gibbs states of an Ising battery.
    ThermalMixture {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
        temperature: Option<f64>,
    },
    /// `α |Φ⁺⟩⟨Φ⁺| + (1−α) 𝟙/d²`, the infinite-temperature limit.
    Isotropic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
    Explicit(JsonMatrix),
    /// Path to a JSON matrix, relative to the working directory.
    File(PathBuf),
    MaximallyMixed,
}

impl Default for StateSpec {
    fn default() -> Self {
        StateSpec::ThermalMixture {
            alpha: None,
            temperature: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Variance,
    Witness,
    Histogram,
    Tpm,
    Coincidence,
    Verify,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Variance => "variance",
            Protocol::Witness => "witness",
            Protocol::Histogram => "histogram",
            Protocol::Tpm => "tpm",
            Protocol::Coincidence => "coincidence",
            Protocol::Verify => "verify",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Sweep grids. Absent grids fall back to the value in the battery/state
/// spec, then to the protocol default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<Vec<f64>>,
    /// Equal efficiency on both sides; excludes `eps_a`/`eps_b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    #[serde(default = "default_n")]
    pub n_unitaries: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Add Monte-Carlo columns to the closed-form sweeps.
    #[serde(default)]
    pub monte_carlo: bool,
}

fn default_n() -> usize {
    DEFAULT_N_UNITARIES
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            n_unitaries: DEFAULT_N_UNITARIES,
            seed: None,
            monte_carlo: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// Settings of the verification suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySettings {
    #[serde(default = "default_verify_d")]
    pub d: usize,
    #[serde(default = "default_verify_n")]
    pub n: usize,
    /// Allowed deviation in standard errors.
    #[serde(default = "default_n_se")]
    pub n_se: f64,
    /// Random instances per inequality sweep.
    #[serde(default = "default_instances")]
    pub instances: usize,
}

fn default_verify_d() -> usize {
    2
}
fn default_verify_n() -> usize {
    10_000
}
fn default_n_se() -> f64 {
    5.0
}
fn default_instances() -> usize {
    50
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            d: default_verify_d(),
            n: default_verify_n(),
            n_se: default_n_se(),
            instances: default_instances(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub battery: BatterySpec,
    #[serde(default)]
    pub state: StateSpec,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub verify: VerifySettings,
}

/// One point of the parameter grid. Fields that do not apply to the
/// configured battery/state are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GridPoint {
    pub b: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(rename = "T")]
    pub temperature: Option<f64>,
}

/// `count` evenly spaced points from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

fn nonempty(key: &str, grid: &Option<Vec<f64>>) -> Result<()> {
    match grid {
        Some(v) if v.is_empty() => Err(Error::config(key, "grid is empty")),
        Some(v) => match v.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(Error::config(format!("{key}[{i}]"), "not a finite number")),
            None => Ok(()),
        },
        None => Ok(()),
    }
}

fn in_unit(key: &str, grid: &Option<Vec<f64>>) -> Result<()> {
    if let Some(v) = grid {
        if let Some(i) = v.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::config(format!("{key}[{i}]"), format!("{} is outside [0, 1]", v[i])));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(s).map_err(|e| Error::config("<root>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization is infallible")
    }

    /// Whether the configured protocol draws random unitaries.
    pub fn needs_seed(&self) -> bool {
        match self.protocol {
            Protocol::Histogram | Protocol::Verify => true,
            Protocol::Variance | Protocol::Tpm | Protocol::Coincidence => self.sampling.monte_carlo,
            Protocol::Witness => false,
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.sampling
            .seed
            .ok_or_else(|| Error::config("sampling.seed", "a seed is required for Monte-Carlo runs"))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.parameters;
        for (key, grid) in [
            ("parameters.b", &p.b),
            ("parameters.alpha", &p.alpha),
            ("parameters.T", &p.temperature),
            ("parameters.eps", &p.eps),
            ("parameters.eps_a", &p.eps_a),
            ("parameters.eps_b", &p.eps_b),
        ] {
            nonempty(key, grid)?;
        }
        in_unit("parameters.alpha", &p.alpha)?;
        in_unit("parameters.eps", &p.eps)?;
        in_unit("parameters.eps_a", &p.eps_a)?;
        in_unit("parameters.eps_b", &p.eps_b)?;
        if p.eps.is_some() && (p.eps_a.is_some() || p.eps_b.is_some()) {
            return Err(Error::config(
                "parameters.eps",
                "give either eps or eps_a/eps_b, not both",
            ));
        }
        if let Some(t) = &p.temperature {
            if let Some(i) = t.iter().position(|x| *x <= 0.0) {
                return Err(Error::config(format!("parameters.T[{i}]"), "temperature must be positive"));
            }
        }
        if let Some(w) = p.bin_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::config("parameters.bin_width", "must be positive"));
            }
        }
        if self.needs_seed() {
            self.seed()?;
            if self.sampling.n_unitaries < 2 {
                return Err(Error::config("sampling.n_unitaries", "need at least 2 samples"));
            }
        }
        match &self.battery {
            BatterySpec::Ising { j1, j2, j3, b } => {
                for (key, v) in [("J1", j1), ("J2", j2), ("J3", j3)] {
                    if !v.is_finite() {
                        return Err(Error::config(format!("battery.ising.{key}"), "not a finite number"));
                    }
                }
                if b.is_some() && p.b.is_some() {
                    return Err(Error::config("battery.ising.b", "also given as parameters.b"));
                }
            }
            BatterySpec::Explicit { .. } => {
                if p.b.is_some() {
                    return Err(Error::config("parameters.b", "only applies to the ising battery"));
                }
                self.battery_at(None)?;
            }
        }
        match &self.state {
            StateSpec::ThermalMixture { alpha, temperature } => {
                if !matches!(self.battery, BatterySpec::Ising { .. }) {
                    return Err(Error::config("state.thermal_mixture", "requires the ising battery"));
                }
                if alpha.is_some() && p.alpha.is_some() {
                    return Err(Error::config("state.thermal_mixture.alpha", "also given as parameters.alpha"));
                }
                if temperature.is_some() && p.temperature.is_some() {
                    return Err(Error::config("state.thermal_mixture.T", "also given as parameters.T"));
                }
                if let Some(a) = alpha {
                    in_unit("state.thermal_mixture.alpha", &Some(vec![*a]))?;
                }
                if let Some(t) = temperature {
                    if !(*t > 0.0 && t.is_finite()) {
                        return Err(Error::config("state.thermal_mixture.T", "temperature must be positive"));
                    }
                }
            }
            StateSpec::Isotropic { alpha } => {
                if alpha.is_some() && p.alpha.is_some() {
                    return Err(Error::config("state.isotropic.alpha", "also given as parameters.alpha"));
                }
                if let Some(a) = alpha {
                    in_unit("state.isotropic.alpha", &Some(vec![*a]))?;
                }
            }
            StateSpec::File(path) => {
                if !path.exists() {
                    return Err(Error::config("state.file", format!("{} does not exist", path.display())));
                }
            }
            StateSpec::Explicit(_) | StateSpec::MaximallyMixed => {}
        }
        if !matches!(self.state, StateSpec::ThermalMixture { .. } | StateSpec::Isotropic { .. })
            && p.alpha.is_some()
        {
            return Err(Error::config("parameters.alpha", "the configured state has no alpha"));
        }
        if !matches!(self.state, StateSpec::ThermalMixture { .. }) && p.temperature.is_some() {
            return Err(Error::config("parameters.T", "the configured state has no temperature"));
        }
        if self.protocol != Protocol::Verify {
            let h = self.battery_at(self.b_grid().first().copied().flatten())?;
            let point = self.grid().into_iter().next().unwrap_or_default();
            let rho = self.state_at(&point, &h)?;
            if rho.dim() != h.d() * h.d() {
                return Err(Error::config(
                    "state",
                    format!("state has dimension {}, battery needs {}", rho.dim(), h.d() * h.d()),
                ));
            }
        }
        if !(self.verify.n_se >= 0.0) {
            return Err(Error::config("verify.n_se", "must be non-negative"));
        }
        if self.protocol == Protocol::Verify {
            linalg::check_local_dim(self.verify.d).map_err(|e| Error::config("verify.d", e.to_string()))?;
            if self.verify.n < 2 {
                return Err(Error::config("verify.n", "need at least 2 samples"));
            }
        }
        Ok(())
    }

    fn b_grid(&self) -> Vec<Option<f64>> {
        match (&self.battery, &self.parameters.b) {
            (BatterySpec::Ising { .. }, Some(g)) => g.iter().map(|x| Some(*x)).collect(),
            (BatterySpec::Ising { b: Some(b), .. }, None) => vec![Some(*b)],
            (BatterySpec::Ising { b: None, .. }, None) => match self.protocol {
                Protocol::Variance | Protocol::Witness => linspace(0.0, 1.0, 21).into_iter().map(Some).collect(),
                _ => vec![Some(DEFAULT_B)],
            },
            (BatterySpec::Explicit { .. }, _) => vec![None],
        }
    }

    fn alpha_grid(&self) -> Vec<Option<f64>> {
        let fixed = match &self.state {
            StateSpec::ThermalMixture { alpha, .. } | StateSpec::Isotropic { alpha } => alpha,
            _ => return vec![None],
        };
        match (&self.parameters.alpha, fixed) {
            (Some(g), _) => g.iter().map(|x| Some(*x)).collect(),
            (None, Some(a)) => vec![Some(*a)],
            (None, None) => linspace(0.0, 1.0, 51).into_iter().map(Some).collect(),
        }
    }

    fn temperature_grid(&self) -> Vec<Option<f64>> {
        let StateSpec::ThermalMixture { temperature, .. } = &self.state else {
            return vec![None];
        };
        match (&self.parameters.temperature, temperature) {
            (Some(g), _) => g.iter().map(|x| Some(*x)).collect(),
            (None, Some(t)) => vec![Some(*t)],
            (None, None) => vec![Some(IsingFamily::REFERENCE.temperature)],
        }
    }

    /// Grid points in output order: `b` outermost, then `T`, then `α`.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for b in self.b_grid() {
            for t in self.temperature_grid() {
                for a in self.alpha_grid() {
                    out.push(GridPoint {
                        b,
                        alpha: a,
                        temperature: t,
                    });
                }
            }
        }
        out
    }

    /// `(ε_A, ε_B)` pairs: the diagonal of `eps`, or the product of
    /// `eps_a × eps_b`. Defaults to `{0.2, 0.5, 1.0}` on both sides.
    pub fn epsilon_grid(&self) -> Vec<(f64, f64)> {
        let p = &self.parameters;
        if let Some(e) = &p.eps {
            return e.iter().map(|x| (*x, *x)).collect();
        }
        match (&p.eps_a, &p.eps_b) {
            (None, None) => [0.2, 0.5, 1.0].iter().map(|x| (*x, *x)).collect(),
            (a, b) => {
                let a = a.clone().unwrap_or_else(|| b.clone().unwrap_or_default());
                let b = b.clone().unwrap_or_else(|| a.clone());
                a.iter().flat_map(|x| b.iter().map(move |y| (*x, *y))).collect()
            }
        }
    }

    pub fn bin_width(&self) -> f64 {
        self.parameters.bin_width.unwrap_or(DEFAULT_BIN_WIDTH)
    }

    pub fn battery_at(&self, b: Option<f64>) -> Result<BatteryHamiltonian> {
        match &self.battery {
            BatterySpec::Ising { j1, j2, j3, .. } => {
                Ok(BatteryHamiltonian::ising(*j1, *j2, *j3, b.unwrap_or(DEFAULT_B)))
            }
            BatterySpec::Explicit { h_a, h_b, v, g } => {
                BatteryHamiltonian::new(h_a.0.clone(), h_b.0.clone(), v.0.clone(), *g)
                    .map_err(|e| Error::config("battery.explicit", e.to_string()))
            }
        }
    }

    pub fn family(&self, temperature: f64) -> Option<IsingFamily> {
        match &self.battery {
            BatterySpec::Ising { j1, j2, j3, .. } => Some(IsingFamily {
                j1: *j1,
                j2: *j2,
                j3: *j3,
                temperature,
            }),
            BatterySpec::Explicit { .. } => None,
        }
    }

    pub fn state_at(&self, point: &GridPoint, h: &BatteryHamiltonian) -> Result<DensityMatrix> {
        let dim = h.d() * h.d();
        let state = match &self.state {
            StateSpec::ThermalMixture { .. } => {
                let t = point.temperature.unwrap_or(IsingFamily::REFERENCE.temperature);
                let family = self
                    .family(t)
                    .ok_or_else(|| Error::config("state.thermal_mixture", "requires the ising battery"))?;
                family.state(point.b.unwrap_or(DEFAULT_B), point.alpha.unwrap_or(0.0))
            }
            StateSpec::Isotropic { .. } => {
                let a = point.alpha.unwrap_or(0.0);
                let phi = DensityMatrix::maximally_entangled(h.d());
                let mixed = DensityMatrix::maximally_mixed(dim);
                DensityMatrix::mixture(&[(a, &phi), (1.0 - a, &mixed)])
            }
            StateSpec::Explicit(m) => DensityMatrix::new(m.0.clone()),
            StateSpec::File(path) => std::fs::read_to_string(path)
                .map_err(Error::from)
                .and_then(|s| linalg::matrix_from_json(&s))
                .and_then(DensityMatrix::new),
            StateSpec::MaximallyMixed => Ok(DensityMatrix::maximally_mixed(dim)),
        };
        state.map_err(|e| Error::config("state", e.to_string()))
    }
}
