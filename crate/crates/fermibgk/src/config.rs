//! TOML run configuration.
//!
//! A file names a scenario preset and overrides any of its keys:
//!
//! ```toml
//! scenario = "decay1x3v"
//! seed = 7
//!
//! [grid]
//! n_x = 16
//!
//! [tau]
//! c = [0.0, 0.0, 0.0, 2.0]
//! ```
//!
//! The preset is serialized, the file's tables are merged over it key by key,
//! and the result is deserialized with unknown keys rejected, so overrides are
//! type-checked against the full schema.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use fermibgk_core::fdintegrals::BRANCH_POINT;
use fermibgk_core::phasegrid::{Perturbation, VelocityProfile, DEFAULT_ADEQUACY};
use fermibgk_core::solver::{InversionMode, RunConfig, TransportScheme};
use fermibgk_core::{GlobalEquilibrium, PhaseGrid, SpatialGrid, TauCoefficients, VelocityGrid};

use crate::error::{AppError, AppResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "relax0d")]
    Relax0d,
    #[serde(rename = "decay1x3v")]
    Decay1x3v,
    #[serde(rename = "lincheck")]
    Lincheck,
    #[serde(rename = "betatable")]
    Betatable,
    #[serde(rename = "invert-roundtrip")]
    InvertRoundtrip,
    #[serde(rename = "picard")]
    Picard,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 6] = [
        ScenarioId::Relax0d,
        ScenarioId::Decay1x3v,
        ScenarioId::Lincheck,
        ScenarioId::Betatable,
        ScenarioId::InvertRoundtrip,
        ScenarioId::Picard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Relax0d => "relax0d",
            ScenarioId::Decay1x3v => "decay1x3v",
            ScenarioId::Lincheck => "lincheck",
            ScenarioId::Betatable => "betatable",
            ScenarioId::InvertRoundtrip => "invert-roundtrip",
            ScenarioId::Picard => "picard",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = AppError;

    fn from_str(s: &str) -> AppResult<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = ScenarioId::ALL.iter().map(|id| id.name()).collect();
                AppError::Config(format!("unknown scenario `{s}` (known: {})", known.join(", ")))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    Upwind,
    SemiLagrangian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inversion {
    Discrete,
    Continuous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Basis vector `e_index`, `index ∈ 1..=5`.
    Basis,
    /// `p₁p₂√(m − m²)`.
    Shear,
    /// Gaussian bump at `center` with `width`.
    Bump,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    /// Velocity points per axis.
    pub n_p: usize,
    /// Velocity truncation; defaults to `6/√a₀`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    pub n_x: usize,
    /// Period `Λ` of the spatial axis.
    pub length: f64,
    /// Allowed relative error of the grid density of `m`.
    pub adequacy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSettings {
    pub a0: f64,
    pub c0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub dt: f64,
    pub t_end: f64,
    pub transport: Transport,
    pub inversion: Inversion,
    pub snapshot_every: usize,
}

/// `1/τ = P(N)(C₁aⁿ + C₂aᵐ + C₃) + C₄`; `poly` in ascending powers of `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauSettings {
    pub poly: Vec<f64>,
    pub n: f64,
    pub m: f64,
    pub c: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSettings {
    pub amplitude: f64,
    pub profile: Profile,
    pub index: usize,
    pub center: [f64; 3],
    pub width: f64,
    /// Spatial Fourier mode; 0 is uniform in `x`.
    pub mode: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSettings {
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    /// Start of the fit window; defaults to `2τ` at the global equilibrium.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_start: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaTableSettings {
    pub c_min: f64,
    pub c_max: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LincheckSettings {
    /// Random `f` for the coercivity identity.
    pub samples: usize,
    /// Random `g` for the linearization order check.
    pub residual_samples: usize,
    pub eps: Vec<f64>,
    /// Random `(a₀, c₀)` for the positivity check.
    pub positivity_samples: usize,
    /// Fault injection: scale basis vector `corrupt_index` by `corrupt_factor`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt_index: Option<usize>,
    pub corrupt_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertSettings {
    /// Random moment triples for the round trip.
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    /// Write a binary snapshot with every diagnostic record.
    pub snapshots: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub scenario: ScenarioId,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub grid: GridSettings,
    pub equilibrium: EquilibriumSettings,
    pub run: RunSettings,
    pub tau: TauSettings,
    pub perturbation: PerturbationSettings,
    pub picard: PicardSettings,
    pub fit: FitSettings,
    pub betatable: BetaTableSettings,
    pub lincheck: LincheckSettings,
    pub invert: InvertSettings,
    pub output: OutputSettings,
}

impl Settings {
    /// The preset values of a scenario.
    pub fn preset(id: ScenarioId) -> Self {
        let mut s = Settings {
            scenario: id,
            seed: 1,
            threads: 0,
            grid: GridSettings {
                n_p: 24,
                p_max: None,
                n_x: 32,
                length: 8.0,
                adequacy: DEFAULT_ADEQUACY,
            },
            equilibrium: EquilibriumSettings { a0: 1.0, c0: 0.0 },
            run: RunSettings {
                dt: 0.05,
                t_end: 10.0,
                transport: Transport::SemiLagrangian,
                inversion: Inversion::Discrete,
                snapshot_every: 1,
            },
            tau: TauSettings {
                poly: vec![1.0],
                n: 0.0,
                m: 0.0,
                c: [0.0, 0.0, 0.0, 1.0],
            },
            perturbation: PerturbationSettings {
                amplitude: 1e-3,
                profile: Profile::Basis,
                index: 3,
                center: [0.8, 0.0, 0.0],
                width: 0.7,
                mode: 1,
            },
            picard: PicardSettings { iterations: 6 },
            fit: FitSettings { t_start: None },
            betatable: BetaTableSettings {
                c_min: BRANCH_POINT,
                c_max: 10.0,
                n: 100,
            },
            lincheck: LincheckSettings {
                samples: 100,
                residual_samples: 20,
                eps: vec![1e-2, 1e-3, 1e-4],
                positivity_samples: 200,
                corrupt_index: None,
                corrupt_factor: 1.0,
            },
            invert: InvertSettings { samples: 100 },
            output: OutputSettings { snapshots: false },
        };
        match id {
            ScenarioId::Relax0d => {
                s.grid.n_x = 1;
                s.grid.length = 1.0;
                s.run.dt = 0.05;
                s.run.t_end = 20.0;
                s.perturbation.amplitude = 0.03;
                s.perturbation.profile = Profile::Shear;
                s.perturbation.mode = 0;
            }
            ScenarioId::Decay1x3v => {
                // a transverse-momentum wave: diffusive, non-oscillating decay
                s.grid.n_x = 32;
                s.grid.length = 8.0;
                s.run.dt = 0.1;
                s.run.t_end = 30.0;
            }
            ScenarioId::Picard => {
                s.grid.n_p = 16;
                s.grid.n_x = 16;
                s.grid.length = 4.0;
                s.grid.adequacy = 1e-4;
                s.run.dt = 0.05;
                s.run.t_end = 0.5;
                s.perturbation.amplitude = 1e-2;
                s.perturbation.profile = Profile::Basis;
                s.perturbation.index = 1;
            }
            ScenarioId::Lincheck => {
                s.grid.n_p = 32;
            }
            ScenarioId::Betatable | ScenarioId::InvertRoundtrip => {}
        }
        s
    }

    /// Parses `text` as overrides of the preset it names (or of `fallback`).
    /// `forced` replaces the file's `scenario` key.
    pub fn from_toml(text: &str, fallback: ScenarioId, forced: Option<ScenarioId>) -> AppResult<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| AppError::Config(format!("cannot parse configuration: {e}")))?;
        let id = match (forced, user.get("scenario")) {
            (Some(id), _) => id,
            (None, Some(toml::Value::String(name))) => name.parse()?,
            (None, Some(_)) => return Err(AppError::Config("`scenario` must be a string".into())),
            (None, None) => fallback,
        };
        let preset = Self::preset(id);
        let mut merged = toml::Table::try_from(&preset)
            .map_err(|e| AppError::Config(format!("cannot serialize preset: {e}")))?;
        merge(&mut merged, user, "");
        merged.insert("scenario".into(), toml::Value::String(id.name().into()));
        let settings: Settings = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| AppError::Config(format!("invalid configuration: {e}")))?;
        settings.validate()?;
        Ok(settings)
    }

    pub fn load(path: Option<&Path>, fallback: ScenarioId, forced: Option<ScenarioId>) -> AppResult<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| AppError::io(p.display(), e))?;
                Self::from_toml(&text, fallback, forced)
            }
            None => {
                let s = Self::preset(forced.unwrap_or(fallback));
                s.validate()?;
                Ok(s)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize to TOML")
    }

    /// Checks the cross-field constraints serde cannot express.
    pub fn validate(&self) -> AppResult<()> {
        self.tau()?;
        if self.grid.n_p < 2 || self.grid.n_x == 0 {
            return Err(AppError::Config("grid needs n_p >= 2 and n_x >= 1".into()));
        }
        if !(self.grid.adequacy > 0.0) {
            return Err(AppError::Config("grid.adequacy must be positive".into()));
        }
        if self.betatable.n == 0 {
            return Err(AppError::Config("betatable.n must be at least 1".into()));
        }
        if !(self.betatable.c_min <= self.betatable.c_max) {
            return Err(AppError::Config("betatable needs c_min <= c_max".into()));
        }
        if self.lincheck.eps.iter().any(|e| !(*e > 0.0)) {
            return Err(AppError::Config("lincheck.eps entries must be positive".into()));
        }
        Ok(())
    }

    pub fn tau(&self) -> AppResult<TauCoefficients> {
        let t = &self.tau;
        Ok(TauCoefficients::new(t.poly.clone(), t.n, t.m, t.c)?)
    }

    pub fn velocity_grid(&self) -> AppResult<VelocityGrid> {
        Ok(match self.grid.p_max {
            Some(p) => VelocityGrid::new(p, self.grid.n_p)?,
            None => VelocityGrid::for_temperature(self.equilibrium.a0, self.grid.n_p)?,
        })
    }

    pub fn phase_grid(&self) -> AppResult<PhaseGrid> {
        Ok(PhaseGrid::new(
            self.velocity_grid()?,
            SpatialGrid::new(self.grid.length, self.grid.n_x)?,
        ))
    }

    pub fn global_equilibrium(&self, grid: &VelocityGrid) -> AppResult<GlobalEquilibrium> {
        Ok(GlobalEquilibrium::with_tolerance(
            grid,
            self.equilibrium.a0,
            self.equilibrium.c0,
            self.grid.adequacy,
        )?)
    }

    pub fn perturbation(&self) -> Perturbation {
        let p = &self.perturbation;
        Perturbation {
            amplitude: p.amplitude,
            profile: match p.profile {
                Profile::Basis => VelocityProfile::Basis(p.index),
                Profile::Shear => VelocityProfile::Shear,
                Profile::Bump => VelocityProfile::GaussianBump {
                    center: p.center,
                    width: p.width,
                },
            },
            mode: p.mode,
        }
    }

    pub fn run_config(&self) -> AppResult<RunConfig> {
        let r = &self.run;
        let mut cfg = RunConfig::new(r.dt, r.t_end, self.tau()?);
        cfg.transport = match r.transport {
            Transport::Upwind => TransportScheme::Upwind,
            Transport::SemiLagrangian => TransportScheme::SemiLagrangian,
        };
        cfg.inversion = match r.inversion {
            Inversion::Discrete => InversionMode::Discrete,
            Inversion::Continuous => InversionMode::Continuous,
        };
        cfg.snapshot_every = r.snapshot_every;
        cfg.scenario = self.scenario.name().to_string();
        Ok(cfg)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table, prefix: &str) {
    for (key, value) in over {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o, &path),
            (_, v) => {
                log::debug!("override {path}");
                base.insert(key, v);
            }
        }
    }
}
