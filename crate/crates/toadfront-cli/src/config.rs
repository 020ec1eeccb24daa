//! Experiment configuration (TOML).
//!
//! Every section is optional at parse time; a subcommand that needs a
//! missing section fails with exit code 1.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use toadfront::dispersion::SpectralData;
use toadfront::model::{Profile, ReactionLaw, SpaceTimeGrid, ThetaDomain, TraitProfile};
use toadfront::solver::{BoundaryShift, FrontSpectrum, InitSpec, ModelKind, ModelSpec, OmegaSpec};

use crate::error::CliError;
use crate::output::sha256_hex;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub profile: Option<ProfileConfig>,
    pub model: Option<ModelConfig>,
    pub grid: Option<SpaceTimeGrid>,
    pub init: Option<InitSpec>,
    pub snapshots: Option<SnapshotConfig>,
    #[serde(default)]
    pub analysis: Vec<Analysis>,
    pub dispersion: Option<DispersionConfig>,
    pub probe: Option<ProbeConfig>,
    pub asymptotics: Option<AsymptoticsConfig>,
    pub criticality: Option<CriticalityConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    /// `[θ_min, θ_max]`.
    pub theta: [f64; 2],
    pub n_theta: usize,
    /// Diffusivity descriptor, e.g. `"theta"` or `"const 1"`.
    pub d: String,
    /// Drift descriptor, default `"const 0"`.
    pub a: Option<String>,
}

impl ProfileConfig {
    pub fn build(&self) -> Result<TraitProfile, CliError> {
        let domain = ThetaDomain::new(self.theta[0], self.theta[1], self.n_theta)?;
        let d = Profile::parse(&self.d)?;
        let a = Profile::parse(self.a.as_deref().unwrap_or("const 0"))?;
        Ok(TraitProfile::from_profiles(domain, &d, &a)?)
    }
}

/// The model kinds, with the spectral quantities filled in from the profile.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    NonlocalToads {
        #[serde(default = "one")]
        r_rate: f64,
    },
    LocalToads {
        reaction: ReactionLaw,
    },
    LocalGeneral {
        reaction: ReactionLaw,
    },
    LinearizedDirichlet {
        #[serde(default)]
        r_shift: f64,
        #[serde(default = "five")]
        t_big: f64,
    },
    PEquation {
        #[serde(default = "zero_omega")]
        omega: OmegaSpec,
        #[serde(default)]
        tau0: f64,
    },
    WaveRelaxation {
        c: Option<f64>,
        reaction: ReactionLaw,
    },
}

fn one() -> f64 {
    1.0
}

fn five() -> f64 {
    5.0
}

fn zero_omega() -> OmegaSpec {
    OmegaSpec::Zero
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    /// Spacing of the recorded trace (and of the in-memory snapshots used by analyses).
    pub every: f64,
    /// Spacing of the binary dumps; defaults to `every`.
    pub dump_every: Option<f64>,
    /// First recorded time; defaults to the start of the run.
    pub start: Option<f64>,
    /// Level and tracked quantity of `trace.csv`.
    #[serde(default = "half")]
    pub level: f64,
    #[serde(default)]
    pub quantity: Quantity,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    #[default]
    Auto,
    Rho,
    MaxTheta,
}

/// Post-processing tasks of `front`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analysis {
    Fit {
        #[serde(default = "free")]
        mode: String,
        c_star: Option<f64>,
        window: [f64; 2],
        /// Accepted band for r̂.
        expect: Option<[f64; 2]>,
    },
    Tail {
        /// Time of the snapshot dump to use; default the last.
        t: Option<f64>,
        /// Accepted band for λ̂/λ*.
        expect: Option<[f64; 2]>,
    },
    Harnack {
        p: f64,
        radius: f64,
        t_range: [f64; 2],
        expect: Option<[f64; 2]>,
    },
}

fn free() -> String {
    "free".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n_lambda: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Coefficient of `u_t = a(x) u_xx`: a profile descriptor in `x`
    /// (`const c`) or `"2+sin"`.
    #[serde(default = "unit_coefficient")]
    pub coefficient: String,
    pub harnack: Option<HarnackProbe>,
    pub varadhan: Option<VaradhanProbe>,
    pub nash: Option<NashProbe>,
    pub kernel_power: Option<KernelPowerProbe>,
}

fn unit_coefficient() -> String {
    "const 1".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackProbe {
    pub half_width: f64,
    pub dx: f64,
    /// Initial data `e^{−x²/(4 s0)}`.
    pub s0: f64,
    pub times: Vec<f64>,
    pub radius: f64,
    pub p: f64,
    pub window: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaradhanProbe {
    pub half_width: f64,
    pub dx: f64,
    pub sample: [f64; 2],
    pub times: Vec<f64>,
    pub pair_range: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NashProbe {
    pub cases: Vec<[usize; 2]>,
    pub trials: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelPowerProbe {
    pub half_width: f64,
    pub dx: f64,
    pub t0: f64,
    pub radius: f64,
    pub s: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsConfig {
    pub chi_bar: Option<f64>,
    pub omega_bar: Option<f64>,
    #[serde(default = "sigma")]
    pub sigma: f64,
    pub taus: Vec<f64>,
    #[serde(default = "dy")]
    pub dy: f64,
    /// Also run the strip problem against S.
    #[serde(default)]
    pub proximity: bool,
}

fn sigma() -> f64 {
    toadfront::asymptotics::SIGMA_DEFAULT
}

fn dy() -> f64 {
    0.01
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalityConfig {
    /// Shifts in units of `1/λ*`, default `[0, 1.5, 3]`.
    pub r_over_lambda: Option<Vec<f64>>,
    pub t_big: Vec<f64>,
    pub t_end: Option<f64>,
    pub length: Option<f64>,
    pub dx: Option<f64>,
    pub dt: Option<f64>,
}

/// A parsed config with its hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
    pub path: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config: ExperimentConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(LoadedConfig { config, hash: sha256_hex(text.as_bytes()), path: path.to_path_buf() })
}

impl ExperimentConfig {
    pub fn require<'a, T>(&self, section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        section.as_ref().ok_or_else(|| CliError::Config(format!("config `{}` has no [{name}] section", self.name)))
    }

    pub fn trait_profile(&self) -> Result<TraitProfile, CliError> {
        self.require(&self.profile, "profile")?.build()
    }

    /// The full model together with the spectral data of its profile.
    pub fn model_spec(&self) -> Result<(ModelSpec, SpectralData), CliError> {
        let profile = self.trait_profile()?;
        let spectral = SpectralData::compute(&profile)?;
        let grid = *self.require(&self.grid, "grid")?;
        let init = self.init.clone().unwrap_or(InitSpec::Zero);
        let mut t0 = 0.0;
        let kind = match self.require(&self.model, "model")?.clone() {
            ModelConfig::NonlocalToads { r_rate } => ModelKind::NonlocalToads { r_rate },
            ModelConfig::LocalToads { reaction } => ModelKind::LocalToads { reaction },
            ModelConfig::LocalGeneral { reaction } => ModelKind::LocalGeneral { reaction },
            ModelConfig::LinearizedDirichlet { r_shift, t_big } => ModelKind::LinearizedDirichlet {
                c_star: spectral.c_star,
                shift: BoundaryShift::Log { r_shift, t_big },
            },
            ModelConfig::PEquation { omega, tau0 } => {
                t0 = tau0;
                ModelKind::PEquation { omega, spectrum: FrontSpectrum::from(&spectral) }
            }
            ModelConfig::WaveRelaxation { c, reaction } => {
                ModelKind::WaveRelaxation { c: c.unwrap_or(spectral.c_star), reaction }
            }
        };
        let mut model = ModelSpec::new(kind, profile, grid, init);
        model.t0 = t0;
        model.validate()?;
        Ok((model, spectral))
    }
}

/// Parses a coefficient in `x`: any profile descriptor evaluated at `x`
/// (`theta` meaning `x`) or `"2+sin"`.
pub fn coefficient(spec: &str) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>, CliError> {
    if spec.trim() == "2+sin" {
        return Ok(Box::new(|x: f64| 2.0 + x.sin()));
    }
    match Profile::parse(spec)? {
        Profile::Const(c) => Ok(Box::new(move |_| c)),
        Profile::Theta => Ok(Box::new(|x| x)),
        Profile::Affine(a, b) => Ok(Box::new(move |x| a + b * x)),
        Profile::Table(_) => Err(CliError::Config("tables are not valid probe coefficients".into())),
    }
}
