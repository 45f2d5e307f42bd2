//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::{Exposure, CODATA_2018};
use crate::csl::{MaterialTable, TargetMaterial};
use crate::error::{Error, Result};
use crate::limits::Statistic;
use crate::model::{DetectorResponse, Efficiency, ResolutionModel, SpectralComponent, SpectralModel};
use crate::pep::{PepRunConfig, PepTransition, DEFAULT_CAPTURE_CASCADE_FACTOR};
use crate::projection::{BudgetFactor, ImprovementBudget, Ratio};
use crate::spectrum::{EnergyGrid, SpectrumTag};
use crate::util::content_hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKind {
    Pep,
    #[default]
    Csl,
    Project,
    Simulate,
}

fn default_cl() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub kind: AnalysisKind,
    #[serde(default)]
    pub statistic: Statistic,
    #[serde(default = "default_cl")]
    pub cl: f64,
    #[serde(default)]
    pub seed: u64,
    /// Size of an optional background-only ensemble for median bounds.
    #[serde(default)]
    pub pseudo_experiments: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            kind: AnalysisKind::default(),
            statistic: Statistic::default(),
            cl: default_cl(),
            seed: 0,
            pseudo_experiments: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub low_kev: f64,
    pub high_kev: f64,
    pub bins: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<EnergyGrid> {
        EnergyGrid::uniform(self.low_kev, self.high_kev, self.bins)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseConfig {
    pub fwhm_ref_kev: f64,
    #[serde(default)]
    pub resolution_model: ResolutionModel,
    #[serde(default)]
    pub efficiency: Efficiency,
}

impl ResponseConfig {
    pub fn build(&self) -> Result<DetectorResponse> {
        DetectorResponse::new(self.fwhm_ref_kev)?
            .with_resolution_model(self.resolution_model)
            .with_efficiency(self.efficiency.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentConfig {
    #[serde(flatten)]
    pub component: SpectralComponent,
    /// Parameters left free in fits: "amplitude", "centroid", "c0", "c1", ...
    #[serde(default)]
    pub vary: Vec<String>,
    /// Marks this component's amplitude as the signal parameter.
    #[serde(default)]
    pub signal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumMeta {
    #[serde(default = "simulated")]
    pub tag: SpectrumTag,
    #[serde(default)]
    pub acquisition_days: f64,
    #[serde(default)]
    pub exposure_mass_kg: f64,
    #[serde(default)]
    pub exposure_live_days: f64,
}

fn simulated() -> SpectrumTag {
    SpectrumTag::Simulated
}

impl Default for SpectrumMeta {
    fn default() -> Self {
        Self {
            tag: SpectrumTag::Simulated,
            acquisition_days: 0.0,
            exposure_mass_kg: 0.0,
            exposure_live_days: 0.0,
        }
    }
}

impl SpectrumMeta {
    pub fn exposure(&self) -> Result<Exposure> {
        Exposure::new(self.exposure_mass_kg, self.exposure_live_days)
    }
}

fn default_target() -> String {
    "Ge".into()
}

fn default_a() -> f64 {
    CODATA_2018.correlation_length_default
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CslConfig {
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default = "default_a")]
    pub correlation_length_m: f64,
    /// Overrides the quasi-free electron count from the material table.
    pub quasi_free_electrons: Option<f64>,
    /// Alternative material table file.
    pub materials: Option<PathBuf>,
}

impl Default for CslConfig {
    fn default() -> Self {
        Self {
            target: default_target(),
            correlation_length_m: default_a(),
            quasi_free_electrons: None,
            materials: None,
        }
    }
}

impl CslConfig {
    pub fn target(&self, base_dir: &Path) -> Result<TargetMaterial> {
        let table = match &self.materials {
            Some(p) => MaterialTable::parse(&std::fs::read_to_string(base_dir.join(p))?)?,
            None => MaterialTable::builtin()?,
        };
        let mut t = table.get(&self.target)?;
        if let Some(q) = self.quasi_free_electrons {
            t = TargetMaterial::new(t.element, q, t.atoms_per_kg)?;
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PepConfig {
    #[serde(default = "eight")]
    pub normal_energy_kev: f64,
    #[serde(default = "shift")]
    pub shift_kev: f64,
    pub current_a: f64,
    pub duration_s: f64,
    #[serde(default = "capture")]
    pub capture_cascade_factor: f64,
    pub geometric_acceptance: f64,
    pub detection_efficiency: f64,
    #[serde(default = "one")]
    pub interactions_per_electron: f64,
    #[serde(default = "window")]
    pub window_fwhm: f64,
    /// Current-on and current-off acquisition durations, days.
    pub on_days: f64,
    pub off_days: f64,
    /// Forbidden-line strength injected into simulated current-on spectra.
    #[serde(default)]
    pub inject_beta2_over_2: f64,
}

fn eight() -> f64 {
    8.0
}
fn shift() -> f64 {
    0.3
}
fn capture() -> f64 {
    DEFAULT_CAPTURE_CASCADE_FACTOR
}
fn one() -> f64 {
    1.0
}
fn window() -> f64 {
    1.5
}

impl PepConfig {
    pub fn transition(&self) -> Result<PepTransition> {
        PepTransition::new(self.normal_energy_kev, self.shift_kev)
    }

    pub fn run(&self) -> Result<PepRunConfig> {
        let c = PepRunConfig {
            current: self.current_a,
            duration: self.duration_s,
            capture_cascade_factor: self.capture_cascade_factor,
            geometric_acceptance: self.geometric_acceptance,
            detection_efficiency: self.detection_efficiency,
            interactions_per_electron: self.interactions_per_electron,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorConfig {
    Range { name: String, low: Ratio, high: Ratio },
    Scalar { name: String, factor: Ratio },
}

impl FactorConfig {
    fn build(&self) -> Result<BudgetFactor> {
        match self {
            FactorConfig::Scalar { name, factor } => Ok(BudgetFactor::scalar(name, *factor)),
            FactorConfig::Range { name, low, high } => BudgetFactor::range(name, *low, *high),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub linear: Vec<FactorConfig>,
    pub background: Vec<FactorConfig>,
}

impl BudgetConfig {
    pub fn build(&self) -> Result<ImprovementBudget> {
        Ok(ImprovementBudget {
            linear: self.linear.iter().map(FactorConfig::build).collect::<Result<_>>()?,
            background: self.background.iter().map(FactorConfig::build).collect::<Result<_>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub spectrum: Option<PathBuf>,
    pub on: Option<PathBuf>,
    pub off: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub analysis: AnalysisConfig,
    pub grid: Option<GridConfig>,
    pub response: Option<ResponseConfig>,
    #[serde(default)]
    pub spectrum: SpectrumMeta,
    #[serde(default)]
    pub components: Vec<ComponentConfig>,
    #[serde(default)]
    pub csl: CslConfig,
    pub pep: Option<PepConfig>,
    pub budget: Option<BudgetConfig>,
    #[serde(default)]
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// Content hash of the resolved configuration.
    pub fn hash(&self) -> String {
        content_hash(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.analysis.cl > 0.0 && self.analysis.cl < 1.0) {
            return Err(Error::Config(format!("cl must lie in (0, 1), got {}", self.analysis.cl)));
        }
        if self.components.iter().filter(|c| c.signal).count() > 1 {
            return Err(Error::Config("at most one component may be marked as signal".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<EnergyGrid> {
        self.grid
            .as_ref()
            .ok_or_else(|| Error::Config("missing [grid] section".into()))?
            .build()
    }

    pub fn response(&self) -> Result<DetectorResponse> {
        self.response
            .as_ref()
            .ok_or_else(|| Error::Config("missing [response] section".into()))?
            .build()
    }

    pub fn model(&self) -> Result<SpectralModel> {
        let mut m = SpectralModel::new(self.response()?);
        for c in &self.components {
            m.components.push(c.component.clone());
        }
        Ok(m)
    }

    pub fn budget(&self) -> Result<ImprovementBudget> {
        match &self.budget {
            Some(b) => b.build(),
            None => Ok(ImprovementBudget::vip2_over_vip()),
        }
    }

    pub fn pep(&self) -> Result<&PepConfig> {
        self.pep
            .as_ref()
            .ok_or_else(|| Error::Config("missing [pep] section".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
[analysis]
kind = "csl"
cl = 0.9
seed = 7

[grid]
low_kev = 4.5
high_kev = 48.5
bins = 44

[response]
fwhm_ref_kev = 0.17

[spectrum]
exposure_mass_kg = 80.0
exposure_live_days = 1.0

[[components]]
kind = "one_over_e"
alpha = 0.0
signal = true

[[components]]
kind = "polynomial"
coefficients = [5.0]
vary = ["c0"]

[budget]
linear = [{ name = "acceptance", factor = 12 }, { name = "length", factor = "1/3" }]
background = [{ name = "veto", low = 5, high = 10 }]
"#;

    #[test]
    fn parses_and_hashes() {
        let c = RunConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(c.analysis.cl, 0.9);
        assert_eq!(c.components.len(), 2);
        assert!(c.components[0].signal);
        assert_eq!(c.model().unwrap().components.len(), 2);
        let b = c.budget().unwrap();
        assert_eq!(crate::projection::total_linear_factor(&b).unwrap(), 4.0);
        let again = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
        let mut other = c.clone();
        other.analysis.seed = 8;
        assert_ne!(other.hash(), c.hash());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("[analysis]\ncl = 1.5\n").is_err());
        assert!(RunConfig::from_toml("[analysis]\nbogus = 1\n").is_err());
        let two_signals = "[[components]]\nkind = \"one_over_e\"\nalpha = 1.0\nsignal = true\n\
                           [[components]]\nkind = \"one_over_e\"\nalpha = 1.0\nsignal = true\n";
        assert!(RunConfig::from_toml(two_signals).is_err());
    }
}
