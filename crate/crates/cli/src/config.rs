use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Result;
use lyapscope_core::shift_lab::{parse_rational, Rational, Variant};
use lyapscope_core::{MapSpec, SurfaceMap};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Errors that map to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Exponents,
    Entropy,
    Neutral,
    ShiftExample1,
    CurveGrowth,
    SweepIdentityCheck,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Exponents => "exponents",
            Self::Entropy => "entropy",
            Self::Neutral => "neutral",
            Self::ShiftExample1 => "shift-example1",
            Self::CurveGrowth => "curve-growth",
            Self::SweepIdentityCheck => "sweep-identity-check",
        }
    }
}

/// A rational like `"1/5"` or a plain float.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaValue {
    Float(f64),
    Text(String),
}

impl AlphaValue {
    pub fn rational(&self) -> Result<Rational> {
        match self {
            AlphaValue::Text(s) => parse_rational(s).map_err(|e| config_error(e.to_string())),
            AlphaValue::Float(x) => Err(config_error(format!(
                "alpha {x} must be written as a quoted fraction such as \"1/5\" for exact runs"
            ))),
        }
    }

    pub fn float(&self) -> Result<f64> {
        match self {
            AlphaValue::Float(x) => Ok(*x),
            AlphaValue::Text(s) => {
                let r = parse_rational(s).map_err(|e| config_error(e.to_string()))?;
                Ok(*r.numer() as f64 / *r.denom() as f64)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub limit: MapSpec,
    pub bump: [f64; 2],
    pub k: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub start: [f64; 2],
    /// Direction of the initial segment, radians.
    pub angle: f64,
    pub length: f64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            start: [0.3, 0.4],
            // unstable direction of the cat map
            angle: 0.553_574_358_897_045_3,
            length: 0.09,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub alpha: Vec<AlphaValue>,
    #[serde(default)]
    pub min_len: Vec<usize>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub eps_hat: Option<f64>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default)]
    pub variant: Vec<Variant>,
    /// Starting points, orbit windows, or sample count, depending on the experiment.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Block length `N` between admissible times.
    #[serde(default = "default_block")]
    pub block: usize,
}

fn default_samples() -> usize {
    8
}

fn default_block() -> usize {
    1
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            alpha: Vec::new(),
            min_len: Vec::new(),
            eps: Vec::new(),
            eps_hat: None,
            n: Vec::new(),
            gamma: None,
            k: Vec::new(),
            variant: Vec::new(),
            samples: default_samples(),
            block: default_block(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Smoothness `r` in the entropy correction `(lambda(f) + lambda(f^-1)) / (r - 1)`.
    #[serde(default = "default_r")]
    pub r_smooth: f64,
    /// Fixed `beta`; measured from neutral blocks when absent.
    #[serde(default)]
    pub beta: Option<f64>,
}

fn default_r() -> f64 {
    3.0
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            r_smooth: default_r(),
            beta: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub grid: Grid,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_error(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// Checks the fields the experiment needs; fills in the kind.
    pub fn validate(&mut self, kind: ExperimentKind) -> Result<()> {
        if let Some(declared) = self.experiment {
            if declared != kind {
                return Err(config_error(format!(
                    "config declares experiment {:?} but subcommand is {:?}",
                    declared.as_str(),
                    kind.as_str()
                )));
            }
        }
        self.experiment = Some(kind);
        let g = &self.grid;
        let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(config_error(what.to_string())) };
        need(g.samples > 0, "grid.samples must be positive")?;
        need(g.block > 0, "grid.block must be positive")?;
        need(g.eps.iter().all(|&e| e > 0.0), "grid.eps entries must be positive")?;
        match kind {
            ExperimentKind::Exponents => {
                self.surface_map()?;
                need(!g.n.is_empty(), "grid.n must list at least one orbit length")?;
            }
            ExperimentKind::Entropy => {
                self.surface_map()?;
                need(!g.n.is_empty(), "grid.n must be nonempty")?;
                need(!g.eps.is_empty(), "grid.eps must be nonempty")?;
            }
            ExperimentKind::Neutral => {
                self.surface_map()?;
                need(!g.n.is_empty(), "grid.n must be nonempty")?;
                need(!g.alpha.is_empty(), "grid.alpha must be nonempty")?;
                need(!g.min_len.is_empty(), "grid.min_len must be nonempty")?;
                for a in &g.alpha {
                    a.float()?;
                }
            }
            ExperimentKind::ShiftExample1 => {
                need(!g.k.is_empty(), "grid.k must be nonempty")?;
                need(!g.alpha.is_empty(), "grid.alpha must be nonempty")?;
                need(!g.variant.is_empty(), "grid.variant must be nonempty")?;
                for a in &g.alpha {
                    a.rational()?;
                }
            }
            ExperimentKind::CurveGrowth => {
                self.surface_map()?;
                need(!g.n.is_empty(), "grid.n must be nonempty")?;
                need(!g.eps.is_empty(), "grid.eps must be nonempty")?;
            }
            ExperimentKind::SweepIdentityCheck => {
                let fam = self
                    .family
                    .as_ref()
                    .ok_or_else(|| config_error("sweep-identity-check needs a [family] table"))?;
                need(!fam.k.is_empty(), "family.k must be nonempty")?;
                need(fam.k.iter().all(|&k| k > 0), "family.k entries start at 1")?;
                need(!g.n.is_empty(), "grid.n must be nonempty")?;
                need(!g.eps.is_empty(), "grid.eps must be nonempty")?;
                need(!g.alpha.is_empty(), "grid.alpha must be nonempty")?;
                need(!g.min_len.is_empty(), "grid.min_len must be nonempty")?;
                if let Some(b) = self.sweep.as_ref().and_then(|s| s.beta) {
                    need((0.0..=1.0).contains(&b), "sweep.beta must lie in [0, 1]")?;
                }
                self.family_limit()?;
            }
        }
        if let Some(gamma) = g.gamma {
            need(gamma > 0.0 && gamma < 1.0, "grid.gamma must lie in (0, 1)")?;
        }
        Ok(())
    }

    pub fn surface_map(&self) -> Result<SurfaceMap> {
        let spec = self
            .map
            .clone()
            .ok_or_else(|| config_error("this experiment needs a [map] table"))?;
        SurfaceMap::from_spec(spec).map_err(|e| config_error(format!("map: {e}")))
    }

    pub fn family_limit(&self) -> Result<lyapscope_core::MapFamily> {
        let fam = self
            .family
            .as_ref()
            .ok_or_else(|| config_error("missing [family] table"))?;
        let limit = SurfaceMap::from_spec(fam.limit.clone()).map_err(|e| config_error(format!("family.limit: {e}")))?;
        lyapscope_core::MapFamily::new(limit, fam.bump).map_err(|e| config_error(format!("family: {e}")))
    }

    /// Hash of the canonical JSON form; the output directory is not part of it.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn kind(&self) -> ExperimentKind {
        self.experiment.expect("validated config has a kind")
    }
}

pub fn resolve_output_dir(cfg: &ExperimentConfig, cli_out: Option<&Path>) -> PathBuf {
    cli_out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-{}", cfg.kind().as_str(), cfg.hash())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHIFT: &str = r#"
rng_seed = 3
[grid]
variant = ["p", "q"]
k = [10, 50]
alpha = ["1/5", "1/20"]
min_len = [5]
"#;

    #[test]
    fn shift_config_parses() {
        let mut c = ExperimentConfig::parse(SHIFT, Path::new("t.toml")).unwrap();
        c.validate(ExperimentKind::ShiftExample1).unwrap();
        assert_eq!(c.grid.alpha[0].rational().unwrap(), Rational::new(1, 5));
        assert_eq!(c.grid.samples, 8);
    }

    #[test]
    fn hash_ignores_output_dir_and_formatting() {
        let a = ExperimentConfig::parse(SHIFT, Path::new("a")).unwrap();
        let mut b = ExperimentConfig::parse(&SHIFT.replace("rng_seed = 3", "rng_seed=3\noutput_dir = \"x\""), Path::new("b")).unwrap();
        assert_eq!(a.hash(), b.hash());
        b.rng_seed = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn bad_configs_are_config_errors() {
        let unknown = ExperimentConfig::parse("bogus = 1", Path::new("x"));
        assert!(unknown.unwrap_err().downcast_ref::<ConfigError>().is_some());
        let mut c = ExperimentConfig::parse("[grid]\nn = [10]", Path::new("x")).unwrap();
        let e = c.validate(ExperimentKind::Exponents).unwrap_err();
        assert!(e.downcast_ref::<ConfigError>().is_some());
        let mut c = ExperimentConfig::parse(SHIFT, Path::new("x")).unwrap();
        c.experiment = Some(ExperimentKind::Entropy);
        assert!(c.validate(ExperimentKind::ShiftExample1).is_err());
    }

    #[test]
    fn float_alpha_is_rejected_for_exact_runs() {
        let mut c = ExperimentConfig::parse(&SHIFT.replace("\"1/5\"", "0.2"), Path::new("x")).unwrap();
        assert!(c.validate(ExperimentKind::ShiftExample1).is_err());
    }
}
