use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::catchment::{Mode, ModeSpeeds, DEFAULT_CELL_DEG, DEFAULT_MAX_SNAP_M};
use crate::dataset::{CityPaths, QualityConfig};
use crate::equity::Weighting;
use crate::indicators::EmissionFactors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Fixed,
    Network,
    Polygons,
}

impl ProviderKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProviderKind::Fixed => "fixed",
            ProviderKind::Network => "network",
            ProviderKind::Polygons => "polygons",
        }
    }
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" => Ok(ProviderKind::Fixed),
            "network" => Ok(ProviderKind::Network),
            "polygons" => Ok(ProviderKind::Polygons),
            other => Err(format!(
                "unknown provider '{other}' (expected fixed, network or polygons)"
            )),
        }
    }
}

/// Input tables. `dir` supplies `pois.csv`, `cbgs.csv` and `flows.csv`;
/// individual paths override it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pois: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cbgs: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flows: Option<PathBuf>,
}

impl InputConfig {
    pub fn paths(&self) -> Result<CityPaths, RunError> {
        let from_dir = self.dir.as_ref().map(CityPaths::in_dir);
        let pick = |own: &Option<PathBuf>, dflt: Option<&PathBuf>, name: &str| {
            own.clone()
                .or_else(|| dflt.cloned())
                .ok_or_else(|| RunError::Config(format!("input.{name} (or input.dir) is required")))
        };
        Ok(CityPaths {
            pois: pick(&self.pois, from_dir.as_ref().map(|p| &p.pois), "pois")?,
            cbgs: pick(&self.cbgs, from_dir.as_ref().map(|p| &p.cbgs), "cbgs")?,
            flows: pick(&self.flows, from_dir.as_ref().map(|p| &p.flows), "flows")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// POI grid cell in degrees.
    pub cell_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    pub max_snap_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub isolines: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Fixed,
            cell_deg: DEFAULT_CELL_DEG,
            nodes: None,
            edges: None,
            max_snap_m: DEFAULT_MAX_SNAP_M,
            isolines: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub city_id: String,
    pub input: InputConfig,
    pub provider: ProviderConfig,
    pub modes: Vec<Mode>,
    pub budget_min: f64,
    pub min_visits: u64,
    pub speeds: ModeSpeeds,
    pub emission_factors: EmissionFactors,
    pub weighting: Weighting,
    pub out: PathBuf,
    /// Worker threads; `None` uses every available core.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Recorded with the run; the run itself draws no random numbers.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            city_id: "city".into(),
            input: InputConfig::default(),
            provider: ProviderConfig::default(),
            modes: Mode::ALL.to_vec(),
            budget_min: 15.0,
            min_visits: QualityConfig::default().min_visits,
            speeds: ModeSpeeds::default(),
            emission_factors: EmissionFactors::default(),
            weighting: Weighting::default(),
            out: PathBuf::from("out"),
            workers: None,
            seed: 0,
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`. Relative paths are
    /// taken relative to the config file.
    pub fn from_path(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.input.dir,
            &mut cfg.input.pois,
            &mut cfg.input.cbgs,
            &mut cfg.input.flows,
            &mut cfg.provider.nodes,
            &mut cfg.provider.edges,
            &mut cfg.provider.isolines,
        ] {
            rebase(base, p);
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.city_id.trim().is_empty() {
            return bad("city_id must not be empty".into());
        }
        self.input.paths()?;
        if self.modes.is_empty() {
            return bad("modes must list at least one mode".into());
        }
        let mut seen = self.modes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.modes.len() {
            return bad("modes must not repeat".into());
        }
        if !(self.budget_min.is_finite() && self.budget_min > 0.0) {
            return bad(format!("budget_min must be positive, got {}", self.budget_min));
        }
        self.speeds.validate().map_err(|e| RunError::Config(e.to_string()))?;
        self.emission_factors
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        if !(self.provider.cell_deg.is_finite() && self.provider.cell_deg > 0.0) {
            return bad("provider.cell_deg must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        match self.provider.kind {
            ProviderKind::Fixed => {}
            ProviderKind::Network => {
                if self.provider.nodes.is_none() || self.provider.edges.is_none() {
                    return bad("network provider needs provider.nodes and provider.edges".into());
                }
                if !(self.provider.max_snap_m.is_finite() && self.provider.max_snap_m >= 0.0) {
                    return bad("provider.max_snap_m must be nonnegative".into());
                }
            }
            ProviderKind::Polygons => {
                if self.provider.isolines.is_none() {
                    return bad("polygons provider needs provider.isolines".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_keeps_factors() {
        let cfg = RunConfig {
            input: InputConfig {
                dir: Some("data".into()),
                ..InputConfig::default()
            },
            ..RunConfig::default()
        };
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let f = back.emission_factors;
        assert_eq!((f.car, f.transit, f.walk, f.cycle), (197.0, 105.0, 26.0, 21.0));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "modes = [\"walk\"]\nout = \"o\"\n[input]\ndir = \"d\"\n").unwrap();
        let cfg = RunConfig::from_path(&path).unwrap();
        assert_eq!(cfg.input.paths().unwrap().flows, dir.path().join("d").join("flows.csv"));
        assert_eq!(cfg.out, dir.path().join("o"));
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_rejects_incomplete_configs() {
        let base = RunConfig {
            input: InputConfig {
                dir: Some("d".into()),
                ..InputConfig::default()
            },
            ..RunConfig::default()
        };
        base.validate().unwrap();
        assert!(RunConfig::default().validate().is_err());
        let mut c = base.clone();
        c.budget_min = 0.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.provider.kind = ProviderKind::Network;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.modes = vec![Mode::Car, Mode::Car];
        assert!(c.validate().is_err());
        let mut c = base;
        c.emission_factors.car = 0.0;
        assert!(c.validate().is_err());
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}
