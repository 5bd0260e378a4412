//! Campaign configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::InferenceConfig;
use crate::lookahead::LookaheadConfig;
use crate::policies::{Criterion, PolicyKind};

use super::catalog::EnvOverrides;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub id: String,
    #[serde(default)]
    pub overrides: EnvOverrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Label used in outputs; defaults to the kind's name.
    #[serde(default)]
    pub id: Option<String>,
    /// Objective of the global oracle.
    #[serde(default)]
    pub criterion: Criterion,
    /// Overrides the campaign look-ahead settings for this policy.
    #[serde(default)]
    pub lookahead: Option<LookaheadConfig>,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            id: None,
            criterion: Criterion::Final,
            lookahead: None,
        }
    }

    pub fn label(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.kind.name().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitFlags {
    pub per_step_csv: bool,
    pub summary_json: bool,
    pub runs_json: bool,
    pub condition_reports: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            per_step_csv: true,
            summary_json: true,
            runs_json: false,
            condition_reports: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub environment: EnvironmentConfig,
    pub policies: Vec<PolicySpec>,
    pub n: usize,
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub lookahead: LookaheadConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub emit: EmitFlags,
    /// Worker threads; all available cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl CampaignConfig {
    pub fn new(id: &str, policies: &[PolicyKind], n: usize, seeds: usize, master_seed: u64) -> Self {
        Self {
            environment: EnvironmentConfig {
                id: id.to_string(),
                overrides: EnvOverrides::default(),
            },
            policies: policies.iter().map(|&k| PolicySpec::new(k)).collect(),
            n,
            seeds,
            master_seed,
            lookahead: LookaheadConfig::default(),
            inference: InferenceConfig::default(),
            output_dir: None,
            emit: EmitFlags::default(),
            workers: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.seeds == 0 {
            return Err(Error::InvalidConfig("n and seeds must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::InvalidConfig("no policies configured".into()));
        }
        let mut labels: Vec<String> = self.policies.iter().map(|p| p.label()).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.policies.len() {
            return Err(Error::InvalidConfig("policy ids must be unique".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        self.lookahead.validate()?;
        for p in &self.policies {
            if let Some(l) = &p.lookahead {
                l.validate()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_document() {
        let cfg = CampaignConfig::from_toml(
            r#"
            n = 5
            seeds = 3
            master_seed = 9
            [environment]
            id = "prop1"
            [[policies]]
            kind = "mps"
            [[policies]]
            kind = "global_oracle"
            criterion = "cumulative"
            id = "global_cum"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.policies[1].label(), "global_cum");
        assert_eq!(cfg.policies[1].criterion, Criterion::Cumulative);
        assert_eq!(cfg.lookahead.mc_samples, 50);
        assert!(cfg.emit.per_step_csv);
        let back = CampaignConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(CampaignConfig::from_toml("n = 0\nseeds = 1\npolicies = []\n[environment]\nid = \"prop1\"").is_err());
        let dup = r#"
            n = 1
            seeds = 1
            [environment]
            id = "prop1"
            [[policies]]
            kind = "rand"
            [[policies]]
            kind = "rand"
        "#;
        assert!(CampaignConfig::from_toml(dup).is_err());
        assert!(CampaignConfig::from_toml("n = 1\nseeds = 1\nbogus = 2\npolicies = []\n[environment]\nid = \"x\"").is_err());
    }
}
