use std::path::{Path, PathBuf};

use maxmin_core::dist::ConditionName;
use maxmin_core::{Marginal, MarginalSpec, Mechanism, MechanismSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Default grid size when neither the config nor `--grid` sets one.
pub const DEFAULT_GRID: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative duality-gap tolerance.
    #[serde(default = "default_gap")]
    pub gap: f64,
    /// Tolerance on virtual-value identities.
    #[serde(default = "default_virtual")]
    pub virtual_value: f64,
}

fn default_gap() -> f64 {
    maxmin_core::duality::GAP_TOLERANCE
}

fn default_virtual() -> f64 {
    maxmin_core::adversary::VIRTUAL_TOLERANCE
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { gap: default_gap(), virtual_value: default_virtual() }
    }
}

/// A run configuration as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub distribution: MarginalSpec,
    #[serde(default)]
    pub mechanism: Option<MechanismSpec>,
    #[serde(default)]
    pub n_bidders: Option<usize>,
    #[serde(default)]
    pub grid_size: Option<usize>,
    /// Condition that decides the exit status of `check`.
    #[serde(default)]
    pub condition: Option<ConditionName>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub n: Option<usize>,
    pub out: Option<PathBuf>,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Run {
    pub marginal: Marginal,
    pub mechanism: Option<Mechanism>,
    pub mechanism_spec: Option<MechanismSpec>,
    pub n: usize,
    pub grid: usize,
    pub condition: ConditionName,
    pub tolerances: Tolerances,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| {
            CliError::Input(format!("config: {e}"))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(self, over: &Overrides) -> Result<Run, CliError> {
        let marginal = Marginal::from_spec(&self.distribution)
            .map_err(|e| CliError::Input(format!("distribution: {e}")))?;
        let n = over
            .n
            .or(self.n_bidders)
            .or_else(|| self.mechanism.as_ref().and_then(|m| m.n()))
            .unwrap_or(2);
        if n < 2 {
            return Err(CliError::Input(format!("n_bidders must be at least 2, got {n}")));
        }
        if let Some(spec_n) = self.mechanism.as_ref().and_then(|m| m.n()) {
            if spec_n != n {
                return Err(CliError::Input(format!("mechanism.n = {spec_n} but the run uses {n} bidders")));
            }
        }
        let grid = over.grid.or(self.grid_size).unwrap_or(DEFAULT_GRID);
        if grid < 3 {
            return Err(CliError::Input(format!("grid_size must be at least 3, got {grid}")));
        }
        let t = self.tolerances;
        if !(t.gap > 0.0 && t.virtual_value > 0.0) {
            return Err(CliError::Input("tolerances must be positive".into()));
        }
        let mechanism = self
            .mechanism
            .as_ref()
            .map(|spec| spec.build(n))
            .transpose()
            .map_err(|e| CliError::Input(format!("mechanism: {e}")))?;
        let condition = self.condition.unwrap_or(if n == 2 {
            ConditionName::Robust2Bidder
        } else {
            ConditionName::GeneralI
        });
        if condition == ConditionName::Robust2Bidder && n != 2 {
            return Err(CliError::Input("condition robust_2bidder applies to 2 bidders only".into()));
        }
        Ok(Run {
            marginal,
            mechanism,
            mechanism_spec: self.mechanism,
            n,
            grid,
            condition,
            tolerances: t,
            out: over.out.clone().or(self.output_dir),
        })
    }
}

impl Run {
    pub fn require_mechanism(&self) -> Result<&Mechanism, CliError> {
        self.mechanism.as_ref().ok_or_else(|| CliError::Input("this command needs a \"mechanism\" entry".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::parse(r#"{"distribution":{"family":"uniform"},"grid":4}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn flags_override_config() {
        let cfg = RunConfig::parse(r#"{"distribution":{"family":"uniform"},"n_bidders":3,"grid_size":9}"#).unwrap();
        let run = cfg.validate(&Overrides { grid: Some(5), n: Some(2), out: None }).unwrap();
        assert_eq!((run.n, run.grid), (2, 5));
        assert_eq!(run.condition, ConditionName::Robust2Bidder);
    }

    #[test]
    fn mechanism_bidder_count_must_agree() {
        let cfg = RunConfig::parse(
            r#"{"distribution":{"family":"uniform"},"n_bidders":3,"mechanism":{"kind":"spa_plain","n":2}}"#,
        )
        .unwrap();
        assert!(cfg.validate(&Overrides::default()).is_err());
    }
}
