//! Grid configuration: ablation and attack identifiers, per-ablation
//! parameter resolution, and the top-level grid document.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cefl::CeflConfig;
use crate::domain::{Axis, FlagLevel, ScenarioId, SCENARIOS};
use crate::gate::GateConfig;
use crate::reducer::{Comparator, ConstraintSpec, ReducerConfig};
use crate::scorer::AttackKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AblationId {
    B0,
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    B8,
    B9,
    B10,
    B11,
    B12,
}

pub const ABLATIONS: [AblationId; 13] = [
    AblationId::B0,
    AblationId::B1,
    AblationId::B2,
    AblationId::B3,
    AblationId::B4,
    AblationId::B5,
    AblationId::B6,
    AblationId::B7,
    AblationId::B8,
    AblationId::B9,
    AblationId::B10,
    AblationId::B11,
    AblationId::B12,
];

impl AblationId {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationId::B0 => "B0",
            AblationId::B1 => "B1",
            AblationId::B2 => "B2",
            AblationId::B3 => "B3",
            AblationId::B4 => "B4",
            AblationId::B5 => "B5",
            AblationId::B6 => "B6",
            AblationId::B7 => "B7",
            AblationId::B8 => "B8",
            AblationId::B9 => "B9",
            AblationId::B10 => "B10",
            AblationId::B11 => "B11",
            AblationId::B12 => "B12",
        }
    }

    pub fn parse(s: &str) -> Result<AblationId, ConfigError> {
        ABLATIONS
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| ConfigError::UnknownAblation(s.to_string()))
    }

    pub fn label(self) -> &'static str {
        match self {
            AblationId::B0 => "baseline",
            AblationId::B1 => "no variance clamp",
            AblationId::B2 => "no diversity",
            AblationId::B3 => "no exploration",
            AblationId::B4 => "entropy exposed",
            AblationId::B5 => "gate disabled",
            AblationId::B6 => "breaker disabled",
            AblationId::B7 => "constraint exposure",
            AblationId::B8 => "empty candidate pool",
            AblationId::B9 => "strict risk constraint",
            AblationId::B10 => "extra disclosure",
            AblationId::B11 => "aggressive breaker",
            AblationId::B12 => "compound stress",
        }
    }
}

pub const ATTACK_CONDITIONS: [AttackKind; 6] = [
    AttackKind::None,
    AttackKind::A1,
    AttackKind::A2,
    AttackKind::A3,
    AttackKind::A4,
    AttackKind::A5,
];

pub fn attack_as_str(kind: AttackKind) -> &'static str {
    match kind {
        AttackKind::None => "NONE",
        AttackKind::A1 => "A1",
        AttackKind::A2 => "A2",
        AttackKind::A3 => "A3",
        AttackKind::A4 => "A4",
        AttackKind::A5 => "A5",
    }
}

pub fn parse_attack(s: &str) -> Result<AttackKind, ConfigError> {
    ATTACK_CONDITIONS
        .iter()
        .copied()
        .find(|a| attack_as_str(*a) == s)
        .ok_or_else(|| ConfigError::UnknownAttack(s.to_string()))
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown ablation id {0:?}")]
    UnknownAblation(String),
    #[error("unknown attack id {0:?}")]
    UnknownAttack(String),
    #[error("unknown scenario id {0:?}")]
    UnknownScenario(String),
    #[error("config file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Fully resolved per-ablation parameters for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub cefl: CeflConfig,
    pub reducer: ReducerConfig,
    pub gate: GateConfig,
    pub breaker_threshold: usize,
    pub breaker_window: usize,
    pub noise_scale: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub skew: usize,
    pub entropy_exposed: bool,
    pub thresholds_exposed: bool,
    /// When set the scenario pool is replaced by the empty pool.
    pub empty_pool: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            cefl: CeflConfig::default(),
            reducer: ReducerConfig::default(),
            gate: GateConfig::default(),
            breaker_threshold: 2,
            breaker_window: 7,
            noise_scale: 0.05,
            alpha: 1.5,
            epsilon: 0.02,
            skew: 3,
            entropy_exposed: false,
            thresholds_exposed: false,
            empty_pool: false,
        }
    }
}

/// Resolves an ablation id into concrete settings. Each ablation differs
/// from the baseline in exactly the parameters it names; the compound stress
/// configuration tightens several at once.
pub fn ablation_settings(id: AblationId) -> RunSettings {
    let mut s = RunSettings::default();
    match id {
        AblationId::B0 => {}
        AblationId::B1 => s.reducer.sigma_max = 1.0,
        AblationId::B2 => s.reducer.diversity_buckets = 1,
        AblationId::B3 => s.reducer.k = 0,
        AblationId::B4 => s.entropy_exposed = true,
        AblationId::B5 => s.gate.skip_validation = true,
        AblationId::B6 => s.breaker_threshold = 999,
        AblationId::B7 => s.thresholds_exposed = true,
        AblationId::B8 => {
            s.empty_pool = true;
            s.cefl.empty_pool_flag = FlagLevel::Critical;
        }
        AblationId::B9 => s.reducer.hard_constraints.push(ConstraintSpec::AxisBound {
            axis: Axis::RiskSafety,
            comparator: Comparator::Ge,
            bound: 0.95,
        }),
        AblationId::B10 => s.gate.required_disclosures.push("model_version".to_string()),
        AblationId::B11 => {
            s.breaker_threshold = 1;
            s.breaker_window = 2;
        }
        AblationId::B12 => {
            s.cefl.overshoot_factor = 1.5;
            s.noise_scale = 0.10;
            s.reducer.per_axis_threshold = 0.4;
            s.reducer.sigma_max = 0.12;
            s.gate.cross_check_tolerance = 0.0;
            s.alpha = 2.0;
        }
    }
    s
}

/// Top-level grid document. Loadable from JSON; every field has a default so
/// an absent config file means "full default grid".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub master_seed: u64,
    pub runs_per_task: usize,
    pub scenarios: Vec<ScenarioId>,
    pub ablations: Vec<AblationId>,
    pub attacks: Vec<AttackKind>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            master_seed: 42,
            runs_per_task: 5,
            scenarios: SCENARIOS.to_vec(),
            ablations: ABLATIONS.to_vec(),
            attacks: ATTACK_CONDITIONS.to_vec(),
        }
    }
}

impl GridConfig {
    pub fn load(path: &std::path::Path) -> Result<GridConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            // serde_json already embeds line/column in the message
            message: e.to_string(),
        })
    }

    /// Stable digest over the canonical JSON form, recorded in the manifest.
    pub fn digest(&self) -> String {
        let serialized = serde_json::to_vec(self).expect("config serialization");
        hex::encode(<[u8; 32]>::from(Sha256::digest(&serialized)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_non_baseline_ablation_differs_from_baseline() {
        let baseline = ablation_settings(AblationId::B0);
        assert_eq!(baseline, RunSettings::default());
        for id in ABLATIONS.iter().skip(1) {
            assert_ne!(ablation_settings(*id), baseline, "{}", id.as_str());
        }
    }

    #[test]
    fn ablation_parameters_match_declared_values() {
        assert_eq!(ablation_settings(AblationId::B1).reducer.sigma_max, 1.0);
        assert_eq!(ablation_settings(AblationId::B2).reducer.diversity_buckets, 1);
        assert_eq!(ablation_settings(AblationId::B3).reducer.k, 0);
        assert!(ablation_settings(AblationId::B4).entropy_exposed);
        assert!(ablation_settings(AblationId::B5).gate.skip_validation);
        assert_eq!(ablation_settings(AblationId::B6).breaker_threshold, 999);
        assert!(ablation_settings(AblationId::B7).thresholds_exposed);
        assert!(ablation_settings(AblationId::B8).empty_pool);
        assert_eq!(
            ablation_settings(AblationId::B9).reducer.hard_constraints,
            vec![ConstraintSpec::AxisBound {
                axis: Axis::RiskSafety,
                comparator: Comparator::Ge,
                bound: 0.95,
            }]
        );
        assert!(ablation_settings(AblationId::B10)
            .gate
            .required_disclosures
            .contains(&"model_version".to_string()));
        let b11 = ablation_settings(AblationId::B11);
        assert_eq!((b11.breaker_threshold, b11.breaker_window), (1, 2));
        let b12 = ablation_settings(AblationId::B12);
        assert_eq!(b12.cefl.overshoot_factor, 1.5);
        assert_eq!(b12.noise_scale, 0.10);
        assert_eq!(b12.reducer.per_axis_threshold, 0.4);
        assert_eq!(b12.reducer.sigma_max, 0.12);
        assert_eq!(b12.gate.cross_check_tolerance, 0.0);
        assert_eq!(b12.alpha, 2.0);
    }

    #[test]
    fn id_round_trips() {
        for id in ABLATIONS {
            assert_eq!(AblationId::parse(id.as_str()).unwrap(), id);
        }
        for kind in ATTACK_CONDITIONS {
            assert_eq!(parse_attack(attack_as_str(kind)).unwrap(), kind);
        }
        assert!(AblationId::parse("B13").is_err());
        assert!(parse_attack("A6").is_err());
    }

    #[test]
    fn default_config_digest_is_stable_and_input_sensitive() {
        let a = GridConfig::default();
        let b = GridConfig::default();
        assert_eq!(a.digest(), b.digest());
        let c = GridConfig { master_seed: 43, ..GridConfig::default() };
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn config_parse_error_names_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.json");
        std::fs::write(&path, "{ \"master_seed\": }").unwrap();
        let err = GridConfig::load(&path).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("line"), "{message}");
    }
}
