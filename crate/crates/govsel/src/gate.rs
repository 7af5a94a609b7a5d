//! Presentation gate: rationale validation, disclosure checks and randomized
//! presentation ordering. A violation blocks the run outright; the gate never
//! trims or repairs output, and it never touches scores, membership or
//! rationale content.

use serde::{Deserialize, Serialize};

use crate::domain::{Axis, AxisScores, FeatureTag, FlagLevel, QualityFlag, Rationale};
use crate::entropy::RandomStream;
use crate::record::{Anomaly, AnomalyKind};
use crate::reducer::SurfacedSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub required_disclosures: Vec<String>,
    pub skip_validation: bool,
    /// Tolerance for the disclosure-vs-source cross-check.
    pub cross_check_tolerance: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            required_disclosures: vec![
                "regulatory_compliance".to_string(),
                "latency".to_string(),
                "auditability_score".to_string(),
            ],
            skip_validation: false,
            cross_check_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub candidate_id: String,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateVerdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "BLOCKED")]
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentedEntry {
    pub candidate_id: String,
    pub scores: AxisScores,
    pub rationale: Rationale,
    pub disclosures: std::collections::BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentedSet {
    /// Entries in presented order.
    pub entries: Vec<PresentedEntry>,
    /// Permutation applied to the surfaced execution order.
    pub order_permutation: Vec<usize>,
    pub gate_verdict: GateVerdict,
}

/// PASS iff every surfaced rationale carries at least one pro and one con
/// argument. Violations name the candidate and field.
pub fn validate_rationales(surfaced: &SurfacedSet) -> Vec<Violation> {
    let mut violations = Vec::new();
    for member in &surfaced.members {
        if member.rationale.pro.is_empty() {
            violations.push(Violation {
                candidate_id: member.candidate.id.clone(),
                field: "rationale.pro".to_string(),
                message: "supporting arguments must be non-empty".to_string(),
            });
        }
        if member.rationale.con.is_empty() {
            violations.push(Violation {
                candidate_id: member.candidate.id.clone(),
                field: "rationale.con".to_string(),
                message: "countervailing arguments must be non-empty".to_string(),
            });
        }
    }
    violations
}

/// Disclosure keys whose values are cross-checked against source features.
const CROSS_CHECKED: [(&str, Axis); 2] =
    [("latency", Axis::Latency), ("auditability_score", Axis::Auditability)];

/// PASS iff every surfaced candidate discloses every required key and the
/// cross-checked values match the source features within tolerance.
pub fn check_disclosures(
    surfaced: &SurfacedSet,
    required: &[String],
    tolerance: f64,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    for member in &surfaced.members {
        for key in required {
            if !member.candidate.disclosures.contains_key(key) {
                violations.push(Violation {
                    candidate_id: member.candidate.id.clone(),
                    field: format!("disclosures.{key}"),
                    message: "required disclosure missing".to_string(),
                });
            }
        }
        for (key, axis) in CROSS_CHECKED {
            let Some(raw) = member.candidate.disclosures.get(key) else { continue };
            let disclosed: f64 = match raw.parse() {
                Ok(v) => v,
                Err(_) => {
                    violations.push(Violation {
                        candidate_id: member.candidate.id.clone(),
                        field: format!("disclosures.{key}"),
                        message: "disclosed value is not numeric".to_string(),
                    });
                    continue;
                }
            };
            let source = member.candidate.feature(axis).unwrap_or(f64::NAN);
            let delta = (disclosed - source).abs();
            // NaN (missing source feature) must fail the cross-check too
            if delta.is_nan() || delta > tolerance {
                violations.push(Violation {
                    candidate_id: member.candidate.id.clone(),
                    field: format!("disclosures.{key}"),
                    message: "disclosed value does not match source data".to_string(),
                });
            }
        }
    }
    violations
}

/// Fisher-Yates permutation of the surfaced entries. The ordering hint is
/// deliberately not consulted; callers record hint attempts separately.
pub fn randomize_order(surfaced: &SurfacedSet, stream: &mut RandomStream) -> PresentedSet {
    debug_assert_eq!(stream.label(), "ordering");
    let mut permutation: Vec<usize> = (0..surfaced.members.len()).collect();
    stream.shuffle(&mut permutation);
    let entries = permutation
        .iter()
        .map(|&i| {
            let member = &surfaced.members[i];
            PresentedEntry {
                candidate_id: member.candidate.id.clone(),
                scores: member.scores,
                rationale: member.rationale.clone(),
                disclosures: member.candidate.disclosures.clone(),
            }
        })
        .collect();
    PresentedSet { entries, order_permutation: permutation, gate_verdict: GateVerdict::Pass }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutput {
    pub presented: PresentedSet,
    pub violations: Vec<Violation>,
    pub flags: Vec<QualityFlag>,
    pub anomalies: Vec<Anomaly>,
    /// Candidates that requested a presentation position (recorded for the
    /// audit trail, never honored).
    pub ordering_hint_attempts: Vec<String>,
}

/// Runs both validators (unless validation is disabled) and then randomizes
/// the presentation order. Validation failure blocks: nothing is presented.
pub fn gate(surfaced: &SurfacedSet, cfg: &GateConfig, stream: &mut RandomStream) -> GateOutput {
    let ordering_hint_attempts: Vec<String> = surfaced
        .members
        .iter()
        .filter(|m| m.rationale.ordering_hint.is_some())
        .map(|m| m.candidate.id.clone())
        .collect();

    let mut violations = Vec::new();
    let mut flags = Vec::new();
    let mut anomalies = Vec::new();
    if !cfg.skip_validation {
        let rationale_violations = validate_rationales(surfaced);
        if !rationale_violations.is_empty() {
            flags.push(QualityFlag {
                level: FlagLevel::Critical,
                source: "gate.rationales".to_string(),
                reason: "rationale validation failed".to_string(),
            });
            anomalies.push(Anomaly {
                kind: AnomalyKind::RationaleInvalid,
                source: "gate.rationales".to_string(),
            });
        }
        violations.extend(rationale_violations);

        let disclosure_violations =
            check_disclosures(surfaced, &cfg.required_disclosures, cfg.cross_check_tolerance);
        if !disclosure_violations.is_empty() {
            flags.push(QualityFlag {
                level: FlagLevel::Critical,
                source: "gate.disclosures".to_string(),
                reason: "disclosure validation failed".to_string(),
            });
            anomalies.push(Anomaly {
                kind: AnomalyKind::DisclosureMissing,
                source: "gate.disclosures".to_string(),
            });
        }
        violations.extend(disclosure_violations);
    }

    if !violations.is_empty() {
        return GateOutput {
            presented: PresentedSet {
                entries: Vec::new(),
                order_permutation: Vec::new(),
                gate_verdict: GateVerdict::Blocked,
            },
            violations,
            flags,
            anomalies,
            ordering_hint_attempts,
        };
    }

    GateOutput {
        presented: randomize_order(surfaced, stream),
        violations,
        flags,
        anomalies,
        ordering_hint_attempts,
    }
}

/// Count of pro and con arguments of a presented entry; the framing-skew
/// success predicate compares their ratio.
pub fn pro_con_counts(rationale: &Rationale) -> (usize, usize) {
    (rationale.pro.len(), rationale.con.len())
}

/// All argument tags across the presented entries, pooled for the framing
/// entropy metric.
pub fn presented_tags(presented: &PresentedSet) -> Vec<FeatureTag> {
    presented
        .entries
        .iter()
        .flat_map(|e| {
            e.rationale
                .pro
                .iter()
                .chain(e.rationale.con.iter())
                .map(|a| a.feature_tag)
        })
        .collect()
}
