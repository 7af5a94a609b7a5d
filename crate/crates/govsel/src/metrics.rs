//! Per-cell metrics over run records: selection concentration (SRI),
//! framing entropy (FE), attack success rate (ASR), governance debt (GD)
//! and quality-degradation visibility (QDV), plus grouped aggregation into
//! the report tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{FlagLevel, OutcomeKind};
use crate::record::RunRecord;
use crate::scorer::AttackKind;

/// Selection Risk Index: deviation of the most favored candidate's inclusion
/// probability from the uniform 1/|S₂| benchmark. Inclusion probability is
/// estimated over all runs (non-surfaced runs contribute no inclusions);
/// |S₂| is the modal surfaced-set size over surfaced runs.
pub fn sri(cell_runs: &[RunRecord]) -> f64 {
    if cell_runs.is_empty() {
        return 0.0;
    }
    let mut inclusions: BTreeMap<&str, usize> = BTreeMap::new();
    let mut size_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for run in cell_runs {
        if run.outcome.kind != OutcomeKind::Surfaced {
            continue;
        }
        *size_counts.entry(run.surfaced_ids.len()).or_default() += 1;
        for id in &run.surfaced_ids {
            *inclusions.entry(id).or_default() += 1;
        }
    }
    let Some((&modal_size, _)) = size_counts.iter().max_by_key(|(size, n)| (**n, **size)) else {
        return 0.0; // no run ever surfaced
    };
    if modal_size == 0 {
        return 0.0;
    }
    let max_p = inclusions.values().copied().max().unwrap_or(0) as f64 / cell_runs.len() as f64;
    (max_p - 1.0 / modal_size as f64).max(0.0)
}

/// Shannon entropy (bits) of the pooled argument feature tags across all
/// presented rationales of one run; non-surfaced runs carry zero framing.
pub fn framing_entropy(run: &RunRecord) -> f64 {
    if run.outcome.kind != OutcomeKind::Surfaced {
        return 0.0;
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total = 0usize;
    for entry in &run.presented {
        for tag in entry.pro_tags.iter().chain(&entry.con_tags) {
            *counts.entry(tag.as_str()).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return 0.0;
    }
    counts
        .values()
        .map(|&n| {
            let p = n as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

fn ratio_exceeds_two(pro: usize, con: usize) -> bool {
    // pro:con > 2 with integer arithmetic; con is never 0 in presented output
    pro > 2 * con
}

/// Attack-specific success predicate for a single run: the attack biased
/// surfaced presentation without triggering a governance block.
pub fn attack_succeeded(run: &RunRecord) -> bool {
    if run.outcome.kind != OutcomeKind::Surfaced {
        return false;
    }
    let Some(target) = &run.attack_target else {
        return false;
    };
    let in_surfaced = run.surfaced_ids.iter().any(|id| id == target);
    match run.attack {
        AttackKind::None => false,
        AttackKind::A1 | AttackKind::A2 | AttackKind::A5 => in_surfaced,
        AttackKind::A3 => {
            in_surfaced
                && run
                    .presented
                    .iter()
                    .find(|e| &e.id == target)
                    .is_some_and(|e| ratio_exceeds_two(e.pro_tags.len(), e.con_tags.len()))
        }
        AttackKind::A4 => {
            run.presented.first().is_some_and(|e| &e.id == target) && run.ordering_hint_honored
        }
    }
}

pub fn asr(cell_runs: &[RunRecord]) -> f64 {
    if cell_runs.is_empty() {
        return 0.0;
    }
    let successes = cell_runs.iter().filter(|r| attack_succeeded(r)).count();
    successes as f64 / cell_runs.len() as f64
}

/// Governance debt: fraction of runs ending NO_ACTION or BLOCKED.
pub fn gd(cell_runs: &[RunRecord]) -> f64 {
    if cell_runs.is_empty() {
        return 0.0;
    }
    let intervened = cell_runs
        .iter()
        .filter(|r| matches!(r.outcome.kind, OutcomeKind::NoAction | OutcomeKind::Blocked))
        .count();
    intervened as f64 / cell_runs.len() as f64
}

/// Quality-degradation visibility: fraction of recorded anomalies whose run
/// carries a DEGRADED/CRITICAL flag from the same source. Returns the value
/// and whether it is vacuous (no anomalies at all).
pub fn qdv(cell_runs: &[RunRecord]) -> (f64, bool) {
    let mut total = 0usize;
    let mut visible = 0usize;
    for run in cell_runs {
        for anomaly in &run.anomalies {
            total += 1;
            if run
                .flags
                .iter()
                .any(|f| f.source == anomaly.source && f.level >= FlagLevel::Degraded)
            {
                visible += 1;
            }
        }
    }
    if total == 0 {
        (1.0, true)
    } else {
        (visible as f64 / total as f64, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub scenario: String,
    pub ablation: String,
    pub attack: String,
    pub n_runs: usize,
    pub sri: f64,
    pub fe: f64,
    pub gd: f64,
    pub qdv: f64,
    pub qdv_vacuous: bool,
    /// Absent for the no-attack condition.
    pub asr: Option<f64>,
}

pub fn cell_aggregate(runs: &[RunRecord]) -> CellAggregate {
    assert!(!runs.is_empty(), "cell aggregate needs at least one run");
    let first = &runs[0];
    let fe = runs.iter().map(framing_entropy).sum::<f64>() / runs.len() as f64;
    let (qdv_value, qdv_vacuous) = qdv(runs);
    CellAggregate {
        scenario: first.scenario.clone(),
        ablation: first.ablation.clone(),
        attack: crate::config::attack_as_str(first.attack).to_string(),
        n_runs: runs.len(),
        sri: sri(runs),
        fe,
        gd: gd(runs),
        qdv: qdv_value,
        qdv_vacuous,
        asr: (first.attack != AttackKind::None).then(|| asr(runs)),
    }
}

/// One row of a grouped table: unweighted means of the per-cell metrics
/// across the grouped cells. The ASR column averages attack cells only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub key: String,
    pub cells: usize,
    pub n_runs: usize,
    pub sri: f64,
    pub fe: f64,
    pub gd: f64,
    pub qdv: f64,
    pub asr: Option<f64>,
}

pub fn group_rows<F>(cells: &[CellAggregate], key_of: F) -> Vec<GroupRow>
where
    F: Fn(&CellAggregate) -> String,
{
    let mut groups: BTreeMap<String, Vec<&CellAggregate>> = BTreeMap::new();
    for cell in cells {
        groups.entry(key_of(cell)).or_default().push(cell);
    }
    groups
        .into_iter()
        .map(|(key, members)| {
            let n = members.len() as f64;
            let mean = |f: &dyn Fn(&CellAggregate) -> f64| {
                members.iter().map(|c| f(c)).sum::<f64>() / n
            };
            let attack_cells: Vec<f64> =
                members.iter().filter_map(|c| c.asr).collect();
            GroupRow {
                key,
                cells: members.len(),
                n_runs: members.iter().map(|c| c.n_runs).sum(),
                sri: mean(&|c| c.sri),
                fe: mean(&|c| c.fe),
                gd: mean(&|c| c.gd),
                qdv: mean(&|c| c.qdv),
                asr: (!attack_cells.is_empty())
                    .then(|| attack_cells.iter().sum::<f64>() / attack_cells.len() as f64),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::breaker::BreakerStatus;
    use crate::domain::{FeatureTag, QualityFlag, RunOutcome};
    use crate::gate::GateVerdict;
    use crate::record::{Anomaly, AnomalyKind, PresentedSummary};

    fn run_with(
        outcome: OutcomeKind,
        surfaced: &[&str],
        attack: AttackKind,
        target: Option<&str>,
    ) -> RunRecord {
        let mut record = RunRecord {
            schema: crate::record::SCHEMA_VERSION.to_string(),
            run_id: "test".into(),
            scenario: "fraud_detection".into(),
            ablation: "B0".into(),
            attack,
            task_id: "t".into(),
            run_index: 0,
            commitment: String::new(),
            nonce: String::new(),
            entropy: String::new(),
            frozen_digest: String::new(),
            candidate_ids: vec![],
            scores_pre_attack: vec![],
            scores_post_attack: vec![],
            attack_target: target.map(str::to_string),
            attack_phase: None,
            phase_chosen_with_entropy: false,
            attack_warning: None,
            stage_trace: vec![],
            surfaced_ids: surfaced.iter().map(|s| s.to_string()).collect(),
            gate_verdict: GateVerdict::Pass,
            violations: vec![],
            order_permutation: vec![],
            presented: surfaced
                .iter()
                .map(|s| PresentedSummary {
                    id: s.to_string(),
                    pro_tags: vec![FeatureTag::Utility, FeatureTag::Stability],
                    con_tags: vec![FeatureTag::Latency],
                })
                .collect(),
            ordering_hint_attempts: vec![],
            ordering_hint_honored: false,
            flags: vec![],
            anomalies: vec![],
            outcome: RunOutcome { kind: outcome, detail: String::new() },
            breaker_status_before: BreakerStatus::Closed,
            breaker_status_after: BreakerStatus::Closed,
            breaker_tripped: false,
            events: vec![],
            record_digest: String::new(),
        };
        record.seal();
        record
    }

    #[test]
    fn sri_of_ever_present_candidate_with_modal_size_three() {
        let runs: Vec<RunRecord> = (0..10)
            .map(|_| run_with(OutcomeKind::Surfaced, &["a", "b", "c"], AttackKind::None, None))
            .collect();
        assert!((sri(&runs) - (1.0 - 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn sri_is_zero_when_nothing_surfaces() {
        let runs: Vec<RunRecord> =
            (0..5).map(|_| run_with(OutcomeKind::NoAction, &[], AttackKind::None, None)).collect();
        assert_eq!(sri(&runs), 0.0);
    }

    #[test]
    fn sri_uniform_inclusion_is_near_zero() {
        // a, b, c each appear in every run of a 3-slot set: SRI = 1 - 1/3
        // for all of them; in contrast a candidate appearing half the time
        // with modal size 2 gives max(1/2 - 1/2, 0) = 0.
        let mut runs = vec![
            run_with(OutcomeKind::Surfaced, &["a", "b"], AttackKind::None, None),
            run_with(OutcomeKind::Surfaced, &["c", "d"], AttackKind::None, None),
        ];
        assert_eq!(sri(&runs), 0.0);
        runs.push(run_with(OutcomeKind::Blocked, &[], AttackKind::None, None));
        // blocked run lowers every inclusion probability: still clipped at 0
        assert_eq!(sri(&runs), 0.0);
    }

    #[test]
    fn framing_entropy_matches_hand_computed_values() {
        // tags {a,a,b,c}: H = 1.5 bits
        let mut run = run_with(OutcomeKind::Surfaced, &["x"], AttackKind::None, None);
        run.presented = vec![PresentedSummary {
            id: "x".into(),
            pro_tags: vec![FeatureTag::Utility, FeatureTag::Utility, FeatureTag::Stability],
            con_tags: vec![FeatureTag::Latency],
        }];
        assert!((framing_entropy(&run) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn framing_entropy_degenerate_cases() {
        let mut single = run_with(OutcomeKind::Surfaced, &["x"], AttackKind::None, None);
        single.presented = vec![PresentedSummary {
            id: "x".into(),
            pro_tags: vec![FeatureTag::Utility, FeatureTag::Utility],
            con_tags: vec![FeatureTag::Utility],
        }];
        assert_eq!(framing_entropy(&single), 0.0);

        let mut four = run_with(OutcomeKind::Surfaced, &["x"], AttackKind::None, None);
        four.presented = vec![PresentedSummary {
            id: "x".into(),
            pro_tags: vec![FeatureTag::Utility, FeatureTag::Risk, FeatureTag::Stability],
            con_tags: vec![FeatureTag::Latency],
        }];
        assert!((framing_entropy(&four) - 2.0).abs() < 1e-12);

        let blocked = run_with(OutcomeKind::Blocked, &[], AttackKind::None, None);
        assert_eq!(framing_entropy(&blocked), 0.0);
    }

    #[test]
    fn asr_counts_successes_over_all_runs() {
        let mut runs = Vec::new();
        for _ in 0..5 {
            runs.push(run_with(OutcomeKind::Surfaced, &["t", "b"], AttackKind::A1, Some("t")));
        }
        for _ in 0..5 {
            runs.push(run_with(OutcomeKind::Surfaced, &["a", "b"], AttackKind::A1, Some("t")));
        }
        assert!((asr(&runs) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn a4_success_requires_honored_hint_and_is_impossible() {
        let mut run = run_with(OutcomeKind::Surfaced, &["t", "b"], AttackKind::A4, Some("t"));
        // even presented-first does not count without an honored hint
        assert_eq!(run.presented[0].id, "t");
        assert!(!attack_succeeded(&run));
        run.ordering_hint_honored = true; // unreachable in real records
        assert!(attack_succeeded(&run));
    }

    #[test]
    fn a3_success_requires_skewed_presented_ratio() {
        let mut run = run_with(OutcomeKind::Surfaced, &["t"], AttackKind::A3, Some("t"));
        // base ratio 2:1 is not > 2
        assert!(!attack_succeeded(&run));
        run.presented[0].pro_tags.push(FeatureTag::Compliance);
        assert!(attack_succeeded(&run));
    }

    #[test]
    fn blocked_attack_runs_never_succeed() {
        let run = run_with(OutcomeKind::Blocked, &["t"], AttackKind::A1, Some("t"));
        assert!(!attack_succeeded(&run));
    }

    #[test]
    fn gd_ratio() {
        let mut runs = Vec::new();
        for _ in 0..12 {
            runs.push(run_with(OutcomeKind::Surfaced, &["a"], AttackKind::None, None));
        }
        runs.push(run_with(OutcomeKind::NoAction, &[], AttackKind::None, None));
        runs.push(run_with(OutcomeKind::Blocked, &[], AttackKind::None, None));
        runs.push(run_with(OutcomeKind::Blocked, &[], AttackKind::None, None));
        assert!((gd(&runs) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn qdv_detects_suppressed_flags() {
        let mut visible = run_with(OutcomeKind::NoAction, &[], AttackKind::None, None);
        visible.anomalies =
            vec![Anomaly { kind: AnomalyKind::EmptySet, source: "reducer.thresholds".into() }];
        visible.flags = vec![QualityFlag {
            level: FlagLevel::Critical,
            source: "reducer.thresholds".into(),
            reason: "empty".into(),
        }];
        assert_eq!(qdv(&[visible.clone()]), (1.0, false));

        let mut suppressed = visible.clone();
        suppressed.flags.clear();
        let (value, vacuous) = qdv(&[visible, suppressed]);
        assert!((value - 0.5).abs() < 1e-12);
        assert!(!vacuous);
    }

    #[test]
    fn qdv_vacuous_cell_reports_one_with_marker() {
        let runs = vec![run_with(OutcomeKind::Surfaced, &["a"], AttackKind::None, None)];
        assert_eq!(qdv(&runs), (1.0, true));
    }

    #[test]
    fn group_rows_average_asr_over_attack_cells_only() {
        let mk = |attack: &str, asr: Option<f64>| CellAggregate {
            scenario: "fraud_detection".into(),
            ablation: "B0".into(),
            attack: attack.into(),
            n_runs: 25,
            sri: 0.5,
            fe: 1.0,
            gd: 0.0,
            qdv: 1.0,
            qdv_vacuous: false,
            asr,
        };
        let cells = vec![mk("NONE", None), mk("A1", Some(0.4)), mk("A2", Some(0.8))];
        let rows = group_rows(&cells, |c| c.ablation.clone());
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].cells, 3);
        assert!((rows[0].asr.unwrap() - 0.6).abs() < 1e-12);
        assert!((rows[0].sri - 0.5).abs() < 1e-12);
    }
}
