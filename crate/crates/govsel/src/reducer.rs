//! The governed selection authority: six deterministic stages from scored
//! candidates to the surfaced set and its execution order.
//!
//! The reducer is configured once per run from a snapshot; nothing in the
//! scored data can alter the configuration, the stage order, or the entropy
//! stream it consumes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentCandidate, Axis, FlagLevel, QualityFlag, SCORE_AXES};
use crate::cefl::FrozenCandidateSet;
use crate::entropy::RandomStream;
use crate::record::{Anomaly, AnomalyKind};
use crate::scorer::ScoredCandidate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Ge,
    Le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSpec {
    /// Candidate survives iff its source feature satisfies the bound.
    AxisBound { axis: Axis, comparator: Comparator, bound: f64 },
    /// Candidate survives iff it discloses the key.
    RequireDisclosure { key: String },
}

impl ConstraintSpec {
    fn passes(&self, candidate: &AgentCandidate) -> bool {
        match self {
            ConstraintSpec::AxisBound { axis, comparator, bound } => {
                let value = candidate.feature(*axis).unwrap_or(f64::NAN);
                match comparator {
                    Comparator::Ge => value >= *bound,
                    Comparator::Le => value <= *bound,
                }
            }
            ConstraintSpec::RequireDisclosure { key } => candidate.disclosures.contains_key(key),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducerConfig {
    pub sigma_max: f64,
    pub diversity_buckets: usize,
    pub per_axis_threshold: f64,
    /// Weighted lottery picks.
    pub m: usize,
    /// Uniform exploration picks.
    pub k: usize,
    pub hard_constraints: Vec<ConstraintSpec>,
}

impl Default for ReducerConfig {
    fn default() -> Self {
        ReducerConfig {
            sigma_max: 0.18,
            diversity_buckets: 2,
            per_axis_threshold: 0.3,
            m: 2,
            k: 1,
            hard_constraints: Vec::new(),
        }
    }
}

impl ReducerConfig {
    pub fn slots(&self) -> usize {
        self.m + self.k
    }

    /// Per-bucket diversity cap.
    pub fn bucket_cap(&self) -> usize {
        let cap_total = self.slots() + 1;
        cap_total.div_ceil(self.diversity_buckets.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: String,
    pub entering: Vec<String>,
    pub surviving: Vec<String>,
    pub flag: FlagLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacedSet {
    /// Members in execution order (draw order of the lottery).
    pub members: Vec<ScoredCandidate>,
}

impl SurfacedSet {
    pub fn ids(&self) -> Vec<String> {
        self.members.iter().map(|m| m.candidate.id.clone()).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.iter().any(|m| m.candidate.id == id)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReducerError {
    #[error("frozen candidate set digest mismatch")]
    DigestMismatch,
}

fn ids_of(list: &[ScoredCandidate]) -> Vec<String> {
    list.iter().map(|s| s.candidate.id.clone()).collect()
}

/// Stage 1: drop candidates failing any configured predicate.
pub fn filter_hard_constraints(
    scored: Vec<ScoredCandidate>,
    cfg: &ReducerConfig,
) -> (Vec<ScoredCandidate>, FlagLevel) {
    let total = scored.len();
    let survivors: Vec<ScoredCandidate> = scored
        .into_iter()
        .filter(|s| cfg.hard_constraints.iter().all(|c| c.passes(&s.candidate)))
        .collect();
    let flag = if total > 0 && survivors.is_empty() {
        FlagLevel::Critical
    } else if total > 0 && survivors.len() * 2 < total {
        FlagLevel::Degraded
    } else {
        FlagLevel::Nominal
    };
    (survivors, flag)
}

fn population_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Stage 2: per-axis affine shrink toward the mean when the population
/// standard deviation exceeds `sigma_max`, with a uniform-collapse fallback
/// when clipping re-inflates the deviation.
pub fn clamp_variance(
    mut scored: Vec<ScoredCandidate>,
    sigma_max: f64,
) -> (Vec<ScoredCandidate>, FlagLevel) {
    debug_assert!(sigma_max > 0.0);
    if scored.len() < 2 {
        return (scored, FlagLevel::Nominal);
    }
    let mut clamped_any = false;
    for axis in SCORE_AXES {
        let values: Vec<f64> = scored.iter().map(|s| s.scores.get(axis)).collect();
        let (mean, sigma) = population_stats(&values);
        if sigma <= sigma_max {
            continue;
        }
        clamped_any = true;
        let scale = sigma_max / sigma;
        for entry in scored.iter_mut() {
            let s = entry.scores.get(axis);
            entry.scores.set(axis, (mean + scale * (s - mean)).clamp(0.0, 1.0));
        }
        let adjusted: Vec<f64> = scored.iter().map(|s| s.scores.get(axis)).collect();
        let (_, sigma_after) = population_stats(&adjusted);
        if sigma_after > sigma_max + 1e-9 {
            // clipping pathology: collapse the axis to uniform weight
            for entry in scored.iter_mut() {
                entry.scores.set(axis, mean.clamp(0.0, 1.0));
            }
        }
    }
    let flag = if clamped_any { FlagLevel::Degraded } else { FlagLevel::Nominal };
    (scored, flag)
}

fn dominates(a: &ScoredCandidate, b: &ScoredCandidate) -> bool {
    let mut strictly_better = false;
    for axis in SCORE_AXES {
        let (va, vb) = (a.scores.get(axis), b.scores.get(axis));
        if va < vb {
            return false;
        }
        if va > vb {
            strictly_better = true;
        }
    }
    strictly_better
}

/// Stage 3: keep non-dominated candidates. Identical score vectors all
/// survive.
pub fn pareto_frontier(scored: Vec<ScoredCandidate>) -> Vec<ScoredCandidate> {
    let survivors: Vec<ScoredCandidate> = scored
        .iter()
        .filter(|x| !scored.iter().any(|y| dominates(y, x)))
        .cloned()
        .collect();
    survivors
}

/// Stage 4: bucket by category with per-bucket caps. When the set carries
/// more categories than buckets, the least-populated categories are merged
/// until the bucket budget is met. Survivors keep their incoming order.
pub fn partition_diversity(
    scored: Vec<ScoredCandidate>,
    buckets: usize,
    cap_total: usize,
) -> Vec<ScoredCandidate> {
    debug_assert!(buckets >= 1);
    if scored.is_empty() {
        return scored;
    }
    // group indices by category
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, entry) in scored.iter().enumerate() {
        match groups.iter_mut().find(|(cat, _)| *cat == entry.candidate.category) {
            Some((_, members)) => members.push(i),
            None => groups.push((entry.candidate.category.clone(), vec![i])),
        }
    }
    while groups.len() > buckets {
        groups.sort_by(|(ca, ma), (cb, mb)| ma.len().cmp(&mb.len()).then_with(|| ca.cmp(cb)));
        let (merged_cat, merged_members) = groups.remove(0);
        let (cat, members) = &mut groups[0];
        members.extend(merged_members);
        *cat = format!("{cat}+{merged_cat}");
    }

    let cap = cap_total.div_ceil(buckets);
    let mut keep = vec![false; scored.len()];
    for (_, members) in &groups {
        let mut ranked = members.clone();
        ranked.sort_by(|&a, &b| {
            scored[b]
                .scores
                .mean()
                .partial_cmp(&scored[a].scores.mean())
                .unwrap()
                .then_with(|| scored[a].candidate.id.cmp(&scored[b].candidate.id))
        });
        for &index in ranked.iter().take(cap) {
            keep[index] = true;
        }
    }
    scored
        .into_iter()
        .enumerate()
        .filter_map(|(i, entry)| keep[i].then_some(entry))
        .collect()
}

/// Stage 5: minimum per-axis thresholds.
pub fn gate_thresholds(
    scored: Vec<ScoredCandidate>,
    threshold: f64,
    slots: usize,
) -> (Vec<ScoredCandidate>, FlagLevel) {
    debug_assert!((0.0..=1.0).contains(&threshold));
    let survivors: Vec<ScoredCandidate> = scored
        .into_iter()
        .filter(|s| SCORE_AXES.iter().all(|axis| s.scores.get(*axis) >= threshold))
        .collect();
    let flag = if survivors.len() < slots { FlagLevel::Degraded } else { FlagLevel::Nominal };
    (survivors, flag)
}

/// Stage 6: weighted lottery without replacement for `m` picks (weight =
/// mean axis score, renormalized between draws), then `k` uniform
/// exploration picks from the remainder. Draw order is the execution order.
pub fn lottery_select(
    eligible: Vec<ScoredCandidate>,
    m: usize,
    k: usize,
    stream: &mut RandomStream,
) -> SurfacedSet {
    debug_assert_eq!(stream.label(), "lottery");
    let mut remaining = eligible;
    let mut members = Vec::new();

    for _ in 0..m {
        if remaining.is_empty() {
            break;
        }
        let weights: Vec<f64> = remaining.iter().map(|s| s.scores.mean()).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total <= 0.0 {
            stream.next_index(remaining.len())
        } else {
            let mut point = stream.next_f64() * total;
            let mut chosen = remaining.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if point < *w {
                    chosen = i;
                    break;
                }
                point -= w;
            }
            chosen
        };
        members.push(remaining.remove(pick));
    }
    for _ in 0..k {
        if remaining.is_empty() {
            break;
        }
        let pick = stream.next_index(remaining.len());
        members.push(remaining.remove(pick));
    }
    SurfacedSet { members }
}

/// Full reduce output: the surfaced set (empty on NO_ACTION), per-stage
/// traces, quality flags, and the anomaly events the stages detected.
#[derive(Debug, Clone, PartialEq)]
pub struct ReduceOutput {
    pub surfaced: SurfacedSet,
    pub stage_trace: Vec<StageTrace>,
    pub flags: Vec<QualityFlag>,
    pub anomalies: Vec<Anomaly>,
    /// True when some stage emptied the eligible set.
    pub no_action: bool,
}

struct StageContext {
    trace: Vec<StageTrace>,
    flags: Vec<QualityFlag>,
    anomalies: Vec<Anomaly>,
}

impl StageContext {
    fn record(&mut self, stage: &str, entering: Vec<String>, surviving: &[ScoredCandidate], flag: FlagLevel) {
        self.trace.push(StageTrace {
            stage: stage.to_string(),
            entering,
            surviving: ids_of(surviving),
            flag,
        });
    }

    fn flag(&mut self, level: FlagLevel, source: &str, reason: &str) {
        self.flags.push(QualityFlag {
            level,
            source: source.to_string(),
            reason: reason.to_string(),
        });
    }

    fn anomaly(&mut self, kind: AnomalyKind, source: &str) {
        self.anomalies.push(Anomaly { kind, source: source.to_string() });
    }

    fn empty_set(&mut self, source: &str, reason: &str) {
        self.flag(FlagLevel::Critical, source, reason);
        self.anomaly(AnomalyKind::EmptySet, source);
    }
}

/// Runs stages 1-6 in fixed order. An empty set at any stage short-circuits
/// to NO_ACTION; a digest mismatch is a tampering signal and errors out.
pub fn reduce(
    frozen: &FrozenCandidateSet,
    scored: Vec<ScoredCandidate>,
    cfg: &ReducerConfig,
    stream: &mut RandomStream,
) -> Result<ReduceOutput, ReducerError> {
    if !frozen.verify_digest() {
        return Err(ReducerError::DigestMismatch);
    }
    let mut ctx = StageContext { trace: Vec::new(), flags: Vec::new(), anomalies: Vec::new() };
    let no_action = |ctx: StageContext| ReduceOutput {
        surfaced: SurfacedSet { members: Vec::new() },
        stage_trace: ctx.trace,
        flags: ctx.flags,
        anomalies: ctx.anomalies,
        no_action: true,
    };

    // stage 1: hard constraints
    let entering = ids_of(&scored);
    let entered_count = scored.len();
    let (current, flag) = filter_hard_constraints(scored, cfg);
    ctx.record("stage1_hard_constraints", entering, &current, flag);
    match flag {
        FlagLevel::Critical => ctx.empty_set("reducer.hard_constraints", "all candidates removed"),
        FlagLevel::Degraded => {
            ctx.flag(
                FlagLevel::Degraded,
                "reducer.hard_constraints",
                &format!("{} of {} candidates removed", entered_count - current.len(), entered_count),
            );
            ctx.anomaly(AnomalyKind::MajorityFiltered, "reducer.hard_constraints");
        }
        FlagLevel::Nominal => {}
    }
    if current.is_empty() {
        return Ok(no_action(ctx));
    }

    // stage 2: variance clamp
    let entering = ids_of(&current);
    let (current, flag) = clamp_variance(current, cfg.sigma_max);
    ctx.record("stage2_variance_clamp", entering, &current, flag);
    if flag == FlagLevel::Degraded {
        ctx.flag(FlagLevel::Degraded, "reducer.clamp", "score dispersion exceeded sigma_max");
        ctx.anomaly(AnomalyKind::VarianceExceeded, "reducer.clamp");
    }

    // stage 3: pareto frontier
    let entering = ids_of(&current);
    let current = pareto_frontier(current);
    ctx.record("stage3_pareto", entering, &current, FlagLevel::Nominal);
    if current.is_empty() {
        ctx.empty_set("reducer.pareto", "empty frontier");
        return Ok(no_action(ctx));
    }

    // stage 4: diversity partitioning
    let entering = ids_of(&current);
    let current = partition_diversity(current, cfg.diversity_buckets, cfg.slots() + 1);
    ctx.record("stage4_diversity", entering, &current, FlagLevel::Nominal);
    if current.is_empty() {
        ctx.empty_set("reducer.diversity", "no candidates after bucketing");
        return Ok(no_action(ctx));
    }

    // stage 5: per-axis thresholds
    let entering = ids_of(&current);
    let (current, flag) = gate_thresholds(current, cfg.per_axis_threshold, cfg.slots());
    ctx.record("stage5_thresholds", entering, &current, flag);
    if current.is_empty() {
        ctx.empty_set("reducer.thresholds", "no candidate meets per-axis thresholds");
        return Ok(no_action(ctx));
    }
    if flag == FlagLevel::Degraded {
        ctx.flag(
            FlagLevel::Degraded,
            "reducer.thresholds",
            "fewer eligible candidates than surfaced-set budget",
        );
    }

    // stage 6: entropy lottery
    let entering = ids_of(&current);
    let surfaced = lottery_select(current, cfg.m, cfg.k, stream);
    ctx.record("stage6_lottery", entering, &surfaced.members, FlagLevel::Nominal);
    if surfaced.members.is_empty() {
        ctx.empty_set("reducer.lottery", "nothing to surface");
        return Ok(no_action(ctx));
    }

    Ok(ReduceOutput {
        surfaced,
        stage_trace: ctx.trace,
        flags: ctx.flags,
        anomalies: ctx.anomalies,
        no_action: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{
        build_scenario_pool, build_scenario_tasks, AxisScores, Rationale, ScenarioId,
    };
    use crate::cefl::{expand, CeflConfig};
    use crate::entropy::EntropyEnvelope;
    use crate::scorer::base_score;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn candidate(id: &str, category: &str) -> crate::domain::AgentCandidate {
        let mut pool = build_scenario_pool("fraud_detection", 42).unwrap();
        let mut c = pool.remove(0);
        c.id = id.to_string();
        c.category = category.to_string();
        c
    }

    fn entry(id: &str, category: &str, scores: [f64; 3]) -> ScoredCandidate {
        ScoredCandidate {
            candidate: candidate(id, category),
            scores: AxisScores { utility: scores[0], risk_safety: scores[1], stability: scores[2] },
            rationale: Rationale::default(),
        }
    }

    fn lottery_stream(seed: u64) -> RandomStream {
        EntropyEnvelope::commit(seed, "reducer-test").reveal().unwrap().stream("lottery")
    }

    #[test]
    fn strict_risk_constraint_removes_the_whole_pool() {
        let pool = build_scenario_pool("fraud_detection", 42).unwrap();
        let scored: Vec<ScoredCandidate> = pool
            .into_iter()
            .map(|c| ScoredCandidate {
                candidate: c,
                scores: AxisScores { utility: 0.5, risk_safety: 0.5, stability: 0.5 },
                rationale: Rationale::default(),
            })
            .collect();
        let cfg = ReducerConfig {
            hard_constraints: vec![ConstraintSpec::AxisBound {
                axis: Axis::RiskSafety,
                comparator: Comparator::Ge,
                bound: 0.95,
            }],
            ..ReducerConfig::default()
        };
        let (survivors, flag) = filter_hard_constraints(scored, &cfg);
        assert!(survivors.is_empty());
        assert_eq!(flag, FlagLevel::Critical);
    }

    #[test]
    fn missing_disclosure_requirement_removes_the_whole_pool() {
        let pool = build_scenario_pool("payments_monitoring", 7).unwrap();
        let scored: Vec<ScoredCandidate> = pool
            .into_iter()
            .map(|c| ScoredCandidate {
                candidate: c,
                scores: AxisScores { utility: 0.5, risk_safety: 0.5, stability: 0.5 },
                rationale: Rationale::default(),
            })
            .collect();
        let cfg = ReducerConfig {
            hard_constraints: vec![ConstraintSpec::RequireDisclosure {
                key: "model_version".to_string(),
            }],
            ..ReducerConfig::default()
        };
        let (survivors, flag) = filter_hard_constraints(scored, &cfg);
        assert!(survivors.is_empty());
        assert_eq!(flag, FlagLevel::Critical);
    }

    #[test]
    fn no_constraints_is_identity() {
        let scored = vec![entry("a", "x", [0.5, 0.5, 0.5])];
        let (survivors, flag) = filter_hard_constraints(scored.clone(), &ReducerConfig::default());
        assert_eq!(survivors, scored);
        assert_eq!(flag, FlagLevel::Nominal);
    }

    #[test]
    fn clamp_rescales_a_dispersed_axis() {
        let scored = vec![
            entry("a", "x", [0.1, 0.5, 0.5]),
            entry("b", "x", [0.9, 0.5, 0.5]),
        ];
        let (adjusted, flag) = clamp_variance(scored, 0.18);
        assert_eq!(flag, FlagLevel::Degraded);
        assert!((adjusted[0].scores.utility - 0.32).abs() < 1e-12);
        assert!((adjusted[1].scores.utility - 0.68).abs() < 1e-12);
        let values: Vec<f64> = adjusted.iter().map(|s| s.scores.utility).collect();
        let (_, sigma) = population_stats(&values);
        assert!((sigma - 0.18).abs() < 1e-12);
        // untouched axes stay put
        assert_eq!(adjusted[0].scores.risk_safety, 0.5);
    }

    #[test]
    fn zero_variance_is_untouched() {
        let scored = vec![
            entry("a", "x", [0.5, 0.5, 0.5]),
            entry("b", "x", [0.5, 0.5, 0.5]),
        ];
        let (adjusted, flag) = clamp_variance(scored.clone(), 0.18);
        assert_eq!(adjusted, scored);
        assert_eq!(flag, FlagLevel::Nominal);
    }

    #[test]
    fn unit_sigma_max_never_clamps() {
        let scored = vec![
            entry("a", "x", [0.0, 0.0, 1.0]),
            entry("b", "x", [1.0, 1.0, 0.0]),
        ];
        let (adjusted, flag) = clamp_variance(scored.clone(), 1.0);
        assert_eq!(adjusted, scored);
        assert_eq!(flag, FlagLevel::Nominal);
    }

    #[test]
    fn strict_dominance_removes_the_dominated() {
        let scored = vec![
            entry("a", "x", [0.9, 0.9, 0.9]),
            entry("b", "x", [0.5, 0.5, 0.5]),
        ];
        let survivors = pareto_frontier(scored);
        assert_eq!(ids_of(&survivors), vec!["a"]);
    }

    #[test]
    fn incomparable_candidates_both_survive() {
        let scored = vec![
            entry("a", "x", [0.9, 0.2, 0.5]),
            entry("b", "x", [0.2, 0.9, 0.5]),
        ];
        let survivors = pareto_frontier(scored);
        assert_eq!(survivors.len(), 2);
    }

    #[test]
    fn identical_vectors_all_survive() {
        let scored = vec![
            entry("a", "x", [0.5, 0.5, 0.5]),
            entry("b", "x", [0.5, 0.5, 0.5]),
        ];
        assert_eq!(pareto_frontier(scored).len(), 2);
    }

    /// O(n^2) brute-force dominance oracle, kept independent of the
    /// implementation: a candidate survives iff no other weakly dominates it
    /// with at least one strict improvement.
    fn pareto_oracle(scored: &[ScoredCandidate]) -> Vec<String> {
        let mut out = Vec::new();
        for (i, x) in scored.iter().enumerate() {
            let mut dominated = false;
            for (j, y) in scored.iter().enumerate() {
                if i == j {
                    continue;
                }
                let ge_all = SCORE_AXES.iter().all(|a| y.scores.get(*a) >= x.scores.get(*a));
                let gt_any = SCORE_AXES.iter().any(|a| y.scores.get(*a) > x.scores.get(*a));
                if ge_all && gt_any {
                    dominated = true;
                    break;
                }
            }
            if !dominated {
                out.push(x.candidate.id.clone());
            }
        }
        out
    }

    #[test]
    fn pareto_matches_brute_force_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..500 {
            let n = 1 + (rng.next_u64() % 32) as usize;
            let scored: Vec<ScoredCandidate> = (0..n)
                .map(|i| {
                    let r = |rng: &mut ChaCha8Rng| (rng.next_u64() % 11) as f64 / 10.0;
                    entry(&format!("c{i:02}"), "x", [r(&mut rng), r(&mut rng), r(&mut rng)])
                })
                .collect();
            let expected = pareto_oracle(&scored);
            let actual = ids_of(&pareto_frontier(scored));
            assert_eq!(actual, expected);
        }
    }

    #[test]
    fn single_bucket_disables_diversity() {
        let scored = vec![
            entry("a", "x", [0.9, 0.9, 0.9]),
            entry("b", "x", [0.8, 0.8, 0.8]),
            entry("c", "x", [0.7, 0.7, 0.7]),
            entry("d", "x", [0.6, 0.6, 0.6]),
        ];
        let survivors = partition_diversity(scored.clone(), 1, 4);
        assert_eq!(survivors.len(), 4);
    }

    #[test]
    fn monoculture_is_capped_to_top_mean() {
        let scored = vec![
            entry("a", "x", [0.9, 0.9, 0.9]),
            entry("b", "x", [0.2, 0.2, 0.2]),
            entry("c", "x", [0.8, 0.8, 0.8]),
            entry("d", "x", [0.3, 0.3, 0.3]),
        ];
        // two buckets, cap_total 4 -> cap 2; one category so groups merge to 1
        let survivors = partition_diversity(scored, 2, 4);
        let mut ids = ids_of(&survivors);
        ids.sort();
        assert_eq!(ids, vec!["a", "c"]);
    }

    #[test]
    fn categories_within_cap_pass_through() {
        let scored = vec![
            entry("a", "x", [0.9, 0.9, 0.9]),
            entry("b", "y", [0.2, 0.2, 0.2]),
        ];
        let survivors = partition_diversity(scored.clone(), 2, 4);
        assert_eq!(survivors, scored);
    }

    #[test]
    fn threshold_gating_drops_weak_axes() {
        let scored = vec![
            entry("a", "x", [0.29, 0.8, 0.8]),
            entry("b", "x", [0.32, 0.32, 0.32]),
        ];
        let (survivors, _) = gate_thresholds(scored, 0.3, 3);
        assert_eq!(ids_of(&survivors), vec!["b"]);
    }

    #[test]
    fn zero_threshold_is_identity() {
        let scored = vec![entry("a", "x", [0.0, 0.5, 1.0])];
        let (survivors, _) = gate_thresholds(scored.clone(), 0.0, 1);
        assert_eq!(survivors, scored);
    }

    #[test]
    fn lottery_exhausts_small_eligible_sets() {
        let eligible = vec![
            entry("a", "x", [0.5, 0.5, 0.5]),
            entry("b", "x", [0.6, 0.6, 0.6]),
            entry("c", "x", [0.7, 0.7, 0.7]),
        ];
        let surfaced = lottery_select(eligible, 2, 1, &mut lottery_stream(1));
        assert_eq!(surfaced.members.len(), 3);
    }

    #[test]
    fn zero_exploration_skips_the_uniform_draw() {
        let eligible = vec![
            entry("a", "x", [0.5, 0.5, 0.5]),
            entry("b", "x", [0.6, 0.6, 0.6]),
            entry("c", "x", [0.7, 0.7, 0.7]),
        ];
        let surfaced = lottery_select(eligible, 2, 0, &mut lottery_stream(1));
        assert_eq!(surfaced.members.len(), 2);
    }

    #[test]
    fn equal_weight_lottery_is_uniform_within_binomial_bounds() {
        const N: usize = 10_000;
        let eligible: Vec<ScoredCandidate> = (0..5)
            .map(|i| entry(&format!("c{i}"), "x", [0.5, 0.5, 0.5]))
            .collect();
        let mut counts = std::collections::BTreeMap::new();
        for seed in 0..N as u64 {
            let surfaced = lottery_select(eligible.clone(), 1, 0, &mut lottery_stream(seed));
            *counts.entry(surfaced.ids()[0].clone()).or_insert(0usize) += 1;
        }
        let p = 1.0 / eligible.len() as f64;
        let sigma = (N as f64 * p * (1.0 - p)).sqrt();
        for (_, count) in counts {
            assert!((count as f64 - N as f64 * p).abs() <= 3.0 * sigma);
        }
    }

    fn full_pipeline_fixture(seed: u64) -> (FrozenCandidateSet, Vec<ScoredCandidate>, crate::domain::TaskSpec) {
        let task = build_scenario_tasks(ScenarioId::FraudDetection, seed).remove(0);
        let pool = build_scenario_pool("fraud_detection", seed).unwrap();
        let mut stream = EntropyEnvelope::commit(seed, "reduce-test").reveal().unwrap().stream("cefl");
        let (frozen, _) = expand(&task, &pool, &mut stream, &CeflConfig::default(), 3).unwrap();
        let scored = base_score(&frozen, &task, seed, 0.05).unwrap();
        (frozen, scored, task)
    }

    #[test]
    fn reduce_is_deterministic_given_entropy() {
        let (frozen, scored, _) = full_pipeline_fixture(42);
        let cfg = ReducerConfig::default();
        let a = reduce(&frozen, scored.clone(), &cfg, &mut lottery_stream(5)).unwrap();
        let b = reduce(&frozen, scored, &cfg, &mut lottery_stream(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stage_trace_is_a_monotone_chain() {
        let (frozen, scored, _) = full_pipeline_fixture(42);
        let cfg = ReducerConfig::default();
        let out = reduce(&frozen, scored, &cfg, &mut lottery_stream(5)).unwrap();
        for window in out.stage_trace.windows(2) {
            assert_eq!(window[0].surviving, window[1].entering);
        }
        for stage in &out.stage_trace {
            for id in &stage.surviving {
                assert!(stage.entering.contains(id), "{} appeared from nowhere", id);
            }
        }
    }

    #[test]
    fn digest_mismatch_blocks_reduction() {
        let (mut frozen, scored, _) = full_pipeline_fixture(42);
        frozen.tamper_for_test();
        let cfg = ReducerConfig::default();
        assert_eq!(
            reduce(&frozen, scored, &cfg, &mut lottery_stream(5)).unwrap_err(),
            ReducerError::DigestMismatch
        );
    }

    #[test]
    fn surfaced_members_respect_budget_and_thresholds() {
        for seed in 0..50u64 {
            let (frozen, scored, _) = full_pipeline_fixture(seed);
            let cfg = ReducerConfig::default();
            let out = reduce(&frozen, scored, &cfg, &mut lottery_stream(seed)).unwrap();
            assert!(out.surfaced.members.len() <= cfg.slots());
            for member in &out.surfaced.members {
                assert!(frozen.contains(&member.candidate.id));
                for axis in SCORE_AXES {
                    assert!(member.scores.get(axis) >= cfg.per_axis_threshold);
                }
            }
        }
    }

    #[test]
    fn ordering_hints_cannot_influence_execution_order() {
        let (frozen, scored, _) = full_pipeline_fixture(42);
        let cfg = ReducerConfig::default();
        let baseline = reduce(&frozen, scored.clone(), &cfg, &mut lottery_stream(9)).unwrap();
        let mut hinted = scored;
        for (i, entry) in hinted.iter_mut().enumerate() {
            entry.rationale.ordering_hint = Some(i as i64);
        }
        let with_hints = reduce(&frozen, hinted, &cfg, &mut lottery_stream(9)).unwrap();
        assert_eq!(baseline.surfaced.ids(), with_hints.surfaced.ids());
    }

    #[test]
    fn compound_stress_config_preserves_stage_invariants() {
        let cfg = ReducerConfig {
            sigma_max: 0.12,
            per_axis_threshold: 0.4,
            ..ReducerConfig::default()
        };
        for seed in 0..50u64 {
            let task = build_scenario_tasks(ScenarioId::FraudDetection, seed).remove(0);
            let pool = build_scenario_pool("fraud_detection", seed).unwrap();
            let mut cefl_stream =
                EntropyEnvelope::commit(seed, "b12-test").reveal().unwrap().stream("cefl");
            let cefl_cfg = CeflConfig { overshoot_factor: 1.5, ..CeflConfig::default() };
            let (frozen, _) = expand(&task, &pool, &mut cefl_stream, &cefl_cfg, 3).unwrap();
            let scored = base_score(&frozen, &task, seed, 0.10).unwrap();
            let out = reduce(&frozen, scored, &cfg, &mut lottery_stream(seed)).unwrap();
            for window in out.stage_trace.windows(2) {
                assert_eq!(window[0].surviving, window[1].entering);
            }
            if !out.no_action {
                for member in &out.surfaced.members {
                    for axis in SCORE_AXES {
                        assert!(member.scores.get(axis) >= cfg.per_axis_threshold);
                    }
                }
            }
        }
    }
}
