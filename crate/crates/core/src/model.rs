//! Domain types shared by every module: pipeline description, warm-up plans,
//! operators, timelines and derived metrics.
//!
//! All types are immutable value data after construction and safe to share
//! across threads.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::time::{serde_ms, serde_ms_vec, TimeUs};
use crate::Result;

/// Operator kind: forward, backward-input, backward-weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    F,
    B,
    W,
}

impl OpKind {
    pub const ALL: [OpKind; 3] = [OpKind::F, OpKind::B, OpKind::W];
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpKind::F => write!(f, "F"),
            OpKind::B => write!(f, "B"),
            OpKind::W => write!(f, "W"),
        }
    }
}

/// One compute operator: `(kind, stage, microbatch)` is a unique identity
/// within an iteration. Microbatches are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Operator {
    pub kind: OpKind,
    pub stage: usize,
    pub mb: u32,
}

impl Operator {
    pub fn new(kind: OpKind, stage: usize, mb: u32) -> Self {
        Self { kind, stage, mb }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(stage={}, mb={})", self.kind, self.stage, self.mb)
    }
}

/// Per-stage operator execution times. `t_w = 0` encodes a 1F1B-style stage
/// whose weight pass is folded into the backward pass; the W operators are
/// still scheduled, with zero duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageProfile {
    pub stage_index: usize,
    #[serde(with = "serde_ms")]
    pub t_f: TimeUs,
    #[serde(with = "serde_ms")]
    pub t_b: TimeUs,
    #[serde(with = "serde_ms")]
    pub t_w: TimeUs,
}

impl StageProfile {
    pub fn uniform(stage_index: usize, t: TimeUs) -> Self {
        Self { stage_index, t_f: t, t_b: t, t_w: t }
    }

    pub fn duration(&self, kind: OpKind) -> TimeUs {
        match kind {
            OpKind::F => self.t_f,
            OpKind::B => self.t_b,
            OpKind::W => self.t_w,
        }
    }
}

/// A pipeline instance: stage count, microbatch count, per-stage operator
/// durations and per-link communication latencies. `comm_latency[i]` is the
/// latency between stages `i` and `i+1`, applied to forward and backward
/// transfers alike.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub num_stages: usize,
    pub num_microbatches: u32,
    pub profiles: Vec<StageProfile>,
    #[serde(with = "serde_ms_vec")]
    pub comm_latency: Vec<TimeUs>,
}

impl PipelineSpec {
    /// Uniform pipeline: every operator takes `t`, all links at zero latency.
    pub fn uniform(num_stages: usize, num_microbatches: u32, t: TimeUs) -> Self {
        Self {
            num_stages,
            num_microbatches,
            profiles: (0..num_stages).map(|i| StageProfile::uniform(i, t)).collect(),
            comm_latency: vec![0; num_stages.saturating_sub(1)],
        }
    }

    pub fn with_comm(mut self, comm_latency: Vec<TimeUs>) -> Self {
        self.comm_latency = comm_latency;
        self
    }

    pub fn link_count(&self) -> usize {
        self.num_stages.saturating_sub(1)
    }

    /// Same pipeline with every link at zero latency.
    pub fn zero_comm(&self) -> Self {
        let mut spec = self.clone();
        spec.comm_latency = vec![0; spec.link_count()];
        spec
    }

    /// Longest single-operator execution time across all stages and kinds.
    pub fn max_op_duration(&self) -> TimeUs {
        self.profiles
            .iter()
            .map(|p| p.t_f.max(p.t_b).max(p.t_w))
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_stages < 1 {
            return Err(Error::InvalidSpec("num_stages must be >= 1".into()));
        }
        if self.num_microbatches < 1 {
            return Err(Error::InvalidSpec("num_microbatches must be >= 1".into()));
        }
        if self.profiles.len() != self.num_stages {
            return Err(Error::InvalidSpec(format!(
                "expected {} stage profiles, got {}",
                self.num_stages,
                self.profiles.len()
            )));
        }
        for (i, p) in self.profiles.iter().enumerate() {
            if p.stage_index != i {
                return Err(Error::InvalidSpec(format!(
                    "profile at position {i} has stage_index {}",
                    p.stage_index
                )));
            }
            if p.t_f <= 0 || p.t_b <= 0 {
                return Err(Error::InvalidSpec(format!(
                    "stage {i}: t_f and t_b must be strictly positive"
                )));
            }
            if p.t_w < 0 {
                return Err(Error::InvalidSpec(format!("stage {i}: t_w must be >= 0")));
            }
        }
        if self.comm_latency.len() != self.link_count() {
            return Err(Error::InvalidSpec(format!(
                "expected {} link latencies, got {}",
                self.link_count(),
                self.comm_latency.len()
            )));
        }
        if let Some(c) = self.comm_latency.iter().find(|&&c| c < 0) {
            return Err(Error::InvalidSpec(format!("negative link latency {c}us")));
        }
        Ok(())
    }
}

/// Device memory budget for warm-up planning, expressed in the same unit as
/// the per-activation footprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryModel {
    pub capacity: u64,
    pub per_activation: u64,
}

impl MemoryModel {
    pub fn new(capacity: u64, per_activation: u64) -> Self {
        Self { capacity, per_activation }
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 || self.per_activation == 0 {
            return Err(Error::Precondition(
                "memory capacity and per-activation footprint must be positive".into(),
            ));
        }
        if self.capacity < self.per_activation {
            return Err(Error::Precondition(
                "memory capacity must hold at least one activation".into(),
            ));
        }
        Ok(())
    }

    /// Maximum number of concurrently held activations.
    pub fn max_activations(&self) -> u32 {
        (self.capacity / self.per_activation) as u32
    }
}

/// Warm-up forward count per stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarmupPlan {
    pub x: Vec<u32>,
}

impl WarmupPlan {
    pub fn new(x: Vec<u32>) -> Self {
        Self { x }
    }

    pub fn num_stages(&self) -> usize {
        self.x.len()
    }
}

/// A single violated warm-up plan constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanViolation {
    LengthMismatch { expected: usize, got: usize },
    LastStageBelowOne { got: u32 },
    NonMonotonic { link: usize, left: u32, right: u32 },
    ExceedsMicrobatches { x0: u32, num_microbatches: u32 },
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanViolation::LengthMismatch { expected, got } => {
                write!(f, "plan length {got} does not match {expected} stages")
            }
            PlanViolation::LastStageBelowOne { got } => {
                write!(f, "last stage must schedule at least one warm-up forward, got {got}")
            }
            PlanViolation::NonMonotonic { link, left, right } => {
                write!(f, "x[{}] = {left} < x[{}] = {right}", link, link + 1)
            }
            PlanViolation::ExceedsMicrobatches { x0, num_microbatches } => {
                write!(f, "x[0] = {x0} exceeds {num_microbatches} microbatches")
            }
        }
    }
}

/// Checks a warm-up plan against a pipeline: length, `x[S-1] >= 1`,
/// non-increasing counts and `x[0] <= N`. Violations are returned, not
/// raised; an empty list means the plan is valid.
pub fn validate_plan(spec: &PipelineSpec, plan: &WarmupPlan) -> Vec<PlanViolation> {
    let mut violations = Vec::new();
    if plan.x.len() != spec.num_stages {
        violations.push(PlanViolation::LengthMismatch {
            expected: spec.num_stages,
            got: plan.x.len(),
        });
        return violations;
    }
    if let Some(&last) = plan.x.last() {
        if last < 1 {
            violations.push(PlanViolation::LastStageBelowOne { got: last });
        }
    }
    for i in 0..plan.x.len().saturating_sub(1) {
        if plan.x[i] < plan.x[i + 1] {
            violations.push(PlanViolation::NonMonotonic {
                link: i,
                left: plan.x[i],
                right: plan.x[i + 1],
            });
        }
    }
    if let Some(&x0) = plan.x.first() {
        if x0 > spec.num_microbatches {
            violations.push(PlanViolation::ExceedsMicrobatches {
                x0,
                num_microbatches: spec.num_microbatches,
            });
        }
    }
    violations
}

/// Inter-stage slackness derived from a warm-up plan:
/// `delta[i] = x[i] - x[i+1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slackness {
    pub delta: Vec<u32>,
}

/// Computes the slackness vector; rejects non-monotonic plans.
pub fn slackness_of(plan: &WarmupPlan) -> Result<Slackness> {
    let mut violations = Vec::new();
    for i in 0..plan.x.len().saturating_sub(1) {
        if plan.x[i] < plan.x[i + 1] {
            violations.push(PlanViolation::NonMonotonic {
                link: i,
                left: plan.x[i],
                right: plan.x[i + 1],
            });
        }
    }
    if !violations.is_empty() {
        return Err(Error::InvalidPlan(violations));
    }
    Ok(Slackness {
        delta: plan.x.windows(2).map(|w| w[0] - w[1]).collect(),
    })
}

/// One timed operator execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledOp {
    pub op: Operator,
    pub start: TimeUs,
    pub end: TimeUs,
}

/// A complete schedule: per-stage time-ordered operator executions plus the
/// makespan (end of the last operator).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    pub per_stage: Vec<Vec<ScheduledOp>>,
    pub makespan: TimeUs,
}

impl Timeline {
    pub fn num_stages(&self) -> usize {
        self.per_stage.len()
    }

    /// Per-stage operator sequences, stripped of timing.
    pub fn orders(&self) -> Vec<Vec<Operator>> {
        self.per_stage
            .iter()
            .map(|ops| ops.iter().map(|s| s.op).collect())
            .collect()
    }

    /// Number of forwards before the first backward-input in each stage.
    pub fn measured_warmup_counts(&self) -> Vec<u32> {
        self.per_stage
            .iter()
            .map(|ops| {
                ops.iter()
                    .take_while(|s| s.op.kind == OpKind::F)
                    .count() as u32
            })
            .collect()
    }

    /// Re-derives every constraint from scratch: per-stage non-overlap, one
    /// occurrence per operator identity, durations matching the profiles,
    /// dependency readiness (with communication latency) and the makespan.
    pub fn validate(&self, spec: &PipelineSpec) -> std::result::Result<(), Vec<String>> {
        let mut issues = Vec::new();
        let s = spec.num_stages;
        let n = spec.num_microbatches as usize;
        if self.per_stage.len() != s {
            issues.push(format!("expected {s} stages, got {}", self.per_stage.len()));
            return Err(issues);
        }

        let mut end_of = vec![vec![[None::<TimeUs>; 3]; n]; s];
        let kind_idx = |k: OpKind| match k {
            OpKind::F => 0,
            OpKind::B => 1,
            OpKind::W => 2,
        };

        for (i, ops) in self.per_stage.iter().enumerate() {
            if ops.len() != 3 * n {
                issues.push(format!("stage {i}: expected {} ops, got {}", 3 * n, ops.len()));
            }
            let mut prev_end = 0;
            for sop in ops {
                if sop.op.stage != i {
                    issues.push(format!("stage {i} holds {}", sop.op));
                    continue;
                }
                if sop.op.mb < 1 || sop.op.mb as usize > n {
                    issues.push(format!("{}: microbatch out of range", sop.op));
                    continue;
                }
                if sop.start < prev_end {
                    issues.push(format!(
                        "{}: starts at {} before previous op ends at {}",
                        sop.op, sop.start, prev_end
                    ));
                }
                let dur = spec.profiles[i].duration(sop.op.kind);
                if sop.end - sop.start != dur {
                    issues.push(format!(
                        "{}: duration {} does not match profile {}",
                        sop.op,
                        sop.end - sop.start,
                        dur
                    ));
                }
                prev_end = prev_end.max(sop.end);
                let slot = &mut end_of[i][(sop.op.mb - 1) as usize][kind_idx(sop.op.kind)];
                if slot.is_some() {
                    issues.push(format!("{}: appears more than once", sop.op));
                }
                *slot = Some(sop.end);
            }
        }
        for (i, per_mb) in end_of.iter().enumerate() {
            for (mb0, kinds) in per_mb.iter().enumerate() {
                for (k, end) in kinds.iter().enumerate() {
                    if end.is_none() {
                        let kind = OpKind::ALL[k];
                        issues.push(format!(
                            "{} missing",
                            Operator::new(kind, i, (mb0 + 1) as u32)
                        ));
                    }
                }
            }
        }
        if !issues.is_empty() {
            return Err(issues);
        }

        // Dependency readiness lower bounds (decoupled transfers): queueing
        // models may only push starts later, never earlier.
        for (i, ops) in self.per_stage.iter().enumerate() {
            for sop in ops {
                let mb0 = (sop.op.mb - 1) as usize;
                let ready = match sop.op.kind {
                    OpKind::F => {
                        if i == 0 {
                            0
                        } else {
                            end_of[i - 1][mb0][0].unwrap() + spec.comm_latency[i - 1]
                        }
                    }
                    OpKind::B => {
                        let local = end_of[i][mb0][0].unwrap();
                        if i == s - 1 {
                            local
                        } else {
                            local.max(end_of[i + 1][mb0][1].unwrap() + spec.comm_latency[i])
                        }
                    }
                    OpKind::W => end_of[i][mb0][1].unwrap(),
                };
                if sop.start < ready {
                    issues.push(format!(
                        "{}: starts at {} before dependencies allow ({})",
                        sop.op, sop.start, ready
                    ));
                }
            }
        }

        let max_end = self
            .per_stage
            .iter()
            .flat_map(|ops| ops.iter().map(|s| s.end))
            .max()
            .unwrap_or(0);
        if self.makespan != max_end {
            issues.push(format!(
                "makespan {} does not equal last op end {}",
                self.makespan, max_end
            ));
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct OpRepr {
    kind: OpKind,
    mb: u32,
    #[serde(with = "serde_ms")]
    start_ms: TimeUs,
    #[serde(with = "serde_ms")]
    end_ms: TimeUs,
}

#[derive(Serialize, Deserialize)]
struct TimelineRepr {
    #[serde(with = "serde_ms")]
    makespan_ms: TimeUs,
    stages: Vec<Vec<OpRepr>>,
}

impl Serialize for Timeline {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = TimelineRepr {
            makespan_ms: self.makespan,
            stages: self
                .per_stage
                .iter()
                .map(|ops| {
                    ops.iter()
                        .map(|s| OpRepr {
                            kind: s.op.kind,
                            mb: s.op.mb,
                            start_ms: s.start,
                            end_ms: s.end,
                        })
                        .collect()
                })
                .collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Timeline {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = TimelineRepr::deserialize(deserializer)?;
        Ok(Timeline {
            per_stage: repr
                .stages
                .into_iter()
                .enumerate()
                .map(|(stage, ops)| {
                    ops.into_iter()
                        .map(|o| ScheduledOp {
                            op: Operator::new(o.kind, stage, o.mb),
                            start: o.start_ms,
                            end: o.end_ms,
                        })
                        .collect()
                })
                .collect(),
            makespan: repr.makespan_ms,
        })
    }
}

/// Derived schedule quality measures.
///
/// `interior_bubble_rate` relates idle gaps to each stage's own busy span;
/// `utilization_bubble_rate` relates total busy time to the full makespan on
/// every stage. `accumulated_delay` is the makespan under the injected
/// latencies minus the makespan of the same plan and order at zero latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(with = "serde_ms")]
    pub makespan_ms: TimeUs,
    pub interior_bubble_rate: f64,
    pub utilization_bubble_rate: f64,
    pub peak_activations: Vec<u32>,
    #[serde(with = "serde_ms")]
    pub accumulated_delay_ms: TimeUs,
}
