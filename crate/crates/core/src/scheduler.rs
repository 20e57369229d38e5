//! Full-pipeline schedule generation: a discrete-time simulation loop with a
//! two-phase operator-selection policy.
//!
//! Each stage first executes its planned warm-up forwards, then picks ready
//! operators in priority order B > F > W (lowest microbatch first within a
//! kind). Operators start only at step boundaries (multiples of the
//! configured step size); within a step, stages are visited in ascending
//! index. Steps where no stage can act are skipped in one jump, so the loop
//! executes at most one step per scheduled operator.
//!
//! A forward is eligible only while the stage's activation lead (forwards
//! started minus backward-inputs completed) is below its warm-up count;
//! this keeps the realized warm-up prefix and the peak activation count
//! exactly at the planned `x_i` even when later operands are delayed.
//!
//! Successor availability: a completed F at stage `i < S-1` makes F at stage
//! `i+1` ready at completion + `c_i`; a completed B at stage `i > 0` makes B
//! at stage `i-1` ready at completion + `c_(i-1)`; the terminal stage's B
//! and every W become ready at local completion.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::model::{validate_plan, OpKind, Operator, PipelineSpec, ScheduledOp, Timeline, WarmupPlan};
use crate::time::{TimeUs, US_PER_MS};
use crate::Result;

/// Generation parameters. Tie-breaking is fixed: stages in ascending index,
/// then policy priority, then lowest microbatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenConfig {
    /// Step size in microseconds.
    pub delta: TimeUs,
}

impl GenConfig {
    pub fn new(delta_us: TimeUs) -> Self {
        Self { delta: delta_us }
    }

    /// Step size targeting 30 steps per longest operator.
    pub fn auto(spec: &PipelineSpec) -> Self {
        let t_o = spec.max_op_duration();
        Self { delta: ((t_o + 29) / 30).max(1) }
    }

    pub fn default_ms() -> Self {
        Self { delta: US_PER_MS }
    }

    /// A step larger than the shortest positive operator duration degrades
    /// schedule quality; generation is still permitted.
    pub fn warning(&self, spec: &PipelineSpec) -> Option<String> {
        let min_positive = spec
            .profiles
            .iter()
            .flat_map(|p| [p.t_f, p.t_b, p.t_w])
            .filter(|&d| d > 0)
            .min()?;
        if self.delta > min_positive {
            Some(format!(
                "step size {}us exceeds the shortest operator duration {}us",
                self.delta, min_positive
            ))
        } else {
            None
        }
    }
}

/// Counters from one generation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenStats {
    /// Discrete steps the loop executed.
    pub steps: u64,
}

/// Two-phase selection over operators that are already ready: while warm-up
/// forwards remain, only an F may run; afterwards the highest-priority kind
/// under B > F > W wins, lowest microbatch first.
pub fn select_op(ready: &[Operator], warmups_remaining: u32) -> Option<Operator> {
    let lowest = |kind: OpKind| {
        ready
            .iter()
            .filter(|o| o.kind == kind)
            .min_by_key(|o| o.mb)
            .copied()
    };
    if warmups_remaining > 0 {
        return lowest(OpKind::F);
    }
    lowest(OpKind::B)
        .or_else(|| lowest(OpKind::F))
        .or_else(|| lowest(OpKind::W))
}

struct StageState {
    /// Pending operators by kind: microbatch -> ready time.
    pending: [BTreeMap<u32, TimeUs>; 3],
    busy_until: TimeUs,
    started_f: u32,
    completed_b: u32,
    out: Vec<ScheduledOp>,
}

fn kind_slot(kind: OpKind) -> usize {
    match kind {
        OpKind::F => 0,
        OpKind::B => 1,
        OpKind::W => 2,
    }
}

pub fn generate_schedule(
    spec: &PipelineSpec,
    plan: &WarmupPlan,
    cfg: &GenConfig,
) -> Result<Timeline> {
    generate_with_stats(spec, plan, cfg).map(|(t, _)| t)
}

pub fn step_count(spec: &PipelineSpec, plan: &WarmupPlan, cfg: &GenConfig) -> Result<u64> {
    generate_with_stats(spec, plan, cfg).map(|(_, s)| s.steps)
}

pub fn generate_with_stats(
    spec: &PipelineSpec,
    plan: &WarmupPlan,
    cfg: &GenConfig,
) -> Result<(Timeline, GenStats)> {
    spec.validate()?;
    let violations = validate_plan(spec, plan);
    if !violations.is_empty() {
        return Err(Error::InvalidPlan(violations));
    }
    if cfg.delta <= 0 {
        return Err(Error::Precondition("step size must be positive".into()));
    }

    let s = spec.num_stages;
    let n = spec.num_microbatches;
    let delta = cfg.delta;
    let total_ops = 3 * n as usize * s;

    let mut stages: Vec<StageState> = (0..s)
        .map(|_| StageState {
            pending: [BTreeMap::new(), BTreeMap::new(), BTreeMap::new()],
            busy_until: 0,
            started_f: 0,
            completed_b: 0,
            out: Vec::with_capacity(3 * n as usize),
        })
        .collect();
    for mb in 1..=n {
        stages[0].pending[kind_slot(OpKind::F)].insert(mb, 0);
    }

    let mut executed = 0usize;
    let mut now: TimeUs = 0;
    let mut steps: u64 = 0;

    while executed < total_ops {
        steps += 1;

        for i in 0..s {
            // A zero-duration operator leaves the stage idle within the same
            // step, so keep selecting until the stage is busy or starved.
            while stages[i].busy_until <= now {
                let Some(op) = select_at(&stages[i], plan.x[i], i, now) else { break };
                execute(spec, &mut stages, i, op, now);
                executed += 1;
            }
        }
        if executed == total_ops {
            break;
        }

        // Jump to the next step boundary where some stage can act; boundaries
        // in between would schedule nothing.
        let mut next_action: Option<TimeUs> = None;
        for (i, stage) in stages.iter().enumerate() {
            if let Some(t) = earliest_action(stage, plan.x[i]) {
                next_action = Some(next_action.map_or(t, |cur: TimeUs| cur.min(t)));
            }
        }
        let Some(next_action) = next_action else {
            let frontier = stages
                .iter()
                .enumerate()
                .filter(|(_, st)| st.out.len() < 3 * n as usize)
                .map(|(i, _)| format!("stage {i} starved"))
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::Deadlock { time_us: now, frontier });
        };
        let boundary = ((next_action + delta - 1) / delta) * delta;
        debug_assert!(boundary > now);
        now = boundary.max(now + delta);
    }

    let makespan = stages
        .iter()
        .flat_map(|st| st.out.iter().map(|o| o.end))
        .max()
        .unwrap_or(0);
    let timeline = Timeline {
        per_stage: stages.into_iter().map(|st| st.out).collect(),
        makespan,
    };
    Ok((timeline, GenStats { steps }))
}

fn forward_gate_open(stage: &StageState, x: u32) -> bool {
    stage.started_f - stage.completed_b < x
}

fn select_at(stage: &StageState, x: u32, stage_idx: usize, now: TimeUs) -> Option<Operator> {
    let ready_min = |slot: usize| -> Option<u32> {
        stage.pending[slot]
            .iter()
            .find(|(_, &ready)| ready <= now)
            .map(|(&mb, _)| mb)
    };
    let in_warmup = stage.started_f < x;
    if in_warmup {
        return ready_min(kind_slot(OpKind::F)).map(|mb| Operator::new(OpKind::F, stage_idx, mb));
    }
    if let Some(mb) = ready_min(kind_slot(OpKind::B)) {
        return Some(Operator::new(OpKind::B, stage_idx, mb));
    }
    if forward_gate_open(stage, x) {
        if let Some(mb) = ready_min(kind_slot(OpKind::F)) {
            return Some(Operator::new(OpKind::F, stage_idx, mb));
        }
    }
    ready_min(kind_slot(OpKind::W)).map(|mb| Operator::new(OpKind::W, stage_idx, mb))
}

/// Earliest time this stage could start any eligible pending operator.
fn earliest_action(stage: &StageState, x: u32) -> Option<TimeUs> {
    let min_ready = |slot: usize| stage.pending[slot].values().copied().min();
    let in_warmup = stage.started_f < x;
    let candidate = if in_warmup {
        min_ready(kind_slot(OpKind::F))
    } else {
        let mut best = min_ready(kind_slot(OpKind::B));
        if forward_gate_open(stage, x) {
            best = merge_min(best, min_ready(kind_slot(OpKind::F)));
        }
        merge_min(best, min_ready(kind_slot(OpKind::W)))
    };
    candidate.map(|t| t.max(stage.busy_until))
}

fn merge_min(a: Option<TimeUs>, b: Option<TimeUs>) -> Option<TimeUs> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn execute(spec: &PipelineSpec, stages: &mut [StageState], i: usize, op: Operator, now: TimeUs) {
    let s = spec.num_stages;
    let end = now + spec.profiles[i].duration(op.kind);
    {
        let stage = &mut stages[i];
        stage.pending[kind_slot(op.kind)].remove(&op.mb);
        stage.busy_until = end;
        stage.out.push(ScheduledOp { op, start: now, end });
        match op.kind {
            OpKind::F => stage.started_f += 1,
            OpKind::B => stage.completed_b += 1,
            OpKind::W => {}
        }
    }
    match op.kind {
        OpKind::F => {
            if i < s - 1 {
                stages[i + 1].pending[kind_slot(OpKind::F)]
                    .insert(op.mb, end + spec.comm_latency[i]);
            } else {
                stages[i].pending[kind_slot(OpKind::B)].insert(op.mb, end);
            }
        }
        OpKind::B => {
            stages[i].pending[kind_slot(OpKind::W)].insert(op.mb, end);
            if i > 0 {
                stages[i - 1].pending[kind_slot(OpKind::B)]
                    .insert(op.mb, end + spec.comm_latency[i - 1]);
            }
        }
        OpKind::W => {}
    }
}
