//! Event-driven replay of a fixed per-stage operator order under injected
//! communication latencies.
//!
//! Replay is exact (no time stepping): each stage starts its next ordered
//! operator as soon as the stage is idle and the operator's dependencies are
//! satisfied. Under [`CommModel::Decoupled`], transfers never occupy the
//! stage and data arrives `c` after the producing operator completes. Under
//! [`CommModel::SequentialLaunch`], every completed F/B enqueues a send on
//! its outgoing directed link; a send occupies a link slot for `c`, and a
//! stage that needs a slot on a full link blocks until one frees, stalling
//! its next compute operator.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::model::{Metrics, OpKind, Operator, PipelineSpec, ScheduledOp, Timeline};
use crate::time::TimeUs;
use crate::Result;

/// Transfer semantics for replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommModel {
    /// Transfers run beside compute; nothing ever blocks a stage.
    Decoupled,
    /// Sends launch in operator-completion order and hold a link slot for
    /// the link's full latency. At most `queue_capacity` sends may be in
    /// flight per directed link.
    SequentialLaunch { queue_capacity: usize },
}

impl CommModel {
    pub fn sequential(queue_capacity: usize) -> Self {
        CommModel::SequentialLaunch { queue_capacity }
    }
}

/// Replay output: the realized timeline plus derived metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub timeline: Timeline,
    pub metrics: Metrics,
}

const KIND_F: usize = 0;
const KIND_B: usize = 1;
const KIND_W: usize = 2;

fn kind_idx(kind: OpKind) -> usize {
    match kind {
        OpKind::F => KIND_F,
        OpKind::B => KIND_B,
        OpKind::W => KIND_W,
    }
}

struct Channel {
    capacity: usize,
    /// End times of launched sends, in launch order.
    ends: Vec<TimeUs>,
}

impl Channel {
    fn new(capacity: usize) -> Self {
        Self { capacity, ends: Vec::new() }
    }

    /// Launches a send desired at `at`; returns (launch, arrival).
    fn send(&mut self, at: TimeUs, latency: TimeUs) -> (TimeUs, TimeUs) {
        let launch = if self.ends.len() >= self.capacity {
            at.max(self.ends[self.ends.len() - self.capacity])
        } else {
            at
        };
        let arrival = launch + latency;
        self.ends.push(arrival);
        (launch, arrival)
    }
}

pub(crate) struct ReplayConfig<'a> {
    pub comm: CommModel,
    /// Per-link override: `true` forces decoupled transfers on that link
    /// even under a sequential-launch model.
    pub decoupled_links: Option<&'a [bool]>,
}

fn order_violations(spec: &PipelineSpec, orders: &[Vec<Operator>]) -> Option<String> {
    if orders.len() != spec.num_stages {
        return Some(format!(
            "expected {} stage orders, got {}",
            spec.num_stages,
            orders.len()
        ));
    }
    let n = spec.num_microbatches;
    for (i, order) in orders.iter().enumerate() {
        if order.len() != 3 * n as usize {
            return Some(format!(
                "stage {i}: expected {} operators, got {}",
                3 * n,
                order.len()
            ));
        }
        let mut seen = BTreeSet::new();
        for op in order {
            if op.stage != i {
                return Some(format!("stage {i} order holds {op}"));
            }
            if op.mb < 1 || op.mb > n {
                return Some(format!("{op}: microbatch out of range 1..={n}"));
            }
            if !seen.insert((op.kind, op.mb)) {
                return Some(format!("{op}: duplicated in stage {i} order"));
            }
        }
    }
    None
}

/// Replays `orders` on `spec` under the given communication model.
pub fn replay(
    spec: &PipelineSpec,
    orders: &[Vec<Operator>],
    comm: CommModel,
) -> Result<ReplayOutcome> {
    replay_with_modes(spec, orders, &ReplayConfig { comm, decoupled_links: None })
}

pub(crate) fn replay_with_modes(
    spec: &PipelineSpec,
    orders: &[Vec<Operator>],
    cfg: &ReplayConfig<'_>,
) -> Result<ReplayOutcome> {
    let timeline = replay_timeline(spec, orders, cfg)?;
    let baseline = replay_timeline(&spec.zero_comm(), orders, cfg)?;
    let metrics = compute_metrics(&timeline, timeline.makespan - baseline.makespan);
    Ok(ReplayOutcome { timeline, metrics })
}

fn replay_timeline(
    spec: &PipelineSpec,
    orders: &[Vec<Operator>],
    cfg: &ReplayConfig<'_>,
) -> Result<Timeline> {
    spec.validate()?;
    if let Some(msg) = order_violations(spec, orders) {
        return Err(Error::InvalidOrder(msg));
    }

    let s = spec.num_stages;
    let n = spec.num_microbatches as usize;
    let queue_capacity = match cfg.comm {
        CommModel::Decoupled => None,
        CommModel::SequentialLaunch { queue_capacity } => {
            if queue_capacity < 1 {
                return Err(Error::Precondition("queue capacity must be >= 1".into()));
            }
            Some(queue_capacity)
        }
    };
    if let Some(modes) = cfg.decoupled_links {
        if modes.len() != spec.link_count() {
            return Err(Error::Precondition(format!(
                "expected {} link mode flags, got {}",
                spec.link_count(),
                modes.len()
            )));
        }
    }
    let link_decoupled = |link: usize| -> bool {
        match queue_capacity {
            None => true,
            Some(_) => cfg.decoupled_links.map_or(false, |m| m[link]),
        }
    };

    // end[stage][mb][kind]: completion time of an executed operator.
    let mut end = vec![vec![[None::<TimeUs>; 3]; n]; s];
    // Arrival of F(i-1, mb) data at stage i / B(i+1, mb) data at stage i.
    let mut f_arrival = vec![vec![None::<TimeUs>; n]; s];
    let mut b_arrival = vec![vec![None::<TimeUs>; n]; s];
    let mut stage_free = vec![0 as TimeUs; s];
    let mut next_idx = vec![0usize; s];
    let mut scheduled: Vec<Vec<ScheduledOp>> = vec![Vec::with_capacity(3 * n); s];
    // One forward and one backward channel per link.
    let cap = queue_capacity.unwrap_or(1);
    let mut fwd_channel: Vec<Channel> = (0..spec.link_count()).map(|_| Channel::new(cap)).collect();
    let mut bwd_channel: Vec<Channel> = (0..spec.link_count()).map(|_| Channel::new(cap)).collect();

    let total: usize = 3 * n * s;
    let mut done = 0usize;

    loop {
        let mut progressed = false;
        for i in 0..s {
            while next_idx[i] < orders[i].len() {
                let op = orders[i][next_idx[i]];
                let mb0 = (op.mb - 1) as usize;
                let ready = match op.kind {
                    OpKind::F => {
                        if i == 0 {
                            Some(0)
                        } else {
                            f_arrival[i][mb0]
                        }
                    }
                    OpKind::B => {
                        let local = end[i][mb0][KIND_F];
                        if i == s - 1 {
                            local
                        } else {
                            match (local, b_arrival[i][mb0]) {
                                (Some(a), Some(b)) => Some(a.max(b)),
                                _ => None,
                            }
                        }
                    }
                    OpKind::W => end[i][mb0][KIND_B],
                };
                let Some(ready) = ready else { break };

                let start = ready.max(stage_free[i]);
                let finish = start + spec.profiles[i].duration(op.kind);
                end[i][mb0][kind_idx(op.kind)] = Some(finish);
                stage_free[i] = finish;
                scheduled[i].push(ScheduledOp { op, start, end: finish });

                // Outgoing transfer, if any.
                let out = match op.kind {
                    OpKind::F if i < s - 1 => Some((i, true)),
                    OpKind::B if i > 0 => Some((i - 1, false)),
                    _ => None,
                };
                if let Some((link, forward)) = out {
                    let c = spec.comm_latency[link];
                    let arrival = if link_decoupled(link) {
                        finish + c
                    } else {
                        let channel = if forward {
                            &mut fwd_channel[link]
                        } else {
                            &mut bwd_channel[link]
                        };
                        let (launch, arrival) = channel.send(finish, c);
                        // The stage cannot start its next compute operator
                        // until the send has launched.
                        stage_free[i] = stage_free[i].max(launch);
                        arrival
                    };
                    if forward {
                        f_arrival[i + 1][mb0] = Some(arrival);
                    } else {
                        b_arrival[i - 1][mb0] = Some(arrival);
                    }
                }

                next_idx[i] += 1;
                done += 1;
                progressed = true;
            }
        }
        if done == total {
            break;
        }
        if !progressed {
            let now = stage_free.iter().copied().max().unwrap_or(0);
            let frontier = (0..s)
                .filter(|&i| next_idx[i] < orders[i].len())
                .map(|i| format!("stage {i} waiting on {}", orders[i][next_idx[i]]))
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::Deadlock { time_us: now, frontier });
        }
    }

    let makespan = scheduled
        .iter()
        .flat_map(|ops| ops.iter().map(|o| o.end))
        .max()
        .unwrap_or(0);
    Ok(Timeline { per_stage: scheduled, makespan })
}

/// Makespan under `spec`'s latencies minus the makespan of the same order
/// with every link at zero latency.
pub fn accumulated_delay(
    spec: &PipelineSpec,
    orders: &[Vec<Operator>],
    comm: CommModel,
) -> Result<TimeUs> {
    let injected = replay(spec, orders, comm)?;
    Ok(injected.metrics.accumulated_delay_ms)
}

/// Per stage, the maximum over time of completed forwards minus completed
/// backward-inputs. Weight-gradient operators hold no activations; a
/// backward releases its activation at completion.
pub fn peak_activations(timeline: &Timeline) -> Vec<u32> {
    timeline
        .per_stage
        .iter()
        .map(|ops| {
            let mut held: i64 = 0;
            let mut peak: i64 = 0;
            for sop in ops {
                match sop.op.kind {
                    OpKind::F => {
                        held += 1;
                        peak = peak.max(held);
                    }
                    OpKind::B => held -= 1,
                    OpKind::W => {}
                }
            }
            peak.max(0) as u32
        })
        .collect()
}

/// Derives metrics from a realized timeline. `accumulated_delay` is supplied
/// by the caller (it requires a zero-latency reference replay).
pub fn compute_metrics(timeline: &Timeline, accumulated_delay: TimeUs) -> Metrics {
    let mut span_sum = 0i64;
    let mut busy_total = 0i64;
    let mut gap_sum = 0i64;
    for ops in &timeline.per_stage {
        if ops.is_empty() {
            continue;
        }
        let span = ops.last().unwrap().end - ops.first().unwrap().start;
        let busy: i64 = ops.iter().map(|o| o.end - o.start).sum();
        span_sum += span;
        gap_sum += span - busy;
        busy_total += busy;
    }
    let stages = timeline.per_stage.len() as i64;
    let interior = if span_sum > 0 { gap_sum as f64 / span_sum as f64 } else { 0.0 };
    let utilization = if timeline.makespan > 0 && stages > 0 {
        1.0 - busy_total as f64 / (stages * timeline.makespan) as f64
    } else {
        0.0
    };
    Metrics {
        makespan_ms: timeline.makespan,
        interior_bubble_rate: interior,
        utilization_bubble_rate: utilization,
        peak_activations: peak_activations(timeline),
        accumulated_delay_ms: accumulated_delay,
    }
}
