//! Multi-iteration straggler-trace replay.
//!
//! A trace is a list of iteration-ranged latency events over pipeline links,
//! with `"failure"` marking a dead link. The campaign replays every training
//! iteration under the effective latencies and one of two policies:
//!
//! - `Static`: one schedule planned at the base latencies and kept for the
//!   whole run; transfers use sequential-launch queues. A failure costs one
//!   restart penalty (charged at its first iteration) and the link then runs
//!   at base latency again.
//! - `Adaptive`: when the observed latency vector changes, the plan and
//!   schedule are regenerated (after a configurable detection lag) and the
//!   affected links switch to decoupled transfers. Failures are rerouted at
//!   a fallback latency instead of restarting.
//!
//! Overlapping events combine by per-link maximum; the base latency is the
//! floor.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::executor::{replay_with_modes, CommModel, ReplayConfig};
use crate::model::{Operator, PipelineSpec, WarmupPlan};
use crate::planner::adapt_warmup;
use crate::scheduler::{generate_schedule, GenConfig};
use crate::time::{serde_ms, TimeUs, US_PER_MS};
use crate::Result;

/// Latency carried by a straggler event: a finite value or a link failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventLatency {
    Latency(TimeUs),
    Failure,
}

impl Serialize for EventLatency {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EventLatency::Latency(us) => crate::time::ms_number(*us).serialize(s),
            EventLatency::Failure => "failure".serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for EventLatency {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        match value {
            serde_json::Value::String(s) if s == "failure" => Ok(EventLatency::Failure),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(EventLatency::Latency(i * US_PER_MS))
                } else if let Some(f) = n.as_f64() {
                    Ok(EventLatency::Latency(crate::time::us_from_ms_f64(f)))
                } else {
                    Err(serde::de::Error::custom("unsupported latency number"))
                }
            }
            other => Err(serde::de::Error::custom(format!(
                "latency_ms must be a number or \"failure\", got {other}"
            ))),
        }
    }
}

/// One injected straggler: iterations `from..=to` on the given links.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StragglerEvent {
    pub from: u64,
    pub to: u64,
    pub links: Vec<usize>,
    #[serde(rename = "latency_ms")]
    pub latency: EventLatency,
}

impl StragglerEvent {
    fn active_at(&self, iter: u64) -> bool {
        self.from <= iter && iter <= self.to
    }
}

pub fn parse_trace(json: &str) -> Result<Vec<StragglerEvent>> {
    serde_json::from_str(json)
        .map_err(|e| Error::Precondition(format!("invalid trace document: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Static,
    Adaptive,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Static => write!(f, "static"),
            Policy::Adaptive => write!(f, "adaptive"),
        }
    }
}

fn default_queue_capacity() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub total_iters: u64,
    pub base_spec: PipelineSpec,
    pub policy: Policy,
    /// Charged once per failure event under the static policy.
    #[serde(rename = "restart_penalty_ms", with = "serde_ms")]
    pub restart_penalty: TimeUs,
    /// Latency substituted for failed links under the adaptive policy.
    #[serde(rename = "failure_fallback_latency_ms", with = "serde_ms")]
    pub failure_fallback_latency: TimeUs,
    /// Iterations between a latency change and the adapted schedule taking
    /// effect; the stale schedule runs in between.
    #[serde(default)]
    pub replan_lag_iters: u64,
    #[serde(default = "default_queue_capacity")]
    pub queue_capacity: usize,
}

/// Per-iteration outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: u64,
    /// Effective link latencies the iteration ran under.
    #[serde(rename = "c_ms", with = "crate::time::serde_ms_vec")]
    pub c: Vec<TimeUs>,
    /// Warm-up plan in effect.
    pub plan: Vec<u32>,
    #[serde(rename = "iter_time_ms", with = "serde_ms")]
    pub iter_time: TimeUs,
    /// Running total including restart penalties charged so far.
    #[serde(rename = "cumulative_ms", with = "serde_ms")]
    pub cumulative: TimeUs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub policy: Policy,
    #[serde(rename = "total_time_ms", with = "serde_ms")]
    pub total_time: TimeUs,
    /// Microbatches completed per second of simulated time.
    pub mean_throughput_mb_per_s: f64,
    pub restart_penalties_applied: u32,
    pub iterations: Vec<IterationRecord>,
}

fn validate_campaign(cfg: &CampaignConfig, trace: &[StragglerEvent]) -> Result<()> {
    cfg.base_spec.validate()?;
    if cfg.total_iters == 0 {
        return Err(Error::Precondition("total_iters must be positive".into()));
    }
    if cfg.restart_penalty < 0 || cfg.failure_fallback_latency < 0 {
        return Err(Error::Precondition(
            "restart penalty and fallback latency must be >= 0".into(),
        ));
    }
    if cfg.queue_capacity < 1 {
        return Err(Error::Precondition("queue_capacity must be >= 1".into()));
    }
    let links = cfg.base_spec.link_count();
    for (idx, event) in trace.iter().enumerate() {
        if event.from > event.to {
            return Err(Error::Precondition(format!(
                "event {idx}: iter_from {} exceeds iter_to {}",
                event.from, event.to
            )));
        }
        for &link in &event.links {
            if link >= links {
                return Err(Error::LinkOutOfRange { link, num_links: links });
            }
        }
    }
    Ok(())
}

/// Effective latency vector at `iter`: per-link max over active events with
/// the base latency as floor. Failed links map to the policy's substitute.
fn effective_c(
    cfg: &CampaignConfig,
    trace: &[StragglerEvent],
    iter: u64,
) -> Vec<TimeUs> {
    let mut c = cfg.base_spec.comm_latency.clone();
    for event in trace.iter().filter(|e| e.active_at(iter)) {
        let value = match (event.latency, cfg.policy) {
            (EventLatency::Latency(v), _) => v,
            // A restarted link runs at base latency; the penalty is charged
            // separately. A rerouted link runs at the fallback latency.
            (EventLatency::Failure, Policy::Static) => continue,
            (EventLatency::Failure, Policy::Adaptive) => cfg.failure_fallback_latency,
        };
        for &link in &event.links {
            c[link] = c[link].max(value);
        }
    }
    c
}

struct PlanCache {
    spec: PipelineSpec,
    gen: GenConfig,
    cache: BTreeMap<Vec<TimeUs>, (WarmupPlan, Vec<Vec<Operator>>)>,
}

impl PlanCache {
    fn get(&mut self, c: &[TimeUs]) -> Result<&(WarmupPlan, Vec<Vec<Operator>>)> {
        if !self.cache.contains_key(c) {
            let mut spec = self.spec.clone();
            spec.comm_latency = c.to_vec();
            let plan = adapt_warmup(
                spec.num_stages,
                spec.num_microbatches,
                &spec.profiles,
                &spec.comm_latency,
            )?;
            let orders = generate_schedule(&spec, &plan, &self.gen)?.orders();
            self.cache.insert(c.to_vec(), (plan, orders));
        }
        Ok(&self.cache[c])
    }
}

/// Runs the configured policy over the trace.
pub fn run_campaign(cfg: &CampaignConfig, trace: &[StragglerEvent]) -> Result<CampaignResult> {
    validate_campaign(cfg, trace)?;
    let spec = &cfg.base_spec;
    let base_c = spec.comm_latency.clone();
    let gen = GenConfig::auto(spec);

    let mut planner = PlanCache { spec: spec.clone(), gen, cache: BTreeMap::new() };
    // The schedule in effect at iteration 0 is always planned at base
    // latencies; the static policy never departs from it.
    planner
        .get(&base_c)
        .map_err(|e| Error::Campaign { iter: 0, source: Box::new(e) })?;

    // Penalties charge at each failure event's first iteration inside the run.
    let mut penalty_iters: Vec<u64> = match cfg.policy {
        Policy::Static => trace
            .iter()
            .filter(|e| e.latency == EventLatency::Failure && e.from < cfg.total_iters)
            .map(|e| e.from)
            .collect(),
        Policy::Adaptive => Vec::new(),
    };
    penalty_iters.sort_unstable();

    let mut replay_cache: BTreeMap<(Vec<TimeUs>, Vec<TimeUs>), TimeUs> = BTreeMap::new();
    let mut iterations = Vec::with_capacity(cfg.total_iters as usize);
    let mut cumulative: TimeUs = 0;
    let mut penalties_applied = 0u32;

    for iter in 0..cfg.total_iters {
        let c_run = effective_c(cfg, trace, iter);
        // Latency vector the scheduler has reacted to (lagged observation).
        let c_known = match cfg.policy {
            Policy::Static => base_c.clone(),
            Policy::Adaptive => {
                if iter >= cfg.replan_lag_iters {
                    effective_c(cfg, trace, iter - cfg.replan_lag_iters)
                } else {
                    base_c.clone()
                }
            }
        };

        let (plan, iter_time) = {
            let (plan, orders) = planner
                .get(&c_known)
                .map_err(|e| Error::Campaign { iter, source: Box::new(e) })?;
            let key = (c_known.clone(), c_run.clone());
            let iter_time = match replay_cache.get(&key) {
                Some(&t) => t,
                None => {
                    let mut run_spec = spec.clone();
                    run_spec.comm_latency = c_run.clone();
                    // Links the adaptive policy has reacted to run decoupled;
                    // everything else keeps the bounded launch queue.
                    let decoupled: Vec<bool> = (0..spec.link_count())
                        .map(|l| cfg.policy == Policy::Adaptive && c_known[l] != base_c[l])
                        .collect();
                    let outcome = replay_with_modes(
                        &run_spec,
                        orders,
                        &ReplayConfig {
                            comm: CommModel::SequentialLaunch {
                                queue_capacity: cfg.queue_capacity,
                            },
                            decoupled_links: Some(&decoupled),
                        },
                    )
                    .map_err(|e| Error::Campaign { iter, source: Box::new(e) })?;
                    let t = outcome.timeline.makespan;
                    replay_cache.insert(key, t);
                    t
                }
            };
            (plan.x.clone(), iter_time)
        };

        cumulative += iter_time;
        while penalty_iters.first() == Some(&iter) {
            penalty_iters.remove(0);
            cumulative += cfg.restart_penalty;
            penalties_applied += 1;
        }
        iterations.push(IterationRecord {
            iter,
            c: c_run,
            plan,
            iter_time,
            cumulative,
        });
    }

    let total_time = cumulative;
    let total_microbatches = cfg.total_iters as f64 * spec.num_microbatches as f64;
    let mean_throughput = if total_time > 0 {
        total_microbatches / (total_time as f64 / 1e6)
    } else {
        0.0
    };
    Ok(CampaignResult {
        policy: cfg.policy,
        total_time,
        mean_throughput_mb_per_s: mean_throughput,
        restart_penalties_applied: penalties_applied,
        iterations,
    })
}
