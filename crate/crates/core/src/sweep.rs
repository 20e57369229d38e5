//! Latency sweeps: generate one schedule, then replay it under a grid of
//! injected latencies on a single link.
//!
//! Replays are independent, so [`sweep_link`] fans them out across the rayon
//! pool when the `parallel` feature is enabled (the default); output order is
//! by latency value either way. [`sweep_link_seq`] always runs on the calling
//! thread and is the reference path for the benchmarks.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Error;
use crate::executor::{replay, CommModel};
use crate::model::{Operator, PipelineSpec, WarmupPlan};
use crate::scheduler::{generate_schedule, GenConfig};
use crate::time::TimeUs;
use crate::Result;

/// One sweep row: injected latency plus the realized schedule measures.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub c: TimeUs,
    pub makespan: TimeUs,
    pub accumulated_delay: TimeUs,
    pub interior_bubble_rate: f64,
    pub utilization_bubble_rate: f64,
}

fn sweep_setup(
    spec: &PipelineSpec,
    plan: &WarmupPlan,
    cfg: &GenConfig,
    link: usize,
) -> Result<Vec<Vec<Operator>>> {
    if link >= spec.link_count() {
        return Err(Error::LinkOutOfRange { link, num_links: spec.link_count() });
    }
    Ok(generate_schedule(spec, plan, cfg)?.orders())
}

fn sweep_point(
    spec: &PipelineSpec,
    orders: &[Vec<Operator>],
    link: usize,
    c: TimeUs,
    comm: CommModel,
) -> Result<SweepPoint> {
    let mut injected = spec.clone();
    injected.comm_latency[link] = c;
    let outcome = replay(&injected, orders, comm)?;
    Ok(SweepPoint {
        c,
        makespan: outcome.timeline.makespan,
        accumulated_delay: outcome.metrics.accumulated_delay_ms,
        interior_bubble_rate: outcome.metrics.interior_bubble_rate,
        utilization_bubble_rate: outcome.metrics.utilization_bubble_rate,
    })
}

/// Sweeps `link` over `c_values`, replaying the schedule generated from
/// `spec` and `plan` under each latency with decoupled transfers.
pub fn sweep_link(
    spec: &PipelineSpec,
    plan: &WarmupPlan,
    cfg: &GenConfig,
    link: usize,
    c_values: &[TimeUs],
) -> Result<Vec<SweepPoint>> {
    let orders = sweep_setup(spec, plan, cfg, link)?;
    #[cfg(feature = "parallel")]
    {
        c_values
            .par_iter()
            .map(|&c| sweep_point(spec, &orders, link, c, CommModel::Decoupled))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        c_values
            .iter()
            .map(|&c| sweep_point(spec, &orders, link, c, CommModel::Decoupled))
            .collect()
    }
}

/// Sequential variant of [`sweep_link`].
pub fn sweep_link_seq(
    spec: &PipelineSpec,
    plan: &WarmupPlan,
    cfg: &GenConfig,
    link: usize,
    c_values: &[TimeUs],
) -> Result<Vec<SweepPoint>> {
    let orders = sweep_setup(spec, plan, cfg, link)?;
    c_values
        .iter()
        .map(|&c| sweep_point(spec, &orders, link, c, CommModel::Decoupled))
        .collect()
}
