//! Warm-up forward-count planning.
//!
//! [`init_warmup`] distributes a memory-bounded activation budget so that the
//! minimum inter-stage slackness is maximal and as balanced as possible.
//! [`adapt_warmup`] recomputes the counts from profiled compute times and
//! observed link latencies so that every link absorbs its delay, clipped to
//! keep enough forwards for the remaining stages.

use crate::error::Error;
use crate::model::{MemoryModel, StageProfile, WarmupPlan};
use crate::time::TimeUs;
use crate::Result;

/// Memory-bounded initial plan. The first stage holds the maximum number of
/// activations that fit; the remainder decreases stage by stage with
/// slackness spread as evenly as integer arithmetic allows, ending at
/// exactly one warm-up forward on the last stage.
pub fn init_warmup(num_stages: usize, mem: &MemoryModel) -> Result<WarmupPlan> {
    if num_stages < 2 {
        return Err(Error::Precondition(
            "initial planning requires at least 2 stages".into(),
        ));
    }
    mem.validate()?;
    let x_max = mem.max_activations();
    debug_assert!(x_max >= 1);

    let links = (num_stages - 1) as u32;
    let delta_avg = (x_max - 1) / links;
    let remainder = (x_max - 1) % links;

    let mut x = Vec::with_capacity(num_stages);
    x.push(x_max);
    for i in 1..num_stages {
        let delta = if (i as u32) <= remainder { delta_avg + 1 } else { delta_avg };
        x.push(x[i - 1] - delta);
    }
    debug_assert_eq!(*x.last().unwrap(), 1);
    Ok(WarmupPlan::new(x))
}

/// Delay-aware plan. Works backward from one warm-up forward on the last
/// stage; each link gets the smallest slackness that absorbs its observed
/// latency, at least 2, clipped by `N - 2S`.
///
/// The result can exceed `N` on the first stage when several links saturate
/// the clip at once; that case is rejected rather than returned.
pub fn adapt_warmup(
    num_stages: usize,
    num_microbatches: u32,
    profiles: &[StageProfile],
    comm_latency: &[TimeUs],
) -> Result<WarmupPlan> {
    if num_stages < 2 {
        return Err(Error::Precondition(
            "dynamic adaptation requires at least 2 stages".into(),
        ));
    }
    if (num_microbatches as usize) < 2 * num_stages {
        return Err(Error::Precondition(format!(
            "dynamic adaptation requires N >= 2S (N = {num_microbatches}, S = {num_stages})"
        )));
    }
    if profiles.len() != num_stages {
        return Err(Error::Precondition(format!(
            "expected {num_stages} stage profiles, got {}",
            profiles.len()
        )));
    }
    if comm_latency.len() != num_stages - 1 {
        return Err(Error::Precondition(format!(
            "expected {} link latencies, got {}",
            num_stages - 1,
            comm_latency.len()
        )));
    }
    for p in profiles {
        if p.t_f <= 0 || p.t_b <= 0 {
            return Err(Error::Precondition(format!(
                "stage {}: t_f and t_b must be strictly positive",
                p.stage_index
            )));
        }
    }

    let clip = (num_microbatches - 2 * num_stages as u32) as i64;
    let mut x = vec![0u32; num_stages];
    x[num_stages - 1] = 1;
    for i in (0..num_stages - 1).rev() {
        let numer = profiles[i].t_f + profiles[i].t_b + 2 * comm_latency[i];
        let denom = profiles[i + 1].t_f + profiles[i + 1].t_b;
        let required = div_ceil(numer, denom);
        let delta = required.max(2).min(clip) as u32;
        x[i] = x[i + 1] + delta;
    }

    if x[0] > num_microbatches {
        return Err(Error::Precondition(format!(
            "adapted plan needs {} warm-up forwards on stage 0 but only {} microbatches exist",
            x[0], num_microbatches
        )));
    }
    Ok(WarmupPlan::new(x))
}

fn div_ceil(numer: TimeUs, denom: TimeUs) -> TimeUs {
    (numer + denom - 1) / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_plan, PipelineSpec};
    use crate::time::ms;

    #[test]
    fn init_hand_traces() {
        let plan = init_warmup(4, &MemoryModel::new(7, 1)).unwrap();
        assert_eq!(plan.x, vec![7, 5, 3, 1]);
        let plan = init_warmup(4, &MemoryModel::new(8, 1)).unwrap();
        assert_eq!(plan.x, vec![8, 5, 3, 1]);
        let plan = init_warmup(2, &MemoryModel::new(1, 1)).unwrap();
        assert_eq!(plan.x, vec![1, 1]);
    }

    #[test]
    fn init_rejects_degenerate_inputs() {
        assert!(init_warmup(1, &MemoryModel::new(4, 1)).is_err());
        assert!(init_warmup(4, &MemoryModel::new(0, 1)).is_err());
        assert!(init_warmup(4, &MemoryModel::new(1, 2)).is_err());
    }

    #[test]
    fn init_balance_and_terminal_count() {
        for s in 2..=5usize {
            for cap in 1..=12u64 {
                let plan = init_warmup(s, &MemoryModel::new(cap, 1)).unwrap();
                assert_eq!(*plan.x.last().unwrap(), 1, "S={s} cap={cap}");
                let deltas: Vec<u32> = plan.x.windows(2).map(|w| w[0] - w[1]).collect();
                let max = *deltas.iter().max().unwrap();
                let min = *deltas.iter().min().unwrap();
                assert!(max - min <= 1, "S={s} cap={cap}: unbalanced {deltas:?}");
            }
        }
    }

    /// No plan bounded by the same budget has a larger minimum slackness
    /// (exhaustive over monotone plans at small sizes).
    #[test]
    fn init_maximizes_minimum_slackness() {
        fn best_min_slack(x_max: u32, s: usize) -> u32 {
            fn rec(x: &mut Vec<u32>, s: usize, best: &mut u32) {
                if x.len() == s {
                    let min = x.windows(2).map(|w| w[0] - w[1]).min().unwrap();
                    *best = (*best).max(min);
                    return;
                }
                let upper = *x.last().unwrap();
                for next in 1..=upper {
                    x.push(next);
                    rec(x, s, best);
                    x.pop();
                }
            }
            let mut best = 0;
            for x0 in 1..=x_max {
                rec(&mut vec![x0], s, &mut best);
            }
            best
        }

        for s in 2..=5usize {
            for x_max in 1..=12u32 {
                let plan = init_warmup(s, &MemoryModel::new(x_max as u64, 1)).unwrap();
                let min_slack = plan.x.windows(2).map(|w| w[0] - w[1]).min().unwrap();
                assert_eq!(min_slack, (x_max - 1) / (s as u32 - 1));
                assert_eq!(min_slack, best_min_slack(x_max, s), "S={s} x_max={x_max}");
            }
        }
    }

    #[test]
    fn adapt_hand_traces() {
        let profiles: Vec<StageProfile> =
            (0..4).map(|i| StageProfile::uniform(i, ms(10))).collect();
        let plan = adapt_warmup(4, 12, &profiles, &[0, 0, 0]).unwrap();
        assert_eq!(plan.x, vec![7, 5, 3, 1]);
        let plan = adapt_warmup(4, 12, &profiles, &[ms(20), 0, 0]).unwrap();
        assert_eq!(plan.x, vec![8, 5, 3, 1]);
        let plan = adapt_warmup(4, 12, &profiles, &[ms(100), 0, 0]).unwrap();
        assert_eq!(plan.x, vec![9, 5, 3, 1]);
    }

    #[test]
    fn adapt_rejects_small_microbatch_counts() {
        let profiles: Vec<StageProfile> =
            (0..4).map(|i| StageProfile::uniform(i, ms(10))).collect();
        let err = adapt_warmup(4, 7, &profiles, &[0, 0, 0]).unwrap_err();
        assert!(err.to_string().contains("N >= 2S"));
    }

    #[test]
    fn adapt_slackness_meets_requirement_or_clip() {
        let profiles: Vec<StageProfile> =
            (0..4).map(|i| StageProfile::uniform(i, ms(10))).collect();
        for c0 in [0, ms(5), ms(10), ms(20), ms(45), ms(100)] {
            let n = 12u32;
            let plan = adapt_warmup(4, n, &profiles, &[c0, 0, 0]).unwrap();
            let spec = PipelineSpec::uniform(4, n, ms(10)).with_comm(vec![c0, 0, 0]);
            assert!(validate_plan(&spec, &plan).is_empty());
            let delta0 = plan.x[0] - plan.x[1];
            let required = ((ms(20) + 2 * c0) + ms(20) - 1) / ms(20);
            let clip = n - 8;
            assert!(
                delta0 >= required as u32 || delta0 == clip,
                "c0={c0}: delta {delta0}, required {required}, clip {clip}"
            );
        }
    }

    #[test]
    fn adapt_rejects_when_saturated_links_exhaust_microbatches() {
        // Three saturated links at S=4, N=12 would demand x[0] = 13 > N.
        let profiles: Vec<StageProfile> =
            (0..4).map(|i| StageProfile::uniform(i, ms(10))).collect();
        let err = adapt_warmup(4, 12, &profiles, &[ms(500), ms(500), ms(500)]).unwrap_err();
        assert!(err.to_string().contains("warm-up forwards"));
    }
}
