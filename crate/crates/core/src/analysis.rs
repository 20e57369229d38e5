//! Analytical delay model: absorption condition, regime classification and
//! accumulated-delay estimates.
//!
//! A link with slackness `delta` absorbs a latency `c` without cascading
//! stalls when `t_f[i] + t_b[i] + 2c <= delta * (t_f[i+1] + t_b[i+1])`. Past
//! that point the delay amplifies roughly linearly in the microbatch count.
//! Estimates here are point values with the asymptotic constant taken as 1;
//! callers compare orders and slopes, not exact equality.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{slackness_of, validate_plan, PipelineSpec, WarmupPlan};
use crate::time::{serde_ms, TimeUs};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Absorbed,
    Cascading,
}

/// Classification of one link's injected latency.
///
/// `threshold` is the largest latency the link can absorb; `estimate` is the
/// predicted accumulated delay at the link's current latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRegime {
    pub regime: Regime,
    #[serde(with = "serde_ms")]
    pub threshold_ms: TimeUs,
    #[serde(with = "serde_ms")]
    pub estimate_ms: TimeUs,
}

fn check_link(spec: &PipelineSpec, link: usize) -> Result<()> {
    if link >= spec.link_count() {
        return Err(Error::LinkOutOfRange { link, num_links: spec.link_count() });
    }
    Ok(())
}

/// Whether slackness `delta` absorbs the current latency of `link` without
/// cascading stalls. Zero injected latency is always absorbed.
pub fn absorption_holds(spec: &PipelineSpec, delta: u32, link: usize) -> Result<bool> {
    spec.validate()?;
    check_link(spec, link)?;
    let c = spec.comm_latency[link];
    if c == 0 {
        return Ok(true);
    }
    let lhs = spec.profiles[link].t_f + spec.profiles[link].t_b + 2 * c;
    let rhs = delta as i64 * (spec.profiles[link + 1].t_f + spec.profiles[link + 1].t_b);
    Ok(lhs <= rhs)
}

/// Largest latency satisfying the absorption condition, clamped to zero.
fn absorption_threshold(spec: &PipelineSpec, delta: u32, link: usize) -> TimeUs {
    let budget = delta as i64 * (spec.profiles[link + 1].t_f + spec.profiles[link + 1].t_b)
        - spec.profiles[link].t_f
        - spec.profiles[link].t_b;
    (budget / 2).max(0)
}

/// Classifies the delay regime of `link` under `plan` and estimates the
/// accumulated delay: the latency itself when absorbed, `N*c/(delta+1)`
/// when cascading.
pub fn classify_delay(spec: &PipelineSpec, plan: &WarmupPlan, link: usize) -> Result<DelayRegime> {
    spec.validate()?;
    let violations = validate_plan(spec, plan);
    if !violations.is_empty() {
        return Err(Error::InvalidPlan(violations));
    }
    check_link(spec, link)?;

    let delta = slackness_of(plan)?.delta[link];
    let c = spec.comm_latency[link];
    let absorbed = absorption_holds(spec, delta, link)?;
    let estimate = if absorbed {
        c
    } else {
        spec.num_microbatches as i64 * c / (delta as i64 + 1)
    };
    Ok(DelayRegime {
        regime: if absorbed { Regime::Absorbed } else { Regime::Cascading },
        threshold_ms: absorption_threshold(spec, delta, link),
        estimate_ms: estimate,
    })
}

/// Sum of per-link accumulated-delay estimates: individual straggler
/// contributions add up.
pub fn total_estimate(spec: &PipelineSpec, plan: &WarmupPlan) -> Result<TimeUs> {
    let mut total = 0;
    for link in 0..spec.link_count() {
        total += classify_delay(spec, plan, link)?.estimate_ms;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::ms;

    fn uniform_spec(c0: TimeUs) -> PipelineSpec {
        PipelineSpec::uniform(4, 12, ms(10)).with_comm(vec![c0, 0, 0])
    }

    #[test]
    fn absorption_boundary() {
        assert!(absorption_holds(&uniform_spec(ms(10)), 2, 0).unwrap());
        assert!(!absorption_holds(&uniform_spec(ms(11)), 2, 0).unwrap());
    }

    #[test]
    fn absorption_heterogeneous() {
        let mut spec = PipelineSpec::uniform(2, 12, ms(10)).with_comm(vec![ms(10)]);
        spec.profiles[1].t_f = ms(20);
        spec.profiles[1].t_b = ms(20);
        // 10 + 10 + 20 <= 1 * 40, boundary.
        assert!(absorption_holds(&spec, 1, 0).unwrap());
        spec.comm_latency[0] = ms(11);
        assert!(!absorption_holds(&spec, 1, 0).unwrap());
    }

    #[test]
    fn absorption_rejects_bad_link() {
        let spec = uniform_spec(0);
        assert!(matches!(
            absorption_holds(&spec, 2, 3),
            Err(Error::LinkOutOfRange { link: 3, .. })
        ));
    }

    #[test]
    fn classify_absorbed_at_threshold() {
        let plan = WarmupPlan::new(vec![7, 5, 3, 1]);
        let regime = classify_delay(&uniform_spec(ms(10)), &plan, 0).unwrap();
        assert_eq!(regime.regime, Regime::Absorbed);
        assert_eq!(regime.threshold_ms, ms(10));
        assert_eq!(regime.estimate_ms, ms(10));
    }

    #[test]
    fn classify_cascading_past_threshold() {
        let plan = WarmupPlan::new(vec![7, 5, 3, 1]);
        let regime = classify_delay(&uniform_spec(ms(20)), &plan, 0).unwrap();
        assert_eq!(regime.regime, Regime::Cascading);
        assert_eq!(regime.threshold_ms, ms(10));
        // 12 * 20 / (2 + 1)
        assert_eq!(regime.estimate_ms, ms(80));
    }

    #[test]
    fn classify_zero_latency_is_absorbed_for_any_slackness() {
        for plan in [WarmupPlan::new(vec![7, 5, 3, 1]), WarmupPlan::new(vec![1, 1, 1, 1])] {
            let regime = classify_delay(&uniform_spec(0), &plan, 0).unwrap();
            assert_eq!(regime.regime, Regime::Absorbed);
            assert_eq!(regime.estimate_ms, 0);
        }
    }

    #[test]
    fn uniform_threshold_formula() {
        // threshold = (delta - 1) * t for uniform durations.
        for delta in 1..=6u32 {
            for t_ms in [1, 5, 10, 17] {
                let spec = PipelineSpec::uniform(2, 30, ms(t_ms)).with_comm(vec![0]);
                assert_eq!(
                    absorption_threshold(&spec, delta, 0),
                    (delta as i64 - 1) * ms(t_ms)
                );
            }
        }
    }

    #[test]
    fn total_estimate_sums_links() {
        let spec = PipelineSpec::uniform(4, 12, ms(10)).with_comm(vec![ms(10), ms(10), 0]);
        let plan = WarmupPlan::new(vec![7, 5, 3, 1]);
        assert_eq!(total_estimate(&spec, &plan).unwrap(), ms(20));
        let zero = PipelineSpec::uniform(4, 12, ms(10));
        assert_eq!(total_estimate(&zero, &plan).unwrap(), 0);
    }
}
