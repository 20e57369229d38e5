//! Exact minimum-makespan search over per-stage operator orders on tiny
//! instances, by depth-first branch and bound over active schedules.
//!
//! Branching follows the classic active-schedule generation scheme: find the
//! operator with the earliest possible completion, then branch over every
//! operator on that stage that could start before it. Visited states are
//! memoized on exact event times; a per-stage remaining-work bound prunes
//! dominated branches. Transfers are decoupled (a send never occupies the
//! stage), matching the replay model the witness is verified against.

use std::collections::HashSet;

use crate::error::Error;
use crate::model::{validate_plan, OpKind, Operator, PipelineSpec, WarmupPlan};
use crate::time::TimeUs;
use crate::Result;

pub const MAX_STAGES: usize = 3;
pub const MAX_MICROBATCHES: u32 = 5;

/// Optimal makespan plus one per-stage order achieving it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub makespan: TimeUs,
    pub witness: Vec<Vec<Operator>>,
}

struct Instance {
    s: usize,
    n: usize,
    dur: Vec<[TimeUs; 3]>,
    comm: Vec<TimeUs>,
    /// Forced warm-up forward counts per stage, if constrained.
    warmup: Option<Vec<u32>>,
}

const KF: usize = 0;
const KB: usize = 1;
const KW: usize = 2;

impl Instance {
    fn op_id(&self, stage: usize, mb0: usize, kind: usize) -> usize {
        (stage * self.n + mb0) * 3 + kind
    }

    fn decode(&self, id: usize) -> (usize, usize, usize) {
        let kind = id % 3;
        let rest = id / 3;
        (rest / self.n, rest % self.n, kind)
    }
}

struct Search {
    inst: Instance,
    /// Completion time per op id; unscheduled ops hold `None`.
    end: Vec<Option<TimeUs>>,
    stage_free: Vec<TimeUs>,
    /// Per-stage sequences built so far.
    seq: Vec<Vec<usize>>,
    remaining_work: Vec<TimeUs>,
    done: usize,
    best: TimeUs,
    best_witness: Option<Vec<Vec<usize>>>,
    visited: HashSet<Vec<i64>>,
}

impl Search {
    /// Ready time of `id` if all its dependencies are scheduled.
    fn ready(&self, id: usize) -> Option<TimeUs> {
        let (stage, mb0, kind) = self.inst.decode(id);
        match kind {
            KF => {
                if stage == 0 {
                    Some(0)
                } else {
                    self.end[self.inst.op_id(stage - 1, mb0, KF)]
                        .map(|t| t + self.inst.comm[stage - 1])
                }
            }
            KB => {
                let local = self.end[self.inst.op_id(stage, mb0, KF)]?;
                if stage == self.inst.s - 1 {
                    Some(local)
                } else {
                    let down = self.end[self.inst.op_id(stage + 1, mb0, KB)]?;
                    Some(local.max(down + self.inst.comm[stage]))
                }
            }
            _ => self.end[self.inst.op_id(stage, mb0, KB)],
        }
    }

    /// Whether the warm-up constraint permits appending `id` to its stage.
    fn constraint_allows(&self, id: usize) -> bool {
        let Some(warmup) = &self.inst.warmup else { return true };
        let (stage, _, kind) = self.inst.decode(id);
        let pos = self.seq[stage].len() as u32;
        let x = warmup[stage];
        if pos < x {
            kind == KF
        } else if pos == x {
            kind != KF
        } else {
            true
        }
    }

    fn candidates(&self) -> Vec<(usize, TimeUs, TimeUs)> {
        let mut out = Vec::new();
        for id in 0..self.end.len() {
            if self.end[id].is_some() || !self.constraint_allows(id) {
                continue;
            }
            let Some(ready) = self.ready(id) else { continue };
            let (stage, _, kind) = self.inst.decode(id);
            let start = ready.max(self.stage_free[stage]);
            out.push((id, start, start + self.inst.dur[stage][kind]));
        }
        out
    }

    fn state_key(&self) -> Vec<i64> {
        let mut key = Vec::with_capacity(2 + self.inst.s + self.done * 2);
        for &t in &self.stage_free {
            key.push(t);
        }
        // Ends of scheduled ops that still feed unscheduled successors.
        for id in 0..self.end.len() {
            let Some(end) = self.end[id] else { continue };
            let (stage, mb0, kind) = self.inst.decode(id);
            let live = match kind {
                KF => {
                    (stage + 1 < self.inst.s
                        && self.end[self.inst.op_id(stage + 1, mb0, KF)].is_none())
                        || self.end[self.inst.op_id(stage, mb0, KB)].is_none()
                }
                KB => {
                    (stage > 0 && self.end[self.inst.op_id(stage - 1, mb0, KB)].is_none())
                        || self.end[self.inst.op_id(stage, mb0, KW)].is_none()
                }
                _ => false,
            };
            key.push(id as i64);
            key.push(if live { end } else { -1 });
        }
        key
    }

    fn dfs(&mut self) {
        let current_max = self.stage_free.iter().copied().max().unwrap_or(0);
        // Remaining-work lower bound per stage.
        let lb = (0..self.inst.s)
            .map(|i| self.stage_free[i] + self.remaining_work[i])
            .max()
            .unwrap_or(0)
            .max(current_max);
        if lb >= self.best {
            return;
        }
        if self.done == self.end.len() {
            self.best = current_max;
            self.best_witness = Some(self.seq.clone());
            return;
        }
        if !self.visited.insert(self.state_key()) {
            return;
        }

        let cands = self.candidates();
        let Some(&(_, _, c_star)) = cands.iter().min_by_key(|&&(id, _, ect)| (ect, id)) else {
            return;
        };
        let pivot_stage = cands
            .iter()
            .filter(|&&(_, _, ect)| ect == c_star)
            .map(|&(id, _, _)| self.inst.decode(id).0)
            .min()
            .unwrap();
        // Ops on the pivot stage that could start before the earliest
        // completion; zero-duration ops meeting it exactly also qualify.
        let mut branch: Vec<(usize, TimeUs, TimeUs)> = cands
            .into_iter()
            .filter(|&(id, start, ect)| {
                self.inst.decode(id).0 == pivot_stage && (start < c_star || ect == c_star)
            })
            .collect();
        branch.sort_by_key(|&(id, _, ect)| (ect, id));

        for (id, _, ect) in branch {
            let (stage, _, kind) = self.inst.decode(id);
            self.end[id] = Some(ect);
            let prev_free = self.stage_free[stage];
            self.stage_free[stage] = ect;
            self.remaining_work[stage] -= self.inst.dur[stage][kind];
            self.seq[stage].push(id);
            self.done += 1;

            self.dfs();

            self.done -= 1;
            self.seq[stage].pop();
            self.remaining_work[stage] += self.inst.dur[stage][kind];
            self.stage_free[stage] = prev_free;
            self.end[id] = None;
        }
    }
}

/// Minimum makespan over all dependency-respecting per-stage operator orders,
/// optionally forced to a warm-up prefix. Instances above `MAX_STAGES` x
/// `MAX_MICROBATCHES` are refused.
pub fn optimal_makespan(
    spec: &PipelineSpec,
    plan_constraint: Option<&WarmupPlan>,
) -> Result<OracleResult> {
    spec.validate()?;
    if spec.num_stages > MAX_STAGES || spec.num_microbatches > MAX_MICROBATCHES {
        return Err(Error::OracleInstanceTooLarge {
            stages: spec.num_stages,
            microbatches: spec.num_microbatches,
        });
    }
    if let Some(plan) = plan_constraint {
        let violations = validate_plan(spec, plan);
        if !violations.is_empty() {
            return Err(Error::InvalidPlan(violations));
        }
    }

    let s = spec.num_stages;
    let n = spec.num_microbatches as usize;
    let inst = Instance {
        s,
        n,
        dur: spec.profiles.iter().map(|p| [p.t_f, p.t_b, p.t_w]).collect(),
        comm: spec.comm_latency.clone(),
        warmup: plan_constraint.map(|p| p.x.clone()),
    };
    let remaining_work = (0..s)
        .map(|i| (inst.dur[i][KF] + inst.dur[i][KB] + inst.dur[i][KW]) * n as i64)
        .collect();
    let total = 3 * n * s;
    let mut search = Search {
        inst,
        end: vec![None; total],
        stage_free: vec![0; s],
        seq: vec![Vec::new(); s],
        remaining_work,
        done: 0,
        best: TimeUs::MAX,
        best_witness: None,
        visited: HashSet::new(),
    };
    search.dfs();

    let Some(witness_ids) = search.best_witness else {
        return Err(Error::InfeasiblePlanConstraint);
    };
    let witness = witness_ids
        .into_iter()
        .map(|ids| {
            ids.into_iter()
                .map(|id| {
                    let (stage, mb0, kind) = search.inst.decode(id);
                    let kind = match kind {
                        KF => OpKind::F,
                        KB => OpKind::B,
                        _ => OpKind::W,
                    };
                    Operator::new(kind, stage, (mb0 + 1) as u32)
                })
                .collect()
        })
        .collect();
    Ok(OracleResult { makespan: search.best, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{replay, CommModel};
    use crate::time::ms;

    #[test]
    fn serial_single_stage() {
        let spec = PipelineSpec::uniform(1, 2, ms(10));
        let result = optimal_makespan(&spec, None).unwrap();
        assert_eq!(result.makespan, ms(60));
    }

    #[test]
    fn refuses_large_instances() {
        let spec = PipelineSpec::uniform(4, 2, ms(10));
        assert!(matches!(
            optimal_makespan(&spec, None),
            Err(Error::OracleInstanceTooLarge { .. })
        ));
        let spec = PipelineSpec::uniform(2, 6, ms(10));
        assert!(matches!(
            optimal_makespan(&spec, None),
            Err(Error::OracleInstanceTooLarge { .. })
        ));
    }

    #[test]
    fn witness_replays_to_oracle_value() {
        let spec = PipelineSpec::uniform(2, 3, ms(10)).with_comm(vec![ms(5)]);
        let result = optimal_makespan(&spec, None).unwrap();
        let outcome = replay(&spec, &result.witness, CommModel::Decoupled).unwrap();
        assert_eq!(outcome.timeline.makespan, result.makespan);
    }

    #[test]
    fn plan_constraint_forces_warmup_prefix() {
        let spec = PipelineSpec::uniform(2, 3, ms(10));
        let plan = WarmupPlan::new(vec![3, 1]);
        let result = optimal_makespan(&spec, Some(&plan)).unwrap();
        for (stage, order) in result.witness.iter().enumerate() {
            let x = plan.x[stage] as usize;
            assert!(order[..x].iter().all(|o| o.kind == OpKind::F));
            assert_ne!(order[x].kind, OpKind::F);
        }
        let unconstrained = optimal_makespan(&spec, None).unwrap();
        assert!(unconstrained.makespan <= result.makespan);
    }
}
