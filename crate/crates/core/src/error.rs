use crate::model::PlanViolation;
use crate::time::TimeUs;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid pipeline spec: {0}")]
    InvalidSpec(String),

    #[error("invalid warm-up plan: {}", format_violations(.0))]
    InvalidPlan(Vec<PlanViolation>),

    #[error("{0}")]
    Precondition(String),

    #[error("link index {link} out of range ({num_links} links)")]
    LinkOutOfRange { link: usize, num_links: usize },

    #[error("invalid operator order: {0}")]
    InvalidOrder(String),

    #[error("deadlock at t={time_us}us, blocked frontier: {frontier}")]
    Deadlock { time_us: TimeUs, frontier: String },

    #[error("oracle instance too large: S={stages}, N={microbatches} (limits: S <= 3, N <= 5)")]
    OracleInstanceTooLarge { stages: usize, microbatches: u32 },

    #[error("warm-up plan constraint is infeasible for this instance")]
    InfeasiblePlanConstraint,

    #[error("campaign iteration {iter}: {source}")]
    Campaign {
        iter: u64,
        #[source]
        source: Box<Error>,
    },
}

fn format_violations(violations: &[PlanViolation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
