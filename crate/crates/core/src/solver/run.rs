use std::time::{Duration, Instant};

use super::{GapTracker, Method, OriginFlowStore, OriginSampler, SolverConfig, SolverError, SolverState};
use crate::net::{DemandMatrix, Network};
use crate::shortest_paths::SpCallCounter;

/// One checkpoint of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: u64,
    /// Solver time since the start of initialization, checkpoints excluded.
    pub wall_clock_s: f64,
    /// Cumulative solver shortest-path calls.
    pub sp_calls: u64,
    /// Cumulative shortest-path calls spent on gap checkpoints.
    pub audit_sp_calls: u64,
    pub objective: f64,
    pub fw_gap: f64,
    pub rel_gap: f64,
    /// Step of the most recent iteration; 0 at the initial point.
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIter,
    SpBudget,
    WallClock,
    GapTarget,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<IterationRecord>,
    pub store: OriginFlowStore,
    pub stop_reason: StopReason,
}

impl RunResult {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("a run always records its initial point")
    }
}

struct Checkpointer {
    interval: u64,
    next_level: u64,
    tracker: GapTracker,
    audit: SpCallCounter,
}

impl Checkpointer {
    fn record(
        &mut self,
        state: &SolverState<'_>,
        solver_time: Duration,
        step: f64,
        next_cost: u64,
    ) -> Result<IterationRecord, SolverError> {
        let report = state.fw_gap(&mut self.audit)?;
        self.tracker.observe(&report);
        let sp = state.sp_calls();
        // this state stands for every level the next iteration would skip
        while self.interval > 0 && self.next_level < sp + next_cost {
            self.next_level += self.interval;
        }
        Ok(IterationRecord {
            iter: state.iteration(),
            wall_clock_s: solver_time.as_secs_f64(),
            sp_calls: sp,
            audit_sp_calls: self.audit.0,
            objective: report.objective,
            fw_gap: report.gap,
            rel_gap: self.tracker.relative_gap(report.objective),
            step,
        })
    }

    /// Checkpoint now if the next iteration would carry the solver past the
    /// next grid level, so each level is represented by the last state
    /// reached within it.
    fn due(&self, sp_calls: u64, next_cost: u64) -> bool {
        self.interval == 0 || sp_calls + next_cost > self.next_level
    }
}

/// Runs one configured solver until a budget is exhausted.
pub fn run(network: &Network, demand: &DemandMatrix, config: &SolverConfig) -> Result<RunResult, SolverError> {
    config.validate()?;
    let budget = config.budget;

    let start = Instant::now();
    let mut state = SolverState::new(network, demand, config.precision)?.with_line_search_tol(config.line_search_tol);
    let mut solver_time = start.elapsed();

    let sampler = match config.method {
        Method::FrankWolfe => None,
        Method::StochasticOrigin => Some(OriginSampler::new(config.sampler, demand)),
    };
    let cost_per_iter = sampler.as_ref().map_or(demand.n_origins(), |s| s.size()) as u64;

    let mut ckpt = Checkpointer {
        interval: config.gap_interval,
        next_level: state.sp_calls(),
        tracker: GapTracker::default(),
        audit: SpCallCounter::default(),
    };
    let mut records = vec![ckpt.record(&state, solver_time, 0.0, cost_per_iter)?];
    let target_reached = |r: &IterationRecord| budget.rel_gap.is_some_and(|t| r.rel_gap <= t);
    if target_reached(&records[0]) {
        return Ok(RunResult { records, store: state.into_store(), stop_reason: StopReason::GapTarget });
    }

    let mut last_step = 0.0;
    let mut checkpointed = true;
    let stop_reason = loop {
        if budget.max_iter.is_some_and(|m| state.iteration() >= m) {
            break StopReason::MaxIter;
        }
        if budget.sp_calls.is_some_and(|b| state.sp_calls() + cost_per_iter > b) {
            break StopReason::SpBudget;
        }
        if budget.wall_clock_s.is_some_and(|t| solver_time.as_secs_f64() >= t) {
            break StopReason::WallClock;
        }
        if cost_per_iter == 0 {
            // nothing to route
            break StopReason::MaxIter;
        }

        let t = Instant::now();
        last_step = match &sampler {
            None => state.fw_iteration(config.step_rule)?,
            Some(s) => state.sofw_iteration(s, config.step_rule, config.direction)?,
        };
        solver_time += t.elapsed();
        checkpointed = false;

        if ckpt.due(state.sp_calls(), cost_per_iter) {
            let rec = ckpt.record(&state, solver_time, last_step, cost_per_iter)?;
            checkpointed = true;
            let done = target_reached(&rec);
            records.push(rec);
            if done {
                break StopReason::GapTarget;
            }
        }
    };

    if !checkpointed {
        records.push(ckpt.record(&state, solver_time, last_step, cost_per_iter)?);
    }
    log::debug!(
        "run finished after {} iterations ({:?}), {} solver sp calls",
        state.iteration(),
        stop_reason,
        state.sp_calls()
    );
    Ok(RunResult { records, store: state.into_store(), stop_reason })
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::MaxIter => "max-iter",
            StopReason::SpBudget => "sp-budget",
            StopReason::WallClock => "time-budget",
            StopReason::GapTarget => "gap-target",
        };
        f.write_str(s)
    }
}
