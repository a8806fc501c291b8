//! Frank-Wolfe and stochastic origin Frank-Wolfe on an origin-decomposed
//! flow state.
//!
//! Every update, full or stochastic, goes through [`SolverState::step_blocks`]:
//! a set of origins, one multiplier per origin, and a step rule. Full
//! Frank-Wolfe is the special case "all origins, multiplier 1", which is why
//! SOFW with `fraction = 1` reproduces it bit for bit.

mod gap;
mod run;
mod sampler;
mod store;

pub use gap::{GapReport, GapTracker};
pub use run::{run, IterationRecord, RunResult, StopReason};
pub use sampler::{
    exponential_keys, iteration_rng, sample_size, OriginSample, OriginSampler, SamplerConfig, SamplingMode,
};
pub use store::{check_feasibility, FeasibilityReport, OriginFlowStore, Precision};

use thiserror::Error;

use crate::cost::{self, CostError, DEFAULT_LINE_SEARCH_TOL};
use crate::net::{DemandMatrix, Network};
use crate::shortest_paths::{load_origins, unreachable_pairs, PathError, SpCallCounter};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StepRule {
    #[default]
    LineSearch,
    /// `γ_k = 2 / (k + 2)`.
    Decaying,
    /// `γ_k = 2 / (k + 2|OD|)`.
    Theorem,
    /// Constant step; mostly for tests.
    Fixed(f64),
}

impl StepRule {
    /// Step for iteration `k` when the rule does not depend on the direction.
    pub fn scheduled(self, k: u64, n_pairs: usize) -> Option<f64> {
        match self {
            StepRule::LineSearch => None,
            StepRule::Decaying => Some(2.0 / (k as f64 + 2.0)),
            StepRule::Theorem => Some(2.0 / (k as f64 + 2.0 * n_pairs as f64)),
            StepRule::Fixed(g) => Some(g),
        }
    }
}

/// How the sampled blocks are combined into a direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectionMode {
    /// `d = Σ_{a∈A} (s^(a) − f^(a))`; each sampled block moves by `γ`.
    #[default]
    BlockReplacement,
    /// Importance-weighted average: block `a` moves by `γ W / (|A| w_a)`
    /// with `W = (Σ_{a∈A} 1/w_a)^{-1}`.
    ImportanceWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    FrankWolfe,
    StochasticOrigin,
}

/// Stopping budgets; `None` means unbounded. At least one must be set.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Budget {
    pub max_iter: Option<u64>,
    /// Solver shortest-path calls, initialization included.
    pub sp_calls: Option<u64>,
    /// Solver seconds, checkpoint time excluded.
    pub wall_clock_s: Option<f64>,
    pub rel_gap: Option<f64>,
}

impl Budget {
    pub fn is_set(&self) -> bool {
        self.max_iter.is_some() || self.sp_calls.is_some() || self.wall_clock_s.is_some() || self.rel_gap.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Ignored by full Frank-Wolfe.
    pub sampler: SamplerConfig,
    pub step_rule: StepRule,
    pub direction: DirectionMode,
    pub precision: Precision,
    pub budget: Budget,
    /// Checkpoint spacing in solver shortest-path calls; 0 checkpoints every iteration.
    pub gap_interval: u64,
    pub line_search_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::FrankWolfe,
            sampler: SamplerConfig::default(),
            step_rule: StepRule::LineSearch,
            direction: DirectionMode::BlockReplacement,
            precision: Precision::F64,
            budget: Budget { max_iter: Some(100), ..Budget::default() },
            gap_interval: 0,
            line_search_tol: DEFAULT_LINE_SEARCH_TOL,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !self.budget.is_set() {
            return Err(SolverError::Config("at least one budget must be set".into()));
        }
        let f = self.sampler.fraction;
        if self.method == Method::StochasticOrigin && !(f > 0.0 && f <= 1.0) {
            return Err(SolverError::Config(format!("sampling fraction {f} outside (0, 1]")));
        }
        if let StepRule::Fixed(g) = self.step_rule {
            if !(0.0..=1.0).contains(&g) {
                return Err(SolverError::Config(format!("fixed step {g} outside [0, 1]")));
            }
        }
        if self.line_search_tol.is_nan() || self.line_search_tol <= 0.0 {
            return Err(SolverError::Config("line search tolerance must be positive".into()));
        }
        if let Some(t) = self.budget.wall_clock_s {
            if t.is_nan() || t < 0.0 {
                return Err(SolverError::Config(format!("time budget {t} must be nonnegative")));
            }
        }
        Ok(())
    }
}

/// All-or-nothing loading at free-flow costs, one row per origin.
pub fn init_flows(
    network: &Network,
    demand: &DemandMatrix,
    precision: Precision,
    counter: &mut SpCallCounter,
) -> Result<OriginFlowStore, SolverError> {
    let mut store = OriginFlowStore::zeros(demand.n_origins(), network.n_links(), precision);
    let costs = cost::gradient(network, &vec![0.0; network.n_links()])?;
    let all: Vec<usize> = (0..demand.n_origins()).collect();
    let loads = match load_origins(network, &costs, demand, &all) {
        Ok(l) => l,
        Err(PathError::UnreachableDestination { .. }) => {
            let pairs = unreachable_pairs(network, &costs, demand);
            return Err(PathError::UnreachablePairs(pairs).into());
        }
        Err(e) => return Err(e.into()),
    };
    counter.add(all.len());
    for load in &loads {
        store.set_row(load.origin_index, &load.flow);
    }
    Ok(store)
}

/// Mutable solver state: the origin-decomposed flow plus work counters.
#[derive(Debug, Clone)]
pub struct SolverState<'a> {
    network: &'a Network,
    demand: &'a DemandMatrix,
    store: OriginFlowStore,
    iteration: u64,
    sp_calls: SpCallCounter,
    line_search_tol: f64,
}

impl<'a> SolverState<'a> {
    pub fn new(network: &'a Network, demand: &'a DemandMatrix, precision: Precision) -> Result<Self, SolverError> {
        demand.check_against(network).map_err(|e| SolverError::Config(e.to_string()))?;
        let mut sp_calls = SpCallCounter::default();
        let store = init_flows(network, demand, precision, &mut sp_calls)?;
        Ok(Self { network, demand, store, iteration: 0, sp_calls, line_search_tol: DEFAULT_LINE_SEARCH_TOL })
    }

    pub fn with_line_search_tol(mut self, tol: f64) -> Self {
        self.line_search_tol = tol;
        self
    }

    pub fn network(&self) -> &'a Network {
        self.network
    }

    pub fn demand(&self) -> &'a DemandMatrix {
        self.demand
    }

    pub fn store(&self) -> &OriginFlowStore {
        &self.store
    }

    pub fn into_store(self) -> OriginFlowStore {
        self.store
    }

    pub fn flows(&self) -> &[f64] {
        self.store.total()
    }

    /// Number of completed iterations.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Solver shortest-path calls so far, initialization included.
    pub fn sp_calls(&self) -> u64 {
        self.sp_calls.0
    }

    pub fn objective(&self) -> Result<f64, SolverError> {
        Ok(cost::beckmann_objective(self.network, self.store.total())?)
    }

    /// Full Frank-Wolfe step: every origin, multiplier 1.
    pub fn fw_iteration(&mut self, step_rule: StepRule) -> Result<f64, SolverError> {
        let all: Vec<usize> = (0..self.demand.n_origins()).collect();
        let ones = vec![1.0; all.len()];
        self.step_blocks(&all, &ones, step_rule)
    }

    /// Stochastic origin step: sample, then move the sampled blocks.
    pub fn sofw_iteration(
        &mut self,
        sampler: &OriginSampler,
        step_rule: StepRule,
        direction: DirectionMode,
    ) -> Result<f64, SolverError> {
        let sample = sampler.sample(self.iteration);
        let multipliers = match direction {
            DirectionMode::BlockReplacement => vec![1.0; sample.origins.len()],
            DirectionMode::ImportanceWeighted => importance_multipliers(&sample.weights),
        };
        self.step_blocks(&sample.origins, &multipliers, step_rule)
    }

    /// Moves each listed origin's row towards its all-or-nothing load at the
    /// current costs by `γ · multiplier`. `origins` must be ascending.
    /// Returns `γ`.
    pub fn step_blocks(
        &mut self,
        origins: &[usize],
        multipliers: &[f64],
        step_rule: StepRule,
    ) -> Result<f64, SolverError> {
        debug_assert_eq!(origins.len(), multipliers.len());
        debug_assert!(origins.windows(2).all(|w| w[0] < w[1]));
        let network = self.network;
        let costs = cost::gradient(network, self.store.total())?;
        let loads = load_origins(network, &costs, self.demand, origins)?;
        self.sp_calls.add(origins.len());

        let gamma = match step_rule.scheduled(self.iteration, self.demand.n_pairs()) {
            Some(g) => g,
            None => {
                let mut direction = vec![0.0; network.n_links()];
                for (load, &m) in loads.iter().zip(multipliers) {
                    let row = self.store.row(load.origin_index);
                    for ((d, &s), &x) in direction.iter_mut().zip(&load.flow).zip(&row) {
                        *d += m * (s - x);
                    }
                }
                cost::line_search(network, self.store.total(), &direction, self.line_search_tol)?
            }
        };

        if gamma != 0.0 {
            for (load, &m) in loads.iter().zip(multipliers) {
                self.store.move_row(load.origin_index, &load.flow, gamma * m);
            }
        }
        self.iteration += 1;
        debug_assert!(self.store.reconciliation_error() <= self.store.precision().reconciliation_tolerance());
        Ok(gamma)
    }

    /// Full Frank-Wolfe gap at the current flow; `audit` counts the
    /// shortest-path calls, which are not charged to the solver.
    pub fn fw_gap(&self, audit: &mut SpCallCounter) -> Result<GapReport, SolverError> {
        gap::fw_gap(self.network, self.demand, &self.store, audit)
    }

    /// Gap contribution of origin `a` (index into the demand matrix).
    pub fn block_gap(&self, a: usize, audit: &mut SpCallCounter) -> Result<f64, SolverError> {
        gap::block_gap(self.network, self.demand, &self.store, a, audit)
    }
}

/// `W / (|A| w_a)` for each sampled weight.
pub fn importance_multipliers(weights: &[f64]) -> Vec<f64> {
    let inv_sum: f64 = weights.iter().map(|w| 1.0 / w).sum();
    let big_w = 1.0 / inv_sum;
    let m = weights.len() as f64;
    weights.iter().map(|w| big_w / (m * w)).collect()
}
