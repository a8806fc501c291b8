use super::{OriginFlowStore, SolverError};
use crate::cost;
use crate::net::{DemandMatrix, Network};
use crate::shortest_paths::{load_origins, SpCallCounter};

/// Frank-Wolfe gap at one flow, with its per-origin decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub objective: f64,
    /// `⟨τ(f), f⟩ − lmo_value`, clamped at zero.
    pub gap: f64,
    /// `objective − gap`, a lower bound on the optimal objective.
    pub lower_bound: f64,
    /// Total system travel time `⟨τ(f), f⟩`.
    pub system_time: f64,
    pub lmo_value: f64,
    /// `⟨τ(f), f^(a) − s^(a)⟩` per origin.
    pub block_gaps: Vec<f64>,
}

pub(super) fn fw_gap(
    network: &Network,
    demand: &DemandMatrix,
    store: &OriginFlowStore,
    audit: &mut SpCallCounter,
) -> Result<GapReport, SolverError> {
    let flows = store.total();
    let objective = cost::beckmann_objective(network, flows)?;
    let costs = cost::gradient(network, flows)?;
    let all: Vec<usize> = (0..demand.n_origins()).collect();
    let loads = load_origins(network, &costs, demand, &all)?;
    audit.add(all.len());

    let system_time = dot(&costs, flows);
    let mut lmo_value = 0.0;
    let mut block_gaps = Vec::with_capacity(loads.len());
    for load in &loads {
        lmo_value += load.lmo_value;
        block_gaps.push(dot(&costs, &store.row(load.origin_index)) - load.lmo_value);
    }
    // rounding can push an exact zero slightly negative
    let gap = (system_time - lmo_value).max(0.0);
    Ok(GapReport { objective, gap, lower_bound: objective - gap, system_time, lmo_value, block_gaps })
}

pub(super) fn block_gap(
    network: &Network,
    demand: &DemandMatrix,
    store: &OriginFlowStore,
    a: usize,
    audit: &mut SpCallCounter,
) -> Result<f64, SolverError> {
    let costs = cost::gradient(network, store.total())?;
    let load = load_origins(network, &costs, demand, &[a])?.remove(0);
    audit.add(1);
    Ok(dot(&costs, &store.row(a)) - load.lmo_value)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Best lower bound seen so far and the relative gap it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapTracker {
    best_lower_bound: f64,
}

impl Default for GapTracker {
    fn default() -> Self {
        Self { best_lower_bound: f64::NEG_INFINITY }
    }
}

impl GapTracker {
    pub fn best_lower_bound(&self) -> f64 {
        self.best_lower_bound
    }

    pub fn observe(&mut self, report: &GapReport) {
        self.best_lower_bound = self.best_lower_bound.max(report.lower_bound);
    }

    /// `(objective − LB*) / LB*`; infinite while no positive bound is known.
    pub fn relative_gap(&self, objective: f64) -> f64 {
        relative_gap(objective, self.best_lower_bound)
    }
}

pub fn relative_gap(objective: f64, lower_bound: f64) -> f64 {
    if lower_bound > 0.0 {
        ((objective - lower_bound) / lower_bound).max(0.0)
    } else {
        f64::INFINITY
    }
}
