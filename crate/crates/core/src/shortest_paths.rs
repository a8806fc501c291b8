//! One-to-all shortest paths and all-or-nothing loading.
//!
//! The all-or-nothing (AON) load at the current link costs is the linear
//! minimization oracle of every solver in [`crate::solver`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use thiserror::Error;

use crate::net::{DemandMatrix, Network};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("link {link}: cost {cost} is negative or not finite")]
    NonPositiveCost { link: usize, cost: f64 },
    #[error("destination {destination} unreachable from origin {origin} (1-based ids)")]
    UnreachableDestination { origin: usize, destination: usize },
    #[error("{} OD pairs are unreachable, first: {:?}", .0.len(), .0.first())]
    UnreachablePairs(Vec<(usize, usize)>),
    #[error("cost vector has length {got}, network has {expected} links")]
    LengthMismatch { expected: usize, got: usize },
}

/// Shortest-path tree rooted at one origin.
#[derive(Debug, Clone)]
pub struct SpTree {
    pub origin: usize,
    /// `f64::INFINITY` for unreachable nodes.
    pub dist: Vec<f64>,
    /// Incoming tree link; `None` for the origin and unreachable nodes.
    pub parent_link: Vec<Option<usize>>,
    /// Nodes in the order they were settled (non-decreasing `dist`).
    pub settled: Vec<usize>,
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Binary-heap Dijkstra with lazy deletion.
///
/// Nodes below the first thru node (zones) are never expanded unless they
/// are the origin. Among equal-distance parents the smaller link id wins.
pub fn dijkstra_one_to_all(network: &Network, link_costs: &[f64], origin: usize) -> Result<SpTree, PathError> {
    if link_costs.len() != network.n_links() {
        return Err(PathError::LengthMismatch { expected: network.n_links(), got: link_costs.len() });
    }
    if let Some((link, &cost)) = link_costs.iter().enumerate().find(|(_, c)| !(**c >= 0.0 && c.is_finite())) {
        return Err(PathError::NonPositiveCost { link, cost });
    }
    Ok(dijkstra_unchecked(network, link_costs, origin))
}

pub(crate) fn dijkstra_unchecked(network: &Network, link_costs: &[f64], origin: usize) -> SpTree {
    let n = network.n_nodes();
    let links = network.links();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent_link: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut settled = Vec::with_capacity(n);
    let mut heap = BinaryHeap::with_capacity(n);

    dist[origin] = 0.0;
    heap.push(HeapEntry { dist: 0.0, node: origin });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        done[u] = true;
        settled.push(u);
        if u != origin && !network.is_thru_node(u) {
            continue;
        }
        for &e in network.out_links(u) {
            let v = links[e].head;
            if done[v] {
                continue;
            }
            let nd = d + link_costs[e];
            if nd < dist[v] {
                dist[v] = nd;
                parent_link[v] = Some(e);
                heap.push(HeapEntry { dist: nd, node: v });
            } else if nd == dist[v] && parent_link[v].is_some_and(|p| e < p) {
                parent_link[v] = Some(e);
            }
        }
    }
    SpTree { origin, dist, parent_link, settled }
}

/// Pushes `entries` (0-based destination, demand) back along the tree.
pub fn aon_load_origin(network: &Network, tree: &SpTree, entries: &[(usize, f64)]) -> Result<Vec<f64>, PathError> {
    let mut flow = vec![0.0; network.n_links()];
    aon_load_into(network, tree, entries, &mut flow)?;
    Ok(flow)
}

pub(crate) fn aon_load_into(
    network: &Network,
    tree: &SpTree,
    entries: &[(usize, f64)],
    flow: &mut [f64],
) -> Result<(), PathError> {
    if entries.is_empty() {
        return Ok(());
    }
    let mut node_load = vec![0.0; network.n_nodes()];
    for &(dest, demand) in entries {
        if !tree.dist[dest].is_finite() {
            return Err(PathError::UnreachableDestination { origin: tree.origin + 1, destination: dest + 1 });
        }
        node_load[dest] += demand;
    }
    let links = network.links();
    for &v in tree.settled.iter().rev() {
        let load = node_load[v];
        if load == 0.0 {
            continue;
        }
        if let Some(e) = tree.parent_link[v] {
            flow[e] += load;
            node_load[links[e].tail] += load;
        }
    }
    Ok(())
}

/// `Σ_j d_j · dist[j]` for one origin's demand entries.
pub fn tree_cost(tree: &SpTree, entries: &[(usize, f64)]) -> f64 {
    entries.iter().map(|&(dest, d)| d * tree.dist[dest]).sum()
}

/// AON load and its oracle value for a single origin.
#[derive(Debug, Clone)]
pub struct OriginLoad {
    /// Index into [`DemandMatrix::origins`].
    pub origin_index: usize,
    pub flow: Vec<f64>,
    pub lmo_value: f64,
}

/// Shortest-path tree plus AON load for each listed origin index.
///
/// Origins are evaluated in parallel; the output follows the order of
/// `origin_indices`.
pub fn load_origins(
    network: &Network,
    link_costs: &[f64],
    demand: &DemandMatrix,
    origin_indices: &[usize],
) -> Result<Vec<OriginLoad>, PathError> {
    if link_costs.len() != network.n_links() {
        return Err(PathError::LengthMismatch { expected: network.n_links(), got: link_costs.len() });
    }
    if let Some((link, &cost)) = link_costs.iter().enumerate().find(|(_, c)| !(**c >= 0.0 && c.is_finite())) {
        return Err(PathError::NonPositiveCost { link, cost });
    }
    origin_indices
        .par_iter()
        .map(|&idx| {
            let od = &demand.origins()[idx];
            let tree = dijkstra_unchecked(network, link_costs, od.origin);
            let flow = aon_load_origin(network, &tree, &od.entries)?;
            let lmo_value = tree_cost(&tree, &od.entries);
            Ok(OriginLoad { origin_index: idx, flow, lmo_value })
        })
        .collect()
}

/// Aggregate AON flow over a subset of origins.
#[derive(Debug, Clone)]
pub struct AonResult {
    pub flow: Vec<f64>,
    pub lmo_value: f64,
}

/// Counts one-to-all shortest-path computations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpCallCounter(pub u64);

impl SpCallCounter {
    pub fn add(&mut self, calls: usize) {
        self.0 += calls as u64;
    }
}

/// AON flow summed over `origin_subset` (indices into the demand matrix),
/// reduced in ascending origin order.
pub fn all_or_nothing(
    network: &Network,
    link_costs: &[f64],
    demand: &DemandMatrix,
    origin_subset: &[usize],
    counter: &mut SpCallCounter,
) -> Result<AonResult, PathError> {
    let mut sorted = origin_subset.to_vec();
    sorted.sort_unstable();
    let loads = load_origins(network, link_costs, demand, &sorted)?;
    counter.add(sorted.len());
    let mut flow = vec![0.0; network.n_links()];
    let mut lmo_value = 0.0;
    for load in &loads {
        for (acc, x) in flow.iter_mut().zip(&load.flow) {
            *acc += x;
        }
        lmo_value += load.lmo_value;
    }
    Ok(AonResult { flow, lmo_value })
}

/// Every OD pair that cannot be reached under the thru-node rule, 1-based.
pub fn unreachable_pairs(network: &Network, link_costs: &[f64], demand: &DemandMatrix) -> Vec<(usize, usize)> {
    let per_origin: Vec<Vec<(usize, usize)>> = demand
        .origins()
        .par_iter()
        .map(|od| {
            let tree = dijkstra_unchecked(network, link_costs, od.origin);
            od.entries
                .iter()
                .filter(|(dest, _)| !tree.dist[*dest].is_finite())
                .map(|&(dest, _)| (od.origin + 1, dest + 1))
                .collect()
        })
        .collect();
    per_origin.into_iter().flatten().collect()
}
