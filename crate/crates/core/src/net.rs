//! Immutable road network and demand representations.
//!
//! Node and link ids are dense and 0-based inside the crate. External data
//! (TNTP files, CLI output) uses 1-based node ids; the conversion happens in
//! [`Network::build`] and [`DemandMatrix::from_entries`].

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("link {link}: node id {node} outside [1, {n_nodes}]")]
    NodeIdOutOfRange { link: usize, node: usize, n_nodes: usize },
    #[error("link {link}: capacity must be positive, got {capacity}")]
    NonPositiveCapacity { link: usize, capacity: f64 },
    #[error("link {link}: parameter `{name}` is invalid ({value})")]
    NegativeParameter { link: usize, name: &'static str, value: f64 },
    #[error("link {link}: self-loop at node {node}")]
    SelfLoop { link: usize, node: usize },
    #[error("first thru node {first_thru_node} outside [1, {}]", n_nodes + 1)]
    FirstThruNodeOutOfRange { first_thru_node: usize, n_nodes: usize },
    #[error("zone count {n_zones} exceeds node count {n_nodes}")]
    TooManyZones { n_zones: usize, n_nodes: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemandError {
    #[error("demand entry ({origin}, {destination}): zone id outside [1, {n_zones}]")]
    ZoneOutOfRange { origin: usize, destination: usize, n_zones: usize },
    #[error("demand entry ({origin}, {destination}): invalid demand {value}")]
    InvalidDemand { origin: usize, destination: usize, value: f64 },
    #[error("demand matrix has {demand_zones} zones but the network has {network_zones}")]
    ZoneCountMismatch { demand_zones: usize, network_zones: usize },
}

/// One directed link as it appears in an external data file (1-based node ids).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRecord {
    pub init_node: usize,
    pub term_node: usize,
    pub capacity: f64,
    pub length: f64,
    pub free_flow_time: f64,
    pub b: f64,
    pub power: f64,
    pub speed: f64,
    pub toll: f64,
    pub link_type: i64,
}

impl LinkRecord {
    /// Convenience constructor for the cost-relevant fields.
    pub fn new(init_node: usize, term_node: usize, free_flow_time: f64, capacity: f64, b: f64, power: f64) -> Self {
        Self {
            init_node,
            term_node,
            capacity,
            length: 0.0,
            free_flow_time,
            b,
            power,
            speed: 0.0,
            toll: 0.0,
            link_type: 1,
        }
    }
}

/// Exponent of the congestion term, split so integer powers avoid `powf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BprPower {
    Integer(u32),
    Real(f64),
}

impl BprPower {
    pub fn from_f64(p: f64) -> Self {
        if p.fract() == 0.0 && (0.0..=64.0).contains(&p) {
            BprPower::Integer(p as u32)
        } else {
            BprPower::Real(p)
        }
    }

    pub fn value(self) -> f64 {
        match self {
            BprPower::Integer(n) => n as f64,
            BprPower::Real(p) => p,
        }
    }

    /// `x^p` for `x >= 0`.
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            BprPower::Integer(n) => {
                let mut acc = 1.0;
                for _ in 0..n {
                    acc *= x;
                }
                acc
            }
            BprPower::Real(p) => x.powf(p),
        }
    }

    /// `x^(p+1)` for `x >= 0`.
    #[inline]
    pub fn apply_plus_one(self, x: f64) -> f64 {
        self.apply(x) * x
    }
}

/// Internal link parameters, 0-based node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub tail: usize,
    pub head: usize,
    pub free_flow_time: f64,
    pub capacity: f64,
    pub bpr_coefficient: f64,
    pub bpr_power: BprPower,
    /// Parsed and retained; not part of the cost function.
    pub toll: f64,
    /// Parsed and retained; not part of the cost function.
    pub length: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    pub allow_self_loops: bool,
}

/// Directed graph in CSR form with per-link BPR parameters.
#[derive(Debug, Clone)]
pub struct Network {
    n_nodes: usize,
    n_zones: usize,
    /// 1-based, as in the source data.
    first_thru_node: usize,
    links: Vec<LinkParams>,
    offsets: Vec<usize>,
    adjacency: Vec<usize>,
}

impl Network {
    pub fn build(
        records: &[LinkRecord],
        n_nodes: usize,
        n_zones: usize,
        first_thru_node: usize,
    ) -> Result<Self, NetworkError> {
        Self::build_with(records, n_nodes, n_zones, first_thru_node, BuildOptions::default())
    }

    pub fn build_with(
        records: &[LinkRecord],
        n_nodes: usize,
        n_zones: usize,
        first_thru_node: usize,
        options: BuildOptions,
    ) -> Result<Self, NetworkError> {
        if first_thru_node < 1 || first_thru_node > n_nodes + 1 {
            return Err(NetworkError::FirstThruNodeOutOfRange { first_thru_node, n_nodes });
        }
        if n_zones > n_nodes {
            return Err(NetworkError::TooManyZones { n_zones, n_nodes });
        }

        let mut links = Vec::with_capacity(records.len());
        for (id, r) in records.iter().enumerate() {
            for node in [r.init_node, r.term_node] {
                if node < 1 || node > n_nodes {
                    return Err(NetworkError::NodeIdOutOfRange { link: id, node, n_nodes });
                }
            }
            if r.init_node == r.term_node && !options.allow_self_loops {
                return Err(NetworkError::SelfLoop { link: id, node: r.init_node });
            }
            if r.capacity.is_nan() || r.capacity <= 0.0 || !r.capacity.is_finite() {
                return Err(NetworkError::NonPositiveCapacity { link: id, capacity: r.capacity });
            }
            let checks = [
                ("free_flow_time", r.free_flow_time, r.free_flow_time >= 0.0),
                ("b", r.b, r.b >= 0.0),
                ("power", r.power, r.power >= 1.0),
            ];
            for (name, value, ok) in checks {
                if !ok || !value.is_finite() {
                    return Err(NetworkError::NegativeParameter { link: id, name, value });
                }
            }
            links.push(LinkParams {
                tail: r.init_node - 1,
                head: r.term_node - 1,
                free_flow_time: r.free_flow_time,
                capacity: r.capacity,
                bpr_coefficient: r.b,
                bpr_power: BprPower::from_f64(r.power),
                toll: r.toll,
                length: r.length,
            });
        }

        // Counting sort by tail keeps link-id order within each node.
        let mut offsets = vec![0usize; n_nodes + 1];
        for l in &links {
            offsets[l.tail + 1] += 1;
        }
        for v in 0..n_nodes {
            offsets[v + 1] += offsets[v];
        }
        let mut cursor = offsets.clone();
        let mut adjacency = vec![0usize; links.len()];
        for (id, l) in links.iter().enumerate() {
            adjacency[cursor[l.tail]] = id;
            cursor[l.tail] += 1;
        }

        Ok(Self { n_nodes, n_zones, first_thru_node, links, offsets, adjacency })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn n_zones(&self) -> usize {
        self.n_zones
    }

    /// First thru node in the 1-based convention of the data files.
    pub fn first_thru_node(&self) -> usize {
        self.first_thru_node
    }

    /// True if `node` (0-based) may appear as an intermediate node of a path.
    #[inline]
    pub fn is_thru_node(&self, node: usize) -> bool {
        node + 1 >= self.first_thru_node
    }

    pub fn links(&self) -> &[LinkParams] {
        &self.links
    }

    #[inline]
    pub fn link(&self, id: usize) -> &LinkParams {
        &self.links[id]
    }

    /// Outgoing link ids of `node` in ascending link-id order.
    #[inline]
    pub fn out_links(&self, node: usize) -> &[usize] {
        &self.adjacency[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

/// Demand of a single origin, destinations ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginDemand {
    /// 0-based node id.
    pub origin: usize,
    /// `(destination, demand)` pairs with 0-based destinations.
    pub entries: Vec<(usize, f64)>,
    pub total: f64,
}

/// Origin-destination demand grouped by origin.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandMatrix {
    n_zones: usize,
    origins: Vec<OriginDemand>,
    grand_total: f64,
    n_pairs: usize,
    dropped_diagonal: usize,
    dropped_zero: usize,
}

impl DemandMatrix {
    /// Assemble from 1-based `(origin, destination, demand)` triples.
    ///
    /// Zero entries and entries with origin = destination are dropped and
    /// counted; duplicates are summed.
    pub fn from_entries<I>(n_zones: usize, entries: I) -> Result<Self, DemandError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut acc: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
        let mut dropped_diagonal = 0;
        let mut dropped_zero = 0;
        for (origin, destination, value) in entries {
            if origin < 1 || origin > n_zones || destination < 1 || destination > n_zones {
                return Err(DemandError::ZoneOutOfRange { origin, destination, n_zones });
            }
            if !value.is_finite() || value < 0.0 {
                return Err(DemandError::InvalidDemand { origin, destination, value });
            }
            if value == 0.0 {
                dropped_zero += 1;
                continue;
            }
            if origin == destination {
                dropped_diagonal += 1;
                continue;
            }
            *acc.entry(origin - 1).or_default().entry(destination - 1).or_insert(0.0) += value;
        }

        let mut origins = Vec::with_capacity(acc.len());
        let mut n_pairs = 0;
        for (origin, dests) in acc {
            let entries: Vec<(usize, f64)> = dests.into_iter().collect();
            let total = entries.iter().map(|&(_, d)| d).sum();
            n_pairs += entries.len();
            origins.push(OriginDemand { origin, entries, total });
        }
        let grand_total = origins.iter().map(|o| o.total).sum();
        if dropped_diagonal > 0 {
            log::warn!("dropped {dropped_diagonal} intrazonal demand entries");
        }
        Ok(Self { n_zones, origins, grand_total, n_pairs, dropped_diagonal, dropped_zero })
    }

    pub fn n_zones(&self) -> usize {
        self.n_zones
    }

    pub fn origins(&self) -> &[OriginDemand] {
        &self.origins
    }

    pub fn n_origins(&self) -> usize {
        self.origins.len()
    }

    /// Number of OD pairs with positive demand.
    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn grand_total(&self) -> f64 {
        self.grand_total
    }

    pub fn dropped_diagonal(&self) -> usize {
        self.dropped_diagonal
    }

    pub fn dropped_zero(&self) -> usize {
        self.dropped_zero
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn check_against(&self, network: &Network) -> Result<(), DemandError> {
        if self.n_zones > network.n_zones() {
            return Err(DemandError::ZoneCountMismatch {
                demand_zones: self.n_zones,
                network_zones: network.n_zones(),
            });
        }
        Ok(())
    }
}
