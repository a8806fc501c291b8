use crate::net::{DemandMatrix, Network};

/// Storage precision of the per-origin rows. The total is always `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    /// Tolerance for `total == Σ rows`, relative per link.
    pub fn reconciliation_tolerance(self) -> f64 {
        match self {
            Precision::F64 => 1e-6,
            Precision::F32 => 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
enum Rows {
    F64(Vec<f64>),
    F32(Vec<f32>),
}

/// Link flows decomposed by origin: row `a` holds the flow generated by the
/// `a`-th origin of the demand matrix, `total` their sum.
#[derive(Debug, Clone)]
pub struct OriginFlowStore {
    n_links: usize,
    n_origins: usize,
    rows: Rows,
    total: Vec<f64>,
}

impl OriginFlowStore {
    pub fn zeros(n_origins: usize, n_links: usize, precision: Precision) -> Self {
        let rows = match precision {
            Precision::F64 => Rows::F64(vec![0.0; n_origins * n_links]),
            Precision::F32 => Rows::F32(vec![0.0; n_origins * n_links]),
        };
        Self { n_links, n_origins, rows, total: vec![0.0; n_links] }
    }

    pub fn precision(&self) -> Precision {
        match self.rows {
            Rows::F64(_) => Precision::F64,
            Rows::F32(_) => Precision::F32,
        }
    }

    pub fn n_origins(&self) -> usize {
        self.n_origins
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn total(&self) -> &[f64] {
        &self.total
    }

    /// Copy of row `a` widened to `f64`.
    pub fn row(&self, a: usize) -> Vec<f64> {
        let range = a * self.n_links..(a + 1) * self.n_links;
        match &self.rows {
            Rows::F64(r) => r[range].to_vec(),
            Rows::F32(r) => r[range].iter().map(|&x| x as f64).collect(),
        }
    }

    /// Overwrites row `a` and adds it to the total. Used for initialization.
    pub(crate) fn set_row(&mut self, a: usize, values: &[f64]) {
        let range = a * self.n_links..(a + 1) * self.n_links;
        match &mut self.rows {
            Rows::F64(r) => {
                for ((dst, &v), t) in r[range].iter_mut().zip(values).zip(&mut self.total) {
                    *t += v - *dst;
                    *dst = v;
                }
            }
            Rows::F32(r) => {
                for ((dst, &v), t) in r[range].iter_mut().zip(values).zip(&mut self.total) {
                    let stored = v as f32;
                    *t += stored as f64 - *dst as f64;
                    *dst = stored;
                }
            }
        }
    }

    /// Moves row `a` towards `target`: `row ← row + coeff (target − row)`,
    /// adding the realized change to the total.
    pub(crate) fn move_row(&mut self, a: usize, target: &[f64], coeff: f64) {
        let range = a * self.n_links..(a + 1) * self.n_links;
        match &mut self.rows {
            Rows::F64(r) => {
                for ((x, &s), t) in r[range].iter_mut().zip(target).zip(&mut self.total) {
                    let delta = coeff * (s - *x);
                    *x += delta;
                    *t = (*t + delta).max(0.0);
                }
            }
            Rows::F32(r) => {
                for ((x, &s), t) in r[range].iter_mut().zip(target).zip(&mut self.total) {
                    let old = *x as f64;
                    let new = (old + coeff * (s - old)) as f32;
                    *x = new.max(0.0);
                    *t = (*t + (*x as f64 - old)).max(0.0);
                }
            }
        }
    }

    /// Largest per-link deviation `|total − Σ rows|`, relative to `max(1, total)`.
    pub fn reconciliation_error(&self) -> f64 {
        let mut sums = vec![0.0f64; self.n_links];
        for a in 0..self.n_origins {
            for (s, x) in sums.iter_mut().zip(self.row(a)) {
                *s += x;
            }
        }
        sums.iter().zip(&self.total).map(|(s, t)| (s - t).abs() / t.abs().max(1.0)).fold(0.0, f64::max)
    }

    /// Recomputes the total from the rows in ascending origin order.
    pub fn resync_total(&mut self) {
        let mut sums = vec![0.0f64; self.n_links];
        for a in 0..self.n_origins {
            for (s, x) in sums.iter_mut().zip(self.row(a)) {
                *s += x;
            }
        }
        self.total = sums;
    }
}

/// Worst feasibility violation over all rows of a store.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    /// Max over origins and nodes of `|net outflow − required| / d_a`.
    pub max_conservation_error: f64,
    /// Smallest entry across rows and total.
    pub min_flow: f64,
}

impl FeasibilityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_conservation_error <= tol && self.min_flow >= 0.0
    }
}

/// Checks that each row ships exactly its origin's demand.
pub fn check_feasibility(network: &Network, demand: &DemandMatrix, store: &OriginFlowStore) -> FeasibilityReport {
    let mut worst = 0.0f64;
    let mut min_flow = store.total().iter().copied().fold(f64::INFINITY, f64::min);
    let mut balance = vec![0.0f64; network.n_nodes()];
    for (a, od) in demand.origins().iter().enumerate() {
        let row = store.row(a);
        balance.iter_mut().for_each(|b| *b = 0.0);
        for (link, &f) in network.links().iter().zip(&row) {
            min_flow = min_flow.min(f);
            balance[link.tail] += f;
            balance[link.head] -= f;
        }
        // required net outflow: +d_a at the origin, -d_aj at destinations
        balance[od.origin] -= od.total;
        for &(dest, d) in &od.entries {
            balance[dest] += d;
        }
        let scale = od.total.max(f64::MIN_POSITIVE);
        worst = worst.max(balance.iter().map(|b| b.abs()).fold(0.0, f64::max) / scale);
    }
    if min_flow == f64::INFINITY {
        min_flow = 0.0;
    }
    FeasibilityReport { max_conservation_error: worst, min_flow }
}
