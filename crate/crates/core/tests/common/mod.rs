#![allow(dead_code)]

use std::path::PathBuf;

use assign_core::harness::Dataset;
use assign_core::net::{DemandMatrix, LinkRecord, Network};
use rand::Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn load_dataset(dir: &str, stem: &str) -> Option<Dataset> {
    let base = data_dir().join(dir);
    let net = base.join(format!("{stem}_net.tntp"));
    let trips = base.join(format!("{stem}_trips.tntp"));
    if !net.exists() || !trips.exists() {
        return None;
    }
    Some(Dataset::load(&net, &trips).expect("dataset parses"))
}

pub fn sioux_falls() -> Dataset {
    load_dataset("SiouxFalls", "SiouxFalls").expect("SiouxFalls data shipped in data/")
}

/// Random strongly connected digraph: a Hamiltonian cycle plus `extra` arcs.
pub fn random_graph<R: Rng>(
    rng: &mut R,
    n: usize,
    extra: usize,
    cost: impl Fn(&mut R) -> f64,
) -> Vec<(usize, usize, f64)> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut arcs = Vec::new();
    for i in 0..n {
        let c = cost(rng);
        arcs.push((perm[i], perm[(i + 1) % n], c));
    }
    for _ in 0..extra {
        let u = rng.random_range(0..n);
        let mut v = rng.random_range(0..n);
        while v == u {
            v = rng.random_range(0..n);
        }
        let c = cost(rng);
        arcs.push((u, v, c));
    }
    arcs
}

/// Network over 0-based arcs; BPR parameters are irrelevant when costs are
/// passed explicitly.
pub fn network_of(n: usize, n_zones: usize, first_thru_node: usize, arcs: &[(usize, usize, f64)]) -> Network {
    let records: Vec<LinkRecord> =
        arcs.iter().map(|&(u, v, _)| LinkRecord::new(u + 1, v + 1, 1.0, 1.0, 0.15, 4.0)).collect();
    Network::build(&records, n, n_zones, first_thru_node).unwrap()
}

pub fn bellman_ford(n: usize, arcs: &[(usize, usize, f64)], origin: usize, thru: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    dist[origin] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for &(u, v, c) in arcs {
            if u != origin && !thru(u) {
                continue;
            }
            let cand = dist[u] + c;
            if cand < dist[v] {
                dist[v] = cand;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

/// Cheapest simple path cost by exhaustive DFS. Zones other than the origin
/// may end a path but not be passed through.
pub fn enumerate_min_path(
    n: usize,
    arcs: &[(usize, usize, f64)],
    origin: usize,
    dest: usize,
    thru: impl Fn(usize) -> bool + Copy,
) -> Option<f64> {
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        node: usize,
        dest: usize,
        cost: f64,
        visited: &mut Vec<bool>,
        arcs: &[(usize, usize, f64)],
        origin: usize,
        thru: &dyn Fn(usize) -> bool,
        best: &mut Option<f64>,
    ) {
        if node == dest {
            if best.is_none_or(|b| cost < b) {
                *best = Some(cost);
            }
            return;
        }
        if node != origin && !thru(node) {
            return;
        }
        for &(u, v, c) in arcs {
            if u == node && !visited[v] {
                visited[v] = true;
                dfs(v, dest, cost + c, visited, arcs, origin, thru, best);
                visited[v] = false;
            }
        }
    }
    let mut visited = vec![false; n];
    visited[origin] = true;
    let mut best = None;
    dfs(origin, dest, 0.0, &mut visited, arcs, origin, &thru, &mut best);
    best
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Demand matrix from 1-based `(origin, dest, demand)` triples.
pub fn demand_of(n_zones: usize, pairs: &[(usize, usize, f64)]) -> DemandMatrix {
    DemandMatrix::from_entries(n_zones, pairs.iter().copied()).unwrap()
}
