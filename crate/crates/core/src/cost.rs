//! BPR link costs, the Beckmann potential, and exact line search.

use std::ops::Deref;

use thiserror::Error;

use crate::net::{LinkParams, Network};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("negative flow {flow}{}", at(*.link))]
    NegativeFlow { link: Option<usize>, flow: f64 },
    #[error("non-finite value from flow {flow}{}", at(*.link))]
    NonFinite { link: Option<usize>, flow: f64 },
    #[error("flow vector has length {got}, network has {expected} links")]
    LengthMismatch { expected: usize, got: usize },
    #[error("link {link}: endpoint flow {flow} of the search segment is negative")]
    InfeasibleEndpoint { link: usize, flow: f64 },
}

fn at(link: Option<usize>) -> String {
    link.map(|l| format!(" on link {l}")).unwrap_or_default()
}

/// Per-link travel times `τ_e(f_e)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for CostVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for CostVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Travel time without argument checks. `flow` must be nonnegative.
#[inline]
pub(crate) fn travel_time_unchecked(link: &LinkParams, flow: f64) -> f64 {
    let ratio = flow / link.capacity;
    link.free_flow_time * (1.0 + link.bpr_coefficient * link.bpr_power.apply(ratio))
}

#[inline]
fn integral_unchecked(link: &LinkParams, flow: f64) -> f64 {
    let ratio = flow / link.capacity;
    let p1 = link.bpr_power.value() + 1.0;
    link.free_flow_time * flow
        + link.free_flow_time * link.bpr_coefficient * link.capacity / p1 * link.bpr_power.apply_plus_one(ratio)
}

/// BPR travel time `t̄(1 + ρ (f/f̄)^p)`.
pub fn link_travel_time(link: &LinkParams, flow: f64) -> Result<f64, CostError> {
    check_flow(None, flow)?;
    let t = travel_time_unchecked(link, flow);
    if !t.is_finite() {
        return Err(CostError::NonFinite { link: None, flow });
    }
    Ok(t)
}

#[inline]
fn check_flow(link: Option<usize>, flow: f64) -> Result<(), CostError> {
    if flow < 0.0 {
        return Err(CostError::NegativeFlow { link, flow });
    }
    if !flow.is_finite() {
        return Err(CostError::NonFinite { link, flow });
    }
    Ok(())
}

fn check_len(network: &Network, flows: &[f64]) -> Result<(), CostError> {
    if flows.len() != network.n_links() {
        return Err(CostError::LengthMismatch { expected: network.n_links(), got: flows.len() });
    }
    Ok(())
}

/// Beckmann potential `Σ_e ∫_0^{f_e} τ_e(z) dz` in closed form, summed in link-id order.
pub fn beckmann_objective(network: &Network, flows: &[f64]) -> Result<f64, CostError> {
    check_len(network, flows)?;
    let mut total = 0.0;
    for (id, (link, &f)) in network.links().iter().zip(flows).enumerate() {
        check_flow(Some(id), f)?;
        let v = integral_unchecked(link, f);
        if !v.is_finite() {
            return Err(CostError::NonFinite { link: Some(id), flow: f });
        }
        total += v;
    }
    Ok(total)
}

/// Gradient of the potential, i.e. the link travel times at `flows`.
pub fn gradient(network: &Network, flows: &[f64]) -> Result<CostVector, CostError> {
    check_len(network, flows)?;
    let mut out = Vec::with_capacity(flows.len());
    for (id, (link, &f)) in network.links().iter().zip(flows).enumerate() {
        check_flow(Some(id), f)?;
        let t = travel_time_unchecked(link, f);
        if !t.is_finite() {
            return Err(CostError::NonFinite { link: Some(id), flow: f });
        }
        out.push(t);
    }
    Ok(CostVector(out))
}

pub const DEFAULT_LINE_SEARCH_TOL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 64;

/// Relative slack for the segment endpoint `f + d`; rounding in `s - f` can
/// leave entries a few ulps below zero.
const ENDPOINT_SLACK: f64 = 1e-9;

/// Minimizes `φ(γ) = Ψ(f + γ d)` over `[0, 1]` by bisection on
/// `φ'(γ) = ⟨τ(f + γ d), d⟩`.
pub fn line_search(network: &Network, flows: &[f64], direction: &[f64], tol: f64) -> Result<f64, CostError> {
    check_len(network, flows)?;
    check_len(network, direction)?;

    // Only links with a nonzero direction contribute to φ'.
    let mut active = Vec::new();
    for (id, (&f, &d)) in flows.iter().zip(direction).enumerate() {
        check_flow(Some(id), f)?;
        if !d.is_finite() {
            return Err(CostError::NonFinite { link: Some(id), flow: d });
        }
        let end = f + d;
        if end < -ENDPOINT_SLACK * f.abs().max(1.0) {
            return Err(CostError::InfeasibleEndpoint { link: id, flow: end });
        }
        if d != 0.0 {
            active.push(id);
        }
    }
    if active.is_empty() {
        return Ok(0.0);
    }

    let links = network.links();
    let derivative = |gamma: f64| -> f64 {
        active
            .iter()
            .map(|&e| {
                let x = (flows[e] + gamma * direction[e]).max(0.0);
                travel_time_unchecked(&links[e], x) * direction[e]
            })
            .sum()
    };

    let d0 = derivative(0.0);
    if d0 >= 0.0 {
        return Ok(0.0);
    }
    let d1 = derivative(1.0);
    if !d1.is_finite() {
        return Err(CostError::NonFinite { link: None, flow: f64::NAN });
    }
    if d1 <= 0.0 {
        return Ok(1.0);
    }

    let threshold = tol * d0.abs();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut mid = 0.5;
    for _ in 0..MAX_BISECTIONS {
        mid = 0.5 * (lo + hi);
        let dm = derivative(mid);
        if dm.abs() <= threshold {
            break;
        }
        if dm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}
