//! Static traffic assignment on Beckmann's model.
//!
//! Link costs follow the BPR curve, the equilibrium is the minimizer of the
//! Beckmann potential, and the solvers are classical Frank-Wolfe plus the
//! stochastic origin variant that only recomputes shortest paths for a
//! sample of origins per iteration. The flow is stored decomposed by origin
//! so that unsampled origins can be left untouched.

pub mod cost;
pub mod harness;
pub mod net;
pub mod shortest_paths;
pub mod solver;
pub mod tntp;

pub use net::{DemandMatrix, LinkParams, LinkRecord, Network};
pub use solver::{run, SolverConfig, SolverState};
