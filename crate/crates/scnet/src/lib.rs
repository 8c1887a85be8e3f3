//! Equilibrium computation for four-tier resource supply networks.
//!
//! A network instance couples resource owners, producers, suppliers, and
//! demand markets through shipment flows, shared capacity constraints,
//! conversion and conservation constraints, and piecewise-linear fiscal
//! policies. The equilibrium conditions form a variational inequality
//! over the nonnegative orthant,
//!
//! ```text
//!     find X* >= 0  with  <F(X*), X - X*> >= 0  for all X >= 0,
//! ```
//!
//! where `F` stacks every agent's stationarity row together with the
//! constraint rows of the shared multipliers. For the quadratic cost
//! family used here `F` is affine, so the game Jacobian is constant and
//! the map can be characterised exactly.
//!
//! Module map:
//! - [`model`] — problem declaration: topology, costs, policies, validation;
//! - [`assembly`] — packed iterate layout and the compiled `F` evaluator;
//! - [`solver`] — modified projection (extragradient) method;
//! - [`analysis`] — price recovery, profits, consumer surplus, welfare;
//! - [`diagnostics`] — game Jacobian decomposition and monotonicity class;
//! - [`lcp`] — exhaustive active-set oracle for tiny instances;
//! - [`scenarios`] — bundled ready-to-solve instances;
//! - [`verify`] — independent re-derivations used by the test suites.

pub mod analysis;
pub mod assembly;
pub mod diagnostics;
pub mod lcp;
pub mod model;
pub mod scenarios;
pub mod solver;
pub mod verify;

pub use analysis::{
    consumer_surplus, detect_shortages, profits, retrieve_prices, welfare, PriceSet, SeveredLink,
    WelfareReport,
};
pub use assembly::{
    build_index_map, demand_of, project, vi_residual, Block, FEvaluator, IndexMap, StateVector,
    VarId,
};
pub use diagnostics::{
    classify, jacobian, lowest_eigenvalue, JacobianBundle, MonotonicityClass, MonotonicityVerdict,
};
pub use lcp::{enumerate, solve_exhaustive, AffineMap, Enumeration};
pub use model::{
    Aggregate, Bracket, FlowRef, MarketFunction, NetworkModel, PolicyScheme, QuadraticCost,
    Topology, Violation,
};
pub use solver::{
    auto_step, estimate_lipschitz, solve, Initial, SolveOutcome, SolveStatus, SolverConfig,
    StepRule,
};

#[cfg(test)]
pub(crate) mod testutil {
    use crate::assembly::{IndexMap, StateVector};
    use crate::model::{FlowRef, MarketFunction, NetworkModel, QuadraticCost, Topology};

    /// Single-resource single-agent chain with owner cost x^2, unit
    /// conversion and weight, market price 10 - d. Hand solution:
    /// all flows 10/3, conversion and conservation prices 20/3.
    pub fn minimal_chain() -> NetworkModel {
        let topo = Topology::uniform(1, 1, 1, 1, 1, 1, 0);
        let mut model = NetworkModel::empty(topo);
        let flow = FlowRef::Owner {
            i: 0,
            n: 0,
            j: 0,
            m: 0,
        };
        model.owner_op_costs[0] = QuadraticCost::single_flow(flow, 1.0, 0.0);
        model.markets[0] = MarketFunction {
            intercept: 10.0,
            slope: -1.0,
        };
        model
    }

    /// Reference solution values for the benchmark duopoly scenario.
    pub fn table3_state(index: &IndexMap) -> StateVector {
        let mut x = StateVector::zeros(index.len());
        for i in 0..2 {
            for n in 0..2 {
                for j in 0..2 {
                    for m in 0..2 {
                        x[index.q0(i, n, j, m)] = if j == 0 { 8.88 } else { 9.50 };
                    }
                }
            }
        }
        let q1 = [
            ((0, 0, 0), 13.79),
            ((0, 0, 1), 18.19),
            ((0, 1, 0), 13.79),
            ((0, 1, 1), 18.19),
            ((1, 0, 0), 14.53),
            ((1, 0, 1), 19.65),
            ((1, 1, 0), 14.53),
            ((1, 1, 1), 19.65),
        ];
        for ((j, m, s), v) in q1 {
            x[index.q1(j, m, s)] = v;
        }
        let q2 = [
            ((0, 0, 0), 13.79),
            ((0, 0, 1), 13.79),
            ((0, 1, 0), 18.18),
            ((0, 1, 1), 18.18),
            ((1, 0, 0), 14.53),
            ((1, 0, 1), 14.53),
            ((1, 1, 0), 19.67),
            ((1, 1, 1), 19.67),
        ];
        for ((j, s, k), v) in q2 {
            x[index.q2(j, s, 0, k)] = v;
        }
        for (jm, v) in [
            ((0, 0), 247.28),
            ((0, 1), 247.28),
            ((1, 0), 247.29),
            ((1, 1), 247.29),
        ] {
            x[index.l1(jm.0, jm.1)] = v;
        }
        for (js, v) in [
            ((0, 0), 266.59),
            ((0, 1), 263.64),
            ((1, 0), 267.64),
            ((1, 1), 264.97),
        ] {
            x[index.l2(js.0, js.1)] = v;
        }
        x
    }
}
