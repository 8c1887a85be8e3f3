//! Bundled ready-to-solve instances.
//!
//! `example_1_*` share a two-resource duopoly topology (two owners,
//! producers, and suppliers per resource, two markets, one transport mode)
//! and vary capacity, policy, and demand settings; `example_2_*` use an
//! interlinked resource trio with a mixed incentive/tax policy.

use crate::model::{
    Aggregate, Bracket, FlowRef, MarketFunction, NetworkModel, PolicyScheme, QuadraticCost,
    Topology,
};
use crate::solver::{Initial, SolverConfig, StepRule};

/// A named instance plus the solver settings it is meant to run with.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub model: NetworkModel,
    pub solver: SolverConfig,
}

fn duo_solver() -> SolverConfig {
    SolverConfig {
        step: StepRule::Fixed(0.01),
        tolerance: 1e-4,
        max_iters: 2_000_000,
        initial: Initial::Ones,
        trace_every: 0,
        explosion_factor: 1e12,
        safety: 0.9,
    }
}

/// Owner operating cost `a*own^2 + own*other + 2*own` where `own` is the
/// owner's total outflow and `other` sums the outflows of the same-rank
/// owners of every other resource.
fn owner_cost(topo: &Topology, i: usize, n: usize, own_coeff: f64) -> QuadraticCost {
    let all_dests = |ii: usize| -> Vec<(FlowRef, f64)> {
        let mut v = Vec::new();
        for j in 0..topo.resources {
            for m in 0..topo.producers[j] {
                v.push((FlowRef::Owner { i: ii, n, j, m }, 1.0));
            }
        }
        v
    };
    let mut aggregates = vec![Aggregate::of(all_dests(i))];
    let mut quad = vec![(0usize, 0usize, own_coeff)];
    let mut lin = vec![2.0];
    for other in 0..topo.resources {
        if other != i {
            aggregates.push(Aggregate::of(all_dests(other)));
            quad.push((0, aggregates.len() - 1, 1.0));
            lin.push(0.0);
        }
    }
    QuadraticCost {
        aggregates,
        quad,
        lin,
        constant: 0.0,
    }
}

/// Supplier operating cost `0.1 * (sum_m x^{jm}_s)^2`.
fn supplier_cost(topo: &Topology, j: usize, s: usize) -> QuadraticCost {
    let terms = (0..topo.producers[j])
        .map(|m| (FlowRef::Producer { j, m, s }, 1.0))
        .collect();
    QuadraticCost {
        aggregates: vec![Aggregate::of(terms)],
        quad: vec![(0, 0, 0.1)],
        lin: vec![0.0],
        constant: 0.0,
    }
}

/// Shared body of the duopoly examples.
fn gloves_base() -> NetworkModel {
    let topo = Topology::uniform(2, 2, 2, 2, 1, 2, 1);
    let mut model = NetworkModel::empty(topo.clone());
    for v in model.conversion.iter_mut() {
        *v = 0.9;
    }
    for w in model.weights.iter_mut() {
        *w = 0.5;
    }
    for mk in model.markets.iter_mut() {
        *mk = MarketFunction {
            intercept: 300.0,
            slope: -1.0,
        };
    }
    for (i, n) in topo.owner_agents() {
        model.owner_op_costs[topo.owner_rank(i, n)] = owner_cost(&topo, i, n, 2.5);
    }
    for (j, m) in topo.producer_agents() {
        for s in 0..topo.suppliers[j] {
            let quad = if s == 0 { 0.5 } else { 0.25 };
            let slot = model.q1_slot(j, m, s);
            model.producer_txn_costs[slot] =
                QuadraticCost::single_flow(FlowRef::Producer { j, m, s }, quad, 0.0);
        }
    }
    for (j, s) in topo.supplier_agents() {
        model.supplier_op_costs[topo.supplier_rank(j, s)] = supplier_cost(&topo, j, s);
        let quad = if j == 0 { 0.5 } else { 0.4 };
        let lin = if s == 0 { 3.5 } else { 2.0 };
        for t in 0..topo.modes[j] {
            for k in 0..topo.markets {
                let slot = model.q2_slot(j, s, t, k);
                let flow = FlowRef::Supplier { j, s, t, k };
                model.supplier_txn_costs[slot] = QuadraticCost::single_flow(flow, quad, lin);
                model.market_txn_costs[slot] = QuadraticCost::single_flow(flow, 0.0, 0.01);
            }
        }
    }
    model
}

/// Unconstrained duopoly benchmark.
pub fn example_1_1() -> Scenario {
    Scenario {
        name: "example_1_1",
        model: gloves_base(),
        solver: duo_solver(),
    }
}

/// Benchmark with a binding shared capacity on the first resource
/// (the standalone value sits at the welfare peak of the capacity sweep).
pub fn example_1_2() -> Scenario {
    let mut model = gloves_base();
    model.capacities[0] = 60.0;
    Scenario {
        name: "example_1_2",
        model,
        solver: duo_solver(),
    }
}

/// Flat-rate incentive on the first resource's owners.
pub fn example_1_3_owner() -> Scenario {
    let mut model = gloves_base();
    model.owner_policies[0] = PolicyScheme::flat(10.0, 1);
    Scenario {
        name: "example_1_3_owner",
        model,
        solver: duo_solver(),
    }
}

/// Flat-rate incentive on the first resource's producers.
pub fn example_1_3_producer() -> Scenario {
    let mut model = gloves_base();
    model.producer_policies[0] = PolicyScheme::flat(10.0, 1);
    Scenario {
        name: "example_1_3_producer",
        model,
        solver: duo_solver(),
    }
}

/// Regressive incentive on the first resource's owners: base rate 11 with a
/// -2.2 marginal adjustment beyond an output of 20.
pub fn example_1_4() -> Scenario {
    let mut model = gloves_base();
    model.owner_policies[0] = PolicyScheme {
        base_rate: 11.0,
        base_lump: 0.0,
        brackets: vec![Bracket {
            threshold: 20.0,
            rate: -2.2,
        }],
    };
    Scenario {
        name: "example_1_4",
        model,
        solver: duo_solver(),
    }
}

/// Distressed variant: a demand surge (intercept 420) for the first
/// resource at the first market severs the second market's supply links.
pub fn example_1_5() -> Scenario {
    let mut model = gloves_base();
    model.markets[0] = MarketFunction {
        intercept: 420.0,
        slope: -1.0,
    };
    Scenario {
        name: "example_1_5",
        model,
        solver: duo_solver(),
    }
}

fn trio_solver() -> SolverConfig {
    SolverConfig {
        step: StepRule::Fixed(0.01),
        tolerance: 1e-6,
        max_iters: 4_000_000,
        initial: Initial::Ones,
        trace_every: 0,
        explosion_factor: 1e12,
        safety: 0.9,
    }
}

/// Shared body of the resource-trio examples.
fn trio_base() -> NetworkModel {
    let topo = Topology::uniform(3, 2, 2, 2, 1, 2, 0);
    let mut model = NetworkModel::empty(topo.clone());
    for v in model.conversion.iter_mut() {
        *v = 0.9;
    }
    for w in model.weights.iter_mut() {
        *w = 0.5;
    }
    for mk in model.markets.iter_mut() {
        *mk = MarketFunction {
            intercept: 300.0,
            slope: -1.0,
        };
    }
    for (i, n) in topo.owner_agents() {
        model.owner_op_costs[topo.owner_rank(i, n)] = owner_cost(&topo, i, n, 2.5);
    }
    for (j, m) in topo.producer_agents() {
        for s in 0..topo.suppliers[j] {
            let quad = if s == 0 { 0.5 } else { 0.25 };
            let slot = model.q1_slot(j, m, s);
            model.producer_txn_costs[slot] =
                QuadraticCost::single_flow(FlowRef::Producer { j, m, s }, quad, 0.0);
        }
    }
    let resource_quad = [0.5, 0.4, 0.45];
    for (j, s) in topo.supplier_agents() {
        model.supplier_op_costs[topo.supplier_rank(j, s)] = supplier_cost(&topo, j, s);
        let lin = if s == 0 { 3.5 } else { 2.0 };
        for t in 0..topo.modes[j] {
            for k in 0..topo.markets {
                let slot = model.q2_slot(j, s, t, k);
                let flow = FlowRef::Supplier { j, s, t, k };
                model.supplier_txn_costs[slot] =
                    QuadraticCost::single_flow(flow, resource_quad[j], lin);
                model.market_txn_costs[slot] = QuadraticCost::single_flow(flow, 0.0, 0.1);
            }
        }
    }
    model
}

/// Resource-trio benchmark, no fiscal policy.
pub fn example_2_benchmark() -> Scenario {
    Scenario {
        name: "example_2_benchmark",
        model: trio_base(),
        solver: trio_solver(),
    }
}

/// Mixed policy: incentive of 12 per unit to the first resource's
/// producers, taxes of 10 per unit on the first resource's owners and 2 per
/// unit on the third resource's producers.
pub fn example_2_policy() -> Scenario {
    let mut model = trio_base();
    model.owner_policies[0] = PolicyScheme::flat(-10.0, 0);
    model.producer_policies[0] = PolicyScheme::flat(12.0, 0);
    model.producer_policies[2] = PolicyScheme::flat(-2.0, 0);
    Scenario {
        name: "example_2_policy",
        model,
        solver: trio_solver(),
    }
}

/// Every bundled scenario, in canonical order.
pub fn all() -> Vec<Scenario> {
    vec![
        example_1_1(),
        example_1_2(),
        example_1_3_owner(),
        example_1_3_producer(),
        example_1_4(),
        example_1_5(),
        example_2_benchmark(),
        example_2_policy(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_bundled_models_validate() {
        for sc in all() {
            let v = sc.model.validate();
            assert!(v.is_empty(), "{}: {v:?}", sc.name);
        }
    }

    #[test]
    fn bundled_names_are_unique() {
        let mut names: Vec<_> = all().iter().map(|s| s.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 8);
    }
}
