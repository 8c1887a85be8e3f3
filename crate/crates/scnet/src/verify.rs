//! Independent re-derivations of the equilibrium map, used by the test
//! suites to cross-check the compiled evaluator. Nothing here shares the
//! row-compilation path of [`crate::assembly::FEvaluator`]: cost terms are
//! evaluated through the cost objects directly (values and, where wanted,
//! central finite differences), and the per-tier variational forms are
//! rebuilt agent by agent from their defining optimization problems.

use crate::assembly::{demand_of, FEvaluator, IndexMap, StateVector};
use crate::model::{eval_cost, NetworkModel, QuadraticCost};

/// Arbitrary per-link transaction prices for the decomposition identity.
/// The prices cancel pairwise when the four tier forms are summed, so the
/// identity must hold for any values placed here.
#[derive(Debug, Clone)]
pub struct TierPrices {
    /// Per owner-link slot.
    pub p0: Vec<f64>,
    /// Per producer-link slot.
    pub p1: Vec<f64>,
    /// Per supplier-link slot.
    pub p2: Vec<f64>,
}

impl TierPrices {
    pub fn zeros(model: &NetworkModel) -> Self {
        TierPrices {
            p0: vec![0.0; model.owner_txn_costs.len()],
            p1: vec![0.0; model.producer_txn_costs.len()],
            p2: vec![0.0; model.supplier_txn_costs.len()],
        }
    }
}

fn central_diff(cost: &QuadraticCost, index: &IndexMap, x: &StateVector, var: usize) -> f64 {
    let h = 1e-4 * (1.0 + x[var].abs());
    let mut xp = x.clone();
    let mut xm = x.clone();
    xp[var] += h;
    xm[var] -= h;
    (eval_cost(cost, index, &xp) - eval_cost(cost, index, &xm)) / (2.0 * h)
}

/// Owner-tier variational form at `x` against direction point `y`.
pub fn owner_lhs(
    model: &NetworkModel,
    index: &IndexMap,
    x: &StateVector,
    y: &StateVector,
    prices: &TierPrices,
) -> f64 {
    let t = &model.topology;
    let mut acc = 0.0;
    for (i, n) in t.owner_agents() {
        let mut total = 0.0;
        for (j, m) in t.producer_agents() {
            let v = index.q0(i, n, j, m);
            total += x[v];
            let mut row = central_diff(model.owner_op(i, n), index, x, v)
                + central_diff(model.owner_txn(i, n, j, m), index, x, v)
                - prices.p0[model.q0_slot(i, n, j, m)]
                - model.owner_policies[i].base_rate
                + x[index.l0(i)];
            for g in 0..t.brackets {
                row += x[index.m0(i, n, g)];
            }
            acc += row * (y[v] - x[v]);
        }
        for g in 0..t.brackets {
            let dv = index.d0(i, n, g);
            let row = -model.owner_policies[i].brackets[g].rate - x[index.m0(i, n, g)];
            acc += row * (y[dv] - x[dv]);
            let mv = index.m0(i, n, g);
            let row = model.owner_policies[i].brackets[g].threshold - total + x[dv];
            acc += row * (y[mv] - x[mv]);
        }
    }
    for i in 0..t.resources {
        let lv = index.l0(i);
        let mut shipped = 0.0;
        for n in 0..t.owners[i] {
            for (j, m) in t.producer_agents() {
                shipped += x[index.q0(i, n, j, m)];
            }
        }
        acc += (model.capacities[i] - shipped) * (y[lv] - x[lv]);
    }
    acc
}

/// Producer-tier variational form.
pub fn producer_lhs(
    model: &NetworkModel,
    index: &IndexMap,
    x: &StateVector,
    y: &StateVector,
    prices: &TierPrices,
) -> f64 {
    let t = &model.topology;
    let mut acc = 0.0;
    for (j, m) in t.producer_agents() {
        for (i, n) in t.owner_agents() {
            let v = index.q0(i, n, j, m);
            let row = central_diff(model.producer_op(j, m), index, x, v)
                + prices.p0[model.q0_slot(i, n, j, m)]
                - model.psi(i, n, j, m) * x[index.l1(j, m)];
            acc += row * (y[v] - x[v]);
        }
        let mut out = 0.0;
        for s in 0..t.suppliers[j] {
            let v = index.q1(j, m, s);
            out += x[v];
            let mut row = central_diff(model.producer_txn(j, m, s), index, x, v)
                - prices.p1[model.q1_slot(j, m, s)]
                - model.producer_policies[j].base_rate
                + x[index.l1(j, m)];
            for g in 0..t.brackets {
                row += x[index.m1(j, m, g)];
            }
            acc += row * (y[v] - x[v]);
        }
        for g in 0..t.brackets {
            let dv = index.d1(j, m, g);
            acc += (-model.producer_policies[j].brackets[g].rate - x[index.m1(j, m, g)])
                * (y[dv] - x[dv]);
            let mv = index.m1(j, m, g);
            acc +=
                (model.producer_policies[j].brackets[g].threshold - out + x[dv]) * (y[mv] - x[mv]);
        }
        let lv = index.l1(j, m);
        let mut converted = 0.0;
        for (i, n) in t.owner_agents() {
            converted += model.psi(i, n, j, m) * x[index.q0(i, n, j, m)];
        }
        acc += (converted - out) * (y[lv] - x[lv]);
    }
    acc
}

/// Supplier-tier variational form.
pub fn supplier_lhs(
    model: &NetworkModel,
    index: &IndexMap,
    x: &StateVector,
    y: &StateVector,
    prices: &TierPrices,
) -> f64 {
    let t = &model.topology;
    let mut acc = 0.0;
    for (j, s) in t.supplier_agents() {
        let mut outbound = 0.0;
        for tt in 0..t.modes[j] {
            for k in 0..t.markets {
                let v = index.q2(j, s, tt, k);
                outbound += x[v];
                let row = central_diff(model.supplier_txn(j, s, tt, k), index, x, v)
                    - prices.p2[model.q2_slot(j, s, tt, k)]
                    + x[index.l2(j, s)];
                acc += row * (y[v] - x[v]);
            }
        }
        let mut inbound = 0.0;
        for m in 0..t.producers[j] {
            let v = index.q1(j, m, s);
            inbound += x[v];
            let row = central_diff(model.supplier_op(j, s), index, x, v)
                + prices.p1[model.q1_slot(j, m, s)]
                - x[index.l2(j, s)];
            acc += row * (y[v] - x[v]);
        }
        let lv = index.l2(j, s);
        acc += (inbound - outbound) * (y[lv] - x[lv]);
    }
    acc
}

/// Market-tier variational form in its spatial-price shape, with demand
/// substituted from the shipments.
pub fn market_lhs(
    model: &NetworkModel,
    index: &IndexMap,
    x: &StateVector,
    y: &StateVector,
    prices: &TierPrices,
) -> f64 {
    let t = &model.topology;
    let d = demand_of(model, index, x);
    let mut acc = 0.0;
    for (j, s) in t.supplier_agents() {
        for tt in 0..t.modes[j] {
            for k in 0..t.markets {
                let v = index.q2(j, s, tt, k);
                let row = prices.p2[model.q2_slot(j, s, tt, k)]
                    + eval_cost(model.market_txn(j, s, tt, k), index, x)
                    - model.market(j, k).price(d[j * t.markets + k]);
                acc += row * (y[v] - x[v]);
            }
        }
    }
    acc
}

/// Sum of the four tier forms; equals `<F(x), y - x>` for any prices.
pub fn sum_of_parts(
    model: &NetworkModel,
    index: &IndexMap,
    x: &StateVector,
    y: &StateVector,
    prices: &TierPrices,
) -> f64 {
    owner_lhs(model, index, x, y, prices)
        + producer_lhs(model, index, x, y, prices)
        + supplier_lhs(model, index, x, y, prices)
        + market_lhs(model, index, x, y, prices)
}

/// `<F(x), y - x>` through the compiled evaluator.
pub fn combined_inner(ev: &FEvaluator, x: &StateVector, y: &StateVector) -> f64 {
    let f = ev.evaluate(x);
    f.iter().enumerate().map(|(i, fi)| fi * (y[i] - x[i])).sum()
}

/// Rebuild every map row independently: cost terms by central finite
/// differences of the cost values, policy and multiplier terms from their
/// defining formulas.
pub fn finite_difference_rows(model: &NetworkModel, index: &IndexMap, x: &StateVector) -> Vec<f64> {
    let t = &model.topology;
    let mut f = vec![0.0; index.len()];
    let d = demand_of(model, index, x);
    for (i, n) in t.owner_agents() {
        let mut total = 0.0;
        for (j, m) in t.producer_agents() {
            total += x[index.q0(i, n, j, m)];
        }
        for (j, m) in t.producer_agents() {
            let v = index.q0(i, n, j, m);
            let mut row = central_diff(model.owner_op(i, n), index, x, v)
                + central_diff(model.producer_op(j, m), index, x, v)
                + central_diff(model.owner_txn(i, n, j, m), index, x, v)
                - model.owner_policies[i].base_rate
                + x[index.l0(i)]
                - model.psi(i, n, j, m) * x[index.l1(j, m)];
            for g in 0..t.brackets {
                row += x[index.m0(i, n, g)];
            }
            f[v] = row;
        }
        for g in 0..t.brackets {
            f[index.d0(i, n, g)] = -model.owner_policies[i].brackets[g].rate - x[index.m0(i, n, g)];
            f[index.m0(i, n, g)] =
                model.owner_policies[i].brackets[g].threshold - total + x[index.d0(i, n, g)];
        }
    }
    for (j, m) in t.producer_agents() {
        let mut out = 0.0;
        for s in 0..t.suppliers[j] {
            out += x[index.q1(j, m, s)];
        }
        for s in 0..t.suppliers[j] {
            let v = index.q1(j, m, s);
            let mut row = central_diff(model.supplier_op(j, s), index, x, v)
                + central_diff(model.producer_txn(j, m, s), index, x, v)
                - model.producer_policies[j].base_rate
                + x[index.l1(j, m)]
                - x[index.l2(j, s)];
            for g in 0..t.brackets {
                row += x[index.m1(j, m, g)];
            }
            f[v] = row;
        }
        for g in 0..t.brackets {
            f[index.d1(j, m, g)] =
                -model.producer_policies[j].brackets[g].rate - x[index.m1(j, m, g)];
            f[index.m1(j, m, g)] =
                model.producer_policies[j].brackets[g].threshold - out + x[index.d1(j, m, g)];
        }
        let mut converted = 0.0;
        for (i, n) in t.owner_agents() {
            converted += model.psi(i, n, j, m) * x[index.q0(i, n, j, m)];
        }
        f[index.l1(j, m)] = converted - out;
    }
    for (j, s) in t.supplier_agents() {
        let mut outbound = 0.0;
        for tt in 0..t.modes[j] {
            for k in 0..t.markets {
                let v = index.q2(j, s, tt, k);
                outbound += x[v];
                f[v] = central_diff(model.supplier_txn(j, s, tt, k), index, x, v)
                    + eval_cost(model.market_txn(j, s, tt, k), index, x)
                    + x[index.l2(j, s)]
                    - model.market(j, k).price(d[j * t.markets + k]);
            }
        }
        let mut inbound = 0.0;
        for m in 0..t.producers[j] {
            inbound += x[index.q1(j, m, s)];
        }
        f[index.l2(j, s)] = inbound - outbound;
    }
    for i in 0..t.resources {
        let mut shipped = 0.0;
        for n in 0..t.owners[i] {
            for (j, m) in t.producer_agents() {
                shipped += x[index.q0(i, n, j, m)];
            }
        }
        f[index.l0(i)] = model.capacities[i] - shipped;
    }
    f
}

/// A random tiny instance (at most 12 packed variables) with positive
/// definite quadratic costs on every flow block and downward linear demand.
/// Deterministic in the seed; used to cross-check the projection solver
/// against the exhaustive oracle.
pub fn random_tiny_instance(seed: u64) -> NetworkModel {
    use crate::model::{FlowRef, MarketFunction, Topology};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let topo = match seed % 5 {
        0 => Topology::uniform(1, 1, 1, 1, 1, 1, 0),
        1 => Topology::uniform(1, 1, 2, 1, 1, 1, 0),
        2 => Topology::uniform(1, 1, 1, 1, 1, 2, 0),
        3 => Topology::uniform(1, 2, 1, 1, 1, 1, 0),
        _ => Topology::uniform(1, 1, 1, 2, 1, 1, 0),
    };
    let mut model = NetworkModel::empty(topo.clone());
    model.capacities[0] = rng.gen_range(3.0..100.0);
    for v in model.conversion.iter_mut() {
        *v = rng.gen_range(0.5..1.0);
    }
    for w in model.weights.iter_mut() {
        *w = rng.gen_range(0.4..1.0);
    }
    for mk in model.markets.iter_mut() {
        *mk = MarketFunction {
            intercept: rng.gen_range(20.0..60.0),
            slope: -rng.gen_range(0.5..2.0),
        };
    }
    for (i, n) in topo.owner_agents() {
        let total: Vec<_> = topo
            .producer_agents()
            .map(|(j, m)| (FlowRef::Owner { i, n, j, m }, 1.0))
            .collect();
        model.owner_op_costs[topo.owner_rank(i, n)] = QuadraticCost {
            aggregates: vec![crate::model::Aggregate::of(total)],
            quad: vec![(0, 0, rng.gen_range(0.5..3.0))],
            lin: vec![rng.gen_range(0.0..2.0)],
            constant: 0.0,
        };
        for (j, m) in topo.producer_agents() {
            let slot = model.q0_slot(i, n, j, m);
            model.owner_txn_costs[slot] = QuadraticCost::single_flow(
                FlowRef::Owner { i, n, j, m },
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.0..3.0),
            );
        }
    }
    for (j, m) in topo.producer_agents() {
        for s in 0..topo.suppliers[j] {
            let slot = model.q1_slot(j, m, s);
            model.producer_txn_costs[slot] = QuadraticCost::single_flow(
                FlowRef::Producer { j, m, s },
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.0..1.0),
            );
        }
    }
    for (j, s) in topo.supplier_agents() {
        let inflow: Vec<_> = (0..topo.producers[j])
            .map(|m| (FlowRef::Producer { j, m, s }, 1.0))
            .collect();
        model.supplier_op_costs[topo.supplier_rank(j, s)] = QuadraticCost {
            aggregates: vec![crate::model::Aggregate::of(inflow)],
            quad: vec![(0, 0, rng.gen_range(0.05..0.5))],
            lin: vec![0.0],
            constant: 0.0,
        };
        for tt in 0..topo.modes[j] {
            for k in 0..topo.markets {
                let slot = model.q2_slot(j, s, tt, k);
                let flow = FlowRef::Supplier { j, s, t: tt, k };
                model.supplier_txn_costs[slot] = QuadraticCost::single_flow(
                    flow,
                    rng.gen_range(0.1..1.0),
                    rng.gen_range(0.0..3.0),
                );
                model.market_txn_costs[slot] =
                    QuadraticCost::single_flow(flow, 0.0, rng.gen_range(0.0..0.2));
            }
        }
    }
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::build_index_map;
    use crate::scenarios;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> StateVector {
        StateVector::from_vec((0..n).map(|_| rng.gen_range(0.0..scale)).collect())
    }

    #[test]
    fn decomposition_identity_on_benchmark() {
        let model = scenarios::example_1_1().model;
        let ev = FEvaluator::new(&model).unwrap();
        let index = build_index_map(&model.topology);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let x = random_state(&mut rng, index.len(), 40.0);
            let y = random_state(&mut rng, index.len(), 40.0);
            let prices = TierPrices {
                p0: (0..model.owner_txn_costs.len())
                    .map(|_| rng.gen_range(-300.0..300.0))
                    .collect(),
                p1: (0..model.producer_txn_costs.len())
                    .map(|_| rng.gen_range(-300.0..300.0))
                    .collect(),
                p2: (0..model.supplier_txn_costs.len())
                    .map(|_| rng.gen_range(-300.0..300.0))
                    .collect(),
            };
            let parts = sum_of_parts(&model, &index, &x, &y, &prices);
            let combined = combined_inner(&ev, &x, &y);
            let scale = 1.0 + combined.abs();
            assert!(
                (parts - combined).abs() <= 1e-9 * scale,
                "parts {parts} vs combined {combined}"
            );
            // And the identity is price-independent: zero prices give the
            // same value.
            let zero = sum_of_parts(&model, &index, &x, &y, &TierPrices::zeros(&model));
            assert!((zero - combined).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn finite_difference_rows_match_evaluator() {
        let model = scenarios::example_1_2().model;
        let ev = FEvaluator::new(&model).unwrap();
        let index = build_index_map(&model.topology);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let x = random_state(&mut rng, index.len(), 50.0);
            let fd = finite_difference_rows(&model, &index, &x);
            let f = ev.evaluate(&x);
            for i in 0..index.len() {
                assert!(
                    (fd[i] - f[i]).abs() <= 1e-6 * (1.0 + f[i].abs()),
                    "row {i}: fd {} vs analytic {}",
                    fd[i],
                    f[i]
                );
            }
        }
    }
}
