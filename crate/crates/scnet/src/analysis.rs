//! Post-equilibrium analysis: endogenous tier prices, firm profits,
//! consumer surplus, social welfare, policy ledger, and shortage detection.

use crate::assembly::{demand_of, IndexMap, StateVector};
use crate::model::{eval_cost, eval_cost_grad, NetworkModel};

/// Flows at or below this magnitude are treated as zero for pricing and
/// shortage detection (reference tables print two decimals).
pub const FLOW_EPS: f64 = 1e-3;

/// Endogenous transaction prices, present only on links carrying flow.
///
/// Layouts mirror the corresponding shipment tables; `p3` (market price)
/// is defined for every (resource, market) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSet {
    /// Owner -> producer, per owner-link slot.
    pub p0: Vec<Option<f64>>,
    /// Producer -> supplier, per producer-link slot.
    pub p1: Vec<Option<f64>>,
    /// Supplier -> market, per supplier-link slot.
    pub p2: Vec<Option<f64>>,
    /// Market clearing price per `(j, k)`.
    pub p3: Vec<f64>,
}

/// Recover tier prices from a converged state.
///
/// On links with flow above `flow_eps`:
/// `p3` is the demand function at the realized demand, `p2 = p3 - chat(x)`,
/// `p1 = lambda2 - d f^{js}/d x^{jm}_s`, and
/// `p0 = psi * lambda1 - d f^{jm}/d x^{in}_{jm}`.
pub fn retrieve_prices(
    model: &NetworkModel,
    index: &IndexMap,
    x: &StateVector,
    flow_eps: f64,
) -> PriceSet {
    let t = &model.topology;
    let d = demand_of(model, index, x);
    let p3: Vec<f64> = (0..t.resources)
        .flat_map(|j| {
            let d = &d;
            (0..t.markets).map(move |k| model.market(j, k).price(d[j * t.markets + k]))
        })
        .collect();

    let mut p2 = vec![None; model.supplier_txn_costs.len()];
    for (j, s) in t.supplier_agents() {
        for tt in 0..t.modes[j] {
            for k in 0..t.markets {
                let flow = x[index.q2(j, s, tt, k)];
                if flow > flow_eps {
                    let chat = eval_cost(model.market_txn(j, s, tt, k), index, x);
                    p2[model.q2_slot(j, s, tt, k)] = Some(p3[j * t.markets + k] - chat);
                }
            }
        }
    }

    let mut p1 = vec![None; model.producer_txn_costs.len()];
    for (j, m) in t.producer_agents() {
        for s in 0..t.suppliers[j] {
            let flow = x[index.q1(j, m, s)];
            if flow > flow_eps {
                let g = eval_cost_grad(model.supplier_op(j, s), index, x, index.q1(j, m, s));
                p1[model.q1_slot(j, m, s)] = Some(x[index.l2(j, s)] - g);
            }
        }
    }

    let mut p0 = vec![None; model.owner_txn_costs.len()];
    for (i, n) in t.owner_agents() {
        for (j, m) in t.producer_agents() {
            let flow = x[index.q0(i, n, j, m)];
            if flow > flow_eps {
                let g = eval_cost_grad(model.producer_op(j, m), index, x, index.q0(i, n, j, m));
                p0[model.q0_slot(i, n, j, m)] = Some(model.psi(i, n, j, m) * x[index.l1(j, m)] - g);
            }
        }
    }

    PriceSet { p0, p1, p2, p3 }
}

/// Per-firm profits at a converged state.
#[derive(Debug, Clone, PartialEq)]
pub struct Profits {
    /// Per owner, rank order.
    pub owners: Vec<f64>,
    /// Per producer, rank order.
    pub producers: Vec<f64>,
    /// Per supplier, rank order.
    pub suppliers: Vec<f64>,
}

fn price_or_zero(p: &[Option<f64>], slot: usize) -> f64 {
    p[slot].unwrap_or(0.0)
}

/// Objective values of each firm's profit at the state, using recovered
/// prices for inter-tier transactions and realized (piecewise) policy
/// payments including the lump component.
pub fn profits(
    model: &NetworkModel,
    index: &IndexMap,
    x: &StateVector,
    prices: &PriceSet,
) -> Profits {
    let t = &model.topology;

    let mut owners = Vec::with_capacity(t.owners.iter().sum());
    for (i, n) in t.owner_agents() {
        let mut revenue = 0.0;
        let mut txn = 0.0;
        let mut total = 0.0;
        for (j, m) in t.producer_agents() {
            let flow = x[index.q0(i, n, j, m)];
            revenue += price_or_zero(&prices.p0, model.q0_slot(i, n, j, m)) * flow;
            txn += eval_cost(model.owner_txn(i, n, j, m), index, x);
            total += flow;
        }
        let op = eval_cost(model.owner_op(i, n), index, x);
        let pay = model.owner_policies[i].payment(total);
        owners.push(revenue - op - txn + pay);
    }

    let mut producers = Vec::with_capacity(t.producers.iter().sum());
    for (j, m) in t.producer_agents() {
        let mut revenue = 0.0;
        let mut txn = 0.0;
        let mut out = 0.0;
        for s in 0..t.suppliers[j] {
            let flow = x[index.q1(j, m, s)];
            revenue += price_or_zero(&prices.p1, model.q1_slot(j, m, s)) * flow;
            txn += eval_cost(model.producer_txn(j, m, s), index, x);
            out += flow;
        }
        let mut inputs = 0.0;
        for (i, n) in t.owner_agents() {
            inputs +=
                price_or_zero(&prices.p0, model.q0_slot(i, n, j, m)) * x[index.q0(i, n, j, m)];
        }
        let op = eval_cost(model.producer_op(j, m), index, x);
        let pay = model.producer_policies[j].payment(out);
        producers.push(revenue - inputs - op - txn + pay);
    }

    let mut suppliers = Vec::with_capacity(t.suppliers.iter().sum());
    for (j, s) in t.supplier_agents() {
        let mut revenue = 0.0;
        let mut txn = 0.0;
        for tt in 0..t.modes[j] {
            for k in 0..t.markets {
                let flow = x[index.q2(j, s, tt, k)];
                revenue += price_or_zero(&prices.p2, model.q2_slot(j, s, tt, k)) * flow;
                txn += eval_cost(model.supplier_txn(j, s, tt, k), index, x);
            }
        }
        let mut inputs = 0.0;
        for m in 0..t.producers[j] {
            inputs += price_or_zero(&prices.p1, model.q1_slot(j, m, s)) * x[index.q1(j, m, s)];
        }
        let op = eval_cost(model.supplier_op(j, s), index, x);
        suppliers.push(revenue - inputs - op - txn);
    }

    Profits {
        owners,
        producers,
        suppliers,
    }
}

/// Consumer surplus per `(j, k)`: the area between the demand curve and the
/// market price up to the realized demand; for the linear demand family
/// this is `(-slope) * d^2 / 2`.
pub fn consumer_surplus(model: &NetworkModel, d: &[f64]) -> Vec<f64> {
    let t = &model.topology;
    (0..t.resources)
        .flat_map(|j| {
            (0..t.markets).map(move |k| {
                let dv = d[j * t.markets + k];
                -model.market(j, k).slope * dv * dv / 2.0
            })
        })
        .collect()
}

/// Profits, surplus, welfare, and the policy ledger for one equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct WelfareReport {
    pub profits: Profits,
    /// Consumer surplus per `(j, k)`.
    pub consumer_surplus: Vec<f64>,
    pub owner_total: f64,
    pub producer_total: f64,
    pub supplier_total: f64,
    pub consumer_total: f64,
    /// Sum of every firm profit and all consumer surplus.
    pub social_welfare: f64,
    /// Incentives disbursed minus taxes collected (realized payments).
    pub net_incentive: f64,
    /// Versus the provided baseline, when one is given.
    pub delta_social_welfare: Option<f64>,
    /// `delta_social_welfare / net_incentive`, absent when the ledger nets
    /// to zero or no baseline was provided.
    pub benefit_cost: Option<f64>,
}

/// Assemble the welfare report; `baseline` enables the delta and
/// benefit-cost entries.
pub fn welfare(
    model: &NetworkModel,
    index: &IndexMap,
    x: &StateVector,
    prices: &PriceSet,
    baseline: Option<&WelfareReport>,
) -> WelfareReport {
    let t = &model.topology;
    let profits = profits(model, index, x, prices);
    let d = demand_of(model, index, x);
    let consumer_surplus = consumer_surplus(model, &d);
    let owner_total: f64 = profits.owners.iter().sum();
    let producer_total: f64 = profits.producers.iter().sum();
    let supplier_total: f64 = profits.suppliers.iter().sum();
    let consumer_total: f64 = consumer_surplus.iter().sum();
    let social_welfare = owner_total + producer_total + supplier_total + consumer_total;

    let mut net_incentive = 0.0;
    for (i, n) in t.owner_agents() {
        let total: f64 = t
            .producer_agents()
            .map(|(j, m)| x[index.q0(i, n, j, m)])
            .sum();
        net_incentive += model.owner_policies[i].payment(total);
    }
    for (j, m) in t.producer_agents() {
        let out: f64 = (0..t.suppliers[j]).map(|s| x[index.q1(j, m, s)]).sum();
        net_incentive += model.producer_policies[j].payment(out);
    }

    let delta_social_welfare = baseline.map(|b| social_welfare - b.social_welfare);
    let benefit_cost = match delta_social_welfare {
        Some(dsw) if net_incentive != 0.0 => Some(dsw / net_incentive),
        _ => None,
    };

    WelfareReport {
        profits,
        consumer_surplus,
        owner_total,
        producer_total,
        supplier_total,
        consumer_total,
        social_welfare,
        net_incentive,
        delta_social_welfare,
        benefit_cost,
    }
}

/// Tier of a severed link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    OwnerToProducer,
    ProducerToSupplier,
    SupplierToMarket,
}

/// A link whose equilibrium flow sits below the zero-flow threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeveredLink {
    pub tier: Tier,
    /// Indices in the shipment order of the tier:
    /// `(i, n, j, m)`, `(j, m, s, 0)`, or `(j, s, t, k)`.
    pub indices: [usize; 4],
}

/// Shortage report: severed links plus the markets fully cut from a product.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortageReport {
    pub severed: Vec<SeveredLink>,
    /// `(j, k)` pairs with no inbound flow at all.
    pub cut_markets: Vec<(usize, usize)>,
}

/// List links with equilibrium flow below `flow_eps` and markets cut from a
/// product entirely.
pub fn detect_shortages(
    model: &NetworkModel,
    index: &IndexMap,
    x: &StateVector,
    flow_eps: f64,
) -> ShortageReport {
    let t = &model.topology;
    let mut severed = Vec::new();
    for (i, n) in t.owner_agents() {
        for (j, m) in t.producer_agents() {
            if x[index.q0(i, n, j, m)] < flow_eps {
                severed.push(SeveredLink {
                    tier: Tier::OwnerToProducer,
                    indices: [i, n, j, m],
                });
            }
        }
    }
    for (j, m) in t.producer_agents() {
        for s in 0..t.suppliers[j] {
            if x[index.q1(j, m, s)] < flow_eps {
                severed.push(SeveredLink {
                    tier: Tier::ProducerToSupplier,
                    indices: [j, m, s, 0],
                });
            }
        }
    }
    let mut cut_markets = Vec::new();
    for j in 0..t.resources {
        for k in 0..t.markets {
            let mut all_cut = true;
            for s in 0..t.suppliers[j] {
                for tt in 0..t.modes[j] {
                    if x[index.q2(j, s, tt, k)] < flow_eps {
                        severed.push(SeveredLink {
                            tier: Tier::SupplierToMarket,
                            indices: [j, s, tt, k],
                        });
                    } else {
                        all_cut = false;
                    }
                }
            }
            if all_cut {
                cut_markets.push((j, k));
            }
        }
    }
    ShortageReport {
        severed,
        cut_markets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::build_index_map;
    use crate::model::{MarketFunction, NetworkModel, Topology};
    use crate::scenarios;

    fn reference_state() -> (NetworkModel, IndexMap, StateVector) {
        let model = scenarios::example_1_1().model;
        let index = build_index_map(&model.topology);
        let x = crate::testutil::table3_state(&index);
        (model, index, x)
    }

    #[test]
    fn prices_at_reference_solution() {
        let (model, index, x) = reference_state();
        let p = retrieve_prices(&model, &index, &x, FLOW_EPS);
        // Market price: intercept minus realized demand.
        assert!((p.p3[0] - 284.015).abs() < 1e-9);
        assert!((p.p3[0] - 284.02).abs() <= 0.05);
        // Supplier sale price on the first link.
        let p2 = p.p2[model.q2_slot(0, 0, 0, 0)].unwrap();
        assert!((p2 - 283.88).abs() <= 0.05, "p2 {p2}");
        // Producer sale price to the first supplier.
        let p1 = p.p1[model.q1_slot(0, 0, 0)].unwrap();
        assert!((p1 - 261.07).abs() <= 0.05, "p1 {p1}");
        // Owner sale price is the conversion-scaled producer shadow price.
        let p0 = p.p0[model.q0_slot(0, 0, 0, 0)].unwrap();
        assert!((p0 - 0.9 * 247.28).abs() < 1e-9);
    }

    #[test]
    fn zero_flow_links_have_no_price() {
        let (model, index, _) = reference_state();
        let x = StateVector::zeros(index.len());
        let p = retrieve_prices(&model, &index, &x, FLOW_EPS);
        assert!(p.p0.iter().all(Option::is_none));
        assert!(p.p1.iter().all(Option::is_none));
        assert!(p.p2.iter().all(Option::is_none));
        assert_eq!(p.p3.len(), 4);
    }

    #[test]
    fn consumer_surplus_closed_form() {
        let model = scenarios::example_1_1().model;
        let cs = consumer_surplus(&model, &[15.98, 0.0, 0.0, 0.0]);
        assert!((cs[0] - 127.6802).abs() < 1e-9);
        assert_eq!(cs[1], 0.0);
    }

    #[test]
    fn consumer_surplus_nonnegative_for_downward_demand() {
        let model = scenarios::example_1_1().model;
        for d in [0.0, 1.0, 10.0, 250.0] {
            assert!(consumer_surplus(&model, &[d, d, d, d])
                .iter()
                .all(|&c| c >= 0.0));
        }
    }

    #[test]
    fn zero_flow_firm_has_zero_profit() {
        let topo = Topology::uniform(1, 1, 1, 1, 1, 1, 0);
        let mut model = NetworkModel::empty(topo);
        model.markets[0] = MarketFunction {
            intercept: 10.0,
            slope: -1.0,
        };
        let index = build_index_map(&model.topology);
        let x = StateVector::zeros(index.len());
        let p = retrieve_prices(&model, &index, &x, FLOW_EPS);
        let pr = profits(&model, &index, &x, &p);
        assert_eq!(pr.owners[0], 0.0);
        assert_eq!(pr.producers[0], 0.0);
        assert_eq!(pr.suppliers[0], 0.0);
    }

    #[test]
    fn welfare_totals_add_up_exactly() {
        let (model, index, x) = reference_state();
        let p = retrieve_prices(&model, &index, &x, FLOW_EPS);
        let w = welfare(&model, &index, &x, &p, None);
        let recomputed = w.profits.owners.iter().sum::<f64>()
            + w.profits.producers.iter().sum::<f64>()
            + w.profits.suppliers.iter().sum::<f64>()
            + w.consumer_surplus.iter().sum::<f64>();
        assert_eq!(w.social_welfare, recomputed);
        assert_eq!(w.net_incentive, 0.0);
        assert_eq!(w.benefit_cost, None);
        assert_eq!(w.delta_social_welfare, None);
    }

    #[test]
    fn transaction_payments_conserve_across_tiers() {
        // Every price*flow recorded as revenue upstream appears as input
        // cost downstream with the opposite sign: summing profits without
        // policies telescopes the transfer terms away.
        let (model, index, x) = reference_state();
        let p = retrieve_prices(&model, &index, &x, FLOW_EPS);
        let pr = profits(&model, &index, &x, &p);
        let t = &model.topology;

        let mut transfers = 0.0; // all p0 and p1 and p2 payments
        let mut costs = 0.0;
        let mut revenue_p2 = 0.0;
        for (i, n) in t.owner_agents() {
            for (j, m) in t.producer_agents() {
                transfers +=
                    price_or_zero(&p.p0, model.q0_slot(i, n, j, m)) * x[index.q0(i, n, j, m)];
            }
            costs += eval_cost(model.owner_op(i, n), &index, &x);
        }
        for (j, m) in t.producer_agents() {
            for s in 0..t.suppliers[j] {
                transfers += price_or_zero(&p.p1, model.q1_slot(j, m, s)) * x[index.q1(j, m, s)];
                costs += eval_cost(model.producer_txn(j, m, s), &index, &x);
            }
        }
        for (j, s) in t.supplier_agents() {
            costs += eval_cost(model.supplier_op(j, s), &index, &x);
            for tt in 0..t.modes[j] {
                for k in 0..t.markets {
                    revenue_p2 +=
                        price_or_zero(&p.p2, model.q2_slot(j, s, tt, k)) * x[index.q2(j, s, tt, k)];
                    costs += eval_cost(model.supplier_txn(j, s, tt, k), &index, &x);
                }
            }
        }
        let total = pr.owners.iter().sum::<f64>()
            + pr.producers.iter().sum::<f64>()
            + pr.suppliers.iter().sum::<f64>();
        // Inter-tier transfers cancel; only the p2 revenue and real costs remain.
        assert!(
            (total - (revenue_p2 - costs)).abs() < 1e-9 * (1.0 + total.abs()),
            "telescoped {total} vs {}",
            revenue_p2 - costs
        );
        let _ = transfers;
    }

    #[test]
    fn shortages_empty_at_reference_solution() {
        let (model, index, x) = reference_state();
        let r = detect_shortages(&model, &index, &x, FLOW_EPS);
        assert!(r.severed.is_empty());
        assert!(r.cut_markets.is_empty());
    }

    #[test]
    fn shortages_report_cut_market() {
        let (model, index, mut x) = reference_state();
        x[index.q2(0, 0, 0, 1)] = 0.0;
        x[index.q2(0, 1, 0, 1)] = 0.0;
        let r = detect_shortages(&model, &index, &x, FLOW_EPS);
        assert_eq!(r.severed.len(), 2);
        assert!(r
            .severed
            .iter()
            .all(|l| l.tier == Tier::SupplierToMarket && l.indices[3] == 1));
        assert_eq!(r.cut_markets, vec![(0, 1)]);
    }
}
