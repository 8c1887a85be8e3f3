//! CSV and text report writers. Numeric cells carry full precision
//! (17 significant digits) plus a two-decimal companion column; headers are
//! fixed per report type.

use scnet::analysis::{PriceSet, WelfareReport};
use scnet::assembly::{demand_of, IndexMap, StateVector, VarId};
use scnet::diagnostics::MonotonicityVerdict;
use scnet::model::NetworkModel;
use scnet::solver::{SolveOutcome, TracePoint};
use std::fmt::Write as _;

pub const EQUILIBRIUM_HEADER: &str = "variable,i,n,j,m,s,t,k,g,value,value_2dp";
pub const PRICES_HEADER: &str = "price,i,n,j,m,s,t,k,value,value_2dp";
pub const WELFARE_HEADER: &str = "metric,a,b,value,value_2dp";
pub const TRACE_HEADER: &str = "iteration,gap,residual";
pub const SWEEP_HEADER: &str = "target,value,status,owner_profit_total,producer_profit_total,\
supplier_profit_total,consumer_surplus_total,social_welfare,net_incentive,benefit_cost";
pub const COMPARE_HEADER: &str = "metric,a,b,baseline,policy,delta";

/// Full-precision cell: 17 significant digits, deterministic.
pub fn full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Two-decimal companion cell.
pub fn two(v: f64) -> String {
    format!("{v:.2}")
}

fn push_row(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join(","));
    out.push('\n');
}

fn idx(v: usize) -> String {
    (v + 1).to_string()
}

const BLANK: &str = "";

/// Every packed variable with its multi-index, then the derived demands.
pub fn equilibrium_csv(model: &NetworkModel, index: &IndexMap, x: &StateVector) -> String {
    let mut out = String::new();
    out.push_str(EQUILIBRIUM_HEADER);
    out.push('\n');
    let b = BLANK.to_string();
    for flat in 0..index.len() {
        let v = x[flat];
        let (name, cells) = match index.var(flat) {
            VarId::OwnerShipment { i, n, j, m } => (
                "x0",
                [
                    idx(i),
                    idx(n),
                    idx(j),
                    idx(m),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                ],
            ),
            VarId::ProducerShipment { j, m, s } => (
                "x1",
                [
                    b.clone(),
                    b.clone(),
                    idx(j),
                    idx(m),
                    idx(s),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                ],
            ),
            VarId::SupplierShipment { j, s, t, k } => (
                "x2",
                [
                    b.clone(),
                    b.clone(),
                    idx(j),
                    b.clone(),
                    idx(s),
                    idx(t),
                    idx(k),
                    b.clone(),
                ],
            ),
            VarId::OwnerExcess { i, n, g } => (
                "delta0",
                [
                    idx(i),
                    idx(n),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    idx(g),
                ],
            ),
            VarId::ProducerExcess { j, m, g } => (
                "delta1",
                [
                    b.clone(),
                    b.clone(),
                    idx(j),
                    idx(m),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    idx(g),
                ],
            ),
            VarId::CapacityPrice { i } => (
                "lambda0",
                [
                    idx(i),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                ],
            ),
            VarId::ConversionPrice { j, m } => (
                "lambda1",
                [
                    b.clone(),
                    b.clone(),
                    idx(j),
                    idx(m),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                ],
            ),
            VarId::SupplyPrice { j, s } => (
                "lambda2",
                [
                    b.clone(),
                    b.clone(),
                    idx(j),
                    b.clone(),
                    idx(s),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                ],
            ),
            VarId::OwnerBracketPrice { i, n, g } => (
                "mu0",
                [
                    idx(i),
                    idx(n),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    idx(g),
                ],
            ),
            VarId::ProducerBracketPrice { j, m, g } => (
                "mu1",
                [
                    b.clone(),
                    b.clone(),
                    idx(j),
                    idx(m),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    idx(g),
                ],
            ),
        };
        let mut row = vec![name.to_string()];
        row.extend(cells);
        row.push(full(v));
        row.push(two(v));
        push_row(&mut out, &row);
    }
    let t = &model.topology;
    let d = demand_of(model, index, x);
    for j in 0..t.resources {
        for k in 0..t.markets {
            let v = d[j * t.markets + k];
            let row = vec![
                "demand".to_string(),
                b.clone(),
                b.clone(),
                idx(j),
                b.clone(),
                b.clone(),
                b.clone(),
                idx(k),
                b.clone(),
                full(v),
                two(v),
            ];
            push_row(&mut out, &row);
        }
    }
    out
}

/// Recovered prices on positive-flow links plus the market prices.
pub fn prices_csv(model: &NetworkModel, prices: &PriceSet) -> String {
    let t = &model.topology;
    let mut out = String::new();
    out.push_str(PRICES_HEADER);
    out.push('\n');
    let b = BLANK.to_string();
    for (i, n) in t.owner_agents() {
        for (j, m) in t.producer_agents() {
            if let Some(v) = prices.p0[model.q0_slot(i, n, j, m)] {
                push_row(
                    &mut out,
                    &[
                        "p0".into(),
                        idx(i),
                        idx(n),
                        idx(j),
                        idx(m),
                        b.clone(),
                        b.clone(),
                        b.clone(),
                        full(v),
                        two(v),
                    ],
                );
            }
        }
    }
    for (j, m) in t.producer_agents() {
        for s in 0..t.suppliers[j] {
            if let Some(v) = prices.p1[model.q1_slot(j, m, s)] {
                push_row(
                    &mut out,
                    &[
                        "p1".into(),
                        b.clone(),
                        b.clone(),
                        idx(j),
                        idx(m),
                        idx(s),
                        b.clone(),
                        b.clone(),
                        full(v),
                        two(v),
                    ],
                );
            }
        }
    }
    for (j, s) in t.supplier_agents() {
        for tt in 0..t.modes[j] {
            for k in 0..t.markets {
                if let Some(v) = prices.p2[model.q2_slot(j, s, tt, k)] {
                    push_row(
                        &mut out,
                        &[
                            "p2".into(),
                            b.clone(),
                            b.clone(),
                            idx(j),
                            b.clone(),
                            idx(s),
                            idx(tt),
                            idx(k),
                            full(v),
                            two(v),
                        ],
                    );
                }
            }
        }
    }
    for j in 0..t.resources {
        for k in 0..t.markets {
            let v = prices.p3[j * t.markets + k];
            push_row(
                &mut out,
                &[
                    "p3".into(),
                    b.clone(),
                    b.clone(),
                    idx(j),
                    b.clone(),
                    b.clone(),
                    b.clone(),
                    idx(k),
                    full(v),
                    two(v),
                ],
            );
        }
    }
    out
}

/// Per-firm profits, surplus, totals, welfare, and the policy ledger.
pub fn welfare_csv(model: &NetworkModel, w: &WelfareReport) -> String {
    let t = &model.topology;
    let mut out = String::new();
    out.push_str(WELFARE_HEADER);
    out.push('\n');
    let b = BLANK.to_string();
    let metric = |name: &str, a: String, bb: String, v: f64, out: &mut String| {
        push_row(out, &[name.to_string(), a, bb, full(v), two(v)]);
    };
    for (rank, (i, n)) in t.owner_agents().enumerate() {
        metric(
            "owner_profit",
            idx(i),
            idx(n),
            w.profits.owners[rank],
            &mut out,
        );
    }
    for (rank, (j, m)) in t.producer_agents().enumerate() {
        metric(
            "producer_profit",
            idx(j),
            idx(m),
            w.profits.producers[rank],
            &mut out,
        );
    }
    for (rank, (j, s)) in t.supplier_agents().enumerate() {
        metric(
            "supplier_profit",
            idx(j),
            idx(s),
            w.profits.suppliers[rank],
            &mut out,
        );
    }
    for j in 0..t.resources {
        for k in 0..t.markets {
            metric(
                "consumer_surplus",
                idx(j),
                idx(k),
                w.consumer_surplus[j * t.markets + k],
                &mut out,
            );
        }
    }
    metric(
        "owner_profit_total",
        b.clone(),
        b.clone(),
        w.owner_total,
        &mut out,
    );
    metric(
        "producer_profit_total",
        b.clone(),
        b.clone(),
        w.producer_total,
        &mut out,
    );
    metric(
        "supplier_profit_total",
        b.clone(),
        b.clone(),
        w.supplier_total,
        &mut out,
    );
    metric(
        "consumer_surplus_total",
        b.clone(),
        b.clone(),
        w.consumer_total,
        &mut out,
    );
    metric(
        "social_welfare",
        b.clone(),
        b.clone(),
        w.social_welfare,
        &mut out,
    );
    metric(
        "net_incentive",
        b.clone(),
        b.clone(),
        w.net_incentive,
        &mut out,
    );
    if let Some(d) = w.delta_social_welfare {
        metric("delta_social_welfare", b.clone(), b.clone(), d, &mut out);
    }
    if let Some(bc) = w.benefit_cost {
        metric("benefit_cost", b.clone(), b.clone(), bc, &mut out);
    }
    out
}

pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::new();
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for p in trace {
        push_row(
            &mut out,
            &[p.iteration.to_string(), full(p.gap), full(p.residual)],
        );
    }
    out
}

/// Human-readable solve and spectral diagnostics block.
pub fn diagnostics_text(
    outcome: Option<&SolveOutcome>,
    dim: usize,
    lipschitz: f64,
    suggested_step: f64,
    verdict: &MonotonicityVerdict,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dimension: {dim}");
    if let Some(outcome) = outcome {
        let _ = writeln!(s, "status: {:?}", outcome.status);
        let _ = writeln!(s, "iterations: {}", outcome.iterations);
        let _ = writeln!(s, "step: {}", outcome.step);
        let _ = writeln!(s, "final_gap: {:e}", outcome.final_gap);
        let _ = writeln!(s, "residual: {:e}", outcome.residual);
    }
    let _ = writeln!(s, "lipschitz_estimate: {lipschitz}");
    let _ = writeln!(s, "suggested_step: {suggested_step}");
    let _ = writeln!(s, "monotonicity_class: {:?}", verdict.class);
    let _ = writeln!(s, "lambda_min_sym_jacobian: {:e}", verdict.lambda_min_sym);
    let _ = writeln!(s, "lambda_min_diag: {:e}", verdict.lambda_min_diag);
    let _ = writeln!(s, "lambda_min_offdiag_sym: {:e}", verdict.lambda_min_nbar);
    let _ = writeln!(
        s,
        "offdiag_dominance_inequality_holds: {}",
        verdict.theorem_dominance_holds
    );
    let _ = writeln!(s, "eigen_tolerance: {:e}", verdict.tol);
    s
}

/// One sweep row; `benefit_cost` is empty when undefined.
pub struct SweepRow {
    pub target: String,
    pub value: f64,
    pub status: String,
    pub owner_total: f64,
    pub producer_total: f64,
    pub supplier_total: f64,
    pub consumer_total: f64,
    pub social_welfare: f64,
    pub net_incentive: f64,
    pub benefit_cost: Option<f64>,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        push_row(
            &mut out,
            &[
                r.target.clone(),
                full(r.value),
                r.status.clone(),
                full(r.owner_total),
                full(r.producer_total),
                full(r.supplier_total),
                full(r.consumer_total),
                full(r.social_welfare),
                full(r.net_incentive),
                r.benefit_cost.map(full).unwrap_or_default(),
            ],
        );
    }
    out
}

/// Side-by-side per-firm and aggregate outcomes of two runs.
pub fn compare_csv(
    model: &NetworkModel,
    base: &WelfareReport,
    base_p3: &[f64],
    policy: &WelfareReport,
    policy_p3: &[f64],
) -> String {
    let t = &model.topology;
    let mut out = String::new();
    out.push_str(COMPARE_HEADER);
    out.push('\n');
    let b = BLANK.to_string();
    let row = |name: &str, a: String, bb: String, x: f64, y: f64, out: &mut String| {
        push_row(
            out,
            &[name.to_string(), a, bb, full(x), full(y), full(y - x)],
        );
    };
    for (rank, (i, n)) in t.owner_agents().enumerate() {
        row(
            "owner_profit",
            idx(i),
            idx(n),
            base.profits.owners[rank],
            policy.profits.owners[rank],
            &mut out,
        );
    }
    for (rank, (j, m)) in t.producer_agents().enumerate() {
        row(
            "producer_profit",
            idx(j),
            idx(m),
            base.profits.producers[rank],
            policy.profits.producers[rank],
            &mut out,
        );
    }
    for (rank, (j, s)) in t.supplier_agents().enumerate() {
        row(
            "supplier_profit",
            idx(j),
            idx(s),
            base.profits.suppliers[rank],
            policy.profits.suppliers[rank],
            &mut out,
        );
    }
    for j in 0..t.resources {
        for k in 0..t.markets {
            row(
                "consumer_surplus",
                idx(j),
                idx(k),
                base.consumer_surplus[j * t.markets + k],
                policy.consumer_surplus[j * t.markets + k],
                &mut out,
            );
        }
    }
    for j in 0..t.resources {
        for k in 0..t.markets {
            row(
                "market_price",
                idx(j),
                idx(k),
                base_p3[j * t.markets + k],
                policy_p3[j * t.markets + k],
                &mut out,
            );
        }
    }
    row(
        "owner_profit_total",
        b.clone(),
        b.clone(),
        base.owner_total,
        policy.owner_total,
        &mut out,
    );
    row(
        "producer_profit_total",
        b.clone(),
        b.clone(),
        base.producer_total,
        policy.producer_total,
        &mut out,
    );
    row(
        "supplier_profit_total",
        b.clone(),
        b.clone(),
        base.supplier_total,
        policy.supplier_total,
        &mut out,
    );
    row(
        "consumer_surplus_total",
        b.clone(),
        b.clone(),
        base.consumer_total,
        policy.consumer_total,
        &mut out,
    );
    row(
        "social_welfare",
        b.clone(),
        b.clone(),
        base.social_welfare,
        policy.social_welfare,
        &mut out,
    );
    row(
        "net_incentive",
        b.clone(),
        b.clone(),
        base.net_incentive,
        policy.net_incentive,
        &mut out,
    );
    if policy.net_incentive != 0.0 {
        let bc = (policy.social_welfare - base.social_welfare) / policy.net_incentive;
        push_row(
            &mut out,
            &[
                "benefit_cost".into(),
                b.clone(),
                b,
                String::new(),
                full(bc),
                String::new(),
            ],
        );
    }
    out
}
