//! Problem declaration: network topology, quadratic costs, fiscal policy
//! schemes, market demand functions, and instance validation.

use crate::assembly::{IndexMap, StateVector};
use thiserror::Error;

/// Tier cardinalities of a network instance.
///
/// Resource indices `i` and `j` both range over `0..resources`; the same
/// resource index addresses owners on the first tier and producers,
/// suppliers, and transport modes on the lower tiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    /// Number of resource types (`I`).
    pub resources: usize,
    /// Owners per resource (`N_i`).
    pub owners: Vec<usize>,
    /// Producers per resource (`M_j`).
    pub producers: Vec<usize>,
    /// Suppliers per resource (`S_j`).
    pub suppliers: Vec<usize>,
    /// Transport modes per resource (`T_j`).
    pub modes: Vec<usize>,
    /// Number of demand markets (`K`).
    pub markets: usize,
    /// Number of policy brackets (`G`, may be zero).
    pub brackets: usize,
}

impl Topology {
    /// Uniform topology: the same owner/producer/supplier/mode count for
    /// every resource.
    pub fn uniform(
        resources: usize,
        owners: usize,
        producers: usize,
        suppliers: usize,
        modes: usize,
        markets: usize,
        brackets: usize,
    ) -> Self {
        Topology {
            resources,
            owners: vec![owners; resources],
            producers: vec![producers; resources],
            suppliers: vec![suppliers; resources],
            modes: vec![modes; resources],
            markets,
            brackets,
        }
    }

    pub fn owner_agents(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.resources).flat_map(move |i| (0..self.owners[i]).map(move |n| (i, n)))
    }

    pub fn producer_agents(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.resources).flat_map(move |j| (0..self.producers[j]).map(move |m| (j, m)))
    }

    pub fn supplier_agents(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.resources).flat_map(move |j| (0..self.suppliers[j]).map(move |s| (j, s)))
    }

    /// Destinations an owner can ship to: every producer of every resource.
    pub fn destinations(&self) -> usize {
        self.producers.iter().sum()
    }

    pub fn owner_rank(&self, i: usize, n: usize) -> usize {
        self.owners[..i].iter().sum::<usize>() + n
    }

    pub fn producer_rank(&self, j: usize, m: usize) -> usize {
        self.producers[..j].iter().sum::<usize>() + m
    }

    pub fn supplier_rank(&self, j: usize, s: usize) -> usize {
        self.suppliers[..j].iter().sum::<usize>() + s
    }

    fn check(&self, out: &mut Vec<Violation>) {
        if self.resources == 0 {
            out.push(Violation::EmptyTopology("resources"));
        }
        if self.markets == 0 {
            out.push(Violation::EmptyTopology("markets"));
        }
        for (name, v) in [
            ("owners", &self.owners),
            ("producers", &self.producers),
            ("suppliers", &self.suppliers),
            ("modes", &self.modes),
        ] {
            if v.len() != self.resources {
                out.push(Violation::TopologyLength {
                    field: name,
                    got: v.len(),
                    want: self.resources,
                });
            }
            if v.contains(&0) {
                out.push(Violation::EmptyTopology(name));
            }
        }
    }
}

/// A flow variable reference, the only thing cost aggregates may cite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowRef {
    /// Owner `(i,n)` shipment to producer `(j,m)`.
    Owner {
        i: usize,
        n: usize,
        j: usize,
        m: usize,
    },
    /// Producer `(j,m)` shipment to supplier `(j,s)`.
    Producer { j: usize, m: usize, s: usize },
    /// Supplier `(j,s)` shipment to market `k` via mode `t`.
    Supplier {
        j: usize,
        s: usize,
        t: usize,
        k: usize,
    },
}

impl FlowRef {
    pub fn in_range(&self, topo: &Topology) -> bool {
        match *self {
            FlowRef::Owner { i, n, j, m } => {
                i < topo.resources
                    && n < topo.owners[i]
                    && j < topo.resources
                    && m < topo.producers[j]
            }
            FlowRef::Producer { j, m, s } => {
                j < topo.resources && m < topo.producers[j] && s < topo.suppliers[j]
            }
            FlowRef::Supplier { j, s, t, k } => {
                j < topo.resources && s < topo.suppliers[j] && t < topo.modes[j] && k < topo.markets
            }
        }
    }
}

/// A linear form over flow variables: `sum(coeff * flow)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Aggregate {
    pub terms: Vec<(FlowRef, f64)>,
}

impl Aggregate {
    pub fn of(terms: Vec<(FlowRef, f64)>) -> Self {
        Aggregate { terms }
    }

    pub fn value(&self, index: &IndexMap, x: &StateVector) -> f64 {
        self.terms.iter().map(|&(f, c)| c * x[index.flow(f)]).sum()
    }
}

/// Quadratic-over-aggregates cost:
/// `sum_{p<=q} quad[p][q]*A_p*A_q + sum_p lin[p]*A_p + constant`.
///
/// Gradients with respect to any flow are exact via the chain rule through
/// the aggregates, and second derivatives are constant, which keeps the
/// assembled game Jacobian constant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadraticCost {
    pub aggregates: Vec<Aggregate>,
    /// Upper-triangular entries `(p, q, coeff)` with `p <= q`.
    pub quad: Vec<(usize, usize, f64)>,
    /// One linear coefficient per aggregate.
    pub lin: Vec<f64>,
    pub constant: f64,
}

impl QuadraticCost {
    pub fn zero() -> Self {
        QuadraticCost::default()
    }

    /// `quad*x^2 + lin*x` on a single flow.
    pub fn single_flow(flow: FlowRef, quad: f64, lin: f64) -> Self {
        QuadraticCost {
            aggregates: vec![Aggregate::of(vec![(flow, 1.0)])],
            quad: if quad != 0.0 {
                vec![(0, 0, quad)]
            } else {
                vec![]
            },
            lin: vec![lin],
            constant: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.quad.is_empty() && self.lin.iter().all(|&l| l == 0.0) && self.constant == 0.0
    }

    pub fn is_affine(&self) -> bool {
        self.quad.is_empty()
    }

    /// Symmetric quadratic-form matrix over aggregates: `M[p][q]` with
    /// `M[p][p] = 2*quad[p][p]` and `M[p][q] = M[q][p] = quad[p][q]`.
    pub fn sym_matrix(&self) -> Vec<f64> {
        let p = self.aggregates.len();
        let mut m = vec![0.0; p * p];
        for &(a, b, c) in &self.quad {
            if a == b {
                m[a * p + a] += 2.0 * c;
            } else {
                m[a * p + b] += c;
                m[b * p + a] += c;
            }
        }
        m
    }

    fn check(&self, topo: &Topology, ctx: &str, out: &mut Vec<Violation>) {
        let p = self.aggregates.len();
        if self.lin.len() != p {
            out.push(Violation::CostShape {
                ctx: ctx.to_string(),
                detail: format!(
                    "{} linear coefficients for {} aggregates",
                    self.lin.len(),
                    p
                ),
            });
        }
        for &(a, b, _) in &self.quad {
            if a > b || b >= p {
                out.push(Violation::CostShape {
                    ctx: ctx.to_string(),
                    detail: format!(
                        "quad entry ({a},{b}) outside upper triangle of {p} aggregates"
                    ),
                });
            }
        }
        for ag in &self.aggregates {
            for &(f, _) in &ag.terms {
                if !f.in_range(topo) {
                    out.push(Violation::DanglingFlowRef {
                        ctx: ctx.to_string(),
                        flow: format!("{f:?}"),
                    });
                }
            }
        }
    }
}

/// One marginal adjustment bracket of a policy scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    /// Output threshold above which the marginal rate applies.
    pub threshold: f64,
    /// Marginal rate on the excess over the threshold (negative = regressive
    /// adjustment or tax component).
    pub rate: f64,
}

/// Base linear payment plus bracketed marginal adjustments.
///
/// Payment at output `q` is
/// `base_lump + base_rate*q + sum_g rate_g * max(q - threshold_g, 0)`.
/// Negative rates express taxes; `base_lump` affects profit accounting only.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyScheme {
    pub base_rate: f64,
    pub base_lump: f64,
    pub brackets: Vec<Bracket>,
}

impl PolicyScheme {
    /// No payment at all; bracket slots (if `g > 0`) carry zero rates at
    /// unreachable thresholds.
    pub fn inactive(brackets: usize) -> Self {
        PolicyScheme {
            base_rate: 0.0,
            base_lump: 0.0,
            brackets: vec![
                Bracket {
                    threshold: 1e6,
                    rate: 0.0
                };
                brackets
            ],
        }
    }

    pub fn flat(rate: f64, brackets: usize) -> Self {
        PolicyScheme {
            base_rate: rate,
            ..PolicyScheme::inactive(brackets)
        }
    }

    /// Realized payment at output quantity `q`.
    pub fn payment(&self, q: f64) -> f64 {
        self.base_lump
            + self.base_rate * q
            + self
                .brackets
                .iter()
                .map(|b| b.rate * (q - b.threshold).max(0.0))
                .sum::<f64>()
    }

    /// Excess of `q` over each bracket threshold.
    pub fn excesses(&self, q: f64) -> Vec<f64> {
        self.brackets
            .iter()
            .map(|b| (q - b.threshold).max(0.0))
            .collect()
    }

    fn check(&self, g: usize, ctx: &str, out: &mut Vec<Violation>) {
        if self.brackets.len() != g {
            out.push(Violation::BracketCount {
                ctx: ctx.to_string(),
                got: self.brackets.len(),
                want: g,
            });
        }
        for w in self.brackets.windows(2) {
            if w[0].threshold >= w[1].threshold {
                out.push(Violation::BracketOrder {
                    ctx: ctx.to_string(),
                    lo: w[0].threshold,
                    hi: w[1].threshold,
                });
            }
        }
    }
}

/// Linear price-demand function `p(d) = intercept + slope*d`, `slope < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketFunction {
    pub intercept: f64,
    pub slope: f64,
}

impl MarketFunction {
    pub fn price(&self, d: f64) -> f64 {
        self.intercept + self.slope * d
    }
}

/// A full problem instance.
///
/// Cost tables are dense over every legal index tuple (zero cost allowed);
/// flattened layouts follow the rank helpers on [`Topology`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub topology: Topology,
    /// `f^{in}` per owner, rank order.
    pub owner_op_costs: Vec<QuadraticCost>,
    /// `c^{in}_{jm}` per (owner rank, destination rank).
    pub owner_txn_costs: Vec<QuadraticCost>,
    /// `f^{jm}` per producer, rank order.
    pub producer_op_costs: Vec<QuadraticCost>,
    /// `c^{jm}_s` per (j, m, s), resource-major.
    pub producer_txn_costs: Vec<QuadraticCost>,
    /// `f^{js}` per supplier, rank order.
    pub supplier_op_costs: Vec<QuadraticCost>,
    /// `c^{js}_{tk}` per (j, s, t, k), resource-major.
    pub supplier_txn_costs: Vec<QuadraticCost>,
    /// Demand-side transaction cost per (j, s, t, k); affine only, since its
    /// value (not gradient) enters the shipment stationarity rows.
    pub market_txn_costs: Vec<QuadraticCost>,
    /// One scheme per resource, applied to each of its owners.
    pub owner_policies: Vec<PolicyScheme>,
    /// One scheme per resource, applied to each of its producers.
    pub producer_policies: Vec<PolicyScheme>,
    /// Shared capacity `U_i` per resource.
    pub capacities: Vec<f64>,
    /// Conversion rate per (owner rank, destination rank).
    pub conversion: Vec<f64>,
    /// Demand weight per (j, t, s), resource-major.
    pub weights: Vec<f64>,
    /// Price-demand function per (j, k).
    pub markets: Vec<MarketFunction>,
}

impl NetworkModel {
    /// All-zero costs, inactive policies, unit conversion and weights,
    /// unit demand slope of -1 with zero intercept. A starting point for
    /// programmatic instance construction.
    pub fn empty(topology: Topology) -> Self {
        let owners: usize = topology.owners.iter().sum();
        let dests = topology.destinations();
        let producers: usize = topology.producers.iter().sum();
        let suppliers: usize = topology.suppliers.iter().sum();
        let q1: usize = (0..topology.resources)
            .map(|j| topology.producers[j] * topology.suppliers[j])
            .sum();
        let q2: usize = (0..topology.resources)
            .map(|j| topology.suppliers[j] * topology.modes[j] * topology.markets)
            .sum();
        let _ = (producers, suppliers);
        let w: usize = (0..topology.resources)
            .map(|j| topology.modes[j] * topology.suppliers[j])
            .sum();
        let g = topology.brackets;
        NetworkModel {
            owner_op_costs: vec![QuadraticCost::zero(); owners],
            owner_txn_costs: vec![QuadraticCost::zero(); owners * dests],
            producer_op_costs: vec![QuadraticCost::zero(); producers],
            producer_txn_costs: vec![QuadraticCost::zero(); q1],
            supplier_op_costs: vec![QuadraticCost::zero(); suppliers],
            supplier_txn_costs: vec![QuadraticCost::zero(); q2],
            market_txn_costs: vec![QuadraticCost::zero(); q2],
            owner_policies: vec![PolicyScheme::inactive(g); topology.resources],
            producer_policies: vec![PolicyScheme::inactive(g); topology.resources],
            capacities: vec![1e6; topology.resources],
            conversion: vec![1.0; owners * dests],
            weights: vec![1.0; w],
            markets: vec![
                MarketFunction {
                    intercept: 0.0,
                    slope: -1.0
                };
                topology.resources * topology.markets
            ],
            topology,
        }
    }

    pub fn owner_op(&self, i: usize, n: usize) -> &QuadraticCost {
        &self.owner_op_costs[self.topology.owner_rank(i, n)]
    }

    pub fn owner_txn(&self, i: usize, n: usize, j: usize, m: usize) -> &QuadraticCost {
        &self.owner_txn_costs[self.q0_slot(i, n, j, m)]
    }

    pub fn producer_op(&self, j: usize, m: usize) -> &QuadraticCost {
        &self.producer_op_costs[self.topology.producer_rank(j, m)]
    }

    pub fn producer_txn(&self, j: usize, m: usize, s: usize) -> &QuadraticCost {
        &self.producer_txn_costs[self.q1_slot(j, m, s)]
    }

    pub fn supplier_op(&self, j: usize, s: usize) -> &QuadraticCost {
        &self.supplier_op_costs[self.topology.supplier_rank(j, s)]
    }

    pub fn supplier_txn(&self, j: usize, s: usize, t: usize, k: usize) -> &QuadraticCost {
        &self.supplier_txn_costs[self.q2_slot(j, s, t, k)]
    }

    pub fn market_txn(&self, j: usize, s: usize, t: usize, k: usize) -> &QuadraticCost {
        &self.market_txn_costs[self.q2_slot(j, s, t, k)]
    }

    pub fn psi(&self, i: usize, n: usize, j: usize, m: usize) -> f64 {
        self.conversion[self.q0_slot(i, n, j, m)]
    }

    pub fn weight(&self, j: usize, t: usize, s: usize) -> f64 {
        let off: usize = (0..j)
            .map(|r| self.topology.modes[r] * self.topology.suppliers[r])
            .sum();
        self.weights[off + t * self.topology.suppliers[j] + s]
    }

    pub fn market(&self, j: usize, k: usize) -> &MarketFunction {
        &self.markets[j * self.topology.markets + k]
    }

    /// Slot of an owner shipment in owner-link tables (same layout as the
    /// `Q0` block of the packed iterate).
    pub fn q0_slot(&self, i: usize, n: usize, j: usize, m: usize) -> usize {
        self.topology.owner_rank(i, n) * self.topology.destinations()
            + self.topology.producer_rank(j, m)
    }

    pub fn q1_slot(&self, j: usize, m: usize, s: usize) -> usize {
        let t = &self.topology;
        let off: usize = (0..j).map(|r| t.producers[r] * t.suppliers[r]).sum();
        off + m * t.suppliers[j] + s
    }

    pub fn q2_slot(&self, j: usize, s: usize, t: usize, k: usize) -> usize {
        let tp = &self.topology;
        let off: usize = (0..j)
            .map(|r| tp.suppliers[r] * tp.modes[r] * tp.markets)
            .sum();
        off + (s * tp.modes[j] + t) * tp.markets + k
    }

    /// Check every instance invariant; an empty list means the model is
    /// valid. Violations are data, not faults.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let t = &self.topology;
        t.check(&mut out);
        if !out.is_empty() {
            // Index helpers below assume consistent topology vectors.
            return out;
        }
        let owners: usize = t.owners.iter().sum();
        let dests = t.destinations();
        let q1: usize = (0..t.resources)
            .map(|j| t.producers[j] * t.suppliers[j])
            .sum();
        let q2: usize = (0..t.resources)
            .map(|j| t.suppliers[j] * t.modes[j] * t.markets)
            .sum();
        let wlen: usize = (0..t.resources).map(|j| t.modes[j] * t.suppliers[j]).sum();
        let producers: usize = t.producers.iter().sum();
        let suppliers: usize = t.suppliers.iter().sum();
        for (name, got, want) in [
            ("owner_op_costs", self.owner_op_costs.len(), owners),
            (
                "owner_txn_costs",
                self.owner_txn_costs.len(),
                owners * dests,
            ),
            ("producer_op_costs", self.producer_op_costs.len(), producers),
            ("producer_txn_costs", self.producer_txn_costs.len(), q1),
            ("supplier_op_costs", self.supplier_op_costs.len(), suppliers),
            ("supplier_txn_costs", self.supplier_txn_costs.len(), q2),
            ("market_txn_costs", self.market_txn_costs.len(), q2),
            ("owner_policies", self.owner_policies.len(), t.resources),
            (
                "producer_policies",
                self.producer_policies.len(),
                t.resources,
            ),
            ("capacities", self.capacities.len(), t.resources),
            ("conversion", self.conversion.len(), owners * dests),
            ("weights", self.weights.len(), wlen),
            ("markets", self.markets.len(), t.resources * t.markets),
        ] {
            if got != want {
                out.push(Violation::TableLength {
                    table: name,
                    got,
                    want,
                });
            }
        }
        if !out.is_empty() {
            return out;
        }
        for (i, &u) in self.capacities.iter().enumerate() {
            if u <= 0.0 || u.is_nan() {
                out.push(Violation::NonPositiveCapacity { i, value: u });
            }
        }
        for (slot, &p) in self.conversion.iter().enumerate() {
            if p < 0.0 || p.is_nan() {
                out.push(Violation::NegativeConversion { slot, value: p });
            }
        }
        for (slot, &w) in self.weights.iter().enumerate() {
            if w < 0.0 || w.is_nan() {
                out.push(Violation::NegativeWeight { slot, value: w });
            }
        }
        for j in 0..t.resources {
            for k in 0..t.markets {
                let mk = self.market(j, k);
                if mk.slope >= 0.0 || mk.slope.is_nan() {
                    out.push(Violation::NonNegativeSlope {
                        j,
                        k,
                        value: mk.slope,
                    });
                }
            }
        }
        for (i, p) in self.owner_policies.iter().enumerate() {
            p.check(t.brackets, &format!("owner_policies[{}]", i + 1), &mut out);
        }
        for (j, p) in self.producer_policies.iter().enumerate() {
            p.check(
                t.brackets,
                &format!("producer_policies[{}]", j + 1),
                &mut out,
            );
        }
        let families: [(&str, &Vec<QuadraticCost>); 7] = [
            ("owner_op_costs", &self.owner_op_costs),
            ("owner_txn_costs", &self.owner_txn_costs),
            ("producer_op_costs", &self.producer_op_costs),
            ("producer_txn_costs", &self.producer_txn_costs),
            ("supplier_op_costs", &self.supplier_op_costs),
            ("supplier_txn_costs", &self.supplier_txn_costs),
            ("market_txn_costs", &self.market_txn_costs),
        ];
        for (name, table) in families {
            for (slot, cost) in table.iter().enumerate() {
                cost.check(t, &format!("{name}[{slot}]"), &mut out);
            }
        }
        for (slot, cost) in self.market_txn_costs.iter().enumerate() {
            if !cost.is_affine() {
                out.push(Violation::NonAffineMarketCost { slot });
            }
        }
        out
    }
}

/// A violated instance invariant, with index context.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("topology count `{0}` must be at least 1")]
    EmptyTopology(&'static str),
    #[error("topology field `{field}` has {got} entries, expected {want}")]
    TopologyLength {
        field: &'static str,
        got: usize,
        want: usize,
    },
    #[error("table `{table}` has {got} entries, expected {want}")]
    TableLength {
        table: &'static str,
        got: usize,
        want: usize,
    },
    #[error("capacity U[{}] = {value} must be positive", i + 1)]
    NonPositiveCapacity { i: usize, value: f64 },
    #[error("conversion rate at slot {slot} is negative ({value})")]
    NegativeConversion { slot: usize, value: f64 },
    #[error("demand weight at slot {slot} is negative ({value})")]
    NegativeWeight { slot: usize, value: f64 },
    #[error("markets[{}][{}] slope = {value} must be negative", j + 1, k + 1)]
    NonNegativeSlope { j: usize, k: usize, value: f64 },
    #[error("{ctx}: expected {want} brackets, found {got}")]
    BracketCount {
        ctx: String,
        got: usize,
        want: usize,
    },
    #[error("{ctx}: bracket thresholds not strictly increasing ({lo} then {hi})")]
    BracketOrder { ctx: String, lo: f64, hi: f64 },
    #[error("{ctx}: {detail}")]
    CostShape { ctx: String, detail: String },
    #[error("{ctx}: aggregate references flow outside the topology: {flow}")]
    DanglingFlowRef { ctx: String, flow: String },
    #[error("market_txn_costs[{slot}] must be affine (its value enters the stationarity rows)")]
    NonAffineMarketCost { slot: usize },
}

/// Exact value of a quadratic cost at a packed state.
pub fn eval_cost(cost: &QuadraticCost, index: &IndexMap, x: &StateVector) -> f64 {
    let a: Vec<f64> = cost
        .aggregates
        .iter()
        .map(|ag| ag.value(index, x))
        .collect();
    let mut v = cost.constant;
    for (l, ai) in cost.lin.iter().zip(&a) {
        v += l * ai;
    }
    for &(p, q, c) in &cost.quad {
        v += c * a[p] * a[q];
    }
    v
}

/// Exact analytic partial derivative of a quadratic cost with respect to the
/// packed variable `var`.
pub fn eval_cost_grad(cost: &QuadraticCost, index: &IndexMap, x: &StateVector, var: usize) -> f64 {
    let a: Vec<f64> = cost
        .aggregates
        .iter()
        .map(|ag| ag.value(index, x))
        .collect();
    let np = cost.aggregates.len();
    let m = cost.sym_matrix();
    // d/dvar = sum_p (d A_p / d var) * (lin_p + sum_q M_pq A_q)
    let mut g = 0.0;
    for (p, ag) in cost.aggregates.iter().enumerate() {
        let apv: f64 = ag
            .terms
            .iter()
            .filter(|&&(f, _)| index.flow(f) == var)
            .map(|&(_, c)| c)
            .sum();
        if apv != 0.0 {
            let mut inner = cost.lin[p];
            for q in 0..np {
                inner += m[p * np + q] * a[q];
            }
            g += apv * inner;
        }
    }
    g
}

/// Realized policy payment at output quantity `q`.
pub fn policy_payment(scheme: &PolicyScheme, q: f64) -> f64 {
    scheme.payment(q)
}

/// Excess of `q` over each bracket threshold.
pub fn excess_quantities(scheme: &PolicyScheme, q: f64) -> Vec<f64> {
    scheme.excesses(q)
}
