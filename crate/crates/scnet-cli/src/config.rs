//! Scenario configuration: a TOML tree with explicit index tuples.
//!
//! Every cost, policy, and market entry names its indices (1-based, as in
//! the reports); an omitted index or `"*"` ranges over the whole axis, so a
//! uniform table is one entry. Later entries override earlier ones on the
//! slots they cover. Unknown keys are rejected.

use scnet::model::{
    Aggregate, Bracket, FlowRef, MarketFunction, NetworkModel, PolicyScheme, QuadraticCost,
    Topology,
};
use scnet::solver::{Initial, SolverConfig, StepRule};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {source}")]
    Parse {
        path: String,
        source: Box<toml::de::Error>,
    },
    #[error("{0}")]
    Invalid(String),
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// A 1-based index literal or `"*"` for the whole axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IndexSel {
    At(usize),
    Wild(WildCard),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WildCard {
    #[serde(rename = "*")]
    Star,
}

impl Default for IndexSel {
    fn default() -> Self {
        IndexSel::Wild(WildCard::Star)
    }
}

impl IndexSel {
    /// Expand to 0-based indices over an axis of length `len`.
    fn expand(&self, len: usize, what: &str) -> Result<Vec<usize>, ConfigError> {
        match *self {
            IndexSel::Wild(_) => Ok((0..len).collect()),
            IndexSel::At(v) => {
                if v == 0 || v > len {
                    Err(bad(format!("{what} index {v} out of range 1..={len}")))
                } else {
                    Ok(vec![v - 1])
                }
            }
        }
    }
}

fn default_wild() -> IndexSel {
    IndexSel::default()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub model: ModelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub resources: usize,
    pub owners: Vec<usize>,
    pub producers: Vec<usize>,
    pub suppliers: Vec<usize>,
    pub modes: Vec<usize>,
    pub markets: usize,
    #[serde(default)]
    pub brackets: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub topology: TopologySection,
    /// Shared capacity per resource.
    pub capacities: Vec<f64>,
    #[serde(default = "one")]
    pub conversion_default: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conversion: Vec<ConversionEntry>,
    #[serde(default = "one")]
    pub weight_default: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weight: Vec<WeightEntry>,
    pub market_default: Option<MarketDefault>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub market: Vec<MarketEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub owner_op_cost: Vec<OwnerOpCost>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub producer_op_cost: Vec<ProducerOpCost>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub supplier_op_cost: Vec<SupplierOpCost>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub owner_txn_cost: Vec<OwnerTxnCost>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub producer_txn_cost: Vec<ProducerTxnCost>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub supplier_txn_cost: Vec<SupplierTxnCost>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub market_txn_cost: Vec<MarketTxnCost>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub owner_policy: Vec<OwnerPolicy>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub producer_policy: Vec<ProducerPolicy>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversionEntry {
    #[serde(default = "default_wild")]
    pub i: IndexSel,
    #[serde(default = "default_wild")]
    pub n: IndexSel,
    #[serde(default = "default_wild")]
    pub j: IndexSel,
    #[serde(default = "default_wild")]
    pub m: IndexSel,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightEntry {
    #[serde(default = "default_wild")]
    pub j: IndexSel,
    #[serde(default = "default_wild")]
    pub t: IndexSel,
    #[serde(default = "default_wild")]
    pub s: IndexSel,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketDefault {
    pub intercept: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketEntry {
    #[serde(default = "default_wild")]
    pub j: IndexSel,
    #[serde(default = "default_wild")]
    pub k: IndexSel,
    pub intercept: f64,
    pub slope: f64,
}

/// One term of an aggregate: a flow reference with a coefficient. Omitted
/// indices range over the whole axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub flow: FlowKind,
    #[serde(default = "default_wild")]
    pub i: IndexSel,
    #[serde(default = "default_wild")]
    pub n: IndexSel,
    #[serde(default = "default_wild")]
    pub j: IndexSel,
    #[serde(default = "default_wild")]
    pub m: IndexSel,
    #[serde(default = "default_wild")]
    pub s: IndexSel,
    #[serde(default = "default_wild")]
    pub t: IndexSel,
    #[serde(default = "default_wild")]
    pub k: IndexSel,
    #[serde(default = "one")]
    pub coeff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Owner,
    Producer,
    Supplier,
}

impl TermSpec {
    fn expand(&self, topo: &Topology) -> Result<Vec<(FlowRef, f64)>, ConfigError> {
        let mut out = Vec::new();
        match self.flow {
            FlowKind::Owner => {
                for i in self.i.expand(topo.resources, "i")? {
                    for n in self.n.expand(topo.owners[i], "n")? {
                        for j in self.j.expand(topo.resources, "j")? {
                            for m in self.m.expand(topo.producers[j], "m")? {
                                out.push((FlowRef::Owner { i, n, j, m }, self.coeff));
                            }
                        }
                    }
                }
            }
            FlowKind::Producer => {
                for j in self.j.expand(topo.resources, "j")? {
                    for m in self.m.expand(topo.producers[j], "m")? {
                        for s in self.s.expand(topo.suppliers[j], "s")? {
                            out.push((FlowRef::Producer { j, m, s }, self.coeff));
                        }
                    }
                }
            }
            FlowKind::Supplier => {
                for j in self.j.expand(topo.resources, "j")? {
                    for s in self.s.expand(topo.suppliers[j], "s")? {
                        for t in self.t.expand(topo.modes[j], "t")? {
                            for k in self.k.expand(topo.markets, "k")? {
                                out.push((FlowRef::Supplier { j, s, t, k }, self.coeff));
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Quadratic-over-aggregates body shared by the operating-cost entries.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostBody {
    pub aggregates: Vec<Vec<TermSpec>>,
    /// `(p, q, coeff)` with 1-based aggregate positions, `p <= q`.
    #[serde(default)]
    pub quad: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub lin: Vec<f64>,
    #[serde(default, rename = "const")]
    pub constant: f64,
}

impl CostBody {
    fn build(&self, topo: &Topology, ctx: &str) -> Result<QuadraticCost, ConfigError> {
        let mut aggregates = Vec::with_capacity(self.aggregates.len());
        for terms in &self.aggregates {
            let mut expanded = Vec::new();
            for t in terms {
                expanded.extend(t.expand(topo)?);
            }
            aggregates.push(Aggregate::of(expanded));
        }
        let mut quad = Vec::with_capacity(self.quad.len());
        for &(p, q, c) in &self.quad {
            if p == 0 || q == 0 || p > aggregates.len() || q > aggregates.len() || p > q {
                return Err(bad(format!(
                    "{ctx}: quad entry ({p},{q}) must satisfy 1 <= p <= q <= {}",
                    aggregates.len()
                )));
            }
            quad.push((p - 1, q - 1, c));
        }
        let mut lin = self.lin.clone();
        if lin.is_empty() {
            lin = vec![0.0; aggregates.len()];
        }
        if lin.len() != aggregates.len() {
            return Err(bad(format!(
                "{ctx}: {} linear coefficients for {} aggregates",
                lin.len(),
                aggregates.len()
            )));
        }
        Ok(QuadraticCost {
            aggregates,
            quad,
            lin,
            constant: self.constant,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OwnerOpCost {
    pub i: usize,
    pub n: usize,
    #[serde(flatten)]
    pub body: CostBody,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProducerOpCost {
    pub j: usize,
    pub m: usize,
    #[serde(flatten)]
    pub body: CostBody,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplierOpCost {
    pub j: usize,
    pub s: usize,
    #[serde(flatten)]
    pub body: CostBody,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OwnerTxnCost {
    #[serde(default = "default_wild")]
    pub i: IndexSel,
    #[serde(default = "default_wild")]
    pub n: IndexSel,
    #[serde(default = "default_wild")]
    pub j: IndexSel,
    #[serde(default = "default_wild")]
    pub m: IndexSel,
    #[serde(default)]
    pub quad: f64,
    #[serde(default)]
    pub lin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProducerTxnCost {
    #[serde(default = "default_wild")]
    pub j: IndexSel,
    #[serde(default = "default_wild")]
    pub m: IndexSel,
    #[serde(default = "default_wild")]
    pub s: IndexSel,
    #[serde(default)]
    pub quad: f64,
    #[serde(default)]
    pub lin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplierTxnCost {
    #[serde(default = "default_wild")]
    pub j: IndexSel,
    #[serde(default = "default_wild")]
    pub s: IndexSel,
    #[serde(default = "default_wild")]
    pub t: IndexSel,
    #[serde(default = "default_wild")]
    pub k: IndexSel,
    #[serde(default)]
    pub quad: f64,
    #[serde(default)]
    pub lin: f64,
}

/// Demand-side transaction cost; affine by schema (its value enters the
/// stationarity rows, so a quadratic term would break the constant-Jacobian
/// family).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketTxnCost {
    #[serde(default = "default_wild")]
    pub j: IndexSel,
    #[serde(default = "default_wild")]
    pub s: IndexSel,
    #[serde(default = "default_wild")]
    pub t: IndexSel,
    #[serde(default = "default_wild")]
    pub k: IndexSel,
    #[serde(default)]
    pub lin: f64,
    #[serde(default, rename = "const")]
    pub constant: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketSpec {
    pub threshold: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OwnerPolicy {
    pub i: usize,
    #[serde(default)]
    pub base_rate: f64,
    #[serde(default)]
    pub base_lump: f64,
    #[serde(default)]
    pub brackets: Vec<BracketSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProducerPolicy {
    pub j: usize,
    #[serde(default)]
    pub base_rate: f64,
    #[serde(default)]
    pub base_lump: f64,
    #[serde(default)]
    pub brackets: Vec<BracketSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhiSpec {
    Auto(AutoWord),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AutoWord {
    #[serde(rename = "auto")]
    Auto,
}

impl Default for PhiSpec {
    fn default() -> Self {
        PhiSpec::Auto(AutoWord::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Word(OnesWord),
    Random { random: RandomInit },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OnesWord {
    #[serde(rename = "ones")]
    Ones,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomInit {
    pub seed: u64,
    #[serde(default = "one")]
    pub scale: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Word(OnesWord::Ones)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub phi: PhiSpec,
    pub eps: f64,
    pub max_iters: usize,
    pub trace_every: usize,
    pub initial: InitialSpec,
    pub explosion_factor: f64,
    pub safety: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            phi: PhiSpec::default(),
            eps: 1e-6,
            max_iters: 5_000_000,
            trace_every: 0,
            initial: InitialSpec::default(),
            explosion_factor: 1e12,
            safety: 0.9,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    pub directory: Option<String>,
    /// Which reports to write; all of them when omitted.
    pub reports: Option<Vec<String>>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source: Box::new(source),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serialization")
    }

    /// Build the network model. Entries are applied in file order; later
    /// entries override earlier ones on the slots they cover.
    pub fn build_model(&self) -> Result<NetworkModel, ConfigError> {
        let ts = &self.model.topology;
        let topo = Topology {
            resources: ts.resources,
            owners: ts.owners.clone(),
            producers: ts.producers.clone(),
            suppliers: ts.suppliers.clone(),
            modes: ts.modes.clone(),
            markets: ts.markets,
            brackets: ts.brackets,
        };
        if topo.owners.len() != topo.resources
            || topo.producers.len() != topo.resources
            || topo.suppliers.len() != topo.resources
            || topo.modes.len() != topo.resources
        {
            return Err(bad(
                "topology per-resource vectors must have `resources` entries",
            ));
        }
        let mut model = NetworkModel::empty(topo.clone());
        model.capacities = self.model.capacities.clone();
        for v in model.conversion.iter_mut() {
            *v = self.model.conversion_default;
        }
        for e in &self.model.conversion {
            for i in e.i.expand(topo.resources, "conversion.i")? {
                for n in e.n.expand(topo.owners[i], "conversion.n")? {
                    for j in e.j.expand(topo.resources, "conversion.j")? {
                        for m in e.m.expand(topo.producers[j], "conversion.m")? {
                            let slot = model.q0_slot(i, n, j, m);
                            model.conversion[slot] = e.value;
                        }
                    }
                }
            }
        }
        for w in model.weights.iter_mut() {
            *w = self.model.weight_default;
        }
        for e in &self.model.weight {
            for j in e.j.expand(topo.resources, "weight.j")? {
                for t in e.t.expand(topo.modes[j], "weight.t")? {
                    for s in e.s.expand(topo.suppliers[j], "weight.s")? {
                        let off: usize = (0..j).map(|r| topo.modes[r] * topo.suppliers[r]).sum();
                        model.weights[off + t * topo.suppliers[j] + s] = e.value;
                    }
                }
            }
        }
        if let Some(d) = &self.model.market_default {
            for mk in model.markets.iter_mut() {
                *mk = MarketFunction {
                    intercept: d.intercept,
                    slope: d.slope,
                };
            }
        }
        for e in &self.model.market {
            for j in e.j.expand(topo.resources, "market.j")? {
                for k in e.k.expand(topo.markets, "market.k")? {
                    model.markets[j * topo.markets + k] = MarketFunction {
                        intercept: e.intercept,
                        slope: e.slope,
                    };
                }
            }
        }
        for e in &self.model.owner_op_cost {
            let (i, n) = (
                checked(e.i, topo.resources, "owner_op_cost.i")?,
                checked(e.n, topo.owners[e.i - 1], "owner_op_cost.n")?,
            );
            let ctx = format!("owner_op_cost[i={},n={}]", e.i, e.n);
            model.owner_op_costs[topo.owner_rank(i, n)] = e.body.build(&topo, &ctx)?;
        }
        for e in &self.model.producer_op_cost {
            let (j, m) = (
                checked(e.j, topo.resources, "producer_op_cost.j")?,
                checked(e.m, topo.producers[e.j - 1], "producer_op_cost.m")?,
            );
            let ctx = format!("producer_op_cost[j={},m={}]", e.j, e.m);
            model.producer_op_costs[topo.producer_rank(j, m)] = e.body.build(&topo, &ctx)?;
        }
        for e in &self.model.supplier_op_cost {
            let (j, s) = (
                checked(e.j, topo.resources, "supplier_op_cost.j")?,
                checked(e.s, topo.suppliers[e.j - 1], "supplier_op_cost.s")?,
            );
            let ctx = format!("supplier_op_cost[j={},s={}]", e.j, e.s);
            model.supplier_op_costs[topo.supplier_rank(j, s)] = e.body.build(&topo, &ctx)?;
        }
        for e in &self.model.owner_txn_cost {
            for i in e.i.expand(topo.resources, "owner_txn_cost.i")? {
                for n in e.n.expand(topo.owners[i], "owner_txn_cost.n")? {
                    for j in e.j.expand(topo.resources, "owner_txn_cost.j")? {
                        for m in e.m.expand(topo.producers[j], "owner_txn_cost.m")? {
                            let slot = model.q0_slot(i, n, j, m);
                            model.owner_txn_costs[slot] = QuadraticCost::single_flow(
                                FlowRef::Owner { i, n, j, m },
                                e.quad,
                                e.lin,
                            );
                        }
                    }
                }
            }
        }
        for e in &self.model.producer_txn_cost {
            for j in e.j.expand(topo.resources, "producer_txn_cost.j")? {
                for m in e.m.expand(topo.producers[j], "producer_txn_cost.m")? {
                    for s in e.s.expand(topo.suppliers[j], "producer_txn_cost.s")? {
                        let slot = model.q1_slot(j, m, s);
                        model.producer_txn_costs[slot] = QuadraticCost::single_flow(
                            FlowRef::Producer { j, m, s },
                            e.quad,
                            e.lin,
                        );
                    }
                }
            }
        }
        for e in &self.model.supplier_txn_cost {
            for j in e.j.expand(topo.resources, "supplier_txn_cost.j")? {
                for s in e.s.expand(topo.suppliers[j], "supplier_txn_cost.s")? {
                    for t in e.t.expand(topo.modes[j], "supplier_txn_cost.t")? {
                        for k in e.k.expand(topo.markets, "supplier_txn_cost.k")? {
                            let slot = model.q2_slot(j, s, t, k);
                            model.supplier_txn_costs[slot] = QuadraticCost::single_flow(
                                FlowRef::Supplier { j, s, t, k },
                                e.quad,
                                e.lin,
                            );
                        }
                    }
                }
            }
        }
        for e in &self.model.market_txn_cost {
            for j in e.j.expand(topo.resources, "market_txn_cost.j")? {
                for s in e.s.expand(topo.suppliers[j], "market_txn_cost.s")? {
                    for t in e.t.expand(topo.modes[j], "market_txn_cost.t")? {
                        for k in e.k.expand(topo.markets, "market_txn_cost.k")? {
                            let slot = model.q2_slot(j, s, t, k);
                            let mut c = QuadraticCost::single_flow(
                                FlowRef::Supplier { j, s, t, k },
                                0.0,
                                e.lin,
                            );
                            c.constant = e.constant;
                            model.market_txn_costs[slot] = c;
                        }
                    }
                }
            }
        }
        for e in &self.model.owner_policy {
            let i = checked(e.i, topo.resources, "owner_policy.i")?;
            model.owner_policies[i] = PolicyScheme {
                base_rate: e.base_rate,
                base_lump: e.base_lump,
                brackets: e
                    .brackets
                    .iter()
                    .map(|b| Bracket {
                        threshold: b.threshold,
                        rate: b.rate,
                    })
                    .collect(),
            };
        }
        for e in &self.model.producer_policy {
            let j = checked(e.j, topo.resources, "producer_policy.j")?;
            model.producer_policies[j] = PolicyScheme {
                base_rate: e.base_rate,
                base_lump: e.base_lump,
                brackets: e
                    .brackets
                    .iter()
                    .map(|b| Bracket {
                        threshold: b.threshold,
                        rate: b.rate,
                    })
                    .collect(),
            };
        }
        Ok(model)
    }

    pub fn build_solver(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            step: match s.phi {
                PhiSpec::Auto(_) => StepRule::Auto,
                PhiSpec::Fixed(v) => StepRule::Fixed(v),
            },
            tolerance: s.eps,
            max_iters: s.max_iters,
            initial: match &s.initial {
                InitialSpec::Word(_) => Initial::Ones,
                InitialSpec::Random { random } => Initial::Random {
                    seed: random.seed,
                    scale: random.scale,
                },
            },
            trace_every: s.trace_every,
            explosion_factor: s.explosion_factor,
            safety: s.safety,
        }
    }
}

fn checked(v: usize, len: usize, what: &str) -> Result<usize, ConfigError> {
    if v == 0 || v > len {
        Err(bad(format!("{what} index {v} out of range 1..={len}")))
    } else {
        Ok(v - 1)
    }
}
