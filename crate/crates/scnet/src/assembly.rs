//! Packed iterate layout and the compiled equilibrium map `F`.
//!
//! The iterate stacks, in this order, the shipment blocks `Q0, Q1, Q2`,
//! the bracket-excess blocks `D0, D1`, and the multiplier blocks
//! `L0` (shared capacity), `L1` (conversion), `L2` (supplier conservation),
//! `M0, M1` (bracket constraints), lexicographic within each block. Market
//! demand is eliminated by substitution (`d = sum w*x`), so the feasible
//! set is the nonnegative orthant and projection is componentwise.

use crate::model::{FlowRef, NetworkModel, QuadraticCost, Topology};
use std::collections::BTreeMap;
use std::ops::{Index, IndexMut};
use thiserror::Error;

/// Iterate blocks in packing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Q0,
    Q1,
    Q2,
    D0,
    D1,
    L0,
    L1,
    L2,
    M0,
    M1,
}

impl Block {
    pub const ALL: [Block; 10] = [
        Block::Q0,
        Block::Q1,
        Block::Q2,
        Block::D0,
        Block::D1,
        Block::L0,
        Block::L1,
        Block::L2,
        Block::M0,
        Block::M1,
    ];
}

/// A packed variable, by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarId {
    /// `x^{in}_{jm}`
    OwnerShipment {
        i: usize,
        n: usize,
        j: usize,
        m: usize,
    },
    /// `x^{jm}_s`
    ProducerShipment { j: usize, m: usize, s: usize },
    /// `x^{js}_{tk}`
    SupplierShipment {
        j: usize,
        s: usize,
        t: usize,
        k: usize,
    },
    /// Owner bracket excess
    OwnerExcess { i: usize, n: usize, g: usize },
    /// Producer bracket excess
    ProducerExcess { j: usize, m: usize, g: usize },
    /// Shared-capacity multiplier (per resource)
    CapacityPrice { i: usize },
    /// Conversion-constraint multiplier (per producer)
    ConversionPrice { j: usize, m: usize },
    /// Conservation multiplier (per supplier)
    SupplyPrice { j: usize, s: usize },
    /// Owner bracket multiplier
    OwnerBracketPrice { i: usize, n: usize, g: usize },
    /// Producer bracket multiplier
    ProducerBracketPrice { j: usize, m: usize, g: usize },
}

/// Bijective flat layout of the packed iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMap {
    topo: Topology,
    start: [usize; 10],
    len: usize,
    q1_off: Vec<usize>,
    q2_off: Vec<usize>,
}

/// Build the deterministic block layout for a topology.
pub fn build_index_map(topo: &Topology) -> IndexMap {
    IndexMap::new(topo)
}

impl IndexMap {
    pub fn new(topo: &Topology) -> Self {
        let t = topo;
        let owners: usize = t.owners.iter().sum();
        let producers: usize = t.producers.iter().sum();
        let suppliers: usize = t.suppliers.iter().sum();
        let dests = t.destinations();
        let mut q1_off = Vec::with_capacity(t.resources);
        let mut q2_off = Vec::with_capacity(t.resources);
        let mut q1 = 0usize;
        let mut q2 = 0usize;
        for j in 0..t.resources {
            q1_off.push(q1);
            q2_off.push(q2);
            q1 += t.producers[j] * t.suppliers[j];
            q2 += t.suppliers[j] * t.modes[j] * t.markets;
        }
        let g = t.brackets;
        let sizes = [
            owners * dests,
            q1,
            q2,
            owners * g,
            producers * g,
            t.resources,
            producers,
            suppliers,
            owners * g,
            producers * g,
        ];
        let mut start = [0usize; 10];
        let mut acc = 0usize;
        for (slot, size) in start.iter_mut().zip(sizes) {
            *slot = acc;
            acc += size;
        }
        IndexMap {
            topo: topo.clone(),
            start,
            len: acc,
            q1_off,
            q2_off,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn block_range(&self, b: Block) -> std::ops::Range<usize> {
        let i = b as usize;
        let end = if i + 1 < 10 {
            self.start[i + 1]
        } else {
            self.len
        };
        self.start[i]..end
    }

    pub fn q0(&self, i: usize, n: usize, j: usize, m: usize) -> usize {
        self.start[0]
            + self.topo.owner_rank(i, n) * self.topo.destinations()
            + self.topo.producer_rank(j, m)
    }

    pub fn q1(&self, j: usize, m: usize, s: usize) -> usize {
        self.start[1] + self.q1_off[j] + m * self.topo.suppliers[j] + s
    }

    pub fn q2(&self, j: usize, s: usize, t: usize, k: usize) -> usize {
        self.start[2] + self.q2_off[j] + (s * self.topo.modes[j] + t) * self.topo.markets + k
    }

    pub fn d0(&self, i: usize, n: usize, g: usize) -> usize {
        self.start[3] + self.topo.owner_rank(i, n) * self.topo.brackets + g
    }

    pub fn d1(&self, j: usize, m: usize, g: usize) -> usize {
        self.start[4] + self.topo.producer_rank(j, m) * self.topo.brackets + g
    }

    pub fn l0(&self, i: usize) -> usize {
        self.start[5] + i
    }

    pub fn l1(&self, j: usize, m: usize) -> usize {
        self.start[6] + self.topo.producer_rank(j, m)
    }

    pub fn l2(&self, j: usize, s: usize) -> usize {
        self.start[7] + self.topo.supplier_rank(j, s)
    }

    pub fn m0(&self, i: usize, n: usize, g: usize) -> usize {
        self.start[8] + self.topo.owner_rank(i, n) * self.topo.brackets + g
    }

    pub fn m1(&self, j: usize, m: usize, g: usize) -> usize {
        self.start[9] + self.topo.producer_rank(j, m) * self.topo.brackets + g
    }

    pub fn flow(&self, f: FlowRef) -> usize {
        match f {
            FlowRef::Owner { i, n, j, m } => self.q0(i, n, j, m),
            FlowRef::Producer { j, m, s } => self.q1(j, m, s),
            FlowRef::Supplier { j, s, t, k } => self.q2(j, s, t, k),
        }
    }

    pub fn flatten(&self, v: VarId) -> usize {
        match v {
            VarId::OwnerShipment { i, n, j, m } => self.q0(i, n, j, m),
            VarId::ProducerShipment { j, m, s } => self.q1(j, m, s),
            VarId::SupplierShipment { j, s, t, k } => self.q2(j, s, t, k),
            VarId::OwnerExcess { i, n, g } => self.d0(i, n, g),
            VarId::ProducerExcess { j, m, g } => self.d1(j, m, g),
            VarId::CapacityPrice { i } => self.l0(i),
            VarId::ConversionPrice { j, m } => self.l1(j, m),
            VarId::SupplyPrice { j, s } => self.l2(j, s),
            VarId::OwnerBracketPrice { i, n, g } => self.m0(i, n, g),
            VarId::ProducerBracketPrice { j, m, g } => self.m1(j, m, g),
        }
    }

    /// Inverse of [`IndexMap::flatten`].
    pub fn var(&self, flat: usize) -> VarId {
        let t = &self.topo;
        for b in Block::ALL {
            let r = self.block_range(b);
            if !r.contains(&flat) {
                continue;
            }
            let off = flat - r.start;
            return match b {
                Block::Q0 => {
                    let dests = t.destinations();
                    let (orank, drank) = (off / dests, off % dests);
                    let (i, n) = self.owner_from_rank(orank);
                    let (j, m) = self.producer_from_rank(drank);
                    VarId::OwnerShipment { i, n, j, m }
                }
                Block::Q1 => {
                    let j =
                        self.resource_of(&self.q1_off, off, |j| t.producers[j] * t.suppliers[j]);
                    let rem = off - self.q1_off[j];
                    VarId::ProducerShipment {
                        j,
                        m: rem / t.suppliers[j],
                        s: rem % t.suppliers[j],
                    }
                }
                Block::Q2 => {
                    let j = self.resource_of(&self.q2_off, off, |j| {
                        t.suppliers[j] * t.modes[j] * t.markets
                    });
                    let rem = off - self.q2_off[j];
                    let k = rem % t.markets;
                    let st = rem / t.markets;
                    VarId::SupplierShipment {
                        j,
                        s: st / t.modes[j],
                        t: st % t.modes[j],
                        k,
                    }
                }
                Block::D0 => {
                    let (orank, g) = (off / t.brackets, off % t.brackets);
                    let (i, n) = self.owner_from_rank(orank);
                    VarId::OwnerExcess { i, n, g }
                }
                Block::D1 => {
                    let (prank, g) = (off / t.brackets, off % t.brackets);
                    let (j, m) = self.producer_from_rank(prank);
                    VarId::ProducerExcess { j, m, g }
                }
                Block::L0 => VarId::CapacityPrice { i: off },
                Block::L1 => {
                    let (j, m) = self.producer_from_rank(off);
                    VarId::ConversionPrice { j, m }
                }
                Block::L2 => {
                    let (j, s) = self.supplier_from_rank(off);
                    VarId::SupplyPrice { j, s }
                }
                Block::M0 => {
                    let (orank, g) = (off / t.brackets, off % t.brackets);
                    let (i, n) = self.owner_from_rank(orank);
                    VarId::OwnerBracketPrice { i, n, g }
                }
                Block::M1 => {
                    let (prank, g) = (off / t.brackets, off % t.brackets);
                    let (j, m) = self.producer_from_rank(prank);
                    VarId::ProducerBracketPrice { j, m, g }
                }
            };
        }
        panic!("flat index {flat} out of range (dimension {})", self.len);
    }

    fn owner_from_rank(&self, rank: usize) -> (usize, usize) {
        let mut r = rank;
        for (i, &c) in self.topo.owners.iter().enumerate() {
            if r < c {
                return (i, r);
            }
            r -= c;
        }
        panic!("owner rank {rank} out of range");
    }

    fn producer_from_rank(&self, rank: usize) -> (usize, usize) {
        let mut r = rank;
        for (j, &c) in self.topo.producers.iter().enumerate() {
            if r < c {
                return (j, r);
            }
            r -= c;
        }
        panic!("producer rank {rank} out of range");
    }

    fn supplier_from_rank(&self, rank: usize) -> (usize, usize) {
        let mut r = rank;
        for (j, &c) in self.topo.suppliers.iter().enumerate() {
            if r < c {
                return (j, r);
            }
            r -= c;
        }
        panic!("supplier rank {rank} out of range");
    }

    fn resource_of(&self, offsets: &[usize], off: usize, size: impl Fn(usize) -> usize) -> usize {
        for j in (0..self.topo.resources).rev() {
            if off >= offsets[j] && off < offsets[j] + size(j) {
                return j;
            }
        }
        panic!("offset {off} not in any resource segment");
    }

    /// All flow variables in packing order.
    pub fn flow_vars(&self) -> Vec<FlowRef> {
        let t = &self.topo;
        let mut out = Vec::new();
        for (i, n) in t.owner_agents() {
            for j in 0..t.resources {
                for m in 0..t.producers[j] {
                    out.push(FlowRef::Owner { i, n, j, m });
                }
            }
        }
        for (j, m) in t.producer_agents() {
            for s in 0..t.suppliers[j] {
                out.push(FlowRef::Producer { j, m, s });
            }
        }
        for (j, s) in t.supplier_agents() {
            for t_ in 0..t.modes[j] {
                for k in 0..t.markets {
                    out.push(FlowRef::Supplier { j, s, t: t_, k });
                }
            }
        }
        out
    }
}

/// Packed iterate; nonnegative after projection.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    values: Vec<f64>,
}

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        StateVector {
            values: vec![0.0; n],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        StateVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl Index<usize> for StateVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl IndexMut<usize> for StateVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

/// Componentwise projection onto the nonnegative orthant.
pub fn project(mut values: Vec<f64>) -> StateVector {
    for v in &mut values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    StateVector { values }
}

/// One affine row of the compiled map: `constant + sum coeff * X[col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub constant: f64,
    pub terms: Vec<(u32, f64)>,
}

impl Row {
    fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for &(col, c) in &self.terms {
            v += c * x[col as usize];
        }
        v
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("model is invalid: {0:?}")]
    InvalidModel(Vec<crate::model::Violation>),
}

/// Compiled per-row recipes for the equilibrium map.
///
/// For the quadratic cost family every row is affine in the packed iterate,
/// so each row stores its constant and sparse linear terms; evaluation does
/// not allocate. Rows correspond one-to-one with iterate entries.
#[derive(Debug, Clone)]
pub struct FEvaluator {
    index: IndexMap,
    rows: Vec<Row>,
}

impl FEvaluator {
    pub fn new(model: &NetworkModel) -> Result<Self, BuildError> {
        let violations = model.validate();
        if !violations.is_empty() {
            return Err(BuildError::InvalidModel(violations));
        }
        let index = IndexMap::new(&model.topology);
        let n = index.len();
        let mut constants = vec![0.0; n];
        let mut terms: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); n];
        let add = |r: usize, c: usize, v: f64, terms: &mut Vec<BTreeMap<u32, f64>>| {
            if v != 0.0 {
                *terms[r].entry(c as u32).or_insert(0.0) += v;
            }
        };

        // Affine gradient of a cost, restricted to rows in `rows`.
        let apply_grad = |cost: &QuadraticCost,
                          rows: &[usize],
                          constants: &mut Vec<f64>,
                          terms: &mut Vec<BTreeMap<u32, f64>>| {
            if cost.aggregates.is_empty() {
                return;
            }
            let p = cost.aggregates.len();
            let m = cost.sym_matrix();
            for &row in rows {
                // coefficient of the row variable inside each aggregate
                for (pi, ag) in cost.aggregates.iter().enumerate() {
                    let apv: f64 = ag
                        .terms
                        .iter()
                        .filter(|&&(f, _)| index.flow(f) == row)
                        .map(|&(_, c)| c)
                        .sum();
                    if apv == 0.0 {
                        continue;
                    }
                    constants[row] += apv * cost.lin[pi];
                    for (qi, agq) in cost.aggregates.iter().enumerate() {
                        let mpq = m[pi * p + qi];
                        if mpq == 0.0 {
                            continue;
                        }
                        for &(f, cu) in &agq.terms {
                            add(row, index.flow(f), apv * mpq * cu, terms);
                        }
                    }
                }
            }
        };

        let t = &model.topology;

        // Q0 rows: owner marginal cost + producer marginal cost + link txn
        // gradient - owner base rate + capacity price - conversion-scaled
        // producer price + bracket multipliers.
        for (i, nn) in t.owner_agents() {
            let own_rows: Vec<usize> = t
                .producer_agents()
                .map(|(j, m)| index.q0(i, nn, j, m))
                .collect();
            apply_grad(model.owner_op(i, nn), &own_rows, &mut constants, &mut terms);
        }
        for (j, m) in t.producer_agents() {
            let in_rows: Vec<usize> = t
                .owner_agents()
                .map(|(i, nn)| index.q0(i, nn, j, m))
                .collect();
            apply_grad(
                model.producer_op(j, m),
                &in_rows,
                &mut constants,
                &mut terms,
            );
        }
        for (i, nn) in t.owner_agents() {
            for (j, m) in t.producer_agents() {
                let r = index.q0(i, nn, j, m);
                apply_grad(
                    model.owner_txn(i, nn, j, m),
                    &[r],
                    &mut constants,
                    &mut terms,
                );
                constants[r] -= model.owner_policies[i].base_rate;
                add(r, index.l0(i), 1.0, &mut terms);
                add(r, index.l1(j, m), -model.psi(i, nn, j, m), &mut terms);
                for g in 0..t.brackets {
                    add(r, index.m0(i, nn, g), 1.0, &mut terms);
                }
            }
        }

        // Q1 rows: supplier marginal cost + link txn gradient - producer base
        // rate + conversion price - conservation price + bracket multipliers.
        for (j, s) in t.supplier_agents() {
            let in_rows: Vec<usize> = (0..t.producers[j]).map(|m| index.q1(j, m, s)).collect();
            apply_grad(
                model.supplier_op(j, s),
                &in_rows,
                &mut constants,
                &mut terms,
            );
        }
        for (j, m) in t.producer_agents() {
            for s in 0..t.suppliers[j] {
                let r = index.q1(j, m, s);
                apply_grad(
                    model.producer_txn(j, m, s),
                    &[r],
                    &mut constants,
                    &mut terms,
                );
                constants[r] -= model.producer_policies[j].base_rate;
                add(r, index.l1(j, m), 1.0, &mut terms);
                add(r, index.l2(j, s), -1.0, &mut terms);
                for g in 0..t.brackets {
                    add(r, index.m1(j, m, g), 1.0, &mut terms);
                }
            }
        }

        // Q2 rows: link txn gradient + demand-side txn value + conservation
        // price - market price at substituted demand.
        for (j, s) in t.supplier_agents() {
            for tt in 0..t.modes[j] {
                for k in 0..t.markets {
                    let r = index.q2(j, s, tt, k);
                    apply_grad(
                        model.supplier_txn(j, s, tt, k),
                        &[r],
                        &mut constants,
                        &mut terms,
                    );
                    // value of the affine demand-side cost
                    let mc = model.market_txn(j, s, tt, k);
                    constants[r] += mc.constant;
                    for (pi, ag) in mc.aggregates.iter().enumerate() {
                        for &(f, c) in &ag.terms {
                            add(r, index.flow(f), mc.lin[pi] * c, &mut terms);
                        }
                    }
                    add(r, index.l2(j, s), 1.0, &mut terms);
                    let mk = model.market(j, k);
                    constants[r] -= mk.intercept;
                    for s2 in 0..t.suppliers[j] {
                        for t2 in 0..t.modes[j] {
                            add(
                                r,
                                index.q2(j, s2, t2, k),
                                -mk.slope * model.weight(j, t2, s2),
                                &mut terms,
                            );
                        }
                    }
                }
            }
        }

        // D rows: -(marginal bracket rate) - bracket multiplier.
        for (i, nn) in t.owner_agents() {
            for g in 0..t.brackets {
                let r = index.d0(i, nn, g);
                constants[r] -= model.owner_policies[i].brackets[g].rate;
                add(r, index.m0(i, nn, g), -1.0, &mut terms);
            }
        }
        for (j, m) in t.producer_agents() {
            for g in 0..t.brackets {
                let r = index.d1(j, m, g);
                constants[r] -= model.producer_policies[j].brackets[g].rate;
                add(r, index.m1(j, m, g), -1.0, &mut terms);
            }
        }

        // L0 rows: capacity slack.
        for i in 0..t.resources {
            let r = index.l0(i);
            constants[r] += model.capacities[i];
            for nn in 0..t.owners[i] {
                for (j, m) in t.producer_agents() {
                    add(r, index.q0(i, nn, j, m), -1.0, &mut terms);
                }
            }
        }

        // L1 rows: converted inflow minus outflow.
        for (j, m) in t.producer_agents() {
            let r = index.l1(j, m);
            for (i, nn) in t.owner_agents() {
                add(r, index.q0(i, nn, j, m), model.psi(i, nn, j, m), &mut terms);
            }
            for s in 0..t.suppliers[j] {
                add(r, index.q1(j, m, s), -1.0, &mut terms);
            }
        }

        // L2 rows: supplier inflow minus outflow.
        for (j, s) in t.supplier_agents() {
            let r = index.l2(j, s);
            for m in 0..t.producers[j] {
                add(r, index.q1(j, m, s), 1.0, &mut terms);
            }
            for tt in 0..t.modes[j] {
                for k in 0..t.markets {
                    add(r, index.q2(j, s, tt, k), -1.0, &mut terms);
                }
            }
        }

        // M rows: bracket slack.
        for (i, nn) in t.owner_agents() {
            for g in 0..t.brackets {
                let r = index.m0(i, nn, g);
                constants[r] += model.owner_policies[i].brackets[g].threshold;
                for (j, m) in t.producer_agents() {
                    add(r, index.q0(i, nn, j, m), -1.0, &mut terms);
                }
                add(r, index.d0(i, nn, g), 1.0, &mut terms);
            }
        }
        for (j, m) in t.producer_agents() {
            for g in 0..t.brackets {
                let r = index.m1(j, m, g);
                constants[r] += model.producer_policies[j].brackets[g].threshold;
                for s in 0..t.suppliers[j] {
                    add(r, index.q1(j, m, s), -1.0, &mut terms);
                }
                add(r, index.d1(j, m, g), 1.0, &mut terms);
            }
        }

        let rows = constants
            .into_iter()
            .zip(terms)
            .map(|(constant, t)| Row {
                constant,
                terms: t.into_iter().collect(),
            })
            .collect();
        Ok(FEvaluator { index, rows })
    }

    pub fn index(&self) -> &IndexMap {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Evaluate all rows into `out` without allocating.
    pub fn evaluate_into(&self, x: &StateVector, out: &mut [f64]) {
        assert_eq!(x.len(), self.rows.len(), "state dimension mismatch");
        assert_eq!(out.len(), self.rows.len(), "output dimension mismatch");
        let xs = x.as_slice();
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.eval(xs);
        }
    }

    pub fn evaluate(&self, x: &StateVector) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len()];
        self.evaluate_into(x, &mut out);
        out
    }

    /// `y = J^T u` for the constant row Jacobian, used by the spectral-norm
    /// power iteration.
    pub fn transpose_apply(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, row) in self.rows.iter().enumerate() {
            let ur = u[r];
            if ur != 0.0 {
                for &(col, c) in &row.terms {
                    out[col as usize] += c * ur;
                }
            }
        }
    }

    /// `y = J v` (row constants dropped).
    pub fn linear_apply(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            let mut acc = 0.0;
            for &(col, c) in &row.terms {
                acc += c * v[col as usize];
            }
            *o = acc;
        }
    }
}

/// Evaluate the equilibrium map at `x`.
pub fn evaluate_f(ev: &FEvaluator, x: &StateVector) -> Vec<f64> {
    ev.evaluate(x)
}

/// Demand per (resource, market), derived from supplier shipments:
/// `d_{jk} = sum_{t,s} w_{ts} x^{js}_{tk}`, flattened `j * K + k`.
pub fn demand_of(model: &NetworkModel, index: &IndexMap, x: &StateVector) -> Vec<f64> {
    let t = &model.topology;
    let mut d = vec![0.0; t.resources * t.markets];
    for j in 0..t.resources {
        for k in 0..t.markets {
            let mut acc = 0.0;
            for tt in 0..t.modes[j] {
                for s in 0..t.suppliers[j] {
                    acc += model.weight(j, tt, s) * x[index.q2(j, s, tt, k)];
                }
            }
            d[j * t.markets + k] = acc;
        }
    }
    d
}

/// Natural-map residual `max_i |x_i - max(x_i - F_i(x), 0)|`; zero exactly at
/// a solution of the variational inequality.
pub fn vi_residual(ev: &FEvaluator, x: &StateVector) -> f64 {
    let f = ev.evaluate(x);
    x.as_slice()
        .iter()
        .zip(&f)
        .map(|(&xi, &fi)| (xi - (xi - fi).max(0.0)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MarketFunction;
    use crate::scenarios;

    #[test]
    fn dimensions_by_block() {
        // Benchmark duopoly topology.
        let im = IndexMap::new(&Topology::uniform(2, 2, 2, 2, 1, 2, 1));
        assert_eq!(im.len(), 58);
        let sizes: Vec<usize> = Block::ALL
            .iter()
            .map(|&b| im.block_range(b).len())
            .collect();
        assert_eq!(sizes, vec![16, 8, 8, 4, 4, 2, 4, 4, 4, 4]);

        // Minimal chain.
        let im = IndexMap::new(&Topology::uniform(1, 1, 1, 1, 1, 1, 0));
        assert_eq!(im.len(), 6);

        // Resource-trio topology; with one bracket slot per agent the layout
        // (without a stored demand block) has 99 entries, without brackets 75.
        assert_eq!(
            IndexMap::new(&Topology::uniform(3, 2, 2, 2, 1, 2, 1)).len(),
            99
        );
        assert_eq!(
            IndexMap::new(&Topology::uniform(3, 2, 2, 2, 1, 2, 0)).len(),
            75
        );
    }

    #[test]
    fn flatten_var_roundtrip() {
        for topo in [
            Topology::uniform(2, 2, 2, 2, 1, 2, 1),
            Topology::uniform(3, 2, 2, 2, 1, 2, 0),
            Topology::uniform(1, 1, 2, 1, 2, 3, 2),
            Topology {
                resources: 2,
                owners: vec![1, 2],
                producers: vec![2, 1],
                suppliers: vec![1, 3],
                modes: vec![2, 1],
                markets: 2,
                brackets: 1,
            },
        ] {
            let im = IndexMap::new(&topo);
            for flat in 0..im.len() {
                assert_eq!(im.flatten(im.var(flat)), flat, "flat {flat}");
            }
        }
    }

    #[test]
    fn origin_evaluation_of_zero_cost_model() {
        let topo = Topology::uniform(1, 1, 1, 1, 1, 2, 1);
        let mut model = NetworkModel::empty(topo.clone());
        model.capacities[0] = 40.0;
        model.owner_policies[0].brackets[0].threshold = 25.0;
        model.producer_policies[0].brackets[0].threshold = 35.0;
        for k in 0..2 {
            model.markets[k] = MarketFunction {
                intercept: 120.0,
                slope: -1.0,
            };
        }
        let ev = FEvaluator::new(&model).unwrap();
        let im = ev.index();
        let f = ev.evaluate(&StateVector::zeros(im.len()));
        assert_eq!(f[im.q0(0, 0, 0, 0)], 0.0);
        assert_eq!(f[im.q1(0, 0, 0)], 0.0);
        assert_eq!(f[im.q2(0, 0, 0, 0)], -120.0);
        assert_eq!(f[im.q2(0, 0, 0, 1)], -120.0);
        assert_eq!(f[im.l0(0)], 40.0);
        assert_eq!(f[im.m0(0, 0, 0)], 25.0);
        assert_eq!(f[im.m1(0, 0, 0)], 35.0);
        assert_eq!(f[im.d0(0, 0, 0)], 0.0);
        assert_eq!(f[im.l1(0, 0)], 0.0);
    }

    use crate::testutil::table3_state;

    #[test]
    fn stationarity_at_reference_solution() {
        let model = scenarios::example_1_1().model;
        let ev = FEvaluator::new(&model).unwrap();
        let im = ev.index();
        let x = table3_state(im);
        let f = ev.evaluate(&x);

        // Every row whose variable is positive vanishes to within the
        // two-decimal rounding of the reference values.
        for flat in 0..im.len() {
            if x[flat] > 0.0 {
                assert!(
                    f[flat].abs() <= 5e-2,
                    "row {flat} ({:?}) residual {}",
                    im.var(flat),
                    f[flat]
                );
            }
        }

        // Shipment stationarity spot value: marginal transaction cost plus
        // demand-side cost plus conservation price minus market price.
        let r = f[im.q2(0, 0, 0, 0)];
        let hand = (13.79 + 3.5) + 0.01 * 13.79 + 266.59 - 284.02;
        assert!((r - hand).abs() < 5e-3, "row {r} vs hand {hand}");

        // Conversion conservation at the reference flows.
        let l1row = f[im.l1(0, 0)];
        assert!((l1row - (0.9 * 35.52 - 31.98)).abs() < 5e-3);
    }

    #[test]
    fn demand_from_reference_flows() {
        let model = scenarios::example_1_1().model;
        let index = IndexMap::new(&model.topology);
        let x = table3_state(&index);
        let d = demand_of(&model, &index, &x);
        assert!((d[0] - 15.985).abs() < 1e-12);
        assert!((d[0] - 15.98).abs() <= 0.05);
        assert!((d[2] - 17.10).abs() <= 0.05);

        let zero = StateVector::zeros(index.len());
        assert!(demand_of(&model, &index, &zero).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn demand_single_unit_weight() {
        let topo = Topology::uniform(1, 1, 1, 1, 1, 1, 0);
        let model = NetworkModel::empty(topo.clone());
        let index = IndexMap::new(&topo);
        let mut x = StateVector::zeros(index.len());
        x[index.q2(0, 0, 0, 0)] = 7.0;
        assert_eq!(demand_of(&model, &index, &x)[0], 7.0);
    }

    #[test]
    fn projection_examples() {
        let p = project(vec![-1.0, 2.0, 0.0]);
        assert_eq!(p.as_slice(), &[0.0, 2.0, 0.0]);
        let q = project(p.clone().into_vec());
        assert_eq!(q, p);
        let r = project(vec![1.0, 0.5]);
        assert_eq!(r.as_slice(), &[1.0, 0.5]);
    }

    #[test]
    fn residual_at_reference_solution_is_small() {
        let model = scenarios::example_1_1().model;
        let ev = FEvaluator::new(&model).unwrap();
        let x = table3_state(ev.index());
        assert!(vi_residual(&ev, &x) <= 5e-2);
    }

    #[test]
    fn residual_at_origin_equals_the_demand_intercept() {
        let model = scenarios::example_1_1().model;
        let ev = FEvaluator::new(&model).unwrap();
        let x = StateVector::zeros(ev.len());
        // Unserved markets leave the intercept, less the cheapest marginal
        // transaction cost, as the natural-map step on the shipment rows;
        // every other row is clamped at zero.
        assert!((vi_residual(&ev, &x) - (300.0 - 2.0)).abs() < 1e-12);
    }
}
