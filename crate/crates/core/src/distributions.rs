//! Dense probability tables over small variable sets and block-factorized
//! distributions over the full variable set.
//!
//! Configurations of a table over variables `U = (u_0, ..., u_{k-1})`
//! (sorted ascending) are encoded in mixed radix with `u_0` as the most
//! significant digit: index `= sum_i x^{u_i} L^{k-1-i}`. The same encoding
//! is used by every module and by the CSV writers.
//!
//! All sums run over configurations in ascending index order, so results
//! are bitwise reproducible.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::factor_graph::Partition;

/// Tolerance used when checking that a table is normalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// `L^n` as a table length, or a capacity error when it does not fit.
pub(crate) fn table_len(cardinality: usize, num_variables: usize) -> Result<usize> {
    u32::try_from(num_variables)
        .ok()
        .and_then(|n| cardinality.checked_pow(n))
        .ok_or_else(|| Error::Capacity {
            what: format!("table over {num_variables} variables"),
            size: (cardinality as u128).saturating_pow(num_variables as u32),
            cap: usize::MAX as u128,
        })
}

/// Mixed-radix counter over `n` digits of radix `L`.
///
/// `step` advances to the next configuration and returns the position of the
/// most significant digit that was incremented (all less significant digits
/// wrapped to zero), or `None` after the last configuration.
pub(crate) struct Odometer {
    digits: Vec<usize>,
    radix: usize,
}

impl Odometer {
    pub(crate) fn new(num_digits: usize, radix: usize) -> Self {
        Self {
            digits: vec![0; num_digits],
            radix,
        }
    }

    pub(crate) fn step(&mut self) -> Option<usize> {
        for pos in (0..self.digits.len()).rev() {
            self.digits[pos] += 1;
            if self.digits[pos] < self.radix {
                return Some(pos);
            }
            self.digits[pos] = 0;
        }
        None
    }
}

/// Offset increments for an odometer: when digit `p` increments and every
/// later digit wraps, an index with per-digit `strides` changes by
/// `deltas[p]`.
pub(crate) fn carry_deltas(strides: &[usize], radix: usize) -> Vec<isize> {
    let mut deltas = vec![0isize; strides.len()];
    let mut tail = 0isize;
    for p in (0..strides.len()).rev() {
        deltas[p] = strides[p] as isize - (radix as isize - 1) * tail;
        tail += strides[p] as isize;
    }
    deltas
}

/// Stride of each variable of `within` in the mixed-radix encoding of
/// `table_vars`; zero for variables the table does not contain.
pub(crate) fn strides_in(within: &[usize], table_vars: &[usize], radix: usize) -> Vec<usize> {
    let k = table_vars.len();
    within
        .iter()
        .map(|v| match table_vars.binary_search(v) {
            Ok(pos) => radix.pow((k - 1 - pos) as u32),
            Err(_) => 0,
        })
        .collect()
}

fn is_strictly_sorted(vars: &[usize]) -> bool {
    vars.windows(2).all(|w| w[0] < w[1])
}

/// A non-negative table over `X^U` for a sorted variable list `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTable {
    variables: Vec<usize>,
    cardinality: usize,
    values: Vec<f64>,
}

impl DenseTable {
    /// Wraps raw values. The table is not required to be normalized.
    pub fn new(variables: Vec<usize>, cardinality: usize, values: Vec<f64>) -> Result<Self> {
        if cardinality == 0 {
            return Err(Error::invalid("cardinality must be positive"));
        }
        if !is_strictly_sorted(&variables) {
            return Err(Error::invalid(format!(
                "table variables must be strictly increasing, got {variables:?}"
            )));
        }
        let len = table_len(cardinality, variables.len())?;
        if values.len() != len {
            return Err(Error::invalid(format!(
                "table over {} variables with L={cardinality} needs {len} values, got {}",
                variables.len(),
                values.len()
            )));
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::degenerate(format!("table entry {x} is negative or not finite")));
        }
        Ok(Self {
            variables,
            cardinality,
            values,
        })
    }

    pub fn uniform(variables: Vec<usize>, cardinality: usize) -> Result<Self> {
        let len = table_len(cardinality, variables.len())?;
        Self::new(variables, cardinality, vec![1.0 / len as f64; len])
    }

    /// Unit mass on one configuration (states listed in variable order).
    pub fn point_mass(variables: Vec<usize>, cardinality: usize, states: &[usize]) -> Result<Self> {
        let len = table_len(cardinality, variables.len())?;
        let mut values = vec![0.0; len];
        let mut t = Self {
            variables,
            cardinality,
            values: Vec::new(),
        };
        values[t.encode(states)?] = 1.0;
        t.values = values;
        Ok(t)
    }

    pub fn variables(&self) -> &[usize] {
        &self.variables
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Value at a configuration listed in variable order.
    pub fn get(&self, states: &[usize]) -> Result<f64> {
        Ok(self.values[self.encode(states)?])
    }

    pub fn encode(&self, states: &[usize]) -> Result<usize> {
        if states.len() != self.variables.len() {
            return Err(Error::invalid(format!(
                "configuration has {} entries, table has {} variables",
                states.len(),
                self.variables.len()
            )));
        }
        let mut index = 0;
        for &s in states {
            if s >= self.cardinality {
                return Err(Error::invalid(format!(
                    "state {s} out of range for L={}",
                    self.cardinality
                )));
            }
            index = index * self.cardinality + s;
        }
        Ok(index)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut states = vec![0; self.variables.len()];
        for slot in states.iter_mut().rev() {
            *slot = index % self.cardinality;
            index /= self.cardinality;
        }
        states
    }

    /// Divides by the total mass.
    pub fn normalize(&self) -> Result<Self> {
        let mut out = self.clone();
        out.normalize_in_place()?;
        Ok(out)
    }

    pub(crate) fn normalize_in_place(&mut self) -> Result<f64> {
        let total = self.total();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::degenerate(format!(
                "cannot normalize a table with total mass {total}"
            )));
        }
        for x in &mut self.values {
            *x /= total;
        }
        Ok(total)
    }

    pub fn is_normalized(&self) -> bool {
        (self.total() - 1.0).abs() <= NORMALIZATION_TOLERANCE
    }

    /// Sums out every variable not in `keep`.
    pub fn marginalize(&self, keep: &[usize]) -> Result<Self> {
        let mut keep: Vec<usize> = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if let Some(v) = keep.iter().find(|v| self.variables.binary_search(v).is_err()) {
            return Err(Error::invalid(format!(
                "variable {v} is not in the table's variables {:?}",
                self.variables
            )));
        }
        let l = self.cardinality;
        let strides = strides_in(&self.variables, &keep, l);
        let deltas = carry_deltas(&strides, l);
        let mut out = vec![0.0; table_len(l, keep.len())?];
        let mut odo = Odometer::new(self.variables.len(), l);
        let mut target = 0isize;
        let mut index = 0;
        loop {
            out[target as usize] += self.values[index];
            match odo.step() {
                Some(p) => {
                    target += deltas[p];
                    index += 1;
                }
                None => break,
            }
        }
        Self::new(keep, l, out)
    }

    /// Half the L1 distance between two tables over the same variables.
    pub fn tv_distance(&self, other: &Self) -> Result<f64> {
        if self.variables != other.variables || self.cardinality != other.cardinality {
            return Err(Error::invalid(format!(
                "tables have different supports: {:?} vs {:?}",
                self.variables, other.variables
            )));
        }
        let l1: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(0.5 * l1)
    }

    /// TV distance between the marginals on `subset`.
    pub fn ltv_distance(&self, other: &Self, subset: &[usize]) -> Result<f64> {
        self.marginalize(subset)?.tv_distance(&other.marginalize(subset)?)
    }
}

/// Outer product of tables over pairwise disjoint variable sets. The result
/// is over the sorted union of their variables.
pub fn product_join(tables: &[&DenseTable]) -> Result<DenseTable> {
    let Some(first) = tables.first() else {
        return Err(Error::invalid("product of an empty list of tables"));
    };
    let l = first.cardinality;
    if tables.iter().any(|t| t.cardinality != l) {
        return Err(Error::invalid("tables in a product must share one cardinality"));
    }
    let mut union: Vec<usize> = tables.iter().flat_map(|t| t.variables.iter().copied()).collect();
    union.sort_unstable();
    let before = union.len();
    union.dedup();
    if union.len() != before {
        return Err(Error::invalid("tables in a product must have disjoint variables"));
    }

    let len = table_len(l, union.len())?;
    let deltas: Vec<Vec<isize>> = tables
        .iter()
        .map(|t| carry_deltas(&strides_in(&union, &t.variables, l), l))
        .collect();
    let mut offsets = vec![0isize; tables.len()];
    let mut values = Vec::with_capacity(len);
    let mut odo = Odometer::new(union.len(), l);
    loop {
        let mut x = 1.0;
        for (t, &o) in tables.iter().zip(&offsets) {
            x *= t.values[o as usize];
        }
        values.push(x);
        match odo.step() {
            Some(p) => {
                for (o, d) in offsets.iter_mut().zip(&deltas) {
                    *o += d[p];
                }
            }
            None => break,
        }
    }
    DenseTable::new(union, l, values)
}

/// A distribution on `X^V` stored as one normalized table per block of a
/// partition; the joint is their product.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedDistribution {
    partition: Arc<Partition>,
    blocks: Vec<DenseTable>,
}

impl FactorizedDistribution {
    pub fn new(partition: Arc<Partition>, blocks: Vec<DenseTable>) -> Result<Self> {
        if blocks.len() != partition.num_blocks() {
            return Err(Error::invalid(format!(
                "{} tables for a partition with {} blocks",
                blocks.len(),
                partition.num_blocks()
            )));
        }
        let l = blocks.first().map(|t| t.cardinality).unwrap_or(1);
        for (b, table) in blocks.iter().enumerate() {
            if table.variables() != partition.block(b) {
                return Err(Error::invalid(format!(
                    "table {b} is over {:?}, block is {:?}",
                    table.variables(),
                    partition.block(b)
                )));
            }
            if table.cardinality != l {
                return Err(Error::invalid("block tables must share one cardinality"));
            }
            if !table.is_normalized() {
                return Err(Error::degenerate(format!(
                    "block table {b} sums to {}",
                    table.total()
                )));
            }
        }
        Ok(Self { partition, blocks })
    }

    /// Product of independent per-variable marginals, grouped by block.
    pub fn from_variable_marginals(partition: Arc<Partition>, marginals: &[Vec<f64>]) -> Result<Self> {
        if marginals.len() != partition.num_variables() {
            return Err(Error::invalid("need one marginal per variable"));
        }
        let l = marginals.first().map(Vec::len).unwrap_or(0);
        let tables = partition
            .blocks()
            .iter()
            .map(|block| {
                let singles = block
                    .iter()
                    .map(|&v| DenseTable::new(vec![v], l, marginals[v].clone()))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&DenseTable> = singles.iter().collect();
                product_join(&refs)?.normalize()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(partition, tables)
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn blocks(&self) -> &[DenseTable] {
        &self.blocks
    }

    pub fn block(&self, id: usize) -> &DenseTable {
        &self.blocks[id]
    }

    pub fn cardinality(&self) -> usize {
        self.blocks[0].cardinality
    }

    /// Marginal on `subset`, which must lie inside a single block.
    pub fn marginal(&self, subset: &[usize]) -> Result<DenseTable> {
        let Some(&first) = subset.first() else {
            return Err(Error::invalid("marginal on an empty variable set"));
        };
        if first >= self.partition.num_variables() {
            return Err(Error::invalid(format!("variable {first} is out of range")));
        }
        let block = self.partition.block_of(first);
        if subset
            .iter()
            .any(|&v| v >= self.partition.num_variables() || self.partition.block_of(v) != block)
        {
            return Err(Error::UnsupportedQuery(format!(
                "{subset:?} spans more than one block"
            )));
        }
        self.blocks[block].marginalize(subset)
    }

    /// Marginal of a single variable as a plain probability vector.
    pub fn variable_marginal(&self, v: usize) -> Result<Vec<f64>> {
        Ok(self.marginal(&[v])?.into_values())
    }

    /// Joint of an arbitrary variable set, as the product of the per-block
    /// marginals it touches.
    pub fn joint_marginal(&self, subset: &[usize]) -> Result<DenseTable> {
        let mut by_block: Vec<(usize, Vec<usize>)> = Vec::new();
        for &v in subset {
            if v >= self.partition.num_variables() {
                return Err(Error::invalid(format!("variable {v} is out of range")));
            }
            let b = self.partition.block_of(v);
            match by_block.iter_mut().find(|(id, _)| *id == b) {
                Some((_, vars)) => vars.push(v),
                None => by_block.push((b, vec![v])),
            }
        }
        let parts = by_block
            .iter()
            .map(|(b, vars)| self.blocks[*b].marginalize(vars))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&DenseTable> = parts.iter().collect();
        product_join(&refs)
    }

    /// The full joint table. Only sensible for small models.
    pub fn to_dense(&self) -> Result<DenseTable> {
        let refs: Vec<&DenseTable> = self.blocks.iter().collect();
        product_join(&refs)
    }

    /// LTV distance on `subset`; the subset must lie inside one block of
    /// each argument.
    pub fn ltv_distance(&self, other: &Self, subset: &[usize]) -> Result<f64> {
        self.marginal(subset)?.tv_distance(&other.marginal(subset)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(vars: Vec<usize>, values: Vec<f64>) -> DenseTable {
        DenseTable::new(vars, 2, values).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(table(vec![0], vec![2.0, 2.0]).normalize().unwrap().values(), &[0.5, 0.5]);
        let point = table(vec![0, 1], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(point.normalize().unwrap(), point);
        assert_eq!(table(vec![0], vec![3.0, 1.0]).normalize().unwrap().values(), &[0.75, 0.25]);
    }

    #[test]
    fn normalize_rejects_degenerate_tables() {
        assert!(matches!(
            table(vec![0], vec![0.0, 0.0]).normalize(),
            Err(Error::DegenerateDistribution(_))
        ));
        assert!(matches!(
            DenseTable::new(vec![0], 2, vec![-1.0, 2.0]),
            Err(Error::DegenerateDistribution(_))
        ));
    }

    #[test]
    fn new_checks_shape() {
        assert!(DenseTable::new(vec![1, 0], 2, vec![0.25; 4]).is_err());
        assert!(DenseTable::new(vec![0, 1], 2, vec![0.5; 2]).is_err());
        assert!(DenseTable::new(vec![0], 0, vec![]).is_err());
    }

    #[test]
    fn encoding_is_most_significant_first() {
        let t = DenseTable::uniform(vec![3, 5, 9], 3).unwrap();
        assert_eq!(t.encode(&[1, 0, 2]).unwrap(), 9 + 2);
        assert_eq!(t.decode(11), vec![1, 0, 2]);
        assert!(t.encode(&[3, 0, 0]).is_err());
    }

    #[test]
    fn marginalize_examples() {
        let u = DenseTable::uniform(vec![0, 1], 2).unwrap();
        assert_eq!(u.marginalize(&[0]).unwrap().values(), &[0.5, 0.5]);

        let p = DenseTable::point_mass(vec![0, 1], 2, &[1, 0]).unwrap();
        assert_eq!(p.marginalize(&[1]).unwrap().values(), &[1.0, 0.0]);

        let t = table(vec![4, 7], vec![0.1, 0.2, 0.3, 0.4]);
        assert!(close(t.marginalize(&[4]).unwrap().values(), &[0.3, 0.7], 1e-15));
        assert!(close(t.marginalize(&[7]).unwrap().values(), &[0.4, 0.6], 1e-15));
        assert!(matches!(t.marginalize(&[5]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn product_join_examples() {
        let h = table(vec![0], vec![0.5, 0.5]);
        let h1 = table(vec![1], vec![0.5, 0.5]);
        assert_eq!(product_join(&[&h, &h1]).unwrap().values(), &[0.25; 4]);

        let a = DenseTable::point_mass(vec![0], 2, &[1]).unwrap();
        let b = DenseTable::point_mass(vec![1], 2, &[0]).unwrap();
        assert_eq!(
            product_join(&[&a, &b]).unwrap(),
            DenseTable::point_mass(vec![0, 1], 2, &[1, 0]).unwrap()
        );

        let p = table(vec![0], vec![0.6, 0.4]);
        let q = table(vec![1], vec![0.2, 0.8]);
        let joint = product_join(&[&p, &q]).unwrap();
        assert!(close(joint.values(), &[0.12, 0.48, 0.08, 0.32], 1e-15));
        // Order of the arguments does not matter: the result is over the sorted union.
        assert_eq!(product_join(&[&q, &p]).unwrap(), joint);

        assert!(matches!(product_join(&[&p, &p]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn interleaved_product_join() {
        let a = table(vec![0, 2], vec![0.1, 0.2, 0.3, 0.4]);
        let b = table(vec![1], vec![0.25, 0.75]);
        let j = product_join(&[&a, &b]).unwrap();
        assert_eq!(j.variables(), &[0, 1, 2]);
        for x0 in 0..2 {
            for x1 in 0..2 {
                for x2 in 0..2 {
                    let want = a.get(&[x0, x2]).unwrap() * b.get(&[x1]).unwrap();
                    assert_eq!(j.get(&[x0, x1, x2]).unwrap(), want);
                }
            }
        }
    }

    #[test]
    fn tv_examples() {
        let p = table(vec![0], vec![0.6, 0.4]);
        assert_eq!(p.tv_distance(&p).unwrap(), 0.0);
        let a = table(vec![0], vec![1.0, 0.0]);
        let b = table(vec![0], vec![0.0, 1.0]);
        assert_eq!(a.tv_distance(&b).unwrap(), 1.0);
        let q = table(vec![0], vec![0.2, 0.8]);
        assert!((p.tv_distance(&q).unwrap() - 0.4).abs() < 1e-15);
        assert!(p.tv_distance(&table(vec![1], vec![0.6, 0.4])).is_err());
    }

    #[test]
    fn ltv_examples() {
        let t = table(vec![0, 1], vec![0.1, 0.2, 0.3, 0.4]);
        let s = table(vec![0, 1], vec![0.4, 0.3, 0.2, 0.1]);
        assert_eq!(t.ltv_distance(&t, &[1]).unwrap(), 0.0);
        assert_eq!(t.ltv_distance(&s, &[0, 1]).unwrap(), t.tv_distance(&s).unwrap());

        let part = Arc::new(Partition::new(3, vec![vec![0, 1], vec![2]]).unwrap());
        let p = FactorizedDistribution::new(
            part.clone(),
            vec![DenseTable::uniform(vec![0, 1], 2).unwrap(), table(vec![2], vec![0.6, 0.4])],
        )
        .unwrap();
        let q = FactorizedDistribution::new(
            part,
            vec![DenseTable::uniform(vec![0, 1], 2).unwrap(), table(vec![2], vec![0.2, 0.8])],
        )
        .unwrap();
        assert!((p.ltv_distance(&q, &[2]).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(p.ltv_distance(&q, &[0, 1]).unwrap(), 0.0);
        assert!(matches!(p.ltv_distance(&q, &[1, 2]), Err(Error::UnsupportedQuery(_))));
    }

    #[test]
    fn factorized_checks_blocks() {
        let part = Arc::new(Partition::singleton(2));
        assert!(FactorizedDistribution::new(part.clone(), vec![table(vec![0], vec![0.5, 0.5])]).is_err());
        assert!(FactorizedDistribution::new(
            part.clone(),
            vec![table(vec![0], vec![0.5, 0.6]), table(vec![1], vec![0.5, 0.5])]
        )
        .is_err());
        assert!(FactorizedDistribution::new(
            part,
            vec![table(vec![1], vec![0.5, 0.5]), table(vec![0], vec![0.5, 0.5])]
        )
        .is_err());
    }

    fn arb_table(vars: Vec<usize>, l: usize) -> impl Strategy<Value = DenseTable> {
        let len = l.pow(vars.len() as u32);
        prop::collection::vec(0.01f64..1.0, len).prop_map(move |v| {
            DenseTable::new(vars.clone(), l, v).unwrap().normalize().unwrap()
        })
    }

    proptest! {
        #[test]
        fn marginalization_composes(t in arb_table(vec![0, 1, 2, 3], 2)) {
            let direct = t.marginalize(&[1]).unwrap();
            let staged = t.marginalize(&[1, 3]).unwrap().marginalize(&[1]).unwrap();
            prop_assert!(close(direct.values(), staged.values(), 1e-15));
            prop_assert!((t.marginalize(&[0, 2]).unwrap().total() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn tv_is_a_metric(
            p in arb_table(vec![0, 1], 3),
            q in arb_table(vec![0, 1], 3),
            r in arb_table(vec![0, 1], 3),
        ) {
            let pq = p.tv_distance(&q).unwrap();
            prop_assert_eq!(pq, q.tv_distance(&p).unwrap());
            prop_assert!((0.0..=1.0).contains(&pq));
            let pr = p.tv_distance(&r).unwrap();
            let rq = r.tv_distance(&q).unwrap();
            prop_assert!(pq <= pr + rq + 1e-12);
        }

        #[test]
        fn product_then_marginal_recovers_factor(
            a in arb_table(vec![0, 3], 2),
            b in arb_table(vec![1, 2], 2),
        ) {
            let j = product_join(&[&a, &b]).unwrap();
            prop_assert!((j.total() - 1.0).abs() < 1e-12);
            prop_assert!(close(j.marginalize(&[0, 3]).unwrap().values(), a.values(), 1e-14));
            prop_assert!(close(j.marginalize(&[1, 2]).unwrap().values(), b.values(), 1e-14));
        }

        #[test]
        fn factorized_ltv_equals_block_tv(
            a in arb_table(vec![0, 1], 2),
            b in arb_table(vec![0, 1], 2),
            c in arb_table(vec![2], 2),
        ) {
            let part = Arc::new(Partition::new(3, vec![vec![0, 1], vec![2]]).unwrap());
            let p = FactorizedDistribution::new(part.clone(), vec![a.clone(), c.clone()]).unwrap();
            let q = FactorizedDistribution::new(part, vec![b.clone(), c]).unwrap();
            prop_assert_eq!(p.ltv_distance(&q, &[0, 1]).unwrap(), a.tv_distance(&b).unwrap());
            let dense = p.to_dense().unwrap().ltv_distance(&q.to_dense().unwrap(), &[0]).unwrap();
            prop_assert!((p.ltv_distance(&q, &[0]).unwrap() - dense).abs() < 1e-14);
        }
    }
}
