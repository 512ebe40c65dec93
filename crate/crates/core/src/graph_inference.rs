//! Localized approximate inference: the block-local Bayes update, the Graph
//! Filter and the Graph Smoother.
//!
//! Every distribution is kept as a product of per-block tables over a
//! partition `K`. A block's Bayes update multiplies the product of the
//! blocks covering its radius-`m` neighbourhood `N_v^m(K)` by the factors in
//! `N_f^m(K)` only, then keeps the marginal on the block. Blocks are updated
//! independently (in parallel) within one time step.

use std::sync::Arc;

use rayon::prelude::*;

use crate::distributions::{product_join, table_len, DenseTable, FactorizedDistribution};
use crate::error::{Error, Result};
use crate::exact::{apply_variable_kernel, weight_and_normalize};
use crate::factor_graph::{FactorGraph, Partition};
use crate::model::{EmissionModel, FhmmModel, ObservationSequence};

/// Default cap on `card(U K^) log2 L` for the joint table of one block.
pub const DEFAULT_JOINT_CAP_BITS: u32 = 22;

/// Largest `L^{2|K|}` for which the block transition `p^K` is tabulated;
/// larger blocks apply the per-variable kernels in turn.
const DENSE_KERNEL_CAP: usize = 1 << 22;

/// Locality data for one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPlan {
    /// Variables of `K`.
    pub block: Vec<usize>,
    /// `N_f^m(K)`: factors within distance `2m + 1`.
    pub factors: Vec<usize>,
    /// `N_v^m(K)`: variables within distance `2m + 2`.
    pub variables: Vec<usize>,
    /// Ids of the blocks that intersect `N_v^m(K)`, ascending.
    pub covering_blocks: Vec<usize>,
    /// Sorted union of the covering blocks.
    pub joint_variables: Vec<usize>,
    /// Factors whose lowest-indexed variable lies in `K`; used for the
    /// per-step evidence estimate.
    pub owned_factors: Vec<usize>,
}

/// Neighbourhoods, covering blocks and joint scopes for every block of a
/// partition at radius `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalityPlan {
    partition: Arc<Partition>,
    radius: usize,
    cardinality: usize,
    blocks: Vec<BlockPlan>,
}

impl LocalityPlan {
    pub fn new(graph: &FactorGraph, partition: Arc<Partition>, radius: usize, cardinality: usize) -> Result<Self> {
        Self::with_joint_cap(graph, partition, radius, cardinality, DEFAULT_JOINT_CAP_BITS)
    }

    /// Like [`Self::new`] with a custom cap: every joint table must satisfy
    /// `card(U K^) log2 L <= cap_bits`.
    pub fn with_joint_cap(
        graph: &FactorGraph,
        partition: Arc<Partition>,
        radius: usize,
        cardinality: usize,
        cap_bits: u32,
    ) -> Result<Self> {
        if partition.num_variables() != graph.num_variables() {
            return Err(Error::invalid(format!(
                "partition covers {} variables, graph has {}",
                partition.num_variables(),
                graph.num_variables()
            )));
        }
        if cardinality == 0 {
            return Err(Error::invalid("cardinality must be positive"));
        }
        let cap: u128 = 1u128 << cap_bits.min(127);
        let mut blocks = Vec::with_capacity(partition.num_blocks());
        for (id, block) in partition.blocks().iter().enumerate() {
            let hood = graph.neighborhoods(block, radius)?;
            let mut covering: Vec<usize> = hood.variables.iter().map(|&v| partition.block_of(v)).collect();
            covering.push(id);
            covering.sort_unstable();
            covering.dedup();
            let mut joint_variables: Vec<usize> =
                covering.iter().flat_map(|&b| partition.block(b).iter().copied()).collect();
            joint_variables.sort_unstable();
            let size = (cardinality as u128).checked_pow(joint_variables.len() as u32).unwrap_or(u128::MAX);
            if size > cap {
                return Err(Error::Capacity {
                    what: format!(
                        "joint table of block {id} {block:?} over {} variables",
                        joint_variables.len()
                    ),
                    size,
                    cap,
                });
            }
            let owned_factors = (0..graph.num_factors())
                .filter(|&f| graph.variables_of(f).first().is_some_and(|&v| partition.block_of(v) == id))
                .collect();
            blocks.push(BlockPlan {
                block: block.clone(),
                factors: hood.factors,
                variables: hood.variables,
                covering_blocks: covering,
                joint_variables,
                owned_factors,
            });
        }
        Ok(Self {
            partition,
            radius,
            cardinality,
            blocks,
        })
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn blocks(&self) -> &[BlockPlan] {
        &self.blocks
    }

    /// Factor evaluations one Bayes update performs:
    /// `sum_K |N_f^m(K)| L^{card(U K^)}`.
    pub fn factor_evaluations_per_step(&self) -> u64 {
        self.blocks
            .iter()
            .map(|b| b.factors.len() as u64 * (self.cardinality as u64).pow(b.joint_variables.len() as u32))
            .sum()
    }
}

/// Result of one approximate Bayes update.
#[derive(Debug, Clone)]
pub struct BayesUpdate {
    pub posterior: FactorizedDistribution,
    /// Sum over blocks of `log E[prod_{owned f} g^f]` under the block's
    /// joint prior; exact for the trivial partition.
    pub log_evidence: f64,
    /// Number of `(factor, configuration)` likelihood evaluations.
    pub factor_evaluations: u64,
}

fn check_plan(plan: &LocalityPlan, mu: &FactorizedDistribution) -> Result<()> {
    if mu.partition().as_ref() != plan.partition.as_ref() {
        return Err(Error::invalid("distribution and plan use different partitions"));
    }
    if mu.cardinality() != plan.cardinality {
        return Err(Error::invalid("distribution and plan use different cardinalities"));
    }
    Ok(())
}

struct BlockUpdate {
    table: DenseTable,
    log_evidence: f64,
    evaluations: u64,
}

fn update_block<E: EmissionModel>(
    model: &FhmmModel<E>,
    id: usize,
    plan: &BlockPlan,
    mu: &FactorizedDistribution,
    y: &[f64],
) -> Result<BlockUpdate> {
    let parts: Vec<&DenseTable> = plan.covering_blocks.iter().map(|&b| mu.block(b)).collect();
    let joint = product_join(&parts)?;
    let vars = &plan.joint_variables;

    let mut loglik = vec![0.0; joint.len()];
    let mut evaluations = model.add_factors_log_table(vars, &plan.owned_factors, y, &mut loglik)?;
    let log_evidence = log_expectation(joint.values(), &loglik).map_err(|e| name_block(e, id))?;
    let rest: Vec<usize> = plan
        .factors
        .iter()
        .copied()
        .filter(|f| plan.owned_factors.binary_search(f).is_err())
        .collect();
    evaluations += model.add_factors_log_table(vars, &rest, y, &mut loglik)?;

    let (weighted, _) = weight_and_normalize(joint.values(), &loglik).map_err(|e| name_block(e, id))?;
    let table = DenseTable::new(vars.clone(), joint.cardinality(), weighted)?.marginalize(&plan.block)?;
    Ok(BlockUpdate {
        table,
        log_evidence,
        evaluations,
    })
}

fn name_block(err: Error, id: usize) -> Error {
    match err {
        Error::DegenerateDistribution(msg) => Error::DegenerateDistribution(format!("block {id}: {msg}")),
        other => other,
    }
}

/// `log sum_x p(x) exp(l(x))`, shifted by the largest `l` on the support.
fn log_expectation(p: &[f64], l: &[f64]) -> Result<f64> {
    let shift = p
        .iter()
        .zip(l)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, l)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::degenerate("likelihood vanishes on the support of the prior"));
    }
    let total: f64 = p.iter().zip(l).filter(|(p, _)| **p > 0.0).map(|(p, l)| p * (l - shift).exp()).sum();
    Ok(shift + total.ln())
}

/// The localized, factorized Bayes update `C~_t^m mu`.
pub fn approx_bayes_update<E: EmissionModel>(
    model: &FhmmModel<E>,
    plan: &LocalityPlan,
    mu: &FactorizedDistribution,
    y: &[f64],
) -> Result<BayesUpdate> {
    check_plan(plan, mu)?;
    if y.len() != model.graph().num_factors() {
        return Err(Error::invalid(format!(
            "observation has {} values, graph has {} factors",
            y.len(),
            model.graph().num_factors()
        )));
    }
    let updates: Vec<BlockUpdate> = plan
        .blocks
        .par_iter()
        .enumerate()
        .map(|(id, block)| update_block(model, id, block, mu, y))
        .collect::<Result<_>>()?;
    let log_evidence = updates.iter().map(|u| u.log_evidence).sum();
    let factor_evaluations = updates.iter().map(|u| u.evaluations).sum();
    let posterior = FactorizedDistribution::new(plan.partition.clone(), updates.into_iter().map(|u| u.table).collect())?;
    Ok(BayesUpdate {
        posterior,
        log_evidence,
        factor_evaluations,
    })
}

/// The block transition `p^K = prod_{v in K} p^v`, either tabulated or
/// applied one variable at a time.
enum BlockKernel {
    Dense { size: usize, table: Vec<f64> },
    PerVariable { kernels: Vec<Vec<f64>>, cardinality: usize },
}

impl BlockKernel {
    fn new<E: EmissionModel>(model: &FhmmModel<E>, block: &[usize]) -> Result<Self> {
        let l = model.cardinality();
        let size = table_len(l, block.len())?;
        if size.checked_mul(size).is_some_and(|s| s <= DENSE_KERNEL_CAP) {
            Ok(Self::Dense {
                size,
                table: block_transition(model, block)?,
            })
        } else {
            Ok(Self::PerVariable {
                kernels: block.iter().map(|&v| model.transition(v).to_vec()).collect(),
                cardinality: l,
            })
        }
    }

    /// `out(z) = sum_x p^K(x, z) mu(x)`.
    fn forward(&self, mu: &[f64]) -> Vec<f64> {
        match self {
            Self::Dense { size, table } => {
                let mut out = vec![0.0; *size];
                for (x, &w) in mu.iter().enumerate() {
                    if w != 0.0 {
                        for (o, p) in out.iter_mut().zip(&table[x * size..(x + 1) * size]) {
                            *o += p * w;
                        }
                    }
                }
                out
            }
            Self::PerVariable { kernels, cardinality } => sweep(kernels, *cardinality, mu, false),
        }
    }

    /// `out(x) = sum_z p^K(x, z) h(z)`.
    fn backward(&self, h: &[f64]) -> Vec<f64> {
        match self {
            Self::Dense { size, table } => table
                .chunks(*size)
                .map(|row| row.iter().zip(h).map(|(p, v)| p * v).sum())
                .collect(),
            Self::PerVariable { kernels, cardinality } => sweep(kernels, *cardinality, h, true),
        }
    }
}

fn sweep(kernels: &[Vec<f64>], l: usize, values: &[f64], transpose: bool) -> Vec<f64> {
    let mut out = values.to_vec();
    let mut scratch = Vec::with_capacity(out.len());
    for (pos, kernel) in kernels.iter().enumerate() {
        apply_variable_kernel(&mut out, &mut scratch, kernels.len(), pos, l, kernel, transpose);
    }
    out
}

/// Row-major `p^K(x, z) = prod_{v in K} p^v(x^v, z^v)` over `X^K x X^K`.
pub fn block_transition<E: EmissionModel>(model: &FhmmModel<E>, block: &[usize]) -> Result<Vec<f64>> {
    let l = model.cardinality();
    let size = table_len(l, block.len())?;
    let total = size
        .checked_mul(size)
        .ok_or_else(|| Error::Capacity {
            what: format!("block transition over {} variables", block.len()),
            size: (size as u128) * (size as u128),
            cap: usize::MAX as u128,
        })?;
    let mut table = vec![1.0; total];
    let mut xs = vec![0usize; block.len()];
    let mut zs = vec![0usize; block.len()];
    for x in 0..size {
        decode_into(x, l, &mut xs);
        for z in 0..size {
            decode_into(z, l, &mut zs);
            table[x * size + z] = block
                .iter()
                .enumerate()
                .map(|(i, &v)| model.transition(v)[xs[i] * l + zs[i]])
                .product();
        }
    }
    Ok(table)
}

fn decode_into(mut index: usize, l: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = index % l;
        index /= l;
    }
}

/// Per-block prediction `mu^K(z) <- sum_x p^K(x, z) mu^K(x)`.
pub fn block_predict<E: EmissionModel>(model: &FhmmModel<E>, mu: &FactorizedDistribution) -> Result<FactorizedDistribution> {
    let kernels = block_kernels(model, mu.partition())?;
    predict_with(&kernels, mu)
}

fn block_kernels<E: EmissionModel>(model: &FhmmModel<E>, partition: &Partition) -> Result<Vec<BlockKernel>> {
    if partition.num_variables() != model.num_variables() {
        return Err(Error::invalid("partition does not match the model"));
    }
    partition.blocks().iter().map(|b| BlockKernel::new(model, b)).collect()
}

fn predict_with(kernels: &[BlockKernel], mu: &FactorizedDistribution) -> Result<FactorizedDistribution> {
    let blocks = mu
        .blocks()
        .par_iter()
        .zip(kernels)
        .map(|(table, kernel)| {
            let mut values = kernel.forward(table.values());
            // Kernel rows sum to one; this only removes rounding drift.
            let total: f64 = values.iter().sum();
            values.iter_mut().for_each(|x| *x /= total);
            DenseTable::new(table.variables().to_vec(), table.cardinality(), values)
        })
        .collect::<Result<Vec<_>>>()?;
    FactorizedDistribution::new(mu.partition().clone(), blocks)
}

/// Output of [`graph_filter`].
#[derive(Debug, Clone)]
pub struct GraphFilter {
    /// `pi~_0, ..., pi~_T`.
    pub filters: Vec<FactorizedDistribution>,
    /// Per-step evidence estimates for `t = 1..=T`.
    pub log_evidence: Vec<f64>,
    /// Total likelihood-factor evaluations over all steps.
    pub factor_evaluations: u64,
}

impl GraphFilter {
    /// Sum of the per-step evidence estimates.
    pub fn surrogate_log_likelihood(&self) -> f64 {
        self.log_evidence.iter().sum()
    }
}

/// Product of the per-variable initial marginals, grouped by block.
pub fn initial_distribution<E: EmissionModel>(
    model: &FhmmModel<E>,
    partition: Arc<Partition>,
) -> Result<FactorizedDistribution> {
    let marginals: Vec<Vec<f64>> = (0..model.num_variables()).map(|v| model.initial(v).to_vec()).collect();
    FactorizedDistribution::from_variable_marginals(partition, &marginals)
}

/// The Graph Filter `pi~_t = C~_t^m P pi~_{t-1}`.
pub fn graph_filter<E: EmissionModel>(
    model: &FhmmModel<E>,
    plan: &LocalityPlan,
    obs: &ObservationSequence,
) -> Result<GraphFilter> {
    if plan.cardinality != model.cardinality() {
        return Err(Error::invalid("plan and model use different cardinalities"));
    }
    let kernels = block_kernels(model, &plan.partition)?;
    let mut filters = vec![initial_distribution(model, plan.partition.clone())?];
    let mut log_evidence = Vec::with_capacity(obs.len());
    let mut factor_evaluations = 0;
    for t in 1..=obs.len() {
        let prior = predict_with(&kernels, filters.last().expect("pi~_0 present"))?;
        let update = approx_bayes_update(model, plan, &prior, obs.at(t))
            .map_err(|e| match e {
                Error::DegenerateDistribution(msg) => Error::DegenerateDistribution(format!("time {t}: {msg}")),
                other => other,
            })?;
        filters.push(update.posterior);
        log_evidence.push(update.log_evidence);
        factor_evaluations += update.factor_evaluations;
    }
    Ok(GraphFilter {
        filters,
        log_evidence,
        factor_evaluations,
    })
}

/// Reverse kernel `<-p^K(z, x) ∝ p^K(x, z) pi~^K(x)`, normalized over `x`
/// for each `z`; row-major with `z` as the row.
pub fn backward_block_kernel<E: EmissionModel>(model: &FhmmModel<E>, filter_block: &DenseTable) -> Result<Vec<f64>> {
    if !filter_block.is_normalized() {
        return Err(Error::invalid("filter block table is not normalized"));
    }
    let forward = block_transition(model, filter_block.variables())?;
    let size = filter_block.len();
    let mut reverse = vec![0.0; size * size];
    for z in 0..size {
        let row = &mut reverse[z * size..(z + 1) * size];
        for (x, slot) in row.iter_mut().enumerate() {
            *slot = forward[x * size + z] * filter_block.values()[x];
        }
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Err(Error::degenerate(format!("reverse kernel row {z} has no mass")));
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
    Ok(reverse)
}

/// One backward step for one block:
/// `out(x) = sum_z <-p^K(z, x) smoothed(z)`.
fn smooth_block(kernel: &BlockKernel, filter: &DenseTable, smoothed: &DenseTable) -> Result<DenseTable> {
    let predicted = kernel.forward(filter.values());
    let mut ratio = Vec::with_capacity(predicted.len());
    for (z, (&s, &p)) in smoothed.values().iter().zip(&predicted).enumerate() {
        if s == 0.0 {
            ratio.push(0.0);
        } else if p > 0.0 {
            ratio.push(s / p);
        } else {
            return Err(Error::degenerate(format!(
                "reverse kernel row {z} has no mass but smoothed probability {s}"
            )));
        }
    }
    let back = kernel.backward(&ratio);
    let mut values: Vec<f64> = back.iter().zip(filter.values()).map(|(b, f)| b * f).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::degenerate("smoothed block has no mass"));
    }
    values.iter_mut().for_each(|x| *x /= total);
    DenseTable::new(filter.variables().to_vec(), filter.cardinality(), values)
}

/// The Graph Smoother `pi~_{t|T} = R_{pi~_t} pi~_{t+1|T}`, block by block.
pub fn graph_smoother<E: EmissionModel>(
    model: &FhmmModel<E>,
    plan: &LocalityPlan,
    filters: &[FactorizedDistribution],
) -> Result<Vec<FactorizedDistribution>> {
    let Some(last) = filters.last() else {
        return Err(Error::invalid("no filtering distributions given"));
    };
    if let Some(f) = filters.iter().find(|f| f.partition().as_ref() != plan.partition.as_ref()) {
        check_plan(plan, f)?;
    }
    let kernels = block_kernels(model, &plan.partition)?;
    let mut smoothed = vec![last.clone()];
    for (t, filter) in filters[..filters.len() - 1].iter().enumerate().rev() {
        let next = smoothed.last().expect("non-empty");
        let blocks = kernels
            .par_iter()
            .enumerate()
            .map(|(id, kernel)| {
                smooth_block(kernel, filter.block(id), next.block(id)).map_err(|e| match e {
                    Error::DegenerateDistribution(msg) => {
                        Error::DegenerateDistribution(format!("time {t}, block {id}: {msg}"))
                    }
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        smoothed.push(FactorizedDistribution::new(plan.partition.clone(), blocks)?);
    }
    smoothed.reverse();
    Ok(smoothed)
}
