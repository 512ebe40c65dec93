//! Exact filtering and smoothing on the flattened state space `X^V`, plus a
//! brute-force trajectory enumerator used as ground truth.
//!
//! The transition `p(x, z) = prod_v p^v(x^v, z^v)` is never materialized:
//! prediction applies the per-variable kernels one at a time, which costs
//! `M L^{M+1}` multiply-adds per step instead of `L^{2M}`.

use crate::distributions::{table_len, DenseTable, NORMALIZATION_TOLERANCE};
use crate::error::{Error, Result};
use crate::model::{EmissionModel, FhmmModel, ObservationSequence};

/// Largest flattened state space the exact recursions accept by default.
pub const DEFAULT_STATE_CAP: usize = 1 << 20;

/// Largest number of trajectories the brute-force enumerator accepts.
pub const BRUTE_FORCE_CAP: u128 = 1 << 24;

/// A normalized distribution over all of `X^V`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    table: DenseTable,
}

impl JointDistribution {
    pub fn new(table: DenseTable, state_cap: usize) -> Result<Self> {
        let m = table.variables().len();
        if table.variables().iter().enumerate().any(|(i, &v)| i != v) {
            return Err(Error::invalid("a joint distribution must cover variables 0..M"));
        }
        check_cap(table.cardinality(), m, state_cap)?;
        if !table.is_normalized() {
            return Err(Error::invalid(format!(
                "joint distribution sums to {}",
                table.total()
            )));
        }
        Ok(Self { table })
    }

    /// `prod_v mu_0^v` for the model.
    pub fn initial<E: EmissionModel>(model: &FhmmModel<E>, state_cap: usize) -> Result<Self> {
        let m = model.num_variables();
        let l = model.cardinality();
        check_cap(l, m, state_cap)?;
        let mut values = vec![1.0];
        for v in 0..m {
            let mu = model.initial(v);
            values = values.iter().flat_map(|&a| mu.iter().map(move |&b| a * b)).collect();
        }
        Ok(Self {
            table: DenseTable::new((0..m).collect(), l, values)?,
        })
    }

    pub fn table(&self) -> &DenseTable {
        &self.table
    }

    pub fn values(&self) -> &[f64] {
        self.table.values()
    }

    pub fn num_variables(&self) -> usize {
        self.table.variables().len()
    }

    pub fn marginal(&self, subset: &[usize]) -> Result<DenseTable> {
        self.table.marginalize(subset)
    }

    pub fn variable_marginal(&self, v: usize) -> Result<Vec<f64>> {
        Ok(self.table.marginalize(&[v])?.into_values())
    }
}

fn check_cap(cardinality: usize, num_variables: usize, state_cap: usize) -> Result<usize> {
    let size = table_len(cardinality, num_variables)?;
    if size > state_cap {
        return Err(Error::Capacity {
            what: format!("state space X^V with M={num_variables}, L={cardinality}"),
            size: size as u128,
            cap: state_cap as u128,
        });
    }
    Ok(size)
}

/// Applies one variable's kernel to a table over `k` variables in place.
///
/// With `transpose == false` this computes `out(.., z, ..) = sum_x p(x, z)
/// in(.., x, ..)` (pushing mass forward); with `transpose == true` it
/// computes `out(.., x, ..) = sum_z p(x, z) in(.., z, ..)`. Returns the
/// number of multiply-adds.
pub(crate) fn apply_variable_kernel(
    values: &mut [f64],
    scratch: &mut Vec<f64>,
    k: usize,
    position: usize,
    l: usize,
    kernel: &[f64],
    transpose: bool,
) -> u64 {
    let stride = l.pow((k - 1 - position) as u32);
    let span = stride * l;
    scratch.clear();
    scratch.extend_from_slice(values);
    let mut ops = 0u64;
    for base in (0..values.len()).step_by(span) {
        for inner in 0..stride {
            for target in 0..l {
                let mut acc = 0.0;
                for source in 0..l {
                    let p = if transpose {
                        kernel[target * l + source]
                    } else {
                        kernel[source * l + target]
                    };
                    acc += p * scratch[base + source * stride + inner];
                }
                values[base + target * stride + inner] = acc;
            }
        }
        ops += (stride * l * l) as u64;
    }
    ops
}

/// Exact prediction `P mu`, counting multiply-adds into `ops`.
pub fn predict_counted<E: EmissionModel>(
    model: &FhmmModel<E>,
    mu: &JointDistribution,
    ops: &mut u64,
) -> Result<JointDistribution> {
    let m = model.num_variables();
    if mu.num_variables() != m || mu.table.cardinality() != model.cardinality() {
        return Err(Error::invalid("distribution does not match the model's state space"));
    }
    let l = model.cardinality();
    let mut values = mu.values().to_vec();
    let mut scratch = Vec::with_capacity(values.len());
    for v in 0..m {
        *ops += apply_variable_kernel(&mut values, &mut scratch, m, v, l, model.transition(v), false);
    }
    Ok(JointDistribution {
        table: DenseTable::new((0..m).collect(), l, values)?,
    })
}

/// Exact prediction `(P mu)(x) = sum_z p(z, x) mu(z)`.
pub fn predict<E: EmissionModel>(model: &FhmmModel<E>, mu: &JointDistribution) -> Result<JointDistribution> {
    predict_counted(model, mu, &mut 0)
}

/// Bayes update `C_t mu`, returning the posterior and `log sum_x g(x, y) mu(x)`.
pub fn correct<E: EmissionModel>(
    model: &FhmmModel<E>,
    mu: &JointDistribution,
    y: &[f64],
) -> Result<(JointDistribution, f64)> {
    let m = model.num_variables();
    if mu.num_variables() != m {
        return Err(Error::invalid("distribution does not match the model's state space"));
    }
    let vars: Vec<usize> = (0..m).collect();
    let factors: Vec<usize> = (0..model.graph().num_factors()).collect();
    let loglik = model.factors_log_table(&vars, &factors, y)?;
    let (values, log_norm) = weight_and_normalize(mu.values(), &loglik)?;
    Ok((
        JointDistribution {
            table: DenseTable::new(vars, model.cardinality(), values)?,
        },
        log_norm,
    ))
}

/// Multiplies `prior` by `exp(loglik)` and normalizes, shifting by the
/// largest log-likelihood on the prior's support. Returns the normalized
/// weights and the log normalizer.
pub(crate) fn weight_and_normalize(prior: &[f64], loglik: &[f64]) -> Result<(Vec<f64>, f64)> {
    let shift = prior
        .iter()
        .zip(loglik)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, l)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::degenerate("likelihood vanishes on the support of the prior"));
    }
    let mut values: Vec<f64> = prior
        .iter()
        .zip(loglik)
        .map(|(p, l)| if *p > 0.0 { p * (l - shift).exp() } else { 0.0 })
        .collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::degenerate(format!("posterior normalizer is {total}")));
    }
    for x in &mut values {
        *x /= total;
    }
    Ok((values, shift + total.ln()))
}

/// Output of [`filter_exact`].
#[derive(Debug, Clone)]
pub struct ExactFilter {
    /// `pi_0, ..., pi_T`.
    pub filters: Vec<JointDistribution>,
    /// `log sum_x g(x, y_t) (P pi_{t-1})(x)` for `t = 1..=T`.
    pub log_normalizers: Vec<f64>,
    /// Multiply-adds spent in prediction.
    pub kernel_ops: u64,
}

impl ExactFilter {
    /// `log p(y_1, ..., y_T)`.
    pub fn log_likelihood(&self) -> f64 {
        self.log_normalizers.iter().sum()
    }
}

/// Exact filter with the default state-space cap.
pub fn filter_exact<E: EmissionModel>(model: &FhmmModel<E>, obs: &ObservationSequence) -> Result<ExactFilter> {
    filter_exact_with_cap(model, obs, DEFAULT_STATE_CAP)
}

pub fn filter_exact_with_cap<E: EmissionModel>(
    model: &FhmmModel<E>,
    obs: &ObservationSequence,
    state_cap: usize,
) -> Result<ExactFilter> {
    let mut filters = vec![JointDistribution::initial(model, state_cap)?];
    let mut log_normalizers = Vec::with_capacity(obs.len());
    let mut kernel_ops = 0;
    for t in 1..=obs.len() {
        let prior = predict_counted(model, filters.last().expect("pi_0 present"), &mut kernel_ops)?;
        let (posterior, log_norm) = correct(model, &prior, obs.at(t))?;
        filters.push(posterior);
        log_normalizers.push(log_norm);
    }
    Ok(ExactFilter {
        filters,
        log_normalizers,
        kernel_ops,
    })
}

/// The backward operator `R_nu mu(x) = nu(x) sum_z p(x, z) mu(z) / (P nu)(z)`.
pub fn backward_step<E: EmissionModel>(
    model: &FhmmModel<E>,
    nu: &JointDistribution,
    mu: &JointDistribution,
) -> Result<JointDistribution> {
    let m = model.num_variables();
    let l = model.cardinality();
    let predicted = predict(model, nu)?;
    let mut ratio: Vec<f64> = Vec::with_capacity(mu.values().len());
    for (z, (&a, &b)) in mu.values().iter().zip(predicted.values()).enumerate() {
        if a == 0.0 {
            ratio.push(0.0);
        } else if b > 0.0 {
            ratio.push(a / b);
        } else {
            return Err(Error::degenerate(format!(
                "backward normalizer is zero at configuration {z} which has smoothed mass {a}"
            )));
        }
    }
    let mut scratch = Vec::with_capacity(ratio.len());
    for v in 0..m {
        apply_variable_kernel(&mut ratio, &mut scratch, m, v, l, model.transition(v), true);
    }
    let mut values: Vec<f64> = ratio.iter().zip(nu.values()).map(|(r, n)| r * n).collect();
    // Renormalize away rounding drift only.
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::degenerate("smoothed distribution has no mass"));
    }
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::degenerate(format!("smoothed distribution sums to {total}")));
    }
    for x in &mut values {
        *x /= total;
    }
    Ok(JointDistribution {
        table: DenseTable::new((0..m).collect(), l, values)?,
    })
}

/// Exact smoother from the filter sequence `pi_0, ..., pi_T`.
pub fn smooth_exact<E: EmissionModel>(
    model: &FhmmModel<E>,
    filters: &[JointDistribution],
) -> Result<Vec<JointDistribution>> {
    let Some(last) = filters.last() else {
        return Err(Error::invalid("no filtering distributions given"));
    };
    let mut smoothed = vec![last.clone()];
    for nu in filters[..filters.len() - 1].iter().rev() {
        let next = backward_step(model, nu, smoothed.last().expect("non-empty"))?;
        smoothed.push(next);
    }
    smoothed.reverse();
    debug_assert!(smoothed.iter().all(|d| (d.table.total() - 1.0).abs() <= NORMALIZATION_TOLERANCE));
    Ok(smoothed)
}

/// Which conditioning the brute-force enumerator computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorMode {
    /// Condition on `y_1, ..., y_t`.
    Filter,
    /// Condition on `y_1, ..., y_T`.
    Smooth,
}

/// Per-configuration log weights used by the enumerator.
struct Weights {
    log_initial: Vec<f64>,
    log_transition: Vec<f64>,
    log_emission: Vec<Vec<f64>>,
    states: usize,
}

fn enumeration_weights<E: EmissionModel>(model: &FhmmModel<E>, obs: &[Vec<f64>]) -> Result<Weights> {
    let m = model.num_variables();
    let l = model.cardinality();
    let states = table_len(l, m)?;
    let decode = |mut index: usize| {
        let mut config = vec![0; m];
        for slot in config.iter_mut().rev() {
            *slot = index % l;
            index /= l;
        }
        config
    };
    let configs: Vec<Vec<usize>> = (0..states).map(decode).collect();
    let log_initial = configs
        .iter()
        .map(|c| c.iter().enumerate().map(|(v, &s)| model.initial(v)[s].ln()).sum())
        .collect();
    let mut log_transition = Vec::with_capacity(states * states);
    for from in &configs {
        for to in &configs {
            let p: f64 = (0..m).map(|v| model.transition(v)[from[v] * l + to[v]]).product();
            log_transition.push(p.ln());
        }
    }
    let log_emission = obs
        .iter()
        .map(|y| configs.iter().map(|c| model.log_likelihood(c, y)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    Ok(Weights {
        log_initial,
        log_transition,
        log_emission,
        states,
    })
}

/// Calls `visit(path, log_weight)` for every trajectory `x_0, ..., x_n`
/// of flattened states, where `n = log_emission.len()`.
fn enumerate(weights: &Weights, mut visit: impl FnMut(&[usize], f64)) {
    let n = weights.log_emission.len();
    let s = weights.states;
    let mut path = vec![0usize; n + 1];
    // partial[i] = log weight of x_0..x_i
    let mut partial = vec![0.0; n + 1];
    let mut start = 0;
    loop {
        for i in start..=n {
            partial[i] = if i == 0 {
                weights.log_initial[path[0]]
            } else {
                partial[i - 1]
                    + weights.log_transition[path[i - 1] * s + path[i]]
                    + weights.log_emission[i - 1][path[i]]
            };
        }
        visit(&path, partial[n]);
        let mut pos = n;
        loop {
            path[pos] += 1;
            if path[pos] < s {
                break;
            }
            path[pos] = 0;
            if pos == 0 {
                return;
            }
            pos -= 1;
        }
        start = pos;
    }
}

fn brute_force_check(model_states: usize, steps: usize) -> Result<()> {
    let size = (model_states as u128).checked_pow(steps as u32 + 1).unwrap_or(u128::MAX);
    if size > BRUTE_FORCE_CAP {
        return Err(Error::Capacity {
            what: format!("trajectory enumeration over {} steps", steps + 1),
            size,
            cap: BRUTE_FORCE_CAP,
        });
    }
    Ok(())
}

/// Marginal on `subset` of the law of `X_t` given the observations, by
/// summing the weight `mu_0 prod p prod g` of every trajectory.
pub fn brute_force_posterior<E: EmissionModel>(
    model: &FhmmModel<E>,
    obs: &ObservationSequence,
    t: usize,
    subset: &[usize],
    mode: PosteriorMode,
) -> Result<DenseTable> {
    if t > obs.len() {
        return Err(Error::invalid(format!("time {t} is past the last observation {}", obs.len())));
    }
    let horizon = match mode {
        PosteriorMode::Filter => t,
        PosteriorMode::Smooth => obs.len(),
    };
    let m = model.num_variables();
    let l = model.cardinality();
    brute_force_check(table_len(l, m)?, horizon)?;
    let weights = enumeration_weights(model, &obs.steps()[..horizon])?;

    let mut shift = f64::NEG_INFINITY;
    enumerate(&weights, |_, w| shift = shift.max(w));
    if !shift.is_finite() {
        return Err(Error::degenerate("every trajectory has zero weight"));
    }
    let mut joint = vec![0.0; weights.states];
    enumerate(&weights, |path, w| joint[path[t]] += (w - shift).exp());
    DenseTable::new((0..m).collect(), l, joint)?.normalize()?.marginalize(subset)
}

/// `log p(y_1, ..., y_T)` by trajectory enumeration.
pub fn brute_force_log_likelihood<E: EmissionModel>(model: &FhmmModel<E>, obs: &ObservationSequence) -> Result<f64> {
    brute_force_check(table_len(model.cardinality(), model.num_variables())?, obs.len())?;
    let weights = enumeration_weights(model, obs.steps())?;
    let mut shift = f64::NEG_INFINITY;
    enumerate(&weights, |_, w| shift = shift.max(w));
    let mut total = 0.0;
    enumerate(&weights, |_, w| total += (w - shift).exp());
    Ok(shift + total.ln())
}
