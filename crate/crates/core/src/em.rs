//! Approximate Baum-Welch for the homogeneous Gaussian FHMM, with the
//! expectations of the E-step taken under Graph Smoother output.
//!
//! All variables share one kernel `p`, one initial marginal `mu_0`, and the
//! emission constants `c` and `sigma^2`; the state values stay fixed.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::distributions::{DenseTable, FactorizedDistribution};
use crate::error::{Error, Result};
use crate::factor_graph::FactorGraph;
use crate::graph_inference::{graph_filter, graph_smoother, LocalityPlan};
use crate::model::{FhmmModel, GaussianEmission, ObservationSequence};

/// Parameters of a homogeneous Gaussian FHMM.
#[derive(Debug, Clone, PartialEq)]
pub struct EmParameters {
    pub mu0: Vec<f64>,
    /// Row-major `L x L`.
    pub transition: Vec<f64>,
    pub c: f64,
    pub sigma2: f64,
}

impl EmParameters {
    /// Reads the shared parameters of a homogeneous model.
    pub fn from_model(model: &FhmmModel) -> Result<Self> {
        let m = model.num_variables();
        if (1..m).any(|v| model.transition(v) != model.transition(0) || model.initial(v) != model.initial(0)) {
            return Err(Error::invalid("EM needs a homogeneous model (same kernel and initial law for all variables)"));
        }
        Ok(Self {
            mu0: model.initial(0).to_vec(),
            transition: model.transition(0).to_vec(),
            c: model.emission().scale(),
            sigma2: model.emission().variance(),
        })
    }

    pub fn to_model(&self, graph: &FactorGraph, state_values: &[f64]) -> Result<FhmmModel> {
        FhmmModel::homogeneous(
            graph.clone(),
            self.mu0.len(),
            self.transition.clone(),
            self.mu0.clone(),
            GaussianEmission::new(state_values.to_vec(), self.c, self.sigma2)?,
        )
    }

    fn max_relative_change(&self, other: &Self) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1e-12);
        let mut worst = rel(self.c, other.c).max(rel(self.sigma2, other.sigma2));
        for (a, b) in self.mu0.iter().chain(&self.transition).zip(other.mu0.iter().chain(&other.transition)) {
            worst = worst.max((a - b).abs());
        }
        worst
    }
}

/// Settings for [`em_fit`].
#[derive(Debug, Clone)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop once `|l_i - l_{i-1}| / |l_{i-1}|` falls below this.
    pub tolerance: f64,
    pub plan: LocalityPlan,
    /// Lower bound applied to every probability before renormalizing.
    pub floor: f64,
}

impl EmConfig {
    pub fn new(plan: LocalityPlan) -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-8,
            plan,
            floor: 1e-8,
        }
    }

    fn check(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.floor > 0.0 && self.floor < 0.1) {
            return Err(Error::invalid(format!("probability floor {} is not in (0, 0.1)", self.floor)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::invalid("tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// One row of the EM trace: the parameters entering iteration `iteration`
/// and their surrogate log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub parameters: EmParameters,
    pub surrogate_log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The E- or M-step broke down; the estimate holds the last good
    /// parameters.
    Degenerate(String),
}

#[derive(Debug, Clone)]
pub struct EmEstimate {
    pub parameters: EmParameters,
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
}

/// `pi~^v_{t-1,t|T}(x, z) = p(x, z) pi~_{t-1}(x) pi~_{t|T}(z) / sum_x' p(x', z) pi~_{t-1}(x')`,
/// as a table over the positional labels `[0, 1]` = `(x, z)`.
pub fn pair_time_smoothing(filter_prev: &[f64], smooth_now: &[f64], transition: &[f64]) -> Result<DenseTable> {
    let l = filter_prev.len();
    if smooth_now.len() != l || transition.len() != l * l {
        return Err(Error::invalid("pairwise smoothing inputs have mismatched sizes"));
    }
    let mut out = vec![0.0; l * l];
    for z in 0..l {
        if smooth_now[z] == 0.0 {
            continue;
        }
        let column: f64 = (0..l).map(|x| transition[x * l + z] * filter_prev[x]).sum();
        if !(column > 0.0) {
            return Err(Error::DegenerateStatistics(format!(
                "state {z} is unreachable from the filter but has smoothed mass {}",
                smooth_now[z]
            )));
        }
        for x in 0..l {
            out[x * l + z] = transition[x * l + z] * filter_prev[x] * smooth_now[z] / column;
        }
    }
    DenseTable::new(vec![0, 1], l, out)
}

/// Outer product of two marginals, over the positional labels `[0, 1]`.
pub fn pair_space_smoothing(left: &[f64], right: &[f64]) -> Result<DenseTable> {
    if left.len() != right.len() {
        return Err(Error::invalid("marginals have different lengths"));
    }
    let values = left.iter().flat_map(|a| right.iter().map(move |b| a * b)).collect();
    DenseTable::new(vec![0, 1], left.len(), values)
}

fn floor_and_normalize(values: &mut [f64], floor: f64) {
    for x in values.iter_mut() {
        *x = x.max(floor);
    }
    let total: f64 = values.iter().sum();
    values.iter_mut().for_each(|x| *x /= total);
}

#[derive(Default)]
struct EmissionSums {
    cross: f64,
    square: f64,
    /// `sum y^2 pi`, `sum y s pi`, `sum s^2 pi` give the residual for any c.
    y_square: f64,
}

/// One M-step from filter and smoother output computed under `current`.
pub fn m_step(
    current: &FhmmModel,
    filters: &[FactorizedDistribution],
    smoothers: &[FactorizedDistribution],
    obs: &ObservationSequence,
    floor: f64,
) -> Result<EmParameters> {
    let steps = obs.len();
    if filters.len() != steps + 1 || smoothers.len() != steps + 1 {
        return Err(Error::invalid("need filter and smoother distributions for t = 0..=T"));
    }
    if steps == 0 {
        return Err(Error::DegenerateStatistics("no observations".into()));
    }
    let l = current.cardinality();
    let m = current.num_variables();
    let graph = current.graph();
    let kernel = EmParameters::from_model(current)?.transition;
    let values = current.emission().state_values();

    let mut mu0 = vec![0.0; l];
    for v in 0..m {
        for (acc, p) in mu0.iter_mut().zip(smoothers[0].variable_marginal(v)?) {
            *acc += p / m as f64;
        }
    }

    let per_step: Vec<(Vec<f64>, Vec<f64>, EmissionSums)> = (1..=steps)
        .into_par_iter()
        .map(|t| -> Result<_> {
            let mut numerator = vec![0.0; l * l];
            let mut denominator = vec![0.0; l];
            for v in 0..m {
                let prev = filters[t - 1].variable_marginal(v)?;
                let now = smoothers[t].variable_marginal(v)?;
                let pair = pair_time_smoothing(&prev, &now, &kernel)?;
                numerator.iter_mut().zip(pair.values()).for_each(|(a, b)| *a += b);
                let before = smoothers[t - 1].variable_marginal(v)?;
                denominator.iter_mut().zip(before).for_each(|(a, b)| *a += b);
            }
            let mut sums = EmissionSums::default();
            for (f, &y) in obs.at(t).iter().enumerate() {
                let scope = graph.variables_of(f);
                let joint = smoothers[t].joint_marginal(scope)?;
                for (index, &p) in joint.values().iter().enumerate() {
                    let s: f64 = joint.decode(index).iter().map(|&x| values[x]).sum();
                    sums.cross += y * s * p;
                    sums.square += s * s * p;
                    sums.y_square += y * y * p;
                }
            }
            Ok((numerator, denominator, sums))
        })
        .collect::<Result<_>>()?;

    let mut numerator = vec![0.0; l * l];
    let mut denominator = vec![0.0; l];
    let mut sums = EmissionSums::default();
    for (n, d, s) in per_step {
        numerator.iter_mut().zip(n).for_each(|(a, b)| *a += b);
        denominator.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        sums.cross += s.cross;
        sums.square += s.square;
        sums.y_square += s.y_square;
    }

    if !(sums.square > 0.0) {
        return Err(Error::DegenerateStatistics(
            "all smoothing mass sits on configurations whose state values sum to zero".into(),
        ));
    }
    let c = sums.cross / sums.square;
    // sum (y - c s)^2 pi = sum y^2 pi - 2 c sum y s pi + c^2 sum s^2 pi
    let residual = sums.y_square - 2.0 * c * sums.cross + c * c * sums.square;
    let sigma2 = residual / (steps * graph.num_factors()) as f64;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::DegenerateStatistics(format!("variance estimate {sigma2} is not positive")));
    }

    let mut transition = vec![0.0; l * l];
    for x in 0..l {
        let row = &mut transition[x * l..(x + 1) * l];
        for (z, slot) in row.iter_mut().enumerate() {
            *slot = if denominator[x] > 0.0 { numerator[x * l + z] / denominator[x] } else { 0.0 };
        }
        floor_and_normalize(row, floor);
    }
    floor_and_normalize(&mut mu0, floor);

    Ok(EmParameters {
        mu0,
        transition,
        c,
        sigma2,
    })
}

/// Slack below which a decrease of the surrogate log-likelihood is ignored.
const MONOTONE_SLACK: f64 = 1e-6;

/// Runs EM from `initial` until the relative change of the surrogate
/// log-likelihood drops below the tolerance or the iteration cap is hit.
pub fn em_fit(initial: &FhmmModel, obs: &ObservationSequence, config: &EmConfig) -> Result<EmEstimate> {
    config.check()?;
    if config.plan.cardinality() != initial.cardinality() {
        return Err(Error::invalid("plan and model use different cardinalities"));
    }
    let graph = initial.graph().clone();
    let values = initial.emission().state_values().to_vec();
    let mut parameters = EmParameters::from_model(initial)?;
    let mut model = initial.clone();
    let mut trace: Vec<TraceRow> = Vec::new();

    let degenerate = |parameters: EmParameters, trace: Vec<TraceRow>, err: Error| match err {
        Error::DegenerateStatistics(msg) | Error::DegenerateDistribution(msg) => Ok(EmEstimate {
            parameters,
            trace,
            termination: Termination::Degenerate(msg),
        }),
        other => Err(other),
    };

    for iteration in 0..=config.max_iterations {
        let filtered = match graph_filter(&model, &config.plan, obs) {
            Ok(f) => f,
            Err(e) => return degenerate(parameters, trace, e),
        };
        let loglik = filtered.surrogate_log_likelihood();
        if let Some(last) = trace.last() {
            if loglik < last.surrogate_log_likelihood - MONOTONE_SLACK {
                log::warn!(
                    "surrogate log-likelihood decreased from {} to {} at iteration {iteration}",
                    last.surrogate_log_likelihood,
                    loglik
                );
            }
        }
        let previous = trace.last().map(|r| r.surrogate_log_likelihood);
        trace.push(TraceRow {
            iteration,
            parameters: parameters.clone(),
            surrogate_log_likelihood: loglik,
        });
        if let Some(prev) = previous {
            if (loglik - prev).abs() <= config.tolerance * prev.abs() {
                return Ok(EmEstimate {
                    parameters,
                    trace,
                    termination: Termination::Converged,
                });
            }
        }
        if iteration == config.max_iterations {
            break;
        }
        let smoothed = match graph_smoother(&model, &config.plan, &filtered.filters) {
            Ok(s) => s,
            Err(e) => return degenerate(parameters, trace, e),
        };
        let next = match m_step(&model, &filtered.filters, &smoothed, obs, config.floor) {
            Ok(p) => p,
            Err(e) => return degenerate(parameters, trace, e),
        };
        log::debug!(
            "iteration {iteration}: loglik {loglik}, largest parameter change {}",
            parameters.max_relative_change(&next)
        );
        model = next.to_model(&graph, &values)?;
        parameters = next;
    }
    Ok(EmEstimate {
        parameters,
        trace,
        termination: Termination::MaxIterations,
    })
}

/// Ranges used by [`random_parameters`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitRanges {
    pub c: (f64, f64),
    pub sigma2: (f64, f64),
}

impl Default for InitRanges {
    fn default() -> Self {
        Self {
            c: (0.5, 4.0),
            sigma2: (1.0, 8.0),
        }
    }
}

fn flat_dirichlet<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x: f64| x / total).collect()
}

/// Random starting point: uniform `c` and `sigma^2` within the ranges,
/// kernel rows and `mu_0` from a flat Dirichlet. Seeded ChaCha8.
pub fn random_parameters(cardinality: usize, ranges: InitRanges, seed: u64) -> EmParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.random_range(ranges.c.0..=ranges.c.1);
    let sigma2 = rng.random_range(ranges.sigma2.0..=ranges.sigma2.1);
    let transition = (0..cardinality).flat_map(|_| flat_dirichlet(&mut rng, cardinality)).collect();
    let mu0 = flat_dirichlet(&mut rng, cardinality);
    EmParameters {
        mu0,
        transition,
        c,
        sigma2,
    }
}

/// Singleton-partition plan at radius `m`, the setting EM is usually run in.
pub fn singleton_plan(graph: &FactorGraph, radius: usize, cardinality: usize) -> Result<LocalityPlan> {
    let partition = Arc::new(crate::factor_graph::Partition::singleton(graph.num_variables()));
    LocalityPlan::new(graph, partition, radius, cardinality)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{experiment_chain_model, EXPERIMENT_TRANSITION};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn pair_time_examples() {
        let got = pair_time_smoothing(&[0.5, 0.5], &[0.5, 0.5], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(close(got.values(), &[0.5, 0.0, 0.0, 0.5], 1e-15));

        let got = pair_time_smoothing(&[0.0, 1.0], &[1.0, 0.0], &EXPERIMENT_TRANSITION).unwrap();
        assert!(close(got.values(), &[0.0, 0.0, 1.0, 0.0], 1e-15));

        let now = [0.3, 0.7];
        let got = pair_time_smoothing(&[0.45, 0.55], &now, &EXPERIMENT_TRANSITION).unwrap();
        assert!(close(got.marginalize(&[1]).unwrap().values(), &now, 1e-15));

        assert!(pair_time_smoothing(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn pair_space_examples() {
        let got = pair_space_smoothing(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!(close(got.values(), &[0.25; 4], 1e-15));
        let got = pair_space_smoothing(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(close(got.values(), &[0.0, 0.0, 1.0, 0.0], 1e-15));
        let got = pair_space_smoothing(&[0.6, 0.4], &[0.2, 0.8]).unwrap();
        assert!(close(got.values(), &[0.12, 0.48, 0.08, 0.32], 1e-15));
    }

    fn point_masses(partition: &Arc<crate::Partition>, states: &[usize]) -> FactorizedDistribution {
        let marginals: Vec<Vec<f64>> = states
            .iter()
            .map(|&s| if s == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        FactorizedDistribution::from_variable_marginals(partition.clone(), &marginals).unwrap()
    }

    #[test]
    fn m_step_collapses_to_counts() {
        let model = experiment_chain_model(3, 1.0, 1.0).unwrap();
        let part = Arc::new(crate::Partition::singleton(3));
        let path = [[1, 0, 1], [1, 1, 0], [0, 1, 0], [0, 0, 1]];
        let dists: Vec<_> = path.iter().map(|s| point_masses(&part, s)).collect();
        // y^f = 2 (x^f + x^{f+1}) + residuals with zero sum
        let steps: Vec<Vec<f64>> = path[1..]
            .iter()
            .map(|s| vec![2.0 * (s[0] + s[1]) as f64 + 0.5, 2.0 * (s[1] + s[2]) as f64 - 0.5])
            .collect();
        let obs = ObservationSequence::new(2, steps).unwrap();
        let est = m_step(&model, &dists, &dists, &obs, 1e-8).unwrap();

        // transitions: 0->0: 2, 0->1: 2, 1->0: 3, 1->1: 2
        let want = [0.5, 0.5, 0.6, 0.4];
        assert!(close(&est.transition, &want, 1e-7));
        assert!(close(&est.mu0, &[1.0 / 3.0, 2.0 / 3.0], 1e-7));
        assert!((est.c - 2.0).abs() < 0.2);
        assert!(est.sigma2 > 0.0);
        for row in est.transition.chunks(2) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn m_step_scale_from_constant_sums() {
        let model = experiment_chain_model(3, 1.0, 1.0).unwrap();
        let part = Arc::new(crate::Partition::singleton(3));
        // states (1, 0, 1): both factors see x + z = 1
        let dists: Vec<_> = (0..3).map(|_| point_masses(&part, &[1, 0, 1])).collect();
        let obs = ObservationSequence::new(2, vec![vec![2.0, 2.0]; 2]).unwrap();
        let est = m_step(&model, &dists, &dists, &obs, 1e-8).unwrap_err();
        // zero residual: variance cannot be estimated
        assert!(matches!(est, Error::DegenerateStatistics(_)));

        let obs = ObservationSequence::new(2, vec![vec![2.5, 1.5], vec![1.5, 2.5]]).unwrap();
        let est = m_step(&model, &dists, &dists, &obs, 1e-8).unwrap();
        assert!((est.c - 2.0).abs() < 1e-12);
        assert!((est.sigma2 - 0.25).abs() < 1e-12);

        let zeros: Vec<_> = (0..3).map(|_| point_masses(&part, &[0, 0, 0])).collect();
        assert!(matches!(
            m_step(&model, &zeros, &zeros, &obs, 1e-8),
            Err(Error::DegenerateStatistics(_))
        ));
    }

    #[test]
    fn config_is_checked() {
        let model = experiment_chain_model(3, 1.0, 1.0).unwrap();
        let obs = model.sample_trajectory(5, 1).unwrap().observations;
        let mut config = EmConfig::new(singleton_plan(model.graph(), 1, 2).unwrap());
        config.max_iterations = 0;
        assert!(em_fit(&model, &obs, &config).is_err());
        config.max_iterations = 3;
        config.floor = 0.5;
        assert!(em_fit(&model, &obs, &config).is_err());
    }

    #[test]
    fn em_trace_stays_feasible() {
        let truth = experiment_chain_model(3, 2.0, 4.0).unwrap();
        let obs = truth.sample_trajectory(60, 5).unwrap().observations;
        let start = random_parameters(2, InitRanges::default(), 3).to_model(truth.graph(), &[0.0, 1.0]).unwrap();
        let mut config = EmConfig::new(singleton_plan(truth.graph(), 1, 2).unwrap());
        config.max_iterations = 30;
        let est = em_fit(&start, &obs, &config).unwrap();
        assert!(!est.trace.is_empty());
        for (i, row) in est.trace.iter().enumerate() {
            assert_eq!(row.iteration, i);
            let p = &row.parameters;
            assert!((p.mu0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for r in p.transition.chunks(2) {
                assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            assert!(p.sigma2 > 0.0);
        }
        assert_eq!(est.trace.last().unwrap().parameters, est.parameters);
    }

    fn largest_step(est: &EmEstimate) -> f64 {
        est.trace
            .windows(2)
            .map(|pair| {
                let (a, b) = (&pair[0].parameters, &pair[1].parameters);
                let mut worst = ((a.c - b.c) / a.c).abs().max(((a.sigma2 - b.sigma2) / a.sigma2).abs());
                for (x, y) in a.transition.iter().zip(&b.transition) {
                    worst = worst.max(((x - y) / x).abs());
                }
                worst
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn start_at_truth_moves_little() {
        let truth = experiment_chain_model(3, 2.0, 4.0).unwrap();
        let obs = truth.sample_trajectory(200, 42).unwrap().observations;

        // With the trivial partition the smoother is exact.
        let exact = LocalityPlan::new(truth.graph(), Arc::new(crate::Partition::trivial(3)), 0, 2).unwrap();
        let mut config = EmConfig::new(exact);
        config.max_iterations = 3;
        assert!(largest_step(&em_fit(&truth, &obs, &config).unwrap()) < 0.05);

        // Singleton marginals inflate the emission residual, so the first
        // steps drift further.
        config.plan = singleton_plan(truth.graph(), 1, 2).unwrap();
        assert!(largest_step(&em_fit(&truth, &obs, &config).unwrap()) < 0.1);
    }

    #[test]
    fn near_noiseless_data_recovers_kernel() {
        let truth = experiment_chain_model(3, 2.0, 1e-6).unwrap();
        let start = EmParameters {
            mu0: vec![0.5, 0.5],
            transition: vec![0.5, 0.5, 0.5, 0.5],
            c: 2.0,
            sigma2: 1e-6,
        }
        .to_model(truth.graph(), &[0.0, 1.0])
        .unwrap();
        let config = EmConfig::new(singleton_plan(truth.graph(), 1, 2).unwrap());
        let mut errors = Vec::new();
        for seed in 0..10 {
            let obs = truth.sample_trajectory(200, seed).unwrap().observations;
            let est = em_fit(&start, &obs, &config).unwrap();
            let err = est
                .parameters
                .transition
                .iter()
                .zip(&EXPERIMENT_TRANSITION)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        // States (0,1,0) and (1,0,1) emit the same values, so single runs
        // are not exactly identifiable; the typical run is.
        errors.sort_by(f64::total_cmp);
        assert!(errors[5] < 0.05, "{errors:?}");
    }

    #[test]
    fn converged_parameters_are_a_fixed_point() {
        let truth = experiment_chain_model(3, 2.0, 4.0).unwrap();
        let obs = truth.sample_trajectory(40, 12).unwrap().observations;
        let plan = singleton_plan(truth.graph(), 1, 2).unwrap();
        let mut config = EmConfig::new(plan.clone());
        config.tolerance = 0.0;
        config.max_iterations = 3000;
        let est = em_fit(&truth, &obs, &config).unwrap();
        let model = est.parameters.to_model(truth.graph(), &[0.0, 1.0]).unwrap();
        let filtered = graph_filter(&model, &plan, &obs).unwrap();
        let smoothed = graph_smoother(&model, &plan, &filtered.filters).unwrap();
        let again = m_step(&model, &filtered.filters, &smoothed, &obs, 1e-8).unwrap();
        assert!(est.parameters.max_relative_change(&again) < 1e-10, "{:?} vs {again:?}", est.parameters);
    }

    #[test]
    fn random_parameters_are_valid() {
        for seed in 0..20 {
            let p = random_parameters(3, InitRanges::default(), seed);
            assert!((0.5..=4.0).contains(&p.c));
            assert!((1.0..=8.0).contains(&p.sigma2));
            assert!((p.mu0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for row in p.transition.chunks(3) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(random_parameters(2, InitRanges::default(), 5), random_parameters(2, InitRanges::default(), 5));
    }
}
