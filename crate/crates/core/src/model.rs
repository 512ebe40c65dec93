//! Factorial HMM definition: per-variable transition kernels and initial
//! marginals, a factorized emission model, observation sequences and
//! forward simulation.
//!
//! The transition of the full state is the product of the per-variable
//! kernels, and the emission likelihood is the product of one factor per
//! factor-graph node, each depending only on the states of the variables it
//! touches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::distributions::{carry_deltas, strides_in, table_len, Odometer};
use crate::error::{Error, Result};
use crate::factor_graph::FactorGraph;

/// A factorized emission likelihood `g(x, y) = prod_f g^f(x^{N(f)}, y^f)`.
pub trait EmissionModel: Send + Sync {
    /// `log g^f` for the states of `N(f)`, listed in ascending variable
    /// order, and the factor's observation `y`.
    fn log_factor(&self, factor: usize, local_states: &[usize], y: f64) -> f64;
}

/// Gaussian emission whose mean is `c` times the sum of the numeric values
/// of the states a factor touches, with variance `sigma^2`.
///
/// On a chain graph this is `y^f ~ N(c (x^f + x^{f+1}), sigma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEmission {
    state_values: Vec<f64>,
    scale: f64,
    variance: f64,
}

impl GaussianEmission {
    /// Only checks shape and finiteness; use [`FhmmModel::validate`] for the
    /// positivity and distinctness constraints.
    pub fn new(state_values: Vec<f64>, scale: f64, variance: f64) -> Result<Self> {
        if state_values.is_empty() {
            return Err(Error::invalid("state_values must be non-empty"));
        }
        if state_values.iter().chain([&scale, &variance]).any(|x| !x.is_finite()) {
            return Err(Error::invalid("emission parameters must be finite"));
        }
        Ok(Self {
            state_values,
            scale,
            variance,
        })
    }

    pub fn state_values(&self) -> &[f64] {
        &self.state_values
    }

    /// The constant `c`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The variance `sigma^2`.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Sum of the numeric values of `local_states`.
    pub fn value_sum(&self, local_states: &[usize]) -> f64 {
        local_states.iter().map(|&s| self.state_values[s]).sum()
    }

    pub fn mean(&self, local_states: &[usize]) -> f64 {
        self.scale * self.value_sum(local_states)
    }

    fn violation(&self) -> Option<String> {
        if self.variance <= 0.0 {
            return Some(format!("sigma2 must be positive, got {}", self.variance));
        }
        if self.scale <= 0.0 {
            return Some(format!("c must be positive, got {}", self.scale));
        }
        for (i, a) in self.state_values.iter().enumerate() {
            if self.state_values[i + 1..].contains(a) {
                return Some(format!("state value {a} appears more than once"));
            }
        }
        None
    }
}

impl EmissionModel for GaussianEmission {
    fn log_factor(&self, _factor: usize, local_states: &[usize], y: f64) -> f64 {
        let r = y - self.mean(local_states);
        -0.5 * (2.0 * std::f64::consts::PI * self.variance).ln() - r * r / (2.0 * self.variance)
    }
}

/// Observations `y_1, ..., y_T`, one real value per factor per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    num_factors: usize,
    steps: Vec<Vec<f64>>,
}

impl ObservationSequence {
    pub fn new(num_factors: usize, steps: Vec<Vec<f64>>) -> Result<Self> {
        for (i, row) in steps.iter().enumerate() {
            if row.len() != num_factors {
                return Err(Error::invalid(format!(
                    "step {} has {} values, expected {num_factors}",
                    i + 1,
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("step {} has a non-finite value", i + 1)));
            }
        }
        Ok(Self { num_factors, steps })
    }

    /// Number of observed steps `T`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn num_factors(&self) -> usize {
        self.num_factors
    }

    /// Observation vector at time `t`, for `1 <= t <= T`.
    pub fn at(&self, t: usize) -> &[f64] {
        &self.steps[t - 1]
    }

    pub fn steps(&self) -> &[Vec<f64>] {
        &self.steps
    }

    /// The first `t` steps.
    pub fn prefix(&self, t: usize) -> Self {
        Self {
            num_factors: self.num_factors,
            steps: self.steps[..t].to_vec(),
        }
    }
}

/// First invariant violated by a model, with its location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// A sampled trajectory: hidden states for `t = 0..=T` and observations for
/// `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<usize>>,
    pub observations: ObservationSequence,
}

const STOCHASTIC_TOLERANCE: f64 = 1e-12;

/// Factorial HMM over a factor graph with `L` states per variable.
///
/// Transition matrices are stored row-major with the source state as the row.
#[derive(Debug, Clone, PartialEq)]
pub struct FhmmModel<E = GaussianEmission> {
    graph: FactorGraph,
    cardinality: usize,
    transitions: Vec<Vec<f64>>,
    initial: Vec<Vec<f64>>,
    emission: E,
}

impl<E: EmissionModel> FhmmModel<E> {
    /// Builds a model and checks every invariant.
    pub fn new(
        graph: FactorGraph,
        cardinality: usize,
        transitions: Vec<Vec<f64>>,
        initial: Vec<Vec<f64>>,
        emission: E,
    ) -> Result<Self>
    where
        Self: Validate,
    {
        let model = Self::from_parts(graph, cardinality, transitions, initial, emission)?;
        model.validate().map_err(|v| Error::invalid(v.0))?;
        Ok(model)
    }

    /// Builds a model checking only array shapes.
    pub fn from_parts(
        graph: FactorGraph,
        cardinality: usize,
        transitions: Vec<Vec<f64>>,
        initial: Vec<Vec<f64>>,
        emission: E,
    ) -> Result<Self> {
        let m = graph.num_variables();
        if cardinality == 0 {
            return Err(Error::invalid("cardinality must be positive"));
        }
        if transitions.len() != m || initial.len() != m {
            return Err(Error::invalid(format!(
                "need one transition matrix and one initial vector per variable ({m})"
            )));
        }
        if let Some(v) = transitions.iter().position(|p| p.len() != cardinality * cardinality) {
            return Err(Error::invalid(format!("transition {v} is not {cardinality}x{cardinality}")));
        }
        if let Some(v) = initial.iter().position(|p| p.len() != cardinality) {
            return Err(Error::invalid(format!("initial vector {v} does not have {cardinality} entries")));
        }
        Ok(Self {
            graph,
            cardinality,
            transitions,
            initial,
            emission,
        })
    }

    /// Same kernel and initial marginal for every variable.
    pub fn homogeneous(
        graph: FactorGraph,
        cardinality: usize,
        transition: Vec<f64>,
        initial: Vec<f64>,
        emission: E,
    ) -> Result<Self>
    where
        Self: Validate,
    {
        let m = graph.num_variables();
        Self::new(graph, cardinality, vec![transition; m], vec![initial; m], emission)
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn num_variables(&self) -> usize {
        self.graph.num_variables()
    }

    /// Row-major `L x L` kernel `p^v(x, z)`.
    pub fn transition(&self, v: usize) -> &[f64] {
        &self.transitions[v]
    }

    pub fn initial(&self, v: usize) -> &[f64] {
        &self.initial[v]
    }

    pub fn emission(&self) -> &E {
        &self.emission
    }

    /// Same model with a different emission.
    pub fn with_emission<F: EmissionModel>(&self, emission: F) -> FhmmModel<F> {
        FhmmModel {
            graph: self.graph.clone(),
            cardinality: self.cardinality,
            transitions: self.transitions.clone(),
            initial: self.initial.clone(),
            emission,
        }
    }

    fn check_config(&self, config: &[usize]) -> Result<()> {
        if config.len() != self.num_variables() {
            return Err(Error::invalid(format!(
                "configuration has {} entries, model has {} variables",
                config.len(),
                self.num_variables()
            )));
        }
        if config.iter().any(|&s| s >= self.cardinality) {
            return Err(Error::invalid("configuration state out of range"));
        }
        Ok(())
    }

    fn check_observation(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.graph.num_factors() {
            return Err(Error::invalid(format!(
                "observation has {} values, graph has {} factors",
                y.len(),
                self.graph.num_factors()
            )));
        }
        Ok(())
    }

    /// The density value `g^f(x^{N(f)}, y)`.
    pub fn emission_factor(&self, factor: usize, local_states: &[usize], y: f64) -> f64 {
        self.emission.log_factor(factor, local_states, y).exp()
    }

    /// `prod_f g^f` for a full configuration.
    pub fn full_likelihood(&self, config: &[usize], y: &[f64]) -> Result<f64> {
        self.check_config(config)?;
        self.check_observation(y)?;
        let mut local = Vec::new();
        let mut product = 1.0;
        for (f, &yf) in y.iter().enumerate() {
            local.clear();
            local.extend(self.graph.variables_of(f).iter().map(|&v| config[v]));
            product *= self.emission_factor(f, &local, yf);
        }
        Ok(product)
    }

    /// `sum_f log g^f` for a full configuration.
    pub fn log_likelihood(&self, config: &[usize], y: &[f64]) -> Result<f64> {
        self.check_config(config)?;
        self.check_observation(y)?;
        let mut local = Vec::new();
        let mut total = 0.0;
        for (f, &yf) in y.iter().enumerate() {
            local.clear();
            local.extend(self.graph.variables_of(f).iter().map(|&v| config[v]));
            total += self.emission.log_factor(f, &local, yf);
        }
        Ok(total)
    }

    /// `log g^f(., y)` for every configuration of `N(f)`, in the mixed-radix
    /// order of a table over `N(f)`.
    pub fn log_factor_table(&self, factor: usize, y: f64) -> Result<Vec<f64>> {
        let vars = self.graph.variables_of(factor);
        let len = table_len(self.cardinality, vars.len())?;
        let mut local = vec![0usize; vars.len()];
        let mut out = Vec::with_capacity(len);
        for mut index in 0..len {
            for slot in local.iter_mut().rev() {
                *slot = index % self.cardinality;
                index /= self.cardinality;
            }
            out.push(self.emission.log_factor(factor, &local, y));
        }
        Ok(out)
    }

    /// `sum_{f in factors} log g^f(x^{N(f)}, y^f)` for every configuration
    /// of the sorted variable list `vars`, which must contain `N(f)` for each
    /// listed factor.
    pub fn factors_log_table(&self, vars: &[usize], factors: &[usize], y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; table_len(self.cardinality, vars.len())?];
        self.add_factors_log_table(vars, factors, y, &mut out)?;
        Ok(out)
    }

    /// Adds the table of [`Self::factors_log_table`] into `out` and returns
    /// the number of factor terms accumulated.
    pub fn add_factors_log_table(&self, vars: &[usize], factors: &[usize], y: &[f64], out: &mut [f64]) -> Result<u64> {
        self.check_observation(y)?;
        let l = self.cardinality;
        let mut terms = 0u64;
        if out.len() != table_len(l, vars.len())? {
            return Err(Error::invalid("output table has the wrong length"));
        }
        for &f in factors {
            let scope = self.graph.variables_of(f);
            if scope.iter().any(|v| vars.binary_search(v).is_err()) {
                return Err(Error::invalid(format!("factor {f} reaches outside variables {vars:?}")));
            }
            let local = self.log_factor_table(f, y[f])?;
            let deltas = carry_deltas(&strides_in(vars, scope, l), l);
            let mut odo = Odometer::new(vars.len(), l);
            let mut offset = 0isize;
            for slot in out.iter_mut() {
                *slot += local[offset as usize];
                terms += 1;
                if let Some(p) = odo.step() {
                    offset += deltas[p];
                }
            }
        }
        Ok(terms)
    }
}

/// Invariant checks; implemented for every model whose emission can report
/// its own constraint violations.
pub trait Validate {
    /// Returns the first violated invariant.
    fn validate(&self) -> std::result::Result<(), Violation>;
}

impl<E: EmissionModel + EmissionConstraints> Validate for FhmmModel<E> {
    fn validate(&self) -> std::result::Result<(), Violation> {
        let l = self.cardinality;
        for (v, p) in self.transitions.iter().enumerate() {
            for (r, row) in p.chunks(l).enumerate() {
                if let Some(x) = row.iter().find(|x| !x.is_finite() || **x < 0.0) {
                    return Err(Violation(format!("row {r} of p^{v} has invalid entry {x}")));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > STOCHASTIC_TOLERANCE {
                    return Err(Violation(format!("row {r} of p^{v} sums to {s}")));
                }
            }
        }
        for (v, mu) in self.initial.iter().enumerate() {
            if let Some(x) = mu.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return Err(Violation(format!("initial marginal of variable {v} has invalid entry {x}")));
            }
            let s: f64 = mu.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return Err(Violation(format!("initial marginal of variable {v} sums to {s}")));
            }
        }
        self.emission
            .constraint_violation(self.cardinality)
            .map_or(Ok(()), |msg| Err(Violation(format!("emission: {msg}"))))
    }
}

/// Parameter constraints an emission model can check against the state
/// cardinality.
pub trait EmissionConstraints {
    fn constraint_violation(&self, cardinality: usize) -> Option<String>;
}

impl EmissionConstraints for GaussianEmission {
    fn constraint_violation(&self, cardinality: usize) -> Option<String> {
        if self.state_values.len() != cardinality {
            return Some(format!(
                "{} state values for cardinality {cardinality}",
                self.state_values.len()
            ));
        }
        self.violation()
    }
}

fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

impl FhmmModel<GaussianEmission> {
    /// Simulates `T` steps.
    ///
    /// The generator is ChaCha8 seeded with `seed_from_u64(seed)`. Each step
    /// draws the variables in ascending order (inverse-CDF on one uniform
    /// `f64` each), then the factors in ascending order (one normal draw
    /// each). Initial states are drawn the same way before the first step.
    pub fn sample_trajectory(&self, num_steps: usize, seed: u64) -> Result<Trajectory> {
        if num_steps < 1 {
            return Err(Error::invalid("trajectory length must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = self.cardinality;
        let m = self.num_variables();
        let sd = self.emission.variance.sqrt();
        if !(sd > 0.0) {
            return Err(Error::invalid("sigma2 must be positive to sample"));
        }

        let mut states = Vec::with_capacity(num_steps + 1);
        states.push((0..m).map(|v| sample_categorical(&mut rng, &self.initial[v])).collect::<Vec<_>>());
        let mut steps = Vec::with_capacity(num_steps);
        let mut local = Vec::new();
        for _ in 0..num_steps {
            let prev: &Vec<usize> = states.last().expect("initial state present");
            let next: Vec<usize> = (0..m)
                .map(|v| {
                    let row = &self.transitions[v][prev[v] * l..(prev[v] + 1) * l];
                    sample_categorical(&mut rng, row)
                })
                .collect();
            let mut y = Vec::with_capacity(self.graph.num_factors());
            for f in 0..self.graph.num_factors() {
                local.clear();
                local.extend(self.graph.variables_of(f).iter().map(|&v| next[v]));
                let normal = Normal::new(self.emission.mean(&local), sd)
                    .map_err(|e| Error::invalid(e.to_string()))?;
                y.push(normal.sample(&mut rng));
            }
            steps.push(y);
            states.push(next);
        }
        Ok(Trajectory {
            states,
            observations: ObservationSequence::new(self.graph.num_factors(), steps)?,
        })
    }
}

/// The kernel `[[0.6, 0.4], [0.2, 0.8]]` used by the synthetic experiments.
pub const EXPERIMENT_TRANSITION: [f64; 4] = [0.6, 0.4, 0.2, 0.8];

/// Homogeneous chain model over states `{0, 1}` started from a point mass
/// at state 1 with the experiment kernel.
pub fn experiment_chain_model(num_variables: usize, scale: f64, variance: f64) -> Result<FhmmModel> {
    FhmmModel::homogeneous(
        FactorGraph::chain(num_variables)?,
        2,
        EXPERIMENT_TRANSITION.to_vec(),
        vec![0.0, 1.0],
        GaussianEmission::new(vec![0.0, 1.0], scale, variance)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_emission() -> GaussianEmission {
        GaussianEmission::new(vec![0.0, 1.0], 1.0, 1.0).unwrap()
    }

    #[test]
    fn emission_factor_examples() {
        let model = experiment_chain_model(3, 1.0, 1.0).unwrap();
        let peak = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((model.emission_factor(0, &[0, 0], 0.0) - peak).abs() < 1e-15);
        assert!((peak - 0.398942).abs() < 1e-6);
        assert!((model.emission_factor(0, &[1, 1], 2.0) - peak).abs() < 1e-15);

        let wide = experiment_chain_model(3, 2.0, 4.0).unwrap();
        let want = (8.0 * std::f64::consts::PI).powf(-0.5) * (-2.0f64).exp();
        assert!((wide.emission_factor(1, &[1, 1], 0.0) - want).abs() < 1e-15);
    }

    #[test]
    fn full_likelihood_examples() {
        let two = experiment_chain_model(2, 1.0, 1.0).unwrap();
        assert_eq!(
            two.full_likelihood(&[1, 0], &[0.3]).unwrap(),
            two.emission_factor(0, &[1, 0], 0.3)
        );

        let three = experiment_chain_model(3, 1.0, 1.0).unwrap();
        let got = three.full_likelihood(&[1, 1, 1], &[2.0, 2.0]).unwrap();
        assert!((got - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);

        let four = experiment_chain_model(4, 1.0, 1.0).unwrap();
        let got = four.full_likelihood(&[0, 0, 0, 0], &[0.0; 3]).unwrap();
        assert!((got - (2.0 * std::f64::consts::PI).powf(-1.5)).abs() < 1e-15);

        assert!(four.full_likelihood(&[0, 0, 0], &[0.0; 3]).is_err());
        assert!(four.full_likelihood(&[0, 0, 0, 0], &[0.0; 2]).is_err());
    }

    #[test]
    fn likelihood_is_positive_and_order_invariant() {
        let model = experiment_chain_model(5, 1.0, 1.0).unwrap();
        let y = [1.5, -0.5, 0.5, 2.0];
        let config = [1, 0, 1, 1, 0];
        let forward = model.full_likelihood(&config, &y).unwrap();
        let mut reversed = 1.0;
        for f in (0..4).rev() {
            let vars = model.graph().variables_of(f);
            reversed *= model.emission_factor(f, &[config[vars[0]], config[vars[1]]], y[f]);
        }
        assert!(((forward - reversed) / forward).abs() < 1e-12);
        let far = [40.0, -30.0, 0.5, 12.0];
        assert!(model.log_likelihood(&config, &far).unwrap().is_finite());
        assert!(model.full_likelihood(&config, &[0.1, 0.2, 0.3, 0.4]).unwrap() > 0.0);
    }

    #[test]
    fn log_factor_table_matches_direct_evaluation() {
        let model = experiment_chain_model(3, 1.5, 0.7).unwrap();
        let table = model.log_factor_table(1, 0.9).unwrap();
        for (i, states) in [[0, 0], [0, 1], [1, 0], [1, 1]].iter().enumerate() {
            assert_eq!(table[i], model.emission().log_factor(1, states, 0.9));
        }
    }

    #[test]
    fn validate_reports_first_violation() {
        let g = FactorGraph::chain(2).unwrap();
        let bad = FhmmModel::from_parts(
            g.clone(),
            2,
            vec![vec![0.5, 0.6, 0.2, 0.8], EXPERIMENT_TRANSITION.to_vec()],
            vec![vec![0.5, 0.5]; 2],
            unit_emission(),
        )
        .unwrap();
        assert_eq!(bad.validate().unwrap_err().0, "row 0 of p^0 sums to 1.1");

        assert!(experiment_chain_model(5, 1.0, 1.0).unwrap().validate().is_ok());

        let zero_var = FhmmModel::from_parts(
            g.clone(),
            2,
            vec![EXPERIMENT_TRANSITION.to_vec(); 2],
            vec![vec![0.5, 0.5]; 2],
            GaussianEmission::new(vec![0.0, 1.0], 1.0, 0.0).unwrap(),
        )
        .unwrap();
        assert!(zero_var.validate().unwrap_err().0.contains("sigma2"));

        let repeated = FhmmModel::from_parts(
            g.clone(),
            2,
            vec![EXPERIMENT_TRANSITION.to_vec(); 2],
            vec![vec![0.5, 0.5]; 2],
            GaussianEmission::new(vec![1.0, 1.0], 1.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!(repeated.validate().is_err());

        let initial = FhmmModel::from_parts(
            g,
            2,
            vec![EXPERIMENT_TRANSITION.to_vec(); 2],
            vec![vec![0.5, 0.4], vec![0.5, 0.5]],
            unit_emission(),
        )
        .unwrap();
        assert!(initial.validate().unwrap_err().0.contains("initial"));
    }

    #[test]
    fn from_parts_checks_shapes() {
        let g = FactorGraph::chain(2).unwrap();
        assert!(FhmmModel::from_parts(g.clone(), 2, vec![vec![1.0; 4]], vec![vec![0.5; 2]; 2], unit_emission()).is_err());
        assert!(FhmmModel::from_parts(g, 2, vec![vec![1.0; 3]; 2], vec![vec![0.5; 2]; 2], unit_emission()).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = experiment_chain_model(4, 1.0, 1.0).unwrap();
        let a = model.sample_trajectory(50, 7).unwrap();
        let b = model.sample_trajectory(50, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, model.sample_trajectory(50, 8).unwrap());
        assert_eq!(a.states.len(), 51);
        assert_eq!(a.observations.len(), 50);
        assert!(a.states[0].iter().all(|&s| s == 1));
        assert!(model.sample_trajectory(0, 7).is_err());
    }

    #[test]
    fn noiseless_sampling_tracks_the_mean() {
        let model = FhmmModel::homogeneous(
            FactorGraph::chain(4).unwrap(),
            3,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
            GaussianEmission::new(vec![-1.0, 0.0, 1.0], 1.5, 1e-12).unwrap(),
        )
        .unwrap();
        let traj = model.sample_trajectory(10, 3).unwrap();
        for t in 1..=10 {
            for &y in traj.observations.at(t) {
                assert!((y - 3.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn stationary_frequency_of_experiment_chain() {
        // Stationary law of [[0.6, 0.4], [0.2, 0.8]] is (1/3, 2/3).
        let model = experiment_chain_model(5, 1.0, 1.0).unwrap();
        let traj = model.sample_trajectory(500, 11).unwrap();
        let ones: usize = traj.states[1..].iter().map(|s| s.iter().filter(|&&x| x == 1).count()).sum();
        let freq = ones as f64 / 2500.0;
        assert!((freq - 2.0 / 3.0).abs() < 0.05, "{freq}");
    }

    #[test]
    fn transitions_pass_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let model = experiment_chain_model(2, 1.0, 1.0).unwrap();
        let traj = model.sample_trajectory(50_000, 2024).unwrap();
        let mut counts = [[0f64; 2]; 2];
        for w in traj.states.windows(2) {
            for v in 0..2 {
                counts[w[0][v]][w[1][v]] += 1.0;
            }
        }
        let mut stat = 0.0;
        for x in 0..2 {
            let n: f64 = counts[x].iter().sum();
            for z in 0..2 {
                let expected = n * EXPERIMENT_TRANSITION[2 * x + z];
                stat += (counts[x][z] - expected).powi(2) / expected;
            }
        }
        // one degree of freedom per row
        let critical = ChiSquared::new(2.0).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "chi-square {stat} >= {critical}");
    }
}
