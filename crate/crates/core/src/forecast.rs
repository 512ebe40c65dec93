//! Emission means under smoothed marginals (in-sample fit) and one-step
//! predictive means from filter marginals (out-of-sample forecasts).

use rayon::prelude::*;

use crate::distributions::FactorizedDistribution;
use crate::error::{Error, Result};
use crate::graph_inference::block_predict;
use crate::model::{FhmmModel, GaussianEmission};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanKind {
    Smoothed,
    Forecast,
}

impl MeanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Smoothed => "smoothed",
            Self::Forecast => "forecast",
        }
    }
}

/// Per-time, per-factor emission means.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSeries {
    pub kind: MeanKind,
    pub times: Vec<usize>,
    /// `values[i][f]` is the mean of factor `f` at `times[i]`.
    pub values: Vec<Vec<f64>>,
}

/// `E[c sum_{v in N(f)} value(X^v)]` for every factor under `dist`.
pub fn emission_means(model: &FhmmModel<GaussianEmission>, dist: &FactorizedDistribution) -> Result<Vec<f64>> {
    if dist.partition().num_variables() != model.num_variables() {
        return Err(Error::invalid("distribution does not match the model"));
    }
    let emission = model.emission();
    (0..model.graph().num_factors())
        .map(|f| {
            let joint = dist.joint_marginal(model.graph().variables_of(f))?;
            let expected: f64 = joint
                .values()
                .iter()
                .enumerate()
                .map(|(i, p)| p * emission.value_sum(&joint.decode(i)))
                .sum();
            Ok(emission.scale() * expected)
        })
        .collect()
}

/// Smoothed emission means; entry `i` is computed from `smoothers[i]`.
pub fn smoothed_emission_mean(
    model: &FhmmModel<GaussianEmission>,
    smoothers: &[FactorizedDistribution],
) -> Result<MeanSeries> {
    let values = smoothers
        .par_iter()
        .map(|d| emission_means(model, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanSeries {
        kind: MeanKind::Smoothed,
        times: (0..smoothers.len()).collect(),
        values,
    })
}

/// Predictive emission means for time `t + 1` from the filter at time `t`.
pub fn one_step_forecast(model: &FhmmModel<GaussianEmission>, filter: &FactorizedDistribution) -> Result<Vec<f64>> {
    emission_means(model, &block_predict(model, filter)?)
}

/// One-step forecasts from every filter; entry `i` is the forecast for
/// time `i + 1` made from `filters[i]`.
pub fn forecast_series(model: &FhmmModel<GaussianEmission>, filters: &[FactorizedDistribution]) -> Result<MeanSeries> {
    let values = filters
        .par_iter()
        .map(|d| one_step_forecast(model, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanSeries {
        kind: MeanKind::Forecast,
        times: (1..=filters.len()).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::factor_graph::{FactorGraph, Partition};
    use crate::model::{experiment_chain_model, EXPERIMENT_TRANSITION};

    fn two_var(c: f64, transition: Vec<f64>) -> FhmmModel {
        FhmmModel::homogeneous(
            FactorGraph::chain(2).unwrap(),
            2,
            transition,
            vec![0.5, 0.5],
            GaussianEmission::new(vec![0.0, 1.0], c, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn marginals(a: Vec<f64>, b: Vec<f64>) -> FactorizedDistribution {
        FactorizedDistribution::from_variable_marginals(Arc::new(Partition::singleton(2)), &[a, b]).unwrap()
    }

    #[test]
    fn smoothed_mean_examples() {
        let model = two_var(1.0, EXPERIMENT_TRANSITION.to_vec());
        let got = smoothed_emission_mean(&model, &[marginals(vec![0.0, 1.0], vec![0.0, 1.0])]).unwrap();
        assert!((got.values[0][0] - 2.0).abs() < 1e-15);
        let got = emission_means(&model, &marginals(vec![0.5, 0.5], vec![0.5, 0.5])).unwrap();
        assert!((got[0] - 1.0).abs() < 1e-15);
        let model = two_var(2.0, EXPERIMENT_TRANSITION.to_vec());
        let got = emission_means(&model, &marginals(vec![0.6, 0.4], vec![0.2, 0.8])).unwrap();
        assert!((got[0] - 2.4).abs() < 1e-15);
    }

    #[test]
    fn forecast_examples() {
        let model = two_var(1.0, EXPERIMENT_TRANSITION.to_vec());
        let got = one_step_forecast(&model, &marginals(vec![0.0, 1.0], vec![0.0, 1.0])).unwrap();
        assert!((got[0] - 1.6).abs() < 1e-15);

        let identity = two_var(1.5, vec![1.0, 0.0, 0.0, 1.0]);
        let d = marginals(vec![0.3, 0.7], vec![0.9, 0.1]);
        assert_eq!(one_step_forecast(&identity, &d).unwrap(), emission_means(&identity, &d).unwrap());

        let doubly = two_var(1.0, vec![0.3, 0.7, 0.7, 0.3]);
        let got = one_step_forecast(&doubly, &marginals(vec![0.5, 0.5], vec![0.5, 0.5])).unwrap();
        assert!((got[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn means_are_linear_in_scale_and_bounded() {
        let model = experiment_chain_model(5, 1.3, 1.0).unwrap();
        let doubled = experiment_chain_model(5, 2.6, 1.0).unwrap();
        let traj = model.sample_trajectory(10, 4).unwrap();
        let plan = crate::em::singleton_plan(model.graph(), 1, 2).unwrap();
        let run = crate::graph_inference::graph_filter(&model, &plan, &traj.observations).unwrap();
        let a = forecast_series(&model, &run.filters).unwrap();
        let b = forecast_series(&doubled, &run.filters).unwrap();
        assert_eq!(a.times, (1..=11).collect::<Vec<_>>());
        for (ra, rb) in a.values.iter().zip(&b.values) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((2.0 * x - y).abs() < 1e-12);
                assert!(x.abs() <= 1.3 * 2.0 + 1e-12);
            }
        }
        let s = smoothed_emission_mean(&model, &run.filters).unwrap();
        assert_eq!(s.kind, MeanKind::Smoothed);
        assert_eq!(s.values.len(), 11);
    }
}
