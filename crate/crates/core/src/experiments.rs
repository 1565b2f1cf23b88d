//! Table and sweep builders shared by the CLI and the acceptance tests.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{
    exp_optimal_threshold_root, fifo_sojourn, optimal_threshold, sojourn, Advice, Metric, PolicyConfig,
};
use crate::cluster::{replicate_cluster, ClusterConfig, ClusterPolicy};
use crate::dist::{PredictionModel, ServiceDistribution};
use crate::meanfield::{integrate_to_fixed_point, IntegrationOptions, MfParams};
use crate::reference::{self, ClusterRow};
use crate::sim::{replicate, SchedulingPolicy, SimConfig};
use crate::{Error, Result, SimRng};

/// Run sizes. `Full` is the published protocol; `Desk` is a scaled-down
/// version that finishes in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

impl Scale {
    pub fn single_horizon(self) -> f64 {
        match self {
            Scale::Desk => 2e5,
            Scale::Full => 1e6,
        }
    }

    pub fn single_reps(self) -> usize {
        match self {
            Scale::Desk => 20,
            Scale::Full => 100,
        }
    }

    pub fn cluster_size(self) -> usize {
        match self {
            Scale::Desk => 200,
            Scale::Full => 1000,
        }
    }

    pub fn cluster_horizon(self) -> f64 {
        match self {
            Scale::Desk => 2e4,
            Scale::Full => 1e5,
        }
    }

    pub fn cluster_reps(self) -> usize {
        match self {
            Scale::Desk => 10,
            Scale::Full => 100,
        }
    }

    pub fn ode_options(self) -> IntegrationOptions<f64> {
        match self {
            Scale::Desk => IntegrationOptions::default(),
            Scale::Full => IntegrationOptions::full_horizon(),
        }
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(Error::Config(format!("unknown scale '{other}' (expected desk or full)"))),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Full => "full",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Analytic,
    Simulation,
    Ode,
}

/// One output row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub lambda: Option<f64>,
    pub threshold: Option<f64>,
    pub policy: String,
    pub source: Source,
    pub mean_sojourn: f64,
    pub ci95: Option<f64>,
    pub published: Option<f64>,
    pub rel_deviation: Option<f64>,
    pub replications: Option<usize>,
    pub diagnostics: String,
}

impl ResultRow {
    fn new(scenario: impl Into<String>, policy: impl Into<String>, source: Source, mean_sojourn: f64) -> Self {
        ResultRow {
            scenario: scenario.into(),
            lambda: None,
            threshold: None,
            policy: policy.into(),
            source,
            mean_sojourn,
            ci95: None,
            published: None,
            rel_deviation: None,
            replications: None,
            diagnostics: String::new(),
        }
    }

    fn published(mut self, value: Option<f64>) -> Self {
        self.published = value;
        self.rel_deviation = value.map(|p| (self.mean_sojourn - p) / p);
        self
    }
}

pub fn distribution_name(weibull: bool) -> &'static str {
    if weibull {
        "weibull"
    } else {
        "exponential"
    }
}

fn dist_for(weibull: bool) -> ServiceDistribution<f64> {
    if weibull {
        ServiceDistribution::Weibull
    } else {
        ServiceDistribution::Exponential
    }
}

/// Analytic column at the optimal threshold.
fn analytic_optimum(weibull: bool, lambda: f64, preemptive: bool, advice: Advice) -> Result<(f64, f64)> {
    let template = PolicyConfig::new(dist_for(weibull), lambda, 1.0, preemptive, advice);
    let opt = optimal_threshold(&template, Metric::Sojourn)?;
    Ok((opt.threshold, opt.value))
}

/// Reproduces one single-queue table (exponential or Weibull service with
/// exponential predictions). FIFO and the four one-bit columns are analytic;
/// SRPT and SPRPT are simulated.
pub fn single_table(weibull: bool, scale: Scale, seed: u64) -> Result<Vec<ResultRow>> {
    let dist = dist_for(weibull);
    let name = distribution_name(weibull);
    let mut rows = Vec::new();
    for (i, &lambda) in reference::LAMBDAS.iter().enumerate() {
        let scenario = format!("{name}-{lambda}");
        let cell = |column: &str, source, value| {
            let mut row = ResultRow::new(scenario.clone(), column, source, value)
                .published(reference::single_value(weibull, lambda, column));
            row.lambda = Some(lambda);
            row
        };
        rows.push(cell("fifo", Source::Analytic, fifo_sojourn(&dist, lambda)?));
        for (column, preemptive, advice) in [
            ("threshold-nonpreempt", false, Advice::Exact),
            ("threshold-preempt", true, Advice::Exact),
            ("prediction-nonpreempt", false, Advice::Predicted(PredictionModel::Exponential)),
            ("prediction-preempt", true, Advice::Predicted(PredictionModel::Exponential)),
        ] {
            let (t, value) = analytic_optimum(weibull, lambda, preemptive, advice)?;
            let mut row = cell(column, Source::Analytic, value);
            row.threshold = Some(t);
            rows.push(row);
        }
        for (j, (column, policy)) in [
            ("srpt", SchedulingPolicy::Srpt),
            (
                "sprpt",
                SchedulingPolicy::Sprpt {
                    model: PredictionModel::Exponential,
                },
            ),
        ]
        .into_iter()
        .enumerate()
        {
            let config = SimConfig::new(
                dist.clone(),
                lambda,
                scale.single_horizon(),
                SimRng::derive_seed(seed, (i * 2 + j) as u64),
            );
            let stats = replicate(&config, policy, scale.single_reps())?;
            let mut row = cell(column, Source::Simulation, stats.mean_sojourn);
            row.ci95 = stats.ci95_halfwidth;
            row.replications = Some(stats.replications);
            row.diagnostics = format!(
                "min={:.4} max={:.4} workload={:.4}",
                stats.min_replication_mean, stats.max_replication_mean, stats.time_avg_workload
            );
            rows.push(row);
        }
    }
    // Keep the published column order within each λ.
    rows.sort_by_key(|r| {
        let l = reference::LAMBDAS.iter().position(|&x| Some(x) == r.lambda).unwrap_or(usize::MAX);
        let c = reference::SINGLE_COLUMNS.iter().position(|&x| x == r.policy).unwrap_or(usize::MAX);
        (l, c)
    });
    Ok(rows)
}

/// Cluster configuration for one table row at the given scale.
pub fn cluster_config(q1: f64, q2: f64, scale: Scale, seed: u64) -> ClusterConfig {
    ClusterConfig {
        n: scale.cluster_size(),
        seed,
        ..ClusterConfig::reference(q1, q2).with_horizon(scale.cluster_horizon())
    }
}

pub fn cluster_policy(row: ClusterRow) -> (ClusterPolicy, f64, f64) {
    match row {
        ClusterRow::OneChoice => (ClusterPolicy::OneChoiceFifo, 0.0, 0.0),
        ClusterRow::LeastLoadedSrpt => (ClusterPolicy::LeastLoadedSrpt { d: 2 }, 0.0, 0.0),
        ClusterRow::ShorterQueueFifo => (ClusterPolicy::ShorterOfTwoFifo, 0.0, 0.0),
        ClusterRow::Predicted { q1, q2 } => (ClusterPolicy::OneBit { d: 2 }, q1, q2),
    }
}

/// Simulated mean sojourn for one cluster row.
pub fn cluster_row(row: ClusterRow, scale: Scale, seed: u64) -> Result<ResultRow> {
    let (policy, q1, q2) = cluster_policy(row);
    let config = cluster_config(q1, q2, scale, seed);
    let stats = replicate_cluster(&config, policy, scale.cluster_reps())?;
    let published = reference::CLUSTER.iter().find(|(r, _, _)| *r == row).map(|(_, s, _)| *s);
    let mut out = ResultRow::new(row.id(), policy.name(), Source::Simulation, stats.mean_sojourn).published(published);
    out.ci95 = stats.ci95_halfwidth;
    out.replications = Some(stats.replications);
    out.diagnostics = format!(
        "n={} horizon={} min={:.4} max={:.4}",
        config.n, config.horizon, stats.min_replication_mean, stats.max_replication_mean
    );
    Ok(out)
}

/// Mean-field fixed point for one `(q1, q2)` row.
pub fn ode_row(q1: f64, q2: f64, options: &IntegrationOptions<f64>, truncation: usize) -> Result<ResultRow> {
    let params = MfParams::from_model(0.225, 0.9, 3.2, 0.2, q1, q2, 2, truncation);
    let fp = integrate_to_fixed_point(&params, options)?;
    let row = ClusterRow::Predicted { q1, q2 };
    let published = reference::CLUSTER.iter().find(|(r, _, _)| *r == row).and_then(|(_, _, o)| *o);
    let mut out = ResultRow::new(row.id(), "one-bit-d2", Source::Ode, fp.mean_sojourn()).published(published);
    out.diagnostics = format!(
        "time={} residual={:.3e} converged={} truncation={} boundary_flux={:.3e}",
        fp.time, fp.residual, fp.converged, fp.params.s_max, fp.truncated_mass
    );
    Ok(out)
}

/// Every cluster row: simulations for all rows, the ODE for prediction rows.
pub fn cluster_table(scale: Scale, seed: u64) -> Result<Vec<ResultRow>> {
    let options = scale.ode_options();
    let jobs: Vec<(usize, ClusterRow, Source)> = reference::CLUSTER
        .iter()
        .enumerate()
        .flat_map(|(i, (row, _, ode))| {
            let sim = Some((i, *row, Source::Simulation));
            let ode = ode.map(|_| (i, *row, Source::Ode));
            sim.into_iter().chain(ode)
        })
        .collect();
    let rows: Vec<Result<ResultRow>> = jobs
        .par_iter()
        .map(|&(i, row, source)| match (source, row) {
            (Source::Ode, ClusterRow::Predicted { q1, q2 }) => ode_row(q1, q2, &options, 40),
            _ => cluster_row(row, scale, SimRng::derive_seed(seed, i as u64)),
        })
        .collect();
    rows.into_iter().collect()
}

/// Policy selector for sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPolicy {
    pub preemptive: bool,
    pub advice: Advice,
}

impl SweepPolicy {
    pub fn name(&self) -> String {
        let kind = match self.advice {
            Advice::Exact => "threshold",
            Advice::Predicted(_) => "prediction",
        };
        let mode = if self.preemptive { "preempt" } else { "nonpreempt" };
        format!("{kind}-{mode}")
    }

    fn sim_policy(&self, threshold: f64) -> SchedulingPolicy {
        match self.advice {
            Advice::Exact => SchedulingPolicy::ThresholdExact {
                threshold,
                preemptive: self.preemptive,
            },
            Advice::Predicted(model) => SchedulingPolicy::ThresholdPredicted {
                threshold,
                preemptive: self.preemptive,
                model,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub weibull: bool,
    pub lambdas: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub policies: Vec<SweepPolicy>,
    pub analytic: bool,
    pub simulate: bool,
    pub scale: Scale,
    /// Overrides the scale's replication count.
    pub reps: Option<usize>,
    pub seed: u64,
}

/// Mean sojourn as a function of the threshold, per `(λ, policy)`.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    if spec.lambdas.is_empty() || spec.thresholds.is_empty() || spec.policies.is_empty() {
        return Err(Error::Config("sweep needs at least one lambda, threshold and policy".into()));
    }
    if let Some(t) = spec.thresholds.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::Config(format!("threshold {t} must be finite and nonnegative")));
    }
    let dist = dist_for(spec.weibull);
    let name = distribution_name(spec.weibull);
    let reps = spec.reps.unwrap_or(spec.scale.single_reps());
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &lambda in &spec.lambdas {
        for policy in &spec.policies {
            for &t in &spec.thresholds {
                let scenario = format!("{name}-{lambda}");
                let tag = |mut r: ResultRow| {
                    r.lambda = Some(lambda);
                    r.threshold = Some(t);
                    r
                };
                if spec.analytic {
                    let b = sojourn(&PolicyConfig::new(dist.clone(), lambda, t, policy.preemptive, policy.advice))?;
                    rows.push(tag(ResultRow::new(scenario.clone(), policy.name(), Source::Analytic, b.s_total)));
                }
                if spec.simulate {
                    let config = SimConfig::new(
                        dist.clone(),
                        lambda,
                        spec.scale.single_horizon(),
                        SimRng::derive_seed(spec.seed, cell),
                    );
                    let stats = replicate(&config, policy.sim_policy(t), reps)?;
                    let mut row = tag(ResultRow::new(scenario, policy.name(), Source::Simulation, stats.mean_sojourn));
                    row.ci95 = stats.ci95_halfwidth;
                    row.replications = Some(stats.replications);
                    rows.push(row);
                }
                cell += 1;
            }
        }
    }
    Ok(rows)
}

/// Optimal threshold per λ. For exponential service with exact advice the
/// closed-form root is reported alongside the numeric optimum.
pub fn opt_threshold_rows(weibull: bool, policy: SweepPolicy, lambdas: &[f64]) -> Result<Vec<ResultRow>> {
    let name = distribution_name(weibull);
    lambdas
        .iter()
        .map(|&lambda| {
            let (t, value) = analytic_optimum(weibull, lambda, policy.preemptive, policy.advice)?;
            let mut row = ResultRow::new(format!("{name}-{lambda}"), policy.name(), Source::Analytic, value);
            row.lambda = Some(lambda);
            row.threshold = Some(t);
            if !weibull && policy.advice == Advice::Exact {
                let root = exp_optimal_threshold_root(lambda)?;
                row.diagnostics = format!("root={root:.10} gap={:.3e}", (t - root).abs());
            }
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_round_trip() {
        for s in [Scale::Desk, Scale::Full] {
            assert_eq!(s.to_string().parse::<Scale>().unwrap(), s);
        }
        assert!("huge".parse::<Scale>().is_err());
    }

    #[test]
    fn sweep_rejects_empty_grid() {
        let spec = SweepSpec {
            weibull: false,
            lambdas: vec![0.8],
            thresholds: vec![],
            policies: vec![SweepPolicy {
                preemptive: false,
                advice: Advice::Exact,
            }],
            analytic: true,
            simulate: false,
            scale: Scale::Desk,
            reps: None,
            seed: 0,
        };
        assert!(matches!(sweep(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn analytic_sweep_rows() {
        let spec = SweepSpec {
            weibull: false,
            lambdas: vec![0.8, 0.9],
            thresholds: vec![0.5, 1.0, 2.0],
            policies: vec![SweepPolicy {
                preemptive: true,
                advice: Advice::Exact,
            }],
            analytic: true,
            simulate: false,
            scale: Scale::Desk,
            reps: None,
            seed: 0,
        };
        let rows = sweep(&spec).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.source == Source::Analytic && r.mean_sojourn > 1.0));
    }

    #[test]
    fn opt_threshold_reports_root_gap() {
        let rows = opt_threshold_rows(
            false,
            SweepPolicy {
                preemptive: false,
                advice: Advice::Exact,
            },
            &[0.5, 0.9],
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].diagnostics.starts_with("root="));
    }

    #[test]
    fn published_deviation() {
        let r = ResultRow::new("x", "fifo", Source::Analytic, 10.5).published(Some(10.0));
        assert!((r.rel_deviation.unwrap() - 0.05).abs() < 1e-12);
    }
}
