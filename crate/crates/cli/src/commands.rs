//! Subcommand implementations. Options arrive already merged with the config
//! file; defaults are applied here.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use onebit::analytic::Advice;
use onebit::cluster::{replicate_cluster, ClusterConfig, ClusterPolicy};
use onebit::experiments::{
    cluster_table, opt_threshold_rows, single_table, sweep, ResultRow, Scale, Source, SweepPolicy, SweepSpec,
};
use onebit::meanfield::{integrate_to_fixed_point, MfParams};
use onebit::reference::{self, ClusterRow, LAMBDAS};
use onebit::{PredictionModel, SimRng};

use crate::args::*;

pub const DEFAULT_SEED: u64 = 1;

/// Exit code 2 for bad input, 3 for numerical failures.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<onebit::Error> for Failure {
    fn from(e: onebit::Error) -> Self {
        use onebit::Error::*;
        match e {
            Domain { .. } | Unstable { .. } | Config(_) => Failure::Usage(e.to_string()),
            Quadrature { .. } | Search(_) | Integration(_) => Failure::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("I/O error: {e}"))
    }
}

fn scale(s: Option<ScaleArg>) -> Scale {
    match s {
        Some(ScaleArg::Full) => Scale::Full,
        _ => Scale::Desk,
    }
}

fn is_weibull(d: Option<DistArg>) -> bool {
    d == Some(DistArg::Weibull)
}

fn lambdas(g: Option<Grid>) -> Result<Vec<f64>, Failure> {
    match g {
        Some(g) => g.values().map_err(Failure::Usage),
        None => Ok(LAMBDAS.to_vec()),
    }
}

fn policies(p: Option<Vec<PolicyArg>>, model: Option<ModelArg>) -> Vec<SweepPolicy> {
    let model = match model {
        Some(ModelArg::Perfect) => PredictionModel::Perfect,
        _ => PredictionModel::Exponential,
    };
    let all = [
        PolicyArg::ThresholdNonpreempt,
        PolicyArg::ThresholdPreempt,
        PolicyArg::PredictionNonpreempt,
        PolicyArg::PredictionPreempt,
    ];
    p.unwrap_or_else(|| all.to_vec())
        .into_iter()
        .map(|p| {
            let (preemptive, advice) = match p {
                PolicyArg::ThresholdNonpreempt => (false, Advice::Exact),
                PolicyArg::ThresholdPreempt => (true, Advice::Exact),
                PolicyArg::PredictionNonpreempt => (false, Advice::Predicted(model)),
                PolicyArg::PredictionPreempt => (true, Advice::Predicted(model)),
            };
            SweepPolicy { preemptive, advice }
        })
        .collect()
}

/// Attaches the published optimum when the row is a published table cell.
fn with_published(mut row: ResultRow, weibull: bool, policy: SweepPolicy) -> ResultRow {
    if policy.advice == Advice::Predicted(PredictionModel::Perfect) {
        return row;
    }
    if let Some(p) = row.lambda.and_then(|l| reference::single_value(weibull, l, &policy.name())) {
        row.published = Some(p);
        row.rel_deviation = Some((row.mean_sojourn - p) / p);
    }
    row
}

pub fn table(weibull: bool, a: TableArgs, seed: u64) -> Result<Vec<ResultRow>, Failure> {
    Ok(single_table(weibull, scale(a.scale), seed)?)
}

pub fn cluster(a: TableArgs, seed: u64) -> Result<Vec<ResultRow>, Failure> {
    Ok(cluster_table(scale(a.scale), seed)?)
}

pub fn opt_threshold(a: OptArgs) -> Result<Vec<ResultRow>, Failure> {
    let weibull = is_weibull(a.dist);
    let lambdas = lambdas(a.lambda)?;
    let mut rows = Vec::new();
    for policy in policies(a.policy, a.model) {
        for row in opt_threshold_rows(weibull, policy, &lambdas)? {
            rows.push(with_published(row, weibull, policy));
        }
    }
    Ok(rows)
}

pub fn run_sweep(a: SweepArgs, seed: u64) -> Result<Vec<ResultRow>, Failure> {
    let weibull = is_weibull(a.dist);
    let lambdas = lambdas(a.lambda)?;
    let policies = policies(a.policy, a.model);
    let (analytic, simulate) = match a.source.unwrap_or(SourceArg::Analytic) {
        SourceArg::Analytic => (true, false),
        SourceArg::Simulation => (false, true),
        SourceArg::Both => (true, true),
    };
    let spec = SweepSpec {
        weibull,
        lambdas: lambdas.clone(),
        thresholds: Vec::new(),
        policies: policies.clone(),
        analytic,
        simulate,
        scale: scale(a.scale),
        reps: a.reps,
        seed,
    };
    match a.threshold.unwrap_or(Thresholds::Optimal) {
        Thresholds::Grid(g) => {
            let thresholds = g.values().map_err(Failure::Usage)?;
            Ok(sweep(&SweepSpec { thresholds, ..spec })?)
        }
        Thresholds::Optimal => {
            let optima = policies
                .iter()
                .map(|&p| opt_threshold_rows(weibull, p, &lambdas))
                .collect::<Result<Vec<_>, _>>()?;
            let mut rows = Vec::new();
            let mut cell = 0u64;
            for (i, &lambda) in lambdas.iter().enumerate() {
                for (&policy, opt) in policies.iter().zip(&optima) {
                    let best = opt[i].clone();
                    let t = best.threshold.expect("optimum has a threshold");
                    if analytic {
                        rows.push(with_published(best, weibull, policy));
                    }
                    if simulate {
                        let one = SweepSpec {
                            lambdas: vec![lambda],
                            thresholds: vec![t],
                            policies: vec![policy],
                            analytic: false,
                            seed: SimRng::derive_seed(seed, cell),
                            ..spec.clone()
                        };
                        for row in sweep(&one)? {
                            rows.push(with_published(row, weibull, policy));
                        }
                    }
                    cell += 1;
                }
            }
            Ok(rows)
        }
    }
}

fn reference_rates(lambda1: f64, lambda2: f64, mean1: f64, mean2: f64) -> bool {
    let r = ClusterConfig::reference(0.0, 0.0);
    (lambda1, lambda2, mean1, mean2) == (r.lambda1, r.lambda2, r.mean1, r.mean2)
}

pub fn meanfield(a: MeanfieldArgs) -> Result<Vec<ResultRow>, Failure> {
    let base = ClusterConfig::reference(a.q1.unwrap_or(0.0), a.q2.unwrap_or(0.0));
    let config = ClusterConfig {
        lambda1: a.lambda1.unwrap_or(base.lambda1),
        lambda2: a.lambda2.unwrap_or(base.lambda2),
        mean1: a.mean1.unwrap_or(base.mean1),
        mean2: a.mean2.unwrap_or(base.mean2),
        ..base
    };
    config.validate()?;
    let d = a.d.unwrap_or(2);
    if d == 0 {
        return Err(Failure::Usage("d must be at least 1".into()));
    }
    let mut opts = scale(a.scale).ode_options();
    opts.dt = a.dt.unwrap_or(opts.dt);
    opts.horizon = a.horizon.unwrap_or(opts.horizon);
    opts.stop_tol = a.stop_tol.unwrap_or(opts.stop_tol);
    opts.max_truncation = a.max_truncation.unwrap_or(opts.max_truncation);
    let truncation = a.truncation.unwrap_or(40);
    if truncation == 0 {
        return Err(Failure::Usage("truncation must be positive".into()));
    }
    let c = &config;
    let params = MfParams::from_model(c.lambda1, c.lambda2, c.mean1, c.mean2, c.q1, c.q2, d, truncation);
    let fp = integrate_to_fixed_point(&params, &opts)?;
    if !fp.converged {
        log::warn!("mean-field integration reached the horizon with residual {:.3e}", fp.residual);
    }
    if let Some(path) = &a.state_out {
        write_state(&fp.state, path)?;
    }
    let row = ClusterRow::Predicted { q1: c.q1, q2: c.q2 };
    let published = if d == 2 && reference_rates(c.lambda1, c.lambda2, c.mean1, c.mean2) {
        reference::CLUSTER.iter().find(|(r, _, _)| *r == row).and_then(|(_, _, o)| *o)
    } else {
        None
    };
    let mean = fp.mean_sojourn();
    Ok(vec![ResultRow {
        scenario: row.id(),
        lambda: None,
        threshold: None,
        policy: format!("one-bit-d{d}"),
        source: Source::Ode,
        mean_sojourn: mean,
        ci95: None,
        published,
        rel_deviation: published.map(|p| (mean - p) / p),
        replications: None,
        diagnostics: format!(
            "time={} steps={} residual={:.3e} converged={} truncation={} boundary_flux={:.3e}",
            fp.time, fp.steps, fp.residual, fp.converged, fp.params.s_max, fp.truncated_mass
        ),
    }])
}

fn write_state(state: &onebit::MfState, path: &Path) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    state.write_csv(&mut out)?;
    std::io::Write::flush(&mut out)?;
    Ok(())
}

pub fn sim_cluster(a: ClusterArgs, seed: u64) -> Result<Vec<ResultRow>, Failure> {
    let scale = scale(a.scale);
    let d = a.d.unwrap_or(2);
    let policy = match a.policy.unwrap_or(ClusterPolicyArg::OneBit) {
        ClusterPolicyArg::OneBit => ClusterPolicy::OneBit { d },
        ClusterPolicyArg::OneChoice => ClusterPolicy::OneChoiceFifo,
        ClusterPolicyArg::ShorterOfTwo => ClusterPolicy::ShorterOfTwoFifo,
        ClusterPolicyArg::LeastLoadedSrpt => ClusterPolicy::LeastLoadedSrpt { d },
    };
    let base = ClusterConfig::reference(a.q1.unwrap_or(0.0), a.q2.unwrap_or(0.0))
        .with_horizon(a.horizon.unwrap_or(scale.cluster_horizon()));
    let config = ClusterConfig {
        n: a.n.unwrap_or(scale.cluster_size()),
        lambda1: a.lambda1.unwrap_or(base.lambda1),
        lambda2: a.lambda2.unwrap_or(base.lambda2),
        mean1: a.mean1.unwrap_or(base.mean1),
        mean2: a.mean2.unwrap_or(base.mean2),
        warmup: a.warmup.unwrap_or(base.warmup),
        seed,
        ..base
    };
    let stats = replicate_cluster(&config, policy, a.reps.unwrap_or(scale.cluster_reps()))?;
    let row = match policy {
        ClusterPolicy::OneBit { d: 2 } => Some(ClusterRow::Predicted {
            q1: config.q1,
            q2: config.q2,
        }),
        ClusterPolicy::OneChoiceFifo => Some(ClusterRow::OneChoice),
        ClusterPolicy::ShorterOfTwoFifo => Some(ClusterRow::ShorterQueueFifo),
        ClusterPolicy::LeastLoadedSrpt { d: 2 } => Some(ClusterRow::LeastLoadedSrpt),
        _ => None,
    };
    let c = &config;
    let published = row
        .filter(|_| reference_rates(c.lambda1, c.lambda2, c.mean1, c.mean2))
        .and_then(|row| reference::CLUSTER.iter().find(|(r, _, _)| *r == row))
        .map(|(_, s, _)| *s);
    let scenario = match row {
        Some(r) => r.id(),
        None => format!("pred-{}-{}", c.q1, c.q2),
    };
    Ok(vec![ResultRow {
        scenario,
        lambda: None,
        threshold: None,
        policy: policy.name(),
        source: Source::Simulation,
        mean_sojourn: stats.mean_sojourn,
        ci95: stats.ci95_halfwidth,
        published,
        rel_deviation: published.map(|p| (stats.mean_sojourn - p) / p),
        replications: Some(stats.replications),
        diagnostics: format!(
            "n={} horizon={} warmup={} jobs={} min={:.4} max={:.4} workload={:.4}",
            c.n,
            c.horizon,
            c.warmup,
            stats.completed_count,
            stats.min_replication_mean,
            stats.max_replication_mean,
            stats.time_avg_workload
        ),
    }])
}
