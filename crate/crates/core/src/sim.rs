//! Event-driven simulation of a single M/G/1 queue.
//!
//! Threshold policies keep two classes. Jobs labeled below `T` are served
//! before jobs labeled above. Without preemption both classes are FIFO.
//! With preemption an arriving below job takes the server from whatever is
//! running, including another below job, so the below class runs
//! last-come-first-served preempt-resume; a displaced above job resumes
//! before later above jobs.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{check_rate, residual_work, Label, PredictionModel, ServiceDistribution};
use crate::stats::{ci95_halfwidth, Running};
use crate::{Error, Result, SimRng};

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: u64,
    pub arrival: f64,
    pub size: f64,
    pub remaining: f64,
    pub attained: f64,
    pub predicted_size: Option<f64>,
    pub label: Option<Label>,
    pub first_start: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SchedulingPolicy {
    Fifo,
    Srpt,
    /// Shortest predicted remaining processing time.
    Sprpt { model: PredictionModel },
    ThresholdExact { threshold: f64, preemptive: bool },
    ThresholdPredicted {
        threshold: f64,
        preemptive: bool,
        model: PredictionModel,
    },
}

impl SchedulingPolicy {
    pub fn name(&self) -> String {
        let mode = |p: bool| if p { "preempt" } else { "nonpreempt" };
        match self {
            SchedulingPolicy::Fifo => "fifo".into(),
            SchedulingPolicy::Srpt => "srpt".into(),
            SchedulingPolicy::Sprpt { .. } => "sprpt".into(),
            SchedulingPolicy::ThresholdExact { preemptive, .. } => format!("threshold-{}", mode(*preemptive)),
            SchedulingPolicy::ThresholdPredicted { preemptive, .. } => format!("prediction-{}", mode(*preemptive)),
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match self {
            SchedulingPolicy::ThresholdExact { threshold, .. } | SchedulingPolicy::ThresholdPredicted { threshold, .. } => {
                Some(*threshold)
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.threshold() {
            Some(t) if !(t >= 0.0) => Err(crate::domain("threshold", t, "T >= 0")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub lambda: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub dist: ServiceDistribution<f64>,
}

impl SimConfig {
    /// Warm-up defaults to 10% of the horizon.
    pub fn new(dist: ServiceDistribution<f64>, lambda: f64, horizon: f64, seed: u64) -> Self {
        SimConfig {
            lambda,
            horizon,
            warmup: 0.1 * horizon,
            seed,
            dist,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rate(&self.dist, self.lambda)?;
        if !(self.warmup > 0.0 && self.warmup < self.horizon) || !self.horizon.is_finite() {
            return Err(Error::Config(format!(
                "need 0 < warmup < horizon, got warmup {} and horizon {}",
                self.warmup, self.horizon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub completed_count: u64,
    pub mean_sojourn: f64,
    pub mean_wait: f64,
    /// Sojourn variance within a run; across replication means for aggregates.
    pub sample_variance: f64,
    pub time_avg_workload: f64,
    pub ci95_halfwidth: Option<f64>,
    pub replications: usize,
    pub min_replication_mean: f64,
    pub max_replication_mean: f64,
    /// Largest `|attained - size|` seen at a completion.
    pub max_service_mismatch: f64,
    /// Per-replication mean sojourns (a single entry for one run).
    #[serde(skip)]
    pub replication_means: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Key {
    value: f64,
    arrival: f64,
    id: u64,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.arrival.total_cmp(&other.arrival))
            .then(self.id.cmp(&other.id))
    }
}

enum Waiting {
    Fifo(VecDeque<Job>),
    Ranked(BinaryHeap<Reverse<(Key, JobSlot)>>),
    TwoClass {
        below: VecDeque<Job>,
        above: VecDeque<Job>,
        lifo_below: bool,
    },
}

// Heap payload that compares equal so ordering comes from the key alone.
struct JobSlot(Job);

impl PartialEq for JobSlot {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl Eq for JobSlot {}
impl PartialOrd for JobSlot {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for JobSlot {
    fn cmp(&self, _: &Self) -> Ordering {
        Ordering::Equal
    }
}

struct Scheduler {
    policy: SchedulingPolicy,
    waiting: Waiting,
}

impl Scheduler {
    fn new(policy: SchedulingPolicy) -> Self {
        let waiting = match policy {
            SchedulingPolicy::Fifo => Waiting::Fifo(VecDeque::new()),
            SchedulingPolicy::Srpt | SchedulingPolicy::Sprpt { .. } => Waiting::Ranked(BinaryHeap::new()),
            SchedulingPolicy::ThresholdExact { preemptive, .. } | SchedulingPolicy::ThresholdPredicted { preemptive, .. } => {
                Waiting::TwoClass {
                    below: VecDeque::new(),
                    above: VecDeque::new(),
                    lifo_below: preemptive,
                }
            }
        };
        Scheduler { policy, waiting }
    }

    fn rank(&self, job: &Job) -> Key {
        let value = match self.policy {
            SchedulingPolicy::Sprpt { .. } => job.predicted_size.unwrap_or(job.size) - job.attained,
            _ => job.remaining,
        };
        Key {
            value,
            arrival: job.arrival,
            id: job.id,
        }
    }

    fn preempts(&self, arriving: &Job, running: &Job) -> bool {
        match self.policy {
            SchedulingPolicy::Fifo => false,
            SchedulingPolicy::Srpt | SchedulingPolicy::Sprpt { .. } => self.rank(arriving) < self.rank(running),
            SchedulingPolicy::ThresholdExact { preemptive, .. } | SchedulingPolicy::ThresholdPredicted { preemptive, .. } => {
                preemptive && arriving.label == Some(Label::Below)
            }
        }
    }

    fn enqueue(&mut self, job: Job) {
        let key = self.rank(&job);
        match &mut self.waiting {
            Waiting::Fifo(q) => q.push_back(job),
            Waiting::Ranked(h) => h.push(Reverse((key, JobSlot(job)))),
            Waiting::TwoClass { below, above, .. } => match job.label {
                Some(Label::Below) => below.push_back(job),
                _ => above.push_back(job),
            },
        }
    }

    /// Returns a displaced job to the waiting area.
    fn requeue(&mut self, job: Job) {
        match &mut self.waiting {
            Waiting::TwoClass { below, above, lifo_below } => match job.label {
                Some(Label::Below) if *lifo_below => below.push_back(job),
                Some(Label::Below) => below.push_front(job),
                _ => above.push_front(job),
            },
            _ => self.enqueue(job),
        }
    }

    fn next(&mut self) -> Option<Job> {
        match &mut self.waiting {
            Waiting::Fifo(q) => q.pop_front(),
            Waiting::Ranked(h) => h.pop().map(|Reverse((_, JobSlot(j)))| j),
            Waiting::TwoClass { below, above, lifo_below } => {
                let b = if *lifo_below { below.pop_back() } else { below.pop_front() };
                b.or_else(|| above.pop_front())
            }
        }
    }
}

/// `∫ (w0 - (s - t0)) ds` over `[t0, t1] ∩ [lo, hi]`, with slope 0 when idle.
fn workload_area(w0: f64, busy: bool, t0: f64, t1: f64, lo: f64, hi: f64) -> f64 {
    let a = t0.max(lo);
    let b = t1.min(hi);
    if b <= a {
        return 0.0;
    }
    if busy {
        (b - a) * (w0 - 0.5 * ((a - t0) + (b - t0)))
    } else {
        (b - a) * w0
    }
}

/// Simulates one run from an empty queue.
pub fn run_single(config: &SimConfig, policy: SchedulingPolicy) -> Result<SimStats> {
    config.validate()?;
    policy.validate()?;
    Ok(simulate(config, policy, config.seed))
}

fn simulate(config: &SimConfig, policy: SchedulingPolicy, seed: u64) -> SimStats {
    let mut rng = SimRng::new(seed);
    let mut sched = Scheduler::new(policy);
    let (warmup, horizon) = (config.warmup, config.horizon);
    let interarrival = |rng: &mut SimRng| {
        if config.lambda > 0.0 {
            rng.exponential(config.lambda)
        } else {
            f64::INFINITY
        }
    };

    let mut now = 0.0f64;
    let mut next_arrival = interarrival(&mut rng);
    let mut running: Option<Job> = None;
    let mut workload = 0.0;
    let mut area = 0.0;
    let mut next_id = 0u64;
    let mut sojourn = Running::default();
    let mut wait = Running::default();
    let mut mismatch = 0.0f64;

    loop {
        let completion = running.as_ref().map_or(f64::INFINITY, |j| now + j.remaining);
        let event = completion.min(next_arrival);
        if event > horizon {
            area += workload_area(workload, running.is_some(), now, horizon, warmup, horizon);
            break;
        }
        area += workload_area(workload, running.is_some(), now, event, warmup, horizon);
        if let Some(job) = running.as_mut() {
            let served = event - now;
            job.remaining -= served;
            job.attained += served;
            workload = (workload - served).max(0.0);
        }
        now = event;

        if completion <= next_arrival {
            let job = running.take().expect("completion implies a running job");
            mismatch = mismatch.max((job.attained - job.size).abs());
            if now > warmup {
                sojourn.push(now - job.arrival);
                wait.push(job.first_start.unwrap_or(job.arrival) - job.arrival);
            }
            if let Some(mut next) = sched.next() {
                next.first_start.get_or_insert(now);
                running = Some(next);
            } else {
                workload = 0.0;
            }
        } else {
            let size = config.dist.sample(&mut rng);
            let (predicted_size, label) = match policy {
                SchedulingPolicy::Sprpt { model } => (Some(model.predicted_size(size, &mut rng)), None),
                SchedulingPolicy::ThresholdExact { threshold, .. } => {
                    (None, Some(PredictionModel::label_from_prediction(size, threshold)))
                }
                SchedulingPolicy::ThresholdPredicted { threshold, model, .. } => {
                    let p = model.predicted_size(size, &mut rng);
                    (Some(p), Some(PredictionModel::label_from_prediction(p, threshold)))
                }
                _ => (None, None),
            };
            let mut job = Job {
                id: next_id,
                arrival: now,
                size,
                remaining: size,
                attained: 0.0,
                predicted_size,
                label,
                first_start: None,
            };
            next_id += 1;
            workload += size;
            next_arrival = now + interarrival(&mut rng);
            match running.take() {
                None => {
                    job.first_start = Some(now);
                    running = Some(job);
                }
                Some(current) if sched.preempts(&job, &current) => {
                    sched.requeue(current);
                    job.first_start = Some(now);
                    running = Some(job);
                }
                Some(current) => {
                    sched.enqueue(job);
                    running = Some(current);
                }
            }
        }
    }

    let mean = if sojourn.count() > 0 { sojourn.mean() } else { 0.0 };
    SimStats {
        completed_count: sojourn.count(),
        mean_sojourn: mean,
        mean_wait: if wait.count() > 0 { wait.mean() } else { 0.0 },
        sample_variance: sojourn.variance(),
        time_avg_workload: area / (horizon - warmup),
        ci95_halfwidth: None,
        replications: 1,
        min_replication_mean: mean,
        max_replication_mean: mean,
        max_service_mismatch: mismatch,
        replication_means: vec![mean],
    }
}

/// Runs `reps` replications with seeds derived from `config.seed` and
/// aggregates their means.
pub fn replicate(config: &SimConfig, policy: SchedulingPolicy, reps: usize) -> Result<SimStats> {
    let seeds: Vec<u64> = (0..reps as u64).map(|i| SimRng::derive_seed(config.seed, i)).collect();
    replicate_with_seeds(config, policy, &seeds)
}

pub fn replicate_with_seeds(config: &SimConfig, policy: SchedulingPolicy, seeds: &[u64]) -> Result<SimStats> {
    config.validate()?;
    policy.validate()?;
    if seeds.len() < 2 {
        return Err(Error::Config(format!("need at least 2 replications, got {}", seeds.len())));
    }
    let runs: Vec<SimStats> = seeds.par_iter().map(|&s| simulate(config, policy, s)).collect();
    Ok(aggregate(&runs))
}

/// Averages per-replication means; the CI is Student-t over those means.
pub fn aggregate(runs: &[SimStats]) -> SimStats {
    let means: Vec<f64> = runs.iter().map(|r| r.mean_sojourn).collect();
    let mut across = Running::default();
    means.iter().for_each(|&m| across.push(m));
    let avg = |f: fn(&SimStats) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    SimStats {
        completed_count: runs.iter().map(|r| r.completed_count).sum(),
        mean_sojourn: across.mean(),
        mean_wait: avg(|r| r.mean_wait),
        sample_variance: across.variance(),
        time_avg_workload: avg(|r| r.time_avg_workload),
        ci95_halfwidth: Some(ci95_halfwidth(&means)),
        replications: runs.len(),
        min_replication_mean: means.iter().copied().fold(f64::INFINITY, f64::min),
        max_replication_mean: means.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        max_service_mismatch: runs.iter().map(|r| r.max_service_mismatch).fold(0.0, f64::max),
        replication_means: means,
    }
}

/// Relative gap between the simulated time-average workload and `V / (1 - ρ)`.
pub fn workload_conservation_check(stats: &SimStats, dist: &ServiceDistribution<f64>, lambda: f64) -> Result<f64> {
    let v = residual_work(dist, lambda)?;
    let expected = v / (1.0 - lambda * dist.mean());
    if expected == 0.0 {
        return Ok(stats.time_avg_workload.abs());
    }
    Ok((stats.time_avg_workload - expected).abs() / expected)
}
