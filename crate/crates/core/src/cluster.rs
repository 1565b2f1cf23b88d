//! Simulation of `n` queues with power-of-`d` dispatch and two job types.
//!
//! Long jobs (type 1) and short jobs (type 2) arrive at each queue's share
//! of the total rate. A long job is labeled short with probability `q1`; a
//! short job is labeled long with probability `q2`. Service times are
//! exponential with the job's actual type's mean. The `d` queues an arrival
//! inspects are drawn independently with replacement.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::sim::{aggregate, SimStats};
use crate::stats::Running;
use crate::{Error, Result, Scalar, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterConfig {
    pub n: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Mean service time of long jobs.
    pub mean1: f64,
    /// Mean service time of short jobs.
    pub mean2: f64,
    pub q1: f64,
    pub q2: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
}

impl ClusterConfig {
    /// 1000 queues, `λ₁ = 0.225`, `λ₂ = 0.9`, means 3.2 and 0.2 (load 0.9),
    /// horizon 10⁵ with warm-up 10⁴.
    pub fn reference(q1: f64, q2: f64) -> Self {
        ClusterConfig {
            n: 1000,
            lambda1: 0.225,
            lambda2: 0.9,
            mean1: 3.2,
            mean2: 0.2,
            q1,
            q2,
            horizon: 1e5,
            warmup: 1e4,
            seed: 0,
        }
    }

    /// Sets the horizon and a 10% warm-up.
    pub fn with_horizon(self, horizon: f64) -> Self {
        ClusterConfig {
            horizon,
            warmup: 0.1 * horizon,
            ..self
        }
    }

    pub fn load(&self) -> f64 {
        self.lambda1 * self.mean1 + self.lambda2 * self.mean2
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return fail("need at least one queue".into());
        }
        if !(self.mean1 > self.mean2 && self.mean2 > 0.0) {
            return fail(format!("need mean1 > mean2 > 0, got {} and {}", self.mean1, self.mean2));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return fail("arrival rates must be nonnegative".into());
        }
        if !((0.0..=1.0).contains(&self.q1) && (0.0..=1.0).contains(&self.q2)) {
            return fail(format!("q1, q2 must lie in [0, 1], got {} and {}", self.q1, self.q2));
        }
        if !(self.load() < 1.0) {
            return Err(Error::Unstable { load: self.load() });
        }
        if !(self.warmup > 0.0 && self.warmup < self.horizon) || !self.horizon.is_finite() {
            return fail(format!(
                "need 0 < warmup < horizon, got warmup {} and horizon {}",
                self.warmup, self.horizon
            ));
        }
        Ok(())
    }

    pub fn derived_rates(&self) -> DerivedRates<f64> {
        DerivedRates::compute(self.lambda1, self.lambda2, self.q1, self.q2)
    }
}

/// Label-level rates: `p_L` (`p_S`) is the probability a job labeled long
/// (short) really is long (short).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedRates<S> {
    pub p_long: S,
    pub p_short: S,
    pub lambda_long: S,
    pub lambda_short: S,
}

impl<S: Scalar> DerivedRates<S> {
    /// A label that never occurs gets probability 1 and rate 0.
    pub fn compute(lambda1: S, lambda2: S, q1: S, q2: S) -> Self {
        let one = S::one();
        let true_long = lambda1 * (one - q1);
        let true_short = lambda2 * (one - q2);
        let lambda_long = true_long + lambda2 * q2;
        let lambda_short = true_short + lambda1 * q1;
        let ratio = |num: S, den: S| if den > S::zero() { num / den } else { one };
        DerivedRates {
            p_long: ratio(true_long, lambda_long),
            p_short: ratio(true_short, lambda_short),
            lambda_long,
            lambda_short,
        }
    }
}

pub fn derived_rates(config: &ClusterConfig) -> DerivedRates<f64> {
    config.derived_rates()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ClusterPolicy {
    /// Labeled-short priority, non-preemptive, best of `d` by label.
    OneBit { d: u32 },
    OneChoiceFifo,
    /// FIFO at the queue with fewer jobs of two.
    ShorterOfTwoFifo,
    /// Preemptive SRPT at the queue with least unfinished work of `d`.
    LeastLoadedSrpt { d: u32 },
}

impl ClusterPolicy {
    pub fn name(&self) -> String {
        match self {
            ClusterPolicy::OneBit { d } => format!("one-bit-d{d}"),
            ClusterPolicy::OneChoiceFifo => "one-choice-fifo".into(),
            ClusterPolicy::ShorterOfTwoFifo => "shorter-of-two-fifo".into(),
            ClusterPolicy::LeastLoadedSrpt { d } => format!("least-loaded-srpt-d{d}"),
        }
    }

    fn choices(&self) -> u32 {
        match self {
            ClusterPolicy::OneBit { d } | ClusterPolicy::LeastLoadedSrpt { d } => *d,
            ClusterPolicy::OneChoiceFifo => 1,
            ClusterPolicy::ShorterOfTwoFifo => 2,
        }
    }
}

/// What an arriving labeled job sees at a sampled queue. Counts exclude the
/// job in service.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueView {
    pub empty: bool,
    pub short: usize,
    pub long: usize,
}

/// Picks among sampled queues: an empty queue first, then the
/// lexicographically smallest `(short, long)` for a labeled-short arrival or
/// `(long, short)` for a labeled-long one. Remaining ties are uniform.
pub fn choose_queue(samples: &[QueueView], labeled_short: bool, rng: &mut SimRng) -> usize {
    let key = |v: &QueueView| {
        let (a, b) = if labeled_short { (v.short, v.long) } else { (v.long, v.short) };
        (!v.empty, a, b)
    };
    argmin_uniform(samples, key, rng)
}

fn argmin_uniform<T, K: Ord>(items: &[T], key: impl Fn(&T) -> K, rng: &mut SimRng) -> usize {
    let mut best = 0;
    let mut best_key = key(&items[0]);
    let mut ties = 1;
    for (i, item) in items.iter().enumerate().skip(1) {
        let k = key(item);
        match k.cmp(&best_key) {
            Ordering::Less => {
                best = i;
                best_key = k;
                ties = 1;
            }
            Ordering::Equal => {
                ties += 1;
                if rng.index(ties) == 0 {
                    best = i;
                }
            }
            Ordering::Greater => {}
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ClusterJob {
    arrival: f64,
    remaining: f64,
    labeled_short: bool,
    /// NaN until the job first enters service.
    first_start: f64,
}

/// SRPT heap entry ordered by remaining work, then admission order.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ranked(f64, u64, ClusterJob);

impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Default)]
struct Server {
    short: VecDeque<ClusterJob>,
    long: VecDeque<ClusterJob>,
    ranked: BinaryHeap<Reverse<Ranked>>,
    running: Option<ClusterJob>,
    /// When `running.remaining` was last brought up to date.
    started: f64,
    epoch: u64,
    /// Unfinished work as of `work_time`.
    work: f64,
    work_time: f64,
}

impl Server {
    fn view(&self) -> QueueView {
        QueueView {
            empty: self.running.is_none(),
            short: self.short.len(),
            long: self.long.len(),
        }
    }

    fn jobs(&self) -> usize {
        self.running.is_some() as usize + self.short.len() + self.long.len() + self.ranked.len()
    }

    fn work_at(&self, now: f64) -> f64 {
        if self.running.is_some() {
            (self.work - (now - self.work_time)).max(0.0)
        } else {
            0.0
        }
    }

    fn add_work(&mut self, now: f64, amount: f64) {
        self.work = self.work_at(now) + amount;
        self.work_time = now;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Completion {
    time: f64,
    server: usize,
    epoch: u64,
}

impl Eq for Completion {}
impl PartialOrd for Completion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Completion {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.server.cmp(&other.server))
    }
}

struct Cluster {
    policy: ClusterPolicy,
    servers: Vec<Server>,
    completions: BinaryHeap<Reverse<Completion>>,
    seq: u64,
}

impl Cluster {
    fn start(&mut self, idx: usize, mut job: ClusterJob, now: f64) {
        if job.first_start.is_nan() {
            job.first_start = now;
        }
        let server = &mut self.servers[idx];
        server.epoch += 1;
        server.started = now;
        server.running = Some(job);
        self.completions.push(Reverse(Completion {
            time: now + job.remaining,
            server: idx,
            epoch: server.epoch,
        }));
    }

    fn admit(&mut self, idx: usize, job: ClusterJob, now: f64) {
        let seq = self.seq;
        self.seq += 1;
        let policy = self.policy;
        let server = &mut self.servers[idx];
        server.add_work(now, job.remaining);
        let Some(mut current) = server.running else {
            self.start(idx, job, now);
            return;
        };
        match policy {
            ClusterPolicy::LeastLoadedSrpt { .. } => {
                current.remaining -= now - server.started;
                server.started = now;
                if job.remaining < current.remaining {
                    server.ranked.push(Reverse(Ranked(current.remaining, seq, current)));
                    self.start(idx, job, now);
                } else {
                    // Completion time is unchanged, so the pending event stays valid.
                    server.running = Some(current);
                    server.ranked.push(Reverse(Ranked(job.remaining, seq, job)));
                }
            }
            ClusterPolicy::OneBit { .. } if job.labeled_short => server.short.push_back(job),
            _ => server.long.push_back(job),
        }
    }

    fn complete(&mut self, idx: usize, now: f64) -> ClusterJob {
        let server = &mut self.servers[idx];
        let done = server.running.take().expect("completion for idle server");
        let next = match server.ranked.pop() {
            Some(Reverse(Ranked(_, _, job))) => Some(job),
            None => server.short.pop_front().or_else(|| server.long.pop_front()),
        };
        match next {
            Some(job) => self.start(idx, job, now),
            None => {
                server.work = 0.0;
                server.work_time = now;
            }
        }
        done
    }
}

/// Simulates one run from empty queues.
pub fn run_cluster(config: &ClusterConfig, policy: ClusterPolicy) -> Result<SimStats> {
    config.validate()?;
    validate_policy(policy)?;
    Ok(simulate(config, policy, config.seed))
}

fn validate_policy(policy: ClusterPolicy) -> Result<()> {
    if policy.choices() == 0 {
        return Err(Error::Config("need at least one choice".into()));
    }
    Ok(())
}

fn simulate(config: &ClusterConfig, policy: ClusterPolicy, seed: u64) -> SimStats {
    let mut rng = SimRng::new(seed);
    let n = config.n;
    let total_rate = (config.lambda1 + config.lambda2) * n as f64;
    let p_long = if total_rate > 0.0 {
        config.lambda1 / (config.lambda1 + config.lambda2)
    } else {
        0.0
    };
    let d = policy.choices() as usize;
    let mut cluster = Cluster {
        policy,
        servers: (0..n).map(|_| Server::default()).collect(),
        completions: BinaryHeap::new(),
        seq: 0,
    };
    let interarrival = |rng: &mut SimRng| {
        if total_rate > 0.0 {
            rng.exponential(total_rate)
        } else {
            f64::INFINITY
        }
    };

    let (warmup, horizon) = (config.warmup, config.horizon);
    let mut now = 0.0f64;
    let mut next_arrival = interarrival(&mut rng);
    let mut sojourn = Running::default();
    let mut wait = Running::default();
    let mut total_work = 0.0;
    let mut busy = 0usize;
    let mut area = 0.0;
    let mut picks = vec![0usize; d];
    let mut views = vec![
        QueueView {
            empty: true,
            short: 0,
            long: 0
        };
        d
    ];

    loop {
        // Drop completions invalidated by preemption.
        while let Some(Reverse(c)) = cluster.completions.peek() {
            if cluster.servers[c.server].epoch != c.epoch || cluster.servers[c.server].running.is_none() {
                cluster.completions.pop();
            } else {
                break;
            }
        }
        let completion = cluster.completions.peek().map(|Reverse(c)| *c);
        let event = completion.map_or(f64::INFINITY, |c| c.time).min(next_arrival);
        let until = event.min(horizon);
        let (a, b) = (now.max(warmup), until);
        if b > a {
            let w0 = total_work - busy as f64 * (a - now);
            area += (b - a) * (w0 - 0.5 * busy as f64 * (b - a));
        }
        if event > horizon {
            break;
        }
        total_work = (total_work - busy as f64 * (event - now)).max(0.0);
        now = event;

        match completion {
            Some(c) if c.time <= next_arrival => {
                cluster.completions.pop();
                let done = cluster.complete(c.server, now);
                if cluster.servers[c.server].running.is_none() {
                    busy -= 1;
                }
                if now > warmup {
                    sojourn.push(now - done.arrival);
                    wait.push(done.first_start - done.arrival);
                }
            }
            _ => {
                next_arrival = now + interarrival(&mut rng);
                let long = rng.bernoulli(p_long);
                let size = rng.exponential(1.0) * if long { config.mean1 } else { config.mean2 };
                let flip = rng.bernoulli(if long { config.q1 } else { config.q2 });
                let labeled_short = long == flip;
                for p in picks.iter_mut() {
                    *p = rng.index(n);
                }
                let chosen = match policy {
                    ClusterPolicy::OneBit { .. } => {
                        for (v, &p) in views.iter_mut().zip(&picks) {
                            *v = cluster.servers[p].view();
                        }
                        picks[choose_queue(&views, labeled_short, &mut rng)]
                    }
                    ClusterPolicy::OneChoiceFifo => picks[0],
                    ClusterPolicy::ShorterOfTwoFifo => {
                        picks[argmin_uniform(&picks, |&p| cluster.servers[p].jobs(), &mut rng)]
                    }
                    ClusterPolicy::LeastLoadedSrpt { .. } => {
                        let work: Vec<f64> = picks.iter().map(|&p| cluster.servers[p].work_at(now)).collect();
                        picks[argmin_uniform(&work, |w| OrdF64(*w), &mut rng)]
                    }
                };
                if cluster.servers[chosen].running.is_none() {
                    busy += 1;
                }
                total_work += size;
                cluster.admit(
                    chosen,
                    ClusterJob {
                        arrival: now,
                        remaining: size,
                        labeled_short,
                        first_start: f64::NAN,
                    },
                    now,
                );
            }
        }
    }

    let mean = if sojourn.count() > 0 { sojourn.mean() } else { 0.0 };
    SimStats {
        completed_count: sojourn.count(),
        mean_sojourn: mean,
        mean_wait: if wait.count() > 0 { wait.mean() } else { 0.0 },
        sample_variance: sojourn.variance(),
        time_avg_workload: area / ((horizon - warmup) * n as f64),
        ci95_halfwidth: None,
        replications: 1,
        min_replication_mean: mean,
        max_replication_mean: mean,
        max_service_mismatch: 0.0,
        replication_means: vec![mean],
    }
}

#[derive(PartialEq, PartialOrd)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Runs `reps` replications with seeds derived from `config.seed`.
pub fn replicate_cluster(config: &ClusterConfig, policy: ClusterPolicy, reps: usize) -> Result<SimStats> {
    config.validate()?;
    validate_policy(policy)?;
    if reps < 2 {
        return Err(Error::Config(format!("need at least 2 replications, got {reps}")));
    }
    let runs: Vec<SimStats> = (0..reps as u64)
        .into_par_iter()
        .map(|i| simulate(config, policy, SimRng::derive_seed(config.seed, i)))
        .collect();
    Ok(aggregate(&runs))
}
