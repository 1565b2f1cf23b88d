//! Mean-field limit of power-of-`d` dispatch with one-bit labels.
//!
//! Each queue is described by `(s, ℓ, c)`: `s` queued jobs labeled short,
//! `ℓ` queued jobs labeled long, and `c` the actual type of the job in
//! service (long or short). The empty queue is a separate state. Labeled-short
//! jobs are served first, FIFO within each label, without preemption.
//!
//! An arriving job samples `d` queues with replacement. Empty queues win;
//! otherwise a labeled-short arrival ranks queues by `(s, ℓ)` and a
//! labeled-long arrival by `(ℓ, s)`, lexicographically, ties uniform.

use std::io::{self, Write};

use crate::cluster::DerivedRates;
use crate::{Error, Result, Scalar};

/// Index of the actual type in service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JobType {
    Long = 0,
    Short = 1,
}

impl JobType {
    pub const ALL: [JobType; 2] = [JobType::Long, JobType::Short];

    /// 1 for long, 2 for short.
    pub fn code(self) -> u8 {
        self as u8 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfParams<S> {
    pub lambda_long: S,
    pub lambda_short: S,
    pub p_long: S,
    pub p_short: S,
    /// Service rate of long jobs, `1 / mean1`.
    pub rate_long: S,
    /// Service rate of short jobs, `1 / mean2`.
    pub rate_short: S,
    pub d: u32,
    pub s_max: usize,
    pub l_max: usize,
}

impl<S: Scalar> MfParams<S> {
    /// Builds parameters from per-queue arrival rates, mean sizes, and
    /// misclassification probabilities.
    #[allow(clippy::too_many_arguments)]
    pub fn from_model(
        lambda1: S,
        lambda2: S,
        mean1: S,
        mean2: S,
        q1: S,
        q2: S,
        d: u32,
        truncation: usize,
    ) -> Self {
        let rates = DerivedRates::compute(lambda1, lambda2, q1, q2);
        MfParams {
            lambda_long: rates.lambda_long,
            lambda_short: rates.lambda_short,
            p_long: rates.p_long,
            p_short: rates.p_short,
            rate_long: S::one() / mean1,
            rate_short: S::one() / mean2,
            d,
            s_max: truncation,
            l_max: truncation,
        }
    }

    pub fn with_truncation(self, s_max: usize, l_max: usize) -> Self {
        MfParams { s_max, l_max, ..self }
    }

    fn rate(&self, c: usize) -> S {
        if c == 0 {
            self.rate_long
        } else {
            self.rate_short
        }
    }
}

/// Occupancy fractions over the truncated state space.
#[derive(Debug, Clone, PartialEq)]
pub struct MfState<S> {
    s_max: usize,
    l_max: usize,
    occupancy: Vec<S>,
    pub empty: S,
}

impl<S: Scalar> MfState<S> {
    /// All queues empty.
    pub fn all_empty(s_max: usize, l_max: usize) -> Self {
        MfState {
            s_max,
            l_max,
            occupancy: vec![S::zero(); (s_max + 1) * (l_max + 1) * 2],
            empty: S::one(),
        }
    }

    fn zeros_like(&self) -> Self {
        MfState {
            s_max: self.s_max,
            l_max: self.l_max,
            occupancy: vec![S::zero(); self.occupancy.len()],
            empty: S::zero(),
        }
    }

    pub fn s_max(&self) -> usize {
        self.s_max
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    #[inline]
    fn idx(&self, s: usize, l: usize, c: usize) -> usize {
        (s * (self.l_max + 1) + l) * 2 + c
    }

    pub fn get(&self, s: usize, l: usize, c: JobType) -> S {
        self.occupancy[self.idx(s, l, c as usize)]
    }

    pub fn set(&mut self, s: usize, l: usize, c: JobType, value: S) {
        let i = self.idx(s, l, c as usize);
        self.occupancy[i] = value;
    }

    pub fn total_mass(&self) -> S {
        self.empty + self.occupancy.iter().copied().sum::<S>()
    }

    /// Mass in states with `s = s_max` or `ℓ = l_max`.
    pub fn boundary_mass(&self) -> S {
        let mut m = S::zero();
        for s in 0..=self.s_max {
            for l in 0..=self.l_max {
                if s == self.s_max || l == self.l_max {
                    m = m + self.occupancy[self.idx(s, l, 0)] + self.occupancy[self.idx(s, l, 1)];
                }
            }
        }
        m
    }

    /// Largest absolute entry, including the empty-queue mass.
    pub fn max_abs(&self) -> S {
        self.occupancy.iter().fold(self.empty.abs(), |m, v| m.max(v.abs()))
    }

    /// Sum of all entries (used for derivative vectors).
    pub fn sum(&self) -> S {
        self.total_mass()
    }

    /// Copies this state into a larger truncation.
    pub fn embed(&self, s_max: usize, l_max: usize) -> Self {
        let mut out = MfState::all_empty(s_max, l_max);
        out.empty = self.empty;
        for s in 0..=self.s_max.min(s_max) {
            for l in 0..=self.l_max.min(l_max) {
                for c in JobType::ALL {
                    out.set(s, l, c, self.get(s, l, c));
                }
            }
        }
        out
    }

    /// Writes `s,l,c,x` rows; the empty state is `0,0,0`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "s,l,c,x")?;
        writeln!(out, "0,0,0,{:e}", self.empty.as_f64())?;
        for s in 0..=self.s_max {
            for l in 0..=self.l_max {
                for c in JobType::ALL {
                    writeln!(out, "{s},{l},{},{:e}", c.code(), self.get(s, l, c).as_f64())?;
                }
            }
        }
        Ok(())
    }
}

/// Rank tables for both arrival labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceTables<S> {
    s_max: usize,
    l_max: usize,
    /// Mass of queues strictly worse for a labeled-long arrival, by `(s, ℓ)`.
    z_long: Vec<S>,
    /// Same for a labeled-short arrival.
    z_short: Vec<S>,
    w_long: Vec<S>,
    w_short: Vec<S>,
    /// Probability an arrival picks an empty queue (label-independent).
    pub w_empty: S,
}

impl<S: Scalar> ChoiceTables<S> {
    fn new(s_max: usize, l_max: usize) -> Self {
        let cells = (s_max + 1) * (l_max + 1);
        ChoiceTables {
            s_max,
            l_max,
            z_long: vec![S::zero(); cells],
            z_short: vec![S::zero(); cells],
            w_long: vec![S::zero(); cells * 2],
            w_short: vec![S::zero(); cells * 2],
            w_empty: S::zero(),
        }
    }

    #[inline]
    fn cell(&self, s: usize, l: usize) -> usize {
        s * (self.l_max + 1) + l
    }

    /// `z_{(c', s, ℓ)}` for an arrival labeled `label`.
    pub fn z(&self, label: JobType, s: usize, l: usize) -> S {
        let i = self.cell(s, l);
        match label {
            JobType::Long => self.z_long[i],
            JobType::Short => self.z_short[i],
        }
    }

    /// `w_{(c', s, ℓ, c)}`: probability an arrival labeled `label` joins a queue in `(s, ℓ, c)`.
    pub fn w(&self, label: JobType, s: usize, l: usize, c: JobType) -> S {
        let i = self.cell(s, l) * 2 + c as usize;
        match label {
            JobType::Long => self.w_long[i],
            JobType::Short => self.w_short[i],
        }
    }

    /// Total selection probability for `label`, including the empty state.
    pub fn total(&self, label: JobType) -> S {
        let w = match label {
            JobType::Long => &self.w_long,
            JobType::Short => &self.w_short,
        };
        self.w_empty + w.iter().copied().sum::<S>()
    }
}

/// Fills the `z` tables with suffix sums in `O(s_max · l_max)`.
pub fn compute_z<S: Scalar>(state: &MfState<S>) -> ChoiceTables<S> {
    let mut tables = ChoiceTables::new(state.s_max, state.l_max);
    let full = Region::full(state);
    fill_z(state, &mut tables, &mut Vec::new(), &mut Vec::new(), full);
    tables
}

/// Index box `[0, s_top] × [0, l_top]` outside of which the state is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Region {
    s_top: usize,
    l_top: usize,
}

impl Region {
    fn full<S>(state: &MfState<S>) -> Self {
        Region {
            s_top: state.s_max,
            l_top: state.l_max,
        }
    }

    /// Occupied cells plus a one-cell margin, which is where the derivative
    /// can be nonzero. The state must be zero outside `bound`.
    fn active_within<S: Scalar>(state: &MfState<S>, bound: Region) -> Self {
        let (mut s_hi, mut l_hi) = (0, 0);
        for s in 0..=bound.s_top {
            for l in 0..=bound.l_top {
                let i = state.idx(s, l, 0);
                if state.occupancy[i] != S::zero() || state.occupancy[i + 1] != S::zero() {
                    s_hi = s_hi.max(s);
                    l_hi = l_hi.max(l);
                }
            }
        }
        Region {
            s_top: (s_hi + 1).min(state.s_max),
            l_top: (l_hi + 1).min(state.l_max),
        }
    }

    fn contains(&self, other: Region) -> bool {
        other.s_top <= self.s_top && other.l_top <= self.l_top
    }
}

fn fill_z<S: Scalar>(
    state: &MfState<S>,
    t: &mut ChoiceTables<S>,
    row_tail: &mut Vec<S>,
    col_tail: &mut Vec<S>,
    region: Region,
) {
    let (sm, lm) = (region.s_top, region.l_top);
    let tot = |s: usize, l: usize| {
        let i = state.idx(s, l, 0);
        state.occupancy[i] + state.occupancy[i + 1]
    };

    // Labeled short: worse means s' > s, or s' = s and ℓ' > ℓ.
    let mut rows_below = S::zero(); // Σ_{s' > s} all ℓ'
    for s in (0..=sm).rev() {
        let mut within = S::zero(); // Σ_{ℓ' > ℓ} in row s
        let mut row_total = S::zero();
        for l in (0..=lm).rev() {
            let i = t.cell(s, l);
            t.z_short[i] = rows_below + within;
            let m = tot(s, l);
            within = within + m;
            row_total = row_total + m;
        }
        rows_below = rows_below + row_total;
    }

    // Labeled long: worse means ℓ' > ℓ, or ℓ' = ℓ and s' > s.
    col_tail.clear();
    col_tail.resize(lm + 2, S::zero());
    for l in (0..=lm).rev() {
        let mut col = S::zero();
        for s in 0..=sm {
            col = col + tot(s, l);
        }
        col_tail[l] = col_tail[l + 1] + col;
    }
    row_tail.clear();
    row_tail.resize(lm + 1, S::zero()); // Σ_{s' > s} at fixed ℓ, updated as s decreases
    for s in (0..=sm).rev() {
        for l in 0..=lm {
            let i = t.cell(s, l);
            t.z_long[i] = col_tail[l + 1] + row_tail[l];
        }
        for (l, acc) in row_tail.iter_mut().enumerate() {
            *acc = *acc + tot(s, l);
        }
    }
}

/// Fills the `w` tables from `z`; entries with no mass are zero.
pub fn compute_w<S: Scalar>(state: &MfState<S>, tables: &mut ChoiceTables<S>, d: u32) {
    fill_w(state, tables, d, Region::full(state));
}

fn fill_w<S: Scalar>(state: &MfState<S>, tables: &mut ChoiceTables<S>, d: u32, region: Region) {
    let di = d as i32;
    let (sm, lm) = (region.s_top, region.l_top);
    for s in 0..=sm {
        for l in 0..=lm {
            let i = state.idx(s, l, 0);
            let (x1, x2) = (state.occupancy[i], state.occupancy[i + 1]);
            let t = x1 + x2;
            let cell = tables.cell(s, l);
            if t <= S::zero() {
                for w in [&mut tables.w_long, &mut tables.w_short] {
                    w[cell * 2] = S::zero();
                    w[cell * 2 + 1] = S::zero();
                }
                continue;
            }
            let zl = tables.z_long[cell];
            let zs = tables.z_short[cell];
            let gl = ((zl + t).powi(di) - zl.powi(di)) / t;
            let gs = ((zs + t).powi(di) - zs.powi(di)) / t;
            tables.w_long[cell * 2] = gl * x1;
            tables.w_long[cell * 2 + 1] = gl * x2;
            tables.w_short[cell * 2] = gs * x1;
            tables.w_short[cell * 2 + 1] = gs * x2;
        }
    }
    tables.w_empty = S::one() - (S::one() - state.empty).powi(di);
}

/// Derivative of the occupancy vector plus the arrival flux blocked at the
/// truncation boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative<S> {
    pub rates: MfState<S>,
    pub truncation_flux: S,
}

/// Reusable buffers for repeated derivative evaluations.
#[derive(Debug, Clone)]
pub struct Workspace<S> {
    tables: ChoiceTables<S>,
    row_tail: Vec<S>,
    col_tail: Vec<S>,
    rates: MfState<S>,
    /// Region covered by the last evaluation; entries outside are zero.
    covered: Region,
}

impl<S: Scalar> Workspace<S> {
    pub fn new(state: &MfState<S>) -> Self {
        Workspace {
            tables: ChoiceTables::new(state.s_max, state.l_max),
            row_tail: Vec::new(),
            col_tail: Vec::new(),
            rates: state.zeros_like(),
            covered: Region { s_top: 0, l_top: 0 },
        }
    }

    pub fn tables(&self) -> &ChoiceTables<S> {
        &self.tables
    }

    pub fn rates(&self) -> &MfState<S> {
        &self.rates
    }

    /// Evaluates the derivative into the workspace; returns the truncation flux.
    pub fn evaluate(&mut self, state: &MfState<S>, p: &MfParams<S>) -> S {
        self.evaluate_within(state, p, Region::full(state))
    }

    /// Max-norm of the last derivative.
    fn rates_max_abs(&self) -> S {
        let r = &self.rates;
        let row = (r.l_max + 1) * 2;
        let width = (self.covered.l_top + 1) * 2;
        (0..=self.covered.s_top)
            .flat_map(|s| &r.occupancy[s * row..s * row + width])
            .fold(r.empty.abs(), |m, v| m.max(v.abs()))
    }

    fn evaluate_within(&mut self, state: &MfState<S>, p: &MfParams<S>, bound: Region) -> S {
        let region = Region::active_within(state, bound);
        if !region.contains(self.covered) {
            // Stale entries would survive outside the smaller region.
            self.tables = ChoiceTables::new(state.s_max, state.l_max);
            self.rates = state.zeros_like();
        }
        self.covered = region;
        fill_z(state, &mut self.tables, &mut self.row_tail, &mut self.col_tail, region);
        fill_w(state, &mut self.tables, p.d, region);
        fill_rates(state, p, &self.tables, &mut self.rates, region)
    }
}

fn fill_rates<S: Scalar>(
    x: &MfState<S>,
    p: &MfParams<S>,
    w: &ChoiceTables<S>,
    dx: &mut MfState<S>,
    region: Region,
) -> S {
    let (sm, lm) = (x.s_max, x.l_max);
    let one = S::one();
    let (lam_s, lam_l) = (p.lambda_short, p.lambda_long);
    let completions = |s: usize, l: usize| {
        let i = x.idx(s, l, 0);
        p.rate_long * x.occupancy[i] + p.rate_short * x.occupancy[i + 1]
    };
    let mut truncated = S::zero();

    for s in 0..=region.s_top {
        for l in 0..=region.l_top {
            let cell = w.cell(s, l);
            // Service completion in (s+1, ℓ, ·) starts a labeled-short job here;
            // in (0, ℓ+1, ·) it starts a labeled-long job.
            let from_short = if s < sm { completions(s + 1, l) } else { S::zero() };
            let from_long = if s == 0 && l < lm { completions(0, l + 1) } else { S::zero() };
            for c in 0..2 {
                let i = cell * 2 + c;
                let xi = x.occupancy[i];
                let mut rate = -p.rate(c) * xi;

                let out_short = lam_s * w.w_short[i];
                let out_long = lam_l * w.w_long[i];
                if s < sm {
                    rate = rate - out_short;
                } else {
                    truncated = truncated + out_short;
                }
                if l < lm {
                    rate = rate - out_long;
                } else {
                    truncated = truncated + out_long;
                }
                if s > 0 {
                    rate = rate + lam_s * w.w_short[w.cell(s - 1, l) * 2 + c];
                }
                if l > 0 {
                    rate = rate + lam_l * w.w_long[w.cell(s, l - 1) * 2 + c];
                }

                let (p_short_to_c, p_long_to_c) = if c == 0 {
                    (one - p.p_short, p.p_long)
                } else {
                    (p.p_short, one - p.p_long)
                };
                rate = rate + from_short * p_short_to_c + from_long * p_long_to_c;

                if s == 0 && l == 0 {
                    rate = rate + w.w_empty * (lam_l * p_long_to_c + lam_s * p_short_to_c);
                }
                dx.occupancy[i] = rate;
            }
        }
    }
    dx.empty = completions(0, 0) - (lam_s + lam_l) * w.w_empty;
    truncated
}

/// One-shot derivative evaluation.
pub fn derivative<S: Scalar>(state: &MfState<S>, params: &MfParams<S>) -> Derivative<S> {
    let mut ws = Workspace::new(state);
    let truncation_flux = ws.evaluate(state, params);
    Derivative {
        rates: ws.rates,
        truncation_flux,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions<S> {
    pub dt: S,
    pub horizon: S,
    /// Stop once the max-norm of the derivative falls below this; zero
    /// integrates over the whole horizon.
    pub stop_tol: S,
    /// Maximum mass tolerated in boundary states before the truncation is raised.
    pub boundary_tol: S,
    /// Maximum cumulative clamped (negative) mass before failing.
    pub clamp_tol: S,
    /// Largest truncation the automatic raise may reach.
    pub max_truncation: usize,
}

impl<S: Scalar> Default for IntegrationOptions<S> {
    fn default() -> Self {
        IntegrationOptions {
            dt: S::lit(1e-3),
            horizon: S::lit(1e4),
            stop_tol: S::lit(1e-10).max(S::tolerance_floor()),
            boundary_tol: S::lit(1e-9).max(S::tolerance_floor()),
            clamp_tol: S::lit(1e-9).max(S::tolerance_floor()),
            max_truncation: 320,
        }
    }
}

impl<S: Scalar> IntegrationOptions<S> {
    /// Fixed step `1e-5` over time `1e4`, no early stop.
    pub fn full_horizon() -> Self {
        IntegrationOptions {
            dt: S::lit(1e-5),
            horizon: S::lit(1e4),
            stop_tol: S::zero(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint<S> {
    pub state: MfState<S>,
    pub params: MfParams<S>,
    pub time: S,
    pub steps: u64,
    /// Max-norm of the derivative at the returned state.
    pub residual: S,
    pub converged: bool,
    /// Cumulative arrival mass blocked at the truncation boundary.
    pub truncated_mass: S,
    pub clamped_mass: S,
    /// Mass correction applied by the final renormalization (0 if none).
    pub renormalized_by: S,
}

impl<S: Scalar> FixedPoint<S> {
    pub fn mean_sojourn(&self) -> S {
        mean_sojourn(&self.state, &self.params)
    }
}

/// Forward-Euler integration from the all-empty state. Raises the truncation
/// (doubling, up to `max_truncation`) whenever boundary mass exceeds
/// `boundary_tol`.
pub fn integrate_to_fixed_point<S: Scalar>(params: &MfParams<S>, opts: &IntegrationOptions<S>) -> Result<FixedPoint<S>> {
    if !(opts.dt > S::zero()) {
        return Err(Error::Config(format!("time step must be positive, got {}", opts.dt)));
    }
    let mut p = *params;
    loop {
        match integrate_once(&p, opts)? {
            Some(fp) => return Ok(fp),
            None => {
                let next = (p.s_max.max(p.l_max) * 2).max(1);
                if next > opts.max_truncation {
                    return Err(Error::Integration(format!(
                        "boundary mass above {} even at truncation {}",
                        opts.boundary_tol,
                        p.s_max.max(p.l_max)
                    )));
                }
                log::info!("raising mean-field truncation to {next}");
                p = p.with_truncation(next, next);
            }
        }
    }
}

fn integrate_once<S: Scalar>(p: &MfParams<S>, opts: &IntegrationOptions<S>) -> Result<Option<FixedPoint<S>>> {
    let mut x = MfState::all_empty(p.s_max, p.l_max);
    let mut ws = Workspace::new(&x);
    let max_steps = (opts.horizon / opts.dt).ceil().to_u64().unwrap_or(u64::MAX);
    let mut truncated = S::zero();
    let mut clamped = S::zero();
    let mut residual = S::infinity();
    let mut steps = 0u64;
    let mut converged = false;

    let mut bound = Region::full(&x);
    while steps < max_steps {
        // Mass only moves into cells where the last derivative was evaluated.
        let flux = ws.evaluate_within(&x, p, bound);
        bound = ws.covered;
        residual = ws.rates_max_abs();
        if residual < opts.stop_tol {
            converged = true;
            break;
        }
        truncated = truncated + flux * opts.dt;
        let row = (x.l_max + 1) * 2;
        let width = (bound.l_top + 1) * 2;
        for s in 0..=bound.s_top {
            let cells = s * row..s * row + width;
            for (xi, &ri) in x.occupancy[cells.clone()].iter_mut().zip(&ws.rates.occupancy[cells]) {
                *xi = *xi + opts.dt * ri;
                if *xi < S::zero() {
                    clamped = clamped - *xi;
                    *xi = S::zero();
                } else if *xi < S::min_positive_value() {
                    // Subnormal tail entries are flushed; they cost far more
                    // to process than the mass they carry.
                    *xi = S::zero();
                }
            }
        }
        x.empty = x.empty + opts.dt * ws.rates.empty;
        if x.empty < S::zero() {
            clamped = clamped - x.empty;
            x.empty = S::zero();
        }
        steps += 1;
        if steps % 4096 == 0 && x.boundary_mass() > opts.boundary_tol {
            return Ok(None);
        }
    }
    if x.boundary_mass() > opts.boundary_tol {
        return Ok(None);
    }
    if clamped > opts.clamp_tol {
        return Err(Error::Integration(format!(
            "clamped {clamped} of negative mass (limit {}); reduce the time step",
            opts.clamp_tol
        )));
    }
    if clamped > S::zero() {
        log::debug!("mean-field integration clamped {clamped} of negative mass");
    }
    let drift = x.total_mass() - S::one();
    let mut renormalized_by = S::zero();
    if drift.abs() > S::lit(1e-9).max(S::tolerance_floor()) {
        log::warn!("renormalizing mean-field state; mass drift {drift}");
        let scale = S::one() / x.total_mass();
        x.occupancy.iter_mut().for_each(|v| *v = *v * scale);
        x.empty = x.empty * scale;
        renormalized_by = drift;
    }
    if !converged {
        residual = derivative(&x, p).rates.max_abs();
    }
    Ok(Some(FixedPoint {
        time: S::lit(steps as f64) * opts.dt,
        state: x,
        params: *p,
        steps,
        residual,
        converged,
        truncated_mass: truncated,
        clamped_mass: clamped,
        renormalized_by,
    }))
}

/// Mean sojourn by Little's law: jobs per queue over arrivals per queue.
pub fn mean_sojourn<S: Scalar>(state: &MfState<S>, params: &MfParams<S>) -> S {
    let rate = params.lambda_long + params.lambda_short;
    if rate <= S::zero() {
        return S::zero();
    }
    let mut jobs = S::zero();
    for s in 0..=state.s_max {
        for l in 0..=state.l_max {
            let n = S::lit((s + l + 1) as f64);
            jobs = jobs + n * (state.get(s, l, JobType::Long) + state.get(s, l, JobType::Short));
        }
    }
    jobs / rate
}
