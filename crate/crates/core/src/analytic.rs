//! Mean waiting and sojourn times for one-bit threshold scheduling in M/G/1.
//!
//! Jobs labeled below the threshold go to the front of the queue; jobs labeled
//! above go to the back. With preemption, a job placed at the front also
//! displaces the job in service (preempt-resume). The class means follow from
//! the conservation law `L (1 - ρ) = V` and busy-period arguments.

use crate::dist::{check_rate, partial_load, residual_work, PredictionModel, ServiceDistribution};
use crate::{bessel, domain, Error, Result, Scalar};

/// Where the advice bit comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advice {
    /// The bit is the true comparison `x ≤ T`.
    Exact,
    /// The bit compares a predicted size against `T`.
    Predicted(PredictionModel),
}

#[derive(Debug, Clone)]
pub struct PolicyConfig<S: Scalar> {
    pub preemptive: bool,
    pub advice: Advice,
    pub threshold: S,
    pub lambda: S,
    pub dist: ServiceDistribution<S>,
}

impl<S: Scalar> PolicyConfig<S> {
    pub fn new(dist: ServiceDistribution<S>, lambda: S, threshold: S, preemptive: bool, advice: Advice) -> Self {
        PolicyConfig {
            preemptive,
            advice,
            threshold,
            lambda,
            dist,
        }
    }

    pub fn with_threshold(&self, threshold: S) -> Self {
        PolicyConfig {
            threshold,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rate(&self.dist, self.lambda)?;
        if !(self.threshold >= S::zero()) {
            return Err(domain("threshold", self.threshold.as_f64(), "T >= 0"));
        }
        Ok(())
    }
}

/// Class-conditional and overall means for one policy configuration.
///
/// "Below" is the class labeled below the threshold (exact or predicted).
/// Conditional sojourns of a class with zero probability are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SojournBreakdown<S> {
    pub w_below: S,
    pub w_above: S,
    pub s_below: S,
    pub s_above: S,
    pub w_total: S,
    pub s_total: S,
    pub class_fraction_below: S,
}

/// Expected workload from the conservation law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationCheck<S> {
    pub expected_load: S,
    pub residual: S,
    pub total_rate: S,
}

impl<S: Scalar> ConservationCheck<S> {
    pub fn new(dist: &ServiceDistribution<S>, lambda: S) -> Result<Self> {
        let residual = residual_work(dist, lambda)?;
        let total_rate = lambda * dist.mean();
        Ok(ConservationCheck {
            expected_load: residual / (S::one() - total_rate),
            residual,
            total_rate,
        })
    }

    /// `|L (1 - ρ) - V|`.
    pub fn identity_gap(&self) -> S {
        (self.expected_load * (S::one() - self.total_rate) - self.residual).abs()
    }
}

/// FIFO mean sojourn via Pollaczek–Khinchine: `E[X] + V / (1 - ρ)`.
pub fn fifo_sojourn<S: Scalar>(dist: &ServiceDistribution<S>, lambda: S) -> Result<S> {
    let rho = lambda * dist.mean();
    if !(rho < S::one()) {
        return Err(Error::Unstable { load: rho.as_f64() });
    }
    let v = residual_work(dist, lambda)?;
    Ok(dist.mean() + v / (S::one() - rho))
}

/// Fraction of jobs labeled below `T`: `Q(T) = ∫ f(x) g_T(x) dx`.
pub fn q_fraction<S: Scalar>(model: PredictionModel, dist: &ServiceDistribution<S>, threshold: S) -> Result<S> {
    if !(threshold >= S::zero()) {
        return Err(domain("threshold", threshold.as_f64(), "T >= 0"));
    }
    match model {
        PredictionModel::Perfect => Ok(dist.cdf(threshold)),
        PredictionModel::Exponential => {
            if threshold == S::zero() {
                return Ok(S::zero());
            }
            dist.expectation(|x| model.below_probability(threshold, x))
        }
    }
}

/// Load rate from jobs labeled below `T`: `ρ'(T) = λ ∫ x f(x) g_T(x) dx`.
pub fn rho_prime<S: Scalar>(
    model: PredictionModel,
    dist: &ServiceDistribution<S>,
    lambda: S,
    threshold: S,
) -> Result<S> {
    match model {
        PredictionModel::Perfect => partial_load(dist, lambda, threshold),
        PredictionModel::Exponential => {
            check_rate(dist, lambda)?;
            if !(threshold >= S::zero()) {
                return Err(domain("threshold", threshold.as_f64(), "T >= 0"));
            }
            if threshold == S::zero() {
                return Ok(S::zero());
            }
            Ok(lambda * dist.expectation(|x| x * model.below_probability(threshold, x))?)
        }
    }
}

/// `Q(T) = 1 - 2√T K₁(2√T)` for exponential sizes with exponential predictions.
pub fn q_fraction_bessel<S: Scalar>(threshold: S) -> Result<S> {
    if threshold == S::zero() {
        return Ok(S::zero());
    }
    let z = S::lit(2.0) * threshold.sqrt();
    Ok(S::one() - z * bessel::k1(z)?)
}

/// `ρ'(T) = λ (1 - 2T K₂(2√T))` for exponential sizes with exponential predictions.
pub fn rho_prime_bessel<S: Scalar>(lambda: S, threshold: S) -> Result<S> {
    if threshold == S::zero() {
        return Ok(S::zero());
    }
    let z = S::lit(2.0) * threshold.sqrt();
    Ok(lambda * (S::one() - S::lit(2.0) * threshold * bessel::k2(z)?))
}

/// Threshold policy with exact advice.
pub fn threshold_exact<S: Scalar>(config: &PolicyConfig<S>) -> Result<SojournBreakdown<S>> {
    config.validate()?;
    let dist = &config.dist;
    let t = config.threshold;
    let below_mass = dist.partial_load_integral(t)?;
    breakdown(
        config,
        ClassSplit {
            fraction_below: dist.cdf(t),
            fraction_above: dist.survival(t),
            size_mass_below: below_mass,
        },
    )
}

/// Threshold policy with predicted advice: `F(T)` becomes `Q(T)` and `ρ(T)`
/// becomes `ρ'(T)`.
pub fn threshold_predicted<S: Scalar>(config: &PolicyConfig<S>) -> Result<SojournBreakdown<S>> {
    config.validate()?;
    let model = match config.advice {
        Advice::Predicted(m) => m,
        Advice::Exact => PredictionModel::Perfect,
    };
    let q = q_fraction(model, &config.dist, config.threshold)?;
    let mass = match model {
        PredictionModel::Perfect => config.dist.partial_load_integral(config.threshold)?,
        PredictionModel::Exponential if config.threshold == S::zero() => S::zero(),
        PredictionModel::Exponential => config
            .dist
            .expectation(|x| x * model.below_probability(config.threshold, x))?,
    };
    let fraction_above = match model {
        PredictionModel::Perfect => config.dist.survival(config.threshold),
        PredictionModel::Exponential => S::one() - q,
    };
    breakdown(
        config,
        ClassSplit {
            fraction_below: q,
            fraction_above,
            size_mass_below: mass,
        },
    )
}

/// Dispatches on the advice kind.
pub fn sojourn<S: Scalar>(config: &PolicyConfig<S>) -> Result<SojournBreakdown<S>> {
    match config.advice {
        Advice::Exact => threshold_exact(config),
        Advice::Predicted(_) => threshold_predicted(config),
    }
}

struct ClassSplit<S> {
    fraction_below: S,
    fraction_above: S,
    /// `E[X; labeled below]`, so that `λ * size_mass_below` is the class load.
    size_mass_below: S,
}

fn conditional<S: Scalar>(num: S, den: S) -> S {
    if den <= S::epsilon() {
        S::zero()
    } else {
        num / den
    }
}

fn breakdown<S: Scalar>(config: &PolicyConfig<S>, split: ClassSplit<S>) -> Result<SojournBreakdown<S>> {
    let one = S::one();
    let lambda = config.lambda;
    let mean = config.dist.mean();
    let rho = lambda * mean;
    let rho_below = lambda * split.size_mass_below;
    if !(rho < one) {
        return Err(Error::Unstable { load: rho.as_f64() });
    }
    if !(rho_below < one) {
        return Err(Error::Unstable {
            load: rho_below.as_f64(),
        });
    }
    let v = residual_work(&config.dist, lambda)?;
    let frac = split.fraction_below;
    let frac_above = split.fraction_above;
    let size_below = conditional(split.size_mass_below, frac);
    let size_above = conditional(mean - split.size_mass_below, frac_above);

    let w_above = v / ((one - rho) * (one - rho_below));
    let out = if config.preemptive {
        let w_total = frac_above * w_above;
        SojournBreakdown {
            w_below: S::zero(),
            w_above,
            s_below: size_below / (one - rho_below),
            s_above: w_above + size_above / (one - rho_below),
            w_total,
            s_total: w_total + mean / (one - rho_below),
            class_fraction_below: frac,
        }
    } else {
        let w_below = v / (one - rho_below);
        let w_total = frac * w_below + frac_above * w_above;
        SojournBreakdown {
            w_below,
            w_above,
            s_below: w_below + size_below,
            s_above: w_above + size_above,
            w_total,
            s_total: w_total + mean,
            class_fraction_below: frac,
        }
    };
    Ok(out)
}

/// Direct transcriptions of the closed forms for the two built-in laws.
pub mod closed_form {
    use super::*;

    fn exp_rho_t<S: Scalar>(lambda: S, t: S) -> S {
        lambda * (S::one() - (t + S::one()) * (-t).exp())
    }

    fn weibull_rho_t<S: Scalar>(lambda: S, t: S) -> S {
        let r = (S::lit(2.0) * t).sqrt();
        lambda * (S::one() - (-r).exp() * (t + r + S::one()))
    }

    /// Exponential sizes, exact advice, no preemption.
    pub fn exp_nonpreemptive<S: Scalar>(lambda: S, t: S) -> S {
        let one = S::one();
        lambda * (one - lambda + lambda * (-t).exp()) / ((one - lambda) * (one - exp_rho_t(lambda, t))) + one
    }

    /// Exponential sizes, exact advice, preemptive.
    pub fn exp_preemptive<S: Scalar>(lambda: S, t: S) -> S {
        let one = S::one();
        (one - lambda + lambda * (-t).exp()) / ((one - lambda) * (one - exp_rho_t(lambda, t)))
    }

    pub fn weibull_nonpreemptive<S: Scalar>(lambda: S, t: S) -> S {
        let one = S::one();
        let r = (S::lit(2.0) * t).sqrt();
        S::lit(3.0) * lambda * (one - lambda + lambda * (-r).exp())
            / ((one - lambda) * (one - weibull_rho_t(lambda, t)))
            + one
    }

    pub fn weibull_preemptive<S: Scalar>(lambda: S, t: S) -> S {
        let one = S::one();
        let r = (S::lit(2.0) * t).sqrt();
        (one - lambda + S::lit(3.0) * lambda * (-r).exp()) / ((one - lambda) * (one - weibull_rho_t(lambda, t)))
    }

    /// Exponential sizes, exponential predictions, no preemption (Bessel form).
    pub fn exp_predicted_nonpreemptive<S: Scalar>(lambda: S, t: S) -> Result<S> {
        let one = S::one();
        let q = q_fraction_bessel(t)?;
        let rho_p = rho_prime_bessel(lambda, t)?;
        Ok(lambda * (one - lambda * q) / ((one - lambda) * (one - rho_p)) + one)
    }

    /// Exponential sizes, exponential predictions, preemptive (Bessel form).
    pub fn exp_predicted_preemptive<S: Scalar>(lambda: S, t: S) -> Result<S> {
        let one = S::one();
        let q = q_fraction_bessel(t)?;
        let rho_p = rho_prime_bessel(lambda, t)?;
        Ok((lambda * (one - q) + one - lambda) / ((one - lambda) * (one - rho_p)))
    }
}

/// What the threshold search minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Sojourn,
    Wait,
}

impl Metric {
    fn pick<S: Copy>(&self, b: &SojournBreakdown<S>) -> S {
        match self {
            Metric::Sojourn => b.s_total,
            Metric::Wait => b.w_total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalThreshold<S> {
    pub threshold: S,
    pub value: S,
    pub breakdown: SojournBreakdown<S>,
    /// Best point of the coarse pre-scan.
    pub grid_threshold: S,
    pub grid_value: S,
}

const GRID_POINTS: usize = 64;
const GRID_TAIL_DECADES: f64 = 9.0;
const MAX_EXPANSIONS: usize = 64;
const GRID_DISAGREEMENT: f64 = 1e-3;

/// Minimizes the chosen metric over `T ≥ 0` for the template's policy.
///
/// A 64-point pre-scan over tail-probability-spaced thresholds locates the
/// basin; golden-section search then refines inside the neighbouring grid
/// cells. If the minimum sits at the last grid point the bracket is doubled
/// until the metric turns up.
pub fn optimal_threshold<S: Scalar>(template: &PolicyConfig<S>, metric: Metric) -> Result<OptimalThreshold<S>> {
    template.validate()?;
    if !(template.lambda > S::zero()) {
        return Err(domain("lambda", template.lambda.as_f64(), "0 < lambda"));
    }
    let eval = |t: S| -> Result<S> { sojourn(&template.with_threshold(t)).map(|b| metric.pick(&b)) };

    let mut grid: Vec<S> = (0..GRID_POINTS)
        .map(|i| {
            let tail = S::lit(10f64.powf(-GRID_TAIL_DECADES * i as f64 / (GRID_POINTS - 1) as f64));
            template.dist.inverse_survival(tail)
        })
        .collect();
    let mut values = grid.iter().map(|&t| eval(t)).collect::<Result<Vec<_>>>()?;

    let mut best = argmin(&values);
    let mut expansions = 0;
    while best == grid.len() - 1 {
        if expansions == MAX_EXPANSIONS {
            return Err(Error::Search(format!(
                "metric still decreasing at T = {} after {MAX_EXPANSIONS} bracket expansions",
                grid[best]
            )));
        }
        let next = grid[best] * S::lit(2.0) + S::one();
        values.push(eval(next)?);
        grid.push(next);
        best = argmin(&values);
        expansions += 1;
    }

    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (t_star, v_star) = golden_section(&eval, lo, hi)?;
    let (grid_t, grid_v) = (grid[best], values[best]);

    if v_star > grid_v + S::lit(GRID_DISAGREEMENT) {
        return Err(Error::Search(format!(
            "golden-section minimum {v_star} at T = {t_star} exceeds grid minimum {grid_v} at T = {grid_t}"
        )));
    }
    let (threshold, value) = if v_star <= grid_v { (t_star, v_star) } else { (grid_t, grid_v) };
    Ok(OptimalThreshold {
        threshold,
        value,
        breakdown: sojourn(&template.with_threshold(threshold))?,
        grid_threshold: grid_t,
        grid_value: grid_v,
    })
}

fn argmin<S: Scalar>(values: &[S]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, S::infinity()), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
        .0
}

fn golden_section<S, F>(f: &F, mut a: S, mut b: S) -> Result<(S, S)>
where
    S: Scalar,
    F: Fn(S) -> Result<S>,
{
    let inv_phi = S::lit(0.618_033_988_749_894_848_204_586_834_365_638_1);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..300 {
        if (b - a).abs() <= S::lit(1e-11) * (S::one() + c.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// `λ = (T - 1) / (e^{-T} + T - 1)`, the load at which `T` is the optimal
/// threshold for exponential sizes with exact advice.
pub fn exp_optimal_lambda<S: Scalar>(threshold: S) -> S {
    let tm1 = threshold - S::one();
    tm1 / ((-threshold).exp() + tm1)
}

/// Optimal threshold for exponential sizes with exact advice (either
/// preemption mode), by bisection on `exp_optimal_lambda(T) = λ` over `T > 1`.
pub fn exp_optimal_threshold_root<S: Scalar>(lambda: S) -> Result<S> {
    if !(lambda > S::zero() && lambda < S::one()) {
        return Err(domain("lambda", lambda.as_f64(), "0 < lambda < 1"));
    }
    let mut lo = S::one();
    let mut hi = S::lit(2.0);
    while exp_optimal_lambda(hi) < lambda {
        lo = hi;
        hi = hi * S::lit(2.0);
        if hi > S::lit(1e6) {
            return Err(Error::Search(format!("no root below T = {hi} for lambda = {lambda}")));
        }
    }
    for _ in 0..400 {
        let mid = S::lit(0.5) * (lo + hi);
        if hi - lo <= S::lit(1e-12) * hi || mid <= lo || mid >= hi {
            break;
        }
        if exp_optimal_lambda(mid) < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(S::lit(0.5) * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate_to_infinity, Tolerance};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg(dist: ServiceDistribution<f64>, lambda: f64, t: f64, preemptive: bool, advice: Advice) -> PolicyConfig<f64> {
        PolicyConfig::new(dist, lambda, t, preemptive, advice)
    }

    #[test]
    fn fifo_examples() {
        assert_relative_eq!(fifo_sojourn(&ServiceDistribution::Exponential, 0.9).unwrap(), 10.0, max_relative = 1e-14);
        assert_relative_eq!(fifo_sojourn(&ServiceDistribution::Weibull, 0.8).unwrap(), 13.0, max_relative = 1e-14);
        assert_eq!(fifo_sojourn(&ServiceDistribution::Weibull, 0.0).unwrap(), 1.0);
        assert!(matches!(
            fifo_sojourn(&ServiceDistribution::Exponential, 1.0),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn engine_matches_closed_forms() {
        for &lambda in &[0.1, 0.5, 0.9, 0.98] {
            for &t in &[0.05, 0.7, 2.0, 6.0] {
                let exp = ServiceDistribution::Exponential;
                let wei = ServiceDistribution::Weibull;
                let pairs = [
                    (exp.clone(), false, closed_form::exp_nonpreemptive(lambda, t)),
                    (exp.clone(), true, closed_form::exp_preemptive(lambda, t)),
                    (wei.clone(), false, closed_form::weibull_nonpreemptive(lambda, t)),
                    (wei.clone(), true, closed_form::weibull_preemptive(lambda, t)),
                ];
                for (d, pre, want) in pairs {
                    let got = threshold_exact(&cfg(d, lambda, t, pre, Advice::Exact)).unwrap().s_total;
                    assert_relative_eq!(got, want, max_relative = 1e-12);
                }
                for pre in [false, true] {
                    let got = threshold_predicted(&cfg(
                        exp.clone(),
                        lambda,
                        t,
                        pre,
                        Advice::Predicted(PredictionModel::Exponential),
                    ))
                    .unwrap()
                    .s_total;
                    let want = if pre {
                        closed_form::exp_predicted_preemptive(lambda, t).unwrap()
                    } else {
                        closed_form::exp_predicted_nonpreemptive(lambda, t).unwrap()
                    };
                    assert_relative_eq!(got, want, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn breakdown_invariants() {
        for d in [ServiceDistribution::Exponential, ServiceDistribution::Weibull] {
            for pre in [false, true] {
                for advice in [Advice::Exact, Advice::Predicted(PredictionModel::Exponential)] {
                    let b = sojourn(&cfg(d.clone(), 0.85, 1.7, pre, advice)).unwrap();
                    let p = b.class_fraction_below;
                    assert_relative_eq!(b.w_total, p * b.w_below + (1.0 - p) * b.w_above, max_relative = 1e-12);
                    assert_relative_eq!(b.s_total, p * b.s_below + (1.0 - p) * b.s_above, max_relative = 1e-9);
                    if !pre {
                        assert_relative_eq!(b.s_total, b.w_total + 1.0, max_relative = 1e-14);
                    } else {
                        assert_eq!(b.w_below, 0.0);
                    }
                    for v in [b.w_below, b.w_above, b.s_below, b.s_above, b.w_total, b.s_total] {
                        assert!(v.is_finite() && v >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn perfect_predictions_equal_exact_advice() {
        for d in [ServiceDistribution::Exponential, ServiceDistribution::Weibull] {
            for &t in &[0.0, 0.3, 1.0, 4.0, 30.0] {
                for pre in [false, true] {
                    let a = threshold_exact(&cfg(d.clone(), 0.7, t, pre, Advice::Exact)).unwrap();
                    let b = threshold_predicted(&cfg(d.clone(), 0.7, t, pre, Advice::Predicted(PredictionModel::Perfect)))
                        .unwrap();
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn q_and_rho_prime_examples() {
        let exp = ServiceDistribution::<f64>::Exponential;
        assert_eq!(q_fraction(PredictionModel::Exponential, &exp, 0.0).unwrap(), 0.0);
        assert_eq!(rho_prime(PredictionModel::Exponential, &exp, 0.9, 0.0).unwrap(), 0.0);
        assert_eq!(q_fraction(PredictionModel::Perfect, &exp, 1.3).unwrap(), exp.cdf(1.3));
        assert_eq!(
            rho_prime(PredictionModel::Perfect, &exp, 0.6, 1.3).unwrap(),
            partial_load(&exp, 0.6, 1.3).unwrap()
        );

        // Oracle: 1 - ∫ e^{-x - 1/x} dx, integrated independently.
        let tail = integrate_to_infinity(|x: f64| (-x - 1.0 / x).exp(), 0.0, Tolerance::default())
            .unwrap()
            .value;
        let q = q_fraction(PredictionModel::Exponential, &exp, 1.0).unwrap();
        assert_relative_eq!(q, 1.0 - tail, max_relative = 1e-10);
        assert_relative_eq!(q, q_fraction_bessel(1.0).unwrap(), max_relative = 1e-10);

        let rp = rho_prime(PredictionModel::Exponential, &exp, 0.9, 1.0).unwrap();
        let k2 = bessel::k2(2.0).unwrap();
        assert_relative_eq!(rp, 0.9 * (1.0 - 2.0 * k2), max_relative = 1e-10);
    }

    #[test]
    fn optimal_threshold_exponential_cases() {
        for &lambda in &[0.3, 0.8, 0.9, 0.95] {
            let root = exp_optimal_threshold_root(lambda).unwrap();
            for pre in [false, true] {
                let opt = optimal_threshold(
                    &cfg(ServiceDistribution::Exponential, lambda, 1.0, pre, Advice::Exact),
                    Metric::Sojourn,
                )
                .unwrap();
                assert!((opt.threshold - root).abs() < 1e-4, "{lambda} {pre}: {} vs {root}", opt.threshold);
                // Stationarity in root form: λ = (T - 1) / (e^{-T} + T - 1).
                let t = opt.threshold;
                let gap = exp_optimal_lambda(t) - lambda;
                assert!(gap.abs() < 1e-6, "{lambda} {pre}: T = {t}, root {root}, gap {gap}");
            }
        }
    }

    #[test]
    fn optimal_threshold_table_cells() {
        let exp = ServiceDistribution::Exponential;
        let pre = optimal_threshold(&cfg(exp.clone(), 0.9, 1.0, true, Advice::Exact), Metric::Sojourn).unwrap();
        assert!((pre.value / 4.755 - 1.0).abs() < 0.01, "{}", pre.value);
        let non = optimal_threshold(&cfg(exp.clone(), 0.8, 1.0, false, Advice::Exact), Metric::Sojourn).unwrap();
        assert!((non.value / 3.329 - 1.0).abs() < 0.01, "{}", non.value);
        let pred = optimal_threshold(
            &cfg(exp, 0.9, 1.0, true, Advice::Predicted(PredictionModel::Exponential)),
            Metric::Sojourn,
        )
        .unwrap();
        assert!((pred.value / 5.960 - 1.0).abs() < 0.02, "{}", pred.value);
        let wpred = optimal_threshold(
            &cfg(ServiceDistribution::Weibull, 0.8, 1.0, true, Advice::Predicted(PredictionModel::Exponential)),
            Metric::Sojourn,
        )
        .unwrap();
        assert!((wpred.value / 3.481 - 1.0).abs() < 0.02, "{}", wpred.value);
    }

    #[test]
    fn weibull_optimum_matches_grid_scan() {
        let template = cfg(ServiceDistribution::Weibull, 0.9, 1.0, true, Advice::Exact);
        let opt = optimal_threshold(&template, Metric::Sojourn).unwrap();
        let (mut best_t, mut best_v) = (0.0, f64::INFINITY);
        for i in 0..=40_000 {
            let t = i as f64 * 1e-3;
            let v = closed_form::weibull_preemptive(0.9, t);
            if v < best_v {
                best_t = t;
                best_v = v;
            }
        }
        assert!((opt.threshold - best_t).abs() <= 1e-3, "{} vs {best_t}", opt.threshold);
        assert!(opt.value <= best_v + 1e-12);
    }

    #[test]
    fn wait_metric_is_supported() {
        let template = cfg(ServiceDistribution::Exponential, 0.9, 1.0, false, Advice::Exact);
        let w = optimal_threshold(&template, Metric::Wait).unwrap();
        let s = optimal_threshold(&template, Metric::Sojourn).unwrap();
        assert_relative_eq!(w.value + 1.0, s.value, max_relative = 1e-12);
    }

    #[test]
    fn optimal_threshold_needs_positive_load() {
        let template = cfg(ServiceDistribution::Exponential, 0.0, 1.0, false, Advice::Exact);
        assert!(optimal_threshold(&template, Metric::Sojourn).is_err());
    }

    #[test]
    fn root_examples() {
        assert_relative_eq!(exp_optimal_lambda(4.0f64), 3.0 / ((-4.0f64).exp() + 3.0));
        assert!(exp_optimal_lambda(4.0f64) > 0.99);
        let t = exp_optimal_threshold_root(exp_optimal_lambda(4.0f64)).unwrap();
        assert!((t - 4.0).abs() < 1e-9);
        let small = exp_optimal_threshold_root(1e-6f64).unwrap();
        assert!(small > 1.0 && small < 1.01);
        let lambda = (std::f64::consts::E - 1.0) / std::f64::consts::E;
        let t = exp_optimal_threshold_root(lambda).unwrap();
        assert!(((-t).exp() - (t - 1.0) * (1.0 / lambda - 1.0)).abs() < 1e-10);
        assert!(exp_optimal_threshold_root(1.0f64).is_err());
        assert!(exp_optimal_threshold_root(0.0f64).is_err());
    }

    #[test]
    fn root_increases_with_load() {
        let mut prev = 1.0;
        for i in 1..100 {
            let t = exp_optimal_threshold_root(i as f64 / 100.0).unwrap();
            assert!(t > prev);
            prev = t;
        }
        assert!(exp_optimal_threshold_root(0.999_999f64).unwrap() > 10.0);
    }

    #[test]
    fn conservation_identity() {
        for d in [ServiceDistribution::Exponential, ServiceDistribution::Weibull] {
            for &l in &[0.0, 0.3, 0.9, 0.99] {
                let c = ConservationCheck::new(&d, l).unwrap();
                assert!(c.identity_gap() <= 1e-12);
            }
        }
        let c = ConservationCheck::new(&ServiceDistribution::<f64>::Exponential, 0.8).unwrap();
        assert_relative_eq!(c.expected_load, 4.0, max_relative = 1e-14);
    }

    #[test]
    fn generic_over_f32() {
        let b = threshold_exact(&PolicyConfig::new(
            ServiceDistribution::<f32>::Exponential,
            0.9f32,
            2.1,
            true,
            Advice::Exact,
        ))
        .unwrap();
        assert!((b.s_total - closed_form::exp_preemptive(0.9f32, 2.1)).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn preemption_helps_exponential(lambda in 0.01f64..0.99, t in 0.0f64..20.0) {
            prop_assert!(closed_form::exp_preemptive(lambda, t) < closed_form::exp_nonpreemptive(lambda, t));
        }

        #[test]
        fn predicted_load_never_exceeds_total(lambda in 0.0f64..0.99, t in 0.0f64..30.0) {
            let rp = rho_prime(PredictionModel::Exponential, &ServiceDistribution::Weibull, lambda, t).unwrap();
            prop_assert!(rp >= 0.0 && rp <= lambda + 1e-12);
        }
    }
}
