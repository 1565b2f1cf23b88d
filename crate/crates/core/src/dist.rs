//! Service-time distributions and one-bit prediction models.

use std::fmt;
use std::sync::Arc;

use crate::quad::{integrate, integrate_to_infinity, Tolerance};
use crate::{domain, Result, Scalar, SimRng};

type ScalarFn<S> = Arc<dyn Fn(S) -> S + Send + Sync>;

/// Job-size law. Both built-in laws have unit mean.
#[derive(Clone)]
pub enum ServiceDistribution<S: Scalar> {
    /// `F(x) = 1 - e^{-x}`.
    Exponential,
    /// `F(x) = 1 - e^{-√(2x)}`; heavy-tailed with second moment 6.
    Weibull,
    Custom(CustomDistribution<S>),
}

/// User-supplied law given by its cdf and density. Moments are computed by
/// quadrature once, at construction.
#[derive(Clone)]
pub struct CustomDistribution<S: Scalar> {
    name: String,
    cdf: ScalarFn<S>,
    pdf: ScalarFn<S>,
    mean: S,
    second_moment: S,
}

impl<S: Scalar> CustomDistribution<S> {
    pub fn new<C, P>(name: impl Into<String>, cdf: C, pdf: P) -> Result<Self>
    where
        C: Fn(S) -> S + Send + Sync + 'static,
        P: Fn(S) -> S + Send + Sync + 'static,
    {
        let tol = Tolerance::default();
        let mass = integrate_to_infinity(&pdf, S::zero(), tol)?.value;
        if (mass - S::one()).abs() > S::lit(1e-6) {
            return Err(domain("density mass", mass.as_f64(), "integrates to 1"));
        }
        let mean = integrate_to_infinity(|x| x * pdf(x), S::zero(), tol)?.value;
        let second_moment = integrate_to_infinity(|x| x * x * pdf(x), S::zero(), tol)?.value;
        Ok(CustomDistribution {
            name: name.into(),
            cdf: Arc::new(cdf),
            pdf: Arc::new(pdf),
            mean,
            second_moment,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl<S: Scalar> fmt::Debug for ServiceDistribution<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceDistribution::Exponential => f.write_str("Exponential"),
            ServiceDistribution::Weibull => f.write_str("Weibull"),
            ServiceDistribution::Custom(c) => f
                .debug_struct("Custom")
                .field("name", &c.name)
                .field("mean", &c.mean)
                .field("second_moment", &c.second_moment)
                .finish(),
        }
    }
}

impl<S: Scalar> ServiceDistribution<S> {
    pub fn name(&self) -> &str {
        match self {
            ServiceDistribution::Exponential => "exponential",
            ServiceDistribution::Weibull => "weibull",
            ServiceDistribution::Custom(c) => &c.name,
        }
    }

    pub fn cdf(&self, x: S) -> S {
        if x <= S::zero() {
            return S::zero();
        }
        match self {
            ServiceDistribution::Exponential => -(-x).exp_m1(),
            ServiceDistribution::Weibull => -(-(S::lit(2.0) * x).sqrt()).exp_m1(),
            ServiceDistribution::Custom(c) => (c.cdf)(x),
        }
    }

    /// Survival function `1 - F(x)`, without cancellation in the tail.
    pub fn survival(&self, x: S) -> S {
        if x <= S::zero() {
            return S::one();
        }
        match self {
            ServiceDistribution::Exponential => (-x).exp(),
            ServiceDistribution::Weibull => (-(S::lit(2.0) * x).sqrt()).exp(),
            ServiceDistribution::Custom(c) => S::one() - (c.cdf)(x),
        }
    }

    pub fn pdf(&self, x: S) -> S {
        if x < S::zero() {
            return S::zero();
        }
        match self {
            ServiceDistribution::Exponential => (-x).exp(),
            ServiceDistribution::Weibull => {
                let r = (S::lit(2.0) * x).sqrt();
                (-r).exp() / r
            }
            ServiceDistribution::Custom(c) => (c.pdf)(x),
        }
    }

    pub fn mean(&self) -> S {
        match self {
            ServiceDistribution::Exponential | ServiceDistribution::Weibull => S::one(),
            ServiceDistribution::Custom(c) => c.mean,
        }
    }

    pub fn second_moment(&self) -> S {
        match self {
            ServiceDistribution::Exponential => S::lit(2.0),
            ServiceDistribution::Weibull => S::lit(6.0),
            ServiceDistribution::Custom(c) => c.second_moment,
        }
    }

    /// `∫₀ᵗ x f(x) dx`, the mean load contributed by jobs no larger than `t`.
    pub fn partial_load_integral(&self, t: S) -> Result<S> {
        if t <= S::zero() {
            return Ok(S::zero());
        }
        Ok(match self {
            ServiceDistribution::Exponential => -(-t).exp_m1() - t * (-t).exp(),
            ServiceDistribution::Weibull => {
                // With y = √(2t) this is the lower incomplete gamma γ(3, y) / 2.
                let y = (S::lit(2.0) * t).sqrt();
                -(-y).exp_m1() - (-y).exp() * (y + y * y * S::lit(0.5))
            }
            ServiceDistribution::Custom(c) => {
                let pdf = c.pdf.clone();
                integrate(move |x| x * pdf(x), S::zero(), t, Tolerance::default())?.value
            }
        })
    }

    /// `E[h(X)]` by quadrature. The Weibull law is integrated in `y = √(2x)`,
    /// which removes the density's singularity at zero.
    pub fn expectation<H: Fn(S) -> S>(&self, h: H) -> Result<S> {
        let tol = Tolerance::default();
        let est = match self {
            ServiceDistribution::Exponential => {
                integrate_to_infinity(|x| h(x) * (-x).exp(), S::zero(), tol)?
            }
            ServiceDistribution::Weibull => integrate_to_infinity(
                |y| h(y * y * S::lit(0.5)) * (-y).exp(),
                S::zero(),
                tol,
            )?,
            ServiceDistribution::Custom(c) => {
                integrate_to_infinity(|x| h(x) * (c.pdf)(x), S::zero(), tol)?
            }
        };
        Ok(est.value)
    }

    /// Size whose survival probability is `u`, i.e. `1 - F(x) = u`.
    pub fn inverse_survival(&self, u: S) -> S {
        match self {
            ServiceDistribution::Exponential => -u.ln(),
            ServiceDistribution::Weibull => {
                let l = -u.ln();
                l * l * S::lit(0.5)
            }
            ServiceDistribution::Custom(c) => invert_cdf(&*c.cdf, S::one() - u),
        }
    }

    /// Quantile `F⁻¹(p)`.
    pub fn quantile(&self, p: S) -> S {
        match self {
            ServiceDistribution::Custom(c) => invert_cdf(&*c.cdf, p),
            _ => self.inverse_survival(S::one() - p),
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> S {
        self.inverse_survival(S::lit(rng.uniform()))
    }
}

fn invert_cdf<S: Scalar>(cdf: &(dyn Fn(S) -> S + Send + Sync), p: S) -> S {
    if p <= S::zero() {
        return S::zero();
    }
    let mut lo = S::zero();
    let mut hi = S::one();
    let mut expansions = 0;
    while cdf(hi) < p && expansions < 200 {
        lo = hi;
        hi = hi * S::lit(2.0);
        expansions += 1;
    }
    for _ in 0..200 {
        let mid = S::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    S::lit(0.5) * (lo + hi)
}

/// `ρ(T) = λ ∫₀ᵀ x f(x) dx`.
pub fn partial_load<S: Scalar>(dist: &ServiceDistribution<S>, lambda: S, threshold: S) -> Result<S> {
    check_rate(dist, lambda)?;
    if !(threshold >= S::zero()) {
        return Err(domain("threshold", threshold.as_f64(), "T >= 0"));
    }
    Ok(lambda * dist.partial_load_integral(threshold)?)
}

/// Mean residual service seen by a Poisson arrival, `V = λ E[X²] / 2`.
pub fn residual_work<S: Scalar>(dist: &ServiceDistribution<S>, lambda: S) -> Result<S> {
    check_rate(dist, lambda)?;
    Ok(lambda * dist.second_moment() * S::lit(0.5))
}

pub fn sample_service<S: Scalar>(dist: &ServiceDistribution<S>, rng: &mut SimRng) -> S {
    dist.sample(rng)
}

pub(crate) fn check_rate<S: Scalar>(dist: &ServiceDistribution<S>, lambda: S) -> Result<()> {
    if !(lambda >= S::zero()) || !(lambda * dist.mean() < S::one()) {
        return Err(domain("lambda", lambda.as_f64(), "0 <= lambda * mean < 1"));
    }
    Ok(())
}

/// The advice bit: whether a job is judged to be below the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Below,
    Above,
}

/// How the advice bit is derived from a job's true size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionModel {
    /// The bit is exact: below iff `x ≤ T`.
    Perfect,
    /// A job of size `x` gets a predicted size `~ Exp(mean x)`; the bit
    /// compares the prediction with `T`.
    Exponential,
}

impl PredictionModel {
    /// `g_T(x)`, the probability a job of size `x` is labeled below `T`.
    pub fn below_probability<S: Scalar>(&self, threshold: S, x: S) -> S {
        match self {
            PredictionModel::Perfect => {
                if x <= threshold {
                    S::one()
                } else {
                    S::zero()
                }
            }
            PredictionModel::Exponential => {
                if threshold <= S::zero() {
                    S::zero()
                } else if x <= S::zero() {
                    S::one()
                } else {
                    -(-threshold / x).exp_m1()
                }
            }
        }
    }

    /// Draws a predicted size for a job of true size `x`. The perfect model
    /// consumes no randomness.
    pub fn predicted_size(&self, x: f64, rng: &mut SimRng) -> f64 {
        match self {
            PredictionModel::Perfect => x,
            PredictionModel::Exponential => x * rng.exponential(1.0),
        }
    }

    pub fn label_from_prediction(predicted: f64, threshold: f64) -> Label {
        if predicted <= threshold {
            Label::Below
        } else {
            Label::Above
        }
    }
}

/// Labels a job of size `x` against threshold `T`.
pub fn label_job(model: PredictionModel, threshold: f64, x: f64, rng: &mut SimRng) -> Label {
    PredictionModel::label_from_prediction(model.predicted_size(x, rng), threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn builtins() -> [ServiceDistribution<f64>; 2] {
        [ServiceDistribution::Exponential, ServiceDistribution::Weibull]
    }

    #[test]
    fn partial_load_examples() {
        let exp = ServiceDistribution::<f64>::Exponential;
        assert_eq!(partial_load(&exp, 0.5, 0.0).unwrap(), 0.0);
        assert_relative_eq!(partial_load(&exp, 0.9, 200.0).unwrap(), 0.9, max_relative = 1e-15);
        let wei = ServiceDistribution::<f64>::Weibull;
        let want = 0.8 * (1.0 - (-2.0f64).exp() * (2.0 + 2.0 + 1.0));
        assert_relative_eq!(partial_load(&wei, 0.8, 2.0).unwrap(), want, max_relative = 1e-14);
    }

    #[test]
    fn partial_load_rejects_bad_inputs() {
        let exp = ServiceDistribution::<f64>::Exponential;
        assert!(partial_load(&exp, 1.0, 1.0).is_err());
        assert!(partial_load(&exp, 0.5, -1.0).is_err());
        assert!(partial_load(&exp, -0.1, 1.0).is_err());
    }

    #[test]
    fn residual_work_examples() {
        assert_relative_eq!(residual_work(&ServiceDistribution::Exponential, 0.9).unwrap(), 0.9);
        assert_relative_eq!(residual_work(&ServiceDistribution::Weibull, 0.8).unwrap(), 2.4);
        assert_eq!(residual_work(&ServiceDistribution::Weibull, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_moments_match_quadrature() {
        for d in builtins() {
            let mass = d.expectation(|_| 1.0).unwrap();
            let m1 = d.expectation(|x| x).unwrap();
            let m2 = d.expectation(|x| x * x).unwrap();
            assert_relative_eq!(mass, 1.0, max_relative = 1e-10);
            assert_relative_eq!(m1, d.mean(), max_relative = 1e-10);
            assert_relative_eq!(m2, d.second_moment(), max_relative = 1e-10);
        }
    }

    #[test]
    fn partial_load_matches_tail_complement() {
        // λ (mean - ∫_T^∞ x f) against the closed form.
        for d in builtins() {
            for &t in &[0.01f64, 0.5, 1.0, 3.0, 10.0, 40.0] {
                let tail = match d {
                    ServiceDistribution::Weibull => {
                        let y0 = (2.0 * t).sqrt();
                        integrate_to_infinity(|y: f64| 0.5 * y * y * (-y).exp(), y0, Tolerance::default())
                            .unwrap()
                            .value
                    }
                    _ => integrate_to_infinity(|x: f64| x * d.pdf(x), t, Tolerance::default())
                        .unwrap()
                        .value,
                };
                let lhs = partial_load(&d, 0.7, t).unwrap();
                let rhs = 0.7 * (d.mean() - tail);
                assert!((lhs - rhs).abs() < 1e-10, "{d:?} t={t}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn inversion_examples() {
        let wei = ServiceDistribution::<f64>::Weibull;
        assert_relative_eq!(wei.inverse_survival((-2.0f64).exp()), 2.0, max_relative = 1e-14);
        let exp = ServiceDistribution::<f64>::Exponential;
        assert_relative_eq!(exp.inverse_survival((-1.0f64).exp()), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn sample_moments() {
        let mut rng = SimRng::new(11);
        for d in builtins() {
            let n = 1_000_000;
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let x = d.sample(&mut rng);
                s1 += x;
                s2 += x * x;
            }
            let m1 = s1 / n as f64;
            let m2 = s2 / n as f64;
            assert!((m1 - 1.0).abs() < 0.005, "{d:?} mean {m1}");
            assert!((m2 / d.second_moment() - 1.0).abs() < 0.05, "{d:?} m2 {m2}");
        }
    }

    #[test]
    fn kolmogorov_smirnov_distance() {
        let mut rng = SimRng::new(3);
        for d in builtins() {
            let n = 100_000;
            let mut xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            xs.sort_by(f64::total_cmp);
            let ks = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = d.cdf(x);
                    (f - i as f64 / n as f64).abs().max((f - (i + 1) as f64 / n as f64).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < 0.01, "{d:?} KS {ks}");
        }
    }

    #[test]
    fn custom_distribution_moments() {
        // Uniform on [0, 2]: mean 1, second moment 4/3.
        let custom = CustomDistribution::new(
            "uniform",
            |x: f64| (x / 2.0).clamp(0.0, 1.0),
            |x: f64| if (0.0..=2.0).contains(&x) { 0.5 } else { 0.0 },
        )
        .unwrap();
        let d = ServiceDistribution::Custom(custom);
        assert_relative_eq!(d.mean(), 1.0, max_relative = 1e-8);
        assert_relative_eq!(d.second_moment(), 4.0 / 3.0, max_relative = 1e-8);
        assert_relative_eq!(d.partial_load_integral(1.0).unwrap(), 0.25, max_relative = 1e-10);
        assert_relative_eq!(d.quantile(0.25), 0.5, max_relative = 1e-10);
    }

    #[test]
    fn custom_rejects_unnormalized_density() {
        let bad = CustomDistribution::new("bad", |x: f64| x, |x: f64| 2.0 * (-x).exp());
        assert!(bad.is_err());
    }

    #[test]
    fn label_examples() {
        let mut rng = SimRng::new(5);
        assert_eq!(label_job(PredictionModel::Perfect, 1.0, 0.5, &mut rng), Label::Below);
        for _ in 0..1000 {
            assert_eq!(label_job(PredictionModel::Exponential, 0.0, 3.0, &mut rng), Label::Above);
        }
        let n = 200_000;
        let below = (0..n)
            .filter(|_| label_job(PredictionModel::Exponential, 1.0, 1.0, &mut rng) == Label::Below)
            .count();
        let p = below as f64 / n as f64;
        let want = 1.0 - (-1.0f64).exp();
        assert!((p - want).abs() < 0.005, "{p} vs {want}");
    }

    #[test]
    fn predicted_sizes_are_unbiased() {
        let mut rng = SimRng::new(9);
        let n = 400_000;
        let mean = (0..n)
            .map(|_| PredictionModel::Exponential.predicted_size(2.5, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean / 2.5 - 1.0).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn below_probability_is_monotone_in_threshold(t in 0.0f64..50.0, dt in 0.0f64..10.0, x in 1e-6f64..100.0) {
            for m in [PredictionModel::Perfect, PredictionModel::Exponential] {
                let g1 = m.below_probability(t, x);
                let g2 = m.below_probability(t + dt, x);
                prop_assert!((0.0..=1.0).contains(&g1));
                prop_assert!(g2 >= g1);
            }
        }

        #[test]
        fn exponential_model_decreases_in_size(t in 1e-3f64..20.0, x in 1e-3f64..50.0, dx in 1e-3f64..10.0) {
            let m = PredictionModel::Exponential;
            prop_assert!(m.below_probability(t, x + dx) < m.below_probability(t, x));
        }

        #[test]
        fn cdf_and_partial_load_are_monotone(a in 0.0f64..100.0, b in 0.0f64..100.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for d in builtins() {
                prop_assert!(d.cdf(lo) <= d.cdf(hi));
                prop_assert!(d.partial_load_integral(lo).unwrap() <= d.partial_load_integral(hi).unwrap() + 1e-15);
                prop_assert!(d.cdf(hi) <= 1.0);
            }
        }
    }
}
