//! Globally adaptive 15-point Gauss–Kronrod quadrature.
//!
//! Semi-infinite ranges are mapped onto `[0, 1)` with `x = a + t / (1 - t)`.
//! The 15-point rule never evaluates the endpoints, so the mapped integrand is
//! never evaluated at `t = 1`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result, Scalar};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes (and the centre).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Convergence controls. The run stops when the summed error estimate drops
/// below `max(abs, rel * |estimate|)`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance<S> {
    pub abs: S,
    pub rel: S,
    pub max_intervals: usize,
}

impl<S: Scalar> Default for Tolerance<S> {
    fn default() -> Self {
        Tolerance {
            abs: S::lit(1e-10).max(S::tolerance_floor()),
            rel: S::lit(1e-12).max(S::tolerance_floor()),
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<S> {
    pub value: S,
    pub error: S,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment<S> {
    lower: S,
    upper: S,
    value: S,
    error: S,
}

impl<S: Scalar> PartialEq for Segment<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<S: Scalar> Eq for Segment<S> {}

impl<S: Scalar> PartialOrd for Segment<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: Scalar> Ord for Segment<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

fn rescale_error<S: Scalar>(err: S, res_abs: S, res_asc: S) -> S {
    let mut scaled = err.abs();
    if res_asc != S::zero() && scaled != S::zero() {
        let scale = (S::lit(200.0) * scaled / res_asc).powf(S::lit(1.5));
        scaled = if scale < S::one() { res_asc * scale } else { res_asc };
    }
    let fifty_eps = S::lit(50.0) * S::epsilon();
    if res_abs > S::min_positive_value() / fifty_eps {
        scaled = scaled.max(fifty_eps * res_abs);
    }
    scaled
}

fn kronrod<S: Scalar, F: Fn(S) -> S>(f: &F, lower: S, upper: S) -> Segment<S> {
    let half = S::lit(0.5);
    let center = half * (lower + upper);
    let half_len = half * (upper - lower);
    let f_center = f(center);

    let mut res_gauss = f_center * S::lit(WG[3]);
    let mut res_kronrod = f_center * S::lit(WGK[7]);
    let mut res_abs = res_kronrod.abs();
    let mut fv1 = [S::zero(); 7];
    let mut fv2 = [S::zero(); 7];

    for j in 0..7 {
        let abscissa = half_len * S::lit(XGK[j]);
        let f1 = f(center - abscissa);
        let f2 = f(center + abscissa);
        fv1[j] = f1;
        fv2[j] = f2;
        let wk = S::lit(WGK[j]);
        res_kronrod = res_kronrod + wk * (f1 + f2);
        res_abs = res_abs + wk * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_gauss = res_gauss + S::lit(WG[j / 2]) * (f1 + f2);
        }
    }

    let mean = res_kronrod * half;
    let mut res_asc = S::lit(WGK[7]) * (f_center - mean).abs();
    for j in 0..7 {
        res_asc = res_asc + S::lit(WGK[j]) * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let scale = half_len.abs();
    let value = res_kronrod * half_len;
    let error = rescale_error(
        (res_kronrod - res_gauss) * half_len,
        res_abs * scale,
        res_asc * scale,
    );
    Segment {
        lower,
        upper,
        value,
        error,
    }
}

/// Integrates `f` over the finite interval `[lower, upper]`.
pub fn integrate<S, F>(f: F, lower: S, upper: S, tol: Tolerance<S>) -> Result<Estimate<S>>
where
    S: Scalar,
    F: Fn(S) -> S,
{
    if lower == upper {
        return Ok(Estimate {
            value: S::zero(),
            error: S::zero(),
            intervals: 0,
        });
    }
    let mut heap = BinaryHeap::new();
    let first = kronrod(&f, lower, upper);
    let mut total = first.value;
    let mut total_err = first.error;
    heap.push(first);

    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(quad_error(lower, upper, total, total_err, heap.len()));
        }
        if total_err <= tol.abs.max(tol.rel * total.abs()) {
            break;
        }
        if heap.len() >= tol.max_intervals {
            return Err(quad_error(lower, upper, total, total_err, heap.len()));
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = S::lit(0.5) * (worst.lower + worst.upper);
        if mid <= worst.lower || mid >= worst.upper {
            // Interval cannot be split further at this precision.
            heap.push(worst);
            return Err(quad_error(lower, upper, total, total_err, heap.len()));
        }
        let left = kronrod(&f, worst.lower, mid);
        let right = kronrod(&f, mid, worst.upper);
        total = total - worst.value + left.value + right.value;
        total_err = total_err - worst.error + left.error + right.error;
        heap.push(left);
        heap.push(right);
    }

    // Re-sum to shed the drift of the running update.
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(Estimate {
        value,
        error,
        intervals: heap.len(),
    })
}

/// Integrates `f` over `[lower, ∞)`.
pub fn integrate_to_infinity<S, F>(f: F, lower: S, tol: Tolerance<S>) -> Result<Estimate<S>>
where
    S: Scalar,
    F: Fn(S) -> S,
{
    let mapped = |t: S| {
        let one_minus = S::one() - t;
        let x = lower + t / one_minus;
        let y = f(x);
        if y == S::zero() {
            S::zero()
        } else {
            y / (one_minus * one_minus)
        }
    };
    integrate(mapped, S::zero(), S::one(), tol)
}

fn quad_error<S: Scalar>(lower: S, upper: S, estimate: S, err: S, intervals: usize) -> Error {
    Error::Quadrature {
        lower: lower.as_f64(),
        upper: upper.as_f64(),
        estimate: estimate.as_f64(),
        error_estimate: err.as_f64(),
        intervals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let est = integrate(|x: f64| x.powi(5) - 2.0 * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((est.value - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn gaussian_tail_to_infinity() {
        let est = integrate_to_infinity(|x: f64| (-x * x).exp(), 0.0, Tolerance::default()).unwrap();
        let exact = std::f64::consts::PI.sqrt() / 2.0;
        assert!((est.value - exact).abs() < 1e-12, "{}", est.value);
    }

    #[test]
    fn exponential_moments() {
        let tol = Tolerance::default();
        let m2 = integrate_to_infinity(|x: f64| x * x * (-x).exp(), 0.0, tol).unwrap();
        assert!((m2.value - 2.0).abs() < 1e-11);
        let shifted = integrate_to_infinity(|x: f64| (-x).exp(), 3.0, tol).unwrap();
        assert!((shifted.value - (-3.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn integrable_endpoint_singularity() {
        // ∫₀¹ x^{-1/2} dx = 2
        let est = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, Tolerance::default()).unwrap();
        assert!((est.value - 2.0).abs() < 1e-9, "{}", est.value);
    }

    #[test]
    fn runs_in_single_precision() {
        let tol = Tolerance::<f32>::default();
        let est = integrate_to_infinity(|x: f32| (-x).exp(), 0.0, tol).unwrap();
        assert!((est.value - 1.0).abs() < 1e-5);
    }

    #[test]
    fn divergent_integral_reports_diagnostics() {
        let tol = Tolerance {
            max_intervals: 50,
            ..Tolerance::default()
        };
        let err = integrate(|x: f64| 1.0 / x, 0.0, 1.0, tol).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }
}
