//! Modified Bessel functions of the second kind, integer order.
//!
//! `K₀` and `K₁` come from the ascending power series for `x ≤ 2` and from
//! Steed's continued fraction (the Temme/Thompson–Barnett `CF2` recurrence)
//! for `x > 2`. Higher orders use the stable upward recurrence
//! `K_{n+1}(x) = K_{n-1}(x) + (2n/x) K_n(x)`.

use crate::{domain, Result, Scalar};

const SERIES_LIMIT: f64 = 2.0;
const MAX_TERMS: usize = 10_000;

/// Returns `(K₀(x), K₁(x))` for `x > 0`.
pub fn k0_k1<S: Scalar>(x: S) -> Result<(S, S)> {
    if !(x > S::zero()) || !x.is_finite() {
        return Err(domain("x", x.as_f64(), "finite and positive"));
    }
    if x <= S::lit(SERIES_LIMIT) {
        Ok(series(x))
    } else {
        Ok(continued_fraction(x))
    }
}

pub fn k0<S: Scalar>(x: S) -> Result<S> {
    k0_k1(x).map(|(k0, _)| k0)
}

pub fn k1<S: Scalar>(x: S) -> Result<S> {
    k0_k1(x).map(|(_, k1)| k1)
}

pub fn k2<S: Scalar>(x: S) -> Result<S> {
    kn(2, x)
}

/// `K_n(x)` for integer order `n ≥ 0`.
pub fn kn<S: Scalar>(n: u32, x: S) -> Result<S> {
    let (mut lower, mut upper) = k0_k1(x)?;
    if n == 0 {
        return Ok(lower);
    }
    for order in 1..n {
        let next = lower + S::lit(2.0 * order as f64) / x * upper;
        lower = upper;
        upper = next;
    }
    Ok(upper)
}

fn series<S: Scalar>(x: S) -> (S, S) {
    let half_x = x * S::lit(0.5);
    let t = half_x * half_x;
    let log_term = half_x.ln() + S::lit(0.577_215_664_901_532_860_606_512_090_082_402_4);
    let eps = S::epsilon();

    // I₀ and the harmonic-weighted tail of K₀.
    let mut term = S::one(); // t^k / (k!)²
    let mut i0 = S::one();
    let mut harmonic = S::zero();
    let mut k0_tail = S::zero();

    // I₁ / (x/2) and the digamma-weighted tail of K₁.
    let mut term1 = S::one(); // t^k / (k! (k+1)!)
    let mut i1_scaled = S::one();
    let mut digamma_sum = S::one() - S::lit(2.0) * S::lit(0.577_215_664_901_532_860_606_512_090_082_402_4);
    let mut k1_tail = digamma_sum;

    for k in 1..MAX_TERMS {
        let kf = S::lit(k as f64);
        term = term * t / (kf * kf);
        harmonic = harmonic + S::one() / kf;
        i0 = i0 + term;
        k0_tail = k0_tail + term * harmonic;

        term1 = term1 * t / (kf * (kf + S::one()));
        // ψ(k+1) + ψ(k+2) = -2γ + H_k + H_{k+1}
        digamma_sum = digamma_sum + S::one() / kf + S::one() / (kf + S::one());
        i1_scaled = i1_scaled + term1;
        k1_tail = k1_tail + term1 * digamma_sum;

        if term <= eps * i0 && term1 * digamma_sum.abs() <= eps * k1_tail.abs() {
            break;
        }
    }

    let k0 = -log_term * i0 + k0_tail;
    let i1 = half_x * i1_scaled;
    let k1 = S::one() / x + half_x.ln() * i1 - x * S::lit(0.25) * k1_tail;
    (k0, k1)
}

fn continued_fraction<S: Scalar>(x: S) -> (S, S) {
    let two = S::lit(2.0);
    let eps = S::epsilon();
    let mut b = two * (S::one() + x);
    let mut d = S::one() / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = S::zero();
    let mut q2 = S::one();
    let a1 = S::lit(0.25);
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = S::one() + q * delh;
    for i in 1..MAX_TERMS {
        let fi = S::lit(i as f64);
        a = a - two * fi;
        c = -a * c / (fi + S::one());
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q = q + c * qnew;
        b = b + two;
        d = S::one() / (b + a * d);
        delh = (b * d - S::one()) * delh;
        h = h + delh;
        let dels = q * delh;
        s = s + dels;
        if (dels / s).abs() < eps {
            break;
        }
    }
    h = a1 * h;
    let k0 = (S::PI() / (two * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + S::lit(0.5) - h) / x;
    (k0, k1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, Tolerance};

    /// K_ν(x) = ∫₀^∞ exp(-x cosh t) cosh(ν t) dt, truncated where the
    /// integrand underflows.
    fn oracle(nu: f64, x: f64) -> f64 {
        let upper = ((745.0 / x).max(1.0)).acosh() + 1.0;
        let tol = Tolerance {
            abs: 1e-300,
            rel: 1e-13,
            max_intervals: 5000,
        };
        integrate(|t: f64| (-x * t.cosh()).exp() * (nu * t).cosh(), 0.0, upper, tol)
            .unwrap()
            .value
    }

    #[test]
    fn matches_integral_representation() {
        for &x in &[0.01, 0.063, 0.2, 0.5, 1.0, 1.9, 2.0, 2.1, 3.0, 5.0, 8.0, 14.2, 30.0, 80.0] {
            let (k0, k1) = k0_k1(x).unwrap();
            let k2 = k2(x).unwrap();
            for (nu, got) in [(0.0, k0), (1.0, k1), (2.0, k2)] {
                let want = oracle(nu, x);
                assert!(
                    ((got - want) / want).abs() < 1e-12,
                    "K_{nu}({x}) = {got}, oracle {want}"
                );
            }
        }
    }

    #[test]
    fn branches_agree_at_switchover() {
        let x = SERIES_LIMIT;
        let (s0, s1) = series(x);
        let (c0, c1) = continued_fraction(x);
        assert!(((s0 - c0) / c0).abs() < 1e-12);
        assert!(((s1 - c1) / c1).abs() < 1e-12);
    }

    #[test]
    fn known_values() {
        // Abramowitz & Stegun table 9.8.
        assert!((k0(1.0f64).unwrap() - 0.421_024_438_240_708_3).abs() < 1e-15);
        assert!((k1(1.0f64).unwrap() - 0.601_907_230_197_234_6).abs() < 1e-15);
        assert!((k2(2.0f64).unwrap() - 0.253_759_754_566_055_9).abs() < 1e-15);
    }

    #[test]
    fn recurrence_orders() {
        let x = 1.7f64;
        let k3 = kn(3, x).unwrap();
        assert!(((k3 - oracle(3.0, x)) / k3).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(k0_k1(0.0f64).is_err());
        assert!(k0_k1(-1.0f64).is_err());
    }

    #[test]
    fn single_precision() {
        let (k0, _) = k0_k1(1.0f32).unwrap();
        assert!((k0 - 0.421_024_4).abs() < 1e-6);
    }
}
