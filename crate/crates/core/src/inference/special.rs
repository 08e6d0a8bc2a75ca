//! Regularized incomplete gamma, chi-square distribution and the
//! Kolmogorov–Smirnov test.

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;

use crate::error::invalid;
use crate::Result;

const TERM_TOLERANCE: f64 = 1e-14;
const MAX_TERMS: usize = 10_000;
const TINY: f64 = 1e-300;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

fn check_gamma_args(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid("a", "must be positive and finite"));
    }
    if x.is_nan() || x < 0.0 {
        return Err(invalid("x", "must be nonnegative"));
    }
    Ok(())
}

/// `ln(e^{−x} x^a / Γ(a))`.
fn ln_prefactor(a: f64, x: f64) -> f64 {
    a * x.ln() - x - ln_gamma(a)
}

fn lower_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut denom = a;
    for _ in 0..MAX_TERMS {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * TERM_TOLERANCE {
            break;
        }
    }
    (ln_prefactor(a, x).exp() * sum).min(1.0)
}

/// Modified Lentz evaluation of the continued fraction for `Q(a, x)`.
fn upper_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < TERM_TOLERANCE {
            break;
        }
    }
    (ln_prefactor(a, x).exp() * h).min(1.0)
}

/// `P(a, x) = γ(a, x) / Γ(a)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok(if x < a + 1.0 {
        lower_series(a, x)
    } else {
        1.0 - upper_fraction(a, x)
    })
}

/// `Q(a, x) = 1 − P(a, x)`, computed without cancellation in either tail.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(if x < a + 1.0 {
        1.0 - lower_series(a, x)
    } else {
        upper_fraction(a, x)
    })
}

fn check_dof(dof: usize) -> Result<f64> {
    if dof == 0 {
        return Err(invalid("dof", "must be at least 1"));
    }
    Ok(dof as f64)
}

/// `Pr[χ²_dof > x]`.
pub fn chi2_survival(dof: usize, x: f64) -> Result<f64> {
    let k = check_dof(dof)?;
    if x.is_nan() {
        return Err(invalid("x", "is NaN"));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    regularized_gamma_q(0.5 * k, 0.5 * x)
}

pub fn chi2_cdf(dof: usize, x: f64) -> Result<f64> {
    let k = check_dof(dof)?;
    if x.is_nan() {
        return Err(invalid("x", "is NaN"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    regularized_gamma_p(0.5 * k, 0.5 * x)
}

pub fn chi2_density(dof: usize, x: f64) -> Result<f64> {
    let k = check_dof(dof)?;
    if x < 0.0 {
        return Ok(0.0);
    }
    let h = 0.5 * k;
    if x == 0.0 {
        return Ok(match dof {
            1 => f64::INFINITY,
            2 => 0.5,
            _ => 0.0,
        });
    }
    Ok(((h - 1.0) * x.ln() - 0.5 * x - h * core::f64::consts::LN_2 - ln_gamma(h)).exp())
}

/// Upper quantile: the `q` with `Pr[χ²_dof > q] = alpha`.
///
/// Newton steps on the survival function, falling back to bisection
/// whenever a step leaves the current bracket.
pub fn chi2_quantile(dof: usize, alpha: f64) -> Result<f64> {
    check_dof(dof)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    let f = |q: f64| chi2_survival(dof, q).map(|s| s - alpha);
    let mut lo = 0.0;
    let mut hi = (dof as f64).max(1.0);
    while f(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut q = 0.5 * (lo + hi);
    for _ in 0..500 {
        let value = f(q)?;
        if value == 0.0 {
            return Ok(q);
        }
        if value > 0.0 {
            lo = q;
        } else {
            hi = q;
        }
        let slope = -chi2_density(dof, q)?;
        let newton = if slope != 0.0 && slope.is_finite() {
            q - value / slope
        } else {
            f64::NAN
        };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - q).abs() <= 4.0 * f64::EPSILON * q.max(f64::MIN_POSITIVE) || hi - lo <= f64::EPSILON * hi {
            return Ok(next);
        }
        q = next;
    }
    Ok(q)
}

/// `Pr[K > λ]` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov statistic `D` and its asymptotic p-value,
/// with the usual `√n + 0.12 + 0.11/√n` small-sample correction.
pub fn ks_test<F: FnMut(f64) -> f64>(samples: &[f64], mut cdf: F) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(invalid("samples", "empty"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(invalid("samples", "contain NaN"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let root = n.sqrt();
    Ok((d, kolmogorov_survival((root + 0.12 + 0.11 / root) * d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_table() {
        for (dof, alpha, q) in [
            (1, 0.05, 3.8414588206941285),
            (2, 0.05, 5.991464547107983),
            (4, 0.05, 9.487729036781158),
            (10, 0.01, 23.20925115895436),
            (100, 0.001, 149.4492527790389),
            (512, 0.5, 511.33348787447403),
            (3, 0.1, 6.2513886311703235),
        ] {
            let got = chi2_quantile(dof, alpha).unwrap();
            assert!((got - q).abs() < 1e-9 * q, "dof {dof} alpha {alpha}: {got} vs {q}");
        }
    }

    #[test]
    fn dof_two_closed_form() {
        for alpha in [0.5, 0.1, 0.05, 0.01, 0.001] {
            let q = chi2_quantile(2, alpha).unwrap();
            assert!((q + 2.0 * alpha.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn survival_table() {
        for (dof, x, s) in [
            (4, 4.0, 0.40600584970983794),
            (1, 0.5, 0.4795001221869535),
            (7, 3.2, 0.8659047417360984),
            (30, 45.0, 0.038601758266317336),
            (512, 600.0, 0.004305482732457914),
            (2, 10.0, 0.006737946999085467),
        ] {
            let got = chi2_survival(dof, x).unwrap();
            assert!((got - s).abs() < 1e-12, "dof {dof} x {x}: {got} vs {s}");
            assert!((chi2_cdf(dof, x).unwrap() + got - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn round_trip_up_to_512() {
        for dof in 1..=512 {
            for alpha in [0.5, 0.1, 0.05, 0.01, 0.001] {
                let q = chi2_quantile(dof, alpha).unwrap();
                let back = chi2_survival(dof, q).unwrap();
                assert!((back - alpha).abs() < 1e-10, "dof {dof} alpha {alpha}");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(chi2_quantile(0, 0.05).is_err());
        assert!(chi2_quantile(3, 0.0).is_err());
        assert!(chi2_quantile(3, 1.0).is_err());
        assert!(chi2_survival(0, 1.0).is_err());
        assert!(regularized_gamma_p(-1.0, 1.0).is_err());
        assert_eq!(chi2_survival(3, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn kolmogorov_limits() {
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        assert!(kolmogorov_survival(5.0) < 1e-20);
        // Tabulated critical value at the 5% level.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn ks_accepts_uniform_grid() {
        let xs: alloc::vec::Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let (d, p) = ks_test(&xs, |x| x).unwrap();
        assert!(d <= 0.0005 + 1e-12);
        assert!(p > 0.99);
        let (_, p) = ks_test(&xs, |x| x * x).unwrap();
        assert!(p < 1e-6);
    }
}
