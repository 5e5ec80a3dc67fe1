//! Error-function helpers used by the percentile machinery and Chauvenet's
//! criterion. `erf`/`erfc` come from libm; the inverse starts from the classic
//! Abramowitz & Stegun 26.2.23 rational approximation of the normal quantile
//! and is polished with Newton steps to a few ulps.

/// Gauss error function.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Complementary error function, `1 - erf(x)` without cancellation.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Inverse error function on (-1, 1).
///
/// Returns `±inf` at `±1` and NaN outside the domain.
pub fn erf_inv(p: f64) -> f64 {
    if p.is_nan() || !(-1.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p == -1.0 {
        return f64::NEG_INFINITY;
    }
    if p == 0.0 {
        return 0.0;
    }

    let mut x = normal_quantile_estimate(0.5 * (1.0 + p)) / std::f64::consts::SQRT_2;
    // Newton: x <- x - (erf(x) - p) / (2/sqrt(pi) * exp(-x^2)). The estimate
    // is within ~5e-4, so quadratic convergence lands on machine precision
    // in three steps; the fourth is a guard for the far tails.
    const HALF_SQRT_PI: f64 = 0.886_226_925_452_758;
    for _ in 0..4 {
        let err = libm::erf(x) - p;
        if err == 0.0 {
            break;
        }
        x -= err * HALF_SQRT_PI * libm::exp(x * x);
    }
    x
}

/// A&S 26.2.23: standard normal quantile, absolute error < 4.5e-4.
fn normal_quantile_estimate(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let (q, sign) = if p < 0.5 { (p, -1.0) } else { (1.0 - p, 1.0) };
    let t = libm::sqrt(-2.0 * libm::log(q));
    let z = t - (2.30753 + 0.27061 * t) / (1.0 + t * (0.99229 + t * 0.04481));
    sign * z
}
