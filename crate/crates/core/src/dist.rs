//! Sampling helpers and log-space arithmetic shared by the samplers.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal as StatrsNormal};

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `log(sum(exp(xs)))`; `-inf` for an empty slice or all `-inf` inputs.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `c / (1 + c)` given `log c`, i.e. the logistic function, stable at both tails.
#[inline]
pub fn prob_from_log_odds(log_odds: f64) -> f64 {
    if log_odds >= 0.0 {
        1.0 / (1.0 + (-log_odds).exp())
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Gamma draw parameterised by shape and *rate*.
pub fn gamma_rate<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0);
    // unit-scale draw then divide, so extreme rates never reach the sampler
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    g / rate
}

/// Inverse-gamma draw with shape `alpha` and scale `beta` (density
/// `∝ x^{-alpha-1} exp(-beta/x)`), as the reciprocal of a gamma draw.
pub fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, alpha: f64, beta: f64) -> f64 {
    debug_assert!(alpha > 0.0 && beta > 0.0);
    let mut g: f64 = Gamma::new(alpha, 1.0).expect("positive shape").sample(rng);
    if g <= f64::MIN_POSITIVE {
        g = f64::MIN_POSITIVE;
    }
    let x = beta / g;
    if x.is_finite() {
        x
    } else {
        f64::MAX
    }
}

/// Standardised truncation points beyond this use exponential rejection.
const TAIL_SWITCH: f64 = 5.0;

/// Draw from `N(mean, sd²)` truncated to `(lower, ∞)`.
pub fn truncated_normal_lower<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lower: f64) -> f64 {
    debug_assert!(sd > 0.0);
    let alpha = (lower - mean) / sd;
    let z = if alpha < TAIL_SWITCH {
        inverse_cdf_tail(rng, alpha)
    } else {
        exponential_tail(rng, alpha)
    };
    // the draw is strictly above the bound in exact arithmetic
    let x = mean + sd * z;
    if x > lower {
        x
    } else {
        lower + f64::EPSILON * lower.abs().max(f64::MIN_POSITIVE)
    }
}

fn inverse_cdf_tail<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> f64 {
    let std = StatrsNormal::standard();
    // X > alpha  <=>  -X < -alpha; sample the lower tail accurately
    let upper_mass = std.cdf(-alpha);
    loop {
        let u: f64 = rng.random();
        let q = u * upper_mass;
        if q > 0.0 {
            let z = -std.inverse_cdf(q);
            if z.is_finite() {
                return z.max(alpha);
            }
        }
    }
}

/// Robert (1995) translated-exponential rejection sampler for `Z > alpha`,
/// `alpha > 0`, with the optimal rate.
fn exponential_tail<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> f64 {
    let rate = 0.5 * (alpha + (alpha * alpha + 4.0).sqrt());
    loop {
        let u: f64 = rng.random();
        let z = alpha - (1.0 - u).ln() / rate;
        let rho = (-(z - rate).powi(2) / 2.0).exp();
        if rng.random::<f64>() <= rho {
            return z;
        }
    }
}
