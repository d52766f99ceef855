//! Scalar distributions and Monte Carlo summaries.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma_ur, ln_gamma};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const TAIL_SWITCH: f64 = 5.0;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper tail `1 - Phi(x)`, accurate for large `x`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

/// `log Phi(x)` without underflow in the lower tail.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        normal_cdf(x).ln()
    } else {
        // Mills ratio asymptote
        -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Upper tail of a chi-square distribution.
pub fn chi_square_sf(stat: f64, df: f64) -> f64 {
    if stat <= 0.0 {
        1.0
    } else if stat.is_infinite() {
        0.0
    } else {
        gamma_ur(0.5 * df, 0.5 * stat)
    }
}

/// Poisson log mass with rate `exp(log_rate)`.
pub fn poisson_log_pmf(y: u32, log_rate: f64) -> f64 {
    let y = y as f64;
    y * log_rate - log_rate.exp() - ln_gamma(y + 1.0)
}

pub fn ln_factorial(y: u32) -> f64 {
    ln_gamma(y as f64 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Truncate to `(0, inf)`.
    Positive,
    /// Truncate to `(-inf, 0)`.
    Negative,
}

/// Draws from `N(mean, sd^2)` truncated to one side of zero.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, side: Side, rng: &mut R) -> f64 {
    assert!(sd > 0.0, "truncated normal needs sd > 0, got {sd}");
    match side {
        // x > 0  <=>  (x - mean)/sd > -mean/sd
        Side::Positive => mean + sd * standard_above(-mean / sd, rng),
        Side::Negative => mean - sd * standard_above(mean / sd, rng),
    }
}

/// Standard normal conditioned on exceeding `a`.
fn standard_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a > TAIL_SWITCH {
        // exponential proposal with the optimal rate for this bound
        let rate = 0.5 * (a + (a * a + 4.0).sqrt());
        let exp = Exp::new(rate).expect("positive rate");
        loop {
            let z = a + exp.sample(rng);
            let log_accept = -0.5 * (z - rate).powi(2);
            if rng.random::<f64>().ln() <= log_accept {
                return z;
            }
        }
    } else if a < -TAIL_SWITCH {
        // truncation mass below 3e-7: plain rejection
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z > a {
                return z;
            }
        }
    } else {
        // inverse CDF on the upper tail: x = Q^{-1}(u Q(a))
        let tail = normal_sf(a);
        let u: f64 = loop {
            let u = rng.random::<f64>();
            if u > 0.0 {
                break u;
            }
        };
        let x = SQRT_2 * erfc_inv(2.0 * u * tail);
        x.max(a)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    if xs.len() < 3 {
        return 0.0;
    }
    let m = mean(xs);
    let denom: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    num / denom
}

/// Split potential scale reduction: each chain is halved (dropping a
/// middle draw when odd) and the halves are compared. `None` with fewer
/// than two draws per half or no within-chain variation.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let n = chains.iter().map(Vec::len).min()? / 2;
    if n < 2 {
        return None;
    }
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..n], &c[c.len() - n..]]).collect();
    let w = mean(&halves.iter().map(|h| sample_variance(h)).collect::<Vec<_>>());
    if w <= 0.0 {
        return None;
    }
    let b = n as f64 * sample_variance(&halves.iter().map(|h| mean(h)).collect::<Vec<_>>());
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    Some((var_plus / w).sqrt())
}

/// Monte Carlo standard error of the mean by non-overlapping batch means
/// with `floor(sqrt(n))` batches.
pub fn batch_means_se(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return (sample_variance(xs) / n.max(1) as f64).sqrt();
    }
    let n_batches = (n as f64).sqrt().floor() as usize;
    let size = n / n_batches;
    let means: Vec<f64> = (0..n_batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    (sample_variance(&means) / n_batches as f64).sqrt()
}

/// Linear-interpolated empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
