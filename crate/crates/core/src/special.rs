//! Special functions needed by the closed-form Dirichlet expectations.

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Trigamma ψ'(x) for x > 0, via upward recurrence and the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/2x^2 + 1/6x^3 - 1/30x^5 + 1/42x^7 - 1/30x^9 + 5/66x^11
    let series = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0 + inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * 5.0 / 66.0))));
    acc + series
}

/// log(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn digamma_matches_harmonic_numbers() {
        // ψ(n) = H_{n-1} - γ
        let mut h = 0.0;
        for n in 1..20 {
            assert_relative_eq!(digamma(n as f64), h - EULER_GAMMA, epsilon = 1e-12);
            h += 1.0 / n as f64;
        }
    }

    #[test]
    fn trigamma_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert_relative_eq!(trigamma(1.0), pi2_6, epsilon = 1e-13);
        assert_relative_eq!(trigamma(2.0), pi2_6 - 1.0, epsilon = 1e-13);
        assert_relative_eq!(trigamma(0.5), std::f64::consts::PI.powi(2) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn trigamma_is_derivative_of_digamma() {
        for &x in &[1.0f64 + 1e-9, 1.3, 2.7, 9.9, 10.1, 57.0, 1234.5] {
            let h = 1e-5 * x.max(1.0);
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert_relative_eq!(trigamma(x), fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_relative_eq!(softplus(0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((sigmoid(-800.0)).is_finite());
    }
}
