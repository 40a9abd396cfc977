//! Scalar special functions.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` by the Lanczos approximation (g = 7, 9 terms).
///
/// Returns NaN for non-positive or NaN input.
pub fn ln_gamma(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
///
/// Shifts the argument up to `x >= 10` with `ψ(x) = ψ(x+1) - 1/x` and then
/// evaluates the asymptotic series.
pub fn digamma(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    shift + x.ln() - 0.5 * inv - series
}

/// `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `(softplus(x), sigmoid(x))` from a single exponential; bit-identical to
/// the separate functions.
pub fn softplus_sigmoid(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    if x > 0.0 {
        (x + e.ln_1p(), 1.0 / (1.0 + e))
    } else if x == 0.0 {
        (e.ln_1p(), 1.0 / (1.0 + e))
    } else {
        (e.ln_1p(), e / (1.0 + e))
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fused_softplus_sigmoid_matches() {
        for x in [-40.0, -3.5, -1e-9, 0.0, 1e-9, 0.7, 12.0, 50.0] {
            assert_eq!(softplus_sigmoid(x), (softplus(x), sigmoid(x)), "{x}");
        }
    }

    // Reference values computed with mpmath at 50 digits.
    const LGAMMA_REF: [(f64, f64); 8] = [
        (1e-3, 6.907_178_885_383_853_7),
        (0.1, 2.252_712_651_734_205_9),
        (0.5, 0.572_364_942_924_700_09),
        (1.5, -0.120_782_237_635_245_22),
        (3.7, 1.428_072_326_665_387_9),
        (10.0, 12.801_827_480_081_469),
        (123.456, 469.605_547_129_929_47),
        (1e6, 12_815_504.569_147_612),
    ];

    #[test]
    fn lgamma_fixed_points() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn lgamma_against_reference() {
        for &(x, want) in &LGAMMA_REF {
            let got = ln_gamma(x);
            // f64 cannot hold ln Γ(1e6) ≈ 1.3e7 to better than ~2e-9 absolute.
            let tol = 1e-10 * want.abs().max(1.0);
            assert!((got - want).abs() < tol, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn lgamma_matches_log_factorial() {
        let mut log_fact = 0.0;
        for n in 1..60u32 {
            // ln Γ(n + 1) = ln n!
            log_fact += (n as f64).ln();
            let got = ln_gamma(n as f64 + 1.0);
            assert!((got - log_fact).abs() < 1e-10 * log_fact.max(1.0), "n={n}");
        }
    }

    #[test]
    fn lgamma_rejects_non_positive() {
        assert!(ln_gamma(0.0).is_nan());
        assert!(ln_gamma(-2.5).is_nan());
    }

    #[test]
    fn digamma_known_values() {
        let euler = 0.577_215_664_901_532_9;
        assert!((digamma(1.0) + euler).abs() < 1e-12);
        // ψ(1/2) = -γ - 2 ln 2
        assert!((digamma(0.5) + euler + 2.0 * 2f64.ln()).abs() < 1e-12);
        // ψ(10) = H_9 - γ
        let h9: f64 = (1..10).map(|k| 1.0 / k as f64).sum();
        assert!((digamma(10.0) - (h9 - euler)).abs() < 1e-12);
    }

    #[test]
    fn digamma_is_lgamma_derivative() {
        for &x in &[0.05f64, 0.3, 1.0, 2.5, 7.0, 40.0, 1e3] {
            let h = 1e-5 * x.max(1.0);
            let fd = (ln_gamma(x + h) - ln_gamma(x - h)) / (2.0 * h);
            let d = digamma(x);
            assert!(
                (fd - d).abs() < 1e-6 * d.abs().max(1.0),
                "x={x}: {fd} vs {d}"
            );
        }
    }

    #[test]
    fn softplus_round_trip() {
        for &y in &[1e-6, 0.05, 1.0, 10.0, 50.0] {
            let back = softplus(softplus_inv(y));
            assert!((back - y).abs() < 1e-12 * y.max(1.0), "y={y}");
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }
}
