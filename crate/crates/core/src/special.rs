//! Exponential integral and the small-cell ergodic rate built on it.

use std::f64::consts::LOG2_E;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `e^x E1(x)` for `x > 0`, where `E1(x) = -Ei(-x)`.
///
/// The scaled form stays finite for large `x` where `e^x` alone overflows.
/// Power series below `x = 1`, modified Lentz continued fraction above.
pub fn exp_e1_scaled(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x <= 1.0 {
        // E1(x) = -gamma - ln x - sum_{n>=1} (-x)^n / (n n!)
        let mut term = 1.0;
        let mut sum = 0.0;
        for n in 1..200 {
            term *= -x / n as f64;
            let add = term / n as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return (-EULER_GAMMA - x.ln() - sum) * x.exp();
    }
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// `E1(x) = -Ei(-x)` for `x > 0`.
pub fn e1(x: f64) -> f64 {
    exp_e1_scaled(x) * (-x).exp()
}

/// `Ei(-x)` for `x > 0`.
pub fn ei_neg(x: f64) -> f64 {
    -e1(x)
}

/// `E[log2(1 + omega X)]` with `X` unit exponential, i.e.
/// `-log2(e) e^{1/omega} Ei(-1/omega)`. Zero for `omega = 0`.
pub fn smallcell_rate_bits(omega: f64) -> f64 {
    if omega == 0.0 {
        return 0.0;
    }
    LOG2_E * exp_e1_scaled(1.0 / omega)
}
