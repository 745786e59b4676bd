use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

// Past this point e^{-z}/z underflows to zero.
const E1_UNDERFLOW: f64 = 745.0;

/// Exponential integral `E1(z) = ∫_z^∞ e^{-t}/t dt` for real `z > 0`.
///
/// Uses the alternating power series for `z <= 1` and a modified-Lentz
/// continued fraction above, giving absolute error well under 1e-12.
pub fn exp_integral_e1(z: f64) -> Result<f64> {
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::Domain(format!("E1 requires finite z > 0, got {z}")));
    }
    Ok(e1_unchecked(z))
}

/// `e^z · E1(z)`, evaluated without overflow for large `z`.
pub fn scaled_exp_integral_e1(z: f64) -> Result<f64> {
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::Domain(format!("E1 requires finite z > 0, got {z}")));
    }
    if z <= 1.0 {
        Ok(z.exp() * e1_series(z))
    } else {
        Ok(e1_continued_fraction_scaled(z))
    }
}

pub(crate) fn e1_unchecked(z: f64) -> f64 {
    if z <= 1.0 {
        e1_series(z)
    } else if z >= E1_UNDERFLOW {
        0.0
    } else {
        e1_continued_fraction_scaled(z) * (-z).exp()
    }
}

fn e1_series(z: f64) -> f64 {
    // E1(z) = -γ - ln z - Σ_{n≥1} (-z)^n / (n·n!)
    let mut sum = 0.0;
    let mut term = 1.0;
    for n in 1..60 {
        let nf = n as f64;
        term *= -z / nf;
        let contrib = term / nf;
        sum += contrib;
        if contrib.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - z.ln() - sum
}

/// Continued fraction for `e^z E1(z)`, valid for `z > 1`.
fn e1_continued_fraction_scaled(z: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = z + 1.0;
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
