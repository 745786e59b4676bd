//! Special functions, bracketed root finding and small dense complex
//! linear algebra shared by the rest of the crate.

mod linalg;
mod roots;
mod special;

pub use linalg::{invert_complex_matrix, invert_complex_matrix_capped, ComplexMatrix, DEFAULT_CONDITION_CAP};
pub use roots::{expand_upper, find_root_bracketed, Bracket, DEFAULT_MAX_ITERS};
pub use special::{exp_integral_e1, scaled_exp_integral_e1, EULER_GAMMA};

pub(crate) use special::e1_unchecked;

/// `2^c − 1`, accurate for small `c`.
#[inline]
pub fn pow2_minus_one(c: f64) -> f64 {
    (c * std::f64::consts::LN_2).exp_m1()
}
