use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 200;

/// Search interval for [`find_root_bracketed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64, tolerance: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain(format!("invalid bracket [{lo}, {hi}]")));
        }
        if !(tolerance > 0.0) {
            return Err(Error::Domain(format!("bracket tolerance must be > 0, got {tolerance}")));
        }
        Ok(Self {
            lo,
            hi,
            tolerance,
            max_iters: DEFAULT_MAX_ITERS,
        })
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }
}

/// Bisection on a sign-changing bracket.
///
/// Stops when the bracket is narrower than `tolerance` or `f` hits zero
/// exactly; the returned point always lies inside the original bracket.
pub fn find_root_bracketed<F>(mut f: F, bracket: Bracket) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(f_lo * f_hi < 0.0) {
        return Err(Error::Bracket { lo, hi });
    }
    for _ in 0..bracket.max_iters {
        let mid = 0.5 * (lo + hi);
        if hi - lo < bracket.tolerance || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Convergence {
        what: format!(
            "bisection on [{}, {}] with tolerance {:e}",
            bracket.lo, bracket.hi, bracket.tolerance
        ),
        iterations: bracket.max_iters,
    })
}

/// Grows `hi` geometrically from `start` until `f(hi)` has the sign opposite
/// to `f(lo)`. Returns the last `(previous_hi, hi)` pair, which brackets the
/// first sign change.
pub fn expand_upper<F>(mut f: F, lo: f64, start: f64, factor: f64, max_steps: usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let sign_lo = f(lo) < 0.0;
    let mut prev = lo;
    let mut hi = start;
    for _ in 0..max_steps {
        let v = f(hi);
        if v == 0.0 || (v < 0.0) != sign_lo {
            return Ok((prev, hi));
        }
        prev = hi;
        hi *= factor;
        if !hi.is_finite() {
            break;
        }
    }
    Err(Error::Bracket { lo, hi })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_root() {
        let r = find_root_bracketed(|x| x - 2.0, Bracket::new(0.0, 5.0, 1e-10).unwrap()).unwrap();
        assert!((r - 2.0).abs() < 1e-10);
    }

    #[test]
    fn sqrt_two() {
        let r = find_root_bracketed(|x| x * x - 2.0, Bracket::new(0.0, 2.0, 1e-12).unwrap()).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn no_sign_change_is_bracket_error() {
        let err = find_root_bracketed(|x| x + 1.0, Bracket::new(0.0, 1.0, 1e-10).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Bracket { .. }));
    }

    #[test]
    fn iteration_cap_is_convergence_error() {
        let b = Bracket::new(0.0, 1.0, 1e-15).unwrap().with_max_iters(5);
        let err = find_root_bracketed(|x| x - 0.3, b).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }));
    }

    #[test]
    fn invalid_bracket_rejected() {
        assert!(Bracket::new(1.0, 1.0, 1e-3).is_err());
        assert!(Bracket::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn expand_finds_sign_change() {
        let (a, b) = expand_upper(|x| x - 1000.0, 1.0, 2.0, 2.0, 64).unwrap();
        assert!(a < 1000.0 && b >= 1000.0);
    }

    proptest::proptest! {
        #[test]
        fn root_stays_inside_bracket(lo in -100.0f64..0.0, width in 0.1f64..100.0, frac in 0.01f64..0.99) {
            let hi = lo + width;
            let target = lo + frac * width;
            let r = find_root_bracketed(|x| (x - target).powi(3), Bracket::new(lo, hi, 1e-9).unwrap()).unwrap();
            proptest::prop_assert!(r >= lo && r <= hi);
            proptest::prop_assert!((r - target).abs() < 1e-8);
        }
    }
}
