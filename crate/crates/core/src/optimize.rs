//! One-dimensional golden-section minimization.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Result of a golden-section search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimizes `f` on `[lo, hi]` until the bracket is narrower than `tol` or
/// `max_evaluations` is reached. Assumes `f` is unimodal on the bracket.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_evaluations: usize) -> Minimum
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evaluations = 2;
    while (b - a) > tol && evaluations < max_evaluations {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evaluations += 1;
    }
    if fc <= fd {
        Minimum { x: c, value: fc, evaluations }
    } else {
        Minimum { x: d, value: fd, evaluations }
    }
}
