//! One-dimensional search primitives: golden-section maximization and
//! boundary bisection.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Location and value of a maximum found by [`golden_max`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
///
/// Both endpoints are evaluated as candidates, so maxima on the boundary are
/// returned exactly. NaN evaluations count as `-inf`. The best evaluated point
/// is returned once the bracket is narrower than `tol`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Maximum {
    debug_assert!(lo <= hi);
    let mut best = Maximum {
        x: lo,
        value: sanitize(f(lo)),
    };
    if hi <= lo {
        return best;
    }
    let consider = |x: f64, v: f64, best: &mut Maximum| {
        if v > best.value {
            *best = Maximum { x, value: v };
        }
    };
    let fhi = sanitize(f(hi));
    consider(hi, fhi, &mut best);

    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = sanitize(f(x1));
    let mut f2 = sanitize(f(x2));
    consider(x1, f1, &mut best);
    consider(x2, f2, &mut best);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = sanitize(f(x1));
            consider(x1, f1, &mut best);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = sanitize(f(x2));
            consider(x2, f2, &mut best);
        }
    }
    best
}

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Maximum {
    let m = golden_max(
        |x| {
            let v = f(x);
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                -v
            }
        },
        lo,
        hi,
        tol,
    );
    Maximum {
        x: m.x,
        value: -m.value,
    }
}

/// Bisection on a predicate that holds at `inside` and fails at `outside`.
///
/// Returns a point where the predicate holds, within `tol` of the transition.
pub fn bisect_boundary<F: FnMut(f64) -> bool>(
    mut holds: F,
    mut inside: f64,
    mut outside: f64,
    tol: f64,
) -> f64 {
    while (outside - inside).abs() > tol {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if holds(mid) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_interior() {
        let m = golden_max(|x| -(x - 0.3).powi(2), 0.0, 1.0, 1e-10);
        assert!((m.x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn golden_boundary() {
        let m = golden_max(|x| x, 0.0, 1.0, 1e-8);
        assert_eq!(m.x, 1.0);
        let m = golden_min(|x| x, 0.0, 1.0, 1e-8);
        assert_eq!(m.x, 0.0);
    }

    #[test]
    fn bisection_tolerance() {
        let b = bisect_boundary(|x| x * x <= 2.0, 0.0, 2.0, 1e-12);
        assert!(b * b <= 2.0);
        assert!((b - 2f64.sqrt()).abs() < 1e-12);
    }
}
