//! Piecewise-cubic Hermite interpolation on a strictly increasing grid.

/// Index `i` of the cell `[xs[i], xs[i + 1]]` containing `x`.
///
/// `x` must lie inside `[xs[0], xs[n - 1]]`; the right endpoint maps to the
/// last cell.
pub fn locate(xs: &[f64], x: f64) -> usize {
    debug_assert!(xs.len() >= 2);
    let n = xs.len();
    match xs.binary_search_by(|v| v.partial_cmp(&x).expect("NaN in grid")) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    }
}

/// Value and derivative of the cubic Hermite interpolant on one cell.
///
/// `(x0, f0, d0)` and `(x1, f1, d1)` are the node values and slopes.
#[inline]
pub fn cubic(x0: f64, x1: f64, f0: f64, f1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1;
    let dh00 = 6.0 * t2 - 6.0 * t;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = -dh00;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let slope = (dh00 * f0 + dh01 * f1) / h + dh10 * d0 + dh11 * d1;
    (value, slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_cells() {
        let xs = [0.0, 1.0, 2.0, 4.0];
        assert_eq!(locate(&xs, 0.0), 0);
        assert_eq!(locate(&xs, 0.5), 0);
        assert_eq!(locate(&xs, 1.0), 1);
        assert_eq!(locate(&xs, 3.9), 2);
        assert_eq!(locate(&xs, 4.0), 2);
    }

    #[test]
    fn reproduces_cubics_exactly() {
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.25 * x * x * x;
        let dp = |x: f64| -2.0 + x - 0.75 * x * x;
        let (a, b) = (0.3, 1.1);
        for j in 0..=10 {
            let x = a + (b - a) * j as f64 / 10.0;
            let (v, d) = cubic(a, b, p(a), p(b), dp(a), dp(b), x);
            assert!((v - p(x)).abs() < 1e-14);
            assert!((d - dp(x)).abs() < 1e-13);
        }
    }
}
