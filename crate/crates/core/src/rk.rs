//! Embedded Dormand–Prince 5(4) stepping with Hairer's fourth-order
//! continuous extension.
//!
//! The stepper is deliberately small: fixed-size states, one step at a time,
//! caller-driven loop. The shooting solver owns the loop because it needs to
//! watch for an event after every accepted step.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Error-control settings for the adaptive stepper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

/// Result of one trial step.
#[derive(Debug, Clone, Copy)]
pub struct Trial<const N: usize> {
    pub x0: f64,
    pub h: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    /// Weighted RMS error estimate; the step is acceptable when `<= 1`.
    pub err: f64,
    k1: [f64; N],
    k7: [f64; N],
    dense: [f64; N],
}

impl<const N: usize> Trial<N> {
    /// Continuous extension on `[x0, x0 + h]`.
    pub fn interpolate(&self, x: f64) -> [f64; N] {
        let theta = (x - self.x0) / self.h;
        let theta1 = 1.0 - theta;
        let mut out = [0.0; N];
        for i in 0..N {
            let r2 = self.y1[i] - self.y0[i];
            let r3 = self.h * self.k1[i] - r2;
            let r4 = r2 - self.h * self.k7[i] - r3;
            out[i] = self.y0[i]
                + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * self.dense[i])));
        }
        out
    }

    /// Derivative at the end of the step (first-same-as-last stage).
    pub fn end_derivative(&self) -> [f64; N] {
        self.k7
    }
}

/// Takes one Dormand–Prince step of size `h` from `(x0, y0)`.
pub fn step<const N: usize, F>(f: &F, x0: f64, y0: &[f64; N], h: f64, tol: Tolerances) -> Trial<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let comb = |terms: &[(f64, &[f64; N])]| {
        let mut y = *y0;
        for (c, k) in terms {
            for i in 0..N {
                y[i] += h * c * k[i];
            }
        }
        y
    };
    let k1 = f(x0, y0);
    let k2 = f(x0 + C2 * h, &comb(&[(A21, &k1)]));
    let k3 = f(x0 + C3 * h, &comb(&[(A31, &k1), (A32, &k2)]));
    let k4 = f(x0 + C4 * h, &comb(&[(A41, &k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(x0 + C5 * h, &comb(&[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(
        x0 + h,
        &comb(&[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y1 = comb(&[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(x0 + h, &y1);

    let mut sum = 0.0;
    let mut dense = [0.0; N];
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        sum += (e / scale).powi(2);
        dense[i] =
            h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Trial { x0, h, y0: *y0, y1, err: (sum / N as f64).sqrt(), k1, k7, dense }
}

/// Step-size factor after a trial with error `err` (standard fifth-order
/// controller with safety factor 0.9 and growth limits 0.2 and 5).
pub fn next_step_factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: Tolerances = Tolerances { rtol: 1e-12, atol: 1e-14 };

    #[test]
    fn fifth_order_on_exponential() {
        let f = |_x: f64, y: &[f64; 1]| [y[0]];
        let err = |h: f64| (step(&f, 0.0, &[1.0], h, TOL).y1[0] - h.exp()).abs();
        // local error ~ h^6
        let ratio = err(0.2) / err(0.1);
        assert!(ratio > 40.0 && ratio < 90.0, "ratio {ratio}");
    }

    #[test]
    fn dense_output_matches_endpoints_and_is_accurate() {
        let f = |_x: f64, y: &[f64; 2]| [y[1], -y[0]];
        let t = step(&f, 0.0, &[0.0, 1.0], 0.1, TOL);
        assert_eq!(t.interpolate(0.0), [0.0, 1.0]);
        let end = t.interpolate(0.1);
        assert!((end[0] - t.y1[0]).abs() < 1e-16 && (end[1] - t.y1[1]).abs() < 1e-16);
        // interior error ~ h^5: halving h divides it by about 32
        let err = |h: f64| {
            let t = step(&f, 0.0, &[0.0, 1.0], h, TOL);
            let x = 0.3 * h;
            (t.interpolate(x)[0] - x.sin()).abs()
        };
        let (e1, e2) = (err(0.2), err(0.1));
        assert!(e1 < 1e-7, "{e1}");
        assert!(e1 / e2 > 25.0 && e1 / e2 < 40.0, "{}", e1 / e2);
    }

    #[test]
    fn error_estimate_shrinks_with_step() {
        let f = |x: f64, y: &[f64; 1]| [x * y[0]];
        let e1 = step(&f, 0.0, &[1.0], 0.4, TOL).err;
        let e2 = step(&f, 0.0, &[1.0], 0.2, TOL).err;
        assert!(e2 < e1 / 10.0);
        assert!(next_step_factor(e1) <= 5.0 && next_step_factor(0.0) == 5.0);
    }
}
