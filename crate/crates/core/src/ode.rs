//! Adaptive Dormand–Prince 5(4) integration for small autonomous-size systems.

use crate::error::{Error, Result};

/// Accepted step node of an integration: abscissa, state and state derivative.
#[derive(Debug, Clone, Copy)]
pub struct Node<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub dy: [f64; N],
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights equal the last row of A; E = b5 − b4
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction) and returns
/// every accepted node, first and last included.
pub fn integrate<const N: usize, F>(f: F, t0: f64, y0: [f64; N], t1: f64, tol: Tolerance) -> Result<Vec<Node<N>>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let span = t1 - t0;
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut nodes = vec![Node { t, y, dy: k1 }];
    if span == 0.0 {
        return Ok(nodes);
    }
    let mut h = dir * (span.abs() * 1e-3).max(1e-12);
    let max_steps = 1_000_000;
    for _ in 0..max_steps {
        if (t1 - t) * dir <= 0.0 {
            return Ok(nodes);
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let mut k = [[0.0; N]; 7];
        k[0] = k1;
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            k[s] = f(t + C[s] * h, &ys);
        }
        let mut y_new = y;
        for i in 0..N {
            for s in 0..6 {
                y_new[i] += h * A[6][s] * k[s][i];
            }
        }
        let mut err = 0.0_f64;
        for i in 0..N {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * k[s][i];
            }
            let scale = tol.abs + tol.rel * y[i].abs().max(y_new[i].abs());
            err = err.max((h * e / scale).abs());
        }
        if !err.is_finite() {
            h *= 0.25;
            if h.abs() < 1e-14 * span.abs() {
                return Err(Error::InvalidState("ODE right-hand side is not finite".into()));
            }
            continue;
        }
        if err <= 1.0 {
            t += h;
            y = y_new;
            k1 = k[6];
            nodes.push(Node { t, y, dy: k1 });
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h.abs() < 1e-14 * span.abs() {
            return Err(Error::NoConvergence {
                iterations: nodes.len(),
                residual: err,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_steps,
        residual: f64::NAN,
    })
}

/// Quintic Hermite interpolation on `[t0, t1]` from values, first and second
/// derivatives at both ends. Returns (value, first derivative).
pub fn quintic_hermite(t0: f64, t1: f64, a: [f64; 3], b: [f64; 3], t: f64) -> (f64, f64) {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let (y0, d0, dd0) = (a[0], a[1] * h, a[2] * h * h);
    let (y1, d1, dd1) = (b[0], b[1] * h, b[2] * h * h);
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let h2 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
    let h3 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    let h4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let h5 = 0.5 * (s3 - 2.0 * s4 + s5);
    let value = h0 * y0 + h1 * d0 + h2 * dd0 + h3 * y1 + h4 * d1 + h5 * dd1;
    let g0 = -30.0 * s2 + 60.0 * s3 - 30.0 * s4;
    let g1 = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4;
    let g2 = 0.5 * (2.0 * s - 9.0 * s2 + 12.0 * s3 - 5.0 * s4);
    let g3 = -g0;
    let g4 = -12.0 * s2 + 28.0 * s3 - 15.0 * s4;
    let g5 = 0.5 * (3.0 * s2 - 8.0 * s3 + 5.0 * s4);
    let deriv = (g0 * y0 + g1 * d0 + g2 * dd0 + g3 * y1 + g4 * d1 + g5 * dd1) / h;
    (value, deriv)
}
