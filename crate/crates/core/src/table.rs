//! Piecewise cubic Hermite tables on a uniform parameter grid.
//!
//! Node slopes are supplied exactly by the caller (they are closed-form
//! integrands), then limited with the Fritsch–Carlson rule so that the
//! interpolant is monotone whenever the node values are.

#[derive(Debug, Clone)]
pub struct HermiteTable {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    increasing: bool,
}

impl HermiteTable {
    /// Builds a table from nodes `t0 + i·dt` with the given values and slopes.
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, mut slopes: Vec<f64>) -> Self {
        assert!(values.len() >= 2 && values.len() == slopes.len());
        assert!(dt > 0.0);
        let increasing = values[values.len() - 1] >= values[0];
        for i in 0..values.len() - 1 {
            let secant = (values[i + 1] - values[i]) / dt;
            if secant == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            let a = slopes[i] / secant;
            let b = slopes[i + 1] / secant;
            if a < 0.0 {
                slopes[i] = 0.0;
            }
            if b < 0.0 {
                slopes[i + 1] = 0.0;
            }
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                slopes[i] = tau * a * secant;
                slopes[i + 1] = tau * b * secant;
            }
        }
        Self {
            t0,
            dt,
            values,
            slopes,
            increasing,
        }
    }

    pub fn t_min(&self) -> f64 {
        self.t0
    }

    pub fn t_max(&self) -> f64 {
        self.t0 + self.dt * (self.values.len() - 1) as f64
    }

    pub fn value_range(&self) -> (f64, f64) {
        let a = self.values[0];
        let b = self.values[self.values.len() - 1];
        (a.min(b), a.max(b))
    }

    pub fn contains_t(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t_max()
    }

    fn segment(&self, t: f64) -> (usize, f64) {
        let n = self.values.len() - 1;
        let x = (t - self.t0) / self.dt;
        let i = (x.floor().max(0.0) as usize).min(n - 1);
        (i, (x - i as f64).clamp(0.0, 1.0))
    }

    fn hermite(&self, i: usize, s: f64) -> (f64, f64) {
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.dt, self.slopes[i + 1] * self.dt);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let value = h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * s2 - 2.0 * s;
        let deriv = (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / self.dt;
        (value, deriv)
    }

    /// Interpolated value at `t` (clamped to the table).
    pub fn eval(&self, t: f64) -> f64 {
        let (i, s) = self.segment(t);
        self.hermite(i, s).0
    }

    /// Interpolated value and derivative with respect to `t`.
    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let (i, s) = self.segment(t);
        self.hermite(i, s)
    }

    /// Solves `eval(t) = y` for `t`. Returns `None` outside the value range.
    pub fn invert(&self, y: f64) -> Option<f64> {
        let (lo, hi) = self.value_range();
        if !(y >= lo && y <= hi) {
            return None;
        }
        let n = self.values.len();
        // first node index whose value is past y in the table's direction
        let past = |v: f64| if self.increasing { v >= y } else { v <= y };
        let mut a = 0usize;
        let mut b = n - 1;
        while b - a > 1 {
            let m = (a + b) / 2;
            if past(self.values[m]) {
                b = m;
            } else {
                a = m;
            }
        }
        let i = a;
        let (mut sl, mut sr) = (0.0_f64, 1.0_f64);
        let ya = self.values[i];
        let yb = self.values[i + 1];
        let mut s = if yb != ya { ((y - ya) / (yb - ya)).clamp(0.0, 1.0) } else { 0.0 };
        for _ in 0..60 {
            let (v, d) = self.hermite(i, s);
            let f = v - y;
            if f == 0.0 {
                break;
            }
            let below = if self.increasing { f < 0.0 } else { f > 0.0 };
            if below {
                sl = s;
            } else {
                sr = s;
            }
            let ds = d * self.dt;
            let mut next = if ds != 0.0 { s - f / ds } else { f64::NAN };
            if !(next > sl && next < sr) {
                next = 0.5 * (sl + sr);
            }
            if (next - s).abs() < 1e-16 {
                s = next;
                break;
            }
            s = next;
        }
        Some(self.t0 + (i as f64 + s) * self.dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_of(f: fn(f64) -> f64, df: fn(f64) -> f64, a: f64, b: f64, n: usize) -> HermiteTable {
        let dt = (b - a) / (n - 1) as f64;
        let ts: Vec<f64> = (0..n).map(|i| a + dt * i as f64).collect();
        HermiteTable::new(a, dt, ts.iter().map(|&t| f(t)).collect(), ts.iter().map(|&t| df(t)).collect())
    }

    #[test]
    fn reproduces_cubics_exactly() {
        let t = table_of(|x| x * x * x - x, |x| 3.0 * x * x - 1.0, 2.0, 4.0, 5);
        for k in 0..50 {
            let x = 2.0 + 2.0 * k as f64 / 49.0;
            assert!((t.eval(x) - (x * x * x - x)).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip_on_decreasing_table() {
        let t = table_of(|x| (-x).exp(), |x| -(-x).exp(), 0.0, 5.0, 200);
        for k in 1..100 {
            let x = 5.0 * k as f64 / 100.0;
            let y = t.eval(x);
            let back = t.invert(y).unwrap();
            assert!((back - x).abs() < 1e-12, "{x} {back}");
        }
        assert!(t.invert(2.0).is_none());
    }

    #[test]
    fn derivative_matches_slope_at_nodes() {
        let t = table_of(f64::sin, f64::cos, 0.0, 1.0, 11);
        let (_, d) = t.eval_with_derivative(0.3);
        assert!((d - 0.3f64.cos()).abs() < 1e-12);
    }
}
