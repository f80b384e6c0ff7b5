//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes).

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Profile(format!(
                "table columns differ in length ({} vs {})",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 3 {
            return Err(Error::Profile("sampled table needs at least 3 rows".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Profile(
                "sample abscissae must be strictly increasing".into(),
            ));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Profile(
                "sampled table contains non-finite values".into(),
            ));
        }
        let n = x.len();
        let secant: Vec<f64> = (0..n - 1)
            .map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i]))
            .collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secant[0];
        slopes[n - 1] = secant[n - 2];
        for i in 1..n - 1 {
            let (a, b) = (secant[i - 1], secant[i]);
            slopes[i] = if a * b <= 0.0 {
                0.0
            } else {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                (w1 + w2) / (w1 / a + w2 / b)
            };
        }
        Ok(MonotoneCubic { x, y, slopes })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    /// Value and first three derivatives of the interpolant at `t`; the third
    /// derivative is piecewise constant. Outside the table the end cubic is extended.
    pub fn eval(&self, t: f64) -> [f64; 4] {
        let n = self.x.len();
        let i = self.x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        // cubic in s: y0 + m0 s + c2 s^2 + c3 s^3
        let c2 = 3.0 * (y1 - y0) - 2.0 * m0 - m1;
        let c3 = 2.0 * (y0 - y1) + m0 + m1;
        let v = y0 + s * (m0 + s * (c2 + s * c3));
        let d1 = (m0 + s * (2.0 * c2 + 3.0 * s * c3)) / h;
        let d2 = (2.0 * c2 + 6.0 * s * c3) / (h * h);
        let d3 = 6.0 * c3 / (h * h * h);
        [v, d1, d2, d3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes_and_keeps_monotone() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let m = MonotoneCubic::new(x.clone(), y.clone()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((m.eval(*xi)[0] - yi).abs() < 1e-14);
        }
        let mut prev = f64::NEG_INFINITY;
        for k in 0..1000 {
            let v = m.eval(k as f64 * 0.0019)[0];
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(MonotoneCubic::new(vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0]).is_err());
    }
}
