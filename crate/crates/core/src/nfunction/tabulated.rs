//! Monotone piecewise-cubic (Fritsch-Carlson) interpolation of a sampled density `a`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// A strictly increasing table of `(t, a(t))` samples starting at `(0, 0)`.
///
/// Between knots the density is the monotone cubic Hermite interpolant; past the
/// last knot it continues as the power law matching value and slope there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCubic {
    t: Vec<f64>,
    a: Vec<f64>,
    slope: Vec<f64>,
    cumulative: Vec<f64>,
    tail_exponent: f64,
}

impl MonotoneCubic {
    pub fn new(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return domain("tabulated density needs at least two knots");
        }
        if knots[0] != (0.0, 0.0) {
            return domain("tabulated density must start at (0, 0)");
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) || !w[1].0.is_finite() || !w[1].1.is_finite() {
                return domain("tabulated knots must be finite and strictly increasing in t and a");
            }
        }
        let t: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let a: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let n = t.len();
        let secant: Vec<f64> = (0..n - 1)
            .map(|k| (a[k + 1] - a[k]) / (t[k + 1] - t[k]))
            .collect();

        let mut slope = vec![0.0; n];
        if n == 2 {
            slope[0] = secant[0];
            slope[1] = secant[0];
        } else {
            for k in 1..n - 1 {
                let (h0, h1) = (t[k] - t[k - 1], t[k + 1] - t[k]);
                let (w0, w1) = (2.0 * h1 + h0, h1 + 2.0 * h0);
                slope[k] = (w0 + w1) / (w0 / secant[k - 1] + w1 / secant[k]);
            }
            slope[0] = end_slope(t[1] - t[0], t[2] - t[1], secant[0], secant[1]);
            slope[n - 1] = end_slope(
                t[n - 1] - t[n - 2],
                t[n - 2] - t[n - 3],
                secant[n - 2],
                secant[n - 3],
            );
        }
        // Strict monotonicity at the ends: fall back to the secant if the
        // three-point formula flattened out.
        if slope[0] <= 0.0 {
            slope[0] = secant[0];
        }
        if slope[n - 1] <= 0.0 {
            slope[n - 1] = secant[n - 2];
        }

        let mut cumulative = vec![0.0; n];
        for k in 0..n - 1 {
            let h = t[k + 1] - t[k];
            cumulative[k + 1] = cumulative[k]
                + h * (0.5 * (a[k] + a[k + 1]) + h * (slope[k] - slope[k + 1]) / 12.0);
        }
        let tail_exponent = t[n - 1] * slope[n - 1] / a[n - 1];
        Ok(Self {
            t,
            a,
            slope,
            cumulative,
            tail_exponent,
        })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.t.iter().copied().zip(self.a.iter().copied())
    }

    fn locate(&self, x: f64) -> usize {
        match self.t.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(k) => k.min(self.t.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.t.len() - 2),
        }
    }

    fn segment(&self, k: usize, x: f64) -> (f64, f64) {
        let h = self.t[k + 1] - self.t[k];
        (h, (x - self.t[k]) / h)
    }

    pub fn value(&self, x: f64) -> f64 {
        let last = self.t.len() - 1;
        if x >= self.t[last] {
            return self.a[last] * (x / self.t[last]).powf(self.tail_exponent);
        }
        let k = self.locate(x);
        let (h, s) = self.segment(k, x);
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.a[k]
            + (s3 - 2.0 * s2 + s) * h * self.slope[k]
            + (-2.0 * s3 + 3.0 * s2) * self.a[k + 1]
            + (s3 - s2) * h * self.slope[k + 1]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let last = self.t.len() - 1;
        if x >= self.t[last] {
            let m = self.tail_exponent;
            return self.a[last] * m * (x / self.t[last]).powf(m - 1.0) / self.t[last];
        }
        let k = self.locate(x);
        let (h, s) = self.segment(k, x);
        let s2 = s * s;
        ((6.0 * s2 - 6.0 * s) * self.a[k]
            + (3.0 * s2 - 4.0 * s + 1.0) * h * self.slope[k]
            + (-6.0 * s2 + 6.0 * s) * self.a[k + 1]
            + (3.0 * s2 - 2.0 * s) * h * self.slope[k + 1])
            / h
    }

    /// Exact integral of the interpolant over `[0, x]`.
    pub fn integral(&self, x: f64) -> f64 {
        let last = self.t.len() - 1;
        if x >= self.t[last] {
            let (tn, an, m) = (self.t[last], self.a[last], self.tail_exponent);
            return self.cumulative[last] + an * tn / (m + 1.0) * ((x / tn).powf(m + 1.0) - 1.0);
        }
        let k = self.locate(x);
        let (h, s) = self.segment(k, x);
        let (s2, s3, s4) = (s * s, s * s * s, s * s * s * s);
        self.cumulative[k]
            + h * ((0.5 * s4 - s3 + s) * self.a[k]
                + (0.25 * s4 - 2.0 / 3.0 * s3 + 0.5 * s2) * h * self.slope[k]
                + (-0.5 * s4 + s3) * self.a[k + 1]
                + (0.25 * s4 - s3 / 3.0) * h * self.slope[k + 1])
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_linear_data() {
        let c = MonotoneCubic::new(&[(0.0, 0.0), (1.0, 2.0), (2.5, 5.0), (10.0, 20.0)]).unwrap();
        for &x in &[0.0, 0.3, 1.0, 1.7, 4.0, 10.0, 25.0] {
            assert!((c.value(x) - 2.0 * x).abs() < 1e-12, "x={x}");
            assert!((c.derivative(x) - 2.0).abs() < 1e-12);
            assert!((c.integral(x) - x * x).abs() < 1e-10);
        }
    }

    #[test]
    fn stays_monotone_on_steep_data() {
        let c = MonotoneCubic::new(&[(0.0, 0.0), (1.0, 0.01), (2.0, 5.0), (3.0, 5.1), (4.0, 9.0)])
            .unwrap();
        let mut prev = -1.0;
        for k in 0..=400 {
            let v = c.value(k as f64 * 0.01);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(MonotoneCubic::new(&[(0.0, 0.0)]).is_err());
        assert!(MonotoneCubic::new(&[(0.1, 0.0), (1.0, 1.0)]).is_err());
        assert!(MonotoneCubic::new(&[(0.0, 0.0), (1.0, 1.0), (2.0, 1.0)]).is_err());
    }
}
