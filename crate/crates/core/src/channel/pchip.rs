//! Shape-preserving piecewise cubic Hermite interpolation (Fritsch-Carlson
//! slopes with weighted harmonic means, zero at local extrema).

use serde::{Deserialize, Serialize};

use super::ChannelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, ChannelError> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(ChannelError::Knots(
                "need at least two knots with matching lengths".into(),
            ));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(ChannelError::Knots("knots must be finite".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ChannelError::Knots(
                "knot abscissae must be strictly increasing".into(),
            ));
        }

        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = y
            .windows(2)
            .zip(&h)
            .map(|(w, hk)| (w[1] - w[0]) / hk)
            .collect();

        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                let (s1, s2) = (delta[k - 1], delta[k]);
                if s1 == 0.0 || s2 == 0.0 || s1.signum() != s2.signum() {
                    d[k] = 0.0;
                } else {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / s1 + w2 / s2);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { x, y, slopes: d })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    pub fn first_x(&self) -> f64 {
        self.x[0]
    }

    pub fn last_x(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Evaluate, holding the end values constant outside the knot range.
    pub fn eval(&self, xq: f64) -> f64 {
        let n = self.x.len();
        if xq <= self.x[0] {
            return self.y[0];
        }
        if xq >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.x.partition_point(|&xi| xi <= xq) - 1;
        let h = self.x[k + 1] - self.x[k];
        let t = (xq - self.x[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[k]
            + h10 * h * self.slopes[k]
            + h01 * self.y[k + 1]
            + h11 * h * self.slopes[k + 1]
    }
}

/// Three-point one-sided slope at an end knot, limited to stay shape-preserving.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() || del0 == 0.0 {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_knots_and_lines() {
        let p = Pchip::new(vec![0.0, 1.0, 3.0], vec![0.0, 1.0, 3.0]).unwrap();
        for (x, y) in p.knots() {
            assert_eq!(p.eval(x), y);
        }
        assert!((p.eval(2.0) - 2.0).abs() < 1e-12);
        assert_eq!(p.eval(10.0), 3.0);
        assert_eq!(p.eval(-1.0), 0.0);
    }

    #[test]
    fn monotone_data_stays_monotone() {
        let x = vec![1.0, 2.0, 5.0, 6.0, 20.0];
        let y = vec![0.1, 0.1, 0.3, 0.45, 0.46];
        let p = Pchip::new(x, y).unwrap();
        let mut prev = p.eval(1.0);
        for i in 1..=2000 {
            let v = p.eval(1.0 + 19.0 * i as f64 / 2000.0);
            assert!(v >= prev - 1e-15);
            assert!(v <= 0.46 + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn local_extremum_gets_flat_slope() {
        let p = Pchip::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0]).unwrap();
        assert!(p.eval(0.9) >= 0.0);
        assert!(p.eval(1.1) >= 0.0);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(Pchip::new(vec![0.0], vec![1.0]).is_err());
        assert!(Pchip::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Pchip::new(vec![0.0, f64::NAN], vec![1.0, 2.0]).is_err());
    }
}
