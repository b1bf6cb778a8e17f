use serde::{Deserialize, Serialize};

use crate::density::Term;
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Nonnegative radial function sampled at log-spaced radii, extended by powers
/// below the first node and beyond the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    pub center: Point,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub head_exponent: f64,
    pub tail_exponent: f64,
}

/// Log-log slope over the first (or last) decade of nodes.
fn decade_slope(nodes: &[f64], values: &[f64], head: bool) -> f64 {
    let m = nodes.len();
    if m < 2 {
        return 0.0;
    }
    let (i, j) = if head {
        let j = (1..m).find(|&j| nodes[j] >= 10.0 * nodes[0]).unwrap_or(m - 1);
        (0, j)
    } else {
        let i = (0..m - 1).rev().find(|&i| nodes[i] <= nodes[m - 1] / 10.0).unwrap_or(0);
        (i, m - 1)
    };
    if values[i] > 0.0 && values[j] > 0.0 {
        (values[j] / values[i]).ln() / (nodes[j] / nodes[i]).ln()
    } else {
        0.0
    }
}

/// `count` log-spaced radii on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let l = (hi / lo).ln();
    (0..count).map(|i| if i + 1 == count { hi } else { lo * (l * i as f64 / (count - 1) as f64).exp() }).collect()
}

impl RadialField {
    pub fn new(center: Point, nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != values.len() {
            return Err(Error::InvalidArgument("field needs matching, nonempty nodes and values".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) || nodes[0] <= 0.0 {
            return Err(Error::InvalidArgument("field nodes must be positive and increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("field values must be finite and nonnegative".into()));
        }
        let head_exponent = decade_slope(&nodes, &values, true);
        let tail_exponent = decade_slope(&nodes, &values, false);
        Ok(RadialField { center, nodes, values, head_exponent, tail_exponent })
    }

    pub fn zeros(center: Point, nodes: Vec<f64>) -> Self {
        let values = vec![0.0; nodes.len()];
        RadialField { center, nodes, values, head_exponent: 0.0, tail_exponent: 0.0 }
    }

    pub fn refresh_exponents(&mut self) {
        self.head_exponent = decade_slope(&self.nodes, &self.values, true);
        self.tail_exponent = decade_slope(&self.nodes, &self.values, false);
    }

    pub fn with_values(&self, values: Vec<f64>) -> RadialField {
        let mut f = RadialField { center: self.center.clone(), nodes: self.nodes.clone(), values, head_exponent: 0.0, tail_exponent: 0.0 };
        f.refresh_exponents();
        f
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RadialField {
        self.with_values(self.values.iter().map(|v| f(*v)).collect())
    }

    /// Value at distance `r` from the center.
    pub fn eval(&self, r: f64) -> f64 {
        let m = self.nodes.len();
        if r <= self.nodes[0] {
            return if r <= 0.0 && self.head_exponent < 0.0 {
                f64::INFINITY
            } else if r <= 0.0 {
                if self.head_exponent > 0.0 {
                    0.0
                } else {
                    self.values[0]
                }
            } else {
                self.values[0] * (r / self.nodes[0]).powf(self.head_exponent)
            };
        }
        if r >= self.nodes[m - 1] {
            return self.values[m - 1] * (r / self.nodes[m - 1]).powf(self.tail_exponent);
        }
        let k = self.nodes.partition_point(|x| *x <= r) - 1;
        let (r0, r1, v0, v1) = (self.nodes[k], self.nodes[k + 1], self.values[k], self.values[k + 1]);
        if v0 > 0.0 && v1 > 0.0 {
            v0 * (r / r0).powf((v1 / v0).ln() / (r1 / r0).ln())
        } else {
            v0 + (v1 - v0) * (r - r0) / (r1 - r0)
        }
    }

    /// Breaks and one power term per segment, zero where an endpoint vanishes.
    pub fn pieces(&self) -> (Vec<f64>, Vec<Term>) {
        let m = self.nodes.len();
        let mut terms = Vec::with_capacity(m + 1);
        let (n0, v0) = (self.nodes[0], self.values[0]);
        terms.push(Term::new(v0 * n0.powf(-self.head_exponent), self.head_exponent));
        for k in 0..m - 1 {
            let (r0, r1, a, b) = (self.nodes[k], self.nodes[k + 1], self.values[k], self.values[k + 1]);
            if a > 0.0 && b > 0.0 {
                let sl = (b / a).ln() / (r1 / r0).ln();
                terms.push(Term::new(a * r0.powf(-sl), sl));
            } else {
                terms.push(Term::new(0.0, 0.0));
            }
        }
        let (nl, vl) = (self.nodes[m - 1], self.values[m - 1]);
        terms.push(Term::new(vl * nl.powf(-self.tail_exponent), self.tail_exponent));
        (self.nodes.clone(), terms)
    }

    /// `sup_i |a_i - b_i| / (|a_i| + guard)`.
    pub fn sup_rel_diff(&self, other: &RadialField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs() / (a.abs().max(b.abs()) + 1e-300))
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> RadialField {
        self.map(|v| v * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_reproduced() {
        let nodes = log_grid(0.01, 100.0, 41);
        let vals: Vec<f64> = nodes.iter().map(|r| 3.0 * r.powf(-1.5)).collect();
        let f = RadialField::new(Point::origin(3), nodes, vals).unwrap();
        assert!((f.head_exponent + 1.5).abs() < 1e-12);
        assert!((f.tail_exponent + 1.5).abs() < 1e-12);
        for r in [1e-4, 0.0123, 1.0, 77.0, 1e5] {
            assert!((f.eval(r) - 3.0 * r.powf(-1.5)).abs() < 1e-10 * f.eval(r));
        }
        let (b, t) = f.pieces();
        assert_eq!(b.len() + 1, t.len());
        assert!((t[5].coef - 3.0).abs() < 1e-10);
    }
}
