//! Points, sphere areas and the fraction of a sphere lying inside a ball.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;
use std::sync::OnceLock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn origin(n: usize) -> Self {
        Point(vec![0.0; n])
    }

    /// `r` times the first basis vector.
    pub fn on_axis(n: usize, r: f64) -> Self {
        let mut v = vec![0.0; n];
        v[0] = r;
        Point(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn add(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Point {
        Point(self.0.iter().map(|a| a * s).collect())
    }

    /// `z + t (x - z)`.
    pub fn lerp_from(z: &Point, x: &Point, t: f64) -> Point {
        Point(z.0.iter().zip(&x.0).map(|(a, b)| a + t * (b - a)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// Surface area of the unit sphere in `R^n`.
pub fn sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / ln_gamma(h).exp()
}

/// Volume of the unit ball in `R^n`.
pub fn ball_volume(n: usize) -> f64 {
    sphere_area(n) / n as f64
}

/// Cosine of the cap half-angle: points of `S(z, s)` with polar angle below
/// `acos(c)` (measured from the direction of `x`) lie in `B(x, r)`, `d = |x - z|`.
/// Returns `(1 - c, 1 + c)` evaluated without cancellation.
#[inline]
pub fn cap_cosines(d: f64, s: f64, r: f64) -> (f64, f64) {
    let two_ds = 2.0 * d * s;
    let one_minus = (r - (s - d)) * (r + (s - d)) / two_ds;
    let one_plus = ((s + d) - r) * ((s + d) + r) / two_ds;
    (one_minus.clamp(0.0, 2.0), one_plus.clamp(0.0, 2.0))
}

#[inline]
fn trivial_cap(d: f64, s: f64, r: f64) -> Option<f64> {
    if r <= 0.0 {
        return Some(0.0);
    }
    if d == 0.0 || s == 0.0 {
        return Some(if s.max(d) < r { 1.0 } else { 0.0 });
    }
    if s + d <= r {
        return Some(1.0);
    }
    if s >= r + d || s <= d - r {
        return Some(0.0);
    }
    None
}

/// Fraction of the sphere `S(z, s)` inside the open ball `B(x, r)` with `|x - z| = d`,
/// through the regularized incomplete beta function.
pub fn sphere_cap_fraction(n: usize, d: f64, s: f64, r: f64) -> f64 {
    if let Some(v) = trivial_cap(d, s, r) {
        return v;
    }
    let (om, op) = cap_cosines(d, s, r);
    let sin2 = (om * op).min(1.0);
    let half = 0.5 * beta_reg((n as f64 - 1.0) / 2.0, 0.5, sin2);
    if om <= 1.0 {
        half
    } else {
        1.0 - half
    }
}

/// Same as [`sphere_cap_fraction`] through the sine-power recurrence.
pub fn cap_fraction_fast(n: usize, d: f64, s: f64, r: f64) -> f64 {
    if let Some(v) = trivial_cap(d, s, r) {
        return v;
    }
    let (om, op) = cap_cosines(d, s, r);
    cap_from_cosines(n, om, op)
}

/// `G_n` from `1 - c` and `1 + c`.
#[inline]
pub fn cap_from_cosines(n: usize, om: f64, op: f64) -> f64 {
    match n {
        3 => 0.5 * om,
        2 => {
            let theta = 2.0 * om.sqrt().atan2(op.sqrt());
            theta / std::f64::consts::PI
        }
        _ if om < 0.2 => small_cap(n, 0.5 * om),
        _ => {
            let theta = 2.0 * om.sqrt().atan2(op.sqrt());
            let (sn, cs) = theta.sin_cos();
            let m = n - 2;
            // j = int_0^theta sin^k, nk = the same over [0, pi], sp = sin^{k+1}
            let (mut j, mut nk, mut k, mut sp) = if m % 2 == 0 {
                (theta, std::f64::consts::PI, 0usize, sn)
            } else {
                (om, 2.0, 1usize, sn * sn)
            };
            while k < m {
                let kk = (k + 2) as f64;
                j = -sp * cs / kk + (kk - 1.0) / kk * j;
                nk *= (kk - 1.0) / kk;
                sp *= sn * sn;
                k += 2;
            }
            (j / nk).clamp(0.0, 1.0)
        }
    }
}

/// `I_x(a, a)` with `a = (n-1)/2` by its hypergeometric series, `x < 0.1`.
fn small_cap(n: usize, x: f64) -> f64 {
    static NORM: OnceLock<Vec<f64>> = OnceLock::new();
    let table = NORM.get_or_init(|| (0..=64).map(|k| if k < 2 { 0.0 } else { cap_series_norm(k) }).collect());
    let a = (n as f64 - 1.0) / 2.0;
    let norm = table.get(n).copied().unwrap_or_else(|| cap_series_norm(n));
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    while term > 1e-17 * sum {
        term *= (2.0 * a + k) / (a + 1.0 + k) * x;
        sum += term;
        k += 1.0;
    }
    (a * (x * (1.0 - x)).ln() - norm).exp() * sum
}

/// `ln(a B(a, a))` with `a = (n-1)/2`.
fn cap_series_norm(n: usize) -> f64 {
    let a = (n as f64 - 1.0) / 2.0;
    a.ln() + 2.0 * ln_gamma(a) - ln_gamma(2.0 * a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn areas() {
        let pi = std::f64::consts::PI;
        assert!((sphere_area(2) - 2.0 * pi).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * pi).abs() < 1e-13);
        assert!((sphere_area(4) - 2.0 * pi * pi).abs() < 1e-12);
        assert!((ball_volume(3) - 4.0 * pi / 3.0).abs() < 1e-13);
    }

    #[test]
    fn cap_reference_values() {
        assert!((sphere_cap_fraction(3, 1.0, 1.0, 1.0) - 0.25).abs() < 1e-14);
        assert!((sphere_cap_fraction(2, 1.0, 1.0, 1.0) - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(sphere_cap_fraction(3, 0.5, 0.2, 1.0), 1.0);
        assert_eq!(sphere_cap_fraction(3, 3.0, 1.0, 1.0), 0.0);
        assert_eq!(sphere_cap_fraction(3, 0.5, 3.0, 1.0), 0.0);
    }

    #[test]
    fn fast_matches_beta_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..=8 {
            for _ in 0..2000 {
                let d: f64 = rng.gen_range(0.01..3.0);
                let r: f64 = if rng.gen_bool(0.5) { rng.gen_range(0.01..3.0) } else { d * rng.gen_range(1e-4..1e-2) };
                let s: f64 = rng.gen_range(0.0..6.0);
                let a = sphere_cap_fraction(n, d, s, r);
                let b = cap_fraction_fast(n, d, s, r);
                assert!((a - b).abs() < 1e-12 * a.max(1e-3), "n={n} d={d} s={s} r={r}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn closed_forms_for_small_dimensions() {
        for i in 1..200 {
            let c = -1.0 + 2.0 * i as f64 / 200.0;
            let (om, op) = (1.0 - c, 1.0 + c);
            let th = c.acos();
            let g4 = (th - th.sin() * th.cos()) / std::f64::consts::PI;
            let g5 = (2.0 - 3.0 * c + c * c * c) / 4.0;
            assert!((cap_from_cosines(4, om, op) - g4).abs() < 1e-13);
            assert!((cap_from_cosines(5, om, op) - g5).abs() < 1e-13);
        }
    }

    #[test]
    fn monte_carlo_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=5 {
            let (d, s, r) = (1.0, 0.8, 0.9);
            let exact = sphere_cap_fraction(n, d, s, r);
            let samples = 200_000;
            let mut hit = 0usize;
            for _ in 0..samples {
                let mut v: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
                let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                v.iter_mut().for_each(|a| *a *= s / nv);
                v[0] -= d;
                if v.iter().map(|a| a * a).sum::<f64>().sqrt() < r {
                    hit += 1;
                }
            }
            let mc = hit as f64 / samples as f64;
            let se = (exact * (1.0 - exact) / samples as f64).sqrt();
            assert!((mc - exact).abs() < 5.0 * se + 1e-4, "n={n}: mc {mc} exact {exact}");
        }
    }

    fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
