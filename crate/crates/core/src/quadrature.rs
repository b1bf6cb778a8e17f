//! Gauss-Kronrod and Gauss-Legendre rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One 15-point Kronrod panel and its 7-point Gauss difference.
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// The 15 nodes and weights of the Kronrod rule on `[a, b]`.
pub fn gk15_nodes(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    (0..15).map(move |i| {
        if i < 7 {
            (c - h * XGK[i], h * WGK[i])
        } else if i == 7 {
            (c, h * WGK[7])
        } else {
            (c + h * XGK[14 - i], h * WGK[14 - i])
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub error: f64,
}

impl Eq for Panel {}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 0.0, rel: 1e-10, max_panels: 2000 }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub panels: Vec<Panel>,
    pub converged: bool,
}

impl Outcome {
    /// Kronrod nodes and weights of the final partition.
    pub fn rule(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self.panels.iter().flat_map(|p| gk15_nodes(p.a, p.b)).collect();
        out.sort_by(|x, y| x.0.total_cmp(&y.0));
        out
    }
}

/// Globally adaptive integration over the partition given by `cuts` (sorted).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, cuts: &[f64], tol: Tolerance) -> Outcome {
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    let mut evals = 0;
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            evals += 15;
            value += v;
            error += e;
            heap.push(Panel { a: w[0], b: w[1], value: v, error: e });
        }
    }
    let mut converged = true;
    loop {
        let target = tol.abs.max(tol.rel * value.abs());
        if error <= target {
            break;
        }
        if heap.len() >= tol.max_panels {
            converged = false;
            break;
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            heap.push(worst);
            converged = false;
            break;
        }
        let (v1, e1) = gk15(&mut f, worst.a, m);
        let (v2, e2) = gk15(&mut f, m, worst.b);
        evals += 30;
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
        heap.push(Panel { a: worst.a, b: m, value: v1, error: e1 });
        heap.push(Panel { a: m, b: worst.b, value: v2, error: e2 });
    }
    let mut panels = heap.into_vec();
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = panels.iter().map(|p| p.value).sum();
    let error = panels.iter().map(|p| p.error).sum();
    Outcome { value, error, evaluations: evals, panels, converged }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Cached 20-point Gauss-Legendre rule.
pub fn gl20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

/// Fixed Gauss-Legendre sum of `f` over `[a, b]`.
pub fn gl_fixed<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_exact_on_polynomials() {
        let (v, _) = gk15(&mut |x: f64| x.powi(20), 0.0, 1.0);
        assert!((v - 1.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let out = integrate(|x: f64| (x - 0.3).abs().sqrt(), &[0.0, 1.0], Tolerance { abs: 1e-13, rel: 1e-12, max_panels: 500 });
        let exact = 2.0 / 3.0 * (0.3f64.powf(1.5) + 0.7f64.powf(1.5));
        assert!((out.value - exact).abs() < 1e-10);
        let r: f64 = out.rule().iter().map(|(x, w)| w * (x - 0.3).abs().sqrt()).sum();
        assert!((r - out.value).abs() < 1e-14);
    }

    #[test]
    fn legendre_weights() {
        for n in [1, 2, 5, 20, 33] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let m: f64 = x.iter().zip(&w).map(|(a, b)| a.powi(2) * b).sum();
            if n >= 2 {
                assert!((m - 2.0 / 3.0).abs() < 1e-13);
            }
        }
    }
}
