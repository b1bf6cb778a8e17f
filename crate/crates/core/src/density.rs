//! Piecewise power-law radial densities and masses of balls under them.
//!
//! A density is `rho(s) = sum_t c_t s^{e_t}` on each segment of
//! `[0, b_0], [b_0, b_1], ..., [b_{m-1}, inf)`, taken with respect to Lebesgue
//! measure in `R^n` as a function of the distance `s` to its center.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geometry::{cap_cosines, cap_from_cosines, sphere_area};
use crate::quadrature::{gauss_legendre, gl20};

/// `coef * s^exp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coef: f64,
    pub exp: f64,
}

impl Term {
    pub fn new(coef: f64, exp: f64) -> Self {
        Term { coef, exp }
    }
}

/// Ratio `hi/lo` of the radial range of a cap above which the numeric path
/// integrates in `ln s`.
const WIDE_RATIO: f64 = 1.2;

/// Ratio `hi/lo` above which odd dimensions use the expanded closed form.
fn closed_form_ratio(n: usize) -> f64 {
    1.0 + 0.1 * n as f64 * (n as f64 - 1.0) / 3.0
}
/// Largest odd dimension with a polynomial cap fraction table.
const MAX_POLY_DIM: usize = 15;
/// Relative floor below which the numeric cap integral lumps the remaining mass.
const CAP_FLOOR: f64 = 1e-14;

/// `int_a^b s^k ds` for `0 <= a <= b <= inf`.
pub fn pow_integral(a: f64, b: f64, k: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let k1 = k + 1.0;
    if a == 0.0 {
        return if k1 > 0.0 { b.powf(k1) / k1 } else { f64::INFINITY };
    }
    if b.is_infinite() {
        return if k1 < 0.0 { -a.powf(k1) / k1 } else { f64::INFINITY };
    }
    let l = (b / a).ln();
    let t = k1 * l;
    if t.abs() < 0.5 {
        let exprel = if t == 0.0 { 1.0 } else { t.exp_m1() / t };
        a.powf(k1) * l * exprel
    } else {
        (b.powf(k1) - a.powf(k1)) / k1
    }
}

#[inline]
fn seg_value(seg: &[Term], s: f64) -> f64 {
    match seg {
        [] => 0.0,
        [t] => t.coef * s.powf(t.exp),
        _ => seg.iter().map(|t| t.coef * s.powf(t.exp)).sum(),
    }
}

#[inline]
fn seg_moment(seg: &[Term], a: f64, b: f64, k: f64) -> f64 {
    seg.iter().map(|t| t.coef * pow_integral(a, b, t.exp + k)).sum()
}

/// Coefficients in `c` of the cap fraction `G_n(c)` for odd `3 <= n <= 15`.
fn cap_polynomial(n: usize) -> &'static [f64] {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut out = vec![Vec::new(); MAX_POLY_DIM + 1];
        // j = int_0^theta sin^k in powers of c = cos(theta); norm = j(pi)
        let mut j = vec![1.0, -1.0];
        let mut norm = 2.0;
        // sc = sin^{k+1} cos in powers of c
        let mut sc = vec![0.0, 1.0];
        let mut k = 1usize;
        out[3] = j.iter().map(|v| v / norm).collect();
        while k + 4 <= MAX_POLY_DIM {
            let kk = (k + 2) as f64;
            let mut next = vec![0.0; sc.len() + 2];
            for (i, v) in sc.iter().enumerate() {
                next[i] += v;
                next[i + 2] -= v;
            }
            sc = next;
            let mut nj: Vec<f64> = sc.iter().map(|v| -v / kk).collect();
            for (i, v) in j.iter().enumerate() {
                nj[i] += (kk - 1.0) / kk * v;
            }
            j = nj;
            norm *= (kk - 1.0) / kk;
            k += 2;
            out[k + 2] = j.iter().map(|v| v / norm).collect();
        }
        out
    });
    &table[n]
}

fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(8))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialDensity {
    n: usize,
    omega: f64,
    breaks: Vec<f64>,
    segs: Vec<Vec<Term>>,
    /// `cum[k]` = mass within radius `breaks[k]`
    cum: Vec<f64>,
    total: f64,
    support_end: f64,
    /// `pre[e - 1][k] = int_{b_0}^{b_k} rho(s) s^e ds`
    pre: Vec<Vec<f64>>,
}

impl RadialDensity {
    /// Builds a density from breaks and `breaks.len() + 1` segments of
    /// nonnegative terms.
    pub fn new(n: usize, breaks: Vec<f64>, segs: Vec<Vec<Term>>) -> Result<Self> {
        Self::check_layout(n, &breaks, &segs)?;
        if segs.iter().flatten().any(|t| t.coef < 0.0) {
            return Err(Error::InvalidMeasure("density coefficients must be nonnegative".into()));
        }
        Ok(Self::build(n, breaks, segs))
    }

    fn check_layout(n: usize, breaks: &[f64], segs: &[Vec<Term>]) -> Result<()> {
        if n < 1 {
            return Err(Error::InvalidMeasure("dimension must be positive".into()));
        }
        if segs.len() != breaks.len() + 1 {
            return Err(Error::InvalidMeasure("segment count must be one more than break count".into()));
        }
        if breaks.iter().any(|b| !(b.is_finite() && *b > 0.0)) || breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMeasure("breaks must be positive, finite and increasing".into()));
        }
        if segs.iter().flatten().any(|t| !t.coef.is_finite() || !t.exp.is_finite()) {
            return Err(Error::InvalidMeasure("density terms must be finite".into()));
        }
        if segs[0].iter().any(|t| t.coef != 0.0 && t.exp + n as f64 <= 0.0) {
            return Err(Error::InvalidMeasure("density is not integrable at its center".into()));
        }
        Ok(())
    }

    fn build(n: usize, breaks: Vec<f64>, segs: Vec<Vec<Term>>) -> Self {
        let segs: Vec<Vec<Term>> = segs.into_iter().map(|s| s.into_iter().filter(|t| t.coef != 0.0).collect()).collect();
        let nf = n as f64;
        let omega = sphere_area(n);
        let mut cum = Vec::with_capacity(breaks.len());
        let mut acc = 0.0;
        let mut prev = 0.0;
        for (k, b) in breaks.iter().enumerate() {
            acc += omega * seg_moment(&segs[k], prev, *b, nf - 1.0);
            cum.push(acc);
            prev = *b;
        }
        let last = segs.last().unwrap();
        let total = if last.is_empty() { acc } else { acc + omega * seg_moment(last, prev, f64::INFINITY, nf - 1.0) };
        let support_end = if !last.is_empty() {
            f64::INFINITY
        } else {
            (0..breaks.len()).rev().find(|&k| !segs[k].is_empty()).map(|k| breaks[k]).unwrap_or(0.0)
        };
        let mut pre = Vec::new();
        if n % 2 == 1 && (3..=MAX_POLY_DIM).contains(&n) && !breaks.is_empty() {
            for e in 1..=(2 * n - 3) {
                let mut row = Vec::with_capacity(breaks.len());
                let mut acc = 0.0;
                row.push(0.0);
                for k in 1..breaks.len() {
                    acc += seg_moment(&segs[k], breaks[k - 1], breaks[k], e as f64);
                    row.push(acc);
                }
                pre.push(row);
            }
        }
        RadialDensity { n, omega, breaks, segs, cum, total, support_end, pre }
    }

    pub fn zero(n: usize) -> Self {
        Self::build(n, Vec::new(), vec![Vec::new()])
    }

    /// `amplitude * s^{-gamma}` on `[0, radius]`.
    pub fn bump(n: usize, radius: f64, gamma: f64, amplitude: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidMeasure(format!("bump radius {radius} must be positive")));
        }
        if !(gamma.is_finite() && gamma < n as f64) {
            return Err(Error::InvalidMeasure(format!("bump exponent {gamma} must be below n = {n}")));
        }
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidMeasure(format!("bump amplitude {amplitude} must be nonnegative")));
        }
        RadialDensity::new(n, vec![radius], vec![vec![Term::new(amplitude, -gamma)], Vec::new()])
    }

    /// Log-log interpolation of `densities` at `nodes`, linear where an endpoint
    /// vanishes, with power-law head and tail.
    pub fn profile(n: usize, nodes: &[f64], densities: &[f64], tail_exponent: f64, head_exponent: Option<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != densities.len() {
            return Err(Error::InvalidMeasure("profile needs matching, nonempty nodes and densities".into()));
        }
        if densities.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidMeasure("profile densities must be finite and nonnegative".into()));
        }
        if !tail_exponent.is_finite() || head_exponent.is_some_and(|h| !h.is_finite()) {
            return Err(Error::InvalidMeasure("profile exponents must be finite".into()));
        }
        let m = nodes.len();
        let slope = |k: usize| (densities[k + 1] / densities[k]).ln() / (nodes[k + 1] / nodes[k]).ln();
        let head = head_exponent.unwrap_or_else(|| {
            if m == 1 {
                tail_exponent
            } else if densities[0] > 0.0 && densities[1] > 0.0 {
                slope(0)
            } else {
                0.0
            }
        });
        let mut segs = Vec::with_capacity(m + 1);
        segs.push(if densities[0] > 0.0 { vec![Term::new(densities[0] / nodes[0].powf(head), head)] } else { Vec::new() });
        for k in 0..m.saturating_sub(1) {
            let (r0, r1, d0, d1) = (nodes[k], nodes[k + 1], densities[k], densities[k + 1]);
            if d0 > 0.0 && d1 > 0.0 {
                let sl = slope(k);
                segs.push(vec![Term::new(d0 / r0.powf(sl), sl)]);
            } else if d0 == 0.0 && d1 == 0.0 {
                segs.push(Vec::new());
            } else {
                let b = (d1 - d0) / (r1 - r0);
                segs.push(vec![Term::new(d0 - b * r0, 0.0), Term::new(b, 1.0)]);
            }
        }
        segs.push(if densities[m - 1] > 0.0 {
            vec![Term::new(densities[m - 1] / nodes[m - 1].powf(tail_exponent), tail_exponent)]
        } else {
            Vec::new()
        });
        Self::check_layout(n, nodes, &segs)?;
        Ok(Self::build(n, nodes.to_vec(), segs))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn segments(&self) -> &[Vec<Term>] {
        &self.segs
    }

    /// Index of the segment containing `s`.
    #[inline]
    fn seg_index(&self, s: f64) -> usize {
        self.breaks.partition_point(|b| *b <= s)
    }

    #[inline]
    fn seg_start(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.breaks[k - 1]
        }
    }

    #[inline]
    fn seg_end(&self, k: usize) -> f64 {
        self.breaks.get(k).copied().unwrap_or(f64::INFINITY)
    }

    pub fn density(&self, s: f64) -> f64 {
        seg_value(&self.segs[self.seg_index(s)], s)
    }

    pub fn is_zero(&self) -> bool {
        self.segs.iter().all(|s| s.is_empty())
    }

    /// Mass of the open ball of radius `s` about the center.
    pub fn mass_within(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s >= self.support_end {
            return self.total;
        }
        let k = self.seg_index(s);
        let base = if k == 0 { 0.0 } else { self.cum[k - 1] };
        base + self.omega * seg_moment(&self.segs[k], self.seg_start(k), s, self.n as f64 - 1.0)
    }

    /// Total mass, `inf` when the tail is not integrable.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Radius beyond which the density vanishes, `inf` for unbounded support.
    pub fn support_end(&self) -> f64 {
        self.support_end
    }

    /// Smallest exponent among the terms of the first segment.
    pub fn head_exponent(&self) -> Option<f64> {
        self.segs[0].iter().map(|t| t.exp).reduce(f64::min)
    }

    /// Largest exponent of the tail segment, `None` for bounded support.
    pub fn tail_exponent(&self) -> Option<f64> {
        self.segs.last().unwrap().iter().map(|t| t.exp).reduce(f64::max)
    }

    /// `int_a^b rho(s) s^k omega s^{n-1} ds`.
    pub fn moment(&self, a: f64, b: f64, k: f64) -> f64 {
        let a = a.max(0.0);
        let b = b.min(self.support_end);
        if !(b > a) {
            return 0.0;
        }
        let ka = self.seg_index(a);
        let kb = if b.is_finite() { self.seg_index(b).min(self.segs.len() - 1) } else { self.segs.len() - 1 };
        let e = k + self.n as f64 - 1.0;
        let mut acc = 0.0;
        for j in ka..=kb {
            let lo = self.seg_start(j).max(a);
            let hi = self.seg_end(j).min(b);
            if hi > lo {
                acc += seg_moment(&self.segs[j], lo, hi, e);
            }
        }
        self.omega * acc
    }

    /// Mass of the open ball `B(x, r)` with `|x - center| = d`.
    pub fn ball_mass_offset(&self, d: f64, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if d <= 0.0 {
            return self.mass_within(r);
        }
        let base = if r > d { self.mass_within(r - d) } else { 0.0 };
        let lo = (r - d).abs();
        let hi = (r + d).min(self.support_end);
        if !(hi > lo) {
            return base;
        }
        let closed = !self.pre.is_empty() && hi >= closed_form_ratio(self.n) * lo;
        let cap = if closed { self.cap_closed(d, r, lo, hi) } else { self.cap_numeric(d, r, lo, hi) };
        base + cap.max(0.0)
    }

    /// `int_lo^hi rho(s) s^e ds` through the prefix tables.
    fn power_moment(&self, lo: f64, hi: f64, e: usize) -> f64 {
        let ef = e as f64;
        let kl = self.seg_index(lo);
        let kh = self.seg_index(hi).min(self.segs.len() - 1);
        if kl == kh {
            return seg_moment(&self.segs[kl], lo, hi, ef);
        }
        let row = &self.pre[e - 1];
        seg_moment(&self.segs[kl], lo, self.breaks[kl], ef)
            + (row[kh - 1] - row[kl])
            + seg_moment(&self.segs[kh], self.breaks[kh - 1], hi, ef)
    }

    fn cap_closed(&self, d: f64, r: f64, lo: f64, hi: f64) -> f64 {
        let n = self.n;
        let g = cap_polynomial(n);
        let dd = (d - r) * (d + r);
        let mut coef = [0.0f64; 2 * MAX_POLY_DIM];
        let inv2d = 1.0 / (2.0 * d);
        let mut scale = 1.0;
        for (j, gj) in g.iter().enumerate() {
            if *gj != 0.0 {
                let mut binom = 1.0;
                for i in 0..=j {
                    let dpow = if j - i == 0 { 1.0 } else { dd.powi((j - i) as i32) };
                    if dpow != 0.0 {
                        coef[n - 1 + 2 * i - j] += gj * scale * binom * dpow;
                    }
                    binom = binom * (j - i) as f64 / (i + 1) as f64;
                }
            }
            scale *= inv2d;
        }
        let mut acc = 0.0;
        for (e, c) in coef.iter().enumerate().take(2 * n - 2).skip(1) {
            if *c != 0.0 {
                acc += c * self.power_moment(lo, hi, e);
            }
        }
        self.omega * acc
    }

    fn cap_numeric(&self, d: f64, r: f64, lo: f64, hi: f64) -> f64 {
        let n = self.n;
        let nf = n as f64;
        let mut acc = 0.0;
        let floor = CAP_FLOOR * hi;
        let start = if lo < floor {
            let s_mid = if lo > 0.0 { (lo * floor).sqrt() } else { 0.5 * floor };
            let (om, op) = cap_cosines(d, s_mid, r);
            acc += cap_from_cosines(n, om, op) * (self.mass_within(floor) - self.mass_within(lo)) / self.omega;
            floor
        } else {
            lo
        };
        // v = ln s on wide ranges, v = s otherwise; v = v0 + h (1 - cos phi) / 2
        let wide = hi >= WIDE_RATIO * start;
        let to_v = |s: f64| if wide { s.ln() } else { s };
        let (v0, v1) = (to_v(start), to_v(hi));
        let h = v1 - v0;
        let phi_of = |s: f64| (1.0 - 2.0 * (to_v(s) - v0) / h).clamp(-1.0, 1.0).acos();
        let kl = self.seg_index(start);
        let kh = self.seg_index(hi).min(self.segs.len() - 1);
        let pi = std::f64::consts::PI;
        for k in kl..=kh {
            let seg = &self.segs[k];
            if seg.is_empty() {
                continue;
            }
            let a = self.seg_start(k).max(start);
            let b = self.seg_end(k).min(hi);
            if !(b > a) {
                continue;
            }
            let (pa, pb) = (if a == start { 0.0 } else { phi_of(a) }, if b == hi { pi } else { phi_of(b) });
            let pieces = if wide { ((to_v(b) - to_v(a)) / std::f64::consts::LN_2).ceil().max(1.0) as usize } else { 1 };
            let f = |phi: f64| {
                let (sp, cp) = phi.sin_cos();
                let v = v0 + 0.5 * h * (1.0 - cp);
                let s = if wide { v.exp() } else { v };
                let jac = 0.5 * h * sp * if wide { s } else { 1.0 };
                let (om, op) = cap_cosines(d, s, r);
                seg_value(seg, s) * s.powf(nf - 1.0) * cap_from_cosines(n, om, op) * jac
            };
            for i in 0..pieces {
                // equal steps in v mapped back to phi
                let va = to_v(a) + (to_v(b) - to_v(a)) * i as f64 / pieces as f64;
                let vb = to_v(a) + (to_v(b) - to_v(a)) * (i + 1) as f64 / pieces as f64;
                let qa = if i == 0 { pa } else { (1.0 - 2.0 * (va - v0) / h).clamp(-1.0, 1.0).acos() };
                let qb = if i + 1 == pieces { pb } else { (1.0 - 2.0 * (vb - v0) / h).clamp(-1.0, 1.0).acos() };
                if qb > qa {
                    let rule = if qb - qa < 0.25 { gl8() } else { gl20() };
                    acc += crate::quadrature::gl_fixed(f, qa, qb, rule);
                }
            }
        }
        self.omega * acc
    }

    /// Pointwise product with a piecewise power field raised to `power`.
    ///
    /// `field_breaks` has one fewer entry than `field_terms`; each field segment
    /// is a single positive power term.
    pub fn times_field_power(&self, field_breaks: &[f64], field_terms: &[Term], power: f64) -> RadialDensity {
        let mut breaks: Vec<f64> = self.breaks.iter().chain(field_breaks).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let support = self.support_end;
        breaks.retain(|b| *b <= support);
        let mut segs = Vec::with_capacity(breaks.len() + 1);
        for k in 0..=breaks.len() {
            let lo = if k == 0 { 0.0 } else { breaks[k - 1] };
            let hi = breaks.get(k).copied().unwrap_or(f64::INFINITY);
            let mid = if k == 0 { 0.5 * hi } else if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
            let mid = if mid.is_finite() && mid > 0.0 { mid } else { 1.0 };
            let ds = &self.segs[self.seg_index(mid)];
            let ft = field_terms[field_breaks.partition_point(|b| *b <= mid)];
            let fc = ft.coef.powf(power);
            segs.push(ds.iter().map(|t| Term::new(t.coef * fc, t.exp + ft.exp * power)).collect::<Vec<_>>());
        }
        if segs[0].iter().any(|t| t.exp + self.n as f64 <= 0.0) {
            // a field singular at the center is clipped to keep the product integrable
            let edge = breaks.first().copied().unwrap_or(1.0);
            let floor = -(self.n as f64) + 1e-9;
            segs[0] = segs[0]
                .iter()
                .map(|t| if t.exp <= floor { Term::new(t.coef * edge.powf(t.exp - floor), floor) } else { *t })
                .collect();
        }
        Self::build(self.n, breaks, segs)
    }

    /// Pointwise sum of densities sharing a center and dimension.
    pub fn sum(parts: &[&RadialDensity]) -> RadialDensity {
        let n = parts.first().map(|d| d.n).unwrap_or(1);
        let mut breaks: Vec<f64> = parts.iter().flat_map(|d| d.breaks.iter().copied()).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut segs = Vec::with_capacity(breaks.len() + 1);
        for k in 0..=breaks.len() {
            let lo = if k == 0 { 0.0 } else { breaks[k - 1] };
            let hi = breaks.get(k).copied().unwrap_or(f64::INFINITY);
            let mid = if k == 0 { 0.5 * hi } else if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
            let mid = if mid.is_finite() && mid > 0.0 { mid } else { 1.0 };
            segs.push(parts.iter().flat_map(|d| d.segs[d.seg_index(mid)].iter().copied()).collect::<Vec<_>>());
        }
        Self::build(n, breaks, segs)
    }

    /// Copy with the density multiplied by `c >= 0`.
    pub fn scaled(&self, c: f64) -> RadialDensity {
        let segs = self.segs.iter().map(|s| s.iter().map(|t| Term::new(t.coef * c, t.exp)).collect()).collect();
        Self::build(self.n, self.breaks.clone(), segs)
    }

    /// Copy with the density multiplied by `s^k`.
    pub fn times_power(&self, k: f64) -> RadialDensity {
        let segs = self.segs.iter().map(|s| s.iter().map(|t| Term::new(t.coef, t.exp + k)).collect()).collect();
        Self::build(self.n, self.breaks.clone(), segs)
    }

    /// Restriction to the open ball of radius `rho` about the center.
    pub fn truncated(&self, rho: f64) -> RadialDensity {
        if rho <= 0.0 {
            return Self::zero(self.n);
        }
        let mut breaks: Vec<f64> = self.breaks.iter().copied().filter(|b| *b < rho).collect();
        let mut segs: Vec<Vec<Term>> = (0..=breaks.len()).map(|k| self.segs[k].clone()).collect();
        breaks.push(rho);
        segs.push(Vec::new());
        Self::build(self.n, breaks, segs)
    }
}
