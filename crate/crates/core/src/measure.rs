//! Finite sums of radial power-law components and atoms.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::RadialDensity;
use crate::error::{Error, Result};
use crate::extended::{ExtendedValue, InfiniteReason};
use crate::geometry::Point;

/// One component of a measure as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Component {
    /// `amplitude * |x - center|^{-gamma}` on `B(center, radius)`.
    RadialPowerBump { center: Point, radius: f64, gamma: f64, amplitude: f64 },
    Atom { location: Point, mass: f64 },
    /// Log-log interpolated density with power-law head and tail.
    RadialProfile {
        center: Point,
        nodes: Vec<f64>,
        densities: Vec<f64>,
        tail_exponent: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        head_exponent: Option<f64>,
    },
}

/// Serialized form of a measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub dim: usize,
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpShape {
    pub radius: f64,
    pub gamma: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct RadialPart {
    pub center: Point,
    pub density: Arc<RadialDensity>,
    pub bump: Option<BumpShape>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomPart {
    pub location: Point,
    pub mass: f64,
}

type BreakCache = Arc<RwLock<HashMap<Vec<u64>, Arc<Vec<f64>>>>>;

#[derive(Debug, Clone)]
pub struct Measure {
    dim: usize,
    spec: Option<Vec<Component>>,
    radial: Vec<RadialPart>,
    atoms: Vec<AtomPart>,
    breaks: BreakCache,
}

fn check_point(p: &Point, dim: usize, what: &str) -> Result<()> {
    if p.dim() != dim || !p.is_finite() {
        return Err(Error::InvalidMeasure(format!("{what} must be a finite point of dimension {dim}")));
    }
    Ok(())
}

impl Measure {
    pub fn new(dim: usize, components: Vec<Component>) -> Result<Self> {
        let mut radial = Vec::new();
        let mut atoms = Vec::new();
        for c in &components {
            match c {
                Component::RadialPowerBump { center, radius, gamma, amplitude } => {
                    check_point(center, dim, "bump center")?;
                    let density = RadialDensity::bump(dim, *radius, *gamma, *amplitude)?;
                    radial.push(RadialPart {
                        center: center.clone(),
                        density: Arc::new(density),
                        bump: Some(BumpShape { radius: *radius, gamma: *gamma, amplitude: *amplitude }),
                    });
                }
                Component::Atom { location, mass } => {
                    check_point(location, dim, "atom location")?;
                    if !(mass.is_finite() && *mass >= 0.0) {
                        return Err(Error::InvalidMeasure(format!("atom mass {mass} must be nonnegative")));
                    }
                    atoms.push(AtomPart { location: location.clone(), mass: *mass });
                }
                Component::RadialProfile { center, nodes, densities, tail_exponent, head_exponent } => {
                    check_point(center, dim, "profile center")?;
                    let density = RadialDensity::profile(dim, nodes, densities, *tail_exponent, *head_exponent)?;
                    radial.push(RadialPart { center: center.clone(), density: Arc::new(density), bump: None });
                }
            }
        }
        Ok(Measure { dim, spec: Some(components), radial, atoms, breaks: BreakCache::default() })
    }

    pub fn from_spec(spec: MeasureSpec) -> Result<Self> {
        Measure::new(spec.dim, spec.components)
    }

    /// Measure built from already assembled parts; it has no serialized form.
    pub fn from_parts(dim: usize, radial: Vec<RadialPart>, atoms: Vec<AtomPart>) -> Self {
        Measure { dim, spec: None, radial, atoms, breaks: BreakCache::default() }
    }

    pub fn from_radial(center: Point, density: RadialDensity) -> Self {
        let dim = center.dim();
        Measure::from_parts(dim, vec![RadialPart { center, density: Arc::new(density), bump: None }], Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> Option<MeasureSpec> {
        self.spec.as_ref().map(|c| MeasureSpec { dim: self.dim, components: c.clone() })
    }

    pub fn radial_parts(&self) -> &[RadialPart] {
        &self.radial
    }

    pub fn atoms(&self) -> &[AtomPart] {
        &self.atoms
    }

    pub fn is_zero(&self) -> bool {
        self.radial.iter().all(|p| p.density.is_zero()) && self.atoms.iter().all(|a| a.mass == 0.0)
    }

    /// `sigma(B(x, r))` for the open ball.
    pub fn ball_mass(&self, x: &Point, r: f64) -> f64 {
        let mut m = 0.0;
        for part in &self.radial {
            m += part.density.ball_mass_offset(x.dist(&part.center), r);
        }
        for a in &self.atoms {
            if x.dist(&a.location) < r {
                m += a.mass;
            }
        }
        m
    }

    /// Radii at which `r -> sigma(B(x, r))` may fail to be smooth.
    pub fn breakpoints(&self, x: &Point) -> Arc<Vec<f64>> {
        let key: Vec<u64> = x.0.iter().map(|c| c.to_bits()).collect();
        if let Some(hit) = self.breaks.read().ok().and_then(|m| m.get(&key).cloned()) {
            return hit;
        }
        let mut out = Vec::new();
        for a in &self.atoms {
            out.push(x.dist(&a.location));
        }
        for part in &self.radial {
            let d = x.dist(&part.center);
            let edge = part.density.support_end();
            let edge = if edge.is_finite() { edge } else { part.density.breaks().last().copied().unwrap_or(0.0) };
            if edge > 0.0 {
                out.push((d - edge).abs());
                out.push(d + edge);
            }
        }
        out.retain(|r| *r > 0.0 && r.is_finite());
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs());
        let out = Arc::new(out);
        if let Ok(mut m) = self.breaks.write() {
            m.entry(key).or_insert_with(|| out.clone());
        }
        out
    }

    /// Every radius where the radial profile seen from `x` changes form.
    pub fn fine_breakpoints(&self, x: &Point) -> Vec<f64> {
        let mut out: Vec<f64> = self.breakpoints(x).as_ref().clone();
        for part in &self.radial {
            let d = x.dist(&part.center);
            if d > 0.0 {
                out.push(d);
            }
            for b in part.density.breaks() {
                out.push((d - b).abs());
                out.push(d + b);
            }
        }
        out.retain(|r| *r > 0.0 && r.is_finite());
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * b.abs());
        out
    }

    /// Smallest radius with `B(x, R)` containing the whole support; `inf` if unbounded.
    pub fn support_radius(&self, x: &Point) -> f64 {
        let mut r: f64 = 0.0;
        for a in &self.atoms {
            if a.mass > 0.0 {
                r = r.max(x.dist(&a.location));
            }
        }
        for part in &self.radial {
            if !part.density.is_zero() {
                r = r.max(x.dist(&part.center) + part.density.support_end());
            }
        }
        r
    }

    pub fn total_mass(&self) -> ExtendedValue {
        let mut m = 0.0;
        for part in &self.radial {
            m += part.density.total_mass();
        }
        m += self.atoms.iter().map(|a| a.mass).sum::<f64>();
        if m.is_finite() {
            ExtendedValue::Finite(m)
        } else {
            ExtendedValue::Infinite(InfiniteReason::DivergentTail)
        }
    }

    /// Common center when every part is radial about one point and there are no atoms.
    pub fn radial_center(&self) -> Option<Point> {
        if self.atoms.iter().any(|a| a.mass > 0.0) {
            return None;
        }
        let first = self.radial.first()?.center.clone();
        let scale = 1.0 + first.norm();
        self.radial.iter().all(|p| p.center.dist(&first) <= 1e-12 * scale).then_some(first)
    }

    /// Combined density about the common center, if there is one.
    pub fn radial_density(&self) -> Option<(Point, RadialDensity)> {
        let c = self.radial_center()?;
        let parts: Vec<&RadialDensity> = self.radial.iter().map(|p| p.density.as_ref()).collect();
        Some((c, RadialDensity::sum(&parts)))
    }

    pub fn has_atom_in_ball(&self, c: &Point, rho: f64) -> bool {
        self.atoms.iter().any(|a| a.mass > 0.0 && c.dist(&a.location) < rho)
    }

    pub fn has_atom_at(&self, x: &Point) -> bool {
        self.atoms.iter().any(|a| a.mass > 0.0 && x.dist(&a.location) == 0.0)
    }

    pub fn translated(&self, v: &Point) -> Measure {
        let spec = self.spec.as_ref().map(|cs| {
            cs.iter()
                .map(|c| match c.clone() {
                    Component::RadialPowerBump { center, radius, gamma, amplitude } => {
                        Component::RadialPowerBump { center: center.add(v), radius, gamma, amplitude }
                    }
                    Component::Atom { location, mass } => Component::Atom { location: location.add(v), mass },
                    Component::RadialProfile { center, nodes, densities, tail_exponent, head_exponent } => {
                        Component::RadialProfile { center: center.add(v), nodes, densities, tail_exponent, head_exponent }
                    }
                })
                .collect()
        });
        let radial = self
            .radial
            .iter()
            .map(|p| RadialPart { center: p.center.add(v), density: p.density.clone(), bump: p.bump })
            .collect();
        let atoms = self.atoms.iter().map(|a| AtomPart { location: a.location.add(v), mass: a.mass }).collect();
        Measure { dim: self.dim, spec, radial, atoms, breaks: BreakCache::default() }
    }

    /// Copy with every mass multiplied by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Measure {
        let spec = self.spec.as_ref().map(|cs| {
            cs.iter()
                .map(|comp| match comp.clone() {
                    Component::RadialPowerBump { center, radius, gamma, amplitude } => {
                        Component::RadialPowerBump { center, radius, gamma, amplitude: amplitude * c }
                    }
                    Component::Atom { location, mass } => Component::Atom { location, mass: mass * c },
                    Component::RadialProfile { center, nodes, densities, tail_exponent, head_exponent } => Component::RadialProfile {
                        center,
                        nodes,
                        densities: densities.iter().map(|d| d * c).collect(),
                        tail_exponent,
                        head_exponent,
                    },
                })
                .collect()
        });
        let radial = self
            .radial
            .iter()
            .map(|p| RadialPart {
                center: p.center.clone(),
                density: Arc::new(p.density.scaled(c)),
                bump: p.bump.map(|b| BumpShape { amplitude: b.amplitude * c, ..b }),
            })
            .collect();
        let atoms = self.atoms.iter().map(|a| AtomPart { location: a.location.clone(), mass: a.mass * c }).collect();
        Measure { dim: self.dim, spec, radial, atoms, breaks: BreakCache::default() }
    }

    /// Sum of two measures on the same space.
    pub fn plus(&self, other: &Measure) -> Measure {
        let spec = match (&self.spec, &other.spec) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).cloned().collect()),
            _ => None,
        };
        let radial = self.radial.iter().chain(&other.radial).cloned().collect();
        let atoms = self.atoms.iter().chain(&other.atoms).cloned().collect();
        Measure { dim: self.dim, spec, radial, atoms, breaks: BreakCache::default() }
    }

    /// SHA-256 of the canonical serialized form, or of the assembled parts.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.dim.to_le_bytes());
        match &self.spec {
            Some(cs) => h.update(serde_json::to_vec(cs).unwrap_or_default()),
            None => {
                for p in &self.radial {
                    h.update(format!("{:?}{:?}", p.center, p.density.segments()).as_bytes());
                    for b in p.density.breaks() {
                        h.update(b.to_le_bytes());
                    }
                }
                for a in &self.atoms {
                    h.update(format!("{:?}{}", a.location, a.mass).as_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    /// Shortest positive length scale of the measure as seen from `x`.
    pub fn local_scale(&self, x: &Point) -> f64 {
        let mut s = f64::INFINITY;
        for b in self.fine_breakpoints(x) {
            s = s.min(b);
        }
        for part in &self.radial {
            if let Some(b) = part.density.breaks().first() {
                s = s.min(*b);
            }
        }
        if s.is_finite() {
            s
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(c: Vec<f64>, r: f64, g: f64, a: f64) -> Component {
        Component::RadialPowerBump { center: Point(c), radius: r, gamma: g, amplitude: a }
    }

    #[test]
    fn breakpoints_reference() {
        let m = Measure::new(3, vec![bump(vec![0.0, 0.0, 0.0], 1.0, 0.0, 1.0)]).unwrap();
        assert_eq!(*m.breakpoints(&Point(vec![0.0, 0.0, 0.0])), vec![1.0]);
        assert_eq!(*m.breakpoints(&Point(vec![3.0, 0.0, 0.0])), vec![2.0, 4.0]);
    }

    #[test]
    fn ball_mass_reference() {
        let m = Measure::new(3, vec![bump(vec![0.0, 0.0, 0.0], 1.0, 0.0, 1.0)]).unwrap();
        let v = m.ball_mass(&Point(vec![0.0, 0.0, 0.0]), 0.5);
        assert!((v - std::f64::consts::PI / 6.0).abs() < 1e-14);
        let tm = m.total_mass().finite().unwrap();
        assert!((tm - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn open_ball_excludes_boundary_atoms() {
        let m = Measure::new(2, vec![Component::Atom { location: Point(vec![1.0, 0.0]), mass: 2.0 }]).unwrap();
        assert_eq!(m.ball_mass(&Point(vec![0.0, 0.0]), 1.0), 0.0);
        assert_eq!(m.ball_mass(&Point(vec![0.0, 0.0]), 1.0 + 1e-12), 2.0);
    }

    #[test]
    fn json_round_trip_and_hash() {
        let js = r#"{"dim":3,"components":[{"kind":"RadialPowerBump","center":[0,0,0],"radius":1,"gamma":0.5,"amplitude":2},
                     {"kind":"Atom","location":[2,0,0],"mass":1}]}"#;
        let spec: MeasureSpec = serde_json::from_str(js).unwrap();
        let m = Measure::from_spec(spec.clone()).unwrap();
        let back: MeasureSpec = serde_json::from_str(&serde_json::to_string(&m.spec().unwrap()).unwrap()).unwrap();
        assert_eq!(back, spec);
        assert_eq!(m.content_hash(), Measure::from_spec(back).unwrap().content_hash());
        assert!(serde_json::from_str::<MeasureSpec>(r#"{"dim":3,"components":[{"kind":"Atom","location":[0,0,0],"mass":1,"extra":0}]}"#).is_err());
    }

    #[test]
    fn rejects_bad_components() {
        assert!(Measure::new(3, vec![bump(vec![0.0, 0.0], 1.0, 0.0, 1.0)]).is_err());
        assert!(Measure::new(3, vec![bump(vec![0.0; 3], 1.0, 3.0, 1.0)]).is_err());
        assert!(Measure::new(3, vec![Component::Atom { location: Point(vec![0.0; 3]), mass: -1.0 }]).is_err());
    }
}
