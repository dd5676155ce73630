//! Thin-dipole mutual impedance for a planar RIS and a near-field transmitter.
//!
//! All dipoles are parallel to the y axis with sinusoidal current
//! distributions. The mutual impedance between two dipoles is the double
//! line integral of `(k² + ∂²/∂y²) e^{-ikR}/R` weighted by both current
//! profiles.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::{CMat, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Free-space wave impedance used by the model.
pub const ETA0: f64 = 377.0;
pub const DEFAULT_FREQUENCY: f64 = 28e9;

/// Dipole array geometry. Positions are dipole centers in the x–y plane.
#[derive(Debug, Clone)]
pub struct DipoleGeometry {
    pub wavelength: f64,
    pub length: f64,
    pub positions: Vec<(f64, f64)>,
    pub spacing: f64,
}

impl DipoleGeometry {
    pub fn new(wavelength: f64, length: f64, positions: Vec<(f64, f64)>, spacing: f64) -> Result<Self> {
        if !(wavelength > 0.0) || !(length > 0.0) {
            return Err(Error::InvalidParameter("wavelength and dipole length must be positive".into()));
        }
        for (a, p) in positions.iter().enumerate() {
            for q in &positions[a + 1..] {
                if (p.0 - q.0).abs() < 1e-15 && (p.1 - q.1).abs() < 1e-15 {
                    return Err(Error::InvalidParameter(format!("duplicate dipole position {p:?}")));
                }
            }
        }
        Ok(Self {
            wavelength,
            length,
            positions,
            spacing,
        })
    }

    /// Uniform planar array with `nx × ny` elements, element `n = j·nx + i`
    /// at `(i·d, j·d)`, quarter-wave dipoles.
    pub fn upa(nx: usize, ny: usize, spacing: f64, frequency: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || !(spacing > 0.0) || !(frequency > 0.0) {
            return Err(Error::InvalidParameter("invalid UPA dimensions".into()));
        }
        let wavelength = SPEED_OF_LIGHT / frequency;
        let positions = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i as f64 * spacing, j as f64 * spacing)))
            .collect();
        Self::new(wavelength, wavelength / 4.0, positions, spacing)
    }

    /// Square UPA with `n` elements (`n` must be a perfect square) and spacing
    /// given in wavelengths.
    pub fn square_upa(n: usize, spacing_wavelengths: f64, frequency: f64) -> Result<Self> {
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n {
            return Err(Error::InvalidParameter(format!("{n} elements do not form a square array")));
        }
        let wavelength = SPEED_OF_LIGHT / frequency;
        Self::upa(side, side, spacing_wavelengths * wavelength, frequency)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadratureRule {
    /// One tensor Gauss–Legendre rule per half-dipole panel.
    Fixed,
    /// Recursive panel subdivision (`factor` sub-panels per axis) until the
    /// refined estimate changes by less than the tolerance.
    Adaptive { factor: usize, max_depth: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rule: QuadratureRule,
    pub points: usize,
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rule: QuadratureRule::Adaptive {
                factor: 2,
                max_depth: 40,
            },
            points: 32,
            rel_tol: 1e-8,
        }
    }
}

impl QuadratureSpec {
    pub fn fixed(points: usize) -> Self {
        Self {
            rule: QuadratureRule::Fixed,
            points,
            rel_tol: 1e-8,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.points < 4 || !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("quadrature needs ≥ 4 points and a positive tolerance".into()));
        }
        if let QuadratureRule::Adaptive { factor, .. } = self.rule {
            if factor < 2 {
                return Err(Error::InvalidParameter("refinement factor must be ≥ 2".into()));
            }
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
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

/// Integrand evaluator for one dipole pair.
struct PairKernel {
    k: f64,
    half: f64,
    dx2: f64,
    y_p: f64,
    y_q: f64,
    scale: C64,
}

impl PairKernel {
    fn new(k: f64, length: f64, dx: f64, dz: f64, y_p: f64, y_q: f64) -> Self {
        let s = (k * length / 2.0).sin();
        Self {
            k,
            half: length / 2.0,
            dx2: dx * dx + dz * dz,
            y_p,
            y_q,
            scale: C64::new(0.0, ETA0 / (4.0 * PI * k)) / (s * s),
        }
    }

    /// Integrand at `(y', y'')`, without the constant prefactor.
    fn eval(&self, y1: f64, y2: f64) -> C64 {
        let k = self.k;
        let dy = y2 - y1;
        let d2 = self.dx2 + dy * dy;
        let d = d2.sqrt();
        let g = C64::new((dy * dy / d2) * (3.0 / d2 - k * k) - 1.0 / d2 + k * k, (dy * dy / d2) * 3.0 * k / d - k / d);
        let green = C64::from_polar(1.0 / d, -k * d);
        let current = (k * (self.half - (y1 - self.y_p).abs())).sin() * (k * (self.half - (y2 - self.y_q).abs())).sin();
        g * green * current
    }
}

struct Panel {
    a1: f64,
    b1: f64,
    a2: f64,
    b2: f64,
}

fn tensor_rule(kern: &PairKernel, p: &Panel, x: &[f64], w: &[f64]) -> C64 {
    let (h1, m1) = ((p.b1 - p.a1) / 2.0, (p.b1 + p.a1) / 2.0);
    let (h2, m2) = ((p.b2 - p.a2) / 2.0, (p.b2 + p.a2) / 2.0);
    let mut acc = C64::new(0.0, 0.0);
    for (xi, wi) in x.iter().zip(w) {
        let y1 = m1 + h1 * xi;
        let mut row = C64::new(0.0, 0.0);
        for (xj, wj) in x.iter().zip(w) {
            row += kern.eval(y1, m2 + h2 * xj) * *wj;
        }
        acc += row * *wi;
    }
    acc * (h1 * h2)
}

fn subdivide(p: &Panel, factor: usize) -> Vec<Panel> {
    let (s1, s2) = ((p.b1 - p.a1) / factor as f64, (p.b2 - p.a2) / factor as f64);
    let mut out = Vec::with_capacity(factor * factor);
    for i in 0..factor {
        for j in 0..factor {
            out.push(Panel {
                a1: p.a1 + i as f64 * s1,
                b1: p.a1 + (i + 1) as f64 * s1,
                a2: p.a2 + j as f64 * s2,
                b2: p.a2 + (j + 1) as f64 * s2,
            });
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    kern: &PairKernel,
    p: &Panel,
    coarse: C64,
    x: &[f64],
    w: &[f64],
    factor: usize,
    tol: f64,
    depth: usize,
) -> std::result::Result<C64, f64> {
    let kids = subdivide(p, factor);
    let ests: Vec<C64> = kids.iter().map(|c| tensor_rule(kern, c, x, w)).collect();
    let fine: C64 = ests.iter().sum();
    let change = (fine - coarse).norm();
    if change <= tol {
        return Ok(fine);
    }
    if depth == 0 {
        return Err(change);
    }
    let mut total = C64::new(0.0, 0.0);
    for (c, e) in kids.iter().zip(ests) {
        total += adaptive(kern, c, e, x, w, factor, tol, depth - 1)?;
    }
    Ok(total)
}

/// Integral over both dipoles with the axes split at the dipole centers.
fn pair_integral(kern: &PairKernel, length: f64, quad: &QuadratureSpec) -> Result<C64> {
    let half = length / 2.0;
    let (x, w) = gauss_legendre(quad.points);
    let mut panels = Vec::with_capacity(4);
    for (a1, b1) in [(kern.y_p - half, kern.y_p), (kern.y_p, kern.y_p + half)] {
        for (a2, b2) in [(kern.y_q - half, kern.y_q), (kern.y_q, kern.y_q + half)] {
            panels.push(Panel { a1, b1, a2, b2 });
        }
    }
    let coarse: Vec<C64> = panels.iter().map(|p| tensor_rule(kern, p, &x, &w)).collect();
    let total: C64 = coarse.iter().sum();
    match quad.rule {
        QuadratureRule::Fixed => Ok(total * kern.scale),
        QuadratureRule::Adaptive { factor, max_depth } => {
            let tol = quad.rel_tol * total.norm().max(f64::MIN_POSITIVE) / panels.len() as f64;
            let mut acc = C64::new(0.0, 0.0);
            for (p, c) in panels.iter().zip(coarse) {
                acc += adaptive(kern, p, c, &x, &w, factor, tol, max_depth).map_err(|change| {
                    Error::QuadratureNonConvergence {
                        tol: quad.rel_tol,
                        change: change / total.norm(),
                    }
                })?;
            }
            Ok(acc * kern.scale)
        }
    }
}

/// Mutual impedance between y-parallel dipoles at `(x_p, y_p, 0)` and
/// `(x_q, y_q, dz)`, both of the geometry's length.
pub fn mutual_impedance_at(
    geom: &DipoleGeometry,
    p: (f64, f64),
    q: (f64, f64),
    dz: f64,
    quad: &QuadratureSpec,
) -> Result<C64> {
    quad.validate()?;
    let kern = PairKernel::new(geom.wavenumber(), geom.length, q.0 - p.0, dz, p.1, q.1);
    pair_integral(&kern, geom.length, quad)
}

/// Mutual impedance `[Z_II]_{q,p}` between two distinct array elements.
pub fn dipole_mutual_impedance(p: usize, q: usize, geom: &DipoleGeometry, quad: &QuadratureSpec) -> Result<C64> {
    if p == q || p >= geom.len() || q >= geom.len() {
        return Err(Error::InvalidParameter(format!("invalid dipole pair ({p}, {q})")));
    }
    mutual_impedance_at(geom, geom.positions[p], geom.positions[q], 0.0, quad)
}

/// Coupling depends only on |Δx| and |Δy|; quantize offsets so that all
/// pairs of a regular grid sharing an offset are integrated once.
fn offset_key(geom: &DipoleGeometry, p: usize, q: usize) -> (i64, i64) {
    let (a, b) = (geom.positions[p], geom.positions[q]);
    let unit = geom.wavelength * 1e-9;
    (((b.0 - a.0).abs() / unit).round() as i64, ((b.1 - a.1).abs() / unit).round() as i64)
}

/// RIS impedance matrix: diagonal `z0`, off-diagonal entries from the dipole
/// kernel. Symmetric by construction.
pub fn build_ris_impedance(geom: &DipoleGeometry, z0: f64, quad: &QuadratureSpec) -> Result<CMat> {
    quad.validate()?;
    let n = geom.len();
    let mut reps: HashMap<(i64, i64), (usize, usize)> = HashMap::new();
    for p in 0..n {
        for q in p + 1..n {
            reps.entry(offset_key(geom, p, q)).or_insert((p, q));
        }
    }
    let mut keys: Vec<_> = reps.into_iter().collect();
    keys.sort();
    let values: Vec<((i64, i64), C64)> = keys
        .par_iter()
        .map(|(key, (p, q))| dipole_mutual_impedance(*p, *q, geom, quad).map(|v| (*key, v)))
        .collect::<Result<_>>()?;
    let table: HashMap<_, _> = values.into_iter().collect();
    let mut z = CMat::identity(n, n) * C64::new(z0, 0.0);
    for p in 0..n {
        for q in p + 1..n {
            let v = table[&offset_key(geom, p, q)];
            z[(p, q)] = v;
            z[(q, p)] = v;
        }
    }
    Ok(z)
}

/// Transmitter-to-RIS impedance for `n_t` dipoles hovering above the array.
/// Transmit dipole `k` is centered at `((k+1)·d, 0, r·λ)`.
pub fn near_field_transmitter_link(
    geom: &DipoleGeometry,
    r: f64,
    d: f64,
    n_t: usize,
    quad: &QuadratureSpec,
) -> Result<CMat> {
    if !(r > 0.0) || n_t == 0 {
        return Err(Error::InvalidParameter("near-field link needs r > 0 and n_t ≥ 1".into()));
    }
    quad.validate()?;
    let n = geom.len();
    let dz = r * geom.wavelength;
    let entries: Vec<C64> = (0..n * n_t)
        .into_par_iter()
        .map(|idx| {
            let (i, k) = (idx % n, idx / n);
            let tx = ((k + 1) as f64 * d, 0.0);
            mutual_impedance_at(geom, geom.positions[i], tx, dz, quad)
        })
        .collect::<Result<_>>()?;
    Ok(CMat::from_fn(n, n_t, |i, k| entries[k * n + i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_geom(dx: f64, dy: f64) -> DipoleGeometry {
        let lam = SPEED_OF_LIGHT / DEFAULT_FREQUENCY;
        DipoleGeometry::new(lam, lam / 4.0, vec![(0.0, 0.0), (dx * lam, dy * lam)], dx * lam).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // degree 14 is exact with 8 points
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((i - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn integrand_matches_green_function_derivative() {
        // (k² + ∂²/∂y²) e^{-ikR}/R by central differences
        let lam = SPEED_OF_LIGHT / DEFAULT_FREQUENCY;
        let k = 2.0 * PI / lam;
        let kern = PairKernel::new(k, lam / 4.0, 0.3 * lam, 0.1 * lam, 0.0, 0.2 * lam);
        let green = |dy: f64| {
            let r = (kern.dx2 + dy * dy).sqrt();
            C64::from_polar(1.0 / r, -k * r)
        };
        for (y1, y2) in [(0.01 * lam, 0.15 * lam), (-0.05 * lam, 0.3 * lam)] {
            let dy = y2 - y1;
            let h = 1e-4 * lam;
            let d2 = (green(dy + h) - green(dy) * 2.0 + green(dy - h)) / (h * h);
            let expect = green(dy) * (k * k) + d2;
            let current = (k * (kern.half - (y1 - kern.y_p).abs())).sin() * (k * (kern.half - (y2 - kern.y_q).abs())).sin();
            let got = kern.eval(y1, y2) / current;
            assert!((got - expect).norm() < 1e-6 * expect.norm(), "{got} vs {expect}");
        }
    }

    #[test]
    fn mutual_impedance_symmetric() {
        let g = pair_geom(0.5, 0.25);
        let q = QuadratureSpec::default();
        let a = dipole_mutual_impedance(0, 1, &g, &q).unwrap();
        let b = dipole_mutual_impedance(1, 0, &g, &q).unwrap();
        assert!((a - b).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn fixed_rule_refinement_stable() {
        let g = pair_geom(0.5, 0.0);
        let a = dipole_mutual_impedance(0, 1, &g, &QuadratureSpec::fixed(32)).unwrap();
        let b = dipole_mutual_impedance(0, 1, &g, &QuadratureSpec::fixed(64)).unwrap();
        assert!((a - b).norm() < 1e-6 * b.norm());
    }

    #[test]
    fn coupling_decays_with_distance() {
        let q = QuadratureSpec::default();
        let near = dipole_mutual_impedance(0, 1, &pair_geom(0.25, 0.0), &q).unwrap();
        let far = dipole_mutual_impedance(0, 1, &pair_geom(4.0, 0.0), &q).unwrap();
        assert!(far.norm() < near.norm());
    }

    #[test]
    fn coupling_non_increasing_along_axis() {
        let q = QuadratureSpec::default();
        for axis in [(1.0, 0.0), (0.0, 1.0)] {
            let mut prev = f64::INFINITY;
            for i in 0..8 {
                let s = 0.25 + 0.125 * i as f64;
                let v = dipole_mutual_impedance(0, 1, &pair_geom(s * axis.0, s * axis.1), &q)
                    .unwrap()
                    .norm();
                assert!(v <= prev * (1.0 + 1e-9), "axis {axis:?} spacing {s}: {v} > {prev}");
                prev = v;
            }
        }
    }

    #[test]
    fn touching_collinear_dipoles_converge() {
        // end-to-end neighbours at d = ℓ = λ/4
        let g = pair_geom(0.0, 0.25);
        let coarse = QuadratureSpec {
            rel_tol: 1e-6,
            ..QuadratureSpec::default()
        };
        let fine = QuadratureSpec {
            rel_tol: 5e-7,
            ..QuadratureSpec::default()
        };
        let a = dipole_mutual_impedance(0, 1, &g, &coarse).unwrap();
        let b = dipole_mutual_impedance(0, 1, &g, &fine).unwrap();
        assert!(a.is_finite());
        assert!((a - b).norm() <= 1e-6 * b.norm() * 4.0);
    }

    #[test]
    fn tolerance_halving_is_consistent() {
        let geom = DipoleGeometry::square_upa(4, 0.25, DEFAULT_FREQUENCY).unwrap();
        let q1 = QuadratureSpec {
            rel_tol: 1e-7,
            ..QuadratureSpec::default()
        };
        let q2 = QuadratureSpec {
            rel_tol: 5e-8,
            ..QuadratureSpec::default()
        };
        let a = build_ris_impedance(&geom, 50.0, &q1).unwrap();
        let b = build_ris_impedance(&geom, 50.0, &q2).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() <= 1e-7 * y.norm().max(1.0) * 4.0);
        }
    }

    #[test]
    fn single_element_array() {
        let g = DipoleGeometry::square_upa(1, 0.5, DEFAULT_FREQUENCY).unwrap();
        let z = build_ris_impedance(&g, 50.0, &QuadratureSpec::default()).unwrap();
        assert_eq!(z.shape(), (1, 1));
        assert_eq!(z[(0, 0)], C64::new(50.0, 0.0));
    }

    #[test]
    fn upa_structure_and_neighbour_symmetry() {
        let g = DipoleGeometry::square_upa(4, 0.5, DEFAULT_FREQUENCY).unwrap();
        let z = build_ris_impedance(&g, 50.0, &QuadratureSpec::default()).unwrap();
        for i in 0..4 {
            assert_eq!(z[(i, i)], C64::new(50.0, 0.0));
        }
        assert!(crate::linalg::asymmetry(&z) == 0.0);
        // in the 2x2 square the x-neighbours (0,1), (2,3) and the
        // y-neighbours (0,2), (1,3) are pairwise equal
        assert!((z[(0, 1)] - z[(2, 3)]).norm() < 1e-10);
        assert!((z[(0, 2)] - z[(1, 3)]).norm() < 1e-10);
        // cross-check against direct evaluation, bypassing the offset cache
        let direct = dipole_mutual_impedance(2, 3, &g, &QuadratureSpec::default()).unwrap();
        assert!((z[(2, 3)] - direct).norm() < 1e-10);
    }

    #[test]
    fn closer_spacing_couples_more() {
        let q = QuadratureSpec::default();
        let a = build_ris_impedance(&DipoleGeometry::square_upa(4, 0.25, DEFAULT_FREQUENCY).unwrap(), 50.0, &q).unwrap();
        let b = build_ris_impedance(&DipoleGeometry::square_upa(4, 0.5, DEFAULT_FREQUENCY).unwrap(), 50.0, &q).unwrap();
        for p in 0..4 {
            for r in 0..4 {
                if p != r {
                    assert!(a[(p, r)].norm() > b[(p, r)].norm(), "({p},{r})");
                }
            }
        }
    }

    #[test]
    fn near_field_link_shape_decay_and_mirror() {
        let g = DipoleGeometry::upa(3, 1, SPEED_OF_LIGHT / DEFAULT_FREQUENCY / 2.0, DEFAULT_FREQUENCY).unwrap();
        let q = QuadratureSpec::default();
        let z1 = near_field_transmitter_link(&g, 0.1, g.spacing, 1, &q).unwrap();
        let z2 = near_field_transmitter_link(&g, 0.2, g.spacing, 1, &q).unwrap();
        assert_eq!(z1.shape(), (3, 1));
        for i in 0..3 {
            assert!(z2[(i, 0)].norm() < z1[(i, 0)].norm());
        }
        // elements at x = 0 and x = 2d mirror about the transmitter at x = d
        assert!((z1[(0, 0)].norm() - z1[(2, 0)].norm()).abs() < 1e-10 * z1[(0, 0)].norm());
    }

    #[test]
    fn invalid_inputs_rejected() {
        let g = pair_geom(0.5, 0.0);
        assert!(dipole_mutual_impedance(0, 0, &g, &QuadratureSpec::default()).is_err());
        assert!(dipole_mutual_impedance(0, 1, &g, &QuadratureSpec::fixed(2)).is_err());
        assert!(DipoleGeometry::square_upa(5, 0.5, DEFAULT_FREQUENCY).is_err());
        assert!(near_field_transmitter_link(&g, 0.0, 0.1, 1, &QuadratureSpec::default()).is_err());
    }
}
