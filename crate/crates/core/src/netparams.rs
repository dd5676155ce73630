//! Multiport network parameters of the transmitter / RIS / receiver system.
//!
//! Ports are ordered `[T, I, R]`. The impedance matrix `Z` relates port
//! voltages and currents, `Y = Z⁻¹`, and the scattering matrix is taken at a
//! scalar reference impedance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, DEFAULT_COND_CAP};
use crate::{CMat, CVec, C64};

/// Free-space reference impedance used by the default scenarios.
pub const Z0_DEFAULT: f64 = 50.0;

/// Port group of the `[T, I, R]` partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    T,
    I,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PortLayout {
    pub n_t: usize,
    pub n_i: usize,
    pub n_r: usize,
}

impl PortLayout {
    pub fn new(n_t: usize, n_i: usize, n_r: usize) -> Result<Self> {
        if n_t == 0 || n_i == 0 || n_r == 0 {
            return Err(Error::InvalidParameter(format!(
                "port counts must be positive (got {n_t}, {n_i}, {n_r})"
            )));
        }
        Ok(Self { n_t, n_i, n_r })
    }

    pub fn total(&self) -> usize {
        self.n_t + self.n_i + self.n_r
    }

    /// Half-open index range of a group.
    pub fn range(&self, g: Group) -> std::ops::Range<usize> {
        match g {
            Group::T => 0..self.n_t,
            Group::I => self.n_t..self.n_t + self.n_i,
            Group::R => self.n_t + self.n_i..self.total(),
        }
    }

    pub fn size(&self, g: Group) -> usize {
        self.range(g).len()
    }
}

/// Submatrix of `m` selected by the layout partition.
pub fn block_of(m: &CMat, layout: &PortLayout, row: Group, col: Group) -> CMat {
    let r = layout.range(row);
    let c = layout.range(col);
    m.view((r.start, c.start), (r.len(), c.len())).into_owned()
}

/// Impedance matrix of the full `N`-port network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    pub layout: PortLayout,
    pub z: CMat,
}

impl NetworkParameters {
    pub fn new(layout: PortLayout, z: CMat) -> Result<Self> {
        let n = layout.total();
        if z.nrows() != n || z.ncols() != n {
            return Err(Error::Dimension {
                context: "NetworkParameters::new".into(),
                detail: format!("expected {n}x{n}, got {}x{}", z.nrows(), z.ncols()),
            });
        }
        Ok(Self { layout, z })
    }

    /// Assemble a reciprocal network from its lower blocks; the upper
    /// blocks are filled with transposes.
    pub fn from_lower_blocks(
        z_tt: &CMat,
        z_it: &CMat,
        z_ii: &CMat,
        z_rt: &CMat,
        z_ri: &CMat,
        z_rr: &CMat,
    ) -> Result<Self> {
        let layout = PortLayout::new(z_tt.nrows(), z_ii.nrows(), z_rr.nrows())?;
        let mut z = CMat::zeros(layout.total(), layout.total());
        let mut put = |row: Group, col: Group, m: &CMat| -> Result<()> {
            let (r, c) = (layout.range(row), layout.range(col));
            if m.nrows() != r.len() || m.ncols() != c.len() {
                return Err(Error::Dimension {
                    context: format!("block {row:?}{col:?}"),
                    detail: format!(
                        "expected {}x{}, got {}x{}",
                        r.len(),
                        c.len(),
                        m.nrows(),
                        m.ncols()
                    ),
                });
            }
            z.view_mut((r.start, c.start), (r.len(), c.len())).copy_from(m);
            Ok(())
        };
        put(Group::T, Group::T, z_tt)?;
        put(Group::I, Group::I, z_ii)?;
        put(Group::R, Group::R, z_rr)?;
        put(Group::I, Group::T, z_it)?;
        put(Group::T, Group::I, &z_it.transpose())?;
        put(Group::R, Group::T, z_rt)?;
        put(Group::T, Group::R, &z_rt.transpose())?;
        put(Group::R, Group::I, z_ri)?;
        put(Group::I, Group::R, &z_ri.transpose())?;
        Self::new(layout, z)
    }

    pub fn block(&self, row: Group, col: Group) -> CMat {
        block_of(&self.z, &self.layout, row, col)
    }

    pub fn set_block(&mut self, row: Group, col: Group, m: &CMat) {
        let (r, c) = (self.layout.range(row), self.layout.range(col));
        self.z.view_mut((r.start, c.start), (r.len(), c.len())).copy_from(m);
    }

    pub fn admittance(&self) -> Result<CMat> {
        z_to_y(&self.z, DEFAULT_COND_CAP)
    }

    /// Frobenius deviation from reciprocity (`‖Z − Zᵀ‖_F`).
    pub fn asymmetry(&self) -> f64 {
        linalg::asymmetry(&self.z)
    }

    pub fn is_reciprocal(&self, tol: f64) -> bool {
        self.asymmetry() <= tol * self.z.norm().max(1.0)
    }

    /// Smallest eigenvalue of `Re(Z⁻¹)`; positive for a physically valid
    /// lossy reciprocal network.
    pub fn min_eig_re_admittance(&self) -> Result<f64> {
        Ok(linalg::min_eigenvalue(&linalg::re(&self.admittance()?)))
    }
}

/// Source/load terminations and the reference impedance.
#[derive(Debug, Clone, PartialEq)]
pub struct Terminations {
    /// Diagonal of `Z_T` (source impedances).
    pub z_t: CVec,
    /// Diagonal of `Z_R` (load impedances).
    pub z_r: CVec,
    pub z0: f64,
}

impl Terminations {
    pub fn new(z_t: CVec, z_r: CVec, z0: f64) -> Result<Self> {
        if !(z0 > 0.0) {
            return Err(Error::InvalidParameter(format!("z0 must be positive, got {z0}")));
        }
        if z_t.iter().chain(z_r.iter()).any(|z| z.norm() == 0.0) {
            return Err(Error::InvalidParameter("terminations must be nonzero".into()));
        }
        Ok(Self { z_t, z_r, z0 })
    }

    /// All sources and loads equal to the reference impedance.
    pub fn matched(layout: &PortLayout, z0: f64) -> Self {
        Self {
            z_t: CVec::from_element(layout.n_t, C64::new(z0, 0.0)),
            z_r: CVec::from_element(layout.n_r, C64::new(z0, 0.0)),
            z0,
        }
    }

    pub fn y0(&self) -> f64 {
        1.0 / self.z0
    }

    pub fn z_t_mat(&self) -> CMat {
        CMat::from_diagonal(&self.z_t)
    }

    pub fn z_r_mat(&self) -> CMat {
        CMat::from_diagonal(&self.z_r)
    }

    pub fn y_t_mat(&self) -> CMat {
        CMat::from_diagonal(&self.z_t.map(|z| z.inv()))
    }

    pub fn y_r_mat(&self) -> CMat {
        CMat::from_diagonal(&self.z_r.map(|z| z.inv()))
    }
}

/// `Y = Z⁻¹`, refusing matrices with condition estimate above `cond_cap`.
pub fn z_to_y(z: &CMat, cond_cap: f64) -> Result<CMat> {
    linalg::inverse_checked(z, cond_cap, "z_to_y")
}

/// `Z = Y⁻¹`; the same operation as [`z_to_y`].
pub fn y_to_z(y: &CMat, cond_cap: f64) -> Result<CMat> {
    linalg::inverse_checked(y, cond_cap, "y_to_z")
}

/// `S = (Z + Z0 I)⁻¹ (Z − Z0 I)`.
pub fn z_to_s(z: &CMat, z0: f64) -> Result<CMat> {
    let n = z.nrows();
    let shift = CMat::identity(n, n) * C64::new(z0, 0.0);
    linalg::solve(&(z + &shift), &(z - &shift), "z_to_s")
}

/// Path gains and retry budget for the Rayleigh far-field scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayleighSpec {
    /// Total variance of each `Z_IT` entry (Ω²).
    pub pathgain_it: f64,
    /// Total variance of each `Z_RI` entry (Ω²).
    pub pathgain_ri: f64,
    pub z0: f64,
    pub max_attempts: usize,
}

impl RayleighSpec {
    /// `ρ_IT = 4 Z0² 10⁻⁸`, `ρ_RI = 4 Z0² 10⁻⁴`.
    pub fn far_field_defaults(z0: f64) -> Self {
        Self {
            pathgain_it: 4.0 * z0 * z0 * 1e-8,
            pathgain_ri: 4.0 * z0 * z0 * 1e-4,
            z0,
            max_attempts: 100,
        }
    }
}

/// Draw a far-field Rayleigh scenario with a blocked direct link.
///
/// `Z_TT = Z_RR = Z0 I`, `Z_RT = 0`, `Z_II = z_ii`, and the RIS links are
/// i.i.d. circularly-symmetric Gaussian. Draws whose `Re(Y_RR + Y_R)` or
/// reduced RIS admittance real part is not PD are rejected.
pub fn generate_rayleigh_scenario(
    layout: PortLayout,
    spec: &RayleighSpec,
    z_ii: &CMat,
    seed: u64,
) -> Result<NetworkParameters> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_rayleigh_scenario_with(layout, spec, z_ii, None, &mut rng)
}

/// Same as [`generate_rayleigh_scenario`] with a caller-provided RNG and an
/// optional fixed `Z_IT` (near-field transmitter placement).
pub fn generate_rayleigh_scenario_with<R: Rng + ?Sized>(
    layout: PortLayout,
    spec: &RayleighSpec,
    z_ii: &CMat,
    fixed_z_it: Option<&CMat>,
    rng: &mut R,
) -> Result<NetworkParameters> {
    if !(spec.pathgain_it > 0.0 && spec.pathgain_ri > 0.0) {
        return Err(Error::InvalidParameter("path gains must be positive".into()));
    }
    if z_ii.nrows() != layout.n_i || z_ii.ncols() != layout.n_i {
        return Err(Error::Dimension {
            context: "generate_rayleigh_scenario".into(),
            detail: format!("z_ii must be {0}x{0}", layout.n_i),
        });
    }
    if linalg::asymmetry(z_ii) > 1e-12 * z_ii.norm().max(1.0) {
        return Err(Error::NotSymmetric {
            deviation: linalg::asymmetry(z_ii),
        });
    }
    let z0 = C64::new(spec.z0, 0.0);
    let term = Terminations::matched(&layout, spec.z0);
    for _ in 0..spec.max_attempts.max(1) {
        let z_it = match fixed_z_it {
            Some(m) => m.clone(),
            None => linalg::complex_gaussian(rng, layout.n_i, layout.n_t, spec.pathgain_it),
        };
        let z_ri = linalg::complex_gaussian(rng, layout.n_r, layout.n_i, spec.pathgain_ri);
        let params = NetworkParameters::from_lower_blocks(
            &(CMat::identity(layout.n_t, layout.n_t) * z0),
            &z_it,
            z_ii,
            &CMat::zeros(layout.n_r, layout.n_t),
            &z_ri,
            &(CMat::identity(layout.n_r, layout.n_r) * z0),
        )?;
        if scenario_is_physical(&params, &term) {
            return Ok(params);
        }
    }
    Err(Error::ResampleBudget {
        attempts: spec.max_attempts,
    })
}

fn scenario_is_physical(params: &NetworkParameters, term: &Terminations) -> bool {
    let Ok(y) = params.admittance() else {
        return false;
    };
    let l = &params.layout;
    let m = block_of(&y, l, Group::R, Group::R) + term.y_r_mat();
    if linalg::min_eigenvalue(&linalg::re(&m)) <= 0.0 {
        return false;
    }
    match crate::channels::reduced_ris_admittance(&y, l, term) {
        Ok(ybar) => linalg::min_eigenvalue(&linalg::re(&ybar)) > 0.0,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn eye(n: usize, s: f64) -> CMat {
        CMat::identity(n, n) * c(s, 0.0)
    }

    #[test]
    fn y_of_fifty_ohm_identity() {
        let y = z_to_y(&eye(2, 50.0), DEFAULT_COND_CAP).unwrap();
        assert!((y - eye(2, 0.02)).norm() < 1e-15);
        let y1 = z_to_y(&eye(3, 1.0), DEFAULT_COND_CAP).unwrap();
        assert!((y1 - eye(3, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn s_of_matched_and_mismatched() {
        assert!(z_to_s(&eye(3, 50.0), 50.0).unwrap().norm() < 1e-15);
        let s = z_to_s(&eye(2, 150.0), 50.0).unwrap();
        assert!((s - eye(2, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn s_factors_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = linalg::complex_gaussian(&mut rng, 5, 5, 100.0);
        let z = &a + a.transpose() + eye(5, 60.0);
        let shift = eye(5, 50.0);
        let left = z_to_s(&z, 50.0).unwrap();
        let right = (&z - &shift) * (&z + &shift).try_inverse().unwrap();
        assert!(linalg::rel_err(&left, &right) < 1e-12);
    }

    #[test]
    fn singular_z_is_rejected() {
        let z = CMat::from_element(2, 2, c(1.0, 1.0));
        match z_to_y(&z, DEFAULT_COND_CAP) {
            Err(Error::Singular { cond, .. }) => assert!(cond > 1e12),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn block_indexing_and_shapes() {
        let layout = PortLayout::new(1, 1, 1).unwrap();
        let z = CMat::from_fn(3, 3, |i, j| c((3 * i + j) as f64, 0.0));
        let p = NetworkParameters::new(layout, z).unwrap();
        assert_eq!(p.block(Group::R, Group::T)[(0, 0)], c(6.0, 0.0));

        let layout = PortLayout::new(2, 5, 3).unwrap();
        let spec = RayleighSpec::far_field_defaults(50.0);
        let p = generate_rayleigh_scenario(layout, &spec, &eye(5, 50.0), 4).unwrap();
        assert_eq!(p.block(Group::I, Group::I).shape(), (5, 5));
        assert_eq!(p.block(Group::R, Group::I), p.block(Group::I, Group::R).transpose());
        assert!(p.asymmetry() == 0.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let layout = PortLayout::new(2, 4, 2).unwrap();
        let spec = RayleighSpec::far_field_defaults(50.0);
        let a = generate_rayleigh_scenario(layout, &spec, &eye(4, 50.0), 9).unwrap();
        let b = generate_rayleigh_scenario(layout, &spec, &eye(4, 50.0), 9).unwrap();
        assert_eq!(a, b);
        assert!(a.min_eig_re_admittance().unwrap() > 0.0);
    }

    #[test]
    fn empirical_variance_matches_path_gain() {
        let z0: f64 = 50.0;
        let spec = RayleighSpec::far_field_defaults(z0);
        assert!((spec.pathgain_it - 4.0 * z0 * z0 * 1e-8).abs() < 1e-18);
        let layout = PortLayout::new(1, 100, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut s_it, mut s_ri, mut n) = (0.0, 0.0, 0.0);
        for _ in 0..100 {
            let p = generate_rayleigh_scenario_with(layout, &spec, &eye(100, z0), None, &mut rng)
                .unwrap();
            s_it += p.block(Group::I, Group::T).iter().map(|z| z.norm_sqr()).sum::<f64>();
            s_ri += p.block(Group::R, Group::I).iter().map(|z| z.norm_sqr()).sum::<f64>();
            n += 100.0;
        }
        assert!(((s_it / n) / spec.pathgain_it - 1.0).abs() < 0.05);
        assert!(((s_ri / n) / spec.pathgain_ri - 1.0).abs() < 0.05);
    }

    #[test]
    fn nonpositive_gain_is_rejected() {
        let layout = PortLayout::new(1, 2, 1).unwrap();
        let mut spec = RayleighSpec::far_field_defaults(50.0);
        spec.pathgain_ri = 0.0;
        assert!(generate_rayleigh_scenario(layout, &spec, &eye(2, 50.0), 0).is_err());
        assert!(PortLayout::new(0, 1, 1).is_err());
    }
}
