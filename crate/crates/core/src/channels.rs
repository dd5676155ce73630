//! Channel models: exact multiport, explicit admittance form, compact form
//! `H = H̄_RT + H̄_RI θ̄ H̄_IT`, and the three standard approximations.
//!
//! The RIS is a lossless reciprocal network with admittance `Y_I = i B_I`,
//! `B_I` real symmetric. All models take `B_I` directly so that singular
//! susceptances (e.g. `B_I = 0`) need no special casing.

use crate::error::{Error, Result};
use crate::linalg::{self, DEFAULT_COND_CAP};
use crate::netparams::{block_of, Group, NetworkParameters, Terminations};
use crate::{CMat, RMat, C64};

/// Relative eigenvalue floor for the PD square root of `Re(Ȳ_II)`.
pub const PD_FLOOR: f64 = 1e-14;

fn y_i(b_i: &RMat) -> CMat {
    b_i.map(|b| C64::new(0.0, b))
}

fn check_b(b_i: &RMat, n_i: usize) -> Result<()> {
    if b_i.nrows() != n_i || b_i.ncols() != n_i {
        return Err(Error::Dimension {
            context: "susceptance".into(),
            detail: format!("expected {n_i}x{n_i}, got {}x{}", b_i.nrows(), b_i.ncols()),
        });
    }
    let dev = (b_i - b_i.transpose()).norm();
    if dev > 1e-12 * b_i.norm().max(1.0) {
        return Err(Error::NotSymmetric { deviation: dev });
    }
    Ok(())
}

/// Exact model `H = Z̃_RT Z̃_TT⁻¹`, `Z̃ = (I + Z₀ Z⁻¹)⁻¹`, evaluated as
/// `Z̃ = (Y₀ + Y)⁻¹ Y₀` with `Y₀ = blkdiag(Y_T, i B_I, Y_R)`.
pub fn channel_exact(params: &NetworkParameters, term: &Terminations, b_i: &RMat) -> Result<CMat> {
    let l = &params.layout;
    check_b(b_i, l.n_i)?;
    let y = params.admittance()?;
    let y0blk = linalg::block_diag(&[&term.y_t_mat(), &y_i(b_i), &term.y_r_mat()]);
    let ytilde = linalg::inverse_checked(&(&y0blk + &y), DEFAULT_COND_CAP, "Y0 + Y")?;
    let ztilde = ytilde * &y0blk;
    let z_rt = block_of(&ztilde, l, Group::R, Group::T);
    let z_tt = block_of(&ztilde, l, Group::T, Group::T);
    let inv_tt = linalg::inverse_checked(&z_tt, DEFAULT_COND_CAP, "Z~_TT")?;
    Ok(z_rt * inv_tt)
}

/// Blocks of `Y = Z⁻¹` and `M = Y_R + Y_RR` shared by the admittance forms.
struct AdmittanceBlocks {
    y_it: CMat,
    y_ii: CMat,
    y_ir: CMat,
    y_rt: CMat,
    y_ri: CMat,
    m_inv: CMat,
}

impl AdmittanceBlocks {
    fn new(y: &CMat, params: &NetworkParameters, term: &Terminations) -> Result<Self> {
        let l = &params.layout;
        let m = block_of(y, l, Group::R, Group::R) + term.y_r_mat();
        let m_inv = linalg::inverse_checked(&m, DEFAULT_COND_CAP, "Y_R + Y_RR")?;
        Ok(Self {
            y_it: block_of(y, l, Group::I, Group::T),
            y_ii: block_of(y, l, Group::I, Group::I),
            y_ir: block_of(y, l, Group::I, Group::R),
            y_rt: block_of(y, l, Group::R, Group::T),
            y_ri: block_of(y, l, Group::R, Group::I),
            m_inv,
        })
    }

    fn ybar_ii(&self) -> CMat {
        &self.y_ii - &self.y_ir * &self.m_inv * &self.y_ri
    }

    /// `Y_IT − Y_IR M⁻¹ Y_RT`
    fn y_it_eff(&self) -> CMat {
        &self.y_it - &self.y_ir * &self.m_inv * &self.y_rt
    }
}

/// Explicit admittance-form channel
/// `H = M⁻¹(−Y_RT + Y_RI (Y_I + Ȳ_II)⁻¹ (Y_IT − Y_IR M⁻¹ Y_RT))`.
pub fn channel_explicit(params: &NetworkParameters, term: &Terminations, b_i: &RMat) -> Result<CMat> {
    check_b(b_i, params.layout.n_i)?;
    let y = params.admittance()?;
    let blk = AdmittanceBlocks::new(&y, params, term)?;
    let schur = y_i(b_i) + blk.ybar_ii();
    let inner = linalg::solve(&schur, &blk.y_it_eff(), "Y_I + Ybar_II")?;
    Ok(&blk.m_inv * (-&blk.y_rt + &blk.y_ri * inner))
}

/// `Ȳ_II = Y_II − Y_IR (Y_RR + Y_R)⁻¹ Y_RI` from a full admittance matrix.
pub fn reduced_ris_admittance(
    y: &CMat,
    layout: &crate::netparams::PortLayout,
    term: &Terminations,
) -> Result<CMat> {
    let m = block_of(y, layout, Group::R, Group::R) + term.y_r_mat();
    let m_inv = linalg::inverse_checked(&m, DEFAULT_COND_CAP, "Y_R + Y_RR")?;
    Ok(block_of(y, layout, Group::I, Group::I)
        - block_of(y, layout, Group::I, Group::R) * m_inv * block_of(y, layout, Group::R, Group::I))
}

/// Quantities of the compact channel form.
#[derive(Debug, Clone)]
pub struct CompactDecomposition {
    pub hbar_rt: CMat,
    pub hbar_ri: CMat,
    pub hbar_it: CMat,
    pub re_ybar_ii: RMat,
    pub im_ybar_ii: RMat,
    /// `Re(Ȳ_II)^{1/2}`
    pub sqrt_re: RMat,
    /// `Re(Ȳ_II)^{-1/2}`
    pub inv_sqrt_re: RMat,
    pub y0: f64,
    /// Smallest eigenvalue of `Re(Ȳ_II)`.
    pub min_eig: f64,
}

impl CompactDecomposition {
    pub fn n_i(&self) -> usize {
        self.re_ybar_ii.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.hbar_it.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.hbar_ri.nrows()
    }

    /// `L = √Y0 · Re(Ȳ_II)^{-1/2}`, the congruence factor with
    /// `B̄_I = L (B_I + Im Ȳ_II) L`.
    pub fn l_factor(&self) -> RMat {
        &self.inv_sqrt_re * self.y0.sqrt()
    }

    /// `B̄_I = Y0 Re(Ȳ_II)^{-1/2} (B_I + Im Ȳ_II) Re(Ȳ_II)^{-1/2}`.
    pub fn b_to_bbar(&self, b_i: &RMat) -> RMat {
        let s = &self.inv_sqrt_re;
        linalg::sym_part(&(s * (b_i + &self.im_ybar_ii) * s * self.y0))
    }

    /// `B_I = (1/Y0) Re(Ȳ_II)^{1/2} B̄_I Re(Ȳ_II)^{1/2} − Im Ȳ_II`.
    pub fn bbar_to_b(&self, bbar_i: &RMat) -> RMat {
        let s = &self.sqrt_re;
        linalg::sym_part(&(s * bbar_i * s / self.y0 - &self.im_ybar_ii))
    }

    pub fn channel(&self, state: &RisState) -> CMat {
        channel_compact(self, state)
    }

    /// Channel for a given physical susceptance.
    pub fn channel_for(&self, b_i: &RMat) -> CMat {
        channel_compact(self, &make_ris_state(self, b_i))
    }
}

/// Compute the compact-form quantities. Fails when `Re(Ȳ_II)` is not PD,
/// which only happens for nonphysical inputs.
pub fn compact_decompose(params: &NetworkParameters, term: &Terminations) -> Result<CompactDecomposition> {
    let y = params.admittance()?;
    let blk = AdmittanceBlocks::new(&y, params, term)?;
    let ybar = blk.ybar_ii();
    let re_ybar = linalg::sym_part(&linalg::re(&ybar));
    let im_ybar = linalg::sym_part(&linalg::im(&ybar));
    let f = linalg::sqrt_pd(&re_ybar, PD_FLOOR)?;
    let y0 = term.y0();
    let s = linalg::to_complex(&f.inv_sqrt);
    let two_y0 = C64::new(2.0 * y0, 0.0);
    let r2y0 = C64::new(std::f64::consts::SQRT_2 * y0, 0.0);

    let ybar_rt = &blk.m_inv * &blk.y_rt * two_y0;
    let ybar_ri = &blk.m_inv * &blk.y_ri * &s * r2y0;
    let ybar_it = &s * blk.y_it_eff() * r2y0;

    let hbar_rt = -(&ybar_rt - &ybar_ri * &ybar_it / two_y0) / two_y0;
    let hbar_ri = -&ybar_ri / two_y0;
    let hbar_it = -&ybar_it / two_y0;
    Ok(CompactDecomposition {
        hbar_rt,
        hbar_ri,
        hbar_it,
        re_ybar_ii: re_ybar,
        im_ybar_ii: im_ybar,
        sqrt_re: f.sqrt,
        inv_sqrt_re: f.inv_sqrt,
        y0,
        min_eig: f.min_eig,
    })
}

/// Physical susceptance, its transformed counterpart and the virtual
/// scattering matrix `θ̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisState {
    pub b_i: RMat,
    pub bbar_i: RMat,
    pub theta_bar: CMat,
}

pub fn make_ris_state(decomp: &CompactDecomposition, b_i: &RMat) -> RisState {
    let bbar_i = decomp.b_to_bbar(b_i);
    let theta_bar = linalg::cayley(&bbar_i, decomp.y0);
    RisState {
        b_i: b_i.clone(),
        bbar_i,
        theta_bar,
    }
}

/// State from a transformed susceptance `B̄_I`.
pub fn ris_state_from_bbar(decomp: &CompactDecomposition, bbar_i: &RMat) -> RisState {
    let b_i = decomp.bbar_to_b(bbar_i);
    RisState {
        b_i,
        bbar_i: linalg::sym_part(bbar_i),
        theta_bar: linalg::cayley(bbar_i, decomp.y0),
    }
}

/// `H̄_RT + H̄_RI θ̄ H̄_IT`
pub fn channel_compact(decomp: &CompactDecomposition, state: &RisState) -> CMat {
    &decomp.hbar_rt + &decomp.hbar_ri * &state.theta_bar * &decomp.hbar_it
}

/// `(Z_I + Z_II)⁻¹ Z_IT` with `Z_I = (i B_I)⁻¹`, computed as
/// `Y_I (I + Z_II Y_I)⁻¹ Z_IT` so that `B_I` need not be invertible.
fn ris_current_map(z_ii: &CMat, b_i: &RMat, z_it: &CMat) -> Result<CMat> {
    let n = z_ii.nrows();
    let yi = y_i(b_i);
    let inner = CMat::identity(n, n) + z_ii * &yi;
    Ok(yi * linalg::solve(&inner, z_it, "I + Z_II Y_I")?)
}

/// Unilateral approximation
/// `Z_R(Z_R+Z_RR)⁻¹(Z_RT − Z_RI(Z_I+Z_II)⁻¹Z_IT) Z_TT⁻¹`.
pub fn channel_app1(params: &NetworkParameters, term: &Terminations, b_i: &RMat) -> Result<CMat> {
    check_b(b_i, params.layout.n_i)?;
    let z_r = term.z_r_mat();
    let z_rr = params.block(Group::R, Group::R);
    let z_tt = params.block(Group::T, Group::T);
    let core = params.block(Group::R, Group::T)
        - params.block(Group::R, Group::I)
            * ris_current_map(&params.block(Group::I, Group::I), b_i, &params.block(Group::I, Group::T))?;
    let left = linalg::solve(&(&z_r + &z_rr), &core, "Z_R + Z_RR")?;
    let inv_tt = linalg::inverse_checked(&z_tt, DEFAULT_COND_CAP, "Z_TT")?;
    Ok(z_r * left * inv_tt)
}

/// Unilateral plus matched transmitter/receiver:
/// `(1/2Z0)(Z_RT − Z_RI(Z_I+Z_II)⁻¹Z_IT)`.
pub fn channel_app2(params: &NetworkParameters, term: &Terminations, b_i: &RMat) -> Result<CMat> {
    check_b(b_i, params.layout.n_i)?;
    let core = params.block(Group::R, Group::T)
        - params.block(Group::R, Group::I)
            * ris_current_map(&params.block(Group::I, Group::I), b_i, &params.block(Group::I, Group::T))?;
    Ok(core / C64::new(2.0 * term.z0, 0.0))
}

/// Additionally no RIS mutual coupling and matched RIS antennas:
/// `(1/2Z0)(Z_RT − Z_RI(Z_I+Z0 I)⁻¹Z_IT)`.
pub fn channel_app3(params: &NetworkParameters, term: &Terminations, b_i: &RMat) -> Result<CMat> {
    check_b(b_i, params.layout.n_i)?;
    let n = params.layout.n_i;
    let z_ii = CMat::identity(n, n) * C64::new(term.z0, 0.0);
    let core = params.block(Group::R, Group::T)
        - params.block(Group::R, Group::I) * ris_current_map(&z_ii, b_i, &params.block(Group::I, Group::T))?;
    Ok(core / C64::new(2.0 * term.z0, 0.0))
}

/// Channel model used for optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelModel {
    Exact,
    App1,
    App2,
    App3,
}

impl ChannelModel {
    pub const ALL: [ChannelModel; 4] = [Self::Exact, Self::App1, Self::App2, Self::App3];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::App1 => "app1",
            Self::App2 => "app2",
            Self::App3 => "app3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(Self::Exact),
            "app1" => Ok(Self::App1),
            "app2" => Ok(Self::App2),
            "app3" => Ok(Self::App3),
            other => Err(Error::Config(format!("unknown channel model '{other}'"))),
        }
    }

    /// Impose the model's assumptions on the network and terminations, so
    /// that the exact model of the returned pair equals this model on the
    /// original pair.
    pub fn impose(&self, params: &NetworkParameters, term: &Terminations) -> (NetworkParameters, Terminations) {
        let mut p = params.clone();
        let mut t = term.clone();
        let l = p.layout;
        if *self >= Self::App1 {
            p.set_block(Group::T, Group::I, &CMat::zeros(l.n_t, l.n_i));
            p.set_block(Group::T, Group::R, &CMat::zeros(l.n_t, l.n_r));
            p.set_block(Group::I, Group::R, &CMat::zeros(l.n_i, l.n_r));
        }
        let z0 = C64::new(term.z0, 0.0);
        if *self >= Self::App2 {
            t = Terminations::matched(&l, term.z0);
            p.set_block(Group::T, Group::T, &(CMat::identity(l.n_t, l.n_t) * z0));
            p.set_block(Group::R, Group::R, &(CMat::identity(l.n_r, l.n_r) * z0));
        }
        if *self >= Self::App3 {
            p.set_block(Group::I, Group::I, &(CMat::identity(l.n_i, l.n_i) * z0));
        }
        (p, t)
    }

    /// Channel of this model by its closed-form expression.
    pub fn channel(&self, params: &NetworkParameters, term: &Terminations, b_i: &RMat) -> Result<CMat> {
        match self {
            Self::Exact => channel_exact(params, term, b_i),
            Self::App1 => channel_app1(params, term, b_i),
            Self::App2 => channel_app2(params, term, b_i),
            Self::App3 => channel_app3(params, term, b_i),
        }
    }

    /// Compact decomposition of this model, used as optimization input.
    pub fn decompose(&self, params: &NetworkParameters, term: &Terminations) -> Result<CompactDecomposition> {
        let (p, t) = self.impose(params, term);
        compact_decompose(&p, &t)
    }
}
