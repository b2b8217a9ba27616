//! Catalog of analytically known uniform MPS and an imaginary-time TEBD
//! ground-state finder for the gapped spin-1/2 XXZ chain
//! `H = Σ_j σˣσˣ + σʸσʸ + Δ σᶻσᶻ`.
//!
//! Spin basis: index 0 is `|↑⟩` (σᶻ = +1), index 1 is `|↓⟩`. Two-site blocks
//! use the index `2·s₁ + s₂`.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{exp_hermitian, svd, CMatrix};
use crate::mps::{
    block_sites, build_dressed_transfer, build_transfer_operator, clustering_report, normalize, ClusteringReport,
    MpsTensor, CLUSTERING_TOL,
};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// State descriptors as they appear in configuration files,
/// e.g. `{"state": "ghz", "p": 0.5}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum StateDescriptor {
    Ferromagnet {
        #[serde(default = "default_true")]
        up: bool,
    },
    Tilted {
        theta: f64,
        #[serde(default)]
        phi: f64,
    },
    Neel,
    Ghz {
        p: f64,
    },
    Aklt,
    Random {
        #[serde(default = "default_two")]
        d: usize,
        bond_dim: usize,
        seed: u64,
    },
    Xxz {
        delta: f64,
        #[serde(default = "default_bond")]
        bond_dim: usize,
        #[serde(default)]
        phase_hint: Option<PhaseHint>,
    },
}

fn default_true() -> bool {
    true
}

fn default_two() -> usize {
    2
}

fn default_bond() -> usize {
    16
}

impl StateDescriptor {
    /// Short name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ferromagnet { .. } => "ferromagnet",
            Self::Tilted { .. } => "tilted",
            Self::Neel => "neel",
            Self::Ghz { .. } => "ghz",
            Self::Aklt => "aklt",
            Self::Random { .. } => "random",
            Self::Xxz { .. } => "xxz",
        }
    }

    /// Builds the normalized site tensor (running TEBD for `xxz`).
    pub fn build(&self) -> Result<MpsTensor> {
        match *self {
            Self::Ferromagnet { up } => Ok(ferromagnet(up)),
            Self::Tilted { theta, phi } => tilted(theta, phi),
            Self::Neel => Ok(neel()),
            Self::Ghz { p } => ghz(p),
            Self::Aklt => Ok(aklt()),
            Self::Random { d, bond_dim, seed } => random(d, bond_dim, seed),
            Self::Xxz { delta, bond_dim, phase_hint } => {
                let hint = phase_hint.unwrap_or(if delta < 0.0 { PhaseHint::Ferro } else { PhaseHint::Antiferro });
                Ok(xxz_ground_state(&XxzSpec::new(delta, bond_dim)?, hint)?.tensor)
            }
        }
    }
}

/// `|↑↑…⟩` (or `|↓↓…⟩`), `D = 1`.
pub fn ferromagnet(up: bool) -> MpsTensor {
    let data = if up { vec![re(1.0), ZERO] } else { vec![ZERO, re(1.0)] };
    MpsTensor::new(2, 1, data).expect("valid")
}

/// `cos(θ/2)|↑⟩ + e^{iφ} sin(θ/2)|↓⟩` on every site.
pub fn tilted(theta: f64, phi: f64) -> Result<MpsTensor> {
    if !theta.is_finite() || !phi.is_finite() {
        return Err(Error::BadParam("tilt angles must be finite".into()));
    }
    MpsTensor::new(2, 1, vec![re((theta / 2.0).cos()), C64::from_polar((theta / 2.0).sin(), phi)])
}

/// Néel state `|↑↓↑↓…⟩` as a two-site block (`d = 4`, `D = 1`).
pub fn neel() -> MpsTensor {
    MpsTensor::new(4, 1, vec![ZERO, re(1.0), ZERO, ZERO]).expect("valid")
}

/// Site tensor of `√p|↑…↑⟩ + √(1−p)|↓…↓⟩`.
///
/// For `p ∈ {0, 1}` this is the clustering product state. Otherwise it is the
/// `D = 2` diagonal tensor `M↑ = diag(1, 0)`, `M↓ = diag(0, 1)` whose transfer
/// operator has a doubly degenerate leading eigenvalue; a translation-invariant
/// tensor cannot carry the weight `p` independently of the chain length, so
/// `p` enters through [`ghz_boundary`] on finite chains.
pub fn ghz(p: f64) -> Result<MpsTensor> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::BadParam(format!("GHZ weight p = {p} outside [0, 1]")));
    }
    if p == 1.0 || p == 0.0 {
        return Ok(ferromagnet(p == 1.0));
    }
    MpsTensor::from_matrices(&[CMatrix::from_real_diag(&[1.0, 0.0]), CMatrix::from_real_diag(&[0.0, 1.0])])
}

/// Boundary matrix `B` such that `Tr(B M_{s₁}⋯M_{s_L})` are the GHZ(p)
/// amplitudes for the tensor returned by [`ghz`].
pub fn ghz_boundary(p: f64) -> Result<CMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::BadParam(format!("GHZ weight p = {p} outside [0, 1]")));
    }
    if p == 1.0 || p == 0.0 {
        return Ok(CMatrix::identity(1));
    }
    Ok(CMatrix::from_real_diag(&[p.sqrt(), (1.0 - p).sqrt()]))
}

/// Spin-1 AKLT tensor (`d = 3`, `D = 2`), physical order `m = +1, 0, −1`.
pub fn aklt() -> MpsTensor {
    let a = (2.0f64 / 3.0).sqrt();
    let b = (1.0f64 / 3.0).sqrt();
    let plus = CMatrix::new(2, 2, vec![ZERO, re(a), ZERO, ZERO]).expect("2x2");
    let zero = CMatrix::from_real_diag(&[-b, b]);
    let minus = CMatrix::new(2, 2, vec![ZERO, ZERO, re(-a), ZERO]).expect("2x2");
    normalize(&MpsTensor::from_matrices(&[plus, zero, minus]).expect("valid")).expect("nonzero")
}

/// Seeded tensor with i.i.d. complex Gaussian entries, normalized.
pub fn random(d: usize, bond: usize, seed: u64) -> Result<MpsTensor> {
    if d == 0 || bond == 0 {
        return Err(Error::BadParam("random tensor needs d, D >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    normalize(&MpsTensor::random(d, bond, &mut rng))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseHint {
    /// Start from the Néel product state.
    Antiferro,
    /// Start from the polarized state `|↑↑…⟩`.
    Ferro,
}

/// Parameters of the imaginary-time ground-state search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XxzSpec {
    pub delta: f64,
    pub bond_dim: usize,
    /// `(dτ, max_steps)` stages with strictly decreasing `dτ`.
    pub schedule: Vec<(f64, usize)>,
    pub energy_tol: f64,
}

impl XxzSpec {
    pub fn new(delta: f64, bond_dim: usize) -> Result<Self> {
        let spec =
            Self { delta, bond_dim, schedule: vec![(0.1, 2000), (0.01, 2000), (0.001, 2000)], energy_tol: 1e-10 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bond_dim < 2 {
            return Err(Error::BadParam(format!("bond dimension {} < 2", self.bond_dim)));
        }
        if self.schedule.is_empty() || self.schedule.iter().any(|&(dt, _)| dt <= 0.0 || !dt.is_finite()) {
            return Err(Error::BadParam("Trotter schedule needs positive time steps".into()));
        }
        if self.schedule.windows(2).any(|w| w[1].0 >= w[0].0) {
            return Err(Error::BadParam("Trotter time steps must decrease strictly".into()));
        }
        if !(self.energy_tol > 0.0) {
            return Err(Error::BadParam("energy tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Two-site XXZ bond Hamiltonian `σˣσˣ + σʸσʸ + Δσᶻσᶻ` in the `2s₁+s₂` basis.
pub fn xxz_bond_hamiltonian(delta: f64) -> CMatrix {
    let mut h = CMatrix::zeros(4, 4);
    h[(0, 0)] = re(delta);
    h[(3, 3)] = re(delta);
    h[(1, 1)] = re(-delta);
    h[(2, 2)] = re(-delta);
    h[(1, 2)] = re(2.0);
    h[(2, 1)] = re(2.0);
    h
}

/// One row of the ground-state convergence log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TebdLogRow {
    pub sweep: usize,
    pub dtau: f64,
    pub energy_density: f64,
    pub truncation_weight: f64,
}

#[derive(Clone, Debug)]
pub struct XxzGroundState {
    /// Blocked two-site tensor (`d = 4`), normalized.
    pub tensor: MpsTensor,
    /// Energy per site evaluated from the blocked tensor's fixed points.
    pub energy_density: f64,
    /// Largest discarded weight over the final stage.
    pub truncation_weight: f64,
    pub clustering: ClusteringReport,
    pub log: Vec<TebdLogRow>,
}

impl XxzGroundState {
    pub fn log_csv(&self) -> String {
        let mut out = String::from("sweep,dtau,energy_density,truncation_weight\n");
        for r in &self.log {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e}\n",
                r.sweep, r.dtau, r.energy_density, r.truncation_weight
            ));
        }
        out
    }
}

/// Right-canonical site tensor: `d` matrices of shape `χ_left × χ_right`.
#[derive(Clone, Debug)]
struct SiteB {
    mats: Vec<CMatrix>,
}

/// Infinite two-site chain in the form `… λ_B | B_A B_B | …` where `lam[0]`
/// sits left of A and `lam[1]` between A and B.
struct TwoSiteChain {
    b: [SiteB; 2],
    lam: [Vec<f64>; 2],
}

impl TwoSiteChain {
    fn product(config: [usize; 2]) -> Self {
        let site = |s: usize| SiteB {
            mats: (0..2).map(|k| CMatrix::from_real_diag(&[if k == s { 1.0 } else { 0.0 }])).collect(),
        };
        Self { b: [site(config[0]), site(config[1])], lam: [vec![1.0], vec![1.0]] }
    }

    /// Applies `gate` to the bond between `first` and the other site; returns
    /// the discarded weight and the bond energy before truncation.
    fn update(&mut self, first: usize, gate: &CMatrix, chi_max: usize) -> Result<f64> {
        let second = 1 - first;
        let (ba, bb) = (&self.b[first], &self.b[second]);
        let chi_l = ba.mats[0].rows();
        let chi_r = bb.mats[0].cols();
        // θ[(α,s₁),(s₂,γ)] = Σ_β B_A[s₁]_{αβ} B_B[s₂]_{βγ}
        let mut theta = CMatrix::zeros(chi_l * 2, 2 * chi_r);
        for s1 in 0..2 {
            for s2 in 0..2 {
                let p = ba.mats[s1].matmul(&bb.mats[s2]);
                for a in 0..chi_l {
                    for g in 0..chi_r {
                        theta[(a * 2 + s1, s2 * chi_r + g)] = p[(a, g)];
                    }
                }
            }
        }
        let mut gated = CMatrix::zeros(chi_l * 2, 2 * chi_r);
        for a in 0..chi_l {
            for g in 0..chi_r {
                for s1 in 0..2 {
                    for s2 in 0..2 {
                        let mut acc = ZERO;
                        for t1 in 0..2 {
                            for t2 in 0..2 {
                                acc += gate[(2 * s1 + s2, 2 * t1 + t2)] * theta[(a * 2 + t1, t2 * chi_r + g)];
                            }
                        }
                        gated[(a * 2 + s1, s2 * chi_r + g)] = acc;
                    }
                }
            }
        }
        let lam_l = &self.lam[first];
        let weighted = CMatrix::from_fn(chi_l * 2, 2 * chi_r, |i, j| gated[(i, j)] * lam_l[i / 2]);
        let dec = svd(&weighted)?;
        let total: f64 = dec.s.iter().map(|x| x * x).sum();
        if !(total > 0.0) {
            return Err(Error::NoConvergence("wave function vanished under the gate".into()));
        }
        let cutoff = 1e-14 * dec.s[0];
        let keep = dec.s.iter().take(chi_max).filter(|&&x| x > cutoff).count().max(1);
        let kept: f64 = dec.s[..keep].iter().map(|x| x * x).sum();
        let discarded = 1.0 - kept / total;
        let norm = kept.sqrt();
        let yh = CMatrix::from_fn(keep, 2 * chi_r, |i, j| dec.vh[(i, j)]);
        // B_A = θ' Y† / ‖S‖ stays right-canonical without inverting λ
        let ba_full = gated.matmul(&yh.adjoint()).scale_real(1.0 / norm);
        let new_a =
            SiteB { mats: (0..2).map(|s| CMatrix::from_fn(chi_l, keep, |a, b| ba_full[(a * 2 + s, b)])).collect() };
        let new_b =
            SiteB { mats: (0..2).map(|s| CMatrix::from_fn(keep, chi_r, |b, g| yh[(b, s * chi_r + g)])).collect() };
        self.b[first] = new_a;
        self.b[second] = new_b;
        self.lam[second] = dec.s[..keep].iter().map(|x| x / norm).collect();
        Ok(discarded.max(0.0))
    }

    /// Bond energy `⟨h⟩` on the bond starting at `first`, assuming canonical form.
    fn bond_energy(&self, first: usize, h: &CMatrix) -> f64 {
        let second = 1 - first;
        let (ba, bb) = (&self.b[first], &self.b[second]);
        let lam = &self.lam[first];
        let chi_l = ba.mats[0].rows();
        let chi_r = bb.mats[0].cols();
        let mut num = 0.0;
        let mut den = 0.0;
        let blocks: Vec<CMatrix> = (0..4).map(|s| ba.mats[s / 2].matmul(&bb.mats[s % 2])).collect();
        for a in 0..chi_l {
            for g in 0..chi_r {
                let v: Vec<C64> = (0..4).map(|s| blocks[s][(a, g)] * lam[a]).collect();
                let hv = h.matvec(&v);
                num += v.iter().zip(&hv).map(|(x, y)| (x.conj() * y).re).sum::<f64>();
                den += v.iter().map(|x| x.norm_sqr()).sum::<f64>();
            }
        }
        num / den
    }

    fn energy_density(&self, h: &CMatrix) -> f64 {
        0.5 * (self.bond_energy(0, h) + self.bond_energy(1, h))
    }

    /// `M_{2s₁+s₂} = B_A^{s₁} B_B^{s₂}`.
    fn blocked(&self) -> Result<MpsTensor> {
        let mats: Vec<CMatrix> = (0..4).map(|s| self.b[0].mats[s / 2].matmul(&self.b[1].mats[s % 2])).collect();
        normalize(&MpsTensor::from_matrices(&mats)?)
    }
}

/// Ground state of the gapped XXZ chain by second-order Trotterized
/// imaginary-time evolution on a two-site unit cell, seeded by a product
/// state that selects the symmetry-broken sector.
pub fn xxz_ground_state(spec: &XxzSpec, hint: PhaseHint) -> Result<XxzGroundState> {
    spec.validate()?;
    if spec.delta.abs() <= 1.0 {
        return Err(Error::CriticalRegime(spec.delta));
    }
    let h = xxz_bond_hamiltonian(spec.delta);
    let mut chain = TwoSiteChain::product(match hint {
        PhaseHint::Antiferro => [0, 1],
        PhaseHint::Ferro => [0, 0],
    });
    let mut log = Vec::new();
    let mut sweep = 0;
    let mut energy = chain.energy_density(&h);
    let mut stage_weight = 0.0;
    for (stage, &(dt, max_steps)) in spec.schedule.iter().enumerate() {
        let half = exp_hermitian(&h, re(-dt / 2.0))?;
        let full = exp_hermitian(&h, re(-dt))?;
        stage_weight = 0.0f64;
        let mut converged = false;
        for step in 0..max_steps {
            let mut w = chain.update(0, &half, spec.bond_dim)?;
            w = w.max(chain.update(1, &full, spec.bond_dim)?);
            w = w.max(chain.update(0, &half, spec.bond_dim)?);
            stage_weight = stage_weight.max(w);
            sweep += 1;
            let next = chain.energy_density(&h);
            let change = (next - energy).abs();
            energy = next;
            if step % 10 == 0 || change < spec.energy_tol {
                log.push(TebdLogRow { sweep, dtau: dt, energy_density: energy, truncation_weight: w });
            }
            if !energy.is_finite() {
                return Err(Error::NoConvergence(format!("energy became non-finite at sweep {sweep}")));
            }
            if step >= 5 && change < spec.energy_tol {
                converged = true;
                break;
            }
        }
        log::info!("dtau {dt}: energy density {energy:.12} after {sweep} sweeps");
        if !converged && stage + 1 == spec.schedule.len() {
            return Err(Error::NoConvergence(format!("energy still changing after {max_steps} steps at dtau {dt}")));
        }
    }
    let tensor = chain.blocked()?;
    let clustering = clustering_report(&build_transfer_operator(&tensor), CLUSTERING_TOL)?;
    if !clustering.is_clustering {
        return Err(Error::NonClustering(clustering.gap_ratio));
    }
    let energy_density = blocked_energy_density(&tensor, &h)?;
    Ok(XxzGroundState { tensor, energy_density, truncation_weight: stage_weight, clustering, log })
}

/// Expectation of a single-block operator in a normalized clustering state.
pub fn local_expectation(t: &MpsTensor, op: &CMatrix) -> Result<C64> {
    let pi = build_transfer_operator(t).fixed_point_projector()?;
    let r_op = build_dressed_transfer(t, op);
    Ok(pi.left.iter().zip(r_op.matrix().matvec(&pi.right)).map(|(l, v)| l * v).sum())
}

/// Energy per site of a two-site-blocked tensor under the bond Hamiltonian `h`.
pub fn blocked_energy_density(t: &MpsTensor, h: &CMatrix) -> Result<f64> {
    let inner = local_expectation(t, h)?.re;
    let two = block_sites(t, 2)?;
    let id2 = CMatrix::identity(2);
    let across = local_expectation(&two, &id2.kron(h).kron(&id2))?.re;
    Ok(0.5 * (inner + across))
}
