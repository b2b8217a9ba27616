//! Brute-force references on finite periodic chains: dense state vectors,
//! exact reduced density matrices, explicit symmetrization, the isotypic
//! block structure of symmetrized states, and exact diagonalization of the
//! XXZ chain.
//!
//! Two independent routes produce reduced density matrices. The dense route
//! builds all `d^L` amplitudes. The environment route keeps the subsystem
//! amplitudes `Ψ[s, (a,b)] = (M_{s₁}⋯M_{s_ℓ})_{ab}` explicit and contracts the
//! complement as `R^{L−ℓ}` built by repeated multiplication, which reaches
//! long rings (`L = 30`) at small subsystem sizes.

use std::collections::HashMap;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, null_space, CMatrix};
use crate::mps::{build_transfer_operator, MpsTensor};
use crate::symmetry::{haar_sample_su2, matrix_to_rows, FiniteGroupRep, LieGroupRep, LieKind, SectorProjector};

/// Largest state vector the dense route builds.
pub const DENSE_STATE_CAP: usize = 1 << 22;
/// Largest subsystem dimension for density matrices and symmetrization.
pub const SUBSYSTEM_CAP: usize = 4096;
/// Above this subsystem dimension, moments are evaluated in factored form.
pub const FACTORED_THRESHOLD: usize = 4096;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Normalized amplitudes of a periodic chain.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    pub sites: usize,
    pub d: usize,
    pub amplitudes: Vec<C64>,
}

/// All products `M_{s₁}⋯M_{s_k}` in lexicographic order of `(s₁,…,s_k)`.
fn all_products(t: &MpsTensor, k: usize) -> Vec<CMatrix> {
    let mats = t.matrices();
    let mut level = vec![CMatrix::identity(t.bond_dim())];
    for _ in 0..k {
        level = level.iter().flat_map(|p| mats.iter().map(move |m| p.matmul(m))).collect();
    }
    level
}

/// `ψ(s) = Tr(M_{s₁}⋯M_{s_L})`, normalized.
pub fn dense_state(t: &MpsTensor, sites: usize) -> Result<DenseState> {
    dense_state_with_boundary(t, sites, None)
}

/// `ψ(s) = Tr(B M_{s₁}⋯M_{s_L})`, normalized. The chain is split in two
/// halves whose products are tabulated separately.
pub fn dense_state_with_boundary(t: &MpsTensor, sites: usize, boundary: Option<&CMatrix>) -> Result<DenseState> {
    let d = t.phys_dim();
    let dim = (d as u128).checked_pow(sites as u32).unwrap_or(u128::MAX);
    if dim > DENSE_STATE_CAP as u128 || sites == 0 {
        return Err(Error::CapExceeded { needed: dim.min(usize::MAX as u128) as usize, cap: DENSE_STATE_CAP });
    }
    let bond = t.bond_dim();
    let left_len = sites / 2;
    let mut left = all_products(t, left_len);
    if let Some(b) = boundary {
        if b.rows() != bond || b.cols() != bond {
            return Err(Error::Shape("boundary must be D x D".into()));
        }
        left = left.iter().map(|p| b.matmul(p)).collect();
    }
    let right = all_products(t, sites - left_len);
    let mut amplitudes = Vec::with_capacity(dim as usize);
    for p in &left {
        for q in &right {
            let mut acc = ZERO;
            for a in 0..bond {
                for b in 0..bond {
                    acc += p[(a, b)] * q[(b, a)];
                }
            }
            amplitudes.push(acc);
        }
    }
    let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 1e-300) {
        return Err(Error::ZeroTensor(norm));
    }
    for z in &mut amplitudes {
        *z /= norm;
    }
    Ok(DenseState { sites, d, amplitudes })
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates the invariants (Hermiticity `1e-12`, eigenvalues `≥ −1e-10`,
    /// trace `1 ± 1e-10`) and removes the anti-Hermitian rounding residue.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidDensityMatrix("not square".into()));
        }
        let scale = m.max_abs().max(1.0);
        let herm = m.hermiticity_defect();
        if herm > 1e-12 * scale {
            return Err(Error::InvalidDensityMatrix(format!("Hermiticity defect {herm:e}")));
        }
        let matrix = (&m + &m.adjoint()).scale_real(0.5);
        let tr = matrix.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let (vals, _) = eigh(&matrix)?;
        if vals.first().is_some_and(|&v| v < -1e-10) {
            return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {:e}", vals[0])));
        }
        Ok(Self { matrix })
    }

    /// Normalizes the trace first; the matrix must still be Hermitian PSD.
    pub fn from_unnormalized(m: CMatrix) -> Result<Self> {
        let tr = m.trace().re;
        if !(tr > 0.0) {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr} is not positive")));
        }
        Self::new(m.scale_real(1.0 / tr))
    }

    /// `G G† / Tr(G G†)` for a complex Gaussian `G`.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let g = CMatrix::random_gaussian(dim, dim, rng);
        Self::from_unnormalized(g.matmul(&g.adjoint())).expect("Wishart matrices are valid")
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(eigh(&self.matrix)?.0)
    }

    /// `Tr ρⁿ` from the spectrum.
    pub fn moment(&self, n: usize) -> Result<f64> {
        Ok(self.eigenvalues()?.iter().map(|v| v.max(0.0).powi(n as i32)).sum())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DensityMatrixJson { rows: matrix_to_rows(&self.matrix) }).expect("plain data")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: DensityMatrixJson = serde_json::from_str(s)?;
        let rows: Vec<Vec<C64>> = j.rows.iter().map(|r| r.iter().map(|&[a, b]| C64::new(a, b)).collect()).collect();
        Self::new(CMatrix::from_rows(&rows)?)
    }
}

#[derive(Serialize, Deserialize)]
struct DensityMatrixJson {
    rows: Vec<Vec<[f64; 2]>>,
}

/// Reduced density matrix of the first `ell` sites.
pub fn reduced_density_matrix(psi: &DenseState, ell: usize) -> Result<DensityMatrix> {
    if ell > psi.sites {
        return Err(Error::BadParam(format!("subsystem {ell} longer than chain {}", psi.sites)));
    }
    let da = psi.d.pow(ell as u32);
    if da > SUBSYSTEM_CAP {
        return Err(Error::CapExceeded { needed: da, cap: SUBSYSTEM_CAP });
    }
    let db = psi.amplitudes.len() / da;
    let m = CMatrix::new(da, db, psi.amplitudes.clone())?;
    DensityMatrix::new(m.matmul(&m.adjoint()))
}

/// `Ψ[s, (a,b)] = (M_{s₁}⋯M_{s_ℓ})_{ab}`, shape `d^ℓ × D²`.
pub fn subsystem_amplitudes(t: &MpsTensor, ell: usize) -> Result<CMatrix> {
    let d = t.phys_dim();
    let rows = (d as u128).checked_pow(ell as u32).unwrap_or(u128::MAX);
    if rows > DENSE_STATE_CAP as u128 {
        return Err(Error::CapExceeded { needed: rows.min(usize::MAX as u128) as usize, cap: DENSE_STATE_CAP });
    }
    let prods = all_products(t, ell);
    let dd = t.bond_dim() * t.bond_dim();
    let data = prods.into_iter().flat_map(|p| p.into_data()).collect();
    CMatrix::new(rows as usize, dd, data)
}

/// `R^k` by `k` successive multiplications.
fn naive_power(r: &CMatrix, k: usize) -> CMatrix {
    let mut acc = CMatrix::identity(r.rows());
    for _ in 0..k {
        acc = acc.matmul(r);
    }
    acc
}

/// Complement environment on a ring of `sites`, reshuffled so that
/// `ρ_A ∝ Ψ·K·Ψ†`: `K[(a,b),(a',b')] = (R^{L−ℓ})[(b,b'),(a,a')]`.
fn complement_kernel(t: &MpsTensor, sites: usize, ell: usize) -> CMatrix {
    let r = build_transfer_operator(t);
    let e = naive_power(r.matrix(), sites - ell);
    let bond = t.bond_dim();
    CMatrix::from_fn(bond * bond, bond * bond, |i, j| {
        let (a, b) = (i / bond, i % bond);
        let (ap, bp) = (j / bond, j % bond);
        e[(b * bond + bp, a * bond + ap)]
    })
}

/// Reduced density matrix of `ell` consecutive sites of a ring of `sites`,
/// via explicit subsystem amplitudes and the complement environment.
pub fn environment_density_matrix(t: &MpsTensor, sites: usize, ell: usize) -> Result<DensityMatrix> {
    if ell > sites {
        return Err(Error::BadParam(format!("subsystem {ell} longer than chain {sites}")));
    }
    let da = t.phys_dim().pow(ell as u32);
    if da > SUBSYSTEM_CAP {
        return Err(Error::CapExceeded { needed: da, cap: SUBSYSTEM_CAP });
    }
    let psi = subsystem_amplitudes(t, ell)?;
    let k = complement_kernel(t, sites, ell);
    let rho = psi.matmul(&k).matmul(&psi.adjoint());
    DensityMatrix::from_unnormalized(rho)
}

/// Applies `u` to every site of the row index of `Ψ` (`d^ℓ` rows).
fn apply_sitewise(psi: &CMatrix, u: &CMatrix, ell: usize) -> CMatrix {
    let d = u.rows();
    let cols = psi.cols();
    let mut cur = psi.clone();
    for site in 0..ell {
        let stride = d.pow((ell - site - 1) as u32);
        let mut next = CMatrix::zeros(cur.rows(), cols);
        for row in 0..cur.rows() {
            let s = (row / stride) % d;
            let base = row - s * stride;
            for t in 0..d {
                let c = u[(s, t)];
                if c == ZERO {
                    continue;
                }
                let src = base + t * stride;
                for col in 0..cols {
                    next[(row, col)] += c * cur[(src, col)];
                }
            }
        }
        cur = next;
    }
    cur
}

/// `Tr(ρ_A u₁ ρ_A u₂ ⋯ ρ_A u_n)` on a ring of `sites`, with `u_j` acting on
/// every subsystem site. Large subsystems use `ρ_A ∝ ΨKΨ†` in factored form,
/// `Tr Π_j K (Ψ† U_j Ψ)`; small ones build `ρ_A` explicitly.
pub fn exact_charged_moment(t: &MpsTensor, sites: usize, ell: usize, us: &[CMatrix]) -> Result<C64> {
    let da = t.phys_dim().pow(ell as u32);
    if da <= FACTORED_THRESHOLD {
        let rho = environment_density_matrix(t, sites, ell)?;
        let mut acc = CMatrix::identity(da);
        for u in us {
            acc = acc.matmul(rho.matrix()).matmul(&u.kron_power(ell));
        }
        return Ok(acc.trace());
    }
    if ell > sites {
        return Err(Error::BadParam(format!("subsystem {ell} longer than chain {sites}")));
    }
    let psi = subsystem_amplitudes(t, ell)?;
    let k = complement_kernel(t, sites, ell);
    let z = k.matmul(&psi.adjoint().matmul(&psi)).trace();
    let mut acc = CMatrix::identity(k.rows());
    for u in us {
        let gram = psi.adjoint().matmul(&apply_sitewise(&psi, u, ell));
        acc = acc.matmul(&k).matmul(&gram);
    }
    Ok(acc.trace() / z.powu(us.len() as u32))
}

/// `Tr ρ_Aⁿ` on a ring, by the same routes as [`exact_charged_moment`].
pub fn exact_purity(t: &MpsTensor, sites: usize, ell: usize, n: usize) -> Result<f64> {
    Ok(exact_charged_moment(t, sites, ell, &vec![CMatrix::identity(t.phys_dim()); n])?.re)
}

/// `(1/|G|) Σ_g U_g ρ U_g†` for an explicit list of represented elements.
pub fn symmetrize_with_action(rho: &DensityMatrix, action: &[CMatrix]) -> Result<DensityMatrix> {
    if action.iter().any(|u| u.rows() != rho.dim()) {
        return Err(Error::Shape("representation dimension differs from rho".into()));
    }
    let mut acc = CMatrix::zeros(rho.dim(), rho.dim());
    for u in action {
        acc = &acc + &u.matmul(rho.matrix()).matmul(&u.adjoint());
    }
    DensityMatrix::new(acc.scale_real(1.0 / action.len() as f64))
}

/// Exact group average with `g` acting site-wise on `ell` sites.
pub fn symmetrize_exact(rho: &DensityMatrix, g: &FiniteGroupRep, ell: usize) -> Result<DensityMatrix> {
    let action: Vec<CMatrix> = (0..g.order()).map(|i| g.site_action(i, ell)).collect();
    symmetrize_with_action(rho, &action)
}

/// Monte Carlo Haar average and its diagnostics.
#[derive(Clone, Debug)]
pub struct HaarAverage {
    pub rho: DensityMatrix,
    /// Per-entry standard error of the mean (entry-wise modulus).
    pub std_err: CMatrix,
    /// `max_k ‖[X_k^{(ℓ)}, ρ̃]‖_max` over the represented generators.
    pub commutant_defect: f64,
}

/// Generators of `g` acting on `ell` sites: `Σ_i 1⊗…⊗X⊗…⊗1`.
pub fn lifted_generators(g: &LieGroupRep, ell: usize) -> Vec<CMatrix> {
    let d = g.dim();
    g.generators()
        .iter()
        .map(|x| {
            let mut acc = CMatrix::zeros(d.pow(ell as u32), d.pow(ell as u32));
            for site in 0..ell {
                let term = CMatrix::identity(d.pow(site as u32))
                    .kron(x)
                    .kron(&CMatrix::identity(d.pow((ell - site - 1) as u32)));
                acc = &acc + &term;
            }
            acc
        })
        .collect()
}

/// Average of `U ρ U†` over `samples` Haar-random group elements.
pub fn symmetrize_haar_mc(
    rho: &DensityMatrix,
    g: &LieGroupRep,
    ell: usize,
    samples: usize,
    seed: u64,
) -> Result<HaarAverage> {
    if g.dim().pow(ell as u32) != rho.dim() {
        return Err(Error::Shape("representation dimension differs from rho".into()));
    }
    if samples < 2 {
        return Err(Error::BadParam("need at least two samples".into()));
    }
    let unitaries: Vec<CMatrix> = match g.kind() {
        LieKind::Su2 => haar_sample_su2(samples, seed).iter().map(|e| g.represent(e).kron_power(ell)).collect(),
        LieKind::U1 => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..samples).map(|_| g.exp(&[rng.random::<f64>() * 2.0 * std::f64::consts::PI]).kron_power(ell)).collect()
        }
    };
    let dim = rho.dim();
    let mut sum = CMatrix::zeros(dim, dim);
    let mut sum_sq = vec![0.0; dim * dim];
    for u in &unitaries {
        let term = u.matmul(rho.matrix()).matmul(&u.adjoint());
        for (k, z) in term.data().iter().enumerate() {
            sum_sq[k] += z.norm_sqr();
        }
        sum = &sum + &term;
    }
    let nf = samples as f64;
    let mean = sum.scale_real(1.0 / nf);
    let std_err = CMatrix::from_fn(dim, dim, |i, j| {
        let k = i * dim + j;
        let var = (sum_sq[k] / nf - mean[(i, j)].norm_sqr()).max(0.0) * nf / (nf - 1.0);
        C64::new((var / nf).sqrt(), 0.0)
    });
    let rho_t = DensityMatrix::new(mean)?;
    let commutant_defect =
        lifted_generators(g, ell).iter().map(|x| x.commutator(rho_t.matrix()).max_abs()).fold(0.0, f64::max);
    Ok(HaarAverage { rho: rho_t, std_err, commutant_defect })
}

/// `Σ_σ Π_σ ρ Π_σ`.
pub fn symmetrize_abelian_blocks(rho: &DensityMatrix, projectors: &[SectorProjector]) -> Result<DensityMatrix> {
    let mut acc = CMatrix::zeros(rho.dim(), rho.dim());
    for s in projectors {
        if s.projector.rows() != rho.dim() {
            return Err(Error::Shape("projector dimension differs from rho".into()));
        }
        acc = &acc + &s.projector.matmul(rho.matrix()).matmul(&s.projector);
    }
    DensityMatrix::new(acc)
}

/// One isotypic component: `copies[j]` is an `N × dim_irrep` isometry onto
/// the `j`-th copy, with bases aligned across copies so that the group acts
/// by the same matrices on each.
#[derive(Clone, Debug)]
pub struct IsotypicSector {
    pub dim_irrep: usize,
    pub copies: Vec<CMatrix>,
}

#[derive(Clone, Debug)]
pub struct IsotypicDecomposition {
    pub dim: usize,
    pub sectors: Vec<IsotypicSector>,
}

impl IsotypicDecomposition {
    /// Copies in a flat order `(sector, copy)`, as used in structure reports.
    pub fn flat_copies(&self) -> Vec<(usize, &CMatrix)> {
        self.sectors.iter().enumerate().flat_map(|(s, sec)| sec.copies.iter().map(move |c| (s, c))).collect()
    }
}

/// Projection of a matrix onto the commutant of a represented group.
enum Commutant {
    /// Group average over the listed unitaries.
    Average(Vec<CMatrix>),
    /// Orthonormal basis (as vectorized matrices) of the commutant of the generators.
    Basis(CMatrix),
}

impl Commutant {
    fn project(&self, m: &CMatrix) -> CMatrix {
        match self {
            Commutant::Average(us) => {
                let mut acc = CMatrix::zeros(m.rows(), m.cols());
                for u in us {
                    acc = &acc + &u.matmul(m).matmul(&u.adjoint());
                }
                acc.scale_real(1.0 / us.len() as f64)
            }
            Commutant::Basis(b) => {
                let n = m.rows();
                let v = m.data();
                let mut out = vec![ZERO; n * n];
                for k in 0..b.cols() {
                    let coeff: C64 = (0..n * n).map(|i| b[(i, k)].conj() * v[i]).sum();
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += coeff * b[(i, k)];
                    }
                }
                CMatrix::new(n, n, out).expect("n x n")
            }
        }
    }
}

fn random_matrix(n: usize, rng: &mut ChaCha20Rng) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
}

fn decompose(commutant: &Commutant, n: usize, seed: u64) -> Result<IsotypicDecomposition> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let h0 = random_matrix(n, &mut rng);
    let h = commutant.project(&(&h0 + &h0.adjoint()));
    let (vals, vecs) = eigh(&h)?;
    let scale = vals.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
    // eigenspaces of a generic Hermitian commutant element are single irreducible copies
    let mut spaces: Vec<CMatrix> = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && vals[end] - vals[end - 1] < 1e-9 * scale {
            end += 1;
        }
        spaces.push(CMatrix::from_fn(n, end - start, |i, j| vecs[(i, start + j)]));
        start = end;
    }
    // copies are equivalent iff a generic intertwiner connects them
    let c = commutant.project(&random_matrix(n, &mut rng));
    let cscale = c.max_abs().max(1e-300);
    let mut sectors: Vec<IsotypicSector> = Vec::new();
    'spaces: for v in spaces {
        for sec in &mut sectors {
            let first = &sec.copies[0];
            if first.cols() != v.cols() {
                continue;
            }
            let link = v.adjoint().matmul(&c).matmul(first);
            if link.max_abs() > 1e-8 * cscale {
                // V_j' = P_j C V_1 / |c| maps the first copy's basis equivariantly
                let aligned = v.matmul(&link);
                let norm = (aligned.adjoint().matmul(&aligned).trace().re / v.cols() as f64).sqrt();
                let aligned = aligned.scale_real(1.0 / norm);
                let defect = aligned.adjoint().matmul(&aligned).max_abs_diff(&CMatrix::identity(v.cols()));
                if defect > 1e-8 {
                    return Err(Error::DecompositionFailed(format!("intertwiner is not isometric ({defect:e})")));
                }
                sec.copies.push(aligned);
                continue 'spaces;
            }
        }
        sectors.push(IsotypicSector { dim_irrep: v.cols(), copies: vec![v] });
    }
    let total: usize = sectors.iter().map(|s| s.dim_irrep * s.copies.len()).sum();
    if total != n {
        return Err(Error::DecompositionFailed(format!("copies span {total} of {n} dimensions")));
    }
    Ok(IsotypicDecomposition { dim: n, sectors })
}

/// Isotypic decomposition of a finite group action given by its matrices.
pub fn isotypic_decomposition_finite(action: &[CMatrix], seed: u64) -> Result<IsotypicDecomposition> {
    let n = action.first().ok_or_else(|| Error::Shape("empty action".into()))?.rows();
    decompose(&Commutant::Average(action.to_vec()), n, seed)
}

/// Isotypic decomposition of a Lie algebra action given by its generators.
/// The commutant is the null space of `C ↦ ([X_k, C])_k`.
pub fn isotypic_decomposition_lie(generators: &[CMatrix], seed: u64) -> Result<IsotypicDecomposition> {
    let n = generators.first().ok_or_else(|| Error::Shape("no generators".into()))?.rows();
    if n * n > SUBSYSTEM_CAP {
        return Err(Error::CapExceeded { needed: n * n, cap: SUBSYSTEM_CAP });
    }
    // vec(XC − CX) = (X ⊗ 1 − 1 ⊗ Xᵀ) vec(C) in row-major vectorization
    let id = CMatrix::identity(n);
    let blocks: Vec<CMatrix> = generators.iter().map(|x| &x.kron(&id) - &id.kron(&x.transpose())).collect();
    let rows: Vec<Vec<C64>> = blocks.iter().flat_map(|b| (0..b.rows()).map(|i| b.row(i).to_vec())).collect();
    let stacked = CMatrix::from_rows(&rows)?;
    let basis = null_space(&stacked, 1e-10)?;
    decompose(&Commutant::Basis(basis), n, seed)
}

/// `ρ̃ = Σ_{σ,j,j'} ⟨I_{σjj'}, ρ⟩ I_{σjj'}` with
/// `I_{σjj'} = dim(σ)^{−1/2} Σ_a |σ,j,a⟩⟨σ,j',a|`.
pub fn symmetrize_nonabelian_basis(rho: &DensityMatrix, dec: &IsotypicDecomposition) -> Result<DensityMatrix> {
    if dec.dim != rho.dim() {
        return Err(Error::Shape("decomposition dimension differs from rho".into()));
    }
    let mut acc = CMatrix::zeros(rho.dim(), rho.dim());
    for sec in &dec.sectors {
        let norm = 1.0 / (sec.dim_irrep as f64).sqrt();
        for vj in &sec.copies {
            for vk in &sec.copies {
                let basis = vj.matmul(&vk.adjoint()).scale_real(norm);
                let coeff = basis.adjoint().matmul(rho.matrix()).trace();
                acc = &acc + &basis.scale(coeff);
            }
        }
    }
    DensityMatrix::new(acc)
}

/// Outcome of a successful structure check.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub max_cross_irrep: f64,
    pub max_identity_deviation: f64,
    pub max_trace_mismatch: f64,
    pub blocks_checked: usize,
}

/// Verifies that `ρ̃` vanishes between inequivalent copies, is proportional
/// to the identity between equivalent ones, and (when `original` is given)
/// keeps each copy-pair block trace of the original state.
pub fn block_structure_check(
    rho_tilde: &DensityMatrix,
    original: Option<&DensityMatrix>,
    dec: &IsotypicDecomposition,
) -> Result<BlockReport> {
    const TOL: f64 = 1e-10;
    let copies = dec.flat_copies();
    let mut report =
        BlockReport { max_cross_irrep: 0.0, max_identity_deviation: 0.0, max_trace_mismatch: 0.0, blocks_checked: 0 };
    for (i, (si, vi)) in copies.iter().enumerate() {
        for (j, (sj, vj)) in copies.iter().enumerate() {
            let block = vi.adjoint().matmul(rho_tilde.matrix()).matmul(vj);
            report.blocks_checked += 1;
            if si != sj {
                let m = block.max_abs();
                report.max_cross_irrep = report.max_cross_irrep.max(m);
                if m > TOL {
                    return Err(Error::StructureViolation {
                        row_block: i,
                        col_block: j,
                        reason: format!("inequivalent irreps coupled ({m:e})"),
                    });
                }
                continue;
            }
            let d = block.rows();
            let tr = block.trace();
            let dev = block.max_abs_diff(&CMatrix::identity(d).scale(tr / d as f64));
            report.max_identity_deviation = report.max_identity_deviation.max(dev);
            if dev > TOL {
                return Err(Error::StructureViolation {
                    row_block: i,
                    col_block: j,
                    reason: format!("block not proportional to the identity ({dev:e})"),
                });
            }
            if let Some(orig) = original {
                let want = vi.adjoint().matmul(orig.matrix()).matmul(vj).trace();
                let mismatch = (want - tr).norm();
                report.max_trace_mismatch = report.max_trace_mismatch.max(mismatch);
                if mismatch > TOL {
                    return Err(Error::StructureViolation {
                        row_block: i,
                        col_block: j,
                        reason: format!("block trace {tr} differs from original {want}"),
                    });
                }
            }
        }
    }
    Ok(report)
}

/// `ΔSₙ = log(Tr ρ̃ⁿ / Tr ρⁿ) / (1 − n)`.
pub fn exact_asymmetry(rho: &DensityMatrix, rho_tilde: &DensityMatrix, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::BadParam(format!("replica index {n} < 2")));
    }
    Ok((rho_tilde.moment(n)? / rho.moment(n)?).ln() / (1.0 - n as f64))
}

/// Sorted basis of the zero-magnetization sector of `sites` spins.
fn sz_zero_basis(sites: usize) -> Vec<u32> {
    (0u32..1 << sites).filter(|s| s.count_ones() as usize * 2 == sites).collect()
}

/// Ground-state energy per site of the periodic XXZ ring
/// `Σ σˣσˣ + σʸσʸ + Δσᶻσᶻ` in the `S_z = 0` sector, by Lanczos.
pub fn xxz_ground_energy_density(sites: usize, delta: f64) -> Result<f64> {
    if sites < 4 || sites % 2 == 1 || sites > 24 {
        return Err(Error::BadParam(format!("ring length {sites} must be even, 4..=24")));
    }
    let basis = sz_zero_basis(sites);
    let index: HashMap<u32, usize> = basis.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (i, &s) in basis.iter().enumerate() {
            if v[i] == 0.0 {
                continue;
            }
            for b in 0..sites {
                let c = (b + 1) % sites;
                let (sb, sc) = ((s >> b) & 1, (s >> c) & 1);
                if sb == sc {
                    out[i] += delta * v[i];
                } else {
                    out[i] -= delta * v[i];
                    let flipped = s ^ (1 << b) ^ (1 << c);
                    out[index[&flipped]] += 2.0 * v[i];
                }
            }
        }
        out
    };
    let dim = basis.len();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut prev = vec![0.0; dim];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last = f64::INFINITY;
    for it in 0..dim.min(400) {
        let mut w = apply(&v);
        let a: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum();
        let b_prev = betas.last().copied().unwrap_or(0.0);
        for k in 0..dim {
            w[k] -= a * v[k] + b_prev * prev[k];
        }
        alphas.push(a);
        let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let tri = CMatrix::from_fn(alphas.len(), alphas.len(), |i, j| {
            if i == j {
                C64::new(alphas[i], 0.0)
            } else if i + 1 == j || j + 1 == i {
                C64::new(betas[i.min(j)], 0.0)
            } else {
                ZERO
            }
        });
        let e0 = eigh(&tri)?.0[0];
        if (e0 - last).abs() < 1e-13 * e0.abs().max(1.0) && it > 10 || b < 1e-12 {
            return Ok(e0 / sites as f64);
        }
        last = e0;
        betas.push(b);
        prev = std::mem::replace(&mut v, w.iter().map(|x| x / b).collect());
    }
    Ok(last / sites as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{ferromagnet, ghz, ghz_boundary, random};
    use crate::symmetry::{abelian_irrep_projectors, spin_flip_group};
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn ferromagnet_chain() {
        let psi = dense_state(&ferromagnet(true), 3).unwrap();
        assert_eq!(psi.amplitudes[0], c(1.0));
        assert!(psi.amplitudes[1..].iter().all(|z| *z == ZERO));
        let rho = reduced_density_matrix(&psi, 2).unwrap();
        assert!((rho.moment(2).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ghz_chain_amplitudes() {
        let p: f64 = 0.3;
        let psi = dense_state_with_boundary(&ghz(p).unwrap(), 4, Some(&ghz_boundary(p).unwrap())).unwrap();
        assert!((psi.amplitudes[0].re - p.sqrt()).abs() < 1e-14);
        assert!((psi.amplitudes[15].re - (1.0 - p).sqrt()).abs() < 1e-14);
        let half = dense_state(&ghz(0.5).unwrap(), 4).unwrap();
        let rho = reduced_density_matrix(&half, 2).unwrap();
        let want = CMatrix::from_real_diag(&[0.5, 0.0, 0.0, 0.5]);
        assert!(rho.matrix().max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn dense_state_matches_iterated_contraction() {
        let t = random(2, 2, 3).unwrap();
        let psi = dense_state(&t, 8).unwrap();
        // one-by-one evaluation of each amplitude
        let mats = t.matrices();
        let raw: Vec<C64> = (0..256usize)
            .map(|s| {
                let mut p = CMatrix::identity(2);
                for k in 0..8 {
                    p = p.matmul(&mats[(s >> (7 - k)) & 1]);
                }
                p.trace()
            })
            .collect();
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let overlap: C64 = raw.iter().zip(&psi.amplitudes).map(|(a, b)| a.conj() * b).sum::<C64>() / norm;
        assert!((overlap.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn environment_route_matches_dense_route() {
        for seed in 0..4 {
            let t = random(2, 3, seed).unwrap();
            for ell in 1..=3 {
                let dense = reduced_density_matrix(&dense_state(&t, 10).unwrap(), ell).unwrap();
                let env = environment_density_matrix(&t, 10, ell).unwrap();
                assert!(dense.matrix().max_abs_diff(env.matrix()) < 1e-12);
            }
        }
    }

    #[test]
    fn factored_moments_match_explicit_ones() {
        let t = random(2, 2, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = CMatrix::random_unitary(2, &mut rng);
        let us = [u.clone(), u.adjoint()];
        let explicit = exact_charged_moment(&t, 14, 6, &us).unwrap();
        // force the factored path through a large subsystem on the same ring
        let psi = subsystem_amplitudes(&t, 6).unwrap();
        let k = complement_kernel(&t, 14, 6);
        let z = k.matmul(&psi.adjoint().matmul(&psi)).trace();
        let g1 = psi.adjoint().matmul(&apply_sitewise(&psi, &u, 6));
        let g2 = psi.adjoint().matmul(&apply_sitewise(&psi, &u.adjoint(), 6));
        let factored = k.matmul(&g1).matmul(&k).matmul(&g2).trace() / (z * z);
        assert!((explicit - factored).norm() < 1e-12);
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(CMatrix::from_real_diag(&[0.5, 0.6])).is_err());
        assert!(DensityMatrix::new(CMatrix::from_real_diag(&[1.5, -0.5])).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = DensityMatrix::random(6, &mut rng);
        let back = DensityMatrix::from_json(&r.to_json()).unwrap();
        assert!(back.matrix().max_abs_diff(r.matrix()) < 1e-15);
    }

    #[test]
    fn ghz_symmetrization_and_asymmetry() {
        let p: f64 = 0.3;
        let psi = dense_state_with_boundary(&ghz(p).unwrap(), 6, Some(&ghz_boundary(p).unwrap())).unwrap();
        let rho = reduced_density_matrix(&psi, 2).unwrap();
        let g = spin_flip_group(1).unwrap();
        let sym = symmetrize_exact(&rho, &g, 2).unwrap();
        assert!((sym.matrix()[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!((sym.matrix()[(3, 3)].re - 0.5).abs() < 1e-14);
        let action: Vec<CMatrix> = (0..2).map(|i| g.site_action(i, 2)).collect();
        let blocks = symmetrize_abelian_blocks(&rho, &abelian_irrep_projectors(&g, 4, &action).unwrap()).unwrap();
        assert!(blocks.matrix().max_abs_diff(sym.matrix()) < 1e-12);
        let ds = exact_asymmetry(&rho, &sym, 2).unwrap();
        assert!((ds - (2.0 * 0.58f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn two_spin_su2_decomposition() {
        let su2 = LieGroupRep::su2_spin_half(Default::default());
        let dec = isotypic_decomposition_lie(&lifted_generators(&su2, 2), 5).unwrap();
        let mut dims: Vec<(usize, usize)> = dec.sectors.iter().map(|s| (s.dim_irrep, s.copies.len())).collect();
        dims.sort();
        assert_eq!(dims, vec![(1, 1), (3, 1)]);
        let up = DensityMatrix::new(CMatrix::from_real_diag(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        let sym = symmetrize_nonabelian_basis(&up, &dec).unwrap();
        // triplet block (1/3)·1₃, singlet block empty
        let (vals, _) = eigh(sym.matrix()).unwrap();
        assert!(vals[0].abs() < 1e-12);
        for v in &vals[1..] {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        block_structure_check(&sym, Some(&up), &dec).unwrap();
    }

    #[test]
    fn corrupted_state_fails_structure_check() {
        let su2 = LieGroupRep::su2_spin_half(Default::default());
        let dec = isotypic_decomposition_lie(&lifted_generators(&su2, 2), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = DensityMatrix::random(4, &mut rng);
        assert!(matches!(block_structure_check(&rho, None, &dec), Err(Error::StructureViolation { .. })));
        let id = DensityMatrix::new(CMatrix::identity(4).scale_real(0.25)).unwrap();
        block_structure_check(&id, Some(&id), &dec).unwrap();
    }

    #[test]
    fn heisenberg_ring_energy() {
        // L = 4 Heisenberg ring in Pauli units: E₀ = −8
        assert!((xxz_ground_energy_density(4, 1.0).unwrap() + 2.0).abs() < 1e-10);
        // Ising limit: Néel energy −Δ per site plus O(1/Δ) corrections
        let e = xxz_ground_energy_density(12, 50.0).unwrap();
        assert!((e + 50.0 + 1.0 / 50.0).abs() < 1e-3);
    }
}
