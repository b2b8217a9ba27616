//! Uniform (translation-invariant) matrix product states and their transfer
//! operators.
//!
//! A site tensor `M` holds `d` matrices `M_s` of size `D×D`. The transfer
//! operator is the `D²×D²` matrix
//!
//! ```text
//! R_{(a,a')(b,b')}   = Σ_s     (M_s)_{ab} · conj(M_s)_{a'b'}
//! R_g_{(a,a')(b,b')} = Σ_{s,s'} (M_s)_{ab} · conj(M_{s'})_{a'b'} · (u_g)_{s's}
//! ```
//!
//! with row index `a·D + a'` and column index `b·D + b'`. The primed (bra)
//! indices always sit on the conjugated factor.

use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_leading, numerical_radius as nr, CMatrix, EigenPair};

/// Unitarity tolerance for charged insertions.
pub const UNITARY_TOL: f64 = 1e-10;

/// Default tolerance on the leading-modulus gap used to decide clustering.
pub const CLUSTERING_TOL: f64 = 1e-8;

/// Site tensor of a uniform MPS, entries indexed `(s, a, b)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MpsTensor {
    d: usize,
    bond: usize,
    data: Vec<C64>,
}

impl MpsTensor {
    pub fn new(d: usize, bond: usize, data: Vec<C64>) -> Result<Self> {
        if d == 0 || bond == 0 {
            return Err(Error::Shape(format!("tensor with d = {d}, D = {bond}")));
        }
        if data.len() != d * bond * bond {
            return Err(Error::Shape(format!("{} entries for d = {d}, D = {bond}", data.len())));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { row: 0, col: 0 });
        }
        Ok(Self { d, bond, data })
    }

    /// Builds the tensor from its `d` physical components.
    pub fn from_matrices(mats: &[CMatrix]) -> Result<Self> {
        let first = mats.first().ok_or_else(|| Error::Shape("no matrices".into()))?;
        let bond = first.rows();
        if mats.iter().any(|m| m.rows() != bond || m.cols() != bond) {
            return Err(Error::Shape("physical components must all be DxD".into()));
        }
        let data = mats.iter().flat_map(|m| m.data().iter().copied()).collect();
        Self::new(mats.len(), bond, data)
    }

    /// Entries i.i.d. standard complex Gaussian (not normalized).
    pub fn random<R: Rng + ?Sized>(d: usize, bond: usize, rng: &mut R) -> Self {
        let g = CMatrix::random_gaussian(d, bond * bond, rng);
        Self { d, bond, data: g.into_data() }
    }

    #[inline]
    pub fn phys_dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn bond_dim(&self) -> usize {
        self.bond
    }

    #[inline]
    pub fn entry(&self, s: usize, a: usize, b: usize) -> C64 {
        self.data[(s * self.bond + a) * self.bond + b]
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    /// The `D×D` matrix `M_s`.
    pub fn matrix(&self, s: usize) -> CMatrix {
        let dd = self.bond * self.bond;
        CMatrix::new(self.bond, self.bond, self.data[s * dd..(s + 1) * dd].to_vec())
            .expect("entries are finite by construction")
    }

    pub fn matrices(&self) -> Vec<CMatrix> {
        (0..self.d).map(|s| self.matrix(s)).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { d: self.d, bond: self.bond, data: self.data.iter().map(|z| z * factor).collect() }
    }

    /// Applies a `d×d` matrix on the physical leg: `M'_s = Σ_t w_{st} M_t`.
    pub fn act_physical(&self, w: &CMatrix) -> Result<Self> {
        if w.rows() != self.d || w.cols() != self.d {
            return Err(Error::Shape("physical operator has the wrong size".into()));
        }
        let dd = self.bond * self.bond;
        let mut data = vec![C64::new(0.0, 0.0); self.data.len()];
        for s in 0..self.d {
            for t in 0..self.d {
                let c = w[(s, t)];
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                for k in 0..dd {
                    data[s * dd + k] += c * self.data[t * dd + k];
                }
            }
        }
        Self::new(self.d, self.bond, data)
    }

    pub fn to_json(&self) -> MpsJson {
        let dd = self.bond * self.bond;
        MpsJson {
            d: self.d,
            bond: self.bond,
            data: (0..self.d).map(|s| self.data[s * dd..(s + 1) * dd].iter().map(|z| [z.re, z.im]).collect()).collect(),
        }
    }

    pub fn from_json(j: &MpsJson) -> Result<Self> {
        if j.data.len() != j.d {
            return Err(Error::Shape(format!("{} physical blocks, d = {}", j.data.len(), j.d)));
        }
        let data = j
            .data
            .iter()
            .map(|block| {
                if block.len() == j.bond * j.bond {
                    Ok(block.iter().map(|&[re, im]| C64::new(re, im)))
                } else {
                    Err(Error::Shape(format!("block of {} entries, D = {}", block.len(), j.bond)))
                }
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        Self::new(j.d, j.bond, data)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("plain data serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json(&serde_json::from_str(s)?)
    }
}

/// On-disk form `{"d": .., "D": .., "data": [[[re, im], ...], ...]}`, one
/// inner list per physical index holding the `D×D` block row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpsJson {
    pub d: usize,
    #[serde(rename = "D")]
    pub bond: usize,
    pub data: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransferKind {
    Plain,
    /// Charged by a group element, optionally tagged with its index in a group.
    Charged(Option<usize>),
}

/// A plain or charged transfer operator with lazily cached leading spectrum.
#[derive(Clone, Debug)]
pub struct TransferOperator {
    bond: usize,
    matrix: CMatrix,
    kind: TransferKind,
    spectral_cache: OnceLock<Vec<EigenPair>>,
}

impl TransferOperator {
    pub fn from_matrix(bond: usize, matrix: CMatrix, kind: TransferKind) -> Result<Self> {
        if matrix.rows() != bond * bond || !matrix.is_square() {
            return Err(Error::Shape("transfer operator must be D^2 x D^2".into()));
        }
        Ok(Self { bond, matrix, kind, spectral_cache: OnceLock::new() })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn kind(&self) -> TransferKind {
        self.kind
    }

    pub fn bond_dim(&self) -> usize {
        self.bond
    }

    /// `D²`.
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn with_element_id(mut self, id: usize) -> Self {
        if let TransferKind::Charged(_) = self.kind {
            self.kind = TransferKind::Charged(Some(id));
        }
        self
    }

    /// Up to two leading eigenpairs, computed once.
    pub fn leading_pairs(&self) -> Result<&[EigenPair]> {
        if let Some(c) = self.spectral_cache.get() {
            return Ok(c);
        }
        let pairs = eig_leading(&self.matrix, self.dim().min(2), 1e-12)?;
        Ok(self.spectral_cache.get_or_init(|| pairs))
    }

    /// Leading eigenvalue (largest modulus, ties broken by larger real part).
    pub fn leading_eigenvalue(&self) -> Result<C64> {
        Ok(self.leading_pairs()?[0].value)
    }

    /// Modulus of the largest-modulus eigenvalue.
    pub fn spectral_radius(&self) -> Result<f64> {
        Ok(self.leading_eigenvalue()?.norm())
    }

    /// Lower-bound estimate of `sup |⟨v|R|v⟩| / ⟨v|v⟩`; diagnostic only.
    pub fn numerical_radius(&self, iters: usize) -> f64 {
        nr(&self.matrix, iters, 0)
    }

    /// Ratio of the two largest eigenvalue moduli (zero when `D = 1`).
    pub fn gap_ratio(&self) -> Result<f64> {
        let p = self.leading_pairs()?;
        let lead = p[0].value.norm();
        Ok(match p.get(1) {
            Some(q) if lead > 0.0 => q.value.norm() / lead,
            Some(_) => 1.0,
            None => 0.0,
        })
    }

    /// Leading eigenpair normalized to `left · right = 1`, so `Π = right ⊗ leftᵀ`
    /// is a rank-one idempotent. Fails when the leading modulus is degenerate.
    pub fn fixed_point_projector(&self) -> Result<EigenPair> {
        let gap = self.gap_ratio()?;
        if gap >= 1.0 - CLUSTERING_TOL {
            return Err(Error::DegenerateLeading(gap));
        }
        Ok(self.leading_pairs()?[0].clone())
    }
}

pub fn build_transfer_operator(t: &MpsTensor) -> TransferOperator {
    let dd = t.bond * t.bond;
    let mut r = CMatrix::zeros(dd, dd);
    for s in 0..t.d {
        accumulate_kron(&mut r, t, s, |a, b| t.entry(s, a, b));
    }
    TransferOperator::from_matrix(t.bond, r, TransferKind::Plain).expect("shape is D^2")
}

/// Transfer operator dressed by the unitary `u` on the physical leg.
pub fn build_charged_transfer(t: &MpsTensor, u: &CMatrix) -> Result<TransferOperator> {
    if u.rows() != t.d || u.cols() != t.d {
        return Err(Error::Shape(format!("insertion must be {0}x{0}", t.d)));
    }
    let defect = u.unitarity_defect();
    if defect > UNITARY_TOL {
        return Err(Error::NonUnitary(defect));
    }
    Ok(build_dressed_transfer(t, u))
}

/// Charged transfer for an arbitrary (not necessarily unitary) `d×d` insertion.
pub(crate) fn build_dressed_transfer(t: &MpsTensor, u: &CMatrix) -> TransferOperator {
    let dd = t.bond * t.bond;
    let mut r = CMatrix::zeros(dd, dd);
    for sp in 0..t.d {
        // N_{s'} = Σ_s u_{s's} M_s carries the ket side
        let n: Vec<C64> = (0..dd).map(|k| (0..t.d).map(|s| u[(sp, s)] * t.data[s * dd + k]).sum()).collect();
        accumulate_kron(&mut r, t, sp, |a, b| n[a * t.bond + b]);
    }
    TransferOperator::from_matrix(t.bond, r, TransferKind::Charged(None)).expect("shape is D^2")
}

/// `r += ket ⊗ conj(M_{s'})` in the `(a,a')(b,b')` convention.
fn accumulate_kron(r: &mut CMatrix, t: &MpsTensor, sp: usize, ket: impl Fn(usize, usize) -> C64) {
    let dim = t.bond;
    for a in 0..dim {
        for b in 0..dim {
            let k = ket(a, b);
            if k == C64::new(0.0, 0.0) {
                continue;
            }
            for ap in 0..dim {
                for bp in 0..dim {
                    r[(a * dim + ap, b * dim + bp)] += k * t.entry(sp, ap, bp).conj();
                }
            }
        }
    }
}

/// Rescales `t` so that its transfer operator has spectral radius one.
pub fn normalize(t: &MpsTensor) -> Result<MpsTensor> {
    let rho = build_transfer_operator(t).spectral_radius()?;
    if rho < 1e-14 {
        return Err(Error::ZeroTensor(rho));
    }
    Ok(t.scaled(rho.powf(-0.5)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusteringReport {
    pub leading_modulus: f64,
    pub subleading_modulus: f64,
    /// `subleading_modulus / leading_modulus`.
    pub gap_ratio: f64,
    pub is_clustering: bool,
    /// `-1 / ln(gap_ratio)`, infinite for a closed gap.
    pub correlation_length: f64,
}

pub fn clustering_check(t: &MpsTensor, tol: f64) -> Result<ClusteringReport> {
    let r = build_transfer_operator(t);
    clustering_report(&r, tol)
}

pub fn clustering_report(r: &TransferOperator, tol: f64) -> Result<ClusteringReport> {
    let p = r.leading_pairs()?;
    let leading_modulus = p[0].value.norm();
    let subleading_modulus = p.get(1).map_or(0.0, |q| q.value.norm());
    let gap_ratio = r.gap_ratio()?;
    let is_clustering = gap_ratio < 1.0 - tol;
    let correlation_length = if !is_clustering {
        f64::INFINITY
    } else if gap_ratio == 0.0 {
        0.0
    } else {
        -1.0 / gap_ratio.ln()
    };
    Ok(ClusteringReport { leading_modulus, subleading_modulus, gap_ratio, is_clustering, correlation_length })
}

/// Merges `k` consecutive sites into one with physical dimension `dᵏ`; the
/// physical index is the concatenation `s₁·d^{k-1} + … + s_k`.
pub fn block_sites(t: &MpsTensor, k: usize) -> Result<MpsTensor> {
    if k == 0 {
        return Err(Error::BadParam("block size must be at least 1".into()));
    }
    let mats = t.matrices();
    let mut blocked = mats.clone();
    for _ in 1..k {
        blocked = blocked.iter().flat_map(|p| mats.iter().map(move |m| p.matmul(m))).collect();
    }
    MpsTensor::from_matrices(&blocked)
}
