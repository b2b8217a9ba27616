//! Charged moments `Tr(ρ_A u₁ ρ_A u₂ … ρ_A u_n)`, Rényi entropies and the
//! Rényi entanglement asymmetry.
//!
//! With `T_j = R_{u_j}^ℓ` and the environment `E` (the fixed-point projector
//! `Π` in infinite volume, `R^{L−ℓ}/Tr R^L` on a ring of `L` sites), every
//! moment is the ring contraction
//!
//! ```text
//! Tr(K X₁ K X₂ … K X_n),   X_j[(a',b'),(a,b)] = T_j[(a,a'),(b,b')],
//!                          K[(a,b),(a',b')]   = E[(b,b'),(a,a')],
//! ```
//!
//! which is the replica permutation of the bra bond indices written as an
//! index rule. Only `D²×D²` matrices are ever formed.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_leading, eigh, matrix_power, sorted_eigenvalues, CMatrix, DENSE_CAP};
use crate::mps::{
    build_charged_transfer, build_dressed_transfer, build_transfer_operator, clustering_report, MpsTensor,
    TransferOperator, CLUSTERING_TOL,
};
use crate::symmetry::{
    detect_invariant_algebra, haar_nodes_u1, haar_sample_su2, FiniteGroupRep, LieGroupRep, LieKind, QuadratureScheme,
    SubgroupKind,
};

/// Allowed deviation of `u₁⋯u_n` from the identity.
pub const PRODUCT_TOL: f64 = 1e-8;
/// Moment ratios below this are treated as exact zeros.
pub const UNDERFLOW: f64 = 1e-300;
/// Default cap on `|G|^{n−1}` for exact group sums.
pub const DEFAULT_TERM_CAP: u128 = 1_000_000;
/// Number of batches used for Monte Carlo standard errors.
pub const MC_BATCHES: usize = 20;
/// Convergence target of the adaptive U(1) quadrature.
pub const QUADRATURE_ABS_TOL: f64 = 1e-13;
pub const QUADRATURE_REL_TOL: f64 = 1e-10;
const MAX_NODES: usize = 1 << 18;

/// Subsystem length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ell {
    Finite(usize),
    Infinite,
}

/// Where the complement of the subsystem lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    InfiniteVolume,
    /// Periodic ring of `L` sites.
    FiniteL(usize),
}

/// Cyclic replica permutation: the bra bond index of replica `j` is routed to
/// replica `j + 1 (mod n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Permutation {
    n: usize,
}

impl Permutation {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::BadParam(format!("replica count {n} < 2")));
        }
        Ok(Self { n })
    }

    pub fn n_replicas(&self) -> usize {
        self.n
    }

    pub fn target(&self, j: usize) -> usize {
        (j + 1) % self.n
    }

    pub fn source(&self, j: usize) -> usize {
        (j + self.n - 1) % self.n
    }

    /// Applies the rule to a list of per-replica labels `n` times over;
    /// returns the labels after `times` applications.
    pub fn apply_to<T: Clone>(&self, labels: &[T], times: usize) -> Vec<T> {
        let mut cur = labels.to_vec();
        for _ in 0..times {
            let mut next = cur.clone();
            for (j, l) in cur.iter().enumerate() {
                next[self.target(j)] = l.clone();
            }
            cur = next;
        }
        cur
    }

    /// Explicit `D^{2n}×D^{2n}` permutation matrix on `⊗_j (ket_j ⊗ bra_j)`.
    /// Reference only: production code never builds it.
    pub fn dense(&self, bond: usize) -> CMatrix {
        let n = self.n;
        let slot = bond * bond;
        let dim = slot.pow(n as u32);
        let digits = |mut idx: usize| -> Vec<(usize, usize)> {
            let mut out = vec![(0, 0); n];
            for j in (0..n).rev() {
                let s = idx % slot;
                idx /= slot;
                out[j] = (s / bond, s % bond);
            }
            out
        };
        let compose = |slots: &[(usize, usize)]| slots.iter().fold(0, |acc, &(u, p)| acc * slot + u * bond + p);
        let mut m = CMatrix::zeros(dim, dim);
        for k in 0..dim {
            let src = digits(k);
            // slot j of the image pairs the ket index of replica j+1 with the bra index of replica j
            let img: Vec<(usize, usize)> = (0..n).map(|j| (src[self.target(j)].0, src[j].1)).collect();
            m[(compose(&img), k)] = C64::new(1.0, 0.0);
        }
        m
    }
}

/// `K[(a,b),(a',b')] = E[(b,b'),(a,a')]`.
fn env_to_ring(e: &CMatrix, bond: usize) -> CMatrix {
    let d = bond;
    CMatrix::from_fn(d * d, d * d, |i, j| {
        let (a, b) = (i / d, i % d);
        let (ap, bp) = (j / d, j % d);
        e[(b * d + bp, a * d + ap)]
    })
}

/// `X[(a',b'),(a,b)] = T[(a,a'),(b,b')]`.
fn layer_to_ring(t: &CMatrix, bond: usize) -> CMatrix {
    let d = bond;
    CMatrix::from_fn(d * d, d * d, |i, j| {
        let (ap, bp) = (i / d, i % d);
        let (a, b) = (j / d, j % d);
        t[(a * d + ap, b * d + bp)]
    })
}

/// `Tr((T₁⊗…⊗T_n) P E^{⊗n} P†)` evaluated as a ring of `D²×D²` products.
pub fn permuted_contraction(layers: &[CMatrix], env: &CMatrix, bond: usize) -> C64 {
    let k = env_to_ring(env, bond);
    let mut acc = CMatrix::identity(bond * bond);
    for t in layers {
        acc = acc.matmul(&k).matmul(&layer_to_ring(t, bond));
    }
    acc.trace()
}

/// The same quantity with every tensor product and the permutation built
/// explicitly. Exponential in `n`; reference only.
pub fn permuted_contraction_dense(layers: &[CMatrix], env: &CMatrix, bond: usize) -> Result<C64> {
    let p = Permutation::new(layers.len())?.dense(bond);
    let mut t = layers[0].clone();
    let mut e = env.clone();
    for l in &layers[1..] {
        t = t.kron(l);
        e = e.kron(env);
    }
    Ok(t.matmul(&p).matmul(&e).matmul(&p.adjoint()).trace())
}

fn leading_eigenvalue(m: &CMatrix) -> Result<C64> {
    if m.rows() <= DENSE_CAP {
        Ok(sorted_eigenvalues(m)?[0])
    } else {
        Ok(eig_leading(m, 1, 1e-12)?[0].value)
    }
}

/// `R_u^ℓ = exp(log_scale) · matrix`, kept scaled so large `ℓ` cannot underflow.
#[derive(Clone, Debug)]
pub struct Layer {
    pub matrix: CMatrix,
    pub log_scale: f64,
    /// Leading eigenvalue of the unpowered charged transfer operator.
    pub leading: C64,
}

/// Powers of one charged transfer operator along an ascending `ℓ` sequence.
struct LayerSeries {
    base: CMatrix,
    log_rho: f64,
    leading: C64,
    ell: usize,
    power: CMatrix,
}

impl LayerSeries {
    fn new(r_g: &CMatrix) -> Result<Self> {
        let leading = leading_eigenvalue(r_g)?;
        let rho = leading.norm();
        let (base, log_rho) = if rho > 1e-200 { (r_g.scale_real(1.0 / rho), rho.ln()) } else { (r_g.clone(), 0.0) };
        let power = CMatrix::identity(r_g.rows());
        Ok(Self { base, log_rho, leading, ell: 0, power })
    }

    fn at(&mut self, ell: usize) -> Layer {
        if ell < self.ell {
            self.ell = 0;
            self.power = CMatrix::identity(self.base.rows());
        }
        if ell > self.ell {
            self.power = self.power.matmul(&matrix_power(&self.base, (ell - self.ell) as u64));
            self.ell = ell;
        }
        Layer { matrix: self.power.clone(), log_scale: self.log_rho * ell as f64, leading: self.leading }
    }
}

/// Prepared transfer data of a normalized tensor for one evaluation mode.
pub struct MomentEngine {
    tensor: MpsTensor,
    transfer: TransferOperator,
    mode: Mode,
    projector: Option<CMatrix>,
}

impl MomentEngine {
    /// Requires a normalized tensor; infinite volume also requires clustering.
    pub fn new(t: &MpsTensor, mode: Mode) -> Result<Self> {
        let transfer = build_transfer_operator(t);
        let rep = clustering_report(&transfer, CLUSTERING_TOL)?;
        if (rep.leading_modulus - 1.0).abs() > 1e-8 {
            return Err(Error::BadParam(format!("tensor is not normalized (spectral radius {})", rep.leading_modulus)));
        }
        let projector = match mode {
            Mode::InfiniteVolume => {
                if !rep.is_clustering {
                    return Err(Error::NonClustering(rep.gap_ratio));
                }
                Some(transfer.fixed_point_projector()?.projector())
            }
            Mode::FiniteL(0) => return Err(Error::BadParam("ring length must be positive".into())),
            Mode::FiniteL(_) => None,
        };
        Ok(Self { tensor: t.clone(), transfer, mode, projector })
    }

    pub fn tensor(&self) -> &MpsTensor {
        &self.tensor
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn bond(&self) -> usize {
        self.tensor.bond_dim()
    }

    /// Environment of the complement, normalized so that `Tr ρ_A = 1`.
    pub fn environment(&self, ell: usize) -> Result<CMatrix> {
        match self.mode {
            Mode::InfiniteVolume => Ok(self.projector.clone().expect("set for infinite volume")),
            Mode::FiniteL(l) => {
                if ell > l {
                    return Err(Error::BadParam(format!("subsystem {ell} longer than ring {l}")));
                }
                let r = self.transfer.matrix();
                let norm = matrix_power(r, l as u64).trace();
                if norm.norm() < UNDERFLOW {
                    return Err(Error::ZeroTensor(norm.norm()));
                }
                Ok(matrix_power(r, (l - ell) as u64).scale(C64::new(1.0, 0.0) / norm))
            }
        }
    }

    pub fn layer(&self, u: &CMatrix, ell: usize) -> Result<Layer> {
        Ok(LayerSeries::new(build_charged_transfer(&self.tensor, u)?.matrix())?.at(ell))
    }

    /// `Σ` of the ring contraction for the given layers: returns the mantissa
    /// and the log scale separately.
    pub fn contract(&self, layers: &[&Layer], env: &CMatrix) -> (C64, f64) {
        let mats: Vec<CMatrix> = layers.iter().map(|l| l.matrix.clone()).collect();
        let scale = layers.iter().map(|l| l.log_scale).sum();
        (permuted_contraction(&mats, env, self.bond()), scale)
    }

    /// `Tr ρ_Aⁿ`.
    pub fn purity(&self, n: usize, ell: Ell) -> Result<f64> {
        Permutation::new(n)?;
        match ell {
            Ell::Infinite => {
                let p = match self.mode {
                    Mode::InfiniteVolume => self.projector.clone().expect("set for infinite volume"),
                    Mode::FiniteL(_) => return Err(Error::BadParam("infinite subsystem on a finite ring".into())),
                };
                let layers = vec![p.clone(); n];
                Ok(permuted_contraction(&layers, &p, self.bond()).re)
            }
            Ell::Finite(ell) => {
                let env = self.environment(ell)?;
                let layers = vec![matrix_power(self.transfer.matrix(), ell as u64); n];
                Ok(permuted_contraction(&layers, &env, self.bond()).re)
            }
        }
    }

    pub fn charged_moment(&self, us: &[CMatrix], ell: usize) -> Result<ChargedMomentResult> {
        check_product(us)?;
        let env = self.environment(ell)?;
        let layers: Vec<Layer> = us.iter().map(|u| self.layer(u, ell)).collect::<Result<_>>()?;
        let refs: Vec<&Layer> = layers.iter().collect();
        let (mantissa, scale) = self.contract(&refs, &env);
        let dominant_moduli: Vec<f64> = layers.iter().map(|l| l.leading.norm()).collect();
        let phase_prediction = dominant_moduli.iter().all(|&m| m >= 1.0 - 1e-8).then(|| {
            let phase: f64 = layers.iter().map(|l| l.leading.arg()).sum();
            C64::from_polar(1.0, phase * ell as f64)
        });
        Ok(ChargedMomentResult {
            value: mantissa * scale.exp(),
            n: us.len(),
            ell,
            mode: self.mode,
            dominant_moduli,
            phase_prediction,
        })
    }
}

fn check_product(us: &[CMatrix]) -> Result<()> {
    Permutation::new(us.len())?;
    let d = us[0].rows();
    let mut p = CMatrix::identity(d);
    for u in us {
        if u.rows() != d || u.cols() != d {
            return Err(Error::Shape("insertions must share one square size".into()));
        }
        p = p.matmul(u);
    }
    let defect = p.max_abs_diff(&CMatrix::identity(d));
    if defect > PRODUCT_TOL {
        return Err(Error::ProductNotIdentity(defect));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChargedMomentResult {
    pub value: C64,
    pub n: usize,
    pub ell: usize,
    pub mode: Mode,
    /// Spectral radius of each `R_{u_j}`.
    pub dominant_moduli: Vec<f64>,
    /// `exp(i ℓ Σ_j φ_j)` when every insertion is symmetric.
    pub phase_prediction: Option<C64>,
}

/// `Tr(ρ_A u₁ ρ_A u₂ … ρ_A u_n)` with `u₁⋯u_n = 1`.
pub fn charged_moment(t: &MpsTensor, us: &[CMatrix], ell: usize, mode: Mode) -> Result<ChargedMomentResult> {
    MomentEngine::new(t, mode)?.charged_moment(us, ell)
}

/// Infinite-volume Rényi entropy `Sₙ = log Tr ρ_Aⁿ / (1 − n)`.
pub fn renyi_entropy(t: &MpsTensor, n: usize, ell: Ell) -> Result<f64> {
    let p = MomentEngine::new(t, Mode::InfiniteVolume)?.purity(n, ell)?;
    Ok(p.ln() / (1.0 - n as f64))
}

/// Charged free-energy density `F = −Σ_j log λ₁(R_{u_j})`, the decay rate in
/// `ℓ` of the normalized moment.
pub fn free_energy_density(t: &MpsTensor, us: &[CMatrix]) -> Result<C64> {
    check_product(us)?;
    MomentEngine::new(t, Mode::InfiniteVolume)?;
    us.iter().map(|u| Ok(-leading_eigenvalue(build_charged_transfer(t, u)?.matrix())?.ln())).sum()
}

/// Order-independent-of-threads summation.
pub fn pairwise_sum(v: &[C64]) -> C64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn ratio(mantissa: C64, log_scale: f64, purity_mantissa: f64) -> C64 {
    let f = mantissa / purity_mantissa * log_scale.exp();
    if f.norm() < UNDERFLOW {
        C64::new(0.0, 0.0)
    } else {
        f
    }
}

/// Serializable result of an asymmetry computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryReport {
    pub n: usize,
    pub group: serde_json::Value,
    pub ell_grid: Vec<usize>,
    pub delta_s: Vec<f64>,
    #[serde(default)]
    pub mc_std_err: Option<Vec<f64>>,
    #[serde(default)]
    pub fit: Option<FitResult>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Final node count per point for adaptive quadrature.
    #[serde(default)]
    pub quadrature_nodes: Option<Vec<usize>>,
}

impl AsymmetryReport {
    pub const CSV_HEADER: &'static str = "ell,n,delta_s,mc_std_err";

    /// CSV with header, `ℓ` ascending, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(usize, f64, Option<f64>)> = self
            .ell_grid
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, self.delta_s[i], self.mc_std_err.as_ref().map(|e| e[i])))
            .collect();
        rows.sort_by_key(|r| r.0);
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (ell, ds, err) in rows {
            let err = err.map(|e| format!("{e:.16e}")).unwrap_or_default();
            out.push_str(&format!("{ell},{},{ds:.16e},{err}\n", self.n));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// Options for the exact finite-group sum.
#[derive(Clone, Debug)]
pub struct FiniteSumOptions {
    pub term_cap: u128,
    pub mode: Mode,
}

impl Default for FiniteSumOptions {
    fn default() -> Self {
        Self { term_cap: DEFAULT_TERM_CAP, mode: Mode::InfiniteVolume }
    }
}

/// `ΔSₙ(ℓ)` for a finite group by the exact sum over `G^{n−1}`.
pub fn asymmetry_finite_group(
    t: &MpsTensor,
    g: &FiniteGroupRep,
    n: usize,
    ell_grid: &[usize],
) -> Result<AsymmetryReport> {
    asymmetry_finite_group_with(t, g, n, ell_grid, &FiniteSumOptions::default())
}

pub fn asymmetry_finite_group_with(
    t: &MpsTensor,
    g: &FiniteGroupRep,
    n: usize,
    ell_grid: &[usize],
    opts: &FiniteSumOptions,
) -> Result<AsymmetryReport> {
    Permutation::new(n)?;
    let order = g.order();
    let terms = (order as u128).pow(n as u32 - 1);
    if terms > opts.term_cap {
        return Err(Error::TermCapExceeded { needed: terms, cap: opts.term_cap });
    }
    if g.dim() != t.phys_dim() {
        return Err(Error::Shape(format!("group acts on dimension {}, site has {}", g.dim(), t.phys_dim())));
    }
    let engine = MomentEngine::new(t, opts.mode)?;

    // Each tuple (g₁..g_{n−1}) closes with u_n = (u₁⋯u_{n−1})†; for projective
    // tables u_n is a known element up to a phase c, and R_{cu} = c·R_u.
    let tuples: Vec<(Vec<usize>, usize, C64)> = (0..terms as usize)
        .map(|mut idx| {
            let mut digits = vec![0usize; n - 1];
            for j in (0..n - 1).rev() {
                digits[j] = idx % order;
                idx /= order;
            }
            let mut p = CMatrix::identity(g.dim());
            for &k in &digits {
                p = p.matmul(g.element(k));
            }
            let (last, c) = g
                .identify_up_to_phase(&p.adjoint())
                .ok_or_else(|| Error::ClosureViolation("inverse of a product is not in the group".into()))?;
            Ok((digits, last, c))
        })
        .collect::<Result<_>>()?;

    let mut series: Vec<LayerSeries> = g
        .elements()
        .par_iter()
        .map(|u| LayerSeries::new(build_charged_transfer(t, u)?.matrix()))
        .collect::<Result<_>>()?;

    let mut grid: Vec<(usize, usize)> = ell_grid.iter().copied().enumerate().collect();
    grid.sort_by_key(|&(_, l)| l);
    let mut delta_s = vec![0.0; ell_grid.len()];
    for (slot, ell) in grid {
        let env = engine.environment(ell)?;
        let layers: Vec<Layer> = series.par_iter_mut().map(|s| s.at(ell)).collect();
        let purity = engine.purity(n, Ell::Finite(ell))?;
        let values: Vec<C64> = tuples
            .par_iter()
            .map(|(digits, last, c)| {
                let mut refs: Vec<&Layer> = digits.iter().map(|&k| &layers[k]).collect();
                refs.push(&layers[*last]);
                let (m, s) = engine.contract(&refs, &env);
                ratio(m * c.powu(ell as u32), s, purity)
            })
            .collect();
        let avg = pairwise_sum(&values) / terms as f64;
        delta_s[slot] = log_ratio_to_delta(avg, n)?;
        if n == 2 && delta_s[slot] < -1e-8 {
            log::warn!("negative n=2 asymmetry {} at ell {ell}", delta_s[slot]);
        }
    }
    Ok(AsymmetryReport {
        n,
        group: serde_json::json!({"kind": "finite", "order": order, "projective": g.is_projective()}),
        ell_grid: ell_grid.to_vec(),
        delta_s,
        mc_std_err: None,
        fit: None,
        seed: None,
        tolerances: BTreeMap::from([("product".to_string(), PRODUCT_TOL), ("underflow".to_string(), UNDERFLOW)]),
        quadrature_nodes: None,
    })
}

fn log_ratio_to_delta(avg: C64, n: usize) -> Result<f64> {
    if avg.re <= 0.0 {
        return Err(Error::NonConvergence(format!("symmetrized moment ratio {avg} is not positive")));
    }
    Ok(avg.re.ln() / (1.0 - n as f64))
}

/// Integration points of a Lie group average: `n − 1` insertions each.
enum LiePoints {
    U1(Vec<Vec<f64>>),
    Su2(Vec<Vec<crate::symmetry::Su2Element>>),
}

fn insertions(g: &LieGroupRep, point: LiePointRef<'_>) -> Vec<CMatrix> {
    let mut us: Vec<CMatrix> = match point {
        LiePointRef::U1(angles) => angles.iter().map(|&a| g.exp(&[a])).collect(),
        LiePointRef::Su2(els) => els.iter().map(|e| g.represent(e)).collect(),
    };
    let mut p = CMatrix::identity(g.dim());
    for u in &us {
        p = p.matmul(u);
    }
    us.push(p.adjoint());
    us
}

#[derive(Clone, Copy)]
enum LiePointRef<'a> {
    U1(&'a [f64]),
    Su2(&'a [crate::symmetry::Su2Element]),
}

/// Normalized moment `f = Tr(ρu₁…ρu_n)/Tr ρⁿ` at each point for one `ℓ`.
fn lie_integrand(engine: &MomentEngine, g: &LieGroupRep, points: &LiePoints, ell: usize, n: usize) -> Result<Vec<C64>> {
    let env = engine.environment(ell)?;
    let purity = engine.purity(n, Ell::Finite(ell))?;
    let eval = |p: LiePointRef<'_>| -> Result<C64> {
        let us = insertions(g, p);
        let layers: Vec<Layer> = us
            .iter()
            .map(|u| Ok(LayerSeries::new(build_dressed_transfer(engine.tensor(), u).matrix())?.at(ell)))
            .collect::<Result<_>>()?;
        let refs: Vec<&Layer> = layers.iter().collect();
        let (m, s) = engine.contract(&refs, &env);
        Ok(ratio(m, s, purity))
    };
    match points {
        LiePoints::U1(v) => v.par_iter().map(|a| eval(LiePointRef::U1(a))).collect(),
        LiePoints::Su2(v) => v.par_iter().map(|e| eval(LiePointRef::Su2(e))).collect(),
    }
}

/// Tensor-product equispaced grid with `k` nodes per angle in `dims` angles.
fn u1_grid(k: usize, dims: usize) -> Vec<Vec<f64>> {
    let nodes: Vec<f64> = haar_nodes_u1(k).into_iter().map(|(a, _)| a).collect();
    let mut out = vec![vec![]];
    for _ in 0..dims {
        out = out.into_iter().flat_map(|p| nodes.iter().map(move |&a| [p.clone(), vec![a]].concat())).collect();
    }
    out
}

/// `ΔSₙ(ℓ)` for U(1) or SU(2) by Haar quadrature or Monte Carlo.
///
/// U(1) with at most two integration angles uses the equispaced rule,
/// doubling the node count from `quadrature.nodes` until two successive
/// estimates agree to `1e-13 + 1e-10·|I|` (the integrand sharpens like
/// `ℓ^{-1/2}`). Everything else is sampled, with a mandatory seed and
/// batch-means standard errors.
pub fn asymmetry_lie_group(t: &MpsTensor, g: &LieGroupRep, n: usize, ell_grid: &[usize]) -> Result<AsymmetryReport> {
    asymmetry_lie_group_with(t, g, n, ell_grid, Mode::InfiniteVolume)
}

pub fn asymmetry_lie_group_with(
    t: &MpsTensor,
    g: &LieGroupRep,
    n: usize,
    ell_grid: &[usize],
    mode: Mode,
) -> Result<AsymmetryReport> {
    Permutation::new(n)?;
    if g.dim() != t.phys_dim() {
        return Err(Error::Shape(format!("group acts on dimension {}, site has {}", g.dim(), t.phys_dim())));
    }
    let engine = MomentEngine::new(t, mode)?;
    let q = &g.quadrature;
    let dims = (n - 1) * g.dim_g();
    let deterministic = g.kind() == LieKind::U1 && dims <= 2 && q.scheme == QuadratureScheme::Equispaced;
    let mut delta_s = Vec::with_capacity(ell_grid.len());
    let mut report = AsymmetryReport {
        n,
        group: serde_json::json!({"kind": match g.kind() { LieKind::U1 => "u1", LieKind::Su2 => "su2" }, "dim": g.dim()}),
        ell_grid: ell_grid.to_vec(),
        delta_s: vec![],
        mc_std_err: None,
        fit: None,
        seed: None,
        tolerances: BTreeMap::new(),
        quadrature_nodes: None,
    };
    if deterministic {
        let mut nodes_used = Vec::with_capacity(ell_grid.len());
        for &ell in ell_grid {
            let (integral, k) = adaptive_u1(&engine, g, ell, n, q.nodes.max(2))?;
            delta_s.push(log_ratio_to_delta(integral, n)?);
            nodes_used.push(k);
        }
        report.quadrature_nodes = Some(nodes_used);
        report.tolerances.insert("quadrature_abs".into(), QUADRATURE_ABS_TOL);
        report.tolerances.insert("quadrature_rel".into(), QUADRATURE_REL_TOL);
    } else {
        let seed = q.seed.ok_or_else(|| Error::BadParam("Monte Carlo integration needs an explicit seed".into()))?;
        let samples = q.samples;
        if samples < MC_BATCHES {
            return Err(Error::BadParam(format!("need at least {MC_BATCHES} samples")));
        }
        let points = match g.kind() {
            LieKind::Su2 => {
                let flat = haar_sample_su2(samples * (n - 1), seed);
                LiePoints::Su2(flat.chunks(n - 1).map(|c| c.to_vec()).collect())
            }
            LieKind::U1 => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let tau = 2.0 * std::f64::consts::PI;
                LiePoints::U1((0..samples).map(|_| (0..n - 1).map(|_| rng.random::<f64>() * tau).collect()).collect())
            }
        };
        let mut errs = Vec::with_capacity(ell_grid.len());
        for &ell in ell_grid {
            let values = lie_integrand(&engine, g, &points, ell, n)?;
            let (mean, se) = batch_means(&values);
            if se > 0.1 * mean.abs() {
                return Err(Error::McVarianceTooLarge { value: mean, std_err: se });
            }
            delta_s.push(log_ratio_to_delta(C64::new(mean, 0.0), n)?);
            errs.push(se / (mean * (n as f64 - 1.0)));
        }
        report.mc_std_err = Some(errs);
        report.seed = Some(seed);
        report.tolerances.insert("mc_relative_error_cap".into(), 0.1);
    }
    report.delta_s = delta_s;
    Ok(report)
}

fn adaptive_u1(engine: &MomentEngine, g: &LieGroupRep, ell: usize, n: usize, k0: usize) -> Result<(C64, usize)> {
    let dims = n - 1;
    let integrate = |k: usize| -> Result<C64> {
        let pts = LiePoints::U1(u1_grid(k, dims));
        let vals = lie_integrand(engine, g, &pts, ell, n)?;
        Ok(pairwise_sum(&vals) / vals.len() as f64)
    };
    let mut k = k0;
    let mut prev = integrate(k)?;
    loop {
        if k * 2 > MAX_NODES {
            return Err(Error::NonConvergence(format!("U(1) quadrature unresolved at {k} nodes, ell {ell}")));
        }
        let next = integrate(2 * k)?;
        k *= 2;
        if (next - prev).norm() <= QUADRATURE_ABS_TOL + QUADRATURE_REL_TOL * next.norm() {
            return Ok((next, k));
        }
        prev = next;
    }
}

/// Mean of the real parts and its batch-means standard error.
pub fn batch_means(values: &[C64]) -> (f64, f64) {
    let total = pairwise_sum(values).re;
    let mean = total / values.len() as f64;
    let size = values.len() / MC_BATCHES;
    let batches: Vec<f64> = (0..MC_BATCHES)
        .map(|b| {
            let end = if b + 1 == MC_BATCHES { values.len() } else { (b + 1) * size };
            let chunk = &values[b * size..end];
            pairwise_sum(chunk).re / chunk.len() as f64
        })
        .collect();
    let var = batches.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (MC_BATCHES as f64 - 1.0);
    (mean, (var / MC_BATCHES as f64).sqrt())
}

/// Second-order structure of `F` around a symmetric point.
#[derive(Clone, Debug)]
pub struct HessianReport {
    /// Richardson-extrapolated Hessian of `Re F` in coset coordinates.
    pub matrix: CMatrix,
    pub eigenvalues: Vec<f64>,
    pub positive_definite: bool,
    /// Norm of the central-difference gradient of `F` (complex).
    pub gradient_norm: f64,
    /// `max |H(h/2) − H(h)| / max |H|`.
    pub step_halving_change: f64,
    /// Orthonormal coset directions in generator coordinates.
    pub coset_basis: Vec<Vec<f64>>,
}

fn coset_basis(h_basis: &[Vec<f64>], dim_g: usize) -> Vec<Vec<f64>> {
    let mut accepted: Vec<Vec<f64>> = h_basis.to_vec();
    let mut out = Vec::new();
    for k in 0..dim_g {
        let mut v: Vec<f64> = (0..dim_g).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
        for w in &accepted {
            let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(w) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
            accepted.push(v.clone());
            out.push(v);
        }
    }
    out
}

/// Finite-difference Hessian of `F(g₁,…,g_{n−1})` at `g_j = h`, moved along
/// `g_j = h·exp(x_j·X)` with `x_j` in the complement of `𝔥`.
pub fn hessian_at_subgroup(
    t: &MpsTensor,
    g: &LieGroupRep,
    h_point: &CMatrix,
    n: usize,
    step: f64,
) -> Result<HessianReport> {
    Permutation::new(n)?;
    let info = detect_invariant_algebra(t, g)?;
    let SubgroupKind::Lie { basis } = &info.kind else { unreachable!() };
    let radius = build_charged_transfer(t, h_point)?.spectral_radius()?;
    if radius < 1.0 - 1e-8 {
        return Err(Error::BadParam(format!("h is not symmetric (spectral radius {radius})")));
    }
    let cos = coset_basis(basis, g.dim_g());
    let c = cos.len();
    let m = (n - 1) * c;
    let f = |x: &[f64]| -> Result<C64> {
        let mut us = Vec::with_capacity(n);
        let mut p = CMatrix::identity(g.dim());
        for j in 0..n - 1 {
            let mut coeffs = vec![0.0; g.dim_g()];
            for (k, w) in cos.iter().enumerate() {
                for (a, wa) in w.iter().enumerate() {
                    coeffs[a] += x[j * c + k] * wa;
                }
            }
            let u = h_point.matmul(&g.exp(&coeffs));
            p = p.matmul(&u);
            us.push(u);
        }
        us.push(p.adjoint());
        free_energy_density(t, &us)
    };
    let hessian = |h: f64| -> Result<CMatrix> {
        let mut out = CMatrix::zeros(m, m);
        let f0 = f(&vec![0.0; m])?.re;
        for a in 0..m {
            let mut xp = vec![0.0; m];
            xp[a] = h;
            let mut xm = vec![0.0; m];
            xm[a] = -h;
            out[(a, a)] = C64::new((f(&xp)?.re - 2.0 * f0 + f(&xm)?.re) / (h * h), 0.0);
            for b in 0..a {
                let mut val = 0.0;
                for (sa, sb, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                    let mut x = vec![0.0; m];
                    x[a] = sa * h;
                    x[b] = sb * h;
                    val += sign * f(&x)?.re;
                }
                let v = C64::new(val / (4.0 * h * h), 0.0);
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
        Ok(out)
    };
    let coarse = hessian(step)?;
    let fine = hessian(step / 2.0)?;
    let matrix = (&fine.scale_real(4.0) - &coarse).scale_real(1.0 / 3.0);
    let scale = matrix.max_abs().max(f64::MIN_POSITIVE);
    let step_halving_change = if m == 0 { 0.0 } else { fine.max_abs_diff(&coarse) / scale };
    let mut grad_sq = 0.0;
    for a in 0..m {
        let mut xp = vec![0.0; m];
        xp[a] = step;
        let mut xm = vec![0.0; m];
        xm[a] = -step;
        grad_sq += ((f(&xp)? - f(&xm)?) / (2.0 * step)).norm_sqr();
    }
    let eigenvalues = if m == 0 { vec![] } else { eigh(&matrix)?.0 };
    let positive_definite = eigenvalues.iter().all(|&e| e > 0.0);
    if !positive_definite {
        log::warn!("Hessian at the symmetric point is not positive definite: {eigenvalues:?}");
    }
    Ok(HessianReport {
        matrix,
        eigenvalues,
        positive_definite,
        gradient_norm: grad_sq.sqrt(),
        step_halving_change,
        coset_basis: cos,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    ExponentialToConstant,
    LogSlope,
}

/// Fitted parameters; fields not used by the model are absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub constant: Option<f64>,
    pub amplitude: Option<f64>,
    pub rate: Option<f64>,
    pub slope: Option<f64>,
    pub residual_rms: f64,
    pub points: usize,
}

/// Minimum number of points accepted by the fits.
pub const MIN_FIT_POINTS: usize = 6;

fn check_fit_input(xs: &[f64], ys: &[f64], min: usize) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::Shape("x and y lengths differ".into()));
    }
    if xs.len() < min {
        return Err(Error::FitIllConditioned(format!("{} points, need at least {min}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::FitIllConditioned("non-finite data".into()));
    }
    Ok(())
}

/// Least squares `y = m·x + c`; returns `(m, c, rms)`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::FitIllConditioned("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let m = sxy / sxx;
    let c = my - m * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - m * x - c).powi(2)).sum::<f64>() / k).sqrt();
    Ok((m, c, rms))
}

/// `y = m·log ℓ + c` over all given points.
pub fn log_slope_fit(ells: &[f64], ys: &[f64]) -> Result<FitResult> {
    check_fit_input(ells, ys, 2)?;
    if ells.iter().any(|&l| l <= 0.0) {
        return Err(Error::FitIllConditioned("log of a non-positive length".into()));
    }
    let logs: Vec<f64> = ells.iter().map(|l| l.ln()).collect();
    let (m, c, rms) = linear_fit(&logs, ys)?;
    Ok(FitResult {
        model: FitModel::LogSlope,
        constant: Some(c),
        amplitude: None,
        rate: None,
        slope: Some(m),
        residual_rms: rms,
        points: ells.len(),
    })
}

/// `y = m·log ℓ + c` over the last half of the grid (by `ℓ`).
pub fn fit_log_slope(ells: &[f64], ys: &[f64]) -> Result<FitResult> {
    check_fit_input(ells, ys, MIN_FIT_POINTS)?;
    let mut pts: Vec<(f64, f64)> = ells.iter().copied().zip(ys.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tail = &pts[pts.len() / 2..];
    let (x, y): (Vec<f64>, Vec<f64>) = tail.iter().copied().unzip();
    log_slope_fit(&x, &y)
}

/// `y = c − b·r^ℓ` with `0 < r < 1`, by variable projection: for each `r`
/// the pair `(c, b)` is linear; `r` minimizes the residual.
pub fn fit_exponential_to_constant(ells: &[f64], ys: &[f64]) -> Result<FitResult> {
    check_fit_input(ells, ys, MIN_FIT_POINTS)?;
    let x0 = ells.iter().copied().fold(f64::INFINITY, f64::min);
    // shifting ℓ keeps r^ℓ representable without changing the model
    let xs: Vec<f64> = ells.iter().map(|l| l - x0).collect();
    let solve = |r: f64| -> Option<(f64, f64, f64)> {
        let basis: Vec<f64> = xs.iter().map(|&x| -(r.powf(x))).collect();
        let (b, c, rms) = linear_fit(&basis, ys).ok()?;
        Some((c, b, rms))
    };
    let rss = |r: f64| solve(r).map_or(f64::INFINITY, |s| s.2);
    let grid: Vec<f64> = (1..400).map(|i| i as f64 / 400.0).collect();
    let (mut best, _) =
        grid.iter().map(|&r| (r, rss(r))).min_by(|a, b| a.1.total_cmp(&b.1)).expect("grid is non-empty");
    let (mut lo, mut hi) = ((best - 1.0 / 400.0).max(1e-9), (best + 1.0 / 400.0).min(1.0 - 1e-12));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if rss(a) < rss(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    best = 0.5 * (lo + hi);
    let (c, b, rms) = solve(best).ok_or_else(|| Error::FitIllConditioned("exponential model is degenerate".into()))?;
    Ok(FitResult {
        model: FitModel::ExponentialToConstant,
        constant: Some(c),
        amplitude: Some(b * best.powf(-x0)),
        rate: Some(best),
        slope: None,
        residual_rms: rms,
        points: ells.len(),
    })
}

/// Fits the approach of `Tr ρ_Aⁿ(ℓ)` to its limit by linear prediction on
/// consecutive differences, and checks the fitted decay rate against the
/// subleading transfer eigenvalue `|λ₂|` (2% tolerance).
pub fn subleading_correction_fit(t: &MpsTensor, n: usize, ell_grid: &[usize]) -> Result<FitResult> {
    if ell_grid.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::BadParam("subleading fit needs consecutive lengths".into()));
    }
    let engine = MomentEngine::new(t, Mode::InfiniteVolume)?;
    let r = build_transfer_operator(t);
    let expected = if r.dim() > 1 { r.leading_pairs()?[1].value.norm() } else { 0.0 };
    let ys: Vec<f64> = ell_grid.iter().map(|&l| engine.purity(n, Ell::Finite(l))).collect::<Result<_>>()?;
    let fit = fit_geometric_corrections(ell_grid, &ys)?;
    let fitted = fit.rate.expect("set by the geometric fit");
    if (fitted - expected).abs() > 0.02 * expected {
        return Err(Error::RateMismatch { fitted, expected });
    }
    Ok(fit)
}

/// Decay rate of `y(ℓ) − y(∞)` from consecutive samples. Differences below
/// the noise floor are dropped; order-two prediction is used when a single
/// geometric mode leaves a relative residual above `1e-3`.
pub fn fit_geometric_corrections(ells: &[usize], ys: &[f64]) -> Result<FitResult> {
    let scale = ys.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(1e-300);
    let floor = 1e-11 * scale;
    let diffs: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).take_while(|d| d.abs() > floor).collect();
    if diffs.len() < 3 {
        return Err(Error::FitIllConditioned(format!(
            "only {} differences above the noise floor {floor:e}",
            diffs.len()
        )));
    }
    let num: f64 = diffs.windows(2).map(|w| w[1] * w[0]).sum();
    let den: f64 = diffs[..diffs.len() - 1].iter().map(|d| d * d).sum();
    let r1 = num / den;
    let resid1 = relative_residual(&diffs, |w| r1 * w[0], 1);
    let (rate, resid) = if resid1 > 1e-3 && diffs.len() >= 5 {
        // Δ_{k+2} = a₁Δ_{k+1} + a₂Δ_k
        let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for w in diffs.windows(3) {
            s11 += w[1] * w[1];
            s12 += w[1] * w[0];
            s22 += w[0] * w[0];
            b1 += w[2] * w[1];
            b2 += w[2] * w[0];
        }
        let det = s11 * s22 - s12 * s12;
        if det.abs() <= 1e-300 {
            (r1.abs(), resid1)
        } else {
            let a1 = (b1 * s22 - b2 * s12) / det;
            let a2 = (s11 * b2 - s12 * b1) / det;
            let disc = C64::new(a1 * a1 + 4.0 * a2, 0.0).sqrt();
            let roots = [(C64::new(a1, 0.0) + disc) / 2.0, (C64::new(a1, 0.0) - disc) / 2.0];
            let rate = roots[0].norm().max(roots[1].norm());
            (rate, relative_residual(&diffs, |w| a1 * w[1] + a2 * w[0], 2))
        }
    } else {
        (r1.abs(), resid1)
    };
    let last = ys[diffs.len()];
    let d_last = diffs[diffs.len() - 1];
    let constant = if r1 < 1.0 { last + d_last * r1 / (1.0 - r1) } else { last };
    let first_ell = ells[0] as f64;
    Ok(FitResult {
        model: FitModel::ExponentialToConstant,
        constant: Some(constant),
        amplitude: Some(diffs[0] / ((r1 - 1.0) * r1.abs().powf(first_ell).max(1e-300))),
        rate: Some(rate),
        slope: None,
        residual_rms: resid,
        points: diffs.len() + 1,
    })
}

fn relative_residual(diffs: &[f64], predict: impl Fn(&[f64]) -> f64, order: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for w in diffs.windows(order + 1) {
        num += (w[order] - predict(w)).powi(2);
        den += w[order].powi(2);
    }
    (num / den.max(1e-300)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::normalize;
    use crate::symmetry::{generate_group, spin_half_y_rotation, y_rotation_group, QuadratureSpec};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{LN_2, PI};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn up() -> MpsTensor {
        MpsTensor::new(2, 1, vec![c(1.0), c(0.0)]).unwrap()
    }

    fn random_normalized(seed: u64, d: usize, bond: usize) -> MpsTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        normalize(&MpsTensor::random(d, bond, &mut rng)).unwrap()
    }

    #[test]
    fn permutation_rule() {
        let p = Permutation::new(3).unwrap();
        assert_eq!(p.apply_to(&['a', 'b', 'c'], 1), vec!['c', 'a', 'b']);
        assert_eq!(p.apply_to(&['a', 'b', 'c'], 3), vec!['a', 'b', 'c']);
        let two = Permutation::new(2).unwrap();
        assert_eq!(two.apply_to(&[1, 2], 1), vec![2, 1]);
        assert!(Permutation::new(1).is_err());
        // dense matrix is a permutation whose n-th power is the identity
        let dense = p.dense(2);
        assert!(matrix_power(&dense, 3).max_abs_diff(&CMatrix::identity(64)) < 1e-15);
        assert!(dense.unitarity_defect() < 1e-15);
    }

    #[test]
    fn contraction_matches_dense_permutation() {
        for (seed, n) in [(1u64, 2usize), (2, 3), (3, 2), (4, 3)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layers: Vec<CMatrix> = (0..n).map(|_| CMatrix::random_gaussian(4, 4, &mut rng)).collect();
            let env = CMatrix::random_gaussian(4, 4, &mut rng);
            let fast = permuted_contraction(&layers, &env, 2);
            let slow = permuted_contraction_dense(&layers, &env, 2).unwrap();
            assert!((fast - slow).norm() < 1e-12 * slow.norm().max(1.0), "{fast} vs {slow}");
        }
    }

    #[test]
    fn ferromagnet_moments() {
        let u = spin_half_y_rotation(PI / 2.0);
        let m = charged_moment(&up(), &[u.clone(), u.adjoint()], 3, Mode::InfiniteVolume).unwrap();
        assert!((m.value - c(0.125)).norm() < 1e-14);
        assert_eq!(m.dominant_moduli.len(), 2);
        assert!(m.phase_prediction.is_none());
        let u = spin_half_y_rotation(PI);
        let m = charged_moment(&up(), &[u.clone(), u.adjoint()], 3, Mode::InfiniteVolume).unwrap();
        assert!(m.value.norm() < 1e-14);
        let bad = charged_moment(&up(), &[u.clone(), u.clone()], 3, Mode::InfiniteVolume);
        assert!(matches!(bad, Err(Error::ProductNotIdentity(_))));
    }

    #[test]
    fn identity_insertions_give_purity() {
        let t = random_normalized(5, 2, 3);
        let id = CMatrix::identity(2);
        for n in [2, 3] {
            let m = charged_moment(&t, &vec![id.clone(); n], 4, Mode::InfiniteVolume).unwrap();
            let s = renyi_entropy(&t, n, Ell::Finite(4)).unwrap();
            assert!((m.value.re.ln() / (1.0 - n as f64) - s).abs() < 1e-12);
            assert!(m.value.im.abs() < 1e-12);
            let p = m.phase_prediction.unwrap();
            assert!((p - c(1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn product_states_have_zero_entropy() {
        assert_eq!(renyi_entropy(&up(), 2, Ell::Infinite).unwrap().abs(), 0.0);
        let plus = MpsTensor::new(2, 1, vec![c(0.6), c(0.8)]).unwrap();
        for n in [2, 3, 4] {
            assert!(renyi_entropy(&plus, n, Ell::Finite(7)).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn finite_entropy_approaches_infinite_limit() {
        let t = random_normalized(11, 2, 2);
        let inf = renyi_entropy(&t, 2, Ell::Infinite).unwrap();
        let big = renyi_entropy(&t, 2, Ell::Finite(200)).unwrap();
        assert!((inf - big).abs() < 1e-10);
    }

    #[test]
    fn engine_rejects_unnormalized_and_nonclustering() {
        let big = MpsTensor::new(2, 1, vec![c(2.0), c(0.0)]).unwrap();
        assert!(matches!(MomentEngine::new(&big, Mode::InfiniteVolume), Err(Error::BadParam(_))));
        let ghz =
            MpsTensor::from_matrices(&[CMatrix::from_real_diag(&[1.0, 0.0]), CMatrix::from_real_diag(&[0.0, 1.0])])
                .unwrap();
        assert!(matches!(MomentEngine::new(&ghz, Mode::InfiniteVolume), Err(Error::NonClustering(_))));
        // a finite ring is fine without clustering
        assert!(MomentEngine::new(&ghz, Mode::FiniteL(6)).is_ok());
    }

    #[test]
    fn ferromagnet_z4_asymmetry() {
        let g = y_rotation_group(1).unwrap();
        let rep = asymmetry_finite_group(&up(), &g, 2, &[1, 2, 40]).unwrap();
        // (1 + 2·2^{-ℓ} + 0)/4 averaged over the four physical rotations
        assert!((rep.delta_s[0] - LN_2).abs() < 1e-12);
        let exact2 = -((1.0 + 2.0 * 0.25) / 4.0f64).ln();
        assert!((rep.delta_s[1] - exact2).abs() < 1e-12);
        assert!((rep.delta_s[2] - 4f64.ln()).abs() < 1e-10);
        // the order-8 group and its quotient agree
        let q = asymmetry_finite_group(&up(), &g.projective_quotient().unwrap(), 2, &[1, 2, 40]).unwrap();
        for (a, b) in rep.delta_s.iter().zip(&q.delta_s) {
            assert!((a - b).abs() < 1e-12);
        }
        // n = 3 uses genuinely three-element products
        let r3 = asymmetry_finite_group(&up(), &g, 3, &[60]).unwrap();
        assert!((r3.delta_s[0] - 4f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn symmetric_state_has_no_asymmetry() {
        let t = random_normalized(3, 2, 2);
        let g = generate_group(&[CMatrix::identity(2).scale_real(-1.0)], 8).unwrap();
        let rep = asymmetry_finite_group(&t, &g, 3, &[1, 5, 9]).unwrap();
        assert!(rep.delta_s.iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn term_cap_is_enforced() {
        let g = y_rotation_group(1).unwrap();
        let opts = FiniteSumOptions { term_cap: 10, ..Default::default() };
        let err = asymmetry_finite_group_with(&up(), &g, 3, &[1], &opts).unwrap_err();
        assert_eq!(err, Error::TermCapExceeded { needed: 64, cap: 10 });
    }

    #[test]
    fn ordering_of_grid_does_not_matter() {
        let t = random_normalized(21, 2, 2);
        let g = y_rotation_group(1).unwrap();
        let a = asymmetry_finite_group(&t, &g, 2, &[3, 1, 2]).unwrap();
        let b = asymmetry_finite_group(&t, &g, 2, &[1, 2, 3]).unwrap();
        assert_eq!(a.delta_s, vec![b.delta_s[2], b.delta_s[0], b.delta_s[1]]);
    }

    #[test]
    fn free_energy_examples() {
        let id = CMatrix::identity(2);
        assert!(free_energy_density(&up(), &[id.clone(), id]).unwrap().norm() < 1e-14);
        let u = spin_half_y_rotation(PI / 2.0);
        let f = free_energy_density(&up(), &[u.clone(), u.adjoint()]).unwrap();
        assert!((f - c(LN_2)).norm() < 1e-12);
    }

    #[test]
    fn u1_quadrature_examples() {
        let z = LieGroupRep::u1_spin_half();
        let rep = asymmetry_lie_group(&up(), &z, 2, &[4, 64]).unwrap();
        assert!(rep.delta_s.iter().all(|d| d.abs() < 1e-12));
        // |+x⟩ under z rotations: ∫ cos(α/2)^{2ℓ} dα/2π = C(2ℓ, ℓ)/4^ℓ
        let plus = MpsTensor::new(2, 1, vec![c(0.5f64.sqrt()), c(0.5f64.sqrt())]).unwrap();
        let rep = asymmetry_lie_group(&plus, &z, 2, &[1, 2, 10]).unwrap();
        for (i, &l) in [1usize, 2, 10].iter().enumerate() {
            let mut binom = 1.0;
            for k in 0..l {
                binom *= (2 * l - k) as f64 / (k + 1) as f64;
            }
            let exact = -(binom / 4f64.powi(l as i32)).ln();
            assert!((rep.delta_s[i] - exact).abs() < 1e-12, "{} vs {exact}", rep.delta_s[i]);
        }
    }

    #[test]
    fn monte_carlo_requires_seed_and_reports_errors() {
        let su2 = LieGroupRep::su2_spin_half(QuadratureSpec::default());
        assert!(matches!(asymmetry_lie_group(&up(), &su2, 2, &[4]), Err(Error::BadParam(_))));
        let seeded = LieGroupRep::su2_spin_half(QuadratureSpec { seed: Some(7), samples: 4000, ..Default::default() });
        let rep = asymmetry_lie_group(&up(), &seeded, 2, &[4]).unwrap();
        // ∫ |⟨↑|g|↑⟩|^{2ℓ} dg = 1/(ℓ+1)
        let err = rep.mc_std_err.as_ref().unwrap()[0];
        assert!((rep.delta_s[0] - 5f64.ln()).abs() < 4.0 * err);
        let again = asymmetry_lie_group(&up(), &seeded, 2, &[4]).unwrap();
        assert_eq!(rep, again);
    }

    #[test]
    fn hessian_of_tilted_state() {
        let plus = MpsTensor::new(2, 1, vec![c(0.5f64.sqrt()), c(0.5f64.sqrt())]).unwrap();
        let z = LieGroupRep::u1_spin_half();
        let h = hessian_at_subgroup(&plus, &z, &CMatrix::identity(2), 2, 1e-3).unwrap();
        // F = −2 log cos(α/2) ≈ α²/4
        assert_eq!(h.matrix.rows(), 1);
        assert!((h.matrix[(0, 0)].re - 0.5).abs() < 1e-6);
        assert!(h.positive_definite);
        assert!(h.gradient_norm < 1e-6);

        let h = hessian_at_subgroup(&up(), &z, &CMatrix::identity(2), 2, 1e-3).unwrap();
        assert_eq!(h.matrix.rows(), 0);
    }

    #[test]
    fn fits_on_synthetic_data() {
        let ells: Vec<f64> = (1..=12).map(|l| l as f64).collect();
        let ys: Vec<f64> = ells.iter().map(|l| 1.3 - 0.7 * 0.6f64.powf(*l)).collect();
        let f = fit_exponential_to_constant(&ells, &ys).unwrap();
        assert!((f.constant.unwrap() - 1.3).abs() < 1e-8);
        assert!((f.rate.unwrap() - 0.6).abs() < 1e-6);
        assert!((f.amplitude.unwrap() - 0.7).abs() < 1e-6);

        let ells: Vec<f64> = (0..10).map(|k| 16.0 * 2f64.powi(k)).collect();
        let ys: Vec<f64> = ells.iter().map(|l| 0.5 * l.ln() + 0.2).collect();
        let f = fit_log_slope(&ells, &ys).unwrap();
        assert!((f.slope.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(f.points, 5);

        let flat = vec![3.0; 10];
        assert!(fit_log_slope(&ells, &flat).unwrap().slope.unwrap().abs() < 1e-10);
        assert!(matches!(fit_log_slope(&ells[..5], &flat[..5]), Err(Error::FitIllConditioned(_))));
    }

    #[test]
    fn geometric_correction_fit() {
        let ells: Vec<usize> = (2..14).collect();
        let ys: Vec<f64> =
            ells.iter().map(|&l| 0.25 + 0.1 * (-0.4f64).powi(l as i32) + 0.02 * 0.1f64.powi(l as i32)).collect();
        let f = fit_geometric_corrections(&ells, &ys).unwrap();
        assert!((f.rate.unwrap() - 0.4).abs() < 1e-3);
        assert!(matches!(subleading_correction_fit(&up(), 2, &[1, 2, 3, 4, 5]), Err(Error::FitIllConditioned(_))));
        assert!(matches!(subleading_correction_fit(&up(), 2, &[1, 3]), Err(Error::BadParam(_))));
    }

    #[test]
    fn csv_layout() {
        let rep = AsymmetryReport {
            n: 2,
            group: serde_json::json!({}),
            ell_grid: vec![3, 1],
            delta_s: vec![0.5, 0.25],
            mc_std_err: None,
            fit: None,
            seed: None,
            tolerances: BTreeMap::new(),
            quadrature_nodes: None,
        };
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "ell,n,delta_s,mc_std_err");
        assert_eq!(lines[1], "1,2,2.5000000000000000e-1,");
        assert_eq!(lines[2], "3,2,5.0000000000000000e-1,");
        let back: AsymmetryReport = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
    }
}
