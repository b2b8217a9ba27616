//! Group representations on the physical leg: finite groups generated by
//! explicit unitaries, U(1) and SU(2) with Haar quadrature and sampling,
//! invariant-subgroup detection and abelian sector projectors.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, exp_anti_hermitian, CMatrix};
use crate::mps::{build_charged_transfer, build_transfer_operator, clustering_report, MpsTensor, CLUSTERING_TOL};

/// Two group elements are the same iff their largest entry difference is below this.
pub const ELEMENT_TOL: f64 = 1e-8;
/// Tolerance on generator unitarity.
pub const GENERATOR_TOL: f64 = 1e-10;
/// Tolerance on Lie generator checks (anti-Hermiticity, commutation relations).
pub const LIE_TOL: f64 = 1e-9;
/// Step used when probing one-parameter subgroups for symmetric directions.
pub const LIE_PROBE_STEP: f64 = 1e-3;
/// Threshold on the quadratic coefficient of the spectral-radius deficit.
pub const LIE_DEFICIT_TOL: f64 = 1e-6;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// A finite group given by its unitary representation matrices.
#[derive(Clone, Debug)]
pub struct FiniteGroupRep {
    elements: Vec<CMatrix>,
    cayley: Vec<Vec<usize>>,
    inverse: Vec<usize>,
    /// Set when elements multiply only up to a global phase.
    projective: bool,
    subgroup_flags: Option<Vec<bool>>,
}

impl FiniteGroupRep {
    /// The one-element group on a `d`-dimensional space.
    pub fn trivial(d: usize) -> Self {
        Self {
            elements: vec![CMatrix::identity(d)],
            cayley: vec![vec![0]],
            inverse: vec![0],
            projective: false,
            subgroup_flags: None,
        }
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    /// Dimension of the represented space.
    pub fn dim(&self) -> usize {
        self.elements[0].rows()
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &CMatrix {
        &self.elements[i]
    }

    pub fn cayley(&self) -> &[Vec<usize>] {
        &self.cayley
    }

    pub fn product(&self, i: usize, j: usize) -> usize {
        self.cayley[i][j]
    }

    pub fn inverse(&self, i: usize) -> usize {
        self.inverse[i]
    }

    pub fn is_projective(&self) -> bool {
        self.projective
    }

    pub fn subgroup_flags(&self) -> Option<&[bool]> {
        self.subgroup_flags.as_deref()
    }

    pub fn with_subgroup(mut self, info: &SubgroupInfo) -> Self {
        if let SubgroupKind::Finite { indices } = &info.kind {
            let mut flags = vec![false; self.order()];
            for &i in indices {
                flags[i] = true;
            }
            self.subgroup_flags = Some(flags);
        }
        self
    }

    pub fn is_abelian(&self) -> bool {
        let n = self.order();
        (0..n).all(|i| (0..i).all(|j| self.cayley[i][j] == self.cayley[j][i]))
    }

    /// Index of the element equal to `m`, with no phase freedom.
    pub fn identify(&self, m: &CMatrix) -> Option<usize> {
        find_exact(&self.elements, m)
    }

    /// Index of an element `e` and unimodular `c` with `m = c·e`.
    pub fn identify_up_to_phase(&self, m: &CMatrix) -> Option<(usize, C64)> {
        self.elements.iter().enumerate().find_map(|(i, e)| phase_relation(m, e).map(|c| (i, c)))
    }

    /// Representation of element `i` on `ell` sites, `u_i^{⊗ell}`.
    pub fn site_action(&self, i: usize, ell: usize) -> CMatrix {
        self.elements[i].kron_power(ell)
    }

    /// Identifies elements that differ by a global phase. Used to obtain the
    /// physical action of a projectively represented group (for instance
    /// quarter-turn rotations of a single spin-1/2, which close into a group
    /// of order 8 containing `-1`). The representative of each class is its
    /// lowest-index member; the result multiplies only up to phases and is
    /// marked projective.
    pub fn projective_quotient(&self) -> Result<Self> {
        let mut reps: Vec<usize> = Vec::new();
        let mut class_of = vec![0usize; self.order()];
        for (i, class) in class_of.iter_mut().enumerate() {
            match reps.iter().position(|&r| phase_relation(&self.elements[i], &self.elements[r]).is_some()) {
                Some(c) => *class = c,
                None => {
                    *class = reps.len();
                    reps.push(i);
                }
            }
        }
        let elements: Vec<CMatrix> = reps.iter().map(|&r| self.elements[r].clone()).collect();
        let cayley = reps.iter().map(|&a| reps.iter().map(|&b| class_of[self.cayley[a][b]]).collect()).collect();
        let inverse = reps.iter().map(|&a| class_of[self.inverse[a]]).collect();
        Ok(Self { elements, cayley, inverse, projective: true, subgroup_flags: None })
    }

    /// Checks the table invariants against the matrices.
    pub fn validate(&self) -> Result<()> {
        let n = self.order();
        if self.elements[0].max_abs_diff(&CMatrix::identity(self.dim())) > GENERATOR_TOL {
            return Err(Error::BadGenerators("element 0 is not the identity".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let p = self.elements[i].matmul(&self.elements[j]);
                let k = self.cayley[i][j];
                let ok = if self.projective {
                    phase_relation(&p, &self.elements[k]).is_some()
                } else {
                    p.max_abs_diff(&self.elements[k]) < GENERATOR_TOL
                };
                if !ok {
                    return Err(Error::BadGenerators(format!("product table wrong at ({i}, {j})")));
                }
            }
            if self.cayley[self.inverse[i]][i] != 0 {
                return Err(Error::BadGenerators(format!("inverse table wrong at {i}")));
            }
        }
        Ok(())
    }
}

fn find_exact(list: &[CMatrix], m: &CMatrix) -> Option<usize> {
    list.iter().position(|e| e.max_abs_diff(m) < ELEMENT_TOL)
}

/// `Some(c)` with `|c| = 1` and `a = c·b` within the element tolerance.
fn phase_relation(a: &CMatrix, b: &CMatrix) -> Option<C64> {
    let (k, bk) = b.data().iter().enumerate().max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))?;
    if bk.norm() < ELEMENT_TOL {
        return None;
    }
    let c = a.data()[k] / bk;
    if (c.norm() - 1.0).abs() > ELEMENT_TOL {
        return None;
    }
    (a.max_abs_diff(&b.scale(c)) < ELEMENT_TOL).then_some(c)
}

/// Closes the set of generators under multiplication. Elements are
/// identified by exact matrix equality (no phase quotient).
pub fn generate_group(generators: &[CMatrix], max_order: usize) -> Result<FiniteGroupRep> {
    let d = generators.first().ok_or_else(|| Error::BadGenerators("no generators".into()))?.rows();
    for g in generators {
        if g.rows() != d || g.cols() != d {
            return Err(Error::Shape("generators must share one square size".into()));
        }
        let defect = g.unitarity_defect();
        if defect > GENERATOR_TOL {
            return Err(Error::NonUnitary(defect));
        }
    }
    let mut elements = vec![CMatrix::identity(d)];
    let mut frontier = 0;
    while frontier < elements.len() {
        let current = elements[frontier].clone();
        for g in generators {
            let next = current.matmul(g);
            if find_exact(&elements, &next).is_none() {
                if elements.len() == max_order {
                    return Err(Error::OrderExceeded(max_order));
                }
                elements.push(next);
            }
        }
        frontier += 1;
    }
    let n = elements.len();
    let mut cayley = vec![vec![0usize; n]; n];
    for i in 0..n {
        for j in 0..n {
            cayley[i][j] = find_exact(&elements, &elements[i].matmul(&elements[j]))
                .ok_or_else(|| Error::BadGenerators("closure drifted beyond tolerance".into()))?;
        }
    }
    let inverse = (0..n)
        .map(|i| {
            (0..n)
                .find(|&j| cayley[j][i] == 0)
                .ok_or_else(|| Error::BadGenerators(format!("element {i} has no inverse")))
        })
        .collect::<Result<_>>()?;
    Ok(FiniteGroupRep { elements, cayley, inverse, projective: false, subgroup_flags: None })
}

/// `exp(-i θ σ_y / 2)`.
pub fn spin_half_y_rotation(theta: f64) -> CMatrix {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    CMatrix::new(2, 2, vec![C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)]).expect("2x2")
}

/// Quarter-turn y rotations acting as `u(π/2)^{⊗block}` on a block of spins.
/// For `block = 1` this is the order-8 group generated by a spin-1/2 rotation;
/// use [`FiniteGroupRep::projective_quotient`] for the order-4 physical action.
pub fn y_rotation_group(block: usize) -> Result<FiniteGroupRep> {
    generate_group(&[spin_half_y_rotation(std::f64::consts::FRAC_PI_2).kron_power(block)], 1024)
}

/// Global spin flip `σ_x^{⊗block}`.
pub fn spin_flip_group(block: usize) -> Result<FiniteGroupRep> {
    let sx = CMatrix::new(2, 2, vec![ZERO, C64::new(1.0, 0.0), C64::new(1.0, 0.0), ZERO]).expect("2x2");
    generate_group(&[sx.kron_power(block)], 1024)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LieKind {
    U1,
    Su2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureScheme {
    Equispaced,
    Montecarlo,
}

/// How Haar integrals are evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: QuadratureScheme,
    /// Nodes per angle for equispaced quadrature (starting value when adaptive).
    #[serde(rename = "K", default = "default_nodes")]
    pub nodes: usize,
    /// Sample count for Monte Carlo.
    #[serde(rename = "N", default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_nodes() -> usize {
    64
}

fn default_samples() -> usize {
    20_000
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { scheme: QuadratureScheme::Equispaced, nodes: default_nodes(), samples: default_samples(), seed: None }
    }
}

/// U(1) or SU(2) represented through anti-Hermitian generators.
#[derive(Clone, Debug)]
pub struct LieGroupRep {
    kind: LieKind,
    generators: Vec<CMatrix>,
    pub quadrature: QuadratureSpec,
}

impl LieGroupRep {
    /// Validates the generators: anti-Hermitian, one for U(1) with
    /// `exp(2πX)` a multiple of the identity, three for SU(2) obeying
    /// `[X_a, X_b] = ε_abc X_c`.
    pub fn new(kind: LieKind, generators: Vec<CMatrix>, quadrature: QuadratureSpec) -> Result<Self> {
        let want = match kind {
            LieKind::U1 => 1,
            LieKind::Su2 => 3,
        };
        if generators.len() != want {
            return Err(Error::BadGenerators(format!("{kind:?} needs {want} generators, got {}", generators.len())));
        }
        let d = generators[0].rows();
        for x in &generators {
            if x.rows() != d || x.cols() != d {
                return Err(Error::Shape("generators must share one square size".into()));
            }
            let ah = (x + &x.adjoint()).max_abs();
            if ah > LIE_TOL {
                return Err(Error::BadGenerators(format!("generator is not anti-Hermitian (defect {ah:e})")));
            }
        }
        match kind {
            LieKind::U1 => {
                let full = exp_anti_hermitian(&generators[0].scale_real(2.0 * std::f64::consts::PI))?;
                if phase_relation(&full, &CMatrix::identity(d)).is_none() {
                    return Err(Error::BadGenerators("exp(2πX) is not a multiple of the identity".into()));
                }
            }
            LieKind::Su2 => {
                for (a, b, c) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
                    let defect = generators[a].commutator(&generators[b]).max_abs_diff(&generators[c]);
                    if defect > LIE_TOL {
                        return Err(Error::BadGenerators(format!("su(2) relations fail (defect {defect:e})")));
                    }
                }
            }
        }
        Ok(Self { kind, generators, quadrature })
    }

    /// U(1) rotations about z on a spin-1/2, `X = -i σ_z / 2`.
    pub fn u1_spin_half() -> Self {
        let x = CMatrix::from_diag(&[C64::new(0.0, -0.5), C64::new(0.0, 0.5)]);
        Self::new(LieKind::U1, vec![x], QuadratureSpec::default()).expect("valid generator")
    }

    /// SU(2) in its fundamental representation, `X_k = -i σ_k / 2`.
    pub fn su2_spin_half(quadrature: QuadratureSpec) -> Self {
        let sx = [ZERO, C64::new(1.0, 0.0), C64::new(1.0, 0.0), ZERO];
        let sy = [ZERO, -I, I, ZERO];
        let sz = [C64::new(1.0, 0.0), ZERO, ZERO, C64::new(-1.0, 0.0)];
        let gens = [sx, sy, sz]
            .iter()
            .map(|s| CMatrix::new(2, 2, s.iter().map(|z| z * C64::new(0.0, -0.5)).collect()).expect("2x2"))
            .collect();
        Self::new(LieKind::Su2, gens, QuadratureSpec { scheme: QuadratureScheme::Montecarlo, ..quadrature })
            .expect("valid generators")
    }

    pub fn kind(&self) -> LieKind {
        self.kind
    }

    pub fn generators(&self) -> &[CMatrix] {
        &self.generators
    }

    /// Dimension of the Lie algebra.
    pub fn dim_g(&self) -> usize {
        self.generators.len()
    }

    /// Dimension of the represented space.
    pub fn dim(&self) -> usize {
        self.generators[0].rows()
    }

    /// `Σ_k c_k X_k`.
    pub fn algebra_element(&self, coeffs: &[f64]) -> CMatrix {
        let mut acc = CMatrix::zeros(self.dim(), self.dim());
        for (c, x) in coeffs.iter().zip(&self.generators) {
            acc = &acc + &x.scale_real(*c);
        }
        acc
    }

    /// `exp(Σ_k c_k X_k)`.
    pub fn exp(&self, coeffs: &[f64]) -> CMatrix {
        exp_anti_hermitian(&self.algebra_element(coeffs)).expect("anti-Hermitian exponent")
    }

    /// Represents an SU(2) element given by its unit quaternion.
    pub fn represent(&self, g: &Su2Element) -> CMatrix {
        self.exp(&g.axis_angle_coords())
    }
}

/// Unit quaternion `(a, b, c, d)` standing for `a·1 − i(b σ_x + c σ_y + d σ_z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Su2Element(pub [f64; 4]);

impl Su2Element {
    /// The 2×2 fundamental matrix.
    pub fn fundamental(&self) -> CMatrix {
        let [a, b, c, d] = self.0;
        CMatrix::new(2, 2, vec![C64::new(a, -d), C64::new(-c, -b), C64::new(c, -b), C64::new(a, d)]).expect("2x2")
    }

    /// Coordinates `φ·n` with the element equal to `exp(φ n·X)`, `X_k = -iσ_k/2`.
    pub fn axis_angle_coords(&self) -> [f64; 3] {
        let [a, b, c, d] = self.0;
        let s = (b * b + c * c + d * d).sqrt();
        if s < 1e-300 {
            // ±1: the element -1 is a 2π rotation about any axis
            return if a > 0.0 { [0.0; 3] } else { [0.0, 0.0, 2.0 * std::f64::consts::PI] };
        }
        let phi = 2.0 * s.atan2(a);
        [phi * b / s, phi * c / s, phi * d / s]
    }
}

/// Equispaced nodes `(2πk/K, 1/K)` for the normalized Haar measure of U(1).
pub fn haar_nodes_u1(k: usize) -> Vec<(f64, f64)> {
    (0..k).map(|i| (2.0 * std::f64::consts::PI * i as f64 / k as f64, 1.0 / k as f64)).collect()
}

/// Haar-distributed SU(2) elements from normalized Gaussian quaternions.
pub fn haar_sample_su2(n_samples: usize, seed: u64) -> Vec<Su2Element> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n_samples)
        .map(|_| loop {
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break Su2Element(q.map(|x| x / norm));
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgroupKind {
    /// Element indices of `H` inside the finite group.
    Finite { indices: Vec<usize> },
    /// Orthonormal coefficient vectors (in generator coordinates) spanning `𝔥`.
    Lie { basis: Vec<Vec<f64>> },
}

/// The symmetric part `H` of a candidate group `G` for a given state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubgroupInfo {
    pub kind: SubgroupKind,
    /// Finite: `arg λ₁(R_g)` per element of `H`. Lie: the rate
    /// `d arg λ₁ / dt` along each basis direction of `𝔥`.
    pub phases: Vec<f64>,
}

impl SubgroupInfo {
    /// `|H|` for finite groups, `dim 𝔥` for Lie groups.
    pub fn size(&self) -> usize {
        match &self.kind {
            SubgroupKind::Finite { indices } => indices.len(),
            SubgroupKind::Lie { basis } => basis.len(),
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        match &self.kind {
            SubgroupKind::Finite { indices } => indices.contains(&i),
            SubgroupKind::Lie { .. } => false,
        }
    }
}

fn require_normalized_clustering(t: &MpsTensor) -> Result<()> {
    let r = build_transfer_operator(t);
    let rep = clustering_report(&r, CLUSTERING_TOL)?;
    if (rep.leading_modulus - 1.0).abs() > 1e-8 {
        return Err(Error::BadParam(format!("tensor is not normalized (spectral radius {})", rep.leading_modulus)));
    }
    if !rep.is_clustering {
        return Err(Error::NonClustering(rep.gap_ratio));
    }
    Ok(())
}

/// `H = {g : ρ(R_g) ≥ 1 − tol}`, with closure under products and inverses
/// verified rather than assumed.
pub fn detect_invariant_subgroup(t: &MpsTensor, g: &FiniteGroupRep, tol: f64) -> Result<SubgroupInfo> {
    require_normalized_clustering(t)?;
    let mut indices = Vec::new();
    let mut phases = Vec::new();
    for (i, u) in g.elements().iter().enumerate() {
        let lam = build_charged_transfer(t, u)?.leading_eigenvalue()?;
        if lam.norm() >= 1.0 - tol {
            indices.push(i);
            phases.push(lam.arg());
        }
    }
    for &i in &indices {
        if !indices.contains(&g.inverse(i)) {
            return Err(Error::ClosureViolation(format!("inverse of element {i} is missing")));
        }
        for &j in &indices {
            if !indices.contains(&g.product(i, j)) {
                return Err(Error::ClosureViolation(format!("product of elements {i} and {j} is missing")));
            }
        }
    }
    Ok(SubgroupInfo { kind: SubgroupKind::Finite { indices }, phases })
}

/// Finds `𝔥` as the null space of the quadratic form `Q` defined by
/// `1 − ρ(R_{exp(t v·X)}) ≈ t² vᵀQv`, probed along basis vectors and their
/// pairwise sums.
pub fn detect_invariant_algebra(t: &MpsTensor, g: &LieGroupRep) -> Result<SubgroupInfo> {
    require_normalized_clustering(t)?;
    let n = g.dim_g();
    let step = LIE_PROBE_STEP;
    let deficit = |v: &[f64]| -> Result<f64> {
        let coeffs: Vec<f64> = v.iter().map(|x| x * step).collect();
        Ok((1.0 - build_charged_transfer(t, &g.exp(&coeffs))?.spectral_radius()?) / (step * step))
    };
    let unit = |a: usize| -> Vec<f64> { (0..n).map(|k| if k == a { 1.0 } else { 0.0 }).collect() };
    let diag: Vec<f64> = (0..n).map(|a| deficit(&unit(a))).collect::<Result<_>>()?;
    let mut q = CMatrix::zeros(n, n);
    for a in 0..n {
        q[(a, a)] = C64::new(diag[a], 0.0);
        for b in 0..a {
            let v: Vec<f64> = (0..n).map(|k| if k == a || k == b { 1.0 } else { 0.0 }).collect();
            let off = (deficit(&v)? - diag[a] - diag[b]) / 2.0;
            q[(a, b)] = C64::new(off, 0.0);
            q[(b, a)] = C64::new(off, 0.0);
        }
    }
    let (vals, vecs) = eigh(&q)?;
    let mut basis = Vec::new();
    let mut phases = Vec::new();
    for (k, &val) in vals.iter().enumerate() {
        if val.abs() < LIE_DEFICIT_TOL {
            let v: Vec<f64> = (0..n).map(|a| vecs[(a, k)].re).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
            let coeffs: Vec<f64> = v.iter().map(|x| x * step).collect();
            let lam = build_charged_transfer(t, &g.exp(&coeffs))?.leading_eigenvalue()?;
            phases.push(lam.arg() / step);
            basis.push(v);
        }
    }
    Ok(SubgroupInfo { kind: SubgroupKind::Lie { basis }, phases })
}

/// Projector onto one character sector of an abelian group action.
#[derive(Clone, Debug)]
pub struct SectorProjector {
    /// `χ(g)` for every group element.
    pub character: Vec<C64>,
    pub projector: CMatrix,
}

/// Orthogonal projectors onto the character eigenspaces of `action`
/// (the represented elements of `g` on a `rho_dim`-dimensional space).
pub fn abelian_irrep_projectors(
    g: &FiniteGroupRep,
    rho_dim: usize,
    action: &[CMatrix],
) -> Result<Vec<SectorProjector>> {
    if !g.is_abelian() {
        return Err(Error::NonAbelian);
    }
    if action.len() != g.order() || action.iter().any(|u| u.rows() != rho_dim || u.cols() != rho_dim) {
        return Err(Error::Shape("action must hold one rho_dim x rho_dim matrix per element".into()));
    }
    // A Hermitian element of the group algebra whose eigenvalues separate characters.
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let mut h = CMatrix::zeros(rho_dim, rho_dim);
    for u in action {
        let c = C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        h = &h + &(&u.scale(c) + &u.adjoint().scale(c.conj()));
    }
    let (vals, vecs) = eigh(&h)?;
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut characters: Vec<Vec<C64>> = Vec::new();
    let mut start = 0;
    while start < vals.len() {
        let mut end = start + 1;
        while end < vals.len() && vals[end] - vals[start] < 1e-8 * scale {
            end += 1;
        }
        let v = vecs.column(start);
        let chi: Vec<C64> =
            action.iter().map(|u| v.iter().zip(u.matvec(&v)).map(|(a, b)| a.conj() * b).sum()).collect();
        if !characters.iter().any(|c| c.iter().zip(&chi).all(|(a, b)| (a - b).norm() < 1e-8)) {
            characters.push(chi);
        }
        start = end;
    }
    let order = g.order() as f64;
    let sectors: Vec<SectorProjector> = characters
        .into_iter()
        .map(|chi| {
            let mut p = CMatrix::zeros(rho_dim, rho_dim);
            for (c, u) in chi.iter().zip(action) {
                p = &p + &u.scale(c.conj() / order);
            }
            SectorProjector { character: chi, projector: p }
        })
        .collect();
    let mut total = CMatrix::zeros(rho_dim, rho_dim);
    for s in &sectors {
        if s.projector.matmul(&s.projector).max_abs_diff(&s.projector) > 1e-10 {
            return Err(Error::DecompositionFailed("sector projector is not idempotent".into()));
        }
        total = &total + &s.projector;
    }
    if total.max_abs_diff(&CMatrix::identity(rho_dim)) > 1e-10 {
        return Err(Error::DecompositionFailed("sector projectors are not complete".into()));
    }
    Ok(sectors)
}

/// On-disk group description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpecJson {
    pub kind: String,
    /// Each generator as a list of rows of `[re, im]` pairs.
    pub generators: Vec<Vec<Vec<[f64; 2]>>>,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
}

#[derive(Clone, Debug)]
pub enum GroupSpec {
    Finite(FiniteGroupRep),
    Lie(LieGroupRep),
}

impl GroupSpecJson {
    pub fn build(&self) -> Result<GroupSpec> {
        let gens = self
            .generators
            .iter()
            .map(|rows| {
                let rows: Vec<Vec<C64>> =
                    rows.iter().map(|r| r.iter().map(|&[re, im]| C64::new(re, im)).collect()).collect();
                CMatrix::from_rows(&rows)
            })
            .collect::<Result<Vec<_>>>()?;
        let quad = self.quadrature.clone().unwrap_or_default();
        match self.kind.as_str() {
            "finite" => Ok(GroupSpec::Finite(generate_group(&gens, 1024)?)),
            "u1" => Ok(GroupSpec::Lie(LieGroupRep::new(LieKind::U1, gens, quad)?)),
            "su2" => Ok(GroupSpec::Lie(LieGroupRep::new(LieKind::Su2, gens, quad)?)),
            other => Err(Error::BadParam(format!("unknown group kind {other:?}"))),
        }
    }
}

/// Serializes a matrix as rows of `[re, im]` pairs.
pub fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.rows()).map(|i| m.row(i).iter().map(|z| [z.re, z.im]).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matrix_power;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn quarter_turn_spin_half_has_order_eight() {
        let u = spin_half_y_rotation(PI / 2.0);
        let g = generate_group(std::slice::from_ref(&u), 1024).unwrap();
        assert_eq!(g.order(), 8);
        g.validate().unwrap();
        // u^4 = -1, u^8 = 1
        assert!(matrix_power(&u, 4).max_abs_diff(&CMatrix::identity(2).scale_real(-1.0)) < 1e-14);
        let q = g.projective_quotient().unwrap();
        assert_eq!(q.order(), 4);
        assert!(q.is_projective());
        q.validate().unwrap();
        assert_eq!(y_rotation_group(2).unwrap().order(), 4);
    }

    #[test]
    fn small_groups() {
        assert_eq!(generate_group(&[CMatrix::identity(3)], 1024).unwrap().order(), 1);
        let flip = spin_flip_group(1).unwrap();
        assert_eq!(flip.order(), 2);
        assert_eq!(flip.inverse(1), 1);
        assert!(flip.is_abelian());
    }

    #[test]
    fn closure_errors() {
        let irrational = spin_half_y_rotation(1.0);
        assert_eq!(generate_group(&[irrational], 64).unwrap_err(), Error::OrderExceeded(64));
        let bad = CMatrix::from_real_diag(&[1.0, 0.5]);
        assert!(matches!(generate_group(&[bad], 8), Err(Error::NonUnitary(_))));
    }

    #[test]
    fn permutation_group_is_nonabelian() {
        // S3 on three qubits, generated by a transposition and a 3-cycle
        let perm = |p: [usize; 3]| {
            CMatrix::from_fn(8, 8, |i, j| {
                let bits = [(j >> 2) & 1, (j >> 1) & 1, j & 1];
                let mut out = [0usize; 3];
                for k in 0..3 {
                    out[p[k]] = bits[k];
                }
                c(((out[0] << 2 | out[1] << 1 | out[2]) == i) as u8 as f64)
            })
        };
        let g = generate_group(&[perm([1, 0, 2]), perm([1, 2, 0])], 1024).unwrap();
        assert_eq!(g.order(), 6);
        assert!(!g.is_abelian());
        g.validate().unwrap();
        let d = g.dim();
        assert!(matches!(abelian_irrep_projectors(&g, d, g.elements()), Err(Error::NonAbelian)));
    }

    #[test]
    fn u1_nodes() {
        let nodes = haar_nodes_u1(4);
        for (k, (a, w)) in nodes.iter().enumerate() {
            assert!((a - k as f64 * PI / 2.0).abs() < 1e-15);
            assert_eq!(*w, 0.25);
        }
        let s: C64 = haar_nodes_u1(16).iter().map(|&(a, w)| C64::from_polar(w, a)).sum();
        assert!(s.norm() < 1e-14);
        let s: f64 = haar_nodes_u1(64).iter().map(|&(a, w)| w * (a / 2.0).cos().powi(4)).sum();
        assert!((s - 0.375).abs() < 1e-12);
    }

    #[test]
    fn su2_samples_are_deterministic_and_unitary() {
        let a = haar_sample_su2(50, 3);
        assert_eq!(a, haar_sample_su2(50, 3));
        assert_ne!(a, haar_sample_su2(50, 4));
        let su2 = LieGroupRep::su2_spin_half(QuadratureSpec::default());
        for g in &a {
            let m = g.fundamental();
            assert!(m.unitarity_defect() < 1e-13);
            assert!((m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] - c(1.0)).norm() < 1e-13);
            assert!(su2.represent(g).max_abs_diff(&m) < 1e-12);
        }
    }

    #[test]
    fn lie_validation() {
        assert_eq!(LieGroupRep::u1_spin_half().dim_g(), 1);
        let herm = CMatrix::from_real_diag(&[1.0, -1.0]);
        assert!(matches!(
            LieGroupRep::new(LieKind::U1, vec![herm], QuadratureSpec::default()),
            Err(Error::BadGenerators(_))
        ));
        let aperiodic = CMatrix::from_diag(&[C64::new(0.0, 0.3), ZERO]);
        assert!(LieGroupRep::new(LieKind::U1, vec![aperiodic], QuadratureSpec::default()).is_err());
        let su2 = LieGroupRep::su2_spin_half(QuadratureSpec::default());
        let mut wrong = su2.generators().to_vec();
        wrong.swap(0, 1);
        assert!(LieGroupRep::new(LieKind::Su2, wrong, QuadratureSpec::default()).is_err());
    }

    #[test]
    fn exp_of_real_combinations_is_unitary() {
        let su2 = LieGroupRep::su2_spin_half(QuadratureSpec::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-7.0..7.0)).collect();
            assert!(su2.exp(&v).unitarity_defect() < 1e-9);
        }
    }

    #[test]
    fn abelian_projectors() {
        let z = CMatrix::from_real_diag(&[1.0, -1.0]);
        let g = generate_group(&[z], 8).unwrap();
        let p = abelian_irrep_projectors(&g, 2, g.elements()).unwrap();
        assert_eq!(p.len(), 2);
        let ranks: Vec<f64> = p.iter().map(|s| s.projector.trace().re).collect();
        assert!(ranks.iter().all(|r| (r - 1.0).abs() < 1e-12));

        let t = generate_group(&[CMatrix::identity(4)], 8).unwrap();
        let p = abelian_irrep_projectors(&t, 4, t.elements()).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].projector.max_abs_diff(&CMatrix::identity(4)) < 1e-14);
    }

    #[test]
    fn z4_projectors_on_two_sites() {
        let u = CMatrix::from_diag(&[c(1.0), I, c(-1.0), -I]);
        let g = generate_group(&[u], 8).unwrap();
        assert_eq!(g.order(), 4);
        let action: Vec<CMatrix> = (0..4).map(|i| g.site_action(i, 2)).collect();
        let p = abelian_irrep_projectors(&g, 16, &action).unwrap();
        assert_eq!(p.len(), 4);
        // charge q = (a + b) mod 4 on basis |a b⟩: each class has 4 states
        for s in &p {
            assert!((s.projector.trace().re - 4.0).abs() < 1e-10);
        }
        for (i, a) in p.iter().enumerate() {
            for b in &p[i + 1..] {
                assert!(a.projector.matmul(&b.projector).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn detects_symmetric_elements() {
        let up = MpsTensor::new(2, 1, vec![c(1.0), c(0.0)]).unwrap();
        let g = y_rotation_group(1).unwrap();
        let h = detect_invariant_subgroup(&up, &g, 1e-8).unwrap();
        // identity and the 4π-periodic -1
        assert_eq!(h.size(), 2);
        assert!(h.contains(0));
        let minus = g.identify(&CMatrix::identity(2).scale_real(-1.0)).unwrap();
        assert!(h.contains(minus));

        let t = generate_group(&[CMatrix::identity(2)], 4).unwrap();
        assert_eq!(detect_invariant_subgroup(&up, &t, 1e-8).unwrap().size(), 1);

        let neel = MpsTensor::new(4, 1, vec![c(0.0), c(1.0), c(0.0), c(0.0)]).unwrap();
        let h = detect_invariant_subgroup(&neel, &y_rotation_group(2).unwrap(), 1e-8).unwrap();
        assert_eq!(h, SubgroupInfo { kind: SubgroupKind::Finite { indices: vec![0] }, phases: vec![0.0] });
    }

    #[test]
    fn detects_invariant_algebra() {
        let up = MpsTensor::new(2, 1, vec![c(1.0), c(0.0)]).unwrap();
        let su2 = LieGroupRep::su2_spin_half(QuadratureSpec::default());
        let h = detect_invariant_algebra(&up, &su2).unwrap();
        let SubgroupKind::Lie { basis } = &h.kind else { panic!() };
        assert_eq!(basis.len(), 1);
        assert!((basis[0][2].abs() - 1.0).abs() < 1e-6);
        // R_g = ⟨↑|exp(t X_z)|↑⟩ = e^{-it/2}: unimodular, charge -1/2 along ±X_z
        assert!((h.phases[0] + 0.5 * basis[0][2]).abs() < 1e-6);

        let plus = MpsTensor::new(2, 1, vec![c(0.5f64.sqrt()), c(0.5f64.sqrt())]).unwrap();
        let h = detect_invariant_algebra(&plus, &LieGroupRep::u1_spin_half()).unwrap();
        assert_eq!(h.size(), 0);
    }

    #[test]
    fn group_spec_json() {
        let text = r#"{"kind": "finite", "generators": [[[[0,0],[1,0]],[[1,0],[0,0]]]]}"#;
        let spec: GroupSpecJson = serde_json::from_str(text).unwrap();
        let GroupSpec::Finite(g) = spec.build().unwrap() else { panic!() };
        assert_eq!(g.order(), 2);

        let text = r#"{"kind": "u1", "generators": [[[[0,-0.5],[0,0]],[[0,0],[0,0.5]]]],
                       "quadrature": {"scheme": "equispaced", "K": 32}}"#;
        let spec: GroupSpecJson = serde_json::from_str(text).unwrap();
        let GroupSpec::Lie(g) = spec.build().unwrap() else { panic!() };
        assert_eq!(g.quadrature.nodes, 32);
        assert_eq!(g.quadrature.samples, 20_000);

        let bad: GroupSpecJson = serde_json::from_str(r#"{"kind": "so3", "generators": []}"#).unwrap();
        assert!(bad.build().is_err());
    }
}
