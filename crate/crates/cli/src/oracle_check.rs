//! On-demand cross-checks of the transfer-operator pipeline against brute
//! force: charged moments and Rényi entropies on a ring, and agreement of the
//! symmetrization routes.

use std::fmt;

use asymmetry_core::linalg::CMatrix;
use asymmetry_core::moments::{Ell, Mode, MomentEngine};
use asymmetry_core::oracle::{
    block_structure_check, exact_charged_moment, exact_purity, isotypic_decomposition_finite,
    symmetrize_abelian_blocks, symmetrize_exact, symmetrize_nonabelian_basis, DensityMatrix,
};
use asymmetry_core::states::random;
use asymmetry_core::symmetry::{abelian_irrep_projectors, generate_group, spin_flip_group, y_rotation_group};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::CliError;

/// Moments agree when they differ by less than this.
pub const MOMENT_TOL: f64 = 1e-6;
/// Symmetrization routes agree when they differ by less than this.
pub const PATH_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// `n` random unitaries whose ordered product is the identity.
pub fn closing_unitaries(d: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<CMatrix> {
    let mut us: Vec<CMatrix> = (0..n - 1).map(|_| CMatrix::random_unitary(d, rng)).collect();
    let prod = us.iter().fold(CMatrix::identity(d), |p, u| p.matmul(u));
    us.push(prod.adjoint());
    us
}

/// Worst deviation between pipeline and ring oracle for one random tensor.
pub fn moment_case(case: usize, seed: u64, sites: usize) -> Result<f64, CliError> {
    let bond = 1 + case % 3;
    let ell = 1 + (case / 3) % 3;
    let t = random(2, bond, seed.wrapping_mul(1000).wrapping_add(case as u64))?;
    let engine = MomentEngine::new(&t, Mode::FiniteL(sites))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (case as u64 + 1));
    let mut worst: f64 = 0.0;
    for n in [2, 3] {
        let us = closing_unitaries(2, n, &mut rng);
        let pipeline = engine.charged_moment(&us, ell)?.value;
        let exact = exact_charged_moment(&t, sites, ell, &us)?;
        worst = worst.max((pipeline - exact).norm());
        let p = engine.purity(n, Ell::Finite(ell))?;
        let q = exact_purity(&t, sites, ell, n)?;
        let renyi = |x: f64| x.ln() / (1.0 - n as f64);
        worst = worst.max((renyi(p) - renyi(q)).abs());
    }
    Ok(worst)
}

pub fn moment_suite(cases: usize, seed: u64, sites: usize) -> Result<Vec<CheckLine>, CliError> {
    (0..cases)
        .map(|k| {
            let err = moment_case(k, seed, sites)?;
            Ok(CheckLine {
                name: format!("moments case {k}"),
                passed: err < MOMENT_TOL,
                detail: format!("max deviation {err:.3e} on a ring of {sites}"),
            })
        })
        .collect()
}

/// Group average, abelian blocks and the commutant basis on random states.
pub fn symmetrization_suite(seed: u64) -> Result<Vec<CheckLine>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::new();
    let abelian = [("z2 flip on 3 sites", spin_flip_group(1)?, 3), ("z4 rotation on 2 sites", y_rotation_group(2)?, 1)];
    for (name, g, ell) in abelian {
        let action: Vec<CMatrix> = (0..g.order()).map(|i| g.site_action(i, ell)).collect();
        let dim = action[0].rows();
        let rho = DensityMatrix::random(dim, &mut rng);
        let avg = symmetrize_exact(&rho, &g, ell)?;
        let proj = abelian_irrep_projectors(&g, dim, &action)?;
        let err = symmetrize_abelian_blocks(&rho, &proj)?.matrix().max_abs_diff(avg.matrix());
        lines.push(CheckLine {
            name: format!("abelian blocks, {name}"),
            passed: err < PATH_TOL,
            detail: format!("{err:.3e}"),
        });
    }
    let s3 = generate_group(&[permutation(&[1, 0, 2]), permutation(&[1, 2, 0])], 1024)?;
    let action = s3.elements().to_vec();
    let dec = isotypic_decomposition_finite(&action, seed)?;
    let rho = DensityMatrix::random(8, &mut rng);
    let avg = symmetrize_exact(&rho, &s3, 1)?;
    let basis = symmetrize_nonabelian_basis(&rho, &dec)?;
    let err = avg.matrix().max_abs_diff(basis.matrix());
    lines.push(CheckLine {
        name: "commutant basis, S3 on 3 qubits".into(),
        passed: err < PATH_TOL,
        detail: format!("{err:.3e}"),
    });
    let structure = block_structure_check(&basis, Some(&rho), &dec);
    lines.push(CheckLine {
        name: "block structure, S3 on 3 qubits".into(),
        passed: structure.is_ok(),
        detail: match structure {
            Ok(r) => format!("{} blocks", r.blocks_checked),
            Err(e) => e.to_string(),
        },
    });
    Ok(lines)
}

/// Permutation of three qubits sending qubit `k` to position `p[k]`.
pub fn permutation(p: &[usize]) -> CMatrix {
    let q = p.len();
    CMatrix::from_fn(1 << q, 1 << q, |i, j| {
        let mut out = 0usize;
        for (k, &pk) in p.iter().enumerate() {
            let bit = (j >> (q - 1 - k)) & 1;
            out |= bit << (q - 1 - pk);
        }
        asymmetry_core::linalg::C64::new((out == i) as u8 as f64, 0.0)
    })
}

pub fn run_all(cases: usize, seed: u64, sites: usize) -> Result<Vec<CheckLine>, CliError> {
    let mut lines = moment_suite(cases, seed, sites)?;
    lines.extend(symmetrization_suite(seed)?);
    Ok(lines)
}
