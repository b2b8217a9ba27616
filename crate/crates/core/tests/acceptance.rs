//! Acceptance criteria A1–A9. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line. The process exits non-zero if
//! a criterion outside `KNOWN_RED` fails or overruns its time budget.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use asymmetry_core::linalg::{CMatrix, C64};
use asymmetry_core::moments::{
    asymmetry_finite_group, asymmetry_lie_group, charged_moment, hessian_at_subgroup, log_slope_fit,
    subleading_correction_fit, Ell, Mode, MomentEngine,
};
use asymmetry_core::oracle::*;
use asymmetry_core::states::{
    aklt, ferromagnet, ghz, ghz_boundary, neel, random, tilted, xxz_ground_state, PhaseHint, XxzSpec,
};
use asymmetry_core::symmetry::{
    abelian_irrep_projectors, generate_group, spin_flip_group, spin_half_y_rotation, y_rotation_group, FiniteGroupRep,
    LieGroupRep, QuadratureScheme, QuadratureSpec, SectorProjector,
};
use asymmetry_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Criteria expected to fail; each has an entry in the decisions ledger.
/// A8: AKLT has Tr ρ² = 1/4 + (3/4)·(1/9)^ℓ exactly, so the fitted rate is
/// |λ₂|² = 1/9 rather than |λ₂| = 1/3.
const KNOWN_RED: &[&str] = &["A8"];

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn run(id: &str, limit: Duration, f: impl FnOnce() -> Result<Outcome>) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (passed, detail) = match outcome {
        Ok(o) => (o.passed && elapsed <= limit, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let status = if passed { "PASS" } else { "FAIL" };
    let note = if !passed && KNOWN_RED.contains(&id) { " [known red]" } else { "" };
    println!("{status} {id}: {detail}; {:.2} s (limit {} s){note}", elapsed.as_secs_f64(), limit.as_secs());
    passed || KNOWN_RED.contains(&id)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn a1() -> Result<Outcome> {
    let t = ferromagnet(true);
    let mut worst: f64 = 0.0;
    for ell in 1..=12 {
        let half = 0.5f64.powi(ell as i32);
        for (theta, expected) in [(0.0, 1.0), (PI / 2.0, half), (PI, 0.0), (3.0 * PI / 2.0, half)] {
            let u = spin_half_y_rotation(theta);
            let value = charged_moment(&t, &[u.clone(), u.adjoint()], ell, Mode::InfiniteVolume)?.value;
            worst = worst.max((value - C64::new(expected, 0.0)).norm());
        }
    }
    check(worst < 1e-12, format!("ferromagnet Tr(ρgρg⁻¹), max |dev| {worst:.2e} (tol 1e-12)"))
}

fn a2() -> Result<Outcome> {
    let flip = spin_flip_group(1)?;
    let sites = 10;
    let mut worst: f64 = 0.0;
    for p in [0.0, 0.25, 0.5, 1.0] {
        let t = ghz(p)?;
        let psi = dense_state_with_boundary(&t, sites, Some(&ghz_boundary(p)?))?;
        for ell in [2, 3, 4] {
            let rho = reduced_density_matrix(&psi, ell)?;
            let sym = symmetrize_exact(&rho, &flip, ell)?;
            for n in [2usize, 3] {
                let nf = n as f64;
                let expected = 2f64.ln() - (p.powf(nf) + (1.0 - p).powf(nf)).ln() / (1.0 - nf);
                worst = worst.max((exact_asymmetry(&rho, &sym, n)? - expected).abs());
            }
        }
    }
    let mut refused = 0;
    for p in [0.25, 0.5] {
        if matches!(asymmetry_finite_group(&ghz(p)?, &flip, 2, &[2, 3, 4]), Err(Error::NonClustering(_))) {
            refused += 1;
        }
    }
    check(
        worst < 1e-10 && refused == 2,
        format!("GHZ oracle max |dev| {worst:.2e} (tol 1e-10), pipeline refused {refused}/2 non-clustering p"),
    )
}

fn a3() -> Result<Outcome> {
    let log4 = 4f64.ln();
    // (a) Néel ℓ counts two-site blocks, so 20 blocks is 40 spins
    let ferro_z4 = y_rotation_group(1)?.projective_quotient()?;
    let ferro = asymmetry_finite_group(&ferromagnet(true), &ferro_z4, 2, &[40])?.delta_s[0];
    let neel_ds = asymmetry_finite_group(&neel(), &y_rotation_group(2)?, 2, &[20])?.delta_s[0];
    let analytic = (ferro - log4).abs().max((neel_ds - log4).abs());
    // (b) ℓ = 200 spins, 100 blocks
    let mut tebd: f64 = 0.0;
    for delta in [1.5, 2.0, 4.0] {
        let gs = xxz_ground_state(&XxzSpec::new(delta, 16)?, PhaseHint::Antiferro)?;
        let ds = asymmetry_finite_group(&gs.tensor, &y_rotation_group(2)?, 2, &[100])?.delta_s[0];
        tebd = tebd.max((ds - log4).abs() / log4);
    }
    check(
        analytic < 1e-3 && tebd < 0.02,
        format!("analytic |ΔS₂ − log 4| {analytic:.2e} (tol 1e-3), TEBD D=16 relative {tebd:.2e} (tol 0.02)"),
    )
}

fn closing_unitaries(n: usize, r: &mut ChaCha8Rng) -> Vec<CMatrix> {
    let mut us: Vec<CMatrix> = (0..n - 1).map(|_| CMatrix::random_unitary(2, r)).collect();
    let prod = us.iter().fold(CMatrix::identity(2), |p, u| p.matmul(u));
    us.push(prod.adjoint());
    us
}

fn a4() -> Result<Outcome> {
    let sites = 30;
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for case in 0..50u64 {
        let bond = 1 + (case % 3) as usize;
        let ell = 1 + ((case / 3) % 3) as usize;
        let t = random(2, bond, 5000 + case)?;
        let engine = MomentEngine::new(&t, Mode::FiniteL(sites))?;
        let mut r = rng(case);
        for n in [2usize, 3] {
            for _ in 0..3 {
                let us = closing_unitaries(n, &mut r);
                let a = engine.charged_moment(&us, ell)?.value;
                let b = exact_charged_moment(&t, sites, ell, &us)?;
                worst = worst.max((a - b).norm());
                compared += 1;
            }
            let renyi = |x: f64| x.ln() / (1.0 - n as f64);
            let a = renyi(engine.purity(n, Ell::Finite(ell))?);
            let b = renyi(exact_purity(&t, sites, ell, n)?);
            worst = worst.max((a - b).abs());
            compared += 1;
        }
    }
    check(worst < 1e-6, format!("{compared} quantities on a ring of {sites}, max |dev| {worst:.2e} (tol 1e-6)"))
}

fn geometric_grid(start: usize, stop: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut x = start as f64;
    while x <= stop as f64 * (1.0 + 1e-12) {
        out.push(x.round() as usize);
        x *= 2f64.sqrt();
    }
    out
}

fn slope(grid: &[usize], ys: &[f64]) -> Result<f64> {
    let xs: Vec<f64> = grid.iter().map(|&l| l as f64).collect();
    Ok(log_slope_fit(&xs, ys)?.slope.expect("log fit sets a slope"))
}

fn a5() -> Result<Outcome> {
    let grid = geometric_grid(64, 4096);
    let report = asymmetry_lie_group(&tilted(1.0, 0.3)?, &LieGroupRep::u1_spin_half(), 2, &grid)?;
    let m = slope(&grid, &report.delta_s)?;
    check((m - 0.5).abs() <= 0.025, format!("U(1) tilted state, slope {m:.4} over ℓ ∈ [64, 4096] (0.5 ± 0.025)"))
}

fn su2_mc() -> LieGroupRep {
    LieGroupRep::su2_spin_half(QuadratureSpec {
        scheme: QuadratureScheme::Montecarlo,
        samples: 20_000,
        seed: Some(20_240_601),
        ..Default::default()
    })
}

fn a6() -> Result<Outcome> {
    // batch-means error stays below ~10% up to ℓ = 256 at N = 2·10⁴
    let grid = geometric_grid(16, 256);
    let report = asymmetry_lie_group(&ferromagnet(true), &su2_mc(), 2, &grid)?;
    let m = slope(&grid, &report.delta_s)?;
    check(
        (m - 1.0).abs() <= 0.05,
        format!("SU(2) z-ferromagnet, N = 2e4, slope {m:.4} over ℓ ∈ [16, 256] (1.0 ± 0.05)"),
    )
}

fn a7() -> Result<Outcome> {
    let cases = [
        ("U(1) tilted", tilted(1.0, 0.3)?, LieGroupRep::u1_spin_half()),
        ("SU(2) z-ferromagnet", ferromagnet(true), su2_mc()),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, t, g) in cases {
        let h = hessian_at_subgroup(&t, &g, &CMatrix::identity(2), 2, 1e-3)?;
        let ok = h.gradient_norm < 1e-6 && h.positive_definite && h.step_halving_change < 0.01;
        passed &= ok;
        let min_eig = h.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        parts.push(format!(
            "{name}: |∇F| {:.1e}, min eig {min_eig:.3e}, halving {:.1e}",
            h.gradient_norm, h.step_halving_change
        ));
    }
    check(passed, format!("{} (tol 1e-6, > 0, 1%)", parts.join("; ")))
}

fn a8() -> Result<Outcome> {
    let grid: Vec<usize> = (1..=12).collect();
    match subleading_correction_fit(&aklt(), 2, &grid) {
        Ok(fit) => check(true, format!("AKLT rate {:.5} (1/3 ± 2%)", fit.rate.unwrap_or(f64::NAN))),
        Err(Error::RateMismatch { fitted, expected }) => {
            check(false, format!("AKLT fitted rate {fitted:.5}, expected {expected:.5} ± 2%"))
        }
        Err(e) => Err(e),
    }
}

enum Sym {
    Finite(FiniteGroupRep),
    Lie(LieGroupRep),
}

struct Case {
    name: String,
    group: Sym,
    ell: usize,
    seed: u64,
}

fn case(name: &str, group: Sym, ell: usize, seed: u64) -> Case {
    Case { name: name.into(), group, ell, seed }
}

fn permutation(p: [usize; 3]) -> CMatrix {
    CMatrix::from_fn(8, 8, |i, j| {
        let mut out = 0usize;
        for (k, &pk) in p.iter().enumerate() {
            out |= ((j >> (2 - k)) & 1) << (2 - pk);
        }
        C64::new((out == i) as u8 as f64, 0.0)
    })
}

fn a9_cases() -> Result<Vec<Case>> {
    let flip = || spin_flip_group(1).map(Sym::Finite);
    let z4 = || y_rotation_group(1)?.projective_quotient().map(Sym::Finite);
    let s3 = || generate_group(&[permutation([1, 0, 2]), permutation([1, 2, 0])], 64).map(Sym::Finite);
    let su2 = || Sym::Lie(LieGroupRep::su2_spin_half(QuadratureSpec::default()));
    let u1 = || Sym::Lie(LieGroupRep::u1_spin_half());
    let mut out = Vec::new();
    for ell in 1..=3 {
        out.push(case("Z2 flip", flip()?, ell, 10 + ell as u64));
        out.push(case("Z4 rotation", z4()?, ell, 20 + ell as u64));
        out.push(case("U(1)", u1(), ell, 30 + ell as u64));
    }
    for ell in 1..=2 {
        out.push(case("Z4 on two-site blocks", Sym::Finite(y_rotation_group(2)?), ell, 40 + ell as u64));
    }
    out.push(case("Z8 double cover", Sym::Finite(y_rotation_group(1)?), 2, 50));
    for seed in 0..4 {
        out.push(case("S3 on three qubits", s3()?, 1, 60 + seed));
    }
    for seed in 0..3 {
        out.push(case("SU(2) two-site", su2(), 2, 70 + seed));
    }
    out.push(case("SU(2) one-site", su2(), 1, 80));
    Ok(out)
}

/// Largest I20 defect: Hermiticity, trace, negativity, commutators.
fn i20_defect(rho: &DensityMatrix, ops: &[CMatrix]) -> Result<f64> {
    let m = rho.matrix();
    let mut worst = m.hermiticity_defect().max((m.trace() - C64::new(1.0, 0.0)).norm());
    worst = worst.max(-rho.eigenvalues()?[0]);
    for u in ops {
        worst = worst.max(u.commutator(m).max_abs());
    }
    Ok(worst)
}

#[derive(Default)]
struct A9Tally {
    path: f64,
    mc_sigma: f64,
    i20: f64,
    i21: f64,
    structure_ok: usize,
    structure_total: usize,
    control_caught: usize,
}

fn a9_case(c: &Case, tally: &mut A9Tally) -> Result<()> {
    let mut r = rng(c.seed);
    let (ops, dec, mut exact): (Vec<CMatrix>, IsotypicDecomposition, Vec<DensityMatrix>);
    let rho;
    let mut mc = None;
    match &c.group {
        Sym::Finite(g) => {
            ops = (0..g.order()).map(|i| g.site_action(i, c.ell)).collect();
            rho = DensityMatrix::random(ops[0].rows(), &mut r);
            dec = isotypic_decomposition_finite(&ops, c.seed)?;
            exact = vec![symmetrize_exact(&rho, g, c.ell)?, symmetrize_nonabelian_basis(&rho, &dec)?];
            if g.is_abelian() {
                let proj = abelian_irrep_projectors(g, rho.dim(), &ops)?;
                exact.push(symmetrize_abelian_blocks(&rho, &proj)?);
            }
        }
        Sym::Lie(g) => {
            ops = lifted_generators(g, c.ell);
            rho = DensityMatrix::random(ops[0].rows(), &mut r);
            dec = isotypic_decomposition_lie(&ops, c.seed)?;
            exact = vec![symmetrize_nonabelian_basis(&rho, &dec)?];
            if g.dim_g() == 1 {
                // total S_z sectors
                let dim = rho.dim();
                let sectors = (0..=c.ell)
                    .map(|m| {
                        let diag: Vec<f64> =
                            (0..dim).map(|s: usize| (s.count_ones() as usize == m) as u8 as f64).collect();
                        SectorProjector { character: vec![], projector: CMatrix::from_real_diag(&diag) }
                    })
                    .collect::<Vec<_>>();
                exact.push(symmetrize_abelian_blocks(&rho, &sectors)?);
            }
            mc = Some(symmetrize_haar_mc(&rho, g, c.ell, 100_000, c.seed)?);
        }
    }
    for pair in exact.windows(2) {
        tally.path = tally.path.max(pair[0].matrix().max_abs_diff(pair[1].matrix()));
    }
    if let Some(mc) = &mc {
        // aggregate 3σ: ‖mc − exact‖_F against the root sum of squared errors
        let dev = (mc.rho.matrix() - exact[0].matrix()).frobenius_norm();
        let sigma = mc.std_err.frobenius_norm().max(1e-300);
        tally.mc_sigma = tally.mc_sigma.max(dev / sigma);
        tally.i20 = tally.i20.max(i20_defect(&mc.rho, &[])?);
        tally.i21 = tally.i21.max(mc.rho.moment(2)? - rho.moment(2)?);
    }
    for out in &exact {
        tally.i20 = tally.i20.max(i20_defect(out, &ops)?);
        tally.i21 = tally.i21.max(out.moment(2)? - rho.moment(2)?);
        tally.structure_total += 1;
        if block_structure_check(out, Some(&rho), &dec).is_ok() {
            tally.structure_ok += 1;
        }
    }
    let noise = DensityMatrix::random(rho.dim(), &mut r);
    let corrupted =
        DensityMatrix::from_unnormalized(&exact[0].matrix().scale_real(0.99) + &noise.matrix().scale_real(0.01))?;
    if matches!(block_structure_check(&corrupted, None, &dec), Err(Error::StructureViolation { .. })) {
        tally.control_caught += 1;
    }
    Ok(())
}

fn a9() -> Result<Outcome> {
    let cases = a9_cases()?;
    let mut tally = A9Tally::default();
    for c in &cases {
        a9_case(c, &mut tally).map_err(|e| Error::BadParam(format!("{} ℓ={}: {e}", c.name, c.ell)))?;
    }
    let n = cases.len();
    let passed = tally.path < 1e-10
        && tally.mc_sigma <= 3.0
        && tally.i20 < 1e-10
        && tally.i21 <= 1e-12
        && tally.structure_ok == tally.structure_total
        && tally.control_caught == n;
    check(
        passed,
        format!(
            "{n} cases: paths {:.1e} (tol 1e-10), Haar MC {:.2}σ (≤ 3σ), I20 {:.1e} (tol 1e-10), \
             I21 excess {:.1e} (tol 1e-12), structure {}/{}, negative control caught {}/{n}",
            tally.path,
            tally.mc_sigma,
            tally.i20,
            tally.i21,
            tally.structure_ok,
            tally.structure_total,
            tally.control_caught
        ),
    )
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let results = [
        run("A1", secs(1), a1),
        run("A2", secs(10), a2),
        run("A3", secs(600), a3),
        run("A4", secs(300), a4),
        run("A5", secs(120), a5),
        run("A6", secs(600), a6),
        run("A7", secs(60), a7),
        run("A8", secs(60), a8),
        run("A9", secs(120), a9),
    ];
    if results.iter().all(|&ok| ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
