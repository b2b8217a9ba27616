//! Experiment configuration files.

use std::collections::BTreeMap;
use std::path::PathBuf;

use asymmetry_core::linalg::CMatrix;
use asymmetry_core::moments::{FitModel, Mode};
use asymmetry_core::states::StateDescriptor;
use asymmetry_core::symmetry::{
    spin_flip_group, y_rotation_group, GroupSpec, GroupSpecJson, LieGroupRep, LieKind, QuadratureScheme, QuadratureSpec,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Tolerance keys accepted by `tolerances` and `--tol`.
pub const TOLERANCE_KEYS: &[&str] = &["term_cap"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub state: StateDescriptor,
    #[serde(default)]
    pub group: Option<GroupDescriptor>,
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default)]
    pub ell: Option<EllGrid>,
    /// Must agree with the group when present.
    #[serde(default)]
    pub mode: Option<RunMode>,
    /// Infinite chain (default) or a periodic ring.
    #[serde(default)]
    pub volume: Option<Mode>,
    #[serde(default)]
    pub quadrature: Option<QuadratureOverrides>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub fit: Option<FitModel>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

fn default_n() -> Vec<usize> {
    vec![2]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    FiniteGroup,
    Lie,
}

/// Either a catalog group acting on blocks of spin-1/2 sites, or explicit
/// generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupDescriptor {
    Named(NamedGroup),
    Explicit(GroupSpecJson),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedGroup {
    /// `z4_y_rotation`, `z2_spin_flip`, `u1_z` or `su2`.
    pub named: String,
    /// Spin-1/2 sites per MPS site; inferred from `d` when absent.
    #[serde(default)]
    pub block: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureOverrides {
    #[serde(default)]
    pub scheme: Option<QuadratureScheme>,
    #[serde(rename = "K", default)]
    pub nodes: Option<usize>,
    #[serde(rename = "N", default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EllGrid {
    List(Vec<usize>),
    Geometric(GeometricGrid),
    Range(RangeGrid),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricGrid {
    pub start: usize,
    pub stop: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeGrid {
    pub start: usize,
    /// Inclusive.
    pub stop: usize,
    #[serde(default = "one")]
    pub step: usize,
}

fn one() -> usize {
    1
}

impl EllGrid {
    /// Ascending, deduplicated subsystem sizes.
    pub fn values(&self) -> Result<Vec<usize>, CliError> {
        let mut v = match self {
            EllGrid::List(v) => v.clone(),
            EllGrid::Range(r) => {
                if r.step == 0 {
                    return Err(CliError::Config("ell range step must be positive".into()));
                }
                (r.start..=r.stop).step_by(r.step).collect()
            }
            EllGrid::Geometric(g) => {
                if !(g.ratio > 1.0) || g.start == 0 {
                    return Err(CliError::Config("geometric ell grid needs start >= 1 and ratio > 1".into()));
                }
                let mut out = Vec::new();
                let mut x = g.start as f64;
                while x.round() as usize <= g.stop {
                    out.push(x.round() as usize);
                    x *= g.ratio;
                }
                out
            }
        };
        v.sort_unstable();
        v.dedup();
        if v.first() == Some(&0) {
            return Err(CliError::Config("ell must be positive".into()));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// File name stem; defaults to the state name.
    #[serde(default)]
    pub prefix: Option<String>,
}

/// Cartesian sweep over XXZ anisotropies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub delta: Vec<f64>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tolerances: Vec<(String, f64)>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output.dir = Some(out.clone());
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        for (k, v) in &o.tolerances {
            self.tolerances.insert(k.clone(), *v);
        }
    }

    /// Schema checks that do not need the state tensor.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n.is_empty() || self.n.iter().any(|&n| n < 2) {
            return Err(CliError::Config("n must list replica indices >= 2".into()));
        }
        for (k, v) in &self.tolerances {
            if !TOLERANCE_KEYS.contains(&k.as_str()) {
                return Err(CliError::Config(format!("unknown tolerance {k:?}; known: {TOLERANCE_KEYS:?}")));
            }
            if !(v.is_finite() && *v > 0.0) {
                return Err(CliError::Config(format!("tolerance {k} must be positive")));
            }
        }
        if let Some(ell) = &self.ell {
            ell.values()?;
        }
        if let Some(Mode::FiniteL(l)) = self.volume {
            if l == 0 {
                return Err(CliError::Config("ring length must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn ell_values(&self) -> Result<Vec<usize>, CliError> {
        self.ell.as_ref().ok_or_else(|| CliError::Config("missing ell grid".into()))?.values()
    }

    pub fn term_cap(&self) -> Option<u128> {
        self.tolerances.get("term_cap").map(|&v| v as u128)
    }

    /// Builds the group for a site of dimension `d`, merging quadrature
    /// overrides and the global seed, and checks the mode flag.
    pub fn build_group(&self, d: usize) -> Result<GroupSpec, CliError> {
        let desc = self.group.as_ref().ok_or_else(|| CliError::Config("missing group".into()))?;
        let mut spec = match desc {
            GroupDescriptor::Explicit(j) => j.build().map_err(CliError::from_config)?,
            GroupDescriptor::Named(ng) => named_group(ng, d)?,
        };
        if let GroupSpec::Lie(g) = &mut spec {
            let kind = g.kind();
            let q = &mut g.quadrature;
            if let Some(o) = &self.quadrature {
                if let Some(s) = o.scheme {
                    q.scheme = s;
                }
                if let Some(k) = o.nodes {
                    q.nodes = k;
                }
                if let Some(nn) = o.samples {
                    q.samples = nn;
                }
                if o.seed.is_some() {
                    q.seed = o.seed;
                }
            }
            if q.seed.is_none() {
                q.seed = self.seed;
            }
            if kind == LieKind::Su2 {
                q.scheme = QuadratureScheme::Montecarlo;
            }
            let deterministic =
                kind == LieKind::U1 && self.n.iter().all(|&n| n <= 3) && q.scheme == QuadratureScheme::Equispaced;
            if !deterministic && q.seed.is_none() {
                return Err(CliError::Config(
                    "Monte Carlo integration needs a seed (config \"seed\" or --seed)".into(),
                ));
            }
        }
        let want = match spec {
            GroupSpec::Finite(_) => RunMode::FiniteGroup,
            GroupSpec::Lie(_) => RunMode::Lie,
        };
        if let Some(m) = self.mode {
            if m != want {
                return Err(CliError::Config(format!("mode {m:?} does not match a {want:?} group")));
            }
        }
        Ok(spec)
    }
}

fn block_for(ng: &NamedGroup, d: usize) -> Result<usize, CliError> {
    let block = match ng.block {
        Some(b) => b,
        None if d.is_power_of_two() && d > 1 => d.trailing_zeros() as usize,
        None => return Err(CliError::Config(format!("catalog groups act on spin-1/2 blocks; site dimension {d}"))),
    };
    if block == 0 || 1usize.checked_shl(block as u32) != Some(d) {
        return Err(CliError::Config(format!("group block {block} does not match site dimension {d}")));
    }
    Ok(block)
}

/// `Σ_i 1⊗…⊗X⊗…⊗1` over `block` factors.
fn block_generator(x: &CMatrix, block: usize) -> CMatrix {
    let d = x.rows();
    let mut acc = CMatrix::zeros(d.pow(block as u32), d.pow(block as u32));
    for i in 0..block {
        let term = CMatrix::identity(d.pow(i as u32)).kron(x).kron(&CMatrix::identity(d.pow((block - i - 1) as u32)));
        acc = &acc + &term;
    }
    acc
}

fn named_group(ng: &NamedGroup, d: usize) -> Result<GroupSpec, CliError> {
    let block = block_for(ng, d)?;
    let quad = QuadratureSpec::default();
    Ok(match ng.named.as_str() {
        "z4_y_rotation" => {
            let g = y_rotation_group(block).map_err(CliError::from_config)?;
            // odd blocks generate the double cover; keep the physical action
            let g = if g.order() == 8 { g.projective_quotient().map_err(CliError::from_config)? } else { g };
            GroupSpec::Finite(g)
        }
        "z2_spin_flip" => GroupSpec::Finite(spin_flip_group(block).map_err(CliError::from_config)?),
        "u1_z" => {
            let x = LieGroupRep::u1_spin_half().generators()[0].clone();
            GroupSpec::Lie(
                LieGroupRep::new(LieKind::U1, vec![block_generator(&x, block)], quad).map_err(CliError::from_config)?,
            )
        }
        "su2" => {
            let gens = LieGroupRep::su2_spin_half(QuadratureSpec::default())
                .generators()
                .iter()
                .map(|x| block_generator(x, block))
                .collect();
            GroupSpec::Lie(LieGroupRep::new(LieKind::Su2, gens, quad).map_err(CliError::from_config)?)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown group {other:?}; known: z4_y_rotation, z2_spin_flip, u1_z, su2"
            )))
        }
    })
}
