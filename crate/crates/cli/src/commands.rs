//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use asymmetry_core::moments::{
    asymmetry_finite_group_with, asymmetry_lie_group_with, fit_exponential_to_constant, fit_log_slope, AsymmetryReport,
    FiniteSumOptions, FitModel, FitResult, Mode, DEFAULT_TERM_CAP,
};
use asymmetry_core::mps::{build_transfer_operator, clustering_report, MpsTensor, CLUSTERING_TOL};
use asymmetry_core::states::{xxz_ground_state, PhaseHint, StateDescriptor, XxzSpec};
use asymmetry_core::symmetry::{detect_invariant_algebra, detect_invariant_subgroup, GroupSpec, ELEMENT_TOL};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ExperimentConfig, GroupDescriptor};
use crate::CliError;

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    // write-then-rename so an interrupted run never leaves a truncated file
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Builds the site tensor; ground-state searches leave their convergence log
/// in `log_dir` when given.
pub fn build_state(desc: &StateDescriptor, log_dir: Option<&Path>) -> Result<MpsTensor, CliError> {
    match *desc {
        StateDescriptor::Xxz { delta, bond_dim, phase_hint } => {
            let spec = XxzSpec::new(delta, bond_dim).map_err(CliError::from_config)?;
            let hint = phase_hint.unwrap_or(if delta < 0.0 { PhaseHint::Ferro } else { PhaseHint::Antiferro });
            let gs = xxz_ground_state(&spec, hint)?;
            log::info!("xxz delta {delta}: energy density {:.12}", gs.energy_density);
            if let Some(dir) = log_dir {
                write_file(&dir.join(format!("tebd_delta_{delta}.csv")), &gs.log_csv())?;
            }
            Ok(gs.tensor)
        }
        _ => desc.build().map_err(|e| match e {
            asymmetry_core::Error::BadParam(_) => CliError::from_config(e),
            other => CliError::Core(other),
        }),
    }
}

/// Least-squares fit of a report, points taken in ascending `ℓ`.
pub fn fit_report(r: &AsymmetryReport, model: FitModel) -> Result<FitResult, CliError> {
    let mut pts: Vec<(usize, f64)> = r.ell_grid.iter().copied().zip(r.delta_s.iter().copied()).collect();
    pts.sort_by_key(|p| p.0);
    let x: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    Ok(match model {
        FitModel::ExponentialToConstant => fit_exponential_to_constant(&x, &y)?,
        FitModel::LogSlope => fit_log_slope(&x, &y)?,
    })
}

fn group_json(desc: Option<&GroupDescriptor>, summary: serde_json::Value) -> serde_json::Value {
    json!({ "descriptor": desc, "summary": summary })
}

fn reports_for(cfg: &ExperimentConfig, t: &MpsTensor, ells: &[usize]) -> Result<Vec<AsymmetryReport>, CliError> {
    let group = cfg.build_group(t.phys_dim())?;
    let mode = cfg.volume.unwrap_or(Mode::InfiniteVolume);
    let mut out = Vec::with_capacity(cfg.n.len());
    for &n in &cfg.n {
        let mut r = match &group {
            GroupSpec::Finite(g) => {
                let opts = FiniteSumOptions { term_cap: cfg.term_cap().unwrap_or(DEFAULT_TERM_CAP), mode };
                asymmetry_finite_group_with(t, g, n, ells, &opts)?
            }
            GroupSpec::Lie(g) => asymmetry_lie_group_with(t, g, n, ells, mode)?,
        };
        r.group = group_json(cfg.group.as_ref(), r.group.take());
        for (k, v) in &cfg.tolerances {
            r.tolerances.insert(k.clone(), *v);
        }
        if let Some(model) = cfg.fit {
            r.fit = Some(fit_report(&r, model)?);
        }
        out.push(r);
    }
    Ok(out)
}

/// One report per replica index, without touching the filesystem beyond
/// ground-state logs.
pub fn compute_reports(cfg: &ExperimentConfig) -> Result<Vec<AsymmetryReport>, CliError> {
    cfg.validate()?;
    let ells = cfg.ell_values()?;
    if ells.is_empty() {
        return Err(CliError::Config("empty ell grid".into()));
    }
    let t = build_state(&cfg.state, cfg.output.dir.as_deref())?;
    reports_for(cfg, &t, &ells)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

/// Writes `<prefix>_n<n>.csv` and `.json` per replica index and returns the paths.
pub fn cmd_compute(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let reports = compute_reports(cfg)?;
    let dir = out_dir(cfg);
    let prefix = cfg.output.prefix.clone().unwrap_or_else(|| cfg.state.name().to_string());
    let mut paths = Vec::new();
    for r in &reports {
        let csv = dir.join(format!("{prefix}_n{}.csv", r.n));
        let js = dir.join(format!("{prefix}_n{}.json", r.n));
        write_file(&csv, &r.to_csv())?;
        write_file(&js, &r.to_json())?;
        paths.push(csv);
        paths.push(js);
    }
    Ok(paths)
}

pub const SWEEP_HEADER: &str = "delta,ell,n,delta_s,mc_std_err,status";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_MANIFEST: &str = "sweep_manifest.json";

/// Completed sweep cells keyed by anisotropy, with the configuration they
/// belong to.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepManifest {
    pub config: serde_json::Value,
    pub cells: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub csv: PathBuf,
    pub cells: usize,
    pub resumed_cells: usize,
    pub failed_cells: usize,
}

fn cell_key(delta: f64) -> String {
    format!("delta={delta}")
}

fn sweep_cell(cfg: &ExperimentConfig, delta: f64, ells: &[usize], dir: &Path) -> Result<Vec<String>, CliError> {
    let StateDescriptor::Xxz { bond_dim, phase_hint, .. } = cfg.state else {
        return Err(CliError::Config("sweeps run over xxz states".into()));
    };
    let state = StateDescriptor::Xxz { delta, bond_dim, phase_hint };
    let t = build_state(&state, Some(dir))?;
    let mut rows = Vec::new();
    for r in reports_for(cfg, &t, ells)? {
        for (i, &ell) in r.ell_grid.iter().enumerate() {
            let err = r.mc_std_err.as_ref().map(|e| format!("{:.16e}", e[i])).unwrap_or_default();
            rows.push(format!("{delta},{ell},{},{:.16e},{err},ok", r.n, r.delta_s[i]));
        }
    }
    Ok(rows)
}

fn failure_rows(cfg: &ExperimentConfig, delta: f64, ells: &[usize], e: &CliError) -> Vec<String> {
    let reason = e.to_string().replace([',', '\n'], ";");
    cfg.n
        .iter()
        .flat_map(|&n| ells.iter().map(move |ell| (n, *ell)))
        .map(|(n, ell)| format!("{delta},{ell},{n},,,failed: {reason}"))
        .collect()
}

/// Cartesian sweep over the configured anisotropies. Completed cells are
/// recorded in a manifest next to the CSV, so an interrupted sweep resumes
/// where it stopped and produces the same file.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome, CliError> {
    cfg.validate()?;
    let sweep = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("missing sweep section".into()))?;
    if !matches!(cfg.state, StateDescriptor::Xxz { .. }) {
        return Err(CliError::Config("sweeps run over xxz states".into()));
    }
    if sweep.delta.iter().any(|d| !d.is_finite()) {
        return Err(CliError::Config("anisotropies must be finite".into()));
    }
    let ells = match &cfg.ell {
        Some(g) => g.values()?,
        None => Vec::new(),
    };
    let dir = out_dir(cfg);
    let manifest_path = dir.join(SWEEP_MANIFEST);
    let mut identity = cfg.clone();
    identity.output = Default::default();
    let identity = serde_json::to_value(&identity).expect("plain data");
    let manifest = match std::fs::read_to_string(&manifest_path) {
        Ok(text) => {
            let m: SweepManifest =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("sweep manifest: {e}")))?;
            if m.config != identity {
                return Err(CliError::Config(format!(
                    "{} belongs to a different configuration",
                    manifest_path.display()
                )));
            }
            m
        }
        Err(_) => SweepManifest { config: identity, cells: BTreeMap::new() },
    };
    let resumed_cells = sweep.delta.iter().filter(|d| manifest.cells.contains_key(&cell_key(**d))).count();
    let manifest = Mutex::new(manifest);
    let pending: Vec<f64> = {
        let m = manifest.lock().expect("no poisoning");
        sweep.delta.iter().copied().filter(|d| !m.cells.contains_key(&cell_key(*d))).collect()
    };
    let failures: BTreeMap<String, Vec<String>> = pending
        .par_iter()
        .filter_map(|&delta| {
            if ells.is_empty() {
                let mut m = manifest.lock().expect("no poisoning");
                m.cells.insert(cell_key(delta), Vec::new());
                return None;
            }
            match sweep_cell(cfg, delta, &ells, &dir) {
                Ok(rows) => {
                    let mut m = manifest.lock().expect("no poisoning");
                    m.cells.insert(cell_key(delta), rows);
                    let text = serde_json::to_string_pretty(&*m).expect("plain data");
                    if let Err(e) = write_file(&manifest_path, &text) {
                        log::error!("{e}");
                    }
                    None
                }
                Err(e) => {
                    log::error!("sweep cell delta={delta} failed: {e}");
                    Some((cell_key(delta), failure_rows(cfg, delta, &ells, &e)))
                }
            }
        })
        .collect();
    let manifest = manifest.into_inner().expect("no poisoning");
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for d in &sweep.delta {
        let key = cell_key(*d);
        let rows = manifest.cells.get(&key).or_else(|| failures.get(&key)).expect("every cell ran");
        for row in rows {
            csv.push_str(row);
            csv.push('\n');
        }
    }
    let path = dir.join(SWEEP_CSV);
    write_file(&path, &csv)?;
    write_file(&manifest_path, &serde_json::to_string_pretty(&manifest).expect("plain data"))?;
    Ok(SweepOutcome { csv: path, cells: sweep.delta.len(), resumed_cells, failed_cells: failures.len() })
}

/// Fits a JSON report with the named model.
pub fn cmd_fit(report: &Path, model: &str) -> Result<FitResult, CliError> {
    let model: FitModel = serde_json::from_value(json!(model))
        .map_err(|_| CliError::Config(format!("unknown model {model:?}; use exponential_to_constant or log_slope")))?;
    let text = std::fs::read_to_string(report).map_err(|e| CliError::Config(format!("{}: {e}", report.display())))?;
    let r: AsymmetryReport = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("report: {e}")))?;
    fit_report(&r, model)
}

/// Clustering diagnostics and, for clustering states with a group, the
/// subgroup that leaves the state invariant.
pub fn cmd_state_info(state: &StateDescriptor, group: Option<&GroupDescriptor>) -> Result<serde_json::Value, CliError> {
    let t = build_state(state, None)?;
    let rep = clustering_report(&build_transfer_operator(&t), CLUSTERING_TOL)?;
    let mut info = json!({
        "state": state,
        "d": t.phys_dim(),
        "bond_dim": t.bond_dim(),
        "clustering": rep,
    });
    if let Some(desc) = group {
        let cfg = ExperimentConfig {
            state: state.clone(),
            group: Some(desc.clone()),
            n: vec![2],
            ell: None,
            mode: None,
            volume: None,
            quadrature: None,
            output: Default::default(),
            seed: Some(0),
            tolerances: Default::default(),
            fit: None,
            sweep: None,
        };
        info["invariant_subgroup"] = if rep.is_clustering {
            let h = match cfg.build_group(t.phys_dim())? {
                GroupSpec::Finite(g) => detect_invariant_subgroup(&t, &g, ELEMENT_TOL)?,
                GroupSpec::Lie(g) => detect_invariant_algebra(&t, &g)?,
            };
            serde_json::to_value(h).expect("plain data")
        } else {
            json!(null)
        };
    }
    if !rep.is_clustering {
        info["note"] = json!(asymmetry_core::Error::NonClustering(rep.gap_ratio).to_string());
    }
    Ok(info)
}
