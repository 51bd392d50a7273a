//! Subcommand implementations. Each resolves its configuration, runs the
//! library operation and writes its artifacts under `--out`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use nalgebra::SMatrix;
use rayon::prelude::*;
use toml::Value;

use voidlattice::curvature::eam::{
    eam_curvature_energy, eam_lemma_check, eam_phi, random_interior_config, EamModel,
};
use voidlattice::curvature::{curvature_energy, detect_laminate, non_flat_sites, CurvatureModel};
use voidlattice::elastic::{
    coupled_cells, elastic_energy, evaluate_q_bulk, minimize_elastic, q_bulk, ChiMode, CellEnergyModel,
    DiscreteGradient, Displacement, SolverParams,
};
use voidlattice::gamma::{gamma_limsup_experiment, suggest_regime, GammaModels, RegimeRow, ScalingRegime};
use voidlattice::io::{parse_displacement, parse_neighbor_model, parse_void_set, write_displacement, write_raster, write_void_set, VoidSetFile};
use voidlattice::lattice::{voxelize, BoxUnion, LatticeDomain, RealBox, VoidSet};
use voidlattice::mesoscale::{
    block_box, classify_eta_cubes, scaled_block_box, eta_replacement, replacement_cardinality, replacement_perimeter_check,
    smooth_at_eta_scale, smooth_cubic_set, EtaCubeLabel, SmoothParams,
};
use voidlattice::rng::stream;
use voidlattice::surface::{broken_bond_counts, continuum_perimeter, discrete_perimeter_total, NeighborModel};

use crate::config::{float, floats, int, ints, invalid, string, Config};
use crate::output::{csv, num, Output};

macro_rules! by_dim {
    ($dim:expr, $f:ident ( $($arg:expr),* )) => {
        match $dim {
            2 => $f::<2>($($arg),*),
            3 => $f::<3>($($arg),*),
            d => Err(invalid(format!("dimension must be 2 or 3, found {d}"))),
        }
    };
}

fn start(command: &'static str, schema: Vec<(&'static str, &'static str, Value)>, file: &Option<PathBuf>) -> anyhow::Result<Config> {
    let mut c = Config::new(command, &schema);
    if let Some(p) = file {
        c.load_file(p)?;
    }
    Ok(c)
}

fn log_overrides(cfg: &Config, out: &Output) {
    for o in cfg.overrides() {
        out.progress(format!("override: {o}"));
    }
}

fn opt_f(x: Option<f64>) -> Option<Value> {
    x.map(float)
}

fn opt_i(x: Option<i64>) -> Option<Value> {
    x.map(int)
}

fn opt_s(x: &Option<PathBuf>) -> Option<Value> {
    x.as_ref().map(|p| string(&p.to_string_lossy()))
}

fn read_text(path: &Path, what: &str) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {what} {}: {e}", path.display())))
}

fn read_set_file(path: &str) -> anyhow::Result<VoidSetFile> {
    if path.is_empty() {
        return Err(invalid("a void-set file is required (--set or [input] set)"));
    }
    let text = read_text(Path::new(path), "void-set file")?;
    parse_void_set(&text).map_err(|e| invalid(format!("{path}: {e}")))
}

fn domain_schema() -> Vec<(&'static str, &'static str, Value)> {
    vec![("domain", "n", int(16)), ("domain", "layers", int(1))]
}

fn model_schema() -> Vec<(&'static str, &'static str, Value)> {
    vec![
        ("model", "k1", float(1.0)),
        ("model", "k2", float(1.0)),
        ("model", "chi_penalty", float(1e3)),
        ("model", "surf_scale", float(1.0)),
    ]
}

fn bond_schema() -> Vec<(&'static str, &'static str, Value)> {
    vec![("bonds", "c1", float(1.0)), ("bonds", "c2", float(0.0)), ("bonds", "neighbors", string(""))]
}

fn cell_model(cfg: &Config) -> anyhow::Result<CellEnergyModel> {
    let chi = cfg.f64("model", "chi_penalty");
    let m = CellEnergyModel {
        k1: cfg.f64("model", "k1"),
        k2: cfg.f64("model", "k2"),
        chi: if chi == 0.0 { ChiMode::Off } else { ChiMode::Penalty(chi) },
        surf_scale: cfg.f64("model", "surf_scale"),
    };
    m.validate()?;
    Ok(m)
}

fn neighbor_model<const D: usize>(cfg: &Config) -> anyhow::Result<NeighborModel<D>> {
    let file = cfg.str("bonds", "neighbors");
    if !file.is_empty() {
        let text = read_text(Path::new(file), "neighbor model")?;
        return parse_neighbor_model::<D>(&text).map_err(|e| invalid(format!("{file}: {e}")));
    }
    let (c1, c2) = (cfg.f64("bonds", "c1"), cfg.f64("bonds", "c2"));
    if !(c1 > 0.0 && c2 >= 0.0) {
        return Err(invalid("bond coefficients need c1 > 0 and c2 >= 0"));
    }
    Ok(if c2 > 0.0 { NeighborModel::nearest_and_diagonal(c1, c2) } else { NeighborModel::nearest(c1) })
}

fn cube_domain<const D: usize>(cfg: &Config, eps: f64) -> anyhow::Result<LatticeDomain<D>> {
    let n = cfg.i64("domain", "n");
    let layers = cfg.i64("domain", "layers");
    if n < 1 || layers < 1 {
        return Err(invalid("[domain] n and layers must be positive"));
    }
    Ok(LatticeDomain::cube(eps, n, layers)?)
}

fn strain<const D: usize>(cfg: &Config, section: &str) -> anyhow::Result<SMatrix<f64, D, D>> {
    let v = cfg.f64_list(section, "strain")?;
    if v.is_empty() {
        return Ok(SMatrix::zeros());
    }
    if v.len() != D * D {
        return Err(invalid(format!("[{section}] strain needs {} entries (row-major), found {}", D * D, v.len())));
    }
    Ok(SMatrix::from_row_slice(&v))
}

fn load_set<const D: usize>(file: &VoidSetFile, domain: &LatticeDomain<D>) -> anyhow::Result<VoidSet<D>> {
    Ok(file.to_set(Some(domain))?)
}

// ---------------------------------------------------------------- energy

#[derive(Args, Debug)]
pub struct EnergyArgs {
    /// Configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Void-set file.
    #[arg(long)]
    pub set: Option<PathBuf>,
    /// Displacement file; sites it omits keep the affine strain value.
    #[arg(long)]
    pub displacement: Option<PathBuf>,
    /// Sites per axis of the cubic body.
    #[arg(long)]
    pub n: Option<i64>,
    #[arg(long)]
    pub delta: Option<f64>,
}

pub fn energy(a: &EnergyArgs, out: &Output) -> anyhow::Result<()> {
    let mut schema = vec![("input", "set", string("")), ("input", "displacement", string(""))];
    schema.extend(domain_schema());
    schema.extend(model_schema());
    schema.extend([("elastic", "delta", float(1e-3)), ("elastic", "strain", floats(&[]))]);
    let mut cfg = start("energy", schema, &a.config)?;
    cfg.flag("input", "set", opt_s(&a.set))?;
    cfg.flag("input", "displacement", opt_s(&a.displacement))?;
    cfg.flag("domain", "n", opt_i(a.n))?;
    cfg.flag("elastic", "delta", opt_f(a.delta))?;
    log_overrides(&cfg, out);
    let file = read_set_file(cfg.str("input", "set"))?;
    by_dim!(file.dim, energy_d(&cfg, &file, out))
}

fn energy_d<const D: usize>(cfg: &Config, file: &VoidSetFile, out: &Output) -> anyhow::Result<()> {
    let domain = cube_domain::<D>(cfg, file.eps)?;
    let e = load_set(file, &domain)?;
    let model = cell_model(cfg)?;
    let f = strain::<D>(cfg, "elastic")?;
    let mut delta = cfg.f64("elastic", "delta");
    let mut u = Displacement::affine(&domain, &e, &f);
    let dfile = cfg.str("input", "displacement");
    if !dfile.is_empty() {
        let d = parse_displacement(&read_text(Path::new(dfile), "displacement file")?)
            .map_err(|err| invalid(format!("{dfile}: {err}")))?;
        if d.dim != D {
            return Err(invalid(format!("dimension mismatch: void set has dim {D}, displacement file has dim {}", d.dim)));
        }
        if (d.eps - file.eps).abs() > 1e-12 * file.eps {
            return Err(invalid(format!("lattice spacing mismatch: void set {} vs displacement {}", file.eps, d.eps)));
        }
        d.apply_to(&mut u)?;
        delta = d.delta;
    }
    let region = coupled_cells(&domain);
    let energy = elastic_energy(&model, &u, &e, delta, &region)?;
    let cells = region.len();
    let mut report = cfg.header();
    let _ = writeln!(report, "delta_used = {}", num(delta));
    let _ = writeln!(report, "void_sites = {}", e.len());
    let _ = writeln!(report, "coupled_cells = {cells}");
    let _ = writeln!(report, "elastic_energy = {}", num(energy));
    out.write("energy.txt", &report)?;
    print!("{report}");
    Ok(())
}

// ------------------------------------------------------------- perimeter

#[derive(Args, Debug)]
pub struct PerimeterArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub set: Option<PathBuf>,
    /// Neighbor model file (`ξ… coefficient` per line).
    #[arg(long)]
    pub neighbors: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<i64>,
}

pub fn perimeter(a: &PerimeterArgs, out: &Output) -> anyhow::Result<()> {
    let mut schema = vec![("input", "set", string(""))];
    schema.extend(domain_schema());
    schema.extend(bond_schema());
    let mut cfg = start("perimeter", schema, &a.config)?;
    cfg.flag("input", "set", opt_s(&a.set))?;
    cfg.flag("bonds", "neighbors", opt_s(&a.neighbors))?;
    cfg.flag("domain", "n", opt_i(a.n))?;
    log_overrides(&cfg, out);
    let file = read_set_file(cfg.str("input", "set"))?;
    by_dim!(file.dim, perimeter_d(&cfg, &file, out))
}

fn perimeter_d<const D: usize>(cfg: &Config, file: &VoidSetFile, out: &Output) -> anyhow::Result<()> {
    let domain = cube_domain::<D>(cfg, file.eps)?;
    let e = load_set(file, &domain)?;
    let model = neighbor_model::<D>(cfg)?;
    let f_per = discrete_perimeter_total(&e, &model, &domain);
    let per_phi = continuum_perimeter(&voxelize(&e, file.eps), &model.density(), None);
    let counts = broken_bond_counts(&e, &model, &domain, domain.u_box());
    let mut report = cfg.header();
    let _ = writeln!(report, "void_sites = {}", e.len());
    let _ = writeln!(report, "F_per = {}", num(f_per));
    let _ = writeln!(report, "Per_phi_of_cubes = {}", num(per_phi));
    let _ = writeln!(report, "difference = {}", num(f_per - per_phi));
    for ((xi, c), n) in model.bonds().iter().zip(&counts) {
        let _ = writeln!(report, "broken {xi:?} coefficient {} count {n}", num(*c));
    }
    out.write("perimeter.txt", &report)?;
    print!("{report}");
    Ok(())
}

// ------------------------------------------------------------- curvature

#[derive(Args, Debug)]
pub struct CurvatureArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub set: Option<PathBuf>,
    /// η in lattice units.
    #[arg(long)]
    pub eta: Option<i64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub n: Option<i64>,
}

pub fn curvature(a: &CurvatureArgs, out: &Output) -> anyhow::Result<()> {
    let mut schema = vec![("input", "set", string(""))];
    schema.extend(domain_schema());
    schema.extend([("curvature", "eta", int(4)), ("curvature", "gamma", float(1.0)), ("curvature", "q", float(2.0))]);
    let mut cfg = start("curvature", schema, &a.config)?;
    cfg.flag("input", "set", opt_s(&a.set))?;
    cfg.flag("curvature", "eta", opt_i(a.eta))?;
    cfg.flag("curvature", "gamma", opt_f(a.gamma))?;
    cfg.flag("curvature", "q", opt_f(a.q))?;
    cfg.flag("domain", "n", opt_i(a.n))?;
    log_overrides(&cfg, out);
    let file = read_set_file(cfg.str("input", "set"))?;
    by_dim!(file.dim, curvature_d(&cfg, &file, out))
}

fn curvature_d<const D: usize>(cfg: &Config, file: &VoidSetFile, out: &Output) -> anyhow::Result<()> {
    let domain = cube_domain::<D>(cfg, file.eps)?;
    let e = load_set(file, &domain)?;
    let model = CurvatureModel {
        gamma: cfg.f64("curvature", "gamma"),
        n: cfg.i64("curvature", "eta"),
        q: cfg.f64("curvature", "q"),
    };
    model.validate()?;
    let sites = non_flat_sites(&model, &e, &domain, domain.u_box());
    let f = curvature_energy(&model, &e, &domain, domain.u_box());
    let mut report = cfg.header();
    let _ = writeln!(report, "eta = {}", num(model.eta(file.eps)));
    let _ = writeln!(report, "non_flat_sites = {sites}");
    let _ = writeln!(report, "cell_quantum = {}", num(model.quantum(file.eps)));
    let _ = writeln!(report, "F_curv = {}", num(f));
    out.write("curvature.txt", &report)?;
    print!("{report}");
    Ok(())
}

// -------------------------------------------------------------- flatness

#[derive(Args, Debug)]
pub struct FlatnessArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub set: Option<PathBuf>,
    /// η in lattice units.
    #[arg(long)]
    pub eta: Option<i64>,
    #[arg(long)]
    pub n: Option<i64>,
}

pub fn flatness(a: &FlatnessArgs, out: &Output) -> anyhow::Result<()> {
    let mut schema = vec![("input", "set", string(""))];
    schema.extend(domain_schema());
    schema.push(("flatness", "eta", int(4)));
    let mut cfg = start("flatness", schema, &a.config)?;
    cfg.flag("input", "set", opt_s(&a.set))?;
    cfg.flag("flatness", "eta", opt_i(a.eta))?;
    cfg.flag("domain", "n", opt_i(a.n))?;
    log_overrides(&cfg, out);
    let file = read_set_file(cfg.str("input", "set"))?;
    by_dim!(file.dim, flatness_d(&cfg, &file, out))
}

fn flatness_d<const D: usize>(cfg: &Config, file: &VoidSetFile, out: &Output) -> anyhow::Result<()> {
    let domain = cube_domain::<D>(cfg, file.eps)?;
    let e = load_set(file, &domain)?;
    let n = cfg.i64("flatness", "eta");
    if n < 1 {
        return Err(invalid("[flatness] eta must be a positive integer"));
    }
    let labels = classify_eta_cubes(&e, n);
    let curv = CurvatureModel { gamma: 1.0, n, q: 2.0 };
    let rows: Vec<Vec<String>> = labels
        .par_iter()
        .map(|(m, label)| {
            let block = block_box(m, n);
            let big = scaled_block_box(m, n, 3, 2);
            let axis = detect_laminate(&e, &big).map(|l| l.axis as i64).unwrap_or(-1);
            let mut row: Vec<String> = m.iter().map(|v| v.to_string()).collect();
            row.push(if *label == EtaCubeLabel::Good { "good" } else { "bad" }.to_string());
            row.push(axis.to_string());
            row.push(e.count_in(&block).to_string());
            row.push(non_flat_sites(&curv, &e, &domain, &block.intersect(domain.u_box())).to_string());
            row
        })
        .collect();
    let mut cols: Vec<String> = (1..=D).map(|k| format!("m{k}")).collect();
    cols.extend(["label", "laminate_axis", "void_sites", "non_flat_sites"].map(String::from));
    let colrefs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let text = csv(&cfg.header(), &colrefs, &rows);
    out.write("flatness.csv", &text)?;
    print!("{text}");
    Ok(())
}

// --------------------------------------------------------------- replace

#[derive(Args, Debug)]
pub struct ReplaceArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub set: Option<PathBuf>,
    /// η in lattice units.
    #[arg(long)]
    pub eta: Option<i64>,
    #[arg(long)]
    pub n: Option<i64>,
}

pub fn replace(a: &ReplaceArgs, out: &Output) -> anyhow::Result<()> {
    let mut schema = vec![("input", "set", string(""))];
    schema.extend(domain_schema());
    schema.extend(bond_schema());
    schema.push(("replace", "eta", int(4)));
    let mut cfg = start("replace", schema, &a.config)?;
    cfg.flag("input", "set", opt_s(&a.set))?;
    cfg.flag("replace", "eta", opt_i(a.eta))?;
    cfg.flag("domain", "n", opt_i(a.n))?;
    log_overrides(&cfg, out);
    let file = read_set_file(cfg.str("input", "set"))?;
    by_dim!(file.dim, replace_d(&cfg, &file, out))
}

fn replace_d<const D: usize>(cfg: &Config, file: &VoidSetFile, out: &Output) -> anyhow::Result<()> {
    let domain = cube_domain::<D>(cfg, file.eps)?;
    let e = load_set(file, &domain)?;
    let n = cfg.i64("replace", "eta");
    if n < 1 {
        return Err(invalid("[replace] eta must be a positive integer"));
    }
    let model = neighbor_model::<D>(cfg)?;
    let r = eta_replacement(&e, n, &domain);
    let rep = replacement_perimeter_check(&e, n, &model, &domain);
    let mut report = cfg.header();
    let _ = writeln!(report, "void_sites = {}", e.len());
    let _ = writeln!(report, "replaced_sites = {}", r.len());
    let _ = writeln!(report, "added_sites = {}", replacement_cardinality(&e, n, &domain, None));
    let _ = writeln!(report, "good_cubes = {}", rep.good_cubes);
    let _ = writeln!(report, "bad_cubes = {}", rep.bad_cubes);
    let _ = writeln!(report, "good_cube_equalities = {}", rep.equalities);
    let _ = writeln!(report, "good_cube_violations = {}", rep.violations.len());
    for v in &rep.violations {
        let _ = writeln!(report, "violation block {:?} before {} after {}", v.block, num(v.before), num(v.after));
    }
    out.write("replace.txt", &report)?;
    out.write("replaced_set.txt", &format!("{}{}", cfg.header(), write_void_set(&r, file.eps)))?;
    print!("{report}");
    Ok(())
}

// ---------------------------------------------------------------- smooth

#[derive(Args, Debug)]
pub struct SmoothArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub set: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Fine cells per unit cube (0 selects ⌈16/σ⌉).
    #[arg(long)]
    pub grid: Option<i64>,
    /// Super-level `t` (0 scans the default levels).
    #[arg(long)]
    pub level: Option<f64>,
    /// Treat the set as η-aligned lattice data with this η/ε (0 reads the
    /// indices as unit cubes).
    #[arg(long)]
    pub eta: Option<i64>,
    #[arg(long)]
    pub n: Option<i64>,
}

pub fn smooth(a: &SmoothArgs, out: &Output) -> anyhow::Result<()> {
    let mut schema = vec![("input", "set", string(""))];
    schema.extend(domain_schema());
    schema.extend([
        ("smooth", "sigma", float(0.3)),
        ("smooth", "grid", int(0)),
        ("smooth", "level", float(0.0)),
        ("smooth", "eta", int(0)),
    ]);
    let mut cfg = start("smooth", schema, &a.config)?;
    cfg.flag("input", "set", opt_s(&a.set))?;
    cfg.flag("smooth", "sigma", opt_f(a.sigma))?;
    cfg.flag("smooth", "grid", opt_i(a.grid))?;
    cfg.flag("smooth", "level", opt_f(a.level))?;
    cfg.flag("smooth", "eta", opt_i(a.eta))?;
    cfg.flag("domain", "n", opt_i(a.n))?;
    log_overrides(&cfg, out);
    let file = read_set_file(cfg.str("input", "set"))?;
    by_dim!(file.dim, smooth_d(&cfg, &file, out))
}

fn smooth_d<const D: usize>(cfg: &Config, file: &VoidSetFile, out: &Output) -> anyhow::Result<()> {
    let grid = cfg.i64("smooth", "grid");
    let level = cfg.f64("smooth", "level");
    let params = SmoothParams {
        sigma: cfg.f64("smooth", "sigma"),
        cells_per_unit: (grid > 0).then_some(grid),
        level: (level != 0.0).then_some(level),
    };
    let eta = cfg.i64("smooth", "eta");
    let sample = if eta > 0 {
        let domain = cube_domain::<D>(cfg, file.eps)?;
        let e = load_set(file, &domain)?;
        smooth_at_eta_scale(&e, eta, &domain, &params)?
    } else {
        let e1: VoidSet<D> = file.to_set(None)?;
        smooth_cubic_set(&e1, &params)?
    };
    let mut report = cfg.header();
    let _ = writeln!(report, "cells_per_unit = {}", sample.m);
    let _ = writeln!(report, "level = {}", num(sample.t));
    let _ = writeln!(report, "scale = {}", num(sample.scale));
    let _ = writeln!(report, "hausdorff = {}", num(sample.hausdorff * sample.scale));
    let _ = writeln!(report, "hausdorff_bound = {}", num((sample.sigma + 2.0 * sample.h()) * sample.scale));
    let _ = writeln!(report, "clearance = {}", num(sample.clearance * sample.scale));
    let _ = writeln!(report, "cover_measure = {}", num(sample.physical_cover().measure()));
    let _ = writeln!(report, "base_measure = {}", num(sample.physical_base().measure()));
    let _ = writeln!(report, "scan: level,passes,min_gradient");
    for (t, ok, g) in &sample.scan {
        let _ = writeln!(report, "{},{},{}", num(*t), ok, num(*g));
    }
    out.write("smooth_report.txt", &report)?;
    out.write("smooth_raster.txt", &format!("{}{}", cfg.header(), write_raster(&sample)))?;
    print!("{report}");
    Ok(())
}

// -------------------------------------------------------------- minimize

#[derive(Args, Debug)]
pub struct MinimizeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub set: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<i64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub k2: Option<f64>,
}

pub fn minimize(a: &MinimizeArgs, out: &Output) -> anyhow::Result<()> {
    let mut schema = vec![("input", "set", string(""))];
    schema.extend([("domain", "dim", int(3)), ("domain", "eps", float(0.125))]);
    schema.extend(domain_schema());
    schema.extend(model_schema());
    schema.extend([
        ("solver", "tol", float(1e-9)),
        ("solver", "max_iter", int(5000)),
        ("solver", "delta", float(1e-3)),
        ("load", "strain", floats(&[])),
    ]);
    let mut cfg = start("minimize", schema, &a.config)?;
    cfg.flag("input", "set", opt_s(&a.set))?;
    cfg.flag("solver", "tol", opt_f(a.tol))?;
    cfg.flag("solver", "max_iter", opt_i(a.max_iter))?;
    cfg.flag("solver", "delta", opt_f(a.delta))?;
    cfg.flag("model", "k1", opt_f(a.k1))?;
    cfg.flag("model", "k2", opt_f(a.k2))?;
    log_overrides(&cfg, out);
    let path = cfg.str("input", "set").to_string();
    let file = if path.is_empty() {
        VoidSetFile { dim: cfg.i64("domain", "dim") as usize, eps: cfg.f64("domain", "eps"), indices: Vec::new() }
    } else {
        let f = read_set_file(&path)?;
        if f.dim as i64 != cfg.i64("domain", "dim") {
            return Err(invalid(format!(
                "dimension mismatch: [domain] dim = {} but {path} has dim {}",
                cfg.i64("domain", "dim"),
                f.dim
            )));
        }
        f
    };
    if !(file.eps > 0.0) {
        return Err(invalid("[domain] eps must be positive"));
    }
    by_dim!(file.dim, minimize_d(&cfg, &file, out))
}

fn minimize_d<const D: usize>(cfg: &Config, file: &VoidSetFile, out: &Output) -> anyhow::Result<()> {
    let domain = cube_domain::<D>(cfg, file.eps)?;
    let e = load_set(file, &domain)?;
    let model = cell_model(cfg)?;
    let f = strain::<D>(cfg, "load")?;
    let max_iter = cfg.i64("solver", "max_iter");
    if max_iter < 0 {
        return Err(invalid("[solver] max_iter must be nonnegative"));
    }
    let params = SolverParams { tol: cfg.f64("solver", "tol"), max_iter: max_iter as usize };
    let delta = cfg.f64("solver", "delta");
    out.progress(format!("minimizing over {} sites", domain.u_box().len()));
    let apply = |x: &[f64; D]| {
        let mut y = [0.0; D];
        for a in 0..D {
            for b in 0..D {
                y[a] += f[(a, b)] * x[b];
            }
        }
        y
    };
    let min = minimize_elastic(&model, &domain, &e, apply, delta, &params)?;
    let sym = (f + f.transpose()) * 0.5;
    let q = q_bulk::<D>(&model, 1e-4);
    let half_q = 0.5 * evaluate_q_bulk(&q, &DiscreteGradient::from_matrix(&sym));
    let mut report = cfg.header();
    let _ = writeln!(report, "converged = {}", min.converged);
    let _ = writeln!(report, "iterations = {}", min.iterations);
    let _ = writeln!(report, "residual = {}", num(min.residual));
    let _ = writeln!(report, "initial_energy = {}", num(min.initial_energy));
    let _ = writeln!(report, "energy = {}", num(min.energy));
    let _ = writeln!(report, "energy_density = {}", num(min.energy_density()));
    let _ = writeln!(report, "half_Q_of_sym_strain = {}", num(half_q));
    out.write("minimize.txt", &report)?;
    out.write("displacement.txt", &format!("{}{}", cfg.header(), write_displacement(&min.displacement, delta)))?;
    print!("{report}");
    Ok(())
}

// ----------------------------------------------------------------- gamma

#[derive(Args, Debug)]
pub struct GammaArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub q: Option<f64>,
}

pub fn gamma(a: &GammaArgs, out: &Output) -> anyhow::Result<()> {
    let mut schema = vec![
        ("regime", "eps", floats(&[0.125, 0.0625, 0.03125])),
        ("regime", "q", float(2.0)),
        ("regime", "n", ints(&[])),
        ("regime", "gamma", floats(&[])),
        ("regime", "delta", floats(&[])),
        ("regime", "enforce_monitors", Value::Boolean(true)),
        ("input", "set", string("")),
        ("input", "dim", int(3)),
        ("input", "box_lo", floats(&[])),
        ("input", "box_hi", floats(&[])),
        ("domain", "omega_lo", floats(&[])),
        ("domain", "omega_hi", floats(&[])),
        ("load", "strain", floats(&[])),
    ];
    schema.extend(model_schema());
    schema.extend(bond_schema());
    let mut cfg = start("gamma", schema, &a.config)?;
    cfg.flag("regime", "q", opt_f(a.q))?;
    log_overrides(&cfg, out);
    let path = cfg.str("input", "set").to_string();
    if path.is_empty() {
        let dim = cfg.i64("input", "dim") as usize;
        by_dim!(dim, gamma_d(&cfg, None, out))
    } else {
        let file = read_set_file(&path)?;
        if file.dim as i64 != cfg.i64("input", "dim") {
            return Err(invalid(format!(
                "dimension mismatch: [input] dim = {} but {path} has dim {}",
                cfg.i64("input", "dim"),
                file.dim
            )));
        }
        by_dim!(file.dim, gamma_d(&cfg, Some(&file), out))
    }
}

fn real_box<const D: usize>(cfg: &Config, section: &str, lo: &str, hi: &str, default: ([f64; D], [f64; D])) -> anyhow::Result<RealBox<D>> {
    let (l, h) = (cfg.f64_list(section, lo)?, cfg.f64_list(section, hi)?);
    if l.is_empty() && h.is_empty() {
        return Ok(RealBox::new(default.0, default.1));
    }
    if l.len() != D || h.len() != D {
        return Err(invalid(format!("[{section}] {lo} and {hi} need {D} entries each")));
    }
    let b = RealBox::new(std::array::from_fn(|a| l[a]), std::array::from_fn(|a| h[a]));
    if (0..D).any(|a| !(b.hi[a] > b.lo[a])) {
        return Err(invalid(format!("[{section}] {hi} must exceed {lo}")));
    }
    Ok(b)
}

fn regime_from(cfg: &Config) -> anyhow::Result<ScalingRegime> {
    let eps = cfg.f64_list("regime", "eps")?;
    let q = cfg.f64("regime", "q");
    let n = cfg.i64_list("regime", "n")?;
    let gamma = cfg.f64_list("regime", "gamma")?;
    let delta = cfg.f64_list("regime", "delta")?;
    if n.is_empty() && gamma.is_empty() && delta.is_empty() {
        return Ok(suggest_regime(&eps, q)?);
    }
    if n.len() != eps.len() || gamma.len() != eps.len() {
        return Err(invalid("explicit regime needs [regime] n and gamma with one entry per eps"));
    }
    let rows = (0..eps.len())
        .map(|k| {
            let d = if delta.is_empty() { eps[k].sqrt() } else { delta[k] };
            RegimeRow::new(eps[k], d, n[k], gamma[k])
        })
        .collect();
    let r = ScalingRegime::explicit(q, rows)?;
    if cfg.bool("regime", "enforce_monitors") {
        r.validate()?;
    }
    Ok(r)
}

fn gamma_d<const D: usize>(cfg: &Config, file: Option<&VoidSetFile>, out: &Output) -> anyhow::Result<()> {
    let regime = regime_from(cfg)?;
    let omega = real_box::<D>(cfg, "domain", "omega_lo", "omega_hi", ([0.0; D], [1.0; D]))?;
    let e = match file {
        Some(f) => {
            let s: VoidSet<D> = f.to_set(None)?;
            let h = 0.5 * f.eps;
            BoxUnion::new(
                s.iter()
                    .map(|i| {
                        let c: [f64; D] = std::array::from_fn(|a| f.eps * i[a] as f64);
                        RealBox::new(c.map(|v| v - h), c.map(|v| v + h))
                    })
                    .collect(),
            )
        }
        None => BoxUnion::new(vec![real_box::<D>(cfg, "input", "box_lo", "box_hi", ([0.25; D], [0.75; D]))?]),
    };
    let models = GammaModels { neighbors: neighbor_model::<D>(cfg)?, cell: cell_model(cfg)?, strain: strain::<D>(cfg, "load")? };
    out.progress(format!("running {} regime rows", regime.rows().len()));
    let rows = gamma_limsup_experiment(&e, &regime, &models, &omega)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            [r.eps, r.delta, r.eta, r.gamma, r.f_per, r.per_phi, r.gap, r.f_curv, r.curv_bound, r.elastic, r.elastic_limit]
                .iter()
                .map(|&x| num(x))
                .collect()
        })
        .collect();
    let text = csv(
        &cfg.header(),
        &["eps", "delta", "eta", "gamma", "F_per", "Per_phi", "gap", "F_curv", "curv_bound", "elastic", "elastic_limit"],
        &table,
    );
    out.write("gamma.csv", &text)?;
    print!("{text}");
    Ok(())
}

// ------------------------------------------------------------- eam-check

#[derive(Args, Debug)]
pub struct EamArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Window size `WxH`.
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long)]
    pub trials: Option<i64>,
    /// Random sets for the neighbourhood lemma (defaults to `--trials`).
    #[arg(long)]
    pub lemma_trials: Option<i64>,
    /// Seed of the random sets; required here or in the config.
    #[arg(long)]
    pub seed: Option<i64>,
    /// η in lattice units.
    #[arg(long)]
    pub eta: Option<i64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

fn parse_window(s: &str) -> anyhow::Result<(i64, i64)> {
    let bad = || invalid(format!("window must look like 32x32, found `{s}`"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let (w, h) = (w.trim().parse::<i64>().map_err(|_| bad())?, h.trim().parse::<i64>().map_err(|_| bad())?);
    if w < 8 || h < 8 {
        return Err(invalid("window sides must be at least 8"));
    }
    Ok((w, h))
}

pub fn eam_check(a: &EamArgs, out: &Output) -> anyhow::Result<()> {
    let schema = vec![
        ("", "seed", int(-1)),
        ("eam", "window", string("32x32")),
        ("eam", "trials", int(100)),
        ("eam", "lemma_trials", int(-1)),
        ("eam", "eta", int(8)),
        ("eam", "q", float(2.0)),
        ("eam", "gamma", float(1.0)),
    ];
    let mut cfg = start("eam-check", schema, &a.config)?;
    cfg.flag("", "seed", opt_i(a.seed))?;
    cfg.flag("eam", "window", a.window.as_deref().map(string))?;
    cfg.flag("eam", "trials", opt_i(a.trials))?;
    cfg.flag("eam", "lemma_trials", opt_i(a.lemma_trials))?;
    cfg.flag("eam", "eta", opt_i(a.eta))?;
    cfg.flag("eam", "q", opt_f(a.q))?;
    cfg.flag("eam", "gamma", opt_f(a.gamma))?;
    log_overrides(&cfg, out);
    let seed = cfg.i64("", "seed");
    if seed < 0 {
        return Err(invalid("a nonnegative seed is required (--seed or top-level `seed`)"));
    }
    let (w, h) = parse_window(cfg.str("eam", "window"))?;
    let trials = cfg.i64("eam", "trials");
    let lemma_trials = match cfg.i64("eam", "lemma_trials") {
        t if t < 0 => trials,
        t => t,
    };
    if trials < 0 {
        return Err(invalid("[eam] trials must be nonnegative"));
    }
    let model = EamModel { eps: 1.0 / w.max(h) as f64, gamma: cfg.f64("eam", "gamma"), n: cfg.i64("eam", "eta"), q: cfg.f64("eam", "q") };
    if !(model.gamma > 0.0 && model.n >= 2 && model.q >= 2.0) {
        return Err(invalid("[eam] needs gamma > 0, eta >= 2 and q >= 2"));
    }
    let mut rng = stream(seed as u64, 0);
    let mut holds = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let c = random_interior_config(&mut rng, w, h);
        let phi = eam_phi(&c, &model)?;
        let curv = eam_curvature_energy(&c, &model)?;
        let rel = if phi == curv { 0.0 } else { (phi - curv).abs() / phi.abs().max(curv.abs()) };
        worst = worst.max(rel);
        if rel <= 1e-12 {
            holds += 1;
        }
    }
    let mut lrng = stream(seed as u64, 1);
    let lemma = eam_lemma_check(&mut lrng, lemma_trials as usize, w, h, model.n);
    let mut report = cfg.header();
    let _ = writeln!(report, "identity holds: {holds}/{trials}");
    let _ = writeln!(report, "identity max relative error: {}", num(worst));
    let _ = writeln!(report, "lemma sets: {}", lemma.sets);
    let _ = writeln!(report, "lemma sites checked: {}", lemma.sites_checked);
    let _ = writeln!(report, "lemma premise true: {}", lemma.premise_true);
    let _ = writeln!(report, "lemma counterexamples: {}", lemma.counterexamples.len());
    for (t, c) in lemma.counterexamples.iter().take(20) {
        let _ = writeln!(report, "counterexample set {t} site {:?} cell {:?}", c.site, c.violating_cell);
    }
    out.write("eam_check.txt", &report)?;
    print!("{report}");
    Ok(())
}

// ---------------------------------------------------------------- regime

#[derive(Args, Debug)]
pub struct RegimeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Explicit ε values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Base-2 exponent range `a:b` giving ε = 2^-a … 2^-b.
    #[arg(long)]
    pub exponents: Option<String>,
}

pub fn regime(a: &RegimeArgs, out: &Output) -> anyhow::Result<()> {
    let schema = vec![
        ("regime", "q", float(2.0)),
        ("regime", "eps", floats(&[])),
        ("regime", "exponents", ints(&[6, 12])),
    ];
    let mut cfg = start("regime", schema, &a.config)?;
    cfg.flag("regime", "q", opt_f(a.q))?;
    cfg.flag("regime", "eps", a.eps.as_deref().map(floats))?;
    if let Some(s) = &a.exponents {
        let (lo, hi) = s
            .split_once(':')
            .and_then(|(l, h)| Some((l.trim().parse::<i64>().ok()?, h.trim().parse::<i64>().ok()?)))
            .ok_or_else(|| invalid(format!("exponents must look like 6:12, found `{s}`")))?;
        cfg.flag("regime", "exponents", Some(ints(&[lo, hi])))?;
    }
    log_overrides(&cfg, out);
    let mut eps = cfg.f64_list("regime", "eps")?;
    if eps.is_empty() {
        let ex = cfg.i64_list("regime", "exponents")?;
        if ex.len() != 2 || ex[0] > ex[1] || ex[0] < 0 || ex[1] > 60 {
            return Err(invalid("[regime] exponents must be [a, b] with 0 <= a <= b <= 60"));
        }
        eps = (ex[0]..=ex[1]).map(|k| 2f64.powi(-(k as i32))).collect();
    }
    let r = suggest_regime(&eps, cfg.f64("regime", "q"))?;
    let rows: Vec<Vec<String>> = r
        .rows()
        .iter()
        .zip(r.monitors())
        .map(|(row, m)| {
            vec![
                num(row.eps),
                num(row.delta),
                row.n.to_string(),
                num(row.eta),
                num(row.gamma),
                num(m.eta_over_eps),
                num(m.gamma_eta_q),
                num(m.gamma_eta_1q),
                num(m.gamma_delta),
            ]
        })
        .collect();
    let text = csv(
        &cfg.header(),
        &["eps", "delta", "n", "eta", "gamma", "eta_over_eps", "gamma_eta_neg_q", "gamma_eta_1_minus_q", "gamma_delta_neg_q_over_9"],
        &rows,
    );
    out.write("regime.csv", &text)?;
    print!("{text}");
    Ok(())
}
