//! Per-command parameter tables and dispatch.

use crate::model::{build_model, check_dim, Basis, Model};
use crate::output::{Cell, Series};
use anyhow::{bail, Context, Result};
use cusplab::lap::{lap_scan_seeded, persistent_eigenvalues, propagation_integral, threshold_study, LapScanConfig, LapVerdict};
use cusplab::mourre::{geometry_band, halfline_commutator_identity, mourre_scan, side_commutator_identity, w_minimum};
use cusplab::perturbation::{check_h0, check_h123, is_radial_on};
use cusplab::report::{format_float, Command, ExperimentConfig, Verdict};
use cusplab::sector::DEFAULT_HE_CAP;
use cusplab::spectral::{eigendecompose_capped, DEFAULT_DENSE_CAP};
use cusplab::{GeometryKind, Side, SpectralWindow};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub struct Outcome {
    pub params: Value,
    pub results: Value,
    pub verdicts: Vec<Verdict>,
    pub series: Vec<Series>,
}

pub struct RunContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub seed: u64,
    pub max_dim: usize,
}

fn parse<T: DeserializeOwned>(cfg: &ExperimentConfig) -> Result<T> {
    serde_json::from_value(cfg.command_params.clone())
        .map_err(|e| anyhow::anyhow!("command_params ({}): {e}", cfg.command.as_str()))
}

fn he_cap() -> f64 {
    DEFAULT_HE_CAP
}

fn one() -> f64 {
    1.0
}

fn band_margin() -> f64 {
    0.05
}

fn window_of(w: [f64; 2], field: &str) -> Result<SpectralWindow> {
    SpectralWindow::new(w[0], w[1]).with_context(|| format!("command_params.{field}"))
}

fn nonempty_increasing(t: &[usize], field: &str) -> Result<()> {
    if t.is_empty() || t.windows(2).any(|w| w[1] <= w[0]) {
        bail!("command_params.{field}: expected a non-empty increasing list");
    }
    Ok(())
}

pub fn run_command(ctx: &RunContext) -> Result<Outcome> {
    match ctx.cfg.command {
        Command::Build => build(ctx),
        Command::Spectrum => spectrum(ctx),
        Command::CommutatorCheck => commutator_check(ctx),
        Command::MourreScan => mourre(ctx),
        Command::LapScan => lap(ctx),
        Command::Evolve => evolve(ctx),
        Command::ThresholdStudy => threshold(ctx),
        Command::ConditionsCheck => conditions(ctx),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildParams {
    #[serde(default = "hermitian_tol")]
    hermitian_tol: f64,
}

fn hermitian_tol() -> f64 {
    1e-12
}

fn build(ctx: &RunContext) -> Result<Outcome> {
    let p: BuildParams = parse(ctx.cfg)?;
    let geom = &ctx.cfg.geometry;
    let g = geom.build().context("vertex build failed; the vertex basis keeps the N1 <= 700 guard")?;
    let h = cusplab::operator::assemble_perturbed_laplacian(&g, &ctx.cfg.perturbation)?;
    let defect = h.hermitian_defect();
    let fibers: Vec<Value> = [Side::Funnel, Side::Cusp]
        .into_iter()
        .filter(|&s| geom.has_side(s) || geom.kind == GeometryKind::ZModel && s == Side::Funnel)
        .map(|s| {
            let f = geom.side_fiber(s);
            json!({"side": format!("{s:?}").to_lowercase(), "p": f.p, "m2": f.m2, "kernel_dim": f.kernel_dim()})
        })
        .collect();
    let results = json!({
        "vertex_count": g.len(),
        "edge_count": g.edge_count(),
        "total_measure": g.total_measure(),
        "component_count": g.component_count(),
        "fibers": fibers,
        "hermitian_defect": defect,
    });
    let verdicts = vec![Verdict::flag("edge_weights_symmetric", g.is_symmetric()), Verdict::at_most("hermitian_defect", defect, p.hermitian_tol)];
    Ok(Outcome { params: serde_json::to_value(&p)?, results, verdicts, series: vec![] })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumParams {
    #[serde(default)]
    basis: Basis,
    #[serde(default = "he_cap")]
    he_cap: f64,
    #[serde(default)]
    n1: Option<usize>,
    #[serde(default)]
    window: Option<[f64; 2]>,
    #[serde(default = "residual_tol")]
    residual_tol: f64,
}

fn residual_tol() -> f64 {
    1e-10
}

fn spectrum(ctx: &RunContext) -> Result<Outcome> {
    let mut p: SpectrumParams = parse(ctx.cfg)?;
    let geom = &ctx.cfg.geometry;
    p.basis = p.basis.resolve(geom);
    let n1 = *p.n1.get_or_insert(geom.ray_length);
    let window = p.window.map(|w| window_of(w, "window")).transpose()?;
    let m = build_model(geom, &ctx.cfg.perturbation, p.basis, p.he_cap, n1)?;
    let e = eigendecompose_capped(&m.h, ctx.max_dim)?;
    let rel = e.residual_norm / e.operator_norm.max(1.0);
    let ortho = e.weighted_orthonormality_defect();
    let mut s = Series::new("eigenvalues.csv", &["index", "eigenvalue"]);
    for (i, &x) in e.eigenvalues.iter().enumerate() {
        s.push(vec![Cell::Int(i), Cell::Float(x)]);
    }
    let band = geometry_band(geom);
    let results = json!({
        "dim": m.dim(),
        "min": e.eigenvalues.first(),
        "max": e.eigenvalues.last(),
        "band": [band.0, band.1],
        "count_in_band": e.eigenvalues.iter().filter(|&&x| x >= band.0 && x <= band.1).count(),
        "count_in_window": window.map(|w| e.count_in(w)),
        "relative_residual": rel,
        "weighted_orthonormality_defect": ortho,
    });
    let verdicts = vec![Verdict::at_most("relative_residual", rel, p.residual_tol), Verdict::at_most("weighted_orthonormality_defect", ortho, p.residual_tol)];
    Ok(Outcome { params: serde_json::to_value(&p)?, results, verdicts, series: vec![s] })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Target {
    Halfline,
    Funnel,
    Cusp,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommutatorParams {
    #[serde(default)]
    target: Option<Target>,
    #[serde(default)]
    n1: Option<usize>,
    #[serde(default = "identity_tol")]
    identity_tol: f64,
}

fn identity_tol() -> f64 {
    1e-12
}

fn commutator_check(ctx: &RunContext) -> Result<Outcome> {
    let mut p: CommutatorParams = parse(ctx.cfg)?;
    let geom = &ctx.cfg.geometry;
    let target = *p.target.get_or_insert(match geom.kind {
        GeometryKind::HalfRayFunnel => Target::Funnel,
        GeometryKind::HalfRayCusp => Target::Cusp,
        _ => Target::Halfline,
    });
    let n1 = *p.n1.get_or_insert(geom.ray_length);
    let mut profile = Series::new("residual_profile.csv", &["level", "residual_norm"]);
    let (results, verdicts) = match target {
        Target::Halfline => {
            let r = halfline_commutator_identity(n1)?;
            for (n, &v) in r.residual_tail_profile.iter().enumerate() {
                profile.push(vec![Cell::Int(n), Cell::Float(v)]);
            }
            let inside = r.residual_support.is_none_or(|b| b.within(2, 2));
            (
                json!({
                    "max_interior_deviation": r.max_interior_deviation,
                    "residual_support": r.residual_support,
                    "hermitian_defect": r.hermitian_defect,
                }),
                vec![
                    Verdict::at_most("max_interior_deviation", r.max_interior_deviation, p.identity_tol),
                    Verdict::flag("residual_support_within_0_2", inside),
                    Verdict::at_most("hermitian_defect", r.hermitian_defect, p.identity_tol),
                ],
            )
        }
        Target::Funnel | Target::Cusp => {
            let side = if matches!(target, Target::Funnel) { Side::Funnel } else { Side::Cusp };
            let r = side_commutator_identity(side, n1, geom.side_fiber(side))?;
            for (n, &v) in r.report.residual_tail_profile.iter().enumerate() {
                profile.push(vec![Cell::Int(n), Cell::Float(v)]);
            }
            let mut v = vec![Verdict::at_most("hermitian_defect", r.report.hermitian_defect, p.identity_tol)];
            if let Some(d) = r.closed_form_deviation {
                v.push(Verdict::at_most("closed_form_deviation", d, 1e-9));
            }
            if let Some(b) = r.decay_bound_holds {
                v.push(Verdict::flag("residual_decay_bound", b));
            }
            if let Some(w) = &r.witness {
                v.push(Verdict::flag("residual_compact", w.witnessed_compact));
            }
            if let Some(he) = r.he_block_max {
                v.push(Verdict::at_most("he_block_max", he, 0.0));
            }
            (
                json!({
                    "max_interior_deviation": r.report.max_interior_deviation,
                    "residual_support": r.report.residual_support,
                    "hermitian_defect": r.report.hermitian_defect,
                    "closed_form_deviation": r.closed_form_deviation,
                    "decay_constant": r.decay_constant,
                    "witness": r.witness,
                    "he_block_max": r.he_block_max,
                }),
                v,
            )
        }
    };
    Ok(Outcome { params: serde_json::to_value(&p)?, results, verdicts, series: vec![profile] })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MourreParams {
    window: [f64; 2],
    #[serde(default)]
    c: Option<f64>,
    #[serde(default = "mourre_truncations")]
    truncations: Vec<usize>,
    #[serde(default)]
    basis: Basis,
    #[serde(default = "he_cap")]
    he_cap: f64,
}

fn mourre_truncations() -> Vec<usize> {
    vec![100, 150, 200]
}

fn mourre(ctx: &RunContext) -> Result<Outcome> {
    let mut p: MourreParams = parse(ctx.cfg)?;
    let geom = &ctx.cfg.geometry;
    let pert = &ctx.cfg.perturbation;
    let window = window_of(p.window, "window")?;
    nonempty_increasing(&p.truncations, "truncations")?;
    p.basis = p.basis.resolve(geom);
    let c = *p.c.get_or_insert((0.99 * w_minimum(window, geom.fiber.m2)).max(0.0));
    check_dim(geom, pert, p.basis, p.he_cap, *p.truncations.last().unwrap(), ctx.max_dim.min(DEFAULT_DENSE_CAP))?;
    let (basis, cap) = (p.basis, p.he_cap);
    let r = mourre_scan(
        |n1| {
            let m = build_model(geom, pert, basis, cap, n1).map_err(|e| cusplab::Error::Parameter(e.to_string()))?;
            let a = m.a.ok_or_else(|| cusplab::Error::Parameter("no conjugate operator for this geometry".into()))?;
            Ok((m.h, a))
        },
        window,
        c,
        &p.truncations,
        geometry_band(geom),
    )?;
    let mut s = Series::new("mourre_counts.csv", &["N1", "count", "rank", "tau", "commutator_norm"]);
    for m in &r.negative_counts {
        s.push(vec![Cell::Int(m.n1), Cell::Int(m.count), Cell::Int(m.rank), Cell::Float(m.tau), Cell::Float(m.commutator_norm)]);
    }
    let k = r.negative_counts.len();
    let spread = if k >= 2 { r.negative_counts[k - 1].count.abs_diff(r.negative_counts[k - 2].count) as f64 } else { f64::NAN };
    let mut verdicts = vec![];
    let in_band = Verdict::flag("window_in_band", !r.out_of_band);
    verdicts.push(if r.out_of_band {
        in_band.with_detail(format!(
            "window [{}, {}] is not strictly inside the band [{:.6}, {:.6}]; no Mourre estimate is expected there",
            window.a, window.b, r.band.0, r.band.1
        ))
    } else {
        in_band
    });
    verdicts.push(Verdict::at_most("counts_stabilized", spread, 0.0).with_detail("count difference between the top two truncations"));
    Ok(Outcome { params: serde_json::to_value(&p)?, results: serde_json::to_value(&r)?, verdicts, series: vec![s] })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LapParams {
    lambdas: Vec<f64>,
    #[serde(default = "lap_rhos")]
    rhos: Vec<f64>,
    #[serde(default = "one")]
    s: f64,
    #[serde(default = "lap_truncations")]
    truncations: Vec<usize>,
    #[serde(default = "lap_tol")]
    convergence_tol: f64,
    #[serde(default = "band_margin")]
    band_margin: f64,
    #[serde(default)]
    basis: Basis,
    #[serde(default = "he_cap")]
    he_cap: f64,
}

fn lap_rhos() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}

fn lap_truncations() -> Vec<usize> {
    (6..=17).map(|k| 1usize << k).collect()
}

fn lap_tol() -> f64 {
    0.05
}

fn dense_dims(geom: &cusplab::GeometrySpec, pert: &cusplab::PerturbationSpec, basis: Basis, cap: f64, t: &[usize], max_dim: usize) -> Result<Vec<usize>> {
    let mut ok = Vec::new();
    for &n1 in t {
        if build_model(geom, pert, basis, cap, n1)?.dim() <= max_dim {
            ok.push(n1);
        }
    }
    Ok(ok)
}

fn lap(ctx: &RunContext) -> Result<Outcome> {
    let mut p: LapParams = parse(ctx.cfg)?;
    let geom = &ctx.cfg.geometry;
    let pert = &ctx.cfg.perturbation;
    p.basis = p.basis.resolve(geom);
    let config = LapScanConfig {
        lambdas: p.lambdas.clone(),
        rhos: p.rhos.clone(),
        s: p.s,
        truncations: p.truncations.clone(),
        convergence_tol: p.convergence_tol,
    };
    config.validate().context("command_params")?;
    let (basis, cap) = (p.basis, p.he_cap);
    let dense = dense_dims(geom, pert, basis, cap, &p.truncations, ctx.max_dim.min(DEFAULT_DENSE_CAP))?;
    let persistent = if dense.len() >= 2 {
        let k = dense.len();
        let small = eigendecompose_capped(&build_model(geom, pert, basis, cap, dense[k - 2])?.h, ctx.max_dim)?;
        let large = eigendecompose_capped(&build_model(geom, pert, basis, cap, dense[k - 1])?.h, ctx.max_dim)?;
        Some(persistent_eigenvalues(&small.eigenvalues, &large.eigenvalues))
    } else {
        None
    };
    let r = lap_scan_seeded(
        |n1| {
            let m = build_model(geom, pert, basis, cap, n1).map_err(|e| cusplab::Error::Parameter(e.to_string()))?;
            let w = m.weight(p.s);
            Ok((m.h, w))
        },
        &config,
        persistent.as_deref(),
        ctx.seed,
    )?;
    let band = geometry_band(geom);
    let mut s = Series::new("lap_norms.csv", &["lambda", "rho", "N1_used", "norm", "verdict"]);
    let mut verdicts = Vec::new();
    let mut near_threshold = Vec::new();
    for summary in &r.summaries {
        for cell in r.cells.iter().filter(|c| c.lambda == summary.lambda) {
            let v = if cell.resolved { verdict_name(summary.verdict) } else { "unresolved" };
            s.push(vec![
                Cell::Float(cell.lambda),
                Cell::Float(cell.rho),
                cell.n1_used.map_or(Cell::Text(String::new()), Cell::Int),
                Cell::Float(cell.norm),
                Cell::Text(v.into()),
            ]);
        }
        let name = format!("lap_plateau[lambda={}]", summary.lambda);
        verdicts.push(
            Verdict::at_most(&name, summary.max_small_rho_deviation, r.plateau_tolerance)
                .with_detail(format!("verdict {}", verdict_name(summary.verdict))),
        );
        if summary.verdict == LapVerdict::Unresolved {
            let last = verdicts.len() - 1;
            verdicts[last].pass = false;
        }
        near_threshold.push(json!({
            "lambda": summary.lambda,
            "near_threshold": (summary.lambda - band.0).abs() <= p.band_margin || (summary.lambda - band.1).abs() <= p.band_margin,
            "near_point_spectrum": summary.near_point_spectrum,
        }));
    }
    verdicts.push(Verdict::flag("all_cells_resolved", r.all_resolved()));
    let mut header = vec!["lambda".to_string()];
    header.extend(p.rhos.iter().map(|rho| format!("rho={}", format_float(*rho))));
    let mut matrix = Series::with_header("lap_matrix.csv", header);
    for &lambda in &p.lambdas {
        let mut row = vec![Cell::Float(lambda)];
        row.extend(r.cells.iter().filter(|c| c.lambda == lambda).map(|c| Cell::Float(c.norm)));
        matrix.push(row);
    }
    let results = json!({
        "scan": r,
        "band": [band.0, band.1],
        "grid_warnings": near_threshold,
        "persistent_eigenvalues": persistent,
        "point_spectrum_truncations": dense.iter().rev().take(2).rev().collect::<Vec<_>>(),
    });
    Ok(Outcome { params: serde_json::to_value(&p)?, results, verdicts, series: vec![s, matrix] })
}

fn verdict_name(v: LapVerdict) -> &'static str {
    match v {
        LapVerdict::Plateau => "plateau",
        LapVerdict::Growth => "growth",
        LapVerdict::Unresolved => "unresolved",
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvolveParams {
    window: [f64; 2],
    #[serde(default = "one")]
    s: f64,
    #[serde(default = "horizon")]
    horizon: f64,
    #[serde(default = "dt")]
    dt: f64,
    #[serde(default = "evolve_truncations")]
    truncations: Vec<usize>,
    /// Index of the start vertex; the junction of each truncation when absent.
    #[serde(default)]
    site: Option<usize>,
    #[serde(default = "stability_tol")]
    stability_tol: f64,
    #[serde(default)]
    basis: Basis,
    #[serde(default = "he_cap")]
    he_cap: f64,
}

fn horizon() -> f64 {
    50.0
}

fn dt() -> f64 {
    0.05
}

fn evolve_truncations() -> Vec<usize> {
    vec![100, 200, 400]
}

fn stability_tol() -> f64 {
    0.15
}

fn evolve(ctx: &RunContext) -> Result<Outcome> {
    let mut p: EvolveParams = parse(ctx.cfg)?;
    let geom = &ctx.cfg.geometry;
    let pert = &ctx.cfg.perturbation;
    let window = window_of(p.window, "window")?;
    nonempty_increasing(&p.truncations, "truncations")?;
    if !(p.s >= 0.0) {
        bail!("command_params.s: must be nonnegative");
    }
    p.basis = p.basis.resolve(geom);
    check_dim(geom, pert, p.basis, p.he_cap, *p.truncations.last().unwrap(), ctx.max_dim)?;
    let mut s = Series::new("propagation.csv", &["N1", "site", "integral", "closed_form", "norm_sq", "ratio", "max_unitarity_defect"]);
    let mut rows = Vec::new();
    for &n1 in &p.truncations {
        let m: Model = build_model(geom, pert, p.basis, p.he_cap, n1)?;
        let site = p.site.unwrap_or(m.hub);
        if site >= m.dim() {
            bail!("command_params.site: index {site} outside dimension {}", m.dim());
        }
        let e = eigendecompose_capped(&m.h, ctx.max_dim)?;
        let mut f = vec![num_complex::Complex64::new(0.0, 0.0); m.dim()];
        f[site] = 1.0.into();
        let r = propagation_integral(&e, &m.weight(p.s), window, &f, p.horizon, p.dt)?;
        s.push(vec![
            Cell::Int(n1),
            Cell::Int(site),
            Cell::Float(r.integral),
            Cell::Float(r.closed_form),
            Cell::Float(r.norm_sq),
            Cell::Float(r.ratio),
            Cell::Float(r.max_unitarity_defect),
        ]);
        rows.push((n1, site, r));
    }
    let spread = rows.windows(2).map(|w| (w[1].2.ratio - w[0].2.ratio).abs() / w[0].2.ratio.abs().max(1e-300)).fold(0.0, f64::max);
    let unitarity = rows.iter().map(|r| r.2.max_unitarity_defect).fold(0.0, f64::max);
    let closed = rows
        .iter()
        .map(|r| (r.2.integral - r.2.closed_form).abs() / r.2.closed_form.abs().max(1e-300))
        .fold(0.0, f64::max);
    let verdicts = vec![
        Verdict::at_most("ratio_stable", spread, p.stability_tol).with_detail("largest relative change of integral/||f||^2 between consecutive truncations"),
        Verdict::at_most("unitarity", unitarity, 1e-10),
        Verdict::at_most("quadrature_vs_closed_form", closed, 1e-3),
    ];
    let results = json!({
        "rows": rows.iter().map(|(n1, site, r)| json!({"N1": n1, "site": site, "result": r})).collect::<Vec<_>>(),
    });
    Ok(Outcome { params: serde_json::to_value(&p)?, results, verdicts, series: vec![s] })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdParams {
    window: [f64; 2],
    #[serde(default = "band_margin")]
    band_margin: f64,
    #[serde(default = "evolve_truncations")]
    truncations: Vec<usize>,
    #[serde(default)]
    basis: Basis,
    #[serde(default = "he_cap")]
    he_cap: f64,
}

fn threshold(ctx: &RunContext) -> Result<Outcome> {
    let mut p: ThresholdParams = parse(ctx.cfg)?;
    let geom = &ctx.cfg.geometry;
    let pert = &ctx.cfg.perturbation;
    let window = window_of(p.window, "window")?;
    if p.truncations.len() < 2 {
        bail!("command_params.truncations: need at least two increasing values");
    }
    nonempty_increasing(&p.truncations, "truncations")?;
    if !(p.band_margin > 0.0) {
        bail!("command_params.band_margin: must be positive");
    }
    p.basis = p.basis.resolve(geom);
    check_dim(geom, pert, p.basis, p.he_cap, *p.truncations.last().unwrap(), ctx.max_dim)?;
    let band = geometry_band(geom);
    let (basis, cap) = (p.basis, p.he_cap);
    let st = threshold_study(
        |n1| Ok(build_model(geom, pert, basis, cap, n1).map_err(|e| cusplab::Error::Parameter(e.to_string()))?.h),
        &p.truncations,
        window,
        band,
        p.band_margin,
    )?;
    let mut s = Series::new("counts.csv", &["N1", "interior_count", "near_alpha_count", "near_beta_count"]);
    for r in &st.rows {
        s.push(vec![Cell::Int(r.n1), Cell::Int(r.interior_count), Cell::Int(r.near_alpha_count), Cell::Int(r.near_beta_count)]);
    }
    let k = st.rows.len();
    let diff = st.rows[k - 1].interior_count.abs_diff(st.rows[k - 2].interior_count) as f64;
    let verdicts = vec![Verdict::at_most("interior_counts_stabilize", diff, 0.0)
        .with_detail("difference of localized-eigenvalue counts in the window between the top two truncations")];
    let results = serde_json::to_value(&st)?;
    Ok(Outcome { params: serde_json::to_value(&p)?, results, verdicts, series: vec![s] })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConditionsParams {
    #[serde(default)]
    eps_exponent: Option<f64>,
    #[serde(default)]
    h0_tolerance: Option<f64>,
}

fn conditions(ctx: &RunContext) -> Result<Outcome> {
    let mut p: ConditionsParams = parse(ctx.cfg)?;
    let geom = &ctx.cfg.geometry;
    let pert = &ctx.cfg.perturbation;
    let eps = *p.eps_exponent.get_or_insert(pert.declared_eps_exponent);
    let h0 = check_h0(pert, geom, p.h0_tolerance);
    let h123 = check_h123(pert, geom, eps)?;
    let mut s = Series::new("profiles.csv", &["condition", "side", "quantity", "level", "value"]);
    for (cond, rep) in [("H0", &h0), ("H123", &h123)] {
        for prof in &rep.profiles {
            for (n, &v) in prof.values.iter().enumerate() {
                s.push(vec![Cell::Text(cond.into()), Cell::Text(prof.side.clone()), Cell::Text(prof.quantity.clone()), Cell::Int(n), Cell::Float(v)]);
            }
        }
    }
    let mut verdicts: Vec<Verdict> = Vec::new();
    for (cond, rep) in [("H0", &h0), ("H123", &h123)] {
        for c in &rep.checks {
            verdicts.push(Verdict::at_most(&format!("{cond}[{}:{}]", c.side, c.quantity), c.statistic, c.tolerance).with_detail(format!("argmax level {}", c.argmax_level)));
            let last = verdicts.len() - 1;
            verdicts[last].pass = c.pass;
        }
    }
    let radial = geom.has_side(Side::Cusp).then(|| is_radial_on(pert, geom, Side::Cusp));
    if let Some(r) = radial {
        verdicts.push(Verdict::flag("radial_on_cusp", r));
    }
    let results = json!({"h0": h0, "h123": h123, "radial_on_cusp": radial});
    Ok(Outcome { params: serde_json::to_value(&p)?, results, verdicts, series: vec![s] })
}
