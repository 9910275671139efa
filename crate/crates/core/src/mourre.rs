//! Commutators with the conjugate operator and Mourre-type checks on truncations.

use crate::consts::{alpha, beta};
use crate::conjugate::{assemble_a_funnel, assemble_a_halfline, kron_fiber};
use crate::error::{Error, Result};
use crate::graph::{FiniteGraphSpec, GeometrySpec, Region, Side};
use crate::operator::{assemble_halfline_laplacian, assemble_laplacian, OperatorMatrix};
use crate::perturbation::PerturbationSpec;
use crate::sector::{build_sector_model, SectorModel, SectorOptions};
use crate::spectral::{
    compactness_witness, eigendecompose, operator_norm, symmetrize, CompactnessWitness, SpectralWindow,
};
use crate::sparse::{c, ci, CsrMatrix, C64};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Levels next to the truncation cut excluded from identity checks.
pub const EDGE_MARGIN: usize = 3;
/// Relative variation between `N1` and `2 N1` below which a norm counts as bounded.
pub const BOUNDED_VARIATION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportBox {
    pub rows: (usize, usize),
    pub cols: (usize, usize),
}

impl SupportBox {
    pub fn within(&self, max_row: usize, max_col: usize) -> bool {
        self.rows.1 <= max_row && self.cols.1 <= max_col
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorReport {
    pub commutator: OperatorMatrix,
    pub residual: OperatorMatrix,
    /// Bounding box (by level) of residual entries above threshold, off the cut band.
    pub residual_support: Option<SupportBox>,
    /// Frobenius norm of the unit-gauge residual columns at each level.
    pub residual_tail_profile: Vec<f64>,
    pub max_interior_deviation: f64,
    pub hermitian_defect: f64,
}

/// `i(HA - AH)`.
pub fn commutator(h: &OperatorMatrix, a: &OperatorMatrix) -> Result<OperatorMatrix> {
    let ha = h.matmul(a)?;
    let ah = a.matmul(h)?;
    Ok(ha.sub(&ah)?.scale(ci(1.0)).flagged(h.hermitian && a.hermitian).with_layout_of(h))
}

pub fn double_commutator(h: &OperatorMatrix, a: &OperatorMatrix) -> Result<OperatorMatrix> {
    commutator(&commutator(h, a)?, a)
}

/// Rows at least `margin` levels from the cut; off-ray rows always count.
pub fn interior_mask(op: &OperatorMatrix, margin: usize) -> Vec<bool> {
    op.edge_distance.iter().map(|d| d.is_none_or(|d| d >= margin)).collect()
}

fn level_of(op: &OperatorMatrix, i: usize) -> usize {
    match &op.labels {
        Some(l) if l[i].region == Region::Compact => 0,
        Some(l) => l[i].level.unsigned_abs() as usize,
        None => i,
    }
}

fn unit_entries(op: &OperatorMatrix) -> CsrMatrix {
    let s: Vec<f64> = op.weights.iter().map(|m| m.sqrt()).collect();
    let inv: Vec<f64> = s.iter().map(|x| 1.0 / x).collect();
    op.entries.scale_rows_cols(&s, &inv)
}

/// `||P X P||` on `l2(V, m)`, with `P` the projection onto `mask`.
pub fn masked_operator_norm(x: &OperatorMatrix, mask: &[bool], seed: u64) -> f64 {
    let u = unit_entries(x);
    let ut = u.adjoint();
    let apply_masked = |m: &CsrMatrix, v: &[C64]| {
        let pv: Vec<C64> = v.iter().zip(mask).map(|(a, &k)| if k { *a } else { c(0.0) }).collect();
        m.matvec(&pv).into_iter().zip(mask).map(|(a, &k)| if k { a } else { c(0.0) }).collect::<Vec<_>>()
    };
    operator_norm(x.dim(), |v| apply_masked(&u, v), |v| apply_masked(&ut, v), seed)
}

/// `g(H)` through the eigendecomposition, returned in the weighted frame.
pub fn apply_function(h: &OperatorMatrix, g: impl Fn(f64) -> f64) -> Result<OperatorMatrix> {
    let e = eigendecompose(h)?;
    let fu = e.function_unit(g);
    let n = h.dim();
    let fw = DMatrix::from_fn(n, n, |i, j| fu[(i, j)] * (h.weights[j] / h.weights[i]).sqrt());
    Ok(OperatorMatrix::new(h.weights.clone(), CsrMatrix::from_dense(&fw, 0.0), true)?.with_layout_of(h))
}

fn support_and_profile(
    residual: &OperatorMatrix,
    mask: &[bool],
    threshold: f64,
) -> (Option<SupportBox>, Vec<f64>, f64) {
    let u = unit_entries(residual);
    let max_level = (0..residual.dim()).map(|i| level_of(residual, i)).max().unwrap_or(0);
    let mut profile = vec![0.0; max_level + 1];
    let mut bbox: Option<SupportBox> = None;
    for (i, j, v) in u.triplets() {
        if !(mask[i] && mask[j]) {
            continue;
        }
        let (li, lj) = (level_of(residual, i), level_of(residual, j));
        profile[lj] += v.norm_sqr();
        if v.norm() > threshold {
            bbox = Some(match bbox {
                None => SupportBox { rows: (li, li), cols: (lj, lj) },
                Some(b) => SupportBox {
                    rows: (b.rows.0.min(li), b.rows.1.max(li)),
                    cols: (b.cols.0.min(lj), b.cols.1.max(lj)),
                },
            });
        }
    }
    let profile: Vec<f64> = profile.into_iter().map(f64::sqrt).collect();
    let max_out = u
        .triplets()
        .filter(|&(i, j, _)| mask[i] && mask[j])
        .filter(|&(i, j, _)| level_of(residual, i) > 2 || level_of(residual, j) > 2)
        .map(|(_, _, v)| v.norm())
        .fold(0.0, f64::max);
    (bbox, profile, max_out)
}

/// `[Delta_N, iA_N] - (1/2) Delta_N (4 - Delta_N)` on `{0..N1-1}`.
pub fn halfline_commutator_identity(n1: usize) -> Result<CommutatorReport> {
    if n1 < 6 {
        return Err(Error::RayLength { n1, reason: "identity check needs N1 >= 6".into() });
    }
    let d = assemble_halfline_laplacian(n1)?;
    let a = assemble_a_halfline(n1)?;
    let comm = commutator(&d, &a)?;
    let four_minus = OperatorMatrix::new(vec![1.0; n1], CsrMatrix::identity(n1).scale(c(4.0)), true)?.sub(&d)?;
    let model = d.matmul(&four_minus)?.scale(c(0.5));
    let residual = comm.sub(&model)?.with_layout_of(&d);
    let mask = interior_mask(&d, EDGE_MARGIN);
    let norm = masked_operator_norm(&d, &vec![true; n1], 5);
    let (bbox, profile, max_out) = support_and_profile(&residual, &mask, 1e-12 * norm);
    Ok(CommutatorReport {
        hermitian_defect: comm.hermitian_defect(),
        commutator: comm,
        residual,
        residual_support: bbox,
        residual_tail_profile: profile,
        max_interior_deviation: max_out / norm,
    })
}

/// `(m2/2)(x - alpha/m2)(beta/m2 - x)`; the same function on both sides.
pub fn w_function(x: f64, m2: f64, _side: Side) -> f64 {
    0.5 * m2 * (x - alpha() / m2) * (beta() / m2 - x)
}

/// Minimum of `w` over `[a, b]`; `w` is concave so the minimum sits at an endpoint.
pub fn w_minimum(window: SpectralWindow, m2: f64) -> f64 {
    w_function(window.a, m2, Side::Funnel).min(w_function(window.b, m2, Side::Funnel))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideCommutatorReport {
    pub side: Side,
    pub report: CommutatorReport,
    /// Funnel: witness on the interior residual.
    pub witness: Option<CompactnessWitness>,
    /// Funnel: deviation of `[1/m1 (x) Delta_2, iA]` from its closed form on interior rows.
    pub closed_form_deviation: Option<f64>,
    /// Funnel: `C` in `column norm <= C e^{-n} (n + 1)`, fitted on levels 3..=N1/4.
    pub decay_constant: Option<f64>,
    pub decay_bound_holds: Option<bool>,
    /// Cusp: largest entry of the high-energy block of the commutator.
    pub he_block_max: Option<f64>,
}

fn funnel_identity(n1: usize, fiber: &FiniteGraphSpec) -> Result<SideCommutatorReport> {
    let geom = GeometrySpec::half_ray(Side::Funnel, n1, fiber.clone());
    let g = geom.build()?;
    let h = assemble_laplacian(&g);
    let a = assemble_a_funnel(n1, fiber)?.a;
    let comm = commutator(&h, &a)?;
    let m2 = fiber.m2;
    let wh = apply_function(&h, |x| w_function(x, m2, Side::Funnel))?;
    let residual = comm.sub(&wh)?.with_layout_of(&h);
    let mask = interior_mask(&h, EDGE_MARGIN);
    let norm = masked_operator_norm(&h, &vec![true; h.dim()], 5);
    let (bbox, profile, max_out) = support_and_profile(&residual, &mask, 1e-12 * norm);

    let inv_m: Vec<f64> = (0..n1).map(|n| (-(n as f64)).exp()).collect();
    let d2 = fiber.laplacian();
    let k = OperatorMatrix::new(h.weights.clone(), kron_fiber(&CsrMatrix::from_real_diagonal(&inv_m), &d2), true)?;
    let kc = commutator(&k, &a)?;
    let p = fiber.p;
    let mut dev = 0.0f64;
    for n in 1..n1 - EDGE_MARGIN {
        let want = 0.5 * (std::f64::consts::E - 1.0) * inv_m[n] * (n as f64 - 0.5) * (-0.5f64).exp();
        for kk in 0..p {
            for kp in 0..p {
                let got = kc.get(n * p + kk, (n - 1) * p + kp);
                dev = dev.max((got - c(want * d2[(kk, kp)])).norm());
            }
        }
    }

    let mut masked = residual.clone();
    let keep: Vec<f64> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    masked.entries = masked.entries.scale_rows_cols(&keep, &keep);
    let witness = compactness_witness(&masked, n1, 1e-6)?;
    let fit_levels = 3..=(n1 / 4).max(3).min(n1 - EDGE_MARGIN - 1);
    let envelope = |n: usize| (-(n as f64)).exp() * (n as f64 + 1.0);
    let cfit = fit_levels.clone().map(|n| profile[n] / envelope(n)).fold(0.0, f64::max);
    let floor = 1e-12 * norm;
    let holds = (3..n1 - EDGE_MARGIN).all(|n| profile[n] <= 1.25 * cfit * envelope(n) + floor);
    Ok(SideCommutatorReport {
        side: Side::Funnel,
        report: CommutatorReport {
            hermitian_defect: comm.hermitian_defect(),
            commutator: comm,
            residual,
            residual_support: bbox,
            residual_tail_profile: profile,
            max_interior_deviation: max_out / norm,
        },
        witness: Some(witness),
        closed_form_deviation: Some(dev),
        decay_constant: Some(cfit),
        decay_bound_holds: Some(holds),
        he_block_max: None,
    })
}

fn cusp_identity(n1: usize, fiber: &FiniteGraphSpec) -> Result<SideCommutatorReport> {
    let geom = GeometrySpec::half_ray(Side::Cusp, n1, fiber.clone());
    let sm = build_sector_model(&geom, &PerturbationSpec::zero(), SectorOptions::default())?;
    let comm = commutator(&sm.h, &sm.a)?;
    let he = sm.cusp_he_mask();
    let he_block_max = comm.entries.triplets().filter(|&(i, j, _)| he[i] && he[j]).map(|(_, _, v)| v.norm()).fold(0.0, f64::max);
    let le: Vec<usize> = (0..sm.dim()).filter(|&i| !he[i]).collect();
    let h_le = sm.h.entries.restrict(&le, &le).to_dense().map(|z| z.re);
    let e = SymmetricEigen::new(h_le);
    let m2 = fiber.m2;
    let wv = e.eigenvalues.map(|x| w_function(x, m2, Side::Cusp));
    let w_le = &e.eigenvectors * DMatrix::from_diagonal(&wv) * e.eigenvectors.transpose();
    let mut t = Vec::new();
    for (a, &i) in le.iter().enumerate() {
        for (b, &j) in le.iter().enumerate() {
            if w_le[(a, b)] != 0.0 {
                t.push((i, j, c(w_le[(a, b)])));
            }
        }
    }
    let w_full = OperatorMatrix::new(vec![1.0; sm.dim()], CsrMatrix::from_triplets(sm.dim(), sm.dim(), &t), true)?;
    let residual = comm.sub(&w_full)?.with_layout_of(&sm.h);
    let mask = interior_mask(&sm.h, EDGE_MARGIN);
    let norm = masked_operator_norm(&sm.h, &vec![true; sm.dim()], 5).max(1.0);
    let (bbox, profile, max_out) = support_and_profile(&residual, &mask, 1e-12 * norm);
    Ok(SideCommutatorReport {
        side: Side::Cusp,
        report: CommutatorReport {
            hermitian_defect: comm.hermitian_defect(),
            commutator: comm,
            residual,
            residual_support: bbox,
            residual_tail_profile: profile,
            max_interior_deviation: max_out / norm,
        },
        witness: None,
        closed_form_deviation: None,
        decay_constant: None,
        decay_bound_holds: None,
        he_block_max: Some(he_block_max),
    })
}

/// `[Delta, iA] - w(Delta)` on one product side.
///
/// The funnel runs in the vertex basis. The cusp runs in the sector basis, where the
/// high-energy block of `A` is structurally absent.
pub fn side_commutator_identity(side: Side, n1: usize, fiber: &FiniteGraphSpec) -> Result<SideCommutatorReport> {
    match side {
        Side::Funnel => funnel_identity(n1, fiber),
        Side::Cusp => cusp_identity(n1, fiber),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormPoint {
    pub n1: usize,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub norms: Vec<NormPoint>,
    /// Relative change between the last `N1` and `2 N1` pair.
    pub variation: Option<f64>,
    pub tolerance: f64,
    pub bounded: bool,
}

fn boundedness(norms: Vec<NormPoint>) -> BoundednessReport {
    let mut variation = None;
    for (i, a) in norms.iter().enumerate() {
        for b in &norms[i + 1..] {
            if b.n1 == 2 * a.n1 {
                let scale = a.norm.abs().max(b.norm.abs());
                variation = Some(if scale < 1e-12 { 0.0 } else { (b.norm - a.norm).abs() / a.norm.abs().max(1e-300) });
            }
        }
    }
    let bounded = variation.is_some_and(|v| v < BOUNDED_VARIATION);
    BoundednessReport { norms, variation, tolerance: BOUNDED_VARIATION, bounded }
}

/// `||[[H, iA], iA]||` off the cut band across truncations.
pub fn double_commutator_study(
    build: impl Fn(usize) -> Result<(OperatorMatrix, OperatorMatrix)> + Sync,
    truncations: &[usize],
) -> Result<BoundednessReport> {
    let norms: Result<Vec<NormPoint>> = truncations
        .par_iter()
        .map(|&n1| {
            let (h, a) = build(n1)?;
            let dc = double_commutator(&h, &a)?;
            let mask = interior_mask(&h, EDGE_MARGIN + 1);
            Ok(NormPoint { n1, norm: masked_operator_norm(&dc, &mask, 3) })
        })
        .collect();
    Ok(boundedness(norms?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MourreCount {
    pub n1: usize,
    pub count: usize,
    pub rank: usize,
    pub tau: f64,
    pub commutator_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MourreScanResult {
    pub window: SpectralWindow,
    pub c_theory: f64,
    pub negative_counts: Vec<MourreCount>,
    pub tau: f64,
    pub stabilized: bool,
    pub band: (f64, f64),
    pub out_of_band: bool,
}

fn hermitian_dense_eigs(m: &DMatrix<C64>) -> Vec<f64> {
    let herm = (m + m.adjoint()) * c(0.5);
    if herm.iter().all(|z| z.im == 0.0) {
        SymmetricEigen::new(herm.map(|z| z.re)).eigenvalues.iter().copied().collect()
    } else {
        SymmetricEigen::new(herm).eigenvalues.iter().copied().collect()
    }
}

/// Eigenvalues of `E_I ([H, iA] - c) E_I` on `ran E_I` below `-tau`, `tau = 1e-8 ||[H, iA]||`.
pub fn mourre_count(h: &OperatorMatrix, a: &OperatorMatrix, window: SpectralWindow, c_value: f64, n1: usize) -> Result<MourreCount> {
    let comm = commutator(h, a)?;
    let e = eigendecompose(h)?;
    let cu = symmetrize(&comm)?.to_dense();
    let cnorm = hermitian_dense_eigs(&cu).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tau = 1e-8 * cnorm;
    let basis = e.window_basis(window);
    let rank = basis.ncols();
    if rank == 0 {
        return Ok(MourreCount { n1, count: 0, rank, tau, commutator_norm: cnorm });
    }
    let m = basis.adjoint() * cu * &basis - DMatrix::<C64>::identity(rank, rank) * c(c_value);
    let count = hermitian_dense_eigs(&m).iter().filter(|&&x| x < -tau).count();
    Ok(MourreCount { n1, count, rank, tau, commutator_norm: cnorm })
}

pub fn band(m2: f64) -> (f64, f64) {
    (alpha() / m2, beta() / m2)
}

/// Negative-direction counts across truncations; stabilized when the top two agree.
pub fn mourre_scan(
    build: impl Fn(usize) -> Result<(OperatorMatrix, OperatorMatrix)> + Sync,
    window: SpectralWindow,
    c_value: f64,
    truncations: &[usize],
    band_edges: (f64, f64),
) -> Result<MourreScanResult> {
    if !(c_value >= 0.0) {
        return Err(Error::Parameter(format!("Mourre constant must be nonnegative, got {c_value}")));
    }
    if truncations.is_empty() {
        return Err(Error::Parameter("no truncations given".into()));
    }
    let counts: Result<Vec<MourreCount>> = truncations
        .par_iter()
        .map(|&n1| {
            let (h, a) = build(n1)?;
            mourre_count(&h, &a, window, c_value, n1)
        })
        .collect();
    let counts = counts?;
    let k = counts.len();
    let stabilized = k >= 2 && counts[k - 1].count == counts[k - 2].count;
    let out_of_band = !(band_edges.0 < window.a && window.b < band_edges.1);
    Ok(MourreScanResult {
        window,
        c_theory: c_value,
        tau: counts[k - 1].tau,
        negative_counts: counts,
        stabilized,
        band: band_edges,
        out_of_band,
    })
}

/// Band of the geometry's low-energy part: `[alpha/m2, beta/m2]` for twisted products.
pub fn geometry_band(geom: &GeometrySpec) -> (f64, f64) {
    match geom.product {
        crate::graph::ProductKind::Twisted => band(geom.fiber.m2),
        crate::graph::ProductKind::Cartesian => band(1.0),
    }
}

pub fn sector_builder<'a>(
    geom: &'a GeometrySpec,
    pert: &'a PerturbationSpec,
    opts: SectorOptions,
) -> impl Fn(usize) -> Result<SectorModel> + Sync + 'a {
    move |n1| build_sector_model(&geom.with_ray_length(n1), pert, opts)
}

/// Mourre scan of a geometry through its sector model.
pub fn mourre_scan_geometry(
    geom: &GeometrySpec,
    pert: &PerturbationSpec,
    window: SpectralWindow,
    c_value: f64,
    truncations: &[usize],
) -> Result<MourreScanResult> {
    pert.require_radial_on_cusp(geom)?;
    let b = sector_builder(geom, pert, SectorOptions::default());
    mourre_scan(|n1| b(n1).map(|m| (m.h, m.a)), window, c_value, truncations, geometry_band(geom))
}

/// `sup_f ||<Lambda>^eps [H_pert - H_free, iA] f|| / ||f||` off the cut band, across truncations.
pub fn weighted_commutator_decay(
    build: impl Fn(usize) -> Result<(OperatorMatrix, OperatorMatrix, OperatorMatrix, Vec<f64>)> + Sync,
    truncations: &[usize],
) -> Result<BoundednessReport> {
    let norms: Result<Vec<NormPoint>> = truncations
        .par_iter()
        .map(|&n1| {
            let (hp, hf, a, weight) = build(n1)?;
            let diff = hp.sub(&hf)?;
            let comm = commutator(&diff, &a)?;
            let mut weighted = comm.clone();
            weighted.entries = comm.entries.scale_rows_cols(&weight, &vec![1.0; weight.len()]);
            let mask = interior_mask(&hp, EDGE_MARGIN);
            Ok(NormPoint { n1, norm: masked_operator_norm(&weighted, &mask, 17) })
        })
        .collect();
    Ok(boundedness(norms?))
}

/// [`weighted_commutator_decay`] on a geometry through its sector model, weight `<n + 1/2>^eps`.
pub fn weighted_commutator_decay_geometry(
    geom: &GeometrySpec,
    pert: &PerturbationSpec,
    eps_exponent: f64,
    truncations: &[usize],
) -> Result<BoundednessReport> {
    if !(eps_exponent > 0.0) {
        return Err(Error::Parameter("eps exponent must be positive".into()));
    }
    pert.require_radial_on_cusp(geom)?;
    let zero = PerturbationSpec::zero();
    weighted_commutator_decay(
        |n1| {
            let g = geom.with_ray_length(n1);
            let p = build_sector_model(&g, pert, SectorOptions::default())?;
            let f = build_sector_model(&g, &zero, SectorOptions::default())?;
            let w = f.lambda_weight(-eps_exponent);
            Ok((p.h, f.h, f.a, w))
        },
        truncations,
    )
}
