//! Unit-gauge model with the fiber Laplacian diagonalized.
//!
//! Each product side is written as `sum_k J_k (x) |phi_k><phi_k|` where `phi_k` are
//! eigenvectors of the fiber Laplacian (the kernel spanned by normalized component
//! indicators) and `J_k` is a Jacobi chain. No vertex measure is ever formed, so
//! ray lengths far past the exponent guard are allowed.

use crate::conjugate::ray_a_triplets;
use crate::consts::bracket;
use crate::error::{Error, Result};
use crate::graph::{FiniteGraphSpec, GeometryKind, GeometrySpec, ProductKind, Region, Side, VertexLabel};
use crate::operator::OperatorMatrix;
use crate::perturbation::PerturbationSpec;
use crate::sparse::{c, CsrMatrix, C64};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const DEFAULT_HE_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorOptions {
    /// Cusp sites whose fiber potential exceeds this are dropped.
    pub he_cap: f64,
}

impl Default for SectorOptions {
    fn default() -> Self {
        Self { he_cap: DEFAULT_HE_CAP }
    }
}

/// Orthonormal eigenbasis of the fiber Laplacian, kernel columns first.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberSectors {
    pub eigenvalues: Vec<f64>,
    pub basis: DMatrix<f64>,
    pub kernel_dim: usize,
}

pub fn fiber_sectors(fiber: &FiniteGraphSpec) -> Result<FiberSectors> {
    fiber.validate()?;
    let p = fiber.p;
    let comp = fiber.components();
    let nc = fiber.component_count();
    let mut size = vec![0usize; nc];
    for &k in &comp {
        size[k] += 1;
    }
    let mut basis = DMatrix::zeros(p, p);
    for (k, &cid) in comp.iter().enumerate() {
        basis[(k, cid)] = 1.0 / (size[cid] as f64).sqrt();
    }
    let mut eigenvalues = vec![0.0; nc];
    if p > nc {
        let e = SymmetricEigen::new(fiber.laplacian());
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
        for (col, &idx) in order[nc..].iter().enumerate() {
            eigenvalues.push(e.eigenvalues[idx]);
            basis.set_column(nc + col, &e.eigenvectors.column(idx));
        }
    }
    Ok(FiberSectors { eigenvalues, basis, kernel_dim: nc })
}

/// Symmetric tridiagonal matrix `(diag, off)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

fn side_sign(side: Side) -> f64 {
    match side {
        Side::Funnel => 1.0,
        Side::Cusp => -1.0,
    }
}

/// Fiber potential at level `n` for sector eigenvalue `mu_k`, before perturbation.
pub fn sector_potential(side: Side, n: usize, mu_k: f64, product: ProductKind) -> f64 {
    if mu_k == 0.0 {
        return 0.0;
    }
    match product {
        ProductKind::Twisted => mu_k * (-side_sign(side) * n as f64).exp(),
        ProductKind::Cartesian => mu_k,
    }
}

/// Jacobi chain of sector `mu_k` on one side, without gluing terms, in the unit gauge.
pub fn side_chain(side: Side, n1: usize, m2: f64, mu_k: f64, product: ProductKind, pert: &PerturbationSpec) -> Chain {
    let s = side_sign(side);
    let scale = match product {
        ProductKind::Twisted => 1.0 / m2,
        ProductKind::Cartesian => 1.0,
    };
    let mu: Vec<f64> = (0..n1).map(|n| pert.mu.at(n as i64, 0)).collect();
    let ev: Vec<f64> = (0..n1).map(|n| pert.eps.at(n as i64, 0)).collect();
    let mut diag = Vec::with_capacity(n1);
    for n in 0..n1 {
        let mut ray = 0.0;
        if n > 0 {
            ray += (1.0 + ev[n - 1]) * (-s / 2.0).exp();
        }
        if n + 1 < n1 {
            ray += (1.0 + ev[n]) * (s / 2.0).exp();
        }
        let pot = (1.0 + ev[n]) * sector_potential(side, n, mu_k, product);
        diag.push((scale * ray + pot) / (1.0 + mu[n]) + pert.v.at(n as i64, 0));
    }
    let off = (0..n1.saturating_sub(1)).map(|n| -scale * (1.0 + ev[n]) / ((1.0 + mu[n]) * (1.0 + mu[n + 1])).sqrt()).collect();
    Chain { diag, off }
}

/// One basis site of the sector model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Site {
    pub region: Region,
    pub level: usize,
    /// Sector index on a ray side, vertex index on the compact part.
    pub sector: usize,
    pub low_energy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorModel {
    pub h: OperatorMatrix,
    pub a: OperatorMatrix,
    /// `n + 1/2` per site; compact sites carry 0.
    pub lambda: Vec<f64>,
    pub sites: Vec<Site>,
    pub dropped_sites: usize,
    pub he_cap: f64,
}

impl SectorModel {
    pub fn dim(&self) -> usize {
        self.sites.len()
    }

    /// `<Lambda>^{-s}` per site, 1 on the compact part.
    pub fn lambda_weight(&self, s: f64) -> Vec<f64> {
        self.sites
            .iter()
            .zip(&self.lambda)
            .map(|(site, &l)| if site.region == Region::Compact { 1.0 } else { bracket(l).powf(-s) })
            .collect()
    }

    pub fn index_of(&self, region: Region, level: usize, sector: usize) -> Option<usize> {
        self.sites.iter().position(|s| s.region == region && s.level == level && s.sector == sector)
    }

    /// Sites of the low-energy part of the cusp.
    pub fn cusp_le_mask(&self) -> Vec<bool> {
        self.sites.iter().map(|s| s.region == Region::Cusp && s.low_energy).collect()
    }

    pub fn cusp_he_mask(&self) -> Vec<bool> {
        self.sites.iter().map(|s| s.region == Region::Cusp && !s.low_energy).collect()
    }
}

struct SideData {
    side: Side,
    fiber: FiniteGraphSpec,
    sectors: FiberSectors,
}

/// Build `H` and `A` of a geometry in the sector basis.
///
/// Site order is funnel levels from the cut inward, the compact part, then cusp levels
/// outward, which keeps the matrix banded.
pub fn build_sector_model(geom: &GeometrySpec, pert: &PerturbationSpec, opts: SectorOptions) -> Result<SectorModel> {
    if geom.kind == GeometryKind::ZModel {
        return Err(Error::Parameter("the sector model covers half rays and glued geometries".into()));
    }
    if geom.ray_length < 3 {
        return Err(Error::RayLength { n1: geom.ray_length, reason: "sector model needs N1 >= 3".into() });
    }
    geom.fiber.validate()?;
    if let Some(cf) = &geom.cusp_fiber {
        cf.validate()?;
    }
    if geom.kind == GeometryKind::Glued {
        geom.validate()?;
    }
    pert.validate()?;
    if !pert.profiles_radial() {
        return Err(Error::NonRadial("the sector model needs radial mu, eps and V".into()));
    }
    let n1 = geom.ray_length;
    let mut sides = Vec::new();
    for side in [Side::Funnel, Side::Cusp] {
        if geom.has_side(side) {
            let fiber = geom.side_fiber(side).clone();
            let sectors = fiber_sectors(&fiber)?;
            sides.push(SideData { side, fiber, sectors });
        }
    }
    for n in 0..n1 {
        let m = pert.mu.at(n as i64, 0);
        let e = pert.eps.at(n as i64, 0);
        if m <= -1.0 || e <= -1.0 {
            return Err(Error::Perturbation(format!("mu or eps <= -1 at level {n}")));
        }
    }

    let mut sites: Vec<Site> = Vec::new();
    let mut index: HashMap<(Region, usize, usize), usize> = HashMap::new();
    let mut dropped = 0usize;
    let push = |sites: &mut Vec<Site>, index: &mut HashMap<_, _>, s: Site| {
        index.insert((s.region, s.level, s.sector), sites.len());
        sites.push(s);
    };
    let kept = |sd: &SideData, n: usize, k: usize| -> bool {
        sd.side == Side::Funnel || sector_potential(sd.side, n, sd.sectors.eigenvalues[k], geom.product) <= opts.he_cap
    };
    if let Some(sd) = sides.iter().find(|s| s.side == Side::Funnel) {
        for n in (0..n1).rev() {
            for k in 0..sd.fiber.p {
                let low = k < sd.sectors.kernel_dim;
                push(&mut sites, &mut index, Site { region: Region::Funnel, level: n, sector: k, low_energy: low });
            }
        }
    }
    let cp = geom.compact_part.as_ref().filter(|_| geom.kind == GeometryKind::Glued);
    let nk = cp.map_or(0, |c| c.graph.p);
    for j in 0..nk {
        push(&mut sites, &mut index, Site { region: Region::Compact, level: 0, sector: j, low_energy: true });
    }
    if let Some(sd) = sides.iter().find(|s| s.side == Side::Cusp) {
        for n in 0..n1 {
            for k in 0..sd.fiber.p {
                if kept(sd, n, k) {
                    let low = k < sd.sectors.kernel_dim;
                    push(&mut sites, &mut index, Site { region: Region::Cusp, level: n, sector: k, low_energy: low });
                } else {
                    dropped += 1;
                }
            }
        }
    }

    let mut th: Vec<(usize, usize, C64)> = Vec::new();
    let mut ta: Vec<(usize, usize, C64)> = Vec::new();
    let a_ray = ray_a_triplets(n1, 1.0);
    for sd in &sides {
        let region = sd.side.region();
        for k in 0..sd.fiber.p {
            let chain = side_chain(sd.side, n1, sd.fiber.m2, sd.sectors.eigenvalues[k], geom.product, pert);
            for n in 0..n1 {
                let Some(&i) = index.get(&(region, n, k)) else { continue };
                th.push((i, i, c(chain.diag[n])));
                if n + 1 < n1 {
                    if let Some(&j) = index.get(&(region, n + 1, k)) {
                        th.push((i, j, c(chain.off[n])));
                        th.push((j, i, c(chain.off[n])));
                    }
                }
            }
            let with_a = sd.side == Side::Funnel || k < sd.sectors.kernel_dim;
            if with_a {
                for &(r, col, v) in &a_ray {
                    if let (Some(&i), Some(&j)) = (index.get(&(region, r, k)), index.get(&(region, col, k))) {
                        ta.push((i, j, v));
                    }
                }
            }
        }
    }

    if let Some(cp) = cp {
        let g0 = &cp.graph;
        let mu0 = pert.mu.at(0, 0);
        let mu_c: Vec<f64> = (0..nk).map(|j| pert.mu.at(0, j)).collect();
        let mut cdiag: Vec<f64> = (0..nk).map(|j| pert.v.at(0, j)).collect();
        for &(i, j, w) in &g0.edges {
            let e = pert.eps.at(0, i.min(j));
            let we = (1.0 + e) * w;
            let off = -we / (g0.m2 * (1.0 + mu_c[i])).sqrt() / (g0.m2 * (1.0 + mu_c[j])).sqrt();
            th.push((index[&(Region::Compact, 0, i)], index[&(Region::Compact, 0, j)], c(off)));
            th.push((index[&(Region::Compact, 0, j)], index[&(Region::Compact, 0, i)], c(off)));
            cdiag[i] += we / (g0.m2 * (1.0 + mu_c[i]));
            cdiag[j] += we / (g0.m2 * (1.0 + mu_c[j]));
        }
        for sd in &sides {
            let region = sd.side.region();
            let p = sd.fiber.p;
            let m0 = sd.fiber.m2 * (1.0 + mu0);
            let mut g = vec![0.0; p];
            let mut coupling = DMatrix::<f64>::zeros(nk, p);
            for e in cp.gluing.iter().filter(|e| e.side == sd.side) {
                let we = (1.0 + pert.eps.at(0, e.fiber)) * e.weight;
                g[e.fiber] += we / m0;
                cdiag[e.compact] += we / (g0.m2 * (1.0 + mu_c[e.compact]));
                coupling[(e.compact, e.fiber)] -= we / (m0 * g0.m2 * (1.0 + mu_c[e.compact])).sqrt();
            }
            let phi = &sd.sectors.basis;
            let block = phi.transpose() * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(g.clone())) * phi;
            let gmax = g.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            let uniform = g.iter().all(|&x| x == g[0]);
            for a in 0..p {
                for b in 0..p {
                    let v = if uniform { if a == b { g[0] } else { 0.0 } } else { block[(a, b)] };
                    if v.abs() > 1e-13 * gmax {
                        if let (Some(&i), Some(&j)) = (index.get(&(region, 0, a)), index.get(&(region, 0, b))) {
                            th.push((i, j, c(v)));
                        }
                    }
                }
            }
            let proj = &coupling * phi;
            let cmax = coupling.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            for jc in 0..nk {
                for k in 0..p {
                    let v = proj[(jc, k)];
                    if v.abs() > 1e-13 * cmax {
                        if let Some(&i) = index.get(&(region, 0, k)) {
                            let jj = index[&(Region::Compact, 0, jc)];
                            th.push((i, jj, c(v)));
                            th.push((jj, i, c(v)));
                        }
                    }
                }
            }
        }
        for (j, &d) in cdiag.iter().enumerate() {
            th.push((index[&(Region::Compact, 0, j)], index[&(Region::Compact, 0, j)], c(d)));
        }
    }

    let dim = sites.len();
    let labels: Vec<VertexLabel> =
        sites.iter().map(|s| VertexLabel { region: s.region, level: s.level as i64, fiber: s.sector }).collect();
    let edge_distance: Vec<Option<usize>> =
        sites.iter().map(|s| if s.region == Region::Compact { None } else { Some(n1 - 1 - s.level) }).collect();
    let mut h = OperatorMatrix::new(vec![1.0; dim], CsrMatrix::from_triplets(dim, dim, &th), true)?;
    h.labels = Some(labels);
    h.edge_distance = edge_distance;
    let a = OperatorMatrix::new(vec![1.0; dim], CsrMatrix::from_triplets(dim, dim, &ta), true)?.with_layout_of(&h);
    let lambda = sites.iter().map(|s| if s.region == Region::Compact { 0.0 } else { s.level as f64 + 0.5 }).collect();
    Ok(SectorModel { h, a, lambda, sites, dropped_sites: dropped, he_cap: opts.he_cap })
}

/// Lowest `count` eigenvalues of the high-energy part of a free cusp product, from uncapped chains.
pub fn cusp_he_lowest(n1: usize, fiber: &FiniteGraphSpec, product: ProductKind, count: usize) -> Result<Vec<f64>> {
    let fs = fiber_sectors(fiber)?;
    let zero = PerturbationSpec::zero();
    let mut all = Vec::new();
    for k in fs.kernel_dim..fiber.p {
        let ch = side_chain(Side::Cusp, n1, fiber.m2, fs.eigenvalues[k], product, &zero);
        for j in 0..count.min(n1) {
            all.push(crate::spectral::tridiag_kth_eigenvalue(&ch.diag, &ch.off, j));
        }
    }
    all.sort_by(f64::total_cmp);
    all.truncate(count);
    Ok(all)
}

/// Spectrum of the low-energy block of a cusp product (kernel sector chain).
pub fn cusp_le_spectrum(n1: usize, fiber: &FiniteGraphSpec, product: ProductKind, pert: &PerturbationSpec) -> Result<Vec<f64>> {
    fiber.validate()?;
    pert.validate()?;
    if !pert.profiles_radial() {
        return Err(Error::NonRadial("the low-energy block needs radial data".into()));
    }
    let ch = side_chain(Side::Cusp, n1, fiber.m2, 0.0, product, pert);
    let d = DMatrix::from_fn(n1, n1, |i, j| {
        if i == j {
            ch.diag[i]
        } else if i + 1 == j {
            ch.off[i]
        } else if j + 1 == i {
            ch.off[j]
        } else {
            0.0
        }
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(d).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugate::assemble_a_glued;
    use crate::consts::{alpha, beta};
    use crate::operator::{assemble_laplacian, assemble_perturbed_laplacian};
    use crate::perturbation::{make_power_decay, Profile};
    use crate::spectral::{eigendecompose, symmetrize};

    fn sorted_eigs(m: &DMatrix<C64>) -> Vec<f64> {
        let mut v: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    fn pert() -> PerturbationSpec {
        PerturbationSpec::new(
            make_power_decay(0.5, 1.0).unwrap(),
            make_power_decay(0.3, 1.0).unwrap(),
            make_power_decay(0.3, 1.0).unwrap(),
        )
    }

    #[test]
    fn fiber_basis_kernel_first() {
        let fs = fiber_sectors(&FiniteGraphSpec::triangle()).unwrap();
        assert_eq!(fs.kernel_dim, 1);
        assert_eq!(fs.eigenvalues[0], 0.0);
        assert!((fs.eigenvalues[1] - 3.0).abs() < 1e-12 && (fs.eigenvalues[2] - 3.0).abs() < 1e-12);
        let g = fs.basis.transpose() * &fs.basis;
        assert!((g - DMatrix::identity(3, 3)).abs().max() < 1e-14);
        let two = FiniteGraphSpec::edgeless(2);
        let fs2 = fiber_sectors(&two).unwrap();
        assert_eq!(fs2.kernel_dim, 2);
    }

    fn compare(geom: &GeometrySpec, pert: &PerturbationSpec) {
        let g = geom.build().unwrap();
        let hv = assemble_perturbed_laplacian(&g, pert).unwrap();
        let ev = eigendecompose(&hv).unwrap().eigenvalues;
        let sm = build_sector_model(geom, pert, SectorOptions { he_cap: f64::INFINITY }).unwrap();
        assert_eq!(sm.dim(), hv.dim());
        let es = eigendecompose(&sm.h).unwrap().eigenvalues;
        let scale = ev.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        for (a, b) in ev.iter().zip(&es) {
            assert!((a - b).abs() < 1e-9 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn matches_vertex_basis_spectra() {
        let tri = FiniteGraphSpec::triangle();
        compare(&GeometrySpec::glued_hub(8, tri.clone()), &PerturbationSpec::zero());
        compare(&GeometrySpec::glued_hub(8, tri.clone()), &pert());
        compare(&GeometrySpec::half_ray(Side::Cusp, 9, FiniteGraphSpec::path(4)), &pert());
        compare(&GeometrySpec::half_ray(Side::Funnel, 9, FiniteGraphSpec::cycle(4).with_m2(2.0)), &pert());
        let mut cart = GeometrySpec::glued_hub(7, FiniteGraphSpec::path(3));
        cart.product = ProductKind::Cartesian;
        compare(&cart, &pert());
        let mut uneven = GeometrySpec::glued_hub(7, tri.clone());
        uneven.compact_part.as_mut().unwrap().gluing.truncate(2);
        uneven.compact_part.as_mut().unwrap().gluing[1].weight = 2.5;
        compare(&uneven, &pert());
    }

    #[test]
    fn commutator_spectrum_matches_vertex_basis() {
        let geom = GeometrySpec::glued_hub(10, FiniteGraphSpec::triangle());
        let g = geom.build().unwrap();
        let hv = symmetrize(&assemble_laplacian(&g)).unwrap().to_dense();
        let av = symmetrize(&assemble_a_glued(&geom).unwrap().a).unwrap().to_dense();
        let cv = (&hv * &av - &av * &hv) * C64::new(0.0, 1.0);
        let sm = build_sector_model(&geom, &PerturbationSpec::zero(), SectorOptions::default()).unwrap();
        let (hs, as_) = (sm.h.to_dense(), sm.a.to_dense());
        let cs = (&hs * &as_ - &as_ * &hs) * C64::new(0.0, 1.0);
        for (a, b) in sorted_eigs(&cv).iter().zip(&sorted_eigs(&cs)) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn cap_drops_only_high_cusp_sites() {
        let geom = GeometrySpec::glued_hub(200, FiniteGraphSpec::triangle());
        let sm = build_sector_model(&geom, &PerturbationSpec::zero(), SectorOptions::default()).unwrap();
        let he_levels = (1e6f64 / 3.0).ln().floor() as usize + 1;
        assert_eq!(sm.dropped_sites, 2 * (200 - he_levels));
        assert_eq!(sm.dim(), 600 + 1 + 200 + 2 * he_levels);
        assert!(sm.a.entries.triplets().all(|(i, j, _)| sm.sites[i].low_energy || sm.sites[i].region == Region::Funnel
            && (sm.sites[j].low_energy || sm.sites[j].region == Region::Funnel)));
    }

    #[test]
    fn lifts_exponent_guard() {
        let geom = GeometrySpec::half_ray(Side::Cusp, 5000, FiniteGraphSpec::triangle());
        let sm = build_sector_model(&geom, &PerturbationSpec::zero(), SectorOptions::default()).unwrap();
        assert_eq!(sm.sites.iter().filter(|s| s.low_energy).count(), 5000);
        assert!(geom.build().is_err());
    }

    #[test]
    fn rejects_non_radial() {
        let geom = GeometrySpec::glued_hub(10, FiniteGraphSpec::triangle());
        let p = PerturbationSpec::new(Profile::Zero, Profile::Zero, Profile::FiberLinear { slope: 1.0 });
        assert!(matches!(build_sector_model(&geom, &p, SectorOptions::default()), Err(Error::NonRadial(_))));
    }

    #[test]
    fn le_block_fills_band() {
        let ev = cusp_le_spectrum(400, &FiniteGraphSpec::triangle(), ProductKind::Twisted, &PerturbationSpec::zero()).unwrap();
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[1] - alpha()).abs() < 1e-3);
        assert!((ev.last().unwrap() - beta()).abs() < 1e-3);
    }

    #[test]
    fn he_eigenvalues_are_discrete_and_stable() {
        let tri = FiniteGraphSpec::triangle();
        let a = cusp_he_lowest(150, &tri, ProductKind::Twisted, 5).unwrap();
        let b = cusp_he_lowest(300, &tri, ProductKind::Twisted, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-4 * y.abs());
        }
        assert!(a[0] > 3.0);
    }
}
