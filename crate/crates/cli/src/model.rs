//! Operators for one truncation, in the sector basis or the vertex basis.

use anyhow::{bail, Context, Result};
use cusplab::conjugate::assemble_a_for;
use cusplab::consts::bracket;
use cusplab::operator::assemble_perturbed_laplacian;
use cusplab::sector::{build_sector_model, SectorOptions};
use cusplab::{GeometryKind, GeometrySpec, OperatorMatrix, PerturbationSpec, Profile, Region};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    #[default]
    Auto,
    Sector,
    Vertex,
}

impl Basis {
    pub fn resolve(self, geom: &GeometrySpec) -> Basis {
        match (self, geom.kind) {
            (Basis::Auto, GeometryKind::ZModel) => Basis::Vertex,
            (Basis::Auto, _) => Basis::Sector,
            (b, _) => b,
        }
    }
}

pub struct Model {
    pub h: OperatorMatrix,
    pub a: Option<OperatorMatrix>,
    /// `n + 1/2` per index, `None` on compact vertices.
    pub lambda: Vec<Option<f64>>,
    /// Junction vertex: the first compact vertex, else level 0 of the first ray.
    pub hub: usize,
}

impl Model {
    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn weight(&self, s: f64) -> Vec<f64> {
        self.lambda.iter().map(|l| l.map_or(1.0, |l| bracket(l).powf(-s))).collect()
    }
}

pub fn build_model(geom: &GeometrySpec, pert: &PerturbationSpec, basis: Basis, he_cap: f64, n1: usize) -> Result<Model> {
    let g = geom.with_ray_length(n1);
    match basis.resolve(geom) {
        Basis::Sector => {
            let m = build_sector_model(&g, pert, SectorOptions { he_cap })?;
            let lambda = m.sites.iter().zip(&m.lambda).map(|(s, &l)| (s.region != Region::Compact).then_some(l)).collect();
            let hub = m
                .sites
                .iter()
                .position(|s| s.region == Region::Compact)
                .or_else(|| m.sites.iter().position(|s| s.level == 0))
                .unwrap_or(0);
            Ok(Model { h: m.h, a: Some(m.a), lambda, hub })
        }
        Basis::Vertex => {
            let graph = g.build()?;
            let h = assemble_perturbed_laplacian(&graph, pert)?;
            let a = if geom.kind == GeometryKind::ZModel || pert.mu != Profile::Zero { None } else { Some(assemble_a_for(&g)?.a) };
            let labels = graph.labels().context("built graphs are labelled")?;
            let lambda: Vec<Option<f64>> = labels
                .iter()
                .map(|l| (l.region != Region::Compact).then_some(l.level.unsigned_abs() as f64 + 0.5))
                .collect();
            let hub = labels
                .iter()
                .position(|l| l.region == Region::Compact)
                .or_else(|| labels.iter().position(|l| l.level == 0))
                .unwrap_or(0);
            Ok(Model { h, a, lambda, hub })
        }
        Basis::Auto => bail!("unresolved basis"),
    }
}

/// Refuse dense work above `max_dim` before any computation starts.
pub fn check_dim(geom: &GeometrySpec, pert: &PerturbationSpec, basis: Basis, he_cap: f64, n1: usize, max_dim: usize) -> Result<()> {
    let dim = build_model(geom, pert, basis, he_cap, n1)?.dim();
    if dim > max_dim {
        bail!(
            "numeric cap exceeded: N1 = {n1} gives dimension {dim} > max_dim {max_dim}; \
             lower the largest truncation or raise --max-dim (dense work is refused above 6000)"
        );
    }
    Ok(())
}
