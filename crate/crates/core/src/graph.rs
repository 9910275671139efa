//! Weighted graphs `(E, V, m)`: exponential rays, finite fibers, products and glued models.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Largest level allowed on an exponentially weighted ray (`e^{709}` is near `f64::MAX`).
pub const MAX_EXP_LEVEL: usize = 700;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Ray,
    Funnel,
    Compact,
    Cusp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Funnel,
    Cusp,
}

impl Side {
    pub fn region(self) -> Region {
        match self {
            Side::Funnel => Region::Funnel,
            Side::Cusp => Region::Cusp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VertexLabel {
    pub region: Region,
    /// Ray coordinate; signed on the Z-model, 0 on compact vertices.
    pub level: i64,
    /// Fiber coordinate; compact vertices store their own index here.
    pub fiber: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    m: Vec<f64>,
    adj: Vec<Vec<(usize, f64)>>,
    labels: Option<Vec<VertexLabel>>,
    max_level: Option<i64>,
}

impl WeightedGraph {
    /// Edges are undirected; repeated pairs are summed, zero weights skipped.
    pub fn new(m: Vec<f64>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        for (i, &v) in m.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveWeight { index: i, value: v });
            }
        }
        let n = m.len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge ({i},{j}) out of range for {n} vertices")));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at {i}")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidGraph(format!("edge ({i},{j}) has weight {w}")));
            }
            if w == 0.0 {
                continue;
            }
            add_half(&mut adj[i], j, w);
            add_half(&mut adj[j], i, w);
        }
        for row in &mut adj {
            row.sort_by_key(|&(j, _)| j);
        }
        Ok(Self { m, adj, labels: None, max_level: None })
    }

    pub fn with_labels(mut self, labels: Vec<VertexLabel>, max_level: Option<i64>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::InvalidGraph(format!("{} labels for {} vertices", labels.len(), self.len())));
        }
        self.labels = Some(labels);
        self.max_level = max_level;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn measure(&self) -> &[f64] {
        &self.m
    }

    pub fn neighbors(&self, x: usize) -> &[(usize, f64)] {
        &self.adj[x]
    }

    pub fn weight(&self, x: usize, y: usize) -> f64 {
        match self.adj[x].binary_search_by_key(&y, |&(j, _)| j) {
            Ok(k) => self.adj[x][k].1,
            Err(_) => 0.0,
        }
    }

    /// Each undirected edge once, with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.adj.iter().enumerate() {
            for &(j, w) in row {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// `deg(x) = (1/m(x)) sum_y E(x,y)`.
    pub fn degree(&self, x: usize) -> f64 {
        self.adj[x].iter().map(|&(_, w)| w).sum::<f64>() / self.m[x]
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.len()).map(|x| self.degree(x)).collect()
    }

    pub fn total_measure(&self) -> f64 {
        self.m.iter().sum()
    }

    pub fn labels(&self) -> Option<&[VertexLabel]> {
        self.labels.as_deref()
    }

    pub fn label(&self, x: usize) -> Option<VertexLabel> {
        self.labels.as_ref().map(|l| l[x])
    }

    pub fn max_level(&self) -> Option<i64> {
        self.max_level
    }

    /// Number of levels between a ray vertex and the truncation cut; `None` off the rays.
    pub fn truncation_distance(&self, x: usize) -> Option<usize> {
        let l = self.label(x)?;
        if l.region == Region::Compact {
            return None;
        }
        let max = self.max_level?;
        Some((max - l.level.abs()).max(0) as usize)
    }

    pub fn vertices_in(&self, region: Region) -> Vec<usize> {
        match &self.labels {
            Some(l) => (0..self.len()).filter(|&x| l[x].region == region).collect(),
            None => Vec::new(),
        }
    }

    pub fn component_count(&self) -> usize {
        let mut uf = UnionFind::new(self.len());
        for (i, j, _) in self.edges() {
            uf.union(i, j);
        }
        uf.count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.len()).all(|x| self.adj[x].iter().all(|&(y, w)| self.weight(y, x) == w && y != x))
    }
}

fn add_half(row: &mut Vec<(usize, f64)>, j: usize, w: f64) {
    match row.iter_mut().find(|(k, _)| *k == j) {
        Some(e) => e.1 += w,
        None => row.push((j, w)),
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }

    fn count(&mut self) -> usize {
        (0..self.parent.len()).filter(|&x| self.find(x) == x).count()
    }
}

/// Finite graph with constant vertex measure `m2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteGraphSpec {
    pub p: usize,
    #[serde(default)]
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default = "one")]
    pub m2: f64,
}

fn one() -> f64 {
    1.0
}

impl FiniteGraphSpec {
    pub fn new(p: usize, edges: Vec<(usize, usize, f64)>, m2: f64) -> Result<Self> {
        let s = Self { p, edges, m2 };
        s.validate()?;
        Ok(s)
    }

    pub fn single() -> Self {
        Self { p: 1, edges: Vec::new(), m2: 1.0 }
    }

    pub fn edgeless(p: usize) -> Self {
        Self { p, edges: Vec::new(), m2: 1.0 }
    }

    pub fn path(p: usize) -> Self {
        Self { p, edges: (1..p).map(|k| (k - 1, k, 1.0)).collect(), m2: 1.0 }
    }

    pub fn cycle(p: usize) -> Self {
        let mut s = Self::path(p);
        if p > 2 {
            s.edges.push((p - 1, 0, 1.0));
        }
        s
    }

    /// Unit-weight 3-cycle with `m2 = 1`.
    pub fn triangle() -> Self {
        Self::cycle(3)
    }

    pub fn with_m2(mut self, m2: f64) -> Self {
        self.m2 = m2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m2 > 0.0) || !self.m2.is_finite() {
            return Err(Error::InvalidGraph(format!("m2 must be positive, got {}", self.m2)));
        }
        for &(i, j, w) in &self.edges {
            if i >= self.p || j >= self.p {
                return Err(Error::InvalidGraph(format!("fiber edge ({i},{j}) out of range for p={}", self.p)));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("fiber self-loop at {i}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidGraph(format!("fiber edge ({i},{j}) weight {w} must be positive")));
            }
        }
        Ok(())
    }

    pub fn to_graph(&self) -> Result<WeightedGraph> {
        self.validate()?;
        WeightedGraph::new(vec![self.m2; self.p], &self.edges)
    }

    /// Summed symmetric weight table.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.p, self.p);
        for &(i, j, w) in &self.edges {
            e[(i, j)] += w;
            e[(j, i)] += w;
        }
        e
    }

    /// Dense `Delta_2 = (Deg - E) / m2`, symmetric since `m2` is constant.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let e = self.weight_matrix();
        let mut l = -e.clone();
        for i in 0..self.p {
            l[(i, i)] = e.row(i).sum();
        }
        l / self.m2
    }

    pub fn component_count(&self) -> usize {
        let mut uf = UnionFind::new(self.p);
        for &(i, j, _) in &self.edges {
            uf.union(i, j);
        }
        uf.count()
    }

    /// Component index of every vertex, components numbered by first appearance.
    pub fn components(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.p);
        for &(i, j, _) in &self.edges {
            uf.union(i, j);
        }
        let mut ids = vec![usize::MAX; self.p];
        let mut root_id = std::collections::HashMap::new();
        for (k, id) in ids.iter_mut().enumerate() {
            let r = uf.find(k);
            let next = root_id.len();
            *id = *root_id.entry(r).or_insert(next);
        }
        ids
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() <= 1
    }

    /// `dim ker(Delta_2)`, the number of components.
    pub fn kernel_dim(&self) -> usize {
        self.component_count()
    }
}

fn check_ray_length(n1: usize) -> Result<()> {
    if n1 < 2 {
        return Err(Error::RayLength { n1, reason: "need at least 2 levels".into() });
    }
    if n1 > MAX_EXP_LEVEL {
        return Err(Error::RayLength {
            n1,
            reason: format!("exponential weights leave double range beyond {MAX_EXP_LEVEL} levels; use the sector path"),
        });
    }
    Ok(())
}

fn exp_ray(n1: usize, sign: f64) -> Result<WeightedGraph> {
    check_ray_length(n1)?;
    let m: Vec<f64> = (0..n1).map(|n| (sign * n as f64).exp()).collect();
    let edges: Vec<_> = (0..n1 - 1).map(|n| (n, n + 1, (sign * (2 * n + 1) as f64 / 2.0).exp())).collect();
    let labels = (0..n1).map(|n| VertexLabel { region: Region::Ray, level: n as i64, fiber: 0 }).collect();
    WeightedGraph::new(m, &edges)?.with_labels(labels, Some(n1 as i64 - 1))
}

/// `m(n) = e^{-n}`, `E(n, n+1) = e^{-(2n+1)/2}` on `{0..N1-1}`.
pub fn cusp_ray(n1: usize) -> Result<WeightedGraph> {
    exp_ray(n1, -1.0)
}

/// `m(n) = e^{n}`, `E(n, n+1) = e^{(2n+1)/2}` on `{0..N1-1}`.
pub fn funnel_ray(n1: usize) -> Result<WeightedGraph> {
    exp_ray(n1, 1.0)
}

/// Unit-weight path on `{0..N1-1}`.
pub fn unit_ray(n1: usize) -> Result<WeightedGraph> {
    if n1 < 2 {
        return Err(Error::RayLength { n1, reason: "need at least 2 levels".into() });
    }
    let edges: Vec<_> = (0..n1 - 1).map(|n| (n, n + 1, 1.0)).collect();
    let labels = (0..n1).map(|n| VertexLabel { region: Region::Ray, level: n as i64, fiber: 0 }).collect();
    WeightedGraph::new(vec![1.0; n1], &edges)?.with_labels(labels, Some(n1 as i64 - 1))
}

/// Z-model: `m(n) = e^{-n}` for `n` in `[-N1, N1]`; `n > 0` is the cusp side.
pub fn z_ray(n1: usize) -> Result<WeightedGraph> {
    check_ray_length(n1)?;
    let levels: Vec<i64> = (-(n1 as i64)..=n1 as i64).collect();
    let m: Vec<f64> = levels.iter().map(|&n| (-n as f64).exp()).collect();
    let edges: Vec<_> =
        (0..levels.len() - 1).map(|i| (i, i + 1, (-(2 * levels[i] + 1) as f64 / 2.0).exp())).collect();
    let labels = levels.iter().map(|&n| VertexLabel { region: Region::Ray, level: n, fiber: 0 }).collect();
    WeightedGraph::new(m, &edges)?.with_labels(labels, Some(n1 as i64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKind {
    Cartesian,
    #[default]
    Twisted,
}

fn product(g1: &WeightedGraph, g2: &FiniteGraphSpec, kind: ProductKind) -> Result<WeightedGraph> {
    g2.validate()?;
    let p = g2.p;
    let n = g1.len();
    let mut m = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n * p);
    for x in 0..n {
        let base = g1.label(x).unwrap_or(VertexLabel { region: Region::Ray, level: x as i64, fiber: 0 });
        for k in 0..p {
            m.push(g1.measure()[x] * g2.m2);
            labels.push(VertexLabel { region: base.region, level: base.level, fiber: k });
        }
    }
    let mut edges = Vec::new();
    for (x, y, w) in g1.edges() {
        let w = match kind {
            ProductKind::Twisted => w,
            ProductKind::Cartesian => w * g2.m2,
        };
        for k in 0..p {
            edges.push((x * p + k, y * p + k, w));
        }
    }
    for x in 0..n {
        let scale = match kind {
            ProductKind::Twisted => 1.0,
            ProductKind::Cartesian => g1.measure()[x],
        };
        for &(k, l, w) in &g2.edges {
            edges.push((x * p + k, x * p + l, w * scale));
        }
    }
    WeightedGraph::new(m, &edges)?.with_labels(labels, g1.max_level())
}

/// `m = m1 m2`, `E = E1 delta + delta E2`; vertex `(x, k)` has index `x p + k`.
pub fn twisted_product(g1: &WeightedGraph, g2: &FiniteGraphSpec) -> Result<WeightedGraph> {
    product(g1, g2, ProductKind::Twisted)
}

/// `m = m1 m2`, `E = E1 delta m2 + m1 delta E2`.
pub fn cartesian_product(g1: &WeightedGraph, g2: &FiniteGraphSpec) -> Result<WeightedGraph> {
    product(g1, g2, ProductKind::Cartesian)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    HalfRayCusp,
    HalfRayFunnel,
    ZModel,
    Glued,
}

/// Edge between a ray vertex `(level, fiber)` on `side` and compact vertex `compact`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GluingEdge {
    pub side: Side,
    #[serde(default)]
    pub level: usize,
    pub fiber: usize,
    pub compact: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactPart {
    /// Compact vertices carry measure `graph.m2`; `p = 0` is allowed.
    pub graph: FiniteGraphSpec,
    #[serde(default)]
    pub gluing: Vec<GluingEdge>,
}

impl CompactPart {
    pub fn empty() -> Self {
        Self { graph: FiniteGraphSpec { p: 0, edges: Vec::new(), m2: 1.0 }, gluing: Vec::new() }
    }

    /// One unit-measure vertex joined with weight `w` to every level-0 vertex on both sides.
    pub fn hub(funnel_p: usize, cusp_p: usize, w: f64) -> Self {
        let mut gluing = Vec::new();
        for (side, p) in [(Side::Funnel, funnel_p), (Side::Cusp, cusp_p)] {
            for k in 0..p {
                gluing.push(GluingEdge { side, level: 0, fiber: k, compact: 0, weight: w });
            }
        }
        Self { graph: FiniteGraphSpec::single(), gluing }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub kind: GeometryKind,
    pub ray_length: usize,
    #[serde(default = "FiniteGraphSpec::single")]
    pub fiber: FiniteGraphSpec,
    /// Cusp-side fiber for glued models; defaults to `fiber`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cusp_fiber: Option<FiniteGraphSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compact_part: Option<CompactPart>,
    #[serde(default)]
    pub product: ProductKind,
}

impl GeometrySpec {
    pub fn half_ray(side: Side, ray_length: usize, fiber: FiniteGraphSpec) -> Self {
        let kind = match side {
            Side::Funnel => GeometryKind::HalfRayFunnel,
            Side::Cusp => GeometryKind::HalfRayCusp,
        };
        Self { kind, ray_length, fiber, cusp_fiber: None, compact_part: None, product: ProductKind::Twisted }
    }

    /// Glued model with a single hub vertex joined to every level-0 vertex with weight 1.
    pub fn glued_hub(ray_length: usize, fiber: FiniteGraphSpec) -> Self {
        let p = fiber.p;
        Self {
            kind: GeometryKind::Glued,
            ray_length,
            fiber,
            cusp_fiber: None,
            compact_part: Some(CompactPart::hub(p, p, 1.0)),
            product: ProductKind::Twisted,
        }
    }

    pub fn with_ray_length(&self, ray_length: usize) -> Self {
        Self { ray_length, ..self.clone() }
    }

    pub fn side_fiber(&self, side: Side) -> &FiniteGraphSpec {
        match side {
            Side::Funnel => &self.fiber,
            Side::Cusp => self.cusp_fiber.as_ref().unwrap_or(&self.fiber),
        }
    }

    pub fn has_side(&self, side: Side) -> bool {
        matches!(
            (self.kind, side),
            (GeometryKind::Glued, _) | (GeometryKind::HalfRayCusp, Side::Cusp) | (GeometryKind::HalfRayFunnel, Side::Funnel)
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.ray_length < 2 {
            return Err(Error::RayLength { n1: self.ray_length, reason: "need at least 2 levels".into() });
        }
        self.fiber.validate()?;
        if let Some(cf) = &self.cusp_fiber {
            cf.validate()?;
        }
        if self.kind == GeometryKind::Glued {
            let cp = self
                .compact_part
                .as_ref()
                .ok_or_else(|| Error::InvalidGraph("glued geometry needs a compact_part".into()))?;
            cp.graph.validate()?;
            for e in &cp.gluing {
                if e.level != 0 {
                    return Err(Error::Gluing(format!(
                        "edge to {:?} level {} is interior; gluing must use level 0",
                        e.side, e.level
                    )));
                }
                if e.fiber >= self.side_fiber(e.side).p {
                    return Err(Error::Gluing(format!("fiber index {} out of range on {:?}", e.fiber, e.side)));
                }
                if e.compact >= cp.graph.p {
                    return Err(Error::Gluing(format!("compact index {} out of range", e.compact)));
                }
                if !(e.weight > 0.0) || !e.weight.is_finite() {
                    return Err(Error::Gluing(format!("weight {} must be positive", e.weight)));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<WeightedGraph> {
        build_geometry(self)
    }
}

fn side_product(side: Side, n1: usize, fiber: &FiniteGraphSpec, kind: ProductKind) -> Result<WeightedGraph> {
    let ray = match side {
        Side::Funnel => funnel_ray(n1)?,
        Side::Cusp => cusp_ray(n1)?,
    };
    let g = product(&ray, fiber, kind)?;
    relabel(g, side.region())
}

fn relabel(g: WeightedGraph, region: Region) -> Result<WeightedGraph> {
    let labels: Vec<_> = g.labels().unwrap().iter().map(|l| VertexLabel { region, ..*l }).collect();
    let max = g.max_level();
    g.with_labels(labels, max)
}

pub fn build_geometry(spec: &GeometrySpec) -> Result<WeightedGraph> {
    spec.validate()?;
    let n1 = spec.ray_length;
    match spec.kind {
        GeometryKind::HalfRayCusp => side_product(Side::Cusp, n1, &spec.fiber, spec.product),
        GeometryKind::HalfRayFunnel => side_product(Side::Funnel, n1, &spec.fiber, spec.product),
        GeometryKind::ZModel => product(&z_ray(n1)?, &spec.fiber, spec.product),
        GeometryKind::Glued => build_glued_model(spec),
    }
}

/// Funnel block, compact block, cusp block, in that index order.
pub fn build_glued_model(spec: &GeometrySpec) -> Result<WeightedGraph> {
    if spec.kind != GeometryKind::Glued {
        return Err(Error::InvalidGraph("build_glued_model needs kind = glued".into()));
    }
    spec.validate()?;
    let cp = spec.compact_part.as_ref().expect("validated");
    let f = side_product(Side::Funnel, spec.ray_length, spec.side_fiber(Side::Funnel), spec.product)?;
    let c = side_product(Side::Cusp, spec.ray_length, spec.side_fiber(Side::Cusp), spec.product)?;
    let nf = f.len();
    let nk = cp.graph.p;
    let mut m = f.measure().to_vec();
    m.extend(std::iter::repeat_n(cp.graph.m2, nk));
    m.extend_from_slice(c.measure());
    let mut edges = f.edges();
    edges.extend(cp.graph.edges.iter().map(|&(i, j, w)| (nf + i, nf + j, w)));
    edges.extend(c.edges().into_iter().map(|(i, j, w)| (nf + nk + i, nf + nk + j, w)));
    for e in &cp.gluing {
        let ray_index = match e.side {
            Side::Funnel => e.fiber,
            Side::Cusp => nf + nk + e.fiber,
        };
        edges.push((ray_index, nf + e.compact, e.weight));
    }
    let mut labels = f.labels().unwrap().to_vec();
    labels.extend((0..nk).map(|i| VertexLabel { region: Region::Compact, level: 0, fiber: i }));
    labels.extend_from_slice(c.labels().unwrap());
    WeightedGraph::new(m, &edges)?.with_labels(labels, Some(spec.ray_length as i64 - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1.0)
    }

    #[test]
    fn cusp_ray_n3() {
        let g = cusp_ray(3).unwrap();
        let e = std::f64::consts::E;
        assert_eq!(g.measure(), &[1.0, 1.0 / e, 1.0 / (e * e)]);
        assert!(close(g.weight(0, 1), (-0.5f64).exp(), 1e-15));
        assert!(close(g.weight(1, 2), (-1.5f64).exp(), 1e-15));
    }

    #[test]
    fn funnel_ray_n3() {
        let g = funnel_ray(3).unwrap();
        let e = std::f64::consts::E;
        assert!(close(g.measure()[1], e, 1e-15) && close(g.measure()[2], e * e, 1e-15));
        assert!(close(g.weight(0, 1), 0.5f64.exp(), 1e-15));
    }

    #[test]
    fn origin_measure_is_one() {
        assert_eq!(cusp_ray(2).unwrap().measure()[0], 1.0);
        assert_eq!(funnel_ray(2).unwrap().measure()[0], 1.0);
    }

    #[test]
    fn interior_degree_constant() {
        let d = crate::consts::ray_degree();
        for g in [cusp_ray(100).unwrap(), funnel_ray(100).unwrap()] {
            for n in 1..=98 {
                assert!(close(g.degree(n), d, 1e-12), "n={n}: {}", g.degree(n));
            }
        }
        assert!((d - 2.255_252).abs() < 1e-6);
    }

    #[test]
    fn ray_length_guards() {
        assert!(matches!(cusp_ray(1), Err(Error::RayLength { .. })));
        assert!(matches!(funnel_ray(701), Err(Error::RayLength { .. })));
        assert!(cusp_ray(700).is_ok());
    }

    #[test]
    fn trivial_fiber_product_is_ray() {
        let r = cusp_ray(2).unwrap();
        for g in [twisted_product(&r, &FiniteGraphSpec::single()).unwrap(), cartesian_product(&r, &FiniteGraphSpec::single()).unwrap()] {
            assert_eq!(g.measure(), r.measure());
            assert_eq!(g.edges(), r.edges());
        }
    }

    #[test]
    fn twisted_triangle_weights() {
        let r = cusp_ray(2).unwrap();
        let g = twisted_product(&r, &FiniteGraphSpec::triangle()).unwrap();
        assert_eq!(g.len(), 6);
        for (k, l) in [(0, 1), (1, 2), (0, 2)] {
            assert_eq!(g.weight(k, l), 1.0);
        }
        for k in 0..3 {
            assert_eq!(g.weight(k, 3 + k), r.weight(0, 1));
        }
    }

    #[test]
    fn product_degree_rule() {
        let r = funnel_ray(4).unwrap();
        let fib = FiniteGraphSpec::new(3, vec![(0, 1, 2.0), (1, 2, 0.5)], 1.7).unwrap();
        let g = twisted_product(&r, &fib).unwrap();
        let fg = fib.to_graph().unwrap();
        for x in 0..4 {
            for k in 0..3 {
                let want = r.degree(x) / fib.m2 + fg.degree(k) / r.measure()[x];
                assert!(close(g.degree(x * 3 + k), want, 1e-12));
            }
        }
    }

    #[test]
    fn cartesian_equals_twisted_for_unit_measure() {
        let r = unit_ray(5).unwrap();
        let fib = FiniteGraphSpec::triangle();
        assert_eq!(twisted_product(&r, &fib).unwrap(), cartesian_product(&r, &fib).unwrap());
    }

    #[test]
    fn cartesian_hand_table() {
        let r = cusp_ray(3).unwrap();
        let fib = FiniteGraphSpec::path(2).with_m2(2.0);
        let g = cartesian_product(&r, &fib).unwrap();
        let mut want = [[0.0f64; 6]; 6];
        for x in 0..3 {
            let m1 = (-(x as f64)).exp();
            want[2 * x][2 * x + 1] = m1;
            want[2 * x + 1][2 * x] = m1;
            if x < 2 {
                let e1 = (-(2.0 * x as f64 + 1.0) / 2.0).exp() * 2.0;
                for k in 0..2 {
                    want[2 * x + k][2 * x + 2 + k] = e1;
                    want[2 * x + 2 + k][2 * x + k] = e1;
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                assert!(close(g.weight(i, j), want[i][j], 1e-15), "({i},{j})");
            }
        }
    }

    #[test]
    fn cusp_product_finite_volume() {
        let fib = FiniteGraphSpec::triangle().with_m2(1.3);
        let g = build_geometry(&GeometrySpec::half_ray(Side::Cusp, 700, fib.clone())).unwrap();
        let e = std::f64::consts::E;
        assert!(g.total_measure() < fib.m2 * fib.p as f64 * e / (e - 1.0));
    }

    #[test]
    fn glued_blocks_and_order() {
        let spec = GeometrySpec::glued_hub(5, FiniteGraphSpec::triangle());
        let g = build_glued_model(&spec).unwrap();
        assert_eq!(g.len(), 31);
        assert_eq!(g.label(15).unwrap().region, Region::Compact);
        assert_eq!(g.label(0).unwrap().region, Region::Funnel);
        assert_eq!(g.label(16).unwrap().region, Region::Cusp);
        assert_eq!(g.weight(15, 0), 1.0);
        assert_eq!(g.weight(15, 16), 1.0);
        let f = build_geometry(&GeometrySpec::half_ray(Side::Funnel, 5, FiniteGraphSpec::triangle())).unwrap();
        for (i, j, w) in f.edges() {
            assert_eq!(g.weight(i, j), w);
        }
        assert!(g.is_symmetric());
    }

    #[test]
    fn interior_gluing_rejected() {
        let mut spec = GeometrySpec::glued_hub(5, FiniteGraphSpec::triangle());
        spec.compact_part.as_mut().unwrap().gluing[0].level = 2;
        assert!(matches!(build_glued_model(&spec), Err(Error::Gluing(_))));
    }

    #[test]
    fn glued_requires_compact_part() {
        let mut spec = GeometrySpec::glued_hub(5, FiniteGraphSpec::triangle());
        spec.compact_part = None;
        assert!(build_geometry(&spec).is_err());
    }

    #[test]
    fn z_model_weights() {
        let g = build_geometry(&GeometrySpec {
            kind: GeometryKind::ZModel,
            ray_length: 4,
            fiber: FiniteGraphSpec::single(),
            cusp_fiber: None,
            compact_part: None,
            product: ProductKind::Twisted,
        })
        .unwrap();
        assert_eq!(g.len(), 9);
        for x in 0..9 {
            let n = g.label(x).unwrap().level;
            assert!(close(g.measure()[x], (-n as f64).exp(), 1e-15));
        }
        assert_eq!(g.truncation_distance(0), Some(0));
        assert_eq!(g.truncation_distance(4), Some(4));
    }

    #[test]
    fn fiber_components() {
        assert_eq!(FiniteGraphSpec::triangle().kernel_dim(), 1);
        assert_eq!(FiniteGraphSpec::edgeless(2).kernel_dim(), 2);
        let two = FiniteGraphSpec::new(4, vec![(0, 1, 1.0), (2, 3, 1.0)], 1.0).unwrap();
        assert_eq!(two.components(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn bad_fiber_rejected() {
        assert!(FiniteGraphSpec::new(2, vec![(0, 0, 1.0)], 1.0).is_err());
        assert!(FiniteGraphSpec::new(2, vec![(0, 1, -1.0)], 1.0).is_err());
        assert!(FiniteGraphSpec::new(2, vec![(0, 2, 1.0)], 1.0).is_err());
        assert!(FiniteGraphSpec::new(2, vec![], 0.0).is_err());
    }

    #[test]
    fn spec_roundtrips_json() {
        let spec = GeometrySpec::glued_hub(10, FiniteGraphSpec::triangle());
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<GeometrySpec>(&s).unwrap(), spec);
        let parsed: GeometrySpec =
            serde_json::from_str(r#"{"kind":"half_ray_cusp","ray_length":5,"fiber":{"p":3,"edges":[[0,1,1.0]]}}"#).unwrap();
        assert_eq!(parsed.fiber.m2, 1.0);
        assert_eq!(parsed.product, ProductKind::Twisted);
    }
}
