//! Operators on `l2(V, m)`: Laplacians, multiplication and shift operators, gauge transforms.

use crate::error::{Error, Result};
use crate::graph::{unit_ray, VertexLabel, WeightedGraph};
use crate::perturbation::PerturbationSpec;
use crate::sparse::{c, CsrMatrix, C64};
use nalgebra::DMatrix;

/// Sparse complex matrix together with the measure of its inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub weights: Vec<f64>,
    pub entries: CsrMatrix,
    pub hermitian: bool,
    /// Levels between each row and the truncation cut; `None` off the rays.
    pub edge_distance: Vec<Option<usize>>,
    pub labels: Option<Vec<VertexLabel>>,
}

impl OperatorMatrix {
    pub fn new(weights: Vec<f64>, entries: CsrMatrix, hermitian: bool) -> Result<Self> {
        if entries.nrows() != weights.len() || entries.ncols() != weights.len() {
            return Err(Error::Dimension(format!(
                "{}x{} entries for {} weights",
                entries.nrows(),
                entries.ncols(),
                weights.len()
            )));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonPositiveWeight { index: i, value: w });
            }
        }
        let n = weights.len();
        Ok(Self { weights, entries, hermitian, edge_distance: vec![None; n], labels: None })
    }

    pub fn with_geometry_of(mut self, g: &WeightedGraph) -> Self {
        self.edge_distance = (0..g.len()).map(|x| g.truncation_distance(x)).collect();
        self.labels = g.labels().map(<[_]>::to_vec);
        self
    }

    pub fn with_layout_of(mut self, other: &OperatorMatrix) -> Self {
        self.edge_distance = other.edge_distance.clone();
        self.labels = other.labels.clone();
        self
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries.get(i, j)
    }

    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        self.entries.matvec(f)
    }

    pub fn inner(&self, f: &[C64], g: &[C64]) -> C64 {
        weighted_inner(&self.weights, f, g)
    }

    pub fn norm_of(&self, f: &[C64]) -> f64 {
        weighted_norm(&self.weights, f)
    }

    /// Rows at least `min_distance` levels from the cut; compact rows count as interior.
    pub fn interior_rows(&self, min_distance: usize) -> Vec<bool> {
        self.edge_distance.iter().map(|d| d.is_none_or(|d| d >= min_distance)).collect()
    }

    /// `max |S_ij - conj(S_ji)| / max |S_ij|` for `S = D^{1/2} H D^{-1/2}`.
    pub fn hermitian_defect(&self) -> f64 {
        let s: Vec<f64> = self.weights.iter().map(|m| m.sqrt()).collect();
        let u = |i: usize, j: usize, v: C64| v * (s[i] / s[j]);
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for (i, j, v) in self.entries.triplets() {
            let a = u(i, j, v);
            let b = u(j, i, self.entries.get(j, i)).conj();
            scale = scale.max(a.norm());
            worst = worst.max((a - b).norm());
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        self.entries.to_dense()
    }

    fn same_space(&self, other: &Self) -> Result<()> {
        if self.weights != other.weights {
            return Err(Error::Dimension("operators act on different weighted spaces".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, c(1.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, c(-1.0))
    }

    fn combine(&self, other: &Self, s: C64) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self { entries: self.entries.add(&other.entries, s), hermitian: self.hermitian && other.hermitian, ..self.clone() })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self { entries: self.entries.matmul(&other.entries), hermitian: false, ..self.clone() })
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { entries: self.entries.scale(s), hermitian: self.hermitian && s.im == 0.0, ..self.clone() }
    }

    pub fn flagged(mut self, hermitian: bool) -> Self {
        self.hermitian = hermitian;
        self
    }

    /// `T H T^{-1}` for `T = diag(t)`, carried to the space with `new_weights`.
    pub fn conjugate_diagonal(&self, t: &[f64], new_weights: Vec<f64>) -> Result<Self> {
        let inv: Vec<f64> = t.iter().map(|x| 1.0 / x).collect();
        let entries = self.entries.scale_rows_cols(t, &inv);
        let mut out = Self::new(new_weights, entries, self.hermitian)?;
        out.edge_distance = self.edge_distance.clone();
        out.labels = self.labels.clone();
        Ok(out)
    }
}

pub fn weighted_inner(w: &[f64], f: &[C64], g: &[C64]) -> C64 {
    w.iter().zip(f).zip(g).map(|((&m, a), b)| a.conj() * b * m).sum()
}

pub fn weighted_norm(w: &[f64], f: &[C64]) -> f64 {
    w.iter().zip(f).map(|(&m, a)| m * a.norm_sqr()).sum::<f64>().sqrt()
}

/// `Delta f(x) = (1/m(x)) sum_y E(x,y) (f(x) - f(y))`.
pub fn assemble_laplacian(g: &WeightedGraph) -> OperatorMatrix {
    let mut t = Vec::new();
    for x in 0..g.len() {
        let mx = g.measure()[x];
        let mut d = 0.0;
        for &(y, w) in g.neighbors(x) {
            t.push((x, y, c(-w / mx)));
            d += w;
        }
        t.push((x, x, c(d / mx)));
    }
    let entries = CsrMatrix::from_triplets(g.len(), g.len(), &t);
    OperatorMatrix::new(g.measure().to_vec(), entries, true).expect("graph measures are positive").with_geometry_of(g)
}

/// `Delta_N = 2 - U - U* - 1_{0}` truncated to `{0..N1-1}`.
pub fn assemble_halfline_laplacian(n1: usize) -> Result<OperatorMatrix> {
    Ok(assemble_laplacian(&unit_ray(n1)?))
}

/// Diagonal operator of multiplication by `values`.
pub fn multiplication_operator(values: &[f64], weights: &[f64]) -> Result<OperatorMatrix> {
    if values.len() != weights.len() {
        return Err(Error::Dimension(format!("{} values for {} weights", values.len(), weights.len())));
    }
    OperatorMatrix::new(weights.to_vec(), CsrMatrix::from_real_diagonal(values), true)
}

/// `(U, U*, Q)` on `{0..N1-1}`: `U f(n) = f(n-1)`, `U f(0) = 0`, `Q f(n) = n f(n)`.
pub fn shift_operators(n1: usize) -> Result<(OperatorMatrix, OperatorMatrix, OperatorMatrix)> {
    let g = unit_ray(n1)?;
    let w = vec![1.0; n1];
    let u: Vec<_> = (1..n1).map(|n| (n, n - 1, c(1.0))).collect();
    let us: Vec<_> = (1..n1).map(|n| (n - 1, n, c(1.0))).collect();
    let q: Vec<f64> = (0..n1).map(|n| n as f64).collect();
    let mk = |entries, h| OperatorMatrix::new(w.clone(), entries, h).map(|o| o.with_geometry_of(&g));
    Ok((
        mk(CsrMatrix::from_triplets(n1, n1, &u), false)?,
        mk(CsrMatrix::from_triplets(n1, n1, &us), false)?,
        mk(CsrMatrix::from_real_diagonal(&q), true)?,
    ))
}

/// `T_{m -> m'}`, the twisted weights `E~` and the induced potential `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugePair {
    pub t_diagonal: Vec<f64>,
    pub w_potential: Vec<f64>,
    /// The graph `(E~, V, m)`.
    pub tilde_graph: WeightedGraph,
    pub m_from: Vec<f64>,
    pub m_to: Vec<f64>,
}

/// `1 - sqrt(r)`, via `(1 - r)/(1 + sqrt r)` when `r` is close to 1.
pub fn one_minus_sqrt(one_minus_r: f64) -> f64 {
    let r = 1.0 - one_minus_r;
    if one_minus_r.abs() < 1e-4 {
        one_minus_r / (1.0 + r.sqrt())
    } else {
        1.0 - r.sqrt()
    }
}

/// Gauge data for `G' = (E', V, m_to)` seen from `l2(V, m_from)`: `Delta_{G'} = T (Delta_{G~} - W) T^{-1}`.
pub fn gauge_transform(m_from: &[f64], m_to: &[f64], e_prime: &[(usize, usize, f64)]) -> Result<GaugePair> {
    if m_from.len() != m_to.len() {
        return Err(Error::Dimension(format!("{} vs {} weights", m_from.len(), m_to.len())));
    }
    for (i, (&a, &b)) in m_from.iter().zip(m_to).enumerate() {
        if !(a > 0.0) {
            return Err(Error::NonPositiveWeight { index: i, value: a });
        }
        if !(b > 0.0) {
            return Err(Error::NonPositiveWeight { index: i, value: b });
        }
    }
    let ratio: Vec<f64> = m_from.iter().zip(m_to).map(|(a, b)| a / b).collect();
    let t_diagonal: Vec<f64> = ratio.iter().map(|r| r.sqrt()).collect();
    let tilde: Vec<_> = e_prime.iter().map(|&(x, y, w)| (x, y, w * (ratio[x] * ratio[y]).sqrt())).collect();
    let tilde_graph = WeightedGraph::new(m_from.to_vec(), &tilde)?;
    let mut w_potential = vec![0.0; m_from.len()];
    for x in 0..m_from.len() {
        let mut acc = 0.0;
        for &(y, et) in tilde_graph.neighbors(x) {
            // r = (m_x m'_y) / (m_y m'_x) = ratio_x / ratio_y
            let one_minus_r = (ratio[y] - ratio[x]) / ratio[y];
            acc += et * one_minus_sqrt(one_minus_r);
        }
        w_potential[x] = acc / m_from[x];
    }
    Ok(GaugePair { t_diagonal, w_potential, tilde_graph, m_from: m_from.to_vec(), m_to: m_to.to_vec() })
}

impl GaugePair {
    /// `Delta_{G~} - W` on `l2(V, m_from)`.
    pub fn reduced_operator(&self) -> OperatorMatrix {
        let l = assemble_laplacian(&self.tilde_graph);
        let w = multiplication_operator(&self.w_potential, &self.m_from).expect("same length");
        l.sub(&w).expect("same space")
    }

    /// `T (Delta_{G~} - W) T^{-1}` on `l2(V, m_to)`.
    pub fn conjugated_operator(&self) -> Result<OperatorMatrix> {
        self.reduced_operator().conjugate_diagonal(&self.t_diagonal, self.m_to.clone())
    }

    /// `||T f||_{m_to} / ||f||_{m_from} - 1`.
    pub fn unitarity_defect(&self, f: &[C64]) -> f64 {
        let tf: Vec<C64> = f.iter().zip(&self.t_diagonal).map(|(a, t)| a * *t).collect();
        weighted_norm(&self.m_to, &tf) / weighted_norm(&self.m_from, f) - 1.0
    }
}

/// Laplacian of `(E_eps, V, m_mu)` plus `V`, on `l2(V, m_mu)`.
pub fn assemble_perturbed_laplacian(g: &WeightedGraph, pert: &PerturbationSpec) -> Result<OperatorMatrix> {
    let s = pert.sample(g)?;
    let m_mu: Vec<f64> = g.measure().iter().zip(&s.mu).map(|(m, mu)| m * (1.0 + mu)).collect();
    let edges: Vec<_> = g.edges().iter().zip(&s.eps).map(|(&(i, j, w), &(_, _, e))| (i, j, w * (1.0 + e))).collect();
    let gp = WeightedGraph::new(m_mu, &edges)?;
    let mut t: Vec<(usize, usize, C64)> = assemble_laplacian(&gp).entries.triplets().collect();
    t.extend(s.v.iter().enumerate().map(|(x, &v)| (x, x, c(v))));
    let entries = CsrMatrix::from_triplets(g.len(), g.len(), &t);
    Ok(OperatorMatrix::new(gp.measure().to_vec(), entries, true)?.with_geometry_of(g))
}

/// `T_{m_mu -> m} Delta_{G_{eps,mu}} T^{-1} - Delta_G` from the closed-form difference.
pub fn gauge_difference(g: &WeightedGraph, pert: &PerturbationSpec) -> Result<OperatorMatrix> {
    let s = pert.sample(g)?;
    let eps = s.eps_map();
    let mu = &s.mu;
    let mut t = Vec::new();
    for x in 0..g.len() {
        let mx = g.measure()[x];
        let mut diag = 0.0;
        for &(y, e) in g.neighbors(x) {
            let ex = eps[&(x.min(y), x.max(y))];
            let prod = (1.0 + mu[x]) * (1.0 + mu[y]);
            let sp = prod.sqrt();
            let coef = ex / sp - (mu[x] + mu[y] + mu[x] * mu[y]) / (sp * (1.0 + sp));
            t.push((x, y, c(-coef * e / mx)));
            diag += coef * e / mx;
            let (ax, ay) = ((1.0 + mu[x]).sqrt(), (1.0 + mu[y]).sqrt());
            diag += (1.0 + ex) * e * (mu[y] - mu[x]) / ((1.0 + mu[x]) * ay * (ay + ax)) / mx;
        }
        t.push((x, x, c(diag)));
    }
    let entries = CsrMatrix::from_triplets(g.len(), g.len(), &t);
    Ok(OperatorMatrix::new(g.measure().to_vec(), entries, true)?.with_geometry_of(g))
}

/// The same difference by conjugating the assembled perturbed Laplacian (without `V`).
pub fn gauge_difference_direct(g: &WeightedGraph, pert: &PerturbationSpec) -> Result<OperatorMatrix> {
    let no_v = PerturbationSpec { v: crate::perturbation::Profile::Zero, ..pert.clone() };
    let h = assemble_perturbed_laplacian(g, &no_v)?;
    let t: Vec<f64> = h.weights.iter().zip(g.measure()).map(|(a, b)| (a / b).sqrt()).collect();
    let conj = h.conjugate_diagonal(&t, g.measure().to_vec())?;
    conj.sub(&assemble_laplacian(g))
}
