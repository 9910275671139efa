//! Dense and banded linear algebra on finite sections.

use crate::error::{Error, Result};
use crate::graph::Region;
use crate::operator::OperatorMatrix;
use crate::sparse::{c, CsrMatrix, C64};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_DENSE_CAP: usize = 6000;

/// `D^{1/2} H D^{-1/2}`, Hermitian in the Euclidean product.
pub fn symmetrize(h: &OperatorMatrix) -> Result<CsrMatrix> {
    if !h.hermitian {
        return Err(Error::NotHermitian);
    }
    let s: Vec<f64> = h.weights.iter().map(|m| m.sqrt()).collect();
    let inv: Vec<f64> = s.iter().map(|x| 1.0 / x).collect();
    Ok(h.entries.scale_rows_cols(&s, &inv))
}

/// Symmetrized operator re-wrapped with unit weights.
pub fn unit_gauge(h: &OperatorMatrix) -> Result<OperatorMatrix> {
    let s = symmetrize(h)?;
    Ok(OperatorMatrix::new(vec![1.0; h.dim()], s, true)?.with_layout_of(h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors of the symmetrized operator.
    pub unit_vectors: DMatrix<C64>,
    pub weights: Vec<f64>,
    pub source_dim: usize,
    pub residual_norm: f64,
    pub operator_norm: f64,
}

impl EigenDecomposition {
    /// Columns orthonormal in the weighted product: `D^{-1/2} U`.
    pub fn weighted_vectors(&self) -> DMatrix<C64> {
        let mut v = self.unit_vectors.clone();
        for (i, mut row) in v.row_iter_mut().enumerate() {
            row /= c(self.weights[i].sqrt());
        }
        v
    }

    pub fn weighted_orthonormality_defect(&self) -> f64 {
        let v = self.weighted_vectors();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.weights.len(),
            self.weights.iter().map(|&w| c(w)),
        ));
        let g = v.adjoint() * d * &v;
        (g - DMatrix::identity(self.source_dim, self.source_dim)).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn indices_in(&self, w: SpectralWindow) -> Vec<usize> {
        (0..self.eigenvalues.len()).filter(|&k| w.contains(self.eigenvalues[k])).collect()
    }

    pub fn count_in(&self, w: SpectralWindow) -> usize {
        self.indices_in(w).len()
    }

    /// Columns of the unit-gauge eigenvector matrix with eigenvalue in `w`.
    pub fn window_basis(&self, w: SpectralWindow) -> DMatrix<C64> {
        let idx = self.indices_in(w);
        DMatrix::from_fn(self.source_dim, idx.len(), |i, j| self.unit_vectors[(i, idx[j])])
    }

    /// `g(H)` in the unit gauge.
    pub fn function_unit(&self, g: impl Fn(f64) -> f64) -> DMatrix<C64> {
        let mut scaled = self.unit_vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= c(g(self.eigenvalues[k]));
        }
        scaled * self.unit_vectors.adjoint()
    }
}

fn real_part_if_real(m: &CsrMatrix) -> Option<DMatrix<f64>> {
    if !m.is_real() {
        return None;
    }
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplets() {
        d[(i, j)] += v.re;
    }
    Some(d)
}

/// Dense eigendecomposition of a weighted-Hermitian operator, refusing beyond `cap`.
pub fn eigendecompose_capped(h: &OperatorMatrix, cap: usize) -> Result<EigenDecomposition> {
    let n = h.dim();
    if n > cap {
        return Err(Error::DenseCap { dim: n, cap });
    }
    let s = symmetrize(h)?;
    let (vals, vecs) = match real_part_if_real(&s) {
        Some(d) => {
            let sym = (&d + d.transpose()) * 0.5;
            let e = SymmetricEigen::new(sym);
            (e.eigenvalues.iter().copied().collect::<Vec<_>>(), e.eigenvectors.map(c))
        }
        None => {
            let d = s.to_dense();
            let herm = (&d + d.adjoint()) * c(0.5);
            let e = SymmetricEigen::new(herm);
            (e.eigenvalues.iter().copied().collect::<Vec<_>>(), e.eigenvectors)
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| vals[k]).collect();
    let unit_vectors = DMatrix::from_fn(n, n, |i, j| vecs[(i, order[j])]);
    let mut residual_norm = 0.0f64;
    for (k, &lam) in eigenvalues.iter().enumerate() {
        let u: Vec<C64> = unit_vectors.column(k).iter().copied().collect();
        let su = s.matvec(&u);
        let r = su.iter().zip(&u).map(|(a, b)| (a - b * lam).norm_sqr()).sum::<f64>().sqrt();
        residual_norm = residual_norm.max(r);
    }
    let operator_norm = eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max);
    Ok(EigenDecomposition { eigenvalues, unit_vectors, weights: h.weights.clone(), source_dim: n, residual_norm, operator_norm })
}

pub fn eigendecompose(h: &OperatorMatrix) -> Result<EigenDecomposition> {
    eigendecompose_capped(h, DEFAULT_DENSE_CAP)
}

/// Closed interval `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralWindow {
    pub a: f64,
    pub b: f64,
}

impl SpectralWindow {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a <= b) {
            return Err(Error::Parameter(format!("window [{a}, {b}] is empty")));
        }
        Ok(Self { a, b })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a <= x && x <= self.b
    }
}

/// Spectral projection `E_I(H)` acting on `l2(V, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProjection {
    pub rank: usize,
    /// `U_I U_I^*` in the unit gauge.
    pub unit: DMatrix<C64>,
    pub weights: Vec<f64>,
}

impl SpectralProjection {
    /// `D^{-1/2} U_I U_I^* D^{1/2}`.
    pub fn weighted(&self) -> DMatrix<C64> {
        let n = self.weights.len();
        DMatrix::from_fn(n, n, |i, j| self.unit[(i, j)] * (self.weights[j] / self.weights[i]).sqrt())
    }
}

pub fn spectral_projection(eig: &EigenDecomposition, window: SpectralWindow) -> SpectralProjection {
    let b = eig.window_basis(window);
    SpectralProjection { rank: b.ncols(), unit: &b * b.adjoint(), weights: eig.weights.clone() }
}

/// LU factorization of a banded complex matrix with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    ab: Vec<C64>,
    piv: Vec<usize>,
}

impl BandedLu {
    /// Factor `a` (square, entries outside `[-kl, ku]` must vanish).
    pub fn factor(a: &CsrMatrix, kl: usize, ku: usize) -> Result<Self> {
        let n = a.nrows();
        let width = 2 * kl + ku + 1;
        let mut ab = vec![c(0.0); n * width];
        for (i, j, v) in a.triplets() {
            if j + kl < i || j > i + ku {
                return Err(Error::Dimension(format!("entry ({i},{j}) outside band ({kl},{ku})")));
            }
            ab[i * width + (j + kl - i)] += v;
        }
        let mut piv = vec![0; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = ab[k * width + kl].norm();
            for i in k + 1..=last {
                let v = ab[i * width + (k + kl - i)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular(k));
            }
            piv[k] = p;
            let jmax = (k + ku + kl).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    ab.swap(k * width + (j + kl - k), p * width + (j + kl - p));
                }
            }
            let pivot = ab[k * width + kl];
            for i in k + 1..=last {
                let l = ab[i * width + (k + kl - i)] / pivot;
                ab[i * width + (k + kl - i)] = l;
                if l == c(0.0) {
                    continue;
                }
                for j in k + 1..=jmax {
                    let akj = ab[k * width + (j + kl - k)];
                    ab[i * width + (j + kl - i)] -= l * akj;
                }
            }
        }
        Ok(Self { n, kl, ku, width, ab, piv })
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let (n, kl, w) = (self.n, self.kl, self.width);
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                x[i] -= self.ab[i * w + (k + kl - i)] * xk;
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..=(i + self.ku + kl).min(n - 1) {
                acc -= self.ab[i * w + (j + kl - i)] * x[j];
            }
            x[i] = acc / self.ab[i * w + kl];
        }
        x
    }
}

/// Ordering that keeps the glued layout banded: funnel levels outward-in, compact, then cusp levels.
pub fn band_ordering(h: &OperatorMatrix) -> Vec<usize> {
    let n = h.dim();
    let Some(labels) = &h.labels else {
        return (0..n).collect();
    };
    let mut idx: Vec<usize> = (0..n).collect();
    let key = |x: usize| {
        let l = labels[x];
        let pos = match l.region {
            Region::Funnel => -(l.level + 1),
            Region::Compact => 0,
            Region::Cusp => l.level + 1,
            Region::Ray => l.level,
        };
        (pos, l.fiber, x)
    };
    idx.sort_by_key(|&x| key(x));
    idx
}

/// Direct solver for `(H - z) g = f` on a weighted-Hermitian operator.
#[derive(Debug, Clone)]
pub struct ResolventSolver {
    perm: Vec<usize>,
    lu: BandedLu,
    pub z: C64,
}

impl ResolventSolver {
    pub fn new(h: &OperatorMatrix, z: C64) -> Result<Self> {
        Self::from_matrix(&h.entries, band_ordering(h), z)
    }

    pub fn from_matrix(m: &CsrMatrix, perm: Vec<usize>, z: C64) -> Result<Self> {
        let n = m.nrows();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut t: Vec<(usize, usize, C64)> = m.triplets().map(|(i, j, v)| (inv[i], inv[j], v)).collect();
        t.extend((0..n).map(|i| (i, i, -z)));
        let pm = CsrMatrix::from_triplets(n, n, &t);
        let (mut kl, mut ku) = (0, 0);
        for (i, j, _) in pm.triplets() {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        Ok(Self { lu: BandedLu::factor(&pm, kl, ku)?, perm, z })
    }

    pub fn solve(&self, f: &[C64]) -> Vec<C64> {
        let pf: Vec<C64> = self.perm.iter().map(|&o| f[o]).collect();
        let px = self.lu.solve(&pf);
        let mut out = vec![c(0.0); f.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = px[new];
        }
        out
    }
}

/// `(H - z)^{-1} f`.
pub fn resolvent_apply(h: &OperatorMatrix, z: C64, f: &[C64]) -> Result<Vec<C64>> {
    if z.im == 0.0 {
        return Err(Error::Parameter("resolvent needs Im z != 0".into()));
    }
    if !h.hermitian {
        return Ok(ResolventSolver::new(h, z)?.solve(f));
    }
    let sq: Vec<f64> = h.weights.iter().map(|w| w.sqrt()).collect();
    let u = unit_gauge(h)?;
    let uf: Vec<C64> = f.iter().zip(&sq).map(|(a, s)| a * *s).collect();
    let g = ResolventSolver::new(&u, z)?.solve(&uf);
    Ok(g.iter().zip(&sq).map(|(a, s)| a / *s).collect())
}

pub fn random_vector(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
}

fn euclid_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Above this many stored entries Lanczos keeps only a three-term recurrence.
pub const FULL_REORTH_LIMIT: usize = 8_000_000;

/// Largest eigenvalue of a Hermitian map by Lanczos, with full reorthogonalization when affordable.
pub fn lanczos_largest(n: usize, apply: impl Fn(&[C64]) -> Vec<C64>, seed: u64, tol: f64, max_steps: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut q = random_vector(n, seed);
    let nq = euclid_norm(&q);
    q.iter_mut().for_each(|z| *z /= nq);
    let reorth = n.saturating_mul(max_steps.min(n)) <= FULL_REORTH_LIMIT;
    let mut basis: Vec<Vec<C64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut prev = f64::NAN;
    let steps = max_steps.min(n);
    for k in 0..steps {
        let cur = if reorth { k } else { basis.len() - 1 };
        let mut w = apply(&basis[cur]);
        let a = dot(&basis[cur], &w).re;
        alpha.push(a);
        if reorth {
            for _ in 0..2 {
                for b in &basis {
                    let h = dot(b, &w);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= h * y);
                }
            }
        } else {
            let ac = c(a);
            w.iter_mut().zip(&basis[cur]).for_each(|(x, y)| *x -= ac * y);
            if cur > 0 {
                let bprev = c(beta[k - 1]);
                w.iter_mut().zip(&basis[cur - 1]).for_each(|(x, y)| *x -= bprev * y);
            }
        }
        let ritz = tridiag_max_eigenvalue(&alpha, &beta);
        if (ritz - prev).abs() <= tol * ritz.abs() && k >= 2 {
            return ritz;
        }
        prev = ritz;
        let bnorm = euclid_norm(&w);
        if bnorm <= 1e-14 * ritz.abs().max(1e-300) || k + 1 == steps {
            return ritz;
        }
        beta.push(bnorm);
        w.iter_mut().for_each(|z| *z /= bnorm);
        if !reorth && basis.len() == 2 {
            basis.remove(0);
        }
        basis.push(w);
    }
    prev
}

fn tridiag_max_eigenvalue(d: &[f64], e: &[f64]) -> f64 {
    let n = d.len();
    if n == 1 {
        return d[0];
    }
    let ev = tridiag_eigenvalues(d, &e[..n - 1]);
    *ev.last().unwrap()
}

/// `||M||` for `M` given by its action and adjoint action, via Lanczos on `M* M`.
pub fn operator_norm(
    n: usize,
    apply: impl Fn(&[C64]) -> Vec<C64>,
    apply_adj: impl Fn(&[C64]) -> Vec<C64>,
    seed: u64,
) -> f64 {
    lanczos_largest(n, |x| apply_adj(&apply(x)), seed, 1e-12, 400).max(0.0).sqrt()
}

/// `|| <Lambda>^{-s} (H - z)^{-1} <Lambda>^{-s} ||` on `l2(V, m)`, given the weight values per vertex.
pub fn weighted_resolvent_norm(h: &OperatorMatrix, lambda_s: &[f64], z: C64) -> Result<f64> {
    weighted_resolvent_norm_seeded(h, lambda_s, z, 7)
}

pub fn weighted_resolvent_norm_seeded(h: &OperatorMatrix, lambda_s: &[f64], z: C64, seed: u64) -> Result<f64> {
    if z.im == 0.0 {
        return Err(Error::Parameter("resolvent needs Im z != 0".into()));
    }
    if lambda_s.len() != h.dim() {
        return Err(Error::Dimension(format!("{} weights for dim {}", lambda_s.len(), h.dim())));
    }
    let s = unit_gauge(h)?;
    let mut best = 0.0f64;
    for comp in connected_components(&s.entries) {
        let sub = restrict_operator(&s, &comp)?;
        let w: Vec<f64> = comp.iter().map(|&i| lambda_s[i]).collect();
        best = best.max(component_norm(&sub, &w, z, seed)?);
    }
    Ok(best)
}

fn component_norm(s: &OperatorMatrix, lambda_s: &[f64], z: C64, seed: u64) -> Result<f64> {
    if s.dim() == 1 {
        return Ok(lambda_s[0] * lambda_s[0] / (s.get(0, 0) - z).norm());
    }
    let fwd = ResolventSolver::new(s, z)?;
    let bwd = if s.entries.is_real() { None } else { Some(ResolventSolver::new(s, z.conj())?) };
    let apply = |x: &[C64]| {
        let wx: Vec<C64> = x.iter().zip(lambda_s).map(|(a, w)| a * *w).collect();
        fwd.solve(&wx).iter().zip(lambda_s).map(|(a, w)| a * *w).collect::<Vec<_>>()
    };
    let apply_adj = |x: &[C64]| {
        let wx: Vec<C64> = x.iter().zip(lambda_s).map(|(a, w)| a * *w).collect();
        let y = match &bwd {
            Some(b) => b.solve(&wx),
            None => {
                let cx: Vec<C64> = wx.iter().map(|a| a.conj()).collect();
                fwd.solve(&cx).iter().map(|a| a.conj()).collect()
            }
        };
        y.iter().zip(lambda_s).map(|(a, w)| a * *w).collect::<Vec<_>>()
    };
    Ok(operator_norm(s.dim(), apply, apply_adj, seed))
}

/// Index sets of the connected components of the sparsity graph, each ascending.
pub fn connected_components(m: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (i, j, v) in m.triplets() {
        if v != c(0.0) && i != j {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for x in 0..n {
        let r = find(&mut parent, x);
        groups.entry(r).or_default().push(x);
    }
    groups.into_values().collect()
}

/// Principal submatrix on `idx`, keeping weights and layout.
pub fn restrict_operator(op: &OperatorMatrix, idx: &[usize]) -> Result<OperatorMatrix> {
    let w: Vec<f64> = idx.iter().map(|&i| op.weights[i]).collect();
    let mut out = OperatorMatrix::new(w, op.entries.restrict(idx, idx), op.hermitian)?;
    out.edge_distance = idx.iter().map(|&i| op.edge_distance[i]).collect();
    out.labels = op.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
    Ok(out)
}

/// `e^{-itH} f` for each `t`, by spectral calculus in the weighted space.
pub fn evolve(eig: &EigenDecomposition, f: &[C64], times: &[f64]) -> Vec<Vec<C64>> {
    let sq: Vec<f64> = eig.weights.iter().map(|w| w.sqrt()).collect();
    let u: Vec<C64> = f.iter().zip(&sq).map(|(a, s)| a * *s).collect();
    let coef: Vec<C64> = (0..eig.source_dim).map(|k| eig.unit_vectors.column(k).iter().zip(&u).map(|(v, x)| v.conj() * x).sum()).collect();
    times
        .iter()
        .map(|&t| {
            let mut out = vec![c(0.0); eig.source_dim];
            for (k, ck) in coef.iter().enumerate() {
                let ph = C64::from_polar(1.0, -t * eig.eigenvalues[k]) * ck;
                for (i, o) in out.iter_mut().enumerate() {
                    *o += eig.unit_vectors[(i, k)] * ph;
                }
            }
            out.iter_mut().zip(&sq).for_each(|(a, s)| *a /= *s);
            out
        })
        .collect()
}

/// Number of eigenvalues of the symmetric tridiagonal `(d, e)` strictly below `x`.
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let qq = if q == 0.0 { f64::EPSILON * (e[i - 1].abs() + 1e-300) } else { q };
        q = d[i] - x - e[i - 1] * e[i - 1] / qq;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin(d: &[f64], e: &[f64]) -> (f64, f64) {
    let n = d.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    (lo, hi)
}

/// The `k`-th smallest eigenvalue (0-based) of a symmetric tridiagonal matrix by bisection.
pub fn tridiag_kth_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    let (mut lo, mut hi) = gershgorin(d, e);
    let pad = 1e-12 * (lo.abs().max(hi.abs())).max(1e-300);
    lo -= pad;
    hi += pad;
    for _ in 0..4200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All eigenvalues, ascending.
pub fn tridiag_eigenvalues(d: &[f64], e: &[f64]) -> Vec<f64> {
    (0..d.len()).map(|k| tridiag_kth_eigenvalue(d, e, k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactnessWitness {
    /// `||K restricted to columns at levels >= n||` for `n = 0..tail_levels`.
    pub tail_norms: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    pub first_level_below: Option<usize>,
    pub witnessed_compact: bool,
}

/// Two-part compactness proxy: tail norms fall below `threshold` before half the levels,
/// and the top singular values decay (last of the top 20 at most 1e-2 of the first).
pub fn compactness_witness(k: &OperatorMatrix, tail_levels: usize, threshold: f64) -> Result<CompactnessWitness> {
    let labels = k.labels.as_ref().ok_or_else(|| Error::Parameter("witness needs level labels".into()))?;
    let s = symmetrize(&k.clone().flagged(true))?;
    let adj = s.adjoint();
    let level = |x: usize| match labels[x].region {
        Region::Compact => 0,
        _ => labels[x].level.unsigned_abs() as usize,
    };
    let max_level = (0..k.dim()).map(level).max().unwrap_or(0);
    let n_levels = tail_levels.min(max_level + 1);
    let mut tail_norms = Vec::with_capacity(n_levels);
    for n in 0..n_levels {
        let mask: Vec<bool> = (0..k.dim()).map(|x| level(x) >= n).collect();
        let apply = |x: &[C64]| {
            let mx: Vec<C64> = x.iter().zip(&mask).map(|(a, &m)| if m { *a } else { c(0.0) }).collect();
            s.matvec(&mx)
        };
        let apply_adj = |y: &[C64]| {
            let r = adj.matvec(y);
            r.iter().zip(&mask).map(|(a, &m)| if m { *a } else { c(0.0) }).collect::<Vec<_>>()
        };
        tail_norms.push(operator_norm(k.dim(), apply, apply_adj, 11 + n as u64));
    }
    let dense = s.to_dense();
    let mut sv: Vec<f64> = dense.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.truncate(20);
    let first_level_below = tail_norms.iter().position(|&t| t < threshold);
    let half = max_level.div_ceil(2);
    let tails_ok = first_level_below.is_some_and(|l| l < half);
    let sv_ok = match (sv.first(), sv.last()) {
        (Some(&a), Some(&b)) => a == 0.0 || b <= 1e-2 * a,
        _ => true,
    };
    Ok(CompactnessWitness { tail_norms, singular_values: sv, threshold, first_level_below, witnessed_compact: tails_ok && sv_ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{cusp_ray, FiniteGraphSpec, GeometrySpec, Side};
    use crate::operator::{assemble_halfline_laplacian, assemble_laplacian};

    #[test]
    fn symmetrize_unit_weights_is_identity_map() {
        let l = assemble_halfline_laplacian(20).unwrap();
        assert_eq!(symmetrize(&l).unwrap(), l.entries);
    }

    #[test]
    fn symmetrize_rejects_unflagged() {
        let l = assemble_halfline_laplacian(5).unwrap().flagged(false);
        assert_eq!(symmetrize(&l), Err(Error::NotHermitian));
    }

    #[test]
    fn cusp_ray_spectrum_weighted_vs_symmetrized() {
        let l = assemble_laplacian(&cusp_ray(16).unwrap());
        let e = eigendecompose(&l).unwrap();
        let d = l.to_dense().map(|z| z.re);
        let mut ev: Vec<f64> = d.complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        for (a, b) in e.eigenvalues.iter().zip(&ev) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(e.weighted_orthonormality_defect() < 1e-10);
        assert!(e.residual_norm < 1e-9 * e.operator_norm.max(1.0));
    }

    #[test]
    fn dense_cap_refuses() {
        let l = assemble_halfline_laplacian(30).unwrap();
        assert_eq!(eigendecompose_capped(&l, 10).unwrap_err(), Error::DenseCap { dim: 30, cap: 10 });
    }

    #[test]
    fn halfline_fills_band() {
        let e = eigendecompose(&assemble_halfline_laplacian(2000).unwrap()).unwrap();
        assert!(e.eigenvalues[0] < 1e-5);
        assert!((4.0 - e.eigenvalues.last().unwrap()).abs() < 1e-2);
        let gap = e.eigenvalues.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(gap < 1e-2);
    }

    #[test]
    fn projections() {
        let h = assemble_laplacian(&GeometrySpec::half_ray(Side::Funnel, 12, FiniteGraphSpec::triangle()).build().unwrap());
        let e = eigendecompose(&h).unwrap();
        let all = spectral_projection(&e, SpectralWindow::new(-1.0, 1e9).unwrap());
        assert!((all.weighted() - DMatrix::identity(h.dim(), h.dim())).iter().all(|z| z.norm() < 1e-10));
        let none = spectral_projection(&e, SpectralWindow::new(-1.0, -0.5).unwrap());
        assert_eq!(none.rank, 0);
        assert!(none.unit.iter().all(|z| z.norm() == 0.0));
        let w = SpectralWindow::new(1.0, 3.0).unwrap();
        let p = spectral_projection(&e, w);
        assert_eq!(p.rank, e.eigenvalues.iter().filter(|&&x| (1.0..=3.0).contains(&x)).count());
        let pw = p.weighted();
        assert!((&pw * &pw - &pw).iter().all(|z| z.norm() < 1e-12));
        let dm = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(h.dim(), h.weights.iter().map(|&x| c(x))));
        assert!((&dm * &pw - pw.adjoint() * &dm).iter().all(|z| z.norm() < 1e-10 * 1e5));
    }

    #[test]
    fn banded_lu_matches_dense() {
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, C64::new(0.1 * i as f64, 1.0)));
            if i + 2 < n {
                t.push((i, i + 2, C64::new(3.0, -1.0)));
            }
            if i >= 1 {
                t.push((i, i - 1, C64::new(-2.0, 0.5)));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let lu = BandedLu::factor(&a, 1, 2).unwrap();
        let b = random_vector(n, 3);
        let x = lu.solve(&b);
        let r = a.matvec(&x);
        assert!(r.iter().zip(&b).all(|(p, q)| (p - q).norm() < 1e-11));
    }

    #[test]
    fn resolvent_examples() {
        let z0 = OperatorMatrix::new(vec![1.0; 4], CsrMatrix::zeros(4, 4), true).unwrap();
        let f = random_vector(4, 1);
        let g = resolvent_apply(&z0, C64::new(0.0, 1.0), &f).unwrap();
        for (a, b) in g.iter().zip(&f) {
            assert!((a - b * C64::new(0.0, 1.0)).norm() < 1e-15);
        }
        let h = assemble_laplacian(&GeometrySpec::half_ray(Side::Cusp, 400, FiniteGraphSpec::single()).build().unwrap());
        let z = C64::new(2.0, 1e-3);
        let f = random_vector(h.dim(), 2);
        let g = resolvent_apply(&h, z, &f).unwrap();
        let r: Vec<C64> = h.apply(&g).iter().zip(&g).zip(&f).map(|((hg, gi), fi)| hg - z * gi - fi).collect();
        assert!(h.norm_of(&r) < 1e-10 * h.norm_of(&f));
    }

    #[test]
    fn resolvent_identity() {
        let h = assemble_laplacian(&GeometrySpec::glued_hub(20, FiniteGraphSpec::triangle()).build().unwrap());
        let (z1, z2) = (C64::new(1.5, 0.2), C64::new(2.5, -0.1));
        let f = random_vector(h.dim(), 5);
        let r1 = resolvent_apply(&h, z1, &f).unwrap();
        let r2 = resolvent_apply(&h, z2, &f).unwrap();
        let r12 = resolvent_apply(&h, z1, &r2).unwrap();
        let lhs: Vec<C64> = r1.iter().zip(&r2).map(|(a, b)| a - b).collect();
        let rhs: Vec<C64> = r12.iter().map(|a| a * (z1 - z2)).collect();
        let d: Vec<C64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        assert!(h.norm_of(&d) < 1e-8 * h.norm_of(&lhs).max(1e-300));
    }

    #[test]
    fn resolvent_norm_bounds() {
        let h = assemble_halfline_laplacian(200).unwrap();
        let ones = vec![1.0; 200];
        let far = weighted_resolvent_norm(&h, &ones, C64::new(-10.0, 1.0)).unwrap();
        assert!(far <= 0.1 + 1e-12);
        let e = eigendecompose(&h).unwrap();
        let z = C64::new(2.0, 0.05);
        let dist = e.eigenvalues.iter().map(|&l| (C64::new(l, 0.0) - z).norm()).fold(f64::INFINITY, f64::min);
        let n0 = weighted_resolvent_norm(&h, &ones, z).unwrap();
        assert!((n0 - 1.0 / dist).abs() < 1e-8 / dist);
    }

    #[test]
    fn resolvent_norm_splits_components() {
        let geom = GeometrySpec::glued_hub(30, FiniteGraphSpec::triangle());
        let h = assemble_laplacian(&geom.build().unwrap());
        let comps = connected_components(&unit_gauge(&h).unwrap().entries);
        assert_eq!(comps.len(), 1);
        let sm = crate::sector::build_sector_model(&geom, &crate::perturbation::PerturbationSpec::zero(), Default::default()).unwrap();
        let comps = connected_components(&sm.h.entries);
        assert_eq!(comps.len(), 5);
        let w = sm.lambda_weight(1.0);
        let z = C64::new(2.0, 1e-2);
        let split = weighted_resolvent_norm(&sm.h, &w, z).unwrap();
        let e = eigendecompose(&sm.h).unwrap();
        let n = sm.dim();
        let mut dense = DMatrix::<C64>::zeros(n, n);
        for k in 0..n {
            let coef = c(1.0) / (c(e.eigenvalues[k]) - z);
            for i in 0..n {
                for j in 0..n {
                    dense[(i, j)] += e.unit_vectors[(i, k)] * coef * e.unit_vectors[(j, k)].conj() * w[i] * w[j];
                }
            }
        }
        let direct = dense.singular_values().max();
        assert!((split - direct).abs() < 1e-8 * direct, "{split} {direct}");
    }

    #[test]
    fn lanczos_three_term_matches_full() {
        let h = assemble_halfline_laplacian(3000).unwrap();
        let full = lanczos_largest(3000, |x| h.apply(x), 1, 1e-12, 300);
        assert!((full - 4.0).abs() < 1e-4);
        let n = 300_000;
        let big = assemble_halfline_laplacian(n).unwrap();
        let three = lanczos_largest(n, |x| big.apply(x), 1, 1e-12, 300);
        assert!((three - 4.0).abs() < 1e-3, "{three}");
    }

    #[test]
    fn eigenvector_resolvent_and_evolution() {
        let h = assemble_laplacian(&GeometrySpec::half_ray(Side::Funnel, 15, FiniteGraphSpec::triangle()).build().unwrap());
        let e = eigendecompose(&h).unwrap();
        let v: Vec<C64> = e.weighted_vectors().column(7).iter().copied().collect();
        let lam = e.eigenvalues[7];
        let rho = 1e-3;
        let g = resolvent_apply(&h, C64::new(lam, rho), &v).unwrap();
        assert!((h.norm_of(&g) - 1.0 / rho).abs() < 1e-6 / rho);
        let out = evolve(&e, &v, &[0.0, 1.3]);
        for (a, b) in out[0].iter().zip(&v) {
            assert!((a - b).norm() < 1e-10);
        }
        let ph = C64::from_polar(1.0, -1.3 * lam);
        for (a, b) in out[1].iter().zip(&v) {
            assert!((a - b * ph).norm() < 1e-10 * b.norm().max(1.0));
        }
        let f = random_vector(h.dim(), 9);
        let ft = evolve(&e, &f, &[5.0]);
        assert!((h.norm_of(&ft[0]) - h.norm_of(&f)).abs() < 1e-10 * h.norm_of(&f));
    }

    #[test]
    fn bisection_matches_dense() {
        let d: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let e: Vec<f64> = (0..29).map(|i| 1.0 + (i as f64).cos()).collect();
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone()));
        for i in 0..29 {
            m[(i, i + 1)] = e[i];
            m[(i + 1, i)] = e[i];
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (a, b) in tridiag_eigenvalues(&d, &e).iter().zip(&ev) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn witness_identity_not_compact() {
        let g = GeometrySpec::half_ray(Side::Funnel, 30, FiniteGraphSpec::single()).build().unwrap();
        let id = OperatorMatrix::new(g.measure().to_vec(), CsrMatrix::identity(30), true).unwrap().with_geometry_of(&g);
        let w = compactness_witness(&id, 30, 1e-6).unwrap();
        assert!(!w.witnessed_compact);
        assert!(w.tail_norms.iter().all(|&t| (t - 1.0).abs() < 1e-10));
    }

    #[test]
    fn witness_funnel_fiber_term() {
        let fib = FiniteGraphSpec::triangle();
        let n1 = 100;
        let g = GeometrySpec::half_ray(Side::Funnel, n1, fib.clone()).build().unwrap();
        let inv_m: Vec<f64> = (0..n1).map(|n| (-(n as f64)).exp()).collect();
        let k = crate::conjugate::kron_fiber(&CsrMatrix::from_real_diagonal(&inv_m), &fib.laplacian());
        let op = OperatorMatrix::new(g.measure().to_vec(), k, true).unwrap().with_geometry_of(&g);
        let w = compactness_witness(&op, 20, 1e-6).unwrap();
        for (n, t) in w.tail_norms.iter().enumerate() {
            let want = (-(n as f64)).exp() * 3.0;
            assert!((t - want).abs() < 1e-8 * want, "n={n} {t} {want}");
        }
        assert_eq!(w.first_level_below, Some(15));
        assert!(w.witnessed_compact);
    }
}
