//! Conjugate operators `A_N`, `A_{G^f}`, `A_{G^c}`, the glued `A`, the low-energy projection and weights.

use crate::consts::bracket;
use crate::error::{Error, Result};
use crate::graph::{FiniteGraphSpec, GeometryKind, GeometrySpec, Region, Side, WeightedGraph};
use crate::operator::{shift_operators, OperatorMatrix};
use crate::sparse::{c, ci, CsrMatrix, C64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideTag {
    Halfline,
    Funnel,
    Cusp,
    Glued,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateBundle {
    pub a: OperatorMatrix,
    /// `1 (x) P_le` on the cusp block, zero elsewhere; `None` without a cusp.
    pub p_le: Option<OperatorMatrix>,
    /// `n + 1/2` per vertex; compact vertices carry 0.
    pub lambda: Vec<f64>,
    pub side_tag: SideTag,
}

/// Entries of `(i/2)(q (Q - 1/2) U - q^{-1} (Q + 1/2) U*)` on `{0..N1-1}`.
pub fn ray_a_triplets(n1: usize, q: f64) -> Vec<(usize, usize, C64)> {
    let mut t = Vec::with_capacity(2 * n1);
    for n in 0..n1 {
        let x = n as f64;
        if n >= 1 {
            t.push((n, n - 1, ci(0.5 * q * (x - 0.5))));
        }
        if n + 1 < n1 {
            t.push((n, n + 1, ci(-0.5 / q * (x + 0.5))));
        }
    }
    t
}

fn ray_weights(n1: usize, side: Option<Side>) -> Vec<f64> {
    (0..n1)
        .map(|n| match side {
            None => 1.0,
            Some(Side::Funnel) => (n as f64).exp(),
            Some(Side::Cusp) => (-(n as f64)).exp(),
        })
        .collect()
}

fn ray_operator(n1: usize, q: f64, weights: Vec<f64>, hermitian: bool) -> Result<OperatorMatrix> {
    let g = crate::graph::unit_ray(n1)?;
    let entries = CsrMatrix::from_triplets(n1, n1, &ray_a_triplets(n1, q));
    Ok(OperatorMatrix::new(weights, entries, hermitian)?.with_geometry_of(&g))
}

/// `A_N = (i/2)(U(Q + 1/2) - U*(Q - 1/2))`.
pub fn assemble_a_halfline(n1: usize) -> Result<OperatorMatrix> {
    if n1 < 3 {
        return Err(Error::RayLength { n1, reason: "conjugate operator needs N1 >= 3".into() });
    }
    ray_operator(n1, 1.0, vec![1.0; n1], true)
}

/// `(SQ + QS)/2` from the shift operators with `S = sign (U - U*)/(2i)`.
pub fn symmetric_product_form(n1: usize, sign: f64) -> Result<OperatorMatrix> {
    let (u, us, q) = shift_operators(n1)?;
    let s = u.sub(&us)?.scale(C64::new(0.0, -0.5 * sign));
    let sq = s.matmul(&q)?;
    let qs = q.matmul(&s)?;
    Ok(sq.add(&qs)?.scale(c(0.5)).flagged(true))
}

fn ray_a_side(n1: usize, side: Side) -> Result<OperatorMatrix> {
    // D^{-1/2} A_N D^{1/2} with D = m: funnel q = e^{-1/2}, cusp q = e^{1/2}
    let q = match side {
        Side::Funnel => (-0.5f64).exp(),
        Side::Cusp => 0.5f64.exp(),
    };
    ray_operator(n1, q, ray_weights(n1, Some(side)), true)
}

/// The printed funnel display `(i/2)(e^{1/2}(Q-1/2)U - e^{-1/2}(Q+1/2)U*)`; Hermitian for `m = e^{-n}`.
pub fn funnel_display_operator(n1: usize) -> Result<OperatorMatrix> {
    ray_operator(n1, 0.5f64.exp(), ray_weights(n1, Some(Side::Funnel)), false)
}

/// `T A_N T^{-1}` with `T = T_{1 -> m}` applied to the assembled `A_N`.
pub fn ray_a_by_conjugation(n1: usize, side: Side) -> Result<OperatorMatrix> {
    let an = assemble_a_halfline(n1)?;
    let m = ray_weights(n1, Some(side));
    let t: Vec<f64> = m.iter().map(|x| 1.0 / x.sqrt()).collect();
    an.conjugate_diagonal(&t, m)
}

/// `B (x) P` for a ray operator `B` and fiber matrix `P`, index `n p + k`.
pub fn kron_fiber(b: &CsrMatrix, p: &DMatrix<f64>) -> CsrMatrix {
    let k = p.nrows();
    let mut t = Vec::new();
    for (i, j, v) in b.triplets() {
        for a in 0..k {
            for bb in 0..k {
                let w = p[(a, bb)];
                if w != 0.0 {
                    t.push((i * k + a, j * k + bb, v * w));
                }
            }
        }
    }
    CsrMatrix::from_triplets(b.nrows() * k, b.ncols() * k, &t)
}

/// Orthogonal projection onto `ker(Delta_2)` from normalized component indicators.
pub fn assemble_p_le(fiber: &FiniteGraphSpec) -> Result<DMatrix<f64>> {
    fiber.validate()?;
    let comp = fiber.components();
    let mut size = vec![0usize; fiber.component_count()];
    for &c in &comp {
        size[c] += 1;
    }
    Ok(DMatrix::from_fn(fiber.p, fiber.p, |a, b| if comp[a] == comp[b] { 1.0 / size[comp[a]] as f64 } else { 0.0 }))
}

fn side_lambda(n1: usize, p: usize) -> Vec<f64> {
    (0..n1).flat_map(|n| std::iter::repeat_n(n as f64 + 0.5, p)).collect()
}

fn product_graph(side: Side, n1: usize, fiber: &FiniteGraphSpec) -> Result<WeightedGraph> {
    GeometrySpec::half_ray(side, n1, fiber.clone()).build()
}

/// `A_{G^f} = T A_N T^{-1} (x) 1`.
pub fn assemble_a_funnel(n1: usize, fiber: &FiniteGraphSpec) -> Result<ConjugateBundle> {
    if n1 < 3 {
        return Err(Error::RayLength { n1, reason: "conjugate operator needs N1 >= 3".into() });
    }
    let g = product_graph(Side::Funnel, n1, fiber)?;
    let ray = ray_a_side(n1, Side::Funnel)?;
    let entries = kron_fiber(&ray.entries, &DMatrix::identity(fiber.p, fiber.p));
    let a = OperatorMatrix::new(g.measure().to_vec(), entries, true)?.with_geometry_of(&g);
    Ok(ConjugateBundle { a, p_le: None, lambda: side_lambda(n1, fiber.p), side_tag: SideTag::Funnel })
}

/// `A_{G^c} = T^{-1} A_N T (x) P_le`, zero on the high-energy part.
pub fn assemble_a_cusp(n1: usize, fiber: &FiniteGraphSpec) -> Result<ConjugateBundle> {
    if n1 < 3 {
        return Err(Error::RayLength { n1, reason: "conjugate operator needs N1 >= 3".into() });
    }
    let g = product_graph(Side::Cusp, n1, fiber)?;
    let ray = ray_a_side(n1, Side::Cusp)?;
    let p = assemble_p_le(fiber)?;
    let a = OperatorMatrix::new(g.measure().to_vec(), kron_fiber(&ray.entries, &p), true)?.with_geometry_of(&g);
    let id = CsrMatrix::identity(n1);
    let p_le = OperatorMatrix::new(g.measure().to_vec(), kron_fiber(&id, &p), true)?.with_geometry_of(&g);
    Ok(ConjugateBundle { a, p_le: Some(p_le), lambda: side_lambda(n1, fiber.p), side_tag: SideTag::Cusp })
}

/// Cusp operator assembled by conjugating `A_N` and tensoring with `P_le`.
pub fn cusp_a_by_conjugation(n1: usize, fiber: &FiniteGraphSpec) -> Result<OperatorMatrix> {
    let g = product_graph(Side::Cusp, n1, fiber)?;
    let ray = ray_a_by_conjugation(n1, Side::Cusp)?;
    let p = assemble_p_le(fiber)?;
    Ok(OperatorMatrix::new(g.measure().to_vec(), kron_fiber(&ray.entries, &p), true)?.with_geometry_of(&g))
}

/// Funnel operator assembled by conjugating `A_N` and tensoring with the identity.
pub fn funnel_a_by_conjugation(n1: usize, fiber: &FiniteGraphSpec) -> Result<OperatorMatrix> {
    let g = product_graph(Side::Funnel, n1, fiber)?;
    let ray = ray_a_by_conjugation(n1, Side::Funnel)?;
    let entries = kron_fiber(&ray.entries, &DMatrix::identity(fiber.p, fiber.p));
    Ok(OperatorMatrix::new(g.measure().to_vec(), entries, true)?.with_geometry_of(&g))
}

fn embed(t: &mut Vec<(usize, usize, C64)>, m: &CsrMatrix, offset: usize) {
    t.extend(m.triplets().map(|(i, j, v)| (i + offset, j + offset, v)));
}

/// `A = A_{G^f} (+) 0 (+) A_{G^c}` on the glued graph.
pub fn assemble_a_glued(spec: &GeometrySpec) -> Result<ConjugateBundle> {
    if spec.kind != GeometryKind::Glued {
        return Err(Error::Parameter("assemble_a_glued needs a glued geometry".into()));
    }
    let g = spec.build()?;
    let n1 = spec.ray_length;
    let f = assemble_a_funnel(n1, spec.side_fiber(Side::Funnel))?;
    let cu = assemble_a_cusp(n1, spec.side_fiber(Side::Cusp))?;
    let nf = f.a.dim();
    let nk = spec.compact_part.as_ref().map_or(0, |c| c.graph.p);
    let n = g.len();
    let mut t = Vec::new();
    embed(&mut t, &f.a.entries, 0);
    embed(&mut t, &cu.a.entries, nf + nk);
    let a = OperatorMatrix::new(g.measure().to_vec(), CsrMatrix::from_triplets(n, n, &t), true)?.with_geometry_of(&g);
    let mut tp = Vec::new();
    embed(&mut tp, &cu.p_le.as_ref().expect("cusp bundle").entries, nf + nk);
    let p_le = OperatorMatrix::new(g.measure().to_vec(), CsrMatrix::from_triplets(n, n, &tp), true)?.with_geometry_of(&g);
    let mut lambda = f.lambda;
    lambda.extend(std::iter::repeat_n(0.0, nk));
    lambda.extend(cu.lambda);
    Ok(ConjugateBundle { a, p_le: Some(p_le), lambda, side_tag: SideTag::Glued })
}

/// Conjugate bundle matching any geometry kind (the Z-model is not covered).
pub fn assemble_a_for(spec: &GeometrySpec) -> Result<ConjugateBundle> {
    match spec.kind {
        GeometryKind::HalfRayFunnel => assemble_a_funnel(spec.ray_length, &spec.fiber),
        GeometryKind::HalfRayCusp => assemble_a_cusp(spec.ray_length, &spec.fiber),
        GeometryKind::Glued => assemble_a_glued(spec),
        GeometryKind::ZModel => Err(Error::Parameter("no conjugate operator is defined for the Z-model".into())),
    }
}

/// `<n + 1/2>^{-s}` per vertex, from the `n + 1/2` values of a bundle (compact value 0 maps to 1).
pub fn lambda_weight_values(lambda: &[f64], s: f64) -> Vec<f64> {
    lambda.iter().map(|&l| bracket(l).powf(-s)).collect()
}

/// Diagonal `<Lambda>^{-s}` on the graph of `spec`.
pub fn assemble_lambda_weight(spec: &GeometrySpec, s: f64) -> Result<OperatorMatrix> {
    if !(s >= 0.0) {
        return Err(Error::Parameter(format!("weight exponent must be nonnegative, got {s}")));
    }
    let g = spec.build()?;
    let vals: Vec<f64> = (0..g.len())
        .map(|x| {
            let l = g.label(x).expect("built graphs are labelled");
            if l.region == Region::Compact {
                1.0
            } else {
                bracket(l.level.unsigned_abs() as f64 + 0.5).powf(-s)
            }
        })
        .collect();
    Ok(OperatorMatrix::new(g.measure().to_vec(), CsrMatrix::from_real_diagonal(&vals), true)?.with_geometry_of(&g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquaredCheck {
    pub n1: usize,
    pub q: f64,
    pub max_interior_deviation: f64,
    pub origin_diagonal: f64,
    pub weighted_norm: f64,
}

/// Closed-form five-band `A_q^2` on rows `1..N1-2`.
pub fn five_band_entry(n: usize, j: usize, q: f64) -> C64 {
    let x = n as f64;
    if j == n {
        c(0.25 * (2.0 * x * x + 0.5))
    } else if j + 2 == n {
        c(-0.25 * q * q * (x - 0.5) * (x - 1.5))
    } else if j == n + 2 {
        c(-0.25 / (q * q) * (x + 0.5) * (x + 1.5))
    } else {
        c(0.0)
    }
}

/// Square of the printed `A_q` (`q = e^{1/2}`) against the five-band formula, and `||<Lambda>^{-2} A^2||`.
pub fn conjugate_squared_check(n1: usize) -> Result<SquaredCheck> {
    conjugate_squared_check_q(n1, 0.5f64.exp())
}

pub fn conjugate_squared_check_q(n1: usize, q: f64) -> Result<SquaredCheck> {
    if n1 < 5 {
        return Err(Error::RayLength { n1, reason: "squared check needs N1 >= 5".into() });
    }
    let a = CsrMatrix::from_triplets(n1, n1, &ray_a_triplets(n1, q));
    let a2 = a.matmul(&a);
    let mut dev = 0.0f64;
    for n in 1..n1 - 1 {
        let lo = n.saturating_sub(2);
        for j in lo..(n + 3).min(n1) {
            dev = dev.max((a2.get(n, j) - five_band_entry(n, j, q)).norm());
        }
    }
    // the weighted norm is gauge invariant, so it is taken on A_N^2
    let an = CsrMatrix::from_triplets(n1, n1, &ray_a_triplets(n1, 1.0));
    let an2 = an.matmul(&an);
    let w: Vec<f64> = (0..n1).map(|n| bracket(n as f64 + 0.5).powi(-2)).collect();
    let b = an2.scale_rows_cols(&w, &vec![1.0; n1]).to_dense();
    let weighted_norm = b.singular_values().max();
    Ok(SquaredCheck { n1, q, max_interior_deviation: dev, origin_diagonal: a2.get(0, 0).re, weighted_norm })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_diff_rows(a: &OperatorMatrix, b: &OperatorMatrix, min_dist: usize) -> f64 {
        let rows = a.interior_rows(min_dist);
        let d = a.entries.add(&b.entries, c(-1.0));
        d.triplets().filter(|&(i, _, _)| rows[i]).map(|(_, _, v)| v.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn a_halfline_on_origin() {
        let a = assemble_a_halfline(10).unwrap();
        let mut d0 = vec![c(0.0); 10];
        d0[0] = c(1.0);
        let out = a.apply(&d0);
        assert_eq!(out[1], ci(0.25));
        assert!(out.iter().enumerate().all(|(i, v)| i == 1 || v.norm() == 0.0));
        assert_eq!(a.hermitian_defect(), 0.0);
    }

    #[test]
    fn symmetric_product_sign() {
        let a = assemble_a_halfline(30).unwrap();
        let printed = symmetric_product_form(30, 1.0).unwrap();
        let flipped = symmetric_product_form(30, -1.0).unwrap();
        assert_eq!(printed.entries.add(&a.entries, c(1.0)).max_abs(), 0.0);
        assert_eq!(flipped.entries.add(&a.entries, c(-1.0)).max_abs(), 0.0);
    }

    #[test]
    fn expectation_real() {
        let a = assemble_a_halfline(40).unwrap();
        let f: Vec<C64> = (0..40).map(|i| C64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos())).collect();
        assert!(a.inner(&f, &a.apply(&f)).im.abs() < 1e-12);
    }

    #[test]
    fn funnel_explicit_equals_conjugation() {
        let fib = FiniteGraphSpec::triangle();
        let b = assemble_a_funnel(200, &fib).unwrap();
        let conj = funnel_a_by_conjugation(200, &fib).unwrap();
        let scale = b.a.entries.max_abs();
        assert!(max_diff_rows(&b.a, &conj, 1) < 1e-10 * scale);
        assert!(b.a.hermitian_defect() < 1e-12);
    }

    #[test]
    fn funnel_display_is_cusp_weighted() {
        let n1 = 20;
        let disp = funnel_display_operator(n1).unwrap();
        for n in 1..n1 - 1 {
            let x = n as f64;
            assert!((disp.get(n, n - 1) - ci(0.5 * 0.5f64.exp() * (x - 0.5))).norm() < 1e-15);
            assert!((disp.get(n, n + 1) - ci(-0.5 * (-0.5f64).exp() * (x + 0.5))).norm() < 1e-15);
        }
        assert!(disp.hermitian_defect() > 0.5);
        let cusp = ray_a_by_conjugation(n1, Side::Cusp).unwrap();
        assert!(disp.entries.add(&cusp.entries, c(-1.0)).max_abs() < 1e-12 * cusp.entries.max_abs());
    }

    #[test]
    fn trivial_fiber_funnel_matches_ray() {
        let b = assemble_a_funnel(30, &FiniteGraphSpec::single()).unwrap();
        let r = ray_a_by_conjugation(30, Side::Funnel).unwrap();
        assert!(b.a.entries.add(&r.entries, c(-1.0)).max_abs() < 1e-12 * r.entries.max_abs());
    }

    #[test]
    fn p_le_examples() {
        let p = assemble_p_le(&FiniteGraphSpec::triangle()).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-16));
        let p2 = assemble_p_le(&FiniteGraphSpec::edgeless(2)).unwrap();
        assert_eq!(p2, DMatrix::identity(2, 2));
        let fib = FiniteGraphSpec::new(5, vec![(0, 1, 1.0), (2, 3, 2.0), (3, 4, 1.0)], 2.0).unwrap();
        let p = assemble_p_le(&fib).unwrap();
        assert!((&p * &p - &p).amax() < 1e-15 && (&p - p.transpose()).amax() == 0.0);
        let rank = p.trace().round() as usize;
        let phe = DMatrix::identity(5, 5) - &p;
        let rank_he = phe.trace().round() as usize;
        assert_eq!(rank, 2);
        assert_eq!(rank + rank_he, 5);
        assert!((fib.laplacian() * &p).amax() < 1e-15);
    }

    #[test]
    fn cusp_annihilates_high_energy() {
        let fib = FiniteGraphSpec::triangle();
        let b = assemble_a_cusp(30, &fib).unwrap();
        let w = [c(1.0), c(-1.0), c(0.0)];
        let f: Vec<C64> = (0..90).map(|i| w[i % 3] * (1.0 + (i / 3) as f64)).collect();
        assert!(b.a.apply(&f).iter().all(|v| v.norm() == 0.0));
        let conj = cusp_a_by_conjugation(30, &fib).unwrap();
        assert!(max_diff_rows(&b.a, &conj, 1) < 1e-10 * b.a.entries.max_abs());
        assert!(b.a.hermitian_defect() < 1e-12);
    }

    #[test]
    fn cusp_trivial_fiber_is_full_ray() {
        let b = assemble_a_cusp(25, &FiniteGraphSpec::single()).unwrap();
        let r = ray_a_by_conjugation(25, Side::Cusp).unwrap();
        assert!(b.a.entries.add(&r.entries, c(-1.0)).max_abs() < 1e-12 * r.entries.max_abs());
    }

    #[test]
    fn cusp_commutes_with_fiber_term() {
        let fib = FiniteGraphSpec::triangle();
        let n1 = 20;
        let b = assemble_a_cusp(n1, &fib).unwrap();
        let inv_m: Vec<f64> = (0..n1).map(|n| (n as f64).exp()).collect();
        let k = kron_fiber(&CsrMatrix::from_real_diagonal(&inv_m), &fib.laplacian());
        let comm = k.matmul(&b.a.entries).add(&b.a.entries.matmul(&k), c(-1.0));
        assert_eq!(comm.max_abs(), 0.0);
    }

    #[test]
    fn glued_block_structure() {
        let spec = GeometrySpec::glued_hub(12, FiniteGraphSpec::triangle());
        let b = assemble_a_glued(&spec).unwrap();
        let compact = 36;
        assert!(b.a.entries.triplets().all(|(i, j, _)| i != compact && j != compact));
        assert!(b.a.hermitian_defect() < 1e-12);
        assert_eq!(b.lambda[compact], 0.0);
        let mut empty = spec.clone();
        empty.compact_part = Some(crate::graph::CompactPart::empty());
        let e = assemble_a_glued(&empty).unwrap();
        let f = assemble_a_funnel(12, &FiniteGraphSpec::triangle()).unwrap();
        for (i, j, v) in f.a.entries.triplets() {
            assert_eq!(e.a.get(i, j), v);
        }
    }

    #[test]
    fn lambda_weight_values_check() {
        let spec = GeometrySpec::half_ray(Side::Cusp, 10, FiniteGraphSpec::single());
        let w0 = assemble_lambda_weight(&spec, 0.0).unwrap();
        assert!(w0.entries.diagonal().iter().all(|v| *v == c(1.0)));
        let w1 = assemble_lambda_weight(&spec, 1.0).unwrap().entries.diagonal();
        assert!((w1[0].re - 0.894_427_190_999_915_9).abs() < 1e-15);
        assert!(w1.windows(2).all(|p| p[1].re < p[0].re));
        let glued = assemble_lambda_weight(&GeometrySpec::glued_hub(5, FiniteGraphSpec::single()), 2.0).unwrap();
        assert_eq!(glued.get(5, 5), c(1.0));
    }

    #[test]
    fn squared_check_n50() {
        let r = conjugate_squared_check(50).unwrap();
        assert!(r.max_interior_deviation < 1e-10);
        assert_eq!(five_band_entry(3, 3, 1.0), c(0.25 * (18.0 + 0.5)));
    }

    #[test]
    fn squared_norm_converges() {
        let n: Vec<f64> = [100, 200, 400].iter().map(|&k| conjugate_squared_check(k).unwrap().weighted_norm).collect();
        assert!((n[2] - n[1]).abs() / n[2] < 0.05 && (n[1] - n[0]).abs() / n[1] < 0.05, "{n:?}");
    }
}
