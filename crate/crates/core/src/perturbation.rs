//! Perturbation triples `(mu, eps, V)` and the decay hypotheses on them.

use crate::consts::bracket;
use crate::error::{Error, Result};
use crate::graph::{GeometryKind, GeometrySpec, Region, Side, VertexLabel, WeightedGraph};
use serde::{Deserialize, Serialize};

/// Closed-form or tabulated profile evaluated at `(level, fiber)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `amplitude / <n>^exponent`
    PowerDecay { amplitude: f64, exponent: f64 },
    /// `amplitude (-1)^n / <n>^exponent`
    Alternating { amplitude: f64, exponent: f64 },
    /// `slope * k`; not radial.
    FiberLinear { slope: f64 },
    /// Value per level `|n|`, zero past the end.
    Table { values: Vec<f64> },
}

impl Profile {
    pub fn at(&self, level: i64, fiber: usize) -> f64 {
        let n = level.unsigned_abs() as f64;
        match self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => *value,
            Profile::PowerDecay { amplitude, exponent } => amplitude / bracket(n).powf(*exponent),
            Profile::Alternating { amplitude, exponent } => {
                let sign = if level.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                sign * amplitude / bracket(n).powf(*exponent)
            }
            Profile::FiberLinear { slope } => slope * fiber as f64,
            Profile::Table { values } => values.get(level.unsigned_abs() as usize).copied().unwrap_or(0.0),
        }
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self, Profile::FiberLinear { slope } if *slope != 0.0)
    }

    /// Fiber average over `{0..p-1}` at each level, returned as a table of `levels` entries.
    pub fn radialized(&self, levels: usize, p: usize) -> Profile {
        if self.is_radial() {
            return self.clone();
        }
        let values = (0..levels as i64).map(|n| (0..p).map(|k| self.at(n, k)).sum::<f64>() / p as f64).collect();
        Profile::Table { values }
    }

    fn check_above_minus_one(&self, what: &str) -> Result<()> {
        let bad = match self {
            Profile::Constant { value } => *value <= -1.0,
            Profile::PowerDecay { amplitude, .. } => *amplitude <= -1.0,
            Profile::Alternating { amplitude, .. } => amplitude.abs() >= 1.0,
            Profile::Table { values } => values.iter().any(|&v| v <= -1.0),
            _ => false,
        };
        if bad {
            return Err(Error::Perturbation(format!("{what} must stay above -1")));
        }
        Ok(())
    }
}

/// `amplitude / <n>^exponent`, radial by construction.
pub fn make_power_decay(amplitude: f64, exponent: f64) -> Result<Profile> {
    if amplitude <= -1.0 {
        return Err(Error::Perturbation(format!("amplitude {amplitude} <= -1")));
    }
    if amplitude == 0.0 {
        return Ok(Profile::Zero);
    }
    Ok(Profile::PowerDecay { amplitude, exponent })
}

fn default_exponent() -> f64 {
    0.5
}

/// `m_mu = (1 + mu) m`, `E_eps = (1 + eps) E`, plus the potential `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    #[serde(default)]
    pub mu: Profile,
    #[serde(default)]
    pub eps: Profile,
    #[serde(default, rename = "V", alias = "v")]
    pub v: Profile,
    #[serde(default = "default_exponent")]
    pub declared_eps_exponent: f64,
    #[serde(default)]
    pub radial_on_cusp: bool,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self::zero()
    }
}

/// Values of a perturbation on a concrete graph; `eps` is aligned with `graph.edges()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub mu: Vec<f64>,
    pub v: Vec<f64>,
    pub eps: Vec<(usize, usize, f64)>,
}

impl Sampled {
    pub fn eps_map(&self) -> std::collections::HashMap<(usize, usize), f64> {
        self.eps.iter().map(|&(i, j, e)| ((i.min(j), i.max(j)), e)).collect()
    }
}

fn label_or_index(g: &WeightedGraph, x: usize) -> VertexLabel {
    g.label(x).unwrap_or(VertexLabel { region: Region::Ray, level: x as i64, fiber: 0 })
}

/// Evaluation site for an edge: the endpoint nearer the junction, lower fiber on ties.
pub fn edge_site(a: VertexLabel, b: VertexLabel) -> (i64, usize) {
    if a.region == Region::Compact && b.region != Region::Compact {
        return (0, b.fiber);
    }
    if b.region == Region::Compact && a.region != Region::Compact {
        return (0, a.fiber);
    }
    if a.region == Region::Compact {
        return (0, a.fiber.min(b.fiber));
    }
    match a.level.unsigned_abs().cmp(&b.level.unsigned_abs()) {
        std::cmp::Ordering::Less => (a.level, a.fiber),
        std::cmp::Ordering::Greater => (b.level, b.fiber),
        std::cmp::Ordering::Equal => (a.level, a.fiber.min(b.fiber)),
    }
}

impl PerturbationSpec {
    pub fn zero() -> Self {
        Self {
            mu: Profile::Zero,
            eps: Profile::Zero,
            v: Profile::Zero,
            declared_eps_exponent: 0.5,
            radial_on_cusp: false,
        }
    }

    pub fn new(mu: Profile, eps: Profile, v: Profile) -> Self {
        Self { mu, eps, v, ..Self::zero() }
    }

    pub fn is_zero(&self) -> bool {
        [&self.mu, &self.eps, &self.v].iter().all(|p| **p == Profile::Zero)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.declared_eps_exponent > 0.0) {
            return Err(Error::Perturbation("declared_eps_exponent must be positive".into()));
        }
        self.mu.check_above_minus_one("mu")?;
        self.eps.check_above_minus_one("eps")?;
        if self.radial_on_cusp && !self.profiles_radial() {
            return Err(Error::NonRadial("radial_on_cusp is set but a profile depends on the fiber".into()));
        }
        Ok(())
    }

    pub fn profiles_radial(&self) -> bool {
        self.mu.is_radial() && self.eps.is_radial() && self.v.is_radial()
    }

    pub fn radialize(&self, levels: usize, p: usize) -> Self {
        Self {
            mu: self.mu.radialized(levels, p),
            eps: self.eps.radialized(levels, p),
            v: self.v.radialized(levels, p),
            ..self.clone()
        }
    }

    pub fn sample(&self, g: &WeightedGraph) -> Result<Sampled> {
        self.validate()?;
        let n = g.len();
        let mut mu = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for x in 0..n {
            let l = label_or_index(g, x);
            let (lev, fib) = if l.region == Region::Compact { (0, l.fiber) } else { (l.level, l.fiber) };
            let m = self.mu.at(lev, fib);
            if m <= -1.0 {
                return Err(Error::Perturbation(format!("mu = {m} <= -1 at vertex {x}")));
            }
            mu.push(m);
            v.push(self.v.at(lev, fib));
        }
        let mut eps = Vec::new();
        for (i, j, _) in g.edges() {
            let (lev, fib) = edge_site(label_or_index(g, i), label_or_index(g, j));
            let e = self.eps.at(lev, fib);
            if e <= -1.0 {
                return Err(Error::Perturbation(format!("eps = {e} <= -1 on edge ({i},{j})")));
            }
            eps.push((i, j, e));
        }
        Ok(Sampled { mu, v, eps })
    }

    /// Rejects fiber-dependent data on the cusp side.
    pub fn require_radial_on_cusp(&self, geom: &GeometrySpec) -> Result<()> {
        if geom.has_side(Side::Cusp) && !is_radial_on(self, geom, Side::Cusp) {
            return Err(Error::NonRadial(
                "V, eps and mu must be radial on the cusp for commutator and resolvent probes".into(),
            ));
        }
        Ok(())
    }
}

/// Radiality on one side: every profile constant along each fiber at every level.
pub fn is_radial_on(pert: &PerturbationSpec, geom: &GeometrySpec, side: Side) -> bool {
    let p = geom.side_fiber(side).p;
    let fiber = geom.side_fiber(side);
    let n1 = geom.ray_length as i64;
    for n in 0..n1 {
        for prof in [&pert.mu, &pert.v] {
            let v0 = prof.at(n, 0);
            if (1..p).any(|k| prof.at(n, k) != v0) {
                return false;
            }
        }
        let e0 = pert.eps.at(n, 0);
        if (1..p).any(|k| pert.eps.at(n, k) != e0) {
            return false;
        }
        if fiber.edges.iter().any(|&(k, l, _)| pert.eps.at(n, k.min(l)) != e0) {
            return false;
        }
    }
    true
}

/// Radiality on every ray side of the geometry.
pub fn is_radial(pert: &PerturbationSpec, geom: &GeometrySpec) -> bool {
    [Side::Funnel, Side::Cusp].iter().all(|&s| !geom.has_side(s) || is_radial_on(pert, geom, s))
        && (geom.kind != GeometryKind::ZModel || is_radial_on(pert, geom, Side::Funnel))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelProfile {
    pub side: String,
    pub quantity: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub side: String,
    pub quantity: String,
    pub statistic: f64,
    pub tolerance: f64,
    pub argmax_level: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub eps_exponent: f64,
    pub profiles: Vec<LevelProfile>,
    pub checks: Vec<ConditionCheck>,
    pub pass: bool,
}

/// Ray sides of a geometry, with the fiber used on each; the Z-model reads `|n|`.
fn sides(geom: &GeometrySpec) -> Vec<(String, Side, i64)> {
    let n1 = geom.ray_length as i64;
    match geom.kind {
        GeometryKind::HalfRayCusp => vec![("cusp".into(), Side::Cusp, n1)],
        GeometryKind::HalfRayFunnel => vec![("funnel".into(), Side::Funnel, n1)],
        GeometryKind::Glued => vec![("funnel".into(), Side::Funnel, n1), ("cusp".into(), Side::Cusp, n1)],
        GeometryKind::ZModel => vec![("z".into(), Side::Funnel, n1 + 1)],
    }
}

fn signed_levels(geom: &GeometrySpec, n: i64) -> Vec<i64> {
    if geom.kind == GeometryKind::ZModel && n != 0 {
        vec![-n, n]
    } else {
        vec![n]
    }
}

/// Fiber-max profiles `max_k |V|`, `max_k |mu|`, `max |eps|` over edges touching level `n`.
pub fn h0_profiles(pert: &PerturbationSpec, geom: &GeometrySpec) -> Vec<LevelProfile> {
    let mut out = Vec::new();
    for (name, side, levels) in sides(geom) {
        let fiber = geom.side_fiber(side);
        let p = fiber.p;
        let mut pv = Vec::new();
        let mut pm = Vec::new();
        let mut pe = Vec::new();
        for n in 0..levels {
            let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
            for s in signed_levels(geom, n) {
                for k in 0..p {
                    a = a.max(pert.v.at(s, k).abs());
                    b = b.max(pert.mu.at(s, k).abs());
                    c = c.max(pert.eps.at(s, k).abs());
                    let below = if s > 0 { s - 1 } else if s < 0 { s + 1 } else { 0 };
                    if (s != 0 || geom.kind != GeometryKind::ZModel)
                        && n > 0 {
                            c = c.max(pert.eps.at(below, k).abs());
                        }
                }
                for &(k, l, _) in &fiber.edges {
                    c = c.max(pert.eps.at(s, k.min(l)).abs());
                }
            }
            pv.push(a);
            pm.push(b);
            pe.push(c);
        }
        for (q, vals) in [("V", pv), ("mu", pm), ("eps", pe)] {
            out.push(LevelProfile { side: name.clone(), quantity: q.into(), values: vals });
        }
    }
    out
}

/// Tail-decay proxy for (H0): sup over the last quarter of levels against the head sup.
pub fn check_h0(pert: &PerturbationSpec, geom: &GeometrySpec, tolerance: Option<f64>) -> ConditionReport {
    let profiles = h0_profiles(pert, geom);
    let eh = pert.declared_eps_exponent;
    let mut checks = Vec::new();
    for pr in &profiles {
        let len = pr.values.len();
        let q = (len / 4).max(1);
        let tail_start = len - q;
        let head = pr.values[..q].iter().cloned().fold(0.0, f64::max);
        let (argmax, tail) = pr.values[tail_start..]
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(ai, a), (i, &v)| if v > a { (i, v) } else { (ai, a) });
        let tol = tolerance.unwrap_or_else(|| (0.5 * head).min(10.0 * head * bracket(tail_start as f64).powf(-eh)).max(1e-14));
        checks.push(ConditionCheck {
            side: pr.side.clone(),
            quantity: pr.quantity.clone(),
            statistic: tail,
            tolerance: tol,
            argmax_level: tail_start + argmax,
            pass: tail <= tol,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    ConditionReport { condition: "H0".into(), eps_exponent: eh, profiles, checks, pass }
}

/// Weighted first differences `<n>^{1+e} |f(n-1) - f(n)|` and the eps second difference along the ray.
pub fn h123_profiles(pert: &PerturbationSpec, geom: &GeometrySpec, eps_exponent: f64) -> Vec<LevelProfile> {
    let mut out = Vec::new();
    for (name, side, levels) in sides(geom) {
        let p = geom.side_fiber(side).p;
        let mut pv = vec![0.0; levels as usize];
        let mut pm = vec![0.0; levels as usize];
        let mut pe = vec![0.0; levels as usize];
        for n in 1..levels {
            let w = bracket(n as f64).powf(1.0 + eps_exponent);
            for s in signed_levels(geom, n) {
                let prev = if s > 0 { s - 1 } else { s + 1 };
                for k in 0..p {
                    pv[n as usize] = f64::max(pv[n as usize], w * (pert.v.at(prev, k) - pert.v.at(s, k)).abs());
                    pm[n as usize] = f64::max(pm[n as usize], w * (pert.mu.at(prev, k) - pert.mu.at(s, k)).abs());
                    if n + 1 < levels {
                        // eps((n,k),(n+1,k)) is evaluated at level n, eps((n-1,k),(n,k)) at n-1
                        let d = pert.eps.at(s, k) - pert.eps.at(prev, k);
                        pe[n as usize] = f64::max(pe[n as usize], w * d.abs());
                    }
                }
            }
        }
        for (q, vals) in [("V", pv), ("mu", pm), ("eps", pe)] {
            out.push(LevelProfile { side: name.clone(), quantity: q.into(), values: vals });
        }
    }
    out
}

/// Boundedness proxy for (H1)-(H3): the finite-grid sup is attained before the last quarter of levels.
pub fn check_h123(pert: &PerturbationSpec, geom: &GeometrySpec, eps_exponent: f64) -> Result<ConditionReport> {
    if !(eps_exponent > 0.0) {
        return Err(Error::Parameter(format!("eps_exponent must be positive, got {eps_exponent}")));
    }
    let profiles = h123_profiles(pert, geom, eps_exponent);
    let mut checks = Vec::new();
    for pr in &profiles {
        let len = pr.values.len();
        let tail_start = len - (len / 4).max(1);
        let (argmax, sup) =
            pr.values.iter().enumerate().fold((0, 0.0f64), |(ai, a), (i, &v)| if v > a { (i, v) } else { (ai, a) });
        checks.push(ConditionCheck {
            side: pr.side.clone(),
            quantity: pr.quantity.clone(),
            statistic: sup,
            tolerance: tail_start as f64,
            argmax_level: argmax,
            pass: argmax < tail_start,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ConditionReport { condition: "H1-H3".into(), eps_exponent, profiles, checks, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FiniteGraphSpec;

    fn cusp(n1: usize) -> GeometrySpec {
        GeometrySpec::half_ray(Side::Cusp, n1, FiniteGraphSpec::triangle())
    }

    fn only_mu(p: Profile) -> PerturbationSpec {
        PerturbationSpec::new(p, Profile::Zero, Profile::Zero)
    }

    fn only_v(p: Profile) -> PerturbationSpec {
        PerturbationSpec::new(Profile::Zero, Profile::Zero, p)
    }

    #[test]
    fn zero_passes_h0() {
        let r = check_h0(&PerturbationSpec::zero(), &cusp(200), None);
        assert!(r.pass);
        assert!(r.profiles.iter().all(|p| p.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn decaying_v_passes_h0() {
        let r = check_h0(&only_v(Profile::PowerDecay { amplitude: 1.0, exponent: 1.0 }), &cusp(200), None);
        assert!(r.pass);
        let pv = &r.profiles[0].values;
        assert!((pv[10] - 1.0 / bracket(10.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_v_fails_h0() {
        assert!(!check_h0(&only_v(Profile::Constant { value: 1.0 }), &cusp(200), None).pass);
    }

    #[test]
    fn h123_decay_passes() {
        let r = check_h123(&only_mu(Profile::PowerDecay { amplitude: 1.0, exponent: 1.0 }), &cusp(400), 0.5).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn h123_alternating_fails() {
        let r = check_h123(&only_mu(Profile::Alternating { amplitude: 0.9, exponent: 0.1 }), &cusp(400), 0.5).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn h123_constants_sup_zero() {
        let r = check_h123(&only_v(Profile::Constant { value: 2.0 }), &cusp(100), 0.5).unwrap();
        assert!(r.pass);
        assert!(r.checks.iter().all(|c| c.statistic == 0.0));
    }

    #[test]
    fn power_decay_generator() {
        assert_eq!(make_power_decay(0.0, 1.0).unwrap(), Profile::Zero);
        assert_eq!(make_power_decay(0.5, 1.0).unwrap().at(0, 0), 0.5);
        assert!(make_power_decay(-1.0, 1.0).is_err());
        let mu = make_power_decay(0.5, 1.0).unwrap();
        assert!(check_h123(&only_mu(mu), &cusp(300), 0.5).unwrap().pass);
    }

    #[test]
    fn radiality() {
        let g = cusp(20);
        assert!(is_radial(&only_mu(make_power_decay(0.3, 1.0).unwrap()), &g));
        let nr = only_v(Profile::FiberLinear { slope: 1.0 });
        assert!(!is_radial(&nr, &g));
        assert!(is_radial(&nr.radialize(20, 3), &g));
        assert!(matches!(nr.require_radial_on_cusp(&g), Err(Error::NonRadial(_))));
    }

    #[test]
    fn mu_at_minus_one_rejected() {
        let g = cusp(5).build().unwrap();
        let p = only_mu(Profile::Constant { value: -1.0 });
        assert!(p.sample(&g).is_err());
        let t = only_mu(Profile::Table { values: vec![0.0, -1.5] });
        assert!(t.sample(&g).is_err());
    }

    #[test]
    fn eps_table_hits_first_edge_only() {
        let g = crate::graph::cusp_ray(6).unwrap();
        let p = PerturbationSpec::new(Profile::Zero, Profile::Table { values: vec![0.5] }, Profile::Zero);
        let s = p.sample(&g).unwrap();
        assert_eq!(s.eps[0], (0, 1, 0.5));
        assert!(s.eps[1..].iter().all(|e| e.2 == 0.0));
    }

    #[test]
    fn json_shape() {
        let p: PerturbationSpec = serde_json::from_str(
            r#"{"mu":{"family":"power_decay","amplitude":0.5,"exponent":1.0},"V":{"family":"table","values":[1.0,2.0]}}"#,
        )
        .unwrap();
        assert_eq!(p.v.at(1, 0), 2.0);
        assert_eq!(p.eps, Profile::Zero);
    }
}
