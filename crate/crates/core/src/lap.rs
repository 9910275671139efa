//! Weighted resolvent scans, propagation integrals and threshold counts.

use crate::error::{Error, Result};
use crate::operator::OperatorMatrix;
use crate::spectral::{eigendecompose, weighted_resolvent_norm_seeded, EigenDecomposition, SpectralWindow};
use crate::sparse::{c, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Plateau rule: each of the three smallest-rho norms within this fraction of the median.
pub const PLATEAU_TOLERANCE: f64 = 0.2;
/// Relative agreement for an eigenvalue to persist between two truncations.
pub const PERSISTENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapScanConfig {
    pub lambdas: Vec<f64>,
    pub rhos: Vec<f64>,
    pub s: f64,
    pub truncations: Vec<usize>,
    pub convergence_tol: f64,
}

impl LapScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.rhos.is_empty() || self.truncations.is_empty() {
            return Err(Error::Parameter("lambdas, rhos and truncations must be non-empty".into()));
        }
        if self.rhos.iter().any(|&r| !(r > 0.0)) || self.rhos.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Parameter("rhos must be positive and strictly decreasing".into()));
        }
        if !(self.s > 0.5) {
            return Err(Error::Parameter(format!("weight exponent s must exceed 1/2, got {}", self.s)));
        }
        if self.truncations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("truncations must be increasing".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Parameter("convergence_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LapVerdict {
    Plateau,
    Growth,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapCell {
    pub lambda: f64,
    pub rho: f64,
    /// Truncation at which the norm agreed with the previous one.
    pub n1_used: Option<usize>,
    pub norm: f64,
    pub resolved: bool,
    pub history: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapLambdaSummary {
    pub lambda: f64,
    pub verdict: LapVerdict,
    pub median: f64,
    pub max_small_rho_deviation: f64,
    pub near_point_spectrum: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapScanResult {
    pub config: LapScanConfig,
    pub cells: Vec<LapCell>,
    pub summaries: Vec<LapLambdaSummary>,
    pub plateau_tolerance: f64,
}

impl LapScanResult {
    pub fn summary(&self, lambda: f64) -> Option<&LapLambdaSummary> {
        self.summaries.iter().find(|s| s.lambda == lambda)
    }

    pub fn all_resolved(&self) -> bool {
        self.cells.iter().all(|c| c.resolved)
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Per-lambda verdict from the cells of one lambda, ordered by decreasing rho.
pub fn lap_verdict(cells: &[&LapCell]) -> (LapVerdict, f64, f64) {
    let norms: Vec<f64> = cells.iter().map(|c| c.norm).collect();
    let med = median(&norms);
    let k = norms.len().min(3);
    let dev = norms[norms.len() - k..].iter().map(|x| (x - med).abs() / med).fold(0.0, f64::max);
    if cells.iter().any(|c| !c.resolved) {
        return (LapVerdict::Unresolved, med, dev);
    }
    let v = if dev <= PLATEAU_TOLERANCE { LapVerdict::Plateau } else { LapVerdict::Growth };
    (v, med, dev)
}

/// Two-parameter `(rho, N1)` protocol for `|| <Lambda>^{-s} (H - lambda - i rho)^{-1} <Lambda>^{-s} ||`.
///
/// `build(N1)` returns the operator and the weight `<Lambda>^{-s}` per vertex.
pub fn lap_scan(
    build: impl Fn(usize) -> Result<(OperatorMatrix, Vec<f64>)>,
    config: &LapScanConfig,
    point_spectrum: Option<&[f64]>,
) -> Result<LapScanResult> {
    lap_scan_seeded(build, config, point_spectrum, 7)
}

/// [`lap_scan`] with an explicit seed for the Lanczos start vectors.
pub fn lap_scan_seeded(
    build: impl Fn(usize) -> Result<(OperatorMatrix, Vec<f64>)>,
    config: &LapScanConfig,
    point_spectrum: Option<&[f64]>,
    seed: u64,
) -> Result<LapScanResult> {
    config.validate()?;
    let mut cells: Vec<LapCell> = Vec::new();
    for &lambda in &config.lambdas {
        for &rho in &config.rhos {
            cells.push(LapCell { lambda, rho, n1_used: None, norm: f64::NAN, resolved: false, history: Vec::new() });
        }
    }
    for &n1 in &config.truncations {
        if cells.iter().all(|c| c.resolved) {
            break;
        }
        let (h, w) = build(n1)?;
        let updates: Result<Vec<(usize, f64)>> = cells
            .par_iter()
            .enumerate()
            .filter(|(_, c)| !c.resolved)
            .map(|(i, cell)| Ok((i, weighted_resolvent_norm_seeded(&h, &w, C64::new(cell.lambda, cell.rho), seed)?)))
            .collect();
        for (i, norm) in updates? {
            let cell = &mut cells[i];
            if let Some(&(_, prev)) = cell.history.last() {
                if (norm - prev).abs() <= config.convergence_tol * norm {
                    cell.resolved = true;
                    cell.n1_used = Some(n1);
                }
            }
            cell.norm = norm;
            cell.history.push((n1, norm));
        }
    }
    let rho_min = config.rhos.iter().copied().fold(f64::INFINITY, f64::min);
    let summaries = config
        .lambdas
        .iter()
        .map(|&lambda| {
            let mine: Vec<&LapCell> = cells.iter().filter(|c| c.lambda == lambda).collect();
            let (verdict, med, dev) = lap_verdict(&mine);
            LapLambdaSummary {
                lambda,
                verdict,
                median: med,
                max_small_rho_deviation: dev,
                near_point_spectrum: point_spectrum.map(|ps| is_near_point_spectrum(lambda, ps, rho_min)),
            }
        })
        .collect();
    Ok(LapScanResult { config: config.clone(), cells, summaries, plateau_tolerance: PLATEAU_TOLERANCE })
}

/// Eigenvalues of `larger` that reappear in `smaller` within [`PERSISTENCE_TOL`].
pub fn persistent_eigenvalues(smaller: &[f64], larger: &[f64]) -> Vec<f64> {
    larger
        .iter()
        .copied()
        .filter(|&e| smaller.iter().any(|&x| (x - e).abs() <= PERSISTENCE_TOL * e.abs().max(1.0)))
        .collect()
}

/// Within `10 rho_min` of a persistent eigenvalue.
pub fn is_near_point_spectrum(lambda: f64, persistent: &[f64], rho_min: f64) -> bool {
    persistent.iter().any(|&e| (e - lambda).abs() <= 10.0 * rho_min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationResult {
    pub integral: f64,
    /// Same integral from the exact time integral of each spectral pair.
    pub closed_form: f64,
    pub norm_sq: f64,
    pub ratio: f64,
    pub max_unitarity_defect: f64,
    pub steps: usize,
}

/// Trapezoid rule for `int_{-T}^{T} || W e^{-itH} E_I f ||^2 dt`, `W` diagonal.
pub fn propagation_integral(
    eig: &EigenDecomposition,
    weight: &[f64],
    window: SpectralWindow,
    f: &[C64],
    horizon: f64,
    dt: f64,
) -> Result<PropagationResult> {
    if !(horizon > 0.0) || !(dt > 0.0) {
        return Err(Error::Parameter("horizon and dt must be positive".into()));
    }
    let n = eig.source_dim;
    if weight.len() != n || f.len() != n {
        return Err(Error::Dimension("weight and f must match the operator dimension".into()));
    }
    let sq: Vec<f64> = eig.weights.iter().map(|w| w.sqrt()).collect();
    let u: Vec<C64> = f.iter().zip(&sq).map(|(a, s)| a * *s).collect();
    let norm_sq: f64 = u.iter().map(|z| z.norm_sqr()).sum();
    let all: Vec<(usize, C64)> = eig
        .indices_in(window)
        .into_iter()
        .map(|k| (k, eig.unit_vectors.column(k).iter().zip(&u).map(|(v, x)| v.conj() * x).sum()))
        .collect();
    let cmax = all.iter().map(|(_, z)| z.norm()).fold(0.0, f64::max);
    let (idx, coef): (Vec<usize>, Vec<C64>) = all.into_iter().filter(|(_, z)| z.norm() > 1e-15 * cmax).unzip();
    let lam: Vec<f64> = idx.iter().map(|&k| eig.eigenvalues[k]).collect();
    let proj_norm: f64 = coef.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let w2: Vec<f64> = weight.iter().map(|w| w * w).collect();
    let steps = (2.0 * horizon / dt).round().max(1.0) as usize;
    let h = 2.0 * horizon / steps as f64;
    let samples: Vec<(f64, f64)> = (0..=steps)
        .into_par_iter()
        .map(|j| {
            let t = -horizon + j as f64 * h;
            let ph: Vec<C64> = coef.iter().zip(&lam).map(|(ck, &l)| ck * C64::from_polar(1.0, -t * l)).collect();
            let mut val = 0.0;
            let mut nrm = 0.0;
            for x in 0..n {
                let mut acc = c(0.0);
                for (r, &k) in idx.iter().enumerate() {
                    acc += eig.unit_vectors[(x, k)] * ph[r];
                }
                let a2 = acc.norm_sqr();
                val += w2[x] * a2;
                nrm += a2;
            }
            (val, (nrm.sqrt() - proj_norm).abs() / proj_norm.max(1e-300))
        })
        .collect();
    let mut integral = 0.0;
    for (j, (v, _)) in samples.iter().enumerate() {
        let wgt = if j == 0 || j == steps { 0.5 } else { 1.0 };
        integral += wgt * v * h;
    }
    let max_unitarity_defect = if proj_norm == 0.0 { 0.0 } else { samples.iter().map(|s| s.1).fold(0.0, f64::max) };
    let r = idx.len();
    let mut g = vec![c(0.0); r * r];
    for x in 0..n {
        if w2[x] == 0.0 {
            continue;
        }
        for a in 0..r {
            let va = eig.unit_vectors[(x, idx[a])].conj() * w2[x];
            for b in 0..r {
                g[a * r + b] += va * eig.unit_vectors[(x, idx[b])];
            }
        }
    }
    let mut closed = c(0.0);
    for a in 0..r {
        for b in 0..r {
            let om = lam[a] - lam[b];
            let kern = if om.abs() < 1e-12 { 2.0 * horizon } else { 2.0 * (om * horizon).sin() / om };
            closed += coef[a].conj() * coef[b] * g[a * r + b] * kern;
        }
    }
    let ratio = if norm_sq > 0.0 { integral / norm_sq } else { 0.0 };
    Ok(PropagationResult { integral, closed_form: closed.re, norm_sq, ratio, max_unitarity_defect, steps })
}

/// Largest eigenvector mass on the outer quarter of the ray levels for a localized state.
pub const LOCALIZATION_TOL: f64 = 1e-8;

/// Eigenvalues whose eigenvectors put at most [`LOCALIZATION_TOL`] of their mass on rows
/// within `N1/4` levels of the cut. Extended states spread over the whole truncation.
pub fn localized_eigenvalues(eig: &EigenDecomposition, h: &OperatorMatrix) -> Vec<f64> {
    let reach = h.edge_distance.iter().flatten().max().map_or(0, |d| d + 1);
    let outer: Vec<usize> = (0..h.dim()).filter(|&i| h.edge_distance[i].is_some_and(|d| d < reach.div_ceil(4))).collect();
    (0..eig.eigenvalues.len())
        .filter(|&k| outer.iter().map(|&i| eig.unit_vectors[(i, k)].norm_sqr()).sum::<f64>() <= LOCALIZATION_TOL)
        .map(|k| eig.eigenvalues[k])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    #[serde(rename = "N1")]
    pub n1: usize,
    /// Localized eigenvalues in the window.
    pub interior_count: usize,
    /// All truncation eigenvalues in the window, extended states included.
    pub truncation_count: usize,
    pub near_alpha_count: usize,
    pub near_beta_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStudy {
    pub window: SpectralWindow,
    pub band: (f64, f64),
    pub band_margin: f64,
    pub rows: Vec<ThresholdRow>,
    pub interior_stabilized: bool,
    /// Localized eigenvalues of the largest truncation.
    pub localized_eigenvalues: Vec<f64>,
}

pub fn threshold_counts(
    eigenvalues: &[f64],
    localized: &[f64],
    n1: usize,
    window: SpectralWindow,
    band: (f64, f64),
    margin: f64,
) -> ThresholdRow {
    ThresholdRow {
        n1,
        interior_count: localized.iter().filter(|&&x| window.contains(x)).count(),
        truncation_count: eigenvalues.iter().filter(|&&x| window.contains(x)).count(),
        near_alpha_count: eigenvalues.iter().filter(|&&x| (x - band.0).abs() <= margin).count(),
        near_beta_count: eigenvalues.iter().filter(|&&x| (x - band.1).abs() <= margin).count(),
    }
}

/// Window and threshold-neighbourhood counts across truncations.
pub fn threshold_study(
    build: impl Fn(usize) -> Result<OperatorMatrix> + Sync,
    truncations: &[usize],
    window: SpectralWindow,
    band: (f64, f64),
    band_margin: f64,
) -> Result<ThresholdStudy> {
    if truncations.len() < 2 || truncations.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("threshold study needs at least two increasing truncations".into()));
    }
    if !(band_margin > 0.0) {
        return Err(Error::Parameter("band_margin must be positive".into()));
    }
    let per: Result<Vec<(ThresholdRow, Vec<f64>)>> = truncations
        .par_iter()
        .map(|&n1| {
            let h = build(n1)?;
            let e = eigendecompose(&h)?;
            let loc = localized_eigenvalues(&e, &h);
            Ok((threshold_counts(&e.eigenvalues, &loc, n1, window, band, band_margin), loc))
        })
        .collect();
    let (rows, mut locs): (Vec<ThresholdRow>, Vec<Vec<f64>>) = per?.into_iter().unzip();
    let k = rows.len();
    let interior_stabilized = rows[k - 1].interior_count == rows[k - 2].interior_count;
    Ok(ThresholdStudy { window, band, band_margin, rows, interior_stabilized, localized_eigenvalues: locs.pop().unwrap_or_default() })
}
