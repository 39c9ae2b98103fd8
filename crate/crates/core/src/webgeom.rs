//! Planar 3-web curvature and rank-one degeneracy tests for trilinear
//! phases.
//!
//! For a web in graph form `(x, y, φ3)` the proxy
//! `K = ∂x∂y ln|φ3_x / φ3_y|` vanishes identically exactly when the ratio
//! of partials factors into a function of `x` times a function of `y`,
//! i.e. when the web is linearizable.
//!
//! A phase `φ(x1, x2, x3)` is rank-one degenerate on a graph
//! `x3 = κ(x1, x2)` when `∂_jφ` restricted to the graph depends only on
//! `x_j`. Differentiating that requirement gives the characteristic system
//! `κ_1 = −φ_21/φ_23`, `κ_2 = −φ_12/φ_13`, which is integrated from a
//! basepoint; the score then measures how far the restricted gradient is
//! from the required dependence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phasekit::{for_each_grid_point, registry_get, PhaseDescriptor};

/// Relative margin for every "nonvanishing" precondition.
pub const MARGIN: f64 = 1e-6;
pub const CURVATURE_GRID: usize = 65;

#[derive(Debug, Clone, PartialEq)]
pub struct WebTriple {
    maps: [PhaseDescriptor; 3],
    domain: [[f64; 2]; 2],
}

impl WebTriple {
    /// Checks pairwise transversality on a sampled grid of `domain`.
    pub fn new(maps: [PhaseDescriptor; 3], domain: [[f64; 2]; 2]) -> Result<Self> {
        if maps.iter().any(|m| m.dimension() != 2) {
            return Err(Error::invalid("web maps must be two-dimensional"));
        }
        let mut worst = (f64::INFINITY, vec![]);
        let mut scale: f64 = 0.0;
        for_each_grid_point(&domain, 17, |p| {
            let g: Vec<[f64; 2]> = maps
                .iter()
                .map(|m| [m.axis_partial(0, 1, p), m.axis_partial(1, 1, p)])
                .collect();
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let cross = (g[i][0] * g[j][1] - g[i][1] * g[j][0]).abs();
                let norm = g[i][0].hypot(g[i][1]) * g[j][0].hypot(g[j][1]);
                scale = scale.max(norm);
                if cross < worst.0 {
                    worst = (cross, p.to_vec());
                }
            }
        });
        if !(worst.0 > MARGIN * scale) {
            return Err(Error::DegenerateGradient { at: worst.1 });
        }
        Ok(WebTriple { maps, domain })
    }

    /// The web `(x, y, φ3)`.
    pub fn graph(phi3: PhaseDescriptor, domain: [[f64; 2]; 2]) -> Result<Self> {
        let x = registry_get("coord_x")?.descriptor.with_domain(domain.to_vec())?;
        let y = registry_get("coord_y")?.descriptor.with_domain(domain.to_vec())?;
        Self::new([x, y, phi3.with_domain(domain.to_vec())?], domain)
    }

    pub fn maps(&self) -> &[PhaseDescriptor; 3] {
        &self.maps
    }

    pub fn domain(&self) -> [[f64; 2]; 2] {
        self.domain
    }

    fn is_graph_form(&self) -> bool {
        let x = registry_get("coord_x").expect("registered").descriptor;
        let y = registry_get("coord_y").expect("registered").descriptor;
        self.maps[0].form() == x.form() && self.maps[1].form() == y.form()
    }
}

/// Sampled `sup |∇φ|` over the domain, used to scale margins.
fn gradient_scale(phi: &PhaseDescriptor, domain: &[[f64; 2]]) -> f64 {
    let mut s: f64 = 0.0;
    for_each_grid_point(domain, 17, |p| {
        let g: f64 = (0..phi.dimension())
            .map(|j| phi.axis_partial(j, 1, p).powi(2))
            .sum::<f64>()
            .sqrt();
        s = s.max(g);
    });
    s
}

fn curvature_at(phi: &PhaseDescriptor, p: &[f64], margin: f64) -> Result<f64> {
    let d = |a: u32, b: u32| phi.partial_unchecked(&[a, b], p);
    let (fx, fy) = (d(1, 0), d(0, 1));
    if fx.abs() <= margin || fy.abs() <= margin {
        return Err(Error::DegenerateGradient { at: p.to_vec() });
    }
    let (fxx, fxy, fyy) = (d(2, 0), d(1, 1), d(0, 2));
    let (fxxy, fxyy) = (d(2, 1), d(1, 2));
    Ok(fxxy / fx - fxx * fxy / (fx * fx) - fxyy / fy + fxy * fyy / (fy * fy))
}

/// `K = ∂x∂y ln|φ3_x / φ3_y|` at `point` from exact partials of `φ3`.
pub fn web_curvature(web: &WebTriple, point: [f64; 2]) -> Result<f64> {
    if !web.is_graph_form() {
        return Err(Error::invalid("web_curvature needs the graph form (x, y, φ3)"));
    }
    let phi = &web.maps[2];
    let margin = MARGIN * gradient_scale(phi, &web.domain);
    curvature_at(phi, &point, margin)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSummary {
    pub min_abs: f64,
    pub max_abs: f64,
}

/// `min |K|` and `max |K|` over the 65×65 grid of the web's domain.
pub fn curvature_grid(web: &WebTriple) -> Result<CurvatureSummary> {
    if !web.is_graph_form() {
        return Err(Error::invalid("curvature needs the graph form (x, y, φ3)"));
    }
    let phi = &web.maps[2];
    let margin = MARGIN * gradient_scale(phi, &web.domain);
    let mut pts = Vec::with_capacity(CURVATURE_GRID * CURVATURE_GRID);
    for_each_grid_point(&web.domain, CURVATURE_GRID, |p| pts.push([p[0], p[1]]));
    let ks: Vec<f64> = pts
        .par_iter()
        .map(|p| curvature_at(phi, p, margin).map(f64::abs))
        .collect::<Result<_>>()?;
    Ok(CurvatureSummary {
        min_abs: ks.iter().copied().fold(f64::INFINITY, f64::min),
        max_abs: ks.iter().copied().fold(0.0, f64::max),
    })
}

/// True iff `sup |K| ≤ tol` on the 65×65 grid.
pub fn is_linearizable(web: &WebTriple, tol: f64) -> Result<bool> {
    Ok(curvature_grid(web)?.max_abs <= tol)
}

// ---------------------------------------------------------------------------
// Third-order relation

/// `(a, b, c)` for the three variants: the graph coordinate is `c`.
const VARIANTS: [(usize, usize, usize); 3] = [(0, 1, 2), (1, 2, 0), (0, 2, 1)];

fn check_mixed(phase: &PhaseDescriptor, x: &[f64]) -> Result<()> {
    let mixed = [phase.mixed(&[0, 1], x), phase.mixed(&[0, 2], x), phase.mixed(&[1, 2], x)];
    let scale = (0..3)
        .flat_map(|i| (i..3).map(move |j| (i, j)))
        .map(|(i, j)| phase.mixed(&[i, j], x).abs())
        .fold(0.0, f64::max);
    if mixed.iter().any(|m| !(m.abs() > MARGIN * scale)) {
        return Err(Error::DegenerateMixedPartial { at: x.to_vec() });
    }
    Ok(())
}

/// `|LHS − RHS|` of the relation
/// `φ_bc² (φ_aab φ_ac − φ_ab φ_aac) = φ_ac² (φ_abb φ_bc − φ_ab φ_bbc)`
/// for each choice of graph coordinate `c`, minimized over the three
/// variants. Returns the minimum and the index of the attaining variant
/// (0: graph over `x3`, 1: over `x1`, 2: over `x2`).
pub fn ugly_residual(phase: &PhaseDescriptor, point: [f64; 3]) -> Result<(f64, usize)> {
    let all = ugly_residuals(phase, point)?;
    let (idx, val) = all
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("three variants");
    Ok((*val, idx))
}

/// All three variant residuals.
pub fn ugly_residuals(phase: &PhaseDescriptor, point: [f64; 3]) -> Result<[f64; 3]> {
    if phase.dimension() != 3 {
        return Err(Error::invalid("ugly_residual needs a three-dimensional phase"));
    }
    phase.eval_partial(&[0, 0, 0], &point)?;
    check_mixed(phase, &point)?;
    let d = |ix: &[usize]| phase.mixed(ix, &point);
    let mut out = [0.0; 3];
    for (k, &(a, b, c)) in VARIANTS.iter().enumerate() {
        let lhs = d(&[b, c]).powi(2) * (d(&[a, a, b]) * d(&[a, c]) - d(&[a, b]) * d(&[a, a, c]));
        let rhs = d(&[a, c]).powi(2) * (d(&[a, b, b]) * d(&[b, c]) - d(&[a, b]) * d(&[b, b, c]));
        out[k] = (lhs - rhs).abs();
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Candidate surface

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePatch {
    pub basepoint: [f64; 3],
    pub step: f64,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// `kappa[i][j] = κ(x1[i], x2[j])`.
    pub kappa: Vec<Vec<f64>>,
}

impl SurfacePatch {
    /// Index of the basepoint along either axis.
    pub fn center(&self) -> usize {
        self.x1.len() / 2
    }
}

fn rk4(f: &dyn Fn(f64, f64) -> Result<f64>, t0: f64, y0: f64, h: f64, steps: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    let (mut t, mut y) = (t0, y0);
    out.push(y);
    for _ in 0..steps {
        let k1 = f(t, y)?;
        let k2 = f(t + h / 2.0, y + h / 2.0 * k1)?;
        let k3 = f(t + h / 2.0, y + h / 2.0 * k2)?;
        let k4 = f(t + h, y + h * k3)?;
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
        out.push(y);
    }
    Ok(out)
}

/// Solves from the center in both directions on `center + i·h`,
/// `i = −n..=n`.
fn rk4_both_ways(f: &dyn Fn(f64, f64) -> Result<f64>, center: f64, y0: f64, h: f64, n: usize) -> Result<Vec<f64>> {
    let fwd = rk4(f, center, y0, h, n)?;
    let bwd = rk4(f, center, y0, -h, n)?;
    Ok(bwd.into_iter().rev().chain(fwd.into_iter().skip(1)).collect())
}

fn second_scale(phase: &PhaseDescriptor, x: &[f64]) -> f64 {
    (0..3)
        .flat_map(|i| (i..3).map(move |j| (i, j)))
        .map(|(i, j)| phase.mixed(&[i, j], x).abs())
        .fold(0.0, f64::max)
}

/// Integrates `κ_1 = −φ_21/φ_23` along `x2 = x̄2`, then
/// `κ_2 = −φ_12/φ_13` along every vertical line, by classical RK4 with the
/// given step. `κ(x̄1, x̄2) = x̄3`.
pub fn rank1_candidate_surface(phase: &PhaseDescriptor, basepoint: [f64; 3], halfwidth: f64, step: f64) -> Result<SurfacePatch> {
    if phase.dimension() != 3 {
        return Err(Error::invalid("candidate surfaces need a three-dimensional phase"));
    }
    if !(step > 0.0 && halfwidth >= step) {
        return Err(Error::invalid("need 0 < step <= halfwidth"));
    }
    let n = (halfwidth / step).round() as usize;
    let margin = MARGIN * second_scale(phase, &basepoint).max(f64::MIN_POSITIVE);
    let [b1, b2, b3] = basepoint;
    let ratio = |num: [usize; 2], den: [usize; 2], x: [f64; 3]| -> Result<f64> {
        if !phase.is_analytic_at(&x) {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        let q = phase.mixed(&den, &x);
        if !(q.abs() > margin) {
            return Err(Error::OdeSingularity { at: x.to_vec() });
        }
        Ok(-phase.mixed(&num, &x) / q)
    };
    let along_x1 = rk4_both_ways(&|t, k| ratio([1, 0], [1, 2], [t, b2, k]), b1, b3, step, n)?;
    let x1: Vec<f64> = (0..=2 * n).map(|i| b1 + (i as f64 - n as f64) * step).collect();
    let x2: Vec<f64> = (0..=2 * n).map(|j| b2 + (j as f64 - n as f64) * step).collect();
    let kappa = x1
        .par_iter()
        .zip(&along_x1)
        .map(|(&a, &k0)| rk4_both_ways(&|t, k| ratio([0, 1], [0, 2], [a, t, k]), b2, k0, step, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(SurfacePatch {
        basepoint,
        step,
        x1,
        x2,
        kappa,
    })
}

/// Degeneracy score of the candidate surface through `basepoint`, in units
/// of `max(1, sup |∇φ| on the patch)`:
///
/// * `g1 = ∂_1φ(x1, x2, κ)` must not depend on `x2`: largest range over a
///   column of fixed `x1`;
/// * symmetrically for `g2`;
/// * `g3 = ∂_3φ(x1, x2, κ)` must be a function of `κ`: the patch is cut
///   into κ-bands of width `step`, a polynomial of degree at most 3 in κ
///   is fitted on each band, and the largest residual is taken. (The raw range of `g3`
///   inside a band is of size `|h3'|·step` even for degenerate phases.)
pub fn rank1_degeneracy_score(phase: &PhaseDescriptor, basepoint: [f64; 3], halfwidth: f64, step: f64) -> Result<f64> {
    let patch = rank1_candidate_surface(phase, basepoint, halfwidth, step)?;
    Ok(score_patch(phase, &patch))
}

pub fn score_patch(phase: &PhaseDescriptor, patch: &SurfacePatch) -> f64 {
    let n1 = patch.x1.len();
    let n2 = patch.x2.len();
    let mut g = vec![vec![[0.0; 3]; n2]; n1];
    let mut grad_scale: f64 = 1.0;
    for i in 0..n1 {
        for j in 0..n2 {
            let x = [patch.x1[i], patch.x2[j], patch.kappa[i][j]];
            for (k, gk) in g[i][j].iter_mut().enumerate() {
                *gk = phase.axis_partial(k, 1, &x);
                grad_scale = grad_scale.max(gk.abs());
            }
        }
    }
    let range = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    };
    let s1 = (0..n1)
        .map(|i| range(&mut (0..n2).map(|j| g[i][j][0])))
        .fold(0.0, f64::max);
    let s2 = (0..n2)
        .map(|j| range(&mut (0..n1).map(|i| g[i][j][1])))
        .fold(0.0, f64::max);
    let mut samples: Vec<(f64, f64)> = (0..n1)
        .flat_map(|i| (0..n2).map(move |j| (i, j)))
        .map(|(i, j)| (patch.kappa[i][j], g[i][j][2]))
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s3 = band_residual(&samples, patch.step);
    s1.max(s2).max(s3) / grad_scale
}

/// Largest residual of per-band cubic fits of `value` against `key`.
fn band_residual(sorted: &[(f64, f64)], width: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let k0 = sorted[0].0;
    let mut worst: f64 = 0.0;
    let mut start = 0;
    while start < sorted.len() {
        let band = ((sorted[start].0 - k0) / width).floor();
        let mut stop = start;
        while stop < sorted.len() && ((sorted[stop].0 - k0) / width).floor() == band {
            stop += 1;
        }
        worst = worst.max(poly_fit_residual(&sorted[start..stop]));
        start = stop;
    }
    worst
}

const BAND_FIT_DEGREE: usize = 3;

/// Max residual of the least-squares polynomial through `pts` of degree
/// `min(3, distinct keys − 1)`. With a single key this is the spread of the
/// values; a fit that interpolates exactly carries no information and
/// reports 0.
fn poly_fit_residual(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let c = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let s = pts.iter().map(|p| (p.0 - c).abs()).fold(0.0, f64::max);
    let mut keys: Vec<f64> = pts.iter().map(|p| p.0).collect();
    keys.sort_by(f64::total_cmp);
    keys.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * s.max(f64::MIN_POSITIVE));
    let terms = keys.len().min(BAND_FIT_DEGREE + 1);
    if pts.len() <= terms && keys.len() > 1 {
        return 0.0;
    }
    let basis = |x: f64| {
        let t = if s > 0.0 { (x - c) / s } else { 0.0 };
        (0..terms).map(|k| t.powi(k as i32)).collect::<Vec<f64>>()
    };
    let mut m = vec![vec![0.0f64; terms]; terms];
    let mut r = vec![0.0f64; terms];
    for &(x, y) in pts {
        let b = basis(x);
        for i in 0..terms {
            for j in 0..terms {
                m[i][j] += b[i] * b[j];
            }
            r[i] += b[i] * y;
        }
    }
    let coef = solve(m, r);
    pts.iter()
        .map(|&(x, y)| {
            let fit: f64 = basis(x).iter().zip(&coef).map(|(u, v)| u * v).sum();
            (y - fit).abs()
        })
        .fold(0.0, f64::max)
}

/// Gaussian elimination with partial pivoting; the systems here are tiny
/// normal equations on distinct, scaled abscissae.
fn solve(mut m: Vec<Vec<f64>>, mut r: Vec<f64>) -> Vec<f64> {
    let n = r.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("nonempty");
        m.swap(col, piv);
        r.swap(col, piv);
        for row in 0..n {
            if row != col && m[col][col] != 0.0 {
                let f = m[row][col] / m[col][col];
                for k in 0..n {
                    m[row][k] -= f * m[col][k];
                }
                r[row] -= f * r[col];
            }
        }
    }
    (0..n)
        .map(|i| if m[i][i] != 0.0 { r[i] / m[i][i] } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebReport {
    pub curvature_min_abs: Option<f64>,
    pub linearizable: Option<bool>,
    pub ugly_residual_min: Option<f64>,
    pub degeneracy_score: Option<f64>,
    pub basepoint: Option<[f64; 3]>,
}
