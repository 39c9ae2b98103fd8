//! Oscillation-resolving quadrature for the trilinear form
//! `T = ∫ e^{iλφ(x)} f1(x1) f2(x2) f3(x3) dx` over a box and its planar
//! analogue `S = ∫ e^{iλψ} Π f_j(φ_j(x, y)) dx dy`.
//!
//! Each axis is cut at the breakpoints of its test function and the pieces
//! are covered by Gauss–Legendre panels whose count follows a sampled bound
//! on the local frequency `|λ ∂_jφ + (arg f_j)'|`. Every evaluation is
//! repeated with half the panels and the difference is reported.
//!
//! Factors depending on a single coordinate (one-variable monomials, log
//! terms, the test functions and the weights) are folded into per-axis
//! vectors. When no monomial involves all three variables the remaining
//! phase is a sum of pairwise terms and the triple sum reduces to dot
//! products of precomputed tables.
//!
//! The reference integrators (`eval_oracle_*`) use composite midpoint rules
//! with one Richardson step and share no code with the panel path beyond
//! the phase and test-function evaluators.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre, pairwise_sum};
use crate::phasekit::{for_each_grid_point, PhaseDescriptor, SparsePolynomial};
use crate::witnesses::TestFunction1D;

const LIP_SAMPLES: usize = 17;
const MAX_SPLIT_DEPTH: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadConfig {
    /// Nodes per panel per axis.
    pub gauss_order: usize,
    /// Panels per 2π of phase variation.
    pub oversample: f64,
    /// Budget on the node count of both resolutions together.
    pub max_nodes: u64,
    pub split_at_breakpoints: bool,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            gauss_order: 8,
            oversample: 4.0,
            max_nodes: 4_000_000_000,
            split_at_breakpoints: true,
        }
    }
}

impl QuadConfig {
    /// Cheaper setting for long λ-ladders: 12 nodes per 2π of phase. The
    /// half-resolution run then still puts 6 nodes per period, which keeps
    /// the reported delta far below the value.
    pub fn ladder() -> Self {
        QuadConfig {
            gauss_order: 12,
            oversample: 1.0,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(2..=32).contains(&self.gauss_order) {
            return Err(Error::invalid(format!("gauss_order {} outside 2..=32", self.gauss_order)));
        }
        if !(self.oversample >= 1.0 && self.oversample.is_finite()) {
            return Err(Error::invalid("oversample must be a finite number >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: Complex64,
    pub lambda: f64,
    pub nodes_used: u64,
    /// `|value − value at half resolution|`.
    pub two_resolution_delta: f64,
}

impl IntegralResult {
    /// The acceptance rule for a single evaluation:
    /// `delta ≤ 1e-3 (|value| + λ^{-3/2})`.
    pub fn is_reliable(&self) -> bool {
        let floor = if self.lambda.abs() > 0.0 {
            self.lambda.abs().powf(-1.5)
        } else {
            1.0
        };
        self.two_resolution_delta <= 1e-3 * (self.value.norm() + floor)
    }

    fn conj(self) -> Self {
        IntegralResult {
            value: self.value.conj(),
            ..self
        }
    }
}

// ---------------------------------------------------------------------------
// Shared helpers

/// Pieces of `f` clipped to `bounds` on which `f` is not identically zero.
fn active_pieces(f: &TestFunction1D, bounds: [f64; 2], split: bool) -> Vec<[f64; 2]> {
    let pieces: Vec<[f64; 2]> = f
        .pieces()
        .iter()
        .map(|p| [p.lo.max(bounds[0]), p.hi.min(bounds[1])])
        .filter(|iv| iv[0] < iv[1])
        .collect();
    if split || pieces.is_empty() {
        pieces
    } else {
        vec![[pieces[0][0], pieces[pieces.len() - 1][1]]]
    }
}

fn zero_result(lambda: f64) -> IntegralResult {
    IntegralResult {
        value: Complex64::new(0.0, 0.0),
        lambda,
        nodes_used: 0,
        two_resolution_delta: 0.0,
    }
}

fn check_analytic(phase: &PhaseDescriptor, bounds: &[[f64; 2]]) -> Result<()> {
    if phase.box_is_analytic(bounds) {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            point: bounds.iter().map(|b| b[0]).collect(),
        })
    }
}

/// Sum of the monomials of `poly` that depend on exactly the variables in
/// `mask`, as a polynomial.
fn part(poly: &SparsePolynomial, mask: u32) -> SparsePolynomial {
    poly.terms_with_variables(mask)
}

/// Per-axis factor `w · f(x) · e^{iλ(P_j(x) + c ln x)}` where `P_j` collects
/// the one-variable monomials of the phase in `x_j`.
fn axis_factors(
    phase: &PhaseDescriptor,
    axis: usize,
    f: &TestFunction1D,
    x: &[f64],
    w: &[f64],
    lambda: f64,
) -> Vec<Complex64> {
    let dim = phase.dimension();
    let single = part(phase.form().poly(), 1 << axis);
    let logs: Vec<f64> = phase
        .form()
        .logs()
        .iter()
        .filter(|l| l.axis == axis)
        .map(|l| crate::phasekit::rational_to_f64(l.coeff))
        .collect();
    let mut pt = vec![0.0; dim];
    x.iter()
        .zip(w)
        .map(|(&xv, &wv)| {
            pt[axis] = xv;
            let mut theta = single.eval(&pt);
            for c in &logs {
                theta += c * xv.ln();
            }
            f.eval(xv) * Complex64::cis(lambda * theta) * wv
        })
        .collect()
}

fn constant_factor(phase: &PhaseDescriptor, lambda: f64) -> Complex64 {
    let c = part(phase.form().poly(), 0).eval(&vec![0.0; phase.dimension()]);
    Complex64::cis(lambda * c)
}

// ---------------------------------------------------------------------------
// Panel rule for the trilinear form

/// Tensor axis: Gauss nodes with weights already scaled to their panels.
#[derive(Debug, Clone, Default)]
struct AxisRule {
    x: Vec<f64>,
    w: Vec<f64>,
}

fn axis_rule(pieces: &[[f64; 2]], panels_total: usize, order: usize) -> AxisRule {
    let gl = gauss_legendre(order);
    let total_len: f64 = pieces.iter().map(|p| p[1] - p[0]).sum();
    let mut rule = AxisRule::default();
    for p in pieces {
        let len = p[1] - p[0];
        let n = ((panels_total as f64 * len / total_len).ceil() as usize).max(1);
        let h = len / n as f64;
        for k in 0..n {
            let a = p[0] + k as f64 * h;
            for (t, wt) in gl.nodes.iter().zip(&gl.weights) {
                rule.x.push(a + 0.5 * h * (t + 1.0));
                rule.w.push(0.5 * h * wt);
            }
        }
    }
    rule
}

fn panels_for(pieces: &[[f64; 2]], panels_total: usize) -> usize {
    let total_len: f64 = pieces.iter().map(|p| p[1] - p[0]).sum();
    pieces
        .iter()
        .map(|p| ((panels_total as f64 * (p[1] - p[0]) / total_len).ceil() as usize).max(1))
        .sum()
}

/// Sampled sup of the total frequency `|λ ∂_axis φ + (arg f_axis)'|` over
/// the support box.
fn total_frequency(phase: &PhaseDescriptor, fs: &[&TestFunction1D; 3], axis: usize, bounds: &[[f64; 2]], lambda: f64) -> f64 {
    let mut best: f64 = 0.0;
    for_each_grid_point(bounds, LIP_SAMPLES, |x| {
        let v = lambda * phase.axis_partial(axis, 1, x) + fs[axis].local_frequency(x[axis]);
        best = best.max(v.abs());
    });
    best
}

/// Evaluates `T_λ^φ(f1, f2, f3)` over the phase's domain.
pub fn eval_t3(phase: &PhaseDescriptor, fs: [&TestFunction1D; 3], lambda: f64, cfg: &QuadConfig) -> Result<IntegralResult> {
    cfg.validate()?;
    if phase.dimension() != 3 {
        return Err(Error::invalid("eval_t3 needs a three-dimensional phase"));
    }
    if !lambda.is_finite() {
        return Err(Error::invalid("λ must be finite"));
    }
    if lambda < 0.0 {
        let conj: Vec<TestFunction1D> = fs.iter().map(|f| f.conj()).collect();
        return eval_t3(phase, [&conj[0], &conj[1], &conj[2]], -lambda, cfg).map(|r| IntegralResult {
            lambda,
            ..r.conj()
        });
    }
    let domain = phase.domain();
    let pieces: Vec<Vec<[f64; 2]>> = (0..3)
        .map(|j| active_pieces(fs[j], domain[j], cfg.split_at_breakpoints))
        .collect();
    if pieces.iter().any(|p| p.is_empty()) || fs.iter().any(|f| f.is_zero()) {
        return Ok(zero_result(lambda));
    }
    let bounds: Vec<[f64; 2]> = pieces.iter().map(|p| [p[0][0], p[p.len() - 1][1]]).collect();
    check_analytic(phase, &bounds)?;

    let mut full = [0usize; 3];
    let mut half = [0usize; 3];
    for j in 0..3 {
        let len: f64 = pieces[j].iter().map(|p| p[1] - p[0]).sum();
        let freq = total_frequency(phase, &fs, j, &bounds, lambda);
        let n = ((cfg.oversample * freq * len / (2.0 * PI)).ceil() as usize).max(1);
        full[j] = n;
        half[j] = n.div_ceil(2);
    }
    let count = |n: &[usize; 3]| -> u64 {
        (0..3)
            .map(|j| (panels_for(&pieces[j], n[j]) * cfg.gauss_order) as u64)
            .product()
    };
    let needed = count(&full).saturating_add(count(&half));
    if needed > cfg.max_nodes {
        return Err(Error::BudgetExceeded {
            needed,
            budget: cfg.max_nodes,
        });
    }
    let run = |n: &[usize; 3]| {
        let rules: Vec<AxisRule> = (0..3).map(|j| axis_rule(&pieces[j], n[j], cfg.gauss_order)).collect();
        tensor_sum(phase, &fs, &rules, lambda)
    };
    let value = run(&full);
    let coarse = run(&half);
    Ok(IntegralResult {
        value,
        lambda,
        nodes_used: needed,
        two_resolution_delta: (value - coarse).norm(),
    })
}

fn tensor_sum(phase: &PhaseDescriptor, fs: &[&TestFunction1D; 3], rules: &[AxisRule], lambda: f64) -> Complex64 {
    let factors: Vec<Vec<Complex64>> = (0..3)
        .map(|j| axis_factors(phase, j, fs[j], &rules[j].x, &rules[j].w, lambda))
        .collect();
    let global = constant_factor(phase, lambda);
    // Innermost axis: the one with the most nodes.
    let c = (0..3).max_by_key(|&j| (rules[j].x.len(), j)).expect("three axes");
    let (a, b) = match c {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let poly = phase.form().poly();
    let triple = part(poly, 0b111);
    let sum = if triple.is_zero() {
        separable_sum(poly, [a, b, c], rules, &factors, lambda)
    } else {
        general_sum(poly, [a, b, c], rules, &factors, lambda)
    };
    global * sum
}

/// Triple sum when the multi-variable phase is `P_ab + P_ac + P_bc`.
fn separable_sum(
    poly: &SparsePolynomial,
    [a, b, c]: [usize; 3],
    rules: &[AxisRule],
    factors: &[Vec<Complex64>],
    lambda: f64,
) -> Complex64 {
    let p_ab = part(poly, (1 << a) | (1 << b));
    let p_ac = part(poly, (1 << a) | (1 << c));
    let p_bc = part(poly, (1 << b) | (1 << c));
    let (xa, xb, xc) = (&rules[a].x, &rules[b].x, &rules[c].x);
    let nc = xc.len();
    let pair_table = |p: &SparsePolynomial, u: usize, xu: f64, v: usize, xv: &[f64], out_re: &mut [f64], out_im: &mut [f64]| {
        let mut pt = [0.0; 3];
        pt[u] = xu;
        for (k, &x) in xv.iter().enumerate() {
            pt[v] = x;
            let (s, co) = (lambda * p.eval(&pt)).sin_cos();
            out_re[k] = co;
            out_im[k] = s;
        }
    };
    // E_bc[j][k], row-major.
    let mut h_re = vec![0.0; xb.len() * nc];
    let mut h_im = vec![0.0; xb.len() * nc];
    h_re.par_chunks_mut(nc)
        .zip(h_im.par_chunks_mut(nc))
        .enumerate()
        .for_each(|(j, (re, im))| pair_table(&p_bc, b, xb[j], c, xc, re, im));
    let fa = &factors[a];
    let fb = &factors[b];
    let fc = &factors[c];
    let rows: Vec<Complex64> = (0..xa.len())
        .into_par_iter()
        .map(|i| {
            let mut g_re = vec![0.0; nc];
            let mut g_im = vec![0.0; nc];
            pair_table(&p_ac, a, xa[i], c, xc, &mut g_re, &mut g_im);
            for k in 0..nc {
                let g = Complex64::new(g_re[k], g_im[k]) * fc[k];
                g_re[k] = g.re;
                g_im[k] = g.im;
            }
            let mut e_re = vec![0.0; xb.len()];
            let mut e_im = vec![0.0; xb.len()];
            pair_table(&p_ab, a, xa[i], b, xb, &mut e_re, &mut e_im);
            let inner: Vec<Complex64> = (0..xb.len())
                .map(|j| {
                    let d = cdot(&g_re, &g_im, &h_re[j * nc..(j + 1) * nc], &h_im[j * nc..(j + 1) * nc]);
                    Complex64::new(e_re[j], e_im[j]) * fb[j] * d
                })
                .collect();
            fa[i] * pairwise_sum(&inner)
        })
        .collect();
    pairwise_sum(&rows)
}

/// `Σ_k (ar + i ai)_k (br + i bi)_k` with four fixed lanes.
fn cdot(ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]) -> Complex64 {
    let mut sr = [0.0f64; 4];
    let mut si = [0.0f64; 4];
    let n = ar.len();
    let m = n - n % 4;
    for (((a, b), c), d) in ar[..m]
        .chunks_exact(4)
        .zip(ai[..m].chunks_exact(4))
        .zip(br[..m].chunks_exact(4))
        .zip(bi[..m].chunks_exact(4))
    {
        for l in 0..4 {
            sr[l] += a[l] * c[l] - b[l] * d[l];
            si[l] += a[l] * d[l] + b[l] * c[l];
        }
    }
    for k in m..n {
        sr[0] += ar[k] * br[k] - ai[k] * bi[k];
        si[0] += ar[k] * bi[k] + ai[k] * br[k];
    }
    Complex64::new((sr[0] + sr[1]) + (sr[2] + sr[3]), (si[0] + si[1]) + (si[2] + si[3]))
}

/// Triple sum for phases with monomials in all three variables: Horner in
/// the innermost coordinate, one `sin_cos` per node.
fn general_sum(
    poly: &SparsePolynomial,
    [a, b, c]: [usize; 3],
    rules: &[AxisRule],
    factors: &[Vec<Complex64>],
    lambda: f64,
) -> Complex64 {
    let single = [part(poly, 1), part(poly, 2), part(poly, 4), part(poly, 0)];
    let multi_terms = poly
        .terms()
        .iter()
        .filter(|t| !single.iter().any(|s| s.terms().contains(t)))
        .cloned();
    let multi = SparsePolynomial::new(3, multi_terms).expect("dimension preserved");
    let coeffs = multi.split_axis(c);
    let (xa, xb, xc) = (&rules[a].x, &rules[b].x, &rules[c].x);
    let (fa, fb, fc) = (&factors[a], &factors[b], &factors[c]);
    let rows: Vec<Complex64> = (0..xa.len())
        .into_par_iter()
        .map(|i| {
            let mut pt = [0.0; 3];
            pt[a] = xa[i];
            let mut q = vec![0.0; coeffs.len()];
            let line: Vec<Complex64> = (0..xb.len())
                .map(|j| {
                    pt[b] = xb[j];
                    for (d, poly_d) in coeffs.iter().enumerate() {
                        q[d] = lambda * poly_d.eval(&pt);
                    }
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for (k, &z) in xc.iter().enumerate() {
                        let theta = q.iter().rev().fold(0.0, |acc, &cd| acc * z + cd);
                        let (s, co) = theta.sin_cos();
                        let f = fc[k];
                        re += f.re * co - f.im * s;
                        im += f.re * s + f.im * co;
                    }
                    fb[j] * Complex64::new(re, im)
                })
                .collect();
            fa[i] * pairwise_sum(&line)
        })
        .collect();
    pairwise_sum(&rows)
}

// ---------------------------------------------------------------------------
// Planar form

#[derive(Debug, Clone, Copy)]
struct Cell {
    x: [f64; 2],
    y: [f64; 2],
}

fn check_planar(psi: &PhaseDescriptor, maps: &[&PhaseDescriptor; 3]) -> Result<()> {
    if psi.dimension() != 2 || maps.iter().any(|m| m.dimension() != 2) {
        return Err(Error::invalid("planar forms need two-dimensional phase and maps"));
    }
    Ok(())
}

/// Rejects maps whose gradient vanishes at a sampled point of the box.
fn check_submersions(maps: &[&PhaseDescriptor; 3], bounds: &[[f64; 2]]) -> Result<()> {
    for m in maps {
        check_analytic(m, bounds)?;
        let mut scale: f64 = 0.0;
        let mut worst = (f64::INFINITY, vec![]);
        for_each_grid_point(bounds, LIP_SAMPLES, |p| {
            let g = m.axis_partial(0, 1, p).hypot(m.axis_partial(1, 1, p));
            scale = scale.max(g);
            if g < worst.0 {
                worst = (g, p.to_vec());
            }
        });
        if worst.0 <= 1e-6 * scale.max(1e-300) {
            return Err(Error::DegenerateGradient { at: worst.1 });
        }
    }
    Ok(())
}

fn planar_frequency(
    psi: &PhaseDescriptor,
    maps: &[&PhaseDescriptor; 3],
    fs: &[&TestFunction1D; 3],
    axis: usize,
    bounds: &[[f64; 2]],
    lambda: f64,
) -> f64 {
    let mut best: f64 = 0.0;
    for_each_grid_point(bounds, LIP_SAMPLES, |p| {
        let mut v = lambda * psi.axis_partial(axis, 1, p);
        for j in 0..3 {
            let u = maps[j].partial_unchecked(&[0, 0], p);
            v += fs[j].local_frequency(u) * maps[j].axis_partial(axis, 1, p);
        }
        best = best.max(v.abs());
    });
    best
}

fn crossed_by_breakpoint(cell: &Cell, maps: &[&PhaseDescriptor; 3], fs: &[&TestFunction1D; 3]) -> bool {
    const S: usize = 5;
    for j in 0..3 {
        let bps = fs[j].breakpoints();
        if bps.is_empty() {
            continue;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for_each_grid_point(&[cell.x, cell.y], S, |p| {
            let u = maps[j].partial_unchecked(&[0, 0], p);
            lo = lo.min(u);
            hi = hi.max(u);
        });
        if bps.iter().any(|&b| lo <= b && b <= hi) {
            return true;
        }
    }
    false
}

fn split_cells(cell: Cell, depth: u32, maps: &[&PhaseDescriptor; 3], fs: &[&TestFunction1D; 3], out: &mut Vec<Cell>) {
    if depth >= MAX_SPLIT_DEPTH || !crossed_by_breakpoint(&cell, maps, fs) {
        out.push(cell);
        return;
    }
    let mx = 0.5 * (cell.x[0] + cell.x[1]);
    let my = 0.5 * (cell.y[0] + cell.y[1]);
    for x in [[cell.x[0], mx], [mx, cell.x[1]]] {
        for y in [[cell.y[0], my], [my, cell.y[1]]] {
            split_cells(Cell { x, y }, depth + 1, maps, fs, out);
        }
    }
}

fn planar_cells(
    bounds: &[[f64; 2]],
    n: [usize; 2],
    split: bool,
    maps: &[&PhaseDescriptor; 3],
    fs: &[&TestFunction1D; 3],
) -> Vec<Cell> {
    let hx = (bounds[0][1] - bounds[0][0]) / n[0] as f64;
    let hy = (bounds[1][1] - bounds[1][0]) / n[1] as f64;
    let mut cells = Vec::new();
    for i in 0..n[0] {
        for j in 0..n[1] {
            let cell = Cell {
                x: [bounds[0][0] + i as f64 * hx, bounds[0][0] + (i + 1) as f64 * hx],
                y: [bounds[1][0] + j as f64 * hy, bounds[1][0] + (j + 1) as f64 * hy],
            };
            if split {
                split_cells(cell, 0, maps, fs, &mut cells);
            } else {
                cells.push(cell);
            }
        }
    }
    cells
}

fn planar_integrand(
    psi: &PhaseDescriptor,
    maps: &[&PhaseDescriptor; 3],
    fs: &[&TestFunction1D; 3],
    lambda: f64,
    p: &[f64],
) -> Complex64 {
    let mut v = Complex64::cis(lambda * psi.partial_unchecked(&[0, 0], p));
    for j in 0..3 {
        v *= fs[j].eval(maps[j].partial_unchecked(&[0, 0], p));
    }
    v
}

/// Evaluates `S_λ(f1, f2, f3) = ∫ e^{iλψ} Π f_j∘φ_j` over the domain of `psi`.
pub fn eval_s2(
    psi: &PhaseDescriptor,
    maps: [&PhaseDescriptor; 3],
    fs: [&TestFunction1D; 3],
    lambda: f64,
    cfg: &QuadConfig,
) -> Result<IntegralResult> {
    cfg.validate()?;
    check_planar(psi, &maps)?;
    if !lambda.is_finite() {
        return Err(Error::invalid("λ must be finite"));
    }
    if lambda < 0.0 {
        let conj: Vec<TestFunction1D> = fs.iter().map(|f| f.conj()).collect();
        return eval_s2(psi, maps, [&conj[0], &conj[1], &conj[2]], -lambda, cfg).map(|r| IntegralResult {
            lambda,
            ..r.conj()
        });
    }
    let bounds = psi.domain().to_vec();
    check_analytic(psi, &bounds)?;
    check_submersions(&maps, &bounds)?;
    if fs.iter().any(|f| f.is_zero()) {
        return Ok(zero_result(lambda));
    }
    let mut full = [0usize; 2];
    for (d, n) in full.iter_mut().enumerate() {
        let freq = planar_frequency(psi, &maps, &fs, d, &bounds, lambda);
        let len = bounds[d][1] - bounds[d][0];
        *n = ((cfg.oversample * freq * len / (2.0 * PI)).ceil() as usize).max(1);
    }
    let half = [full[0].div_ceil(2), full[1].div_ceil(2)];
    let fine = planar_cells(&bounds, full, cfg.split_at_breakpoints, &maps, &fs);
    let coarse = planar_cells(&bounds, half, cfg.split_at_breakpoints, &maps, &fs);
    let per_cell = (cfg.gauss_order * cfg.gauss_order) as u64;
    let needed = (fine.len() as u64 + coarse.len() as u64).saturating_mul(per_cell);
    if needed > cfg.max_nodes {
        return Err(Error::BudgetExceeded {
            needed,
            budget: cfg.max_nodes,
        });
    }
    let gl = gauss_legendre(cfg.gauss_order);
    let run = |cells: &[Cell]| {
        let parts: Vec<Complex64> = cells
            .par_iter()
            .map(|cell| {
                let (hx, hy) = (cell.x[1] - cell.x[0], cell.y[1] - cell.y[0]);
                let mut acc = Complex64::new(0.0, 0.0);
                for (tx, wx) in gl.nodes.iter().zip(&gl.weights) {
                    let x = cell.x[0] + 0.5 * hx * (tx + 1.0);
                    let mut row = Complex64::new(0.0, 0.0);
                    for (ty, wy) in gl.nodes.iter().zip(&gl.weights) {
                        let y = cell.y[0] + 0.5 * hy * (ty + 1.0);
                        row += planar_integrand(psi, &maps, &fs, lambda, &[x, y]) * *wy;
                    }
                    acc += row * *wx;
                }
                acc * (0.25 * hx * hy)
            })
            .collect();
        pairwise_sum(&parts)
    };
    let value = run(&fine);
    let coarse_value = run(&coarse);
    Ok(IntegralResult {
        value,
        lambda,
        nodes_used: needed,
        two_resolution_delta: (value - coarse_value).norm(),
    })
}

// ---------------------------------------------------------------------------
// Reference integrators

/// Per-axis midpoint grid made of uniform segments whose edges include every
/// breakpoint; each segment has an even cell count so that halving keeps the
/// alignment.
#[derive(Debug, Clone)]
struct MidpointAxis {
    /// (start, step, cells)
    segments: Vec<(f64, f64, usize)>,
}

impl MidpointAxis {
    fn new(pieces: &[[f64; 2]], resolution: usize) -> Self {
        let total: f64 = pieces.iter().map(|p| p[1] - p[0]).sum();
        let segments = pieces
            .iter()
            .map(|p| {
                let len = p[1] - p[0];
                let half_cells = ((resolution as f64 * len / total / 2.0).round() as usize).max(1);
                let n = 2 * half_cells;
                (p[0], len / n as f64, n)
            })
            .collect();
        MidpointAxis { segments }
    }

    fn halved(&self) -> Self {
        MidpointAxis {
            segments: self.segments.iter().map(|&(a, h, n)| (a, 2.0 * h, n / 2)).collect(),
        }
    }

    fn points(&self) -> (Vec<f64>, Vec<f64>) {
        let mut x = Vec::new();
        let mut w = Vec::new();
        for &(a, h, n) in &self.segments {
            for m in 0..n {
                x.push(a + (m as f64 + 0.5) * h);
                w.push(h);
            }
        }
        (x, w)
    }

    fn len(&self) -> usize {
        self.segments.iter().map(|s| s.2).sum()
    }
}

/// Lines along the last axis are processed this many at a time so that the
/// multiplicative recurrences of different lines overlap.
const LINE_BLOCK: usize = 4;
const MAX_RECURRENCE_DEGREE: usize = 6;
const RESTART: usize = 64;

fn oracle_midpoint_t3(phase: &PhaseDescriptor, fs: &[&TestFunction1D; 3], axes: &[MidpointAxis], lambda: f64) -> Complex64 {
    let pts: Vec<(Vec<f64>, Vec<f64>)> = axes.iter().map(|a| a.points()).collect();
    let factors: Vec<Vec<Complex64>> = (0..3)
        .map(|j| axis_factors(phase, j, fs[j], &pts[j].0, &pts[j].1, lambda))
        .collect();
    let poly = phase.form().poly();
    let single = [part(poly, 1), part(poly, 2), part(poly, 4), part(poly, 0)];
    let multi = SparsePolynomial::new(
        3,
        poly.terms()
            .iter()
            .filter(|t| !single.iter().any(|s| s.terms().contains(t)))
            .cloned(),
    )
    .expect("dimension preserved");
    let coeffs = multi.split_axis(2);
    let degree = coeffs.len() - 1;
    let (x0, x1) = (&pts[0].0, &pts[1].0);
    let rows: Vec<Complex64> = (0..x0.len())
        .into_par_iter()
        .map(|i| {
            let mut line_sums = Vec::with_capacity(x1.len());
            let mut j = 0;
            while j < x1.len() {
                let block: Vec<usize> = (j..(j + LINE_BLOCK).min(x1.len())).collect();
                let q: Vec<Vec<f64>> = block
                    .iter()
                    .map(|&jj| {
                        let pt = [x0[i], x1[jj], 0.0];
                        coeffs.iter().map(|p| lambda * p.eval(&pt)).collect()
                    })
                    .collect();
                let sums = if degree <= MAX_RECURRENCE_DEGREE {
                    recurrence_lines(&q, &axes[2], &factors[2])
                } else {
                    direct_lines(&q, &pts[2].0, &factors[2])
                };
                for (k, &jj) in block.iter().enumerate() {
                    line_sums.push(factors[1][jj] * sums[k]);
                }
                j += LINE_BLOCK;
            }
            factors[0][i] * pairwise_sum(&line_sums)
        })
        .collect();
    constant_factor(phase, lambda) * pairwise_sum(&rows)
}

/// `Σ_m fz[m] e^{i q(z_m)}` for each polynomial `q` (coefficients ascending)
/// via forward differences on every uniform segment.
fn recurrence_lines(qs: &[Vec<f64>], axis: &MidpointAxis, fz: &[Complex64]) -> Vec<Complex64> {
    let d = qs[0].len() - 1;
    let nl = qs.len();
    let mut sums = vec![Complex64::new(0.0, 0.0); nl];
    let mut e = vec![[Complex64::new(0.0, 0.0); LINE_BLOCK]; d + 1];
    let mut diff = vec![0.0; d + 1];
    let mut offset = 0;
    for &(a, h, n) in &axis.segments {
        let mut start = 0;
        while start < n {
            // Rounding in the products grows like steps^d, so the difference
            // table is rebuilt from direct values every RESTART nodes.
            let stop = (start + RESTART).min(n);
            for (l, q) in qs.iter().enumerate() {
                for (k, v) in diff.iter_mut().enumerate() {
                    let z = a + ((start + k) as f64 + 0.5) * h;
                    *v = q.iter().rev().fold(0.0, |acc, &c| acc * z + c);
                }
                for order in 0..=d {
                    e[order][l] = Complex64::cis(diff[0]);
                    for k in 0..d - order {
                        diff[k] = diff[k + 1] - diff[k];
                    }
                }
            }
            for m in start..stop {
                let f = fz[offset + m];
                for l in 0..nl {
                    sums[l] += f * e[0][l];
                }
                for order in 0..d {
                    for l in 0..nl {
                        let next = e[order + 1][l];
                        e[order][l] *= next;
                    }
                }
            }
            start = stop;
        }
        offset += n;
    }
    sums
}

fn direct_lines(qs: &[Vec<f64>], z: &[f64], fz: &[Complex64]) -> Vec<Complex64> {
    qs.iter()
        .map(|q| {
            z.iter()
                .zip(fz)
                .map(|(&zz, &f)| f * Complex64::cis(q.iter().rev().fold(0.0, |acc, &c| acc * zz + c)))
                .sum()
        })
        .collect()
}

fn phase_variation(phase: &PhaseDescriptor, bounds: &[[f64; 2]]) -> f64 {
    (0..phase.dimension())
        .map(|j| phase.sampled_lipschitz(j, bounds, LIP_SAMPLES) * (bounds[j][1] - bounds[j][0]))
        .fold(0.0, f64::max)
}

fn check_resolution(lambda: f64, variation: f64, resolution: usize) -> Result<()> {
    let required = (10.0 * lambda.abs() * variation).ceil() as usize;
    if resolution < required.max(2) {
        return Err(Error::ResolutionTooLow { resolution, required });
    }
    Ok(())
}

/// Reference value of `T_λ^φ`: midpoint rule with `resolution` cells per
/// axis (cells aligned to breakpoints) and one Richardson step against half
/// the resolution. The reported delta is the Richardson correction.
pub fn eval_oracle_t3(phase: &PhaseDescriptor, fs: [&TestFunction1D; 3], lambda: f64, resolution: usize) -> Result<IntegralResult> {
    if phase.dimension() != 3 {
        return Err(Error::invalid("eval_oracle_t3 needs a three-dimensional phase"));
    }
    let domain = phase.domain();
    check_resolution(lambda, phase_variation(phase, domain), resolution)?;
    if lambda < 0.0 {
        let conj: Vec<TestFunction1D> = fs.iter().map(|f| f.conj()).collect();
        return eval_oracle_t3(phase, [&conj[0], &conj[1], &conj[2]], -lambda, resolution).map(|r| IntegralResult {
            lambda,
            ..r.conj()
        });
    }
    let pieces: Vec<Vec<[f64; 2]>> = (0..3).map(|j| active_pieces(fs[j], domain[j], true)).collect();
    if pieces.iter().any(|p| p.is_empty()) || fs.iter().any(|f| f.is_zero()) {
        return Ok(zero_result(lambda));
    }
    let bounds: Vec<[f64; 2]> = pieces.iter().map(|p| [p[0][0], p[p.len() - 1][1]]).collect();
    check_analytic(phase, &bounds)?;
    let axes: Vec<MidpointAxis> = pieces.iter().map(|p| MidpointAxis::new(p, resolution)).collect();
    let coarse_axes: Vec<MidpointAxis> = axes.iter().map(|a| a.halved()).collect();
    let fine = oracle_midpoint_t3(phase, &fs, &axes, lambda);
    let coarse = oracle_midpoint_t3(phase, &fs, &coarse_axes, lambda);
    let value = (4.0 * fine - coarse) / 3.0;
    let nodes = axes.iter().map(|a| a.len() as u64).product::<u64>() + coarse_axes.iter().map(|a| a.len() as u64).product::<u64>();
    Ok(IntegralResult {
        value,
        lambda,
        nodes_used: nodes,
        two_resolution_delta: (value - fine).norm(),
    })
}

/// Reference value of `S_λ`: uniform midpoint rule with one Richardson step.
pub fn eval_oracle_s2(
    psi: &PhaseDescriptor,
    maps: [&PhaseDescriptor; 3],
    fs: [&TestFunction1D; 3],
    lambda: f64,
    resolution: usize,
) -> Result<IntegralResult> {
    check_planar(psi, &maps)?;
    let bounds = psi.domain().to_vec();
    check_resolution(lambda, phase_variation(psi, &bounds), resolution)?;
    check_analytic(psi, &bounds)?;
    if fs.iter().any(|f| f.is_zero()) {
        return Ok(zero_result(lambda));
    }
    let r = resolution + resolution % 2;
    let midpoint = |n: usize| {
        let hx = (bounds[0][1] - bounds[0][0]) / n as f64;
        let hy = (bounds[1][1] - bounds[1][0]) / n as f64;
        let rows: Vec<Complex64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = bounds[0][0] + (i as f64 + 0.5) * hx;
                let row: Vec<Complex64> = (0..n)
                    .map(|j| {
                        let y = bounds[1][0] + (j as f64 + 0.5) * hy;
                        planar_integrand(psi, &maps, &fs, lambda, &[x, y])
                    })
                    .collect();
                pairwise_sum(&row)
            })
            .collect();
        pairwise_sum(&rows) * (hx * hy)
    };
    let fine = midpoint(r);
    let coarse = midpoint(r / 2);
    let value = (4.0 * fine - coarse) / 3.0;
    Ok(IntegralResult {
        value,
        lambda,
        nodes_used: (r * r + (r / 2) * (r / 2)) as u64,
        two_resolution_delta: (value - fine).norm(),
    })
}

/// Smallest even resolution accepted by the reference integrators for this
/// phase and λ, but never below `floor`.
pub fn oracle_resolution(phase: &PhaseDescriptor, lambda: f64, floor: usize) -> usize {
    let need = (10.0 * lambda.abs() * phase_variation(phase, phase.domain())).ceil() as usize;
    let r = need.max(floor).max(2);
    r + r % 2
}
