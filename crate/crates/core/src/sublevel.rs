//! Sublevel sets of residual systems and the quantities that bound them.
//!
//! A [`SublevelSystem`] is a vector residual on a box; a point belongs to the
//! sublevel set when every component satisfies `|R_i| ≤ ε`. Measures are
//! estimated by counter-keyed Monte Carlo (reproducible for any thread
//! count) or by a midpoint grid count. The module also carries the
//! multiprogression construction, whose sublevel set has measure of order
//! `ε^{1/2}`, the value-concentration modulus and the negative-order Sobolev
//! energy of `1_I e^{iλf}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::fit_line;
use crate::phasekit::{for_each_grid_point, PhaseDescriptor};

/// Gradients and mixed partials below this are treated as vanishing.
pub const MARGIN: f64 = 1e-9;
/// Per-axis samples for precondition checks on a box.
const CHECK_GRID: usize = 17;
/// Monte Carlo samples per RNG stream.
const CHUNK: usize = 8192;

/// Piecewise affine function on an interval: piece `i` covers
/// `[breaks[i], breaks[i+1])` with value `value + slope·(x − breaks[i])`.
/// Staircases have zero slopes. Arguments outside the domain are clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl StepFunction {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if breaks.len() < 2 || values.len() + 1 != breaks.len() || slopes.len() != values.len() {
            return Err(Error::invalid("step function needs n+1 breaks for n pieces"));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("step function breaks must be finite and increasing"));
        }
        Ok(StepFunction { breaks, values, slopes })
    }

    pub fn staircase(domain: [f64; 2], values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::invalid("staircase needs at least one step"));
        }
        if !(domain[0] < domain[1]) {
            return Err(Error::EmptyInterval { lo: domain[0], hi: domain[1] });
        }
        let w = (domain[1] - domain[0]) / n as f64;
        let mut breaks: Vec<f64> = (0..=n).map(|i| domain[0] + i as f64 * w).collect();
        breaks[n] = domain[1];
        StepFunction::new(breaks, values, vec![0.0; n])
    }

    pub fn constant(domain: [f64; 2], value: f64) -> Result<Self> {
        StepFunction::staircase(domain, vec![value])
    }

    /// `a + b·x` on `domain`, a single sloped piece.
    pub fn affine(domain: [f64; 2], a: f64, b: f64) -> Result<Self> {
        StepFunction::new(domain.to_vec(), vec![a + b * domain[0]], vec![b])
    }

    /// `steps` equal steps with values drawn uniformly from `range`.
    pub fn random_staircase(domain: [f64; 2], steps: usize, range: [f64; 2], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..steps).map(|_| rng.gen_range(range[0]..range[1])).collect();
        StepFunction::staircase(domain, values)
    }

    /// Linear interpolant of `f` on `pieces` equal cells.
    pub fn interpolant(domain: [f64; 2], pieces: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if pieces == 0 || !(domain[0] < domain[1]) {
            return Err(Error::EmptyInterval { lo: domain[0], hi: domain[1] });
        }
        let w = (domain[1] - domain[0]) / pieces as f64;
        let mut breaks: Vec<f64> = (0..=pieces).map(|i| domain[0] + i as f64 * w).collect();
        breaks[pieces] = domain[1];
        let vals: Vec<f64> = breaks.iter().map(|&x| f(x)).collect();
        let slopes = (0..pieces).map(|i| (vals[i + 1] - vals[i]) / (breaks[i + 1] - breaks[i])).collect();
        StepFunction::new(breaks, vals[..pieces].to_vec(), slopes)
    }

    /// Staircase taking `f` at the midpoint of each of `steps` cells.
    pub fn sampled(domain: [f64; 2], steps: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let w = (domain[1] - domain[0]) / steps as f64;
        let values = (0..steps).map(|i| f(domain[0] + (i as f64 + 0.5) * w)).collect();
        StepFunction::staircase(domain, values)
    }

    pub fn domain(&self) -> [f64; 2] {
        [self.breaks[0], self.breaks[self.breaks.len() - 1]]
    }

    pub fn pieces(&self) -> usize {
        self.values.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let [lo, hi] = self.domain();
        let x = x.clamp(lo, hi);
        let i = self.breaks.partition_point(|&b| b <= x).clamp(1, self.values.len()) - 1;
        self.values[i] + self.slopes[i] * (x - self.breaks[i])
    }

    pub fn max_slope(&self) -> f64 {
        self.slopes.iter().map(|s| s.abs()).fold(0.0, f64::max)
    }

    /// `(lo, hi, value at lo, slope)` for each piece.
    pub fn piece_list(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        (0..self.values.len()).map(|i| (self.breaks[i], self.breaks[i + 1], self.values[i], self.slopes[i]))
    }
}

/// `sup_t |{x : |f(x) − t| ≤ r}|` over the domain of `f`.
pub fn value_concentration(f: &StepFunction, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("r = {r} must be positive")));
    }
    if f.slopes.iter().all(|&s| s == 0.0) {
        // Sliding window of width 2r over the sorted step values.
        let mut steps: Vec<(f64, f64)> = f.piece_list().map(|(a, b, v, _)| (v, b - a)).collect();
        steps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut best, mut acc, mut lo) = (0.0f64, 0.0, 0);
        for hi in 0..steps.len() {
            acc += steps[hi].1;
            while steps[hi].0 - steps[lo].0 > 2.0 * r {
                acc -= steps[lo].1;
                lo += 1;
            }
            best = best.max(acc);
        }
        return Ok(best);
    }
    // The measure is piecewise linear in t with kinks at piece endpoint
    // values ± r, so its supremum is attained at one of those.
    let measure = |t: f64| -> f64 {
        f.piece_list()
            .map(|(a, b, v, s)| {
                if s == 0.0 {
                    if (v - t).abs() <= r { b - a } else { 0.0 }
                } else {
                    let w = v + s * (b - a);
                    let (vlo, vhi) = (v.min(w), v.max(w));
                    let overlap = (vhi.min(t + r) - vlo.max(t - r)).max(0.0);
                    overlap / s.abs()
                }
            })
            .sum()
    };
    let mut best = 0.0f64;
    for (a, b, v, s) in f.piece_list() {
        for end in [v, v + s * (b - a)] {
            best = best.max(measure(end - r)).max(measure(end + r));
        }
    }
    Ok(best)
}

type Residual = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Residual system on a box. Membership is `|R_i(x)| ≤ ε` for every `i`.
#[derive(Clone)]
pub struct SublevelSystem {
    residual: Arc<Residual>,
    components: usize,
    domain: Vec<[f64; 2]>,
    eps: f64,
}

impl fmt::Debug for SublevelSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SublevelSystem")
            .field("components", &self.components)
            .field("domain", &self.domain)
            .field("eps", &self.eps)
            .finish()
    }
}

impl SublevelSystem {
    pub fn new(
        components: usize,
        domain: Vec<[f64; 2]>,
        eps: f64,
        residual: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::invalid(format!("ε = {eps} must be positive")));
        }
        if !(2..=3).contains(&domain.len()) {
            return Err(Error::invalid("sublevel domains are 2D or 3D boxes"));
        }
        if let Some(b) = domain.iter().find(|b| !(b[0] < b[1])) {
            return Err(Error::EmptyInterval { lo: b[0], hi: b[1] });
        }
        Ok(SublevelSystem {
            residual: Arc::new(residual),
            components,
            domain,
            eps,
        })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::invalid(format!("ε = {eps} must be positive")));
        }
        Ok(SublevelSystem { eps, ..self.clone() })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn domain(&self) -> &[[f64; 2]] {
        &self.domain
    }

    pub fn volume(&self) -> f64 {
        self.domain.iter().map(|b| b[1] - b[0]).product()
    }

    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components];
        (self.residual)(x, &mut out);
        out
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let mut out = [0.0f64; 4];
        let out = &mut out[..self.components.min(4)];
        if self.components > 4 {
            return self.residual(x).iter().all(|r| r.abs() <= self.eps);
        }
        (self.residual)(x, out);
        out.iter().all(|r| r.abs() <= self.eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureMethod {
    MonteCarlo,
    Grid,
    ExactBlocks,
}

impl MeasureMethod {
    fn as_str(self) -> &'static str {
        match self {
            MeasureMethod::MonteCarlo => "monte_carlo",
            MeasureMethod::Grid => "grid",
            MeasureMethod::ExactBlocks => "exact_blocks",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub estimate: f64,
    pub half_width_95: f64,
    pub samples: u64,
    pub method: MeasureMethod,
}

impl MeasureEstimate {
    /// Standard error implied by the 95% half width.
    pub fn sigma(&self) -> f64 {
        self.half_width_95 / 1.96
    }
}

/// Monte Carlo measure of the sublevel set. Sample `i` is drawn from the
/// ChaCha8 stream `i / 8192` keyed by `seed`, so the estimate does not
/// depend on scheduling.
pub fn estimate_measure(sys: &SublevelSystem, n_samples: u64, seed: u64) -> Result<MeasureEstimate> {
    if n_samples < 1000 {
        return Err(Error::invalid(format!("{n_samples} samples, at least 1000 required")));
    }
    let chunks = n_samples.div_ceil(CHUNK as u64);
    let dim = sys.domain.len();
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let count = (n_samples - c * CHUNK as u64).min(CHUNK as u64);
            let mut x = [0.0f64; 3];
            let mut hits = 0u64;
            for _ in 0..count {
                for (xi, b) in x.iter_mut().zip(&sys.domain) {
                    *xi = b[0] + (b[1] - b[0]) * rng.gen::<f64>();
                }
                hits += u64::from(sys.contains(&x[..dim]));
            }
            hits
        })
        .sum();
    let p = hits as f64 / n_samples as f64;
    let vol = sys.volume();
    Ok(MeasureEstimate {
        estimate: p * vol,
        half_width_95: 1.96 * (p * (1.0 - p) / n_samples as f64).sqrt() * vol,
        samples: n_samples,
        method: MeasureMethod::MonteCarlo,
    })
}

/// Midpoint count on a grid of `cells` per axis. No confidence width is
/// attached, so `half_width_95` is 0.
pub fn grid_measure(sys: &SublevelSystem, cells: usize) -> Result<MeasureEstimate> {
    if cells == 0 {
        return Err(Error::invalid("grid needs at least one cell per axis"));
    }
    let dim = sys.domain.len();
    let d = &sys.domain;
    let coord = |axis: usize, i: usize| d[axis][0] + (d[axis][1] - d[axis][0]) * (i as f64 + 0.5) / cells as f64;
    let hits: u64 = (0..cells)
        .into_par_iter()
        .map(|i| {
            let mut x = [coord(0, i), 0.0, 0.0];
            let mut hits = 0u64;
            for j in 0..cells {
                x[1] = coord(1, j);
                if dim == 2 {
                    hits += u64::from(sys.contains(&x[..2]));
                } else {
                    for k in 0..cells {
                        x[2] = coord(2, k);
                        hits += u64::from(sys.contains(&x));
                    }
                }
            }
            hits
        })
        .sum();
    let total = (cells as u64).pow(dim as u32);
    Ok(MeasureEstimate {
        estimate: hits as f64 / total as f64 * sys.volume(),
        half_width_95: 0.0,
        samples: total,
        method: MeasureMethod::Grid,
    })
}

fn check_partials(phase: &PhaseDescriptor, bounds: &[[f64; 2]], pairs: &[&[usize]], mixed: bool) -> Result<()> {
    let mut bad = None;
    for_each_grid_point(bounds, CHECK_GRID, |x| {
        if bad.is_none() && pairs.iter().any(|p| phase.mixed(p, x).abs() < MARGIN) {
            bad = Some(x.to_vec());
        }
    });
    match bad {
        None => Ok(()),
        Some(at) if mixed => Err(Error::DegenerateMixedPartial { at }),
        Some(at) => Err(Error::DegenerateGradient { at }),
    }
}

fn require_dim(phase: &PhaseDescriptor, dim: usize) -> Result<()> {
    if phase.dimension() != dim {
        return Err(Error::invalid(format!(
            "expected a {dim}-dimensional phase, got dimension {}",
            phase.dimension()
        )));
    }
    Ok(())
}

/// `|h1(x) + φ_x h3(φ) + ψ_x| ≤ ε` and `|h2(y) + φ_y h3(φ) + ψ_y| ≤ ε`.
pub fn system_9_1(
    phi: &PhaseDescriptor,
    psi: &PhaseDescriptor,
    h: [StepFunction; 3],
    domain: [[f64; 2]; 2],
    eps: f64,
) -> Result<SublevelSystem> {
    require_dim(phi, 2)?;
    require_dim(psi, 2)?;
    check_partials(phi, &domain, &[&[0], &[1]], false)?;
    let (phi, psi) = (phi.clone(), psi.clone());
    let [h1, h2, h3] = h;
    SublevelSystem::new(2, domain.to_vec(), eps, move |x, out| {
        let t = h3.eval(phi.partial_unchecked(&[0, 0], x));
        out[0] = h1.eval(x[0]) + phi.axis_partial(0, 1, x) * t + psi.axis_partial(0, 1, x);
        out[1] = h2.eval(x[1]) + phi.axis_partial(1, 1, x) * t + psi.axis_partial(1, 1, x);
    })
}

/// `|∂_jφ(x) − h_j(x_j)| ≤ ε` for `j = 1, 2, 3`. All mixed second partials
/// must be nonvanishing on the box.
pub fn system_12(phi: &PhaseDescriptor, h: [StepFunction; 3], domain: [[f64; 2]; 3], eps: f64) -> Result<SublevelSystem> {
    require_dim(phi, 3)?;
    check_partials(phi, &domain, &[&[0, 1], &[0, 2], &[1, 2]], true)?;
    let phi = phi.clone();
    SublevelSystem::new(3, domain.to_vec(), eps, move |x, out| {
        for (j, hj) in h.iter().enumerate() {
            out[j] = phi.axis_partial(j, 1, x) - hj.eval(x[j]);
        }
    })
}

/// Coefficient of a scalar sublevel expression.
#[derive(Debug, Clone)]
pub enum Coefficient {
    Constant(f64),
    Phase(PhaseDescriptor),
}

impl Coefficient {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Phase(p) => p.partial_unchecked(&[0, 0], x),
        }
    }
}

/// `|Σ_j a_j(x) f_j(φ_j(x))| ≤ ε` on a planar box; each `φ_j` must be a
/// submersion there.
pub fn scalar_sublevel(
    a: [Coefficient; 3],
    maps: [PhaseDescriptor; 3],
    f: [StepFunction; 3],
    domain: [[f64; 2]; 2],
    eps: f64,
) -> Result<SublevelSystem> {
    for (j, m) in maps.iter().enumerate() {
        require_dim(m, 2)?;
        if let Coefficient::Phase(p) = &a[j] {
            require_dim(p, 2)?;
        }
        let mut bad = None;
        for_each_grid_point(&domain, CHECK_GRID, |x| {
            if bad.is_none() && m.axis_partial(0, 1, x).hypot(m.axis_partial(1, 1, x)) < MARGIN {
                bad = Some(x.to_vec());
            }
        });
        if let Some(at) = bad {
            return Err(Error::DegenerateGradient { at });
        }
    }
    SublevelSystem::new(1, domain.to_vec(), eps, move |x, out| {
        out[0] = (0..3)
            .map(|j| a[j].eval(x) * f[j].eval(maps[j].partial_unchecked(&[0, 0], x)))
            .sum();
    })
}

/// Result of [`hsigma_chirp_energy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsigmaEnergy {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// `‖1_I e^{iλf}‖²_{H^σ}` with `ĝ(ξ) = ∫ g(x) e^{-ixξ} dx` and weight
/// `(1+ξ²)^σ`, from an `m`-point DFT on a box of twice the length of `I`.
pub fn hsigma_norm_sq(f: &StepFunction, lambda: f64, sigma: f64, m: usize) -> f64 {
    let [lo, hi] = f.domain();
    let len = hi - lo;
    let box_len = 2.0 * len;
    let start = lo - len / 2.0;
    let h = box_len / m as f64;
    let mut buf: Vec<Complex64> = (0..m)
        .map(|j| {
            let x = start + (j as f64 + 0.5) * h;
            if (lo..hi).contains(&x) {
                Complex64::from_polar(1.0, lambda * f.eval(x))
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut buf);
    let dxi = 2.0 * PI / box_len;
    buf.iter()
        .enumerate()
        .map(|(k, c)| {
            let kk = if k < m / 2 { k as f64 } else { k as f64 - m as f64 };
            let xi = kk * dxi;
            (1.0 + xi * xi).powf(sigma) * (h * c.norm()).powi(2) * dxi
        })
        .sum()
}

/// Left and right sides of `∫_0^A ‖1_I e^{iλf}‖²_{H^σ} dλ ≲ A·VC(f, 1/A)^{|σ|}`
/// where `I` is the domain of `f`. The left side uses the trapezoid rule on
/// 64 equally spaced λ.
pub fn hsigma_chirp_energy(f: &StepFunction, sigma: f64, a: f64, m: usize) -> Result<HsigmaEnergy> {
    if m < 4096 {
        return Err(Error::invalid(format!("DFT size {m} below 4096")));
    }
    if !(-1.0..=-0.05).contains(&sigma) {
        return Err(Error::invalid(format!("σ = {sigma} outside [-1, -0.05]")));
    }
    if !(a > 0.0) {
        return Err(Error::invalid(format!("A = {a} must be positive")));
    }
    let [lo, hi] = f.domain();
    let lip = f.max_slope();
    let limit = if lip > 0.0 { m as f64 / (20.0 * (hi - lo) * lip) } else { f64::INFINITY };
    if a > limit {
        return Err(Error::UnderResolved { a, limit });
    }
    const NODES: usize = 64;
    let vals: Vec<f64> = (0..NODES)
        .into_par_iter()
        .map(|i| hsigma_norm_sq(f, a * i as f64 / (NODES - 1) as f64, sigma, m))
        .collect();
    let w = a / (NODES - 1) as f64;
    let lhs = w * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[NODES - 1]));
    let rhs = a * value_concentration(f, 1.0 / a)?.powf(sigma.abs());
    Ok(HsigmaEnergy { lhs, rhs, ratio: lhs / rhs })
}

/// The rank-2 multiprogression construction for the triple of maps
/// `x`, `y`, `x + y` on `[0,1]²`, with `s = ε^{1/2}` and `N = 1/s`:
///
/// * `f(x) = ks − x` for `|x − ks| < s/2`,
/// * `g(y) = ks + kε` for `|y − ks| < s/2`,
/// * `h(t) = ns + nε` for `|t − (ks + nε)| < ε/2`, `0 ≤ n < N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiprogressionWitness {
    pub eps: f64,
    pub n: u64,
}

pub fn build_multiprogression_witness(eps: f64) -> Result<MultiprogressionWitness> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("ε = {eps} must be positive")));
    }
    let n = (1.0 / eps.sqrt()).round();
    if ((n * n * eps) - 1.0).abs() > 1e-12 {
        return Err(Error::NonSquareInverse(eps));
    }
    if eps > 1.0 / 16.0 {
        return Err(Error::invalid(format!("ε = {eps} exceeds 1/16")));
    }
    Ok(MultiprogressionWitness { eps, n: n as u64 })
}

/// One affine piece `value(x) = offset + slope·x` on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub lo: f64,
    pub hi: f64,
    pub offset: f64,
    pub slope: f64,
}

/// Closed block `E(m,n)`: a square cut by the diagonal strip, as a convex
/// polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub m: i64,
    pub n: u64,
    pub vertices: Vec<[f64; 2]>,
    pub area: f64,
}

impl MultiprogressionWitness {
    pub fn sqrt_eps(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn f(&self, x: f64) -> f64 {
        let s = self.sqrt_eps();
        (x / s).round() * s - x
    }

    pub fn g(&self, y: f64) -> f64 {
        let k = (y * self.n as f64).round();
        self.progression(k)
    }

    pub fn h(&self, t: f64) -> f64 {
        let j = (t / self.eps).round() as i64;
        self.progression(j.rem_euclid(self.n as i64) as f64)
    }

    fn progression(&self, k: f64) -> f64 {
        k * self.sqrt_eps() + k * self.eps
    }

    /// Residuals `g(y) − h(x+y)` and `y − f(x) − h(x+y)`.
    pub fn residuals(&self, x: f64, y: f64) -> [f64; 2] {
        let ht = self.h(x + y);
        [self.g(y) - ht, y - self.f(x) - ht]
    }

    /// The two-inequality sublevel system on `[0,1]²` at tolerance `eps`.
    pub fn system(&self, eps: f64) -> Result<SublevelSystem> {
        let w = *self;
        SublevelSystem::new(2, vec![[0.0, 1.0]; 2], eps, move |x, out| {
            let r = w.residuals(x[0], x[1]);
            out[0] = r[0];
            out[1] = r[1];
        })
    }

    fn pieces_on(&self, lo: f64, hi: f64, width: f64, centers: impl Fn(i64) -> f64, piece: impl Fn(i64) -> (f64, f64)) -> Vec<AffinePiece> {
        let first = (lo / width).floor() as i64 - 1;
        let last = (hi / width).ceil() as i64 + 1;
        (first..=last)
            .filter_map(|k| {
                let c = centers(k);
                let (a, b) = ((c - width / 2.0).max(lo), (c + width / 2.0).min(hi));
                (a < b).then(|| {
                    let (offset, slope) = piece(k);
                    AffinePiece { lo: a, hi: b, offset, slope }
                })
            })
            .collect()
    }

    /// Ramps of `f` restricted to `[0,1]`; the end pieces are halves.
    pub fn f_pieces(&self) -> Vec<AffinePiece> {
        let s = self.sqrt_eps();
        self.pieces_on(0.0, 1.0, s, |k| k as f64 * s, |k| (k as f64 * s, -1.0))
    }

    pub fn g_pieces(&self) -> Vec<AffinePiece> {
        let s = self.sqrt_eps();
        self.pieces_on(0.0, 1.0, s, |k| k as f64 * s, |k| (self.progression(k as f64), 0.0))
    }

    /// Steps of `h` on `[0,2]`, the range of `x + y`.
    pub fn h_pieces(&self) -> Vec<AffinePiece> {
        let n = self.n as i64;
        self.pieces_on(0.0, 2.0, self.eps, |j| j as f64 * self.eps, |j| (self.progression(j.rem_euclid(n) as f64), 0.0))
    }

    /// `E(m,n)` clipped exactly: the square of side `s` centred at
    /// `((m−n)s, ns)` intersected with `|x + y − (ms + nε)| ≤ ε/2`.
    pub fn block(&self, m: i64, n: u64) -> Block {
        let s = self.sqrt_eps();
        let (cx, cy) = ((m - n as i64) as f64 * s, n as f64 * s);
        let c = m as f64 * s + n as f64 * self.eps;
        let square = vec![
            [cx - s / 2.0, cy - s / 2.0],
            [cx + s / 2.0, cy - s / 2.0],
            [cx + s / 2.0, cy + s / 2.0],
            [cx - s / 2.0, cy + s / 2.0],
        ];
        let poly = clip(&square, [1.0, 1.0], c + self.eps / 2.0);
        let poly = clip(&poly, [-1.0, -1.0], -(c - self.eps / 2.0));
        let area = shoelace(&poly);
        Block { m, n, vertices: poly, area }
    }

    /// All blocks contained in `[0,1]²`.
    pub fn blocks(&self) -> Vec<Block> {
        let big_n = self.n as i64;
        let mut out = Vec::new();
        for n in 0..self.n {
            for m in (n as i64 - 1)..=(n as i64 + big_n + 1) {
                let b = self.block(m, n);
                let inside = !b.vertices.is_empty()
                    && b.vertices.iter().all(|v| v.iter().all(|&c| (0.0..=1.0).contains(&c)));
                if inside {
                    out.push(b);
                }
            }
        }
        out
    }
}

/// Keeps the part of the convex polygon with `a·p ≤ b`.
fn clip(poly: &[[f64; 2]], a: [f64; 2], b: f64) -> Vec<[f64; 2]> {
    let side = |p: &[f64; 2]| a[0] * p[0] + a[1] * p[1] - b;
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sp, sq) = (side(&p), side(&q));
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

fn shoelace(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Points of a block pulled slightly towards its centroid, so the step
/// functions are evaluated strictly inside the open block.
fn probe_points(b: &Block) -> Vec<[f64; 2]> {
    let k = b.vertices.len() as f64;
    let c = b
        .vertices
        .iter()
        .fold([0.0, 0.0], |acc, v| [acc[0] + v[0] / k, acc[1] + v[1] / k]);
    let pull = 1e-6;
    let mut pts: Vec<[f64; 2]> = b
        .vertices
        .iter()
        .map(|v| [v[0] + pull * (c[0] - v[0]), v[1] + pull * (c[1] - v[1])])
        .collect();
    pts.push(c);
    pts
}

fn block_member(w: &MultiprogressionWitness, p: [f64; 2]) -> bool {
    let [r1, r2] = w.residuals(p[0], p[1]);
    r1 == 0.0 && r2.abs() < w.eps / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiprogressionMeasure {
    pub eps: f64,
    /// Sum of the exact areas of the verified blocks.
    pub lower: f64,
    pub block_count: usize,
    /// Blocks inside `[0,1]²` whose probe points failed membership.
    pub rejected: usize,
    pub min_block: f64,
    pub max_block: f64,
}

/// Lower bound for the sublevel measure from the disjoint blocks
/// `E(m,n) ⊂ [0,1]²`, each verified at its vertices and centroid.
pub fn multiprogression_measure(w: &MultiprogressionWitness) -> MultiprogressionMeasure {
    let blocks = w.blocks();
    let (good, bad): (Vec<&Block>, Vec<&Block>) = blocks
        .iter()
        .partition(|b| probe_points(b).into_iter().all(|p| block_member(w, p)));
    let areas = good.iter().map(|b| b.area);
    MultiprogressionMeasure {
        eps: w.eps,
        lower: areas.clone().sum(),
        block_count: good.len(),
        rejected: bad.len(),
        min_block: areas.clone().fold(f64::INFINITY, f64::min),
        max_block: areas.fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipCheck {
    pub samples: u64,
    pub failures: u64,
    pub max_abs_r1: f64,
    pub max_abs_r2: f64,
}

/// Draws `samples` uniform points from uniformly chosen blocks and checks
/// `g(y) − h(x+y) = 0` and `|y − f(x) − h(x+y)| < ε/2` at each.
pub fn sample_block_membership(w: &MultiprogressionWitness, samples: u64, seed: u64) -> MembershipCheck {
    let blocks = w.blocks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = MembershipCheck {
        samples,
        failures: 0,
        max_abs_r1: 0.0,
        max_abs_r2: 0.0,
    };
    if blocks.is_empty() {
        return check;
    }
    for _ in 0..samples {
        let b = &blocks[rng.gen_range(0..blocks.len())];
        let (xmin, xmax, ymin, ymax) = b.vertices.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |a, v| (a.0.min(v[0]), a.1.max(v[0]), a.2.min(v[1]), a.3.max(v[1])),
        );
        let c = b.m as f64 * w.sqrt_eps() + b.n as f64 * w.eps;
        let p = loop {
            let p = [rng.gen_range(xmin..xmax), rng.gen_range(ymin..ymax)];
            if (p[0] + p[1] - c).abs() < w.eps / 2.0 {
                break p;
            }
        };
        let [r1, r2] = w.residuals(p[0], p[1]);
        check.max_abs_r1 = check.max_abs_r1.max(r1.abs());
        check.max_abs_r2 = check.max_abs_r2.max(r2.abs());
        if !block_member(w, p) {
            check.failures += 1;
        }
    }
    check
}

/// Value to use for `est` in a log-log fit. A Monte Carlo run with no hits
/// is replaced by the rule-of-three bound `3·volume/n`.
pub fn fit_value(est: &MeasureEstimate, volume: f64) -> f64 {
    if est.estimate > 0.0 || est.method != MeasureMethod::MonteCarlo {
        est.estimate
    } else {
        3.0 * volume / est.samples as f64
    }
}

/// Least-squares exponent of `measure ≈ C ε^ϱ`.
pub fn fitted_exponent(points: &[(f64, f64)]) -> Option<f64> {
    if points.iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    fit_line(&xs, &ys).map(|f| f.slope)
}

/// One line of a measure table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureRow {
    pub eps: f64,
    pub estimate: f64,
    pub ci95: f64,
    pub method: MeasureMethod,
    pub seed: u64,
}

pub const MEASURE_CSV_HEADER: &str = "eps,estimate,ci95,method,seed";

pub fn measure_csv(rows: &[MeasureRow]) -> String {
    let mut out = String::from(MEASURE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.eps,
            r.estimate,
            r.ci95,
            r.method.as_str(),
            r.seed
        ));
    }
    out
}

pub fn parse_measure_csv(text: &str) -> Result<Vec<MeasureRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(MEASURE_CSV_HEADER) {
        return Err(Error::invalid("missing measure CSV header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(Error::invalid(format!("bad measure CSV row `{line}`")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::invalid(format!("bad number `{s}`")));
            let method = match cols[3] {
                "monte_carlo" => MeasureMethod::MonteCarlo,
                "grid" => MeasureMethod::Grid,
                "exact_blocks" => MeasureMethod::ExactBlocks,
                other => return Err(Error::invalid(format!("unknown method `{other}`"))),
            };
            Ok(MeasureRow {
                eps: num(cols[0])?,
                estimate: num(cols[1])?,
                ci95: num(cols[2])?,
                method,
                seed: cols[4].parse().map_err(|_| Error::invalid(format!("bad seed `{}`", cols[4])))?,
            })
        })
        .collect()
}
