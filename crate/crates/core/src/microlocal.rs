//! Windowed Fourier decomposition of a function on `[0,1]` at scale λ.
//!
//! `[0,1]` is cut into `M = round(√λ)` intervals of length `1/M`. Each
//! interval carries a window `η_m` supported on the doubled interval, built
//! from a cosine/sine taper so that `Σ_m η_m² = 1` holds identically. The
//! product `f·η_m²` is expanded in a Fourier series of period `2/M`, i.e. on
//! the frequency lattice `πM·ℤ`. Coefficients above `λ^{-σ}·sup|f|` form the
//! structured part; everything else is the pseudorandom part.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition of `[0,1]` into `M` intervals with squared-taper windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpPartition {
    pub lambda: f64,
    pub intervals: usize,
    /// `C_k` with `sup|η_m^{(k)}| ≤ C_k λ^{k/2}`, `k = 0, 1, 2`.
    pub derivative_constants: [f64; 3],
}

pub fn build_partition(lambda: f64) -> Result<BumpPartition> {
    if !(lambda >= 4.0) || !lambda.is_finite() {
        return Err(Error::LambdaTooSmall(lambda));
    }
    let m = lambda.sqrt().round() as usize;
    let s = m as f64 / lambda.sqrt();
    // θ' ≤ π²M/4 and θ'' ≤ π³M²/4 for the taper angle below.
    let c1 = PI * PI / 4.0 * s;
    let c2 = (PI.powi(4) / 16.0 + PI.powi(3) / 4.0) * s * s;
    Ok(BumpPartition {
        lambda,
        intervals: m,
        derivative_constants: [1.0, c1, c2],
    })
}

impl BumpPartition {
    pub fn interval(&self, m: usize) -> [f64; 2] {
        let len = 1.0 / self.intervals as f64;
        [m as f64 * len, (m + 1) as f64 * len]
    }

    /// `I_m*`: the interval with the same center and twice the length.
    pub fn doubled_interval(&self, m: usize) -> [f64; 2] {
        let [a, b] = self.interval(m);
        let h = (b - a) / 2.0;
        [a - h, b + h]
    }

    /// Taper angle across the boundary `b`, rising from 0 to π/2 over
    /// `[b − δ, b + δ]` with `δ = 1/(2M)`.
    fn angle(&self, b: f64, x: f64) -> f64 {
        let delta = 0.5 / self.intervals as f64;
        let t = ((x - b) / delta).clamp(-1.0, 1.0);
        PI / 4.0 * (1.0 + (PI * t / 2.0).sin())
    }

    /// `η_m(x)`. The first and last windows stay at 1 beyond `[0,1]`.
    pub fn window(&self, m: usize, x: f64) -> f64 {
        let mm = self.intervals;
        let delta = 0.5 / mm as f64;
        let [a, b] = self.interval(m);
        if m > 0 && x < a + delta {
            if x <= a - delta {
                return 0.0;
            }
            return self.angle(a, x).sin();
        }
        if m + 1 < mm && x > b - delta {
            if x >= b + delta {
                return 0.0;
            }
            return self.angle(b, x).cos();
        }
        1.0
    }

    /// `Σ_m η_m(x)²`, identically 1 on `[0,1]` up to rounding.
    pub fn square_sum(&self, x: f64) -> f64 {
        let mm = self.intervals;
        let k = ((x * mm as f64).floor() as isize).clamp(0, mm as isize - 1) as usize;
        (k.saturating_sub(1)..(k + 2).min(mm))
            .map(|m| self.window(m, x).powi(2))
            .sum()
    }

    /// Lattice spacing `πM` of the frequencies.
    pub fn frequency_step(&self) -> f64 {
        PI * self.intervals as f64
    }
}

/// Minimum sample count `16·λ^{3/2}`.
pub fn min_samples(lambda: f64) -> usize {
    (16.0 * lambda.powf(1.5)).ceil() as usize
}

/// A sample count that satisfies [`min_samples`] and aligns every doubled
/// interval with the grid `x_i = i/(n−1)`.
pub fn aligned_sample_count(lambda: f64) -> Result<usize> {
    let p = build_partition(lambda)?;
    let step = 2 * p.intervals;
    let cells = (min_samples(lambda) - 1).div_ceil(step) * step;
    Ok(cells + 1)
}

/// Uniform grid `x_i = i/(n−1)` on `[0,1]`.
pub fn sample_grid(n: usize) -> Vec<f64> {
    let cells = (n - 1) as f64;
    (0..n).map(|i| i as f64 / cells).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub n: i64,
    /// `ξ = πM·n`
    pub xi: f64,
    pub value: Complex64,
}

/// Coefficients of `f·η_m²` on one doubled interval. The series is
/// `Σ_n c_n e^{iπMn(x − origin)}` where `origin` is the left end of `I_m*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalDecomposition {
    pub m: usize,
    pub origin: f64,
    /// Index of the first grid sample in the window (may be negative).
    pub start: i64,
    pub len: usize,
    pub kept: Vec<Coefficient>,
    pub residual: Vec<(i64, Complex64)>,
    /// Coefficients with `|ξ| > max_freq`, kept apart from both parts.
    pub tail: Vec<(i64, Complex64)>,
    /// Above-threshold coefficients moved to the residual by the cap.
    pub capped: usize,
    /// Window-normalised `‖f η_m‖²` on the samples.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub lambda: f64,
    pub sigma: f64,
    pub samples: usize,
    pub supnorm: f64,
    pub threshold: f64,
    pub cap: usize,
    pub max_freq: Option<f64>,
    pub intervals: Vec<IntervalDecomposition>,
    pub reconstruction_error: f64,
}

fn centered(k: usize, len: usize) -> i64 {
    if k < len / 2 {
        k as i64
    } else {
        k as i64 - len as i64
    }
}

/// Splits `f`, sampled on [`sample_grid`]`(f.len())`, into structured and
/// pseudorandom parts. `max_freq` moves lattice frequencies above it into a
/// separate tail.
pub fn decompose(f: &[Complex64], lambda: f64, sigma: f64, max_freq: Option<f64>) -> Result<Decomposition> {
    let partition = build_partition(lambda)?;
    if !(0.0..=0.5).contains(&sigma) {
        return Err(Error::invalid(format!("σ = {sigma} must lie in [0, 1/2]")));
    }
    let need = min_samples(lambda);
    if f.len() < need {
        return Err(Error::UnderSampled { have: f.len(), need });
    }
    let mm = partition.intervals;
    let cells = f.len() - 1;
    if cells % (2 * mm) != 0 {
        return Err(Error::invalid(format!(
            "{} samples do not align with {mm} intervals; use aligned_sample_count",
            f.len()
        )));
    }
    let per = cells / mm;
    let len = 2 * per;
    let grid = sample_grid(f.len());
    let supnorm = f.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let threshold = lambda.powf(-sigma) * supnorm;
    let cap = lambda.powf(2.0 * sigma).ceil() as usize;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let step = partition.frequency_step();
    let h = 1.0 / cells as f64;

    let intervals: Vec<IntervalDecomposition> = (0..mm)
        .into_par_iter()
        .map(|m| {
            let start = (m * per) as i64 - (per / 2) as i64;
            let mut buf = Vec::with_capacity(len);
            let mut energy = 0.0;
            for j in 0..len {
                let i = start + j as i64;
                let v = if (0..f.len() as i64).contains(&i) {
                    let iu = i as usize;
                    let eta = partition.window(m, grid[iu]);
                    energy += (f[iu] * eta).norm_sqr();
                    f[iu] * eta * eta
                } else {
                    Complex64::new(0.0, 0.0)
                };
                buf.push(v);
            }
            fft.process(&mut buf);
            let scale = 1.0 / len as f64;
            let mut above = Vec::new();
            let mut residual = Vec::new();
            let mut tail = Vec::new();
            for (k, c) in buf.into_iter().enumerate() {
                let n = centered(k, len);
                let c = c * scale;
                if max_freq.is_some_and(|mf| (n as f64 * step).abs() > mf) {
                    tail.push((n, c));
                } else if c.norm() > threshold {
                    above.push((n, c));
                } else {
                    residual.push((n, c));
                }
            }
            above.sort_by(|a, b| {
                b.1.norm()
                    .total_cmp(&a.1.norm())
                    .then(a.0.abs().cmp(&b.0.abs()))
                    .then(a.0.cmp(&b.0))
            });
            let capped = above.len().saturating_sub(cap);
            for (n, c) in above.drain(cap.min(above.len())..) {
                residual.push((n, c));
            }
            residual.sort_by_key(|p| p.0);
            tail.sort_by_key(|p| p.0);
            let kept = above
                .into_iter()
                .map(|(n, value)| Coefficient { n, xi: n as f64 * step, value })
                .collect();
            IntervalDecomposition {
                m,
                origin: start as f64 * h,
                start,
                len,
                kept,
                residual,
                tail,
                capped,
                energy: energy / len as f64,
            }
        })
        .collect();

    let mut d = Decomposition {
        lambda,
        sigma,
        samples: f.len(),
        supnorm,
        threshold,
        cap,
        max_freq,
        intervals,
        reconstruction_error: 0.0,
    };
    let rec = reconstruct(&d, &partition)?;
    d.reconstruction_error = rec
        .iter()
        .zip(f)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(d)
}

/// The three sampled components `g = Σ g_m`, `h = Σ h_m` and the tail.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub structured: Vec<Complex64>,
    pub pseudorandom: Vec<Complex64>,
    pub tail: Vec<Complex64>,
}

fn check_lambda(d: &Decomposition, p: &BumpPartition) -> Result<()> {
    if d.lambda != p.lambda {
        return Err(Error::MismatchedLambda {
            decomposition: d.lambda,
            partition: p.lambda,
        });
    }
    Ok(())
}

/// Synthesises one coefficient subset of every window back onto the grid.
fn synthesise<F>(d: &Decomposition, pick: F) -> Vec<Complex64>
where
    F: Fn(&IntervalDecomposition, &mut Vec<Complex64>) + Sync,
{
    let mut out = vec![Complex64::new(0.0, 0.0); d.samples];
    let Some(len) = d.intervals.first().map(|w| w.len) else {
        return out;
    };
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(len);
    let parts: Vec<(i64, Vec<Complex64>)> = d
        .intervals
        .par_iter()
        .map(|w| {
            let mut spec = vec![Complex64::new(0.0, 0.0); w.len];
            pick(w, &mut spec);
            ifft.process(&mut spec);
            (w.start, spec)
        })
        .collect();
    for (start, vals) in parts {
        for (j, v) in vals.into_iter().enumerate() {
            let i = start + j as i64;
            if (0..d.samples as i64).contains(&i) {
                out[i as usize] += v;
            }
        }
    }
    out
}

fn place(spec: &mut [Complex64], n: i64, c: Complex64) {
    let len = spec.len() as i64;
    spec[n.rem_euclid(len) as usize] += c;
}

pub fn components(d: &Decomposition, partition: &BumpPartition) -> Result<Components> {
    check_lambda(d, partition)?;
    Ok(Components {
        structured: synthesise(d, |w, s| {
            for c in &w.kept {
                place(s, c.n, c.value);
            }
        }),
        pseudorandom: synthesise(d, |w, s| {
            for &(n, c) in &w.residual {
                place(s, n, c);
            }
        }),
        tail: synthesise(d, |w, s| {
            for &(n, c) in &w.tail {
                place(s, n, c);
            }
        }),
    })
}

/// `Σ_m (g_m + h_m)` plus the tail, on the sample grid.
pub fn reconstruct(d: &Decomposition, partition: &BumpPartition) -> Result<Vec<Complex64>> {
    check_lambda(d, partition)?;
    Ok(synthesise(d, |w, s| {
        for c in &w.kept {
            place(s, c.n, c.value);
        }
        for &(n, c) in w.residual.iter().chain(&w.tail) {
            place(s, n, c);
        }
    }))
}

/// Per-interval energy split, for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEnergy {
    pub m: usize,
    pub kept: usize,
    pub structured: f64,
    pub pseudorandom: f64,
    pub tail: f64,
    pub max_residual: f64,
    pub window_energy: f64,
}

pub fn energy_report(d: &Decomposition) -> Vec<IntervalEnergy> {
    d.intervals
        .iter()
        .map(|w| IntervalEnergy {
            m: w.m,
            kept: w.kept.len(),
            structured: w.kept.iter().map(|c| c.value.norm_sqr()).sum(),
            pseudorandom: w.residual.iter().map(|c| c.1.norm_sqr()).sum(),
            tail: w.tail.iter().map(|c| c.1.norm_sqr()).sum(),
            max_residual: w.residual.iter().map(|c| c.1.norm()).fold(0.0, f64::max),
            window_energy: w.energy,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, f: impl Fn(f64) -> Complex64) -> Vec<Complex64> {
        sample_grid(n).into_iter().map(f).collect()
    }

    #[test]
    fn partition_of_unity() {
        let p = build_partition(64.0).unwrap();
        assert_eq!(p.intervals, 8);
        assert_eq!(p.interval(3), [3.0 / 8.0, 4.0 / 8.0]);
        let worst = (0..=10_000)
            .map(|i| (p.square_sum(i as f64 / 10_000.0) - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12, "{worst}");
        assert_eq!(build_partition(1.0), Err(Error::LambdaTooSmall(1.0)));
    }

    #[test]
    fn window_derivatives_respect_constants() {
        let p = build_partition(100.0).unwrap();
        let h = 1e-5;
        let (mut d1, mut d2) = (0.0f64, 0.0f64);
        for i in 1..20_000 {
            let x = i as f64 / 20_000.0;
            let (a, b, c) = (p.window(4, x - h), p.window(4, x), p.window(4, x + h));
            d1 = d1.max(((c - a) / (2.0 * h)).abs());
            d2 = d2.max(((c - 2.0 * b + a) / (h * h)).abs());
        }
        assert!(d1 <= p.derivative_constants[1] * 10.0 * 1.0001);
        assert!(d2 <= p.derivative_constants[2] * 100.0 * 1.01);
    }

    #[test]
    fn constant_function_round_trips() {
        let n = aligned_sample_count(256.0).unwrap();
        let f = sample(n, |_| Complex64::new(1.0, 0.0));
        let d = decompose(&f, 256.0, 0.25, None).unwrap();
        assert_eq!(d.cap, 16);
        assert!(d.reconstruction_error <= 1e-8);
        assert!(d.intervals.iter().all(|w| w.kept.len() <= 16));
    }

    #[test]
    fn sigma_zero_keeps_nothing() {
        let n = aligned_sample_count(64.0).unwrap();
        let f = sample(n, |x| Complex64::from_polar(1.0, 40.0 * x * x));
        let d = decompose(&f, 64.0, 0.0, None).unwrap();
        assert!(d.intervals.iter().all(|w| w.kept.is_empty()));
    }

    #[test]
    fn errors() {
        let f = vec![Complex64::new(1.0, 0.0); 100];
        assert!(matches!(decompose(&f, 64.0, 0.25, None), Err(Error::UnderSampled { .. })));
        let n = aligned_sample_count(64.0).unwrap();
        let f = vec![Complex64::new(1.0, 0.0); n];
        let d = decompose(&f, 64.0, 0.25, None).unwrap();
        let other = build_partition(81.0).unwrap();
        assert!(matches!(reconstruct(&d, &other), Err(Error::MismatchedLambda { .. })));
    }

    #[test]
    fn max_freq_moves_high_frequencies_to_tail() {
        let n = aligned_sample_count(64.0).unwrap();
        let step = PI * 8.0;
        let f = sample(n, |x| Complex64::from_polar(1.0, 20.0 * step * x));
        let d = decompose(&f, 64.0, 0.25, Some(10.0 * step)).unwrap();
        let p = build_partition(64.0).unwrap();
        let c = components(&d, &p).unwrap();
        let tail = c.tail.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(tail > 0.9);
        assert!(d.reconstruction_error <= 1e-10);
    }
}
