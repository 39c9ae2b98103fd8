//! λ-ladder experiments and log-log decay fits.
//!
//! A witness rule is data: for each axis a named constructor whose
//! parameters are scaled by λ at build time. That keeps experiments
//! serializable and lets a ladder rebuild its test functions per rung.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::fit_line;
use crate::oscquad::{eval_s2, eval_t3, IntegralResult, QuadConfig};
use crate::phasekit::{registry_get, PhaseDescriptor};
use crate::witnesses::{make_chirp, make_indicator, make_log_chirp, TestFunction1D};

pub const DEFAULT_TAIL: usize = 4;

/// One axis of a witness rule. Oscillating kinds are given per unit λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AxisWitness {
    /// Indicator of the whole integration interval.
    One,
    Indicator { lo: f64, hi: f64 },
    /// Indicator of `[lo, lo + scale·λ^{-power}]`.
    ShrinkingIndicator { lo: f64, scale: f64, power: f64 },
    /// `e^{iλ(quad x² + lin x + constant)}` on `[lo, hi]`.
    Chirp { quad: f64, lin: f64, constant: f64, lo: f64, hi: f64 },
    /// `e^{iλ·coeff·ln x}` on `[lo, hi]`.
    LogChirp { coeff: f64, lo: f64, hi: f64 },
}

impl AxisWitness {
    pub fn build(&self, lambda: f64, interval: [f64; 2]) -> Result<TestFunction1D> {
        match *self {
            AxisWitness::One => make_indicator(interval[0], interval[1]),
            AxisWitness::Indicator { lo, hi } => make_indicator(lo, hi),
            AxisWitness::ShrinkingIndicator { lo, scale, power } => {
                make_indicator(lo, lo + scale * lambda.powf(-power))
            }
            AxisWitness::Chirp { quad, lin, constant, lo, hi } => {
                make_chirp(lambda * quad, lambda * lin, lambda * constant, [lo, hi])
            }
            AxisWitness::LogChirp { coeff, lo, hi } => make_log_chirp(lambda * coeff, [lo, hi]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessRule {
    pub axes: [AxisWitness; 3],
}

impl WitnessRule {
    pub fn uniform(w: AxisWitness) -> Self {
        WitnessRule {
            axes: [w.clone(), w.clone(), w],
        }
    }

    /// `(1, 1_[0, π/(4λ)], 1)`, attaining λ^{-1} for `x2(x1 + x3)`.
    pub fn first_example() -> Self {
        WitnessRule {
            axes: [
                AxisWitness::One,
                AxisWitness::ShrinkingIndicator {
                    lo: 0.0,
                    scale: PI / 4.0,
                    power: 1.0,
                },
                AxisWitness::One,
            ],
        }
    }

    /// `e^{iλx²/2}` on each axis.
    pub fn plain_chirp() -> Self {
        Self::uniform(AxisWitness::Chirp {
            quad: 0.5,
            lin: 0.0,
            constant: 0.0,
            lo: 0.0,
            hi: 1.0,
        })
    }

    /// `e^{iλ(x²/2 − 3x/2)}` on each axis. Against the cyclic phase the net
    /// phase is `λ((s − 3/2)² − 9/4)/2` with `s = x1 + x2 + x3`, so the
    /// stationary plane cuts the middle of the cube.
    pub fn centered_chirp() -> Self {
        Self::uniform(AxisWitness::Chirp {
            quad: 0.5,
            lin: -1.5,
            constant: 0.0,
            lo: 0.0,
            hi: 1.0,
        })
    }

    /// `e^{-iλ u0 ln x}` on `[1/2, 1]`. Against `x1x2x3` the net phase is
    /// stationary on the surface `x1x2x3 = u0`.
    pub fn mellin(u0: f64) -> Self {
        Self::uniform(AxisWitness::LogChirp {
            coeff: -u0,
            lo: 0.5,
            hi: 1.0,
        })
    }

    /// Witness for `x1x2 + x2x3^k`: a chirp in `x1`, the conjugate of the
    /// stationary value `Ψ(t) = −t²/2 + t/2 − 1/8` of the `x1` integral in
    /// `x2`, and a shrinking indicator of length `(π/4)^{1/k} λ^{-1/k}`.
    pub fn x3k(k: u32) -> Self {
        WitnessRule {
            axes: [
                AxisWitness::Chirp {
                    quad: 0.5,
                    lin: -0.5,
                    constant: 0.0,
                    lo: 0.0,
                    hi: 1.0,
                },
                AxisWitness::Chirp {
                    quad: 0.5,
                    lin: -0.5,
                    constant: 0.125,
                    lo: 0.125,
                    hi: 0.375,
                },
                AxisWitness::ShrinkingIndicator {
                    lo: 0.0,
                    scale: (PI / 4.0).powf(1.0 / k as f64),
                    power: 1.0 / k as f64,
                },
            ],
        }
    }

    /// Chirps making `x1x2 + x2x3` plus their phases a nondegenerate
    /// quadratic form with an interior critical line.
    pub fn chain3_stationary() -> Self {
        let chirp = |quad, lin, constant| AxisWitness::Chirp {
            quad,
            lin,
            constant,
            lo: 0.0,
            hi: 1.0,
        };
        WitnessRule {
            axes: [chirp(1.0, -1.5, 0.0), chirp(1.0, -2.0, 0.0), chirp(1.0 / 3.0, -5.0 / 6.0, 13.0 / 12.0)],
        }
    }

    /// Looks up a preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "first" => Self::first_example(),
            "plain_chirp" => Self::plain_chirp(),
            "centered_chirp" => Self::centered_chirp(),
            "mellin" => Self::mellin(27.0 / 64.0),
            "x3k" => Self::x3k(3),
            "chain3_stationary" => Self::chain3_stationary(),
            "ones" => Self::uniform(AxisWitness::One),
            _ => return Err(Error::UnknownName(name.to_string())),
        })
    }

    pub fn build(&self, lambda: f64, domain: &[[f64; 2]]) -> Result<[TestFunction1D; 3]> {
        let d = |j: usize| domain.get(j).copied().unwrap_or([0.0, 1.0]);
        Ok([
            self.axes[0].build(lambda, d(0))?,
            self.axes[1].build(lambda, d(1))?,
            self.axes[2].build(lambda, d(2))?,
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormKind {
    T3,
    S2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayExperiment {
    /// Registry name of φ (T3) or ψ (S2).
    pub phase: String,
    pub witness: WitnessRule,
    pub ladder: Vec<f64>,
    pub form: FormKind,
    /// Overrides the registry domain, e.g. `[1/2, 1]^3` for the Mellin case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
    /// Registry names of the three submersions (S2 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maps: Option<[String; 3]>,
}

/// Geometric ladder `start, 2·start, …` with `count` rungs.
pub fn geometric_ladder(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * 2f64.powi(k as i32)).collect()
}

impl DecayExperiment {
    pub fn phase_descriptor(&self) -> Result<PhaseDescriptor> {
        let base = registry_get(&self.phase)?.descriptor;
        match &self.domain {
            Some(d) => base.with_domain(d.clone()),
            None => Ok(base),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.ladder.len() < 4 {
            return Err(Error::invalid(format!(
                "ladder needs at least 4 rungs, got {}",
                self.ladder.len()
            )));
        }
        if self.ladder.windows(2).any(|w| !(w[0] < w[1])) || self.ladder.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("ladder must be finite and strictly increasing"));
        }
        Ok(())
    }
}

/// Evaluates every rung independently; results are ordered by λ.
pub fn run_ladder(exp: &DecayExperiment, cfg: &QuadConfig) -> Result<Vec<IntegralResult>> {
    exp.validate()?;
    let phase = exp.phase_descriptor()?;
    let maps = match exp.form {
        FormKind::T3 => None,
        FormKind::S2 => {
            let names = exp
                .maps
                .as_ref()
                .ok_or_else(|| Error::invalid("S2 experiments need three maps"))?;
            let mut out = Vec::with_capacity(3);
            for n in names {
                out.push(registry_get(n)?.descriptor.with_domain(phase.domain().to_vec())?);
            }
            Some(out)
        }
    };
    exp.ladder
        .par_iter()
        .map(|&lambda| {
            let rung = || -> Result<IntegralResult> {
                let fs = exp.witness.build(lambda, phase.domain())?;
                let fs = [&fs[0], &fs[1], &fs[2]];
                match &maps {
                    None => eval_t3(&phase, fs, lambda, cfg),
                    Some(m) => eval_s2(&phase, [&m[0], &m[1], &m[2]], fs, lambda, cfg),
                }
            };
            rung().map_err(|e| Error::Rung {
                lambda,
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted slope, i.e. `−γ̂`.
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r_squared: f64,
    /// `(ln λ, ln |value|)` for every rung.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares slope of `ln |value|` against `ln λ` over the last `tail`
/// of the `(λ, |value|)` pairs.
pub fn fit_slope(points: &[(f64, f64)], tail: usize) -> Result<DecayFit> {
    if tail < 3 {
        return Err(Error::invalid("tail window needs at least 3 points"));
    }
    if points.len() < tail {
        return Err(Error::UnderSampled {
            have: points.len(),
            need: tail,
        });
    }
    let mut logs = Vec::with_capacity(points.len());
    for (rung, &(lambda, mag)) in points.iter().enumerate() {
        if !(mag > 0.0) || !(lambda > 0.0) {
            return Err(Error::DegeneratePoints { rung, lambda });
        }
        logs.push((lambda.ln(), mag.ln()));
    }
    let window = &logs[logs.len() - tail..];
    let xs: Vec<f64> = window.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = window.iter().map(|p| p.1).collect();
    let line = fit_line(&xs, &ys).ok_or(Error::DegeneratePoints {
        rung: points.len() - tail,
        lambda: points[points.len() - tail].0,
    })?;
    Ok(DecayFit {
        slope: line.slope,
        intercept: line.intercept,
        stderr: line.stderr,
        r_squared: line.r_squared,
        points: logs,
    })
}

pub fn fit_results(results: &[IntegralResult], tail: usize) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = results.iter().map(|r| (r.lambda, r.value.norm())).collect();
    fit_slope(&pts, tail)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Match,
    Mismatch,
    Inconclusive,
}

/// `Match` when `|slope + γ| ≤ tol`, otherwise `Inconclusive` when the
/// slope's standard error exceeds `tol`, otherwise `Mismatch`.
pub fn compare(fit: &DecayFit, gamma: f64, tol: f64) -> Verdict {
    if (fit.slope + gamma).abs() <= tol {
        Verdict::Match
    } else if fit.stderr > tol {
        Verdict::Inconclusive
    } else {
        Verdict::Mismatch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub r2: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verdict: Option<Verdict>,
}

impl FitSummary {
    pub fn new(fit: &DecayFit, verdict: Option<Verdict>) -> Self {
        FitSummary {
            slope: fit.slope,
            stderr: fit.stderr,
            intercept: fit.intercept,
            r2: fit.r_squared,
            verdict,
        }
    }
}

pub const LADDER_CSV_HEADER: &str = "lambda,re,im,abs,nodes_used,delta";

/// One row per rung, LF line endings, shortest round-trip float formatting.
pub fn ladder_csv(results: &[IntegralResult]) -> String {
    let mut out = String::from(LADDER_CSV_HEADER);
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.lambda,
            r.value.re,
            r.value.im,
            r.value.norm(),
            r.nodes_used,
            r.two_resolution_delta
        );
    }
    out
}

pub fn parse_ladder_csv(text: &str) -> Result<Vec<IntegralResult>> {
    let mut lines = text.lines();
    if lines.next() != Some(LADDER_CSV_HEADER) {
        return Err(Error::invalid("missing or wrong CSV header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(Error::invalid(format!("bad CSV row `{line}`")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::invalid(format!("bad number `{s}`")));
            Ok(IntegralResult {
                lambda: num(cols[0])?,
                value: Complex64::new(num(cols[1])?, num(cols[2])?),
                nodes_used: cols[4].parse().map_err(|_| Error::invalid("bad node count"))?,
                two_resolution_delta: num(cols[5])?,
            })
        })
        .collect()
}
