//! Experiment configuration files.
//!
//! A config is a JSON object `{kind, parameters, seed, output}`. The
//! `parameters` object is decoded against the schema of `kind`; unknown keys
//! are rejected at both levels.

use osclab::decaylab::{FormKind, WitnessRule, DEFAULT_TAIL};
use osclab::oscquad::QuadConfig;
use osclab::phasekit::{registry_get, PhaseDescriptor};
use osclab::sublevel::{Coefficient, StepFunction};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Decay,
    Sublevel,
    Witness18,
    Web,
    Degeneracy,
    Microlocal,
    Hsigma,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default = "empty_object")]
    pub parameters: serde_json::Value,
    #[serde(default)]
    pub seed: u64,
    /// Output prefix; `<output>.csv`, `<output>.json` and possibly
    /// `<output>.svg` are written.
    pub output: String,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config: {e}"))
    }

    pub fn params<T: DeserializeOwned>(&self) -> Result<T, String> {
        serde_json::from_value(self.parameters.clone()).map_err(|e| format!("parameters: {e}"))
    }
}

/// A phase by registry name or as a full phase document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseSpec {
    Name(String),
    Document(PhaseDescriptor),
}

impl PhaseSpec {
    pub fn resolve(&self) -> osclab::Result<PhaseDescriptor> {
        match self {
            PhaseSpec::Name(n) => Ok(registry_get(n)?.descriptor),
            PhaseSpec::Document(d) => Ok(d.clone()),
        }
    }
}

/// A one-variable function for the sublevel systems.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSpec {
    Constant { domain: [f64; 2], value: f64 },
    /// `a + b·x`
    Affine { domain: [f64; 2], a: f64, b: f64 },
    Staircase { domain: [f64; 2], values: Vec<f64> },
    /// Seeded uniform step values; without a `seed` the config seed is
    /// mixed with the function's position.
    RandomStaircase {
        domain: [f64; 2],
        steps: usize,
        range: [f64; 2],
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Piecewise linear interpolant of `x^exponent`.
    Power { domain: [f64; 2], exponent: f64, pieces: usize },
}

impl StepSpec {
    pub fn build(&self, seed: u64, slot: u64) -> osclab::Result<StepFunction> {
        match self {
            StepSpec::Constant { domain, value } => StepFunction::constant(*domain, *value),
            StepSpec::Affine { domain, a, b } => StepFunction::affine(*domain, *a, *b),
            StepSpec::Staircase { domain, values } => StepFunction::staircase(*domain, values.clone()),
            StepSpec::RandomStaircase { domain, steps, range, seed: own } => {
                let s = own.unwrap_or_else(|| seed.wrapping_mul(3).wrapping_add(slot));
                StepFunction::random_staircase(*domain, *steps, *range, s)
            }
            StepSpec::Power { domain, exponent, pieces } => {
                let p = *exponent;
                StepFunction::interpolant(*domain, *pieces, move |x| x.powf(p))
            }
        }
    }
}

pub fn build_three(specs: &[StepSpec; 3], seed: u64) -> osclab::Result<[StepFunction; 3]> {
    Ok([specs[0].build(seed, 0)?, specs[1].build(seed, 1)?, specs[2].build(seed, 2)?])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefSpec {
    Constant(f64),
    Phase(PhaseSpec),
}

impl CoefSpec {
    pub fn resolve(&self) -> osclab::Result<Coefficient> {
        match self {
            CoefSpec::Constant(c) => Ok(Coefficient::Constant(*c)),
            CoefSpec::Phase(p) => Ok(Coefficient::Phase(p.resolve()?)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WitnessSpec {
    Preset(String),
    Rule(WitnessRule),
}

impl WitnessSpec {
    pub fn resolve(&self) -> osclab::Result<WitnessRule> {
        match self {
            WitnessSpec::Preset(n) => WitnessRule::preset(n),
            WitnessSpec::Rule(r) => Ok(r.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometric {
    pub start: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LadderSpec {
    List(Vec<f64>),
    Geometric(Geometric),
}

impl LadderSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            LadderSpec::List(v) => v.clone(),
            LadderSpec::Geometric(g) => osclab::decaylab::geometric_ladder(g.start, g.count),
        }
    }
}

fn default_tol() -> f64 {
    0.1
}

fn default_tail() -> usize {
    DEFAULT_TAIL
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayParams {
    pub phase: String,
    pub witness: WitnessSpec,
    pub ladder: LadderSpec,
    #[serde(default)]
    pub form: Option<FormKind>,
    #[serde(default)]
    pub domain: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub maps: Option<[String; 3]>,
    /// Expected decay exponent; defaults to the registry reference.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_tail")]
    pub tail: usize,
    /// Quadrature settings; the ladder preset when absent.
    #[serde(default)]
    pub quad: Option<QuadConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    #[serde(rename = "system_9_1")]
    System91 {
        phi: PhaseSpec,
        psi: PhaseSpec,
        h: [StepSpec; 3],
        domain: [[f64; 2]; 2],
    },
    #[serde(rename = "system_12")]
    System12 {
        phi: PhaseSpec,
        h: [StepSpec; 3],
        domain: [[f64; 2]; 3],
    },
    Scalar {
        a: [CoefSpec; 3],
        maps: [PhaseSpec; 3],
        f: [StepSpec; 3],
        domain: [[f64; 2]; 2],
    },
    /// The two-inequality multiprogression system, rebuilt at each ε.
    Multiprogression {},
}

fn default_samples() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SublevelParams {
    pub system: SystemSpec,
    pub eps: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: u64,
    /// Cells per axis of an additional grid count.
    #[serde(default)]
    pub grid: Option<usize>,
    /// Accepted range of the fitted exponent, for `--assert`.
    #[serde(default)]
    pub exponent_range: Option<[f64; 2]>,
}

fn default_membership() -> u64 {
    100_000
}

fn default_witness_range() -> [f64; 2] {
    [0.4, 0.6]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Witness18Params {
    pub eps: Vec<f64>,
    #[serde(default = "default_membership")]
    pub membership_samples: u64,
    /// Also estimate the full sublevel set by Monte Carlo.
    #[serde(default)]
    pub monte_carlo: Option<u64>,
    #[serde(default = "default_witness_range")]
    pub exponent_range: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WebExpect {
    Flat,
    Curved,
}

fn default_flat_tol() -> f64 {
    1e-10
}

fn default_curved_min() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WebParams {
    pub phi3: PhaseSpec,
    pub domain: [[f64; 2]; 2],
    #[serde(default = "default_flat_tol")]
    pub tol: f64,
    #[serde(default = "default_curved_min")]
    pub curved_min: f64,
    #[serde(default)]
    pub expect: Option<WebExpect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneracyExpect {
    Degenerate,
    Nondegenerate,
}

fn default_halfwidth() -> f64 {
    0.25
}

fn default_step() -> f64 {
    1.0 / 64.0
}

fn default_degenerate_max() -> f64 {
    1e-6
}

fn default_nondegenerate_min() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegeneracyParams {
    pub phase: PhaseSpec,
    pub basepoints: Vec<[f64; 3]>,
    #[serde(default = "default_halfwidth")]
    pub halfwidth: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_degenerate_max")]
    pub degenerate_max: f64,
    #[serde(default = "default_nondegenerate_min")]
    pub nondegenerate_min: f64,
    #[serde(default)]
    pub expect: Option<DegeneracyExpect>,
}

fn default_waves() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    /// Sum of seeded plane waves with frequencies in `[-λ, λ]`.
    Random {
        #[serde(default = "default_waves")]
        waves: usize,
    },
    /// `e^{i·rate·x²}`
    Chirp { rate: f64 },
    /// `e^{i·xi·x}`
    Wave { xi: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrolocalParams {
    pub signal: SignalSpec,
    pub lambda: f64,
    pub sigma: f64,
    #[serde(default)]
    pub max_freq: Option<f64>,
    /// Number of independent seeds (`seed`, `seed + 1`, …) for random signals.
    #[serde(default = "one")]
    pub repeats: u64,
}

fn one() -> u64 {
    1
}

fn default_dft() -> usize {
    1 << 16
}

fn default_spread() -> f64 {
    50.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsigmaParams {
    pub f: StepSpec,
    pub sigma: f64,
    pub a: Vec<f64>,
    #[serde(default = "default_dft")]
    pub m: usize,
    #[serde(default = "default_spread")]
    pub max_spread: f64,
}
