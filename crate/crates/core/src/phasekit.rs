//! Phase functions with exact partial derivatives and the registry of named
//! phases.
//!
//! Polynomial phases keep rational coefficients. Every partial derivative up
//! to total order 3 is derived in rational arithmetic, rounded once to
//! `f64` per coefficient and evaluated with compensated summation. The
//! log-polynomial form (`poly + Σ c_j ln x_j`) covers Mellin-type phases
//! and is analytic only where the logged coordinates are positive.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

pub type Rational = Rational64;

/// Largest supported dimension (the `chain_n` family goes up to 5).
pub const MAX_DIMENSION: usize = 5;
/// Largest supported total derivative order.
pub const MAX_ORDER: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub coeff: Rational,
}

impl Monomial {
    fn variables_mask(&self) -> u32 {
        self.exponents
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .fold(0, |m, (i, _)| m | (1 << i))
    }
}

/// Sparse multivariate polynomial with rational coefficients. Terms are
/// merged, free of zero coefficients and sorted by exponent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePolynomial {
    dim: usize,
    terms: Vec<Monomial>,
}

impl SparsePolynomial {
    pub fn new(dim: usize, terms: impl IntoIterator<Item = Monomial>) -> Result<Self> {
        let mut merged: Vec<Monomial> = Vec::new();
        for t in terms {
            if t.exponents.len() != dim {
                return Err(Error::invalid(format!(
                    "monomial {:?} does not have {dim} exponents",
                    t.exponents
                )));
            }
            match merged.iter_mut().find(|m| m.exponents == t.exponents) {
                Some(m) => m.coeff += t.coeff,
                None => merged.push(t),
            }
        }
        merged.retain(|m| !m.coeff.is_zero());
        merged.sort_by(|a, b| a.exponents.cmp(&b.exponents));
        Ok(SparsePolynomial { dim, terms: merged })
    }

    /// Builds from `(exponents, numerator, denominator)` triples.
    pub fn from_terms(dim: usize, terms: &[(&[u32], i64, i64)]) -> Result<Self> {
        let mut monos = Vec::with_capacity(terms.len());
        for &(e, num, den) in terms {
            if den == 0 {
                return Err(Error::invalid("zero denominator"));
            }
            monos.push(Monomial {
                exponents: e.to_vec(),
                coeff: Rational::new(num, den),
            });
        }
        Self::new(dim, monos)
    }

    pub fn zero(dim: usize) -> Self {
        SparsePolynomial { dim, terms: vec![] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree_in(&self, axis: usize) -> u32 {
        self.terms.iter().map(|t| t.exponents[axis]).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.exponents.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Exact partial derivative `∂^α`.
    pub fn derivative(&self, alpha: &[u32]) -> SparsePolynomial {
        let mut out = Vec::new();
        'terms: for t in &self.terms {
            let mut coeff = t.coeff;
            let mut exps = t.exponents.clone();
            for (e, &a) in exps.iter_mut().zip(alpha) {
                if a > *e {
                    continue 'terms;
                }
                for k in 0..a {
                    coeff *= Rational::from_integer((*e - k) as i64);
                }
                *e -= a;
            }
            out.push(Monomial {
                exponents: exps,
                coeff,
            });
        }
        SparsePolynomial::new(self.dim, out).expect("dimension preserved")
    }

    /// Floating evaluation with compensated summation.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = CompensatedSum::default();
        for t in &self.terms {
            acc.add(rational_to_f64(t.coeff) * monomial_value(&t.exponents, x));
        }
        acc.value()
    }

    /// Exact value at the (dyadic) point `x`.
    pub fn eval_exact(&self, x: &[f64]) -> BigRational {
        let xs: Vec<BigRational> = x
            .iter()
            .map(|&v| BigRational::from_float(v).expect("finite coordinate"))
            .collect();
        let mut acc = BigRational::zero();
        for t in &self.terms {
            let mut term = BigRational::new(BigInt::from(*t.coeff.numer()), BigInt::from(*t.coeff.denom()));
            for (xi, &e) in xs.iter().zip(&t.exponents) {
                for _ in 0..e {
                    term *= xi;
                }
            }
            acc += term;
        }
        acc
    }

    pub fn negated(&self) -> SparsePolynomial {
        SparsePolynomial {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| Monomial {
                    exponents: t.exponents.clone(),
                    coeff: -t.coeff,
                })
                .collect(),
        }
    }

    /// Relabels variables: variable `i` of the result is variable `perm[i]`
    /// of `self`.
    pub fn permuted(&self, perm: &[usize]) -> SparsePolynomial {
        let terms = self.terms.iter().map(|t| Monomial {
            exponents: perm.iter().map(|&p| t.exponents[p]).collect(),
            coeff: t.coeff,
        });
        SparsePolynomial::new(self.dim, terms).expect("dimension preserved")
    }

    /// Keeps the terms whose set of occurring variables equals `mask`.
    pub fn terms_with_variables(&self, mask: u32) -> SparsePolynomial {
        SparsePolynomial {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .filter(|t| t.variables_mask() == mask)
                .cloned()
                .collect(),
        }
    }

    /// Splits by the power of `axis`: entry `d` holds the coefficient
    /// polynomial of `x_axis^d` (with `x_axis` removed).
    pub fn split_axis(&self, axis: usize) -> Vec<SparsePolynomial> {
        let deg = self.degree_in(axis) as usize;
        let mut parts = vec![Vec::new(); deg + 1];
        for t in &self.terms {
            let d = t.exponents[axis] as usize;
            let mut e = t.exponents.clone();
            e[axis] = 0;
            parts[d].push(Monomial {
                exponents: e,
                coeff: t.coeff,
            });
        }
        parts
            .into_iter()
            .map(|p| SparsePolynomial::new(self.dim, p).expect("dimension preserved"))
            .collect()
    }
}

pub(crate) fn rational_to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn monomial_value(exps: &[u32], x: &[f64]) -> f64 {
    exps.iter()
        .zip(x)
        .fold(1.0, |acc, (&e, &xi)| if e == 0 { acc } else { acc * xi.powi(e as i32) })
}

/// `c · ln x_axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogTerm {
    pub axis: usize,
    pub coeff: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhaseForm {
    Polynomial(SparsePolynomial),
    /// Polynomial plus logarithms of single coordinates; analytic where all
    /// logged coordinates are positive.
    LogPolynomial {
        poly: SparsePolynomial,
        logs: Vec<LogTerm>,
    },
}

impl PhaseForm {
    pub fn poly(&self) -> &SparsePolynomial {
        match self {
            PhaseForm::Polynomial(p) => p,
            PhaseForm::LogPolynomial { poly, .. } => poly,
        }
    }

    pub fn logs(&self) -> &[LogTerm] {
        match self {
            PhaseForm::Polynomial(_) => &[],
            PhaseForm::LogPolynomial { logs, .. } => logs,
        }
    }
}

/// Compiled floating form of one derivative polynomial.
#[derive(Debug, Clone)]
struct CompiledPoly {
    terms: Vec<(f64, [u32; MAX_DIMENSION])>,
}

impl CompiledPoly {
    fn new(p: &SparsePolynomial) -> Self {
        let terms = p
            .terms()
            .iter()
            .map(|t| {
                let mut e = [0u32; MAX_DIMENSION];
                e[..t.exponents.len()].copy_from_slice(&t.exponents);
                (rational_to_f64(t.coeff), e)
            })
            .collect();
        CompiledPoly { terms }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = CompensatedSum::default();
        for (c, e) in &self.terms {
            acc.add(c * monomial_value(&e[..x.len()], x));
        }
        acc.value()
    }
}

fn alpha_key(alpha: &[u32]) -> usize {
    alpha.iter().rev().fold(0, |k, &a| k * 4 + a as usize)
}

/// A smooth real phase on an axis-aligned box with exact partials up to
/// order 3.
#[derive(Clone)]
pub struct PhaseDescriptor {
    form: PhaseForm,
    domain: Vec<[f64; 2]>,
    derivs: Arc<Vec<Option<CompiledPoly>>>,
}

impl fmt::Debug for PhaseDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseDescriptor")
            .field("form", &self.form)
            .field("domain", &self.domain)
            .finish()
    }
}

impl PartialEq for PhaseDescriptor {
    fn eq(&self, other: &Self) -> bool {
        self.form == other.form && self.domain == other.domain
    }
}

impl PhaseDescriptor {
    pub fn new(form: PhaseForm, domain: Vec<[f64; 2]>) -> Result<Self> {
        let dim = form.poly().dim();
        if !(2..=MAX_DIMENSION).contains(&dim) {
            return Err(Error::invalid(format!("dimension {dim} outside 2..={MAX_DIMENSION}")));
        }
        if domain.len() != dim {
            return Err(Error::invalid("domain rank differs from dimension"));
        }
        for iv in &domain {
            if !(iv[0].is_finite() && iv[1].is_finite() && iv[0] < iv[1]) {
                return Err(Error::EmptyInterval { lo: iv[0], hi: iv[1] });
            }
        }
        for l in form.logs() {
            if l.axis >= dim {
                return Err(Error::invalid("log term axis out of range"));
            }
        }
        let mut derivs = vec![None; 4usize.pow(dim as u32)];
        for alpha in multi_indices(dim, MAX_ORDER) {
            derivs[alpha_key(&alpha)] = Some(CompiledPoly::new(&form.poly().derivative(&alpha)));
        }
        Ok(PhaseDescriptor {
            form,
            domain,
            derivs: Arc::new(derivs),
        })
    }

    pub fn polynomial(poly: SparsePolynomial, domain: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(PhaseForm::Polynomial(poly), domain)
    }

    /// Polynomial on the unit box `[0,1]^dim`.
    pub fn unit_polynomial(poly: SparsePolynomial) -> Result<Self> {
        let dim = poly.dim();
        Self::polynomial(poly, vec![[0.0, 1.0]; dim])
    }

    pub fn form(&self) -> &PhaseForm {
        &self.form
    }

    pub fn dimension(&self) -> usize {
        self.form.poly().dim()
    }

    pub fn domain(&self) -> &[[f64; 2]] {
        &self.domain
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self.form, PhaseForm::Polynomial(_))
    }

    pub fn with_domain(&self, domain: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(self.form.clone(), domain)
    }

    pub fn negated(&self) -> Self {
        let form = match &self.form {
            PhaseForm::Polynomial(p) => PhaseForm::Polynomial(p.negated()),
            PhaseForm::LogPolynomial { poly, logs } => PhaseForm::LogPolynomial {
                poly: poly.negated(),
                logs: logs
                    .iter()
                    .map(|l| LogTerm {
                        axis: l.axis,
                        coeff: -l.coeff,
                    })
                    .collect(),
            },
        };
        Self::new(form, self.domain.clone()).expect("negation keeps validity")
    }

    /// True when `x` lies in the sub-box where the phase is analytic.
    pub fn is_analytic_at(&self, x: &[f64]) -> bool {
        self.form.logs().iter().all(|l| x[l.axis] > 0.0)
    }

    /// The analytic sub-box intersected with `bounds` is nonempty on every
    /// logged axis (strictly positive lower end).
    pub fn box_is_analytic(&self, bounds: &[[f64; 2]]) -> bool {
        self.form.logs().iter().all(|l| bounds[l.axis][0] > 0.0)
    }

    /// `∂^α φ(x)` with range checks.
    pub fn eval_partial(&self, alpha: &[u32], x: &[f64]) -> Result<f64> {
        if alpha.len() != self.dimension() || x.len() != self.dimension() {
            return Err(Error::invalid("multi-index or point has the wrong rank"));
        }
        let order: u32 = alpha.iter().sum();
        if order > MAX_ORDER {
            return Err(Error::UnsupportedOrder(order));
        }
        if !self.is_analytic_at(x) {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        Ok(self.partial_unchecked(alpha, x))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let zero = vec![0; self.dimension()];
        self.eval_partial(&zero, x)
    }

    /// `∂^α φ(x)` without rank, order or domain checks.
    pub(crate) fn partial_unchecked(&self, alpha: &[u32], x: &[f64]) -> f64 {
        let poly = self.derivs[alpha_key(alpha)]
            .as_ref()
            .expect("order checked by caller")
            .eval(x);
        let logs = self.form.logs();
        if logs.is_empty() {
            return poly;
        }
        let order: u32 = alpha.iter().sum();
        let mut acc = CompensatedSum::default();
        acc.add(poly);
        for l in logs {
            let k = alpha[l.axis];
            if k != order {
                continue;
            }
            let c = rational_to_f64(l.coeff);
            let xv = x[l.axis];
            let v = match k {
                0 => c * xv.ln(),
                1 => c / xv,
                2 => -c / (xv * xv),
                _ => 2.0 * c / (xv * xv * xv),
            };
            acc.add(v);
        }
        acc.value()
    }

    /// Partial derivative along a single axis of the given order.
    pub(crate) fn axis_partial(&self, axis: usize, order: u32, x: &[f64]) -> f64 {
        let mut alpha = [0u32; MAX_DIMENSION];
        alpha[axis] = order;
        self.partial_unchecked(&alpha[..self.dimension()], x)
    }

    pub(crate) fn mixed(&self, pairs: &[usize], x: &[f64]) -> f64 {
        let mut alpha = [0u32; MAX_DIMENSION];
        for &p in pairs {
            alpha[p] += 1;
        }
        self.partial_unchecked(&alpha[..self.dimension()], x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.is_analytic_at(x) {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        Ok((0..self.dimension()).map(|j| self.axis_partial(j, 1, x)).collect())
    }

    /// Sampled `sup |∂φ/∂x_axis|` over a `samples^dim` grid of `bounds`.
    pub fn sampled_lipschitz(&self, axis: usize, bounds: &[[f64; 2]], samples: usize) -> f64 {
        let mut best: f64 = 0.0;
        for_each_grid_point(bounds, samples, |x| {
            best = best.max(self.axis_partial(axis, 1, x).abs());
        });
        best
    }
}

/// Calls `f` on every point of the tensor grid with `samples` points per
/// axis (endpoints included).
pub fn for_each_grid_point(bounds: &[[f64; 2]], samples: usize, mut f: impl FnMut(&[f64])) {
    let dim = bounds.len();
    let samples = samples.max(2);
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    loop {
        for d in 0..dim {
            let t = idx[d] as f64 / (samples - 1) as f64;
            x[d] = bounds[d][0] + t * (bounds[d][1] - bounds[d][0]);
        }
        f(&x);
        let mut d = 0;
        loop {
            if d == dim {
                return;
            }
            idx[d] += 1;
            if idx[d] < samples {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// All multi-indices of length `dim` with total order at most `max_order`.
pub fn multi_indices(dim: usize, max_order: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        let mut next = Vec::new();
        for prefix in &out {
            let used: u32 = prefix.iter().sum();
            for a in 0..=(max_order - used) {
                let mut p = prefix.clone();
                p.push(a);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

// ---------------------------------------------------------------------------
// JSON document

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialDoc {
    pub alpha: Vec<u32>,
    pub num: i64,
    pub den: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogTermDoc {
    pub axis: usize,
    pub num: i64,
    pub den: i64,
}

/// Serialized phase: `{"dimension", "monomials", "domain"}` plus optional
/// `"logs"` for log-polynomial phases.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDocument {
    pub dimension: usize,
    pub monomials: Vec<MonomialDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub logs: Vec<LogTermDoc>,
    pub domain: Vec<[f64; 2]>,
}

impl From<&PhaseDescriptor> for PhaseDocument {
    fn from(p: &PhaseDescriptor) -> Self {
        PhaseDocument {
            dimension: p.dimension(),
            monomials: p
                .form
                .poly()
                .terms()
                .iter()
                .map(|t| MonomialDoc {
                    alpha: t.exponents.clone(),
                    num: *t.coeff.numer(),
                    den: *t.coeff.denom(),
                })
                .collect(),
            logs: p
                .form
                .logs()
                .iter()
                .map(|l| LogTermDoc {
                    axis: l.axis,
                    num: *l.coeff.numer(),
                    den: *l.coeff.denom(),
                })
                .collect(),
            domain: p.domain.clone(),
        }
    }
}

impl TryFrom<PhaseDocument> for PhaseDescriptor {
    type Error = Error;

    fn try_from(doc: PhaseDocument) -> Result<Self> {
        let mut monos = Vec::with_capacity(doc.monomials.len());
        for m in doc.monomials {
            if m.den == 0 {
                return Err(Error::invalid("zero denominator"));
            }
            monos.push(Monomial {
                exponents: m.alpha,
                coeff: Rational::new(m.num, m.den),
            });
        }
        let poly = SparsePolynomial::new(doc.dimension, monos)?;
        let form = if doc.logs.is_empty() {
            PhaseForm::Polynomial(poly)
        } else {
            let mut logs = Vec::new();
            for l in doc.logs {
                if l.den == 0 {
                    return Err(Error::invalid("zero denominator"));
                }
                logs.push(LogTerm {
                    axis: l.axis,
                    coeff: Rational::new(l.num, l.den),
                });
            }
            PhaseForm::LogPolynomial { poly, logs }
        };
        PhaseDescriptor::new(form, doc.domain)
    }
}

impl Serialize for PhaseDescriptor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PhaseDocument::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PhaseDescriptor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = PhaseDocument::deserialize(d)?;
        PhaseDescriptor::try_from(doc).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Registry

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRegistryEntry {
    pub name: String,
    pub descriptor: PhaseDescriptor,
    /// Sharp or attained decay exponent, when one is known.
    pub reference_exponent: Option<Rational>,
    pub note: String,
}

/// Parses `"3"`, `"-1/2"` or `"0.25"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::invalid(format!("cannot parse `{s}` as a rational"));
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.len() > 15 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = int.starts_with('-');
        let int_part: i64 = if int.is_empty() || int == "-" {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let den = 10i64.pow(frac.len() as u32);
        let frac_part: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let mag = int_part.abs() * den + frac_part;
        return Ok(Rational::new(if neg { -mag } else { mag }, den));
    }
    Ok(Rational::from_integer(s.parse().map_err(|_| bad())?))
}

fn split_name(name: &str) -> Result<(&str, Vec<(&str, &str)>)> {
    let name = name.trim();
    let Some(open) = name.find('(') else {
        return Ok((name, vec![]));
    };
    if !name.ends_with(')') {
        return Err(Error::UnknownName(name.to_string()));
    }
    let base = &name[..open];
    let inner = &name[open + 1..name.len() - 1];
    let mut params = Vec::new();
    for kv in inner.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::UnknownName(name.to_string()))?;
        params.push((k.trim(), v.trim()));
    }
    Ok((base, params))
}

fn param<'a>(params: &[(&str, &'a str)], key: &str) -> Option<&'a str> {
    params.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

fn unit3(poly: SparsePolynomial) -> PhaseDescriptor {
    PhaseDescriptor::unit_polynomial(poly).expect("registry phase is valid")
}

fn entry(name: String, descriptor: PhaseDescriptor, gamma: Option<Rational>, note: &str) -> PhaseRegistryEntry {
    PhaseRegistryEntry {
        name,
        descriptor,
        reference_exponent: gamma,
        note: note.to_string(),
    }
}

fn cyclic_r(r: Rational) -> SparsePolynomial {
    let mut terms = vec![
        Monomial { exponents: vec![1, 1, 0], coeff: Rational::one() },
        Monomial { exponents: vec![0, 1, 1], coeff: Rational::one() },
    ];
    terms.push(Monomial { exponents: vec![1, 0, 1], coeff: r });
    SparsePolynomial::new(3, terms).expect("valid")
}

/// Looks up a registered phase. Parameterized families accept
/// `name(key=value)`: `cyclic_r(r=…)`, `x3k(k=…)`, `chain_n(n=…)`.
pub fn registry_get(name: &str) -> Result<PhaseRegistryEntry> {
    let unknown = || Error::UnknownName(name.to_string());
    let (base, params) = split_name(name)?;
    let p = |t: &[(&[u32], i64, i64)], dim| SparsePolynomial::from_terms(dim, t).expect("valid");
    let half = Some(Rational::new(1, 2));
    let e = match base {
        "ex_first" => entry(
            "ex_first".into(),
            unit3(p(&[(&[1, 1, 0], 1, 1), (&[0, 1, 1], 1, 1)], 3)),
            Some(Rational::one()),
            "x2(x1+x3); gamma = 1 attained by an indicator of length ~1/lambda",
        ),
        "chain3" => entry(
            "chain3".into(),
            unit3(p(&[(&[1, 1, 0], 1, 1), (&[0, 1, 1], 1, 1)], 3)),
            Some(Rational::one()),
            "x1x2+x2x3; optimal exponent 1",
        ),
        "cyclic" => entry(
            "cyclic".into(),
            unit3(cyclic_r(Rational::one())),
            half,
            "x1x2+x2x3+x3x1; optimal exponent 1/2",
        ),
        "cyclic_r" => {
            let r = match param(&params, "r") {
                Some(v) => parse_rational(v)?,
                None => Rational::new(1, 2),
            };
            if r.is_zero() {
                return Err(Error::invalid("cyclic_r needs r != 0"));
            }
            let gamma = if r.is_positive() { half } else { None };
            entry(
                format!("cyclic_r(r={r})"),
                unit3(cyclic_r(r)),
                gamma,
                "x1x2+x2x3+r*x3x1; optimal exponent 1/2 for r > 0",
            )
        }
        "triple_product" => entry(
            "triple_product".into(),
            unit3(p(&[(&[1, 1, 1], 1, 1)], 3)),
            half,
            "x1x2x3; 1/2 attained by log-chirps (Mellin)",
        ),
        "x3k" => {
            let k: u32 = match param(&params, "k") {
                Some(v) => v.parse().map_err(|_| unknown())?,
                None => 3,
            };
            if k < 2 {
                return Err(Error::invalid("x3k needs k >= 2"));
            }
            let poly = SparsePolynomial::new(
                3,
                [
                    Monomial { exponents: vec![1, 1, 0], coeff: Rational::one() },
                    Monomial { exponents: vec![0, 1, k], coeff: Rational::one() },
                ],
            )?;
            let (gamma, note) = if k >= 3 {
                (
                    Some(Rational::new(1, 2) + Rational::new(1, k as i64)),
                    "x1x2+x2x3^k; optimal exponent 1/2+1/k",
                )
            } else {
                (None, "x1x2+x2x3^2; every exponent below 1 holds, 1 itself not attained")
            };
            entry(format!("x3k(k={k})"), unit3(poly), gamma, note)
        }
        "chain_n" => {
            let n: usize = match param(&params, "n") {
                Some(v) => v.parse().map_err(|_| unknown())?,
                None => 3,
            };
            if !(3..=MAX_DIMENSION).contains(&n) {
                return Err(Error::invalid("chain_n needs n in 3..=5"));
            }
            let terms = (0..n - 1).map(|i| {
                let mut e = vec![0; n];
                e[i] = 1;
                e[i + 1] = 1;
                Monomial { exponents: e, coeff: Rational::one() }
            });
            let poly = SparsePolynomial::new(n, terms)?;
            entry(
                format!("chain_n(n={n})"),
                PhaseDescriptor::unit_polynomial(poly)?,
                Some(Rational::new(n as i64 - 1, 2)),
                "sum x_i x_{i+1}; exponent (n-1)/2 realized",
            )
        }
        "gx" => entry(
            "gx".into(),
            PhaseDescriptor::unit_polynomial(p(&[(&[2, 1], 1, 1), (&[1, 2], -1, 1)], 2))?,
            None,
            "x^2y-xy^2 with maps (x,y,x+y); gamma >= 1/4 known, optimum unknown",
        ),
        "bourgain" => entry(
            "bourgain".into(),
            PhaseDescriptor::unit_polynomial(p(
                &[(&[1, 0], 1, 1), (&[0, 2], 1, 1), (&[1, 1], -2, 1), (&[2, 0], 1, 1)],
                2,
            ))?,
            None,
            "x+(y-x)^2; third map of a curved 3-web",
        ),
        "linear_sum" => entry(
            "linear_sum".into(),
            PhaseDescriptor::unit_polynomial(p(&[(&[1, 0], 1, 1), (&[0, 1], 1, 1)], 2))?,
            None,
            "x+y; third map of the linear web",
        ),
        "coord_x" => entry(
            "coord_x".into(),
            PhaseDescriptor::unit_polynomial(p(&[(&[1, 0], 1, 1)], 2))?,
            None,
            "x",
        ),
        "coord_y" => entry(
            "coord_y".into(),
            PhaseDescriptor::unit_polynomial(p(&[(&[0, 1], 1, 1)], 2))?,
            None,
            "y",
        ),
        "mellin_net" => entry(
            "mellin_net".into(),
            PhaseDescriptor::new(
                PhaseForm::LogPolynomial {
                    poly: p(&[(&[1, 1, 1], 1, 1)], 3),
                    logs: (0..3).map(|axis| LogTerm { axis, coeff: -Rational::one() }).collect(),
                },
                vec![[0.5, 1.0]; 3],
            )?,
            None,
            "x1x2x3 - ln(x1x2x3) on [1/2,1]^3; gradient vanishes on x1x2x3 = 1",
        ),
        _ => return Err(unknown()),
    };
    if base != "cyclic_r" && base != "x3k" && base != "chain_n" && !params.is_empty() {
        return Err(unknown());
    }
    Ok(e)
}

/// Canonical registry listing (parameterized families at their documented
/// instances).
pub fn registry_entries() -> Vec<PhaseRegistryEntry> {
    [
        "ex_first",
        "chain3",
        "cyclic",
        "cyclic_r(r=1/2)",
        "cyclic_r(r=2)",
        "triple_product",
        "x3k(k=2)",
        "x3k(k=3)",
        "x3k(k=4)",
        "chain_n(n=3)",
        "chain_n(n=4)",
        "chain_n(n=5)",
        "gx",
        "bourgain",
        "linear_sum",
        "coord_x",
        "coord_y",
        "mellin_net",
    ]
    .iter()
    .map(|n| registry_get(n).expect("registered"))
    .collect()
}

/// Formats an exact rational as `p/q` (or `p` when integral).
pub fn format_rational(r: Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for PhaseDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for t in self.form.poly().terms() {
            let c = t.coeff;
            let sign = if c.is_negative() { "-" } else if first { "" } else { "+" };
            write!(f, "{sign}")?;
            let mag = c.abs();
            let vars: Vec<String> = t
                .exponents
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| if e == 1 { format!("x{}", i + 1) } else { format!("x{}^{e}", i + 1) })
                .collect();
            if !mag.is_one() || vars.is_empty() {
                write!(f, "{}", format_rational(mag))?;
                if !vars.is_empty() {
                    write!(f, "*")?;
                }
            }
            write!(f, "{}", vars.join("*"))?;
            first = false;
        }
        for l in self.form.logs() {
            let sign = if l.coeff.is_negative() { "-" } else if first { "" } else { "+" };
            let mag = l.coeff.abs();
            let c = if mag.is_one() { String::new() } else { format!("{}*", format_rational(mag)) };
            write!(f, "{sign}{c}ln(x{})", l.axis + 1)?;
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Converts an `f64` coefficient, e.g. a CLI parameter, to a nearby
/// rational with bounded denominator.
pub fn rational_from_f64(v: f64) -> Result<Rational> {
    if !v.is_finite() {
        return Err(Error::invalid("non-finite coefficient"));
    }
    let den: i64 = 1 << 20;
    let num = (v * den as f64).round();
    if num.abs() > 9.0e15 {
        return Err(Error::invalid("coefficient too large"));
    }
    Ok(Rational::new(num as i64, den))
}

#[allow(dead_code)]
fn rational_to_big(r: Rational) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

#[allow(dead_code)]
fn big_to_f64(r: &BigRational) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three(terms: &[(&[u32], i64, i64)]) -> PhaseDescriptor {
        unit3(SparsePolynomial::from_terms(3, terms).unwrap())
    }

    #[test]
    fn triple_product_third_partial_is_one() {
        let phi = registry_get("triple_product").unwrap().descriptor;
        for x in [[0.1, 0.2, 0.3], [0.9, 0.5, 0.7]] {
            assert_eq!(phi.eval_partial(&[1, 1, 1], &x).unwrap(), 1.0);
        }
    }

    #[test]
    fn ex_first_mixed_partials() {
        let phi = registry_get("ex_first").unwrap().descriptor;
        let x = [0.3, 0.6, 0.9];
        assert_eq!(phi.eval_partial(&[1, 1, 0], &x).unwrap(), 1.0);
        assert_eq!(phi.eval_partial(&[1, 0, 1], &x).unwrap(), 0.0);
    }

    #[test]
    fn cubic_chain_second_partial() {
        let phi = three(&[(&[1, 1, 0], 1, 1), (&[0, 1, 3], 1, 1)]);
        let v = phi.eval_partial(&[0, 1, 1], &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(v, 0.75);
    }

    #[test]
    fn order_and_domain_errors() {
        let phi = registry_get("cyclic").unwrap().descriptor;
        assert_eq!(
            phi.eval_partial(&[2, 1, 1], &[0.5; 3]),
            Err(Error::UnsupportedOrder(4))
        );
        let mellin = registry_get("mellin_net").unwrap().descriptor;
        assert!(matches!(
            mellin.eval_partial(&[0, 0, 0], &[-0.5, 0.5, 0.5]),
            Err(Error::OutOfDomain { .. })
        ));
        // ln terms: d/dx1 (x1x2x3 - ln x1) at (1/2,1,1) = 1 - 2
        let d = mellin.eval_partial(&[1, 0, 0], &[0.5, 1.0, 1.0]).unwrap();
        assert!((d + 1.0).abs() < 1e-15);
        let d3 = mellin.eval_partial(&[3, 0, 0], &[0.5, 1.0, 1.0]).unwrap();
        assert!((d3 + 16.0).abs() < 1e-12);
    }

    #[test]
    fn registry_reference_exponents() {
        assert_eq!(registry_get("cyclic").unwrap().reference_exponent, Some(Rational::new(1, 2)));
        assert_eq!(registry_get("x3k(k=3)").unwrap().reference_exponent, Some(Rational::new(5, 6)));
        assert_eq!(registry_get("x3k").unwrap().reference_exponent, Some(Rational::new(5, 6)));
        assert_eq!(registry_get("chain_n(n=5)").unwrap().reference_exponent, Some(Rational::from_integer(2)));
        assert_eq!(registry_get("gx").unwrap().reference_exponent, None);
        assert_eq!(
            registry_get("nonexistent"),
            Err(Error::UnknownName("nonexistent".into()))
        );
        assert!(registry_get("cyclic(r=2)").is_err());
    }

    #[test]
    fn registry_names_are_unique() {
        let entries = registry_entries();
        let mut names: Vec<_> = entries.iter().map(|e| e.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), entries.len());
    }

    #[test]
    fn exact_evaluation_agrees_with_float() {
        let phi = registry_get("cyclic_r(r=1/3)").unwrap().descriptor;
        let x = [0.375, 0.8125, 0.0625];
        let exact = phi.form().poly().eval_exact(&x);
        let float = phi.eval(&x).unwrap();
        assert!((big_to_f64(&exact) - float).abs() <= f64::EPSILON * float.abs());
    }

    #[test]
    fn json_document_roundtrip_and_rejection() {
        let phi = registry_get("x3k(k=4)").unwrap().descriptor;
        let s = serde_json::to_string(&phi).unwrap();
        assert!(s.contains("\"monomials\""));
        let back: PhaseDescriptor = serde_json::from_str(&s).unwrap();
        assert_eq!(back, phi);
        let mellin = registry_get("mellin_net").unwrap().descriptor;
        let back: PhaseDescriptor = serde_json::from_str(&serde_json::to_string(&mellin).unwrap()).unwrap();
        assert_eq!(back, mellin);
        let bad = r#"{"dimension":3,"monomials":[],"domain":[[0,1],[0,1],[0,1]],"extra":1}"#;
        assert!(serde_json::from_str::<PhaseDescriptor>(bad).is_err());
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("0.25").unwrap(), Rational::new(1, 4));
        assert_eq!(parse_rational("-1/2").unwrap(), Rational::new(-1, 2));
        assert_eq!(parse_rational("-0.5").unwrap(), Rational::new(-1, 2));
        assert_eq!(parse_rational("3").unwrap(), Rational::from_integer(3));
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn display_is_readable() {
        let phi = registry_get("bourgain").unwrap().descriptor;
        assert_eq!(phi.to_string(), "x2^2+x1-2*x1*x2+x1^2");
        assert_eq!(registry_get("mellin_net").unwrap().descriptor.to_string(), "x1*x2*x3-ln(x1)-ln(x2)-ln(x3)");
    }
}
