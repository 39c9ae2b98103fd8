//! Piecewise test functions on the line and the λ-adapted norm
//! `‖f‖_{N,λ} = Σ_k λ^{-k} sup|D^k f|`.
//!
//! A [`TestFunction1D`] is a list of closed pieces with disjoint interiors.
//! Outside every piece the function is zero, so an indicator is simply a
//! single constant piece. Pieces carry one of four closed-form kinds, which
//! makes every derivative available symbolically.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PieceKind {
    Constant { value: Complex64 },
    /// `e^{i(a x² + b x + c)}`
    Chirp { a: f64, b: f64, c: f64 },
    /// `e^{i a ln x}`, only for `x > 0`
    LogChirp { a: f64 },
    /// `Σ c_k e^{i k ω x}`
    BandLimited { omega: f64, coeffs: Vec<(i64, Complex64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    #[serde(flatten)]
    pub kind: PieceKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestFunctionDoc {
    pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TestFunctionDoc", into = "TestFunctionDoc")]
pub struct TestFunction1D {
    pieces: Vec<Piece>,
    breakpoints: Vec<f64>,
}

impl From<TestFunction1D> for TestFunctionDoc {
    fn from(f: TestFunction1D) -> Self {
        TestFunctionDoc { pieces: f.pieces }
    }
}

impl TryFrom<TestFunctionDoc> for TestFunction1D {
    type Error = Error;
    fn try_from(doc: TestFunctionDoc) -> Result<Self> {
        TestFunction1D::from_pieces(doc.pieces)
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(Error::EmptyInterval { lo, hi })
    }
}

pub fn make_indicator(a: f64, b: f64) -> Result<TestFunction1D> {
    make_constant(Complex64::new(1.0, 0.0), a, b)
}

pub fn make_constant(value: Complex64, a: f64, b: f64) -> Result<TestFunction1D> {
    TestFunction1D::from_pieces(vec![Piece {
        lo: a,
        hi: b,
        kind: PieceKind::Constant { value },
    }])
}

/// `e^{i(a x² + b x + c)}` on `support`, zero outside.
pub fn make_chirp(a: f64, b: f64, c: f64, support: [f64; 2]) -> Result<TestFunction1D> {
    TestFunction1D::from_pieces(vec![Piece {
        lo: support[0],
        hi: support[1],
        kind: PieceKind::Chirp { a, b, c },
    }])
}

/// `e^{i a ln x}` on `support ⊂ (0, ∞)`.
pub fn make_log_chirp(a: f64, support: [f64; 2]) -> Result<TestFunction1D> {
    TestFunction1D::from_pieces(vec![Piece {
        lo: support[0],
        hi: support[1],
        kind: PieceKind::LogChirp { a },
    }])
}

pub fn make_band_limited(omega: f64, coeffs: Vec<(i64, Complex64)>, support: [f64; 2]) -> Result<TestFunction1D> {
    TestFunction1D::from_pieces(vec![Piece {
        lo: support[0],
        hi: support[1],
        kind: PieceKind::BandLimited { omega, coeffs },
    }])
}

impl PieceKind {
    fn eval(&self, x: f64) -> Complex64 {
        match self {
            PieceKind::Constant { value } => *value,
            PieceKind::Chirp { a, b, c } => Complex64::cis(a * x * x + b * x + c),
            PieceKind::LogChirp { a } => Complex64::cis(a * x.ln()),
            PieceKind::BandLimited { omega, coeffs } => coeffs
                .iter()
                .map(|&(k, ck)| ck * Complex64::cis(k as f64 * omega * x))
                .sum(),
        }
    }

    /// `D^k` of the piece at `x`.
    fn derivative(&self, k: u32, x: f64) -> Complex64 {
        if k == 0 {
            return self.eval(x);
        }
        match self {
            PieceKind::Constant { .. } => Complex64::new(0.0, 0.0),
            PieceKind::Chirp { a, b, .. } => {
                // D^k e^{iθ} = P_k e^{iθ}, P_{k+1} = P_k' + iθ' P_k, θ' = 2ax + b.
                let mut p = vec![Complex64::new(1.0, 0.0)];
                for _ in 0..k {
                    let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
                    for (j, &c) in p.iter().enumerate() {
                        if j > 0 {
                            next[j - 1] += c * j as f64;
                        }
                        next[j] += c * Complex64::new(0.0, *b);
                        next[j + 1] += c * Complex64::new(0.0, 2.0 * a);
                    }
                    p = next;
                }
                horner(&p, x) * self.eval(x)
            }
            PieceKind::LogChirp { a } => {
                // Laurent coefficients in 1/x: Q_{k+1} = Q_k' + (ia/x) Q_k.
                let mut q = vec![Complex64::new(1.0, 0.0)];
                for _ in 0..k {
                    let mut next = vec![Complex64::new(0.0, 0.0); q.len() + 1];
                    for (j, &c) in q.iter().enumerate() {
                        next[j + 1] += c * (-(j as f64)) + c * Complex64::new(0.0, *a);
                    }
                    q = next;
                }
                horner(&q, 1.0 / x) * self.eval(x)
            }
            PieceKind::BandLimited { omega, coeffs } => coeffs
                .iter()
                .map(|&(n, cn)| {
                    let w = n as f64 * omega;
                    cn * Complex64::new(0.0, w).powu(k) * Complex64::cis(w * x)
                })
                .sum(),
        }
    }

    fn sup_bound(&self) -> f64 {
        match self {
            PieceKind::Constant { value } => value.norm(),
            PieceKind::Chirp { .. } | PieceKind::LogChirp { .. } => 1.0,
            PieceKind::BandLimited { coeffs, .. } => coeffs.iter().map(|(_, c)| c.norm()).sum(),
        }
    }

    fn frequency(&self, x: f64) -> f64 {
        match self {
            PieceKind::Constant { .. } => 0.0,
            PieceKind::Chirp { a, b, .. } => 2.0 * a * x + b,
            PieceKind::LogChirp { a } => a / x,
            PieceKind::BandLimited { omega, coeffs } => coeffs
                .iter()
                .filter(|(_, c)| *c != Complex64::new(0.0, 0.0))
                .map(|(k, _)| (*k as f64 * omega).abs())
                .fold(0.0, f64::max),
        }
    }

    fn conj(&self) -> PieceKind {
        match self {
            PieceKind::Constant { value } => PieceKind::Constant { value: value.conj() },
            PieceKind::Chirp { a, b, c } => PieceKind::Chirp { a: -a, b: -b, c: -c },
            PieceKind::LogChirp { a } => PieceKind::LogChirp { a: -a },
            PieceKind::BandLimited { omega, coeffs } => PieceKind::BandLimited {
                omega: *omega,
                coeffs: coeffs.iter().map(|&(k, c)| (-k, c.conj())).collect(),
            },
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            PieceKind::Constant { value } => *value == Complex64::new(0.0, 0.0),
            PieceKind::BandLimited { coeffs, .. } => coeffs.iter().all(|(_, c)| *c == Complex64::new(0.0, 0.0)),
            _ => false,
        }
    }
}

fn horner(coeffs: &[Complex64], x: f64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

impl TestFunction1D {
    pub fn from_pieces(mut pieces: Vec<Piece>) -> Result<Self> {
        for p in &pieces {
            check_interval(p.lo, p.hi)?;
            if matches!(p.kind, PieceKind::LogChirp { .. }) && p.lo <= 0.0 {
                return Err(Error::NonPositiveSupport { lo: p.lo, hi: p.hi });
            }
        }
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        if pieces.windows(2).any(|w| w[0].hi > w[1].lo) {
            return Err(Error::invalid("pieces overlap"));
        }
        let mut breakpoints: Vec<f64> = pieces.iter().flat_map(|p| [p.lo, p.hi]).collect();
        breakpoints.dedup();
        Ok(TestFunction1D { pieces, breakpoints })
    }

    /// The zero function (no pieces).
    pub fn zero() -> Self {
        TestFunction1D {
            pieces: vec![],
            breakpoints: vec![],
        }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `[min lo, max hi]`, or `None` for the zero function.
    pub fn support(&self) -> Option<[f64; 2]> {
        Some([self.pieces.first()?.lo, self.pieces.last()?.hi])
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.iter().all(|p| p.kind.is_zero())
    }

    fn piece_at(&self, x: f64) -> Option<&Piece> {
        // First piece whose closed interval holds x; at a shared endpoint the
        // left piece wins.
        let idx = self.pieces.partition_point(|p| p.hi < x);
        self.pieces.get(idx).filter(|p| p.lo <= x)
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.piece_at(x).map_or(Complex64::new(0.0, 0.0), |p| p.kind.eval(x))
    }

    /// `D^k f(x)` computed on the piece containing `x`.
    pub fn derivative(&self, k: u32, x: f64) -> Complex64 {
        self.piece_at(x)
            .map_or(Complex64::new(0.0, 0.0), |p| p.kind.derivative(k, x))
    }

    /// Declared bound on `|f|`.
    pub fn sup_bound(&self) -> f64 {
        self.pieces.iter().map(|p| p.kind.sup_bound()).fold(0.0, f64::max)
    }

    /// Signed instantaneous frequency `d/dx arg f` for unimodular pieces,
    /// the top frequency for band-limited pieces, 0 elsewhere.
    pub fn local_frequency(&self, x: f64) -> f64 {
        self.piece_at(x).map_or(0.0, |p| p.kind.frequency(x))
    }

    pub fn conj(&self) -> Self {
        TestFunction1D {
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece {
                    lo: p.lo,
                    hi: p.hi,
                    kind: p.kind.conj(),
                })
                .collect(),
            breakpoints: self.breakpoints.clone(),
        }
    }

    /// `‖f‖_{N,λ} = Σ_{k≤N} λ^{-k} sup|D^k f|`, sup taken piecewise.
    pub fn norm_n_lambda(&self, n: u32, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::invalid("λ must be positive"));
        }
        let mut total = 0.0;
        for k in 0..=n {
            let sup = self
                .pieces
                .iter()
                .map(|p| piece_sup(p, k))
                .fold(0.0, f64::max);
            total += sup * lambda.powi(-(k as i32));
        }
        Ok(total)
    }
}

pub fn norm_n_lambda(f: &TestFunction1D, n: u32, lambda: f64) -> Result<f64> {
    f.norm_n_lambda(n, lambda)
}

const SUP_GRID: usize = 4096;

/// Grid sup of `|D^k|` on a piece, refined by golden-section search in the
/// two cells around the best grid point.
fn piece_sup(p: &Piece, k: u32) -> f64 {
    let g = |x: f64| p.kind.derivative(k, x).norm();
    let h = (p.hi - p.lo) / (SUP_GRID - 1) as f64;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..SUP_GRID {
        let x = if i == SUP_GRID - 1 { p.hi } else { p.lo + i as f64 * h };
        let v = g(x);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = (p.lo + (best_i as f64 - 1.0) * h).max(p.lo);
    let hi = (p.lo + (best_i as f64 + 1.0) * h).min(p.hi);
    best.max(golden_max(g, lo, hi))
}

fn golden_max(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..60 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    gc.max(gd)
}

/// Length of the shrinking indicator `[0, (π/4)^{1/k} λ^{-1/k}]`.
pub fn shrinking_length(lambda: f64, k: u32) -> f64 {
    (PI / 4.0 / lambda).powf(1.0 / k as f64)
}
