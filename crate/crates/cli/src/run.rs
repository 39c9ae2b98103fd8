//! One runner per experiment kind. Each returns the files to write and an
//! optional verdict for `--assert`.

use num_complex::Complex64;
use osclab::decaylab::{self, compare, fit_results, run_ladder, DecayExperiment, FitSummary, FormKind, Verdict};
use osclab::microlocal::{aligned_sample_count, decompose, energy_report, sample_grid};
use osclab::oscquad::QuadConfig;
use osclab::phasekit::{for_each_grid_point, registry_get};
use osclab::sublevel::*;
use osclab::webgeom::{curvature_grid, rank1_degeneracy_score, ugly_residual, web_curvature, WebTriple, CURVATURE_GRID};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::*;
use crate::svg::{self, Line};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
}

impl From<osclab::Error> for Failure {
    fn from(e: osclab::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

pub struct Report {
    pub csv: String,
    pub json: serde_json::Value,
    pub svg: Option<String>,
    pub verdict: Option<Verdict>,
    pub summary: String,
}

fn params<T: serde::de::DeserializeOwned>(cfg: &ExperimentConfig) -> Result<T, Failure> {
    cfg.params().map_err(Failure::Config)
}

fn verdict_of(ok: bool) -> Verdict {
    if ok {
        Verdict::Match
    } else {
        Verdict::Mismatch
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn decay(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let p: DecayParams = params(cfg)?;
    let exp = DecayExperiment {
        phase: p.phase.clone(),
        witness: p.witness.resolve()?,
        ladder: p.ladder.values(),
        form: p.form.unwrap_or(FormKind::T3),
        domain: p.domain.clone(),
        maps: p.maps.clone(),
    };
    let quad = p.quad.unwrap_or_else(QuadConfig::ladder);
    let results = run_ladder(&exp, &quad)?;
    let fit = fit_results(&results, p.tail)?;
    let gamma = match p.gamma {
        Some(g) => Some(g),
        None => registry_get(&p.phase)?
            .reference_exponent
            .map(|r| *r.numer() as f64 / *r.denom() as f64),
    };
    let verdict = gamma.map(|g| compare(&fit, g, p.tol));

    let mut lines = vec![Line {
        slope: fit.slope,
        intercept: fit.intercept,
        label: format!("fit slope {:.4}", fit.slope),
        dashed: false,
    }];
    if let Some(g) = gamma {
        let tail = &fit.points[fit.points.len() - p.tail..];
        let xs: Vec<f64> = tail.iter().map(|q| q.0).collect();
        let ys: Vec<f64> = tail.iter().map(|q| q.1).collect();
        lines.push(Line {
            slope: -g,
            intercept: mean(&ys) + g * mean(&xs),
            label: format!("reference slope {:.4}", -g),
            dashed: true,
        });
    }
    let svg = svg::loglog(&format!("{} decay", p.phase), "ln λ", "ln |T|", &fit.points, &lines);
    let summary = format!(
        "slope {:.4} ± {:.4} over {} rungs{}",
        fit.slope,
        fit.stderr,
        p.tail,
        verdict.map(|v| format!(", verdict {v:?}")).unwrap_or_default()
    );
    Ok(Report {
        csv: decaylab::ladder_csv(&results),
        json: json!({
            "kind": "decay",
            "seed": cfg.seed,
            "experiment": exp,
            "quad": quad,
            "results": results,
            "fit": FitSummary::new(&fit, verdict),
            "gamma": gamma,
            "tol": p.tol,
            "tail": p.tail,
        }),
        svg: Some(svg),
        verdict,
        summary,
    })
}

fn build_system(spec: &SystemSpec, eps: f64, seed: u64) -> osclab::Result<SublevelSystem> {
    match spec {
        SystemSpec::System91 { phi, psi, h, domain } => {
            system_9_1(&phi.resolve()?, &psi.resolve()?, build_three(h, seed)?, *domain, eps)
        }
        SystemSpec::System12 { phi, h, domain } => system_12(&phi.resolve()?, build_three(h, seed)?, *domain, eps),
        SystemSpec::Scalar { a, maps, f, domain } => scalar_sublevel(
            [a[0].resolve()?, a[1].resolve()?, a[2].resolve()?],
            [maps[0].resolve()?, maps[1].resolve()?, maps[2].resolve()?],
            build_three(f, seed)?,
            *domain,
            eps,
        ),
        SystemSpec::Multiprogression {} => build_multiprogression_witness(eps)?.system(eps),
    }
}

fn measure_svg(title: &str, pts: &[(f64, f64)], exponent: Option<f64>) -> String {
    let logs: Vec<(f64, f64)> = pts.iter().map(|q| (q.0.ln(), q.1.ln())).collect();
    let lines: Vec<Line> = exponent
        .map(|e| {
            let xs: Vec<f64> = logs.iter().map(|q| q.0).collect();
            let ys: Vec<f64> = logs.iter().map(|q| q.1).collect();
            vec![Line {
                slope: e,
                intercept: mean(&ys) - e * mean(&xs),
                label: format!("fit exponent {e:.3}"),
                dashed: false,
            }]
        })
        .unwrap_or_default();
    svg::loglog(title, "ln ε", "ln measure", &logs, &lines)
}

pub fn sublevel(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let p: SublevelParams = params(cfg)?;
    if p.eps.is_empty() {
        return Err(Failure::Config("eps ladder is empty".into()));
    }
    let mut rows = Vec::new();
    let mut pts = Vec::new();
    let mut volume = 0.0;
    for &eps in &p.eps {
        let sys = build_system(&p.system, eps, cfg.seed)?;
        volume = sys.volume();
        let m = estimate_measure(&sys, p.samples, cfg.seed)?;
        pts.push((eps, fit_value(&m, volume)));
        rows.push(MeasureRow {
            eps,
            estimate: m.estimate,
            ci95: m.half_width_95,
            method: m.method,
            seed: cfg.seed,
        });
        if let Some(cells) = p.grid {
            let g = grid_measure(&sys, cells)?;
            rows.push(MeasureRow {
                eps,
                estimate: g.estimate,
                ci95: 0.0,
                method: g.method,
                seed: cfg.seed,
            });
        }
    }
    let exponent = if pts.len() >= 2 { fitted_exponent(&pts) } else { None };
    let verdict = p
        .exponent_range
        .map(|[lo, hi]| verdict_of(exponent.is_some_and(|e| (lo..=hi).contains(&e))));
    Ok(Report {
        csv: measure_csv(&rows),
        json: json!({
            "kind": "sublevel",
            "seed": cfg.seed,
            "system": p.system,
            "samples": p.samples,
            "volume": volume,
            "rows": rows,
            "fit_points": pts,
            "exponent": exponent,
            "verdict": verdict,
        }),
        svg: Some(measure_svg("sublevel measure", &pts, exponent)),
        verdict,
        summary: format!(
            "{} rungs, fitted exponent {}",
            p.eps.len(),
            exponent.map_or("n/a".to_string(), |e| format!("{e:.3}"))
        ),
    })
}

pub fn witness18(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let p: Witness18Params = params(cfg)?;
    let mut rows = Vec::new();
    let mut pts = Vec::new();
    let mut per_eps = Vec::new();
    let mut ok = true;
    for &eps in &p.eps {
        let w = build_multiprogression_witness(eps)?;
        let m = multiprogression_measure(&w);
        let check = sample_block_membership(&w, p.membership_samples, cfg.seed);
        ok &= m.lower >= 0.1 * w.sqrt_eps() && m.rejected == 0 && check.failures == 0;
        rows.push(MeasureRow {
            eps,
            estimate: m.lower,
            ci95: 0.0,
            method: MeasureMethod::ExactBlocks,
            seed: cfg.seed,
        });
        pts.push((eps, m.lower));
        if let Some(n) = p.monte_carlo {
            let mc = estimate_measure(&w.system(eps)?, n, cfg.seed)?;
            rows.push(MeasureRow {
                eps,
                estimate: mc.estimate,
                ci95: mc.half_width_95,
                method: mc.method,
                seed: cfg.seed,
            });
        }
        per_eps.push(json!({"measure": m, "membership": check}));
    }
    let exponent = if pts.len() >= 2 { fitted_exponent(&pts) } else { None };
    if pts.len() >= 2 {
        let [lo, hi] = p.exponent_range;
        ok &= exponent.is_some_and(|e| (lo..=hi).contains(&e));
    }
    let verdict = Some(verdict_of(ok));
    Ok(Report {
        csv: measure_csv(&rows),
        json: json!({
            "kind": "witness18",
            "seed": cfg.seed,
            "eps": p.eps,
            "blocks": per_eps,
            "exponent": exponent,
            "verdict": verdict,
        }),
        svg: Some(measure_svg("multiprogression lower bound", &pts, exponent)),
        verdict,
        summary: format!(
            "{} rungs, exponent {}",
            p.eps.len(),
            exponent.map_or("n/a".to_string(), |e| format!("{e:.3}"))
        ),
    })
}

pub fn web(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let p: WebParams = params(cfg)?;
    let web = WebTriple::graph(p.phi3.resolve()?, p.domain)?;
    let summary = curvature_grid(&web)?;
    let mut csv = String::from("x,y,curvature\n");
    let mut err = None;
    for_each_grid_point(&p.domain, CURVATURE_GRID, |q| match web_curvature(&web, [q[0], q[1]]) {
        Ok(k) => csv.push_str(&format!("{},{},{}\n", q[0], q[1], k)),
        Err(e) => {
            err.get_or_insert(e);
        }
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    let linearizable = summary.max_abs <= p.tol;
    let verdict = p.expect.map(|e| match e {
        WebExpect::Flat => verdict_of(linearizable),
        WebExpect::Curved => verdict_of(summary.min_abs >= p.curved_min),
    });
    Ok(Report {
        csv,
        json: json!({
            "kind": "web",
            "seed": cfg.seed,
            "domain": p.domain,
            "min_abs": summary.min_abs,
            "max_abs": summary.max_abs,
            "linearizable": linearizable,
            "tol": p.tol,
            "verdict": verdict,
        }),
        svg: None,
        verdict,
        summary: format!("|K| in [{:.3e}, {:.3e}], linearizable {linearizable}", summary.min_abs, summary.max_abs),
    })
}

pub fn degeneracy(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let p: DegeneracyParams = params(cfg)?;
    let phase = p.phase.resolve()?;
    let mut csv = String::from("x1,x2,x3,score,ugly_residual\n");
    let mut points = Vec::new();
    let mut degenerate_ok = true;
    let mut nondegenerate_ok = true;
    for &b in &p.basepoints {
        let score = rank1_degeneracy_score(&phase, b, p.halfwidth, p.step)?;
        let ugly = ugly_residual(&phase, b).ok().map(|u| u.0);
        degenerate_ok &= score <= p.degenerate_max && ugly.is_none_or(|u| u <= 1e-10);
        nondegenerate_ok &= score >= p.nondegenerate_min;
        let ugly_text = ugly.map_or(String::new(), |u| u.to_string());
        csv.push_str(&format!("{},{},{},{},{}\n", b[0], b[1], b[2], score, ugly_text));
        points.push(json!({"basepoint": b, "score": score, "ugly_residual": ugly}));
    }
    let verdict = p.expect.map(|e| match e {
        DegeneracyExpect::Degenerate => verdict_of(degenerate_ok),
        DegeneracyExpect::Nondegenerate => verdict_of(nondegenerate_ok),
    });
    Ok(Report {
        csv,
        json: json!({
            "kind": "degeneracy",
            "seed": cfg.seed,
            "halfwidth": p.halfwidth,
            "step": p.step,
            "points": points,
            "verdict": verdict,
        }),
        svg: None,
        verdict,
        summary: format!("{} basepoints scored", p.basepoints.len()),
    })
}

fn signal(spec: &SignalSpec, lambda: f64, seed: u64) -> Box<dyn Fn(f64) -> Complex64> {
    match *spec {
        SignalSpec::Random { waves } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<(f64, Complex64)> = (0..waves)
                .map(|_| {
                    let xi = rng.gen_range(-lambda..=lambda);
                    (xi, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                })
                .collect();
            Box::new(move |x| w.iter().map(|&(xi, c)| c * Complex64::from_polar(1.0, xi * x)).sum())
        }
        SignalSpec::Chirp { rate } => Box::new(move |x| Complex64::from_polar(1.0, rate * x * x)),
        SignalSpec::Wave { xi } => Box::new(move |x| Complex64::from_polar(1.0, xi * x)),
        SignalSpec::Constant { value } => Box::new(move |_| Complex64::new(value, 0.0)),
    }
}

pub fn microlocal(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let p: MicrolocalParams = params(cfg)?;
    let n = aligned_sample_count(p.lambda)?;
    let grid = sample_grid(n);
    let mut csv = String::from("run,m,kept,structured,pseudorandom,tail,max_residual,window_energy\n");
    let mut runs = Vec::new();
    let mut ok = true;
    let mut worst = 0.0f64;
    for r in 0..p.repeats.max(1) {
        let seed = cfg.seed + r;
        let f = signal(&p.signal, p.lambda, seed);
        let samples: Vec<Complex64> = grid.iter().map(|&x| f(x)).collect();
        let d = decompose(&samples, p.lambda, p.sigma, p.max_freq)?;
        worst = worst.max(d.reconstruction_error);
        ok &= d.reconstruction_error <= 1e-8
            && d.intervals.iter().all(|w| {
                w.kept.len() <= d.cap && w.residual.iter().all(|c| c.1.norm() <= d.threshold)
            });
        for e in energy_report(&d) {
            csv.push_str(&format!(
                "{r},{},{},{},{},{},{},{}\n",
                e.m, e.kept, e.structured, e.pseudorandom, e.tail, e.max_residual, e.window_energy
            ));
        }
        let kept: Vec<serde_json::Value> = d
            .intervals
            .iter()
            .map(|w| json!({"m": w.m, "kept": w.kept, "capped": w.capped}))
            .collect();
        runs.push(json!({
            "seed": seed,
            "supnorm": d.supnorm,
            "threshold": d.threshold,
            "cap": d.cap,
            "reconstruction_error": d.reconstruction_error,
            "intervals": kept,
        }));
    }
    let verdict = Some(verdict_of(ok));
    Ok(Report {
        csv,
        json: json!({
            "kind": "microlocal",
            "seed": cfg.seed,
            "lambda": p.lambda,
            "sigma": p.sigma,
            "samples": n,
            "runs": runs,
            "verdict": verdict,
        }),
        svg: None,
        verdict,
        summary: format!("{} runs on {n} samples, max reconstruction error {worst:.2e}", p.repeats.max(1)),
    })
}

pub fn hsigma(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let p: HsigmaParams = params(cfg)?;
    let f = p.f.build(cfg.seed, 0)?;
    let mut csv = String::from("a,lhs,rhs,ratio\n");
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for &a in &p.a {
        let e = hsigma_chirp_energy(&f, p.sigma, a, p.m)?;
        csv.push_str(&format!("{a},{},{},{}\n", e.lhs, e.rhs, e.ratio));
        rows.push(json!({"a": a, "energy": e}));
        ratios.push(e.ratio);
    }
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    let verdict = Some(verdict_of(lo > 0.0 && spread <= p.max_spread));
    Ok(Report {
        csv,
        json: json!({
            "kind": "hsigma",
            "seed": cfg.seed,
            "sigma": p.sigma,
            "m": p.m,
            "rows": rows,
            "spread": spread,
            "verdict": verdict,
        }),
        svg: None,
        verdict,
        summary: format!("ratio spread {spread:.3} over {} values of A", p.a.len()),
    })
}
