use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use circlelab_core::arcs::{check_prop31, classify_n, ArcParams, CentralParams};
use circlelab_core::arith::primes_up_to;
use circlelab_core::bounds::{BoundTable, Branch};
use circlelab_core::counting::{chi_p_sequence, count_box, CountMethod, CountOptions, CountResult, Stabilization};
use circlelab_core::densities::{predict_constant, singular_integral_j, singular_series_s, IntegralOptions, PredictOptions};
use circlelab_core::expsums::{mean_value_count, minor_arc_sup, ArcPoint};
use circlelab_core::verify::{fit_counts, least_squares, Verdict};
use circlelab_core::{Error as CoreError, FormSystem, UnivariatePoly};

use crate::cache::Cache;
use crate::output::{ensure_dir, write_csv, write_json, Meta};
use crate::{Cli, Command, DensityArgs, GlobalArgs, MethodArg};

pub enum Outcome {
    Done,
    Inconclusive,
}

impl Outcome {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Outcome::Done => ExitCode::SUCCESS,
            Outcome::Inconclusive => ExitCode::from(3),
        }
    }
}

pub fn is_budget_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| matches!(c.downcast_ref::<CoreError>(), Some(CoreError::BudgetExceeded { .. })))
}

struct Ctx<'a> {
    g: &'a GlobalArgs,
    sys: Option<FormSystem>,
    canonical: Option<String>,
    cache: Option<Cache>,
}

impl Ctx<'_> {
    fn system(&self) -> Result<&FormSystem> {
        self.sys.as_ref().ok_or_else(|| anyhow!("this subcommand needs --system <path>"))
    }

    fn meta(&self, command: &'static str) -> Meta {
        Meta {
            tool: "circlelab",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: self.g.seed,
            budget: self.g.budget,
            system_hash: self.canonical.as_deref().map(|c| Cache::key(c, "system", "")),
        }
    }

    fn count_opts(&self, method: Option<CountMethod>) -> CountOptions {
        CountOptions { budget: self.g.budget, workers: self.g.workers, method }
    }

    fn lookup<T: for<'de> Deserialize<'de>>(&self, op: &str, params: &str) -> Option<T> {
        let (cache, sys) = (self.cache.as_ref()?, self.canonical.as_deref()?);
        cache.get(&Cache::key(sys, op, params))
    }

    fn store<T: Serialize>(&self, op: &str, params: &str, value: &T) -> Result<()> {
        if let (Some(cache), Some(sys)) = (self.cache.as_ref(), self.canonical.as_deref()) {
            cache.put(&Cache::key(sys, op, params), value)?;
        }
        Ok(())
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    if g.workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(g.workers).build_global().context("configuring worker pool")?;
    }
    if g.schedule.windows(2).any(|w| !(w[1] > w[0])) {
        bail!("--schedule must be strictly increasing");
    }
    let sys = match &g.system {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(FormSystem::from_json(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        None => None,
    };
    let canonical = sys.as_ref().map(FormSystem::canonical_json);
    let cache = match (g.no_cache, Cache::default_dir()) {
        (false, Some(dir)) if sys.is_some() => Some(Cache::open(&dir)?),
        _ => None,
    };
    ensure_dir(&g.out)?;
    let ctx = Ctx { g, sys, canonical, cache };
    match &cli.command {
        Command::Count { method } => cmd_count(&ctx, method.map(|m| match m {
            MethodArg::Exhaustive => CountMethod::Exhaustive,
            MethodArg::MeetInMiddle => CountMethod::MeetInMiddle,
        })),
        Command::Density { p_max, h_max, integral } => cmd_density(&ctx, *p_max, *h_max, integral),
        Command::Predict { density } => cmd_predict(&ctx, density),
        Command::VerifyAsymptotic { density, band_lo, band_hi } => cmd_verify(&ctx, density, (*band_lo, *band_hi)),
        Command::WeylScan { j, q_exponent, depth, jitter } => cmd_weyl_scan(&ctx, *j, *q_exponent, *depth, *jitter),
        Command::MeanvalueScan { j, u } => cmd_meanvalue_scan(&ctx, *j, *u),
        Command::BoundsTable { d, k_max, rho, n } => cmd_bounds_table(&ctx, d, *k_max, *rho, *n),
        Command::ArcsClassify { alpha, beta, x, theta, eta, omega, c, dim_v, nary } => {
            cmd_arcs_classify(&ctx, *alpha, beta, *x, (*theta, *eta, *omega), *c, *dim_v, *nary)
        }
    }
}

fn radii(schedule: &[f64]) -> Result<Vec<u64>> {
    if schedule.is_empty() {
        bail!("--schedule is required");
    }
    schedule
        .iter()
        .map(|&v| if v >= 0.0 && v.fract() == 0.0 && v < 1e15 { Ok(v as u64) } else { Err(anyhow!("schedule entry {v} is not a nonnegative integer")) })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct CachedCount {
    n: u128,
    method: CountMethod,
}

#[derive(Serialize)]
struct CountRow {
    #[serde(rename = "X")]
    x: u64,
    #[serde(rename = "N")]
    n: u128,
    seconds: f64,
    method: &'static str,
}

fn counts(ctx: &Ctx, xs: &[u64], method: Option<CountMethod>) -> Result<Vec<CountResult>> {
    let sys = ctx.system()?;
    let opts = ctx.count_opts(method);
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        let params = format!("x={x}");
        let start = Instant::now();
        let cached = ctx.lookup::<CachedCount>("count", &params).filter(|c| method.is_none_or(|m| m == c.method));
        let r = match cached {
            Some(c) => CountResult { x, n: c.n, method: c.method, elapsed_secs: start.elapsed().as_secs_f64(), partition: Vec::new() },
            None => {
                let r = count_box(sys, x, &opts).with_context(|| format!("counting at X={x}"))?;
                ctx.store("count", &params, &CachedCount { n: r.n, method: r.method })?;
                r
            }
        };
        out.push(r);
    }
    Ok(out)
}

fn count_rows(rs: &[CountResult]) -> Vec<CountRow> {
    rs.iter().map(|r| CountRow { x: r.x, n: r.n, seconds: r.elapsed_secs, method: r.method.as_str() }).collect()
}

fn cmd_count(ctx: &Ctx, method: Option<CountMethod>) -> Result<Outcome> {
    let rs = counts(ctx, &radii(&ctx.g.schedule)?, method)?;
    let path = write_csv(&ctx.g.out, "count.csv", None, &count_rows(&rs))?;
    for r in &rs {
        println!("X={} N={}", r.x, r.n);
    }
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Done)
}

#[derive(Clone, Serialize, Deserialize)]
struct ChiRow {
    p: u64,
    h: u32,
    chi_num: String,
    chi_den: String,
    stabilized: bool,
}

/// `χ_p(h)` rows for every prime up to `p_max`, as deep as the budget allows.
fn chi_rows(ctx: &Ctx, p_max: u64, h_max: u32) -> Result<Vec<ChiRow>> {
    let sys = ctx.system()?;
    let opts = ctx.count_opts(None);
    let mut rows = Vec::new();
    for p in primes_up_to(p_max) {
        let params = format!("p={p};h={h_max}");
        if let Some(cached) = ctx.lookup::<Vec<ChiRow>>("chi_p", &params) {
            rows.extend(cached);
            continue;
        }
        let mut h = h_max;
        let seq = loop {
            match chi_p_sequence(sys, p, h, &opts) {
                Ok(s) => break s,
                Err(CoreError::BudgetExceeded { .. }) if h > 1 => h -= 1,
                Err(e) => return Err(e).with_context(|| format!("local density at p={p}")),
            }
        };
        let from = match seq.stabilization {
            Stabilization::Stabilized { depth } => depth,
            _ => u32::MAX,
        };
        let these: Vec<ChiRow> = seq
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| ChiRow {
                p,
                h: i as u32 + 1,
                chi_num: v.numer().to_string(),
                chi_den: v.denom().to_string(),
                stabilized: i as u32 + 1 >= from,
            })
            .collect();
        // Budget-truncated tables depend on the budget, so only full depth is cached.
        if h == h_max {
            ctx.store("chi_p", &params, &these)?;
        }
        rows.extend(these);
    }
    Ok(rows)
}

fn cmd_density(ctx: &Ctx, p_max: u64, h_max: u32, integral: &[f64]) -> Result<Outcome> {
    let sys = ctx.system()?;
    let rows = chi_rows(ctx, p_max, h_max)?;
    write_csv(&ctx.g.out, "chi_p.csv", None, &rows)?;
    let series = if ctx.g.schedule.is_empty() { None } else { Some(singular_series_s(sys, &radii(&ctx.g.schedule)?, &ctx.count_opts(None))?) };
    let integral = if integral.is_empty() {
        None
    } else {
        let io = IntegralOptions { seed: ctx.g.seed, budget: ctx.g.budget.max(IntegralOptions::default().budget), ..IntegralOptions::default() };
        Some(singular_integral_j(sys, integral, &io)?)
    };
    #[derive(Serialize)]
    struct DensityOut<T, U> {
        chi_p: Vec<ChiRow>,
        series: Option<T>,
        integral: Option<U>,
    }
    let path = write_json(&ctx.g.out, "density.json", &ctx.meta("density"), &DensityOut { chi_p: rows, series, integral })?;
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Done)
}

fn predict_opts(ctx: &Ctx, a: &DensityArgs) -> PredictOptions {
    PredictOptions {
        series_schedule: a.series.clone(),
        integral_schedule: a.integral.clone(),
        p_max: a.p_max,
        p0: a.p0,
        h_max: a.h_max,
        chi_inf_samples: a.chi_samples,
        seed: ctx.g.seed,
        budget: ctx.g.budget,
    }
}

fn cmd_predict(ctx: &Ctx, a: &DensityArgs) -> Result<Outcome> {
    let report = predict_constant(ctx.system()?, &predict_opts(ctx, a))?;
    let path = write_json(&ctx.g.out, "predict.json", &ctx.meta("predict"), &report)?;
    println!("C = {} ± {} (poisoned: {})", report.predicted_c, report.predicted_c_error, report.poisoned);
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Done)
}

fn cmd_verify(ctx: &Ctx, a: &DensityArgs, band: (f64, f64)) -> Result<Outcome> {
    if !(band.0 < band.1) {
        bail!("empty tolerance band");
    }
    let sys = ctx.system()?;
    let xs = radii(&ctx.g.schedule)?;
    let density = predict_constant(sys, &predict_opts(ctx, a))?;
    let rs = counts(ctx, &xs, None)?;
    let fit = fit_counts(sys, &rs, &density, band)?;
    write_csv(&ctx.g.out, "counts.csv", None, &count_rows(&rs))?;
    let path = write_json(&ctx.g.out, "verify.json", &ctx.meta("verify-asymptotic"), &fit)?;
    println!(
        "verdict: {:?} (fitted exponent {:.3}, expected {}, C = {})",
        fit.verdict, fit.fitted_exponent, fit.expected_exponent, fit.predicted_c
    );
    eprintln!("wrote {}", path.display());
    Ok(if fit.verdict == Verdict::Inconclusive { Outcome::Inconclusive } else { Outcome::Done })
}

#[derive(Serialize)]
struct WeylRow {
    #[serde(rename = "X")]
    x: u64,
    #[serde(rename = "Q")]
    q: f64,
    sup_ratio: f64,
    argmax_alpha: f64,
}

fn cmd_weyl_scan(ctx: &Ctx, j: u32, q_exponent: f64, depth: Option<u64>, jitter: usize) -> Result<Outcome> {
    let xs = radii(&ctx.g.schedule)?;
    let mut rows = Vec::new();
    let mut sigma0 = 0;
    for x in xs {
        let q = (x as f64).powf(q_exponent);
        let depth = depth.unwrap_or(q.ceil() as u64);
        let r = minor_arc_sup(j, x, q, depth, jitter, ctx.g.seed).with_context(|| format!("minor arc scan at X={x}"))?;
        sigma0 = r.sigma0;
        rows.push(WeylRow { x, q, sup_ratio: r.ratio, argmax_alpha: r.argmax_alpha });
    }
    let meta = format!("j={j},sigma0={sigma0},q_exponent={q_exponent},seed={},version={}", ctx.g.seed, env!("CARGO_PKG_VERSION"));
    let path = write_csv(&ctx.g.out, "weyl.csv", Some(&meta), &rows)?;
    for r in &rows {
        println!("X={} Q={:.3} ratio={:.4}", r.x, r.q, r.sup_ratio);
    }
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct MeanValueRow {
    #[serde(rename = "X")]
    x: u64,
    count: u128,
}

fn cmd_meanvalue_scan(ctx: &Ctx, j: u32, u: u32) -> Result<Outcome> {
    let phi = UnivariatePoly::monomial(j, 1);
    let rows = radii(&ctx.g.schedule)?
        .into_iter()
        .map(|x| Ok(MeanValueRow { x, count: mean_value_count(&phi, u, 1, x as i64, ctx.g.budget)? }))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.x > 0).map(|r| ((r.x as f64).ln(), (r.count as f64).ln())).collect();
    let (slope, _, _) = least_squares(&pts);
    write_csv(&ctx.g.out, "meanvalue.csv", None, &rows)?;
    #[derive(Serialize)]
    struct Fit {
        j: u32,
        u: u32,
        slope: f64,
        reference_slope: i64,
    }
    let fit = Fit { j, u, slope, reference_slope: 2 * u as i64 - j as i64 };
    let path = write_json(&ctx.g.out, "meanvalue.json", &ctx.meta("meanvalue-scan"), &fit)?;
    println!("slope {:.4} (reference {})", fit.slope, fit.reference_slope);
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct BoundRow {
    d: u32,
    k: u32,
    rho: u32,
    n: u32,
    s0_k_minus_d: u64,
    sigma0_k_minus_d: u64,
    thm11: i128,
    thm11_branch: &'static str,
    bhb13: i128,
    diag15: i128,
    cor15: i128,
    cor15_branch: &'static str,
    thm1a_min_s: u64,
    cor110: i128,
}

fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::Small => "small",
        Branch::Middle => "middle",
        Branch::Large => "large",
    }
}

fn cmd_bounds_table(ctx: &Ctx, ds: &[u32], k_max: u32, rho: u32, n: u32) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut tables = Vec::new();
    for &d in ds {
        for k in d + 1..=k_max {
            let t = BoundTable::compute(d, k, rho, n).with_context(|| format!("bounds at d={d}, k={k}"))?;
            rows.push(BoundRow {
                d,
                k,
                rho,
                n,
                s0_k_minus_d: t.s0_k_minus_d,
                sigma0_k_minus_d: t.sigma0_k_minus_d,
                thm11: t.thm11.value,
                thm11_branch: branch_name(t.thm11.branch),
                bhb13: t.bhb13,
                diag15: t.diag15,
                cor15: t.cor15.value,
                cor15_branch: branch_name(t.cor15.branch),
                thm1a_min_s: t.thm1a_min_s,
                cor110: t.cor110.value,
            });
            tables.push(t);
        }
    }
    write_csv(&ctx.g.out, "bounds.csv", None, &rows)?;
    let mut md = String::from("| d | k | thm11 | bhb13 | diag15 | cor15 | thm1a_min_s | cor110 |\n|---|---|---|---|---|---|---|---|\n");
    for r in &rows {
        md.push_str(&format!(
            "| {} | {} | {} ({}) | {} | {} | {} ({}) | {} | {} |\n",
            r.d, r.k, r.thm11, r.thm11_branch, r.bhb13, r.diag15, r.cor15, r.cor15_branch, r.thm1a_min_s, r.cor110
        ));
    }
    fs::write(ctx.g.out.join("bounds.md"), &md)?;
    write_json(&ctx.g.out, "bounds.json", &ctx.meta("bounds-table"), &tables)?;
    print!("{md}");
    Ok(Outcome::Done)
}

#[allow(clippy::too_many_arguments)]
fn cmd_arcs_classify(
    ctx: &Ctx,
    alpha: f64,
    beta: &[f64],
    x: f64,
    (theta, eta, omega): (Option<f64>, Option<f64>, Option<f64>),
    c: f64,
    dim_v: Option<u64>,
    nary: Option<u32>,
) -> Result<Outcome> {
    let sys = ctx.system()?;
    let d = sys.d().ok_or_else(|| anyhow!("the system has no general forms"))?;
    let dim_v = dim_v.or(sys.declared_singular_locus_dim().map(|v| v as u64)).unwrap_or(0);
    let (k, rho, s) = (sys.k(), sys.rho() as u32, sys.s() as u64);
    let cp = match nary {
        Some(n) => CentralParams::lemma_nary(d, k, rho, n, s, dim_v)?,
        None => CentralParams::lemma_shifted(d, k, rho, s, dim_v)?,
    };
    let feasibility = check_prop31(&cp, dim_v);
    let params = match (theta, eta, omega) {
        (Some(t), _, _) => ArcParams::from_theta(&cp, t),
        (_, Some(e), _) => ArcParams::from_eta(&cp, e),
        (_, _, Some(o)) => ArcParams::from_omega(&cp, o),
        _ => bail!("one of --theta, --eta, --omega is required"),
    };
    let pt = ArcPoint::new(alpha, beta.to_vec());
    let classification = classify_n(&pt, x, &params, c)?;
    #[derive(Serialize)]
    struct ArcsOut<'a> {
        point: &'a ArcPoint,
        x: f64,
        central: &'a CentralParams,
        params: &'a ArcParams,
        feasibility: &'a circlelab_core::arcs::Prop31Report,
        classification: &'a circlelab_core::arcs::ArcClassification,
    }
    let out = ArcsOut { point: &pt, x, central: &cp, params: &params, feasibility: &feasibility, classification: &classification };
    let path = write_json(&ctx.g.out, "arcs.json", &ctx.meta("arcs-classify"), &out)?;
    println!("in N: {}, in P: {}, feasible: {}", classification.in_n, classification.in_p, feasibility.feasible);
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Done)
}
