//! Real and p-adic densities: `v₁`, the truncated singular integral, the
//! truncated singular series (two independent routes), `χ_∞` by thickening,
//! and the assembled prediction `C = χ_∞ Π χ_p`.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::Serialize;
use std::sync::{Arc, RwLock};

use crate::arith::{divisors, gcd_u64, mobius, primes_up_to};
use crate::counting::{chi_p_sequence, gamma_q, rational_to_f64, ChiPSequence, CountOptions};
use crate::expsums::{complete_sum_histogram, complete_sum_s, e_unit, weyl_sum_t, ArcPoint};
use crate::forms::{quadratic_signature, CompiledForm, CompiledSystem, FormSystem};
use crate::quadrature::{composite, gl16, gl24, KahanComplex, KahanReal};
use crate::{Error, Result};

/// Cycles of phase allowed per GL16 panel; at 4 cycles the truncation error
/// of the rule on `e(ωx)` is about 1e-10.
const CYCLES_PER_PANEL: f64 = 4.0;

/// Form values and weights at the tensor nodes of one panel layout.
#[derive(Debug)]
struct NodeTable {
    /// Row-major, one row of equation values per node.
    vals: Vec<f64>,
    wts: Vec<f64>,
}

type TableKey = (Vec<usize>, u64, usize);

/// Tables above this many nodes are evaluated on the fly instead of cached.
const MAX_TABLE_NODES: usize = 1 << 16;

/// Distinct connected components of a system with their multiplicities.
#[derive(Debug)]
pub struct RealModel {
    comps: Vec<(CompiledSystem, u32)>,
    tables: Vec<RwLock<FxHashMap<TableKey, Arc<NodeTable>>>>,
}

impl RealModel {
    pub fn new(sys: &FormSystem) -> Self {
        let mut comps: Vec<(CompiledSystem, u32)> = Vec::new();
        for c in sys.components() {
            let compiled = sys.compile_vars(&c);
            match comps.iter_mut().find(|(k, _)| *k == compiled) {
                Some((_, m)) => *m += 1,
                None => comps.push((compiled, 1)),
            }
        }
        let tables = comps.iter().map(|_| RwLock::new(FxHashMap::default())).collect();
        RealModel { comps, tables }
    }

    /// Tensor nodes needed for `∫_{[−r,r]^s}` at weights `w`.
    pub fn tensor_cost(&self, w: &[f64], r: f64) -> f64 {
        self.comps.iter().map(|(c, _)| axis_panels(c, w, r).iter().map(|&p| (16 * p) as f64).product::<f64>()).sum()
    }

    /// `∫_{[−r,r]^s} e(w₀F + Σ wᵢGᵢ) dξ` by per-component tensor quadrature.
    pub fn integral(&self, w: &[f64], r: f64, rule: &(Vec<f64>, Vec<f64>)) -> Complex64 {
        let mut out = Complex64::new(1.0, 0.0);
        for (i, (c, m)) in self.comps.iter().enumerate() {
            let panels = axis_panels(c, w, r);
            let nodes: usize = panels.iter().map(|&p| p * rule.0.len()).product();
            let v = if nodes <= MAX_TABLE_NODES {
                let table = self.table(i, panels, r, rule);
                let neq = c.eqs.len();
                let mut acc = KahanComplex::default();
                for (row, &wt) in table.vals.chunks_exact(neq).zip(&table.wts) {
                    let phase: f64 = row.iter().zip(w).map(|(v, wi)| v * wi).sum();
                    acc.add(e_unit(phase) * wt);
                }
                acc.value()
            } else {
                component_integral(c, w, &panels, r, rule)
            };
            out *= v.powu(*m);
            if out.norm() < 1e-300 {
                return Complex64::zero();
            }
        }
        out
    }

    fn table(&self, comp: usize, panels: Vec<usize>, r: f64, rule: &(Vec<f64>, Vec<f64>)) -> Arc<NodeTable> {
        let key = (panels, r.to_bits(), rule.0.len());
        if let Some(t) = self.tables[comp].read().expect("table lock").get(&key) {
            return t.clone();
        }
        let c = &self.comps[comp].0;
        let mut vals = Vec::new();
        let mut wts = Vec::new();
        for_each_node(&key.0, r, rule, c.nvars, |x, wt| {
            vals.extend(c.eqs.iter().map(|f| f.eval_f64(x)));
            wts.push(wt);
        });
        let t = Arc::new(NodeTable { vals, wts });
        self.tables[comp].write().expect("table lock").insert(key, t.clone());
        t
    }
}

fn axis_panels(c: &CompiledSystem, w: &[f64], r: f64) -> Vec<usize> {
    (0..c.nvars)
        .map(|i| {
            let freq: f64 = c.eqs.iter().zip(w).map(|(f, &wi)| wi.abs() * f.partial_sup(i, r)).sum();
            ((2.0 * r * freq / CYCLES_PER_PANEL).ceil() as usize).max(1)
        })
        .collect()
}

/// Visits every tensor node of the composite rule on `[−r, r]^n`.
fn for_each_node(panels: &[usize], r: f64, rule: &(Vec<f64>, Vec<f64>), n: usize, mut f: impl FnMut(&[f64], f64)) {
    let grids: Vec<(Vec<f64>, Vec<f64>)> = panels.iter().map(|&p| composite(rule, -r, r, p)).collect();
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    loop {
        let mut wt = 1.0;
        for i in 0..n {
            x[i] = grids[i].0[idx[i]];
            wt *= grids[i].1[idx[i]];
        }
        f(&x, wt);
        let mut i = 0;
        while i < n {
            idx[i] += 1;
            if idx[i] < grids[i].0.len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
        if i >= n {
            break;
        }
    }
}

fn component_integral(c: &CompiledSystem, w: &[f64], panels: &[usize], r: f64, rule: &(Vec<f64>, Vec<f64>)) -> Complex64 {
    let mut acc = KahanComplex::default();
    for_each_node(panels, r, rule, c.nvars, |x, wt| acc.add(e_unit(c.phase_f64(x, w)) * wt));
    acc.value()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum V1Method {
    TensorQuadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComplexEstimate {
    pub re: f64,
    pub im: f64,
    /// Quadrature discrepancy or Monte Carlo standard error.
    pub error: f64,
}

impl ComplexEstimate {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// `v_R(γ, δ) = ∫_{[−R,R]^s} e(γF(ξ) + Σδᵢ Gᵢ(ξ)) dξ`; `R = 1` gives `v₁`.
/// The tensor error is the 16- versus 24-point discrepancy on equal panels.
pub fn v_value(sys: &FormSystem, r: f64, gamma: f64, delta: &[f64], method: V1Method, budget: u64) -> Result<ComplexEstimate> {
    if delta.len() != sys.rho() {
        return Err(Error::DimensionMismatch { expected: sys.rho(), got: delta.len() });
    }
    let w: Vec<f64> = std::iter::once(gamma).chain(delta.iter().copied()).collect();
    match method {
        V1Method::TensorQuadrature => {
            let model = RealModel::new(sys);
            let cost = model.tensor_cost(&w, r) * 2.5;
            if cost > budget as f64 {
                return Err(Error::BudgetExceeded { needed: cost, budget });
            }
            let a = model.integral(&w, r, gl16());
            let b = model.integral(&w, r, gl24());
            Ok(ComplexEstimate { re: b.re, im: b.im, error: (a - b).norm() + 1e-14 * (2.0 * r).powi(sys.s() as i32) })
        }
        V1Method::MonteCarlo { samples, seed } => {
            if samples as f64 * sys.s() as f64 > budget as f64 {
                return Err(Error::BudgetExceeded { needed: samples as f64 * sys.s() as f64, budget });
            }
            let c = sys.compile();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut sr, mut si, mut sq) = (KahanReal::default(), KahanReal::default(), KahanReal::default());
            let mut x = vec![0.0; sys.s()];
            for _ in 0..samples {
                for xi in x.iter_mut() {
                    *xi = r * (2.0 * rng.gen::<f64>() - 1.0);
                }
                let z = e_unit(c.phase_f64(&x, &w));
                sr.add(z.re);
                si.add(z.im);
                sq.add(z.norm_sqr());
            }
            let n = samples as f64;
            let vol = (2.0 * r).powi(sys.s() as i32);
            let mean = Complex64::new(sr.value() / n, si.value() / n);
            let var = (sq.value() / n - mean.norm_sqr()).max(0.0);
            Ok(ComplexEstimate { re: vol * mean.re, im: vol * mean.im, error: vol * (var / n).sqrt() })
        }
    }
}

pub fn v1_value(sys: &FormSystem, gamma: f64, delta: &[f64], method: V1Method, budget: u64) -> Result<ComplexEstimate> {
    v_value(sys, 1.0, gamma, delta, method, budget)
}

/// Rescaled form `X^s v₁(X^k γ, X^d δ)` of `v_X(γ, δ)`.
pub fn v_x_rescaled(sys: &FormSystem, x: f64, gamma: f64, delta: &[f64], budget: u64) -> Result<ComplexEstimate> {
    let (k, d) = (sys.k() as i32, sys.d().unwrap_or(0) as i32);
    let dd: Vec<f64> = delta.iter().map(|v| v * x.powi(d)).collect();
    let e = v1_value(sys, x.powi(k) * gamma, &dd, V1Method::TensorQuadrature, budget)?;
    let scale = x.powi(sys.s() as i32);
    Ok(ComplexEstimate { re: e.re * scale, im: e.im * scale, error: e.error * scale })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegralPoint {
    pub t: f64,
    pub value: f64,
    /// Quadrature or sampling error of this truncation.
    pub error: f64,
    /// `|𝔍(T) − 𝔍(T_prev)|` for the previous schedule entry.
    pub cauchy_diff: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegralOptions {
    /// Outer panel width; schedule entries are panel boundaries.
    pub panel_width: f64,
    /// Repeat at half the panel width and report the discrepancy as error.
    pub refine_check: bool,
    pub monte_carlo_samples: usize,
    pub seed: u64,
    pub budget: u64,
}

impl Default for IntegralOptions {
    fn default() -> Self {
        IntegralOptions { panel_width: 1.0, refine_check: false, monte_carlo_samples: 200_000, seed: 1, budget: 20_000_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegralReport {
    pub method: &'static str,
    pub points: Vec<IntegralPoint>,
    /// Differences fail to shrink over the last three doublings.
    pub non_decaying: bool,
}

/// Outer nodes on `[0, T_max]` (or `[−T_max, T_max]`) with the index of the
/// smallest truncation containing each node.
fn outer_axis(schedule: &[f64], h: f64, half: bool) -> Vec<(f64, f64, usize)> {
    let rule = gl24();
    let mut out = Vec::new();
    let mut lo = 0.0;
    for (i, &t) in schedule.iter().enumerate() {
        let panels = ((t - lo) / h).ceil().max(1.0) as usize;
        let (xs, ws) = composite(rule, lo, t, panels);
        for (x, w) in xs.into_iter().zip(ws) {
            out.push((x, w, i));
            if !half {
                out.push((-x, w, i));
            }
        }
        lo = t;
    }
    out
}

fn shells_tensor(model: &RealModel, rho: usize, schedule: &[f64], h: f64) -> Vec<f64> {
    let a0 = outer_axis(schedule, h, true);
    let rest = outer_axis(schedule, h, false);
    let ns = schedule.len();
    let per: Vec<Vec<Complex64>> = a0
        .par_iter()
        .map(|&(g, wg, sg)| {
            let mut acc = vec![KahanComplex::default(); ns];
            let mut idx = vec![0usize; rho];
            let mut w = vec![g; rho + 1];
            loop {
                let mut wt = wg;
                let mut shell = sg;
                for j in 0..rho {
                    let (dv, dw, ds) = rest[idx[j]];
                    w[j + 1] = dv;
                    wt *= dw;
                    shell = shell.max(ds);
                }
                acc[shell].add(model.integral(&w, 1.0, gl16()) * wt);
                let mut j = 0;
                while j < rho {
                    idx[j] += 1;
                    if idx[j] < rest.len() {
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                }
                if j >= rho {
                    break;
                }
            }
            acc.into_iter().map(|a| a.value()).collect()
        })
        .collect();
    let mut shells = vec![KahanReal::default(); ns];
    for row in per {
        for (s, v) in shells.iter_mut().zip(row) {
            s.add(2.0 * v.re);
        }
    }
    shells.iter().map(|s| s.value()).collect()
}

/// `𝔍(T) = ∫_{|γ|,|δᵢ| ≤ T} v₁(γ, δ)` on the schedule. Tensor quadrature
/// over the half space `γ ≥ 0` (using `v₁(−γ, −δ) = conj v₁(γ, δ)`) when
/// `ρ + 1 ≤ 3`; nested panels make each Cauchy difference an annulus sum.
pub fn singular_integral_j(sys: &FormSystem, schedule: &[f64], opts: &IntegralOptions) -> Result<IntegralReport> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) || schedule[0] <= 0.0 {
        return Err(Error::invalid("schedule must be positive and strictly increasing"));
    }
    let rho = sys.rho();
    let model = RealModel::new(sys);
    let t_max = *schedule.last().expect("nonempty");
    let nodes_per_axis = 2.0 * t_max / opts.panel_width * 24.0;
    let corner: Vec<f64> = vec![t_max; rho + 1];
    let inner = model.tensor_cost(&corner, 1.0);
    let outer = 0.5 * nodes_per_axis.powi(rho as i32 + 1);
    let tensor_cost = outer * inner * if opts.refine_check { 5.0 } else { 1.0 } * 0.3;
    let (method, shells, errors) = if rho + 1 <= 3 && tensor_cost <= opts.budget as f64 {
        let shells = shells_tensor(&model, rho, schedule, opts.panel_width);
        let errors = if opts.refine_check {
            let fine = shells_tensor(&model, rho, schedule, opts.panel_width / 2.0);
            cumulative(&shells).iter().zip(cumulative(&fine)).map(|(a, b)| (a - b).abs()).collect()
        } else {
            vec![0.0; schedule.len()]
        };
        ("tensor-quadrature", shells, errors)
    } else {
        let (shells, errs) = shells_monte_carlo(&model, rho, schedule, opts)?;
        ("monte-carlo", shells, errs)
    };
    let cum = cumulative(&shells);
    let points: Vec<IntegralPoint> = schedule
        .iter()
        .enumerate()
        .map(|(i, &t)| IntegralPoint {
            t,
            value: cum[i],
            error: errors[i],
            cauchy_diff: (i > 0).then(|| shells[i].abs()),
        })
        .collect();
    let non_decaying = !last_three_decrease(&points.iter().filter_map(|p| p.cauchy_diff).collect::<Vec<_>>());
    Ok(IntegralReport { method, points, non_decaying })
}

fn cumulative(v: &[f64]) -> Vec<f64> {
    let mut acc = KahanReal::default();
    v.iter()
        .map(|&x| {
            acc.add(x);
            acc.value()
        })
        .collect()
}

/// True when the last three entries strictly decrease.
pub fn last_three_decrease(diffs: &[f64]) -> bool {
    diffs.len() >= 3 && diffs[diffs.len() - 3..].windows(2).all(|w| w[1] < w[0])
}

fn shells_monte_carlo(model: &RealModel, rho: usize, schedule: &[f64], opts: &IntegralOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = opts.monte_carlo_samples;
    let t_max = *schedule.last().expect("nonempty");
    let dim = rho + 1;
    let corner: Vec<f64> = vec![t_max; dim];
    let cost = n as f64 * model.tensor_cost(&corner, 1.0) * 0.3;
    if cost > opts.budget as f64 {
        return Err(Error::BudgetExceeded { needed: cost, budget: opts.budget });
    }
    let vol = (2.0 * t_max).powi(dim as i32);
    let ns = schedule.len();
    let chunks = 64usize;
    let per: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(c as u64));
            let mut sum = vec![0.0; ns];
            let mut sq = vec![0.0; ns];
            let m = n / chunks + usize::from(c < n % chunks);
            let mut w = vec![0.0; dim];
            for _ in 0..m {
                for wi in w.iter_mut() {
                    *wi = t_max * (2.0 * rng.gen::<f64>() - 1.0);
                }
                let r = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let shell = schedule.iter().position(|&t| r <= t).unwrap_or(ns - 1);
                let v = model.integral(&w, 1.0, gl16()).re * vol;
                sum[shell] += v;
                sq[shell] += v * v;
            }
            (sum, sq)
        })
        .collect();
    let mut sum = vec![0.0; ns];
    let mut sq = vec![0.0; ns];
    for (s, q) in per {
        for i in 0..ns {
            sum[i] += s[i];
            sq[i] += q[i];
        }
    }
    let nf = n as f64;
    let shells: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let var: Vec<f64> = (0..ns).map(|i| (sq[i] / nf - shells[i] * shells[i]) / nf).collect();
    let mut errs = Vec::with_capacity(ns);
    let mut acc = 0.0;
    for v in var {
        acc += v.max(0.0);
        errs.push(acc.sqrt());
    }
    Ok((shells, errs))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesLayer {
    pub q: u64,
    /// `A(q) = q^{−s} Σ_{(q,a,b)=1} S(q; a, b)` from congruence counts.
    #[serde(serialize_with = "ser_rat")]
    pub exact: BigRational,
    pub value: f64,
    /// The same layer from complete sums, when within budget.
    pub direct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub t: u64,
    pub value: f64,
    #[serde(serialize_with = "ser_rat")]
    pub exact: BigRational,
    pub cauchy_diff: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesReport {
    pub layers: Vec<SeriesLayer>,
    pub points: Vec<SeriesPoint>,
    pub non_decaying: bool,
}

fn ser_rat<S: serde::Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
}

/// `A(q) = Σ_{d | q} μ(q/d) d^{ρ+1−s} Γ(d)`.
pub fn series_layer_dual(sys: &FormSystem, q: u64, gammas: &mut Vec<Option<BigInt>>, opts: &CountOptions) -> Result<BigRational> {
    let expo = sys.rho() as i64 + 1 - sys.s() as i64;
    let mut out = BigRational::zero();
    for d in divisors(q) {
        let mu = mobius(q / d);
        if mu == 0 {
            continue;
        }
        if gammas.len() <= d as usize {
            gammas.resize(d as usize + 1, None);
        }
        if gammas[d as usize].is_none() {
            gammas[d as usize] = Some(BigInt::from(gamma_q(sys, d, opts)?));
        }
        let g = BigRational::from_integer(gammas[d as usize].clone().expect("filled"));
        let pw = BigRational::from_integer(BigInt::from(d).pow(expo.unsigned_abs() as u32));
        let term = if expo >= 0 { g * pw } else { g / pw };
        out += term * BigRational::from_integer(BigInt::from(mu));
    }
    Ok(out)
}

/// `A(q)` from the complete sums `S(q; a, b)` over coprime `(a, b)`, or
/// `None` past the budget.
pub fn series_layer_direct(sys: &FormSystem, q: u64, budget: u64) -> Result<Option<f64>> {
    let rho = sys.rho();
    let comps = sys.components();
    let per: f64 = comps.iter().map(|c| (q as f64).powi(c.len() as i32)).sum::<f64>() + comps.len() as f64 * (q * q) as f64;
    let cost = per * (q as f64).powi(rho as i32 + 1);
    if cost > budget as f64 {
        return Ok(None);
    }
    let mut weights = vec![0u128; q as usize];
    let mut tuple = vec![0u64; rho + 1];
    loop {
        let g = tuple.iter().fold(q, |g, &v| gcd_u64(g, v));
        if g == 1 {
            let b: Vec<i64> = tuple[1..].iter().map(|&v| v as i64).collect();
            let hist = complete_sum_histogram(sys, q, tuple[0] as i64, &b, u64::MAX)?;
            for (w, h) in weights.iter_mut().zip(hist) {
                *w += h;
            }
        }
        let mut i = 0;
        while i <= rho {
            tuple[i] += 1;
            if tuple[i] < q {
                break;
            }
            tuple[i] = 0;
            i += 1;
        }
        if i > rho {
            break;
        }
    }
    let mut acc = KahanReal::default();
    for (r, &w) in weights.iter().enumerate() {
        if w != 0 {
            acc.add(w as f64 * e_unit(r as f64 / q as f64).re);
        }
    }
    Ok(Some(acc.value() / (q as f64).powi(sys.s() as i32)))
}

/// `𝔖(T)` for `T` on the schedule, with the two routes cross-checked layer by
/// layer; a disagreement beyond `1e−9` is an error.
pub fn singular_series_s(sys: &FormSystem, schedule: &[u64], opts: &CountOptions) -> Result<SeriesReport> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) || schedule[0] == 0 {
        return Err(Error::invalid("schedule must be positive and strictly increasing"));
    }
    let t_max = *schedule.last().expect("nonempty");
    let mut gammas = Vec::new();
    let mut layers = Vec::with_capacity(t_max as usize);
    for q in 1..=t_max {
        let exact = series_layer_dual(sys, q, &mut gammas, opts)?;
        let value = rational_to_f64(&exact);
        let direct = series_layer_direct(sys, q, opts.budget)?;
        if let Some(dv) = direct {
            if (dv - value).abs() > 1e-9 {
                return Err(Error::DualRouteMismatch { q, direct: dv, dual: value });
            }
        }
        layers.push(SeriesLayer { q, exact, value, direct });
    }
    let mut points = Vec::with_capacity(schedule.len());
    let mut sum = BigRational::zero();
    let mut next = 0usize;
    let mut prev: Option<f64> = None;
    for layer in &layers {
        sum += &layer.exact;
        if schedule.get(next) == Some(&layer.q) {
            let value = rational_to_f64(&sum);
            points.push(SeriesPoint { t: layer.q, value, exact: sum.clone(), cauchy_diff: prev.map(|p| (value - p).abs()) });
            prev = Some(value);
            next += 1;
        }
    }
    let diffs: Vec<f64> = points.iter().filter_map(|p| p.cauchy_diff).collect();
    Ok(SeriesReport { non_decaying: !last_three_decrease(&diffs), layers, points })
}

/// Fitted exponent `e` in `max_{(a,b)} |S(p; a, b)|/p^s ≈ C p^{e}` over primes.
pub fn complete_sum_decay_exponent(sys: &FormSystem, primes: &[u64], budget: u64) -> Result<f64> {
    let mut pts = Vec::new();
    for &p in primes {
        let mut best = 0.0f64;
        let rho = sys.rho();
        let mut tuple = vec![0u64; rho + 1];
        loop {
            if tuple.iter().any(|&v| v != 0) {
                let b: Vec<i64> = tuple[1..].iter().map(|&v| v as i64).collect();
                let v = complete_sum_s(sys, p, tuple[0] as i64, &b, budget)?;
                best = best.max(v.abs());
            }
            let mut i = 0;
            while i <= rho {
                tuple[i] += 1;
                if tuple[i] < p {
                    break;
                }
                tuple[i] = 0;
                i += 1;
            }
            if i > rho {
                break;
            }
        }
        pts.push(((p as f64).ln(), (best / (p as f64).powi(sys.s() as i32)).max(1e-300).ln()));
    }
    Ok(crate::verify::least_squares(&pts).0)
}

/// Fitted exponent of `|v₁(γ, 0)|` against `γ`.
pub fn v1_decay_exponent(sys: &FormSystem, gammas: &[f64], budget: u64) -> Result<f64> {
    let zero = vec![0.0; sys.rho()];
    let mut pts = Vec::new();
    for &g in gammas {
        let v = v1_value(sys, g, &zero, V1Method::TensorQuadrature, budget)?;
        pts.push((g.ln(), v.value().norm().max(1e-300).ln()));
    }
    Ok(crate::verify::least_squares(&pts).0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiInfinity {
    pub value: f64,
    pub std_error: f64,
    /// Thickened-volume ratio at each `ε`, before extrapolation.
    pub raw: Vec<(f64, f64)>,
    pub samples: usize,
    pub seed: u64,
    /// Coordinate integrated exactly in each sample.
    pub conditioned_on: usize,
}

pub const EPS_SCHEDULE: [f64; 3] = [0.1, 0.05, 0.025];

/// Coefficients of `t ↦ f(x₀, …, t, …)` with `t` in slot `i`.
fn restrict(f: &CompiledForm, x: &[f64], i: usize) -> Vec<f64> {
    let mut c = vec![0.0; f.degree as usize + 1];
    for t in &f.terms {
        let mut v = t.coef as f64;
        let mut e_i = 0usize;
        for &(j, e) in &t.vars {
            if j == i {
                e_i = e as usize;
            } else {
                v *= x[j].powi(e as i32);
            }
        }
        c[e_i] += v;
    }
    c
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |a, &v| a * t + v)
}

/// Real roots of the polynomial in `[lo, hi]`, via monotone pieces between
/// critical points.
pub fn real_roots_in(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut c = c.to_vec();
    while c.len() > 1 && c.last().map_or(false, |v| *v == 0.0) {
        c.pop();
    }
    if c.len() <= 1 {
        return Vec::new();
    }
    if c.len() == 2 {
        let r = -c[0] / c[1];
        return if (lo..=hi).contains(&r) { vec![r] } else { Vec::new() };
    }
    let deriv: Vec<f64> = c.iter().enumerate().skip(1).map(|(i, v)| i as f64 * v).collect();
    let mut pts = vec![lo];
    pts.extend(real_roots_in(&deriv, lo, hi));
    pts.push(hi);
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (mut fa, fb) = (horner(&c, a), horner(&c, b));
        if fa == 0.0 {
            out.push(a);
            continue;
        }
        if fa.signum() == fb.signum() {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = horner(&c, m);
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        out.push(0.5 * (a + b));
    }
    if horner(&c, hi) == 0.0 {
        out.push(hi);
    }
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    out
}

/// Length of `{t ∈ [−1, 1] : |pⱼ(t)| < ε for all j}`.
fn thickened_length(polys: &[Vec<f64>], eps: f64) -> f64 {
    let mut cuts = vec![-1.0, 1.0];
    for p in polys {
        for sgn in [-1.0, 1.0] {
            let mut q = p.clone();
            q[0] -= sgn * eps;
            cuts.extend(real_roots_in(&q, -1.0, 1.0));
        }
    }
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .filter(|w| {
            let m = 0.5 * (w[0] + w[1]);
            polys.iter().all(|p| horner(p, m).abs() < eps)
        })
        .map(|w| w[1] - w[0])
        .sum()
}

/// `χ_∞` as `lim (2ε)^{−ρ−1} vol{ξ ∈ [−1,1]^s : |F|, |Gᵢ| < ε}`. One
/// coordinate is integrated exactly per sample; the three `ε` levels share
/// samples and are combined by Richardson extrapolation in `ε²`.
pub fn chi_infinity(sys: &FormSystem, samples: usize, seed: u64) -> Result<ChiInfinity> {
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let c = sys.compile();
    let s = sys.s();
    let cells = sys.rho() + 1;
    let cond = (0..s)
        .max_by_key(|&i| {
            let uses = c.eqs.iter().filter(|f| f.terms.iter().any(|t| t.vars.iter().any(|&(j, _)| j == i))).count();
            (uses, sys.diagonal().coeffs()[i].unsigned_abs(), std::cmp::Reverse(i))
        })
        .expect("s ≥ 1");
    let scales: Vec<f64> = EPS_SCHEDULE.iter().map(|e| 2f64.powi(s as i32 - 1) / (2.0 * e).powi(cells as i32)).collect();
    // Richardson weights for an even error expansion on ε, ε/2, ε/4.
    let rich = [1.0 / 45.0, -20.0 / 45.0, 64.0 / 45.0];
    let chunks = 64usize;
    let per: Vec<([f64; 3], [f64; 3], f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(ch as u64 + 1)));
            let m = samples / chunks + usize::from(ch < samples % chunks);
            let mut x = vec![0.0; s];
            let (mut sum, mut sq) = ([0.0; 3], [0.0; 3]);
            let (mut rs, mut rq) = (0.0, 0.0);
            for _ in 0..m {
                for xi in x.iter_mut() {
                    *xi = 2.0 * rng.gen::<f64>() - 1.0;
                }
                let polys: Vec<Vec<f64>> = c.eqs.iter().map(|f| restrict(f, &x, cond)).collect();
                let mut comb = 0.0;
                for (j, &eps) in EPS_SCHEDULE.iter().enumerate() {
                    let v = thickened_length(&polys, eps) * scales[j];
                    sum[j] += v;
                    sq[j] += v * v;
                    comb += rich[j] * v;
                }
                rs += comb;
                rq += comb * comb;
            }
            (sum, sq, rs, rq)
        })
        .collect();
    let (mut sum, mut rs, mut rq) = ([0.0; 3], 0.0, 0.0);
    for (s1, _, r1, r2) in &per {
        for j in 0..3 {
            sum[j] += s1[j];
        }
        rs += r1;
        rq += r2;
    }
    let n = samples as f64;
    let value = rs / n;
    let var = (rq / n - value * value).max(0.0) / (n - 1.0);
    Ok(ChiInfinity {
        value,
        std_error: var.sqrt(),
        raw: EPS_SCHEDULE.iter().zip(sum).map(|(&e, v)| (e, v / n)).collect(),
        samples,
        seed,
        conditioned_on: cond,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RealVerdict {
    Soluble,
    Inconclusive,
    /// Proven empty apart from the origin.
    Negative,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RealPointReport {
    pub verdict: RealVerdict,
    /// `signature` or `search`.
    pub route: &'static str,
    pub witness: Option<Vec<f64>>,
    pub residual: Option<f64>,
    pub jacobian_rank: Option<usize>,
}

fn numeric_rank(rows: &[Vec<f64>], tol: f64) -> usize {
    let mut m = rows.to_vec();
    let ncols = m.first().map_or(0, |r| r.len());
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut rank = 0;
    for col in 0..ncols {
        let piv = (rank..m.len()).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()));
        let Some(piv) = piv else { break };
        if m[piv][col].abs() <= tol * scale {
            continue;
        }
        m.swap(rank, piv);
        for r in rank + 1..m.len() {
            let f = m[r][col] / m[rank][col];
            for c in col..ncols {
                m[r][c] -= f * m[rank][c];
            }
        }
        rank += 1;
    }
    rank
}

fn solve_small(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Newton iteration with minimum-norm steps from a random start, scaled back
/// into the unit cube; returns a nonsingular real zero if one is reached.
fn newton_search(c: &CompiledSystem, trials: usize, seed: u64) -> Option<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = c.nvars;
    let r = c.eqs.len();
    for _ in 0..trials {
        let mut x: Vec<f64> = (0..s).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
        // Gauss-Newton on the cone cut by the unit sphere, so the origin is not an attractor.
        for _ in 0..80 {
            let mut f: Vec<f64> = c.eqs.iter().map(|e| e.eval_f64(&x)).collect();
            f.push(x.iter().map(|v| v * v).sum::<f64>() - 1.0);
            let mut j = c.jacobian_f64(&x);
            j.push(x.iter().map(|v| 2.0 * v).collect());
            let m = r + 1;
            let mut jjt: Vec<Vec<f64>> = (0..m).map(|a| (0..m).map(|b| (0..s).map(|k| j[a][k] * j[b][k]).sum()).collect()).collect();
            let mut rhs = f.clone();
            let Some(y) = solve_small(&mut jjt, &mut rhs) else { break };
            for k in 0..s {
                x[k] -= (0..m).map(|a| j[a][k] * y[a]).sum::<f64>();
            }
            if !x.iter().all(|v| v.is_finite()) || f.iter().all(|v| v.abs() < 1e-15) {
                break;
            }
        }
        let norm = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(norm > 1e-3) || !norm.is_finite() {
            continue;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        let res = c.eqs.iter().map(|e| e.eval_f64(&x).abs()).fold(0.0, f64::max);
        if res < 1e-10 && numeric_rank(&c.jacobian_f64(&x), 1e-8) == r {
            return Some((x, res));
        }
    }
    None
}

/// Real solubility: the signature route for a single quadratic `G` with an odd
/// degree diagonal `F`, randomized Newton search otherwise.
pub fn real_point_probe(sys: &FormSystem, trials: usize, seed: u64) -> Result<RealPointReport> {
    let c = sys.compile();
    let search = newton_search(&c, trials, seed);
    let witness_rank = search.as_ref().map(|(x, _)| numeric_rank(&c.jacobian_f64(x), 1e-8));
    let (witness, residual) = match search {
        Some((x, r)) => (Some(x), Some(r)),
        None => (None, None),
    };
    if sys.rho() == 1 && sys.d() == Some(2) {
        let sig = quadratic_signature(&sys.generals()[0])?;
        if sig.n_plus >= 2 && sig.n_minus >= 2 && sys.k() % 2 == 1 {
            return Ok(RealPointReport { verdict: RealVerdict::Soluble, route: "signature", witness, residual, jacobian_rank: witness_rank });
        }
        if sig.nonsingular && (sig.n_plus == 0 || sig.n_minus == 0) {
            return Ok(RealPointReport { verdict: RealVerdict::Negative, route: "signature", witness: None, residual: None, jacobian_rank: None });
        }
    }
    let verdict = if witness.is_some() { RealVerdict::Soluble } else { RealVerdict::Inconclusive };
    Ok(RealPointReport { verdict, route: "search", witness, residual, jacobian_rank: witness_rank })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictOptions {
    pub series_schedule: Vec<u64>,
    /// Empty skips the singular integral.
    pub integral_schedule: Vec<f64>,
    pub p_max: u64,
    pub p0: u64,
    pub h_max: u32,
    pub chi_inf_samples: usize,
    pub seed: u64,
    pub budget: u64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            series_schedule: vec![1, 2, 4, 8, 16],
            integral_schedule: Vec::new(),
            p_max: 50,
            p0: 20,
            h_max: 6,
            chi_inf_samples: 400_000,
            seed: 1,
            budget: crate::DEFAULT_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailBracket {
    pub p0: u64,
    pub p_max: u64,
    /// `Π_{p ≤ p₀} χ_p`.
    pub head: f64,
    /// `Π_{p₀ < p ≤ p_max} χ_p`.
    pub tail: f64,
    /// `½ < tail < 3/2`; empirical, not proven.
    pub in_band: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PrimeRow {
    #[serde(flatten)]
    pub chi: ChiPSequence,
    /// Depth actually reached (`< h_max` when the budget cut it short).
    pub depth: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityReport {
    pub series: Option<SeriesReport>,
    pub integral: Option<IntegralReport>,
    pub chi_p: Vec<PrimeRow>,
    pub chi_infinity: ChiInfinity,
    pub local_product: f64,
    pub predicted_c: f64,
    pub predicted_c_error: f64,
    /// Some `χ_p` did not stabilize; `predicted_c` then uses last values.
    pub poisoned: bool,
    pub poisoned_primes: Vec<u64>,
    pub tail: TailBracket,
    pub real_points: RealPointReport,
    pub options: PredictOptions,
}

/// `χ_p` at the deepest level within budget, up to `h_max`.
pub fn chi_p_within_budget(sys: &FormSystem, p: u64, h_max: u32, opts: &CountOptions) -> Result<(ChiPSequence, u32)> {
    let mut h = h_max;
    loop {
        match chi_p_sequence(sys, p, h, opts) {
            Ok(c) => return Ok((c, h)),
            Err(Error::BudgetExceeded { .. }) if h > 1 => h -= 1,
            Err(e) => return Err(e),
        }
    }
}

/// `C = χ_∞ Π_{p ≤ p_max} χ_p` with the series, optional integral, per-prime
/// table, tail bracket and real solubility probe.
pub fn predict_constant(sys: &FormSystem, opts: &PredictOptions) -> Result<DensityReport> {
    let count_opts = CountOptions { budget: opts.budget, ..CountOptions::default() };
    let mut chi_p = Vec::new();
    let mut poisoned_primes = Vec::new();
    let (mut head, mut tail) = (1.0f64, 1.0f64);
    for p in primes_up_to(opts.p_max) {
        let (chi, depth) = chi_p_within_budget(sys, p, opts.h_max, &count_opts)?;
        if !chi.is_stabilized() {
            poisoned_primes.push(p);
        }
        let v = chi.last_f64();
        if p <= opts.p0 {
            head *= v;
        } else {
            tail *= v;
        }
        chi_p.push(PrimeRow { chi, depth });
    }
    let series = if opts.series_schedule.is_empty() {
        None
    } else {
        match singular_series_s(sys, &opts.series_schedule, &count_opts) {
            Ok(r) => Some(r),
            Err(Error::BudgetExceeded { .. }) => None,
            Err(e) => return Err(e),
        }
    };
    let integral = if opts.integral_schedule.is_empty() {
        None
    } else {
        let io = IntegralOptions { seed: opts.seed, ..IntegralOptions::default() };
        match singular_integral_j(sys, &opts.integral_schedule, &io) {
            Ok(r) => Some(r),
            Err(Error::BudgetExceeded { .. }) => None,
            Err(e) => return Err(e),
        }
    };
    let chi_infinity = chi_infinity(sys, opts.chi_inf_samples, opts.seed)?;
    let local_product = head * tail;
    let real_points = real_point_probe(sys, 200, opts.seed)?;
    Ok(DensityReport {
        series,
        integral,
        chi_p,
        predicted_c: chi_infinity.value * local_product,
        predicted_c_error: chi_infinity.std_error * local_product.abs(),
        chi_infinity,
        local_product,
        poisoned: !poisoned_primes.is_empty(),
        poisoned_primes,
        tail: TailBracket { p0: opts.p0, p_max: opts.p_max, head, tail, in_band: tail > 0.5 && tail < 1.5 },
        real_points,
        options: opts.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MajorArcTerm {
    pub t_abs: f64,
    pub residual: f64,
    /// `X^{s−1} q (1 + X^k|γ| + X^d|δ|)`.
    pub scale: f64,
    pub ratio: f64,
}

/// Compares `T(a/q + γ, b/q + δ)` with `q^{−s} S(q; a, b) v_X(γ, δ)`.
pub fn major_arc_term(sys: &FormSystem, x: u64, q: u64, a: i64, b: &[i64], gamma: f64, delta: &[f64], budget: u64) -> Result<MajorArcTerm> {
    let qf = q as f64;
    let alpha = a as f64 / qf + gamma;
    let beta: Vec<f64> = b.iter().zip(delta).map(|(&bi, &di)| bi as f64 / qf + di).collect();
    let t = weyl_sum_t(sys, &ArcPoint::new(alpha, beta), x, budget)?;
    let s_val = complete_sum_s(sys, q, a, b, budget)?;
    let xf = x as f64;
    let v = v_x_rescaled(sys, xf, gamma, delta, budget)?;
    let approx = s_val.value * v.value() / qf.powi(sys.s() as i32);
    let residual = (t.value - approx).norm();
    let dmax = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (k, d) = (sys.k() as i32, sys.d().unwrap_or(0) as i32);
    let scale = xf.powi(sys.s() as i32 - 1) * qf * (1.0 + xf.powi(k) * gamma.abs() + xf.powi(d) * dmax);
    Ok(MajorArcTerm { t_abs: t.abs(), residual, scale, ratio: residual / scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{DiagonalForm, GeneralForm};
    use approx::assert_relative_eq;
    use num_traits::One;

    fn toy() -> FormSystem {
        FormSystem::new(
            DiagonalForm::new(3, vec![1]).unwrap(),
            vec![GeneralForm::from_terms(1, 2, &[(&[2], 1)]).unwrap()],
            None,
        )
        .unwrap()
    }

    fn coupled() -> FormSystem {
        let g = GeneralForm::from_terms(3, 2, &[(&[2, 0, 0], 1), (&[0, 1, 1], 1), (&[0, 2, 0], -1)]).unwrap();
        FormSystem::new(DiagonalForm::new(3, vec![1, -2, 1]).unwrap(), vec![g], None).unwrap()
    }

    #[test]
    fn v1_at_origin_is_volume() {
        let sys = coupled();
        let v = v1_value(&sys, 0.0, &[0.0], V1Method::TensorQuadrature, 1 << 30).unwrap();
        assert_relative_eq!(v.re, 8.0, epsilon = 1e-12);
        assert!(v.im.abs() < 1e-12);
    }

    #[test]
    fn tensor_matches_monte_carlo() {
        let sys = coupled();
        let t = v1_value(&sys, 0.7, &[0.4], V1Method::TensorQuadrature, 1 << 30).unwrap();
        let m = v1_value(&sys, 0.7, &[0.4], V1Method::MonteCarlo { samples: 400_000, seed: 3 }, 1 << 30).unwrap();
        assert!((t.value() - m.value()).norm() < 5.0 * m.error + t.error, "{t:?} {m:?}");
        assert!(t.error < 1e-10);
    }

    #[test]
    fn rescaling_identity() {
        let sys = coupled();
        for x in [2.0f64, 3.0] {
            let (g, d) = (0.3 / x.powi(3), [0.2 / x.powi(2)]);
            let direct = v_value(&sys, x, g, &d, V1Method::TensorQuadrature, 1 << 30).unwrap();
            let scaled = v_x_rescaled(&sys, x, g, &d, 1 << 30).unwrap();
            assert!((direct.value() - scaled.value()).norm() <= direct.error + scaled.error + 1e-9);
        }
    }

    #[test]
    fn series_first_layers() {
        let sys = toy();
        let r = singular_series_s(&sys, &[1, 2], &CountOptions::default()).unwrap();
        assert_eq!(r.points[0].exact, BigRational::one());
        // q = 2: (a,b) ∈ {(1,0),(0,1),(1,1)} with S = 0, 0, 2 over 2^1.
        assert_eq!(r.layers[1].exact, BigRational::one());
        assert_relative_eq!(r.layers[1].direct.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dual_routes_agree_on_coupled_system() {
        let sys = coupled();
        let r = singular_series_s(&sys, &[1, 2, 4, 8, 12], &CountOptions::default()).unwrap();
        for l in &r.layers {
            let d = l.direct.expect("within budget");
            assert!((d - l.value).abs() < 1e-9, "q={}", l.q);
        }
    }

    #[test]
    fn roots_and_lengths() {
        let r = real_roots_in(&[-0.25, 0.0, 1.0], -1.0, 1.0);
        assert_eq!(r.len(), 2);
        assert_relative_eq!(r[0], -0.5, epsilon = 1e-14);
        assert_relative_eq!(r[1], 0.5, epsilon = 1e-14);
        // |t| < ε has length 2ε.
        assert_relative_eq!(thickened_length(&[vec![0.0, 1.0]], 0.1), 0.2, epsilon = 1e-14);
        // |t³| < ε has length 2ε^{1/3}.
        assert_relative_eq!(thickened_length(&[vec![0.0, 0.0, 0.0, 1.0]], 0.001), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn chi_infinity_linear_oracle() {
        // Independent seeds agree within their standard errors.
        let g = GeneralForm::from_terms(3, 2, &[(&[2, 0, 0], 1), (&[0, 2, 0], -1)]).unwrap();
        let sys = FormSystem::new(DiagonalForm::new(3, vec![1, 1, 1]).unwrap(), vec![g], None).unwrap();
        let a = chi_infinity(&sys, 100_000, 1).unwrap();
        let b = chi_infinity(&sys, 100_000, 2).unwrap();
        assert!(a.value > 0.0);
        assert!((a.value - b.value).abs() < 4.0 * (a.std_error + b.std_error));
    }

    #[test]
    fn no_real_points_gives_small_density() {
        let g = GeneralForm::from_terms(6, 2, &[
            (&[2, 0, 0, 0, 0, 0], 1),
            (&[0, 2, 0, 0, 0, 0], 1),
            (&[0, 0, 2, 0, 0, 0], 1),
            (&[0, 0, 0, 2, 0, 0], 1),
            (&[0, 0, 0, 0, 2, 0], 1),
            (&[0, 0, 0, 0, 0, 2], 1),
        ])
        .unwrap();
        let sys = FormSystem::new(DiagonalForm::new(4, vec![1; 6]).unwrap(), vec![g], None).unwrap();
        let c = chi_infinity(&sys, 50_000, 1).unwrap();
        assert!(c.value.abs() < 3.0 * c.std_error + 1e-3, "{c:?}");
        let probe = real_point_probe(&sys, 20, 1).unwrap();
        assert_eq!(probe.verdict, RealVerdict::Negative);
    }

    #[test]
    fn signature_route() {
        let g = GeneralForm::from_terms(4, 2, &[(&[2, 0, 0, 0], 1), (&[0, 2, 0, 0], 1), (&[0, 0, 2, 0], -1), (&[0, 0, 0, 2], -1)]).unwrap();
        let sys = FormSystem::new(DiagonalForm::new(3, vec![1, 2, 3, 4]).unwrap(), vec![g], None).unwrap();
        let r = real_point_probe(&sys, 200, 1).unwrap();
        assert_eq!(r.verdict, RealVerdict::Soluble);
        assert_eq!(r.route, "signature");
        let w = r.witness.expect("newton finds a point");
        let (f, gv) = (sys.compile().eqs[0].eval_f64(&w), sys.compile().eqs[1].eval_f64(&w));
        assert!(f.abs() < 1e-9 && gv.abs() < 1e-9);
        assert_eq!(r.jacobian_rank, Some(2));
    }

    #[test]
    fn random_search_route() {
        // (1, 1, 1) is a nonsingular real zero; the quadratic has three variables so no signature shortcut applies.
        let g = GeneralForm::from_terms(3, 2, &[(&[2, 0, 0], 1), (&[0, 1, 1], 1), (&[0, 2, 0], -1), (&[0, 0, 2], -1)]).unwrap();
        let sys = FormSystem::new(DiagonalForm::new(3, vec![1, 1, -2]).unwrap(), vec![g], None).unwrap();
        let r = real_point_probe(&sys, 200, 5).unwrap();
        assert_eq!(r.route, "search");
        assert_eq!(r.verdict, RealVerdict::Soluble);
        assert_eq!(r.jacobian_rank, Some(2));
    }

    #[test]
    fn integral_near_zero_truncation() {
        let sys = toy();
        let io = IntegralOptions { panel_width: 0.01, ..IntegralOptions::default() };
        let r = singular_integral_j(&sys, &[0.01, 0.02], &io).unwrap();
        // v₁ ≈ 2 near the origin, so 𝔍(T) ≈ 2·(2T)².
        assert_relative_eq!(r.points[0].value, 2.0 * 0.02f64.powi(2), max_relative = 1e-2);
        assert_relative_eq!(r.points[1].value, 2.0 * 0.04f64.powi(2), max_relative = 2e-2);
    }

    #[test]
    fn major_arc_term_small() {
        let sys = coupled();
        let m = major_arc_term(&sys, 10, 1, 0, &[0], 0.0, &[0.0], 1 << 30).unwrap();
        // T(0,0) = 21³ against v₁₀(0,0) = 20³.
        assert_relative_eq!(m.t_abs, 9261.0, epsilon = 1e-9);
        assert!(m.ratio < 20.0);
    }
}
