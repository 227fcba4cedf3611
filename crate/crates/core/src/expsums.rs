//! Exponential sums: the system sum `T(α, β)`, univariate Weyl sums, complete
//! sums modulo `q`, exact mean values and minor-arc sampling.
//!
//! Phases are reduced mod 1 exactly: a finite `α` is a dyadic rational, so
//! `αn mod 1` is computed in integer arithmetic before `e(·)` is applied.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::arcs::{farey, in_major_mj};
use crate::bounds::sigma0;
use crate::forms::{CompiledForm, CompiledSystem, FormSystem, UnivariatePoly};
use crate::quadrature::KahanComplex;
use crate::{Error, Result};

/// `(α, β)` with every entry reduced into `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArcPoint {
    pub alpha: f64,
    pub beta: Vec<f64>,
}

fn reduce_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl ArcPoint {
    pub fn new(alpha: f64, beta: Vec<f64>) -> Self {
        ArcPoint { alpha: reduce_unit(alpha), beta: beta.into_iter().map(reduce_unit).collect() }
    }

    pub fn origin(rho: usize) -> Self {
        ArcPoint { alpha: 0.0, beta: vec![0.0; rho] }
    }

    /// `(α, β₁, …)`, the weights of `F, G₁, …`.
    pub fn weights(&self) -> Vec<f64> {
        std::iter::once(self.alpha).chain(self.beta.iter().copied()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SumValue {
    #[serde(serialize_with = "ser_complex")]
    pub value: Complex64,
    pub terms: u128,
    /// Absolute bound on the floating-point error of `value`.
    pub error_bound: f64,
}

fn ser_complex<S: serde::Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

/// Rounding bound for a compensated sum of `terms` unit-modulus values.
fn rounding_bound(terms: u128) -> f64 {
    let n = terms as f64;
    8.0 * f64::EPSILON * n * n.log2().max(1.0)
}

impl SumValue {
    fn from_sum(value: Complex64, terms: u128) -> Self {
        SumValue { value, terms, error_bound: rounding_bound(terms) }
    }

    pub fn abs(&self) -> f64 {
        self.value.norm()
    }

    /// Product of independent sums; the error bound follows
    /// `Π(|vᵢ| + eᵢ) − Π|vᵢ|`.
    pub fn product(parts: &[SumValue]) -> SumValue {
        let mut value = Complex64::new(1.0, 0.0);
        let (mut hi, mut lo) = (1.0f64, 1.0f64);
        let mut terms = 1u128;
        for p in parts {
            value *= p.value;
            hi *= p.value.norm() + p.error_bound;
            lo *= p.value.norm();
            terms = terms.saturating_mul(p.terms);
        }
        SumValue { value, terms, error_bound: (hi - lo).max(0.0) + 4.0 * f64::EPSILON * hi * parts.len() as f64 }
    }
}

fn decode(x: f64) -> (i128, i32) {
    let bits = x.to_bits();
    let sign = if bits >> 63 == 0 { 1i128 } else { -1 };
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & 0x000f_ffff_ffff_ffff) as i128;
    let m = if exp == 0 { frac << 1 } else { frac | (1i128 << 52) };
    (sign * m, exp - 1075)
}

fn scaled(r: f64, shift: u32) -> f64 {
    let v = r * 2f64.powi(-(shift as i32));
    if v >= 1.0 {
        0.0
    } else {
        v
    }
}

/// `αn mod 1` in `[0, 1)`, exact up to the final rounding.
pub fn frac_mul(alpha: f64, n: i128) -> f64 {
    if alpha == 0.0 || n == 0 {
        return 0.0;
    }
    let (m, e) = decode(alpha);
    if e >= 0 {
        return 0.0;
    }
    let shift = (-e) as u32;
    if shift <= 126 {
        if let Some(prod) = m.checked_mul(n) {
            let r = prod.rem_euclid(1i128 << shift);
            return scaled(r as f64, shift);
        }
    }
    frac_mul_big(alpha, &BigInt::from(n))
}

/// [`frac_mul`] for arbitrary-size `n`.
pub fn frac_mul_big(alpha: f64, n: &BigInt) -> f64 {
    if alpha == 0.0 || n.is_zero() {
        return 0.0;
    }
    let (m, e) = decode(alpha);
    if e >= 0 {
        return 0.0;
    }
    let shift = (-e) as u32;
    let r = (BigInt::from(m) * n).mod_floor(&(BigInt::from(1) << shift));
    if shift > 60 {
        let top = (r >> (shift - 60)).to_f64().unwrap_or(0.0);
        scaled(top, 60)
    } else {
        scaled(r.to_f64().unwrap_or(0.0), shift)
    }
}

/// `e(p) = exp(2πip)` after moving `p` into `[−½, ½]`, so that
/// `e(−p) = conj e(p)` holds bit for bit.
pub fn e_unit(p: f64) -> Complex64 {
    let r = p - p.round();
    let (s, c) = (std::f64::consts::TAU * r).sin_cos();
    Complex64::new(c, s)
}

fn eval_form_i128(f: &CompiledForm, x: &[i64]) -> Option<i128> {
    let mut acc: i128 = 0;
    for t in &f.terms {
        let mut v = t.coef as i128;
        for &(i, e) in &t.vars {
            v = v.checked_mul((x[i] as i128).checked_pow(e)?)?;
        }
        acc = acc.checked_add(v)?;
    }
    Some(acc)
}

fn phase_at(sys: &CompiledSystem, weights: &[f64], x: &[i64]) -> Result<f64> {
    let mut p = 0.0;
    for (f, &w) in sys.eqs.iter().zip(weights) {
        if w == 0.0 || f.is_zero() {
            continue;
        }
        p += frac_mul(w, eval_form_i128(f, x).ok_or(Error::Overflow("phase evaluation"))?);
    }
    Ok(p)
}

/// Sum over `[lo, hi]^n` of `e(phase)`, split over the first coordinate and
/// merged in index order, so the result does not depend on the thread count.
fn box_sum(sys: &CompiledSystem, weights: &[f64], lo: i64, hi: i64) -> Result<SumValue> {
    let n = sys.nvars;
    let width = (hi - lo + 1) as u128;
    if n == 0 {
        return Ok(SumValue::from_sum(Complex64::new(1.0, 0.0), 1));
    }
    let parts: Vec<Result<Complex64>> = (lo..=hi)
        .into_par_iter()
        .map(|x0| {
            let mut x = vec![lo; n];
            x[0] = x0;
            let mut acc = KahanComplex::default();
            loop {
                acc.add(e_unit(phase_at(sys, weights, &x)?));
                let mut i = 1;
                while i < n {
                    if x[i] < hi {
                        x[i] += 1;
                        break;
                    }
                    x[i] = lo;
                    i += 1;
                }
                if i >= n {
                    break;
                }
            }
            Ok(acc.value())
        })
        .collect();
    let mut acc = KahanComplex::default();
    for p in parts {
        acc.add(p?);
    }
    Ok(SumValue::from_sum(acc.value(), width.pow(n as u32)))
}

/// `T(α, β) = Σ_{|x|≤X} e(αF(x) + Σβᵢ Gᵢ(x))`, factorized over the connected
/// components of the system; identical components are evaluated once.
pub fn weyl_sum_t(sys: &FormSystem, pt: &ArcPoint, x: u64, budget: u64) -> Result<SumValue> {
    if pt.beta.len() != sys.rho() {
        return Err(Error::DimensionMismatch { expected: sys.rho(), got: pt.beta.len() });
    }
    let comps = sys.components();
    let side = (2 * x + 1) as f64;
    let cost: f64 = comps.iter().map(|c| side.powi(c.len() as i32)).sum();
    if cost > budget as f64 {
        return Err(Error::BudgetExceeded { needed: cost, budget });
    }
    let weights = pt.weights();
    let xi = x as i64;
    let mut cache: Vec<(CompiledSystem, SumValue)> = Vec::new();
    let mut parts = Vec::with_capacity(comps.len());
    for c in &comps {
        let compiled = sys.compile_vars(c);
        let v = match cache.iter().find(|(k, _)| *k == compiled) {
            Some((_, v)) => *v,
            None => {
                let v = box_sum(&compiled, &weights, -xi, xi)?;
                cache.push((compiled, v));
                v
            }
        };
        parts.push(v);
    }
    Ok(SumValue::product(&parts))
}

fn poly_value(phi: &UnivariatePoly, x: i64) -> PolyVal {
    match phi.eval_i128(x as i128) {
        Some(v) => PolyVal::Small(v),
        None => PolyVal::Big(phi.eval(&BigInt::from(x))),
    }
}

enum PolyVal {
    Small(i128),
    Big(BigInt),
}

fn frac_poly(alpha: f64, v: &PolyVal) -> f64 {
    match v {
        PolyVal::Small(n) => frac_mul(alpha, *n),
        PolyVal::Big(n) => frac_mul_big(alpha, n),
    }
}

/// `Σ_{x=lo}^{hi} e(αφ(x))`.
pub fn phase_sum_f(phi: &UnivariatePoly, alpha: f64, lo: i64, hi: i64) -> SumValue {
    if hi < lo {
        return SumValue::from_sum(Complex64::zero(), 0);
    }
    let mut acc = KahanComplex::default();
    for x in lo..=hi {
        acc.add(e_unit(frac_poly(alpha, &poly_value(phi, x))));
    }
    SumValue::from_sum(acc.value(), (hi - lo + 1) as u128)
}

/// `f(α)` at many `α` with the polynomial values computed once.
pub struct PhaseTable {
    values: Vec<PolyVal>,
}

impl PhaseTable {
    pub fn new(phi: &UnivariatePoly, lo: i64, hi: i64) -> Self {
        PhaseTable { values: (lo..=hi).map(|x| poly_value(phi, x)).collect() }
    }

    pub fn sum(&self, alpha: f64) -> Complex64 {
        let mut acc = KahanComplex::default();
        for v in &self.values {
            acc.add(e_unit(frac_poly(alpha, v)));
        }
        acc.value()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Residue histogram `H` of `aF + Σbᵢ Gᵢ` over `(ℤ/qℤ)^s`, so that
/// `S(q; a, b) = Σ_r H[r] e(r/q)`. Components are counted separately and
/// combined by cyclic convolution.
pub fn complete_sum_histogram(sys: &FormSystem, q: u64, a: i64, b: &[i64], budget: u64) -> Result<Vec<u128>> {
    if q == 0 {
        return Err(Error::invalid("modulus must be positive"));
    }
    if b.len() != sys.rho() {
        return Err(Error::DimensionMismatch { expected: sys.rho(), got: b.len() });
    }
    let comps = sys.components();
    let cost: f64 = comps.iter().map(|c| (q as f64).powi(c.len() as i32)).sum::<f64>() + (comps.len() as f64) * (q * q) as f64;
    if cost > budget as f64 {
        return Err(Error::BudgetExceeded { needed: cost, budget });
    }
    let qu = q as usize;
    let w: Vec<u64> = std::iter::once(a).chain(b.iter().copied()).map(|v| (v as i128).rem_euclid(q as i128) as u64).collect();
    let mut cache: Vec<(CompiledSystem, Vec<u128>)> = Vec::new();
    let mut total = vec![0u128; qu];
    total[0] = 1;
    for c in &comps {
        let compiled = sys.compile_vars(c);
        let hist = match cache.iter().find(|(k, _)| *k == compiled) {
            Some((_, h)) => h.clone(),
            None => {
                let h = residue_histogram(&compiled, &w, q);
                cache.push((compiled, h.clone()));
                h
            }
        };
        let mut next = vec![0u128; qu];
        for (r1, &c1) in total.iter().enumerate() {
            if c1 == 0 {
                continue;
            }
            for (r2, &c2) in hist.iter().enumerate() {
                if c2 != 0 {
                    next[(r1 + r2) % qu] += c1 * c2;
                }
            }
        }
        total = next;
    }
    Ok(total)
}

fn residue_histogram(sys: &CompiledSystem, w: &[u64], q: u64) -> Vec<u128> {
    let n = sys.nvars;
    let mut hist = vec![0u128; q as usize];
    let mut x = vec![0u64; n];
    loop {
        let mut r = 0u64;
        for (f, &wi) in sys.eqs.iter().zip(w) {
            if wi != 0 {
                r = (r + crate::arith::mul_mod(wi, f.eval_mod(&x, q), q)) % q;
            }
        }
        hist[r as usize] += 1;
        let mut i = 0;
        while i < n {
            if x[i] + 1 < q {
                x[i] += 1;
                break;
            }
            x[i] = 0;
            i += 1;
        }
        if i >= n {
            break;
        }
    }
    hist
}

/// `Σ_r H[r] e(r/q)` with `e(r/q)` taken from an exact residue table.
pub fn histogram_value(hist: &[u128]) -> SumValue {
    let q = hist.len() as u64;
    let mut acc = KahanComplex::default();
    let mut terms = 0u128;
    for (r, &c) in hist.iter().enumerate() {
        if c != 0 {
            acc.add(e_unit(r as f64 / q as f64) * c as f64);
            terms += c;
        }
    }
    SumValue { value: acc.value(), terms, error_bound: 8.0 * f64::EPSILON * terms as f64 * (q as f64).log2().max(1.0) }
}

/// `S(q; a, b) = Σ_{x mod q} e((aF(x) + Σbᵢ Gᵢ(x))/q)`.
pub fn complete_sum_s(sys: &FormSystem, q: u64, a: i64, b: &[i64], budget: u64) -> Result<SumValue> {
    Ok(histogram_value(&complete_sum_histogram(sys, q, a, b, budget)?))
}

/// Number of solutions of `φ(x₁)+…+φ(x_u) = φ(y₁)+…+φ(y_u)` with all
/// variables in `[lo, hi]`, as `Σ r(n)²` over the `u`-fold sums.
pub fn mean_value_count(phi: &UnivariatePoly, u: u32, lo: i64, hi: i64, budget: u64) -> Result<u128> {
    if hi < lo || u == 0 {
        return Err(Error::invalid("need a nonempty range and u ≥ 1"));
    }
    let len = (hi - lo + 1) as f64;
    let needed = len.powi(u as i32);
    if needed > budget as f64 {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let vals: Vec<i128> = (lo..=hi)
        .map(|x| phi.eval_i128(x as i128).ok_or(Error::Overflow("mean value polynomial")))
        .collect::<Result<_>>()?;
    let mut reps: FxHashMap<i128, u128> = FxHashMap::default();
    reps.insert(0, 1);
    for _ in 0..u {
        let mut next: FxHashMap<i128, u128> = FxHashMap::default();
        next.reserve(reps.len() * 2);
        for (&s, &c) in &reps {
            for &v in &vals {
                let key = s.checked_add(v).ok_or(Error::Overflow("mean value sums"))?;
                *next.entry(key).or_insert(0) += c;
            }
        }
        reps = next;
    }
    Ok(reps.values().map(|&c| c * c).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinorArcSup {
    pub x: u64,
    pub q: f64,
    /// `max |f(α)|/X` over the sampled minor-arc points; a lower bound on the sup.
    pub normalized: f64,
    /// `normalized / Q^{−1/σ₀(j)}`.
    pub ratio: f64,
    pub argmax_alpha: f64,
    pub samples: usize,
    pub sigma0: u64,
}

/// Sample points: midpoints of consecutive Farey fractions of order
/// `max(depth, ⌈Q⌉)` plus `jitter` seeded points per gap, kept if they lie in
/// `𝔪_j(Q)`.
pub fn minor_arc_samples(x: u64, j: u32, big_q: f64, depth: u64, jitter: usize, seed: u64) -> Result<Vec<f64>> {
    let xf = x as f64;
    if big_q >= xf.powi(j as i32) {
        return Err(Error::EmptyMinorArcs { x, q: big_q });
    }
    let order = depth.max(big_q.ceil() as u64).max(1);
    let mut fr = farey(order);
    fr.push((1, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for w in fr.windows(2) {
        let (l, r) = (w[0].0 as f64 / w[0].1 as f64, w[1].0 as f64 / w[1].1 as f64);
        let mut cand = vec![0.5 * (l + r)];
        for _ in 0..jitter {
            cand.push(l + (r - l) * rng.gen::<f64>());
        }
        for a in cand {
            if !in_major_mj(a, xf, j, big_q.max(1.0))?.inside {
                out.push(a);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyMinorArcs { x, q: big_q });
    }
    Ok(out)
}

/// Sampled sup of `|Σ_{1≤x≤X} e(αx^j)|/X` over `𝔪_j(Q)`.
pub fn minor_arc_sup(j: u32, x: u64, big_q: f64, depth: u64, jitter: usize, seed: u64) -> Result<MinorArcSup> {
    let phi = UnivariatePoly::monomial(j, 1);
    let alphas = minor_arc_samples(x, j, big_q, depth, jitter, seed)?;
    let table = PhaseTable::new(&phi, 1, x as i64);
    let vals: Vec<f64> = alphas.par_iter().map(|&a| table.sum(a).norm()).collect();
    let (i, best) = vals.iter().enumerate().fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let sig = sigma0(j)?;
    let normalized = best / x as f64;
    Ok(MinorArcSup {
        x,
        q: big_q,
        normalized,
        ratio: normalized / big_q.powf(-1.0 / sig as f64),
        argmax_alpha: alphas[i],
        samples: alphas.len(),
        sigma0: sig,
    })
}

/// Sampled sup over `𝔪_j(Q)` of `(1/H) Σ_{h≤H} |f(hα)|/X`.
pub fn averaged_minor_arc_sup(j: u32, x: u64, big_q: f64, h_max: u64, depth: u64, seed: u64) -> Result<f64> {
    let phi = UnivariatePoly::monomial(j, 1);
    let alphas = minor_arc_samples(x, j, big_q, depth, 1, seed)?;
    let table = PhaseTable::new(&phi, 1, x as i64);
    let best = alphas
        .par_iter()
        .map(|&a| (1..=h_max).map(|h| table.sum(reduce_unit(a * h as f64)).norm()).sum::<f64>() / (h_max as f64 * x as f64))
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DifferencingCheck {
    /// `|T(α, β)|^{2^d}`.
    pub lhs: f64,
    /// `(4X+1)^{(2^d−d−1)s} Πᵢ g(αaᵢ)`.
    pub rhs_product: f64,
    /// `(4X+1)^{(2^d−d−1)s} Σᵢ g(αaᵢ)^s`.
    pub rhs_sum: f64,
    pub g: Vec<f64>,
    pub holds: bool,
}

/// `g(β) = Σ_{h ∈ [−2X, 2X]^d} |Σ_{x ∈ I(h)} e(β Δ_{h₁…h_d} x^k)|` where
/// `I(h)` keeps `x` and every shift `x + Σ_{j∈S} h_j` inside `[−X, X]`.
pub fn differenced_g(k: u32, d: u32, beta: f64, x: i64) -> f64 {
    let d = d as usize;
    let mut h = vec![-2 * x; d];
    let subsets: Vec<Vec<usize>> = (0..1usize << d).map(|m| (0..d).filter(|&j| m >> j & 1 == 1).collect()).collect();
    let mut total = 0.0;
    loop {
        let shifts: Vec<(i64, i128)> = subsets
            .iter()
            .map(|s| (s.iter().map(|&j| h[j]).sum::<i64>(), if (d - s.len()) % 2 == 0 { 1 } else { -1 }))
            .collect();
        let lo = shifts.iter().map(|&(t, _)| -x - t).max().unwrap_or(-x);
        let hi = shifts.iter().map(|&(t, _)| x - t).min().unwrap_or(x);
        let mut acc = KahanComplex::default();
        for xv in lo..=hi {
            let v: i128 = shifts.iter().map(|&(t, sgn)| sgn * ((xv + t) as i128).pow(k)).sum();
            acc.add(e_unit(frac_mul(beta, v)));
        }
        total += acc.value().norm();
        let mut i = 0;
        while i < d {
            if h[i] < 2 * x {
                h[i] += 1;
                break;
            }
            h[i] = -2 * x;
            i += 1;
        }
        if i >= d {
            break;
        }
    }
    total
}

/// Weyl differencing bound for `|T(α, β)|` after `d` differences, which
/// removes the degree-`d` forms and leaves the diagonal form coordinate-wise.
pub fn differencing_check(sys: &FormSystem, pt: &ArcPoint, x: u64, budget: u64) -> Result<DifferencingCheck> {
    let d = sys.d().ok_or_else(|| Error::invalid("differencing needs at least one general form"))?;
    let s = sys.s() as i32;
    let t = weyl_sum_t(sys, pt, x, budget)?;
    let pow = 1i32 << d;
    let lhs = t.abs().powi(pow);
    let base = ((4 * x + 1) as f64).powi((pow - d as i32 - 1) * s);
    let g: Vec<f64> = sys
        .diagonal()
        .coeffs()
        .iter()
        .map(|&a| differenced_g(sys.k(), d, reduce_unit(frac_mul(pt.alpha, a as i128)), x as i64))
        .collect();
    let rhs_product = base * g.iter().product::<f64>();
    let rhs_sum = base * g.iter().map(|v| v.powi(s)).sum::<f64>();
    let slack = 1.0 + 1e-9;
    Ok(DifferencingCheck { lhs, rhs_product, rhs_sum, holds: lhs <= rhs_product * slack && rhs_product <= rhs_sum * slack, g })
}
