//! Exact point counts: `N(X)` over boxes, `Γ(q)` over residue rings, the
//! local densities `χ_p(h) = Γ(p^h)/p^{h(s−ρ−1)}`, and Hensel witnesses.
//!
//! Box and residue counts share one enumeration engine. The meet-in-the-middle
//! route splits the variables into blocks `A`, `B`, `C` such that no monomial
//! involves both an `A` and a `B` variable; for each fixed `x_C` the value
//! vectors of the `A` half are hashed and matched against the negated `B`
//! half.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::arith::{factorize, rank_mod_p, reduce_big, solve_mod_p};
use crate::forms::{CompiledSystem, FormSystem};
use crate::{Error, Result, DEFAULT_BUDGET};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountMethod {
    Exhaustive,
    MeetInMiddle,
}

impl CountMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CountMethod::Exhaustive => "exhaustive",
            CountMethod::MeetInMiddle => "meet-in-middle",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CountOptions {
    /// Cap on estimated enumeration nodes.
    pub budget: u64,
    /// Number of partition ranges; 0 means one per rayon thread.
    pub workers: usize,
    /// Forces a method; `None` picks the cheaper one.
    pub method: Option<CountMethod>,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions { budget: DEFAULT_BUDGET, workers: 0, method: None }
    }
}

impl CountOptions {
    fn chunks(&self) -> usize {
        if self.workers == 0 {
            rayon::current_num_threads().max(1)
        } else {
            self.workers
        }
    }
}

/// Half-open range of values of the partitioned coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct WorkRange {
    pub coordinate: usize,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CountResult {
    pub x: u64,
    pub n: u128,
    pub method: CountMethod,
    pub elapsed_secs: f64,
    pub partition: Vec<WorkRange>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Domain {
    Box(u64),
    Residues(u64),
}

impl Domain {
    fn values(self) -> Vec<i64> {
        match self {
            Domain::Box(x) => (-(x as i64)..=x as i64).collect(),
            Domain::Residues(q) => (0..q as i64).collect(),
        }
    }

    fn size(self) -> u64 {
        match self {
            Domain::Box(x) => 2 * x + 1,
            Domain::Residues(q) => q,
        }
    }

    fn modulus(self) -> Option<u64> {
        match self {
            Domain::Box(_) => None,
            Domain::Residues(q) => Some(q),
        }
    }
}

type Key = SmallVec<[i128; 4]>;

#[derive(Clone, Debug)]
struct EngineTerm {
    coef: i128,
    vars: SmallVec<[(usize, u32); 4]>,
}

/// Compiled equations with power tables over the domain values.
struct Engine {
    s: usize,
    modulus: Option<u64>,
    values: Vec<i64>,
    // pow[i][e] = values[i]^e, reduced when a modulus is set.
    pow: Vec<Vec<i128>>,
    eqs: Vec<Vec<EngineTerm>>,
}

impl Engine {
    fn new(sys: &CompiledSystem, domain: Domain) -> Result<Self> {
        let modulus = domain.modulus();
        let values = domain.values();
        let maxdeg = sys.eqs.iter().map(|e| e.degree).max().unwrap_or(1);
        if modulus.is_none() {
            let r = match domain {
                Domain::Box(x) => x as f64,
                Domain::Residues(_) => unreachable!(),
            };
            for eq in &sys.eqs {
                if eq.sup_on_cube(r) * 4.0 >= i128::MAX as f64 {
                    return Err(Error::Overflow("box count values exceed i128"));
                }
            }
        }
        let pow = values
            .iter()
            .map(|&v| {
                let mut row = Vec::with_capacity(maxdeg as usize + 1);
                let mut acc: i128 = 1;
                for _ in 0..=maxdeg {
                    row.push(acc);
                    acc = match modulus {
                        Some(q) => (acc * v as i128).rem_euclid(q as i128),
                        None => acc * v as i128,
                    };
                }
                row
            })
            .collect();
        let eqs = sys
            .eqs
            .iter()
            .map(|eq| {
                eq.terms
                    .iter()
                    .map(|t| EngineTerm {
                        coef: match modulus {
                            Some(q) => (t.coef as i128).rem_euclid(q as i128),
                            None => t.coef as i128,
                        },
                        vars: t.vars.clone(),
                    })
                    .collect()
            })
            .collect();
        Ok(Engine { s: sys.nvars, modulus, values, pow, eqs })
    }

    fn n(&self) -> usize {
        self.values.len()
    }

    fn term_value(&self, t: &EngineTerm, idx: &[usize]) -> i128 {
        let mut v = t.coef;
        match self.modulus {
            Some(q) => {
                for &(i, e) in &t.vars {
                    v = (v * self.pow[idx[i]][e as usize]) % q as i128;
                }
            }
            None => {
                for &(i, e) in &t.vars {
                    v *= self.pow[idx[i]][e as usize];
                }
            }
        }
        v
    }

    fn reduce(&self, v: i128) -> i128 {
        match self.modulus {
            Some(q) => v.rem_euclid(q as i128),
            None => v,
        }
    }

    fn negate(&self, v: i128) -> i128 {
        match self.modulus {
            Some(q) => (q as i128 - v) % q as i128,
            None => -v,
        }
    }

    fn all_zero(&self, idx: &[usize]) -> bool {
        self.eqs
            .iter()
            .all(|eq| self.reduce(eq.iter().map(|t| self.term_value(t, idx)).sum()) == 0)
    }

    fn side_key(&self, side: &[Vec<usize>], idx: &[usize]) -> Key {
        side.iter()
            .zip(&self.eqs)
            .map(|(terms, eq)| self.reduce(terms.iter().map(|&t| self.term_value(&eq[t], idx)).sum()))
            .collect()
    }
}

/// Visits every assignment of `vars` (as value indices `0..n`) in `idx`.
fn for_each_assignment(vars: &[usize], n: usize, idx: &mut [usize], mut f: impl FnMut(&[usize])) {
    for &v in vars {
        idx[v] = 0;
    }
    loop {
        f(idx);
        let mut pos = 0;
        loop {
            if pos == vars.len() {
                return;
            }
            let v = vars[pos];
            idx[v] += 1;
            if idx[v] < n {
                break;
            }
            idx[v] = 0;
            pos += 1;
        }
    }
}

/// Variable blocks for the meet-in-the-middle route.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub c: Vec<usize>,
}

impl SplitPlan {
    /// `log(n^{|C|}(n^{|A|} + n^{|B|}))`.
    pub fn log_cost(&self, n: u64) -> f64 {
        let ln = (n as f64).ln();
        self.c.len() as f64 * ln + log_add(self.a.len() as f64 * ln, self.b.len() as f64 * ln)
    }
}

fn log_add(x: f64, y: f64) -> f64 {
    let m = x.max(y);
    m + ((x - m).exp() + (y - m).exp()).ln()
}

fn plan_is_valid(plan_of: &[u8], sets: &[Vec<usize>]) -> bool {
    sets.iter().all(|set| {
        let has_a = set.iter().any(|&v| plan_of[v] == 0);
        let has_b = set.iter().any(|&v| plan_of[v] == 1);
        !(has_a && has_b)
    })
}

/// Cheapest valid split with nonempty `A` and `B`, or `None` for `s < 2`.
pub fn choose_split(sys: &FormSystem, n: u64) -> Option<SplitPlan> {
    let s = sys.s();
    if s < 2 {
        return None;
    }
    let sets = sys.interaction_sets();
    let build = |labels: &[u8]| SplitPlan {
        a: (0..s).filter(|&i| labels[i] == 0).collect(),
        b: (0..s).filter(|&i| labels[i] == 1).collect(),
        c: (0..s).filter(|&i| labels[i] == 2).collect(),
    };
    if s <= 12 {
        let mut best: Option<(f64, SplitPlan)> = None;
        let total = 3u64.pow(s as u32);
        let mut labels = vec![0u8; s];
        for code in 0..total {
            let mut c = code;
            for l in labels.iter_mut() {
                *l = (c % 3) as u8;
                c /= 3;
            }
            // Symmetry: the first non-C variable goes to A.
            if labels.iter().find(|&&l| l != 2) != Some(&0) {
                continue;
            }
            if !labels.contains(&1) || !plan_is_valid(&labels, &sets) {
                continue;
            }
            let plan = build(&labels);
            let cost = plan.log_cost(n);
            if best.as_ref().map_or(true, |(b, _)| cost < *b - 1e-12) {
                best = Some((cost, plan));
            }
        }
        return best.map(|(_, p)| p);
    }
    // Large s: balance whole components between A and B.
    let mut comps = sys.components();
    comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
    if comps.len() < 2 {
        return None;
    }
    let mut labels = vec![0u8; s];
    let (mut na, mut nb) = (0, 0);
    for comp in comps {
        let side = if na <= nb { 0 } else { 1 };
        for &v in &comp {
            labels[v] = side;
        }
        if side == 0 {
            na += comp.len();
        } else {
            nb += comp.len();
        }
    }
    Some(build(&labels))
}

fn partition(n: usize, chunks: usize) -> Vec<(usize, usize)> {
    let chunks = chunks.clamp(1, n.max(1));
    (0..chunks)
        .map(|i| (i * n / chunks, (i + 1) * n / chunks))
        .filter(|(lo, hi)| hi > lo)
        .collect()
}

struct Counted {
    n: u128,
    method: CountMethod,
    partition: Vec<WorkRange>,
}

fn count_domain(sys: &FormSystem, domain: Domain, opts: &CountOptions) -> Result<Counted> {
    let s = sys.s();
    let n = domain.size();
    let exhaustive_log = s as f64 * (n as f64).ln();
    let plan = choose_split(sys, n);
    let method = match opts.method {
        Some(m) => m,
        None => match &plan {
            Some(p) if s >= 4 && p.log_cost(n) < exhaustive_log => CountMethod::MeetInMiddle,
            _ => CountMethod::Exhaustive,
        },
    };
    let log_cost = match (method, &plan) {
        (CountMethod::MeetInMiddle, Some(p)) => p.log_cost(n),
        (CountMethod::MeetInMiddle, None) => {
            return Err(Error::invalid("meet-in-the-middle needs at least two variables"));
        }
        (CountMethod::Exhaustive, _) => exhaustive_log,
    };
    let needed = log_cost.exp();
    if needed > opts.budget as f64 {
        return Err(Error::BudgetExceeded { needed, budget: opts.budget });
    }
    let engine = Engine::new(&sys.compile(), domain)?;
    match method {
        CountMethod::Exhaustive => count_exhaustive(&engine, opts),
        CountMethod::MeetInMiddle => count_mitm(&engine, plan.as_ref().expect("plan"), opts),
    }
}

fn count_exhaustive(engine: &Engine, opts: &CountOptions) -> Result<Counted> {
    let n = engine.n();
    let rest: Vec<usize> = (1..engine.s).collect();
    let ranges = partition(n, opts.chunks());
    let n_total: u128 = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut idx = vec![0usize; engine.s];
            let mut count: u128 = 0;
            for lead in lo..hi {
                idx[0] = lead;
                for_each_assignment(&rest, n, &mut idx, |idx| {
                    if engine.all_zero(idx) {
                        count += 1;
                    }
                });
            }
            count
        })
        .sum();
    Ok(Counted { n: n_total, method: CountMethod::Exhaustive, partition: trace(engine, 0, &ranges) })
}

fn trace(engine: &Engine, coordinate: usize, ranges: &[(usize, usize)]) -> Vec<WorkRange> {
    ranges
        .iter()
        .map(|&(lo, hi)| WorkRange { coordinate, lo: engine.values[lo], hi: engine.values[hi - 1] + 1 })
        .collect()
}

fn count_mitm(engine: &Engine, plan: &SplitPlan, opts: &CountOptions) -> Result<Counted> {
    let n = engine.n();
    let in_a_or_c = |v: usize| plan.a.contains(&v) || plan.c.contains(&v);
    // Per equation, term indices evaluated with the A half (support in A ∪ C)
    // and with the B half (the rest, support in B ∪ C touching B).
    let mut side_a = Vec::new();
    let mut side_b = Vec::new();
    for eq in &engine.eqs {
        let (mut ta, mut tb) = (Vec::new(), Vec::new());
        for (i, t) in eq.iter().enumerate() {
            if t.vars.iter().all(|&(v, _)| in_a_or_c(v)) {
                ta.push(i);
            } else {
                tb.push(i);
            }
        }
        side_a.push(ta);
        side_b.push(tb);
    }
    let match_halves = |idx: &mut [usize], map: &mut FxHashMap<Key, u64>, b_vars: &[usize]| -> u128 {
        map.clear();
        for_each_assignment(&plan.a, n, idx, |idx| {
            *map.entry(engine.side_key(&side_a, idx)).or_insert(0) += 1;
        });
        let mut count: u128 = 0;
        for_each_assignment(b_vars, n, idx, |idx| {
            let key: Key = engine.side_key(&side_b, idx).iter().map(|&v| engine.negate(v)).collect();
            if let Some(&m) = map.get(&key) {
                count += m as u128;
            }
        });
        count
    };
    let ranges = partition(n, opts.chunks());
    if let Some((&lead, rest_c)) = plan.c.split_first() {
        let total: u128 = ranges
            .par_iter()
            .map(|&(lo, hi)| {
                let mut idx = vec![0usize; engine.s];
                let mut map = FxHashMap::default();
                let mut count = 0u128;
                for lv in lo..hi {
                    idx[lead] = lv;
                    let mut outer = Vec::new();
                    for_each_assignment(rest_c, n, &mut idx, |idx| outer.push(idx.to_vec()));
                    for mut fixed in outer {
                        count += match_halves(&mut fixed, &mut map, &plan.b);
                    }
                }
                count
            })
            .sum();
        return Ok(Counted { n: total, method: CountMethod::MeetInMiddle, partition: trace(engine, lead, &ranges) });
    }
    // No separator: one shared A table, B scanned in parallel by its lead coordinate.
    let mut idx = vec![0usize; engine.s];
    let mut map: FxHashMap<Key, u64> = FxHashMap::default();
    for_each_assignment(&plan.a, n, &mut idx, |idx| {
        *map.entry(engine.side_key(&side_a, idx)).or_insert(0) += 1;
    });
    let (&lead, rest_b) = plan.b.split_first().expect("B nonempty");
    let total: u128 = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut idx = vec![0usize; engine.s];
            let mut count = 0u128;
            for lv in lo..hi {
                idx[lead] = lv;
                for_each_assignment(rest_b, n, &mut idx, |idx| {
                    let key: Key = engine.side_key(&side_b, idx).iter().map(|&v| engine.negate(v)).collect();
                    if let Some(&m) = map.get(&key) {
                        count += m as u128;
                    }
                });
            }
            count
        })
        .sum();
    Ok(Counted { n: total, method: CountMethod::MeetInMiddle, partition: trace(engine, lead, &ranges) })
}

/// `N(X) = #{x ∈ [−X, X]^s : F(x) = G₁(x) = … = 0}`.
pub fn count_box(sys: &FormSystem, x: u64, opts: &CountOptions) -> Result<CountResult> {
    let start = Instant::now();
    let c = count_domain(sys, Domain::Box(x), opts)?;
    Ok(CountResult {
        x,
        n: c.n,
        method: c.method,
        elapsed_secs: start.elapsed().as_secs_f64(),
        partition: c.partition,
    })
}

/// Direct scan of the whole box, the reference for the other routes.
pub fn count_box_exhaustive(sys: &FormSystem, x: u64, opts: &CountOptions) -> Result<CountResult> {
    let opts = CountOptions { method: Some(CountMethod::Exhaustive), ..opts.clone() };
    count_box(sys, x, &opts)
}

/// Number of residue vectors mod `q` solving the system, by enumeration.
pub fn count_residues(sys: &FormSystem, q: u64, opts: &CountOptions) -> Result<u128> {
    if q == 1 {
        return Ok(1);
    }
    Ok(count_domain(sys, Domain::Residues(q), opts)?.n)
}

/// Exact routes for `Γ(p^e)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaRoute {
    /// Convolution of per-component value histograms mod `p^e`.
    Convolution,
    MeetInMiddle,
    Exhaustive,
    /// Depth-first lifting from solutions mod `p`.
    Lifting,
}

/// `Γ(q)`, multiplicative over the prime powers of `q`.
pub fn gamma_q(sys: &FormSystem, q: u64, opts: &CountOptions) -> Result<BigUint> {
    if q == 0 {
        return Err(Error::invalid("modulus must be positive"));
    }
    let mut out = BigUint::one();
    for (p, e) in factorize(q) {
        out *= gamma_prime_power(sys, p, e, opts)?;
    }
    Ok(out)
}

/// Natural-log cost estimates per route for `Γ(p^e)`.
fn route_costs(sys: &FormSystem, p: u64, e: u32) -> Vec<(GammaRoute, f64)> {
    let q = (p as f64).powi(e as i32);
    let lq = q.ln();
    let s = sys.s() as f64;
    let cells = (sys.rho() + 1) as f64;
    let comps = sys.components();
    let hist = comps.iter().map(|c| c.len() as f64 * lq).fold(f64::NEG_INFINITY, log_add);
    // Each convolution step touches (table size) × (component support) cells.
    let steps = comps.iter().map(|c| cells * lq + (c.len() as f64).min(cells) * lq).fold(f64::NEG_INFINITY, log_add);
    let conv = log_add(hist, steps);
    let mut out = vec![(GammaRoute::Convolution, conv), (GammaRoute::Exhaustive, s * lq)];
    if let Some(plan) = choose_split(sys, q as u64) {
        out.push((GammaRoute::MeetInMiddle, plan.log_cost(q as u64)));
    }
    // Lifting scans p^s residues per distinct target vector (about e of them) at
    // O(s) work each; singular residues branch further, so this is a floor.
    out.push((GammaRoute::Lifting, s * (p as f64).ln() + (e as f64 + 1.0).ln() + s.ln() + 2.0));
    out
}

/// `Γ(p^e)` by the cheapest exact route within budget.
pub fn gamma_prime_power(sys: &FormSystem, p: u64, e: u32, opts: &CountOptions) -> Result<BigUint> {
    if e == 0 {
        return Ok(BigUint::one());
    }
    let mut costs = route_costs(sys, p, e);
    costs.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (route, _) = costs[0];
    gamma_prime_power_via(sys, p, e, route, opts)
}

pub fn gamma_prime_power_via(sys: &FormSystem, p: u64, e: u32, route: GammaRoute, opts: &CountOptions) -> Result<BigUint> {
    let q = p
        .checked_pow(e)
        .ok_or_else(|| Error::invalid(format!("modulus {p}^{e} exceeds u64")))?;
    match route {
        GammaRoute::Convolution => gamma_by_convolution(sys, q, opts),
        GammaRoute::MeetInMiddle => {
            let o = CountOptions { method: Some(CountMethod::MeetInMiddle), ..opts.clone() };
            count_residues(sys, q, &o).map(BigUint::from)
        }
        GammaRoute::Exhaustive => {
            let o = CountOptions { method: Some(CountMethod::Exhaustive), ..opts.clone() };
            count_residues(sys, q, &o).map(BigUint::from)
        }
        GammaRoute::Lifting => {
            let mut lifter = Lifter::new(sys, p, opts.budget);
            lifter.gamma(e)
        }
    }
}

fn gamma_by_convolution(sys: &FormSystem, q: u64, opts: &CountOptions) -> Result<BigUint> {
    let cells = sys.rho() + 1;
    let size = (q as f64).powi(cells as i32);
    let comps = sys.components();
    let needed = comps.iter().map(|c| (q as f64).powi(c.len() as i32) + size * (q as f64).powi(c.len() as i32).min(size)).sum::<f64>();
    if needed > opts.budget as f64 || size > 1e7 {
        return Err(Error::BudgetExceeded { needed, budget: opts.budget });
    }
    let size = size as usize;
    let index = |vals: &[u64]| vals.iter().rev().fold(0usize, |acc, &v| acc * q as usize + v as usize);
    let mut total: Vec<BigUint> = vec![BigUint::zero(); size];
    total[0] = BigUint::one();
    for comp in comps {
        let local = sys.compile_vars(&comp);
        let mut hist = vec![0u64; size];
        let mut x = vec![0u64; comp.len()];
        loop {
            let vals: Vec<u64> = local.eqs.iter().map(|f| f.eval_mod(&x, q)).collect();
            hist[index(&vals)] += 1;
            let mut pos = 0;
            while pos < x.len() {
                x[pos] += 1;
                if x[pos] < q {
                    break;
                }
                x[pos] = 0;
                pos += 1;
            }
            if pos == x.len() {
                break;
            }
        }
        let support: Vec<(usize, u64)> = hist.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i, c)).collect();
        let decode = |mut i: usize| {
            let mut v = Vec::with_capacity(cells);
            for _ in 0..cells {
                v.push((i % q as usize) as u64);
                i /= q as usize;
            }
            v
        };
        let mut next: Vec<BigUint> = vec![BigUint::zero(); size];
        for (i, acc) in total.iter().enumerate() {
            if acc.is_zero() {
                continue;
            }
            let vi = decode(i);
            for &(j, c) in &support {
                let vj = decode(j);
                let sum: Vec<u64> = vi.iter().zip(&vj).map(|(a, b)| (a + b) % q).collect();
                next[index(&sum)] += acc * c;
            }
        }
        total = next;
    }
    Ok(total.swap_remove(0))
}

/// Depth-first lifting of solutions mod `p` through `p`-power levels.
///
/// `count_levels(e)` counts `x mod p^E` (`E = max e_j`) with equation `j`
/// vanishing mod `p^{e_j}`. Nonzero classes mod `p` are lifted one digit at a
/// time through the linear condition `eq(x)/p^h + ∇eq(x)·y ≡ 0 (mod p)`, with a
/// closed form once the Jacobian of the still-active equations has full rank.
/// The zero class reduces by homogeneity to targets `e_j − deg_j`.
pub struct Lifter {
    sys: CompiledSystem,
    s: usize,
    p: u64,
    degs: Vec<u32>,
    memo: HashMap<Vec<u32>, BigUint>,
    roots: HashMap<Vec<bool>, Vec<Vec<u64>>>,
    nodes: AtomicU64,
    budget: u64,
}

impl Lifter {
    pub fn new(sys: &FormSystem, p: u64, budget: u64) -> Self {
        let compiled = sys.compile();
        let degs = compiled.eqs.iter().map(|f| f.degree).collect();
        Lifter {
            s: sys.s(),
            sys: compiled,
            p,
            degs,
            memo: HashMap::new(),
            roots: HashMap::new(),
            nodes: AtomicU64::new(0),
            budget,
        }
    }

    /// `Γ(p^h)`.
    pub fn gamma(&mut self, h: u32) -> Result<BigUint> {
        let targets = vec![h; self.degs.len()];
        self.count_levels(&targets)
    }

    pub fn nodes_visited(&self) -> u64 {
        self.nodes.load(Ordering::Relaxed)
    }

    fn count_levels(&mut self, targets: &[u32]) -> Result<BigUint> {
        let e_max = targets.iter().copied().max().unwrap_or(0);
        if e_max == 0 {
            return Ok(BigUint::one());
        }
        if let Some(v) = self.memo.get(targets) {
            return Ok(v.clone());
        }
        let active: Vec<bool> = targets.iter().map(|&e| e >= 1).collect();
        let roots = self.roots_mod_p(&active)?;
        let p = self.p;
        let this = &*self;
        let partial: Result<Vec<BigUint>> = roots
            .par_iter()
            .map(|root| {
                let x: Vec<BigInt> = root.iter().map(|&v| BigInt::from(v)).collect();
                this.lift(x, 1, targets)
            })
            .collect();
        let mut total: BigUint = partial?.into_iter().sum();
        let reduced: Vec<u32> = targets.iter().zip(&self.degs).map(|(&e, &d)| e.saturating_sub(d)).collect();
        let e_red = reduced.iter().copied().max().unwrap_or(0);
        let zero_class = self.count_levels(&reduced)? * BigUint::from(p).pow(self.s as u32 * (e_max - 1 - e_red));
        total += zero_class;
        self.memo.insert(targets.to_vec(), total.clone());
        Ok(total)
    }

    fn roots_mod_p(&mut self, active: &[bool]) -> Result<Vec<Vec<u64>>> {
        if let Some(r) = self.roots.get(active) {
            return Ok(r.clone());
        }
        let p = self.p;
        let s = self.s;
        let scan = (p as f64).powi(s as i32);
        if scan > self.budget as f64 {
            return Err(Error::BudgetExceeded { needed: scan, budget: self.budget });
        }
        let eqs: Vec<_> = self.sys.eqs.iter().zip(active).filter(|(_, &a)| a).map(|(f, _)| f).collect();
        let found = Mutex::new(Vec::new());
        (0..p).into_par_iter().for_each(|lead| {
            let mut local = Vec::new();
            let mut x = vec![0u64; s];
            x[0] = lead;
            let rest: Vec<usize> = (1..s).collect();
            let mut idx = vec![0usize; s];
            idx[0] = lead as usize;
            for_each_assignment(&rest, p as usize, &mut idx, |idx| {
                for (xi, &i) in x.iter_mut().zip(idx) {
                    *xi = i as u64;
                }
                if x.iter().any(|&v| v != 0) && eqs.iter().all(|f| f.eval_mod(&x, p) == 0) {
                    local.push(x.clone());
                }
            });
            found.lock().expect("root list").extend(local);
        });
        let mut roots = found.into_inner().expect("root list");
        roots.sort_unstable();
        self.nodes.fetch_add(scan as u64, Ordering::Relaxed);
        self.roots.insert(active.to_vec(), roots.clone());
        Ok(roots)
    }

    fn lift(&self, x: Vec<BigInt>, h: u32, targets: &[u32]) -> Result<BigUint> {
        let e_max = targets.iter().copied().max().unwrap_or(0);
        if h >= e_max {
            return Ok(BigUint::one());
        }
        let p = self.p;
        let active: Vec<usize> = (0..targets.len()).filter(|&j| targets[j] > h).collect();
        let x_mod: Vec<u64> = x.iter().map(|v| reduce_big(v, p)).collect();
        let jac: Vec<Vec<u64>> = active.iter().map(|&j| self.sys.eqs[j].grad_mod(&x_mod, self.s, p)).collect();
        if rank_mod_p(&jac, p) == active.len() {
            let exp: u32 = (h..e_max)
                .map(|l| self.s as u32 - targets.iter().filter(|&&e| e > l).count() as u32)
                .sum();
            return Ok(BigUint::from(p).pow(exp));
        }
        let visited = self.nodes.fetch_add(1, Ordering::Relaxed) + 1;
        if visited > self.budget {
            return Err(Error::BudgetExceeded { needed: visited as f64, budget: self.budget });
        }
        let ph = BigInt::from(p).pow(h);
        let rhs: Vec<u64> = active
            .iter()
            .map(|&j| {
                let v = self.sys.eqs[j].eval_big(&x);
                let c = crate::arith::exact_div_big(&v, &ph).expect("active equation vanishes mod p^h");
                (p - reduce_big(&c, p)) % p
            })
            .collect();
        let Some(sol) = solve_mod_p(&jac, &rhs, self.s, p) else {
            return Ok(BigUint::zero());
        };
        let mut total = BigUint::zero();
        let mut combo = vec![0u64; sol.kernel.len()];
        loop {
            let y: Vec<u64> = (0..self.s)
                .map(|i| {
                    sol.kernel
                        .iter()
                        .zip(&combo)
                        .fold(sol.particular[i], |acc, (k, &c)| (acc + k[i] * c) % p)
                })
                .collect();
            let next: Vec<BigInt> = x.iter().zip(&y).map(|(xi, &yi)| xi + &ph * yi).collect();
            total += self.lift(next, h + 1, targets)?;
            let mut pos = 0;
            while pos < combo.len() {
                combo[pos] += 1;
                if combo[pos] < p {
                    break;
                }
                combo[pos] = 0;
                pos += 1;
            }
            if pos == combo.len() {
                break;
            }
        }
        Ok(total)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Stabilization {
    /// Only one value: nothing to compare.
    Undetermined,
    /// The last two values agree and a nonsingular witness mod `p` exists;
    /// `depth` is the first `h` from which the tail is constant.
    Stabilized { depth: u32 },
    NotStabilized,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChiPSequence {
    pub p: u64,
    /// `Γ(p^h)` for `h = 1..=h_max`.
    pub gammas: Vec<BigUint>,
    /// `χ_p(h) = Γ(p^h)/p^{h(s−ρ−1)}`, exact.
    #[serde(serialize_with = "serialize_rationals")]
    pub values: Vec<BigRational>,
    pub stabilization: Stabilization,
    pub witness: Option<Vec<u64>>,
}

fn serialize_rationals<S: serde::Serializer>(v: &[BigRational], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for r in v {
        seq.serialize_element(&format!("{}/{}", r.numer(), r.denom()))?;
    }
    seq.end()
}

impl ChiPSequence {
    pub fn is_stabilized(&self) -> bool {
        matches!(self.stabilization, Stabilization::Stabilized { .. })
    }

    pub fn last(&self) -> &BigRational {
        self.values.last().expect("h_max ≥ 1")
    }

    pub fn last_f64(&self) -> f64 {
        rational_to_f64(self.last())
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Scale down oversized numerators and denominators together.
        let n = r.numer().bits() as i64;
        let d = r.denom().bits() as i64;
        let shift = (n.max(d) - 1000).max(0) as usize;
        let num = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
        let den = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
        num / den
    })
}

/// `χ_p(1..=h_max)` by lifting, with the stabilisation verdict.
pub fn chi_p_sequence(sys: &FormSystem, p: u64, h_max: u32, opts: &CountOptions) -> Result<ChiPSequence> {
    if h_max == 0 {
        return Err(Error::invalid("h_max must be at least 1"));
    }
    let mut lifter = Lifter::new(sys, p, opts.budget);
    let mut gammas = Vec::with_capacity(h_max as usize);
    for h in 1..=h_max {
        let g = match lifter.gamma(h) {
            Ok(g) => g,
            Err(Error::BudgetExceeded { .. }) => gamma_prime_power(sys, p, h, opts)?,
            Err(e) => return Err(e),
        };
        gammas.push(g);
    }
    let excess = sys.s() as i64 - sys.rho() as i64 - 1;
    let values: Vec<BigRational> = gammas
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let h = i as i64 + 1;
            let g = BigRational::from_integer(BigInt::from(g.clone()));
            let scale = BigRational::from_integer(BigInt::from(p).pow((h * excess.unsigned_abs() as i64) as u32));
            if excess >= 0 {
                g / scale
            } else {
                g * scale
            }
        })
        .collect();
    let witness = hensel_witness(sys, p, 1).map(|w| w.iter().map(|v| v.to_u64().expect("residue")).collect());
    let stabilization = if values.len() < 2 {
        Stabilization::Undetermined
    } else {
        let n = values.len();
        if values[n - 1] == values[n - 2] && witness.is_some() {
            let mut depth = n - 1;
            while depth > 0 && values[depth - 1] == values[n - 1] {
                depth -= 1;
            }
            Stabilization::Stabilized { depth: depth as u32 + 1 }
        } else {
            Stabilization::NotStabilized
        }
    };
    Ok(ChiPSequence { p, gammas, values, stabilization, witness })
}

/// A solution mod `p^depth` whose Jacobian mod `p` has rank `ρ+1`: the first
/// such residue mod `p` in lexicographic order, lifted by particular
/// solutions of the linearised system.
pub fn hensel_witness(sys: &FormSystem, p: u64, depth: u32) -> Option<Vec<BigInt>> {
    if depth == 0 {
        return None;
    }
    let compiled = sys.compile();
    let s = sys.s();
    let r = compiled.eqs.len();
    let rest: Vec<usize> = (0..s).collect();
    let mut idx = vec![0usize; s];
    let mut root = None;
    let scan = (p as f64).powi(s as i32);
    if scan > DEFAULT_BUDGET as f64 {
        return None;
    }
    for_each_assignment(&rest, p as usize, &mut idx, |idx| {
        if root.is_some() {
            return;
        }
        let x: Vec<u64> = idx.iter().map(|&i| i as u64).collect();
        if x.iter().all(|&v| v == 0) {
            return;
        }
        if compiled.eqs.iter().all(|f| f.eval_mod(&x, p) == 0) && rank_mod_p(&compiled.jacobian_mod(&x, p), p) == r {
            root = Some(x);
        }
    });
    let root = root?;
    let jac = compiled.jacobian_mod(&root, p);
    let mut x: Vec<BigInt> = root.iter().map(|&v| BigInt::from(v)).collect();
    for h in 1..depth {
        let ph = BigInt::from(p).pow(h);
        let rhs: Vec<u64> = compiled
            .eqs
            .iter()
            .map(|f| {
                let c = crate::arith::exact_div_big(&f.eval_big(&x), &ph).expect("solution mod p^h");
                (p - reduce_big(&c, p)) % p
            })
            .collect();
        let sol = solve_mod_p(&jac, &rhs, s, p).expect("full rank system is solvable");
        for (xi, &yi) in x.iter_mut().zip(&sol.particular) {
            *xi += &ph * yi;
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{DiagonalForm, GeneralForm};
    use proptest::prelude::*;

    pub(crate) fn line_system() -> FormSystem {
        FormSystem::new(
            DiagonalForm::new(3, vec![1, 1]).unwrap(),
            vec![GeneralForm::from_terms(2, 2, &[(&[2, 0], 1), (&[0, 2], -1)]).unwrap()],
            None,
        )
        .unwrap()
    }

    pub(crate) fn quartic_system() -> FormSystem {
        FormSystem::new(
            DiagonalForm::new(3, vec![1, 1, 1, -2]).unwrap(),
            vec![GeneralForm::from_terms(4, 2, &[(&[1, 1, 0, 0], 1), (&[0, 0, 1, 1], -1)]).unwrap()],
            Some(0),
        )
        .unwrap()
    }

    fn opts() -> CountOptions {
        CountOptions::default()
    }

    // Brute-force solution count mod q, independent of the engine.
    fn brute_mod(sys: &FormSystem, q: u64) -> u64 {
        let c = sys.compile();
        let s = sys.s();
        let mut x = vec![0u64; s];
        let mut count = 0;
        loop {
            if c.eqs.iter().all(|f| f.eval_mod(&x, q) == 0) {
                count += 1;
            }
            let mut pos = 0;
            while pos < s {
                x[pos] += 1;
                if x[pos] < q {
                    break;
                }
                x[pos] = 0;
                pos += 1;
            }
            if pos == s {
                return count;
            }
        }
    }

    #[test]
    fn box_examples() {
        assert_eq!(count_box(&line_system(), 10, &opts()).unwrap().n, 21);
        assert_eq!(count_box(&quartic_system(), 0, &opts()).unwrap().n, 1);
        let sys = quartic_system();
        let exh = count_box_exhaustive(&sys, 2, &opts()).unwrap();
        let mitm = count_box(&sys, 2, &CountOptions { method: Some(CountMethod::MeetInMiddle), ..opts() }).unwrap();
        assert_eq!(exh.n, 9);
        assert_eq!(mitm.n, exh.n);
        assert_eq!(mitm.method, CountMethod::MeetInMiddle);
        // Frozen from the exhaustive oracle: the solution set is two rational lines.
        for (x, n) in [(5u64, 21u128), (10, 41), (20, 81)] {
            assert_eq!(count_box(&sys, x, &opts()).unwrap().n, n);
        }
    }

    #[test]
    fn budget_refusal() {
        let o = CountOptions { budget: 100, ..opts() };
        assert!(matches!(count_box(&quartic_system(), 50, &o), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn partition_independence() {
        let sys = quartic_system();
        let reference = count_box(&sys, 12, &CountOptions { workers: 1, ..opts() }).unwrap();
        for w in [2, 8, 17] {
            for m in [CountMethod::Exhaustive, CountMethod::MeetInMiddle] {
                let r = count_box(&sys, 12, &CountOptions { workers: w, method: Some(m), ..opts() }).unwrap();
                assert_eq!(r.n, reference.n, "workers={w} method={m:?}");
            }
        }
        let r = count_box(&sys, 12, &CountOptions { workers: 8, ..opts() }).unwrap();
        assert_eq!(r.partition.len(), 8);
        assert_eq!(r.partition[0].lo, -12);
        assert_eq!(r.partition.last().unwrap().hi, 13);
    }

    #[test]
    fn split_respects_cross_terms() {
        let plan = choose_split(&quartic_system(), 11).unwrap();
        for set in quartic_system().interaction_sets() {
            let a = set.iter().any(|v| plan.a.contains(v));
            let b = set.iter().any(|v| plan.b.contains(v));
            assert!(!(a && b));
        }
        assert!(plan.c.is_empty());
    }

    #[test]
    fn gamma_examples() {
        let sys = line_system();
        assert_eq!(gamma_q(&sys, 1, &opts()).unwrap(), BigUint::one());
        assert_eq!(gamma_q(&sys, 2, &opts()).unwrap(), BigUint::from(2u32));
        assert_eq!(gamma_q(&sys, 5, &opts()).unwrap(), BigUint::from(5u32));
        assert_eq!(gamma_q(&sys, 25, &opts()).unwrap(), BigUint::from(45u32));
    }

    #[test]
    fn gamma_routes_agree() {
        for sys in [line_system(), quartic_system()] {
            for (p, e) in [(2u64, 1u32), (2, 3), (3, 2), (5, 1), (5, 2), (7, 1)] {
                let q = p.pow(e);
                if (q as f64).powi(sys.s() as i32) > 3e6 {
                    continue;
                }
                let oracle = BigUint::from(brute_mod(&sys, q));
                for route in [GammaRoute::Convolution, GammaRoute::MeetInMiddle, GammaRoute::Exhaustive, GammaRoute::Lifting] {
                    let got = gamma_prime_power_via(&sys, p, e, route, &opts()).unwrap();
                    assert_eq!(got, oracle, "route {route:?} p={p} e={e}");
                }
            }
        }
    }

    #[test]
    fn chi_p_examples() {
        let seq = chi_p_sequence(&line_system(), 5, 2, &opts()).unwrap();
        assert_eq!(seq.gammas, vec![BigUint::from(5u32), BigUint::from(45u32)]);
        assert_eq!(seq.values[0], BigRational::from_integer(5.into()));
        assert_eq!(seq.stabilization, Stabilization::NotStabilized);
        assert!(seq.witness.is_none());

        let one = chi_p_sequence(&quartic_system(), 7, 1, &opts()).unwrap();
        assert_eq!(one.stabilization, Stabilization::Undetermined);
        assert_eq!(one.values[0], BigRational::new(37.into(), 49.into()));

        // Frozen from exhaustive counts mod 7, 49, 343: homogeneity keeps the
        // zero class growing, so the sequence is not constant.
        let seq = chi_p_sequence(&quartic_system(), 7, 3, &opts()).unwrap();
        let expect = [(37, 49), (85, 49), (421, 49)];
        for (v, (n, d)) in seq.values.iter().zip(expect) {
            assert_eq!(*v, BigRational::new(n.into(), d.into()));
        }
        assert!(seq.witness.is_some());
        assert_eq!(seq.stabilization, Stabilization::NotStabilized);
    }

    #[test]
    fn hensel_witness_examples() {
        let sys = quartic_system();
        let w = hensel_witness(&sys, 7, 1).unwrap();
        let w64: Vec<u64> = w.iter().map(|v| v.to_u64().unwrap()).collect();
        assert!(w64.iter().any(|&v| v != 0));
        let c = sys.compile();
        assert_eq!(rank_mod_p(&c.jacobian_mod(&w64, 7), 7), 2);
        let deep = hensel_witness(&sys, 7, 4).unwrap();
        let (f, g) = sys.eval(&deep).unwrap();
        let m = BigInt::from(7).pow(4);
        assert!((f % &m).is_zero() && (&g[0] % &m).is_zero());

        let bad = FormSystem::new(
            DiagonalForm::new(3, vec![1, 1]).unwrap(),
            vec![GeneralForm::from_terms(2, 2, &[(&[1, 1], 1)]).unwrap()],
            None,
        )
        .unwrap();
        assert!(hensel_witness(&bad, 2, 1).is_none());
    }

    #[test]
    fn multiplicativity() {
        let sys = line_system();
        for q1 in 2..=30u64 {
            for q2 in 2..=30u64 {
                if num_integer::Integer::gcd(&q1, &q2) != 1 || q1 * q2 > 60 {
                    continue;
                }
                let lhs = brute_mod(&sys, q1 * q2);
                assert_eq!(lhs, brute_mod(&sys, q1) * brute_mod(&sys, q2));
                assert_eq!(gamma_q(&sys, q1 * q2, &opts()).unwrap(), BigUint::from(lhs));
            }
        }
    }

    #[test]
    fn nonsingular_lift_count_identity() {
        // #{x mod p^h solving the system with x mod p nonsingular} = N_ns(p)·p^{(h−1)(s−ρ−1)}.
        let sys = quartic_system();
        let c = sys.compile();
        for (p, h) in [(3u64, 2u32), (5, 2)] {
            let q = p.pow(h);
            let ns = |x: &[u64], m: u64| {
                c.eqs.iter().all(|f| f.eval_mod(x, m) == 0) && {
                    let xm: Vec<u64> = x.iter().map(|v| v % p).collect();
                    rank_mod_p(&c.jacobian_mod(&xm, p), p) == 2
                }
            };
            let count = |m: u64| {
                let mut n = 0u64;
                let mut x = vec![0u64; 4];
                loop {
                    if ns(&x, m) {
                        n += 1;
                    }
                    let mut pos = 0;
                    while pos < 4 {
                        x[pos] += 1;
                        if x[pos] < m {
                            break;
                        }
                        x[pos] = 0;
                        pos += 1;
                    }
                    if pos == 4 {
                        return n;
                    }
                }
            };
            assert_eq!(count(q), count(p) * p.pow((h - 1) * 2));
        }
    }

    fn random_system() -> impl Strategy<Value = FormSystem> {
        (2usize..=5, 3u32..=4).prop_flat_map(|(s, k)| {
            let diag = proptest::collection::vec(prop_oneof![-3i64..=-1, 1i64..=3], s);
            let quad = proptest::collection::vec((0usize..s, 0usize..s, -2i64..=2), 1..4);
            (diag, quad).prop_filter_map("valid system", move |(diag, quad)| {
                let mut monos = std::collections::BTreeMap::new();
                for (i, j, c) in quad {
                    let mut e = vec![0u32; s];
                    e[i] += 1;
                    e[j] += 1;
                    monos.insert(e, c);
                }
                let g = GeneralForm::new(
                    s,
                    2,
                    monos.into_iter().map(|(exps, coef)| crate::forms::Monomial { exps, coef }).collect(),
                )
                .ok()?;
                FormSystem::new(DiagonalForm::new(k, diag).ok()?, vec![g], None).ok()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn mitm_matches_exhaustive(sys in random_system(), x in 0u64..=4) {
            let exh = count_box_exhaustive(&sys, x, &opts()).unwrap();
            if choose_split(&sys, 2 * x + 1).is_some() {
                let mitm = count_box(&sys, x, &CountOptions { method: Some(CountMethod::MeetInMiddle), ..opts() }).unwrap();
                prop_assert_eq!(mitm.n, exh.n);
            }
            prop_assert_eq!(exh.n % 2, 1);
        }

        #[test]
        fn lifting_matches_enumeration(sys in random_system(), p in prop_oneof![Just(2u64), Just(3), Just(5)]) {
            let e = if p == 2 { 3 } else { 2 };
            let q = p.pow(e);
            prop_assume!((q as f64).powi(sys.s() as i32) <= 2e6);
            let oracle = BigUint::from(brute_mod(&sys, q));
            let got = gamma_prime_power_via(&sys, p, e, GammaRoute::Lifting, &opts()).unwrap();
            prop_assert_eq!(got, oracle);
        }
    }
}
