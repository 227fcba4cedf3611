//! Exact integer forms: one diagonal form `F` of degree `k` and general forms
//! `G₁..G_ρ` of a common degree `d`, together with signatures, singular-locus
//! probes and the forward-difference calculus.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::arith::{mul_mod, pow_mod, rank_mod_p};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiagonalForm {
    degree: u32,
    coeffs: Vec<i64>,
}

impl DiagonalForm {
    pub fn new(degree: u32, coeffs: Vec<i64>) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidForm(format!("diagonal degree {degree} < 2")));
        }
        if coeffs.is_empty() {
            return Err(Error::InvalidForm("diagonal form needs s ≥ 1".into()));
        }
        if coeffs.iter().any(|&a| a == 0) {
            return Err(Error::InvalidForm("diagonal coefficients must be nonzero".into()));
        }
        Ok(DiagonalForm { degree, coeffs })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn nvars(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, x: &[BigInt]) -> BigInt {
        self.coeffs
            .iter()
            .zip(x)
            .map(|(&a, xi)| BigInt::from(a) * xi.pow(self.degree))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial {
    pub exps: Vec<u32>,
    pub coef: i64,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.exps.iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, _)| i)
    }
}

/// Homogeneous form stored as a sparse monomial list, sorted by exponent
/// vector in decreasing lexicographic order, zero coefficients dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneralForm {
    degree: u32,
    nvars: usize,
    monomials: Vec<Monomial>,
}

impl GeneralForm {
    pub fn new(nvars: usize, degree: u32, monomials: Vec<Monomial>) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidForm("general form degree must be positive".into()));
        }
        let mut seen = BTreeMap::new();
        for m in monomials {
            if m.exps.len() != nvars {
                return Err(Error::DimensionMismatch { expected: nvars, got: m.exps.len() });
            }
            if m.degree() != degree {
                return Err(Error::InvalidForm(format!(
                    "monomial {:?} has degree {} in a form of degree {degree}",
                    m.exps,
                    m.degree()
                )));
            }
            if seen.insert(m.exps.clone(), m.coef).is_some() {
                return Err(Error::InvalidForm(format!("duplicate exponent vector {:?}", m.exps)));
            }
        }
        let mut monomials: Vec<Monomial> = seen
            .into_iter()
            .filter(|(_, c)| *c != 0)
            .map(|(exps, coef)| Monomial { exps, coef })
            .collect();
        if monomials.is_empty() {
            return Err(Error::InvalidForm("general form has no nonzero coefficient".into()));
        }
        monomials.reverse();
        Ok(GeneralForm { degree, nvars, monomials })
    }

    /// Builds a form from `(exponents, coefficient)` pairs.
    pub fn from_terms(nvars: usize, degree: u32, terms: &[(&[u32], i64)]) -> Result<Self> {
        let monomials = terms
            .iter()
            .map(|(e, c)| Monomial { exps: e.to_vec(), coef: *c })
            .collect();
        GeneralForm::new(nvars, degree, monomials)
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn eval(&self, x: &[BigInt]) -> BigInt {
        self.monomials
            .iter()
            .map(|m| {
                let mut v = BigInt::from(m.coef);
                for (xi, &e) in x.iter().zip(&m.exps) {
                    if e > 0 {
                        v *= xi.pow(e);
                    }
                }
                v
            })
            .sum()
    }

    /// Integer matrix `2B` with `Q(x) = x·Bx`; requires degree 2.
    pub fn gram2(&self) -> Result<Vec<Vec<i64>>> {
        if self.degree != 2 {
            return Err(Error::InvalidForm(format!("Gram matrix needs degree 2, got {}", self.degree)));
        }
        let n = self.nvars;
        let mut m = vec![vec![0i64; n]; n];
        for mono in &self.monomials {
            let idx: Vec<usize> = mono.support().collect();
            match idx.as_slice() {
                [i] => m[*i][*i] = 2 * mono.coef,
                [i, j] => {
                    m[*i][*j] = mono.coef;
                    m[*j][*i] = mono.coef;
                }
                _ => unreachable!("degree-2 monomial has one or two variables"),
            }
        }
        Ok(m)
    }
}

/// The system `F = G₁ = … = G_ρ = 0` in `s` variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormSystem {
    diagonal: DiagonalForm,
    generals: Vec<GeneralForm>,
    singular_locus_dim: Option<usize>,
}

/// JSON shape of a system definition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub s: usize,
    pub k: u32,
    pub diagonal: Vec<i64>,
    pub forms: Vec<FormSpec>,
    #[serde(default)]
    pub singular_locus_dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormSpec {
    pub degree: u32,
    pub monomials: Vec<Monomial>,
}

impl FormSystem {
    pub fn new(diagonal: DiagonalForm, generals: Vec<GeneralForm>, singular_locus_dim: Option<usize>) -> Result<Self> {
        let s = diagonal.nvars();
        for g in &generals {
            if g.nvars() != s {
                return Err(Error::DimensionMismatch { expected: s, got: g.nvars() });
            }
        }
        if let Some(g0) = generals.first() {
            let d = g0.degree();
            if generals.iter().any(|g| g.degree() != d) {
                return Err(Error::InvalidForm("general forms must share one degree".into()));
            }
            if d >= diagonal.degree() {
                return Err(Error::InvalidForm(format!(
                    "need d < k, got d={d}, k={}",
                    diagonal.degree()
                )));
            }
        }
        if let Some(dim) = singular_locus_dim {
            if dim > s {
                return Err(Error::InvalidForm(format!("singular locus dimension {dim} exceeds s={s}")));
            }
        }
        Ok(FormSystem { diagonal, generals, singular_locus_dim })
    }

    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        if spec.diagonal.len() != spec.s {
            return Err(Error::DimensionMismatch { expected: spec.s, got: spec.diagonal.len() });
        }
        let diagonal = DiagonalForm::new(spec.k, spec.diagonal.clone())?;
        let generals = spec
            .forms
            .iter()
            .map(|f| GeneralForm::new(spec.s, f.degree, f.monomials.clone()))
            .collect::<Result<Vec<_>>>()?;
        FormSystem::new(diagonal, generals, spec.singular_locus_dim)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SystemSpec = serde_json::from_str(text)?;
        FormSystem::from_spec(&spec)
    }

    pub fn to_spec(&self) -> SystemSpec {
        SystemSpec {
            s: self.s(),
            k: self.k(),
            diagonal: self.diagonal.coeffs.clone(),
            forms: self
                .generals
                .iter()
                .map(|g| FormSpec { degree: g.degree, monomials: g.monomials.clone() })
                .collect(),
            singular_locus_dim: self.singular_locus_dim,
        }
    }

    /// Canonical compact JSON; equal systems give byte-identical text.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.to_spec()).expect("system spec serialises")
    }

    pub fn s(&self) -> usize {
        self.diagonal.nvars()
    }

    pub fn k(&self) -> u32 {
        self.diagonal.degree()
    }

    pub fn rho(&self) -> usize {
        self.generals.len()
    }

    /// Common degree of the general forms, `None` when `ρ = 0`.
    pub fn d(&self) -> Option<u32> {
        self.generals.first().map(|g| g.degree())
    }

    pub fn diagonal(&self) -> &DiagonalForm {
        &self.diagonal
    }

    pub fn generals(&self) -> &[GeneralForm] {
        &self.generals
    }

    pub fn declared_singular_locus_dim(&self) -> Option<usize> {
        self.singular_locus_dim
    }

    /// `s − k − ρd`, the exponent of `X` in the expected main term.
    pub fn expected_exponent(&self) -> i64 {
        self.s() as i64 - self.k() as i64 - self.rho() as i64 * self.d().unwrap_or(0) as i64
    }

    pub fn eval(&self, x: &[BigInt]) -> Result<(BigInt, Vec<BigInt>)> {
        if x.len() != self.s() {
            return Err(Error::DimensionMismatch { expected: self.s(), got: x.len() });
        }
        Ok((self.diagonal.eval(x), self.generals.iter().map(|g| g.eval(x)).collect()))
    }

    pub fn eval_i64(&self, x: &[i64]) -> Result<(BigInt, Vec<BigInt>)> {
        let big: Vec<BigInt> = x.iter().map(|&v| BigInt::from(v)).collect();
        self.eval(&big)
    }

    pub fn is_solution(&self, x: &[i64]) -> bool {
        matches!(self.eval_i64(x), Ok((f, g)) if f.is_zero() && g.iter().all(Zero::is_zero))
    }

    /// Connected components of the variable-interaction graph (variables
    /// sharing a general monomial are adjacent), each sorted, ordered by
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let s = self.s();
        let mut parent: Vec<usize> = (0..s).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for g in &self.generals {
            for m in g.monomials() {
                let sup: Vec<usize> = m.support().collect();
                for w in sup.windows(2) {
                    let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..s {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }

    /// Supports of all general monomials involving at least two variables.
    pub fn interaction_sets(&self) -> Vec<Vec<usize>> {
        self.generals
            .iter()
            .flat_map(|g| g.monomials().iter())
            .map(|m| m.support().collect::<Vec<_>>())
            .filter(|v| v.len() > 1)
            .collect()
    }

    pub fn compile(&self) -> CompiledSystem {
        let all: Vec<usize> = (0..self.s()).collect();
        self.compile_vars(&all)
    }

    /// Restriction to the listed variables, renumbered `0..vars.len()`; terms
    /// touching any other variable are dropped.
    pub fn compile_vars(&self, vars: &[usize]) -> CompiledSystem {
        let local = |i: usize| vars.iter().position(|&v| v == i);
        let mut eqs = Vec::with_capacity(self.rho() + 1);
        let mut f_terms = Vec::new();
        for (i, &a) in self.diagonal.coeffs.iter().enumerate() {
            if let Some(li) = local(i) {
                f_terms.push(Term { coef: a, vars: SmallVec::from_slice(&[(li, self.k())]) });
            }
        }
        eqs.push(CompiledForm { degree: self.k(), terms: f_terms });
        for g in &self.generals {
            let mut terms = Vec::new();
            'mono: for m in g.monomials() {
                let mut tv = SmallVec::new();
                for (i, &e) in m.exps.iter().enumerate() {
                    if e > 0 {
                        match local(i) {
                            Some(li) => tv.push((li, e)),
                            None => continue 'mono,
                        }
                    }
                }
                terms.push(Term { coef: m.coef, vars: tv });
            }
            eqs.push(CompiledForm { degree: g.degree(), terms });
        }
        CompiledSystem { nvars: vars.len(), eqs }
    }
}

/// `F(x)` and every `Gᵢ(x)` in arbitrary precision.
pub fn eval_system(sys: &FormSystem, x: &[BigInt]) -> Result<(BigInt, Vec<BigInt>)> {
    sys.eval(x)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub coef: i64,
    pub vars: SmallVec<[(usize, u32); 4]>,
}

/// One equation as a flat term list over local variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompiledForm {
    pub degree: u32,
    pub terms: Vec<Term>,
}

impl CompiledForm {
    pub fn eval_big(&self, x: &[BigInt]) -> BigInt {
        let mut acc = BigInt::zero();
        for t in &self.terms {
            let mut v = BigInt::from(t.coef);
            for &(i, e) in &t.vars {
                v *= x[i].pow(e);
            }
            acc += v;
        }
        acc
    }

    pub fn eval_mod(&self, x: &[u64], m: u64) -> u64 {
        let mut acc = 0u64;
        for t in &self.terms {
            let mut v = (t.coef as i128).rem_euclid(m as i128) as u64;
            for &(i, e) in &t.vars {
                v = mul_mod(v, pow_mod(x[i], e as u64, m), m);
            }
            acc = (acc + v) % m;
        }
        acc
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef as f64 * t.vars.iter().map(|&(i, e)| x[i].powi(e as i32)).product::<f64>())
            .sum()
    }

    pub fn grad_mod(&self, x: &[u64], nvars: usize, p: u64) -> Vec<u64> {
        let mut g = vec![0u64; nvars];
        for t in &self.terms {
            for (j, &(i, e)) in t.vars.iter().enumerate() {
                let mut v = (t.coef as i128 * e as i128).rem_euclid(p as i128) as u64;
                v = mul_mod(v, pow_mod(x[i], (e - 1) as u64, p), p);
                for (j2, &(i2, e2)) in t.vars.iter().enumerate() {
                    if j2 != j {
                        v = mul_mod(v, pow_mod(x[i2], e2 as u64, p), p);
                    }
                }
                g[i] = (g[i] + v) % p;
            }
        }
        g
    }

    pub fn grad_f64(&self, x: &[f64], nvars: usize) -> Vec<f64> {
        let mut g = vec![0.0; nvars];
        for t in &self.terms {
            for (j, &(i, e)) in t.vars.iter().enumerate() {
                let mut v = t.coef as f64 * e as f64 * x[i].powi(e as i32 - 1);
                for (j2, &(i2, e2)) in t.vars.iter().enumerate() {
                    if j2 != j {
                        v *= x[i2].powi(e2 as i32);
                    }
                }
                g[i] += v;
            }
        }
        g
    }

    /// `Σ|coef|·r^degree`, a bound for `|form|` on `[−r, r]^n`.
    pub fn sup_on_cube(&self, r: f64) -> f64 {
        self.terms.iter().map(|t| t.coef.unsigned_abs() as f64).sum::<f64>() * r.powi(self.degree as i32)
    }

    /// Bound for `|∂form/∂x_var|` on `[−r, r]^n`.
    pub fn partial_sup(&self, var: usize, r: f64) -> f64 {
        self.terms
            .iter()
            .filter_map(|t| t.vars.iter().find(|&&(i, _)| i == var).map(|&(_, e)| (t.coef, e)))
            .map(|(c, e)| c.unsigned_abs() as f64 * e as f64)
            .sum::<f64>()
            * r.powi(self.degree as i32 - 1)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// `F` followed by `G₁..G_ρ`, possibly restricted to a variable subset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompiledSystem {
    pub nvars: usize,
    pub eqs: Vec<CompiledForm>,
}

impl CompiledSystem {
    /// Jacobian rows (one per equation) mod `p`.
    pub fn jacobian_mod(&self, x: &[u64], p: u64) -> Vec<Vec<u64>> {
        self.eqs.iter().map(|f| f.grad_mod(x, self.nvars, p)).collect()
    }

    pub fn jacobian_f64(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.eqs.iter().map(|f| f.grad_f64(x, self.nvars)).collect()
    }

    /// Real phase `γF(x) + Σδᵢ Gᵢ(x)` with `weights = (γ, δ₁, …)`.
    pub fn phase_f64(&self, x: &[f64], weights: &[f64]) -> f64 {
        self.eqs.iter().zip(weights).map(|(f, w)| w * f.eval_f64(x)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadraticSignature {
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_zero: usize,
    pub nonsingular: bool,
}

/// Signature of the quadratic form by congruence diagonalisation of the exact
/// matrix `2B` over the rationals.
pub fn quadratic_signature(q: &GeneralForm) -> Result<QuadraticSignature> {
    let g = q.gram2()?;
    Ok(signature_of_matrix(&g))
}

pub fn signature_of_matrix(g: &[Vec<i64>]) -> QuadraticSignature {
    let n = g.len();
    let mut m: Vec<Vec<BigRational>> = g
        .iter()
        .map(|row| row.iter().map(|&v| BigRational::from_integer(v.into())).collect())
        .collect();
    let mut alive: Vec<usize> = (0..n).collect();
    let (mut np, mut nm) = (0, 0);
    while !alive.is_empty() {
        let pivot = alive.iter().copied().find(|&i| !m[i][i].is_zero());
        let pivot = match pivot {
            Some(i) => i,
            None => {
                let pair = alive
                    .iter()
                    .flat_map(|&i| alive.iter().map(move |&j| (i, j)))
                    .find(|&(i, j)| i != j && !m[i][j].is_zero());
                let Some((i, j)) = pair else { break };
                // Congruence by e_i ← e_i + e_j makes the (i,i) entry 2·m[i][j].
                for r in 0..n {
                    let v = m[r][j].clone();
                    m[r][i] += v;
                }
                for c in 0..n {
                    let v = m[j][c].clone();
                    m[i][c] += v;
                }
                i
            }
        };
        let piv = m[pivot][pivot].clone();
        if piv.is_positive() {
            np += 1;
        } else {
            nm += 1;
        }
        alive.retain(|&i| i != pivot);
        for &r in &alive {
            let f = &m[r][pivot] / &piv;
            if f.is_zero() {
                continue;
            }
            for &c in &alive {
                let v = &f * &m[pivot][c];
                m[r][c] -= v;
            }
        }
    }
    let nz = n - np - nm;
    QuadraticSignature { n_plus: np, n_minus: nm, n_zero: nz, nonsingular: nz == 0 }
}

/// Outcome of [`singular_locus_probe`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum LocusVerdict {
    /// `ρ = 0`: no constraint forms.
    Vacuous,
    Consistent,
    /// A nonzero point where the Jacobian of `G` has rank `≤ ρ−1`. Integer
    /// coordinates on the exact route, residues mod `p` otherwise.
    Counterexample(Vec<i64>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LocusCertificate {
    pub verdict: LocusVerdict,
    pub declared: Option<usize>,
    /// Upper-confidence estimate of `dim 𝒱*(G)`.
    pub dim_estimate: usize,
    pub exact: bool,
    pub trials: usize,
    pub hits: usize,
    pub p: u64,
}

/// Probes `dim 𝒱*(G)`, the locus where the Jacobian of `(G₁..G_ρ)` has rank
/// `≤ ρ−1`. For a single quadratic the answer is exact (`s − rank 2B`).
/// Otherwise random points of random linear subspaces of dimension `s − D`
/// mod `p` are tested, `D` being the declared dimension (or `ρ−1`); such a
/// subspace meets a cone of dimension `≤ D` only at the origin, so a nonzero
/// hit is evidence that the declared dimension is too small.
pub fn singular_locus_probe(sys: &FormSystem, trials: usize, p: u64, seed: u64) -> LocusCertificate {
    let rho = sys.rho();
    let s = sys.s();
    let declared = sys.declared_singular_locus_dim();
    if rho == 0 {
        return LocusCertificate {
            verdict: LocusVerdict::Vacuous,
            declared,
            dim_estimate: 0,
            exact: true,
            trials: 0,
            hits: 0,
            p,
        };
    }
    if rho == 1 && sys.d() == Some(2) {
        let g = sys.generals()[0].gram2().expect("degree 2");
        let sig = signature_of_matrix(&g);
        let dim = sig.n_zero;
        let verdict = if dim > declared.unwrap_or(0) {
            LocusVerdict::Counterexample(integer_kernel_vector(&g).expect("singular matrix has kernel"))
        } else {
            LocusVerdict::Consistent
        };
        return LocusCertificate { verdict, declared, dim_estimate: dim, exact: true, trials: 0, hits: 0, p };
    }
    let target = declared.unwrap_or(rho - 1);
    let m = s.saturating_sub(target).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full = sys.compile();
    let g_only = CompiledSystem { nvars: s, eqs: full.eqs[1..].to_vec() };
    let mut hits = 0;
    let mut first = None;
    for _ in 0..trials {
        let basis: Vec<Vec<u64>> = (0..m).map(|_| (0..s).map(|_| rng.gen_range(0..p)).collect()).collect();
        let coeffs: Vec<u64> = (0..m).map(|_| rng.gen_range(0..p)).collect();
        let x: Vec<u64> = (0..s)
            .map(|j| basis.iter().zip(&coeffs).fold(0, |acc, (b, &c)| (acc + mul_mod(b[j], c, p)) % p))
            .collect();
        if x.iter().all(|&v| v == 0) {
            continue;
        }
        if rank_mod_p(&g_only.jacobian_mod(&x, p), p) < rho {
            hits += 1;
            if first.is_none() {
                first = Some(x.iter().map(|&v| v as i64).collect());
            }
        }
    }
    let (verdict, dim_estimate) = match first {
        Some(pt) => (LocusVerdict::Counterexample(pt), target + 1),
        None => (LocusVerdict::Consistent, target),
    };
    LocusCertificate { verdict, declared, dim_estimate, exact: false, trials, hits, p }
}

// Nonzero integer vector in the kernel of a singular integer matrix.
fn integer_kernel_vector(g: &[Vec<i64>]) -> Option<Vec<i64>> {
    let n = g.len();
    let mut m: Vec<Vec<BigRational>> = g
        .iter()
        .map(|row| row.iter().map(|&v| BigRational::from_integer(v.into())).collect())
        .collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        let Some(sel) = (row..n).find(|&r| !m[r][col].is_zero()) else { continue };
        m.swap(row, sel);
        let inv = m[row][col].recip();
        for v in m[row].iter_mut() {
            *v *= &inv;
        }
        for r in 0..n {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..n {
                    let v = &f * &m[row][c];
                    m[r][c] -= v;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let free = (0..n).find(|c| !pivots.contains(c))?;
    let mut v = vec![BigRational::zero(); n];
    v[free] = BigRational::one();
    for (r, &c) in pivots.iter().enumerate() {
        v[c] = -m[r][free].clone();
    }
    let lcm = v.iter().fold(BigInt::one(), |acc, x| num_integer::lcm(acc, x.denom().clone()));
    Some(v.iter().map(|x| (x * BigRational::from_integer(lcm.clone())).to_integer().to_i64().unwrap()).collect())
}

/// Sparse multivariate polynomial with exact integer coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MultiPoly {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, BigInt>,
}

impl MultiPoly {
    pub fn zero(nvars: usize) -> Self {
        MultiPoly { nvars, terms: BTreeMap::new() }
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Vec<u32>, BigInt)>) -> Self {
        let mut p = MultiPoly::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent vector length");
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, exps: Vec<u32>, c: BigInt) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(exps).or_insert_with(BigInt::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &BigInt)> {
        self.terms.iter()
    }

    pub fn eval(&self, x: &[BigInt]) -> BigInt {
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut v = c.clone();
                for (xi, &ei) in x.iter().zip(e) {
                    v *= xi.pow(ei);
                }
                v
            })
            .sum()
    }

    /// `H(x + y)` expanded exactly.
    pub fn shift(&self, y: &[BigInt]) -> MultiPoly {
        assert_eq!(y.len(), self.nvars, "shift vector length");
        let mut out = MultiPoly::zero(self.nvars);
        for (e, c) in &self.terms {
            // Expand Π_j (x_j + y_j)^{e_j} one variable at a time.
            let mut partial: Vec<(Vec<u32>, BigInt)> = vec![(vec![0; self.nvars], c.clone())];
            for (j, &ej) in e.iter().enumerate() {
                if ej == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (ej as usize + 1));
                for (pe, pc) in &partial {
                    for t in 0..=ej {
                        let coef = pc * binomial(ej, t) * y[j].pow(ej - t);
                        if coef.is_zero() {
                            continue;
                        }
                        let mut ne = pe.clone();
                        ne[j] = t;
                        next.push((ne, coef));
                    }
                }
                partial = next;
            }
            for (ne, nc) in partial {
                out.add_term(ne, nc);
            }
        }
        out
    }

    pub fn sub(&self, other: &MultiPoly) -> MultiPoly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }
}

impl From<&GeneralForm> for MultiPoly {
    fn from(g: &GeneralForm) -> Self {
        MultiPoly::from_terms(g.nvars(), g.monomials().iter().map(|m| (m.exps.clone(), BigInt::from(m.coef))))
    }
}

impl From<&DiagonalForm> for MultiPoly {
    fn from(f: &DiagonalForm) -> Self {
        let n = f.nvars();
        MultiPoly::from_terms(
            n,
            f.coeffs().iter().enumerate().map(|(i, &a)| {
                let mut e = vec![0; n];
                e[i] = f.degree();
                (e, BigInt::from(a))
            }),
        )
    }
}

/// `∂_y H(x) = H(x + y) − H(x)`.
pub fn forward_difference(h: &MultiPoly, y: &[BigInt]) -> MultiPoly {
    h.shift(y).sub(h)
}

pub fn binomial(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

/// Dense univariate polynomial, coefficients low to high, trailing zeros
/// trimmed (the zero polynomial has no coefficients).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UnivariatePoly {
    coeffs: Vec<BigInt>,
}

impl UnivariatePoly {
    pub fn new(mut coeffs: Vec<BigInt>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        UnivariatePoly { coeffs }
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        UnivariatePoly::new(coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    /// `c·x^k`.
    pub fn monomial(k: u32, c: i64) -> Self {
        let mut v = vec![BigInt::zero(); k as usize + 1];
        v[k as usize] = BigInt::from(c);
        UnivariatePoly::new(v)
    }

    pub fn zero() -> Self {
        UnivariatePoly { coeffs: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    pub fn leading(&self) -> Option<&BigInt> {
        self.coeffs.last()
    }

    pub fn eval(&self, x: &BigInt) -> BigInt {
        self.coeffs.iter().rev().fold(BigInt::zero(), |acc, c| acc * x + c)
    }

    /// Checked evaluation in `i128`.
    pub fn eval_i128(&self, x: i128) -> Option<i128> {
        let mut acc: i128 = 0;
        for c in self.coeffs.iter().rev() {
            acc = acc.checked_mul(x)?.checked_add(c.to_i128()?)?;
        }
        Some(acc)
    }

    /// Coefficients as `i128`, `None` if any does not fit.
    pub fn coeffs_i128(&self) -> Option<Vec<i128>> {
        self.coeffs.iter().map(|c| c.to_i128()).collect()
    }

    /// `p(x + h) − p(x)`.
    pub fn forward_difference(&self, h: i64) -> UnivariatePoly {
        let n = self.coeffs.len();
        let mut out = vec![BigInt::zero(); n];
        let h = BigInt::from(h);
        for (i, c) in self.coeffs.iter().enumerate() {
            for t in 0..i {
                out[t] += c * binomial(i as u32, t as u32) * h.pow((i - t) as u32);
            }
        }
        UnivariatePoly::new(out)
    }

    /// Exact division of every coefficient; `None` when inexact.
    pub fn div_exact(&self, d: &BigInt) -> Option<UnivariatePoly> {
        let mut out = Vec::with_capacity(self.coeffs.len());
        for c in &self.coeffs {
            out.push(crate::arith::exact_div_big(c, d)?);
        }
        Some(UnivariatePoly::new(out))
    }
}

/// `φ_h(x) = ∂_{h₁}⋯∂_{h_d} x^k` written as `(h₁⋯h_d)·p_h(x)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiagonalDifference {
    pub scalar: BigInt,
    pub poly: UnivariatePoly,
}

impl DiagonalDifference {
    /// `φ_h = scalar · p_h`.
    pub fn phi(&self) -> UnivariatePoly {
        UnivariatePoly::new(self.poly.coeffs().iter().map(|c| c * &self.scalar).collect())
    }
}

/// Differences `x^k` along each `hᵢ` and factors out `h₁⋯h_d`. Any zero step
/// yields the zero factorisation.
pub fn diagonal_difference(k: u32, h: &[i64]) -> Result<DiagonalDifference> {
    if h.len() as u32 >= k {
        return Err(Error::invalid(format!("need d < k, got d={}, k={k}", h.len())));
    }
    if h.iter().any(|&v| v == 0) {
        return Ok(DiagonalDifference { scalar: BigInt::zero(), poly: UnivariatePoly::zero() });
    }
    let mut phi = UnivariatePoly::monomial(k, 1);
    for &hi in h {
        phi = phi.forward_difference(hi);
    }
    let scalar: BigInt = h.iter().map(|&v| BigInt::from(v)).product();
    let poly = phi.div_exact(&scalar).expect("each difference step carries a factor hᵢ");
    Ok(DiagonalDifference { scalar, poly })
}
