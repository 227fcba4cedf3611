//! Dirichlet approximation, arc membership, and the parameter algebra tying
//! `θ`, `η`, `ω` together.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::bounds::{s0, sigma0};
use crate::expsums::ArcPoint;
use crate::{Error, Result};

/// Distance to the nearest integer.
pub fn dist_to_int(x: f64) -> f64 {
    (x - x.round()).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RationalApprox {
    pub a: i64,
    pub q: u64,
    /// `|α − a/q|`.
    pub error: f64,
}

/// Deepest continued-fraction convergent `a/q` of `α` with `q ≤ bound`; it
/// satisfies `|αq − a| < 1/bound`.
pub fn dirichlet_approx(alpha: f64, bound: f64) -> Result<RationalApprox> {
    if !(bound >= 1.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("dirichlet_approx needs bound ≥ 1 and finite α, got {bound}, {alpha}")));
    }
    let (mut p_prev, mut q_prev): (i128, i128) = (1, 0);
    let a0 = alpha.floor();
    let (mut p, mut q): (i128, i128) = (a0 as i128, 1);
    let mut rem = alpha - a0;
    loop {
        if rem.abs() < 1e-15 {
            break;
        }
        let x = 1.0 / rem;
        let an = x.floor();
        if !an.is_finite() || an > 1e18 {
            break;
        }
        let an_i = an as i128;
        let (p_next, q_next) = (an_i * p + p_prev, an_i * q + q_prev);
        if q_next as f64 > bound {
            break;
        }
        p_prev = p;
        q_prev = q;
        p = p_next;
        q = q_next;
        rem = x - an;
    }
    let (a, q) = (p as i64, q as u64);
    Ok(RationalApprox { a, q, error: (alpha - a as f64 / q as f64).abs() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MajorArcMembership {
    pub inside: bool,
    /// Smallest `q ≤ Q` with `‖αq‖ ≤ Q X^{−j}`.
    pub witness: Option<u64>,
}

/// Membership of `α` in `𝔐_j(Q)`, scanning `q ≤ Q`.
pub fn in_major_mj(alpha: f64, x: f64, j: u32, big_q: f64) -> Result<MajorArcMembership> {
    if big_q < 1.0 || big_q > x.powi(j as i32) * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("need 1 ≤ Q ≤ X^j, got Q={big_q}, X={x}, j={j}")));
    }
    let tol = big_q * x.powi(-(j as i32));
    let witness = (1..=big_q.floor() as u64).find(|&q| dist_to_int(alpha * q as f64) <= tol);
    Ok(MajorArcMembership { inside: witness.is_some(), witness })
}

/// Farey fractions `a/q` in `[0, 1)` with `q ≤ n`, increasing.
pub fn farey(n: u64) -> Vec<(u64, u64)> {
    let mut out = vec![(0, 1)];
    if n == 0 {
        return Vec::new();
    }
    let (mut a, mut b, mut c, mut d) = (0u64, 1u64, 1u64, n);
    while c < d {
        out.push((c, d));
        let k = (n + b) / d;
        let (nc, nd) = (k * c - a, k * d - b);
        a = c;
        b = d;
        c = nc;
        d = nd;
    }
    out
}

/// Monte Carlo measure of `𝔐_j(Q)` in `[0, 1)`.
pub fn major_arc_measure(x: f64, j: u32, big_q: f64, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        if in_major_mj(rng.gen::<f64>(), x, j, big_q)?.inside {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples as f64)
}

fn ser_rat<S: Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// The tuple `(s, t, t₀, σ, Δ)` with the system shape and `κ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CentralParams {
    pub s: u64,
    #[serde(serialize_with = "ser_rat")]
    pub t: BigRational,
    pub t0: u64,
    #[serde(serialize_with = "ser_rat")]
    pub sigma: BigRational,
    #[serde(serialize_with = "ser_rat")]
    pub delta: BigRational,
    pub rho: u32,
    pub d: u32,
    pub k: u32,
    #[serde(serialize_with = "ser_rat")]
    pub kappa: BigRational,
}

impl CentralParams {
    /// `κ = (s − dim𝒱* − 1)/2^{d−1} − margin`.
    pub fn default_kappa(s: u64, d: u32, dim_v: u64, margin: &BigRational) -> BigRational {
        let num = BigInt::from(s as i64 - dim_v as i64 - 1);
        BigRational::new(num, BigInt::from(1u64 << (d - 1))) - margin
    }

    /// Instantiation with `Δ = d`, `σ = σ₀(k−d)`, `t₀ = s₀(k−d)`, `s = 2^d t`.
    pub fn lemma_shifted(d: u32, k: u32, rho: u32, s: u64, dim_v: u64) -> Result<Self> {
        if k <= d || d < 2 {
            return Err(Error::invalid("need k > d ≥ 2"));
        }
        Ok(CentralParams {
            s,
            t: BigRational::new(BigInt::from(s), BigInt::from(1u64 << d)),
            t0: s0(k - d)?,
            sigma: BigRational::from_integer(BigInt::from(sigma0(k - d)?)),
            delta: BigRational::from_integer(BigInt::from(d)),
            rho,
            d,
            k,
            kappa: Self::default_kappa(s, d, dim_v, &BigRational::zero()),
        })
    }

    /// Instantiation with `Δ = 0`, `σ = σ₀(k)`, `t₀ = s₀(k)`, `s = 2^{d+1} n t`.
    pub fn lemma_nary(d: u32, k: u32, rho: u32, n: u32, s: u64, dim_v: u64) -> Result<Self> {
        if k <= d || d < 2 || n < 1 {
            return Err(Error::invalid("need k > d ≥ 2 and n ≥ 1"));
        }
        Ok(CentralParams {
            s,
            t: BigRational::new(BigInt::from(s), BigInt::from((1u64 << (d + 1)) * n as u64)),
            t0: s0(k)?,
            sigma: BigRational::from_integer(BigInt::from(sigma0(k)?)),
            delta: BigRational::zero(),
            rho,
            d,
            k,
            kappa: Self::default_kappa(s, d, dim_v, &BigRational::zero()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Slack {
    pub condition: &'static str,
    /// Positive exactly when the condition holds.
    #[serde(serialize_with = "ser_rat")]
    pub slack: BigRational,
    pub slack_f64: f64,
    pub satisfied: bool,
}

impl Slack {
    fn new(condition: &'static str, slack: BigRational) -> Self {
        let satisfied = slack.is_positive();
        Slack { condition, slack_f64: rat_f64(&slack), slack, satisfied }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prop31Report {
    /// All three main conditions hold.
    pub feasible: bool,
    /// `t > 2t₀ + (Δ + ρd)σ`, then the two fraction conditions.
    pub main: [Slack; 3],
    /// `t > 2t₀`, required by both instantiation lemmas.
    pub lemma_range: Slack,
    /// `s − dim𝒱* > 2^{d−1}κ`, then the two `κ`-fraction conditions.
    pub kappa: [Slack; 3],
    pub kappa_feasible: bool,
}

/// Evaluates the three feasibility conditions and the `κ` conditions exactly.
pub fn check_prop31(cp: &CentralParams, dim_v: u64) -> Prop31Report {
    let one = BigRational::one();
    let int = |v: i64| BigRational::from_integer(BigInt::from(v));
    let (rho, d) = (cp.rho as i64, cp.d as i64);
    let sv = int(cp.s as i64 - dim_v as i64);
    let half = int(1i64 << (cp.d - 1));
    let t0 = int(cp.t0 as i64);
    let frac = |num: BigRational, den: &BigRational| {
        if den.is_positive() {
            Some(num / den)
        } else {
            None
        }
    };
    let huge = || int(i64::MAX);
    let c31 = &cp.t - (int(2) * &t0 + (&cp.delta + int(rho * d)) * &cp.sigma);
    let lhs32 = frac(&half * int(rho * d), &sv).unwrap_or_else(huge)
        + frac(int(rho * d + 2) * &cp.sigma, &cp.t).unwrap_or_else(huge);
    let lhs33 = frac(&half * int(rho * (rho + 1) * (d - 1)), &sv).unwrap_or_else(huge)
        + frac(int(rho + 2) * &cp.sigma, &cp.t).unwrap_or_else(huge);
    let main = [
        Slack::new("t > 2t0 + (Delta + rho d) sigma", c31),
        Slack::new("2^{d-1} rho d/(s - dimV) + (rho d + 2) sigma/t < 1", &one - lhs32),
        Slack::new("2^{d-1} rho (rho+1)(d-1)/(s - dimV) + (rho + 2) sigma/t < 1", &one - lhs33),
    ];
    let lemma_range = Slack::new("t > 2t0", &cp.t - int(2) * &t0);
    let k38 = &sv - &half * &cp.kappa;
    let lhs311 = frac(int(rho * d), &cp.kappa).unwrap_or_else(huge)
        + frac(int(rho * d + 2) * &cp.sigma, &cp.t).unwrap_or_else(huge);
    let lhs312 = frac(int(rho * (rho + 1) * (d - 1)), &cp.kappa).unwrap_or_else(huge)
        + frac(int(rho + 2) * &cp.sigma, &cp.t).unwrap_or_else(huge);
    let kappa = [
        Slack::new("s - dimV > 2^{d-1} kappa", k38),
        Slack::new("rho d/kappa + (rho d + 2) sigma/t < 1", &one - lhs311),
        Slack::new("rho (rho+1)(d-1)/kappa + (rho + 2) sigma/t < 1", &one - lhs312),
    ];
    Prop31Report {
        feasible: main.iter().all(|c| c.satisfied),
        kappa_feasible: kappa.iter().all(|c| c.satisfied),
        main,
        lemma_range,
        kappa,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Instantiation {
    /// `Δ = d`, `σ = σ₀(k−d)`, `s = 2^d t`.
    Shifted,
    /// `Δ = 0`, `σ = σ₀(k)`, `s = 2^{d+1} n t`.
    Nary { n: u32 },
}

/// Smallest `s` for which the instantiation satisfies all three conditions
/// and its own range `t > 2t₀`.
pub fn min_feasible_s(d: u32, k: u32, rho: u32, dim_v: u64, inst: Instantiation) -> Result<u64> {
    for s in dim_v + 1..=10_000_000 {
        let cp = match inst {
            Instantiation::Shifted => CentralParams::lemma_shifted(d, k, rho, s, dim_v)?,
            Instantiation::Nary { n } => CentralParams::lemma_nary(d, k, rho, n, s, dim_v)?,
        };
        let r = check_prop31(&cp, dim_v);
        if r.feasible && r.lemma_range.satisfied {
            return Ok(s);
        }
    }
    Err(Error::invalid("no feasible s below 10^7"))
}

/// `θ`, `η`, `ω` with the data needed to move between them:
/// `κη = (t/σ)θ` and `ω = ρ(d−1)η + θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ArcParams {
    pub theta: f64,
    pub eta: f64,
    pub omega: f64,
    pub kappa: f64,
    /// `t/σ`.
    pub t_over_sigma: f64,
    pub rho: u32,
    pub d: u32,
    pub k: u32,
}

impl ArcParams {
    fn shape(cp: &CentralParams) -> (f64, f64) {
        (rat_f64(&cp.kappa), rat_f64(&(&cp.t / &cp.sigma)))
    }

    fn build(cp: &CentralParams, theta: f64, eta: f64, omega: f64) -> Self {
        let (kappa, t_over_sigma) = Self::shape(cp);
        ArcParams { theta, eta, omega, kappa, t_over_sigma, rho: cp.rho, d: cp.d, k: cp.k }
    }

    fn rd1(&self) -> f64 {
        (self.rho * (self.d - 1)) as f64
    }

    pub fn from_theta(cp: &CentralParams, theta: f64) -> Self {
        let (kappa, ts) = Self::shape(cp);
        let eta = ts * theta / kappa;
        let omega = (cp.rho * (cp.d - 1)) as f64 * eta + theta;
        Self::build(cp, theta, eta, omega)
    }

    pub fn from_eta(cp: &CentralParams, eta: f64) -> Self {
        let (kappa, ts) = Self::shape(cp);
        let theta = kappa * eta / ts;
        let omega = (cp.rho * (cp.d - 1)) as f64 * eta + theta;
        Self::build(cp, theta, eta, omega)
    }

    /// Inverts `κη = (ρ(d−1)/κ + σ/t)^{−1} ω`.
    pub fn from_omega(cp: &CentralParams, omega: f64) -> Self {
        let (kappa, ts) = Self::shape(cp);
        let eta = omega / (kappa * ((cp.rho * (cp.d - 1)) as f64 / kappa + 1.0 / ts));
        let theta = kappa * eta / ts;
        Self::build(cp, theta, eta, omega)
    }

    /// Residuals of the two defining relations.
    pub fn residuals(&self) -> (f64, f64) {
        (
            (self.kappa * self.eta - self.t_over_sigma * self.theta).abs(),
            (self.omega - self.rd1() * self.eta - self.theta).abs(),
        )
    }

    pub fn is_consistent(&self) -> bool {
        let (a, b) = self.residuals();
        let scale = 1.0 + self.theta.abs() + self.eta.abs() + self.omega.abs();
        a <= 1e-12 * scale && b <= 1e-12 * scale && self.kappa > 0.0 && self.t_over_sigma > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NWitness {
    pub q: u64,
    pub r: u64,
    pub a: i64,
    pub b: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PWitness {
    pub q: u64,
    pub a: i64,
    pub b: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArcClassification {
    pub in_n: bool,
    pub n_witness: Option<NWitness>,
    pub in_p: bool,
    pub p_witness: Option<PWitness>,
    pub c: f64,
    pub c_prime: f64,
}

/// `c′`: the least power of two with `c′ ≥ max(c, c²)`. A witness
/// `(q, r, a, b)` of `𝔑(η)` gives the witness `(qr, ar, b)` of `𝔓(ω)` since
/// `qr ≤ c² X^ω`, `|α − ar/qr| ≤ c X^{−k+θ}` and `|βᵢ − bᵢ/qr| ≤ c X^{−d+ω}`.
pub fn c_prime(c: f64) -> f64 {
    let need = c.max(c * c);
    let mut p = 1.0;
    while p < need {
        p *= 2.0;
    }
    while p / 2.0 >= need {
        p /= 2.0;
    }
    p
}

const SEARCH_LIMIT: f64 = 1e8;
const REL: f64 = 1e-12;

/// Classifies `(α, β)` against `𝔑(η)` and `𝔓(ω)` at scale `X`.
pub fn classify_n(pt: &ArcPoint, x: f64, params: &ArcParams, c: f64) -> Result<ArcClassification> {
    if !params.is_consistent() {
        return Err(Error::invalid("arc parameters violate their defining relations"));
    }
    if pt.beta.len() != params.rho as usize {
        return Err(Error::DimensionMismatch { expected: params.rho as usize, got: pt.beta.len() });
    }
    let (k, d) = (params.k as f64, params.d as f64);
    let q_max = c * x.powf(params.theta) * (1.0 + REL);
    let r_max = c * x.powf(params.rd1() * params.eta) * (1.0 + REL);
    if q_max * r_max.max(1.0) > SEARCH_LIMIT {
        return Err(Error::BudgetExceeded { needed: q_max * r_max, budget: SEARCH_LIMIT as u64 });
    }
    let a_tol = c * x.powf(-k + params.theta) * (1.0 + REL);
    let b_tol = c * x.powf(-d + params.rd1() * params.eta + params.theta) * (1.0 + REL);
    let mut n_witness = None;
    'q: for q in 1..=q_max.floor() as u64 {
        let aq = pt.alpha * q as f64;
        if dist_to_int(aq) > a_tol {
            continue;
        }
        for r in 1..=r_max.floor() as u64 {
            let qr = (q * r) as f64;
            if pt.beta.iter().all(|&b| dist_to_int(b * qr) <= b_tol) {
                n_witness = Some(NWitness {
                    q,
                    r,
                    a: aq.round() as i64,
                    b: pt.beta.iter().map(|&b| (b * qr).round() as i64).collect(),
                });
                break 'q;
            }
        }
    }
    let cp = c_prime(c);
    let qp_max = cp * x.powf(params.omega) * (1.0 + REL);
    if qp_max > SEARCH_LIMIT {
        return Err(Error::BudgetExceeded { needed: qp_max, budget: SEARCH_LIMIT as u64 });
    }
    let pa_tol = cp * x.powf(-k + params.omega) * (1.0 + REL);
    let pb_tol = cp * x.powf(-d + params.omega) * (1.0 + REL);
    let p_witness = (1..=qp_max.floor() as u64).find_map(|q| {
        let qf = q as f64;
        let a = (pt.alpha * qf).round();
        let b: Vec<f64> = pt.beta.iter().map(|&v| (v * qf).round()).collect();
        let ok = (pt.alpha - a / qf).abs() <= pa_tol && pt.beta.iter().zip(&b).all(|(&v, &bi)| (v - bi / qf).abs() <= pb_tol);
        ok.then(|| PWitness { q, a: a as i64, b: b.iter().map(|&v| v as i64).collect() })
    });
    let out = ArcClassification {
        in_n: n_witness.is_some(),
        in_p: p_witness.is_some(),
        n_witness,
        p_witness,
        c,
        c_prime: cp,
    };
    if out.in_n && !out.in_p {
        return Err(Error::invalid("inclusion of N(eta) in P(omega) failed"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dirichlet_examples() {
        let r = dirichlet_approx(0.0, 10.0).unwrap();
        assert_eq!((r.a, r.q), (0, 1));
        let r = dirichlet_approx(0.3, 10.0).unwrap();
        assert_eq!((r.a, r.q), (3, 10));
        let r = dirichlet_approx(2f64.sqrt() - 1.0, 5.0).unwrap();
        assert_eq!((r.a, r.q), (2, 5));
        assert!(((2f64.sqrt() - 1.0) * 5.0 - 2.0).abs() <= 0.2);
        assert!(dirichlet_approx(0.5, 0.5).is_err());
    }

    #[test]
    fn major_arc_examples() {
        assert_eq!(in_major_mj(0.0, 10.0, 3, 3.0).unwrap(), MajorArcMembership { inside: true, witness: Some(1) });
        let m = in_major_mj(2f64.sqrt() - 1.0, 100.0, 3, 5.0).unwrap();
        assert!(!m.inside);
        let m = in_major_mj(0.5, 10.0, 3, 3.0).unwrap();
        assert_eq!(m.witness, Some(2));
        assert!(in_major_mj(0.5, 10.0, 3, 0.5).is_err());
    }

    #[test]
    fn farey_order_five() {
        let f = farey(5);
        assert_eq!(f.len(), 10);
        assert_eq!(f[1], (1, 5));
        assert!(f.windows(2).all(|w| (w[0].0 * w[1].1) < (w[1].0 * w[0].1)));
    }

    #[test]
    fn prop31_reproduces_thresholds() {
        assert_eq!(min_feasible_s(2, 3, 1, 0, Instantiation::Shifted).unwrap(), 25);
        assert_eq!(min_feasible_s(2, 8, 1, 0, Instantiation::Shifted).unwrap(), 561);
        assert_eq!(
            min_feasible_s(2, 8, 1, 0, Instantiation::Shifted).unwrap() as i128,
            crate::bounds::thm11_bound(2, 8).unwrap().value + 1
        );
        assert_eq!(
            min_feasible_s(2, 3, 1, 0, Instantiation::Nary { n: 1 }).unwrap() as i128,
            crate::bounds::cor110_bound(2, 3, 1, 1).unwrap().value + 1
        );
    }

    #[test]
    fn prop31_first_condition_fails_for_small_t() {
        let mut cp = CentralParams::lemma_shifted(2, 3, 1, 25, 0).unwrap();
        cp.t = rat(2, 1);
        let r = check_prop31(&cp, 0);
        assert!(!r.main[0].satisfied && !r.feasible);
        assert!(!r.lemma_range.satisfied);
    }

    #[test]
    fn kappa_default_meets_its_condition() {
        let cp = CentralParams::lemma_shifted(2, 3, 1, 40, 0).unwrap();
        let r = check_prop31(&cp, 0);
        assert!(r.kappa[0].satisfied);
        assert!(r.feasible);
    }

    fn demo_params() -> (CentralParams, ArcParams) {
        let cp = CentralParams::lemma_shifted(2, 3, 1, 30, 0).unwrap();
        let ap = ArcParams::from_theta(&cp, 0.2);
        (cp, ap)
    }

    #[test]
    fn classify_examples() {
        let (_, ap) = demo_params();
        let origin = ArcPoint::new(0.0, vec![0.0]);
        let c = classify_n(&origin, 100.0, &ap, 1.0).unwrap();
        assert_eq!(c.n_witness, Some(NWitness { q: 1, r: 1, a: 0, b: vec![0] }));
        assert!(c.in_p);
        let rational = ArcPoint::new(1.0 / 2.0, vec![1.0 / 2.0]);
        let c = classify_n(&rational, 100.0, &ap, 2.0).unwrap();
        assert_eq!(c.n_witness.map(|w| (w.q, w.a)), Some((2, 1)));
        let irr = ArcPoint::new(2f64.sqrt() - 1.0, vec![3f64.sqrt() - 1.0]);
        let c = classify_n(&irr, 100.0, &ap, 1.0).unwrap();
        assert!(!c.in_n);
        assert_eq!(c_prime(1.0), 1.0);
        assert_eq!(c_prime(3.0), 16.0);
    }

    proptest! {
        #[test]
        fn dirichlet_guarantee(alpha in 0.0f64..1.0, bound in 1.0f64..1e6) {
            let r = dirichlet_approx(alpha, bound).unwrap();
            prop_assert!(r.q as f64 <= bound);
            prop_assert!((alpha * r.q as f64 - r.a as f64).abs() <= 1.0 / bound + 1e-9);
        }

        #[test]
        fn major_arcs_nest(alpha in 0.0f64..1.0, q1 in 1.0f64..20.0, extra in 0.0f64..20.0) {
            let small = in_major_mj(alpha, 50.0, 3, q1).unwrap();
            let large = in_major_mj(alpha, 50.0, 3, q1 + extra).unwrap();
            prop_assert!(!small.inside || large.inside);
        }

        #[test]
        fn n_inside_p(alpha in 0.0f64..1.0, beta in 0.0f64..1.0, c in 0.5f64..3.0, theta in 0.05f64..0.3) {
            let cp = CentralParams::lemma_shifted(2, 3, 1, 30, 0).unwrap();
            let ap = ArcParams::from_theta(&cp, theta);
            // Snap to a nearby rational so that N-membership is exercised.
            let q = 1 + (alpha * 7.0) as u64;
            let pt = ArcPoint::new((alpha * q as f64).round() / q as f64 + 1e-7, vec![(beta * q as f64).round() / q as f64]);
            let cl = classify_n(&pt, 40.0, &ap, c).unwrap();
            prop_assert!(!cl.in_n || cl.in_p);
        }

        #[test]
        fn parameter_round_trip(theta in 0.001f64..1.0) {
            let (cp, _) = demo_params();
            let a = ArcParams::from_theta(&cp, theta);
            prop_assert!(a.is_consistent());
            let b = ArcParams::from_eta(&cp, a.eta);
            let c = ArcParams::from_omega(&cp, b.omega);
            let back = ArcParams::from_eta(&cp, c.eta);
            prop_assert!((back.theta - theta).abs() <= 1e-12);
        }
    }

    #[test]
    fn major_arc_measure_bounded() {
        for x in [20.0f64, 40.0] {
            let q = 4.0;
            let m = major_arc_measure(x, 3, q, 20_000, 7).unwrap();
            // Each q ≤ Q contributes at most q intervals of width 2Q X^{-3}/q.
            assert!(m <= 4.0 * q * q * x.powi(-3) + 0.01, "measure {m}");
        }
    }
}
