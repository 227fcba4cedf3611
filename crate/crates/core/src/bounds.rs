//! Closed-form variable-count thresholds, in exact integer arithmetic.

use serde::Serialize;

use crate::arith::isqrt;
use crate::{Error, Result};

/// Hua-lemma exponent `s₀(j) = min{2^{j−1}, j(j−1)/2 + ⌊√(2j+2)⌋}`.
pub fn s0(j: u32) -> Result<u64> {
    if j < 1 {
        return Err(Error::invalid("s0 needs j ≥ 1"));
    }
    let j64 = j as u64;
    Ok(pow2(j - 1).min(j64 * (j64 - 1) / 2 + isqrt(2 * j64 + 2)))
}

/// Inverse Weyl exponent `σ₀(j) = min{2^{j−1}, (j−1)(j−2) + 2⌊√(2j)⌋}`.
pub fn sigma0(j: u32) -> Result<u64> {
    if j < 1 {
        return Err(Error::invalid("sigma0 needs j ≥ 1"));
    }
    if j == 1 {
        return Ok(1);
    }
    let j64 = j as u64;
    Ok(pow2(j - 1).min((j64 - 1) * (j64 - 2) + 2 * isqrt(2 * j64)))
}

fn pow2(e: u32) -> u64 {
    1u64.checked_shl(e).filter(|_| e < 64).unwrap_or(u64::MAX)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// `d+1 ≤ k ≤ d+4`.
    Small,
    /// `k = d+5`.
    Middle,
    /// `k ≥ d+6`.
    Large,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BranchValue {
    pub value: i128,
    pub branch: Branch,
}

fn check_degrees(d: u32, k: u32) -> Result<()> {
    if d < 2 || k <= d {
        return Err(Error::invalid(format!("need k > d ≥ 2, got d={d}, k={k}")));
    }
    if k > 100 {
        return Err(Error::invalid(format!("k={k} too large for exact i128 evaluation")));
    }
    Ok(())
}

fn branch_of(d: u32, k: u32) -> Branch {
    match k - d {
        1..=4 => Branch::Small,
        5 => Branch::Middle,
        _ => Branch::Large,
    }
}

fn sqrt_terms(d: u32, k: u32) -> (i128, i128) {
    let a = isqrt(2 * (k - d) as u64) as i128;
    let b = isqrt(2 * (k - d) as u64 + 2) as i128;
    (a, b)
}

/// `L_d(k) = (4d²+8d+1)k − 2d³ − 7d² − 5d − 4d⌊√(2k−2d)⌋ − 2⌊√(2k−2d+2)⌋`.
pub fn l_d(d: u32, k: u32) -> i128 {
    let (d, kk) = (d as i128, k as i128);
    let (a, b) = sqrt_terms(d as u32, k);
    (4 * d * d + 8 * d + 1) * kk - 2 * d * d * d - 7 * d * d - 5 * d - 4 * d * a - 2 * b
}

/// `L*_d(k) = (6d²+11d+1)k − 3d³ − 10d² − 7d − 6d⌊√(2k−2d)⌋ − 2⌊√(2k−2d+2)⌋`.
pub fn l_star_d(d: u32, k: u32) -> i128 {
    let (d, kk) = (d as i128, k as i128);
    let (a, b) = sqrt_terms(d as u32, k);
    (6 * d * d + 11 * d + 1) * kk - 3 * d * d * d - 10 * d * d - 7 * d - 6 * d * a - 2 * b
}

/// Three-branch threshold for one diagonal form and one form of degree `d`.
pub fn thm11_bound(d: u32, k: u32) -> Result<BranchValue> {
    check_degrees(d, k)?;
    let branch = branch_of(d, k);
    let (di, ki) = (d as i128, k as i128);
    let p2d = 1i128 << d;
    let value = match branch {
        Branch::Small => (1i128 << k) * (di + 1),
        Branch::Middle => p2d * (26 + 32 * di),
        Branch::Large => p2d * ((2 * di + 1) * ki * ki - l_d(d, k)),
    };
    Ok(BranchValue { value, branch })
}

/// Comparison bound `(2+d)(k−1)2^{k−1} + d·2^{d−1}`.
pub fn bhb13_bound(d: u32, k: u32) -> Result<i128> {
    if d < 1 || k <= d || k > 100 {
        return Err(Error::invalid(format!("need k > d ≥ 1, got d={d}, k={k}")));
    }
    let (di, ki) = (d as i128, k as i128);
    Ok((2 + di) * (ki - 1) * (1i128 << (k - 1)) + di * (1i128 << (d - 1)))
}

/// Diagonal-hypersurface threshold `k² − k + 2⌊√(2k+2)⌋ − 1`.
pub fn diag15_threshold(k: u32) -> Result<i128> {
    if k < 2 {
        return Err(Error::invalid("need k ≥ 2"));
    }
    let ki = k as i128;
    Ok(ki * ki - ki + 2 * isqrt(2 * k as u64 + 2) as i128 - 1)
}

/// Three-branch threshold for two forms of degree `d`.
pub fn cor15_bound(d: u32, k: u32) -> Result<BranchValue> {
    check_degrees(d, k)?;
    let branch = branch_of(d, k);
    let (di, ki) = (d as i128, k as i128);
    let p2d = 1i128 << d;
    let value = match branch {
        Branch::Small => (1i128 << (k - 1)) * (2 + 3 * di),
        Branch::Middle => p2d * (26 + 48 * di),
        Branch::Large => p2d * ((3 * di + 1) * ki * ki - l_star_d(d, k)),
    };
    Ok(BranchValue { value, branch })
}

/// `a/(s−D) + b/s < 1`, exactly.
fn fraction_condition(a: i128, b: i128, s: i128, dim_v: i128) -> bool {
    let sv = s - dim_v;
    sv > 0 && a * s + b * sv < s * sv
}

/// Smallest `s` meeting the three displayed conditions of the general
/// theorem for `ρ` forms of degree `d`, by a monotone sweep.
pub fn thm1a_min_s(d: u32, k: u32, rho: u32, dim_v: u32) -> Result<u64> {
    check_degrees(d, k)?;
    if rho < 1 {
        return Err(Error::invalid("need ρ ≥ 1"));
    }
    let j = k - d;
    let (s0j, sj) = (s0(j)? as i128, sigma0(j)? as i128);
    let (di, r, dv) = (d as i128, rho as i128, dim_v as i128);
    let p2d = 1i128 << d;
    let linear = 2 * p2d * s0j + p2d * (r + 1) * di * sj;
    let a2 = (p2d / 2) * r * di;
    let b2 = p2d * (r * di + 2) * sj;
    let a3 = (p2d / 2) * r * (r + 1) * (di - 1);
    let b3 = p2d * (r + 2) * sj;
    let mut s = (linear + 1).max(dv + 1);
    loop {
        if fraction_condition(a2, b2, s, dv) && fraction_condition(a3, b3, s, dv) {
            return Ok(s as u64);
        }
        s += 1;
    }
}

/// The three maxima whose excess over `s − dim 𝒱*` suffices in the
/// `n`-ary setting, with `σ = σ₀(k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NaryThresholds {
    pub m1: i128,
    pub m2: i128,
    pub m3: i128,
}

impl NaryThresholds {
    pub fn max(&self) -> i128 {
        self.m1.max(self.m2).max(self.m3)
    }
}

pub fn nary_thresholds(d: u32, k: u32, rho: u32, n: u32) -> Result<NaryThresholds> {
    check_degrees(d, k)?;
    let (s0k, sk) = (s0(k)? as i128, sigma0(k)? as i128);
    let (di, r, ni) = (d as i128, rho as i128, n as i128);
    let p2d = 1i128 << d;
    Ok(NaryThresholds {
        m1: 2 * p2d * ni * (2 * s0k + r * di * sk),
        m2: (p2d / 2) * di * r + 2 * p2d * ni * (r * di + 2) * sk,
        m3: (p2d / 2) * r * (r + 1) * (di - 1) + 2 * p2d * ni * (r + 2) * sk,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NaryBranch {
    /// `ρ ≤ 4nσ`.
    FewForms,
    /// `ρ ≥ 4nσ + 1`.
    ManyForms,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NaryBound {
    pub value: i128,
    pub branch: NaryBranch,
    pub thresholds: NaryThresholds,
}

/// Two-branch threshold for `F` a sum of `n`-ary forms.
pub fn cor110_bound(d: u32, k: u32, rho: u32, n: u32) -> Result<NaryBound> {
    check_degrees(d, k)?;
    if rho < 1 || n < 1 {
        return Err(Error::invalid("need ρ, n ≥ 1"));
    }
    let sigma = sigma0(k)? as i128;
    let (di, r, ni) = (d as i128, rho as i128, n as i128);
    let half = 1i128 << (d - 1);
    let (value, branch) = if r <= 4 * ni * sigma {
        (half * ((4 * ni * sigma + 1) * di * r + 8 * ni * sigma), NaryBranch::FewForms)
    } else {
        (
            half * ((di - 1) * r * r + (di - 1 + 4 * ni * sigma) * r + 8 * ni * sigma),
            NaryBranch::ManyForms,
        )
    };
    let thresholds = nary_thresholds(d, k, rho, n)?;
    debug_assert!(thresholds.m1 <= thresholds.m2);
    debug_assert_eq!(value, thresholds.max());
    Ok(NaryBound { value, branch, thresholds })
}

/// All thresholds for one `(d, k, ρ, n)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundTable {
    pub d: u32,
    pub k: u32,
    pub rho: u32,
    pub n: u32,
    pub s0_k_minus_d: u64,
    pub sigma0_k_minus_d: u64,
    pub s0_k: u64,
    pub sigma0_k: u64,
    pub thm11: BranchValue,
    pub bhb13: i128,
    pub diag15: i128,
    pub cor15: BranchValue,
    /// Smallest `s` for `dim 𝒱* = 0`.
    pub thm1a_min_s: u64,
    pub cor110: NaryBound,
}

impl BoundTable {
    pub fn compute(d: u32, k: u32, rho: u32, n: u32) -> Result<Self> {
        Ok(BoundTable {
            d,
            k,
            rho,
            n,
            s0_k_minus_d: s0(k - d)?,
            sigma0_k_minus_d: sigma0(k - d)?,
            s0_k: s0(k)?,
            sigma0_k: sigma0(k)?,
            thm11: thm11_bound(d, k)?,
            bhb13: bhb13_bound(d, k)?,
            diag15: diag15_threshold(k)?,
            cor15: cor15_bound(d, k)?,
            thm1a_min_s: thm1a_min_s(d, k, rho, 0)?,
            cor110: cor110_bound(d, k, rho, n)?,
        })
    }
}
