//! Small exact number-theoretic helpers: integer square roots, primes,
//! factorisation, Möbius, and linear algebra over `ℤ/pℤ`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};

/// `⌊√n⌋`, exact.
pub fn isqrt(n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u64;
    while x.checked_mul(x).map_or(true, |v| v > n) {
        x -= 1;
    }
    while (x + 1).checked_mul(x + 1).map_or(false, |v| v <= n) {
        x += 1;
    }
    x
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

pub fn primes_up_to(n: u64) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let n = n as usize;
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            let mut j = i * i;
            while j <= n {
                sieve[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    sieve
        .iter()
        .enumerate()
        .filter_map(|(i, &p)| p.then_some(i as u64))
        .collect()
}

/// Prime factorisation as `(p, e)` pairs in increasing `p`.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn mobius(n: u64) -> i32 {
    let f = factorize(n);
    if f.iter().any(|&(_, e)| e > 1) {
        0
    } else if f.len() % 2 == 0 {
        1
    } else {
        -1
    }
}

pub fn divisors(n: u64) -> Vec<u64> {
    let mut out = vec![1u64];
    for (p, e) in factorize(n) {
        let len = out.len();
        let mut pk = 1;
        for _ in 0..e {
            pk *= p;
            for i in 0..len {
                out.push(out[i] * pk);
            }
        }
    }
    out.sort_unstable();
    out
}

pub fn gcd_u64(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut r = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Inverse of `a` modulo prime `p`; `a` must be a unit.
pub fn inv_mod_prime(a: u64, p: u64) -> u64 {
    pow_mod(a, p - 2, p)
}

/// `v mod m` in `[0, m)` for signed `v`.
pub fn reduce_i128(v: i128, m: u64) -> u64 {
    v.rem_euclid(m as i128) as u64
}

pub fn reduce_big(v: &BigInt, m: u64) -> u64 {
    let r = v.mod_floor(&BigInt::from(m));
    r.to_u64().expect("residue fits")
}

/// `v / p^h` when exact, `None` otherwise.
pub fn exact_div_big(v: &BigInt, d: &BigInt) -> Option<BigInt> {
    let (q, r) = v.div_rem(d);
    r.is_zero().then_some(q)
}

/// Rank of a matrix over `ℤ/pℤ` (`p` prime). Entries must be reduced.
pub fn rank_mod_p(rows: &[Vec<u64>], p: u64) -> usize {
    let mut m: Vec<Vec<u64>> = rows.to_vec();
    row_reduce(&mut m, None, p).len()
}

/// Solution set of `M y ≡ rhs (mod p)`: a particular solution plus a basis of
/// the null space, or `None` when inconsistent.
#[derive(Clone, Debug)]
pub struct AffineSolutions {
    pub particular: Vec<u64>,
    pub kernel: Vec<Vec<u64>>,
}

pub fn solve_mod_p(rows: &[Vec<u64>], rhs: &[u64], ncols: usize, p: u64) -> Option<AffineSolutions> {
    let mut m: Vec<Vec<u64>> = rows.to_vec();
    let mut b: Vec<u64> = rhs.to_vec();
    let pivots = row_reduce(&mut m, Some(&mut b), p);
    if b.iter().skip(pivots.len()).any(|&v| v != 0) {
        return None;
    }
    let mut particular = vec![0u64; ncols];
    for (r, &c) in pivots.iter().enumerate() {
        particular[c] = b[r];
    }
    let mut kernel = Vec::new();
    for free in 0..ncols {
        if pivots.contains(&free) {
            continue;
        }
        let mut v = vec![0u64; ncols];
        v[free] = 1;
        for (r, &c) in pivots.iter().enumerate() {
            v[c] = (p - m[r][free] % p) % p;
        }
        kernel.push(v);
    }
    Some(AffineSolutions { particular, kernel })
}

// Reduced row echelon form in place; returns pivot columns (row i has pivot pivots[i]).
fn row_reduce(m: &mut [Vec<u64>], mut rhs: Option<&mut Vec<u64>>, p: u64) -> Vec<usize> {
    let nrows = m.len();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..ncols {
        if row == nrows {
            break;
        }
        let Some(sel) = (row..nrows).find(|&r| m[r][col] % p != 0) else {
            continue;
        };
        m.swap(row, sel);
        if let Some(b) = rhs.as_deref_mut() {
            b.swap(row, sel);
        }
        let inv = inv_mod_prime(m[row][col] % p, p);
        for v in m[row].iter_mut() {
            *v = mul_mod(*v, inv, p);
        }
        if let Some(b) = rhs.as_deref_mut() {
            b[row] = mul_mod(b[row], inv, p);
        }
        for r in 0..nrows {
            if r != row && m[r][col] % p != 0 {
                let f = m[r][col] % p;
                for c in 0..ncols {
                    let sub = mul_mod(f, m[row][c], p);
                    m[r][c] = (m[r][c] % p + p - sub) % p;
                }
                if let Some(b) = rhs.as_deref_mut() {
                    let sub = mul_mod(f, b[row], p);
                    b[r] = (b[r] % p + p - sub) % p;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    pivots
}

/// `|v|` as `f64`, saturating.
pub fn big_abs_f64(v: &BigInt) -> f64 {
    v.abs().to_f64().unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isqrt_matches_definition() {
        for n in 0..5000u64 {
            let r = isqrt(n);
            assert!(r * r <= n && (r + 1) * (r + 1) > n);
        }
        assert_eq!(isqrt(u64::MAX), 4294967295);
    }

    #[test]
    fn factor_and_mobius() {
        assert_eq!(factorize(360), vec![(2, 3), (3, 2), (5, 1)]);
        assert_eq!(mobius(30), -1);
        assert_eq!(mobius(12), 0);
        assert_eq!(mobius(1), 1);
        assert_eq!(divisors(12), vec![1, 2, 3, 4, 6, 12]);
        assert_eq!(primes_up_to(20), vec![2, 3, 5, 7, 11, 13, 17, 19]);
    }

    #[test]
    fn solve_mod_small() {
        // x + y ≡ 1, 2x + 2y ≡ 2 mod 5: one free variable.
        let sol = solve_mod_p(&[vec![1, 1], vec![2, 2]], &[1, 2], 2, 5).unwrap();
        assert_eq!(sol.kernel.len(), 1);
        let [x, y] = [sol.particular[0], sol.particular[1]];
        assert_eq!((x + y) % 5, 1);
        assert!(solve_mod_p(&[vec![1, 1], vec![1, 1]], &[1, 2], 2, 5).is_none());
        assert_eq!(rank_mod_p(&[vec![2, 4], vec![1, 2]], 7), 1);
    }
}
