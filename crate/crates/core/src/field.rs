//! Color-space reduction over a prime field and its derandomization.
//!
//! A color `x` is read as the polynomial whose coefficients are its base-`p`
//! digits; `f_e(x)` evaluates that polynomial at a seed `e`. Two colors
//! collide exactly at the roots of their difference polynomial.

use num_rational::Ratio;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Color;

/// Largest modulus for which seeds are enumerated directly.
pub const BRUTE_FORCE_LIMIT: u64 = 1 << 16;

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize)]
pub enum FieldError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("identical colors have no collision roots")]
    SameColor,
    #[error("color {x} needs more than {digits} base-{p} digits")]
    ColorTooLarge { x: u64, p: u64, digits: u32 },
    #[error("root extraction for degree {d} over F_{p} is unsupported")]
    Unsupported { d: u32, p: u64 },
    #[error("prefix of {len} bits exceeds seed length {ell}")]
    PrefixTooLong { len: u32, ell: u32 },
    #[error("infeasible: 2 * sum C(|L|,2) * d = {twice_pairs_d} >= p = {p}")]
    Infeasible { twice_pairs_d: u128, p: u64 },
    #[error("enumeration bound exceeded: p = {0}")]
    TooLarge(u64),
}

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    for q in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if p % q == 0 {
            return p == q;
        }
    }
    // Deterministic Miller-Rabin for 64-bit inputs.
    let mut d = p - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, p);
        if x == 1 || x == p - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, p);
            if x == p - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1 % p;
    a %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a, p);
        }
        a = mul_mod(a, a, p);
        e >>= 1;
    }
    r
}

fn inv_mod(a: u64, p: u64) -> u64 {
    pow_mod(a, p - 2, p)
}

/// `ceil(log2 p)`: the number of seed bits.
pub fn seed_len(p: u64) -> u32 {
    64 - (p - 1).leading_zeros()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorspaceReducer {
    pub p: u64,
    pub d: u32,
}

impl ColorspaceReducer {
    pub fn new(p: u64, d: u32) -> Result<Self, FieldError> {
        if !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }
        Ok(ColorspaceReducer { p, d })
    }

    /// Smallest `d` with `p^(d+1) >= palette`.
    pub fn for_palette(p: u64, palette: u64) -> Result<Self, FieldError> {
        let mut d = 0;
        let mut cap = p as u128;
        while cap < palette as u128 {
            cap *= p as u128;
            d += 1;
        }
        Self::new(p, d)
    }

    pub fn seed_len(&self) -> u32 {
        seed_len(self.p)
    }

    pub fn digits(&self, x: u64) -> Result<Vec<u64>, FieldError> {
        let mut out = Vec::with_capacity(self.d as usize + 1);
        let mut y = x;
        for _ in 0..=self.d {
            out.push(y % self.p);
            y /= self.p;
        }
        if y != 0 {
            return Err(FieldError::ColorTooLarge { x, p: self.p, digits: self.d + 1 });
        }
        Ok(out)
    }

    /// `f_e(x)`.
    pub fn eval(&self, x: u64, e: u64) -> u64 {
        let digits = self.digits(x).expect("color within reducer range");
        let mut acc = 0u64;
        for &a in digits.iter().rev() {
            acc = (mul_mod(acc, e, self.p) + a) % self.p;
        }
        acc
    }

    /// All `e` with `f_e(x) = f_e(x')`.
    pub fn pair_collision_roots(&self, x: u64, x2: u64) -> Result<Vec<u64>, FieldError> {
        if x == x2 {
            return Err(FieldError::SameColor);
        }
        let a = self.digits(x)?;
        let b = self.digits(x2)?;
        let p = self.p;
        let mut poly: Vec<u64> = a.iter().zip(&b).map(|(u, v)| (u + p - v) % p).collect();
        while poly.len() > 1 && *poly.last().unwrap() == 0 {
            poly.pop();
        }
        match poly.len() {
            1 => Ok(Vec::new()),
            2 => Ok(vec![mul_mod(p - poly[0], inv_mod(poly[1], p), p)]),
            _ if p <= BRUTE_FORCE_LIMIT => Ok((0..p).filter(|&e| poly_eval(&poly, e, p) == 0).collect()),
            k if k <= 5 && p > 2 => {
                let mut r = roots_cz(&poly, p, x ^ x2.rotate_left(32));
                r.sort_unstable();
                Ok(r)
            }
            _ => Err(FieldError::Unsupported { d: self.d, p }),
        }
    }

    /// `R_u`: union of collision roots over all pairs of `list`.
    pub fn root_set(&self, list: &[Color]) -> Result<Vec<u64>, FieldError> {
        let mut r = Vec::new();
        for i in 0..list.len() {
            for j in i + 1..list.len() {
                r.extend(self.pair_collision_roots(list[i] as u64, list[j] as u64)?);
            }
        }
        r.sort_unstable();
        r.dedup();
        Ok(r)
    }

    /// Rejects instances whose initial expectation is not below 1.
    pub fn check_feasible(&self, list_sizes: impl IntoIterator<Item = usize>) -> Result<(), FieldError> {
        let pairs: u128 = list_sizes.into_iter().map(|s| (s as u128) * (s as u128).saturating_sub(1) / 2).sum();
        let twice = 2 * pairs * self.d as u128;
        if twice >= self.p as u128 {
            return Err(FieldError::Infeasible { twice_pairs_d: twice, p: self.p });
        }
        Ok(())
    }

    pub fn injective_on(&self, list: &[Color], e: u64) -> bool {
        let mut img: Vec<u64> = list.iter().map(|&c| self.eval(c as u64, e)).collect();
        img.sort_unstable();
        img.windows(2).all(|w| w[0] != w[1])
    }
}

fn poly_eval(poly: &[u64], e: u64, p: u64) -> u64 {
    poly.iter().rev().fold(0, |acc, &a| (mul_mod(acc, e, p) + a) % p)
}

// Dense polynomials over F_p, lowest coefficient first.
fn trim(mut a: Vec<u64>) -> Vec<u64> {
    while a.len() > 1 && *a.last().unwrap() == 0 {
        a.pop();
    }
    a
}

fn poly_rem(a: &[u64], m: &[u64], p: u64) -> Vec<u64> {
    let mut r = a.to_vec();
    let dm = m.len() - 1;
    let lead_inv = inv_mod(*m.last().unwrap(), p);
    while r.len() > dm && !(r.len() == 1 && r[0] == 0) {
        let top = *r.last().unwrap();
        if top != 0 {
            let f = mul_mod(top, lead_inv, p);
            let shift = r.len() - 1 - dm;
            for (i, &c) in m.iter().enumerate() {
                r[shift + i] = (r[shift + i] + p - mul_mod(f, c, p)) % p;
            }
        }
        r.pop();
        if r.is_empty() {
            r.push(0);
        }
    }
    trim(r)
}

fn poly_mulmod(a: &[u64], b: &[u64], m: &[u64], p: u64) -> Vec<u64> {
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + mul_mod(x, y, p)) % p;
        }
    }
    poly_rem(&out, m, p)
}

fn poly_powmod(base: &[u64], mut e: u64, m: &[u64], p: u64) -> Vec<u64> {
    let mut r = vec![1u64];
    let mut b = poly_rem(base, m, p);
    while e > 0 {
        if e & 1 == 1 {
            r = poly_mulmod(&r, &b, m, p);
        }
        b = poly_mulmod(&b, &b, m, p);
        e >>= 1;
    }
    r
}

fn is_zero(a: &[u64]) -> bool {
    a.iter().all(|&c| c == 0)
}

fn poly_gcd(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    let mut x = trim(a.to_vec());
    let mut y = trim(b.to_vec());
    while !is_zero(&y) {
        let r = poly_rem(&x, &y, p);
        x = y;
        y = r;
    }
    let inv = inv_mod(*x.last().unwrap(), p);
    x.iter().map(|&c| mul_mod(c, inv, p)).collect()
}

fn poly_div(a: &[u64], m: &[u64], p: u64) -> Vec<u64> {
    let mut r = a.to_vec();
    let dm = m.len() - 1;
    let lead_inv = inv_mod(*m.last().unwrap(), p);
    let mut q = vec![0u64; r.len().saturating_sub(dm).max(1)];
    while r.len() > dm {
        let top = *r.last().unwrap();
        let shift = r.len() - 1 - dm;
        let f = mul_mod(top, lead_inv, p);
        q[shift] = f;
        for (i, &c) in m.iter().enumerate() {
            r[shift + i] = (r[shift + i] + p - mul_mod(f, c, p)) % p;
        }
        r.pop();
    }
    trim(q)
}

/// Distinct roots of `poly` in F_p for odd prime `p` (Cantor-Zassenhaus).
fn roots_cz(poly: &[u64], p: u64, salt: u64) -> Vec<u64> {
    let f = trim(poly.to_vec());
    // g = gcd(f, x^p - x) keeps one copy of every linear factor.
    let xp = poly_powmod(&[0, 1], p, &f, p);
    let mut xp_minus_x = xp.clone();
    xp_minus_x.resize(xp_minus_x.len().max(2), 0);
    xp_minus_x[1] = (xp_minus_x[1] + p - 1) % p;
    let g = poly_gcd(&f, &trim(xp_minus_x), p);
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(salt ^ p);
    split(&g, p, &mut rng, &mut out);
    out
}

fn split(g: &[u64], p: u64, rng: &mut ChaCha8Rng, out: &mut Vec<u64>) {
    let deg = g.len() - 1;
    if deg == 0 {
        return;
    }
    if deg == 1 {
        out.push(mul_mod(p - g[0], inv_mod(g[1], p), p));
        return;
    }
    loop {
        let a = rng.gen_range(0..p);
        let mut h = poly_powmod(&[a, 1], (p - 1) / 2, g, p);
        h.resize(h.len().max(1), 0);
        h[0] = (h[0] + p - 1) % p;
        let d = poly_gcd(g, &trim(h), p);
        let dd = d.len() - 1;
        if dd > 0 && dd < deg {
            let rest = poly_div(g, &d, p);
            split(&d, p, rng, out);
            split(&rest, p, rng, out);
            return;
        }
    }
}

/// Value range `[lo, hi)` of seeds whose top `len` bits equal `prefix`.
fn subcube(prefix: u64, len: u32, ell: u32) -> (u64, u64) {
    let width = ell - len;
    let lo = prefix << width;
    (lo, lo + (1u64 << width))
}

/// Integer numerator of `E[Φ | prefix]` over the subcube size.
pub fn prefix_count(p: u64, prefix: u64, len: u32, root_sets: &[Vec<u64>]) -> Result<(u64, u64), FieldError> {
    let ell = seed_len(p);
    if len > ell {
        return Err(FieldError::PrefixTooLong { len, ell });
    }
    let (lo, hi) = subcube(prefix, len, ell);
    let y = hi.saturating_sub(lo.max(p));
    let x: u64 = root_sets.iter().map(|r| range_count(r, lo, hi.min(p))).sum();
    Ok((y + x, hi - lo))
}

/// `|{r in sorted : lo <= r < hi}|`.
pub fn range_count(sorted: &[u64], lo: u64, hi: u64) -> u64 {
    if hi <= lo {
        return 0;
    }
    (sorted.partition_point(|&r| r < hi) - sorted.partition_point(|&r| r < lo)) as u64
}

/// `E[Φ | prefix]` as an exact rational.
pub fn conditional_expectation(p: u64, prefix: u64, len: u32, root_sets: &[Vec<u64>]) -> Result<Ratio<u64>, FieldError> {
    let (num, den) = prefix_count(p, prefix, len, root_sets)?;
    Ok(Ratio::new(num, den))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkStep {
    pub bit: u32,
    pub chosen: u8,
    pub before: Ratio<u64>,
    pub after: Ratio<u64>,
}

/// Fixes seed bits MSB first, keeping the half with the smaller expectation
/// (ties keep 0). Given per-half counts, this is what a cluster leader does.
pub fn choose_bit(count0: u64, count1: u64) -> u8 {
    u8::from(count1 < count0)
}

/// Sequential bit-fixing walk over aggregated counts.
pub fn derandomize(p: u64, root_sets: &[Vec<u64>]) -> Result<(u64, Vec<WalkStep>), FieldError> {
    let ell = seed_len(p);
    let mut prefix = 0u64;
    let mut walk = Vec::with_capacity(ell as usize);
    for len in 0..ell {
        let before = conditional_expectation(p, prefix, len, root_sets)?;
        let (c0, _) = prefix_count(p, prefix << 1, len + 1, root_sets)?;
        let (c1, _) = prefix_count(p, (prefix << 1) | 1, len + 1, root_sets)?;
        let b = choose_bit(c0, c1);
        prefix = (prefix << 1) | b as u64;
        let after = conditional_expectation(p, prefix, len + 1, root_sets)?;
        walk.push(WalkStep { bit: len, chosen: b, before, after });
    }
    Ok((prefix, walk))
}

/// Checks feasibility, then derandomizes the seed for `lists`.
pub fn colorspace_reduce(red: &ColorspaceReducer, lists: &[Vec<Color>]) -> Result<(u64, Vec<WalkStep>), FieldError> {
    red.check_feasible(lists.iter().map(Vec::len))?;
    let sets = lists.iter().map(|l| red.root_set(l)).collect::<Result<Vec<_>, _>>()?;
    derandomize(red.p, &sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primes() {
        let small: Vec<u64> = (0..30).filter(|&x| is_prime(x)).collect();
        assert_eq!(small, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert!(is_prime(65521));
        assert!(!is_prime(65521 * 65519));
        assert!(is_prime(1_000_000_007));
    }

    #[test]
    fn digits_and_roots() {
        let r = ColorspaceReducer::new(11, 1).unwrap();
        assert_eq!(r.digits(12).unwrap(), vec![1, 1]);
        assert_eq!(r.digits(5).unwrap(), vec![5, 0]);
        assert_eq!(r.pair_collision_roots(0, 12).unwrap(), vec![10]);
        assert!(r.pair_collision_roots(0, 5).unwrap().is_empty());
        assert_eq!(r.pair_collision_roots(3, 3), Err(FieldError::SameColor));
        let r0 = ColorspaceReducer::for_palette(101, 50).unwrap();
        assert_eq!(r0.d, 0);
        assert!(r0.pair_collision_roots(1, 7).unwrap().is_empty());
    }

    #[test]
    fn roots_match_brute_force() {
        let r = ColorspaceReducer::new(13, 3).unwrap();
        for x in [0u64, 5, 170, 2000, 28560] {
            for y in [1u64, 14, 169, 2197, 4000] {
                let got = r.pair_collision_roots(x, y).unwrap();
                let want: Vec<u64> = (0..13).filter(|&e| r.eval(x, e) == r.eval(y, e)).collect();
                assert_eq!(got, want, "{x} {y}");
            }
        }
    }

    #[test]
    fn cantor_zassenhaus_large_prime() {
        let p = 1_000_003u64;
        let r = ColorspaceReducer::new(p, 2).unwrap();
        // (e - 3)(e - 7) = e^2 - 10e + 21: colors with digits (21, p-10, 1) and 0.
        let x = 21 + (p - 10) * p + p * p;
        let mut got = r.pair_collision_roots(x, 0).unwrap();
        got.sort_unstable();
        assert_eq!(got, vec![3, 7]);
        for e in got {
            assert_eq!(r.eval(x, e), r.eval(0, e));
        }
    }

    #[test]
    fn expectation_examples() {
        let sets = vec![vec![10u64]];
        assert_eq!(conditional_expectation(11, 0, 0, &sets).unwrap(), Ratio::new(6, 16));
        assert_eq!(conditional_expectation(11, 0, 1, &sets).unwrap(), Ratio::new(0, 1));
        let none: Vec<Vec<u64>> = vec![vec![], vec![]];
        assert_eq!(conditional_expectation(11, 1, 1, &none).unwrap(), Ratio::new(5, 8));
        assert!(matches!(conditional_expectation(11, 0, 5, &sets), Err(FieldError::PrefixTooLong { .. })));
    }

    #[test]
    fn derandomized_seed_avoids_root() {
        let r = ColorspaceReducer::new(11, 1).unwrap();
        let (e, walk) = colorspace_reduce(&r, &[vec![0, 12]]).unwrap();
        assert_ne!(e, 10);
        assert!(e < 11);
        assert!(walk.iter().all(|s| s.after <= s.before));
        assert!(walk.last().unwrap().after < Ratio::from_integer(1));
        let (e2, _) = colorspace_reduce(&r, &[vec![0, 12], vec![1, 13]]).unwrap();
        assert_ne!(e2, 10);
    }

    #[test]
    fn infeasible_rejected() {
        let r = ColorspaceReducer::new(11, 1).unwrap();
        let lists = vec![vec![0, 1, 2, 3]];
        assert!(matches!(colorspace_reduce(&r, &lists), Err(FieldError::Infeasible { .. })));
    }
}
