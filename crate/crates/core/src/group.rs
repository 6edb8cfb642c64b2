//! Prime-order subgroup arithmetic.
//!
//! The arithmetic is generic over [`GroupInt`] so the same code runs on
//! machine words (the toy group, handy for exhaustive checks) and on
//! arbitrary-precision integers (the desk group used by the protocol).

use std::fmt::Debug;

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::counters;

/// Unsigned integer type usable as a group element or exponent.
pub trait GroupInt: Clone + Eq + Ord + Debug + Zero + One {
    fn from_u64(value: u64) -> Self;

    /// `self^exp mod modulus`.
    fn pow_mod(&self, exp: &Self, modulus: &Self) -> Self;

    /// `self * rhs mod modulus`.
    fn mul_mod(&self, rhs: &Self, modulus: &Self) -> Self;

    /// `(self - rhs) mod modulus` for operands already reduced.
    fn sub_mod(&self, rhs: &Self, modulus: &Self) -> Self;

    fn rem(&self, modulus: &Self) -> Self;

    fn bits(&self) -> u64;

    /// Uniform sample in `[0, bound)`.
    fn random_below<R: RngCore + ?Sized>(bound: &Self, rng: &mut R) -> Self;

    /// Big-endian, left padded to `width` bytes. Panics if the value does not fit.
    fn to_be_fixed(&self, width: usize) -> Vec<u8>;

    fn from_be(bytes: &[u8]) -> Option<Self>;
}

impl GroupInt for u64 {
    fn from_u64(value: u64) -> Self {
        value
    }

    fn pow_mod(&self, exp: &Self, modulus: &Self) -> Self {
        let m = *modulus as u128;
        let mut base = (*self as u128) % m;
        let mut e = *exp;
        let mut acc: u128 = 1 % m;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base % m;
            }
            base = base * base % m;
            e >>= 1;
        }
        acc as u64
    }

    fn mul_mod(&self, rhs: &Self, modulus: &Self) -> Self {
        ((*self as u128) * (*rhs as u128) % (*modulus as u128)) as u64
    }

    fn sub_mod(&self, rhs: &Self, modulus: &Self) -> Self {
        if self >= rhs {
            self - rhs
        } else {
            modulus - (rhs - self)
        }
    }

    fn rem(&self, modulus: &Self) -> Self {
        self % modulus
    }

    fn bits(&self) -> u64 {
        (64 - self.leading_zeros()) as u64
    }

    fn random_below<R: RngCore + ?Sized>(bound: &Self, rng: &mut R) -> Self {
        assert!(*bound > 0, "empty sampling range");
        // rejection sampling keeps the distribution uniform
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = rng.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    fn to_be_fixed(&self, width: usize) -> Vec<u8> {
        let raw = self.to_be_bytes();
        let skip = raw.iter().take_while(|b| **b == 0).count();
        let significant = &raw[skip..];
        assert!(significant.len() <= width, "value does not fit in {width} bytes");
        let mut out = vec![0u8; width - significant.len()];
        out.extend_from_slice(significant);
        out
    }

    fn from_be(bytes: &[u8]) -> Option<Self> {
        let skip = bytes.iter().take_while(|b| **b == 0).count();
        let significant = &bytes[skip..];
        if significant.len() > 8 {
            return None;
        }
        Some(significant.iter().fold(0u64, |acc, b| (acc << 8) | *b as u64))
    }
}

impl GroupInt for BigUint {
    fn from_u64(value: u64) -> Self {
        BigUint::from(value)
    }

    fn pow_mod(&self, exp: &Self, modulus: &Self) -> Self {
        self.modpow(exp, modulus)
    }

    fn mul_mod(&self, rhs: &Self, modulus: &Self) -> Self {
        (self * rhs) % modulus
    }

    fn sub_mod(&self, rhs: &Self, modulus: &Self) -> Self {
        if self >= rhs {
            self - rhs
        } else {
            modulus - (rhs - self)
        }
    }

    fn rem(&self, modulus: &Self) -> Self {
        self % modulus
    }

    fn bits(&self) -> u64 {
        BigUint::bits(self)
    }

    fn random_below<R: RngCore + ?Sized>(bound: &Self, rng: &mut R) -> Self {
        struct Adapter<'a, R: ?Sized>(&'a mut R);
        impl<R: RngCore + ?Sized> RngCore for Adapter<'_, R> {
            fn next_u32(&mut self) -> u32 {
                self.0.next_u32()
            }
            fn next_u64(&mut self) -> u64 {
                self.0.next_u64()
            }
            fn fill_bytes(&mut self, dest: &mut [u8]) {
                self.0.fill_bytes(dest)
            }
            fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
                self.0.try_fill_bytes(dest)
            }
        }
        Adapter(rng).gen_biguint_below(bound)
    }

    fn to_be_fixed(&self, width: usize) -> Vec<u8> {
        let raw = if self.is_zero() { Vec::new() } else { self.to_bytes_be() };
        assert!(raw.len() <= width, "value does not fit in {width} bytes");
        let mut out = vec![0u8; width - raw.len()];
        out.extend_from_slice(&raw);
        out
    }

    fn from_be(bytes: &[u8]) -> Option<Self> {
        Some(BigUint::from_bytes_be(bytes))
    }
}

/// Selects one of the built-in parameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupProfile {
    /// p = 23, q = 11, g = 2. Small enough to enumerate.
    Toy,
    /// 1024-bit p with a 160-bit prime-order subgroup.
    Desk,
}

impl std::str::FromStr for GroupProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy" => Ok(GroupProfile::Toy),
            "desk" => Ok(GroupProfile::Desk),
            other => Err(format!("unknown group profile `{other}` (expected toy or desk)")),
        }
    }
}

const DESK_P: &str = "8d1d838bb18aea6f84dbb1634d09017b3925597874bf395af0b064142d8df360\
c83af81a38ac8f8f2d7e85d3fa92fc9f866580dbd3677c21c64a70915dd45ddfce94e6455e7f3463c6e8febf83cd86\
0e3457d745fe4913012d5444d40880bd75873208a12b175667b7cb9ee146e6ef48b95b5446f6a1c0910a24bc79e492cdef";
const DESK_Q: &str = "b88e109b849e5957ccf4ef2b8ac48e8681a6afc3";
const DESK_G: &str = "814aaee017d184fea186839545df1562b3c67ca564695b0db0dab42c26dfd6fa\
dd4dda8e64feec77f63028c6040557db81243798bb44c8dcc9df268bf4ca49087c697211a31806eea1beb19fc724ebe0\
b33e964aedb8e8034336d785743bfe52131cf5a27dfdf79ca3afd094b1f43ed2d23177fe4b411fd433a9073e4807d614";

/// System-wide constants `(p, q, g)`: `g` generates the subgroup `G` of
/// order `q` in the integers mod `p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupParams<T> {
    pub p: T,
    pub q: T,
    pub g: T,
}

impl GroupParams<u64> {
    pub fn toy() -> Self {
        GroupParams { p: 23, q: 11, g: 2 }
    }
}

impl GroupParams<BigUint> {
    pub fn generate(profile: GroupProfile) -> Self {
        match profile {
            GroupProfile::Toy => GroupParams {
                p: BigUint::from(23u32),
                q: BigUint::from(11u32),
                g: BigUint::from(2u32),
            },
            GroupProfile::Desk => {
                let parse = |s: &str| BigUint::parse_bytes(s.as_bytes(), 16).expect("embedded constant");
                GroupParams { p: parse(DESK_P), q: parse(DESK_Q), g: parse(DESK_G) }
            }
        }
    }

    /// The profile these parameters were built from, if any.
    pub fn profile(&self) -> Option<GroupProfile> {
        [GroupProfile::Toy, GroupProfile::Desk]
            .into_iter()
            .find(|p| GroupParams::generate(*p) == *self)
    }
}

impl<T: GroupInt> GroupParams<T> {
    /// Exponentiation in `Z_p`; the exponent is reduced mod `q` first, which
    /// is only sound for bases in `G`.
    pub fn exp(&self, base: &T, exponent: &T) -> T {
        counters::record_public_key_op();
        base.pow_mod(&exponent.rem(&self.q), &self.p)
    }

    pub fn exp_g(&self, exponent: &T) -> T {
        self.exp(&self.g, exponent)
    }

    pub fn mul(&self, a: &T, b: &T) -> T {
        a.mul_mod(b, &self.p)
    }

    /// `-e mod q`, used to divide by `v^e` without an inverse.
    pub fn neg_exponent(&self, e: &T) -> T {
        T::zero().sub_mod(&e.rem(&self.q), &self.q)
    }

    /// `x^q = 1 mod p` and `0 < x < p`.
    pub fn contains(&self, x: &T) -> bool {
        if x.is_zero() || *x >= self.p {
            return false;
        }
        counters::record_public_key_op();
        x.pow_mod(&self.q, &self.p).is_one()
    }

    /// Uniform exponent in `[0, q-1]`.
    pub fn random_exponent<R: RngCore + ?Sized>(&self, rng: &mut R) -> T {
        T::random_below(&self.q, rng)
    }

    /// Uniform exponent in `[1, q-1]`.
    pub fn random_nonzero_exponent<R: RngCore + ?Sized>(&self, rng: &mut R) -> T {
        loop {
            let e = self.random_exponent(rng);
            if !e.is_zero() {
                return e;
            }
        }
    }

    /// Bytes in the fixed-width encoding of a group element, `ceil(bits(p)/8)`.
    pub fn element_width(&self) -> usize {
        self.p.bits().div_ceil(8) as usize
    }

    pub fn encode(&self, x: &T) -> Vec<u8> {
        x.to_be_fixed(self.element_width())
    }

    /// Parses a fixed-width element. Only checks the range `(0, p)`.
    pub fn decode(&self, bytes: &[u8]) -> Option<T> {
        if bytes.len() != self.element_width() {
            return None;
        }
        T::from_be(bytes).filter(|x| !x.is_zero() && *x < self.p)
    }

    /// Checks the structural invariants: `q | p-1`, `g != 1`, `g^q = 1`.
    pub fn validate(&self) -> bool {
        let p_minus_one = self.p.sub_mod(&T::one(), &self.p);
        p_minus_one.rem(&self.q).is_zero()
            && !self.g.is_one()
            && !self.g.is_zero()
            && self.g.pow_mod(&self.q, &self.p).is_one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn toy_group_matches_direct_computation() {
        let toy = GroupParams::toy();
        // 2^11 by repeated multiplication
        let mut acc = 1u64;
        for _ in 0..11 {
            acc = acc * 2 % 23;
        }
        assert_eq!(acc, 1);
        assert_eq!(toy.g.pow_mod(&toy.q, &toy.p), 1);
        assert_eq!(22 % 11, 0);
        assert!(toy.validate());
    }

    #[test]
    fn big_toy_agrees_with_word_toy() {
        let small = GroupParams::toy();
        let big = GroupParams::generate(GroupProfile::Toy);
        for base in 1..23u64 {
            for e in 0..11u64 {
                let a = small.exp(&base, &e);
                let b = big.exp(&BigUint::from(base), &BigUint::from(e));
                assert_eq!(BigUint::from(a), b);
            }
        }
    }

    #[test]
    fn toy_subgroup_is_the_quadratic_residues() {
        let toy = GroupParams::toy();
        let members: Vec<u64> = (1..23).filter(|x| toy.contains(x)).collect();
        let mut residues: Vec<u64> = (1..23u64).map(|x| x * x % 23).collect();
        residues.sort();
        residues.dedup();
        assert_eq!(members, residues);
        assert_eq!(members.len(), 11);
    }

    #[test]
    fn desk_group_passes_structural_checks() {
        let desk = GroupParams::generate(GroupProfile::Desk);
        assert_eq!(desk.p.bits(), 1024);
        assert_eq!(desk.q.bits(), 160);
        assert!(desk.validate());
        assert_eq!(desk.element_width(), 128);
        assert_eq!(desk.profile(), Some(GroupProfile::Desk));
    }

    #[test]
    fn fixed_width_encoding() {
        assert_eq!(5u64.to_be_fixed(3), vec![0, 0, 5]);
        assert_eq!(<u64 as GroupInt>::from_be(&[0, 1, 0]), Some(256));
        let big = BigUint::from(0x0102u32);
        assert_eq!(big.to_be_fixed(4), vec![0, 0, 1, 2]);
        let toy = GroupParams::generate(GroupProfile::Toy);
        assert_eq!(toy.element_width(), 1);
        assert_eq!(toy.decode(&[0]), None);
        assert_eq!(toy.decode(&[23]), None);
        assert_eq!(toy.decode(&[4]), Some(BigUint::from(4u32)));
    }

    #[test]
    fn sampling_stays_in_range() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let toy = GroupParams::toy();
        for _ in 0..1000 {
            let e = toy.random_nonzero_exponent(&mut rng);
            assert!((1..11).contains(&e));
        }
    }
}
