//! ElGamal encryption of tag identifiers with universal re-encryption.
//!
//! An [`EncryptedTagId`] bundles a ciphertext `(u, v) = (t·PK^x, g^x)` with a
//! re-encryption factor `(y, z) = (PK^x', g^x')`, itself an encryption of 1.
//! The factor lets anyone re-randomize the ciphertext without the public key.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::CryptoError;
use crate::group::{GroupInt, GroupParams};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElGamalKeyPair<T> {
    pub sk: T,
    pub pk: T,
}

impl<T: GroupInt> ElGamalKeyPair<T> {
    /// `sk` uniform in `[1, q-1]`, `pk = g^sk`.
    pub fn generate<R: RngCore + ?Sized>(group: &GroupParams<T>, rng: &mut R) -> Self {
        let sk = group.random_nonzero_exponent(rng);
        Self::from_secret(group, sk)
    }

    pub fn from_secret(group: &GroupParams<T>, sk: T) -> Self {
        let pk = group.exp_g(&sk);
        ElGamalKeyPair { sk, pk }
    }
}

/// A tag identifier: an element of the order-`q` subgroup.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TagId<T>(pub T);

impl<T: GroupInt> TagId<T> {
    /// Fresh identifier `g^r` with `r` in `[1, q-1]`; membership in `G` holds by construction.
    pub fn random<R: RngCore + ?Sized>(group: &GroupParams<T>, rng: &mut R) -> Self {
        TagId(group.exp_g(&group.random_nonzero_exponent(rng)))
    }

    pub fn checked(group: &GroupParams<T>, value: T) -> Result<Self, CryptoError> {
        if group.contains(&value) {
            Ok(TagId(value))
        } else {
            Err(CryptoError::NotInGroup)
        }
    }
}

/// `((u, v), (y, z))`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedTagId<T> {
    pub u: T,
    pub v: T,
    pub y: T,
    pub z: T,
}

impl<T: GroupInt> EncryptedTagId<T> {
    pub fn components(&self) -> [&T; 4] {
        [&self.u, &self.v, &self.y, &self.z]
    }

    /// All four components are in `G`.
    pub fn is_well_formed(&self, group: &GroupParams<T>) -> bool {
        self.components().into_iter().all(|c| group.contains(c))
    }

    pub fn encode(&self, group: &GroupParams<T>) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * group.element_width());
        for c in self.components() {
            out.extend_from_slice(&group.encode(c));
        }
        out
    }

    /// Parses four fixed-width elements. Range-checked only, see [`Self::is_well_formed`].
    pub fn decode(group: &GroupParams<T>, bytes: &[u8]) -> Option<Self> {
        let w = group.element_width();
        if bytes.len() != 4 * w {
            return None;
        }
        let mut parts = bytes.chunks_exact(w).map(|c| group.decode(c));
        Some(EncryptedTagId {
            u: parts.next()??,
            v: parts.next()??,
            y: parts.next()??,
            z: parts.next()??,
        })
    }
}

/// `(u, v) = (t·PK^x, g^x)`.
pub fn elgamal_encrypt<T: GroupInt>(
    group: &GroupParams<T>,
    t: &TagId<T>,
    pk: &T,
    x: &T,
) -> Result<(T, T), CryptoError> {
    if !group.contains(&t.0) {
        return Err(CryptoError::NotInGroup);
    }
    let u = group.mul(&t.0, &group.exp(pk, x));
    let v = group.exp_g(x);
    Ok((u, v))
}

/// `(y, z) = (PK^x', g^x')`, an encryption of 1.
pub fn make_reenc_factor<T: GroupInt>(group: &GroupParams<T>, pk: &T, x_prime: &T) -> (T, T) {
    (group.exp(pk, x_prime), group.exp_g(x_prime))
}

/// Fresh encryption of `t` under `pk`: `((t·PK^a, g^a), (PK^a', g^a'))`.
pub fn keyed_reencrypt<T: GroupInt>(
    group: &GroupParams<T>,
    t: &TagId<T>,
    pk: &T,
    a: &T,
    a_prime: &T,
) -> Result<EncryptedTagId<T>, CryptoError> {
    let (u, v) = elgamal_encrypt(group, t, pk, a)?;
    let (y, z) = make_reenc_factor(group, pk, a_prime);
    Ok(EncryptedTagId { u, v, y, z })
}

/// Re-randomizes `encid` using only its bundled factor:
/// `(u·y^a, v·z^a)` and `(y^a', z^a')`.
pub fn universal_reencrypt<T: GroupInt>(
    group: &GroupParams<T>,
    encid: &EncryptedTagId<T>,
    a: &T,
    a_prime: &T,
) -> EncryptedTagId<T> {
    EncryptedTagId {
        u: group.mul(&encid.u, &group.exp(&encid.y, a)),
        v: group.mul(&encid.v, &group.exp(&encid.z, a)),
        y: group.exp(&encid.y, a_prime),
        z: group.exp(&encid.z, a_prime),
    }
}

/// Checks `y = z^sk` and returns `u / v^sk`. A failed factor check means the
/// ciphertext was not produced under this key.
pub fn elgamal_decrypt<T: GroupInt>(
    group: &GroupParams<T>,
    encid: &EncryptedTagId<T>,
    sk: &T,
) -> Result<TagId<T>, CryptoError> {
    if group.exp(&encid.z, sk) != encid.y {
        return Err(CryptoError::WrongKey);
    }
    let v_inv_sk = group.exp(&encid.v, &group.neg_exponent(sk));
    Ok(TagId(group.mul(&encid.u, &v_inv_sk)))
}

/// Convenience: keyed encryption with fresh randomness.
pub fn encrypt_fresh<T: GroupInt, R: RngCore + ?Sized>(
    group: &GroupParams<T>,
    t: &TagId<T>,
    pk: &T,
    rng: &mut R,
) -> Result<EncryptedTagId<T>, CryptoError> {
    let a = group.random_exponent(rng);
    let a_prime = group.random_nonzero_exponent(rng);
    keyed_reencrypt(group, t, pk, &a, &a_prime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    // Brute-force oracle: exponentiation by repeated multiplication in Z_23.
    fn naive_pow(base: u64, e: u64) -> u64 {
        (0..e).fold(1, |acc, _| acc * base % 23)
    }

    #[test]
    fn encrypt_known_answer() {
        let g = GroupParams::toy();
        let kp = ElGamalKeyPair::from_secret(&g, 3);
        assert_eq!(kp.pk, 8);
        assert_eq!(kp.pk, naive_pow(2, 3));
        let (u, v) = elgamal_encrypt(&g, &TagId(4), &kp.pk, &5).unwrap();
        assert_eq!((u, v), (4 * naive_pow(8, 5) % 23, naive_pow(2, 5)));
        assert_eq!((u, v), (18, 9));
    }

    #[test]
    fn encrypt_with_zero_randomness_is_identity() {
        let g = GroupParams::toy();
        assert_eq!(elgamal_encrypt(&g, &TagId(4), &8, &0).unwrap(), (4, 1));
        assert_eq!(make_reenc_factor(&g, &8, &0), (1, 1));
        let e = keyed_reencrypt(&g, &TagId(4), &8, &0, &0).unwrap();
        assert_eq!(e, EncryptedTagId { u: 4, v: 1, y: 1, z: 1 });
    }

    #[test]
    fn encrypt_rejects_non_members() {
        let g = GroupParams::toy();
        // 5 is a quadratic non-residue mod 23
        assert_eq!(elgamal_encrypt(&g, &TagId(5), &8, &1), Err(CryptoError::NotInGroup));
        assert!(keyed_reencrypt(&g, &TagId(5), &8, &1, &1).is_err());
        assert!(TagId::checked(&g, 5).is_err());
        assert!(TagId::checked(&g, 4).is_ok());
    }

    #[test]
    fn factor_known_answer() {
        let g = GroupParams::toy();
        assert_eq!(make_reenc_factor(&g, &8, &2), (18, 4));
        assert_eq!(naive_pow(4, 3), 18);
    }

    #[test]
    fn decrypt_known_answer() {
        let g = GroupParams::toy();
        let encid = EncryptedTagId { u: 18, v: 9, y: 18, z: 4 };
        assert_eq!(elgamal_decrypt(&g, &encid, &3).unwrap(), TagId(4));
        for sk in 1..11 {
            let trivial = EncryptedTagId { u: 4, v: 1, y: 1, z: 1 };
            assert_eq!(elgamal_decrypt(&g, &trivial, &sk).unwrap(), TagId(4));
        }
    }

    #[test]
    fn mismatched_keys_are_rejected() {
        let g = GroupParams::toy();
        for sk in 1..11u64 {
            for other in 1..11u64 {
                if sk == other {
                    continue;
                }
                let pk = naive_pow(2, sk);
                let encid = keyed_reencrypt(&g, &TagId(4), &pk, &3, &1).unwrap();
                assert_eq!(elgamal_decrypt(&g, &encid, &other), Err(CryptoError::WrongKey));
            }
        }
    }

    #[test]
    fn universal_reencrypt_identity_exponents() {
        let g = GroupParams::toy();
        let encid = EncryptedTagId { u: 18, v: 9, y: 18, z: 4 };
        assert_eq!(universal_reencrypt(&g, &encid, &0, &1), encid);
    }

    #[test]
    fn exhaustive_toy_roundtrips() {
        let g = GroupParams::toy();
        let members: Vec<u64> = (1..23).filter(|x| naive_pow(*x, 11) == 1).collect();
        for sk in 1..11u64 {
            let pk = naive_pow(2, sk);
            for &t in &members {
                for x in 0..11 {
                    for xp in 0..11 {
                        let encid = keyed_reencrypt(&g, &TagId(t), &pk, &x, &xp).unwrap();
                        assert_eq!(elgamal_decrypt(&g, &encid, &sk).unwrap().0, t);
                        assert_eq!(encid.y, naive_pow(encid.z, sk));
                        for a in [0, 1, 4, 10] {
                            for ap in [0, 1, 7] {
                                let re = universal_reencrypt(&g, &encid, &a, &ap);
                                assert_eq!(elgamal_decrypt(&g, &re, &sk).unwrap().0, t);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fresh_encryptions_rarely_collide() {
        // Two encryptions collide only if both exponents coincide: probability ~ 1/q^2.
        let g = GroupParams::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let kp = ElGamalKeyPair::generate(&g, &mut rng);
        let mut collisions = 0;
        for _ in 0..1000 {
            let a = encrypt_fresh(&g, &TagId(4), &kp.pk, &mut rng).unwrap();
            let b = encrypt_fresh(&g, &TagId(4), &kp.pk, &mut rng).unwrap();
            if a == b {
                collisions += 1;
            }
        }
        assert!(collisions as f64 / 1000.0 <= 2.0 / 11.0, "{collisions} collisions");
    }

    #[test]
    fn encoding_roundtrip_desk() {
        use crate::group::GroupProfile;
        let g = GroupParams::generate(GroupProfile::Desk);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let kp = ElGamalKeyPair::generate(&g, &mut rng);
        let t = TagId::random(&g, &mut rng);
        let encid = encrypt_fresh(&g, &t, &kp.pk, &mut rng).unwrap();
        let bytes = encid.encode(&g);
        assert_eq!(bytes.len(), 4 * 128);
        let back = EncryptedTagId::decode(&g, &bytes).unwrap();
        assert_eq!(back, encid);
        assert!(back.is_well_formed(&g));
        assert_eq!(elgamal_decrypt(&g, &back, &kp.sk).unwrap(), t);
    }
}
