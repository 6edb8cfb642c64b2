//! Symmetric primitives: AES-128, CBC, CMAC encrypt-then-MAC, key
//! diversification and permission tokens.

use aes::cipher::block_padding::{NoPadding, Pkcs7};
use aes::cipher::{BlockDecryptMut, BlockEncrypt, BlockEncryptMut, KeyInit, KeyIvInit};
use aes::Aes128;
use cmac::{Cmac, Mac};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::counters;
use crate::error::CryptoError;
use crate::group::{GroupInt, GroupParams};
use crate::ids::{DomainId, Method, Timestamp};

pub const BLOCK: usize = 16;
pub const KEY_LEN: usize = 16;
pub const MAC_LEN: usize = 16;

type CbcEnc = cbc::Encryptor<Aes128>;
type CbcDec = cbc::Decryptor<Aes128>;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymmetricKey(pub [u8; KEY_LEN]);

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SymmetricKey({}..)", hex::encode(&self.0[..4]))
    }
}

impl SymmetricKey {
    /// The well-known session key in force between sessions.
    pub const DEFAULT_SESSION: SymmetricKey = SymmetricKey([0u8; KEY_LEN]);

    /// Class key of a freshly manufactured tag management object.
    pub const DEFAULT_MANAGEMENT: SymmetricKey = SymmetricKey(*b"default-mgmt-key");

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut k = [0u8; KEY_LEN];
        rng.fill_bytes(&mut k);
        SymmetricKey(k)
    }

    pub fn xor(&self, other: &SymmetricKey) -> SymmetricKey {
        let mut out = self.0;
        out.iter_mut().zip(other.0).for_each(|(a, b)| *a ^= b);
        SymmetricKey(out)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(SymmetricKey)
    }
}

/// 128-bit random value: challenges, session-key halves and IVs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Nonce(pub [u8; BLOCK]);

impl Nonce {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut n = [0u8; BLOCK];
        rng.fill_bytes(&mut n);
        Nonce(n)
    }
}

/// Single-block AES-128 encryption.
pub fn block_encrypt(key: &SymmetricKey, block: [u8; BLOCK]) -> [u8; BLOCK] {
    counters::record_symmetric_op();
    let cipher = Aes128::new(&key.0.into());
    let mut b = block.into();
    cipher.encrypt_block(&mut b);
    b.into()
}

/// CBC-MAC with a zero IV over block-aligned input.
fn cbc_mac(key: &SymmetricKey, data: &[u8]) -> [u8; BLOCK] {
    debug_assert_eq!(data.len() % BLOCK, 0);
    data.chunks_exact(BLOCK).fold([0u8; BLOCK], |chain, chunk| {
        let mut x = chain;
        x.iter_mut().zip(chunk).for_each(|(a, b)| *a ^= b);
        block_encrypt(key, x)
    })
}

fn cmac_tag(key: &SymmetricKey, parts: &[&[u8]]) -> Cmac<Aes128> {
    counters::record_symmetric_op();
    let mut mac = <Cmac<Aes128> as Mac>::new_from_slice(&key.0).expect("16-byte key");
    for p in parts {
        mac.update(p);
    }
    mac
}

/// CBC encryption with the given IV. Plaintext is zero padded to a block
/// multiple; output is `iv || ciphertext`. No integrity protection.
pub fn plain_encrypt(key: &SymmetricKey, m: &[u8], iv: &Nonce) -> Vec<u8> {
    counters::record_symmetric_op();
    let mut padded = m.to_vec();
    padded.resize(m.len().div_ceil(BLOCK) * BLOCK, 0);
    let body = CbcEnc::new(&key.0.into(), &iv.0.into()).encrypt_padded_vec_mut::<NoPadding>(&padded);
    let mut out = iv.0.to_vec();
    out.extend_from_slice(&body);
    out
}

/// Inverse of [`plain_encrypt`]. Tampering is not detected: a modified
/// ciphertext decrypts to garbage.
pub fn plain_decrypt(key: &SymmetricKey, c: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if c.len() < BLOCK || !c.len().is_multiple_of(BLOCK) {
        return Err(CryptoError::Malformed("length is not block aligned"));
    }
    counters::record_symmetric_op();
    let (iv, body) = c.split_at(BLOCK);
    let iv: [u8; BLOCK] = iv.try_into().expect("split at block");
    CbcDec::new(&key.0.into(), &iv.into())
        .decrypt_padded_vec_mut::<NoPadding>(body)
        .map_err(|_| CryptoError::Malformed("length is not block aligned"))
}

/// Encrypt-then-MAC ciphertext, serialized as `iv || body || tag`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthCiphertext {
    pub iv: [u8; BLOCK],
    pub body: Vec<u8>,
    pub tag: [u8; MAC_LEN],
}

impl AuthCiphertext {
    /// Serialized length for a plaintext of `plain_len` bytes.
    pub const fn encoded_len(plain_len: usize) -> usize {
        BLOCK + (plain_len / BLOCK + 1) * BLOCK + MAC_LEN
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BLOCK + self.body.len() + MAC_LEN);
        out.extend_from_slice(&self.iv);
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < BLOCK + BLOCK + MAC_LEN || !(bytes.len() - BLOCK - MAC_LEN).is_multiple_of(BLOCK) {
            return Err(CryptoError::Malformed("bad authenticated ciphertext length"));
        }
        let (iv, rest) = bytes.split_at(BLOCK);
        let (body, tag) = rest.split_at(rest.len() - MAC_LEN);
        Ok(AuthCiphertext {
            iv: iv.try_into().expect("split"),
            body: body.to_vec(),
            tag: tag.try_into().expect("split"),
        })
    }
}

// Independent encryption and MAC keys derived from one session or access key.
fn subkeys(key: &SymmetricKey) -> (SymmetricKey, SymmetricKey) {
    let mut enc_label = [0u8; BLOCK];
    enc_label[BLOCK - 1] = 1;
    let mut mac_label = [0u8; BLOCK];
    mac_label[BLOCK - 1] = 2;
    (SymmetricKey(block_encrypt(key, enc_label)), SymmetricKey(block_encrypt(key, mac_label)))
}

/// AES-128-CBC with PKCS#7 padding, then CMAC over `iv || body`.
pub fn auth_encrypt(key: &SymmetricKey, m: &[u8], iv: &Nonce) -> AuthCiphertext {
    let (k_enc, k_mac) = subkeys(key);
    counters::record_symmetric_op();
    let body = CbcEnc::new(&k_enc.0.into(), &iv.0.into()).encrypt_padded_vec_mut::<Pkcs7>(m);
    let tag = cmac_tag(&k_mac, &[&iv.0, &body]).finalize().into_bytes().into();
    AuthCiphertext { iv: iv.0, body, tag }
}

/// Verifies the MAC before decrypting; nothing is released on mismatch.
pub fn auth_decrypt(key: &SymmetricKey, c: &AuthCiphertext) -> Result<Vec<u8>, CryptoError> {
    let (k_enc, k_mac) = subkeys(key);
    cmac_tag(&k_mac, &[&c.iv, &c.body])
        .verify_slice(&c.tag)
        .map_err(|_| CryptoError::MacMismatch)?;
    counters::record_symmetric_op();
    CbcDec::new(&k_enc.0.into(), &c.iv.into())
        .decrypt_padded_vec_mut::<Pkcs7>(&c.body)
        .map_err(|_| CryptoError::Malformed("bad padding"))
}

/// `k_ta = E_kMA(t)`: CBC-MAC of the element's fixed-width big-endian
/// encoding, left padded with zeros to a whole number of blocks.
pub fn diversify_key<T: GroupInt>(master: &SymmetricKey, group: &GroupParams<T>, t: &T) -> SymmetricKey {
    let width = group.element_width().div_ceil(BLOCK) * BLOCK;
    SymmetricKey(cbc_mac(master, &t.to_be_fixed(width)))
}

/// A permission token: `E_kc(f, D, Δ)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PermissionToken(pub [u8; PermissionToken::LEN]);

impl std::fmt::Debug for PermissionToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PermissionToken({}..)", hex::encode(&self.0[..4]))
    }
}

impl PermissionToken {
    pub const LEN: usize = 32;

    /// Placeholder carried in call headers for permission-free methods.
    pub const NONE: PermissionToken = PermissionToken([0u8; Self::LEN]);

    /// Canonical token plaintext: method id (4) || domain (16) || expiry (8), big-endian.
    pub fn encode_claim(method: Method, domain: &DomainId, expiry: Timestamp) -> [u8; 28] {
        let mut out = [0u8; 28];
        out[..4].copy_from_slice(&method.id().to_be_bytes());
        out[4..20].copy_from_slice(&domain.0);
        out[20..].copy_from_slice(&expiry.to_be_bytes());
        out
    }
}

/// Deterministic CBC (zero IV, PKCS#7) encryption of the canonical claim.
/// Tags verify by recomputing and comparing bytes.
pub fn mint_permission_token(
    class_key: &SymmetricKey,
    method: Method,
    domain: &DomainId,
    expiry: Timestamp,
) -> PermissionToken {
    counters::record_symmetric_op();
    let claim = PermissionToken::encode_claim(method, domain, expiry);
    let ct = CbcEnc::new(&class_key.0.into(), &[0u8; BLOCK].into()).encrypt_padded_vec_mut::<Pkcs7>(&claim);
    PermissionToken(ct.try_into().expect("28 bytes pad to 32"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupProfile;
    use num_bigint::BigUint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn unhex<const N: usize>(s: &str) -> [u8; N] {
        hex::decode(s).unwrap().try_into().unwrap()
    }

    #[test]
    fn aes_known_answer() {
        // FIPS-197 appendix C.1
        let key = SymmetricKey(unhex("000102030405060708090a0b0c0d0e0f"));
        let pt = unhex("00112233445566778899aabbccddeeff");
        assert_eq!(block_encrypt(&key, pt), unhex::<16>("69c4e0d86a7b0430d8cdb78070b4c55a"));
        // SP 800-38A F.1.1 (ECB-AES128 block 1)
        let key = SymmetricKey(unhex("2b7e151628aed2a6abf7158809cf4f3c"));
        let pt = unhex("6bc1bee22e409f96e93d7e117393172a");
        assert_eq!(block_encrypt(&key, pt), unhex::<16>("3ad77bb40d7a3660a89ecaf32466ef97"));
    }

    #[test]
    fn cmac_known_answer() {
        // RFC 4493 examples 1 and 2
        let key = SymmetricKey(unhex("2b7e151628aed2a6abf7158809cf4f3c"));
        let empty: [u8; 16] = cmac_tag(&key, &[]).finalize().into_bytes().into();
        assert_eq!(empty, unhex::<16>("bb1d6929e95937287fa37d129b756746"));
        let msg: [u8; 16] = unhex("6bc1bee22e409f96e93d7e117393172a");
        let t: [u8; 16] = cmac_tag(&key, &[&msg]).finalize().into_bytes().into();
        assert_eq!(t, unhex::<16>("070a16b46b4d4144f79bdd9dd04a287c"));
    }

    #[test]
    fn cbc_known_answer() {
        // SP 800-38A F.2.1
        let key = SymmetricKey(unhex("2b7e151628aed2a6abf7158809cf4f3c"));
        let iv = Nonce(unhex("000102030405060708090a0b0c0d0e0f"));
        let pt = hex::decode("6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51").unwrap();
        let c = plain_encrypt(&key, &pt, &iv);
        assert_eq!(hex::encode(&c[16..]), "7649abac8119b246cee98e9b12e9197d5086cb9b507219ee95db113a917678b2");
        assert_eq!(plain_decrypt(&key, &c).unwrap(), pt);
    }

    #[test]
    fn auth_roundtrip_random_lengths() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..100 {
            let key = SymmetricKey::random(&mut rng);
            let len = rng.gen_range(0..=512);
            let mut m = vec![0u8; len];
            rng.fill_bytes(&mut m);
            let c = auth_encrypt(&key, &m, &Nonce::random(&mut rng));
            assert_eq!(c.to_bytes().len(), AuthCiphertext::encoded_len(len));
            let parsed = AuthCiphertext::from_bytes(&c.to_bytes()).unwrap();
            assert_eq!(auth_decrypt(&key, &parsed).unwrap(), m);
        }
    }

    #[test]
    fn auth_empty_message_is_one_padding_block() {
        let key = SymmetricKey([9; 16]);
        let c = auth_encrypt(&key, &[], &Nonce([1; 16]));
        assert_eq!(c.body.len(), BLOCK);
        assert_eq!(auth_decrypt(&key, &c).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn every_single_bit_flip_is_rejected() {
        let key = SymmetricKey([3; 16]);
        let c = auth_encrypt(&key, b"read Service.serial", &Nonce([5; 16]));
        let bytes = c.to_bytes();
        for bit in 0..bytes.len() * 8 {
            let mut tampered = bytes.clone();
            tampered[bit / 8] ^= 1 << (bit % 8);
            let parsed = AuthCiphertext::from_bytes(&tampered).unwrap();
            assert_eq!(auth_decrypt(&key, &parsed), Err(CryptoError::MacMismatch), "bit {bit}");
        }
    }

    #[test]
    fn auth_wrong_key_rejected() {
        let c = auth_encrypt(&SymmetricKey([1; 16]), b"x", &Nonce([0; 16]));
        assert_eq!(auth_decrypt(&SymmetricKey([2; 16]), &c), Err(CryptoError::MacMismatch));
    }

    #[test]
    fn plain_encryption_properties() {
        let key = SymmetricKey([7; 16]);
        let m = [0xabu8; 32];
        let c1 = plain_encrypt(&key, &m, &Nonce([1; 16]));
        let c2 = plain_encrypt(&key, &m, &Nonce([2; 16]));
        assert_ne!(c1, c2);
        assert_eq!(plain_decrypt(&key, &c1).unwrap(), m);
        // tampering goes undetected at this layer
        let mut t = c1.clone();
        t[20] ^= 0x80;
        let garbage = plain_decrypt(&key, &t).unwrap();
        assert_ne!(garbage, m);
        assert_eq!(garbage.len(), m.len());
        assert!(plain_decrypt(&key, &c1[..40]).is_err());
        assert!(plain_decrypt(&key, &[]).is_err());
    }

    #[test]
    fn diversification_is_deterministic_and_spread() {
        let group = GroupParams::generate(GroupProfile::Desk);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let master = SymmetricKey::random(&mut rng);
        let t = BigUint::from(12345u32);
        assert_eq!(diversify_key(&master, &group, &t), diversify_key(&master, &group, &t));
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1000 {
            let t = group.random_exponent(&mut rng);
            assert!(seen.insert(diversify_key(&master, &group, &t)));
        }
    }

    #[test]
    fn diversification_equals_cbc_mac_of_padded_encoding() {
        // toy group: one-byte element left padded to a single block, so the
        // result is a single AES encryption
        let group = GroupParams::generate(GroupProfile::Toy);
        let master = SymmetricKey([0x11; 16]);
        let mut block = [0u8; 16];
        block[15] = 4;
        assert_eq!(diversify_key(&master, &group, &BigUint::from(4u32)).0, block_encrypt(&master, block));
    }

    #[test]
    fn tokens_are_deterministic_and_bound_to_claim() {
        let k = SymmetricKey([4; 16]);
        let d1 = DomainId::from_name("N");
        let d2 = DomainId::from_name("D");
        let a = mint_permission_token(&k, Method::Read, &d1, 100);
        assert_eq!(a, mint_permission_token(&k, Method::Read, &d1, 100));
        assert_ne!(a, mint_permission_token(&k, Method::Read, &d2, 100));
        assert_ne!(a, mint_permission_token(&k, Method::Write, &d1, 100));
        assert_ne!(a, mint_permission_token(&k, Method::Read, &d1, 101));
        assert_ne!(a, mint_permission_token(&SymmetricKey([5; 16]), Method::Read, &d1, 100));
    }

    #[test]
    fn token_layout_is_cbc_of_padded_claim() {
        let k = SymmetricKey([4; 16]);
        let d = DomainId([0xd0; 16]);
        let claim = PermissionToken::encode_claim(Method::Read, &d, 0x0102030405060708);
        assert_eq!(&claim[..4], &[0, 0, 0, 0x20]);
        assert_eq!(&claim[20..], &[1, 2, 3, 4, 5, 6, 7, 8]);
        let mut padded = claim.to_vec();
        padded.extend_from_slice(&[4, 4, 4, 4]);
        let first = block_encrypt(&k, padded[..16].try_into().unwrap());
        let mut second_in: [u8; 16] = padded[16..].try_into().unwrap();
        second_in.iter_mut().zip(first).for_each(|(a, b)| *a ^= b);
        let second = block_encrypt(&k, second_in);
        let token = mint_permission_token(&k, Method::Read, &d, 0x0102030405060708);
        assert_eq!(&token.0[..16], &first);
        assert_eq!(&token.0[16..], &second);
    }
}
