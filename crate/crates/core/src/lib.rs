//! Fine-grained access control for RFID tags.
//!
//! Tags hold an access set of per-domain encrypted identifiers and
//! diversified keys, plus a store of objects whose methods are guarded by
//! permission tokens. Readers authenticate with symmetric keys and refresh
//! the encrypted identifier using ElGamal universal re-encryption. A back
//! office rotates epoch keys when readers are reported stolen.

pub mod backoffice;
pub mod calls;
pub mod counters;
pub mod elgamal;
pub mod error;
pub mod group;
pub mod ids;
pub mod properties;
pub mod reader;
pub mod scenarios;
pub mod sim;
pub mod snapshot;
pub mod symmetric;
pub mod tag;
pub mod wire;
pub mod world;

use num_bigint::BigUint;

/// Group element or exponent used throughout the protocol.
pub type Element = BigUint;
/// Protocol group parameters.
pub type Group = group::GroupParams<Element>;
/// Word-sized group for the toy parameter set.
pub type ToyGroup = group::GroupParams<u64>;
pub type KeyPair = elgamal::ElGamalKeyPair<Element>;
pub type TagId = elgamal::TagId<Element>;
pub type EncryptedTagId = elgamal::EncryptedTagId<Element>;
