use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Seconds since an arbitrary epoch. A fresh tag's clock is 0, standing in for minus infinity.
pub type Timestamp = u64;

/// Index into a domain's epoch-key array.
pub type Epoch = u32;

fn name_digest(tag: &[u8], name: &str) -> [u8; 16] {
    let digest = Sha256::new().chain_update(tag).chain_update(name.as_bytes()).finalize();
    let mut out = [0u8; 16];
    out.copy_from_slice(&digest[..16]);
    out
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DomainId(pub [u8; 16]);

impl DomainId {
    pub fn from_name(name: &str) -> Self {
        DomainId(name_digest(b"domain:", name))
    }
}

impl fmt::Debug for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DomainId({})", hex::encode(&self.0[..6]))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub [u8; 16]);

impl ClassId {
    /// The tag management class.
    pub const MANAGEMENT: ClassId = ClassId([0u8; 16]);

    pub fn from_name(name: &str) -> Self {
        ClassId(name_digest(b"class:", name))
    }
}

impl fmt::Debug for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == ClassId::MANAGEMENT {
            f.write_str("ClassId(management)")
        } else {
            write!(f, "ClassId({})", hex::encode(&self.0[..6]))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReaderId(pub u32);

/// Method identifiers. The numeric values are part of the wire format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u32)]
pub enum Method {
    TakeTagOwnership = 0x01,
    TransferTagOwnership = 0x02,
    RelinquishTagOwnership = 0x03,
    GrantTagAccess = 0x04,
    AcceptTagAccess = 0x05,
    RevokeTagAccess = 0x06,
    ReencryptGetIds = 0x07,
    ReencryptPutIds = 0x08,
    InstallObject = 0x09,
    DeleteObject = 0x0a,
    /// Defined on every object, including the management object.
    UpdateObject = 0x10,
    /// Defined on every object, including the management object.
    UpdateClassKey = 0x11,
    Read = 0x20,
    Write = 0x21,
}

impl Method {
    pub const ALL: [Method; 14] = [
        Method::TakeTagOwnership,
        Method::TransferTagOwnership,
        Method::RelinquishTagOwnership,
        Method::GrantTagAccess,
        Method::AcceptTagAccess,
        Method::RevokeTagAccess,
        Method::ReencryptGetIds,
        Method::ReencryptPutIds,
        Method::InstallObject,
        Method::DeleteObject,
        Method::UpdateObject,
        Method::UpdateClassKey,
        Method::Read,
        Method::Write,
    ];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.id() == id)
    }

    /// Management-object methods guarded by ownership or session provenance
    /// instead of a permission token.
    pub fn is_permission_free(self) -> bool {
        matches!(
            self,
            Method::TakeTagOwnership
                | Method::TransferTagOwnership
                | Method::RelinquishTagOwnership
                | Method::GrantTagAccess
                | Method::AcceptTagAccess
                | Method::RevokeTagAccess
                | Method::ReencryptGetIds
                | Method::ReencryptPutIds
        )
    }

    /// Whether `self` may be called on an object of class `class`.
    pub fn defined_on(self, class: ClassId) -> bool {
        match self {
            Method::UpdateObject | Method::UpdateClassKey => true,
            Method::Read | Method::Write => class != ClassId::MANAGEMENT,
            _ => class == ClassId::MANAGEMENT,
        }
    }

    pub fn returns_value(self) -> bool {
        matches!(self, Method::ReencryptGetIds | Method::Read)
    }
}
