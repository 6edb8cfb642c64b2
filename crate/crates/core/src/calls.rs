//! Encodings of method parameters and results carried in call slots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::WireError;
use crate::ids::{ClassId, DomainId, Epoch, Method, Timestamp};
use crate::symmetric::SymmetricKey;
use crate::wire::{Reader, MAX_ACCESS_ENTRIES, MAX_PAYLOAD};
use crate::{EncryptedTagId, Group};

/// Field name to value map held by a data object.
pub type Payload = BTreeMap<String, Vec<u8>>;

/// One access-set entry as exchanged by the re-encryption methods.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdRecord {
    pub domain: DomainId,
    pub epoch: Epoch,
    pub encid: EncryptedTagId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MethodArgs {
    /// `time` is the caller's clock; the tag advances `now` to it.
    TakeTagOwnership { domain: DomainId, encid: EncryptedTagId, epoch: Epoch, access_key: SymmetricKey, time: Timestamp },
    TransferTagOwnership,
    RelinquishTagOwnership,
    GrantTagAccess { domain: DomainId },
    AcceptTagAccess { domain: DomainId, encid: EncryptedTagId, epoch: Epoch, access_key: SymmetricKey },
    RevokeTagAccess { domain: DomainId },
    ReencryptGetIds,
    ReencryptPutIds { records: Vec<IdRecord> },
    InstallObject { class: ClassId, key: SymmetricKey, payload: Payload },
    DeleteObject { class: ClassId },
    UpdateObject { payload: Payload },
    UpdateClassKey { key: SymmetricKey },
    Read { field: String },
    Write { field: String, value: Vec<u8> },
}

impl MethodArgs {
    pub fn method(&self) -> Method {
        match self {
            MethodArgs::TakeTagOwnership { .. } => Method::TakeTagOwnership,
            MethodArgs::TransferTagOwnership => Method::TransferTagOwnership,
            MethodArgs::RelinquishTagOwnership => Method::RelinquishTagOwnership,
            MethodArgs::GrantTagAccess { .. } => Method::GrantTagAccess,
            MethodArgs::AcceptTagAccess { .. } => Method::AcceptTagAccess,
            MethodArgs::RevokeTagAccess { .. } => Method::RevokeTagAccess,
            MethodArgs::ReencryptGetIds => Method::ReencryptGetIds,
            MethodArgs::ReencryptPutIds { .. } => Method::ReencryptPutIds,
            MethodArgs::InstallObject { .. } => Method::InstallObject,
            MethodArgs::DeleteObject { .. } => Method::DeleteObject,
            MethodArgs::UpdateObject { .. } => Method::UpdateObject,
            MethodArgs::UpdateClassKey { .. } => Method::UpdateClassKey,
            MethodArgs::Read { .. } => Method::Read,
            MethodArgs::Write { .. } => Method::Write,
        }
    }

    pub fn encode(&self, group: &Group) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::new();
        match self {
            MethodArgs::TakeTagOwnership { domain, encid, epoch, access_key, time } => {
                out.extend_from_slice(&domain.0);
                out.extend_from_slice(&encid.encode(group));
                out.extend_from_slice(&epoch.to_be_bytes());
                out.extend_from_slice(&access_key.0);
                out.extend_from_slice(&time.to_be_bytes());
            }
            MethodArgs::AcceptTagAccess { domain, encid, epoch, access_key } => {
                out.extend_from_slice(&domain.0);
                out.extend_from_slice(&encid.encode(group));
                out.extend_from_slice(&epoch.to_be_bytes());
                out.extend_from_slice(&access_key.0);
            }
            MethodArgs::GrantTagAccess { domain } | MethodArgs::RevokeTagAccess { domain } => {
                out.extend_from_slice(&domain.0);
            }
            MethodArgs::TransferTagOwnership | MethodArgs::RelinquishTagOwnership | MethodArgs::ReencryptGetIds => {}
            MethodArgs::ReencryptPutIds { records } => out = encode_id_records(records, group)?,
            MethodArgs::InstallObject { class, key, payload } => {
                out.extend_from_slice(&class.0);
                out.extend_from_slice(&key.0);
                out.extend_from_slice(&encode_payload(payload)?);
            }
            MethodArgs::DeleteObject { class } => out.extend_from_slice(&class.0),
            MethodArgs::UpdateObject { payload } => out = encode_payload(payload)?,
            MethodArgs::UpdateClassKey { key } => out.extend_from_slice(&key.0),
            MethodArgs::Read { field } => push_name(&mut out, field)?,
            MethodArgs::Write { field, value } => {
                push_name(&mut out, field)?;
                push_value(&mut out, value)?;
            }
        }
        Ok(out)
    }

    pub fn decode(method: Method, bytes: &[u8], group: &Group) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let encid_len = 4 * group.element_width();
        let encid = |r: &mut Reader| {
            EncryptedTagId::decode(group, r.take(encid_len)?).ok_or(WireError::Malformed("encrypted id"))
        };
        let args = match method {
            Method::TakeTagOwnership => MethodArgs::TakeTagOwnership {
                domain: DomainId(r.array()?),
                encid: encid(&mut r)?,
                epoch: r.u32()?,
                access_key: SymmetricKey(r.array()?),
                time: r.u64()?,
            },
            Method::AcceptTagAccess => MethodArgs::AcceptTagAccess {
                domain: DomainId(r.array()?),
                encid: encid(&mut r)?,
                epoch: r.u32()?,
                access_key: SymmetricKey(r.array()?),
            },
            Method::TransferTagOwnership => MethodArgs::TransferTagOwnership,
            Method::RelinquishTagOwnership => MethodArgs::RelinquishTagOwnership,
            Method::GrantTagAccess => MethodArgs::GrantTagAccess { domain: DomainId(r.array()?) },
            Method::RevokeTagAccess => MethodArgs::RevokeTagAccess { domain: DomainId(r.array()?) },
            Method::ReencryptGetIds => MethodArgs::ReencryptGetIds,
            Method::ReencryptPutIds => MethodArgs::ReencryptPutIds { records: decode_id_records(r.rest(), group)? },
            Method::InstallObject => MethodArgs::InstallObject {
                class: ClassId(r.array()?),
                key: SymmetricKey(r.array()?),
                payload: decode_payload(r.rest())?,
            },
            Method::DeleteObject => MethodArgs::DeleteObject { class: ClassId(r.array()?) },
            Method::UpdateObject => MethodArgs::UpdateObject { payload: decode_payload(r.rest())? },
            Method::UpdateClassKey => MethodArgs::UpdateClassKey { key: SymmetricKey(r.array()?) },
            Method::Read => MethodArgs::Read { field: take_name(&mut r)? },
            Method::Write => MethodArgs::Write { field: take_name(&mut r)?, value: take_value(&mut r)? },
        };
        r.finish()?;
        Ok(args)
    }
}

fn push_name(out: &mut Vec<u8>, name: &str) -> Result<(), WireError> {
    let len = u8::try_from(name.len()).map_err(|_| WireError::Malformed("field name too long"))?;
    out.push(len);
    out.extend_from_slice(name.as_bytes());
    Ok(())
}

fn push_value(out: &mut Vec<u8>, value: &[u8]) -> Result<(), WireError> {
    if value.len() > MAX_PAYLOAD {
        return Err(WireError::Oversized(value.len()));
    }
    out.extend_from_slice(&(value.len() as u16).to_be_bytes());
    out.extend_from_slice(value);
    Ok(())
}

fn take_name(r: &mut Reader) -> Result<String, WireError> {
    let len = r.u8()? as usize;
    String::from_utf8(r.take(len)?.to_vec()).map_err(|_| WireError::Malformed("field name"))
}

fn take_value(r: &mut Reader) -> Result<Vec<u8>, WireError> {
    let len = r.u16()? as usize;
    Ok(r.take(len)?.to_vec())
}

/// `count (1) || (name_len (1) || name || value_len (2) || value)*`, at most [`MAX_PAYLOAD`] bytes.
pub fn encode_payload(payload: &Payload) -> Result<Vec<u8>, WireError> {
    let count = u8::try_from(payload.len()).map_err(|_| WireError::Malformed("too many fields"))?;
    let mut out = vec![count];
    for (name, value) in payload {
        push_name(&mut out, name)?;
        push_value(&mut out, value)?;
    }
    if out.len() > MAX_PAYLOAD {
        return Err(WireError::Oversized(out.len()));
    }
    Ok(out)
}

pub fn decode_payload(bytes: &[u8]) -> Result<Payload, WireError> {
    let mut r = Reader::new(bytes);
    let count = r.u8()?;
    let mut payload = Payload::new();
    for _ in 0..count {
        let name = take_name(&mut r)?;
        let value = take_value(&mut r)?;
        payload.insert(name, value);
    }
    r.finish()?;
    Ok(payload)
}

/// `count (1) || (domain (16) || epoch (4) || encid)*`.
pub fn encode_id_records(records: &[IdRecord], group: &Group) -> Result<Vec<u8>, WireError> {
    if records.len() > MAX_ACCESS_ENTRIES {
        return Err(WireError::Oversized(records.len()));
    }
    let mut out = vec![records.len() as u8];
    for rec in records {
        out.extend_from_slice(&rec.domain.0);
        out.extend_from_slice(&rec.epoch.to_be_bytes());
        out.extend_from_slice(&rec.encid.encode(group));
    }
    Ok(out)
}

/// Decodes an id list. Records whose elements are out of range are returned
/// as `None` so the caller can apply the valid ones.
pub fn decode_id_records_lenient(bytes: &[u8], group: &Group) -> Result<Vec<(DomainId, Epoch, Option<EncryptedTagId>)>, WireError> {
    let mut r = Reader::new(bytes);
    let count = r.u8()? as usize;
    if count > MAX_ACCESS_ENTRIES {
        return Err(WireError::Oversized(count));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let domain = DomainId(r.array()?);
        let epoch = r.u32()?;
        let encid = EncryptedTagId::decode(group, r.take(4 * group.element_width())?);
        out.push((domain, epoch, encid));
    }
    r.finish()?;
    Ok(out)
}

pub fn decode_id_records(bytes: &[u8], group: &Group) -> Result<Vec<IdRecord>, WireError> {
    decode_id_records_lenient(bytes, group)?
        .into_iter()
        .map(|(domain, epoch, encid)| {
            encid.map(|encid| IdRecord { domain, epoch, encid }).ok_or(WireError::Malformed("encrypted id"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupProfile;
    use num_bigint::BigUint;
    use proptest::prelude::*;

    fn toy() -> Group {
        Group::generate(GroupProfile::Toy)
    }

    fn encid(n: u32) -> EncryptedTagId {
        let e = |x: u32| BigUint::from(x);
        EncryptedTagId { u: e(n), v: e(2), y: e(3), z: e(4) }
    }

    #[test]
    fn every_method_roundtrips() {
        let g = toy();
        let d = DomainId::from_name("D");
        let mut payload = Payload::new();
        payload.insert("serial".into(), b"SN-1".to_vec());
        let all = vec![
            MethodArgs::TakeTagOwnership { domain: d, encid: encid(6), epoch: 3, access_key: SymmetricKey([1; 16]), time: 9 },
            MethodArgs::TransferTagOwnership,
            MethodArgs::RelinquishTagOwnership,
            MethodArgs::GrantTagAccess { domain: d },
            MethodArgs::AcceptTagAccess { domain: d, encid: encid(8), epoch: 0, access_key: SymmetricKey([2; 16]) },
            MethodArgs::RevokeTagAccess { domain: d },
            MethodArgs::ReencryptGetIds,
            MethodArgs::ReencryptPutIds { records: vec![IdRecord { domain: d, epoch: 3, encid: encid(9) }] },
            MethodArgs::InstallObject { class: ClassId::from_name("S"), key: SymmetricKey([3; 16]), payload: payload.clone() },
            MethodArgs::DeleteObject { class: ClassId::from_name("S") },
            MethodArgs::UpdateObject { payload },
            MethodArgs::UpdateClassKey { key: SymmetricKey([4; 16]) },
            MethodArgs::Read { field: "serial".into() },
            MethodArgs::Write { field: "serial".into(), value: b"SN-2".to_vec() },
        ];
        assert_eq!(all.len(), Method::ALL.len());
        for args in all {
            let bytes = args.encode(&g).unwrap();
            assert_eq!(MethodArgs::decode(args.method(), &bytes, &g).unwrap(), args);
        }
    }

    #[test]
    fn out_of_range_records_are_flagged() {
        let g = toy();
        let d = DomainId::from_name("D");
        let mut bytes = encode_id_records(&[IdRecord { domain: d, epoch: 0, encid: encid(6) }], &g).unwrap();
        // u := 0 is outside (0, p)
        bytes[1 + 16 + 4] = 0;
        let lenient = decode_id_records_lenient(&bytes, &g).unwrap();
        assert_eq!(lenient[0].2, None);
        assert!(decode_id_records(&bytes, &g).is_err());
    }

    #[test]
    fn payload_limits_enforced() {
        let mut p = Payload::new();
        p.insert("blob".into(), vec![0; MAX_PAYLOAD]);
        assert!(encode_payload(&p).is_err());
        assert!(decode_payload(&[1, 3, b'a']).is_err());
    }

    proptest! {
        #[test]
        fn payload_roundtrip(fields in proptest::collection::btree_map("[a-z]{1,12}", proptest::collection::vec(any::<u8>(), 0..24), 0..8)) {
            let bytes = encode_payload(&fields).unwrap();
            prop_assert_eq!(decode_payload(&bytes).unwrap(), fields);
        }
    }
}
