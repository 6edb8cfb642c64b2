//! Method bodies: the tag management object and the data-record class.

use super::{AccessEntry, Outcome, StoredObject, TagState};
use crate::calls::{decode_id_records_lenient, encode_id_records, encode_payload, IdRecord, MethodArgs};
use crate::ids::{ClassId, Method};
use crate::wire::MAX_ACCESS_ENTRIES;

type MethodResult = Result<Outcome, &'static str>;

fn done() -> MethodResult {
    Ok(Outcome { result: None, end_session: false })
}

impl TagState {
    pub(super) fn execute(&mut self, class: ClassId, method: Method, raw_args: &[u8]) -> MethodResult {
        let caller = self.session.domain;
        let is_owner = caller.is_some() && caller == self.access.owner();

        // Validated per record, so that one bad entry does not void the rest.
        if method == Method::ReencryptPutIds {
            if !is_owner {
                return Err("caller is not the tag owner");
            }
            let records = decode_id_records_lenient(raw_args, &self.group).map_err(|_| "malformed id list")?;
            for (domain, epoch, encid) in records {
                let Some(encid) = encid.filter(|e| e.is_well_formed(&self.group)) else {
                    self.note("rejected re-encrypted id outside the group");
                    continue;
                };
                if let Some(entry) = self.access.active_mut(&domain) {
                    entry.encid = encid;
                    entry.epoch = epoch;
                }
            }
            return done();
        }

        let args = MethodArgs::decode(method, raw_args, &self.group).map_err(|_| "malformed arguments")?;
        match args {
            MethodArgs::TakeTagOwnership { domain, encid, epoch, access_key, time } => {
                if self.access.owner().is_some() {
                    return Err("tag already owned");
                }
                if !self.access.contains(&domain) && self.access.len() >= MAX_ACCESS_ENTRIES {
                    return Err("access set full");
                }
                self.access.set_active(domain, AccessEntry { encid, epoch, access_key, owner: true });
                self.now = self.now.max(time);
                Ok(Outcome { result: None, end_session: true })
            }
            MethodArgs::TransferTagOwnership => {
                if !is_owner {
                    return Err("caller is not the tag owner");
                }
                // the session stays open for the out-of-band handoff
                self.access.clear();
                done()
            }
            MethodArgs::RelinquishTagOwnership => {
                if !is_owner {
                    return Err("caller is not the tag owner");
                }
                self.access.clear();
                Ok(Outcome { result: None, end_session: true })
            }
            MethodArgs::GrantTagAccess { domain } => {
                if !is_owner {
                    return Err("caller is not the tag owner");
                }
                if Some(domain) == caller {
                    return Err("owner cannot re-grant itself");
                }
                if !self.access.contains(&domain) && self.access.len() >= MAX_ACCESS_ENTRIES {
                    return Err("access set full");
                }
                self.access.set_pending(domain);
                done()
            }
            MethodArgs::AcceptTagAccess { domain, encid, epoch, access_key } => {
                // runs inside the owner's session, handed over out of band
                if !is_owner {
                    return Err("not in the tag owner's session");
                }
                if !self.access.is_pending(&domain) {
                    return Err("no pending grant for domain");
                }
                self.access.set_active(domain, AccessEntry { encid, epoch, access_key, owner: false });
                Ok(Outcome { result: None, end_session: true })
            }
            MethodArgs::RevokeTagAccess { domain } => {
                if !is_owner {
                    return Err("caller is not the tag owner");
                }
                if Some(domain) == caller {
                    return Err("owner cannot revoke itself");
                }
                self.access.remove(&domain);
                done()
            }
            MethodArgs::ReencryptGetIds => {
                if !is_owner {
                    return Err("caller is not the tag owner");
                }
                let records: Vec<IdRecord> = self
                    .access
                    .active_entries()
                    .map(|(d, e)| IdRecord { domain: *d, epoch: e.epoch, encid: e.encid.clone() })
                    .collect();
                let bytes = encode_id_records(&records, &self.group).map_err(|_| "id list too long")?;
                Ok(Outcome { result: Some(bytes), end_session: false })
            }
            MethodArgs::ReencryptPutIds { .. } => unreachable!("handled above"),
            MethodArgs::InstallObject { class: new_class, key, payload } => {
                // the permission token was checked against the management key
                if new_class == ClassId::MANAGEMENT {
                    return Err("management object cannot be created");
                }
                if self.objects.contains_key(&new_class) {
                    return Err("object already exists");
                }
                self.objects.insert(new_class, StoredObject { class: new_class, key, payload });
                done()
            }
            MethodArgs::DeleteObject { class: victim } => {
                if !is_owner {
                    return Err("caller is not the tag owner");
                }
                if victim == ClassId::MANAGEMENT {
                    return Err("management object cannot be removed");
                }
                self.objects.remove(&victim).ok_or("no such object")?;
                done()
            }
            MethodArgs::UpdateObject { payload } => {
                let obj = self.objects.get_mut(&class).ok_or("no such object")?;
                obj.payload = payload;
                done()
            }
            MethodArgs::UpdateClassKey { key } => {
                let obj = self.objects.get_mut(&class).ok_or("no such object")?;
                obj.key = key;
                done()
            }
            MethodArgs::Read { field } => {
                let obj = self.objects.get(&class).ok_or("no such object")?;
                let value = obj.payload.get(&field).ok_or("no such field")?;
                Ok(Outcome { result: Some(value.clone()), end_session: false })
            }
            MethodArgs::Write { field, value } => {
                let obj = self.objects.get_mut(&class).ok_or("no such object")?;
                let mut updated = obj.payload.clone();
                updated.insert(field, value);
                encode_payload(&updated).map_err(|_| "payload too large")?;
                obj.payload = updated;
                done()
            }
        }
    }
}
