use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{DomainId, Epoch};
use crate::symmetric::SymmetricKey;
use crate::EncryptedTagId;

/// What a tag stores for a domain allowed to access it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessEntry {
    pub encid: EncryptedTagId,
    /// Epoch of the key `encid` was last encrypted under.
    pub epoch: Epoch,
    /// Diversified tag access key.
    pub access_key: SymmetricKey,
    pub owner: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessSlot {
    Active(AccessEntry),
    /// Granted but not yet accepted, or blocked after a failed authentication.
    /// Carries no key material. A blocked owner stays the owner, so the tag
    /// cannot be taken over through the default session.
    Pending { owner: bool },
}

/// Per-domain access table. At most one active entry is the owner.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessSet {
    slots: BTreeMap<DomainId, AccessSlot>,
}

impl AccessSet {
    pub fn get(&self, domain: &DomainId) -> Option<&AccessSlot> {
        self.slots.get(domain)
    }

    pub fn active(&self, domain: &DomainId) -> Option<&AccessEntry> {
        match self.slots.get(domain) {
            Some(AccessSlot::Active(e)) => Some(e),
            _ => None,
        }
    }

    pub fn is_pending(&self, domain: &DomainId) -> bool {
        matches!(self.slots.get(domain), Some(AccessSlot::Pending { .. }))
    }

    pub fn owner(&self) -> Option<DomainId> {
        self.slots.iter().find(|(_, s)| Self::slot_is_owner(s)).map(|(d, _)| *d)
    }

    fn slot_is_owner(slot: &AccessSlot) -> bool {
        match slot {
            AccessSlot::Active(e) => e.owner,
            AccessSlot::Pending { owner } => *owner,
        }
    }

    pub fn active_entries(&self) -> impl Iterator<Item = (&DomainId, &AccessEntry)> {
        self.slots.iter().filter_map(|(d, s)| match s {
            AccessSlot::Active(e) => Some((d, e)),
            AccessSlot::Pending { .. } => None,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DomainId, &AccessSlot)> {
        self.slots.iter()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains(&self, domain: &DomainId) -> bool {
        self.slots.contains_key(domain)
    }

    /// Largest stored epoch, used to pick plausible decoy epochs.
    pub fn max_epoch(&self) -> Epoch {
        self.active_entries().map(|(_, e)| e.epoch).max().unwrap_or(0)
    }

    /// Callers enforce the single-owner invariant; this only asserts it.
    pub fn set_active(&mut self, domain: DomainId, entry: AccessEntry) {
        self.slots.insert(domain, AccessSlot::Active(entry));
        debug_assert!(self.owner_count() <= 1);
    }

    /// Blocks `domain`, keeping its ownership flag if it had one.
    pub fn set_pending(&mut self, domain: DomainId) {
        let owner = self.slots.get(&domain).is_some_and(Self::slot_is_owner);
        self.slots.insert(domain, AccessSlot::Pending { owner });
    }

    pub fn remove(&mut self, domain: &DomainId) -> Option<AccessSlot> {
        self.slots.remove(domain)
    }

    pub fn clear(&mut self) {
        self.slots.clear();
    }

    pub fn active_mut(&mut self, domain: &DomainId) -> Option<&mut AccessEntry> {
        match self.slots.get_mut(domain) {
            Some(AccessSlot::Active(e)) => Some(e),
            _ => None,
        }
    }

    pub fn owner_count(&self) -> usize {
        self.slots.values().filter(|s| Self::slot_is_owner(s)).count()
    }
}
