//! The back office: domains, readers, epochs, class keys and permissions.
//!
//! Readers receive their key material from here. Reporting a reader stolen
//! starts a new epoch for its domain; the new key pair goes to the
//! remaining readers only. The back office also carries the out-of-band
//! messages used when handing a session to another domain, and owns the
//! simulated clock.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::BackOfficeError;
use crate::ids::{ClassId, DomainId, Epoch, Method, ReaderId, Timestamp};
use crate::reader::{DomainState, ReaderSession, TokenGrant};
use crate::symmetric::{mint_permission_token, PermissionToken, SymmetricKey};
use crate::{Group, KeyPair, TagId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainRecord {
    pub id: DomainId,
    pub name: String,
    pub master_key: SymmetricKey,
    /// Append-only; index is the epoch.
    pub epoch_keys: Vec<KeyPair>,
    pub readers: Vec<ReaderId>,
    pub tokens: Vec<TokenGrant>,
}

impl DomainRecord {
    pub fn current_epoch(&self) -> Epoch {
        (self.epoch_keys.len() - 1) as Epoch
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderRecord {
    pub id: ReaderId,
    pub domain: DomainId,
    /// The reader's own copy of the domain keys.
    pub state: DomainState,
    /// Epoch in force when the reader was reported stolen.
    pub stolen_at: Option<Epoch>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub id: ClassId,
    pub name: String,
    pub owner: DomainId,
    pub key: SymmetricKey,
}

/// A token as issued, kept for auditing tag-side acceptances.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedToken {
    pub issuer: DomainId,
    pub grantee: DomainId,
    pub grant: TokenGrant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OobPayload {
    /// A live session handed to another domain, with the tag identifier.
    Session { tag_id: TagId, key: SymmetricKey, counter: u64 },
}

impl OobPayload {
    /// Reader-side session state reconstructed from the handoff.
    pub fn into_session(self) -> (TagId, ReaderSession) {
        match self {
            OobPayload::Session { tag_id, key, counter } => {
                let mut s = ReaderSession::handed_over(key, counter);
                s.tag_id = Some(tag_id.clone());
                (tag_id, s)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OobEnvelope {
    pub from: DomainId,
    pub to: DomainId,
    pub payload: OobPayload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackOffice {
    group: Group,
    clock: Timestamp,
    domains: BTreeMap<DomainId, DomainRecord>,
    readers: BTreeMap<ReaderId, ReaderRecord>,
    classes: BTreeMap<ClassId, ClassRecord>,
    /// Class keys each domain holds, by class. Object-level owners hold
    /// keys that differ from the class record's.
    keyrings: BTreeMap<DomainId, BTreeMap<ClassId, SymmetricKey>>,
    issued: Vec<IssuedToken>,
    oob: BTreeMap<DomainId, VecDeque<OobEnvelope>>,
    next_reader: u32,
    rng: ChaCha20Rng,
}

impl BackOffice {
    pub fn new(group: Group, seed: u64) -> Self {
        BackOffice {
            group,
            clock: 1,
            domains: BTreeMap::new(),
            readers: BTreeMap::new(),
            classes: BTreeMap::new(),
            keyrings: BTreeMap::new(),
            issued: Vec::new(),
            oob: BTreeMap::new(),
            next_reader: 0,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn now(&self) -> Timestamp {
        self.clock
    }

    pub fn advance(&mut self, seconds: Timestamp) -> Timestamp {
        self.clock += seconds;
        self.clock
    }

    /// Advances the clock by one second and returns the new time, so that
    /// every authentication asserts a strictly later time.
    pub fn tick(&mut self) -> Timestamp {
        self.advance(1)
    }

    pub fn register_domain(&mut self, name: &str) -> Result<DomainId, BackOfficeError> {
        let id = DomainId::from_name(name);
        if self.domains.contains_key(&id) {
            return Err(BackOfficeError::DuplicateDomain(name.to_owned()));
        }
        let record = DomainRecord {
            id,
            name: name.to_owned(),
            master_key: SymmetricKey::random(&mut self.rng),
            epoch_keys: vec![KeyPair::generate(&self.group, &mut self.rng)],
            readers: Vec::new(),
            tokens: Vec::new(),
        };
        self.domains.insert(id, record);
        Ok(id)
    }

    pub fn domain(&self, id: &DomainId) -> Result<&DomainRecord, BackOfficeError> {
        self.domains.get(id).ok_or(BackOfficeError::UnknownDomain)
    }

    pub fn domains(&self) -> impl Iterator<Item = &DomainRecord> {
        self.domains.values()
    }

    pub fn domain_by_name(&self, name: &str) -> Result<DomainId, BackOfficeError> {
        let id = DomainId::from_name(name);
        self.domain(&id).map(|_| id)
    }

    /// Adds a reader holding the domain's current keys and tokens.
    pub fn add_reader(&mut self, domain: &DomainId) -> Result<ReaderId, BackOfficeError> {
        let record = self.domains.get_mut(domain).ok_or(BackOfficeError::UnknownDomain)?;
        let id = ReaderId(self.next_reader);
        self.next_reader += 1;
        record.readers.push(id);
        let state = DomainState {
            domain: *domain,
            group: self.group.clone(),
            master_key: record.master_key,
            epoch_keys: record.epoch_keys.clone(),
            tokens: record.tokens.clone(),
        };
        self.readers.insert(id, ReaderRecord { id, domain: *domain, state, stolen_at: None });
        Ok(id)
    }

    pub fn reader(&self, id: ReaderId) -> Result<&ReaderRecord, BackOfficeError> {
        self.readers.get(&id).ok_or(BackOfficeError::UnknownReader)
    }

    pub fn reader_state(&self, id: ReaderId) -> Result<&DomainState, BackOfficeError> {
        self.reader(id).map(|r| &r.state)
    }

    /// Starts a new epoch for the reader's domain and distributes the new
    /// key pair to every reader not reported stolen.
    ///
    /// The new secret key differs from all earlier ones, so a stolen
    /// reader's keys never validate a refreshed identifier.
    pub fn report_stolen(&mut self, reader: ReaderId) -> Result<Epoch, BackOfficeError> {
        let domain = self.reader(reader)?.domain;
        let record = self.domains.get_mut(&domain).expect("readers belong to registered domains");
        let old_epoch = record.current_epoch();
        let r = self.readers.get_mut(&reader).expect("checked above");
        r.stolen_at.get_or_insert(old_epoch);

        let used: Vec<_> = record.epoch_keys.iter().map(|k| k.sk.clone()).collect();
        if used.len() as u64 >= self.group.q.clone().try_into().unwrap_or(u64::MAX) - 1 {
            return Err(BackOfficeError::EpochsExhausted);
        }
        let keys = loop {
            let k = KeyPair::generate(&self.group, &mut self.rng);
            if !used.contains(&k.sk) {
                break k;
            }
        };
        record.epoch_keys.push(keys.clone());
        let epoch = record.current_epoch();
        for id in &record.readers {
            let r = self.readers.get_mut(id).expect("registered reader");
            if r.stolen_at.is_none() {
                r.state.epoch_keys.push(keys.clone());
            }
        }
        Ok(epoch)
    }

    /// Defines a class owned by `owner` with a fresh class key.
    pub fn define_class(&mut self, owner: &DomainId, name: &str) -> Result<ClassId, BackOfficeError> {
        self.domain(owner)?;
        let id = ClassId::from_name(name);
        if id == ClassId::MANAGEMENT || self.classes.contains_key(&id) {
            return Err(BackOfficeError::DuplicateClass(name.to_owned()));
        }
        let key = SymmetricKey::random(&mut self.rng);
        self.classes.insert(id, ClassRecord { id, name: name.to_owned(), owner: *owner, key });
        self.keyrings.entry(*owner).or_default().insert(id, key);
        Ok(id)
    }

    pub fn class(&self, id: &ClassId) -> Result<&ClassRecord, BackOfficeError> {
        self.classes.get(id).ok_or(BackOfficeError::UnknownClass)
    }

    /// Records a key a domain chose for objects it controls, such as a new
    /// management key or a key it installs into a borrowed object.
    pub fn hold_key(&mut self, domain: &DomainId, class: ClassId, key: SymmetricKey) -> Result<(), BackOfficeError> {
        self.domain(domain)?;
        self.keyrings.entry(*domain).or_default().insert(class, key);
        Ok(())
    }

    /// The key `domain` mints tokens with for `class`. Every domain knows
    /// the default management key.
    pub fn key_for(&self, domain: &DomainId, class: &ClassId) -> Option<SymmetricKey> {
        let held = self.keyrings.get(domain).and_then(|k| k.get(class)).copied();
        match (held, *class == ClassId::MANAGEMENT) {
            (Some(k), _) => Some(k),
            (None, true) => Some(SymmetricKey::DEFAULT_MANAGEMENT),
            (None, false) => None,
        }
    }

    /// Draws a fresh random key, for example to replace a class key on a tag.
    pub fn fresh_key(&mut self) -> SymmetricKey {
        SymmetricKey::random(&mut self.rng)
    }

    /// Mints a token under the issuer's key for `class` and delivers it to
    /// the grantee's live readers.
    pub fn issue_permission(
        &mut self,
        issuer: &DomainId,
        class: ClassId,
        method: Method,
        grantee: &DomainId,
        expiry: Timestamp,
    ) -> Result<PermissionToken, BackOfficeError> {
        self.domain(issuer)?;
        self.domain(grantee)?;
        let key = self.key_for(issuer, &class).ok_or(BackOfficeError::NotClassOwner)?;
        let token = mint_permission_token(&key, method, grantee, expiry);
        let grant = TokenGrant { class, method, expiry, token };
        self.issued.push(IssuedToken { issuer: *issuer, grantee: *grantee, grant: grant.clone() });
        let record = self.domains.get_mut(grantee).expect("checked above");
        record.tokens.push(grant.clone());
        for id in &record.readers {
            let r = self.readers.get_mut(id).expect("registered reader");
            if r.stolen_at.is_none() {
                r.state.tokens.push(grant.clone());
            }
        }
        Ok(token)
    }

    pub fn issued(&self) -> &[IssuedToken] {
        &self.issued
    }

    pub fn oob_send(&mut self, envelope: OobEnvelope) -> Result<(), BackOfficeError> {
        self.domain(&envelope.to)?;
        self.oob.entry(envelope.to).or_default().push_back(envelope);
        Ok(())
    }

    /// Next message for `domain`; each message is delivered once.
    pub fn oob_recv(&mut self, domain: &DomainId) -> Option<OobEnvelope> {
        self.oob.get_mut(domain)?.pop_front()
    }

    pub fn oob_pending(&self, domain: &DomainId) -> usize {
        self.oob.get(domain).map_or(0, VecDeque::len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupProfile;
    use crate::symmetric::mint_permission_token;

    fn office() -> BackOffice {
        BackOffice::new(Group::generate(GroupProfile::Toy), 7)
    }

    #[test]
    fn registration() {
        let mut bo = office();
        let a = bo.register_domain("a").unwrap();
        let b = bo.register_domain("b").unwrap();
        assert_eq!(bo.register_domain("a"), Err(BackOfficeError::DuplicateDomain("a".into())));
        let (ra, rb) = (bo.domain(&a).unwrap(), bo.domain(&b).unwrap());
        assert_eq!(ra.epoch_keys.len(), 1);
        assert_ne!(ra.master_key, rb.master_key);
        let kp = &ra.epoch_keys[0];
        assert_eq!(bo.group().exp_g(&kp.sk), kp.pk);
    }

    #[test]
    fn stolen_readers_stop_receiving_keys() {
        let mut bo = office();
        let d = bo.register_domain("d").unwrap();
        let live = bo.add_reader(&d).unwrap();
        let stolen = bo.add_reader(&d).unwrap();
        assert_eq!(bo.report_stolen(stolen), Ok(1));
        assert_eq!(bo.reader_state(stolen).unwrap().epoch_keys.len(), 1);
        assert_eq!(bo.reader_state(live).unwrap().epoch_keys.len(), 2);
        assert_eq!(bo.report_stolen(live), Ok(2));
        assert_eq!(bo.reader(stolen).unwrap().stolen_at, Some(0));
        assert_eq!(bo.reader(live).unwrap().stolen_at, Some(1));
        assert_eq!(bo.domain(&d).unwrap().epoch_keys.len(), 3);
        let late = bo.add_reader(&d).unwrap();
        assert_eq!(bo.reader_state(late).unwrap().epoch_keys.len(), 3);
        assert_eq!(bo.report_stolen(ReaderId(99)), Err(BackOfficeError::UnknownReader));
    }

    #[test]
    fn epoch_secrets_never_repeat() {
        let mut bo = office();
        let d = bo.register_domain("d").unwrap();
        let r = bo.add_reader(&d).unwrap();
        // the toy group has ten nonzero secrets
        for _ in 0..9 {
            bo.report_stolen(r).unwrap();
        }
        let mut sks: Vec<_> = bo.domain(&d).unwrap().epoch_keys.iter().map(|k| k.sk.clone()).collect();
        sks.sort();
        sks.dedup();
        assert_eq!(sks.len(), 10);
        assert_eq!(bo.report_stolen(r), Err(BackOfficeError::EpochsExhausted));
    }

    #[test]
    fn permissions() {
        let mut bo = office();
        let owner = bo.register_domain("owner").unwrap();
        let other = bo.register_domain("other").unwrap();
        let reader = bo.add_reader(&other).unwrap();
        let class = bo.define_class(&owner, "Service").unwrap();
        assert!(matches!(bo.define_class(&other, "Service"), Err(BackOfficeError::DuplicateClass(_))));
        assert_eq!(
            bo.issue_permission(&other, class, Method::Read, &other, 50),
            Err(BackOfficeError::NotClassOwner)
        );
        let token = bo.issue_permission(&owner, class, Method::Read, &other, 50).unwrap();
        let key = bo.class(&class).unwrap().key;
        assert_eq!(token, mint_permission_token(&key, Method::Read, &other, 50));
        let held = bo.reader_state(reader).unwrap().token_for(class, Method::Read, 10).unwrap();
        assert_eq!(held.token, token);
        assert!(bo.reader_state(reader).unwrap().token_for(class, Method::Read, 50).is_none());
        // management tokens use the default key unless a domain holds its own
        let t = bo.issue_permission(&other, ClassId::MANAGEMENT, Method::InstallObject, &other, 9).unwrap();
        assert_eq!(t, mint_permission_token(&SymmetricKey::DEFAULT_MANAGEMENT, Method::InstallObject, &other, 9));
        assert_eq!(bo.issued().len(), 2);
    }

    #[test]
    fn oob_delivers_once() {
        let mut bo = office();
        let a = bo.register_domain("a").unwrap();
        let b = bo.register_domain("b").unwrap();
        assert_eq!(bo.oob_recv(&b), None);
        let t = TagId::random(bo.group(), &mut ChaCha20Rng::seed_from_u64(1));
        let env = OobEnvelope { from: a, to: b, payload: OobPayload::Session { tag_id: t, key: SymmetricKey([3; 16]), counter: 6 } };
        bo.oob_send(env.clone()).unwrap();
        assert_eq!(bo.oob_pending(&b), 1);
        assert_eq!(bo.oob_recv(&a), None);
        assert_eq!(bo.oob_recv(&b), Some(env));
        assert_eq!(bo.oob_recv(&b), None);
    }

    #[test]
    fn clock_is_monotonic() {
        let mut bo = office();
        let t0 = bo.now();
        assert_eq!(bo.tick(), t0 + 1);
        assert_eq!(bo.advance(10), t0 + 11);
    }
}
