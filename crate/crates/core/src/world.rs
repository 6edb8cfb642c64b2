//! A simulated deployment: back office, tags and one shared radio channel.
//!
//! Flows that span several domains (ownership transfer, access grants) go
//! through the back office's out-of-band queue, which the channel records
//! as an annotation only.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::backoffice::{BackOffice, OobEnvelope, OobPayload};
use crate::calls::{IdRecord, MethodArgs};
use crate::error::{AuthError, CallError, StepError};
use crate::ids::{ClassId, DomainId, Method, ReaderId};
use crate::reader::{self, CallRequest, ReaderSession};
use crate::sim::{AdversaryPolicy, Channel};
use crate::symmetric::PermissionToken;
use crate::tag::TagState;
use crate::{Group, TagId};

/// Index of a tag in the world.
pub type TagHandle = usize;

/// How long a reader without a suitable token claims its made-up one lasts.
const BLUFF_VALIDITY: u64 = 3600;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct World {
    pub office: BackOffice,
    tags: Vec<TagState>,
    pub channel: Channel,
    rng: ChaCha20Rng,
    /// Calls honest readers issued, per tag and `(class, method)`.
    commands: BTreeMap<(TagHandle, ClassId, Method), u64>,
}

impl World {
    pub fn new(group: Group, seed: u64, policy: AdversaryPolicy) -> Self {
        let mut seeder = ChaCha20Rng::seed_from_u64(seed);
        let office = BackOffice::new(group, seeder.gen());
        World {
            office,
            tags: Vec::new(),
            channel: Channel::new(policy),
            rng: ChaCha20Rng::seed_from_u64(seeder.gen()),
            commands: BTreeMap::new(),
        }
    }

    pub fn group(&self) -> &Group {
        self.office.group()
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    /// Makes a new unowned tag. The identifier is known only to the caller,
    /// as the manufacturer.
    pub fn manufacture_tag(&mut self) -> (TagHandle, TagId) {
        let t = TagId::random(self.office.group(), &mut self.rng);
        let tag = TagState::manufacture(self.office.group().clone(), self.rng.gen());
        self.tags.push(tag);
        (self.tags.len() - 1, t)
    }

    pub fn tag(&self, h: TagHandle) -> &TagState {
        &self.tags[h]
    }

    pub fn tag_mut(&mut self, h: TagHandle) -> &mut TagState {
        &mut self.tags[h]
    }

    pub fn tags(&self) -> &[TagState] {
        &self.tags
    }

    pub fn commands(&self) -> &BTreeMap<(TagHandle, ClassId, Method), u64> {
        &self.commands
    }

    pub fn authenticate(&mut self, reader: ReaderId, h: TagHandle) -> Result<ReaderSession, AuthError> {
        let time = self.office.tick();
        self.channel.set_time(time);
        let state = self.office.reader_state(reader).expect("reader registered with the back office");
        let mut link = self.channel.link(&mut self.tags[h]);
        reader::authenticate(state, &mut link, time, &mut self.rng)
    }

    /// Calls a method, looking up a token in the reader's store when one is needed.
    /// Without a token the reader sends a made-up one, which the tag rejects.
    pub fn call(
        &mut self,
        reader: ReaderId,
        session: &mut ReaderSession,
        h: TagHandle,
        class: ClassId,
        args: &MethodArgs,
    ) -> Result<Vec<u8>, CallError> {
        let method = args.method();
        let now = self.office.now();
        let request = if method.is_permission_free() {
            CallRequest::permission_free(args)
        } else {
            let state = self.office.reader_state(reader).expect("reader registered with the back office");
            match state.token_for(class, method, now) {
                Some(grant) => CallRequest::with_token(class, args, grant.expiry, grant.token),
                None => CallRequest::with_token(class, args, now + BLUFF_VALIDITY, PermissionToken::NONE),
            }
        };
        self.call_with(session, h, &request)
    }

    pub fn call_with(&mut self, session: &mut ReaderSession, h: TagHandle, request: &CallRequest<'_>) -> Result<Vec<u8>, CallError> {
        *self.commands.entry((h, request.class, request.args.method())).or_default() += 1;
        self.channel.set_time(self.office.now());
        let group = self.office.group();
        let mut link = self.channel.link(&mut self.tags[h]);
        reader::call_method(session, group, &mut link, request, &mut self.rng)
    }

    pub fn close(&mut self, session: &mut ReaderSession, h: TagHandle) {
        let mut link = self.channel.link(&mut self.tags[h]);
        reader::close_session(session, &mut link, &mut self.rng);
    }

    /// Takes an unowned tag through the default session.
    pub fn take_ownership(&mut self, reader: ReaderId, h: TagHandle, t: &TagId) -> Result<(), StepError> {
        self.take_ownership_in(reader, h, t, ReaderSession::unauthenticated())
    }

    pub fn take_ownership_in(&mut self, reader: ReaderId, h: TagHandle, t: &TagId, mut session: ReaderSession) -> Result<(), StepError> {
        let time = self.office.tick();
        self.channel.set_time(time);
        *self.commands.entry((h, ClassId::MANAGEMENT, Method::TakeTagOwnership)).or_default() += 1;
        let state = self.office.reader_state(reader)?;
        let mut link = self.channel.link(&mut self.tags[h]);
        reader::take_tag_ownership(state, &mut session, &mut link, t, time, &mut self.rng)?;
        Ok(())
    }

    fn hand_over(&mut self, from: DomainId, to: DomainId, t: TagId, session: &ReaderSession) -> Result<(), StepError> {
        let payload = OobPayload::Session { tag_id: t, key: session.key, counter: session.counter };
        self.office.oob_send(OobEnvelope { from, to, payload })?;
        self.channel.note_oob(format!("session handoff from {from:?} to {to:?}"));
        Ok(())
    }

    /// Next out-of-band handoff waiting for `domain`.
    pub fn receive(&mut self, domain: &DomainId) -> Result<(TagId, ReaderSession), StepError> {
        let env = self.office.oob_recv(domain).ok_or(StepError::NoHandoff)?;
        Ok(env.payload.into_session())
    }

    /// Owner side of a transfer: authenticates, clears the access set and
    /// hands the still-open session to `to`.
    pub fn transfer_ownership(&mut self, owner: ReaderId, h: TagHandle, to: &DomainId) -> Result<(), StepError> {
        let from = self.office.reader(owner)?.domain;
        let mut session = self.authenticate(owner, h)?;
        let t = session.tag_id.clone().expect("authenticated sessions know the tag");
        self.call(owner, &mut session, h, ClassId::MANAGEMENT, &MethodArgs::TransferTagOwnership)?;
        self.hand_over(from, *to, t, &session)
    }

    /// Receiving side of a transfer.
    pub fn complete_transfer(&mut self, reader: ReaderId, h: TagHandle) -> Result<(), StepError> {
        let domain = self.office.reader(reader)?.domain;
        let (t, session) = self.receive(&domain)?;
        self.take_ownership_in(reader, h, &t, session)
    }

    /// Owner side of an access grant: grants `to` and hands the session over for the accept.
    pub fn grant_access(&mut self, owner: ReaderId, h: TagHandle, to: &DomainId) -> Result<(), StepError> {
        let from = self.office.reader(owner)?.domain;
        let mut session = self.authenticate(owner, h)?;
        let t = session.tag_id.clone().expect("authenticated sessions know the tag");
        self.call(owner, &mut session, h, ClassId::MANAGEMENT, &MethodArgs::GrantTagAccess { domain: *to })?;
        self.hand_over(from, *to, t, &session)
    }

    pub fn accept_access(&mut self, reader: ReaderId, h: TagHandle) -> Result<(), StepError> {
        let domain = self.office.reader(reader)?.domain;
        let (t, mut session) = self.receive(&domain)?;
        *self.commands.entry((h, ClassId::MANAGEMENT, Method::AcceptTagAccess)).or_default() += 1;
        let state = self.office.reader_state(reader)?;
        let mut link = self.channel.link(&mut self.tags[h]);
        reader::accept_tag_access(state, &mut session, &mut link, &t, &mut self.rng)?;
        Ok(())
    }

    /// Authenticates, runs one management call and closes.
    pub fn manage(&mut self, owner: ReaderId, h: TagHandle, args: &MethodArgs) -> Result<Vec<u8>, StepError> {
        self.run(owner, h, ClassId::MANAGEMENT, args)
    }

    /// Authenticates, runs one call on `class` and closes.
    pub fn run(&mut self, reader: ReaderId, h: TagHandle, class: ClassId, args: &MethodArgs) -> Result<Vec<u8>, StepError> {
        let mut session = self.authenticate(reader, h)?;
        let out = self.call(reader, &mut session, h, class, args);
        self.close(&mut session, h);
        Ok(out?)
    }

    pub fn reencrypt_all(&mut self, owner: ReaderId, h: TagHandle) -> Result<Vec<IdRecord>, StepError> {
        let mut session = self.authenticate(owner, h)?;
        *self.commands.entry((h, ClassId::MANAGEMENT, Method::ReencryptGetIds)).or_default() += 1;
        *self.commands.entry((h, ClassId::MANAGEMENT, Method::ReencryptPutIds)).or_default() += 1;
        let group = self.office.group();
        let mut link = self.channel.link(&mut self.tags[h]);
        let out = reader::owner_reencrypt_all(&mut session, group, &mut link, &mut self.rng);
        reader::close_session(&mut session, &mut link, &mut self.rng);
        Ok(out?)
    }

    /// Tag executions that no honest command accounts for, per tag and `(class, method)`.
    pub fn unexplained_executions(&self) -> Vec<(TagHandle, ClassId, Method, u64)> {
        let mut seen: BTreeMap<(TagHandle, ClassId, Method), u64> = BTreeMap::new();
        for (h, tag) in self.tags.iter().enumerate() {
            for e in tag.executions() {
                *seen.entry((h, e.class, e.method)).or_default() += 1;
            }
        }
        seen.into_iter()
            .filter_map(|(k, n)| {
                let issued = self.commands.get(&k).copied().unwrap_or(0);
                (n > issued).then(|| (k.0, k.1, k.2, n - issued))
            })
            .collect()
    }

    /// Token-gated executions whose `(class, method, caller)` matches no issued token.
    pub fn unaudited_executions(&self) -> Vec<(TagHandle, ClassId, Method)> {
        let mut out = Vec::new();
        for (h, tag) in self.tags.iter().enumerate() {
            for e in tag.executions().iter().filter(|e| !e.method.is_permission_free()) {
                let issued = self.office.issued().iter().any(|i| {
                    i.grant.class == e.class && i.grant.method == e.method && Some(i.grantee) == e.caller
                });
                if !issued {
                    out.push((h, e.class, e.method));
                }
            }
        }
        out
    }
}
