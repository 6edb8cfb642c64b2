//! The tag: a single-threaded state machine answering one frame at a time.
//!
//! Whenever a check fails the tag keeps answering with frames of the
//! expected type and length but random content, so an observer cannot tell
//! a rejected run from an accepted one by looking at the traffic.

mod access;
mod methods;

use std::collections::BTreeMap;

use num_bigint::BigUint;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub use access::{AccessEntry, AccessSet, AccessSlot};

use crate::calls::Payload;
use crate::group::GroupInt;
use crate::ids::{ClassId, DomainId, Method, Timestamp};
use crate::symmetric::{
    auth_decrypt, auth_encrypt, mint_permission_token, plain_encrypt, AuthCiphertext, Nonce, PermissionToken,
    SymmetricKey,
};
use crate::wire::{Frame, Layout, MessageType, Reader, STOP_MARKER};
use crate::{EncryptedTagId, Group};

/// An object stored on the tag together with its class key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredObject {
    pub class: ClassId,
    pub key: SymmetricKey,
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Accepting call headers under the current session key (the default
    /// key when no session is established).
    Open,
    /// Hello answered; waiting for the reader's authentication message.
    /// `entry` is `None` when the hello was answered with a decoy.
    AwaitAuth { domain: DomainId, nonce: Nonce, entry: Option<AccessEntry> },
    /// Header accepted; waiting for parameters.
    AwaitParams { class: ClassId, method: Method },
    /// A check failed. Everything until the next hello or a valid stop is
    /// answered with random content.
    Poisoned,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub key: SymmetricKey,
    /// Message counter `m`.
    pub counter: u64,
    /// Authenticated domain.
    pub domain: Option<DomainId>,
    pub phase: Phase,
    /// Incremented whenever a new session begins; used to attribute executions.
    pub serial: u64,
}

impl SessionState {
    fn reset(&mut self) {
        self.key = SymmetricKey::DEFAULT_SESSION;
        self.counter = 0;
        self.domain = None;
        self.phase = Phase::Open;
    }

    fn poison(&mut self) {
        self.key = SymmetricKey::DEFAULT_SESSION;
        self.domain = None;
        self.phase = Phase::Poisoned;
    }
}

impl Default for SessionState {
    fn default() -> Self {
        SessionState {
            key: SymmetricKey::DEFAULT_SESSION,
            counter: 0,
            domain: None,
            phase: Phase::Open,
            serial: 0,
        }
    }
}

/// One successful method execution, recorded for test harnesses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Execution {
    pub session: u64,
    pub counter: u64,
    pub class: ClassId,
    pub method: Method,
    pub caller: Option<DomainId>,
}

/// Internal failure reason. Never sent on the wire.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagEvent {
    pub session: u64,
    pub reason: &'static str,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TagState {
    group: Group,
    /// Estimate of the current time; never decreases.
    now: Timestamp,
    access: AccessSet,
    objects: BTreeMap<ClassId, StoredObject>,
    session: SessionState,
    rng: ChaCha20Rng,
    #[serde(skip)]
    executions: Vec<Execution>,
    #[serde(skip)]
    events: Vec<TagEvent>,
}

impl PartialEq for TagState {
    fn eq(&self, other: &Self) -> bool {
        self.group == other.group
            && self.now == other.now
            && self.access == other.access
            && self.objects == other.objects
            && self.session == other.session
            && self.rng == other.rng
    }
}

impl TagState {
    /// A fresh, unowned tag holding only the management object with its default key.
    pub fn manufacture(group: Group, seed: u64) -> Self {
        let mut objects = BTreeMap::new();
        objects.insert(
            ClassId::MANAGEMENT,
            StoredObject { class: ClassId::MANAGEMENT, key: SymmetricKey::DEFAULT_MANAGEMENT, payload: Payload::new() },
        );
        TagState {
            group,
            now: 0,
            access: AccessSet::default(),
            objects,
            session: SessionState::default(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            executions: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.group.element_width())
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn access(&self) -> &AccessSet {
        &self.access
    }

    pub fn owner(&self) -> Option<DomainId> {
        self.access.owner()
    }

    pub fn objects(&self) -> &BTreeMap<ClassId, StoredObject> {
        &self.objects
    }

    pub fn object(&self, class: &ClassId) -> Option<&StoredObject> {
        self.objects.get(class)
    }

    pub fn session(&self) -> &SessionState {
        &self.session
    }

    pub fn executions(&self) -> &[Execution] {
        &self.executions
    }

    pub fn events(&self) -> &[TagEvent] {
        &self.events
    }

    pub fn clear_logs(&mut self) {
        self.executions.clear();
        self.events.clear();
    }

    /// Handles raw frame bytes. Unparseable input is dropped silently, as a
    /// radio would.
    pub fn handle_bytes(&mut self, bytes: &[u8]) -> Option<Vec<u8>> {
        let frame = Frame::from_bytes(bytes).ok()?;
        self.handle(&frame).map(|f| f.to_bytes())
    }

    pub fn handle(&mut self, frame: &Frame) -> Option<Frame> {
        match frame.kind {
            MessageType::Hello => Some(self.on_hello(&frame.body)),
            MessageType::AuthRequest => Some(self.on_auth_request(&frame.body)),
            MessageType::CallHeader => {
                self.on_call_header(&frame.body);
                None
            }
            MessageType::CallParams => Some(self.on_call_params(&frame.body)),
            MessageType::Stop => {
                self.on_stop(&frame.body);
                None
            }
            // frames only a tag sends
            MessageType::HelloReply | MessageType::AuthReply | MessageType::CallResult => None,
        }
    }

    fn note(&mut self, reason: &'static str) {
        self.events.push(TagEvent { session: self.session.serial, reason });
    }

    fn random_bytes(&mut self, len: usize) -> Vec<u8> {
        let mut out = vec![0u8; len];
        self.rng.fill_bytes(&mut out);
        out
    }

    fn decoy(&mut self, kind: MessageType) -> Frame {
        let len = self.layout().body_len(kind);
        Frame::new(kind, self.random_bytes(len))
    }

    fn on_hello(&mut self, body: &[u8]) -> Frame {
        self.session.reset();
        self.session.serial += 1;
        let nonce = Nonce::random(&mut self.rng);
        let Ok(domain) = <[u8; 16]>::try_from(body).map(DomainId) else {
            self.note("malformed hello");
            self.session.phase = Phase::Poisoned;
            return self.decoy(MessageType::HelloReply);
        };
        match self.access.active(&domain).cloned() {
            Some(entry) => {
                let mut out = entry.encid.encode(&self.group);
                out.extend_from_slice(&entry.epoch.to_be_bytes());
                out.extend_from_slice(&nonce.0);
                self.session.phase = Phase::AwaitAuth { domain, nonce, entry: Some(entry) };
                Frame::new(MessageType::HelloReply, out)
            }
            None => {
                self.note(if self.access.is_pending(&domain) { "hello from pending domain" } else { "hello from unknown domain" });
                let mut out = Vec::with_capacity(self.layout().hello_reply_len());
                // random residues below p; the tag cannot afford to sample true group elements
                for _ in 0..4 {
                    let x = loop {
                        let x = BigUint::random_below(&self.group.p, &mut self.rng);
                        if x > BigUint::from(1u8) {
                            break x;
                        }
                    };
                    out.extend_from_slice(&self.group.encode(&x));
                }
                let hint = self.access.max_epoch();
                out.extend_from_slice(&self.rng.gen_range(0..=hint).to_be_bytes());
                out.extend_from_slice(&nonce.0);
                self.session.phase = Phase::AwaitAuth { domain, nonce, entry: None };
                Frame::new(MessageType::HelloReply, out)
            }
        }
    }

    fn on_auth_request(&mut self, body: &[u8]) -> Frame {
        let phase = std::mem::replace(&mut self.session.phase, Phase::Poisoned);
        let Phase::AwaitAuth { domain, nonce, entry: Some(entry) } = phase else {
            self.note("authentication without a genuine hello");
            return self.decoy(MessageType::AuthReply);
        };
        let plain = AuthCiphertext::from_bytes(body).and_then(|c| auth_decrypt(&entry.access_key, &c));
        // Blocked until proven otherwise: a reader that cannot recognise
        // our identifier must not be able to keep us traceable.
        self.access.set_pending(domain);
        let Ok(plain) = plain else {
            self.note("authentication MAC mismatch");
            return self.decoy(MessageType::AuthReply);
        };
        let Some(req) = parse_auth_request(&plain, &self.group) else {
            self.note("malformed authentication request");
            return self.decoy(MessageType::AuthReply);
        };
        if req.nonce != nonce {
            self.note("stale challenge");
            return self.decoy(MessageType::AuthReply);
        }
        if req.time <= self.now {
            self.note("reader clock not ahead of tag clock");
            return self.decoy(MessageType::AuthReply);
        }
        self.now = req.time;
        self.access.set_active(
            domain,
            AccessEntry { encid: req.encid, epoch: req.epoch, access_key: entry.access_key, owner: entry.owner },
        );
        let tag_half = SymmetricKey::random(&mut self.rng);
        let mut reply = req.challenge.0.to_vec();
        reply.extend_from_slice(&tag_half.0);
        let iv = Nonce::random(&mut self.rng);
        self.session.key = req.reader_half.xor(&tag_half);
        self.session.domain = Some(domain);
        self.session.counter = 0;
        self.session.phase = Phase::Open;
        Frame::new(MessageType::AuthReply, plain_encrypt(&entry.access_key, &reply, &iv))
    }

    fn on_call_header(&mut self, body: &[u8]) {
        match self.session.phase {
            Phase::Open => {}
            Phase::Poisoned => return,
            _ => {
                self.note("call header out of order");
                self.session.poison();
                return;
            }
        }
        match self.verify_header(body) {
            Ok((class, method)) => self.session.phase = Phase::AwaitParams { class, method },
            Err(reason) => {
                self.note(reason);
                self.session.poison();
            }
        }
    }

    fn verify_header(&self, body: &[u8]) -> Result<(ClassId, Method), &'static str> {
        let c = AuthCiphertext::from_bytes(body).map_err(|_| "malformed header")?;
        let plain = auth_decrypt(&self.session.key, &c).map_err(|_| "header MAC mismatch")?;
        let mut r = Reader::new(&plain);
        let parsed = (|| Some((r.u64().ok()?, ClassId(r.array().ok()?), r.u32().ok()?, r.u64().ok()?, r.array().ok()?)))();
        let (counter, class, method_id, expiry, token) = parsed.ok_or("malformed header")?;
        if counter != self.session.counter {
            return Err("header counter mismatch");
        }
        if self.now >= expiry {
            return Err("expired");
        }
        let object = self.objects.get(&class).ok_or("no such object")?;
        let method = Method::from_id(method_id).ok_or("unknown method")?;
        if !method.defined_on(class) {
            return Err("method not defined on class");
        }
        if self.session.domain.is_none() && method != Method::TakeTagOwnership {
            return Err("only ownership can be taken without authentication");
        }
        if method.is_permission_free() {
            return Ok((class, method));
        }
        let caller = self.session.domain.ok_or("permission check without authenticated domain")?;
        let expected = mint_permission_token(&object.key, method, &caller, expiry);
        if PermissionToken(token) != expected {
            return Err("permission token mismatch");
        }
        Ok((class, method))
    }

    fn on_call_params(&mut self, body: &[u8]) -> Frame {
        let Phase::AwaitParams { class, method } = self.session.phase.clone() else {
            if self.session.phase != Phase::Poisoned {
                self.note("parameters without header");
                self.session.poison();
            }
            return self.decoy(MessageType::CallResult);
        };
        let layout = self.layout();
        let args = (|| {
            let c = AuthCiphertext::from_bytes(body).map_err(|_| "malformed parameters")?;
            let plain = auth_decrypt(&self.session.key, &c).map_err(|_| "parameters MAC mismatch")?;
            let mut r = Reader::new(&plain);
            let counter = r.u64().map_err(|_| "malformed parameters")?;
            if counter != self.session.counter + 1 {
                return Err("parameters counter mismatch");
            }
            layout.read_slot(r.rest()).map(<[u8]>::to_vec).ok_or("malformed parameter slot")
        })();
        let outcome = args.and_then(|args| self.execute(class, method, &args));
        let outcome = match outcome {
            Ok(o) => o,
            Err(reason) => {
                self.note(reason);
                self.session.poison();
                return self.decoy(MessageType::CallResult);
            }
        };
        self.executions.push(Execution {
            session: self.session.serial,
            counter: self.session.counter,
            class,
            method,
            caller: self.session.domain,
        });
        let result = match outcome.result {
            Some(r) => r,
            None => self.random_bytes(crate::wire::VOID_RESULT_LEN),
        };
        let mut plain = (self.session.counter + 2).to_be_bytes().to_vec();
        plain.extend_from_slice(&layout.fill_slot(&result).expect("results are bounded by the slot"));
        let iv = Nonce::random(&mut self.rng);
        let reply = auth_encrypt(&self.session.key, &plain, &iv);
        self.session.counter += 3;
        self.session.phase = Phase::Open;
        if outcome.end_session {
            self.session.reset();
        }
        Frame::new(MessageType::CallResult, reply.to_bytes())
    }

    fn on_stop(&mut self, body: &[u8]) {
        let ok = AuthCiphertext::from_bytes(body)
            .and_then(|c| auth_decrypt(&self.session.key, &c))
            .is_ok_and(|plain| plain == STOP_MARKER);
        if ok {
            self.session.reset();
        } else {
            self.note("stop ignored");
        }
    }
}

struct AuthRequest {
    encid: EncryptedTagId,
    epoch: u32,
    nonce: Nonce,
    challenge: Nonce,
    time: Timestamp,
    reader_half: SymmetricKey,
}

fn parse_auth_request(plain: &[u8], group: &Group) -> Option<AuthRequest> {
    let mut r = Reader::new(plain);
    let encid = EncryptedTagId::decode(group, r.take(4 * group.element_width()).ok()?)?;
    let req = AuthRequest {
        encid,
        epoch: r.u32().ok()?,
        nonce: Nonce(r.array().ok()?),
        challenge: Nonce(r.array().ok()?),
        time: r.u64().ok()?,
        reader_half: SymmetricKey(r.array().ok()?),
    };
    r.finish().ok()?;
    Some(req)
}

/// Result of a successful method body.
pub(crate) struct Outcome {
    result: Option<Vec<u8>>,
    /// Reset to the default session after replying.
    end_session: bool,
}
