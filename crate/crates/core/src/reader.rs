//! Reader side of the protocols.
//!
//! A reader acts for one domain. It holds the domain's master access key and
//! the epoch key pairs it was given; authentication decrypts the tag's
//! identifier with the epoch key the tag names, re-encrypts it under the
//! newest key and runs a symmetric challenge-response with the diversified key.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::calls::{decode_id_records, IdRecord, MethodArgs};
use crate::elgamal::{elgamal_decrypt, encrypt_fresh, keyed_reencrypt, universal_reencrypt};
use crate::error::{AuthError, CallError};
use crate::ids::{ClassId, DomainId, Epoch, Method, Timestamp};
use crate::symmetric::{
    auth_decrypt, auth_encrypt, diversify_key, plain_decrypt, AuthCiphertext, Nonce, PermissionToken, SymmetricKey,
};
use crate::tag::TagState;
use crate::wire::{Frame, Layout, MessageType, Reader, STOP_MARKER};
use crate::{EncryptedTagId, Group, KeyPair, TagId};

/// Something that delivers a frame to a tag and returns its answer, if any.
pub trait TagLink {
    fn exchange(&mut self, frame: Frame) -> Option<Frame>;
}

impl TagLink for TagState {
    fn exchange(&mut self, frame: Frame) -> Option<Frame> {
        self.handle(&frame)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGrant {
    pub class: ClassId,
    pub method: Method,
    pub expiry: Timestamp,
    pub token: PermissionToken,
}

/// Keys and permissions a reader holds for its domain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainState {
    pub domain: DomainId,
    pub group: Group,
    pub master_key: SymmetricKey,
    /// Key pair for each epoch `0..=current`.
    pub epoch_keys: Vec<KeyPair>,
    pub tokens: Vec<TokenGrant>,
}

impl DomainState {
    pub fn current_epoch(&self) -> Epoch {
        (self.epoch_keys.len() - 1) as Epoch
    }

    pub fn current_keys(&self) -> &KeyPair {
        self.epoch_keys.last().expect("at least one epoch")
    }

    /// The longest-lived token for `(class, method)` still valid at `now`.
    pub fn token_for(&self, class: ClassId, method: Method, now: Timestamp) -> Option<&TokenGrant> {
        self.tokens
            .iter()
            .filter(|t| t.class == class && t.method == method && t.expiry > now)
            .max_by_key(|t| t.expiry)
    }

    pub fn access_key_for(&self, t: &TagId) -> SymmetricKey {
        diversify_key(&self.master_key, &self.group, &t.0)
    }

    /// Fresh encrypted identifier for `t` under the current epoch key.
    pub fn encrypt_id<R: RngCore + ?Sized>(&self, t: &TagId, rng: &mut R) -> EncryptedTagId {
        encrypt_fresh(&self.group, t, &self.current_keys().pk, rng).expect("tag ids are group elements")
    }

    fn layout(&self) -> Layout {
        Layout::new(self.group.element_width())
    }
}

/// Reader half of an established session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReaderSession {
    pub key: SymmetricKey,
    /// Message counter `n`.
    pub counter: u64,
    /// Identifier recovered during authentication; unknown for handed-over sessions.
    pub tag_id: Option<TagId>,
    pub open: bool,
}

impl ReaderSession {
    /// Session state received out of band, or the default session of an unowned tag.
    pub fn handed_over(key: SymmetricKey, counter: u64) -> Self {
        ReaderSession { key, counter, tag_id: None, open: true }
    }

    pub fn unauthenticated() -> Self {
        Self::handed_over(SymmetricKey::DEFAULT_SESSION, 0)
    }
}

/// Runs the four-message authentication and key agreement.
///
/// On an internal failure the reader still sends a correctly sized third
/// message with random content before reporting the error.
pub fn authenticate<L: TagLink + ?Sized, R: RngCore + ?Sized>(
    state: &DomainState,
    link: &mut L,
    time: Timestamp,
    rng: &mut R,
) -> Result<ReaderSession, AuthError> {
    let layout = state.layout();
    let group = &state.group;
    let reply = link.exchange(Frame::new(MessageType::Hello, state.domain.0.to_vec())).ok_or(AuthError::NoResponse)?;

    let checked = (|| {
        if reply.kind != MessageType::HelloReply || reply.body.len() != layout.hello_reply_len() {
            return Err(AuthError::Malformed);
        }
        let mut r = Reader::new(&reply.body);
        let encid = EncryptedTagId::decode(group, r.take(layout.encid_len()).expect("length checked"))
            .ok_or(AuthError::Malformed)?;
        let epoch = r.u32().expect("length checked");
        let tag_nonce = Nonce(r.array().expect("length checked"));
        if epoch > state.current_epoch() {
            return Err(AuthError::FutureEpoch { tag: epoch, current: state.current_epoch() });
        }
        let keys = &state.epoch_keys[epoch as usize];
        let t = elgamal_decrypt(group, &encid, &keys.sk).map_err(|_| AuthError::ForeignCiphertext)?;
        // a modified u survives the factor check but leaves the group
        if !group.contains(&t.0) {
            return Err(AuthError::Malformed);
        }
        Ok((t, tag_nonce))
    })();

    let (t, tag_nonce) = match checked {
        Ok(v) => v,
        Err(e) => {
            let mut junk = vec![0u8; layout.body_len(MessageType::AuthRequest)];
            rng.fill_bytes(&mut junk);
            let _ = link.exchange(Frame::new(MessageType::AuthRequest, junk));
            return Err(e);
        }
    };

    let a = group.random_exponent(rng);
    let a_prime = group.random_nonzero_exponent(rng);
    let fresh = keyed_reencrypt(group, &t, &state.current_keys().pk, &a, &a_prime).expect("decrypted ids are group elements");
    let access_key = state.access_key_for(&t);
    let challenge = Nonce::random(rng);
    let reader_half = SymmetricKey::random(rng);

    let mut plain = fresh.encode(group);
    plain.extend_from_slice(&state.current_epoch().to_be_bytes());
    plain.extend_from_slice(&tag_nonce.0);
    plain.extend_from_slice(&challenge.0);
    plain.extend_from_slice(&time.to_be_bytes());
    plain.extend_from_slice(&reader_half.0);
    let request = auth_encrypt(&access_key, &plain, &Nonce::random(rng));

    let reply = link
        .exchange(Frame::new(MessageType::AuthRequest, request.to_bytes()))
        .ok_or(AuthError::NoResponse)?;
    if reply.kind != MessageType::AuthReply || reply.body.len() != layout.body_len(MessageType::AuthReply) {
        return Err(AuthError::Malformed);
    }
    let plain = plain_decrypt(&access_key, &reply.body).map_err(|_| AuthError::Malformed)?;
    if plain[..16] != challenge.0 {
        return Err(AuthError::EchoMismatch);
    }
    let tag_half = SymmetricKey::from_slice(&plain[16..32]).expect("fixed layout");
    Ok(ReaderSession { key: reader_half.xor(&tag_half), counter: 0, tag_id: Some(t), open: true })
}

/// Header and parameters for one method call.
#[derive(Clone, Debug)]
pub struct CallRequest<'a> {
    pub class: ClassId,
    pub args: &'a MethodArgs,
    /// Expiry stated in the header; must match the token's.
    pub expiry: Timestamp,
    pub token: PermissionToken,
}

impl<'a> CallRequest<'a> {
    /// A management method that needs no token.
    pub fn permission_free(args: &'a MethodArgs) -> Self {
        CallRequest { class: ClassId::MANAGEMENT, args, expiry: Timestamp::MAX, token: PermissionToken::NONE }
    }

    pub fn with_token(class: ClassId, args: &'a MethodArgs, expiry: Timestamp, token: PermissionToken) -> Self {
        CallRequest { class, args, expiry, token }
    }
}

/// Sends the call header and parameters and verifies the result.
///
/// Returns the result slot contents; methods without a result yield random bytes.
pub fn call_method<L: TagLink + ?Sized, R: RngCore + ?Sized>(
    session: &mut ReaderSession,
    group: &Group,
    link: &mut L,
    call: &CallRequest<'_>,
    rng: &mut R,
) -> Result<Vec<u8>, CallError> {
    if !session.open {
        return Err(CallError::Closed);
    }
    let layout = Layout::new(group.element_width());
    let args = call.args.encode(group).map_err(|_| CallError::ParamsTooLarge(0))?;
    let slot = layout.fill_slot(&args).ok_or(CallError::ParamsTooLarge(args.len()))?;

    let n = session.counter;
    let mut header = n.to_be_bytes().to_vec();
    header.extend_from_slice(&call.class.0);
    header.extend_from_slice(&call.args.method().id().to_be_bytes());
    header.extend_from_slice(&call.expiry.to_be_bytes());
    header.extend_from_slice(&call.token.0);
    let header = auth_encrypt(&session.key, &header, &Nonce::random(rng));
    // the header has no answer of its own
    let _ = link.exchange(Frame::new(MessageType::CallHeader, header.to_bytes()));

    let mut params = (n + 1).to_be_bytes().to_vec();
    params.extend_from_slice(&slot);
    let params = auth_encrypt(&session.key, &params, &Nonce::random(rng));
    let reply = link.exchange(Frame::new(MessageType::CallParams, params.to_bytes()));

    let verified = (|| {
        let reply = reply.ok_or(CallError::NoResponse)?;
        if reply.kind != MessageType::CallResult {
            return Err(CallError::Rejected);
        }
        let c = AuthCiphertext::from_bytes(&reply.body).map_err(|_| CallError::Rejected)?;
        let plain = auth_decrypt(&session.key, &c).map_err(|_| CallError::Rejected)?;
        let mut r = Reader::new(&plain);
        if r.u64().map_err(|_| CallError::MalformedResult)? != n + 2 {
            return Err(CallError::Rejected);
        }
        layout.read_slot(r.rest()).map(<[u8]>::to_vec).ok_or(CallError::MalformedResult)
    })();
    match verified {
        Ok(result) => {
            session.counter += 3;
            Ok(result)
        }
        Err(e) => {
            session.open = false;
            Err(e)
        }
    }
}

/// Sends the authenticated stop message. Closing twice is a no-op.
pub fn close_session<L: TagLink + ?Sized, R: RngCore + ?Sized>(session: &mut ReaderSession, link: &mut L, rng: &mut R) {
    if !session.open {
        return;
    }
    let stop = auth_encrypt(&session.key, &STOP_MARKER, &Nonce::random(rng));
    let _ = link.exchange(Frame::new(MessageType::Stop, stop.to_bytes()));
    session.open = false;
}

/// Becomes owner of an unowned tag whose identifier was learned out of band.
pub fn take_tag_ownership<L: TagLink + ?Sized, R: RngCore + ?Sized>(
    state: &DomainState,
    session: &mut ReaderSession,
    link: &mut L,
    t: &TagId,
    time: Timestamp,
    rng: &mut R,
) -> Result<(), CallError> {
    let args = MethodArgs::TakeTagOwnership {
        domain: state.domain,
        encid: state.encrypt_id(t, rng),
        epoch: state.current_epoch(),
        access_key: state.access_key_for(t),
        time,
    };
    call_method(session, &state.group, link, &CallRequest::permission_free(&args), rng)?;
    // the tag drops back to the default session afterwards
    session.open = false;
    Ok(())
}

/// Completes a grant using the owner's session handed over out of band.
pub fn accept_tag_access<L: TagLink + ?Sized, R: RngCore + ?Sized>(
    state: &DomainState,
    session: &mut ReaderSession,
    link: &mut L,
    t: &TagId,
    rng: &mut R,
) -> Result<(), CallError> {
    let args = MethodArgs::AcceptTagAccess {
        domain: state.domain,
        encid: state.encrypt_id(t, rng),
        epoch: state.current_epoch(),
        access_key: state.access_key_for(t),
    };
    call_method(session, &state.group, link, &CallRequest::permission_free(&args), rng)?;
    session.open = false;
    Ok(())
}

/// Fetches every encrypted identifier on the tag, re-randomizes each with
/// its own re-encryption factor and writes them back. Needs no private keys.
pub fn owner_reencrypt_all<L: TagLink + ?Sized, R: RngCore + ?Sized>(
    session: &mut ReaderSession,
    group: &Group,
    link: &mut L,
    rng: &mut R,
) -> Result<Vec<IdRecord>, CallError> {
    let get = MethodArgs::ReencryptGetIds;
    let raw = call_method(session, group, link, &CallRequest::permission_free(&get), rng)?;
    let records = decode_id_records(&raw, group).map_err(|_| CallError::MalformedResult)?;
    let refreshed: Vec<IdRecord> = records
        .into_iter()
        .map(|rec| {
            let a = group.random_exponent(rng);
            let a_prime = group.random_nonzero_exponent(rng);
            IdRecord { encid: universal_reencrypt(group, &rec.encid, &a, &a_prime), ..rec }
        })
        .collect();
    let put = MethodArgs::ReencryptPutIds { records: refreshed.clone() };
    call_method(session, group, link, &CallRequest::permission_free(&put), rng)?;
    Ok(refreshed)
}
