//! Randomized property harnesses for the protocol's security claims.
//!
//! Each suite runs a number of seeded iterations and reports one or more
//! checks as pass counts against a required minimum, plus transcripts of
//! the first few failing runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::calls::{MethodArgs, Payload};
use crate::counters::{self, OpCounts};
use crate::elgamal;
use crate::error::AuthError;
use crate::ids::{ClassId, DomainId, Method, ReaderId};
use crate::reader::{self, CallRequest, ReaderSession, TagLink};
use crate::sim::{AdversaryPolicy, Direction};
use crate::symmetric::{mint_permission_token, PermissionToken, SymmetricKey, BLOCK};
use crate::tag::{Phase, TagState};
use crate::wire::{frame_shape, Frame, FrameShape, MessageType};
use crate::world::{TagHandle, World};
use crate::{Group, TagId, ToyGroup};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Suite {
    Lemma1,
    Lemma2,
    Lemma3,
    Lemma4,
    Crypto,
    Decoy,
}

impl Suite {
    pub const ALL: [Suite; 6] = [Suite::Lemma1, Suite::Lemma2, Suite::Lemma3, Suite::Lemma4, Suite::Crypto, Suite::Decoy];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Lemma2 => "lemma2",
            Suite::Lemma3 => "lemma3",
            Suite::Lemma4 => "lemma4",
            Suite::Crypto => "crypto",
            Suite::Decoy => "decoy",
        }
    }

    pub fn default_iterations(self) -> usize {
        match self {
            Suite::Lemma1 | Suite::Lemma2 => 500,
            Suite::Lemma3 => 200,
            Suite::Lemma4 => 1000,
            Suite::Crypto => 100,
            Suite::Decoy => 100,
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}` (expected lemma1, lemma2, lemma3, lemma4, crypto or decoy)"))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One measured property: `passed` out of `total`, at least `required` needed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: u64,
    pub total: u64,
    pub required: u64,
}

impl Check {
    pub fn ok(&self) -> bool {
        self.passed >= self.required
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Counterexample {
    pub check: String,
    pub iteration: usize,
    pub detail: String,
    /// JSON-lines transcript of the failing run, when one was recorded.
    pub transcript: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub iterations: usize,
    pub checks: Vec<Check>,
    pub counterexamples: Vec<Counterexample>,
    pub notes: Vec<String>,
    #[serde(serialize_with = "millis")]
    pub elapsed: Duration,
}

fn millis<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u128(d.as_millis())
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::ok)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> u64 {
        self.checks.iter().map(|c| c.total - c.passed.min(c.total)).sum()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {} (seed {}, {} iterations, {:.2?})", self.suite, self.seed, self.iterations, self.elapsed)?;
        for c in &self.checks {
            let mark = if c.ok() { "pass" } else { "FAIL" };
            writeln!(f, "  [{mark}] {}: {}/{} (need {})", c.name, c.passed, c.total, c.required)?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        for cx in &self.counterexamples {
            writeln!(f, "  counterexample in {} at iteration {}: {}", cx.check, cx.iteration, cx.detail)?;
            for line in cx.transcript.lines() {
                writeln!(f, "    {line}")?;
            }
        }
        write!(f, "  {} failures", self.failures())
    }
}

/// Counterexamples kept per check.
const KEEP: usize = 3;

struct Tally {
    checks: Vec<Check>,
    counterexamples: Vec<Counterexample>,
    notes: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Tally { checks: Vec::new(), counterexamples: Vec::new(), notes: Vec::new() }
    }

    fn declare(&mut self, name: &str, required: u64) {
        self.checks.push(Check { name: name.to_owned(), passed: 0, total: 0, required });
    }

    fn entry(&mut self, name: &str) -> &mut Check {
        self.checks.iter_mut().find(|c| c.name == name).expect("check declared")
    }

    fn record(&mut self, name: &str, iteration: usize, ok: bool, detail: impl FnOnce() -> (String, String)) {
        let c = self.entry(name);
        c.total += 1;
        if ok {
            c.passed += 1;
            return;
        }
        if self.counterexamples.iter().filter(|cx| cx.check == name).count() < KEEP {
            let (detail, transcript) = detail();
            self.counterexamples.push(Counterexample { check: name.to_owned(), iteration, detail, transcript });
        }
    }

    /// Sets `required` to the number of runs once all are in.
    fn require_all(&mut self, name: &str) {
        let c = self.entry(name);
        c.required = c.total;
    }

    fn finish(self, suite: Suite, seed: u64, iterations: usize, started: Instant) -> SuiteReport {
        SuiteReport {
            suite,
            seed,
            iterations,
            checks: self.checks,
            counterexamples: self.counterexamples,
            notes: self.notes,
            elapsed: started.elapsed(),
        }
    }
}

pub fn run_suite(suite: Suite, iterations: usize, seed: u64, group: &Group) -> SuiteReport {
    let started = Instant::now();
    let tally = match suite {
        Suite::Lemma1 => lemma1(iterations, seed, group),
        Suite::Lemma2 => lemma2(iterations, seed, group),
        Suite::Lemma3 => lemma3(iterations, seed, group),
        Suite::Lemma4 => lemma4(iterations, seed, group),
        Suite::Crypto => crypto(iterations, seed, group),
        Suite::Decoy => decoy(iterations, seed, group),
    };
    tally.finish(suite, seed, iterations, started)
}

fn iteration_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64)
}

struct Owned {
    world: World,
    m: DomainId,
    rm: ReaderId,
    tag: TagHandle,
    t: TagId,
}

fn owned(group: &Group, seed: u64) -> Owned {
    let mut world = World::new(group.clone(), seed, AdversaryPolicy::Passive);
    let m = world.office.register_domain("owner").expect("fresh world");
    let rm = world.office.add_reader(&m).expect("domain registered");
    let (tag, t) = world.manufacture_tag();
    world.take_ownership(rm, tag, &t).expect("honest take over a passive channel");
    Owned { world, m, rm, tag, t }
}

/// Adds a second domain with access to the tag.
fn with_guest(o: &mut Owned) -> (DomainId, ReaderId) {
    let d = o.world.office.register_domain("guest").expect("fresh name");
    let rd = o.world.office.add_reader(&d).expect("domain registered");
    o.world.grant_access(o.rm, o.tag, &d).expect("owner grants over a passive channel");
    o.world.accept_access(rd, o.tag).expect("guest accepts over a passive channel");
    (d, rd)
}

fn transcript_since(world: &World, from: usize) -> String {
    let mut t = crate::sim::Transcript::default();
    for r in &world.channel.transcript.records()[from..] {
        t.push(r.time, r.direction, &r.frame, r.annotation.clone());
    }
    t.to_json_lines()
}

// ---------------------------------------------------------------------------
// Mutual authentication

const TRANSCRIPT_ATTACK_RUNS: usize = 20;

fn lemma1(n: usize, seed: u64, group: &Group) -> Tally {
    let mut tally = Tally::new();
    tally.declare("honest runs agree", 0);
    tally.declare("adversarial runs never agree on a wrong (t, D)", 0);
    tally.declare("transcript keys never open a call", 0);
    let mut key_splits = 0;

    for i in 0..n {
        let mut o = owned(group, iteration_seed(seed, i));
        let (d, rd) = with_guest(&mut o);
        let (reader, domain) = if i % 2 == 0 { (o.rm, o.m) } else { (rd, d) };
        let mark = o.world.channel.transcript.len();
        let r = o.world.authenticate(reader, o.tag);
        let session = o.world.tag(o.tag).session().clone();
        let ok = matches!(&r, Ok(s) if s.key == session.key && s.tag_id.as_ref() == Some(&o.t) && session.domain == Some(domain));
        tally.record("honest runs agree", i, ok, || (format!("{r:?}"), transcript_since(&o.world, mark)));

        if i < TRANSCRIPT_ATTACK_RUNS {
            if let Ok(s) = &r {
                let frames: Vec<Vec<u8>> = o.world.channel.transcript.records()[mark..]
                    .iter()
                    .filter(|r| matches!(r.direction, Direction::ReaderToTag | Direction::TagToReader))
                    .map(|r| r.frame.clone())
                    .collect();
                let recovered = transcript_attack(&frames, o.world.tag(o.tag), s.counter, o.world.group());
                tally.record("transcript keys never open a call", i, recovered.is_none(), || {
                    (format!("candidate key {recovered:?} opened a call"), transcript_since(&o.world, mark))
                });
            }
        }
    }

    for i in 0..n {
        let mut o = owned(group, iteration_seed(seed ^ 0xad, i));
        let (d, rd) = with_guest(&mut o);
        // give the adversary a store of real frames first
        for r in [o.rm, rd] {
            let mut s = o.world.authenticate(r, o.tag).expect("passive channel");
            o.world.close(&mut s, o.tag);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(iteration_seed(seed ^ 0xad, i));
        let policy = match i % 3 {
            0 => AdversaryPolicy::Tamper { at: rng.gen_range(0..4), bit: rng.gen() },
            1 => AdversaryPolicy::Replay { at: rng.gen_range(0..4) },
            _ => {
                let store = o.world.channel.store();
                let frame = if rng.gen_bool(0.5) && !store.is_empty() {
                    store[rng.gen_range(0..store.len())].to_bytes()
                } else {
                    let mut junk = vec![0u8; rng.gen_range(3..64)];
                    rng.fill_bytes(&mut junk);
                    junk
                };
                AdversaryPolicy::Inject { at: rng.gen_range(0..4), frame }
            }
        };
        o.world.channel.set_policy(policy.clone());
        let (reader, domain) = if rng.gen_bool(0.5) { (o.rm, o.m) } else { (rd, d) };
        let mark = o.world.channel.transcript.len();
        let r = o.world.authenticate(reader, o.tag);
        let session = o.world.tag(o.tag).session().clone();
        let tag_accepts = session.domain.is_some() && session.phase == Phase::Open;
        let bad = match &r {
            Ok(s) if tag_accepts => {
                if s.key != session.key {
                    key_splits += 1;
                }
                s.tag_id.as_ref() != Some(&o.t) || session.domain != Some(domain)
            }
            _ => false,
        };
        tally.record("adversarial runs never agree on a wrong (t, D)", i, !bad, || {
            (format!("{policy:?}: reader {r:?}, tag domain {:?}", session.domain), transcript_since(&o.world, mark))
        });
    }

    for name in ["honest runs agree", "adversarial runs never agree on a wrong (t, D)", "transcript keys never open a call"] {
        tally.require_all(name);
    }
    tally.notes.push(format!(
        "{key_splits} adversarial runs ended with both sides accepting under different session keys (the first call then fails)"
    ));
    tally
}

/// Every key an eavesdropper could read off the frames: all 16-byte windows
/// and the XOR of every pair of block-aligned body chunks.
fn candidate_keys(frames: &[Vec<u8>]) -> BTreeSet<[u8; 16]> {
    let mut out = BTreeSet::new();
    let mut blocks = Vec::new();
    for f in frames {
        for w in f.windows(16) {
            out.insert(<[u8; 16]>::try_from(w).expect("window of 16"));
        }
        if f.len() > 3 {
            blocks.extend(f[3..].chunks_exact(BLOCK).map(|c| <[u8; 16]>::try_from(c).expect("exact chunk")));
        }
    }
    for (i, a) in blocks.iter().enumerate() {
        for b in &blocks[i + 1..] {
            let mut x = [0u8; 16];
            for k in 0..16 {
                x[k] = a[k] ^ b[k];
            }
            out.insert(x);
        }
    }
    out
}

/// Tries each candidate as the session key in a call against a copy of the tag.
fn transcript_attack(frames: &[Vec<u8>], tag: &TagState, counter: u64, group: &Group) -> Option<SymmetricKey> {
    let args = MethodArgs::ReencryptGetIds;
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    candidate_keys(frames).into_iter().map(SymmetricKey).find(|&key| {
        let mut copy = tag.clone();
        let mut session = ReaderSession::handed_over(key, counter);
        reader::call_method(&mut session, group, &mut copy, &CallRequest::permission_free(&args), &mut rng).is_ok()
    })
}

// ---------------------------------------------------------------------------
// Unlinkability: the stored identifier changes on every refresh

fn lemma2(n: usize, seed: u64, group: &Group) -> Tally {
    let mut tally = Tally::new();
    let slack = (2 * n as u64).div_ceil(group_order_u64(group)).max(1);
    tally.declare("encid changes", (n as u64).saturating_sub(slack));
    tally.declare("decrypts to the same tag", 0);

    let mut o = owned(group, seed);
    let (d, _) = with_guest(&mut o);
    for i in 0..n {
        let before = o.world.tag(o.tag).access().clone();
        let mark = o.world.channel.transcript.len();
        let refreshed = if i % 2 == 0 {
            o.world.authenticate(o.rm, o.tag).map(|mut s| o.world.close(&mut s, o.tag)).map_err(|e| e.to_string())
        } else {
            o.world.reencrypt_all(o.rm, o.tag).map(drop).map_err(|e| e.to_string())
        };
        let after = o.world.tag(o.tag).access().clone();
        // authentication refreshes the owner entry; re-encryption refreshes all
        let domains: &[DomainId] = if i % 2 == 0 { &[o.m] } else { &[o.m, d] };
        let stale: Vec<&DomainId> = domains
            .iter()
            .filter(|dom| {
                !matches!((before.active(dom), after.active(dom)),
                    (Some(a), Some(b)) if a.encid.encode(group) != b.encid.encode(group))
            })
            .collect();
        tally.record("encid changes", i, refreshed.is_ok() && stale.is_empty(), || {
            (format!("unchanged {stale:?}: {refreshed:?}"), transcript_since(&o.world, mark))
        });
        let unreadable: Vec<&DomainId> = domains
            .iter()
            .filter(|dom| {
                let keys = &o.world.office.domain(dom).expect("registered").epoch_keys;
                !after.active(dom).is_some_and(|e| {
                    keys.get(e.epoch as usize)
                        .is_some_and(|k| elgamal::elgamal_decrypt(group, &e.encid, &k.sk).as_ref() == Ok(&o.t))
                })
            })
            .collect();
        tally.record("decrypts to the same tag", i, unreadable.is_empty(), || {
            (format!("{unreadable:?} no longer decrypt to the tag"), transcript_since(&o.world, mark))
        });
    }
    let c = tally.entry("encid changes");
    c.required = c.total.saturating_sub(slack);
    tally.require_all("decrypts to the same tag");
    tally.notes.push(format!("allowed identical refreshes: {slack} (about 2/q of the runs)"));
    tally
}

fn group_order_u64(group: &Group) -> u64 {
    u64::try_from(&group.q).unwrap_or(u64::MAX)
}

// ---------------------------------------------------------------------------
// Stolen readers

fn lemma3(n: usize, seed: u64, group: &Group) -> Tally {
    let mut tally = Tally::new();
    tally.declare("stolen reader fails the factor check", 0);
    tally.declare("stolen reader cannot authenticate", 0);

    for i in 0..n {
        let s = iteration_seed(seed, i);
        let mut o = owned(group, s);
        let mut rng = ChaCha20Rng::seed_from_u64(s);
        // move to a random epoch e before the theft
        let spare = o.world.office.add_reader(&o.m).expect("registered");
        for _ in 0..rng.gen_range(0..4) {
            o.world.office.report_stolen(spare).expect("few epochs");
        }
        let stolen = o.world.office.add_reader(&o.m).expect("registered");
        let e = o.world.office.reader_state(stolen).expect("registered").current_epoch();
        o.world.office.report_stolen(stolen).expect("few epochs");
        let mark = o.world.channel.transcript.len();
        let mut live = o.world.authenticate(o.rm, o.tag).expect("live reader over a passive channel");
        o.world.close(&mut live, o.tag);

        let entry = o.world.tag(o.tag).access().active(&o.m).expect("owner entry").clone();
        let keys = &o.world.office.reader_state(stolen).expect("registered").epoch_keys;
        let readable = keys.iter().any(|k| elgamal::elgamal_decrypt(group, &entry.encid, &k.sk).is_ok());
        tally.record("stolen reader fails the factor check", i, entry.epoch == e + 1 && !readable, || {
            (format!("stolen at epoch {e}, tag at epoch {}, readable {readable}", entry.epoch), transcript_since(&o.world, mark))
        });
        let r = o.world.authenticate(stolen, o.tag);
        tally.record("stolen reader cannot authenticate", i, r.is_err(), || {
            ("stolen reader authenticated".into(), transcript_since(&o.world, mark))
        });
    }
    tally.require_all("stolen reader fails the factor check");
    tally.require_all("stolen reader cannot authenticate");
    tally
}

// ---------------------------------------------------------------------------
// Method execution under a replaying adversary

const SESSIONS_PER_WORLD: usize = 10;

fn lemma4(n: usize, seed: u64, group: &Group) -> Tally {
    let mut tally = Tally::new();
    tally.declare("executions match verified calls", 0);
    tally.declare("no (session, counter) executes twice", 0);
    tally.declare("expired tokens rejected", 0);
    tally.declare("every execution has an honest command", 0);
    let (mut issued, mut verified, mut executed) = (0u64, 0u64, 0u64);

    let mut i = 0;
    for w in 0..n.div_ceil(SESSIONS_PER_WORLD) {
        let ws = iteration_seed(seed, w);
        let mut o = owned(group, ws);
        let mut rng = ChaCha20Rng::seed_from_u64(ws);
        let class = o.world.office.define_class(&o.m, "Record").expect("fresh class");
        let key = o.world.office.class(&class).expect("defined").key;
        let far = o.world.office.now() + 1_000_000;
        for (c, m) in [(ClassId::MANAGEMENT, Method::InstallObject), (class, Method::Read), (class, Method::Write)] {
            o.world.office.issue_permission(&o.m, c, m, &o.m, far).expect("owner holds the key");
        }
        let mut payload = Payload::new();
        payload.insert("serial".into(), b"0".to_vec());
        o.world.manage(o.rm, o.tag, &MethodArgs::InstallObject { class, key, payload }).expect("passive install");

        while i < n && i < (w + 1) * SESSIONS_PER_WORLD {
            o.world.channel.set_policy(AdversaryPolicy::Fuzz { seed: iteration_seed(ws, i) });
            let mark = o.world.channel.transcript.len();
            let before = o.world.tag(o.tag).executions().len();
            let mut ok_calls = 0;
            if let Ok(mut s) = o.world.authenticate(o.rm, o.tag) {
                for _ in 0..rng.gen_range(1..=4) {
                    let (c, args) = match rng.gen_range(0..3) {
                        0 => (class, MethodArgs::Read { field: "serial".into() }),
                        1 => (class, MethodArgs::Write { field: "serial".into(), value: vec![rng.gen()] }),
                        _ => (ClassId::MANAGEMENT, MethodArgs::ReencryptGetIds),
                    };
                    issued += 1;
                    if o.world.call(o.rm, &mut s, o.tag, c, &args).is_ok() {
                        ok_calls += 1;
                    }
                }
                o.world.close(&mut s, o.tag);
            }
            let new = &o.world.tag(o.tag).executions()[before..];
            let serials: BTreeSet<u64> = new.iter().map(|e| e.session).collect();
            let ok = new.len() == ok_calls && serials.len() <= 1;
            verified += ok_calls as u64;
            executed += new.len() as u64;
            tally.record("executions match verified calls", i, ok, || {
                (format!("{} executions, {ok_calls} verified", new.len()), transcript_since(&o.world, mark))
            });
            let all = o.world.tag(o.tag).executions();
            let distinct: BTreeSet<(u64, u64)> = all.iter().map(|e| (e.session, e.counter)).collect();
            tally.record("no (session, counter) executes twice", i, distinct.len() == all.len(), || {
                ("duplicate execution".into(), transcript_since(&o.world, mark))
            });

            // an expired token over a clean channel
            o.world.channel.set_policy(AdversaryPolicy::Passive);
            let mark = o.world.channel.transcript.len();
            let before = o.world.tag(o.tag).executions().len();
            let rejected = match o.world.authenticate(o.rm, o.tag) {
                Ok(mut s) => {
                    let now = o.world.tag(o.tag).now();
                    let expiry = now - rng.gen_range(0..=now.min(1000));
                    let token = mint_permission_token(&key, Method::Read, &o.m, expiry);
                    let read = MethodArgs::Read { field: "serial".into() };
                    let r = o.world.call_with(&mut s, o.tag, &CallRequest::with_token(class, &read, expiry, token));
                    o.world.close(&mut s, o.tag);
                    r.is_err() && o.world.tag(o.tag).executions().len() == before
                }
                Err(_) => false,
            };
            tally.record("expired tokens rejected", i, rejected, || {
                ("expired token accepted".into(), transcript_since(&o.world, mark))
            });
            i += 1;
        }
        let unexplained = o.world.unexplained_executions();
        tally.record("every execution has an honest command", w, unexplained.is_empty(), || {
            (format!("{unexplained:?}"), String::new())
        });
    }
    for name in [
        "executions match verified calls",
        "no (session, counter) executes twice",
        "expired tokens rejected",
        "every execution has an honest command",
    ] {
        tally.require_all(name);
    }
    tally.notes.push(format!("{issued} calls issued, {verified} verified by the reader, {executed} executed by the tag"));
    tally
}

// ---------------------------------------------------------------------------
// ElGamal and universal re-encryption

fn naive_pow(base: u64, exp: u64, p: u64) -> u64 {
    (0..exp).fold(1, |acc, _| acc * base % p)
}

fn crypto(n: usize, seed: u64, group: &Group) -> Tally {
    let mut tally = Tally::new();
    let toy = ToyGroup::toy();
    let (p, q, g) = (toy.p, toy.q, toy.g);
    let members: Vec<u64> = (0..q).map(|k| naive_pow(g, k, p)).collect();
    let none = || (String::new(), String::new());

    tally.declare("toy encryption matches the oracle", 0);
    tally.declare("toy decrypt(encrypt) = id", 0);
    tally.declare("toy decrypt(universal(encrypt)) = id", 0);
    tally.declare("toy foreign keys fail the factor check", 0);
    for &t in &members {
        for sk in 0..q {
            let pk = naive_pow(g, sk, p);
            for x in 0..q {
                for x2 in 0..q {
                    let enc = elgamal::keyed_reencrypt(&toy, &elgamal::TagId(t), &pk, &x, &x2).expect("t in G");
                    let expect = [t * naive_pow(pk, x, p) % p, naive_pow(g, x, p), naive_pow(pk, x2, p), naive_pow(g, x2, p)];
                    let got = [enc.u, enc.v, enc.y, enc.z];
                    tally.record("toy encryption matches the oracle", 0, got == expect, || {
                        (format!("t={t} sk={sk} x={x} x'={x2}: {got:?} != {expect:?}"), String::new())
                    });
                    let dec = elgamal::elgamal_decrypt(&toy, &enc, &sk);
                    tally.record("toy decrypt(encrypt) = id", 0, dec == Ok(elgamal::TagId(t)), none);
                    for a in 0..q {
                        for a2 in 0..q {
                            let re = elgamal::universal_reencrypt(&toy, &enc, &a, &a2);
                            let dec = elgamal::elgamal_decrypt(&toy, &re, &sk);
                            tally.record("toy decrypt(universal(encrypt)) = id", 0, dec == Ok(elgamal::TagId(t)), || {
                                (format!("t={t} sk={sk} x={x} x'={x2} a={a} a'={a2}: {dec:?}"), String::new())
                            });
                        }
                    }
                    if x2 == 0 {
                        continue;
                    }
                    for other in (0..q).filter(|&o| o != sk) {
                        let dec = elgamal::elgamal_decrypt(&toy, &enc, &other);
                        tally.record("toy foreign keys fail the factor check", 0, dec.is_err(), || {
                            (format!("t={t} sk={sk} x={x} x'={x2} foreign={other}: {dec:?}"), String::new())
                        });
                    }
                }
            }
        }
    }

    tally.declare("random roundtrips in the protocol group", 0);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for i in 0..n {
        let keys = crate::KeyPair::generate(group, &mut rng);
        let other = crate::KeyPair::generate(group, &mut rng);
        let t = TagId::random(group, &mut rng);
        let enc = elgamal::encrypt_fresh(group, &t, &keys.pk, &mut rng).expect("t in G");
        let re = elgamal::universal_reencrypt(group, &enc, &group.random_exponent(&mut rng), &group.random_nonzero_exponent(&mut rng));
        let ok = elgamal::elgamal_decrypt(group, &enc, &keys.sk).as_ref() == Ok(&t)
            && elgamal::elgamal_decrypt(group, &re, &keys.sk).as_ref() == Ok(&t)
            && (other.sk == keys.sk || elgamal::elgamal_decrypt(group, &re, &other.sk).is_err())
            && re.encode(group) != enc.encode(group)
            && re.is_well_formed(group);
        tally.record("random roundtrips in the protocol group", i, ok, || (format!("{t:?}"), String::new()));
    }
    let names: Vec<String> = tally.checks.iter().map(|c| c.name.clone()).collect();
    for name in names {
        tally.require_all(&name);
    }
    tally
}

// ---------------------------------------------------------------------------
// Decoy frames look like honest ones

/// Link that labels every frame as honest or decoy.
struct Observer<'a> {
    tag: &'a mut TagState,
    frames: Vec<(Frame, bool)>,
    tamper: Option<(MessageType, usize)>,
}

impl<'a> Observer<'a> {
    fn new(tag: &'a mut TagState) -> Self {
        Observer { tag, frames: Vec::new(), tamper: None }
    }

    /// Marks the reader's last authentication request as a decoy.
    fn reader_decoy(&mut self) {
        if let Some(f) = self.frames.iter_mut().rev().find(|(f, _)| f.kind == MessageType::AuthRequest) {
            f.1 = true;
        }
    }
}

impl TagLink for Observer<'_> {
    fn exchange(&mut self, mut frame: Frame) -> Option<Frame> {
        match self.tamper {
            Some((kind, bit)) if kind == frame.kind => {
                let bit = bit % (frame.body.len() * 8);
                frame.body[bit / 8] ^= 1 << (bit % 8);
                self.tamper = None;
            }
            _ => self.frames.push((frame.clone(), false)),
        }
        let reply = self.tag.handle(&frame)?;
        let decoy = matches!(self.tag.session().phase, Phase::Poisoned | Phase::AwaitAuth { entry: None, .. });
        self.frames.push((reply.clone(), decoy));
        Some(reply)
    }
}

fn decoy(n: usize, seed: u64, group: &Group) -> Tally {
    let mut tally = Tally::new();
    let mut honest: BTreeMap<u8, BTreeSet<FrameShape>> = BTreeMap::new();
    let mut decoys: Vec<(usize, FrameShape)> = Vec::new();
    let mut total = 0u64;

    for i in 0..n {
        let s = iteration_seed(seed, i);
        let mut o = owned(group, s);
        let (_, rg) = with_guest(&mut o);
        let stranger = o.world.office.register_domain("stranger").expect("fresh name");
        let rs = o.world.office.add_reader(&stranger).expect("registered");
        let class = o.world.office.define_class(&o.m, "Record").expect("fresh class");
        let key = o.world.office.class(&class).expect("defined").key;
        let far = o.world.office.now() + 1_000_000;
        o.world.office.issue_permission(&o.m, ClassId::MANAGEMENT, Method::InstallObject, &o.m, far).expect("owner key");
        o.world.office.issue_permission(&o.m, class, Method::Read, &o.m, far).expect("owner key");
        let mut payload = Payload::new();
        payload.insert("serial".into(), b"7".to_vec());
        o.world.manage(o.rm, o.tag, &MethodArgs::InstallObject { class, key, payload }).expect("passive install");

        let mut rng = ChaCha20Rng::seed_from_u64(s);
        let state = |r: ReaderId, o: &Owned| o.world.office.reader_state(r).expect("registered").clone();
        let (sm, sg, ss) = (state(o.rm, &o), state(rg, &o), state(rs, &o));
        let grp = o.world.group().clone();
        let read = MethodArgs::Read { field: "serial".into() };
        let token = sm.token_for(class, Method::Read, far - 1).expect("issued").clone();
        let good = CallRequest::with_token(class, &read, token.expiry, token.token);
        let mut time = o.world.office.now();
        let mut obs = Observer::new(o.world.tag_mut(o.tag));

        // honest session with a call
        time += 1;
        let mut sess = reader::authenticate(&sm, &mut obs, time, &mut rng).expect("honest");
        reader::call_method(&mut sess, &grp, &mut obs, &good, &mut rng).expect("honest call");
        reader::close_session(&mut sess, &mut obs, &mut rng);

        // unknown domain: decoy hello reply, junk request, decoy reply
        time += 1;
        if reader::authenticate(&ss, &mut obs, time, &mut rng).is_err() {
            obs.reader_decoy();
        }

        // forged token: decoy result, then a poisoned session keeps answering
        time += 1;
        let mut sess = reader::authenticate(&sm, &mut obs, time, &mut rng).expect("honest");
        let stale = sess.clone();
        let forged = CallRequest::with_token(class, &read, token.expiry, PermissionToken([rng.gen(); 32]));
        let _ = reader::call_method(&mut sess, &grp, &mut obs, &forged, &mut rng);
        let mut stale = stale;
        stale.counter += 3;
        let _ = reader::call_method(&mut stale, &grp, &mut obs, &good, &mut rng);

        // owner session again, all honest
        time += 1;
        let mut sess = reader::authenticate(&sm, &mut obs, time, &mut rng).expect("honest");
        reader::call_method(&mut sess, &grp, &mut obs, &good, &mut rng).expect("honest call");
        reader::close_session(&mut sess, &mut obs, &mut rng);

        // tampered request from the guest, then the now pending guest says hello
        time += 1;
        obs.tamper = Some((MessageType::AuthRequest, rng.gen()));
        let r = reader::authenticate(&sg, &mut obs, time, &mut rng);
        debug_assert!(matches!(r, Err(AuthError::EchoMismatch)));
        time += 1;
        if reader::authenticate(&sg, &mut obs, time, &mut rng).is_err() {
            obs.reader_decoy();
        }

        for (f, is_decoy) in &obs.frames {
            let shape = frame_shape(&f.to_bytes(), &obs.tag.layout());
            total += 1;
            if *is_decoy {
                decoys.push((i, shape));
            } else {
                honest.entry(shape.kind).or_default().insert(shape);
            }
        }
    }

    tally.declare("decoy frames match an honest shape", 0);
    let mut kinds = BTreeSet::new();
    for (i, shape) in &decoys {
        kinds.insert(shape.kind);
        let ok = honest.get(&shape.kind).is_some_and(|s| s.contains(shape));
        tally.record("decoy frames match an honest shape", *i, ok, || (format!("{shape:?}"), String::new()));
    }
    tally.require_all("decoy frames match an honest shape");
    tally.declare("each type has a single honest shape", 0);
    for (kind, shapes) in &honest {
        tally.record("each type has a single honest shape", 0, shapes.len() == 1, || {
            (format!("type {kind:#04x} has {} shapes", shapes.len()), String::new())
        });
    }
    tally.require_all("each type has a single honest shape");
    tally.declare("frames compared", 1000);
    let c = tally.entry("frames compared");
    (c.passed, c.total) = (total, total);
    let names: Vec<String> = kinds
        .iter()
        .map(|k| MessageType::from_byte(*k).map_or_else(|| format!("{k:#04x}"), |m| format!("{m:?}")))
        .collect();
    tally.notes.push(format!("{} decoy frames of types {}", decoys.len(), names.join(", ")));
    tally
}

// ---------------------------------------------------------------------------
// Cost profile

/// Operation counts for authenticating every tag in a population.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EfficiencyRow {
    pub tags: usize,
    pub authentications: usize,
    /// Smallest and largest reader-side public-key count per authentication.
    pub reader_public_key: (u64, u64),
    pub tag_public_key: u64,
    /// Largest tag-side symmetric count per authentication.
    pub tag_symmetric: u64,
}

/// Link that charges the tag's work separately from the reader's.
struct Metered<'a> {
    tag: &'a mut TagState,
    ops: OpCounts,
}

impl TagLink for Metered<'_> {
    fn exchange(&mut self, frame: Frame) -> Option<Frame> {
        let (reply, ops) = counters::measure(|| self.tag.handle(&frame));
        self.ops.public_key += ops.public_key;
        self.ops.symmetric += ops.symmetric;
        reply
    }
}

/// Enrolls `n` tags for one domain and authenticates each once, for every `n` in `populations`.
pub fn measure_efficiency(group: &Group, populations: &[usize], seed: u64) -> Vec<EfficiencyRow> {
    populations
        .iter()
        .map(|&n| {
            let mut world = World::new(group.clone(), seed, AdversaryPolicy::Passive);
            let m = world.office.register_domain("owner").expect("fresh world");
            let rm = world.office.add_reader(&m).expect("registered");
            for _ in 0..n {
                let (h, t) = world.manufacture_tag();
                world.take_ownership(rm, h, &t).expect("passive take");
            }
            let state = world.office.reader_state(rm).expect("registered").clone();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut row = EfficiencyRow { tags: n, authentications: 0, reader_public_key: (u64::MAX, 0), tag_public_key: 0, tag_symmetric: 0 };
            for h in 0..n {
                let time = world.office.tick();
                let mut link = Metered { tag: world.tag_mut(h), ops: OpCounts::default() };
                let (r, total) = counters::measure(|| reader::authenticate(&state, &mut link, time, &mut rng));
                if r.is_ok() {
                    row.authentications += 1;
                }
                let reader_pk = total.public_key - link.ops.public_key;
                row.reader_public_key = (row.reader_public_key.0.min(reader_pk), row.reader_public_key.1.max(reader_pk));
                row.tag_public_key += link.ops.public_key;
                row.tag_symmetric = row.tag_symmetric.max(link.ops.symmetric);
            }
            row
        })
        .collect()
}
