//! End-to-end scripts for the supply chain, ticketing and hospital use cases.
//!
//! Each step states whether it should succeed. Under an active adversary
//! honest steps may be disrupted; that is reported but not a failure. A
//! step that should fail but succeeds is always a failure, as is a broken
//! global invariant.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use serde::Serialize;

use crate::calls::{MethodArgs, Payload};
use crate::error::StepError;
use crate::ids::{ClassId, DomainId, Method, ReaderId, Timestamp};
use crate::reader::CallRequest;
use crate::sim::AdversaryPolicy;
use crate::world::{TagHandle, World};
use crate::Group;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scenario {
    SupplyChain,
    Tickets,
    Hospital,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::SupplyChain, Scenario::Tickets, Scenario::Hospital];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SupplyChain => "supply-chain",
            Scenario::Tickets => "tickets",
            Scenario::Hospital => "hospital",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}` (expected supply-chain, tickets or hospital)"))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Adversary choices offered on the command line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Adversary {
    #[default]
    None,
    /// Duplicates call frames and splices in captured ones.
    Replay,
    /// Flips one bit of one frame early in the run.
    Tamper,
}

impl Adversary {
    pub fn policy(self, seed: u64) -> AdversaryPolicy {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
        match self {
            Adversary::None => AdversaryPolicy::Passive,
            Adversary::Replay => AdversaryPolicy::Fuzz { seed },
            Adversary::Tamper => AdversaryPolicy::Tamper { at: rng.gen_range(0..40), bit: rng.gen() },
        }
    }
}

impl FromStr for Adversary {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Adversary::None),
            "replay" => Ok(Adversary::Replay),
            "tamper" => Ok(Adversary::Tamper),
            _ => Err(format!("unknown adversary `{s}` (expected none, replay or tamper)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    /// An honest step did not complete because of the adversary.
    Disrupted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepResult {
    pub name: String,
    pub expect_success: bool,
    pub succeeded: bool,
    pub detail: String,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub steps: Vec<StepResult>,
    pub violations: Vec<String>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.steps.iter().all(|s| s.verdict != Verdict::Fail)
    }

    pub fn count(&self, verdict: Verdict) -> usize {
        self.steps.iter().filter(|s| s.verdict == verdict).count()
    }

    pub fn first_failure(&self) -> Option<&StepResult> {
        self.steps.iter().find(|s| s.verdict == Verdict::Fail)
    }
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} (seed {})", self.scenario, self.seed)?;
        for (i, s) in self.steps.iter().enumerate() {
            let tag = match s.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "FAIL",
                Verdict::Disrupted => "disrupted",
            };
            let expect = if s.expect_success { "succeeds" } else { "is refused" };
            write!(f, "  {:>2}. [{tag}] {} {expect}", i + 1, s.name)?;
            if !s.detail.is_empty() {
                write!(f, " ({})", s.detail)?;
            }
            writeln!(f)?;
        }
        for v in &self.violations {
            writeln!(f, "  invariant violated: {v}")?;
        }
        write!(
            f,
            "  {} passed, {} failed, {} disrupted",
            self.count(Verdict::Pass),
            self.count(Verdict::Fail),
            self.count(Verdict::Disrupted)
        )
    }
}

const LONG: Timestamp = 1_000_000;

struct Script {
    world: World,
    adversarial: bool,
    disrupted: bool,
    steps: Vec<StepResult>,
}

impl Script {
    fn new(group: Group, seed: u64, adversary: Adversary) -> Self {
        Script {
            world: World::new(group, seed, adversary.policy(seed)),
            adversarial: adversary != Adversary::None,
            disrupted: false,
            steps: Vec::new(),
        }
    }

    fn record(&mut self, name: &str, expect_success: bool, succeeded: bool, detail: String) -> bool {
        let verdict = if succeeded == expect_success {
            Verdict::Pass
        } else if self.adversarial && (expect_success || self.disrupted) {
            Verdict::Disrupted
        } else {
            Verdict::Fail
        };
        if verdict == Verdict::Disrupted {
            self.disrupted = true;
        }
        self.world.channel.note(format!("step {}: {name}: {verdict:?}", self.steps.len() + 1));
        self.steps.push(StepResult { name: name.to_owned(), expect_success, succeeded, detail, verdict });
        succeeded
    }

    fn ok<T>(&mut self, name: &str, r: Result<T, StepError>) -> Option<T> {
        match r {
            Ok(v) => {
                self.record(name, true, true, String::new());
                Some(v)
            }
            Err(e) => {
                self.record(name, true, false, e.to_string());
                None
            }
        }
    }

    fn refused<T>(&mut self, name: &str, r: Result<T, StepError>) {
        let detail = match &r {
            Ok(_) => "unexpectedly succeeded".to_owned(),
            Err(e) => e.to_string(),
        };
        self.record(name, false, r.is_ok(), detail);
    }

    fn check(&mut self, name: &str, holds: bool) {
        self.record(name, true, holds, String::new());
    }

    fn domain(&mut self, name: &str) -> (DomainId, ReaderId) {
        let d = self.world.office.register_domain(name).expect("scenario domain names are distinct");
        let r = self.world.office.add_reader(&d).expect("domain just registered");
        (d, r)
    }

    fn class(&mut self, owner: &DomainId, name: &str) -> ClassId {
        self.world.office.define_class(owner, name).expect("scenario class names are distinct")
    }

    fn permit(&mut self, issuer: &DomainId, class: ClassId, methods: &[Method], grantee: &DomainId) {
        let expiry = self.world.office.now() + LONG;
        for &m in methods {
            // an issuer misses the key only when an earlier step was disrupted
            let _ = self.world.office.issue_permission(issuer, class, m, grantee, expiry);
        }
    }

    fn finish(self, scenario: Scenario, seed: u64) -> (ScenarioReport, World) {
        let w = &self.world;
        let mut violations = Vec::new();
        for (h, tag) in w.tags().iter().enumerate() {
            if tag.access().owner_count() > 1 {
                violations.push(format!("tag {h} has more than one owner"));
            }
        }
        for (h, class, method, n) in w.unexplained_executions() {
            violations.push(format!("tag {h} ran {method:?} on {class:?} {n} more time(s) than requested"));
        }
        for (h, class, method) in w.unaudited_executions() {
            violations.push(format!("tag {h} ran {method:?} on {class:?} without an issued permission"));
        }
        (ScenarioReport { scenario, seed, steps: self.steps, violations }, self.world)
    }
}

fn payload(pairs: &[(&str, &[u8])]) -> Payload {
    pairs.iter().map(|(k, v)| ((*k).to_owned(), v.to_vec())).collect()
}

fn install(s: &mut Script, reader: ReaderId, tag: TagHandle, class: ClassId, key_owner: &DomainId, data: Payload) -> Result<Vec<u8>, StepError> {
    let key = s.world.office.key_for(key_owner, &class).expect("class owner holds its key");
    s.world.manage(reader, tag, &MethodArgs::InstallObject { class, key, payload: data })
}

fn read(s: &mut Script, reader: ReaderId, tag: TagHandle, class: ClassId, field: &str) -> Result<Vec<u8>, StepError> {
    s.world.run(reader, tag, class, &MethodArgs::Read { field: field.to_owned() })
}

fn write(s: &mut Script, reader: ReaderId, tag: TagHandle, class: ClassId, field: &str, value: &[u8]) -> Result<Vec<u8>, StepError> {
    s.world.run(reader, tag, class, &MethodArgs::Write { field: field.to_owned(), value: value.to_vec() })
}

fn grant(s: &mut Script, owner: ReaderId, tag: TagHandle, to: &DomainId, to_reader: ReaderId) -> Result<(), StepError> {
    s.world.grant_access(owner, tag, to)?;
    s.world.accept_access(to_reader, tag)
}

fn transfer(s: &mut Script, owner: ReaderId, tag: TagHandle, to: &DomainId, to_reader: ReaderId) -> Result<(), StepError> {
    s.world.transfer_ownership(owner, tag, to)?;
    s.world.complete_transfer(to_reader, tag)
}

/// Manufacturer, retailer, consumer and an accredited service organisation.
fn supply_chain(s: &mut Script) {
    let (m, rm) = s.domain("manufacturer");
    let (r, rr) = s.domain("retailer");
    let (c, rc) = s.domain("consumer");
    let (svc, rs) = s.domain("service-org");
    let service = s.class(&m, "Service");
    let retail = s.class(&r, "Retail");
    s.permit(&m, ClassId::MANAGEMENT, &[Method::InstallObject], &m);
    s.permit(&m, service, &[Method::Read, Method::Write], &m);
    s.permit(&m, service, &[Method::Read], &svc);
    s.permit(&r, ClassId::MANAGEMENT, &[Method::InstallObject], &r);
    s.permit(&r, retail, &[Method::Read, Method::Write], &r);
    let (tag, t) = s.world.manufacture_tag();

    let r1 = s.world.take_ownership(rm, tag, &t);
    s.ok("manufacturer takes ownership of a new tag", r1);
    let r2 = install(s, rm, tag, service, &m, payload(&[("plant", b"Eindhoven")]));
    s.ok("manufacturer installs its Service object", r2);
    let r3 = write(s, rm, tag, service, "run", b"2024-W17 batch 3");
    s.ok("manufacturer writes production data", r3);
    let r4 = s.world.authenticate(rs, tag).map_err(StepError::from);
    s.refused("service organisation reaches the tag before being granted access", r4);
    let r5 = transfer(s, rm, tag, &r, rr);
    s.ok("manufacturer transfers tag ownership to the retailer", r5);
    let r6 = s.world.authenticate(rm, tag).map_err(StepError::from);
    s.refused("manufacturer authenticates after the transfer", r6);
    let kept = s.world.tag(tag).object(&service).is_some_and(|o| o.payload.get("run").map(Vec::as_slice) == Some(b"2024-W17 batch 3"));
    s.check("Service object and its data survive the transfer", kept);
    let r8 = install(s, rr, tag, retail, &r, payload(&[("shelf", b"A4")]));
    s.ok("retailer installs its Retail object", r8);
    let r9 = read(s, rr, tag, service, "run");
    s.refused("retailer reads Service data without permission", r9);
    let r10 = grant(s, rr, tag, &m, rm).and_then(|_| read(s, rm, tag, service, "run"));
    s.ok("retailer grants the manufacturer access, which reads its Service data", r10);
    let r11 = transfer(s, rr, tag, &c, rc);
    s.ok("retailer sells: ownership moves to the consumer", r11);
    let r12 = grant(s, rc, tag, &svc, rs).and_then(|_| read(s, rs, tag, service, "plant"));
    s.ok("consumer grants the service organisation access; it reads Service data", r12);
    let r13 = read(s, rs, tag, retail, "shelf");
    s.refused("service organisation reads Retail data", r13);
    let r14 = s
        .world
        .manage(rc, tag, &MethodArgs::RevokeTagAccess { domain: m })
        .and_then(|_| s.world.authenticate(rm, tag).map_err(StepError::from));
    s.refused("manufacturer authenticates after the consumer revokes it", r14);
}

/// Ticket issuer, a wristband owner, contracted organisers and a free rider.
fn tickets(s: &mut Script) {
    let (esc, re) = s.domain("esc");
    let (tom, rt) = s.domain("tom");
    let (club, rclub) = s.domain("soccer-club");
    let (gym, rgym) = s.domain("gym");
    let (rider, rrider) = s.domain("free-rider");
    let ticket = s.class(&club, "Ticket");
    let slot = s.class(&gym, "GymSlot");
    s.permit(&club, ticket, &[Method::Read, Method::Write], &club);
    s.permit(&gym, slot, &[Method::Read], &gym);
    let (tag, t) = s.world.manufacture_tag();

    let r1 = s.world.take_ownership(re, tag, &t);
    s.ok("ESC takes ownership of the wristband", r1);
    // with the well-known management key ESC lets itself replace that key
    s.permit(&esc, ClassId::MANAGEMENT, &[Method::UpdateClassKey], &esc);
    let secret = s.world.office.fresh_key();
    let r2 = s.world.manage(re, tag, &MethodArgs::UpdateClassKey { key: secret });
    if s.ok("ESC sets the management class key to its own secret", r2).is_some() {
        s.world.office.hold_key(&esc, ClassId::MANAGEMENT, secret).expect("registered domain");
    }
    s.permit(&esc, ClassId::MANAGEMENT, &[Method::InstallObject], &club);
    s.permit(&esc, ClassId::MANAGEMENT, &[Method::InstallObject], &gym);
    // the free rider signs itself a permission under the default key
    s.permit(&rider, ClassId::MANAGEMENT, &[Method::InstallObject], &rider);

    let r3 = transfer(s, re, tag, &tom, rt);
    s.ok("ESC transfers the wristband to Tom", r3);
    let r4 = s.world.authenticate(re, tag).map_err(StepError::from);
    s.refused("ESC reaches the wristband after selling it", r4);
    let r5 = grant(s, rt, tag, &club, rclub);
    s.ok("Tom grants the soccer club access", r5);
    let r6 = install(s, rclub, tag, ticket, &club, payload(&[("match", b"PSV-Ajax"), ("seat", b"K-112")]));
    s.ok("soccer club installs a ticket with ESC's permission", r6);
    let r7 = read(s, rclub, tag, ticket, "seat");
    let seat_ok = matches!(&r7, Ok(v) if v == b"K-112");
    s.ok("entry gate reads the ticket from the wristband", r7);
    s.check("ticket data is held on the tag", seat_ok);
    let r9 = grant(s, rt, tag, &rider, rrider);
    s.ok("Tom grants a free rider access", r9);
    let rider_class = ClassId::from_name("RiderPass");
    let rider_key = s.world.office.fresh_key();
    let r10 = s.world.manage(rrider, tag, &MethodArgs::InstallObject { class: rider_class, key: rider_key, payload: Payload::new() });
    s.refused("organiser without an ESC permission installs an object", r10);
    let r11 = grant(s, rt, tag, &gym, rgym).and_then(|_| install(s, rgym, tag, slot, &gym, payload(&[("slot", b"tue 19:00")])));
    s.ok("gym gets access and installs a booking", r11);
    let r12 = read(s, rclub, tag, slot, "slot");
    s.refused("soccer club reads the gym booking", r12);
    let r13 = read(s, rgym, tag, slot, "slot");
    s.ok("gym reads its own booking", r13);
}

/// Hospital-owned monitor lent to a doctor who delegates to a nurse.
fn hospital(s: &mut Script) {
    let (h, rh) = s.domain("hospital");
    let (d, rd) = s.domain("doctor");
    let (n, rn) = s.domain("nurse");
    let tmon = s.class(&h, "Tmon");
    s.permit(&h, ClassId::MANAGEMENT, &[Method::InstallObject], &h);
    s.permit(&h, tmon, &[Method::Read], &h);
    let (tag, t) = s.world.manufacture_tag();

    let r1 = s.world.take_ownership(rh, tag, &t).and_then(|_| install(s, rh, tag, tmon, &h, payload(&[("pulse", b"72")])));
    s.ok("hospital takes the monitor and installs its Tmon object", r1);
    let r2 = grant(s, rh, tag, &d, rd).and_then(|_| grant(s, rh, tag, &n, rn));
    s.ok("hospital grants the doctor and the nurse tag access", r2);
    let r3 = read(s, rh, tag, tmon, "pulse");
    s.ok("hospital reads the monitor with its own permission", r3);

    // object ownership moves to the doctor through a class key update
    s.permit(&h, tmon, &[Method::UpdateClassKey], &d);
    let doctor_key = s.world.office.fresh_key();
    let r4 = s.world.run(rd, tag, tmon, &MethodArgs::UpdateClassKey { key: doctor_key });
    if s.ok("doctor takes over the Tmon object by replacing its class key", r4).is_some() {
        s.world.office.hold_key(&d, tmon, doctor_key).expect("registered domain");
    }
    let r5 = read(s, rh, tag, tmon, "pulse");
    s.refused("hospital's earlier permission on this object", r5);
    s.permit(&d, tmon, &[Method::Write, Method::UpdateClassKey], &d);
    s.permit(&d, tmon, &[Method::Read], &n);
    let r6 = write(s, rd, tag, tmon, "pulse", b"88");
    s.ok("doctor records a reading", r6);
    let r7 = read(s, rn, tag, tmon, "pulse");
    let reading_ok = matches!(&r7, Ok(v) if v == b"88");
    s.ok("nurse reads the monitor with the doctor's permission", r7);
    s.check("nurse sees the doctor's reading", reading_ok);
    let r9 = s.world.manage(rd, tag, &MethodArgs::RevokeTagAccess { domain: n });
    s.refused("doctor manages access to the device itself", r9);

    // patient dismissed: the doctor hands the object back
    let hospital_key = s.world.office.class(&tmon).expect("defined above").key;
    let r10 = s.world.run(rd, tag, tmon, &MethodArgs::UpdateClassKey { key: hospital_key });
    s.ok("doctor returns the Tmon object to the hospital", r10);
    let r11 = read(s, rn, tag, tmon, "pulse");
    s.refused("nurse's permission after the object was returned", r11);
    let r12 = read(s, rh, tag, tmon, "pulse");
    s.ok("hospital's original permission works again", r12);

    // a short-lived permission stops working once its expiry passes
    let expiry = s.world.office.now() + 5;
    let token = s.world.office.issue_permission(&h, tmon, Method::Read, &n, expiry).expect("hospital owns Tmon");
    let args = MethodArgs::Read { field: "pulse".into() };
    let r13 = s.world.authenticate(rn, tag).map_err(StepError::from).and_then(|mut session| {
        let out = s.world.call_with(&mut session, tag, &CallRequest::with_token(tmon, &args, expiry, token));
        s.world.close(&mut session, tag);
        Ok(out?)
    });
    s.ok("nurse uses a short-lived hospital permission", r13);
    s.world.office.advance(10);
    let r14 = s.world.authenticate(rn, tag).map_err(StepError::from).and_then(|mut session| {
        let out = s.world.call_with(&mut session, tag, &CallRequest::with_token(tmon, &args, expiry, token));
        s.world.close(&mut session, tag);
        Ok(out?)
    });
    s.refused("nurse uses the same permission after it expired", r14);
}

/// Runs one scenario and returns its report together with the final world.
pub fn run(scenario: Scenario, group: Group, seed: u64, adversary: Adversary) -> (ScenarioReport, World) {
    let mut script = Script::new(group, seed, adversary);
    match scenario {
        Scenario::SupplyChain => supply_chain(&mut script),
        Scenario::Tickets => tickets(&mut script),
        Scenario::Hospital => hospital(&mut script),
    }
    script.finish(scenario, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupProfile;

    #[test]
    fn all_scenarios_pass_in_the_toy_group() {
        for sc in Scenario::ALL {
            for seed in 0..3 {
                let (report, _) = run(sc, Group::generate(GroupProfile::Toy), seed, Adversary::None);
                assert!(report.passed(), "{report}");
                assert_eq!(report.count(Verdict::Disrupted), 0, "{report}");
            }
        }
    }

    #[test]
    fn supply_chain_has_fourteen_assertions() {
        let (report, _) = run(Scenario::SupplyChain, Group::generate(GroupProfile::Toy), 0, Adversary::None);
        assert_eq!(report.steps.len(), 14);
    }

    #[test]
    fn adversaries_never_cause_unsafe_outcomes() {
        for adversary in [Adversary::Replay, Adversary::Tamper] {
            for sc in Scenario::ALL {
                for seed in 0..4 {
                    let (report, _) = run(sc, Group::generate(GroupProfile::Toy), seed, adversary);
                    assert!(report.passed(), "{adversary:?}\n{report}");
                }
            }
        }
    }

    #[test]
    fn names_parse() {
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>(), Ok(sc));
        }
        assert!("nope".parse::<Scenario>().is_err());
        assert_eq!("tamper".parse::<Adversary>(), Ok(Adversary::Tamper));
    }
}
