use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rfac_core::calls::MethodArgs;
use rfac_core::elgamal;
use rfac_core::group::GroupProfile;
use rfac_core::ids::{ClassId, DomainId, Method, ReaderId};
use rfac_core::reader::{self, TagLink};
use rfac_core::sim::AdversaryPolicy;
use rfac_core::symmetric::{auth_decrypt, auth_encrypt, diversify_key, mint_permission_token, AuthCiphertext, Nonce, SymmetricKey};
use rfac_core::tag::{Phase, TagState};
use rfac_core::wire::{Frame, MessageType};
use rfac_core::world::World;
use rfac_core::{Group, KeyPair, TagId};

fn toy() -> Group {
    Group::generate(GroupProfile::Toy)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_bit_flip_breaks_authenticated_decryption(
        key in any::<[u8; 16]>(), iv in any::<[u8; 16]>(),
        msg in proptest::collection::vec(any::<u8>(), 0..80), bit in any::<usize>(),
    ) {
        let key = SymmetricKey(key);
        let mut bytes = auth_encrypt(&key, &msg, &Nonce(iv)).to_bytes();
        prop_assert_eq!(auth_decrypt(&key, &AuthCiphertext::from_bytes(&bytes).unwrap()).unwrap(), msg);
        let bit = bit % (bytes.len() * 8);
        bytes[bit / 8] ^= 1 << (bit % 8);
        let tampered = AuthCiphertext::from_bytes(&bytes).and_then(|c| auth_decrypt(&key, &c));
        prop_assert!(tampered.is_err());
    }

    #[test]
    fn diversification_and_tokens_are_pure(master in any::<[u8; 16]>(), seed in any::<u64>(), expiry in any::<u64>()) {
        let g = Group::generate(GroupProfile::Desk);
        let t = TagId::random(&g, &mut ChaCha20Rng::seed_from_u64(seed));
        let m = SymmetricKey(master);
        prop_assert_eq!(diversify_key(&m, &g, &t.0), diversify_key(&m, &g, &t.0));
        let d = DomainId::from_name("d");
        let a = mint_permission_token(&m, Method::Read, &d, expiry);
        prop_assert_eq!(a, mint_permission_token(&m, Method::Read, &d, expiry));
        prop_assert_ne!(a, mint_permission_token(&m, Method::Write, &d, expiry));
    }

    #[test]
    fn group_results_are_reduced(seed in any::<u64>()) {
        let g = Group::generate(GroupProfile::Desk);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let e = g.random_exponent(&mut rng);
        prop_assert!(e < g.q);
        let x = g.exp_g(&e);
        prop_assert!(x < g.p && g.contains(&x));
        let y = g.mul(&x, &g.exp_g(&g.random_nonzero_exponent(&mut rng)));
        prop_assert!(y < g.p && g.contains(&y));
    }

    #[test]
    fn reencryption_chains_preserve_the_identifier(seed in any::<u64>(), hops in 1usize..6) {
        let g = Group::generate(GroupProfile::Desk);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let keys = KeyPair::generate(&g, &mut rng);
        let t = TagId::random(&g, &mut rng);
        let mut c = elgamal::encrypt_fresh(&g, &t, &keys.pk, &mut rng).unwrap();
        for _ in 0..hops {
            let next = elgamal::universal_reencrypt(&g, &c, &g.random_exponent(&mut rng), &g.random_nonzero_exponent(&mut rng));
            prop_assert_ne!(&next, &c);
            c = next;
        }
        prop_assert_eq!(elgamal::elgamal_decrypt(&g, &c, &keys.sk).unwrap(), t);
    }

    #[test]
    fn tags_survive_arbitrary_bytes(frames in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..120), 1..20)) {
        let mut tag = TagState::manufacture(toy(), 1);
        let layout = tag.layout();
        for f in &frames {
            if let Some(reply) = tag.handle_bytes(f) {
                let reply = Frame::from_bytes(&reply).unwrap();
                prop_assert_eq!(reply.body.len(), layout.body_len(reply.kind));
            }
        }
        prop_assert!(tag.executions().is_empty());
        prop_assert!(tag.owner().is_none());
    }

    #[test]
    fn frames_roundtrip(kind in 1u8..=8, body in proptest::collection::vec(any::<u8>(), 0..600)) {
        let kind = MessageType::from_byte(kind).unwrap();
        let f = Frame::new(kind, body);
        prop_assert_eq!(Frame::from_bytes(&f.to_bytes()).unwrap(), f);
    }
}

#[derive(Clone, Debug)]
enum Op {
    Auth(usize),
    Call(usize, u8),
    Grant(usize),
    Accept(usize),
    Revoke(usize),
    Transfer(usize),
    Complete(usize),
    Reencrypt,
    Steal,
    Policy(u8, usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..3usize).prop_map(Op::Auth),
        (0..3usize, any::<u8>()).prop_map(|(r, m)| Op::Call(r, m)),
        (0..3usize).prop_map(Op::Grant),
        (0..3usize).prop_map(Op::Accept),
        (0..3usize).prop_map(Op::Revoke),
        (0..3usize).prop_map(Op::Transfer),
        (0..3usize).prop_map(Op::Complete),
        Just(Op::Reencrypt),
        Just(Op::Steal),
        (any::<u8>(), 0..12usize).prop_map(|(p, at)| Op::Policy(p, at)),
    ]
}

struct Fixture {
    world: World,
    domains: Vec<DomainId>,
    readers: Vec<ReaderId>,
}

fn fixture(seed: u64) -> Fixture {
    let mut world = World::new(toy(), seed, AdversaryPolicy::Passive);
    let domains: Vec<DomainId> = ["a", "b", "c"].iter().map(|n| world.office.register_domain(n).unwrap()).collect();
    let readers: Vec<ReaderId> = domains.iter().map(|d| world.office.add_reader(d).unwrap()).collect();
    let (tag, t) = world.manufacture_tag();
    world.take_ownership(readers[0], tag, &t).unwrap();
    Fixture { world, domains, readers }
}

fn apply(f: &mut Fixture, op: &Op, stolen: &mut usize) {
    let w = &mut f.world;
    let owner = w.tag(0).owner().and_then(|o| f.domains.iter().position(|d| *d == o)).unwrap_or(0);
    match *op {
        Op::Auth(r) => {
            if let Ok(mut s) = w.authenticate(f.readers[r], 0) {
                w.close(&mut s, 0);
            }
        }
        Op::Call(r, m) => {
            let args = match m % 3 {
                0 => MethodArgs::ReencryptGetIds,
                1 => MethodArgs::GrantTagAccess { domain: f.domains[m as usize % 3] },
                _ => MethodArgs::RelinquishTagOwnership,
            };
            let _ = w.manage(f.readers[r], 0, &args);
        }
        Op::Grant(d) => {
            let _ = w.grant_access(f.readers[owner], 0, &f.domains[d]);
        }
        Op::Accept(r) => {
            let _ = w.accept_access(f.readers[r], 0);
        }
        Op::Revoke(d) => {
            let _ = w.manage(f.readers[owner], 0, &MethodArgs::RevokeTagAccess { domain: f.domains[d] });
        }
        Op::Transfer(d) => {
            let _ = w.transfer_ownership(f.readers[owner], 0, &f.domains[d]);
        }
        Op::Complete(r) => {
            let _ = w.complete_transfer(f.readers[r], 0);
        }
        Op::Reencrypt => {
            let _ = w.reencrypt_all(f.readers[owner], 0);
        }
        Op::Steal => {
            if *stolen < 3 {
                let spare = w.office.add_reader(&f.domains[*stolen % 3]).unwrap();
                w.office.report_stolen(spare).unwrap();
                *stolen += 1;
            }
        }
        Op::Policy(p, at) => {
            let policy = match p % 5 {
                0 => AdversaryPolicy::Passive,
                1 => AdversaryPolicy::Drop { at },
                2 => AdversaryPolicy::Tamper { at, bit: p as usize * 7 },
                3 => AdversaryPolicy::Replay { at },
                _ => AdversaryPolicy::Fuzz { seed: p as u64 },
            };
            w.channel.set_policy(policy);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tag_invariants_hold_across_operation_sequences(seed in any::<u64>(), ops in proptest::collection::vec(op(), 1..30)) {
        let mut f = fixture(seed);
        let mut stolen = 0;
        let mut now = f.world.tag(0).now();
        for op in &ops {
            apply(&mut f, op, &mut stolen);
            let tag = f.world.tag(0);
            prop_assert!(tag.access().owner_count() <= 1, "two owners after {:?}", op);
            prop_assert!(tag.now() >= now, "clock went back after {:?}", op);
            now = tag.now();
            prop_assert!(f.world.unexplained_executions().is_empty(), "unexplained execution after {:?}", op);
            prop_assert!(f.world.unaudited_executions().is_empty());
            prop_assert!(tag.object(&ClassId::MANAGEMENT).is_some());
            for d in &f.domains {
                let rec = f.world.office.domain(d).unwrap();
                for r in &rec.readers {
                    let reader = f.world.office.reader(*r).unwrap();
                    let held = f.world.office.reader_state(*r).unwrap().epoch_keys.len();
                    match reader.stolen_at {
                        None => prop_assert_eq!(held, rec.epoch_keys.len()),
                        Some(e) => prop_assert_eq!(held as u32, e + 1),
                    }
                }
            }
        }
    }

    #[test]
    fn replayed_sessions_never_authenticate(seed in any::<u64>()) {
        let mut f = fixture(seed);
        let state = f.world.office.reader_state(f.readers[0]).unwrap().clone();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let time = f.world.office.tick();

        struct Rec<'a>(&'a mut TagState, Vec<Frame>);
        impl TagLink for Rec<'_> {
            fn exchange(&mut self, frame: Frame) -> Option<Frame> {
                self.1.push(frame.clone());
                self.0.handle(&frame)
            }
        }
        let mut rec = Rec(f.world.tag_mut(0), Vec::new());
        let mut s = reader::authenticate(&state, &mut rec, time, &mut rng).unwrap();
        reader::call_method(&mut s, &toy(), &mut rec, &reader::CallRequest::permission_free(&MethodArgs::ReencryptGetIds), &mut rng).unwrap();
        reader::close_session(&mut s, &mut rec, &mut rng);
        let frames = rec.1;
        let tag = f.world.tag_mut(0);
        let before = tag.executions().len();
        for fr in &frames {
            tag.handle(fr);
        }
        prop_assert!(tag.session().domain.is_none());
        prop_assert!(matches!(tag.session().phase, Phase::Poisoned | Phase::Open));
        prop_assert_eq!(tag.executions().len(), before);
    }
}
