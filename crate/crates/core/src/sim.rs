//! In-memory radio channel with a Dolev-Yao adversary and a transcript.
//!
//! The adversary sees every frame, may drop, flip bits, substitute earlier
//! frames or inject its own, but holds no keys. Frames it has seen stay in
//! its store across sessions, so replays can reach back to older runs.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ids::Timestamp;
use crate::reader::TagLink;
use crate::tag::TagState;
use crate::wire::{Frame, MessageType};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdversaryPolicy {
    /// Observe only.
    Passive,
    /// Suppress the frame with this index.
    Drop { at: usize },
    /// Flip one bit of the frame with this index (bit index taken modulo its length).
    Tamper { at: usize, bit: usize },
    /// Replace the frame with this index by the oldest captured frame of the same type.
    Replay { at: usize },
    /// Deliver these bytes to the tag just before the frame with this index.
    Inject { at: usize, frame: Vec<u8> },
    /// Randomly duplicate call frames and splice in call frames from the store.
    Fuzz { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "reader->tag")]
    ReaderToTag,
    #[serde(rename = "tag->reader")]
    TagToReader,
    /// Out-of-band traffic; recorded as an annotation, never as bytes.
    #[serde(rename = "oob")]
    OutOfBand,
    /// Internal note, such as a tag failure reason or an adversary action.
    #[serde(rename = "note")]
    Note,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub seq: u64,
    pub time: Timestamp,
    pub direction: Direction,
    #[serde(with = "hex_bytes")]
    pub frame: Vec<u8>,
    pub annotation: String,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// Append-only log of everything the channel carried.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    records: Vec<Record>,
}

impl Transcript {
    pub fn push(&mut self, time: Timestamp, direction: Direction, frame: &[u8], annotation: impl Into<String>) {
        let seq = self.records.len() as u64;
        self.records.push(Record { seq, time, direction, frame: frame.to_vec(), annotation: annotation.into() });
    }

    pub fn note(&mut self, time: Timestamp, annotation: impl Into<String>) {
        self.push(time, Direction::Note, &[], annotation);
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Frames that crossed the radio, in order.
    pub fn frames(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| matches!(r.direction, Direction::ReaderToTag | Direction::TagToReader))
    }

    /// One JSON object per line: `seq`, `time`, `direction`, `frame` (hex), `annotation`.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = serde_json::to_string(r).expect("records serialize");
            writeln!(out, "{line}").expect("writing to a string");
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Self, serde_json::Error> {
        let records = text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(Transcript { records })
    }
}

/// The adversary-controlled medium between readers and tags.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Channel {
    policy: AdversaryPolicy,
    /// Frames carried so far, both directions.
    index: usize,
    /// Every reader-to-tag frame observed.
    store: Vec<Frame>,
    rng: ChaCha20Rng,
    time: Timestamp,
    pub transcript: Transcript,
}

impl Channel {
    pub fn new(policy: AdversaryPolicy) -> Self {
        let seed = match policy {
            AdversaryPolicy::Fuzz { seed } => seed,
            _ => 0,
        };
        Channel {
            policy,
            index: 0,
            store: Vec::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            time: 0,
            transcript: Transcript::default(),
        }
    }

    pub fn policy(&self) -> &AdversaryPolicy {
        &self.policy
    }

    pub fn set_policy(&mut self, policy: AdversaryPolicy) {
        if let AdversaryPolicy::Fuzz { seed } = policy {
            self.rng = ChaCha20Rng::seed_from_u64(seed);
        }
        self.policy = policy;
        self.index = 0;
    }

    /// Timestamp stamped on subsequent records.
    pub fn set_time(&mut self, time: Timestamp) {
        self.time = time;
    }

    pub fn frames_carried(&self) -> usize {
        self.index
    }

    /// Frames the adversary has captured from readers.
    pub fn store(&self) -> &[Frame] {
        &self.store
    }

    /// Seeds the adversary's store, e.g. with frames recorded elsewhere.
    pub fn remember(&mut self, frame: Frame) {
        self.store.push(frame);
    }

    pub fn note(&mut self, annotation: impl Into<String>) {
        self.transcript.note(self.time, annotation);
    }

    pub fn note_oob(&mut self, annotation: impl Into<String>) {
        self.transcript.push(self.time, Direction::OutOfBand, &[], annotation);
    }

    /// Connects this channel to one tag for a protocol run.
    pub fn link<'a>(&'a mut self, tag: &'a mut TagState) -> Link<'a> {
        Link { channel: self, tag }
    }

    /// Applies the policy to the frame with the current index. `None` drops it.
    fn intercept(&mut self, mut bytes: Vec<u8>) -> Option<Vec<u8>> {
        let i = self.index;
        self.index += 1;
        match &self.policy {
            AdversaryPolicy::Drop { at } if *at == i => {
                self.note(format!("adversary dropped frame {i}"));
                None
            }
            AdversaryPolicy::Tamper { at, bit } if *at == i && !bytes.is_empty() => {
                let bit = bit % (bytes.len() * 8);
                bytes[bit / 8] ^= 0x80 >> (bit % 8);
                self.note(format!("adversary flipped bit {bit} of frame {i}"));
                Some(bytes)
            }
            AdversaryPolicy::Replay { at } if *at == i => {
                let kind = bytes.first().copied().and_then(MessageType::from_byte);
                let old = self.store.iter().find(|f| Some(f.kind) == kind).map(Frame::to_bytes);
                match old {
                    Some(old) => {
                        self.note(format!("adversary replayed an earlier frame as frame {i}"));
                        Some(old)
                    }
                    None => Some(bytes),
                }
            }
            _ => Some(bytes),
        }
    }

    fn record(&mut self, direction: Direction, bytes: &[u8]) {
        let kind = bytes.first().copied().and_then(MessageType::from_byte);
        let annotation = kind.map_or_else(|| "unparseable".to_owned(), |k| format!("{k:?}"));
        self.transcript.push(self.time, direction, bytes, annotation);
    }
}

/// A channel attached to a tag; implements [`TagLink`] for the reader.
pub struct Link<'a> {
    channel: &'a mut Channel,
    tag: &'a mut TagState,
}

impl Link<'_> {
    fn deliver(&mut self, bytes: &[u8]) -> Option<Vec<u8>> {
        self.channel.record(Direction::ReaderToTag, bytes);
        let seen = self.tag.events().len();
        let reply = self.tag.handle_bytes(bytes);
        let notes: Vec<String> = self.tag.events()[seen..].iter().map(|e| format!("tag: {}", e.reason)).collect();
        for n in notes {
            self.channel.note(n);
        }
        if let Some(r) = &reply {
            self.channel.record(Direction::TagToReader, r);
        }
        reply
    }

    fn fuzz_before(&mut self, frame: &Frame) {
        if !is_call_frame(frame.kind) || self.channel.store.is_empty() {
            return;
        }
        if self.channel.rng.gen_bool(0.1) {
            let pick = self.channel.rng.gen_range(0..self.channel.store.len());
            let old = self.channel.store[pick].clone();
            if is_call_frame(old.kind) {
                self.channel.note("adversary spliced in a captured call frame");
                let _ = self.deliver(&old.to_bytes());
            }
        }
    }

    fn fuzz_after(&mut self, frame: &Frame) {
        if is_call_frame(frame.kind) && self.channel.rng.gen_bool(0.15) {
            self.channel.note("adversary duplicated a call frame");
            let _ = self.deliver(&frame.to_bytes());
        }
    }
}

fn is_call_frame(kind: MessageType) -> bool {
    matches!(kind, MessageType::CallHeader | MessageType::CallParams | MessageType::Stop)
}

impl TagLink for Link<'_> {
    fn exchange(&mut self, frame: Frame) -> Option<Frame> {
        let fuzzing = matches!(self.channel.policy, AdversaryPolicy::Fuzz { .. });
        if fuzzing {
            self.fuzz_before(&frame);
        }
        if let AdversaryPolicy::Inject { at, frame: injected } = &self.channel.policy {
            if *at == self.channel.index {
                let injected = injected.clone();
                self.channel.note("adversary injected a frame");
                let _ = self.deliver(&injected);
            }
        }
        let original = frame.to_bytes();
        self.channel.store.push(frame.clone());
        let delivered = self.channel.intercept(original)?;
        let reply = self.deliver(&delivered);
        if fuzzing {
            self.fuzz_after(&frame);
        }
        let reply = self.channel.intercept(reply?)?;
        Frame::from_bytes(&reply).ok()
    }
}
