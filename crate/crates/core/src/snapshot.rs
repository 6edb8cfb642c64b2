//! Versioned binary snapshots of tags and worlds.
//!
//! Layout: `RFACSNAP` magic (8) || version (2, big-endian) || kind (1) || bincode body.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::SnapshotError;
use crate::tag::TagState;
use crate::world::World;

pub const MAGIC: [u8; 8] = *b"RFACSNAP";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = MAGIC.len() + 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Tag = 1,
    World = 2,
}

impl Kind {
    fn name(byte: u8) -> &'static str {
        match byte {
            1 => "tag",
            2 => "world",
            _ => "unknown object",
        }
    }
}

/// Something that can be stored in a snapshot.
pub trait Snapshot: Serialize + DeserializeOwned {
    const KIND: Kind;

    fn to_snapshot(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&VERSION.to_be_bytes());
        out.push(Self::KIND as u8);
        bincode::serialize_into(&mut out, self).expect("in-memory serialization");
        out
    }

    fn from_snapshot(bytes: &[u8]) -> Result<Self, SnapshotError> {
        if bytes.len() < HEADER_LEN || bytes[..MAGIC.len()] != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = u16::from_be_bytes([bytes[8], bytes[9]]);
        if version != VERSION {
            return Err(SnapshotError::Version { found: version, expected: VERSION });
        }
        if bytes[10] != Self::KIND as u8 {
            return Err(SnapshotError::WrongKind { found: Kind::name(bytes[10]), expected: Kind::name(Self::KIND as u8) });
        }
        let body = &bytes[HEADER_LEN..];
        let mut cursor = std::io::Cursor::new(body);
        let value = bincode::deserialize_from(&mut cursor)?;
        if cursor.position() as usize != body.len() {
            return Err(SnapshotError::Corrupt(Box::new(bincode::ErrorKind::Custom("trailing bytes".into()))));
        }
        Ok(value)
    }

    fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        std::fs::write(path, self.to_snapshot())?;
        Ok(())
    }

    fn load(path: &Path) -> Result<Self, SnapshotError> {
        Self::from_snapshot(&std::fs::read(path)?)
    }
}

impl Snapshot for TagState {
    const KIND: Kind = Kind::Tag;
}

impl Snapshot for World {
    const KIND: Kind = Kind::World;
}
