//! Frame format shared by tags and readers.
//!
//! A frame is `type (1) || body length (2, big-endian) || body`. Every
//! message type has a fixed body length for a given group, so decoy frames
//! can match honest ones byte for byte in shape. See `docs/wire-format.md`.

use serde::{Deserialize, Serialize};

use crate::error::WireError;
use crate::symmetric::{AuthCiphertext, PermissionToken, BLOCK, MAC_LEN};

/// Maximum number of domains in a tag's access set.
pub const MAX_ACCESS_ENTRIES: usize = 8;
/// Maximum encoded size of an object payload.
pub const MAX_PAYLOAD: usize = 512;
/// Width of the random result returned by methods without a result.
pub const VOID_RESULT_LEN: usize = 16;
/// Body of the session-closing message.
pub const STOP_MARKER: [u8; 16] = *b"stop-session\0\0\0\0";

const DOMAIN_LEN: usize = 16;
const CLASS_LEN: usize = 16;
const EPOCH_LEN: usize = 4;
const NONCE_LEN: usize = 16;
const TIME_LEN: usize = 8;
const COUNTER_LEN: usize = 8;
const METHOD_LEN: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum MessageType {
    /// reader -> tag: domain id
    Hello = 0x01,
    /// tag -> reader: encid || epoch || r
    HelloReply = 0x02,
    /// reader -> tag: {| encid' ; epoch ; r ; q ; time ; s |}
    AuthRequest = 0x03,
    /// tag -> reader: { q ; s-bar }
    AuthReply = 0x04,
    /// reader -> tag: {| n ; c ; f ; expiry ; token |}
    CallHeader = 0x05,
    /// reader -> tag: {| n+1 ; params |}
    CallParams = 0x06,
    /// tag -> reader: {| m+2 ; result |}
    CallResult = 0x07,
    /// reader -> tag: {| stop |}
    Stop = 0x08,
}

impl MessageType {
    pub const ALL: [MessageType; 8] = [
        MessageType::Hello,
        MessageType::HelloReply,
        MessageType::AuthRequest,
        MessageType::AuthReply,
        MessageType::CallHeader,
        MessageType::CallParams,
        MessageType::CallResult,
        MessageType::Stop,
    ];

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }

    pub fn from_tag(self) -> bool {
        matches!(self, MessageType::HelloReply | MessageType::AuthReply | MessageType::CallResult)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub kind: MessageType,
    pub body: Vec<u8>,
}

impl Frame {
    pub fn new(kind: MessageType, body: Vec<u8>) -> Self {
        Frame { kind, body }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let len = u16::try_from(self.body.len()).expect("frame bodies are bounded by layout");
        let mut out = Vec::with_capacity(3 + self.body.len());
        out.push(self.kind as u8);
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < 3 {
            return Err(WireError::Truncated);
        }
        let kind = MessageType::from_byte(bytes[0]).ok_or(WireError::UnknownType(bytes[0]))?;
        let declared = u16::from_be_bytes([bytes[1], bytes[2]]) as usize;
        let body = &bytes[3..];
        if body.len() != declared {
            return Err(WireError::LengthMismatch { declared, actual: body.len() });
        }
        Ok(Frame { kind, body: body.to_vec() })
    }
}

/// Byte layout of every message for a group with `element_width`-byte elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub element_width: usize,
}

impl Layout {
    pub fn new(element_width: usize) -> Self {
        Layout { element_width }
    }

    pub fn encid_len(&self) -> usize {
        4 * self.element_width
    }

    /// `domain || epoch || encid`, the unit of the re-encryption id lists.
    pub fn id_record_len(&self) -> usize {
        DOMAIN_LEN + EPOCH_LEN + self.encid_len()
    }

    /// Fixed capacity of a parameter or result slot: 2-byte length plus the
    /// largest payload any method produces.
    pub fn slot_len(&self) -> usize {
        2 + MAX_PAYLOAD.max(1 + MAX_ACCESS_ENTRIES * self.id_record_len())
    }

    pub fn hello_reply_len(&self) -> usize {
        self.encid_len() + EPOCH_LEN + NONCE_LEN
    }

    pub fn auth_plain_len(&self) -> usize {
        self.encid_len() + EPOCH_LEN + NONCE_LEN + NONCE_LEN + TIME_LEN + BLOCK
    }

    pub fn auth_reply_plain_len(&self) -> usize {
        NONCE_LEN + BLOCK
    }

    pub fn header_plain_len(&self) -> usize {
        COUNTER_LEN + CLASS_LEN + METHOD_LEN + TIME_LEN + PermissionToken::LEN
    }

    pub fn slot_plain_len(&self) -> usize {
        COUNTER_LEN + self.slot_len()
    }

    /// Body length of each message type.
    pub fn body_len(&self, kind: MessageType) -> usize {
        match kind {
            MessageType::Hello => DOMAIN_LEN,
            MessageType::HelloReply => self.hello_reply_len(),
            MessageType::AuthRequest => AuthCiphertext::encoded_len(self.auth_plain_len()),
            MessageType::AuthReply => BLOCK + self.auth_reply_plain_len(),
            MessageType::CallHeader => AuthCiphertext::encoded_len(self.header_plain_len()),
            MessageType::CallParams | MessageType::CallResult => AuthCiphertext::encoded_len(self.slot_plain_len()),
            MessageType::Stop => AuthCiphertext::encoded_len(STOP_MARKER.len()),
        }
    }

    /// Wraps `payload` into a fixed-size slot: `len (2) || payload || zeros`.
    pub fn fill_slot(&self, payload: &[u8]) -> Option<Vec<u8>> {
        if payload.len() + 2 > self.slot_len() {
            return None;
        }
        let mut out = Vec::with_capacity(self.slot_len());
        out.extend_from_slice(&(payload.len() as u16).to_be_bytes());
        out.extend_from_slice(payload);
        out.resize(self.slot_len(), 0);
        Some(out)
    }

    pub fn read_slot<'a>(&self, slot: &'a [u8]) -> Option<&'a [u8]> {
        if slot.len() != self.slot_len() {
            return None;
        }
        let len = u16::from_be_bytes([slot[0], slot[1]]) as usize;
        slot.get(2..2 + len)
    }
}

/// A named byte range within a frame body.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Field {
    pub name: &'static str,
    pub offset: usize,
    pub len: usize,
}

/// Structural fingerprint of a frame: everything an observer learns without keys.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FrameShape {
    pub kind: u8,
    pub total_len: usize,
    pub fields: Vec<Field>,
}

fn fields(spec: &[(&'static str, usize)]) -> Vec<Field> {
    let mut offset = 3;
    let mut out = vec![Field { name: "type", offset: 0, len: 1 }, Field { name: "length", offset: 1, len: 2 }];
    for (name, len) in spec {
        out.push(Field { name, offset, len: *len });
        offset += len;
    }
    out
}

fn sealed_fields(body_len: usize) -> Vec<Field> {
    fields(&[("iv", BLOCK), ("ciphertext", body_len.saturating_sub(BLOCK + MAC_LEN)), ("mac", MAC_LEN)])
}

/// Splits raw frame bytes into the field boundaries implied by the type byte
/// and the declared length. Unknown types yield only the outer fields.
pub fn frame_shape(bytes: &[u8], layout: &Layout) -> FrameShape {
    let kind = bytes.first().copied().unwrap_or(0);
    let body_len = bytes.len().saturating_sub(3);
    let w = layout.element_width;
    let fields = match MessageType::from_byte(kind) {
        Some(MessageType::Hello) => fields(&[("domain", body_len)]),
        Some(MessageType::HelloReply) => fields(&[
            ("u", w),
            ("v", w),
            ("y", w),
            ("z", w),
            ("epoch", EPOCH_LEN),
            ("nonce", body_len.saturating_sub(4 * w + EPOCH_LEN)),
        ]),
        Some(MessageType::AuthReply) => fields(&[("iv", BLOCK), ("ciphertext", body_len.saturating_sub(BLOCK))]),
        Some(_) => sealed_fields(body_len),
        None => fields(&[("body", body_len)]),
    };
    FrameShape { kind, total_len: bytes.len(), fields }
}

/// Cursor over a decrypted body.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.buf)
    }

    pub fn finish(self) -> Result<(), WireError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(WireError::Malformed("trailing bytes"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_lengths_per_group() {
        // worked out by hand from the field layouts
        let toy = [16, 24, 112, 48, 112, 560, 560, 64];
        let desk = [16, 532, 608, 48, 112, 4304, 4304, 64];
        for (w, expected) in [(1, toy), (128, desk)] {
            let got: Vec<usize> = MessageType::ALL.iter().map(|k| Layout::new(w).body_len(*k)).collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn frame_roundtrip_and_errors() {
        let f = Frame::new(MessageType::Hello, vec![7; 16]);
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..3], &[0x01, 0x00, 0x10]);
        assert_eq!(Frame::from_bytes(&bytes).unwrap(), f);
        assert_eq!(Frame::from_bytes(&bytes[..2]), Err(WireError::Truncated));
        assert_eq!(Frame::from_bytes(&[0x42, 0, 0]), Err(WireError::UnknownType(0x42)));
        assert_eq!(
            Frame::from_bytes(&bytes[..10]),
            Err(WireError::LengthMismatch { declared: 16, actual: 7 })
        );
    }

    #[test]
    fn desk_layout_fits_in_a_frame() {
        let layout = Layout::new(128);
        for kind in MessageType::ALL {
            assert!(layout.body_len(kind) <= u16::MAX as usize, "{kind:?}");
        }
        assert_eq!(layout.hello_reply_len(), 512 + 4 + 16);
        assert_eq!(layout.body_len(MessageType::AuthReply), 48);
    }

    #[test]
    fn slots_roundtrip() {
        let layout = Layout::new(1);
        let slot = layout.fill_slot(b"abc").unwrap();
        assert_eq!(slot.len(), layout.slot_len());
        assert_eq!(layout.read_slot(&slot), Some(&b"abc"[..]));
        assert!(layout.fill_slot(&vec![0; layout.slot_len()]).is_none());
    }

    #[test]
    fn shape_depends_only_on_type_and_length() {
        let layout = Layout::new(1);
        let a = Frame::new(MessageType::HelloReply, vec![1; layout.hello_reply_len()]).to_bytes();
        let b = Frame::new(MessageType::HelloReply, vec![2; layout.hello_reply_len()]).to_bytes();
        assert_eq!(frame_shape(&a, &layout), frame_shape(&b, &layout));
        let c = Frame::new(MessageType::AuthReply, vec![2; 48]).to_bytes();
        assert_ne!(frame_shape(&a, &layout).kind, frame_shape(&c, &layout).kind);
        let shape = frame_shape(&a, &layout);
        let last = shape.fields.last().unwrap();
        assert_eq!(last.offset + last.len, shape.total_len);
    }
}
