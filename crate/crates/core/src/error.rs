use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("value is not an element of the subgroup")]
    NotInGroup,
    #[error("ciphertext does not decrypt under this key")]
    WrongKey,
    #[error("MAC verification failed")]
    MacMismatch,
    #[error("malformed ciphertext: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("frame truncated")]
    Truncated,
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("declared body length {declared} does not match {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("body too large for a frame ({0} bytes)")]
    Oversized(usize),
    #[error("malformed {0}")]
    Malformed(&'static str),
}

/// Why a reader-side authentication run failed. Reported locally only; on
/// the wire the reader keeps sending well-formed messages.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("no response from tag")]
    NoResponse,
    #[error("malformed response")]
    Malformed,
    #[error("tag reports epoch {tag} beyond current epoch {current}")]
    FutureEpoch { tag: u32, current: u32 },
    #[error("encrypted identifier was not produced under this domain's epoch key")]
    ForeignCiphertext,
    #[error("tag did not echo the challenge")]
    EchoMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CallError {
    #[error("no response from tag")]
    NoResponse,
    #[error("reply failed verification")]
    Rejected,
    #[error("parameters do not fit in a frame ({0} bytes)")]
    ParamsTooLarge(usize),
    #[error("session is closed")]
    Closed,
    #[error("malformed result")]
    MalformedResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackOfficeError {
    #[error("domain `{0}` already registered")]
    DuplicateDomain(String),
    #[error("unknown domain")]
    UnknownDomain,
    #[error("unknown reader")]
    UnknownReader,
    #[error("unknown class")]
    UnknownClass,
    #[error("class `{0}` already defined")]
    DuplicateClass(String),
    #[error("caller holds no key for this class")]
    NotClassOwner,
    #[error("no unused secret key left for a new epoch")]
    EpochsExhausted,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a snapshot file")]
    BadMagic,
    #[error("snapshot holds a {found}, expected a {expected}")]
    WrongKind { found: &'static str, expected: &'static str },
    #[error("snapshot version {found} unsupported (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("corrupt snapshot: {0}")]
    Corrupt(#[from] bincode::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failure of one step of a scripted flow.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("authentication failed: {0}")]
    Auth(#[from] AuthError),
    #[error("method call failed: {0}")]
    Call(#[from] CallError),
    #[error(transparent)]
    Office(#[from] BackOfficeError),
    #[error("no out-of-band message waiting")]
    NoHandoff,
}
