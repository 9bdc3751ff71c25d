use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no primitive element certificate for GF(2^{0})")]
    NoPrimitive(u32),
    #[error("code length {0} exceeds the 128-bit codeword limit")]
    CodeTooLong(usize),
    #[error("fooling guard failed: two distinct sets share a codeword")]
    FoolingGuard,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("size guard: {0}")]
    SizeGuard(String),
}

pub type Result<T> = std::result::Result<T, Error>;
