//! Canonical binary encoding.
//!
//! Fixed-width big-endian integers, one-byte tags for enums and options,
//! `u32` length prefixes for sequences. The encoding is injective over every
//! field of the encoded value and identical across platforms, so digests of
//! encodings can stand in for the values themselves.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input: needed {needed} bytes at offset {offset}")]
    UnexpectedEof { offset: usize, needed: usize },
    #[error("invalid {what} tag {tag}")]
    InvalidTag { what: &'static str, tag: u8 },
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("invalid hex: {0}")]
    Hex(String),
}

pub trait Encode {
    fn encode_to(&self, out: &mut Vec<u8>);

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_to(&mut out);
        out
    }
}

pub trait Decode: Sized {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError>;

    /// Decodes a value that must span the whole input.
    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let v = Self::decode_from(&mut r)?;
        if r.remaining() != 0 {
            return Err(DecodeError::TrailingBytes(r.remaining()));
        }
        Ok(v)
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::UnexpectedEof {
                offset: self.pos,
                needed: n,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
}

impl Encode for u8 {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.push(*self);
    }
}

impl Decode for u8 {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        r.u8()
    }
}

macro_rules! int_codec {
    ($($t:ty),*) => {$(
        impl Encode for $t {
            fn encode_to(&self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_be_bytes());
            }
        }
        impl Decode for $t {
            fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
                let bytes = r.take(std::mem::size_of::<$t>())?;
                Ok(<$t>::from_be_bytes(bytes.try_into().expect("length checked")))
            }
        }
    )*};
}

int_codec!(u32, u64, i64);

impl<const N: usize> Encode for [u8; N] {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self);
    }
}

impl<const N: usize> Decode for [u8; N] {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(r.take(N)?.try_into().expect("length checked"))
    }
}

impl<T: Encode> Encode for Option<T> {
    fn encode_to(&self, out: &mut Vec<u8>) {
        match self {
            None => out.push(0),
            Some(v) => {
                out.push(1);
                v.encode_to(out);
            }
        }
    }
}

impl<T: Decode> Decode for Option<T> {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(None),
            1 => Ok(Some(T::decode_from(r)?)),
            tag => Err(DecodeError::InvalidTag {
                what: "option",
                tag,
            }),
        }
    }
}

impl<T: Encode> Encode for [T] {
    fn encode_to(&self, out: &mut Vec<u8>) {
        (self.len() as u32).encode_to(out);
        for item in self {
            item.encode_to(out);
        }
    }
}

impl<T: Encode> Encode for Vec<T> {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.as_slice().encode_to(out);
    }
}

impl<T: Decode> Decode for Vec<T> {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let len = u32::decode_from(r)? as usize;
        // each element takes at least one byte; refuse absurd prefixes early
        if len > r.remaining() {
            return Err(DecodeError::UnexpectedEof {
                offset: r.pos,
                needed: len,
            });
        }
        (0..len).map(|_| T::decode_from(r)).collect()
    }
}

impl<T: Encode + ?Sized> Encode for std::sync::Arc<T> {
    fn encode_to(&self, out: &mut Vec<u8>) {
        (**self).encode_to(out);
    }
}

impl<T: Decode> Decode for std::sync::Arc<T> {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        T::decode_from(r).map(std::sync::Arc::new)
    }
}

pub fn to_hex<T: Encode + ?Sized>(v: &T) -> String {
    let mut out = Vec::new();
    v.encode_to(&mut out);
    hex::encode(out)
}

pub fn from_hex<T: Decode>(s: &str) -> Result<T, DecodeError> {
    let bytes = hex::decode(s).map_err(|e| DecodeError::Hex(e.to_string()))?;
    T::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_are_big_endian_fixed_width() {
        assert_eq!(258u32.encode(), vec![0, 0, 1, 2]);
        assert_eq!((-1i64).encode(), vec![0xff; 8]);
        assert_eq!(u64::decode(&7u64.encode()), Ok(7));
    }

    #[test]
    fn options_and_vectors_round_trip() {
        let v: Vec<Option<u32>> = vec![None, Some(3), Some(u32::MAX)];
        assert_eq!(Vec::<Option<u32>>::decode(&v.encode()), Ok(v));
    }

    #[test]
    fn truncated_and_trailing_input_rejected() {
        let bytes = 5u64.encode();
        assert!(matches!(
            u64::decode(&bytes[..7]),
            Err(DecodeError::UnexpectedEof { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(u64::decode(&long), Err(DecodeError::TrailingBytes(1)));
        assert!(matches!(
            Option::<u8>::decode(&[7, 0]),
            Err(DecodeError::InvalidTag {
                what: "option",
                tag: 7
            })
        ));
    }
}
