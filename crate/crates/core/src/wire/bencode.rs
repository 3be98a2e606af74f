//! Canonical bencoding.
//!
//! Decoding is strict: the only accepted input for a value is its canonical
//! encoding. Leading zeros, `-0`, unsorted or duplicate dictionary keys and
//! trailing bytes are all rejected.

use std::collections::BTreeMap;

use thiserror::Error;

/// Nesting beyond this depth is rejected rather than recursed into.
pub const MAX_DEPTH: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BValue {
    Bytes(Vec<u8>),
    Int(i64),
    List(Vec<BValue>),
    Dict(BTreeMap<Vec<u8>, BValue>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed bencoding at byte {offset}: {reason}")]
pub struct MalformedBencoding {
    pub offset: usize,
    pub reason: &'static str,
}

impl BValue {
    pub fn bytes(b: impl AsRef<[u8]>) -> Self {
        BValue::Bytes(b.as_ref().to_vec())
    }

    pub fn dict<K: AsRef<[u8]>>(entries: impl IntoIterator<Item = (K, BValue)>) -> Self {
        BValue::Dict(
            entries
                .into_iter()
                .map(|(k, v)| (k.as_ref().to_vec(), v))
                .collect(),
        )
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            BValue::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            BValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[BValue]> {
        match self {
            BValue::List(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_dict(&self) -> Option<&BTreeMap<Vec<u8>, BValue>> {
        match self {
            BValue::Dict(d) => Some(d),
            _ => None,
        }
    }

    /// Looks up `key` when `self` is a dictionary.
    pub fn get(&self, key: &str) -> Option<&BValue> {
        self.as_dict().and_then(|d| d.get(key.as_bytes()))
    }
}

pub fn bencode(v: &BValue) -> Vec<u8> {
    let mut out = Vec::new();
    encode_into(v, &mut out);
    out
}

pub fn encode_into(v: &BValue, out: &mut Vec<u8>) {
    match v {
        BValue::Bytes(b) => {
            out.extend_from_slice(b.len().to_string().as_bytes());
            out.push(b':');
            out.extend_from_slice(b);
        }
        BValue::Int(i) => {
            out.push(b'i');
            out.extend_from_slice(i.to_string().as_bytes());
            out.push(b'e');
        }
        BValue::List(items) => {
            out.push(b'l');
            for item in items {
                encode_into(item, out);
            }
            out.push(b'e');
        }
        BValue::Dict(entries) => {
            // BTreeMap iterates in lexicographic byte order.
            out.push(b'd');
            for (k, item) in entries {
                out.extend_from_slice(k.len().to_string().as_bytes());
                out.push(b':');
                out.extend_from_slice(k);
                encode_into(item, out);
            }
            out.push(b'e');
        }
    }
}

/// Decodes exactly one value spanning all of `input`.
pub fn bdecode(input: &[u8]) -> Result<BValue, MalformedBencoding> {
    let mut d = Decoder { input, pos: 0 };
    let v = d.value(0)?;
    if d.pos != input.len() {
        return Err(d.err("trailing bytes"));
    }
    Ok(v)
}

/// Decodes one value from the front of `input`, returning it with the number
/// of bytes consumed.
pub fn bdecode_prefix(input: &[u8]) -> Result<(BValue, usize), MalformedBencoding> {
    let mut d = Decoder { input, pos: 0 };
    let v = d.value(0)?;
    Ok((v, d.pos))
}

struct Decoder<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn err(&self, reason: &'static str) -> MalformedBencoding {
        MalformedBencoding {
            offset: self.pos,
            reason,
        }
    }

    fn peek(&self) -> Result<u8, MalformedBencoding> {
        self.input
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.err("unexpected end of input"))
    }

    fn value(&mut self, depth: usize) -> Result<BValue, MalformedBencoding> {
        if depth > MAX_DEPTH {
            return Err(self.err("nesting too deep"));
        }
        match self.peek()? {
            b'i' => {
                self.pos += 1;
                let n = self.integer(b'e')?;
                Ok(BValue::Int(n))
            }
            b'l' => {
                self.pos += 1;
                let mut items = Vec::new();
                while self.peek()? != b'e' {
                    items.push(self.value(depth + 1)?);
                }
                self.pos += 1;
                Ok(BValue::List(items))
            }
            b'd' => {
                self.pos += 1;
                let mut entries = BTreeMap::new();
                let mut last: Option<Vec<u8>> = None;
                while self.peek()? != b'e' {
                    if !self.peek()?.is_ascii_digit() {
                        return Err(self.err("dictionary key is not a byte string"));
                    }
                    let key_at = self.pos;
                    let key = self.byte_string()?.to_vec();
                    if let Some(prev) = &last {
                        if key <= *prev {
                            return Err(MalformedBencoding {
                                offset: key_at,
                                reason: "dictionary keys not strictly increasing",
                            });
                        }
                    }
                    let v = self.value(depth + 1)?;
                    last = Some(key.clone());
                    entries.insert(key, v);
                }
                self.pos += 1;
                Ok(BValue::Dict(entries))
            }
            b'0'..=b'9' => Ok(BValue::Bytes(self.byte_string()?.to_vec())),
            _ => Err(self.err("unexpected byte")),
        }
    }

    fn byte_string(&mut self) -> Result<&'a [u8], MalformedBencoding> {
        let len = self.integer(b':')?;
        if len < 0 {
            return Err(self.err("negative string length"));
        }
        let len = usize::try_from(len).map_err(|_| self.err("string length overflow"))?;
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.input.len())
            .ok_or_else(|| self.err("truncated byte string"))?;
        let s = &self.input[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    /// Parses a canonical decimal integer terminated by `terminator`.
    fn integer(&mut self, terminator: u8) -> Result<i64, MalformedBencoding> {
        let start = self.pos;
        let rest = &self.input[start..];
        let len = rest
            .iter()
            .position(|&b| b == terminator)
            .ok_or_else(|| self.err("unterminated integer"))?;
        let digits = &rest[..len];
        let (negative, magnitude) = match digits.split_first() {
            Some((b'-', m)) => (true, m),
            _ => (false, digits),
        };
        if magnitude.is_empty() || !magnitude.iter().all(u8::is_ascii_digit) {
            return Err(self.err("invalid integer"));
        }
        if magnitude.len() > 1 && magnitude[0] == b'0' {
            return Err(self.err("leading zero in integer"));
        }
        if negative && magnitude == b"0" {
            return Err(self.err("negative zero"));
        }
        // Digits are ASCII so the slice is valid UTF-8.
        let text = std::str::from_utf8(digits).map_err(|_| self.err("invalid integer"))?;
        let n = text
            .parse::<i64>()
            .map_err(|_| self.err("integer out of range"))?;
        self.pos = start + len + 1;
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodes_grammar_examples() {
        assert_eq!(bencode(&BValue::bytes("spam")), b"4:spam");
        assert_eq!(bencode(&BValue::Int(0)), b"i0e");
        assert_eq!(bencode(&BValue::dict([("a", BValue::Int(1))])), b"d1:ai1ee");
        assert_eq!(bencode(&BValue::Int(i64::MIN)), b"i-9223372036854775808e");
    }

    #[test]
    fn decodes_grammar_examples() {
        assert_eq!(bdecode(b"i-3e").unwrap(), BValue::Int(-3));
        assert_eq!(bdecode(b"le").unwrap(), BValue::List(vec![]));
        assert_eq!(bdecode(b"0:").unwrap(), BValue::bytes(""));
        assert_eq!(
            bdecode(b"d3:bar4:spam3:fooi42ee").unwrap(),
            BValue::dict([("bar", BValue::bytes("spam")), ("foo", BValue::Int(42))])
        );
    }

    #[test]
    fn rejects_non_canonical_forms() {
        for bad in [
            &b"i03e"[..],
            b"i-0e",
            b"ie",
            b"i-e",
            b"i1",
            b"04:spam",
            b"5:spam",
            b"d1:bi1e1:ai2ee",
            b"d1:ai1e1:ai2ee",
            b"di1ei2ee",
            b"l",
            b"i1ei2e",
            b"x",
            b"",
            b"i9223372036854775808e",
            b"-1:a",
        ] {
            assert!(
                bdecode(bad).is_err(),
                "accepted {:?}",
                String::from_utf8_lossy(bad)
            );
        }
    }

    #[test]
    fn depth_limit() {
        let mut deep = vec![b'l'; MAX_DEPTH + 2];
        deep.extend(vec![b'e'; MAX_DEPTH + 2]);
        assert!(bdecode(&deep).is_err());
        let mut ok = vec![b'l'; 10];
        ok.extend(vec![b'e'; 10]);
        assert!(bdecode(&ok).is_ok());
    }

    #[test]
    fn prefix_reports_consumed_length() {
        let (v, n) = bdecode_prefix(b"i7etrailing").unwrap();
        assert_eq!(v, BValue::Int(7));
        assert_eq!(n, 3);
    }
}
