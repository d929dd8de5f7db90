//! Parser for exported analytics logs: a JSON envelope naming the collection
//! key and its privacy parameters, plus one line per submission in the form
//! `hash_index,hexbits`. The hex payload is nibble-oriented and MSB-first
//! (bit 0 is the high bit of the first nibble) and may be right-truncated;
//! missing trailing bits read as zero.

use anyhow::Context;
use dpaudit_core::sketch::HcmsRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsParams {
    pub epsilon: f64,
    pub k: u32,
    pub m: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsRecord {
    pub key: String,
    pub parameters: AnalyticsParams,
    pub records: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed record {index}: {reason}")]
pub struct MalformedRecord {
    pub index: usize,
    pub reason: String,
}

fn malformed(index: usize, reason: impl Into<String>) -> MalformedRecord {
    MalformedRecord { index, reason: reason.into() }
}

/// One decoded submission: which hash the client drew and its full bit row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub hash_index: u32,
    pub bits: Vec<u8>,
}

pub fn parse_record(json_text: &str) -> anyhow::Result<AnalyticsRecord> {
    let record: AnalyticsRecord =
        serde_json::from_str(json_text).context("analytics log envelope")?;
    let p = &record.parameters;
    anyhow::ensure!(
        p.epsilon.is_finite() && p.epsilon > 0.0,
        "analytics log epsilon must be finite and positive"
    );
    anyhow::ensure!(p.k >= 1 && p.m >= 1, "analytics log needs k >= 1 and m >= 1");
    Ok(record)
}

fn nibble_value(c: u8) -> Option<u8> {
    match c {
        b'0'..=b'9' => Some(c - b'0'),
        b'a'..=b'f' => Some(c - b'a' + 10),
        b'A'..=b'F' => Some(c - b'A' + 10),
        _ => None,
    }
}

/// Decode one `hash_index,hexbits` line against parameters (k hashes, m bits).
pub fn parse_entry(s: &str, k: u32, m: u32, index: usize) -> Result<LogEntry, MalformedRecord> {
    let (j_text, hex_text) = s
        .split_once(',')
        .ok_or_else(|| malformed(index, "expected 'hash_index,hexbits', found no comma"))?;
    let hash_index: u64 = j_text
        .trim()
        .parse()
        .map_err(|_| malformed(index, format!("hash index {j_text:?} is not an integer")))?;
    if hash_index >= u64::from(k) {
        return Err(malformed(index, format!("hash index {hash_index} out of range (k = {k})")));
    }

    let max_nibbles = (m as usize).div_ceil(4);
    let hex = hex_text.trim();
    if hex.len() > max_nibbles {
        return Err(malformed(
            index,
            format!("{} hex digits encode more than m = {m} bits", hex.len()),
        ));
    }
    let mut bits = vec![0u8; m as usize];
    for (n, c) in hex.bytes().enumerate() {
        let v = nibble_value(c)
            .ok_or_else(|| malformed(index, format!("invalid hex digit {:?}", c as char)))?;
        for j in 0..4 {
            if (v >> (3 - j)) & 1 == 1 {
                let bit = 4 * n + j;
                if bit >= m as usize {
                    return Err(malformed(index, format!("bit {bit} set beyond m = {m}")));
                }
                bits[bit] = 1;
            }
        }
    }
    Ok(LogEntry { hash_index: hash_index as u32, bits })
}

/// Inverse of `parse_entry`: always emits the full ceil(m/4) nibbles.
pub fn serialize_entry(hash_index: u32, bits: &[u8]) -> String {
    let mut out = format!("{hash_index},");
    for chunk in bits.chunks(4) {
        let mut v = 0u8;
        for (j, &b) in chunk.iter().enumerate() {
            debug_assert!(b <= 1, "bit rows are 0/1 valued");
            v |= b << (3 - j);
        }
        out.push(char::from_digit(u32::from(v), 16).expect("nibble fits in one hex digit"));
    }
    out
}

/// Decode one `hash_index,bit_index,y` line (y in {1, -1}), the single-bit
/// variant of the log format used by Hadamard-response exports.
pub fn parse_hcms_entry(
    s: &str,
    k: u32,
    d: u32,
    index: usize,
) -> Result<HcmsRecord, MalformedRecord> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(malformed(index, "expected 'hash_index,bit_index,y'"));
    }
    let hash_index: u64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| malformed(index, format!("hash index {:?} is not an integer", parts[0])))?;
    if hash_index >= u64::from(k) {
        return Err(malformed(index, format!("hash index {hash_index} out of range (k = {k})")));
    }
    let bit_index: u64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| malformed(index, format!("bit index {:?} is not an integer", parts[1])))?;
    if bit_index >= u64::from(d) {
        return Err(malformed(index, format!("bit index {bit_index} out of range (d = {d})")));
    }
    let y: i8 = match parts[2].trim() {
        "1" => 1,
        "-1" => -1,
        other => return Err(malformed(index, format!("y must be 1 or -1, got {other:?}"))),
    };
    Ok(HcmsRecord { y, hash_index: hash_index as u32, bit_index: bit_index as u32 })
}
