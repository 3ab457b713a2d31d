//! Two-party execution fabric: additive secret sharing modulo a Mersenne
//! prime, a transcript that records only message lengths and tags, and ideal
//! functionalities (generic SMC and Private Sample Sum) charged with a fixed
//! cost model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ceil_log2, TermVector};
use crate::seed::Seed;

/// `2^61 − 1`.
pub const PRIME: u64 = (1 << 61) - 1;

/// Bytes per field element on the wire.
pub const WORD_BYTES: u64 = 8;

/// Bytes charged per `(k, log₂N)` unit by one Private Sample Sum call.
pub const PSS_UNIT_BYTES: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Share {
    pub value: u64,
    pub party: Party,
}

/// `x mod p`, for `|x| < p/2`.
pub fn to_field(x: i64) -> Result<u64> {
    if x.unsigned_abs() >= PRIME / 2 {
        return Err(Error::ValueOutOfRange {
            position: 0,
            value: x as i128,
            bound: (PRIME / 2) as i128,
        });
    }
    Ok(if x >= 0 { x as u64 } else { PRIME - x.unsigned_abs() })
}

/// Signed representative in `(−p/2, p/2]`.
pub fn from_field(v: u64) -> i64 {
    let v = v % PRIME;
    if v > PRIME / 2 {
        -((PRIME - v) as i64)
    } else {
        v as i64
    }
}

pub(crate) fn add_mod(x: u64, y: u64) -> u64 {
    let s = x + y; // both < 2^61, no overflow
    if s >= PRIME {
        s - PRIME
    } else {
        s
    }
}

fn sub_mod(x: u64, y: u64) -> u64 {
    if x >= y {
        x - y
    } else {
        x + PRIME - y
    }
}

/// Shares `x` with an explicit mask: Alice gets `r`, Bob gets `x − r`.
pub fn share_with_mask(x: i64, r: u64) -> Result<(Share, Share)> {
    let fx = to_field(x)?;
    let r = r % PRIME;
    Ok((
        Share {
            value: r,
            party: Party::A,
        },
        Share {
            value: sub_mod(fx, r),
            party: Party::B,
        },
    ))
}

/// Shares `x` with a mask drawn uniformly from `[0, p)` using `randomness`.
pub fn share(x: i64, randomness: &Seed) -> Result<(Share, Share)> {
    let r = randomness.rng().random_range(0..PRIME);
    share_with_mask(x, r)
}

pub fn reconstruct(a: Share, b: Share) -> i64 {
    from_field(add_mod(a.value % PRIME, b.value % PRIME))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    AliceToBob,
    BobToAlice,
}

impl Serialize for Direction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(match self {
            Direction::AliceToBob => "A→B",
            Direction::BobToAlice => "B→A",
        })
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match String::deserialize(d)?.as_str() {
            "A→B" => Ok(Direction::AliceToBob),
            "B→A" => Ok(Direction::BobToAlice),
            other => Err(serde::de::Error::custom(format!("bad direction {other:?}"))),
        }
    }
}

/// One logged message. `payload` is only ever set for data that is public by
/// construction (the seeds exchanged in the clear).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub round: u32,
    pub dir: Direction,
    pub bytes: u64,
    pub tag: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub payload: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    messages: Vec<Message>,
    rounds: u32,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens a new round and returns its number (1-based).
    pub fn begin_round(&mut self) -> u32 {
        self.rounds += 1;
        self.rounds
    }

    fn current_round(&mut self) -> u32 {
        if self.rounds == 0 {
            self.begin_round();
        }
        self.rounds
    }

    pub fn send(&mut self, dir: Direction, bytes: u64, tag: &str) {
        let round = self.current_round();
        self.messages.push(Message {
            round,
            dir,
            bytes,
            tag: tag.to_string(),
            payload: None,
        });
    }

    pub fn send_public(&mut self, dir: Direction, bytes: u64, tag: &str, payload: String) {
        let round = self.current_round();
        self.messages.push(Message {
            round,
            dir,
            bytes,
            tag: tag.to_string(),
            payload: Some(payload),
        });
    }

    /// Logs `bytes` split between the two directions.
    fn send_both(&mut self, bytes: u64, tag: &str) {
        let there = bytes.div_ceil(2);
        self.send(Direction::AliceToBob, there, tag);
        self.send(Direction::BobToAlice, bytes - there, tag);
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn total_bytes(&self) -> u64 {
        self.messages.iter().map(|m| m.bytes).sum()
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    /// One JSON object per line: `{round, dir, bytes, tag}` (plus `payload`
    /// for public messages).
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&serde_json::to_string(m).expect("message serializes"));
            out.push('\n');
        }
        out
    }
}

/// Declaration of an ideal two-party functionality: the number of 8-byte
/// words each party feeds in and receives, plus a gate-count proxy for the
/// circuit. Cost: `k·(input bytes + output bytes + circuit_proxy)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdealFunctionality {
    pub name: String,
    pub input_words: (usize, usize),
    pub output_words: (usize, usize),
    pub circuit_proxy: u64,
}

impl IdealFunctionality {
    pub fn new(name: &str, input_words: (usize, usize), output_words: (usize, usize), circuit_proxy: u64) -> Self {
        IdealFunctionality {
            name: name.to_string(),
            input_words,
            output_words,
            circuit_proxy,
        }
    }

    pub fn charge(&self, k: u32) -> u64 {
        let input = WORD_BYTES * (self.input_words.0 + self.input_words.1) as u64;
        let output = WORD_BYTES * (self.output_words.0 + self.output_words.1) as u64;
        k as u64 * (input + output + self.circuit_proxy)
    }
}

/// Evaluates `f` as a trusted party would: both inputs go in, each party
/// receives its output. Charges one round and `f.charge(k)` bytes.
pub fn smc_eval<F>(
    transcript: &mut Transcript,
    k: u32,
    f: &IdealFunctionality,
    inputs_a: &[u64],
    inputs_b: &[u64],
    compute: F,
) -> Result<(Vec<u64>, Vec<u64>)>
where
    F: FnOnce(&[u64], &[u64]) -> Result<(Vec<u64>, Vec<u64>)>,
{
    if inputs_a.len() != f.input_words.0 {
        return Err(Error::DimensionMismatch {
            expected: f.input_words.0,
            actual: inputs_a.len(),
        });
    }
    if inputs_b.len() != f.input_words.1 {
        return Err(Error::DimensionMismatch {
            expected: f.input_words.1,
            actual: inputs_b.len(),
        });
    }
    let (out_a, out_b) = compute(inputs_a, inputs_b)?;
    if out_a.len() != f.output_words.0 || out_b.len() != f.output_words.1 {
        return Err(Error::InvalidParams(format!(
            "functionality {} produced ({}, {}) words, declared {:?}",
            f.name,
            out_a.len(),
            out_b.len(),
            f.output_words
        )));
    }
    transcript.begin_round();
    transcript.send_both(f.charge(k), &f.name);
    Ok((out_a, out_b))
}

/// Bytes charged by one Private Sample Sum call: `k·⌈log₂N⌉·32`.
pub fn pss_cost(k: u32, n: usize) -> u64 {
    k as u64 * ceil_log2(n as u128).max(1) as u64 * PSS_UNIT_BYTES
}

/// Private Sample Sum: from a sharing of an index `i`, returns a fresh sharing
/// of `a_i + b_i`. Logged in the transcript's current round.
pub fn pss(
    transcript: &mut Transcript,
    k: u32,
    a: &TermVector,
    b: &TermVector,
    index: (Share, Share),
    randomness: &Seed,
) -> Result<(Share, Share)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let i = reconstruct(index.0, index.1);
    if i < 0 || i as usize >= a.len() {
        return Err(Error::IndexOutOfRange {
            index: i.max(0) as usize,
            len: a.len(),
        });
    }
    let i = i as usize;
    let out = share(a.values()[i] + b.values()[i], randomness)?;
    transcript.send_both(pss_cost(k, a.len()), "pss");
    Ok(out)
}
