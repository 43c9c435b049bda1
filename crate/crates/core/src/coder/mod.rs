//! Arithmetic coding with any finite-alphabet predictor as the model.
//!
//! A range coder with 62-bit registers. Each step quantizes the predictive
//! distribution to integer frequencies summing to 2³², every symbol getting
//! at least one unit. Carries propagate through a cached byte and a count of
//! pending `0xFF` bytes. At the end the encoder emits the shortest dyadic
//! interval, ending in a 1-bit, inside the final interval and drops trailing
//! zero bits, so the payload stays within `⌈−log₂ m̃ⁿ⌉ + 2` bits for the
//! quantized model `m̃`.
//!
//! Stream layout: symbol count (8 bytes, big-endian), model hash (8 bytes,
//! big-endian), then the payload, most significant bit first.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::families::FiniteSource;
use crate::mixtures::SequentialPredictor;
use crate::numeric::NeumaierSum;
use crate::rng::replicate_rng;

const WINDOW_BITS: u32 = 62;
const TOP: u64 = 1 << WINDOW_BITS;
const WINDOW_MASK: u64 = TOP - 1;
/// Renormalize while the range is below this.
const BOTTOM: u64 = 1 << 54;
const BYTE_SHIFT: u32 = WINDOW_BITS - 8;
const FREQ_BITS: u32 = 32;
/// Frequencies of one step sum to this.
pub const FREQ_TOTAL: u64 = 1 << FREQ_BITS;
pub const MAX_ALPHABET: usize = 1 << 16;
const HEADER_BYTES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodedBitstream {
    pub n: u64,
    pub model_hash: u64,
    pub payload: Vec<u8>,
}

impl CodedBitstream {
    /// Payload length in bits, up to and including the last 1-bit.
    pub fn payload_bits(&self) -> u64 {
        match self.payload.last() {
            None => 0,
            Some(&b) => 8 * self.payload.len() as u64 - b.trailing_zeros() as u64,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload.len());
        out.extend_from_slice(&self.n.to_be_bytes());
        out.extend_from_slice(&self.model_hash.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Decode {
                index: 0,
                reason: "stream shorter than its 16-byte header".into(),
            });
        }
        let n = u64::from_be_bytes(bytes[..8].try_into().expect("8 bytes"));
        let model_hash = u64::from_be_bytes(bytes[8..16].try_into().expect("8 bytes"));
        Ok(Self {
            n,
            model_hash,
            payload: bytes[HEADER_BYTES..].to_vec(),
        })
    }
}

/// First 8 bytes of SHA-256 over the predictor's JSON form.
pub fn model_hash<P: Serialize>(predictor: &P) -> Result<u64> {
    let json = serde_json::to_vec(predictor).map_err(|e| Error::Config(format!("cannot serialize model: {e}")))?;
    let digest = Sha256::digest(&json);
    Ok(u64::from_be_bytes(digest[..8].try_into().expect("8 bytes")))
}

/// Integer frequencies `f_i = 1 + ⌊p_i (T − K)⌋`, with what is left of `T`
/// going to the most probable symbol.
pub fn quantize(log_probs: &[f64]) -> Vec<u64> {
    let k = log_probs.len() as u64;
    let spread = (FREQ_TOTAL - k) as f64;
    let mut freqs: Vec<u64> = log_probs
        .iter()
        .map(|lp| 1 + (lp.exp() * spread).floor().min(spread) as u64)
        .collect();
    let sum: u64 = freqs.iter().sum();
    let best = log_probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty alphabet");
    if sum <= FREQ_TOTAL {
        freqs[best] += FREQ_TOTAL - sum;
    } else {
        // Only reachable if the probabilities sum to more than 1 by rounding.
        let excess = sum - FREQ_TOTAL;
        freqs[best] -= excess.min(freqs[best] - 1);
    }
    freqs
}

fn check_alphabet(k: usize) -> Result<()> {
    if k > MAX_ALPHABET {
        return Err(Error::Unsupported(format!(
            "alphabet of {k} symbols exceeds the coder limit {MAX_ALPHABET}"
        )));
    }
    Ok(())
}

/// Quantized step distribution: cumulative start and width of `symbol`.
fn interval(freqs: &[u64], symbol: usize) -> (u64, u64) {
    (freqs[..symbol].iter().sum(), freqs[symbol])
}

#[derive(Debug, Clone)]
struct Encoder {
    low: u64,
    range: u64,
    cache: u8,
    pending: u64,
    /// The first cached byte is a placeholder and never written.
    started: bool,
    symbols: u64,
    out: Vec<u8>,
}

impl Encoder {
    fn new() -> Self {
        Self {
            low: 0,
            range: TOP,
            cache: 0,
            pending: 0,
            started: false,
            symbols: 0,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        let carry = (self.low >> WINDOW_BITS) as u8;
        if (self.low & WINDOW_MASK) < (0xFF << BYTE_SHIFT) || carry != 0 {
            if self.started {
                self.out.push(self.cache.wrapping_add(carry));
            }
            self.started = true;
            for _ in 0..self.pending {
                self.out.push(0xFFu8.wrapping_add(carry));
            }
            self.pending = 0;
            self.cache = ((self.low >> BYTE_SHIFT) & 0xFF) as u8;
        } else {
            self.pending += 1;
        }
        self.low = (self.low & ((1 << BYTE_SHIFT) - 1)) << 8;
    }

    fn encode(&mut self, start: u64, width: u64) {
        self.symbols += 1;
        let r = self.range >> FREQ_BITS;
        self.low += r * start;
        self.range = r * width;
        while self.range < BOTTOM {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Terminates with the shortest bit string `c`, ending in a 1, whose
    /// dyadic interval `[c, c + 2^−|c|)` lies inside `[low, low + range)`.
    /// Such codewords are prefix-free, so a truncated payload never decodes
    /// cleanly. Returns the bytes without trailing zeros.
    fn finish(mut self) -> Vec<u8> {
        if self.symbols == 0 {
            return Vec::new();
        }
        let end = self.low + self.range;
        for b in 1..=WINDOW_BITS {
            let unit = 1u64 << (WINDOW_BITS - b);
            let m = self.low.div_ceil(unit) | 1;
            if (m + 1) * unit <= end {
                self.low = m * unit;
                break;
            }
        }
        // Push every window bit out, then flush the cache and pending bytes.
        for _ in 0..9 {
            self.shift_low();
        }
        while self.out.last() == Some(&0) {
            self.out.pop();
        }
        self.out
    }
}

/// Reads the payload bit by bit, returning zeros past its end.
struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn bits(&mut self, count: u32) -> u64 {
        let mut v = 0;
        for _ in 0..count {
            let byte = self.bytes.get(self.pos / 8).copied().unwrap_or(0);
            v = (v << 1) | ((byte >> (7 - self.pos % 8)) & 1) as u64;
            self.pos += 1;
        }
        v
    }
}

/// Statistics of one encoding run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodeStats {
    /// `−log₂ m̃ⁿ(ω)` under the quantized model.
    pub quantized_bits: f64,
    /// `−log₂ mⁿ(ω)` under the exact model.
    pub model_bits: f64,
    pub payload_bits: u64,
}

pub fn encode<P>(predictor: &P, sequence: &[usize]) -> Result<CodedBitstream>
where
    P: SequentialPredictor + Clone + Serialize,
{
    encode_with_stats(predictor, sequence).map(|(s, _)| s)
}

pub fn encode_with_stats<P>(predictor: &P, sequence: &[usize]) -> Result<(CodedBitstream, EncodeStats)>
where
    P: SequentialPredictor + Clone + Serialize,
{
    let k = predictor.alphabet_size();
    check_alphabet(k)?;
    let model_hash = model_hash(predictor)?;
    let mut model = predictor.clone();
    let mut enc = Encoder::new();
    let mut logs = vec![0.0; k];
    let mut quantized = NeumaierSum::new();
    for &s in sequence {
        model.predictive_log_probs(&mut logs);
        let freqs = quantize(&logs);
        let (start, width) = interval(&freqs, s.min(k - 1));
        model.observe(s)?;
        quantized.add((width as f64).log2() - FREQ_BITS as f64);
        enc.encode(start, width);
    }
    let stream = CodedBitstream {
        n: sequence.len() as u64,
        model_hash,
        payload: enc.finish(),
    };
    let stats = EncodeStats {
        quantized_bits: -quantized.value(),
        model_bits: -model.log_marginal() / std::f64::consts::LN_2 + predictor.log_marginal() / std::f64::consts::LN_2,
        payload_bits: stream.payload_bits(),
    };
    Ok((stream, stats))
}

fn decode_error(index: u64, reason: impl Into<String>) -> Error {
    Error::Decode {
        index,
        reason: reason.into(),
    }
}

/// Inverts [`encode`] given an identically constructed predictor.
///
/// The decoder re-encodes what it decodes; any byte that disagrees with the
/// payload, or a payload of the wrong length, is reported at the symbol
/// where it shows up.
pub fn decode<P>(predictor: &P, stream: &CodedBitstream) -> Result<Vec<usize>>
where
    P: SequentialPredictor + Clone + Serialize,
{
    let k = predictor.alphabet_size();
    check_alphabet(k)?;
    if model_hash(predictor)? != stream.model_hash {
        return Err(decode_error(0, "model hash does not match the stream"));
    }
    let n = stream.n;
    let payload = &stream.payload;
    let mut reader = BitReader { bytes: payload, pos: 0 };
    let mut code = reader.bits(WINDOW_BITS);
    let mut range = TOP;
    let mut model = predictor.clone();
    let mut mirror = Encoder::new();
    let mut logs = vec![0.0; k];
    let mut out = Vec::with_capacity(n.min(1 << 24) as usize);
    let mut checked = 0;
    for i in 0..n {
        model.predictive_log_probs(&mut logs);
        let freqs = quantize(&logs);
        let r = range >> FREQ_BITS;
        let target = (code / r).min(FREQ_TOTAL - 1);
        let mut start = 0;
        let mut symbol = 0;
        while start + freqs[symbol] <= target {
            start += freqs[symbol];
            symbol += 1;
        }
        let width = freqs[symbol];
        code -= r * start;
        range = r * width;
        if code >= range {
            return Err(decode_error(i, "code value fell outside the coding interval"));
        }
        while range < BOTTOM {
            range <<= 8;
            code = (code << 8) | reader.bits(8);
        }
        model.observe(symbol)?;
        mirror.encode(start, width);
        for (j, &b) in mirror.out.iter().enumerate().skip(checked) {
            if payload.get(j).copied().unwrap_or(0) != b {
                let why = if j >= payload.len() {
                    "payload truncated"
                } else {
                    "payload corrupted"
                };
                return Err(decode_error(i, why));
            }
        }
        checked = mirror.out.len();
        out.push(symbol);
    }
    if mirror.finish() != *payload {
        return Err(decode_error(
            n.saturating_sub(1),
            "payload length or tail does not match the decoded symbols",
        ));
    }
    Ok(out)
}

/// Mean code lengths over `samples` seeded draws from the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodelengthReport {
    pub n: usize,
    pub samples: usize,
    pub mean_payload_bits: f64,
    /// Mean `−log₂ pⁿ_θ₀(ω)`.
    pub mean_source_bits: f64,
    /// Mean `−log₂ mⁿ(ω)`.
    pub mean_model_bits: f64,
    /// `mean_payload_bits − mean_source_bits`.
    pub mean_overhead_bits: f64,
    /// Mean payload ≤ mean model bits + 2 + `n·2⁻²⁰`.
    pub within_bound: bool,
}

pub fn codelength_report<P>(
    source: &FiniteSource,
    predictor: &P,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<CodelengthReport>
where
    P: SequentialPredictor + Clone + Serialize + Sync,
{
    if samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let rows: Vec<(f64, f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|r| {
            let (seq, lp) = source.sample_with_log_prob(n, &mut replicate_rng(seed, r));
            let (stream, stats) = encode_with_stats(predictor, &seq)?;
            Ok((
                stream.payload_bits() as f64,
                -lp / std::f64::consts::LN_2,
                stats.model_bits,
            ))
        })
        .collect::<Result<_>>()?;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).collect::<NeumaierSum>().value() / samples as f64;
    let payload = mean(|r| r.0);
    let src = mean(|r| r.1);
    let model = mean(|r| r.2);
    let slack = n as f64 * (-20f64).exp2();
    Ok(CodelengthReport {
        n,
        samples,
        mean_payload_bits: payload,
        mean_source_bits: src,
        mean_model_bits: model,
        mean_overhead_bits: payload - src,
        within_bound: payload <= model + 2.0 + slack,
    })
}
