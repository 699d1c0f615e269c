//! Integer range coder over static cumulative-frequency tables.
//!
//! The coder keeps a 56-bit window `[low, low + range)` and renormalizes a
//! byte at a time whenever `range` drops below 2^48. Carries out of the
//! window are resolved with a cached byte plus a count of pending `0xFF`
//! bytes. Sub-intervals are rounded inward (start rounded up, end rounded
//! down), so the coded interval never exceeds the model probability and the
//! payload is never shorter than `-log2 q(x)`.
//!
//! For a stream that performed `E` renormalization shifts the payload is
//! exactly `E + 1` bytes, and
//!
//! ```text
//! 8 * |payload| - sum(-log2 q) = log2(range_final) - 48 + rounding loss
//! ```
//!
//! which lies in `[0, 8)` bits plus a rounding loss below 2^-30 bits per
//! symbol. A 32-bit window would leak roughly `n / (1000 * TOTAL)` bits per
//! symbol of an `n`-ary table, enough to exceed a fixed per-stream budget
//! after a few million symbols.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROB_BITS: u32 = 16;
/// Total of every table's frequencies.
pub const TOTAL: u32 = 1 << PROB_BITS;

const WINDOW_BITS: u32 = 56;
const TOP: u64 = 1 << WINDOW_BITS;
const BOT: u64 = 1 << (WINDOW_BITS - 8);
const WINDOW_BYTES: usize = (WINDOW_BITS / 8) as usize;
const INITIAL_RANGE: u64 = TOP - 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoderError {
    #[error("alphabet of {0} symbols cannot give every symbol a nonzero frequency")]
    AlphabetTooLarge(usize),
    #[error("empty alphabet")]
    EmptyAlphabet,
    #[error("symbol {symbol} outside alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },
    #[error("payload exhausted prematurely")]
    Exhausted,
    #[error("invalid cumulative table: {0}")]
    InvalidTable(&'static str),
}

/// Cumulative frequencies `cum[0] = 0 < ... < cum[n] = TOTAL`; symbol `s`
/// owns `[cum[s], cum[s+1])` and has probability `f[s] / TOTAL`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CdfTable {
    cum: Vec<u32>,
}

impl CdfTable {
    /// Add-one smoothing followed by largest-remainder scaling to `TOTAL`.
    pub fn from_frequencies(freqs: &[u64]) -> Result<CdfTable, CoderError> {
        let smoothed: Vec<u128> = freqs.iter().map(|&c| c as u128 + 1).collect();
        let sum: u128 = smoothed.iter().sum();
        let quotas: Vec<(u64, u128)> = smoothed
            .iter()
            .map(|&c| {
                let num = c * TOTAL as u128;
                ((num / sum) as u64, num % sum)
            })
            .collect();
        Self::apportion(&quotas)
    }

    /// Quantizes real probabilities (need not be normalized) the same way,
    /// without smoothing. Every symbol still receives at least one unit.
    pub fn from_probabilities(probs: &[f64]) -> Result<CdfTable, CoderError> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || !(sum > 0.0) {
            return Err(CoderError::InvalidTable("probabilities must be finite, non-negative, not all zero"));
        }
        // Fixed-point remainders keep the tie-breaking deterministic.
        const SCALE: f64 = (1u64 << 40) as f64;
        let quotas: Vec<(u64, u128)> = probs
            .iter()
            .map(|&p| {
                let q = p / sum * TOTAL as f64;
                let fl = q.floor();
                (fl as u64, ((q - fl) * SCALE) as u128)
            })
            .collect();
        Self::apportion(&quotas)
    }

    /// Largest-remainder apportionment of `TOTAL` units given integer floors
    /// and comparable remainders, keeping every symbol at one unit or more.
    fn apportion(quotas: &[(u64, u128)]) -> Result<CdfTable, CoderError> {
        let n = quotas.len();
        if n == 0 {
            return Err(CoderError::EmptyAlphabet);
        }
        if n > TOTAL as usize {
            return Err(CoderError::AlphabetTooLarge(n));
        }
        let mut f: Vec<u64> = quotas.iter().map(|&(fl, _)| fl.max(1)).collect();
        let assigned: u64 = f.iter().sum();
        let total = TOTAL as u64;
        if assigned < total {
            // Hand out the shortfall by descending remainder, index breaks ties.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| quotas[b].1.cmp(&quotas[a].1).then(a.cmp(&b)));
            let mut left = total - assigned;
            while left > 0 {
                for &i in &order {
                    if left == 0 {
                        break;
                    }
                    f[i] += 1;
                    left -= 1;
                }
            }
        } else if assigned > total {
            // Only reachable when minimum-one bumps overshoot; take units back
            // from the largest frequencies.
            let mut excess = assigned - total;
            while excess > 0 {
                let mut order: Vec<usize> = (0..n).filter(|&i| f[i] > 1).collect();
                order.sort_by(|&a, &b| f[b].cmp(&f[a]).then(quotas[a].1.cmp(&quotas[b].1)).then(a.cmp(&b)));
                for i in order {
                    if excess == 0 {
                        break;
                    }
                    f[i] -= 1;
                    excess -= 1;
                }
            }
        }
        let mut cum = Vec::with_capacity(n + 1);
        let mut acc = 0u32;
        cum.push(0);
        for x in f {
            acc += x as u32;
            cum.push(acc);
        }
        debug_assert_eq!(acc, TOTAL);
        Ok(CdfTable { cum })
    }

    /// Builds a table from an explicit cumulative array, checking invariants.
    pub fn from_cumulative(cum: Vec<u32>) -> Result<CdfTable, CoderError> {
        if cum.len() < 2 {
            return Err(CoderError::EmptyAlphabet);
        }
        if cum[0] != 0 {
            return Err(CoderError::InvalidTable("cum[0] must be 0"));
        }
        if *cum.last().unwrap() != TOTAL {
            return Err(CoderError::InvalidTable("cum[end] must equal TOTAL"));
        }
        if cum.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoderError::InvalidTable("every symbol needs a nonzero frequency"));
        }
        Ok(CdfTable { cum })
    }

    /// The uniform table over `n` symbols (what smoothing yields on no data).
    pub fn uniform(n: usize) -> Result<CdfTable, CoderError> {
        Self::from_frequencies(&vec![0; n])
    }

    pub fn alphabet_size(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cum
    }

    #[inline]
    pub fn freq(&self, s: usize) -> u32 {
        self.cum[s + 1] - self.cum[s]
    }

    /// `(cum[s], f[s])`.
    #[inline]
    pub fn interval(&self, s: usize) -> (u32, u32) {
        (self.cum[s], self.cum[s + 1] - self.cum[s])
    }

    pub fn probability(&self, s: usize) -> f64 {
        self.freq(s) as f64 / TOTAL as f64
    }

    /// `-log2(f[s] / TOTAL)`.
    #[inline]
    pub fn cost_bits(&self, s: usize) -> f64 {
        cost_bits(self.freq(s))
    }

    /// Shannon entropy of the table in bits.
    pub fn entropy(&self) -> f64 {
        (0..self.alphabet_size())
            .map(|s| {
                let f = self.freq(s);
                f as f64 / TOTAL as f64 * cost_bits(f)
            })
            .sum()
    }
}

/// `-log2(f / TOTAL)` from a lookup table.
#[inline]
pub fn cost_bits(freq: u32) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        (0..=TOTAL)
            .map(|f| if f == 0 { f64::INFINITY } else { PROB_BITS as f64 - (f as f64).log2() })
            .collect()
    });
    t[freq as usize]
}

/// Inward-rounded sub-interval of the current range: `(start, width)`.
#[inline]
fn narrow(range: u64, cum_lo: u32, freq: u32) -> (u64, u64) {
    let start = start_of(range, cum_lo);
    let end = ((range as u128 * (cum_lo + freq) as u128) >> PROB_BITS) as u64;
    (start, end - start)
}

#[inline]
fn start_of(range: u64, cum_lo: u32) -> u64 {
    ((range as u128 * cum_lo as u128 + (TOTAL as u128 - 1)) >> PROB_BITS) as u64
}

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u64,
    cache: Option<u8>,
    pending: u64,
    shifts: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> RangeEncoder {
        RangeEncoder {
            low: 0,
            range: INITIAL_RANGE,
            cache: None,
            pending: 0,
            shifts: 0,
            out: Vec::new(),
        }
    }

    pub fn encode(&mut self, cdf: &CdfTable, s: usize) -> Result<(), CoderError> {
        if s >= cdf.alphabet_size() {
            return Err(CoderError::SymbolOutOfRange {
                symbol: s,
                size: cdf.alphabet_size(),
            });
        }
        let (lo, f) = cdf.interval(s);
        self.encode_interval(lo, f);
        Ok(())
    }

    /// Encodes the interval `[cum_lo, cum_lo + freq)` of a `TOTAL`-scaled table.
    #[inline]
    pub fn encode_interval(&mut self, cum_lo: u32, freq: u32) {
        debug_assert!(freq >= 1 && cum_lo + freq <= TOTAL);
        let (start, width) = narrow(self.range, cum_lo, freq);
        self.low += start;
        self.range = width;
        while self.range < BOT {
            self.shift_low();
            self.range <<= 8;
        }
    }

    fn shift_low(&mut self) {
        self.shifts += 1;
        if self.low < 0xFF * BOT || self.low >= TOP {
            let carry = (self.low >> WINDOW_BITS) as u8;
            if let Some(c) = self.cache {
                self.out.push(c.wrapping_add(carry));
            }
            for _ in 0..self.pending {
                self.out.push(0xFFu8.wrapping_add(carry));
            }
            self.pending = 0;
            self.cache = Some(((self.low >> (WINDOW_BITS - 8)) & 0xFF) as u8);
        } else {
            self.pending += 1;
        }
        self.low = (self.low & (BOT - 1)) << 8;
    }

    /// Current range register; always at least 2^48 between symbols.
    pub fn range(&self) -> u64 {
        self.range
    }

    /// Payload length `finish` would produce right now.
    pub fn payload_len(&self) -> u64 {
        self.shifts + 1
    }

    /// Emits the shortest tail that pins a point inside the final interval:
    /// `low` is rounded up to a multiple of 2^48, which is still below
    /// `low + range`, so one more byte suffices.
    pub fn finish(mut self) -> Vec<u8> {
        self.low = (self.low + BOT - 1) & !(BOT - 1);
        self.shift_low();
        if let Some(c) = self.cache {
            self.out.push(c);
        }
        for _ in 0..self.pending {
            self.out.push(0xFF);
        }
        debug_assert_eq!(self.out.len() as u64, self.shifts);
        self.out
    }
}

/// Tracks only the range register. Payload length depends on nothing else,
/// so this yields exact payload sizes without producing bytes.
#[derive(Debug, Clone, Copy)]
pub struct LengthCounter {
    range: u64,
    shifts: u64,
}

impl Default for LengthCounter {
    fn default() -> Self {
        Self::new()
    }
}

impl LengthCounter {
    pub fn new() -> LengthCounter {
        LengthCounter {
            range: INITIAL_RANGE,
            shifts: 0,
        }
    }

    #[inline]
    pub fn encode_interval(&mut self, cum_lo: u32, freq: u32) {
        let (_, width) = narrow(self.range, cum_lo, freq);
        self.range = width;
        while self.range < BOT {
            self.shifts += 1;
            self.range <<= 8;
        }
    }

    pub fn payload_len(&self) -> u64 {
        self.shifts + 1
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    code: u64,
    range: u64,
    input: &'a [u8],
    pos: usize,
    padded: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> RangeDecoder<'a> {
        let mut d = RangeDecoder {
            code: 0,
            range: INITIAL_RANGE,
            input,
            pos: 0,
            padded: 0,
        };
        for _ in 0..WINDOW_BYTES {
            d.code = (d.code << 8) | d.next_byte() as u64;
        }
        d
    }

    #[inline]
    fn next_byte(&mut self) -> u8 {
        match self.input.get(self.pos) {
            Some(&b) => {
                self.pos += 1;
                b
            }
            None => {
                self.padded += 1;
                0
            }
        }
    }

    /// Decodes one symbol. Any byte string decodes to some symbol sequence;
    /// the only failure is reading more than the implicit zero tail allows.
    pub fn decode(&mut self, cdf: &CdfTable) -> Result<usize, CoderError> {
        // A well-formed payload always has code < range; clamping keeps
        // arbitrary input in a state the arithmetic can handle.
        let code = self.code.min(self.range - 1);
        let cum = cdf.cumulative();
        // Largest s with start(s) <= code.
        let (mut lo, mut hi) = (0usize, cdf.alphabet_size());
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if start_of(self.range, cum[mid]) <= code {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = lo;
        let (start, width) = narrow(self.range, cum[s], cum[s + 1] - cum[s]);
        self.code = code - start;
        self.range = width;
        while self.range < BOT {
            self.code = (self.code << 8) | self.next_byte() as u64;
            self.range <<= 8;
        }
        if self.padded > WINDOW_BYTES - 1 {
            return Err(CoderError::Exhausted);
        }
        Ok(s)
    }

    /// Bytes consumed from the payload so far.
    pub fn position(&self) -> usize {
        self.pos
    }
}

/// Encodes `(table, symbol)` pairs into one payload.
pub fn encode_all<'t>(
    items: impl IntoIterator<Item = (&'t CdfTable, usize)>,
) -> Result<Vec<u8>, CoderError> {
    let mut enc = RangeEncoder::new();
    for (t, s) in items {
        enc.encode(t, s)?;
    }
    Ok(enc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ideal_bits(t: &CdfTable, seq: &[usize]) -> f64 {
        seq.iter().map(|&s| -(t.probability(s)).log2()).sum()
    }

    #[test]
    fn smoothing_of_empty_counts_is_symmetric() {
        let t = CdfTable::from_frequencies(&[0, 0]).unwrap();
        assert_eq!(t.cumulative(), &[0, 32768, 65536]);
    }

    #[test]
    fn largest_remainder_on_three_to_one() {
        // smoothed 4:2 -> quotas 43690.67 and 21845.33; the unit left over
        // goes to the larger remainder.
        let t = CdfTable::from_frequencies(&[3, 1]).unwrap();
        assert_eq!(t.freq(0), 43691);
        assert_eq!(t.freq(1), 21845);
        assert_eq!(t.freq(0) + t.freq(1), TOTAL);
    }

    #[test]
    fn heavy_skew_keeps_every_symbol() {
        let mut counts = vec![0u64; 300];
        counts[0] = 1 << 40;
        let t = CdfTable::from_frequencies(&counts).unwrap();
        assert_eq!(*t.cumulative().last().unwrap(), TOTAL);
        assert!((0..300).all(|s| t.freq(s) >= 1));
        assert_eq!(t.freq(0), TOTAL - 299);
    }

    #[test]
    fn alphabet_limits() {
        assert_eq!(
            CdfTable::from_frequencies(&vec![0; TOTAL as usize + 1]).unwrap_err(),
            CoderError::AlphabetTooLarge(TOTAL as usize + 1)
        );
        let t = CdfTable::from_frequencies(&vec![0; TOTAL as usize]).unwrap();
        assert!((0..TOTAL as usize).all(|s| t.freq(s) == 1));
        assert_eq!(CdfTable::from_frequencies(&[]).unwrap_err(), CoderError::EmptyAlphabet);
    }

    #[test]
    fn single_symbol_costs_nothing() {
        let t = CdfTable::from_frequencies(&[17]).unwrap();
        assert_eq!(t.cumulative(), &[0, 65536]);
        let seq = vec![0usize; 10_000];
        let payload = encode_all(seq.iter().map(|&s| (&t, s))).unwrap();
        assert_eq!(payload.len(), 1);
    }

    #[test]
    fn from_cumulative_checks_invariants() {
        assert!(CdfTable::from_cumulative(vec![0, 10, 65536]).is_ok());
        assert!(CdfTable::from_cumulative(vec![0, 10, 10, 65536]).is_err());
        assert!(CdfTable::from_cumulative(vec![0, 65535]).is_err());
        assert!(CdfTable::from_cumulative(vec![1, 65536]).is_err());
    }

    #[test]
    fn uniform_binary_costs_one_bit_per_symbol() {
        let t = CdfTable::from_frequencies(&[0, 0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seq: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..2)).collect();
        let payload = encode_all(seq.iter().map(|&s| (&t, s))).unwrap();
        let bits = 8.0 * payload.len() as f64;
        assert!(bits >= 1000.0 && bits <= 1000.0 + 64.0, "{bits}");
    }

    #[test]
    fn near_certain_symbol_is_almost_free() {
        let t = CdfTable::from_cumulative(vec![0, 65535, 65536]).unwrap();
        let seq = vec![0usize; 1000];
        let ideal = ideal_bits(&t, &seq);
        // 1000 * -log2(65535/65536)
        assert!((ideal - 0.022014).abs() < 1e-5, "{ideal}");
        let payload = encode_all(seq.iter().map(|&s| (&t, s))).unwrap();
        let bits = 8.0 * payload.len() as f64;
        assert!(bits >= ideal && bits - ideal <= 64.0);
        assert!(payload.len() <= 8);
    }

    #[test]
    fn empty_stream_is_at_most_eight_bytes() {
        let payload = RangeEncoder::new().finish();
        assert!(payload.len() <= 8);
        assert_eq!(payload.len(), 1);
    }

    #[test]
    fn out_of_range_symbol_is_rejected() {
        let t = CdfTable::uniform(3).unwrap();
        let mut enc = RangeEncoder::new();
        assert_eq!(
            enc.encode(&t, 3),
            Err(CoderError::SymbolOutOfRange { symbol: 3, size: 3 })
        );
    }

    #[test]
    fn exhausted_payload_is_reported() {
        let t = CdfTable::uniform(256).unwrap();
        let seq: Vec<usize> = (0..100).map(|i| (i * 37) % 256).collect();
        let payload = encode_all(seq.iter().map(|&s| (&t, s))).unwrap();
        let cut = &payload[..payload.len() / 2];
        let mut dec = RangeDecoder::new(cut);
        let mut failed = false;
        for _ in 0..seq.len() {
            if dec.decode(&t) == Err(CoderError::Exhausted) {
                failed = true;
                break;
            }
        }
        assert!(failed);
    }

    #[test]
    fn million_symbol_skewed_stream_round_trips_within_bound() {
        // 4096 symbols with counts spanning 17 octaves: about 11 bits/symbol.
        let counts: Vec<u64> = (0..4096u64).map(|i| 1 << (i % 17)).collect();
        let t = CdfTable::from_frequencies(&counts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let cum = t.cumulative().to_vec();
        let seq: Vec<usize> = (0..1_000_000)
            .map(|_| {
                let u = rng.gen_range(0..TOTAL);
                cum.partition_point(|&c| c <= u) - 1
            })
            .collect();
        let payload = encode_all(seq.iter().map(|&s| (&t, s))).unwrap();
        let ideal = ideal_bits(&t, &seq);
        let overhead = 8.0 * payload.len() as f64 - ideal;
        assert!((0.0..64.0).contains(&overhead), "overhead {overhead}");
        assert!(overhead / ideal * 100.0 < 1e-4);
        let mut dec = RangeDecoder::new(&payload);
        for &s in &seq {
            assert_eq!(dec.decode(&t).unwrap(), s);
        }
    }

    #[test]
    fn length_counter_matches_encoder() {
        let tables: Vec<CdfTable> = (1..6)
            .map(|k| CdfTable::from_frequencies(&(0..(k * 7)).map(|i| (i * i) as u64).collect::<Vec<_>>()).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut enc = RangeEncoder::new();
        let mut len = LengthCounter::new();
        for _ in 0..50_000 {
            let t = &tables[rng.gen_range(0..tables.len())];
            let s = rng.gen_range(0..t.alphabet_size());
            let (lo, f) = t.interval(s);
            enc.encode_interval(lo, f);
            len.encode_interval(lo, f);
            assert!(enc.range() >= BOT);
        }
        assert_eq!(enc.payload_len(), len.payload_len());
        assert_eq!(enc.finish().len() as u64, len.payload_len());
    }

    #[test]
    fn carry_heavy_stream_round_trips() {
        // Always coding the top symbol of a skewed table pushes low toward
        // the top of the window and exercises 0xFF runs and carries.
        let t = CdfTable::from_cumulative(vec![0, 1, 65536]).unwrap();
        let u = CdfTable::from_cumulative(vec![0, 65535, 65536]).unwrap();
        let mut items = Vec::new();
        for i in 0..20_000 {
            if i % 97 == 0 {
                items.push((&u, 1));
            } else {
                items.push((&t, 1));
            }
        }
        let payload = encode_all(items.iter().copied()).unwrap();
        let mut dec = RangeDecoder::new(&payload);
        for (tab, s) in &items {
            assert_eq!(dec.decode(tab).unwrap(), *s);
        }
    }

    fn arb_tables() -> impl Strategy<Value = Vec<CdfTable>> {
        prop::collection::vec(prop::collection::vec(0u64..5000, 1..40), 1..5).prop_map(|v| {
            v.into_iter()
                .map(|c| CdfTable::from_frequencies(&c).unwrap())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn closure_and_codelength_bound(
            tables in arb_tables(),
            picks in prop::collection::vec((any::<u16>(), any::<u16>()), 0..3000),
        ) {
            let items: Vec<(usize, usize)> = picks
                .iter()
                .map(|&(a, b)| {
                    let ti = a as usize % tables.len();
                    (ti, b as usize % tables[ti].alphabet_size())
                })
                .collect();
            let payload = encode_all(items.iter().map(|&(t, s)| (&tables[t], s))).unwrap();
            let ideal: f64 = items.iter().map(|&(t, s)| tables[t].cost_bits(s)).sum();
            let overhead = 8.0 * payload.len() as f64 - ideal;
            prop_assert!(overhead >= 0.0 && overhead <= 64.0, "overhead {}", overhead);
            let mut dec = RangeDecoder::new(&payload);
            for &(t, s) in &items {
                prop_assert_eq!(dec.decode(&tables[t]).unwrap(), s);
            }
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200), n in 0usize..400) {
            let t = CdfTable::from_frequencies(&[5, 0, 100, 3, 3, 1000]).unwrap();
            let mut dec = RangeDecoder::new(&bytes);
            for _ in 0..n {
                match dec.decode(&t) {
                    Ok(s) => prop_assert!(s < 6),
                    Err(e) => { prop_assert_eq!(e, CoderError::Exhausted); break; }
                }
            }
        }

        #[test]
        fn scaling_is_exact_and_positive(counts in prop::collection::vec(0u64..u32::MAX as u64, 1..600)) {
            let t = CdfTable::from_frequencies(&counts).unwrap();
            prop_assert_eq!(*t.cumulative().last().unwrap(), TOTAL);
            prop_assert!((0..counts.len()).all(|s| t.freq(s) >= 1));
        }
    }
}
