//! Dataset encoder and decoder with exact per-stream bit accounting.
//!
//! Symbols are routed into four independent coder streams (occupancy,
//! strip, ADC, kinematics), each keeping the event emission order. The
//! compressed container binds the model hash so a payload is never decoded
//! under the wrong model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coder::{cost_bits, CoderError, LengthCounter, RangeDecoder, RangeEncoder};
use crate::event::{Dataset, Event, EventError, LayerView, N_LAYERS};
use crate::model::{raise_with, visit_symbols, Mode, ModelBundle, ModelError, Tag, TableRef};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("payload was encoded under model {expected}, decoder holds model {found}")]
    HashMismatch { expected: String, found: String },
    #[error("payload was encoded in {expected} mode, model is {found}")]
    ModeMismatch { expected: &'static str, found: &'static str },
    #[error("not a compressed dataset")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("truncated container")]
    TruncatedContainer,
    #[error("truncated {0} section")]
    TruncatedSection(&'static str),
    #[error("grammar violation: {0}")]
    Grammar(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Event(#[from] EventError),
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Hit components that are tallied per layer-view.
pub const HIT_TAGS: [Tag; 3] = [Tag::Occ, Tag::Strip, Tag::Adc];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CodelengthAccount {
    pub n_events: u64,
    /// Ideal bits `sum -log2 q` per layer-view and hit component.
    pub hit_ideal: [[CompensatedSum; 3]; N_LAYERS],
    pub kin_ideal: CompensatedSum,
    /// Ideal bits accumulated in one running sum over every symbol.
    pub total_ideal: CompensatedSum,
    /// Payload bits per stream (8 times the payload bytes).
    pub achieved_bits: [u64; 4],
    pub symbols: [u64; 4],
    /// Occupied slots per layer-view.
    pub hits: [u64; N_LAYERS],
}

impl CodelengthAccount {
    #[inline]
    fn record(&mut self, r: TableRef, bits: f64) {
        let tag = r.tag();
        self.symbols[tag.index()] += 1;
        self.total_ideal.add(bits);
        match r.layer() {
            Some(lv) => self.hit_ideal[lv.index()][tag.index()].add(bits),
            None => self.kin_ideal.add(bits),
        }
    }

    pub fn ideal(&self, lv: LayerView, tag: Tag) -> f64 {
        self.hit_ideal[lv.index()][tag.index()].value()
    }

    /// Ideal bits of one stream, summed from the per-layer cells.
    pub fn section_ideal(&self, tag: Tag) -> f64 {
        match tag {
            Tag::Kin => self.kin_ideal.value(),
            _ => {
                let mut s = CompensatedSum::default();
                for row in &self.hit_ideal {
                    s.add(row[tag.index()].value());
                }
                s.value()
            }
        }
    }

    /// Sum of all component cells.
    pub fn ideal_from_components(&self) -> f64 {
        let mut s = CompensatedSum::default();
        for row in &self.hit_ideal {
            for c in row {
                s.add(c.value());
            }
        }
        s.add(self.kin_ideal.value());
        s.value()
    }

    pub fn hit_ideal_total(&self) -> f64 {
        let mut s = CompensatedSum::default();
        for row in &self.hit_ideal {
            for c in row {
                s.add(c.value());
            }
        }
        s.value()
    }

    pub fn ideal_total(&self) -> f64 {
        self.total_ideal.value()
    }

    pub fn achieved_total(&self) -> u64 {
        self.achieved_bits.iter().sum()
    }

    /// `|components - running total|`.
    pub fn additivity_gap(&self) -> f64 {
        (self.ideal_from_components() - self.ideal_total()).abs()
    }

    /// Achieved minus ideal bits of one stream.
    pub fn section_overhead(&self, tag: Tag) -> f64 {
        self.achieved_bits[tag.index()] as f64 - self.section_ideal(tag)
    }

    pub fn mean_achieved(&self) -> f64 {
        self.achieved_total() as f64 / self.n_events as f64
    }

    pub fn mean_ideal(&self) -> f64 {
        self.ideal_total() / self.n_events as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub tag: Tag,
    pub symbol_count: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedDataset {
    pub mode: Mode,
    pub model_hash: [u8; 32],
    pub n_events: u64,
    pub sections: [Section; 4],
}

const CONTAINER_MAGIC: &[u8; 8] = b"ACZDATA1";
pub const CONTAINER_VERSION: u32 = 1;

impl CompressedDataset {
    pub fn payload_bytes(&self) -> usize {
        self.sections.iter().map(|s| s.payload.len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.payload_bytes() + 4 * 17);
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.push(mode_code(self.mode));
        out.extend_from_slice(&self.model_hash);
        out.extend_from_slice(&self.n_events.to_le_bytes());
        for s in &self.sections {
            out.push(s.tag.index() as u8);
            out.extend_from_slice(&s.symbol_count.to_le_bytes());
            out.extend_from_slice(&(s.payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&s.payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CompressedDataset, CodecError> {
        if bytes.len() < 8 || &bytes[..8] != CONTAINER_MAGIC {
            return Err(CodecError::BadMagic);
        }
        let mut pos: usize = 8;
        let mut take = |n: usize| -> Result<&[u8], CodecError> {
            let end = pos.checked_add(n).ok_or(CodecError::TruncatedContainer)?;
            let s = bytes.get(pos..end).ok_or(CodecError::TruncatedContainer)?;
            pos = end;
            Ok(s)
        };
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != CONTAINER_VERSION {
            return Err(CodecError::Version(version));
        }
        let mode = match take(1)?[0] {
            0 => Mode::Unconditional,
            1 => Mode::Conditional,
            m => return Err(CodecError::Grammar(format!("unknown mode {m}"))),
        };
        let model_hash: [u8; 32] = take(32)?.try_into().unwrap();
        let n_events = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let mut sections = Vec::with_capacity(4);
        for expected in Tag::ALL {
            let tag = take(1)?[0];
            if tag as usize != expected.index() {
                return Err(CodecError::Grammar(format!(
                    "section {tag} where {} was expected",
                    expected.name()
                )));
            }
            let symbol_count = u64::from_le_bytes(take(8)?.try_into().unwrap());
            let len = u64::from_le_bytes(take(8)?.try_into().unwrap());
            let len = usize::try_from(len).map_err(|_| CodecError::TruncatedSection(expected.name()))?;
            let payload = take(len)
                .map_err(|_| CodecError::TruncatedSection(expected.name()))?
                .to_vec();
            sections.push(Section {
                tag: expected,
                symbol_count,
                payload,
            });
        }
        if pos != bytes.len() {
            return Err(CodecError::Grammar(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(CompressedDataset {
            mode,
            model_hash,
            n_events,
            sections: sections.try_into().unwrap(),
        })
    }
}

fn mode_code(m: Mode) -> u8 {
    match m {
        Mode::Unconditional => 0,
        Mode::Conditional => 1,
    }
}

/// Ideal bits of `e` under `m`, added into `acc`.
pub fn account_event(m: &ModelBundle, e: &Event, acc: &mut CodelengthAccount) {
    acc.n_events += 1;
    for l in 0..N_LAYERS {
        acc.hits[l] += e.hit_count(l) as u64;
    }
    visit_symbols(m, e, |r, t, s| acc.record(r, cost_bits(t.freq(s))));
}

pub fn encode_dataset(
    ds: &Dataset,
    m: &ModelBundle,
) -> Result<(CompressedDataset, CodelengthAccount), CodecError> {
    let mut encoders: [RangeEncoder; 4] = Default::default();
    let mut acc = CodelengthAccount::default();
    for e in ds.events() {
        acc.n_events += 1;
        for l in 0..N_LAYERS {
            acc.hits[l] += e.hit_count(l) as u64;
        }
        visit_symbols(m, e, |r, t, s| {
            let (lo, f) = t.interval(s);
            encoders[r.tag().index()].encode_interval(lo, f);
            acc.record(r, cost_bits(f));
        });
    }
    let sections: Vec<Section> = encoders
        .into_iter()
        .zip(Tag::ALL)
        .map(|(enc, tag)| Section {
            tag,
            symbol_count: acc.symbols[tag.index()],
            payload: enc.finish(),
        })
        .collect();
    for s in &sections {
        acc.achieved_bits[s.tag.index()] = 8 * s.payload.len() as u64;
    }
    Ok((
        CompressedDataset {
            mode: m.mode(),
            model_hash: m.hash(),
            n_events: ds.len() as u64,
            sections: sections.try_into().unwrap(),
        },
        acc,
    ))
}

pub fn decode_dataset(cd: &CompressedDataset, m: &ModelBundle) -> Result<Dataset, CodecError> {
    if cd.model_hash != m.hash() {
        return Err(CodecError::HashMismatch {
            expected: hex::encode(cd.model_hash),
            found: m.hash_hex(),
        });
    }
    if cd.mode != m.mode() {
        return Err(CodecError::ModeMismatch {
            expected: cd.mode.name(),
            found: m.mode().name(),
        });
    }
    if cd.n_events == 0 {
        return Err(CodecError::Event(EventError::Empty));
    }
    let mut decoders: Vec<RangeDecoder> = cd.sections.iter().map(|s| RangeDecoder::new(&s.payload)).collect();
    let mut consumed = [0u64; 4];
    let mut events = Vec::with_capacity(cd.n_events.min(1 << 24) as usize);
    for _ in 0..cd.n_events {
        let e = raise_with(m, |r, t| {
            let i = r.tag().index();
            consumed[i] += 1;
            if consumed[i] > cd.sections[i].symbol_count {
                return Err(CodecError::Grammar(format!(
                    "{} section holds fewer symbols than the events need",
                    r.tag().name()
                )));
            }
            decoders[i].decode(t).map_err(|e| match e {
                CoderError::Exhausted => CodecError::TruncatedSection(r.tag().name()),
                other => CodecError::Grammar(other.to_string()),
            })
        })?;
        events.push(e);
    }
    for s in &cd.sections {
        if consumed[s.tag.index()] != s.symbol_count {
            return Err(CodecError::Grammar(format!(
                "{} section declares {} symbols, events used {}",
                s.tag.name(),
                s.symbol_count,
                consumed[s.tag.index()]
            )));
        }
    }
    Ok(Dataset::new(events, "decoded")?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub equal: bool,
    pub achieved_bits: u64,
    pub ideal_bits: f64,
    pub overhead_pct: f64,
    pub diagnostic: Option<String>,
}

/// Encode under `encoder_model`, decode under `decoder_model`, compare.
pub fn closure_check_with(ds: &Dataset, encoder_model: &ModelBundle, decoder_model: &ModelBundle) -> ClosureReport {
    let (cd, acc) = match encode_dataset(ds, encoder_model) {
        Ok(x) => x,
        Err(e) => {
            return ClosureReport {
                equal: false,
                achieved_bits: 0,
                ideal_bits: 0.0,
                overhead_pct: f64::NAN,
                diagnostic: Some(format!("encode failed: {e}")),
            }
        }
    };
    let achieved = acc.achieved_total();
    let ideal = acc.ideal_total();
    let overhead_pct = (achieved as f64 - ideal) / ideal * 100.0;
    // Round trip through the serialized container too.
    let decoded = CompressedDataset::from_bytes(&cd.to_bytes()).and_then(|cd| decode_dataset(&cd, decoder_model));
    let (equal, diagnostic) = match decoded {
        Ok(back) if back.events() == ds.events() => (true, None),
        Ok(back) => {
            let first = ds.events().iter().zip(back.events()).position(|(a, b)| a != b);
            (false, Some(format!("decoded events differ, first at index {first:?}")))
        }
        Err(e) => (false, Some(format!("decode failed: {e}"))),
    };
    ClosureReport {
        equal,
        achieved_bits: achieved,
        ideal_bits: ideal,
        overhead_pct,
        diagnostic,
    }
}

pub fn closure_check(ds: &Dataset, m: &ModelBundle) -> ClosureReport {
    closure_check_with(ds, m, m)
}

/// Coder intervals of every event, grouped by stream, for repeated length
/// measurements over subsets of events.
#[derive(Debug, Clone)]
pub struct LoweredDataset {
    intervals: [Vec<(u32, u32)>; 4],
    /// `offsets[tag][i]..offsets[tag][i+1]` are event `i`'s intervals.
    offsets: [Vec<usize>; 4],
    ideal_bits: Vec<f64>,
}

impl LoweredDataset {
    pub fn new(ds: &Dataset, m: &ModelBundle) -> LoweredDataset {
        let mut intervals: [Vec<(u32, u32)>; 4] = Default::default();
        let mut offsets: [Vec<usize>; 4] = Default::default();
        for o in offsets.iter_mut() {
            o.reserve(ds.len() + 1);
            o.push(0);
        }
        let mut ideal_bits = Vec::with_capacity(ds.len());
        for e in ds.events() {
            let mut bits = CompensatedSum::default();
            visit_symbols(m, e, |r, t, s| {
                let (lo, f) = t.interval(s);
                intervals[r.tag().index()].push((lo, f));
                bits.add(cost_bits(f));
            });
            for (o, iv) in offsets.iter_mut().zip(&intervals) {
                o.push(iv.len());
            }
            ideal_bits.push(bits.value());
        }
        LoweredDataset {
            intervals,
            offsets,
            ideal_bits,
        }
    }

    pub fn len(&self) -> usize {
        self.ideal_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ideal_bits.is_empty()
    }

    /// `-log2 q(event)` per event.
    pub fn ideal_bits(&self) -> &[f64] {
        &self.ideal_bits
    }

    /// Payload bits of the four streams obtained by encoding the given
    /// events, in that order.
    pub fn achieved_bits(&self, events: &[usize]) -> u64 {
        // Streams are independent; advancing them in lockstep lets their
        // dependency chains overlap.
        let mut c = [LengthCounter::new(); 4];
        for &i in events {
            let s: [&[(u32, u32)]; 4] =
                std::array::from_fn(|t| &self.intervals[t][self.offsets[t][i]..self.offsets[t][i + 1]]);
            let n = s.iter().map(|v| v.len()).max().unwrap_or(0);
            for j in 0..n {
                for t in 0..4 {
                    if let Some(&(lo, f)) = s[t].get(j) {
                        c[t].encode_interval(lo, f);
                    }
                }
            }
        }
        c.iter().map(|c| 8 * c.payload_len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coder::CdfTable;
    use crate::event::{MAX_SLOTS, N_LAYERS};
    use crate::generator::{generate_synthetic, SyntheticConfig};
    use crate::model::{fit_conditional, fit_unconditional, MomentumBinning};

    fn sample(n: usize, seed: u64) -> Dataset {
        generate_synthetic(&SyntheticConfig::default().with_seed(seed, n)).unwrap()
    }

    #[test]
    fn neumaier_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn empty_event_under_uniform_occupancy_costs_180_bits() {
        let ds = Dataset::new(vec![Event::empty([0.0, 0.0, 1.0])], "t").unwrap();
        let base = fit_unconditional(&ds).unwrap();
        let occ = vec![CdfTable::uniform(2).unwrap(); N_LAYERS * MAX_SLOTS];
        let strip = (0..N_LAYERS).map(|l| base.strip_table(0, l).clone()).collect();
        let hi = (0..N_LAYERS).map(|l| base.adc_hi_table(0, l).clone()).collect();
        let lo = (0..N_LAYERS).map(|l| base.adc_lo_table(0, l).clone()).collect();
        let m = base.with_hit_tables(occ, strip, hi, lo).unwrap();
        let (cd, acc) = encode_dataset(&ds, &m).unwrap();
        assert_eq!(acc.section_ideal(Tag::Occ), 180.0);
        assert!(acc.achieved_bits[Tag::Occ.index()] >= 180);
        assert!(acc.section_overhead(Tag::Occ) <= 64.0);
        assert_eq!(acc.section_ideal(Tag::Strip), 0.0);
        assert_eq!(acc.section_ideal(Tag::Adc), 0.0);
        assert_eq!(cd.sections[Tag::Strip.index()].symbol_count, 0);
        assert_eq!(decode_dataset(&cd, &m).unwrap().events(), ds.events());
    }

    #[test]
    fn round_trip_both_modes() {
        let train = sample(2000, 1);
        let test = sample(500, 2);
        for m in [
            fit_unconditional(&train).unwrap(),
            fit_conditional(&train, &MomentumBinning::default()).unwrap(),
        ] {
            let (cd, acc) = encode_dataset(&test, &m).unwrap();
            let back = decode_dataset(&CompressedDataset::from_bytes(&cd.to_bytes()).unwrap(), &m).unwrap();
            assert_eq!(back.events(), test.events());
            for tag in Tag::ALL {
                let o = acc.section_overhead(tag);
                assert!((0.0..=64.0).contains(&o), "{tag:?} {o}");
            }
            assert!(acc.additivity_gap() < 1e-6);
        }
    }

    #[test]
    fn hash_mismatch_is_refused_before_decoding() {
        let a = fit_unconditional(&sample(50, 1)).unwrap();
        let b = fit_unconditional(&sample(50, 2)).unwrap();
        let ds = sample(10, 3);
        let (mut cd, _) = encode_dataset(&ds, &a).unwrap();
        assert!(matches!(decode_dataset(&cd, &b), Err(CodecError::HashMismatch { .. })));
        cd.model_hash[0] ^= 1;
        assert!(matches!(decode_dataset(&cd, &a), Err(CodecError::HashMismatch { .. })));
        let report = closure_check_with(&ds, &a, &b);
        assert!(!report.equal);
        assert!(report.diagnostic.unwrap().contains("model"));
    }

    #[test]
    fn container_damage_is_reported() {
        let m = fit_unconditional(&sample(50, 1)).unwrap();
        let (cd, _) = encode_dataset(&sample(20, 4), &m).unwrap();
        let bytes = cd.to_bytes();
        assert!(matches!(CompressedDataset::from_bytes(&bytes[..bytes.len() - 3]), Err(CodecError::TruncatedSection(_))));
        assert!(matches!(CompressedDataset::from_bytes(b"PK\x03\x04"), Err(CodecError::BadMagic)));
        let mut cut = cd.clone();
        let adc = Tag::Adc.index();
        let keep = cut.sections[adc].payload.len() / 3;
        cut.sections[adc].payload.truncate(keep);
        assert!(decode_dataset(&cut, &m).is_err());
    }

    #[test]
    fn lowered_lengths_match_the_encoder() {
        let m = fit_conditional(&sample(500, 1), &MomentumBinning::default()).unwrap();
        let ds = sample(300, 9);
        let low = LoweredDataset::new(&ds, &m);
        let (_, acc) = encode_dataset(&ds, &m).unwrap();
        let all: Vec<usize> = (0..ds.len()).collect();
        assert_eq!(low.achieved_bits(&all), acc.achieved_total());
        let ideal: f64 = low.ideal_bits().iter().sum();
        assert!((ideal - acc.ideal_total()).abs() < 1e-6);
        let idx = [5, 2, 200];
        let sub = ds.subset(&idx, "s").unwrap();
        let (_, acc) = encode_dataset(&sub, &m).unwrap();
        assert_eq!(low.achieved_bits(&idx), acc.achieved_total());
    }
}
