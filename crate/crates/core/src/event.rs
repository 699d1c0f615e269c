//! Detector event representation, validation, canonical serialization and
//! dataset splitting.
//!
//! An event holds nine calorimeter layer-views, each with 20 hit slots of
//! `(strip, adc)` integers, plus the particle momentum as three `f32`
//! components. Empty slots carry the pair `(PAD, PAD)`.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const N_LAYERS: usize = 9;
pub const MAX_SLOTS: usize = 20;
pub const PAD: i32 = -999;
pub const ADC_MAX: i32 = 65535;

/// One of the nine calorimeter readout planes, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LayerView {
    PcalU,
    PcalV,
    PcalW,
    EcinU,
    EcinV,
    EcinW,
    EcoutU,
    EcoutV,
    EcoutW,
}

impl LayerView {
    pub const ALL: [LayerView; N_LAYERS] = [
        LayerView::PcalU,
        LayerView::PcalV,
        LayerView::PcalW,
        LayerView::EcinU,
        LayerView::EcinV,
        LayerView::EcinW,
        LayerView::EcoutU,
        LayerView::EcoutV,
        LayerView::EcoutW,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<LayerView> {
        Self::ALL.get(i).copied()
    }

    /// Number of physical strips read out by this layer-view.
    pub fn n_strips(self) -> usize {
        match self {
            LayerView::PcalU => 68,
            LayerView::PcalV | LayerView::PcalW => 62,
            _ => 36,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerView::PcalU => "PCAL-U",
            LayerView::PcalV => "PCAL-V",
            LayerView::PcalW => "PCAL-W",
            LayerView::EcinU => "ECIN-U",
            LayerView::EcinV => "ECIN-V",
            LayerView::EcinW => "ECIN-W",
            LayerView::EcoutU => "ECOUT-U",
            LayerView::EcoutV => "ECOUT-V",
            LayerView::EcoutW => "ECOUT-W",
        }
    }
}

impl fmt::Display for LayerView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Strip count per layer-view, indexed by `LayerView::index`.
pub const N_STRIPS: [usize; N_LAYERS] = [68, 62, 62, 36, 36, 36, 36, 36, 36];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub strips: [[i32; MAX_SLOTS]; N_LAYERS],
    pub adcs: [[i32; MAX_SLOTS]; N_LAYERS],
    /// `(px, py, pz)` in GeV.
    pub momentum: [f32; 3],
}

impl Event {
    /// An event with every slot padded.
    pub fn empty(momentum: [f32; 3]) -> Event {
        Event {
            strips: [[PAD; MAX_SLOTS]; N_LAYERS],
            adcs: [[PAD; MAX_SLOTS]; N_LAYERS],
            momentum,
        }
    }

    pub fn is_occupied(&self, layer: usize, slot: usize) -> bool {
        self.strips[layer][slot] != PAD
    }

    pub fn hit_count(&self, layer: usize) -> usize {
        self.strips[layer].iter().filter(|&&s| s != PAD).count()
    }

    pub fn total_hits(&self) -> usize {
        (0..N_LAYERS).map(|l| self.hit_count(l)).sum()
    }

    /// |p| evaluated in double precision from the stored `f32` components.
    pub fn momentum_magnitude(&self) -> f64 {
        momentum_magnitude(self.momentum)
    }

    fn write_canonical(&self, out: &mut Vec<u8>) {
        for row in &self.strips {
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for row in &self.adcs {
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for c in &self.momentum {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }

    fn read_canonical(buf: &[u8]) -> Event {
        debug_assert_eq!(buf.len(), EVENT_BYTES);
        let mut words = buf.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]);
        let mut e = Event::empty([0.0; 3]);
        for row in e.strips.iter_mut() {
            for v in row.iter_mut() {
                *v = i32::from_le_bytes(words.next().unwrap());
            }
        }
        for row in e.adcs.iter_mut() {
            for v in row.iter_mut() {
                *v = i32::from_le_bytes(words.next().unwrap());
            }
        }
        for c in e.momentum.iter_mut() {
            *c = f32::from_le_bytes(words.next().unwrap());
        }
        e
    }

    /// Canonical bytes of this single event record.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(EVENT_BYTES);
        self.write_canonical(&mut out);
        out
    }
}

pub fn momentum_magnitude(p: [f32; 3]) -> f64 {
    let [x, y, z] = p.map(f64::from);
    (x * x + y * y + z * z).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    PaddingPairing,
    StripRange,
    AdcRange,
    Momentum,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::PaddingPairing => "padding pairing",
            Rule::StripRange => "strip range",
            Rule::AdcRange => "adc range",
            Rule::Momentum => "momentum",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub layer: Option<LayerView>,
    pub slot: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.layer, self.slot) {
            (Some(l), Some(s)) => write!(f, "{} at {l} slot {s}", self.rule),
            _ => write!(f, "{}", self.rule),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every event invariant against the fixed detector geometry.
/// Never fails; violations are collected in the report.
pub fn validate_event(e: &Event) -> ValidationReport {
    let mut violations = Vec::new();
    for lv in LayerView::ALL {
        let l = lv.index();
        for s in 0..MAX_SLOTS {
            let strip = e.strips[l][s];
            let adc = e.adcs[l][s];
            let mut push = |rule| {
                violations.push(Violation {
                    layer: Some(lv),
                    slot: Some(s),
                    rule,
                })
            };
            if (strip == PAD) != (adc == PAD) {
                push(Rule::PaddingPairing);
                continue;
            }
            if strip == PAD {
                continue;
            }
            if strip < 1 || strip as usize > lv.n_strips() {
                push(Rule::StripRange);
            }
            if !(0..=ADC_MAX).contains(&adc) {
                push(Rule::AdcRange);
            }
        }
    }
    if !e.momentum_magnitude().is_finite() {
        violations.push(Violation {
            layer: None,
            slot: None,
            rule: Rule::Momentum,
        });
    }
    ValidationReport { violations }
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("dataset must contain at least one event")]
    Empty,
    #[error("invalid event {index}: {report}")]
    Invalid {
        index: usize,
        report: ValidationReport,
    },
    #[error("unrecognized format")]
    BadMagic,
    #[error("truncated header")]
    TruncatedHeader,
    #[error("truncated at event {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after the last event")]
    TrailingBytes(usize),
    #[error("split needs at least 2 events, got {0}")]
    TooFewToSplit(usize),
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("split of {n} events with fraction {fraction} leaves one side empty")]
    DegenerateSplit { n: usize, fraction: f64 },
}

/// An ordered, validated, non-empty collection of events.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    events: Vec<Event>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(events: Vec<Event>, provenance: impl Into<String>) -> Result<Dataset, EventError> {
        if events.is_empty() {
            return Err(EventError::Empty);
        }
        for (index, e) in events.iter().enumerate() {
            let report = validate_event(e);
            if !report.ok() {
                return Err(EventError::Invalid { index, report });
            }
        }
        Ok(Dataset {
            events,
            provenance: provenance.into(),
        })
    }

    /// Skips validation; callers guarantee every event is valid.
    pub(crate) fn from_valid(events: Vec<Event>, provenance: String) -> Dataset {
        debug_assert!(!events.is_empty());
        Dataset { events, provenance }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Sub-dataset made of the given indices, in the given order.
    pub fn subset(&self, indices: &[usize], tag: &str) -> Result<Dataset, EventError> {
        if indices.is_empty() {
            return Err(EventError::Empty);
        }
        let events = indices.iter().map(|&i| self.events[i].clone()).collect();
        Ok(Dataset::from_valid(
            events,
            format!("{}|{}", self.provenance, tag),
        ))
    }

    /// SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> [u8; 32] {
        Sha256::digest(canonical_serialize(self)).into()
    }
}

pub const MAGIC: &[u8; 8] = b"EVCAN001";
pub const HEADER_BYTES: usize = 16;
pub const EVENT_BYTES: usize = (2 * N_LAYERS * MAX_SLOTS + 3) * 4;

/// Bit-exact little-endian layout: magic, event count, then per event the
/// strip grid, the ADC grid and the three momentum components.
pub fn canonical_serialize(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + ds.len() * EVENT_BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for e in ds.events() {
        e.write_canonical(&mut out);
    }
    out
}

/// Serializes an arbitrary event list, refusing it if any event is invalid.
pub fn try_canonical_serialize(events: &[Event]) -> Result<Vec<u8>, EventError> {
    let ds = Dataset::new(events.to_vec(), "")?;
    Ok(canonical_serialize(&ds))
}

pub fn canonical_deserialize(bytes: &[u8]) -> Result<Dataset, EventError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(EventError::BadMagic);
    }
    if bytes.len() < HEADER_BYTES {
        return Err(EventError::TruncatedHeader);
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_BYTES..];
    let available = body.len() / EVENT_BYTES;
    if available < n {
        return Err(EventError::Truncated(available));
    }
    let expected = n
        .checked_mul(EVENT_BYTES)
        .ok_or(EventError::Truncated(available))?;
    if body.len() > expected {
        return Err(EventError::TrailingBytes(body.len() - expected));
    }
    let events: Vec<Event> = body
        .chunks_exact(EVENT_BYTES)
        .map(Event::read_canonical)
        .collect();
    Dataset::new(events, "")
}

/// Seeded Fisher-Yates partition of `0..n` into `(train, test)` index sets of
/// sizes `floor(n * f)` and the remainder. Each side is returned sorted.
pub fn split_indices(
    n: usize,
    seed: u64,
    train_fraction: f64,
) -> Result<(Vec<usize>, Vec<usize>), EventError> {
    if n < 2 {
        return Err(EventError::TooFewToSplit(n));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EventError::BadFraction(train_fraction));
    }
    let n_train = (n as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(EventError::DegenerateSplit {
            n,
            fraction: train_fraction,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_dataset(
    ds: &Dataset,
    seed: u64,
    train_fraction: f64,
) -> Result<(Dataset, Dataset), EventError> {
    let (a, b) = split_indices(ds.len(), seed, train_fraction)?;
    Ok((
        ds.subset(&a, &format!("split(seed={seed},f={train_fraction}):A"))?,
        ds.subset(&b, &format!("split(seed={seed},f={train_fraction}):B"))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hit_event() -> Event {
        let mut e = Event::empty([0.1, 0.2, 1.5]);
        e.strips[0][3] = 10;
        e.adcs[0][3] = 300;
        e
    }

    #[test]
    fn padding_pair_is_valid() {
        assert!(validate_event(&Event::empty([0.0, 0.0, 1.0])).ok());
        assert!(validate_event(&one_hit_event()).ok());
    }

    #[test]
    fn unpaired_padding_is_reported_at_its_slot() {
        let mut e = Event::empty([0.0, 0.0, 1.0]);
        e.adcs[4][7] = 512;
        let r = validate_event(&e);
        assert_eq!(
            r.violations,
            vec![Violation {
                layer: Some(LayerView::EcinV),
                slot: Some(7),
                rule: Rule::PaddingPairing
            }]
        );
    }

    #[test]
    fn strip_beyond_geometry_is_reported() {
        let mut e = Event::empty([0.0, 0.0, 1.0]);
        e.strips[LayerView::PcalV.index()][0] = 70;
        e.adcs[LayerView::PcalV.index()][0] = 5;
        let r = validate_event(&e);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].rule, Rule::StripRange);
        // 62 is the last legal PCAL-V strip, 68 is legal on PCAL-U.
        e.strips[LayerView::PcalV.index()][0] = 62;
        assert!(validate_event(&e).ok());
        e.strips[LayerView::PcalU.index()][1] = 68;
        e.adcs[LayerView::PcalU.index()][1] = ADC_MAX;
        assert!(validate_event(&e).ok());
        e.adcs[LayerView::PcalU.index()][1] = ADC_MAX + 1;
        assert_eq!(validate_event(&e).violations[0].rule, Rule::AdcRange);
    }

    #[test]
    fn non_finite_momentum_is_reported() {
        let e = Event::empty([f32::NAN, 0.0, 0.0]);
        assert_eq!(validate_event(&e).violations[0].rule, Rule::Momentum);
    }

    #[test]
    fn single_event_file_size() {
        let ds = Dataset::new(vec![one_hit_event()], "t").unwrap();
        let bytes = canonical_serialize(&ds);
        assert_eq!(bytes.len(), 16 + (180 + 180) * 4 + 12);
        assert_eq!(bytes.len(), 1468);
        assert_eq!(&bytes[..8], b"EVCAN001");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
    }

    #[test]
    fn permuted_events_serialize_differently() {
        let a = one_hit_event();
        let b = Event::empty([1.0, 2.0, 3.0]);
        let d1 = Dataset::new(vec![a.clone(), b.clone()], "").unwrap();
        let d2 = Dataset::new(vec![b, a], "").unwrap();
        assert_ne!(canonical_serialize(&d1), canonical_serialize(&d2));
    }

    #[test]
    fn deserialize_errors_are_distinct() {
        let ds = Dataset::new(vec![one_hit_event(), one_hit_event()], "").unwrap();
        let bytes = canonical_serialize(&ds);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(canonical_deserialize(&bad), Err(EventError::BadMagic)));
        assert_eq!(
            canonical_deserialize(&bad).unwrap_err().to_string(),
            "unrecognized format"
        );

        let cut = &bytes[..HEADER_BYTES + EVENT_BYTES + 100];
        let err = canonical_deserialize(cut).unwrap_err();
        assert_eq!(err.to_string(), "truncated at event 1");

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            canonical_deserialize(&long),
            Err(EventError::TrailingBytes(1))
        ));

        let mut invalid = bytes.clone();
        // adc of slot 0 in layer 0 of event 0 (still padded strip)
        let off = HEADER_BYTES + 180 * 4;
        invalid[off..off + 4].copy_from_slice(&7i32.to_le_bytes());
        assert!(matches!(
            canonical_deserialize(&invalid),
            Err(EventError::Invalid { index: 0, .. })
        ));
    }

    #[test]
    fn serialization_refuses_invalid_events() {
        let mut e = Event::empty([0.0; 3]);
        e.strips[0][0] = 5;
        let err = try_canonical_serialize(&[e]).unwrap_err();
        assert!(matches!(err, EventError::Invalid { index: 0, .. }));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (a, b) = split_indices(10, 7, 0.7).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 7, 0.7).unwrap(), (a, b));
    }

    #[test]
    fn split_rejects_bad_inputs() {
        assert!(matches!(
            split_indices(1, 0, 0.5),
            Err(EventError::TooFewToSplit(1))
        ));
        assert!(matches!(
            split_indices(10, 0, 1.0),
            Err(EventError::BadFraction(_))
        ));
        assert!(matches!(
            split_indices(2, 0, 0.3),
            Err(EventError::DegenerateSplit { .. })
        ));
    }

    #[test]
    fn independent_splits_overlap_like_squared_fraction() {
        // Monte Carlo over seeds: |A1 ∩ A2| ≈ 0.7 * 0.7 * N.
        let n = 10_000;
        let mut total = 0.0;
        let seeds = 20u64;
        for s in 0..seeds {
            let (a1, _) = split_indices(n, 2 * s + 1, 0.7).unwrap();
            let (a2, _) = split_indices(n, 2 * s + 2, 0.7).unwrap();
            let mut mark = vec![false; n];
            for &i in &a1 {
                mark[i] = true;
            }
            total += a2.iter().filter(|&&i| mark[i]).count() as f64;
        }
        let mean = total / seeds as f64;
        let expected = 0.7 * 0.7 * n as f64;
        // hypergeometric sd ≈ sqrt(n * .7*.3*.7*.3) ≈ 21; mean over 20 seeds.
        assert!((mean - expected).abs() < 25.0, "mean overlap {mean}");
    }
}
