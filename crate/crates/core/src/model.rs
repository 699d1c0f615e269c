//! Factorized probability models over events and the lowering of an event
//! into the symbol sequence the coder consumes.
//!
//! Hits are modeled slot by slot: an occupancy bit per `(layer-view, slot)`,
//! then for occupied slots a strip index and the two ADC bytes, each from a
//! per-layer-view table shared across slots. The conditional variant keys
//! every hit table additionally by the momentum-magnitude bin. Kinematics
//! are coded as the 12 little-endian bytes of the three `f32` components,
//! one table per byte position, in both modes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coder::{CdfTable, CoderError};
use crate::event::{
    momentum_magnitude, validate_event, Dataset, Event, LayerView, MAX_SLOTS, N_LAYERS, N_STRIPS,
    PAD,
};

/// Number of kinematics byte positions (3 components, 4 bytes each).
pub const KIN_BYTES: usize = 12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot fit a model on an empty dataset")]
    Empty,
    #[error("invalid momentum binning: {0}")]
    BadBinning(String),
    #[error("malformed symbol stream: {0}")]
    Grammar(String),
    #[error("not a model file")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("model content hash mismatch")]
    HashMismatch,
    #[error("corrupt model payload: {0}")]
    Corrupt(&'static str),
    #[error("evaluation weights do not match the model's context layout")]
    WeightsMismatch,
    #[error(transparent)]
    Coder(#[from] CoderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Unconditional,
    Conditional,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Unconditional => "unconditional",
            Mode::Conditional => "conditional",
        }
    }
}

/// Stream a symbol belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    Occ,
    Strip,
    Adc,
    Kin,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::Occ, Tag::Strip, Tag::Adc, Tag::Kin];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Tag::Occ => "occ",
            Tag::Strip => "strip",
            Tag::Adc => "adc",
            Tag::Kin => "kin",
        }
    }
}

/// Contiguous momentum-magnitude bins `[e_i, e_{i+1})` below the last edge
/// plus one overflow bin for `|p| >= e_last`. Values below the first edge
/// fall into bin 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumBinning {
    edges: Vec<f64>,
}

impl MomentumBinning {
    pub fn new(edges: Vec<f64>) -> Result<MomentumBinning, ModelError> {
        if edges.is_empty() {
            return Err(ModelError::BadBinning("no edges".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(ModelError::BadBinning("edges must be finite".into()));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::BadBinning("edges must be strictly increasing".into()));
        }
        Ok(MomentumBinning { edges })
    }

    /// `n` equal-width bins over `[0, p_max)` plus overflow.
    pub fn uniform(n: usize, p_max: f64) -> Result<MomentumBinning, ModelError> {
        if n == 0 {
            return Err(ModelError::BadBinning("need at least one bin".into()));
        }
        if !(p_max > 0.0 && p_max.is_finite()) {
            return Err(ModelError::BadBinning(format!("p_max {p_max} must be positive")));
        }
        Self::new((0..=n).map(|i| p_max * i as f64 / n as f64).collect())
    }

    /// One bin holding every momentum.
    pub fn single() -> MomentumBinning {
        MomentumBinning { edges: vec![0.0] }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Regular bins plus the overflow bin.
    pub fn n_bins(&self) -> usize {
        self.edges.len()
    }

    pub fn bin(&self, p: f64) -> usize {
        let last = self.edges.len() - 1;
        if p >= self.edges[last] {
            return last;
        }
        self.edges.partition_point(|&e| e <= p).saturating_sub(1)
    }
}

impl Default for MomentumBinning {
    fn default() -> Self {
        MomentumBinning::uniform(10, 10.0).unwrap()
    }
}

/// How often each context was visited while fitting (or on any dataset the
/// model is evaluated against).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWeights {
    pub n_events: u64,
    /// Events per momentum context.
    pub context_events: Vec<u64>,
    /// Occupied visits per `(context, layer, slot)`.
    pub occupied: Vec<u64>,
}

impl ContextWeights {
    fn zeros(n_ctx: usize) -> ContextWeights {
        ContextWeights {
            n_events: 0,
            context_events: vec![0; n_ctx],
            occupied: vec![0; n_ctx * N_LAYERS * MAX_SLOTS],
        }
    }

    fn add(&mut self, ctx: usize, e: &Event) {
        self.n_events += 1;
        self.context_events[ctx] += 1;
        for l in 0..N_LAYERS {
            for s in 0..MAX_SLOTS {
                if e.is_occupied(l, s) {
                    self.occupied[occ_index(ctx, l, s)] += 1;
                }
            }
        }
    }

    /// Context weights of `ds` under the context layout of `m`.
    pub fn tally(ds: &Dataset, m: &ModelBundle) -> ContextWeights {
        let mut w = ContextWeights::zeros(m.n_contexts());
        for e in ds.events() {
            w.add(m.context_of(e), e);
        }
        w
    }

    /// Occupied visits of one `(context, layer)` summed over slots.
    pub fn occupied_in_layer(&self, ctx: usize, layer: usize) -> u64 {
        (0..MAX_SLOTS)
            .map(|s| self.occupied[occ_index(ctx, layer, s)])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub weights: ContextWeights,
    /// SHA-256 over the concatenated canonical event records.
    pub content_hash: [u8; 32],
}

/// Identifies one table of a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableRef {
    Occ { ctx: usize, layer: usize, slot: usize },
    Strip { ctx: usize, layer: usize },
    AdcHi { ctx: usize, layer: usize },
    AdcLo { ctx: usize, layer: usize },
    Kin { position: usize },
}

impl TableRef {
    pub fn tag(self) -> Tag {
        match self {
            TableRef::Occ { .. } => Tag::Occ,
            TableRef::Strip { .. } => Tag::Strip,
            TableRef::AdcHi { .. } | TableRef::AdcLo { .. } => Tag::Adc,
            TableRef::Kin { .. } => Tag::Kin,
        }
    }

    pub fn layer(self) -> Option<LayerView> {
        match self {
            TableRef::Occ { layer, .. }
            | TableRef::Strip { layer, .. }
            | TableRef::AdcHi { layer, .. }
            | TableRef::AdcLo { layer, .. } => LayerView::from_index(layer),
            TableRef::Kin { .. } => None,
        }
    }
}

#[inline]
fn occ_index(ctx: usize, layer: usize, slot: usize) -> usize {
    (ctx * N_LAYERS + layer) * MAX_SLOTS + slot
}

#[inline]
fn attr_index(ctx: usize, layer: usize) -> usize {
    ctx * N_LAYERS + layer
}

/// A complete fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    mode: Mode,
    binning: MomentumBinning,
    occ: Vec<CdfTable>,
    strip: Vec<CdfTable>,
    adc_hi: Vec<CdfTable>,
    adc_lo: Vec<CdfTable>,
    kin: Vec<CdfTable>,
    train_meta: TrainMeta,
    hash: [u8; 32],
}

impl ModelBundle {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Binning of a conditional model; `None` for unconditional ones.
    pub fn binning(&self) -> Option<&MomentumBinning> {
        match self.mode {
            Mode::Conditional => Some(&self.binning),
            Mode::Unconditional => None,
        }
    }

    pub fn n_contexts(&self) -> usize {
        self.binning.n_bins()
    }

    #[inline]
    pub fn context_of(&self, e: &Event) -> usize {
        self.context_of_momentum(e.momentum)
    }

    #[inline]
    pub fn context_of_momentum(&self, p: [f32; 3]) -> usize {
        match self.mode {
            Mode::Unconditional => 0,
            Mode::Conditional => self.binning.bin(momentum_magnitude(p)),
        }
    }

    pub fn train_meta(&self) -> &TrainMeta {
        &self.train_meta
    }

    /// SHA-256 of the serialized model body.
    pub fn hash(&self) -> [u8; 32] {
        self.hash
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash)
    }

    pub fn table(&self, r: TableRef) -> &CdfTable {
        match r {
            TableRef::Occ { ctx, layer, slot } => &self.occ[occ_index(ctx, layer, slot)],
            TableRef::Strip { ctx, layer } => &self.strip[attr_index(ctx, layer)],
            TableRef::AdcHi { ctx, layer } => &self.adc_hi[attr_index(ctx, layer)],
            TableRef::AdcLo { ctx, layer } => &self.adc_lo[attr_index(ctx, layer)],
            TableRef::Kin { position } => &self.kin[position],
        }
    }

    pub fn occ_table(&self, ctx: usize, layer: usize, slot: usize) -> &CdfTable {
        &self.occ[occ_index(ctx, layer, slot)]
    }

    pub fn strip_table(&self, ctx: usize, layer: usize) -> &CdfTable {
        &self.strip[attr_index(ctx, layer)]
    }

    pub fn adc_hi_table(&self, ctx: usize, layer: usize) -> &CdfTable {
        &self.adc_hi[attr_index(ctx, layer)]
    }

    pub fn adc_lo_table(&self, ctx: usize, layer: usize) -> &CdfTable {
        &self.adc_lo[attr_index(ctx, layer)]
    }

    pub fn kin_table(&self, position: usize) -> &CdfTable {
        &self.kin[position]
    }

    pub fn table_count(&self) -> usize {
        self.occ.len() + self.strip.len() + self.adc_hi.len() + self.adc_lo.len() + self.kin.len()
    }

    /// Every table, in serialization order.
    pub fn tables(&self) -> impl Iterator<Item = &CdfTable> {
        self.occ
            .iter()
            .chain(&self.strip)
            .chain(&self.adc_hi)
            .chain(&self.adc_lo)
            .chain(&self.kin)
    }

    /// Same tables with every hit table replaced; used to inject exact
    /// generator probabilities.
    pub fn with_hit_tables(
        &self,
        occ: Vec<CdfTable>,
        strip: Vec<CdfTable>,
        adc_hi: Vec<CdfTable>,
        adc_lo: Vec<CdfTable>,
    ) -> Result<ModelBundle, ModelError> {
        let n_ctx = self.n_contexts();
        if occ.len() != n_ctx * N_LAYERS * MAX_SLOTS
            || strip.len() != n_ctx * N_LAYERS
            || adc_hi.len() != n_ctx * N_LAYERS
            || adc_lo.len() != n_ctx * N_LAYERS
        {
            return Err(ModelError::Corrupt("table count"));
        }
        let mut m = ModelBundle {
            occ,
            strip,
            adc_hi,
            adc_lo,
            ..self.clone()
        };
        m.check_alphabets()?;
        m.hash = m.compute_hash();
        Ok(m)
    }

    fn check_alphabets(&self) -> Result<(), ModelError> {
        let n_ctx = self.n_contexts();
        let ok = self.occ.iter().all(|t| t.alphabet_size() == 2)
            && (0..n_ctx).all(|c| {
                (0..N_LAYERS).all(|l| {
                    self.strip[attr_index(c, l)].alphabet_size() == N_STRIPS[l]
                        && self.adc_hi[attr_index(c, l)].alphabet_size() == 256
                        && self.adc_lo[attr_index(c, l)].alphabet_size() == 256
                })
            })
            && self.kin.len() == KIN_BYTES
            && self.kin.iter().all(|t| t.alphabet_size() == 256);
        if ok {
            Ok(())
        } else {
            Err(ModelError::Corrupt("table alphabet sizes"))
        }
    }

    fn compute_hash(&self) -> [u8; 32] {
        Sha256::digest(self.body_bytes()).into()
    }
}

/// Streaming tally of training events.
#[derive(Debug, Clone)]
pub struct ModelFitter {
    mode: Mode,
    binning: MomentumBinning,
    occ: Vec<[u64; 2]>,
    strip: Vec<Vec<u64>>,
    adc_hi: Vec<[u64; 256]>,
    adc_lo: Vec<[u64; 256]>,
    kin: [[u64; 256]; KIN_BYTES],
    weights: ContextWeights,
    hasher: Sha256,
}

impl ModelFitter {
    pub fn unconditional() -> ModelFitter {
        Self::with_layout(Mode::Unconditional, MomentumBinning::single())
    }

    pub fn conditional(binning: MomentumBinning) -> ModelFitter {
        Self::with_layout(Mode::Conditional, binning)
    }

    fn with_layout(mode: Mode, binning: MomentumBinning) -> ModelFitter {
        let n_ctx = binning.n_bins();
        ModelFitter {
            mode,
            occ: vec![[0; 2]; n_ctx * N_LAYERS * MAX_SLOTS],
            strip: (0..n_ctx * N_LAYERS)
                .map(|i| vec![0; N_STRIPS[i % N_LAYERS]])
                .collect(),
            adc_hi: vec![[0; 256]; n_ctx * N_LAYERS],
            adc_lo: vec![[0; 256]; n_ctx * N_LAYERS],
            kin: [[0; 256]; KIN_BYTES],
            weights: ContextWeights::zeros(n_ctx),
            hasher: Sha256::new(),
            binning,
        }
    }

    fn context_of(&self, e: &Event) -> usize {
        match self.mode {
            Mode::Unconditional => 0,
            Mode::Conditional => self.binning.bin(e.momentum_magnitude()),
        }
    }

    /// Tallies one event. The caller guarantees validity (datasets do).
    pub fn add(&mut self, e: &Event) {
        debug_assert!(validate_event(e).ok());
        let ctx = self.context_of(e);
        self.weights.add(ctx, e);
        for l in 0..N_LAYERS {
            let a = attr_index(ctx, l);
            for s in 0..MAX_SLOTS {
                let occupied = e.is_occupied(l, s);
                self.occ[occ_index(ctx, l, s)][occupied as usize] += 1;
                if occupied {
                    self.strip[a][(e.strips[l][s] - 1) as usize] += 1;
                    let adc = e.adcs[l][s] as usize;
                    self.adc_hi[a][adc >> 8] += 1;
                    self.adc_lo[a][adc & 0xFF] += 1;
                }
            }
        }
        for (pos, b) in kin_bytes(e.momentum).into_iter().enumerate() {
            self.kin[pos][b as usize] += 1;
        }
        self.hasher.update(e.canonical_bytes());
    }

    pub fn finish(self) -> Result<ModelBundle, ModelError> {
        if self.weights.n_events == 0 {
            return Err(ModelError::Empty);
        }
        let build = |counts: &[u64]| CdfTable::from_frequencies(counts);
        let mut m = ModelBundle {
            mode: self.mode,
            binning: self.binning,
            occ: self.occ.iter().map(|c| build(c)).collect::<Result<_, _>>()?,
            strip: self.strip.iter().map(|c| build(c)).collect::<Result<_, _>>()?,
            adc_hi: self.adc_hi.iter().map(|c| build(c)).collect::<Result<_, _>>()?,
            adc_lo: self.adc_lo.iter().map(|c| build(c)).collect::<Result<_, _>>()?,
            kin: self.kin.iter().map(|c| build(c)).collect::<Result<_, _>>()?,
            train_meta: TrainMeta {
                weights: self.weights,
                content_hash: self.hasher.finalize().into(),
            },
            hash: [0; 32],
        };
        m.hash = m.compute_hash();
        Ok(m)
    }
}

pub fn fit_unconditional(train: &Dataset) -> Result<ModelBundle, ModelError> {
    let mut f = ModelFitter::unconditional();
    train.events().iter().for_each(|e| f.add(e));
    f.finish()
}

pub fn fit_conditional(train: &Dataset, binning: &MomentumBinning) -> Result<ModelBundle, ModelError> {
    let mut f = ModelFitter::conditional(binning.clone());
    train.events().iter().for_each(|e| f.add(e));
    f.finish()
}

pub fn fit(train: &Dataset, mode: Mode, binning: &MomentumBinning) -> Result<ModelBundle, ModelError> {
    match mode {
        Mode::Unconditional => fit_unconditional(train),
        Mode::Conditional => fit_conditional(train, binning),
    }
}

#[inline]
pub fn kin_bytes(p: [f32; 3]) -> [u8; KIN_BYTES] {
    let mut out = [0u8; KIN_BYTES];
    for (c, v) in p.iter().enumerate() {
        out[c * 4..c * 4 + 4].copy_from_slice(&v.to_le_bytes());
    }
    out
}

fn momentum_from_bytes(b: &[u8; KIN_BYTES]) -> [f32; 3] {
    [0, 1, 2].map(|c| f32::from_le_bytes([b[c * 4], b[c * 4 + 1], b[c * 4 + 2], b[c * 4 + 3]]))
}

/// Calls `f(table, symbol)` for every symbol of `e` in emission order:
/// per layer-view, per slot the occupancy bit and, if occupied, strip,
/// ADC high byte and ADC low byte; then the 12 kinematics bytes.
#[inline]
pub fn visit_symbols(m: &ModelBundle, e: &Event, mut f: impl FnMut(TableRef, &CdfTable, usize)) {
    let ctx = m.context_of(e);
    for l in 0..N_LAYERS {
        let a = attr_index(ctx, l);
        for s in 0..MAX_SLOTS {
            let occupied = e.is_occupied(l, s);
            f(
                TableRef::Occ { ctx, layer: l, slot: s },
                &m.occ[occ_index(ctx, l, s)],
                occupied as usize,
            );
            if occupied {
                let adc = e.adcs[l][s] as usize;
                f(TableRef::Strip { ctx, layer: l }, &m.strip[a], (e.strips[l][s] - 1) as usize);
                f(TableRef::AdcHi { ctx, layer: l }, &m.adc_hi[a], adc >> 8);
                f(TableRef::AdcLo { ctx, layer: l }, &m.adc_lo[a], adc & 0xFF);
            }
        }
    }
    for (position, b) in kin_bytes(e.momentum).into_iter().enumerate() {
        f(TableRef::Kin { position }, &m.kin[position], b as usize);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Symbol {
    pub table: TableRef,
    pub symbol: usize,
}

impl Symbol {
    pub fn tag(&self) -> Tag {
        self.table.tag()
    }

    pub fn layer(&self) -> Option<LayerView> {
        self.table.layer()
    }
}

pub type SymbolStream = Vec<Symbol>;

pub fn lower_event(e: &Event, m: &ModelBundle) -> SymbolStream {
    let mut out = Vec::with_capacity(N_LAYERS * MAX_SLOTS + KIN_BYTES + 3 * e.total_hits());
    visit_symbols(m, e, |table, _, symbol| out.push(Symbol { table, symbol }));
    out
}

/// Rebuilds an event from a symbol source. `next` is asked for the symbol
/// coded under a given table; kinematics are pulled first because the
/// momentum bin selects the hit tables.
pub fn raise_with<E: From<ModelError>>(
    m: &ModelBundle,
    mut next: impl FnMut(TableRef, &CdfTable) -> Result<usize, E>,
) -> Result<Event, E> {
    let mut kb = [0u8; KIN_BYTES];
    for (position, b) in kb.iter_mut().enumerate() {
        let r = TableRef::Kin { position };
        *b = checked(next(r, m.table(r))?, m.table(r))? as u8;
    }
    let momentum = momentum_from_bytes(&kb);
    if !momentum.iter().all(|c| c.is_finite()) {
        return Err(ModelError::Grammar("decoded momentum is not finite".into()).into());
    }
    let ctx = m.context_of_momentum(momentum);
    let mut e = Event::empty(momentum);
    for l in 0..N_LAYERS {
        for s in 0..MAX_SLOTS {
            let r = TableRef::Occ { ctx, layer: l, slot: s };
            if checked(next(r, m.table(r))?, m.table(r))? == 1 {
                let r = TableRef::Strip { ctx, layer: l };
                let strip = checked(next(r, m.table(r))?, m.table(r))?;
                let r = TableRef::AdcHi { ctx, layer: l };
                let hi = checked(next(r, m.table(r))?, m.table(r))?;
                let r = TableRef::AdcLo { ctx, layer: l };
                let lo = checked(next(r, m.table(r))?, m.table(r))?;
                e.strips[l][s] = strip as i32 + 1;
                e.adcs[l][s] = (hi * 256 + lo) as i32;
            } else {
                e.strips[l][s] = PAD;
                e.adcs[l][s] = PAD;
            }
        }
    }
    Ok(e)
}

fn checked(s: usize, t: &CdfTable) -> Result<usize, ModelError> {
    if s < t.alphabet_size() {
        Ok(s)
    } else {
        Err(ModelError::Grammar(format!(
            "symbol {s} outside alphabet of size {}",
            t.alphabet_size()
        )))
    }
}

/// Exact inverse of [`lower_event`].
pub fn raise_event(stream: &[Symbol], m: &ModelBundle) -> Result<Event, ModelError> {
    // Each tag is consumed in order from its own queue, mirroring the codec.
    let mut queues: [Vec<&Symbol>; 4] = Default::default();
    for sym in stream {
        queues[sym.tag().index()].push(sym);
    }
    let mut cursor = [0usize; 4];
    let e = raise_with(m, |r, _| {
        let q = r.tag().index();
        let sym = queues[q]
            .get(cursor[q])
            .ok_or_else(|| ModelError::Grammar(format!("{} symbols exhausted", r.tag().name())))?;
        cursor[q] += 1;
        if sym.table != r {
            return Err(ModelError::Grammar(format!(
                "expected a symbol for {r:?}, found one for {:?}",
                sym.table
            )));
        }
        Ok(sym.symbol)
    })?;
    if cursor.iter().zip(&queues).any(|(&c, q)| c != q.len()) {
        return Err(ModelError::Grammar("trailing symbols".into()));
    }
    Ok(e)
}

/// Model entropy in bits per event, weighted by context visit frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelEntropy {
    pub occ: f64,
    pub strip: f64,
    pub adc: f64,
    pub hits: f64,
    pub kinematics: f64,
    pub total: f64,
}

/// Entropy under the model's own training weights.
pub fn model_entropy(m: &ModelBundle) -> ModelEntropy {
    model_entropy_weighted(m, &m.train_meta.weights).expect("training weights match the model")
}

/// `sum_contexts w(context) * H(table)`, with occupancy contexts visited once
/// per event of their momentum context and attribute contexts once per
/// occupied slot.
pub fn model_entropy_weighted(m: &ModelBundle, w: &ContextWeights) -> Result<ModelEntropy, ModelError> {
    let n_ctx = m.n_contexts();
    if w.context_events.len() != n_ctx || w.occupied.len() != n_ctx * N_LAYERS * MAX_SLOTS {
        return Err(ModelError::WeightsMismatch);
    }
    if w.n_events == 0 {
        return Err(ModelError::Empty);
    }
    let n = w.n_events as f64;
    let (mut occ, mut strip, mut adc) = (0.0, 0.0, 0.0);
    for c in 0..n_ctx {
        let wc = w.context_events[c] as f64 / n;
        for l in 0..N_LAYERS {
            for s in 0..MAX_SLOTS {
                occ += wc * m.occ_table(c, l, s).entropy();
            }
            let wo = w.occupied_in_layer(c, l) as f64 / n;
            strip += wo * m.strip_table(c, l).entropy();
            adc += wo * (m.adc_hi_table(c, l).entropy() + m.adc_lo_table(c, l).entropy());
        }
    }
    let kinematics: f64 = m.kin.iter().map(CdfTable::entropy).sum();
    let hits = occ + strip + adc;
    Ok(ModelEntropy {
        occ,
        strip,
        adc,
        hits,
        kinematics,
        total: hits + kinematics,
    })
}

const MODEL_MAGIC: &[u8; 8] = b"ACMODEL1";
pub const MODEL_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, v: &[u8]) {
        self.0.extend_from_slice(v);
    }
    fn tables(&mut self, ts: &[CdfTable]) {
        self.u32(ts.len() as u32);
        for t in ts {
            self.u32(t.alphabet_size() as u32);
            for &c in &t.cumulative()[1..] {
                self.u32(c);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).ok_or(ModelError::Corrupt("length overflow"))?;
        let s = self.buf.get(self.pos..end).ok_or(ModelError::Corrupt("truncated"))?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn count(&mut self, limit: usize) -> Result<usize, ModelError> {
        let n = self.u32()? as usize;
        if n > limit {
            return Err(ModelError::Corrupt("implausible length"));
        }
        Ok(n)
    }
    fn tables(&mut self) -> Result<Vec<CdfTable>, ModelError> {
        let n = self.count(1 << 20)?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let size = self.count(1 << 16)?;
            let mut cum = Vec::with_capacity(size + 1);
            cum.push(0);
            for _ in 0..size {
                cum.push(self.u32()?);
            }
            out.push(CdfTable::from_cumulative(cum).map_err(|_| ModelError::Corrupt("invalid table"))?);
        }
        Ok(out)
    }
}

impl ModelBundle {
    fn body_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.bytes(MODEL_MAGIC);
        w.u32(MODEL_VERSION);
        w.u8(match self.mode {
            Mode::Unconditional => 0,
            Mode::Conditional => 1,
        });
        w.u32(self.binning.edges.len() as u32);
        for &e in &self.binning.edges {
            w.f64(e);
        }
        let tw = &self.train_meta.weights;
        w.u64(tw.n_events);
        w.bytes(&self.train_meta.content_hash);
        w.u32(tw.context_events.len() as u32);
        tw.context_events.iter().for_each(|&v| w.u64(v));
        w.u32(tw.occupied.len() as u32);
        tw.occupied.iter().for_each(|&v| w.u64(v));
        w.tables(&self.occ);
        w.tables(&self.strip);
        w.tables(&self.adc_hi);
        w.tables(&self.adc_lo);
        w.tables(&self.kin);
        w.0
    }

    /// Serialized `.acm` form: the body followed by its SHA-256.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.body_bytes();
        out.extend_from_slice(&self.hash);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelBundle, ModelError> {
        if bytes.len() < MODEL_MAGIC.len() || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
            return Err(ModelError::BadMagic);
        }
        if bytes.len() < MODEL_MAGIC.len() + 4 + 32 {
            return Err(ModelError::Corrupt("truncated"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(ModelError::Version(version));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        let hash: [u8; 32] = Sha256::digest(body).into();
        if hash[..] != trailer[..] {
            return Err(ModelError::HashMismatch);
        }
        let mut r = Reader { buf: body, pos: 12 };
        let mode = match r.u8()? {
            0 => Mode::Unconditional,
            1 => Mode::Conditional,
            _ => return Err(ModelError::Corrupt("mode")),
        };
        let n_edges = r.count(1 << 16)?;
        let edges = (0..n_edges).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let binning = MomentumBinning::new(edges).map_err(|_| ModelError::Corrupt("binning"))?;
        let n_events = r.u64()?;
        let content_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
        let n = r.count(1 << 16)?;
        let context_events = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
        let n = r.count(1 << 24)?;
        let occupied = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
        let occ = r.tables()?;
        let strip = r.tables()?;
        let adc_hi = r.tables()?;
        let adc_lo = r.tables()?;
        let kin = r.tables()?;
        if r.pos != body.len() {
            return Err(ModelError::Corrupt("trailing bytes"));
        }
        let n_ctx = binning.n_bins();
        if mode == Mode::Unconditional && n_ctx != 1 {
            return Err(ModelError::Corrupt("unconditional model with several contexts"));
        }
        if context_events.len() != n_ctx
            || occupied.len() != n_ctx * N_LAYERS * MAX_SLOTS
            || occ.len() != n_ctx * N_LAYERS * MAX_SLOTS
            || strip.len() != n_ctx * N_LAYERS
            || adc_hi.len() != n_ctx * N_LAYERS
            || adc_lo.len() != n_ctx * N_LAYERS
        {
            return Err(ModelError::Corrupt("table count"));
        }
        let m = ModelBundle {
            mode,
            binning,
            occ,
            strip,
            adc_hi,
            adc_lo,
            kin,
            train_meta: TrainMeta {
                weights: ContextWeights {
                    n_events,
                    context_events,
                    occupied,
                },
                content_hash,
            },
            hash,
        };
        m.check_alphabets()?;
        Ok(m)
    }
}

pub fn save_model(m: &ModelBundle) -> Vec<u8> {
    m.to_bytes()
}

pub fn load_model(bytes: &[u8]) -> Result<ModelBundle, ModelError> {
    ModelBundle::from_bytes(bytes)
}
