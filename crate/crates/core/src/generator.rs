//! Synthetic calorimeter events with a known law.
//!
//! Two hit laws are available. `Shower` follows a physics-flavored recipe:
//! momentum-dependent Poisson hit counts, strips scattered around a shower
//! position shared by all layer-views, and momentum-scaled geometric ADCs.
//! `Independent` draws every slot, strip and ADC independently of each
//! other and of the momentum, so it lies inside the factorized model family
//! and has a closed-form entropy.
//!
//! For both laws [`Oracle`] evaluates `-log2 p(hits | momentum)` exactly.
//! Kinematics are continuous and carry no oracle.

use std::f64::consts::{LN_2, PI};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Poisson, StandardNormal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coder::CdfTable;
use crate::event::{momentum_magnitude, Dataset, Event, ADC_MAX, MAX_SLOTS, N_LAYERS, N_STRIPS};
use crate::model::{Mode, ModelBundle, ModelError};

/// Number of discrete shower positions shared across layer-views.
pub const SHOWER_POSITIONS: usize = 64;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dataset provenance `{0}` is not a synthetic sample")]
    NotSynthetic(String),
    #[error("dataset was generated under law {found}, oracle describes {expected}")]
    LawMismatch { expected: String, found: String },
    #[error("{0}")]
    Unsupported(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentumLaw {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
}

impl MomentumLaw {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            MomentumLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
            MomentumLaw::LogUniform { lo, hi } => (lo.ln() + (hi / lo).ln() * rng.gen::<f64>()).exp(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.bounds();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        match *self {
            MomentumLaw::Uniform { lo, hi } => (x - lo) / (hi - lo),
            MomentumLaw::LogUniform { lo, hi } => (x / lo).ln() / (hi / lo).ln(),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.bounds();
        if x < lo || x > hi {
            return 0.0;
        }
        match *self {
            MomentumLaw::Uniform { lo, hi } => 1.0 / (hi - lo),
            MomentumLaw::LogUniform { lo, hi } => 1.0 / (x * (hi / lo).ln()),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            MomentumLaw::Uniform { lo, hi } | MomentumLaw::LogUniform { lo, hi } => (lo, hi),
        }
    }

    fn validate(&self) -> Result<(), GeneratorError> {
        let (lo, hi) = self.bounds();
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            return Err(GeneratorError::Config(format!("momentum bounds [{lo}, {hi}]")));
        }
        if matches!(self, MomentumLaw::LogUniform { .. }) && lo <= 0.0 {
            return Err(GeneratorError::Config("loguniform needs a positive lower bound".into()));
        }
        Ok(())
    }

    /// `E[f(|p|)]` by composite Simpson integration over the support.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let (lo, hi) = self.bounds();
        let n = 4000;
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let x = lo + h * i as f64;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(x) * self.density(x);
        }
        acc * h / 3.0
    }
}

impl fmt::Display for MomentumLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentumLaw::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            MomentumLaw::LogUniform { lo, hi } => write!(f, "loguniform:{lo}:{hi}"),
        }
    }
}

impl std::str::FromStr for MomentumLaw {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let [kind, lo, hi] = parts[..] else {
            return Err(format!("expected kind:lo:hi, got `{s}`"));
        };
        let lo: f64 = lo.parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
        let hi: f64 = hi.parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
        match kind {
            "uniform" => Ok(MomentumLaw::Uniform { lo, hi }),
            "loguniform" => Ok(MomentumLaw::LogUniform { lo, hi }),
            _ => Err(format!("unknown momentum law `{kind}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitLaw {
    Shower,
    Independent,
}

impl HitLaw {
    pub fn name(self) -> &'static str {
        match self {
            HitLaw::Shower => "shower",
            HitLaw::Independent => "independent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_events: usize,
    /// Mean hit count per layer-view at |p| = 0 (`Shower`), or the expected
    /// number of occupied slots out of 20 (`Independent`).
    pub occupancy_rate_base: [f64; N_LAYERS],
    pub occupancy_slope: f64,
    /// Mean ADC per GeV (`Shower`) or mean ADC (`Independent`).
    pub adc_scale: [f64; N_LAYERS],
    /// Strip spread in strips.
    pub shower_width: f64,
    pub momentum_law: MomentumLaw,
    pub hit_law: HitLaw,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 1,
            n_events: 10_000,
            occupancy_rate_base: [3.8, 4.5, 5.5, 4.1, 3.75, 3.6, 2.4, 2.45, 2.4],
            occupancy_slope: 0.1,
            adc_scale: [50.0, 55.0, 58.0, 50.0, 50.0, 48.0, 40.0, 40.0, 38.0],
            shower_width: 2.5,
            momentum_law: MomentumLaw::Uniform { lo: 0.2, hi: 10.0 },
            hit_law: HitLaw::Shower,
        }
    }
}

fn parse_array(v: &str) -> Result<[f64; N_LAYERS], String> {
    let vals: Vec<f64> = v
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad number `{}`", x.trim())))
        .collect::<Result<_, _>>()?;
    match vals.len() {
        1 => Ok([vals[0]; N_LAYERS]),
        N_LAYERS => Ok(vals.try_into().unwrap()),
        n => Err(format!("expected 1 or {N_LAYERS} values, got {n}")),
    }
}

fn format_array(a: &[f64; N_LAYERS]) -> String {
    a.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |what: &str| Err(GeneratorError::Config(what.to_string()));
        if self.n_events == 0 {
            return bad("n_events must be positive");
        }
        if !self.occupancy_rate_base.iter().all(|&v| v > 0.0 && v.is_finite()) {
            return bad("occupancy_rate_base must be positive");
        }
        if !(self.occupancy_slope >= 0.0 && self.occupancy_slope.is_finite()) {
            return bad("occupancy_slope must be non-negative");
        }
        if !self.adc_scale.iter().all(|&v| v > 0.0 && v.is_finite()) {
            return bad("adc_scale must be positive");
        }
        if !(self.shower_width > 0.0 && self.shower_width.is_finite()) {
            return bad("shower_width must be positive");
        }
        self.momentum_law.validate()
    }

    /// Parses the flat `key = value` format; `#` starts a comment. Keys not
    /// given keep their defaults.
    pub fn parse(text: &str) -> Result<SyntheticConfig, GeneratorError> {
        let mut cfg = SyntheticConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| GeneratorError::Parse { line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("bad number `{v}`")));
            match k {
                "seed" => cfg.seed = v.parse().map_err(|_| err(format!("bad seed `{v}`")))?,
                "n_events" => cfg.n_events = v.parse().map_err(|_| err(format!("bad count `{v}`")))?,
                "occupancy_rate_base" => cfg.occupancy_rate_base = parse_array(v).map_err(err)?,
                "occupancy_slope" => cfg.occupancy_slope = num(v)?,
                "adc_scale" => cfg.adc_scale = parse_array(v).map_err(err)?,
                "shower_width" => cfg.shower_width = num(v)?,
                "momentum_law" => cfg.momentum_law = v.parse().map_err(err)?,
                "hit_law" => {
                    cfg.hit_law = match v {
                        "shower" => HitLaw::Shower,
                        "independent" => HitLaw::Independent,
                        _ => return Err(err(format!("unknown hit law `{v}`"))),
                    }
                }
                _ => return Err(err(format!("unknown key `{k}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn law_text(&self) -> String {
        format!(
            "occupancy_rate_base = {}\noccupancy_slope = {}\nadc_scale = {}\nshower_width = {}\nmomentum_law = {}\nhit_law = {}\n",
            format_array(&self.occupancy_rate_base),
            self.occupancy_slope,
            format_array(&self.adc_scale),
            self.shower_width,
            self.momentum_law,
            self.hit_law.name(),
        )
    }

    /// Identifies the law, independent of seed and sample size.
    pub fn law_fingerprint(&self) -> String {
        hex::encode(&Sha256::digest(self.law_text().as_bytes())[..8])
    }

    pub fn provenance(&self) -> String {
        format!("synthetic:{}:seed={}", self.law_fingerprint(), self.seed)
    }

    pub fn with_seed(&self, seed: u64, n_events: usize) -> SyntheticConfig {
        SyntheticConfig {
            seed,
            n_events,
            ..self.clone()
        }
    }
}

impl fmt::Display for SyntheticConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "seed = {}\nn_events = {}\n{}", self.seed, self.n_events, self.law_text())
    }
}

/// Event `index` of the sample with the given seed. Each event has its own
/// ChaCha stream, so events can be produced in any order or in parallel.
pub fn generate_event(cfg: &SyntheticConfig, index: u64) -> Event {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let p = cfg.momentum_law.sample(&mut rng);
    let cos_t = 2.0 * rng.gen::<f64>() - 1.0;
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = 2.0 * PI * rng.gen::<f64>();
    let momentum = [
        (p * sin_t * phi.cos()) as f32,
        (p * sin_t * phi.sin()) as f32,
        (p * cos_t) as f32,
    ];
    let pm = momentum_magnitude(momentum);
    let mut e = Event::empty(momentum);
    match cfg.hit_law {
        HitLaw::Shower => {
            let g = rng.gen_range(0..SHOWER_POSITIONS);
            for l in 0..N_LAYERS {
                let count = poisson_draw(&mut rng, shower_rate(cfg, l, pm));
                let c = shower_center(g, l);
                let mean_adc = cfg.adc_scale[l] * pm;
                for s in 0..count {
                    e.strips[l][s] = gaussian_strip(&mut rng, c, cfg.shower_width, N_STRIPS[l]);
                    e.adcs[l][s] = geometric_draw(&mut rng, mean_adc);
                }
            }
        }
        HitLaw::Independent => {
            for l in 0..N_LAYERS {
                let pi = slot_probability(cfg, l);
                let c = layer_center(l);
                for s in 0..MAX_SLOTS {
                    if rng.gen::<f64>() < pi {
                        e.strips[l][s] = gaussian_strip(&mut rng, c, cfg.shower_width, N_STRIPS[l]);
                        e.adcs[l][s] = geometric_draw(&mut rng, cfg.adc_scale[l]);
                    }
                }
            }
        }
    }
    e
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset, GeneratorError> {
    cfg.validate()?;
    let events = (0..cfg.n_events as u64).map(|i| generate_event(cfg, i)).collect();
    Ok(Dataset::from_valid(events, cfg.provenance()))
}

fn shower_rate(cfg: &SyntheticConfig, l: usize, pm: f64) -> f64 {
    (cfg.occupancy_rate_base[l] * (1.0 + cfg.occupancy_slope * pm)).min(MAX_SLOTS as f64)
}

fn slot_probability(cfg: &SyntheticConfig, l: usize) -> f64 {
    cfg.occupancy_rate_base[l].min(MAX_SLOTS as f64) / MAX_SLOTS as f64
}

fn shower_center(g: usize, l: usize) -> f64 {
    (g as f64 + 0.5) / SHOWER_POSITIONS as f64 * N_STRIPS[l] as f64 + 0.5
}

fn layer_center(l: usize) -> f64 {
    (N_STRIPS[l] as f64 + 1.0) / 2.0
}

fn poisson_draw<R: Rng>(rng: &mut R, lambda: f64) -> usize {
    let k: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
    (k as usize).min(MAX_SLOTS)
}

fn gaussian_strip<R: Rng>(rng: &mut R, center: f64, width: f64, n: usize) -> i32 {
    let z: f64 = StandardNormal.sample(rng);
    (center + width * z).round().clamp(1.0, n as f64) as i32
}

fn geometric_draw<R: Rng>(rng: &mut R, mean: f64) -> i32 {
    let k = Geometric::new(1.0 / (1.0 + mean)).expect("valid success probability").sample(rng);
    k.min(ADC_MAX as u64) as i32
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Probabilities of strips `1..=n` for `round(N(center, width))` clipped
/// to the layer.
pub fn strip_distribution(center: f64, width: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|s| {
            let upper = if s == n { 1.0 } else { std_normal_cdf((s as f64 + 0.5 - center) / width) };
            let lower = if s == 1 { 0.0 } else { std_normal_cdf((s as f64 - 0.5 - center) / width) };
            (upper - lower).max(0.0)
        })
        .collect()
}

/// Natural log of the clipped-geometric probability of `adc`.
fn geometric_ln_pmf(adc: i32, mean: f64) -> f64 {
    let r = mean / (1.0 + mean);
    if adc == ADC_MAX {
        ADC_MAX as f64 * r.ln()
    } else {
        (1.0 - r).ln() + adc as f64 * r.ln()
    }
}

/// Probabilities of the clipped geometric over `0..=65535`.
pub fn adc_distribution(mean: f64) -> Vec<f64> {
    (0..=ADC_MAX).map(|a| geometric_ln_pmf(a, mean).exp()).collect()
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// Natural log of `P(min(Poisson(lambda), 20) = k)`.
fn clipped_poisson_ln_pmf(k: usize, lambda: f64) -> f64 {
    let ln_pmf = |j: usize| j as f64 * lambda.ln() - lambda - ln_factorial(j);
    if k < MAX_SLOTS {
        ln_pmf(k)
    } else {
        let below: f64 = (0..MAX_SLOTS).map(|j| ln_pmf(j).exp()).sum();
        (1.0 - below).max(f64::MIN_POSITIVE).ln()
    }
}

fn clipped_poisson_mean(lambda: f64) -> f64 {
    (0..=MAX_SLOTS)
        .map(|k| k as f64 * clipped_poisson_ln_pmf(k, lambda).exp())
        .sum()
}

fn entropy_bits(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum()
}

fn h2(p: f64) -> f64 {
    entropy_bits(&[p, 1.0 - p])
}

/// KL divergence in bits from `p` to the table `q`.
fn kl_to_table(p: &[f64], q: &CdfTable) -> f64 {
    p.iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(s, &x)| x * (x.log2() + q.cost_bits(s)))
        .sum()
}

fn ln_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Exact probabilities of the generating law.
#[derive(Debug, Clone)]
pub struct Oracle {
    cfg: SyntheticConfig,
    /// `ln P(strip | position, layer)`; one row per shower position for
    /// `Shower`, a single row for `Independent`.
    strip_ln: Vec<Vec<Vec<f64>>>,
}

impl Oracle {
    pub fn new(cfg: &SyntheticConfig) -> Result<Oracle, GeneratorError> {
        cfg.validate()?;
        let strip_ln = (0..N_LAYERS)
            .map(|l| {
                let centers: Vec<f64> = match cfg.hit_law {
                    HitLaw::Shower => (0..SHOWER_POSITIONS).map(|g| shower_center(g, l)).collect(),
                    HitLaw::Independent => vec![layer_center(l)],
                };
                centers
                    .iter()
                    .map(|&c| {
                        strip_distribution(c, cfg.shower_width, N_STRIPS[l])
                            .into_iter()
                            .map(f64::ln)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Oracle {
            cfg: cfg.clone(),
            strip_ln,
        })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.cfg
    }

    /// Errors unless `ds` was sampled from this oracle's law.
    pub fn check_provenance(&self, ds: &Dataset) -> Result<(), GeneratorError> {
        let found = ds
            .provenance
            .strip_prefix("synthetic:")
            .ok_or_else(|| GeneratorError::NotSynthetic(ds.provenance.clone()))?;
        let found = found.split(':').next().unwrap_or("");
        let expected = self.cfg.law_fingerprint();
        if found != expected {
            return Err(GeneratorError::LawMismatch {
                expected,
                found: found.to_string(),
            });
        }
        Ok(())
    }

    /// `-log2 p(hits | momentum)`; infinite for events the law cannot emit.
    pub fn hit_bits(&self, e: &Event) -> f64 {
        let cfg = &self.cfg;
        let mut ln_p = 0.0;
        match cfg.hit_law {
            HitLaw::Shower => {
                let pm = e.momentum_magnitude();
                let mut per_position = vec![0.0; SHOWER_POSITIONS];
                for l in 0..N_LAYERS {
                    let count = e.hit_count(l);
                    if (0..count).any(|s| !e.is_occupied(l, s)) {
                        return f64::INFINITY;
                    }
                    ln_p += clipped_poisson_ln_pmf(count, shower_rate(cfg, l, pm));
                    let mean_adc = cfg.adc_scale[l] * pm;
                    for s in 0..count {
                        ln_p += geometric_ln_pmf(e.adcs[l][s], mean_adc);
                        let strip = (e.strips[l][s] - 1) as usize;
                        for (g, acc) in per_position.iter_mut().enumerate() {
                            *acc += self.strip_ln[l][g][strip];
                        }
                    }
                }
                ln_p += ln_sum_exp(&per_position) - (SHOWER_POSITIONS as f64).ln();
            }
            HitLaw::Independent => {
                for l in 0..N_LAYERS {
                    let pi = slot_probability(cfg, l);
                    for s in 0..MAX_SLOTS {
                        if e.is_occupied(l, s) {
                            ln_p += pi.ln()
                                + self.strip_ln[l][0][(e.strips[l][s] - 1) as usize]
                                + geometric_ln_pmf(e.adcs[l][s], cfg.adc_scale[l]);
                        } else {
                            ln_p += (1.0 - pi).ln();
                        }
                    }
                }
            }
        }
        -ln_p / LN_2
    }

    /// Expected hit count of a layer-view under the law.
    pub fn mean_hits(&self, l: usize) -> f64 {
        match self.cfg.hit_law {
            HitLaw::Shower => self
                .cfg
                .momentum_law
                .expect(|p| clipped_poisson_mean(shower_rate(&self.cfg, l, p))),
            HitLaw::Independent => MAX_SLOTS as f64 * slot_probability(&self.cfg, l),
        }
    }

    fn require_independent(&self) -> Result<(), GeneratorError> {
        match self.cfg.hit_law {
            HitLaw::Independent => Ok(()),
            HitLaw::Shower => Err(GeneratorError::Unsupported(
                "closed forms need the independent hit law; the shower law mixes over shower positions",
            )),
        }
    }

    pub fn strip_probabilities(&self, l: usize) -> Vec<f64> {
        self.strip_ln[l][0].iter().map(|x| x.exp()).collect()
    }

    /// Entropy of the hits in bits per event.
    pub fn hit_entropy(&self) -> Result<f64, GeneratorError> {
        self.require_independent()?;
        Ok((0..N_LAYERS)
            .map(|l| {
                let pi = slot_probability(&self.cfg, l);
                let h_attr = entropy_bits(&self.strip_probabilities(l))
                    + entropy_bits(&adc_distribution(self.cfg.adc_scale[l]));
                MAX_SLOTS as f64 * (h2(pi) + pi * h_attr)
            })
            .sum())
    }

    /// Marginals of the ADC high and low bytes. The product of the two
    /// equals the ADC law except for the clipped tail at 65535.
    fn adc_byte_marginals(&self, l: usize) -> (Vec<f64>, Vec<f64>) {
        let mut hi = vec![0.0; 256];
        let mut lo = vec![0.0; 256];
        for (a, p) in adc_distribution(self.cfg.adc_scale[l]).into_iter().enumerate() {
            hi[a >> 8] += p;
            lo[a & 0xFF] += p;
        }
        (hi, lo)
    }

    /// `template` with every hit table replaced by the quantized law.
    pub fn exact_tables(&self, template: &ModelBundle) -> Result<ModelBundle, GeneratorError> {
        self.require_independent()?;
        let n_ctx = template.n_contexts();
        let mut occ = Vec::new();
        let (mut strip, mut adc_hi, mut adc_lo) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n_ctx {
            for l in 0..N_LAYERS {
                let pi = slot_probability(&self.cfg, l);
                let t = CdfTable::from_probabilities(&[1.0 - pi, pi]).map_err(ModelError::from)?;
                occ.extend(std::iter::repeat_n(t, MAX_SLOTS));
            }
            for l in 0..N_LAYERS {
                let (hi, lo) = self.adc_byte_marginals(l);
                strip.push(CdfTable::from_probabilities(&self.strip_probabilities(l)).map_err(ModelError::from)?);
                adc_hi.push(CdfTable::from_probabilities(&hi).map_err(ModelError::from)?);
                adc_lo.push(CdfTable::from_probabilities(&lo).map_err(ModelError::from)?);
            }
        }
        Ok(template.with_hit_tables(occ, strip, adc_hi, adc_lo)?)
    }

    /// Exact `D(p || q)` of the hit model in bits per event, treating ADC
    /// bytes as independent (exact up to the clipped tail, whose mass is
    /// reported by [`Oracle::adc_tail_mass`]).
    pub fn hit_kl(&self, m: &ModelBundle) -> Result<f64, GeneratorError> {
        self.require_independent()?;
        let law = &self.cfg.momentum_law;
        let ctx_weights: Vec<f64> = match (m.mode(), m.binning()) {
            (Mode::Conditional, Some(b)) => {
                let e = b.edges();
                (0..b.n_bins())
                    .map(|i| {
                        let lo = if i == 0 { f64::NEG_INFINITY } else { e[i] };
                        let hi = if i + 1 == b.n_bins() { f64::INFINITY } else { e[i + 1] };
                        law.cdf(hi) - law.cdf(lo)
                    })
                    .collect()
            }
            _ => vec![1.0],
        };
        let mut kl = 0.0;
        for (ctx, w) in ctx_weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for l in 0..N_LAYERS {
                let pi = slot_probability(&self.cfg, l);
                let occ: f64 = (0..MAX_SLOTS)
                    .map(|s| kl_to_table(&[1.0 - pi, pi], m.occ_table(ctx, l, s)))
                    .sum();
                let (hi, lo) = self.adc_byte_marginals(l);
                let attr = kl_to_table(&self.strip_probabilities(l), m.strip_table(ctx, l))
                    + kl_to_table(&hi, m.adc_hi_table(ctx, l))
                    + kl_to_table(&lo, m.adc_lo_table(ctx, l))
                    + mutual_information(&self.cfg, l);
                kl += w * (occ + MAX_SLOTS as f64 * pi * attr);
            }
        }
        Ok(kl)
    }

    /// Probability that an ADC lands on the clipped value 65535.
    pub fn adc_tail_mass(&self) -> f64 {
        self.cfg
            .adc_scale
            .iter()
            .map(|&m| geometric_ln_pmf(ADC_MAX, m).exp())
            .fold(0.0, f64::max)
    }
}

/// Mutual information between ADC high and low bytes under the law; zero
/// for an unclipped geometric. `D(p_adc || q_hi q_lo)` equals the sum of the
/// two marginal divergences plus this term.
fn mutual_information(cfg: &SyntheticConfig, l: usize) -> f64 {
    let p = adc_distribution(cfg.adc_scale[l]);
    let mut hi = vec![0.0; 256];
    let mut lo = vec![0.0; 256];
    for (a, &x) in p.iter().enumerate() {
        hi[a >> 8] += x;
        lo[a & 0xFF] += x;
    }
    p.iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(a, &x)| x * (x.log2() - hi[a >> 8].log2() - lo[a & 0xFF].log2()))
        .sum()
}
