//! Codelength-based two-sample tests and the kernel MMD baseline.
//!
//! A candidate sample is compared with a baseline sample under one fixed
//! model: both are cut into `K` equal blocks, each block is encoded, and the
//! difference of mean block codelengths is standardized Welch-style. The
//! statistic is calibrated against an empirical null built by repeatedly
//! splitting a pool of real events into two halves.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CompensatedSum, LoweredDataset};
use crate::event::{Dataset, Event, EventError, ADC_MAX, MAX_SLOTS, N_LAYERS, PAD};
use crate::metrics::mean_sd;
use crate::model::ModelBundle;

#[derive(Debug, Error)]
pub enum FidelityError {
    #[error("perturbation strength must be a non-negative number, got {0}")]
    BadEpsilon(f64),
    #[error("datasets differ in shape: {0}")]
    ShapeMismatch(String),
    #[error("cannot cut {n} events into {k} blocks of {size}")]
    BadPlan { n: usize, k: usize, size: usize },
    #[error("need at least 2 blocks per sample, got {0}")]
    TooFewBlocks(usize),
    #[error("block counts differ: {0} vs {1}")]
    BlockCountMismatch(usize, usize),
    #[error("pool of {pool} events is too small: {need} required")]
    PoolTooSmall { pool: usize, need: usize },
    #[error("need at least {min} resamples, got {got}")]
    TooFewResamples { min: usize, got: usize },
    #[error("MMD needs at least two points per sample")]
    DegenerateSample,
    #[error("kernel bandwidth must be positive, got {0}")]
    BadBandwidth(f64),
    #[error("empty perturbation grid")]
    EmptyGrid,
    #[error("bad grid `{0}`: expected `log:lo:hi:n` with 0 < lo < hi, n >= 2, or a comma list")]
    GridSyntax(String),
    #[error(transparent)]
    Event(#[from] EventError),
}

/// Multiplies every occupied ADC by `1 + eps`, rounds half away from zero
/// and clips to the ADC range. Strips, padding and kinematics are untouched.
pub fn apply_adc_scale(ds: &Dataset, eps: f64) -> Result<Dataset, FidelityError> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(FidelityError::BadEpsilon(eps));
    }
    let a = 1.0 + eps;
    let events = ds
        .events()
        .iter()
        .map(|e| {
            let mut e = e.clone();
            for row in e.adcs.iter_mut() {
                for v in row.iter_mut() {
                    if *v != PAD {
                        *v = (*v as f64 * a).round().clamp(0.0, ADC_MAX as f64) as i32;
                    }
                }
            }
            e
        })
        .collect();
    Ok(Dataset::from_valid(events, format!("adc_scale({eps})<{}>", ds.provenance)))
}

/// Fraction of occupied ADC entries that differ between the two datasets.
pub fn changed_fraction(a: &Dataset, b: &Dataset) -> Result<f64, FidelityError> {
    if a.len() != b.len() {
        return Err(FidelityError::ShapeMismatch(format!("{} vs {} events", a.len(), b.len())));
    }
    let (mut occupied, mut changed) = (0u64, 0u64);
    for (i, (x, y)) in a.events().iter().zip(b.events()).enumerate() {
        for l in 0..N_LAYERS {
            for s in 0..MAX_SLOTS {
                if x.is_occupied(l, s) != y.is_occupied(l, s) {
                    return Err(FidelityError::ShapeMismatch(format!(
                        "event {i} occupancy differs at layer {l} slot {s}"
                    )));
                }
                if x.is_occupied(l, s) {
                    occupied += 1;
                    changed += (x.adcs[l][s] != y.adcs[l][s]) as u64;
                }
            }
        }
    }
    Ok(if occupied == 0 { 0.0 } else { changed as f64 / occupied as f64 })
}

/// Seeded shuffle of `0..n` cut into `K` contiguous equal blocks; the
/// remainder is dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPlan {
    blocks: Vec<Vec<usize>>,
}

impl BlockPlan {
    pub fn new(n: usize, k: usize, seed: u64) -> Result<BlockPlan, FidelityError> {
        if k == 0 || k > n {
            return Err(FidelityError::BadPlan { n, k, size: 0 });
        }
        Self::with_block_size(n, k, n / k, seed)
    }

    pub fn with_block_size(n: usize, k: usize, size: usize, seed: u64) -> Result<BlockPlan, FidelityError> {
        if k == 0 || size == 0 || k.checked_mul(size).is_none_or(|t| t > n) {
            return Err(FidelityError::BadPlan { n, k, size });
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(BlockPlan {
            blocks: idx.chunks_exact(size).take(k).map(<[usize]>::to_vec).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_size(&self) -> usize {
        self.blocks[0].len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }
}

/// Achieved bits per event of each block under the lowered model.
pub fn blocked_lengths(low: &LoweredDataset, plan: &BlockPlan) -> Vec<f64> {
    plan.blocks()
        .iter()
        .map(|b| low.achieved_bits(b) as f64 / b.len() as f64)
        .collect()
}

pub fn blocked_codelengths(ds: &Dataset, m: &ModelBundle, plan: &BlockPlan) -> Result<Vec<f64>, FidelityError> {
    if plan.blocks().iter().flatten().any(|&i| i >= ds.len()) {
        return Err(FidelityError::BadPlan {
            n: ds.len(),
            k: plan.k(),
            size: plan.block_size(),
        });
    }
    Ok(blocked_lengths(&LoweredDataset::new(ds, m), plan))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub delta_l: f64,
    pub se: f64,
    pub t: f64,
    pub mean_c: f64,
    pub mean_b: f64,
    pub sd_c: f64,
    pub sd_b: f64,
    pub k: usize,
    /// Set when the standard error vanished with a nonzero difference.
    pub infinite_t: bool,
    pub p_empirical: Option<f64>,
    pub null_size: Option<usize>,
}

fn t_statistic(delta: f64, se: f64) -> (f64, bool) {
    if se > 0.0 {
        (delta / se, false)
    } else if delta == 0.0 {
        (0.0, false)
    } else {
        (delta.signum() * f64::INFINITY, true)
    }
}

/// `dL = mean(c) - mean(b)`, `SE = sqrt(s_c^2/K + s_b^2/K)`, `t = dL / SE`.
pub fn excess_test(c_blocks: &[f64], b_blocks: &[f64]) -> Result<TestResult, FidelityError> {
    if c_blocks.len() != b_blocks.len() {
        return Err(FidelityError::BlockCountMismatch(c_blocks.len(), b_blocks.len()));
    }
    let k = c_blocks.len();
    if k < 2 {
        return Err(FidelityError::TooFewBlocks(k));
    }
    let (mean_c, sd_c) = mean_sd(c_blocks);
    let (mean_b, sd_b) = mean_sd(b_blocks);
    let delta_l = mean_c - mean_b;
    let se = (sd_c * sd_c / k as f64 + sd_b * sd_b / k as f64).sqrt();
    let (t, infinite_t) = t_statistic(delta_l, se);
    Ok(TestResult {
        delta_l,
        se,
        t,
        mean_c,
        mean_b,
        sd_c,
        sd_b,
        k,
        infinite_t,
        p_empirical: None,
        null_size: None,
    })
}

/// One-sample version for blockwise contrasts `d_k`.
pub fn contrast_test(d: &[f64]) -> Result<TestResult, FidelityError> {
    let k = d.len();
    if k < 2 {
        return Err(FidelityError::TooFewBlocks(k));
    }
    let (mean, sd) = mean_sd(d);
    let se = sd / (k as f64).sqrt();
    let (t, infinite_t) = t_statistic(mean, se);
    Ok(TestResult {
        delta_l: mean,
        se,
        t,
        mean_c: mean,
        mean_b: 0.0,
        sd_c: sd,
        sd_b: 0.0,
        k,
        infinite_t,
        p_empirical: None,
        null_size: None,
    })
}

/// Null draws of the test statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub t: Vec<f64>,
}

impl NullDistribution {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// One-sided `(1 + #{t_null >= t_obs}) / (R + 1)`.
    pub fn p_value(&self, t_obs: f64) -> f64 {
        let exceed = self.t.iter().filter(|&&t| t >= t_obs).count();
        (1 + exceed) as f64 / (self.t.len() + 1) as f64
    }

    pub fn floor(&self) -> f64 {
        1.0 / (self.t.len() + 1) as f64
    }

    pub fn attach(&self, mut r: TestResult) -> TestResult {
        r.p_empirical = Some(self.p_value(r.t));
        r.null_size = Some(self.len());
        r
    }
}

pub const DEFAULT_RESAMPLES: usize = 1500;
pub const DEFAULT_BLOCKS: usize = 10;
pub const MIN_RESAMPLES: usize = 99;
pub const DEFAULT_MMD_BLOCK: usize = 100;

fn resample_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// Evaluates `f(r)` for `r in 0..n` on up to `jobs` threads, in order.
fn parallel_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(&f).collect();
    }
    let chunk = n.div_ceil(jobs);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| s.spawn(move || (j * chunk..((j + 1) * chunk).min(n)).map(f).collect::<Vec<T>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Options shared by the null calibrations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullOptions {
    pub k: usize,
    pub resamples: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for NullOptions {
    fn default() -> Self {
        NullOptions {
            k: DEFAULT_BLOCKS,
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
            jobs: 1,
        }
    }
}

fn check_resamples(r: usize) -> Result<(), FidelityError> {
    if r < MIN_RESAMPLES {
        return Err(FidelityError::TooFewResamples {
            min: MIN_RESAMPLES,
            got: r,
        });
    }
    Ok(())
}

/// Real-vs-real null of the codelength statistic: every resample shuffles
/// the pool and takes two disjoint halves of `K * size_c` and `K * size_b`
/// events, blocked contiguously. When the pool cannot hold both, block
/// sizes shrink proportionally.
pub fn calibrate_null_lowered(
    pool: &LoweredDataset,
    size_c: usize,
    size_b: usize,
    opts: NullOptions,
) -> Result<NullDistribution, FidelityError> {
    check_resamples(opts.resamples)?;
    let k = opts.k;
    if k < 2 {
        return Err(FidelityError::TooFewBlocks(k));
    }
    let n = pool.len();
    let (mut sc, mut sb) = (size_c.max(1), size_b.max(1));
    if k * (sc + sb) > n {
        let scale = n as f64 / (k * (sc + sb)) as f64;
        sc = ((sc as f64 * scale).floor() as usize).max(1);
        sb = ((sb as f64 * scale).floor() as usize).max(1);
    }
    if k * (sc + sb) > n {
        return Err(FidelityError::PoolTooSmall { pool: n, need: 2 * k });
    }
    let t = parallel_map(opts.resamples, opts.jobs, |r| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut resample_rng(opts.seed, r));
        let (xs, rest) = idx.split_at(k * sc);
        let c: Vec<f64> = xs.chunks_exact(sc).map(|b| pool.achieved_bits(b) as f64 / sc as f64).collect();
        let b: Vec<f64> = rest[..k * sb]
            .chunks_exact(sb)
            .map(|b| pool.achieved_bits(b) as f64 / sb as f64)
            .collect();
        excess_test(&c, &b).expect("equal block counts").t
    });
    Ok(NullDistribution { t })
}

/// Null from a pool of baseline events, halves of equal size.
pub fn calibrate_null(pool: &Dataset, m: &ModelBundle, opts: NullOptions) -> Result<NullDistribution, FidelityError> {
    let need = 2 * opts.k;
    if pool.len() < need {
        return Err(FidelityError::PoolTooSmall { pool: pool.len(), need });
    }
    let size = pool.len() / need;
    calibrate_null_lowered(&LoweredDataset::new(pool, m), size, size, opts)
}

/// Events of `a` followed by those of `b` not already present.
pub fn distinct_union(a: &Dataset, b: &Dataset) -> Dataset {
    let mut seen: HashSet<Vec<u8>> = HashSet::with_capacity(a.len() + b.len());
    let mut events = Vec::with_capacity(a.len() + b.len());
    for e in a.events().iter().chain(b.events()) {
        if seen.insert(e.canonical_bytes()) {
            events.push(e.clone());
        }
    }
    Dataset::from_valid(events, format!("union<{}|{}>", a.provenance, b.provenance))
}

/// Blocked excess-codelength test of `candidate` against `baseline` under a
/// fixed model, with the null built from `pool`.
pub fn excess_codelength_test(
    candidate: &Dataset,
    baseline: &Dataset,
    pool: &Dataset,
    m: &ModelBundle,
    opts: NullOptions,
) -> Result<TestResult, FidelityError> {
    let plan_c = BlockPlan::new(candidate.len(), opts.k, opts.seed)?;
    let plan_b = BlockPlan::new(baseline.len(), opts.k, opts.seed)?;
    let c = blocked_codelengths(candidate, m, &plan_c)?;
    let b = blocked_codelengths(baseline, m, &plan_b)?;
    let null = calibrate_null_lowered(
        &LoweredDataset::new(pool, m),
        plan_c.block_size(),
        plan_b.block_size(),
        NullOptions {
            seed: opts.seed.wrapping_add(1),
            ..opts
        },
    )?;
    Ok(null.attach(excess_test(&c, &b)?))
}

/// `L_R(S) - L_R(R)` with the null from real-vs-real splits of `real_ref`.
pub fn fidelity_gap(
    real_ref: &Dataset,
    synth: &Dataset,
    m_fit_on_real: &ModelBundle,
    opts: NullOptions,
) -> Result<TestResult, FidelityError> {
    excess_codelength_test(synth, real_ref, real_ref, m_fit_on_real, opts)
}

pub const FEATURE_DIM: usize = 6 * N_LAYERS + 3;
pub type Features = [f64; FEATURE_DIM];

/// Per layer-view: occupancy fraction, ADC mean, SD and max, strip mean and
/// SD over occupied slots (population SDs, zeros for empty layer-views);
/// then the momentum components.
pub fn extract_features(e: &Event) -> Features {
    let mut f = [0.0; FEATURE_DIM];
    for l in 0..N_LAYERS {
        let mut n = 0usize;
        let (mut sa, mut sa2, mut amax, mut ss, mut ss2) = (0.0, 0.0, 0.0f64, 0.0, 0.0);
        for s in 0..MAX_SLOTS {
            if e.is_occupied(l, s) {
                let (a, st) = (e.adcs[l][s] as f64, e.strips[l][s] as f64);
                n += 1;
                sa += a;
                sa2 += a * a;
                amax = amax.max(a);
                ss += st;
                ss2 += st * st;
            }
        }
        let o = &mut f[6 * l..6 * l + 6];
        o[0] = n as f64 / MAX_SLOTS as f64;
        if n > 0 {
            let nf = n as f64;
            let (ma, ms) = (sa / nf, ss / nf);
            o[1] = ma;
            o[2] = (sa2 / nf - ma * ma).max(0.0).sqrt();
            o[3] = amax;
            o[4] = ms;
            o[5] = (ss2 / nf - ms * ms).max(0.0).sqrt();
        }
    }
    for c in 0..3 {
        f[6 * N_LAYERS + c] = e.momentum[c] as f64;
    }
    f
}

pub fn dataset_features(ds: &Dataset) -> Vec<Features> {
    ds.events().iter().map(extract_features).collect()
}

#[inline]
fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub fn rbf(u: &[f64], v: &[f64], sigma: f64) -> f64 {
    (-sq_dist(u, v) / (2.0 * sigma * sigma)).exp()
}

/// Unbiased MMD^2 with a Gaussian RBF kernel: off-diagonal means within each
/// sample minus twice the cross mean.
pub fn mmd2_unbiased<T: AsRef<[f64]>>(x: &[T], y: &[T], sigma: f64) -> Result<f64, FidelityError> {
    if x.len() < 2 || y.len() < 2 {
        return Err(FidelityError::DegenerateSample);
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(FidelityError::BadBandwidth(sigma));
    }
    let within = |z: &[T]| {
        let mut s = CompensatedSum::default();
        for i in 0..z.len() {
            for j in i + 1..z.len() {
                s.add(rbf(z[i].as_ref(), z[j].as_ref(), sigma));
            }
        }
        2.0 * s.value() / (z.len() * (z.len() - 1)) as f64
    };
    let mut cross = CompensatedSum::default();
    for a in x {
        for b in y {
            cross.add(rbf(a.as_ref(), b.as_ref(), sigma));
        }
    }
    Ok(within(x) + within(y) - 2.0 * cross.value() / (x.len() * y.len()) as f64)
}

/// Median pairwise Euclidean distance over at most `max_points` points drawn
/// without replacement.
pub fn median_bandwidth<T: AsRef<[f64]>>(points: &[T], max_points: usize, seed: u64) -> f64 {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    if idx.len() > max_points {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(max_points);
    }
    let mut d = Vec::with_capacity(idx.len() * idx.len().saturating_sub(1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            d.push(sq_dist(points[i].as_ref(), points[j].as_ref()).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let med = if d.len() % 2 == 1 { d[mid] } else { 0.5 * (d[mid - 1] + d[mid]) };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn gather(f: &[Features], idx: &[usize]) -> Vec<Features> {
    idx.iter().map(|&i| f[i]).collect()
}

/// `d_k = MMD^2(C_k, B2_k) - MMD^2(B1_k, B2_k)` over independently drawn
/// blocks of each sample.
pub fn mmd_block_contrast(
    c: &[Features],
    b1: &[Features],
    b2: &[Features],
    plans: [&BlockPlan; 3],
    sigma: f64,
) -> Result<Vec<f64>, FidelityError> {
    let [pc, p1, p2] = plans;
    if pc.k() != p1.k() || p1.k() != p2.k() {
        return Err(FidelityError::BlockCountMismatch(pc.k(), p2.k()));
    }
    (0..pc.k())
        .map(|k| {
            let ck = gather(c, &pc.blocks()[k]);
            let b1k = gather(b1, &p1.blocks()[k]);
            let b2k = gather(b2, &p2.blocks()[k]);
            Ok(mmd2_unbiased(&ck, &b2k, sigma)? - mmd2_unbiased(&b1k, &b2k, sigma)?)
        })
        .collect()
}

/// Precomputed kernel matrix over a pool of feature vectors.
struct Gram {
    n: usize,
    k: Vec<f64>,
}

impl Gram {
    fn new(f: &[Features], sigma: f64) -> Gram {
        let n = f.len();
        let mut k = vec![1.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = rbf(&f[i], &f[j], sigma);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Gram { n, k }
    }

    fn mmd2(&self, x: &[usize], y: &[usize]) -> f64 {
        let within = |z: &[usize]| {
            let mut s = 0.0;
            for (a, &i) in z.iter().enumerate() {
                for &j in &z[a + 1..] {
                    s += self.k[i * self.n + j];
                }
            }
            2.0 * s / (z.len() * (z.len() - 1)) as f64
        };
        let mut cross = 0.0;
        for &i in x {
            for &j in y {
                cross += self.k[i * self.n + j];
            }
        }
        within(x) + within(y) - 2.0 * cross / (x.len() * y.len()) as f64
    }
}

/// Real-vs-real null of the MMD contrast statistic: each resample draws
/// three disjoint sets of `K` blocks from the pool standing in for the
/// candidate and the two baselines.
pub fn calibrate_mmd_null(
    pool: &[Features],
    block_size: usize,
    sigma: f64,
    opts: NullOptions,
) -> Result<NullDistribution, FidelityError> {
    check_resamples(opts.resamples)?;
    let k = opts.k;
    if k < 2 {
        return Err(FidelityError::TooFewBlocks(k));
    }
    if block_size < 2 {
        return Err(FidelityError::DegenerateSample);
    }
    let need = 3 * k * block_size;
    if pool.len() < need {
        return Err(FidelityError::PoolTooSmall { pool: pool.len(), need });
    }
    // Bound the kernel matrix; resamples permute a fixed random subset.
    let cap = need.max(2000).min(pool.len());
    let mut sub: Vec<usize> = (0..pool.len()).collect();
    sub.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6d6d64));
    sub.truncate(cap);
    let gram = Gram::new(&gather(pool, &sub), sigma);
    let t = parallel_map(opts.resamples, opts.jobs, |r| {
        let mut idx: Vec<usize> = (0..cap).collect();
        idx.shuffle(&mut resample_rng(opts.seed, r));
        let d: Vec<f64> = (0..k)
            .map(|b| {
                let blk = |part: usize| &idx[(part * k + b) * block_size..(part * k + b + 1) * block_size];
                gram.mmd2(blk(0), blk(2)) - gram.mmd2(blk(1), blk(2))
            })
            .collect();
        contrast_test(&d).expect("k >= 2").t
    });
    Ok(NullDistribution { t })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &t in &idx[i..=j] {
                r[t] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, _) = mean_sd(&rx);
    let (my, _) = mean_sd(&ry);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

/// Parses `log:lo:hi:n` or a comma-separated list of non-negative values.
pub fn parse_eps_grid(text: &str) -> Result<Vec<f64>, FidelityError> {
    let bad = || FidelityError::GridSyntax(text.to_string());
    let text = text.trim();
    let grid = if let Some(rest) = text.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [lo, hi, n] = parts[..] else { return Err(bad()) };
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi > lo && hi.is_finite() && n >= 2) {
            return Err(bad());
        }
        log_grid(lo, hi, n)
    } else {
        text.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(bad());
    }
    Ok(grid)
}

/// The three independent 70/30 splits of a reference dataset.
#[derive(Debug, Clone)]
pub struct ThreeSplit {
    /// Source of the perturbed candidate.
    pub b1: Dataset,
    /// Independent baseline.
    pub b2: Dataset,
    /// Training split of the reference models.
    pub a3: Dataset,
}

pub fn three_split(d: &Dataset, seed: u64, train_fraction: f64) -> Result<ThreeSplit, FidelityError> {
    let (_, b1) = crate::event::split_dataset(d, seed, train_fraction)?;
    let (_, b2) = crate::event::split_dataset(d, seed.wrapping_add(1), train_fraction)?;
    let (a3, _) = crate::event::split_dataset(d, seed.wrapping_add(2), train_fraction)?;
    Ok(ThreeSplit { b1, b2, a3 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub eps_grid: Vec<f64>,
    pub k: usize,
    pub resamples: usize,
    pub seed: u64,
    /// Events per MMD block, capped so the null pool holds three disjoint
    /// sets of `K` blocks. Kernel cost grows with its square.
    pub mmd_block_size: usize,
    /// Kernel bandwidth; `None` applies the median heuristic to B1 and B2.
    pub bandwidth: Option<f64>,
    pub with_mmd: bool,
    pub jobs: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            eps_grid: log_grid(1e-6, 1e-1, 23),
            k: DEFAULT_BLOCKS,
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
            mmd_block_size: DEFAULT_MMD_BLOCK,
            bandwidth: None,
            with_mmd: true,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub epsilon: f64,
    pub uncond: TestResult,
    pub cond: TestResult,
    pub mmd: Option<TestResult>,
    pub changed_adc_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    pub bandwidth: Option<f64>,
    pub mmd_block_size: Option<usize>,
    pub null_uncond: NullDistribution,
    pub null_cond: NullDistribution,
    pub null_mmd: Option<NullDistribution>,
}

impl ScanResult {
    pub const CSV_HEADER: &'static str =
        "epsilon,delta_l_uncond,p_uncond,delta_l_cond,p_cond,delta_mmd2,p_mmd,changed_adc_fraction";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let (dm, pm) = match &r.mmd {
                Some(t) => (format!("{:.9e}", t.delta_l), format!("{:.6e}", t.p_empirical.unwrap_or(f64::NAN))),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{:.6e},{:.6},{:.6e},{:.6},{:.6e},{},{},{:.6e}\n",
                r.epsilon,
                r.uncond.delta_l,
                r.uncond.p_empirical.unwrap_or(f64::NAN),
                r.cond.delta_l,
                r.cond.p_empirical.unwrap_or(f64::NAN),
                dm,
                pm,
                r.changed_adc_fraction
            ));
        }
        out
    }

    /// Smallest grid value from which a column's p-value stays below
    /// `alpha`; `None` if the last row is not significant.
    pub fn onset(&self, alpha: f64, column: impl Fn(&ScanRow) -> Option<f64>) -> Option<f64> {
        let mut rows: Vec<&ScanRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
        let mut onset = None;
        for r in rows {
            match column(r) {
                Some(p) if p < alpha => {
                    onset.get_or_insert(r.epsilon);
                }
                _ => onset = None,
            }
        }
        onset
    }
}

/// Perturbation scan: candidates `C_eps` built from `b1`, compared with
/// `b2` under both fixed models and by MMD. Blocks are fixed across the
/// grid; the nulls are built once from the distinct union of `b1` and `b2`.
pub fn run_scan(
    b1: &Dataset,
    b2: &Dataset,
    m_uncond: &ModelBundle,
    m_cond: &ModelBundle,
    cfg: &ScanConfig,
) -> Result<ScanResult, FidelityError> {
    if cfg.eps_grid.is_empty() {
        return Err(FidelityError::EmptyGrid);
    }
    if let Some(&bad) = cfg.eps_grid.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return Err(FidelityError::BadEpsilon(bad));
    }
    let k = cfg.k;
    let seed = cfg.seed;
    let opts = |s: u64| NullOptions {
        k,
        resamples: cfg.resamples,
        seed: s,
        jobs: cfg.jobs,
    };
    let plan_c = BlockPlan::new(b1.len(), k, seed)?;
    let plan_b = BlockPlan::new(b2.len(), k, seed.wrapping_add(1))?;
    let pool = distinct_union(b1, b2);

    let models = [m_uncond, m_cond];
    let mut base = Vec::with_capacity(2);
    let mut nulls = Vec::with_capacity(2);
    for (i, m) in models.iter().enumerate() {
        base.push(blocked_lengths(&LoweredDataset::new(b2, m), &plan_b));
        nulls.push(calibrate_null_lowered(
            &LoweredDataset::new(&pool, m),
            plan_c.block_size(),
            plan_b.block_size(),
            opts(seed.wrapping_add(10 + i as u64)),
        )?);
    }

    let mut mmd_setup = None;
    if cfg.with_mmd {
        let f1 = dataset_features(b1);
        let f2 = dataset_features(b2);
        let fpool = dataset_features(&pool);
        let sigma = match cfg.bandwidth {
            Some(s) => s,
            None => {
                let both: Vec<Features> = f1.iter().chain(&f2).copied().collect();
                median_bandwidth(&both, 1000, seed.wrapping_add(20))
            }
        };
        let max_size = (fpool.len() / (3 * k)).min(b1.len() / k).min(b2.len() / k);
        let size = cfg.mmd_block_size.min(max_size);
        let plans = [
            BlockPlan::with_block_size(b1.len(), k, size, seed.wrapping_add(30))?,
            BlockPlan::with_block_size(b1.len(), k, size, seed.wrapping_add(31))?,
            BlockPlan::with_block_size(b2.len(), k, size, seed.wrapping_add(32))?,
        ];
        let null = calibrate_mmd_null(&fpool, size, sigma, opts(seed.wrapping_add(33)))?;
        mmd_setup = Some((f1, f2, sigma, size, plans, null));
    }

    let mut rows = Vec::with_capacity(cfg.eps_grid.len());
    for &eps in &cfg.eps_grid {
        let c = apply_adc_scale(b1, eps)?;
        let mut tests = [None, None];
        for (i, m) in models.iter().enumerate() {
            let lc = blocked_lengths(&LoweredDataset::new(&c, m), &plan_c);
            tests[i] = Some(nulls[i].attach(excess_test(&lc, &base[i])?));
        }
        let mmd = match &mmd_setup {
            Some((f1, f2, sigma, _, plans, null)) => {
                let fc = dataset_features(&c);
                let d = mmd_block_contrast(&fc, f1, f2, [&plans[0], &plans[1], &plans[2]], *sigma)?;
                Some(null.attach(contrast_test(&d)?))
            }
            None => None,
        };
        rows.push(ScanRow {
            epsilon: eps,
            uncond: tests[0].unwrap(),
            cond: tests[1].unwrap(),
            mmd,
            changed_adc_fraction: changed_fraction(b1, &c)?,
        });
    }
    let (bandwidth, mmd_block_size, null_mmd) = match mmd_setup {
        Some((_, _, s, size, _, null)) => (Some(s), Some(size), Some(null)),
        None => (None, None, None),
    };
    let mut nulls = nulls.into_iter();
    Ok(ScanResult {
        rows,
        bandwidth,
        mmd_block_size,
        null_uncond: nulls.next().unwrap(),
        null_cond: nulls.next().unwrap(),
        null_mmd,
    })
}

/// Draws `n` distinct indices below `len`; used for pooled subsamples.
pub fn sample_indices(len: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, len, n.min(len)).into_vec()
}

#[doc(hidden)]
pub fn random_features(n: usize, dim: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>() + shift).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_synthetic, SyntheticConfig};
    use crate::model::{fit_unconditional, MomentumBinning};

    fn sample(n: usize, seed: u64) -> Dataset {
        generate_synthetic(&SyntheticConfig::default().with_seed(seed, n)).unwrap()
    }

    fn one_hit(adc: i32) -> Dataset {
        let mut e = Event::empty([0.0, 0.0, 1.0]);
        e.strips[0][0] = 3;
        e.adcs[0][0] = adc;
        Dataset::new(vec![e], "t").unwrap()
    }

    #[test]
    fn scale_rounds_half_away_from_zero() {
        let get = |d: &Dataset| d.events()[0].adcs[0][0];
        assert_eq!(get(&apply_adc_scale(&one_hit(100), 0.004).unwrap()), 100);
        assert_eq!(get(&apply_adc_scale(&one_hit(200), 0.004).unwrap()), 201);
        // 125 * 1.004 = 125.5 exactly in binary? 125.5 rounds away from zero
        assert_eq!(get(&apply_adc_scale(&one_hit(125), 0.004).unwrap()), 126);
        assert_eq!(get(&apply_adc_scale(&one_hit(65535), 0.5).unwrap()), 65535);
        assert_eq!(get(&apply_adc_scale(&one_hit(0), 3.0).unwrap()), 0);
        assert!(apply_adc_scale(&one_hit(1), -0.1).is_err());
        assert!(apply_adc_scale(&one_hit(1), f64::NAN).is_err());
    }

    #[test]
    fn zero_scale_is_identity_and_padding_is_kept() {
        let ds = sample(200, 1);
        let same = apply_adc_scale(&ds, 0.0).unwrap();
        assert_eq!(same.events(), ds.events());
        assert_eq!(changed_fraction(&ds, &same).unwrap(), 0.0);
        let big = apply_adc_scale(&ds, 10.0).unwrap();
        for (a, b) in ds.events().iter().zip(big.events()) {
            assert_eq!(a.strips, b.strips);
            assert_eq!(a.momentum, b.momentum);
        }
        let zero_adcs: f64 = ds
            .events()
            .iter()
            .flat_map(|e| e.adcs.iter().flatten())
            .filter(|&&a| a == 0)
            .count() as f64;
        let occupied: f64 = ds.events().iter().map(|e| e.total_hits() as f64).sum();
        let f = changed_fraction(&ds, &big).unwrap();
        assert!((f - (1.0 - zero_adcs / occupied)).abs() < 1e-12);
    }

    #[test]
    fn changed_fraction_is_monotone_and_matches_brute_force() {
        let ds = sample(300, 2);
        let mut last = 0.0;
        for eps in log_grid(1e-6, 1.0, 30) {
            let p = apply_adc_scale(&ds, eps).unwrap();
            let f = changed_fraction(&ds, &p).unwrap();
            let (mut n, mut c) = (0, 0);
            for e in ds.events() {
                for l in 0..N_LAYERS {
                    for s in 0..MAX_SLOTS {
                        if e.adcs[l][s] != PAD {
                            n += 1;
                            let v = e.adcs[l][s] as f64 * (1.0 + eps);
                            c += ((v.round().min(65535.0)) as i32 != e.adcs[l][s]) as usize;
                        }
                    }
                }
            }
            assert_eq!(f, c as f64 / n as f64);
            assert!(f >= last);
            last = f;
        }
    }

    #[test]
    fn plans_are_disjoint_and_equal_sized() {
        let p = BlockPlan::new(103, 10, 5).unwrap();
        assert_eq!(p.k(), 10);
        assert_eq!(p.block_size(), 10);
        let all: HashSet<usize> = p.blocks().iter().flatten().copied().collect();
        assert_eq!(all.len(), 100);
        assert_eq!(p, BlockPlan::new(103, 10, 5).unwrap());
        assert!(BlockPlan::new(5, 6, 0).is_err());
        assert!(BlockPlan::new(5, 0, 0).is_err());
    }

    #[test]
    fn single_block_gives_dataset_mean() {
        let m = fit_unconditional(&sample(500, 1)).unwrap();
        let ds = sample(100, 2);
        let plan = BlockPlan::new(100, 1, 0).unwrap();
        let l = blocked_codelengths(&ds, &m, &plan).unwrap();
        let low = LoweredDataset::new(&ds, &m);
        let mut order = plan.blocks()[0].clone();
        assert_eq!(l[0], low.achieved_bits(&order) as f64 / 100.0);
        order.sort();
        let (_, acc) = crate::codec::encode_dataset(&ds, &m).unwrap();
        // order changes only the termination of each stream
        assert!((l[0] - acc.mean_achieved()).abs() <= 4.0 * 8.0 / 100.0);
    }

    #[test]
    fn duplicated_events_give_zero_block_variance() {
        let one = sample(1, 3);
        let ds = Dataset::new(vec![one.events()[0].clone(); 50], "dup").unwrap();
        let m = fit_unconditional(&sample(100, 1)).unwrap();
        let l = blocked_codelengths(&ds, &m, &BlockPlan::new(50, 5, 1).unwrap()).unwrap();
        assert!(l.iter().all(|&v| v == l[0]));
    }

    #[test]
    fn excess_test_hand_values() {
        let r = excess_test(&[2.0, 4.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.delta_l, 2.0);
        assert!((r.se - 1.0).abs() < 1e-15);
        assert!((r.t - 2.0).abs() < 1e-15);
        let r = excess_test(&[3.0, 1.0, 2.0], &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(r.t, 0.0);
        let r = excess_test(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
        assert!(r.infinite_t && r.t == f64::INFINITY);
        assert!(excess_test(&[1.0], &[1.0]).is_err());
        assert!(excess_test(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn p_value_formula_and_floor() {
        let null = NullDistribution {
            t: vec![-1.0, 0.0, 0.5, 2.0],
        };
        assert_eq!(null.p_value(0.5), 3.0 / 5.0);
        assert_eq!(null.p_value(10.0), 1.0 / 5.0);
        assert_eq!(null.p_value(f64::INFINITY), null.floor());
        assert_eq!(null.p_value(-5.0), 1.0);
        let big = NullDistribution { t: vec![0.0; 1500] };
        assert!((big.floor() - 6.662e-4).abs() < 5e-8);
    }

    #[test]
    fn null_is_centered_and_deterministic() {
        let m = fit_unconditional(&sample(1000, 1)).unwrap();
        let pool = sample(400, 5);
        let opts = NullOptions {
            k: 10,
            resamples: 300,
            seed: 3,
            jobs: 1,
        };
        let null = calibrate_null(&pool, &m, opts).unwrap();
        let again = calibrate_null(&pool, &m, NullOptions { jobs: 3, ..opts }).unwrap();
        assert_eq!(null, again);
        let (mean, sd) = mean_sd(&null.t);
        assert!(mean.abs() < 3.0 * sd / (null.len() as f64).sqrt() + 1e-12, "{mean} {sd}");
        assert!(calibrate_null(&sample(15, 1), &m, opts).is_err());
        assert!(calibrate_null(&pool, &m, NullOptions { resamples: 10, ..opts }).is_err());
    }

    #[test]
    fn gap_of_a_sample_with_itself_is_zero() {
        let m = fit_unconditional(&sample(500, 1)).unwrap();
        let r = sample(300, 2);
        let opts = NullOptions {
            k: 10,
            resamples: 99,
            seed: 4,
            jobs: 1,
        };
        let g = fidelity_gap(&r, &r, &m, opts).unwrap();
        assert_eq!(g.delta_l, 0.0);
        assert_eq!(g.t, 0.0);
    }

    #[test]
    fn features_of_one_hit() {
        let mut e = Event::empty([0.5, -1.0, 2.0]);
        e.strips[4][7] = 10;
        e.adcs[4][7] = 300;
        let f = extract_features(&e);
        assert_eq!(&f[24..30], &[0.05, 300.0, 0.0, 300.0, 10.0, 0.0]);
        assert!(f[..24].iter().all(|&v| v == 0.0));
        assert_eq!(&f[54..], &[0.5, -1.0, 2.0]);
        let mut g = Event::empty([0.5, -1.0, 2.0]);
        g.strips[4][19] = 10;
        g.adcs[4][19] = 300;
        assert_eq!(extract_features(&g), f);
    }

    #[test]
    fn features_use_population_sd() {
        let mut e = Event::empty([0.0; 3]);
        for (s, (st, a)) in [(1, 10), (3, 30)].into_iter().enumerate() {
            e.strips[0][s] = st;
            e.adcs[0][s] = a;
        }
        let f = extract_features(&e);
        assert_eq!(&f[..6], &[0.1, 20.0, 10.0, 30.0, 2.0, 1.0]);
    }

    #[test]
    fn mmd_two_point_hand_value() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![vec![3.0], vec![3.0]];
        let k = |d: f64| (-d * d / 2.0).exp();
        let expect = k(1.0) + k(0.0) - 2.0 * (k(3.0) + k(2.0)) / 2.0;
        assert!((mmd2_unbiased(&x, &y, 1.0).unwrap() - expect).abs() < 1e-15);
        assert!(mmd2_unbiased(&x[..1], &y, 1.0).is_err());
        assert!(mmd2_unbiased(&x, &y, 0.0).is_err());
    }

    #[test]
    fn mmd_of_a_sample_with_itself() {
        // Coincident points: exactly zero up to rounding.
        let same = vec![vec![1.0, 2.0]; 10];
        assert!(mmd2_unbiased(&same, &same, 1.3).unwrap().abs() < 1e-12);
        // Distinct points: (2/m)(mean off-diagonal kernel - 1), never positive.
        let x = random_features(30, 4, 0.0, 1);
        let v = mmd2_unbiased(&x, &x, 0.7).unwrap();
        let m = x.len() as f64;
        let mut off = 0.0;
        for i in 0..x.len() {
            for j in 0..x.len() {
                if i != j {
                    off += rbf(&x[i], &x[j], 0.7);
                }
            }
        }
        let closed = 2.0 / m * (off / (m * (m - 1.0)) - 1.0);
        assert!((v - closed).abs() < 1e-12);
        assert!(v <= 0.0 && v >= -2.0 / m);
    }

    #[test]
    fn gram_matches_direct_mmd() {
        let f: Vec<Features> = dataset_features(&sample(40, 7));
        let sigma = median_bandwidth(&f, 1000, 1);
        let g = Gram::new(&f, sigma);
        let x: Vec<usize> = (0..15).collect();
        let y: Vec<usize> = (20..40).collect();
        let direct = mmd2_unbiased(&gather(&f, &x), &gather(&f, &y), sigma).unwrap();
        assert!((g.mmd2(&x, &y) - direct).abs() < 1e-12);
    }

    #[test]
    fn median_bandwidth_by_hand() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        // distances 1, 3, 2
        assert_eq!(median_bandwidth(&pts, 10, 0), 2.0);
    }

    #[test]
    fn mmd_contrast_detects_large_scale_change() {
        let b1 = sample(600, 1);
        let b2 = sample(600, 2);
        let c = apply_adc_scale(&b1, 0.5).unwrap();
        let (f1, f2, fc) = (dataset_features(&b1), dataset_features(&b2), dataset_features(&c));
        let both: Vec<Features> = f1.iter().chain(&f2).copied().collect();
        let sigma = median_bandwidth(&both, 1000, 0);
        let plans = [
            BlockPlan::with_block_size(600, 10, 50, 1).unwrap(),
            BlockPlan::with_block_size(600, 10, 50, 2).unwrap(),
            BlockPlan::with_block_size(600, 10, 50, 3).unwrap(),
        ];
        let d = mmd_block_contrast(&fc, &f1, &f2, [&plans[0], &plans[1], &plans[2]], sigma).unwrap();
        let r = contrast_test(&d).unwrap();
        assert!(r.t > 5.0, "{r:?}");
        let d0 = mmd_block_contrast(&f1, &f1, &f2, [&plans[0], &plans[1], &plans[2]], sigma).unwrap();
        let r0 = contrast_test(&d0).unwrap();
        assert!(r0.delta_l.abs() < 3.0 * r0.se, "{r0:?}");
    }

    #[test]
    fn spearman_by_hand() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        // ties get average ranks: y ranks [1.5, 1.5, 3]
        let r = spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 7.0]);
        assert!((r - 0.8660254037844386).abs() < 1e-12);
    }

    #[test]
    fn grid_syntax() {
        let g = parse_eps_grid("log:1e-6:1e-1:23").unwrap();
        assert_eq!(g, log_grid(1e-6, 1e-1, 23));
        assert_eq!(parse_eps_grid("0, 0.01,0.1").unwrap(), vec![0.0, 0.01, 0.1]);
        for bad in ["log:1e-1:1e-6:5", "log:0:1:5", "log:1e-3:1e-1", "log:1e-3:1e-1:1", "", "a,b", "-1", "nan"] {
            assert!(parse_eps_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn log_grid_shape() {
        let g = log_grid(1e-6, 1e-1, 23);
        assert_eq!(g.len(), 23);
        assert!((g[0] - 1e-6).abs() < 1e-18 && (g[22] - 1e-1).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn small_scan_runs_end_to_end() {
        let d = sample(1200, 9);
        let s = three_split(&d, 1, 0.7).unwrap();
        let mu = fit_unconditional(&s.a3).unwrap();
        let mc = crate::model::fit_conditional(&s.a3, &MomentumBinning::default()).unwrap();
        let cfg = ScanConfig {
            eps_grid: vec![0.0, 0.01, 0.3],
            resamples: 99,
            seed: 2,
            ..ScanConfig::default()
        };
        let r = run_scan(&s.b1, &s.b2, &mu, &mc, &cfg).unwrap();
        assert_eq!(r.rows.len(), 3);
        let csv = r.to_csv();
        assert!(csv.starts_with(ScanResult::CSV_HEADER));
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(r.rows[0].changed_adc_fraction, 0.0);
        assert!(r.rows[2].uncond.delta_l > r.rows[0].uncond.delta_l);
        assert!(r.rows.iter().all(|row| row.uncond.p_empirical.unwrap() >= 1.0 / 100.0));
    }
}
