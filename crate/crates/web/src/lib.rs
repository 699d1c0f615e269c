//! Browser demo: each export generates a synthetic dataset from a seed, runs
//! one pipeline and returns JSON for the page to render.
//!
//! The `*_json` functions are plain Rust so they can be tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use acfid::codec::{closure_check, encode_dataset};
use acfid::compare::{gzip_compare, GZIP_LEVELS};
use acfid::event::{canonical_serialize, split_dataset, Dataset};
use acfid::fidelity::{parse_eps_grid, run_scan, three_split, ScanConfig};
use acfid::generator::{generate_synthetic, SyntheticConfig};
use acfid::metrics::{bit_budget, entropy_audit};
use acfid::model::{fit, Mode, MomentumBinning};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Keeps a page from freezing the tab.
pub const MAX_EVENTS: u32 = 50_000;
const TRAIN_FRACTION: f64 = 0.7;

type DemoResult = Result<String, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn dataset(seed: u32, n_events: u32) -> Result<Dataset, String> {
    if !(10..=MAX_EVENTS).contains(&n_events) {
        return Err(format!("event count must be in 10..={MAX_EVENTS}, got {n_events}"));
    }
    generate_synthetic(&SyntheticConfig::default().with_seed(seed as u64, n_events as usize)).map_err(err)
}

fn binning() -> MomentumBinning {
    MomentumBinning::uniform(10, 10.0).expect("valid default binning")
}

fn mode(conditional: bool) -> Mode {
    if conditional {
        Mode::Conditional
    } else {
        Mode::Unconditional
    }
}

/// Trains on 70 % of the events, encodes the rest, and reports the
/// per-layer-view bit budget, the entropy audit and the round-trip check.
pub fn budget_json(seed: u32, n_events: u32, conditional: bool) -> DemoResult {
    let d = dataset(seed, n_events)?;
    let (train, test) = split_dataset(&d, seed as u64, TRAIN_FRACTION).map_err(err)?;
    let m = fit(&train, mode(conditional), &binning()).map_err(err)?;
    let (_, acc) = encode_dataset(&test, &m).map_err(err)?;
    let audit = entropy_audit(&train, &test, &m).map_err(err)?;
    let closure = closure_check(&test, &m);
    let out = json!({
        "mode": m.mode().name(),
        "n_train": train.len(),
        "n_test": test.len(),
        "budget": bit_budget(&acc),
        "audit": audit,
        "round_trip": closure.equal,
        "model_hash": m.hash_hex(),
    });
    Ok(out.to_string())
}

/// Sizes of the two coded containers against gzip on the held-out split.
pub fn compression_json(seed: u32, n_events: u32) -> DemoResult {
    let d = dataset(seed, n_events)?;
    let (train, test) = split_dataset(&d, seed as u64, TRAIN_FRACTION).map_err(err)?;
    let size = |mode| -> Result<u64, String> {
        let m = fit(&train, mode, &binning()).map_err(err)?;
        let (cd, _) = encode_dataset(&test, &m).map_err(err)?;
        Ok(cd.to_bytes().len() as u64)
    };
    let (u, c) = (size(Mode::Unconditional)?, size(Mode::Conditional)?);
    let table = gzip_compare(&canonical_serialize(&test), u, c, &GZIP_LEVELS);
    Ok(json!({ "n_test": test.len(), "table": table }).to_string())
}

/// Perturbation scan on a three-way split of a fresh dataset.
pub fn scan_json(seed: u32, n_events: u32, eps_grid: &str, resamples: u32, with_mmd: bool) -> DemoResult {
    let grid = parse_eps_grid(eps_grid).map_err(err)?;
    let d = dataset(seed, n_events)?;
    let s = three_split(&d, seed as u64, TRAIN_FRACTION).map_err(err)?;
    let mu = fit(&s.a3, Mode::Unconditional, &binning()).map_err(err)?;
    let mc = fit(&s.a3, Mode::Conditional, &binning()).map_err(err)?;
    let cfg = ScanConfig {
        eps_grid: grid,
        resamples: resamples as usize,
        seed: seed as u64,
        // Small blocks keep the kernel matrix cheap at demo sizes.
        mmd_block_size: (s.b1.len() / 30).clamp(2, 50),
        with_mmd,
        ..ScanConfig::default()
    };
    let r = run_scan(&s.b1, &s.b2, &mu, &mc, &cfg).map_err(err)?;
    let alpha = 0.05;
    let out = json!({
        "b1": s.b1.len(),
        "b2": s.b2.len(),
        "train": s.a3.len(),
        "p_floor": r.null_uncond.floor(),
        "alpha": alpha,
        "onset_uncond": r.onset(alpha, |row| row.uncond.p_empirical),
        "onset_cond": r.onset(alpha, |row| row.cond.p_empirical),
        "onset_mmd": r.onset(alpha, |row| row.mmd.and_then(|t| t.p_empirical)),
        "rows": r.rows,
    });
    Ok(out.to_string())
}

fn js(r: DemoResult) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn budget(seed: u32, n_events: u32, conditional: bool) -> Result<String, JsValue> {
    js(budget_json(seed, n_events, conditional))
}

#[wasm_bindgen]
pub fn compression(seed: u32, n_events: u32) -> Result<String, JsValue> {
    js(compression_json(seed, n_events))
}

#[wasm_bindgen]
pub fn scan(seed: u32, n_events: u32, eps_grid: &str, resamples: u32, with_mmd: bool) -> Result<String, JsValue> {
    js(scan_json(seed, n_events, eps_grid, resamples, with_mmd))
}
