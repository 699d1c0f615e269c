//! Lossless size comparison of the arithmetic-coded containers against
//! DEFLATE (gzip framing) at several levels.

use std::fmt;
use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

pub const GZIP_LEVELS: [u32; 3] = [9, 6, 1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    pub bytes: u64,
    /// Uncompressed size over compressed size; `None` for the raw file.
    pub ratio: Option<f64>,
    /// Size relative to the unconditional container.
    pub rel_uncond: Option<f64>,
    /// Size relative to the conditional container.
    pub rel_cond: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionTable {
    pub rows: Vec<CompareRow>,
}

pub fn gzip_size(data: &[u8], level: u32) -> u64 {
    let mut enc = GzEncoder::new(Vec::new(), Compression::new(level));
    enc.write_all(data).expect("in-memory write");
    enc.finish().expect("in-memory write").len() as u64
}

/// Builds the table from the canonical file and the two container sizes.
pub fn gzip_compare(canonical: &[u8], uncond_bytes: u64, cond_bytes: u64, levels: &[u32]) -> CompressionTable {
    let raw = canonical.len() as u64;
    let row = |method: String, bytes: u64, is_raw: bool| {
        let rel = |base: u64| (!is_raw && base > 0).then(|| bytes as f64 / base as f64);
        CompareRow {
            rel_uncond: if method == "U-AC" { None } else { rel(uncond_bytes) },
            rel_cond: if method == "C-AC" { None } else { rel(cond_bytes) },
            ratio: (!is_raw && bytes > 0).then(|| raw as f64 / bytes as f64),
            method,
            bytes,
        }
    };
    let mut rows = vec![
        row("uncompressed".into(), raw, true),
        row("U-AC".into(), uncond_bytes, false),
        row("C-AC".into(), cond_bytes, false),
    ];
    for &l in levels {
        rows.push(row(format!("gzip-{l}"), gzip_size(canonical, l), false));
    }
    CompressionTable { rows }
}

impl CompressionTable {
    pub const CSV_HEADER: &'static str = "method,bytes,ratio,rel_uncond,rel_cond";

    pub fn row(&self, method: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn ratio(&self, method: &str) -> Option<f64> {
        self.row(method).and_then(|r| r.ratio)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.method,
                r.bytes,
                opt(r.ratio),
                opt(r.rel_uncond),
                opt(r.rel_cond)
            ));
        }
        out
    }
}

impl fmt::Display for CompressionTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let x = |v: Option<f64>| v.map_or("--".to_string(), |x| format!("{x:.2}x"));
        writeln!(f, "{:<14}{:>12}{:>10}{:>14}{:>14}", "method", "size [MB]", "ratio", "rel U-AC", "rel C-AC")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<14}{:>12.3}{:>10}{:>14}{:>14}",
                r.method,
                r.bytes as f64 / 1e6,
                x(r.ratio),
                x(r.rel_uncond),
                x(r.rel_cond)
            )?;
        }
        Ok(())
    }
}
