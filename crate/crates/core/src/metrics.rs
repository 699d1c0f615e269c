//! Entropy, cross-entropy and codelength audits, and the per-layer bit
//! budget.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{account_event, encode_dataset, CodecError, CodelengthAccount, CompensatedSum};
use crate::event::{Dataset, LayerView};
use crate::generator::{GeneratorError, Oracle};
use crate::model::{model_entropy_weighted, ContextWeights, ModelBundle, ModelError, Tag};

/// Bits per event split by component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentBits {
    pub occ: f64,
    pub strip: f64,
    pub adc: f64,
    pub hits: f64,
    pub kinematics: f64,
    pub total: f64,
}

impl ComponentBits {
    fn from_account(acc: &CodelengthAccount) -> ComponentBits {
        let n = acc.n_events as f64;
        let occ = acc.section_ideal(Tag::Occ) / n;
        let strip = acc.section_ideal(Tag::Strip) / n;
        let adc = acc.section_ideal(Tag::Adc) / n;
        let kinematics = acc.section_ideal(Tag::Kin) / n;
        ComponentBits {
            occ,
            strip,
            adc,
            hits: acc.hit_ideal_total() / n,
            kinematics,
            total: acc.ideal_total() / n,
        }
    }
}

/// Ideal account of `ds` under `m` without running the coder.
pub fn ideal_account(ds: &Dataset, m: &ModelBundle) -> CodelengthAccount {
    let mut acc = CodelengthAccount::default();
    for e in ds.events() {
        account_event(m, e, &mut acc);
    }
    acc
}

/// Empirical cross-entropy `H(p_hat_ds, q)` in bits per event.
pub fn cross_entropy(ds: &Dataset, m: &ModelBundle) -> ComponentBits {
    ComponentBits::from_account(&ideal_account(ds, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    /// Mean of `-log2 q(hits) + log2 p(hits)` in bits per event.
    pub kl: f64,
    pub se: f64,
    pub model_bits: f64,
    pub oracle_bits: f64,
    pub n: usize,
}

/// Estimates `D(p || q)` of the hit model on a sample from the oracle's law.
pub fn kl_vs_oracle(ds: &Dataset, m: &ModelBundle, oracle: &Oracle) -> Result<KlEstimate, GeneratorError> {
    oracle.check_provenance(ds)?;
    let mut diffs = Vec::with_capacity(ds.len());
    let (mut qs, mut ps) = (CompensatedSum::default(), CompensatedSum::default());
    for e in ds.events() {
        let mut acc = CodelengthAccount::default();
        account_event(m, e, &mut acc);
        let q = acc.hit_ideal_total();
        let p = oracle.hit_bits(e);
        qs.add(q);
        ps.add(p);
        diffs.push(q - p);
    }
    let n = diffs.len() as f64;
    let (mean, sd) = mean_sd(&diffs);
    Ok(KlEstimate {
        kl: mean,
        se: if diffs.len() > 1 { sd / n.sqrt() } else { f64::INFINITY },
        model_bits: qs.value() / n,
        oracle_bits: ps.value() / n,
        n: diffs.len(),
    })
}

/// Mean and sample standard deviation (`1/(n-1)`).
pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mut s = CompensatedSum::default();
    x.iter().for_each(|&v| s.add(v));
    let mean = s.value() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let mut ss = CompensatedSum::default();
    x.iter().for_each(|&v| ss.add((v - mean) * (v - mean)));
    (mean, (ss.value() / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditCell {
    /// Model entropy under this dataset's context weights.
    pub model_entropy: f64,
    pub cross_entropy: f64,
    pub achieved: f64,
    pub overhead_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub split: String,
    pub n_events: u64,
    pub hits: AuditCell,
    pub kinematics: AuditCell,
    pub total: AuditCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyAudit {
    pub mode: String,
    pub rows: Vec<AuditRow>,
}

fn cell(h: f64, hpq: f64, l: f64) -> AuditCell {
    AuditCell {
        model_entropy: h,
        cross_entropy: hpq,
        achieved: l,
        overhead_pct: (l - hpq) / hpq * 100.0,
    }
}

/// Audit row of one dataset under `m`.
pub fn audit_row(label: &str, ds: &Dataset, m: &ModelBundle) -> Result<AuditRow, CodecError> {
    let (_, acc) = encode_dataset(ds, m)?;
    let h = model_entropy_weighted(m, &ContextWeights::tally(ds, m))?;
    let n = acc.n_events as f64;
    let hpq_hits = acc.hit_ideal_total() / n;
    let hpq_kin = acc.section_ideal(Tag::Kin) / n;
    let l_hits =
        (acc.achieved_bits[Tag::Occ.index()] + acc.achieved_bits[Tag::Strip.index()] + acc.achieved_bits[Tag::Adc.index()]) as f64 / n;
    let l_kin = acc.achieved_bits[Tag::Kin.index()] as f64 / n;
    Ok(AuditRow {
        split: label.to_string(),
        n_events: acc.n_events,
        hits: cell(h.hits, hpq_hits, l_hits),
        kinematics: cell(h.kinematics, hpq_kin, l_kin),
        total: cell(h.total, acc.ideal_total() / n, acc.achieved_total() as f64 / n),
    })
}

/// Entropy, cross-entropy and achieved length on the training split and a
/// held-out split.
pub fn entropy_audit(train: &Dataset, test: &Dataset, m: &ModelBundle) -> Result<EntropyAudit, CodecError> {
    Ok(EntropyAudit {
        mode: m.mode().name().to_string(),
        rows: vec![audit_row("train", train, m)?, audit_row("test", test, m)?],
    })
}

impl EntropyAudit {
    pub const CSV_HEADER: &'static str =
        "split,component,n_events,model_entropy,cross_entropy,achieved,overhead_pct";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            for (name, c) in [("hits", &r.hits), ("kinematics", &r.kinematics), ("total", &r.total)] {
                out.push_str(&format!(
                    "{},{},{},{:.6},{:.6},{:.6},{:.6e}\n",
                    r.split, name, r.n_events, c.model_entropy, c.cross_entropy, c.achieved, c.overhead_pct
                ));
            }
        }
        out
    }
}

impl fmt::Display for EntropyAudit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entropy audit ({} model), bits/event", self.mode)?;
        writeln!(
            f,
            "{:<8} {:<11} {:>12} {:>12} {:>12} {:>13}",
            "split", "component", "H(q)", "H(p,q)", "L", "overhead %"
        )?;
        for r in &self.rows {
            for (name, c) in [("hits", &r.hits), ("kinematics", &r.kinematics), ("total", &r.total)] {
                writeln!(
                    f,
                    "{:<8} {:<11} {:>12.5} {:>12.5} {:>12.5} {:>13.3e}",
                    r.split, name, c.model_entropy, c.cross_entropy, c.achieved, c.overhead_pct
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub layer: LayerView,
    pub occ: f64,
    pub strip: f64,
    pub adc: f64,
    pub sum: f64,
    pub mean_hits: f64,
}

/// Per-layer-view decomposition of the ideal codelength, bits per event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitBudget {
    pub rows: Vec<BudgetRow>,
    pub hits_total: f64,
    pub kinematics: f64,
    pub total: f64,
    /// Achieved bits per event across all four streams.
    pub achieved_total: f64,
}

pub fn bit_budget(acc: &CodelengthAccount) -> BitBudget {
    let n = acc.n_events as f64;
    let rows: Vec<BudgetRow> = LayerView::ALL
        .iter()
        .map(|&lv| {
            let occ = acc.ideal(lv, Tag::Occ) / n;
            let strip = acc.ideal(lv, Tag::Strip) / n;
            let adc = acc.ideal(lv, Tag::Adc) / n;
            BudgetRow {
                layer: lv,
                occ,
                strip,
                adc,
                sum: occ + strip + adc,
                mean_hits: acc.hits[lv.index()] as f64 / n,
            }
        })
        .collect();
    let mut hits = CompensatedSum::default();
    rows.iter().for_each(|r| hits.add(r.sum));
    let kinematics = acc.section_ideal(Tag::Kin) / n;
    BitBudget {
        hits_total: hits.value(),
        kinematics,
        total: hits.value() + kinematics,
        achieved_total: acc.achieved_total() as f64 / n,
        rows,
    }
}

impl BitBudget {
    pub const CSV_HEADER: &'static str = "layer_view,occ,strip,adc,sum,mean_hits";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.4}\n",
                r.layer.name(),
                r.occ,
                r.strip,
                r.adc,
                r.sum,
                r.mean_hits
            ));
        }
        out.push_str(&format!("hits_total,,,,{:.6},\n", self.hits_total));
        out.push_str(&format!("kinematics,,,,{:.6},\n", self.kinematics));
        out.push_str(&format!("total,,,,{:.6},\n", self.total));
        out
    }
}

impl fmt::Display for BitBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<9} {:>8} {:>8} {:>8} {:>9} {:>7}",
            "LV", "Occ.", "Strip", "ADC", "Sum", "<Nhit>"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<9} {:>8.2} {:>8.2} {:>8.2} {:>9.2} {:>7.2}",
                r.layer.name(),
                r.occ,
                r.strip,
                r.adc,
                r.sum,
                r.mean_hits
            )?;
        }
        writeln!(f, "{:<36} {:>9.2}", "Hits total", self.hits_total)?;
        writeln!(f, "{:<36} {:>9.2}", "Particle kinematics", self.kinematics)?;
        writeln!(f, "{:<36} {:>9.2}", "Total", self.total)?;
        write!(f, "{:<36} {:>9.2}", "Achieved (all streams)", self.achieved_total)
    }
}

/// Model entropy convenience re-export for callers that only hold metrics.
pub fn model_entropy_on(ds: &Dataset, m: &ModelBundle) -> Result<crate::model::ModelEntropy, ModelError> {
    model_entropy_weighted(m, &ContextWeights::tally(ds, m))
}
