//! Drives the `acfid` binary end to end in a scratch directory.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

struct Scratch(PathBuf);

impl Scratch {
    fn new(name: &str) -> Scratch {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("cli-{name}"));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        Scratch(dir)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_acfid")).current_dir(&self.0).args(args).output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        out
    }

    fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.0.join(name)).unwrap()
    }

    /// Generated dataset plus a split and both fitted models.
    fn prepared(name: &str, n: &str) -> Scratch {
        let s = Scratch::new(name);
        s.ok(&["generate", "--seed", "4", "-n", n, "-o", "d.evcan"]);
        s.ok(&["split", "--seed", "1", "-i", "d.evcan", "--train", "tr.evcan", "--test", "te.evcan"]);
        s.ok(&["fit", "-i", "tr.evcan", "-o", "u.acm"]);
        s.ok(&["fit", "-i", "tr.evcan", "--mode", "conditional", "--bins", "4", "--p-max", "8", "-o", "c.acm"]);
        s
    }
}

#[test]
fn encode_decode_verify_round_trip() {
    let s = Scratch::prepared("roundtrip", "300");
    s.ok(&["encode", "-i", "te.evcan", "-m", "c.acm", "-o", "te.acz"]);
    s.ok(&["decode", "-i", "te.acz", "-m", "c.acm", "-o", "back.evcan"]);
    assert_eq!(s.read("te.evcan"), s.read("back.evcan"));
    let out = s.run(&["verify", "-i", "te.evcan", "-m", "c.acm", "--container", "te.acz", "-o", "v.json"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&s.read("v.json")).unwrap();
    assert_eq!(report["closure"]["equal"], true);
    assert_eq!(report["container_matches"], true);
}

#[test]
fn decoding_with_the_wrong_model_names_both_hashes() {
    let s = Scratch::prepared("wrongmodel", "200");
    s.ok(&["encode", "-i", "te.evcan", "-m", "u.acm", "-o", "te.acz"]);
    let out = s.run(&["decode", "-i", "te.acz", "-m", "c.acm", "-o", "x.evcan"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    let hash_of = |model: &str| {
        let mode = if model == "u.acm" { "unconditional" } else { "conditional" };
        let fit = s.ok(&["fit", "-i", "tr.evcan", "--mode", mode, "--bins", "4", "--p-max", "8", "-o", "tmp.acm"]);
        let text = String::from_utf8(fit.stderr).unwrap();
        text.rsplit("hash ").next().unwrap().trim().to_string()
    };
    let (hu, hc) = (hash_of("u.acm"), hash_of("c.acm"));
    assert_eq!(hu.len(), 64);
    assert!(err.contains(&hu) && err.contains(&hc), "{err}");
    assert!(!s.0.join("x.evcan").exists());
}

#[test]
fn verify_flags_a_foreign_container() {
    let s = Scratch::prepared("foreign", "200");
    s.ok(&["encode", "-i", "tr.evcan", "-m", "u.acm", "-o", "tr.acz"]);
    let out = s.run(&["verify", "-i", "te.evcan", "-m", "u.acm", "--container", "tr.acz", "-o", "v.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_arguments_are_usage_errors() {
    let s = Scratch::new("usage");
    assert_eq!(s.run(&["scan", "--reference", "d.evcan", "--eps-grid", "log:1:x"]).status.code(), Some(2));
    assert_eq!(s.run(&["fit", "--mode", "sideways", "-i", "a", "-o", "b"]).status.code(), Some(2));
    assert_eq!(s.run(&["decode", "-i", "missing.acz", "-m", "m", "-o", "o"]).status.code(), Some(1));
}

#[test]
fn scan_writes_one_row_per_grid_point() {
    let s = Scratch::new("scan");
    s.ok(&["generate", "--seed", "9", "-n", "1500", "-o", "d.evcan"]);
    s.ok(&[
        "scan", "--seed", "2", "--reference", "d.evcan", "--eps-grid", "log:1e-6:1e-1:23", "--resamples", "99",
        "--mmd-block", "20", "--jobs", "2", "--dump-nulls", "nulls", "-o", "scan.csv",
    ]);
    for tag in ["uncond", "cond", "mmd"] {
        let null = String::from_utf8(s.read(&format!("nulls/null_{tag}.csv"))).unwrap();
        assert_eq!(null.lines().count(), 100, "{tag}: header plus 99 resamples");
    }
    let csv = String::from_utf8(s.read("scan.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("epsilon,delta_l_uncond,p_uncond,delta_l_cond,p_cond,delta_mmd2,p_mmd,changed_adc_fraction")
    );
    let rows: Vec<Vec<f64>> =
        lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 23);
    assert!((rows[0][0] - 1e-6).abs() < 1e-12 && (rows[22][0] - 0.1).abs() < 1e-9);
    for r in &rows {
        assert_eq!(r.len(), 8);
        for p in [r[2], r[4], r[6]] {
            assert!((0.01..=1.0).contains(&p), "p {p} outside [1/(R+1), 1]");
        }
    }
}

#[test]
fn replay_reproduces_outputs_and_detects_changed_inputs() {
    let s = Scratch::prepared("replay", "400");
    s.ok(&["perturb", "-i", "te.evcan", "--eps", "0.02", "-o", "p.evcan"]);
    s.ok(&["gzip-compare", "-i", "te.evcan", "--uncond", "u.acm", "--cond", "c.acm", "--levels", "9,1", "-o", "g.csv"]);
    let before = s.read("p.evcan");
    s.ok(&["replay", "p.evcan.manifest.json"]);
    s.ok(&["replay", "g.csv.manifest.json"]);
    s.ok(&["replay", "tr.evcan.manifest.json"]);
    assert_eq!(before, s.read("p.evcan"));

    std::fs::write(s.0.join("te.evcan"), s.read("tr.evcan")).unwrap();
    let out = s.run(&["replay", "p.evcan.manifest.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn manifest_records_seed_and_hashes() {
    let s = Scratch::new("manifest");
    s.ok(&["generate", "--seed", "17", "-n", "50", "-o", "d.evcan", "--manifest", "m.json"]);
    let m: serde_json::Value = serde_json::from_slice(&s.read("m.json")).unwrap();
    assert_eq!(m["command"], "Generate");
    assert_eq!(m["seed"], 17);
    assert_eq!(m["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["tool_version"], env!("CARGO_PKG_VERSION"));

    // Same seed, same bytes; different seed, different bytes.
    s.ok(&["generate", "--seed", "17", "-n", "50", "-o", "e.evcan"]);
    s.ok(&["generate", "--seed", "18", "-n", "50", "-o", "f.evcan"]);
    assert_eq!(s.read("d.evcan"), s.read("e.evcan"));
    assert_ne!(s.read("d.evcan"), s.read("f.evcan"));
}

#[test]
fn report_fills_a_run_directory() {
    let s = Scratch::new("report");
    s.ok(&["generate", "--seed", "6", "-n", "800", "-o", "d.evcan"]);
    s.ok(&[
        "report", "--reference", "d.evcan", "--eps-grid", "0,0.05", "--resamples", "99", "--mmd-block", "10",
        "--out-dir", "run",
    ]);
    for f in ["audit_uncond.csv", "budget_cond.csv", "compression.csv", "scan.csv", "manifest.json"] {
        assert!(s.0.join("run").join(f).exists(), "{f}");
    }
    let cmp = String::from_utf8(s.read("run/compression.csv")).unwrap();
    assert!(cmp.starts_with("method,bytes,ratio,rel_uncond,rel_cond\n"));
    assert_eq!(cmp.lines().count(), 7);
}
