mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use acfid::codec::{closure_check, decode_dataset, encode_dataset, CompressedDataset};
use acfid::compare::{gzip_compare, CompressionTable};
use acfid::event::{canonical_deserialize, canonical_serialize, split_dataset, Dataset};
use acfid::fidelity::{
    apply_adc_scale, changed_fraction, parse_eps_grid, run_scan, three_split, ScanConfig, DEFAULT_BLOCKS,
    DEFAULT_MMD_BLOCK, DEFAULT_RESAMPLES,
};
use acfid::generator::{generate_synthetic, HitLaw, MomentumLaw, SyntheticConfig};
use acfid::metrics::{bit_budget, entropy_audit};
use acfid::model::{fit, load_model, save_model, Mode, ModelBundle, MomentumBinning};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use manifest::{manifest_path_for, FileDigest, RunManifest};

/// Arithmetic-coded calorimeter events and codelength-based fidelity tests.
#[derive(Debug, Parser, Serialize)]
#[command(name = "acfid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Serialize, Clone)]
struct Common {
    /// Master seed for every random choice the command makes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum LawArg {
    Shower,
    Independent,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum ModeArg {
    Unconditional,
    Conditional,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Unconditional => Mode::Unconditional,
            ModeArg::Conditional => Mode::Conditional,
        }
    }
}

#[derive(Debug, Args, Serialize, Clone)]
struct BinningArgs {
    /// Number of equal-width momentum bins below --p-max (plus one overflow bin).
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Upper edge of the last regular momentum bin, GeV.
    #[arg(long, default_value_t = 10.0)]
    p_max: f64,
}

impl BinningArgs {
    fn binning(&self) -> Result<MomentumBinning> {
        Ok(MomentumBinning::uniform(self.bins, self.p_max)?)
    }
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Sample a synthetic dataset with known generating law.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Generator parameters as `key = value` lines; flags below override.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, short = 'n')]
        n_events: Option<usize>,
        #[arg(long, value_enum)]
        law: Option<LawArg>,
        /// Momentum law, e.g. `uniform:0.2:10` or `loguniform:0.2:10`.
        #[arg(long)]
        momentum: Option<String>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Seeded train/test split.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        train_fraction: f64,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Fit a frequency-table model.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "unconditional")]
        mode: ModeArg,
        #[command(flatten)]
        binning: BinningArgs,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Compress a dataset under a model.
    Encode {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        model: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Restore a dataset from a container.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        model: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Round-trip check: encode, decode, compare bit for bit.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        model: PathBuf,
        /// Also decode this existing container and compare it with the input.
        #[arg(long)]
        container: Option<PathBuf>,
        /// Where to write the JSON report.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Entropy, cross-entropy and achieved length on train and test splits.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, short)]
        model: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Per-layer-view bit budget.
    Budget {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        model: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Scale every ADC by 1 + eps.
    Perturb {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Perturbation scan against a reference dataset.
    Scan(ScanArgs),
    /// Size comparison of the coded containers with gzip.
    GzipCompare {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        uncond: PathBuf,
        #[arg(long)]
        cond: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "9,6,1")]
        levels: Vec<u32>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Full pipeline on one reference dataset into a run directory.
    Report {
        #[command(flatten)]
        scan: ScanArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Re-run a manifest and check that every output hash matches.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Debug, Args, Serialize, Clone)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    /// Reference dataset; split three ways into B1, B2 and the training split.
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    #[command(flatten)]
    binning: BinningArgs,
    /// `log:lo:hi:n` or a comma list.
    #[arg(long, default_value = "log:1e-6:1e-1:23", value_parser = parse_grid)]
    eps_grid: EpsGrid,
    /// Prepend an eps = 0 row.
    #[arg(long)]
    include_zero: bool,
    #[arg(long, default_value_t = DEFAULT_BLOCKS)]
    blocks: usize,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
    #[arg(long, default_value_t = DEFAULT_MMD_BLOCK)]
    mmd_block: usize,
    /// Fixed kernel bandwidth instead of the median heuristic.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    no_mmd: bool,
    /// Also write the null t-statistics (one file per test) into this directory.
    #[arg(long)]
    dump_nulls: Option<PathBuf>,
    /// Worker threads for null resampling.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output CSV (for `report`, the file name inside the run directory).
    #[arg(long, short, default_value = "scan.csv")]
    output: PathBuf,
}

/// Wrapper so clap treats the grid as one value rather than a repeated flag.
#[derive(Debug, Clone, Serialize)]
struct EpsGrid(Vec<f64>);

fn parse_grid(s: &str) -> std::result::Result<EpsGrid, String> {
    parse_eps_grid(s).map(EpsGrid).map_err(|e| e.to_string())
}

/// Failed invariant, distinct from I/O or usage problems only in message.
#[derive(Debug)]
struct Violation(String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Violation {}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    canonical_deserialize(&bytes).with_context(|| format!("parsing dataset {}", path.display()))
}

fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write(path, &canonical_serialize(ds))
}

fn read_model(path: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_model(&bytes).with_context(|| format!("loading model {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// What a command read and wrote, for the manifest.
#[derive(Default)]
struct Io {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn generate(common: &Common, config: &Option<PathBuf>, n: Option<usize>, law: Option<LawArg>, momentum: &Option<String>, out: &Path) -> Result<Io> {
    let mut io = Io::default();
    let mut cfg = match config {
        Some(p) => {
            io.inputs.push(p.clone());
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SyntheticConfig::parse(&text)?
        }
        None => SyntheticConfig::default(),
    };
    cfg.seed = common.seed;
    if let Some(n) = n {
        cfg.n_events = n;
    }
    if let Some(l) = law {
        cfg.hit_law = match l {
            LawArg::Shower => HitLaw::Shower,
            LawArg::Independent => HitLaw::Independent,
        };
    }
    if let Some(m) = momentum {
        cfg.momentum_law = m.parse::<MomentumLaw>().map_err(anyhow::Error::msg)?;
    }
    let ds = generate_synthetic(&cfg)?;
    write_dataset(out, &ds)?;
    eprintln!("generated {} events ({})", ds.len(), ds.provenance);
    io.outputs.push(out.to_path_buf());
    Ok(io)
}

fn run_scan_cmd(a: &ScanArgs, out: &Path) -> Result<Io> {
    let d = read_dataset(&a.reference)?;
    let s = three_split(&d, a.common.seed, a.train_fraction)?;
    let binning = a.binning.binning()?;
    let mu = fit(&s.a3, Mode::Unconditional, &binning)?;
    let mc = fit(&s.a3, Mode::Conditional, &binning)?;
    let mut grid = a.eps_grid.0.clone();
    if a.include_zero && !grid.contains(&0.0) {
        grid.insert(0, 0.0);
    }
    let cfg = ScanConfig {
        eps_grid: grid,
        k: a.blocks,
        resamples: a.resamples,
        seed: a.common.seed,
        mmd_block_size: a.mmd_block,
        bandwidth: a.bandwidth,
        with_mmd: !a.no_mmd,
        jobs: a.jobs,
    };
    let r = run_scan(&s.b1, &s.b2, &mu, &mc, &cfg)?;
    write(out, r.to_csv().as_bytes())?;
    let mut outputs = vec![out.to_path_buf()];
    if let Some(dir) = &a.dump_nulls {
        let nulls = [("uncond", Some(&r.null_uncond)), ("cond", Some(&r.null_cond)), ("mmd", r.null_mmd.as_ref())];
        for (tag, null) in nulls {
            let Some(null) = null else { continue };
            let mut text = String::from("t\n");
            for t in &null.t {
                text.push_str(&format!("{t}\n"));
            }
            let path = dir.join(format!("null_{tag}.csv"));
            write(&path, text.as_bytes())?;
            outputs.push(path);
        }
    }
    eprintln!(
        "scan: {} rows, |B1| = {}, |B2| = {}, |A3| = {}, bandwidth {:?}, p floor {:.4e}",
        r.rows.len(),
        s.b1.len(),
        s.b2.len(),
        s.a3.len(),
        r.bandwidth,
        r.null_uncond.floor()
    );
    Ok(Io {
        inputs: vec![a.reference.clone()],
        outputs,
    })
}

fn report(a: &ScanArgs, dir: &Path) -> Result<Io> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let d = read_dataset(&a.reference)?;
    let (train, test) = split_dataset(&d, a.common.seed, a.train_fraction)?;
    let binning = a.binning.binning()?;
    let mut outputs = Vec::new();
    let mut sizes = Vec::new();
    for (mode, tag) in [(Mode::Unconditional, "uncond"), (Mode::Conditional, "cond")] {
        let m = fit(&train, mode, &binning)?;
        let model_path = dir.join(format!("model_{tag}.acm"));
        write(&model_path, &save_model(&m))?;
        let (cd, acc) = encode_dataset(&test, &m)?;
        let bytes = cd.to_bytes();
        sizes.push(bytes.len() as u64);
        let acz = dir.join(format!("test_{tag}.acz"));
        write(&acz, &bytes)?;
        if decode_dataset(&cd, &m)?.events() != test.events() {
            return Err(Violation(format!("{tag} round trip differs")).into());
        }
        let audit = entropy_audit(&train, &test, &m)?;
        let audit_path = dir.join(format!("audit_{tag}.csv"));
        write(&audit_path, audit.to_csv().as_bytes())?;
        let budget_path = dir.join(format!("budget_{tag}.csv"));
        write(&budget_path, bit_budget(&acc).to_csv().as_bytes())?;
        println!("{tag}:\n{audit}");
        outputs.extend([model_path, acz, audit_path, budget_path]);
    }
    let table = gzip_compare(&canonical_serialize(&test), sizes[0], sizes[1], &acfid::compare::GZIP_LEVELS);
    let cmp = dir.join("compression.csv");
    write(&cmp, table.to_csv().as_bytes())?;
    println!("{table}");
    outputs.push(cmp);
    let scan = dir.join(&a.output);
    outputs.extend(run_scan_cmd(a, &scan)?.outputs);
    Ok(Io {
        inputs: vec![a.reference.clone()],
        outputs,
    })
}

/// Runs one command; returns its inputs and outputs.
fn execute(cmd: &Command) -> Result<Io> {
    let one = |i: &Path, o: &Path| Io {
        inputs: vec![i.to_path_buf()],
        outputs: vec![o.to_path_buf()],
    };
    match cmd {
        Command::Generate {
            common,
            config,
            n_events,
            law,
            momentum,
            output,
        } => generate(common, config, *n_events, *law, momentum, output),
        Command::Split {
            common,
            input,
            train_fraction,
            train,
            test,
        } => {
            let ds = read_dataset(input)?;
            let (a, b) = split_dataset(&ds, common.seed, *train_fraction)?;
            write_dataset(train, &a)?;
            write_dataset(test, &b)?;
            eprintln!("split {} events into {} / {}", ds.len(), a.len(), b.len());
            Ok(Io {
                inputs: vec![input.clone()],
                outputs: vec![train.clone(), test.clone()],
            })
        }
        Command::Fit {
            input,
            mode,
            binning,
            output,
            ..
        } => {
            let ds = read_dataset(input)?;
            let m = fit(&ds, (*mode).into(), &binning.binning()?)?;
            write(output, &save_model(&m))?;
            eprintln!("{} model, {} contexts, hash {}", m.mode().name(), m.n_contexts(), m.hash_hex());
            Ok(one(input, output))
        }
        Command::Encode {
            input,
            model,
            output,
            ..
        } => {
            let ds = read_dataset(input)?;
            let m = read_model(model)?;
            let (cd, acc) = encode_dataset(&ds, &m)?;
            write(output, &cd.to_bytes())?;
            eprintln!(
                "{} events: {:.4} bits/event achieved, {:.4} ideal",
                ds.len(),
                acc.mean_achieved(),
                acc.mean_ideal()
            );
            Ok(Io {
                inputs: vec![input.clone(), model.clone()],
                outputs: vec![output.clone()],
            })
        }
        Command::Decode {
            input,
            model,
            output,
            ..
        } => {
            let bytes = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            let cd = CompressedDataset::from_bytes(&bytes)?;
            let m = read_model(model)?;
            let ds = decode_dataset(&cd, &m)?;
            write_dataset(output, &ds)?;
            Ok(Io {
                inputs: vec![input.clone(), model.clone()],
                outputs: vec![output.clone()],
            })
        }
        Command::Verify {
            input,
            model,
            container,
            output,
            ..
        } => {
            let ds = read_dataset(input)?;
            let m = read_model(model)?;
            let report = closure_check(&ds, &m);
            let mut inputs = vec![input.clone(), model.clone()];
            let mut container_ok = None;
            if let Some(c) = container {
                let bytes = std::fs::read(c).with_context(|| format!("reading {}", c.display()))?;
                let decoded = decode_dataset(&CompressedDataset::from_bytes(&bytes)?, &m)?;
                container_ok = Some(decoded.events() == ds.events());
                inputs.push(c.clone());
            }
            let json = serde_json::json!({ "closure": report, "container_matches": container_ok });
            write(output, (serde_json::to_string_pretty(&json)? + "\n").as_bytes())?;
            if !report.equal || container_ok == Some(false) {
                return Err(Violation(format!(
                    "round trip failed: {}",
                    report.diagnostic.unwrap_or_else(|| "container differs from input".into())
                ))
                .into());
            }
            eprintln!("ok: {} bits achieved, overhead {:.3e} %", report.achieved_bits, report.overhead_pct);
            Ok(Io {
                inputs,
                outputs: vec![output.clone()],
            })
        }
        Command::Audit {
            train,
            test,
            model,
            output,
            ..
        } => {
            let (a, b, m) = (read_dataset(train)?, read_dataset(test)?, read_model(model)?);
            let audit = entropy_audit(&a, &b, &m)?;
            write(output, audit.to_csv().as_bytes())?;
            println!("{audit}");
            Ok(Io {
                inputs: vec![train.clone(), test.clone(), model.clone()],
                outputs: vec![output.clone()],
            })
        }
        Command::Budget {
            input,
            model,
            output,
            ..
        } => {
            let (ds, m) = (read_dataset(input)?, read_model(model)?);
            let (_, acc) = encode_dataset(&ds, &m)?;
            let b = bit_budget(&acc);
            write(output, b.to_csv().as_bytes())?;
            println!("{b}");
            Ok(Io {
                inputs: vec![input.clone(), model.clone()],
                outputs: vec![output.clone()],
            })
        }
        Command::Perturb { input, eps, output, .. } => {
            let ds = read_dataset(input)?;
            let p = apply_adc_scale(&ds, *eps)?;
            write_dataset(output, &p)?;
            eprintln!("changed ADC fraction {:.6}", changed_fraction(&ds, &p)?);
            Ok(one(input, output))
        }
        Command::Scan(a) => run_scan_cmd(a, &a.output),
        Command::GzipCompare {
            input,
            uncond,
            cond,
            levels,
            output,
            ..
        } => {
            let raw = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            canonical_deserialize(&raw).with_context(|| format!("parsing dataset {}", input.display()))?;
            let size = |p: &Path| -> Result<u64> {
                Ok(std::fs::metadata(p).with_context(|| format!("reading {}", p.display()))?.len())
            };
            let table: CompressionTable = gzip_compare(&raw, size(uncond)?, size(cond)?, levels);
            write(output, table.to_csv().as_bytes())?;
            println!("{table}");
            Ok(Io {
                inputs: vec![input.clone(), uncond.clone(), cond.clone()],
                outputs: vec![output.clone()],
            })
        }
        Command::Report { scan, out_dir } => report(scan, out_dir),
        Command::Replay { .. } => unreachable!("handled in main"),
    }
}

fn common(cmd: &Command) -> Option<&Common> {
    Some(match cmd {
        Command::Generate { common, .. }
        | Command::Split { common, .. }
        | Command::Fit { common, .. }
        | Command::Encode { common, .. }
        | Command::Decode { common, .. }
        | Command::Verify { common, .. }
        | Command::Audit { common, .. }
        | Command::Budget { common, .. }
        | Command::Perturb { common, .. }
        | Command::GzipCompare { common, .. } => common,
        Command::Scan(a) | Command::Report { scan: a, .. } => &a.common,
        Command::Replay { .. } => return None,
    })
}

fn command_name(cmd: &Command) -> String {
    let v = serde_json::to_value(cmd).unwrap_or_default();
    match v {
        serde_json::Value::Object(m) => m.keys().next().cloned().unwrap_or_default(),
        serde_json::Value::String(s) => s,
        _ => String::new(),
    }
}

/// Executes a parsed command and writes its manifest.
fn run(cli: &Cli, argv: Vec<String>) -> Result<RunManifest> {
    let start = Instant::now();
    let io = execute(&cli.command)?;
    let c = common(&cli.command).expect("replay is dispatched separately");
    let manifest = RunManifest {
        command: command_name(&cli.command),
        argv,
        parameters: serde_json::to_value(&cli.command)?,
        seed: c.seed,
        inputs: io.inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
        outputs: io.outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let path = match (&c.manifest, &cli.command) {
        (Some(p), _) => p.clone(),
        (None, Command::Report { out_dir, .. }) => out_dir.join("manifest.json"),
        (None, _) => manifest_path_for(&io.outputs[0]),
    };
    manifest.write(&path)?;
    Ok(manifest)
}

fn replay(path: &Path) -> Result<()> {
    let old = RunManifest::read(path)?;
    let cli = Cli::try_parse_from(&old.argv).context("manifest argv no longer parses")?;
    if matches!(cli.command, Command::Replay { .. }) {
        bail!("a replay manifest cannot itself be replayed");
    }
    for input in &old.inputs {
        let now = FileDigest::of(&input.path)?;
        if now.sha256 != input.sha256 {
            return Err(Violation(format!("input {} changed since the recorded run", input.path.display())).into());
        }
    }
    let new = run(&cli, old.argv.clone())?;
    let mut mismatches = Vec::new();
    for (a, b) in old.outputs.iter().zip(&new.outputs) {
        if a.sha256 != b.sha256 || a.path != b.path {
            mismatches.push(a.path.display().to_string());
        }
    }
    if !mismatches.is_empty() || old.outputs.len() != new.outputs.len() {
        return Err(Violation(format!("outputs differ from the manifest: {}", mismatches.join(", "))).into());
    }
    eprintln!("replay reproduced {} outputs byte for byte", new.outputs.len());
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Replay { manifest } => replay(manifest),
        _ => run(&cli, argv).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
