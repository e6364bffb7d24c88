//! Command-line front end. Exit codes: 0 success, 1 domain or validation
//! failure, 2 usage or I/O failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{calibrate_noise, k_factor_breakdown, link_stats, NoiseModel, K_MAX, K_MIN};
use crate::error::{Error, Result};
use crate::harness::{
    run_ber_sweep, run_positioning_sweep_2d, run_positioning_sweep_3d, write_json_report, write_metrics_csv,
    write_samples_csv, SweepResult, SweepSpec,
};
use crate::positioning::build_reference_grid;
use crate::scene::{load_scenario, validate_scenario, RicianMode, ScenarioConfig, Vec3};

#[derive(Debug, Parser)]
#[command(name = "vlcjcp", version, about = "VLC joint communication and positioning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file; diagnostics go to stderr.
    Validate { scenario: PathBuf },
    /// Write the expected-RSS reference grid as CSV.
    RssTable {
        scenario: PathBuf,
        /// Receiver plane height in cm.
        #[arg(long, default_value_t = 0.0)]
        height: f64,
        /// Include the ambient noise floor for this SNR (dB).
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo sweep.
    Sweep {
        kind: SweepKind,
        scenario: PathBuf,
        /// `a..b:step` (inclusive) or a comma list; defaults to the scenario's.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<String>,
        /// Frames (ber) or fixes (pos2d, pos3d) per point.
        #[arg(long)]
        trials: Option<usize>,
        /// Full-scale trial counts (1e5 positioning trials).
        #[arg(long)]
        full: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        /// Receiver reference points `x,y[,z];...` in cm.
        #[arg(long, allow_hyphen_values = true)]
        positions: Option<String>,
        /// PAM orders for ber, comma separated.
        #[arg(long)]
        orders: Option<String>,
    },
    /// Evaluate the wall-reflection K-factor for one LED and PD position.
    KFactor {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        led: usize,
        /// PD position `x,y,z` in cm.
        #[arg(long, allow_hyphen_values = true)]
        pd: String,
        /// Segment edge in cm; defaults to the scenario's or 10.
        #[arg(long)]
        segment: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Ber,
    Pos2d,
    Pos3d,
}

impl SweepKind {
    fn name(self) -> &'static str {
        match self {
            SweepKind::Ber => "ber",
            SweepKind::Pos2d => "pos2d",
            SweepKind::Pos3d => "pos3d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario_path: String,
    pub seed: u64,
    pub out_dir: String,
    pub artifacts: Vec<Artifact>,
    pub duration_s: f64,
}

/// Bits in a default BER point.
pub const BER_BITS: u64 = 1_000_000;
pub const POS_TRIALS: usize = 1_000;
pub const POS_TRIALS_FULL: usize = 100_000;

/// Failure split by exit code.
#[derive(Debug)]
enum Failure {
    Domain(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::Usage(e.to_string()),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

/// Parse `a..b:step` (inclusive) or `a,b,c`. `inf` is accepted as a value.
pub fn parse_snr_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    let num = |s: &str| -> std::result::Result<f64, String> {
        let s = s.trim();
        if s == "inf" {
            return Ok(f64::INFINITY);
        }
        s.parse::<f64>().map_err(|_| format!("bad SNR value {s:?}"))
    };
    if let Some((range, step)) = text.split_once(':') {
        let (a, b) = range.split_once("..").ok_or_else(|| format!("expected a..b:step, got {text:?}"))?;
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0 && a.is_finite() && b.is_finite() && b >= a) {
            return Err(format!("range {text:?} needs finite a <= b and step > 0"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| a + k as f64 * step).collect());
    }
    let out = text.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>()?;
    if out.is_empty() {
        return Err("empty SNR list".into());
    }
    Ok(out)
}

fn parse_point(text: &str) -> std::result::Result<Vec3, String> {
    let v = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad coordinate in {text:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    match v.as_slice() {
        [x, y] => Ok(Vec3::new(*x, *y, 0.0)),
        [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(format!("expected x,y or x,y,z, got {text:?}")),
    }
}

pub fn parse_positions(text: &str) -> std::result::Result<Vec<Vec3>, String> {
    text.split(';').filter(|s| !s.trim().is_empty()).map(parse_point).collect()
}

pub fn default_positions(kind: SweepKind) -> Vec<Vec3> {
    match kind {
        SweepKind::Ber => vec![Vec3::new(-2.5, 1.5, 0.0)],
        SweepKind::Pos2d => [(0.0, 0.0), (50.0, 50.0), (100.0, 100.0), (149.0, 149.0)]
            .iter()
            .map(|&(x, y)| Vec3::new(x, y, 0.0))
            .collect(),
        SweepKind::Pos3d => [50.0, 150.0, 250.0].iter().map(|&z| Vec3::new(100.0, 100.0, z)).collect(),
    }
}

fn load(path: &Path) -> std::result::Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    load_scenario(&text).map_err(Failure::from)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Files written so far; removed again unless the run completes.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new(dir: PathBuf) -> Self {
        Outputs { dir, written: Vec::new(), committed: false }
    }

    /// Write through a temporary file and rename into place.
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        self.written.push(path.clone());
        Ok(path)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    kind: SweepKind,
    scenario_path: &Path,
    snr: Option<String>,
    trials: Option<usize>,
    full: bool,
    seed: Option<u64>,
    out_dir: PathBuf,
    positions: Option<String>,
    orders: Option<String>,
    command_line: String,
) -> std::result::Result<(), Failure> {
    let start = Instant::now();
    let mut cfg = load(scenario_path)?;
    cfg.seed = seed.unwrap_or(0);
    let snr_db = match snr {
        Some(s) => parse_snr_list(&s).map_err(Failure::Usage)?,
        None => cfg.snr_db.sweep.clone(),
    };
    let positions = match positions {
        Some(p) => parse_positions(&p).map_err(Failure::Usage)?,
        None => default_positions(kind),
    };
    let orders = match orders {
        Some(o) => o
            .split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| Failure::Usage(format!("bad order {s:?}"))))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        None => vec![cfg.modulation.order],
    };
    let mut spec = SweepSpec::new(cfg.clone(), snr_db, 1);
    spec.trials_per_point = match (kind, trials) {
        (_, Some(n)) => n,
        (SweepKind::Ber, None) => spec.clone().with_min_bits(BER_BITS).trials_per_point,
        (_, None) if full => POS_TRIALS_FULL,
        (_, None) => POS_TRIALS,
    };
    let result: SweepResult = match kind {
        SweepKind::Ber => run_ber_sweep(&spec, &positions, &orders)?,
        SweepKind::Pos2d => run_positioning_sweep_2d(&spec, &positions)?,
        SweepKind::Pos3d => run_positioning_sweep_3d(&spec, &positions)?,
    };

    let name = kind.name();
    let mut out = Outputs::new(out_dir.clone());
    let mut artifacts = Vec::new();
    let mut emit = |out: &mut Outputs, file: String, bytes: Vec<u8>| -> Result<()> {
        out.write(&file, &bytes)?;
        artifacts.push(Artifact { path: file, sha256: sha256_hex(&bytes) });
        Ok(())
    };
    emit(&mut out, format!("{name}_metrics.csv"), to_bytes(|b| write_metrics_csv(&result.records, b))?)?;
    if !result.samples.is_empty() {
        emit(&mut out, format!("{name}_samples.csv"), to_bytes(|b| write_samples_csv(&result.samples, b))?)?;
    }
    emit(&mut out, format!("{name}_report.json"), to_bytes(|b| write_json_report(&result, b))?)?;
    let manifest = RunManifest {
        command: command_line,
        scenario_path: scenario_path.display().to_string(),
        seed: cfg.seed,
        out_dir: out_dir.display().to_string(),
        artifacts,
        duration_s: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    out.write("manifest.json", &json)?;
    out.committed = true;
    for r in &result.records {
        println!("{:>8} {:<40} {:.4e} ± {:.1e} ({} trials, {} failed)", r.value, r.label(), r.mean, r.ci_half_width, r.trials, r.failures);
    }
    Ok(())
}

fn dispatch(cli: Cli, command_line: String) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Validate { scenario } => {
            let text = fs::read_to_string(&scenario)
                .map_err(|e| Failure::Usage(format!("{}: {e}", scenario.display())))?;
            let cfg: ScenarioConfig = serde_json::from_str(&text).map_err(|e| Failure::Domain(format!("schema error: {e}")))?;
            let diags = validate_scenario(&cfg);
            for d in &diags {
                eprintln!("{d}");
            }
            if diags.is_empty() {
                println!("{}: ok", scenario.display());
                Ok(())
            } else {
                Err(Failure::Domain(format!("{} problem(s)", diags.len())))
            }
        }
        Command::RssTable { scenario, height, snr, out } => {
            let cfg = load(&scenario)?;
            let noise = match snr {
                Some(s) => {
                    let stats = link_stats(&cfg, &cfg.pd_positions(Vec3::default()))?;
                    calibrate_noise(&cfg, &stats, s)?
                }
                None => NoiseModel::noiseless(),
            };
            let table = build_reference_grid(&cfg, height, &noise)?;
            let bytes = to_bytes(|b| table.write_csv(b))?;
            let mut o = Outputs::new(out.parent().map(Path::to_path_buf).unwrap_or_default());
            let name = out.file_name().ok_or_else(|| Failure::Usage("--out needs a file name".into()))?;
            o.write(&name.to_string_lossy(), &bytes)?;
            o.committed = true;
            Ok(())
        }
        Command::Sweep { kind, scenario, snr, trials, full, seed, out_dir, threads, positions, orders } => {
            let job = move || cmd_sweep(kind, &scenario, snr, trials, full, seed, out_dir, positions, orders, command_line);
            match threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Failure::Usage(e.to_string()))?
                    .install(job),
                None => job(),
            }
        }
        Command::KFactor { scenario, led, pd, segment } => {
            let cfg = load(&scenario)?;
            let pd = parse_point(&pd).map_err(Failure::Usage)?;
            let led = cfg
                .leds
                .get(led)
                .ok_or_else(|| Failure::Domain(format!("no LED {led}")))?;
            let segment = segment.unwrap_or(match cfg.rician {
                RicianMode::Geometric { segment_size_cm } => segment_size_cm,
                RicianMode::Fixed { .. } => 10.0,
            });
            let b = k_factor_breakdown(&cfg.room, led.position, pd, segment)?;
            let raw = b.raw();
            let report = serde_json::json!({
                "segment_size_cm": segment,
                "segments": b.segments,
                "prefactor": b.prefactor,
                "diffuse_sum": b.diffuse_sum,
                "k_raw": if raw.is_finite() { serde_json::json!(raw) } else { serde_json::json!("inf") },
                "k_clamped": raw.clamp(K_MIN, K_MAX),
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("json"));
            Ok(())
        }
    }
}

/// Run the CLI on `args` (program name first) and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let command_line = args.iter().map(|a| a.to_string_lossy()).collect::<Vec<_>>().join(" ");
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli, command_line) {
        Ok(()) => 0,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_syntax() {
        assert_eq!(parse_snr_list("60..80:5").unwrap(), vec![60.0, 65.0, 70.0, 75.0, 80.0]);
        assert_eq!(parse_snr_list("20,40,inf").unwrap(), vec![20.0, 40.0, f64::INFINITY]);
        assert!(parse_snr_list("80..60:5").is_err());
        assert!(parse_snr_list("a,b").is_err());
    }

    #[test]
    fn position_syntax() {
        let p = parse_positions("0,0;100,100,150").unwrap();
        assert_eq!(p, vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(100.0, 100.0, 150.0)]);
        assert!(parse_positions("1").is_err());
    }

    #[test]
    fn digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
