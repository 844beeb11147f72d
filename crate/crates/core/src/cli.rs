//! The `uiseq` command-line front end.
//!
//! Every command builds its artifacts in memory first. They are then written
//! to `--out-dir` (one file each, plus `manifest.json`) or, without it, the
//! primary artifact goes to stdout and the manifest to stderr. `replay`
//! re-executes a manifest and compares output digests.
//!
//! Exit codes: 0 success or UI, 1 not UI (or replay mismatch), 2 usage
//! error, 3 search budget or simulation horizon exhausted.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bounds::{prime_minus_one_users, BoundReport, PiMode};
use crate::construct::{Construction, CrtmFamily};
use crate::correlate::{arithmetic_progression, diff_set, is_exceptional, CorrelationProfile};
use crate::error::Error;
use crate::seqcore::SequenceSet;
use crate::simulate::{optimal_ps, run_sim, Averaging, DelayConvention, DelayStats, Scheme, SimConfig};
use crate::verify::{is_ui_exhaustive_with, is_ui_lemma2, SearchStrategy, UiVerdict, DEFAULT_BUDGET};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_UI: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_EXHAUSTED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "uiseq", version, about = "User-irrepressible protocol sequences")]
pub struct Cli {
    /// Write every artifact and manifest.json into this directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Do not print the manifest to stderr when no --out-dir is given.
    #[arg(long, global = true)]
    pub no_manifest: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Build a CRTm or CRT family.
    Generate(GenerateArgs),
    /// Correlation and difference-set profile of a sequence file.
    Analyze(AnalyzeArgs),
    /// Decide whether a sequence file is UI.
    Verify(VerifyArgs),
    /// Period lower bounds against the CRTm period.
    Bounds(BoundsArgs),
    /// Monte-Carlo delay statistics for one scheme.
    Simulate(SimulateArgs),
    /// Delay table over several schemes and columns.
    Table(TableArgs),
    /// Re-run a manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstructionArg {
    Crtm,
    Crt,
}

impl From<ConstructionArg> for Construction {
    fn from(c: ConstructionArg) -> Self {
        match c {
            ConstructionArg::Crtm => Construction::Crtm,
            ConstructionArg::Crt => Construction::Crt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TextOrJson {
    Text,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub construction: ConstructionArg,
    #[arg(long)]
    pub m: u64,
    /// Row indices to keep, e.g. 0,2,5. Default: every row.
    #[arg(long, value_delimiter = ',')]
    pub users: Option<Vec<usize>>,
    /// Format of the artifact printed to stdout.
    #[arg(long, value_enum, default_value = "text")]
    pub format: TextOrJson,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Canonical text (one `L:{...}` per line) or a generate JSON document.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    /// Pairwise characterization when every weight is M + 1, exhaustive search otherwise.
    Auto,
    Exhaustive,
    Lemma2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Enumerate,
    Cover,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub method: MethodArg,
    /// Ceiling on shift patterns (enumerate) or search nodes (cover).
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u128,
    #[arg(long, value_enum, default_value = "enumerate")]
    pub strategy: StrategyArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundsArgs {
    /// Inclusive range `a..b`, or a single value.
    #[arg(long, value_parser = parse_range, conflicts_with = "prime_minus_one")]
    pub m_range: Option<(u64, u64)>,
    /// Use M = p - 1 for every prime 5 <= p <= this value.
    #[arg(long)]
    pub prime_minus_one: Option<u64>,
    #[arg(long, value_enum, default_value = "prime")]
    pub pi_mode: PiModeArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PiModeArg {
    Prime,
    Packing,
}

impl From<PiModeArg> for PiMode {
    fn from(p: PiModeArg) -> Self {
        match p {
            PiModeArg::Prime => PiMode::Prime,
            PiModeArg::Packing => PiMode::Packing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Crtm,
    Crt,
    Random,
}

/// `--ps` value: a probability, `optimal` (1 / (M p_a)) or `matched`
/// ((M + 1) / L_crtm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PsArg {
    Value(f64),
    Optimal,
    Matched,
}

fn parse_ps(s: &str) -> Result<PsArg, String> {
    match s {
        "optimal" => Ok(PsArg::Optimal),
        "matched" => Ok(PsArg::Matched),
        v => v.parse::<f64>().map(PsArg::Value).map_err(|_| format!("expected a probability, optimal or matched, got {v:?}")),
    }
}

impl PsArg {
    pub fn resolve(self, m: u64, p_a: f64) -> crate::Result<f64> {
        match self {
            PsArg::Value(v) => Ok(v),
            PsArg::Optimal => optimal_ps(m, p_a),
            PsArg::Matched => matched_ps(m),
        }
    }
}

/// `(M + 1) / L_crtm`, the random-access rate spending as many transmissions
/// per period as a CRTm sequence.
pub fn matched_ps(m: u64) -> crate::Result<f64> {
    let fam = CrtmFamily::build(Construction::Crtm, m)?;
    Ok((m + 1) as f64 / fam.period() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AveragingArg {
    Population,
    PerSample,
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::Population => Averaging::Population,
            AveragingArg::PerSample => Averaging::PerSample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConventionArg {
    Inclusive,
    Exclusive,
}

impl From<ConventionArg> for DelayConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Inclusive => DelayConvention::Inclusive,
            ConventionArg::Exclusive => DelayConvention::Exclusive,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    #[arg(long)]
    pub m: u64,
    #[arg(long, default_value_t = 1.0)]
    pub pa: f64,
    /// Random access only.
    #[arg(long, value_parser = parse_ps, default_value = "optimal")]
    pub ps: PsArg,
    /// Family rows for the protocol schemes. Default: rows p_M+1-M ..= p_M.
    #[arg(long, value_delimiter = ',')]
    pub users: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, value_enum, default_value = "population")]
    pub averaging: AveragingArg,
    #[arg(long, value_enum, default_value = "inclusive")]
    pub delay_convention: ConventionArg,
    /// Format of the artifact printed to stdout.
    #[arg(long, value_enum, default_value = "json")]
    pub format: JsonOrCsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JsonOrCsv {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableConventionArg {
    Inclusive,
    Exclusive,
    /// Exclusive for the protocol rows of layout 2, inclusive elsewhere; the
    /// convention the published reference values use.
    AsPublished,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TableArgs {
    /// 2: columns are M at p_a = 1. 3 and 4: columns are p_a at M = 10 and
    /// M = 30.
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=4))]
    pub paper_table: u8,
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub pa: Option<Vec<f64>>,
    #[arg(long, default_value_t = 500_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, value_enum, default_value = "as-published")]
    pub delay_convention: TableConventionArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

fn parse_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
        None => (s, s),
    };
    let a: u64 = a.trim().parse().map_err(|_| format!("bad range start in {s:?}"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad range end in {s:?}"))?;
    if a > b {
        return Err(format!("empty range {s:?}"));
    }
    Ok((a, b))
}

/// One output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub content: String,
}

impl Artifact {
    fn new(name: &str, content: String) -> Self {
        Artifact { name: name.to_string(), content }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotUi,
    Exhausted,
    Mismatch,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => EXIT_OK,
            Status::NotUi | Status::Mismatch => EXIT_NOT_UI,
            Status::Exhausted => EXIT_EXHAUSTED,
        }
    }
}

/// In-memory result of one command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Index of the artifact printed to stdout.
    pub primary: usize,
    pub status: Status,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command_line: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub rng: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub exit_code: i32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Reads canonical text or a JSON document with a `sequences` array of
/// canonical strings.
pub fn read_sequence_file(path: &Path) -> anyhow::Result<SequenceSet> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_sequence_text(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_sequence_text(text: &str) -> anyhow::Result<SequenceSet> {
    if text.trim_start().starts_with('{') {
        let doc: Value = serde_json::from_str(text)?;
        let seqs = doc
            .get("sequences")
            .and_then(Value::as_array)
            .context("JSON input needs a \"sequences\" array")?;
        let members = seqs
            .iter()
            .map(|v| {
                let s = v.as_str().context("sequences must be canonical strings")?;
                Ok(s.parse()?)
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(SequenceSet::new(members)?)
    } else {
        Ok(SequenceSet::parse_lines(text)?)
    }
}

fn cmd_generate(a: &GenerateArgs) -> anyhow::Result<Outcome> {
    let fam = CrtmFamily::build(a.construction.into(), a.m)?;
    let indices: Vec<usize> = match &a.users {
        Some(u) => u.clone(),
        None => (0..fam.len()).collect(),
    };
    let set = fam.select_users(&indices)?;
    let text = set.to_lines();
    let doc = json!({
        "construction": fam.construction().to_string(),
        "M": fam.m(),
        "p": fam.p(),
        "q": fam.q(),
        "L": fam.period(),
        "weight": fam.weight(),
        "users": indices,
        "generators": indices.iter().map(|&j| fam.generators()[j]).collect::<Vec<_>>(),
        "sequences": set.members().iter().map(ToString::to_string).collect::<Vec<_>>(),
    });
    let artifacts = vec![Artifact::new("sequences.txt", text), Artifact::new("sequences.json", to_json(&doc)?)];
    let primary = match a.format {
        TextOrJson::Text => 0,
        TextOrJson::Json => 1,
    };
    Ok(Outcome { artifacts, primary, status: Status::Ok, seed: None, inputs: vec![] })
}

/// JSON profile of a sequence set: correlation matrix, `λ_c`, per-sequence
/// progression data, `B_i`, `T_{i,k}` and the residuals over them.
pub fn analysis_json(set: &SequenceSet) -> crate::Result<Value> {
    let prof = CorrelationProfile::new(set)?;
    let m = set.len();
    let mut sequences = Vec::with_capacity(m);
    for (i, s) in set.members().iter().enumerate() {
        let prog = arithmetic_progression(s);
        let (diffs, exceptional) = if s.weight() >= 2 {
            (Some(diff_set(s)?), Some(is_exceptional(s)?))
        } else {
            (None, None)
        };
        sequences.push(json!({
            "index": i,
            "set": s.to_string(),
            "weight": s.weight(),
            "progression": prog,
            "equi_difference_generator": prog.filter(|p| p.is_anchored()).map(|p| p.generator),
            "difference_set": diffs,
            "exceptional": exceptional,
            "max_interference": prof.max_interference(i)?,
            "best_interferers": prof.best_interferers(i)?,
        }));
    }
    let mut shifts = Vec::new();
    let mut residuals = Vec::new();
    for i in 0..m {
        for k in (0..m).filter(|&k| k != i) {
            let pair = prof.pair(i, k)?;
            shifts.push(json!({ "i": i, "k": k, "value": pair.value, "shifts": pair.shifts }));
        }
        for k in prof.best_interferers(i)? {
            for &tau in prof.maximizing_shifts(i, k)? {
                let r = prof.residual(i, k, tau);
                residuals.push(json!({
                    "i": i,
                    "k": k,
                    "tau": tau,
                    "residual": r.ok().map(|r| r.to_string()),
                }));
            }
        }
    }
    Ok(json!({
        "L": set.period(),
        "users": m,
        "lambda_c": prof.lambda_c()?,
        "h_matrix": prof.matrix(),
        "sequences": sequences,
        "maximizing_shifts": shifts,
        "residuals": residuals,
    }))
}

fn cmd_analyze(a: &AnalyzeArgs) -> anyhow::Result<Outcome> {
    let set = read_sequence_file(&a.input)?;
    let doc = analysis_json(&set)?;
    Ok(Outcome {
        artifacts: vec![Artifact::new("analysis.json", to_json(&doc)?)],
        primary: 0,
        status: Status::Ok,
        seed: None,
        inputs: vec![a.input.clone()],
    })
}

/// Runs the requested verification route.
pub fn verify_set(set: &SequenceSet, method: MethodArg, budget: u128, strategy: StrategyArg) -> crate::Result<UiVerdict> {
    let strategy = match strategy {
        StrategyArg::Enumerate => SearchStrategy::Enumerate,
        StrategyArg::Cover => SearchStrategy::CoverSearch,
    };
    let lemma2_applies =
        set.len() >= 2 && set.members().iter().all(|s| s.weight() == set.len() + 1);
    match method {
        MethodArg::Lemma2 => is_ui_lemma2(set),
        MethodArg::Auto if lemma2_applies => is_ui_lemma2(set),
        MethodArg::Auto | MethodArg::Exhaustive => is_ui_exhaustive_with(set, budget, strategy),
    }
}

fn cmd_verify(a: &VerifyArgs) -> anyhow::Result<Outcome> {
    let set = read_sequence_file(&a.input)?;
    let verdict = verify_set(&set, a.method, a.budget, a.strategy)?;
    let doc = json!({
        "users": set.len(),
        "L": set.period(),
        "verdict": verdict,
    });
    Ok(Outcome {
        artifacts: vec![Artifact::new("verdict.json", to_json(&doc)?)],
        primary: 0,
        status: if verdict.is_ui { Status::Ok } else { Status::NotUi },
        seed: None,
        inputs: vec![a.input.clone()],
    })
}

fn cmd_bounds(a: &BoundsArgs) -> anyhow::Result<Outcome> {
    let ms: Vec<u64> = match (a.m_range, a.prime_minus_one) {
        (Some((lo, hi)), None) => (lo..=hi).collect(),
        (None, Some(p)) => prime_minus_one_users(p),
        (None, None) => bail!(Error::InvalidArgument("give --m-range or --prime-minus-one".into())),
        (Some(_), Some(_)) => unreachable!("clap rejects both"),
    };
    let mut csv = String::from(BoundReport::CSV_HEADER);
    csv.push('\n');
    for m in ms {
        let r = BoundReport::new(m, a.pi_mode.into())?;
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    Ok(Outcome {
        artifacts: vec![Artifact::new("bounds.csv", csv)],
        primary: 0,
        status: Status::Ok,
        seed: None,
        inputs: vec![],
    })
}

/// One decimal place, as in the published tables.
pub fn one_decimal(x: f64) -> String {
    format!("{x:.1}")
}

fn protocol_set(construction: Construction, m: u64, users: Option<&[usize]>) -> crate::Result<SequenceSet> {
    let fam = CrtmFamily::build(construction, m)?;
    match users {
        Some(u) => fam.select_users(u),
        None => Ok(fam.default_users()),
    }
}

fn cmd_simulate(a: &SimulateArgs) -> anyhow::Result<Outcome> {
    let (scheme, p_s) = match a.scheme {
        SchemeArg::Crtm => (Scheme::Protocol(protocol_set(Construction::Crtm, a.m, a.users.as_deref())?), None),
        SchemeArg::Crt => (Scheme::Protocol(protocol_set(Construction::Crt, a.m, a.users.as_deref())?), None),
        SchemeArg::Random => {
            let p_s = a.ps.resolve(a.m, a.pa)?;
            (Scheme::RandomAccess { p_s }, Some(p_s))
        }
    };
    let mut cfg = SimConfig::new(scheme, a.m as usize, a.pa, a.samples, a.seed)
        .with_workers(a.workers)
        .with_averaging(a.averaging.into())
        .with_convention(a.delay_convention.into());
    if let Some(h) = a.horizon {
        cfg = cfg.with_horizon(h);
    }
    let stats = run_sim(&cfg)?;
    let scheme_name = match a.scheme {
        SchemeArg::Crtm => "crtm",
        SchemeArg::Crt => "crt",
        SchemeArg::Random => "random",
    };
    let doc = json!({
        "scheme": scheme_name,
        "M": a.m,
        "p_a": a.pa,
        "p_s": p_s,
        "stats": stats,
    });
    let csv = format!(
        "scheme,M,p_a,p_s,individual,group\n{},{},{},{},{},{}\n",
        scheme_name,
        a.m,
        a.pa,
        p_s.map(|p| p.to_string()).unwrap_or_default(),
        one_decimal(stats.mean_individual),
        one_decimal(stats.mean_group)
    );
    let primary = match a.format {
        JsonOrCsv::Json => 0,
        JsonOrCsv::Csv => 1,
    };
    Ok(Outcome {
        artifacts: vec![Artifact::new("simulate.json", to_json(&doc)?), Artifact::new("simulate.csv", csv)],
        primary,
        status: if stats.truncated_samples > 0 { Status::Exhausted } else { Status::Ok },
        seed: Some(a.seed),
        inputs: vec![],
    })
}

/// Row of a delay table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TableScheme {
    /// `p_s = (M + 1) / L_crtm`.
    RandomMatched,
    /// `p_s = 1 / (M p_a)`.
    RandomOptimal,
    Crt,
    Crtm,
}

impl TableScheme {
    pub const ALL: [TableScheme; 4] =
        [TableScheme::RandomMatched, TableScheme::RandomOptimal, TableScheme::Crt, TableScheme::Crtm];

    pub fn name(self) -> &'static str {
        match self {
            TableScheme::RandomMatched => "random_matched",
            TableScheme::RandomOptimal => "random_optimal",
            TableScheme::Crt => "crt",
            TableScheme::Crtm => "crtm",
        }
    }

    pub fn is_protocol(self) -> bool {
        matches!(self, TableScheme::Crt | TableScheme::Crtm)
    }
}

/// Resolved request for a delay table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRequest {
    pub table: u8,
    /// `(M, p_a)` per column.
    pub columns: Vec<(u64, f64)>,
    pub samples: u64,
    pub seed: u64,
    pub workers: usize,
    pub convention: TableConventionArg,
}

impl TableRequest {
    pub const FULL_M: [u64; 12] = [8, 9, 10, 12, 14, 15, 16, 18, 20, 25, 30, 40];
    pub const FULL_PA: [f64; 7] = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4];

    pub fn from_args(a: &TableArgs) -> crate::Result<Self> {
        let columns: Vec<(u64, f64)> = match a.paper_table {
            2 => {
                if a.pa.is_some() {
                    return Err(Error::InvalidArgument("table 2 is at p_a = 1; drop --pa".into()));
                }
                let ms = a.m.clone().unwrap_or_else(|| Self::FULL_M.to_vec());
                ms.into_iter().map(|m| (m, 1.0)).collect()
            }
            3 | 4 => {
                let fixed = if a.paper_table == 3 { 10 } else { 30 };
                if a.m.as_ref().is_some_and(|m| m != &[fixed]) {
                    return Err(Error::InvalidArgument(format!("table {} is at M = {fixed}", a.paper_table)));
                }
                let pas = a.pa.clone().unwrap_or_else(|| Self::FULL_PA.to_vec());
                pas.into_iter().map(|p| (fixed, p)).collect()
            }
            t => return Err(Error::InvalidArgument(format!("no table {t}"))),
        };
        if columns.is_empty() {
            return Err(Error::InvalidArgument("no table columns".into()));
        }
        Ok(TableRequest {
            table: a.paper_table,
            columns,
            samples: a.samples,
            seed: a.seed,
            workers: a.workers,
            convention: a.delay_convention,
        })
    }

    pub fn convention_for(&self, scheme: TableScheme) -> DelayConvention {
        match self.convention {
            TableConventionArg::Inclusive => DelayConvention::Inclusive,
            TableConventionArg::Exclusive => DelayConvention::Exclusive,
            TableConventionArg::AsPublished if self.table == 2 && scheme.is_protocol() => DelayConvention::Exclusive,
            TableConventionArg::AsPublished => DelayConvention::Inclusive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub scheme: TableScheme,
    pub m: u64,
    pub p_a: f64,
    pub p_s: Option<f64>,
    pub stats: DelayStats,
}

pub fn run_table(req: &TableRequest) -> crate::Result<Vec<TableCell>> {
    let mut cells = Vec::new();
    for &(m, p_a) in &req.columns {
        for scheme in TableScheme::ALL {
            let (sim_scheme, p_s) = match scheme {
                TableScheme::RandomMatched => {
                    let p = matched_ps(m)?;
                    (Scheme::RandomAccess { p_s: p }, Some(p))
                }
                TableScheme::RandomOptimal => {
                    let p = optimal_ps(m, p_a)?;
                    (Scheme::RandomAccess { p_s: p }, Some(p))
                }
                TableScheme::Crt => (Scheme::Protocol(protocol_set(Construction::Crt, m, None)?), None),
                TableScheme::Crtm => (Scheme::Protocol(protocol_set(Construction::Crtm, m, None)?), None),
            };
            let cfg = SimConfig::new(sim_scheme, m as usize, p_a, req.samples, req.seed)
                .with_workers(req.workers)
                .with_convention(req.convention_for(scheme));
            cells.push(TableCell { scheme, m, p_a, p_s, stats: run_sim(&cfg)? });
        }
    }
    Ok(cells)
}

/// Rows `metric,scheme` with one column per `M` (table 2) or `p_a`.
pub fn table_csv(req: &TableRequest, cells: &[TableCell]) -> String {
    let mut out = String::from("metric,scheme");
    for &(m, p_a) in &req.columns {
        if req.table == 2 {
            let _ = write!(out, ",M={m}");
        } else {
            let _ = write!(out, ",p_a={p_a}");
        }
    }
    out.push('\n');
    for metric in ["individual", "group"] {
        for scheme in TableScheme::ALL {
            let _ = write!(out, "{metric},{}", scheme.name());
            for &(m, p_a) in &req.columns {
                let c = cells
                    .iter()
                    .find(|c| c.scheme == scheme && c.m == m && c.p_a == p_a)
                    .expect("every cell computed");
                let v = if metric == "individual" { c.stats.mean_individual } else { c.stats.mean_group };
                let _ = write!(out, ",{}", one_decimal(v));
            }
            out.push('\n');
        }
    }
    out
}

fn cmd_table(a: &TableArgs) -> anyhow::Result<Outcome> {
    let req = TableRequest::from_args(a)?;
    let cells = run_table(&req)?;
    let csv = table_csv(&req, &cells);
    let truncated = cells.iter().any(|c| c.stats.truncated_samples > 0);
    let doc = json!({ "request": req, "cells": cells });
    Ok(Outcome {
        artifacts: vec![Artifact::new("table.csv", csv), Artifact::new("table.json", to_json(&doc)?)],
        primary: 0,
        status: if truncated { Status::Exhausted } else { Status::Ok },
        seed: Some(a.seed),
        inputs: vec![],
    })
}

fn digest_files(paths: &[PathBuf]) -> anyhow::Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(FileDigest { name: p.display().to_string(), sha256: sha256_hex(&bytes) })
        })
        .collect()
}

fn digest_artifacts(artifacts: &[Artifact]) -> Vec<FileDigest> {
    artifacts.iter().map(|a| FileDigest { name: a.name.clone(), sha256: sha256_hex(a.content.as_bytes()) }).collect()
}

fn cmd_replay(a: &ReplayArgs) -> anyhow::Result<Outcome> {
    let text = std::fs::read_to_string(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let manifest: RunManifest = serde_json::from_str(&text).context("parsing manifest")?;
    let cli = Cli::try_parse_from(&manifest.command_line).context("manifest command line")?;
    if matches!(cli.command, Command::Replay(_)) {
        bail!(Error::InvalidArgument("refusing to replay a replay".into()));
    }
    let rerun = execute(&cli.command)?;
    let inputs_now = digest_files(&rerun.inputs)?;
    let outputs_now = digest_artifacts(&rerun.artifacts);
    let inputs_match = inputs_now == manifest.inputs;
    let outputs_match = outputs_now == manifest.outputs;
    let doc = json!({
        "manifest": a.manifest.display().to_string(),
        "inputs_match": inputs_match,
        "outputs_match": outputs_match,
        "expected": manifest.outputs,
        "actual": outputs_now,
    });
    Ok(Outcome {
        artifacts: vec![Artifact::new("replay.json", to_json(&doc)?)],
        primary: 0,
        status: if inputs_match && outputs_match { Status::Ok } else { Status::Mismatch },
        seed: None,
        inputs: vec![a.manifest.clone()],
    })
}

/// Runs a command without touching stdout or the output directory.
pub fn execute(command: &Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Generate(a) => cmd_generate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Table(a) => cmd_table(a),
        Command::Replay(a) => cmd_replay(a),
    }
}

pub fn build_manifest(argv: &[String], command: &Command, outcome: &Outcome) -> anyhow::Result<RunManifest> {
    let stochastic = matches!(command, Command::Simulate(_) | Command::Table(_));
    Ok(RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command_line: argv.to_vec(),
        config: serde_json::to_value(command)?,
        seed: outcome.seed,
        rng: stochastic.then(|| crate::simulate::RNG_NAME.to_string()),
        inputs: digest_files(&outcome.inputs)?,
        outputs: digest_artifacts(&outcome.artifacts),
        exit_code: outcome.status.exit_code(),
    })
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(Error::BudgetExceeded { .. } | Error::AllSamplesTruncated(_)) => EXIT_EXHAUSTED,
        _ => EXIT_USAGE,
    }
}

fn emit(cli: &Cli, argv: &[String], outcome: &Outcome) -> anyhow::Result<()> {
    let manifest = build_manifest(argv, &cli.command, outcome)?;
    match &cli.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for a in &outcome.artifacts {
                let path = dir.join(&a.name);
                std::fs::write(&path, &a.content).with_context(|| format!("writing {}", path.display()))?;
            }
            std::fs::write(dir.join("manifest.json"), to_json(&manifest)?)?;
            print!("{}", outcome.artifacts[outcome.primary].content);
        }
        None => {
            print!("{}", outcome.artifacts[outcome.primary].content);
            if !cli.no_manifest {
                eprint!("{}", to_json(&manifest)?);
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<String> = args.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match execute(&cli.command) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return exit_code_for(&e);
        }
    };
    if let Err(e) = emit(&cli, &argv, &outcome) {
        eprintln!("error: {e:#}");
        return EXIT_USAGE;
    }
    outcome.status.exit_code()
}
