//! Command-line front end: manifest assembly plus the `run` and `validate`
//! commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dataio::{load_features, save_snapshot, whiten, FeatureSet, Preset};
use crate::error::{Error, Result};
use crate::eval::{write_jsonl, write_table};
use crate::learner::{AnyLearner, LearnerKind, OnlineLearner};
use crate::metric::{default_rank, validate_gamma, DEFAULT_GAMMA};
use crate::stream::{
    generate_scenario1, generate_scenario2, generate_scenario3, read_kv_file, run_protocol,
    run_scenario1, run_scenario2, ProtocolOptions, ScenarioConfig, ScenarioKind,
};

/// Exit code for configuration, data and validation failures.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for failures while running or writing reports.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "openworld", version, about = "Online open-world classification experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write reports.
    Run(RunArgs),
    /// Check config consistency and dataset sufficiency without running.
    Validate(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// s1, s2, s3 or custom
    #[arg(long)]
    pub scenario: Option<ScenarioKind>,
    /// oncm, onno, onbc, ncm-fixed, nno-fixed or nbc-fixed
    #[arg(long)]
    pub learner: Option<LearnerKind>,
    /// Feature file (OWFS binary or `label,f1,...,fd` text)
    #[arg(long, conflicts_with = "synth")]
    pub data: Option<PathBuf>,
    /// Synthetic preset: separable3, xor4, halo or blobs200
    #[arg(long)]
    pub synth: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "rank-m")]
    pub rank_m: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key = value` config file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Path(PathBuf),
    Synth(Preset),
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: ScenarioConfig,
    pub learner: LearnerKind,
    pub gamma: f64,
    /// Projection rank; defaults to `min(d, 256)` once `d` is known.
    pub rank_m: Option<usize>,
    pub data: DataSource,
    pub out: PathBuf,
}

impl RunManifest {
    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let kv = match &args.config {
            Some(p) => read_kv_file(p)?,
            None => Default::default(),
        };
        let scenario = match (args.scenario, kv.get("scenario")) {
            (Some(s), _) => s,
            (None, Some(s)) => s.parse()?,
            (None, None) => ScenarioKind::S3,
        };
        let data = match (&args.data, args.synth, kv.get("data"), kv.get("synth")) {
            (Some(p), _, _, _) => DataSource::Path(p.clone()),
            (None, Some(s), _, _) => DataSource::Synth(s),
            (None, None, Some(_), Some(_)) => {
                return Err(Error::Config(
                    "config sets both data and synth; keep one".into(),
                ))
            }
            (None, None, Some(p), None) => DataSource::Path(PathBuf::from(p)),
            (None, None, None, Some(s)) => DataSource::Synth(s.parse()?),
            (None, None, None, None) => {
                return Err(Error::Config(
                    "no dataset: pass --data <path> or --synth <preset>".into(),
                ))
            }
        };
        let mut config = match data {
            DataSource::Synth(p) => ScenarioConfig::for_preset(scenario, p),
            DataSource::Path(_) => ScenarioConfig::defaults(scenario),
        };
        let mut manifest = RunManifest {
            config: ScenarioConfig::defaults(scenario),
            learner: LearnerKind::Onbc,
            gamma: DEFAULT_GAMMA,
            rank_m: None,
            data,
            out: PathBuf::from("openworld-out"),
        };

        let parse_err = |k: &str, v: &str, e: &dyn std::fmt::Display| {
            Error::Config(format!("{k}: cannot parse '{v}': {e}"))
        };
        for (k, v) in &kv {
            if k == "scenario" || config.set(k, v)? {
                continue;
            }
            match k.as_str() {
                "learner" => manifest.learner = v.parse()?,
                "gamma" => manifest.gamma = v.parse().map_err(|e| parse_err(k, v, &e))?,
                "rank_m" => manifest.rank_m = Some(v.parse().map_err(|e| parse_err(k, v, &e))?),
                "out" => manifest.out = PathBuf::from(v),
                "data" | "synth" => {}
                _ => return Err(Error::Config(format!("unknown config key '{k}'"))),
            }
        }
        config.scenario = scenario;
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        if let Some(l) = args.learner {
            manifest.learner = l;
        }
        if let Some(g) = args.gamma {
            manifest.gamma = g;
        }
        if let Some(m) = args.rank_m {
            manifest.rank_m = Some(m);
        }
        if let Some(o) = &args.out {
            manifest.out = o.clone();
        }
        manifest.config = config;
        Ok(manifest)
    }

    pub fn load_data(&self) -> Result<FeatureSet> {
        match &self.data {
            DataSource::Path(p) => load_features(p),
            DataSource::Synth(preset) => preset.generate(self.config.seed),
        }
    }

    /// The manifest as a `key = value` file that reproduces the run.
    pub fn to_kv(&self) -> String {
        let mut s = self.config.to_kv();
        s += &format!("learner = {}\ngamma = {:?}\n", self.learner, self.gamma);
        if let Some(m) = self.rank_m {
            s += &format!("rank_m = {m}\n");
        }
        match &self.data {
            DataSource::Path(p) => s += &format!("data = {}\n", p.display()),
            DataSource::Synth(p) => s += &format!("synth = {p}\n"),
        }
        s
    }

    fn rank_for(&self, d: usize) -> usize {
        self.rank_m.unwrap_or_else(|| default_rank(d))
    }

    /// All problems with this manifest against `data`, one message each.
    pub fn problems(&self, data: &FeatureSet) -> Vec<String> {
        let mut p = Vec::new();
        if let Err(e) = validate_gamma(self.gamma) {
            p.push(e.to_string());
        }
        let m = self.rank_for(data.dim());
        if m == 0 || m > data.dim() {
            p.push(format!("rank_m = {m} must lie in 1..={}", data.dim()));
        }
        let config_problems = self.config.problems();
        let base_ok = config_problems.is_empty();
        p.extend(config_problems);
        let needed = self.config.required_classes();
        if data.num_classes() < needed {
            p.push(format!(
                "scenario {} needs ≥ {needed} classes, dataset has {}",
                self.config.scenario,
                data.num_classes()
            ));
        } else if base_ok {
            let plan = match self.config.scenario {
                ScenarioKind::S1 => generate_scenario1(&self.config, data).map(|_| ()),
                ScenarioKind::S2 => generate_scenario2(&self.config, data).map(|_| ()),
                ScenarioKind::S3 | ScenarioKind::Custom => {
                    crate::stream::StreamSchedule::new(&self.config, data).map(|_| ())
                }
            };
            if let Err(e) = plan {
                p.push(e.to_string());
            }
        }
        p
    }
}

/// Final numbers of a run, also written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: ScenarioKind,
    pub learner: LearnerKind,
    pub seed: u64,
    pub gamma: f64,
    pub rank_m: usize,
    pub dim: usize,
    pub classes_learned: usize,
    pub samples: u64,
    pub skipped: usize,
    pub closed_acc: Option<f64>,
    pub open_acc: Option<f64>,
    pub harmonic: Option<f64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut w = create(path)?;
    let mut put = |line: &str| writeln!(w, "{line}").map_err(|e| Error::io(path, e));
    put(header)?;
    for r in rows {
        put(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs the manifest and writes `reports.jsonl`, `table.csv`,
/// `summary.json`, `model.json` and `manifest.txt` into the output directory.
pub fn cmd_run(manifest: &RunManifest) -> Result<RunSummary> {
    let data = manifest.load_data()?;
    let problems = manifest.problems(&data);
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let config = &manifest.config;
    let kind = manifest.learner;
    let d = data.dim();
    let m = manifest.rank_for(d);
    let mut learner = kind.build(d, m, manifest.gamma)?;
    if !kind.is_open_set() && config.scenario != ScenarioKind::S1 {
        log::warn!(
            "{kind} does not have this property: it never predicts unknown, so open-set accuracy stays near 0"
        );
    }
    let freeze = kind.is_fixed().then_some(config.freeze_after_segments);
    let out = &manifest.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut summary = RunSummary {
        scenario: config.scenario,
        learner: kind,
        seed: config.seed,
        gamma: manifest.gamma,
        rank_m: m,
        dim: d,
        classes_learned: 0,
        samples: 0,
        skipped: 0,
        closed_acc: None,
        open_acc: None,
        harmonic: None,
    };

    match config.scenario {
        ScenarioKind::S1 | ScenarioKind::S2 => {
            let plan = if config.scenario == ScenarioKind::S1 {
                generate_scenario1(config, &data)?
            } else {
                generate_scenario2(config, &data)?
            };
            let data = match &plan.whiten {
                Some(s) => whiten(&data, s)?,
                None => data,
            };
            summary.samples = plan.batches.iter().map(|b| b.train.len() as u64).sum();
            if config.scenario == ScenarioKind::S1 {
                let evals = run_scenario1(&mut learner, &plan, &data, freeze);
                write_lines(&out.join("reports.jsonl"), &evals)?;
                write_csv(
                    &out.join("table.csv"),
                    "known_classes,test_samples,accuracy",
                    evals.iter().map(|e| {
                        format!("{},{},{:.6}", e.known_classes, e.test_samples, e.accuracy)
                    }),
                )?;
                summary.closed_acc = evals.last().map(|e| e.accuracy);
            } else {
                let grid = run_scenario2(&mut learner, &plan, &data, &config.unknown_test_counts, freeze);
                write_lines(&out.join("reports.jsonl"), &grid)?;
                write_csv(
                    &out.join("table.csv"),
                    "known,unknown,samples,accuracy,closed,open",
                    grid.iter().map(|c| {
                        format!(
                            "{},{},{},{:.6},{:.6},{:.6}",
                            c.known_classes, c.unknown_classes, c.samples, c.accuracy, c.closed_acc, c.open_acc
                        )
                    }),
                )?;
                if let Some(c) = grid.last() {
                    summary.closed_acc = Some(c.closed_acc);
                    summary.open_acc = Some(c.open_acc);
                    summary.harmonic = Some(crate::eval::harmonic_mean(c.closed_acc, c.open_acc));
                }
            }
        }
        ScenarioKind::S3 | ScenarioKind::Custom => {
            let events = generate_scenario3(config, &data)?;
            let opts = ProtocolOptions {
                segments: config.segments,
                freeze_at_segment: freeze,
                keep_log: false,
            };
            let result = run_protocol(&mut learner, &events, &opts);
            let path = out.join("reports.jsonl");
            write_jsonl(create(&path)?, &result.reports).map_err(|e| Error::io(&path, e))?;
            let path = out.join("table.csv");
            write_table(create(&path)?, &result.reports).map_err(|e| Error::io(&path, e))?;
            summary.samples = events.len() as u64;
            summary.skipped = result.skipped;
            summary.closed_acc = Some(result.totals.closed.value);
            summary.open_acc = Some(result.totals.open.value);
            summary.harmonic = Some(result.totals.harmonic());
        }
    }

    summary.classes_learned = learner.num_classes();
    save_snapshot(&learner, out.join("model.json"))?;
    let path = out.join("summary.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
    let path = out.join("manifest.txt");
    std::fs::write(&path, manifest.to_kv()).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

/// All problems with the manifest; empty when it is runnable.
pub fn cmd_validate(manifest: &RunManifest) -> Vec<String> {
    match manifest.load_data() {
        Ok(data) => manifest.problems(&data),
        Err(e) => vec![e.to_string()],
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

/// Learner loaded from a run's output directory.
pub fn load_run_model(out: &Path) -> Result<AnyLearner> {
    crate::dataio::load_snapshot(out.join("model.json"))
}

/// Executes a parsed command line; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(args) => {
            let manifest = match RunManifest::from_args(&args) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            match cmd_run(&manifest) {
                Ok(s) => {
                    let mut stdout = std::io::stdout().lock();
                    let _ = writeln!(
                        stdout,
                        "{} on {} (seed {}): closed {} open {} harmonic {}",
                        s.learner,
                        s.scenario,
                        s.seed,
                        fmt_opt(s.closed_acc),
                        fmt_opt(s.open_acc),
                        fmt_opt(s.harmonic)
                    );
                    let _ = writeln!(
                        stdout,
                        "{} samples, {} classes learned, {} updates skipped; reports in {}",
                        s.samples,
                        s.classes_learned,
                        s.skipped,
                        manifest.out.display()
                    );
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    match e {
                        Error::Io { ref path, .. } if path.starts_with(&manifest.out) => EXIT_FAILURE,
                        _ => EXIT_USAGE,
                    }
                }
            }
        }
        Command::Validate(args) => {
            let manifest = match RunManifest::from_args(&args) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            let problems = cmd_validate(&manifest);
            if problems.is_empty() {
                println!("ok: {} with {} is runnable", manifest.config.scenario, manifest.learner);
                0
            } else {
                for p in &problems {
                    eprintln!("error: {p}");
                }
                EXIT_USAGE
            }
        }
    }
}
