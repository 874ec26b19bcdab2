use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Parser, Subcommand};
use rons::experiments::{build_id, run_fokker_planck, run_kuramoto_sivashinsky, ErrorReport, ExperimentConfig, Problem};
use rons::verify::{run_suite, Suite};
use rons::RonsError;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rons", version, about = "Reduced-order nonlinear solution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more experiment configs.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Override a config entry, e.g. `alpha=1e-3` or `integrator.rtol=1e-9`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "RONS_OUT_DIR", default_value = ".")]
        out: PathBuf,
        /// Configs run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run a self-check suite: kernels, theorems, integrators or all.
    Verify { suite: String },
}

/// Failure carrying its exit code and machine-readable description.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: String,
    field: Option<String>,
    message: String,
    config: Option<PathBuf>,
}

impl Failure {
    fn usage(kind: &str, message: impl Into<String>) -> Self {
        Self { code: 2, kind: kind.into(), field: None, message: message.into(), config: None }
    }

    fn from_rons(err: &RonsError) -> Self {
        let (code, field) = match err {
            RonsError::InvalidConfig { field, .. } => (2, Some(field.clone())),
            _ => (1, None),
        };
        Self { code, kind: err.kind().into(), field, message: err.to_string(), config: None }
    }

    fn io(err: anyhow::Error) -> Self {
        Self { code: 1, kind: "io".into(), field: None, message: format!("{err:#}"), config: None }
    }

    fn at(mut self, path: &Path) -> Self {
        self.config = Some(path.to_path_buf());
        self
    }

    fn emit(&self) {
        let json = serde_json::json!({
            "error": {
                "kind": self.kind,
                "field": self.field,
                "message": self.message,
                "config": self.config,
            }
        });
        eprintln!("{json}");
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_path: &'a Path,
    config: &'a ExperimentConfig,
    version: &'static str,
    build_id: String,
    seed: u64,
    started_unix: f64,
    finished_unix: f64,
    outputs: Vec<PathBuf>,
}

/// Report without the time series.
#[derive(Serialize)]
struct Summary<'a> {
    problem: Problem,
    method: rons::experiments::SolveMethod,
    modes: usize,
    constrained: bool,
    alpha: f64,
    seed: u64,
    rtol: f64,
    atol: f64,
    build_id: &'a str,
    summary: &'a std::collections::BTreeMap<String, f64>,
    accepted_steps: usize,
    rejected_steps: usize,
    rhs_evals: usize,
    abort: &'a Option<rons::experiments::Abort>,
    wall_time_seconds: f64,
}

impl<'a> From<&'a ErrorReport> for Summary<'a> {
    fn from(r: &'a ErrorReport) -> Self {
        Self {
            problem: r.problem,
            method: r.method,
            modes: r.modes,
            constrained: r.constrained,
            alpha: r.alpha,
            seed: r.seed,
            rtol: r.rtol,
            atol: r.atol,
            build_id: &r.build_id,
            summary: &r.summary,
            accepted_steps: r.accepted_steps,
            rejected_steps: r.rejected_steps,
            rhs_evals: r.rhs_evals,
            abort: &r.abort,
            wall_time_seconds: r.wall_time_seconds,
        }
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Sets `table[a][b]… = value` for the dotted `key`. The value is read as a
/// TOML literal, falling back to a bare string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), Failure> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Failure::usage("invalid_override", format!("expected KEY=VALUE, got `{assignment}`")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::usage("invalid_override", format!("malformed key `{key}`")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Failure::usage("invalid_override", format!("`{part}` in `{key}` is not a section")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn load_config(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(|e| Failure { code: 2, ..Failure::io(e) })?;
    let mut table: toml::Table = toml::from_str(&text).map_err(|e| Failure::usage("config_parse", e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    if let Some(seed) = seed {
        let seed = i64::try_from(seed).map_err(|_| Failure::usage("invalid_config", "seed exceeds i64 range"))?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    }
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Failure::usage("config_parse", e.message().to_string()))?;
    cfg.validate().map_err(|e| Failure::from_rons(&e))?;
    Ok(cfg)
}

fn write_outputs(path: &Path, cfg: &ExperimentConfig, out: &Path, report: &ErrorReport, started: f64) -> anyhow::Result<PathBuf> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv = out.join(format!("{stem}_errors.csv"));
    let summary = out.join(format!("{stem}_summary.json"));
    let manifest = out.join(format!("{stem}_manifest.json"));

    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    fs::write(&csv, buf).with_context(|| format!("writing {}", csv.display()))?;
    fs::write(&summary, serde_json::to_string_pretty(&Summary::from(report))? + "\n")
        .with_context(|| format!("writing {}", summary.display()))?;
    let m = Manifest {
        config_path: path,
        config: cfg,
        version: env!("CARGO_PKG_VERSION"),
        build_id: build_id(),
        seed: cfg.seed,
        started_unix: started,
        finished_unix: unix_now(),
        outputs: vec![csv.clone(), summary.clone(), manifest.clone()],
    };
    fs::write(&manifest, serde_json::to_string_pretty(&m)? + "\n").with_context(|| format!("writing {}", manifest.display()))?;
    Ok(manifest)
}

fn run_one(path: &Path, cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, Failure> {
    let started = unix_now();
    let report = match cfg.problem {
        Problem::FokkerPlanck => run_fokker_planck(cfg),
        Problem::KuramotoSivashinsky => run_kuramoto_sivashinsky(cfg).map(|r| r.report),
    }
    .map_err(|e| Failure::from_rons(&e).at(path))?;
    let manifest = write_outputs(path, cfg, out, &report, started).map_err(|e| Failure::io(e).at(path))?;
    if let Some(abort) = &report.abort {
        return Err(Failure {
            code: 1,
            kind: abort.kind.clone(),
            field: None,
            message: format!("integration stopped early: {}", abort.message),
            config: Some(path.to_path_buf()),
        });
    }
    Ok(manifest)
}

fn run(configs: &[PathBuf], overrides: &[String], seed: Option<u64>, out: &Path, jobs: usize) -> Result<(), Failure> {
    if jobs == 0 {
        return Err(Failure::usage("invalid_config", "--jobs must be at least 1"));
    }
    // parse and validate everything before running anything
    let parsed = configs
        .iter()
        .map(|p| load_config(p, overrides, seed).map(|c| (p.clone(), c)).map_err(|e| e.at(p)))
        .collect::<Result<Vec<_>, _>>()?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<PathBuf, Failure>>>> = Mutex::new((0..parsed.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(parsed.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((path, cfg)) = parsed.get(i) else { break };
                let r = run_one(path, cfg, out);
                results.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });

    let mut worst: Option<Failure> = None;
    for r in results.into_inner().expect("no poisoned workers").into_iter().flatten() {
        match r {
            Ok(manifest) => println!("{}", manifest.display()),
            Err(f) => {
                f.emit();
                if worst.as_ref().is_none_or(|w| f.code > w.code) {
                    worst = Some(f);
                }
            }
        }
    }
    match worst {
        // already reported
        Some(f) => Err(Failure { kind: String::new(), ..f }),
        None => Ok(()),
    }
}

fn verify(name: &str) -> Result<(), Failure> {
    let suite: Suite = name.parse().map_err(|e| Failure::from_rons(&e))?;
    let checks = run_suite(suite);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {} failed", checks.len(), failed);
    if failed > 0 {
        return Err(Failure { code: 1, kind: String::new(), field: None, message: String::new(), config: None });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { configs, overrides, seed, out, jobs } => run(configs, overrides, *seed, out, *jobs),
        Command::Verify { suite } => verify(suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            // an empty kind means the failure was printed already
            if !f.kind.is_empty() {
                f.emit();
            }
            ExitCode::from(f.code)
        }
    }
}
