//! Command-line surface.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::config::{default_gamma_p, load_config, ExperimentConfig, RecordFormat};
use super::experiment::{path_stem, regularity_from_sequences, run_experiment, RunManifest, RunOptions};
use super::formats::{to_json, ProbeSidecar};
use super::report::render_report;
use super::{HarnessError, EXIT_ACCEPTANCE, EXIT_OK, EXIT_USAGE};
use crate::covariance::verify::run_kernel_suite;
use crate::covariance::{CovarianceKind, CovarianceModel};
use crate::noise::{
    axis_lags, build_sampler, decode_flat, empirical_covariance, encode_flat, FieldSidecar, GridSpec,
};
use crate::regularity::{SequenceSet, Verdict};
use crate::solvability::{check_admissible, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "spdelab", version, about = "Super-linear SPDE laboratory")]
struct Cli {
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Output format for printed results and per-path records.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Worker threads (default: THREADS, then the core count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run rejected configurations anyway.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the admissibility report of a problem.
    Admissible {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        /// `white`, `riesz:ALPHA` or `gaussian:C`.
        #[arg(long, default_value = "white")]
        cov: String,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Run the covariance kernel suite.
    VerifyKernels {
        #[arg(long, default_value_t = 1)]
        d: usize,
    },
    /// Draw noise increments and their empirical covariance.
    SampleNoise {
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 10.0)]
        length: f64,
        #[arg(long, default_value = "white")]
        cov: String,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Largest lag along the first axis, in cells.
        #[arg(long, default_value_t = 8)]
        max_lag: i64,
    },
    /// Run an experiment from a configuration or re-run a manifest.
    Simulate {
        #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
        config: Option<PathBuf>,
        /// Re-run the manifest's configuration and compare artifact hashes.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Hölder exponents from the snapshots and probes of a run directory.
    EstimateHolder {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        tolerance: Option<f64>,
        /// Exit with the check-failure code unless the verdict is "meets".
        #[arg(long)]
        require_meets: bool,
    },
    /// Render SVG/CSV summaries of a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// `white`, `riesz:ALPHA` or `gaussian:C`.
pub fn parse_covariance(spec: &str, d: usize) -> Result<CovarianceModel, HarnessError> {
    let (name, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let value = || {
        arg.parse::<f64>()
            .map_err(|_| HarnessError::Usage(format!("covariance {spec:?} needs a numeric parameter after ':'")))
    };
    let kind = match name {
        "white" => CovarianceKind::White,
        "riesz" => CovarianceKind::Riesz { alpha: value()? },
        "gaussian" => CovarianceKind::Gaussian { c: value()? },
        _ => return Err(HarnessError::Usage(format!("unknown covariance {name:?}"))),
    };
    CovarianceModel::new(kind, d).map_err(|e| HarnessError::Config {
        path: "--cov".into(),
        line: None,
        fields: vec!["cov".into(), "d".into()],
        message: e.to_string(),
    })
}

fn emit<T: Serialize>(value: &T, csv: impl FnOnce() -> String, format: Option<OutputFormat>) {
    match format {
        Some(OutputFormat::Csv) => print!("{}", csv()),
        _ => print!("{}", to_json(value)),
    }
}

fn dispatch(cli: &Cli) -> Result<i32, HarnessError> {
    match &cli.command {
        Command::Admissible { d, lambda, cov, gamma, p } => {
            let model = parse_covariance(cov, *d)?;
            let (g, p_default) = default_gamma_p(*d, *lambda, &model, *gamma);
            let spec = ProblemSpec {
                d: *d,
                lambda: *lambda,
                model,
                gamma: g,
                p: p.unwrap_or(p_default),
            };
            let report = check_admissible(&spec).map_err(|e| HarnessError::Config {
                path: "arguments".into(),
                line: None,
                fields: vec!["d".into(), "lambda".into(), "gamma".into(), "p".into()],
                message: e.to_string(),
            })?;
            emit(
                &report,
                || {
                    format!(
                        "admissible,matched_condition,gamma0,gamma1,gamma_star,p_min,rejection_reason\n{},{},{},{},{},{},\"{}\"\n",
                        report.admissible,
                        report.matched_condition,
                        report.gamma0,
                        report.gamma1,
                        report.gamma_star.map(|g| g.to_string()).unwrap_or_default(),
                        report.p_min,
                        report.rejection_reason.replace('"', "'")
                    )
                },
                cli.format,
            );
            Ok(EXIT_OK)
        }
        Command::VerifyKernels { d } => {
            let outcomes = run_kernel_suite(*d).map_err(|e| HarnessError::Usage(e.to_string()))?;
            emit(
                &outcomes,
                || {
                    let mut s = String::from("name,passed,value,relation,threshold\n");
                    for o in &outcomes {
                        s.push_str(&format!("{},{},{},{},{}\n", o.name, o.passed, o.value, o.relation, o.threshold));
                    }
                    s
                },
                cli.format,
            );
            let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
            if failed.is_empty() {
                Ok(EXIT_OK)
            } else {
                eprintln!("failed checks: {}", failed.join(", "));
                Ok(EXIT_ACCEPTANCE)
            }
        }
        Command::SampleNoise {
            d,
            n,
            length,
            cov,
            dt,
            count,
            max_lag,
        } => sample_noise(cli, *d, *n, *length, cov, *dt, *count, *max_lag),
        Command::Simulate { config, manifest } => simulate(cli, config.as_deref(), manifest.as_deref()),
        Command::EstimateHolder {
            dir,
            epsilon,
            tolerance,
            require_meets,
        } => estimate_holder_cmd(cli, dir, *epsilon, *tolerance, *require_meets),
        Command::Report { dir } => {
            for p in render_report(dir, cli.out_dir.as_deref())? {
                println!("{}", p.display());
            }
            Ok(EXIT_OK)
        }
    }
}

#[derive(Serialize)]
struct CovarianceRow {
    lag: i64,
    estimate: f64,
    standard_error: f64,
    expected: f64,
}

#[allow(clippy::too_many_arguments)]
fn sample_noise(
    cli: &Cli,
    d: usize,
    n: usize,
    length: f64,
    cov: &str,
    dt: f64,
    count: usize,
    max_lag: i64,
) -> Result<i32, HarnessError> {
    let model = parse_covariance(cov, d)?;
    let grid = GridSpec::new(d, n, length).map_err(|e| HarnessError::Usage(e.to_string()))?;
    if !(dt > 0.0) || max_lag < 0 {
        return Err(HarnessError::Usage("need dt > 0 and max-lag ≥ 0".into()));
    }
    let seed = cli.seed.unwrap_or(0);
    let mut sampler = build_sampler(&model, &grid, seed, 0).map_err(|e| HarnessError::Numeric(e.to_string()))?;
    let samples: Vec<_> = (0..count).map(|_| sampler.sample_increment(dt)).collect();
    let lags = axis_lags(d, &(0..=max_lag).collect::<Vec<_>>());
    let estimates =
        empirical_covariance(&samples, &grid, &lags).map_err(|e| HarnessError::Usage(e.to_string()))?;
    let rows: Vec<CovarianceRow> = estimates
        .iter()
        .map(|e| CovarianceRow {
            lag: e.lag[0],
            estimate: e.estimate,
            standard_error: e.standard_error,
            expected: dt * sampler.implied_covariance(grid.lag_index(&e.lag)),
        })
        .collect();
    let csv = || {
        let mut s = String::from("lag,estimate,standard_error,expected\n");
        for r in &rows {
            s.push_str(&format!("{},{},{},{}\n", r.lag, r.estimate, r.standard_error, r.expected));
        }
        s
    };
    if let Some(dir) = &cli.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let values: Vec<f64> = samples.iter().flat_map(|s| s.values.iter().copied()).collect();
        let sidecar = FieldSidecar {
            grid,
            dt,
            seed,
            stream: 0,
            model,
            count,
            times: Vec::new(),
        };
        let files: [(&str, Vec<u8>); 4] = [
            ("increments.bin", encode_flat(&values)),
            ("increments.json", to_json(&sidecar).into_bytes()),
            ("covariance.csv", csv().into_bytes()),
            ("covariance.json", to_json(&rows).into_bytes()),
        ];
        for (name, bytes) in files {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| HarnessError::io(&p, e))?;
        }
    }
    emit(&rows, csv, cli.format);
    Ok(EXIT_OK)
}

fn apply_overrides(cli: &Cli, config: &mut ExperimentConfig) {
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.format {
        Some(OutputFormat::Csv) => config.outputs.formats = vec![RecordFormat::Csv],
        Some(OutputFormat::Json) => config.outputs.formats = vec![RecordFormat::Json],
        None => {}
    }
}

fn simulate(cli: &Cli, config: Option<&Path>, manifest: Option<&Path>) -> Result<i32, HarnessError> {
    let (mut cfg, previous) = match (config, manifest) {
        (Some(path), _) => (load_config(path)?, None),
        (None, Some(path)) => {
            let m = RunManifest::load(path)?;
            (m.config.clone(), Some(m))
        }
        (None, None) => return Err(HarnessError::Usage("simulate needs --config or --manifest".into())),
    };
    apply_overrides(cli, &mut cfg);
    let options = RunOptions {
        threads: cli.threads,
        force: cli.force,
        out_dir: cli.out_dir.clone(),
    };
    let manifest = run_experiment(&cfg, &options)?;
    let out_dir = options.out_dir.unwrap_or_else(|| PathBuf::from(&cfg.outputs.dir));
    println!(
        "{} paths, {} artifacts in {} ({:.2} s)",
        cfg.paths,
        manifest.artifacts.len(),
        out_dir.display(),
        manifest.timings.wall_seconds
    );
    if let Some(previous) = previous {
        let mismatched: Vec<&str> = previous
            .artifacts
            .iter()
            .filter(|a| !manifest.artifacts.contains(a))
            .map(|a| a.path.as_str())
            .collect();
        if !mismatched.is_empty() || previous.artifacts.len() != manifest.artifacts.len() {
            eprintln!("artifacts differ from the manifest: {}", mismatched.join(", "));
            return Ok(EXIT_ACCEPTANCE);
        }
        println!("all {} artifacts reproduced", manifest.artifacts.len());
    }
    Ok(EXIT_OK)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::io(path, e))
}

fn read_flat(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode_flat(&bytes).map_err(|e| HarnessError::io(path, e))
}

/// Snapshots and probe series stored by a run, grouped by path.
pub fn load_stored_sequences(
    dir: &Path,
    config: &ExperimentConfig,
) -> Result<(Option<SequenceSet>, Option<SequenceSet>), HarnessError> {
    let cells = config.grid.cells();
    let mut fields = Vec::new();
    let mut series = Vec::new();
    let mut spacing = None;
    for i in 0..config.paths {
        let stem = path_stem(i);
        let snap = dir.join("snapshots").join(format!("{stem}.bin"));
        if snap.exists() {
            let side: FieldSidecar = read_json(&dir.join("snapshots").join(format!("{stem}.json")))?;
            let values = read_flat(&snap)?;
            if values.len() != side.count * cells {
                return Err(HarnessError::io(&snap, "size does not match the sidecar"));
            }
            fields.push(values.chunks(cells).map(<[f64]>::to_vec).collect::<Vec<_>>());
        }
        let probe = dir.join("probes").join(format!("{stem}.bin"));
        if probe.exists() {
            let side: ProbeSidecar = read_json(&dir.join("probes").join(format!("{stem}.json")))?;
            let values = read_flat(&probe)?;
            if side.samples == 0 || values.len() != side.points.len() * side.samples {
                return Err(HarnessError::io(&probe, "size does not match the sidecar"));
            }
            spacing = Some(side.spacing);
            series.push(values.chunks(side.samples).map(<[f64]>::to_vec).collect::<Vec<_>>());
        }
    }
    let space = (!fields.is_empty()).then(|| SequenceSet::from_snapshots(&config.grid, &fields));
    let time = spacing.map(|s| SequenceSet::from_time_series(s, series));
    Ok((space, time))
}

fn estimate_holder_cmd(
    cli: &Cli,
    dir: &Path,
    epsilon: Option<f64>,
    tolerance: Option<f64>,
    require_meets: bool,
) -> Result<i32, HarnessError> {
    let mut config: ExperimentConfig = read_json(&dir.join("config.json"))?;
    if let Some(e) = epsilon {
        config.regularity.epsilon = e;
    }
    if let Some(t) = tolerance {
        config.regularity.tolerance = t;
    }
    let (space, time) = load_stored_sequences(dir, &config)?;
    if space.is_none() && time.is_none() {
        return Err(HarnessError::Usage(format!("{} holds no snapshots or probes", dir.display())));
    }
    let out = regularity_from_sequences(&config, space, time);
    if let Some(o) = &cli.out_dir {
        std::fs::create_dir_all(o).map_err(|e| HarnessError::io(o, e))?;
        let p = o.join("regularity.json");
        std::fs::write(&p, to_json(&out)).map_err(|e| HarnessError::io(&p, e))?;
    }
    let r = &out.report;
    emit(
        r,
        || {
            let mut s = String::from("direction,exponent,ci_low,ci_high,target,verdict\n");
            for (name, est, target) in [("space", &r.space_exponent, r.target_space), ("time", &r.time_exponent, r.target_time)] {
                if let Some(e) = est {
                    s.push_str(&format!(
                        "{name},{},{},{},{target},{:?}\n",
                        e.exponent, e.confidence_interval.0, e.confidence_interval.1, r.verdict
                    ));
                }
            }
            s
        },
        cli.format,
    );
    for p in &out.problems {
        eprintln!("warning: {p}");
    }
    if require_meets && r.verdict != Verdict::Meets {
        return Ok(EXIT_ACCEPTANCE);
    }
    Ok(EXIT_OK)
}
