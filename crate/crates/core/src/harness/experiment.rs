//! Monte Carlo orchestration: independent paths on a thread pool, artifacts
//! written in path order, and a manifest of content hashes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, RecordFormat};
use super::formats::{
    record_to_csv, sha256_hex, to_json, verify_artifacts, Artifact, ArtifactWriter, PathSummary, ProbeSidecar,
};
use super::HarnessError;
use crate::noise::{build_sampler, derive_stream_seed, encode_flat, FieldSidecar};
use crate::regularity::{
    compare_to_theory, default_lags, estimate_holder, structure_function, Direction, HolderEstimate,
    RegularityReport, SequenceSet, StructureFunction,
};
use crate::solver::{mass_martingale_stat, run_path, MonitorConfig, PathConfig, ProbeConfig, TrajectoryRecord};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Default location of rendered reports inside a run directory; not part of
/// the manifest.
pub const REPORT_DIR: &str = "report/";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; falls back to `THREADS`, then to the core count.
    pub threads: Option<usize>,
    /// Run even when the configuration is rejected.
    pub force: bool,
    /// Overrides `outputs.dir`.
    pub out_dir: Option<PathBuf>,
}

pub fn resolve_threads(requested: Option<usize>) -> usize {
    requested
        .or_else(|| std::env::var("THREADS").ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSeed {
    pub path: usize,
    pub stream: u64,
    /// Seed of the path's generator, derived from the master seed and stream.
    pub stream_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub wall_seconds: f64,
    pub path_seconds: Vec<f64>,
    pub steps_total: usize,
    pub seconds_per_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub threads: usize,
    pub forced: bool,
    pub seeds: Vec<PathSeed>,
    /// Everything written except the manifest itself.
    pub artifacts: Vec<Artifact>,
    pub timings: Timings,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config {
            path: path.display().to_string(),
            line: Some(e.line()),
            fields: Vec::new(),
            message: e.to_string(),
        })
    }

    /// Hash mismatches and unlisted files in `dir`.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>, HarnessError> {
        verify_artifacts(dir, &self.artifacts, &[MANIFEST_FILE, REPORT_DIR])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauFrequency {
    pub multiple: f64,
    pub threshold: f64,
    pub hits: usize,
    /// `hits / records`.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSummary {
    /// `b = c = 0`, `u₀ ≥ 0` and at least two completed paths.
    pub applicable: bool,
    pub reason: Option<String>,
    pub t: f64,
    pub mean_drift: Option<f64>,
    pub standard_error: Option<f64>,
    /// Largest `|l1_mass(T) − l1_mass(0)|` over completed paths.
    pub max_abs_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivitySummary {
    /// `10⁻³·‖u₀‖_∞`.
    pub tolerance: f64,
    pub records: usize,
    pub within: usize,
    pub fraction_within: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFailure {
    pub path: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub paths: usize,
    /// Paths that produced a record, possibly partial.
    pub records: usize,
    /// Paths that reached the horizon.
    pub completed: usize,
    pub blow_up_count: usize,
    pub failures: Vec<PathFailure>,
    pub u0_sup: f64,
    pub tau: Vec<TauFrequency>,
    pub mass: MassSummary,
    pub positivity: PositivitySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityOutput {
    pub space: Option<StructureFunction>,
    pub time: Option<StructureFunction>,
    pub report: RegularityReport,
    /// Estimation problems that left an exponent undetermined.
    pub problems: Vec<String>,
}

/// Positivity tolerance relative to `‖u₀‖_∞`.
pub const POSITIVITY_TOLERANCE: f64 = 1e-3;

struct PathOutcome {
    record: Option<TrajectoryRecord>,
    error: Option<String>,
    seconds: f64,
}

fn fingerprint(config: &ExperimentConfig) -> String {
    sha256_hex(to_json(config).as_bytes())
}

fn path_config(config: &ExperimentConfig, u0_sup: f64) -> PathConfig {
    let m = &config.monitors;
    let scale = if u0_sup > 0.0 { u0_sup } else { 1.0 };
    let probes = m.probes.as_ref().map(|p| {
        let cells = config.grid.cells();
        ProbeConfig {
            points: (0..p.count).map(|i| i * cells / p.count).collect(),
            every: p.every,
            start_step: (p.start_time / config.dt).round() as usize,
        }
    });
    PathConfig {
        dt: config.dt,
        horizon: config.horizon,
        noise_substeps: config.noise_substeps,
        monitors: MonitorConfig {
            record_every: m.record_every,
            thresholds: m.threshold_multiples.iter().map(|k| k * scale).collect(),
            bessel: m.bessel,
            snapshot_steps: m.snapshot_times.iter().map(|t| (t / config.dt).round() as usize).collect(),
            probes,
        },
        fingerprint: fingerprint(config),
    }
}

fn run_one(config: &ExperimentConfig, u0: &[f64], pc: &PathConfig, index: usize) -> PathOutcome {
    let start = Instant::now();
    let result = build_sampler(&config.problem.model, &config.grid, config.seed, index as u64)
        .map_err(|e| e.to_string())
        .and_then(|mut sampler| {
            run_path(u0, &config.coefficients, &config.diffusion, &mut sampler, pc).map_err(|e| e.to_string())
        });
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(record) => PathOutcome {
            error: record.failure.clone(),
            record: Some(record),
            seconds,
        },
        Err(e) => PathOutcome {
            record: None,
            error: Some(e),
            seconds,
        },
    }
}

pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<RunManifest, HarnessError> {
    if let Some(reason) = config.rejection() {
        if !options.force {
            return Err(HarnessError::Rejected(reason));
        }
    }
    let out_dir = options
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.outputs.dir));
    let threads = resolve_threads(options.threads);
    let wall = Instant::now();

    let u0 = config.initial.sample(&config.grid);
    let u0_sup = u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pc = path_config(config, u0_sup);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Numeric(format!("cannot start thread pool: {e}")))?;
    let outcomes: Vec<PathOutcome> = pool.install(|| {
        (0..config.paths)
            .into_par_iter()
            .map(|i| run_one(config, &u0, &pc, i))
            .collect()
    });
    if outcomes.iter().all(|o| o.record.is_none() || o.error.is_some()) {
        let first = outcomes.iter().find_map(|o| o.error.clone()).unwrap_or_default();
        return Err(HarnessError::Numeric(format!("all {} paths failed; first: {first}", config.paths)));
    }

    let mut writer = ArtifactWriter::new(&out_dir)?;
    writer.write("config.json", to_json(config).as_bytes())?;
    for (i, o) in outcomes.iter().enumerate() {
        if let Some(rec) = &o.record {
            write_path(&mut writer, config, i, rec)?;
        }
    }
    let aggregate = aggregate(config, &outcomes, u0_sup, &u0);
    writer.write("aggregate.json", to_json(&aggregate).as_bytes())?;
    if !config.monitors.snapshot_times.is_empty() || config.monitors.probes.is_some() {
        let records: Vec<&TrajectoryRecord> = outcomes
            .iter()
            .filter(|o| o.error.is_none())
            .filter_map(|o| o.record.as_ref())
            .collect();
        let reg = regularity(config, &records);
        writer.write("regularity.json", to_json(&reg).as_bytes())?;
    }

    let steps_total: usize = outcomes
        .iter()
        .filter_map(|o| o.record.as_ref())
        .map(|r| r.steps_taken)
        .sum();
    let path_seconds: Vec<f64> = outcomes.iter().map(|o| o.seconds).collect();
    let manifest = RunManifest {
        config: config.clone(),
        threads,
        forced: options.force && config.rejection().is_some(),
        seeds: (0..config.paths)
            .map(|i| PathSeed {
                path: i,
                stream: i as u64,
                stream_seed: derive_stream_seed(config.seed, i as u64),
            })
            .collect(),
        timings: Timings {
            wall_seconds: wall.elapsed().as_secs_f64(),
            seconds_per_step: path_seconds.iter().sum::<f64>() / steps_total.max(1) as f64,
            path_seconds,
            steps_total,
        },
        artifacts: Vec::new(),
    };
    let root = writer.root().to_path_buf();
    let manifest = RunManifest {
        artifacts: writer.finish(),
        ..manifest
    };
    let path = root.join(MANIFEST_FILE);
    std::fs::write(&path, to_json(&manifest)).map_err(|e| HarnessError::io(&path, e))?;
    Ok(manifest)
}

pub fn path_stem(index: usize) -> String {
    format!("path_{index:04}")
}

fn write_path(
    writer: &mut ArtifactWriter,
    config: &ExperimentConfig,
    index: usize,
    rec: &TrajectoryRecord,
) -> Result<(), HarnessError> {
    let stem = path_stem(index);
    if config.outputs.formats.contains(&RecordFormat::Csv) {
        writer.write(&format!("paths/{stem}.csv"), record_to_csv(rec).as_bytes())?;
    }
    if config.outputs.formats.contains(&RecordFormat::Json) {
        let summary = PathSummary {
            path: index,
            seed: rec.seed,
            stream: rec.stream,
            fingerprint: rec.fingerprint.clone(),
            steps_planned: rec.steps_planned,
            steps_taken: rec.steps_taken,
            final_time: rec.times.last().copied().unwrap_or(0.0),
            blow_up: rec.blow_up,
            failure: rec.failure.clone(),
            tau_hits: rec.tau_hits.clone(),
            max_violation: rec.max_violation(),
            config: config.clone(),
        };
        writer.write(&format!("paths/{stem}.json"), to_json(&summary).as_bytes())?;
    }
    if !rec.snapshots.is_empty() {
        let values: Vec<f64> = rec.snapshots.iter().flat_map(|s| s.values.iter().copied()).collect();
        writer.write(&format!("snapshots/{stem}.bin"), &encode_flat(&values))?;
        let sidecar = FieldSidecar {
            grid: config.grid,
            dt: config.dt,
            seed: rec.seed,
            stream: rec.stream,
            model: config.problem.model,
            count: rec.snapshots.len(),
            times: rec.snapshots.iter().map(|s| s.t).collect(),
        };
        writer.write(&format!("snapshots/{stem}.json"), to_json(&sidecar).as_bytes())?;
    }
    if let Some(p) = &rec.probes {
        let values: Vec<f64> = p.values.iter().flatten().copied().collect();
        writer.write(&format!("probes/{stem}.bin"), &encode_flat(&values))?;
        let sidecar = ProbeSidecar {
            points: p.points.clone(),
            spacing: p.spacing,
            start_time: p.start_time,
            samples: p.values.first().map_or(0, Vec::len),
            seed: rec.seed,
            stream: rec.stream,
        };
        writer.write(&format!("probes/{stem}.json"), to_json(&sidecar).as_bytes())?;
    }
    Ok(())
}

fn aggregate(config: &ExperimentConfig, outcomes: &[PathOutcome], u0_sup: f64, u0: &[f64]) -> Aggregate {
    let records: Vec<&TrajectoryRecord> = outcomes.iter().filter_map(|o| o.record.as_ref()).collect();
    let completed: Vec<TrajectoryRecord> = outcomes
        .iter()
        .filter(|o| o.error.is_none())
        .filter_map(|o| o.record.clone())
        .collect();
    let scale = if u0_sup > 0.0 { u0_sup } else { 1.0 };
    let tau = config
        .monitors
        .threshold_multiples
        .iter()
        .enumerate()
        .map(|(k, &multiple)| {
            let hits = records.iter().filter(|r| r.tau_hits[k].time.is_some()).count();
            TauFrequency {
                multiple,
                threshold: multiple * scale,
                hits,
                frequency: hits as f64 / records.len().max(1) as f64,
            }
        })
        .collect();

    let c = &config.coefficients;
    let zero = |f: &crate::solver::Field| f.constant == 0.0 && f.terms.iter().all(|t| t.amplitude == 0.0);
    let mut reasons = Vec::new();
    if !(c.b.iter().all(zero) && zero(&c.c)) {
        reasons.push("b and c are not both zero");
    }
    if u0.iter().any(|&v| v < 0.0) {
        reasons.push("u0 takes negative values");
    }
    if completed.len() < 2 {
        reasons.push("fewer than two completed paths");
    }
    let t = completed.first().and_then(|r| r.times.last().copied()).unwrap_or(config.horizon);
    let max_abs_drift = completed
        .iter()
        .map(|r| (r.l1_mass[r.l1_mass.len() - 1] - r.l1_mass[0]).abs())
        .fold(0.0, f64::max);
    let mut mass = MassSummary {
        applicable: reasons.is_empty(),
        reason: (!reasons.is_empty()).then(|| reasons.join("; ")),
        t,
        mean_drift: None,
        standard_error: None,
        max_abs_drift,
    };
    if mass.applicable {
        match mass_martingale_stat(&completed, t) {
            Ok((m, se)) => {
                mass.mean_drift = Some(m);
                mass.standard_error = Some(se);
            }
            Err(e) => {
                mass.applicable = false;
                mass.reason = Some(e.to_string());
            }
        }
    }

    let tolerance = POSITIVITY_TOLERANCE * u0_sup;
    let mins: Vec<f64> = records.iter().flat_map(|r| r.min_value.iter().copied()).collect();
    let within = mins.iter().filter(|&&m| m >= -tolerance).count();
    let positivity = PositivitySummary {
        tolerance,
        records: mins.len(),
        within,
        fraction_within: within as f64 / mins.len().max(1) as f64,
        max_violation: records.iter().map(|r| r.max_violation()).fold(0.0, f64::max),
    };

    Aggregate {
        paths: config.paths,
        records: records.len(),
        completed: completed.len(),
        blow_up_count: records.iter().filter(|r| r.blow_up).count(),
        failures: outcomes
            .iter()
            .enumerate()
            .filter_map(|(i, o)| {
                o.error.as_ref().map(|m| PathFailure {
                    path: i,
                    message: m.clone(),
                })
            })
            .collect(),
        u0_sup,
        tau,
        mass,
        positivity,
    }
}

/// Structure functions and exponents from stored snapshots and probes.
pub fn regularity_from_sequences(
    config: &ExperimentConfig,
    space: Option<SequenceSet>,
    time: Option<SequenceSet>,
) -> RegularityOutput {
    let settings = &config.regularity;
    let mut problems = Vec::new();
    let mut run = |data: Option<SequenceSet>, direction: Direction| -> (Option<StructureFunction>, Option<HolderEstimate>) {
        let Some(data) = data else {
            return (None, None);
        };
        let len = data.replicates.iter().flatten().map(Vec::len).min().unwrap_or(0);
        let lags = default_lags(len, settings.lag_count);
        let sf = match structure_function(&data, direction, settings.q, &lags) {
            Ok(sf) => sf,
            Err(e) => {
                problems.push(format!("{direction:?}: {e}"));
                return (None, None);
            }
        };
        match estimate_holder(&sf, settings.confidence) {
            Ok(est) => (Some(sf), Some(est)),
            Err(e) => {
                problems.push(format!("{direction:?}: {e}"));
                (Some(sf), None)
            }
        }
    };
    let (space_sf, space_est) = run(space, Direction::Space);
    let (time_sf, time_est) = run(time, Direction::Time);
    let report = compare_to_theory(
        space_est.as_ref(),
        time_est.as_ref(),
        &config.problem,
        settings.epsilon,
        settings.tolerance,
    );
    RegularityOutput {
        space: space_sf,
        time: time_sf,
        report,
        problems,
    }
}

fn regularity(config: &ExperimentConfig, records: &[&TrajectoryRecord]) -> RegularityOutput {
    let space = (!config.monitors.snapshot_times.is_empty()).then(|| {
        let per_path: Vec<Vec<Vec<f64>>> = records
            .iter()
            .map(|r| r.snapshots.iter().map(|s| s.values.clone()).collect())
            .collect();
        SequenceSet::from_snapshots(&config.grid, &per_path)
    });
    let time = config.monitors.probes.as_ref().map(|p| {
        let per_path = records
            .iter()
            .filter_map(|r| r.probes.as_ref().map(|s| s.values.clone()))
            .collect();
        SequenceSet::from_time_series(p.every as f64 * config.dt, per_path)
    });
    regularity_from_sequences(config, space, time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn heat_config(extra: &str) -> ExperimentConfig {
        let src = format!(
            "[problem]\nd = 1\n[grid]\nn = 64\nlength = 8.0\n[time]\ndt = 1e-3\nhorizon = 0.02\n{extra}"
        );
        parse_config(&src, "t.toml").unwrap()
    }

    #[test]
    fn deterministic_heat_path_without_noise() {
        let cfg = heat_config("[coefficients]\nxi = 0.0\n");
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(
            &cfg,
            &RunOptions {
                threads: Some(1),
                out_dir: Some(dir.path().to_path_buf()),
                ..Default::default()
            },
        )
        .unwrap();
        let names: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
        assert_eq!(names, ["config.json", "paths/path_0000.csv", "paths/path_0000.json", "aggregate.json"]);
        assert!(m.verify(dir.path()).unwrap().is_empty());
        let agg: Aggregate =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("aggregate.json")).unwrap()).unwrap();
        assert_eq!(agg.completed, 1);
        assert!(agg.mass.max_abs_drift < 1e-12);
        assert_eq!(agg.tau[0].hits, 0);
    }

    #[test]
    fn rejected_config_needs_force() {
        let cfg = heat_config("[coefficients]\npreset = \"violating\"\n");
        assert!(matches!(
            run_experiment(&cfg, &RunOptions::default()),
            Err(HarnessError::Rejected(_))
        ));
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(
            &cfg,
            &RunOptions {
                force: true,
                threads: Some(1),
                out_dir: Some(dir.path().to_path_buf()),
            },
        )
        .unwrap();
        assert!(m.forced);
    }

    #[test]
    fn thread_count_does_not_change_artifacts() {
        let cfg = heat_config("[run]\npaths = 5\nseed = 11\n[monitors]\nsnapshot_times = [0.01, 0.02]\n");
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let run = |dir: &Path, threads| {
            run_experiment(
                &cfg,
                &RunOptions {
                    threads: Some(threads),
                    out_dir: Some(dir.to_path_buf()),
                    ..Default::default()
                },
            )
            .unwrap()
        };
        let (ma, mb) = (run(a.path(), 1), run(b.path(), 4));
        assert_eq!(ma.artifacts, mb.artifacts);
        assert!(ma.artifacts.iter().any(|x| x.path == "regularity.json"));
        assert_eq!(ma.seeds[3].stream_seed, derive_stream_seed(11, 3));
    }
}
