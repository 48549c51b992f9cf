//! Command-line front end: `run`, `batch` and `render`.

use crate::engine::{
    decisions_csv, metrics_csv_header, metrics_csv_row, parse_trajectory, render_svg, scene_from_trajectory, RunOutcome,
    RunStatus, Sim,
};
use crate::scenario::{load_scenario, ScenarioSpec, SweepAxis};
use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_COMPLETE: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INCOMPLETE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_ABORT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "chainswarm", about = "Decentralized communication-chain swarm simulator")]
pub struct Cli {
    /// Root directory for artifacts.
    #[arg(long, env = "CHAINSWARM_OUT", global = true)]
    pub out: Option<PathBuf>,
    /// Abort a run on the first invariant violation.
    #[arg(long, global = true)]
    pub strict_audit: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario.
    Run {
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write every robot's store each tick to store.log.
        #[arg(long)]
        dump_store: bool,
    },
    /// Seeded repetitions, optionally over a sweep axis.
    Batch {
        spec: PathBuf,
        #[arg(long, default_value_t = 35)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// failure_factor, random_cap or links.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Draw a trajectory CSV at one tick.
    Render {
        csv: PathBuf,
        /// Scenario providing the map and targets.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        tick: Option<u64>,
        /// Output file; defaults next to the CSV.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn out_root(cli_out: &Option<PathBuf>, spec: &ScenarioSpec) -> PathBuf {
    cli_out.clone().or_else(|| spec.output.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}

fn write(path: &Path, data: &str) -> Result<(), String> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    std::fs::write(path, data).map_err(|e| format!("{}: {e}", path.display()))
}

fn status_code(s: RunStatus) -> i32 {
    match s {
        RunStatus::Complete => EXIT_COMPLETE,
        RunStatus::Incomplete => EXIT_INCOMPLETE,
        RunStatus::Aborted => EXIT_ABORT,
    }
}

/// Runs a scenario and writes the four artifacts into `dir`.
pub fn run_to_dir(spec: &ScenarioSpec, base: &Path, strict: bool, dir: &Path, dump_store: bool) -> Result<RunOutcome, (i32, String)> {
    let mut sim_spec = spec.resolve(base).map_err(|e| (EXIT_INVALID, e.to_string()))?;
    sim_spec.strict_audit |= strict;
    let mut sim = Sim::new(sim_spec).map_err(|e| (EXIT_INVALID, e.to_string()))?;
    let outcome = if dump_store {
        let mut log = String::new();
        let out = sim.run_with(|sim| {
            for r in sim.robots() {
                for line in r.store.dump() {
                    let _ = writeln!(log, "{},{},{}", sim.tick(), r.id, line);
                }
            }
        });
        write(&dir.join("store.log"), &log).map_err(|e| (EXIT_INVALID, e))?;
        out
    } else {
        sim.run()
    };
    let c = &sim.spec().control;
    let metrics = format!(
        "{}\n{}\n",
        metrics_csv_header(),
        metrics_csv_row(&spec.name, spec.seed, outcome.status, &outcome.metrics, c.dt, c.v_max)
    );
    let files = [
        ("metrics.csv", metrics),
        ("trajectory.csv", sim.trajectory_csv().to_string()),
        ("decisions.csv", decisions_csv(sim.decisions())),
        ("final.svg", render_svg(&sim.spec().map, &sim.svg_scene())),
    ];
    for (name, data) in files {
        write(&dir.join(name), &data).map_err(|e| (EXIT_INVALID, e))?;
    }
    if let Some(snap) = &outcome.abort {
        write(&dir.join("abort.txt"), snap).map_err(|e| (EXIT_INVALID, e))?;
    }
    Ok(outcome)
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

fn stat_cells(mut v: Vec<f64>) -> String {
    v.sort_by(f64::total_cmp);
    match (quantile(&v, 0.5), quantile(&v, 0.25), quantile(&v, 0.75)) {
        (Some(m), Some(a), Some(b)) => format!("{m:.6},{:.6}", b - a),
        _ => ",".into(),
    }
}

/// Per-run rows followed by a median/IQR summary.
pub fn batch_csv(spec: &ScenarioSpec, base: &Path, reps: u64, seed: u64, jobs: usize) -> Result<String, String> {
    if reps == 0 {
        return Err("reps must be at least 1".into());
    }
    let seeds: Vec<u64> = (seed..seed + reps).collect();
    let jobs = jobs.max(1);
    let mut results: Vec<Option<Result<(u64, RunOutcome, f64, f64), String>>> = (0..seeds.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        for (k, chunk) in results.chunks_mut(seeds.len().div_ceil(jobs)).enumerate() {
            let seeds = &seeds;
            let per = seeds.len().div_ceil(jobs);
            s.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    let mut one = spec.clone();
                    one.seed = seeds[k * per + i];
                    *slot = Some(one.resolve(base).map_err(|e| e.to_string()).and_then(|mut ss| {
                        ss.record_trajectory = false;
                        let (dt, v) = (ss.control.dt, ss.control.v_max);
                        let mut sim = Sim::new(ss).map_err(|e| e.to_string())?;
                        Ok((one.seed, sim.run(), dt, v))
                    }));
                }
            });
        }
    });
    let mut csv = format!("{}\n", metrics_csv_header());
    let (mut tf, mut rec, mut done) = (Vec::new(), Vec::new(), 0usize);
    for r in results {
        let (seed, out, dt, v) = r.expect("every slot filled")?;
        let _ = writeln!(csv, "{}", metrics_csv_row(&spec.name, seed, out.status, &out.metrics, dt, v));
        if out.status == RunStatus::Complete {
            done += 1;
        }
        if let Some(f) = out.metrics.time_factor(dt, v) {
            tf.push(f);
        }
        rec.extend(out.metrics.recovery_ticks().into_iter().map(|t| t as f64 * dt));
    }
    let _ = writeln!(csv, "\nsummary,runs,complete,median_time_factor,iqr_time_factor,median_recovery_s,iqr_recovery_s");
    let _ = writeln!(csv, "{},{},{},{},{}", spec.name, reps, done, stat_cells(tf), stat_cells(rec));
    Ok(csv)
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match &cli.command {
        Command::Run { spec, seed, dump_store } => {
            let mut s = match load_scenario(spec) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_INVALID;
                }
            };
            if let Some(seed) = seed {
                s.seed = *seed;
            }
            let dir = out_root(&cli.out, &s).join(&s.name);
            match run_to_dir(&s, &base_dir(spec), cli.strict_audit, &dir, *dump_store) {
                Ok(o) => {
                    if let Some(a) = &o.abort {
                        eprint!("{a}");
                    }
                    let m = &o.metrics;
                    println!(
                        "{}: {:?} at tick {} (messages {}, violations {}) -> {}",
                        s.name,
                        o.status,
                        m.ticks,
                        m.messages_total(),
                        m.violations,
                        dir.display()
                    );
                    status_code(o.status)
                }
                Err((code, e)) => {
                    eprintln!("error: {e}");
                    code
                }
            }
        }
        Command::Batch { spec, reps, seed, sweep, jobs } => {
            let s = match load_scenario(spec) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_INVALID;
                }
            };
            let mut s = s;
            s.strict_audit |= cli.strict_audit;
            let variants = match sweep {
                None => vec![("all".to_string(), s.clone())],
                Some(axis) => {
                    let Some(axis) = SweepAxis::parse(axis) else {
                        eprintln!("error: unknown sweep axis `{axis}` (failure_factor, random_cap, links)");
                        return EXIT_USAGE;
                    };
                    match s.variants(axis) {
                        Ok(v) => v,
                        Err(e) => {
                            eprintln!("error: {e}");
                            return EXIT_INVALID;
                        }
                    }
                }
            };
            let root = out_root(&cli.out, &s).join(format!("{}_batch", s.name));
            let mut outputs = Vec::new();
            for (label, v) in &variants {
                match batch_csv(v, &base_dir(spec), *reps, *seed, *jobs) {
                    Ok(csv) => outputs.push((root.join(format!("{label}.csv")), csv)),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_INVALID;
                    }
                }
            }
            for (p, csv) in outputs {
                if let Err(e) = write(&p, &csv) {
                    eprintln!("error: {e}");
                    return EXIT_INVALID;
                }
                println!("{}", p.display());
            }
            EXIT_COMPLETE
        }
        Command::Render { csv, scenario, tick, output } => {
            let run = || -> Result<PathBuf, String> {
                let s = load_scenario(scenario).map_err(|e| e.to_string())?;
                let sim = s.resolve(&base_dir(scenario)).map_err(|e| e.to_string())?;
                let text = std::fs::read_to_string(csv).map_err(|e| format!("{}: {e}", csv.display()))?;
                let rows = parse_trajectory(&text).map_err(|e| e.to_string())?;
                let last = rows.iter().map(|r| r.tick).max().unwrap_or(0);
                if let Some(t) = tick {
                    if *t > last {
                        return Err(format!("tick {t} beyond log (last tick {last})"));
                    }
                }
                let scene = scene_from_trajectory(&rows, *tick, sim.mission.targets.clone(), sim.radio.safe);
                let path = output.clone().unwrap_or_else(|| csv.with_file_name(format!("tick_{}.svg", tick.unwrap_or(last))));
                write(&path, &render_svg(&sim.map, &scene))?;
                Ok(path)
            };
            match run() {
                Ok(p) => {
                    println!("{}", p.display());
                    EXIT_COMPLETE
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_INVALID
                }
            }
        }
    }
}
