//! The `anticip-mpc` command line.
//!
//! Every command writes its outputs plus a `manifest.json` recording the
//! command, the resolved configuration, SHA-256 hashes of the inputs, the
//! seed, and the output paths. Exit codes: 0 success, 2 invalid input,
//! 3 solver failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::costs::CostWeights;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, latency_metric, mean_std, LatencyReport, MetricsConfig, MetricsReport};
use crate::mpc::{build_problem, plan_one_shot, run_mpc_with, ExecutionTrace, MpcConfig, Timing};
use crate::scenario::{generate, generate_resolved, GenParams, HumanSource, Scenario, ScenarioFile};
use crate::solver::{Solver, SolverConfig};

/// Version stamped into every manifest and printed by `--schema`.
pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID_INPUT: i32 = 2;
pub const EXIT_SOLVER_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "anticip-mpc",
    version,
    about = "Anticipatory receding-horizon planning for manipulators near people"
)]
pub struct Cli {
    /// JSON file overriding weights, mpc, solver and metrics settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory (for `gen-scenario`, a `.json` path names the scenario file).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Run one discarded solve before timing.
    #[arg(long, global = true, overrides_with = "no_warmup")]
    pub warmup: bool,

    #[arg(long = "no-warmup", global = true, overrides_with = "warmup")]
    pub no_warmup: bool,

    /// Worker threads for batch commands.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Print the output file schemas and exit.
    #[arg(long)]
    pub schema: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

impl Cli {
    fn warmup(&self) -> bool {
        !self.no_warmup
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded reaching scenario with a synthesized human prediction.
    GenScenario {
        /// Task duration and prediction span, seconds.
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
        /// Number of scenarios; more than one writes `scenario_NNN/` subdirectories.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Single fixed-horizon solve over the whole task.
    Plan(ScenarioArgs),
    /// Receding-horizon execution of a scenario (or a directory of them).
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Planning horizon, seconds.
        #[arg(long)]
        horizon: Option<f64>,
        /// Replanning period, seconds.
        #[arg(long)]
        replan: Option<f64>,
    },
    /// Score a trace (or a batch directory of traces).
    Eval {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        timing: Option<PathBuf>,
        /// Directory of `scenario_*/` folders each holding scenario.json and trace.json.
        #[arg(long, conflicts_with_all = ["scenario", "trace", "timing"])]
        batch: Option<PathBuf>,
        /// Score against the prediction means instead of the ground truth.
        #[arg(long)]
        against_prediction: bool,
    },
    /// Latency benchmark over seeded scenarios.
    Bench {
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Benchmark the scenarios in this batch directory instead of generating them.
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
}

/// Contents of the `--config` file. Absent sections keep the scenario's values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub weights: Option<CostWeights>,
    #[serde(default)]
    pub mpc: Option<MpcConfig>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    fn apply(&self, file: &mut ScenarioFile) {
        if let Some(w) = self.weights {
            file.weights = w;
        }
        if let Some(m) = self.mpc {
            file.mpc = m;
        }
        if let Some(s) = self.solver {
            file.solver = s;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub inputs: Vec<InputHash>,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub schema_version: u32,
}

impl RunManifest {
    fn new(command: &str, config: Value, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            config,
            inputs: Vec::new(),
            seed,
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            schema_version: OUTPUT_SCHEMA_VERSION,
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(InputHash {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    /// Scenario file plus the robot, prediction and ground-truth files it names.
    fn scenario_inputs(&mut self, path: &Path, file: &ScenarioFile) -> Result<()> {
        self.input(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if file.robot != "default" {
            self.input(&base.join(&file.robot))?;
        }
        if let HumanSource::PredictionFile(p) = &file.human {
            self.input(&base.join(p))?;
        }
        if let Some(p) = &file.ground_truth {
            self.input(&base.join(p))?;
        }
        Ok(())
    }

    fn write(mut self, dir: &Path, name: &str, outputs: &mut Outputs) -> Result<PathBuf> {
        self.outputs = outputs.paths.clone();
        let path = dir.join(name);
        write_json(&path, &self)?;
        outputs.paths.push(path.clone());
        Ok(path)
    }
}

#[derive(Debug, Default)]
struct Outputs {
    paths: Vec<PathBuf>,
}

impl Outputs {
    fn json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<()> {
        write_json(&path, value)?;
        self.paths.push(path);
        Ok(())
    }

    fn text(&mut self, path: PathBuf, text: &str) -> Result<()> {
        write_atomic(&path, text.as_bytes())?;
        self.paths.push(path);
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_solver_failure() {
        EXIT_SOLVER_FAILURE
    } else {
        EXIT_INVALID_INPUT
    }
}

/// Deterministic part of a solve, written as `diagnostics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub total_cost: f64,
    pub max_bound_violation: f64,
    pub cost_history: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `trajectory.json` written by `plan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub count: usize,
    pub warmup: bool,
    pub threads: usize,
    pub per_trajectory_mean: f64,
    pub per_trajectory_std: f64,
    pub per_replan_mean: f64,
    pub per_replan_std: f64,
    pub latency: LatencyReport,
}

/// Output file schemas, printed by `--schema`.
pub fn schemas() -> Value {
    json!({
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "scenario.json": {
            "schema_version": crate::scenario::SCENARIO_SCHEMA_VERSION,
            "fields": ["schema_version", "robot", "start", "goal_q", "goal?", "gaze_object",
                       "legibility{goals,goal_index,start?}", "nominal (\"derive\" | [[x,y,z]])",
                       "weights", "mpc", "solver", "human{prediction_file|synthesize}", "ground_truth?", "seed?"]
        },
        "prediction.json": ["joint_names", "head_index", "dt", "t0", "frames[[{mean,cov}]]"],
        "robot.json": ["n_joints", "joints[{axis,offset}]", "base_pose{position,orientation[w,x,y,z]}",
                       "tracked_frames", "eef_frame", "velocity_bounds{lower,upper}"],
        "trajectory.json": ["dt", "times", "states", "controls"],
        "trajectory.csv / trace.csv": "time,q0..qn,eef_x,eef_y,eef_z,min_human_dist",
        "diagnostics.json": ["converged", "iterations", "outer_iterations", "total_cost",
                             "max_bound_violation", "cost_history[[iteration,cost]]", "error?"],
        "trace.json": ["dt", "times", "states", "replans[{time,start_step,steps_executed,plan_states,plan_controls,converged,iterations,cost,max_bound_violation,human_means}]", "goal_reached"],
        "timing.json": ["per_replan", "total"],
        "metrics.json": ["dst", "vis", "leg", "nom", "lat", "per_replan_latency", "threshold", "fov_half_angle"],
        "metrics.csv": MetricsReport::CSV_HEADER,
        "aggregate.csv": "metric,mean,std,n",
        "bench.json": ["count", "warmup", "threads", "per_trajectory_mean", "per_trajectory_std",
                       "per_replan_mean", "per_replan_std", "latency{mean,std,per_trajectory,per_replan}"],
        "manifest.json": ["command", "config", "inputs[{path,sha256}]", "seed", "outputs", "version", "schema_version"]
    })
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn load_scenario(path: &Path, config: &RunConfig) -> Result<(ScenarioFile, Scenario)> {
    let mut file = ScenarioFile::load(path)?;
    config.apply(&mut file);
    let scenario = file.resolve(path.parent().unwrap_or(Path::new(".")))?;
    Ok((file, scenario))
}

/// Sorted `scenario_*` subdirectories of `dir`.
fn batch_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("scenario_"))
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no scenario_* directories in {}",
            dir.display()
        )));
    }
    Ok(dirs)
}

fn dir_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Runs `job` over `items` on `threads` workers, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, job: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(job).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&job).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn cmd_gen_scenario(cli: &Cli, config: &RunConfig, duration: f64, count: usize) -> Result<Vec<PathBuf>> {
    if count == 0 {
        return Err(Error::InvalidInput("--count must be at least 1".into()));
    }
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out_dir();
    let single_file = out.extension().is_some_and(|e| e == "json");
    if single_file && count > 1 {
        return Err(Error::InvalidInput("--out must be a directory when --count > 1".into()));
    }
    let mut written = Vec::new();
    for i in 0..count {
        let params = GenParams {
            seed: seed + i as u64,
            duration,
            weights: config.weights.unwrap_or_default(),
            mpc: config.mpc.unwrap_or_default(),
        };
        let (mut file, prediction) = generate(&params)?;
        if let Some(s) = config.solver {
            file.solver = s;
        }
        let (dir, scenario_name, prefix) = if single_file {
            let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
            let stem = out.file_stem().unwrap().to_string_lossy().into_owned();
            (dir, dir_name(&out), format!("{stem}."))
        } else if count > 1 {
            (
                out.join(format!("scenario_{i:03}")),
                "scenario.json".into(),
                String::new(),
            )
        } else {
            (out.clone(), "scenario.json".into(), String::new())
        };
        let robot_name = format!("{prefix}robot.json");
        let prediction_name = format!("{prefix}prediction.json");
        file.robot = robot_name.clone();
        file.human = HumanSource::PredictionFile(prediction_name.clone().into());

        let mut outputs = Outputs::default();
        outputs.json(dir.join(&robot_name), &crate::kinematics::RobotModel::default_arm())?;
        outputs.json(dir.join(&prediction_name), &prediction)?;
        outputs.json(dir.join(&scenario_name), &file)?;
        let manifest = RunManifest::new(
            "gen-scenario",
            json!({ "params": params, "solver": file.solver }),
            Some(params.seed),
        );
        manifest.write(&dir, &format!("{prefix}manifest.json"), &mut outputs)?;
        written.extend(outputs.paths);
    }
    Ok(written)
}

fn cmd_plan(cli: &Cli, config: &RunConfig, args: &ScenarioArgs) -> Result<Vec<PathBuf>> {
    let (file, scenario) = load_scenario(&args.scenario, config)?;
    let out = cli.out_dir();
    let mut manifest = RunManifest::new("plan", json!({ "scenario": file }), cli.seed.or(file.seed));
    manifest.scenario_inputs(&args.scenario, &file)?;
    let mut outputs = Outputs::default();
    let mut solver = Solver::new(scenario.solver);

    let result = match plan_one_shot(&scenario, &mut solver) {
        Ok(r) => r,
        Err(e) => {
            let diagnostics = PlanDiagnostics {
                converged: false,
                iterations: 0,
                outer_iterations: 0,
                total_cost: f64::NAN,
                max_bound_violation: f64::NAN,
                cost_history: Vec::new(),
                error: Some(e.to_string()),
            };
            outputs.json(out.join("diagnostics.json"), &diagnostics)?;
            manifest.write(&out, "manifest.json", &mut outputs)?;
            return Err(e);
        }
    };
    if !result.converged {
        log::warn!("plan did not converge in {} iterations", result.iterations);
    }
    let trace = ExecutionTrace::from_plan(scenario.mpc.dt, result.states.clone());
    let human = scenario.actual_human();
    outputs.text(
        out.join("trajectory.csv"),
        &trace.to_csv(&scenario.model, Some(&human))?,
    )?;
    outputs.json(
        out.join("trajectory.json"),
        &PlannedTrajectory {
            dt: trace.dt,
            times: trace.times.clone(),
            states: result.states.iter().map(|x| x.iter().copied().collect()).collect(),
            controls: result.controls.iter().map(|u| u.iter().copied().collect()).collect(),
        },
    )?;
    outputs.json(
        out.join("diagnostics.json"),
        &PlanDiagnostics {
            converged: result.converged,
            iterations: result.iterations,
            outer_iterations: result.outer_iterations,
            total_cost: result.total_cost,
            max_bound_violation: result.max_bound_violation,
            cost_history: result.cost_history.clone(),
            error: None,
        },
    )?;
    outputs.json(
        out.join("timing.json"),
        &Timing {
            per_replan: vec![result.wall_time],
            total: result.wall_time,
        },
    )?;
    manifest.write(&out, "manifest.json", &mut outputs)?;
    Ok(outputs.paths)
}

/// One discarded horizon solve so allocator and caches are warm before timing.
fn warm_up(scenario: &Scenario, solver: &mut Solver) -> Result<()> {
    solver.config = scenario.solver;
    let problem = build_problem(scenario, 0, scenario.start.clone(), scenario.mpc.horizon_steps())?;
    solver.solve(&problem, None).map(|_| ())
}

fn simulate_one(
    cli: &Cli,
    config: &RunConfig,
    path: &Path,
    out: &Path,
    horizon: Option<f64>,
    replan: Option<f64>,
) -> Result<Vec<PathBuf>> {
    let mut file = ScenarioFile::load(path)?;
    config.apply(&mut file);
    if let Some(h) = horizon {
        file.mpc.horizon = h;
    }
    if let Some(r) = replan {
        file.mpc.replan_period = r;
    }
    let scenario = file.resolve(path.parent().unwrap_or(Path::new(".")))?;
    let mut manifest = RunManifest::new(
        "simulate",
        json!({ "scenario": file, "warmup": cli.warmup() }),
        cli.seed.or(file.seed),
    );
    manifest.scenario_inputs(path, &file)?;
    let mut outputs = Outputs::default();
    let mut solver = Solver::new(scenario.solver);
    if cli.warmup() {
        warm_up(&scenario, &mut solver)?;
    }
    let human = scenario.actual_human();
    let (trace, failure) = match run_mpc_with(&scenario, &mut solver) {
        Ok(t) => (t, None),
        Err(Error::MpcAborted { time, message, partial }) => {
            let trace = (*partial).clone();
            (trace, Some(Error::MpcAborted { time, message, partial }))
        }
        Err(e) => return Err(e),
    };
    outputs.json(out.join("trace.json"), &trace)?;
    outputs.text(out.join("trace.csv"), &trace.to_csv(&scenario.model, Some(&human))?)?;
    outputs.json(out.join("timing.json"), &trace.timing)?;
    manifest.write(out, "manifest.json", &mut outputs)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(outputs.paths),
    }
}

fn cmd_simulate(
    cli: &Cli,
    config: &RunConfig,
    args: &ScenarioArgs,
    horizon: Option<f64>,
    replan: Option<f64>,
) -> Result<Vec<PathBuf>> {
    let out = cli.out_dir();
    if !args.scenario.is_dir() {
        return simulate_one(cli, config, &args.scenario, &out, horizon, replan);
    }
    let dirs = batch_dirs(&args.scenario)?;
    let results = parallel_map(&dirs, cli.threads, |d| {
        simulate_one(
            cli,
            config,
            &d.join("scenario.json"),
            &out.join(dir_name(d)),
            horizon,
            replan,
        )
    });
    let mut written = Vec::new();
    for r in results {
        written.extend(r?);
    }
    Ok(written)
}

fn eval_one(
    config: &RunConfig,
    scenario_path: &Path,
    trace_path: &Path,
    timing_path: Option<&Path>,
    against_prediction: bool,
) -> Result<(ScenarioFile, MetricsReport)> {
    let (file, scenario) = load_scenario(scenario_path, config)?;
    let mut trace: ExecutionTrace = read_json(trace_path)?;
    if let Some(p) = timing_path {
        trace.timing = read_json(p)?;
    }
    let human = if against_prediction {
        scenario.prediction.mean_motion()
    } else {
        scenario.actual_human()
    };
    let report = evaluate(&scenario, &trace, &human, &config.metrics)?;
    Ok((file, report))
}

fn cmd_eval(
    cli: &Cli,
    config: &RunConfig,
    scenario: Option<&Path>,
    trace: Option<&Path>,
    timing: Option<&Path>,
    batch: Option<&Path>,
    against_prediction: bool,
) -> Result<Vec<PathBuf>> {
    let out = cli.out_dir();
    let mut outputs = Outputs::default();
    let mut manifest = RunManifest::new(
        "eval",
        json!({ "metrics": config.metrics, "against_prediction": against_prediction }),
        cli.seed,
    );

    if let Some(dir) = batch {
        let mut csv = format!("scenario,{}\n", MetricsReport::CSV_HEADER);
        let mut reports = Vec::new();
        for d in batch_dirs(dir)? {
            let timing = d.join("timing.json");
            let timing = timing.exists().then_some(timing);
            let (s, t) = (d.join("scenario.json"), d.join("trace.json"));
            let (_, report) = eval_one(config, &s, &t, timing.as_deref(), against_prediction)?;
            for p in [Some(s), Some(t), timing].into_iter().flatten() {
                manifest.input(&p)?;
            }
            csv.push_str(&format!("{},{}\n", dir_name(&d), report.csv_row()));
            reports.push(report);
        }
        outputs.json(out.join("metrics.json"), &reports)?;
        outputs.text(out.join("metrics.csv"), &csv)?;
        outputs.text(out.join("aggregate.csv"), &aggregate_csv(&reports))?;
    } else {
        let scenario =
            scenario.ok_or_else(|| Error::InvalidInput("eval needs --scenario and --trace, or --batch".into()))?;
        let trace = trace.ok_or_else(|| Error::InvalidInput("eval needs --trace".into()))?;
        let (file, report) = eval_one(config, scenario, trace, timing, against_prediction)?;
        manifest.scenario_inputs(scenario, &file)?;
        manifest.input(trace)?;
        if let Some(t) = timing {
            manifest.input(t)?;
        }
        println!(
            "dst {:.4} vis {:.4} leg {:.4} nom {:.4} (threshold {} m, fov half-angle {:.4} rad)",
            report.dst, report.vis, report.leg, report.nom, report.threshold, report.fov_half_angle
        );
        outputs.json(out.join("metrics.json"), &report)?;
        outputs.text(
            out.join("metrics.csv"),
            &format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row()),
        )?;
    }
    manifest.write(&out, "manifest.json", &mut outputs)?;
    Ok(outputs.paths)
}

/// `metric,mean,std,n` rows over a batch; std is the sample deviation.
pub fn aggregate_csv(reports: &[MetricsReport]) -> String {
    type Column = (&'static str, fn(&MetricsReport) -> Option<f64>);
    let columns: [Column; 5] = [
        ("dst", |r| Some(r.dst)),
        ("vis", |r| Some(r.vis)),
        ("leg", |r| Some(r.leg)),
        ("nom", |r| Some(r.nom)),
        ("lat", |r| r.lat),
    ];
    let mut csv = String::from("metric,mean,std,n\n");
    for (name, get) in columns {
        let xs: Vec<f64> = reports.iter().filter_map(get).collect();
        if xs.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&xs);
        csv.push_str(&format!("{name},{mean},{std},{}\n", xs.len()));
    }
    csv
}

/// Runs `scenarios` and summarizes their planning latency. With `warmup`,
/// each worker first plans a discarded copy of its first scenario.
pub fn bench_scenarios(scenarios: &[Scenario], threads: usize, warmup: bool) -> Result<BenchReport> {
    if scenarios.is_empty() {
        return Err(Error::InvalidInput("bench needs at least one scenario".into()));
    }
    let threads = threads.clamp(1, scenarios.len());
    let chunk = scenarios.len().div_ceil(threads);
    let groups: Vec<&[Scenario]> = scenarios.chunks(chunk).collect();
    let traces = parallel_map(&groups, threads, |group| -> Result<Vec<ExecutionTrace>> {
        let mut solver = Solver::new(SolverConfig::default());
        if warmup {
            run_mpc_with(&group[0], &mut solver)?;
        }
        group.iter().map(|s| run_mpc_with(s, &mut solver)).collect()
    });
    let traces: Vec<ExecutionTrace> = traces
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let latency = latency_metric(&traces)?;
    let (per_replan_mean, per_replan_std) = mean_std(&latency.per_replan);
    Ok(BenchReport {
        count: traces.len(),
        warmup,
        threads,
        per_trajectory_mean: latency.mean,
        per_trajectory_std: latency.std,
        per_replan_mean,
        per_replan_std,
        latency,
    })
}

fn cmd_bench(cli: &Cli, config: &RunConfig, count: usize, scenarios: Option<&Path>) -> Result<Vec<PathBuf>> {
    let out = cli.out_dir();
    let seed = cli.seed.unwrap_or(0);
    let mut manifest = RunManifest::new(
        "bench",
        json!({ "count": count, "warmup": cli.warmup(), "threads": cli.threads, "config": config }),
        Some(seed),
    );
    let batch: Vec<Scenario> = match scenarios {
        Some(dir) => {
            let mut v = Vec::new();
            for d in batch_dirs(dir)? {
                let path = d.join("scenario.json");
                let (file, s) = load_scenario(&path, config)?;
                manifest.scenario_inputs(&path, &file)?;
                v.push(s);
            }
            v
        }
        None => {
            if count == 0 {
                return Err(Error::InvalidInput("--count must be at least 1".into()));
            }
            (0..count as u64)
                .map(|i| {
                    let params = GenParams {
                        seed: seed + i,
                        weights: config.weights.unwrap_or_default(),
                        mpc: config.mpc.unwrap_or_default(),
                        ..GenParams::default()
                    };
                    let mut s = generate_resolved(&params)?;
                    if let Some(c) = config.solver {
                        s.solver = c;
                    }
                    Ok(s)
                })
                .collect::<Result<_>>()?
        }
    };
    let started = Instant::now();
    let report = bench_scenarios(&batch, cli.threads, cli.warmup())?;
    println!(
        "{} trajectories: {:.4} s ({:.4}) per trajectory, {:.2} ms ({:.2}) per replan, wall {:.2} s",
        report.count,
        report.per_trajectory_mean,
        report.per_trajectory_std,
        report.per_replan_mean * 1e3,
        report.per_replan_std * 1e3,
        started.elapsed().as_secs_f64()
    );
    let mut outputs = Outputs::default();
    outputs.json(out.join("bench.json"), &report)?;
    manifest.write(&out, "manifest.json", &mut outputs)?;
    Ok(outputs.paths)
}

/// Executes a parsed command line and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    if cli.schema {
        println!(
            "{}",
            serde_json::to_string_pretty(&schemas()).expect("static schema serializes")
        );
        return Ok(Vec::new());
    }
    if cli.threads == 0 {
        return Err(Error::InvalidInput("--threads must be at least 1".into()));
    }
    let config = load_config(cli)?;
    config.metrics.validate()?;
    let Some(command) = &cli.command else {
        return Err(Error::InvalidInput("no command given (try --help)".into()));
    };
    match command {
        Command::GenScenario { duration, count } => cmd_gen_scenario(cli, &config, *duration, *count),
        Command::Plan(args) => cmd_plan(cli, &config, args),
        Command::Simulate {
            scenario,
            horizon,
            replan,
        } => cmd_simulate(cli, &config, scenario, *horizon, *replan),
        Command::Eval {
            scenario,
            trace,
            timing,
            batch,
            against_prediction,
        } => cmd_eval(
            cli,
            &config,
            scenario.as_deref(),
            trace.as_deref(),
            timing.as_deref(),
            batch.as_deref(),
            *against_prediction,
        ),
        Command::Bench { count, scenarios } => cmd_bench(cli, &config, *count, scenarios.as_deref()),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("ANTICIP_MPC_LOG", "warn")).try_init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
