//! Configuration handling and the experiment commands behind the binary.
//!
//! A run is described by a JSON [`RunConfig`]. Command-line flags and `--set`
//! overrides are folded into it before anything runs, and the result is written to
//! `effective_config.json` in the output directory, so `--config effective_config.json`
//! repeats the run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{
    build_intersection, validate_scenario, GeometryConfig, IntersectionModel, LaneId, Movement,
    SafetyGapTable, Vehicle, VehicleId, VehicleState,
};
use crate::schedule::{improvement_rate, interpret_order, Instance, KinematicLimits};
use crate::search::{
    dump_tree, enumerate_optimal, fifo_order, histogram, mcts_search, percentile_rank,
    EnumerationOptions, MctsConfig, PassingOrder, RolloutPolicy, DEFAULT_ENUMERATION_CAP,
};
use crate::sim::{
    random_snapshot, simulate, write_trace_csv, ExperimentResult, ScenarioConfig, SnapshotSpec,
    StrategyKind,
};

#[derive(Debug, Parser)]
#[command(name = "coopdrive", version, about = "Passing-order scheduling experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config value by dotted path, e.g. `mcts.omega=0.5` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Seed for scenarios, simulations and the search.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Simulation strategies, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub strategy: Vec<StrategyKind>,
    #[arg(long, global = true)]
    pub rollout: Option<RolloutPolicy>,
    #[arg(long, global = true)]
    pub budget_nodes: Option<u64>,
    /// Wall-clock budget per search; results then depend on machine speed.
    #[arg(long, global = true, value_name = "SECONDS")]
    pub budget_time: Option<f64>,
    /// Worker threads for independent runs; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Add wall-clock columns to the outputs.
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Rolling-horizon simulation for every rate, seed and strategy.
    Simulate,
    /// FIFO, MCTS and (when feasible) the exact optimum on one static scenario.
    Search,
    /// Delay of every valid order of a static scenario.
    Enumerate,
    /// Mean improvement over FIFO across a parameter or budget grid.
    Sweep,
    /// Search tree of one MCTS run as DOT and JSON.
    DumpTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Flags that shape output but are not part of the run configuration.
#[derive(Debug, Clone)]
pub struct OutputOptions {
    pub dir: PathBuf,
    pub format: Format,
    pub timing: bool,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: u32,
    pub lane: LaneId,
    /// Defaults to the lane's movement.
    #[serde(default)]
    pub movement: Option<Movement>,
    /// Distance to the conflict zone, meters.
    pub distance: f64,
    /// Defaults to `v_max`.
    #[serde(default)]
    pub speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// Explicit vehicle set; takes precedence over `random`.
    pub vehicles: Option<Vec<VehicleSpec>>,
    pub random: SnapshotSpec,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            vehicles: None,
            random: SnapshotSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// Vehicles per lane per hour; one run per rate.
    pub arrival_rates: Vec<f64>,
    pub lane_rates: BTreeMap<LaneId, f64>,
    pub horizon: f64,
    pub replan_period: f64,
    pub time_step: f64,
    pub min_entry_gap: f64,
    pub strategies: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
    /// Also write a per-vehicle trace for every run.
    pub write_traces: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            arrival_rates: vec![150.0, 300.0, 450.0],
            lane_rates: BTreeMap::new(),
            horizon: 1200.0,
            replan_period: 2.0,
            time_step: 0.1,
            min_entry_gap: 10.0,
            strategies: vec![StrategyKind::Fifo, StrategyKind::Mcts],
            seeds: vec![0],
            write_traces: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub omega: Vec<f64>,
    pub c: Vec<f64>,
    pub budgets: Vec<u64>,
    /// One scenario per seed: the configured scenario with this seed, searched with it.
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            omega: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            c: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            budgets: Vec::new(),
            seeds: (0..5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerationSection {
    pub cap: u64,
    pub bins: usize,
    /// Extra orders to rank, written like `3-1-2`.
    pub rank_orders: Vec<String>,
    /// Write the delay of every order, not only the histogram.
    pub write_all: bool,
}

impl Default for EnumerationSection {
    fn default() -> Self {
        EnumerationSection {
            cap: DEFAULT_ENUMERATION_CAP,
            bins: 200,
            rank_orders: Vec::new(),
            write_all: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub gaps: SafetyGapTable,
    pub kinematics: KinematicLimits,
    pub mcts: MctsConfig,
    pub scenario: ScenarioSection,
    pub simulation: SimulationSection,
    pub sweep: SweepSection,
    pub enumeration: EnumerationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometryConfig::default(),
            gaps: SafetyGapTable::default(),
            kinematics: KinematicLimits::default(),
            // node budget only, so runs repeat exactly
            mcts: MctsConfig::with_nodes(1000),
            scenario: ScenarioSection::default(),
            simulation: SimulationSection::default(),
            sweep: SweepSection::default(),
            enumeration: EnumerationSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Apply `key=value` overrides; the key must name an existing field.
    pub fn with_overrides(&self, overrides: &[String]) -> anyhow::Result<Self> {
        let mut root = serde_json::to_value(self)?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("override `{item}` is not of the form key=value"))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            *lookup(&mut root, key)? = value;
        }
        serde_json::from_value(root).context("applying overrides")
    }

    /// Fold command-line flags into the configuration.
    pub fn with_flags(mut self, cli: &Cli) -> Self {
        if let Some(seed) = cli.seed {
            self.mcts.rng_seed = seed;
            self.scenario.random.seed = seed;
            self.simulation.seeds = vec![seed];
            self.sweep.seeds = vec![seed];
        }
        if !cli.strategy.is_empty() {
            self.simulation.strategies = cli.strategy.clone();
        }
        if let Some(r) = cli.rollout {
            self.mcts.rollout_policy = r;
        }
        if let Some(n) = cli.budget_nodes {
            self.mcts.budget_nodes = Some(n);
        }
        if let Some(t) = cli.budget_time {
            self.mcts.budget_time = Some(t);
        }
        self
    }

    pub fn model(&self) -> anyhow::Result<IntersectionModel> {
        Ok(build_intersection(&self.geometry)?)
    }

    /// The static scenario: the explicit vehicle list or a random snapshot.
    pub fn snapshot(&self, model: &IntersectionModel) -> anyhow::Result<Vec<Vehicle>> {
        let limits = self.kinematics;
        let vehicles = match &self.scenario.vehicles {
            Some(list) => list
                .iter()
                .map(|s| {
                    let movement = match s.movement {
                        Some(m) => m,
                        None => model.movement(s.lane)?,
                    };
                    Ok(Vehicle {
                        id: VehicleId(s.id),
                        lane: s.lane,
                        movement,
                        distance_to_zone: s.distance,
                        speed: s.speed.unwrap_or(limits.v_max),
                        v_max: limits.v_max,
                        a_max: limits.a_max,
                        state: VehicleState::Approaching,
                    })
                })
                .collect::<crate::Result<Vec<_>>>()?,
            None => random_snapshot(model, &self.scenario.random, limits)?,
        };
        let problems = validate_scenario(model, &vehicles);
        if !problems.is_empty() {
            let list: Vec<String> = problems.iter().map(ToString::to_string).collect();
            bail!("scenario is inconsistent: {}", list.join("; "));
        }
        Ok(vehicles)
    }

    pub fn instance(&self, model: &IntersectionModel) -> anyhow::Result<Instance> {
        let vehicles = self.snapshot(model)?;
        Ok(Instance::from_vehicles(model, &vehicles, self.gaps, None, 0.0)?)
    }

    pub fn scenario_config(&self, model: &IntersectionModel, rate: f64, seed: u64) -> ScenarioConfig {
        let s = &self.simulation;
        ScenarioConfig {
            model: model.clone(),
            gaps: self.gaps,
            arrival_rate: rate,
            lane_rates: s.lane_rates.clone(),
            horizon: s.horizon,
            replan_period: s.replan_period,
            time_step: s.time_step,
            rng_seed: seed,
            kinematics: self.kinematics,
            min_entry_gap: s.min_entry_gap,
        }
    }
}

fn lookup<'a>(root: &'a mut Value, key: &str) -> anyhow::Result<&'a mut Value> {
    let mut cur = root;
    for (depth, part) in key.split('.').enumerate() {
        let prefix = || key.split('.').take(depth).collect::<Vec<_>>().join(".");
        cur = match cur {
            Value::Object(map) => map
                .get_mut(part)
                .ok_or_else(|| anyhow!("unknown config key `{key}`"))?,
            Value::Array(items) => {
                let i: usize = part
                    .parse()
                    .map_err(|_| anyhow!("`{}` is a list; `{part}` is not an index", prefix()))?;
                items
                    .get_mut(i)
                    .ok_or_else(|| anyhow!("index {i} out of range in `{}`", prefix()))?
            }
            Value::Null => bail!("`{}` is unset; override it as a whole", prefix()),
            _ => bail!("unknown config key `{key}`"),
        };
    }
    Ok(cur)
}

/// Rows of named columns, written as CSV or as a JSON array of objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> anyhow::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| match v {
                Value::Null => String::new(),
                Value::String(s) => s.clone(),
                other => other.to_string(),
            }))?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        let rows: Vec<serde_json::Map<String, Value>> = self
            .rows
            .iter()
            .map(|r| self.columns.iter().cloned().zip(r.iter().cloned()).collect())
            .collect();
        Ok(serde_json::to_string_pretty(&rows)? + "\n")
    }

    fn write(&self, opts: &OutputOptions, stem: &str) -> anyhow::Result<PathBuf> {
        let text = match opts.format {
            Format::Csv => self.to_csv()?,
            Format::Json => self.to_json()?,
        };
        write_file(&opts.dir.join(format!("{stem}.{}", opts.format.extension())), &text)
    }
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn num(x: f64) -> Value {
    Value::from(x)
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, Value::from)
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(f))
}

/// Simulate every (rate, seed, strategy); FIFO runs double as the paired baseline.
pub fn cmd_simulate(config: &RunConfig, opts: &OutputOptions) -> anyhow::Result<Vec<PathBuf>> {
    let model = config.model()?;
    let sim = &config.simulation;
    if sim.arrival_rates.is_empty() || sim.seeds.is_empty() || sim.strategies.is_empty() {
        bail!("simulation needs at least one arrival rate, seed and strategy");
    }
    config.mcts.validate()?;
    let cases: Vec<(f64, u64)> = sim
        .arrival_rates
        .iter()
        .flat_map(|&r| sim.seeds.iter().map(move |&s| (r, s)))
        .collect();

    type Run = (StrategyKind, ExperimentResult, f64);
    let outcomes: Vec<anyhow::Result<(Vec<Run>, f64)>> = with_pool(opts.jobs, || {
        cases
            .par_iter()
            .map(|&(rate, seed)| {
                let scenario = config.scenario_config(&model, rate, seed);
                let mut runs = Vec::new();
                for &kind in &sim.strategies {
                    let strategy = kind.with(&config.mcts, config.enumeration.cap);
                    let start = Instant::now();
                    let r = simulate(&scenario, &strategy)
                        .with_context(|| format!("simulating {kind} at rate {rate}, seed {seed}"))?;
                    runs.push((kind, r, start.elapsed().as_secs_f64()));
                }
                let fifo_delay = match runs.iter().find(|r| r.0 == StrategyKind::Fifo) {
                    Some(r) => r.1.metrics.average_delay,
                    None => {
                        simulate(&scenario, &crate::sim::Strategy::Fifo)?
                            .metrics
                            .average_delay
                    }
                };
                for run in &mut runs {
                    run.1.metrics.eta = improvement_rate(fifo_delay, run.1.metrics.average_delay)?;
                }
                Ok((runs, rate))
            })
            .collect()
    })?;

    let mut columns = vec![
        "arrival_rate",
        "seed",
        "strategy",
        "generated",
        "throughput",
        "total_delay",
        "average_delay",
        "eta",
        "mean_cycle_eta",
        "min_cycle_eta",
        "nodes_mean",
        "nodes_max",
        "replan_count",
        "replan_failures",
    ];
    if opts.timing {
        columns.push("elapsed_s");
    }
    let mut table = Table::new(&columns);
    let mut files = Vec::new();
    for ((_, seed), outcome) in cases.iter().zip(outcomes) {
        let (runs, rate) = outcome?;
        for (kind, r, elapsed) in runs {
            let m = &r.metrics;
            let mut row = vec![
                num(rate),
                Value::from(*seed),
                Value::from(kind.to_string()),
                Value::from(m.generated),
                Value::from(m.throughput),
                num(m.total_delay),
                num(m.average_delay),
                num(m.eta),
                num(m.mean_cycle_eta),
                num(m.min_cycle_eta),
                num(m.nodes_per_replan.mean),
                num(m.nodes_per_replan.max),
                Value::from(m.replan_count),
                Value::from(m.replan_failures),
            ];
            if opts.timing {
                row.push(num(elapsed));
            }
            table.push(row);
            if sim.write_traces {
                let mut buf = Vec::new();
                write_trace_csv(&r.trace, &mut buf)?;
                let path = opts
                    .dir
                    .join("runs")
                    .join(format!("rate-{rate}_seed-{seed}_{kind}"))
                    .join("trace.csv");
                files.push(write_file(&path, &String::from_utf8(buf)?)?);
            }
        }
    }
    files.push(table.write(opts, "metrics").context("writing metrics")?);
    Ok(files)
}

/// Summary of FIFO, MCTS and, under the enumeration cap, the optimum.
pub fn cmd_search(config: &RunConfig, opts: &OutputOptions) -> anyhow::Result<Vec<PathBuf>> {
    let model = config.model()?;
    let instance = config.instance(&model)?;
    let fifo = fifo_order(&instance);
    let j_fifo = interpret_order(&instance, &fifo.sequence)?.total_delay;
    let mut mcfg = config.mcts.clone();
    mcfg.record_log = true;
    let report = mcts_search(&instance, &mcfg)?;
    let optimum = match instance.order_count() {
        Some(n) if n <= config.enumeration.cap as u128 => Some(enumerate_optimal(
            &instance,
            &EnumerationOptions {
                cap: config.enumeration.cap,
                collect_delays: false,
            },
        )?),
        _ => {
            log::info!(
                "skipping enumeration: about 10^{:.2} orders exceed the cap",
                instance.order_count_log10()
            );
            None
        }
    };
    let j_opt = optimum.as_ref().map(|e| e.best_delay);

    let mut columns = vec![
        "vehicles",
        "orders_log10",
        "j_fifo",
        "j_mcts",
        "j_opt",
        "eta",
        "eta_opt",
        "nodes",
        "rollouts",
        "exhausted",
        "mcts_order",
        "fifo_order",
    ];
    if opts.timing {
        columns.push("elapsed_s");
    }
    let mut summary = Table::new(&columns);
    let mut row = vec![
        Value::from(instance.len()),
        num(instance.order_count_log10()),
        num(j_fifo),
        num(report.best_delay),
        opt_num(j_opt),
        num(improvement_rate(j_fifo, report.best_delay)?),
        opt_num(j_opt.map(|j| improvement_rate(j_fifo, j)).transpose()?),
        Value::from(report.nodes_expanded),
        Value::from(report.rollouts),
        Value::from(report.exhausted),
        Value::from(report.best_order.to_string()),
        Value::from(fifo.to_string()),
    ];
    if opts.timing {
        row.push(num(report.elapsed));
    }
    summary.push(row);

    let mut columns = vec!["iteration", "best_delay", "nodes_expanded"];
    if opts.timing {
        columns.push("elapsed_s");
    }
    let mut log = Table::new(&columns);
    for it in &report.iterations {
        let mut row = vec![
            Value::from(it.iteration),
            num(it.best_delay),
            Value::from(it.nodes_expanded),
        ];
        if opts.timing {
            row.push(num(it.elapsed));
        }
        log.push(row);
    }
    Ok(vec![
        summary.write(opts, "metrics").context("writing metrics")?,
        log.write(opts, "iterations").context("writing iteration log")?,
    ])
}

/// Delay distribution of all valid orders with ranks of FIFO, MCTS and supplied orders.
pub fn cmd_enumerate(config: &RunConfig, opts: &OutputOptions) -> anyhow::Result<Vec<PathBuf>> {
    let model = config.model()?;
    let instance = config.instance(&model)?;
    let e = enumerate_optimal(
        &instance,
        &EnumerationOptions {
            cap: config.enumeration.cap,
            collect_delays: true,
        },
    )?;
    let delays = e.delays.as_deref().unwrap_or_default();

    let mut ranked: Vec<(String, PassingOrder)> = vec![
        ("optimum".into(), e.best_order.clone()),
        ("fifo".into(), fifo_order(&instance)),
        ("mcts".into(), mcts_search(&instance, &config.mcts)?.best_order),
    ];
    for (k, text) in config.enumeration.rank_orders.iter().enumerate() {
        let order: PassingOrder = text.parse()?;
        ranked.push((format!("supplied_{k}"), order));
    }
    let mut ranks = Table::new(&["label", "order", "delay", "better", "rank", "total", "fraction"]);
    for (label, order) in ranked {
        if order.len() != instance.len() {
            bail!("order `{order}` for `{label}` does not cover all {} vehicles", instance.len());
        }
        let delay = interpret_order(&instance, &order.sequence)
            .with_context(|| format!("interpreting order `{order}`"))?
            .total_delay;
        let r = percentile_rank(delays, delay);
        ranks.push(vec![
            Value::from(label),
            Value::from(order.to_string()),
            num(delay),
            Value::from(r.better),
            Value::from(r.rank),
            Value::from(r.total),
            num(r.fraction),
        ]);
    }

    let mut hist = Table::new(&["bin", "lower", "upper", "count"]);
    for (k, b) in histogram(delays, config.enumeration.bins).iter().enumerate() {
        hist.push(vec![Value::from(k), num(b.lower), num(b.upper), Value::from(b.count)]);
    }
    let mut files = vec![
        ranks.write(opts, "metrics").context("writing ranks")?,
        hist.write(opts, "histogram").context("writing histogram")?,
    ];
    if config.enumeration.write_all {
        let mut all = Table::new(&["order_index", "delay"]);
        for (k, &d) in delays.iter().enumerate() {
            all.push(vec![Value::from(k), num(d)]);
        }
        files.push(all.write(opts, "delays").context("writing delays")?);
    }
    Ok(files)
}

/// Improvement over FIFO of one configured MCTS on the scenario of `seed`.
pub fn scenario_eta(config: &RunConfig, model: &IntersectionModel, mcts: &MctsConfig, seed: u64) -> anyhow::Result<f64> {
    let mut cfg = config.clone();
    cfg.scenario.random.seed = seed;
    let instance = cfg.instance(model)?;
    let mut mcts = mcts.clone();
    mcts.rng_seed = seed;
    let report = mcts_search(&instance, &mcts)?;
    Ok(improvement_rate(report.fifo_delay, report.best_delay)?)
}

fn eta_stats(etas: &[f64]) -> (f64, f64) {
    let mean = etas.iter().sum::<f64>() / etas.len() as f64;
    let min = etas.iter().copied().fold(f64::INFINITY, f64::min);
    (mean, min)
}

/// Mean η over the sweep seeds for every (ω, C) pair and every budget.
pub fn cmd_sweep(config: &RunConfig, opts: &OutputOptions) -> anyhow::Result<Vec<PathBuf>> {
    let model = config.model()?;
    let sw = &config.sweep;
    let grid: Vec<(f64, f64)> = sw
        .omega
        .iter()
        .flat_map(|&w| sw.c.iter().map(move |&c| (w, c)))
        .collect();
    if grid.is_empty() && sw.budgets.is_empty() {
        bail!("sweep grid is empty: set sweep.omega and sweep.c, or sweep.budgets");
    }
    if sw.seeds.is_empty() {
        bail!("sweep needs at least one seed");
    }
    let mut files = Vec::new();
    let evaluate = |mcts: MctsConfig| -> anyhow::Result<Vec<f64>> {
        mcts.validate()?;
        sw.seeds
            .iter()
            .map(|&s| scenario_eta(config, &model, &mcts, s))
            .collect()
    };

    if !grid.is_empty() {
        let results: Vec<anyhow::Result<Vec<f64>>> = with_pool(opts.jobs, || {
            grid.par_iter()
                .map(|&(omega, c)| evaluate(MctsConfig { omega, c, ..config.mcts.clone() }))
                .collect()
        })?;
        let mut table = Table::new(&["omega", "c", "mean_eta", "min_eta", "scenarios"]);
        for (&(omega, c), etas) in grid.iter().zip(results) {
            let etas = etas.with_context(|| format!("sweep point omega={omega}, c={c}"))?;
            let (mean, min) = eta_stats(&etas);
            table.push(vec![num(omega), num(c), num(mean), num(min), Value::from(etas.len())]);
        }
        files.push(table.write(opts, "metrics").context("writing sweep matrix")?);
    }
    if !sw.budgets.is_empty() {
        let results: Vec<anyhow::Result<Vec<f64>>> = with_pool(opts.jobs, || {
            sw.budgets
                .par_iter()
                .map(|&b| {
                    evaluate(MctsConfig {
                        budget_nodes: Some(b),
                        ..config.mcts.clone()
                    })
                })
                .collect()
        })?;
        let mut table = Table::new(&["budget_nodes", "mean_eta", "min_eta", "scenarios"]);
        for (&b, etas) in sw.budgets.iter().zip(results) {
            let etas = etas.with_context(|| format!("sweep budget {b}"))?;
            let (mean, min) = eta_stats(&etas);
            table.push(vec![Value::from(b), num(mean), num(min), Value::from(etas.len())]);
        }
        files.push(table.write(opts, "budgets").context("writing budget sweep")?);
    }
    Ok(files)
}

pub fn cmd_dump_tree(config: &RunConfig, opts: &OutputOptions) -> anyhow::Result<Vec<PathBuf>> {
    let model = config.model()?;
    let instance = config.instance(&model)?;
    let mut mcfg = config.mcts.clone();
    mcfg.keep_tree = true;
    let dump = dump_tree(&mcts_search(&instance, &mcfg)?)?;
    Ok(vec![
        write_file(&opts.dir.join("tree.dot"), &dump.dot)?,
        write_file(&opts.dir.join("tree.json"), &(dump.json + "\n"))?,
    ])
}

/// Resolve the configuration, echo it, and run the command. Returns the written files.
pub fn run(cli: &Cli) -> anyhow::Result<Vec<PathBuf>> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let config = base.with_overrides(&cli.overrides)?.with_flags(cli);
    let opts = OutputOptions {
        dir: cli.out.clone(),
        format: cli.format,
        timing: cli.timing,
        jobs: cli.jobs,
    };
    fs::create_dir_all(&opts.dir).with_context(|| format!("creating {}", opts.dir.display()))?;
    let mut files = vec![write_file(
        &opts.dir.join("effective_config.json"),
        &(serde_json::to_string_pretty(&config)? + "\n"),
    )?];
    let produced = match cli.command {
        Command::Simulate => cmd_simulate(&config, &opts).context("simulate")?,
        Command::Search => cmd_search(&config, &opts).context("search")?,
        Command::Enumerate => cmd_enumerate(&config, &opts).context("enumerate")?,
        Command::Sweep => cmd_sweep(&config, &opts).context("sweep")?,
        Command::DumpTree => cmd_dump_tree(&config, &opts).context("dump-tree")?,
    };
    files.extend(produced);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = RunConfig::default()
            .with_overrides(&[
                "mcts.omega=0.5".into(),
                "mcts.rollout_policy=random".into(),
                "simulation.arrival_rates=[100, 200]".into(),
                "simulation.seeds.0=7".into(),
                "geometry.lanes_per_leg=1".into(),
            ])
            .unwrap();
        assert_eq!(cfg.mcts.omega, 0.5);
        assert_eq!(cfg.mcts.rollout_policy, RolloutPolicy::Random);
        assert_eq!(cfg.simulation.arrival_rates, vec![100.0, 200.0]);
        assert_eq!(cfg.simulation.seeds, vec![7]);
        assert_eq!(cfg.geometry.lanes_per_leg, 1);
    }

    #[test]
    fn overrides_reject_unknown_or_malformed_keys() {
        let base = RunConfig::default();
        for bad in ["mcts.bogus=1", "nothing=2", "mcts.omega", "simulation.seeds.5=1", "mcts.omega.x=1"] {
            assert!(base.with_overrides(&[bad.into()]).is_err(), "{bad}");
        }
        let err = base.with_overrides(&["scenario.vehicles.0=1".into()]).unwrap_err();
        assert!(err.to_string().contains("unset"), "{err}");
        assert!(base.with_overrides(&["mcts.omega=\"high\"".into()]).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::default()
            .with_overrides(&["sweep.budgets=[10,100]".into()])
            .unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: RunConfig = serde_json::from_str(r#"{"mcts": {"c": 0.1}}"#).unwrap();
        assert_eq!(partial.mcts.c, 0.1);
        assert_eq!(partial.mcts.budget_time, None);
        assert!(serde_json::from_str::<RunConfig>(r#"{"mcst": {}}"#).is_err());
    }

    #[test]
    fn seed_flag_reaches_every_section() {
        let cli = Cli::parse_from(["coopdrive", "search", "--seed", "9", "--strategy", "fifo,oracle"]);
        let cfg = RunConfig::default().with_flags(&cli);
        assert_eq!(cfg.mcts.rng_seed, 9);
        assert_eq!(cfg.scenario.random.seed, 9);
        assert_eq!(cfg.simulation.seeds, vec![9]);
        assert_eq!(cfg.sweep.seeds, vec![9]);
        assert_eq!(cfg.simulation.strategies, vec![StrategyKind::Fifo, StrategyKind::Oracle]);
    }

    #[test]
    fn explicit_vehicles_default_movement_and_speed() {
        let mut cfg = RunConfig::default();
        cfg.scenario.vehicles = Some(vec![VehicleSpec {
            id: 4,
            lane: LaneId(2),
            movement: None,
            distance: 30.0,
            speed: None,
        }]);
        let model = cfg.model().unwrap();
        let vs = cfg.snapshot(&model).unwrap();
        assert_eq!(vs[0].movement, Movement::Right);
        assert_eq!(vs[0].speed, 15.0);

        cfg.scenario.vehicles.as_mut().unwrap()[0].movement = Some(Movement::Left);
        let err = cfg.snapshot(&model).unwrap_err();
        assert!(err.to_string().contains("permits only right"), "{err}");
    }

    #[test]
    fn table_writes_csv_and_json() {
        let mut t = Table::new(&["a", "b", "c"]);
        t.push(vec![Value::from(1), Value::from("x,y"), Value::Null]);
        t.push(vec![num(0.5), Value::from(true), num(f64::NAN)]);
        assert_eq!(t.to_csv().unwrap(), "a,b,c\n1,\"x,y\",\n0.5,true,\n");
        let rows: Vec<serde_json::Map<String, Value>> = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0]["b"], Value::from("x,y"));
        assert_eq!(rows[1]["c"], Value::Null);
    }
}
