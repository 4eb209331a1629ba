//! Discrete-time point-queue simulation with rolling replanning.
//!
//! Vehicles arrive at the control-zone boundary by independent per-lane Poisson
//! processes and wait in a point queue until the previous vehicle of their lane is far
//! enough downstream. Inside the control zone every vehicle holds an assigned entry
//! time into the conflict zone and drives at the constant speed that meets it. Every
//! `replan_period` seconds all vehicles that have not yet entered the conflict zone
//! are rescheduled; vehicles that have entered keep their subzone times and seed the
//! occupancy used by the scheduler.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    IntersectionModel, LaneId, Movement, SafetyGapTable, SubzoneId, Vehicle, VehicleId, VehicleState,
};
use crate::schedule::{improvement_rate, interpret_order, Instance, KinematicLimits, OccupancyState};
use crate::search::{
    enumerate_optimal, fifo_order, mcts_search, EnumerationOptions, MctsConfig, PassingOrder,
};

/// Replanning strategy used inside the simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Strategy {
    Fifo,
    Mcts(MctsConfig),
    Oracle { cap: u64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Fifo => "fifo",
            Strategy::Mcts(_) => "mcts",
            Strategy::Oracle { .. } => "oracle",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Strategy kind as named on the command line; parameters come from elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Fifo,
    Mcts,
    Oracle,
}

impl StrategyKind {
    pub fn with(self, mcts: &MctsConfig, enumeration_cap: u64) -> Strategy {
        match self {
            StrategyKind::Fifo => Strategy::Fifo,
            StrategyKind::Mcts => Strategy::Mcts(mcts.clone()),
            StrategyKind::Oracle => Strategy::Oracle { cap: enumeration_cap },
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::Fifo => "fifo",
            StrategyKind::Mcts => "mcts",
            StrategyKind::Oracle => "oracle",
        })
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fifo" => Ok(StrategyKind::Fifo),
            "mcts" => Ok(StrategyKind::Mcts),
            "oracle" => Ok(StrategyKind::Oracle),
            other => Err(Error::InvalidArgument(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub model: IntersectionModel,
    pub gaps: SafetyGapTable,
    /// Arrival rate of every lane, vehicles per lane per hour.
    pub arrival_rate: f64,
    /// Per-lane rates replacing `arrival_rate` for the listed lanes.
    pub lane_rates: BTreeMap<LaneId, f64>,
    pub horizon: f64,
    pub replan_period: f64,
    pub time_step: f64,
    pub rng_seed: u64,
    pub kinematics: KinematicLimits,
    /// Distance the previous vehicle of a lane must have covered before the next one
    /// leaves the point queue, meters.
    pub min_entry_gap: f64,
}

impl ScenarioConfig {
    pub fn new(model: IntersectionModel, arrival_rate: f64, horizon: f64, rng_seed: u64) -> Self {
        ScenarioConfig {
            model,
            gaps: SafetyGapTable::default(),
            arrival_rate,
            lane_rates: BTreeMap::new(),
            horizon,
            replan_period: 2.0,
            time_step: 0.1,
            rng_seed,
            kinematics: KinematicLimits::default(),
            min_entry_gap: 10.0,
        }
    }

    pub fn rate_of(&self, lane: LaneId) -> f64 {
        self.lane_rates.get(&lane).copied().unwrap_or(self.arrival_rate)
    }

    fn replan_steps(&self) -> u64 {
        (self.replan_period / self.time_step).round() as u64
    }

    fn step_count(&self) -> u64 {
        (self.horizon / self.time_step).ceil() as u64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return bad(format!("time_step must be positive, got {}", self.time_step));
        }
        let ratio = self.replan_period / self.time_step;
        if !(self.replan_period > 0.0) || ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-6 {
            return bad(format!(
                "replan_period {} is not a positive multiple of time_step {}",
                self.replan_period, self.time_step
            ));
        }
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return bad(format!("arrival_rate must be >= 0, got {}", self.arrival_rate));
        }
        for (&lane, &r) in &self.lane_rates {
            self.model.movement(lane)?;
            if !(r >= 0.0 && r.is_finite()) {
                return bad(format!("rate of lane {lane} must be >= 0, got {r}"));
            }
        }
        if !(self.min_entry_gap >= 0.0 && self.min_entry_gap.is_finite()) {
            return bad(format!("min_entry_gap must be >= 0, got {}", self.min_entry_gap));
        }
        self.kinematics.validate()?;
        self.gaps.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub id: VehicleId,
    pub lane: LaneId,
    pub time: f64,
}

/// Poisson arrivals on every lane over `[0, horizon)`, merged by time.
///
/// Each lane draws from its own stream of a generator keyed by `rng_seed`, so a lane's
/// arrivals do not depend on the rates of other lanes. Ids follow arrival time.
pub fn generate_arrivals(config: &ScenarioConfig) -> Result<Vec<Arrival>> {
    config.validate()?;
    let mut events: Vec<(f64, LaneId)> = Vec::new();
    for lane in config.model.lanes() {
        let rate = config.rate_of(lane);
        if rate == 0.0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        rng.set_stream(lane.0 as u64);
        let exp = Exp::new(rate / 3600.0).map_err(|e| Error::Config(e.to_string()))?;
        let mut t = 0.0;
        loop {
            t += exp.sample(&mut rng);
            if t >= config.horizon {
                break;
            }
            events.push((t, lane));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(events
        .into_iter()
        .enumerate()
        .map(|(i, (time, lane))| Arrival {
            id: VehicleId(i as u32),
            lane,
            time,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimVehicle {
    pub id: VehicleId,
    pub lane: LaneId,
    pub movement: Movement,
    pub spawn: f64,
    /// Time the vehicle left the point queue.
    pub queue_exit: Option<f64>,
    pub distance: f64,
    pub speed: f64,
    pub assigned_entry: Option<f64>,
    pub realized_entry: Option<f64>,
    pub departure: Option<f64>,
    pub state: VehicleState,
}

impl SimVehicle {
    /// Entry delay against driving the whole control zone at `v_max` from spawn.
    pub fn delay(&self, free_flow: f64) -> Option<f64> {
        self.realized_entry.map(|e| (e - self.spawn - free_flow).max(0.0))
    }
}

/// Vehicle counts by state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Census {
    pub generated: usize,
    pub queued: usize,
    pub approaching: usize,
    pub crossing: usize,
    pub departed: usize,
}

impl Census {
    pub fn is_conserved(&self) -> bool {
        self.generated == self.queued + self.approaching + self.crossing + self.departed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplanRecord {
    pub time: f64,
    pub vehicles: usize,
    pub nodes: u64,
    pub fifo_delay: f64,
    pub delay: f64,
    pub eta: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub max: f64,
}

impl SummaryStats {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut max) = (0usize, 0.0, 0.0f64);
        for v in values {
            n += 1;
            sum += v;
            max = max.max(v);
        }
        SummaryStats {
            mean: if n == 0 { 0.0 } else { sum / n as f64 },
            max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub strategy: String,
    pub generated: usize,
    /// Vehicles that left the conflict zone within the horizon.
    pub throughput: usize,
    pub total_delay: f64,
    pub average_delay: f64,
    /// Improvement of average delay over a FIFO run on the same arrivals.
    pub eta: f64,
    pub mean_cycle_eta: f64,
    pub min_cycle_eta: f64,
    pub nodes_per_replan: SummaryStats,
    pub replan_count: usize,
    pub replan_failures: usize,
}

/// Per-vehicle outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: VehicleId,
    pub lane: LaneId,
    pub movement: Movement,
    pub spawn: f64,
    pub queue_exit: Option<f64>,
    pub assigned_entry: Option<f64>,
    pub realized_entry: Option<f64>,
    pub departure: Option<f64>,
    pub delay: Option<f64>,
    /// Realized subzone arrival times.
    pub arrivals: Vec<(SubzoneId, f64)>,
}

pub struct Simulation {
    config: ScenarioConfig,
    strategy: Strategy,
    arrivals: Vec<Arrival>,
    next_arrival: usize,
    step: u64,
    clock: f64,
    vehicles: Vec<SimVehicle>,
    queues: Vec<VecDeque<usize>>,
    last_entered: Vec<Option<usize>>,
    approaching: Vec<usize>,
    crossing: Vec<usize>,
    departed: usize,
    /// Subzone use by vehicles that have entered the conflict zone.
    committed: OccupancyState,
    /// `committed` plus the assignments of approaching vehicles.
    plan: OccupancyState,
    replans: Vec<ReplanRecord>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Simulation {
    pub fn new(config: ScenarioConfig, strategy: Strategy) -> Result<Self> {
        if let Strategy::Mcts(cfg) = &strategy {
            cfg.validate()?;
        }
        let arrivals = generate_arrivals(&config)?;
        let lanes = config.model.lane_count();
        let zones = config.model.subzone_count;
        Ok(Simulation {
            config,
            strategy,
            arrivals,
            next_arrival: 0,
            step: 0,
            clock: 0.0,
            vehicles: Vec::new(),
            queues: vec![VecDeque::new(); lanes],
            last_entered: vec![None; lanes],
            approaching: Vec::new(),
            crossing: Vec::new(),
            departed: 0,
            committed: OccupancyState::new(zones),
            plan: OccupancyState::new(zones),
            replans: Vec::new(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn vehicles(&self) -> &[SimVehicle] {
        &self.vehicles
    }

    pub fn replans(&self) -> &[ReplanRecord] {
        &self.replans
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.step_count()
    }

    fn free_flow(&self) -> f64 {
        self.config.model.control_zone_length / self.config.kinematics.v_max
    }

    pub fn census(&self) -> Census {
        Census {
            generated: self.vehicles.len(),
            queued: self.queues.iter().map(VecDeque::len).sum(),
            approaching: self.approaching.len(),
            crossing: self.crossing.len(),
            departed: self.departed,
        }
    }

    /// Advance the clock by one time step.
    pub fn step(&mut self) -> Result<()> {
        let t = self.clock;
        let dt = self.config.time_step;
        self.advance(t, t + dt)?;
        self.step += 1;
        self.clock = self.step as f64 * dt;
        self.enqueue();
        self.dequeue()?;
        if self.step % self.config.replan_steps() == 0 {
            self.replan()?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    fn advance(&mut self, t: f64, t_next: f64) -> Result<()> {
        let v_max = self.config.kinematics.v_max;
        let dt = t_next - t;
        let mut entered = Vec::new();
        let mut still = Vec::with_capacity(self.approaching.len());
        for &i in &self.approaching {
            let v = &mut self.vehicles[i];
            let target = v.assigned_entry.expect("approaching vehicles hold an assignment");
            let remaining = target - t;
            if remaining <= 1e-9 {
                if v.distance > 1e-6 {
                    return Err(Error::Consistency(format!(
                        "vehicle {} missed its entry time {target} with {} m to go",
                        v.id, v.distance
                    )));
                }
                v.realized_entry = Some(t);
                entered.push(i);
                continue;
            }
            let speed = v.distance / remaining;
            if speed > v_max * (1.0 + 1e-6) {
                return Err(Error::Consistency(format!(
                    "vehicle {} would need {speed} m/s to arrive at {target}, before its minimum arrival time",
                    v.id
                )));
            }
            let speed = speed.min(v_max);
            if speed * dt >= v.distance - 1e-9 {
                v.realized_entry = Some(if speed > 0.0 { t + v.distance / speed } else { t });
                v.distance = 0.0;
                v.speed = speed;
                entered.push(i);
            } else {
                v.distance -= speed * dt;
                v.speed = speed;
                still.push(i);
            }
        }
        self.approaching = still;

        entered.sort_by(|&a, &b| {
            let (va, vb) = (&self.vehicles[a], &self.vehicles[b]);
            va.realized_entry.unwrap().total_cmp(&vb.realized_entry.unwrap()).then(va.id.cmp(&vb.id))
        });
        for i in entered {
            let v = &mut self.vehicles[i];
            v.state = VehicleState::Crossing;
            let entry = v.realized_entry.unwrap();
            let route = self.config.model.route_for(v.lane)?;
            for (z, off) in route.iter() {
                self.committed.occupy(z, entry + off, v.movement);
            }
            v.departure = Some(entry + route.exit_offset);
            self.crossing.push(i);
        }

        let vehicles = &mut self.vehicles;
        let mut departed = 0;
        self.crossing.retain(|&i| {
            let v = &mut vehicles[i];
            if v.departure.unwrap() <= t_next + 1e-9 {
                v.state = VehicleState::Departed;
                departed += 1;
                false
            } else {
                true
            }
        });
        self.departed += departed;
        Ok(())
    }

    fn enqueue(&mut self) {
        while let Some(a) = self.arrivals.get(self.next_arrival) {
            if a.time > self.clock + 1e-9 {
                break;
            }
            let movement = self.config.model.lane_movement[&a.lane];
            let idx = self.vehicles.len();
            self.vehicles.push(SimVehicle {
                id: a.id,
                lane: a.lane,
                movement,
                spawn: a.time,
                queue_exit: None,
                distance: self.config.model.control_zone_length,
                speed: 0.0,
                assigned_entry: None,
                realized_entry: None,
                departure: None,
                state: VehicleState::Queued,
            });
            self.queues[a.lane.index()].push_back(idx);
            self.next_arrival += 1;
        }
    }

    /// Release at most one queued vehicle per lane into the control zone.
    fn dequeue(&mut self) -> Result<()> {
        let now = self.clock;
        let length = self.config.model.control_zone_length;
        let v_max = self.config.kinematics.v_max;
        let gap = self.config.min_entry_gap;
        for lane in 0..self.queues.len() {
            let Some(&head) = self.queues[lane].front() else { continue };
            let pred_distance = self.last_entered[lane]
                .map(|p| &self.vehicles[p])
                .filter(|p| p.state == VehicleState::Approaching)
                .map(|p| p.distance);
            let fits = |d: f64| pred_distance.is_none_or(|p| p <= d - gap + 1e-9);
            // a vehicle that arrived during the last step has already driven part of it
            let spawn = self.vehicles[head].spawn;
            let fresh = (length - v_max * (now - spawn)).max(0.0);
            let distance = if spawn > now - self.config.time_step && fits(fresh) {
                fresh
            } else if fits(length) {
                length
            } else {
                continue;
            };
            self.queues[lane].pop_front();
            self.last_entered[lane] = Some(head);
            let route = self.config.model.route_for(LaneId(lane as u32))?;
            let v = &mut self.vehicles[head];
            v.queue_exit = Some(now);
            v.distance = distance;
            v.speed = v_max;
            v.state = VehicleState::Approaching;
            // provisional slot at the end of the current plan until the next replan
            let t_min = now + distance / v_max;
            let entry = route.iter().fold(t_min, |acc, (z, off)| {
                acc.max(self.plan.release_time(z, &self.config.gaps) - off)
            });
            for (z, off) in route.iter() {
                self.plan.occupy(z, entry + off, v.movement);
            }
            v.assigned_entry = Some(entry);
            self.approaching.push(head);
        }
        Ok(())
    }

    /// Reschedule every vehicle that has not entered the conflict zone yet.
    pub fn replan(&mut self) -> Result<()> {
        if self.approaching.is_empty() {
            self.plan = self.committed.clone();
            return Ok(());
        }
        let now = self.clock;
        let limits = self.config.kinematics;
        let snapshot: Vec<Vehicle> = self
            .approaching
            .iter()
            .map(|&i| {
                let v = &self.vehicles[i];
                Vehicle {
                    id: v.id,
                    lane: v.lane,
                    movement: v.movement,
                    distance_to_zone: v.distance,
                    speed: v.speed.min(limits.v_max),
                    v_max: limits.v_max,
                    a_max: limits.a_max,
                    state: VehicleState::Approaching,
                }
            })
            .collect();
        let index = self.replans.len() as u64;
        let outcome = Instance::from_vehicles(
            &self.config.model,
            &snapshot,
            self.config.gaps,
            Some(self.committed.clone()),
            now,
        )
        .and_then(|inst| plan_with(&inst, &self.strategy, index).map(|p| (inst, p)));

        let (inst, planned) = match outcome {
            Ok(x) => x,
            Err(e) => {
                log::warn!("replan at t={now:.1} failed, keeping previous assignments: {e}");
                self.replans.push(ReplanRecord {
                    time: now,
                    vehicles: snapshot.len(),
                    nodes: 0,
                    fifo_delay: f64::NAN,
                    delay: f64::NAN,
                    eta: 0.0,
                    failed: true,
                });
                return Ok(());
            }
        };
        let schedule = interpret_order(&inst, &planned.order.sequence)?;
        let mut plan = self.committed.clone();
        for sv in &schedule.vehicles {
            let idx = inst.index_of(sv.id).unwrap();
            inst.commit(idx, sv.entry_time, &mut plan);
        }
        for &i in &self.approaching {
            let v = &mut self.vehicles[i];
            v.assigned_entry = schedule.entry_time(v.id);
        }
        self.plan = plan;
        self.replans.push(ReplanRecord {
            time: now,
            vehicles: inst.len(),
            nodes: planned.nodes,
            fifo_delay: planned.fifo_delay,
            delay: schedule.total_delay,
            eta: improvement_rate(planned.fifo_delay.max(0.0), schedule.total_delay.max(0.0))?,
            failed: false,
        });
        Ok(())
    }

    pub fn metrics(&self) -> Metrics {
        let free = self.free_flow();
        let delays: Vec<f64> = self
            .vehicles
            .iter()
            .filter(|v| v.state == VehicleState::Departed)
            .filter_map(|v| v.delay(free))
            .collect();
        let total: f64 = delays.iter().sum();
        let ok: Vec<&ReplanRecord> = self.replans.iter().filter(|r| !r.failed).collect();
        let etas = SummaryStats::of(ok.iter().map(|r| r.eta));
        Metrics {
            strategy: self.strategy.name().to_string(),
            generated: self.vehicles.len(),
            throughput: delays.len(),
            total_delay: total,
            average_delay: if delays.is_empty() { 0.0 } else { total / delays.len() as f64 },
            eta: 0.0,
            mean_cycle_eta: etas.mean,
            min_cycle_eta: if ok.is_empty() {
                0.0
            } else {
                ok.iter().map(|r| r.eta).fold(f64::INFINITY, f64::min)
            },
            nodes_per_replan: SummaryStats::of(ok.iter().map(|r| r.nodes as f64)),
            replan_count: ok.len(),
            replan_failures: self.replans.len() - ok.len(),
        }
    }

    pub fn trace(&self) -> Vec<TraceRecord> {
        let free = self.free_flow();
        self.vehicles
            .iter()
            .map(|v| {
                let arrivals = match (v.realized_entry, self.config.model.route_for(v.lane)) {
                    (Some(e), Ok(route)) => route.iter().map(|(z, off)| (z, e + off)).collect(),
                    _ => Vec::new(),
                };
                TraceRecord {
                    id: v.id,
                    lane: v.lane,
                    movement: v.movement,
                    spawn: v.spawn,
                    queue_exit: v.queue_exit,
                    assigned_entry: v.assigned_entry,
                    realized_entry: v.realized_entry,
                    departure: v.departure,
                    delay: v.delay(free),
                    arrivals,
                }
            })
            .collect()
    }
}

struct Planned {
    order: PassingOrder,
    fifo_delay: f64,
    nodes: u64,
}

fn plan_with(inst: &Instance, strategy: &Strategy, replan_index: u64) -> Result<Planned> {
    match strategy {
        Strategy::Fifo => {
            let order = fifo_order(inst);
            let fifo_delay = interpret_order(inst, &order.sequence)?.total_delay;
            Ok(Planned {
                order,
                fifo_delay,
                nodes: 0,
            })
        }
        Strategy::Mcts(cfg) => {
            let mut cfg = cfg.clone();
            cfg.rng_seed = cfg
                .rng_seed
                .wrapping_add(replan_index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            cfg.keep_tree = false;
            cfg.record_log = false;
            let report = mcts_search(inst, &cfg)?;
            Ok(Planned {
                order: report.best_order,
                fifo_delay: report.fifo_delay,
                nodes: report.nodes_expanded,
            })
        }
        Strategy::Oracle { cap } => {
            let e = enumerate_optimal(
                inst,
                &EnumerationOptions {
                    cap: *cap,
                    collect_delays: false,
                },
            )?;
            let fifo_delay = interpret_order(inst, &fifo_order(inst).sequence)?.total_delay;
            Ok(Planned {
                order: e.best_order,
                fifo_delay,
                nodes: e.orders_visited,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub metrics: Metrics,
    pub trace: Vec<TraceRecord>,
}

/// Run one simulation without the paired baseline; `eta` is left at 0.
pub fn simulate(config: &ScenarioConfig, strategy: &Strategy) -> Result<ExperimentResult> {
    let mut sim = Simulation::new(config.clone(), strategy.clone())?;
    sim.run()?;
    Ok(ExperimentResult {
        metrics: sim.metrics(),
        trace: sim.trace(),
    })
}

/// Run `strategy` and, unless it is FIFO, a FIFO run on the same arrivals for `eta`.
pub fn run_experiment(config: &ScenarioConfig, strategy: &Strategy) -> Result<ExperimentResult> {
    let mut result = simulate(config, strategy)?;
    if *strategy != Strategy::Fifo {
        let fifo = simulate(config, &Strategy::Fifo)?.metrics;
        result.metrics.eta =
            improvement_rate(fifo.average_delay, result.metrics.average_delay)?;
    }
    Ok(result)
}

pub fn write_trace_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "vehicle",
        "lane",
        "movement",
        "spawn",
        "queue_exit",
        "assigned_entry",
        "realized_entry",
        "departure",
        "delay",
        "arrivals",
    ])?;
    for r in records {
        let arrivals = r
            .arrivals
            .iter()
            .map(|(z, t)| format!("{z}:{t}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.id.to_string(),
            r.lane.to_string(),
            r.movement.to_string(),
            r.spawn.to_string(),
            fmt_opt(r.queue_exit),
            fmt_opt(r.assigned_entry),
            fmt_opt(r.realized_entry),
            fmt_opt(r.departure),
            fmt_opt(r.delay),
            arrivals,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A broken end-to-end property of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub enum AuditViolation {
    Headway {
        subzone: SubzoneId,
        leader: VehicleId,
        follower: VehicleId,
        gap: f64,
    },
    Overtaking {
        lane: LaneId,
        first: VehicleId,
        second: VehicleId,
    },
    Offsets(VehicleId),
}

impl fmt::Display for AuditViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditViolation::Headway {
                subzone,
                leader,
                follower,
                gap,
            } => write!(f, "subzone {subzone}: {follower} follows {leader} after only {gap:.3} s"),
            AuditViolation::Overtaking { lane, first, second } => {
                write!(f, "lane {lane}: {second} overtook {first}")
            }
            AuditViolation::Offsets(id) => write!(f, "vehicle {id} does not cross at constant speed"),
        }
    }
}

/// Check realized subzone headways, in-lane order and in-zone offsets of a trace.
pub fn audit_trace(
    model: &IntersectionModel,
    gaps: &SafetyGapTable,
    records: &[TraceRecord],
    tolerance: f64,
) -> Vec<AuditViolation> {
    let mut out = Vec::new();
    let mut users: BTreeMap<SubzoneId, Vec<(f64, VehicleId, Movement)>> = BTreeMap::new();
    for r in records {
        let Some(entry) = r.realized_entry else { continue };
        if let Ok(route) = model.route_for(r.lane) {
            let ok = route.len() == r.arrivals.len()
                && route
                    .iter()
                    .zip(&r.arrivals)
                    .all(|((z, off), &(rz, t))| z == rz && (t - entry - off).abs() <= 1e-6);
            if !ok {
                out.push(AuditViolation::Offsets(r.id));
            }
        }
        for &(z, t) in &r.arrivals {
            users.entry(z).or_default().push((t, r.id, r.movement));
        }
    }
    for (z, mut list) in users {
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in list.windows(2) {
            let (lead, follow) = (w[0], w[1]);
            if follow.0 - lead.0 < gaps.gap(lead.2) - tolerance {
                out.push(AuditViolation::Headway {
                    subzone: z,
                    leader: lead.1,
                    follower: follow.1,
                    gap: follow.0 - lead.0,
                });
            }
        }
    }
    let mut lanes: BTreeMap<LaneId, Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        lanes.entry(r.lane).or_default().push(r);
    }
    for (lane, mut list) in lanes {
        list.sort_by(|a, b| a.spawn.total_cmp(&b.spawn).then(a.id.cmp(&b.id)));
        for w in list.windows(2) {
            let key = |r: &TraceRecord| [r.queue_exit, r.realized_entry, r.departure];
            for (a, b) in key(w[0]).into_iter().zip(key(w[1])) {
                if let (Some(a), Some(b)) = (a, b) {
                    if b < a {
                        out.push(AuditViolation::Overtaking {
                            lane,
                            first: w[0].id,
                            second: w[1].id,
                        });
                        break;
                    }
                } else if a.is_none() && b.is_some() {
                    out.push(AuditViolation::Overtaking {
                        lane,
                        first: w[0].id,
                        second: w[1].id,
                    });
                    break;
                }
            }
        }
    }
    out
}

/// Shape of a random static snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotSpec {
    pub vehicles: usize,
    /// Exactly this many vehicles on every lane instead of `vehicles` spread at random.
    pub per_lane: Option<usize>,
    /// Bumper spacing floor between consecutive vehicles of a lane, meters.
    pub min_spacing: f64,
    /// Mean of the exponential extra spacing, meters.
    pub mean_extra_spacing: f64,
    /// Speeds are drawn uniformly from this fraction range of `v_max`.
    pub speed_fraction: (f64, f64),
    pub seed: u64,
}

impl Default for SnapshotSpec {
    fn default() -> Self {
        SnapshotSpec {
            vehicles: 30,
            per_lane: None,
            min_spacing: 8.0,
            mean_extra_spacing: 15.0,
            speed_fraction: (0.5, 1.0),
            seed: 0,
        }
    }
}

/// Random static vehicle set; ids start at 1 and grow with distance to the zone.
pub fn random_snapshot(
    model: &IntersectionModel,
    spec: &SnapshotSpec,
    limits: KinematicLimits,
) -> Result<Vec<Vehicle>> {
    limits.validate()?;
    let (lo, hi) = spec.speed_fraction;
    if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
        return Err(Error::Config(format!("speed_fraction ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 1")));
    }
    if !(spec.min_spacing > 0.0 && spec.mean_extra_spacing > 0.0) {
        return Err(Error::Config("snapshot spacings must be positive".into()));
    }
    let lanes: Vec<LaneId> = model.lanes().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut per_lane = vec![0usize; lanes.len()];
    match spec.per_lane {
        Some(k) => per_lane.iter_mut().for_each(|c| *c = k),
        None => {
            for _ in 0..spec.vehicles {
                per_lane[rng.random_range(0..lanes.len())] += 1;
            }
        }
    }
    let exp = Exp::new(1.0 / spec.mean_extra_spacing).map_err(|e| Error::Config(e.to_string()))?;
    let mut placed: Vec<(f64, LaneId)> = Vec::new();
    for (l, &count) in per_lane.iter().enumerate() {
        let mut d = exp.sample(&mut rng);
        for _ in 0..count {
            placed.push((d, lanes[l]));
            d += spec.min_spacing + exp.sample(&mut rng);
        }
    }
    placed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    placed
        .into_iter()
        .enumerate()
        .map(|(k, (d, lane))| {
            let speed = limits.v_max * if hi > lo { rng.random_range(lo..=hi) } else { lo };
            Ok(Vehicle::new(k as u32 + 1, lane, model.movement(lane)?, d, speed, limits))
        })
        .collect()
}
