//! Intersection geometry: legs, lanes, movements and the conflict-subzone grid.
//!
//! The conflict zone is a square of side `2 * lanes_per_leg * lane_width`, partitioned
//! into an `N x N` grid of subzones with `N = 2 * lanes_per_leg`. Traffic drives on the
//! right. Legs are numbered counter-clockwise starting from the south approach
//! (`S`, `E`, `N`, `W`); lane `k` of a leg is the `k`-th incoming lane counted from the
//! median, and its global id is `leg * lanes_per_leg + k`.
//!
//! Subzone ids are `row * N + col` with `col` growing eastwards and `row` northwards.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::KinematicLimits;

pub const LEG_NAMES: [&str; 4] = ["S", "E", "N", "W"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LaneId(pub u32);

impl LaneId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubzoneId(pub u32);

impl SubzoneId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SubzoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Movement {
    Left,
    Straight,
    Right,
}

impl Movement {
    pub const ALL: [Movement; 3] = [Movement::Left, Movement::Straight, Movement::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Movement::Left => "left",
            Movement::Straight => "straight",
            Movement::Right => "right",
        }
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Movement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Movement::Left),
            "straight" => Ok(Movement::Straight),
            "right" => Ok(Movement::Right),
            other => Err(Error::Geometry(format!("unknown movement `{other}`"))),
        }
    }
}

/// Constant in-zone speed per movement, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossingSpeeds {
    pub straight: f64,
    pub left: f64,
    pub right: f64,
}

impl Default for CrossingSpeeds {
    fn default() -> Self {
        CrossingSpeeds {
            straight: 12.0,
            left: 8.0,
            right: 6.0,
        }
    }
}

impl CrossingSpeeds {
    pub fn get(&self, movement: Movement) -> f64 {
        match movement {
            Movement::Left => self.left,
            Movement::Straight => self.straight,
            Movement::Right => self.right,
        }
    }
}

/// Minimum time gap a vehicle leaves behind it in every subzone it crosses, keyed by
/// the movement of that (leading) vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyGapTable {
    pub straight: f64,
    pub left: f64,
    pub right: f64,
}

impl Default for SafetyGapTable {
    fn default() -> Self {
        SafetyGapTable {
            straight: 1.5,
            left: 2.0,
            right: 1.5,
        }
    }
}

impl SafetyGapTable {
    pub fn uniform(gap: f64) -> Self {
        SafetyGapTable {
            straight: gap,
            left: gap,
            right: gap,
        }
    }

    #[inline]
    pub fn gap(&self, movement: Movement) -> f64 {
        match movement {
            Movement::Left => self.left,
            Movement::Straight => self.straight,
            Movement::Right => self.right,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in Movement::ALL {
            let g = self.gap(m);
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "safety gap for {m} must be positive, got {g}"
                )));
            }
        }
        Ok(())
    }
}

/// Ordered subzones a lane's path crosses, with the time (from entering the conflict
/// zone at constant crossing speed) at which each subzone is reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub subzones: Vec<SubzoneId>,
    pub offsets: Vec<f64>,
    /// Time after zone entry at which the vehicle leaves the conflict zone.
    pub exit_offset: f64,
}

impl Route {
    pub fn new(subzones: Vec<SubzoneId>, offsets: Vec<f64>, exit_offset: f64) -> Result<Self> {
        if subzones.is_empty() {
            return Err(Error::Geometry("route must cross at least one subzone".into()));
        }
        if subzones.len() != offsets.len() {
            return Err(Error::Geometry(format!(
                "route has {} subzones but {} offsets",
                subzones.len(),
                offsets.len()
            )));
        }
        if offsets[0] != 0.0 {
            return Err(Error::Geometry("first route offset must be 0".into()));
        }
        if offsets.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Geometry("route offsets must strictly increase".into()));
        }
        let mut seen = HashSet::new();
        if !subzones.iter().all(|z| seen.insert(*z)) {
            return Err(Error::Geometry("route visits a subzone twice".into()));
        }
        let last = *offsets.last().unwrap();
        if !(exit_offset.is_finite() && exit_offset >= last) {
            return Err(Error::Geometry(format!(
                "exit offset {exit_offset} precedes the last subzone offset {last}"
            )));
        }
        Ok(Route {
            subzones,
            offsets,
            exit_offset,
        })
    }

    pub fn first(&self) -> SubzoneId {
        self.subzones[0]
    }

    pub fn offset_of(&self, subzone: SubzoneId) -> Option<f64> {
        self.subzones
            .iter()
            .position(|z| *z == subzone)
            .map(|i| self.offsets[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (SubzoneId, f64)> + '_ {
        self.subzones.iter().copied().zip(self.offsets.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.subzones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subzones.is_empty()
    }

    pub fn shares_subzone(&self, other: &Route) -> bool {
        self.subzones.iter().any(|z| other.subzones.contains(z))
    }
}

/// Explicit route override as it appears in a geometry file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub subzones: Vec<SubzoneId>,
    pub offsets: Vec<f64>,
    #[serde(default)]
    pub exit_offset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub lanes_per_leg: usize,
    pub lane_width: f64,
    pub control_zone_length: f64,
    pub crossing_speed: CrossingSpeeds,
    /// Movement of each incoming lane of a leg, median first; shared by all legs.
    pub lane_movements: Option<Vec<Movement>>,
    /// Per-lane route overrides, keyed by global lane id.
    pub routes: Option<BTreeMap<LaneId, RouteSpec>>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            lanes_per_leg: 3,
            lane_width: 3.5,
            control_zone_length: 300.0,
            crossing_speed: CrossingSpeeds::default(),
            lane_movements: None,
            routes: None,
        }
    }
}

impl GeometryConfig {
    pub fn single_lane() -> Self {
        GeometryConfig {
            lanes_per_leg: 1,
            ..GeometryConfig::default()
        }
    }

    fn movement_pattern(&self) -> Result<Vec<Movement>> {
        match &self.lane_movements {
            Some(pattern) => {
                if pattern.len() != self.lanes_per_leg {
                    return Err(Error::Geometry(format!(
                        "lane_movements lists {} movements for {} lanes per leg; every lane needs exactly one",
                        pattern.len(),
                        self.lanes_per_leg
                    )));
                }
                Ok(pattern.clone())
            }
            None => match self.lanes_per_leg {
                1 => Ok(vec![Movement::Straight]),
                3 => Ok(vec![Movement::Left, Movement::Straight, Movement::Right]),
                n => Err(Error::Geometry(format!(
                    "no default lane movements for {n} lanes per leg; supply lane_movements"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionModel {
    pub legs: usize,
    pub lanes_per_leg: usize,
    pub lane_width: f64,
    /// Side length of the subzone grid (`N`).
    pub grid_size: usize,
    pub subzone_count: usize,
    pub control_zone_length: f64,
    pub crossing_speed: CrossingSpeeds,
    pub lane_movement: BTreeMap<LaneId, Movement>,
    pub route_table: BTreeMap<LaneId, Route>,
}

impl IntersectionModel {
    /// Three incoming lanes per leg (left, straight, right), 36 subzones.
    pub fn three_lane() -> Self {
        build_intersection(&GeometryConfig::default()).expect("default geometry is valid")
    }

    /// One straight-only lane per leg, 4 subzones.
    pub fn single_lane() -> Self {
        build_intersection(&GeometryConfig::single_lane()).expect("single-lane geometry is valid")
    }

    pub fn lane_count(&self) -> usize {
        self.lane_movement.len()
    }

    pub fn lanes(&self) -> impl Iterator<Item = LaneId> + '_ {
        self.lane_movement.keys().copied()
    }

    pub fn movement(&self, lane: LaneId) -> Result<Movement> {
        self.lane_movement
            .get(&lane)
            .copied()
            .ok_or(Error::UnknownLane(lane))
    }

    pub fn route_for(&self, lane: LaneId) -> Result<&Route> {
        self.route_table.get(&lane).ok_or(Error::UnknownLane(lane))
    }

    pub fn leg_of(&self, lane: LaneId) -> usize {
        lane.index() / self.lanes_per_leg
    }

    /// Human-readable lane label such as `S0` or `W2`.
    pub fn lane_label(&self, lane: LaneId) -> String {
        let leg = self.leg_of(lane);
        let name = LEG_NAMES.get(leg).copied().unwrap_or("?");
        format!("{name}{}", lane.index() % self.lanes_per_leg)
    }
}

/// Lane path in the south-approach frame, before rotation onto its leg.
#[derive(Debug, Clone, Copy)]
enum LanePath {
    /// Northbound line at abscissa `x`.
    Straight { x: f64, side: f64 },
    /// Quarter circle about the south-west corner.
    Left { radius: f64 },
    /// Quarter circle about the south-east corner.
    Right { radius: f64, side: f64 },
}

impl LanePath {
    fn new(movement: Movement, column: usize, grid: usize, width: f64) -> Self {
        let side = grid as f64 * width;
        let x = (column as f64 + 0.5) * width;
        match movement {
            Movement::Straight => LanePath::Straight { x, side },
            Movement::Left => LanePath::Left { radius: x },
            Movement::Right => LanePath::Right {
                radius: side - x,
                side,
            },
        }
    }

    fn length(&self) -> f64 {
        match *self {
            LanePath::Straight { side, .. } => side,
            LanePath::Left { radius } | LanePath::Right { radius, .. } => {
                radius * std::f64::consts::FRAC_PI_2
            }
        }
    }

    fn point_at(&self, s: f64) -> (f64, f64) {
        match *self {
            LanePath::Straight { x, .. } => (x, s),
            LanePath::Left { radius } => {
                let t = s / radius;
                (radius * t.cos(), radius * t.sin())
            }
            LanePath::Right { radius, side } => {
                let t = s / radius;
                (side - radius * t.cos(), radius * t.sin())
            }
        }
    }

    /// Path lengths at which the path crosses an interior grid line.
    fn grid_crossings(&self, grid: usize, width: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 1..grid {
            let line = k as f64 * width;
            match *self {
                LanePath::Straight { .. } => out.push(line),
                LanePath::Left { radius } => {
                    if line < radius {
                        out.push(radius * (line / radius).acos());
                        out.push(radius * (line / radius).asin());
                    }
                }
                LanePath::Right { radius, side } => {
                    let dx = side - line;
                    if dx > 0.0 && dx < radius {
                        out.push(radius * (dx / radius).acos());
                    }
                    if line < radius {
                        out.push(radius * (line / radius).asin());
                    }
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }
}

fn cell_of(point: (f64, f64), grid: usize, width: f64) -> (usize, usize) {
    let clamp = |v: f64| ((v / width).floor().max(0.0) as usize).min(grid - 1);
    (clamp(point.0), clamp(point.1))
}

fn rotate_cell(cell: (usize, usize), grid: usize, quarter_turns: usize) -> (usize, usize) {
    let mut c = cell;
    for _ in 0..quarter_turns {
        c = (grid - 1 - c.1, c.0);
    }
    c
}

#[cfg(test)]
fn rotate_point(p: (f64, f64), side: f64, quarter_turns: usize) -> (f64, f64) {
    let mut p = p;
    for _ in 0..quarter_turns {
        p = (side - p.1, p.0);
    }
    p
}

fn geometric_route(
    movement: Movement,
    leg: usize,
    lane_in_leg: usize,
    lanes_per_leg: usize,
    width: f64,
    speeds: &CrossingSpeeds,
) -> Result<Route> {
    let grid = 2 * lanes_per_leg;
    let path = LanePath::new(movement, lanes_per_leg + lane_in_leg, grid, width);
    let length = path.length();
    let mut cuts = vec![0.0];
    for s in path.grid_crossings(grid, width) {
        if s > 1e-9 && s < length - 1e-9 && s - cuts.last().unwrap() > 1e-9 {
            cuts.push(s);
        }
    }
    cuts.push(length);

    let speed = speeds.get(movement);
    let mut subzones: Vec<SubzoneId> = Vec::new();
    let mut offsets = Vec::new();
    for seg in cuts.windows(2) {
        let mid = path.point_at(0.5 * (seg[0] + seg[1]));
        let (col, row) = rotate_cell(cell_of(mid, grid, width), grid, leg);
        let id = SubzoneId((row * grid + col) as u32);
        if subzones.last() != Some(&id) {
            subzones.push(id);
            offsets.push(seg[0] / speed);
        }
    }
    Route::new(subzones, offsets, length / speed)
}

/// Build a validated intersection model from a geometry description.
pub fn build_intersection(config: &GeometryConfig) -> Result<IntersectionModel> {
    let lanes = config.lanes_per_leg;
    if lanes == 0 {
        return Err(Error::Geometry("lanes_per_leg must be at least 1".into()));
    }
    if !(config.lane_width.is_finite() && config.lane_width > 0.0) {
        return Err(Error::Geometry("lane_width must be positive".into()));
    }
    if !(config.control_zone_length.is_finite() && config.control_zone_length > 0.0) {
        return Err(Error::Geometry("control_zone_length must be positive".into()));
    }
    for m in Movement::ALL {
        let v = config.crossing_speed.get(m);
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Geometry(format!("crossing speed for {m} must be positive")));
        }
    }
    let pattern = config.movement_pattern()?;
    let grid = 2 * lanes;
    let subzone_count = grid * grid;
    let legs = 4;

    let mut lane_movement = BTreeMap::new();
    let mut route_table = BTreeMap::new();
    for leg in 0..legs {
        for (k, movement) in pattern.iter().copied().enumerate() {
            let lane = LaneId((leg * lanes + k) as u32);
            lane_movement.insert(lane, movement);
            let route = geometric_route(
                movement,
                leg,
                k,
                lanes,
                config.lane_width,
                &config.crossing_speed,
            )?;
            route_table.insert(lane, route);
        }
    }

    if let Some(overrides) = &config.routes {
        for (lane, spec) in overrides {
            if !lane_movement.contains_key(lane) {
                return Err(Error::UnknownLane(*lane));
            }
            if let Some(z) = spec.subzones.iter().find(|z| z.index() >= subzone_count) {
                return Err(Error::Geometry(format!(
                    "route for lane {lane} references subzone {z}, but only {subzone_count} exist"
                )));
            }
            let exit = spec
                .exit_offset
                .unwrap_or_else(|| spec.offsets.last().copied().unwrap_or(0.0));
            let route = Route::new(spec.subzones.clone(), spec.offsets.clone(), exit)?;
            route_table.insert(*lane, route);
        }
    }

    Ok(IntersectionModel {
        legs,
        lanes_per_leg: lanes,
        lane_width: config.lane_width,
        grid_size: grid,
        subzone_count,
        control_zone_length: config.control_zone_length,
        crossing_speed: config.crossing_speed,
        lane_movement,
        route_table,
    })
}

/// Sampled world-frame polyline of a lane's in-zone path.
#[cfg(test)]
pub(crate) fn lane_path_points(
    model: &IntersectionModel,
    lane: LaneId,
    samples: usize,
) -> Result<Vec<(f64, f64)>> {
    let movement = model.movement(lane)?;
    let leg = model.leg_of(lane);
    let k = lane.index() % model.lanes_per_leg;
    let path = LanePath::new(
        movement,
        model.lanes_per_leg + k,
        model.grid_size,
        model.lane_width,
    );
    let side = model.grid_size as f64 * model.lane_width;
    let len = path.length();
    Ok((0..=samples)
        .map(|i| rotate_point(path.point_at(len * i as f64 / samples as f64), side, leg))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VehicleState {
    Queued,
    #[default]
    Approaching,
    Crossing,
    Departed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    pub lane: LaneId,
    pub movement: Movement,
    /// Distance from the vehicle to the conflict-zone boundary, meters.
    pub distance_to_zone: f64,
    pub speed: f64,
    pub v_max: f64,
    pub a_max: f64,
    #[serde(default)]
    pub state: VehicleState,
}

impl Vehicle {
    pub fn new(
        id: u32,
        lane: LaneId,
        movement: Movement,
        distance_to_zone: f64,
        speed: f64,
        limits: KinematicLimits,
    ) -> Self {
        Vehicle {
            id: VehicleId(id),
            lane,
            movement,
            distance_to_zone,
            speed,
            v_max: limits.v_max,
            a_max: limits.a_max,
            state: VehicleState::Approaching,
        }
    }

    pub fn limits(&self) -> KinematicLimits {
        KinematicLimits {
            v_max: self.v_max,
            a_max: self.a_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateId(VehicleId),
    UnknownLane {
        vehicle: VehicleId,
        lane: LaneId,
    },
    MovementMismatch {
        vehicle: VehicleId,
        lane: LaneId,
        declared: Movement,
        permitted: Movement,
    },
    DistanceTie {
        lane: LaneId,
        first: VehicleId,
        second: VehicleId,
    },
    NegativeDistance(VehicleId),
    SpeedOutOfRange(VehicleId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId(id) => write!(f, "duplicate id {id}"),
            Violation::UnknownLane { vehicle, lane } => {
                write!(f, "vehicle {vehicle} is on unknown lane {lane}")
            }
            Violation::MovementMismatch {
                vehicle,
                lane,
                declared,
                permitted,
            } => write!(
                f,
                "vehicle {vehicle} declares {declared} but lane {lane} permits only {permitted}"
            ),
            Violation::DistanceTie {
                lane,
                first,
                second,
            } => write!(
                f,
                "vehicles {first} and {second} share a position on lane {lane}"
            ),
            Violation::NegativeDistance(id) => {
                write!(f, "vehicle {id} has a negative distance to the zone")
            }
            Violation::SpeedOutOfRange(id) => {
                write!(f, "vehicle {id} has speed outside [0, v_max]")
            }
        }
    }
}

/// Check a vehicle set against the model; an empty list means the scenario is consistent.
pub fn validate_scenario(model: &IntersectionModel, vehicles: &[Vehicle]) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut ids = HashSet::new();
    let mut positions: HashMap<(LaneId, u64), VehicleId> = HashMap::new();
    for v in vehicles {
        if !ids.insert(v.id) {
            violations.push(Violation::DuplicateId(v.id));
        }
        match model.lane_movement.get(&v.lane) {
            None => violations.push(Violation::UnknownLane {
                vehicle: v.id,
                lane: v.lane,
            }),
            Some(&permitted) if permitted != v.movement => {
                violations.push(Violation::MovementMismatch {
                    vehicle: v.id,
                    lane: v.lane,
                    declared: v.movement,
                    permitted,
                })
            }
            Some(_) => {}
        }
        if !(v.distance_to_zone >= 0.0) {
            violations.push(Violation::NegativeDistance(v.id));
        }
        if !(v.speed >= 0.0 && v.speed <= v.v_max) {
            violations.push(Violation::SpeedOutOfRange(v.id));
        }
        if let Some(first) = positions.insert((v.lane, v.distance_to_zone.to_bits()), v.id) {
            violations.push(Violation::DistanceTie {
                lane: v.lane,
                first,
                second: v.id,
            });
        }
    }
    violations
}
