//! Interpretation of passing orders into subzone arrival times.
//!
//! Vehicles are appended one at a time. A vehicle enters the conflict zone at the
//! earliest time that is no earlier than its own minimum arrival time and that keeps,
//! in every subzone on its route, the safety gap behind the last vehicle that used
//! that subzone. Because in-zone speed is constant, the per-subzone times are the
//! entry time plus the route offsets, so a single max over the route gives the entry.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    IntersectionModel, LaneId, Movement, Route, SafetyGapTable, SubzoneId, Vehicle, VehicleId,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicLimits {
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        KinematicLimits {
            v_max: 15.0,
            a_max: 3.0,
        }
    }
}

impl KinematicLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return Err(Error::Kinematics(format!("v_max must be positive, got {}", self.v_max)));
        }
        if !(self.a_max.is_finite() && self.a_max > 0.0) {
            return Err(Error::Kinematics(format!("a_max must be positive, got {}", self.a_max)));
        }
        Ok(())
    }
}

/// Time to cover `distance` from `speed` under maximum acceleration, capped at `v_max`.
pub fn min_arrival_time(distance: f64, speed: f64, limits: KinematicLimits) -> Result<f64> {
    limits.validate()?;
    if !(distance >= 0.0) || !distance.is_finite() {
        return Err(Error::Kinematics(format!("distance must be non-negative, got {distance}")));
    }
    if !(speed >= 0.0) || speed > limits.v_max * (1.0 + 1e-9) {
        return Err(Error::Kinematics(format!(
            "speed {speed} outside [0, {}]",
            limits.v_max
        )));
    }
    let KinematicLimits { v_max, a_max } = limits;
    let v = speed.min(v_max);
    let t_acc = (v_max - v) / a_max;
    let d_acc = 0.5 * (v + v_max) * t_acc;
    if distance <= d_acc {
        Ok(((v * v + 2.0 * a_max * distance).sqrt() - v) / a_max)
    } else {
        Ok(t_acc + (distance - d_acc) / v_max)
    }
}

/// Latest scheduled use of every subzone.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyState {
    t_max: Vec<Option<f64>>,
    last_movement: Vec<Option<Movement>>,
}

impl Clone for OccupancyState {
    fn clone(&self) -> Self {
        OccupancyState {
            t_max: self.t_max.clone(),
            last_movement: self.last_movement.clone(),
        }
    }

    fn clone_from(&mut self, source: &Self) {
        self.t_max.clone_from(&source.t_max);
        self.last_movement.clone_from(&source.last_movement);
    }
}

impl OccupancyState {
    pub fn new(subzone_count: usize) -> Self {
        OccupancyState {
            t_max: vec![None; subzone_count],
            last_movement: vec![None; subzone_count],
        }
    }

    pub fn subzone_count(&self) -> usize {
        self.t_max.len()
    }

    pub fn t_max(&self, z: SubzoneId) -> Option<f64> {
        self.t_max[z.index()]
    }

    pub fn last_movement(&self, z: SubzoneId) -> Option<Movement> {
        self.last_movement[z.index()]
    }

    pub fn is_empty(&self) -> bool {
        self.t_max.iter().all(Option::is_none)
    }

    /// Record a use of `z` at time `t`. Earlier uses than the current latest are ignored.
    pub fn occupy(&mut self, z: SubzoneId, t: f64, movement: Movement) {
        let slot = &mut self.t_max[z.index()];
        if slot.is_none_or(|cur| t >= cur) {
            *slot = Some(t);
            self.last_movement[z.index()] = Some(movement);
        }
    }

    /// Earliest time the next vehicle may reach `z`; unoccupied subzones impose no bound.
    #[inline]
    pub fn release_time(&self, z: SubzoneId, gaps: &SafetyGapTable) -> f64 {
        match (self.t_max[z.index()], self.last_movement[z.index()]) {
            (Some(t), Some(m)) => t + gaps.gap(m),
            _ => f64::NEG_INFINITY,
        }
    }

    /// Seed from vehicles already committed to the conflict zone.
    pub fn from_committed<'a>(
        subzone_count: usize,
        committed: impl IntoIterator<Item = (&'a Route, Movement, f64)>,
    ) -> Self {
        let mut uses: Vec<(SubzoneId, f64, Movement)> = Vec::new();
        for (route, movement, entry) in committed {
            uses.extend(route.iter().map(|(z, off)| (z, entry + off, movement)));
        }
        uses.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut occ = OccupancyState::new(subzone_count);
        for (z, t, m) in uses {
            occ.occupy(z, t, m);
        }
        occ
    }

    pub(crate) fn restore(&mut self, z: SubzoneId, t: Option<f64>, m: Option<Movement>) {
        self.t_max[z.index()] = t;
        self.last_movement[z.index()] = m;
    }
}

/// A vehicle as seen by the scheduler: identity, lane, route and earliest entry time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedVehicle {
    pub id: VehicleId,
    pub lane: LaneId,
    pub movement: Movement,
    /// Distance to the conflict zone; orders vehicles within a lane.
    pub distance: f64,
    /// Minimum arrival time at the first subzone of the route.
    pub t_min: f64,
    pub route: Route,
}

/// A static scheduling instance: the vehicles to order plus already-committed occupancy.
#[derive(Debug, Clone)]
pub struct Instance {
    vehicles: Vec<PlannedVehicle>,
    subzone_count: usize,
    gaps: SafetyGapTable,
    seed: OccupancyState,
    lanes: Vec<Vec<usize>>,
    lane_slot: Vec<(usize, usize)>,
    index: HashMap<VehicleId, usize>,
}

impl Instance {
    pub fn new(
        vehicles: Vec<PlannedVehicle>,
        subzone_count: usize,
        gaps: SafetyGapTable,
        seed: Option<OccupancyState>,
    ) -> Result<Self> {
        gaps.validate()?;
        let seed = seed.unwrap_or_else(|| OccupancyState::new(subzone_count));
        if seed.subzone_count() != subzone_count {
            return Err(Error::Scenario(format!(
                "occupancy covers {} subzones, instance has {subzone_count}",
                seed.subzone_count()
            )));
        }
        let mut index = HashMap::with_capacity(vehicles.len());
        for (i, v) in vehicles.iter().enumerate() {
            if index.insert(v.id, i).is_some() {
                return Err(Error::Scenario(format!("duplicate vehicle id {}", v.id)));
            }
            if let Some(z) = v.route.subzones.iter().find(|z| z.index() >= subzone_count) {
                return Err(Error::Scenario(format!(
                    "vehicle {} routes through subzone {z} outside the grid",
                    v.id
                )));
            }
            if !v.t_min.is_finite() {
                return Err(Error::Scenario(format!("vehicle {} has no finite t_min", v.id)));
            }
        }

        let mut lane_ids: Vec<LaneId> = vehicles.iter().map(|v| v.lane).collect();
        lane_ids.sort();
        lane_ids.dedup();
        let mut lanes: Vec<Vec<usize>> = vec![Vec::new(); lane_ids.len()];
        for (i, v) in vehicles.iter().enumerate() {
            let l = lane_ids.binary_search(&v.lane).unwrap();
            lanes[l].push(i);
        }
        let mut lane_slot = vec![(0, 0); vehicles.len()];
        for (l, members) in lanes.iter_mut().enumerate() {
            members.sort_by(|&a, &b| vehicles[a].distance.total_cmp(&vehicles[b].distance));
            for w in members.windows(2) {
                if vehicles[w[0]].distance == vehicles[w[1]].distance {
                    return Err(Error::Scenario(format!(
                        "vehicles {} and {} share a position on lane {}",
                        vehicles[w[0]].id, vehicles[w[1]].id, vehicles[w[0]].lane
                    )));
                }
            }
            for (p, &i) in members.iter().enumerate() {
                lane_slot[i] = (l, p);
            }
        }

        Ok(Instance {
            vehicles,
            subzone_count,
            gaps,
            seed,
            lanes,
            lane_slot,
            index,
        })
    }

    /// Build an instance from vehicle states; `now` is the absolute time origin of `t_min`.
    pub fn from_vehicles(
        model: &IntersectionModel,
        vehicles: &[Vehicle],
        gaps: SafetyGapTable,
        seed: Option<OccupancyState>,
        now: f64,
    ) -> Result<Self> {
        let planned = vehicles
            .iter()
            .map(|v| {
                let permitted = model.movement(v.lane)?;
                if permitted != v.movement {
                    return Err(Error::Scenario(format!(
                        "vehicle {} declares {} on a {permitted} lane",
                        v.id, v.movement
                    )));
                }
                Ok(PlannedVehicle {
                    id: v.id,
                    lane: v.lane,
                    movement: v.movement,
                    distance: v.distance_to_zone,
                    t_min: now + min_arrival_time(v.distance_to_zone, v.speed, v.limits())?,
                    route: model.route_for(v.lane)?.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Instance::new(planned, model.subzone_count, gaps, seed)
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn vehicles(&self) -> &[PlannedVehicle] {
        &self.vehicles
    }

    pub fn vehicle(&self, idx: usize) -> &PlannedVehicle {
        &self.vehicles[idx]
    }

    pub fn index_of(&self, id: VehicleId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn subzone_count(&self) -> usize {
        self.subzone_count
    }

    pub fn gaps(&self) -> &SafetyGapTable {
        &self.gaps
    }

    pub fn seed(&self) -> &OccupancyState {
        &self.seed
    }

    /// Vehicle indices per occupied lane, nearest to the zone first.
    pub fn lanes(&self) -> &[Vec<usize>] {
        &self.lanes
    }

    /// (lane slot, position within the lane) of a vehicle.
    pub fn lane_slot(&self, idx: usize) -> (usize, usize) {
        self.lane_slot[idx]
    }

    /// Entry time the vehicle would get if appended next given `occ`.
    #[inline]
    pub fn entry_time(&self, idx: usize, occ: &OccupancyState) -> f64 {
        let v = &self.vehicles[idx];
        v.route.iter().fold(v.t_min, |acc, (z, off)| {
            acc.max(occ.release_time(z, &self.gaps) - off)
        })
    }

    #[inline]
    pub fn commit(&self, idx: usize, entry: f64, occ: &mut OccupancyState) {
        let v = &self.vehicles[idx];
        for (z, off) in v.route.iter() {
            occ.occupy(z, entry + off, v.movement);
        }
    }

    /// Append a vehicle: compute its entry, update `occ`, and return the entry time.
    #[inline]
    pub fn place(&self, idx: usize, occ: &mut OccupancyState) -> f64 {
        let entry = self.entry_time(idx, occ);
        self.commit(idx, entry, occ);
        entry
    }

    /// Number of lane-order-consistent complete orders, or `None` on overflow.
    pub fn order_count(&self) -> Option<u128> {
        let mut total: u128 = 1;
        let mut placed: u128 = 0;
        for lane in &self.lanes {
            for k in 1..=lane.len() as u128 {
                placed += 1;
                // running binomial C(placed, k) folded into the product
                total = total.checked_mul(placed)? / k;
            }
        }
        Some(total)
    }

    /// log10 of the number of valid complete orders.
    pub fn order_count_log10(&self) -> f64 {
        let ln_fact = |n: usize| (1..=n).map(|k| (k as f64).ln()).sum::<f64>();
        let total = ln_fact(self.len()) - self.lanes.iter().map(|l| ln_fact(l.len())).sum::<f64>();
        total / std::f64::consts::LN_10
    }
}

/// Tracks which vehicles of each lane are already covered by a partial order.
#[derive(Debug, PartialEq, Eq)]
pub struct LaneCursor {
    next: Vec<usize>,
    covered: usize,
}

impl Clone for LaneCursor {
    fn clone(&self) -> Self {
        LaneCursor {
            next: self.next.clone(),
            covered: self.covered,
        }
    }

    fn clone_from(&mut self, source: &Self) {
        self.next.clone_from(&source.next);
        self.covered = source.covered;
    }
}

impl LaneCursor {
    pub fn new(instance: &Instance) -> Self {
        LaneCursor {
            next: vec![0; instance.lanes().len()],
            covered: 0,
        }
    }

    pub fn covered(&self) -> usize {
        self.covered
    }

    /// Front-most uncovered vehicle of every non-exhausted lane, in lane order.
    pub fn fronts<'a>(&'a self, instance: &'a Instance) -> impl Iterator<Item = usize> + 'a {
        instance
            .lanes()
            .iter()
            .zip(&self.next)
            .filter_map(|(lane, &n)| lane.get(n).copied())
    }

    pub fn is_front(&self, instance: &Instance, idx: usize) -> bool {
        let (l, p) = instance.lane_slot(idx);
        self.next[l] == p
    }

    /// Mark `idx` covered; fails if a nearer vehicle of its lane is still uncovered.
    pub fn advance(&mut self, instance: &Instance, idx: usize) -> Result<()> {
        let (l, p) = instance.lane_slot(idx);
        if self.next[l] != p {
            let v = instance.vehicle(idx);
            return Err(Error::InvalidOrder(if self.next[l] > p {
                format!("vehicle {} appears twice", v.id)
            } else {
                format!(
                    "vehicle {} placed before a nearer vehicle on lane {}",
                    v.id, v.lane
                )
            }));
        }
        self.next[l] += 1;
        self.covered += 1;
        Ok(())
    }

    /// Unchecked advance for callers that only append fronts.
    #[inline]
    pub(crate) fn advance_front(&mut self, instance: &Instance, idx: usize) {
        let (l, _) = instance.lane_slot(idx);
        self.next[l] += 1;
        self.covered += 1;
    }

    #[inline]
    pub(crate) fn retreat(&mut self, instance: &Instance, idx: usize) {
        let (l, _) = instance.lane_slot(idx);
        self.next[l] -= 1;
        self.covered -= 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledVehicle {
    pub id: VehicleId,
    pub lane: LaneId,
    pub movement: Movement,
    pub t_min: f64,
    pub entry_time: f64,
    pub arrivals: Vec<(SubzoneId, f64)>,
}

impl ScheduledVehicle {
    pub fn delay(&self) -> f64 {
        self.entry_time - self.t_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    /// Scheduled vehicles in passing order.
    pub vehicles: Vec<ScheduledVehicle>,
    pub total_delay: f64,
}

impl ScheduleResult {
    pub fn get(&self, id: VehicleId) -> Option<&ScheduledVehicle> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn entry_time(&self, id: VehicleId) -> Option<f64> {
        self.get(id).map(|v| v.entry_time)
    }

    pub fn assign(&self, id: VehicleId, z: SubzoneId) -> Option<f64> {
        self.get(id)?
            .arrivals
            .iter()
            .find(|(s, _)| *s == z)
            .map(|(_, t)| *t)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["vehicle", "lane", "movement", "t_min", "entry_time", "delay", "arrivals"])?;
        for v in &self.vehicles {
            let arrivals = v
                .arrivals
                .iter()
                .map(|(z, t)| format!("{z}:{t:.6}"))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                v.id.to_string(),
                v.lane.to_string(),
                v.movement.to_string(),
                format!("{:.6}", v.t_min),
                format!("{:.6}", v.entry_time),
                format!("{:.6}", v.delay()),
                arrivals,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Interpret a (partial) passing order into arrival times and total delay.
pub fn interpret_order(instance: &Instance, order: &[VehicleId]) -> Result<ScheduleResult> {
    let mut occ = instance.seed().clone();
    let mut cursor = LaneCursor::new(instance);
    let mut vehicles = Vec::with_capacity(order.len());
    let mut total = 0.0;
    for &id in order {
        let idx = instance.index_of(id).ok_or(Error::UnknownVehicle(id))?;
        cursor.advance(instance, idx)?;
        let entry = instance.place(idx, &mut occ);
        let v = instance.vehicle(idx);
        total += entry - v.t_min;
        vehicles.push(ScheduledVehicle {
            id,
            lane: v.lane,
            movement: v.movement,
            t_min: v.t_min,
            entry_time: entry,
            arrivals: v.route.iter().map(|(z, off)| (z, entry + off)).collect(),
        });
    }
    Ok(ScheduleResult {
        vehicles,
        total_delay: total,
    })
}

/// Sum of per-vehicle entry delays.
pub fn total_delay(schedule: &ScheduleResult) -> f64 {
    schedule.vehicles.iter().map(ScheduledVehicle::delay).sum()
}

/// Relative delay reduction against the FIFO baseline; 0 when the baseline has no delay.
pub fn improvement_rate(j_fifo: f64, j_alg: f64) -> Result<f64> {
    if !(j_fifo >= 0.0) || !(j_alg >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delays must be non-negative, got {j_fifo} and {j_alg}"
        )));
    }
    if j_fifo == 0.0 {
        return Ok(0.0);
    }
    Ok((j_fifo - j_alg) / j_fifo)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn route(subzones: &[u32], offsets: &[f64]) -> Route {
        let exit = offsets.last().unwrap() + 0.3;
        Route::new(
            subzones.iter().map(|&z| SubzoneId(z)).collect(),
            offsets.to_vec(),
            exit,
        )
        .unwrap()
    }

    pub fn planned(id: u32, lane: u32, movement: Movement, distance: f64, t_min: f64, route: Route) -> PlannedVehicle {
        PlannedVehicle {
            id: VehicleId(id),
            lane: LaneId(lane),
            movement,
            distance,
            t_min,
            route,
        }
    }

    /// Random instance on a small abstract grid: every lane has a fixed random route.
    pub fn random_instance(seed: u64, max_vehicles: usize, subzones: u32) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lanes = rng.random_range(1..=4u32);
        let lane_routes: Vec<(Movement, Route)> = (0..lanes)
            .map(|_| {
                let len = rng.random_range(1..=3usize.min(subzones as usize));
                let mut zs: Vec<u32> = Vec::new();
                while zs.len() < len {
                    let z = rng.random_range(0..subzones);
                    if !zs.contains(&z) {
                        zs.push(z);
                    }
                }
                let mut offs = vec![0.0];
                for _ in 1..len {
                    let last = *offs.last().unwrap();
                    offs.push(last + rng.random_range(0.1..0.8));
                }
                let m = Movement::ALL[rng.random_range(0..3)];
                (m, route(&zs, &offs))
            })
            .collect();
        let n = rng.random_range(1..=max_vehicles);
        let mut vs = Vec::new();
        let mut dist = vec![0.0; lanes as usize];
        for id in 0..n {
            let l = rng.random_range(0..lanes) as usize;
            dist[l] += rng.random_range(5.0..40.0);
            let (m, r) = lane_routes[l].clone();
            vs.push(planned(id as u32, l as u32, m, dist[l], dist[l] / 12.0, r));
        }
        Instance::new(vs, subzones as usize, SafetyGapTable::default(), None).unwrap()
    }
}
