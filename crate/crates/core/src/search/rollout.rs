//! Completing a partial order into a full one.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{replay, PassingOrder};
use crate::error::{Error, Result};
use crate::schedule::{Instance, LaneCursor, OccupancyState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RolloutPolicy {
    #[default]
    Heuristic,
    Random,
}

impl fmt::Display for RolloutPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RolloutPolicy::Heuristic => "heuristic",
            RolloutPolicy::Random => "random",
        })
    }
}

impl FromStr for RolloutPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heuristic" => Ok(RolloutPolicy::Heuristic),
            "random" => Ok(RolloutPolicy::Random),
            other => Err(Error::InvalidArgument(format!("unknown rollout policy `{other}`"))),
        }
    }
}

/// Reusable buffers for the dominance test.
#[derive(Debug)]
pub(crate) struct Scratch {
    candidates: Vec<(usize, f64)>,
    earliest: Vec<f64>,
    users: Vec<u32>,
    touched: Vec<usize>,
}

impl Scratch {
    pub(crate) fn new(instance: &Instance) -> Self {
        let n = instance.subzone_count();
        Scratch {
            candidates: Vec::new(),
            earliest: vec![f64::INFINITY; n],
            users: vec![0; n],
            touched: Vec::new(),
        }
    }
}

/// Pick the next vehicle among lane fronts.
///
/// A candidate dominates when, at every subzone on its route that another candidate
/// also uses, its arrival is no later than any other candidate's. Candidates sharing
/// no subzone with any other candidate never dominate. Among dominators the earliest
/// entry wins (lowest lane on ties); with no dominator the pick is uniform.
fn pick_heuristic<R: Rng + ?Sized>(
    instance: &Instance,
    occ: &OccupancyState,
    cursor: &LaneCursor,
    rng: &mut R,
    scratch: &mut Scratch,
) -> Option<(usize, f64)> {
    scratch.candidates.clear();
    scratch
        .candidates
        .extend(cursor.fronts(instance).map(|i| (i, instance.entry_time(i, occ))));
    match scratch.candidates.len() {
        0 => return None,
        1 => return Some(scratch.candidates[0]),
        _ => {}
    }

    for &(i, entry) in &scratch.candidates {
        for (z, off) in instance.vehicle(i).route.iter() {
            let z = z.index();
            let t = entry + off;
            if scratch.users[z] == 0 {
                scratch.touched.push(z);
                scratch.earliest[z] = t;
            } else if t < scratch.earliest[z] {
                scratch.earliest[z] = t;
            }
            scratch.users[z] += 1;
        }
    }

    let mut chosen: Option<(usize, f64)> = None;
    for &(i, entry) in &scratch.candidates {
        let mut shares = false;
        let mut earliest_everywhere = true;
        for (z, off) in instance.vehicle(i).route.iter() {
            let z = z.index();
            if scratch.users[z] >= 2 {
                shares = true;
                if entry + off > scratch.earliest[z] + 1e-9 {
                    earliest_everywhere = false;
                    break;
                }
            }
        }
        if shares && earliest_everywhere && chosen.is_none_or(|(_, e)| entry < e) {
            chosen = Some((i, entry));
        }
    }

    for &z in &scratch.touched {
        scratch.users[z] = 0;
        scratch.earliest[z] = f64::INFINITY;
    }
    scratch.touched.clear();

    chosen.or_else(|| {
        let k = rng.random_range(0..scratch.candidates.len());
        Some(scratch.candidates[k])
    })
}

/// Heuristic completion from the state reached by a partial order. Appends to `out`
/// and returns the delay added by the appended vehicles.
pub(crate) fn complete_heuristic<R: Rng + ?Sized>(
    instance: &Instance,
    occ: &mut OccupancyState,
    cursor: &mut LaneCursor,
    rng: &mut R,
    scratch: &mut Scratch,
    out: &mut Vec<usize>,
) -> f64 {
    let mut delay = 0.0;
    while let Some((i, entry)) = pick_heuristic(instance, occ, cursor, rng, scratch) {
        instance.commit(i, entry, occ);
        cursor.advance_front(instance, i);
        delay += entry - instance.vehicle(i).t_min;
        out.push(i);
    }
    delay
}

/// Uniformly random completion over valid children.
pub(crate) fn complete_random<R: Rng + ?Sized>(
    instance: &Instance,
    occ: &mut OccupancyState,
    cursor: &mut LaneCursor,
    rng: &mut R,
    fronts: &mut Vec<usize>,
    out: &mut Vec<usize>,
) -> f64 {
    let mut delay = 0.0;
    loop {
        fronts.clear();
        fronts.extend(cursor.fronts(instance));
        if fronts.is_empty() {
            return delay;
        }
        let i = fronts[rng.random_range(0..fronts.len())];
        delay += instance.place(i, occ) - instance.vehicle(i).t_min;
        cursor.advance_front(instance, i);
        out.push(i);
    }
}

/// Complete `order` with the heuristic policy; returns the full order and its delay.
pub fn rollout_heuristic<R: Rng + ?Sized>(
    instance: &Instance,
    order: &PassingOrder,
    rng: &mut R,
) -> Result<(PassingOrder, f64)> {
    let mut indices = order.to_indices(instance)?;
    let (mut occ, mut cursor, base) = replay(instance, &indices)?;
    let mut scratch = Scratch::new(instance);
    let added = complete_heuristic(instance, &mut occ, &mut cursor, rng, &mut scratch, &mut indices);
    Ok((PassingOrder::from_indices(instance, &indices), base + added))
}

/// Complete `order` by uniform random choices among valid children.
pub fn rollout_random<R: Rng + ?Sized>(
    instance: &Instance,
    order: &PassingOrder,
    rng: &mut R,
) -> Result<(PassingOrder, f64)> {
    let mut indices = order.to_indices(instance)?;
    let (mut occ, mut cursor, base) = replay(instance, &indices)?;
    let mut fronts = Vec::new();
    let added = complete_random(instance, &mut occ, &mut cursor, rng, &mut fronts, &mut indices);
    Ok((PassingOrder::from_indices(instance, &indices), base + added))
}
