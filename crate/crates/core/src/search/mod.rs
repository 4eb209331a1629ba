//! Passing-order search over the solution tree.
//!
//! Depth-`k` nodes of the tree are length-`k` partial passing orders; leaves are
//! complete orders. Children are restricted to the front-most uncovered vehicle of
//! each lane, so every node is lane-order consistent by construction.

mod dump;
mod enumerate;
mod mcts;
mod rollout;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VehicleId;
use crate::schedule::{Instance, LaneCursor, OccupancyState};

pub use dump::{dump_tree, SnapshotNode, TreeDump, TreeSnapshot};
pub use enumerate::{
    enumerate_optimal, histogram, percentile_rank, Enumeration, EnumerationOptions, HistogramBin,
    Rank, DEFAULT_ENUMERATION_CAP,
};
pub use mcts::{
    mcts_search, node_score, ucb1_select, ChildStats, DelayNormalizer, IterationRecord,
    MctsConfig, SearchReport,
};
pub use rollout::{rollout_heuristic, rollout_random, RolloutPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassingOrder {
    pub sequence: Vec<VehicleId>,
    pub complete: bool,
}

impl PassingOrder {
    pub fn empty() -> Self {
        PassingOrder {
            sequence: Vec::new(),
            complete: false,
        }
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub(crate) fn from_indices(instance: &Instance, indices: &[usize]) -> Self {
        PassingOrder {
            sequence: indices.iter().map(|&i| instance.vehicle(i).id).collect(),
            complete: indices.len() == instance.len(),
        }
    }

    pub(crate) fn to_indices(&self, instance: &Instance) -> Result<Vec<usize>> {
        self.sequence
            .iter()
            .map(|&id| instance.index_of(id).ok_or(Error::UnknownVehicle(id)))
            .collect()
    }
}

impl fmt::Display for PassingOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for id in &self.sequence {
            if !first {
                f.write_str("-")?;
            }
            write!(f, "{id}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for PassingOrder {
    type Err = Error;

    /// Parses `3-1-2` (also accepts commas or whitespace); `complete` is left false.
    fn from_str(s: &str) -> Result<Self> {
        let sequence = s
            .split(|c: char| c == '-' || c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<u32>()
                    .map(VehicleId)
                    .map_err(|_| Error::InvalidOrder(format!("bad vehicle id `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PassingOrder {
            sequence,
            complete: false,
        })
    }
}

/// Replay a partial order, returning the occupancy, lane cursor and accumulated delay.
pub(crate) fn replay(
    instance: &Instance,
    indices: &[usize],
) -> Result<(OccupancyState, LaneCursor, f64)> {
    let mut occ = instance.seed().clone();
    let mut cursor = LaneCursor::new(instance);
    let mut delay = 0.0;
    for &i in indices {
        cursor.advance(instance, i)?;
        delay += instance.place(i, &mut occ) - instance.vehicle(i).t_min;
    }
    Ok((occ, cursor, delay))
}

pub(crate) fn fifo_indices(instance: &Instance) -> Vec<usize> {
    let mut cursor = LaneCursor::new(instance);
    let mut out = Vec::with_capacity(instance.len());
    while let Some(next) = cursor.fronts(instance).min_by(|&a, &b| {
        let (va, vb) = (instance.vehicle(a), instance.vehicle(b));
        va.t_min.total_cmp(&vb.t_min).then(va.id.cmp(&vb.id))
    }) {
        cursor.advance_front(instance, next);
        out.push(next);
    }
    out
}

/// First-come-first-served baseline: ascending minimum arrival time, ties by vehicle id,
/// never overtaking within a lane.
pub fn fifo_order(instance: &Instance) -> PassingOrder {
    PassingOrder::from_indices(instance, &fifo_indices(instance))
}

/// Vehicles that may be appended to `order`: the nearest uncovered vehicle of each lane.
pub fn valid_children(instance: &Instance, order: &PassingOrder) -> Result<Vec<VehicleId>> {
    let mut cursor = LaneCursor::new(instance);
    for i in order.to_indices(instance)? {
        cursor.advance(instance, i)?;
    }
    Ok(cursor
        .fronts(instance)
        .map(|i| instance.vehicle(i).id)
        .collect())
}
