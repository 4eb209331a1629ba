//! Exhaustive enumeration of lane-order-consistent passing orders.

use serde::{Deserialize, Serialize};

use super::PassingOrder;
use crate::error::{Error, Result};
use crate::model::{Movement, SubzoneId};
use crate::schedule::{Instance, LaneCursor, OccupancyState};

pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationOptions {
    /// Refuse instances with more valid orders than this.
    pub cap: u64,
    /// Keep the delay of every complete order.
    pub collect_delays: bool,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            cap: DEFAULT_ENUMERATION_CAP,
            collect_delays: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub best_order: PassingOrder,
    pub best_delay: f64,
    pub orders_visited: u64,
    /// Delays of all complete orders in depth-first visiting order.
    pub delays: Option<Vec<f64>>,
}

struct Walker<'a> {
    instance: &'a Instance,
    occ: OccupancyState,
    cursor: LaneCursor,
    order: Vec<usize>,
    undo: Vec<(SubzoneId, Option<f64>, Option<Movement>)>,
    fronts: Vec<Vec<usize>>,
    best: Vec<usize>,
    best_delay: f64,
    visited: u64,
    delays: Option<Vec<f64>>,
}

impl Walker<'_> {
    fn walk(&mut self, depth: usize, delay: f64) {
        let inst = self.instance;
        if depth == inst.len() {
            self.visited += 1;
            if let Some(d) = self.delays.as_mut() {
                d.push(delay);
            }
            if delay < self.best_delay {
                self.best_delay = delay;
                self.best.clone_from(&self.order);
            }
            return;
        }
        let mut fronts = std::mem::take(&mut self.fronts[depth]);
        fronts.clear();
        fronts.extend(self.cursor.fronts(inst));
        for &v in &fronts {
            let entry = inst.entry_time(v, &self.occ);
            let mark = self.undo.len();
            for (z, _) in inst.vehicle(v).route.iter() {
                self.undo.push((z, self.occ.t_max(z), self.occ.last_movement(z)));
            }
            inst.commit(v, entry, &mut self.occ);
            self.cursor.advance_front(inst, v);
            self.order.push(v);

            self.walk(depth + 1, delay + entry - inst.vehicle(v).t_min);

            self.order.pop();
            self.cursor.retreat(inst, v);
            while self.undo.len() > mark {
                let (z, t, m) = self.undo.pop().unwrap();
                self.occ.restore(z, t, m);
            }
        }
        self.fronts[depth] = fronts;
    }
}

/// Exact minimum-delay order by depth-first walk over all valid interleavings.
pub fn enumerate_optimal(instance: &Instance, options: &EnumerationOptions) -> Result<Enumeration> {
    match instance.order_count() {
        Some(count) if count <= options.cap as u128 => {}
        _ => {
            return Err(Error::EnumerationCap {
                count: format!("about 10^{:.2}", instance.order_count_log10()),
                cap: options.cap,
            })
        }
    }
    let capacity = if options.collect_delays {
        instance.order_count().unwrap_or(0) as usize
    } else {
        0
    };
    let mut walker = Walker {
        instance,
        occ: instance.seed().clone(),
        cursor: LaneCursor::new(instance),
        order: Vec::with_capacity(instance.len()),
        undo: Vec::new(),
        fronts: vec![Vec::new(); instance.len() + 1],
        best: Vec::new(),
        best_delay: f64::INFINITY,
        visited: 0,
        delays: options.collect_delays.then(|| Vec::with_capacity(capacity)),
    };
    walker.walk(0, 0.0);
    Ok(Enumeration {
        best_order: PassingOrder::from_indices(instance, &walker.best),
        best_delay: if instance.is_empty() { 0.0 } else { walker.best_delay },
        orders_visited: walker.visited,
        delays: walker.delays,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
}

/// Equal-width histogram over the observed range. A degenerate range gives one bin.
pub fn histogram(delays: &[f64], bins: usize) -> Vec<HistogramBin> {
    if delays.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = delays.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = delays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return vec![HistogramBin {
            lower: lo,
            upper: hi,
            count: delays.len() as u64,
        }];
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            lower: lo + width * k as f64,
            upper: if k + 1 == bins { hi } else { lo + width * (k + 1) as f64 },
            count: 0,
        })
        .collect();
    for &d in delays {
        let k = (((d - lo) / width) as usize).min(bins - 1);
        out[k].count += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rank {
    /// Orders with strictly smaller delay.
    pub better: u64,
    pub total: u64,
    /// 1-based rank (`better + 1`).
    pub rank: u64,
    /// `better / total`.
    pub fraction: f64,
}

/// Position of `delay` among all enumerated delays.
pub fn percentile_rank(delays: &[f64], delay: f64) -> Rank {
    let tol = 1e-9 * delay.abs().max(1.0);
    let better = delays.iter().filter(|&&d| d < delay - tol).count() as u64;
    let total = delays.len() as u64;
    Rank {
        better,
        total,
        rank: better + 1,
        fraction: if total == 0 { 0.0 } else { better as f64 / total as f64 },
    }
}
