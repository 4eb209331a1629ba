//! Monte Carlo tree search over partial passing orders.
//!
//! Each iteration selects down the tree by UCB1 to a node with unexpanded children,
//! expands one of them at random, completes it with one or more rollouts, and
//! propagates the visit and best-delay statistics back to the root. The best complete
//! order is tracked throughout and starts from the FIFO order.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dump::{SnapshotNode, TreeSnapshot};
use super::rollout::{complete_heuristic, complete_random, RolloutPolicy, Scratch};
use super::{fifo_indices, PassingOrder};
use crate::error::{Error, Result};
use crate::schedule::{Instance, LaneCursor, OccupancyState};

/// Search parameters. `Default` carries both the node and the time budget; fields
/// missing from a deserialized config fall back to [`MctsConfig::with_nodes`]`(1000)`
/// instead, so configuration files describe reproducible runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default = "MctsConfig::file_default", deny_unknown_fields)]
pub struct MctsConfig {
    /// Exploration weight of UCB1.
    pub c: f64,
    /// Weight of the node's own partial delay against its best descendant delay.
    pub omega: f64,
    pub budget_nodes: Option<u64>,
    pub budget_time: Option<f64>,
    pub rollout_policy: RolloutPolicy,
    pub rollouts_per_expansion: u32,
    pub rng_seed: u64,
    /// Keep a snapshot of the tree in the report.
    pub keep_tree: bool,
    /// Record one [`IterationRecord`] per iteration.
    pub record_log: bool,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            c: 0.05,
            omega: 0.85,
            budget_nodes: Some(1000),
            budget_time: Some(0.1),
            rollout_policy: RolloutPolicy::Heuristic,
            rollouts_per_expansion: 1,
            rng_seed: 0,
            keep_tree: false,
            record_log: false,
        }
    }
}

impl MctsConfig {
    /// Node budget only, no wall-clock limit: the run is reproducible.
    pub fn with_nodes(budget: u64) -> Self {
        MctsConfig {
            budget_nodes: Some(budget),
            budget_time: None,
            ..MctsConfig::default()
        }
    }

    fn file_default() -> Self {
        MctsConfig::with_nodes(1000)
    }

    /// Search until the whole tree has been expanded.
    pub fn exhaustive() -> Self {
        MctsConfig {
            budget_nodes: Some(u64::MAX),
            budget_time: None,
            ..MctsConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("c must be >= 0, got {}", self.c)));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::InvalidArgument(format!(
                "omega must lie in [0, 1], got {}",
                self.omega
            )));
        }
        if self.budget_nodes.is_none() && self.budget_time.is_none() {
            return Err(Error::InvalidArgument(
                "at least one of budget_nodes and budget_time must be set".into(),
            ));
        }
        if let Some(t) = self.budget_time {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("budget_time must be positive, got {t}")));
            }
        }
        if self.rollouts_per_expansion == 0 {
            return Err(Error::InvalidArgument("rollouts_per_expansion must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub best_delay: f64,
    pub nodes_expanded: u64,
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub best_order: PassingOrder,
    pub best_delay: f64,
    pub fifo_delay: f64,
    pub nodes_expanded: u64,
    pub rollouts: u64,
    pub elapsed: f64,
    /// The whole tree was expanded, so `best_delay` is the exact optimum.
    pub exhausted: bool,
    pub iterations: Vec<IterationRecord>,
    pub tree_snapshot: Option<TreeSnapshot>,
}

/// Running delay ranges used to map delays into `[0, 1]`, smaller delay scoring higher.
///
/// Partial delays are normalised per depth, since only equal-length orders are
/// comparable; complete-order delays share one global range.
#[derive(Debug, Clone, Default)]
pub struct DelayNormalizer {
    depth: Vec<Option<(f64, f64)>>,
    global: Option<(f64, f64)>,
}

fn widen(range: &mut Option<(f64, f64)>, v: f64) {
    *range = Some(match *range {
        None => (v, v),
        Some((lo, hi)) => (lo.min(v), hi.max(v)),
    });
}

fn scale(range: Option<(f64, f64)>, v: f64, what: &str) -> Result<f64> {
    let (lo, hi) = range.ok_or_else(|| Error::Search(format!("no {what} delays registered")))?;
    let tol = 1e-9 * hi.abs().max(1.0);
    if v < lo - tol || v > hi + tol {
        return Err(Error::Search(format!(
            "{what} delay {v} outside the registered range [{lo}, {hi}]"
        )));
    }
    if hi - lo <= tol {
        return Ok(1.0);
    }
    Ok(((hi - v) / (hi - lo)).clamp(0.0, 1.0))
}

impl DelayNormalizer {
    pub fn new() -> Self {
        DelayNormalizer::default()
    }

    pub fn register_partial(&mut self, depth: usize, delay: f64) {
        if self.depth.len() <= depth {
            self.depth.resize(depth + 1, None);
        }
        widen(&mut self.depth[depth], delay);
    }

    pub fn register_complete(&mut self, delay: f64) {
        widen(&mut self.global, delay);
    }

    pub fn partial_range(&self, depth: usize) -> Option<(f64, f64)> {
        self.depth.get(depth).copied().flatten()
    }

    pub fn complete_range(&self) -> Option<(f64, f64)> {
        self.global
    }
}

/// Node score: `omega * s(own) + (1 - omega) * s(best)`, with `s` the normalised,
/// direction-flipped delay.
pub fn node_score(
    own_delay: f64,
    best_descendant_delay: f64,
    depth: usize,
    omega: f64,
    normalizer: &DelayNormalizer,
) -> Result<f64> {
    let own = scale(normalizer.partial_range(depth), own_delay, "partial")?;
    let best = scale(normalizer.complete_range(), best_descendant_delay, "complete")?;
    Ok(omega * own + (1.0 - omega) * best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChildStats {
    pub score: f64,
    pub visits: u64,
}

/// UCB1 over children; returns the index of the maximiser, lowest index on ties.
pub fn ucb1_select(parent_visits: u64, children: &[ChildStats], c: f64) -> Result<usize> {
    if children.is_empty() {
        return Err(Error::Search("UCB1 selection needs at least one child".into()));
    }
    let ln_n = (parent_visits.max(1) as f64).ln();
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, child) in children.iter().enumerate() {
        let value = if child.visits == 0 {
            f64::INFINITY
        } else {
            child.score + c * (ln_n / child.visits as f64).sqrt()
        };
        if value > best_value {
            best = i;
            best_value = value;
        }
    }
    Ok(best)
}

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    parent: u32,
    vehicle: u32,
    depth: u32,
    children: Vec<u32>,
    unexpanded: Vec<u32>,
    visits: u64,
    own_delay: f64,
    best_delay: f64,
    score: f64,
    exhausted: bool,
}

struct Search<'a> {
    instance: &'a Instance,
    config: &'a MctsConfig,
    nodes: Vec<Node>,
    normalizer: DelayNormalizer,
    rng: ChaCha8Rng,
    scratch: Scratch,
    fronts: Vec<usize>,
    best_order: Vec<usize>,
    best_delay: f64,
    rollouts: u64,
    buf: Buffers,
}

/// Per-iteration working storage, reused to avoid allocation in the hot loop.
struct Buffers {
    ids: Vec<usize>,
    stats: Vec<ChildStats>,
    path: Vec<usize>,
    order: Vec<usize>,
    rollout: Vec<usize>,
    occ: OccupancyState,
    roll_occ: OccupancyState,
    cursor: LaneCursor,
    roll_cursor: LaneCursor,
    root_cursor: LaneCursor,
}

impl Buffers {
    fn new(instance: &Instance) -> Self {
        Buffers {
            ids: Vec::new(),
            stats: Vec::new(),
            path: Vec::with_capacity(instance.len() + 1),
            order: Vec::with_capacity(instance.len()),
            rollout: Vec::with_capacity(instance.len()),
            occ: instance.seed().clone(),
            roll_occ: instance.seed().clone(),
            cursor: LaneCursor::new(instance),
            roll_cursor: LaneCursor::new(instance),
            root_cursor: LaneCursor::new(instance),
        }
    }
}

fn score_of(node: &Node, omega: f64, normalizer: &DelayNormalizer) -> f64 {
    node_score(node.own_delay, node.best_delay, node.depth as usize, omega, normalizer)
        .expect("delays of tree nodes are always registered")
}

fn consider(best_order: &mut Vec<usize>, best_delay: &mut f64, order: &[usize], delay: f64) {
    if delay < *best_delay {
        *best_delay = delay;
        best_order.clear();
        best_order.extend_from_slice(order);
    }
}

impl<'a> Search<'a> {
    fn score(&self, node: &Node) -> f64 {
        score_of(node, self.config.omega, &self.normalizer)
    }

    fn select_child(&mut self, parent: usize) -> usize {
        let Search {
            nodes,
            normalizer,
            config,
            buf,
            ..
        } = self;
        buf.ids.clear();
        buf.stats.clear();
        for k in 0..nodes[parent].children.len() {
            let id = nodes[parent].children[k] as usize;
            if nodes[id].exhausted {
                continue;
            }
            // ranges move as the search proceeds; refresh before comparing siblings
            let score = score_of(&nodes[id], config.omega, normalizer);
            nodes[id].score = score;
            buf.ids.push(id);
            buf.stats.push(ChildStats {
                score,
                visits: nodes[id].visits,
            });
        }
        let k = ucb1_select(nodes[parent].visits, &buf.stats, config.c)
            .expect("a non-exhausted node has a non-exhausted child");
        buf.ids[k]
    }

    fn iterate(&mut self) {
        let inst = self.instance;
        let b = &mut self.buf;
        b.occ.clone_from(inst.seed());
        b.cursor.clone_from(&b.root_cursor);
        b.order.clear();
        b.path.clear();
        b.path.push(0);
        let mut delay = 0.0;

        let mut node = 0;
        while self.nodes[node].unexpanded.is_empty() {
            node = self.select_child(node);
            let v = self.nodes[node].vehicle as usize;
            let b = &mut self.buf;
            delay += inst.place(v, &mut b.occ) - inst.vehicle(v).t_min;
            b.cursor.advance_front(inst, v);
            b.order.push(v);
            b.path.push(node);
        }

        let pending = &mut self.nodes[node].unexpanded;
        let v = pending.swap_remove(self.rng.random_range(0..pending.len())) as usize;
        let b = &mut self.buf;
        delay += inst.place(v, &mut b.occ) - inst.vehicle(v).t_min;
        b.cursor.advance_front(inst, v);
        b.order.push(v);
        let depth = b.order.len();
        self.normalizer.register_partial(depth, delay);

        let complete = depth == inst.len();
        let mut best_here = f64::INFINITY;
        if complete {
            best_here = delay;
            self.normalizer.register_complete(delay);
            consider(&mut self.best_order, &mut self.best_delay, &self.buf.order, delay);
        } else {
            for _ in 0..self.config.rollouts_per_expansion {
                let b = &mut self.buf;
                b.rollout.clear();
                b.rollout.extend_from_slice(&b.order);
                b.roll_occ.clone_from(&b.occ);
                b.roll_cursor.clone_from(&b.cursor);
                let added = match self.config.rollout_policy {
                    RolloutPolicy::Heuristic => complete_heuristic(
                        inst,
                        &mut b.roll_occ,
                        &mut b.roll_cursor,
                        &mut self.rng,
                        &mut self.scratch,
                        &mut b.rollout,
                    ),
                    RolloutPolicy::Random => complete_random(
                        inst,
                        &mut b.roll_occ,
                        &mut b.roll_cursor,
                        &mut self.rng,
                        &mut self.fronts,
                        &mut b.rollout,
                    ),
                };
                let total = delay + added;
                self.rollouts += 1;
                self.normalizer.register_complete(total);
                consider(&mut self.best_order, &mut self.best_delay, &self.buf.rollout, total);
                best_here = best_here.min(total);
            }
        }

        let id = self.nodes.len();
        let child = Node {
            parent: node as u32,
            vehicle: v as u32,
            depth: depth as u32,
            children: Vec::new(),
            unexpanded: self.buf.cursor.fronts(inst).map(|i| i as u32).collect(),
            visits: 1,
            own_delay: delay,
            best_delay: best_here,
            score: 0.0,
            exhausted: complete,
        };
        self.nodes.push(child);
        self.nodes[id].score = self.score(&self.nodes[id]);
        self.nodes[node].children.push(id as u32);

        for k in (0..self.buf.path.len()).rev() {
            let a = self.buf.path[k];
            let n = &mut self.nodes[a];
            n.visits += 1;
            n.best_delay = n.best_delay.min(best_here);
            let exhausted = n.unexpanded.is_empty();
            let score = self.score(&self.nodes[a]);
            let all_done = exhausted
                && self.nodes[a]
                    .children
                    .iter()
                    .all(|&c| self.nodes[c as usize].exhausted);
            let n = &mut self.nodes[a];
            n.score = score;
            n.exhausted = all_done;
        }
    }

    fn snapshot(&self) -> TreeSnapshot {
        let inst = self.instance;
        let mut labels: Vec<String> = Vec::with_capacity(self.nodes.len());
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (id, n) in self.nodes.iter().enumerate() {
            let parent = (n.parent != NO_PARENT).then_some(n.parent as usize);
            let vehicle = parent.map(|_| inst.vehicle(n.vehicle as usize).id);
            let label = match (parent, vehicle) {
                (Some(p), Some(v)) if labels[p].is_empty() => v.to_string(),
                (Some(p), Some(v)) => format!("{}-{v}", labels[p]),
                _ => String::new(),
            };
            labels.push(label.clone());
            nodes.push(SnapshotNode {
                id,
                parent,
                depth: n.depth as usize,
                order: label,
                vehicle,
                visits: n.visits,
                own_delay: n.own_delay,
                best_delay: n.best_delay,
                score: self.score(n),
            });
        }
        TreeSnapshot { nodes }
    }
}

/// Run MCTS on a static instance.
pub fn mcts_search(instance: &Instance, config: &MctsConfig) -> Result<SearchReport> {
    config.validate()?;
    if instance.is_empty() {
        return Err(Error::Search("cannot search an empty vehicle set".into()));
    }
    let start = Instant::now();

    let fifo = fifo_indices(instance);
    let (_, _, fifo_delay) = super::replay(instance, &fifo)?;

    let mut normalizer = DelayNormalizer::new();
    normalizer.register_partial(0, 0.0);
    normalizer.register_complete(fifo_delay);

    let root_cursor = LaneCursor::new(instance);
    let root = Node {
        parent: NO_PARENT,
        vehicle: 0,
        depth: 0,
        children: Vec::new(),
        unexpanded: root_cursor.fronts(instance).map(|i| i as u32).collect(),
        visits: 0,
        own_delay: 0.0,
        best_delay: fifo_delay,
        score: 1.0,
        exhausted: false,
    };

    let mut search = Search {
        instance,
        config,
        nodes: vec![root],
        normalizer,
        rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        scratch: Scratch::new(instance),
        fronts: Vec::new(),
        best_order: fifo,
        best_delay: fifo_delay,
        rollouts: 0,
        buf: Buffers::new(instance),
    };

    let node_budget = config.budget_nodes.unwrap_or(u64::MAX);
    let mut iterations = Vec::new();
    let mut expanded = 0u64;
    while !search.nodes[0].exhausted && expanded < node_budget {
        if let Some(limit) = config.budget_time {
            if start.elapsed().as_secs_f64() >= limit {
                break;
            }
        }
        search.iterate();
        expanded += 1;
        if config.record_log {
            iterations.push(IterationRecord {
                iteration: expanded,
                best_delay: search.best_delay,
                nodes_expanded: expanded,
                elapsed: start.elapsed().as_secs_f64(),
            });
        }
    }

    let tree_snapshot = config.keep_tree.then(|| search.snapshot());
    Ok(SearchReport {
        best_order: PassingOrder::from_indices(instance, &search.best_order),
        best_delay: search.best_delay,
        fifo_delay,
        nodes_expanded: expanded,
        rollouts: search.rollouts,
        elapsed: start.elapsed().as_secs_f64(),
        exhausted: search.nodes[0].exhausted,
        iterations,
        tree_snapshot,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::super::test_support::one_zone;
    use super::super::{enumerate_optimal, EnumerationOptions};
    use super::*;
    use crate::model::{Movement, SafetyGapTable};
    use crate::schedule::test_support::{planned, random_instance, route};
    use crate::schedule::{interpret_order, PlannedVehicle};

    #[test]
    fn ucb_pure_exploitation() {
        let kids = [
            ChildStats { score: 0.5, visits: 3 },
            ChildStats { score: 0.6, visits: 3 },
        ];
        assert_eq!(ucb1_select(6, &kids, 0.0).unwrap(), 1);
    }

    #[test]
    fn ucb_with_exploration_term() {
        let kids = [
            ChildStats { score: 0.5, visits: 10 },
            ChildStats { score: 0.6, visits: 2 },
        ];
        let v0 = 0.5 + 0.05 * (12f64.ln() / 10.0).sqrt();
        let v1 = 0.6 + 0.05 * (12f64.ln() / 2.0).sqrt();
        assert!((v0 - 0.5249).abs() < 1e-4);
        assert!((v1 - 0.6557).abs() < 1e-4);
        assert_eq!(ucb1_select(12, &kids, 0.05).unwrap(), 1);
    }

    #[test]
    fn ucb_ties_pick_first() {
        let kids = [ChildStats { score: 0.4, visits: 5 }; 3];
        assert_eq!(ucb1_select(15, &kids, 0.05).unwrap(), 0);
        assert!(ucb1_select(15, &[], 0.05).is_err());
    }

    #[test]
    fn score_best_case_is_one() {
        let mut n = DelayNormalizer::new();
        n.register_partial(2, 2.0);
        n.register_partial(2, 6.0);
        n.register_complete(10.0);
        n.register_complete(20.0);
        assert_eq!(node_score(2.0, 10.0, 2, 0.85, &n).unwrap(), 1.0);
        assert_eq!(node_score(6.0, 20.0, 2, 0.85, &n).unwrap(), 0.0);
    }

    #[test]
    fn score_mixes_depth_and_global_ranges() {
        let mut n = DelayNormalizer::new();
        n.register_partial(2, 2.0);
        n.register_partial(2, 6.0);
        n.register_complete(10.0);
        n.register_complete(20.0);
        let q = node_score(2.0, 12.0, 2, 0.85, &n).unwrap();
        assert!((q - 0.97).abs() < 1e-12);
    }

    #[test]
    fn score_rejects_unregistered_delays() {
        let mut n = DelayNormalizer::new();
        n.register_complete(1.0);
        assert!(node_score(0.0, 1.0, 3, 0.5, &n).is_err());
        n.register_partial(3, 0.0);
        assert!(node_score(0.0, 5.0, 3, 0.5, &n).is_err());
        // degenerate ranges map to 1
        assert_eq!(node_score(0.0, 1.0, 3, 0.5, &n).unwrap(), 1.0);
    }

    fn two_conflicting() -> Instance {
        one_zone(&[(1, 0, 10.0, 10.0), (2, 1, 10.0, 10.5)])
    }

    #[test]
    fn two_vehicle_search_finds_optimum() {
        let inst = two_conflicting();
        let report = mcts_search(&inst, &MctsConfig::with_nodes(2)).unwrap();
        assert_eq!(report.best_order.to_string(), "1-2");
        assert!((report.best_delay - 1.0).abs() < 1e-12);
        assert_eq!(report.nodes_expanded, 2);
    }

    #[test]
    fn single_lane_returns_the_unique_order() {
        let inst = one_zone(&[(1, 0, 10.0, 2.0), (2, 0, 20.0, 2.5), (3, 0, 30.0, 2.8)]);
        let report = mcts_search(&inst, &MctsConfig::with_nodes(50)).unwrap();
        assert_eq!(report.best_order.to_string(), "1-2-3");
        assert!(report.exhausted);
        assert_eq!(report.nodes_expanded, 3);
    }

    #[test]
    fn empty_instance_is_an_error() {
        let inst = one_zone(&[]);
        assert!(mcts_search(&inst, &MctsConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = MctsConfig::default();
        c.omega = 1.5;
        assert!(c.validate().is_err());
        let mut c = MctsConfig::default();
        c.budget_nodes = None;
        c.budget_time = None;
        assert!(c.validate().is_err());
        let mut c = MctsConfig::default();
        c.c = -0.1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn report_is_consistent_with_interpretation() {
        let inst = random_instance(11, 12, 6);
        let mut cfg = MctsConfig::with_nodes(300);
        cfg.record_log = true;
        let report = mcts_search(&inst, &cfg).unwrap();
        let s = interpret_order(&inst, &report.best_order.sequence).unwrap();
        assert!((s.total_delay - report.best_delay).abs() < 1e-9);
        assert!(report.best_order.complete);
        assert!(report.best_delay <= report.fifo_delay);
        assert!(report
            .iterations
            .windows(2)
            .all(|w| w[1].best_delay <= w[0].best_delay));
    }

    /// Replays the tree snapshot and checks visit conservation.
    #[test]
    fn visits_are_conserved() {
        let inst = random_instance(5, 10, 6);
        let mut cfg = MctsConfig::with_nodes(200);
        cfg.keep_tree = true;
        let report = mcts_search(&inst, &cfg).unwrap();
        let snap = report.tree_snapshot.unwrap();
        assert_eq!(snap.nodes.len() as u64, report.nodes_expanded + 1);
        assert_eq!(snap.nodes[0].visits, report.nodes_expanded);
        let mut child_visits = vec![0u64; snap.nodes.len()];
        for n in &snap.nodes[1..] {
            child_visits[n.parent.unwrap()] += n.visits;
        }
        for n in &snap.nodes[1..] {
            assert_eq!(n.visits, child_visits[n.id] + 1);
            assert!((0.0..=1.0).contains(&n.score));
            assert_eq!(n.depth, snap.nodes[n.parent.unwrap()].depth + 1);
        }
    }

    fn dyadic_instance(seed: u64, shift: f64) -> Instance {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vs: Vec<PlannedVehicle> = Vec::new();
        let routes = [
            route(&[0, 1], &[0.0, 0.25]),
            route(&[1, 2], &[0.0, 0.5]),
            route(&[2, 0], &[0.0, 0.25]),
            route(&[1], &[0.0]),
        ];
        let mut d = [0.0f64; 4];
        for id in 0..9 {
            let l = rng.random_range(0..4usize);
            d[l] += 1.0 + rng.random_range(0..8) as f64;
            let t = d[l] / 4.0 + shift;
            vs.push(planned(id, l as u32, Movement::Straight, d[l], t, routes[l].clone()));
        }
        Instance::new(vs, 3, SafetyGapTable::default(), None).unwrap()
    }

    proptest! {
        #[test]
        fn never_worse_than_fifo(seed in any::<u64>(), budget in 1u64..200) {
            let inst = random_instance(seed, 12, 6);
            let mut cfg = MctsConfig::with_nodes(budget);
            cfg.rng_seed = seed;
            let r = mcts_search(&inst, &cfg).unwrap();
            prop_assert!(r.best_delay <= r.fifo_delay);
        }

        #[test]
        fn exhaustive_search_is_exact(seed in any::<u64>()) {
            let inst = random_instance(seed, 7, 5);
            let r = mcts_search(&inst, &MctsConfig::exhaustive()).unwrap();
            let e = enumerate_optimal(&inst, &EnumerationOptions::default()).unwrap();
            prop_assert!(r.exhausted);
            prop_assert!((r.best_delay - e.best_delay).abs() < 1e-9);
        }

        #[test]
        fn time_origin_shift_does_not_change_search(seed in any::<u64>()) {
            let a = dyadic_instance(seed, 0.0);
            let b = dyadic_instance(seed, 64.0);
            let mut cfg = MctsConfig::with_nodes(60);
            cfg.rng_seed = seed;
            let ra = mcts_search(&a, &cfg).unwrap();
            let rb = mcts_search(&b, &cfg).unwrap();
            prop_assert_eq!(ra.best_order, rb.best_order);
            prop_assert_eq!(ra.best_delay, rb.best_delay);
        }

        #[test]
        fn best_descendant_is_min_of_subtree(seed in any::<u64>()) {
            let inst = random_instance(seed, 9, 6);
            let mut cfg = MctsConfig::with_nodes(80);
            cfg.keep_tree = true;
            let r = mcts_search(&inst, &cfg).unwrap();
            let snap = r.tree_snapshot.unwrap();
            let mut sub_min: Vec<f64> = snap.nodes.iter().map(|n| n.best_delay).collect();
            for n in snap.nodes.iter().skip(1).rev() {
                let p = n.parent.unwrap();
                sub_min[p] = sub_min[p].min(sub_min[n.id]);
            }
            for n in &snap.nodes[1..] {
                prop_assert!(n.best_delay <= sub_min[n.id] + 1e-12);
                prop_assert!(n.best_delay >= r.best_delay - 1e-12);
            }
        }
    }
}
