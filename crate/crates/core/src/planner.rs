//! Minimum-energy path search over a landscape grid and its time parameterisation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::landscape::EnergyLandscape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridNode {
    pub ix: usize,
    pub ia: usize,
    pub ib: usize,
}

impl GridNode {
    pub fn new(ix: usize, ia: usize, ib: usize) -> Self {
        Self { ix, ia, ib }
    }

    /// Index of the single axis on which `self` and `other` differ by one, if any.
    pub fn step_axis(&self, other: &GridNode) -> Option<usize> {
        let d = [
            self.ix.abs_diff(other.ix),
            self.ia.abs_diff(other.ia),
            self.ib.abs_diff(other.ib),
        ];
        match d {
            [1, 0, 0] => Some(0),
            [0, 1, 0] => Some(1),
            [0, 0, 1] => Some(2),
            _ => None,
        }
    }

    fn neighbours(&self, dims: [usize; 3]) -> impl Iterator<Item = GridNode> + '_ {
        let (n, d) = (*self, dims);
        (0..6).filter_map(move |k| {
            let mut idx = [n.ix, n.ia, n.ib];
            let axis = k / 2;
            if k % 2 == 0 {
                idx[axis] = idx[axis].checked_sub(1)?;
            } else {
                idx[axis] += 1;
                if idx[axis] >= d[axis] {
                    return None;
                }
            }
            Some(GridNode::new(idx[0], idx[1], idx[2]))
        })
    }
}

/// Cost of moving between two cells: the energy increase, descents are free.
/// `None` when either cell is unreachable.
pub fn edge_cost(from: f64, to: f64) -> Option<f64> {
    (from.is_finite() && to.is_finite()).then(|| (to - from).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrajectory {
    pub path: Vec<GridNode>,
    /// Sum of positive energy increments along the path (J).
    pub cost: f64,
    /// Timestamp of each node (s). Empty until time-parameterised.
    pub times: Vec<f64>,
    /// (X, alpha, beta) of each node.
    pub states: Vec<[f64; 3]>,
}

impl PlannedTrajectory {
    pub fn start_time(&self) -> f64 {
        self.times.first().copied().unwrap_or(0.0)
    }

    pub fn end_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Reference (X, alpha, beta) at `t` by linear interpolation, held at the ends.
    pub fn reference(&self, t: f64) -> [f64; 3] {
        let n = self.times.len();
        if n == 0 {
            return self.states.first().copied().unwrap_or([0.0; 3]);
        }
        if t <= self.times[0] {
            return self.states[0];
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1];
        }
        let j = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let u = (t - t0) / (t1 - t0);
        let (a, b) = (self.states[j - 1], self.states[j]);
        [0, 1, 2].map(|i| a[i] + u * (b[i] - a[i]))
    }

    /// Reference rates (dX/dt, dalpha/dt, dbeta/dt) on the segment containing `t`.
    pub fn reference_rate(&self, t: f64) -> [f64; 3] {
        let n = self.times.len();
        if n < 2 || t < self.times[0] || t >= self.times[n - 1] {
            return [0.0; 3];
        }
        let j = self.times.partition_point(|&s| s <= t).min(n - 1);
        let dt = self.times[j] - self.times[j - 1];
        let (a, b) = (self.states[j - 1], self.states[j]);
        [0, 1, 2].map(|i| (b[i] - a[i]) / dt)
    }

    pub fn max_abs_alpha(&self) -> f64 {
        self.states.iter().map(|s| s[1].abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_beta(&self) -> f64 {
        self.states.iter().map(|s| s[2].abs()).fold(0.0, f64::max)
    }
}

/// Recompute a path's cost from the landscape. `None` if the path is not a
/// chain of legal single-axis moves between finite cells.
pub fn path_cost(landscape: &EnergyLandscape, path: &[GridNode]) -> Option<f64> {
    let energy = |n: &GridNode| landscape.get(n.ix, n.ia, n.ib);
    if path.iter().any(|n| !energy(n).is_finite()) {
        return None;
    }
    path.windows(2).try_fold(0.0, |acc, w| {
        w[0].step_axis(&w[1])?;
        Some(acc + edge_cost(energy(&w[0]), energy(&w[1]))?)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    node: GridNode,
}

impl Eq for Open {}

impl Ord for Open {
    // Reversed so the max-heap pops the smallest f, then the smallest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-cost path between two finite cells. The result is untimed.
pub fn astar(
    landscape: &EnergyLandscape,
    start: GridNode,
    goal: GridNode,
) -> Result<PlannedTrajectory> {
    let dims = landscape.dims();
    let in_bounds = |n: &GridNode| n.ix < dims[0] && n.ia < dims[1] && n.ib < dims[2];
    if !in_bounds(&start) || !in_bounds(&goal) {
        return Err(Error::Planning(format!(
            "{start:?} or {goal:?} is outside the grid"
        )));
    }
    let energy = |n: &GridNode| landscape.values[landscape.index(n.ix, n.ia, n.ib)];
    if !energy(&start).is_finite() || !energy(&goal).is_finite() {
        return Err(Error::Planning("start or goal cell is unreachable".into()));
    }
    let e_goal = energy(&goal);
    let heuristic = |n: &GridNode| (e_goal - energy(n)).max(0.0);

    let total = landscape.values.len();
    let mut g = vec![f64::INFINITY; total];
    let mut parent = vec![usize::MAX; total];
    let mut closed = vec![false; total];
    let idx = |n: &GridNode| landscape.index(n.ix, n.ia, n.ib);

    let mut open = BinaryHeap::new();
    g[idx(&start)] = 0.0;
    open.push(Open {
        f: heuristic(&start),
        node: start,
    });
    while let Some(Open { node, .. }) = open.pop() {
        let i = idx(&node);
        if closed[i] {
            continue;
        }
        closed[i] = true;
        if node == goal {
            let mut path = vec![node];
            let mut cur = i;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                path.push(unflatten(cur, dims));
            }
            path.reverse();
            let states = path.iter().map(|n| node_state(landscape, n)).collect();
            return Ok(PlannedTrajectory {
                path,
                cost: g[i],
                times: Vec::new(),
                states,
            });
        }
        let e = energy(&node);
        for m in node.neighbours(dims) {
            let j = idx(&m);
            if closed[j] {
                continue;
            }
            let Some(c) = edge_cost(e, energy(&m)) else {
                continue;
            };
            let cand = g[i] + c;
            if cand < g[j] {
                g[j] = cand;
                parent[j] = i;
                open.push(Open {
                    f: cand + heuristic(&m),
                    node: m,
                });
            }
        }
    }
    Err(Error::Planning(
        "goal is unreachable from the start cell".into(),
    ))
}

fn unflatten(i: usize, dims: [usize; 3]) -> GridNode {
    let ib = i % dims[2];
    let ia = (i / dims[2]) % dims[1];
    let ix = i / (dims[1] * dims[2]);
    GridNode::new(ix, ia, ib)
}

fn node_state(landscape: &EnergyLandscape, n: &GridNode) -> [f64; 3] {
    let s = &landscape.spec;
    [s.x_at(n.ix), s.alpha_at(n.ia), s.beta_at(n.ib)]
}

fn nearest_index(value: f64, min: f64, step: f64, len: usize) -> usize {
    let i = ((value - min) / step).round();
    i.clamp(0.0, (len - 1) as f64) as usize
}

/// Nearest cell to `pose` by step-scaled distance. If that cell is
/// unreachable, the nearest finite cell within two steps on each axis.
pub fn snap(landscape: &EnergyLandscape, pose: &Pose) -> Result<GridNode> {
    let s = &landscape.spec;
    let [nx, na, nb] = landscape.dims();
    let centre = GridNode::new(
        nearest_index(pose.x, s.x_min, s.x_step, nx),
        nearest_index(pose.alpha, s.alpha_min, s.alpha_step, na),
        nearest_index(pose.beta, s.beta_min, s.beta_step, nb),
    );
    if landscape.get(centre.ix, centre.ia, centre.ib).is_finite() {
        return Ok(centre);
    }
    let scaled = |n: &GridNode| {
        let [x, a, b] = node_state(landscape, n);
        ((x - pose.x) / s.x_step).powi(2)
            + ((a - pose.alpha) / s.alpha_step).powi(2)
            + ((b - pose.beta) / s.beta_step).powi(2)
    };
    let range = |c: usize, n: usize| c.saturating_sub(2)..=(c + 2).min(n - 1);
    let mut best: Option<(f64, GridNode)> = None;
    for ix in range(centre.ix, nx) {
        for ia in range(centre.ia, na) {
            for ib in range(centre.ib, nb) {
                let n = GridNode::new(ix, ia, ib);
                if !landscape.get(ix, ia, ib).is_finite() {
                    continue;
                }
                let d = scaled(&n);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, n));
                }
            }
        }
    }
    best.map(|(_, n)| n)
        .ok_or_else(|| Error::Planning(format!("no reachable cell within two steps of {centre:?}")))
}

/// Assign timestamps from `t0`: X steps at `v_x`, rotation steps at `omega_rot`.
pub fn time_parameterize(
    mut plan: PlannedTrajectory,
    v_x: f64,
    omega_rot: f64,
    t0: f64,
) -> PlannedTrajectory {
    let mut t = t0;
    plan.times = Vec::with_capacity(plan.states.len());
    for (i, s) in plan.states.iter().enumerate() {
        if i > 0 {
            let prev = plan.states[i - 1];
            let dx = (s[0] - prev[0]).abs();
            let rot = (s[1] - prev[1]).abs() + (s[2] - prev[2]).abs();
            t += dx / v_x + rot / omega_rot;
        }
        plan.times.push(t);
    }
    plan
}

/// Goal cell: level body at the target X.
pub fn goal_node(landscape: &EnergyLandscape, config: &WorldConfig) -> GridNode {
    let s = &landscape.spec;
    let [nx, na, nb] = landscape.dims();
    GridNode::new(
        nearest_index(config.x_target, s.x_min, s.x_step, nx),
        nearest_index(0.0, s.alpha_min, s.alpha_step, na),
        nearest_index(0.0, s.beta_min, s.beta_step, nb),
    )
}

/// Plan from `pose` to the goal and time it from `t0`.
pub fn plan(
    landscape: &EnergyLandscape,
    pose: &Pose,
    config: &WorldConfig,
    t0: f64,
) -> Result<PlannedTrajectory> {
    let start = snap(landscape, pose)?;
    let goal = goal_node(landscape, config);
    let path = astar(landscape, start, goal)?;
    Ok(time_parameterize(
        path,
        config.forward_speed,
        config.rotation_rate,
        t0,
    ))
}

/// Path as CSV: t, X_ref, alpha_ref, beta_ref (radians).
pub fn path_csv(plan: &PlannedTrajectory) -> String {
    let mut s = String::from("# beamsim plan v1\nt,X_ref,alpha_ref,beta_ref\n");
    for (t, st) in plan.times.iter().zip(&plan.states) {
        s.push_str(&format!(
            "{:.6},{:.6},{:.9},{:.9}\n",
            t, st[0], st[1], st[2]
        ));
    }
    s
}
