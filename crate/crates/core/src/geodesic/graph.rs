//! Dijkstra on masked lattices, optionally copied across sheets glued along
//! a cut about a single hole.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::TAU;

use rayon::prelude::*;

use super::{ConformalMetric, GeodesicError, HomotopyClass, Result};
use crate::grid::Grid;
use crate::point::{swept_angle, Point};

/// Neighbour offsets of a lattice stencil, stored in `(o, −o)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    offsets: Vec<(i64, i64)>,
    gap: f64,
}

impl Stencil {
    pub fn new(size: usize) -> Result<Stencil> {
        let base: &[(i64, i64)] = match size {
            8 => &[(1, 0), (0, 1), (1, 1), (1, -1)],
            16 => &[(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)],
            32 => &[
                (1, 0),
                (0, 1),
                (1, 1),
                (1, -1),
                (2, 1),
                (1, 2),
                (2, -1),
                (1, -2),
                (3, 1),
                (1, 3),
                (3, -1),
                (1, -3),
                (3, 2),
                (2, 3),
                (3, -2),
                (2, -3),
            ],
            _ => return Err(GeodesicError::BadStencil(size)),
        };
        let offsets: Vec<(i64, i64)> = base.iter().flat_map(|&(i, j)| [(i, j), (-i, -j)]).collect();
        let mut angles: Vec<f64> = offsets.iter().map(|&(i, j)| (j as f64).atan2(i as f64)).collect();
        angles.sort_by(f64::total_cmp);
        let mut max_gap = angles[0] + TAU - angles[angles.len() - 1];
        for w in angles.windows(2) {
            max_gap = max_gap.max(w[1] - w[0]);
        }
        Ok(Stencil { offsets, gap: 1.0 / (0.5 * max_gap).cos() - 1.0 })
    }

    pub fn size(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[(i64, i64)] {
        &self.offsets
    }

    /// Worst-case relative inflation of a straight path forced onto the
    /// stencil directions: `1/cos(g/2) − 1` for the largest angular gap `g`.
    pub fn gap_factor(&self) -> f64 {
        self.gap
    }
}

/// A lattice path from `a` to `b` with its exact ρ-length.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub vertices: Vec<Point>,
    pub length: f64,
    pub class: HomotopyClass,
}

/// Which endpoint sheets a search should settle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Target {
    /// Every class within `slack` (relative) of the shortest one.
    Near { slack: f64 },
    Class(i64),
}

/// Weighted lattice graph of a metric.
#[derive(Debug, Clone)]
pub struct GridGraph {
    grid: Grid,
    stencil: Stencil,
    weights: Vec<f64>,
    hole: Option<Point>,
    sheet_delta: Vec<i8>,
    budget: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    d: f64,
    hops: u32,
    state: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        // Reversed for a min-heap on (length, hops, state).
        o.d.total_cmp(&self.d)
            .then_with(|| o.hops.cmp(&self.hops))
            .then_with(|| o.state.cmp(&self.state))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn sheet_step(c: Point, p: Point, q: Point) -> i64 {
    (((p - c).arg() + swept_angle(c, p, q) - (q - c).arg()) / TAU).round() as i64
}

impl GridGraph {
    /// Build edge weights for every stencil edge between masked nodes whose
    /// segment keeps clearance above `edge_margin`. Sheets are used when
    /// the metric has exactly one hole; `budget` bounds their index.
    pub fn new(metric: &ConformalMetric, grid: Grid, stencil: Stencil, edge_margin: f64, budget: i64) -> GridGraph {
        let s = stencil.size();
        let n = grid.len();
        let half: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .flat_map_iter(|idx| {
                let grid = &grid;
                let stencil = &stencil;
                (0..s).step_by(2).filter_map(move |k| {
                    if !grid.is_masked(idx) {
                        return None;
                    }
                    let (di, dj) = stencil.offsets[k];
                    let j = grid.offset(idx, di, dj)?;
                    if !grid.is_masked(j) {
                        return None;
                    }
                    let (p, q) = (grid.point(idx), grid.point(j));
                    if !metric.segment_inside(p, q, edge_margin) {
                        return None;
                    }
                    Some((idx * s + k, metric.segment_cost(p, q)))
                })
            })
            .collect();
        let mut weights = vec![f64::INFINITY; n * s];
        for (slot, w) in half {
            let (idx, k) = (slot / s, slot % s);
            let (di, dj) = stencil.offsets[k];
            let j = grid.offset(idx, di, dj).expect("edge target");
            weights[slot] = w;
            weights[j * s + (k ^ 1)] = w;
        }
        let hole = match metric.holes() {
            [c] => Some(*c),
            _ => None,
        };
        let mut sheet_delta = Vec::new();
        if let Some(c) = hole {
            sheet_delta = vec![0i8; n * s];
            for idx in 0..n {
                for k in 0..s {
                    if weights[idx * s + k].is_finite() {
                        let (di, dj) = stencil.offsets[k];
                        let j = grid.offset(idx, di, dj).expect("edge target");
                        sheet_delta[idx * s + k] = sheet_step(c, grid.point(idx), grid.point(j)) as i8;
                    }
                }
            }
        }
        GridGraph { grid, stencil, weights, hole, sheet_delta, budget: if hole.is_some() { budget } else { 0 } }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn sheet_budget(&self) -> i64 {
        self.budget
    }

    /// Nearest masked node joined to `p` by a segment inside the domain.
    pub fn snap(&self, metric: &ConformalMetric, p: Point) -> Result<usize> {
        let g = &self.grid;
        let first = g
            .nearest_masked(p)
            .ok_or_else(|| GeodesicError::Unreachable("empty search grid".into()))?;
        if metric.segment_inside(p, g.point(first), 0.0) {
            return Ok(first);
        }
        let h = g.spacing();
        let mut cands: Vec<(f64, usize)> = Vec::new();
        for di in -4i64..=4 {
            for dj in -4i64..=4 {
                if let Some(j) = g.offset(first, di, dj) {
                    if g.is_masked(j) {
                        cands.push((g.point(j).dist(p), j));
                    }
                }
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cands
            .into_iter()
            .find(|&(d, j)| d <= 6.0 * h && metric.segment_inside(p, g.point(j), 0.0))
            .map(|(_, j)| j)
            .ok_or_else(|| GeodesicError::Unreachable(format!("({}, {}) does not see the search grid", p.x, p.y)))
    }

    /// Shortest lattice paths from `a` to `b`.
    pub(crate) fn paths(&self, metric: &ConformalMetric, a: Point, b: Point, target: Target) -> Result<Vec<GridPath>> {
        let na = self.snap(metric, a)?;
        let nb = self.snap(metric, b)?;
        let (pa, pb) = (self.grid.point(na), self.grid.point(nb));
        let (start_sheet, end_shift) = match self.hole {
            Some(c) => (sheet_step(c, a, pa), sheet_step(c, pb, b)),
            None => (0, 0),
        };
        let goals: Vec<i64> = match target {
            Target::Class(w) if self.hole.is_some() => {
                if w.abs() > self.budget {
                    return Err(GeodesicError::BudgetExceeded { winding: w, budget: self.budget });
                }
                vec![w - end_shift]
            }
            _ => (-self.budget..=self.budget).collect(),
        };
        let slack = match target {
            Target::Near { slack } => slack,
            Target::Class(_) => 0.0,
        };
        let found = self.search(na, start_sheet, nb, &goals, slack);
        let mut out = Vec::new();
        for nodes in found.into_iter().flatten() {
            let mut vertices = Vec::with_capacity(nodes.len() + 2);
            vertices.push(a);
            vertices.extend(nodes.iter().map(|&k| self.grid.point(k)));
            vertices.push(b);
            vertices.dedup();
            let mut length = 0.0;
            for w in vertices.windows(2) {
                length += metric.segment_length(w[0], w[1])?;
            }
            let class = if vertices.len() == 1 {
                HomotopyClass::trivial(metric.holes().len())
            } else {
                HomotopyClass::of(&vertices, metric.holes())
            };
            out.push(GridPath { vertices, length, class });
        }
        if out.is_empty() {
            return Err(GeodesicError::Unreachable(format!(
                "no lattice path from ({}, {}) to ({}, {})",
                a.x, a.y, b.x, b.y
            )));
        }
        out.sort_by(|p, q| p.length.total_cmp(&q.length));
        if let Target::Near { slack } = target {
            let best = out[0].length;
            out.retain(|p| p.length <= best * (1.0 + slack) + 1e-12);
        }
        Ok(out)
    }

    /// Multi-goal Dijkstra; returns node sequences per goal sheet.
    fn search(&self, start: usize, start_sheet: i64, goal: usize, goal_sheets: &[i64], slack: f64) -> Vec<Option<Vec<usize>>> {
        let n = self.grid.len();
        let s = self.stencil.size();
        let b = self.budget;
        let sheets = (2 * b + 1) as usize;
        let mut dist = vec![f64::INFINITY; n * sheets];
        let mut hops = vec![u32::MAX; n * sheets];
        let mut prev = vec![u32::MAX; n * sheets];
        let mut done = vec![false; n * sheets];
        let mut found: Vec<Option<Vec<usize>>> = vec![None; goal_sheets.len()];
        if start_sheet.abs() > b {
            return found;
        }
        let state = |sheet: i64, node: usize| (sheet + b) as usize * n + node;
        let s0 = state(start_sheet, start);
        dist[s0] = 0.0;
        hops[s0] = 0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry { d: 0.0, hops: 0, state: s0 as u32 });
        let mut remaining = goal_sheets.iter().filter(|g| g.abs() <= b).count();
        let mut bound = f64::INFINITY;
        while let Some(Entry { d, hops: hp, state: st }) = heap.pop() {
            let st = st as usize;
            if done[st] {
                continue;
            }
            if d > bound {
                break;
            }
            done[st] = true;
            let node = st % n;
            let sheet = (st / n) as i64 - b;
            if node == goal {
                if let Some(gi) = goal_sheets.iter().position(|&g| g == sheet) {
                    let mut nodes = vec![node];
                    let mut cur = st;
                    while prev[cur] != u32::MAX {
                        cur = prev[cur] as usize;
                        nodes.push(cur % n);
                    }
                    nodes.reverse();
                    found[gi] = Some(nodes);
                    remaining -= 1;
                    if bound.is_infinite() {
                        bound = d * (1.0 + slack) + 1e-12;
                    }
                    if remaining == 0 {
                        break;
                    }
                }
            }
            let base = node * s;
            for k in 0..s {
                let w = self.weights[base + k];
                if !w.is_finite() {
                    continue;
                }
                let ns = if self.hole.is_some() { sheet + self.sheet_delta[base + k] as i64 } else { sheet };
                if ns.abs() > b {
                    continue;
                }
                let (di, dj) = self.stencil.offsets[k];
                let j = self.grid.offset(node, di, dj).expect("edge target");
                let t = state(ns, j);
                let nd = d + w;
                if nd < dist[t] || (nd == dist[t] && hp + 1 < hops[t]) {
                    dist[t] = nd;
                    hops[t] = hp + 1;
                    prev[t] = st as u32;
                    heap.push(Entry { d: nd, hops: hp + 1, state: t as u32 });
                }
            }
        }
        found
    }
}

/// Shortest lattice path from `a` to `b` (any class).
pub fn grid_shortest_path(graph: &GridGraph, metric: &ConformalMetric, a: Point, b: Point) -> Result<GridPath> {
    let mut paths = graph.paths(metric, a, b, Target::Near { slack: 0.0 })?;
    Ok(paths.swap_remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensitySpec;
    use crate::domain::PlaneDomain;
    use crate::grid::{build_grid, GridOptions};

    #[test]
    fn stencil_gaps() {
        let s8 = Stencil::new(8).unwrap();
        assert!((s8.gap_factor() - (1.0 / (std::f64::consts::PI / 8.0).cos() - 1.0)).abs() < 1e-15);
        let s16 = Stencil::new(16).unwrap();
        assert_eq!(s16.size(), 16);
        let g = 0.5f64.atan();
        assert!((s16.gap_factor() - (1.0 / (0.5 * g).cos() - 1.0)).abs() < 1e-15);
        assert_eq!(Stencil::new(32).unwrap().size(), 32);
        assert!(Stencil::new(12).is_err());
    }

    #[test]
    fn flat_axis_path_is_exact() {
        let sq = PlaneDomain::unit_square();
        let metric = ConformalMetric::new(sq.clone(), DensitySpec::constant());
        let grid = build_grid(&sq, 0.125, 0.0, GridOptions::default()).unwrap();
        let graph = GridGraph::new(&metric, grid, Stencil::new(16).unwrap(), 0.0, 0);
        let p = grid_shortest_path(&graph, &metric, Point::new(0.125, 0.5), Point::new(0.875, 0.5)).unwrap();
        assert!((p.length - 0.75).abs() < 1e-15);
        let z = grid_shortest_path(&graph, &metric, Point::new(0.25, 0.25), Point::new(0.25, 0.25)).unwrap();
        assert_eq!(z.vertices.len(), 1);
        assert_eq!(z.length, 0.0);
    }

    #[test]
    fn sheets_separate_classes() {
        let metric = ConformalMetric::new(PlaneDomain::PuncturedPlane, DensitySpec::ModulusPower { alpha: -1.0 });
        let h = 1.0 / 16.0;
        let bbox = crate::domain::BBox::new(Point::new(-3.0, -3.0), Point::new(3.0, 3.0));
        let grid = build_grid(
            &metric.domain,
            h,
            2.0 * h,
            GridOptions { bbox: Some(bbox), anchor: Some(Point::new(1.0, 0.0)), ..Default::default() },
        )
        .unwrap();
        let graph = GridGraph::new(&metric, grid, Stencil::new(16).unwrap(), h, 2);
        let a = Point::new(1.0, 0.0);
        for w in [-1i64, 0, 1] {
            let p = graph.paths(&metric, a, a, Target::Class(w)).unwrap().remove(0);
            assert_eq!(p.class, HomotopyClass(vec![w]));
            let expect = TAU * w.abs() as f64;
            assert!(p.length >= expect - 1e-9 && p.length <= expect * 1.03 + 1e-12, "{w}: {}", p.length);
        }
        assert!(matches!(
            graph.paths(&metric, a, a, Target::Class(3)),
            Err(GeodesicError::BudgetExceeded { .. })
        ));
    }
}
