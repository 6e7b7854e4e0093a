//! Flags low-PD areas and plans lawnmower revisit legs over them.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GeoGrid, GridError, GridGeometry};

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("PD grid has no cells")]
    EmptyGrid,
    #[error("threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("repair cell size {repair} is smaller than PD cell size {pd}")]
    InvalidCellSize { repair: f64, pd: f64 },
    #[error("invalid repair config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FlagRule {
    /// Mean PD of the covered cells below the threshold.
    MeanBelow,
    /// More than `fraction` of the covered cells below the threshold.
    FractionBelow { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairConfig {
    pub cell_size: f64,
    pub threshold: f64,
    pub rule: FlagRule,
    /// Legs across the original track; otherwise along it.
    pub orthogonal: bool,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self { cell_size: 20.0, threshold: 0.5, rule: FlagRule::MeanBelow, orthogonal: true }
    }
}

/// Repair grid over the PD grid's extent: `Some(flag)` where any PD cell has data.
pub fn flag_cells(pd: &GeoGrid<f64>, cell_size: f64, threshold: f64, rule: FlagRule) -> Result<GeoGrid<bool>, RepairError> {
    if pd.geometry.is_empty() {
        return Err(RepairError::EmptyGrid);
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(RepairError::InvalidThreshold(threshold));
    }
    if !(cell_size >= pd.cell_size()) {
        return Err(RepairError::InvalidCellSize { repair: cell_size, pd: pd.cell_size() });
    }
    if let FlagRule::FractionBelow { fraction } = rule {
        if !(0.0..1.0).contains(&fraction) {
            return Err(RepairError::InvalidConfig(format!("fraction must lie in [0, 1), got {fraction}")));
        }
    }
    let g = pd.geometry;
    let w = ((g.width as f64 * g.cell_size / cell_size) - 1e-9).ceil().max(1.0) as usize;
    let h = ((g.height as f64 * g.cell_size / cell_size) - 1e-9).ceil().max(1.0) as usize;
    let geometry = GridGeometry::new(g.origin, cell_size, w, h)?;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); geometry.len()];
    for (i, j) in g.cells() {
        if let Some(&v) = pd.get(i, j) {
            let [e, n] = g.center(i, j);
            if let Some((a, b)) = geometry.cell_of(e, n) {
                members[geometry.index(a, b)].push(v);
            }
        }
    }
    let values = members
        .iter()
        .map(|m| {
            if m.is_empty() {
                return None;
            }
            Some(match rule {
                FlagRule::MeanBelow => m.iter().sum::<f64>() / (m.len() as f64) < threshold,
                FlagRule::FractionBelow { fraction } => m.iter().filter(|&&v| v < threshold).count() as f64 > fraction * m.len() as f64,
            })
        })
        .collect();
    Ok(GeoGrid::from_values(geometry, values)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    /// Repair-grid cell indices swept by this leg.
    pub cells: Vec<usize>,
    pub waypoints: Vec<[f64; 2]>,
    /// Direction of travel, compass radians in [0, 2π).
    pub heading: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairPlan {
    pub legs: Vec<Leg>,
    /// Path length from the start through every waypoint, in metres.
    pub total_transit: f64,
    pub source_map: String,
    pub threshold: Option<f64>,
    /// Swath half-width of each leg, i.e. half the repair cell size.
    pub half_swath: f64,
}

fn unit(heading: f64) -> [f64; 2] {
    [heading.sin(), heading.cos()]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// 4-connected components of flagged cells, each sorted, ordered by first cell.
fn components(flags: &GeoGrid<bool>) -> Vec<Vec<(usize, usize)>> {
    let g = flags.geometry;
    let mut seen = vec![false; g.len()];
    let mut out = Vec::new();
    for (i, j) in g.cells() {
        if seen[g.index(i, j)] || flags.get(i, j) != Some(&true) {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![(i, j)];
        seen[g.index(i, j)] = true;
        while let Some((a, b)) = stack.pop() {
            comp.push((a, b));
            let mut next = Vec::with_capacity(4);
            if a > 0 {
                next.push((a - 1, b));
            }
            if b > 0 {
                next.push((a, b - 1));
            }
            next.push((a + 1, b));
            next.push((a, b + 1));
            for (x, y) in next {
                if x < g.width && y < g.height && !seen[g.index(x, y)] && flags.get(x, y) == Some(&true) {
                    seen[g.index(x, y)] = true;
                    stack.push((x, y));
                }
            }
        }
        comp.sort_by_key(|&(a, b)| (b, a));
        out.push(comp);
    }
    out
}

/// Parallel legs over one component, as (cells, start, end) in sweep order.
/// Cells covered by one leg, with the leg's start and end points.
type SweepLine = (Vec<usize>, [f64; 2], [f64; 2]);

fn sweep(g: &GridGeometry, comp: &[(usize, usize)], along: [f64; 2], across: [f64; 2]) -> Vec<SweepLine> {
    let cs = g.cell_size;
    // half extent of a square cell projected on either leg axis
    let e = 0.5 * cs * (along[0].abs() + along[1].abs());
    let centres: Vec<[f64; 2]> = comp.iter().map(|&(i, j)| g.center(i, j)).collect();
    let t: Vec<f64> = centres.iter().map(|&c| dot(c, across)).collect();
    let u: Vec<f64> = centres.iter().map(|&c| dot(c, along)).collect();
    let t_min = t.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let k_lo = ((-e) / cs + 0.5 + 1e-9).floor() as i64;
    let k_hi = ((t_max - t_min + e) / cs - 0.5 - 1e-9).ceil() as i64;
    let mut legs = Vec::new();
    for k in k_lo..=k_hi {
        let line = t_min + k as f64 * cs;
        let (lo, hi) = (line - 0.5 * cs, line + 0.5 * cs);
        let hit: Vec<usize> = (0..comp.len()).filter(|&c| t[c] - e < hi - 1e-9 && t[c] + e > lo + 1e-9).collect();
        if hit.is_empty() {
            continue;
        }
        let u0 = hit.iter().map(|&c| u[c] - e).fold(f64::INFINITY, f64::min);
        let u1 = hit.iter().map(|&c| u[c] + e).fold(f64::NEG_INFINITY, f64::max);
        let point = |s: f64| [along[0] * s + across[0] * line, along[1] * s + across[1] * line];
        let cells = hit.iter().map(|&c| g.index(comp[c].0, comp[c].1)).collect();
        legs.push((cells, point(u0), point(u1)));
    }
    legs
}

/// Lawnmower legs over every 4-connected flagged component, components taken
/// greedily nearest-first from `start`.
pub fn plan_revisit(flags: &GeoGrid<bool>, heading: f64, start: [f64; 2], orthogonal: bool) -> RepairPlan {
    let g = flags.geometry;
    let leg_heading = if orthogonal { heading + FRAC_PI_2 } else { heading };
    let along = unit(leg_heading);
    let across = unit(leg_heading - FRAC_PI_2);
    let mut pending: Vec<Vec<SweepLine>> = components(flags).iter().map(|c| sweep(&g, c, along, across)).collect();
    let mut pos = start;
    let mut total = 0.0;
    let mut legs = Vec::new();
    while !pending.is_empty() {
        // (distance, component, reversed leg order, flip first leg)
        let mut best = (f64::INFINITY, 0, false, false);
        for (ci, comp) in pending.iter().enumerate() {
            let first = &comp[0];
            let last = &comp[comp.len() - 1];
            for (rev, leg) in [(false, first), (true, last)] {
                for (flip, p) in [(false, leg.1), (true, leg.2)] {
                    let d = dist(pos, p);
                    if d < best.0 {
                        best = (d, ci, rev, flip);
                    }
                }
            }
        }
        let (_, ci, rev, flip) = best;
        let mut comp = pending.remove(ci);
        if rev {
            comp.reverse();
        }
        let mut forward = !flip;
        for (cells, a, b) in comp {
            let (p, q) = if forward { (a, b) } else { (b, a) };
            total += dist(pos, p) + dist(p, q);
            pos = q;
            let h = if forward { leg_heading } else { leg_heading + std::f64::consts::PI };
            legs.push(Leg { cells, waypoints: vec![p, q], heading: h.rem_euclid(TAU), reason: "low_pd".into() });
            forward = !forward;
        }
    }
    RepairPlan { legs, total_transit: total, source_map: String::new(), threshold: None, half_swath: 0.5 * g.cell_size }
}

/// Flags, then plans, recording the source and threshold in the plan.
pub fn repair(
    pd: &GeoGrid<f64>,
    cfg: &RepairConfig,
    heading: f64,
    start: [f64; 2],
    source_map: &str,
) -> Result<(GeoGrid<bool>, RepairPlan), RepairError> {
    let flags = flag_cells(pd, cfg.cell_size, cfg.threshold, cfg.rule)?;
    let mut plan = plan_revisit(&flags, heading, start, cfg.orthogonal);
    plan.source_map = source_map.to_string();
    plan.threshold = Some(cfg.threshold);
    Ok((flags, plan))
}

/// True when the point lies in some leg's swath rectangle.
pub fn in_swath(plan: &RepairPlan, p: [f64; 2]) -> bool {
    plan.legs.iter().any(|leg| {
        let (a, b) = (leg.waypoints[0], leg.waypoints[leg.waypoints.len() - 1]);
        let len = dist(a, b);
        let along = if len > 0.0 { [(b[0] - a[0]) / len, (b[1] - a[1]) / len] } else { unit(leg.heading) };
        let d = [p[0] - a[0], p[1] - a[1]];
        let s = dot(d, along);
        let t = d[0] * along[1] - d[1] * along[0];
        (-1e-6..=len + 1e-6).contains(&s) && t.abs() <= plan.half_swath + 1e-6
    })
}

/// Inspection raster on a finer grid: 0.5 on flagged cells, 1.0 under legs.
pub fn plan_overlay(flags: &GeoGrid<bool>, plan: &RepairPlan, oversample: usize) -> Result<GeoGrid<f64>, RepairError> {
    let g = flags.geometry;
    let k = oversample.max(1);
    let fine = GridGeometry::new(g.origin, g.cell_size / k as f64, g.width * k, g.height * k)?;
    let mut out = GeoGrid::filled(fine, 0.0);
    for (i, j) in fine.cells() {
        let flagged = flags.get(i / k, j / k) == Some(&true);
        let c = fine.center(i, j);
        let on_leg = plan.legs.iter().any(|leg| {
            let (a, b) = (leg.waypoints[0], leg.waypoints[1]);
            let len = dist(a, b).max(1e-12);
            let s = dot([c[0] - a[0], c[1] - a[1]], [(b[0] - a[0]) / len, (b[1] - a[1]) / len]);
            let q = [a[0] + (b[0] - a[0]) * s / len, a[1] + (b[1] - a[1]) * s / len];
            (0.0..=len).contains(&s) && dist(q, c) <= 0.5 * fine.cell_size
        });
        let v = if on_leg { 1.0 } else if flagged { 0.5 } else { 0.0 };
        out.set(i, j, Some(v))?;
    }
    Ok(out)
}

/// Every flagged repair cell.
pub fn flagged_set(flags: &GeoGrid<bool>) -> BTreeSet<usize> {
    flags.geometry.cells().filter(|&(i, j)| flags.get(i, j) == Some(&true)).map(|(i, j)| flags.geometry.index(i, j)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pd_grid(values: &[f64], w: usize, cs: f64) -> GeoGrid<f64> {
        let g = GridGeometry::new([0.0, 0.0], cs, w, values.len() / w).unwrap();
        GeoGrid::from_values(g, values.iter().map(|&v| Some(v)).collect()).unwrap()
    }

    #[test]
    fn flag_examples() {
        let pd = pd_grid(&[0.9, 0.4, 0.8, 0.2], 2, 20.0);
        let flags = flag_cells(&pd, 20.0, 0.5, FlagRule::MeanBelow).unwrap();
        assert_eq!(flags.values(), &[Some(false), Some(true), Some(false), Some(true)]);
        let strict = flag_cells(&pd_grid(&[1.0, 0.99], 2, 20.0), 20.0, 1.0, FlagRule::MeanBelow).unwrap();
        assert_eq!(strict.values(), &[Some(false), Some(true)]);
        let perfect = flag_cells(&pd_grid(&[1.0; 16], 4, 5.0), 20.0, 0.9, FlagRule::MeanBelow).unwrap();
        assert!(flagged_set(&perfect).is_empty());
    }

    #[test]
    fn coarse_cells_average_covered_pd() {
        // 4x4 PD at 5 m into one 20 m cell with mean 0.4375
        let mut v = vec![0.5; 16];
        v[0] = 0.0;
        v[1] = 0.5;
        let pd = pd_grid(&v, 4, 5.0);
        let flags = flag_cells(&pd, 20.0, 0.47, FlagRule::MeanBelow).unwrap();
        assert_eq!(flags.values(), &[Some(true)]);
    }

    #[test]
    fn nodata_cells_are_not_flagged() {
        let g = GridGeometry::new([0.0, 0.0], 10.0, 2, 1).unwrap();
        let pd = GeoGrid::from_values(g, vec![None, Some(0.1)]).unwrap();
        let flags = flag_cells(&pd, 10.0, 0.5, FlagRule::MeanBelow).unwrap();
        assert_eq!(flags.values(), &[None, Some(true)]);
    }

    #[test]
    fn input_errors() {
        let pd = pd_grid(&[0.5], 1, 10.0);
        assert!(matches!(flag_cells(&pd, 5.0, 0.5, FlagRule::MeanBelow), Err(RepairError::InvalidCellSize { .. })));
        assert!(matches!(flag_cells(&pd, 10.0, 1.5, FlagRule::MeanBelow), Err(RepairError::InvalidThreshold(_))));
        let empty = GeoGrid::<f64>::empty(GridGeometry::new([0.0, 0.0], 1.0, 0, 0).unwrap());
        assert!(matches!(flag_cells(&empty, 1.0, 0.5, FlagRule::MeanBelow), Err(RepairError::EmptyGrid)));
    }

    #[test]
    fn empty_plan() {
        let flags = GeoGrid::filled(GridGeometry::new([0.0, 0.0], 20.0, 3, 3).unwrap(), false);
        let plan = plan_revisit(&flags, 0.0, [0.0, 0.0], true);
        assert!(plan.legs.is_empty());
        assert_eq!(plan.total_transit, 0.0);
    }

    #[test]
    fn single_cell_north_mission_gives_east_west_leg() {
        let mut flags = GeoGrid::filled(GridGeometry::new([0.0, 0.0], 20.0, 3, 3).unwrap(), false);
        flags.set(1, 1, Some(true)).unwrap();
        let plan = plan_revisit(&flags, 0.0, [0.0, 0.0], true);
        assert_eq!(plan.legs.len(), 1);
        let leg = &plan.legs[0];
        let [a, b] = [leg.waypoints[0], leg.waypoints[1]];
        assert_abs_diff_eq!(a[1], 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b[1], 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!((a[0] - b[0]).abs(), 20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(0.5 * (a[0] + b[0]), 30.0, epsilon = 1e-9);
        assert_eq!(leg.cells, vec![flags.geometry.index(1, 1)]);
        assert_eq!(leg.reason, "low_pd");
    }

    #[test]
    fn boustrophedon_alternates_direction() {
        let flags = GeoGrid::filled(GridGeometry::new([0.0, 0.0], 10.0, 3, 3).unwrap(), true);
        let plan = plan_revisit(&flags, 0.0, [-5.0, 5.0], true);
        assert_eq!(plan.legs.len(), 3);
        assert_abs_diff_eq!(plan.legs[0].heading, FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(plan.legs[1].heading, 3.0 * FRAC_PI_2, epsilon = 1e-12);
        // 5 m to the first leg, three 30 m legs, two 10 m turns
        assert_abs_diff_eq!(plan.total_transit, 5.0 + 90.0 + 20.0, epsilon = 1e-9);
    }

    #[test]
    fn same_heading_option() {
        let mut flags = GeoGrid::filled(GridGeometry::new([0.0, 0.0], 20.0, 2, 2).unwrap(), false);
        flags.set(0, 0, Some(true)).unwrap();
        let plan = plan_revisit(&flags, 0.0, [10.0, -50.0], false);
        let [a, b] = [plan.legs[0].waypoints[0], plan.legs[0].waypoints[1]];
        assert_abs_diff_eq!(a[0], 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b[0], 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(plan.legs[0].heading, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn overlay_marks_flags_and_legs() {
        let mut flags = GeoGrid::filled(GridGeometry::new([0.0, 0.0], 20.0, 2, 1).unwrap(), false);
        flags.set(0, 0, Some(true)).unwrap();
        let plan = plan_revisit(&flags, 0.0, [0.0, 0.0], true);
        let overlay = plan_overlay(&flags, &plan, 4).unwrap();
        let values: Vec<f64> = overlay.values().iter().map(|v| v.unwrap()).collect();
        assert!(values.contains(&1.0) && values.contains(&0.5));
        assert!(overlay.get(6, 2).copied() == Some(0.0));
    }
}
