use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{ControlInput, EgoState};
use crate::world::{LeadTrajectory, Route};

/// Uniform axis `start + i * step`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

/// Cell index and fractional offset of a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisPos {
    pub i: usize,
    pub frac: f64,
}

/// Queries closer than this (in cells) to a node land exactly on it.
const SNAP_CELLS: f64 = 1e-9;

impl Axis {
    pub fn new(start: f64, step: f64, len: usize) -> Self {
        assert!(len >= 1 && step > 0.0, "axis needs len >= 1 and step > 0");
        Self { start, step, len }
    }

    /// Nodes from `lo` up to `hi` inclusive (within rounding).
    pub fn from_range(lo: f64, hi: f64, step: f64) -> Self {
        let len = ((hi - lo) / step + 1e-9).floor().max(0.0) as usize + 1;
        Self::new(lo, step, len)
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    #[inline]
    pub fn last(&self) -> f64 {
        self.value(self.len - 1)
    }

    /// Position of `q`, or `None` outside `[start, last]`.
    #[inline]
    pub fn locate(&self, q: f64) -> Option<AxisPos> {
        let u = (q - self.start) / self.step;
        let top = (self.len - 1) as f64;
        if !(u >= -SNAP_CELLS && u <= top + SNAP_CELLS) {
            return None;
        }
        let r = u.round();
        if (u - r).abs() <= SNAP_CELLS {
            let i = r as usize;
            return Some(if i == self.len - 1 && i > 0 {
                AxisPos { i: i - 1, frac: 1.0 }
            } else {
                AxisPos { i, frac: 0.0 }
            });
        }
        let i = u.floor() as usize;
        Some(AxisPos { i, frac: u - i as f64 })
    }

    /// Nearest node inside the hull.
    #[inline]
    pub fn nearest(&self, q: f64) -> Option<usize> {
        self.locate(q).map(|p| if p.frac >= 0.5 { p.i + 1 } else { p.i })
    }

    pub fn is_increasing(&self) -> bool {
        self.step > 0.0
    }
}

/// Axes of one distance node. Flat index is `(iv * n_soc + isoc) * n_t + it`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepAxes {
    pub v: Axis,
    pub soc: Axis,
    pub t: Axis,
}

impl StepAxes {
    #[inline]
    pub fn node_count(&self) -> usize {
        self.v.len * self.soc.len * self.t.len
    }

    #[inline]
    pub fn index(&self, iv: usize, isoc: usize, it: usize) -> usize {
        (iv * self.soc.len + isoc) * self.t.len + it
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let it = idx % self.t.len;
        let rest = idx / self.t.len;
        (rest / self.soc.len, rest % self.soc.len, it)
    }

    #[inline]
    pub fn state(&self, idx: usize) -> EgoState {
        let (iv, isoc, it) = self.unindex(idx);
        EgoState::new(self.v.value(iv), self.soc.value(isoc), self.t.value(it))
    }

    /// Index of the node sitting exactly at `state`.
    pub fn node_of(&self, state: &EgoState) -> Option<usize> {
        let exact = |axis: &Axis, q: f64| {
            axis.locate(q).and_then(|p| match p.frac {
                f if f == 0.0 => Some(p.i),
                f if f == 1.0 => Some(p.i + 1),
                _ => None,
            })
        };
        Some(self.index(
            exact(&self.v, state.v_mps)?,
            exact(&self.soc, state.soc_frac)?,
            exact(&self.t, state.time_s)?,
        ))
    }
}

/// Per-distance-step axes for steps `first_step ..= first_step + layers - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub first_step: usize,
    pub ds_m: f64,
    pub layers: Vec<StepAxes>,
    offsets: Vec<usize>,
}

impl StateGrid {
    pub fn new(first_step: usize, ds_m: f64, layers: Vec<StepAxes>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("state grid needs at least one layer".into()));
        }
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut acc = 0;
        for l in &layers {
            if l.node_count() == 0 {
                return Err(Error::Config("state grid axes must be nonempty".into()));
            }
            offsets.push(acc);
            acc += l.node_count();
        }
        offsets.push(acc);
        Ok(Self {
            first_step,
            ds_m,
            layers,
            offsets,
        })
    }

    #[inline]
    pub fn last_step(&self) -> usize {
        self.first_step + self.layers.len() - 1
    }

    #[inline]
    pub fn contains_step(&self, step: usize) -> bool {
        step >= self.first_step && step <= self.last_step()
    }

    #[inline]
    pub fn layer(&self, step: usize) -> &StepAxes {
        &self.layers[step - self.first_step]
    }

    /// Flat range of `step`'s nodes in a grid-sized buffer.
    #[inline]
    pub fn range(&self, step: usize) -> std::ops::Range<usize> {
        let k = step - self.first_step;
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn total_nodes(&self) -> usize {
        self.offsets[self.layers.len()]
    }
}

/// Discretization settings for state and control grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub dv_mps: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub dsoc: f64,
    pub dt_s: f64,
    /// Width of the time window above the earliest-arrival envelope.
    pub time_slack_s: f64,
    /// Extra window width per signal already passed.
    pub slack_per_light_s: f64,
    /// Window extension below the envelope; snapped successors can run early.
    pub time_margin_s: f64,
    pub accel_grid_mps2: Vec<f64>,
    pub engine_states: Vec<bool>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dv_mps: 1.0,
            soc_min: 0.22,
            soc_max: 0.26,
            dsoc: 0.005,
            dt_s: 1.0,
            time_slack_s: 40.0,
            slack_per_light_s: 30.0,
            time_margin_s: 2.0,
            accel_grid_mps2: vec![-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0],
            engine_states: vec![false, true],
        }
    }
}

/// Lower bound on arrival times imposed by a lead vehicle.
#[derive(Debug, Clone, Copy)]
pub struct LeadConstraint<'a> {
    pub trajectory: &'a LeadTrajectory,
    pub gap_s: f64,
    /// Positions past the end of the trajectory are unreachable (a projection
    /// that stalls) rather than unconstrained.
    pub block_beyond: bool,
}

impl<'a> LeadConstraint<'a> {
    pub fn new(trajectory: &'a LeadTrajectory, gap_s: f64) -> Self {
        Self {
            trajectory,
            gap_s,
            block_beyond: false,
        }
    }

    /// `t_lead(x) + gap` where the lead trajectory covers `x`.
    #[inline]
    pub fn earliest(&self, x: f64) -> Option<f64> {
        match self.trajectory.lead_time_at(x) {
            Ok(t) => Some(t + self.gap_s),
            Err(_) if self.block_beyond && x > self.trajectory.span().1 => Some(f64::INFINITY),
            Err(_) => None,
        }
    }
}

impl GridSpec {
    pub fn controls(&self) -> Vec<ControlInput> {
        let mut out = Vec::with_capacity(self.accel_grid_mps2.len() * self.engine_states.len());
        for &a in &self.accel_grid_mps2 {
            for &on in &self.engine_states {
                out.push(ControlInput::new(a, on));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dv_mps > 0.0 && self.dsoc > 0.0 && self.dt_s > 0.0) {
            return Err(Error::Config("grid steps must be > 0".into()));
        }
        if !(self.soc_min <= self.soc_max) || self.soc_min < 0.0 || self.soc_max > 1.0 {
            return Err(Error::Config("SoC corridor must lie in [0, 1]".into()));
        }
        if self.accel_grid_mps2.is_empty() || self.engine_states.is_empty() {
            return Err(Error::Config("control grid is empty".into()));
        }
        if self.controls().len() > u8::MAX as usize {
            return Err(Error::Config("at most 254 controls are supported".into()));
        }
        Ok(())
    }

    pub fn soc_axis(&self) -> Axis {
        Axis::from_range(self.soc_min, self.soc_max, self.dsoc)
    }

    pub fn velocity_axis(&self, route: &Route, step: usize) -> Axis {
        let top = (route.base_limit(route.position(step)) / self.dv_mps + 1e-9).floor();
        Axis::new(0.0, self.dv_mps, top as usize + 1)
    }

    /// Grid over the whole route starting at `start` on step 0.
    pub fn build(&self, route: &Route, start: &EgoState, lead: Option<LeadConstraint>) -> Result<StateGrid> {
        self.build_range(route, 0, route.step_count(), start, lead)
    }

    /// Grid for steps `first ..= last`; `start` is the state on `first`.
    pub fn build_range(
        &self,
        route: &Route,
        first: usize,
        last: usize,
        start: &EgoState,
        lead: Option<LeadConstraint>,
    ) -> Result<StateGrid> {
        self.validate()?;
        let earliest = earliest_arrival(route, first, last, start, self.max_accel(), self.min_accel());
        let soc = self.soc_axis();
        let mut layers = Vec::with_capacity(last - first + 1);
        for (k, &t_env) in earliest.iter().enumerate() {
            let step = first + k;
            let x = route.position(step);
            let mut lo = t_env;
            if let Some(bound) = lead.and_then(|l| l.earliest(x)).filter(|b| b.is_finite()) {
                lo = lo.max(bound);
            }
            let lo = if k == 0 {
                start.time_s
            } else {
                ((lo - self.time_margin_s) / self.dt_s).floor() * self.dt_s
            };
            let slack = self.time_slack_s
                + self.slack_per_light_s * route.lights_before(x).saturating_sub(route.lights_before(route.position(first))) as f64;
            let t = Axis::from_range(lo, lo + slack, self.dt_s);
            layers.push(StepAxes {
                v: self.velocity_axis(route, step),
                soc,
                t,
            });
        }
        StateGrid::new(first, route.ds_m, layers)
    }

    fn max_accel(&self) -> f64 {
        self.accel_grid_mps2.iter().copied().fold(f64::MIN, f64::max).max(0.0)
    }

    fn min_accel(&self) -> f64 {
        self.accel_grid_mps2.iter().copied().fold(f64::MAX, f64::min).min(0.0)
    }
}

/// Earliest arrival time at each node from `start`, ignoring signals: full
/// acceleration up to the base limit with braking ahead of limit drops.
pub fn earliest_arrival(
    route: &Route,
    first: usize,
    last: usize,
    start: &EgoState,
    a_max: f64,
    a_min: f64,
) -> Vec<f64> {
    let n = last - first + 1;
    let ds = route.ds_m;
    let mut v = vec![0.0; n];
    v[0] = start.v_mps;
    for k in 1..n {
        let reach = (v[k - 1] * v[k - 1] + 2.0 * ds * a_max).sqrt();
        v[k] = reach.min(route.base_limit(route.position(first + k)));
    }
    if a_min < 0.0 {
        for k in (0..n - 1).rev() {
            let brake = (v[k + 1] * v[k + 1] - 2.0 * ds * a_min).sqrt();
            if k > 0 {
                v[k] = v[k].min(brake);
            }
        }
    }
    let mut t = vec![start.time_s; n];
    for k in 1..n {
        let v_bar = 0.5 * (v[k - 1] + v[k]);
        t[k] = t[k - 1] + if v_bar > 0.0 { ds / v_bar } else { 0.0 };
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::build_scenario;

    #[test]
    fn locate_snaps_nodes() {
        let a = Axis::new(0.22, 0.005, 9);
        for i in 0..9 {
            let p = a.locate(a.value(i)).unwrap();
            let node = if p.frac == 1.0 { p.i + 1 } else { p.i };
            assert_eq!(node, i);
            assert!(p.frac == 0.0 || p.frac == 1.0);
        }
        assert!(a.locate(0.2199).is_none());
        assert!(a.locate(0.2601).is_none());
        let mid = a.locate(0.2225).unwrap();
        assert_eq!(mid.i, 0);
        assert!((mid.frac - 0.5).abs() < 1e-9);
        assert_eq!(a.nearest(0.2238), Some(1));
    }

    #[test]
    fn single_node_axis() {
        let a = Axis::new(3.0, 1.0, 1);
        assert_eq!(a.locate(3.0), Some(AxisPos { i: 0, frac: 0.0 }));
        assert!(a.locate(3.5).is_none());
    }

    #[test]
    fn index_round_trip() {
        let l = StepAxes {
            v: Axis::new(0.0, 1.0, 4),
            soc: Axis::new(0.2, 0.01, 3),
            t: Axis::new(10.0, 1.0, 5),
        };
        for idx in 0..l.node_count() {
            let (a, b, c) = l.unindex(idx);
            assert_eq!(l.index(a, b, c), idx);
            assert_eq!(l.node_of(&l.state(idx)), Some(idx));
        }
    }

    #[test]
    fn route_grid_respects_limits() {
        let sc = build_scenario("route1").unwrap();
        let spec = GridSpec::default();
        let grid = spec.build(&sc.route, &sc.ego.state(), None).unwrap();
        assert_eq!(grid.layers.len(), sc.route.step_count() + 1);
        for s in 0..=sc.route.step_count() {
            let l = grid.layer(s);
            assert!(l.v.last() <= sc.route.base_limit(sc.route.position(s)));
            assert!(l.v.is_increasing() && l.t.is_increasing());
        }
        assert_eq!(grid.layer(0).t.start, sc.ego.start_time_s);
        assert_eq!(spec.controls().len(), 16);
    }

    #[test]
    fn envelope_is_monotone_and_fast() {
        let sc = build_scenario("route2").unwrap();
        let n = sc.route.step_count();
        let t = earliest_arrival(&sc.route, 0, n, &EgoState::new(0.0, 0.25, 0.0), 2.0, -3.0);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        // Never faster than the top limit allows.
        assert!(t[n] >= 5000.0 / 17.0);
    }
}
