use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Bounds2, Position3};
use crate::safety::StaircaseSafetyFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotWaypoints {
    pub home: Position3,
    pub conveyor: Position3,
    /// Place points, both tables concatenated.
    pub table_slots: Vec<Position3>,
    /// Lift height for the approach and retreat legs of each trajectory.
    pub via_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanStations {
    /// Where the operator begins and returns after the last box.
    pub start: Position3,
    pub inbound: Vec<Position3>,
    /// One slot list per outbound area.
    pub outbound: Vec<Vec<Position3>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwellRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub robot_waypoints: RobotWaypoints,
    pub human_stations: HumanStations,
    /// m/s
    pub robot_nominal_speed: f64,
    /// m/s
    pub human_speed: f64,
    /// Horizontal std of the human goal perturbation, m.
    pub goal_sigma: f64,
    /// Horizontal std of the path midpoint perturbation, m.
    pub midpoint_sigma: f64,
    /// Human dwell at stations, uniform in [min, max] seconds.
    pub dwell_range: DwellRange,
    /// Robot dwell at pick and place points, seconds.
    pub robot_dwell: f64,
    /// Sampling period, seconds.
    pub tick: f64,
    /// Episodes running longer than this abort, seconds.
    pub max_duration: f64,
    pub workspace: Bounds2,
    pub safety: StaircaseSafetyFunction,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scene: {m}")));
        if !(self.tick > 0.0 && self.tick.is_finite()) {
            return bad("tick must be positive");
        }
        if !(self.robot_nominal_speed > 0.0 && self.human_speed > 0.0) {
            return bad("speeds must be positive");
        }
        if !(self.goal_sigma >= 0.0 && self.midpoint_sigma >= 0.0) {
            return bad("sigmas must be non-negative");
        }
        if !(self.dwell_range.min >= 0.0 && self.dwell_range.min <= self.dwell_range.max) {
            return bad("dwell_range needs 0 <= min <= max");
        }
        if !(self.robot_dwell >= 0.0 && self.robot_waypoints.via_height >= 0.0) {
            return bad("robot_dwell and via_height must be non-negative");
        }
        if self.max_duration.is_nan() || self.max_duration <= self.tick {
            return bad("max_duration must exceed one tick");
        }
        if !self.workspace.is_valid() {
            return bad("workspace bounds must be finite with min < max");
        }
        let rw = &self.robot_waypoints;
        let hs = &self.human_stations;
        if rw.table_slots.is_empty() || hs.inbound.is_empty() {
            return bad("need at least one table slot and one inbound slot");
        }
        let outbound: usize = hs.outbound.iter().map(Vec::len).sum();
        if outbound < hs.inbound.len() {
            return bad("outbound areas hold fewer boxes than the inbound area supplies");
        }
        let all = [rw.home, rw.conveyor, hs.start]
            .into_iter()
            .chain(rw.table_slots.iter().copied())
            .chain(hs.inbound.iter().copied())
            .chain(hs.outbound.iter().flatten().copied());
        for p in all {
            if !p.is_finite() {
                return bad("non-finite waypoint");
            }
        }
        for p in std::iter::once(&hs.start)
            .chain(&hs.inbound)
            .chain(hs.outbound.iter().flatten())
        {
            if !self.workspace.contains(p) {
                return bad("human station outside workspace bounds");
            }
        }
        Ok(())
    }

    /// Outbound slots in the order the operator fills them, alternating areas.
    pub fn outbound_order(&self) -> Vec<Position3> {
        let areas = &self.human_stations.outbound;
        let depth = areas.iter().map(Vec::len).max().unwrap_or(0);
        let mut order = Vec::new();
        for slot in 0..depth {
            for area in areas {
                if let Some(p) = area.get(slot) {
                    order.push(*p);
                }
            }
        }
        order
    }
}
