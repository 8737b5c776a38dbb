use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geom::{Bounds2, Position3};

/// Moves `pos` up to `budget` meters along the waypoint chain, popping
/// waypoints as they are reached.
pub fn advance_along(mut pos: Position3, path: &mut VecDeque<Position3>, mut budget: f64) -> Position3 {
    while budget > 0.0 {
        let Some(&target) = path.front() else { break };
        let seg = target - pos;
        let len = seg.norm();
        if len <= budget {
            pos = target;
            budget -= len;
            path.pop_front();
        } else {
            pos = pos + seg.scale(budget / len);
            budget = 0.0;
        }
    }
    // a zero-length leftover segment counts as reached
    while path.front().is_some_and(|t| *t == pos) {
        path.pop_front();
    }
    pos
}

/// One Euler step of the robot tool point at scaled speed `s * v_nom`.
pub fn robot_tick(pos: Position3, path: &mut VecDeque<Position3>, s: f64, v_nom: f64, dt: f64) -> Position3 {
    debug_assert!((0.0..=1.0).contains(&s) && dt > 0.0);
    if s == 0.0 {
        return pos;
    }
    advance_along(pos, path, s * v_nom * dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanPath {
    /// `[start, midpoint, goal]`
    pub waypoints: [Position3; 3],
    /// Set when a perturbed point fell outside the workspace and was clamped.
    pub clamped: bool,
}

impl HumanPath {
    pub fn goal(&self) -> Position3 {
        self.waypoints[2]
    }
}

fn horizontal_jitter<R: Rng + ?Sized>(p: Position3, sigma: f64, rng: &mut R) -> Position3 {
    if sigma == 0.0 {
        return p;
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    let dx = n.sample(rng);
    let dy = n.sample(rng);
    Position3::new(p.x + dx, p.y + dy, p.z)
}

/// Randomized operator path: the goal and the path midpoint are both
/// perturbed in the horizontal plane.
pub fn plan_human_path<R: Rng + ?Sized>(
    start: Position3,
    nominal_goal: Position3,
    goal_sigma: f64,
    midpoint_sigma: f64,
    bounds: &Bounds2,
    rng: &mut R,
) -> HumanPath {
    let (goal, goal_clamped) = bounds.clamp(horizontal_jitter(nominal_goal, goal_sigma, rng));
    let (mid, mid_clamped) = bounds.clamp(horizontal_jitter(start.midpoint(&goal), midpoint_sigma, rng));
    HumanPath {
        waypoints: [start, mid, goal],
        clamped: goal_clamped || mid_clamped,
    }
}
