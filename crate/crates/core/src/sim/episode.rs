use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::motion::{advance_along, plan_human_path, robot_tick};
use super::scene::SceneConfig;
use crate::error::{Error, Result};
use crate::geom::Position3;

/// One recorded tick: positions, goals and the applied scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub episode: u32,
    pub xr: Position3,
    pub xh: Position3,
    pub gr: Position3,
    pub gh: Position3,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub episode: u32,
    /// `None` for traces imported from outside the simulator.
    pub seed: Option<u64>,
    pub samples: Vec<Sample>,
    /// Human path points that had to be clamped to the workspace.
    pub clamped_points: usize,
}

impl EpisodeTrace {
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Task {
    MoveTo(Position3),
    Dwell(f64),
    /// Dwell drawn uniformly from the scene's range when it starts.
    RandomDwell,
}

#[derive(Debug)]
enum Activity {
    Idle,
    Moving(VecDeque<Position3>),
    Dwelling(f64),
}

#[derive(Debug)]
struct Agent {
    pos: Position3,
    goal: Position3,
    activity: Activity,
    tasks: VecDeque<Task>,
}

impl Agent {
    fn new(pos: Position3, tasks: VecDeque<Task>) -> Self {
        Agent {
            pos,
            goal: pos,
            activity: Activity::Idle,
            tasks,
        }
    }

    fn finished(&self) -> bool {
        matches!(self.activity, Activity::Idle) && self.tasks.is_empty()
    }

    fn step(&mut self, budget: f64, dt: f64) {
        match &mut self.activity {
            Activity::Idle => {}
            Activity::Moving(path) => {
                self.pos = advance_along(self.pos, path, budget);
                if path.is_empty() {
                    self.activity = Activity::Idle;
                }
            }
            Activity::Dwelling(left) => {
                *left -= dt;
                if *left <= 1e-9 {
                    self.activity = Activity::Idle;
                }
            }
        }
    }
}

struct Cell<'a> {
    cfg: &'a SceneConfig,
    rng: ChaCha8Rng,
    robot: Agent,
    human: Agent,
    clamped: usize,
}

impl Cell<'_> {
    fn start_robot_task(&mut self) {
        while matches!(self.robot.activity, Activity::Idle) {
            let Some(task) = self.robot.tasks.pop_front() else {
                return;
            };
            match task {
                Task::MoveTo(target) => {
                    let lift = Position3::new(0.0, 0.0, self.cfg.robot_waypoints.via_height);
                    let path = VecDeque::from([self.robot.pos + lift, target + lift, target]);
                    self.robot.goal = target;
                    self.robot.activity = Activity::Moving(path);
                }
                Task::Dwell(d) if d > 0.0 => self.robot.activity = Activity::Dwelling(d),
                Task::Dwell(_) | Task::RandomDwell => {}
            }
        }
    }

    fn start_human_task(&mut self) {
        let cfg = self.cfg;
        while matches!(self.human.activity, Activity::Idle) {
            let Some(task) = self.human.tasks.pop_front() else {
                return;
            };
            match task {
                Task::MoveTo(nominal) => {
                    let path = plan_human_path(
                        self.human.pos,
                        nominal,
                        cfg.goal_sigma,
                        cfg.midpoint_sigma,
                        &cfg.workspace,
                        &mut self.rng,
                    );
                    if path.clamped {
                        self.clamped += 1;
                    }
                    self.human.goal = path.goal();
                    self.human.activity = Activity::Moving(VecDeque::from([path.waypoints[1], path.waypoints[2]]));
                }
                Task::RandomDwell => {
                    let (lo, hi) = (cfg.dwell_range.min, cfg.dwell_range.max);
                    let d = if hi > lo { self.rng.random_range(lo..hi) } else { lo };
                    if d > 0.0 {
                        self.human.activity = Activity::Dwelling(d);
                    }
                }
                Task::Dwell(d) if d > 0.0 => self.human.activity = Activity::Dwelling(d),
                Task::Dwell(_) => {}
            }
        }
    }
}

/// Runs one box-transfer process to completion.
///
/// Each tick starts any pending trajectories (switching goals), evaluates
/// the safety law, records the sample, then moves both agents.
pub fn simulate_episode(cfg: &SceneConfig, episode: u32, seed: u64) -> Result<EpisodeTrace> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let rw = &cfg.robot_waypoints;
    let mut slots = rw.table_slots.clone();
    slots.shuffle(&mut rng);
    let mut robot_tasks = VecDeque::new();
    for slot in slots {
        robot_tasks.extend([
            Task::MoveTo(rw.conveyor),
            Task::Dwell(cfg.robot_dwell),
            Task::MoveTo(slot),
            Task::Dwell(cfg.robot_dwell),
        ]);
    }
    robot_tasks.push_back(Task::MoveTo(rw.home));

    let hs = &cfg.human_stations;
    let mut human_tasks = VecDeque::new();
    for (pick, place) in hs.inbound.iter().zip(cfg.outbound_order()) {
        human_tasks.extend([
            Task::MoveTo(*pick),
            Task::RandomDwell,
            Task::MoveTo(place),
            Task::RandomDwell,
        ]);
    }
    human_tasks.push_back(Task::MoveTo(hs.start));

    let mut cell = Cell {
        cfg,
        rng,
        robot: Agent::new(rw.home, robot_tasks),
        human: Agent::new(hs.start, human_tasks),
        clamped: 0,
    };

    let max_ticks = (cfg.max_duration / cfg.tick).floor() as u64;
    let mut samples = Vec::new();
    let mut tick: u64 = 0;
    loop {
        cell.start_robot_task();
        cell.start_human_task();
        let s = cfg.safety.eval(&cell.robot.pos, &cell.human.pos)?;
        samples.push(Sample {
            t: tick as f64 * cfg.tick,
            episode,
            xr: cell.robot.pos,
            xh: cell.human.pos,
            gr: cell.robot.goal,
            gh: cell.human.goal,
            s,
        });
        if cell.robot.finished() && cell.human.finished() {
            break;
        }
        if tick >= max_ticks {
            return Err(Error::MaxDuration {
                episode,
                cap_s: cfg.max_duration,
            });
        }
        let dt = cfg.tick;
        if let Activity::Moving(path) = &mut cell.robot.activity {
            cell.robot.pos = robot_tick(cell.robot.pos, path, s, cfg.robot_nominal_speed, dt);
            if path.is_empty() {
                cell.robot.activity = Activity::Idle;
            }
        } else {
            cell.robot.step(0.0, dt);
        }
        cell.human.step(cfg.human_speed * dt, dt);
        tick += 1;
    }

    Ok(EpisodeTrace {
        episode,
        seed: Some(seed),
        samples,
        clamped_points: cell.clamped,
    })
}
