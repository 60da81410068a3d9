use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::highway::{observe, step_longitudinal, EgoState, Lane, ObservedVehicle, RoadModel, Scenario, WorldSnapshot};
use crate::model::{AdvisoryCommand, PlannerParams};
use crate::planner::{PlanDiagnostics, SlasPlanner};
use crate::solver::{Clock, SolveStatus};

use super::executor::{LaneChangeExecutor, Retarget};
use super::idm::{mobil_decision, EgoDriver, IdmParams, Leader, MobilParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyKind {
    Slas,
    Mobil,
    NoChange,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Slas, PolicyKind::Mobil, PolicyKind::NoChange];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Slas => "slas",
            PolicyKind::Mobil => "mobil",
            PolicyKind::NoChange => "nochange",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "slas" => Ok(PolicyKind::Slas),
            "mobil" => Ok(PolicyKind::Mobil),
            "nochange" => Ok(PolicyKind::NoChange),
            _ => Err(alloc::format!("unknown policy `{s}` (expected slas, mobil or nochange)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    /// Episode length cap, s.
    pub time_cap: f64,
    /// Lateral centre distance below which two vehicles can collide, m.
    pub lateral_overlap: f64,
    pub idm: IdmParams,
    pub mobil: MobilParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            time_cap: 120.0,
            lateral_overlap: 2.0,
            idm: IdmParams::default(),
            mobil: MobilParams::default(),
        }
    }
}

/// Surrounding vehicle with the speed it returns to after braking.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficVehicle {
    pub id: u32,
    pub s: f64,
    pub v: f64,
    pub lane: Lane,
    pub nominal_speed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub time: f64,
    /// Simulator tick index.
    pub tick: u64,
    pub ego: EgoState,
    pub traffic: Vec<TrafficVehicle>,
    pub road: RoadModel,
}

impl WorldState {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let mut ego = scenario.ego.clone();
        ego.lateral = scenario.road.lane_center(ego.lane);
        WorldState {
            time: 0.0,
            tick: 0,
            ego,
            traffic: scenario
                .traffic
                .iter()
                .map(|t| TrafficVehicle {
                    id: t.id,
                    s: t.s0,
                    v: t.v,
                    lane: t.lane,
                    nominal_speed: t.v,
                })
                .collect(),
            road: scenario.road.clone(),
        }
    }

    /// What the ego perceives at planner step `step`.
    pub fn snapshot(&self, step: u64, visibility: f64) -> WorldSnapshot {
        let all: Vec<ObservedVehicle> = self
            .traffic
            .iter()
            .map(|t| ObservedVehicle::new(t.id, t.s, t.v, t.lane))
            .collect();
        WorldSnapshot {
            step,
            time: self.time,
            ego: self.ego.clone(),
            vehicles: observe(&self.ego, &all, visibility),
            road: self.road.clone(),
        }
    }
}

/// Speed and lane for the coming planner period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickCommand {
    pub target_lane: Lane,
    pub ref_speed: f64,
}

pub trait Policy {
    fn kind(&self) -> PolicyKind;

    /// `changing` is true while a lane change is still being executed.
    fn decide(&mut self, snapshot: &WorldSnapshot, changing: bool, clock: &dyn Clock) -> Decision;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub command: TickCommand,
    pub diagnostics: Option<PlanDiagnostics>,
}

pub struct SlasPolicy {
    pub planner: SlasPlanner,
    /// Full plan behind the latest command.
    pub last_command: Option<AdvisoryCommand>,
}

impl Policy for SlasPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Slas
    }

    fn decide(&mut self, snapshot: &WorldSnapshot, _changing: bool, clock: &dyn Clock) -> Decision {
        let (cmd, diag) = self.planner.plan(snapshot, clock);
        let command = TickCommand {
            target_lane: cmd.target_lane,
            ref_speed: cmd.ref_speed,
        };
        self.last_command = Some(cmd);
        Decision {
            command,
            diagnostics: Some(diag),
        }
    }
}

/// IDM car following plus MOBIL lane choice, or IDM alone.
pub struct BaselinePolicy {
    pub driver: EgoDriver,
    pub mobil: Option<MobilParams>,
}

impl Policy for BaselinePolicy {
    fn kind(&self) -> PolicyKind {
        if self.mobil.is_some() {
            PolicyKind::Mobil
        } else {
            PolicyKind::NoChange
        }
    }

    fn decide(&mut self, snapshot: &WorldSnapshot, changing: bool, _clock: &dyn Clock) -> Decision {
        let current = snapshot.ego.prev_target;
        let target = match self.mobil {
            Some(p) if !changing => mobil_decision(snapshot, current, &self.driver, &p),
            _ => current,
        };
        // follow whichever leader is closer while between lanes
        let v_cur = self.driver.follow_speed(snapshot, current);
        let v_new = self.driver.follow_speed(snapshot, target);
        let lateral_lane = snapshot.road.lane_at(snapshot.ego.lateral);
        let v_lat = self.driver.follow_speed(snapshot, lateral_lane);
        Decision {
            command: TickCommand {
                target_lane: target,
                ref_speed: v_cur.min(v_new).min(v_lat),
            },
            diagnostics: None,
        }
    }
}

pub fn make_policy(kind: PolicyKind, scenario: &Scenario, sim: &SimConfig) -> alloc::boxed::Box<dyn Policy> {
    let p = &scenario.params;
    match kind {
        PolicyKind::Slas => alloc::boxed::Box::new(SlasPolicy {
            planner: SlasPlanner::new(p.clone(), scenario.ego.lane),
            last_command: None,
        }),
        PolicyKind::Mobil | PolicyKind::NoChange => alloc::boxed::Box::new(BaselinePolicy {
            driver: ego_driver(p, &scenario.road, sim),
            mobil: (kind == PolicyKind::Mobil).then_some(sim.mobil),
        }),
    }
}

fn ego_driver(p: &PlannerParams, road: &RoadModel, sim: &SimConfig) -> EgoDriver {
    EgoDriver {
        idm: sim.idm,
        accel_max: p.accel_max,
        accel_min: p.accel_min,
        cruise_speed: p.speed_cap(road.speed_limit),
        vehicle_length: p.safety.vehicle_length,
        dt: p.dt,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    LaneChangeStart { from: Lane, to: Lane },
    LaneChangeFinish { lane: Lane },
    LaneChangeAbort { from: Lane, to: Lane },
    Collision { with: u32 },
    /// The planner had no usable plan and followed the leader instead.
    Fallback { status: SolveStatus, reason: Option<String> },
    InfeasibleSolve { status: SolveStatus },
    CommandRejected { requested: Lane, reason: String },
    Goal,
    TimeCap,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::LaneChangeStart { .. } => "lane_change_start",
            EventKind::LaneChangeFinish { .. } => "lane_change_finish",
            EventKind::LaneChangeAbort { .. } => "lane_change_abort",
            EventKind::Collision { .. } => "collision",
            EventKind::Fallback { .. } => "fallback",
            EventKind::InfeasibleSolve { .. } => "infeasible_solve",
            EventKind::CommandRejected { .. } => "command_rejected",
            EventKind::Goal => "goal",
            EventKind::TimeCap => "time_cap",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleSample {
    pub id: u32,
    pub s: f64,
    pub v: f64,
    pub lane: Lane,
}

/// Solver figures for a planner tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSample {
    pub status: SolveStatus,
    pub objective: f64,
    pub solve_time: f64,
    pub first_incumbent_time: Option<f64>,
    pub nodes: u64,
    pub lazy_cuts: usize,
    pub hint_accepted: bool,
    pub fallback: bool,
}

impl From<&PlanDiagnostics> for SolverSample {
    fn from(d: &PlanDiagnostics) -> Self {
        SolverSample {
            status: d.status,
            objective: d.objective,
            solve_time: d.solve_time,
            first_incumbent_time: d.first_incumbent_time,
            nodes: d.nodes,
            lazy_cuts: d.lazy_cuts,
            hint_accepted: d.hint_accepted,
            fallback: d.fallback,
        }
    }
}

/// State at the start of a simulator tick and the command in force.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub ego_s: f64,
    pub ego_v: f64,
    pub ego_lateral: f64,
    pub ego_lane: Lane,
    pub target_lane: Lane,
    pub ref_speed: f64,
    /// Set on ticks where the policy ran.
    pub planner_tick: bool,
    pub solver: Option<SolverSample>,
    pub vehicles: Vec<VehicleSample>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub policy: PolicyKind,
    pub dt: f64,
    pub road: RoadModel,
    pub visibility: f64,
    pub vehicle_length: f64,
    pub lateral_overlap: f64,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
}

impl EpisodeLog {
    pub fn collided(&self) -> bool {
        self.events.iter().any(|e| matches!(e.kind, EventKind::Collision { .. }))
    }

    pub fn reached_goal(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::Goal)
    }

    pub fn fallbacks(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::Fallback { .. })).count()
    }

    /// Solves without an incumbent after the first solve produced one.
    pub fn infeasible_after_first_feasible(&self) -> usize {
        let solves: Vec<&SolverSample> = self.samples.iter().filter_map(|s| s.solver.as_ref()).collect();
        match solves.iter().position(|s| s.status.has_incumbent()) {
            None => 0,
            Some(first) => solves[first..].iter().filter(|s| !s.status.has_incumbent()).count(),
        }
    }
}

fn leader_of(ego: &EgoState, traffic: &[TrafficVehicle], i: usize, lane_center: f64, cfg: &SimConfig, len: f64) -> Option<Leader> {
    let me = &traffic[i];
    let mut best: Option<(f64, f64)> = None;
    for (j, other) in traffic.iter().enumerate() {
        if j != i && other.lane == me.lane && other.s > me.s && best.map_or(true, |(s, _)| other.s < s) {
            best = Some((other.s, other.v));
        }
    }
    if (ego.lateral - lane_center).abs() < cfg.lateral_overlap && ego.s > me.s && best.map_or(true, |(s, _)| ego.s < s) {
        best = Some((ego.s, ego.v));
    }
    best.map(|(s, v)| Leader { gap: s - me.s - len, v })
}

/// Advance the surrounding traffic by `dt`: hold the nominal speed, brake
/// with the IDM only inside the desired gap.
fn step_traffic(world: &mut WorldState, cfg: &SimConfig, len: f64, dt: f64) {
    let idm = &cfg.idm;
    let accels: Vec<f64> = (0..world.traffic.len())
        .map(|i| {
            let t = &world.traffic[i];
            let centre = world.road.lane_center(t.lane);
            let leader = leader_of(&world.ego, &world.traffic, i, centre, cfg, len);
            match leader {
                Some(l) if l.gap < idm.desired_gap(t.v, l.v) => idm.accel(t.v, t.nominal_speed, Some(l)),
                _ => ((t.nominal_speed - t.v) / dt).clamp(-idm.comfort_decel, idm.accel),
            }
        })
        .collect();
    for (t, a) in world.traffic.iter_mut().zip(accels) {
        let v_next = (t.v + a * dt).max(0.0);
        t.s = step_longitudinal(t.s, t.v, v_next, dt);
        t.v = v_next;
    }
}

fn collision(world: &WorldState, cfg: &SimConfig, len: f64) -> Option<u32> {
    let ego = &world.ego;
    world
        .traffic
        .iter()
        .find(|t| (world.road.lane_center(t.lane) - ego.lateral).abs() < cfg.lateral_overlap && (t.s - ego.s).abs() < len)
        .map(|t| t.id)
}

/// Run one closed-loop episode until the goal, a collision or the time cap.
pub fn run_episode(scenario: &Scenario, policy: &mut dyn Policy, cfg: &SimConfig, clock: &dyn Clock) -> EpisodeLog {
    let params = &scenario.params;
    let dt = scenario.sim_dt;
    let per_plan = scenario.ticks_per_plan().max(1) as u64;
    let len = params.safety.vehicle_length;
    let cap = params.speed_cap(scenario.road.speed_limit);
    let mut world = WorldState::from_scenario(scenario);
    let mut exec = LaneChangeExecutor::new(
        world.ego.lane,
        scenario.road.lane_width,
        params.lane_change_steps as f64 * params.dt,
    );
    let mut log = EpisodeLog {
        policy: policy.kind(),
        dt,
        road: scenario.road.clone(),
        visibility: params.visibility,
        vehicle_length: len,
        lateral_overlap: cfg.lateral_overlap,
        samples: Vec::new(),
        events: Vec::new(),
    };
    let mut command = TickCommand {
        target_lane: world.ego.lane,
        ref_speed: world.ego.v,
    };
    let mut accel = 0.0;
    let max_ticks = crate::math::ceil(cfg.time_cap / dt) as u64;
    loop {
        let time = world.tick as f64 * dt;
        world.time = time;
        let planner_tick = world.tick % per_plan == 0;
        let mut solver = None;
        if planner_tick {
            let step = world.tick / per_plan;
            let snap = world.snapshot(step, params.visibility);
            let decision = policy.decide(&snap, exec.is_moving(), clock);
            if let Some(d) = &decision.diagnostics {
                if !d.status.has_incumbent() {
                    log.events.push(Event {
                        time,
                        kind: EventKind::InfeasibleSolve { status: d.status },
                    });
                }
                if d.fallback {
                    log.events.push(Event {
                        time,
                        kind: EventKind::Fallback {
                            status: d.status,
                            reason: d.error.clone(),
                        },
                    });
                }
                solver = Some(SolverSample::from(d));
            }
            command = decision.command;
            match exec.command(command.target_lane) {
                Ok(Retarget::Unchanged) => {}
                Ok(Retarget::Started { from, to }) => log.events.push(Event {
                    time,
                    kind: EventKind::LaneChangeStart { from, to },
                }),
                Ok(Retarget::Restarted { from, to }) => {
                    log.events.push(Event {
                        time,
                        kind: EventKind::LaneChangeAbort { from, to },
                    });
                    log.events.push(Event {
                        time,
                        kind: EventKind::LaneChangeStart { from, to },
                    });
                }
                Err(e) => {
                    log.events.push(Event {
                        time,
                        kind: EventKind::CommandRejected {
                            requested: command.target_lane,
                            reason: e.to_string(),
                        },
                    });
                    command.target_lane = exec.target;
                }
            }
            world.ego.push_target(command.target_lane);
            command.ref_speed = command.ref_speed.clamp(0.0, cap);
            accel = ((command.ref_speed - world.ego.v) / params.dt).clamp(params.accel_min, params.accel_max);
        }
        log.samples.push(Sample {
            time,
            ego_s: world.ego.s,
            ego_v: world.ego.v,
            ego_lateral: world.ego.lateral,
            ego_lane: world.ego.lane,
            target_lane: command.target_lane,
            ref_speed: command.ref_speed,
            planner_tick,
            solver,
            vehicles: world
                .traffic
                .iter()
                .map(|t| VehicleSample {
                    id: t.id,
                    s: t.s,
                    v: t.v,
                    lane: t.lane,
                })
                .collect(),
        });
        if world.ego.s >= scenario.road.length {
            log.events.push(Event { time, kind: EventKind::Goal });
            break;
        }
        if world.tick >= max_ticks {
            log.events.push(Event {
                time,
                kind: EventKind::TimeCap,
            });
            break;
        }

        // hold the acceleration until the reference speed is reached
        let v = world.ego.v;
        let mut v_next = v + accel * dt;
        if (accel > 0.0 && v_next > command.ref_speed) || (accel < 0.0 && v_next < command.ref_speed) {
            v_next = command.ref_speed;
        }
        let v_next = v_next.clamp(0.0, cap);
        step_traffic(&mut world, cfg, len, dt);
        world.ego.s = step_longitudinal(world.ego.s, v, v_next, dt);
        world.ego.v = v_next;
        if exec.step(dt) {
            log.events.push(Event {
                time: time + dt,
                kind: EventKind::LaneChangeFinish { lane: exec.target },
            });
        }
        world.ego.lateral = exec.lateral;
        world.tick += 1;
        if let Some(id) = collision(&world, cfg, len) {
            let time = world.tick as f64 * dt;
            log.events.push(Event {
                time,
                kind: EventKind::Collision { with: id },
            });
            break;
        }
    }
    log
}
