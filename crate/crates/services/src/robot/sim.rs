//! Simulated robot: run-state machine, joint-space trajectories and scripted
//! sensor profiles. Time only moves through [`RobotSim::advance`].

use super::kinematics::RobotModel;
use hrc_core::{RobotStateSample, RunState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Stopped,
    Playing,
    Paused,
    HandGuiding,
}

impl Mode {
    pub fn run_state(self) -> RunState {
        match self {
            Mode::Stopped => RunState::Stopped,
            Mode::Playing => RunState::Playing,
            Mode::Paused | Mode::HandGuiding => RunState::Paused,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub q: [f64; 6],
    #[serde(default)]
    pub dwell_ms: u64,
}

/// Scripted sensor values, one per state sample while the task plays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorProfile {
    pub sensor: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskProgram {
    pub waypoints: Vec<Waypoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<SensorProfile>,
    /// Operator assistance flag raised while this task runs.
    #[serde(default)]
    pub assistance: bool,
}

/// Per-task programs; tasks without one get a generated pick motion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RobotProgram {
    #[serde(default)]
    pub tasks: BTreeMap<String, TaskProgram>,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl RobotProgram {
    pub fn for_task(&self, model: &RobotModel, task: &str) -> TaskProgram {
        if let Some(p) = self.tasks.get(task) {
            return p.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(task));
        let mut work = model.home;
        for v in &mut work {
            *v += rng.gen_range(-0.5..0.5);
        }
        TaskProgram {
            waypoints: vec![Waypoint { q: model.clamp(work), dwell_ms: 300 }, Waypoint { q: model.home, dwell_ms: 0 }],
            sensor: None,
            assistance: false,
        }
    }
}

/// Segment time so that no joint exceeds its speed limit.
pub fn segment_ms(model: &RobotModel, from: &[f64; 6], to: &[f64; 6]) -> u64 {
    let t = (0..6).map(|j| (to[j] - from[j]).abs() / model.max_speed[j]).fold(0.0, f64::max);
    (t * 1000.0).ceil() as u64
}

#[derive(Debug, Clone, PartialEq)]
struct Motion {
    task: String,
    program: TaskProgram,
    /// Index of the waypoint being approached.
    idx: usize,
    seg_from: [f64; 6],
    seg_ms: u64,
    seg_elapsed: u64,
    dwell_left: u64,
    total_ms: u64,
    elapsed_ms: u64,
    sensor_idx: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gate {
    /// No confirmation pending.
    Open,
    /// Waiting for an acknowledge before the next task.
    Waiting,
    /// Acknowledged; the next task may start.
    Released,
}

#[derive(Debug, Clone)]
pub struct RobotSim {
    pub model: RobotModel,
    pub agent: String,
    q: [f64; 6],
    mode: Mode,
    motion: Option<Motion>,
    gate: Gate,
    require_ack: bool,
    last_sensor: BTreeMap<String, f64>,
}

/// Result of a tick for the adapter.
#[derive(Debug, Clone, PartialEq)]
pub enum TickOutcome {
    Idle,
    Moving,
    Finished(String),
}

impl RobotSim {
    pub fn new(model: RobotModel, agent: &str, require_ack: bool) -> Self {
        let q = model.home;
        RobotSim {
            model,
            agent: agent.into(),
            q,
            mode: Mode::Stopped,
            motion: None,
            gate: if require_ack { Gate::Waiting } else { Gate::Open },
            require_ack,
            last_sensor: BTreeMap::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn joints(&self) -> [f64; 6] {
        self.q
    }

    pub fn gate(&self) -> Gate {
        self.gate
    }

    pub fn current_task(&self) -> Option<&str> {
        self.motion.as_ref().map(|m| m.task.as_str())
    }

    pub fn play_pause(&mut self) {
        self.mode = match self.mode {
            Mode::Stopped | Mode::Paused => Mode::Playing,
            Mode::Playing | Mode::HandGuiding => Mode::Paused,
        };
    }

    /// Enters hand-guiding from playing or paused; leaving goes to paused.
    pub fn move_mode(&mut self) -> bool {
        self.mode = match self.mode {
            Mode::Playing | Mode::Paused => Mode::HandGuiding,
            Mode::HandGuiding => Mode::Paused,
            Mode::Stopped => return false,
        };
        true
    }

    /// Releases the confirmation gate; `false` if none was pending.
    pub fn acknowledge(&mut self) -> bool {
        if self.gate == Gate::Waiting {
            self.gate = Gate::Released;
            true
        } else {
            false
        }
    }

    /// Whether the adapter may ask for a new task.
    pub fn wants_task(&self) -> bool {
        self.mode == Mode::Playing && self.motion.is_none() && self.gate != Gate::Waiting
    }

    /// Playing with nothing left to do.
    pub fn finish_program(&mut self) {
        if self.mode == Mode::Playing && self.motion.is_none() {
            self.mode = Mode::Stopped;
        }
    }

    pub fn start_task(&mut self, task: &str, program: TaskProgram) {
        let mut total = 0;
        let mut from = self.q;
        for w in &program.waypoints {
            total += segment_ms(&self.model, &from, &w.q) + w.dwell_ms;
            from = w.q;
        }
        let mut m = Motion {
            task: task.into(),
            program,
            idx: 0,
            seg_from: self.q,
            seg_ms: 0,
            seg_elapsed: 0,
            dwell_left: 0,
            total_ms: total,
            elapsed_ms: 0,
            sensor_idx: 0,
        };
        if let Some(w) = m.program.waypoints.first() {
            m.seg_ms = segment_ms(&self.model, &self.q, &w.q);
            m.dwell_left = w.dwell_ms;
        }
        if self.gate == Gate::Released {
            self.gate = Gate::Open;
        }
        self.motion = Some(m);
    }

    /// Drops the current task without finishing it.
    pub fn abort(&mut self, task: &str) -> bool {
        if self.current_task() == Some(task) {
            self.motion = None;
            self.last_sensor.clear();
            if self.require_ack {
                self.gate = Gate::Waiting;
            }
            true
        } else {
            false
        }
    }

    fn progress(&self) -> f64 {
        match &self.motion {
            None => 0.0,
            Some(m) => {
                let traj = if m.total_ms == 0 { 1.0 } else { m.elapsed_ms as f64 / m.total_ms as f64 };
                let sensor = m.program.sensor.as_ref().map_or(1.0, |s| {
                    if s.values.is_empty() {
                        1.0
                    } else {
                        m.sensor_idx as f64 / s.values.len() as f64
                    }
                });
                traj.min(sensor).min(1.0)
            }
        }
    }

    /// Advances motion by `dt_ms` (only while playing) and consumes one
    /// sensor value. A task finishes when both its waypoints and its sensor
    /// profile are exhausted.
    pub fn advance(&mut self, dt_ms: u64) -> TickOutcome {
        if self.mode != Mode::Playing {
            return if self.motion.is_some() { TickOutcome::Moving } else { TickOutcome::Idle };
        }
        let Some(m) = self.motion.as_mut() else {
            self.last_sensor.clear();
            return TickOutcome::Idle;
        };
        let mut budget = dt_ms;
        while budget > 0 && m.idx < m.program.waypoints.len() {
            let target = m.program.waypoints[m.idx].q;
            if m.seg_elapsed < m.seg_ms {
                let step = budget.min(m.seg_ms - m.seg_elapsed);
                m.seg_elapsed += step;
                m.elapsed_ms += step;
                budget -= step;
                if m.seg_elapsed == m.seg_ms {
                    self.q = target;
                } else {
                    let f = m.seg_elapsed as f64 / m.seg_ms as f64;
                    for j in 0..6 {
                        self.q[j] = m.seg_from[j] + (target[j] - m.seg_from[j]) * f;
                    }
                }
            } else if m.dwell_left > 0 {
                let step = budget.min(m.dwell_left);
                m.dwell_left -= step;
                m.elapsed_ms += step;
                budget -= step;
            } else {
                self.q = target;
                m.idx += 1;
                m.seg_from = target;
                m.seg_elapsed = 0;
                if let Some(w) = m.program.waypoints.get(m.idx) {
                    m.seg_ms = segment_ms(&self.model, &target, &w.q);
                    m.dwell_left = w.dwell_ms;
                }
            }
        }
        // A segment that ended exactly on the budget still needs its index bump.
        while m.idx < m.program.waypoints.len() && m.seg_elapsed >= m.seg_ms && m.dwell_left == 0 {
            let target = m.program.waypoints[m.idx].q;
            self.q = target;
            m.idx += 1;
            m.seg_from = target;
            m.seg_elapsed = 0;
            if let Some(w) = m.program.waypoints.get(m.idx) {
                m.seg_ms = segment_ms(&self.model, &target, &w.q);
                m.dwell_left = w.dwell_ms;
            }
        }
        self.last_sensor.clear();
        let mut sensor_done = true;
        if let Some(s) = &m.program.sensor {
            if let Some(v) = s.values.get(m.sensor_idx) {
                self.last_sensor.insert(s.sensor.clone(), *v);
                m.sensor_idx += 1;
            }
            sensor_done = m.sensor_idx >= s.values.len();
        }
        if m.idx >= m.program.waypoints.len() && sensor_done {
            let task = m.task.clone();
            self.motion = None;
            if self.require_ack {
                self.gate = Gate::Waiting;
            }
            return TickOutcome::Finished(task);
        }
        TickOutcome::Moving
    }

    pub fn is_moving(&self) -> bool {
        self.mode == Mode::Playing
            && self.motion.as_ref().is_some_and(|m| m.idx < m.program.waypoints.len() && m.seg_elapsed < m.seg_ms)
    }

    pub fn sample(&self, t_ms: u64) -> RobotStateSample {
        let assistance = self.motion.as_ref().is_some_and(|m| m.program.assistance);
        RobotStateSample {
            agent: self.agent.clone(),
            t_ms,
            joints: self.q,
            tcp: self.model.fk(&self.q).expect("joints stay finite"),
            run_state: self.mode.run_state(),
            moving: self.is_moving(),
            move_mode: self.mode == Mode::HandGuiding,
            assistance,
            sensors: self.last_sensor.clone(),
            task: self.current_task().map(str::to_string),
            progress: self.progress(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim() -> RobotSim {
        let mut s = RobotSim::new(RobotModel::ur5e(), "robot", false);
        s.play_pause();
        s
    }

    fn program(model: &RobotModel) -> TaskProgram {
        let mut q = model.home;
        q[0] += 1.0;
        q[2] -= 0.5;
        TaskProgram {
            waypoints: vec![Waypoint { q, dwell_ms: 200 }, Waypoint { q: model.home, dwell_ms: 0 }],
            ..Default::default()
        }
    }

    #[test]
    fn run_state_machine() {
        let mut s = RobotSim::new(RobotModel::ur5e(), "robot", false);
        assert_eq!(s.mode(), Mode::Stopped);
        assert!(!s.move_mode());
        s.play_pause();
        assert_eq!(s.mode(), Mode::Playing);
        s.play_pause();
        assert_eq!(s.mode(), Mode::Paused);
        s.play_pause();
        assert_eq!(s.mode(), Mode::Playing);
        assert!(s.move_mode());
        assert_eq!(s.sample(0).run_state, RunState::Paused);
        assert!(s.sample(0).move_mode);
        s.move_mode();
        assert_eq!(s.mode(), Mode::Paused);
        s.move_mode();
        s.play_pause();
        assert_eq!(s.mode(), Mode::Paused);
    }

    #[test]
    fn pause_resume_matches_uninterrupted() {
        let mut a = sim();
        let mut b = sim();
        let p = program(&a.model);
        a.start_task("t", p.clone());
        b.start_task("t", p);
        let mut fa = TickOutcome::Idle;
        while !matches!(fa, TickOutcome::Finished(_)) {
            fa = a.advance(100);
        }
        let mut fb = TickOutcome::Idle;
        let mut n = 0;
        while !matches!(fb, TickOutcome::Finished(_)) {
            if n == 3 {
                b.play_pause();
                let q = b.joints();
                for _ in 0..5 {
                    b.advance(100);
                    assert_eq!(b.joints(), q, "paused robot holds still");
                }
                b.play_pause();
            }
            fb = b.advance(100);
            n += 1;
        }
        assert_eq!(a.joints(), b.joints());
        assert_eq!(a.sample(0).tcp, b.sample(0).tcp);
    }

    #[test]
    fn speed_bound_between_samples() {
        let mut s = sim();
        let p = program(&s.model);
        s.start_task("t", p);
        let mut prev = s.joints();
        loop {
            let out = s.advance(100);
            let q = s.joints();
            for j in 0..6 {
                assert!((q[j] - prev[j]).abs() <= s.model.max_speed[j] * 0.1 + 1e-12);
            }
            prev = q;
            if matches!(out, TickOutcome::Finished(_)) {
                break;
            }
        }
        assert_eq!(s.joints(), s.model.home);
    }

    #[test]
    fn sensor_profile_gates_completion() {
        let mut s = sim();
        let prog = TaskProgram {
            waypoints: vec![],
            sensor: Some(SensorProfile { sensor: "pressure".into(), values: vec![1.0, 2.0, 3.0] }),
            assistance: false,
        };
        s.start_task("sand", prog);
        let mut seen = vec![];
        loop {
            let out = s.advance(100);
            seen.push(s.sample(0).sensors["pressure"]);
            if matches!(out, TickOutcome::Finished(_)) {
                break;
            }
        }
        assert_eq!(seen, vec![1.0, 2.0, 3.0]);
        s.advance(100);
        assert!(s.sample(0).sensors.is_empty());
    }

    #[test]
    fn acknowledge_gate() {
        let mut s = RobotSim::new(RobotModel::ur5e(), "robot", true);
        s.play_pause();
        assert!(!s.wants_task());
        assert!(s.acknowledge());
        assert!(!s.acknowledge());
        assert!(s.wants_task());
        s.start_task("t", TaskProgram::default());
        assert!(matches!(s.advance(100), TickOutcome::Finished(_)));
        assert_eq!(s.gate(), Gate::Waiting);
    }
}
