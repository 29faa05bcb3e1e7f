//! Desk-scale source seeking: lamps over a flat arena, unicycle robots with a
//! look-ahead PID controller and a discretized CBF target projection, and the
//! GMES loop choosing where the robots measure next.
//!
//! Lengths are meters and times seconds. The GP and the batch selection work
//! in arena coordinates; light readings are standardized by a fixed affine.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::acquisition::{find_x_ucb, gmes_select_batch, GmesConfig};
use crate::error::{Error, Result};
use crate::gp::{Dataset, DomainBox, GpPosterior, KernelSpec};
use crate::seed;
use crate::testbed::KernelParams;

const NOISE_STREAM: u64 = 0x7365_6e73;
const ALGO_STREAM: u64 = 0x616c_676f;
const INFER_STREAM: u64 = 0x696e_6665_72;

/// Point-light source hung above the arena floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lamp {
    pub x: f64,
    pub y: f64,
    pub height: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightField {
    pub arena_min: [f64; 2],
    pub arena_max: [f64; 2],
    pub lamps: Vec<Lamp>,
}

impl LightField {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for k in 0..2 {
            if !(self.arena_max[k] > self.arena_min[k]) {
                problems.push(format!("arena_max[{k}] must exceed arena_min[{k}]"));
            }
        }
        if self.lamps.is_empty() {
            problems.push("at least one lamp is required".into());
        }
        for (i, l) in self.lamps.iter().enumerate() {
            if !(l.height > 0.0) {
                problems.push(format!("lamps[{i}].height must be > 0 (got {})", l.height));
            }
            if !(l.intensity > 0.0) {
                problems.push(format!("lamps[{i}].intensity must be > 0 (got {})", l.intensity));
            }
        }
        problems
    }

    pub fn arena(&self) -> Result<DomainBox> {
        DomainBox::new(self.arena_min.to_vec(), self.arena_max.to_vec())
    }

    /// `Σ intensity / (height² + ‖x − lamp‖²)`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.arena()?.check(x)?;
        Ok(self.value_unchecked(x))
    }

    fn value_unchecked(&self, x: &[f64]) -> f64 {
        self.lamps
            .iter()
            .map(|l| {
                let dx = x[0] - l.x;
                let dy = x[1] - l.y;
                l.intensity / (l.height * l.height + dx * dx + dy * dy)
            })
            .sum()
    }

    /// Brightest ground point: 301² grid scan, then a shrinking pattern search.
    pub fn brightest(&self) -> [f64; 2] {
        let Ok(arena) = self.arena() else {
            return [f64::NAN, f64::NAN];
        };
        let mut best = arena.center();
        let mut best_v = f64::NEG_INFINITY;
        for p in arena.grid(301) {
            let v = self.value_unchecked(&p);
            if v > best_v {
                best_v = v;
                best = p;
            }
        }
        let mut h = arena.diagonal() / 300.0;
        while h > 1e-10 {
            let mut moved = false;
            for (dx, dy) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
                let mut c = vec![best[0] + dx, best[1] + dy];
                arena.clamp(&mut c);
                let v = self.value_unchecked(&c);
                if v > best_v {
                    best_v = v;
                    best = c;
                    moved = true;
                }
            }
            if !moved {
                h *= 0.5;
            }
        }
        [best[0], best[1]]
    }

    /// `(offset, scale)` standardizing the field over a 64×64 grid.
    pub fn output_affine(&self) -> Result<(f64, f64)> {
        let vals: Vec<f64> = self.arena()?.grid(64).iter().map(|p| self.value_unchecked(p)).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok((mean, var.sqrt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Single,
    Sparse,
    Dense,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Single, Preset::Sparse, Preset::Dense];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Single => "single",
            Preset::Sparse => "sparse",
            Preset::Dense => "dense",
        }
    }

    /// 3 m × 3 m arena; robots start in the lower-left corner.
    pub fn scenario(self) -> Scenario {
        let lamp = |x, y, height, intensity| Lamp { x, y, height, intensity };
        let lamps = match self {
            Preset::Single => vec![lamp(2.2, 2.0, 0.5, 1.0)],
            Preset::Sparse => vec![
                lamp(2.3, 2.2, 0.5, 1.0),
                lamp(0.8, 2.4, 0.7, 1.0),
                lamp(2.4, 0.7, 0.6, 0.5),
                lamp(1.3, 1.4, 0.8, 0.5),
            ],
            Preset::Dense => vec![
                lamp(2.0, 2.1, 0.5, 1.0),
                lamp(1.3, 2.2, 0.7, 1.0),
                lamp(2.1, 1.3, 0.6, 0.5),
                lamp(1.4, 1.5, 0.8, 0.5),
            ],
        };
        Scenario {
            name: self.name().to_string(),
            field: LightField {
                arena_min: [0.0, 0.0],
                arena_max: [3.0, 3.0],
                lamps,
            },
            starts: vec![[0.4, 0.4], [0.8, 0.4], [0.4, 0.8], [0.8, 0.8]],
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}` (valid: single, sparse, dense)"))
    }
}

/// Light field plus robot start positions (robot `i` starts at `starts[i]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub field: LightField,
    pub starts: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyConfig {
    pub d_safe: f64,
    pub k_alpha: f64,
    pub t_lk: f64,
    /// Minimum separation between published queries.
    pub r_div: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            d_safe: 0.2,
            k_alpha: 0.1,
            t_lk: 1.0,
            r_div: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub dt: f64,
    pub v_max: f64,
    pub omega_max: f64,
    /// Floor on the speed used for the look-ahead radius.
    pub v_min: f64,
    pub linear: PidGains,
    pub angular: PidGains,
    /// Distances below this command zero motion.
    pub deadband: f64,
    pub arrival_tol: f64,
    pub substep_budget: usize,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains { kp: 1.0, ki: 0.0, kd: 0.0 }
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            dt: 0.05,
            v_max: 0.22,
            omega_max: 2.84,
            v_min: 0.05,
            linear: PidGains { kp: 2.0, ki: 0.0, kd: 0.0 },
            angular: PidGains { kp: 4.0, ki: 0.0, kd: 0.05 },
            deadband: 1e-3,
            arrival_tol: 0.05,
            substep_budget: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PidMemory {
    pub linear_integral: f64,
    pub linear_prev: Option<f64>,
    pub angular_integral: f64,
    pub angular_prev: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: [f64; 2],
    pub heading: f64,
    pub v: f64,
    pub target: [f64; 2],
    pub pid: PidMemory,
}

impl RobotState {
    pub fn at(position: [f64; 2]) -> Self {
        RobotState {
            position,
            heading: 0.0,
            v: 0.0,
            target: position,
            pid: PidMemory::default(),
        }
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI);
    w - std::f64::consts::PI
}

/// Clips `query` to the look-ahead radius `max(v, v_min)·t_lk` around the robot.
pub fn lookahead_target(robot: &RobotState, query: [f64; 2], safety: &SafetyConfig, v_min: f64) -> [f64; 2] {
    let r_lk = robot.v.max(v_min) * safety.t_lk;
    let d = dist2(robot.position, query);
    if d <= r_lk {
        return query;
    }
    let s = r_lk / d;
    let p = robot.position;
    [p[0] + s * (query[0] - p[0]), p[1] + s * (query[1] - p[1])]
}

/// Half-space `nᵀx ≥ b`.
#[derive(Debug, Clone, Copy)]
struct HalfSpace {
    n: [f64; 2],
    b: f64,
}

impl HalfSpace {
    fn slack(&self, x: [f64; 2]) -> f64 {
        self.n[0] * x[0] + self.n[1] * x[1] - self.b
    }

    fn project(&self, x: [f64; 2]) -> [f64; 2] {
        let s = self.slack(x);
        if s >= 0.0 {
            x
        } else {
            [x[0] - s * self.n[0], x[1] - s * self.n[1]]
        }
    }
}

fn cbf_constraints(position: [f64; 2], others: &[[f64; 2]], safety: &SafetyConfig, dt: f64) -> Vec<HalfSpace> {
    let ka = safety.k_alpha * dt;
    others
        .iter()
        .filter_map(|&pj| {
            let d = dist2(position, pj);
            if d == 0.0 {
                return None;
            }
            let n = [(position[0] - pj[0]) / d, (position[1] - pj[1]) / d];
            let rhs = (1.0 - ka) * d + ka * safety.d_safe;
            Some(HalfSpace {
                n,
                b: rhs + n[0] * pj[0] + n[1] * pj[1],
            })
        })
        .collect()
}

const FEAS_TOL: f64 = 1e-12;

/// Closest point to `lookahead` satisfying the linearized, discretized CBF
/// constraint against every other robot's current position. `dt` is the time
/// over which the target is reached. `None` when the half-spaces have no
/// common point.
pub fn cbf_project(robot: &RobotState, lookahead: [f64; 2], others: &[[f64; 2]], safety: &SafetyConfig, dt: f64) -> Option<[f64; 2]> {
    let cons = cbf_constraints(robot.position, others, safety, dt);
    let feasible = |x: [f64; 2]| cons.iter().all(|c| c.slack(x) >= -FEAS_TOL);
    if feasible(lookahead) {
        return Some(lookahead);
    }
    let mut best: Option<([f64; 2], f64)> = None;
    let mut offer = |x: [f64; 2]| {
        if feasible(x) {
            let d = dist2(x, lookahead);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((x, d));
            }
        }
    };
    for c in &cons {
        offer(c.project(lookahead));
    }
    for (i, a) in cons.iter().enumerate() {
        for b in &cons[i + 1..] {
            let det = a.n[0] * b.n[1] - a.n[1] * b.n[0];
            if det.abs() > 1e-12 {
                offer([
                    (a.b * b.n[1] - b.b * a.n[1]) / det,
                    (a.n[0] * b.b - b.n[0] * a.b) / det,
                ]);
            }
        }
    }
    best.map(|(x, _)| x)
}

fn pid(g: &PidGains, err: f64, integral: &mut f64, prev: &mut Option<f64>, dt: f64) -> f64 {
    *integral += err * dt;
    let deriv = prev.map_or(0.0, |p| (err - p) / dt);
    *prev = Some(err);
    g.kp * err + g.ki * *integral + g.kd * deriv
}

/// One unicycle step toward `target`: angular PID on the bearing error,
/// linear PID on the distance (scaled by the heading alignment), both saturated.
pub fn step_robot(robot: &RobotState, target: [f64; 2], ctrl: &ControllerConfig) -> RobotState {
    let mut next = *robot;
    next.target = target;
    let dt = ctrl.dt;
    let dx = target[0] - robot.position[0];
    let dy = target[1] - robot.position[1];
    let dist = dx.hypot(dy);
    if dist <= ctrl.deadband {
        next.v = 0.0;
        next.pid = PidMemory::default();
        return next;
    }
    let bearing_err = wrap_angle(dy.atan2(dx) - robot.heading);
    let mem = &mut next.pid;
    let omega = pid(&ctrl.angular, bearing_err, &mut mem.angular_integral, &mut mem.angular_prev, dt)
        .clamp(-ctrl.omega_max, ctrl.omega_max);
    let align = bearing_err.cos().max(0.0);
    let v = (align * pid(&ctrl.linear, dist, &mut mem.linear_integral, &mut mem.linear_prev, dt)).clamp(0.0, ctrl.v_max);
    let heading = wrap_angle(robot.heading + omega * dt);
    next.heading = heading;
    next.v = v;
    next.position = [
        robot.position[0] + v * heading.cos() * dt,
        robot.position[1] + v * heading.sin() * dt,
    ];
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeekConfig {
    pub agents: usize,
    pub max_iterations: usize,
    /// Sensor noise std in field units.
    pub noise_std: f64,
    /// Kernel hyperparameters; the length scale is a fraction of the arena's
    /// shorter side.
    pub kernel: KernelParams,
    pub safety: SafetyConfig,
    pub controller: ControllerConfig,
    /// GMES settings; `r_div` is overridden by `safety.r_div` (meters).
    pub gmes: GmesConfig,
    pub hit_radius: f64,
    pub hits_required: usize,
}

impl Default for SeekConfig {
    fn default() -> Self {
        SeekConfig {
            agents: 4,
            max_iterations: 60,
            noise_std: 0.02,
            kernel: KernelParams::default(),
            safety: SafetyConfig::default(),
            controller: ControllerConfig::default(),
            gmes: GmesConfig::default(),
            hit_radius: 0.1,
            hits_required: 3,
        }
    }
}

impl SeekConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.agents == 0 {
            p.push("agents must be >= 1".to_string());
        }
        if self.max_iterations == 0 {
            p.push("max_iterations must be >= 1".to_string());
        }
        if self.hits_required == 0 {
            p.push("hits_required must be >= 1".to_string());
        }
        if !(self.noise_std >= 0.0) {
            p.push(format!("noise_std must be >= 0 (got {})", self.noise_std));
        }
        if !(self.kernel.length_scale > 0.0 && self.kernel.signal_variance > 0.0) {
            p.push("kernel.length_scale and kernel.signal_variance must be > 0".to_string());
        }
        let s = &self.safety;
        if !(s.d_safe > 0.0) {
            p.push(format!("safety.d_safe must be > 0 (got {})", s.d_safe));
        }
        if !(s.k_alpha > 0.0) {
            p.push(format!("safety.k_alpha must be > 0 (got {})", s.k_alpha));
        }
        if !(s.t_lk > 0.0) {
            p.push(format!("safety.t_lk must be > 0 (got {})", s.t_lk));
        }
        if !(s.r_div >= 0.0) {
            p.push(format!("safety.r_div must be >= 0 (got {})", s.r_div));
        }
        let c = &self.controller;
        if !(c.dt > 0.0) {
            p.push(format!("controller.dt must be > 0 (got {})", c.dt));
        }
        if !(c.v_max > 0.0 && c.omega_max > 0.0) {
            p.push("controller.v_max and controller.omega_max must be > 0".to_string());
        }
        if !(c.v_min > 0.0) {
            p.push(format!("controller.v_min must be > 0 (got {})", c.v_min));
        }
        if c.substep_budget == 0 {
            p.push("controller.substep_budget must be >= 1".to_string());
        }
        p.extend(self.gmes.validate());
        p
    }
}

/// One row of the trajectory log (`t` is simulated seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub robot_id: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub target_x: f64,
    pub target_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeekIteration {
    pub iter: usize,
    pub queries: Vec<[f64; 2]>,
    /// Where each robot actually measured.
    pub measured_at: Vec<[f64; 2]>,
    pub inferred: [f64; 2],
    pub error_m: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeekResult {
    pub scenario: String,
    pub agents: usize,
    pub seed: u64,
    pub iterations_to_converge: usize,
    pub sim_time_s: f64,
    pub converged: bool,
    pub source: [f64; 2],
    pub safety_stalls: usize,
    pub min_pair_distance: Option<f64>,
    pub iterations: Vec<SeekIteration>,
    #[serde(skip)]
    pub trajectory: Vec<TrajectoryRow>,
}

impl SeekResult {
    pub fn trajectory_csv(&self) -> String {
        let mut s = String::from("t,robot_id,x,y,heading,v,target_x,target_y\n");
        for r in &self.trajectory {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.t, r.robot_id, r.x, r.y, r.heading, r.v, r.target_x, r.target_y
            ));
        }
        s
    }
}

/// Smallest pairwise distance among robot positions.
pub fn min_pair_distance(positions: &[[f64; 2]]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, a) in positions.iter().enumerate() {
        for b in &positions[i + 1..] {
            let d = dist2(*a, *b);
            best = Some(best.map_or(d, |m: f64| m.min(d)));
        }
    }
    best
}

/// Robots and the shared clock.
struct Fleet<'a> {
    robots: Vec<RobotState>,
    arena: DomainBox,
    cfg: &'a SeekConfig,
    time: f64,
    stalls: usize,
    min_pair: Option<f64>,
    log: Vec<TrajectoryRow>,
}

impl Fleet<'_> {
    fn positions(&self) -> Vec<[f64; 2]> {
        self.robots.iter().map(|r| r.position).collect()
    }

    fn record(&mut self) {
        for (i, r) in self.robots.iter().enumerate() {
            self.log.push(TrajectoryRow {
                t: self.time,
                robot_id: i,
                x: r.position[0],
                y: r.position[1],
                heading: r.heading,
                v: r.v,
                target_x: r.target[0],
                target_y: r.target[1],
            });
        }
    }

    fn check_safety(&mut self) -> Result<()> {
        let pos = self.positions();
        let d_safe = self.cfg.safety.d_safe;
        for (i, a) in pos.iter().enumerate() {
            for (j, b) in pos.iter().enumerate().skip(i + 1) {
                let d = dist2(*a, *b);
                self.min_pair = Some(self.min_pair.map_or(d, |m| m.min(d)));
                if d <= d_safe {
                    return Err(Error::SafetyViolation {
                        time: self.time,
                        i,
                        j,
                        distance: d,
                    });
                }
            }
        }
        Ok(())
    }

    /// One lockstep substep. Targets are projected against the previous
    /// positions; moves are then accepted in robot order, and a move that
    /// would bring a robot within `d_safe` of another is replaced by a hold.
    fn substep(&mut self, queries: &[[f64; 2]]) -> Result<()> {
        let ctrl = &self.cfg.controller;
        let safety = &self.cfg.safety;
        let prev = self.positions();
        let mut proposals = Vec::with_capacity(self.robots.len());
        for (i, r) in self.robots.iter().enumerate() {
            let others: Vec<[f64; 2]> = prev.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| *p).collect();
            let la = lookahead_target(r, queries[i], safety, ctrl.v_min);
            let target = match cbf_project(r, la, &others, safety, safety.t_lk) {
                Some(t) => t,
                None => {
                    self.stalls += 1;
                    r.position
                }
            };
            let mut next = step_robot(r, target, ctrl);
            let mut p = next.position.to_vec();
            self.arena.clamp(&mut p);
            next.position = [p[0], p[1]];
            proposals.push(next);
        }
        let mut current = prev.clone();
        for (i, next) in proposals.into_iter().enumerate() {
            let clear = current
                .iter()
                .enumerate()
                .all(|(j, p)| j == i || dist2(next.position, *p) > safety.d_safe + 1e-9);
            if clear {
                current[i] = next.position;
                self.robots[i] = next;
            } else {
                self.stalls += 1;
                let r = &mut self.robots[i];
                r.v = 0.0;
                r.target = next.target;
            }
        }
        self.time += ctrl.dt;
        self.record();
        self.check_safety()
    }

    /// Drives every robot toward its query until all are within the arrival
    /// tolerance or the substep budget runs out.
    fn drive(&mut self, queries: &[[f64; 2]]) -> Result<()> {
        let tol = self.cfg.controller.arrival_tol;
        for _ in 0..self.cfg.controller.substep_budget {
            if self.robots.iter().zip(queries).all(|(r, q)| dist2(r.position, *q) <= tol) {
                break;
            }
            self.substep(queries)?;
        }
        for r in &mut self.robots {
            r.v = 0.0;
            r.pid = PidMemory::default();
        }
        Ok(())
    }
}

/// Runs the seeking loop with an empty prior.
pub fn run_seek(scenario: &Scenario, cfg: &SeekConfig, run_seed: u64) -> Result<SeekResult> {
    run_seek_with_prior(scenario, cfg, run_seed, &Dataset::empty())
}

/// Runs the seeking loop. `prior` holds extra `(position, reading)` pairs in
/// arena coordinates and field units that seed the GP.
///
/// The robots first measure at their start positions. Each iteration then
/// selects a batch, drives, measures, refits and checks whether the argmax of
/// the posterior mean lies within `hit_radius` of the true source; the run
/// converges after `hits_required` consecutive hits.
pub fn run_seek_with_prior(scenario: &Scenario, cfg: &SeekConfig, run_seed: u64, prior: &Dataset) -> Result<SeekResult> {
    let mut problems = cfg.validate();
    problems.extend(scenario.field.validate());
    let m = cfg.agents;
    if scenario.starts.len() < m {
        problems.push(format!("scenario has {} start positions for {m} agents", scenario.starts.len()));
    }
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems.join("; ")));
    }
    let field = &scenario.field;
    let arena = field.arena()?;
    let starts = &scenario.starts[..m];
    for s in starts {
        arena.check(s)?;
    }
    if let Some(d) = min_pair_distance(starts) {
        if d <= cfg.safety.d_safe {
            return Err(Error::InvalidConfig(format!(
                "start positions are {d} m apart, not more than d_safe = {}",
                cfg.safety.d_safe
            )));
        }
    }
    let source = field.brightest();
    let (offset, scale) = field.output_affine()?;
    let side = (arena.upper()[0] - arena.lower()[0]).min(arena.upper()[1] - arena.lower()[1]);
    let to_point = |p: &[f64; 2]| p.to_vec();
    let from_point = |u: &[f64]| -> [f64; 2] { [u[0], u[1]] };

    let noise_std = cfg.noise_std / scale;
    let kernel = KernelSpec::new(cfg.kernel.length_scale * side, cfg.kernel.signal_variance, noise_std * noise_std)?;
    let prior = Dataset::new(
        prior.points().to_vec(),
        prior.values().iter().map(|v| (v - offset) / scale).collect(),
    )?;
    let mut gp = GpPosterior::fit(kernel, prior)?;
    let gmes = GmesConfig {
        r_div: cfg.safety.r_div,
        seed: seed::derive(seed::derive(run_seed, &[ALGO_STREAM]), &[cfg.gmes.seed]),
        ..cfg.gmes.clone()
    };
    let infer_base = GmesConfig {
        restarts: cfg.gmes.restarts,
        ucb_iters: cfg.gmes.ucb_iters,
        ..GmesConfig::default()
    };
    let mut noise_rng = seed::rng(run_seed, &[NOISE_STREAM]);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut measure = |fleet: &Fleet, gp: &GpPosterior| -> Result<(GpPosterior, Vec<[f64; 2]>)> {
        let at = fleet.positions();
        let xs: Vec<Vec<f64>> = at.iter().map(to_point).collect();
        let ys: Vec<f64> = at
            .iter()
            .map(|p| (field.value_unchecked(p) + noise.sample(&mut noise_rng) - offset) / scale)
            .collect();
        Ok((gp.extend(&xs, &ys)?, at))
    };

    let mut fleet = Fleet {
        robots: starts.iter().map(|s| RobotState::at(*s)).collect(),
        arena: arena.clone(),
        cfg,
        time: 0.0,
        stalls: 0,
        min_pair: None,
        log: Vec::new(),
    };
    fleet.record();
    fleet.check_safety()?;
    gp = measure(&fleet, &gp)?.0;

    let mut iterations = Vec::new();
    let mut hits = 0;
    let mut converged = false;
    for t in 1..=cfg.max_iterations {
        let mut step = || -> Result<(GpPosterior, SeekIteration)> {
            let (batch, _) = gmes_select_batch(&gp, t, &arena, m, &gmes)?;
            let queries: Vec<[f64; 2]> = batch.iter().map(|u| from_point(u)).collect();
            fleet.drive(&queries)?;
            let (next_gp, measured_at) = measure(&fleet, &gp)?;
            let infer = GmesConfig {
                seed: seed::derive(run_seed, &[INFER_STREAM, t as u64]),
                ..infer_base.clone()
            };
            let inferred = from_point(&find_x_ucb(&next_gp, 0.0, &arena, &infer)?);
            let error_m = dist2(inferred, source);
            Ok((
                next_gp,
                SeekIteration {
                    iter: t,
                    queries,
                    measured_at,
                    inferred,
                    error_m,
                    hit: error_m <= cfg.hit_radius,
                },
            ))
        };
        let (next_gp, record) = step().map_err(|e| e.at_iteration(t))?;
        gp = next_gp;
        hits = if record.hit { hits + 1 } else { 0 };
        iterations.push(record);
        if hits >= cfg.hits_required {
            converged = true;
            break;
        }
    }
    Ok(SeekResult {
        scenario: scenario.name.clone(),
        agents: m,
        seed: run_seed,
        iterations_to_converge: iterations.len(),
        sim_time_s: fleet.time,
        converged,
        source,
        safety_stalls: fleet.stalls,
        min_pair_distance: fleet.min_pair,
        iterations,
        trajectory: fleet.log,
    })
}

/// Recomputes the termination rule from the iteration log.
pub fn termination_holds(result: &SeekResult, hit_radius: f64, hits_required: usize) -> bool {
    let its = &result.iterations;
    its.len() >= hits_required
        && its[its.len() - hits_required..]
            .iter()
            .all(|it| dist2(it.inferred, result.source) <= hit_radius)
        && its[..its.len() - 1]
            .windows(hits_required)
            .all(|w| w.iter().any(|it| dist2(it.inferred, result.source) > hit_radius))
}
