//! Ball-on-plate plant and PID controller simulation.
//!
//! The plant is a decoupled two-axis rolling ball: tilting the plate by an
//! angle `theta` accelerates the ball by `roll_factor * g * sin(theta)` along
//! that axis. Each axis is driven by its own PID loop acting on position
//! error, so a controller is fully described by six gains. Fitness is an
//! affine function of the integral of squared tracking error (ISE), clamped
//! to `[FITNESS_MIN, FITNESS_MAX]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowest fitness any controller can score. Failed evaluations also map here.
pub const FITNESS_MIN: f64 = -99.0;
/// Fitness of a controller that tracks the reference with zero error.
pub const FITNESS_MAX: f64 = 400.0;
/// Number of genes in a controller.
pub const GENE_COUNT: usize = 6;
/// Default bounds for every gene.
pub const GENE_LOW: f64 = 0.0;
pub const GENE_HIGH: f64 = 20.0;

/// Integral accumulator clamp (m·s).
pub const INTEGRAL_LIMIT: f64 = 1.0;

/// ISE reported when the simulation diverges to a non-finite state.
pub const ISE_SENTINEL: f64 = f64::INFINITY;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("degenerate calibration: the do-nothing controller has zero tracking error")]
    DegenerateCalibration,
}

/// The six controller gains: (proportional, integral, derivative) per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; GENE_COUNT]", into = "[f64; GENE_COUNT]")]
pub struct ControllerParams {
    pub kp_x: f64,
    pub ki_x: f64,
    pub kd_x: f64,
    pub kp_y: f64,
    pub ki_y: f64,
    pub kd_y: f64,
}

impl ControllerParams {
    pub const ZERO: ControllerParams = ControllerParams::from_array([0.0; GENE_COUNT]);

    pub const fn from_array(g: [f64; GENE_COUNT]) -> Self {
        ControllerParams {
            kp_x: g[0],
            ki_x: g[1],
            kd_x: g[2],
            kp_y: g[3],
            ki_y: g[4],
            kd_y: g[5],
        }
    }

    pub const fn to_array(&self) -> [f64; GENE_COUNT] {
        [self.kp_x, self.ki_x, self.kd_x, self.kp_y, self.ki_y, self.kd_y]
    }

    /// Builds params from a slice, rejecting wrong arity.
    pub fn from_slice(genes: &[f64]) -> Result<Self, PlantError> {
        let arr: [f64; GENE_COUNT] = genes.try_into().map_err(|_| {
            PlantError::InvalidParameters(format!(
                "expected {GENE_COUNT} genes, got {}",
                genes.len()
            ))
        })?;
        Ok(Self::from_array(arr))
    }

    /// Checks that every gene is finite and inside `[GENE_LOW, GENE_HIGH]`.
    pub fn validate(&self) -> Result<(), PlantError> {
        for (i, g) in self.to_array().iter().enumerate() {
            if !g.is_finite() {
                return Err(PlantError::InvalidParameters(format!(
                    "gene {i} is not finite"
                )));
            }
            if !(GENE_LOW..=GENE_HIGH).contains(g) {
                return Err(PlantError::InvalidParameters(format!(
                    "gene {i} = {g} outside [{GENE_LOW}, {GENE_HIGH}]"
                )));
            }
        }
        Ok(())
    }

    fn axis(&self, axis: Axis) -> (f64, f64, f64) {
        match axis {
            Axis::X => (self.kp_x, self.ki_x, self.kd_x),
            Axis::Y => (self.kp_y, self.ki_y, self.kd_y),
        }
    }
}

impl From<[f64; GENE_COUNT]> for ControllerParams {
    fn from(g: [f64; GENE_COUNT]) -> Self {
        Self::from_array(g)
    }
}

impl From<ControllerParams> for [f64; GENE_COUNT] {
    fn from(p: ControllerParams) -> Self {
        p.to_array()
    }
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

/// The canonical seed controller: PD with kp = 4, kd = 2 on both axes.
pub fn seed_params() -> ControllerParams {
    ControllerParams::from_array([4.0, 0.0, 2.0, 4.0, 0.0, 2.0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceTrajectory {
    /// Both setpoint coordinates alternate between `+amplitude` and
    /// `-amplitude`, switching every `period` seconds, starting positive.
    SquareWave { amplitude: f64, period: f64 },
}

impl ReferenceTrajectory {
    /// Setpoint `(rx, ry)` at step `k` of a simulation with timestep `dt`.
    pub fn setpoint(&self, k: usize, dt: f64) -> (f64, f64) {
        match *self {
            ReferenceTrajectory::SquareWave { amplitude, period } => {
                // The small offset keeps exact switch instants (k·dt = n·period)
                // from flipping on rounding.
                let phase = ((k as f64 * dt) / period + 1e-9).floor() as i64;
                let r = if phase % 2 == 0 { amplitude } else { -amplitude };
                (r, r)
            }
        }
    }

    fn amplitude(&self) -> f64 {
        match *self {
            ReferenceTrajectory::SquareWave { amplitude, .. } => amplitude,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub g: f64,
    pub roll_factor: f64,
    pub theta_max: f64,
    pub plate_half_width: f64,
    pub reference: ReferenceTrajectory,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.02,
            n_steps: 500,
            g: 9.81,
            roll_factor: 5.0 / 7.0,
            theta_max: 0.26,
            plate_half_width: 0.5,
            reference: ReferenceTrajectory::SquareWave {
                amplitude: 0.2,
                period: 2.5,
            },
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |m: &str| Err(PlantError::InvalidConfig(m.to_string()));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be > 0");
        }
        if self.n_steps == 0 {
            return bad("n_steps must be > 0");
        }
        if !(self.theta_max.is_finite() && self.theta_max > 0.0) {
            return bad("theta_max must be > 0");
        }
        if !(self.plate_half_width.is_finite() && self.plate_half_width > 0.0) {
            return bad("plate_half_width must be > 0");
        }
        if !(self.g.is_finite() && self.roll_factor.is_finite()) {
            return bad("g and roll_factor must be finite");
        }
        let ReferenceTrajectory::SquareWave { amplitude, period } = self.reference;
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return bad("reference amplitude must be finite and >= 0");
        }
        if !(period.is_finite() && period > 0.0) {
            return bad("reference period must be > 0");
        }
        if self.reference.amplitude() >= self.plate_half_width {
            return bad("reference amplitude must be inside the plate");
        }
        Ok(())
    }
}

/// Ball state plus the controller's integrator and derivative memory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ix: f64,
    pub iy: f64,
    pub prev_ex: f64,
    pub prev_ey: f64,
    pub t: f64,
}

/// Controller output for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub theta_x: f64,
    pub theta_y: f64,
    pub ix: f64,
    pub iy: f64,
    pub prev_ex: f64,
    pub prev_ey: f64,
}

/// One PID update on both axes. Integral and plate angle are clamped.
pub fn controller_step(
    params: &ControllerParams,
    ex: f64,
    ey: f64,
    state: &PlantState,
    dt: f64,
    theta_max: f64,
) -> Result<ControlOutput, PlantError> {
    if !(ex.is_finite() && ey.is_finite() && dt.is_finite() && theta_max.is_finite()) {
        return Err(PlantError::InvalidParameters("non-finite controller input".into()));
    }
    if dt <= 0.0 {
        return Err(PlantError::InvalidParameters("dt must be > 0".into()));
    }
    if params.to_array().iter().any(|g| !g.is_finite()) {
        return Err(PlantError::InvalidParameters("non-finite gain".into()));
    }

    let axis = |axis: Axis, e: f64, integral: f64, prev: f64| {
        let (kp, ki, kd) = params.axis(axis);
        let integral = (integral + e * dt).clamp(-INTEGRAL_LIMIT, INTEGRAL_LIMIT);
        let u = kp * e + ki * integral + kd * (e - prev) / dt;
        (u.clamp(-theta_max, theta_max), integral)
    };
    let (theta_x, ix) = axis(Axis::X, ex, state.ix, state.prev_ex);
    let (theta_y, iy) = axis(Axis::Y, ey, state.iy, state.prev_ey);

    Ok(ControlOutput {
        theta_x,
        theta_y,
        ix,
        iy,
        prev_ex: ex,
        prev_ey: ey,
    })
}

/// Advances the ball by one timestep under the given plate angles.
///
/// Velocity is updated first and the new velocity moves the ball
/// (semi-implicit Euler). A ball reaching the plate edge stops there.
pub fn plant_step(state: &PlantState, theta_x: f64, theta_y: f64, cfg: &SimConfig) -> PlantState {
    let axis = |p: f64, v: f64, theta: f64| {
        let a = cfg.roll_factor * cfg.g * theta.sin();
        let v = v + a * cfg.dt;
        let p = p + v * cfg.dt;
        if p.abs() > cfg.plate_half_width {
            (cfg.plate_half_width.copysign(p), 0.0)
        } else {
            (p, v)
        }
    };
    let (x, vx) = axis(state.x, state.vx, theta_x);
    let (y, vy) = axis(state.y, state.vy, theta_y);
    PlantState {
        x,
        y,
        vx,
        vy,
        t: state.t + cfg.dt,
        ..*state
    }
}

/// Runs one episode, calling `observe` after every step with the state, the
/// plate angles applied, and the setpoint tracked. Returns the ISE.
pub fn simulate_traced<F>(
    params: &ControllerParams,
    cfg: &SimConfig,
    mut observe: F,
) -> Result<f64, PlantError>
where
    F: FnMut(&PlantState, f64, f64),
{
    cfg.validate()?;
    if params.to_array().iter().any(|g| !g.is_finite()) {
        return Err(PlantError::InvalidParameters("non-finite gain".into()));
    }

    let mut state = PlantState::default();
    let mut ise = 0.0;
    for k in 0..cfg.n_steps {
        let (rx, ry) = cfg.reference.setpoint(k, cfg.dt);
        let ex = rx - state.x;
        let ey = ry - state.y;
        ise += (ex * ex + ey * ey) * cfg.dt;

        let ctl = match controller_step(params, ex, ey, &state, cfg.dt, cfg.theta_max) {
            Ok(c) => c,
            Err(_) => return Ok(ISE_SENTINEL),
        };
        state.ix = ctl.ix;
        state.iy = ctl.iy;
        state.prev_ex = ctl.prev_ex;
        state.prev_ey = ctl.prev_ey;
        state = plant_step(&state, ctl.theta_x, ctl.theta_y, cfg);
        // Recompute t from the step index so it stays an exact multiple of dt.
        state.t = (k + 1) as f64 * cfg.dt;

        if !(state.x.is_finite() && state.y.is_finite() && ise.is_finite()) {
            return Ok(ISE_SENTINEL);
        }
        observe(&state, ctl.theta_x, ctl.theta_y);
    }
    Ok(ise)
}

/// Integral of squared tracking error over one episode, starting with the
/// ball at rest at the origin.
pub fn simulate_ise(params: &ControllerParams, cfg: &SimConfig) -> Result<f64, PlantError> {
    simulate_traced(params, cfg, |_, _, _| {})
}

/// Maps ISE to fitness. Public so the affine map can be checked on its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessCalibration {
    pub scale_k: f64,
    pub f_max: f64,
    pub f_min: f64,
    pub seed_fitness: f64,
}

impl FitnessCalibration {
    pub fn fitness_from_ise(&self, ise: f64) -> f64 {
        let f = self.f_max - self.scale_k * ise;
        if f.is_nan() {
            return self.f_min;
        }
        f.clamp(self.f_min, self.f_max)
    }
}

/// Fitness of a controller: higher is better, clamped to `[-99, 400]`.
pub fn fitness_of(
    params: &ControllerParams,
    cfg: &SimConfig,
    cal: &FitnessCalibration,
) -> Result<f64, PlantError> {
    params.validate()?;
    let ise = simulate_ise(params, cfg)?;
    Ok(cal.fitness_from_ise(ise))
}

/// Derives the fitness scale so the all-zero controller scores exactly 0.
pub fn calibrate_fitness_scale(cfg: &SimConfig) -> Result<FitnessCalibration, PlantError> {
    let ise_zero = simulate_ise(&ControllerParams::ZERO, cfg)?;
    if ise_zero <= 0.0 || !ise_zero.is_finite() {
        return Err(PlantError::DegenerateCalibration);
    }
    let mut cal = FitnessCalibration {
        scale_k: FITNESS_MAX / ise_zero,
        f_max: FITNESS_MAX,
        f_min: FITNESS_MIN,
        seed_fitness: 0.0,
    };
    cal.seed_fitness = fitness_of(&seed_params(), cfg, &cal)?;
    Ok(cal)
}

/// A simulation configuration bundled with its calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessModel {
    pub sim: SimConfig,
    pub calibration: FitnessCalibration,
}

impl FitnessModel {
    pub fn new(sim: SimConfig) -> Result<Self, PlantError> {
        let calibration = calibrate_fitness_scale(&sim)?;
        Ok(FitnessModel { sim, calibration })
    }

    pub fn fitness(&self, params: &ControllerParams) -> Result<f64, PlantError> {
        fitness_of(params, &self.sim, &self.calibration)
    }
}
