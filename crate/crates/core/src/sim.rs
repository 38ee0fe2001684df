//! Hybrid executor: truth propagation, observer flows on the group, jump
//! detection and the Lyapunov monitors evaluated on the resulting log.

use std::sync::Arc;
use std::time::Instant;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{Vec3, Vec6};
use crate::measurement::{build_scene_matrices, BiasModel, Scene, SceneMatrices};
use crate::observers::{
    dissipation_psi, flow, jump_condition, jump_map, Observer, ObserverGains, ObserverState,
    ProjectionParams, Variant,
};
use crate::potential::{build_jump_set, gap_measured, potential_value_true, JumpSetDef, UChoice};
use crate::se3::{ad, angle_axis, dist_identity, exp_se3, HomVec4, Pose};

/// Estimation error beyond which a run is declared divergent.
pub const DIVERGENCE_DIST: f64 = 1e6;

pub type TwistFn = Arc<dyn Fn(f64) -> Vec6 + Send + Sync>;

/// Body-frame velocity of the true trajectory.
#[derive(Clone)]
pub enum Profile {
    Constant(Vec6),
    /// `ω = a_ω [−sin ft, cos ft, 0]`, `v = a_v [cos ft, sin ft, 0]`.
    Circular { omega_amp: f64, v_amp: f64, freq: f64 },
    Custom(TwistFn),
}

impl std::fmt::Debug for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Profile::Constant(x) => write!(f, "Constant({x:?})"),
            Profile::Circular {
                omega_amp,
                v_amp,
                freq,
            } => write!(f, "Circular {{ omega_amp: {omega_amp}, v_amp: {v_amp}, freq: {freq} }}"),
            Profile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Profile {
    pub fn at(&self, t: f64) -> Vec6 {
        match self {
            Profile::Constant(x) => *x,
            Profile::Circular {
                omega_amp,
                v_amp,
                freq,
            } => {
                let (s, c) = (freq * t).sin_cos();
                Vec6::new([-omega_amp * s, omega_amp * c, 0.0, v_amp * c, v_amp * s, 0.0])
            }
            Profile::Custom(f) => f(t),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectorySpec {
    pub g0: Pose,
    pub profile: Profile,
    pub duration: f64,
    pub step: f64,
}

impl TrajectorySpec {
    pub fn new(g0: Pose, profile: Profile, duration: f64, step: f64) -> Result<Self> {
        let traj = TrajectorySpec {
            g0,
            profile,
            duration,
            step,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidInput(format!("step must be positive, got {}", self.step)));
        }
        if !(self.duration >= self.step && self.duration.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "duration {} must be at least one step {}",
                self.duration, self.step
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.step - 1e-9).ceil() as usize
    }
}

/// Hybrid time `(t, j)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct HybridTime {
    pub t: f64,
    pub j: usize,
}

/// `dexp⁻¹` for the right-trivialized equation `ẏ = y k^∧`, truncated after
/// the second bracket.
fn dexpinv(u: &Vec6, k: &Vec6) -> Vec6 {
    let a = ad(u);
    let uk = a * *k;
    *k + uk * 0.5 + (a * uk) * (1.0 / 12.0)
}

/// One Runge-Kutta-Munthe-Kaas step of order four for `P` coupled group
/// variables `ẏ_i = y_i ξ_i^∧` plus one additive 6-vector.
pub fn rkmk4<const P: usize, F>(poses: &[Pose; P], x: &Vec6, t: f64, h: f64, f: F) -> ([Pose; P], Vec6)
where
    F: Fn(f64, &[Pose; P], &Vec6) -> ([Vec6; P], Vec6),
{
    let stage = |u: &[Vec6; P], dx: &Vec6| -> ([Pose; P], Vec6) {
        let mut ys = *poses;
        for i in 0..P {
            ys[i] = poses[i].compose(&exp_se3(&u[i], 1.0));
        }
        (ys, *x + *dx)
    };
    let (k1, d1) = f(t, poses, x);

    let u2 = k1.map(|k| k * (0.5 * h));
    let (y2, x2) = stage(&u2, &(d1 * (0.5 * h)));
    let (a2, d2) = f(t + 0.5 * h, &y2, &x2);
    let k2: [Vec6; P] = std::array::from_fn(|i| dexpinv(&u2[i], &a2[i]));

    let u3 = k2.map(|k| k * (0.5 * h));
    let (y3, x3) = stage(&u3, &(d2 * (0.5 * h)));
    let (a3, d3) = f(t + 0.5 * h, &y3, &x3);
    let k3: [Vec6; P] = std::array::from_fn(|i| dexpinv(&u3[i], &a3[i]));

    let u4 = k3.map(|k| k * h);
    let (y4, x4) = stage(&u4, &(d3 * h));
    let (a4, d4) = f(t + h, &y4, &x4);
    let k4: [Vec6; P] = std::array::from_fn(|i| dexpinv(&u4[i], &a4[i]));

    let mut out = *poses;
    for i in 0..P {
        let inc = (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        out[i] = poses[i].compose(&exp_se3(&inc, 1.0));
    }
    let xn = *x + (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (h / 6.0);
    (out, xn)
}

/// One step of `ġ = g ξ(t)^∧` of length `traj.step`.
pub fn propagate_truth(traj: &TrajectorySpec, t: f64, g: &Pose) -> Pose {
    let (out, _) = rkmk4(&[*g], &Vec6::zeros(), t, traj.step, |s, _, _| {
        ([traj.profile.at(s)], Vec6::zeros())
    });
    out[0]
}

/// Measurements and measured velocity held over one observer step.
#[derive(Clone, Debug)]
pub struct HeldInputs {
    pub xi_y: Vec6,
    pub b_meas: Vec<HomVec4>,
}

/// One flow step of the observer with inputs held constant, followed by as
/// many jumps as the jump condition demands (bounded by `max_jumps`).
/// Returns the new state and the number of jumps taken.
#[allow(clippy::too_many_arguments)]
pub fn step_observer(
    observer: &Observer,
    sm: &SceneMatrices,
    gains: &ObserverGains,
    state: &ObserverState,
    inputs: &HeldInputs,
    h: f64,
    proj: &ProjectionParams,
    max_jumps: usize,
) -> Result<(ObserverState, usize)> {
    let (y, b) = rkmk4(&[state.g_hat], &state.b_hat, 0.0, h, |_, ys, bh| {
        let st = ObserverState::new(ys[0], *bh);
        let (xi, db) = flow(observer.variant, sm, gains, &st, &inputs.xi_y, &inputs.b_meas, proj);
        ([xi], db)
    });
    let mut st = ObserverState::new(y[0], b);
    let mut jumps = 0;
    while let Some((true, _)) = jump_condition(observer, sm, &st, &inputs.b_meas) {
        if jumps >= max_jumps {
            return Err(Error::DivergenceDetected {
                t: f64::NAN,
                j: jumps,
                reason: "consecutive jump limit reached".into(),
            });
        }
        st = jump_map(observer, sm, &st, &inputs.b_meas)?;
        jumps += 1;
    }
    Ok((st, jumps))
}

/// Complete description of a simulation run shared by every observer.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub scene: Scene,
    pub trajectory: TrajectorySpec,
    pub bias: BiasModel,
    pub gains: ObserverGains,
    pub theta_star: f64,
    pub u_choice: UChoice,
    /// `None` selects the default fraction of the feasibility bound.
    pub delta: Option<f64>,
    /// Standard deviation of the additive output noise.
    pub noise_sigma: f64,
    pub projection: ProjectionParams,
    pub g_hat0: Pose,
    pub b_hat0: Vec6,
    pub seed: u64,
}

/// The constant bias used in the noiseless study.
pub const STUDY_BIAS: [f64; 6] = [-0.02, 0.02, 0.1, 0.2, -0.1, 0.01];

impl Scenario {
    /// Noiseless study: one landmark, three directions, circular motion,
    /// `R(0)` a half turn about `e₁`, constant bias, `θ* = 2π/3`, `𝕌 = 𝔼(Q)`,
    /// unit gains, default `δ`, 60 s at `h = 1e-3`.
    pub fn study() -> Self {
        let r0 = angle_axis(std::f64::consts::PI, &Vec3::unit(0)).expect("unit axis");
        let g0 = Pose::new(r0, Vec3::new([0.0, 1.0, 4.0]));
        Scenario {
            scene: crate::measurement::study_scene(),
            trajectory: TrajectorySpec {
                g0,
                profile: Profile::Circular {
                    omega_amp: 1.0,
                    v_amp: 2.0,
                    freq: 1.0,
                },
                duration: 60.0,
                step: 1e-3,
            },
            bias: BiasModel::constant(Vec6::new(STUDY_BIAS)),
            gains: ObserverGains::unit(),
            theta_star: 2.0 * std::f64::consts::PI / 3.0,
            u_choice: UChoice::Eigenbasis,
            delta: None,
            noise_sigma: 0.0,
            projection: ProjectionParams::default(),
            g_hat0: Pose::identity(),
            b_hat0: Vec6::zeros(),
            seed: 0,
        }
    }

    /// Noisy study: output noise of variance 0.1, cosine-modulated bias at
    /// 0.02 rad/s, projection enabled.
    pub fn study_noisy(seed: u64) -> Self {
        let mut s = Scenario::study();
        s.noise_sigma = 0.1f64.sqrt();
        s.bias = BiasModel::cosine(Vec6::new(STUDY_BIAS), 0.02);
        s.projection.enabled = true;
        s.seed = seed;
        s
    }

    pub fn prepare(&self) -> Result<Setup> {
        self.trajectory.validate()?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        if self.projection.enabled && self.b_hat0.norm() >= self.projection.delta {
            return Err(Error::InvalidInput(format!(
                "initial bias estimate norm {} must be below the projection radius {}",
                self.b_hat0.norm(),
                self.projection.delta
            )));
        }
        let sm = build_scene_matrices(&self.scene)?;
        let jump_set = build_jump_set(&sm, self.theta_star, &self.u_choice, self.delta)?;
        Ok(Setup { sm, jump_set })
    }
}

/// Scene matrices and jump set derived once from a scenario.
#[derive(Clone, Debug)]
pub struct Setup {
    pub sm: SceneMatrices,
    pub jump_set: JumpSetDef,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub j: usize,
    pub g: Pose,
    pub g_hat: Pose,
    pub b_a: Vec6,
    pub b_hat: Vec6,
    /// `|g̃|_I` with `g̃ = g ĝ⁻¹`.
    pub dist_gi: f64,
    /// `‖b̂ − b_a‖`.
    pub bias_err: f64,
    /// `𝒰(g̃)` on the true error.
    pub u: f64,
    pub v: f64,
    /// Jump-set gap as seen by the observer (from its measurements).
    pub gap: f64,
    /// `‖ψ‖²` of the variant's dissipation term on noiseless outputs.
    pub psi_sq: f64,
    pub jumped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent {
    pub t: f64,
    /// Jump counter after the jump.
    pub j: usize,
    pub q_index: usize,
    pub gap: f64,
    pub v_before: f64,
    pub v_after: f64,
}

#[derive(Clone, Debug)]
pub struct RunLog {
    pub variant: Variant,
    pub rows: Vec<LogRow>,
    pub jumps: Vec<JumpEvent>,
    pub delta: f64,
    pub k_beta: f64,
    pub step: f64,
    pub wall_time: f64,
}

impl RunLog {
    pub fn last(&self) -> &LogRow {
        self.rows.last().expect("log has the initial row")
    }

    /// Last logged row with `t ≤ time`.
    pub fn at_time(&self, time: f64) -> &LogRow {
        let idx = self.rows.partition_point(|r| r.t <= time + 1e-9);
        &self.rows[idx.saturating_sub(1)]
    }
}

/// `b̃ᵀΓ⁻¹b̃`, skipping channels whose gain is zero.
fn bias_energy(gains: &ObserverGains, b_tilde: &Vec6) -> f64 {
    let gd = gains.gamma_diag();
    (0..6)
        .filter(|&i| gd[i] > 0.0)
        .map(|i| b_tilde[i] * b_tilde[i] / gd[i])
        .sum()
}

/// Lyapunov function `𝒰(g̃) + b̃ᵀΓ⁻¹b̃`.
pub fn lyapunov(sm: &SceneMatrices, gains: &ObserverGains, g: &Pose, st: &ObserverState, b_a: &Vec6) -> f64 {
    let gt = g.compose(&st.g_hat.inverse());
    potential_value_true(sm, &gt) + bias_energy(gains, &(st.b_hat - *b_a))
}

struct Runner<'a> {
    scenario: &'a Scenario,
    setup: &'a Setup,
    observer: Observer,
}

impl Runner<'_> {
    fn measure(&self, g: &Pose, noise: &[Vec3]) -> Vec<HomVec4> {
        let gi = g.inverse();
        self.setup
            .sm
            .r
            .iter()
            .zip(noise)
            .map(|(r, n)| {
                let mut b = gi.act(r);
                b.v += *n;
                b
            })
            .collect()
    }

    fn row(&self, t: f64, j: usize, g: &Pose, st: &ObserverState, b_meas: &[HomVec4], jumped: bool) -> LogRow {
        let sm = &self.setup.sm;
        let b_a = self.scenario.bias.at(t);
        let gt = g.compose(&st.g_hat.inverse());
        let clean = crate::measurement::measure_exact(g, &sm.r);
        let psi = dissipation_psi(self.observer.variant, sm, &st.g_hat, &clean);
        let u = potential_value_true(sm, &gt);
        LogRow {
            t,
            j,
            g: *g,
            g_hat: st.g_hat,
            b_a,
            b_hat: st.b_hat,
            dist_gi: dist_identity(&gt),
            bias_err: (st.b_hat - b_a).norm(),
            u,
            v: u + bias_energy(&self.scenario.gains, &(st.b_hat - b_a)),
            gap: gap_measured(sm, &self.setup.jump_set, &st.g_hat, b_meas).value,
            psi_sq: psi.norm_squared(),
            jumped,
        }
    }

    fn run(&self) -> Result<RunLog> {
        let start = Instant::now();
        let sc = self.scenario;
        let sm = &self.setup.sm;
        let h = sc.trajectory.step;
        let n_steps = sc.trajectory.steps();
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        let normal = (sc.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, sc.noise_sigma).expect("finite sigma"));
        let draw = |rng: &mut ChaCha8Rng| -> Vec<Vec3> {
            (0..sm.r.len())
                .map(|_| match &normal {
                    Some(n) => Vec3::new([n.sample(rng), n.sample(rng), n.sample(rng)]),
                    None => Vec3::zeros(),
                })
                .collect()
        };

        let mut g = sc.trajectory.g0;
        let mut st = ObserverState::new(sc.g_hat0, sc.b_hat0);
        let mut t = 0.0;
        let mut j = 0usize;
        let mut noise = draw(&mut rng);
        let mut b_meas = self.measure(&g, &noise);

        let v0 = lyapunov(sm, &sc.gains, &g, &st, &sc.bias.at(0.0));
        let delta = self.setup.jump_set.delta;
        let max_jumps = 10 * ((v0 / delta).ceil() as usize).max(1);
        let mut rows = Vec::with_capacity(n_steps + 8);
        let mut jumps = Vec::new();
        rows.push(self.row(t, j, &g, &st, &b_meas, false));

        for k in 0..=n_steps {
            let mut consecutive = 0;
            while let Some((true, gap)) = jump_condition(&self.observer, sm, &st, &b_meas) {
                if consecutive >= max_jumps {
                    return Err(Error::DivergenceDetected {
                        t,
                        j,
                        reason: format!("more than {max_jumps} consecutive jumps"),
                    });
                }
                let v_before = rows.last().map(|r: &LogRow| r.v).unwrap_or(v0);
                st = jump_map(&self.observer, sm, &st, &b_meas)?;
                j += 1;
                consecutive += 1;
                let row = self.row(t, j, &g, &st, &b_meas, true);
                debug!("{} jump at t = {t:.4}: q = {}, gap = {:.6}", self.observer.variant, gap.argmin, gap.value);
                jumps.push(JumpEvent {
                    t,
                    j,
                    q_index: gap.argmin,
                    gap: gap.value,
                    v_before,
                    v_after: row.v,
                });
                rows.push(row);
            }
            if k == n_steps {
                break;
            }

            let held = noise.clone();
            let variant = self.observer.variant;
            let (ys, b_new) = rkmk4(&[g, st.g_hat], &st.b_hat, t, h, |s, ys, bh| {
                let xi = sc.trajectory.profile.at(s);
                let xi_y = xi + sc.bias.at(s);
                let meas = self.measure(&ys[0], &held);
                let est = ObserverState::new(ys[1], *bh);
                let (xi_hat, db) = flow(variant, sm, &sc.gains, &est, &xi_y, &meas, &sc.projection);
                ([xi, xi_hat], db)
            });
            g = ys[0];
            st = ObserverState::new(ys[1], b_new);
            t = (k + 1) as f64 * h;
            noise = draw(&mut rng);
            b_meas = self.measure(&g, &noise);
            let row = self.row(t, j, &g, &st, &b_meas, false);
            if !(row.dist_gi.is_finite() && row.v.is_finite()) || row.dist_gi > DIVERGENCE_DIST {
                return Err(Error::DivergenceDetected {
                    t,
                    j,
                    reason: format!("estimation error |g̃|_I = {}", row.dist_gi),
                });
            }
            rows.push(row);
        }
        Ok(RunLog {
            variant: self.observer.variant,
            rows,
            jumps,
            delta,
            k_beta: sc.gains.k_beta,
            step: h,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }
}

/// Runs one observer over the whole scenario.
pub fn run(scenario: &Scenario, variant: Variant) -> Result<RunLog> {
    let setup = scenario.prepare()?;
    run_prepared(scenario, &setup, variant)
}

pub fn run_prepared(scenario: &Scenario, setup: &Setup, variant: Variant) -> Result<RunLog> {
    let observer = if variant.is_hybrid() {
        Observer::new(variant, Some(setup.jump_set.clone()))?
    } else {
        Observer::smooth()
    };
    Runner {
        scenario,
        setup,
        observer,
    }
    .run()
}

/// Integrates the closed loop without jumps over `[t0, t0 + span]` with `n`
/// steps and returns the final `(g, ĝ, b̂)`.
pub fn integrate_flow(
    scenario: &Scenario,
    setup: &Setup,
    variant: Variant,
    t0: f64,
    start: (Pose, ObserverState),
    span: f64,
    n: usize,
) -> (Pose, ObserverState) {
    let sm = &setup.sm;
    let h = span / n as f64;
    let (mut g, mut st) = start;
    for k in 0..n {
        let t = t0 + k as f64 * h;
        let (ys, b) = rkmk4(&[g, st.g_hat], &st.b_hat, t, h, |s, ys, bh| {
            let xi = scenario.trajectory.profile.at(s);
            let xi_y = xi + scenario.bias.at(s);
            let meas = crate::measurement::measure_exact(&ys[0], &sm.r);
            let est = ObserverState::new(ys[1], *bh);
            let (xi_hat, db) = flow(variant, sm, &scenario.gains, &est, &xi_y, &meas, &scenario.projection);
            ([xi, xi_hat], db)
        });
        g = ys[0];
        st = ObserverState::new(ys[1], b);
    }
    (g, st)
}

fn state_distance(a: &(Pose, ObserverState), b: &(Pose, ObserverState)) -> f64 {
    (a.0.matrix() - b.0.matrix())
        .max_abs()
        .max((a.1.g_hat.matrix() - b.1.g_hat.matrix()).max_abs())
        .max((a.1.b_hat - b.1.b_hat).max_abs())
}

/// `‖y_h − y_{h/2}‖ / ‖y_{h/2} − y_{h/4}‖` over one interval; close to 16 for
/// a fourth-order method.
pub fn richardson_ratio(
    scenario: &Scenario,
    setup: &Setup,
    variant: Variant,
    t0: f64,
    start: (Pose, ObserverState),
    span: f64,
    n: usize,
) -> f64 {
    let y1 = integrate_flow(scenario, setup, variant, t0, start, span, n);
    let y2 = integrate_flow(scenario, setup, variant, t0, start, span, 2 * n);
    let y4 = integrate_flow(scenario, setup, variant, t0, start, span, 4 * n);
    state_distance(&y1, &y2) / state_distance(&y2, &y4)
}

/// Diagnostics computed from a finished log.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub flow_samples: usize,
    pub flow_violations: usize,
    /// Violations once the sample on each side of every jump is set aside.
    pub flow_violations_off_jump: usize,
    pub flow_pass_fraction: f64,
    pub jump_count: usize,
    /// Largest `ΔV + δ` over all jumps (non-positive when every jump decreases `V` by `δ`).
    pub jump_worst_excess: f64,
    pub jump_budget: usize,
    pub initial_v: f64,
    /// Fitted decay rate of `log|x|`, where `|x|² = |g̃|²_I + ‖b̃‖²`.
    pub lambda_hat: Option<f64>,
    pub fit_rms: Option<f64>,
    pub fit_window: Option<(f64, f64)>,
    /// Largest change of the rotational flow rows under translational
    /// perturbations, sampled along the run.
    pub decoupling_residual: Option<f64>,
}

impl Diagnostics {
    pub fn jumps_ok(&self, tol: f64) -> bool {
        self.jump_worst_excess <= tol && self.jump_count <= self.jump_budget
    }
}

/// Errors below this level sit on the round-off floor and are left out of
/// the exponential fit.
pub const FIT_FLOOR: f64 = 1e-10;

pub fn monitors(log: &RunLog, setup: Option<(&Scenario, &Setup)>) -> Diagnostics {
    let rows = &log.rows;
    let h = log.step;
    let mut flow_samples = 0;
    let mut violations = Vec::new();
    for k in 0..rows.len().saturating_sub(1) {
        let (a, b) = (&rows[k], &rows[k + 1]);
        if b.jumped || a.j != b.j {
            continue;
        }
        flow_samples += 1;
        let vdot = (b.v - a.v) / h;
        let bound = -log.k_beta * 0.5 * (a.psi_sq + b.psi_sq);
        if vdot > bound + 1e-6 * (1.0 + vdot.abs()) {
            violations.push(k);
        }
    }
    let near_jump = |k: usize| {
        let lo = k.saturating_sub(1);
        let hi = (k + 2).min(rows.len() - 1);
        (lo..=hi).any(|i| rows[i].jumped)
    };
    let off_jump = violations.iter().filter(|&&k| !near_jump(k)).count();

    let jump_worst_excess = log
        .jumps
        .iter()
        .map(|e| e.v_after - e.v_before + log.delta)
        .fold(f64::NEG_INFINITY, f64::max);
    let initial_v = rows[0].v;
    let jump_budget = (initial_v / log.delta).ceil() as usize;

    let (lambda_hat, fit_rms, fit_window) = exponential_fit(rows);

    let decoupling_residual = setup.map(|(sc, su)| {
        let stride = (rows.len() / 200).max(1);
        rows.iter()
            .step_by(stride)
            .map(|r| decoupling_residual(log.variant, sc, su, r))
            .fold(0.0, f64::max)
    });

    Diagnostics {
        flow_samples,
        flow_violations: violations.len(),
        flow_violations_off_jump: off_jump,
        flow_pass_fraction: if flow_samples == 0 {
            1.0
        } else {
            1.0 - violations.len() as f64 / flow_samples as f64
        },
        jump_count: log.jumps.len(),
        jump_worst_excess: if log.jumps.is_empty() { f64::NEG_INFINITY } else { jump_worst_excess },
        jump_budget,
        initial_v,
        lambda_hat,
        fit_rms,
        fit_window,
        decoupling_residual,
    }
}

/// Least-squares line through `log|x|` from the first time `|x|` falls below
/// half its initial value until the end (or the round-off floor).
fn exponential_fit(rows: &[LogRow]) -> (Option<f64>, Option<f64>, Option<(f64, f64)>) {
    let x = |r: &LogRow| (r.dist_gi.powi(2) + r.bias_err.powi(2)).sqrt();
    let x0 = x(&rows[0]);
    let Some(first) = rows.iter().position(|r| x(r) < 0.5 * x0) else {
        return (None, None, None);
    };
    let pts: Vec<(f64, f64)> = rows[first..]
        .iter()
        .filter(|r| !r.jumped)
        .take_while(|r| x(r) > FIT_FLOOR)
        .map(|r| (r.t, x(r).ln()))
        .collect();
    if pts.len() < 3 {
        return (None, None, None);
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt = pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let sty = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>();
    let slope = sty / stt;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - (my + slope * (p.0 - mt))).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let window = (pts[0].0, pts[pts.len() - 1].0);
    (Some(-slope), Some(rms), Some(window))
}

/// Largest change in the rotational rows of the flow at a logged state under
/// two fixed translational perturbations.
pub fn decoupling_residual(variant: Variant, sc: &Scenario, su: &Setup, row: &LogRow) -> f64 {
    let xi_y = sc.trajectory.profile.at(row.t) + row.b_a;
    let st = ObserverState::new(row.g_hat, row.b_hat);
    let shifts = [
        (Vec3::new([0.3, 0.0, -0.4]), Vec3::new([0.5, -0.3, 0.2]), Vec3::new([0.1, 0.0, -0.1])),
        (Vec3::new([-1.0, 0.2, 0.6]), Vec3::new([-1.0, 0.7, 1.5]), Vec3::new([-0.2, 0.3, 0.05])),
    ];
    shifts
        .iter()
        .map(|s| crate::audit::rotational_row_change(variant, &su.sm, &sc.gains, &row.g, &st, &xi_y, *s))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_pose, random_twist};

    #[test]
    fn constant_twist_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xi = random_twist(&mut rng, 1.0);
        let g0 = random_pose(&mut rng, 1.0);
        let traj = TrajectorySpec::new(g0, Profile::Constant(xi), 1.0, 1e-3).unwrap();
        let g1 = propagate_truth(&traj, 0.0, &g0);
        let exact = g0.compose(&exp_se3(&xi, 1e-3));
        assert!((g1.matrix() - exact.matrix()).max_abs() < 1e-10);
        let still = TrajectorySpec::new(g0, Profile::Constant(Vec6::zeros()), 1.0, 1e-3).unwrap();
        assert_eq!(propagate_truth(&still, 0.0, &g0).matrix(), g0.matrix());
    }

    #[test]
    fn circular_profile_values() {
        let p = Profile::Circular {
            omega_amp: 1.0,
            v_amp: 2.0,
            freq: 1.0,
        };
        assert_eq!(p.at(0.0), Vec6::new([0.0, 1.0, 0.0, 2.0, 0.0, 0.0]));
        let x = p.at(1.3);
        assert!((x[0] + 1.3f64.sin()).abs() < 1e-15);
        assert!((x[4] - 2.0 * 1.3f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn trajectory_validation() {
        let g = Pose::identity();
        assert!(TrajectorySpec::new(g, Profile::Constant(Vec6::zeros()), 1.0, 0.0).is_err());
        assert!(TrajectorySpec::new(g, Profile::Constant(Vec6::zeros()), 1e-4, 1e-3).is_err());
    }

    #[test]
    fn perfect_start_stays_at_truth() {
        let mut sc = Scenario::study();
        sc.trajectory.duration = 10.0;
        sc.g_hat0 = sc.trajectory.g0;
        sc.b_hat0 = sc.bias.base;
        let log = run(&sc, Variant::H).unwrap();
        assert!(log.jumps.is_empty());
        assert!(log.last().dist_gi < 1e-8);
        assert!(log.last().bias_err < 1e-8);
    }

    #[test]
    fn zero_gains_propagate_open_loop() {
        let sm = build_scene_matrices(&crate::measurement::study_scene()).unwrap();
        let gains = ObserverGains::new(0.0, 0.0, 0.0).unwrap();
        let xi_y = Vec6::new([0.1, 0.2, -0.3, 1.0, 0.0, 0.5]);
        let g = Pose::new(angle_axis(0.3, &Vec3::unit(2)).unwrap(), Vec3::unit(0));
        let inputs = HeldInputs {
            xi_y,
            b_meas: crate::measurement::measure_exact(&g, &sm.r),
        };
        let st = ObserverState::identity();
        let (out, jumps) = step_observer(
            &Observer::smooth(),
            &sm,
            &gains,
            &st,
            &inputs,
            0.01,
            &ProjectionParams::default(),
            10,
        )
        .unwrap();
        assert_eq!(jumps, 0);
        assert!((out.g_hat.matrix() - exp_se3(&xi_y, 0.01).matrix()).max_abs() < 1e-12);
        assert_eq!(out.b_hat, Vec6::zeros());
    }

    #[test]
    fn smooth_observer_never_jumps() {
        let mut sc = Scenario::study();
        sc.trajectory.duration = 2.0;
        let log = run(&sc, Variant::S).unwrap();
        assert!(log.jumps.is_empty());
        assert!(log.rows.iter().all(|r| r.j == 0 && !r.jumped));
    }

    #[test]
    fn runs_are_deterministic() {
        let mut sc = Scenario::study_noisy(4);
        sc.trajectory.duration = 1.0;
        let a = run(&sc, Variant::HD2).unwrap();
        let b = run(&sc, Variant::HD2).unwrap();
        assert_eq!(a.rows, b.rows);
    }
}
