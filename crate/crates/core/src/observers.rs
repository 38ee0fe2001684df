//! Pose and velocity-bias observers: the smooth law `S`, the hybrid law `H`,
//! and the centred variants `HD1` and `HD2`.
//!
//! Every variant shares the flow
//!
//! ```text
//! ĝ' = ĝ (ξ_y − b̂ + k_β β)^∧,    b̂' = −Γ σ_b
//! ```
//!
//! and differs only in how `β` and `σ_b` are assembled from the measurements.
//! The hybrid variants reset `ĝ⁺ = g_q⁻¹ ĝ` whenever the potential can be
//! lowered by at least `δ` by one of the reset poses.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Mat6, Matrix, Vec6, Vector};
use crate::measurement::SceneMatrices;
use crate::potential::{
    gap_measured, grad_psi_adjoint_measured, grad_psi_centred_measured, grad_psi_measured, Gap,
    JumpSetDef,
};
use crate::se3::{adjoint, HomVec4, Pose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    S,
    H,
    HD1,
    HD2,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::S, Variant::H, Variant::HD1, Variant::HD2];

    pub fn is_hybrid(self) -> bool {
        self != Variant::S
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::S => "S",
            Variant::H => "H",
            Variant::HD1 => "HD1",
            Variant::HD2 => "HD2",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S" => Ok(Variant::S),
            "H" => Ok(Variant::H),
            "HD1" => Ok(Variant::HD1),
            "HD2" => Ok(Variant::HD2),
            other => Err(Error::InvalidInput(format!("unknown observer '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverGains {
    pub k_beta: f64,
    pub k_omega: f64,
    pub k_v: f64,
}

impl ObserverGains {
    /// Gains must be finite and non-negative; zero gains give open-loop propagation.
    pub fn new(k_beta: f64, k_omega: f64, k_v: f64) -> Result<Self> {
        for (name, k) in [("k_beta", k_beta), ("k_omega", k_omega), ("k_v", k_v)] {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be non-negative, got {k}")));
            }
        }
        Ok(ObserverGains { k_beta, k_omega, k_v })
    }

    pub fn unit() -> Self {
        ObserverGains {
            k_beta: 1.0,
            k_omega: 1.0,
            k_v: 1.0,
        }
    }

    /// `Γ = diag(k_ω I₃, k_v I₃)`.
    pub fn gamma(&self) -> Mat6 {
        Mat6::from_diagonal(&self.gamma_diag())
    }

    pub fn gamma_diag(&self) -> Vec6 {
        let (w, v) = (self.k_omega, self.k_v);
        Vec6::new([w, w, w, v, v, v])
    }
}

impl Default for ObserverGains {
    fn default() -> Self {
        ObserverGains::unit()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverState {
    pub g_hat: Pose,
    pub b_hat: Vec6,
}

impl ObserverState {
    pub fn new(g_hat: Pose, b_hat: Vec6) -> Self {
        ObserverState { g_hat, b_hat }
    }

    pub fn identity() -> Self {
        ObserverState {
            g_hat: Pose::identity(),
            b_hat: Vec6::zeros(),
        }
    }
}

/// A variant together with its jump set (absent for `S`).
#[derive(Clone, Debug)]
pub struct Observer {
    pub variant: Variant,
    pub jump_set: Option<JumpSetDef>,
}

impl Observer {
    pub fn new(variant: Variant, jump_set: Option<JumpSetDef>) -> Result<Self> {
        match (variant.is_hybrid(), jump_set.is_some()) {
            (true, false) => Err(Error::InvalidInput(format!("{variant} needs a jump set"))),
            (false, true) => Err(Error::InvalidInput("S has no jump set".into())),
            _ => Ok(Observer { variant, jump_set }),
        }
    }

    pub fn smooth() -> Self {
        Observer {
            variant: Variant::S,
            jump_set: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionParams {
    pub delta: f64,
    pub epsilon: f64,
    pub enabled: bool,
    /// Project the angular and linear halves of `b̂` separately, each against `delta`.
    pub per_block: bool,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        ProjectionParams {
            delta: 1.0,
            epsilon: 0.1,
            enabled: false,
            per_block: false,
        }
    }
}

impl ProjectionParams {
    pub fn new(delta: f64, epsilon: f64, enabled: bool, per_block: bool) -> Result<Self> {
        if !(delta > 0.0 && epsilon > 0.0 && delta.is_finite() && epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "projection needs positive delta and epsilon, got {delta} and {epsilon}"
            )));
        }
        Ok(ProjectionParams {
            delta,
            epsilon,
            enabled,
            per_block,
        })
    }
}

/// `(β, σ_b)` for the given variant, computed from measurements only.
pub fn correction_terms(
    variant: Variant,
    sm: &SceneMatrices,
    state: &ObserverState,
    b_meas: &[HomVec4],
) -> (Vec6, Vec6) {
    let g_hat = &state.g_hat;
    match variant {
        Variant::S | Variant::H => {
            let psi1 = grad_psi_measured(sm, g_hat, b_meas);
            let beta = adjoint(&g_hat.inverse()) * psi1;
            (beta, grad_psi_adjoint_measured(sm, g_hat, b_meas))
        }
        Variant::HD1 => {
            let psi2 = grad_psi_centred_measured(sm, g_hat, b_meas);
            let beta = adjoint(&g_hat.inverse().compose(&sm.g_c)) * psi2;
            (beta, grad_psi_adjoint_measured(sm, g_hat, b_meas))
        }
        Variant::HD2 => {
            let psi2 = grad_psi_centred_measured(sm, g_hat, b_meas);
            let beta = adjoint(&g_hat.inverse().compose(&sm.g_c)) * psi2;
            let rt = g_hat.rotation().transpose();
            let sigma = Vec6::from_parts(rt * psi2.angular(), rt * psi2.linear());
            (beta, sigma)
        }
    }
}

/// Gradient image whose squared norm bounds the flow decrease of the variant:
/// `ψ₁` for `S`/`H`, the centred `ψ₂` for `HD1`/`HD2`.
pub fn dissipation_psi(
    variant: Variant,
    sm: &SceneMatrices,
    g_hat: &Pose,
    b_meas: &[HomVec4],
) -> Vec6 {
    match variant {
        Variant::S | Variant::H => grad_psi_measured(sm, g_hat, b_meas),
        Variant::HD1 | Variant::HD2 => grad_psi_centred_measured(sm, g_hat, b_meas),
    }
}

/// Body-frame estimate twist `ξ_y − b̂ + k_β β` and the bias rate.
///
/// With projection enabled the bias rate is `proj_Δ(b̂, −Γσ_b)`.
pub fn flow(
    variant: Variant,
    sm: &SceneMatrices,
    gains: &ObserverGains,
    state: &ObserverState,
    xi_y: &Vec6,
    b_meas: &[HomVec4],
    proj: &ProjectionParams,
) -> (Vec6, Vec6) {
    let (beta, sigma) = correction_terms(variant, sm, state, b_meas);
    let xi_hat = *xi_y - state.b_hat + beta * gains.k_beta;
    let gd = gains.gamma_diag();
    let mut raw = Vec6::zeros();
    for i in 0..6 {
        raw[i] = -gd[i] * sigma[i];
    }
    let db = if proj.enabled {
        proj_delta(&state.b_hat, &raw, &gains.gamma(), proj)
    } else {
        raw
    };
    (xi_hat, db)
}

/// Evaluates the jump-set gap; `None` for the smooth observer.
pub fn jump_condition(
    observer: &Observer,
    sm: &SceneMatrices,
    state: &ObserverState,
    b_meas: &[HomVec4],
) -> Option<(bool, Gap)> {
    let js = observer.jump_set.as_ref()?;
    let gap = gap_measured(sm, js, &state.g_hat, b_meas);
    Some((gap.value >= js.delta, gap))
}

/// `ĝ⁺ = g_q⁻¹ ĝ` for the lowest-index minimizing `g_q`; `b̂` is kept.
pub fn jump_map(
    observer: &Observer,
    sm: &SceneMatrices,
    state: &ObserverState,
    b_meas: &[HomVec4],
) -> Result<ObserverState> {
    let js = observer
        .jump_set
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("jump requested for an observer without jump set".into()))?;
    let gap = gap_measured(sm, js, &state.g_hat, b_meas);
    Ok(ObserverState {
        g_hat: js.q_list[gap.argmin].inverse().compose(&state.g_hat),
        b_hat: state.b_hat,
    })
}

/// Bias-update projection keeping `‖b̂‖` within `Δ + ε`.
///
/// `gamma_sigma` is the unprojected update. It passes through unchanged
/// inside the ball of radius `Δ` or when it points inward; otherwise its
/// component along `∇𝒫 = b̂/‖b̂‖` is scaled down by `ϱ = min{1, 𝒫/ε}` in the
/// `Γ` metric.
pub fn proj_delta(
    b_hat: &Vec6,
    gamma_sigma: &Vec6,
    gamma: &Mat6,
    params: &ProjectionParams,
) -> Vec6 {
    if params.per_block {
        let mut g_w = Mat3::zeros();
        let mut g_v = Mat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                g_w[(i, j)] = gamma[(i, j)];
                g_v[(i, j)] = gamma[(i + 3, j + 3)];
            }
        }
        let w = proj_block(&b_hat.angular(), &gamma_sigma.angular(), &g_w, params);
        let v = proj_block(&b_hat.linear(), &gamma_sigma.linear(), &g_v, params);
        Vec6::from_parts(w, v)
    } else {
        proj_block(b_hat, gamma_sigma, gamma, params)
    }
}

fn proj_block<const N: usize>(
    b_hat: &Vector<N>,
    gamma_sigma: &Vector<N>,
    gamma: &Matrix<N, N>,
    params: &ProjectionParams,
) -> Vector<N> {
    let nb = b_hat.norm();
    let p = nb - params.delta;
    if p <= 0.0 {
        return *gamma_sigma;
    }
    let n = *b_hat * (1.0 / nb);
    let radial = n.dot(gamma_sigma);
    if radial <= 0.0 {
        return *gamma_sigma;
    }
    let rho = (p / params.epsilon).min(1.0);
    let gn = *gamma * n;
    *gamma_sigma - gn * (rho * radial / n.dot(&gn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{build_scene_matrices, measure_exact, study_scene, Scene};
    use crate::potential::{build_jump_set, UChoice};
    use crate::sampling::{random_pose, random_scene, random_twist};
    use crate::linalg::Vec3;
    use crate::se3::adjoint_star;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn truth_and_meas(sm: &SceneMatrices, rng: &mut ChaCha8Rng) -> (Pose, Vec<HomVec4>) {
        let g = random_pose(rng, 3.0);
        let b = measure_exact(&g, &sm.r);
        (g, b)
    }

    #[test]
    fn perfect_estimate_has_zero_corrections() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sm = build_scene_matrices(&random_scene(&mut rng)).unwrap();
        let (g, b) = truth_and_meas(&sm, &mut rng);
        let st = ObserverState::new(g, Vec6::zeros());
        for v in Variant::ALL {
            let (beta, sigma) = correction_terms(v, &sm, &st, &b);
            assert!(beta.max_abs() < 1e-12, "{v}");
            assert!(sigma.max_abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn centred_scene_makes_h_and_hd1_agree() {
        let scene = Scene::unit_weights(
            vec![Vec3::new([1.0, 0.0, 0.0]), Vec3::new([-1.0, 0.0, 0.0])],
            vec![Vec3::unit(2)],
        )
        .unwrap();
        let sm = build_scene_matrices(&scene).unwrap();
        assert_eq!(sm.b, Vec3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, b) = truth_and_meas(&sm, &mut rng);
        let st = ObserverState::new(random_pose(&mut rng, 2.0), Vec6::zeros());
        let (bh, _) = correction_terms(Variant::H, &sm, &st, &b);
        let (bd, _) = correction_terms(Variant::HD1, &sm, &st, &b);
        assert!((bh - bd).max_abs() < 1e-12);
    }

    #[test]
    fn cross_identities_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let sm = build_scene_matrices(&random_scene(&mut rng)).unwrap();
            let (_, b) = truth_and_meas(&sm, &mut rng);
            let st = ObserverState::new(random_pose(&mut rng, 3.0), random_twist(&mut rng, 0.5));
            let (b1, _) = correction_terms(Variant::HD1, &sm, &st, &b);
            let (b2, s2) = correction_terms(Variant::HD2, &sm, &st, &b);
            assert!((b1 - b2).max_abs() < 1e-12);
            let psi1 = grad_psi_measured(&sm, &st.g_hat, &b);
            let chain = adjoint(&st.g_hat.inverse().compose(&sm.g_c)) * (adjoint_star(&sm.g_c) * psi1);
            assert!((b1 - chain).max_abs() < 1e-10);
            let rt = st.g_hat.rotation().transpose();
            let a = adjoint_star(&sm.g_c) * psi1;
            let s_alt = Vec6::from_parts(rt * a.angular(), rt * a.linear());
            assert!((s2 - s_alt).max_abs() < 1e-10);
        }
    }

    #[test]
    fn flow_cases() {
        let sm = build_scene_matrices(&study_scene()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (g, b) = truth_and_meas(&sm, &mut rng);
        let xi = random_twist(&mut rng, 1.0);
        let ba = random_twist(&mut rng, 0.2);
        let st = ObserverState::new(g, ba);
        let proj = ProjectionParams::default();
        for v in Variant::ALL {
            let (xh, db) = flow(v, &sm, &ObserverGains::unit(), &st, &(xi + ba), &b, &proj);
            assert!((xh - xi).max_abs() < 1e-12);
            assert!(db.max_abs() < 1e-12);
        }
        let st = ObserverState::new(random_pose(&mut rng, 2.0), ba);
        let zero = ObserverGains::new(0.0, 1.0, 1.0).unwrap();
        let (xh, _) = flow(Variant::H, &sm, &zero, &st, &xi, &b, &proj);
        assert_eq!(xh, xi - ba);
        let (_, db) = flow(Variant::H, &sm, &ObserverGains::unit(), &st, &xi, &b, &proj);
        let (_, sigma) = correction_terms(Variant::H, &sm, &st, &b);
        assert_eq!(db, -sigma);
    }

    #[test]
    fn jumps_on_study_scene() {
        let sm = build_scene_matrices(&study_scene()).unwrap();
        let js = build_jump_set(&sm, 2.0 * PI / 3.0, &UChoice::Eigenbasis, None).unwrap();
        let obs = Observer::new(Variant::H, Some(js)).unwrap();
        let b = measure_exact(&Pose::identity(), &sm.r);
        let (fire, gap) = jump_condition(&obs, &sm, &ObserverState::identity(), &b).unwrap();
        assert!(!fire && gap.value <= 0.0);

        let truth = crate::potential::critical_set(&sm)[1];
        let b = measure_exact(&truth, &sm.r);
        let st = ObserverState::new(Pose::identity(), Vec6::new([0.1; 6]));
        let (fire, gap) = jump_condition(&obs, &sm, &st, &b).unwrap();
        assert!(fire);
        let after = jump_map(&obs, &sm, &st, &b).unwrap();
        assert_eq!(after.b_hat, st.b_hat);
        let (fire2, gap2) = jump_condition(&obs, &sm, &after, &b).unwrap();
        assert!(!fire2);
        assert!(gap2.u_now <= gap.u_now - obs.jump_set.as_ref().unwrap().delta + 1e-9);
        // ties resolve to the same reset every time
        let again = jump_map(&obs, &sm, &st, &b).unwrap();
        assert_eq!(again, after);
        assert!(jump_condition(&Observer::smooth(), &sm, &st, &b).is_none());
        assert!(Observer::new(Variant::H, None).is_err());
    }

    #[test]
    fn projection_branches() {
        let gamma = Mat6::identity();
        let p = ProjectionParams::new(1.0, 0.1, true, false).unwrap();
        let inside = Vec6::new([0.1, 0.0, 0.0, 0.0, 0.2, 0.0]);
        let s = Vec6::new([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(proj_delta(&inside, &s, &gamma, &p), s);
        let outside = Vec6::unit(0) * 1.05;
        let inward = -Vec6::unit(0) + Vec6::unit(3);
        assert_eq!(proj_delta(&outside, &inward, &gamma, &p), inward);
        let edge = Vec6::unit(0) * 1.1;
        let out = proj_delta(&edge, &(Vec6::unit(0) * 2.0 + Vec6::unit(4)), &gamma, &p);
        assert!(out[0].abs() < 1e-15);
        assert_eq!(out[4], 1.0);
    }
}
