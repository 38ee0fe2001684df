//! Trace potential on SE(3), its gradient images, the min-max gap constant
//! `Δ*` and the jump set built from it.

use std::f64::consts::PI;

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Mat4, Vec3, Vec6};
use crate::measurement::{eig_sym3, SceneMatrices};
use crate::se3::{adjoint_star, angle_axis, dist_identity, hat3, hom_wedge, psi_a, HomVec4, Pose};

/// Relative tolerance used to decide that a requested `delta` sits on the
/// feasibility bound rather than above it.
pub const BOUNDARY_RTOL: f64 = 1e-9;
/// Default fraction of the feasibility bound used when no `delta` is given.
pub const DEFAULT_DELTA_FRACTION: f64 = 0.9;

const CIRCLE_GRID: usize = 360;
const SPHERE_GRID: usize = 1024;

/// `½ tr((I − g) 𝔸 (I − g)ᵀ)`.
pub fn potential_value_true(sm: &SceneMatrices, g: &Pose) -> f64 {
    let e = Mat4::identity() - g.matrix();
    0.5 * (e * sm.bb_a * e.transpose()).trace()
}

/// Expanded form `tr(Q(I − R)) + (d/2)‖p − (I − R)b/d‖²`.
pub fn potential_value_expanded(sm: &SceneMatrices, g: &Pose) -> f64 {
    let i_r = Mat3::identity() - *g.rotation();
    let pe = g.p - i_r * sm.p_c;
    (sm.q * i_r).trace() + 0.5 * sm.d * pe.norm_squared()
}

/// `½ Σ kᵢ ‖rᵢ − ĝ bᵢ‖²`.
pub fn potential_value_measured(sm: &SceneMatrices, g_hat: &Pose, b_meas: &[HomVec4]) -> f64 {
    weighted_residual(sm, g_hat, b_meas)
}

fn weighted_residual(sm: &SceneMatrices, h: &Pose, b_meas: &[HomVec4]) -> f64 {
    debug_assert_eq!(b_meas.len(), sm.r.len());
    0.5 * sm
        .r
        .iter()
        .zip(b_meas)
        .zip(&sm.weights)
        .map(|((r, b), k)| k * r.distance_squared(&h.act(b)))
        .sum::<f64>()
}

/// Potential in the centred frame, `½ tr((I − g_c⁻¹ g g_c) diag(Q, d) (·)ᵀ)`.
pub fn potential_value_centred(sm: &SceneMatrices, g: &Pose) -> f64 {
    let gu = sm.g_c.inverse().compose(g).compose(&sm.g_c);
    let e = Mat4::identity() - gu.matrix();
    0.5 * (e * sm.bb_a_bar() * e.transpose()).trace()
}

/// `ψ(g̃⁻¹∇𝒰)` from measurements: `½ Σ kᵢ (ĝbᵢ) ∧ rᵢ`.
pub fn grad_psi_measured(sm: &SceneMatrices, g_hat: &Pose, b_meas: &[HomVec4]) -> Vec6 {
    let mut acc = Vec6::zeros();
    for ((r, b), k) in sm.r.iter().zip(b_meas).zip(&sm.weights) {
        acc += hom_wedge(&g_hat.act(b), r) * *k;
    }
    acc * 0.5
}

/// `Ad*_ĝ ψ(g̃⁻¹∇𝒰)` from measurements: `½ Σ kᵢ bᵢ ∧ (ĝ⁻¹rᵢ)`.
pub fn grad_psi_adjoint_measured(sm: &SceneMatrices, g_hat: &Pose, b_meas: &[HomVec4]) -> Vec6 {
    let gi = g_hat.inverse();
    let mut acc = Vec6::zeros();
    for ((r, b), k) in sm.r.iter().zip(b_meas).zip(&sm.weights) {
        acc += hom_wedge(b, &gi.act(r)) * *k;
    }
    acc * 0.5
}

/// Centred-frame gradient image `½ Σ kᵢ (g_c⁻¹ĝbᵢ) ∧ (g_c⁻¹rᵢ)`.
pub fn grad_psi_centred_measured(sm: &SceneMatrices, g_hat: &Pose, b_meas: &[HomVec4]) -> Vec6 {
    let gci = sm.g_c.inverse();
    let mut acc = Vec6::zeros();
    for ((rb, b), k) in sm.r_bar.iter().zip(b_meas).zip(&sm.weights) {
        acc += hom_wedge(&gci.act(&g_hat.act(b)), rb) * *k;
    }
    acc * 0.5
}

/// Closed form `½ [2ψ_a(QR) + b×Rᵀp_e ; d Rᵀp_e]` with `p_e = p − (I − R)b/d`.
pub fn grad_psi_closed(sm: &SceneMatrices, g: &Pose) -> Vec6 {
    let r = *g.rotation();
    let pe = g.p - (Mat3::identity() - r) * sm.p_c;
    let rt_pe = r.transpose() * pe;
    let w = psi_a(&(sm.q * r)) * 2.0 + hat3(&sm.b) * rt_pe;
    Vec6::from_parts(w * 0.5, rt_pe * (0.5 * sm.d))
}

/// Identity followed by one undesired critical point per eigenvector of `Q`.
pub fn critical_set(sm: &SceneMatrices) -> Vec<Pose> {
    let mut out = vec![Pose::identity()];
    for (_, v) in &sm.eig_q {
        let r = angle_axis(PI, v).expect("eigenvectors are unit");
        out.push(reset_pose(sm, r));
    }
    out
}

/// `𝒯(R, (I − R)b/d)`.
pub fn reset_pose(sm: &SceneMatrices, r: crate::se3::Rotation) -> Pose {
    let p = (Mat3::identity() - *r.matrix()) * sm.p_c;
    Pose::new(r, p)
}

fn check_unit(x: &Vec3, name: &str) -> Result<()> {
    if (x.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("{name} must be a unit vector, norm {}", x.norm())));
    }
    Ok(())
}

/// `uᵀ((tr Q − 2vᵀQv) I − Q + 2Qvvᵀ) u`.
pub fn delta_q(q: &Mat3, u: &Vec3, v: &Vec3) -> Result<f64> {
    check_unit(u, "u")?;
    check_unit(v, "v")?;
    Ok(delta_q_raw(q, u, v))
}

fn delta_q_raw(q: &Mat3, u: &Vec3, v: &Vec3) -> f64 {
    let qv = *q * *v;
    let m = Mat3::identity() * (q.trace() - 2.0 * v.dot(&qv)) - *q + qv.outer(v) * 2.0;
    u.dot(&(m * *u))
}

/// Form valid when `v` is an eigenvector of `Q` with eigenvalue `lambda`:
/// `tr Q − uᵀQu − 2λ(1 − (uᵀv)²)`.
pub fn delta_q_eigen(q: &Mat3, u: &Vec3, v: &Vec3, lambda: f64) -> f64 {
    q.trace() - u.dot(&(*q * *u)) - 2.0 * lambda * (1.0 - u.dot(v).powi(2))
}

fn max_over(q: &Mat3, u_set: &[Vec3], v: &Vec3) -> f64 {
    u_set
        .iter()
        .map(|u| delta_q_raw(q, u, v))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Multiplicity pattern of the spectrum of a symmetric 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Spectrum {
    Distinct,
    /// `double` has multiplicity two, `single` multiplicity one.
    Double { double: f64, single: f64 },
    Triple(f64),
}

pub fn classify_spectrum(eig: &[(f64, Vec3); 3]) -> Spectrum {
    let (l0, l1, l2) = (eig[0].0, eig[1].0, eig[2].0);
    match (l0 == l1, l1 == l2) {
        (true, true) => Spectrum::Triple(l0),
        (true, false) => Spectrum::Double {
            double: l0,
            single: l2,
        },
        (false, true) => Spectrum::Double {
            double: l1,
            single: l0,
        },
        (false, false) => Spectrum::Distinct,
    }
}

/// Right-hand sides of the case-wise lower bound on `Δ*` when `𝕌 ⊇ 𝔼(Q)`.
pub fn delta_star_lower_bound(spectrum: Spectrum, q: &Mat3) -> f64 {
    let eig = eig_sym3(q).expect("symmetric");
    match spectrum {
        Spectrum::Triple(l) => 2.0 * l / 3.0,
        Spectrum::Double { double, single } => (2.0 * double).min(single),
        Spectrum::Distinct => q.trace() - eig[2].0,
    }
}

/// `Δ*_Q = min_{v ∈ ℰ(Q)} max_{u ∈ 𝕌} Δ_Q(u, v)`.
///
/// With three distinct eigenvalues the eigen-directions are enumerated.
/// With a repeated eigenvalue the eigenspace contains a circle or a sphere;
/// if `u_set` is an orthonormal eigenbasis the attained minimum is returned in
/// closed form, otherwise the continuum is sampled on a fixed grid.
pub fn delta_star(q: &Mat3, u_set: &[Vec3]) -> Result<f64> {
    if u_set.is_empty() {
        return Err(Error::InvalidInput("delta_star: empty direction set".into()));
    }
    for u in u_set {
        check_unit(u, "direction in U")?;
    }
    let eig = eig_sym3(q)?;
    if eig[0].0 < -1e-12 * q.frobenius_norm().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "delta_star: Q is indefinite (λ_min = {})",
            eig[0].0
        )));
    }
    let spectrum = classify_spectrum(&eig);
    if spectrum == Spectrum::Distinct {
        return Ok(eig
            .iter()
            .map(|(_, v)| max_over(q, u_set, v))
            .fold(f64::INFINITY, f64::min));
    }
    if is_orthonormal_eigenbasis(q, u_set) {
        return Ok(delta_star_lower_bound(spectrum, q));
    }
    Ok(delta_star_grid(q, u_set))
}

/// Grid evaluation of `Δ*` over every eigen-direction of `Q`, including the
/// continuum of a repeated eigenvalue.
pub fn delta_star_grid(q: &Mat3, u_set: &[Vec3]) -> f64 {
    let eig = eig_sym3(q).expect("symmetric");
    let mut best = f64::INFINITY;
    for (_, v) in &eig {
        best = best.min(max_over(q, u_set, v));
    }
    match classify_spectrum(&eig) {
        Spectrum::Distinct => {}
        Spectrum::Triple(_) => {
            for v in fibonacci_sphere(SPHERE_GRID) {
                best = best.min(max_over(q, u_set, &v));
            }
        }
        Spectrum::Double { double, .. } => {
            let plane: Vec<Vec3> = eig.iter().filter(|e| e.0 == double).map(|e| e.1).collect();
            for k in 0..CIRCLE_GRID {
                let a = PI * k as f64 / CIRCLE_GRID as f64;
                let v = plane[0] * a.cos() + plane[1] * a.sin();
                best = best.min(max_over(q, u_set, &v));
            }
        }
    }
    best
}

fn is_orthonormal_eigenbasis(q: &Mat3, u_set: &[Vec3]) -> bool {
    if u_set.len() != 3 {
        return false;
    }
    let scale = q.frobenius_norm().max(1.0);
    let u = Mat3::from_columns(&u_set[0], &u_set[1], &u_set[2]);
    let orthonormal = (u.transpose() * u - Mat3::identity()).max_abs() < 1e-12;
    let diagonal = u.transpose() * *q * u;
    let off = (0..3)
        .flat_map(|i| (0..3).filter(move |j| *j != i).map(move |j| (i, j)))
        .fold(0.0_f64, |m, (i, j)| m.max(diagonal[(i, j)].abs()));
    orthonormal && off < 1e-12 * scale
}

/// `n` nearly uniform points on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new([r * phi.cos(), r * phi.sin(), z])
        })
        .collect()
}

/// How the direction set `𝕌` of the jump set is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum UChoice {
    Eigenbasis,
    Canonical,
    Custom(Vec<Vec3>),
}

/// Reset poses `g_q` together with the jump threshold.
#[derive(Clone, Debug)]
pub struct JumpSetDef {
    pub theta_star: f64,
    pub u_set: Vec<Vec3>,
    pub q_list: Vec<Pose>,
    pub delta: f64,
    pub delta_star: f64,
    /// `(1 − cos θ*) Δ*`, the supremum of admissible `delta`.
    pub bound: f64,
    /// Set when the requested `delta` equals `bound` to within [`BOUNDARY_RTOL`].
    pub boundary_warning: bool,
}

pub fn build_jump_set(
    sm: &SceneMatrices,
    theta_star: f64,
    choice: &UChoice,
    delta: Option<f64>,
) -> Result<JumpSetDef> {
    if !(theta_star > 0.0 && theta_star <= PI) {
        return Err(Error::InvalidInput(format!("theta_star must lie in (0, π], got {theta_star}")));
    }
    let lambda_max = sm.eig_q[2].0;
    let u_set = match choice {
        UChoice::Eigenbasis => sm.eig_q.iter().map(|e| e.1).collect(),
        UChoice::Canonical => {
            if sm.q.trace() - 2.0 * lambda_max <= 0.0 {
                return Err(Error::PreconditionFailed(format!(
                    "canonical directions need tr(Q) − 2λ_max > 0, got {}",
                    sm.q.trace() - 2.0 * lambda_max
                )));
            }
            vec![Vec3::unit(0), Vec3::unit(1), Vec3::unit(2)]
        }
        UChoice::Custom(list) => {
            for u in list {
                check_unit(u, "direction in U")?;
            }
            list.clone()
        }
    };
    let ds = delta_star(&sm.q, &u_set)?;
    if ds <= 0.0 {
        return Err(Error::GapInfeasible(format!("Δ* = {ds:e} is not positive")));
    }
    let bound = (1.0 - theta_star.cos()) * ds;
    let mut boundary_warning = false;
    let delta = match delta {
        None => DEFAULT_DELTA_FRACTION * bound,
        Some(x) if x.is_nan() || x <= 0.0 => {
            return Err(Error::GapInfeasible(format!("delta must be positive, got {x}")));
        }
        Some(x) if (x - bound).abs() <= BOUNDARY_RTOL * bound => {
            warn!("delta = {x} sits on the feasibility bound {bound}; jumps may not clear the jump set");
            boundary_warning = true;
            x
        }
        Some(x) if x > bound => {
            return Err(Error::GapInfeasible(format!(
                "delta = {x} exceeds (1 − cos θ*)Δ* = {bound}"
            )));
        }
        Some(x) => x,
    };
    let q_list = u_set
        .iter()
        .map(|u| reset_pose(sm, angle_axis(theta_star, u).expect("unit checked")))
        .collect();
    Ok(JumpSetDef {
        theta_star,
        u_set,
        q_list,
        delta,
        delta_star: ds,
        bound,
        boundary_warning,
    })
}

/// Result of evaluating the jump-set gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gap {
    /// `𝒰(g̃) − min_q 𝒰(g̃ g_q)`.
    pub value: f64,
    /// Lowest index attaining the minimum.
    pub argmin: usize,
    pub u_now: f64,
    pub u_min: f64,
}

/// Gap computed from measurements: `𝒰₁(ĝ) − min_q ½ Σ kᵢ ‖rᵢ − g_q⁻¹ĝbᵢ‖²`.
pub fn gap_measured(sm: &SceneMatrices, js: &JumpSetDef, g_hat: &Pose, b_meas: &[HomVec4]) -> Gap {
    let u_now = weighted_residual(sm, g_hat, b_meas);
    let (argmin, u_min) = argmin_first(
        js.q_list
            .iter()
            .map(|gq| weighted_residual(sm, &gq.inverse().compose(g_hat), b_meas)),
    );
    Gap {
        value: u_now - u_min,
        argmin,
        u_now,
        u_min,
    }
}

/// Gap from the true error `g̃`: `𝒰(g̃) − min_q 𝒰(g̃ g_q)`.
pub fn gap_true(sm: &SceneMatrices, js: &JumpSetDef, g_tilde: &Pose) -> Gap {
    let u_now = potential_value_true(sm, g_tilde);
    let (argmin, u_min) =
        argmin_first(js.q_list.iter().map(|gq| potential_value_true(sm, &g_tilde.compose(gq))));
    Gap {
        value: u_now - u_min,
        argmin,
        u_now,
        u_min,
    }
}

fn argmin_first(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// Sandwich constants `α₁|g|²_I ≤ 𝒰(g) ≤ α₂|g|²_I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaBounds {
    pub alpha1: f64,
    pub alpha2: f64,
    pub s1: f64,
    pub s2: f64,
}

/// `α₁ = min{½λ_min(Q̄), ½d} s₁`, `α₂ = max{½λ_max(Q̄), ½d} s₂`, with `s₁`, `s₂`
/// the extreme eigenvalues of `[[1, −ϱc], [−ϱc, 1 + ϱ²]]` (clamped by 1) over
/// `ϱ ∈ [0, ‖b/d‖]`, `c = cos φ`, `φ ∈ [0, π]`, sampled on a 1e-3 grid.
pub fn alpha_bounds(sm: &SceneMatrices) -> AlphaBounds {
    let rho_max = sm.p_c.norm();
    let n_rho = 1000;
    let n_phi = (PI / 1e-3).ceil() as usize;
    let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
    if rho_max > 0.0 {
        for i in 0..=n_rho {
            let rho = rho_max * i as f64 / n_rho as f64;
            for k in 0..=n_phi {
                let c = (PI * k as f64 / n_phi as f64).cos();
                let tr = 2.0 + rho * rho;
                let det = 1.0 + rho * rho - rho * rho * c * c;
                let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
                lo = lo.min(0.5 * tr - disc);
                hi = hi.max(0.5 * tr + disc);
            }
        }
    }
    let qb = eig_sym3(&sm.q_bar).expect("Q̄ symmetric");
    AlphaBounds {
        alpha1: (0.5 * qb[0].0).min(0.5 * sm.d) * lo,
        alpha2: (0.5 * qb[2].0).max(0.5 * sm.d) * hi,
        s1: lo,
        s2: hi,
    }
}

/// Empirical gradient constants over sampled flow-set points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaEmpirical {
    /// `min ‖ψ‖² / |g|²_I`.
    pub alpha3: f64,
    /// `max max(‖ψ‖², ‖Ad*_{g⁻¹}ψ‖²) / |g|²_I`.
    pub alpha4: f64,
    pub samples: usize,
}

/// Samples `g` with `‖p‖ ≤ p_max`, keeps those in the flow set
/// `𝒰(g) − min_q 𝒰(g g_q) ≤ δ`, and reports the extreme ratios.
pub fn alpha_empirical<R: Rng + ?Sized>(
    sm: &SceneMatrices,
    js: &JumpSetDef,
    trials: usize,
    p_max: f64,
    rng: &mut R,
) -> AlphaEmpirical {
    let mut out = AlphaEmpirical {
        alpha3: f64::INFINITY,
        alpha4: 0.0,
        samples: 0,
    };
    for _ in 0..trials {
        let g = crate::sampling::random_pose(rng, p_max);
        if gap_true(sm, js, &g).value > js.delta {
            continue;
        }
        let n2 = dist_identity(&g).powi(2);
        if n2 < 1e-12 {
            continue;
        }
        let psi = grad_psi_closed(sm, &g);
        let ad = adjoint_star(&g.inverse()) * psi;
        out.alpha3 = out.alpha3.min(psi.norm_squared() / n2);
        out.alpha4 = out.alpha4.max(psi.norm_squared().max(ad.norm_squared()) / n2);
        out.samples += 1;
    }
    out
}
