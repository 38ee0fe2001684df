use proptest::prelude::*;

use se3obs_core::linalg::{Mat6, Vec3, Vec6};
use se3obs_core::measurement::{build_scene_matrices, measure_exact, study_scene};
use se3obs_core::observers::{proj_delta, ProjectionParams};
use se3obs_core::potential::{
    build_jump_set, gap_true, potential_value_centred, potential_value_expanded, potential_value_measured,
    potential_value_true, UChoice,
};
use se3obs_core::se3::{
    adjoint, adjoint_star, angle_axis, exp_se3, hat3, hom_wedge, psi, vee3, vee6, wedge6, HomVec4,
};
use se3obs_core::{Pose, Rotation};

fn pose_strategy() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        0.0f64..std::f64::consts::PI,
        prop::array::uniform3(-5.0f64..5.0),
    )
        .prop_filter_map("degenerate axis", |(axis, theta, p)| {
            let a = Vec3::new(axis);
            if a.norm() < 1e-3 {
                return None;
            }
            let r = angle_axis(theta, &a.normalized()).ok()?;
            Some(Pose::new(r, Vec3::new(p)))
        })
}

fn twist_strategy() -> impl Strategy<Value = Vec6> {
    prop::array::uniform6(-3.0f64..3.0).prop_map(Vec6::new)
}

fn hom_strategy() -> impl Strategy<Value = HomVec4> {
    (prop::array::uniform3(-3.0f64..3.0), any::<bool>()).prop_map(|(v, point)| {
        if point {
            HomVec4::point(Vec3::new(v))
        } else {
            HomVec4::direction(Vec3::new(v))
        }
    })
}

proptest! {
    #[test]
    fn hat_vee_round_trips(w in prop::array::uniform3(-10.0f64..10.0), xi in twist_strategy()) {
        let w = Vec3::new(w);
        prop_assert_eq!(vee3(&hat3(&w)).unwrap(), w);
        prop_assert_eq!(vee6(&wedge6(&xi)).unwrap(), xi);
    }

    #[test]
    fn adjoint_is_a_homomorphism(a in pose_strategy(), b in pose_strategy()) {
        let lhs = adjoint(&a) * adjoint(&b);
        let rhs = adjoint(&a.compose(&b));
        prop_assert!((lhs - rhs).max_abs() < 1e-10);
        let inv = adjoint(&a) * adjoint(&a.inverse());
        prop_assert!((inv - Mat6::identity()).max_abs() < 1e-10);
    }

    #[test]
    fn psi_intertwines_congruence(g in pose_strategy(), xi in twist_strategy()) {
        let x = wedge6(&xi);
        let lhs = psi(&(g.matrix().transpose() * x * g.inverse().matrix().transpose()));
        prop_assert!((lhs - adjoint_star(&g) * psi(&x)).max_abs() < 1e-9);
    }

    #[test]
    fn wedge_is_antisymmetric_and_equivariant(b in hom_strategy(), r in hom_strategy(), g in pose_strategy()) {
        prop_assert_eq!(hom_wedge(&b, &r), -hom_wedge(&r, &b));
        prop_assert_eq!(hom_wedge(&r, &r), Vec6::zeros());
        let lhs = hom_wedge(&g.act(&b), &g.act(&r));
        let rhs = adjoint_star(&g.inverse()) * hom_wedge(&b, &r);
        prop_assert!((lhs - rhs).max_abs() < 1e-9);
    }

    #[test]
    fn exp_stays_on_the_group(xi in twist_strategy(), h in 0.0f64..2.0) {
        let g = exp_se3(&xi, h);
        prop_assert!(g.r.orthonormality_residual() < 1e-12);
        let back = exp_se3(&(-xi), h).compose(&g);
        prop_assert!(back.dist_identity() < 1e-10);
    }

    #[test]
    fn potential_formulas_agree(g in pose_strategy(), g_hat in pose_strategy()) {
        let sm = build_scene_matrices(&study_scene()).unwrap();
        let gt = g.compose(&g_hat.inverse());
        let u = potential_value_true(&sm, &gt);
        prop_assert!(u >= -1e-12);
        prop_assert!((u - potential_value_expanded(&sm, &gt)).abs() < 1e-9 * (1.0 + u));
        prop_assert!((u - potential_value_centred(&sm, &gt)).abs() < 1e-9 * (1.0 + u));
        let meas = measure_exact(&g, &sm.r);
        prop_assert!((u - potential_value_measured(&sm, &g_hat, &meas)).abs() < 1e-9 * (1.0 + u));
    }

    #[test]
    fn reset_lowers_the_potential_by_the_gap(g in pose_strategy()) {
        let sm = build_scene_matrices(&study_scene()).unwrap();
        let js = build_jump_set(&sm, 2.0 * std::f64::consts::PI / 3.0, &UChoice::Eigenbasis, None).unwrap();
        let gap = gap_true(&sm, &js, &g);
        let after = potential_value_true(&sm, &g.compose(&js.q_list[gap.argmin]));
        prop_assert!((potential_value_true(&sm, &g) - after - gap.value).abs() < 1e-9);
    }

    #[test]
    fn projection_never_amplifies(
        b in prop::array::uniform6(-1.0f64..1.0),
        s in prop::array::uniform6(-5.0f64..5.0),
        scale in 0.0f64..1.1,
        gain in 0.1f64..5.0,
    ) {
        let params = ProjectionParams::new(1.0, 0.1, true, false).unwrap();
        let dir = Vec6::new(b);
        prop_assume!(dir.norm() > 1e-6);
        let b_hat = dir * (scale / dir.norm());
        let gamma = Mat6::identity() * gain;
        let tau = gamma * Vec6::new(s);
        let out = proj_delta(&b_hat, &tau, &gamma, &params);
        prop_assert!(out.norm() <= tau.norm() * (1.0 + 1e-12));
        if b_hat.norm() <= 1.0 {
            prop_assert_eq!(out, tau);
        }
    }
}

#[test]
fn rotation_composition_stays_orthonormal() {
    let step = angle_axis(1e-3, &Vec3::new([1.0, 2.0, 2.0]).normalized()).unwrap();
    let mut r = Rotation::identity();
    for _ in 0..1_000_000 {
        r = r.compose(&step);
    }
    assert!(r.orthonormality_residual() < 1e-9);
}
