//! Randomized audits of the algebraic identities, gradient formulas, gap
//! constants, decoupling and projection properties.
//!
//! Every audit draws from a seeded ChaCha8 stream, so a report is
//! reproducible from `(trials, seed)`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{Mat3, Mat4, Mat6, Vec3, Vec6};
use crate::measurement::{build_scene_matrices, measure_exact, study_scene, SceneMatrices};
use crate::observers::{flow, proj_delta, ObserverGains, ObserverState, ProjectionParams, Variant};
use crate::potential::{
    classify_spectrum, critical_set, delta_star, delta_star_grid, grad_psi_closed, grad_psi_measured,
    Spectrum,
};
use crate::sampling::{random_hom, random_mat4, random_pose, random_psd, random_scene, random_twist, random_vector};
use crate::se3::{adjoint, adjoint_star, assemble4, hom_wedge, proj_se3, psi, psi_b, vee6, wedge6, Pose};

/// How `worst` is compared against `limit`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    /// Largest error must stay at or below the limit.
    AtMost,
    /// Largest observed value must exceed the limit (a witness).
    Exceeds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub trials: usize,
    pub worst: f64,
    pub limit: f64,
    pub bound: Bound,
}

impl Check {
    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.worst <= self.limit,
            Bound::Exceeds => self.worst > self.limit,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::AtMost => "<=",
            Bound::Exceeds => ">",
        };
        write!(
            f,
            "{:<4} {:<34} trials {:>6}  worst {:.3e} {op} {:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.trials,
            self.worst,
            self.limit
        )
    }
}

struct Tally {
    name: &'static str,
    limit: f64,
    bound: Bound,
    trials: usize,
    worst: f64,
}

impl Tally {
    fn at_most(name: &'static str, limit: f64) -> Self {
        Tally {
            name,
            limit,
            bound: Bound::AtMost,
            trials: 0,
            worst: 0.0,
        }
    }

    fn exceeds(name: &'static str, limit: f64) -> Self {
        Tally {
            bound: Bound::Exceeds,
            ..Tally::at_most(name, limit)
        }
    }

    fn add(&mut self, x: f64) {
        self.trials += 1;
        // NaN must register as a failure.
        if x.is_nan() || x > self.worst {
            self.worst = if x.is_nan() { f64::INFINITY } else { x };
        }
    }

    fn finish(self) -> Check {
        Check {
            name: self.name.to_string(),
            trials: self.trials,
            worst: self.worst,
            limit: self.limit,
            bound: self.bound,
        }
    }
}

fn rel<const N: usize>(a: &crate::linalg::Vector<N>, b: &crate::linalg::Vector<N>) -> f64 {
    (*a - *b).max_abs() / (1.0 + a.max_abs().max(b.max_abs()))
}

fn rel_m<const R: usize, const C: usize>(a: &crate::linalg::Matrix<R, C>, b: &crate::linalg::Matrix<R, C>) -> f64 {
    (*a - *b).max_abs() / (1.0 + a.max_abs().max(b.max_abs()))
}

fn rel_s(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Random element of `ℳ₀` (bottom row zero).
fn random_m0<R: Rng + ?Sized>(rng: &mut R) -> Mat4 {
    let mut m = random_mat4(rng, 2.0);
    for j in 0..4 {
        m[(3, j)] = 0.0;
    }
    m
}

/// Group and wedge identities, each on `trials` random draws.
pub fn identity_checks(trials: usize, seed: u64) -> Vec<Check> {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inner = Tally::at_most("trace pairing with psi", TOL);
    let mut coadj = Tally::at_most("psi under congruence", TOL);
    let mut wedge_eq = Tally::at_most("wedge equivariance", TOL);
    let mut rank_one = Tally::at_most("psi of rank-one term", TOL);
    let mut proj_m0 = Tally::at_most("projection on M0", TOL);
    let mut trace_m0 = Tally::at_most("trace invariance on M0", TOL);
    let mut tr_meas = Tally::at_most("trace from measurements", TOL);
    let mut psi_meas = Tally::at_most("psi from measurements", TOL);
    let mut adj_meas = Tally::at_most("coadjoint of measurement sum", TOL);
    let mut hom = Tally::at_most("adjoint homomorphism", TOL);
    let mut decomp = Tally::at_most("block decomposition", TOL);

    for _ in 0..trials {
        let g = random_pose(&mut rng, 3.0);
        let g2 = random_pose(&mut rng, 3.0);
        let big_a = random_mat4(&mut rng, 2.0);
        let y = random_twist(&mut rng, 2.0);

        inner.add(rel_s(big_a.inner(&wedge6(&y)), 2.0 * psi(&big_a).dot(&y)));

        let x = wedge6(&random_twist(&mut rng, 2.0));
        let gm = g.matrix();
        let gi = g.inverse().matrix();
        coadj.add(rel(&psi(&(gm.transpose() * x * gi.transpose())), &(adjoint_star(&g) * psi(&x))));

        let (b, r) = (random_hom(&mut rng, 2.0), random_hom(&mut rng, 2.0));
        let lhs = wedge6(&hom_wedge(&g.act(&b), &g.act(&r)));
        let via_ad = wedge6(&(adjoint_star(&g.inverse()) * hom_wedge(&b, &r)));
        // Matrix form through ψ: X with ψ(X) = b ∧ r, pushed by the congruence.
        let w = hom_wedge(&b, &r);
        let x_pre = wedge6(&Vec6::from_parts(w.angular(), w.linear() * 2.0));
        let via_mat = wedge6(&psi(&(gi.transpose() * x_pre * gm.transpose())));
        wedge_eq.add(rel_m(&lhs, &via_ad).max(rel_m(&lhs, &via_mat)));

        let rv = r.to_vec4();
        let lhs = psi(&((Mat4::identity() - gm) * rv.outer(&rv)));
        rank_one.add(rel(&lhs, &(hom_wedge(&g.act(&r), &r) * 0.5)));

        let (m, mb) = (random_m0(&mut rng), random_m0(&mut rng));
        proj_m0.add(rel_m(&proj_se3(&(gm * m)), &proj_se3(&(gi.transpose() * m))));
        trace_m0.add(rel_s((gm.transpose() * gm * m * mb.transpose()).trace(), (m * mb.transpose()).trace()));

        let sm = build_scene_matrices(&random_scene(&mut rng)).expect("valid scene");
        let ginv = g.inverse();
        let e = Mat4::identity() - gm;
        let lhs = (e * sm.bb_a * e.transpose()).trace();
        let rhs: f64 = sm
            .r
            .iter()
            .zip(&sm.weights)
            .map(|(r, k)| k * r.distance_squared(&ginv.act(r)))
            .sum();
        tr_meas.add(rel_s(lhs, rhs));

        let lhs = psi(&proj_se3(&((Mat4::identity() - gi) * sm.bb_a)));
        let mut rhs = Vec6::zeros();
        for (r, k) in sm.r.iter().zip(&sm.weights) {
            rhs += hom_wedge(&ginv.act(r), r) * (0.5 * k);
        }
        psi_meas.add(rel(&lhs, &rhs));

        let gbar = g2;
        let gbar_inv = gbar.inverse();
        let mut s1 = Vec6::zeros();
        let mut s2 = Vec6::zeros();
        for (r, k) in sm.r.iter().zip(&sm.weights) {
            s1 += hom_wedge(&gbar.act(&ginv.act(r)), r) * *k;
            s2 += hom_wedge(&ginv.act(r), &gbar_inv.act(r)) * *k;
        }
        adj_meas.add(rel(&(adjoint_star(&gbar) * s1), &s2));

        hom.add(rel_m(&(adjoint(&g) * adjoint(&g2)), &adjoint(&g.compose(&g2))));

        let sym = random_mat4(&mut rng, 2.0);
        let a3 = Mat3::new(std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * (sym[(i, j)] + sym[(j, i)]))));
        let bv: Vec3 = random_vector(&mut rng, 2.0);
        let d = rng.random_range(0.1..3.0);
        let full = assemble4(&a3, &bv, &bv, d);
        let left = assemble4(&Mat3::identity(), &(bv * (1.0 / d)), &Vec3::zeros(), 1.0);
        let mid = assemble4(&(a3 - bv.outer(&bv) * (1.0 / d)), &Vec3::zeros(), &Vec3::zeros(), d);
        let right = assemble4(&Mat3::identity(), &Vec3::zeros(), &(bv * (1.0 / d)), 1.0);
        decomp.add(rel_m(&(left * mid * right), &full));
    }
    [inner, coadj, wedge_eq, rank_one, proj_m0, trace_m0, tr_meas, psi_meas, adj_meas, hom, decomp]
        .into_iter()
        .map(Tally::finish)
        .collect()
}

/// Algebra round trips on `trials` random draws.
pub fn round_trip_checks(trials: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::at_most("wedge round trip", 1e-14);
    let mut b = Tally::at_most("psi_b of a twist", 1e-14);
    for _ in 0..trials {
        let xi = random_twist(&mut rng, 3.0);
        t.add((vee6(&wedge6(&xi)).expect("se(3) element") - xi).max_abs());
        b.add((psi_b(&wedge6(&xi)) - xi).max_abs());
    }
    vec![t.finish(), b.finish()]
}

/// Measurement-sum gradient against the closed form on `trials` random
/// errors, and vanishing gradient on the critical set of `scenes` random
/// scenes.
pub fn gradient_checks(trials: usize, scenes: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut closed = Tally::at_most("gradient sum vs closed form", 1e-10);
    let mut crit = Tally::at_most("gradient on critical set", 1e-9);
    let study = build_scene_matrices(&study_scene()).expect("study scene");
    for k in 0..trials {
        let sm = if k % 2 == 0 {
            study.clone()
        } else {
            build_scene_matrices(&random_scene(&mut rng)).expect("valid scene")
        };
        let g = random_pose(&mut rng, 3.0);
        let g_hat = random_pose(&mut rng, 3.0);
        let meas = measure_exact(&g, &sm.r);
        let gt = g.compose(&g_hat.inverse());
        closed.add(rel(&grad_psi_measured(&sm, &g_hat, &meas), &grad_psi_closed(&sm, &gt)));
    }
    for _ in 0..scenes {
        let sm = build_scene_matrices(&random_scene(&mut rng)).expect("valid scene");
        for gc in critical_set(&sm) {
            // Any estimate with g ĝ⁻¹ = g_crit works; take ĝ random.
            let g_hat = random_pose(&mut rng, 3.0);
            let g = gc.compose(&g_hat);
            let meas = measure_exact(&g, &sm.r);
            crit.add(grad_psi_measured(&sm, &g_hat, &meas).norm());
        }
    }
    vec![closed.finish(), crit.finish()]
}

/// `Δ*` with `𝕌 = 𝔼(Q)` against the case-wise closed forms on `trials`
/// random PSD matrices cycling through the four spectrum patterns. Repeated
/// spectra are also cross-checked on the grid, which can only overestimate.
pub fn delta_star_checks(trials: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut distinct = Tally::at_most("delta* distinct spectrum", 1e-9);
    let mut double = Tally::at_most("delta* double eigenvalue", 1e-9);
    let mut triple = Tally::at_most("delta* triple eigenvalue", 1e-9);
    let mut grid = Tally::at_most("delta* grid above closed form", 1e-9);
    let mut study = Tally::at_most("delta* of the study scene", 1e-9);
    let mut bound = Tally::at_most("gap bound of the study scene", 1e-9);
    for k in 0..trials {
        let q = random_psd(&mut rng, (k % 4) as u8);
        let eig = crate::measurement::eig_sym3(&q).expect("symmetric");
        let u: Vec<Vec3> = eig.iter().map(|e| e.1).collect();
        let ds = delta_star(&q, &u).expect("PSD input");
        match classify_spectrum(&eig) {
            Spectrum::Distinct => distinct.add(rel_s(ds, q.trace() - eig[2].0)),
            Spectrum::Double { double: mu, single: nu } => {
                double.add(rel_s(ds, (2.0 * mu).min(nu)));
                grid.add((ds - delta_star_grid(&q, &u)).max(0.0));
            }
            Spectrum::Triple(l) => {
                triple.add(rel_s(ds, 2.0 * l / 3.0));
                grid.add((ds - delta_star_grid(&q, &u)).max(0.0));
            }
        }
    }
    let sm = build_scene_matrices(&study_scene()).expect("study scene");
    let js = crate::potential::build_jump_set(
        &sm,
        2.0 * std::f64::consts::PI / 3.0,
        &crate::potential::UChoice::Eigenbasis,
        None,
    )
    .expect("study jump set");
    study.add((js.delta_star - 2.0 / 3.0).abs());
    bound.add((js.bound - 1.0).abs());
    [distinct, double, triple, grid, study, bound]
        .into_iter()
        .map(Tally::finish)
        .collect()
}

/// Largest change in the rotational rows `(ω̂, ḃ_ω)` of the flow of
/// `variant` when the true position, `p̂` and `b̂_v` are shifted.
pub fn rotational_row_change(
    variant: Variant,
    sm: &SceneMatrices,
    gains: &ObserverGains,
    g: &Pose,
    st: &ObserverState,
    xi_y: &Vec6,
    shift: (Vec3, Vec3, Vec3),
) -> f64 {
    let proj = ProjectionParams::default();
    let (x0, d0) = flow(variant, sm, gains, st, xi_y, &measure_exact(g, &sm.r), &proj);
    let mut g1 = *g;
    g1.p += shift.0;
    let mut st1 = *st;
    st1.g_hat.p += shift.1;
    st1.b_hat = Vec6::from_parts(st.b_hat.angular(), st.b_hat.linear() + shift.2);
    let (x1, d1) = flow(variant, sm, gains, &st1, xi_y, &measure_exact(&g1, &sm.r), &proj);
    (x1.angular() - x0.angular())
        .max_abs()
        .max((d1.angular() - d0.angular()).max_abs())
}

/// Rotational rows of `HD2` invariant to translational perturbations, and a
/// coupling witness for `H` on the study scene (whose `b ≠ 0`).
pub fn decoupling_checks(trials: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hd2 = Tally::at_most("HD2 rotational rows invariant", 1e-12);
    let mut h = Tally::exceeds("H coupling witness", 1e-3);
    let study = build_scene_matrices(&study_scene()).expect("study scene");
    let gains = ObserverGains::unit();
    for k in 0..trials {
        let sm = if k % 2 == 0 {
            study.clone()
        } else {
            build_scene_matrices(&random_scene(&mut rng)).expect("valid scene")
        };
        let g = random_pose(&mut rng, 3.0);
        let st = ObserverState::new(random_pose(&mut rng, 3.0), random_twist(&mut rng, 0.5));
        let xi_y = random_twist(&mut rng, 2.0);
        let shift = (
            random_vector(&mut rng, 2.0),
            random_vector(&mut rng, 2.0),
            random_vector(&mut rng, 0.5),
        );
        hd2.add(rotational_row_change(Variant::HD2, &sm, &gains, &g, &st, &xi_y, shift));
        if k % 2 == 0 {
            h.add(rotational_row_change(Variant::H, &sm, &gains, &g, &st, &xi_y, shift));
        }
    }
    vec![hd2.finish(), h.finish()]
}

/// Properties 2 and 3 of the bias projection on `trials` random pairs
/// `(b̂, σ)` with `‖b̂‖ ≤ Δ + ε` and a true bias inside the `Δ` ball.
/// Property 3 is drawn with isotropic `Γ`, property 2 with a general positive
/// diagonal `Γ`.
pub fn projection_checks(trials: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p2 = Tally::at_most("projection keeps V decreasing", 1e-12);
    let mut p3 = Tally::at_most("projection does not amplify", 1e-12);
    for k in 0..trials {
        let params = ProjectionParams::new(
            rng.random_range(0.2..2.0),
            rng.random_range(0.01..0.5),
            true,
            k % 5 == 4,
        )
        .expect("positive parameters");
        let radius = params.delta + params.epsilon;
        let dir = random_vector::<6, _>(&mut rng, 1.0);
        let b_hat = dir * (rng.random_range(0.0..=1.0) * radius / dir.norm().max(1e-12));
        let ba_dir = random_vector::<6, _>(&mut rng, 1.0);
        let b_a = ba_dir * (rng.random_range(0.0..=1.0) * params.delta / ba_dir.norm().max(1e-12));
        let sigma = random_twist(&mut rng, 2.0);

        let raw = random_vector::<6, _>(&mut rng, 1.0);
        let gd = Vec6::new(std::array::from_fn(|i| 0.1 + 2.0 * raw[i].abs()));
        let gamma = if k % 5 == 4 {
            // Per-block projection needs a gain that is isotropic within each block.
            let (gw, gv) = (gd[0], gd[3]);
            Mat6::from_diagonal(&Vec6::new([gw, gw, gw, gv, gv, gv]))
        } else {
            Mat6::from_diagonal(&gd)
        };
        let diag = gamma.diagonal();
        let gamma_inv = Mat6::from_diagonal(&Vec6::new(std::array::from_fn(|i| 1.0 / diag[i])));
        let tau = gamma * sigma;
        let out = proj_delta(&b_hat, &tau, &gamma, &params);
        let bt = b_hat - b_a;
        let lhs = bt.dot(&(gamma_inv * out));
        let rhs = bt.dot(&sigma);
        p2.add((lhs - rhs).max(0.0) / (1.0 + rhs.abs()));

        let iso = Mat6::identity() * gd[0];
        let tau = iso * sigma;
        let out = proj_delta(&b_hat, &tau, &iso, &params);
        p3.add((out.norm() - tau.norm()).max(0.0) / (1.0 + tau.norm()));
    }
    vec![p2.finish(), p3.finish()]
}

/// Every randomized audit; `trials` scales the per-check sample count.
pub fn run_all(trials: usize, seed: u64) -> Vec<Check> {
    let mut out = identity_checks(trials, seed);
    out.extend(round_trip_checks(trials, seed.wrapping_add(1)));
    out.extend(gradient_checks(trials, 20, seed.wrapping_add(2)));
    out.extend(delta_star_checks(trials.clamp(4, 1000), seed.wrapping_add(3)));
    out.extend(decoupling_checks(trials, seed.wrapping_add(4)));
    out.extend(projection_checks(10 * trials, seed.wrapping_add(5)));
    out
}
