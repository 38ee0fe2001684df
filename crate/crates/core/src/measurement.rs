//! Scenes, the weighted scene matrices, output synthesis and velocity bias.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Mat4, Vec3, Vec6};
use crate::se3::{assemble4, hat3, HomVec4, Pose};

/// Threshold on `‖a × b‖ / (‖a‖‖b‖)` below which two directions count as collinear.
pub const COLLINEAR_TOL: f64 = 1e-9;
const JACOBI_SWEEPS: usize = 50;

/// Landmarks and inertial directions with their weights.
///
/// `weights` lists the landmark weights first, then the direction weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub landmarks: Vec<Vec3>,
    pub vectors: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl Scene {
    pub fn new(landmarks: Vec<Vec3>, vectors: Vec<Vec3>, weights: Vec<f64>) -> Result<Self> {
        let scene = Scene {
            landmarks,
            vectors,
            weights,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Same scene with every weight equal to one.
    pub fn unit_weights(landmarks: Vec<Vec3>, vectors: Vec<Vec3>) -> Result<Self> {
        let n = landmarks.len() + vectors.len();
        Scene::new(landmarks, vectors, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.landmarks.len() + self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inertial references `r_i`, landmarks first.
    pub fn references(&self) -> Vec<HomVec4> {
        self.landmarks
            .iter()
            .map(|p| HomVec4::point(*p))
            .chain(self.vectors.iter().map(|v| HomVec4::direction(*v)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n1 = self.landmarks.len();
        if self.weights.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "{} weights given for {} references",
                self.weights.len(),
                self.len()
            )));
        }
        if let Some(k) = self.weights.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::InvalidInput(format!("weights must be positive, got {k}")));
        }
        if self
            .landmarks
            .iter()
            .chain(self.vectors.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidInput("scene contains non-finite coordinates".into()));
        }
        if n1 == 0 {
            return Err(Error::AssumptionViolated(
                "at least one landmark point is required".into(),
            ));
        }
        if self.len() < 3 {
            return Err(Error::AssumptionViolated(format!(
                "at least three references are required, got {}",
                self.len()
            )));
        }
        let pc = self.centroid();
        let dirs: Vec<Vec3> = self
            .landmarks
            .iter()
            .map(|p| *p - pc)
            .chain(self.vectors.iter().copied())
            .collect();
        if !has_noncollinear_pair(&dirs) {
            return Err(Error::AssumptionViolated(
                "need two non-collinear vectors among centred landmarks and inertial directions"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Weighted landmark centroid `b/d`.
    pub fn centroid(&self) -> Vec3 {
        let (mut b, mut d) = (Vec3::zeros(), 0.0);
        for (p, k) in self.landmarks.iter().zip(&self.weights) {
            b += *p * *k;
            d += k;
        }
        b * (1.0 / d)
    }
}

fn has_noncollinear_pair(dirs: &[Vec3]) -> bool {
    for (i, a) in dirs.iter().enumerate() {
        let na = a.norm();
        if na == 0.0 {
            continue;
        }
        for b in &dirs[i + 1..] {
            let nb = b.norm();
            if nb == 0.0 {
                continue;
            }
            if a.cross(b).norm() / (na * nb) > COLLINEAR_TOL {
                return true;
            }
        }
    }
    false
}

/// Quantities derived from `𝔸 = Σ kᵢ rᵢ rᵢᵀ = [[A, b], [bᵀ, d]]`.
#[derive(Clone, Debug)]
pub struct SceneMatrices {
    pub a: Mat3,
    pub b: Vec3,
    pub d: f64,
    pub bb_a: Mat4,
    pub q: Mat3,
    pub q_bar: Mat3,
    pub p_c: Vec3,
    pub g_c: Pose,
    pub r: Vec<HomVec4>,
    pub r_bar: Vec<HomVec4>,
    pub weights: Vec<f64>,
    /// Eigenpairs of `Q`, eigenvalues ascending.
    pub eig_q: [(f64, Vec3); 3],
}

impl SceneMatrices {
    pub fn eigenvalues(&self) -> Vec3 {
        Vec3::new([self.eig_q[0].0, self.eig_q[1].0, self.eig_q[2].0])
    }

    /// `b/d`, the translation offset shared by every critical point.
    pub fn b_over_d(&self) -> Vec3 {
        self.p_c
    }

    /// Block-diagonal `diag(Q, d)` used by the centred potential.
    pub fn bb_a_bar(&self) -> Mat4 {
        assemble4(&self.q, &Vec3::zeros(), &Vec3::zeros(), self.d)
    }
}

pub fn build_scene_matrices(scene: &Scene) -> Result<SceneMatrices> {
    scene.validate()?;
    let r = scene.references();
    let mut bb_a = Mat4::zeros();
    for (ri, k) in r.iter().zip(&scene.weights) {
        let x = ri.to_vec4();
        bb_a += x.outer(&x) * *k;
    }
    let mut a = Mat3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            a[(i, j)] = bb_a[(i, j)];
        }
    }
    let b = Vec3::new([bb_a[(0, 3)], bb_a[(1, 3)], bb_a[(2, 3)]]);
    let d = bb_a[(3, 3)];
    if d <= 0.0 {
        return Err(Error::AssumptionViolated("landmark weight sum must be positive".into()));
    }
    let q = (a - b.outer(&b) * (1.0 / d)).symmetric_part();
    let q_bar = (Mat3::identity() * q.trace() - q) * 0.5;
    let p_c = b * (1.0 / d);
    let g_c = Pose::from_translation(p_c);
    let gc_inv = g_c.inverse();
    let r_bar = r.iter().map(|x| gc_inv.act(x)).collect();
    let eig_q = eig_sym3(&q)?;
    if eig_q[0].0 < -1e-9 * q.frobenius_norm().max(1.0) {
        return Err(Error::NumericalFailure(format!(
            "Q is not positive semi-definite (λ_min = {})",
            eig_q[0].0
        )));
    }
    let qbar_min = 0.5 * (eig_q[0].0 + eig_q[1].0);
    if qbar_min <= 0.0 {
        return Err(Error::AssumptionViolated(format!(
            "Q̄ is singular (λ_min = {qbar_min:e})"
        )));
    }
    Ok(SceneMatrices {
        a,
        b,
        d,
        bb_a,
        q,
        q_bar,
        p_c,
        g_c,
        r,
        r_bar,
        weights: scene.weights.clone(),
        eig_q,
    })
}

/// Alternative form `Q = Σ kᵢ v̄ᵢv̄ᵢᵀ + Σ kⱼ vⱼvⱼᵀ` with `v̄ᵢ = pᵢ − p_c`.
pub fn q_from_centred(scene: &Scene) -> Mat3 {
    let pc = scene.centroid();
    let n1 = scene.landmarks.len();
    let mut q = Mat3::zeros();
    for (p, k) in scene.landmarks.iter().zip(&scene.weights) {
        let v = *p - pc;
        q += v.outer(&v) * *k;
    }
    for (v, k) in scene.vectors.iter().zip(&scene.weights[n1..]) {
        q += v.outer(v) * *k;
    }
    q
}

/// `Q̄ = −½ Σ kᵢ (v̄ᵢ×)² − ½ Σ kⱼ (vⱼ×)²`.
pub fn q_bar_from_centred(scene: &Scene) -> Mat3 {
    let pc = scene.centroid();
    let mut m = Mat3::zeros();
    let dirs = scene.landmarks.iter().map(|p| *p - pc).chain(scene.vectors.iter().copied());
    for (v, k) in dirs.zip(&scene.weights) {
        let h = hat3(&v);
        m = m - h * h * (0.5 * k);
    }
    m
}

/// One landmark at `(√2/2, √2/2, 2)` and three orthonormal inertial
/// directions, all with unit weight. Its `Q` is the identity.
pub fn study_scene() -> Scene {
    let s3 = 3f64.sqrt() / 2.0;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Scene::unit_weights(
        vec![Vec3::new([h, h, 2.0])],
        vec![
            Vec3::new([0.0, 0.0, 1.0]),
            Vec3::new([s3, 0.5, 0.0]),
            Vec3::new([-0.5, s3, 0.0]),
        ],
    )
    .expect("valid scene")
}

/// Body-frame outputs `bᵢ = g⁻¹ rᵢ`.
pub fn measure_exact(g: &Pose, r: &[HomVec4]) -> Vec<HomVec4> {
    let gi = g.inverse();
    r.iter().map(|x| gi.act(x)).collect()
}

/// Body-frame outputs with i.i.d. Gaussian noise on the vector part.
///
/// The homogeneous component is never perturbed. `sigma = 0` draws nothing
/// from `rng`.
pub fn measure_outputs<R: Rng + ?Sized>(
    g: &Pose,
    r: &[HomVec4],
    sigma: f64,
    rng: &mut R,
) -> Vec<HomVec4> {
    let mut out = measure_exact(g, r);
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        for b in out.iter_mut() {
            for i in 0..3 {
                b.v[i] += normal.sample(rng);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BiasMode {
    Constant,
    /// `cos(freq · t) · base`, `freq` in rad/s.
    Cosine { freq: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasModel {
    pub base: Vec6,
    pub mode: BiasMode,
}

impl BiasModel {
    pub fn constant(base: Vec6) -> Self {
        BiasModel {
            base,
            mode: BiasMode::Constant,
        }
    }

    pub fn cosine(base: Vec6, freq: f64) -> Self {
        BiasModel {
            base,
            mode: BiasMode::Cosine { freq },
        }
    }

    pub fn zero() -> Self {
        BiasModel::constant(Vec6::zeros())
    }

    pub fn at(&self, t: f64) -> Vec6 {
        match self.mode {
            BiasMode::Constant => self.base,
            BiasMode::Cosine { freq } => self.base * (freq * t).cos(),
        }
    }
}

/// Biased velocity `ξ_y = ξ + b_a(t)`.
pub fn measure_velocity(xi_true: &Vec6, bias: &BiasModel, t: f64) -> Vec6 {
    *xi_true + bias.at(t)
}

/// Symmetric 3x3 eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come back ascending. Eigenvalues equal to within a relative
/// 1e-9 are merged, and a basis of their eigenspace is rebuilt from the
/// canonical axes in index order so that repeated cases are deterministic.
/// Every vector is signed so that its largest-magnitude entry is positive.
pub fn eig_sym3(m: &Mat3) -> Result<[(f64, Vec3); 3]> {
    if (*m - m.transpose()).frobenius_norm() > 1e-9 {
        return Err(Error::InvalidInput("eig_sym3: matrix is not symmetric".into()));
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput("eig_sym3: non-finite entries".into()));
    }
    let mut a = m.symmetric_part();
    let mut v = Mat3::identity();
    let tol = 1e-13 * m.frobenius_norm().max(1.0);
    let off = |a: &Mat3| (2.0 * (a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2))).sqrt();
    let mut converged = off(&a) < tol;
    for _ in 0..JACOBI_SWEEPS {
        if converged {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut j = Mat3::identity();
            j[(p, p)] = c;
            j[(q, q)] = c;
            j[(p, q)] = s;
            j[(q, p)] = -s;
            a = j.transpose() * a * j;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v = v * j;
        }
        converged = off(&a) < tol;
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Jacobi eigensolver did not converge in {JACOBI_SWEEPS} sweeps"
        )));
    }

    let mut pairs: Vec<(f64, Vec3)> = (0..3).map(|i| (a[(i, i)], v.column(i))).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));

    let scale = pairs.iter().fold(1.0_f64, |s, p| s.max(p.0.abs()));
    let mut start = 0;
    while start < 3 {
        let mut end = start + 1;
        while end < 3 && (pairs[end].0 - pairs[end - 1].0).abs() <= 1e-9 * scale {
            end += 1;
        }
        if end - start > 1 {
            let mean = pairs[start..end].iter().map(|p| p.0).sum::<f64>() / (end - start) as f64;
            let basis = canonical_basis(&pairs[start..end].iter().map(|p| p.1).collect::<Vec<_>>());
            for (k, b) in basis.into_iter().enumerate() {
                pairs[start + k] = (mean, b);
            }
        }
        start = end;
    }
    let fix = |(l, x): (f64, Vec3)| (l, sign_fixed(&x));
    Ok([fix(pairs[0]), fix(pairs[1]), fix(pairs[2])])
}

/// Orthonormal basis of `span(vs)` built by Gram-Schmidt on projected canonical axes.
fn canonical_basis(vs: &[Vec3]) -> Vec<Vec3> {
    let proj = vs.iter().fold(Mat3::zeros(), |p, x| p + x.outer(x));
    let mut out: Vec<Vec3> = Vec::with_capacity(vs.len());
    for i in 0..3 {
        if out.len() == vs.len() {
            break;
        }
        let mut w = proj * Vec3::unit(i);
        for u in &out {
            w -= *u * u.dot(&w);
        }
        if w.norm() > 1e-6 {
            out.push(w.normalized());
        }
    }
    out
}

fn sign_fixed(x: &Vec3) -> Vec3 {
    let mut k = 0;
    for i in 1..3 {
        if x[i].abs() > x[k].abs() + 1e-12 {
            k = i;
        }
    }
    if x[k] < 0.0 {
        -*x
    } else {
        *x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn study_scene_matrices() {
        let sm = build_scene_matrices(&study_scene()).unwrap();
        assert_eq!(sm.d, 1.0);
        assert_eq!(sm.b, Vec3::new([FRAC_1_SQRT_2, FRAC_1_SQRT_2, 2.0]));
        assert!((sm.q - Mat3::identity()).max_abs() < 1e-15);
        assert!((sm.q_bar - Mat3::identity()).max_abs() < 1e-15);
        assert!((sm.eigenvalues() - Vec3::new([1.0, 1.0, 1.0])).max_abs() < 1e-15);
        assert_eq!(sm.eig_q[0].1, Vec3::unit(0));
        assert_eq!(sm.eig_q[2].1, Vec3::unit(2));
    }

    #[test]
    fn singular_q_scene() {
        let scene = Scene::unit_weights(
            vec![Vec3::zeros()],
            vec![Vec3::unit(0), Vec3::unit(1)],
        )
        .unwrap();
        let sm = build_scene_matrices(&scene).unwrap();
        assert_eq!(sm.b, Vec3::zeros());
        assert_eq!(sm.d, 1.0);
        assert_eq!(sm.q, Mat3::from_diagonal(&Vec3::new([1.0, 1.0, 0.0])));
    }

    #[test]
    fn scene_validation() {
        let none = Scene::unit_weights(vec![], vec![Vec3::unit(0), Vec3::unit(1), Vec3::unit(2)]);
        assert!(matches!(none, Err(Error::AssumptionViolated(_))));
        let two = Scene::unit_weights(vec![Vec3::zeros()], vec![Vec3::unit(0)]);
        assert!(matches!(two, Err(Error::AssumptionViolated(_))));
        let collinear = Scene::unit_weights(
            vec![Vec3::zeros()],
            vec![Vec3::unit(0), Vec3::unit(0) * -2.0],
        );
        assert!(matches!(collinear, Err(Error::AssumptionViolated(_))));
        let bad_weight = Scene::new(
            vec![Vec3::zeros()],
            vec![Vec3::unit(0), Vec3::unit(1)],
            vec![1.0, 0.0, 1.0],
        );
        assert!(matches!(bad_weight, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn alternative_expressions_agree() {
        let scene = Scene::new(
            vec![Vec3::new([1.0, 2.0, 0.5]), Vec3::new([-1.0, 0.3, 2.0])],
            vec![Vec3::new([0.0, 0.6, 0.8])],
            vec![0.7, 1.3, 2.0],
        )
        .unwrap();
        let sm = build_scene_matrices(&scene).unwrap();
        assert!((sm.q - q_from_centred(&scene)).max_abs() < 1e-12);
        assert!((sm.q_bar - q_bar_from_centred(&scene)).max_abs() < 1e-12);
        let centred = sm
            .r_bar
            .iter()
            .zip(&sm.weights)
            .filter(|(r, _)| r.s == 1.0)
            .fold(Vec3::zeros(), |acc, (r, k)| acc + r.v * *k);
        assert!(centred.max_abs() < 1e-12);
    }

    #[test]
    fn measurement_cases() {
        let r = study_scene().references();
        assert_eq!(measure_exact(&Pose::identity(), &r), r);
        let p = Vec3::new([1.0, -2.0, 3.0]);
        let b = measure_exact(&Pose::from_translation(p), &r);
        assert_eq!(b[0].v, r[0].v - p);
        assert_eq!(b[0].s, 1.0);
        assert_eq!(b[1], r[1]);
    }

    #[test]
    fn noise_is_reproducible_and_spares_homogeneous_part() {
        let r = study_scene().references();
        let g = Pose::identity();
        let a = measure_outputs(&g, &r, 0.3, &mut ChaCha8Rng::seed_from_u64(7));
        let b = measure_outputs(&g, &r, 0.3, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        assert!(a.iter().zip(&r).all(|(x, y)| x.s == y.s));
        assert_ne!(a, r);
    }

    #[test]
    fn velocity_bias() {
        let xi = Vec6::new([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(measure_velocity(&xi, &BiasModel::zero(), 3.0), xi);
        let base = Vec6::new([-0.02, 0.02, 0.1, 0.2, -0.1, 0.01]);
        let c = BiasModel::constant(base);
        for t in [0.0, 1.0, 50.0] {
            assert!((measure_velocity(&xi, &c, t) - xi - base).max_abs() < 1e-15);
        }
        assert_eq!(BiasModel::cosine(base, 0.02).at(0.0), base);
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = eig_sym3(&Mat3::identity()).unwrap();
        for (i, (l, v)) in e.iter().enumerate() {
            assert_eq!(*l, 1.0);
            assert_eq!(*v, Vec3::unit(i));
        }
        let e = eig_sym3(&Mat3::from_diagonal(&Vec3::new([3.0, 1.0, 2.0]))).unwrap();
        assert_eq!(e[0], (1.0, Vec3::unit(1)));
        assert_eq!(e[1], (2.0, Vec3::unit(2)));
        assert_eq!(e[2], (3.0, Vec3::unit(0)));
    }

    #[test]
    fn eig_reconstructs_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut m = Mat3::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    m[(i, j)] = rng.random_range(-5.0..5.0);
                }
            }
            let m = m.symmetric_part();
            let e = eig_sym3(&m).unwrap();
            let rec = e.iter().fold(Mat3::zeros(), |acc, (l, v)| acc + v.outer(v) * *l);
            assert!((rec - m).max_abs() < 1e-10);
            assert!(e[0].0 <= e[1].0 && e[1].0 <= e[2].0);
            for i in 0..3 {
                assert!((m * e[i].1 - e[i].1 * e[i].0).max_abs() < 1e-10);
                for j in 0..i {
                    assert!(e[i].1.dot(&e[j].1).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn eig_double_root_basis_is_canonical() {
        let u = Vec3::new([0.0, 0.6, 0.8]);
        let m = Mat3::identity() * 2.0 + u.outer(&u) * 3.0;
        let e = eig_sym3(&m).unwrap();
        assert!((e[0].0 - 2.0).abs() < 1e-12 && (e[1].0 - 2.0).abs() < 1e-12);
        assert!((e[0].1 - Vec3::unit(0)).max_abs() < 1e-12);
        assert!((e[2].1 - u).max_abs() < 1e-12);
    }
}
