//! Random draws used by the randomized audits and the tests.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{Mat3, Mat4, Vec3, Vec6, Vector};
use crate::measurement::Scene;
use crate::se3::{HomVec4, Pose, Rotation};

pub fn random_vector<const N: usize, R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Vector<N> {
    let mut v = Vector::<N>::zeros();
    for i in 0..N {
        v[i] = rng.random_range(-scale..=scale);
    }
    v
}

pub fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new([
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ]);
        let n = v.norm();
        if n > 1e-6 {
            return v * (1.0 / n);
        }
    }
}

/// Haar-distributed rotation from a normalized Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    let mut q = [0.0f64; 4];
    let mut n = 0.0;
    while n < 1e-6 {
        for x in q.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let [w, x, y, z] = q.map(|c| c / n);
    let m = Mat3::new([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]);
    Rotation::new(m).expect("quaternion rotation")
}

/// Uniform rotation and position uniform in the cube `[-p_max, p_max]³`.
pub fn random_pose<R: Rng + ?Sized>(rng: &mut R, p_max: f64) -> Pose {
    let r = random_rotation(rng);
    let p = if p_max > 0.0 {
        random_vector(rng, p_max)
    } else {
        Vec3::zeros()
    };
    Pose::new(r, p)
}

pub fn random_twist<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Vec6 {
    random_vector(rng, scale)
}

pub fn random_mat4<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Mat4 {
    let mut m = Mat4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            m[(i, j)] = rng.random_range(-scale..=scale);
        }
    }
    m
}

/// Random point or direction.
pub fn random_hom<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> HomVec4 {
    let v = random_vector(rng, scale);
    if rng.random_bool(0.5) {
        HomVec4::point(v)
    } else {
        HomVec4::direction(v)
    }
}

/// Scene with 1 to 3 landmarks and 1 to 3 unit directions, weights in `[0.5, 2]`,
/// redrawn until it passes validation.
pub fn random_scene<R: Rng + ?Sized>(rng: &mut R) -> Scene {
    loop {
        let n1 = rng.random_range(1..=3);
        let n2 = rng.random_range(1..=3);
        if n1 + n2 < 3 {
            continue;
        }
        let landmarks = (0..n1).map(|_| random_vector(rng, 3.0)).collect();
        let vectors = (0..n2).map(|_| random_unit(rng)).collect();
        let weights = (0..n1 + n2).map(|_| rng.random_range(0.5..2.0)).collect();
        if let Ok(s) = Scene::new(landmarks, vectors, weights) {
            if crate::measurement::build_scene_matrices(&s).is_ok() {
                return s;
            }
        }
    }
}

/// Random positive semi-definite `Q`; `pattern` 0, 1, 2 and 3 give a
/// distinct, double-low, double-high and triple spectrum.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, pattern: u8) -> Mat3 {
    let mut l = [
        rng.random_range(0.0..3.0),
        rng.random_range(0.0..3.0),
        rng.random_range(0.0..3.0),
    ];
    l.sort_by(f64::total_cmp);
    match pattern {
        1 => l[1] = l[0],
        2 => l[1] = l[2],
        3 => {
            l[1] = l[0];
            l[2] = l[0];
        }
        _ => {}
    }
    let r = *random_rotation(rng).matrix();
    let q = r * Mat3::from_diagonal(&Vec3::new(l)) * r.transpose();
    q.symmetric_part()
}
