//! SO(3) / SE(3) / se(3) maps.
//!
//! Twists are stacked angular-first, `ξ = (ω, v)`, and `wedge6` maps them to
//! `[[ω×, v], [0, 0]]`. The `psi` family extracts the se(3) component of an
//! arbitrary 4x4 matrix with the half-weighted translation that makes
//! `⟨⟨A, y^∧⟩⟩ = 2 psi(A)ᵀ y` hold.

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Mat4, Mat6, Vec3, Vec4, Vec6, Vector};

/// Tolerance for Lie-algebra membership checks in `vee3` / `vee6`.
pub const ALGEBRA_TOL: f64 = 1e-9;
/// Tolerance on `‖RᵀR − I‖_F` and `|det R − 1|` for validated rotations.
pub const ROTATION_TOL: f64 = 1e-9;

/// Compositions between forced re-orthonormalizations.
const REORTHO_EVERY: u32 = 1000;
/// Orthonormality residual that triggers an early re-orthonormalization.
const REORTHO_RESIDUAL: f64 = 1e-10;
/// Below this rotation angle `exp_se3` switches to truncated series.
const SMALL_ANGLE: f64 = 1e-6;

/// Skew-symmetric matrix with `hat3(w) * y = w × y`.
pub fn hat3(w: &Vec3) -> Mat3 {
    let [x, y, z] = w.0;
    Mat3::new([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
}

pub fn vee3(m: &Mat3) -> Result<Vec3> {
    let asym = (*m + m.transpose()).max_abs();
    let diag = m.diagonal().max_abs();
    if asym > 2.0 * ALGEBRA_TOL || diag > ALGEBRA_TOL {
        return Err(Error::InvalidInput(format!(
            "vee3: matrix is not antisymmetric (residual {asym:e})"
        )));
    }
    Ok(Vec3::new([
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    ]))
}

pub fn wedge6(xi: &Vec6) -> Mat4 {
    let w = hat3(&xi.angular());
    let v = xi.linear();
    let mut m = Mat4::zeros();
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = w[(i, j)];
        }
        m[(i, 3)] = v[i];
    }
    m
}

/// Inverse of [`wedge6`] (the `vex` map); rejects matrices outside se(3).
pub fn vee6(m: &Mat4) -> Result<Vec6> {
    let bottom = m.row(3).max_abs();
    if bottom > ALGEBRA_TOL {
        return Err(Error::InvalidInput(format!(
            "vee6: bottom row is not zero (max {bottom:e})"
        )));
    }
    let omega = vee3(&top_left(m))?;
    Ok(Vec6::from_parts(omega, top_right(m)))
}

/// Adjoint action `ad_ξ` so that `[ξ₁^∧, ξ₂^∧] = (ad_ξ₁ ξ₂)^∧`.
pub fn ad(xi: &Vec6) -> Mat6 {
    let w = hat3(&xi.angular());
    let v = hat3(&xi.linear());
    Mat6::from_blocks(&w, &Mat3::zeros(), &v, &w)
}

pub fn top_left(m: &Mat4) -> Mat3 {
    let mut a = Mat3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            a[(i, j)] = m[(i, j)];
        }
    }
    a
}

pub fn top_right(m: &Mat4) -> Vec3 {
    Vec3::new([m[(0, 3)], m[(1, 3)], m[(2, 3)]])
}

/// Builds `[[a, b], [cᵀ, d]]`.
pub fn assemble4(a: &Mat3, b: &Vec3, c: &Vec3, d: f64) -> Mat4 {
    let mut m = Mat4::zeros();
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = a[(i, j)];
        }
        m[(i, 3)] = b[i];
        m[(3, i)] = c[i];
    }
    m[(3, 3)] = d;
    m
}

/// `(A − Aᵀ)/2`.
pub fn proj_antisym(a: &Mat3) -> Mat3 {
    (*a - a.transpose()) * 0.5
}

/// Orthogonal projection of a 4x4 matrix onto se(3) under the trace inner product.
pub fn proj_se3(a: &Mat4) -> Mat4 {
    assemble4(
        &proj_antisym(&top_left(a)),
        &top_right(a),
        &Vec3::zeros(),
        0.0,
    )
}

pub fn psi_a(a: &Mat3) -> Vec3 {
    Vec3::new([
        0.5 * (a[(2, 1)] - a[(1, 2)]),
        0.5 * (a[(0, 2)] - a[(2, 0)]),
        0.5 * (a[(1, 0)] - a[(0, 1)]),
    ])
}

pub fn psi_b(a: &Mat4) -> Vec6 {
    Vec6::from_parts(psi_a(&top_left(a)), top_right(a))
}

/// `psi_b` with the translational half scaled by 1/2.
pub fn psi(a: &Mat4) -> Vec6 {
    let b = psi_b(a);
    Vec6::from_parts(b.angular(), b.linear() * 0.5)
}

/// Homogeneous 4-vector `(v, s)`: `s = 1` for points, `s = 0` for directions.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct HomVec4 {
    pub v: Vec3,
    pub s: f64,
}

impl HomVec4 {
    pub fn point(p: Vec3) -> Self {
        HomVec4 { v: p, s: 1.0 }
    }

    pub fn direction(u: Vec3) -> Self {
        HomVec4 { v: u, s: 0.0 }
    }

    pub fn to_vec4(&self) -> Vec4 {
        Vec4::new([self.v[0], self.v[1], self.v[2], self.s])
    }

    pub fn from_vec4(x: &Vec4) -> Self {
        HomVec4 {
            v: Vec3::new([x[0], x[1], x[2]]),
            s: x[3],
        }
    }

    pub fn distance_squared(&self, other: &HomVec4) -> f64 {
        (self.v - other.v).norm_squared() + (self.s - other.s).powi(2)
    }
}

/// Exterior product of two homogeneous vectors:
/// `b ∧ r = (b_v × r_v, b_s r_v − r_s b_v)`.
pub fn hom_wedge(b: &HomVec4, r: &HomVec4) -> Vec6 {
    Vec6::from_parts(b.v.cross(&r.v), r.v * b.s - b.v * r.s)
}

/// Element of SO(3).
///
/// Carries a count of group products since the last re-orthonormalization so
/// that long chains of compositions stay on the manifold.
#[derive(Clone, Copy, Debug)]
pub struct Rotation {
    m: Mat3,
    compositions: u32,
}

impl PartialEq for Rotation {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation {
            m: Mat3::identity(),
            compositions: 0,
        }
    }

    /// Validates orthonormality and orientation.
    pub fn new(m: Mat3) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidInput("rotation has non-finite entries".into()));
        }
        let res = orthonormality_residual(&m);
        let det = m.determinant();
        if res > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidInput(format!(
                "not a rotation: ‖RᵀR − I‖ = {res:e}, det = {det}"
            )));
        }
        Ok(Rotation { m, compositions: 0 })
    }

    /// Wraps a matrix known to be a rotation up to round-off.
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation { m, compositions: 0 }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.m
    }

    pub fn transpose(&self) -> Rotation {
        Rotation {
            m: self.m.transpose(),
            compositions: self.compositions,
        }
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        let count = self.compositions.max(other.compositions) + 1;
        let m = self.m * other.m;
        if count >= REORTHO_EVERY || orthonormality_residual(&m) > REORTHO_RESIDUAL {
            Rotation {
                m: orthonormalize(&m),
                compositions: 0,
            }
        } else {
            Rotation { m, compositions: count }
        }
    }

    pub fn rotate(&self, x: &Vec3) -> Vec3 {
        self.m * *x
    }

    pub fn orthonormality_residual(&self) -> f64 {
        orthonormality_residual(&self.m)
    }
}

pub fn orthonormality_residual(m: &Mat3) -> f64 {
    (m.transpose() * *m - Mat3::identity()).frobenius_norm()
}

/// Nearest rotation to a near-orthonormal matrix: the polar factor
/// `M (MᵀM)^{-1/2}` via the Newton-Schulz inverse square-root iteration.
pub fn orthonormalize(m: &Mat3) -> Mat3 {
    let mut x = *m;
    for _ in 0..20 {
        let xtx = x.transpose() * x;
        if (xtx - Mat3::identity()).frobenius_norm() < 1e-15 {
            break;
        }
        x = x * (Mat3::identity() * 3.0 - xtx) * 0.5;
    }
    x
}

/// Angle-axis parametrization `I + sinθ u× + (1 − cosθ)(u×)²`.
pub fn angle_axis(theta: f64, u: &Vec3) -> Result<Rotation> {
    if (u.norm() - 1.0).abs() > ALGEBRA_TOL {
        return Err(Error::InvalidInput(format!(
            "angle_axis: axis must be unit length, got norm {}",
            u.norm()
        )));
    }
    let k = hat3(u);
    let m = Mat3::identity() + k * theta.sin() + (k * k) * (1.0 - theta.cos());
    Ok(Rotation::from_matrix_unchecked(m))
}

/// Rigid-body pose `T(R, p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub r: Rotation,
    pub p: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn new(r: Rotation, p: Vec3) -> Self {
        Pose { r, p }
    }

    pub fn identity() -> Self {
        Pose {
            r: Rotation::identity(),
            p: Vec3::zeros(),
        }
    }

    pub fn from_translation(p: Vec3) -> Self {
        Pose {
            r: Rotation::identity(),
            p,
        }
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Pose { r, p: Vec3::zeros() }
    }

    /// Parses a homogeneous matrix; the bottom row must be `(0, 0, 0, 1)`.
    pub fn from_matrix(m: &Mat4) -> Result<Self> {
        let bottom = m.row(3);
        if (bottom - Vec4::new([0.0, 0.0, 0.0, 1.0])).max_abs() > ALGEBRA_TOL {
            return Err(Error::InvalidInput("pose matrix bottom row must be (0,0,0,1)".into()));
        }
        Ok(Pose {
            r: Rotation::new(top_left(m))?,
            p: top_right(m),
        })
    }

    pub fn matrix(&self) -> Mat4 {
        assemble4(self.r.matrix(), &self.p, &Vec3::zeros(), 1.0)
    }

    pub fn rotation(&self) -> &Mat3 {
        self.r.matrix()
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            r: self.r.compose(&other.r),
            p: self.r.rotate(&other.p) + self.p,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.r.transpose();
        Pose {
            p: -rt.rotate(&self.p),
            r: rt,
        }
    }

    /// `g r` for a homogeneous vector.
    pub fn act(&self, x: &HomVec4) -> HomVec4 {
        HomVec4 {
            v: self.r.rotate(&x.v) + self.p * x.s,
            s: x.s,
        }
    }

    /// `‖I₄ − g‖_F`.
    pub fn dist_identity(&self) -> f64 {
        dist_identity(self)
    }

    pub fn is_finite(&self) -> bool {
        self.r.matrix().is_finite() && self.p.is_finite()
    }
}

/// Matrix of `Ad_g`: `[[R, 0], [p×R, R]]`.
pub fn adjoint(g: &Pose) -> Mat6 {
    let r = *g.rotation();
    Mat6::from_blocks(&r, &Mat3::zeros(), &(hat3(&g.p) * r), &r)
}

/// Matrix of the trace-adjoint `Ad*_g`: `[[Rᵀ, −Rᵀp×], [0, Rᵀ]]`.
pub fn adjoint_star(g: &Pose) -> Mat6 {
    let rt = g.rotation().transpose();
    Mat6::from_blocks(&rt, &(-(rt * hat3(&g.p))), &Mat3::zeros(), &rt)
}

pub fn dist_identity(g: &Pose) -> f64 {
    ((Mat3::identity() - *g.rotation()).inner(&(Mat3::identity() - *g.rotation()))
        + g.p.norm_squared())
    .sqrt()
}

/// Closed-form `exp((h ξ)^∧)`.
pub fn exp_se3(xi: &Vec6, h: f64) -> Pose {
    let phi = xi.angular() * h;
    let rho = xi.linear() * h;
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let (a, b, c) = if theta < SMALL_ANGLE {
        let t4 = theta2 * theta2;
        let t6 = t4 * theta2;
        (
            1.0 - theta2 / 6.0 + t4 / 120.0 - t6 / 5040.0,
            0.5 - theta2 / 24.0 + t4 / 720.0 - t6 / 40320.0,
            1.0 / 6.0 - theta2 / 120.0 + t4 / 5040.0 - t6 / 362880.0,
        )
    } else {
        let (s, co) = theta.sin_cos();
        (s / theta, (1.0 - co) / theta2, (theta - s) / (theta2 * theta))
    };
    let k = hat3(&phi);
    let k2 = k * k;
    let r = Mat3::identity() + k * a + k2 * b;
    let v = Mat3::identity() + k * b + k2 * c;
    Pose {
        r: Rotation::from_matrix_unchecked(r),
        p: v * rho,
    }
}

/// Lifts a 3-vector into a 4x4 column, used for homogeneous products.
pub fn vec4_of(v: &Vec3, s: f64) -> Vec4 {
    Vector([v[0], v[1], v[2], s])
}
