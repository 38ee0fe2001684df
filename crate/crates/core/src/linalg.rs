//! Fixed-size dense vectors and matrices.
//!
//! Only the handful of shapes the observers need (3, 4 and 6) are ever
//! instantiated, so everything is stack allocated and `Copy`.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

/// Column vector with `N` entries.
#[derive(Clone, Copy, PartialEq)]
pub struct Vector<const N: usize>(pub [f64; N]);

/// Row-major `R x C` matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct Matrix<const R: usize, const C: usize>(pub [[f64; C]; R]);

pub type Vec3 = Vector<3>;
pub type Vec4 = Vector<4>;
pub type Vec6 = Vector<6>;
pub type Mat3 = Matrix<3, 3>;
pub type Mat4 = Matrix<4, 4>;
pub type Mat6 = Matrix<6, 6>;

impl<const N: usize> Vector<N> {
    pub const fn new(data: [f64; N]) -> Self {
        Vector(data)
    }

    pub const fn zeros() -> Self {
        Vector([0.0; N])
    }

    /// Unit vector along axis `i`.
    pub fn unit(i: usize) -> Self {
        let mut v = Self::zeros();
        v.0[i] = 1.0;
        v
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn normalized(&self) -> Self {
        *self * (1.0 / self.norm())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn outer<const M: usize>(&self, other: &Vector<M>) -> Matrix<N, M> {
        let mut m = Matrix::<N, M>::zeros();
        for i in 0..N {
            for j in 0..M {
                m.0[i][j] = self.0[i] * other.0[j];
            }
        }
        m
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Vec3 {
    pub fn cross(&self, o: &Vec3) -> Vec3 {
        let [a1, a2, a3] = self.0;
        let [b1, b2, b3] = o.0;
        Vector([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
    }
}

impl Vec6 {
    /// Stacks an angular and a linear part into a twist coordinate vector.
    pub fn from_parts(omega: Vec3, v: Vec3) -> Self {
        let [a, b, c] = omega.0;
        let [d, e, f] = v.0;
        Vector([a, b, c, d, e, f])
    }

    pub fn angular(&self) -> Vec3 {
        Vector([self.0[0], self.0[1], self.0[2]])
    }

    pub fn linear(&self) -> Vec3 {
        Vector([self.0[3], self.0[4], self.0[5]])
    }
}

impl<const N: usize> Default for Vector<N> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<const N: usize> fmt::Debug for Vector<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl<const N: usize> Index<usize> for Vector<N> {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl<const N: usize> IndexMut<usize> for Vector<N> {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl<const N: usize> Add for Vector<N> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl<const N: usize> AddAssign for Vector<N> {
    fn add_assign(&mut self, o: Self) {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a += b;
        }
    }
}

impl<const N: usize> Sub for Vector<N> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        self -= o;
        self
    }
}

impl<const N: usize> SubAssign for Vector<N> {
    fn sub_assign(&mut self, o: Self) {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a -= b;
        }
    }
}

impl<const N: usize> Neg for Vector<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const N: usize> Mul<f64> for Vector<N> {
    type Output = Self;
    fn mul(mut self, s: f64) -> Self {
        for a in self.0.iter_mut() {
            *a *= s;
        }
        self
    }
}

impl<const N: usize> Mul<Vector<N>> for f64 {
    type Output = Vector<N>;
    fn mul(self, v: Vector<N>) -> Vector<N> {
        v * self
    }
}

impl<const R: usize, const C: usize> Matrix<R, C> {
    pub const fn new(data: [[f64; C]; R]) -> Self {
        Matrix(data)
    }

    pub const fn zeros() -> Self {
        Matrix([[0.0; C]; R])
    }

    pub fn transpose(&self) -> Matrix<C, R> {
        let mut t = Matrix::<C, R>::zeros();
        for i in 0..R {
            for j in 0..C {
                t.0[j][i] = self.0[i][j];
            }
        }
        t
    }

    /// Trace inner product `tr(Aᵀ B)`.
    pub fn inner(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..R {
            for j in 0..C {
                s += self.0[i][j] * other.0[i][j];
            }
        }
        s
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|row| row.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flat_map(|r| r.iter()).all(|x| x.is_finite())
    }

    pub fn row(&self, i: usize) -> Vector<C> {
        Vector(self.0[i])
    }

    pub fn column(&self, j: usize) -> Vector<R> {
        let mut v = Vector::<R>::zeros();
        for i in 0..R {
            v.0[i] = self.0[i][j];
        }
        v
    }

    pub fn set_column(&mut self, j: usize, v: &Vector<R>) {
        for i in 0..R {
            self.0[i][j] = v.0[i];
        }
    }
}

impl<const N: usize> Matrix<N, N> {
    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(d: &Vector<N>) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = d.0[i];
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..N).map(|i| self.0[i][i]).sum()
    }

    pub fn diagonal(&self) -> Vector<N> {
        let mut d = Vector::<N>::zeros();
        for i in 0..N {
            d.0[i] = self.0[i][i];
        }
        d
    }

    /// Symmetric part `(A + Aᵀ)/2`.
    pub fn symmetric_part(&self) -> Self {
        (*self + self.transpose()) * 0.5
    }
}

impl Mat3 {
    pub fn from_columns(c0: &Vec3, c1: &Vec3, c2: &Vec3) -> Self {
        let mut m = Self::zeros();
        m.set_column(0, c0);
        m.set_column(1, c1);
        m.set_column(2, c2);
        m
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

impl Mat6 {
    /// Assembles `[[a, b], [c, d]]` from 3x3 blocks.
    pub fn from_blocks(a: &Mat3, b: &Mat3, c: &Mat3, d: &Mat3) -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = a.0[i][j];
                m.0[i][j + 3] = b.0[i][j];
                m.0[i + 3][j] = c.0[i][j];
                m.0[i + 3][j + 3] = d.0[i][j];
            }
        }
        m
    }
}

impl<const R: usize, const C: usize> Default for Matrix<R, C> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<const R: usize, const C: usize> fmt::Debug for Matrix<R, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl<const R: usize, const C: usize> Index<(usize, usize)> for Matrix<R, C> {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

impl<const R: usize, const C: usize> IndexMut<(usize, usize)> for Matrix<R, C> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[i][j]
    }
}

impl<const R: usize, const C: usize> Add for Matrix<R, C> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl<const R: usize, const C: usize> AddAssign for Matrix<R, C> {
    fn add_assign(&mut self, o: Self) {
        for i in 0..R {
            for j in 0..C {
                self.0[i][j] += o.0[i][j];
            }
        }
    }
}

impl<const R: usize, const C: usize> Sub for Matrix<R, C> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        for i in 0..R {
            for j in 0..C {
                self.0[i][j] -= o.0[i][j];
            }
        }
        self
    }
}

impl<const R: usize, const C: usize> Neg for Matrix<R, C> {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const R: usize, const C: usize> Mul<f64> for Matrix<R, C> {
    type Output = Self;
    fn mul(mut self, s: f64) -> Self {
        for row in self.0.iter_mut() {
            for a in row.iter_mut() {
                *a *= s;
            }
        }
        self
    }
}

impl<const R: usize, const C: usize> Mul<Matrix<R, C>> for f64 {
    type Output = Matrix<R, C>;
    fn mul(self, m: Matrix<R, C>) -> Matrix<R, C> {
        m * self
    }
}

impl<const R: usize, const C: usize, const K: usize> Mul<Matrix<C, K>> for Matrix<R, C> {
    type Output = Matrix<R, K>;
    fn mul(self, o: Matrix<C, K>) -> Matrix<R, K> {
        let mut out = Matrix::<R, K>::zeros();
        for i in 0..R {
            for k in 0..C {
                let a = self.0[i][k];
                for j in 0..K {
                    out.0[i][j] += a * o.0[k][j];
                }
            }
        }
        out
    }
}

impl<const R: usize, const C: usize> Mul<Vector<C>> for Matrix<R, C> {
    type Output = Vector<R>;
    fn mul(self, v: Vector<C>) -> Vector<R> {
        let mut out = Vector::<R>::zeros();
        for i in 0..R {
            out.0[i] = self.0[i].iter().zip(v.0.iter()).map(|(a, b)| a * b).sum();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_product_and_transpose() {
        let a = Matrix::<2, 3>::new([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let b = a * a.transpose();
        assert_eq!(b.0, [[14.0, 32.0], [32.0, 77.0]]);
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn cross_product_orientation() {
        let e1 = Vec3::unit(0);
        let e2 = Vec3::unit(1);
        assert_eq!(e1.cross(&e2), Vec3::unit(2));
        assert_eq!(e2.cross(&e1), -Vec3::unit(2));
    }

    #[test]
    fn determinant_and_trace() {
        let m = Mat3::new([[2.0, 0.0, 1.0], [0.0, 3.0, 0.0], [1.0, 0.0, 2.0]]);
        assert!((m.determinant() - 9.0).abs() < 1e-15);
        assert_eq!(m.trace(), 7.0);
    }

    #[test]
    fn inner_product_is_trace_of_at_b() {
        let a = Mat3::new([[1.0, 2.0, 0.0], [0.0, 1.0, 3.0], [4.0, 0.0, 1.0]]);
        let b = Mat3::new([[0.5, 1.0, 2.0], [1.0, 0.0, 1.0], [3.0, 1.0, 0.0]]);
        assert!((a.inner(&b) - (a.transpose() * b).trace()).abs() < 1e-14);
    }
}
