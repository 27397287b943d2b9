//! Scalar abstraction: every numeric kernel in the crate is generic over
//! `Scalar`, implemented for f32 (training) and f64 (gradient verification).

use std::fmt::{Debug, Display};

/// Floating-point element type of a [`crate::Tensor`].
///
/// Bundles the `num_traits` bounds the kernels need plus a dense matrix
/// multiply hook so convolution and dense layers run on the same blocked
/// GEMM for both precisions.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssignOps
    + Copy
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    /// `c = alpha * a @ b + beta * c` for row-major `a: [m,k]`, `b: [k,n]`,
    /// `c: [m,n]`. Single-threaded and deterministic for fixed shapes.
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]);

    /// Same as [`Scalar::gemm`] but contracting with `b` transposed:
    /// `c = alpha * a @ b^T + beta * c` for `a: [m,k]`, `b: [n,k]`.
    fn gemm_bt(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]);

    /// `a^T @ b` variant: `c = alpha * a^T @ b + beta * c` for `a: [k,m]`,
    /// `b: [k,n]`.
    fn gemm_at(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]);

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar converts to f64")
    }
}

macro_rules! check_gemm_dims {
    ($m:ident, $k:ident, $n:ident, $a:ident, $b:ident, $c:ident) => {
        assert_eq!($a.len(), $m * $k, "gemm: lhs length");
        assert_eq!($b.len(), $k * $n, "gemm: rhs length");
        assert_eq!($c.len(), $m * $n, "gemm: out length");
    };
}

impl Scalar for f32 {
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        check_gemm_dims!(m, k, n, a, b, c);
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha,
                a.as_ptr(), k as isize, 1,
                b.as_ptr(), n as isize, 1,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    fn gemm_bt(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        assert_eq!(a.len(), m * k, "gemm_bt: lhs length");
        assert_eq!(b.len(), n * k, "gemm_bt: rhs length");
        assert_eq!(c.len(), m * n, "gemm_bt: out length");
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha,
                a.as_ptr(), k as isize, 1,
                b.as_ptr(), 1, k as isize,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    fn gemm_at(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        assert_eq!(a.len(), k * m, "gemm_at: lhs length");
        assert_eq!(b.len(), k * n, "gemm_at: rhs length");
        assert_eq!(c.len(), m * n, "gemm_at: out length");
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha,
                a.as_ptr(), 1, m as isize,
                b.as_ptr(), n as isize, 1,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

impl Scalar for f64 {
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        check_gemm_dims!(m, k, n, a, b, c);
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha,
                a.as_ptr(), k as isize, 1,
                b.as_ptr(), n as isize, 1,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    fn gemm_bt(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        assert_eq!(a.len(), m * k, "gemm_bt: lhs length");
        assert_eq!(b.len(), n * k, "gemm_bt: rhs length");
        assert_eq!(c.len(), m * n, "gemm_bt: out length");
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha,
                a.as_ptr(), k as isize, 1,
                b.as_ptr(), 1, k as isize,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    fn gemm_at(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        assert_eq!(a.len(), k * m, "gemm_at: lhs length");
        assert_eq!(b.len(), k * n, "gemm_at: rhs length");
        assert_eq!(c.len(), m * n, "gemm_at: out length");
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha,
                a.as_ptr(), 1, m as isize,
                b.as_ptr(), n as isize, 1,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_2x3x2() {
        // a: [2,3], b: [3,2]
        let a = [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0f32, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0f32; 4];
        f32::gemm(2, 3, 2, 1.0, &a, &b, 0.0, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn gemm_bt_matches_transposed_product() {
        // a: [2,3], b: [2,3] -> c = a @ b^T : [2,2]
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0f64, 0.0, 1.0, 0.0, 1.0, 0.0];
        let mut c = [0.0f64; 4];
        f64::gemm_bt(2, 3, 2, 1.0, &a, &b, 0.0, &mut c);
        assert_eq!(c, [4.0, 2.0, 10.0, 5.0]);
    }

    #[test]
    fn gemm_at_matches_transposed_product() {
        // a: [3,2] (interpreted transposed -> [2,3]), b: [3,2]
        let a = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0f64; 4];
        f64::gemm_at(2, 3, 2, 1.0, &a, &b, 0.0, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }
}
