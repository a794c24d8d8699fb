use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

/// Strided view of a row-major or transposed matrix operand.
#[derive(Debug, Clone, Copy)]
pub struct Strides {
    pub row: usize,
    pub col: usize,
}

impl Strides {
    pub const fn row_major(cols: usize) -> Self {
        Strides { row: cols, col: 1 }
    }

    /// Reads a row-major `[cols, rows]` buffer as its transpose.
    pub const fn transposed(stored_cols: usize) -> Self {
        Strides { row: 1, col: stored_cols }
    }

    fn extent(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * self.row + (cols - 1) * self.col + 1
        }
    }
}

/// Floating point element type of the tensor engine.
///
/// `f32` is the production type, `f64` is used for gradient verification.
pub trait Scalar: Float + Default + Debug + Sum + Send + Sync + 'static {
    /// `c = alpha * a @ b + beta * c` for an `[m, k] x [k, n]` product.
    ///
    /// # Safety
    /// The pointers with their strides must address valid `[m, k]`, `[k, n]`
    /// and `[m, n]` matrices, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f64(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn from_f64(x: f64) -> f32 {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn from_f64(x: f64) -> f64 {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Bounds-checked `c = alpha * a @ b + beta * c`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    sa: Strides,
    b: &[T],
    sb: Strides,
    beta: T,
    c: &mut [T],
    sc: Strides,
) {
    assert!(sa.extent(m, k) <= a.len(), "gemm: lhs out of bounds");
    assert!(sb.extent(k, n) <= b.len(), "gemm: rhs out of bounds");
    assert!(sc.extent(m, n) <= c.len(), "gemm: output out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: extents checked above; matrixmultiply handles k == 0 by scaling c.
    unsafe {
        T::raw_gemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            sa.row as isize,
            sa.col as isize,
            b.as_ptr(),
            sb.row as isize,
            sb.col as isize,
            beta,
            c.as_mut_ptr(),
            sc.row as isize,
            sc.col as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transposes() {
        // a: [2, 3], b stored as [4, 3] and read transposed -> [3, 4]
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.0).collect();
        let bt: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect();
        let mut c = vec![1.0; 8];
        gemm(2, 3, 4, 1.0, &a, Strides::row_major(3), &bt, Strides::transposed(3), 2.0, &mut c, Strides::row_major(4));
        for i in 0..2 {
            for j in 0..4 {
                let mut want = 2.0;
                for p in 0..3 {
                    want += a[i * 3 + p] * bt[j * 3 + p];
                }
                assert!((c[i * 4 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    #[should_panic]
    fn gemm_rejects_short_buffers() {
        let a = vec![0.0f32; 5];
        let mut c = vec![0.0f32; 4];
        gemm(2, 3, 2, 1.0, &a, Strides::row_major(3), &a, Strides::row_major(2), 0.0, &mut c, Strides::row_major(2));
    }
}
