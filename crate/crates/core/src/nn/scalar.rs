use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating-point element type: `f64` for gradient checks, `f32` for training.
pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + DivAssign + Sum + Default + Debug + Send + Sync + 'static
{
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;

    /// `C = alpha * A B + beta * C` on strided row-major views.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and `m x n`
    /// views, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
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
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(
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
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
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
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// A row-major matrix view: `rows x cols` starting at `offset` with the given
/// row stride, optionally read transposed.
#[derive(Debug, Clone, Copy)]
pub struct View {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub stride: usize,
    pub trans: bool,
}

impl View {
    pub fn full(rows: usize, cols: usize) -> Self {
        View {
            offset: 0,
            rows,
            cols,
            stride: cols,
            trans: false,
        }
    }

    pub fn t(self) -> Self {
        View {
            trans: !self.trans,
            ..self
        }
    }

    fn shape(&self) -> (usize, usize) {
        if self.trans {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.trans {
            (1, self.stride as isize)
        } else {
            (self.stride as isize, 1)
        }
    }

    fn last(&self) -> usize {
        self.offset + (self.rows.max(1) - 1) * self.stride + self.cols
    }
}

/// `c[cv] = a[av] * b[bv] + beta * c[cv]`. Panics on shape mismatch or
/// out-of-bounds views.
pub fn gemm<T: Scalar>(a: &[T], av: View, b: &[T], bv: View, beta: T, c: &mut [T], cv: View) {
    let (m, k) = av.shape();
    let (k2, n) = bv.shape();
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!(cv.shape(), (m, n), "output shape mismatch");
    assert!(!cv.trans);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for v in &mut c[cv.offset + i * cv.stride..][..n] {
                *v = *v * beta;
            }
        }
        return;
    }
    assert!(av.last() <= a.len() && bv.last() <= b.len() && cv.last() <= c.len());
    let (rsa, csa) = av.strides();
    let (rsb, csb) = bv.strides();
    // SAFETY: bounds checked above; `c` is a distinct mutable slice.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr().add(av.offset),
            rsa,
            csa,
            b.as_ptr().add(bv.offset),
            rsb,
            csb,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.stride as isize,
            1,
        )
    }
}
