/// `C = alpha · op(A) · op(B) + beta · C` for row-major `A`, `B`, `C`.
///
/// `op(A)` is `m × k` and `op(B)` is `k × n`; `trans_a`/`trans_b` read the
/// stored matrices transposed.
#[allow(clippy::too_many_arguments)]
pub fn matmul(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `C = A·B + beta·C` on strided views: each operand is
/// `(slice, row_stride, col_stride)` with element `(i, j)` at `i·rs + j·cs`.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], usize, usize),
    b: (&[f64], usize, usize),
    c: (&mut [f64], usize, usize),
    beta: f64,
) {
    let reach = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 { 0 } else { (rows - 1) * rs + (cols - 1) * cs + 1 }
    };
    assert!(a.0.len() >= reach(m, k, a.1, a.2));
    assert!(b.0.len() >= reach(k, n, b.1, b.2));
    assert!(c.0.len() >= reach(m, n, c.1, c.2));
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.0.as_mut_ptr(),
            c.1 as isize,
            c.2 as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_products() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3x2
        let mut c = [0.0; 4];
        matmul(2, 3, 2, 1.0, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // Aᵀ (3x2) · A (2x3)... use Aᵀ·[1,1]ᵀ as 3x1
        let ones = [1.0, 1.0];
        let mut d = [0.0; 3];
        matmul(3, 2, 1, 1.0, &a, true, &ones, false, 0.0, &mut d);
        assert_eq!(d, [5.0, 7.0, 9.0]);
        let mut e = [1.0; 4];
        matmul(2, 3, 2, 1.0, &a, false, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0], true, 1.0, &mut e);
        // Bᵀ stored as 2x3 rows [1,0,1],[0,1,1]
        assert_eq!(e, [1.0 + 4.0, 1.0 + 5.0, 1.0 + 10.0, 1.0 + 11.0]);
    }
}
