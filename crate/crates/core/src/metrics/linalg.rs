/// `c = aᵀ b` for row-major `a: [n,p]`, `b: [n,q]`.
pub(crate) fn at_b(n: usize, p: usize, q: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; p * q];
    // SAFETY: strides address exactly the n*p, n*q and p*q elements.
    unsafe {
        matrixmultiply::dgemm(
            p,
            n,
            q,
            1.0,
            a.as_ptr(),
            1,
            p as isize,
            b.as_ptr(),
            q as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            q as isize,
            1,
        );
    }
    c
}

/// Solves `A X = B` for symmetric positive definite `A: [d,d]` and
/// `B: [d,q]` by Cholesky factorisation. `None` if `A` is not SPD.
pub(crate) fn cholesky_solve(d: usize, q: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    let mut x = b.to_vec();
    for c in 0..q {
        // forward: L y = b
        for i in 0..d {
            let mut s = x[i * q + c];
            for k in 0..i {
                s -= l[i * d + k] * x[k * q + c];
            }
            x[i * q + c] = s / l[i * d + i];
        }
        // backward: Lᵀ x = y
        for i in (0..d).rev() {
            let mut s = x[i * q + c];
            for k in i + 1..d {
                s -= l[k * d + i] * x[k * q + c];
            }
            x[i * q + c] = s / l[i * d + i];
        }
    }
    Some(x)
}
