//! Small matrix-multiply kernels over row-major slices, accumulating in f64.
//!
//! All kernels compute `out (+)= op(a) · op(b)` for an `m × n` output with
//! inner dimension `k`.

use super::Element;

/// `out[m×n] (+)= a[m×k] · b[k×n]`
pub(crate) fn gemm_nn<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T], accumulate: bool) {
    let mut row = vec![0.0f64; n];
    for i in 0..m {
        row.iter_mut().for_each(|v| *v = 0.0);
        let a_row = &a[i * k..(i + 1) * k];
        for (kk, &aik) in a_row.iter().enumerate() {
            let aik = aik.as_f64();
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for (acc, &bv) in row.iter_mut().zip(b_row) {
                *acc += aik * bv.as_f64();
            }
        }
        store(&row, &mut out[i * n..(i + 1) * n], accumulate);
    }
}

/// `out[m×n] (+)= a[m×k] · b[n×k]ᵀ`
pub(crate) fn gemm_nt<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T], accumulate: bool) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let dot: f64 = a_row.iter().zip(b_row).map(|(&x, &y)| x.as_f64() * y.as_f64()).sum();
            let o = &mut out[i * n + j];
            *o = if accumulate {
                T::from_f64(o.as_f64() + dot)
            } else {
                T::from_f64(dot)
            };
        }
    }
}

/// `out[m×n] (+)= a[k×m]ᵀ · b[k×n]`
pub(crate) fn gemm_tn<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T], accumulate: bool) {
    let mut acc = vec![0.0f64; m * n];
    for kk in 0..k {
        let a_row = &a[kk * m..(kk + 1) * m];
        let b_row = &b[kk * n..(kk + 1) * n];
        for (i, &aki) in a_row.iter().enumerate() {
            let aki = aki.as_f64();
            if aki == 0.0 {
                continue;
            }
            for (o, &bv) in acc[i * n..(i + 1) * n].iter_mut().zip(b_row) {
                *o += aki * bv.as_f64();
            }
        }
    }
    store(&acc, out, accumulate);
}

#[inline]
fn store<T: Element>(src: &[f64], dst: &mut [T], accumulate: bool) {
    if accumulate {
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = T::from_f64(d.as_f64() + s);
        }
    } else {
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = T::from_f64(s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for kk in 0..k {
                    out[i * n + j] += a[i * k + kk] * b[kk * n + j];
                }
            }
        }
        out
    }

    fn transpose(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; x.len()];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = x[r * cols + c];
            }
        }
        t
    }

    #[test]
    fn kernels_agree_with_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let want = naive(m, k, n, &a, &b);

        let mut out = vec![0.0; m * n];
        gemm_nn(m, k, n, &a, &b, &mut out, false);
        assert!(out.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12));

        let bt = transpose(k, n, &b);
        gemm_nt(m, k, n, &a, &bt, &mut out, false);
        assert!(out.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12));

        let at = transpose(m, k, &a);
        gemm_tn(m, k, n, &at, &b, &mut out, false);
        assert!(out.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12));

        gemm_tn(m, k, n, &at, &b, &mut out, true);
        assert!(out.iter().zip(&want).all(|(x, y)| (x - 2.0 * y).abs() < 1e-12));
    }
}
