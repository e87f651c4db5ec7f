//! Row-major dense helpers. Loops run in a fixed order so results are
//! bit-reproducible.

/// `a (n×k) · b (k×m)`.
pub(crate) fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    debug_assert_eq!((a.len(), b.len()), (n * k, k * m));
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            for (o, bv) in row.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `dst (k×m) += aᵀ · b` for `a (n×k)`, `b (n×m)`.
pub(crate) fn acc_at_b(dst: &mut [f64], a: &[f64], b: &[f64], n: usize, k: usize, m: usize) {
    debug_assert_eq!((dst.len(), a.len(), b.len()), (k * m, n * k, n * m));
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            for (d, bv) in dst[p * m..(p + 1) * m].iter_mut().zip(brow) {
                *d += av * bv;
            }
        }
    }
}

/// `a (n×m) · bᵀ` for `b (k×m)`, giving `n×k`.
pub(crate) fn matmul_bt(a: &[f64], b: &[f64], n: usize, m: usize, k: usize) -> Vec<f64> {
    debug_assert_eq!((a.len(), b.len()), (n * m, k * m));
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        for p in 0..k {
            out[i * k + p] = dot(arow, &b[p * m..(p + 1) * m]);
        }
    }
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [1.0, 0.0, -1.0, 2.0, 0.5, 1.0]; // 3×2
        assert_eq!(matmul(&a, &b, 2, 3, 2), [0.5, 7.0, 2.0, 16.0]);
        // bᵀ as a 2×3 matrix gives the same product through matmul_bt.
        let bt = [1.0, -1.0, 0.5, 0.0, 2.0, 1.0];
        assert_eq!(matmul_bt(&a, &bt, 2, 3, 2), [0.5, 7.0, 2.0, 16.0]);
        let mut g = vec![0.0; 6];
        acc_at_b(&mut g, &a, &[1.0, 1.0, 1.0, 1.0], 2, 3, 2);
        assert_eq!(g, [5.0, 5.0, 7.0, 7.0, 9.0, 9.0]);
    }
}
