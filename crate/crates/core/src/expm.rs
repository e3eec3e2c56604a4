//! Dense matrix exponential by Padé(13) scaling and squaring.
//!
//! Matrices are row-major `n * n` slices.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Norm threshold below which Padé(13) is accurate to double precision.
const THETA13: f64 = 5.371920351148152;

pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        for l in 0..k {
            let x = a[i * k + l];
            if x == T::zero() {
                continue;
            }
            let row = &b[l * m..(l + 1) * m];
            for (o, &y) in out[i * m..(i + 1) * m].iter_mut().zip(row) {
                *o += x * y;
            }
        }
    }
    out
}

fn one_norm<T: Scalar>(a: &[T], n: usize) -> T {
    (0..n).map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<T>()).fold(T::zero(), T::max)
}

/// Solves `A X = B` in place (B is `n * m`) with partial pivoting.
fn solve<T: Scalar>(mut a: Vec<T>, b: &mut [T], n: usize, m: usize) -> Result<()> {
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| a[x * n + c].abs().partial_cmp(&a[y * n + c].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(c);
        if a[p * n + c] == T::zero() || !a[p * n + c].is_finite() {
            return Err(Error::Overflow("singular Padé denominator".into()));
        }
        if p != c {
            for j in 0..n {
                a.swap(p * n + j, c * n + j);
            }
            for j in 0..m {
                b.swap(p * m + j, c * m + j);
            }
        }
        let piv = a[c * n + c];
        for r in c + 1..n {
            let f = a[r * n + c] / piv;
            if f == T::zero() {
                continue;
            }
            for j in c..n {
                let v = a[c * n + j];
                a[r * n + j] -= f * v;
            }
            for j in 0..m {
                let v = b[c * m + j];
                b[r * m + j] -= f * v;
            }
        }
    }
    for c in (0..n).rev() {
        let piv = a[c * n + c];
        for j in 0..m {
            let mut s = b[c * m + j];
            for k in c + 1..n {
                s -= a[c * n + k] * b[k * m + j];
            }
            b[c * m + j] = s / piv;
        }
    }
    Ok(())
}

/// `e^A` for a dense `n * n` matrix.
pub fn expm<T: Scalar>(a: &[T], n: usize) -> Result<Vec<T>> {
    if a.len() != n * n {
        return Err(Error::DimensionMismatch(format!("expected {} entries, got {}", n * n, a.len())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("matrix exponential of a non-finite matrix".into()));
    }
    let norm = one_norm(a, n).f64();
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = T::lit(2f64.powi(-s));
    let a: Vec<T> = a.iter().map(|&x| x * scale).collect();
    let b: Vec<T> = PADE13.iter().map(|&c| T::lit(c)).collect();
    let a2 = matmul(&a, &a, n, n, n);
    let a4 = matmul(&a2, &a2, n, n, n);
    let a6 = matmul(&a4, &a2, n, n, n);
    let eye = |i: usize| if i % (n + 1) == 0 { T::one() } else { T::zero() };
    let comb = |c6: T, c4: T, c2: T, c0: T| -> Vec<T> {
        (0..n * n).map(|i| c6 * a6[i] + c4 * a4[i] + c2 * a2[i] + c0 * eye(i)).collect()
    };
    let inner_u = comb(b[13], b[11], b[9], T::zero());
    let mut u_pre = matmul(&a6, &inner_u, n, n, n);
    for (x, y) in u_pre.iter_mut().zip(comb(b[7], b[5], b[3], b[1])) {
        *x += y;
    }
    let u = matmul(&a, &u_pre, n, n, n);
    let inner_v = comb(b[12], b[10], b[8], T::zero());
    let mut v = matmul(&a6, &inner_v, n, n, n);
    for (x, y) in v.iter_mut().zip(comb(b[6], b[4], b[2], b[0])) {
        *x += y;
    }
    let den: Vec<T> = v.iter().zip(&u).map(|(&x, &y)| x - y).collect();
    let mut r: Vec<T> = v.iter().zip(&u).map(|(&x, &y)| x + y).collect();
    solve(den, &mut r, n, n)?;
    for _ in 0..s {
        r = matmul(&r, &r, n, n, n);
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Overflow("matrix exponential overflowed".into()));
    }
    Ok(r)
}

/// `e^{A t} V` with `V` dense `n * k`, returned row-major.
pub fn matrix_exponential_apply<T: Scalar>(a: &SparseMatrix<T>, t: T, v: &[T], k: usize) -> Result<Vec<T>> {
    let n = a.n_rows();
    if a.n_cols() != n || v.len() != n * k {
        return Err(Error::DimensionMismatch("exponential apply needs square A and n-row V".into()));
    }
    let dense: Vec<T> = a.to_dense().into_iter().flatten().map(|x| x * t).collect();
    let e = expm(&dense, n)?;
    Ok(matmul(&e, v, n, n, k))
}
