//! Dense kernels used in the hot loop of the propagator.
//!
//! Matrices are `nalgebra::DMatrix<f64>` (column-major). The inversion below
//! works column by column so every inner loop is a contiguous axpy.

use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::math::abs;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("matrix is numerically singular (pivot {pivot:e} at column {column})")]
pub struct Singular {
    pub column: usize,
    pub pivot: f64,
}

/// Scratch space reused between inversions of equally sized matrices.
#[derive(Debug, Default, Clone)]
pub struct InvertWorkspace {
    swaps: Vec<usize>,
}

/// In-place Gauss-Jordan inversion with column pivoting.
pub fn invert_in_place(a: &mut DMatrix<f64>, ws: &mut InvertWorkspace) -> Result<(), Singular> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "inverse of a non-square matrix");
    ws.swaps.clear();
    let data = a.as_mut_slice();

    for k in 0..n {
        // pivot search along row k
        let mut p = k;
        let mut best = abs(data[k * n + k]);
        for j in k + 1..n {
            let v = abs(data[j * n + k]);
            if v > best {
                best = v;
                p = j;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Singular { column: k, pivot: best });
        }
        if p != k {
            for i in 0..n {
                data.swap(k * n + i, p * n + i);
            }
        }
        ws.swaps.push(p);

        let inv = 1.0 / data[k * n + k];
        data[k * n + k] = 1.0;
        for v in &mut data[k * n..(k + 1) * n] {
            *v *= inv;
        }

        let (before, rest) = data.split_at_mut(k * n);
        let (pivot_col, after) = rest.split_at_mut(n);
        for col in before.chunks_exact_mut(n).chain(after.chunks_exact_mut(n)) {
            let f = col[k];
            if f == 0.0 {
                continue;
            }
            col[k] = 0.0;
            for (c, &pk) in col.iter_mut().zip(pivot_col.iter()) {
                *c -= f * pk;
            }
        }
    }

    // undo the column exchanges as row exchanges of the inverse
    for k in (0..n).rev() {
        let p = ws.swaps[k];
        if p != k {
            for j in 0..n {
                data.swap(j * n + k, j * n + p);
            }
        }
    }
    Ok(())
}

/// Symmetrise in place, `a <- (a + a^T) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Eigen-decomposition of a real symmetric matrix with eigenvalues ascending.
///
/// Each eigenvector is fixed in sign so that its largest component is
/// positive, which keeps channel transforms reproducible between runs.
pub fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), m);
    }
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut big = 0;
        for i in 0..n {
            if abs(col[i]) > abs(col[big]) + 1e-12 {
                big = i;
            }
        }
        let s = if col[big] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, dst)] = s * col[i];
        }
    }
    (values, vectors)
}
