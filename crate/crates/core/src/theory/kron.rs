//! Block Kronecker (Tracy–Singh) product and block vectorization.
//!
//! Matrices are partitioned into square `l×l` blocks. `bvec` lists the blocks
//! row-block-major and each block row-major:
//! `bvec(M)[((r·P + c)·l + a)·l + b] = M[r·l + a, c·l + b]` for a `P×P` block grid.
//! With this layout `bvec(XᵀΣY) = (Xᵀ ⊗_b Yᵀ)·bvec(Σ)`, where block `((i,k),(j,m))`
//! of `A ⊗_b B` is the ordinary Kronecker product `A_ij ⊗ B_km`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ordinary Kronecker product.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Tracy–Singh product of two matrices partitioned into `l×l` blocks.
pub fn block_kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>, l: usize) -> Result<DMatrix<f64>> {
    let parts = |m: &DMatrix<f64>| -> Result<(usize, usize)> {
        if l == 0 || m.nrows() % l != 0 || m.ncols() % l != 0 {
            return Err(Error::Dimension(format!(
                "{}×{} matrix is not partitioned into {l}×{l} blocks",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok((m.nrows() / l, m.ncols() / l))
    };
    let (pa, qa) = parts(a)?;
    let (pb, qb) = parts(b)?;
    let l2 = l * l;
    let mut out = DMatrix::zeros(pa * pb * l2, qa * qb * l2);
    for i in 0..pa {
        for j in 0..qa {
            let aij = a.view((i * l, j * l), (l, l));
            if aij.iter().all(|&x| x == 0.0) {
                continue;
            }
            for k in 0..pb {
                for m in 0..qb {
                    let bkm = b.view((k * l, m * l), (l, l));
                    let r0 = (i * pb + k) * l2;
                    let c0 = (j * qb + m) * l2;
                    for (ar, ac) in (0..l).flat_map(|x| (0..l).map(move |y| (x, y))) {
                        let s = aij[(ar, ac)];
                        if s == 0.0 {
                            continue;
                        }
                        for br in 0..l {
                            for bc in 0..l {
                                out[(r0 + ar * l + br, c0 + ac * l + bc)] = s * bkm[(br, bc)];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Position of entry `(a, b)` of block `(r, c)` inside a bvec of a `p×p` block grid.
#[inline]
pub fn bvec_index(p: usize, l: usize, r: usize, c: usize, a: usize, b: usize) -> usize {
    ((r * p + c) * l + a) * l + b
}

/// Block vectorization of a square matrix with `l×l` blocks.
pub fn bvec(m: &DMatrix<f64>, l: usize) -> Result<DVector<f64>> {
    if l == 0 || !m.is_square() || m.nrows() % l != 0 {
        return Err(Error::Dimension(format!(
            "{}×{} matrix cannot be block-vectorized with block size {l}",
            m.nrows(),
            m.ncols()
        )));
    }
    let p = m.nrows() / l;
    let mut v = DVector::zeros(m.len());
    for r in 0..p {
        for c in 0..p {
            for a in 0..l {
                for b in 0..l {
                    v[bvec_index(p, l, r, c, a, b)] = m[(r * l + a, c * l + b)];
                }
            }
        }
    }
    Ok(v)
}

/// Inverse of [`bvec`].
pub fn bvec_inv(v: &DVector<f64>, l: usize) -> Result<DMatrix<f64>> {
    let n = (v.len() as f64).sqrt().round() as usize;
    if l == 0 || n * n != v.len() || n % l != 0 {
        return Err(Error::Dimension(format!(
            "vector of length {} is not the bvec of a square matrix with {l}×{l} blocks",
            v.len()
        )));
    }
    let p = n / l;
    let mut m = DMatrix::zeros(n, n);
    for r in 0..p {
        for c in 0..p {
            for a in 0..l {
                for b in 0..l {
                    m[(r * l + a, c * l + b)] = v[bvec_index(p, l, r, c, a, b)];
                }
            }
        }
    }
    Ok(m)
}
