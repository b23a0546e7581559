//! Small dense helpers shared by the operators, solvers and verifications.

use nalgebra::{Complex, DMatrix};

pub type C64 = Complex<f64>;

/// Real representation of a complex matrix: each entry `a + ib` becomes the
/// 2x2 block `[[a, -b], [b, a]]`.
pub fn realify(c: &DMatrix<C64>) -> DMatrix<f64> {
    let (r, k) = c.shape();
    DMatrix::from_fn(2 * r, 2 * k, |i, j| {
        let z = c[(i / 2, j / 2)];
        match (i % 2, j % 2) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    })
}

/// Inverse of [`realify`]; reads the first column of every 2x2 block.
pub fn complexify(r: &DMatrix<f64>) -> DMatrix<C64> {
    let (rows, cols) = r.shape();
    DMatrix::from_fn(rows / 2, cols / 2, |i, j| {
        C64::new(r[(2 * i, 2 * j)], r[(2 * i + 1, 2 * j)])
    })
}

pub fn to_complex_vec(x: &[f64]) -> Vec<C64> {
    x.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()
}

pub fn from_complex_vec(z: &[C64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// `out = a * x` for a column-major matrix.
pub fn matvec(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.ncols(), x.len());
    debug_assert_eq!(a.nrows(), out.len());
    out.iter_mut().for_each(|v| *v = 0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for (o, &aij) in out.iter_mut().zip(a.column(j).iter()) {
            *o += aij * xj;
        }
    }
}

/// `out = aᵀ * y`.
pub fn matvec_t(a: &DMatrix<f64>, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.nrows(), y.len());
    debug_assert_eq!(a.ncols(), out.len());
    for (j, o) in out.iter_mut().enumerate() {
        *o = a.column(j).iter().zip(y).map(|(a, b)| a * b).sum();
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthogonal projection onto the affine set `{x : a x = y}`, built once per
/// matrix from a thin SVD and reused for every right-hand side.
///
/// Rank is decided relative to the largest singular value, so rank-deficient
/// matrices (duplicated rows, complex operators on real inputs) are handled.
#[derive(Debug, Clone)]
pub struct AffineProjector {
    /// Orthonormal basis of the row space, shape `cols x rank`.
    basis: DMatrix<f64>,
    /// Pseudo-inverse `a⁺`, shape `cols x rows`.
    pinv: DMatrix<f64>,
}

impl AffineProjector {
    pub fn new(a: &DMatrix<f64>, rel_tol: f64) -> Self {
        let (rows, cols) = a.shape();
        if rows == 0 || cols == 0 {
            return Self {
                basis: DMatrix::zeros(cols, 0),
                pinv: DMatrix::zeros(cols, rows),
            };
        }
        let svd = a.clone().svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let vt = svd.v_t.as_ref().expect("v_t requested");
        let sv = &svd.singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..sv.len())
            .filter(|&i| smax > 0.0 && sv[i] > rel_tol * smax)
            .collect();
        let mut basis = DMatrix::zeros(cols, keep.len());
        let mut pinv = DMatrix::zeros(cols, rows);
        for (c, &i) in keep.iter().enumerate() {
            let vi = vt.row(i).transpose();
            basis.set_column(c, &vi);
            pinv.ger(1.0 / sv[i], &vi, &u.column(i), 1.0);
        }
        Self { basis, pinv }
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Minimum-norm least-squares solution `a⁺ y`.
    pub fn particular(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.pinv.nrows()];
        matvec(&self.pinv, y, &mut out);
        out
    }

    /// Projects `v` onto the null space of `a`, in place.
    pub fn project_null(&self, v: &mut [f64], scratch: &mut Vec<f64>) {
        scratch.resize(self.rank(), 0.0);
        matvec_t(&self.basis, v, scratch);
        for (c, &s) in scratch.iter().enumerate() {
            for (vi, q) in v.iter_mut().zip(self.basis.column(c).iter()) {
                *vi -= s * q;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn realify_roundtrip_and_action() {
        let c = DMatrix::from_row_slice(2, 2, &[
            C64::new(1.0, 2.0),
            C64::new(0.0, -1.0),
            C64::new(3.0, 0.5),
            C64::new(-2.0, 0.0),
        ]);
        let r = realify(&c);
        assert_eq!(complexify(&r), c);
        let z = [C64::new(0.3, -0.7), C64::new(1.1, 0.2)];
        let want = &c * DVector::from_column_slice(&z);
        let mut got = vec![0.0; 4];
        matvec(&r, &from_complex_vec(&z), &mut got);
        let got = to_complex_vec(&got);
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).norm() < 1e-14);
        }
    }

    #[test]
    fn row_space_of_duplicated_rows() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 0.0, 1.0, 1.0]);
        let y = [1.0, 1.0, 2.0];
        let proj = AffineProjector::new(&a, 1e-10);
        assert_eq!(proj.rank(), 2);
        let xp = proj.particular(&y);
        let mut ax = vec![0.0; 3];
        matvec(&a, &xp, &mut ax);
        for (p, q) in ax.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
        let mut v = vec![0.3, -1.0, 2.0];
        proj.project_null(&mut v, &mut Vec::new());
        matvec(&a, &v, &mut ax);
        assert!(ax.iter().all(|r| r.abs() < 1e-12));
    }
}
