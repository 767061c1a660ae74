//! Matrix quadratic objective `f(W) = 1/2 tr(W^T A W)` with closed-form
//! gradient `A W` and Hessian-vector product `A V`.
//!
//! Used by the idealized gradient-descent vs matrix-normalized dynamics and
//! as a spectral test problem: for `A = Q diag(lambda, 1) Q^T` and a 2x2
//! parameter, the Hessian spectrum is `{lambda, lambda, 1, 1}`.

use crate::error::Result;
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone)]
pub struct QuadraticModel {
    /// Symmetric positive definite curvature matrix.
    pub a: DenseMatrix,
    /// Parameter matrix, `a.rows() x param_cols`.
    pub w: DenseMatrix,
}

impl QuadraticModel {
    pub fn new(a: DenseMatrix, w: DenseMatrix) -> Self {
        assert_eq!(a.rows(), a.cols(), "curvature must be square");
        assert_eq!(a.cols(), w.rows(), "parameter rows must match curvature");
        Self { a, w }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn loss(&self) -> f64 {
        // 1/2 tr(W^T A W)
        let aw = self.a.matmul(&self.w);
        0.5 * self
            .w
            .data()
            .iter()
            .zip(aw.data())
            .map(|(x, y)| x * y)
            .sum::<f64>()
    }

    pub fn grad(&self) -> DenseMatrix {
        self.a.matmul(&self.w)
    }

    /// Hessian-vector product on the flattened (row-major) parameter.
    pub fn hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        let vm = DenseMatrix::new(self.w.rows(), self.w.cols(), v.to_vec())?;
        Ok(self.a.matmul(&vm).into_data())
    }

    /// Dense Hessian assembled explicitly, for brute-force checks.
    ///
    /// In row-major vec ordering the Hessian of `1/2 tr(W^T A W)` is
    /// `A (x) I` arranged so that `H[(i,p),(j,q)] = A[i,j] * [p == q]`.
    pub fn dense_hessian(&self) -> DenseMatrix {
        let n = self.a.rows();
        let m = self.w.cols();
        let dim = n * m;
        DenseMatrix::from_fn(dim, dim, |r, c| {
            let (i, p) = (r / m, r % m);
            let (j, q) = (c / m, c % m);
            if p == q {
                self.a.get(i, j)
            } else {
                0.0
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hvp_matches_dense_hessian() {
        let a = DenseMatrix::diag(&[4.0, 1.0]);
        let w = DenseMatrix::new(2, 2, vec![0.3, -0.2, 0.5, 0.9]).unwrap();
        let model = QuadraticModel::new(a, w);
        let h = model.dense_hessian();
        // e1 in flattened space hits the (0,0) entry of W; H e1 = 4 e1.
        let mut e1 = vec![0.0; 4];
        e1[0] = 1.0;
        let hv = model.hvp(&e1).unwrap();
        assert_eq!(hv, vec![4.0, 0.0, 0.0, 0.0]);
        // Against the explicit matrix on a generic direction.
        let v = vec![0.25, -1.0, 0.5, 2.0];
        let hv = model.hvp(&v).unwrap();
        for r in 0..4 {
            let expect: f64 = (0..4).map(|c| h.get(r, c) * v[c]).sum();
            assert!((hv[r] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_is_aw() {
        let a = DenseMatrix::diag(&[3.0, 2.0]);
        let w = DenseMatrix::new(2, 1, vec![1.0, -1.0]).unwrap();
        let model = QuadraticModel::new(a, w);
        assert_eq!(model.grad().data(), &[3.0, -2.0]);
        assert!((model.loss() - 0.5 * (3.0 + 2.0)).abs() < 1e-15);
    }
}
