//! Dense complex linear algebra on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Condition numbers above this trigger a warning.
pub const CONDITION_WARNING: f64 = 1e12;

/// LU factorization of a dense complex matrix.
pub struct DenseLu {
    lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    norm1: f64,
    dim: usize,
}

impl DenseLu {
    pub fn new(matrix: CMatrix, context: &str) -> Result<Self> {
        let dim = matrix.nrows();
        let norm1 = one_norm(&matrix);
        let lu = matrix.lu();
        let singular = (0..dim).any(|i| {
            let d = lu.u()[(i, i)];
            !(d.norm() > f64::MIN_POSITIVE * norm1.max(1.0)) || !d.re.is_finite()
        });
        if singular {
            return Err(Error::SingularMatrix {
                context: context.to_string(),
            });
        }
        Ok(Self { lu, norm1, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, rhs: &CVector) -> CVector {
        self.lu
            .solve(rhs)
            .expect("factorization was checked to be nonsingular")
    }

    fn solve_adjoint(&self, rhs: &CVector) -> CVector {
        // (PLU)^H x = b  <=>  U^H L^H P^T x = b
        let mut y = rhs.clone();
        let u = self.lu.u();
        let l = self.lu.l();
        u.adjoint().solve_lower_triangular_mut(&mut y);
        l.adjoint().solve_upper_triangular_mut(&mut y);
        self.lu.p().inv_permute_rows(&mut y);
        y
    }

    /// Hager–Higham estimate of the 1-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim;
        if n == 0 {
            return 1.0;
        }
        let mut x = CVector::from_element(n, Complex64::new(1.0 / n as f64, 0.0));
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            let norm_y: f64 = y.iter().map(|v| v.norm()).sum();
            if norm_y <= estimate {
                break;
            }
            estimate = norm_y;
            let sign = y.map(|v| {
                let r = v.norm();
                if r > 0.0 {
                    v / r
                } else {
                    Complex64::new(1.0, 0.0)
                }
            });
            let z = self.solve_adjoint(&sign);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            let zx: f64 = z.dotc(&x).re;
            if zmax <= zx {
                break;
            }
            x.fill(Complex64::new(0.0, 0.0));
            x[jmax] = Complex64::new(1.0, 0.0);
        }
        estimate * self.norm1
    }
}

fn one_norm(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigendecomposition `M = Q diag(λ) Q^{-1}` of a small complex matrix.
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: CMatrix,
    pub inverse: CMatrix,
    /// 2-norm condition number estimate of `vectors` (Frobenius product).
    pub condition: f64,
}

/// Eigendecomposition through the complex Schur form and back-substitution.
pub fn eigen_decompose(m: &CMatrix) -> Option<Eigen> {
    let n = m.nrows();
    let schur = nalgebra::Schur::new(m.clone());
    let (q, t) = schur.unpack();
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let scale = one_norm(m).max(f64::MIN_POSITIVE);
    let mut y = CMatrix::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * y[(j, k)];
            }
            let mut denom = t[(i, i)] - values[k];
            if denom.norm() < 1e-14 * scale {
                denom = Complex64::new(1e-14 * scale, 0.0);
            }
            y[(i, k)] = -acc / denom;
        }
    }
    let mut vectors = q * y;
    for k in 0..n {
        let norm = vectors.column(k).norm();
        vectors.column_mut(k).unscale_mut(norm);
    }
    let inverse = vectors.clone().try_inverse()?;
    let condition = vectors.norm() * inverse.norm();
    if !condition.is_finite() {
        return None;
    }
    Some(Eigen {
        values,
        vectors,
        inverse,
        condition,
    })
}
