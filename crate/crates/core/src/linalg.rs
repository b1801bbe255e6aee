//! Dense small-matrix numerics shared by every other module.
//!
//! All matrices here are at most a few dozen rows, so the routines favour
//! robustness over speed: cyclic Jacobi for symmetric eigenproblems, an
//! unpivoted Cholesky that doubles as a positive-definiteness test, and a
//! Padé scaling-and-squaring matrix exponential.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute floor under every relative tolerance.
pub const ABS_FLOOR: f64 = 1e-14;
/// Slack allowed for non-strict (`<= 0`) matrix inequalities.
pub const NONSTRICT_SLACK: f64 = 1e-8;
/// Condition estimate above which [`inverse`] refuses.
pub const MAX_CONDITION: f64 = 1e12;

const JACOBI_TOL: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 100;

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.norm()
}

/// `‖a − b‖_F / max(‖b‖_F, ABS_FLOOR)`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(ABS_FLOOR)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn ensure_square(a: &DMatrix<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

/// Eigendecomposition `A = V diag(λ) Vᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Sorted descending.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal columns; the largest-magnitude entry of each column is positive.
    pub eigenvectors: DMatrix<f64>,
}

impl SymEig {
    pub fn max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        v * DMatrix::from_diagonal(&self.eigenvalues) * v.transpose()
    }

    /// Rebuilds `V f(Λ) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let d = self.eigenvalues.map(f);
        v * DMatrix::from_diagonal(&d) * v.transpose()
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input is symmetrized as `(A + Aᵀ)/2` first. Rotations stop once the
/// off-diagonal Frobenius norm drops below `1e-15·‖A‖_F` (floored at
/// [`ABS_FLOOR`]²), which is well inside the reconstruction tolerance.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<SymEig> {
    let n = ensure_square(a)?;
    let mut m = symmetrize(a);
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm();
    let target = (JACOBI_TOL * scale).max(ABS_FLOOR * ABS_FLOOR);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&m);
        if off <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let mut vec = v.column(i).into_owned();
        let pivot = vec
            .iter()
            .copied()
            .max_by(|x, y| x.abs().total_cmp(&y.abs()))
            .unwrap_or(1.0);
        if pivot < 0.0 {
            vec.neg_mut();
        }
        eigenvectors.set_column(col, &vec);
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

// Applies the rotation J(p,q,θ) as m ← Jᵀ m J and accumulates v ← v J.
fn rotate(m: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = m.nrows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Lower-triangular `L` with `P = L Lᵀ` and positive diagonal.
///
/// Fails with [`Error::NotPositiveDefinite`] on the first non-positive pivot.
pub fn cholesky(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = ensure_square(p)?;
    let p = symmetrize(p);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = p[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = p[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Symmetric positive square root `P^{1/2}`.
pub fn sym_sqrt(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(p)?;
    if eig.min() <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            index: p.nrows() - 1,
            pivot: eig.min(),
        });
    }
    Ok(eig.map(f64::sqrt))
}

fn norm_one(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse through LU with a 1-norm condition estimate.
pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(a)?;
    let inv = a.clone().lu().try_inverse().ok_or(Error::SingularMatrix {
        condition: f64::INFINITY,
    })?;
    let condition = norm_one(a) * norm_one(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::SingularMatrix { condition });
    }
    Ok(inv)
}

/// Solves `Aᵀ X + X A = R` through the vectorized Kronecker system.
pub fn lyapunov_solve(a: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = ensure_square(a)?;
    if r.nrows() != n || r.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "Lyapunov right-hand side is {}x{}, expected {n}x{n}",
            r.nrows(),
            r.ncols()
        )));
    }
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice(r.as_slice());
    let sol = k.lu().solve(&rhs).ok_or(Error::SingularMatrix {
        condition: f64::INFINITY,
    })?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularMatrix {
            condition: f64::INFINITY,
        });
    }
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// True when every eigenvalue of `a` has strictly negative real part.
pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    if a.nrows() == 0 {
        return true;
    }
    a.clone().complex_eigenvalues().iter().all(|z| z.re < 0.0)
}

// Diagonal Padé(6,6) numerator coefficients.
const PADE6: [f64; 7] = [
    1.0,
    0.5,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// `e^{A t}` by scaling and squaring with a diagonal Padé(6,6) core.
pub fn mat_exp(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = ensure_square(a)?;
    let at = a * t;
    let norm = norm_one(&at);
    if !norm.is_finite() {
        return Err(Error::DimensionMismatch("non-finite matrix in mat_exp".into()));
    }
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = at * 2f64.powi(-squarings);

    let eye = DMatrix::<f64>::identity(n, n);
    let mut num = eye.clone() * PADE6[0];
    let mut den = eye.clone() * PADE6[0];
    let mut power = eye;
    for (k, &c) in PADE6.iter().enumerate().skip(1) {
        power = &power * &x;
        num += &power * c;
        if k % 2 == 0 {
            den += &power * c;
        } else {
            den -= &power * c;
        }
    }
    let mut e = den
        .lu()
        .solve(&num)
        .ok_or(Error::SingularMatrix {
            condition: f64::INFINITY,
        })?;
    for _ in 0..squarings {
        e = &e * &e;
    }
    Ok(e)
}

/// Classification of a symmetric matrix by its extreme eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PositiveDefinite,
    PositiveSemidefinite,
    Indefinite,
    NegativeSemidefinite,
    NegativeDefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Definiteness {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Strict margin: definite means at least this far from zero.
    pub margin: f64,
    /// Slack allowed for the semidefinite classes.
    pub slack: f64,
}

impl Definiteness {
    pub fn is_negative_definite(&self) -> bool {
        self.max_eigenvalue <= -self.margin
    }

    pub fn is_negative_semidefinite(&self) -> bool {
        self.max_eigenvalue <= self.slack
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue >= self.margin
    }

    pub fn is_positive_semidefinite(&self) -> bool {
        self.min_eigenvalue >= -self.slack
    }

    /// Strongest class that applies, checked in the order PD, ND, PSD, NSD.
    pub fn verdict(&self) -> Verdict {
        if self.is_positive_definite() {
            Verdict::PositiveDefinite
        } else if self.is_negative_definite() {
            Verdict::NegativeDefinite
        } else if self.is_positive_semidefinite() {
            Verdict::PositiveSemidefinite
        } else if self.is_negative_semidefinite() {
            Verdict::NegativeSemidefinite
        } else {
            Verdict::Indefinite
        }
    }
}

/// Definiteness of a symmetric matrix with strict margin `margin` and the
/// default non-strict slack [`NONSTRICT_SLACK`].
pub fn definiteness(a: &DMatrix<f64>, margin: f64) -> Result<Definiteness> {
    definiteness_with_slack(a, margin, NONSTRICT_SLACK)
}

pub fn definiteness_with_slack(a: &DMatrix<f64>, margin: f64, slack: f64) -> Result<Definiteness> {
    let eig = sym_eig(a)?;
    Ok(Definiteness {
        min_eigenvalue: eig.min(),
        max_eigenvalue: eig.max(),
        margin,
        slack,
    })
}
