//! Small dense symmetric kernels: Cholesky with a relative pivot threshold,
//! rank-revealing pivoted Cholesky, triangular solves.
//!
//! Matrices are row-major `Vec<T>` of size `dim × dim`. Dimensions here are
//! model sizes (at most 64), so nothing is blocked or vectorised.

use crate::scalar::Real;

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    dim: usize,
    l: Vec<T>,
}

/// Column at which factorization met a pivot below the relative tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NotPositiveDefinite {
    pub column: usize,
}

impl<T: Real> Cholesky<T> {
    /// Factors `a`; a pivot below `rel_tol × max diag(a)` is rejected.
    pub fn factor(a: &[T], dim: usize, rel_tol: T) -> Result<Self, NotPositiveDefinite> {
        assert_eq!(a.len(), dim * dim);
        let max_diag = (0..dim).map(|i| a[i * dim + i]).fold(T::zero(), T::max);
        let floor = rel_tol * max_diag;
        let mut l = vec![T::zero(); dim * dim];
        for j in 0..dim {
            let mut d = a[j * dim + j];
            for k in 0..j {
                d -= l[j * dim + k] * l[j * dim + k];
            }
            if !(d > floor) || !d.is_finite() {
                return Err(NotPositiveDefinite { column: j });
            }
            let djj = d.sqrt();
            l[j * dim + j] = djj;
            for i in (j + 1)..dim {
                let mut s = a[i * dim + j];
                for k in 0..j {
                    s -= l[i * dim + k] * l[j * dim + k];
                }
                l[i * dim + j] = s / djj;
            }
        }
        Ok(Self { dim, l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ln |A|`; zero for the empty factorization.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim).map(|i| two * self.l[i * self.dim + i].ln()).sum()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.dim);
        let n = self.dim;
        let mut y = b.to_vec();
        for i in 0..n {
            let s = y[i] - dot(&self.l[i * n..i * n + i], &y[..i]);
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for (k, &yk) in y.iter().enumerate().skip(i + 1) {
                s -= self.l[k * n + i] * yk;
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// `A⁻¹`, row-major.
    pub fn inverse(&self) -> Vec<T> {
        let n = self.dim;
        let mut inv = vec![T::zero(); n * n];
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        // symmetrize away rounding
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = (inv[i * n + j] + inv[j * n + i]) * T::lit(0.5);
                inv[i * n + j] = avg;
                inv[j * n + i] = avg;
            }
        }
        inv
    }
}

/// Numerical rank of a symmetric PSD matrix by diagonally pivoted Cholesky.
///
/// Elimination stops once the largest remaining pivot falls below
/// `rel_tol` times the largest initial diagonal entry.
pub fn pivoted_rank<T: Real>(a: &[T], dim: usize, rel_tol: T) -> usize {
    assert_eq!(a.len(), dim * dim);
    let mut w = a.to_vec();
    let max_diag = (0..dim).map(|i| w[i * dim + i]).fold(T::zero(), T::max);
    if !(max_diag > T::zero()) {
        return 0;
    }
    let floor = rel_tol * max_diag;
    let mut perm: Vec<usize> = (0..dim).collect();
    for k in 0..dim {
        // choose the largest remaining diagonal
        let (piv, &best) = perm[k..]
            .iter()
            .enumerate()
            .max_by(|x, y| {
                w[*x.1 * dim + *x.1]
                    .partial_cmp(&w[*y.1 * dim + *y.1])
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty");
        let d = w[best * dim + best];
        if !(d > floor) {
            return k;
        }
        perm.swap(k, k + piv);
        let root = d.sqrt();
        // Schur complement update on the remaining indices
        let rest: Vec<usize> = perm[k + 1..].to_vec();
        let col: Vec<T> = rest.iter().map(|&i| w[i * dim + best] / root).collect();
        for (a_idx, &i) in rest.iter().enumerate() {
            for (b_idx, &j) in rest.iter().enumerate() {
                w[i * dim + j] -= col[a_idx] * col[b_idx];
            }
        }
    }
    dim
}

/// `xᵀ A y` for row-major `A`.
pub fn quad_form<T: Real>(a: &[T], x: &[T], y: &[T]) -> T {
    let n = x.len();
    let mut s = T::zero();
    for i in 0..n {
        let mut row = T::zero();
        for j in 0..n {
            row += a[i * n + j] * y[j];
        }
        s += x[i] * row;
    }
    s
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
