//! Small sparse and banded linear algebra for the finite-volume solves.

use crate::error::{Result, RomError};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut trip: Vec<(usize, usize, f64)>) -> Csr {
        trip.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((r, c)) {
                *vals.last_mut().expect("previous entry exists") += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn identity(n: usize) -> Csr {
        Csr::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).filter(|&(j, _)| j == c).map(|(_, v)| v).sum()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        for (r, yr) in y.iter_mut().enumerate().take(self.n_rows) {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut trip = Vec::with_capacity(self.vals.len());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        Csr::from_triplets(self.n_cols, self.n_rows, trip)
    }

    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.n_cols, other.n_rows, "inner dimensions differ");
        let mut trip = Vec::new();
        for r in 0..self.n_rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    trip.push((r, c, a * b));
                }
            }
        }
        Csr::from_triplets(self.n_rows, other.n_cols, trip)
    }

    /// alpha * self + beta * other
    pub fn add(&self, alpha: f64, other: &Csr, beta: f64) -> Csr {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut trip = Vec::with_capacity(self.vals.len() + other.vals.len());
        for r in 0..self.n_rows {
            trip.extend(self.row(r).map(|(c, v)| (r, c, alpha * v)));
            trip.extend(other.row(r).map(|(c, v)| (r, c, beta * v)));
        }
        Csr::from_triplets(self.n_rows, self.n_cols, trip)
    }

    /// Replaces row `r` by the identity row.
    pub fn pin_row(&self, r: usize) -> Csr {
        let mut trip = Vec::with_capacity(self.vals.len());
        for i in 0..self.n_rows {
            if i == r {
                trip.push((i, i, 1.0));
            } else {
                trip.extend(self.row(i).map(|(c, v)| (i, c, v)));
            }
        }
        Csr::from_triplets(self.n_rows, self.n_cols, trip)
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut lo, mut up) = (0, 0);
        for r in 0..self.n_rows {
            for (c, _) in self.row(r) {
                if c < r {
                    lo = lo.max(r - c);
                } else {
                    up = up.max(c - r);
                }
            }
        }
        (lo, up)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// LU factorisation of a banded matrix without pivoting. Intended for the
/// diagonally dominant and definite systems of the finite-volume solver.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    band: Vec<f64>,
}

impl BandedLu {
    pub fn factor(a: &Csr) -> Result<BandedLu> {
        if a.n_rows != a.n_cols {
            return Err(RomError::dim("banded LU needs a square matrix"));
        }
        let n = a.n_rows;
        let (lower, upper) = a.bandwidths();
        let w = lower + upper + 1;
        let mut band = vec![0.0; n * w];
        for r in 0..n {
            for (c, v) in a.row(r) {
                band[r * w + (c + lower - r)] += v;
            }
        }
        let scale = band.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let pivot = band[k * w + lower];
            if pivot.abs() <= 1e-14 * scale {
                return Err(RomError::data(format!("zero pivot at row {k} in banded LU")));
            }
            let jmax = (k + upper).min(n - 1);
            for i in (k + 1)..=(k + lower).min(n - 1) {
                let lik = band[i * w + (k + lower - i)] / pivot;
                if lik == 0.0 {
                    continue;
                }
                band[i * w + (k + lower - i)] = lik;
                for j in (k + 1)..=jmax {
                    band[i * w + (j + lower - i)] -= lik * band[k * w + (j + lower - k)];
                }
            }
        }
        Ok(BandedLu {
            n,
            lower,
            upper,
            band,
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, lo, up) = (self.n, self.lower, self.upper);
        let w = lo + up + 1;
        for i in 0..n {
            let mut s = b[i];
            for j in i.saturating_sub(lo)..i {
                s -= self.band[i * w + (j + lo - i)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in (i + 1)..=(i + up).min(n - 1) {
                s -= self.band[i * w + (j + lo - i)] * b[j];
            }
            b[i] = s / self.band[i * w + lo];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Jacobi-preconditioned BiCGSTAB. Returns the iteration count.
pub fn bicgstab(a: &Csr, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<usize> {
    let n = a.n_rows;
    let dinv: Vec<f64> = (0..n)
        .map(|i| {
            let d = a.get(i, i);
            if d != 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_iter {
        if dot(&r, &r).sqrt() <= rel_tol * bnorm {
            return Ok(it);
        }
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = dinv[i] * p[i];
        }
        a.matvec(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if dot(&s, &s).sqrt() <= rel_tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(it + 1);
        }
        for i in 0..n {
            z[i] = dinv[i] * s[i];
        }
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega == 0.0 {
            break;
        }
    }
    let mut ax = vec![0.0; n];
    a.matvec(x, &mut ax);
    let res = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    if res <= 10.0 * rel_tol * bnorm {
        Ok(max_iter)
    } else {
        Err(RomError::data(format!(
            "BiCGSTAB stalled with relative residual {:.3e}",
            res / bnorm
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, lo: f64, d: f64, up: f64) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, d));
            if i > 0 {
                t.push((i, i - 1, lo));
            }
            if i + 1 < n {
                t.push((i, i + 1, up));
            }
        }
        Csr::from_triplets(n, n, t)
    }

    #[test]
    fn banded_lu_solves_nonsymmetric_system() {
        let a = tridiag(50, -1.3, 4.0, -0.6);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x_true);
        let lu = BandedLu::factor(&a).unwrap();
        let x = lu.solve(&b);
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn bicgstab_matches_direct_solve() {
        let a = tridiag(80, -1.0, 3.0, -0.4);
        let b: Vec<f64> = (0..80).map(|i| 1.0 + (i % 7) as f64).collect();
        let direct = BandedLu::factor(&a).unwrap().solve(&b);
        let mut x = vec![0.0; 80];
        bicgstab(&a, &b, &mut x, 1e-14, 200).unwrap();
        for (p, q) in x.iter().zip(&direct) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn csr_products_and_transpose() {
        let a = Csr::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0), (0, 0, 1.0)]);
        assert_eq!(a.get(0, 0), 2.0);
        let at = a.transpose();
        let p = a.matmul(&at).to_dense();
        let d = a.to_dense();
        assert_eq!(p, &d * d.transpose());
        assert!(BandedLu::factor(&Csr::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)])).is_err());
    }
}
