//! Gaussian radial-basis interpolation of eddy-viscosity coefficients over
//! joint (μ, t) space.

use nalgebra::DMatrix;

use crate::error::{Result, RomError};
use crate::io::Bundle;

const MAX_CONDITION: f64 = 1e14;

pub fn gaussian_kernel(d: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(RomError::config(format!("kernel spread {gamma} must be positive")));
    }
    if !(d >= 0.0) {
        return Err(RomError::config(format!("distance {d} must be nonnegative")));
    }
    Ok((-gamma * d * d).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbfInterpolant {
    /// Normalized centers, one per row.
    pub centers: DMatrix<f64>,
    pub gamma: f64,
    pub lambda: f64,
    /// N_ν × N_s
    pub weights: DMatrix<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Per-coordinate min/max over the raw points.
fn ranges(points: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = points.first().map(Vec::len).ok_or_else(|| RomError::data("no centers"))?;
    if points.iter().any(|p| p.len() != d) {
        return Err(RomError::dim("centers have different dimensions"));
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    Ok((lo, hi))
}

fn normalize_with(p: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(lo.iter().zip(hi))
        .map(|(x, (a, b))| if b > a { (x - a) / (b - a) } else { x - a })
        .collect()
}

/// Min-max normalizes a point set to [0, 1] per coordinate; degenerate
/// coordinates are shifted only.
pub fn normalize(points: &[Vec<f64>]) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let (lo, hi) = ranges(points)?;
    let d = lo.len();
    let mut m = DMatrix::zeros(points.len(), d);
    for (r, p) in points.iter().enumerate() {
        for (k, v) in normalize_with(p, &lo, &hi).into_iter().enumerate() {
            m[(r, k)] = v;
        }
    }
    Ok((m, lo, hi))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn pairwise(points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut d = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let v = dist2(&points[i], &points[j]).sqrt();
            if v == 0.0 {
                return Err(RomError::data(format!("centers {i} and {j} coincide")));
            }
            d.push(v);
        }
    }
    Ok(d)
}

/// γ = 1/(2 d_med²) with d_med the median pairwise distance of the given
/// (already normalized) centers.
pub fn choose_spread(centers: &[Vec<f64>]) -> Result<f64> {
    if centers.len() < 2 {
        return Err(RomError::data("at least two centers are needed to choose a spread"));
    }
    let mut d = pairwise(centers)?;
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    Ok(1.0 / (2.0 * med * med))
}

/// Smallest γ of the form γ₀·2^k (k ≥ 0) whose kernel matrix has
/// condition number at most `max_condition`.
pub fn spread_for_condition(centers: &[Vec<f64>], gamma0: f64, max_condition: f64) -> Result<f64> {
    let mut gamma = gamma0;
    for _ in 0..80 {
        if condition(&kernel_matrix(centers, gamma)) <= max_condition {
            return Ok(gamma);
        }
        gamma *= 2.0;
    }
    Err(RomError::Conditioning { condition: f64::INFINITY })
}

pub fn kernel_matrix(centers: &[Vec<f64>], gamma: f64) -> DMatrix<f64> {
    let n = centers.len();
    DMatrix::from_fn(n, n, |i, j| (-gamma * dist2(&centers[i], &centers[j])).exp())
}

/// 2-norm condition number of a symmetric matrix.
fn condition(a: &DMatrix<f64>) -> f64 {
    let ev = a.clone().symmetric_eigenvalues();
    let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min > 0.0 && ev.iter().all(|v| *v > 0.0) {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Default regularization 1e-10·trace(Θ)/N; the kernel has unit diagonal so
/// this is 1e-10.
pub fn default_regularization() -> f64 {
    1e-10
}

/// Solves (Θ + λI) wᵢ = Lᵢ for every coefficient row of `l` (N_ν × N_s).
/// `gamma = None` picks the median-distance spread.
pub fn train(raw_centers: &[Vec<f64>], l: &DMatrix<f64>, gamma: Option<f64>, lambda: f64) -> Result<RbfInterpolant> {
    if l.ncols() != raw_centers.len() {
        return Err(RomError::dim(format!("{} centers but {} coefficient columns", raw_centers.len(), l.ncols())));
    }
    if !(lambda >= 0.0) {
        return Err(RomError::config(format!("regularization {lambda} must be nonnegative")));
    }
    let (cm, lo, hi) = normalize(raw_centers)?;
    let centers = rows(&cm);
    pairwise(&centers)?;
    let gamma = match gamma {
        Some(g) if g > 0.0 => g,
        Some(g) => return Err(RomError::config(format!("kernel spread {g} must be positive"))),
        None if centers.len() == 1 => 1.0,
        None => choose_spread(&centers)?,
    };
    let n = centers.len();
    let mut theta = kernel_matrix(&centers, gamma);
    for i in 0..n {
        theta[(i, i)] += lambda;
    }
    if lambda == 0.0 {
        let c = condition(&theta);
        if c > MAX_CONDITION {
            return Err(RomError::Conditioning { condition: c });
        }
    }
    let chol = theta.clone().cholesky().ok_or(RomError::Conditioning { condition: f64::INFINITY })?;
    let weights = chol.solve(&l.transpose()).transpose();
    if !weights.iter().all(|v| v.is_finite()) {
        return Err(RomError::Conditioning { condition: f64::INFINITY });
    }
    Ok(RbfInterpolant {
        centers: cm,
        gamma,
        lambda,
        weights,
        lo,
        hi,
    })
}

impl RbfInterpolant {
    pub fn n_outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_centers(&self) -> usize {
        self.centers.nrows()
    }

    /// Point in raw coordinates: μ followed by t.
    fn point(mu: &[f64], t: f64) -> Vec<f64> {
        let mut p = mu.to_vec();
        p.push(t);
        p
    }

    pub fn evaluate(&self, mu: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_outputs()];
        self.evaluate_into(mu, t, &mut out);
        out
    }

    /// Allocation-light evaluation for the online loop.
    pub fn evaluate_into(&self, mu: &[f64], t: f64, out: &mut [f64]) {
        let d = self.lo.len();
        debug_assert_eq!(mu.len() + 1, d);
        let mut x = [0.0f64; 8];
        for k in 0..d {
            let raw = if k < mu.len() { mu[k] } else { t };
            x[k] = if self.hi[k] > self.lo[k] { (raw - self.lo[k]) / (self.hi[k] - self.lo[k]) } else { raw - self.lo[k] };
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n_centers() {
            let mut r2 = 0.0;
            for k in 0..d {
                let e = x[k] - self.centers[(j, k)];
                r2 += e * e;
            }
            let phi = (-self.gamma * r2).exp();
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.weights[(i, j)] * phi;
            }
        }
    }

    /// True when the query lies outside the per-coordinate training ranges.
    pub fn is_extrapolation(&self, mu: &[f64], t: f64) -> bool {
        let p = Self::point(mu, t);
        let tol = 1e-12;
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .any(|(x, (a, b))| *x < a - tol * (1.0 + a.abs()) || *x > b + tol * (1.0 + b.abs()))
    }

    /// Like `is_extrapolation` but ignores the time coordinate.
    pub fn is_parameter_extrapolation(&self, mu: &[f64]) -> bool {
        let tol = 1e-12;
        mu.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .any(|(x, (a, b))| *x < a - tol * (1.0 + a.abs()) || *x > b + tol * (1.0 + b.abs()))
    }

    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::default();
        b.insert_matrix("centers", &self.centers);
        b.insert_matrix("weights", &self.weights);
        b.insert("gamma", vec![1], vec![self.gamma]);
        b.insert("lambda", vec![1], vec![self.lambda]);
        b.insert("lo", vec![self.lo.len()], self.lo.clone());
        b.insert("hi", vec![self.hi.len()], self.hi.clone());
        b
    }

    pub fn from_bundle(b: &Bundle) -> Result<RbfInterpolant> {
        let r = RbfInterpolant {
            centers: b.matrix("centers")?,
            weights: b.matrix("weights")?,
            gamma: b.scalar("gamma")?,
            lambda: b.scalar("lambda")?,
            lo: b.vector("lo")?,
            hi: b.vector("hi")?,
        };
        if r.weights.ncols() != r.centers.nrows() || r.lo.len() != r.centers.ncols() || r.hi.len() != r.lo.len() || r.lo.len() > 8 {
            return Err(RomError::Format("interpolant arrays have inconsistent shapes".into()));
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_values() {
        assert_eq!(gaussian_kernel(0.0, 3.0).unwrap(), 1.0);
        assert!((gaussian_kernel(1.0, 1.0).unwrap() - 0.367879441171442).abs() < 1e-15);
        let vals: Vec<f64> = (0..50).map(|i| gaussian_kernel(0.1 * i as f64, 0.7).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        assert!(gaussian_kernel(1.0, 0.0).is_err());
        assert!(gaussian_kernel(1.0, -2.0).is_err());
    }

    #[test]
    fn single_center_and_zero_data() {
        let c = vec![vec![0.5, 0.5, 1.0]];
        let l = DMatrix::from_column_slice(2, 1, &[3.0, -1.0]);
        let r = train(&c, &l, None, 0.0).unwrap();
        assert_eq!(r.weights, l);
        let z = train(&[vec![0.0, 0.0], vec![1.0, 0.0]], &DMatrix::zeros(3, 2), Some(1.0), 0.0).unwrap();
        assert_eq!(z.weights.amax(), 0.0);
        assert!(z.evaluate(&[0.3], 0.2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn three_random_centers_match_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // raw coordinates already in [0, 1] with both ends hit, so the
        // normalization is the identity
        let c = vec![vec![0.0, 1.0, 0.3], vec![1.0, 0.0, 0.0], vec![0.4, 0.6, 1.0]];
        let l = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0));
        let gamma = 1.7;
        let r = train(&c, &l, Some(gamma), 0.0).unwrap();
        // independent solve with an explicitly built kernel and LU
        let th = DMatrix::from_fn(3, 3, |i, j| {
            let d2: f64 = (0..3).map(|k| (c[i][k] - c[j][k]).powi(2)).sum();
            (-gamma * d2).exp()
        });
        let w = th.lu().solve(&l.transpose()).unwrap().transpose();
        assert!((&r.weights - &w).amax() < 1e-10);
    }

    #[test]
    fn one_dimensional_toy() {
        let c = vec![vec![0.0], vec![1.0]];
        let l = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let r = train(&c, &l, Some(1.0), 0.0).unwrap();
        let e = (-1.0f64).exp();
        let det = 1.0 - e * e;
        let (w0, w1) = ((0.0 - e * 1.0) / det, (1.0 - e * 0.0) / det);
        let want = (w0 + w1) * (-0.25f64).exp();
        assert!((r.evaluate(&[], 0.5)[0] - want).abs() < 1e-14);
    }

    #[test]
    fn spread_rules() {
        let g = choose_spread(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!((g - 0.5).abs() < 1e-15);
        assert!(choose_spread(&[vec![0.0], vec![0.0]]).is_err());
        assert!(choose_spread(&[vec![0.0]]).is_err());

        let grid: Vec<Vec<f64>> = (0..4).flat_map(|i| (0..3).map(move |j| vec![i as f64 / 3.0, j as f64 / 2.0])).collect();
        let mut d = Vec::new();
        for i in 0..grid.len() {
            for j in 0..i {
                d.push(((grid[i][0] - grid[j][0]).powi(2) + (grid[i][1] - grid[j][1]).powi(2)).sqrt());
            }
        }
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = (d[d.len() / 2 - 1] + d[d.len() / 2]) / 2.0;
        assert!((choose_spread(&grid).unwrap() - 1.0 / (2.0 * med * med)).abs() < 1e-12);

        let c = 3.5;
        let scaled: Vec<Vec<f64>> = grid.iter().map(|p| p.iter().map(|x| c * x).collect()).collect();
        let (g0, g1) = (choose_spread(&grid).unwrap(), choose_spread(&scaled).unwrap());
        assert!((g1 * c * c - g0).abs() < 1e-12);
        let k0 = kernel_matrix(&grid, g0);
        let k1 = kernel_matrix(&scaled, g1);
        assert!((k0 - k1).amax() < 1e-12);
    }

    #[test]
    fn ill_conditioned_kernel_is_rejected_without_regularization() {
        let c: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 39.0]).collect();
        let l = DMatrix::from_fn(1, 40, |_, j| (j as f64).sin());
        assert!(matches!(train(&c, &l, Some(0.01), 0.0), Err(RomError::Conditioning { .. })));
        assert!(train(&c, &l, Some(0.01), 1e-6).is_ok());
        let g = spread_for_condition(&c, 0.01, 1e10).unwrap();
        assert!(train(&c, &l, Some(g), 0.0).is_ok());
    }

    #[test]
    fn kernel_matrix_structure_and_exactness() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c: Vec<Vec<f64>> = (0..25).map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let l = DMatrix::from_fn(4, 25, |_, _| rng.gen_range(-2.0..2.0));
        let r = train(&c, &l, None, 0.0).unwrap();
        let cn = rows(&r.centers);
        let k = kernel_matrix(&cn, r.gamma);
        assert!((&k - k.transpose()).amax() == 0.0);
        assert!(k.iter().all(|v| *v > 0.0 && *v <= 1.0));
        assert!((0..25).all(|i| k[(i, i)] == 1.0));
        for (j, p) in c.iter().enumerate() {
            let v = r.evaluate(&p[..2], p[2]);
            for i in 0..4 {
                assert!((v[i] - l[(i, j)]).abs() < 1e-8 * l.column(j).amax().max(1e-300));
            }
            assert!(!r.is_extrapolation(&p[..2], p[2]));
        }
        assert!(r.is_extrapolation(&[2.0, 0.5], 0.5));
        assert!(r.is_extrapolation(&[0.5, 0.5], 2.0));
        assert!(!r.is_parameter_extrapolation(&[0.5, 0.5]));
        let back = RbfInterpolant::from_bundle(&Bundle::decode(&r.to_bundle().encode()).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn refinement_reduces_error() {
        let f = |x: f64, t: f64| (2.0 * x).sin() * (1.0 + t * t);
        let build = |n: usize| {
            let pts: Vec<Vec<f64>> = (0..n).flat_map(|i| (0..n).map(move |j| vec![i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64])).collect();
            let l = DMatrix::from_fn(1, pts.len(), |_, k| f(pts[k][0], pts[k][1]));
            train(&pts, &l, Some(8.0), 0.0).unwrap()
        };
        let err = |r: &RbfInterpolant| {
            let mut e: f64 = 0.0;
            for a in 0..=20 {
                for b in 0..=20 {
                    let (x, t) = (a as f64 / 20.0, b as f64 / 20.0);
                    e = e.max((r.evaluate(&[x], t)[0] - f(x, t)).abs());
                }
            }
            e
        };
        let (coarse, fine) = (err(&build(4)), err(&build(7)));
        assert!(fine < coarse, "{fine} vs {coarse}");
    }

    proptest! {
        #[test]
        fn evaluation_is_linear_in_data(seed in 0u64..1000, s in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
            let l = DMatrix::from_fn(2, 6, |_, _| rng.gen_range(-1.0..1.0));
            let r1 = train(&c, &l, Some(3.0), 0.0).unwrap();
            let r2 = train(&c, &(&l * s), Some(3.0), 0.0).unwrap();
            let q = [rng.gen_range(0.0..1.0)];
            let t = rng.gen_range(0.0..1.0);
            let (a, b) = (r1.evaluate(&q, t), r2.evaluate(&q, t));
            for i in 0..2 {
                prop_assert!((b[i] - s * a[i]).abs() < 1e-9 * (1.0 + a[i].abs()));
            }
        }
    }
}
