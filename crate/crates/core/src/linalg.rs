//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

pub fn is_psd(m: &Mat, tol: f64) -> bool {
    m.is_square() && is_symmetric(m, 1e-9) && min_sym_eigenvalue(m) >= -tol
}

pub fn is_pd(m: &Mat) -> bool {
    m.is_square() && is_symmetric(m, 1e-9) && m.clone().cholesky().is_some()
}

/// Clip negative eigenvalues of a symmetric matrix to zero.
pub fn clip_psd(m: &Mat) -> Mat {
    let e = symmetrize(m).symmetric_eigen();
    if e.eigenvalues.min() >= 0.0 {
        return symmetrize(m);
    }
    let d = e.eigenvalues.map(|v| v.max(0.0));
    let q = &e.eigenvectors;
    symmetrize(&(q * Mat::from_diagonal(&d) * q.transpose()))
}

pub fn eigenvalues(a: &Mat) -> Vec<Complex<f64>> {
    a.complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_abscissa(a: &Mat) -> f64 {
    eigenvalues(a).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(a: &Mat) -> bool {
    spectral_abscissa(a) < 0.0
}

fn rank_tol(sv: &[f64], rows: usize, cols: usize) -> f64 {
    let smax = sv.iter().copied().fold(0.0, f64::max);
    rows.max(cols) as f64 * f64::EPSILON * smax.max(1.0) * 1e3
}

pub fn rank(m: &Mat) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let tol = rank_tol(sv.as_slice(), m.nrows(), m.ncols());
    sv.iter().filter(|&&s| s > tol).count()
}

fn complex_rank(m: &DMatrix<Complex<f64>>) -> usize {
    let sv = m.clone().singular_values();
    let tol = rank_tol(sv.as_slice(), m.nrows(), m.ncols());
    sv.iter().filter(|&&s| s > tol).count()
}

/// `[B, AB, ..., A^{n-1}B]`
pub fn controllability_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let mut out = Mat::zeros(n, n * b.ncols());
    let mut blk = b.clone();
    for i in 0..n {
        out.view_mut((0, i * b.ncols()), (n, b.ncols())).copy_from(&blk);
        blk = a * blk;
    }
    out
}

pub fn observability_matrix(a: &Mat, c: &Mat) -> Mat {
    controllability_matrix(&a.transpose(), &c.transpose()).transpose()
}

/// PBH test: `rank [lambda I - A, B] = n` for every eigenvalue with `Re(lambda) >= 0`.
pub fn is_stabilizable(a: &Mat, b: &Mat) -> bool {
    let n = a.nrows();
    let ac = a.map(|v| Complex::new(v, 0.0));
    let bc = b.map(|v| Complex::new(v, 0.0));
    eigenvalues(a).into_iter().filter(|l| l.re >= -1e-9).all(|l| {
        let mut m = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
        let shifted = DMatrix::<Complex<f64>>::identity(n, n) * l - &ac;
        m.view_mut((0, 0), (n, n)).copy_from(&shifted);
        m.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
        complex_rank(&m) == n
    })
}

pub fn is_detectable(a: &Mat, c: &Mat) -> bool {
    is_stabilizable(&a.transpose(), &c.transpose())
}

/// Solve `A^T X + X A + Q = 0` through the Kronecker form.
pub fn lyapunov(a: &Mat, q: &Mat) -> Option<Mat> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = Mat::identity(n, n);
    // vec(A^T X) = (I kron A^T) vec X, vec(X A) = (A^T kron I) vec X
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -Vector::from_column_slice(q.as_slice());
    let x = k.lu().solve(&rhs)?;
    let x = Mat::from_column_slice(n, n, x.as_slice());
    x.iter().all(|v| v.is_finite()).then(|| symmetrize(&x))
}

/// Matrix sign function by scaled Newton iteration.
pub fn sign_function(h: &Mat, max_iter: usize) -> Option<Mat> {
    let n = h.nrows() as f64;
    let mut z = h.clone();
    for _ in 0..max_iter {
        let zi = z.clone().try_inverse()?;
        let det = z.determinant().abs();
        let c = if det.is_finite() && det > 0.0 {
            det.powf(1.0 / n)
        } else {
            1.0
        };
        let next = (&z / c + zi * c) * 0.5;
        let delta = (&next - &z).norm();
        let scale = next.norm();
        z = next;
        if !scale.is_finite() {
            return None;
        }
        if delta <= 1e-13 * scale {
            return Some(z);
        }
    }
    // accept a slow tail if the result is an involution
    let n = h.nrows();
    ((&z * &z - Mat::identity(n, n)).norm() < 1e-8 * n as f64).then_some(z)
}

/// Least-squares solve through SVD.
pub fn lstsq(a: &Mat, b: &Mat) -> Option<Mat> {
    a.clone().svd(true, true).solve(b, 1e-14).ok()
}
