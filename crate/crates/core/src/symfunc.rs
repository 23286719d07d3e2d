//! Elementary symmetric functions of spectra and of small symmetric matrices.
//!
//! Spectral values use the incremental polynomial expansion
//! `prod_i (1 + lambda_i t)`; matrix values use sums of principal minors so
//! that no eigen-decomposition enters the kernel. Derivatives with respect to
//! the matrix entries come from the Newton tensor
//! `T_{k-1}(A) = sum_m (-1)^m sigma_{k-1-m}(A) A^m`.

use crate::error::{Error, Result};

/// Largest supported dimension of a spectrum or matrix.
pub const MAX_DIM: usize = 6;

const PACKED: usize = MAX_DIM * (MAX_DIM + 1) / 2;

/// Ordered list of eigenvalues (principal radii of curvature).
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() > MAX_DIM {
            return Err(Error::Domain(format!(
                "spectrum dimension {} outside 1..={MAX_DIM}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("spectrum has non-finite entries".into()));
        }
        Ok(Spectrum(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// The spectrum with entry `i` set to zero, written `lambda|i`.
    pub fn without(&self, i: usize) -> Spectrum {
        let mut v = self.0.clone();
        v[i] = 0.0;
        Spectrum(v)
    }
}

/// Symmetric `d x d` matrix with packed upper-triangular storage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    upper: [f64; PACKED],
}

#[inline]
fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim + j - i - i * i.saturating_sub(1) / 2
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "matrix dimension {dim} unsupported");
        SymMatrix {
            dim,
            upper: [0.0; PACKED],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, s);
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds from a full row-major matrix, reading only the upper triangle.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 || d > MAX_DIM || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Domain("matrix must be square with 1..=6 rows".into()));
        }
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in i..d {
                m.set(i, j, rows[i][j]);
            }
        }
        Ok(m)
    }

    /// 2x2 matrix `[[a11, a12], [a12, a22]]`.
    #[inline]
    pub fn new2(a11: f64, a12: f64, a22: f64) -> Self {
        let mut upper = [0.0; PACKED];
        upper[0] = a11;
        upper[1] = a12;
        upper[2] = a22;
        SymMatrix { dim: 2, upper }
    }

    #[inline]
    pub fn new1(a: f64) -> Self {
        let mut upper = [0.0; PACKED];
        upper[0] = a;
        SymMatrix { dim: 1, upper }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[packed_index(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.upper[packed_index(self.dim, i, j)] = v;
    }

    pub fn add_diagonal(&mut self, s: f64) {
        for i in 0..self.dim {
            let v = self.get(i, i);
            self.set(i, i, v + s);
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for v in m.upper.iter_mut() {
            *v *= s;
        }
        m
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut m = *self;
        for (a, b) in m.upper.iter_mut().zip(other.upper.iter()) {
            *a += b;
        }
        m
    }

    /// Frobenius contraction `sum_ij A_ij B_ij`.
    pub fn contract(&self, other: &SymMatrix) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            s += self.get(i, i) * other.get(i, i);
            for j in i + 1..d {
                s += 2.0 * self.get(i, j) * other.get(i, j);
            }
        }
        s
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    fn dense(&self) -> [[f64; MAX_DIM]; MAX_DIM] {
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..self.dim {
            for j in 0..self.dim {
                a[i][j] = self.get(i, j);
            }
        }
        a
    }
}

fn check_order(k: usize, d: usize) -> Result<()> {
    if k > d {
        Err(Error::Domain(format!("order k = {k} exceeds dimension {d}")))
    } else {
        Ok(())
    }
}

/// All elementary symmetric functions `sigma_0..=sigma_d` of `lambda`.
pub fn sigma_all(lambda: &[f64]) -> [f64; MAX_DIM + 1] {
    let mut e = [0.0; MAX_DIM + 1];
    e[0] = 1.0;
    for (i, &l) in lambda.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            e[j] += l * e[j - 1];
        }
    }
    e
}

/// `sigma_k(lambda)`, with `sigma_0 = 1`.
pub fn sigma(lambda: &Spectrum, k: usize) -> Result<f64> {
    check_order(k, lambda.dim())?;
    Ok(sigma_all(lambda.values())[k])
}

/// `sigma_k(lambda|i)`: the function evaluated with `lambda_i` removed.
pub fn sigma_without(lambda: &Spectrum, i: usize, k: usize) -> Result<f64> {
    check_order(k, lambda.dim())?;
    if i >= lambda.dim() {
        return Err(Error::Domain(format!("index {i} out of range")));
    }
    let rest: Vec<f64> = lambda
        .values()
        .iter()
        .enumerate()
        .filter_map(|(j, &v)| (j != i).then_some(v))
        .collect();
    Ok(if k > rest.len() { 0.0 } else { sigma_all(&rest)[k] })
}

/// Garding cone membership: `sigma_i(lambda) > 0` for every `1 <= i <= k`.
pub fn in_gamma_k(lambda: &Spectrum, k: usize) -> bool {
    if k > lambda.dim() {
        return false;
    }
    let e = sigma_all(lambda.values());
    (1..=k).all(|i| e[i] > 0.0)
}

fn det_small(a: &mut [[f64; MAX_DIM]; MAX_DIM], n: usize) -> f64 {
    let mut det = 1.0;
    for c in 0..n {
        let mut p = c;
        for r in c + 1..n {
            if a[r][c].abs() > a[p][c].abs() {
                p = r;
            }
        }
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..n {
            let m = a[r][c] / a[c][c];
            for cc in c..n {
                a[r][cc] -= m * a[c][cc];
            }
        }
    }
    det
}

/// Sum of all `k x k` principal minors.
fn principal_minor_sum(a: &SymMatrix, k: usize) -> f64 {
    let d = a.dim;
    if k == 0 {
        return 1.0;
    }
    let full = a.dense();
    let mut total = 0.0;
    for mask in 0u32..(1u32 << d) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let idx: Vec<usize> = (0..d).filter(|&i| mask & (1 << i) != 0).collect();
        let mut sub = [[0.0; MAX_DIM]; MAX_DIM];
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                sub[r][c] = full[i][j];
            }
        }
        total += det_small(&mut sub, k);
    }
    total
}

/// `sigma_k` of a symmetric matrix without the range check. Hot path.
#[inline]
pub(crate) fn sigma_matrix_unchecked(a: &SymMatrix, k: usize) -> f64 {
    match (a.dim, k) {
        (_, 0) => 1.0,
        (1, 1) => a.upper[0],
        (2, 1) => a.upper[0] + a.upper[2],
        (2, 2) => a.upper[0] * a.upper[2] - a.upper[1] * a.upper[1],
        _ => principal_minor_sum(a, k),
    }
}

/// `sigma_k(A) = sigma_k(lambda(A))`, evaluated as a sum of principal minors.
pub fn sigma_matrix(a: &SymMatrix, k: usize) -> Result<f64> {
    check_order(k, a.dim)?;
    Ok(sigma_matrix_unchecked(a, k))
}

/// Matrix of partial derivatives `dsigma_k / dA_ij`, each entry treated as
/// independent. For diagonal `A` this is `diag(sigma_{k-1}(lambda|i))`.
pub fn sigma_partial(a: &SymMatrix, k: usize) -> Result<SymMatrix> {
    if k == 0 {
        return Err(Error::Domain("sigma_0 has no derivative".into()));
    }
    check_order(k, a.dim)?;
    Ok(sigma_partial_unchecked(a, k))
}

#[inline]
pub(crate) fn sigma_partial_unchecked(a: &SymMatrix, k: usize) -> SymMatrix {
    let d = a.dim;
    match (d, k) {
        (_, 1) => SymMatrix::identity(d),
        (2, 2) => SymMatrix::new2(a.upper[2], -a.upper[1], a.upper[0]),
        _ => {
            // T = sum_{m=0}^{k-1} (-1)^m sigma_{k-1-m} A^m
            let full = a.dense();
            let mut power = [[0.0; MAX_DIM]; MAX_DIM];
            for (i, row) in power.iter_mut().enumerate().take(d) {
                row[i] = 1.0;
            }
            let mut t = [[0.0; MAX_DIM]; MAX_DIM];
            for m in 0..k {
                let coef = if m % 2 == 0 { 1.0 } else { -1.0 } * principal_minor_sum(a, k - 1 - m);
                for i in 0..d {
                    for j in 0..d {
                        t[i][j] += coef * power[i][j];
                    }
                }
                let mut next = [[0.0; MAX_DIM]; MAX_DIM];
                for i in 0..d {
                    for j in 0..d {
                        next[i][j] = (0..d).map(|l| power[i][l] * full[l][j]).sum();
                    }
                }
                power = next;
            }
            let mut out = SymMatrix::zeros(d);
            for i in 0..d {
                for j in i..d {
                    out.set(i, j, 0.5 * (t[i][j] + t[j][i]));
                }
            }
            out
        }
    }
}

/// Eigenvalues in ascending order.
pub fn eigenvalues(a: &SymMatrix) -> Spectrum {
    let mut v = match a.dim {
        1 => vec![a.upper[0]],
        2 => {
            let (lo, hi) = eig2(a.upper[0], a.upper[1], a.upper[2]);
            vec![lo, hi]
        }
        d => {
            let m = nalgebra::DMatrix::from_fn(d, d, |i, j| a.get(i, j));
            nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
        }
    };
    v.sort_by(f64::total_cmp);
    Spectrum(v)
}

#[inline]
pub(crate) fn eig2(a11: f64, a12: f64, a22: f64) -> (f64, f64) {
    let mean = 0.5 * (a11 + a22);
    let half = 0.5 * (a11 - a22);
    let r = half.hypot(a12);
    (mean - r, mean + r)
}

/// Smallest and largest eigenvalue.
#[inline]
pub fn eig_extremes(a: &SymMatrix) -> (f64, f64) {
    match a.dim {
        1 => (a.upper[0], a.upper[0]),
        2 => eig2(a.upper[0], a.upper[1], a.upper[2]),
        _ => {
            let s = eigenvalues(a);
            (s.0[0], s.0[s.0.len() - 1])
        }
    }
}

/// Unit eigenvector belonging to the smallest eigenvalue.
pub fn min_eigenvector(a: &SymMatrix) -> Vec<f64> {
    match a.dim {
        1 => vec![1.0],
        2 => {
            let (a11, a12, a22) = (a.upper[0], a.upper[1], a.upper[2]);
            let (lo, _) = eig2(a11, a12, a22);
            // rows of (A - lo I) are orthogonal to the eigenvector
            let (x, y) = if (a11 - lo).abs() + a12.abs() >= (a22 - lo).abs() + a12.abs() {
                (-a12, a11 - lo)
            } else {
                (a22 - lo, -a12)
            };
            let n = x.hypot(y);
            if n == 0.0 {
                vec![1.0, 0.0]
            } else {
                vec![x / n, y / n]
            }
        }
        d => {
            let m = nalgebra::DMatrix::from_fn(d, d, |i, j| a.get(i, j));
            let eig = nalgebra::SymmetricEigen::new(m);
            let (imin, _) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|x, y| x.1.total_cmp(y.1))
                .expect("non-empty");
            eig.eigenvectors.column(imin).iter().copied().collect()
        }
    }
}

/// `Gamma_k` membership of the eigenvalues of a matrix.
pub fn matrix_in_gamma_k(a: &SymMatrix, k: usize) -> bool {
    if k > a.dim {
        return false;
    }
    (1..=k).all(|i| sigma_matrix_unchecked(a, i) > 0.0)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
