//! Dense complex linear algebra sized for this crate's needs.
//!
//! Everything here operates on small matrices: 4x4 system operators, 16x16
//! vectorized generators. A hand-rolled row-major layer keeps the scalar type
//! generic and avoids pulling a large dependency for matrices this size.
//!
//! Provided: LU solves with partial pivoting, a cyclic Jacobi eigensolver for
//! Hermitian matrices, Hessenberg reduction plus shifted QR for general
//! complex spectra, and inverse iteration to recover a single eigenvector.

use crate::error::{Error, Result};
use crate::scalar::{Cplx, Scalar};
use std::ops::{Index, IndexMut};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<Cplx<T>>,
}

impl<T: Scalar> CMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![Cplx::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Cplx::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn<F>(rows: usize, cols: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> Cplx<T>,
    {
        let mut m = CMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn matmul(&self, other: &CMat<T>) -> CMat<T> {
        assert_eq!(self.cols, other.rows, "shape mismatch in matmul");
        let mut out = CMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Cplx<T>]) -> Vec<Cplx<T>> {
        assert_eq!(self.cols, v.len(), "shape mismatch in matvec");
        let mut out = vec![Cplx::new(T::zero(), T::zero()); self.rows];
        for i in 0..self.rows {
            let mut acc = Cplx::new(T::zero(), T::zero());
            for j in 0..self.cols {
                acc = acc + self[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn transpose(&self) -> CMat<T> {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn dagger(&self) -> CMat<T> {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: Cplx<T>) -> CMat<T> {
        CMat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * s)
    }

    pub fn add(&self, other: &CMat<T>) -> CMat<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] + other[(i, j)])
    }

    pub fn sub(&self, other: &CMat<T>) -> CMat<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - other[(i, j)])
    }

    pub fn add_assign(&mut self, other: &CMat<T>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + *b;
        }
    }

    pub fn trace(&self) -> Cplx<T> {
        let mut acc = Cplx::new(T::zero(), T::zero());
        for i in 0..self.rows.min(self.cols) {
            acc = acc + self[(i, i)];
        }
        acc
    }

    pub fn frobenius(&self) -> T {
        let mut acc = T::zero();
        for z in &self.data {
            acc += z.norm_sqr();
        }
        acc.sqrt()
    }

    /// Kronecker product self (x) other.
    pub fn kron(&self, other: &CMat<T>) -> CMat<T> {
        let (p, q) = (other.rows, other.cols);
        CMat::from_fn(self.rows * p, self.cols * q, |i, j| {
            self[(i / p, j / q)] * other[(i % p, j % q)]
        })
    }

    pub fn col(&self, j: usize) -> Vec<Cplx<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[Cplx<T>]) {
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    /// Max off-Hermitian deviation |A - A^dagger| over all entries.
    pub fn hermiticity_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }
}

impl<T: Scalar> Index<(usize, usize)> for CMat<T> {
    type Output = Cplx<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Cplx<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for CMat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cplx<T> {
        &mut self.data[i * self.cols + j]
    }
}

/// Inner product conjugating the first argument.
pub fn vdot<T: Scalar>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Cplx<T> {
    let mut acc = Cplx::new(T::zero(), T::zero());
    for (x, y) in a.iter().zip(b.iter()) {
        acc = acc + x.conj() * *y;
    }
    acc
}

pub fn vnorm<T: Scalar>(a: &[Cplx<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).fold(T::zero(), |s, x| s + x).sqrt()
}

/// LU factorization with partial pivoting, stored in place.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: CMat<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &CMat<T>) -> Result<Self> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let mut lu = a.clone();
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].norm_sqr();
            for i in (k + 1)..n {
                let cand = lu[(i, k)].norm_sqr();
                if cand > best {
                    best = cand;
                    p = i;
                }
            }
            if best == T::zero() {
                return Err(Error::SingularMatrix);
            }
            pivots[k] = p;
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let inv = lu[(k, k)].inv();
            for i in (k + 1)..n {
                let factor = lu[(i, k)] * inv;
                lu[(i, k)] = factor;
                for j in (k + 1)..n {
                    let sub = factor * lu[(k, j)];
                    lu[(i, j)] = lu[(i, j)] - sub;
                }
            }
        }
        Ok(Lu { lu, pivots })
    }

    pub fn solve(&self, b: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            for i in (k + 1)..n {
                let sub = self.lu[(i, k)] * x[k];
                x[i] = x[i] - sub;
            }
        }
        for k in (0..n).rev() {
            for j in (k + 1)..n {
                let sub = self.lu[(k, j)] * x[j];
                x[k] = x[k] - sub;
            }
            x[k] = x[k] * self.lu[(k, k)].inv();
        }
        x
    }
}

/// Solve A x = b directly.
pub fn solve<T: Scalar>(a: &CMat<T>, b: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
    Ok(Lu::factor(a)?.solve(b))
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order with matching eigenvector columns.
/// Each column is rephased so its largest-magnitude component is real and
/// positive, which makes downstream results reproducible across runs.
pub fn eigh<T: Scalar>(a: &CMat<T>, tol: T) -> Result<(Vec<T>, CMat<T>)> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let defect = a.hermiticity_defect();
    let scale = a.frobenius().max(T::of(1e-300));
    if defect > T::of(1e-12) * scale {
        return Err(Error::NonSymmetric {
            found: defect.as_f64(),
            tol: (T::of(1e-12) * scale).as_f64(),
        });
    }
    let mut m = a.clone();
    let mut v = CMat::<T>::identity(n);
    let stop = tol * scale;
    for _sweep in 0..64 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)].norm_sqr();
            }
        }
        if off.sqrt() * T::of(std::f64::consts::SQRT_2) <= stop {
            let mut order: Vec<usize> = (0..n).collect();
            let evals: Vec<T> = (0..n).map(|i| m[(i, i)].re).collect();
            order.sort_by(|&p, &q| evals[p].partial_cmp(&evals[q]).unwrap());
            let sorted: Vec<T> = order.iter().map(|&i| evals[i]).collect();
            let mut vecs = CMat::zeros(n, n);
            for (dst, &src) in order.iter().enumerate() {
                let mut c = v.col(src);
                rephase_largest_positive(&mut c);
                vecs.set_col(dst, &c);
            }
            return Ok((sorted, vecs));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let r = apq.norm();
                if r <= stop * T::of(1e-4) / T::of(n as f64) {
                    continue;
                }
                let phase = apq * Cplx::new(r.recip(), T::zero());
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (app - aqq) / (r + r);
                let t = {
                    let s = if tau >= T::zero() { T::one() } else { -T::one() };
                    s / (tau.abs() + (T::one() + tau * tau).sqrt())
                };
                let c = (T::one() + t * t).sqrt().recip();
                let s = t * c;
                // Column rotation: columns p, q of M and V.
                // J_pp = c, J_pq = -s e^{i phi}, J_qp = s e^{-i phi}, J_qq = c.
                let jpq = phase * Cplx::new(-s, T::zero());
                let jqp = phase.conj() * Cplx::new(s, T::zero());
                let cc = Cplx::new(c, T::zero());
                for i in 0..n {
                    let mp = m[(i, p)];
                    let mq = m[(i, q)];
                    m[(i, p)] = mp * cc + mq * jqp;
                    m[(i, q)] = mp * jpq + mq * cc;
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = vp * cc + vq * jqp;
                    v[(i, q)] = vp * jpq + vq * cc;
                }
                // Row update with J^dagger from the left.
                for j in 0..n {
                    let mp = m[(p, j)];
                    let mq = m[(q, j)];
                    m[(p, j)] = mp * cc + mq * jqp.conj();
                    m[(q, j)] = mp * jpq.conj() + mq * cc;
                }
            }
        }
    }
    Err(Error::EigenFailure { iters: 64 })
}

/// Rephase a vector so its largest-magnitude entry is real and positive.
pub fn rephase_largest_positive<T: Scalar>(v: &mut [Cplx<T>]) {
    let mut idx = 0;
    let mut best = T::zero();
    for (i, z) in v.iter().enumerate() {
        let m = z.norm_sqr();
        if m > best {
            best = m;
            idx = i;
        }
    }
    if best == T::zero() {
        return;
    }
    let z = v[idx];
    let phase = z * Cplx::new(z.norm().recip(), T::zero());
    let corr = phase.conj();
    for x in v.iter_mut() {
        *x = *x * corr;
    }
}

/// Eigenvalues of a general complex matrix by Hessenberg reduction followed
/// by the shifted QR iteration. Order is unspecified.
pub fn eig_values<T: Scalar>(a: &CMat<T>) -> Result<Vec<Cplx<T>>> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    if n == 0 {
        return Ok(vec![]);
    }
    if n == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let mut h = hessenberg(a);
    let mut evals = Vec::with_capacity(n);
    let mut hi = n;
    let eps = T::of(1e-15);
    let mut iters_since_deflate = 0usize;
    let mut total = 0usize;
    let budget = 80 * n;
    while hi > 0 {
        if hi == 1 {
            evals.push(h[(0, 0)]);
            break;
        }
        // Look for a negligible subdiagonal entry inside the active block.
        let mut lo = hi - 1;
        while lo > 0 {
            let s = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            let s = if s == T::zero() { T::one() } else { s };
            if h[(lo, lo - 1)].norm() <= eps * s {
                h[(lo, lo - 1)] = Cplx::new(T::zero(), T::zero());
                break;
            }
            lo -= 1;
        }
        if lo == hi - 1 {
            evals.push(h[(hi - 1, hi - 1)]);
            hi -= 1;
            iters_since_deflate = 0;
            continue;
        }
        if lo == hi - 2 {
            let (l1, l2) = eig2(
                h[(hi - 2, hi - 2)],
                h[(hi - 2, hi - 1)],
                h[(hi - 1, hi - 2)],
                h[(hi - 1, hi - 1)],
            );
            evals.push(l1);
            evals.push(l2);
            hi -= 2;
            iters_since_deflate = 0;
            continue;
        }
        total += 1;
        if total > budget {
            return Err(Error::EigenFailure { iters: total });
        }
        let shift = if iters_since_deflate > 0 && iters_since_deflate % 12 == 0 {
            // Exceptional shift breaks rare symmetric stalls.
            h[(hi - 1, hi - 2)] * Cplx::new(T::of(0.75), T::zero()) + h[(hi - 1, hi - 1)]
        } else {
            let (l1, l2) = eig2(
                h[(hi - 2, hi - 2)],
                h[(hi - 2, hi - 1)],
                h[(hi - 1, hi - 2)],
                h[(hi - 1, hi - 1)],
            );
            let d = h[(hi - 1, hi - 1)];
            if (l1 - d).norm() <= (l2 - d).norm() {
                l1
            } else {
                l2
            }
        };
        iters_since_deflate += 1;
        qr_step(&mut h, lo, hi, shift);
    }
    Ok(evals)
}

/// Eigenvalues of a 2x2 complex matrix.
fn eig2<T: Scalar>(a: Cplx<T>, b: Cplx<T>, c: Cplx<T>, d: Cplx<T>) -> (Cplx<T>, Cplx<T>) {
    let half = Cplx::new(T::of(0.5), T::zero());
    let tr = (a + d) * half;
    let det = a * d - b * c;
    let disc = (tr * tr - det).sqrt();
    (tr + disc, tr - disc)
}

/// Reduce to upper Hessenberg form by Householder reflections.
fn hessenberg<T: Scalar>(a: &CMat<T>) -> CMat<T> {
    let n = a.rows;
    let mut h = a.clone();
    for k in 0..n.saturating_sub(2) {
        // Build the reflector for column k below the subdiagonal.
        let mut x: Vec<Cplx<T>> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let xnorm = vnorm(&x);
        if xnorm == T::zero() {
            continue;
        }
        let x0 = x[0];
        let phase = if x0.norm() == T::zero() {
            Cplx::new(T::one(), T::zero())
        } else {
            x0 * Cplx::new(x0.norm().recip(), T::zero())
        };
        let alpha = phase * Cplx::new(-xnorm, T::zero());
        x[0] = x[0] - alpha;
        let vn = vnorm(&x);
        if vn == T::zero() {
            continue;
        }
        let inv = Cplx::new(vn.recip(), T::zero());
        for z in x.iter_mut() {
            *z = *z * inv;
        }
        // h <- P h P with P = I - 2 v v^dagger acting on rows/cols k+1..n.
        let two = Cplx::new(T::of(2.0), T::zero());
        for j in 0..n {
            // w = v^dagger h[k+1.., j]
            let mut w = Cplx::new(T::zero(), T::zero());
            for (idx, i) in (k + 1..n).enumerate() {
                w = w + x[idx].conj() * h[(i, j)];
            }
            let w = w * two;
            for (idx, i) in (k + 1..n).enumerate() {
                let sub = x[idx] * w;
                h[(i, j)] = h[(i, j)] - sub;
            }
        }
        for i in 0..n {
            let mut w = Cplx::new(T::zero(), T::zero());
            for (idx, j) in (k + 1..n).enumerate() {
                w = w + h[(i, j)] * x[idx];
            }
            let w = w * two;
            for (idx, j) in (k + 1..n).enumerate() {
                let sub = w * x[idx].conj();
                h[(i, j)] = h[(i, j)] - sub;
            }
        }
        for i in k + 2..n {
            h[(i, k)] = Cplx::new(T::zero(), T::zero());
        }
    }
    h
}

/// One shifted QR step on the active Hessenberg block [lo, hi).
fn qr_step<T: Scalar>(h: &mut CMat<T>, lo: usize, hi: usize, shift: Cplx<T>) {
    let n = h.cols;
    for i in lo..hi {
        h[(i, i)] = h[(i, i)] - shift;
    }
    // Forward pass: Givens rotations eliminate the subdiagonal.
    let mut rots: Vec<(Cplx<T>, Cplx<T>)> = Vec::with_capacity(hi - lo);
    for k in lo..hi - 1 {
        let f = h[(k, k)];
        let g = h[(k + 1, k)];
        let r = (f.norm_sqr() + g.norm_sqr()).sqrt();
        if r == T::zero() {
            rots.push((Cplx::new(T::one(), T::zero()), Cplx::new(T::zero(), T::zero())));
            continue;
        }
        let rinv = Cplx::new(r.recip(), T::zero());
        let cf = f * rinv;
        let cg = g * rinv;
        // Rows k, k+1: [conj(cf) conj(cg); -cg cf].
        for j in k..n {
            let hk = h[(k, j)];
            let hk1 = h[(k + 1, j)];
            h[(k, j)] = cf.conj() * hk + cg.conj() * hk1;
            h[(k + 1, j)] = cf * hk1 - cg * hk;
        }
        rots.push((cf, cg));
    }
    // Backward pass: multiply by the adjoint rotations from the right.
    for (k, (cf, cg)) in (lo..hi - 1).zip(rots.into_iter()) {
        let top = (k + 2).min(hi);
        for i in 0..top {
            let hik = h[(i, k)];
            let hik1 = h[(i, k + 1)];
            h[(i, k)] = hik * cf + hik1 * cg;
            h[(i, k + 1)] = hik1 * cf.conj() - hik * cg.conj();
        }
    }
    for i in lo..hi {
        h[(i, i)] = h[(i, i)] + shift;
    }
}

/// Eigenvector of `a` for a known eigenvalue, by inverse iteration with a
/// slightly displaced shift. The vector is normalized and rephased.
pub fn eigenvector_for<T: Scalar>(a: &CMat<T>, lambda: Cplx<T>) -> Result<Vec<Cplx<T>>> {
    let n = a.rows;
    let scale = a.frobenius().max(T::of(1e-30));
    let delta = T::of(1e-11) * scale;
    let shifted = CMat::from_fn(n, n, |i, j| {
        if i == j {
            a[(i, j)] - lambda - Cplx::new(delta, T::zero())
        } else {
            a[(i, j)]
        }
    });
    let lu = Lu::factor(&shifted)?;
    // Deterministic start with mild structure to avoid orthogonal starts.
    let mut v: Vec<Cplx<T>> = (0..n)
        .map(|i| Cplx::new(T::one() + T::of(0.3) * T::of((i % 7) as f64), T::of(0.1)))
        .collect();
    let inv = Cplx::new(vnorm(&v).recip(), T::zero());
    for z in v.iter_mut() {
        *z = *z * inv;
    }
    for _ in 0..4 {
        let mut w = lu.solve(&v);
        let nrm = vnorm(&w);
        if !nrm.is_finite() || nrm == T::zero() {
            return Err(Error::EigenFailure { iters: 4 });
        }
        let inv = Cplx::new(nrm.recip(), T::zero());
        for z in w.iter_mut() {
            *z = *z * inv;
        }
        v = w;
    }
    rephase_largest_positive(&mut v);
    Ok(v)
}

/// Convenience: build a matrix from f64 entries (real, imag) pairs.
pub fn cmat_from_rows<T: Scalar>(rows: &[Vec<(f64, f64)>]) -> CMat<T> {
    let r = rows.len();
    let c = rows[0].len();
    CMat::from_fn(r, c, |i, j| {
        let (re, im) = rows[i][j];
        Cplx::new(T::of(re), T::of(im))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Cplx<f64> {
        Cplx::new(re, im)
    }

    fn residual(a: &CMat<f64>, lambda: Cplx<f64>, v: &[Cplx<f64>]) -> f64 {
        let av = a.matvec(v);
        let mut worst = 0.0f64;
        for i in 0..v.len() {
            let d = (av[i] - lambda * v[i]).norm();
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    #[test]
    fn lu_solves_a_known_system() {
        let a = cmat_from_rows::<f64>(&[
            vec![(2.0, 0.0), (1.0, 1.0), (0.0, 0.0)],
            vec![(0.0, -1.0), (3.0, 0.0), (1.0, 0.0)],
            vec![(1.0, 0.0), (0.0, 0.0), (4.0, 2.0)],
        ]);
        let x_true = vec![c(1.0, -1.0), c(0.5, 0.25), c(-2.0, 0.5)];
        let b = a.matvec(&x_true);
        let x = solve(&a, &b).unwrap();
        for (got, want) in x.iter().zip(x_true.iter()) {
            assert!((got - want).norm() < 1e-13);
        }
    }

    #[test]
    fn jacobi_diagonalizes_a_hermitian_matrix() {
        let a = cmat_from_rows::<f64>(&[
            vec![(1.0, 0.0), (0.5, 0.2), (0.0, -0.7)],
            vec![(0.5, -0.2), (-2.0, 0.0), (0.3, 0.0)],
            vec![(0.0, 0.7), (0.3, 0.0), (0.5, 0.0)],
        ]);
        let (evals, v) = eigh(&a, 1e-14).unwrap();
        assert!(evals.windows(2).all(|w| w[0] <= w[1]));
        // Columns are eigenvectors and orthonormal.
        for k in 0..3 {
            let col = v.col(k);
            assert!(residual(&a, c(evals[k], 0.0), &col) < 1e-12);
            for l in 0..3 {
                let want = if k == l { 1.0 } else { 0.0 };
                assert!((vdot(&v.col(l), &col).norm() - want).abs() < 1e-12);
            }
        }
        // Trace is preserved by the spectrum.
        let sum: f64 = evals.iter().sum();
        assert!((sum - (1.0 - 2.0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn eigh_rejects_non_hermitian_input() {
        let a = cmat_from_rows::<f64>(&[vec![(1.0, 0.0), (1.0, 0.0)], vec![(0.0, 0.0), (2.0, 0.0)]]);
        assert!(matches!(eigh(&a, 1e-14), Err(Error::NonSymmetric { .. })));
    }

    #[test]
    fn qr_finds_the_spectrum_of_a_random_like_matrix() {
        // Fixed pseudo-random entries; spectrum checked via trace moments.
        let n = 6;
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a = CMat::<f64>::from_fn(n, n, |_i, _j| c(next(), next()));
        let evals = eig_values(&a).unwrap();
        assert_eq!(evals.len(), n);
        // Compare sum lambda and sum lambda^2 against tr A and tr A^2.
        let s1: Cplx<f64> = evals.iter().fold(c(0.0, 0.0), |s, &z| s + z);
        let s2: Cplx<f64> = evals.iter().fold(c(0.0, 0.0), |s, &z| s + z * z);
        let t1 = a.trace();
        let t2 = a.matmul(&a).trace();
        assert!((s1 - t1).norm() < 1e-10, "trace mismatch {s1} vs {t1}");
        assert!((s2 - t2).norm() < 1e-9, "second moment {s2} vs {t2}");
    }

    #[test]
    fn inverse_iteration_recovers_an_eigenvector() {
        let a = cmat_from_rows::<f64>(&[
            vec![(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)],
            vec![(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)],
            vec![(6.0, 0.0), (-11.0, 0.0), (6.0, 0.0)],
        ]);
        // Companion matrix of (x-1)(x-2)(x-3).
        let evals = eig_values(&a).unwrap();
        for target in [1.0, 2.0, 3.0] {
            let lambda = evals
                .iter()
                .copied()
                .min_by(|x, y| {
                    (x - c(target, 0.0))
                        .norm()
                        .partial_cmp(&(y - c(target, 0.0)).norm())
                        .unwrap()
                })
                .unwrap();
            assert!((lambda - c(target, 0.0)).norm() < 1e-8);
            let v = eigenvector_for(&a, lambda).unwrap();
            assert!(residual(&a, lambda, &v) < 1e-8);
        }
    }

    #[test]
    fn kron_matches_block_structure() {
        let a = cmat_from_rows::<f64>(&[vec![(1.0, 0.0), (2.0, 0.0)], vec![(3.0, 0.0), (4.0, 0.0)]]);
        let b = cmat_from_rows::<f64>(&[vec![(0.0, 1.0), (0.0, 0.0)], vec![(0.0, 0.0), (0.0, 1.0)]]);
        let k = a.kron(&b);
        assert_eq!(k.rows(), 4);
        assert_eq!(k[(0, 0)], c(0.0, 1.0));
        assert_eq!(k[(0, 2)], c(0.0, 2.0));
        assert_eq!(k[(2, 0)], c(0.0, 3.0));
        assert_eq!(k[(3, 3)], c(0.0, 4.0));
        assert_eq!(k[(1, 0)], c(0.0, 0.0));
    }
}
