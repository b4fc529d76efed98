//! Newton systems with block-diagonal structure plus low-rank coupling.
//!
//! The barrier Hessian of the inner problem is `B + sum_j w_j u_j u_j^T`
//! where `B` is block diagonal (one block per carrier). An optional extra
//! variable couples to everything through a border column.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub(crate) struct BlockSystem {
    pub n: usize,
    /// `(offset, block)` pairs covering `0..n` contiguously.
    pub blocks: Vec<(usize, DMatrix<f64>)>,
    /// Rank-one terms `w u u^T`.
    pub updates: Vec<(f64, DVector<f64>)>,
    /// Coupling column and diagonal entry of a trailing extra variable.
    pub border: Option<(DVector<f64>, f64)>,
}

fn cholesky_with_jitter(mut m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut jitter = 0.0;
    for _ in 0..8 {
        if let Some(c) = m.clone().cholesky() {
            return Some(c);
        }
        let next = if jitter == 0.0 { 1e-14 * scale } else { jitter * 100.0 };
        for i in 0..m.nrows() {
            m[(i, i)] += next - jitter;
        }
        jitter = next;
    }
    None
}

/// Symmetric diagonal scaling `D M D` with `D = diag(1/sqrt(M_ii))`.
fn equilibrate(m: &mut DMatrix<f64>) -> DVector<f64> {
    let d = DVector::from_iterator(m.nrows(), (0..m.nrows()).map(|i| 1.0 / m[(i, i)].abs().max(1e-300).sqrt()));
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            m[(i, j)] *= d[i] * d[j];
        }
    }
    d
}

/// Cholesky factor of a symmetric positive definite matrix, computed on the
/// equilibrated matrix and mapped back.
fn factor_spd(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let mut scaled = m.clone();
    let d = equilibrate(&mut scaled);
    let mut l = cholesky_with_jitter(scaled)?.unpack();
    for i in 0..l.nrows() {
        let s = 1.0 / d[i];
        for j in 0..=i {
            l[(i, j)] *= s;
        }
    }
    Some(Cholesky::pack_dirty(l))
}

struct Factored {
    blocks: Vec<(usize, Cholesky<f64, Dyn>)>,
    /// `B^{-1} U`, one column per update.
    z: DMatrix<f64>,
    /// Factor of the capacitance matrix, absent when there are no updates.
    cap: Option<Cholesky<f64, Dyn>>,
}

impl Factored {
    fn block_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(rhs.len());
        for (off, chol) in &self.blocks {
            let m = chol.l_dirty().nrows();
            let mut r = rhs.rows(*off, m).into_owned();
            chol.solve_mut(&mut r);
            out.rows_mut(*off, m).copy_from(&r);
        }
        out
    }

    fn solve(&self, sys: &BlockSystem, rhs: &DVector<f64>) -> DVector<f64> {
        let y = self.block_solve(rhs);
        match &self.cap {
            None => y,
            Some(cap) => {
                let mut proj = DVector::from_iterator(sys.updates.len(), sys.updates.iter().map(|(_, u)| u.dot(&y)));
                cap.solve_mut(&mut proj);
                y - &self.z * proj
            }
        }
    }
}

impl BlockSystem {
    pub fn dim(&self) -> usize {
        self.n + usize::from(self.border.is_some())
    }

    /// Product of the full system matrix with `x`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let xv = x.rows(0, n);
        let mut out = DVector::zeros(self.dim());
        for (off, b) in &self.blocks {
            let m = b.nrows();
            let r = b * xv.rows(*off, m);
            out.rows_mut(*off, m).copy_from(&r);
        }
        for (w, u) in &self.updates {
            let c = w * u.dot(&xv);
            out.rows_mut(0, n).axpy(c, u, 1.0);
        }
        if let Some((h, c)) = &self.border {
            let s = x[n];
            out.rows_mut(0, n).axpy(s, h, 1.0);
            out[n] = h.dot(&xv) + c * s;
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let n = self.n;
        let mut m = DMatrix::zeros(dim, dim);
        for (off, b) in &self.blocks {
            let k = b.nrows();
            m.view_mut((*off, *off), (k, k)).copy_from(b);
        }
        for (w, u) in &self.updates {
            m.view_mut((0, 0), (n, n)).ger(*w, u, u, 1.0);
        }
        if let Some((h, c)) = &self.border {
            m.view_mut((0, n), (n, 1)).copy_from(h);
            m.view_mut((n, 0), (1, n)).copy_from(&h.transpose());
            m[(n, n)] = *c;
        }
        m
    }

    fn factor(&self) -> Option<Factored> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (off, b) in &self.blocks {
            blocks.push((*off, factor_spd(b)?));
        }
        let r = self.updates.len();
        let mut f = Factored { blocks, z: DMatrix::zeros(self.n, r), cap: None };
        if r == 0 {
            return Some(f);
        }
        let mut z = DMatrix::zeros(self.n, r);
        for (j, (_, u)) in self.updates.iter().enumerate() {
            z.set_column(j, &f.block_solve(u));
        }
        let mut cap = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in i..r {
                let v = self.updates[i].1.dot(&z.column(j));
                cap[(i, j)] = v;
                cap[(j, i)] = v;
            }
            cap[(i, i)] += 1.0 / self.updates[i].0;
        }
        f.z = z;
        f.cap = Some(factor_spd(&cap)?);
        Some(f)
    }

    /// Structured solve with one step of iterative refinement.
    pub fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let f = self.factor()?;
        let n = self.n;
        let solve_once = |b: &DVector<f64>| -> DVector<f64> {
            let bx = b.rows(0, n).into_owned();
            match &self.border {
                None => f.solve(self, &bx),
                Some((h, c)) => {
                    let x1 = f.solve(self, &bx);
                    let x2 = f.solve(self, h);
                    let denom = c - h.dot(&x2);
                    let s = (b[n] - h.dot(&x1)) / denom;
                    let mut out = DVector::zeros(n + 1);
                    out.rows_mut(0, n).copy_from(&(x1 - x2 * s));
                    out[n] = s;
                    out
                }
            }
        };
        let mut x = solve_once(rhs);
        for _ in 0..2 {
            let r = rhs - self.apply(&x);
            if r.amax() <= 1e-14 * rhs.amax() {
                break;
            }
            x += solve_once(&r);
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }

    /// Solves `(M + lambda diag(M)) x = rhs` densely.
    pub fn solve_damped(&self, rhs: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
        let mut m = self.to_dense();
        for i in 0..m.nrows() {
            m[(i, i)] *= 1.0 + lambda;
        }
        let x = factor_spd(&m)?.solve(rhs);
        x.iter().all(|v| v.is_finite()).then_some(x)
    }

    /// Dense Cholesky solve, used for small systems and as a fallback.
    pub fn solve_dense(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let m = self.to_dense();
        let chol = factor_spd(&m)?;
        let mut x = chol.solve(rhs);
        for _ in 0..2 {
            let r = rhs - &m * &x;
            x += chol.solve(&r);
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_system(seed: u64, sizes: &[usize], r: usize, border: bool) -> BlockSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = sizes.iter().sum();
        let mut blocks = Vec::new();
        let mut off = 0;
        for &m in sizes {
            let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
            let mut b = &a * a.transpose();
            for i in 0..m {
                b[(i, i)] += 10f64.powf(rng.random_range(-2.0..8.0));
            }
            blocks.push((off, b));
            off += m;
        }
        let updates = (0..r)
            .map(|_| (10f64.powf(rng.random_range(-3.0..6.0)), DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))))
            .collect();
        let border = border.then(|| (DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)), 1e3));
        BlockSystem { n, blocks, updates, border }
    }

    #[test]
    fn structured_and_dense_solves_agree() {
        for seed in 0..10 {
            let sys = random_system(seed, &[5, 7, 4], 6, seed % 2 == 0);
            let rhs = DVector::from_fn(sys.dim(), |i, _| (i as f64 * 0.37).sin());
            let a = sys.solve(&rhs).unwrap();
            let b = sys.solve_dense(&rhs).unwrap();
            let dense = sys.to_dense();
            let ra = (&dense * &a - &rhs).amax() / rhs.amax();
            let rb = (&dense * &b - &rhs).amax() / rhs.amax();
            assert!(ra < 1e-9, "structured residual {ra}");
            assert!(rb < 1e-9, "dense residual {rb}");
        }
    }

    #[test]
    fn apply_matches_dense_product() {
        let sys = random_system(3, &[3, 3], 2, true);
        let x = DVector::from_fn(sys.dim(), |i, _| i as f64 - 2.5);
        assert!((sys.apply(&x) - sys.to_dense() * &x).amax() < 1e-6 * sys.to_dense().amax());
    }

    #[test]
    fn damping_scales_the_diagonal() {
        let sys = random_system(4, &[4, 2], 3, false);
        let rhs = DVector::from_fn(sys.dim(), |i, _| 1.0 + i as f64);
        let x = sys.solve_damped(&rhs, 0.5).unwrap();
        let mut m = sys.to_dense();
        for i in 0..m.nrows() {
            m[(i, i)] *= 1.5;
        }
        assert!((&m * &x - &rhs).amax() < 1e-9 * rhs.amax());
        let plain = sys.solve_damped(&rhs, 0.0).unwrap();
        assert!((plain - sys.solve_dense(&rhs).unwrap()).amax() < 1e-8);
    }
}
