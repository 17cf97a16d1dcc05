//! Weighted graph Laplacians on regular 3D grids plus diagonal data terms,
//! with an aggregation multigrid preconditioner.

use super::sparse::{pcg, CsrMatrix, EnvelopeCholesky};

/// `A = L_w + diag(data)` on a `dims` lattice. Edge weights are stored at the
/// lower endpoint: `ex[i]` couples voxel `i` to its +x neighbor.
#[derive(Debug, Clone)]
pub struct GridOperator {
    pub dims: [usize; 3],
    pub ex: Vec<f64>,
    pub ey: Vec<f64>,
    pub ez: Vec<f64>,
    pub data: Vec<f64>,
    diag: Vec<f64>,
}

impl GridOperator {
    /// Unit-weight 6-neighbor Laplacian plus `data` on the diagonal.
    pub fn laplacian(dims: [usize; 3], data: Vec<f64>) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        assert_eq!(data.len(), n);
        let mut ex = vec![0.0; n];
        let mut ey = vec![0.0; n];
        let mut ez = vec![0.0; n];
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let i = x + dims[0] * (y + dims[1] * z);
                    if x + 1 < dims[0] {
                        ex[i] = 1.0;
                    }
                    if y + 1 < dims[1] {
                        ey[i] = 1.0;
                    }
                    if z + 1 < dims[2] {
                        ez[i] = 1.0;
                    }
                }
            }
        }
        Self::from_weights(dims, ex, ey, ez, data)
    }

    pub fn from_weights(dims: [usize; 3], ex: Vec<f64>, ey: Vec<f64>, ez: Vec<f64>, data: Vec<f64>) -> Self {
        let mut op = GridOperator { dims, ex, ey, ez, data, diag: Vec::new() };
        op.diag = op.compute_diag();
        op
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn strides(&self) -> (usize, usize) {
        (self.dims[0], self.dims[0] * self.dims[1])
    }

    fn compute_diag(&self) -> Vec<f64> {
        let (sy, sz) = self.strides();
        let mut d = self.data.clone();
        for i in 0..d.len() {
            d[i] += self.ex[i] + self.ey[i] + self.ez[i];
            if i >= 1 {
                d[i] += self.ex[i - 1];
            }
            if i >= sy {
                d[i] += self.ey[i - sy];
            }
            if i >= sz {
                d[i] += self.ez[i - sz];
            }
        }
        d
    }

    /// Sum of `w * x_nbr` over the neighbors of `i`.
    #[inline]
    fn offdiag(&self, x: &[f64], i: usize) -> f64 {
        let (sy, sz) = self.strides();
        let n = x.len();
        let mut s = 0.0;
        if self.ex[i] != 0.0 {
            s += self.ex[i] * x[i + 1];
        }
        if self.ey[i] != 0.0 {
            s += self.ey[i] * x[i + sy];
        }
        if self.ez[i] != 0.0 {
            s += self.ez[i] * x[i + sz];
        }
        if i >= 1 && self.ex[i - 1] != 0.0 {
            s += self.ex[i - 1] * x[i - 1];
        }
        if i >= sy && self.ey[i - sy] != 0.0 {
            s += self.ey[i - sy] * x[i - sy];
        }
        if i >= sz && self.ez[i - sz] != 0.0 {
            s += self.ez[i - sz] * x[i - sz];
        }
        debug_assert!(i < n);
        s
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..x.len() {
            y[i] = self.diag[i] * x[i] - self.offdiag(x, i);
        }
    }

    fn gauss_seidel(&self, b: &[f64], x: &mut [f64], forward: bool) {
        let n = x.len();
        for k in 0..n {
            let i = if forward { k } else { n - 1 - k };
            if self.diag[i] > 0.0 {
                x[i] = (b[i] + self.offdiag(x, i)) / self.diag[i];
            }
        }
    }

    fn coarse_dims(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.dims[a].div_ceil(2))
    }

    fn coarse_index(&self, x: usize, y: usize, z: usize) -> usize {
        let c = self.coarse_dims();
        x / 2 + c[0] * (y / 2 + c[1] * (z / 2))
    }

    /// Galerkin coarse operator for 2x2x2 piecewise-constant aggregation.
    fn coarsen(&self) -> GridOperator {
        let c = self.coarse_dims();
        let nc = c[0] * c[1] * c[2];
        let mut ex = vec![0.0; nc];
        let mut ey = vec![0.0; nc];
        let mut ez = vec![0.0; nc];
        let mut data = vec![0.0; nc];
        let [nx, ny, nz] = self.dims;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let i = x + nx * (y + ny * z);
                    let ci = self.coarse_index(x, y, z);
                    data[ci] += self.data[i];
                    if x % 2 == 1 {
                        ex[ci] += self.ex[i];
                    }
                    if y % 2 == 1 {
                        ey[ci] += self.ey[i];
                    }
                    if z % 2 == 1 {
                        ez[ci] += self.ez[i];
                    }
                }
            }
        }
        GridOperator::from_weights(c, ex, ey, ez, data)
    }

    fn restrict(&self, r: &[f64]) -> Vec<f64> {
        let c = self.coarse_dims();
        let mut out = vec![0.0; c[0] * c[1] * c[2]];
        let [nx, ny, nz] = self.dims;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    out[self.coarse_index(x, y, z)] += r[x + nx * (y + ny * z)];
                }
            }
        }
        out
    }

    fn prolong_add(&self, e: &[f64], x: &mut [f64]) {
        let [nx, ny, nz] = self.dims;
        for z in 0..nz {
            for y in 0..ny {
                for xx in 0..nx {
                    x[xx + nx * (y + ny * z)] += e[self.coarse_index(xx, y, z)];
                }
            }
        }
    }

    fn to_csr(&self) -> CsrMatrix {
        let (sy, sz) = self.strides();
        let mut t = Vec::new();
        for i in 0..self.len() {
            t.push((i, i, self.diag[i]));
            for (w, j) in [(self.ex[i], i + 1), (self.ey[i], i + sy), (self.ez[i], i + sz)] {
                if w != 0.0 {
                    t.push((i, j, -w));
                    t.push((j, i, -w));
                }
            }
        }
        CsrMatrix::from_triplets(self.len(), t)
    }
}

/// Multigrid hierarchy usable as a symmetric preconditioner.
pub struct Multigrid {
    levels: Vec<GridOperator>,
    coarse: Option<EnvelopeCholesky>,
    smoothing: usize,
}

impl Multigrid {
    pub fn new(fine: GridOperator) -> Self {
        let mut levels = vec![fine];
        while levels.last().unwrap().len() > 512 && levels.last().unwrap().dims.iter().any(|&d| d > 2) {
            let next = levels.last().unwrap().coarsen();
            levels.push(next);
        }
        let coarse = EnvelopeCholesky::factor(&levels.last().unwrap().to_csr()).ok();
        Multigrid { levels, coarse, smoothing: 2 }
    }

    pub fn fine(&self) -> &GridOperator {
        &self.levels[0]
    }

    /// One V-cycle applied to `r` from a zero initial guess.
    pub fn vcycle(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        self.cycle(0, r, z);
    }

    fn cycle(&self, level: usize, b: &[f64], x: &mut [f64]) {
        let op = &self.levels[level];
        if level + 1 == self.levels.len() {
            match &self.coarse {
                Some(f) => x.copy_from_slice(&f.solve(b)),
                None => {
                    for _ in 0..20 {
                        op.gauss_seidel(b, x, true);
                        op.gauss_seidel(b, x, false);
                    }
                }
            }
            return;
        }
        for _ in 0..self.smoothing {
            op.gauss_seidel(b, x, true);
        }
        let mut ax = vec![0.0; x.len()];
        op.apply(x, &mut ax);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let rc = op.restrict(&r);
        let mut ec = vec![0.0; rc.len()];
        self.cycle(level + 1, &rc, &mut ec);
        op.prolong_add(&ec, x);
        for _ in 0..self.smoothing {
            op.gauss_seidel(b, x, false);
        }
    }

    /// Solves `A x = b` by multigrid-preconditioned CG starting from `x`.
    pub fn solve(&self, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> (usize, f64) {
        let op = &self.levels[0];
        pcg(&mut |v, out| op.apply(v, out), &mut |r, z| self.vcycle(r, z), b, x, tol, max_iter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_matches_csr() {
        let dims = [5, 4, 3];
        let n = 60;
        let data: Vec<f64> = (0..n).map(|i| if i % 7 == 0 { 0.5 } else { 0.0 }).collect();
        let op = GridOperator::laplacian(dims, data);
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut y = vec![0.0; n];
        op.apply(&x, &mut y);
        let y2 = op.to_csr().mul_vec(&x);
        for (a, b) in y.iter().zip(&y2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_operator_is_galerkin() {
        let dims = [5, 6, 3];
        let n = 90;
        let data: Vec<f64> = (0..n).map(|i| 0.1 * (i % 3) as f64).collect();
        let op = GridOperator::laplacian(dims, data);
        let c = op.coarsen();
        // P^T A P e_J computed by prolonging, applying, restricting.
        for j in 0..c.len() {
            let mut ec = vec![0.0; c.len()];
            ec[j] = 1.0;
            let mut e = vec![0.0; n];
            op.prolong_add(&ec, &mut e);
            let mut ae = vec![0.0; n];
            op.apply(&e, &mut ae);
            let lhs = op.restrict(&ae);
            let mut rhs = vec![0.0; c.len()];
            c.apply(&ec, &mut rhs);
            for (a, b) in lhs.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multigrid_pcg_converges_fast() {
        let dims = [40, 40, 40];
        let n = 64000;
        let mut data = vec![0.0; n];
        let mut b = vec![0.0; n];
        for (k, i) in (0..n).step_by(997).enumerate() {
            data[i] = 1.0;
            b[i] = if k % 2 == 0 { 1.0 } else { -0.5 };
        }
        let mg = Multigrid::new(GridOperator::laplacian(dims, data));
        let mut x = vec![0.0; n];
        let (iters, rel) = mg.solve(&b, &mut x, 1e-10, 200);
        assert!(rel <= 1e-10, "rel {rel} after {iters}");
        assert!(iters < 80, "{iters} iterations");
    }
}
