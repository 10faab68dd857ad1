//! Compressed sparse rows and a geometric multigrid V-cycle for the
//! weighted grid Laplacians arising from the quotient.

/// Square or rectangular sparse matrix in CSR form.
#[derive(Debug, Clone)]
pub(crate) struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Builds from per-row (column, value) lists; duplicate columns are summed.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut r in rows.into_iter() {
            r.sort_unstable_by_key(|e| e.0);
            let mut last = u32::MAX;
            for (c, v) in r {
                if c == last {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    data.push(v);
                    last = c;
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            rows: indptr.len() - 1,
            cols,
            indptr,
            indices,
            data,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k] as usize];
            }
            *yi = acc;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| {
                (self.indptr[i]..self.indptr[i + 1])
                    .find(|&k| self.indices[k] as usize == i)
                    .map_or(0.0, |k| self.data[k])
            })
            .collect()
    }

    pub fn transpose(&self) -> Csr {
        let mut count = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            count[c as usize + 1] += 1;
        }
        for i in 0..self.cols {
            count[i + 1] += count[i];
        }
        let indptr = count.clone();
        let mut next = count;
        let mut indices = vec![0u32; self.indices.len()];
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k] as usize;
                indices[next[c]] = r as u32;
                data[next[c]] = self.data[k];
                next[c] += 1;
            }
        }
        Csr {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            data,
        }
    }

    /// self · other.
    pub fn matmul(&self, other: &Csr) -> Csr {
        let mut acc = vec![0.0; other.cols];
        let mut seen = vec![usize::MAX; other.cols];
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        let mut cols: Vec<usize> = Vec::new();
        for i in 0..self.rows {
            cols.clear();
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k] as usize;
                let a = self.data[k];
                for l in other.indptr[j]..other.indptr[j + 1] {
                    let c = other.indices[l] as usize;
                    if seen[c] != i {
                        seen[c] = i;
                        acc[c] = 0.0;
                        cols.push(c);
                    }
                    acc[c] += a * other.data[l];
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                indices.push(c as u32);
                data.push(acc[c]);
            }
            indptr.push(indices.len());
        }
        Csr {
            rows: self.rows,
            cols: other.cols,
            indptr,
            indices,
            data,
        }
    }
}

struct Level {
    a: Csr,
    diag: Vec<f64>,
    /// Fine × coarse interpolation to the next level, and its transpose.
    p: Option<(Csr, Csr)>,
}

/// V-cycle with symmetric Gauss–Seidel smoothing and a dense Cholesky
/// solve on the coarsest level; a fixed symmetric positive definite
/// approximation of A^{-1}.
pub(crate) struct Multigrid {
    levels: Vec<Level>,
    /// Lower-triangular Cholesky factor of the coarsest matrix, row-major.
    chol: Vec<f64>,
    sweeps: usize,
}

const COARSEST: usize = 400;

impl Multigrid {
    /// `nodes` are the grid indices (on `shape`) of the unknowns of `a`, in
    /// order.
    pub fn new(a: Csr, nodes: &[usize], shape: &[usize]) -> Self {
        let mut levels = Vec::new();
        let mut a = a;
        let mut nodes = nodes.to_vec();
        let mut shape = shape.to_vec();
        loop {
            let diag = a.diag();
            let small = a.rows <= COARSEST || shape.iter().all(|&s| s <= 3);
            if small {
                levels.push(Level { a, diag, p: None });
                break;
            }
            let (p, coarse_nodes, coarse_shape) = interpolation(&nodes, &shape);
            if coarse_nodes.len() * 10 > a.rows * 9 {
                levels.push(Level { a, diag, p: None });
                break;
            }
            let pt = p.transpose();
            let ac = pt.matmul(&a.matmul(&p));
            levels.push(Level {
                a,
                diag,
                p: Some((p, pt)),
            });
            a = ac;
            nodes = coarse_nodes;
            shape = coarse_shape;
        }
        let chol = cholesky(&levels.last().unwrap().a);
        Multigrid {
            levels,
            chol,
            sweeps: 2,
        }
    }

    pub fn apply(&self, b: &[f64], x: &mut [f64]) {
        self.cycle(0, b, x);
    }

    fn cycle(&self, k: usize, b: &[f64], x: &mut [f64]) {
        let lv = &self.levels[k];
        x.iter_mut().for_each(|v| *v = 0.0);
        let Some((p, pt)) = &lv.p else {
            chol_solve(&self.chol, lv.a.rows, b, x);
            return;
        };
        for _ in 0..self.sweeps {
            gauss_seidel(&lv.a, &lv.diag, b, x, false);
        }
        let mut r = vec![0.0; lv.a.rows];
        lv.a.matvec(x, &mut r);
        r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
        let mut rc = vec![0.0; pt.rows];
        pt.matvec(&r, &mut rc);
        let mut xc = vec![0.0; pt.rows];
        self.cycle(k + 1, &rc, &mut xc);
        let mut e = vec![0.0; lv.a.rows];
        p.matvec(&xc, &mut e);
        x.iter_mut().zip(&e).for_each(|(x, e)| *x += e);
        for _ in 0..self.sweeps {
            gauss_seidel(&lv.a, &lv.diag, b, x, true);
        }
    }
}

fn gauss_seidel(a: &Csr, diag: &[f64], b: &[f64], x: &mut [f64], backward: bool) {
    let n = a.rows;
    let mut step = |i: usize| {
        let mut s = b[i];
        for k in a.indptr[i]..a.indptr[i + 1] {
            let j = a.indices[k] as usize;
            if j != i {
                s -= a.data[k] * x[j];
            }
        }
        x[i] = s / diag[i];
    };
    if backward {
        (0..n).rev().for_each(&mut step);
    } else {
        (0..n).for_each(&mut step);
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

/// Tensor-product linear interpolation from the grid of every other node.
fn interpolation(nodes: &[usize], shape: &[usize]) -> (Csr, Vec<usize>, Vec<usize>) {
    let n = shape.len();
    let cshape: Vec<usize> = shape.iter().map(|&s| s / 2 + 1).collect();
    let cstrides = strides(&cshape);
    let mut raw: Vec<Vec<(usize, f64)>> = Vec::with_capacity(nodes.len());
    for &i in nodes {
        let mut idx = vec![0usize; n];
        let mut rem = i;
        for k in (0..n).rev() {
            idx[k] = rem % shape[k];
            rem /= shape[k];
        }
        let mut entries = vec![(0usize, 1.0)];
        for k in 0..n {
            let cs = cstrides[k];
            let opts: Vec<(usize, f64)> = if idx[k] % 2 == 0 {
                vec![(idx[k] / 2, 1.0)]
            } else {
                vec![((idx[k] - 1) / 2, 0.5), ((idx[k] + 1) / 2, 0.5)]
            };
            entries = entries
                .iter()
                .flat_map(|&(off, w)| opts.iter().map(move |&(c, v)| (off + c * cs, w * v)))
                .collect();
        }
        raw.push(entries);
    }
    let mut coarse: Vec<usize> = raw.iter().flatten().map(|e| e.0).collect();
    coarse.sort_unstable();
    coarse.dedup();
    let rows = raw
        .into_iter()
        .map(|r| {
            r.into_iter()
                .map(|(c, w)| (coarse.binary_search(&c).unwrap() as u32, w))
                .collect()
        })
        .collect();
    (Csr::from_rows(coarse.len(), rows), coarse, cshape)
}

fn cholesky(a: &Csr) -> Vec<f64> {
    let n = a.rows;
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for k in a.indptr[i]..a.indptr[i + 1] {
            m[i * n + a.indices[k] as usize] = a.data[k];
        }
    }
    let scale = (0..n).map(|i| m[i * n + i].abs()).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= m[j * n + k] * m[j * n + k];
        }
        // Guard against rounding on nearly singular coarse operators.
        let d = d.max(1e-14 * scale).sqrt();
        m[j * n + j] = d;
        for i in j + 1..n {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = s / d;
        }
    }
    m
}

fn chol_solve(l: &[f64], n: usize, b: &[f64], x: &mut [f64]) {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(m: usize) -> Csr {
        let rows = (0..m)
            .map(|i| {
                let mut r = vec![(i as u32, 2.0)];
                if i > 0 {
                    r.push((i as u32 - 1, -1.0));
                }
                if i + 1 < m {
                    r.push((i as u32 + 1, -1.0));
                }
                r
            })
            .collect();
        Csr::from_rows(m, rows)
    }

    #[test]
    fn transpose_and_matmul_agree_with_dense() {
        let a = Csr::from_rows(3, vec![vec![(0, 1.0), (2, 2.0)], vec![(1, 3.0)]]);
        let t = a.transpose();
        assert_eq!((t.rows, t.cols), (3, 2));
        let p = a.matmul(&t);
        // a aᵀ = [[5, 0], [0, 9]]
        assert_eq!(p.diag(), vec![5.0, 9.0]);
        assert!(p.data.iter().zip(&p.indices).all(|(v, _)| *v == 5.0 || *v == 9.0 || *v == 0.0));
    }

    #[test]
    fn vcycle_contracts_on_a_laplacian() {
        // Interior nodes 1..=1023 of a 1025-node line.
        let m = 1023;
        let a = laplacian_1d(m);
        let nodes: Vec<usize> = (1..=m).collect();
        let mg = Multigrid::new(a.clone(), &nodes, &[m + 2]);
        let b = vec![1.0; m];
        let mut x = vec![0.0; m];
        let mut r = b.clone();
        for _ in 0..8 {
            let mut z = vec![0.0; m];
            mg.apply(&r, &mut z);
            x.iter_mut().zip(&z).for_each(|(x, z)| *x += z);
            let mut ax = vec![0.0; m];
            a.matvec(&x, &mut ax);
            r = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        }
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rn < 1e-8 * (m as f64).sqrt(), "{rn}");
    }
}
