//! Independent oracles shared by the integration tests. Nothing in here
//! calls into the linear-algebra crate used by the library.

#![allow(dead_code)]

use fdd_recon::C64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Column-major dense complex matrix.
#[derive(Clone, Debug)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.data[j * self.rows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.rows];
        for j in 0..self.cols {
            for i in 0..self.rows {
                y[i] += self.at(i, j) * x[j];
            }
        }
        y
    }

    /// `A^H v`
    pub fn adj_mul_vec(&self, v: &[C64]) -> Vec<C64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.at(i, j).conj() * v[i]).sum())
            .collect()
    }

    /// `A^H A`
    pub fn gram(&self) -> Mat {
        let mut g = Mat::zeros(self.cols, self.cols);
        for a in 0..self.cols {
            for b in 0..self.cols {
                let s: C64 = (0..self.rows).map(|i| self.at(i, a).conj() * self.at(i, b)).sum();
                g.set(a, b, s);
            }
        }
        g
    }
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky(g: &Mat) -> Option<Mat> {
    let n = g.rows;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = g.at(j, j).re;
        for k in 0..j {
            d -= l.at(j, k).norm_sqr();
        }
        if d <= 0.0 {
            return None;
        }
        let djj = d.sqrt();
        l.set(j, j, C64::new(djj, 0.0));
        for i in j + 1..n {
            let mut s = g.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k).conj();
            }
            l.set(i, j, s / djj);
        }
    }
    Some(l)
}

/// Solve `L L^H x = b`.
pub fn cholesky_solve(l: &Mat, b: &[C64]) -> Vec<C64> {
    let n = l.rows;
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let t = l.at(i, k) * y[k];
            y[i] -= t;
        }
        y[i] /= l.at(i, i);
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let t = l.at(k, i).conj() * y[k];
            y[i] -= t;
        }
        y[i] /= l.at(i, i).conj();
    }
    y
}

/// Least squares through the normal equations with a few rounds of
/// iterative refinement on the LS residual.
pub fn normal_equations_ls(a: &Mat, b: &[C64]) -> Vec<C64> {
    let l = cholesky(&a.gram()).expect("oracle needs a full-rank system");
    let mut x = cholesky_solve(&l, &a.adj_mul_vec(b));
    for _ in 0..6 {
        let ax = a.mul_vec(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let dx = cholesky_solve(&l, &a.adj_mul_vec(&r));
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
    }
    x
}

pub fn cgauss<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Modified Gram-Schmidt orthonormal columns from a random Gaussian matrix.
pub fn random_orthonormal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    let mut q = Mat::zeros(rows, cols);
    for j in 0..cols {
        let mut v: Vec<C64> = (0..rows).map(|_| cgauss(rng)).collect();
        for _ in 0..2 {
            for k in 0..j {
                let d: C64 = (0..rows).map(|i| q.at(i, k).conj() * v[i]).sum();
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi -= d * q.at(i, k);
                }
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for (i, vi) in v.iter().enumerate() {
            q.set(i, j, vi / n);
        }
    }
    q
}

/// `rows x cols` matrix with singular values log-spaced from 1 to `1 / cond`.
pub fn matrix_with_condition<R: Rng>(rows: usize, cols: usize, cond: f64, rng: &mut R) -> Mat {
    let u = random_orthonormal(rows, cols, rng);
    let v = random_orthonormal(cols, cols, rng);
    let mut a = Mat::zeros(rows, cols);
    for k in 0..cols {
        let t = if cols == 1 { 0.0 } else { k as f64 / (cols - 1) as f64 };
        let s = cond.powf(-t);
        for i in 0..rows {
            for j in 0..cols {
                let cur = a.at(i, j);
                a.set(i, j, cur + u.at(i, k) * v.at(j, k).conj() * s);
            }
        }
    }
    a
}

pub fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    num / den
}

/// Brute-force atom `exp(j 2 pi (n mu + m nu))` straight from the index
/// definitions.
pub fn brute_atom(m_ant: usize, n_sub: usize, mu: f64, nu: f64) -> Vec<C64> {
    let mut out = Vec::with_capacity(m_ant * n_sub);
    for ni in 0..n_sub {
        let n = ni as f64 - (n_sub / 2) as f64;
        for mi in 0..m_ant {
            let m = mi as f64 - (m_ant / 2) as f64;
            out.push(C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (n * mu + m * nu)));
        }
    }
    out
}
