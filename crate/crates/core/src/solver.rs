//! Sparse CSR storage and a Jacobi-preconditioned BiCGStab for the
//! nonsymmetric per-step systems. Deterministic: no pivoting, no randomized
//! restarts, fixed iteration order.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("linear solver diverged after {iterations} iterations, residual {residual:.3e} (trace: {trace:?})")]
    Diverged {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            out[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] == i {
                    d[i] = self.vals[k];
                }
            }
        }
        d
    }

    /// Largest positive off-diagonal entry (zero for an M-matrix candidate).
    pub fn max_positive_offdiagonal(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] != i {
                    worst = worst.max(self.vals[k]);
                }
            }
        }
        worst
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` to relative residual `tol` with Jacobi preconditioning.
/// Returns the solution and the iteration count.
pub fn bicgstab(
    a: &Csr,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize), SolverError> {
    let n = a.n;
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precond = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = v[i] * inv_diag[i];
        }
    };

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut trace: Vec<f64> = Vec::new();

    let mut res = norm2(&r);
    if res <= tol * b_norm {
        return Ok((x, 0));
    }
    for iter in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        if iter == 0 {
            p.copy_from_slice(&r);
        } else {
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        rho = rho_new;
        precond(&p, &mut phat);
        a.matvec(&phat, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= tol * b_norm {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok((x, iter + 1));
        }
        precond(&s, &mut shat);
        a.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm2(&r);
        if trace.len() < 16 {
            trace.push(res);
        }
        if res <= tol * b_norm {
            return Ok((x, iter + 1));
        }
        if omega == 0.0 {
            break;
        }
    }
    Err(SolverError::Diverged {
        iterations: max_iter,
        residual: res / b_norm,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_1d(n: usize) -> Csr {
        let mut rows = vec![Vec::new(); n];
        for i in 0..n {
            rows[i].push((i, 2.0 + 0.01 * i as f64));
            if i > 0 {
                rows[i].push((i - 1, -1.0));
            }
            if i + 1 < n {
                rows[i].push((i + 1, -1.0));
            }
        }
        Csr::from_rows(rows)
    }

    #[test]
    fn solves_spd_system_to_tolerance() {
        let n = 200;
        let a = laplacian_1d(n);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xe: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut b = vec![0.0; n];
        a.matvec(&xe, &mut b);
        let (x, _iters) = bicgstab(&a, &b, None, 1e-12, 1000).unwrap();
        let err: f64 = x
            .iter()
            .zip(&xe)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-9, "solution error {err}");
    }

    #[test]
    fn nonsymmetric_upwind_system() {
        let n = 150;
        let mut rows = vec![Vec::new(); n];
        for i in 0..n {
            rows[i].push((i, 3.0));
            if i > 0 {
                rows[i].push((i - 1, -2.0));
            }
        }
        let a = Csr::from_rows(rows);
        let b = vec![1.0; n];
        let (x, _) = bicgstab(&a, &b, None, 1e-13, 500).unwrap();
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        let res: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        assert!(res < 1e-11);
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let a = laplacian_1d(10);
        let (x, iters) = bicgstab(&a, &vec![0.0; 10], None, 1e-10, 100).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(iters, 0);
    }

    #[test]
    fn duplicate_entries_are_summed() {
        let a = Csr::from_rows(vec![vec![(0, 1.0), (0, 2.0)]]);
        assert_eq!(a.diagonal(), vec![3.0]);
    }
}
