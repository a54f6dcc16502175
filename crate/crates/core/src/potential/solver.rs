//! Linear solves for `(I - P_W) u = b`, where `P_W` is the walk restricted
//! to a finite set of unknowns `W` and killed when it leaves `W`.
//!
//! The walk is symmetric, so the operator is symmetric positive definite
//! and conjugate gradients apply. Small systems go through a dense LU
//! factorization instead.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Target for `||r|| / ||b||`.
    pub tol: f64,
    /// Systems with fewer unknowns use dense LU.
    pub dense_below: usize,
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            dense_below: 1000,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    pub method: String,
    pub unknowns: usize,
    pub iterations: usize,
    pub residual: f64,
}

/// `I - (1/deg) A_W` in neighbour-list form.
#[derive(Debug, Clone)]
pub struct KilledWalkOperator {
    deg: usize,
    /// `deg` slots per unknown, holding unknown indices or [`NONE`].
    nbr: Vec<u32>,
}

impl KilledWalkOperator {
    pub fn new(deg: usize, nbr: Vec<u32>) -> Self {
        assert!(deg > 0 && nbr.len() % deg == 0);
        Self { deg, nbr }
    }

    pub fn unknowns(&self) -> usize {
        self.nbr.len() / self.deg
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let w = 1.0 / self.deg as f64;
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for &j in &self.nbr[i * self.deg..(i + 1) * self.deg] {
                if j != NONE {
                    s += x[j as usize];
                }
            }
            *o = x[i] - w * s;
        }
    }

    fn dense(&self) -> DMatrix<f64> {
        let n = self.unknowns();
        let w = 1.0 / self.deg as f64;
        let mut m = DMatrix::identity(n, n);
        for i in 0..n {
            for &j in &self.nbr[i * self.deg..(i + 1) * self.deg] {
                if j != NONE {
                    m[(i, j as usize)] -= w;
                }
            }
        }
        m
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; x.len()];
        self.apply(x, &mut ax);
        norm(&ax.iter().zip(b).map(|(a, b)| b - a).collect::<Vec<_>>())
    }

    pub fn solve(&self, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveInfo)> {
        let mut out = self.solve_many(&[b.to_vec()], opts)?;
        Ok(out.pop().expect("one right-hand side"))
    }

    /// Solves for several right-hand sides; the dense path factors once.
    pub fn solve_many(&self, bs: &[Vec<f64>], opts: &SolverOptions) -> Result<Vec<(Vec<f64>, SolveInfo)>> {
        let n = self.unknowns();
        if n == 0 {
            return Ok(bs
                .iter()
                .map(|_| {
                    (
                        Vec::new(),
                        SolveInfo {
                            method: "empty".into(),
                            unknowns: 0,
                            iterations: 0,
                            residual: 0.0,
                        },
                    )
                })
                .collect());
        }
        if n < opts.dense_below {
            let lu = self.dense().lu();
            return bs
                .iter()
                .map(|b| {
                    let x = lu
                        .solve(&DVector::from_column_slice(b))
                        .ok_or(Error::SolverDiverged {
                            iterations: 0,
                            residual: f64::INFINITY,
                        })?;
                    let x: Vec<f64> = x.iter().copied().collect();
                    let residual = self.residual(&x, b) / norm(b).max(f64::MIN_POSITIVE);
                    Ok((
                        x,
                        SolveInfo {
                            method: "dense_lu".into(),
                            unknowns: n,
                            iterations: 1,
                            residual,
                        },
                    ))
                })
                .collect();
        }
        bs.par_iter().map(|b| self.cg(b, opts)).collect()
    }

    fn cg(&self, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveInfo)> {
        let n = self.unknowns();
        let bnorm = norm(b);
        let info = |iterations, residual| SolveInfo {
            method: "cg".into(),
            unknowns: n,
            iterations,
            residual,
        };
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok((x, info(0, 0.0)));
        }
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr = dot(&r, &r);
        let max_iter = opts.max_iter.unwrap_or(10 * n + 1000);
        for it in 1..=max_iter {
            self.apply(&p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new = dot(&r, &r);
            if rr_new.sqrt() <= opts.tol * bnorm {
                // confirm against the true residual; recursion drift can
                // make the updated one optimistic
                let true_res = self.residual(&x, b) / bnorm;
                if true_res <= opts.tol * 10.0 {
                    return Ok((x, info(it, true_res)));
                }
                r = b.iter().zip(self.mul(&x)).map(|(b, ax)| b - ax).collect();
                p = r.clone();
                rr = dot(&r, &r);
                continue;
            }
            let beta = rr_new / rr;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_new;
        }
        Err(Error::SolverDiverged {
            iterations: max_iter,
            residual: self.residual(&x, b) / bnorm,
        })
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply(x, &mut out);
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
