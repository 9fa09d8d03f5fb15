//! Discrete Poisson problem `εΔw = f` with Dirichlet data on the far field
//! and prescribed normal derivative `∇w·n = g` on wall faces.
//!
//! The 5-point Laplacian is closed at wall faces by ghost values
//! `w_G = w_P + h g (n·e)`, e being the face direction. After eliminating the
//! Dirichlet nodes the system for the unknown nodes is symmetric positive
//! definite and is solved by preconditioned conjugate gradients, either with
//! a Jacobi preconditioner or with a cached envelope Cholesky factor of the
//! same matrix (which makes repeated solves on one grid cheap).

use crate::error::{Error, Result};
use crate::mesh::{Grid, NodeKind};

/// Boundary data: one Dirichlet value per far-field node (ordered like
/// [`Grid::far_field`]) and one normal derivative per wall face (ordered like
/// [`Grid::wall_faces`]).
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBc {
    pub dirichlet: Vec<f64>,
    pub flux: Vec<f64>,
}

impl MixedBc {
    /// Homogeneous data for a grid.
    pub fn zero(grid: &Grid) -> Self {
        Self {
            dirichlet: vec![0.0; grid.far_field().len()],
            flux: vec![0.0; grid.wall_faces().len()],
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if self.dirichlet.len() != grid.far_field().len() || self.flux.len() != grid.wall_faces().len() {
            return Err(Error::Construction(format!(
                "boundary data sizes ({}, {}) do not match grid ({}, {})",
                self.dirichlet.len(),
                self.flux.len(),
                grid.far_field().len(),
                grid.wall_faces().len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    Jacobi,
    Cholesky,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 20_000,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

/// Cholesky factor stored row by row over the matrix envelope.
#[derive(Debug, Clone)]
struct EnvelopeCholesky {
    /// First column of each row's envelope.
    first: Vec<usize>,
    /// Start of each row in `values`; row i holds columns first[i]..=i.
    start: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    fn factor(n: usize, diag: &[f64], offdiag: &[Vec<usize>]) -> Result<Self> {
        let first: Vec<usize> = (0..n)
            .map(|i| offdiag[i].iter().copied().filter(|&j| j < i).min().unwrap_or(i))
            .collect();
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0usize;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        let mut values = vec![0.0; total];
        for i in 0..n {
            values[start[i] + i - first[i]] = diag[i];
            for &j in &offdiag[i] {
                if j < i {
                    values[start[i] + j - first[i]] = -1.0;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let row_i = &values[start[i] + lo - fi..start[i] + j - fi];
                let row_j = &values[start[j] + lo - fj..start[j] + j - fj];
                let dot: f64 = row_i.iter().zip(row_j).map(|(a, b)| a * b).sum();
                let idx = start[i] + j - fi;
                if j == i {
                    let d = values[idx] - dot;
                    if !(d > 0.0) {
                        return Err(Error::Singular(format!("pivot {d:e} at row {i}")));
                    }
                    values[idx] = d.sqrt();
                } else {
                    values[idx] = (values[idx] - dot) / values[start[j] + j - fj];
                }
            }
        }
        Ok(Self { first, start, values })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&x[fi..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (k, &l) in row[..i - fi].iter().enumerate() {
                x[fi + k] -= l * xi;
            }
        }
    }
}

/// Result of a linear solve.
#[derive(Debug, Clone)]
pub struct Solution {
    /// Values at every grid node (Dirichlet data on the far field, zero on solid nodes).
    pub field: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Assembled operator `−h²Δ_h` on the unknown nodes of a grid.
#[derive(Debug, Clone)]
pub struct PoissonSolver<'g> {
    grid: &'g Grid,
    diag: Vec<f64>,
    /// Unknown-node neighbours of each unknown (coefficient −1).
    offdiag: Vec<Vec<usize>>,
    options: SolverOptions,
    /// Factor in permuted order together with the permutation (perm[k] = unknown).
    factor: Option<(EnvelopeCholesky, Vec<usize>)>,
}

impl<'g> PoissonSolver<'g> {
    pub fn new(grid: &'g Grid, options: SolverOptions) -> Result<Self> {
        if grid.far_field().is_empty() {
            return Err(Error::Singular("no Dirichlet (far-field) nodes; the mixed problem is not unique".into()));
        }
        let unknowns = grid.unknowns();
        let mut diag = vec![0.0; unknowns.len()];
        let mut offdiag = vec![Vec::with_capacity(4); unknowns.len()];
        for (k, &node) in unknowns.iter().enumerate() {
            for dir in 0..4 {
                if let Some(nb) = grid.neighbor(node, dir) {
                    diag[k] += 1.0;
                    if let Some(m) = grid.unknown_index(nb) {
                        offdiag[k].push(m);
                    }
                }
            }
        }
        let mut solver = Self {
            grid,
            diag,
            offdiag,
            options,
            factor: None,
        };
        if options.preconditioner == Preconditioner::Cholesky {
            solver.factor = Some(solver.build_factor()?);
        }
        Ok(solver)
    }

    fn build_factor(&self) -> Result<(EnvelopeCholesky, Vec<usize>)> {
        let grid = self.grid;
        let (nx, ny) = grid.dims();
        // order along the shorter grid direction to keep the envelope narrow
        let mut perm: Vec<usize> = (0..grid.unknowns().len()).collect();
        if nx > ny {
            perm.sort_by_key(|&k| {
                let node = grid.unknowns()[k];
                (node % nx, node / nx)
            });
        }
        let mut inverse = vec![0usize; perm.len()];
        for (p, &k) in perm.iter().enumerate() {
            inverse[k] = p;
        }
        let diag: Vec<f64> = perm.iter().map(|&k| self.diag[k]).collect();
        let off: Vec<Vec<usize>> = perm
            .iter()
            .map(|&k| self.offdiag[k].iter().map(|&m| inverse[m]).collect())
            .collect();
        Ok((EnvelopeCholesky::factor(perm.len(), &diag, &off)?, perm))
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..x.len() {
            let mut s = self.diag[k] * x[k];
            for &m in &self.offdiag[k] {
                s -= x[m];
            }
            out[k] = s;
        }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        match &self.factor {
            Some((chol, perm)) => {
                let mut tmp: Vec<f64> = perm.iter().map(|&k| r[k]).collect();
                chol.solve_in_place(&mut tmp);
                for (p, &k) in perm.iter().enumerate() {
                    z[k] = tmp[p];
                }
            }
            None => {
                for k in 0..r.len() {
                    z[k] = r[k] / self.diag[k];
                }
            }
        }
    }

    /// Right-hand side of `−h²Δ_h w = −h² f/ε` after moving boundary data over.
    fn rhs(&self, f: &[f64], bc: &MixedBc, eps: f64) -> Vec<f64> {
        let grid = self.grid;
        let h = grid.spacing();
        let dirichlet = self.dirichlet_field(bc);
        let mut b = vec![0.0; grid.unknowns().len()];
        for (k, &node) in grid.unknowns().iter().enumerate() {
            let mut s = -h * h * f[node] / eps;
            for dir in 0..4 {
                if let Some(nb) = grid.neighbor(node, dir) {
                    if grid.unknown_index(nb).is_none() {
                        s += dirichlet[nb];
                    }
                }
            }
            for fi in grid.faces_of(node) {
                s += h * bc.flux[fi] * grid.wall_faces()[fi].normal_dot_dir();
            }
            b[k] = s;
        }
        b
    }

    fn dirichlet_field(&self, bc: &MixedBc) -> Vec<f64> {
        let mut w = vec![0.0; self.grid.len()];
        for (b, &v) in self.grid.far_field().iter().zip(&bc.dirichlet) {
            w[b.node] = v;
        }
        w
    }

    /// Solves `εΔ_h w = f` (f given per node) with the mixed boundary data.
    pub fn solve(&self, f: &[f64], bc: &MixedBc, eps: f64) -> Result<Solution> {
        self.solve_from(f, bc, eps, None)
    }

    /// As [`PoissonSolver::solve`], starting CG from a previous field.
    pub fn solve_from(&self, f: &[f64], bc: &MixedBc, eps: f64, guess: Option<&[f64]>) -> Result<Solution> {
        let grid = self.grid;
        bc.check(grid)?;
        if f.len() != grid.len() {
            return Err(Error::Construction(format!("source has {} entries, grid {}", f.len(), grid.len())));
        }
        if !(eps > 0.0) {
            return Err(Error::domain("epsilon", eps, "(0, ∞)"));
        }
        let b = self.rhs(f, bc, eps);
        let n = b.len();
        let mut x: Vec<f64> = match guess {
            Some(g) => grid.unknowns().iter().map(|&node| g[node]).collect(),
            None => vec![0.0; n],
        };
        let b_norm = norm(&b);
        let mut r = vec![0.0; n];
        self.apply(&x, &mut r);
        for k in 0..n {
            r[k] = b[k] - r[k];
        }
        let mut iterations = 0;
        let mut rel = if b_norm > 0.0 { norm(&r) / b_norm } else { norm(&r) };
        if b_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            rel = 0.0;
        }
        if rel > self.options.rel_tol {
            let mut z = vec![0.0; n];
            self.precondition(&r, &mut z);
            let mut p = z.clone();
            let mut ap = vec![0.0; n];
            let mut rz = dot(&r, &z);
            while rel > self.options.rel_tol {
                if iterations >= self.options.max_iter {
                    return Err(Error::NoConvergence {
                        iterations,
                        residual: rel,
                    });
                }
                self.apply(&p, &mut ap);
                let alpha = rz / dot(&p, &ap);
                for k in 0..n {
                    x[k] += alpha * p[k];
                    r[k] -= alpha * ap[k];
                }
                iterations += 1;
                rel = norm(&r) / b_norm;
                self.precondition(&r, &mut z);
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for k in 0..n {
                    p[k] = z[k] + beta * p[k];
                }
            }
        }
        let mut field = self.dirichlet_field(bc);
        for (k, &node) in grid.unknowns().iter().enumerate() {
            field[node] = x[k];
        }
        Ok(Solution {
            field,
            iterations,
            relative_residual: rel,
        })
    }

    /// `Δ_h w` at every unknown node (zero elsewhere), closing wall faces with
    /// the ghost values implied by `bc.flux`.
    pub fn laplacian(&self, w: &[f64], bc: &MixedBc) -> Vec<f64> {
        let grid = self.grid;
        let h = grid.spacing();
        let mut out = vec![0.0; grid.len()];
        for &node in grid.unknowns() {
            let mut s = 0.0;
            for dir in 0..4 {
                if let Some(nb) = grid.neighbor(node, dir) {
                    s += w[nb] - w[node];
                }
            }
            for fi in grid.faces_of(node) {
                s += h * bc.flux[fi] * grid.wall_faces()[fi].normal_dot_dir();
            }
            out[node] = s / (h * h);
        }
        out
    }
}

/// One-shot solve with default options.
pub fn solve_mixed_poisson(grid: &Grid, f: &[f64], bc: &MixedBc, eps: f64) -> Result<Vec<f64>> {
    Ok(PoissonSolver::new(grid, SolverOptions::default())?.solve(f, bc, eps)?.field)
}

/// Dirichlet data sampled from a function at the far-field nodes.
pub fn dirichlet_from(grid: &Grid, w: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    grid.far_field()
        .iter()
        .map(|b| {
            let [x, y] = grid.position(b.node);
            w(x, y)
        })
        .collect()
}

/// Per-face normal derivative `∇w·n` of a function with known gradient.
pub fn flux_from(grid: &Grid, grad: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
    grid.wall_faces()
        .iter()
        .map(|f| {
            let [x, y] = grid.position(f.node);
            let g = grad(x, y);
            g[0] * f.normal[0] + g[1] * f.normal[1]
        })
        .collect()
}

/// Whether a node is a far-field (Dirichlet) node.
pub fn is_dirichlet(grid: &Grid, node: usize) -> bool {
    matches!(grid.kind(node), NodeKind::FarField(_))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
