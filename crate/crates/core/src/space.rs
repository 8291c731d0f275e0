//! Finite truncations of the state spaces, weighted inner products and the
//! dense operator container shared by every other module.
//!
//! Covectors and vectors share one representation: a covector is stored as
//! its Riesz representative with respect to the weighted inner product
//! `<u, v> = sum_i w_i u_i v_i`. With all-ones weights this is plain `R^n`.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DynamicsError, Result};

/// Dimensions of the truncated position space `X` and constraint space `Y`,
/// together with the quadrature weights defining the inner product on `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceSpec {
    dim_x: usize,
    dim_y: usize,
    weights: DVector<f64>,
    nodes: Option<Vec<f64>>,
}

impl SpaceSpec {
    pub fn new(dim_x: usize, dim_y: usize, weights: DVector<f64>) -> Result<Self> {
        if dim_x == 0 || dim_y == 0 {
            return Err(DynamicsError::invalid("dimensions must be positive"));
        }
        if dim_y > dim_x {
            return Err(DynamicsError::invalid(format!(
                "dim_y = {dim_y} exceeds dim_x = {dim_x}; the constraint derivative cannot be onto"
            )));
        }
        if weights.len() != dim_x {
            return Err(DynamicsError::invalid(format!(
                "expected {dim_x} weights, got {}",
                weights.len()
            )));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(DynamicsError::invalid(format!(
                "weight {i} = {w} is not strictly positive"
            )));
        }
        Ok(Self {
            dim_x,
            dim_y,
            weights,
            nodes: None,
        })
    }

    /// Plain Euclidean space `R^dim_x` with a `dim_y`-dimensional constraint.
    pub fn euclidean(dim_x: usize, dim_y: usize) -> Result<Self> {
        Self::new(dim_x, dim_y, DVector::from_element(dim_x, 1.0))
    }

    /// Attaches quadrature node locations, used only for output labeling.
    pub fn with_nodes(mut self, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() != self.dim_x {
            return Err(DynamicsError::invalid("node count must equal dim_x"));
        }
        self.nodes = Some(nodes);
        Ok(self)
    }

    /// Same weights and nodes, different constraint dimension.
    pub fn with_dim_y(&self, dim_y: usize) -> Result<Self> {
        let mut s = Self::new(self.dim_x, dim_y, self.weights.clone())?;
        s.nodes = self.nodes.clone();
        Ok(s)
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn nodes(&self) -> Option<&[f64]> {
        self.nodes.as_deref()
    }

    pub fn has_unit_weights(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// Weighted inner product `sum_i w_i u_i v_i`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        if u.len() != self.dim_x || v.len() != self.dim_x {
            return Err(DynamicsError::invalid(format!(
                "inner product expects vectors of length {}, got {} and {}",
                self.dim_x,
                u.len(),
                v.len()
            )));
        }
        Ok(self.inner_unchecked(u, v))
    }

    pub(crate) fn inner_unchecked(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.weights
            .iter()
            .zip(u.iter().zip(v.iter()))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn norm(&self, u: &DVector<f64>) -> f64 {
        self.inner_unchecked(u, u).max(0.0).sqrt()
    }

    /// Row-covector of the functional `xi -> <u, xi>` as a plain matrix row.
    pub(crate) fn functional_row(&self, u: &DVector<f64>) -> DVector<f64> {
        u.component_mul(&self.weights)
    }

    /// Adjoint `A'` of a map `A: X -> Y` with respect to the weighted product
    /// on `X` and the Euclidean product on `Y`: `A' = W^{-1} A^T`.
    pub fn adjoint(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut t = a.transpose();
        for (mut row, w) in t.row_iter_mut().zip(self.weights.iter()) {
            row /= *w;
        }
        t
    }
}

/// Dense real matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap(DMatrix<f64>);

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(DynamicsError::invalid("linear map must have positive shape"));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(DynamicsError::invalid("linear map has non-finite entries"));
        }
        Ok(Self(matrix))
    }

    pub fn from_row_slice(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(DynamicsError::invalid(format!(
                "{rows}x{cols} map needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, entries))
    }

    /// From nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(DynamicsError::invalid("ragged matrix rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(rows.len(), cols, &flat)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    /// `||A - A^T||_F <= tol * max(1, ||A||_F)`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square() && {
            let scale = self.0.norm().max(1.0);
            (&self.0 - self.0.transpose()).norm() <= tol * scale
        }
    }
}

impl Deref for LinearMap {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// A point `z = (t, x, v)` of the extended phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

impl PhasePoint {
    pub fn new(t: f64, x: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        if x.len() != v.len() {
            return Err(DynamicsError::invalid(format!(
                "position has length {} but velocity has length {}",
                x.len(),
                v.len()
            )));
        }
        let z = Self { t, x, v };
        if !z.is_finite() {
            return Err(DynamicsError::invalid("phase point has non-finite components"));
        }
        Ok(z)
    }

    pub fn from_slices(t: f64, x: &[f64], v: &[f64]) -> Result<Self> {
        Self::new(t, DVector::from_column_slice(x), DVector::from_column_slice(v))
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }
}

/// Relative threshold under which a square operator is treated as symmetric
/// in [`coercivity_estimate`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Estimate of the coercivity constant `K` in `|<v, P v>| >= K ||v||^2`.
///
/// When `P` is self-adjoint in the weighted product the exact value comes
/// from the spectrum: the smallest absolute eigenvalue if the spectrum has
/// one sign, and zero otherwise (an indefinite form vanishes on some unit
/// vector). Otherwise the minimum of the Rayleigh quotient over `samples`
/// seeded random directions is returned.
pub fn coercivity_estimate(p: &LinearMap, space: &SpaceSpec, samples: usize, rng_seed: u64) -> Result<f64> {
    if !p.is_square() {
        return Err(DynamicsError::invalid(format!(
            "coercivity needs a square operator, got {}x{}",
            p.rows(),
            p.cols()
        )));
    }
    let n = space.dim_x();
    if p.rows() != n {
        return Err(DynamicsError::invalid(format!(
            "operator is {}x{} but dim_x = {n}",
            p.rows(),
            p.cols()
        )));
    }

    // <v, P v>_w / <v, v>_w equals the Rayleigh quotient of S = D P D^{-1}
    // at u = D v, with D = diag(sqrt(w)).
    let sqrt_w = space.weights().map(f64::sqrt);
    let mut s = p.matrix().clone();
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] *= sqrt_w[i] / sqrt_w[j];
        }
    }

    let scale = s.norm().max(1.0);
    if (&s - s.transpose()).norm() <= SYMMETRY_TOL * scale {
        let sym = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym).eigenvalues;
        let min = eig.min();
        let max = eig.max();
        if min > 0.0 || max < 0.0 {
            return Ok(eig.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min));
        }
        return Ok(0.0);
    }

    if samples == 0 {
        return Err(DynamicsError::invalid("sample count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let nn = u.norm_squared();
        if nn == 0.0 {
            continue;
        }
        let q = u.dot(&(&s * &u)).abs() / nn;
        best = best.min(q);
    }
    Ok(best)
}

/// Smallest norm (in the weighted product) of `a + s (b - a)` over `s` in
/// `[0, 1]`, i.e. the distance from the origin to the chord `[a, b]`.
pub fn chord_min_norm(space: &SpaceSpec, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d = b - a;
    let dd = space.inner_unchecked(&d, &d);
    let s = if dd > 0.0 {
        (-space.inner_unchecked(a, &d) / dd).clamp(0.0, 1.0)
    } else {
        0.0
    };
    space.norm(&(a + d * s))
}
