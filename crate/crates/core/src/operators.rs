//! Conservative three-point discretizations of `-Δ = -(1/κ) d/dx (a κ d/dx)`
//! and their weighted-orthonormal eigenbases.
//!
//! Walls are closed with a ghost cell: the Dirichlet ghost holds `-u_0`
//! (odd reflection), the Neumann ghost holds `+u_0` (even reflection). With
//! these closures the odd and even extensions of base eigenvectors are exact
//! eigenvectors of the periodic operator on the doubled grid.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Coefficients, Grid1D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
    Periodic,
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dirichlet => "dirichlet",
            Self::Neumann => "neumann",
            Self::Periodic => "periodic",
        })
    }
}

/// Assembled operator in flux form.
///
/// `conductance[f]` is `a_f κ_f` on face `f`, where face `f` separates cells
/// `f - 1` and `f`. Faces `0` and `n` are the walls; for periodic operators
/// they are the same face and must carry the same value.
#[derive(Debug, Clone)]
pub struct Operator {
    bc: BoundaryCondition,
    grid: Grid1D,
    conductance: Vec<f64>,
}

pub fn assemble_laplacian(
    grid: &Grid1D,
    coeffs: &Coefficients,
    bc: BoundaryCondition,
) -> Result<Operator> {
    let n = grid.n();
    if coeffs.n() != n || coeffs.a.len() != n + 1 {
        return invalid(format!(
            "coefficients sized for {} cells / {} faces, grid has {n} cells",
            coeffs.n(),
            coeffs.a.len()
        ));
    }
    let scale = coeffs.kappa.iter().map(|k| k.abs()).fold(1.0f64, f64::max);
    if coeffs
        .kappa
        .iter()
        .zip(grid.kappa())
        .any(|(a, b)| (a - b).abs() > 1e-14 * scale)
    {
        return invalid("coefficient density does not match the grid density");
    }
    let kappa = grid.kappa();
    let mut conductance = Vec::with_capacity(n + 1);
    for f in 0..=n {
        let kf = if f == 0 || f == n {
            match bc {
                // Ghost density is the even reflection of the wall cell.
                BoundaryCondition::Dirichlet | BoundaryCondition::Neumann => {
                    kappa[if f == 0 { 0 } else { n - 1 }]
                }
                BoundaryCondition::Periodic => 0.5 * (kappa[n - 1] + kappa[0]),
            }
        } else {
            0.5 * (kappa[f - 1] + kappa[f])
        };
        conductance.push(coeffs.a[f] * kf);
    }
    if bc == BoundaryCondition::Periodic && (coeffs.a[0] - coeffs.a[n]).abs() > 1e-14 * coeffs.a[0]
    {
        return invalid("periodic operator needs matching wall faces a[0] == a[n]");
    }
    Ok(Operator {
        bc,
        grid: grid.clone(),
        conductance,
    })
}

impl Operator {
    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Visits the nonzero couplings of row `i` as `(column, coefficient)` of
    /// the flux sum `Σ c_f (u_i - u_j)` before the `1/(κ_i h²)` scaling.
    fn for_each_coupling(&self, i: usize, mut visit: impl FnMut(usize, f64)) {
        let n = self.n();
        let c = &self.conductance;
        // Left face of cell i is face i, right face is face i + 1.
        let left = c[i];
        let right = c[i + 1];
        match (i, self.bc) {
            (0, BoundaryCondition::Dirichlet) => visit(0, 2.0 * left),
            (0, BoundaryCondition::Neumann) => {}
            (0, BoundaryCondition::Periodic) => {
                visit(0, left);
                visit(n - 1, -left);
            }
            _ => {
                visit(i, left);
                visit(i - 1, -left);
            }
        }
        match (i + 1 == n, self.bc) {
            (true, BoundaryCondition::Dirichlet) => visit(i, 2.0 * right),
            (true, BoundaryCondition::Neumann) => {}
            (true, BoundaryCondition::Periodic) => {
                visit(i, right);
                visit(0, -right);
            }
            (false, _) => {
                visit(i, right);
                visit(i + 1, -right);
            }
        }
    }

    /// Dense matrix of `-Δ` acting on cell values.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let h2 = self.grid.h() * self.grid.h();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let s = 1.0 / (self.grid.kappa()[i] * h2);
            self.for_each_coupling(i, |j, v| m[(i, j)] += s * v);
        }
        m
    }

    /// `W^{1/2} A W^{-1/2}`, symmetric by construction.
    pub fn symmetric_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let h2 = self.grid.h() * self.grid.h();
        let kappa = self.grid.kappa();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            self.for_each_coupling(i, |j, v| {
                m[(i, j)] += v / (h2 * (kappa[i] * kappa[j]).sqrt());
            });
        }
        m
    }

    /// Matrix-free application of `-Δ`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n(), "field size does not match operator");
        let h2 = self.grid.h() * self.grid.h();
        (0..self.n())
            .map(|i| {
                let mut acc = 0.0;
                self.for_each_coupling(i, |j, v| acc += v * u[j]);
                acc / (self.grid.kappa()[i] * h2)
            })
            .collect()
    }
}

/// Eigenpairs of one operator, ascending, orthonormal in `⟨u, v⟩ = Σ w_i u_i v_i`.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    bc: BoundaryCondition,
    eigenvalues: Vec<f64>,
    frequencies: Vec<f64>,
    vectors: DMatrix<f64>,
    weights: Vec<f64>,
}

impl EigenBasis {
    /// Assembles a basis from columns that are already weighted-orthonormal.
    pub fn from_parts(
        bc: BoundaryCondition,
        eigenvalues: Vec<f64>,
        vectors: DMatrix<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if vectors.ncols() != eigenvalues.len() || vectors.nrows() != weights.len() {
            return invalid(format!(
                "basis shape {}x{} does not match {} eigenvalues / {} weights",
                vectors.nrows(),
                vectors.ncols(),
                eigenvalues.len(),
                weights.len()
            ));
        }
        if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
            return invalid("eigenvalues must be ascending");
        }
        let frequencies = eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
        Ok(Self {
            bc,
            eigenvalues,
            frequencies,
            vectors,
            weights,
        })
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    /// Number of modes.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of grid cells.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Squared frequencies `ν_k²`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Frequencies `ν_k`.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Columns are the eigenvectors sampled at cell centers.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequencies.last().copied().unwrap_or(0.0)
    }

    /// Number of modes with frequency `≤ lambda`.
    pub fn count_up_to(&self, lambda: f64) -> usize {
        self.frequencies.partition_point(|&f| f <= lambda)
    }

    /// `⟨e_k, u⟩` for every mode.
    pub fn coefficients(&self, u: &[f64]) -> Result<DVector<f64>> {
        if u.len() != self.dim() {
            return invalid(format!(
                "field has {} entries, basis lives on {} cells",
                u.len(),
                self.dim()
            ));
        }
        let wu = DVector::from_iterator(u.len(), u.iter().zip(&self.weights).map(|(a, w)| a * w));
        Ok(self.vectors.tr_mul(&wu))
    }

    /// `Σ_k y_k e_k` for the leading `y.len()` modes.
    pub fn synthesize(&self, y: &DVector<f64>) -> Vec<f64> {
        let k = y.len();
        (self.vectors.columns(0, k) * y).as_slice().to_vec()
    }

    /// Gram matrix of the modes in the weighted inner product.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut wv = self.vectors.clone();
        for (mut row, w) in wv.row_iter_mut().zip(&self.weights) {
            row *= *w;
        }
        self.vectors.tr_mul(&wv)
    }
}

/// Flips each column so that its largest-magnitude entry is positive. Entries
/// within a relative `1e-9` of the maximum count as ties; the lowest index wins.
pub(crate) fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let amax = col.amax();
        if amax == 0.0 {
            continue;
        }
        let pivot = col
            .iter()
            .position(|v| v.abs() >= amax * (1.0 - 1e-9))
            .unwrap_or(0);
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Dense symmetric eigensolve of the symmetrized operator.
pub fn eigendecompose(op: &Operator) -> Result<EigenBasis> {
    let n = op.n();
    let sym = op.symmetric_matrix();
    let norm = sym.amax();
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0).ok_or_else(|| {
        Error::Numerical(format!(
            "symmetric eigensolve did not converge ({} operator, n = {n}, max entry {norm:e})",
            op.bc()
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let inv_sqrt_w: Vec<f64> = op.grid().weights().iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut vectors = DMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (col, &k) in order.iter().enumerate() {
        // Round-off can push the kernel slightly negative.
        eigenvalues.push(eig.eigenvalues[k].max(0.0));
        for i in 0..n {
            vectors[(i, col)] = eig.eigenvectors[(i, k)] * inv_sqrt_w[i];
        }
    }
    fix_signs(&mut vectors);
    EigenBasis::from_parts(op.bc(), eigenvalues, vectors, op.grid().weights().to_vec())
}

/// Closed-form basis for κ ≡ 1, a ≡ 1: `sin(kπx/L)`, `k = 1..=n` (Dirichlet)
/// or `cos(kπx/L)`, `k = 0..n` (Neumann), with eigenvalues `(4/h²) sin²(kπh/2L)`.
pub fn analytic_eigenbasis(grid: &Grid1D, bc: BoundaryCondition) -> Result<EigenBasis> {
    if !grid.has_unit_density() {
        return Err(Error::Unsupported(
            "closed-form eigenbasis requires constant coefficients".into(),
        ));
    }
    let n = grid.n();
    let h = grid.h();
    let length = grid.length();
    let modes: Vec<usize> = match bc {
        BoundaryCondition::Dirichlet => (1..=n).collect(),
        BoundaryCondition::Neumann => (0..n).collect(),
        BoundaryCondition::Periodic => {
            return Err(Error::Unsupported(
                "closed-form basis is provided for Dirichlet and Neumann only".into(),
            ))
        }
    };
    let mut vectors = DMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (col, &k) in modes.iter().enumerate() {
        let wave = k as f64 * PI / length;
        let s = (0.5 * wave * h).sin();
        eigenvalues.push(4.0 / (h * h) * s * s);
        let mut norm2 = 0.0;
        for i in 0..n {
            // kπx/L at x = (i + ½)h, reduced exactly modulo 2π.
            let phase = PI * ((k * (2 * i + 1)) % (4 * n)) as f64 / (2 * n) as f64;
            let v = match bc {
                BoundaryCondition::Dirichlet => phase.sin(),
                _ => phase.cos(),
            };
            vectors[(i, col)] = v;
            norm2 += h * v * v;
        }
        vectors.column_mut(col).scale_mut(1.0 / norm2.sqrt());
    }
    fix_signs(&mut vectors);
    EigenBasis::from_parts(bc, eigenvalues, vectors, grid.weights().to_vec())
}

/// Closed form when the coefficients allow it, dense eigensolve otherwise.
pub fn eigenbasis(
    grid: &Grid1D,
    coeffs: &Coefficients,
    bc: BoundaryCondition,
) -> Result<EigenBasis> {
    if coeffs.is_constant() && grid.has_unit_density() && bc != BoundaryCondition::Periodic {
        analytic_eigenbasis(grid, bc)
    } else {
        eigendecompose(&assemble_laplacian(grid, coeffs, bc)?)
    }
}

/// Largest principal angle (radians) between the column spaces of two
/// weighted-orthonormal blocks.
pub fn subspace_angle(a: &DMatrix<f64>, b: &DMatrix<f64>, weights: &[f64]) -> f64 {
    // sin θ_max = ‖W^{1/2}(A − B Bᵀ W A)‖₂, accurate for small angles
    // where the cosine form is not.
    let mut wa = a.clone();
    for (mut row, w) in wa.row_iter_mut().zip(weights) {
        row *= *w;
    }
    let mut resid = a - b * b.tr_mul(&wa);
    for (mut row, w) in resid.row_iter_mut().zip(weights) {
        row *= w.sqrt();
    }
    let smax = resid.singular_values().max();
    smax.clamp(0.0, 1.0).asin()
}
