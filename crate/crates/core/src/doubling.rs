//! The doubled domain: two copies of `[0, L]` glued at both walls into a
//! circle of circumference `2L`.
//!
//! Plus-copy cell `i` is doubled cell `i`; minus-copy cell `i` is doubled
//! cell `2n - 1 - i`, so each wall of the base interval sits between a plus
//! cell and its mirror image. Density and diffusion are reflected evenly onto
//! the minus copy.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::grid::{Coefficients, ControlRegion, Grid1D};
use crate::operators::{assemble_laplacian, BoundaryCondition, EigenBasis, Operator};

#[derive(Debug, Clone)]
pub struct DoubleDomain {
    base: Grid1D,
    base_coeffs: Coefficients,
    doubled: Grid1D,
    doubled_coeffs: Coefficients,
    embed_plus: Vec<usize>,
    embed_minus: Vec<usize>,
    operator: Operator,
}

pub fn build_double(grid: &Grid1D, coeffs: &Coefficients) -> Result<DoubleDomain> {
    let n = grid.n();
    if coeffs.n() != n || coeffs.a.len() != n + 1 {
        return invalid("coefficients do not match the base grid");
    }
    let kappa: Vec<f64> = grid
        .kappa()
        .iter()
        .chain(grid.kappa().iter().rev())
        .copied()
        .collect();
    // Face f of the doubled grid separates doubled cells f-1 and f; faces 0
    // and 2n are both the left wall of the base interval.
    let a: Vec<f64> = (0..=2 * n)
        .map(|f| {
            if f <= n {
                coeffs.a[f]
            } else {
                coeffs.a[2 * n - f]
            }
        })
        .collect();
    let doubled = Grid1D::from_density(2 * n, 2.0 * grid.length(), kappa.clone())?;
    let doubled_coeffs = Coefficients::new(kappa, a)?;
    let operator = assemble_laplacian(&doubled, &doubled_coeffs, BoundaryCondition::Periodic)?;
    Ok(DoubleDomain {
        base: grid.clone(),
        base_coeffs: coeffs.clone(),
        doubled,
        doubled_coeffs,
        embed_plus: (0..n).collect(),
        embed_minus: (0..n).map(|i| 2 * n - 1 - i).collect(),
        operator,
    })
}

impl DoubleDomain {
    pub fn base(&self) -> &Grid1D {
        &self.base
    }

    pub fn base_coeffs(&self) -> &Coefficients {
        &self.base_coeffs
    }

    pub fn doubled(&self) -> &Grid1D {
        &self.doubled
    }

    pub fn doubled_coeffs(&self) -> &Coefficients {
        &self.doubled_coeffs
    }

    pub fn embed_plus(&self) -> &[usize] {
        &self.embed_plus
    }

    pub fn embed_minus(&self) -> &[usize] {
        &self.embed_minus
    }

    /// Periodic operator on the doubled grid.
    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    fn check_base(&self, what: &str, len: usize) -> Result<()> {
        if len != self.n() {
            return invalid(format!(
                "{what} has {len} entries, base grid has {}",
                self.n()
            ));
        }
        Ok(())
    }

    /// `ũ(x, +1) = (u + v)(x)`, `ũ(x, -1) = (-u + v)(x)`.
    pub fn extend_pair(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_base("u", u.len())?;
        self.check_base("v", v.len())?;
        let mut out = vec![0.0; 2 * self.n()];
        for i in 0..self.n() {
            out[self.embed_plus[i]] = u[i] + v[i];
            out[self.embed_minus[i]] = -u[i] + v[i];
        }
        Ok(out)
    }

    /// Inverse of [`extend_pair`](Self::extend_pair): odd and even parts, each
    /// halved.
    pub fn split(&self, field: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if field.len() != 2 * self.n() {
            return invalid(format!(
                "doubled field has {} entries, expected {}",
                field.len(),
                2 * self.n()
            ));
        }
        let (u, v) = (0..self.n())
            .map(|i| {
                let p = field[self.embed_plus[i]];
                let m = field[self.embed_minus[i]];
                (0.5 * (p - m), 0.5 * (p + m))
            })
            .unzip();
        Ok((u, v))
    }

    /// Odd (Dirichlet) or even (Neumann) extension, normalized on the doubled grid.
    pub fn extend_eigenfunction(&self, e: &[f64], bc: BoundaryCondition) -> Result<Vec<f64>> {
        self.check_base("eigenfunction", e.len())?;
        let zero = vec![0.0; self.n()];
        let mut ext = match bc {
            BoundaryCondition::Dirichlet => self.extend_pair(e, &zero)?,
            BoundaryCondition::Neumann => self.extend_pair(&zero, e)?,
            BoundaryCondition::Periodic => {
                return invalid("only Dirichlet or Neumann eigenfunctions extend to the double")
            }
        };
        let norm = crate::spectral::l2_norm(&ext, self.doubled.weights());
        if norm == 0.0 {
            return invalid("cannot normalize a zero eigenfunction");
        }
        ext.iter_mut().for_each(|v| *v /= norm);
        Ok(ext)
    }

    /// `ω̃ = ω × {+1}`.
    pub fn lift_region(&self, region: &ControlRegion) -> Result<ControlRegion> {
        if region.n() != self.n() {
            return invalid("region does not live on the base grid");
        }
        let mut mask = vec![false; 2 * self.n()];
        for i in region.cells() {
            mask[self.embed_plus[i]] = true;
        }
        ControlRegion::from_mask(mask, self.doubled.h())
    }

    /// Values on the plus copy, in base order.
    pub fn restrict_plus(&self, field: &[f64]) -> Vec<f64> {
        self.embed_plus.iter().map(|&j| field[j]).collect()
    }

    /// Values on the minus copy, in base order.
    pub fn restrict_minus(&self, field: &[f64]) -> Vec<f64> {
        self.embed_minus.iter().map(|&j| field[j]).collect()
    }

    /// Boundary residuals of the split pair, with the cell across each wall
    /// read from the doubled field instead of from a ghost rule. Returns
    /// `(dirichlet_trace, neumann_flux)`, the latter in units of `a·Δu/h`.
    pub fn split_boundary_residuals(&self, field: &[f64]) -> Result<(f64, f64)> {
        let (u, v) = self.split(field)?;
        let n = self.n();
        let h = self.base.h();
        let mut trace: f64 = 0.0;
        let mut flux: f64 = 0.0;
        for (cell, face) in [(0, 0), (n - 1, n)] {
            let inside_plus = field[self.embed_plus[cell]];
            let across = field[self.embed_minus[cell]];
            // Odd part on the far side of the wall, and even part likewise.
            let u_across = 0.5 * (across - inside_plus);
            let v_across = 0.5 * (across + inside_plus);
            trace = trace.max((0.5 * (u[cell] + u_across)).abs());
            flux = flux.max((self.base_coeffs.a[face] * (v[cell] - v_across) / h).abs());
        }
        Ok((trace, flux))
    }
}

/// Where a doubled-domain mode came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeOrigin {
    pub bc: BoundaryCondition,
    pub index: usize,
}

/// Odd extensions of the Dirichlet modes together with even extensions of the
/// Neumann modes, merged in ascending eigenvalue order (Neumann first on ties).
#[derive(Debug, Clone)]
pub struct ExtendedBasis {
    basis: EigenBasis,
    origin: Vec<ModeOrigin>,
}

impl ExtendedBasis {
    pub fn new(dd: &DoubleDomain, dirichlet: &EigenBasis, neumann: &EigenBasis) -> Result<Self> {
        if dirichlet.bc() != BoundaryCondition::Dirichlet
            || neumann.bc() != BoundaryCondition::Neumann
        {
            return invalid("extended basis needs a Dirichlet and a Neumann basis");
        }
        if dirichlet.dim() != dd.n() || neumann.dim() != dd.n() {
            return invalid("bases do not live on the base grid of the double");
        }
        let mut modes: Vec<(f64, ModeOrigin)> = neumann
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(index, &l)| {
                (
                    l,
                    ModeOrigin {
                        bc: BoundaryCondition::Neumann,
                        index,
                    },
                )
            })
            .chain(
                dirichlet
                    .eigenvalues()
                    .iter()
                    .enumerate()
                    .map(|(index, &l)| {
                        (
                            l,
                            ModeOrigin {
                                bc: BoundaryCondition::Dirichlet,
                                index,
                            },
                        )
                    }),
            )
            .collect();
        // Stable: Neumann modes precede Dirichlet modes of equal eigenvalue.
        modes.sort_by(|a, b| a.0.total_cmp(&b.0));

        let size = 2 * dd.n();
        let mut vectors = DMatrix::zeros(size, modes.len());
        for (col, (_, origin)) in modes.iter().enumerate() {
            let source = match origin.bc {
                BoundaryCondition::Dirichlet => dirichlet,
                _ => neumann,
            };
            let ext = dd.extend_eigenfunction(
                source.vectors().column(origin.index).as_slice(),
                origin.bc,
            )?;
            vectors.column_mut(col).copy_from_slice(&ext);
        }
        let eigenvalues = modes.iter().map(|m| m.0).collect();
        let origin = modes.iter().map(|m| m.1).collect();
        let basis = EigenBasis::from_parts(
            BoundaryCondition::Periodic,
            eigenvalues,
            vectors,
            dd.doubled().weights().to_vec(),
        )?;
        Ok(Self { basis, origin })
    }

    pub fn basis(&self) -> &EigenBasis {
        &self.basis
    }

    pub fn origin(&self) -> &[ModeOrigin] {
        &self.origin
    }

    /// Column index of base mode `index` of the given family.
    pub fn column_of(&self, bc: BoundaryCondition, index: usize) -> Option<usize> {
        self.origin
            .iter()
            .position(|o| o.bc == bc && o.index == index)
    }
}

impl std::fmt::Display for ModeOrigin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}[{}]", self.bc, self.index)
    }
}

/// Multiset comparison of two ascending spectra; returns the largest
/// relative gap `|a - b| / max(|a|, |b|, 1)`.
pub fn spectrum_gap(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "spectra have {} and {} entries",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{analytic_eigenbasis, eigenbasis, eigendecompose};
    use crate::spectral::{project, SpectralCutoff};
    use rand::{Rng, SeedableRng};

    fn unit_double(n: usize) -> DoubleDomain {
        build_double(
            &Grid1D::uniform(n, 1.0).unwrap(),
            &Coefficients::constant(n),
        )
        .unwrap()
    }

    fn variable_double(n: usize) -> (DoubleDomain, EigenBasis, EigenBasis) {
        let g = crate::grid::make_uniform_grid(n, 1.0, |x| 1.0 + 0.5 * x).unwrap();
        let c = Coefficients::sample(&g, |x| 1.0 + 0.25 * (3.0 * x).cos()).unwrap();
        let dd = build_double(&g, &c).unwrap();
        let d = eigenbasis(&g, &c, BoundaryCondition::Dirichlet).unwrap();
        let nb = eigenbasis(&g, &c, BoundaryCondition::Neumann).unwrap();
        (dd, d, nb)
    }

    #[test]
    fn embeddings_and_weights() {
        let dd = unit_double(2);
        assert_eq!(dd.doubled().n(), 4);
        assert_eq!(dd.embed_plus(), &[0, 1]);
        assert_eq!(dd.embed_minus(), &[3, 2]);
        assert_eq!(dd.doubled().weights(), &[0.5; 4]);
        assert_eq!(dd.doubled().weights().iter().sum::<f64>(), 2.0);

        let g = Grid1D::from_density(2, 1.0, vec![1.0, 2.0]).unwrap();
        let c = Coefficients::new(vec![1.0, 2.0], vec![1.0; 3]).unwrap();
        let dd = build_double(&g, &c).unwrap();
        assert_eq!(dd.doubled().kappa(), &[1.0, 2.0, 2.0, 1.0]);
    }

    #[test]
    fn embeddings_are_disjoint_isometries() {
        let (dd, _, _) = variable_double(9);
        let mut seen = [0; 18];
        for (&p, &m) in dd.embed_plus().iter().zip(dd.embed_minus()) {
            seen[p] += 1;
            seen[m] += 1;
        }
        assert!(seen.iter().all(|&s| s == 1));
        let w = dd.doubled().weights();
        for i in 0..9 {
            assert_eq!(w[dd.embed_plus()[i]], dd.base().weights()[i]);
            assert_eq!(w[dd.embed_minus()[i]], dd.base().weights()[i]);
        }
    }

    #[test]
    fn extend_pair_layout() {
        let dd = unit_double(2);
        assert_eq!(
            dd.extend_pair(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            vec![1.0, 1.0, 1.0, -1.0]
        );
        let v = [0.3, -2.0];
        let even = dd.extend_pair(&[0.0; 2], &v).unwrap();
        assert_eq!(dd.restrict_plus(&even), v);
        assert_eq!(dd.restrict_minus(&even), v);
        let odd = dd.extend_pair(&v, &[0.0; 2]).unwrap();
        assert_eq!(dd.restrict_minus(&odd), vec![-0.3, 2.0]);
        assert!(dd.extend_pair(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn split_inverts_extension() {
        let dd = unit_double(7);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (su, sv) = dd.split(&dd.extend_pair(&u, &v).unwrap()).unwrap();
        assert_eq!(su, u);
        assert_eq!(sv, v);

        let (cu, cv) = dd.split(&[2.5; 14]).unwrap();
        assert!(cu.iter().all(|&x| x == 0.0));
        assert!(cv.iter().all(|&x| x == 2.5));

        let (ou, ov) = dd.split(&dd.extend_pair(&u, &[0.0; 7]).unwrap()).unwrap();
        assert_eq!(ou, u);
        assert!(ov.iter().all(|&x| x == 0.0));
        assert!(dd.split(&[0.0; 13]).is_err());
    }

    #[test]
    fn two_cell_extensions_are_periodic_eigenvectors() {
        let dd = unit_double(2);
        let g = dd.base().clone();
        let d = analytic_eigenbasis(&g, BoundaryCondition::Dirichlet).unwrap();
        let nb = analytic_eigenbasis(&g, BoundaryCondition::Neumann).unwrap();

        let x = dd
            .extend_eigenfunction(
                d.vectors().column(0).as_slice(),
                BoundaryCondition::Dirichlet,
            )
            .unwrap();
        let s = x[0];
        for (got, sign) in x.iter().zip([1.0, 1.0, -1.0, -1.0]) {
            assert!((got - sign * s).abs() < 1e-15);
        }
        let ax = dd.operator().apply(&x);
        assert!(ax.iter().zip(&x).all(|(a, v)| (a - 8.0 * v).abs() < 1e-12));

        let c = dd
            .extend_eigenfunction(
                nb.vectors().column(0).as_slice(),
                BoundaryCondition::Neumann,
            )
            .unwrap();
        assert!(dd.operator().apply(&c).iter().all(|a| a.abs() < 1e-12));

        let y = dd
            .extend_eigenfunction(
                nb.vectors().column(1).as_slice(),
                BoundaryCondition::Neumann,
            )
            .unwrap();
        let s = y[0];
        for (got, sign) in y.iter().zip([1.0, -1.0, -1.0, 1.0]) {
            assert!((got - sign * s).abs() < 1e-15);
        }
        let ay = dd.operator().apply(&y);
        assert!(ay.iter().zip(&y).all(|(a, v)| (a - 8.0 * v).abs() < 1e-12));

        assert!(dd
            .extend_eigenfunction(&[1.0, 1.0], BoundaryCondition::Periodic)
            .is_err());
    }

    #[test]
    fn lifted_region() {
        let dd = unit_double(2);
        let g = dd.base().clone();
        let w = crate::grid::region_from_intervals(&g, &[(0.5, 1.0)]).unwrap();
        let lifted = dd.lift_region(&w).unwrap();
        assert_eq!(lifted.mask(), &[false, true, false, false]);
        assert_eq!(lifted.measure(), 0.5);

        let all = dd.lift_region(&ControlRegion::full(&g)).unwrap();
        assert_eq!(all.mask(), &[true, true, false, false]);
        assert_eq!(all.measure(), 1.0);
    }

    #[test]
    fn variable_coefficient_spectrum_union() {
        let (dd, d, nb) = variable_double(20);
        let periodic = eigendecompose(dd.operator()).unwrap();
        let mut union: Vec<f64> = d
            .eigenvalues()
            .iter()
            .chain(nb.eigenvalues())
            .copied()
            .collect();
        union.sort_by(f64::total_cmp);
        assert!(spectrum_gap(periodic.eigenvalues(), &union).unwrap() < 1e-9);
    }

    #[test]
    fn extended_basis_is_orthonormal_eigenbasis() {
        let (dd, d, nb) = variable_double(15);
        let ext = ExtendedBasis::new(&dd, &d, &nb).unwrap();
        let b = ext.basis();
        assert!((b.gram() - DMatrix::identity(30, 30)).amax() < 1e-10);
        let scale = b.eigenvalues().last().unwrap();
        for k in 0..30 {
            let col = b.vectors().column(k);
            let r = dd.operator().apply(col.as_slice());
            let res = r
                .iter()
                .zip(col.iter())
                .map(|(a, v)| (a - b.eigenvalues()[k] * v).abs())
                .fold(0.0, f64::max);
            assert!(res <= 1e-10 * scale, "mode {k} residual {res}");
        }
        assert_eq!(ext.origin()[0].bc, BoundaryCondition::Neumann);
        assert_eq!(ext.column_of(BoundaryCondition::Neumann, 0), Some(0));
    }

    #[test]
    fn link_identity_small() {
        let (dd, d, nb) = variable_double(12);
        let ext = ExtendedBasis::new(&dd, &d, &nb).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let u: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lambda = rng.random_range(0.0..d.max_frequency());
            let tilde = dd.extend_pair(&u, &v).unwrap();
            let pt = project(
                ext.basis(),
                &SpectralCutoff::new(ext.basis(), lambda),
                &tilde,
            )
            .unwrap();
            let pd = project(&d, &SpectralCutoff::new(&d, lambda), &u).unwrap();
            let pn = project(&nb, &SpectralCutoff::new(&nb, lambda), &v).unwrap();
            let plus = dd.restrict_plus(&pt);
            let minus = dd.restrict_minus(&pt);
            for i in 0..12 {
                assert!((plus[i] - (pd[i] + pn[i])).abs() < 1e-10);
                assert!((minus[i] - (-pd[i] + pn[i])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn restrictions_intertwine_operators() {
        // The doubled operator acting on an odd (even) field reproduces the
        // Dirichlet (Neumann) operator on the plus copy, walls included.
        let (dd, _, _) = variable_double(11);
        let g = dd.base().clone();
        let c = dd.base_coeffs().clone();
        let ad = assemble_laplacian(&g, &c, BoundaryCondition::Dirichlet).unwrap();
        let an = assemble_laplacian(&g, &c, BoundaryCondition::Neumann).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let w: Vec<f64> = (0..11).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zero = vec![0.0; 11];
        let odd = dd.operator().apply(&dd.extend_pair(&w, &zero).unwrap());
        let even = dd.operator().apply(&dd.extend_pair(&zero, &w).unwrap());
        let (ou, ov) = dd.split(&odd).unwrap();
        let (eu, ev) = dd.split(&even).unwrap();
        let rd = ad.apply(&w);
        let rn = an.apply(&w);
        for i in 0..11 {
            assert!((ou[i] - rd[i]).abs() < 1e-9 * rd[i].abs().max(1.0));
            assert!((ev[i] - rn[i]).abs() < 1e-9 * rn[i].abs().max(1.0));
            assert!(ov[i].abs() < 1e-9 && eu[i].abs() < 1e-9);
        }
    }

    #[test]
    fn split_boundary_residuals_vanish() {
        let (dd, _, _) = variable_double(10);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let field: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (trace, flux) = dd.split_boundary_residuals(&field).unwrap();
        assert!(trace <= 1e-15 && flux <= 1e-12, "{trace} {flux}");
    }
}
