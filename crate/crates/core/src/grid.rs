//! Cell-centered discretization of `[0, length]`, density weights and
//! control regions.
//!
//! Cells sit at `(i + 1/2) h`. Dirichlet and Neumann problems therefore share
//! the same `n` unknowns, and two copies of the grid glue into a `2n`-cell
//! periodic grid without duplicating boundary nodes.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// Every density and diffusion sample must stay above this value.
pub const ELLIPTICITY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    n: usize,
    length: f64,
    h: f64,
    centers: Vec<f64>,
    kappa: Vec<f64>,
    weights: Vec<f64>,
}

/// Builds a uniform grid and samples the density `kappa` at the cell centers.
pub fn make_uniform_grid(n: usize, length: f64, kappa: impl Fn(f64) -> f64) -> Result<Grid1D> {
    if n < 2 {
        return invalid(format!("grid needs at least 2 cells, got {n}"));
    }
    if !(length > 0.0 && length.is_finite()) {
        return invalid(format!("grid length must be positive, got {length}"));
    }
    let h = length / n as f64;
    let samples = (0..n).map(|i| kappa((i as f64 + 0.5) * h)).collect();
    Grid1D::from_density(n, length, samples)
}

impl Grid1D {
    /// Grid with κ ≡ 1.
    pub fn uniform(n: usize, length: f64) -> Result<Self> {
        make_uniform_grid(n, length, |_| 1.0)
    }

    /// Grid with explicitly given density samples (one per cell).
    pub fn from_density(n: usize, length: f64, kappa: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return invalid(format!("grid needs at least 2 cells, got {n}"));
        }
        if !(length > 0.0 && length.is_finite()) {
            return invalid(format!("grid length must be positive, got {length}"));
        }
        if kappa.len() != n {
            return invalid(format!("density has {} samples for {n} cells", kappa.len()));
        }
        check_floor("kappa", &kappa)?;
        let h = length / n as f64;
        let centers = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let weights = kappa.iter().map(|k| h * k).collect();
        Ok(Self {
            n,
            length,
            h,
            centers,
            kappa,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    /// Quadrature weights `h κ(x_i)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn has_unit_density(&self) -> bool {
        self.kappa.iter().all(|&k| k == 1.0)
    }
}

fn check_floor(name: &str, values: &[f64]) -> Result<()> {
    match values
        .iter()
        .position(|v| !(v.is_finite() && *v >= ELLIPTICITY_FLOOR))
    {
        Some(i) => invalid(format!(
            "{name}[{i}] = {} is below the ellipticity floor {ELLIPTICITY_FLOOR:e}",
            values[i]
        )),
        None => Ok(()),
    }
}

/// Density at cell centers and diffusion at the `n + 1` cell faces
/// (both boundary faces included).
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub kappa: Vec<f64>,
    pub a: Vec<f64>,
}

impl Coefficients {
    pub fn constant(n: usize) -> Self {
        Self {
            kappa: vec![1.0; n],
            a: vec![1.0; n + 1],
        }
    }

    pub fn new(kappa: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if a.len() != kappa.len() + 1 {
            return invalid(format!(
                "{} face coefficients for {} cells (need n + 1)",
                a.len(),
                kappa.len()
            ));
        }
        check_floor("kappa", &kappa)?;
        check_floor("a", &a)?;
        Ok(Self { kappa, a })
    }

    /// Takes κ from the grid and samples `a` at the faces `x = i h`, `i = 0..=n`.
    pub fn sample(grid: &Grid1D, a: impl Fn(f64) -> f64) -> Result<Self> {
        let faces = (0..=grid.n()).map(|i| a(i as f64 * grid.h())).collect();
        Self::new(grid.kappa().to_vec(), faces)
    }

    pub fn n(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_constant(&self) -> bool {
        self.kappa.iter().chain(&self.a).all(|&v| v == 1.0)
    }
}

/// A set of cells standing in for a measurable subset ω.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRegion {
    mask: Vec<bool>,
    h: f64,
    measure: f64,
}

impl ControlRegion {
    pub fn from_mask(mask: Vec<bool>, h: f64) -> Result<Self> {
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::EmptyRegion);
        }
        Ok(Self {
            measure: h * count as f64,
            mask,
            h,
        })
    }

    pub fn full(grid: &Grid1D) -> Self {
        Self::from_mask(vec![true; grid.n()], grid.h()).expect("grid has cells")
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Lebesgue measure `h · #cells`.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn cells(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn cell_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask.get(i).copied().unwrap_or(false)
    }

    pub fn is_subset_of(&self, other: &ControlRegion) -> bool {
        self.n() == other.n() && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    /// Length of the longest run of consecutive cells in the region.
    pub fn longest_run(&self) -> usize {
        let mut best = 0;
        let mut run = 0;
        for &m in &self.mask {
            run = if m { run + 1 } else { 0 };
            best = best.max(run);
        }
        best
    }

    /// Mask-file representation: one line of `0`/`1`, newline-terminated.
    pub fn to_mask_string(&self) -> String {
        let mut s: String = self
            .mask
            .iter()
            .map(|&m| if m { '1' } else { '0' })
            .collect();
        s.push('\n');
        s
    }

    pub fn parse_mask(text: &str, grid: &Grid1D) -> Result<Self> {
        let line = text.strip_suffix('\n').unwrap_or(text);
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.len() != grid.n() {
            return invalid(format!(
                "mask has {} cells, grid has {}",
                line.len(),
                grid.n()
            ));
        }
        let mask = line
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => invalid(format!("unexpected mask character {other:?}")),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_mask(mask, grid.h())
    }

    pub fn read_mask_file(path: &Path, grid: &Grid1D) -> Result<Self> {
        Self::parse_mask(&std::fs::read_to_string(path)?, grid)
    }
}

impl fmt::Display for ControlRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cells, measure {}", self.cell_count(), self.measure)
    }
}

/// Cells whose centers fall in the union of the open intervals.
pub fn region_from_intervals(grid: &Grid1D, intervals: &[(f64, f64)]) -> Result<ControlRegion> {
    for &(a, b) in intervals {
        if !(a < b) {
            return invalid(format!("interval ({a}, {b}) is empty or reversed"));
        }
    }
    let mask = grid
        .centers()
        .iter()
        .map(|&x| intervals.iter().any(|&(a, b)| a < x && x < b))
        .collect();
    ControlRegion::from_mask(mask, grid.h())
}

/// Parses `"a1,b1;a2,b2;..."`.
pub fn parse_intervals(spec: &str) -> Result<Vec<(f64, f64)>> {
    spec.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let mut it = pair.split(',').map(|v| v.trim().parse::<f64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
                _ => invalid(format!("cannot parse interval {pair:?}")),
            }
        })
        .collect::<Result<Vec<_>>>()
        .and_then(|v| {
            if v.is_empty() {
                invalid("no intervals given")
            } else {
                Ok(v)
            }
        })
}

/// Rasterized fat Cantor set.
///
/// Level `k = 1..=depth` removes the open middle of each of the `2^(k-1)`
/// surviving runs. Level `k` removes a total of
/// `(length - target) 2^-k / (1 - 2^-depth)`, so the continuum set after
/// `depth` levels has measure exactly `target`. Removals are rounded to whole
/// cells with the rounding error carried from run to run, which keeps the
/// rasterization error below `h` per level. When a run and its removal have
/// different parity the odd cell goes left or right according to `seed`.
pub fn fat_cantor_region(
    grid: &Grid1D,
    target_measure: f64,
    depth: u32,
    seed: u64,
) -> Result<ControlRegion> {
    let n = grid.n();
    let h = grid.h();
    let length = grid.length();
    if depth == 0 {
        return invalid("fat Cantor depth must be at least 1");
    }
    if depth > 40 {
        return invalid(format!("fat Cantor depth {depth} is too large"));
    }
    if !(target_measure >= h && target_measure <= length) {
        return Err(Error::Resolution(format!(
            "target measure {target_measure} is not representable with h = {h} on [0, {length}]"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let removed_total = length - target_measure;
    let normalizer = 1.0 - 0.5f64.powi(depth as i32);
    let mut runs: Vec<(usize, usize)> = vec![(0, n)];

    for level in 1..=depth {
        let level_total = removed_total * 0.5f64.powi(level as i32) / normalizer;
        let per_run_cells = level_total / (runs.len() as f64 * h);
        let mut carry = 0.0;
        let mut next = Vec::with_capacity(runs.len() * 2);
        for &(start, end) in &runs {
            let len = end - start;
            let desired = per_run_cells + carry;
            let max_remove = len.saturating_sub(2);
            let remove = (desired.round().max(0.0) as usize).min(max_remove);
            carry = desired - remove as f64;
            let kept = len - remove;
            let mut left = kept / 2;
            if kept % 2 == 1 && rng.random::<bool>() {
                left += 1;
            }
            next.push((start, start + left));
            next.push((start + left + remove, end));
        }
        runs = next;
    }

    let mut mask = vec![false; n];
    for (start, end) in runs {
        mask[start..end].iter_mut().for_each(|m| *m = true);
    }
    let region = ControlRegion::from_mask(mask, h)
        .map_err(|_| Error::Resolution("fat Cantor construction removed every cell".into()))?;
    let budget = h * depth as f64;
    if (region.measure() - target_measure).abs() > budget + 1e-12 * length {
        return Err(Error::Resolution(format!(
            "achieved measure {} misses target {target_measure} by more than {budget}",
            region.measure()
        )));
    }
    Ok(region)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_arithmetic() {
        let g = Grid1D::uniform(2, 1.0).unwrap();
        assert_eq!(g.centers(), &[0.25, 0.75]);
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.weights(), &[0.5, 0.5]);

        let g = Grid1D::uniform(4, 2.0).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.centers(), &[0.25, 0.75, 1.25, 1.75]);
    }

    #[test]
    fn variable_density_weights() {
        let g = make_uniform_grid(2, 1.0, |x| 1.0 + x).unwrap();
        assert_eq!(g.weights(), &[0.625, 0.875]);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(
            Grid1D::uniform(1, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            Grid1D::uniform(4, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            Grid1D::uniform(4, -1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(make_uniform_grid(4, 1.0, |_| 0.0).is_err());
    }

    #[test]
    fn centers_increasing_inside_domain() {
        let g = make_uniform_grid(37, 2.5, |x| 2.0 + x.sin()).unwrap();
        assert!(g.centers().windows(2).all(|w| w[0] < w[1]));
        assert!(g.centers().iter().all(|&x| x > 0.0 && x < 2.5));
        let total: f64 = Grid1D::uniform(37, 2.5).unwrap().weights().iter().sum();
        assert!((total - 2.5).abs() < 1e-14);
    }

    #[test]
    fn intervals_by_center_membership() {
        let g = Grid1D::uniform(4, 1.0).unwrap();
        let r = region_from_intervals(&g, &[(0.0, 0.5)]).unwrap();
        assert_eq!(r.mask(), &[true, true, false, false]);
        assert_eq!(r.measure(), 0.5);

        let r = region_from_intervals(&g, &[(0.6, 0.9)]).unwrap();
        assert_eq!(r.mask(), &[false, false, true, true]);
        assert_eq!(r.measure(), 0.5);

        assert!(matches!(
            region_from_intervals(&g, &[(0.9, 0.95)]),
            Err(Error::EmptyRegion)
        ));
        assert!(region_from_intervals(&g, &[(0.5, 0.5)]).is_err());
    }

    #[test]
    fn interval_spec_parsing() {
        assert_eq!(parse_intervals("0.2,0.3").unwrap(), vec![(0.2, 0.3)]);
        assert_eq!(
            parse_intervals("0,0.1; 0.5,0.75").unwrap(),
            vec![(0.0, 0.1), (0.5, 0.75)]
        );
        assert!(parse_intervals("0.2").is_err());
        assert!(parse_intervals("").is_err());
        assert!(parse_intervals("a,b").is_err());
    }

    #[test]
    fn mask_text_round_trip() {
        let g = Grid1D::uniform(8, 1.0).unwrap();
        let r = region_from_intervals(&g, &[(0.1, 0.4), (0.8, 1.0)]).unwrap();
        let text = r.to_mask_string();
        assert_eq!(text, "01100011\n");
        assert_eq!(ControlRegion::parse_mask(&text, &g).unwrap(), r);
        assert!(ControlRegion::parse_mask("0110\n", &g).is_err());
        assert!(ControlRegion::parse_mask("01x00011\n", &g).is_err());
        assert!(matches!(
            ControlRegion::parse_mask("00000000\n", &g),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn fat_cantor_full_measure_removes_nothing() {
        let g = Grid1D::uniform(16, 1.0).unwrap();
        let r = fat_cantor_region(&g, 1.0, 1, 0).unwrap();
        assert_eq!(r.cell_count(), 16);
        assert_eq!(r.measure(), 1.0);
    }

    #[test]
    fn fat_cantor_small_grid_measure() {
        let g = Grid1D::uniform(16, 1.0).unwrap();
        let r = fat_cantor_region(&g, 0.5, 2, 7).unwrap();
        let h = g.h();
        assert!((r.measure() - 0.5).abs() <= 2.0 * h);
    }

    #[test]
    fn fat_cantor_fine_grid_has_short_runs() {
        let g = Grid1D::uniform(1024, 1.0).unwrap();
        let r = fat_cantor_region(&g, 0.3, 6, 3).unwrap();
        assert!((r.measure() - 0.3).abs() <= 6.0 * g.h());
        assert!(r.longest_run() <= 1024 / 64 + 1, "run {}", r.longest_run());
    }

    #[test]
    fn fat_cantor_is_deterministic() {
        let g = Grid1D::uniform(300, 1.0).unwrap();
        let a = fat_cantor_region(&g, 0.4, 4, 11).unwrap();
        let b = fat_cantor_region(&g, 0.4, 4, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fat_cantor_rejects_unrepresentable_targets() {
        let g = Grid1D::uniform(16, 1.0).unwrap();
        assert!(matches!(
            fat_cantor_region(&g, 0.01, 2, 0),
            Err(Error::Resolution(_))
        ));
        assert!(matches!(
            fat_cantor_region(&g, 1.5, 2, 0),
            Err(Error::Resolution(_))
        ));
        assert!(fat_cantor_region(&g, 0.5, 0, 0).is_err());
    }
}
