//! Uniform-grid fields and the discrete calculus on them: gradients,
//! difference quotients, averaged region integrals, and the smooth cutoff
//! sequences used by the truncation machinery.
//!
//! Grid points sit at `origin + index * spacing` (node register), so the
//! outermost layer lies on the boundary of the covered box and Dirichlet
//! data applies there directly.

use serde::Serialize;
use thiserror::Error;

use crate::tensor_maps::Matrix;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid cannot resolve the requested geometry: {0}")]
    Resolution(String),
    #[error("region does not contain any cell centers")]
    EmptyRegion,
    #[error("difference step {steps} exceeds extent {extent} along axis {axis}")]
    Domain { steps: usize, extent: usize, axis: usize },
    #[error("field/grid mismatch: {0}")]
    Mismatch(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad field file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, FieldError>;

/// Uniform grid in 1, 2 or 3 dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformGrid {
    pub dim: usize,
    pub extents: Vec<usize>,
    pub spacing: f64,
    pub origin: Vec<f64>,
}

impl UniformGrid {
    pub fn new(extents: &[usize], spacing: f64, origin: &[f64]) -> Result<Self> {
        let dim = extents.len();
        if !(1..=3).contains(&dim) {
            return Err(FieldError::Mismatch(format!("dimension {dim} not in 1..=3")));
        }
        if extents.iter().any(|&e| e < 3) {
            return Err(FieldError::Mismatch("extents must be >= 3 per axis".into()));
        }
        if !(spacing > 0.0) {
            return Err(FieldError::Mismatch("spacing must be positive".into()));
        }
        if origin.len() != dim {
            return Err(FieldError::Mismatch("origin length != dim".into()));
        }
        Ok(UniformGrid { dim, extents: extents.to_vec(), spacing, origin: origin.to_vec() })
    }

    /// Grid covering `[0,1]^dim` with `n` points per axis.
    pub fn unit(dim: usize, n: usize) -> Self {
        UniformGrid::new(&vec![n; dim], 1.0 / (n - 1) as f64, &vec![0.0; dim]).unwrap()
    }

    pub fn cells(&self) -> usize {
        self.extents.iter().product()
    }

    #[inline]
    pub fn index(&self, idx: &[usize]) -> usize {
        let mut lin = 0;
        for (d, &i) in idx.iter().enumerate() {
            lin = lin * self.extents[d] + i;
            debug_assert!(i < self.extents[d], "index out of range on axis {d}");
        }
        lin
    }

    pub fn unindex(&self, mut lin: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for d in (0..self.dim).rev() {
            idx[d] = lin % self.extents[d];
            lin /= self.extents[d];
        }
        idx
    }

    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(d, &i)| self.origin[d] + i as f64 * self.spacing)
            .collect()
    }

    /// Stride of axis `d` in the linear index.
    pub fn stride(&self, d: usize) -> usize {
        self.extents[d + 1..].iter().product()
    }

    pub fn is_boundary(&self, idx: &[usize]) -> bool {
        idx.iter().enumerate().any(|(d, &i)| i == 0 || i + 1 == self.extents[d])
    }

    /// Center of the covered box.
    pub fn center(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|d| self.origin[d] + 0.5 * (self.extents[d] - 1) as f64 * self.spacing)
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    fn iter_indices(&self) -> IndexIter {
        IndexIter { extents: self.extents.clone(), next: Some(vec![0; self.dim]) }
    }
}

struct IndexIter {
    extents: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for IndexIter {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.clone()?;
        let mut n = current.clone();
        let mut d = self.extents.len();
        loop {
            if d == 0 {
                self.next = None;
                break;
            }
            d -= 1;
            n[d] += 1;
            if n[d] < self.extents[d] {
                self.next = Some(n);
                break;
            }
            n[d] = 0;
        }
        Some(current)
    }
}

/// Grid-sampled `u : Omega -> R^m`, values stored cell-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: UniformGrid,
    pub components: usize,
    pub values: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: &UniformGrid, components: usize) -> Self {
        VectorField {
            grid: grid.clone(),
            components,
            values: vec![0.0; grid.cells() * components],
        }
    }

    /// Sample a closed-form function at the grid points.
    pub fn from_fn(grid: &UniformGrid, components: usize, f: impl Fn(&[f64], usize) -> f64) -> Self {
        let mut values = vec![0.0; grid.cells() * components];
        for idx in grid.iter_indices() {
            let x = grid.point(&idx);
            let lin = grid.index(&idx);
            for c in 0..components {
                values[lin * components + c] = f(&x, c);
            }
        }
        VectorField { grid: grid.clone(), components, values }
    }

    #[inline]
    pub fn get(&self, lin: usize, c: usize) -> f64 {
        self.values[lin * self.components + c]
    }

    #[inline]
    pub fn set(&mut self, lin: usize, c: usize, v: f64) {
        self.values[lin * self.components + c] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Per-cell gradient matrices `(dim x components)` plus the scalar `v = |grad u|`.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub grid: UniformGrid,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl GradientField {
    pub fn matrix(&self, lin: usize) -> Matrix {
        let nm = self.rows * self.cols;
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.values[lin * nm..(lin + 1) * nm].to_vec(),
        }
    }

    #[inline]
    pub fn entry(&self, lin: usize, d: usize, c: usize) -> f64 {
        self.values[(lin * self.rows + d) * self.cols + c]
    }

    /// Scalar field `v(x) = |grad u(x)|` (Frobenius).
    pub fn vnorm(&self) -> Vec<f64> {
        let nm = self.rows * self.cols;
        (0..self.grid.cells())
            .map(|lin| {
                self.values[lin * nm..(lin + 1) * nm]
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

/// Discrete gradient: central differences in the interior, second-order
/// one-sided stencils on the boundary. Exact on affine fields.
pub fn gradient(u: &VectorField) -> GradientField {
    let grid = &u.grid;
    let n = grid.dim;
    let m = u.components;
    let h = grid.spacing;
    let mut values = vec![0.0; grid.cells() * n * m];
    for idx in grid.iter_indices() {
        let lin = grid.index(&idx);
        for d in 0..n {
            let stride = grid.stride(d);
            let i = idx[d];
            let last = grid.extents[d] - 1;
            for c in 0..m {
                let g = if i == 0 {
                    // (-3 f0 + 4 f1 - f2) / 2h
                    (-3.0 * u.get(lin, c) + 4.0 * u.get(lin + stride, c)
                        - u.get(lin + 2 * stride, c))
                        / (2.0 * h)
                } else if i == last {
                    (3.0 * u.get(lin, c) - 4.0 * u.get(lin - stride, c)
                        + u.get(lin - 2 * stride, c))
                        / (2.0 * h)
                } else {
                    (u.get(lin + stride, c) - u.get(lin - stride, c)) / (2.0 * h)
                };
                values[(lin * n + d) * m + c] = g;
            }
        }
    }
    GradientField { grid: grid.clone(), rows: n, cols: m, values }
}

/// Forward difference quotient `(f(x + steps*h*e_axis) - f(x)) / (steps*h)`
/// on the index set shrunk by `steps` cells along `axis`.
pub fn difference_quotient(u: &VectorField, axis: usize, steps: usize) -> Result<VectorField> {
    let grid = &u.grid;
    if steps >= grid.extents[axis] {
        return Err(FieldError::Domain { steps, extent: grid.extents[axis], axis });
    }
    let mut extents = grid.extents.clone();
    extents[axis] -= steps;
    let out_grid = UniformGrid {
        dim: grid.dim,
        extents,
        spacing: grid.spacing,
        origin: grid.origin.clone(),
    };
    let h = steps as f64 * grid.spacing;
    let stride = grid.stride(axis);
    let mut out = VectorField::zeros(&out_grid, u.components);
    for idx in out_grid.iter_indices() {
        let src = grid.index(&idx);
        let dst = out_grid.index(&idx);
        for c in 0..u.components {
            out.set(dst, c, (u.get(src + steps * stride, c) - u.get(src, c)) / h);
        }
    }
    Ok(out)
}

/// Regions for averaged integrals, membership by cell center.
#[derive(Debug, Clone)]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Cube { center: Vec<f64>, half_width: f64 },
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => {
                dist2(x, center) <= radius * radius
            }
            Region::Cube { center, half_width } => x
                .iter()
                .zip(center)
                .all(|(xi, ci)| (xi - ci).abs() <= *half_width),
        }
    }

    pub fn scaled(&self, factor: f64) -> Region {
        match self {
            Region::Ball { center, radius } => {
                Region::Ball { center: center.clone(), radius: radius * factor }
            }
            Region::Cube { center, half_width } => {
                Region::Cube { center: center.clone(), half_width: half_width * factor }
            }
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Averaged integral of a scalar field over a region: the mean of the values
/// at cell centers inside it (cell volume cancels against the discrete
/// measure, counted the same way).
pub fn avg_integral(grid: &UniformGrid, f: &[f64], region: &Region) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for idx in grid.iter_indices() {
        if region.contains(&grid.point(&idx)) {
            sum += f[grid.index(&idx)];
            count += 1;
        }
    }
    if count == 0 {
        return Err(FieldError::EmptyRegion);
    }
    Ok(sum / count as f64)
}

/// Maximum of a scalar field over a region.
pub fn sup_over_region(grid: &UniformGrid, f: &[f64], region: &Region) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    let mut seen = false;
    for idx in grid.iter_indices() {
        if region.contains(&grid.point(&idx)) {
            best = best.max(f[grid.index(&idx)]);
            seen = true;
        }
    }
    if !seen {
        return Err(FieldError::EmptyRegion);
    }
    Ok(best)
}

/// Quintic ramp: 0 below 0, 1 above 1, C^2 in between with max slope 15/8.
fn smoothstep_quintic(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

fn smoothstep_quintic_deriv(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        30.0 * x * x * (1.0 - x) * (1.0 - x)
    }
}

/// Smooth spatial bump: 1 on the inner ball, 0 outside the outer ball, with
/// a quintic ramp so that `max |grad zeta| <= (15/8)/(r_out - r_in) < 4/(r_out - r_in)`.
///
/// Parabolic cutoffs carry an additional temporal ramp of the same shape;
/// the space-time profile is the product of the two.
#[derive(Debug, Clone, Serialize)]
pub struct Cutoff {
    pub center: Vec<f64>,
    pub r_in: f64,
    pub r_out: f64,
    /// Exponent `q > 2` with which the cutoff enters weights (`zeta^q`).
    pub q: f64,
    /// Temporal half-widths for cylinder cutoffs: `(t_center, t_in, t_out)`.
    pub time: Option<(f64, f64, f64)>,
}

impl Cutoff {
    pub fn ball(center: &[f64], r_in: f64, r_out: f64, q: f64) -> Self {
        assert!(r_out > r_in && r_in > 0.0 && q > 2.0);
        Cutoff { center: center.to_vec(), r_in, r_out, q, time: None }
    }

    pub fn cylinder(
        center: &[f64],
        r_in: f64,
        r_out: f64,
        t_center: f64,
        t_in: f64,
        t_out: f64,
        q: f64,
    ) -> Self {
        assert!(r_out > r_in && t_out > t_in && q > 2.0);
        Cutoff { center: center.to_vec(), r_in, r_out, q, time: Some((t_center, t_in, t_out)) }
    }

    /// Spatial profile value at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = dist2(x, &self.center).sqrt();
        smoothstep_quintic((self.r_out - r) / (self.r_out - self.r_in))
    }

    /// Space-time profile at `(t, x)`; 1 in time when no temporal ramp is set.
    pub fn eval_st(&self, t: f64, x: &[f64]) -> f64 {
        let spatial = self.eval(x);
        match self.time {
            None => spatial,
            Some((tc, t_in, t_out)) => {
                let dt = (t - tc).abs();
                spatial * smoothstep_quintic((t_out - dt) / (t_out - t_in))
            }
        }
    }

    /// Analytic `|grad zeta|` at `x` (spatial part).
    pub fn grad_norm(&self, x: &[f64]) -> f64 {
        let r = dist2(x, &self.center).sqrt();
        let gap = self.r_out - self.r_in;
        smoothstep_quintic_deriv((self.r_out - r) / gap) / gap
    }

    /// Analytic `|d/dt zeta|` at `(t, x)`.
    pub fn dt_norm(&self, t: f64, x: &[f64]) -> f64 {
        match self.time {
            None => 0.0,
            Some((tc, t_in, t_out)) => {
                let gap = t_out - t_in;
                let dt = (t - tc).abs();
                self.eval(x) * smoothstep_quintic_deriv((t_out - dt) / gap) / gap
            }
        }
    }

    /// Outer spatial region (support bound).
    pub fn outer_region(&self) -> Region {
        Region::Ball { center: self.center.clone(), radius: self.r_out }
    }

    pub fn inner_region(&self) -> Region {
        Region::Ball { center: self.center.clone(), radius: self.r_in }
    }
}

/// Shrinking ball cutoffs for the level-set iteration: the k-th cutoff is 1
/// on `B((1 + 2^{-k-1}) R)` and vanishes outside `B((1 + 2^{-k}) R)`, so its
/// gradient is bounded by a fixed multiple of `2^k / R`.
///
/// Errors when the grid cannot sample the requested ramp (gap below one
/// spacing) or the outermost ball `2B` leaves the grid.
pub fn make_cutoff_sequence(
    grid: &UniformGrid,
    center: &[f64],
    radius: f64,
    k_max: usize,
    q: f64,
) -> Result<Vec<Cutoff>> {
    check_region_inside(grid, center, 2.0 * radius)?;
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let r_in = (1.0 + 2f64.powi(-(k as i32) - 1)) * radius;
        let r_out = (1.0 + 2f64.powi(-(k as i32))) * radius;
        if r_out - r_in < grid.spacing {
            return Err(FieldError::Resolution(format!(
                "cutoff gap {:.3e} below spacing {:.3e} at k={k}",
                r_out - r_in,
                grid.spacing
            )));
        }
        out.push(Cutoff::ball(center, r_in, r_out, q));
    }
    Ok(out)
}

/// Largest `k` such that the k-th ball cutoff ramp is still at least one
/// grid spacing wide.
pub fn max_resolvable_k(grid: &UniformGrid, radius: f64) -> usize {
    let mut k = 0usize;
    while 2f64.powi(-(k as i32) - 1) * radius >= grid.spacing && k < 60 {
        k += 1;
    }
    k.saturating_sub(1)
}

fn check_region_inside(grid: &UniformGrid, center: &[f64], radius: f64) -> Result<()> {
    for d in 0..grid.dim {
        let lo = grid.origin[d];
        let hi = grid.origin[d] + (grid.extents[d] - 1) as f64 * grid.spacing;
        if center[d] - radius < lo - 1e-12 || center[d] + radius > hi + 1e-12 {
            return Err(FieldError::Resolution(format!(
                "ball of radius {radius} at {center:?} leaves the grid on axis {d}"
            )));
        }
    }
    Ok(())
}

/// Cylinder cutoffs following the `2 (1 + 2^{-k}) Q` convention: the k-th
/// cutoff is 1 on the cylinder scaled by `2(1 + 2^{-k-1})` and vanishes
/// outside the one scaled by `2(1 + 2^{-k})`, in both space and time.
pub fn make_cylinder_cutoff_sequence(
    grid: &UniformGrid,
    center: &[f64],
    r_x: f64,
    t_center: f64,
    t_half: f64,
    k_max: usize,
    q: f64,
) -> Result<Vec<Cutoff>> {
    check_region_inside(grid, center, 4.0 * r_x)?;
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let fi = 2.0 * (1.0 + 2f64.powi(-(k as i32) - 1));
        let fo = 2.0 * (1.0 + 2f64.powi(-(k as i32)));
        if (fo - fi) * r_x < grid.spacing {
            return Err(FieldError::Resolution(format!(
                "cylinder cutoff gap below spacing at k={k}"
            )));
        }
        out.push(Cutoff::cylinder(
            center,
            fi * r_x,
            fo * r_x,
            t_center,
            fi * t_half,
            fo * t_half,
            q,
        ));
    }
    Ok(out)
}

/// Time-indexed sequence of vector fields on a shared grid.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    pub tau: f64,
    pub frames: Vec<VectorField>,
}

impl SpaceTimeField {
    pub fn new(tau: f64, frames: Vec<VectorField>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(FieldError::Mismatch("need at least 2 frames".into()));
        }
        let g = frames[0].grid.clone();
        if frames.iter().any(|f| f.grid != g) {
            return Err(FieldError::Mismatch("frames must share one grid".into()));
        }
        if !(tau > 0.0) {
            return Err(FieldError::Mismatch("tau must be positive".into()));
        }
        Ok(SpaceTimeField { tau, frames })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.frames[0].grid
    }

    pub fn time(&self, frame: usize) -> f64 {
        frame as f64 * self.tau
    }

    pub fn duration(&self) -> f64 {
        (self.frames.len() - 1) as f64 * self.tau
    }
}

// ---------------------------------------------------------------------------
// flat binary serialization
//
// header, little-endian 64-bit values: dims, extents[dims], spacing,
// components; payload row-major f64. Space-time files insert (frames, tau)
// after components and then store the frames consecutively.
// ---------------------------------------------------------------------------

use std::io::{Read, Write};

fn write_header(w: &mut impl Write, f: &VectorField) -> Result<()> {
    w.write_all(&(f.grid.dim as u64).to_le_bytes())?;
    for &e in &f.grid.extents {
        w.write_all(&(e as u64).to_le_bytes())?;
    }
    w.write_all(&f.grid.spacing.to_le_bytes())?;
    w.write_all(&(f.components as u64).to_le_bytes())?;
    Ok(())
}

fn write_payload(w: &mut impl Write, f: &VectorField) -> Result<()> {
    for v in &f.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_field(w: &mut impl Write, f: &VectorField) -> Result<()> {
    write_header(w, f)?;
    write_payload(w, f)
}

pub fn write_space_time_field(w: &mut impl Write, st: &SpaceTimeField) -> Result<()> {
    write_header(w, &st.frames[0])?;
    w.write_all(&(st.frames.len() as u64).to_le_bytes())?;
    w.write_all(&st.tau.to_le_bytes())?;
    for f in &st.frames {
        write_payload(w, f)?;
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_header(r: &mut impl Read) -> Result<(UniformGrid, usize)> {
    let dim = read_u64(r)? as usize;
    if !(1..=3).contains(&dim) {
        return Err(FieldError::Format(format!("dims {dim} not in 1..=3")));
    }
    let mut extents = Vec::with_capacity(dim);
    for _ in 0..dim {
        extents.push(read_u64(r)? as usize);
    }
    let spacing = read_f64(r)?;
    let components = read_u64(r)? as usize;
    let grid = UniformGrid::new(&extents, spacing, &vec![0.0; dim])?;
    Ok((grid, components))
}

fn read_payload(r: &mut impl Read, grid: &UniformGrid, components: usize) -> Result<VectorField> {
    let mut values = vec![0.0; grid.cells() * components];
    for v in &mut values {
        *v = read_f64(r)?;
    }
    Ok(VectorField { grid: grid.clone(), components, values })
}

pub fn read_field(r: &mut impl Read) -> Result<VectorField> {
    let (grid, components) = read_header(r)?;
    read_payload(r, &grid, components)
}

pub fn read_space_time_field(r: &mut impl Read) -> Result<SpaceTimeField> {
    let (grid, components) = read_header(r)?;
    let frames_len = read_u64(r)? as usize;
    let tau = read_f64(r)?;
    let mut frames = Vec::with_capacity(frames_len);
    for _ in 0..frames_len {
        frames.push(read_payload(r, &grid, components)?);
    }
    SpaceTimeField::new(tau, frames)
}

/// CSV dump for small grids: one row per cell with indices and components.
pub fn field_to_csv(f: &VectorField) -> String {
    let mut out = String::new();
    let idx_names: Vec<String> = (0..f.grid.dim).map(|d| format!("i{d}")).collect();
    let comp_names: Vec<String> = (0..f.components).map(|c| format!("c{c}")).collect();
    out.push_str(&idx_names.join(","));
    out.push(',');
    out.push_str(&comp_names.join(","));
    out.push('\n');
    for idx in f.grid.iter_indices() {
        let lin = f.grid.index(&idx);
        let cells: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        let vals: Vec<String> =
            (0..f.components).map(|c| format!("{:.17e}", f.get(lin, c))).collect();
        out.push_str(&cells.join(","));
        out.push(',');
        out.push_str(&vals.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_exact_on_affine() {
        let grid = UniformGrid::unit(2, 9);
        // u_c(x) = B_c . x + offset
        let b = [[1.5, -2.0], [0.25, 3.0]];
        let u = VectorField::from_fn(&grid, 2, |x, c| b[c][0] * x[0] + b[c][1] * x[1] + 0.7);
        let g = gradient(&u);
        for lin in 0..grid.cells() {
            for d in 0..2 {
                for c in 0..2 {
                    assert!((g.entry(lin, d, c) - b[c][d]).abs() < 1e-12);
                }
            }
        }
        let constant = VectorField::from_fn(&grid, 1, |_, _| 4.0);
        assert!(gradient(&constant).vnorm().iter().all(|&v| v < 1e-13));
    }

    #[test]
    fn gradient_second_order() {
        // error ratio close to 4 when h halves
        let err = |n: usize| -> f64 {
            let grid = UniformGrid::unit(1, n);
            let u = VectorField::from_fn(&grid, 1, |x, _| (std::f64::consts::PI * x[0]).sin());
            let g = gradient(&u);
            let mut worst = 0.0_f64;
            for lin in 0..grid.cells() {
                let x = grid.point(&grid.unindex(lin));
                let exact = std::f64::consts::PI * (std::f64::consts::PI * x[0]).cos();
                worst = worst.max((g.entry(lin, 0, 0) - exact).abs());
            }
            worst
        };
        let e1 = err(33);
        let e2 = err(65);
        let ratio = e1 / e2;
        assert!(ratio > 3.3 && ratio < 4.7, "ratio {ratio}");
    }

    #[test]
    fn difference_quotient_cases() {
        let grid = UniformGrid::unit(1, 11);
        let affine = VectorField::from_fn(&grid, 1, |x, _| 3.0 * x[0] - 1.0);
        let d = difference_quotient(&affine, 0, 1).unwrap();
        assert!(d.values.iter().all(|&v| (v - 3.0).abs() < 1e-12));
        let constant = VectorField::from_fn(&grid, 1, |_, _| 2.0);
        let d = difference_quotient(&constant, 0, 2).unwrap();
        assert!(d.values.iter().all(|&v| v.abs() < 1e-13));
        assert!(difference_quotient(&constant, 0, 11).is_err());
        // delta_{-h} delta_{h} equals the second difference: check on x^2
        let sq = VectorField::from_fn(&grid, 1, |x, _| x[0] * x[0]);
        let fwd = difference_quotient(&sq, 0, 1).unwrap();
        // backward difference of the forward difference at interior cells
        let h = grid.spacing;
        for i in 1..fwd.grid.extents[0] {
            let second = (fwd.get(i, 0) - fwd.get(i - 1, 0)) / h;
            // discrete second difference of x^2 is exactly 2
            assert!((second - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn avg_integral_cases() {
        let grid = UniformGrid::unit(2, 21);
        let center = grid.center();
        let ball = Region::Ball { center: center.clone(), radius: 0.3 };
        let constant = vec![2.5; grid.cells()];
        assert_eq!(avg_integral(&grid, &constant, &ball).unwrap(), 2.5);
        // indicator of the half-domain over the whole cube: 0.5 up to h slack
        let half: Vec<f64> = (0..grid.cells())
            .map(|lin| {
                let x = grid.point(&grid.unindex(lin));
                if x[0] < 0.5 { 1.0 } else { 0.0 }
            })
            .collect();
        let cube = Region::Cube { center: center.clone(), half_width: 0.5 };
        let avg = avg_integral(&grid, &half, &cube).unwrap();
        assert!((avg - 0.5).abs() < grid.spacing);
        // linearity is exact
        let f: Vec<f64> = (0..grid.cells()).map(|i| i as f64).collect();
        let g: Vec<f64> = (0..grid.cells()).map(|i| (i * i) as f64 * 1e-3).collect();
        let combo: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 2.0 * a + 3.0 * b).collect();
        let lhs = avg_integral(&grid, &combo, &ball).unwrap();
        let rhs = 2.0 * avg_integral(&grid, &f, &ball).unwrap()
            + 3.0 * avg_integral(&grid, &g, &ball).unwrap();
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
        // empty region
        let far = Region::Ball { center: vec![50.0, 50.0], radius: 0.1 };
        assert!(matches!(avg_integral(&grid, &constant, &far), Err(FieldError::EmptyRegion)));
    }

    #[test]
    fn cutoff_sequence_geometry() {
        let grid = UniformGrid::unit(2, 129);
        let center = grid.center();
        let radius = 0.24;
        let q = 2.5;
        let cutoffs = make_cutoff_sequence(&grid, &center, radius, 3, q).unwrap();
        // k = 0: plateau on B(1.5 R), support inside B(2R)
        assert!((cutoffs[0].r_in - 1.5 * radius).abs() < 1e-15);
        assert!((cutoffs[0].r_out - 2.0 * radius).abs() < 1e-15);
        for zeta in &cutoffs {
            assert_eq!(zeta.eval(&center), 1.0);
        }
        // sandwich: indicator(inner) <= zeta <= indicator(outer), per cell
        for zeta in &cutoffs {
            for lin in 0..grid.cells() {
                let x = grid.point(&grid.unindex(lin));
                let val = zeta.eval(&x);
                assert!((0.0..=1.0).contains(&val));
                if zeta.inner_region().contains(&x) {
                    assert_eq!(val, 1.0);
                }
                if !zeta.outer_region().contains(&x) {
                    assert_eq!(val, 0.0);
                }
            }
        }
        // pointwise monotone: zeta_{k+1} <= zeta_k
        for w in cutoffs.windows(2) {
            for lin in 0..grid.cells() {
                let x = grid.point(&grid.unindex(lin));
                assert!(w[1].eval(&x) <= w[0].eval(&x) + 1e-15);
            }
        }
    }

    #[test]
    fn cutoff_gradient_bound_measured() {
        // measured discrete gradient obeys max |grad zeta_k| R / 2^k <= 8,
        // including unresolved ramps where the discrete slope caps at ~1/h
        let grid = UniformGrid::unit(2, 129);
        let center = grid.center();
        let radius = 0.24;
        for k in 0..=6u32 {
            let r_in = (1.0 + 2f64.powi(-(k as i32) - 1)) * radius;
            let r_out = (1.0 + 2f64.powi(-(k as i32))) * radius;
            let zeta = Cutoff::ball(&center, r_in, r_out, 2.5);
            let sampled = VectorField::from_fn(&grid, 1, |x, _| zeta.eval(x));
            let g = gradient(&sampled);
            let measured = g.vnorm().into_iter().fold(0.0_f64, f64::max);
            let scaled = measured * radius / 2f64.powi(k as i32);
            assert!(scaled <= 8.0, "k={k}: scaled gradient {scaled}");
        }
        // analytic bound with the quintic ramp: c <= 4 over the gap
        let zeta = Cutoff::ball(&center, 0.3, 0.4, 2.5);
        let mut worst = 0.0_f64;
        for lin in 0..grid.cells() {
            let x = grid.point(&grid.unindex(lin));
            worst = worst.max(zeta.grad_norm(&x) * (0.4 - 0.3));
        }
        assert!(worst <= 4.0);
    }

    #[test]
    fn cutoff_sequence_resolution_error() {
        let grid = UniformGrid::unit(2, 17);
        let center = grid.center();
        assert!(matches!(
            make_cutoff_sequence(&grid, &center, 0.24, 6, 2.5),
            Err(FieldError::Resolution(_))
        ));
        let k = max_resolvable_k(&grid, 0.24);
        assert!(make_cutoff_sequence(&grid, &center, 0.24, k, 2.5).is_ok());
    }

    #[test]
    fn field_roundtrip_binary() {
        let grid = UniformGrid::unit(2, 5);
        let u = VectorField::from_fn(&grid, 2, |x, c| x[0] * 2.0 + x[1] + c as f64);
        let mut buf = Vec::new();
        write_field(&mut buf, &u).unwrap();
        let back = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(u.values, back.values);
        assert_eq!(u.grid.extents, back.grid.extents);

        let st = SpaceTimeField::new(0.1, vec![u.clone(), u.clone(), u]).unwrap();
        let mut buf = Vec::new();
        write_space_time_field(&mut buf, &st).unwrap();
        let back = read_space_time_field(&mut buf.as_slice()).unwrap();
        assert_eq!(back.frames.len(), 3);
        assert_eq!(back.tau, 0.1);
        assert_eq!(back.frames[2].values, st.frames[2].values);
    }

    #[test]
    fn csv_small_grid() {
        let grid = UniformGrid::unit(1, 3);
        let u = VectorField::from_fn(&grid, 1, |x, _| x[0]);
        let csv = field_to_csv(&u);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "i0,c0");
        assert_eq!(csv.lines().count(), 4);
    }
}
