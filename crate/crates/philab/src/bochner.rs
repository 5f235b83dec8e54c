//! Weighted mixed space-time norms
//! `||f||_{L^s(L^r)(k)} = ( avg_t ( avg_x f^r zeta_k^q dx )^{s/r} dt )^{1/s}`
//! (inner exponent spatial with the cutoff weight, outer temporal), plus the
//! Hoelder and interpolation checks built on them.

use serde::Serialize;
use thiserror::Error;

use crate::fields::{Cutoff, Region, SpaceTimeField, UniformGrid};

#[derive(Debug, Error)]
pub enum BochnerError {
    #[error("invalid norm spec: {0}")]
    Spec(String),
    #[error("norm domain contains no cells/frames")]
    EmptyDomain,
}

pub type Result<T> = std::result::Result<T, BochnerError>;

/// A Lebesgue exponent, `>= 1` or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn finite(p: f64) -> Result<Self> {
        if p < 1.0 || !p.is_finite() {
            return Err(BochnerError::Spec(format!("exponent {p} < 1")));
        }
        Ok(Exponent::Finite(p))
    }

    /// `1/p`, with `1/inf = 0`.
    pub fn reciprocal(&self) -> f64 {
        match self {
            Exponent::Finite(p) => 1.0 / p,
            Exponent::Infinity => 0.0,
        }
    }

    pub fn from_reciprocal(r: f64) -> Result<Self> {
        if r.abs() < 1e-12 {
            Ok(Exponent::Infinity)
        } else if r > 0.0 && r <= 1.0 + 1e-12 {
            Ok(Exponent::Finite(1.0 / r))
        } else {
            Err(BochnerError::Spec(format!("reciprocal exponent {r} outside [0, 1]")))
        }
    }
}

/// Outer (temporal) and inner (spatial, weighted) exponents.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MixedNormSpec {
    pub outer: Exponent,
    pub inner: Exponent,
}

impl MixedNormSpec {
    pub fn new(outer: Exponent, inner: Exponent) -> Self {
        MixedNormSpec { outer, inner }
    }
}

/// Scalar space-time data: one value per cell per frame.
#[derive(Debug, Clone)]
pub struct SpaceTimeScalar {
    pub grid: UniformGrid,
    pub times: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
}

impl SpaceTimeScalar {
    /// Derive a scalar from a (vector) space-time field, one value per cell.
    pub fn from_field(st: &SpaceTimeField, f: impl Fn(&[f64]) -> f64) -> Self {
        let grid = st.grid().clone();
        let mc = st.frames[0].components;
        let frames = st
            .frames
            .iter()
            .map(|frame| {
                (0..grid.cells())
                    .map(|lin| f(&frame.values[lin * mc..(lin + 1) * mc]))
                    .collect()
            })
            .collect();
        let times = (0..st.frames.len()).map(|k| st.time(k)).collect();
        SpaceTimeScalar { grid, times, frames }
    }

    pub fn from_frames(grid: &UniformGrid, times: Vec<f64>, frames: Vec<Vec<f64>>) -> Self {
        SpaceTimeScalar { grid: grid.clone(), times, frames }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpaceTimeScalar {
        SpaceTimeScalar {
            grid: self.grid.clone(),
            times: self.times.clone(),
            frames: self.frames.iter().map(|fr| fr.iter().map(|&v| f(v)).collect()).collect(),
        }
    }

    pub fn zip(&self, other: &SpaceTimeScalar, f: impl Fn(f64, f64) -> f64) -> SpaceTimeScalar {
        SpaceTimeScalar {
            grid: self.grid.clone(),
            times: self.times.clone(),
            frames: self
                .frames
                .iter()
                .zip(&other.frames)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        }
    }
}

/// The fixed averaging domain of a family of norms: one spatial region and a
/// time window. Sharing it across cutoff indices keeps the level-set
/// sequences pointwise comparable.
#[derive(Debug, Clone)]
pub struct NormDomain {
    pub space: Region,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl NormDomain {
    fn cells(&self, grid: &UniformGrid) -> Vec<usize> {
        (0..grid.cells())
            .filter(|&lin| self.space.contains(&grid.point(&grid.unindex(lin))))
            .collect()
    }

    fn frame_indices(&self, times: &[f64]) -> Vec<usize> {
        times
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= self.t_lo - 1e-12 && t <= self.t_hi + 1e-12)
            .map(|(k, _)| k)
            .collect()
    }
}

/// `||f||_{L^s(L^r)(zeta)}` over the given domain; `f` must be nonnegative.
///
/// Infinite inner exponents take the sup over cells where the cutoff is
/// positive; infinite outer exponents take the sup over frames.
pub fn mixed_norm(
    f: &SpaceTimeScalar,
    spec: &MixedNormSpec,
    zeta: &Cutoff,
    domain: &NormDomain,
) -> Result<f64> {
    let grid = &f.grid;
    let cells = domain.cells(grid);
    let frames = domain.frame_indices(&f.times);
    if cells.is_empty() || frames.is_empty() {
        return Err(BochnerError::EmptyDomain);
    }
    let q = zeta.q;
    let inner_value = |k: usize| -> f64 {
        let t = f.times[k];
        let data = &f.frames[k];
        match spec.inner {
            Exponent::Finite(r) => {
                let mut acc = 0.0;
                for &lin in &cells {
                    let x = grid.point(&grid.unindex(lin));
                    let w = zeta.eval_st(t, &x).powf(q);
                    if w > 0.0 {
                        acc += data[lin].powf(r) * w;
                    }
                }
                (acc / cells.len() as f64).powf(1.0 / r)
            }
            Exponent::Infinity => {
                let mut best = 0.0_f64;
                for &lin in &cells {
                    let x = grid.point(&grid.unindex(lin));
                    if zeta.eval_st(t, &x) > 1e-12 {
                        best = best.max(data[lin]);
                    }
                }
                best
            }
        }
    };
    let value = match spec.outer {
        Exponent::Finite(s) => {
            let mut acc = 0.0;
            for &k in &frames {
                acc += inner_value(k).powf(s);
            }
            (acc / frames.len() as f64).powf(1.0 / s)
        }
        Exponent::Infinity => {
            frames.iter().map(|&k| inner_value(k)).fold(0.0_f64, f64::max)
        }
    };
    Ok(value)
}

fn check_split(whole: Exponent, a: Exponent, b: Exponent) -> Result<()> {
    let lhs = whole.reciprocal();
    let rhs = a.reciprocal() + b.reciprocal();
    if (lhs - rhs).abs() > 1e-9 {
        return Err(BochnerError::Spec(format!(
            "exponent mismatch: 1/p = {lhs} but 1/p1 + 1/p2 = {rhs}"
        )));
    }
    Ok(())
}

/// Hoelder gap `||f|| ||g|| - ||fg||` for the split `(p; p1, p2)` outer and
/// `(q; q1, q2)` inner; must be `>= -1e-9`.
#[allow(clippy::too_many_arguments)]
pub fn holder_check(
    f: &SpaceTimeScalar,
    g: &SpaceTimeScalar,
    outer: (Exponent, Exponent, Exponent),
    inner: (Exponent, Exponent, Exponent),
    zeta: &Cutoff,
    domain: &NormDomain,
) -> Result<f64> {
    check_split(outer.0, outer.1, outer.2)?;
    check_split(inner.0, inner.1, inner.2)?;
    let product = f.zip(g, |a, b| a * b);
    let lhs = mixed_norm(&product, &MixedNormSpec::new(outer.0, inner.0), zeta, domain)?;
    let nf = mixed_norm(f, &MixedNormSpec::new(outer.1, inner.1), zeta, domain)?;
    let ng = mixed_norm(g, &MixedNormSpec::new(outer.2, inner.2), zeta, domain)?;
    Ok(nf * ng - lhs)
}

/// Interpolation gap
/// `||f||^theta_{(p1,q1)} ||f||^{1-theta}_{(p0,q0)} - ||f||_{(p,q)}` where
/// `1/p = theta/p1 + (1-theta)/p0` and likewise for `q`; must be `>= -1e-9`.
pub fn interpolation_check(
    f: &SpaceTimeScalar,
    theta: f64,
    end0: (Exponent, Exponent),
    end1: (Exponent, Exponent),
    zeta: &Cutoff,
    domain: &NormDomain,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(BochnerError::Spec(format!("theta {theta} outside [0, 1]")));
    }
    let outer = Exponent::from_reciprocal(
        theta * end1.0.reciprocal() + (1.0 - theta) * end0.0.reciprocal(),
    )?;
    let inner = Exponent::from_reciprocal(
        theta * end1.1.reciprocal() + (1.0 - theta) * end0.1.reciprocal(),
    )?;
    let mid = mixed_norm(f, &MixedNormSpec::new(outer, inner), zeta, domain)?;
    let n1 = mixed_norm(f, &MixedNormSpec::new(end1.0, end1.1), zeta, domain)?;
    let n0 = mixed_norm(f, &MixedNormSpec::new(end0.0, end0.1), zeta, domain)?;
    Ok(n1.powf(theta) * n0.powf(1.0 - theta) - mid)
}
