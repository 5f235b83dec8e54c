//! The flux map `A(Q) = phi'(|Q|)/|Q| Q`, the natural quantity
//! `V(Q) = psi'(|Q|)/|Q| Q`, the closed-form Jacobian of `A`, and randomized
//! scanners that record the observed comparison bands between the five
//! equivalent distance expressions built from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::nfunction::NFunction;
use crate::quad::adaptive_simpson;

#[derive(Debug, Error)]
pub enum TensorMapError {
    #[error("Jacobian of A is singular at |P| = 0")]
    SingularPoint,
    #[error("segment quadrature did not converge")]
    Quadrature,
    #[error(transparent)]
    NFunction(#[from] crate::nfunction::NFunctionError),
}

pub type Result<T> = std::result::Result<T, TensorMapError>;

/// Dense row-major `n x m` real matrix with the Frobenius norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Frobenius norm `|Q|`.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `self : other`.
    pub fn dot(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * c).collect() }
    }

    /// `self * other` (ordinary matrix product).
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }
}

/// `A(Q) = phi'(|Q|)/|Q| Q`, extended by `A(0) = 0`.
pub fn a_map(nf: &NFunction, q: &Matrix) -> Matrix {
    let norm = q.norm();
    if norm < 1e-300 {
        return Matrix::zeros(q.rows, q.cols);
    }
    q.scale(nf.dphi(norm).expect("domain") / norm)
}

/// `V(Q) = psi'(|Q|)/|Q| Q` with `psi'(t) = sqrt(t phi'(t))`, `V(0) = 0`.
pub fn v_map(nf: &NFunction, q: &Matrix) -> Matrix {
    let norm = q.norm();
    if norm < 1e-300 {
        return Matrix::zeros(q.rows, q.cols);
    }
    let dpsi = (norm * nf.dphi(norm).expect("domain")).sqrt();
    q.scale(dpsi / norm)
}

/// Rank-4 Jacobian `dA_{kl}/dP_{ij}` stored as a flat array.
#[derive(Debug, Clone)]
pub struct JacobianA {
    pub n: usize,
    pub m: usize,
    data: Vec<f64>,
}

impl JacobianA {
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[((i * self.m + j) * self.n + k) * self.m + l]
    }

    /// Contraction `B : dA(P) : B`.
    pub fn contract(&self, b: &Matrix) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.m {
                let bij = b.get(i, j);
                for k in 0..self.n {
                    for l in 0..self.m {
                        acc += bij * self.get(i, j, k, l) * b.get(k, l);
                    }
                }
            }
        }
        acc
    }
}

/// Closed-form Jacobian
/// `dA_{kl}/dP_{ij} = phi'(|P|)/|P| (d_{ik} d_{jl} - P_{ij}P_{kl}/|P|^2) + phi''(|P|) P_{ij}P_{kl}/|P|^2`.
pub fn jacobian_a(nf: &NFunction, p: &Matrix) -> Result<JacobianA> {
    let norm = p.norm();
    if norm <= 0.0 {
        return Err(TensorMapError::SingularPoint);
    }
    let d1 = nf.dphi(norm)? / norm;
    let d2 = nf.ddphi(norm)?;
    let n = p.rows;
    let m = p.cols;
    let mut data = vec![0.0; n * m * n * m];
    let inv2 = 1.0 / (norm * norm);
    for i in 0..n {
        for j in 0..m {
            for k in 0..n {
                for l in 0..m {
                    let delta = if i == k && j == l { 1.0 } else { 0.0 };
                    let pp = p.get(i, j) * p.get(k, l) * inv2;
                    data[((i * m + j) * n + k) * m + l] = d1 * (delta - pp) + d2 * pp;
                }
            }
        }
    }
    Ok(JacobianA { n, m, data })
}

/// The relations whose observed ratio bands are scanned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivalenceRelation {
    /// `|A(P)-A(Q)| <~ phi''(|P|+|Q|) |P-Q|` (one-sided)
    B,
    /// `phi''(|P|+|Q|) |P-Q| ~ phi'_{|P|}(|P-Q|)`
    C,
    /// `|P-Q|^2 phi''(|P|+|Q|) ~ phi_{|P|}(|P-Q|)`
    D1,
    /// `phi_{|P|}(|P-Q|) ~ |V(P)-V(Q)|^2`
    D2,
    /// `|V(P)-V(Q)|^2 ~ (A(P)-A(Q)) : (P-Q)`
    D3,
    /// `phi'_{|P|}(|P-Q|) <~ phi'_{|R|}(|P-R|) + phi'_{|R|}(|Q-R|)` (one-sided)
    E,
    /// segment integral of `phi'(|[P,Q]_s|)/|[P,Q]_s|` against `phi'(|P|+|Q|)/(|P|+|Q|)`
    SegmentIntegral,
}

impl EquivalenceRelation {
    pub fn all() -> [EquivalenceRelation; 7] {
        use EquivalenceRelation::*;
        [B, C, D1, D2, D3, E, SegmentIntegral]
    }

    /// Two-sided relations assert both ends of the band; one-sided only `hi`.
    pub fn two_sided(&self) -> bool {
        !matches!(self, EquivalenceRelation::B | EquivalenceRelation::E)
    }

    pub fn name(&self) -> &'static str {
        match self {
            EquivalenceRelation::B => "b",
            EquivalenceRelation::C => "c",
            EquivalenceRelation::D1 => "d1",
            EquivalenceRelation::D2 => "d2",
            EquivalenceRelation::D3 => "d3",
            EquivalenceRelation::E => "e",
            EquivalenceRelation::SegmentIntegral => "segment_integral",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        EquivalenceRelation::all().into_iter().find(|r| r.name() == name)
    }
}

/// Observed `(lo, hi)` of the LHS/RHS ratio over the sampled instances.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceBand {
    pub lo: f64,
    pub hi: f64,
    /// Instances actually recorded (degenerate pairs are skipped).
    pub samples: usize,
    pub which: EquivalenceRelation,
}

/// Scan a relation over random matrix tuples. Entries are uniform in
/// `[-1, 1]` rescaled by a log-uniform factor in `magnitude_range`, probing
/// both the degenerate `|Q| << 1` and the large regime.
pub fn equivalence_scan(
    nf: &NFunction,
    which: EquivalenceRelation,
    trials: usize,
    dims: (usize, usize),
    magnitude_range: (f64, f64),
    seed: u64,
) -> Result<EquivalenceBand> {
    assert!(trials >= 1 && dims.0 >= 1 && dims.1 >= 1 && dims.0 <= 8 && dims.1 <= 8);
    assert!(magnitude_range.0 > 0.0 && magnitude_range.1 >= magnitude_range.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = dims;
    let (lo_mag, hi_mag) = (magnitude_range.0.ln(), magnitude_range.1.ln());
    let mut rand_matrix = |rng: &mut ChaCha8Rng| {
        let scale = rng.gen_range(lo_mag..=hi_mag).exp();
        Matrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0) * scale)
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut samples = 0;
    for _ in 0..trials {
        let p = rand_matrix(&mut rng);
        let q = rand_matrix(&mut rng);
        let diff = p.sub(&q);
        let d = diff.norm();
        if d < 1e-13 * (p.norm() + q.norm()) {
            continue; // identical pair, 0/0
        }
        let ratio = match which {
            EquivalenceRelation::B => {
                let lhs = a_map(nf, &p).sub(&a_map(nf, &q)).norm();
                let rhs = nf.ddphi(p.norm() + q.norm())? * d;
                lhs / rhs
            }
            EquivalenceRelation::C => {
                let lhs = nf.ddphi(p.norm() + q.norm())? * d;
                let rhs = nf.shifted(p.norm()).dphi(d)?;
                lhs / rhs
            }
            EquivalenceRelation::D1 => {
                let lhs = d * d * nf.ddphi(p.norm() + q.norm())?;
                let rhs = nf.shifted(p.norm()).phi(d)?;
                lhs / rhs
            }
            EquivalenceRelation::D2 => {
                let lhs = nf.shifted(p.norm()).phi(d)?;
                let dv = v_map(nf, &p).sub(&v_map(nf, &q)).norm();
                lhs / (dv * dv)
            }
            EquivalenceRelation::D3 => {
                let dv = v_map(nf, &p).sub(&v_map(nf, &q)).norm();
                let rhs = a_map(nf, &p).sub(&a_map(nf, &q)).dot(&diff);
                dv * dv / rhs
            }
            EquivalenceRelation::E => {
                let r = rand_matrix(&mut rng);
                let lhs = nf.shifted(p.norm()).dphi(d)?;
                let rhs = nf.shifted(r.norm()).dphi(p.sub(&r).norm())?
                    + nf.shifted(r.norm()).dphi(q.sub(&r).norm())?;
                if rhs == 0.0 {
                    continue;
                }
                lhs / rhs
            }
            EquivalenceRelation::SegmentIntegral => segment_integral_check(nf, &p, &q)?,
        };
        if !ratio.is_finite() {
            continue;
        }
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        samples += 1;
    }
    Ok(EquivalenceBand { lo, hi, samples, which })
}

/// Ratio of the convex-segment integral
/// `int_0^1 phi'(|[P,Q]_s|)/|[P,Q]_s| ds` to `phi'(|P|+|Q|)/(|P|+|Q|)`.
///
/// The segment may pass near the origin; the integrand then has an
/// integrable singularity for `p < 2` that is tamed with an `s = s* +- u^2`
/// substitution around the closest approach.
pub fn segment_integral_check(nf: &NFunction, p: &Matrix, q: &Matrix) -> Result<f64> {
    let total = p.norm() + q.norm();
    assert!(total > 0.0, "need |P| + |Q| > 0");
    let diff = p.sub(&q);
    // |[P,Q]_s|^2 = a s^2 + b s + c, evaluated in vertex form
    // a (s - s_v)^2 + r_min^2 to stay accurate near the closest approach
    let a = diff.dot(&diff);
    let b = 2.0 * q.dot(&diff);
    let c = q.dot(&q);
    let s_vertex = if a > 0.0 { -b / (2.0 * a) } else { 0.0 };
    let r_min2 = (c - 0.25 * b * b / a.max(1e-300)).max(0.0);
    let r = move |s: f64| {
        if a == 0.0 {
            return c.sqrt();
        }
        let d = s - s_vertex;
        (a * d * d + r_min2).sqrt()
    };
    let integrand = |s: f64| {
        let rs = r(s);
        if rs < 1e-300 {
            return 0.0; // measure-zero point, handled by the substitution
        }
        nf.dphi(rs).unwrap_or(f64::INFINITY) / rs
    };
    let s_star = s_vertex.clamp(0.0, 1.0);
    let r_min = r(s_star);
    let tol = 1e-9;
    let integral = if r_min < 1e-8 * total && s_star > 0.0 && s_star < 1.0 {
        // substitute s = s* - u^2 on the left and s = s* + u^2 on the right
        let left = {
            let len = s_star;
            let f = |u: f64| 2.0 * u * integrand(s_star - u * u);
            adaptive_simpson(&f, 1e-12 * len.sqrt(), len.sqrt(), tol)
        };
        let right = {
            let len = 1.0 - s_star;
            let f = |u: f64| 2.0 * u * integrand(s_star + u * u);
            adaptive_simpson(&f, 1e-12 * len.sqrt(), len.sqrt(), tol)
        };
        match (left, right) {
            (Ok(l), Ok(r)) => l + r,
            _ => return Err(TensorMapError::Quadrature),
        }
    } else if s_star > 1e-12 && s_star < 1.0 - 1e-12 {
        // split at the closest approach (kink in r)
        let l = adaptive_simpson(&integrand, 0.0, s_star, tol);
        let r = adaptive_simpson(&integrand, s_star, 1.0, tol);
        match (l, r) {
            (Ok(x), Ok(y)) => x + y,
            _ => return Err(TensorMapError::Quadrature),
        }
    } else {
        adaptive_simpson(&integrand, 0.0, 1.0, tol).map_err(|_| TensorMapError::Quadrature)?
    };
    Ok(integral / (nf.dphi(total)? / total))
}
