//! Weakly singular integrals over the unit disk `Γ₁`.
//!
//! The single-layer operator applied to the constant function,
//!
//! ```text
//! L[1](x) = (1/2π) ∫_{Γ₁} |x − z|⁻¹ dz,
//! ```
//!
//! is evaluated in polar coordinates centered at `x`. The Jacobian `ρ`
//! cancels the kernel, leaving `(1/2π) ∫₀^{2π} r(θ; x) dθ` where `r(θ; x)` is
//! the distance from `x` to the unit circle in direction `θ`. That integrand
//! is smooth and periodic for `|x| < 1`, so the midpoint rule in `θ`
//! converges quickly. Integrating `L[1]` once more over the disk gives the
//! constant `M = ∫∫ (2π|x − z|)⁻¹ dx dz = 8/3`.

use std::f64::consts::PI;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub type Point2 = Vector2<f64>;

/// Refinement level giving 256 radial × 256 angular outer nodes.
pub const DEFAULT_LEVEL: u32 = 8;

/// Running sum with Neumaier compensation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.carry);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        iter.into_iter().for_each(|v| s.add(v));
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureNode {
    pub point: Point2,
    pub weight: f64,
}

/// Tensor polar midpoint grid over the unit disk.
///
/// Level `k` uses `2ᵏ` radii and `2ᵏ` angles for the outer integral and
/// `2ᵏ` angles for the inner (singularity-centered) integral.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<QuadratureNode>,
    pub refinement_level: u32,
    inner_angles: Vec<Point2>,
}

impl QuadratureGrid {
    pub fn new(refinement_level: u32) -> Result<Self> {
        if !(1..=14).contains(&refinement_level) {
            return Err(Error::Domain(format!("refinement level must be in 1..=14, got {refinement_level}")));
        }
        let n = 1usize << refinement_level;
        let dr = 1.0 / n as f64;
        let dphi = 2.0 * PI / n as f64;
        let directions: Vec<Point2> = (0..n)
            .map(|j| {
                let phi = (j as f64 + 0.5) * dphi;
                Point2::new(phi.cos(), phi.sin())
            })
            .collect();
        let nodes = (0..n)
            .flat_map(|i| {
                let rho = (i as f64 + 0.5) * dr;
                directions.iter().map(move |u| QuadratureNode { point: u * rho, weight: rho * dr * dphi })
            })
            .collect();
        Ok(Self { nodes, refinement_level, inner_angles: directions })
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).collect::<CompensatedSum>().value()
    }

    fn radial_reach(x: &Point2, u: &Point2) -> f64 {
        let xu = x.dot(u);
        let slack = (1.0 - x.norm_squared()).max(0.0);
        -xu + (xu * xu + slack).sqrt()
    }

    fn l_one_unchecked(&self, x: &Point2) -> f64 {
        let s: CompensatedSum = self.inner_angles.iter().map(|u| Self::radial_reach(x, u)).collect();
        s.value() / self.inner_angles.len() as f64
    }
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self::new(DEFAULT_LEVEL).expect("default level is valid")
    }
}

/// Value of the kernel `1/|x − z|`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct KernelValue(pub f64);

pub fn single_layer_kernel(x: &Point2, z: &Point2) -> Result<KernelValue> {
    let r = (x - z).norm();
    if r == 0.0 {
        return Err(Error::Singularity("kernel evaluated at coincident points".into()));
    }
    Ok(KernelValue(1.0 / r))
}

/// `L[1](x) = (1/2π) ∫_{Γ₁} |x − z|⁻¹ dz` for `x` in the closed unit disk.
pub fn apply_l_one(grid: &QuadratureGrid, x: &Point2) -> Result<f64> {
    ensure_finite("evaluation point", x.as_slice())?;
    if x.norm() > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("|x| = {} lies outside the unit disk", x.norm())));
    }
    Ok(grid.l_one_unchecked(x))
}

/// `M = ∫_{Γ₁} L[1](x) dx`, summed over the rayon pool.
pub fn constant_m(grid: &QuadratureGrid) -> f64 {
    constant_m_partitioned(grid, rayon::current_num_threads().max(1))
}

/// `M` with the outer nodes split into `parts` contiguous chunks. The chunk
/// sums are compensated, so the result does not depend on `parts` beyond
/// the last few ulps.
pub fn constant_m_partitioned(grid: &QuadratureGrid, parts: usize) -> f64 {
    let chunk = grid.nodes.len().div_ceil(parts.max(1)).max(1);
    let partials: Vec<CompensatedSum> = grid
        .nodes
        .par_chunks(chunk)
        .map(|nodes| nodes.iter().map(|n| n.weight * grid.l_one_unchecked(&n.point)).collect())
        .collect();
    let mut total = CompensatedSum::default();
    partials.iter().for_each(|p| total.merge(p));
    total.value()
}

/// `M` with the two integrations swapped: outer loop over the inner
/// direction `θ`, inner loop over the outer nodes `x`.
pub fn constant_m_direction_outer(grid: &QuadratureGrid) -> f64 {
    let per_direction: Vec<CompensatedSum> = grid
        .inner_angles
        .par_iter()
        .map(|u| grid.nodes.iter().map(|n| n.weight * QuadratureGrid::radial_reach(&n.point, u)).collect())
        .collect();
    let mut total = CompensatedSum::default();
    per_direction.iter().for_each(|p| total.merge(p));
    total.value() / grid.inner_angles.len() as f64
}

/// Pieces of the closed-form evaluation of `∫∫_{Γ₁×Γ₁} |x − y|⁻¹ dx dy`.
///
/// Fixing `y` at distance `s` from the origin and integrating over circles of
/// radius `r` about `y` gives
///
/// ```text
/// ∫₀¹ 2πs ∫₀^{1−s} 2π dr ds + 4π ∫₀¹∫_{1−r}^1 s·acos(·) ds dr + 4π ∫₁²∫_{r−1}^1 s·acos(·) ds dr
/// ```
///
/// with `acos((s² + r² − 1)/(2sr))`. The three pieces are `2π²/3`,
/// `4/3 + π/6 − 3√3/4` and `−π/3 + 3√3/4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskDoubleIntegral {
    pub first_term: f64,
    pub inner_piece: f64,
    pub outer_piece: f64,
}

impl DiskDoubleIntegral {
    pub fn total(&self) -> f64 {
        self.first_term + 4.0 * PI * (self.inner_piece + self.outer_piece)
    }
}

/// The closed-form pieces. Their total is `16π/3`.
pub fn disk_integral_pieces() -> DiskDoubleIntegral {
    let root3 = 3f64.sqrt();
    DiskDoubleIntegral {
        first_term: 2.0 * PI * PI / 3.0,
        inner_piece: 4.0 / 3.0 + PI / 6.0 - 0.75 * root3,
        outer_piece: -PI / 3.0 + 0.75 * root3,
    }
}

/// `∫∫_{Γ₁×Γ₁} |x − y|⁻¹ dx dy` assembled from the closed-form pieces.
pub fn disk_integral_closed_form() -> f64 {
    disk_integral_pieces().total()
}

/// The same pieces by composite Gauss–Legendre quadrature, `panels` panels
/// of 32 nodes in each direction.
pub fn disk_integral_quadrature(panels: usize) -> DiskDoubleIntegral {
    let rule = GaussLegendre::new(32);
    let panels = panels.max(1);
    let lens = |s: f64, r: f64| {
        let c = ((s * s + r * r - 1.0) / (2.0 * s * r)).clamp(-1.0, 1.0);
        s * c.acos()
    };
    let first_term = rule.composite(0.0, 1.0, panels, |s| 2.0 * PI * s * 2.0 * PI * (1.0 - s));
    let inner_piece = rule.composite(0.0, 1.0, panels, |r| rule.composite(1.0 - r, 1.0, panels, |s| lens(s, r)));
    let outer_piece = rule.composite(1.0, 2.0, panels, |r| rule.composite(r - 1.0, 1.0, panels, |s| lens(s, r)));
    DiskDoubleIntegral { first_term, inner_piece, outer_piece }
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on `Pₙ` from the Chebyshev initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let s: CompensatedSum = self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mid + half * x)).collect();
        half * s.value()
    }

    pub fn composite(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| self.integrate(a + k as f64 * h, a + (k + 1) as f64 * h, &mut f))
            .collect::<CompensatedSum>()
            .value()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Sampled maximum of `∫_{Γ₁} |x − z|⁻¹ dz` against the bound `4π`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleLayerBound {
    pub max_value: f64,
    pub argmax: Point2,
    pub center_value: f64,
    pub bound: f64,
    pub samples: usize,
}

impl SingleLayerBound {
    pub fn holds(&self) -> bool {
        self.max_value <= self.bound
    }
}

/// Sample points: the center, then a golden-angle spiral filling the closed
/// disk out to the unit circle.
pub fn disk_samples(samples: usize) -> Vec<Point2> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let rest = samples.saturating_sub(1);
    std::iter::once(Point2::zeros())
        .chain((1..=rest).map(|k| {
            let r = (k as f64 / rest as f64).sqrt();
            let a = k as f64 * golden;
            Point2::new(r * a.cos(), r * a.sin())
        }))
        .take(samples.max(1))
        .collect()
}

pub fn single_layer_bound(grid: &QuadratureGrid, samples: usize) -> Result<SingleLayerBound> {
    if samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let points = disk_samples(samples);
    let values: Vec<f64> = points.par_iter().map(|x| 2.0 * PI * grid.l_one_unchecked(x)).collect();
    let (imax, &max_value) = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("at least one sample");
    Ok(SingleLayerBound { max_value, argmax: points[imax], center_value: values[0], bound: 4.0 * PI, samples })
}
