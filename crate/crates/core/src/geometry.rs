//! Composite spine geometry: a head (ball or ellipsoid) on the `x₁ ≤ 0` side
//! joined through the flat junction disk `Γ_ε` at `x₁ = 0` to a cylindrical
//! neck `{0 ≤ x₁ ≤ L, x₂² + x₃² ≤ ε²}` whose far end is absorbing.
//!
//! The walker only needs three questions answered: is a point inside, what
//! happens to a straight step (stay, reflect, or get absorbed), and how far
//! the current point is from the parts of the boundary that have to be
//! resolved with the fine time step. [`WalkDomain`] captures those, and the
//! two calibration domains used to validate the walker implement it too.
//!
//! Every domain here is a union of convex pieces, each an intersection of
//! quadric or half-space constraints. A segment is followed through the
//! union by intersecting it with every piece and merging the parameter
//! intervals that overlap.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub type Point = Vector3<f64>;

/// Reflections attempted per step before the walker stays where it was.
pub const MAX_REFLECTIONS: usize = 8;

// Segment-parameter slack for deciding that two pieces touch along a step.
const SEGMENT_TOL: f64 = 1e-12;
// Distance a restart point is moved inward from a crossing, along the normal.
const RESTART_PULLBACK: f64 = 1e-10;

/// Shape of the spine head, before placement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    Ball {
        radius: f64,
    },
    /// Semi-axes along `x₁`, `x₂`, `x₃`.
    Ellipsoid {
        a: f64,
        b: f64,
        c: f64,
    },
}

impl HeadKind {
    pub fn semi_axes(&self) -> Point {
        match *self {
            HeadKind::Ball { radius } => Point::new(radius, radius, radius),
            HeadKind::Ellipsoid { a, b, c } => Point::new(a, b, c),
        }
    }

    /// Volume of the full ball or ellipsoid.
    pub fn volume(&self) -> f64 {
        let s = self.semi_axes();
        4.0 * std::f64::consts::PI * s.x * s.y * s.z / 3.0
    }

    fn validate(&self) -> Result<()> {
        let s = self.semi_axes();
        ensure_finite("head semi-axes", s.as_slice())?;
        if s.iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain(format!("head dimensions must be positive, got {self:?}")));
        }
        Ok(())
    }
}

/// A placed head: the shape plus its center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadShape {
    pub kind: HeadKind,
    pub center: Point,
}

impl HeadShape {
    /// Places `kind` on the negative `x₁` axis so that the plane `x₁ = 0`
    /// cuts a cross-section whose smaller semi-axis is exactly `eps`. For a
    /// ball the cut is the disk of radius `eps` and the neck attaches flush.
    pub fn attached(kind: HeadKind, eps: f64) -> Result<Self> {
        kind.validate()?;
        let s = kind.semi_axes();
        let lateral = s.y.min(s.z);
        if eps.is_nan() || eps <= 0.0 || eps > lateral {
            return Err(Error::Domain(format!(
                "neck radius {eps} must be positive and at most the head's lateral semi-axis {lateral}"
            )));
        }
        let offset = s.x * (1.0 - (eps / lateral).powi(2)).sqrt();
        Ok(Self { kind, center: Point::new(-offset, 0.0, 0.0) })
    }

    /// Smaller semi-axis of the head's cross-section in the plane `x₁ = 0`,
    /// or `None` when the plane misses the head.
    pub fn junction_radius(&self) -> Option<f64> {
        let s = self.kind.semi_axes();
        let t = 1.0 - (self.center.x / s.x).powi(2);
        (t >= 0.0).then(|| s.y.min(s.z) * t.sqrt())
    }

    fn level(&self, p: &Point) -> f64 {
        let s = self.kind.semi_axes();
        let q = p - self.center;
        (q.x / s.x).powi(2) + (q.y / s.y).powi(2) + (q.z / s.z).powi(2) - 1.0
    }
}

/// Where a step ended up relative to the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryClassification {
    Interior,
    Reflecting,
    Absorbing,
}

/// What the Monte Carlo walker needs from a domain.
pub trait WalkDomain: Sync {
    /// Whether `p` is an interior point of the domain.
    fn contains(&self, p: &Point) -> bool;

    /// Follows the straight step `from → to`. Returns the destination when it
    /// is interior, the crossing point when the step leaves through the
    /// absorbing boundary, and the specularly reflected point otherwise.
    fn classify_step(&self, from: &Point, to: &Point) -> Result<(BoundaryClassification, Point)>;

    /// Distance from `p` to the boundary features that need the fine time
    /// step (absorbing parts, narrow passages).
    fn resolution_distance(&self, p: &Point) -> f64;

    /// Distance to a nearby absorbing surface, when `p` is in a region where
    /// that surface is the only one that matters for absorption.
    fn absorbing_gap(&self, p: &Point) -> Option<f64>;

    /// Smallest geometric length scale that the walker's fine step must resolve.
    fn feature_size(&self) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum FaceKind {
    Reflecting,
    Absorbing,
}

#[derive(Clone, Copy, Debug)]
enum Surface {
    /// Solid ellipsoid `Σ ((p − c)ᵢ / sᵢ)² ≤ 1`.
    Ellipsoid { center: Point, semi_axes: Point },
    /// Infinite solid cylinder about the `x₁` axis.
    AxialCylinder { radius: f64 },
    /// Half-space `n·p ≤ offset` with unit `n`.
    HalfSpace { normal: Point, offset: f64 },
}

impl Surface {
    fn level(&self, p: &Point) -> f64 {
        match *self {
            Surface::Ellipsoid { center, semi_axes } => {
                let q = (p - center).component_div(&semi_axes);
                q.norm_squared() - 1.0
            }
            Surface::AxialCylinder { radius } => (p.y * p.y + p.z * p.z) / (radius * radius) - 1.0,
            Surface::HalfSpace { normal, offset } => normal.dot(p) - offset,
        }
    }

    fn outward_normal(&self, p: &Point) -> Point {
        match *self {
            Surface::Ellipsoid { center, semi_axes } => {
                let q = p - center;
                Point::new(
                    q.x / (semi_axes.x * semi_axes.x),
                    q.y / (semi_axes.y * semi_axes.y),
                    q.z / (semi_axes.z * semi_axes.z),
                )
                .normalize()
            }
            Surface::AxialCylinder { .. } => Point::new(0.0, p.y, p.z).normalize(),
            Surface::HalfSpace { normal, .. } => normal,
        }
    }

    /// Range of `t` for which `p + t·d` satisfies the constraint.
    fn interval(&self, p: &Point, d: &Point) -> Option<(f64, f64)> {
        match *self {
            Surface::Ellipsoid { center, semi_axes } => {
                let q = (p - center).component_div(&semi_axes);
                let v = d.component_div(&semi_axes);
                quadratic_interval(v.norm_squared(), 2.0 * q.dot(&v), q.norm_squared() - 1.0)
            }
            Surface::AxialCylinder { radius } => {
                let r2 = radius * radius;
                quadratic_interval(
                    (d.y * d.y + d.z * d.z) / r2,
                    2.0 * (p.y * d.y + p.z * d.z) / r2,
                    (p.y * p.y + p.z * p.z) / r2 - 1.0,
                )
            }
            Surface::HalfSpace { normal, offset } => {
                let rate = normal.dot(d);
                let gap = offset - normal.dot(p);
                if rate > 0.0 {
                    Some((f64::NEG_INFINITY, gap / rate))
                } else if rate < 0.0 {
                    Some((gap / rate, f64::INFINITY))
                } else if gap >= 0.0 {
                    Some((f64::NEG_INFINITY, f64::INFINITY))
                } else {
                    None
                }
            }
        }
    }
}

/// Solution set of `a t² + b t + c ≤ 0` for `a ≥ 0`.
fn quadratic_interval(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    if a == 0.0 {
        return if b > 0.0 {
            Some((f64::NEG_INFINITY, -c / b))
        } else if b < 0.0 {
            Some((-c / b, f64::INFINITY))
        } else if c <= 0.0 {
            Some((f64::NEG_INFINITY, f64::INFINITY))
        } else {
            None
        };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return Some((0.0, 0.0));
    }
    let (t1, t2) = (q / a, c / q);
    Some((t1.min(t2), t1.max(t2)))
}

#[derive(Clone, Copy, Debug)]
struct Face {
    surface: Surface,
    kind: FaceKind,
}

#[derive(Clone, Debug)]
struct ConvexPiece {
    faces: Vec<Face>,
}

struct PieceSpan {
    lo: f64,
    hi: f64,
    exit_face: Option<Face>,
}

impl ConvexPiece {
    fn contains_closed(&self, p: &Point) -> bool {
        self.faces.iter().all(|f| f.surface.level(p) <= 0.0)
    }

    fn contains_open(&self, p: &Point) -> bool {
        self.faces.iter().all(|f| f.surface.level(p) < 0.0)
    }

    fn span(&self, p: &Point, d: &Point) -> Option<PieceSpan> {
        let mut span = PieceSpan { lo: f64::NEG_INFINITY, hi: f64::INFINITY, exit_face: None };
        for face in &self.faces {
            let (lo, hi) = face.surface.interval(p, d)?;
            span.lo = span.lo.max(lo);
            // Ties go to the absorbing face: the absorbing disk is closed.
            if hi < span.hi || (hi == span.hi && face.kind == FaceKind::Absorbing) {
                span.hi = hi;
                span.exit_face = Some(*face);
            }
        }
        (span.lo <= span.hi).then_some(span)
    }
}

/// A union of convex pieces listed in tie-break priority order.
#[derive(Clone, Debug)]
struct PieceUnion {
    pieces: Vec<ConvexPiece>,
}

struct Exit {
    t: f64,
    face: Face,
}

impl PieceUnion {
    fn first_exit(&self, start: &Point, end: &Point) -> Result<Option<Exit>> {
        let d = end - start;
        let spans: Vec<Option<PieceSpan>> = self.pieces.iter().map(|p| p.span(start, &d)).collect();

        let mut reach: Option<f64> = None;
        for span in spans.iter().flatten() {
            if span.lo <= SEGMENT_TOL && span.hi >= -SEGMENT_TOL {
                reach = Some(reach.map_or(span.hi, |r: f64| r.max(span.hi)));
            }
        }
        let Some(mut reach) = reach else {
            return Err(Error::Domain(format!("step starts outside the domain at {:?}", start.as_slice())));
        };
        loop {
            let mut extended = false;
            for span in spans.iter().flatten() {
                if span.lo <= reach + SEGMENT_TOL && span.hi > reach + SEGMENT_TOL {
                    reach = span.hi;
                    extended = true;
                }
            }
            if !extended {
                break;
            }
        }
        if reach >= 1.0 {
            return Ok(None);
        }
        let face = spans
            .iter()
            .flatten()
            .find(|s| (s.hi - reach).abs() <= SEGMENT_TOL && s.lo <= reach + SEGMENT_TOL)
            .and_then(|s| s.exit_face)
            .ok_or_else(|| Error::Domain("segment exit without a bounding face".into()))?;
        Ok(Some(Exit { t: reach.max(0.0), face }))
    }

    fn classify_step(&self, from: &Point, to: &Point) -> Result<(BoundaryClassification, Point)> {
        ensure_finite("step origin", from.as_slice())?;
        ensure_finite("step destination", to.as_slice())?;
        if self.pieces.iter().any(|p| p.contains_closed(from) && p.contains_closed(to)) {
            return Ok((BoundaryClassification::Interior, *to));
        }

        let mut start = *from;
        let mut end = *to;
        let mut reflected = false;
        for _ in 0..MAX_REFLECTIONS {
            let Some(exit) = self.first_exit(&start, &end)? else {
                if !reflected {
                    return Ok((BoundaryClassification::Interior, end));
                }
                if !self.pieces.iter().any(|p| p.contains_open(&end)) {
                    break;
                }
                return Ok((BoundaryClassification::Reflecting, end));
            };
            let step = end - start;
            let hit = start + exit.t * step;
            if exit.face.kind == FaceKind::Absorbing {
                return Ok((BoundaryClassification::Absorbing, hit));
            }
            let n = exit.face.surface.outward_normal(&hit);
            end -= 2.0 * (end - hit).dot(&n) * n;
            start = hit - RESTART_PULLBACK * n;
            reflected = true;
            if !self.pieces.iter().any(|p| p.contains_closed(&start)) {
                break;
            }
        }
        Ok((BoundaryClassification::Reflecting, *from))
    }
}

/// The full spine: head plus neck, junction point `x*` at the origin and the
/// neck running along `+x₁`.
#[derive(Clone, Debug)]
pub struct SpineDomain {
    pub head: HeadShape,
    pub eps: f64,
    pub neck_len: f64,
    pub x_star: Point,
    pub axis: Point,
    pieces: PieceUnion,
}

impl SpineDomain {
    /// Builds the spine with the head placed by [`HeadShape::attached`].
    pub fn new(kind: HeadKind, eps: f64, neck_len: f64) -> Result<Self> {
        let head = HeadShape::attached(kind, eps)?;
        Self::with_head(head, eps, neck_len)
    }

    /// Builds the spine around an already placed head.
    pub fn with_head(head: HeadShape, eps: f64, neck_len: f64) -> Result<Self> {
        head.kind.validate()?;
        ensure_finite("head center", head.center.as_slice())?;
        ensure_finite("neck dimensions", &[eps, neck_len])?;
        if !(eps > 0.0 && eps < neck_len) {
            return Err(Error::Domain(format!("need 0 < eps < neck length, got eps = {eps}, L = {neck_len}")));
        }
        if head.center.x >= 0.0 || head.center.y != 0.0 || head.center.z != 0.0 {
            return Err(Error::Domain("head center must lie on the negative x₁ axis".into()));
        }
        let lateral = head.kind.semi_axes().y.min(head.kind.semi_axes().z);
        match head.junction_radius() {
            // Rounding in the flush placement can leave the cut a hair below eps,
            // by up to a few ulps of 1 relative to (eps / lateral)².
            Some(r) if r >= eps - 8.0 * f64::EPSILON * lateral * lateral / eps => {}
            other => {
                return Err(Error::Domain(format!(
                    "plane x₁ = 0 must cut the head in a section of radius ≥ eps = {eps}, got {other:?}"
                )))
            }
        }

        let x_axis = Point::x();
        let pieces = PieceUnion {
            pieces: vec![
                // Neck first so ties at the junction rim resolve against the wall.
                ConvexPiece {
                    faces: vec![
                        Face { surface: Surface::AxialCylinder { radius: eps }, kind: FaceKind::Reflecting },
                        Face {
                            surface: Surface::HalfSpace { normal: -x_axis, offset: 0.0 },
                            kind: FaceKind::Reflecting,
                        },
                        Face {
                            surface: Surface::HalfSpace { normal: x_axis, offset: neck_len },
                            kind: FaceKind::Absorbing,
                        },
                    ],
                },
                ConvexPiece {
                    faces: vec![
                        Face {
                            surface: Surface::Ellipsoid { center: head.center, semi_axes: head.kind.semi_axes() },
                            kind: FaceKind::Reflecting,
                        },
                        Face {
                            surface: Surface::HalfSpace { normal: x_axis, offset: 0.0 },
                            kind: FaceKind::Reflecting,
                        },
                    ],
                },
            ],
        };
        Ok(Self { head, eps, neck_len, x_star: Point::zeros(), axis: x_axis, pieces })
    }

    /// Unit-ball head, the configuration used throughout the reference tables.
    pub fn unit_ball(eps: f64, neck_len: f64) -> Result<Self> {
        Self::new(HeadKind::Ball { radius: 1.0 }, eps, neck_len)
    }

    /// Head volume `|Ω_h|`, taken as the full ball or ellipsoid. The sliver
    /// beyond the junction plane is `O(ε⁴)` and ignored.
    pub fn head_volume(&self) -> f64 {
        self.head.kind.volume()
    }

    pub fn head_center(&self) -> Point {
        self.head.center
    }

    fn radial2(p: &Point) -> f64 {
        p.y * p.y + p.z * p.z
    }

    pub fn in_neck(&self, p: &Point) -> bool {
        p.x >= 0.0 && p.x < self.neck_len && Self::radial2(p) < self.eps * self.eps
    }

    pub fn in_head(&self, p: &Point) -> bool {
        p.x < 0.0 && self.head.level(p) < 0.0
    }
}

impl WalkDomain for SpineDomain {
    fn contains(&self, p: &Point) -> bool {
        self.in_head(p) || self.in_neck(p)
    }

    fn classify_step(&self, from: &Point, to: &Point) -> Result<(BoundaryClassification, Point)> {
        self.pieces.classify_step(from, to)
    }

    fn resolution_distance(&self, p: &Point) -> f64 {
        if p.x >= 0.0 {
            return 0.0;
        }
        let lateral = (Self::radial2(p).sqrt() - self.eps).max(0.0);
        (p.x * p.x + lateral * lateral).sqrt()
    }

    fn absorbing_gap(&self, p: &Point) -> Option<f64> {
        self.in_neck(p).then(|| self.neck_len - p.x)
    }

    fn feature_size(&self) -> f64 {
        self.eps
    }
}

/// Ball of radius `R` centered at the origin whose whole boundary absorbs.
/// The exact mean exit time from `x` is `(R² − |x|²)/6`.
#[derive(Clone, Debug)]
pub struct AbsorbingBall {
    pub radius: f64,
    pieces: PieceUnion,
}

impl AbsorbingBall {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!("radius must be positive, got {radius}")));
        }
        let surface = Surface::Ellipsoid { center: Point::zeros(), semi_axes: Point::repeat(radius) };
        let pieces =
            PieceUnion { pieces: vec![ConvexPiece { faces: vec![Face { surface, kind: FaceKind::Absorbing }] }] };
        Ok(Self { radius, pieces })
    }
}

impl WalkDomain for AbsorbingBall {
    fn contains(&self, p: &Point) -> bool {
        p.norm() < self.radius
    }

    fn classify_step(&self, from: &Point, to: &Point) -> Result<(BoundaryClassification, Point)> {
        self.pieces.classify_step(from, to)
    }

    fn resolution_distance(&self, p: &Point) -> f64 {
        (self.radius - p.norm()).max(0.0)
    }

    fn absorbing_gap(&self, p: &Point) -> Option<f64> {
        Some((self.radius - p.norm()).max(0.0))
    }

    fn feature_size(&self) -> f64 {
        self.radius
    }
}

/// Cylinder `0 ≤ x₁ ≤ L`, `x₂² + x₃² ≤ r²` with reflecting wall and cap at
/// `x₁ = 0`, absorbing at `x₁ = L`. The exact mean exit time is `(L² − x₁²)/2`.
#[derive(Clone, Debug)]
pub struct CappedCylinder {
    pub radius: f64,
    pub length: f64,
    pieces: PieceUnion,
}

impl CappedCylinder {
    pub fn new(radius: f64, length: f64) -> Result<Self> {
        if !(radius > 0.0 && length > 0.0 && radius.is_finite() && length.is_finite()) {
            return Err(Error::Domain(format!("cylinder radius and length must be positive, got {radius}, {length}")));
        }
        let x_axis = Point::x();
        let pieces = PieceUnion {
            pieces: vec![ConvexPiece {
                faces: vec![
                    Face { surface: Surface::AxialCylinder { radius }, kind: FaceKind::Reflecting },
                    Face { surface: Surface::HalfSpace { normal: -x_axis, offset: 0.0 }, kind: FaceKind::Reflecting },
                    Face { surface: Surface::HalfSpace { normal: x_axis, offset: length }, kind: FaceKind::Absorbing },
                ],
            }],
        };
        Ok(Self { radius, length, pieces })
    }
}

impl WalkDomain for CappedCylinder {
    fn contains(&self, p: &Point) -> bool {
        p.x >= 0.0 && p.x < self.length && p.y * p.y + p.z * p.z < self.radius * self.radius
    }

    fn classify_step(&self, from: &Point, to: &Point) -> Result<(BoundaryClassification, Point)> {
        self.pieces.classify_step(from, to)
    }

    fn resolution_distance(&self, p: &Point) -> f64 {
        (self.length - p.x).clamp(0.0, self.radius)
    }

    fn absorbing_gap(&self, p: &Point) -> Option<f64> {
        Some((self.length - p.x).max(0.0))
    }

    fn feature_size(&self) -> f64 {
        self.radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn spine() -> SpineDomain {
        SpineDomain::unit_ball(0.1, 1.0).unwrap()
    }

    #[test]
    fn steps_from_the_wall_stay_inside() {
        let d = spine();
        let from = Point::new(-0.4494902129181732, -0.2934905923817651, 0.7850452538456931);
        let to = Point::new(-0.42508074553094294, -0.2947108594757804, 0.7676317840172678);
        let (_, p) = d.classify_step(&from, &to).unwrap();
        assert!(d.contains(&p), "{p:?}");

        let c = d.head_center();
        for k in 0..200 {
            let a = k as f64 * 0.37;
            let n = Point::new(a.cos() * 0.3, a.sin(), (1.7 * a).cos()).normalize();
            let on_wall = c + n * (1.0 - 1e-13);
            if !d.contains(&on_wall) {
                continue;
            }
            for step in [n * 0.2, n * 0.05 + Point::new(0.0, 0.1, -0.1), -n * 0.01 + Point::new(0.3, 0.0, 0.0)] {
                let (kind, p) = d.classify_step(&on_wall, &(on_wall + step)).unwrap();
                assert!(kind == BoundaryClassification::Absorbing || d.contains(&p), "{on_wall:?} + {step:?} -> {p:?}");
            }
        }
    }

    #[test]
    fn thin_necks_attach_flush() {
        assert!(SpineDomain::unit_ball(0.006810212424874111, 1.0).is_ok());
        for k in 1..2000 {
            let eps = k as f64 * 1e-4;
            assert!(SpineDomain::unit_ball(eps, 1.0).is_ok(), "eps = {eps}");
            assert!(SpineDomain::new(HeadKind::Ellipsoid { a: 1.3, b: 0.9, c: 0.7 }, eps * 0.35, 1.0).is_ok());
        }
    }

    #[test]
    fn membership_examples() {
        let d = spine();
        assert!(d.contains(&d.head_center()));
        assert!(!d.contains(&Point::new(1.0 + 1e-9, 0.0, 0.0)));
        assert!(d.contains(&Point::new(0.5, 0.0, 0.0)));
        assert!(!d.contains(&Point::new(0.5, 0.2, 0.0)));
        assert!(!d.contains(&Point::new(0.003, 0.5, 0.0)), "cap of the ball beyond the junction is outside");
    }

    #[test]
    fn junction_disk_is_interior() {
        let d = spine();
        for &(y, z) in &[(0.0, 0.0), (0.09, 0.0), (0.05, -0.05), (0.0, -0.099)] {
            assert!(d.contains(&Point::new(0.0, y, z)), "({y}, {z})");
        }
    }

    #[test]
    fn ball_is_cut_flush_at_the_junction() {
        let d = spine();
        assert_relative_eq!(d.head.center.x, -(1.0f64 - 0.01).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(d.head.junction_radius().unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn head_volume_examples() {
        let vol = |kind| SpineDomain::new(kind, 0.1, 1.0).unwrap().head_volume();
        assert_relative_eq!(vol(HeadKind::Ball { radius: 1.0 }), 4.0 * PI / 3.0, epsilon = 1e-14);
        assert_relative_eq!(vol(HeadKind::Ball { radius: 2.0 }), 32.0 * PI / 3.0, epsilon = 1e-13);
        assert_relative_eq!(vol(HeadKind::Ellipsoid { a: 1.0, b: 1.0, c: 0.5 }), 2.0 * PI / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn invalid_constructions() {
        assert!(SpineDomain::unit_ball(0.0, 1.0).is_err());
        assert!(SpineDomain::unit_ball(0.5, 0.4).is_err());
        assert!(SpineDomain::unit_ball(1.5, 3.0).is_err());
        assert!(SpineDomain::new(HeadKind::Ball { radius: -1.0 }, 0.1, 1.0).is_err());
        let far = HeadShape { kind: HeadKind::Ball { radius: 1.0 }, center: Point::new(-2.0, 0.0, 0.0) };
        assert!(SpineDomain::with_head(far, 0.1, 1.0).is_err());
    }

    #[test]
    fn axial_step_is_absorbed_at_the_neck_end() {
        let d = spine();
        let (class, p) = d.classify_step(&Point::new(0.5, 0.0, 0.0), &Point::new(1.1, 0.0, 0.0)).unwrap();
        assert_eq!(class, BoundaryClassification::Absorbing);
        assert_relative_eq!(p, Point::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn zero_step_stays_put() {
        let d = spine();
        let c = d.head_center();
        assert_eq!(d.classify_step(&c, &c).unwrap(), (BoundaryClassification::Interior, c));
    }

    #[test]
    fn wall_reflection_mirrors_across_the_cylinder_tangent_plane() {
        // Crosses the wall at (0.5, 0.1, 0) with normal +x₂; the image of
        // x₂ = 0.15 across x₂ = 0.1 is 0.05.
        let d = spine();
        let (class, p) = d.classify_step(&Point::new(0.5, 0.05, 0.0), &Point::new(0.5, 0.15, 0.0)).unwrap();
        assert_eq!(class, BoundaryClassification::Reflecting);
        assert_relative_eq!(p, Point::new(0.5, 0.05, 0.0), epsilon = 1e-12);
        assert!(d.contains(&p));
    }

    #[test]
    fn head_wall_reflection_stays_inside() {
        let d = spine();
        let c = d.head_center();
        let from = c + Point::new(0.0, 0.0, 0.98);
        let (class, p) = d.classify_step(&from, &(from + Point::new(0.0, 0.0, 0.05))).unwrap();
        assert_eq!(class, BoundaryClassification::Reflecting);
        assert!(d.contains(&p));
        assert_relative_eq!((p - c).norm(), 0.97, epsilon = 1e-9);
    }

    #[test]
    fn step_through_the_junction_into_the_neck() {
        let d = spine();
        let from = Point::new(-0.02, 0.01, 0.0);
        let to = Point::new(0.03, 0.0, 0.01);
        assert_eq!(d.classify_step(&from, &to).unwrap(), (BoundaryClassification::Interior, to));
        assert_eq!(d.classify_step(&to, &from).unwrap(), (BoundaryClassification::Interior, from));
    }

    #[test]
    fn stepping_out_of_the_neck_beside_the_junction_reflects() {
        // Leaves the neck wall at x₁ > 0 heading outward: the region beyond
        // the wall is outside even though it is close to the head.
        let d = spine();
        let (class, p) = d.classify_step(&Point::new(0.01, 0.09, 0.0), &Point::new(0.01, 0.13, 0.0)).unwrap();
        assert_eq!(class, BoundaryClassification::Reflecting);
        assert!(d.contains(&p));
    }

    #[test]
    fn rejects_non_finite_and_outside_starts() {
        let d = spine();
        let c = d.head_center();
        assert!(matches!(d.classify_step(&c, &Point::new(f64::NAN, 0.0, 0.0)), Err(Error::InvalidInput(_))));
        assert!(d.classify_step(&Point::new(3.0, 3.0, 3.0), &c).is_err());
    }

    #[test]
    fn ellipsoid_ledge_reflects() {
        // Cut section radius 0.5 > eps leaves a reflecting annulus at x₁ = 0.
        let head = HeadShape {
            kind: HeadKind::Ellipsoid { a: 1.0, b: 1.0, c: 1.0 },
            center: Point::new(-(0.75f64).sqrt(), 0.0, 0.0),
        };
        let d = SpineDomain::with_head(head, 0.1, 1.0).unwrap();
        let (class, p) = d.classify_step(&Point::new(-0.01, 0.3, 0.0), &Point::new(0.02, 0.3, 0.0)).unwrap();
        assert_eq!(class, BoundaryClassification::Reflecting);
        assert_relative_eq!(p, Point::new(-0.02, 0.3, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn calibration_domains() {
        let ball = AbsorbingBall::new(1.0).unwrap();
        let (class, p) = ball.classify_step(&Point::zeros(), &Point::new(0.0, 2.0, 0.0)).unwrap();
        assert_eq!(class, BoundaryClassification::Absorbing);
        assert_relative_eq!(p, Point::new(0.0, 1.0, 0.0), epsilon = 1e-12);

        let cyl = CappedCylinder::new(0.1, 1.0).unwrap();
        let (class, p) = cyl.classify_step(&Point::new(0.01, 0.0, 0.0), &Point::new(-0.02, 0.0, 0.0)).unwrap();
        assert_eq!(class, BoundaryClassification::Reflecting);
        assert_relative_eq!(p, Point::new(0.02, 0.0, 0.0), epsilon = 1e-12);
    }

    fn rotate_about_axis(p: &Point, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(p.x, c * p.y - s * p.z, s * p.y + c * p.z)
    }

    fn interior_point() -> impl Strategy<Value = Point> {
        // Points spread over head and neck, rejected when outside.
        (-2.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_map(|(x, y, z)| if x >= 0.0 { Point::new(x, 0.1 * y, 0.1 * z) } else { Point::new(x, y, z) })
            .prop_filter("interior", |p| spine().contains(p))
    }

    proptest! {
        #[test]
        fn interior_destination_is_returned_unchanged(from in interior_point(), to in interior_point()) {
            let d = spine();
            let (class, p) = d.classify_step(&from, &to).unwrap();
            if class == BoundaryClassification::Interior {
                prop_assert_eq!(p, to);
            }
            if d.pieces.pieces.iter().any(|piece| piece.contains_closed(&from) && piece.contains_closed(&to)) {
                prop_assert_eq!(class, BoundaryClassification::Interior);
            }
        }

        #[test]
        fn short_steps_land_inside(
            from in interior_point(),
            dir in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
            frac in 0.0..1.0f64,
        ) {
            let d = spine();
            let v = Point::new(dir.0, dir.1, dir.2);
            prop_assume!(v.norm() > 1e-6);
            let step = v.normalize() * (frac * d.eps / 2.0);
            let (class, p) = d.classify_step(&from, &(from + step)).unwrap();
            if class != BoundaryClassification::Absorbing {
                prop_assert!(d.contains(&p), "{:?} -> {:?}", from, p);
            }
        }

        #[test]
        fn commutes_with_rotation_about_the_neck_axis(
            from in interior_point(),
            dir in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
            len in 0.0..0.05f64,
            angle in 0.0..(2.0 * PI),
        ) {
            let d = spine();
            let to = from + Point::new(dir.0, dir.1, dir.2) * len;
            let (class, p) = d.classify_step(&from, &to).unwrap();
            let (rclass, rp) = d
                .classify_step(&rotate_about_axis(&from, angle), &rotate_about_axis(&to, angle))
                .unwrap();
            prop_assert_eq!(d.contains(&from), d.contains(&rotate_about_axis(&from, angle)));
            prop_assert_eq!(class, rclass);
            prop_assert!((rotate_about_axis(&p, angle) - rp).norm() < 1e-9);
        }
    }
}
