//! Closed-form results for the Robin–Neumann reduction of the spine.
//!
//! Replacing the neck by the one-dimensional profile `u(x₁) = −x₁²/2 + C x₁ +
//! L²/2 − C L` turns the absorbing neck end into a Robin condition
//! `∂u/∂ν + α u = β` on the junction disk with `α = 1/L`, `β = L/2`. For a
//! disk-shaped junction of radius `ε` the mean first passage time in the
//! head then expands as
//!
//! ```text
//! u_ε(x) ≈ |Ω_h|/(π α ε²) + |Ω_h| M/(π² ε) + β/α − |Ω_h|/(2π |x − x*|)
//! ```
//!
//! which for the neck reduction is
//! `|Ω_h| L/(π ε²) + |Ω_h| M/(π² ε) + L²/2 − |Ω_h|/(2π |x − x*|)`.
//! The bounded, domain-dependent correction is not part of this formula and
//! is not evaluated.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::geometry::{Point, SpineDomain};
use crate::quadrature::Point2;

/// `M` for a disk-shaped junction.
pub const M_UNIT_DISK: f64 = 8.0 / 3.0;

/// `α ε` above which the expansion is flagged as leaving its regime.
pub const ALPHA_EPS_WARN: f64 = 0.1;
/// `α ε` at which parameters are rejected.
pub const ALPHA_EPS_MAX: f64 = 1.0;

/// Coefficients of the Robin condition `∂u/∂ν + α u = β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobinParams {
    pub alpha: f64,
    pub beta: f64,
}

impl RobinParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        ensure_finite("Robin coefficients", &[alpha, beta])?;
        if alpha <= 0.0 || beta <= 0.0 {
            return Err(Error::Domain(format!("Robin coefficients must be positive, got α = {alpha}, β = {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    /// Constant term `β/α` of the expansion.
    pub fn ratio(&self) -> f64 {
        self.beta / self.alpha
    }
}

/// Robin coefficients obtained by matching the neck profile at the junction:
/// `(α, β) = (1/L, L/2)`.
pub fn robin_from_neck(neck_len: f64) -> Result<RobinParams> {
    if !(neck_len > 0.0 && neck_len.is_finite()) {
        return Err(Error::Domain(format!("neck length must be positive, got {neck_len}")));
    }
    RobinParams::new(1.0 / neck_len, neck_len / 2.0)
}

/// Inputs of the expansion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParams {
    pub head_volume: f64,
    pub eps: f64,
    pub neck_len: f64,
    pub m_const: f64,
    pub x_star: Point,
    pub robin: RobinParams,
}

impl AsymptoticParams {
    /// Parameters with Robin coefficients from the neck reduction.
    pub fn new(head_volume: f64, eps: f64, neck_len: f64, m_const: f64, x_star: Point) -> Result<Self> {
        Self::with_robin(head_volume, eps, neck_len, m_const, x_star, robin_from_neck(neck_len)?)
    }

    pub fn with_robin(
        head_volume: f64,
        eps: f64,
        neck_len: f64,
        m_const: f64,
        x_star: Point,
        robin: RobinParams,
    ) -> Result<Self> {
        ensure_finite("asymptotic parameters", &[head_volume, eps, neck_len, m_const])?;
        ensure_finite("junction point", x_star.as_slice())?;
        if head_volume <= 0.0 || eps <= 0.0 || m_const <= 0.0 {
            return Err(Error::Domain(format!(
                "need positive head volume, eps and M, got {head_volume}, {eps}, {m_const}"
            )));
        }
        let alpha_eps = robin.alpha * eps;
        if alpha_eps >= ALPHA_EPS_MAX {
            return Err(Error::Domain(format!("α ε = {alpha_eps} is not small; the expansion does not apply")));
        }
        if alpha_eps > ALPHA_EPS_WARN {
            warn!("α ε = {alpha_eps:.3} exceeds {ALPHA_EPS_WARN}; expansion accuracy degrades");
        }
        Ok(Self { head_volume, eps, neck_len, m_const, x_star, robin })
    }

    /// Parameters for a spine with a disk junction.
    pub fn for_domain(domain: &SpineDomain) -> Result<Self> {
        Self::new(domain.head_volume(), domain.eps, domain.neck_len, M_UNIT_DISK, domain.x_star)
    }
}

/// The four terms of the expansion at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerms {
    pub leading: f64,
    pub second_order: f64,
    pub constant: f64,
    pub position: f64,
}

impl ExpansionTerms {
    pub fn total(&self) -> f64 {
        self.leading + self.second_order + self.constant + self.position
    }
}

/// `|Ω_h|/(π α ε²)`, i.e. `|Ω_h| L/(π ε²)` for the neck reduction.
pub fn leading_term(params: &AsymptoticParams) -> f64 {
    params.head_volume / (PI * params.robin.alpha * params.eps * params.eps)
}

/// Terms of the expansion at distance `dist = |x − x*|` from the junction.
pub fn expansion_terms_at_distance(params: &AsymptoticParams, dist: f64) -> Result<ExpansionTerms> {
    ensure_finite("distance to the junction", &[dist])?;
    if dist == 0.0 {
        return Err(Error::Singularity("evaluation point coincides with the junction point".into()));
    }
    if dist <= params.eps {
        return Err(Error::Domain(format!(
            "|x − x*| = {dist} must exceed eps = {} to stay away from the junction",
            params.eps
        )));
    }
    let v = params.head_volume;
    Ok(ExpansionTerms {
        leading: leading_term(params),
        second_order: v * params.m_const / (PI * PI * params.eps),
        constant: params.robin.ratio(),
        position: -v / (2.0 * PI * dist),
    })
}

pub fn expansion_terms(params: &AsymptoticParams, x: &Point) -> Result<ExpansionTerms> {
    ensure_finite("evaluation point", x.as_slice())?;
    expansion_terms_at_distance(params, (x - params.x_star).norm())
}

/// Asymptotic mean first passage time `u_ε(x)`.
pub fn eval_u_eps(params: &AsymptoticParams, x: &Point) -> Result<f64> {
    expansion_terms(params, x).map(|t| t.total())
}

/// Where "the center of the spine head" is taken to be.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterConvention {
    /// The head's geometric center, at `|x − x*| = √(R² − ε²)` for a ball.
    #[default]
    HeadCenter,
    /// The point on the axis at distance `R` (the first semi-axis) from `x*`.
    UnitDistance,
}

pub fn evaluation_point(domain: &SpineDomain, convention: CenterConvention) -> Point {
    match convention {
        CenterConvention::HeadCenter => domain.head_center(),
        CenterConvention::UnitDistance => domain.x_star - domain.axis * domain.head.kind.semi_axes().x,
    }
}

/// Normal derivative of `u_ε` on the junction disk,
/// `φ_ε = leading + correction(x/ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxExpansion {
    /// `−|Ω_h|/(π ε²)`.
    pub leading: f64,
    /// `α |Ω_h|/(π² ε)`, the prefactor of `−[M − π L[1](x/ε)]`.
    pub correction_scale: f64,
    pub m_const: f64,
}

impl FluxExpansion {
    pub fn new(params: &AsymptoticParams) -> Self {
        let v = params.head_volume;
        let eps = params.eps;
        Self {
            leading: -v / (PI * eps * eps),
            correction_scale: params.robin.alpha * v / (PI * PI * eps),
            m_const: params.m_const,
        }
    }

    pub fn correction(&self, l_one_value: f64) -> f64 {
        -self.correction_scale * (self.m_const - PI * l_one_value)
    }

    pub fn at(&self, l_one_value: f64) -> f64 {
        self.leading + self.correction(l_one_value)
    }
}

/// Flux at `x_on_gamma ∈ Γ_ε` given `L[1](x/ε)`.
pub fn eval_flux(params: &AsymptoticParams, x_on_gamma: &Point2, l_one_value: f64) -> Result<f64> {
    ensure_finite("junction point", x_on_gamma.as_slice())?;
    ensure_finite("L[1] value", &[l_one_value])?;
    if x_on_gamma.norm() > params.eps * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "|x| = {} lies outside the junction disk of radius {}",
            x_on_gamma.norm(),
            params.eps
        )));
    }
    Ok(FluxExpansion::new(params).at(l_one_value))
}

/// One-dimensional neck profile `−x₁²/2 + C x₁ + L²/2 − C L`.
pub fn neck_profile(neck_len: f64, c: f64, x1: f64) -> Result<f64> {
    ensure_finite("neck profile arguments", &[neck_len, c, x1])?;
    if !(0.0..=neck_len).contains(&x1) {
        return Err(Error::Domain(format!("x₁ = {x1} outside [0, {neck_len}]")));
    }
    Ok(-0.5 * x1 * x1 + c * x1 + 0.5 * neck_len * neck_len - c * neck_len)
}

/// `g(x) = (R² − |x − center|²)/6`, the solution of `Δg = −1` in a ball with
/// `∂g/∂ν = −R/3` and zero boundary mean.
pub fn g_ball(radius: f64, center: &Point, x: &Point) -> Result<f64> {
    ensure_finite("g arguments", &[radius])?;
    ensure_finite("g evaluation point", x.as_slice())?;
    let r2 = (x - center).norm_squared();
    if radius <= 0.0 || r2 > radius * radius * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("point at distance {} outside the ball of radius {radius}", r2.sqrt())));
    }
    Ok((radius * radius - r2) / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{apply_l_one, QuadratureGrid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const UNIT_BALL: f64 = 4.0 * PI / 3.0;

    fn params(eps: f64, neck_len: f64) -> AsymptoticParams {
        AsymptoticParams::new(UNIT_BALL, eps, neck_len, M_UNIT_DISK, Point::zeros()).unwrap()
    }

    fn at_center(eps: f64, neck_len: f64) -> f64 {
        let d = SpineDomain::unit_ball(eps, neck_len).unwrap();
        eval_u_eps(&AsymptoticParams::for_domain(&d).unwrap(), &d.head_center()).unwrap()
    }

    fn round2(v: f64) -> f64 {
        (v * 100.0).round() / 100.0
    }

    #[test]
    fn robin_coefficients() {
        assert_eq!(robin_from_neck(1.0).unwrap(), RobinParams { alpha: 1.0, beta: 0.5 });
        assert_eq!(robin_from_neck(2.0).unwrap(), RobinParams { alpha: 0.5, beta: 1.0 });
        for l in [0.3, 1.0, 7.5] {
            let r = robin_from_neck(l).unwrap();
            assert_relative_eq!(r.ratio(), l * l / 2.0, epsilon = 1e-12);
            assert_relative_eq!(r.alpha * r.beta, 0.5, epsilon = 1e-15);
        }
        assert!(robin_from_neck(0.0).is_err());
        assert!(robin_from_neck(-1.0).is_err());
    }

    #[test]
    fn reproduces_reference_table_values() {
        assert_eq!(round2(at_center(0.1, 1.0)), 144.48);
        assert_eq!(round2(at_center(0.01, 1.0)), 13446.34);
        assert_eq!(round2(at_center(0.05, 10.0)), 5405.30);
    }

    #[test]
    fn leading_coefficients() {
        let p = params(0.1, 1.0);
        assert_relative_eq!(leading_term(&p), 400.0 / 3.0, epsilon = 1e-10);
        assert_relative_eq!(leading_term(&p) * p.eps * p.eps, 4.0 / 3.0, epsilon = 1e-14);
        let t = expansion_terms_at_distance(&p, 1.0).unwrap();
        assert_relative_eq!(t.second_order * p.eps, 32.0 / (9.0 * PI), epsilon = 1e-14);
        assert!((t.second_order * p.eps - 1.13).abs() < 0.005);
    }

    #[test]
    fn evaluation_errors() {
        let p = params(0.1, 1.0);
        assert!(matches!(eval_u_eps(&p, &Point::zeros()), Err(Error::Singularity(_))));
        assert!(matches!(eval_u_eps(&p, &Point::new(-0.05, 0.0, 0.0)), Err(Error::Domain(_))));
        assert!(AsymptoticParams::new(UNIT_BALL, 0.1, 0.05, M_UNIT_DISK, Point::zeros()).is_err());
        assert!(AsymptoticParams::new(0.0, 0.1, 1.0, M_UNIT_DISK, Point::zeros()).is_err());
    }

    #[test]
    fn center_conventions() {
        let d = SpineDomain::unit_ball(0.1, 1.0).unwrap();
        let p = AsymptoticParams::for_domain(&d).unwrap();
        let a = evaluation_point(&d, CenterConvention::HeadCenter);
        let b = evaluation_point(&d, CenterConvention::UnitDistance);
        assert_relative_eq!(a.norm(), 0.99f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(b.norm(), 1.0, epsilon = 1e-15);
        let diff = eval_u_eps(&p, &b).unwrap() - eval_u_eps(&p, &a).unwrap();
        assert!(diff > 0.0 && diff < 0.004, "{diff}");
    }

    #[test]
    fn flux_limits_and_center_value() {
        let p = params(0.1, 1.0);
        let f = FluxExpansion::new(&p);
        assert!(f.leading < 0.0);
        // Leading flux over the disk of area π ε² carries exactly −|Ω_h|.
        assert_relative_eq!(f.leading * PI * p.eps * p.eps, -UNIT_BALL, epsilon = 1e-12);

        let weak = AsymptoticParams::with_robin(
            UNIT_BALL,
            0.1,
            1.0,
            M_UNIT_DISK,
            Point::zeros(),
            RobinParams::new(1e-300, 1.0).unwrap(),
        )
        .unwrap();
        for l1 in [0.7, 0.9, 1.0] {
            assert_relative_eq!(
                eval_flux(&weak, &Point2::new(0.03, 0.0), l1).unwrap(),
                -UNIT_BALL / (PI * 0.01),
                epsilon = 1e-9
            );
        }

        let grid = QuadratureGrid::new(6).unwrap();
        let l1 = apply_l_one(&grid, &Point2::zeros()).unwrap();
        let expected = -UNIT_BALL / (PI * 0.01) - (UNIT_BALL / (PI * PI * 0.1)) * (M_UNIT_DISK - PI);
        assert_relative_eq!(eval_flux(&p, &Point2::zeros(), l1).unwrap(), expected, epsilon = 1e-12);
        assert!(eval_flux(&p, &Point2::new(0.2, 0.0), l1).is_err());
    }

    #[test]
    fn flux_integrates_to_minus_head_volume() {
        let grid = QuadratureGrid::new(7).unwrap();
        let m = crate::quadrature::constant_m(&grid);
        for (eps, l) in [(0.1, 1.0), (0.05, 2.0), (0.02, 1.0)] {
            let p = AsymptoticParams::new(UNIT_BALL, eps, l, m, Point::zeros()).unwrap();
            let total: f64 = grid
                .nodes
                .iter()
                .map(|n| {
                    let l1 = apply_l_one(&grid, &n.point).unwrap();
                    eps * eps * n.weight * eval_flux(&p, &(n.point * eps), l1).unwrap()
                })
                .sum();
            let dev = (total + UNIT_BALL).abs();
            assert!(dev <= 2.0 * p.robin.alpha * eps * UNIT_BALL, "eps = {eps}: deviation {dev}");
        }
    }

    #[test]
    fn neck_profile_identities() {
        for c in [-133.0, -1.0, 0.0, 2.5] {
            assert_eq!(neck_profile(1.0, c, 1.0).unwrap(), 0.0);
            let l = 1.7;
            let h = 1e-6;
            let u0 = neck_profile(l, c, 0.0).unwrap();
            let du0 = (neck_profile(l, c, h).unwrap() - u0) / h;
            // u'(0) + u(0)/L = L/2; forward difference has O(h) error.
            assert!((du0 + u0 / l - l / 2.0).abs() < 1e-4);
        }
        let c = -UNIT_BALL / (PI * 0.01);
        assert_relative_eq!(neck_profile(1.0, c, 0.0).unwrap(), 0.5 + 400.0 / 3.0, epsilon = 1e-10);
        assert!(neck_profile(1.0, 0.0, 1.5).is_err());
        assert!(neck_profile(1.0, 0.0, -0.1).is_err());
    }

    #[test]
    fn g_ball_solves_the_neumann_problem() {
        let c = Point::new(-0.3, 0.1, 0.0);
        assert_relative_eq!(g_ball(1.0, &c, &c).unwrap(), 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(g_ball(2.0, &c, &c).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(g_ball(1.0, &c, &(c + Point::new(0.0, 1.0, 0.0))).unwrap(), 0.0, epsilon = 1e-15);
        assert!(g_ball(1.0, &c, &(c + Point::new(1.1, 0.0, 0.0))).is_err());

        let h = 1e-3;
        for x in [c, c + Point::new(0.2, -0.4, 0.3), c + Point::new(0.0, 0.0, -0.7)] {
            let g = |p: Point| g_ball(1.0, &c, &p).unwrap();
            let lap: f64 = (0..3)
                .map(|i| {
                    let mut e = Point::zeros();
                    e[i] = h;
                    (g(x + e) - 2.0 * g(x) + g(x - e)) / (h * h)
                })
                .sum();
            assert!((lap + 1.0).abs() < 1e-6, "{lap}");
        }
        // ∂g/∂ν on the sphere: −R/3 = −|Ω_h|/|∂Ω_h|.
        let n = Point::new(0.6, 0.0, 0.8);
        let dg = (g_ball(1.0, &c, &(c + n)).unwrap() - g_ball(1.0, &c, &(c + n * (1.0 - h))).unwrap()) / h;
        assert!((dg + 1.0 / 3.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn exact_decomposition(eps in 0.005..0.2f64, l in 1.0..10.0f64, dist in 0.25..2.0f64) {
            let p = params(eps, l);
            let u = expansion_terms_at_distance(&p, dist).unwrap().total();
            let by_hand = leading_term(&p) + UNIT_BALL * M_UNIT_DISK / (PI * PI * eps) + p.robin.beta / p.robin.alpha
                - UNIT_BALL / (2.0 * PI * dist);
            prop_assert!((u - by_hand).abs() <= 1e-12 * u.abs());
            prop_assert!((p.robin.beta / p.robin.alpha - l * l / 2.0).abs() < 1e-12 * l * l);
        }

        #[test]
        fn decreasing_in_eps(eps in 0.005..0.2f64, step in 1e-4..0.05f64, l in 1.0..10.0f64) {
            let a = expansion_terms_at_distance(&params(eps, l), 1.0).unwrap().total();
            let b = expansion_terms_at_distance(&params(eps + step, l), 1.0).unwrap().total();
            prop_assert!(b < a);
        }

        #[test]
        fn increasing_in_neck_length(eps in 0.005..0.2f64, l in 1.0..10.0f64, step in 1e-3..2.0f64) {
            let a = expansion_terms_at_distance(&params(eps, l), 1.0).unwrap().total();
            let b = expansion_terms_at_distance(&params(eps, l + step), 1.0).unwrap().total();
            prop_assert!(b - a >= step * UNIT_BALL / (PI * eps * eps));
        }
    }
}
