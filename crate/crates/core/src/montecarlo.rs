//! Mean first passage time by simulating reflected Brownian motion.
//!
//! With generator `Δ` (increments of variance `2 dt` per axis), the expected
//! absorption time from `x` is the solution of `Δu = −1` with `u = 0` on the
//! absorbing boundary and `∂u/∂ν = 0` on the reflecting part, evaluated at
//! `x`. Each walk takes Gaussian steps, hands every step to the domain for
//! reflection or absorption, and records the accumulated time.
//!
//! Step sizes adapt to position. Away from the boundary a Gaussian step of
//! any size is an exact sample of Brownian motion, so the time step only has
//! to be small where a step can interact with the boundary features that
//! matter. The walker uses `σ = clamp(d / STEP_SAFETY, √(2 dt), √(2 dt_max))`
//! where `d` is [`WalkDomain::resolution_distance`]; `dt_max = dt` gives the
//! plain fixed-step scheme.
//!
//! When both ends of a step sit near an absorbing surface, the walk is also
//! absorbed with the Brownian-bridge crossing probability
//! `exp(−g₀ g₁ / dt)` (`g` the distance to that surface), which removes the
//! leading discrete-monitoring bias.
//!
//! Runs are deterministic in `(seed, workers)`: particles are split into
//! `workers` contiguous blocks and block `w` draws from ChaCha8 stream `w`
//! of `seed`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{eval_u_eps, AsymptoticParams};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryClassification, HeadKind, Point, SpineDomain, WalkDomain};

/// Ratio of resolution distance to step scale in the adaptive rule.
pub const STEP_SAFETY: f64 = 4.0;

/// Largest bulk step used by [`WalkConfig::for_neck`]: `σ = 0.1`.
pub const DEFAULT_DT_MAX: f64 = 5e-3;

/// Censored fraction above which a result is flagged.
pub const CENSOR_FLAG_FRACTION: f64 = 1e-3;
/// Censored fraction above which a result is invalid.
pub const CENSOR_INVALID_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Fine time step, used next to absorbing boundaries and in the neck.
    pub dt: f64,
    /// Coarsest time step, used far from them.
    pub dt_max: f64,
    pub particles: u64,
    /// Steps after which a walk is abandoned as censored.
    pub max_steps: u64,
    pub seed: u64,
    pub workers: usize,
}

impl WalkConfig {
    /// Defaults for a neck of radius `eps`: `dt = (ε/10)²`, bulk steps up to
    /// [`DEFAULT_DT_MAX`], 10⁵ particles.
    pub fn for_neck(eps: f64) -> Self {
        let dt = (eps / 10.0).powi(2);
        Self { dt, dt_max: DEFAULT_DT_MAX.max(dt), particles: 100_000, max_steps: 1 << 36, seed: 0x5eed, workers: 8 }
    }

    /// Fixed-step configuration.
    pub fn fixed(dt: f64, particles: u64, seed: u64) -> Self {
        Self { dt, dt_max: dt, particles, max_steps: 1 << 36, seed, workers: 8 }
    }

    pub fn validate(&self, feature_size: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.dt_max >= self.dt && self.dt_max.is_finite()) {
            return Err(Error::Config(format!("dt_max = {} must be at least dt = {}", self.dt_max, self.dt)));
        }
        if (2.0 * self.dt).sqrt() >= feature_size / 2.0 {
            return Err(Error::Config(format!(
                "step √(2 dt) = {:.3e} does not resolve the feature size {feature_size}",
                (2.0 * self.dt).sqrt()
            )));
        }
        if self.particles == 0 || self.workers == 0 || self.max_steps == 0 {
            return Err(Error::Config("particles, workers and max_steps must be at least 1".into()));
        }
        Ok(())
    }

    fn fine_sigma(&self) -> f64 {
        (2.0 * self.dt).sqrt()
    }

    fn coarse_sigma(&self) -> f64 {
        (2.0 * self.dt_max).sqrt()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultStatus {
    #[default]
    Accepted,
    /// More than 0.1% of walks censored.
    Flagged,
    /// More than 10% of walks censored.
    Invalid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstPassageResult {
    pub mean: f64,
    /// Sample standard deviation over `√absorbed`.
    pub stderr: f64,
    pub absorbed: u64,
    pub censored: u64,
    pub total_steps: u64,
    pub status: ResultStatus,
}

/// Welford accumulator for one worker's block.
#[derive(Clone, Copy, Debug, Default)]
struct PassageStats {
    count: u64,
    mean: f64,
    m2: f64,
    censored: u64,
    steps: u64,
}

impl PassageStats {
    fn push(&mut self, t: f64) {
        self.count += 1;
        let delta = t - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (t - self.mean);
    }

    fn merge(&mut self, other: &PassageStats) {
        let n = self.count + other.count;
        if n > 0 {
            let delta = other.mean - self.mean;
            let (na, nb) = (self.count as f64, other.count as f64);
            self.mean += delta * nb / n as f64;
            self.m2 += other.m2 + delta * delta * na * nb / n as f64;
        }
        self.count = n;
        self.censored += other.censored;
        self.steps += other.steps;
    }
}

enum WalkOutcome {
    Absorbed { time: f64, steps: u64 },
    Censored { steps: u64 },
}

fn walk_once<D, R>(domain: &D, start: &Point, cfg: &WalkConfig, rng: &mut R) -> Result<WalkOutcome>
where
    D: WalkDomain + ?Sized,
    R: Rng,
{
    let (fine, coarse) = (cfg.fine_sigma(), cfg.coarse_sigma());
    let mut x = *start;
    let mut time = 0.0;
    for step in 1..=cfg.max_steps {
        let sigma = (domain.resolution_distance(&x) / STEP_SAFETY).clamp(fine, coarse);
        let dt = 0.5 * sigma * sigma;
        let xi = Point::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let (class, next) = domain.classify_step(&x, &(x + sigma * xi))?;
        time += dt;
        if class == BoundaryClassification::Absorbing {
            return Ok(WalkOutcome::Absorbed { time, steps: step });
        }
        if let (Some(g0), Some(g1)) = (domain.absorbing_gap(&x), domain.absorbing_gap(&next)) {
            let p = (-g0 * g1 / dt).exp();
            if p > 1e-12 && rng.random::<f64>() < p {
                return Ok(WalkOutcome::Absorbed { time, steps: step });
            }
        }
        x = next;
    }
    Ok(WalkOutcome::Censored { steps: cfg.max_steps })
}

fn block_range(particles: u64, workers: usize, w: usize) -> std::ops::Range<u64> {
    let workers = workers as u64;
    let w = w as u64;
    (particles * w / workers)..(particles * (w + 1) / workers)
}

/// Mean exit time from `start`, estimated with `cfg.particles` walks.
pub fn simulate_mfpt<D>(domain: &D, start: &Point, cfg: &WalkConfig) -> Result<FirstPassageResult>
where
    D: WalkDomain + ?Sized,
{
    cfg.validate(domain.feature_size())?;
    if !domain.contains(start) {
        return Err(Error::Domain(format!("start point {:?} is not interior", start.as_slice())));
    }

    let blocks: Vec<Result<PassageStats>> = (0..cfg.workers)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(w as u64);
            let mut stats = PassageStats::default();
            for _ in block_range(cfg.particles, cfg.workers, w) {
                match walk_once(domain, start, cfg, &mut rng)? {
                    WalkOutcome::Absorbed { time, steps } => {
                        stats.push(time);
                        stats.steps += steps;
                    }
                    WalkOutcome::Censored { steps } => {
                        stats.censored += 1;
                        stats.steps += steps;
                    }
                }
            }
            Ok(stats)
        })
        .collect();

    let mut total = PassageStats::default();
    for block in blocks {
        total.merge(&block?);
    }

    let censored_fraction = total.censored as f64 / cfg.particles as f64;
    let status = if censored_fraction > CENSOR_INVALID_FRACTION || total.count == 0 {
        ResultStatus::Invalid
    } else if censored_fraction > CENSOR_FLAG_FRACTION {
        ResultStatus::Flagged
    } else {
        ResultStatus::Accepted
    };
    let stderr = if total.count > 1 {
        (total.m2 / (total.count - 1) as f64).sqrt() / (total.count as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(FirstPassageResult {
        mean: if total.count > 0 { total.mean } else { f64::NAN },
        stderr,
        absorbed: total.count,
        censored: total.censored,
        total_steps: total.steps,
        status,
    })
}

/// Geometry shared by every row of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpineTemplate {
    pub head: HeadKind,
    pub eps: f64,
    pub neck_len: f64,
}

impl SpineTemplate {
    pub fn unit_ball(eps: f64, neck_len: f64) -> Self {
        Self { head: HeadKind::Ball { radius: 1.0 }, eps, neck_len }
    }

    pub fn build(&self) -> Result<SpineDomain> {
        SpineDomain::new(self.head, self.eps, self.neck_len)
    }
}

/// Parameter varied across a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Eps(Vec<f64>),
    NeckLength(Vec<f64>),
}

impl SweepAxis {
    pub fn values(&self) -> &[f64] {
        match self {
            SweepAxis::Eps(v) | SweepAxis::NeckLength(v) => v,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Eps(_) => "eps",
            SweepAxis::NeckLength(_) => "L",
        }
    }

    fn apply(&self, template: &SpineTemplate, value: f64) -> SpineTemplate {
        let mut t = *template;
        match self {
            SweepAxis::Eps(_) => t.eps = value,
            SweepAxis::NeckLength(_) => t.neck_len = value,
        }
        t
    }
}

/// Start of the walks in each row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPoint {
    /// The head center of each row's domain.
    HeadCenter,
    Point(Point),
}

impl StartPoint {
    pub fn resolve(&self, domain: &SpineDomain) -> Point {
        match *self {
            StartPoint::HeadCenter => domain.head_center(),
            StartPoint::Point(p) => p,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    #[default]
    Ok,
    Flagged,
    Invalid,
}

/// One row of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub param: f64,
    pub u_mc: Option<f64>,
    pub u_mc_stderr: Option<f64>,
    pub u_asym: Option<f64>,
    /// `(u_asym − u_mc)/u_mc`.
    pub rel_err: Option<f64>,
    pub status: RowStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl SweepRecord {
    fn invalid(param: f64, err: &Error) -> Self {
        Self {
            param,
            u_mc: None,
            u_mc_stderr: None,
            u_asym: None,
            rel_err: None,
            status: RowStatus::Invalid,
            note: Some(err.to_string()),
        }
    }
}

/// How each row's walks are configured; `None` skips simulation.
pub type WalkPlan<'a> = dyn Fn(&SpineDomain) -> Option<WalkConfig> + Sync + 'a;

/// Runs the simulation and the expansion for every value on `axis`.
pub fn sweep(
    template: &SpineTemplate,
    axis: &SweepAxis,
    start: StartPoint,
    plan: &WalkPlan<'_>,
) -> Result<Vec<SweepRecord>> {
    let values = axis.values();
    if values.is_empty() {
        return Err(Error::Domain("sweep needs at least one parameter value".into()));
    }
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("sweep values must be positive, got {bad}")));
    }
    Ok(values.iter().map(|&value| sweep_row(&axis.apply(template, value), value, start, plan)).collect())
}

fn sweep_row(template: &SpineTemplate, param: f64, start: StartPoint, plan: &WalkPlan<'_>) -> SweepRecord {
    let row = || -> Result<SweepRecord> {
        let domain = template.build()?;
        let x = start.resolve(&domain);
        let u_asym = eval_u_eps(&AsymptoticParams::for_domain(&domain)?, &x)?;
        let mut record = SweepRecord {
            param,
            u_mc: None,
            u_mc_stderr: None,
            u_asym: Some(u_asym),
            rel_err: None,
            status: RowStatus::Ok,
            note: None,
        };
        if let Some(cfg) = plan(&domain) {
            let mc = simulate_mfpt(&domain, &x, &cfg)?;
            record.u_mc = Some(mc.mean);
            record.u_mc_stderr = Some(mc.stderr);
            record.rel_err = Some((u_asym - mc.mean) / mc.mean);
            record.status = match mc.status {
                ResultStatus::Accepted => RowStatus::Ok,
                ResultStatus::Flagged => RowStatus::Flagged,
                ResultStatus::Invalid => RowStatus::Invalid,
            };
            if mc.censored > 0 {
                record.note = Some(format!("{} of {} walks censored", mc.censored, cfg.particles));
            }
        }
        Ok(record)
    };
    row().unwrap_or_else(|e| SweepRecord::invalid(param, &e))
}
