//! Run configuration in flat `key = value` text with `[section]` headers.
//!
//! ```text
//! [geometry]
//! head = ball
//! radius = 1
//! eps = 0.1
//! neck_length = 1
//!
//! [walk]
//! dt = auto
//! particles = 100000
//! seed = 24301
//!
//! [output]
//! format = csv
//! path = table.csv
//! ```
//!
//! `#` starts a comment. Unknown sections and keys are rejected. Rendering a
//! config with [`RunConfig::to_text`] and parsing it back gives the same
//! config, and the rendered text is what the provenance hash covers.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{HeadKind, Point, WalkDomain};
use crate::montecarlo::{SpineTemplate, StartPoint, WalkConfig, DEFAULT_DT_MAX};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown output format `{other}` (expected csv or json)"))),
        }
    }
}

impl OutputFormat {
    fn as_str(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Walk settings before the neck radius is known. `dt = None` means
/// `(ε/10)²` for each row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkSettings {
    pub dt: Option<f64>,
    pub dt_max: Option<f64>,
    pub particles: u64,
    pub max_steps: u64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for WalkSettings {
    fn default() -> Self {
        let d = WalkConfig::for_neck(0.1);
        Self {
            dt: None,
            dt_max: None,
            particles: d.particles,
            max_steps: d.max_steps,
            seed: d.seed,
            workers: d.workers,
        }
    }
}

impl WalkSettings {
    pub fn resolve(&self, eps: f64) -> WalkConfig {
        let base = WalkConfig::for_neck(eps);
        let dt = self.dt.unwrap_or(base.dt);
        WalkConfig {
            dt,
            dt_max: self.dt_max.unwrap_or(DEFAULT_DT_MAX).max(dt),
            particles: self.particles,
            max_steps: self.max_steps,
            seed: self.seed,
            workers: self.workers,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub head: HeadKind,
    pub eps: f64,
    pub neck_len: f64,
    pub start: StartPoint,
    pub walk: WalkSettings,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            head: HeadKind::Ball { radius: 1.0 },
            eps: 0.1,
            neck_len: 1.0,
            start: StartPoint::HeadCenter,
            walk: WalkSettings::default(),
            output_format: OutputFormat::Csv,
            output_path: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_opt_f64(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

/// Parses `x,y,z`.
pub fn parse_point(value: &str) -> Result<Point> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("expected x,y,z, got `{value}`")));
    }
    let mut p = Point::zeros();
    for (i, s) in parts.iter().enumerate() {
        p[i] = parse_num("point", s)?;
    }
    Ok(p)
}

pub fn parse_start(value: &str) -> Result<StartPoint> {
    if value == "head-center" {
        Ok(StartPoint::HeadCenter)
    } else {
        parse_point(value).map(StartPoint::Point)
    }
}

fn start_text(start: &StartPoint) -> String {
    match start {
        StartPoint::HeadCenter => "head-center".into(),
        StartPoint::Point(p) => format!("{},{},{}", p.x, p.y, p.z),
    }
}

fn opt_text(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".into(), |v| v.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section: Option<String> = None;
        let mut head_tag = "ball".to_string();
        let (mut radius, mut axes) = (None, [None::<f64>; 3]);

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Config(format!("line {}: {msg}", lineno + 1));
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !matches!(name, "geometry" | "walk" | "run" | "output") {
                    return Err(at(format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| at(format!("expected key = value, got `{line}`")))?;
            let Some(sec) = section.as_deref() else {
                return Err(at(format!("key `{key}` outside of a section")));
            };
            let w = &mut cfg.walk;
            match (sec, key) {
                ("geometry", "head") => head_tag = value.to_string(),
                ("geometry", "radius") => radius = Some(parse_num(key, value)?),
                ("geometry", "a") => axes[0] = Some(parse_num(key, value)?),
                ("geometry", "b") => axes[1] = Some(parse_num(key, value)?),
                ("geometry", "c") => axes[2] = Some(parse_num(key, value)?),
                ("geometry", "eps") => cfg.eps = parse_num(key, value)?,
                ("geometry", "neck_length") => cfg.neck_len = parse_num(key, value)?,
                ("walk", "dt") => w.dt = parse_opt_f64(key, value)?,
                ("walk", "dt_max") => w.dt_max = parse_opt_f64(key, value)?,
                ("walk", "particles") => w.particles = parse_num(key, value)?,
                ("walk", "max_steps") => w.max_steps = parse_num(key, value)?,
                ("walk", "seed") => w.seed = parse_num(key, value)?,
                ("walk", "workers") => w.workers = parse_num(key, value)?,
                ("run", "start") => cfg.start = parse_start(value)?,
                ("output", "format") => cfg.output_format = value.parse()?,
                ("output", "path") => cfg.output_path = (!value.is_empty()).then(|| PathBuf::from(value)),
                _ => return Err(at(format!("unknown key `{key}` in [{sec}]"))),
            }
        }

        cfg.head = match head_tag.as_str() {
            "ball" => {
                if axes.iter().any(Option::is_some) {
                    return Err(Error::Config("a, b, c apply to ellipsoid heads only".into()));
                }
                HeadKind::Ball { radius: radius.unwrap_or(1.0) }
            }
            "ellipsoid" => match (radius, axes) {
                (None, [Some(a), Some(b), Some(c)]) => HeadKind::Ellipsoid { a, b, c },
                _ => return Err(Error::Config("ellipsoid head needs a, b and c (and no radius)".into())),
            },
            other => return Err(Error::Config(format!("unknown head shape `{other}`"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked before a run.
    pub fn validate(&self) -> Result<()> {
        let domain = self.template().build()?;
        if let StartPoint::Point(p) = self.start {
            if !domain.contains(&p) {
                return Err(Error::Config(format!("start point {:?} is outside the domain", p.as_slice())));
            }
        }
        self.walk.resolve(self.eps).validate(self.eps)
    }

    pub fn template(&self) -> SpineTemplate {
        SpineTemplate { head: self.head, eps: self.eps, neck_len: self.neck_len }
    }

    /// Canonical text form; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::from("[geometry]\n");
        match self.head {
            HeadKind::Ball { radius } => {
                let _ = writeln!(s, "head = ball\nradius = {radius}");
            }
            HeadKind::Ellipsoid { a, b, c } => {
                let _ = writeln!(s, "head = ellipsoid\na = {a}\nb = {b}\nc = {c}");
            }
        }
        let w = &self.walk;
        let _ = writeln!(s, "eps = {}\nneck_length = {}", self.eps, self.neck_len);
        let _ = writeln!(
            s,
            "\n[walk]\ndt = {}\ndt_max = {}\nparticles = {}\nmax_steps = {}\nseed = {}\nworkers = {}",
            opt_text(w.dt),
            opt_text(w.dt_max),
            w.particles,
            w.max_steps,
            w.seed,
            w.workers
        );
        let _ = writeln!(s, "\n[run]\nstart = {}", start_text(&self.start));
        let _ = write!(s, "\n[output]\nformat = {}\n", self.output_format.as_str());
        if let Some(p) = &self.output_path {
            let _ = writeln!(s, "path = {}", p.display());
        }
        s
    }

    /// `sha256:` digest of [`RunConfig::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        format!("sha256:{hex}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_a_full_config() {
        let text = "\
# spine run
[geometry]
head = ellipsoid
a = 1.2
b = 0.8
c = 0.9
eps = 0.05   # neck radius
neck_length = 2

[walk]
dt = 1e-5
particles = 5000
seed = 42
workers = 4

[run]
start = -0.5,0,0

[output]
format = json
path = out.json
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.head, HeadKind::Ellipsoid { a: 1.2, b: 0.8, c: 0.9 });
        assert_eq!(cfg.eps, 0.05);
        assert_eq!(cfg.walk.dt, Some(1e-5));
        assert_eq!(cfg.walk.dt_max, None);
        assert_eq!(cfg.walk.workers, 4);
        assert_eq!(cfg.start, StartPoint::Point(Point::new(-0.5, 0.0, 0.0)));
        assert_eq!(cfg.output_format, OutputFormat::Json);
        assert_eq!(cfg.output_path, Some(PathBuf::from("out.json")));
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        assert!(RunConfig::parse("[geometry]\ncolour = red\n").is_err());
        assert!(RunConfig::parse("[physics]\n").is_err());
        assert!(RunConfig::parse("eps = 0.1\n").is_err());
        assert!(RunConfig::parse("[geometry]\neps\n").is_err());
        assert!(RunConfig::parse("[geometry]\nhead = ball\na = 1\n").is_err());
        assert!(RunConfig::parse("[geometry]\nhead = cube\n").is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(RunConfig::parse("[geometry]\neps = 2\nneck_length = 3\n").is_err());
        assert!(RunConfig::parse("[walk]\ndt = 0.1\n").is_err());
        assert!(RunConfig::parse("[walk]\nparticles = many\n").is_err());
        assert!(RunConfig::parse("[run]\nstart = 5,5,5\n").is_err());
        assert!(RunConfig::parse("[output]\nformat = xml\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.walk.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), RunConfig::parse(&a.to_text()).unwrap().hash());
        assert!(a.hash().starts_with("sha256:") && a.hash().len() == 7 + 64);
    }

    proptest! {
        #[test]
        fn text_round_trip(
            eps in 0.01..0.2f64,
            len in 0.5..5.0f64,
            seed in any::<u64>(),
            particles in 1..1_000_000u64,
            dt_frac in proptest::option::of(0.01..0.2f64),
            start in proptest::option::of((-1.5..-0.5f64, -0.3..0.3f64)),
        ) {
            let cfg = RunConfig {
                eps,
                neck_len: len.max(eps * 2.0),
                start: start.map_or(StartPoint::HeadCenter, |(x, y)| StartPoint::Point(Point::new(x, y, 0.0))),
                walk: WalkSettings {
                    dt: dt_frac.map(|f| (f * eps).powi(2)),
                    seed,
                    particles,
                    ..WalkSettings::default()
                },
                ..RunConfig::default()
            };
            prop_assume!(cfg.validate().is_ok());
            prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }
    }
}
