//! Input streams for univariate shift experiments: parametric distributions
//! and instant / gradual / recurring shift schedules.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricsError, WindowedHistogram};
use crate::qtree::{TreeError, Xenovert, XenovertConfig};

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("invalid distribution: {0}")]
    InvalidDist(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("step {t} outside horizon {horizon}")]
    StepOutOfRange { t: usize, horizon: usize },
    #[error("cannot parse distribution {0:?} (expected e.g. normal:2,4 / uniform:0,1 / chi2:3 / multimodal:-3,1,0.5;3,1,0.5)")]
    Parse(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One mixture component: mean, standard deviation, weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: f64,
    pub sd: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistSpec {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Weights are normalized on construction.
    MultimodalNormal {
        components: Vec<Component>,
    },
    ChiSquared {
        k: f64,
    },
}

impl DistSpec {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistError> {
        let d = Self::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self, DistError> {
        let d = Self::Normal { mean, sd };
        d.validate()?;
        Ok(d)
    }

    pub fn chi_squared(k: f64) -> Result<Self, DistError> {
        let d = Self::ChiSquared { k };
        d.validate()?;
        Ok(d)
    }

    pub fn multimodal(components: &[(f64, f64, f64)]) -> Result<Self, DistError> {
        let total: f64 = components.iter().map(|c| c.2).sum();
        let d = Self::MultimodalNormal {
            components: components
                .iter()
                .map(|&(mean, sd, weight)| Component {
                    mean,
                    sd,
                    weight: weight / total,
                })
                .collect(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DistError> {
        let bad = |msg: String| Err(DistError::InvalidDist(msg));
        match self {
            Self::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                    return bad(format!("uniform needs finite lo < hi, got ({lo}, {hi})"));
                }
            }
            Self::Normal { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite() && *sd > 0.0) {
                    return bad(format!("normal needs finite mean and sd > 0, got ({mean}, {sd})"));
                }
            }
            Self::MultimodalNormal { components } => {
                if components.is_empty() {
                    return bad("multimodal needs at least one component".into());
                }
                for c in components {
                    if !(c.mean.is_finite() && c.sd.is_finite() && c.sd > 0.0) {
                        return bad(format!("component needs finite mean and sd > 0: {c:?}"));
                    }
                    if !(c.weight.is_finite() && c.weight > 0.0) {
                        return bad(format!("component weight must be positive: {c:?}"));
                    }
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("component weights sum to {total}, not 1"));
                }
            }
            Self::ChiSquared { k } => {
                if !(k.is_finite() && *k >= 1.0) {
                    return bad(format!("chi-squared needs k >= 1, got {k}"));
                }
            }
        }
        Ok(())
    }

    /// One draw. The spec must be valid.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Uniform { lo, hi } => Uniform::new(*lo, *hi).expect("validated").sample(rng),
            Self::Normal { mean, sd } => Normal::new(*mean, *sd).expect("validated").sample(rng),
            Self::MultimodalNormal { components } => {
                let mut u: f64 = rng.random();
                let mut chosen = &components[components.len() - 1];
                for c in components {
                    if u < c.weight {
                        chosen = c;
                        break;
                    }
                    u -= c.weight;
                }
                Normal::new(chosen.mean, chosen.sd).expect("validated").sample(rng)
            }
            Self::ChiSquared { k } => ChiSquared::new(*k).expect("validated").sample(rng),
        }
    }

    /// Linear blend of two same-family location/scale specs at weight `w` on
    /// `other`. `None` when the families differ or have no parametric blend.
    fn interpolate(&self, other: &Self, w: f64) -> Option<Self> {
        let lerp = |a: f64, b: f64| a + (b - a) * w;
        match (self, other) {
            (Self::Normal { mean: m0, sd: s0 }, Self::Normal { mean: m1, sd: s1 }) => Some(Self::Normal {
                mean: lerp(*m0, *m1),
                sd: lerp(*s0, *s1),
            }),
            (Self::Uniform { lo: l0, hi: h0 }, Self::Uniform { lo: l1, hi: h1 }) => Some(Self::Uniform {
                lo: lerp(*l0, *l1),
                hi: lerp(*h0, *h1),
            }),
            _ => None,
        }
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            Self::Normal { mean, sd } => write!(f, "normal:{mean},{sd}"),
            Self::ChiSquared { k } => write!(f, "chi2:{k}"),
            Self::MultimodalNormal { components } => {
                write!(f, "multimodal:")?;
                for (i, c) in components.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{},{},{}", c.mean, c.sd, c.weight)?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for DistSpec {
    type Err = DistError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = || DistError::Parse(s.to_string());
        let (kind, params) = s.split_once(':').ok_or_else(parse_err)?;
        let numbers = |text: &str| -> Result<Vec<f64>, DistError> {
            text.split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|_| parse_err()))
                .collect()
        };
        match kind.trim().to_ascii_lowercase().as_str() {
            "uniform" => match numbers(params)?.as_slice() {
                [lo, hi] => Self::uniform(*lo, *hi),
                _ => Err(parse_err()),
            },
            "normal" => match numbers(params)?.as_slice() {
                [mean, sd] => Self::normal(*mean, *sd),
                _ => Err(parse_err()),
            },
            "chi2" | "chi_squared" | "chisquared" => match numbers(params)?.as_slice() {
                [k] => Self::chi_squared(*k),
                _ => Err(parse_err()),
            },
            "multimodal" => {
                let mut components = Vec::new();
                for part in params.split(';') {
                    match numbers(part)?.as_slice() {
                        [mean, sd, weight] => components.push((*mean, *sd, *weight)),
                        _ => return Err(parse_err()),
                    }
                }
                Self::multimodal(&components)
            }
            _ => Err(parse_err()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShiftKind {
    /// Source strictly before `t_shift`, target from `t_shift` on.
    Instant { t_shift: usize },
    /// Source before `t_start`, target from `t_end`, blended in between.
    Gradual { t_start: usize, t_end: usize },
    /// Target during the last `duty` fraction of every period.
    Recurring { period: usize, duty: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSchedule {
    pub kind: ShiftKind,
    pub source: DistSpec,
    pub target: DistSpec,
    pub horizon: usize,
}

impl ShiftSchedule {
    pub fn new(kind: ShiftKind, source: DistSpec, target: DistSpec, horizon: usize) -> Result<Self, DistError> {
        let s = Self {
            kind,
            source,
            target,
            horizon,
        };
        s.validate()?;
        Ok(s)
    }

    /// `phase` draws from source then `phase` from target.
    pub fn instant(source: DistSpec, target: DistSpec, phase: usize) -> Result<Self, DistError> {
        Self::new(ShiftKind::Instant { t_shift: phase }, source, target, 2 * phase)
    }

    /// `phase` source draws, a `phase`-long ramp, then `phase` target draws.
    pub fn gradual(source: DistSpec, target: DistSpec, phase: usize) -> Result<Self, DistError> {
        Self::new(
            ShiftKind::Gradual {
                t_start: phase,
                t_end: 2 * phase,
            },
            source,
            target,
            3 * phase,
        )
    }

    /// Two full cycles of `phase` source draws followed by `phase` target draws.
    pub fn recurring(source: DistSpec, target: DistSpec, phase: usize) -> Result<Self, DistError> {
        Self::new(
            ShiftKind::Recurring {
                period: 2 * phase,
                duty: 0.5,
            },
            source,
            target,
            4 * phase,
        )
    }

    pub fn validate(&self) -> Result<(), DistError> {
        self.source.validate()?;
        self.target.validate()?;
        let bad = |msg: String| Err(DistError::InvalidSchedule(msg));
        if self.horizon == 0 {
            return bad("horizon must be > 0".into());
        }
        match self.kind {
            ShiftKind::Instant { t_shift } => {
                if !(0 < t_shift && t_shift < self.horizon) {
                    return bad(format!("need 0 < t_shift < {}, got {t_shift}", self.horizon));
                }
            }
            ShiftKind::Gradual { t_start, t_end } => {
                if !(t_start < t_end && t_end <= self.horizon) {
                    return bad(format!(
                        "need t_start < t_end <= {}, got {t_start}..{t_end}",
                        self.horizon
                    ));
                }
            }
            ShiftKind::Recurring { period, duty } => {
                if period == 0 || !(duty > 0.0 && duty < 1.0) {
                    return bad(format!("need period > 0 and duty in (0, 1), got {period}, {duty}"));
                }
            }
        }
        Ok(())
    }

    /// Weight on the target distribution at step `t`, in `[0, 1]`.
    pub fn target_weight(&self, t: usize) -> f64 {
        match self.kind {
            ShiftKind::Instant { t_shift } => f64::from(u8::from(t >= t_shift)),
            ShiftKind::Gradual { t_start, t_end } => {
                if t < t_start {
                    0.0
                } else if t >= t_end {
                    1.0
                } else {
                    (t - t_start) as f64 / (t_end - t_start) as f64
                }
            }
            ShiftKind::Recurring { period, duty } => {
                let phase = (t % period) as f64 / period as f64;
                f64::from(u8::from(phase >= 1.0 - duty))
            }
        }
    }

    pub fn draw_at<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Result<f64, DistError> {
        if t >= self.horizon {
            return Err(DistError::StepOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let w = self.target_weight(t);
        let x = if w == 0.0 {
            self.source.sample(rng)
        } else if w == 1.0 {
            self.target.sample(rng)
        } else if let Some(blend) = self.source.interpolate(&self.target, w) {
            blend.sample(rng)
        } else if rng.random::<f64>() < w {
            self.target.sample(rng)
        } else {
            self.source.sample(rng)
        };
        Ok(x)
    }
}

/// One recorded point of a univariate run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// Number of steps processed so far.
    pub t: usize,
    pub hi_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    /// Mean HI over the points recorded in `(t_from, t_to]`.
    pub fn mean_between(&self, t_from: usize, t_to: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.t > t_from && p.t <= t_to)
            .map(|p| p.hi_score)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Mean HI over the final `fraction` of the run.
    pub fn plateau(&self, fraction: f64) -> Option<f64> {
        let end = self.points.last()?.t;
        let from = end - ((end as f64) * fraction).round() as usize;
        self.mean_between(from, end)
    }

    /// CSV body with columns `t,hi_score`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,hi_score\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.t, p.hi_score));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub hi_window: usize,
    pub record_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hi_window: crate::metrics::DEFAULT_HI_WINDOW,
            record_every: 1_000,
        }
    }
}

/// Streams `schedule.horizon` draws through one fresh tree (update, then
/// convert each draw) and records the windowed HI score every
/// `record_every` steps.
pub fn run_univariate(
    schedule: &ShiftSchedule,
    config: XenovertConfig,
    run: RunConfig,
    seed: u64,
) -> Result<Trajectory, DistError> {
    schedule.validate()?;
    if run.record_every == 0 {
        return Err(DistError::InvalidSchedule("record_every must be > 0".into()));
    }
    let mut tree = Xenovert::grow(config)?;
    let mut window = WindowedHistogram::new(tree.interval_count(), run.hi_window)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(schedule.horizon / run.record_every);
    for t in 0..schedule.horizon {
        let x = schedule.draw_at(t, &mut rng)?;
        let out = tree.update_convert(x)?;
        window.push(out)?;
        if (t + 1) % run.record_every == 0 {
            points.push(TrajectoryPoint {
                t: t + 1,
                hi_score: window.hi_score()?,
            });
        }
    }
    Ok(Trajectory { seed, points })
}
