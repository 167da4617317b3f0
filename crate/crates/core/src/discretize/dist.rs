use statrs::distribution::{Binomial, Discrete};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("Uniform needs lo < hi, got lo={lo}, hi={hi}")]
    UniformBounds { lo: f64, hi: f64 },
    #[error("variance must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("TNormal needs lo < hi, got lo={lo}, hi={hi}")]
    TruncationBounds { lo: f64, hi: f64 },
    #[error("Gamma needs shape > 0 and scale > 0, got shape={shape}, scale={scale}")]
    GammaParameters { shape: f64, scale: f64 },
    #[error("Binomial trials must be a non-negative integer, got {0}")]
    Trials(f64),
    #[error("Binomial probability must lie in [0, 1], got {0}")]
    Probability(f64),
    #[error("non-finite distribution parameter")]
    NonFinite,
    #[error("at least 2 bins are required, got {0}")]
    Bins(usize),
    #[error("no probability mass falls inside the domain [{lower}, {upper}]")]
    EmptyOverlap { lower: f64, upper: f64 },
}

/// A resolved distribution: family plus concrete parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionSpec {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, variance: f64 },
    TNormal { mean: f64, variance: f64, lo: f64, hi: f64 },
    /// Mean `shape * scale`.
    Gamma { shape: f64, scale: f64 },
    Binomial { trials: u64, p: f64 },
    Point(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Interval(f64, f64),
    Finite(Vec<f64>),
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn phi(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        INV_SQRT_2PI * (-0.5 * z * z).exp()
    }
}

fn big_phi(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn std_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// P(alpha < Z <= beta) for a standard normal, using the tail that keeps precision.
fn std_mass(alpha: f64, beta: f64) -> f64 {
    if beta <= alpha {
        0.0
    } else if alpha >= 0.0 {
        std_sf(alpha) - std_sf(beta)
    } else {
        big_phi(beta) - big_phi(alpha)
    }
}

fn check_finite(values: &[f64]) -> Result<(), DistributionError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DistributionError::NonFinite)
    }
}

impl DistributionSpec {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistributionError> {
        check_finite(&[lo, hi])?;
        if lo >= hi {
            return Err(DistributionError::UniformBounds { lo, hi });
        }
        Ok(DistributionSpec::Uniform { lo, hi })
    }

    pub fn normal(mean: f64, variance: f64) -> Result<Self, DistributionError> {
        check_finite(&[mean, variance])?;
        if variance < 0.0 {
            return Err(DistributionError::NegativeVariance(variance));
        }
        Ok(DistributionSpec::Normal { mean, variance })
    }

    pub fn tnormal(mean: f64, variance: f64, lo: f64, hi: f64) -> Result<Self, DistributionError> {
        check_finite(&[mean, variance])?;
        if variance < 0.0 {
            return Err(DistributionError::NegativeVariance(variance));
        }
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(DistributionError::TruncationBounds { lo, hi });
        }
        Ok(DistributionSpec::TNormal { mean, variance, lo, hi })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self, DistributionError> {
        check_finite(&[shape, scale])?;
        if shape <= 0.0 || scale <= 0.0 {
            return Err(DistributionError::GammaParameters { shape, scale });
        }
        Ok(DistributionSpec::Gamma { shape, scale })
    }

    pub fn binomial(trials: f64, p: f64) -> Result<Self, DistributionError> {
        check_finite(&[trials, p])?;
        let n = trials.round();
        if trials < 0.0 || (trials - n).abs() > 1e-9 {
            return Err(DistributionError::Trials(trials));
        }
        if !(-1e-12..=1.0 + 1e-12).contains(&p) {
            return Err(DistributionError::Probability(p));
        }
        Ok(DistributionSpec::Binomial {
            trials: n as u64,
            p: p.clamp(0.0, 1.0),
        })
    }

    pub fn point(value: f64) -> Result<Self, DistributionError> {
        check_finite(&[value])?;
        Ok(DistributionSpec::Point(value))
    }

    pub fn family(&self) -> &'static str {
        match self {
            DistributionSpec::Uniform { .. } => "uniform",
            DistributionSpec::Normal { .. } => "normal",
            DistributionSpec::TNormal { .. } => "tnormal",
            DistributionSpec::Gamma { .. } => "gamma",
            DistributionSpec::Binomial { .. } => "binomial",
            DistributionSpec::Point(_) => "point",
        }
    }

    /// Degenerate cases collapse to a point mass.
    fn degenerate(&self) -> Option<f64> {
        match *self {
            DistributionSpec::Point(v) => Some(v),
            DistributionSpec::Normal { mean, variance } if variance == 0.0 => Some(mean),
            DistributionSpec::TNormal { mean, variance, lo, hi } => {
                if variance == 0.0 {
                    return Some(mean.clamp(lo, hi));
                }
                let sd = variance.sqrt();
                if std_mass((lo - mean) / sd, (hi - mean) / sd) <= 1e-300 {
                    Some(mean.clamp(lo, hi))
                } else {
                    None
                }
            }
            DistributionSpec::Binomial { trials, p } if trials == 0 || p == 0.0 => Some(0.0),
            DistributionSpec::Binomial { trials, p } if p == 1.0 => Some(trials as f64),
            _ => None,
        }
    }

    pub fn support(&self) -> Support {
        if let Some(v) = self.degenerate() {
            return Support::Finite(vec![v]);
        }
        match *self {
            DistributionSpec::Uniform { lo, hi } => Support::Interval(lo, hi),
            DistributionSpec::Normal { .. } => Support::Interval(f64::NEG_INFINITY, f64::INFINITY),
            DistributionSpec::TNormal { lo, hi, .. } => Support::Interval(lo, hi),
            DistributionSpec::Gamma { .. } => Support::Interval(0.0, f64::INFINITY),
            DistributionSpec::Binomial { trials, .. } => {
                Support::Finite((0..=trials).map(|k| k as f64).collect())
            }
            DistributionSpec::Point(v) => Support::Finite(vec![v]),
        }
    }

    /// Point masses, or `None` for continuous families.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        if let Some(v) = self.degenerate() {
            return Some(vec![(v, 1.0)]);
        }
        match *self {
            DistributionSpec::Binomial { trials, p } => {
                let b = Binomial::new(p, trials).expect("validated binomial");
                Some((0..=trials).map(|k| (k as f64, b.pmf(k))).collect())
            }
            _ => None,
        }
    }

    /// P(X <= x).
    pub fn cdf(&self, x: f64) -> f64 {
        self.mass(f64::NEG_INFINITY, x)
    }

    /// P(a < X <= b).
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        if let Some(atoms) = self.atoms() {
            return atoms
                .iter()
                .filter(|(x, _)| a < *x && *x <= b)
                .map(|(_, w)| w)
                .sum();
        }
        match *self {
            DistributionSpec::Uniform { lo, hi } => {
                let (a, b) = (a.max(lo), b.min(hi));
                if b <= a {
                    0.0
                } else {
                    (b - a) / (hi - lo)
                }
            }
            DistributionSpec::Normal { mean, variance } => {
                let sd = variance.sqrt();
                std_mass((a - mean) / sd, (b - mean) / sd)
            }
            DistributionSpec::TNormal { mean, variance, lo, hi } => {
                let sd = variance.sqrt();
                let z = std_mass((lo - mean) / sd, (hi - mean) / sd);
                let (a, b) = (a.max(lo), b.min(hi));
                (std_mass((a - mean) / sd, (b - mean) / sd) / z).min(1.0)
            }
            DistributionSpec::Gamma { shape, scale } => gamma_mass(shape, a / scale, b / scale),
            _ => unreachable!("atomic families handled above"),
        }
    }

    /// E[X; a < X <= b].
    pub fn partial_expectation(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        if let Some(atoms) = self.atoms() {
            return atoms
                .iter()
                .filter(|(x, _)| a < *x && *x <= b)
                .map(|(x, w)| x * w)
                .sum();
        }
        match *self {
            DistributionSpec::Uniform { lo, hi } => {
                let (a, b) = (a.max(lo), b.min(hi));
                if b <= a {
                    0.0
                } else {
                    (b * b - a * a) / (2.0 * (hi - lo))
                }
            }
            DistributionSpec::Normal { mean, variance } => {
                let sd = variance.sqrt();
                let (al, be) = ((a - mean) / sd, (b - mean) / sd);
                mean * std_mass(al, be) + sd * (phi(al) - phi(be))
            }
            DistributionSpec::TNormal { mean, variance, lo, hi } => {
                let sd = variance.sqrt();
                let z = std_mass((lo - mean) / sd, (hi - mean) / sd);
                let (a, b) = (a.max(lo), b.min(hi));
                if b <= a {
                    return 0.0;
                }
                let (al, be) = ((a - mean) / sd, (b - mean) / sd);
                (mean * std_mass(al, be) + sd * (phi(al) - phi(be))) / z
            }
            DistributionSpec::Gamma { shape, scale } => {
                shape * scale * gamma_mass(shape + 1.0, a / scale, b / scale)
            }
            _ => unreachable!("atomic families handled above"),
        }
    }

    pub fn mean(&self) -> f64 {
        self.partial_expectation(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn variance(&self) -> f64 {
        if let Some(atoms) = self.atoms() {
            let m = self.mean();
            return atoms.iter().map(|(x, w)| w * (x - m) * (x - m)).sum();
        }
        match *self {
            DistributionSpec::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            DistributionSpec::Normal { variance, .. } => variance,
            DistributionSpec::TNormal { mean, variance, lo, hi } => {
                let sd = variance.sqrt();
                let (al, be) = ((lo - mean) / sd, (hi - mean) / sd);
                let z = std_mass(al, be);
                let t = |x: f64| if x.is_infinite() { 0.0 } else { x * phi(x) };
                let d = (phi(al) - phi(be)) / z;
                variance * (1.0 + (t(al) - t(be)) / z - d * d)
            }
            DistributionSpec::Gamma { shape, scale } => shape * scale * scale,
            _ => unreachable!("atomic families handled above"),
        }
    }

    /// A finite range holding all but a negligible fraction of the mass.
    pub fn bracket(&self) -> (f64, f64) {
        if let Some(v) = self.degenerate() {
            return (v, v);
        }
        match *self {
            DistributionSpec::Uniform { lo, hi } => (lo, hi),
            DistributionSpec::Normal { mean, variance } => {
                let sd = variance.sqrt();
                (mean - 12.0 * sd, mean + 12.0 * sd)
            }
            DistributionSpec::TNormal { mean, variance, lo, hi } => {
                let sd = variance.sqrt();
                let (a, b) = (lo.max(mean - 12.0 * sd), hi.min(mean + 12.0 * sd));
                if a < b {
                    (a, b)
                } else if mean < lo {
                    (lo, hi.min(lo + 12.0 * sd))
                } else {
                    (lo.max(hi - 12.0 * sd), hi)
                }
            }
            DistributionSpec::Gamma { shape, scale } => {
                (0.0, scale * (shape + 15.0 * shape.sqrt() + 40.0))
            }
            DistributionSpec::Binomial { trials, .. } => (0.0, trials as f64),
            DistributionSpec::Point(v) => (v, v),
        }
    }
}

/// P(a < X <= b) for a unit-scale gamma with the given shape.
fn gamma_mass(shape: f64, a: f64, b: f64) -> f64 {
    let a = a.max(0.0);
    if b <= a {
        return 0.0;
    }
    let lower = |x: f64| {
        if x.is_infinite() {
            1.0
        } else if x <= 0.0 {
            0.0
        } else {
            gamma_lr(shape, x)
        }
    };
    let upper = |x: f64| {
        if x.is_infinite() {
            0.0
        } else if x == 0.0 {
            1.0
        } else {
            gamma_ur(shape, x)
        }
    };
    if a > shape {
        (upper(a) - upper(b)).max(0.0)
    } else {
        (lower(b) - lower(a)).max(0.0)
    }
}
