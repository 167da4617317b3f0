use serde::{Deserialize, Serialize};

use super::{DistributionError, DistributionSpec};
use crate::model::ContinuousDomain;

/// How interval representatives are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentativeRule {
    Midpoint,
    #[default]
    ConditionalMean,
}

/// Interval partition of a continuous domain.
///
/// Interval `i` is `(cuts[i-1], cuts[i]]`; the first interval is open to
/// `-inf` and the last to `+inf`, so mass outside the domain lands in the
/// boundary intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub cuts: Vec<f64>,
    pub representatives: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 { f64::NEG_INFINITY } else { self.cuts[i - 1] };
        let hi = if i == self.cuts.len() { f64::INFINITY } else { self.cuts[i] };
        (lo, hi)
    }

    pub fn interval_of(&self, x: f64) -> usize {
        self.cuts.partition_point(|&c| c < x)
    }

    /// Interval label in `(lo, hi]` form, clipped to the domain.
    pub fn label(&self, i: usize) -> String {
        let (lo, hi) = self.bounds(i);
        let lo = if i == 0 { self.lower } else { lo };
        let hi = if i == self.cuts.len() { self.upper } else { hi };
        let open = if i == 0 { '[' } else { '(' };
        format!("{open}{}, {}]", crate::io::format_sig(lo, 6), crate::io::format_sig(hi, 6))
    }
}

/// Per-column interval masses and partial expectations.
pub(crate) struct ColumnMoments {
    pub mass: Vec<f64>,
    pub pe: Vec<f64>,
}

fn column_moments(spec: &DistributionSpec, cuts: &[f64]) -> ColumnMoments {
    let k = cuts.len() + 1;
    let mut mass = vec![0.0; k];
    let mut pe = vec![0.0; k];
    if let Some(atoms) = spec.atoms() {
        for (x, w) in atoms {
            let i = cuts.partition_point(|&c| c < x);
            mass[i] += w;
            pe[i] += w * x;
        }
        return ColumnMoments { mass, pe };
    }
    for i in 0..k {
        let lo = if i == 0 { f64::NEG_INFINITY } else { cuts[i - 1] };
        let hi = if i == k - 1 { f64::INFINITY } else { cuts[i] };
        mass[i] = spec.mass(lo, hi);
        pe[i] = spec.partial_expectation(lo, hi);
    }
    ColumnMoments { mass, pe }
}

/// Equal-weight mixture of the column specs.
struct Envelope<'a> {
    specs: &'a [DistributionSpec],
    /// Sorted pooled atoms with mixture weights.
    atoms: Vec<(f64, f64)>,
    continuous: Vec<&'a DistributionSpec>,
}

impl<'a> Envelope<'a> {
    fn new(specs: &'a [DistributionSpec]) -> Self {
        let w = 1.0 / specs.len() as f64;
        let mut atoms = Vec::new();
        let mut continuous = Vec::new();
        for s in specs {
            match s.atoms() {
                Some(a) => atoms.extend(a.into_iter().map(|(x, p)| (x, p * w))),
                None => continuous.push(s),
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += p,
                _ => merged.push((x, p)),
            }
        }
        Envelope {
            specs,
            atoms: merged,
            continuous,
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        let w = 1.0 / self.specs.len() as f64;
        let cont: f64 = self.continuous.iter().map(|s| s.cdf(x)).sum::<f64>() * w;
        let end = self.atoms.partition_point(|a| a.0 <= x);
        cont + self.atoms[..end].iter().map(|a| a.1).sum::<f64>()
    }

    fn bracket(&self) -> (f64, f64) {
        self.specs
            .iter()
            .map(|s| s.bracket())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a), hi.max(b))
            })
    }

    /// Smallest x with F(x) >= q.
    fn quantile(&self, q: f64) -> f64 {
        if self.continuous.is_empty() {
            let mut acc = 0.0;
            for &(x, p) in &self.atoms {
                acc += p;
                if acc >= q - 1e-12 {
                    return x;
                }
            }
            return self.atoms.last().map_or(0.0, |a| a.0);
        }
        let (mut lo, mut hi) = self.bracket();
        if self.cdf(lo) >= q {
            return lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= q {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // Snap onto an atom the bisection converged to.
        let i = self.atoms.partition_point(|a| a.0 < lo);
        if let Some(&(x, _)) = self.atoms.get(i) {
            if x <= hi {
                return x;
            }
        }
        hi
    }
}

fn closed_domain_mass(specs: &[DistributionSpec], domain: &ContinuousDomain) -> f64 {
    let below = if domain.lower.is_finite() {
        domain.lower - domain.lower.abs() * 1e-12 - f64::MIN_POSITIVE
    } else {
        f64::NEG_INFINITY
    };
    specs.iter().map(|s| s.mass(below, domain.upper)).sum::<f64>() / specs.len() as f64
}

/// Builds the partition and returns each column's per-interval moments.
pub(crate) fn build_partition_with_columns(
    specs: &[DistributionSpec],
    domain: &ContinuousDomain,
    bins: usize,
    rule: RepresentativeRule,
) -> Result<(Partition, Vec<ColumnMoments>), DistributionError> {
    if bins < 2 {
        return Err(DistributionError::Bins(bins));
    }
    let empty = DistributionError::EmptyOverlap {
        lower: domain.lower,
        upper: domain.upper,
    };
    if specs.is_empty() || closed_domain_mass(specs, domain) <= 0.0 {
        return Err(empty);
    }

    let env = Envelope::new(specs);
    let mut cuts: Vec<f64> = Vec::with_capacity(bins - 1);
    for j in 1..bins {
        let c = env.quantile(j as f64 / bins as f64);
        if c > domain.lower && c < domain.upper && cuts.last().is_none_or(|&l| c > l) {
            cuts.push(c);
        }
    }
    if cuts.is_empty() {
        cuts.push(fallback_cut(&env, domain));
    }

    let columns: Vec<ColumnMoments> = specs.iter().map(|s| column_moments(s, &cuts)).collect();
    let k = cuts.len() + 1;
    let n = specs.len() as f64;
    let mut reps = Vec::with_capacity(k);
    for i in 0..k {
        let lo = if i == 0 { domain.lower } else { cuts[i - 1] };
        let hi = if i == k - 1 { domain.upper } else { cuts[i] };
        let m: f64 = columns.iter().map(|c| c.mass[i]).sum::<f64>() / n;
        let pe: f64 = columns.iter().map(|c| c.pe[i]).sum::<f64>() / n;
        let fallback = if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo
        } else {
            hi
        };
        let boundary = i == 0 || i == k - 1;
        let rep = match rule {
            RepresentativeRule::Midpoint if lo.is_finite() && hi.is_finite() => 0.5 * (lo + hi),
            _ if boundary => {
                // Extreme column means keep every column's mean bracketed.
                let means = columns
                    .iter()
                    .filter(|c| c.mass[i] > 1e-300)
                    .map(|c| c.pe[i] / c.mass[i]);
                let r = if i == 0 {
                    means.fold(f64::INFINITY, f64::min)
                } else {
                    means.fold(f64::NEG_INFINITY, f64::max)
                };
                if r.is_finite() {
                    r
                } else {
                    fallback
                }
            }
            _ if m > 1e-300 => (pe / m).clamp(lo, hi),
            _ => fallback,
        };
        reps.push(rep);
    }
    // Keep representatives strictly increasing.
    for i in 1..k {
        if reps[i] <= reps[i - 1] {
            reps[i] = reps[i - 1] + 1e-12 * reps[i - 1].abs().max(1.0);
        }
    }

    Ok((
        Partition {
            cuts,
            representatives: reps,
            lower: domain.lower,
            upper: domain.upper,
        },
        columns,
    ))
}

fn fallback_cut(env: &Envelope<'_>, domain: &ContinuousDomain) -> f64 {
    let median = env.quantile(0.5);
    if median > domain.lower && median < domain.upper {
        return median;
    }
    if domain.lower.is_finite() && domain.upper.is_finite() {
        return 0.5 * (domain.lower + domain.upper);
    }
    let step = median.abs().max(1.0);
    if median >= domain.upper {
        (median - step).max(domain.lower + step.min(1.0) * 0.5)
    } else {
        (median + step).min(domain.upper - step.min(1.0) * 0.5)
    }
}

/// Cut points at pooled quantiles of the equal-weight mixture of `specs`.
pub fn build_partition(
    specs: &[DistributionSpec],
    domain: &ContinuousDomain,
    bins: usize,
) -> Result<Partition, DistributionError> {
    build_partition_with_columns(specs, domain, bins, RepresentativeRule::ConditionalMean)
        .map(|(p, _)| p)
}

/// Spreads each interval's mass over the two representatives bracketing the
/// column's conditional mean in that interval, so the column mean is kept.
pub(crate) fn assign_column(col: &ColumnMoments, reps: &[f64]) -> Vec<f64> {
    let k = reps.len();
    let mut out = vec![0.0; k];
    for i in 0..col.mass.len() {
        let m = col.mass[i];
        if m <= 0.0 {
            continue;
        }
        let mu = col.pe[i] / m;
        if mu <= reps[0] {
            out[0] += m;
            continue;
        }
        if mu >= reps[k - 1] {
            out[k - 1] += m;
            continue;
        }
        let j = reps.partition_point(|&r| r <= mu);
        let (lo, hi) = (reps[j - 1], reps[j]);
        let w_hi = (mu - lo) / (hi - lo);
        out[j - 1] += m * (1.0 - w_hi);
        out[j] += m * w_hi;
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|p| *p /= total);
    }
    out
}
