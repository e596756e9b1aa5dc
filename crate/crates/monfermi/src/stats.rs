//! Ensemble statistics: occupation histograms, peak detection, the
//! unimodal-to-bimodal threshold scan, power-law fits of the participation
//! ratio, and distribution comparison.

use serde::{Deserialize, Serialize};

use crate::error::StatsError;

/// Uniform bins on [0,1]; 100 bins resolve peaks separated by a few percent
/// while keeping per-bin counts large at moderate trajectory counts.
pub const DEFAULT_BIN_COUNT: usize = 100;
/// Centered moving-average width, in bins, used by [`find_maxima`].
pub const DEFAULT_SMOOTH_WINDOW: usize = 5;
/// Fraction of the global peak height a maximum must rise above its
/// neighboring valley to count as a separate mode.
pub const DEFAULT_PROMINENCE: f64 = 0.05;

/// Fixed-width histogram of occupation samples on [0,1].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    bin_count: usize,
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    pub fn new(bin_count: usize) -> Self {
        assert!(bin_count > 0, "histogram needs at least one bin");
        Self { bin_count, counts: vec![0; bin_count], total: 0 }
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.bin_count as f64
    }

    /// Midpoint of bin `i`.
    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.bin_count as f64
    }

    /// Record one sample. Values are clamped to [0,1]; 1.0 lands in the last
    /// bin so the edges cover the closed interval.
    pub fn record(&mut self, value: f64) {
        let x = value.clamp(0.0, 1.0);
        let idx = ((x * self.bin_count as f64) as usize).min(self.bin_count - 1);
        self.counts[idx] += 1;
        self.total += 1;
    }

    /// Accumulate counts from `other` into `self`.
    pub fn merge_from(&mut self, other: &Histogram) -> Result<(), StatsError> {
        if self.bin_count != other.bin_count {
            return Err(StatsError::BinMismatch { a: self.bin_count, b: other.bin_count });
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.total += other.total;
        Ok(())
    }

    /// Counts reversed bin-for-bin, i.e. the histogram of `1 - x`.
    pub fn mirrored(&self) -> Histogram {
        let mut counts = self.counts.clone();
        counts.reverse();
        Histogram { bin_count: self.bin_count, counts, total: self.total }
    }

    /// Probability density per bin: counts / (total * bin_width).
    pub fn normalized_density(&self) -> Result<Vec<f64>, StatsError> {
        if self.total == 0 {
            return Err(StatsError::EmptyHistogram);
        }
        let norm = self.total as f64 * self.bin_width();
        Ok(self.counts.iter().map(|&c| c as f64 / norm).collect())
    }
}

impl Default for Histogram {
    fn default() -> Self {
        Self::new(DEFAULT_BIN_COUNT)
    }
}

/// Merged copy of two histograms with identical binning.
pub fn merge(a: &Histogram, b: &Histogram) -> Result<Histogram, StatsError> {
    let mut out = a.clone();
    out.merge_from(b)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Unimodal,
    Bimodal,
}

/// Location and height of the retained density maxima.
///
/// `n_plus` is the global maximum; `n_minus` the secondary one when the
/// distribution is bimodal. Heights satisfy `p_plus >= p_minus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximaReport {
    pub n_plus: f64,
    pub p_plus: f64,
    pub n_minus: Option<f64>,
    pub p_minus: Option<f64>,
    pub modality: Modality,
}

fn smooth(density: &[f64], window: usize) -> Vec<f64> {
    let n = density.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            // Truncate the window symmetrically at the edges; an asymmetric
            // window would break the mirror equivariance of peak locations.
            let r = half.min(i).min(n - 1 - i);
            let slice = &density[i - r..=i + r];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

fn strict_local_maxima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    (0..n)
        .filter(|&i| {
            let left_ok = i == 0 || y[i] > y[i - 1];
            let right_ok = i == n - 1 || y[i] > y[i + 1];
            left_ok && right_ok
        })
        .collect()
}

/// Deterministic order for equal-height candidates: nearer 0.5 first, then
/// lower bin index.
fn tie_rank(h: &Histogram, i: usize) -> (f64, usize) {
    ((h.bin_center(i) - 0.5).abs(), i)
}

/// Detect up to two modes of the sampled occupation distribution.
///
/// The density is smoothed with a centered moving average of `smooth_window`
/// bins, strict local maxima are collected, and maxima are pruned until every
/// adjacent pair is separated by a valley at least `prominence` times the
/// global peak height below the lower of the two. The top two survivors by
/// height are reported; heights are the smoothed densities at the peaks.
pub fn find_maxima(
    h: &Histogram,
    smooth_window: usize,
    prominence: f64,
) -> Result<MaximaReport, StatsError> {
    assert!(smooth_window % 2 == 1 && smooth_window >= 1, "smoothing window must be odd");
    assert!((0.0..=1.0).contains(&prominence), "prominence must lie in [0,1]");

    let density = h.normalized_density()?;
    let smoothed = smooth(&density, smooth_window);
    let global_peak = smoothed.iter().cloned().fold(0.0f64, f64::max);
    let threshold = prominence * global_peak;

    let mut peaks = strict_local_maxima(&smoothed);
    if peaks.is_empty() {
        // Flat (or plateau-topped) smoothed density: fall back to the global
        // argmax with ties broken toward 0.5.
        let best = (0..smoothed.len())
            .max_by(|&a, &b| {
                smoothed[a]
                    .partial_cmp(&smoothed[b])
                    .unwrap()
                    .then_with(|| tie_rank(h, b).partial_cmp(&tie_rank(h, a)).unwrap())
            })
            .expect("histogram has at least one bin");
        return Ok(MaximaReport {
            n_plus: h.bin_center(best),
            p_plus: smoothed[best],
            n_minus: None,
            p_minus: None,
            modality: Modality::Unimodal,
        });
    }

    // Merge adjacent peaks whose mutual valley is too shallow, worst pair
    // first; removing the lower peak widens the neighboring valley interval,
    // so separations are recomputed each round.
    while peaks.len() > 1 {
        let mut worst: Option<(usize, f64)> = None;
        for w in 0..peaks.len() - 1 {
            let (a, b) = (peaks[w], peaks[w + 1]);
            let valley = smoothed[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
            let sep = smoothed[a].min(smoothed[b]) - valley;
            if worst.map_or(true, |(_, s)| sep < s) {
                worst = Some((w, sep));
            }
        }
        let (w, sep) = worst.expect("at least one adjacent pair");
        if sep >= threshold {
            break;
        }
        let (a, b) = (peaks[w], peaks[w + 1]);
        let remove = if smoothed[a] < smoothed[b] {
            w
        } else if smoothed[b] < smoothed[a] {
            w + 1
        } else if tie_rank(h, a) > tie_rank(h, b) {
            w
        } else {
            w + 1
        };
        peaks.remove(remove);
    }

    peaks.sort_by(|&a, &b| {
        smoothed[b]
            .partial_cmp(&smoothed[a])
            .unwrap()
            .then_with(|| tie_rank(h, a).partial_cmp(&tie_rank(h, b)).unwrap())
    });

    let top = peaks[0];
    let second = peaks.get(1).copied();
    Ok(MaximaReport {
        n_plus: h.bin_center(top),
        p_plus: smoothed[top],
        n_minus: second.map(|i| h.bin_center(i)),
        p_minus: second.map(|i| smoothed[i]),
        modality: if second.is_some() { Modality::Bimodal } else { Modality::Unimodal },
    })
}

/// [`find_maxima`] with the default window and prominence.
pub fn find_maxima_default(h: &Histogram) -> Result<MaximaReport, StatsError> {
    find_maxima(h, DEFAULT_SMOOTH_WINDOW, DEFAULT_PROMINENCE)
}

/// Outcome of scanning modality across measurement rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum BifurcationScan {
    Found { threshold: f64, bracket: (f64, f64) },
    NotFound,
}

impl std::fmt::Display for BifurcationScan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BifurcationScan::Found { threshold, bracket } => {
                write!(f, "gamma* ~ {} (bracket [{}, {}])", threshold, bracket.0, bracket.1)
            }
            BifurcationScan::NotFound => write!(f, "no bifurcation in scanned range"),
        }
    }
}

/// Locate the unimodal-to-bimodal threshold on a grid of measurement rates.
///
/// The bracket is the last unimodal rate strictly below the first bimodal
/// rate, paired with that first bimodal rate; the threshold estimate is their
/// midpoint. Anchoring on the first bimodal point makes the result invariant
/// under grid refinement outside the bracket even if modality is not
/// perfectly monotone across the scan.
pub fn bifurcation_scan(reports: &[(f64, MaximaReport)]) -> BifurcationScan {
    let mut sorted: Vec<&(f64, MaximaReport)> = reports.iter().collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let first_bimodal = sorted
        .iter()
        .find(|(_, r)| r.modality == Modality::Bimodal)
        .map(|(g, _)| *g);
    let Some(g_bi) = first_bimodal else {
        return BifurcationScan::NotFound;
    };
    let last_unimodal_below = sorted
        .iter()
        .filter(|(g, r)| *g < g_bi && r.modality == Modality::Unimodal)
        .map(|(g, _)| *g)
        .next_back();
    match last_unimodal_below {
        Some(g_uni) => BifurcationScan::Found {
            threshold: 0.5 * (g_uni + g_bi),
            bracket: (g_uni, g_bi),
        },
        None => BifurcationScan::NotFound,
    }
}

/// One system size entering a power-law fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IprPoint {
    pub l: usize,
    pub mean_ipr: f64,
    pub std_err: f64,
}

/// Least-squares fit of `IPR ~ L^{-alpha}` in log-log coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<IprPoint>,
}

fn fit_log_log(points: &[IprPoint], weights: &[f64]) -> Result<PowerLawFit, StatsError> {
    let mut distinct: Vec<usize> = points.iter().map(|p| p.l).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(StatsError::TooFewSizes(distinct.len()));
    }
    for p in points {
        if !(p.mean_ipr > 0.0) {
            return Err(StatsError::NonpositiveValue { l: p.l, value: p.mean_ipr });
        }
    }

    let xs: Vec<f64> = points.iter().map(|p| (p.l as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_ipr.ln()).collect();
    let wsum: f64 = weights.iter().sum();
    let xbar = xs.iter().zip(weights).map(|(x, w)| w * x).sum::<f64>() / wsum;
    let ybar = ys.iter().zip(weights).map(|(y, w)| w * y).sum::<f64>() / wsum;

    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for ((x, y), w) in xs.iter().zip(&ys).zip(weights) {
        sxy += w * (x - xbar) * (y - ybar);
        sxx += w * (x - xbar) * (x - xbar);
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;

    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for ((x, y), w) in xs.iter().zip(&ys).zip(weights) {
        let fit = intercept + slope * x;
        ss_res += w * (y - fit) * (y - fit);
        ss_tot += w * (y - ybar) * (y - ybar);
    }
    // A constant dataset fits exactly; report r^2 = 1 instead of 0/0.
    let r_squared = if ss_tot <= f64::EPSILON * ybar.abs().max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };

    Ok(PowerLawFit { alpha: -slope, intercept, r_squared, points: points.to_vec() })
}

/// Unweighted ordinary least squares on `(ln L, ln IPR)`; `alpha` is the
/// negated slope.
pub fn fit_power_law(points: &[IprPoint]) -> Result<PowerLawFit, StatsError> {
    let weights = vec![1.0; points.len()];
    fit_log_log(points, &weights)
}

/// Inverse-variance weighted variant, with log-space errors obtained from the
/// per-point standard errors by the delta method. Points with nonpositive
/// standard error make the weighting ill-defined; in that case all points
/// fall back to equal weight.
pub fn fit_power_law_weighted(points: &[IprPoint]) -> Result<PowerLawFit, StatsError> {
    let usable = points.iter().all(|p| p.std_err > 0.0 && p.mean_ipr > 0.0);
    let weights: Vec<f64> = if usable {
        points
            .iter()
            .map(|p| {
                let sigma_log = p.std_err / p.mean_ipr;
                1.0 / (sigma_log * sigma_log)
            })
            .collect()
    } else {
        vec![1.0; points.len()]
    };
    fit_log_log(points, &weights)
}

/// Kolmogorov-Smirnov distance between two histograms with identical binning.
pub fn ks_distance(a: &Histogram, b: &Histogram) -> Result<f64, StatsError> {
    if a.bin_count != b.bin_count {
        return Err(StatsError::BinMismatch { a: a.bin_count, b: b.bin_count });
    }
    if a.total == 0 || b.total == 0 {
        return Err(StatsError::EmptyHistogram);
    }
    let (mut ca, mut cb) = (0.0f64, 0.0f64);
    let (ta, tb) = (a.total as f64, b.total as f64);
    let mut max_gap = 0.0f64;
    for (x, y) in a.counts.iter().zip(&b.counts) {
        ca += *x as f64 / ta;
        cb += *y as f64 / tb;
        max_gap = max_gap.max((ca - cb).abs());
    }
    Ok(max_gap.min(1.0))
}
