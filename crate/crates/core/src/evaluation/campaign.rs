//! Campaign simulator: targeted users post once, their audience reacts, and
//! mean reactions are binned by the user's score at targeting time.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Deserialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::population::{user_rng, SyntheticPopulation};
use super::EvalError;
use crate::codec::Record;
use crate::event::UserId;
use crate::hierarchy::ScoreSnapshot;

const CAMPAIGN_SALT: u64 = 0x6361_6d70_6169_676e;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignParams {
    /// Targeted score range, inclusive at both ends.
    pub score_min: f64,
    pub score_max: f64,
    pub bin_width: f64,
    /// Probability that a targeted user posts.
    pub post_rate: f64,
    /// Per-audience-member reaction probability is
    /// `logistic(intercept + slope * ln L)`.
    pub logistic_intercept: f64,
    pub logistic_slope: f64,
    /// Bins with fewer posters are reported absent.
    pub min_posters: usize,
}

impl Default for CampaignParams {
    fn default() -> Self {
        CampaignParams {
            score_min: 10.0,
            score_max: 80.0,
            bin_width: 5.0,
            post_rate: 0.5,
            logistic_intercept: -2.0,
            logistic_slope: 1.0,
            min_posters: 5,
        }
    }
}

impl CampaignParams {
    fn validate(&self) -> Result<(), EvalError> {
        let ok = self.score_min.is_finite()
            && self.score_max.is_finite()
            && self.score_min < self.score_max
            && self.bin_width.is_finite()
            && self.bin_width > 0.0
            && (0.0..=1.0).contains(&self.post_rate)
            && self.logistic_intercept.is_finite()
            && self.logistic_slope.is_finite()
            && self.min_posters >= 1;
        if ok {
            Ok(())
        } else {
            Err(EvalError::BadParams("invalid campaign parameters".into()))
        }
    }

    fn bin_count(&self) -> usize {
        ((self.score_max - self.score_min) / self.bin_width)
            .ceil()
            .max(1.0) as usize
    }

    fn bin_of(&self, score: f64) -> usize {
        (((score - self.score_min) / self.bin_width) as usize).min(self.bin_count() - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetOutcome {
    pub user: UserId,
    pub score: f64,
    pub posted: bool,
    pub reactions: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinStats {
    pub lo: f64,
    pub hi: f64,
    pub users: usize,
    pub posters: usize,
    /// `None` when the bin has fewer than `min_posters` posters.
    pub mean_reactions: Option<f64>,
}

impl BinStats {
    pub fn center(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    pub fn log_mean(&self) -> Option<f64> {
        self.mean_reactions.filter(|&m| m > 0.0).map(f64::ln)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub targets: Vec<TargetOutcome>,
    pub bins: Vec<BinStats>,
    /// Adjacent present bins compared.
    pub comparisons: usize,
    /// Adjacent present bins whose mean decreases.
    pub violations: usize,
    /// Least-squares slope of ln(mean reactions) against bin center.
    pub slope: f64,
    pub slope_stderr: f64,
    /// One-sided p-value for slope > 0; 1 when fewer than three bins have
    /// a positive mean.
    pub p_value: f64,
}

impl CampaignResult {
    /// Fraction of adjacent present bins that do not decrease; 1 when there
    /// is nothing to compare.
    pub fn monotone_fraction(&self) -> f64 {
        if self.comparisons == 0 {
            1.0
        } else {
            1.0 - self.violations as f64 / self.comparisons as f64
        }
    }

    pub fn posts(&self) -> usize {
        self.targets.iter().filter(|t| t.posted).count()
    }

    pub fn total_reactions(&self) -> u64 {
        self.targets.iter().map(|t| t.reactions).sum()
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Simulates the campaign for every population user whose score lies in the
/// targeted range.
pub fn run_campaign(
    population: &SyntheticPopulation,
    scores: &ScoreSnapshot,
    params: &CampaignParams,
    seed: u64,
) -> Result<CampaignResult, EvalError> {
    params.validate()?;
    let targets: Vec<TargetOutcome> = population
        .users
        .par_iter()
        .enumerate()
        .filter_map(|(i, u)| {
            let score = scores.overall(&u.id)?;
            if !(params.score_min..=params.score_max).contains(&score) {
                return None;
            }
            let mut rng = user_rng(seed, CAMPAIGN_SALT, i);
            let posted = rng.random_bool(params.post_rate);
            let reactions = if posted {
                let p = logistic(params.logistic_intercept + params.logistic_slope * u.latent.ln());
                let lambda = u.total_audience() as f64 * p;
                if lambda > 0.0 {
                    Poisson::new(lambda).map_or(0.0, |d| d.sample(&mut rng)) as u64
                } else {
                    0
                }
            } else {
                0
            };
            Some(TargetOutcome {
                user: u.id.clone(),
                score,
                posted,
                reactions,
            })
        })
        .collect();
    if targets.is_empty() {
        return Err(EvalError::NoTargets);
    }

    let n = params.bin_count();
    let mut users = vec![0usize; n];
    let mut posters = vec![0usize; n];
    let mut sums = vec![0u64; n];
    for t in &targets {
        let b = params.bin_of(t.score);
        users[b] += 1;
        if t.posted {
            posters[b] += 1;
            sums[b] += t.reactions;
        }
    }
    let bins: Vec<BinStats> = (0..n)
        .map(|b| {
            let lo = params.score_min + b as f64 * params.bin_width;
            BinStats {
                lo,
                hi: (lo + params.bin_width).min(params.score_max),
                users: users[b],
                posters: posters[b],
                mean_reactions: (posters[b] >= params.min_posters)
                    .then(|| sums[b] as f64 / posters[b] as f64),
            }
        })
        .collect();

    let present: Vec<f64> = bins.iter().filter_map(|b| b.mean_reactions).collect();
    let comparisons = present.len().saturating_sub(1);
    let violations = present.windows(2).filter(|w| w[1] < w[0]).count();

    let points: Vec<(f64, f64)> = bins
        .iter()
        .filter_map(|b| b.log_mean().map(|y| (b.center(), y)))
        .collect();
    let (slope, slope_stderr, p_value) = fit_slope(&points);
    Ok(CampaignResult {
        targets,
        bins,
        comparisons,
        violations,
        slope,
        slope_stderr,
        p_value,
    })
}

/// OLS slope, its standard error and the one-sided p-value for slope > 0.
fn fit_slope(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len();
    if n < 2 {
        return (0.0, f64::INFINITY, 1.0);
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    if n < 3 {
        return (slope, f64::INFINITY, 1.0);
    }
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum();
    let se = (sse / (nf - 2.0) / sxx).sqrt();
    let p = if se == 0.0 {
        if slope > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        let t = StudentsT::new(0.0, 1.0, nf - 2.0).expect("df >= 1");
        1.0 - t.cdf(slope / se)
    };
    (slope, se, p)
}

/// One line per bin, then a summary line.
pub fn write_campaign_report(result: &CampaignResult) -> String {
    let mut out = String::new();
    let opt = |v: Option<f64>| v.map_or_else(|| "absent".to_string(), |x| format!("{x:.6}"));
    for b in &result.bins {
        let r = Record::new()
            .with("bin_lo", b.lo)
            .with("bin_hi", b.hi)
            .with("users", b.users)
            .with("posters", b.posters)
            .with("mean_reactions", opt(b.mean_reactions))
            .with("log_mean", opt(b.log_mean()));
        writeln!(out, "{r}").unwrap();
    }
    let summary = Record::new()
        .with("report", "campaign")
        .with("targets", result.targets.len())
        .with("posts", result.posts())
        .with("reactions", result.total_reactions())
        .with("comparisons", result.comparisons)
        .with("violations", result.violations)
        .with(
            "monotone_fraction",
            format!("{:.6}", result.monotone_fraction()),
        )
        .with("slope", format!("{:.6e}", result.slope))
        .with("slope_stderr", format!("{:.6e}", result.slope_stderr))
        .with("p_value", format!("{:.6e}", result.p_value));
    writeln!(out, "{summary}").unwrap();
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use chrono::NaiveDate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::evaluation::population::SyntheticUser;
    use crate::event::NetworkName;
    use crate::hierarchy::ScoreEntry;

    fn setup(latent: impl Fn(usize) -> f64, n: usize) -> (SyntheticPopulation, ScoreSnapshot) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut users = Vec::new();
        let mut entries = BTreeMap::new();
        for i in 0..n {
            let id = UserId::new(format!("u{i:05}")).unwrap();
            let l = latent(i);
            let score: f64 = 10.0 + 70.0 * rng.random::<f64>();
            users.push(SyntheticUser {
                id: id.clone(),
                latent: l,
                audience: BTreeMap::from([(
                    NetworkName::new("tw").unwrap(),
                    (20.0 * l).round() as usize,
                )]),
            });
            entries.insert(
                id,
                ScoreEntry {
                    overall: score,
                    raw: score / 100.0,
                    nodes: BTreeMap::new(),
                },
            );
        }
        let snap = ScoreSnapshot {
            as_of: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            entries,
        };
        (SyntheticPopulation { users }, snap)
    }

    #[test]
    fn constant_latent_gives_flat_curve() {
        let (pop, snap) = setup(|_| 5.0, 4000);
        let r = run_campaign(&pop, &snap, &CampaignParams::default(), 1).unwrap();
        assert_eq!(r.bins.len(), 14);
        assert!(
            r.slope.abs() < 3.0 * r.slope_stderr,
            "{} {}",
            r.slope,
            r.slope_stderr
        );
        assert!(r.slope.abs() < 2e-3);
    }

    #[test]
    fn latent_tracking_score_gives_rising_curve() {
        let (pop, mut snap) = setup(|i| (i as f64 / 500.0).exp(), 4000);
        for (i, e) in snap.entries.values_mut().enumerate() {
            e.overall = 10.0 + 70.0 * i as f64 / 4000.0;
        }
        let r = run_campaign(&pop, &snap, &CampaignParams::default(), 2).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.slope > 0.0 && r.p_value < 1e-6);
        let text = write_campaign_report(&r);
        assert_eq!(text.lines().count(), 15);
        assert!(text.lines().last().unwrap().starts_with("report=campaign"));
    }

    #[test]
    fn deterministic_and_bounded() {
        let (pop, snap) = setup(|i| 1.0 + (i % 7) as f64, 500);
        let p = CampaignParams::default();
        assert_eq!(
            run_campaign(&pop, &snap, &p, 3).unwrap(),
            run_campaign(&pop, &snap, &p, 3).unwrap()
        );
        let r = run_campaign(&pop, &snap, &p, 3).unwrap();
        assert!(r.targets.iter().all(|t| t.posted || t.reactions == 0));
        assert_eq!(r.bins.iter().map(|b| b.users).sum::<usize>(), 500);
    }

    #[test]
    fn top_edge_lands_in_last_bin_and_out_of_range_is_ignored() {
        let p = CampaignParams::default();
        assert_eq!(p.bin_of(80.0), 13);
        assert_eq!(p.bin_of(10.0), 0);
        assert_eq!(p.bin_of(14.999), 0);
        assert_eq!(p.bin_of(15.0), 1);
        let (pop, mut snap) = setup(|_| 1.0, 20);
        for e in snap.entries.values_mut() {
            e.overall = 95.0;
        }
        assert!(matches!(
            run_campaign(&pop, &snap, &p, 0),
            Err(EvalError::NoTargets)
        ));
    }
}
