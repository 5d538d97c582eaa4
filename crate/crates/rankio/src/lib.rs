//! File I/O and the longitudinal count-data pipeline: Poisson variance
//! stabilization, windowed sufficient statistics, unit ranking with fitted
//! mixing distributions, letter grades, and grade transition matrices.

// Negated float comparisons like `!(x > 0.0)` are deliberate: they also
// reject NaN in validation guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ranksel::mixture::{DiscreteMixing, KnownVarObs, PanelObs};
use ranksel::npmle::{
    default_bandwidth, fit_npmle_known_var, fit_npmle_panel, smooth_mixing, FitOptions,
};
use ranksel::posterior::{
    efron_morris, lower_tail_prob_known_var, norm_cdf, post_mean_known_var, tail_prob_known_var,
};
use ranksel::selection::{select, select_by_score, SelectionConfig, SelectionResult, Tail};
use ranksel::RankselError;

/// Pipeline errors, split by the exit code they should map to: usage errors
/// (bad flags, malformed option values) exit 2, data errors (bad file
/// contents, domain violations) exit 1.
#[derive(Debug, Error)]
pub enum RankioError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] RankselError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RankioError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            RankioError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, RankioError>;

/// One (unit, period) row of longitudinal count data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRecord {
    pub unit_id: String,
    pub period: i64,
    /// Observed event count.
    pub observed: f64,
    /// Expected count under the reference model.
    pub expected: f64,
}

impl LongRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.expected > 0.0) || !self.expected.is_finite() {
            return Err(RankioError::Data(format!(
                "unit {} period {}: expected count must be positive, got {}",
                self.unit_id, self.period, self.expected
            )));
        }
        if !(self.observed >= 0.0) || !self.observed.is_finite() {
            return Err(RankioError::Data(format!(
                "unit {} period {}: observed count must be nonnegative, got {}",
                self.unit_id, self.period, self.observed
            )));
        }
        Ok(())
    }
}

/// Windowed sufficient statistic for one unit: a precision-weighted mean with
/// effective precision `w_total`, plus raw count totals for the ratio
/// estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitStat {
    pub unit_id: String,
    /// Weighted mean of the stabilized observations; approximately
    /// `N(theta, 1/w_total)`.
    pub t_stat: f64,
    pub w_total: f64,
    pub n_periods: usize,
    pub obs_total: f64,
    pub exp_total: f64,
}

impl UnitStat {
    pub fn sigma(&self) -> f64 {
        (1.0 / self.w_total).sqrt()
    }
}

/// Variance-stabilizing transform for a Poisson rate ratio:
/// `z = sqrt(y / mu)` with weight `w = 4 mu`, so `z` is approximately
/// `N(sqrt(rho), 1/w)`.
pub fn poisson_vst(rec: &LongRecord) -> Result<(f64, f64)> {
    rec.validate()?;
    Ok(((rec.observed / rec.expected).sqrt(), 4.0 * rec.expected))
}

/// Inclusive period window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: i64,
    pub end: i64,
}

impl Window {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if start > end {
            return Err(RankioError::Usage(format!(
                "window start {start} exceeds end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, period: i64) -> bool {
        (self.start..=self.end).contains(&period)
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Parses `start:end`.
    pub fn parse(text: &str) -> Result<Self> {
        let (a, b) = text
            .split_once(':')
            .ok_or_else(|| RankioError::Usage(format!("window '{text}' is not start:end")))?;
        let start = a
            .trim()
            .parse()
            .map_err(|_| RankioError::Usage(format!("bad window start '{a}'")))?;
        let end = b
            .trim()
            .parse()
            .map_err(|_| RankioError::Usage(format!("bad window end '{b}'")))?;
        Self::new(start, end)
    }
}

/// Result of windowed aggregation: per-unit statistics (sorted by unit id)
/// plus the number of units dropped for having no or incomplete in-window
/// data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregated {
    pub stats: Vec<UnitStat>,
    pub dropped_units: usize,
}

/// Collapses in-window records to one precision-weighted statistic per unit.
///
/// Duplicate `(unit, period)` pairs are rejected. With `require_complete`,
/// units missing any period in the window are dropped (and counted);
/// otherwise any unit with at least one in-window record is kept.
pub fn aggregate_window(
    records: &[LongRecord],
    window: Window,
    require_complete: bool,
) -> Result<Aggregated> {
    let mut per_unit: BTreeMap<&str, Vec<&LongRecord>> = BTreeMap::new();
    let mut seen: std::collections::BTreeSet<(&str, i64)> = std::collections::BTreeSet::new();
    for rec in records {
        rec.validate()?;
        if !seen.insert((rec.unit_id.as_str(), rec.period)) {
            return Err(RankioError::Data(format!(
                "duplicate record for unit {} period {}",
                rec.unit_id, rec.period
            )));
        }
        if window.contains(rec.period) {
            per_unit.entry(rec.unit_id.as_str()).or_default().push(rec);
        } else {
            per_unit.entry(rec.unit_id.as_str()).or_default();
        }
    }
    let mut stats = Vec::new();
    let mut dropped_units = 0usize;
    for (unit, recs) in per_unit {
        let complete_enough = if require_complete {
            recs.len() == window.len()
        } else {
            !recs.is_empty()
        };
        if !complete_enough {
            dropped_units += 1;
            continue;
        }
        let mut num = 0.0;
        let mut w_total = 0.0;
        let mut obs_total = 0.0;
        let mut exp_total = 0.0;
        for rec in &recs {
            let (z, w) = poisson_vst(rec)?;
            num += w * z;
            w_total += w;
            obs_total += rec.observed;
            exp_total += rec.expected;
        }
        stats.push(UnitStat {
            unit_id: unit.to_string(),
            t_stat: num / w_total,
            w_total,
            n_periods: recs.len(),
            obs_total,
            exp_total,
        });
    }
    Ok(Aggregated {
        stats,
        dropped_units,
    })
}

/// Ranking rules available for unit-level reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankRule {
    /// Posterior tail probability under the fitted mixing distribution.
    Tp,
    /// Posterior mean under the fitted mixing distribution.
    Pm,
    /// Raw weighted mean.
    Mle,
    /// Ratio of total observed to total expected counts.
    PoissonMle,
    /// One-sided exceedance probability against the merit cutoff.
    Pvalue,
    /// Equal-variance shrinkage toward the grand mean.
    JamesStein,
    /// Precision-dependent corrected shrinkage.
    EfronMorris,
}

impl RankRule {
    pub fn name(&self) -> &'static str {
        match self {
            RankRule::Tp => "TP",
            RankRule::Pm => "PM",
            RankRule::Mle => "MLE",
            RankRule::PoissonMle => "Poisson-MLE",
            RankRule::Pvalue => "Pvalue",
            RankRule::JamesStein => "James-Stein",
            RankRule::EfronMorris => "Efron-Morris",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        [
            RankRule::Tp,
            RankRule::Pm,
            RankRule::Mle,
            RankRule::PoissonMle,
            RankRule::Pvalue,
            RankRule::JamesStein,
            RankRule::EfronMorris,
        ]
        .into_iter()
        .find(|r| r.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| RankioError::Usage(format!("unknown ranking rule '{name}'")))
    }
}

/// One ranked unit in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedUnit {
    pub unit_id: String,
    /// Rule-specific score (higher = more extreme in the selected tail).
    pub score: f64,
    /// Posterior tail probability under the fitted mixing distribution.
    pub v: f64,
    /// 1 = most extreme.
    pub rank: usize,
    pub selected: bool,
}

/// Full ranking report: units in rank order plus selection diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    pub rule: String,
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub tail: String,
    pub theta_cutoff: f64,
    pub units: Vec<RankedUnit>,
    pub n_selected: usize,
    pub est_fdr: f64,
}

/// Ranks units under a mixing distribution fitted to their windowed
/// statistics. Refuses fewer than 10 units: the mixing fit is meaningless on
/// tiny samples.
pub fn rank_units(
    stats: &[UnitStat],
    rule: RankRule,
    cfg: &SelectionConfig,
    opts: &FitOptions,
    smooth: bool,
) -> Result<RankReport> {
    if stats.len() < 10 {
        return Err(RankioError::Data(format!(
            "ranking needs at least 10 units, got {}",
            stats.len()
        )));
    }
    let obs: Vec<KnownVarObs> = stats
        .iter()
        .map(|s| KnownVarObs::new(s.t_stat, s.sigma()).map_err(RankioError::from))
        .collect::<Result<_>>()?;
    let fit = fit_npmle_known_var(&obs, opts)?;
    let g = if smooth {
        smooth_mixing(&fit.mixing, None)?.to_discrete()
    } else {
        fit.mixing
    };
    let (cutoff, v): (f64, Vec<f64>) = match cfg.tail {
        Tail::Upper => {
            let c = g.upper_tail_cutoff(cfg.alpha)?;
            (
                c,
                obs.iter().map(|o| tail_prob_known_var(o, &g, c)).collect(),
            )
        }
        Tail::Lower => {
            let c = g.lower_tail_cutoff(cfg.alpha)?;
            (
                c,
                obs.iter()
                    .map(|o| lower_tail_prob_known_var(o, &g, c))
                    .collect(),
            )
        }
    };
    // Scores are oriented so that larger always means "more extreme in the
    // selected tail"; location-type scores flip sign for lower-tail runs.
    let orient = match cfg.tail {
        Tail::Upper => 1.0,
        Tail::Lower => -1.0,
    };
    let scores: Vec<f64> = match rule {
        RankRule::Tp => v.clone(),
        RankRule::Pm => obs
            .iter()
            .map(|o| orient * post_mean_known_var(o, &g))
            .collect(),
        RankRule::Mle => stats.iter().map(|s| orient * s.t_stat).collect(),
        RankRule::PoissonMle => stats
            .iter()
            .map(|s| orient * s.obs_total / s.exp_total)
            .collect(),
        RankRule::Pvalue => obs
            .iter()
            .map(|o| norm_cdf(orient * (o.y() - cutoff) / o.sigma()))
            .collect(),
        RankRule::JamesStein => james_stein_means(&obs)?
            .into_iter()
            .map(|m| orient * m)
            .collect(),
        RankRule::EfronMorris => efron_morris(&obs)?
            .into_iter()
            .map(|m| orient * m)
            .collect(),
    };
    let result = if rule == RankRule::Tp {
        select(&v, cfg)?
    } else {
        select_by_score(&scores, &v, cfg)?
    };
    Ok(build_report(stats, rule, cfg, cutoff, &scores, &v, &result))
}

fn build_report(
    stats: &[UnitStat],
    rule: RankRule,
    cfg: &SelectionConfig,
    cutoff: f64,
    scores: &[f64],
    v: &[f64],
    result: &SelectionResult,
) -> RankReport {
    // Rank by score descending, breaking ties by v then input order; this is
    // the same ordering the selector uses, so selected units form a prefix.
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(v[b].total_cmp(&v[a]))
            .then(a.cmp(&b))
    });
    let selected: std::collections::BTreeSet<usize> = result.selected.iter().copied().collect();
    let units = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| RankedUnit {
            unit_id: stats[i].unit_id.clone(),
            score: scores[i],
            v: v[i],
            rank: pos + 1,
            selected: selected.contains(&i),
        })
        .collect();
    RankReport {
        rule: rule.name().to_string(),
        alpha: cfg.alpha,
        gamma: cfg.gamma,
        tail: match cfg.tail {
            Tail::Upper => "upper".to_string(),
            Tail::Lower => "lower".to_string(),
        },
        theta_cutoff: cutoff,
        units,
        n_selected: result.n_selected,
        est_fdr: result.est_fdr,
    }
}

/// Classical equal-variance shrinkage toward the grand mean with the
/// degrees-of-freedom correction: `mu + (1 - (n-3) s2bar / S)(y - mu)` where
/// `s2bar` is the average noise variance and `S` the centered sum of squares.
fn james_stein_means(obs: &[KnownVarObs]) -> Result<Vec<f64>> {
    let n = obs.len() as f64;
    if obs.len() <= 3 {
        return Err(RankioError::Data(
            "shrinkage needs more than 3 units".into(),
        ));
    }
    let mu = obs.iter().map(|o| o.y()).sum::<f64>() / n;
    let ss: f64 = obs.iter().map(|o| (o.y() - mu).powi(2)).sum();
    let s2bar = obs.iter().map(|o| o.sigma() * o.sigma()).sum::<f64>() / n;
    let shrink = if ss > 0.0 {
        (1.0 - (n - 3.0) * s2bar / ss).max(0.0)
    } else {
        0.0
    };
    Ok(obs.iter().map(|o| mu + shrink * (o.y() - mu)).collect())
}

/// Ordered grade labels (best first) and their target proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeScheme {
    pub labels: Vec<String>,
    pub proportions: Vec<f64>,
}

impl Default for GradeScheme {
    fn default() -> Self {
        Self {
            labels: ["A", "B", "C", "D", "F"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            proportions: vec![0.22, 0.30, 0.35, 0.09, 0.04],
        }
    }
}

impl GradeScheme {
    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() || self.labels.len() != self.proportions.len() {
            return Err(RankioError::Data(
                "grade labels and proportions must align and be nonempty".into(),
            ));
        }
        if self.proportions.iter().any(|p| !(*p >= 0.0)) {
            return Err(RankioError::Data(
                "grade proportions must be nonnegative".into(),
            ));
        }
        let total: f64 = self.proportions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(RankioError::Data(format!(
                "grade proportions sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Block sizes from proportions by the largest-remainder method; sizes sum to
/// `n` exactly and each differs from `n * p` by less than 1.
pub fn largest_remainder_sizes(n: usize, proportions: &[f64]) -> Vec<usize> {
    let mut sizes: Vec<usize> = proportions
        .iter()
        .map(|p| (p * n as f64) as usize)
        .collect();
    let assigned: usize = sizes.iter().sum();
    let mut remainders: Vec<(usize, f64)> = proportions
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p * n as f64 - sizes[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (i, _) in remainders.iter().take(n - assigned) {
        sizes[*i] += 1;
    }
    sizes
}

/// Assigns grade labels to an already-ranked unit list (best first):
/// contiguous blocks sized by largest-remainder rounding of the scheme
/// proportions.
pub fn assign_grades(
    ranked_units: &[String],
    scheme: &GradeScheme,
) -> Result<Vec<(String, String)>> {
    scheme.validate()?;
    let sizes = largest_remainder_sizes(ranked_units.len(), &scheme.proportions);
    let mut out = Vec::with_capacity(ranked_units.len());
    let mut idx = 0usize;
    for (label, size) in scheme.labels.iter().zip(&sizes) {
        for _ in 0..*size {
            out.push((ranked_units[idx].clone(), label.clone()));
            idx += 1;
        }
    }
    Ok(out)
}

/// First-order transition matrix estimated from per-unit label sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub labels: Vec<String>,
    /// Row-stochastic: entry (i, j) estimates P(next = j | current = i).
    pub rows: Vec<Vec<f64>>,
    /// Rows with no observed outgoing transitions, emitted as uniform.
    pub uniform_rows: Vec<bool>,
}

/// Counts consecutive-window transitions across all units. Labels not in
/// `labels` are an error; states never left get a flagged uniform row.
pub fn transition_matrix(histories: &[Vec<String>], labels: &[String]) -> Result<TransitionMatrix> {
    let k = labels.len();
    if k == 0 {
        return Err(RankioError::Data("no grade labels".into()));
    }
    let index = |l: &str| -> Result<usize> {
        labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| RankioError::Data(format!("unknown grade label '{l}'")))
    };
    let mut counts = vec![vec![0u64; k]; k];
    for h in histories {
        for pair in h.windows(2) {
            counts[index(&pair[0])?][index(&pair[1])?] += 1;
        }
    }
    let mut rows = Vec::with_capacity(k);
    let mut uniform_rows = Vec::with_capacity(k);
    for row in &counts {
        let total: u64 = row.iter().sum();
        if total == 0 {
            rows.push(vec![1.0 / k as f64; k]);
            uniform_rows.push(true);
        } else {
            rows.push(row.iter().map(|c| *c as f64 / total as f64).collect());
            uniform_rows.push(false);
        }
    }
    Ok(TransitionMatrix {
        labels: labels.to_vec(),
        rows,
        uniform_rows,
    })
}

/// Lag-one autocorrelation of a series; descriptive only.
pub fn ar1_coefficient(series: &[f64]) -> Option<f64> {
    if series.len() < 3 {
        return None;
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|x| (x - mean).powi(2)).sum();
    if denom <= 0.0 {
        return None;
    }
    let num: f64 = series
        .windows(2)
        .map(|p| (p[0] - mean) * (p[1] - mean))
        .sum();
    Some(num / denom)
}

/// Serialized mixing distribution: either a univariate fit ("known-var") or
/// the theta-sigma^2 product fit ("panel").
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GhatFile {
    pub model: String,
    /// Univariate: one entry per atom. Panel: flattened (theta, variance)
    /// pairs stored in `atoms` / `variances`.
    pub atoms: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
    pub weights: Vec<f64>,
    pub smoothed: Option<SmoothInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothInfo {
    pub bandwidth: f64,
}

impl GhatFile {
    pub fn from_discrete(g: &DiscreteMixing, smoothed: Option<f64>) -> Self {
        Self {
            model: "known-var".to_string(),
            atoms: g.atoms().to_vec(),
            variances: None,
            weights: g.weights().to_vec(),
            smoothed: smoothed.map(|bandwidth| SmoothInfo { bandwidth }),
        }
    }

    pub fn to_discrete(&self) -> Result<DiscreteMixing> {
        if self.model != "known-var" {
            return Err(RankioError::Data(format!(
                "expected a known-var mixing distribution, found model '{}'",
                self.model
            )));
        }
        DiscreteMixing::new(self.atoms.clone(), self.weights.clone()).map_err(RankioError::from)
    }
}

/// Machine-readable provenance block echoed into every output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            tool: "rankio".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
        }
    }
}

fn csv_data_err(path: &Path, err: csv::Error) -> RankioError {
    let line = match err.position() {
        Some(pos) => format!(" at line {}", pos.line()),
        None => String::new(),
    };
    RankioError::Data(format!("{}{line}: {err}", path.display()))
}

/// Reads `unit_id,period,observed,expected` rows.
pub fn read_long_csv(path: &Path) -> Result<Vec<LongRecord>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| RankioError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let rec: LongRecord = rec.map_err(|e| csv_data_err(path, e))?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct KnownVarRow {
    y: f64,
    sigma: f64,
}

/// Reads `y,sigma` rows.
pub fn read_known_var_csv(path: &Path) -> Result<Vec<KnownVarObs>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| RankioError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: KnownVarRow = rec.map_err(|e| csv_data_err(path, e))?;
        out.push(
            KnownVarObs::new(row.y, row.sigma).map_err(|e| {
                RankioError::Data(format!("{} line {}: {e}", path.display(), i + 2))
            })?,
        );
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct PanelRow {
    ybar: f64,
    s: f64,
    t: u32,
}

/// Reads `ybar,s,t` rows.
pub fn read_panel_csv(path: &Path) -> Result<Vec<PanelObs>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| RankioError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: PanelRow = rec.map_err(|e| csv_data_err(path, e))?;
        out.push(
            PanelObs::new(row.ybar, row.s, row.t).map_err(|e| {
                RankioError::Data(format!("{} line {}: {e}", path.display(), i + 2))
            })?,
        );
    }
    Ok(out)
}

/// Reads a serialized mixing distribution.
pub fn read_ghat(path: &Path) -> Result<GhatFile> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    Ok(serde_json::from_str(&text)?)
}

/// Fits the mixing distribution from direct observations and serializes it,
/// reporting the smoothing bandwidth when smoothing was requested.
pub fn fit_known_var_to_ghat(
    obs: &[KnownVarObs],
    opts: &FitOptions,
    smooth: bool,
) -> Result<GhatFile> {
    let fit = fit_npmle_known_var(obs, opts)?;
    if smooth {
        let h = default_bandwidth(&fit.mixing);
        let sm = smooth_mixing(&fit.mixing, Some(h))?;
        Ok(GhatFile::from_discrete(&sm.to_discrete(), Some(h)))
    } else {
        Ok(GhatFile::from_discrete(&fit.mixing, None))
    }
}

/// Fits the bivariate mixing distribution from panel statistics and
/// serializes it.
pub fn fit_panel_to_ghat(obs: &[PanelObs], opts: &FitOptions) -> Result<GhatFile> {
    let fit = fit_npmle_panel(obs, opts)?;
    let (atoms, variances): (Vec<f64>, Vec<f64>) = fit.mixing.atoms().iter().copied().unzip();
    Ok(GhatFile {
        model: "panel".to_string(),
        atoms,
        variances: Some(variances),
        weights: fit.mixing.weights().to_vec(),
        smoothed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(unit: &str, period: i64, y: f64, mu: f64) -> LongRecord {
        LongRecord {
            unit_id: unit.to_string(),
            period,
            observed: y,
            expected: mu,
        }
    }

    #[test]
    fn vst_examples() {
        let (z, w) = poisson_vst(&rec("a", 1, 4.0, 4.0)).unwrap();
        assert_eq!((z, w), (1.0, 16.0));
        let (z, w) = poisson_vst(&rec("a", 1, 0.0, 2.5)).unwrap();
        assert_eq!((z, w), (0.0, 10.0));
        let (z, w) = poisson_vst(&rec("a", 1, 9.0, 4.0)).unwrap();
        assert_eq!((z, w), (1.5, 16.0));
        assert!(poisson_vst(&rec("a", 1, 1.0, 0.0)).is_err());
        assert!(poisson_vst(&rec("a", 1, -1.0, 1.0)).is_err());
    }

    #[test]
    fn vst_exactness_invariants() {
        for mu in [0.3, 1.0, 7.25, 1234.5] {
            for y in [0.0, 1.0, 5.0, 99.0] {
                let (z, w) = poisson_vst(&rec("u", 0, y, mu)).unwrap();
                assert_eq!(w, 4.0 * mu);
                if y > 0.0 {
                    assert!((z * z * mu - y).abs() / y < 1e-12);
                } else {
                    assert_eq!(z, 0.0);
                }
            }
        }
    }

    #[test]
    fn aggregate_weighted_mean_example() {
        // (z, w) = (1, 4), (2, 12): T = (4 + 24) / 16 = 1.75.
        // z = sqrt(y/mu), w = 4 mu: mu = 1, y = 1 and mu = 3, y = 12.
        let records = vec![rec("u", 1, 1.0, 1.0), rec("u", 2, 12.0, 3.0)];
        let agg = aggregate_window(&records, Window::new(1, 2).unwrap(), true).unwrap();
        assert_eq!(agg.stats.len(), 1);
        assert_eq!(agg.stats[0].t_stat, 1.75);
        assert_eq!(agg.stats[0].w_total, 16.0);
        assert_eq!(agg.stats[0].obs_total, 13.0);
        assert_eq!(agg.stats[0].exp_total, 4.0);
    }

    #[test]
    fn aggregate_rejects_duplicates_and_drops_incomplete() {
        let dup = vec![rec("u", 1, 1.0, 1.0), rec("u", 1, 2.0, 1.0)];
        assert!(aggregate_window(&dup, Window::new(1, 2).unwrap(), false).is_err());

        let records = vec![
            rec("a", 1, 1.0, 1.0),
            rec("a", 2, 1.0, 1.0),
            rec("b", 1, 1.0, 1.0), // missing period 2
            rec("c", 5, 1.0, 1.0), // outside the window entirely
        ];
        let strict = aggregate_window(&records, Window::new(1, 2).unwrap(), true).unwrap();
        assert_eq!(strict.stats.len(), 1);
        assert_eq!(strict.dropped_units, 2);
        let lax = aggregate_window(&records, Window::new(1, 2).unwrap(), false).unwrap();
        assert_eq!(lax.stats.len(), 2);
        assert_eq!(lax.dropped_units, 1);
    }

    #[test]
    fn single_record_window_passes_through() {
        let records = vec![rec("u", 3, 9.0, 4.0)];
        let agg = aggregate_window(&records, Window::new(3, 3).unwrap(), true).unwrap();
        assert_eq!(agg.stats[0].t_stat, 1.5);
        assert_eq!(agg.stats[0].n_periods, 1);
    }

    #[test]
    fn grade_sizes_examples() {
        let scheme = GradeScheme::default();
        assert_eq!(
            largest_remainder_sizes(100, &scheme.proportions),
            vec![22, 30, 35, 9, 4]
        );
        for n in [5usize, 10, 17, 1003] {
            let sizes = largest_remainder_sizes(n, &scheme.proportions);
            assert_eq!(sizes.iter().sum::<usize>(), n);
            for (size, p) in sizes.iter().zip(&scheme.proportions) {
                assert!((*size as f64 - p * n as f64).abs() < 1.0);
            }
        }
    }

    #[test]
    fn grades_are_contiguous_blocks() {
        let units: Vec<String> = (0..10).map(|i| format!("u{i}")).collect();
        let graded = assign_grades(&units, &GradeScheme::default()).unwrap();
        assert_eq!(graded.len(), 10);
        // Best-ranked unit gets the top label; labels never improve down the list.
        assert_eq!(graded[0].1, "A");
        let scheme = GradeScheme::default();
        let pos = |l: &str| scheme.labels.iter().position(|x| x == l).unwrap();
        for pair in graded.windows(2) {
            assert!(pos(&pair[0].1) <= pos(&pair[1].1));
        }
    }

    #[test]
    fn transition_matrix_examples() {
        let labels: Vec<String> = ["A", "B"].iter().map(|s| s.to_string()).collect();
        let constant = vec![vec!["A".to_string(); 4], vec!["B".to_string(); 4]];
        let tm = transition_matrix(&constant, &labels).unwrap();
        assert_eq!(tm.rows, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(tm.uniform_rows, vec![false, false]);

        let alternating = vec![
            vec!["A".to_string(), "B".to_string()],
            vec!["B".to_string(), "A".to_string()],
        ];
        let tm = transition_matrix(&alternating, &labels).unwrap();
        assert_eq!(tm.rows, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);

        let one_sided = vec![vec!["A".to_string(), "A".to_string()]];
        let tm = transition_matrix(&one_sided, &labels).unwrap();
        assert!(tm.uniform_rows[1]);
        for row in &tm.rows {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        let bad = vec![vec!["Z".to_string(), "A".to_string()]];
        assert!(transition_matrix(&bad, &labels).is_err());
    }

    #[test]
    fn transition_matrix_recovers_known_chain() {
        use rand::distributions::Distribution;
        use rand::SeedableRng;
        let labels: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let truth = [[0.7, 0.2, 0.1], [0.3, 0.5, 0.2], [0.1, 0.3, 0.6]];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut histories = Vec::new();
        for _ in 0..5000 {
            let mut state = 0usize;
            let mut h = vec![labels[0].clone()];
            for _ in 0..4 {
                let d = rand::distributions::WeightedIndex::new(truth[state]).unwrap();
                state = d.sample(&mut rng);
                h.push(labels[state].clone());
            }
            histories.push(h);
        }
        let tm = transition_matrix(&histories, &labels).unwrap();
        for (i, (est_row, true_row)) in tm.rows.iter().zip(&truth).enumerate() {
            for (j, (est, truth)) in est_row.iter().zip(true_row).enumerate() {
                assert!(
                    (est - truth).abs() < 0.02,
                    "entry ({i},{j}): {est} vs {truth}"
                );
            }
        }
    }

    #[test]
    fn ar1_descriptive_helper() {
        assert_eq!(ar1_coefficient(&[1.0, 2.0]), None);
        assert_eq!(ar1_coefficient(&[1.0, 1.0, 1.0, 1.0]), None);
        let trending = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert!(ar1_coefficient(&trending).unwrap() > 0.4);
    }

    fn synthetic_stats(n: usize, seed: u64) -> Vec<UnitStat> {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let theta: f64 = if i % 10 == 0 { 1.5 } else { 1.0 };
                let w: f64 = rng.gen_range(20.0..80.0);
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let t = theta + z / w.sqrt();
                UnitStat {
                    unit_id: format!("u{i:04}"),
                    t_stat: t,
                    w_total: w,
                    n_periods: 3,
                    obs_total: (t * t * w / 4.0).max(0.0),
                    exp_total: w / 4.0,
                }
            })
            .collect()
    }

    #[test]
    fn rank_units_refuses_small_samples() {
        let stats = synthetic_stats(9, 1);
        let cfg = SelectionConfig::new(0.1, None, Tail::Upper).unwrap();
        assert!(rank_units(
            &stats,
            RankRule::Tp,
            &cfg,
            &FitOptions::study_default(),
            false
        )
        .is_err());
    }

    #[test]
    fn rank_units_produces_consistent_report() {
        let stats = synthetic_stats(300, 2);
        let cfg = SelectionConfig::new(0.1, Some(0.2), Tail::Upper).unwrap();
        let opts = FitOptions::study_default();
        for rule in [
            RankRule::Tp,
            RankRule::Pm,
            RankRule::Mle,
            RankRule::PoissonMle,
            RankRule::Pvalue,
            RankRule::JamesStein,
            RankRule::EfronMorris,
        ] {
            let report = rank_units(&stats, rule, &cfg, &opts, false).unwrap();
            assert_eq!(report.units.len(), stats.len());
            assert!(report.n_selected <= (0.1f64 * 300.0).ceil() as usize);
            // Ranks are 1..n and selected units form a prefix of the ranking.
            for (i, u) in report.units.iter().enumerate() {
                assert_eq!(u.rank, i + 1);
            }
            let first_unselected = report.units.iter().position(|u| !u.selected);
            if let Some(k) = first_unselected {
                assert!(report.units[k..].iter().all(|u| !u.selected));
                assert_eq!(k, report.n_selected);
            }
        }
    }

    #[test]
    fn homogeneous_precision_rules_select_identically() {
        // With equal weights every monotone score induces the same order, so
        // all rules select the same capacity set.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let stats: Vec<UnitStat> = (0..200)
            .map(|i| {
                let t: f64 = rng.gen_range(0.5..1.5);
                UnitStat {
                    unit_id: format!("u{i:03}"),
                    t_stat: t,
                    w_total: 36.0,
                    n_periods: 3,
                    obs_total: t * t * 9.0,
                    exp_total: 9.0,
                }
            })
            .collect();
        let cfg = SelectionConfig::new(0.1, None, Tail::Upper).unwrap();
        let opts = FitOptions::study_default();
        let baseline: Vec<String> = rank_units(&stats, RankRule::Tp, &cfg, &opts, false)
            .unwrap()
            .units
            .into_iter()
            .filter(|u| u.selected)
            .map(|u| u.unit_id)
            .collect();
        for rule in [
            RankRule::Pm,
            RankRule::Mle,
            RankRule::PoissonMle,
            RankRule::Pvalue,
            RankRule::JamesStein,
            RankRule::EfronMorris,
        ] {
            let sel: Vec<String> = rank_units(&stats, rule, &cfg, &opts, false)
                .unwrap()
                .units
                .into_iter()
                .filter(|u| u.selected)
                .map(|u| u.unit_id)
                .collect();
            assert_eq!(sel, baseline, "rule {:?} selected a different set", rule);
        }
    }

    #[test]
    fn lower_tail_mirrors_upper_tail_on_negated_data() {
        let stats = synthetic_stats(200, 4);
        let mut negated = stats.clone();
        for s in &mut negated {
            s.t_stat = -s.t_stat;
        }
        let opts = FitOptions::study_default();
        let upper = SelectionConfig::new(0.1, None, Tail::Upper).unwrap();
        let lower = SelectionConfig::new(0.1, None, Tail::Lower).unwrap();
        let a: Vec<String> = rank_units(&stats, RankRule::Mle, &upper, &opts, false)
            .unwrap()
            .units
            .into_iter()
            .filter(|u| u.selected)
            .map(|u| u.unit_id)
            .collect();
        let b: Vec<String> = rank_units(&negated, RankRule::Mle, &lower, &opts, false)
            .unwrap()
            .units
            .into_iter()
            .filter(|u| u.selected)
            .map(|u| u.unit_id)
            .collect();
        let sa: std::collections::BTreeSet<_> = a.into_iter().collect();
        let sb: std::collections::BTreeSet<_> = b.into_iter().collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn ghat_roundtrip() {
        let g = DiscreteMixing::new(vec![-1.0, 0.5, 5.0], vec![0.85, 0.1, 0.05]).unwrap();
        let file = GhatFile::from_discrete(&g, Some(0.3));
        let text = serde_json::to_string(&file).unwrap();
        let back: GhatFile = serde_json::from_str(&text).unwrap();
        let g2 = back.to_discrete().unwrap();
        assert_eq!(g.atoms(), g2.atoms());
        assert_eq!(g.weights(), g2.weights());
        assert_eq!(back.smoothed.unwrap().bandwidth, 0.3);
    }

    #[test]
    fn window_parsing() {
        let w = Window::parse("2004:2006").unwrap();
        assert_eq!((w.start, w.end), (2004, 2006));
        assert_eq!(w.len(), 3);
        assert!(Window::parse("2006:2004").is_err());
        assert!(Window::parse("2004-2006").is_err());
        assert!(matches!(
            Window::parse("x:y").unwrap_err(),
            RankioError::Usage(_)
        ));
    }
}
