//! Dual-constraint selection: pick at most a proportion `alpha` of units
//! (capacity) while keeping the marginal false discovery rate of the selected
//! set below `gamma`. Both constraints reduce to thresholding the posterior
//! tail probability; the binding threshold is the larger of the two.
//!
//! Thresholds come in two flavors: empirical (plug-in order statistics over
//! the observed scores) and oracle (population integrals under known mixing
//! and noise-scale distributions).

use serde::{Deserialize, Serialize};

use crate::error::{RankselError, Result};
use crate::mixture::{DiscreteMixing, KnownVarObs};
use crate::posterior::{lower_tail_prob_known_var, norm_cdf, tail_prob_known_var};

/// Which tail of the quality distribution to select.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Tail {
    #[default]
    Upper,
    Lower,
}

/// Capacity level `alpha`, optional FDR level `gamma`, and tail direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub alpha: f64,
    /// `None` disables the FDR constraint (capacity-only selection).
    pub gamma: Option<f64>,
    pub tail: Tail,
}

impl SelectionConfig {
    pub fn new(alpha: f64, gamma: Option<f64>, tail: Tail) -> Result<Self> {
        let cfg = Self { alpha, gamma, tail };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn capacity_only(alpha: f64) -> Result<Self> {
        Self::new(alpha, None, Tail::Upper)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RankselError::Domain(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(RankselError::Domain(format!(
                    "gamma must lie in (0,1), got {g}"
                )));
            }
            // The FDR level is only attainable when gamma < 1 - alpha.
            if g >= 1.0 - self.alpha {
                return Err(RankselError::Domain(format!(
                    "gamma = {g} must be below 1 - alpha = {}",
                    1.0 - self.alpha
                )));
            }
        }
        Ok(())
    }

    /// Capacity head count for `n` units.
    pub fn capacity(&self, n: usize) -> usize {
        ((self.alpha * n as f64).ceil() as usize).min(n)
    }
}

/// Outcome of a selection run: the chosen index set and the thresholds that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    pub lambda_cap: f64,
    pub lambda_fdr: f64,
    pub lambda_star: f64,
    /// Plug-in FDR estimate: mean of `1 - v` over the selected set.
    pub est_fdr: f64,
    pub n_selected: usize,
}

/// Capacity threshold: the `ceil(alpha n)`-th largest score, so that
/// selecting scores at or above it admits at most `ceil(alpha n)` units
/// after deterministic tie-breaking.
pub fn empirical_capacity_threshold(v: &[f64], alpha: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(RankselError::Domain("empty score vector".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RankselError::Domain(format!("alpha {alpha} outside (0,1)")));
    }
    let k = ((alpha * v.len() as f64).ceil() as usize)
        .min(v.len())
        .max(1);
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[k - 1])
}

/// FDR threshold: the smallest observed score `t` such that the estimated
/// false discovery proportion of `{v_i >= t}`, `Q_n(t) = mean(1 - v_i)` over
/// that set, is at most `gamma`. Returns 1 when no candidate qualifies.
pub fn empirical_fdr_threshold(v: &[f64], gamma: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(RankselError::Domain("empty score vector".into()));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(RankselError::Domain(format!("gamma {gamma} outside (0,1)")));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Q_n is nonincreasing in t; walking down the sorted scores we keep the
    // deepest prefix (all ties included) that still satisfies the bound.
    let mut best: Option<f64> = None;
    let mut acc = 0.0;
    for (i, t) in sorted.iter().enumerate() {
        acc += 1.0 - t;
        // Only evaluate at the last element of a tie block so the selected
        // set {v >= t} matches the prefix exactly.
        if i + 1 < sorted.len() && sorted[i + 1] == *t {
            continue;
        }
        if acc / (i + 1) as f64 <= gamma {
            best = Some(*t);
        }
    }
    Ok(best.unwrap_or(1.0))
}

/// Exact `Q_n(t)` for a given threshold (used by the invariants).
pub fn empirical_fdp(v: &[f64], t: f64) -> f64 {
    let mut count = 0usize;
    let mut acc = 0.0;
    for &vi in v {
        if vi >= t {
            count += 1;
            acc += 1.0 - vi;
        }
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}

/// Thresholds the tail probabilities `v` under both constraints.
///
/// Ties at the threshold are broken deterministically (higher `v` first, then
/// lower input index) and the selection is truncated at the capacity bound.
pub fn select(v: &[f64], cfg: &SelectionConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    if v.is_empty() {
        return Err(RankselError::Domain("empty score vector".into()));
    }
    if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(RankselError::Domain(
            "tail probabilities must lie in [0,1]".into(),
        ));
    }
    let lambda_cap = empirical_capacity_threshold(v, cfg.alpha)?;
    let lambda_fdr = match cfg.gamma {
        Some(g) => empirical_fdr_threshold(v, g)?,
        None => 0.0,
    };
    let lambda_star = lambda_cap.max(lambda_fdr);
    let mut order: Vec<usize> = (0..v.len()).filter(|&i| v[i] >= lambda_star).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    order.truncate(cfg.capacity(v.len()));
    let mut selected = order;
    selected.sort_unstable();
    let est_fdr = if selected.is_empty() {
        0.0
    } else {
        selected.iter().map(|&i| 1.0 - v[i]).sum::<f64>() / selected.len() as f64
    };
    Ok(SelectionResult {
        n_selected: selected.len(),
        selected,
        lambda_cap,
        lambda_fdr,
        lambda_star,
        est_fdr,
    })
}

/// Selection for rules ranked by an arbitrary score (posterior mean, raw
/// estimate, p-value transform, ...). The capacity cutoff is the
/// `ceil(alpha n)`-th largest score; the FDR cutoff is the smallest score
/// whose induced set keeps `mean(1 - v) <= gamma`. The reported lambdas are
/// in score units.
pub fn select_by_score(
    scores: &[f64],
    v: &[f64],
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    cfg.validate()?;
    if scores.len() != v.len() || scores.is_empty() {
        return Err(RankselError::Domain(format!(
            "scores ({}) and tail probabilities ({}) must be nonempty and aligned",
            scores.len(),
            v.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(v[b].total_cmp(&v[a]))
            .then(a.cmp(&b))
    });
    let k = cfg.capacity(scores.len());
    let lambda_cap = scores[order[k - 1]];

    let lambda_fdr = match cfg.gamma {
        Some(g) => {
            let mut best = f64::INFINITY;
            let mut acc = 0.0;
            for (i, &idx) in order.iter().enumerate() {
                acc += 1.0 - v[idx];
                if i + 1 < order.len() && scores[order[i + 1]] == scores[idx] {
                    continue;
                }
                if acc / (i + 1) as f64 <= g {
                    best = scores[idx];
                }
            }
            best
        }
        None => f64::NEG_INFINITY,
    };
    let lambda_star = lambda_cap.max(lambda_fdr);
    let mut chosen: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| scores[i] >= lambda_star)
        .collect();
    chosen.truncate(k);
    chosen.sort_unstable();
    let est_fdr = if chosen.is_empty() {
        0.0
    } else {
        chosen.iter().map(|&i| 1.0 - v[i]).sum::<f64>() / chosen.len() as f64
    };
    Ok(SelectionResult {
        n_selected: chosen.len(),
        selected: chosen,
        lambda_cap,
        lambda_fdr,
        lambda_star,
        est_fdr,
    })
}

/// Identical thresholding mechanics for latent-variance tail probabilities;
/// kept as a distinct entry point because the panel score is not a monotone
/// transform of the observed mean.
pub fn select_panel(v: &[f64], cfg: &SelectionConfig) -> Result<SelectionResult> {
    select(v, cfg)
}

/// Tail probabilities for a batch of known-variance observations under the
/// configured direction: upper tail uses `P(theta >= theta_alpha | y)`, lower
/// tail `P(theta <= theta_{1-alpha} | y)` via the mirror reduction.
pub fn compute_v_known_var(
    observations: &[KnownVarObs],
    g: &DiscreteMixing,
    cfg: &SelectionConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    match cfg.tail {
        Tail::Upper => {
            let cutoff = g.upper_tail_cutoff(cfg.alpha)?;
            Ok(observations
                .iter()
                .map(|o| tail_prob_known_var(o, g, cutoff))
                .collect())
        }
        Tail::Lower => {
            let cutoff = g.lower_tail_cutoff(cfg.alpha)?;
            Ok(observations
                .iter()
                .map(|o| lower_tail_prob_known_var(o, g, cutoff))
                .collect())
        }
    }
}

/// Distribution of the known noise scale across units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SigmaDist {
    Fixed(f64),
    Discrete { points: Vec<f64>, weights: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
}

impl SigmaDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            SigmaDist::Fixed(s) => {
                if !(*s > 0.0 && s.is_finite()) {
                    return Err(RankselError::Domain(format!("sigma {s} must be positive")));
                }
            }
            SigmaDist::Discrete { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return Err(RankselError::Domain("bad discrete sigma support".into()));
                }
                if points.iter().any(|p| !(*p > 0.0)) || weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(RankselError::Domain(
                        "sigma support must be positive with nonnegative weights".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(RankselError::Domain(format!(
                        "sigma weights sum to {total}"
                    )));
                }
            }
            SigmaDist::Uniform { lo, hi } => {
                if !(*lo > 0.0 && hi > lo) {
                    return Err(RankselError::Domain(format!(
                        "uniform sigma range [{lo}, {hi}] invalid"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Quadrature representation: `(sigma, probability-weight)` pairs, exact
    /// for discrete supports and Gauss-Legendre of order 64 for the uniform.
    pub fn quadrature(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        Ok(match self {
            SigmaDist::Fixed(s) => vec![(*s, 1.0)],
            SigmaDist::Discrete { points, weights } => points
                .iter()
                .copied()
                .zip(weights.iter().copied())
                .collect(),
            SigmaDist::Uniform { lo, hi } => gauss_legendre(64)
                .into_iter()
                .map(|(x, w)| (0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * w))
                .collect(),
        })
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence. Weights sum to 2.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    let nf = n as f64;
    for i in 1..=n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
        if x.abs() > 1e-14 || 2 * i <= n {
            out.push((-x, w));
        }
    }
    out.truncate(n);
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// One point of a selection boundary in the observation space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub sigma: f64,
    /// Smallest observation selected at this noise scale; `+inf`/`-inf` when
    /// the threshold is never / always reached.
    pub t: f64,
    pub finite: bool,
}

/// Inverts a nondecreasing map `y -> score(y)` at level `lambda`:
/// the infimum of `{ y : score(y) >= lambda }`, bisected to 1e-10 in `y`.
/// Returns an infinite sentinel when the level is outside the score range.
pub fn invert_monotone(score: impl Fn(f64) -> f64, lambda: f64) -> (f64, bool) {
    const LIMIT: f64 = 1e9;
    let mut hi = 1.0;
    while score(hi) < lambda {
        hi *= 2.0;
        if hi > LIMIT {
            return (f64::INFINITY, false);
        }
    }
    let mut lo = -1.0;
    while score(lo) >= lambda {
        lo *= 2.0;
        if lo < -LIMIT {
            return (f64::NEG_INFINITY, false);
        }
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if score(mid) >= lambda {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (0.5 * (lo + hi), true)
}

/// Selection boundary `t(sigma)` at level `lambda` for a generic score
/// `v(y, sigma)` that is nondecreasing in `y`.
pub fn boundary_curve(
    v: impl Fn(f64, f64) -> f64,
    lambda: f64,
    sigma_grid: &[f64],
) -> Result<Vec<BoundaryPoint>> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(RankselError::Domain(format!(
            "lambda must lie in (0,1), got {lambda}"
        )));
    }
    Ok(sigma_grid
        .iter()
        .map(|&sigma| {
            let (t, finite) = invert_monotone(|y| v(y, sigma), lambda);
            BoundaryPoint { sigma, t, finite }
        })
        .collect())
}

/// Tail-probability boundary for a discrete mixing distribution.
pub fn boundary_curve_known_var(
    g: &DiscreteMixing,
    alpha: f64,
    lambda: f64,
    sigma_grid: &[f64],
) -> Result<Vec<BoundaryPoint>> {
    let cutoff = g.upper_tail_cutoff(alpha)?;
    boundary_curve(
        |y, sigma| tail_prob_known_var(&KnownVarObs::new(y, sigma).expect("grid obs"), g, cutoff),
        lambda,
        sigma_grid,
    )
}

/// Population selection rate, marginal FDR, and power of a boundary rule
/// `delta = 1{ Y >= t(sigma) }` under known `G` and `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationRates {
    pub sel_prob: f64,
    pub mfdr: f64,
    pub power: f64,
}

/// Integrates a boundary rule against `G x H`: exact sums over the atoms of
/// `G`, quadrature over `H`.
pub fn population_rates(
    g: &DiscreteMixing,
    h: &SigmaDist,
    theta_cutoff: f64,
    boundary: impl Fn(f64) -> f64,
) -> Result<PopulationRates> {
    let quad = h.quadrature()?;
    let mut sel = 0.0;
    let mut false_sel = 0.0;
    let mut true_sel = 0.0;
    let mut tail_mass = 0.0;
    for (a, w) in g.atoms().iter().zip(g.weights()) {
        if *a >= theta_cutoff {
            tail_mass += w;
        }
    }
    for &(sigma, hw) in &quad {
        let t = boundary(sigma);
        for (a, w) in g.atoms().iter().zip(g.weights()) {
            let p_sel = if t == f64::NEG_INFINITY {
                1.0
            } else if t == f64::INFINITY {
                0.0
            } else {
                1.0 - norm_cdf((t - a) / sigma)
            };
            let mass = hw * w * p_sel;
            sel += mass;
            if *a >= theta_cutoff {
                true_sel += mass;
            } else {
                false_sel += mass;
            }
        }
    }
    Ok(PopulationRates {
        sel_prob: sel,
        mfdr: if sel > 0.0 { false_sel / sel } else { 0.0 },
        power: if tail_mass > 0.0 {
            true_sel / tail_mass
        } else {
            0.0
        },
    })
}

/// Power of a boundary rule: `P(select, theta >= theta_alpha) / P(theta >= theta_alpha)`.
pub fn population_power(
    g: &DiscreteMixing,
    h: &SigmaDist,
    alpha: f64,
    boundary: impl Fn(f64) -> f64,
) -> Result<f64> {
    let cutoff = g.upper_tail_cutoff(alpha)?;
    Ok(population_rates(g, h, cutoff, boundary)?.power)
}

/// Oracle thresholds under known `G` and `H`, with flags marking levels that
/// hit the boundary of `(0,1)` because no interior root exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleThresholds {
    pub lambda_cap: f64,
    pub lambda_fdr: f64,
    pub lambda_star: f64,
    pub cap_at_boundary: bool,
    pub fdr_at_boundary: bool,
}

const LAMBDA_EPS: f64 = 1e-9;
const LAMBDA_TOL: f64 = 1e-8;

fn oracle_rates_at(
    g: &DiscreteMixing,
    h: &SigmaDist,
    cutoff: f64,
    lambda: f64,
) -> Result<PopulationRates> {
    let quad = h.quadrature()?;
    // Cache the per-sigma boundary once per lambda.
    let boundaries: Vec<(f64, f64)> = quad
        .iter()
        .map(|&(sigma, _)| {
            let (t, _) = invert_monotone(
                |y| tail_prob_known_var(&KnownVarObs::new(y, sigma).unwrap(), g, cutoff),
                lambda,
            );
            (sigma, t)
        })
        .collect();
    population_rates(g, h, cutoff, |sigma| {
        boundaries
            .iter()
            .find(|(s, _)| *s == sigma)
            .map(|(_, t)| *t)
            .unwrap_or(f64::INFINITY)
    })
}

/// Solves the population capacity and FDR equations for the tail-probability
/// rule by bisection over the threshold level.
pub fn oracle_thresholds_known_var(
    g: &DiscreteMixing,
    h: &SigmaDist,
    cfg: &SelectionConfig,
) -> Result<OracleThresholds> {
    cfg.validate()?;
    let (g, _mirrored) = match cfg.tail {
        Tail::Upper => (g.clone(), false),
        Tail::Lower => (g.mirrored(), true),
    };
    let cutoff = g.upper_tail_cutoff(cfg.alpha)?;

    // Selection probability is nonincreasing in lambda.
    let sel_at =
        |lambda: f64| -> Result<f64> { Ok(oracle_rates_at(&g, h, cutoff, lambda)?.sel_prob) };
    let (lambda_cap, cap_at_boundary) = solve_decreasing(&sel_at, cfg.alpha)?;

    let (lambda_fdr, fdr_at_boundary) = match cfg.gamma {
        Some(gamma) => {
            let mfdr_at =
                |lambda: f64| -> Result<f64> { Ok(oracle_rates_at(&g, h, cutoff, lambda)?.mfdr) };
            solve_decreasing(&mfdr_at, gamma)?
        }
        None => (0.0, false),
    };

    Ok(OracleThresholds {
        lambda_cap,
        lambda_fdr,
        lambda_star: lambda_cap.max(lambda_fdr),
        cap_at_boundary,
        fdr_at_boundary,
    })
}

/// The population FDR of the capacity-binding oracle rule; also the smallest
/// FDR level whose constraint is slack at that capacity (where the two
/// thresholds coincide).
pub fn oracle_capacity_mfdr(g: &DiscreteMixing, h: &SigmaDist, alpha: f64) -> Result<f64> {
    let cfg = SelectionConfig::capacity_only(alpha)?;
    let th = oracle_thresholds_known_var(g, h, &cfg)?;
    let cutoff = g.upper_tail_cutoff(alpha)?;
    Ok(oracle_rates_at(g, h, cutoff, th.lambda_cap)?.mfdr)
}

/// Bisection for `f(lambda) = target` with `f` nonincreasing on (0,1).
/// Returns the boundary level with a flag when no interior root exists.
fn solve_decreasing(f: &impl Fn(f64) -> Result<f64>, target: f64) -> Result<(f64, bool)> {
    let mut lo = LAMBDA_EPS;
    let mut hi = 1.0 - LAMBDA_EPS;
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo <= target {
        return Ok((lo, true));
    }
    if f_hi > target {
        return Ok((hi, true));
    }
    while hi - lo > LAMBDA_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), false))
}

/// Marginal FDR and FNR of the capacity-binding rule in the homogeneous-
/// variance model, with the observation-space cutoff `eta` solving
/// `P(Y >= eta) = alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfdrMfnr {
    pub mfdr: f64,
    pub mfnr: f64,
    pub eta: f64,
    /// True when no mixing mass lies strictly below the merit cutoff, making
    /// the FDR trivially 0 (or the problem otherwise degenerate).
    pub degenerate: bool,
}

pub fn mfdr_mfnr_homogeneous(g: &DiscreteMixing, sigma: f64, alpha: f64) -> Result<MfdrMfnr> {
    if !(sigma > 0.0) {
        return Err(RankselError::Domain(format!(
            "sigma {sigma} must be positive"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RankselError::Domain(format!("alpha {alpha} outside (0,1)")));
    }
    let theta_alpha = g.upper_tail_cutoff(alpha)?;
    // P(Y >= eta) is continuous and decreasing in eta; bisect.
    let sel_prob = |eta: f64| -> f64 {
        g.atoms()
            .iter()
            .zip(g.weights())
            .map(|(a, w)| w * (1.0 - norm_cdf((eta - a) / sigma)))
            .sum()
    };
    let mut lo = g.atoms()[0] - 40.0 * sigma;
    let mut hi = g.atoms()[g.len() - 1] + 40.0 * sigma;
    while hi - lo > 1e-12 * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if sel_prob(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eta = 0.5 * (lo + hi);
    let mut mfdr = 0.0;
    let mut mfnr = 0.0;
    let mut below_mass = 0.0;
    for (a, w) in g.atoms().iter().zip(g.weights()) {
        if *a < theta_alpha {
            below_mass += w;
            mfdr += w * norm_cdf((a - eta) / sigma);
        } else {
            mfnr += w * norm_cdf((eta - a) / sigma);
        }
    }
    mfdr /= alpha;
    mfnr /= 1.0 - alpha;
    Ok(MfdrMfnr {
        mfdr,
        mfnr,
        eta,
        degenerate: below_mass == 0.0,
    })
}
