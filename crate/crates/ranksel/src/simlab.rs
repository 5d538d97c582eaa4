//! Monte Carlo study harness: data-generating processes, the competing-rule
//! catalog, and a replication engine that aggregates power / FDR / selection
//! rate across seeded replications.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, LogNormal, Normal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};

use crate::error::{RankselError, Result};
use crate::mixture::{BivariateMixing, DiscreteMixing, KnownVarObs, PanelObs};
use crate::npmle::{fit_npmle_known_var, smooth_mixing, FitOptions};
use crate::posterior::{
    efron_morris_with, fit_gaussian_prior, linear_shrinkage_mean, nix_tail_prob, nix_update,
    norm_cdf, norm_quantile, post_mean_known_var, post_mean_panel, tail_prob_known_var,
    tail_prob_panel, GaussianPriorFit, NixHyper,
};
use crate::selection::{
    select, select_by_score, SelectionConfig, SelectionResult, SigmaDist, Tail,
};

/// Data-generating processes used in the study harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Dgp {
    /// Location mixture with a discretized Student-t mixing density on
    /// [-20, 20] and uniform noise scales on [0.5, 1.5].
    StudentT { df: f64, grid_points: usize },
    /// Three-atom mixing distribution (-1, 2, 5) with weights
    /// (0.85, 0.10, 0.05); noise scale uniform on [0.5, 4].
    Discrete3,
    /// Three-atom mixing distribution (-1, 0.5, 5) with the same weights and
    /// noise-scale law; the middle atom straddles a zero null.
    ZeroNull3,
    /// Gaussian mixing N(0, sigma_theta_sq) with uniform noise scales.
    NormalNormal {
        sigma_theta_sq: f64,
        sigma_lo: f64,
        sigma_hi: f64,
    },
    /// Conjugate panel model: (theta, sigma^2) from a normal-inverse-
    /// chi-squared prior, T repeated measurements per unit.
    Nix { hyper: NixHyper, t_count: u32 },
    /// Bivariate three-atom mixing over (theta, sigma^2):
    /// ((-1, 6), (4, 2), (5, 4)) with weights (0.85, 0.10, 0.05).
    BivariateDiscrete { t_count: u32 },
    /// Synthetic value-added stand-in: left-skewed continuous quality
    /// distribution with a two-component lognormal noise-scale law.
    TeacherVa,
}

const DISCRETE3_ATOMS: [f64; 3] = [-1.0, 2.0, 5.0];
const ZERONULL3_ATOMS: [f64; 3] = [-1.0, 0.5, 5.0];
const THREE_WEIGHTS: [f64; 3] = [0.85, 0.10, 0.05];
// Noise-scale atoms 6, 2, 4 stored as variances.
const BIVARIATE_ATOMS: [(f64, f64); 3] = [(-1.0, 36.0), (4.0, 4.0), (5.0, 16.0)];

// Left-skewed two-component normal quality law; continuous, so the upper
// tail cutoff is stable under plug-in estimation.
fn teacher_quality_density(x: f64) -> f64 {
    let core = (-0.5 * ((x - 0.02) / 0.12).powi(2)).exp() / 0.12;
    let weak = (-0.5 * ((x + 0.12) / 0.18).powi(2)).exp() / 0.18;
    0.8 * core + 0.2 * weak
}

impl Dgp {
    pub fn validate(&self) -> Result<()> {
        match self {
            Dgp::StudentT { df, grid_points } => {
                if !(*df > 0.0) || *grid_points < 3 {
                    return Err(RankselError::Domain(format!(
                        "StudentT needs positive df and >=3 grid points, got df={df}, {grid_points}"
                    )));
                }
            }
            Dgp::NormalNormal {
                sigma_theta_sq,
                sigma_lo,
                sigma_hi,
            } => {
                if !(*sigma_theta_sq > 0.0) || !(*sigma_lo > 0.0) || !(sigma_hi > sigma_lo) {
                    return Err(RankselError::Domain("bad NormalNormal parameters".into()));
                }
            }
            Dgp::Nix { t_count, .. } | Dgp::BivariateDiscrete { t_count } if *t_count < 4 => {
                return Err(RankselError::Domain("panel DGPs need T >= 4".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_panel(&self) -> bool {
        matches!(self, Dgp::Nix { .. } | Dgp::BivariateDiscrete { .. })
    }

    /// The true mixing distribution of theta for location-model variants
    /// (discretized where the truth is continuous).
    pub fn true_mixing(&self) -> Result<DiscreteMixing> {
        match self {
            Dgp::StudentT { df, grid_points } => {
                let t = StudentsT::new(0.0, 1.0, *df)
                    .map_err(|e| RankselError::Domain(format!("bad df: {e}")))?;
                DiscreteMixing::from_density(-20.0, 20.0, *grid_points, |x| t.pdf(x))
            }
            Dgp::Discrete3 => DiscreteMixing::new(DISCRETE3_ATOMS.to_vec(), THREE_WEIGHTS.to_vec()),
            Dgp::ZeroNull3 => DiscreteMixing::new(ZERONULL3_ATOMS.to_vec(), THREE_WEIGHTS.to_vec()),
            Dgp::NormalNormal { sigma_theta_sq, .. } => {
                DiscreteMixing::gaussian_grid(0.0, sigma_theta_sq.sqrt(), 8.0, 801)
            }
            Dgp::TeacherVa => {
                DiscreteMixing::from_density(-0.7, 0.55, 201, teacher_quality_density)
            }
            _ => Err(RankselError::Domain(
                "panel DGP has no univariate mixing distribution".into(),
            )),
        }
    }

    /// The true bivariate mixing distribution for panel variants with an
    /// atomic truth.
    pub fn true_bivariate(&self) -> Result<BivariateMixing> {
        match self {
            Dgp::BivariateDiscrete { .. } => {
                BivariateMixing::new(BIVARIATE_ATOMS.to_vec(), THREE_WEIGHTS.to_vec())
            }
            _ => Err(RankselError::Domain(
                "no discrete bivariate mixing for this DGP".into(),
            )),
        }
    }

    /// The noise-scale distribution for location-model variants that have a
    /// quadrature-friendly representation.
    pub fn sigma_dist(&self) -> Result<SigmaDist> {
        match self {
            Dgp::StudentT { .. } => Ok(SigmaDist::Uniform { lo: 0.5, hi: 1.5 }),
            Dgp::Discrete3 | Dgp::ZeroNull3 => Ok(SigmaDist::Uniform { lo: 0.5, hi: 4.0 }),
            Dgp::NormalNormal {
                sigma_lo, sigma_hi, ..
            } => Ok(SigmaDist::Uniform {
                lo: *sigma_lo,
                hi: *sigma_hi,
            }),
            _ => Err(RankselError::Domain(
                "no closed-form sigma distribution for this DGP".into(),
            )),
        }
    }

    /// The merit cutoff defining the true top-alpha set.
    pub fn theta_cutoff(&self, alpha: f64) -> Result<f64> {
        match self {
            Dgp::NormalNormal { sigma_theta_sq, .. } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(RankselError::Domain(format!("alpha {alpha} outside (0,1)")));
                }
                Ok(sigma_theta_sq.sqrt() * norm_quantile(1.0 - alpha))
            }
            Dgp::Nix { hyper, .. } => hyper.theta_cutoff(alpha),
            Dgp::BivariateDiscrete { .. } => self.true_bivariate()?.upper_tail_cutoff(alpha),
            _ => self.true_mixing()?.upper_tail_cutoff(alpha),
        }
    }
}

/// One replication's latent truth and observed data.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleData {
    KnownVar(Vec<KnownVarObs>),
    Panel(Vec<PanelObs>),
}

/// Draws `n` units from the DGP; the stream is derived from `(seed, rep)` so
/// replications are independent and schedule-invariant.
pub fn sample_dgp(dgp: &Dgp, n: usize, seed: u64) -> Result<(Vec<f64>, SampleData)> {
    sample_dgp_rep(dgp, n, seed, 0)
}

pub fn sample_dgp_rep(dgp: &Dgp, n: usize, seed: u64, rep: u64) -> Result<(Vec<f64>, SampleData)> {
    dgp.validate()?;
    if n == 0 {
        return Err(RankselError::Domain("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    let std = Normal::new(0.0, 1.0).unwrap();
    match dgp {
        Dgp::StudentT { .. } | Dgp::Discrete3 | Dgp::ZeroNull3 | Dgp::TeacherVa => {
            let g = dgp.true_mixing()?;
            let idx = WeightedIndex::new(g.weights())
                .map_err(|e| RankselError::Domain(format!("bad weights: {e}")))?;
            let mut theta = Vec::with_capacity(n);
            let mut obs = Vec::with_capacity(n);
            for _ in 0..n {
                let th = g.atoms()[idx.sample(&mut rng)];
                let sigma = sample_sigma(dgp, &mut rng)?;
                let y = th + sigma * std.sample(&mut rng);
                theta.push(th);
                obs.push(KnownVarObs::new(y, sigma)?);
            }
            Ok((theta, SampleData::KnownVar(obs)))
        }
        Dgp::NormalNormal { sigma_theta_sq, .. } => {
            let prior = Normal::new(0.0, sigma_theta_sq.sqrt()).unwrap();
            let mut theta = Vec::with_capacity(n);
            let mut obs = Vec::with_capacity(n);
            for _ in 0..n {
                let th = prior.sample(&mut rng);
                let sigma = sample_sigma(dgp, &mut rng)?;
                let y = th + sigma * std.sample(&mut rng);
                theta.push(th);
                obs.push(KnownVarObs::new(y, sigma)?);
            }
            Ok((theta, SampleData::KnownVar(obs)))
        }
        Dgp::Nix { hyper, t_count } => {
            let chi = ChiSquared::new(hyper.nu0).unwrap();
            let chi_s = ChiSquared::new(*t_count as f64 - 1.0).unwrap();
            let mut theta = Vec::with_capacity(n);
            let mut obs = Vec::with_capacity(n);
            for _ in 0..n {
                let sigma_sq = hyper.nu0 * hyper.sigma0_sq / chi.sample(&mut rng);
                let th = hyper.theta0 + (sigma_sq / hyper.kappa0).sqrt() * std.sample(&mut rng);
                let ybar = th + (sigma_sq / *t_count as f64).sqrt() * std.sample(&mut rng);
                let s = sigma_sq * chi_s.sample(&mut rng) / (*t_count as f64 - 1.0);
                theta.push(th);
                obs.push(PanelObs::new(ybar, s, *t_count)?);
            }
            Ok((theta, SampleData::Panel(obs)))
        }
        Dgp::BivariateDiscrete { t_count } => {
            let g = dgp.true_bivariate()?;
            let idx = WeightedIndex::new(g.weights())
                .map_err(|e| RankselError::Domain(format!("bad weights: {e}")))?;
            let chi_s = ChiSquared::new(*t_count as f64 - 1.0).unwrap();
            let mut theta = Vec::with_capacity(n);
            let mut obs = Vec::with_capacity(n);
            for _ in 0..n {
                let (th, sigma_sq) = g.atoms()[idx.sample(&mut rng)];
                let ybar = th + (sigma_sq / *t_count as f64).sqrt() * std.sample(&mut rng);
                let s = sigma_sq * chi_s.sample(&mut rng) / (*t_count as f64 - 1.0);
                theta.push(th);
                obs.push(PanelObs::new(ybar, s, *t_count)?);
            }
            Ok((theta, SampleData::Panel(obs)))
        }
    }
}

fn sample_sigma(dgp: &Dgp, rng: &mut ChaCha8Rng) -> Result<f64> {
    Ok(match dgp {
        Dgp::StudentT { .. } => rng.sample(Uniform::new(0.5, 1.5)),
        Dgp::Discrete3 | Dgp::ZeroNull3 => rng.sample(Uniform::new(0.5, 4.0)),
        Dgp::NormalNormal {
            sigma_lo, sigma_hi, ..
        } => rng.sample(Uniform::new(*sigma_lo, *sigma_hi)),
        Dgp::TeacherVa => {
            // Two-component lognormal scale mixture: mostly tight scales with
            // a noisier minority.
            if rng.gen::<f64>() < 0.7 {
                rng.sample(LogNormal::new(0.05f64.ln(), 0.25).unwrap())
            } else {
                rng.sample(LogNormal::new(0.10f64.ln(), 0.30).unwrap())
            }
        }
        _ => {
            return Err(RankselError::Domain(
                "panel DGP draws sigma jointly with theta".into(),
            ))
        }
    })
}

/// Exact counting metrics for one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub power: f64,
    pub fdp: f64,
    pub sel_prop: f64,
}

/// Power = selected-and-true over true; FDP = selected-and-false over
/// selected; both 0 for an empty selection.
pub fn evaluate(
    selected: &[usize],
    theta: &[f64],
    theta_alpha: f64,
    tail: Tail,
) -> Result<Metrics> {
    let is_true = |th: f64| match tail {
        Tail::Upper => th >= theta_alpha,
        Tail::Lower => th <= theta_alpha,
    };
    let mut true_total = 0usize;
    for &th in theta {
        if is_true(th) {
            true_total += 1;
        }
    }
    let mut hits = 0usize;
    for &i in selected {
        if i >= theta.len() {
            return Err(RankselError::Domain(format!("index {i} out of range")));
        }
        if is_true(theta[i]) {
            hits += 1;
        }
    }
    let n_sel = selected.len();
    Ok(Metrics {
        power: if true_total > 0 {
            hits as f64 / true_total as f64
        } else {
            0.0
        },
        fdp: if n_sel > 0 {
            (n_sel - hits) as f64 / n_sel as f64
        } else {
            0.0
        },
        sel_prop: n_sel as f64 / theta.len() as f64,
    })
}

/// The competing selection rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    /// Oracle tail probability: v under the true mixing distribution.
    Otp,
    /// Oracle posterior mean, thresholded by rank.
    Opm,
    /// Tail probability under the smoothed NPMLE fit.
    KwsTp,
    /// Posterior mean under the smoothed NPMLE fit.
    KwsPm,
    /// Linear posterior mean from a marginal-MLE Gaussian prior.
    Lpm,
    /// Moment-based (James-Stein style) shrinkage rule.
    Em,
    /// Raw maximum likelihood estimates.
    Mle,
    /// One-sided p-value ordering against the merit-cutoff null.
    Pval,
    /// Posterior mean under a moment-fitted conjugate panel prior.
    NixPm,
    /// Tail probability under a moment-fitted conjugate panel prior.
    NixTp,
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::Otp => "OTP",
            Rule::Opm => "OPM",
            Rule::KwsTp => "KWsTP",
            Rule::KwsPm => "KWsPM",
            Rule::Lpm => "LPM",
            Rule::Em => "EM",
            Rule::Mle => "MLE",
            Rule::Pval => "PVAL",
            Rule::NixPm => "NIX-PM",
            Rule::NixTp => "NIX-TP",
        }
    }

    pub fn from_name(name: &str) -> Result<Rule> {
        rule_catalog()
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| RankselError::Domain(format!("unknown rule name: {name}")))
    }

    fn needs_npmle(&self) -> bool {
        matches!(self, Rule::KwsTp | Rule::KwsPm)
    }

    fn needs_gaussian_fit(&self) -> bool {
        matches!(self, Rule::Lpm | Rule::Em)
    }

    fn needs_nix_fit(&self) -> bool {
        matches!(self, Rule::NixPm | Rule::NixTp)
    }
}

/// Every rule, in catalog order.
pub fn rule_catalog() -> Vec<Rule> {
    vec![
        Rule::Otp,
        Rule::Opm,
        Rule::KwsTp,
        Rule::KwsPm,
        Rule::Lpm,
        Rule::Em,
        Rule::Mle,
        Rule::Pval,
        Rule::NixPm,
        Rule::NixTp,
    ]
}

/// Aggregated performance of one rule at one `(alpha, gamma)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfRow {
    pub rule: String,
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub power: f64,
    pub fdr: f64,
    pub sel_prop: f64,
    pub se_power: f64,
    pub se_fdr: f64,
    pub replications: usize,
}

/// Per-replication fitted objects, shared by all rules and configs.
pub struct RepFits {
    pub theta: Vec<f64>,
    pub data: SampleData,
    pub smoothed_g: Option<DiscreteMixing>,
    pub gaussian: Option<GaussianPriorFit>,
    pub nix: Option<NixHyper>,
}

pub fn prepare_rep(
    dgp: &Dgp,
    rules: &[Rule],
    n: usize,
    seed: u64,
    rep: u64,
    fit_opts: &FitOptions,
) -> Result<RepFits> {
    let (theta, data) = sample_dgp_rep(dgp, n, seed, rep)?;
    let mut fits = RepFits {
        theta,
        data,
        smoothed_g: None,
        gaussian: None,
        nix: None,
    };
    match &fits.data {
        SampleData::KnownVar(obs) => {
            if rules.iter().any(|r| r.needs_npmle()) {
                let fit = fit_npmle_known_var(obs, fit_opts)?;
                // Shrink the bandwidth with sample size so the plug-in tail
                // probabilities converge to their oracle counterparts.
                let h = crate::npmle::default_bandwidth(&fit.mixing) * (n as f64).powf(-1.0 / 7.0);
                let smoothed = smooth_mixing(&fit.mixing, Some(h))?;
                fits.smoothed_g = Some(smoothed.to_discrete().condensed(400));
            }
            if rules
                .iter()
                .any(|r| r.needs_gaussian_fit() || *r == Rule::Em)
            {
                fits.gaussian = Some(fit_gaussian_prior(obs)?);
            }
        }
        SampleData::Panel(obs) => {
            if rules.iter().any(|r| r.needs_nix_fit()) {
                fits.nix = Some(NixHyper::from_moments(obs)?);
            }
        }
    }
    Ok(fits)
}

/// Scores and tail probabilities for one rule on one replication.
fn scores_and_v(dgp: &Dgp, fits: &RepFits, rule: Rule, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    match &fits.data {
        SampleData::KnownVar(obs) => {
            let true_g = dgp.true_mixing()?;
            let true_cut = dgp.theta_cutoff(alpha)?;
            let v_true = || -> Vec<f64> {
                obs.iter()
                    .map(|o| tail_prob_known_var(o, &true_g, true_cut))
                    .collect()
            };
            match rule {
                Rule::Otp => {
                    let v = v_true();
                    Ok((v.clone(), v))
                }
                Rule::Opm => {
                    let scores = obs
                        .iter()
                        .map(|o| post_mean_known_var(o, &true_g))
                        .collect();
                    Ok((scores, v_true()))
                }
                Rule::KwsTp | Rule::KwsPm => {
                    let g = fits
                        .smoothed_g
                        .as_ref()
                        .ok_or_else(|| RankselError::Domain("missing fitted mixing".into()))?;
                    let cut = g.upper_tail_cutoff(alpha)?;
                    let v: Vec<f64> = obs.iter().map(|o| tail_prob_known_var(o, g, cut)).collect();
                    if rule == Rule::KwsTp {
                        Ok((v.clone(), v))
                    } else {
                        let scores = obs.iter().map(|o| post_mean_known_var(o, g)).collect();
                        Ok((scores, v))
                    }
                }
                Rule::Lpm | Rule::Em => {
                    let prior = fits
                        .gaussian
                        .as_ref()
                        .ok_or_else(|| RankselError::Domain("missing Gaussian fit".into()))?;
                    let cut = crate::posterior::gaussian_prior_cutoff(prior, alpha)?;
                    let v: Vec<f64> = obs
                        .iter()
                        .map(|o| crate::posterior::gaussian_prior_tail_prob(o, prior, cut))
                        .collect();
                    let scores = if rule == Rule::Lpm {
                        obs.iter()
                            .map(|o| linear_shrinkage_mean(o, prior))
                            .collect()
                    } else {
                        efron_morris_with(prior, obs)?
                    };
                    Ok((scores, v))
                }
                Rule::Mle => Ok((obs.iter().map(|o| o.y()).collect(), v_true())),
                Rule::Pval => {
                    // Larger score = smaller one-sided p-value against
                    // H0: theta <= theta_alpha.
                    let scores = obs
                        .iter()
                        .map(|o| norm_cdf((o.y() - true_cut) / o.sigma()))
                        .collect();
                    Ok((scores, v_true()))
                }
                Rule::NixPm | Rule::NixTp => Err(RankselError::Domain(
                    "conjugate panel rules need panel data".into(),
                )),
            }
        }
        SampleData::Panel(obs) => {
            let true_cut = dgp.theta_cutoff(alpha)?;
            let v_true: Vec<f64> = match dgp {
                Dgp::BivariateDiscrete { .. } => {
                    let g = dgp.true_bivariate()?;
                    obs.iter()
                        .map(|o| tail_prob_panel(o, &g, true_cut))
                        .collect()
                }
                Dgp::Nix { hyper, .. } => obs
                    .iter()
                    .map(|o| nix_tail_prob(&nix_update(hyper, o), true_cut))
                    .collect::<Result<Vec<f64>>>()?,
                _ => {
                    return Err(RankselError::Domain(
                        "panel data from a non-panel DGP".into(),
                    ))
                }
            };
            match rule {
                Rule::Otp => Ok((v_true.clone(), v_true)),
                Rule::Opm => {
                    let scores: Vec<f64> = match dgp {
                        Dgp::BivariateDiscrete { .. } => {
                            let g = dgp.true_bivariate()?;
                            obs.iter().map(|o| post_mean_panel(o, &g)).collect()
                        }
                        Dgp::Nix { hyper, .. } => {
                            obs.iter().map(|o| nix_update(hyper, o).theta_t).collect()
                        }
                        _ => unreachable!(),
                    };
                    Ok((scores, v_true))
                }
                Rule::Mle => Ok((obs.iter().map(|o| o.ybar()).collect(), v_true)),
                Rule::Pval => {
                    // One-sided t-test score against H0: theta <= theta_alpha.
                    let scores = obs
                        .iter()
                        .map(|o| {
                            let se = (o.s() / o.t_count() as f64).sqrt().max(1e-12);
                            let stat = (o.ybar() - true_cut) / se;
                            let t = StudentsT::new(0.0, 1.0, o.t_count() as f64 - 1.0).unwrap();
                            t.cdf(stat)
                        })
                        .collect();
                    Ok((scores, v_true))
                }
                Rule::NixPm | Rule::NixTp => {
                    let hyper = fits
                        .nix
                        .as_ref()
                        .ok_or_else(|| RankselError::Domain("missing conjugate fit".into()))?;
                    let cut = hyper.theta_cutoff(alpha)?;
                    let posts: Vec<_> = obs.iter().map(|o| nix_update(hyper, o)).collect();
                    let v = posts
                        .iter()
                        .map(|p| nix_tail_prob(p, cut))
                        .collect::<Result<Vec<f64>>>()?;
                    if rule == Rule::NixTp {
                        Ok((v.clone(), v))
                    } else {
                        Ok((posts.iter().map(|p| p.theta_t).collect(), v))
                    }
                }
                _ => Err(RankselError::Domain(format!(
                    "rule {} is not defined for panel data",
                    rule.name()
                ))),
            }
        }
    }
}

/// Runs one rule on an already-sampled replication.
pub fn run_rule(
    dgp: &Dgp,
    fits: &RepFits,
    rule: Rule,
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    let (scores, v) = scores_and_v(dgp, fits, rule, cfg.alpha)?;
    if rule == Rule::Otp || rule == Rule::KwsTp || rule == Rule::NixTp {
        select(&v, cfg)
    } else {
        select_by_score(&scores, &v, cfg)
    }
}

/// Full study: cross product of rules, capacity levels, and FDR levels over
/// `reps` replications of size `n`. Deterministic under `seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_study(
    dgp: &Dgp,
    rules: &[Rule],
    alphas: &[f64],
    gammas: &[Option<f64>],
    reps: usize,
    n: usize,
    seed: u64,
    fit_opts: &FitOptions,
) -> Result<Vec<PerfRow>> {
    if rules.is_empty() || alphas.is_empty() || gammas.is_empty() || reps == 0 {
        return Err(RankselError::Domain("empty study dimensions".into()));
    }
    let mut cells: Vec<(Rule, f64, Option<f64>, Vec<Metrics>)> = Vec::new();
    for &rule in rules {
        for &alpha in alphas {
            for &gamma in gammas {
                SelectionConfig::new(alpha, gamma, Tail::Upper)?;
                cells.push((rule, alpha, gamma, Vec::with_capacity(reps)));
            }
        }
    }
    for rep in 0..reps {
        let fits = prepare_rep(dgp, rules, n, seed, rep as u64, fit_opts)
            .map_err(|e| RankselError::Domain(format!("replication {rep} failed: {e}")))?;
        for (rule, alpha, gamma, metrics) in cells.iter_mut() {
            let cfg = SelectionConfig::new(*alpha, *gamma, Tail::Upper)?;
            let res = run_rule(dgp, &fits, *rule, &cfg).map_err(|e| {
                RankselError::Domain(format!("replication {rep}, rule {}: {e}", rule.name()))
            })?;
            let cutoff = dgp.theta_cutoff(*alpha)?;
            metrics.push(evaluate(&res.selected, &fits.theta, cutoff, Tail::Upper)?);
        }
    }
    Ok(cells
        .into_iter()
        .map(|(rule, alpha, gamma, ms)| {
            let r = ms.len() as f64;
            let mean = |f: &dyn Fn(&Metrics) -> f64| ms.iter().map(f).sum::<f64>() / r;
            let sd = |f: &dyn Fn(&Metrics) -> f64, mu: f64| {
                if ms.len() < 2 {
                    0.0
                } else {
                    (ms.iter().map(|m| (f(m) - mu).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
                }
            };
            let power = mean(&|m: &Metrics| m.power);
            let fdr = mean(&|m: &Metrics| m.fdp);
            let sel_prop = mean(&|m: &Metrics| m.sel_prop);
            PerfRow {
                rule: rule.name().to_string(),
                alpha,
                gamma,
                power,
                fdr,
                sel_prop,
                se_power: sd(&|m: &Metrics| m.power, power) / r.sqrt(),
                se_fdr: sd(&|m: &Metrics| m.fdp, fdr) / r.sqrt(),
                replications: ms.len(),
            }
        })
        .collect())
}

/// Convenience wrapper: one rule, one cell, one replication at large `n`
/// (used by oracle-style checks that only need thresholds, not averages).
pub fn single_run(
    dgp: &Dgp,
    rule: Rule,
    cfg: &SelectionConfig,
    n: usize,
    seed: u64,
) -> Result<(SelectionResult, Metrics)> {
    let fits = prepare_rep(dgp, &[rule], n, seed, 0, &FitOptions::default())?;
    let res = run_rule(dgp, &fits, rule, cfg)?;
    let cutoff = dgp.theta_cutoff(cfg.alpha)?;
    let m = evaluate(&res.selected, &fits.theta, cutoff, cfg.tail)?;
    Ok((res, m))
}
