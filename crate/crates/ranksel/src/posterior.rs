//! Posterior selection statistics under a fitted (or assumed) mixing
//! distribution: tail probabilities, posterior means, and the parametric
//! alternatives (Gaussian prior closed forms, normal-inverse-chi-squared
//! conjugate updates, linear shrinkage).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{RankselError, Result};
use crate::mixture::{
    log_joint_density_panel, log_sum_exp, norm_logpdf, BivariateMixing, DiscreteMixing,
    KnownVarObs, PanelObs,
};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Posterior log-weights of the mixing atoms given one observation; returns
/// softmax inputs `l_j = ln pi_j + log kernel_j` (zero-weight atoms get
/// `-inf`). Shared by every posterior functional below.
fn atom_log_weights(obs: &KnownVarObs, g: &DiscreteMixing) -> Vec<f64> {
    g.atoms()
        .iter()
        .zip(g.weights())
        .map(|(a, w)| {
            if *w > 0.0 {
                w.ln() + norm_logpdf((obs.y() - a) / obs.sigma())
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

fn posterior_weights(log_w: &[f64]) -> Vec<f64> {
    let total = log_sum_exp(log_w);
    log_w.iter().map(|l| (l - total).exp()).collect()
}

/// Posterior upper-tail probability `P(theta >= cutoff | y, sigma)` under a
/// discrete mixing distribution.
pub fn tail_prob_known_var(obs: &KnownVarObs, g: &DiscreteMixing, cutoff: f64) -> f64 {
    let log_w = atom_log_weights(obs, g);
    let total = log_sum_exp(&log_w);
    if !total.is_finite() {
        // Every kernel underflowed; split mass by nearest atom side.
        return if obs.y() >= cutoff { 1.0 } else { 0.0 };
    }
    let tail: Vec<f64> = g
        .atoms()
        .iter()
        .zip(&log_w)
        .filter(|(a, _)| **a >= cutoff)
        .map(|(_, l)| *l)
        .collect();
    (log_sum_exp(&tail) - total).exp().clamp(0.0, 1.0)
}

/// Posterior lower-tail probability `P(theta <= cutoff | y, sigma)`.
pub fn lower_tail_prob_known_var(obs: &KnownVarObs, g: &DiscreteMixing, cutoff: f64) -> f64 {
    tail_prob_known_var(&obs.negated(), &g.mirrored(), -cutoff)
}

/// Posterior mean `E[theta | y, sigma]`.
pub fn post_mean_known_var(obs: &KnownVarObs, g: &DiscreteMixing) -> f64 {
    let w = posterior_weights(&atom_log_weights(obs, g));
    g.atoms().iter().zip(&w).map(|(a, w)| a * w).sum()
}

/// Censored posterior moment `E[theta 1{theta >= cutoff} | y, sigma]`. Zero
/// when the cutoff lies above every atom.
pub fn tail_expectation_known_var(obs: &KnownVarObs, g: &DiscreteMixing, cutoff: f64) -> f64 {
    let w = posterior_weights(&atom_log_weights(obs, g));
    g.atoms()
        .iter()
        .zip(&w)
        .filter(|(a, _)| **a >= cutoff)
        .map(|(a, w)| a * w)
        .sum()
}

/// Posterior mean via the score of the marginal density:
/// `y + sigma^2 d/dy log f(y)`, with the derivative computed analytically
/// from the mixture kernel. Agrees with [`post_mean_known_var`] to machine
/// precision.
pub fn tweedie_mean(obs: &KnownVarObs, g: &DiscreteMixing) -> f64 {
    let log_w = atom_log_weights(obs, g);
    let w = posterior_weights(&log_w);
    // f'(y)/f(y) = sum_j w_j * (theta_j - y)/sigma^2 where w_j are posterior
    // weights, so y + sigma^2 * score telescopes to the posterior mean.
    let score: f64 = g
        .atoms()
        .iter()
        .zip(&w)
        .map(|(a, w)| w * (a - obs.y()) / (obs.sigma() * obs.sigma()))
        .sum();
    obs.y() + obs.sigma() * obs.sigma() * score
}

/// Atom log-weights for the bivariate latent-variance model.
fn atom_log_weights_panel(obs: &PanelObs, g: &BivariateMixing) -> Vec<f64> {
    g.atoms()
        .iter()
        .zip(g.weights())
        .map(|(atom, w)| {
            if *w > 0.0 {
                w.ln() + log_joint_density_panel(obs, *atom)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// Posterior tail probability `P(theta >= cutoff | ybar, s)` under a
/// bivariate mixing distribution.
pub fn tail_prob_panel(obs: &PanelObs, g: &BivariateMixing, cutoff: f64) -> f64 {
    let log_w = atom_log_weights_panel(obs, g);
    let total = log_sum_exp(&log_w);
    if !total.is_finite() {
        return if obs.ybar() >= cutoff { 1.0 } else { 0.0 };
    }
    let tail: Vec<f64> = g
        .atoms()
        .iter()
        .zip(&log_w)
        .filter(|((t, _), _)| *t >= cutoff)
        .map(|(_, l)| *l)
        .collect();
    (log_sum_exp(&tail) - total).exp().clamp(0.0, 1.0)
}

/// Posterior mean of `theta` under a bivariate mixing distribution.
pub fn post_mean_panel(obs: &PanelObs, g: &BivariateMixing) -> f64 {
    let w = posterior_weights(&atom_log_weights_panel(obs, g));
    g.atoms().iter().zip(&w).map(|((t, _), w)| t * w).sum()
}

/// Normal-inverse-chi-squared prior hyperparameters for the panel model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NixHyper {
    pub theta0: f64,
    pub kappa0: f64,
    pub nu0: f64,
    pub sigma0_sq: f64,
}

impl NixHyper {
    pub fn new(theta0: f64, kappa0: f64, nu0: f64, sigma0_sq: f64) -> Result<Self> {
        if !theta0.is_finite() || !(kappa0 > 0.0) || !(nu0 > 0.0) || !(sigma0_sq > 0.0) {
            return Err(RankselError::Domain(format!(
                "invalid conjugate prior ({theta0}, {kappa0}, {nu0}, {sigma0_sq})"
            )));
        }
        Ok(Self {
            theta0,
            kappa0,
            nu0,
            sigma0_sq,
        })
    }

    /// Method-of-moments fit from panel data. Falls back to weakly
    /// informative values when the moment equations are ill-posed.
    pub fn from_moments(observations: &[PanelObs]) -> Result<Self> {
        if observations.len() < 2 {
            return Err(RankselError::Domain("need at least 2 panel units".into()));
        }
        let n = observations.len() as f64;
        let r = observations[0].shape();
        let t = observations[0].t_eff();
        let m1 = observations.iter().map(|o| o.s()).sum::<f64>() / n;
        let m2 = observations.iter().map(|o| o.s() * o.s()).sum::<f64>() / n / (1.0 + 1.0 / r);
        let theta0 = observations.iter().map(|o| o.ybar()).sum::<f64>() / n;
        let var_y = observations
            .iter()
            .map(|o| (o.ybar() - theta0).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        let c = if m1 > 0.0 { m2 / (m1 * m1) } else { 2.0 };
        // E[sigma^2] = sigma0^2 nu0/(nu0-2); E[sigma^4]/E[sigma^2]^2 = (nu0-2)/(nu0-4).
        let nu0 = if c > 1.0 {
            (4.0 * c - 2.0) / (c - 1.0)
        } else {
            50.0
        };
        let nu0 = nu0.clamp(4.5, 1e4);
        let sigma0_sq = (m1 * (nu0 - 2.0) / nu0).max(1e-8);
        let excess = var_y - m1 / t;
        let kappa0 = if excess > 1e-10 {
            (m1 / excess).max(1e-4)
        } else {
            1e4
        };
        Self::new(theta0, kappa0, nu0, sigma0_sq)
    }

    /// Prior merit cutoff: `1 - alpha` quantile of the marginal prior of
    /// `theta`, a scaled Student-t.
    pub fn theta_cutoff(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(RankselError::Domain(format!("alpha {alpha} outside (0,1)")));
        }
        let t = StudentsT::new(0.0, 1.0, self.nu0)
            .map_err(|e| RankselError::Domain(format!("invalid prior degrees of freedom: {e}")))?;
        Ok(self.theta0 + (self.sigma0_sq / self.kappa0).sqrt() * t.inverse_cdf(1.0 - alpha))
    }
}

/// Conjugate posterior parameters for one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NixPosterior {
    pub theta_t: f64,
    pub kappa_t: f64,
    pub nu_t: f64,
    pub sigma_t_sq: f64,
}

/// Conjugate update of a normal-inverse-chi-squared prior with panel
/// sufficient statistics.
pub fn nix_update(prior: &NixHyper, obs: &PanelObs) -> NixPosterior {
    let t = obs.t_count() as f64;
    let kappa_t = prior.kappa0 + t;
    let nu_t = prior.nu0 + t;
    let theta_t = (prior.kappa0 * prior.theta0 + t * obs.ybar()) / kappa_t;
    let sigma_t_sq = (prior.nu0 * prior.sigma0_sq
        + (t - 1.0) * obs.s()
        + t * prior.kappa0 * (prior.theta0 - obs.ybar()).powi(2) / kappa_t)
        / nu_t;
    NixPosterior {
        theta_t,
        kappa_t,
        nu_t,
        sigma_t_sq,
    }
}

/// Posterior tail probability `P(theta >= cutoff)` under the conjugate model:
/// one minus a Student-t CDF at the standardized cutoff.
pub fn nix_tail_prob(post: &NixPosterior, cutoff: f64) -> Result<f64> {
    let scale = (post.sigma_t_sq / post.kappa_t).sqrt();
    let t = StudentsT::new(0.0, 1.0, post.nu_t)
        .map_err(|e| RankselError::Domain(format!("invalid posterior: {e}")))?;
    Ok(1.0 - t.cdf((cutoff - post.theta_t) / scale))
}

/// Marginal maximum likelihood estimates of a Gaussian prior
/// `theta ~ N(mu, tau^2)` from heteroscedastic observations, profiled over
/// `mu` and optimized over `tau^2` by golden-section search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPriorFit {
    pub mu: f64,
    pub tau_sq: f64,
}

pub fn fit_gaussian_prior(observations: &[KnownVarObs]) -> Result<GaussianPriorFit> {
    if observations.len() < 2 {
        return Err(RankselError::Domain("need at least 2 observations".into()));
    }
    let profile = |tau_sq: f64| -> (f64, f64) {
        // Given tau^2 the optimal mu is precision weighted.
        let mut wsum = 0.0;
        let mut wy = 0.0;
        for o in observations {
            let w = 1.0 / (tau_sq + o.sigma() * o.sigma());
            wsum += w;
            wy += w * o.y();
        }
        let mu = wy / wsum;
        let ll: f64 = observations
            .iter()
            .map(|o| {
                let v = tau_sq + o.sigma() * o.sigma();
                -0.5 * ((o.y() - mu).powi(2) / v + v.ln())
            })
            .sum();
        (mu, ll)
    };
    let n = observations.len() as f64;
    let ybar = observations.iter().map(|o| o.y()).sum::<f64>() / n;
    let var_y = observations
        .iter()
        .map(|o| (o.y() - ybar).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let ub = (4.0 * var_y).max(1e-6);
    // Golden-section maximization of the profile likelihood on [0, ub].
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, ub);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = profile(c).1;
    let mut fd = profile(d).1;
    for _ in 0..200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = profile(c).1;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = profile(d).1;
        }
        if b - a < 1e-12 * (1.0 + ub) {
            break;
        }
    }
    let tau_sq = 0.5 * (a + b);
    // Compare against the boundary tau^2 = 0 and keep the better one.
    let (mu_in, ll_in) = profile(tau_sq);
    let (mu_0, ll_0) = profile(0.0);
    if ll_0 >= ll_in {
        Ok(GaussianPriorFit {
            mu: mu_0,
            tau_sq: 0.0,
        })
    } else {
        Ok(GaussianPriorFit { mu: mu_in, tau_sq })
    }
}

/// Linear (parametric Gaussian-prior) posterior mean:
/// `mu + rho (y - mu)` with `rho = tau^2 / (tau^2 + sigma^2)`.
pub fn linear_shrinkage_mean(obs: &KnownVarObs, prior: &GaussianPriorFit) -> f64 {
    let rho = prior.tau_sq / (prior.tau_sq + obs.sigma() * obs.sigma());
    prior.mu + rho * (obs.y() - prior.mu)
}

/// Gaussian-prior posterior tail probability `P(theta >= cutoff | y)` in
/// closed form. The posterior is `N(mu + rho(y-mu), rho sigma^2)`.
pub fn gaussian_prior_tail_prob(obs: &KnownVarObs, prior: &GaussianPriorFit, cutoff: f64) -> f64 {
    let s2 = obs.sigma() * obs.sigma();
    let rho = prior.tau_sq / (prior.tau_sq + s2);
    if prior.tau_sq == 0.0 {
        return if prior.mu >= cutoff { 1.0 } else { 0.0 };
    }
    let mean = prior.mu + rho * (obs.y() - prior.mu);
    let sd = (rho * s2).sqrt();
    1.0 - norm_cdf((cutoff - mean) / sd)
}

/// Merit cutoff under a Gaussian prior: its `1 - alpha` quantile.
pub fn gaussian_prior_cutoff(prior: &GaussianPriorFit, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RankselError::Domain(format!("alpha {alpha} outside (0,1)")));
    }
    Ok(prior.mu + prior.tau_sq.sqrt() * norm_quantile(1.0 - alpha))
}

/// Linear (Gaussian-prior) posterior means for a whole sample, together with
/// the marginal maximum likelihood hyperparameter fit used to produce them.
/// Needs at least three observations to estimate both hyperparameters.
pub fn linear_shrinkage(observations: &[KnownVarObs]) -> Result<(Vec<f64>, GaussianPriorFit)> {
    if observations.len() < 3 {
        return Err(RankselError::Domain(
            "linear shrinkage needs at least 3 observations".into(),
        ));
    }
    let prior = fit_gaussian_prior(observations)?;
    let means = observations
        .iter()
        .map(|o| linear_shrinkage_mean(o, &prior))
        .collect();
    Ok((means, prior))
}

/// Degrees-of-freedom-corrected shrinkage estimates using a fitted Gaussian
/// prior: `theta_i = mu + (1 - (n-3)/n (1 - rho_i))(y_i - mu)` with
/// `rho_i = tau^2/(tau^2 + sigma_i^2)`. With equal noise scales this is the
/// classical James-Stein rule `mu + (1 - (n-3) sigma^2 / S)(y_i - mu)` where
/// `S` is the centered sum of squares.
pub fn efron_morris_with(
    prior: &GaussianPriorFit,
    observations: &[KnownVarObs],
) -> Result<Vec<f64>> {
    let n = observations.len();
    if n <= 3 {
        return Err(RankselError::Domain(
            "corrected shrinkage needs more than 3 observations".into(),
        ));
    }
    let nf = n as f64;
    Ok(observations
        .iter()
        .map(|o| {
            let rho = if prior.tau_sq > 0.0 {
                prior.tau_sq / (prior.tau_sq + o.sigma() * o.sigma())
            } else {
                0.0
            };
            let shrink = 1.0 - (nf - 3.0) / nf * (1.0 - rho);
            prior.mu + shrink * (o.y() - prior.mu)
        })
        .collect())
}

/// [`efron_morris_with`] with the Gaussian prior fit by marginal maximum
/// likelihood on the same sample.
pub fn efron_morris(observations: &[KnownVarObs]) -> Result<Vec<f64>> {
    if observations.len() <= 3 {
        return Err(RankselError::Domain(
            "corrected shrinkage needs more than 3 observations".into(),
        ));
    }
    let prior = fit_gaussian_prior(observations)?;
    efron_morris_with(&prior, observations)
}

/// Posterior probability of a strictly positive effect, `P(theta > 0 | y,
/// sigma)`, under a discrete mixing distribution. Atoms exactly at zero count
/// as null.
pub fn conventional_null_prob(obs: &KnownVarObs, g: &DiscreteMixing) -> f64 {
    let log_w = atom_log_weights(obs, g);
    let total = log_sum_exp(&log_w);
    if !total.is_finite() {
        return if obs.y() > 0.0 { 1.0 } else { 0.0 };
    }
    let pos: Vec<f64> = g
        .atoms()
        .iter()
        .zip(&log_w)
        .filter(|(a, _)| **a > 0.0)
        .map(|(_, l)| *l)
        .collect();
    (log_sum_exp(&pos) - total).exp().clamp(0.0, 1.0)
}

/// Optional recentering applied to raw scores before ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Centering {
    #[default]
    None,
    Mean,
    Median,
}

/// Recenters a score vector in place according to the chosen convention.
pub fn center_scores(scores: &mut [f64], how: Centering) {
    match how {
        Centering::None => {}
        Centering::Mean => {
            let m = scores.iter().sum::<f64>() / scores.len() as f64;
            scores.iter_mut().for_each(|s| *s -= m);
        }
        Centering::Median => {
            let mut sorted = scores.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mid = sorted.len() / 2;
            let med = if sorted.len().is_multiple_of(2) {
                0.5 * (sorted[mid - 1] + sorted[mid])
            } else {
                sorted[mid]
            };
            scores.iter_mut().for_each(|s| *s -= med);
        }
    }
}
