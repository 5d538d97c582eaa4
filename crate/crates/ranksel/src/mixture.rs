//! Mixing distributions and observation models.
//!
//! A latent parameter `theta` (or a pair `(theta, sigma^2)`) is drawn from a
//! mixing distribution `G`; observations are Gaussian around `theta`, with a
//! Gamma-distributed sample variance when the scale is latent. Everything in
//! this module is immutable after construction and safe to share.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{RankselError, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Smallest value returned by mixture density evaluations.
///
/// Tail observations must never produce an exact zero marginal density,
/// otherwise posterior ratios degenerate to 0/0.
pub const DENSITY_FLOOR: f64 = f64::MIN_POSITIVE;

/// Standard normal log-density.
#[inline]
pub fn norm_logpdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    norm_logpdf(z).exp()
}

/// A discrete probability measure on the location line.
///
/// Atoms are strictly increasing; weights are a probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMixing {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMixing {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(RankselError::InvalidMixing(format!(
                "need matching nonempty atoms/weights, got {}/{}",
                atoms.len(),
                weights.len()
            )));
        }
        if !atoms.iter().all(|a| a.is_finite()) {
            return Err(RankselError::InvalidMixing("non-finite atom".into()));
        }
        if atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RankselError::InvalidMixing(
                "atoms must be strictly increasing".into(),
            ));
        }
        validate_weights(&weights)?;
        Ok(Self { atoms, weights })
    }

    /// Builds from possibly unnormalized nonnegative masses.
    pub fn normalized(atoms: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(RankselError::InvalidMixing("zero total mass".into()));
        }
        let weights = masses.iter().map(|m| m / total).collect();
        Self::new(atoms, weights)
    }

    pub fn point_mass(at: f64) -> Self {
        Self {
            atoms: vec![at],
            weights: vec![1.0],
        }
    }

    /// Discretizes a density `f` on an equispaced grid and renormalizes.
    pub fn from_density(lo: f64, hi: f64, points: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if points < 2 || !(hi > lo) {
            return Err(RankselError::InvalidMixing("bad grid".into()));
        }
        let step = (hi - lo) / (points - 1) as f64;
        let atoms: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
        let masses: Vec<f64> = atoms.iter().map(|&t| f(t).max(0.0)).collect();
        Self::normalized(atoms, masses)
    }

    /// Standard-normal discretization helper used throughout the tests.
    pub fn gaussian_grid(mean: f64, sd: f64, half_width_sds: f64, points: usize) -> Result<Self> {
        Self::from_density(
            mean - half_width_sds * sd,
            mean + half_width_sds * sd,
            points,
            |t| norm_pdf((t - mean) / sd),
        )
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Right-continuous CDF: total weight of atoms `<= t`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .take_while(|(a, _)| **a <= t)
            .map(|(_, w)| w)
            .sum()
    }

    /// Left-continuous generalized inverse `inf { t : CDF(t) >= p }`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(RankselError::Domain(format!(
                "quantile level must lie in (0,1), got {p}"
            )));
        }
        let mut acc = 0.0;
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            acc += w;
            if acc >= p {
                return Ok(*a);
            }
        }
        Ok(*self.atoms.last().unwrap())
    }

    /// Merit cutoff for top-`alpha` selection: the largest `t` with
    /// `P(theta >= t) >= alpha`.
    ///
    /// For continuous mixing distributions this agrees with the `1 - alpha`
    /// quantile; for atomic ones it keeps the upper-tail set at mass exactly
    /// `alpha` when an atom sits on the boundary, which is what makes the
    /// "top alpha" target well defined for discrete `G`.
    pub fn upper_tail_cutoff(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(RankselError::Domain(format!(
                "alpha must lie in (0,1), got {alpha}"
            )));
        }
        let mut tail = 0.0;
        for (a, w) in self.atoms.iter().zip(&self.weights).rev() {
            tail += w;
            if tail >= alpha {
                return Ok(*a);
            }
        }
        Ok(self.atoms[0])
    }

    /// Lower-tail cutoff: smallest `t` with `P(theta <= t) >= alpha`.
    pub fn lower_tail_cutoff(&self, alpha: f64) -> Result<f64> {
        self.quantile(alpha)
    }

    pub fn mean(&self) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| a * w)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * (a - m) * (a - m))
            .sum()
    }

    /// Coarsens the support to at most `max_atoms` by merging consecutive
    /// atoms into their weighted means. Preserves total mass exactly and the
    /// mean up to rounding; used to keep posterior sums cheap after kernel
    /// smoothing produces a very fine grid.
    pub fn condensed(&self, max_atoms: usize) -> Self {
        if max_atoms == 0 || self.len() <= max_atoms {
            return self.clone();
        }
        let chunk = self.len().div_ceil(max_atoms);
        let mut atoms = Vec::with_capacity(max_atoms);
        let mut weights = Vec::with_capacity(max_atoms);
        for block in self.atoms.chunks(chunk).zip(self.weights.chunks(chunk)) {
            let (a, w) = block;
            let mass: f64 = w.iter().sum();
            if mass > 0.0 {
                let center: f64 = a.iter().zip(w).map(|(a, w)| a * w).sum::<f64>() / mass;
                atoms.push(center);
                weights.push(mass);
            }
        }
        Self::normalized(atoms, weights).expect("condensed mixing stays valid")
    }

    /// Reflection through the origin: atoms negated and reversed.
    pub fn mirrored(&self) -> Self {
        let atoms = self.atoms.iter().rev().map(|a| -a).collect();
        let weights = self.weights.iter().rev().cloned().collect();
        Self { atoms, weights }
    }
}

/// A discrete measure over `(theta, sigma^2)` pairs for the latent-variance
/// model. Unlike the univariate case, `theta` and `sigma^2` may be dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateMixing {
    atoms: Vec<(f64, f64)>,
    weights: Vec<f64>,
}

impl BivariateMixing {
    pub fn new(atoms: Vec<(f64, f64)>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(RankselError::InvalidMixing(
                "need matching nonempty atoms/weights".into(),
            ));
        }
        if atoms
            .iter()
            .any(|(t, v)| !t.is_finite() || !v.is_finite() || *v <= 0.0)
        {
            return Err(RankselError::InvalidMixing(
                "atoms need finite theta and positive sigma^2".into(),
            ));
        }
        validate_weights(&weights)?;
        Ok(Self { atoms, weights })
    }

    pub fn normalized(atoms: Vec<(f64, f64)>, masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(RankselError::InvalidMixing("zero total mass".into()));
        }
        let weights = masses.iter().map(|m| m / total).collect();
        Self::new(atoms, weights)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Marginal mixing distribution of `theta` (weights of equal thetas merged).
    pub fn theta_marginal(&self) -> DiscreteMixing {
        let mut pairs: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .zip(&self.weights)
            .map(|((t, _), w)| (*t, *w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (t, w) in pairs {
            match atoms.last() {
                Some(&last) if last == t => *weights.last_mut().unwrap() += w,
                _ => {
                    atoms.push(t);
                    weights.push(w);
                }
            }
        }
        DiscreteMixing::normalized(atoms, weights).expect("marginal of valid mixing")
    }

    /// Upper-tail cutoff of the theta marginal.
    pub fn upper_tail_cutoff(&self, alpha: f64) -> Result<f64> {
        self.theta_marginal().upper_tail_cutoff(alpha)
    }
}

/// One unit observed with known noise scale: `y ~ N(theta, sigma^2)`.
///
/// Precision-weighted observations (`T ~ N(theta, 1/w)`) are stored with
/// `sigma = w^{-1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownVarObs {
    y: f64,
    sigma: f64,
}

impl KnownVarObs {
    pub fn new(y: f64, sigma: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(RankselError::InvalidObservation(format!(
                "y must be finite, got {y}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(RankselError::InvalidObservation(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { y, sigma })
    }

    pub fn from_precision(y: f64, weight: f64) -> Result<Self> {
        if !(weight > 0.0) {
            return Err(RankselError::InvalidObservation(format!(
                "precision weight must be positive, got {weight}"
            )));
        }
        Self::new(y, weight.powf(-0.5))
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn negated(&self) -> Self {
        Self {
            y: -self.y,
            sigma: self.sigma,
        }
    }
}

/// Sufficient statistics from `T` repeated measurements of one unit:
/// sample mean, sample variance, and an optional aggregate precision weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelObs {
    ybar: f64,
    s: f64,
    t_count: u32,
    weight: Option<f64>,
}

impl PanelObs {
    pub fn new(ybar: f64, s: f64, t_count: u32) -> Result<Self> {
        Self::build(ybar, s, t_count, None)
    }

    pub fn weighted(ybar: f64, s: f64, t_count: u32, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(RankselError::InvalidObservation(format!(
                "weight must be positive, got {weight}"
            )));
        }
        Self::build(ybar, s, t_count, Some(weight))
    }

    fn build(ybar: f64, s: f64, t_count: u32, weight: Option<f64>) -> Result<Self> {
        if !ybar.is_finite() {
            return Err(RankselError::InvalidObservation("ybar not finite".into()));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(RankselError::InvalidObservation(format!(
                "sample variance must be nonnegative, got {s}"
            )));
        }
        // The Gamma likelihood for S needs T >= 4 for the posterior to be proper.
        if t_count < 4 {
            return Err(RankselError::InvalidObservation(format!(
                "need at least 4 repeated measurements, got {t_count}"
            )));
        }
        Ok(Self {
            ybar,
            s,
            t_count,
            weight,
        })
    }

    pub fn ybar(&self) -> f64 {
        self.ybar
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn t_count(&self) -> u32 {
        self.t_count
    }

    pub fn weight(&self) -> Option<f64> {
        self.weight
    }

    /// Gamma shape parameter `r = (T - 1) / 2`.
    pub fn shape(&self) -> f64 {
        (self.t_count as f64 - 1.0) / 2.0
    }

    /// Effective precision multiplier on the mean: `T`, or the aggregate
    /// weight when present.
    pub fn t_eff(&self) -> f64 {
        self.weight.unwrap_or(self.t_count as f64)
    }

    pub fn negated(&self) -> Self {
        Self {
            ybar: -self.ybar,
            ..*self
        }
    }
}

/// A kernel-smoothed mixing density on an evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedMixing {
    grid: Vec<f64>,
    density: Vec<f64>,
    bandwidth: f64,
}

impl SmoothedMixing {
    pub(crate) fn from_parts(grid: Vec<f64>, density: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if grid.len() != density.len() || grid.len() < 2 {
            return Err(RankselError::InvalidMixing("bad smoothing grid".into()));
        }
        if density.iter().any(|d| *d < 0.0) {
            return Err(RankselError::InvalidMixing("negative density".into()));
        }
        let s = Self {
            grid,
            density,
            bandwidth,
        };
        let total = s.integral();
        if (total - 1.0).abs() > 1e-6 {
            return Err(RankselError::InvalidMixing(format!(
                "smoothed density integrates to {total}, expected 1"
            )));
        }
        Ok(s)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Trapezoid-rule integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Trapezoid-rule integral restricted to `[lo, hi]` (grid-aligned).
    pub fn integral_between(&self, lo: f64, hi: f64) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.grid.len() {
            let (a, b) = (self.grid[i - 1], self.grid[i]);
            if a >= lo && b <= hi {
                acc += 0.5 * (self.density[i - 1] + self.density[i]) * (b - a);
            }
        }
        acc
    }

    /// Reduction to a discrete mixing distribution with trapezoid weights,
    /// used wherever posterior sums over atoms are required.
    pub fn to_discrete(&self) -> DiscreteMixing {
        let n = self.grid.len();
        let mut masses = vec![0.0; n];
        for i in 1..n {
            let panel =
                0.5 * (self.density[i - 1] + self.density[i]) * (self.grid[i] - self.grid[i - 1]);
            masses[i - 1] += 0.5 * panel;
            masses[i] += 0.5 * panel;
        }
        // Keep only strictly positive masses so atom validation passes.
        let mut atoms = Vec::with_capacity(n);
        let mut kept = Vec::with_capacity(n);
        for (g, m) in self.grid.iter().zip(&masses) {
            if *m > 0.0 {
                atoms.push(*g);
                kept.push(*m);
            }
        }
        DiscreteMixing::normalized(atoms, kept).expect("smoothed mixing has positive mass")
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..x.len() {
        acc += 0.5 * (y[i - 1] + y[i]) * (x[i] - x[i - 1]);
    }
    acc
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(RankselError::InvalidMixing(
            "weights must be nonnegative and finite".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(RankselError::InvalidMixing(format!(
            "weights sum to {total}, expected 1 within 1e-12"
        )));
    }
    Ok(())
}

/// Right-continuous CDF of a discrete mixing distribution.
pub fn mixing_cdf(g: &DiscreteMixing, t: f64) -> f64 {
    g.cdf(t)
}

/// Generalized inverse CDF; see [`DiscreteMixing::quantile`].
pub fn mixing_quantile(g: &DiscreteMixing, p: f64) -> Result<f64> {
    g.quantile(p)
}

/// Log marginal density of `y` under `G`: `log sum_j pi_j phi((y - theta_j)/sigma)/sigma`.
///
/// Accumulated in log space with a max shift so deep-tail observations keep a
/// usable value.
pub fn log_marginal_density_known_var(obs: &KnownVarObs, g: &DiscreteMixing) -> f64 {
    let mut terms = Vec::with_capacity(g.len());
    for (a, w) in g.atoms().iter().zip(g.weights()) {
        if *w > 0.0 {
            terms.push(w.ln() + norm_logpdf((obs.y() - a) / obs.sigma()) - obs.sigma().ln());
        }
    }
    log_sum_exp(&terms)
}

/// Marginal mixture density of `y` given `sigma`, clamped away from zero.
pub fn marginal_density_known_var(obs: &KnownVarObs, g: &DiscreteMixing) -> f64 {
    log_marginal_density_known_var(obs, g)
        .exp()
        .max(DENSITY_FLOOR)
}

/// Log joint density of `(ybar, s)` given one `(theta, sigma^2)` atom:
/// Normal mean part times Gamma sample-variance part.
pub fn log_joint_density_panel(obs: &PanelObs, atom: (f64, f64)) -> f64 {
    let (theta, sigma2) = atom;
    debug_assert!(sigma2 > 0.0);
    let mean_var = sigma2 / obs.t_eff();
    let sd = mean_var.sqrt();
    let normal = norm_logpdf((obs.ybar() - theta) / sd) - sd.ln();
    let r = obs.shape();
    let scale = sigma2 / r;
    let gamma = if obs.s() == 0.0 {
        if r > 1.0 {
            f64::NEG_INFINITY
        } else {
            // r in (0.5, 1]: density diverges or is finite at 0; T >= 4 keeps r >= 1.5,
            // so this branch is unreachable for valid observations.
            f64::NEG_INFINITY
        }
    } else {
        (r - 1.0) * obs.s().ln() - obs.s() / scale - r * scale.ln() - ln_gamma(r)
    };
    normal + gamma
}

/// Joint Normal x Gamma density of a panel observation at one atom.
pub fn joint_density_panel(obs: &PanelObs, atom: (f64, f64)) -> f64 {
    log_joint_density_panel(obs, atom).exp()
}

/// Stable `log(sum(exp(terms)))`; `-inf` for an empty slice.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = terms.iter().map(|t| (t - m).exp()).sum();
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn three_atom() -> DiscreteMixing {
        DiscreteMixing::new(vec![-1.0, 2.0, 5.0], vec![0.85, 0.10, 0.05]).unwrap()
    }

    #[test]
    fn cdf_examples() {
        let g = three_atom();
        assert_eq!(mixing_cdf(&g, 0.0), 0.85);
        assert_eq!(mixing_cdf(&g, -2.0), 0.0);
        let pm = DiscreteMixing::point_mass(0.0);
        assert_eq!(mixing_cdf(&pm, 0.0), 1.0);
    }

    #[test]
    fn quantile_examples() {
        let g = three_atom();
        assert_eq!(g.quantile(0.95).unwrap(), 2.0);
        assert_eq!(g.quantile(0.951).unwrap(), 5.0);

        let pm = DiscreteMixing::point_mass(0.0);
        assert_eq!(pm.quantile(0.3).unwrap(), 0.0);
        assert_eq!(pm.quantile(0.99).unwrap(), 0.0);

        // 201-point equal-weight grid on [-1, 1]: median is the middle point.
        let n = 201;
        let atoms: Vec<f64> = (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect();
        let weights = vec![1.0 / n as f64; n];
        let grid = DiscreteMixing::new(atoms, weights).unwrap();
        assert_relative_eq!(grid.quantile(0.5).unwrap(), 0.0, epsilon = 1e-12);

        assert!(g.quantile(0.0).is_err());
        assert!(g.quantile(1.0).is_err());
    }

    #[test]
    fn upper_tail_cutoff_keeps_atomic_tail_mass() {
        let g = three_atom();
        assert_eq!(g.upper_tail_cutoff(0.05).unwrap(), 5.0);
        assert_eq!(g.upper_tail_cutoff(0.10).unwrap(), 2.0);
        assert_eq!(g.upper_tail_cutoff(0.2).unwrap(), -1.0);
    }

    #[test]
    fn marginal_density_examples() {
        let pm = DiscreteMixing::point_mass(0.0);
        let obs = KnownVarObs::new(0.0, 1.0).unwrap();
        assert_relative_eq!(
            marginal_density_known_var(&obs, &pm),
            0.3989422804014327,
            epsilon = 1e-7
        );

        let sym = DiscreteMixing::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_relative_eq!(
            marginal_density_known_var(&obs, &sym),
            0.24197072451914337,
            epsilon = 1e-7
        );

        let wide = KnownVarObs::new(0.0, 2.0).unwrap();
        assert_relative_eq!(
            marginal_density_known_var(&wide, &pm),
            0.5 * 0.3989422804014327,
            epsilon = 1e-7
        );
    }

    #[test]
    fn marginal_density_deep_tail_stays_positive() {
        let pm = DiscreteMixing::point_mass(0.0);
        let far = KnownVarObs::new(45.0, 1.0).unwrap();
        assert!(marginal_density_known_var(&far, &pm) > 0.0);
    }

    #[test]
    fn joint_density_panel_product_form() {
        let obs = PanelObs::new(0.0, 1.0, 9).unwrap();
        // Normal(0 | 0, 1/9) * Gamma(1 | shape 4, scale 1/4), both with their
        // densities in the observed variables (Jacobians included).
        let normal = 3.0 / (2.0 * std::f64::consts::PI).sqrt();
        let gamma = (-4.0f64).exp() / (6.0 * 0.25f64.powi(4));
        assert_relative_eq!(
            joint_density_panel(&obs, (0.0, 1.0)),
            normal * gamma,
            epsilon = 1e-10
        );

        // Gamma tail vanishes.
        let far = PanelObs::new(0.0, 1e6, 9).unwrap();
        assert!(joint_density_panel(&far, (0.0, 1.0)) < 1e-300);

        // Determinism across equal atoms.
        assert_eq!(
            joint_density_panel(&obs, (0.3, 2.0)),
            joint_density_panel(&obs, (0.3, 2.0))
        );
    }

    #[test]
    fn joint_density_integrates_to_one() {
        // Numeric check over (ybar, s) for a fixed atom.
        let atom = (0.5, 1.5);
        let t = 9u32;
        let (mut acc, ny, ns) = (0.0, 400, 400);
        let (ylo, yhi) = (-4.0, 5.0);
        let (slo, shi) = (1e-6, 12.0);
        let dy = (yhi - ylo) / ny as f64;
        let ds = (shi - slo) / ns as f64;
        for i in 0..ny {
            let y = ylo + (i as f64 + 0.5) * dy;
            for j in 0..ns {
                let s = slo + (j as f64 + 0.5) * ds;
                let obs = PanelObs::new(y, s, t).unwrap();
                acc += joint_density_panel(&obs, atom) * dy * ds;
            }
        }
        assert!((acc - 1.0).abs() < 1e-3, "integral = {acc}");
    }

    #[test]
    fn marginal_density_integrates_to_one() {
        let g = three_atom();
        let sigma = 1.3;
        let n = 4000;
        let (lo, hi) = (-20.0, 20.0);
        let step = (hi - lo) / n as f64;
        let total: f64 = (0..n)
            .map(|i| {
                let y = lo + (i as f64 + 0.5) * step;
                marginal_density_known_var(&KnownVarObs::new(y, sigma).unwrap(), &g) * step
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-4, "integral = {total}");
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(DiscreteMixing::new(vec![0.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMixing::new(vec![0.0], vec![0.9]).is_err());
        assert!(KnownVarObs::new(f64::NAN, 1.0).is_err());
        assert!(KnownVarObs::new(0.0, 0.0).is_err());
        assert!(PanelObs::new(0.0, 1.0, 3).is_err());
        assert!(PanelObs::new(0.0, -1.0, 9).is_err());
        assert!(BivariateMixing::new(vec![(0.0, 0.0)], vec![1.0]).is_err());
    }

    #[test]
    fn weighted_obs_canonicalization() {
        let o = KnownVarObs::from_precision(1.0, 4.0).unwrap();
        assert_relative_eq!(o.sigma(), 0.5);
    }
}
