//! Crossing initiation time models.
//!
//! The delay between the leading vehicle clearing the pedestrian and the
//! first crossing step follows either a shifted Wald distribution
//! `SW(b, γ, τ)` or a Gaussian, with the location/tail parameters linked
//! to `ln θ̇` of the accepted gap:
//!
//! ```text
//! SW:       γ = β₁ ln θ̇ + β₂,   τ = β₃ ln θ̇ + β₄
//! Gaussian: μ = β₁ ln θ̇ + β₂,   σ = β₃ ln θ̇ + β₄
//! ```
//!
//! `SW(b, γ, τ)` is an inverse Gaussian with mean `b/γ` and shape `b²`
//! shifted by `τ`, which gives both the closed-form CDF and an exact sampler.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::special::{ln_norm_cdf, norm_cdf, LN_SQRT_2PI};
use crate::{Error, Result};

/// Smallest admissible `γ(θ̇)` for a linked shifted Wald.
pub const GAMMA_FLOOR: f64 = 1e-6;
/// Smallest admissible `σ(θ̇)` for a linked Gaussian, seconds.
pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ShiftedWald,
    Gaussian,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sw" | "shifted_wald" | "shifted-wald" => Ok(Family::ShiftedWald),
            "gauss" | "gaussian" | "normal" => Ok(Family::Gaussian),
            other => Err(Error::InvalidParams(format!("unknown initiation family `{other}`"))),
        }
    }
}

/// Shifted Wald parameters: deviation `b`, tail magnitude `gamma`, onset `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwParams {
    pub b: f64,
    pub gamma: f64,
    pub tau: f64,
}

impl SwParams {
    pub fn new(b: f64, gamma: f64, tau: f64) -> Result<Self> {
        let p = Self { b, gamma, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::InvalidParams(format!("shifted Wald b must be positive, got {}", self.b)));
        }
        if !self.gamma.is_finite() || !self.tau.is_finite() {
            return Err(Error::InvalidParams("shifted Wald gamma and tau must be finite".into()));
        }
        Ok(())
    }

    /// Mean `b/γ + τ`; only finite for `γ > 0`.
    pub fn mean(&self) -> f64 {
        self.b / self.gamma + self.tau
    }

    /// Mean and shape of the unshifted inverse Gaussian.
    pub fn inverse_gaussian(&self) -> (f64, f64) {
        (self.b / self.gamma, self.b * self.b)
    }
}

/// Link coefficients of the initiation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitiationParams {
    pub family: Family,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    /// Shifted Wald `b`; absent for the Gaussian family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl InitiationParams {
    pub fn shifted_wald(beta1: f64, beta2: f64, beta3: f64, beta4: f64, b: f64) -> Self {
        Self {
            family: Family::ShiftedWald,
            beta1,
            beta2,
            beta3,
            beta4,
            b: Some(b),
        }
    }

    pub fn gaussian(beta1: f64, beta2: f64, beta3: f64, beta4: f64) -> Self {
        Self {
            family: Family::Gaussian,
            beta1,
            beta2,
            beta3,
            beta4,
            b: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.beta1, self.beta2, self.beta3, self.beta4]
            .iter()
            .all(|c| c.is_finite())
        {
            return Err(Error::InvalidParams("initiation coefficients must be finite".into()));
        }
        match (self.family, self.b) {
            (Family::ShiftedWald, Some(b)) if b > 0.0 && b.is_finite() => Ok(()),
            (Family::ShiftedWald, _) => Err(Error::InvalidParams(
                "shifted Wald initiation needs a positive b".into(),
            )),
            (Family::Gaussian, None) => Ok(()),
            (Family::Gaussian, Some(_)) => Err(Error::InvalidParams(
                "Gaussian initiation takes no b".into(),
            )),
        }
    }

    /// The initiation distribution for a gap with cue `theta_dot`.
    pub fn link(&self, theta_dot: f64) -> Result<InitiationDist> {
        match self.family {
            Family::ShiftedWald => link_sw(theta_dot, self).map(InitiationDist::ShiftedWald),
            Family::Gaussian => {
                link_gauss(theta_dot, self).map(|(mu, sigma)| InitiationDist::Gaussian { mu, sigma })
            }
        }
    }
}

fn ln_cue(theta_dot: f64) -> Result<f64> {
    if theta_dot > 0.0 && theta_dot.is_finite() {
        Ok(theta_dot.ln())
    } else {
        Err(Error::Domain(format!("collision cue must be positive, got {theta_dot}")))
    }
}

/// Shifted Wald parameters for a gap with cue `theta_dot`.
pub fn link_sw(theta_dot: f64, p: &InitiationParams) -> Result<SwParams> {
    if p.family != Family::ShiftedWald {
        return Err(Error::InvalidParams("link_sw needs shifted Wald parameters".into()));
    }
    let b = p
        .b
        .ok_or_else(|| Error::InvalidParams("shifted Wald initiation needs b".into()))?;
    let l = ln_cue(theta_dot)?;
    let gamma = p.beta1 * l + p.beta2;
    let tau = p.beta3 * l + p.beta4;
    if !(gamma > GAMMA_FLOOR) {
        return Err(Error::DegenerateLink(format!(
            "gamma({theta_dot}) = {gamma} is not positive"
        )));
    }
    SwParams::new(b, gamma, tau)
}

/// Gaussian `(μ, σ)` for a gap with cue `theta_dot`.
pub fn link_gauss(theta_dot: f64, p: &InitiationParams) -> Result<(f64, f64)> {
    if p.family != Family::Gaussian {
        return Err(Error::InvalidParams("link_gauss needs Gaussian parameters".into()));
    }
    let l = ln_cue(theta_dot)?;
    let mu = p.beta1 * l + p.beta2;
    let sigma = p.beta3 * l + p.beta4;
    if !(sigma > SIGMA_FLOOR) {
        return Err(Error::DegenerateLink(format!(
            "sigma({theta_dot}) = {sigma} is below the {SIGMA_FLOOR} s floor"
        )));
    }
    Ok((mu, sigma))
}

/// Shifted Wald density; zero at and below the onset.
pub fn sw_pdf(x: f64, p: &SwParams) -> Result<f64> {
    p.validate()?;
    Ok(sw_ln_pdf_unchecked(x, p).exp())
}

fn sw_ln_pdf_unchecked(x: f64, p: &SwParams) -> f64 {
    let y = x - p.tau;
    if !(y > 0.0) {
        return f64::NEG_INFINITY;
    }
    let dev = p.b - p.gamma * y;
    p.b.ln() - LN_SQRT_2PI - 1.5 * y.ln() - dev * dev / (2.0 * y)
}

/// Shifted Wald CDF via the inverse Gaussian closed form.
pub fn sw_cdf(x: f64, p: &SwParams) -> Result<f64> {
    p.validate()?;
    Ok(sw_cdf_unchecked(x, p))
}

fn sw_cdf_unchecked(x: f64, p: &SwParams) -> f64 {
    let y = x - p.tau;
    if !(y > 0.0) {
        return 0.0;
    }
    if y.is_infinite() {
        return if p.gamma > 0.0 { 1.0 } else { (2.0 * p.b * p.gamma).exp() };
    }
    let sy = y.sqrt();
    let first = norm_cdf((p.gamma * y - p.b) / sy);
    // e^{2bγ}·Φ(-(γy+b)/√y) evaluated in log space; the factor overflows alone
    let second = (2.0 * p.b * p.gamma + ln_norm_cdf(-(p.gamma * y + p.b) / sy)).exp();
    (first + second).min(1.0)
}

/// One exact shifted Wald draw: `τ` plus an inverse Gaussian variate
/// (transformation with multiple roots).
pub fn sample_sw<R: Rng + ?Sized>(p: &SwParams, rng: &mut R) -> Result<f64> {
    p.validate()?;
    if !(p.gamma > 0.0) {
        return Err(Error::DegenerateLink(format!(
            "cannot sample a shifted Wald with gamma = {}",
            p.gamma
        )));
    }
    let (mu, lambda) = p.inverse_gaussian();
    Ok(p.tau + sample_inverse_gaussian(mu, lambda, rng))
}

fn sample_inverse_gaussian<R: Rng + ?Sized>(mu: f64, lambda: f64, rng: &mut R) -> f64 {
    let nu: f64 = rng.sample(StandardNormal);
    let a = mu * nu * nu;
    let x = if a == 0.0 {
        mu
    } else {
        // smaller root μ(s − a)/(s + a) rewritten without cancellation
        let s = (a * (4.0 * lambda + a)).sqrt();
        4.0 * lambda * a * mu / ((s + a) * (s + a))
    };
    let u: f64 = rng.random();
    if u * (mu + x) <= mu {
        x
    } else {
        mu * mu / x
    }
}

/// A fully linked initiation-time distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitiationDist {
    ShiftedWald(SwParams),
    Gaussian { mu: f64, sigma: f64 },
}

impl InitiationDist {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            InitiationDist::ShiftedWald(p) => sw_ln_pdf_unchecked(x, p),
            InitiationDist::Gaussian { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            InitiationDist::ShiftedWald(p) => sw_cdf_unchecked(x, p),
            InitiationDist::Gaussian { mu, sigma } => norm_cdf((x - mu) / sigma),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            InitiationDist::ShiftedWald(p) => p.mean(),
            InitiationDist::Gaussian { mu, .. } => *mu,
        }
    }

    pub fn std_dev(&self) -> f64 {
        match self {
            InitiationDist::ShiftedWald(p) => (p.b / p.gamma.powi(3)).sqrt(),
            InitiationDist::Gaussian { sigma, .. } => *sigma,
        }
    }

    /// Probability mass the distribution places below zero seconds.
    pub fn negative_time_mass(&self) -> f64 {
        self.cdf(0.0)
    }

    /// Quantile by bisection on the CDF.
    pub fn quantile(&self, q: f64) -> f64 {
        assert!((0.0..1.0).contains(&q) && q > 0.0, "quantile level must lie in (0, 1)");
        let spread = self.std_dev().max(1e-6);
        let mut lo = match self {
            InitiationDist::ShiftedWald(p) => p.tau,
            InitiationDist::Gaussian { .. } => self.mean() - spread,
        };
        while self.cdf(lo) > q {
            lo -= spread;
        }
        let mut hi = self.mean() + spread;
        while self.cdf(hi) < q {
            hi += spread;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match self {
            InitiationDist::ShiftedWald(p) => sample_sw(p, rng),
            InitiationDist::Gaussian { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                Ok(mu + sigma * z)
            }
        }
    }
}

/// One component of a mixture over a gap sequence: the gap's clearance time
/// on the scenario clock and its collision cue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub t_pass_s: f64,
    pub theta_dot: f64,
}

/// Sub-probability density of the crossing start time on the scenario clock,
/// `Σ_n P_n · f(t − t_pass_n; θ̇_n)`.
#[derive(Debug, Clone)]
pub struct Mixture {
    weights: Vec<f64>,
    offsets: Vec<f64>,
    components: Vec<InitiationDist>,
}

impl Mixture {
    pub fn new(gaps: &[MixtureComponent], probs: &[f64], ip: &InitiationParams) -> Result<Self> {
        if gaps.len() != probs.len() {
            return Err(Error::LengthMismatch {
                left: gaps.len(),
                right: probs.len(),
            });
        }
        let components = gaps
            .iter()
            .map(|g| ip.link(g.theta_dot))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights: probs.to_vec(),
            offsets: gaps.iter().map(|g| g.t_pass_s).collect(),
            components,
        })
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn density(&self, t: f64) -> f64 {
        self.iter()
            .filter(|(w, _, _)| *w > 0.0)
            .map(|(w, off, d)| w * d.pdf(t - off))
            .sum()
    }

    /// Unnormalized CDF; tends to `total_weight()`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.iter()
            .filter(|(w, _, _)| *w > 0.0)
            .map(|(w, off, d)| w * d.cdf(t - off))
            .sum()
    }

    /// CDF conditioned on crossing at all.
    pub fn conditional_cdf(&self, t: f64) -> f64 {
        let total = self.total_weight();
        if total > 0.0 {
            self.cdf(t) / total
        } else {
            0.0
        }
    }

    pub fn components(&self) -> &[InitiationDist] {
        &self.components
    }

    fn iter(&self) -> impl Iterator<Item = (f64, f64, &InitiationDist)> + '_ {
        self.weights
            .iter()
            .zip(&self.offsets)
            .zip(&self.components)
            .map(|((w, o), d)| (*w, *o, d))
    }
}

/// Mixture density at `t` on the scenario clock.
pub fn mixture_density(
    t: f64,
    gaps: &[MixtureComponent],
    probs: &[f64],
    ip: &InitiationParams,
) -> Result<f64> {
    Ok(Mixture::new(gaps, probs, ip)?.density(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::fixtures;
    use crate::quad::integrate;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sw(b: f64, gamma: f64, tau: f64) -> SwParams {
        SwParams::new(b, gamma, tau).unwrap()
    }

    fn sw_integral(p: &SwParams, lo: f64, hi: f64) -> f64 {
        integrate(|x| sw_pdf(x, p).unwrap(), lo, hi, 1e-12).value
    }

    #[test]
    fn pdf_fixtures() {
        assert_abs_diff_eq!(sw_pdf(1.0, &sw(1.0, 1.0, 0.0)).unwrap(), 0.398942280401, epsilon = 1e-9);
        assert_eq!(sw_pdf(0.5, &sw(6.06, 2.0, 0.5)).unwrap(), 0.0);
        assert_eq!(sw_pdf(-3.0, &sw(6.06, 2.0, 0.5)).unwrap(), 0.0);
        assert!(SwParams::new(0.0, 1.0, 0.0).is_err());
        assert!(matches!(
            sw_pdf(1.0, &SwParams { b: -1.0, gamma: 1.0, tau: 0.0 }),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn pdf_integrates_to_one() {
        let p = sw(6.06, 2.0, 0.5);
        let (mu, _) = p.inverse_gaussian();
        let hi = p.tau + mu + 12.0 * (p.b / p.gamma.powi(3)).sqrt();
        let body = sw_integral(&p, p.tau, hi);
        let tail = 1.0 - sw_cdf(hi, &p).unwrap();
        assert_abs_diff_eq!(body + tail, 1.0, epsilon = 1e-6);
        assert!(tail < 1e-6);
    }

    #[test]
    fn cdf_fixtures() {
        let p = sw(1.0, 1.0, 0.0);
        assert_eq!(sw_cdf(0.0, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(sw_cdf(1e9, &p).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(sw_cdf(f64::INFINITY, &p).unwrap(), 1.0);
        let quad = sw_integral(&p, 0.0, 1.0);
        assert_abs_diff_eq!(sw_cdf(1.0, &p).unwrap(), quad, epsilon = 1e-8);
    }

    #[test]
    fn cdf_derivative_is_pdf() {
        let p = sw(7.76, 5.2, -1.6);
        let h = 1e-6;
        for i in 1..60 {
            let x = p.tau + 0.05 * i as f64;
            let fd = (sw_cdf(x + h, &p).unwrap() - sw_cdf(x - h, &p).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(fd, sw_pdf(x, &p).unwrap(), epsilon = 1e-6);
        }
    }

    #[test]
    fn cdf_handles_large_b_gamma() {
        let p = sw(60.0, 20.0, 0.0);
        let mut prev = 0.0;
        for i in 1..400 {
            let c = sw_cdf(0.01 * i as f64, &p).unwrap();
            assert!(c.is_finite() && c >= prev - 1e-15 && c <= 1.0);
            prev = c;
        }
        assert_abs_diff_eq!(prev, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn link_fixtures() {
        let t1 = fixtures::single_gap_sw().initiation;
        let sp = link_sw(0.005, &t1).unwrap();
        assert_abs_diff_eq!(sp.gamma, 4.3210, epsilon = 1e-4);
        assert_abs_diff_eq!(sp.tau, -1.0503, epsilon = 1e-4);
        assert_eq!(sp.b, 6.06);

        let sp = link_sw(1.0, &t1).unwrap();
        assert_eq!((sp.gamma, sp.tau), (t1.beta2, t1.beta4));

        let t2 = fixtures::flow_sw().initiation;
        let sp = link_sw(0.01, &t2).unwrap();
        assert_abs_diff_eq!(sp.gamma, 5.1955, epsilon = 1e-4);
        assert_abs_diff_eq!(sp.tau, -1.5942, epsilon = 1e-4);

        let unit = InitiationParams::gaussian(-0.03, 0.15, -0.21, 0.4);
        assert_eq!(link_gauss(1.0, &unit).unwrap(), (0.15, 0.4));

        let g = fixtures::single_gap_gauss().initiation;
        let (mu, sigma) = link_gauss(0.005, &g).unwrap();
        assert_abs_diff_eq!(mu, 0.3089, epsilon = 1e-4);
        assert_abs_diff_eq!(sigma, 0.3526, epsilon = 1e-4);
        let (mu, sigma) = link_gauss(0.02, &g).unwrap();
        assert_abs_diff_eq!(mu, 0.2674, epsilon = 1e-4);
        assert_abs_diff_eq!(sigma, 0.0616, epsilon = 1e-4);
    }

    #[test]
    fn degenerate_links_are_errors() {
        let p = InitiationParams::shifted_wald(1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(link_sw(0.5, &p), Err(Error::DegenerateLink(_))));
        // σ(1) = β₄ = -0.76 for the dataset-one Gaussian fit
        let g = fixtures::single_gap_gauss().initiation;
        assert!(matches!(link_gauss(1.0, &g), Err(Error::DegenerateLink(_))));
        assert!(matches!(link_sw(0.0, &fixtures::flow_sw().initiation), Err(Error::Domain(_))));
        assert!(link_gauss(0.1, &fixtures::flow_sw().initiation).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flat = SwParams { b: 1.0, gamma: 0.0, tau: 0.0 };
        assert!(matches!(sample_sw(&flat, &mut rng), Err(Error::DegenerateLink(_))));
    }

    #[test]
    fn gaussian_family_keeps_negative_time_mass() {
        let g = fixtures::single_gap_gauss().initiation;
        let d = g.link(0.005).unwrap();
        let mass = d.negative_time_mass();
        assert!(mass > 0.1 && mass < 0.5, "{mass}");
        let total = integrate(|x| d.pdf(x), -10.0, 10.0, 1e-12).value;
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn sampler_mean_and_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = sw(1.0, 1.0, 0.0);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_sw(&p, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 0.02);
        let shifted = sw(2.0, 1.5, 5.0);
        assert!((0..10_000).all(|_| sample_sw(&shifted, &mut rng).unwrap() > 5.0));
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = InitiationDist::ShiftedWald(sw(7.76, 5.2, -1.6));
        for q in [0.025, 0.5, 0.975] {
            assert_abs_diff_eq!(d.cdf(d.quantile(q)), q, epsilon = 1e-10);
        }
        let g = InitiationDist::Gaussian { mu: 0.3, sigma: 0.2 };
        assert_abs_diff_eq!(g.quantile(0.975), 0.3 + 0.2 * 1.959963984540054, epsilon = 1e-9);
    }

    #[test]
    fn mixture_fixtures() {
        let ip = fixtures::flow_sw().initiation;
        let gaps = [
            MixtureComponent { t_pass_s: 7.5, theta_dot: 0.02 },
            MixtureComponent { t_pass_s: 10.5, theta_dot: 0.01 },
            MixtureComponent { t_pass_s: 14.0, theta_dot: 0.005 },
        ];
        for t in [0.0, 7.0, 8.0, 12.0] {
            assert_eq!(mixture_density(t, &gaps, &[0.0; 3], &ip).unwrap(), 0.0);
        }
        let single = link_sw(0.02, &ip).unwrap();
        for t in [6.0, 6.5, 7.0, 8.0] {
            assert_abs_diff_eq!(
                mixture_density(t, &gaps[..1], &[1.0], &ip).unwrap(),
                sw_pdf(t - 7.5, &single).unwrap(),
                epsilon = 1e-15
            );
        }
        let m = Mixture::new(&gaps, &[0.5, 0.25, 0.125], &ip).unwrap();
        let total = integrate(|t| m.density(t), 0.0, 40.0, 1e-12).value;
        assert_abs_diff_eq!(total, 0.875, epsilon = 1e-5);
        assert!(Mixture::new(&gaps, &[0.5], &ip).is_err());
    }

    #[test]
    fn larger_cue_shortens_mean_delay() {
        let ip = fixtures::flow_sw().initiation;
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let td = 0.002 * 1.1f64.powi(i);
            let sp = link_sw(td, &ip).unwrap();
            let residual = sp.b / sp.gamma;
            assert!(residual < prev);
            prev = residual;
        }
    }

    #[test]
    fn family_parses() {
        assert_eq!("sw".parse::<Family>().unwrap(), Family::ShiftedWald);
        assert_eq!("gauss".parse::<Family>().unwrap(), Family::Gaussian);
        assert!("weibull".parse::<Family>().is_err());
    }
}
