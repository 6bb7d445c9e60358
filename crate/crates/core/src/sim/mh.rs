//! Random-walk Metropolis–Hastings with a symmetric Gaussian proposal.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetropolisHastings {
    pub proposal_width: f64,
    pub burn_in: usize,
    /// Keep every `thin`-th state after burn-in.
    pub thin: usize,
}

impl Default for MetropolisHastings {
    fn default() -> Self {
        Self {
            proposal_width: 1.0,
            burn_in: 500,
            thin: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<f64>,
    pub acceptance_rate: f64,
}

/// Move `start` outward in steps of `width` until the target is positive.
fn find_support<F: Fn(f64) -> f64>(target: &F, start: f64, width: f64) -> Result<f64> {
    if target(start) > 0.0 {
        return Ok(start);
    }
    let step = width.max(1e-3);
    for k in 1..=1000 {
        for x in [start + k as f64 * step, start - k as f64 * step] {
            if target(x) > 0.0 {
                return Ok(x);
            }
        }
    }
    Err(Error::ZeroDensityStart)
}

struct Walker<'a, F> {
    target: &'a F,
    width: f64,
    x: f64,
    fx: f64,
    accepted: usize,
    steps: usize,
}

impl<F: Fn(f64) -> f64> Walker<'_, F> {
    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let z: f64 = rng.sample(StandardNormal);
        let y = self.x + self.width * z;
        let fy = (self.target)(y);
        self.steps += 1;
        // symmetric proposal: the Q ratio cancels
        if fy > 0.0 && (fy >= self.fx || rng.random::<f64>() < fy / self.fx) {
            self.x = y;
            self.fx = fy;
            self.accepted += 1;
        }
    }
}

impl MetropolisHastings {
    fn validate(&self) -> Result<()> {
        if !(self.proposal_width > 0.0) || !self.proposal_width.is_finite() {
            return Err(Error::InvalidParams("proposal width must be positive".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParams("thinning interval must be at least 1".into()));
        }
        Ok(())
    }

    /// Draw `n` thinned states of a chain targeting the unnormalized `target`.
    pub fn chain<F, R>(&self, target: F, start: f64, n: usize, rng: &mut R) -> Result<Chain>
    where
        F: Fn(f64) -> f64,
        R: Rng + ?Sized,
    {
        self.validate()?;
        let x = find_support(&target, start, self.proposal_width)?;
        let mut w = Walker {
            target: &target,
            width: self.proposal_width,
            x,
            fx: target(x),
            accepted: 0,
            steps: 0,
        };
        for _ in 0..self.burn_in {
            w.step(rng);
        }
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..self.thin {
                w.step(rng);
            }
            samples.push(w.x);
        }
        let acceptance_rate = if w.steps == 0 {
            1.0
        } else {
            w.accepted as f64 / w.steps as f64
        };
        Ok(Chain {
            samples,
            acceptance_rate,
        })
    }
}

/// The state of a fresh chain after `iterations` steps from `start`.
pub fn mh_sample<F, R>(target: F, start: f64, proposal_width: f64, iterations: usize, rng: &mut R) -> Result<f64>
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    let mh = MetropolisHastings {
        proposal_width,
        burn_in: iterations.saturating_sub(1),
        thin: 1,
    };
    if iterations == 0 {
        mh.validate()?;
        return find_support(&target, start, proposal_width);
    }
    Ok(mh.chain(target, start, 1, rng)?.samples[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::ks_two_sample;
    use crate::initiation::{sample_sw, sw_pdf, SwParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn agrees_with_exact_sampler() {
        let p = SwParams::new(1.0, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let exact: Vec<f64> = (0..100_000).map(|_| sample_sw(&p, &mut rng).unwrap()).collect();
        let mh = MetropolisHastings {
            proposal_width: 2.0,
            burn_in: 1000,
            thin: 20,
        };
        let chain = mh
            .chain(|x| sw_pdf(x, &p).unwrap_or(0.0), 1.0, 100_000, &mut rng)
            .unwrap();
        let ks = ks_two_sample(&exact, &chain.samples).unwrap();
        assert!(ks.p > 0.01, "K-S p = {}", ks.p);
    }

    #[test]
    fn symmetric_target_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mh = MetropolisHastings {
            proposal_width: 2.5,
            burn_in: 200,
            thin: 5,
        };
        let chain = mh.chain(|x| (-0.5 * (x - 2.0) * (x - 2.0)).exp(), 0.0, 20_000, &mut rng).unwrap();
        let mean = chain.samples.iter().sum::<f64>() / chain.samples.len() as f64;
        // effective size is well above 2000 at this thinning
        assert!((mean - 2.0).abs() < 4.0 / 2000f64.sqrt(), "mean {mean}");
    }

    #[test]
    fn vanishing_moves_are_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let target = |x: f64| (-x * x).exp();
        let rate = |w: f64, rng: &mut ChaCha8Rng| {
            MetropolisHastings {
                proposal_width: w,
                burn_in: 0,
                thin: 1,
            }
            .chain(target, 0.3, 5000, rng)
            .unwrap()
            .acceptance_rate
        };
        let wide = rate(1.0, &mut rng);
        let narrow = rate(1e-6, &mut rng);
        assert!(narrow > 0.999 && narrow > wide);
    }

    #[test]
    fn start_outside_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let positive = |x: f64| if x > 5.0 { (-(x - 5.0)).exp() } else { 0.0 };
        assert!(mh_sample(positive, 0.0, 1.0, 100, &mut rng).unwrap() > 5.0);
        assert!(matches!(
            mh_sample(|_| 0.0, 0.0, 1.0, 10, &mut rng),
            Err(Error::ZeroDensityStart)
        ));
    }
}
