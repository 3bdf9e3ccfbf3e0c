use crate::error::{Error, Result};

use super::normal;

/// Location/scale Gaussian basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    mu: f64,
    sigma: f64,
}

impl GaussianParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Invariant(format!("gaussian mu {mu} is not finite")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Invariant(format!("gaussian sigma {sigma} must be positive")));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Open-interval check: both endpoints map to infinite quantiles.
    fn check_open(alpha: f64) -> Result<()> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "gaussian quantile level {alpha} must lie strictly inside (0, 1)"
            )))
        }
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        Self::check_open(alpha)?;
        Ok(self.mu + self.sigma * normal::inverse_cdf(alpha))
    }

    pub fn cdf(&self, y: f64) -> f64 {
        normal::cdf((y - self.mu) / self.sigma)
    }

    /// `[dq/dmu, dq/dsigma]`, returns `dq/dalpha`.
    pub fn quantile_grad(&self, alpha: f64, out: &mut [f64]) -> f64 {
        let z = normal::inverse_cdf(alpha);
        out[0] = 1.0;
        out[1] = z;
        self.sigma / normal::pdf(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_endpoints() {
        let g = GaussianParams::new(3.0, 2.0).unwrap();
        assert_eq!(g.quantile(0.5).unwrap(), 3.0);
        assert!(matches!(g.quantile(0.0), Err(Error::Domain(_))));
        assert!(matches!(g.quantile(1.0), Err(Error::Domain(_))));
        assert!(GaussianParams::new(0.0, 0.0).is_err());
    }

    #[test]
    fn symmetric_about_mu() {
        let g = GaussianParams::new(-1.25, 0.4).unwrap();
        for &a in &[0.01, 0.1, 0.33, 0.49] {
            let s = g.quantile(a).unwrap() + g.quantile(1.0 - a).unwrap();
            assert!((s - 2.0 * g.mu()).abs() < 1e-9);
        }
    }
}
