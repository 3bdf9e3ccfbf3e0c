//! Quantile function with knots in PDF space.
//!
//! The density is piecewise linear through `(z_j, d_j)`, so the CDF is
//! piecewise quadratic and each bin is inverted with a closed-form root.

use crate::error::{Error, Result};

use super::check_level;

/// Tolerance on the trapezoid integral of the density.
pub const MASS_TOL: f64 = 1e-9;
/// Below this density slope a bin is inverted as if it were flat.
pub const FLAT_SLOPE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PSplineParams {
    knots: Vec<f64>,
    densities: Vec<f64>,
    // CDF at each knot
    cumulative: Vec<f64>,
}

fn trapezoid(knots: &[f64], densities: &[f64]) -> f64 {
    (0..knots.len() - 1)
        .map(|j| 0.5 * (densities[j] + densities[j + 1]) * (knots[j + 1] - knots[j]))
        .sum()
}

impl PSplineParams {
    pub fn new(knots: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        Self::validate_shape(&knots, &densities)?;
        let mass = trapezoid(&knots, &densities);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::Invariant(format!(
                "p-spline density integrates to {mass}, expected 1"
            )));
        }
        Ok(Self::build(knots, densities))
    }

    /// Rescales nonnegative `densities` to unit mass over `knots`.
    pub fn normalized(knots: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        Self::validate_shape(&knots, &densities)?;
        let mass = trapezoid(&knots, &densities);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Invariant(format!("p-spline density has mass {mass}")));
        }
        let densities = densities.into_iter().map(|d| d / mass).collect();
        Ok(Self::build(knots, densities))
    }

    fn validate_shape(knots: &[f64], densities: &[f64]) -> Result<()> {
        if knots.len() < 2 || knots.len() != densities.len() {
            return Err(Error::Invariant(format!(
                "p-spline needs >= 2 knots with matching densities, got {} and {}",
                knots.len(),
                densities.len()
            )));
        }
        if knots.iter().any(|z| !z.is_finite()) {
            return Err(Error::Invariant("p-spline knot is not finite".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invariant("p-spline knots must be strictly increasing".into()));
        }
        if let Some((j, d)) = densities
            .iter()
            .enumerate()
            .find(|(_, d)| !(d.is_finite() && **d >= 0.0))
        {
            return Err(Error::Invariant(format!(
                "p-spline density {j} = {d} must be nonnegative"
            )));
        }
        Ok(())
    }

    fn build(knots: Vec<f64>, densities: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(knots.len());
        cumulative.push(0.0);
        let mut acc = 0.0;
        for j in 0..knots.len() - 1 {
            acc += 0.5 * (densities[j] + densities[j + 1]) * (knots[j + 1] - knots[j]);
            cumulative.push(acc);
        }
        Self {
            knots,
            densities,
            cumulative,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    /// Number of bins (one less than the knot count).
    pub fn bins(&self) -> usize {
        self.knots.len() - 1
    }

    /// `z_0..z_K, d_0..d_K`
    pub fn param_count(&self) -> usize {
        2 * self.knots.len()
    }

    /// Trapezoid integral of the density.
    pub fn mass(&self) -> f64 {
        self.cumulative[self.bins()]
    }

    pub fn lower(&self) -> f64 {
        self.knots[0]
    }

    pub fn upper(&self) -> f64 {
        self.knots[self.bins()]
    }

    /// CDF at every knot.
    pub fn knot_levels(&self) -> &[f64] {
        &self.cumulative
    }

    fn bin(&self, alpha: f64) -> usize {
        let idx = self.cumulative[1..].partition_point(|&c| c < alpha);
        idx.min(self.bins() - 1)
    }

    /// Offset from the bin's left knot solving `CDF = alpha`.
    fn offset_in_bin(&self, j: usize, alpha: f64) -> f64 {
        let r = alpha - self.cumulative[j];
        let width = self.knots[j + 1] - self.knots[j];
        if r <= 0.0 {
            return 0.0;
        }
        let d0 = self.densities[j];
        let slope = (self.densities[j + 1] - d0) / width;
        let u = if slope.abs() < FLAT_SLOPE {
            if d0 > 0.0 {
                r / d0
            } else {
                width
            }
        } else {
            let disc = (d0 * d0 + 2.0 * slope * r).max(0.0);
            let denom = d0 + disc.sqrt();
            if denom > 0.0 {
                2.0 * r / denom
            } else {
                width
            }
        };
        u.clamp(0.0, width)
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        check_level(alpha)?;
        let j = self.bin(alpha);
        Ok(self.knots[j] + self.offset_in_bin(j, alpha))
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y <= self.lower() {
            return 0.0;
        }
        if y >= self.upper() {
            return 1.0;
        }
        let idx = self.knots[1..].partition_point(|&z| z < y);
        let j = idx.min(self.bins() - 1);
        let width = self.knots[j + 1] - self.knots[j];
        let u = y - self.knots[j];
        let slope = (self.densities[j + 1] - self.densities[j]) / width;
        (self.cumulative[j] + self.densities[j] * u + 0.5 * slope * u * u).clamp(0.0, 1.0)
    }

    pub fn pdf(&self, y: f64) -> f64 {
        if y < self.lower() || y > self.upper() {
            return 0.0;
        }
        let idx = self.knots[1..].partition_point(|&z| z < y);
        let j = idx.min(self.bins() - 1);
        let t = (y - self.knots[j]) / (self.knots[j + 1] - self.knots[j]);
        self.densities[j] * (1.0 - t) + self.densities[j + 1] * t
    }

    /// Partials of the quantile with respect to `z, d` (treated as free
    /// coordinates), plus `dq/dalpha`. Uses implicit differentiation of
    /// `CDF(q) = alpha` inside the selected bin.
    pub fn quantile_grad(&self, alpha: f64, out: &mut [f64]) -> f64 {
        let n = self.knots.len();
        debug_assert_eq!(out.len(), self.param_count());
        out.iter_mut().for_each(|g| *g = 0.0);
        let (z, d) = (&self.knots, &self.densities);
        let j = self.bin(alpha);
        let u = self.offset_in_bin(j, alpha);
        let width = z[j + 1] - z[j];
        let dd = d[j + 1] - d[j];
        let density = (d[j] + dd * u / width).max(1e-300);

        // dG/dtheta where G(y) = C_j + d_j u + dd u^2 / (2 width) - alpha
        let (dz, rest) = out.split_at_mut(n);
        let dens = &mut rest[..n];
        for k in 0..j {
            // trapezoid k contributes to C_j
            let wk = z[k + 1] - z[k];
            dens[k] += 0.5 * wk;
            dens[k + 1] += 0.5 * wk;
            let avg = 0.5 * (d[k] + d[k + 1]);
            dz[k] -= avg;
            dz[k + 1] += avg;
        }
        let half_u2 = 0.5 * u * u;
        dens[j] += u - half_u2 / width;
        dens[j + 1] += half_u2 / width;
        dz[j] += -density + dd * half_u2 / (width * width);
        dz[j + 1] += -dd * half_u2 / (width * width);

        let scale = -1.0 / density;
        out.iter_mut().for_each(|g| *g *= scale);
        1.0 / density
    }

    pub fn lower_grad(&self, out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        out[0] = 1.0;
    }

    pub fn upper_grad(&self, out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        out[self.bins()] = 1.0;
    }

    pub(crate) fn to_vec(&self) -> Vec<f64> {
        let mut v = self.knots.clone();
        v.extend_from_slice(&self.densities);
        v
    }

    /// Rebuild from the flat `z, d` layout without the mass check.
    #[doc(hidden)]
    pub fn from_vec_unchecked(v: &[f64]) -> Self {
        let n = v.len() / 2;
        Self::build(v[..n].to_vec(), v[n..].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_identity() {
        let p = PSplineParams::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!((p.quantile(0.7).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn ramp_density_inverts_square() {
        let p = PSplineParams::new(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        assert!((p.quantile(0.25).unwrap() - 0.5).abs() < 1e-15);
        assert!((p.cdf(0.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn left_endpoint_and_clamps() {
        let p = PSplineParams::new(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(p.quantile(0.0).unwrap(), 0.0);
        assert_eq!(p.quantile(1.0).unwrap(), 2.0);
        assert_eq!(p.cdf(-1.0), 0.0);
        assert_eq!(p.cdf(3.0), 1.0);
        assert!(p.quantile(1.5).is_err());
    }

    #[test]
    fn zero_mass_bins_are_skipped() {
        let p = PSplineParams::normalized(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        // no mass on [0, 1]
        let q = p.quantile(0.25).unwrap();
        assert!(q > 1.0 && q < 2.0, "{q}");
        assert!((p.cdf(q) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn normalizing_constructor_gives_unit_mass() {
        let p = PSplineParams::normalized(vec![-1.0, 0.3, 2.0], vec![0.2, 3.0, 0.7]).unwrap();
        assert!((p.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(PSplineParams::new(vec![0.0], vec![1.0]).is_err());
        assert!(PSplineParams::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(PSplineParams::new(vec![0.0, 1.0], vec![-1.0, 3.0]).is_err());
        assert!(PSplineParams::new(vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(PSplineParams::normalized(vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
    }
}
