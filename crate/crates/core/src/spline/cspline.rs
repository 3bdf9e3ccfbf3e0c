//! Quantile function with knots in CDF space.
//!
//! Bin `i` spans target values `[L_{i-1}, L_i]` and levels `[a_{i-1}, a_i]`
//! where `L_i = l0 + sum(w[..=i])` and `a_i = sum(h[..=i])`. Between knots the
//! quantile is linear in the level.

use crate::error::{Error, Result};

use super::check_level;

/// Tolerance on the sum of the heights.
pub const HEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CSplineParams {
    offset: f64,
    widths: Vec<f64>,
    heights: Vec<f64>,
    // cumulative knots, length K + 1
    locations: Vec<f64>,
    levels: Vec<f64>,
}

impl CSplineParams {
    pub fn new(offset: f64, widths: Vec<f64>, heights: Vec<f64>) -> Result<Self> {
        if widths.is_empty() || widths.len() != heights.len() {
            return Err(Error::Invariant(format!(
                "c-spline needs matching non-empty widths/heights, got {} and {}",
                widths.len(),
                heights.len()
            )));
        }
        if !offset.is_finite() {
            return Err(Error::Invariant(format!("c-spline offset {offset} is not finite")));
        }
        if let Some((i, w)) = widths.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Invariant(format!("c-spline width {i} = {w} must be positive")));
        }
        if let Some((i, h)) = heights.iter().enumerate().find(|(_, h)| !(h.is_finite() && **h > 0.0)) {
            return Err(Error::Invariant(format!("c-spline height {i} = {h} must be positive")));
        }
        let total: f64 = heights.iter().sum();
        if (total - 1.0).abs() > HEIGHT_SUM_TOL {
            return Err(Error::Invariant(format!("c-spline heights sum to {total}, expected 1")));
        }

        let mut locations = Vec::with_capacity(widths.len() + 1);
        let mut levels = Vec::with_capacity(widths.len() + 1);
        locations.push(offset);
        levels.push(0.0);
        let (mut loc, mut lev) = (offset, 0.0);
        for (w, h) in widths.iter().zip(&heights) {
            loc += w;
            lev += h;
            locations.push(loc);
            levels.push(lev);
        }
        for win in locations.windows(2) {
            if win[1] <= win[0] {
                return Err(Error::Invariant(
                    "c-spline knot locations are not strictly increasing (width below float resolution)".into(),
                ));
            }
        }
        Ok(Self {
            offset,
            widths,
            heights,
            locations,
            levels,
        })
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Knot locations `L_0..=L_K`.
    pub fn knot_locations(&self) -> &[f64] {
        &self.locations
    }

    /// Knot levels `a_0..=a_K`.
    pub fn knot_levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn knots(&self) -> usize {
        self.widths.len()
    }

    /// `l0, w_1..w_K, h_1..h_K`
    pub fn param_count(&self) -> usize {
        2 * self.knots() + 1
    }

    pub fn lower(&self) -> f64 {
        self.offset
    }

    pub fn upper(&self) -> f64 {
        self.locations[self.knots()]
    }

    /// Bin index (1-based) holding `alpha`; knots resolve to the left bin.
    fn bin(&self, alpha: f64) -> usize {
        let k = self.knots();
        let idx = self.levels[1..].partition_point(|&a| a < alpha);
        (idx + 1).min(k)
    }

    /// Position inside the bin, clamped to `[0, 1]`.
    fn fraction(&self, bin: usize, alpha: f64) -> (f64, bool) {
        let t = (alpha - self.levels[bin - 1]) / self.heights[bin - 1];
        if t > 1.0 {
            (1.0, true)
        } else if t < 0.0 {
            (0.0, true)
        } else {
            (t, false)
        }
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        check_level(alpha)?;
        let bin = self.bin(alpha);
        let (t, _) = self.fraction(bin, alpha);
        Ok(self.locations[bin - 1] + self.widths[bin - 1] * t)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y <= self.lower() {
            return 0.0;
        }
        if y >= self.upper() {
            return 1.0;
        }
        let idx = self.locations[1..].partition_point(|&l| l < y);
        let bin = (idx + 1).min(self.knots());
        let frac = (y - self.locations[bin - 1]) / self.widths[bin - 1];
        (self.levels[bin - 1] + self.heights[bin - 1] * frac).clamp(0.0, 1.0)
    }

    /// Partials of the quantile with respect to `l0, w, h`, plus `dq/dalpha`.
    pub fn quantile_grad(&self, alpha: f64, out: &mut [f64]) -> f64 {
        let k = self.knots();
        debug_assert_eq!(out.len(), self.param_count());
        out.iter_mut().for_each(|g| *g = 0.0);
        let bin = self.bin(alpha);
        let (t, clamped) = self.fraction(bin, alpha);
        let i = bin - 1;
        out[0] = 1.0;
        for g in &mut out[1..1 + i] {
            *g = 1.0;
        }
        out[1 + i] = t;
        if clamped {
            return 0.0;
        }
        let hi = self.heights[i];
        let wi = self.widths[i];
        // levels a_{i-1} depend on every earlier height
        for g in &mut out[1 + k..1 + k + i] {
            *g = -wi / hi;
        }
        out[1 + k + i] = -(alpha - self.levels[i]) * wi / (hi * hi);
        wi / hi
    }

    /// Gradient of `q(1) = l0 + sum(w)`.
    pub fn upper_grad(&self, out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for g in &mut out[..=self.knots()] {
            *g = 1.0;
        }
    }

    /// Gradient of `q(0) = l0`.
    pub fn lower_grad(&self, out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        out[0] = 1.0;
    }

    pub(crate) fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.push(self.offset);
        v.extend_from_slice(&self.widths);
        v.extend_from_slice(&self.heights);
        v
    }

    /// Rebuild from the flat `l0, w, h` layout without the height-sum check.
    ///
    /// Only used to perturb single coordinates in derivative checks.
    #[doc(hidden)]
    pub fn from_vec_unchecked(v: &[f64]) -> Self {
        let k = (v.len() - 1) / 2;
        let offset = v[0];
        let widths = v[1..=k].to_vec();
        let heights = v[k + 1..].to_vec();
        let mut locations = vec![offset];
        let mut levels = vec![0.0];
        for j in 0..k {
            locations.push(locations[j] + widths[j]);
            levels.push(levels[j] + heights[j]);
        }
        Self {
            offset,
            widths,
            heights,
            locations,
            levels,
        }
    }
}
