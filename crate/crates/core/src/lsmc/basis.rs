use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// Tent functions `ψ_j(x) = (1 − |z_j − x|/h)⁺` with `J` equidistant peaks
/// centred on zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HutBasis {
    count: usize,
    spacing: f64,
}

impl HutBasis {
    pub fn new(count: usize, spacing: f64) -> Result<Self> {
        if count < 2 {
            return Err(invalid(format!("hut basis needs at least two peaks, got {count}")));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(invalid(format!("peak spacing must be positive, got {spacing}")));
        }
        Ok(HutBasis { count, spacing })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn peak(&self, j: usize) -> f64 {
        (j as f64 - 0.5 * (self.count - 1) as f64) * self.spacing
    }

    pub fn peaks(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.peak(j)).collect()
    }

    pub fn first_peak(&self) -> f64 {
        self.peak(0)
    }

    pub fn last_peak(&self) -> f64 {
        self.peak(self.count - 1)
    }

    pub fn eval(&self, j: usize, x: f64) -> f64 {
        (1.0 - (self.peak(j) - x).abs() / self.spacing).max(0.0)
    }

    /// The (at most two) non-zero basis values at `x`. Weights come from the
    /// fractional position so that interior rows sum to one and no third
    /// neighbour picks up a roundoff-sized value.
    pub fn support(&self, x: f64) -> impl Iterator<Item = (usize, f64)> {
        let last = self.count - 1;
        let pos = (x - self.first_peak()) / self.spacing;
        let pair = if pos <= 0.0 {
            [(0, 1.0 + pos), (1, 0.0)]
        } else if pos >= last as f64 {
            [(last, 1.0 - (pos - last as f64)), (last, 0.0)]
        } else {
            let left = (libm::floor(pos) as usize).min(last - 1);
            let w = pos - left as f64;
            [(left, 1.0 - w), (left + 1, w)]
        };
        pair.into_iter().filter(|(_, v)| *v > 0.0)
    }
}
