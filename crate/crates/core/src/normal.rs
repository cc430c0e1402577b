//! Standard normal distribution helpers and Gauss–Hermite rules.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// Standard normal distribution function, accurate in both tails.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Gauss–Hermite rule for expectations of a standard normal variable:
/// `E[f(Z)] ≈ Σ w_i f(x_i)` with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes of the physicists' Hermite polynomial `H_n` found by Newton
    /// iteration from the usual asymptotic starting values, rescaled to the
    /// standard normal measure.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let mut roots = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let pim4 = libm::pow(PI, -0.25);
        let nf = n as f64;
        let m = n.div_ceil(2);
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => libm::sqrt(2.0 * nf + 1.0) - 1.85575 * libm::pow(2.0 * nf + 1.0, -1.0 / 6.0),
                1 => z - 1.14 * libm::pow(nf, 0.426) / z,
                2 => 1.86 * z - 0.86 * roots[0],
                3 => 1.91 * z - 0.91 * roots[1],
                _ => 2.0 * z - roots[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                // Orthonormal Hermite recurrence.
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * libm::sqrt(2.0 / (jf + 1.0)) * p2 - libm::sqrt(jf / (jf + 1.0)) * p3;
                }
                pp = libm::sqrt(2.0 * nf) * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if libm::fabs(z - z1) <= 1e-15 * libm::fabs(z).max(1.0) {
                    break;
                }
            }
            roots[i] = z;
            roots[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        // ∫ e^{-x²} f(x) dx  →  E[f(Z)] with Z = √2 x.
        let scale = 1.0 / libm::sqrt(PI);
        let nodes = roots.iter().rev().map(|x| x * core::f64::consts::SQRT_2).collect();
        let weights = weights.iter().rev().map(|w| w * scale).collect();
        GaussHermite { nodes, weights }
    }

    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}
