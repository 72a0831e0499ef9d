//! Histogram value coding in `psi(z) = log2(-z)` space.

use statrs::function::erf::erf;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("value {0} is not negative")]
    NonNegative(f64),
    #[error("histogram has {got} bins, codec expects {want}")]
    Bins { got: usize, want: usize },
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlGauss {
    pub bins: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub sigma: f64,
}

impl Default for HlGauss {
    fn default() -> Self {
        HlGauss {
            bins: 18,
            z_min: -1.0,
            z_max: 16.0,
            sigma: 0.75,
        }
    }
}

/// An encoded value and whether it had to be clamped into range.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub probs: Vec<f64>,
    pub clamped: bool,
}

impl HlGauss {
    pub fn width(&self) -> f64 {
        (self.z_max - self.z_min) / self.bins as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let eta = self.width();
        (1..=self.bins).map(|i| self.z_min + eta * (i as f64 - 0.5)).collect()
    }

    pub fn psi(z: f64) -> f64 {
        (-z).log2()
    }

    /// Smallest and largest representable values, `-2^z_max` and `-2^z_min`.
    pub fn value_range(&self) -> (f64, f64) {
        (-self.z_max.exp2(), -self.z_min.exp2())
    }

    pub fn encode(&self, z: f64) -> Result<Encoded, CodecError> {
        if z >= 0.0 || z.is_nan() {
            return Err(CodecError::NonNegative(z));
        }
        let raw = Self::psi(z);
        let psi = raw.clamp(self.z_min, self.z_max);
        let eta = self.width();
        let mut probs: Vec<f64> = self
            .centers()
            .iter()
            .map(|&c| {
                std_normal_cdf((c + eta / 2.0 - psi) / self.sigma) - std_normal_cdf((c - eta / 2.0 - psi) / self.sigma)
            })
            .collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        Ok(Encoded {
            probs,
            clamped: psi != raw,
        })
    }

    /// Expectation in the original space, `sum_i p_i * (-2^c_i)`.
    pub fn decode(&self, probs: &[f64]) -> Result<f64, CodecError> {
        if probs.len() != self.bins {
            return Err(CodecError::Bins {
                got: probs.len(),
                want: self.bins,
            });
        }
        Ok(probs.iter().zip(self.centers()).map(|(p, c)| -p * c.exp2()).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_span_range() {
        let h = HlGauss::default();
        let c = h.centers();
        assert_eq!(c.len(), 18);
        assert!((c[0] - (-1.0 + 17.0 / 36.0)).abs() < 1e-12);
        assert!((c[17] - (16.0 - 17.0 / 36.0)).abs() < 1e-12);
    }

    #[test]
    fn minus_one_concentrates_near_zero() {
        let h = HlGauss::default();
        let e = h.encode(-1.0).unwrap();
        assert!(!e.clamped);
        // psi = 0 lies in bin 1 (edges 17/18 - 1 and 2*17/18 - 1)
        let best = crate::policy::argmax(&e.probs);
        assert_eq!(best, 1);
    }

    #[test]
    fn top_edge_not_clamped() {
        let h = HlGauss::default();
        let e = h.encode(-(16f64.exp2())).unwrap();
        assert!(!e.clamped);
        assert_eq!(crate::policy::argmax(&e.probs), 17);
        assert!(h.encode(-(17f64.exp2())).unwrap().clamped);
    }

    #[test]
    fn non_negative_rejected() {
        let h = HlGauss::default();
        assert!(h.encode(0.0).is_err());
        assert!(h.encode(3.0).is_err());
    }

    #[test]
    fn normalized() {
        let h = HlGauss::default();
        for k in 0..1000 {
            let z = -(0.5 + k as f64 * 37.3);
            let s: f64 = h.encode(z).unwrap().probs.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_definitions() {
        let h = HlGauss::default();
        let c = h.centers();
        let mut one_hot = vec![0.0; 18];
        one_hot[5] = 1.0;
        assert!((h.decode(&one_hot).unwrap() + c[5].exp2()).abs() < 1e-12);
        let mut two = vec![0.0; 18];
        two[5] = 0.5;
        two[6] = 0.5;
        let want = -(c[5].exp2() + c[6].exp2()) / 2.0;
        assert!((h.decode(&two).unwrap() - want).abs() < 1e-12);
    }
}
