//! Next-unit prediction.
//!
//! Anything that can rank the next subword unit given a unit context can be
//! evaluated: the in-process [`NGramModel`] or an out-of-process model reached
//! through [`RemotePredictor`].

mod ngram;
pub mod protocol;
mod remote;

use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};
use crate::tokenizer::UnitId;

pub use ngram::{train_ngram, NGramModel, DEFAULT_DISCOUNT};
pub use remote::{RemoteEndpoint, RemotePredictor};

/// The top of a next-unit distribution, most probable first.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDistribution {
    pub top: Vec<(UnitId, f64)>,
    /// Probability mass covered by `top`.
    pub total_mass_accounted: f64,
}

impl UnitDistribution {
    /// Builds a distribution from full per-unit log-probabilities (index =
    /// unit id), keeping the best `k`. Ties go to the lower unit id.
    pub fn from_logprobs(logprobs: &[f64], k: usize) -> Self {
        let mut order: Vec<u32> = (0..logprobs.len() as u32).collect();
        let by_rank = |a: &u32, b: &u32| {
            logprobs[*b as usize]
                .total_cmp(&logprobs[*a as usize])
                .then_with(|| a.cmp(b))
        };
        let k = k.min(order.len());
        if k < order.len() && k > 0 {
            order.select_nth_unstable_by(k - 1, by_rank);
            order.truncate(k);
        }
        order.sort_unstable_by(by_rank);
        order.truncate(k);
        let top: Vec<_> = order
            .into_iter()
            .map(|i| (UnitId(i), logprobs[i as usize]))
            .collect();
        let total_mass_accounted = top.iter().map(|&(_, lp)| lp.exp()).sum::<f64>().min(1.0);
        UnitDistribution {
            top,
            total_mass_accounted,
        }
    }

    pub fn argmax(&self) -> Option<UnitId> {
        self.top.first().map(|&(u, _)| u)
    }

    pub fn rank_of(&self, unit: UnitId) -> Option<usize> {
        self.top.iter().position(|&(u, _)| u == unit)
    }

    pub fn logprob_of(&self, unit: UnitId) -> Option<f64> {
        self.top.iter().find(|&&(u, _)| u == unit).map(|&(_, lp)| lp)
    }

    /// Checks ordering and range of the reported log-probabilities.
    pub fn validate(&self) -> Result<()> {
        for w in self.top.windows(2) {
            if w[1].1 > w[0].1 {
                return Err(Error::Numeric(format!(
                    "distribution not sorted: unit {} ({}) after unit {} ({})",
                    w[1].0, w[1].1, w[0].0, w[0].1
                )));
            }
        }
        if let Some(&(u, lp)) = self.top.iter().find(|(_, lp)| !(lp.is_finite() && *lp <= 0.0)) {
            return Err(Error::Numeric(format!("unit {u} has log-probability {lp}")));
        }
        Ok(())
    }
}

pub trait Predictor: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// The `k` most probable next units after `context`. `k` larger than the
    /// vocabulary is clamped.
    fn predict(&self, context: &[UnitId], k: usize) -> Result<UnitDistribution>;

    /// Log-probability of one particular next unit. The default asks for the
    /// whole distribution, which implementations with direct access override.
    fn unit_logprob(&self, context: &[UnitId], unit: UnitId) -> Result<f64> {
        let dist = self.predict(context, self.vocab_size())?;
        dist.logprob_of(unit).ok_or_else(|| {
            Error::Numeric(format!("unit {unit} missing from the full distribution"))
        })
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn predict(&self, context: &[UnitId], k: usize) -> Result<UnitDistribution> {
        (**self).predict(context, k)
    }

    fn unit_logprob(&self, context: &[UnitId], unit: UnitId) -> Result<f64> {
        (**self).unit_logprob(context, unit)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn predict(&self, context: &[UnitId], k: usize) -> Result<UnitDistribution> {
        (**self).predict(context, k)
    }

    fn unit_logprob(&self, context: &[UnitId], unit: UnitId) -> Result<f64> {
        (**self).unit_logprob(context, unit)
    }
}

pub(crate) fn clamp_k(k: usize, vocab_size: usize, warned: &AtomicBool) -> Result<usize> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    if k > vocab_size {
        if !warned.swap(true, Ordering::Relaxed) {
            log::warn!("k={k} exceeds vocabulary size {vocab_size}; clamping");
        }
        return Ok(vocab_size);
    }
    Ok(k)
}

/// Every unit equally likely, whatever the context.
#[derive(Debug, Default)]
pub struct UniformPredictor {
    size: usize,
    warned: AtomicBool,
}

impl UniformPredictor {
    pub fn new(vocab_size: usize) -> Self {
        UniformPredictor {
            size: vocab_size,
            warned: AtomicBool::new(false),
        }
    }
}

impl Predictor for UniformPredictor {
    fn vocab_size(&self) -> usize {
        self.size
    }

    fn predict(&self, _context: &[UnitId], k: usize) -> Result<UnitDistribution> {
        let k = clamp_k(k, self.size, &self.warned)?;
        let lp = -(self.size as f64).ln();
        let top: Vec<_> = (0..k as u32).map(|i| (UnitId(i), lp)).collect();
        Ok(UnitDistribution {
            total_mass_accounted: k as f64 / self.size as f64,
            top,
        })
    }

    fn unit_logprob(&self, _context: &[UnitId], unit: UnitId) -> Result<f64> {
        if unit.index() >= self.size {
            return Err(Error::Domain(format!("unit {unit} outside vocabulary")));
        }
        Ok(-(self.size as f64).ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_everywhere() {
        let p = UniformPredictor::new(50);
        let d = p.predict(&[UnitId(3), UnitId(7)], 50).unwrap();
        assert_eq!(d.top.len(), 50);
        for (_, lp) in &d.top {
            assert!((lp.exp() - 1.0 / 50.0).abs() < 1e-15);
        }
        assert!((d.total_mass_accounted - 1.0).abs() < 1e-12);
        assert_eq!(p.unit_logprob(&[], UnitId(49)).unwrap(), -(50f64).ln());
    }

    #[test]
    fn k_is_clamped() {
        let p = UniformPredictor::new(4);
        assert_eq!(p.predict(&[], 10).unwrap().top.len(), 4);
        assert!(p.predict(&[], 0).is_err());
    }

    #[test]
    fn from_logprobs_breaks_ties_by_id() {
        let lps = [-1.0, -0.5, -1.0, -0.5, -3.0];
        let d = UnitDistribution::from_logprobs(&lps, 3);
        let ids: Vec<_> = d.top.iter().map(|(u, _)| u.0).collect();
        assert_eq!(ids, vec![1, 3, 0]);
        assert_eq!(UnitDistribution::from_logprobs(&lps, 1).argmax(), Some(UnitId(1)));
        let full = UnitDistribution::from_logprobs(&lps, 5);
        assert_eq!(full.top.iter().map(|(u, _)| u.0).collect::<Vec<_>>(), vec![1, 3, 0, 2, 4]);
        d.validate().unwrap();
    }

    #[test]
    fn validate_rejects_unsorted() {
        let d = UnitDistribution {
            top: vec![(UnitId(0), -2.0), (UnitId(1), -1.0)],
            total_mass_accounted: 0.5,
        };
        assert!(d.validate().is_err());
    }
}
