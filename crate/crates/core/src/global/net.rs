use rand_chacha::ChaCha8Rng;

use crate::nn::{backward_masked, forward_split, LossOutput, ModelSpec, OptimizerState, ParamSet, Segment, Tensor, Trainable};
use crate::protocol::epoch_batches;

use super::{FitConfig, GlobalError};

/// A small dense network trained as a whole; its two parameter segments
/// are just the storage split the engine requires.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallNet {
    pub spec: ModelSpec,
    pub lower: ParamSet,
    pub upper: ParamSet,
}

impl SmallNet {
    pub fn init(spec: ModelSpec, rng: &mut ChaCha8Rng) -> Self {
        let lower = ParamSet::init(&spec, Segment::Backbone, rng);
        let upper = ParamSet::init(&spec, Segment::Head, rng);
        Self { spec, lower, upper }
    }

    pub fn new(spec: ModelSpec, lower: ParamSet, upper: ParamSet) -> Result<Self, GlobalError> {
        if lower.segment() != Segment::Backbone || upper.segment() != Segment::Head {
            return Err(GlobalError::Mismatch("network segments given in the wrong order".into()));
        }
        lower.validate(&spec)?;
        upper.validate(&spec)?;
        Ok(Self { spec, lower, upper })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, GlobalError> {
        Ok(forward_split(&self.spec, &self.lower, &self.upper, x)?.logits)
    }

    /// Mini-batch training over the rows of `x`; `loss` maps a batch's
    /// outputs and row indices to the loss and its output gradient.
    pub fn fit(
        &mut self,
        x: &Tensor,
        cfg: &FitConfig,
        rng: &mut ChaCha8Rng,
        mut loss: impl FnMut(&Tensor, &[usize]) -> Result<LossOutput, GlobalError>,
    ) -> Result<(), GlobalError> {
        cfg.validate()?;
        let mut opt_lower = OptimizerState::new(cfg.optimizer, &self.lower);
        let mut opt_upper = OptimizerState::new(cfg.optimizer, &self.upper);
        for _ in 0..cfg.epochs {
            for rows in epoch_batches(x.rows(), cfg.batch_size, rng) {
                let xb = x.select_rows(&rows);
                let out = self.forward(&xb)?;
                let l = loss(&out, &rows)?;
                let g = backward_masked(&self.spec, &self.lower, &self.upper, &xb, &l.dlogits, Trainable::Both)?;
                opt_lower.apply(&mut self.lower, g.backbone.as_ref().unwrap(), cfg.lr)?;
                opt_upper.apply(&mut self.upper, g.head.as_ref().unwrap(), cfg.lr)?;
            }
        }
        Ok(())
    }
}
