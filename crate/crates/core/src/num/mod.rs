//! Small dense numeric core used by every learned model.
//!
//! There is no autodiff graph: each model derives its gradients by hand and
//! [`grad_check`] verifies them against central differences.

mod adam;
mod checkpoint;
mod gradcheck;
mod ops;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{grad_check, GradCheckReport};
pub use ops::{
    bce_loss, bce_with_logits, clip_prob, dot, masked_softmax, sigmoid, softmax, PROB_EPS,
};
pub use tensor::Tensor2;

/// A model whose learnable state is a fixed list of named tensors.
///
/// Block order is part of the checkpoint layout and must be stable.
pub trait Parameterized {
    fn blocks(&self) -> Vec<(&'static str, &Tensor2)>;
    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Tensor2)>;

    fn n_params(&self) -> usize {
        self.blocks().iter().map(|(_, t)| t.len()).sum()
    }

    fn fill_zero(&mut self) {
        for (_, t) in self.blocks_mut() {
            t.fill(0.0);
        }
    }

    /// `self += scale * other`, block by block.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        let src: Vec<&Tensor2> = other.blocks().into_iter().map(|(_, t)| t).collect();
        for ((_, dst), s) in self.blocks_mut().into_iter().zip(src) {
            dst.add_scaled(s, scale);
        }
    }

    fn all_finite(&self) -> bool {
        self.blocks().iter().all(|(_, t)| t.is_finite())
    }
}
