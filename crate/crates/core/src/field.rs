//! Query interface shared by the planners.

use crate::{Posterior, Vec2};

/// A queryable environment: posterior traversability, obstacle distance and
/// variance with their spatial gradients.
///
/// [`crate::GprModel`] is the production implementation; the trait lets tests
/// plug in closed-form fields.
pub trait Field: Sync {
    fn infer(&self, q: &Vec2) -> Posterior;

    fn infer_batch(&self, qs: &[Vec2]) -> Vec<Posterior> {
        qs.iter().map(|q| self.infer(q)).collect()
    }

    /// Posterior mean of the obstacle distance only.
    fn mean_distance(&self, q: &Vec2) -> f64 {
        self.infer(q).mean_d
    }
}
