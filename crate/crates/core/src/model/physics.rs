//! Physics-encoded block: fixed-stencil known term plus the Π-block.

use super::{Bound, PeSaNet};
use crate::error::Result;
use crate::tensor::{Tape, Var};

impl PeSaNet {
    /// `coef[c] · (∇²_h u)[c]`; the stencil leaf is frozen, so only the
    /// coefficient receives gradient.
    pub(crate) fn pyconv_on(&self, tape: &mut Tape, bound: &Bound, state: Var) -> Result<Var> {
        let ids = self.physics_ids()?;
        let lap = tape.conv2d_periodic(state, bound.var(ids.stencil), None)?;
        tape.scale_channels(lap, bound.var(ids.coef))
    }

    /// `W · Π_l (K_l ⋆ u + b_l)`.
    pub(crate) fn pi_block_on(&self, tape: &mut Tape, bound: &Bound, state: Var) -> Result<Var> {
        let ids = self.physics_ids()?;
        let mut product: Option<Var> = None;
        for (&k, &b) in ids.kernels.iter().zip(&ids.biases) {
            let branch = tape.conv2d_periodic(state, bound.var(k), Some(bound.var(b)))?;
            product = Some(match product {
                Some(p) => tape.mul(p, branch)?,
                None => branch,
            });
        }
        let product = product.expect("validated N_l >= 1");
        tape.conv2d_periodic(product, bound.var(ids.proj), None)
    }
}
