//! Spectral-enhanced block.
//!
//! The encoder lifts the state to `enc_width` channels, which are transformed
//! with an unnormalized FFT. Attention pools the real and imaginary parts
//! separately over all bins (mean and max), feeds each pooled vector through
//! its own one-hidden-layer MLP, and squashes the sums with a sigmoid:
//!
//! ```text
//! att_re = σ(MLP1(avg X) + MLP2(max X))      att_im = σ(MLP3(avg Y) + MLP4(max Y))
//! X_p + iY_p = (X + iY) · (att_re + i·att_im)      per channel, over every bin
//! ```
//!
//! The processed spectrum is added back onto the input, truncated to the
//! retained low-wavenumber bins, mixed across channels per bin by a learned
//! complex matrix, projected onto conjugate-symmetric spectra and inverted.

use super::{Bound, MlpIds, PeSaNet, Variant};
use crate::error::Result;
use crate::tensor::{Tape, Var};

/// Tape handles produced by the attention stage.
#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    pub att_re: Var,
    pub att_im: Var,
    pub processed: Var,
}

fn mlp(tape: &mut Tape, bound: &Bound, ids: &MlpIds, x: Var) -> Result<Var> {
    let h = tape.affine(x, bound.var(ids.w1), bound.var(ids.b1))?;
    let h = tape.relu(h);
    tape.affine(h, bound.var(ids.w2), bound.var(ids.b2))
}

impl PeSaNet {
    pub(crate) fn attention_on(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<AttentionOutput> {
        let Some(mlps) = self.spectral.attention.as_ref() else {
            // Identity pass-through: coefficient 1 + 0i on every channel.
            let c = tape.value(z).shape()[1];
            let att_re = tape.constant(crate::tensor::Tensor::full(&[c], 1.0));
            let att_im = tape.constant(crate::tensor::Tensor::zeros(&[c]));
            return Ok(AttentionOutput {
                att_re,
                att_im,
                processed: z,
            });
        };
        let x = tape.real_part(z)?;
        let y = tape.imag_part(z)?;

        let coefficient = |tape: &mut Tape, part: Var, avg_mlp: &MlpIds, max_mlp: &MlpIds| -> Result<Var> {
            let avg = tape.spatial_mean(part)?;
            let max = tape.spatial_max(part)?;
            let a = mlp(tape, bound, avg_mlp, avg)?;
            let m = mlp(tape, bound, max_mlp, max)?;
            let s = tape.add(a, m)?;
            Ok(tape.sigmoid(s))
        };
        let att_re = coefficient(tape, x, &mlps[0], &mlps[1])?;
        let att_im = coefficient(tape, y, &mlps[2], &mlps[3])?;

        // (X + iY)(a + ib) = (Xa - Yb) + i(Xb + Ya)
        let xa = tape.scale_channels(x, att_re)?;
        let yb = tape.scale_channels(y, att_im)?;
        let xb = tape.scale_channels(x, att_im)?;
        let ya = tape.scale_channels(y, att_re)?;
        let re = tape.sub(xa, yb)?;
        let im = tape.add(xb, ya)?;
        let processed = tape.pack(re, im)?;
        Ok(AttentionOutput {
            att_re,
            att_im,
            processed,
        })
    }

    /// Skip-aggregated attention, truncation, per-mode channel mixing.
    pub(crate) fn frequency_operator_on(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var> {
        let agg = match self.variant() {
            Variant::PePlusFourier => z,
            _ => {
                let processed = self.attention_on(tape, bound, z)?.processed;
                tape.add(z, processed)?
            }
        };
        let mixed = tape.mode_mix(agg, bound.var(self.spectral.mix), &self.rows, &self.cols)?;
        tape.hermitian(mixed)
    }

    pub(crate) fn spectral_block_on(&self, tape: &mut Tape, bound: &Bound, state: Var) -> Result<Var> {
        let latent = tape.conv2d_periodic(state, bound.var(self.spectral.encoder), None)?;
        let z = tape.rfft2(latent)?;
        let out = self.frequency_operator_on(tape, bound, z)?;
        let back = tape.ifft2(out)?;
        let real = tape.real_part(back)?;
        tape.conv2d_periodic(real, bound.var(self.spectral.decoder), None)
    }
}
