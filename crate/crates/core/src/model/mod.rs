//! The surrogate: `next = u + dt · F̂(u)` where `F̂` sums a physics-encoded
//! term (fixed-stencil Laplacian plus multiplicative Π-block) and a
//! spectral-enhanced term (encoder, FFT, attention-weighted frequency
//! operator, inverse FFT, decoder).

mod checkpoint;
mod physics;
mod spectral;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::Field;
use crate::tensor::{ComplexTensor, ParamId, ParamSet, Tape, Tensor, Var};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, PSCK_MAGIC, PSCK_VERSION};
pub use spectral::AttentionOutput;

/// Which blocks contribute to the right-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Physics-encoded block plus spectral block with attention.
    Full,
    /// Attention replaced by identity: the frequency operator sees `z + z`.
    NoSa,
    /// Spectral block only.
    NoPe,
    /// Physics-encoded block plus a plain truncated Fourier layer.
    PePlusFourier,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoSa, Variant::NoPe, Variant::PePlusFourier];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSa => "no_sa",
            Variant::NoPe => "no_pe",
            Variant::PePlusFourier => "pe_plus_fourier",
        }
    }

    pub fn has_physics(self) -> bool {
        self != Variant::NoPe
    }

    pub fn has_attention(self) -> bool {
        matches!(self, Variant::Full | Variant::NoPe)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub state_channels: usize,
    pub height: usize,
    pub width: usize,
    /// Grid spacing `h` used by the fixed Laplacian stencil.
    pub spacing: f64,
    pub dt: f64,
    /// Π-block hidden channels `N_c`.
    pub pi_channels: usize,
    /// Number of parallel convolutions `N_l` multiplied together.
    pub pi_layers: usize,
    pub kernel_size: usize,
    /// Retained wavenumbers `|k_row| < m1`, `|k_col| < m2`.
    pub modes: [usize; 2],
    pub enc_width: usize,
    pub dec_width: usize,
    pub attn_hidden: usize,
    pub variant: Variant,
    /// Initial coefficient on the fixed Laplacian, per state channel.
    pub pyconv_init: Vec<f64>,
    pub pyconv_trainable: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults for a `2 × height × width` state.
    pub fn new(height: usize, width: usize, spacing: f64, dt: f64) -> Self {
        ModelConfig {
            state_channels: 2,
            height,
            width,
            spacing,
            dt,
            pi_channels: 8,
            pi_layers: 2,
            kernel_size: 3,
            modes: [12.min(height / 2 + 1), 12.min(width / 2 + 1)],
            enc_width: 8,
            dec_width: 8,
            attn_hidden: 4,
            variant: Variant::Full,
            pyconv_init: vec![1.0; 2],
            pyconv_trainable: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.state_channels == 0 {
            return fail("state_channels must be >= 1".into());
        }
        if self.pi_layers == 0 || self.pi_channels == 0 {
            return fail(format!(
                "Pi-block needs N_l >= 1 and N_c >= 1, got N_l={}, N_c={}",
                self.pi_layers, self.pi_channels
            ));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size > self.height.min(self.width) {
            return fail(format!(
                "kernel_size must be odd and fit the {}x{} grid, got {}",
                self.height, self.width, self.kernel_size
            ));
        }
        if self.height < 3 || self.width < 3 {
            return fail("grid must be at least 3x3".into());
        }
        let [m1, m2] = self.modes;
        if m1 == 0 || m2 == 0 || m1 > self.height / 2 + 1 || m2 > self.width / 2 + 1 {
            return fail(format!(
                "modes {:?} must lie in 1..={}/1..={} for a {}x{} grid",
                self.modes,
                self.height / 2 + 1,
                self.width / 2 + 1,
                self.height,
                self.width
            ));
        }
        if self.enc_width == 0 || self.dec_width == 0 || self.attn_hidden == 0 {
            return fail("enc_width, dec_width and attn_hidden must be >= 1".into());
        }
        if !(self.dt > 0.0) || !(self.spacing > 0.0) {
            return fail(format!("dt and spacing must be positive, got {} and {}", self.dt, self.spacing));
        }
        if self.pyconv_init.len() != self.state_channels {
            return fail(format!(
                "pyconv_init has {} entries for {} channels",
                self.pyconv_init.len(),
                self.state_channels
            ));
        }
        Ok(())
    }
}

/// Bin indices `k` with signed wavenumber `|k| < m` on an axis of length `n`.
pub fn retained_indices(m: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m).chain((1..m).map(|k| n - k)).collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

#[derive(Clone, Debug)]
pub(crate) struct MlpIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct PhysicsIds {
    pub stencil: ParamId,
    pub coef: ParamId,
    pub kernels: Vec<ParamId>,
    pub biases: Vec<ParamId>,
    pub proj: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct SpectralIds {
    pub encoder: ParamId,
    pub mix: ParamId,
    pub decoder: ParamId,
    pub attention: Option<[MlpIds; 4]>,
}

/// Parameters bound to leaves of one tape.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.index()]
    }
}

#[derive(Clone, Debug)]
pub struct PeSaNet {
    config: ModelConfig,
    params: ParamSet,
    physics: Option<PhysicsIds>,
    spectral: SpectralIds,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

/// FNV-1a, used to give every named parameter its own seeded stream.
fn name_hash(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

struct Init<'a> {
    params: &'a mut ParamSet,
    seed: u64,
}

impl Init<'_> {
    /// `U(-1/√fan_in, 1/√fan_in)`, drawn from a stream keyed by `(seed, name)`.
    fn uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> ParamId {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ name_hash(name));
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.params
            .add(name, Tensor::new(shape.to_vec(), data).expect("init shape"), true)
    }

    fn fixed(&mut self, name: &str, value: Tensor, trainable: bool) -> ParamId {
        self.params.add(name, value, trainable)
    }
}

impl PeSaNet {
    /// Build the parameter skeleton and seeded initial values for `config.variant`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config.state_channels;
        let mut params = ParamSet::new();
        let mut init = Init {
            params: &mut params,
            seed: config.seed,
        };

        let physics = config.variant.has_physics().then(|| {
            let mut stencil = Tensor::zeros(&[c, c, 3, 3]);
            let lap = crate::tensor::conv::laplacian_stencil(config.spacing);
            for ch in 0..c {
                stencil.data_mut()[(ch * c + ch) * 9..(ch * c + ch + 1) * 9].copy_from_slice(&lap);
            }
            let stencil = init.fixed("pyconv.stencil", stencil, false);
            let coef = init.fixed(
                "pyconv.coef",
                Tensor::new(vec![c], config.pyconv_init.clone()).expect("validated"),
                config.pyconv_trainable,
            );
            let (nc, k) = (config.pi_channels, config.kernel_size);
            let mut kernels = Vec::new();
            let mut biases = Vec::new();
            for l in 0..config.pi_layers {
                kernels.push(init.uniform(&format!("pi.kernel.{l}"), &[nc, c, k, k], c * k * k));
                biases.push(init.uniform(&format!("pi.bias.{l}"), &[nc], c * k * k));
            }
            let proj = init.uniform("pi.proj", &[c, nc, 1, 1], nc);
            PhysicsIds {
                stencil,
                coef,
                kernels,
                biases,
                proj,
            }
        });

        let rows = retained_indices(config.modes[0], config.height);
        let cols = retained_indices(config.modes[1], config.width);
        let (ew, dw, hid) = (config.enc_width, config.dec_width, config.attn_hidden);
        let encoder = init.uniform("spectral.encoder", &[ew, c, 1, 1], c);
        let mix = init.uniform("spectral.mix", &[2, rows.len(), cols.len(), dw, ew], ew);
        let decoder = init.uniform("spectral.decoder", &[c, dw, 1, 1], dw);
        let attention = config.variant.has_attention().then(|| {
            [1, 2, 3, 4].map(|j| MlpIds {
                w1: init.uniform(&format!("attention.mlp{j}.w1"), &[hid, ew], ew),
                b1: init.uniform(&format!("attention.mlp{j}.b1"), &[hid], ew),
                w2: init.uniform(&format!("attention.mlp{j}.w2"), &[ew, hid], hid),
                b2: init.uniform(&format!("attention.mlp{j}.b2"), &[ew], hid),
            })
        });

        Ok(PeSaNet {
            config,
            params,
            physics,
            spectral: SpectralIds {
                encoder,
                mix,
                decoder,
                attention,
            },
            rows,
            cols,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn retained_modes(&self) -> (&[usize], &[usize]) {
        (&self.rows, &self.cols)
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.find(name)
    }

    /// Trainable scalar count of parameters whose name starts with `prefix`.
    pub fn trainable_count_with_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|(_, p)| p.trainable && p.name.starts_with(prefix))
            .map(|(_, p)| p.value.numel())
            .sum()
    }

    /// Set a parameter's value; the shape must match.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .param_id(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name:?}")))?;
        let p = self.params.get_mut(id);
        if p.value.shape() != value.shape() {
            return Err(Error::InvalidArgument(format!(
                "parameter {name:?} has shape {:?}, got {:?}",
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    /// Zero every trainable parameter.
    pub fn zero_trainable(&mut self) {
        for p in self.params.iter_mut().filter(|p| p.trainable) {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self.params.iter().map(|(id, _)| tape.param(&self.params, id)).collect();
        Bound { vars }
    }

    fn check_state(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 3 {
            return Err(Error::Rank {
                op: "pesanet",
                expected: 3,
                got: shape.to_vec(),
            });
        }
        let expect = [self.config.state_channels, self.config.height, self.config.width];
        for ((&e, &g), dim) in expect.iter().zip(shape).zip(["channels", "height", "width"]) {
            if e != g {
                return Err(Error::ShapeMismatch {
                    op: "pesanet",
                    dim,
                    expected: e,
                    got: g,
                });
            }
        }
        Ok(())
    }

    /// Right-hand side `F̂(u)` on the tape.
    pub fn rhs_on(&self, tape: &mut Tape, bound: &Bound, state: Var) -> Result<Var> {
        self.check_state(tape.value(state).shape())?;
        let mut total: Option<Var> = None;
        let mut accumulate = |tape: &mut Tape, term: Var| -> Result<()> {
            total = Some(match total {
                Some(t) => tape.add(t, term)?,
                None => term,
            });
            Ok(())
        };
        if self.physics.is_some() {
            let known = self.pyconv_on(tape, bound, state)?;
            accumulate(tape, known)?;
            let learned = self.pi_block_on(tape, bound, state)?;
            accumulate(tape, learned)?;
        }
        let global = self.spectral_block_on(tape, bound, state)?;
        accumulate(tape, global)?;
        Ok(total.expect("spectral block always contributes"))
    }

    /// `u + dt · F̂(u)` on the tape.
    pub fn step_on(&self, tape: &mut Tape, bound: &Bound, state: Var) -> Result<Var> {
        let rhs = self.rhs_on(tape, bound, state)?;
        let inc = tape.scale(rhs, self.config.dt);
        let next = tape.add(state, inc)?;
        if !tape.value(next).is_finite() {
            return Err(Error::BlowUp { step: 0 });
        }
        Ok(next)
    }

    fn eval(&self, state: &Field, f: impl FnOnce(&Self, &mut Tape, &Bound, Var) -> Result<Var>) -> Result<Field> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = tape.constant(state.to_tensor());
        let out = f(self, &mut tape, &bound, x)?;
        Field::from_tensor(tape.value(out))
    }

    /// One model step.
    pub fn step(&self, state: &Field) -> Result<Field> {
        self.eval(state, |m, t, b, x| m.step_on(t, b, x))
    }

    pub fn rhs(&self, state: &Field) -> Result<Field> {
        self.eval(state, |m, t, b, x| m.rhs_on(t, b, x))
    }

    fn physics_ids(&self) -> Result<&PhysicsIds> {
        self.physics.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("variant {} has no physics-encoded block", self.variant().name()))
        })
    }

    pub fn pyconv_forward(&self, state: &Field) -> Result<Field> {
        self.eval(state, |m, t, b, x| m.pyconv_on(t, b, x))
    }

    pub fn pi_block_forward(&self, state: &Field) -> Result<Field> {
        self.eval(state, |m, t, b, x| m.pi_block_on(t, b, x))
    }

    pub fn spectral_block_forward(&self, state: &Field) -> Result<Field> {
        self.eval(state, |m, t, b, x| m.spectral_block_on(t, b, x))
    }

    /// Attention coefficients and re-weighted spectrum for a `c × k1 × k2`
    /// spectrum with `c = enc_width`.
    pub fn spectral_attention(&self, spectrum: &ComplexTensor) -> Result<(Tensor, Tensor, ComplexTensor)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let z = tape.constant(spectrum.to_packed());
        let out = self.attention_on(&mut tape, &bound, z)?;
        Ok((
            tape.value(out.att_re).clone(),
            tape.value(out.att_im).clone(),
            ComplexTensor::from_packed(tape.value(out.processed))?,
        ))
    }

    /// Frequency-domain operator on a `enc_width × H × W` spectrum.
    pub fn frequency_domain_operator(&self, spectrum: &ComplexTensor) -> Result<ComplexTensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let z = tape.constant(spectrum.to_packed());
        let out = self.frequency_operator_on(&mut tape, &bound, z)?;
        ComplexTensor::from_packed(tape.value(out))
    }
}

#[cfg(test)]
mod tests;
