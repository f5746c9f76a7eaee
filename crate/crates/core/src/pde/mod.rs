//! Ground-truth data: explicit finite-difference solvers on periodic grids.
//!
//! All three systems carry two channels `(u, v)` on an `N × N` grid of
//! spacing `h = L / N` and advance with forward Euler. Spatial derivatives
//! are second-order central differences with periodic wrap.

mod io;
mod systems;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use io::write_atomic;
pub use io::{read_trajectory, write_trajectory, TrajectoryHeader, PSTR_MAGIC, PSTR_VERSION};
pub use systems::{laplacian, step, step_burgers, step_fn, step_gs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Burgers,
    Fn,
    Gs,
}

impl SystemKind {
    /// Side length of the benchmark domain.
    pub fn standard_domain(self) -> f64 {
        match self {
            SystemKind::Burgers | SystemKind::Gs => 1.0,
            SystemKind::Fn => 128.0,
        }
    }

    /// Solver step of the benchmark configuration.
    pub fn standard_dt(self) -> f64 {
        match self {
            SystemKind::Burgers => 0.001,
            SystemKind::Fn => 0.002,
            SystemKind::Gs => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Burgers => "burgers",
            SystemKind::Fn => "fn",
            SystemKind::Gs => "gs",
        }
    }
}

impl std::str::FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "burgers" => Ok(SystemKind::Burgers),
            "fn" => Ok(SystemKind::Fn),
            "gs" => Ok(SystemKind::Gs),
            other => Err(Error::Config(format!("unknown system {other:?}"))),
        }
    }
}

/// Physical coefficients, one variant per system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coefficients {
    Burgers { nu: f64 },
    Fn { mu_u: f64, mu_v: f64, alpha: f64, beta: f64 },
    Gs { d_u: f64, d_v: f64, f: f64, k: f64 },
}

impl Coefficients {
    pub fn default_for(kind: SystemKind) -> Self {
        match kind {
            SystemKind::Burgers => Coefficients::Burgers { nu: 0.005 },
            SystemKind::Fn => Coefficients::Fn {
                mu_u: 1.0,
                mu_v: 100.0,
                alpha: 0.01,
                beta: 0.25,
            },
            SystemKind::Gs => Coefficients::Gs {
                d_u: 2.0e-5,
                d_v: 5.0e-6,
                f: 0.04,
                k: 0.06,
            },
        }
    }

    pub fn kind(&self) -> SystemKind {
        match self {
            Coefficients::Burgers { .. } => SystemKind::Burgers,
            Coefficients::Fn { .. } => SystemKind::Fn,
            Coefficients::Gs { .. } => SystemKind::Gs,
        }
    }

    /// Diffusivity of each channel, `(u, v)`.
    pub fn diffusivities(&self) -> [f64; 2] {
        match *self {
            Coefficients::Burgers { nu } => [nu, nu],
            Coefficients::Fn { mu_u, mu_v, .. } => [mu_u, mu_v],
            Coefficients::Gs { d_u, d_v, .. } => [d_u, d_v],
        }
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match *self {
            Coefficients::Burgers { nu } => vec![("nu", nu)],
            Coefficients::Fn {
                mu_u,
                mu_v,
                alpha,
                beta,
            } => vec![("mu_u", mu_u), ("mu_v", mu_v), ("alpha", alpha), ("beta", beta)],
            Coefficients::Gs { d_u, d_v, f, k } => {
                vec![("d_u", d_u), ("d_v", d_v), ("f", f), ("k", k)]
            }
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Parse a coefficient map whose key set must be exactly the system's.
    pub fn from_map(kind: SystemKind, map: &BTreeMap<String, f64>) -> Result<Self> {
        let template = Self::default_for(kind).to_map();
        if map.keys().ne(template.keys()) {
            return Err(Error::Config(format!(
                "{} coefficients must be exactly {:?}, got {:?}",
                kind.name(),
                template.keys().collect::<Vec<_>>(),
                map.keys().collect::<Vec<_>>()
            )));
        }
        let g = |k: &str| map[k];
        Ok(match kind {
            SystemKind::Burgers => Coefficients::Burgers { nu: g("nu") },
            SystemKind::Fn => Coefficients::Fn {
                mu_u: g("mu_u"),
                mu_v: g("mu_v"),
                alpha: g("alpha"),
                beta: g("beta"),
            },
            SystemKind::Gs => Coefficients::Gs {
                d_u: g("d_u"),
                d_v: g("d_v"),
                f: g("f"),
                k: g("k"),
            },
        })
    }
}

/// A PDE system on a square periodic domain.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    kind: SystemKind,
    domain_size: f64,
    grid: usize,
    dt: f64,
    coefficients: Coefficients,
}

impl SystemSpec {
    pub const CHANNELS: usize = 2;

    /// Validates the explicit-scheme bound `D·dt/h² ≤ 0.25` per channel.
    pub fn new(domain_size: f64, grid: usize, dt: f64, coefficients: Coefficients) -> Result<Self> {
        if !(domain_size > 0.0) || grid < 3 || !(dt > 0.0) {
            return Err(Error::Config(format!(
                "need L > 0, N >= 3, dt > 0; got L={domain_size}, N={grid}, dt={dt}"
            )));
        }
        let h = domain_size / grid as f64;
        for (channel, d) in ["u", "v"].into_iter().zip(coefficients.diffusivities()) {
            let value = d * dt / (h * h);
            if !(value <= 0.25) {
                return Err(Error::Unstable {
                    channel,
                    diffusivity: d,
                    dt,
                    spacing: h,
                    value,
                });
            }
        }
        Ok(SystemSpec {
            kind: coefficients.kind(),
            domain_size,
            grid,
            dt,
            coefficients,
        })
    }

    /// Appendix configuration of the named system on an `N × N` grid:
    /// Burgers on `(0,1)²` with `dt = 0.001`, FitzHugh-Nagumo on `(0,128)²`
    /// with `dt = 0.002`, Gray-Scott on `(0,1)²` with `dt = 0.5`.
    pub fn standard(kind: SystemKind, grid: usize) -> Result<Self> {
        Self::new(kind.standard_domain(), grid, kind.standard_dt(), Coefficients::default_for(kind))
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn domain_size(&self) -> f64 {
        self.domain_size
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn spacing(&self) -> f64 {
        self.domain_size / self.grid as f64
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coefficients
    }

    fn require(&self, kind: SystemKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidArgument(format!(
                "expected a {} system, got {}",
                kind.name(),
                self.kind.name()
            )));
        }
        Ok(())
    }
}

/// A `c × H × W` state on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::DataLength {
                shape: vec![channels, height, width],
                len: data.len(),
            });
        }
        Ok(Field {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Field {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    /// Every cell of channel `c` set to `values[c]`.
    pub fn uniform(values: &[f64], height: usize, width: usize) -> Self {
        let data = values
            .iter()
            .flat_map(|&v| std::iter::repeat(v).take(height * width))
            .collect();
        Field {
            channels: values.len(),
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Periodic shift: `out[c, y, x] = self[c, y - dy, x - dx]`.
    pub fn roll(&self, dy: usize, dx: usize) -> Field {
        let (h, w) = (self.height, self.width);
        let mut out = vec![0.0; self.data.len()];
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    out[(c * h + (y + dy) % h) * w + (x + dx) % w] = self.data[(c * h + y) * w + x];
                }
            }
        }
        Field {
            data: out,
            ..*self
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape().to_vec(), self.data.clone()).expect("field shape is consistent")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Field> {
        let (c, h, w) = t.dims3("Field::from_tensor")?;
        Field::new(c, h, w, t.data().to_vec())
    }

    pub fn round_to_f32(&mut self) {
        self.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
}

/// Initial-condition generator settings. Defaults: Burgers 4 Gaussian bumps
/// per channel of amplitude `U(-1,1)` and width `L/8`; FitzHugh-Nagumo noise
/// of std 0.5 followed by 2000 warm-up steps; Gray-Scott 3 patches of side
/// `N/10` on the `(1, 0)` background.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcConfig {
    pub burgers_bumps: usize,
    pub burgers_width: f64,
    pub fn_noise_std: f64,
    pub fn_warmup: usize,
    pub gs_patches: usize,
    pub gs_patch_frac: f64,
}

impl Default for IcConfig {
    fn default() -> Self {
        IcConfig {
            burgers_bumps: 4,
            burgers_width: 1.0 / 8.0,
            fn_noise_std: 0.5,
            fn_warmup: 2000,
            gs_patches: 3,
            gs_patch_frac: 0.1,
        }
    }
}

/// Seeded initial condition; deterministic in `(spec, ic, seed)`.
pub fn gen_ic(spec: &SystemSpec, ic: &IcConfig, seed: u64) -> Result<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.grid;
    match spec.kind {
        SystemKind::Burgers => {
            let l = spec.domain_size;
            let sigma = ic.burgers_width * l;
            let h = spec.spacing();
            let mut data = vec![0.0; 2 * n * n];
            for plane in data.chunks_mut(n * n) {
                for _ in 0..ic.burgers_bumps {
                    let amp: f64 = rng.gen_range(-1.0..1.0);
                    let cx: f64 = rng.gen_range(0.0..l);
                    let cy: f64 = rng.gen_range(0.0..l);
                    for y in 0..n {
                        let dy = periodic_dist(y as f64 * h, cy, l);
                        for x in 0..n {
                            let dx = periodic_dist(x as f64 * h, cx, l);
                            plane[y * n + x] +=
                                amp * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                        }
                    }
                }
            }
            Field::new(2, n, n, data)
        }
        SystemKind::Fn => {
            let normal = Normal::new(0.0, ic.fn_noise_std)
                .map_err(|e| Error::Config(format!("fn noise std: {e}")))?;
            let data = (0..2 * n * n).map(|_| normal.sample(&mut rng)).collect();
            let mut state = Field::new(2, n, n, data)?;
            for s in 0..ic.fn_warmup {
                state = step_fn(&state, spec).map_err(|_| Error::BlowUp { step: s })?;
            }
            Ok(state)
        }
        SystemKind::Gs => {
            let mut state = Field::uniform(&[1.0, 0.0], n, n);
            let side = ((n as f64 * ic.gs_patch_frac).round() as usize).clamp(1, n);
            for _ in 0..ic.gs_patches {
                let (py, px) = (rng.gen_range(0..n), rng.gen_range(0..n));
                for y in 0..side {
                    for x in 0..side {
                        let (yy, xx) = ((py + y) % n, (px + x) % n);
                        state.data[yy * n + xx] = 0.5;
                        state.data[n * n + yy * n + xx] = 0.25;
                    }
                }
            }
            Ok(state)
        }
    }
}

fn periodic_dist(a: f64, b: f64, l: f64) -> f64 {
    let d = (a - b).rem_euclid(l);
    d.min(l - d)
}

/// A stored time series of snapshots with its provenance.
///
/// Snapshots are kept at single precision, the on-disk precision, so a
/// write/read cycle is bit-exact.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub spec: SystemSpec,
    pub seed: u64,
    pub save_stride: usize,
    snapshots: Vec<f32>,
    len: usize,
}

impl Trajectory {
    pub fn new(spec: SystemSpec, seed: u64, save_stride: usize) -> Self {
        Trajectory {
            spec,
            seed,
            save_stride,
            snapshots: Vec::new(),
            len: 0,
        }
    }

    pub fn from_raw(spec: SystemSpec, seed: u64, save_stride: usize, snapshots: Vec<f32>) -> Result<Self> {
        let per = SystemSpec::CHANNELS * spec.grid * spec.grid;
        if snapshots.is_empty() || snapshots.len() % per != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values is not a positive multiple of the snapshot size {per}",
                snapshots.len()
            )));
        }
        let len = snapshots.len() / per;
        Ok(Trajectory {
            spec,
            seed,
            save_stride,
            snapshots,
            len,
        })
    }

    pub fn push(&mut self, field: &Field) -> Result<()> {
        let n = self.spec.grid;
        if field.shape() != [SystemSpec::CHANNELS, n, n] {
            return Err(Error::InvalidArgument(format!(
                "snapshot shape {:?} does not match grid {n}",
                field.shape()
            )));
        }
        if !field.is_finite() {
            return Err(Error::BlowUp { step: self.len });
        }
        self.snapshots.extend(field.data().iter().map(|&v| v as f32));
        self.len += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Time between stored snapshots.
    pub fn snapshot_dt(&self) -> f64 {
        self.spec.dt * self.save_stride as f64
    }

    pub fn raw(&self) -> &[f32] {
        &self.snapshots
    }

    pub fn snapshot_raw(&self, t: usize) -> &[f32] {
        let per = SystemSpec::CHANNELS * self.spec.grid * self.spec.grid;
        &self.snapshots[t * per..(t + 1) * per]
    }

    pub fn snapshot(&self, t: usize) -> Field {
        let n = self.spec.grid;
        let data = self.snapshot_raw(t).iter().map(|&v| v as f64).collect();
        Field::new(SystemSpec::CHANNELS, n, n, data).expect("snapshot size is consistent")
    }

    pub fn fields(&self) -> Vec<Field> {
        (0..self.len).map(|t| self.snapshot(t)).collect()
    }
}

/// Integrate from a seeded initial condition, storing the IC and then every
/// `save_stride`-th solver state until `n_snapshots` are held.
pub fn generate_trajectory(
    spec: &SystemSpec,
    ic: &IcConfig,
    seed: u64,
    n_snapshots: usize,
    save_stride: usize,
) -> Result<Trajectory> {
    if n_snapshots == 0 || save_stride == 0 {
        return Err(Error::Config(
            "trajectory needs at least one snapshot and a positive save stride".into(),
        ));
    }
    let mut traj = Trajectory::new(spec.clone(), seed, save_stride);
    let mut state = gen_ic(spec, ic, seed)?;
    traj.push(&state)?;
    let mut solver_step = 0;
    while traj.len() < n_snapshots {
        for _ in 0..save_stride {
            state = step(&state, spec).map_err(|_| Error::BlowUp { step: solver_step })?;
            solver_step += 1;
        }
        traj.push(&state)?;
    }
    Ok(traj)
}
