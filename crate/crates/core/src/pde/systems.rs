use super::{Coefficients, Field, SystemKind, SystemSpec};
use crate::error::{Error, Result};

/// Five-point Laplacian `(up + down + left + right - 4·center) / h²` of one
/// `rows × cols` plane with periodic wrap.
pub fn laplacian(plane: &[f64], rows: usize, cols: usize, h: f64) -> Vec<f64> {
    let inv = 1.0 / (h * h);
    let mut out = vec![0.0; rows * cols];
    for y in 0..rows {
        let up = (y + rows - 1) % rows;
        let down = (y + 1) % rows;
        for x in 0..cols {
            let left = (x + cols - 1) % cols;
            let right = (x + 1) % cols;
            let c = plane[y * cols + x];
            out[y * cols + x] = (plane[up * cols + x] + plane[down * cols + x] + plane[y * cols + left]
                + plane[y * cols + right]
                - 4.0 * c)
                * inv;
        }
    }
    out
}

/// Central differences `(∂/∂x, ∂/∂y)` with x along columns and y along rows.
fn gradient(plane: &[f64], n: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let inv = 0.5 / h;
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    for y in 0..n {
        let up = (y + n - 1) % n;
        let down = (y + 1) % n;
        for x in 0..n {
            let left = (x + n - 1) % n;
            let right = (x + 1) % n;
            gx[y * n + x] = (plane[y * n + right] - plane[y * n + left]) * inv;
            gy[y * n + x] = (plane[down * n + x] - plane[up * n + x]) * inv;
        }
    }
    (gx, gy)
}

fn check_state(state: &Field, spec: &SystemSpec, op: &'static str) -> Result<usize> {
    let n = spec.grid();
    if state.shape() != [SystemSpec::CHANNELS, n, n] {
        return Err(Error::InvalidArgument(format!(
            "{op}: state shape {:?} does not match 2 x {n} x {n}",
            state.shape()
        )));
    }
    if !state.is_finite() {
        return Err(Error::NonFinite(op));
    }
    Ok(n)
}

fn finish(data: Vec<f64>, n: usize, op: &'static str) -> Result<Field> {
    let f = Field::new(2, n, n, data)?;
    if !f.is_finite() {
        return Err(Error::NonFinite(op));
    }
    Ok(f)
}

/// Forward Euler for `u_t = -u u_x - v u_y + ν∇²u`, `v_t = -u v_x - v v_y + ν∇²v`.
pub fn step_burgers(state: &Field, spec: &SystemSpec) -> Result<Field> {
    spec.require(SystemKind::Burgers)?;
    let n = check_state(state, spec, "step_burgers")?;
    let Coefficients::Burgers { nu } = *spec.coefficients() else {
        unreachable!()
    };
    let (h, dt) = (spec.spacing(), spec.dt());
    let (u, v) = (state.channel(0), state.channel(1));
    let (ux, uy) = gradient(u, n, h);
    let (vx, vy) = gradient(v, n, h);
    let (lu, lv) = (laplacian(u, n, n, h), laplacian(v, n, n, h));
    let mut out = Vec::with_capacity(2 * n * n);
    out.extend((0..n * n).map(|i| u[i] + dt * (-u[i] * ux[i] - v[i] * uy[i] + nu * lu[i])));
    out.extend((0..n * n).map(|i| v[i] + dt * (-u[i] * vx[i] - v[i] * vy[i] + nu * lv[i])));
    finish(out, n, "step_burgers")
}

/// Forward Euler for `u_t = μ_u∇²u + u - u³ - v + α`, `v_t = μ_v∇²v + β(u - v)`.
pub fn step_fn(state: &Field, spec: &SystemSpec) -> Result<Field> {
    spec.require(SystemKind::Fn)?;
    let n = check_state(state, spec, "step_fn")?;
    let Coefficients::Fn {
        mu_u,
        mu_v,
        alpha,
        beta,
    } = *spec.coefficients()
    else {
        unreachable!()
    };
    let (h, dt) = (spec.spacing(), spec.dt());
    let (u, v) = (state.channel(0), state.channel(1));
    let (lu, lv) = (laplacian(u, n, n, h), laplacian(v, n, n, h));
    let mut out = Vec::with_capacity(2 * n * n);
    out.extend((0..n * n).map(|i| u[i] + dt * (mu_u * lu[i] + u[i] - u[i] * u[i] * u[i] - v[i] + alpha)));
    out.extend((0..n * n).map(|i| v[i] + dt * (mu_v * lv[i] + (u[i] - v[i]) * beta)));
    finish(out, n, "step_fn")
}

/// Forward Euler for `u_t = D_u∇²u - uv² + F(1-u)`, `v_t = D_v∇²v + uv² - (F+k)v`.
pub fn step_gs(state: &Field, spec: &SystemSpec) -> Result<Field> {
    spec.require(SystemKind::Gs)?;
    let n = check_state(state, spec, "step_gs")?;
    let Coefficients::Gs { d_u, d_v, f, k } = *spec.coefficients() else {
        unreachable!()
    };
    let (h, dt) = (spec.spacing(), spec.dt());
    let (u, v) = (state.channel(0), state.channel(1));
    let (lu, lv) = (laplacian(u, n, n, h), laplacian(v, n, n, h));
    let mut out = Vec::with_capacity(2 * n * n);
    out.extend((0..n * n).map(|i| u[i] + dt * (d_u * lu[i] - u[i] * v[i] * v[i] + f * (1.0 - u[i]))));
    out.extend((0..n * n).map(|i| v[i] + dt * (d_v * lv[i] + u[i] * v[i] * v[i] - (f + k) * v[i])));
    finish(out, n, "step_gs")
}

/// One solver step of whichever system `spec` describes.
pub fn step(state: &Field, spec: &SystemSpec) -> Result<Field> {
    match spec.kind() {
        SystemKind::Burgers => step_burgers(state, spec),
        SystemKind::Fn => step_fn(state, spec),
        SystemKind::Gs => step_gs(state, spec),
    }
}
