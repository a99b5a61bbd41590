//! Transition densities by Fourier inversion on lattices.
//!
//! Lattice: `ξ_j = (j − N/2)Δξ`, `x_k = (k − N/2)Δx` per axis with
//! `Δx Δξ = 2π/N`. Then
//! `p(x_k) = (Δξ/2π)^d (−1)^{Σk} FFT[(−1)^{Σj} e^{−tΦ(ξ_j)}]_k`
//! and `Δx^d Σ_k p(x_k) = e^{−tΦ(0)} = 1` exactly.

use std::io::Write;
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponent::{build_exponent, certify_lower_bound, lower_bound_failure, Exponent, Target};
use crate::model::LevyModel;
use crate::quad::{self, QuadOptions};
use crate::registry::Registry;
use crate::spectral::SpectralMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridParams {
    /// Frequency half-extent Ξ.
    pub xi_max: f64,
    /// Points per axis, a power of two.
    pub n: usize,
    pub dx: f64,
    /// True when the point cap forced a smaller spatial window than requested.
    pub capped: bool,
}

impl GridParams {
    pub fn dxi(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.n as f64 * self.dx)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.n as f64 * self.dx
    }
}

pub const MIN_POINTS: usize = 256;

pub fn max_points(d: usize) -> usize {
    match d {
        1 => 1 << 22,
        2 => 1 << 11,
        _ => 1 << 7,
    }
}

/// Requirements a lattice has to meet, independent of where they came from.
#[derive(Debug, Clone, Copy)]
pub struct DesignInputs {
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub c_lower: f64,
    /// Extra `log` budget on the Fourier side, e.g. `2t|ν̄_r|` for truncated laws.
    pub extra_log: f64,
    /// Spatial half-width the lattice must cover.
    pub half_width: f64,
    /// Natural length scale `h(t)`; the lattice resolves it with 8 cells.
    pub scale: f64,
}

pub fn design(inputs: &DesignInputs, t: f64, tol: f64) -> Result<GridParams> {
    if !(t > 0.0) || !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Precondition(format!("need t > 0 and 0 < tol < 1, got t = {t}, tol = {tol}")));
    }
    if !(inputs.c_lower > 0.0) {
        return Err(Error::Hypothesis(format!(
            "lower-bound constant c_lower = {:e} is not positive: the density may not exist",
            inputs.c_lower
        )));
    }
    if inputs.dim == 0 || inputs.dim > 3 {
        return Err(Error::Precondition(format!("lattice inversion supports d <= 3, got {}", inputs.dim)));
    }
    let budget = (1.0 / tol).ln() + inputs.extra_log;
    let level = budget / (t * inputs.c_lower);
    let from_decay = if level <= 1.0 {
        level.powf(1.0 / inputs.beta)
    } else {
        level.powf(1.0 / inputs.alpha)
    };
    let xi_max = from_decay.max(8.0 * std::f64::consts::PI / inputs.scale);
    let dx = std::f64::consts::PI / xi_max;
    let wanted = (2.0 * inputs.half_width / dx).ceil().max(MIN_POINTS as f64);
    let cap = max_points(inputs.dim);
    let (n, capped) = if wanted > cap as f64 {
        (cap, true)
    } else {
        ((wanted as usize).next_power_of_two(), false)
    };
    Ok(GridParams { xi_max, n, dx, capped })
}

/// Smallest radius where `min{1, t h^γ |x|^{-γ-α} q(|x|) φ(|x|/4)}` (plus the
/// Gaussian-regime term for `t > 1`) drops below `level`.
pub fn envelope_radius(model: &LevyModel, t: f64, level: f64) -> Result<f64> {
    let h = model.h(t);
    let (alpha, gamma) = (model.alpha(), model.gamma());
    let (q, phi) = (&model.profile().q, &model.profile().phi);
    let env = |x: f64| {
        let ln_poly = t.ln() + gamma * h.ln() - (gamma + alpha) * x.ln() + q.ln_value(x) + phi.ln_value(0.25 * x);
        let mut v = ln_poly.min(0.0).exp();
        if t > 1.0 {
            let s = x / h;
            v += (-s * s.ln_1p()).exp();
        }
        v
    };
    let mut x = h;
    while env(x) > level {
        x *= 2f64.powf(0.125);
        if x > 1e15 * h {
            return Err(Error::Numerical("density envelope does not decay".into()));
        }
    }
    Ok(x)
}

fn ensure_lower_bound(model: &LevyModel) -> Result<f64> {
    if let Some(c) = model.c_lower {
        return Ok(c);
    }
    let mut m = model.clone();
    let report = certify_lower_bound(&mut m)?;
    if !report.pass {
        return Err(lower_bound_failure(&report));
    }
    Ok(report.c_lower)
}

/// Lattice for `p_t` of the model itself, centred so `x + t b_{h(t)}` is covered.
pub fn design_grid(model: &LevyModel, t: f64, tol: f64) -> Result<GridParams> {
    let c_lower = ensure_lower_bound(model)?;
    let h = model.h(t);
    let shift: f64 = model.centering_shift(h)?.iter().map(|b| (t * b).abs()).fold(0.0, f64::max);
    let reach = envelope_radius(model, t, 1e-2 * tol)?;
    let inputs = DesignInputs {
        dim: model.dim(),
        alpha: model.alpha(),
        beta: model.beta(),
        c_lower,
        extra_log: 0.0,
        half_width: (reach + shift).max(16.0 * h),
        scale: h,
    };
    design(&inputs, t, tol)
}

/// Lattice for the law of `ν 1_{B(0,r)}` at time `t`.
pub fn design_grid_truncated(model: &LevyModel, r: f64, t: f64, tol: f64) -> Result<GridParams> {
    let c_lower = ensure_lower_bound(model)?;
    let h = model.h(t);
    let inputs = DesignInputs {
        dim: model.dim(),
        alpha: model.alpha(),
        beta: model.beta(),
        c_lower,
        extra_log: 2.0 * t * model.large_jump_mass(r)?,
        half_width: 32.0 * h.max(r),
        scale: h.min(r),
    };
    design(&inputs, t, tol)
}

/// Density values on an origin-centred lattice, row-major with axis 0 slowest.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub dim: usize,
    pub t: f64,
    pub params: GridParams,
    pub tol: f64,
    pub values: Vec<f64>,
    pub mass: f64,
}

impl DensityGrid {
    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn dx(&self) -> f64 {
        self.params.dx
    }

    pub fn coord(&self, k: usize) -> f64 {
        (k as f64 - (self.params.n / 2) as f64) * self.params.dx
    }

    pub fn node_index(&self, x: &[f64]) -> Option<usize> {
        let n = self.params.n;
        let mut idx = 0;
        for &xi in x {
            let k = (xi / self.params.dx).round() + (n / 2) as f64;
            if !(k >= 0.0 && k < n as f64) {
                return None;
            }
            idx = idx * n + k as usize;
        }
        Some(idx)
    }

    pub fn node(&self, index: usize) -> Vec<f64> {
        let n = self.params.n;
        let mut out = vec![0.0; self.dim];
        let mut rest = index;
        for a in (0..self.dim).rev() {
            out[a] = self.coord(rest % n);
            rest /= n;
        }
        out
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `x1..xd,p`; negative Gibbs ripples are clamped to 0.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},p", header.join(","))?;
        for (i, &p) in self.values.iter().enumerate() {
            for x in self.node(i) {
                write!(out, "{x:.17e},")?;
            }
            writeln!(out, "{:.17e}", p.max(0.0))?;
        }
        Ok(())
    }

    /// Little-endian dump: `d: u32, N: u32, Δx: f64, t: f64`, then row-major `f64` values.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.params.n as u32).to_le_bytes())?;
        out.write_all(&self.params.dx.to_le_bytes())?;
        out.write_all(&self.t.to_le_bytes())?;
        for &p in &self.values {
            out.write_all(&p.max(0.0).to_le_bytes())?;
        }
        Ok(())
    }
}

/// `e^{−tΦ}` sampled on the frequency lattice.
#[derive(Debug, Clone)]
pub struct CharExponentGrid {
    pub dim: usize,
    pub xi_max: f64,
    pub n: usize,
    /// `Φ(ξ_j)`, row-major.
    pub values: Vec<Complex64>,
}

pub fn sample_exponent(exponent: &dyn Exponent, params: &GridParams) -> Result<CharExponentGrid> {
    let d = exponent.dim();
    let n = params.n;
    let dxi = params.dxi();
    let total = n.pow(d as u32);
    let values = (0..total)
        .into_par_iter()
        .with_min_len(4096)
        .map(|idx| {
            let mut xi = vec![0.0; d];
            let mut rest = idx;
            for a in (0..d).rev() {
                xi[a] = ((rest % n) as f64 - (n / 2) as f64) * dxi;
                rest /= n;
            }
            exponent.eval(&xi)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CharExponentGrid {
        dim: d,
        xi_max: params.xi_max,
        n,
        values,
    })
}

fn parity(idx: usize, n: usize, d: usize) -> f64 {
    let mut rest = idx;
    let mut s = 0;
    for _ in 0..d {
        s += rest % n;
        rest /= n;
    }
    if s % 2 == 0 { 1.0 } else { -1.0 }
}

fn fft_nd(data: &mut [Complex64], n: usize, d: usize) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let total = data.len();
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        if stride == 1 {
            fft.process(data);
            continue;
        }
        let mut line = vec![Complex64::default(); n];
        let block = stride * n;
        for start in (0..total).step_by(block) {
            for offset in 0..stride {
                for (k, v) in line.iter_mut().enumerate() {
                    *v = data[start + offset + k * stride];
                }
                fft.process(&mut line);
                for (k, v) in line.iter().enumerate() {
                    data[start + offset + k * stride] = *v;
                }
            }
        }
    }
}

/// Inverts sampled exponent values at time `t`.
pub fn invert_sampled(phi: &CharExponentGrid, t: f64, params: &GridParams, tol: f64) -> Result<DensityGrid> {
    let (n, d) = (phi.n, phi.dim);
    let mut data: Vec<Complex64> = phi
        .values
        .par_iter()
        .with_min_len(4096)
        .enumerate()
        .map(|(idx, v)| (-t * v).exp() * parity(idx, n, d))
        .collect();
    fft_nd(&mut data, n, d);
    let norm = (params.dxi() / (2.0 * std::f64::consts::PI)).powi(d as i32);
    let values: Vec<f64> = data
        .par_iter()
        .with_min_len(4096)
        .enumerate()
        .map(|(idx, v)| v.re * norm * parity(idx, n, d))
        .collect();
    let mass = values.iter().sum::<f64>() * params.dx.powi(d as i32);
    if (mass - 1.0).abs() > 1e-3 || !mass.is_finite() {
        return Err(Error::Numerical(format!("lattice mass {mass} is off by more than 1e-3: grid under-resolved")));
    }
    Ok(DensityGrid {
        dim: d,
        t,
        params: *params,
        tol,
        values,
        mass,
    })
}

pub fn invert_exponent(exponent: &dyn Exponent, t: f64, params: &GridParams, tol: f64) -> Result<DensityGrid> {
    if exponent.dim() > 3 {
        return Err(Error::Precondition("lattice inversion supports d <= 3".into()));
    }
    invert_sampled(&sample_exponent(exponent, params)?, t, params, tol)
}

/// `p_t` of the model on the given lattice.
pub fn invert(model: &LevyModel, t: f64, params: &GridParams) -> Result<DensityGrid> {
    ensure_lower_bound(model)?;
    let exponent = build_exponent(model, Target::Full, "auto")?;
    invert_exponent(exponent.as_ref(), t, params, 0.0)
}

/// Point queries against a computed density.
pub trait DensityOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn t(&self) -> f64;
    /// Nearest node to `x`, or `None` outside the computed window.
    fn snap(&self, x: &[f64]) -> Option<Vec<f64>>;
    /// Density at a point returned by [`DensityOracle::snap`].
    fn value(&self, node: &[f64]) -> f64;
    fn peak(&self) -> f64;
    /// Values below this are dominated by truncation and round-off.
    fn resolved_floor(&self) -> f64;
    /// Distance from the origin to the edge of the window along the worst axis.
    fn reach(&self) -> f64;
}

fn floor_for(peak: f64, tol: f64) -> f64 {
    peak * (100.0 * tol).max(1e-13)
}

impl DensityOracle for DensityGrid {
    fn dim(&self) -> usize {
        self.dim
    }

    fn t(&self) -> f64 {
        self.t
    }

    fn snap(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.node_index(x).map(|i| self.node(i))
    }

    fn value(&self, node: &[f64]) -> f64 {
        self.node_index(node).map(|i| self.values[i]).unwrap_or(0.0)
    }

    fn peak(&self) -> f64 {
        self.max()
    }

    fn resolved_floor(&self) -> f64 {
        floor_for(self.max(), self.tol)
    }

    fn reach(&self) -> f64 {
        // Stay away from the periodic seam.
        0.9 * self.params.half_width()
    }
}

/// Density of `A Y` where `Y` has independent one-dimensional coordinates.
/// Applies when μ has exactly `d` linearly independent atoms (the columns of `A`).
pub struct ProductDensity {
    dim: usize,
    t: f64,
    a: Vec<f64>,
    a_inv: Vec<f64>,
    det: f64,
    factors: Vec<DensityGrid>,
}

impl ProductDensity {
    fn to_factor_coords(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d).map(|i| (0..d).map(|j| self.a_inv[i * d + j] * x[j]).sum()).collect()
    }

    pub fn factors(&self) -> &[DensityGrid] {
        &self.factors
    }
}

impl DensityOracle for ProductDensity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn t(&self) -> f64 {
        self.t
    }

    fn snap(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim;
        let y = self.to_factor_coords(x);
        let mut ys = Vec::with_capacity(d);
        for (f, yi) in self.factors.iter().zip(&y) {
            ys.push(f.snap(&[*yi])?[0]);
        }
        Some((0..d).map(|i| (0..d).map(|j| self.a[i * d + j] * ys[j]).sum()).collect())
    }

    fn value(&self, node: &[f64]) -> f64 {
        let y = self.to_factor_coords(node);
        self.factors
            .iter()
            .zip(&y)
            .map(|(f, yi)| f.value(&[*yi]))
            .product::<f64>()
            / self.det.abs()
    }

    fn peak(&self) -> f64 {
        self.factors.iter().map(|f| f.max()).product::<f64>() / self.det.abs()
    }

    fn resolved_floor(&self) -> f64 {
        // A product is resolved when each factor is; use the weakest factor's relative floor.
        let rel = self
            .factors
            .iter()
            .map(|f| f.resolved_floor() / f.max())
            .fold(0.0, f64::max);
        self.peak() * rel
    }

    fn reach(&self) -> f64 {
        let smallest = self.factors.iter().map(|f| f.reach()).fold(f64::INFINITY, f64::min);
        // |x| ≤ reach/‖A^{-1}‖ keeps every factor coordinate inside its lattice.
        let d = self.dim;
        let norm_inv = (0..d)
            .map(|i| (0..d).map(|j| self.a_inv[i * d + j].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        smallest / norm_inv
    }
}

fn invert_matrix(a: &[f64], d: usize) -> Option<(Vec<f64>, f64)> {
    let mut m = a.to_vec();
    let mut inv: Vec<f64> = (0..d * d).map(|i| if i / d == i % d { 1.0 } else { 0.0 }).collect();
    let mut det = 1.0;
    for col in 0..d {
        let p = (col..d).max_by(|&i, &j| m[i * d + col].abs().total_cmp(&m[j * d + col].abs()))?;
        if m[p * d + col].abs() < 1e-12 {
            return None;
        }
        if p != col {
            for k in 0..d {
                m.swap(p * d + k, col * d + k);
                inv.swap(p * d + k, col * d + k);
            }
            det = -det;
        }
        let pivot = m[col * d + col];
        det *= pivot;
        for k in 0..d {
            m[col * d + k] /= pivot;
            inv[col * d + k] /= pivot;
        }
        for i in 0..d {
            if i != col {
                let f = m[i * d + col];
                for k in 0..d {
                    m[i * d + k] -= f * m[col * d + k];
                    inv[i * d + k] -= f * inv[col * d + k];
                }
            }
        }
    }
    Some((inv, det))
}

/// The one-dimensional coordinate laws of a separable model, or `None`.
pub fn product_factors(model: &LevyModel) -> Result<Option<(Vec<f64>, Vec<LevyModel>)>> {
    let d = model.dim();
    let mu = model.mu();
    if mu.len() != d || !matches!(mu.form(), crate::spectral::SpectralForm::Atomic) {
        return Ok(None);
    }
    let mut a = vec![0.0; d * d];
    for (j, theta) in mu.directions().iter().enumerate() {
        for i in 0..d {
            a[i * d + j] = theta[i];
        }
    }
    let Some((a_inv, _)) = invert_matrix(&a, d) else {
        return Ok(None);
    };
    let c: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|j| a_inv[i * d + j] * model.drift()[j]).sum())
        .collect();
    let mut factors = Vec::with_capacity(d);
    for (i, w) in mu.weights().iter().enumerate() {
        let atom = SpectralMeasure::atomic(vec![vec![1.0]], vec![*w])?;
        let m = LevyModel::new(model.alpha(), model.beta(), 1.0, vec![c[i]], atom, model.profile().clone())?;
        factors.push(m);
    }
    Ok(Some((a, factors)))
}

#[derive(Debug, Clone)]
pub struct InversionRequest {
    pub t: f64,
    pub tol: f64,
    pub target: Target,
    pub exponent: String,
}

impl InversionRequest {
    pub fn new(t: f64, tol: f64) -> Self {
        Self {
            t,
            tol,
            target: Target::Full,
            exponent: "auto".into(),
        }
    }
}

pub type InversionFactory = fn(&LevyModel, &InversionRequest) -> Result<Box<dyn DensityOracle>>;

fn lattice(model: &LevyModel, req: &InversionRequest) -> Result<DensityGrid> {
    let params = match req.target {
        Target::Full => design_grid(model, req.t, req.tol)?,
        Target::Truncated(r) => design_grid_truncated(model, r, req.t, req.tol)?,
    };
    let exponent = build_exponent(model, req.target, &req.exponent)?;
    invert_exponent(exponent.as_ref(), req.t, &params, req.tol)
}

pub fn strategies() -> &'static Registry<InversionFactory> {
    static REGISTRY: OnceLock<Registry<InversionFactory>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<InversionFactory> = Registry::new("inversion strategy");
        reg.register("lattice-fft", |model, req| Ok(Box::new(lattice(model, req)?)))
            .register("product", |model, req| {
                let Some((a, factor_models)) = product_factors(model)? else {
                    return Err(Error::Precondition(
                        "product inversion needs exactly d linearly independent atoms".into(),
                    ));
                };
                let d = model.dim();
                let (a_inv, det) = invert_matrix(&a, d).expect("checked invertible");
                let factors = factor_models
                    .iter()
                    .map(|m| lattice(m, req))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Box::new(ProductDensity {
                    dim: d,
                    t: req.t,
                    a,
                    a_inv,
                    det,
                    factors,
                }))
            })
            .alias("fft", "lattice-fft");
        reg
    })
}

pub fn compute_density(model: &LevyModel, strategy: &str, req: &InversionRequest) -> Result<Box<dyn DensityOracle>> {
    (strategies().get(strategy)?)(model, req)
}

/// `p_t(x)` for `d = 1` by direct quadrature of the inversion integral (slow cross-check).
pub fn direct_density(exponent: &dyn Exponent, t: f64, points: &[f64]) -> Result<Vec<f64>> {
    if exponent.dim() != 1 {
        return Err(Error::Precondition("direct inversion is implemented for d = 1".into()));
    }
    if points.len() > 32 {
        return Err(Error::Precondition("direct inversion is limited to 32 points".into()));
    }
    let mut top = 1.0;
    while (-t * exponent.eval(&[top])?.re).exp() > 1e-17 {
        top *= 2.0;
        if top > 1e12 {
            return Err(Error::Numerical("characteristic function does not decay".into()));
        }
    }
    let opts = QuadOptions::default().with_abs_tol(1e-14);
    points
        .iter()
        .map(|&x| {
            let mut err = None;
            let f = |xi: f64| match exponent.eval(&[xi]) {
                Ok(phi) => (Complex64::new(0.0, -x * xi) - t * phi).exp().re,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            };
            let step = if x == 0.0 { top / 64.0 } else { (std::f64::consts::PI / x.abs()).min(top / 64.0) };
            let mut acc = 0.0;
            let mut a = 0.0;
            let mut f = f;
            while a < top {
                let b = (a + step).min(top);
                acc += quad::adaptive(&mut f, a, b, &opts)?.value;
                a = b;
            }
            if let Some(e) = err {
                return Err(e);
            }
            Ok(acc / std::f64::consts::PI)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OnDiagonalRow {
    pub t: f64,
    pub h: f64,
    pub sup: f64,
    /// `sup_x p_t(x) · h(t)^d`.
    pub scaled: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OnDiagonalReport {
    pub rows: Vec<OnDiagonalRow>,
    /// max/min of the scaled column.
    pub ratio: f64,
    pub pass: bool,
}

/// The scaled sup may vary by at most this factor over the t grid.
pub const ON_DIAGONAL_WINDOW: f64 = 10.0;

pub fn on_diagonal_check(model: &LevyModel, t_grid: &[f64], tol: f64) -> Result<OnDiagonalReport> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Precondition("t grid must be nonempty and positive".into()));
    }
    let mut model = model.clone();
    model.c_lower = Some(ensure_lower_bound(&model)?);
    let exponent = build_exponent(&model, Target::Full, "auto")?;
    let d = model.dim() as i32;
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let params = design_grid(&model, t, tol)?;
        let grid = invert_exponent(exponent.as_ref(), t, &params, tol)?;
        let h = model.h(t);
        let sup = grid.max();
        rows.push(OnDiagonalRow { t, h, sup, scaled: sup * h.powi(d) });
    }
    let hi = rows.iter().map(|r| r.scaled).fold(f64::NEG_INFINITY, f64::max);
    let lo = rows.iter().map(|r| r.scaled).fold(f64::INFINITY, f64::min);
    let ratio = hi / lo;
    Ok(OnDiagonalReport {
        rows,
        ratio,
        pass: ratio.is_finite() && ratio < ON_DIAGONAL_WINDOW,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::stable_canonical_drift;
    use crate::model::RadialProfile;
    use crate::profile::{make_profile, one, params};
    use std::f64::consts::PI;

    fn cauchy() -> LevyModel {
        let mu = SpectralMeasure::atomic(vec![vec![1.0], vec![-1.0]], vec![1.0 / PI, 1.0 / PI]).unwrap();
        LevyModel::new(1.0, 1.0, 1.0, vec![0.0], mu, RadialProfile::new(one(), one())).unwrap()
    }

    fn tempered() -> LevyModel {
        let mu = SpectralMeasure::atomic(vec![vec![1.0], vec![-1.0]], vec![0.5, 0.5]).unwrap();
        let phi = make_profile("exp", &params(&[("lambda", 1.0)])).unwrap();
        LevyModel::new(1.0, 2.0, 1.0, vec![0.0], mu, RadialProfile::new(one(), phi)).unwrap()
    }

    #[test]
    fn cauchy_grid_design_reference() {
        let mut m = cauchy();
        m.c_lower = Some(1.0);
        let g = design_grid(&m, 1.0, 1e-12).unwrap();
        // exp(-Ξ) = 1e-12 for Re Φ = |ξ|; with c_lower = π this would be 12 ln10/π.
        assert!(g.xi_max >= 12.0 * 10f64.ln() - 1e-9);
        m.c_lower = Some(PI);
        let g = design_grid(&m, 1.0, 1e-12).unwrap();
        assert!(g.xi_max >= 12.0 * 10f64.ln() / PI - 1e-9);
        assert!((g.dx * g.dxi() * g.n as f64 - 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn design_is_monotone_in_tolerance_and_scales_in_time() {
        let mut m = tempered();
        m.c_lower = Some(0.5);
        let coarse = design_grid(&m, 0.5, 1e-6).unwrap();
        let fine = design_grid(&m, 0.5, 1e-10).unwrap();
        assert!(fine.xi_max > coarse.xi_max);
        let mut s = cauchy();
        s.c_lower = Some(1.0);
        let a = design_grid(&s, 1.0, 1e-8).unwrap();
        let b = design_grid(&s, 2.0, 1e-8).unwrap();
        assert!((a.xi_max / b.xi_max - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_model_has_no_grid() {
        let mu = SpectralMeasure::atomic(vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
        let m = LevyModel::new(1.5, 1.5, 1.0, vec![0.0, 0.0], mu, RadialProfile::new(one(), one())).unwrap();
        assert!(matches!(design_grid(&m, 1.0, 1e-8), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn cauchy_density_matches_closed_form() {
        let m = cauchy();
        for t in [0.5, 1.0, 2.0] {
            let params = design_grid(&m, t, 1e-12).unwrap();
            let grid = invert(&m, t, &params).unwrap();
            assert!((grid.mass - 1.0).abs() < 1e-10);
            let mut worst: f64 = 0.0;
            for (i, &p) in grid.values.iter().enumerate() {
                let x = grid.coord(i);
                if x.abs() <= 10.0 {
                    let exact = t / (PI * (t * t + x * x));
                    worst = worst.max((p - exact).abs() / exact);
                }
            }
            assert!(worst < 1e-6, "t = {t}: {worst}");
        }
    }

    #[test]
    fn direct_inversion_agrees_with_lattice() {
        let m = tempered();
        let exp = build_exponent(&m, Target::Full, "auto").unwrap();
        let params = design_grid(&m, 0.7, 1e-12).unwrap();
        let grid = invert(&m, 0.7, &params).unwrap();
        let xs: Vec<f64> = [0usize, 7, 40, 160].iter().map(|&k| grid.coord(grid.n() / 2 + k)).collect();
        let direct = direct_density(exp.as_ref(), 0.7, &xs).unwrap();
        for (x, p) in xs.iter().zip(direct) {
            let lat = grid.value(&[*x]);
            assert!((lat - p).abs() < 1e-9 * grid.max(), "x = {x}: {lat} vs {p}");
        }
    }

    #[test]
    fn symmetric_density_is_even() {
        let m = tempered();
        let params = design_grid(&m, 1.0, 1e-10).unwrap();
        let g = invert(&m, 1.0, &params).unwrap();
        let n = g.n();
        for k in 1..n / 2 {
            let (a, b) = (g.values[n / 2 + k], g.values[n / 2 - k]);
            assert!((a - b).abs() <= 1e-8 * g.max(), "k {k}");
        }
        assert!(g.min() >= -1e-6 * g.max());
    }

    #[test]
    fn refinement_of_frequency_step_is_stable() {
        let m = tempered();
        let p = design_grid(&m, 1.0, 1e-12).unwrap();
        let coarse = invert(&m, 1.0, &p).unwrap();
        let doubled = GridParams { n: 2 * p.n, ..p };
        let fine = invert(&m, 1.0, &doubled).unwrap();
        let worst = (0..coarse.n())
            .map(|k| (coarse.values[k] - fine.value(&[coarse.coord(k)])).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn chapman_kolmogorov_on_lattice() {
        let m = tempered();
        let params = design_grid(&m, 1.0, 1e-12).unwrap();
        let one = invert(&m, 0.5, &params).unwrap();
        let two = invert(&m, 1.0, &params).unwrap();
        let n = one.n();
        let dx = one.dx();
        // Direct discrete convolution around the centre.
        let mut l1 = 0.0;
        for k in n / 2 - 400..n / 2 + 400 {
            let mut conv = 0.0;
            for j in 0..n {
                let i = k as isize - j as isize + (n / 2) as isize;
                if (0..n as isize).contains(&i) {
                    conv += one.values[j] * one.values[i as usize];
                }
            }
            l1 += (conv * dx - two.values[k]).abs() * dx;
        }
        assert!(l1 < 1e-3, "{l1}");
    }

    #[test]
    fn stable_scaling_in_two_dimensions() {
        let mu = SpectralMeasure::atomic(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).unwrap();
        let b = stable_canonical_drift(&mu, 1.5).unwrap();
        let m = LevyModel::new(1.5, 1.5, 1.0, b, mu, RadialProfile::new(one(), one())).unwrap();
        let req = InversionRequest::new(1.0, 1e-8);
        let p1 = compute_density(&m, "lattice-fft", &req).unwrap();
        let p4 = compute_density(&m, "lattice-fft", &InversionRequest::new(4.0, 1e-8)).unwrap();
        let s = 4f64.powf(1.0 / 1.5);
        for x in [[0.0, 0.0], [1.0, -0.5], [3.0, 2.0]] {
            let node = p4.snap(&[x[0] * s, x[1] * s]).unwrap();
            let base = [node[0] / s, node[1] / s];
            let lhs = p4.value(&node);
            let rhs = p1.value(&p1.snap(&base).unwrap()) / (s * s);
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-3 * p1.peak()), "{x:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn lattice_converges_to_product_density_for_two_atoms() {
        let mu = SpectralMeasure::atomic_normalized(vec![vec![1.0, 0.0], vec![1.0, 1.0]], vec![1.0, 0.5]).unwrap();
        let m = LevyModel::new(1.5, 1.5, 1.0, vec![0.1, -0.2], mu, RadialProfile::new(one(), one())).unwrap();
        let prod = compute_density(&m, "product", &InversionRequest::new(1.0, 1e-10)).unwrap();
        // Heavy tails wrap around the periodic 2D lattice; the error must shrink as the window grows.
        let errors: Vec<f64> = [1024usize, 4096]
            .iter()
            .map(|&n| {
                let p = GridParams { xi_max: 30.0, n, dx: PI / 30.0, capped: false };
                let g = invert(&m, 1.0, &p).unwrap();
                (g.value(&[0.0, 0.0]) - prod.value(&[0.0, 0.0])).abs() / prod.peak()
            })
            .collect();
        assert!(errors[1] < 5e-6 && errors[1] < errors[0] / 4.0, "{errors:?}");
        assert!(compute_density(&tempered(), "product", &InversionRequest::new(1.0, 1e-10)).is_err());
    }

    #[test]
    fn on_diagonal_cauchy_constant() {
        let rep = on_diagonal_check(&cauchy(), &[0.3, 1.0, 7.0], 1e-10).unwrap();
        for row in &rep.rows {
            assert!((row.scaled - 1.0 / PI).abs() < 1e-6, "{row:?}");
        }
        assert!(rep.pass && rep.ratio - 1.0 < 1e-6);
    }

    #[test]
    fn binary_export_layout() {
        let m = cauchy();
        let params = GridParams { xi_max: 40.0, n: 256, dx: PI / 40.0, capped: false };
        let g = invert(&m, 1.0, &params).unwrap();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 8 * 256);
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 256);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 1.0);
        let mut csv = Vec::new();
        g.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("x1,p\n"));
        assert_eq!(text.lines().count(), 257);
    }
}
