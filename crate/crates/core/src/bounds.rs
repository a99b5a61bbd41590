//! Executable forms of the heat-kernel estimates, with constant fitting
//! against FFT densities, Monte Carlo batches and lattice convolutions.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use serde_json::{json, Value};

use crate::density::{compute_density, product_factors, DensityOracle, InversionRequest};
use crate::error::{Error, Result};
use crate::exponent::Target;
use crate::model::{log_grid, LevyModel};
use crate::registry::Registry;
use crate::simulate::{sample_large_jumps, CHUNK};

pub use crate::model::h_scale;

pub const SCHEMA_VERSION: u32 = 1;

/// Constants of the main estimate. `c` governs `t ≤ 1`, `c1..c3` govern `t > 1`.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct BoundParams {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl BoundParams {
    /// Unit prefactors with `c₂ = c₃ = 1`; the shape used for fitting.
    pub const UNIT: BoundParams = BoundParams {
        c: 1.0,
        c1: 1.0,
        c2: 1.0,
        c3: 1.0,
    };
}

fn ln_tail_factor(model: &LevyModel, x: f64) -> f64 {
    let (q, phi) = (&model.profile().q, &model.profile().phi);
    -(model.gamma() + model.alpha()) * x.ln() + q.ln_value(x) + phi.ln_value(0.25 * x)
}

/// `ln` of the main bound at `|x|`, in the frame shifted by `t b_{h(t)}`.
pub fn theorem1_ln_bound(model: &LevyModel, t: f64, x_norm: f64, p: &BoundParams) -> f64 {
    let d = model.dim() as f64;
    let (alpha, beta, gamma) = (model.alpha(), model.beta(), model.gamma());
    if t <= 1.0 {
        let ln_min = if x_norm == 0.0 {
            0.0
        } else {
            ((1.0 + gamma / alpha) * t.ln() + ln_tail_factor(model, x_norm)).min(0.0)
        };
        p.c.ln() - d / alpha * t.ln() + ln_min
    } else {
        let ln_min = if x_norm == 0.0 {
            0.0
        } else {
            ((1.0 + gamma / beta) * t.ln() + ln_tail_factor(model, x_norm)).min(0.0)
        };
        let s = t.powf(-1.0 / beta) * x_norm;
        let ln_exp = -p.c2 * s * (p.c3 * s).ln_1p();
        let hi = ln_min.max(ln_exp);
        p.c1.ln() - d / beta * t.ln() + hi + ((ln_min - hi).exp() + (ln_exp - hi).exp()).ln()
    }
}

pub fn theorem1_bound(model: &LevyModel, t: f64, x: &[f64], p: &BoundParams) -> f64 {
    theorem1_ln_bound(model, t, norm(x), p).exp()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub t: f64,
    /// Point in the shifted frame.
    pub x: Vec<f64>,
    pub density: f64,
    /// Bound with unit prefactor.
    pub shape: f64,
    pub ratio: f64,
    /// False when the density is below the oracle's resolved floor or off its window.
    pub resolved: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub params: BoundParams,
    /// `p / shape` maxima over `t ≤ 1` and `t > 1`.
    pub sup_ratio_small_t: f64,
    pub sup_ratio_large_t: f64,
    pub rows: usize,
    pub resolved_rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub coarse: FitSummary,
    pub refined: FitSummary,
    /// Largest factor by which a fitted constant moved under refinement.
    pub stability: f64,
    pub rows: Vec<BoundRow>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub tol: f64,
    /// Inversion strategy, or `auto` (product when μ has `d` independent atoms and `d > 1`).
    pub strategy: String,
    pub radii_per_direction: usize,
    pub directions: Option<Vec<Vec<f64>>>,
    /// Sweep `|x|` out to where the unit-constant bound falls below this.
    pub bound_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            strategy: "auto".into(),
            radii_per_direction: 24,
            directions: None,
            bound_floor: 1e-10,
        }
    }
}

pub fn default_t_grid() -> Vec<f64> {
    vec![0.05, 0.2, 1.0, 5.0, 25.0]
}

fn default_directions(model: &LevyModel) -> Vec<Vec<f64>> {
    match model.dim() {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => {
            let mut dirs: Vec<Vec<f64>> = (0..16)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / 16.0;
                    vec![a.cos(), a.sin()]
                })
                .collect();
            if model.mu().len() <= 16 {
                for th in model.mu().directions() {
                    dirs.push(th.clone());
                    dirs.push(th.iter().map(|v| -v).collect());
                }
            }
            dirs
        }
        d => {
            let mut dirs = Vec::new();
            for i in 0..d {
                for s in [1.0, -1.0] {
                    let mut v = vec![0.0; d];
                    v[i] = s;
                    dirs.push(v);
                }
            }
            let diag = 1.0 / (d as f64).sqrt();
            dirs.push(vec![diag; d]);
            dirs.push(vec![-diag; d]);
            dirs
        }
    }
}

fn resolve_strategy(model: &LevyModel, strategy: &str) -> Result<String> {
    if strategy != "auto" {
        return Ok(strategy.to_string());
    }
    if model.dim() > 1 && product_factors(model)?.is_some() {
        Ok("product".into())
    } else {
        Ok("lattice-fft".into())
    }
}

/// Radius where the unit-constant bound drops below `floor`.
fn sweep_radius(model: &LevyModel, t: f64, floor: f64) -> f64 {
    let target = floor.ln();
    let f = |x: f64| theorem1_ln_bound(model, t, x, &BoundParams::UNIT) - target;
    let mut hi = model.h(t);
    while f(hi) > 0.0 && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn rows_for(
    model: &LevyModel,
    oracle: &dyn DensityOracle,
    t: f64,
    directions: &[Vec<f64>],
    radii: &[f64],
) -> Result<Vec<BoundRow>> {
    let shift: Vec<f64> = model.centering_shift(model.h(t))?.iter().map(|b| t * b).collect();
    let floor = oracle.resolved_floor();
    let mut points: Vec<Vec<f64>> = vec![vec![0.0; model.dim()]];
    for dir in directions {
        for &r in radii {
            points.push(dir.iter().map(|v| v * r).collect());
        }
    }
    Ok(points
        .par_iter()
        .map(|x| {
            let y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let (x, density, resolved) = match oracle.snap(&y) {
                Some(node) => {
                    let p = oracle.value(&node);
                    let x: Vec<f64> = node.iter().zip(&shift).map(|(a, b)| a - b).collect();
                    (x, p, p > floor)
                }
                None => (x.clone(), f64::NAN, false),
            };
            let shape = theorem1_ln_bound(model, t, norm(&x), &BoundParams::UNIT).exp();
            BoundRow {
                t,
                x,
                density,
                shape,
                ratio: density / shape,
                resolved,
            }
        })
        .collect())
}

fn summarize(rows: &[BoundRow]) -> FitSummary {
    let sup = |small: bool| {
        rows.iter()
            .filter(|r| r.resolved && (r.t <= 1.0) == small)
            .map(|r| r.ratio)
            .fold(0.0, f64::max)
    };
    let (small, large) = (sup(true), sup(false));
    FitSummary {
        params: BoundParams {
            c: small,
            c1: large,
            ..BoundParams::UNIT
        },
        sup_ratio_small_t: small,
        sup_ratio_large_t: large,
        rows: rows.len(),
        resolved_rows: rows.iter().filter(|r| r.resolved).count(),
    }
}

fn refine_geometric(grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * grid.len());
    for (i, &t) in grid.iter().enumerate() {
        out.push(t);
        if let Some(&next) = grid.get(i + 1) {
            out.push((t * next).sqrt());
        }
    }
    out
}

/// Fits the prefactors of the main estimate on a `(t, x)` grid and again on the
/// grid refined 2× in both variables.
pub fn fit_constants(model: &LevyModel, t_grid: &[f64], opts: &FitOptions) -> Result<BoundReport> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Precondition("t grid must be nonempty and positive".into()));
    }
    let mut model = model.clone();
    if model.c_lower.is_none() {
        let report = crate::exponent::certify_lower_bound(&mut model)?;
        if !report.pass {
            return Err(crate::exponent::lower_bound_failure(&report));
        }
    }
    let strategy = resolve_strategy(&model, &opts.strategy)?;
    let directions = opts.directions.clone().unwrap_or_else(|| default_directions(&model));
    let fine_t = refine_geometric(t_grid);

    let oracles: Vec<(f64, Box<dyn DensityOracle>)> = fine_t
        .iter()
        .map(|&t| Ok((t, compute_density(&model, &strategy, &InversionRequest::new(t, opts.tol))?)))
        .collect::<Result<_>>()?;

    let sweep = |t: f64, oracle: &dyn DensityOracle, per: usize| -> Result<Vec<BoundRow>> {
        let top = sweep_radius(&model, t, opts.bound_floor).min(oracle.reach());
        let lo = 1e-2 * model.h(t);
        let radii = if top > lo { log_grid(lo, top, per) } else { vec![top] };
        rows_for(&model, oracle, t, &directions, &radii)
    };

    let mut coarse_rows = Vec::new();
    let mut fine_rows = Vec::new();
    for (t, oracle) in &oracles {
        if t_grid.contains(t) {
            coarse_rows.extend(sweep(*t, oracle.as_ref(), opts.radii_per_direction)?);
        }
        fine_rows.extend(sweep(*t, oracle.as_ref(), 2 * opts.radii_per_direction)?);
    }
    let coarse = summarize(&coarse_rows);
    let refined = summarize(&fine_rows);
    let moved = |a: f64, b: f64| {
        if a == 0.0 && b == 0.0 {
            1.0
        } else {
            (a / b).max(b / a)
        }
    };
    let stability = moved(coarse.params.c, refined.params.c).max(moved(coarse.params.c1, refined.params.c1));
    let has_small = t_grid.iter().any(|&t| t <= 1.0);
    let has_large = t_grid.iter().any(|&t| t > 1.0);
    let finite_positive = |v: f64, needed: bool| !needed || (v.is_finite() && v > 0.0);
    let pass = finite_positive(refined.params.c, has_small)
        && finite_positive(refined.params.c1, has_large)
        && stability <= 2.0;
    Ok(BoundReport {
        coarse,
        refined,
        stability,
        rows: fine_rows,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Bounded-support laws.

/// Tail bound for an infinitely divisible law whose Lévy measure lives in `B(0, r)`.
pub fn pi_tail_bound(a: f64, r: f64, m: f64, xi0: f64, d: usize) -> Result<f64> {
    let sd = (d as f64).sqrt();
    let a_min = pi_tail_threshold(m, xi0, d);
    if !(a >= a_min) {
        return Err(Error::Precondition(format!(
            "tail bound is only claimed for a >= {a_min}, got {a}"
        )));
    }
    Ok(2.0 * d as f64 * (-(a / (2.0 * sd * (r + 1.0))) * (a / (2.0 * sd * m)).ln()).exp())
}

/// `2√d (ξ₀ + M/e)`.
pub fn pi_tail_threshold(m: f64, xi0: f64, d: usize) -> f64 {
    2.0 * (d as f64).sqrt() * (xi0 + m / std::f64::consts::E)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PiDensityConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl PiDensityConstants {
    /// `c₂, c₃` as they come out of the tail-bound argument; `c₁` left to fit.
    pub fn from_tail_argument(d: usize) -> Self {
        let sd = (d as f64).sqrt();
        Self {
            c1: 1.0,
            c2: 1.0 / (4.0 * sd * (d as f64 + 1.0)),
            c3: 1.0 / (4.0 * sd),
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn pi_density_bound(
    x_norm: f64,
    r: f64,
    m: f64,
    xi0: f64,
    m0: f64,
    m1: f64,
    d: usize,
    k: &PiDensityConstants,
) -> Result<f64> {
    let sd = (d as f64).sqrt();
    let x_min = (4.0 * sd * (xi0 + m / std::f64::consts::E)).max(m0 / (m1 * sd));
    if !(x_norm > x_min) {
        return Err(Error::Precondition(format!(
            "density bound is only claimed for |x| > {x_min}, got {x_norm}"
        )));
    }
    let df = d as f64;
    Ok(k.c1 * m1.powf(df / (df + 1.0)) * (-(k.c2 * x_norm / (r + 1.0)) * (k.c3 * x_norm / m).ln()).exp())
}

/// A one-dimensional Lévy measure made of finitely many atoms in `[-r, r]`.
#[derive(Debug, Clone, Serialize)]
pub struct AtomicLevy {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AtomicLevy {
    pub fn support_radius(&self) -> f64 {
        self.points.iter().map(|p| p.abs()).fold(0.0, f64::max)
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∫ y² ν₀(dy)`.
    pub fn second_moment(&self) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * p * p).sum()
    }

    /// `∫_{|y|>1} y ν₀(dy)`.
    pub fn xi0(&self) -> f64 {
        self.points.iter().zip(&self.weights).filter(|(p, _)| p.abs() > 1.0).map(|(p, w)| w * p).sum()
    }

    /// `∫_{|y|<1} y ν₀(dy)`, removed by the compensator.
    pub fn compensator(&self) -> f64 {
        self.points.iter().zip(&self.weights).filter(|(p, _)| p.abs() < 1.0).map(|(p, w)| w * p).sum()
    }

    /// Draws from the law with exponent `∫(e^{iξy} − 1 − iξy 1_{|y|<1}) ν₀(dy)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let index = WeightedIndex::new(self.weights.iter().copied())
            .map_err(|e| Error::InvalidModel(format!("atom weights: {e}")))?;
        let poisson = Poisson::new(self.mass()).map_err(|e| Error::InvalidModel(format!("{e}")))?;
        let shift = self.compensator();
        let chunks = n.div_ceil(CHUNK);
        let parts: Vec<Vec<f64>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let len = CHUNK.min(n - c * CHUNK);
                (0..len)
                    .map(|_| {
                        let k: f64 = poisson.sample(&mut rng);
                        let mut x = -shift;
                        for _ in 0..k as u64 {
                            x += self.points[index.sample(&mut rng)];
                        }
                        x
                    })
                    .collect()
            })
            .collect();
        Ok(parts.concat())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub a: f64,
    pub empirical: f64,
    /// Binomial standard error of the empirical tail.
    pub std_error: f64,
    pub bound: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub threshold: f64,
    pub samples: usize,
    pub rows: Vec<TailRow>,
    pub violations: usize,
    pub pass: bool,
}

/// Monte Carlo tails `P(|X| > a)` against the bounded-support tail bound.
pub fn pi_tail_check(levy: &AtomicLevy, a_grid: &[f64], n: usize, seed: u64) -> Result<TailReport> {
    let (r, m, xi0) = (levy.support_radius(), levy.second_moment(), levy.xi0().abs());
    let threshold = pi_tail_threshold(m, xi0, 1);
    let mut xs: Vec<f64> = levy.sample(n, seed)?.into_iter().map(f64::abs).collect();
    xs.sort_by(f64::total_cmp);
    let rows: Vec<TailRow> = a_grid
        .iter()
        .filter(|&&a| a >= threshold)
        .map(|&a| {
            let above = xs.len() - xs.partition_point(|&v| v <= a);
            let p = above as f64 / n as f64;
            let bound = pi_tail_bound(a, r, m, xi0, 1).expect("filtered to the admissible range");
            TailRow {
                a,
                empirical: p,
                std_error: (p * (1.0 - p) / n as f64).sqrt(),
                bound,
                violated: p > bound,
            }
        })
        .collect();
    let violations = rows.iter().filter(|r| r.violated).count();
    Ok(TailReport {
        threshold,
        samples: n,
        pass: violations == 0 && !rows.is_empty(),
        rows,
        violations,
    })
}

// ---------------------------------------------------------------------------
// Large jumps: convolution powers and the compound Poisson part.

/// Target set for the convolution-power bound.
#[derive(Debug, Clone, Serialize)]
pub enum Region {
    /// `{inner ≤ |y| < outer}`.
    Annulus { inner: f64, outer: f64 },
    /// `B(center, radius)` with `radius < |center|/2`.
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    fn distance_and_diameter(&self) -> (f64, f64) {
        match self {
            Region::Annulus { inner, outer } => (*inner, 2.0 * outer),
            Region::Ball { center, radius } => (norm(center) - radius, 2.0 * radius),
        }
    }
}

/// `cⁿ ψ(r)^{n−1} δ(A)^{−γ−α} q(δ(A)) φ(δ(A)/2) diam(A)^γ`; for balls the
/// `|x|^{−γ−α} q(|x|) φ(|x|/4) ρ^γ` form.
pub fn convolution_power_bound(model: &LevyModel, r: f64, n: u32, region: &Region, c: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition("convolution power must be >= 1".into()));
    }
    let psi = model.tail_mass_psi(r)?.psi;
    let (q, phi) = (&model.profile().q, &model.profile().phi);
    let (ga, gamma) = (model.gamma() + model.alpha(), model.gamma());
    let ln_shape = match region {
        Region::Ball { center, radius } => {
            let x = norm(center);
            if !(*radius < 0.5 * x) {
                return Err(Error::Precondition(format!("need radius < |x|/2, got {radius} and |x| = {x}")));
            }
            -ga * x.ln() + q.ln_value(x) + phi.ln_value(0.25 * x) + gamma * radius.ln()
        }
        Region::Annulus { .. } => {
            let (delta, diam) = region.distance_and_diameter();
            if !(delta > 0.0) {
                return Err(Error::Precondition("region must stay away from the origin".into()));
            }
            -ga * delta.ln() + q.ln_value(delta) + phi.ln_value(0.5 * delta) + gamma * diam.ln()
        }
    };
    Ok((n as f64 * c.ln() + (n as f64 - 1.0) * psi.ln() + ln_shape).exp())
}

/// `c t e^{t(cψ(r) − |ν̄_r|)} |x|^{−γ−α} q(|x|) φ(|x|/4) ρ^γ`.
pub fn pbar_ball_bound(model: &LevyModel, r: f64, t: f64, x: &[f64], rho: f64, c: f64) -> Result<f64> {
    let xn = norm(x);
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("t must be > 0, got {t}")));
    }
    if !(rho < 0.5 * xn) {
        return Err(Error::Precondition(format!("need rho < |x|/2, got {rho} and |x| = {xn}")));
    }
    let psi = model.tail_mass_psi(r)?;
    let ln = c.ln() + t.ln() + t * (c * psi.psi - psi.large_jump_mass) + ln_tail_factor(model, xn)
        + model.gamma() * rho.ln();
    Ok(ln.exp())
}

/// `ν̄_r` binned on the nodes `(k − N/2)Δx`, `|k − N/2| ≤ N/2`, each node carrying its cell.
#[derive(Debug, Clone)]
pub struct LatticeMeasure {
    pub dx: f64,
    pub masses: Vec<f64>,
    /// Mass that fell outside the window.
    pub lost: f64,
}

impl LatticeMeasure {
    pub fn coord(&self, k: usize) -> f64 {
        (k as f64 - (self.masses.len() / 2) as f64) * self.dx
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn region_mass(&self, inner: f64, outer: f64) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let a = self.coord(*k).abs();
                a >= inner && a < outer
            })
            .map(|(_, m)| m)
            .sum()
    }

    /// Linear convolution, folded back onto the same window.
    pub fn convolve(&self, other: &LatticeMeasure) -> LatticeMeasure {
        let n = self.masses.len();
        let size = (2 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        let pad = |v: &[f64]| {
            let mut buf: Vec<Complex64> = v.iter().map(|&m| Complex64::new(m, 0.0)).collect();
            buf.resize(size, Complex64::new(0.0, 0.0));
            buf
        };
        let mut a = pad(&self.masses);
        let mut b = pad(&other.masses);
        fwd.process(&mut a);
        fwd.process(&mut b);
        for (x, y) in a.iter_mut().zip(&b) {
            *x *= y;
        }
        inv.process(&mut a);
        let half = n / 2;
        let mut masses = vec![0.0; n];
        let mut lost = self.lost * other.total() + other.lost * self.total() + self.lost * other.lost;
        for (idx, v) in a.iter().enumerate().take(2 * n - 1) {
            let m = (v.re / size as f64).max(0.0);
            // node i + node j sits at index i + j − N/2
            match (idx + n).checked_sub(half + n) {
                Some(k) if k < n => masses[k] += m,
                _ => lost += m,
            }
        }
        LatticeMeasure {
            dx: self.dx,
            masses,
            lost,
        }
    }
}

/// Bins `ν̄_r` of a 1D model on `cells` nodes spanning `[−L, L]`.
pub fn lattice_large_jumps(model: &LevyModel, r: f64, half_width: f64, cells: usize) -> Result<LatticeMeasure> {
    if model.dim() != 1 {
        return Err(Error::Precondition("lattice convolution oracle is one-dimensional".into()));
    }
    let law = model.radial();
    let dx = 2.0 * half_width / cells as f64;
    let half = cells / 2;
    let mu = model.mu();
    let (mut w_pos, mut w_neg) = (0.0, 0.0);
    for (th, w) in mu.directions().iter().zip(mu.weights()) {
        if th[0] > 0.0 {
            w_pos += w;
        } else {
            w_neg += w;
        }
    }
    // Node k ≥ half covers [(k−half−½)Δx, (k−half+½)Δx) on the positive side.
    let radial: Vec<f64> = (0..=half)
        .into_par_iter()
        .map(|j| {
            let a = ((j as f64 - 0.5) * dx).max(r);
            let b = (j as f64 + 0.5) * dx;
            if b <= a {
                Ok(0.0)
            } else {
                law.moment(0.0, a, b)
            }
        })
        .collect::<Result<_>>()?;
    let mut masses = vec![0.0; cells];
    for (j, m) in radial.iter().enumerate() {
        if half + j < cells {
            masses[half + j] += w_pos * m;
        }
        if j <= half {
            masses[half - j] += w_neg * m;
        }
    }
    // Node +half·Δx is one past the last index, so its cell joins the positive tail.
    let beyond = law.moment(0.0, ((half as f64 + 0.5) * dx).max(r), f64::INFINITY)?;
    let lost = w_pos * (beyond + radial[half]) + w_neg * beyond;
    Ok(LatticeMeasure { dx, masses, lost })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvolutionRow {
    pub n: u32,
    pub inner: f64,
    pub outer: f64,
    pub oracle: f64,
    /// Bound with `c = 1`.
    pub shape: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvolutionReport {
    pub r: f64,
    pub psi: f64,
    pub cells: usize,
    pub half_width: f64,
    pub lost_mass: Vec<f64>,
    pub c: f64,
    pub c_refined: f64,
    pub rows: Vec<ConvolutionRow>,
    pub pass: bool,
}

fn fit_convolution(model: &LevyModel, r: f64, max_n: u32, half_width: f64, cells: usize, edges: &[f64]) -> Result<(f64, Vec<ConvolutionRow>, Vec<f64>)> {
    let base = lattice_large_jumps(model, r, half_width, cells)?;
    let mut power = base.clone();
    let mut rows = Vec::new();
    let mut lost = Vec::new();
    let mut c: f64 = 0.0;
    for n in 1..=max_n {
        if n > 1 {
            power = power.convolve(&base);
        }
        lost.push(power.lost);
        for w in edges.windows(2) {
            let region = Region::Annulus { inner: w[0], outer: w[1] };
            let shape = convolution_power_bound(model, r, n, &region, 1.0)?;
            let oracle = power.region_mass(w[0], w[1]);
            if oracle > 0.0 {
                c = c.max((oracle / shape).powf(1.0 / n as f64));
            }
            rows.push(ConvolutionRow {
                n,
                inner: w[0],
                outer: w[1],
                oracle,
                shape,
            });
        }
    }
    Ok((c, rows, lost))
}

/// Radius below which `ν̄_r` keeps all but `1 − level` of its mass.
fn radial_quantile(model: &LevyModel, r: f64, level: f64) -> Result<f64> {
    let law = model.radial();
    let total = law.moment(0.0, r, f64::INFINITY)?;
    let mut hi = 2.0 * r;
    while law.moment(0.0, hi, f64::INFINITY)? > (1.0 - level) * total {
        hi *= 2.0;
    }
    Ok(hi)
}

/// Lattice oracle for `ν̄_r^{n*}` on 20 log-spaced annuli, fitted `c`, refinement check.
pub fn convolution_power_check(model: &LevyModel, r: f64, max_n: u32, cells: usize) -> Result<ConvolutionReport> {
    let quantile = radial_quantile(model, r, 0.99)?;
    let half_width = 4.0 * max_n as f64 * quantile;
    let edges = log_grid(0.5 * r, 0.5 * half_width, 21);
    let (c, rows, lost_mass) = fit_convolution(model, r, max_n, half_width, cells, &edges)?;
    let (c_refined, _, _) = fit_convolution(model, r, max_n, half_width, 2 * cells, &edges)?;
    let stable = (c / c_refined).max(c_refined / c) <= 2.0;
    Ok(ConvolutionReport {
        r,
        psi: model.tail_mass_psi(r)?.psi,
        cells,
        half_width,
        lost_mass,
        c,
        c_refined,
        pass: c.is_finite() && c > 0.0 && stable,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BallRow {
    pub t: f64,
    pub x: f64,
    pub rho: f64,
    pub frequency: f64,
    pub hits: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BallReport {
    pub samples: usize,
    pub c: f64,
    pub rows: Vec<BallRow>,
    pub pass: bool,
}

/// Monte Carlo ball frequencies of `P̄_t^{h(t)}` and the smallest `c` making the ball bound hold.
pub fn pbar_ball_check(model: &LevyModel, t_grid: &[f64], n: usize, seed: u64) -> Result<BallReport> {
    let mut rows = Vec::new();
    for (i, &t) in t_grid.iter().enumerate() {
        let r = model.h(t);
        let batch = sample_large_jumps(model, r, t, n, seed.wrapping_add(i as u64))?;
        let xs: Vec<f64> = batch.coordinate(0);
        for x in log_grid(2.0 * r, 50.0 * r.max(1.0), 16) {
            for sx in [x, -x] {
                let rho = 0.25 * x;
                let hits = xs.iter().filter(|&&v| (v - sx).abs() < rho).count();
                if hits >= 10 {
                    rows.push(BallRow {
                        t,
                        x: sx,
                        rho,
                        frequency: hits as f64 / n as f64,
                        hits,
                    });
                }
            }
        }
    }
    let holds = |c: f64| -> Result<bool> {
        for row in &rows {
            if row.frequency > pbar_ball_bound(model, model.h(row.t), row.t, &[row.x], row.rho, c)? {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let mut hi = 1.0;
    while !holds(hi)? {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(BallReport {
                samples: n,
                c: f64::INFINITY,
                rows,
                pass: false,
            });
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid > 0.0 && holds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(BallReport {
        samples: n,
        c: hi,
        pass: !rows.is_empty(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Truncated densities.

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TruncatedConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// `g(s) = exp(−c₂ s log(1 + c₃ s))`.
pub fn g_decay(s: f64, c2: f64, c3: f64) -> f64 {
    (-c2 * s * (c3 * s).ln_1p()).exp()
}

/// `c₁ h(t)^{−d} g(|x|/h(t))`.
pub fn truncated_density_bound(model: &LevyModel, t: f64, x: &[f64], k: &TruncatedConstants) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("t must be > 0, got {t}")));
    }
    let h = model.h(t);
    Ok(k.c1 * h.powi(-(model.dim() as i32)) * g_decay(norm(x) / h, k.c2, k.c3))
}

/// `sup_t t h(t)^{−2} ∫_{|y|<h(t)} |y|² ν(dy)` over a log grid: the second moment of the rescaled truncated law.
pub fn rescaled_second_moment(model: &LevyModel, t_grid: &[f64]) -> Result<f64> {
    let mut m: f64 = 0.0;
    for &t in t_grid {
        let h = model.h(t);
        m = m.max(t * h.powi(-2) * model.truncation_moments(0.0, h)?.second_moment);
    }
    Ok(m)
}

impl TruncatedConstants {
    /// `c₂ = 1/(8√d(d+1))`, `c₃ = 1/(4√d M)`; what the bounded-support argument yields with `r = 1`.
    pub fn from_tail_argument(d: usize, m: f64) -> Self {
        let sd = (d as f64).sqrt();
        Self {
            c1: 1.0,
            c2: 1.0 / (8.0 * sd * (d as f64 + 1.0)),
            c3: 1.0 / (4.0 * sd * m),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncatedRow {
    pub t: f64,
    pub x: f64,
    pub density: f64,
    pub shape: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncatedReport {
    pub constants: TruncatedConstants,
    /// `sup_s g(s) s^{2γ}` on the grid; finite means `g ≤ c s^{−2γ}` holds there.
    pub g_power_constant: f64,
    pub g_monotone: bool,
    pub rows: Vec<TruncatedRow>,
    pub pass: bool,
}

/// FFT densities of the `h(t)`-truncated law against `c₁ h^{−d} g(|x|/h)` on `|x| ≤ span·h`.
pub fn truncated_density_check(model: &LevyModel, t_grid: &[f64], span: f64, tol: f64) -> Result<TruncatedReport> {
    if model.dim() != 1 {
        return Err(Error::Precondition("truncated density check sweeps a 1D grid".into()));
    }
    let m = rescaled_second_moment(model, &log_grid(1e-3, 1e3, 61))?;
    let mut k = TruncatedConstants::from_tail_argument(1, m);
    let mut rows = Vec::new();
    for &t in t_grid {
        let h = model.h(t);
        let mut req = InversionRequest::new(t, tol);
        req.target = Target::Truncated(h);
        let oracle = compute_density(model, "lattice-fft", &req)?;
        let floor = oracle.resolved_floor();
        let reach = oracle.reach().min(span * h);
        let steps = 600;
        for i in 0..=steps {
            let x = reach * i as f64 / steps as f64;
            let Some(node) = oracle.snap(&[x]) else { continue };
            let p = oracle.value(&node);
            if p <= floor {
                continue;
            }
            rows.push(TruncatedRow {
                t,
                x: node[0],
                density: p,
                shape: truncated_density_bound(model, t, &node, &TruncatedConstants { c1: 1.0, ..k })?,
            });
        }
    }
    k.c1 = rows.iter().map(|r| r.density / r.shape).fold(0.0, f64::max);
    let gamma = model.gamma();
    let s_grid = log_grid(1e-2, 1e3, 200);
    let g: Vec<f64> = s_grid.iter().map(|&s| g_decay(s, k.c2, k.c3)).collect();
    let g_monotone = g.windows(2).all(|w| w[1] <= w[0]);
    let g_power_constant = s_grid.iter().zip(&g).map(|(s, g)| g * s.powf(2.0 * gamma)).fold(0.0, f64::max);
    Ok(TruncatedReport {
        constants: k,
        g_power_constant,
        g_monotone,
        pass: k.c1.is_finite() && k.c1 > 0.0 && g_monotone && g_power_constant.is_finite() && !rows.is_empty(),
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PiDensityReport {
    pub m: f64,
    pub m0: f64,
    pub m1: f64,
    pub x_min: f64,
    pub constants: PiDensityConstants,
    pub points: usize,
    pub pass: bool,
}

/// Density of the law with `ν` restricted to `B(0, r)` at `t = 1`, against the
/// bounded-support density bound with `m₀, m₁` measured on the grid.
pub fn pi_density_check(model: &LevyModel, r: f64, tol: f64) -> Result<PiDensityReport> {
    if model.dim() != 1 {
        return Err(Error::Precondition("bounded-support density check is one-dimensional".into()));
    }
    let mut req = InversionRequest::new(1.0, tol);
    req.target = Target::Truncated(r);
    let oracle = compute_density(model, "lattice-fft", &req)?;
    let floor = oracle.resolved_floor();
    let m = model.truncation_moments(0.0, r)?.second_moment;
    let reach = oracle.reach();
    let n = 4000;
    let xs: Vec<f64> = (0..=n).map(|i| -reach + 2.0 * reach * i as f64 / n as f64).collect();
    let nodes: Vec<(f64, f64)> = xs
        .iter()
        .filter_map(|&x| oracle.snap(&[x]).map(|nd| (nd[0], oracle.value(&nd))))
        .collect();
    let m0 = nodes.iter().map(|n| n.1).fold(0.0, f64::max);
    let m1 = nodes
        .windows(2)
        .filter(|w| w[1].0 > w[0].0)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .fold(0.0, f64::max);
    let mut k = PiDensityConstants::from_tail_argument(1);
    let x_min = (4.0 * m / std::f64::consts::E).max(m0 / m1);
    let mut c1: f64 = 0.0;
    let mut points = 0;
    for &(x, p) in &nodes {
        if x.abs() > x_min && p > floor {
            let shape = pi_density_bound(x.abs(), r, m, 0.0, m0, m1, 1, &PiDensityConstants { c1: 1.0, ..k })?;
            c1 = c1.max(p / shape);
            points += 1;
        }
    }
    k.c1 = c1;
    Ok(PiDensityReport {
        m,
        m0,
        m1,
        x_min,
        constants: k,
        points,
        pass: c1.is_finite() && points > 0,
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TailLemmaRow {
    pub r: f64,
    pub hypothesis_lhs: f64,
    pub tail: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailLemmaReport {
    pub hypothesis_holds: bool,
    pub conclusion_holds: Option<bool>,
    pub rows: Vec<TailLemmaRow>,
}

/// Given `∫_0^r s^a f ≤ c₁ r^v` for `r ≥ r₀`, checks `∫_r^∞ f ≤ (c₁ a/(a−v)) r^{v−a}`.
pub fn tail_integral_lemma_check<F: Fn(f64) -> f64 + Sync>(
    f: F,
    a: f64,
    v: f64,
    r0: f64,
    c1: f64,
    r_grid: &[f64],
) -> Result<TailLemmaReport> {
    if !(a > v && v >= 0.0) {
        return Err(Error::Precondition(format!("need a > v >= 0, got a = {a}, v = {v}")));
    }
    let opts = crate::quad::QuadOptions::default().with_abs_tol(1e-14).with_rel_tol(1e-10);
    let grid: Vec<f64> = r_grid.iter().copied().filter(|&r| r >= r0).collect();
    let mut rows = Vec::with_capacity(grid.len());
    let mut hypothesis_holds = !grid.is_empty();
    let mut conclusion = true;
    for &r in &grid {
        let lhs = crate::quad::integrate_range(|s| s.powf(a) * f(s), 0.0, r, &opts)?.value;
        let tail = crate::quad::integrate_range(&f, r, f64::INFINITY, &opts)?.value;
        let bound = c1 * a / (a - v) * r.powf(v - a);
        let slack = 1e-9 * (c1 * r.powf(v)).max(1e-300);
        hypothesis_holds &= lhs <= c1 * r.powf(v) + slack;
        conclusion &= tail <= bound * (1.0 + 1e-9) + 1e-300;
        rows.push(TailLemmaRow {
            r,
            hypothesis_lhs: lhs,
            tail,
            bound,
        });
    }
    Ok(TailLemmaReport {
        hypothesis_holds,
        conclusion_holds: hypothesis_holds.then_some(conclusion),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Suites.

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub tol: f64,
    pub seed: u64,
    /// Monte Carlo sample count.
    pub samples: usize,
    pub t_grid: Vec<f64>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            seed: 7,
            samples: 1_000_000,
            t_grid: default_t_grid(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub suite: String,
    pub grid: Value,
    pub fitted_constants: BTreeMap<String, f64>,
    pub sup_ratio: f64,
    pub pass: bool,
    pub details: Value,
}

pub type SuiteRunner = fn(&LevyModel, &SuiteOptions) -> Result<SuiteReport>;

fn theorem1_suite(model: &LevyModel, opts: &SuiteOptions) -> Result<SuiteReport> {
    let fit = fit_constants(
        model,
        &opts.t_grid,
        &FitOptions {
            tol: opts.tol,
            ..FitOptions::default()
        },
    )?;
    let p = fit.refined.params;
    Ok(SuiteReport {
        schema_version: SCHEMA_VERSION,
        suite: "theorem1".into(),
        grid: json!({ "t": opts.t_grid, "refined_t": refine_geometric(&opts.t_grid), "rows": fit.rows.len() }),
        fitted_constants: BTreeMap::from([
            ("c".into(), p.c),
            ("c1".into(), p.c1),
            ("c2".into(), p.c2),
            ("c3".into(), p.c3),
        ]),
        sup_ratio: p.c.max(p.c1),
        pass: fit.pass,
        details: json!({ "coarse": fit.coarse, "refined": fit.refined, "stability": fit.stability }),
    })
}

/// The atomic law used by the bounded-support tail check.
pub fn reference_bounded_levy() -> AtomicLevy {
    AtomicLevy {
        points: vec![-1.0, -0.4, 0.3, 1.0],
        weights: vec![0.5, 0.7, 1.0, 0.8],
    }
}

fn tails_suite(model: &LevyModel, opts: &SuiteOptions) -> Result<SuiteReport> {
    let levy = reference_bounded_levy();
    let tail = pi_tail_check(&levy, &log_grid(1.0, 40.0, 40), opts.samples, opts.seed)?;
    let mut constants = BTreeMap::new();
    let mut pass = tail.pass;
    let mut details = json!({ "pi_tail": tail });
    if model.dim() == 1 {
        let dens = pi_density_check(model, 1.0, opts.tol)?;
        let trunc = truncated_density_check(model, &[0.1, 1.0, 10.0], 30.0, opts.tol)?;
        let beta = model.beta_condition_check(&LevyModel::default_beta_grid())?;
        let (q, phi, alpha) = (model.profile().q.clone(), model.profile().phi.clone(), model.alpha());
        let lemma = tail_integral_lemma_check(
            move |s: f64| (-(1.0 + alpha) * s.ln() + q.ln_value(s) + phi.ln_value(s) - phi.ln_value(0.5 * s)).exp(),
            2.0,
            2.0 - model.beta(),
            1.0,
            beta.c_beta,
            &log_grid(1.0, 1e3, 16),
        )?;
        constants.insert("pi_density_c1".into(), dens.constants.c1);
        constants.insert("truncated_c1".into(), trunc.constants.c1);
        constants.insert("truncated_c2".into(), trunc.constants.c2);
        constants.insert("truncated_c3".into(), trunc.constants.c3);
        pass &= dens.pass && trunc.pass && lemma.conclusion_holds.unwrap_or(false);
        details = json!({ "pi_tail": tail, "pi_density": dens, "truncated": trunc, "tail_lemma": lemma });
    }
    let sup_ratio = tail.rows.iter().map(|r| r.empirical / r.bound).fold(0.0, f64::max);
    Ok(SuiteReport {
        schema_version: SCHEMA_VERSION,
        suite: "tails".into(),
        grid: json!({ "a": tail.rows.iter().map(|r| r.a).collect::<Vec<_>>(), "truncated_t": [0.1, 1.0, 10.0] }),
        fitted_constants: constants,
        sup_ratio,
        pass,
        details,
    })
}

fn convpow_suite(model: &LevyModel, opts: &SuiteOptions) -> Result<SuiteReport> {
    if model.dim() != 1 {
        return Err(Error::Precondition("the convolution-power suite runs on 1D models".into()));
    }
    let conv = convolution_power_check(model, 1.0, 4, 1 << 16)?;
    let balls = pbar_ball_check(model, &[0.5, 1.0, 2.0], opts.samples, opts.seed)?;
    Ok(SuiteReport {
        schema_version: SCHEMA_VERSION,
        suite: "convpow".into(),
        grid: json!({ "n": [1, 2, 3, 4], "annuli": 20, "cells": conv.cells, "ball_t": [0.5, 1.0, 2.0] }),
        fitted_constants: BTreeMap::from([("c".into(), conv.c), ("c_refined".into(), conv.c_refined), ("ball_c".into(), balls.c)]),
        sup_ratio: conv.c,
        pass: conv.pass && balls.pass,
        details: json!({ "convolution": conv, "balls": balls }),
    })
}

pub fn suites() -> &'static Registry<SuiteRunner> {
    static REGISTRY: OnceLock<Registry<SuiteRunner>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<SuiteRunner> = Registry::new("verify suite");
        reg.register("theorem1", theorem1_suite)
            .register("tails", tails_suite)
            .register("convpow", convpow_suite);
        reg
    })
}

pub fn run_suite(name: &str, model: &LevyModel, opts: &SuiteOptions) -> Result<SuiteReport> {
    (suites().get(name)?)(model, opts)
}
