//! Ready-made models: stable, layered stable, tempered stable, relativistic stable.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponent::stable_canonical_drift;
use crate::model::{LevyModel, RadialProfile};
use crate::profile::{make_profile, one, params};
use crate::quad::{self, QuadOptions};
use crate::registry::Registry;
use crate::spectral::{SpectralForm, SpectralMeasure};

fn gamma_of(mu: &SpectralMeasure) -> f64 {
    match mu.form() {
        SpectralForm::Atomic => 1.0,
        SpectralForm::Density { .. } => crate::model::gamma_exponent(mu, &crate::model::default_rho_grid())
            .map(|fit| fit.gamma)
            .unwrap_or(1.0),
    }
}

fn require_nondegenerate(mu: &SpectralMeasure) -> Result<()> {
    if !mu.is_nondegenerate() {
        return Err(Error::Hypothesis(format!(
            "spectral measure spans only {} of {} dimensions",
            mu.rank(),
            mu.dim()
        )));
    }
    Ok(())
}

/// `q ≡ φ ≡ 1`, `β = α`, drift from the three-case stable formula.
pub fn make_stable(alpha: f64, mu: SpectralMeasure) -> Result<LevyModel> {
    require_nondegenerate(&mu)?;
    let drift = stable_canonical_drift(&mu, alpha)?;
    let gamma = gamma_of(&mu);
    LevyModel::new(alpha, alpha, gamma, drift, mu, RadialProfile::new(one(), one()))
}

/// `q(s) = (1+s)^{α−m}`, `φ ≡ 1`, `β = 2`.
pub fn make_layered(alpha: f64, m: f64, mu: SpectralMeasure) -> Result<LevyModel> {
    if !(m > 2.0) {
        return Err(Error::InvalidModel(format!("layered models need m > 2, got {m}")));
    }
    require_nondegenerate(&mu)?;
    let q = make_profile("powerlaw", &params(&[("a", m - alpha)]))?;
    let d = mu.dim();
    let gamma = gamma_of(&mu);
    LevyModel::new(alpha, 2.0, gamma, vec![0.0; d], mu, RadialProfile::new(q, one()))
}

/// `q ≡ 1`, `φ(s) = e^{−λs}`, `β = 2`.
pub fn make_tempered(alpha: f64, lambda: f64, mu: SpectralMeasure) -> Result<LevyModel> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidModel(format!("tempering rate must be > 0, got {lambda}")));
    }
    require_nondegenerate(&mu)?;
    let phi = make_profile("exp", &params(&[("lambda", lambda)]))?;
    let d = mu.dim();
    let gamma = gamma_of(&mu);
    LevyModel::new(alpha, 2.0, gamma, vec![0.0; d], mu, RadialProfile::new(one(), phi))
}

/// Uniform μ, `q ≡ 1`, `φ = K_{d,α}/K_{d,α}(0+)`, `β = 2`.
pub fn make_relativistic(d: usize, alpha: f64) -> Result<LevyModel> {
    if d == 0 || d > 3 {
        return Err(Error::InvalidModel(format!("relativistic preset supports 1 <= d <= 3, got {d}")));
    }
    let mu = SpectralMeasure::uniform(d, uniform_nodes(d))?;
    let phi = make_profile("relativistic", &params(&[("d", d as f64), ("alpha", alpha)]))?;
    LevyModel::new(alpha, 2.0, d as f64, vec![0.0; d], mu, RadialProfile::new(one(), phi))
}

fn uniform_nodes(d: usize) -> usize {
    match d {
        1 => 2,
        2 => 256,
        _ => 1024,
    }
}

/// `ln K_{d,α}(s)` where `K_{d,α}(s) = s^{d+α} ∫_0^∞ e^{-u} e^{-s²/4u} u^{-(2+d+α)/2} du`.
///
/// With `u = s e^w` the integral becomes `s^ν ∫ exp(-s(e^w + e^{-w}/4) - νw) dw`,
/// `ν = (d+α)/2`, whose log-integrand is concave with an explicit maximiser.
pub fn relativistic_kernel_ln(d: usize, alpha: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Precondition(format!("kernel argument must be > 0, got {s}")));
    }
    let nu = 0.5 * (d as f64 + alpha);
    let log_integrand = |w: f64| -s * (w.exp() + 0.25 * (-w).exp()) - nu * w;
    let y = s / (2.0 * (nu + (nu * nu + s * s).sqrt()));
    let w_star = y.ln();
    let peak = log_integrand(w_star);
    let mut lo = w_star - 1.0;
    while log_integrand(lo) > peak - 60.0 {
        lo -= 1.0;
    }
    let mut hi = w_star + 1.0;
    while log_integrand(hi) > peak - 60.0 {
        hi += 1.0;
    }
    let opts = QuadOptions::default().with_abs_tol(1e-13).with_rel_tol(1e-14);
    let mut total = 0.0;
    let mut a = lo;
    while a < hi {
        let b = (a + 1.0).min(hi);
        total += quad::adaptive(|w: f64| (log_integrand(w) - peak).exp(), a, b, &opts)?.value;
        a = b;
    }
    Ok(nu * s.ln() + peak + total.ln())
}

pub fn relativistic_kernel(d: usize, alpha: f64, s: f64) -> Result<f64> {
    Ok(relativistic_kernel_ln(d, alpha, s)?.exp())
}

/// `ln lim_{s→0} K_{d,α}(s) = ln(2^{d+α} Γ((d+α)/2))`.
pub fn relativistic_kernel_ln_limit(d: usize, alpha: f64) -> f64 {
    let x = d as f64 + alpha;
    x * std::f64::consts::LN_2 + statrs::function::gamma::ln_gamma(0.5 * x)
}

/// Large-`s` form `2^{1+ν} s^ν √(π/2s) e^{-s}`, `ν = (d+α)/2`.
pub fn relativistic_kernel_asymptotic(d: usize, alpha: f64, s: f64) -> f64 {
    let nu = 0.5 * (d as f64 + alpha);
    2f64.powf(1.0 + nu) * s.powf(nu) * (std::f64::consts::PI / (2.0 * s)).sqrt() * (-s).exp()
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelRatioRow {
    pub s: f64,
    pub kernel: f64,
    /// `K(s) / ((1+s)^{(d+α−1)/2} e^{−s})`.
    pub ratio: f64,
}

pub fn relativistic_ratio_table(d: usize, alpha: f64, s_grid: &[f64]) -> Result<Vec<KernelRatioRow>> {
    let p = 0.5 * (d as f64 + alpha - 1.0);
    s_grid
        .iter()
        .map(|&s| {
            let ln_k = relativistic_kernel_ln(d, alpha, s)?;
            Ok(KernelRatioRow {
                s,
                kernel: ln_k.exp(),
                ratio: (ln_k - p * s.ln_1p() + s).exp(),
            })
        })
        .collect()
}

/// `key=value` pairs from `--params`.
pub type PresetParams = BTreeMap<String, String>;

pub fn parse_params(text: &str) -> Result<PresetParams> {
    let mut out = PresetParams::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Precondition(format!("expected key=value, got '{item}'")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

struct Args<'a> {
    map: &'a PresetParams,
    used: Vec<&'static str>,
}

impl<'a> Args<'a> {
    fn new(map: &'a PresetParams) -> Self {
        Self { map, used: Vec::new() }
    }

    fn num(&mut self, key: &'static str, default: Option<f64>) -> Result<f64> {
        self.used.push(key);
        match self.map.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Precondition(format!("parameter {key} = '{v}' is not a number"))),
            None => default.ok_or_else(|| Error::Precondition(format!("missing parameter '{key}'"))),
        }
    }

    fn text(&mut self, key: &'static str, default: &str) -> String {
        self.used.push(key);
        self.map.get(key).cloned().unwrap_or_else(|| default.to_string())
    }

    fn dim(&mut self) -> Result<usize> {
        let d = self.num("d", Some(1.0))?;
        if d.fract() != 0.0 || !(1.0..=3.0).contains(&d) {
            return Err(Error::Precondition(format!("d must be 1, 2 or 3, got {d}")));
        }
        Ok(d as usize)
    }

    fn finish(self) -> Result<()> {
        for key in self.map.keys() {
            if !self.used.contains(&key.as_str()) {
                return Err(Error::Precondition(format!(
                    "unknown preset parameter '{key}' (expected: {})",
                    self.used.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Named spectral measures: `symmetric` (±e_i), `axes` (e_i), `uniform`, `positive` (d = 1).
pub fn named_measure(name: &str, d: usize, mass: f64) -> Result<SpectralMeasure> {
    let unit = |i: usize, sign: f64| {
        let mut v = vec![0.0; d];
        v[i] = sign;
        v
    };
    let mu = match name {
        "symmetric" => {
            let dirs: Vec<Vec<f64>> = (0..d).flat_map(|i| [unit(i, 1.0), unit(i, -1.0)]).collect();
            let n = dirs.len();
            SpectralMeasure::atomic(dirs, vec![1.0; n])?
        }
        "axes" => SpectralMeasure::atomic((0..d).map(|i| unit(i, 1.0)).collect(), vec![1.0; d])?,
        "positive" if d == 1 => SpectralMeasure::atomic(vec![vec![1.0]], vec![1.0])?,
        "uniform" => SpectralMeasure::uniform(d, uniform_nodes(d))?,
        other => {
            return Err(Error::Unknown {
                kind: "spectral measure",
                name: other.to_string(),
                known: "axes, positive (d = 1), symmetric, uniform".into(),
            })
        }
    };
    Ok(mu.scaled(mass / mu.total_mass()))
}

pub type PresetFactory = fn(&PresetParams) -> Result<LevyModel>;

pub fn presets() -> &'static Registry<PresetFactory> {
    static REGISTRY: OnceLock<Registry<PresetFactory>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<PresetFactory> = Registry::new("preset");
        reg.register("stable", |p| {
            let mut a = Args::new(p);
            let d = a.dim()?;
            let alpha = a.num("alpha", None)?;
            let mu = a.text("mu", "symmetric");
            let mass = a.num("mass", Some(if d == 1 { 2.0 } else { 2.0 * d as f64 }))?;
            a.finish()?;
            make_stable(alpha, named_measure(&mu, d, mass)?)
        })
        .register("cauchy", |p| {
            // Re Φ(ξ) = |ξ|: μ = (δ₊ + δ₋)/π at α = 1.
            let a = Args::new(p);
            a.finish()?;
            make_stable(1.0, named_measure("symmetric", 1, 2.0 / std::f64::consts::PI)?)
        })
        .register("layered", |p| {
            let mut a = Args::new(p);
            let d = a.dim()?;
            let alpha = a.num("alpha", Some(0.5))?;
            let m = a.num("m", Some(3.0))?;
            let mu = a.text("mu", "symmetric");
            let mass = a.num("mass", Some(if d == 1 { 2.0 } else { 2.0 * d as f64 }))?;
            a.finish()?;
            make_layered(alpha, m, named_measure(&mu, d, mass)?)
        })
        .register("tempered", |p| {
            let mut a = Args::new(p);
            let d = a.dim()?;
            let alpha = a.num("alpha", Some(1.0))?;
            let lambda = a.num("lambda", Some(1.0))?;
            let mu = a.text("mu", "symmetric");
            let mass = a.num("mass", Some(1.0))?;
            a.finish()?;
            make_tempered(alpha, lambda, named_measure(&mu, d, mass)?)
        })
        .register("relativistic", |p| {
            let mut a = Args::new(p);
            let d = a.dim()?;
            let alpha = a.num("alpha", Some(1.0))?;
            a.finish()?;
            make_relativistic(d, alpha)
        });
        reg
    })
}

pub fn make_preset(name: &str, params: &PresetParams) -> Result<LevyModel> {
    (presets().get(name)?)(params)
}

/// The reference models used throughout the tests and the acceptance suite.
pub mod reference {
    use super::*;

    /// 1D symmetric 1-stable with `Re Φ(ξ) = |ξ|`.
    pub fn cauchy() -> LevyModel {
        make_preset("cauchy", &PresetParams::new()).expect("reference preset")
    }

    /// 2D stable, `μ = δ_{e₁} + δ_{e₂}`, `α = 1.5`.
    pub fn two_atom_stable() -> LevyModel {
        make_stable(1.5, named_measure("axes", 2, 2.0).expect("measure")).expect("reference preset")
    }

    /// 1D layered, `α = 0.5`, `m = 3`, `μ = δ₊ + δ₋`.
    pub fn layered() -> LevyModel {
        make_layered(0.5, 3.0, named_measure("symmetric", 1, 2.0).expect("measure")).expect("reference preset")
    }

    /// 1D tempered, `α = 1`, `λ = 1`, `μ = (δ₊ + δ₋)/2`.
    pub fn tempered() -> LevyModel {
        make_tempered(1.0, 1.0, named_measure("symmetric", 1, 1.0).expect("measure")).expect("reference preset")
    }

    /// 1D relativistic, `α = 1`.
    pub fn relativistic() -> LevyModel {
        make_relativistic(1, 1.0).expect("reference preset")
    }
}
