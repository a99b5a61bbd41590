//! The Lévy–Khinchin exponent `Φ(ξ)`, with `F(P_t)(ξ) = exp(−tΦ(ξ))`.
//!
//! Evaluation strategies live in a registry and share one shape: a radial
//! symbol `J` summed over the nodes of μ, minus the drift term.

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::cheb::PiecewiseChebyshev;
use crate::error::{Error, Result};
use crate::model::{log_grid, LevyModel};
use crate::radial::{RadialLaw, Window};
use crate::registry::Registry;
use crate::spectral::SpectralMeasure;

pub trait RadialSymbol: Send + Sync {
    fn j(&self, k: f64) -> Result<Complex64>;
}

pub trait Exponent: Send + Sync {
    fn strategy(&self) -> &str;
    fn dim(&self) -> usize;
    fn eval(&self, xi: &[f64]) -> Result<Complex64>;
}

/// Which measure the exponent describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Full,
    /// `ν` restricted to `B(0, r)`, fully compensated, no drift.
    Truncated(f64),
}

impl Target {
    fn window(self) -> Window {
        match self {
            Target::Full => Window::FULL,
            Target::Truncated(r) => Window::truncated(r),
        }
    }
}

struct DirectSymbol {
    law: RadialLaw,
    window: Window,
}

impl RadialSymbol for DirectSymbol {
    fn j(&self, k: f64) -> Result<Complex64> {
        self.law.symbol(k, self.window)
    }
}

/// `a_α = π / (2 sin(πα/2) Γ(1+α))`.
pub fn stable_constant(alpha: f64) -> f64 {
    let half = 0.5 * std::f64::consts::PI * alpha;
    std::f64::consts::PI / (2.0 * half.sin() * gamma(1.0 + alpha))
}

struct StableSymbol {
    alpha: f64,
    a: f64,
}

impl RadialSymbol for StableSymbol {
    fn j(&self, k: f64) -> Result<Complex64> {
        if k == 0.0 {
            return Ok(Complex64::default());
        }
        let m = k.abs();
        let sgn = k.signum();
        if self.alpha == 1.0 {
            let skew = 2.0 / std::f64::consts::PI * sgn * m.ln();
            Ok(Complex64::new(self.a * m, self.a * m * skew))
        } else {
            let p = self.a * m.powf(self.alpha);
            let tan = (0.5 * std::f64::consts::PI * self.alpha).tan();
            Ok(Complex64::new(p, -p * tan * sgn))
        }
    }
}

const TABLE_LO: f64 = 1e-8;
const TABLE_HI: f64 = 1e8;
const TABLE_WIDTH: f64 = 0.5;
const TABLE_DEGREE: usize = 18;

/// `J(k)/k^α` interpolated in `ln k`; direct quadrature outside the table.
struct TabulatedSymbol {
    direct: DirectSymbol,
    alpha: f64,
    table: PiecewiseChebyshev<Complex64>,
}

impl TabulatedSymbol {
    fn build(direct: DirectSymbol, alpha: f64, cache_key: Option<String>) -> Result<Self> {
        let path = cache_key.and_then(|key| {
            std::env::var_os("LEVYKIT_CACHE_DIR").map(|dir| PathBuf::from(dir).join(format!("{key}.json")))
        });
        if let Some(path) = &path {
            if let Ok(bytes) = std::fs::read(path) {
                if let Ok(table) = serde_json::from_slice(&bytes) {
                    return Ok(Self { direct, alpha, table });
                }
            }
        }
        let table = PiecewiseChebyshev::build(
            |u: f64| {
                let k = u.exp();
                Ok::<_, Error>(direct.j(k)? * k.powf(-alpha))
            },
            TABLE_LO.ln(),
            TABLE_HI.ln(),
            TABLE_WIDTH,
            TABLE_DEGREE,
        )?;
        if let Some(path) = &path {
            // The cache is an optimisation; failing to write it is not an error.
            let _ = std::fs::create_dir_all(path.parent().unwrap_or(path));
            let _ = std::fs::write(path, serde_json::to_vec(&table)?);
        }
        Ok(Self { direct, alpha, table })
    }
}

impl RadialSymbol for TabulatedSymbol {
    fn j(&self, k: f64) -> Result<Complex64> {
        if k == 0.0 {
            return Ok(Complex64::default());
        }
        let m = k.abs();
        if !(TABLE_LO..=TABLE_HI).contains(&m) {
            return self.direct.j(k);
        }
        let v = self.table.eval(m.ln()) * m.powf(self.alpha);
        Ok(if k < 0.0 { v.conj() } else { v })
    }
}

struct PolarExponent {
    strategy: &'static str,
    directions: Vec<Vec<f64>>,
    weights: Vec<f64>,
    drift: Vec<f64>,
    symbol: Box<dyn RadialSymbol>,
}

impl Exponent for PolarExponent {
    fn strategy(&self) -> &str {
        self.strategy
    }

    fn dim(&self) -> usize {
        self.drift.len()
    }

    fn eval(&self, xi: &[f64]) -> Result<Complex64> {
        let mut total = Complex64::default();
        for (theta, w) in self.directions.iter().zip(&self.weights) {
            let k: f64 = theta.iter().zip(xi).map(|(a, b)| a * b).sum();
            if k != 0.0 {
                total += self.symbol.j(k)? * *w;
            }
        }
        let drift: f64 = self.drift.iter().zip(xi).map(|(a, b)| a * b).sum();
        Ok(total - Complex64::new(0.0, drift))
    }
}

fn polar(model: &LevyModel, target: Target, strategy: &'static str, symbol: Box<dyn RadialSymbol>) -> Box<dyn Exponent> {
    let drift = match target {
        Target::Full => model.drift().to_vec(),
        Target::Truncated(_) => vec![0.0; model.dim()],
    };
    Box::new(PolarExponent {
        strategy,
        directions: model.mu().directions().to_vec(),
        weights: model.mu().weights().to_vec(),
        drift,
        symbol,
    })
}

/// The drift of the stable law whose exponent is the closed form.
pub fn stable_canonical_drift(mu: &SpectralMeasure, alpha: f64) -> Result<Vec<f64>> {
    let m1 = mu.mean_direction();
    if alpha == 1.0 {
        let size = m1.iter().map(|m| m * m).sum::<f64>().sqrt();
        if size > 1e-12 * mu.total_mass() {
            return Err(Error::Precondition(format!(
                "alpha = 1 needs a centred spectral measure, but the mean direction has norm {size:e}"
            )));
        }
        return Ok(vec![0.0; mu.dim()]);
    }
    let factor = if alpha < 1.0 { 1.0 / (1.0 - alpha) } else { -1.0 / (alpha - 1.0) };
    Ok(m1.iter().map(|m| m * factor).collect())
}

pub type ExponentFactory = fn(&LevyModel, Target) -> Result<Box<dyn Exponent>>;

pub fn strategies() -> &'static Registry<ExponentFactory> {
    static REGISTRY: OnceLock<Registry<ExponentFactory>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<ExponentFactory> = Registry::new("exponent strategy");
        reg.register("quadrature", |model, target| {
            let symbol = DirectSymbol {
                law: model.radial().clone(),
                window: target.window(),
            };
            Ok(polar(model, target, "quadrature", Box::new(symbol)))
        })
        .register("closed_form", |model, target| {
            if !model.is_stable() || target != Target::Full {
                return Err(Error::Precondition(
                    "the closed-form exponent needs q = phi = 1 and no truncation".into(),
                ));
            }
            let canonical = stable_canonical_drift(model.mu(), model.alpha())?;
            let symbol = StableSymbol {
                alpha: model.alpha(),
                a: stable_constant(model.alpha()),
            };
            let mut exp = PolarExponent {
                strategy: "closed_form",
                directions: model.mu().directions().to_vec(),
                weights: model.mu().weights().to_vec(),
                drift: Vec::new(),
                symbol: Box::new(symbol),
            };
            exp.drift = model.drift().iter().zip(&canonical).map(|(b, c)| b - c).collect();
            Ok(Box::new(exp))
        })
        .register("tabulated", |model, target| {
            let direct = DirectSymbol {
                law: model.radial().clone(),
                window: target.window(),
            };
            let key = crate::spec_file::radial_hash(model).map(|h| match target {
                Target::Full => format!("{h}-full"),
                Target::Truncated(r) => format!("{h}-trunc-{:016x}", r.to_bits()),
            });
            let symbol = TabulatedSymbol::build(direct, model.alpha(), key.ok())?;
            Ok(polar(model, target, "tabulated", Box::new(symbol)))
        })
        .register("auto", |model, target| {
            let reg = strategies();
            if model.is_stable() && target == Target::Full {
                if let Ok(exp) = (reg.get("closed_form")?)(model, target) {
                    return Ok(exp);
                }
            }
            (reg.get("tabulated")?)(model, target)
        });
        reg
    })
}

pub fn build_exponent(model: &LevyModel, target: Target, strategy: &str) -> Result<Box<dyn Exponent>> {
    (strategies().get(strategy)?)(model, target)
}

/// `Φ(ξ)` by direct radial quadrature.
pub fn evaluate_exponent(model: &LevyModel, xi: &[f64]) -> Result<Complex64> {
    if xi.len() != model.dim() {
        return Err(Error::Precondition("xi has the wrong dimension".into()));
    }
    build_exponent(model, Target::Full, "quadrature")?.eval(xi)
}

/// The stable exponent `a_α ∫ |⟨ξ,θ⟩|^α (1 − i tan(πα/2) sgn⟨ξ,θ⟩) μ(dθ)` (log form at α = 1).
pub fn stable_exponent_closed_form(mu: &SpectralMeasure, alpha: f64, xi: &[f64]) -> Result<Complex64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Precondition(format!("alpha must lie in (0, 2), got {alpha}")));
    }
    stable_canonical_drift(mu, alpha)?;
    let symbol = StableSymbol {
        alpha,
        a: stable_constant(alpha),
    };
    let mut total = Complex64::default();
    for (theta, w) in mu.directions().iter().zip(mu.weights()) {
        let k: f64 = theta.iter().zip(xi).map(|(a, b)| a * b).sum();
        total += symbol.j(k)? * *w;
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundReport {
    pub c_lower: f64,
    pub argmin: Vec<f64>,
    pub threshold: f64,
    pub grid_points: usize,
    pub pass: bool,
}

pub const LOWER_BOUND_THRESHOLD: f64 = 1e-8;

/// Frequencies on log-spaced radii in `[1e-3, 1e3]` along directions that include the axes.
pub fn default_xi_grid(d: usize) -> Vec<Vec<f64>> {
    let radii = log_grid(1e-3, 1e3, 25);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    match d {
        1 => dirs.extend([vec![1.0], vec![-1.0]]),
        2 => {
            for k in 0..48 {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 48.0;
                dirs.push(vec![a.cos(), a.sin()]);
            }
        }
        _ => {
            for i in 0..d {
                for s in [1.0, -1.0] {
                    let mut v = vec![0.0; d];
                    v[i] = s;
                    dirs.push(v);
                }
            }
            if let Ok(mu) = SpectralMeasure::uniform(d, 96) {
                dirs.extend(mu.directions().iter().cloned());
            }
        }
    }
    let mut grid = Vec::with_capacity(radii.len() * dirs.len());
    for r in &radii {
        for theta in &dirs {
            grid.push(theta.iter().map(|x| x * r).collect());
        }
    }
    grid
}

/// `inf Re Φ(ξ) / min(|ξ|^α, |ξ|^β)` over the grid.
pub fn verify_lower_bound(exponent: &dyn Exponent, alpha: f64, beta: f64, xi_grid: &[Vec<f64>]) -> Result<LowerBoundReport> {
    let mut best = f64::INFINITY;
    let mut argmin = Vec::new();
    for xi in xi_grid {
        let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Precondition("the frequency grid must exclude 0".into()));
        }
        let ratio = exponent.eval(xi)?.re / norm.powf(alpha).min(norm.powf(beta));
        if ratio < best {
            best = ratio;
            argmin = xi.clone();
        }
    }
    Ok(LowerBoundReport {
        c_lower: best,
        argmin,
        threshold: LOWER_BOUND_THRESHOLD,
        grid_points: xi_grid.len(),
        pass: best > LOWER_BOUND_THRESHOLD,
    })
}

/// Runs [`verify_lower_bound`] on the default grid and stores `c_lower` in the model.
pub fn certify_lower_bound(model: &mut LevyModel) -> Result<LowerBoundReport> {
    let exp = build_exponent(model, Target::Full, "auto")?;
    let report = verify_lower_bound(exp.as_ref(), model.alpha(), model.beta(), &default_xi_grid(model.dim()))?;
    if report.pass {
        model.c_lower = Some(report.c_lower);
    }
    Ok(report)
}

pub fn lower_bound_failure(report: &LowerBoundReport) -> Error {
    Error::Hypothesis(format!(
        "the lower bound Re Phi(xi) >= c min(|xi|^alpha, |xi|^beta) fails: inf ratio {:.3e} at xi = {:?}; \
         the density may not exist (is the spectral measure degenerate?)",
        report.c_lower, report.argmin
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncatedModulus {
    pub modulus: f64,
    pub bound: f64,
    pub margin: f64,
    pub holds: bool,
}

/// `|F(P̃^r_t)(ξ)|` against `exp(−t Re Φ(ξ)) exp(2t|ν̄_r|)`.
pub fn truncated_exponent_modulus(model: &LevyModel, r: f64, t: f64, xi: &[f64]) -> Result<TruncatedModulus> {
    if !(r > 0.0 && t > 0.0) {
        return Err(Error::Precondition("need r > 0 and t > 0".into()));
    }
    let full = evaluate_exponent(model, xi)?.re;
    let (modulus, tail) = if r.is_infinite() {
        ((-t * full).exp(), 0.0)
    } else {
        let truncated = build_exponent(model, Target::Truncated(r), "quadrature")?.eval(xi)?.re;
        ((-t * truncated).exp(), model.large_jump_mass(r)?)
    };
    let bound = (-t * full).exp() * (2.0 * t * tail).exp();
    Ok(TruncatedModulus {
        modulus,
        bound,
        margin: bound - modulus,
        holds: modulus <= bound * (1.0 + 1e-12),
    })
}

pub type SharedExponent = Arc<dyn Exponent>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RadialProfile;
    use crate::profile::{make_profile, one, params};
    use proptest::prelude::*;

    fn stable(alpha: f64, dirs: Vec<Vec<f64>>, weights: Vec<f64>) -> LevyModel {
        let d = dirs[0].len();
        let mu = SpectralMeasure::atomic(dirs, weights).unwrap();
        let b = if alpha == 1.0 { vec![0.0; d] } else { stable_canonical_drift(&mu, alpha).unwrap() };
        LevyModel::new(alpha, alpha, 1.0, b, mu, RadialProfile::new(one(), one())).unwrap()
    }

    fn tempered() -> LevyModel {
        let mu = SpectralMeasure::atomic(vec![vec![1.0], vec![-1.0]], vec![0.5, 0.5]).unwrap();
        let phi = make_profile("exp", &params(&[("lambda", 1.0)])).unwrap();
        LevyModel::new(1.0, 2.0, 1.0, vec![0.0], mu, RadialProfile::new(one(), phi)).unwrap()
    }

    #[test]
    fn stable_constant_at_one_half_is_sqrt_two_pi() {
        assert!((stable_constant(0.5) - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-13);
        assert!((stable_constant(1.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
    }

    #[test]
    fn symmetric_cauchy_real_part_is_pi_abs_xi() {
        let m = stable(1.0, vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]);
        for xi in [-3.0, 0.1, 2.5] {
            let phi = evaluate_exponent(&m, &[xi]).unwrap();
            assert!((phi.re - std::f64::consts::PI * xi.abs()).abs() < 1e-9);
            assert!(phi.im.abs() < 1e-9);
        }
        assert_eq!(evaluate_exponent(&m, &[0.0]).unwrap(), Complex64::default());
    }

    #[test]
    fn closed_form_agrees_with_quadrature() {
        let dirs = vec![vec![0.6, 0.8], vec![-1.0, 0.0], vec![0.0, -1.0]];
        for alpha in [0.5, 1.5] {
            let m = stable(alpha, dirs.clone(), vec![1.0, 0.7, 0.3]);
            let quad = build_exponent(&m, Target::Full, "quadrature").unwrap();
            let closed = build_exponent(&m, Target::Full, "closed_form").unwrap();
            for xi in [[0.3, -2.0], [17.0, 4.0], [-0.01, 0.002]] {
                let (a, b) = (quad.eval(&xi).unwrap(), closed.eval(&xi).unwrap());
                assert!((a - b).norm() <= 1e-8 * b.norm(), "alpha {alpha}: {a} vs {b}");
                let direct = stable_exponent_closed_form(m.mu(), alpha, &xi).unwrap();
                assert!((direct - b).norm() <= 1e-12 * b.norm());
            }
        }
    }

    #[test]
    fn alpha_one_requires_centred_measure() {
        let mu = SpectralMeasure::atomic(vec![vec![1.0]], vec![1.0]).unwrap();
        assert!(matches!(stable_exponent_closed_form(&mu, 1.0, &[1.0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn alpha_one_closed_form_matches_quadrature_for_centred_measure() {
        let h = 0.75f64.sqrt();
        let m = stable(1.0, vec![vec![1.0, 0.0], vec![-0.5, h], vec![-0.5, -h]], vec![1.0, 1.0, 1.0]);
        // Mean direction (0, 0): the per-atom linear terms cancel.
        let mean = m.mu().mean_direction();
        assert!(mean.iter().all(|x| x.abs() < 1e-15), "{mean:?}");
        for xi in [[2.0, 1.0], [-0.2, 30.0]] {
            let q = evaluate_exponent(&m, &xi).unwrap();
            let c = stable_exponent_closed_form(m.mu(), 1.0, &xi).unwrap();
            assert!((q - c).norm() <= 1e-8 * c.norm(), "{q} vs {c}");
        }
    }

    #[test]
    fn tabulated_matches_direct_quadrature() {
        let m = tempered();
        let tab = build_exponent(&m, Target::Full, "tabulated").unwrap();
        for k in [1e-9, 3e-6, 0.01, 0.77, 1.0, 42.0, 9e5, 2e8] {
            let a = evaluate_exponent(&m, &[k]).unwrap();
            let b = tab.eval(&[-k]).unwrap();
            assert!((a.conj() - b).norm() <= 1e-9 * a.norm().max(1e-12), "k {k}: {a} vs {b}");
        }
    }

    #[test]
    fn degenerate_measure_fails_lower_bound() {
        let m = stable(1.5, vec![vec![1.0, 0.0]], vec![1.0]);
        let exp = build_exponent(&m, Target::Full, "auto").unwrap();
        let rep = verify_lower_bound(exp.as_ref(), 1.5, 1.5, &default_xi_grid(2)).unwrap();
        assert!(!rep.pass);
        assert!(rep.argmin[0].abs() < 1e-12, "{:?}", rep.argmin);
    }

    #[test]
    fn cross_shaped_measure_has_positive_lower_bound() {
        let dirs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]];
        let m = stable(1.2, dirs, vec![1.0; 4]);
        let exp = build_exponent(&m, Target::Full, "quadrature").unwrap();
        let rep = verify_lower_bound(exp.as_ref(), 1.2, 1.2, &default_xi_grid(2)).unwrap();
        assert!(rep.pass && rep.c_lower > 0.1, "{rep:?}");
    }

    #[test]
    fn isotropic_stable_ratio_is_constant() {
        let m = stable(0.8, vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]);
        let exp = build_exponent(&m, Target::Full, "closed_form").unwrap();
        let ratios: Vec<f64> = [1.0, 3.0, 100.0]
            .iter()
            .map(|&x| exp.eval(&[x]).unwrap().re / x.powf(0.8))
            .collect();
        assert!(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-12 * ratios[0]));
    }

    #[test]
    fn truncated_modulus_reference_cases() {
        let m = tempered();
        let rep = truncated_exponent_modulus(&m, 1.0, 1.0, &[5.0]).unwrap();
        assert!(rep.holds && rep.margin > 0.0, "{rep:?}");
        let full = truncated_exponent_modulus(&m, f64::INFINITY, 1.0, &[5.0]).unwrap();
        assert!((full.modulus - full.bound).abs() < 1e-15);
        assert_eq!(truncated_exponent_modulus(&m, 1.0, 2.0, &[0.0]).unwrap().modulus, 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn hermitian_and_nonnegative_real_part(x in -50.0f64..50.0, y in -50.0f64..50.0) {
            let m = stable(1.3, vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 2.0]);
            let exp = build_exponent(&m, Target::Full, "quadrature").unwrap();
            let a = exp.eval(&[x, y]).unwrap();
            let b = exp.eval(&[-x, -y]).unwrap();
            prop_assert!((a - b.conj()).norm() <= 1e-9 * a.norm().max(1.0));
            prop_assert!(a.re >= -1e-10);
        }

        #[test]
        fn stable_exponent_scales(x in 0.01f64..20.0, scale in 0.05f64..20.0) {
            let m = stable(0.7, vec![vec![1.0], vec![-1.0]], vec![2.0, 1.0]);
            let exp = build_exponent(&m, Target::Full, "quadrature").unwrap();
            let a = exp.eval(&[scale * x]).unwrap();
            let b = exp.eval(&[x]).unwrap() * scale.powf(0.7);
            prop_assert!((a - b).norm() <= 1e-8 * b.norm());
        }

        #[test]
        fn truncated_real_part_grows_with_radius(k in 0.1f64..30.0, r in 0.05f64..3.0, f in 1.1f64..4.0) {
            let m = tempered();
            let small = build_exponent(&m, Target::Truncated(r), "quadrature").unwrap().eval(&[k]).unwrap();
            let large = build_exponent(&m, Target::Truncated(r * f), "quadrature").unwrap().eval(&[k]).unwrap();
            prop_assert!(large.re >= small.re - 1e-10);
        }
    }
}
