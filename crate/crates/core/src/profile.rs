//! Radial profile families `q` and `φ`.
//!
//! Each family is a constructor registered under its name. Profiles evaluate
//! in log space so that far tails (e.g. `exp(-λ s)` at `s = 10^3`) stay finite.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::cheb::PiecewiseChebyshev;
use crate::error::{Error, Result};
use crate::registry::Registry;

pub type Params = BTreeMap<String, f64>;

pub trait ProfileFn: Send + Sync + fmt::Debug {
    fn family(&self) -> &str;
    fn params(&self) -> &Params;
    fn ln_value(&self, s: f64) -> f64;

    fn value(&self, s: f64) -> f64 {
        self.ln_value(s).exp()
    }
}

pub type ProfileFactory = fn(&Params) -> Result<Arc<dyn ProfileFn>>;

pub fn families() -> &'static Registry<ProfileFactory> {
    static REGISTRY: OnceLock<Registry<ProfileFactory>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<ProfileFactory> = Registry::new("profile family");
        reg.register("one", |p| {
            check_keys(p, &[])?;
            Ok(Arc::new(Closed::new("one", p.clone(), |_: &Params, _: f64| 0.0)))
        })
        .register("powerlaw", |p| {
            check_keys(p, &["a"])?;
            let a = nonneg(p, "a", None)?;
            Ok(Arc::new(Closed::new("powerlaw", p.clone(), move |_: &Params, s: f64| {
                -a * s.ln_1p()
            })))
        })
        .register("logpower", |p| {
            check_keys(p, &["a", "m"])?;
            let a = nonneg(p, "a", None)?;
            let m = nonneg(p, "m", None)?;
            if m <= 1.0 {
                return Err(Error::InvalidProfile(format!("logpower needs m > 1, got {m}")));
            }
            Ok(Arc::new(Closed::new("logpower", p.clone(), move |_: &Params, s: f64| {
                a * (std::f64::consts::E + s).ln().ln() - m * a * s.ln_1p()
            })))
        })
        .register("exp", |p| {
            check_keys(p, &["lambda"])?;
            let lambda = positive(p, "lambda", None)?;
            Ok(Arc::new(Closed::new("exp", p.clone(), move |_: &Params, s: f64| -lambda * s)))
        })
        .register("stretched_exp", |p| {
            check_keys(p, &["m", "a"])?;
            let m = positive(p, "m", None)?;
            let a = positive(p, "a", None)?;
            if a > 1.0 {
                return Err(Error::InvalidProfile(format!(
                    "stretched_exp needs 0 < a <= 1, got {a}"
                )));
            }
            Ok(Arc::new(Closed::new("stretched_exp", p.clone(), move |_: &Params, s: f64| {
                -m * s.powf(a)
            })))
        })
        .register("invlog", |p| {
            check_keys(p, &["m"])?;
            let m = positive(p, "m", None)?;
            Ok(Arc::new(Closed::new("invlog", p.clone(), move |_: &Params, s: f64| {
                -m * (s + std::f64::consts::E).ln().ln()
            })))
        })
        .register("relativistic", |p| {
            check_keys(p, &["d", "alpha"])?;
            let d = positive(p, "d", None)?;
            let alpha = positive(p, "alpha", None)?;
            if alpha >= 2.0 || d.fract() != 0.0 {
                return Err(Error::InvalidProfile(
                    "relativistic needs integer d >= 1 and 0 < alpha < 2".into(),
                ));
            }
            Ok(Arc::new(Relativistic::new(d as usize, alpha, p.clone())?))
        });
        reg
    })
}

pub fn make_profile(family: &str, params: &Params) -> Result<Arc<dyn ProfileFn>> {
    (families().get(family)?)(params)
}

pub fn one() -> Arc<dyn ProfileFn> {
    make_profile("one", &Params::new()).expect("builtin family")
}

pub fn params(pairs: &[(&str, f64)]) -> Params {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn check_keys(p: &Params, allowed: &[&str]) -> Result<()> {
    for key in p.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidProfile(format!(
                "unexpected parameter '{key}' (expected: {})",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

fn get(p: &Params, key: &str, default: Option<f64>) -> Result<f64> {
    p.get(key)
        .copied()
        .or(default)
        .ok_or_else(|| Error::InvalidProfile(format!("missing parameter '{key}'")))
}

fn nonneg(p: &Params, key: &str, default: Option<f64>) -> Result<f64> {
    let v = get(p, key, default)?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::InvalidProfile(format!("'{key}' must be >= 0, got {v}")));
    }
    Ok(v)
}

fn positive(p: &Params, key: &str, default: Option<f64>) -> Result<f64> {
    let v = get(p, key, default)?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidProfile(format!("'{key}' must be > 0, got {v}")));
    }
    Ok(v)
}

struct Closed<F> {
    family: &'static str,
    params: Params,
    ln: F,
}

impl<F> Closed<F> {
    fn new(family: &'static str, params: Params, ln: F) -> Self {
        Self { family, params, ln }
    }
}

impl<F> fmt::Debug for Closed<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}", self.family, self.params)
    }
}

impl<F> ProfileFn for Closed<F>
where
    F: Fn(&Params, f64) -> f64 + Send + Sync,
{
    fn family(&self) -> &str {
        self.family
    }

    fn params(&self) -> &Params {
        &self.params
    }

    fn ln_value(&self, s: f64) -> f64 {
        (self.ln)(&self.params, s.max(0.0))
    }
}

/// `φ(s) = K_{d,α}(s) / K_{d,α}(0+)`, tabulated in `ln s`.
struct Relativistic {
    params: Params,
    nu: f64,
    ln_k0: f64,
    /// `ln K(s) + s - ln K0` as a function of `ln s`.
    table: PiecewiseChebyshev<f64>,
}

const REL_LO: f64 = 1e-8;
const REL_HI: f64 = 1e3;

impl Relativistic {
    fn new(d: usize, alpha: f64, params: Params) -> Result<Self> {
        let ln_k0 = crate::presets::relativistic_kernel_ln_limit(d, alpha);
        let table = PiecewiseChebyshev::build(
            |u: f64| {
                let s = u.exp();
                Ok::<f64, Error>(crate::presets::relativistic_kernel_ln(d, alpha, s)? + s - ln_k0)
            },
            REL_LO.ln(),
            REL_HI.ln(),
            0.5,
            16,
        )?;
        Ok(Self {
            params,
            nu: 0.5 * (d as f64 + alpha),
            ln_k0,
            table,
        })
    }
}

impl fmt::Debug for Relativistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "relativistic{:?}", self.params)
    }
}

impl ProfileFn for Relativistic {
    fn family(&self) -> &str {
        "relativistic"
    }

    fn params(&self) -> &Params {
        &self.params
    }

    fn ln_value(&self, s: f64) -> f64 {
        if s <= REL_LO {
            // φ(s) = 1 - O(s^{min(2ν,2)}) with 2ν > 1; the table endpoint is within 1e-8.
            return self.table.eval(REL_LO.ln()).min(0.0);
        }
        if s >= REL_HI {
            let nu = self.nu;
            let series = 1.0 + (4.0 * nu * nu - 1.0) / (8.0 * s)
                + (4.0 * nu * nu - 1.0) * (4.0 * nu * nu - 9.0) / (128.0 * s * s);
            let ln_k = (1.0 + nu) * std::f64::consts::LN_2 + nu * s.ln()
                + 0.5 * (std::f64::consts::PI / (2.0 * s)).ln()
                - s
                + series.ln();
            return ln_k - self.ln_k0;
        }
        self.table.eval(s.ln()) - s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_evaluate_their_formulas() {
        let q = make_profile("powerlaw", &params(&[("a", 1.5)])).unwrap();
        assert!((q.value(3.0) - 4f64.powf(-1.5)).abs() < 1e-15);
        let phi = make_profile("exp", &params(&[("lambda", 2.0)])).unwrap();
        assert!((phi.ln_value(500.0) + 1000.0).abs() < 1e-12);
        let phi = make_profile("invlog", &params(&[("m", 2.0)])).unwrap();
        assert!((phi.value(0.0) - 1.0).abs() < 1e-15);
        let q = make_profile("logpower", &params(&[("a", 1.0), ("m", 2.0)])).unwrap();
        let s: f64 = 7.0;
        assert!((q.value(s) - (std::f64::consts::E + s).ln() / (1.0 + s).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn unknown_family_and_bad_parameters_are_errors() {
        assert!(matches!(
            make_profile("gaussian", &Params::new()),
            Err(Error::Unknown { .. })
        ));
        assert!(make_profile("exp", &Params::new()).is_err());
        assert!(make_profile("exp", &params(&[("lambda", 1.0), ("k", 1.0)])).is_err());
        assert!(make_profile("stretched_exp", &params(&[("m", 1.0), ("a", 1.5)])).is_err());
    }

    #[test]
    fn relativistic_table_matches_direct_kernel() {
        let phi = make_profile("relativistic", &params(&[("d", 2.0), ("alpha", 1.0)])).unwrap();
        for s in [1e-9f64, 1e-3, 0.37, 2.0, 25.0, 400.0, 5000.0] {
            // d = 2, α = 1: K(s) = 4√π (1 + s) e^{-s}, K0 = 4√π.
            let exact = s.ln_1p() - s;
            assert!((phi.ln_value(s) - exact).abs() < 1e-9, "s = {s}: {}", phi.ln_value(s) - exact);
        }
    }
}
