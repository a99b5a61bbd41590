//! One-dimensional radial law `ρ(s) = s^{-1-α} q(s) φ(s)` and its symbol.
//!
//! For a polar Lévy measure every radial integral factors over the nodes of
//! μ, so the exponent reduces to
//!
//! `Φ(ξ) = Σ_i w_i J(⟨ξ, θ_i⟩) − i⟨ξ, b⟩`,
//! `J(k) = −∫_0^U (e^{iks} − 1 − iks 1_{s<C}) ρ(s) ds`,
//!
//! with `U = ∞, C = 1` for the model itself and `U = C = r` for the
//! truncated measure `ν 1_{B(0,r)}`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::profile::ProfileFn;
use crate::quad::{self, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    /// Jumps longer than this are removed.
    pub upper: f64,
    /// Jumps shorter than this are compensated by their mean.
    pub compensate_below: f64,
}

impl Window {
    pub const FULL: Window = Window {
        upper: f64::INFINITY,
        compensate_below: 1.0,
    };

    /// `ν` restricted to `B(0, r)`, fully compensated.
    pub fn truncated(r: f64) -> Window {
        Window {
            upper: r,
            compensate_below: r,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RadialLaw {
    alpha: f64,
    q: Arc<dyn ProfileFn>,
    phi: Arc<dyn ProfileFn>,
    opts: QuadOptions,
}

fn sin_minus_x(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let x2 = x * x;
        -x * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
    } else {
        x.sin() - x
    }
}

impl RadialLaw {
    pub fn new(alpha: f64, q: Arc<dyn ProfileFn>, phi: Arc<dyn ProfileFn>) -> Self {
        Self {
            alpha,
            q,
            phi,
            opts: QuadOptions::default(),
        }
    }

    pub fn with_options(mut self, opts: QuadOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q(&self) -> &Arc<dyn ProfileFn> {
        &self.q
    }

    pub fn phi(&self) -> &Arc<dyn ProfileFn> {
        &self.phi
    }

    pub fn options(&self) -> &QuadOptions {
        &self.opts
    }

    pub fn ln_density(&self, s: f64) -> f64 {
        -(1.0 + self.alpha) * s.ln() + self.q.ln_value(s) + self.phi.ln_value(s)
    }

    pub fn density(&self, s: f64) -> f64 {
        self.ln_density(s).exp()
    }

    /// `q(s) φ(s)`.
    pub fn profile(&self, s: f64) -> f64 {
        (self.q.ln_value(s) + self.phi.ln_value(s)).exp()
    }

    /// `∫_lo^hi s^p ρ(s) ds`, `0 ≤ lo ≤ hi ≤ ∞`.
    pub fn moment(&self, p: f64, lo: f64, hi: f64) -> Result<f64> {
        if lo < 0.0 || hi < lo {
            return Err(Error::Precondition(format!("bad radial range ({lo}, {hi})")));
        }
        if lo == 0.0 && p - self.alpha <= 0.0 && hi > 0.0 {
            return Err(Error::Precondition(format!(
                "∫ s^{p} ρ diverges at 0 for alpha = {}",
                self.alpha
            )));
        }
        let shift = p - 1.0 - self.alpha;
        let f = |s: f64| (shift * s.ln() + self.q.ln_value(s) + self.phi.ln_value(s)).exp();
        Ok(quad::integrate_range(f, lo, hi, &self.opts)?.value)
    }

    /// `∫_lo^hi f(s) ρ(s) ds` for a user weight `f`.
    pub fn weighted<F: Fn(f64) -> f64>(&self, f: F, lo: f64, hi: f64) -> Result<f64> {
        let g = |s: f64| f(s) * self.density(s);
        Ok(quad::integrate_range(g, lo, hi, &self.opts)?.value)
    }

    /// `J(k)` for the given window.
    pub fn symbol(&self, k: f64, window: Window) -> Result<Complex64> {
        if k == 0.0 {
            return Ok(Complex64::default());
        }
        if k < 0.0 {
            return Ok(self.symbol(-k, window)?.conj());
        }
        let Window {
            upper: u,
            compensate_below: c,
        } = window;
        let opts = QuadOptions {
            abs_tol: self.opts.abs_tol * (k * k).min(1.0),
            ..self.opts
        };
        let a = (1.0 / k).min(u);
        let inner = a.min(c);
        let rho = |s: f64| self.density(s);

        // (0, inner]: both parts compensated, integrands O(s^{1-α}) and O(s^{2-α}).
        let mut re = quad::to_zero(|s: f64| 2.0 * (0.5 * k * s).sin().powi(2) * rho(s), a, &opts)?.value;
        let mut im = -quad::to_zero(|s: f64| sin_minus_x(k * s) * rho(s), inner, &opts)?.value;
        // (inner, a]: uncompensated sine.
        if a > inner {
            im -= quad::integrate_range(|s: f64| (k * s).sin() * rho(s), inner, a, &opts)?.value;
        }
        if u > a {
            let mass = quad::integrate_range(rho, a, u, &opts)?.value;
            let wave = self.fourier(k, a, u, &opts)?;
            re += mass - wave.re;
            im -= wave.im;
            let top = c.min(u);
            if top > a {
                im += k * quad::integrate_range(|s: f64| s * rho(s), a, top, &opts)?.value;
            }
        }
        Ok(Complex64::new(re, im))
    }

    /// `∫_a^u e^{iks} ρ(s) ds`, `k > 0`, `a > 0`.
    fn fourier(&self, k: f64, a: f64, u: f64, opts: &QuadOptions) -> Result<Complex64> {
        let rho = |s: f64| self.density(s);
        let half_period = std::f64::consts::PI / k;
        if u.is_finite() && (u - a) / half_period <= 400.0 {
            let wave = |s: f64| {
                let (sin, cos) = (k * s).sin_cos();
                Complex64::new(cos, sin) * rho(s)
            };
            let panel_opts = QuadOptions {
                abs_tol: opts.abs_tol / 64.0,
                ..*opts
            };
            let mut total = Complex64::default();
            let mut lo = a;
            while lo < u {
                let hi = (lo + half_period).min(u);
                total += quad::adaptive(wave, lo, hi, &panel_opts)?.value;
                lo = hi;
            }
            return Ok(total);
        }
        let head = quad::oscillatory_tail(rho, k, a, opts)?.value;
        if u.is_finite() {
            Ok(head - quad::oscillatory_tail(rho, k, u, opts)?.value)
        } else {
            Ok(head)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{make_profile, one, params};
    use std::f64::consts::PI;

    fn stable(alpha: f64) -> RadialLaw {
        RadialLaw::new(alpha, one(), one())
    }

    #[test]
    fn cauchy_real_part_is_half_pi_k() {
        // ∫_0^∞ (1 - cos u) u^{-2} du = π/2.
        let law = stable(1.0);
        for k in [1e-3, 0.5, 1.0, 7.0, 3e4] {
            let j = law.symbol(k, Window::FULL).unwrap();
            assert!((j.re - 0.5 * PI * k).abs() < 1e-10 * k.max(1.0), "k = {k}: {}", j.re);
        }
    }

    #[test]
    fn stable_symbol_matches_closed_form() {
        for alpha in [0.3, 0.5, 1.5, 1.9] {
            let law = stable(alpha);
            let a = PI / (2.0 * (PI * alpha / 2.0).sin() * statrs::function::gamma::gamma(1.0 + alpha));
            let tan = (PI * alpha / 2.0).tan();
            // The compensator at 1 shifts Im J by a term linear in k.
            let linear = if alpha < 1.0 { 1.0 / (1.0 - alpha) } else { -1.0 / (alpha - 1.0) };
            for k in [1e-4, 0.3, 1.0, 12.0, 1e5] {
                let j = law.symbol(k, Window::FULL).unwrap();
                let re = a * k.powf(alpha);
                let im = -a * tan * k.powf(alpha) + linear * k;
                let scale = k.powf(alpha).max(k);
                assert!((j.re - re).abs() < 1e-9 * scale, "alpha {alpha} k {k}: re {} vs {re}", j.re);
                assert!((j.im - im).abs() < 1e-9 * scale, "alpha {alpha} k {k}: im {} vs {im}", j.im);
            }
        }
    }

    #[test]
    fn tempered_real_part_matches_antiderivative() {
        // α = 1, φ = e^{-s}: ∫(1 - cos ks) s^{-2} e^{-s} ds = k atan k - ½ ln(1 + k²).
        let law = RadialLaw::new(1.0, one(), make_profile("exp", &params(&[("lambda", 1.0)])).unwrap());
        for k in [1e-3, 0.2, 1.0, 5.0, 300.0] {
            let j = law.symbol(k, Window::FULL).unwrap();
            let exact = k * k.atan() - 0.5 * (k * k).ln_1p();
            assert!((j.re - exact).abs() < 1e-10 * exact.max(1e-6), "k = {k}");
            assert_eq!(law.symbol(-k, Window::FULL).unwrap(), j.conj());
        }
    }

    #[test]
    fn truncated_symbol_is_entire_and_bounded_by_mass_growth() {
        // For U = C = r the symbol is ∫_0^r (1 − cos ks + i(ks − sin ks)) ρ and stays finite.
        let law = stable(0.5);
        let w = Window::truncated(0.7);
        let j = law.symbol(2.0, w).unwrap();
        let re = law.weighted(|s| 1.0 - (2.0 * s).cos(), 0.0, 0.7).unwrap();
        let im = law.weighted(|s| 2.0 * s - (2.0 * s).sin(), 0.0, 0.7).unwrap();
        assert!((j.re - re).abs() < 1e-10 && (j.im - im).abs() < 1e-10);
    }

    #[test]
    fn moments_of_power_law() {
        let law = stable(1.0);
        assert!((law.moment(2.0, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-11);
        assert!((law.moment(0.0, 2.0, f64::INFINITY).unwrap() - 0.5).abs() < 1e-11);
        assert!(law.moment(0.0, 0.0, 1.0).is_err());
    }
}
