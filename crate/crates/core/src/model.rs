//! The Lévy model and its hypothesis checks.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::profile::ProfileFn;
use crate::radial::RadialLaw;
use crate::spectral::{SpectralForm, SpectralMeasure};

#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub q: Arc<dyn ProfileFn>,
    pub phi: Arc<dyn ProfileFn>,
}

impl RadialProfile {
    pub fn new(q: Arc<dyn ProfileFn>, phi: Arc<dyn ProfileFn>) -> Self {
        Self { q, phi }
    }

    pub fn q0(&self) -> f64 {
        self.q.value(0.0)
    }

    pub fn phi0(&self) -> f64 {
        self.phi.value(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct LevyModel {
    alpha: f64,
    beta: f64,
    gamma: f64,
    drift: Vec<f64>,
    mu: SpectralMeasure,
    profile: RadialProfile,
    law: RadialLaw,
    pub c_beta: Option<f64>,
    pub c_gamma: Option<f64>,
    pub c_lower: Option<f64>,
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `h(t) = min(t^{1/α}, t^{1/β})`.
pub fn h_scale(t: f64, alpha: f64, beta: f64) -> f64 {
    t.powf(1.0 / alpha).min(t.powf(1.0 / beta))
}

impl LevyModel {
    pub fn new(
        alpha: f64,
        beta: f64,
        gamma: f64,
        drift: Vec<f64>,
        mu: SpectralMeasure,
        profile: RadialProfile,
    ) -> Result<Self> {
        let d = mu.dim();
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidModel(format!("alpha must lie in (0, 2), got {alpha}")));
        }
        if !(beta >= alpha && beta <= 2.0) {
            return Err(Error::InvalidModel(format!(
                "beta must lie in [alpha, 2] = [{alpha}, 2], got {beta}"
            )));
        }
        if !(gamma >= 1.0 && gamma <= d as f64) {
            return Err(Error::InvalidModel(format!("gamma must lie in [1, {d}], got {gamma}")));
        }
        if drift.len() != d || drift.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidModel(format!("drift must be a finite {d}-vector")));
        }
        let (q0, phi0) = (profile.q0(), profile.phi0());
        if !(q0.is_finite() && q0 > 0.0 && phi0.is_finite() && phi0 > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "q(0+) = {q0} and phi(0) = {phi0} must be finite and positive"
            )));
        }
        let law = RadialLaw::new(alpha, profile.q.clone(), profile.phi.clone());
        Ok(Self {
            alpha,
            beta,
            gamma,
            drift,
            mu,
            profile,
            law,
            c_beta: None,
            c_gamma: None,
            c_lower: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn mu(&self) -> &SpectralMeasure {
        &self.mu
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn radial(&self) -> &RadialLaw {
        &self.law
    }

    pub fn with_drift(&self, drift: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        if drift.len() != self.dim() {
            return Err(Error::InvalidModel("drift has wrong dimension".into()));
        }
        out.drift = drift;
        Ok(out)
    }

    /// True when `q ≡ φ ≡ 1`.
    pub fn is_stable(&self) -> bool {
        self.profile.q.family() == "one" && self.profile.phi.family() == "one"
    }

    pub fn h(&self, t: f64) -> f64 {
        h_scale(t, self.alpha, self.beta)
    }

    /// `|ν̄_r| = ν(B(0, r)^c)`.
    pub fn large_jump_mass(&self, r: f64) -> Result<f64> {
        Ok(self.mu.total_mass() * self.law.moment(0.0, r, f64::INFINITY)?)
    }

    /// `ψ(r) = |μ| φ(0) ∫_r^∞ s^{-1-α} q(s) φ(s)/φ(s/2) ds`.
    pub fn tail_mass_psi(&self, r: f64) -> Result<PsiReport> {
        if !(r > 0.0) {
            return Err(Error::Precondition(format!("psi needs r > 0, got {r}")));
        }
        let (q, phi) = (&self.profile.q, &self.profile.phi);
        let alpha = self.alpha;
        let f = |s: f64| {
            (-(1.0 + alpha) * s.ln() + q.ln_value(s) + phi.ln_value(s) - phi.ln_value(0.5 * s)).exp()
        };
        let integral = crate::quad::integrate_range(f, r, f64::INFINITY, self.law.options())
            .map_err(|e| match e {
                Error::Quadrature { residual, .. } => Error::Quadrature {
                    what: format!("psi({r}) integral (profile may not decay)"),
                    residual,
                },
                other => other,
            })?
            .value;
        let psi = self.mu.total_mass() * self.profile.phi0() * integral;
        Ok(PsiReport {
            r,
            psi,
            large_jump_mass: self.large_jump_mass(r)?,
        })
    }

    /// `b_r`: the drift recentred for truncation radius `r`.
    pub fn centering_shift(&self, r: f64) -> Result<Vec<f64>> {
        if !(r > 0.0) {
            return Err(Error::Precondition(format!("centering needs r > 0, got {r}")));
        }
        let m1 = self.mu.mean_direction();
        if m1.iter().all(|&m| m == 0.0) || r == 1.0 {
            return Ok(self.drift.clone());
        }
        let (sign, integral) = if r < 1.0 {
            (-1.0, self.law.moment(1.0, r, 1.0)?)
        } else {
            (1.0, self.law.moment(1.0, 1.0, r)?)
        };
        Ok(self
            .drift
            .iter()
            .zip(&m1)
            .map(|(b, m)| b + sign * m * integral)
            .collect())
    }

    /// Checks `∫_0^r s^{1-α} q(s) φ(s)/φ(s/2) ds ≤ c_β r^{2-β}` on `r_grid ⊂ [1, ∞)`.
    pub fn beta_condition_check(&self, r_grid: &[f64]) -> Result<BetaReport> {
        if r_grid.is_empty() || r_grid.iter().any(|&r| r < 1.0) || !is_increasing(r_grid) {
            return Err(Error::Precondition(
                "r grid must be nonempty, increasing and inside [1, inf)".into(),
            ));
        }
        let (q, phi) = (&self.profile.q, &self.profile.phi);
        let alpha = self.alpha;
        let f = |s: f64| ((1.0 - alpha) * s.ln() + q.ln_value(s) + phi.ln_value(s) - phi.ln_value(0.5 * s)).exp();
        let opts = self.law.options();
        let mut integral = crate::quad::integrate_range(f, 0.0, r_grid[0], opts)?.value;
        let mut ratios = Vec::with_capacity(r_grid.len());
        for (i, &r) in r_grid.iter().enumerate() {
            if i > 0 {
                integral += crate::quad::integrate_range(f, r_grid[i - 1], r, opts)?.value;
            }
            ratios.push(integral / r.powf(2.0 - self.beta));
        }
        let c_beta = ratios.iter().copied().fold(0.0, f64::max);
        // Growth of the ratio over the last decade of the grid; a bounded ratio has slope ~0.
        let n = r_grid.len();
        let top = r_grid[n - 1];
        let j = r_grid.iter().position(|&r| r >= top / 10.0).unwrap_or(0);
        let slope = if n >= 2 && j < n - 1 {
            (ratios[n - 1] / ratios[j]).ln() / (r_grid[n - 1] / r_grid[j]).ln()
        } else {
            0.0
        };
        let pass = c_beta.is_finite() && slope <= 0.05;
        Ok(BetaReport {
            beta: self.beta,
            c_beta,
            top_slope: slope,
            r_min: r_grid[0],
            r_max: top,
            pass,
        })
    }

    pub fn default_beta_grid() -> Vec<f64> {
        log_grid(1.0, 1e4, 64)
    }

    /// Mass and moments of `ν` restricted to the shell `ρ ≤ |y| < r`.
    pub fn truncation_moments(&self, rho: f64, r: f64) -> Result<TruncationMoments> {
        if !(rho >= 0.0 && rho <= r) {
            return Err(Error::Precondition(format!("need 0 <= rho <= r, got ({rho}, {r})")));
        }
        let d = self.dim();
        let total = self.mu.total_mass();
        let law = &self.law;
        if rho == r {
            return Ok(TruncationMoments::empty(rho, r, d));
        }
        let mass = if rho == 0.0 {
            f64::INFINITY
        } else {
            total * law.moment(0.0, rho, r)?
        };
        let radial2 = law.moment(2.0, rho, r).map_err(|e| match e {
            Error::Quadrature { residual, .. } => Error::Quadrature {
                what: "second moment (tail not integrable?)".into(),
                residual,
            },
            other => other,
        })?;
        let top = r.min(1.0);
        let m1 = self.mu.mean_direction();
        let first_moment_vector = if m1.iter().all(|&m| m == 0.0) || top <= rho {
            vec![0.0; d]
        } else if rho == 0.0 && self.alpha >= 1.0 {
            // Not absolutely integrable at 0; only the direction survives.
            m1.iter().map(|&m| if m == 0.0 { 0.0 } else { m.signum() * f64::INFINITY }).collect()
        } else {
            let radial1 = law.moment(1.0, rho, top)?;
            m1.iter().map(|m| m * radial1).collect()
        };
        let covariance = self.mu.gram().iter().map(|g| g * radial2).collect();
        Ok(TruncationMoments {
            rho,
            r,
            mass,
            second_moment: total * radial2,
            first_moment_vector,
            covariance,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiReport {
    pub r: f64,
    pub psi: f64,
    pub large_jump_mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaReport {
    pub beta: f64,
    pub c_beta: f64,
    pub top_slope: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationMoments {
    pub rho: f64,
    pub r: f64,
    pub mass: f64,
    pub second_moment: f64,
    /// `∫_{B(0,1)} y ν_{ρ,r}(dy)`.
    pub first_moment_vector: Vec<f64>,
    /// `∫ y yᵀ ν_{ρ,r}(dy)`, row-major.
    pub covariance: Vec<f64>,
}

impl TruncationMoments {
    fn empty(rho: f64, r: f64, d: usize) -> Self {
        Self {
            rho,
            r,
            mass: 0.0,
            second_moment: 0.0,
            first_moment_vector: vec![0.0; d],
            covariance: vec![0.0; d * d],
        }
    }
}

fn is_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub pass: bool,
    pub constant: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileReport {
    pub grid_points: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub q0: f64,
    pub phi0: f64,
    /// `max q(s)/q(2s)`.
    pub kappa1: f64,
    /// `max φ(a)φ(b)/φ(a+b)` over grid pairs including 0.
    pub kappa2: f64,
    /// `log₂ κ₁`, the polynomial decay exponent of `q`.
    pub eta: f64,
    /// Smallest `c` with `q(r)/q(R) ≤ c (r/R)^{-η}` on grid pairs.
    pub eta_constant: f64,
    pub checks: Vec<HypothesisCheck>,
    pub pass: bool,
}

pub fn default_profile_grid() -> Vec<f64> {
    log_grid(1e-6, 1e3, 512)
}

pub fn validate_profiles(profile: &RadialProfile, s_grid: &[f64]) -> Result<ProfileReport> {
    if s_grid.is_empty() || s_grid[0] <= 0.0 || !is_increasing(s_grid) {
        return Err(Error::Precondition(
            "profile grid must be nonempty, positive and strictly increasing".into(),
        ));
    }
    let (q, phi) = (&profile.q, &profile.phi);
    let ln_q: Vec<f64> = s_grid.iter().map(|&s| q.ln_value(s)).collect();
    let mut phi_pts = vec![0.0];
    phi_pts.extend_from_slice(s_grid);
    let ln_phi: Vec<f64> = phi_pts.iter().map(|&s| phi.ln_value(s)).collect();
    for (name, s, v) in s_grid
        .iter()
        .zip(&ln_q)
        .map(|(s, v)| ("q", s, v))
        .chain(phi_pts.iter().zip(&ln_phi).map(|(s, v)| ("phi", s, v)))
    {
        if !v.is_finite() {
            return Err(Error::InvalidProfile(format!("{name}({s}) is not finite and positive")));
        }
    }
    let q0 = profile.q0();
    let phi0 = profile.phi0();
    if !(q0.is_finite() && phi0.is_finite()) {
        return Err(Error::InvalidProfile("q(0+) or phi(0) is not finite".into()));
    }
    let monotone = |vals: &[f64]| vals.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let q_monotone = monotone(&ln_q);
    let phi_monotone = monotone(&ln_phi);

    let ln_kappa1 = s_grid
        .iter()
        .zip(&ln_q)
        .map(|(&s, &lq)| lq - q.ln_value(2.0 * s))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut ln_kappa2 = f64::NEG_INFINITY;
    for i in 0..phi_pts.len() {
        for j in i..phi_pts.len() {
            let v = ln_phi[i] + ln_phi[j] - phi.ln_value(phi_pts[i] + phi_pts[j]);
            ln_kappa2 = ln_kappa2.max(v);
        }
    }
    let kappa1 = ln_kappa1.exp();
    let kappa2 = ln_kappa2.exp();
    let eta = (ln_kappa1 / std::f64::consts::LN_2).max(0.0);
    let mut ln_eta_c = f64::NEG_INFINITY;
    for i in 0..s_grid.len() {
        for j in i..s_grid.len() {
            let v = ln_q[i] - ln_q[j] + eta * (s_grid[i] / s_grid[j]).ln();
            ln_eta_c = ln_eta_c.max(v);
        }
    }
    let eta_constant = ln_eta_c.exp();
    let checks = vec![
        HypothesisCheck {
            name: "q bounded and nonincreasing".into(),
            pass: q_monotone && q0.is_finite(),
            constant: q0,
        },
        HypothesisCheck {
            name: "phi bounded and nonincreasing".into(),
            pass: phi_monotone && phi0.is_finite(),
            constant: phi0,
        },
        HypothesisCheck {
            name: "q doubling: q(s) <= kappa1 q(2s)".into(),
            pass: kappa1.is_finite(),
            constant: kappa1,
        },
        HypothesisCheck {
            name: "phi(a) phi(b) <= kappa2 phi(a+b)".into(),
            pass: kappa2.is_finite(),
            constant: kappa2,
        },
        HypothesisCheck {
            name: "q(r)/q(R) <= c (r/R)^-eta".into(),
            pass: eta_constant.is_finite(),
            constant: eta_constant,
        },
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(ProfileReport {
        grid_points: s_grid.len(),
        grid_min: s_grid[0],
        grid_max: s_grid[s_grid.len() - 1],
        q0,
        phi0,
        kappa1,
        kappa2,
        eta,
        eta_constant,
        checks,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaFit {
    pub gamma: f64,
    /// Smallest `c` with `M(ρ) ≤ c ρ^{γ-1}` on the whole grid.
    pub constant: f64,
    /// Raw log-log slope before clamping to `[0, d-1]`.
    pub slope: f64,
    /// Largest absolute log residual of the regression.
    pub residual: f64,
    pub fit_range: (f64, f64),
}

pub fn default_rho_grid() -> Vec<f64> {
    log_grid(1e-3, 2.0, 40)
}

/// Cap-mass exponent of μ from the upper envelope `M(ρ) = max_θ μ(B(θ, ρ))`.
pub fn gamma_exponent(mu: &SpectralMeasure, rho_grid: &[f64]) -> Result<GammaFit> {
    if mu.is_empty() {
        return Err(Error::InvalidModel("spectral measure has empty support".into()));
    }
    if rho_grid.is_empty() || rho_grid.iter().any(|&r| !(r > 0.0 && r <= 2.0)) {
        return Err(Error::Precondition("rho grid must be nonempty inside (0, 2]".into()));
    }
    let d = mu.dim() as f64;
    let dirs = mu.directions();
    let stride = (dirs.len() / 256).max(1);
    let centers: Vec<&Vec<f64>> = dirs.iter().step_by(stride).collect();
    let envelope: Vec<f64> = rho_grid
        .iter()
        .map(|&rho| centers.iter().map(|c| mu.cap_mass(c, rho)).fold(0.0, f64::max))
        .collect();
    let (lo, hi) = match mu.form() {
        // Below the smallest atom separation every cap holds at most one atom.
        SpectralForm::Atomic => {
            let mut sep = f64::INFINITY;
            for i in 0..dirs.len() {
                for j in i + 1..dirs.len() {
                    let dist = dirs[i].iter().zip(&dirs[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    sep = sep.min(dist);
                }
            }
            (0.0, (0.5 * sep).min(1.0))
        }
        SpectralForm::Density { resolution, .. } => ((4.0 * resolution).max(1e-3), 1.0),
    };
    let pts: Vec<(f64, f64)> = rho_grid
        .iter()
        .zip(&envelope)
        .filter(|(&r, &m)| r >= lo && r <= hi && m > 0.0)
        .map(|(&r, &m)| (r.ln(), m.ln()))
        .collect();
    let (slope, intercept) = if pts.len() >= 2 {
        linear_fit(&pts)
    } else {
        (0.0, pts.first().map(|p| p.1).unwrap_or(0.0))
    };
    let residual = pts
        .iter()
        .map(|(x, y)| (y - (intercept + slope * x)).abs())
        .fold(0.0, f64::max);
    let gamma = (1.0 + slope).clamp(1.0, d);
    let constant = rho_grid
        .iter()
        .zip(&envelope)
        .map(|(&r, &m)| m / r.powf(gamma - 1.0))
        .fold(0.0, f64::max);
    Ok(GammaFit {
        gamma,
        constant,
        slope,
        residual,
        fit_range: (lo, hi),
    })
}

pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{make_profile, one, params};
    use crate::spectral::{AngularDensity, AngularRule};
    use proptest::prelude::*;

    fn stable_1d(alpha: f64, dirs: Vec<f64>) -> LevyModel {
        let n = dirs.len();
        let mu = SpectralMeasure::atomic(dirs.into_iter().map(|x| vec![x]).collect(), vec![1.0; n]).unwrap();
        LevyModel::new(alpha, alpha, 1.0, vec![0.0], mu, RadialProfile::new(one(), one())).unwrap()
    }

    fn tempered_1d() -> LevyModel {
        let mu = SpectralMeasure::atomic(vec![vec![1.0], vec![-1.0]], vec![0.5, 0.5]).unwrap();
        let phi = make_profile("exp", &params(&[("lambda", 1.0)])).unwrap();
        LevyModel::new(1.0, 2.0, 1.0, vec![0.0], mu, RadialProfile::new(one(), phi)).unwrap()
    }

    fn layered_1d() -> LevyModel {
        let mu = SpectralMeasure::atomic(vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]).unwrap();
        let q = make_profile("powerlaw", &params(&[("a", 2.5)])).unwrap();
        LevyModel::new(0.5, 2.0, 1.0, vec![0.0], mu, RadialProfile::new(q, one())).unwrap()
    }

    #[test]
    fn rejects_out_of_range_exponents() {
        let mu = SpectralMeasure::atomic(vec![vec![1.0]], vec![1.0]).unwrap();
        let p = RadialProfile::new(one(), one());
        assert!(LevyModel::new(2.0, 2.0, 1.0, vec![0.0], mu.clone(), p.clone()).is_err());
        assert!(LevyModel::new(1.0, 0.5, 1.0, vec![0.0], mu.clone(), p.clone()).is_err());
        assert!(LevyModel::new(1.0, 1.0, 2.0, vec![0.0], mu, p).is_err());
    }

    #[test]
    fn profile_constants_for_reference_families() {
        let grid = default_profile_grid();
        let q = make_profile("powerlaw", &params(&[("a", 1.5)])).unwrap();
        let rep = validate_profiles(&RadialProfile::new(q, one()), &grid).unwrap();
        assert!(rep.pass && rep.kappa1 <= 2f64.powf(1.5) + 1e-12);
        let phi = make_profile("exp", &params(&[("lambda", 3.0)])).unwrap();
        let rep = validate_profiles(&RadialProfile::new(one(), phi), &grid).unwrap();
        assert!(rep.pass && (rep.kappa2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invlog_submultiplicativity_constant_matches_brute_force() {
        // Independent oracle: direct products on a linear grid over [0, 100].
        let phi = make_profile("invlog", &params(&[("m", 2.0)])).unwrap();
        let grid = log_grid(1e-3, 100.0, 300);
        let rep = validate_profiles(&RadialProfile::new(one(), phi), &grid).unwrap();
        let f = |s: f64| 1.0 / (s + std::f64::consts::E).ln().powi(2);
        let mut brute: f64 = 0.0;
        for i in 0..=400 {
            for j in 0..=400 {
                let (a, b) = (i as f64 * 0.25, j as f64 * 0.25);
                brute = brute.max(f(a) * f(b) / f(a + b));
            }
        }
        assert!(rep.pass);
        assert!((rep.kappa2 - brute).abs() / brute < 0.02, "{} vs {brute}", rep.kappa2);
    }

    #[derive(Debug)]
    struct Broken(crate::profile::Params);

    impl ProfileFn for Broken {
        fn family(&self) -> &str {
            "broken"
        }
        fn params(&self) -> &crate::profile::Params {
            &self.0
        }
        fn ln_value(&self, s: f64) -> f64 {
            if s > 10.0 { f64::NAN } else { 0.0 }
        }
    }

    #[test]
    fn non_finite_profile_is_an_error() {
        let q: Arc<dyn ProfileFn> = Arc::new(Broken(Default::default()));
        let rep = validate_profiles(&RadialProfile::new(q, one()), &default_profile_grid());
        assert!(matches!(rep, Err(Error::InvalidProfile(_))));
    }

    #[test]
    fn gamma_for_atoms_circle_and_sphere() {
        let grid = default_rho_grid();
        let atoms = SpectralMeasure::atomic(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(gamma_exponent(&atoms, &grid).unwrap().gamma, 1.0);
        let circle = SpectralMeasure::uniform(2, 2048).unwrap();
        assert!((gamma_exponent(&circle, &grid).unwrap().gamma - 2.0).abs() < 0.05);
        let sphere = SpectralMeasure::uniform(3, 20000).unwrap();
        let fit = gamma_exponent(&sphere, &grid).unwrap();
        assert!((fit.gamma - 3.0).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn gamma_for_great_circle_in_three_dimensions() {
        let mu = SpectralMeasure::density(3, AngularDensity::uniform(), AngularRule::GreatCircle, 2048).unwrap();
        let fit = gamma_exponent(&mu, &default_rho_grid()).unwrap();
        // Brute force: a cap of chord radius ρ centred on the circle cuts an arc of angle 4 asin(ρ/2).
        let arc = |rho: f64| 4.0 * (0.5 * rho).asin();
        assert!((mu.cap_mass(&[1.0, 0.0, 0.0], 0.5) - arc(0.5)).abs() < 0.01);
        assert!((fit.gamma - 2.0).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn psi_for_pure_power_law() {
        let m = stable_1d(0.7, vec![1.0]);
        for r in [0.1, 1.0, 5.0] {
            let rep = m.tail_mass_psi(r).unwrap();
            assert!((rep.psi - r.powf(-0.7) / 0.7).abs() < 1e-10 * rep.psi);
            assert!(rep.psi >= rep.large_jump_mass);
        }
    }

    #[test]
    fn tempered_psi_agrees_with_riemann_sum() {
        let m = tempered_1d();
        let psi = m.tail_mass_psi(1.0).unwrap().psi;
        // Midpoint rule of s^{-2} e^{-s/2} on [1, 60] plus the negligible tail.
        let n = 2_000_000;
        let h = 59.0 / n as f64;
        let riemann: f64 = (0..n)
            .map(|i| {
                let s = 1.0 + (i as f64 + 0.5) * h;
                s.powi(-2) * (-0.5 * s).exp()
            })
            .sum::<f64>()
            * h;
        assert!((psi - riemann).abs() < 1e-8, "{psi} vs {riemann}");
        assert!(m.tail_mass_psi(2.0).unwrap().psi / psi < 0.5);
    }

    #[test]
    fn centering_for_one_sided_stable() {
        // b_r = b − ∫_{0.25}^{1} s^{-1/2} ds = b − (2 − 2·0.5) = b − 1.
        let m = stable_1d(0.5, vec![1.0]).with_drift(vec![0.3]).unwrap();
        let b = m.centering_shift(0.25).unwrap();
        assert!((b[0] - (0.3 - 1.0)).abs() < 1e-11);
        assert_eq!(m.centering_shift(1.0).unwrap(), vec![0.3]);
        // ∫_1^4 s^{-1/2} ds = 2.
        assert!((m.centering_shift(4.0).unwrap()[0] - 2.3).abs() < 1e-11);
        let sym = stable_1d(0.5, vec![1.0, -1.0]);
        assert_eq!(sym.centering_shift(0.01).unwrap(), vec![0.0]);
    }

    #[test]
    fn beta_condition_for_stable_layered_tempered() {
        let grid = LevyModel::default_beta_grid();
        let rep = stable_1d(1.2, vec![1.0]).beta_condition_check(&grid).unwrap();
        assert!(rep.pass && (rep.c_beta - 1.0 / 0.8).abs() < 1e-9, "{rep:?}");
        assert!(layered_1d().beta_condition_check(&grid).unwrap().pass);
        let tempered = tempered_1d().beta_condition_check(&grid).unwrap();
        // I(∞) = ∫ s^{0} e^{-s/2} ds = 2 (α = 1), attained at the top of the grid.
        assert!(tempered.pass && (tempered.c_beta - 2.0).abs() < 1e-8, "{tempered:?}");
        // β = 2 fails for a heavy-tailed stable profile.
        let bad = LevyModel::new(
            1.2,
            2.0,
            1.0,
            vec![0.0],
            SpectralMeasure::atomic(vec![vec![1.0]], vec![1.0]).unwrap(),
            RadialProfile::new(one(), one()),
        )
        .unwrap();
        assert!(!bad.beta_condition_check(&grid).unwrap().pass);
    }

    #[test]
    fn truncation_moments_reference_values() {
        let m = stable_1d(1.0, vec![1.0]);
        let tm = m.truncation_moments(0.0, 1.0).unwrap();
        assert!((tm.second_moment - 1.0).abs() < 1e-11);
        let empty = m.truncation_moments(0.5, 0.5).unwrap();
        assert_eq!(empty.mass, 0.0);
        let sym = tempered_1d().truncation_moments(0.1, 3.0).unwrap();
        assert!(sym.first_moment_vector[0].abs() < 1e-14);
    }

    #[test]
    fn layered_shell_mass_agrees_with_riemann_sum() {
        let m = layered_1d();
        let mass = m.truncation_moments(1.0, 10.0).unwrap().mass;
        let n = 1_000_000;
        let h = 9.0 / n as f64;
        let riemann = 2.0
            * h
            * (0..n)
                .map(|i| {
                    let s = 1.0 + (i as f64 + 0.5) * h;
                    s.powf(-1.5) * (1.0 + s).powf(-2.5)
                })
                .sum::<f64>();
        assert!((mass - riemann).abs() < 1e-9, "{mass} vs {riemann}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn shell_masses_add_up(rho in 0.01f64..1.0, f1 in 1.1f64..5.0, f2 in 1.1f64..5.0) {
            let m = layered_1d();
            let r = rho * f1;
            let big = r * f2;
            let whole = m.truncation_moments(rho, big).unwrap().mass;
            let parts = m.truncation_moments(rho, r).unwrap().mass + m.truncation_moments(r, big).unwrap().mass;
            prop_assert!((whole - parts).abs() <= 1e-9 * whole);
        }

        #[test]
        fn psi_is_nonincreasing_and_dominates_tail_mass(r in 0.01f64..20.0, f in 1.01f64..3.0) {
            let m = tempered_1d();
            let a = m.tail_mass_psi(r).unwrap();
            let b = m.tail_mass_psi(r * f).unwrap();
            prop_assert!(b.psi <= a.psi);
            prop_assert!(a.psi >= a.large_jump_mass);
        }

        #[test]
        fn centering_is_continuous_at_one(eps in 1e-9f64..1e-6) {
            let m = stable_1d(1.5, vec![1.0]).with_drift(vec![0.2]).unwrap();
            let below = m.centering_shift(1.0 - eps).unwrap()[0];
            let above = m.centering_shift(1.0 + eps).unwrap()[0];
            prop_assert!((below - 0.2).abs() < 1e-5 && (above - 0.2).abs() < 1e-5);
        }
    }
}
