//! The angular part μ of the Lévy measure.
//!
//! Both forms are stored as weighted nodes on the sphere. A density-form μ
//! keeps its generating `g` and rule so it can be written back to JSON.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::Params;

/// Angular quadrature rule for density-form measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularRule {
    /// Whole sphere `S^{d-1}`.
    Sphere,
    /// The circle `{x₁² + x₂² = 1}` inside `R^d`, `d ≥ 2`.
    GreatCircle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularDensity {
    pub family: String,
    #[serde(default)]
    pub params: Params,
}

impl AngularDensity {
    pub fn uniform() -> Self {
        Self {
            family: "uniform".into(),
            params: Params::new(),
        }
    }

    fn eval(&self, theta: &[f64]) -> Result<f64> {
        match self.family.as_str() {
            "uniform" => Ok(self.params.get("c").copied().unwrap_or(1.0)),
            // |θ₁|^p, symmetric and concentrated near ±e₁ for large p.
            "axis_power" => {
                let p = self.params.get("p").copied().unwrap_or(1.0);
                Ok(theta[0].abs().powf(p))
            }
            other => Err(Error::Unknown {
                kind: "angular density",
                name: other.to_string(),
                known: "axis_power, uniform".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralForm {
    Atomic,
    Density {
        g: AngularDensity,
        rule: AngularRule,
        nodes: usize,
        /// Typical spacing between neighbouring nodes.
        resolution: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    dim: usize,
    form: SpectralForm,
    directions: Vec<Vec<f64>>,
    weights: Vec<f64>,
    total_mass: f64,
}

const UNIT_TOL: f64 = 1e-12;

impl SpectralMeasure {
    pub fn atomic(directions: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = directions
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidModel("spectral measure has no atoms".into()))?;
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be >= 1".into()));
        }
        if directions.len() != weights.len() {
            return Err(Error::InvalidModel(format!(
                "{} directions but {} weights",
                directions.len(),
                weights.len()
            )));
        }
        for (i, theta) in directions.iter().enumerate() {
            if theta.len() != dim {
                return Err(Error::InvalidModel(format!("direction {i} has wrong dimension")));
            }
            let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidModel(format!(
                    "direction {i} has norm {norm}, expected a unit vector"
                )));
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidModel(format!("weight {i} = {w} is not positive")));
            }
        }
        Ok(Self::from_parts(dim, SpectralForm::Atomic, directions, weights))
    }

    /// Like [`SpectralMeasure::atomic`] but rescales each direction to unit length.
    pub fn atomic_normalized(directions: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let mut unit = Vec::with_capacity(directions.len());
        for theta in directions {
            let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::InvalidModel("zero direction".into()));
            }
            unit.push(theta.iter().map(|x| x / norm).collect());
        }
        Self::atomic(unit, weights)
    }

    pub fn density(dim: usize, g: AngularDensity, rule: AngularRule, nodes: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidModel(format!(
                "density-form spectral measures support d <= 3, got {dim}"
            )));
        }
        let (points, cell, resolution) = angular_nodes(dim, rule, nodes)?;
        let mut directions = Vec::new();
        let mut weights = Vec::new();
        for theta in points {
            let v = g.eval(&theta)?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidModel(format!("angular density value {v} is invalid")));
            }
            if v > 0.0 {
                weights.push(v * cell);
                directions.push(theta);
            }
        }
        if directions.is_empty() {
            return Err(Error::InvalidModel("angular density vanishes on every node".into()));
        }
        let form = SpectralForm::Density {
            g,
            rule,
            nodes,
            resolution,
        };
        Ok(Self::from_parts(dim, form, directions, weights))
    }

    /// Uniform surface measure on `S^{d-1}`.
    pub fn uniform(dim: usize, nodes: usize) -> Result<Self> {
        Self::density(dim, AngularDensity::uniform(), AngularRule::Sphere, nodes)
    }

    fn from_parts(dim: usize, form: SpectralForm, directions: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        let total_mass = pairwise_sum(&weights);
        Self {
            dim,
            form,
            directions,
            weights,
            total_mass,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn form(&self) -> &SpectralForm {
        &self.form
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Same measure with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for w in &mut out.weights {
            *w *= factor;
        }
        out.total_mass *= factor;
        out
    }

    /// Angular spacing of the node set; zero for atomic measures.
    pub fn resolution(&self) -> f64 {
        match &self.form {
            SpectralForm::Atomic => 0.0,
            SpectralForm::Density { resolution, .. } => *resolution,
        }
    }

    /// `∫ θ μ(dθ)`.
    pub fn mean_direction(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (theta, w) in self.directions.iter().zip(&self.weights) {
            for (mi, ti) in m.iter_mut().zip(theta) {
                *mi += w * ti;
            }
        }
        m
    }

    /// `Σ w θ θᵀ`, row-major.
    pub fn gram(&self) -> Vec<f64> {
        let d = self.dim;
        let mut g = vec![0.0; d * d];
        for (theta, w) in self.directions.iter().zip(&self.weights) {
            for i in 0..d {
                for j in 0..d {
                    g[i * d + j] += w * theta[i] * theta[j];
                }
            }
        }
        g
    }

    /// Rank of the support span, by Gaussian elimination on the Gram matrix.
    pub fn rank(&self) -> usize {
        let d = self.dim;
        let mut a = self.gram();
        let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        let mut rank = 0;
        let mut row = 0;
        for col in 0..d {
            let pivot = (row..d).max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()));
            let Some(p) = pivot else { break };
            if a[p * d + col].abs() <= tol {
                continue;
            }
            for k in 0..d {
                a.swap(row * d + k, p * d + k);
            }
            for i in row + 1..d {
                let f = a[i * d + col] / a[row * d + col];
                for k in col..d {
                    a[i * d + k] -= f * a[row * d + k];
                }
            }
            rank += 1;
            row += 1;
        }
        rank
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.rank() == self.dim
    }

    /// True when every node `θ` has a partner `-θ` of equal weight.
    pub fn is_symmetric(&self) -> bool {
        self.directions.iter().zip(&self.weights).all(|(theta, w)| {
            self.directions.iter().zip(&self.weights).any(|(other, v)| {
                (w - v).abs() <= 1e-12 * w.abs()
                    && theta.iter().zip(other).all(|(a, b)| (a + b).abs() <= 1e-12)
            })
        })
    }

    /// `μ(S ∩ B(θ, ρ))` in the Euclidean metric of `R^d`.
    pub fn cap_mass(&self, center: &[f64], rho: f64) -> f64 {
        let rho2 = rho * rho;
        self.directions
            .iter()
            .zip(&self.weights)
            .filter(|(theta, _)| {
                theta.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < rho2
            })
            .map(|(_, w)| w)
            .sum()
    }
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Nodes, per-node cell measure and spacing for an angular rule.
fn angular_nodes(dim: usize, rule: AngularRule, n: usize) -> Result<(Vec<Vec<f64>>, f64, f64)> {
    use std::f64::consts::PI;
    match (dim, rule) {
        (1, AngularRule::Sphere) => Ok((vec![vec![1.0], vec![-1.0]], 1.0, 2.0)),
        (1, AngularRule::GreatCircle) => Err(Error::InvalidModel(
            "a great circle needs d >= 2".into(),
        )),
        (_, AngularRule::GreatCircle) | (2, AngularRule::Sphere) => {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidModel(format!(
                    "circle rules need an even node count >= 4, got {n}"
                )));
            }
            let h = 2.0 * PI / n as f64;
            let pts = (0..n)
                .map(|k| {
                    let a = k as f64 * h;
                    let mut v = vec![0.0; dim];
                    v[0] = a.cos();
                    v[1] = a.sin();
                    v
                })
                .collect();
            Ok((pts, h, h))
        }
        (3, AngularRule::Sphere) => {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidModel(format!(
                    "sphere rules need an even node count >= 8, got {n}"
                )));
            }
            // Fibonacci points on the upper hemisphere, mirrored so the rule is antipodally symmetric.
            let half = n / 2;
            let golden = PI * (3.0 - 5f64.sqrt());
            let mut pts = Vec::with_capacity(n);
            for k in 0..half {
                let z = 1.0 - (k as f64 + 0.5) / half as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * k as f64;
                pts.push(vec![r * a.cos(), r * a.sin(), z]);
            }
            let mirrored: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| -x).collect()).collect();
            pts.extend(mirrored);
            let cell = 4.0 * PI / n as f64;
            Ok((pts, cell, cell.sqrt()))
        }
        _ => Err(Error::InvalidModel(format!("unsupported dimension {dim}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_unit_directions_and_bad_weights() {
        assert!(SpectralMeasure::atomic(vec![vec![1.0, 1e-5]], vec![1.0]).is_err());
        assert!(SpectralMeasure::atomic(vec![vec![1.0]], vec![0.0]).is_err());
        assert!(SpectralMeasure::atomic(vec![], vec![]).is_err());
    }

    #[test]
    fn uniform_masses_match_surface_area() {
        let pi = std::f64::consts::PI;
        assert!((SpectralMeasure::uniform(1, 0).unwrap().total_mass() - 2.0).abs() < 1e-15);
        assert!((SpectralMeasure::uniform(2, 64).unwrap().total_mass() - 2.0 * pi).abs() < 1e-12);
        assert!((SpectralMeasure::uniform(3, 400).unwrap().total_mass() - 4.0 * pi).abs() < 1e-12);
    }

    #[test]
    fn rank_detects_degenerate_support() {
        let line = SpectralMeasure::atomic(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(line.rank(), 1);
        let circle = SpectralMeasure::density(3, AngularDensity::uniform(), AngularRule::GreatCircle, 32).unwrap();
        assert_eq!(circle.rank(), 2);
        assert!(SpectralMeasure::uniform(3, 64).unwrap().is_nondegenerate());
    }

    #[test]
    fn symmetric_rules_have_zero_mean() {
        for mu in [
            SpectralMeasure::uniform(2, 30).unwrap(),
            SpectralMeasure::uniform(3, 100).unwrap(),
        ] {
            assert!(mu.is_symmetric());
            assert!(mu.mean_direction().iter().all(|m| m.abs() < 1e-12));
        }
    }

    proptest! {
        #[test]
        fn normalized_atoms_are_unit_and_mass_is_weight_sum(
            raw in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.01f64..10.0), 1..12)
        ) {
            prop_assume!(raw.iter().all(|(x, y, _)| x.hypot(*y) > 1e-3));
            let dirs = raw.iter().map(|(x, y, _)| vec![*x, *y]).collect();
            let weights: Vec<f64> = raw.iter().map(|r| r.2).collect();
            let mu = SpectralMeasure::atomic_normalized(dirs, weights.clone()).unwrap();
            for theta in mu.directions() {
                prop_assert!((theta[0].hypot(theta[1]) - 1.0).abs() <= 1e-12);
            }
            let sum: f64 = weights.iter().sum();
            prop_assert!((mu.total_mass() - sum).abs() <= 1e-12 * sum);
            prop_assert!(mu.cap_mass(&[1.0, 0.0], 2.5) <= mu.total_mass() * (1.0 + 1e-12));
        }
    }
}
