//! Piecewise Chebyshev interpolation on equal-width segments, evaluated in
//! barycentric form. Used for the tabulated exponent and tabulated kernels,
//! always in a logarithmic variable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quad::QuadValue;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseChebyshev<T> {
    lo: f64,
    width: f64,
    degree: usize,
    /// Values at the Chebyshev points of the second kind, segment by segment.
    segments: Vec<Vec<T>>,
}

fn nodes(degree: usize) -> Vec<f64> {
    (0..=degree)
        .map(|j| (std::f64::consts::PI * j as f64 / degree as f64).cos())
        .collect()
}

impl<T: QuadValue + Send + Sync> PiecewiseChebyshev<T> {
    /// Samples `f` on `[lo, hi]` split into segments no wider than `max_width`.
    pub fn build<F, E>(f: F, lo: f64, hi: f64, max_width: f64, degree: usize) -> Result<Self, E>
    where
        F: Fn(f64) -> Result<T, E> + Sync,
        E: Send,
    {
        assert!(hi > lo && degree >= 2);
        let count = ((hi - lo) / max_width).ceil().max(1.0) as usize;
        let width = (hi - lo) / count as f64;
        let xs = nodes(degree);
        let segments = (0..count)
            .into_par_iter()
            .map(|k| {
                let a = lo + k as f64 * width;
                xs.iter()
                    .map(|&x| f(a + 0.5 * width * (x + 1.0)))
                    .collect::<Result<Vec<T>, E>>()
            })
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Self {
            lo,
            width,
            degree,
            segments,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.width * self.segments.len() as f64
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.lo && u <= self.hi()
    }

    pub fn eval(&self, u: f64) -> T {
        let pos = ((u - self.lo) / self.width).max(0.0);
        let k = (pos.floor() as usize).min(self.segments.len() - 1);
        let x = 2.0 * (u - self.lo - k as f64 * self.width) / self.width - 1.0;
        let values = &self.segments[k];
        let n = self.degree;
        let mut num = T::default();
        let mut den = 0.0;
        for (j, &fj) in values.iter().enumerate() {
            let xj = (std::f64::consts::PI * j as f64 / n as f64).cos();
            let diff = x - xj;
            if diff.abs() < 1e-15 {
                return fj;
            }
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                w *= 0.5;
            }
            let c = w / diff;
            num = num + fj * c;
            den += c;
        }
        num * (1.0 / den)
    }
}
