//! Increment sampling: `P_t = P̃ʳ_t * P̄ʳ_t * δ_{t b_r}`.
//!
//! Chunk `c` of a batch (samples `c·CHUNK .. (c+1)·CHUNK`) draws from
//! `ChaCha8Rng::seed_from_u64(seed)` with stream number `c`, so a batch depends
//! only on the seed and the configuration, never on the worker count.

use std::sync::OnceLock;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::model::LevyModel;
use crate::registry::Registry;

pub const CHUNK: usize = 4096;

/// Below this acceptance rate the power-law envelope is considered useless.
pub const MIN_ACCEPTANCE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    /// Large/small split radius; `None` means `h(t)`.
    pub threshold: Option<f64>,
    pub scheme: String,
    /// Inner cutoff for the `discard` scheme.
    pub rho: Option<f64>,
    pub seed: u64,
    pub n: usize,
}

impl SimConfig {
    pub fn new(scheme: &str, seed: u64, n: usize) -> Self {
        Self {
            threshold: None,
            scheme: scheme.to_string(),
            rho: None,
            seed,
            n,
        }
    }

    pub fn with_threshold(mut self, r: f64) -> Self {
        self.threshold = Some(r);
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = Some(rho);
        self
    }

    fn resolve(&self, model: &LevyModel, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Precondition(format!("t must be > 0, got {t}")));
        }
        if self.n == 0 {
            return Err(Error::Precondition("sample count must be >= 1".into()));
        }
        let r = self.threshold.unwrap_or_else(|| model.h(t));
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Precondition(format!("threshold must be > 0, got {r}")));
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho < r) {
                return Err(Error::Precondition(format!("need 0 < rho < r, got rho {rho}, r {r}")));
            }
        }
        Ok(r)
    }
}

/// Error proxy attached to a small-jump scheme.
#[derive(Debug, Clone, Serialize)]
pub struct SchemeReport {
    pub scheme: String,
    pub rho: Option<f64>,
    /// `discard`: `t ∫_{|y|<ρ} |y|² ν(dy)`; Gaussian: `t ∫_{|y|<r} |y|² ν(dy)`.
    pub variance: f64,
}

impl SchemeReport {
    /// Chebyshev bound on `P(|dropped part| ≥ δ)`.
    pub fn chebyshev_bound(&self, delta: f64) -> f64 {
        (self.variance / (delta * delta)).min(1.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleBatch {
    pub t: f64,
    pub dim: usize,
    /// Row-major `n × d`.
    pub increments: Vec<f64>,
    pub large_jump_counts: Vec<u32>,
    pub threshold: f64,
    pub config: SimConfig,
    pub scheme: Option<SchemeReport>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.large_jump_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.large_jump_counts.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.increments[i * self.dim..(i + 1) * self.dim]
    }

    /// The `axis`-th coordinate of every sample.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        self.increments.iter().skip(axis).step_by(self.dim).copied().collect()
    }

    pub fn mean_count(&self) -> f64 {
        self.large_jump_counts.iter().map(|&k| k as f64).sum::<f64>() / self.len() as f64
    }
}

/// Jumps of `ν` restricted to the shell `lo ≤ |y| < hi`, normalized.
#[derive(Debug, Clone)]
struct ShellSampler {
    alpha: f64,
    lo: f64,
    hi: f64,
    ln_profile_lo: f64,
    rate: f64,
    directions: Vec<Vec<f64>>,
    index: WeightedIndex<f64>,
    q: std::sync::Arc<dyn crate::profile::ProfileFn>,
    phi: std::sync::Arc<dyn crate::profile::ProfileFn>,
}

impl ShellSampler {
    /// `rate` is `ν({lo ≤ |y| < hi})`.
    fn new(model: &LevyModel, lo: f64, hi: f64) -> Result<Self> {
        let law = model.radial();
        let alpha = law.alpha();
        let mass = law.moment(0.0, lo, hi)?;
        let ln_profile_lo = law.profile(lo).ln();
        // ∫_lo^hi s^{-1-α} ds · q(lo)φ(lo)
        let envelope = (lo.powf(-alpha) - if hi.is_finite() { hi.powf(-alpha) } else { 0.0 }) / alpha
            * ln_profile_lo.exp();
        let acceptance = mass / envelope;
        if !(acceptance >= MIN_ACCEPTANCE) {
            return Err(Error::Numerical(format!(
                "radial rejection sampler on [{lo}, {hi}) accepts only {acceptance:.2e} of proposals; \
                 the profile decays too far below the power-law envelope"
            )));
        }
        let mu = model.mu();
        let index = WeightedIndex::new(mu.weights().iter().copied())
            .map_err(|e| Error::InvalidModel(format!("spectral weights: {e}")))?;
        Ok(Self {
            alpha,
            lo,
            hi,
            ln_profile_lo,
            rate: mass * mu.total_mass(),
            directions: mu.directions().to_vec(),
            index,
            q: law.q().clone(),
            phi: law.phi().clone(),
        })
    }

    fn radius<R: Rng>(&self, rng: &mut R) -> f64 {
        let a = self.lo.powf(-self.alpha);
        let b = if self.hi.is_finite() { self.hi.powf(-self.alpha) } else { 0.0 };
        loop {
            let u: f64 = rng.random();
            let s = (a - u * (a - b)).powf(-1.0 / self.alpha);
            if !(s >= self.lo && s < self.hi) {
                continue;
            }
            let ln_accept = self.q.ln_value(s) + self.phi.ln_value(s) - self.ln_profile_lo;
            let v: f64 = rng.random();
            if v.ln() <= ln_accept {
                return s;
            }
        }
    }

    /// Adds `count` jumps to `out`.
    fn add_jumps<R: Rng>(&self, rng: &mut R, count: u64, out: &mut [f64]) {
        for _ in 0..count {
            let s = self.radius(rng);
            let theta = &self.directions[self.index.sample(rng)];
            for (o, th) in out.iter_mut().zip(theta) {
                *o += s * th;
            }
        }
    }

    fn count<R: Rng>(&self, rng: &mut R, t: f64) -> u64 {
        let lambda = t * self.rate;
        if lambda <= 0.0 {
            return 0;
        }
        let k: f64 = Poisson::new(lambda).expect("positive finite rate").sample(rng);
        k as u64
    }
}

/// Sampler for the part of the increment made of jumps shorter than `r`, compensated.
pub trait SmallJumps: Send + Sync {
    fn report(&self) -> SchemeReport;
    fn add(&self, rng: &mut ChaCha8Rng, out: &mut [f64]);
}

pub struct SchemeInputs<'a> {
    pub model: &'a LevyModel,
    pub t: f64,
    pub r: f64,
    pub rho: Option<f64>,
}

pub type SchemeFactory = fn(&SchemeInputs) -> Result<Box<dyn SmallJumps>>;

struct Discard {
    t: f64,
    shell: ShellSampler,
    compensator: Vec<f64>,
    report: SchemeReport,
}

impl SmallJumps for Discard {
    fn report(&self) -> SchemeReport {
        self.report.clone()
    }

    fn add(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let k = self.shell.count(rng, self.t);
        self.shell.add_jumps(rng, k, out);
        for (o, c) in out.iter_mut().zip(&self.compensator) {
            *o -= c;
        }
    }
}

struct MomentMatchedNormal {
    /// Lower Cholesky factor of `t ∫_{|y|<r} y yᵀ ν(dy)`.
    chol: Vec<f64>,
    dim: usize,
    report: SchemeReport,
}

impl SmallJumps for MomentMatchedNormal {
    fn report(&self) -> SchemeReport {
        self.report.clone()
    }

    fn add(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let d = self.dim;
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..d {
            out[i] += (0..=i).map(|j| self.chol[i * d + j] * z[j]).sum::<f64>();
        }
    }
}

/// Cholesky factor of a symmetric positive semidefinite matrix (zero pivots allowed).
pub fn cholesky(a: &[f64], d: usize) -> Vec<f64> {
    let mut l = vec![0.0; d * d];
    let scale = (0..d).map(|i| a[i * d + i].abs()).fold(0.0, f64::max);
    for i in 0..d {
        for j in 0..=i {
            let s = a[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            if i == j {
                l[i * d + i] = if s > 1e-14 * scale { s.sqrt() } else { 0.0 };
            } else if l[j * d + j] > 0.0 {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    l
}

pub fn schemes() -> &'static Registry<SchemeFactory> {
    static REGISTRY: OnceLock<Registry<SchemeFactory>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<SchemeFactory> = Registry::new("small-jump scheme");
        reg.register("discard", |inp| {
            let rho = inp.rho.ok_or_else(|| {
                Error::Precondition("the discard scheme needs an inner cutoff rho".into())
            })?;
            let model = inp.model;
            let law = model.radial();
            let shell = ShellSampler::new(model, rho, inp.r)?;
            let radial1 = law.moment(1.0, rho, inp.r)?;
            let compensator = model.mu().mean_direction().iter().map(|m| inp.t * m * radial1).collect();
            let variance = inp.t * model.mu().total_mass() * law.moment(2.0, 0.0, rho)?;
            Ok(Box::new(Discard {
                t: inp.t,
                shell,
                compensator,
                report: SchemeReport {
                    scheme: "discard".into(),
                    rho: Some(rho),
                    variance,
                },
            }))
        })
        .register("moment-matched-normal", |inp| {
            let m = inp.model.truncation_moments(0.0, inp.r)?;
            let d = inp.model.dim();
            let cov: Vec<f64> = m.covariance.iter().map(|c| inp.t * c).collect();
            Ok(Box::new(MomentMatchedNormal {
                chol: cholesky(&cov, d),
                dim: d,
                report: SchemeReport {
                    scheme: "moment-matched-normal".into(),
                    rho: None,
                    variance: inp.t * m.second_moment,
                },
            }))
        })
        .alias("gaussian", "moment-matched-normal");
        reg
    })
}

fn chunked<F>(n: usize, dim: usize, seed: u64, fill: F) -> (Vec<f64>, Vec<u32>)
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> u32 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<(Vec<f64>, Vec<u32>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            let mut xs = vec![0.0; len * dim];
            let mut counts = Vec::with_capacity(len);
            for row in xs.chunks_mut(dim) {
                counts.push(fill(&mut rng, row));
            }
            (xs, counts)
        })
        .collect();
    let mut xs = Vec::with_capacity(n * dim);
    let mut counts = Vec::with_capacity(n);
    for (x, c) in parts {
        xs.extend(x);
        counts.extend(c);
    }
    (xs, counts)
}

/// `n` draws from the compound Poisson exponential of `ν̄_r` at time `t`.
pub fn sample_large_jumps(model: &LevyModel, r: f64, t: f64, n: usize, seed: u64) -> Result<SampleBatch> {
    let config = SimConfig::new("none", seed, n).with_threshold(r);
    config.resolve(model, t)?;
    let shell = ShellSampler::new(model, r, f64::INFINITY)?;
    if !(shell.rate > 0.0 && shell.rate.is_finite()) {
        return Err(Error::Precondition(format!("large-jump mass must be finite and > 0, got {}", shell.rate)));
    }
    let (increments, large_jump_counts) = chunked(n, model.dim(), seed, |rng, row| {
        let k = shell.count(rng, t);
        shell.add_jumps(rng, k, row);
        k as u32
    });
    Ok(SampleBatch {
        t,
        dim: model.dim(),
        increments,
        large_jump_counts,
        threshold: r,
        config,
        scheme: None,
    })
}

/// Only the compensated small-jump part (`|y| < r`) under the configured scheme.
pub fn sample_small_jumps(model: &LevyModel, t: f64, config: &SimConfig) -> Result<SampleBatch> {
    let r = config.resolve(model, t)?;
    let small = (schemes().get(&config.scheme)?)(&SchemeInputs {
        model,
        t,
        r,
        rho: config.rho,
    })?;
    let (increments, large_jump_counts) = chunked(config.n, model.dim(), config.seed, |rng, row| {
        small.add(rng, row);
        0
    });
    Ok(SampleBatch {
        t,
        dim: model.dim(),
        increments,
        large_jump_counts,
        threshold: r,
        config: config.clone(),
        scheme: Some(small.report()),
    })
}

/// Full increments: large jumps + small-jump surrogate + `t b_r`.
pub fn sample_increment(model: &LevyModel, t: f64, config: &SimConfig) -> Result<SampleBatch> {
    let r = config.resolve(model, t)?;
    let small = (schemes().get(&config.scheme)?)(&SchemeInputs {
        model,
        t,
        r,
        rho: config.rho,
    })?;
    let large = ShellSampler::new(model, r, f64::INFINITY)?;
    let shift: Vec<f64> = model.centering_shift(r)?.iter().map(|b| t * b).collect();
    let (increments, large_jump_counts) = chunked(config.n, model.dim(), config.seed, |rng, row| {
        let k = large.count(rng, t);
        large.add_jumps(rng, k, row);
        small.add(rng, row);
        for (x, s) in row.iter_mut().zip(&shift) {
            *x += s;
        }
        k as u32
    });
    Ok(SampleBatch {
        t,
        dim: model.dim(),
        increments,
        large_jump_counts,
        threshold: r,
        config: config.clone(),
        scheme: Some(small.report()),
    })
}

/// Equal-width histogram on `[lo, hi)` with the mass outside kept separately,
/// so `Σ probability + below + above = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
    pub total: u64,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins < 10 {
            return Err(Error::Precondition(format!("need at least 10 bins, got {bins}")));
        }
        if !(hi > lo) || values.is_empty() {
            return Err(Error::Precondition("histogram needs lo < hi and at least one value".into()));
        }
        let width = (hi - lo) / bins as f64;
        let mut h = Self {
            lo,
            hi,
            counts: vec![0; bins],
            below: 0,
            above: 0,
            total: values.len() as u64,
        };
        for &v in values {
            if v < lo {
                h.below += 1;
            } else if v >= hi {
                // The top edge belongs to the last bin.
                if v == hi {
                    h.counts[bins - 1] += 1;
                } else {
                    h.above += 1;
                }
            } else {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                h.counts[b] += 1;
            }
        }
        Ok(h)
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn edge(&self, b: usize) -> f64 {
        self.lo + b as f64 * self.width()
    }

    pub fn probability(&self, b: usize) -> f64 {
        self.counts[b] as f64 / self.total as f64
    }

    pub fn density(&self) -> Vec<f64> {
        let w = self.width();
        (0..self.counts.len()).map(|b| self.probability(b) / w).collect()
    }

    pub fn total_mass(&self) -> f64 {
        (self.counts.iter().sum::<u64>() + self.below + self.above) as f64 / self.total as f64
    }

    /// `Σ_b |p̂_b − P_b|` plus the two outside cells, where `P` comes from `cdf`.
    pub fn l1_to_cdf<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let n = self.total as f64;
        let mut prev = cdf(self.lo);
        let mut l1 = (self.below as f64 / n - prev).abs();
        for b in 0..self.counts.len() {
            let next = cdf(self.edge(b + 1));
            l1 += (self.probability(b) - (next - prev)).abs();
            prev = next;
        }
        l1 + (self.above as f64 / n - (1.0 - prev)).abs()
    }
}

/// Histogram of a one-dimensional batch over the sample range.
pub fn empirical_density(batch: &SampleBatch, bins: usize) -> Result<Histogram> {
    if batch.dim != 1 {
        return Err(Error::Precondition(format!(
            "empirical_density works on 1D batches, got d = {}; use Histogram::new on a coordinate",
            batch.dim
        )));
    }
    let lo = batch.increments.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = batch.increments.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = if hi > lo { hi } else { lo + 1.0 };
    Histogram::new(&batch.increments, bins, lo, hi)
}

/// Distribution function of a 1D lattice density, linear between cell edges.
pub fn grid_cdf(grid: &DensityGrid) -> Result<impl Fn(f64) -> f64 + '_> {
    if grid.dim != 1 {
        return Err(Error::Precondition("grid_cdf needs a 1D density".into()));
    }
    let dx = grid.dx();
    let mut cum = Vec::with_capacity(grid.values.len() + 1);
    let mut acc = 0.0;
    cum.push(0.0);
    for &p in &grid.values {
        acc += p.max(0.0) * dx;
        cum.push(acc);
    }
    for c in cum.iter_mut() {
        *c /= acc;
    }
    let left = grid.coord(0) - 0.5 * dx;
    Ok(move |x: f64| {
        let pos = (x - left) / dx;
        if pos <= 0.0 {
            return 0.0;
        }
        let k = pos.floor() as usize;
        if k + 1 >= cum.len() {
            return 1.0;
        }
        let f = pos - k as f64;
        cum[k] + f * (cum[k + 1] - cum[k])
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    }
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{named_measure, reference, make_stable};
    use std::f64::consts::PI;

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn poisson_count_mean() {
        let m = reference::tempered();
        let (r, t) = (0.2, 1.5);
        let batch = sample_large_jumps(&m, r, t, 20_000, 11).unwrap();
        let expected = t * m.large_jump_mass(r).unwrap();
        let counts: Vec<f64> = batch.large_jump_counts.iter().map(|&k| k as f64).collect();
        let (mean, se) = mean_and_se(&counts);
        assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected} (se {se})");
    }

    #[test]
    fn one_sided_jumps_are_positive() {
        let m = make_stable(0.7, named_measure("positive", 1, 1.0).unwrap()).unwrap();
        let batch = sample_large_jumps(&m, 0.5, 1.0, 5000, 3).unwrap();
        for (x, &k) in batch.increments.iter().zip(&batch.large_jump_counts) {
            assert!(if k == 0 { *x == 0.0 } else { *x >= 0.5 * k as f64 });
        }
    }

    #[test]
    fn batches_are_reproducible_and_thread_independent() {
        let m = reference::two_atom_stable();
        let cfg = SimConfig::new("gaussian", 99, 3 * CHUNK + 17);
        let a = sample_increment(&m, 0.5, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| sample_increment(&m, 0.5, &cfg).unwrap());
        assert_eq!(a.increments, b.increments);
        assert_eq!(a.large_jump_counts, b.large_jump_counts);
        let c = sample_increment(&m, 0.5, &SimConfig::new("gaussian", 100, 3 * CHUNK + 17)).unwrap();
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn symmetric_mean_is_zero() {
        let m = reference::tempered();
        let batch = sample_increment(&m, 1.0, &SimConfig::new("gaussian", 5, 40_000)).unwrap();
        let (mean, se) = mean_and_se(&batch.increments);
        assert!(mean.abs() < 3.0 * se, "{mean} se {se}");
    }

    #[test]
    fn shell_variance_identity() {
        // E|X|² = t ∫ |y|² ν_{ρ,r}(dy) for the compensated shell part.
        let m = reference::layered();
        let (t, r, rho) = (0.7, 1.0, 0.05);
        let cfg = SimConfig::new("discard", 8, 40_000).with_threshold(r).with_rho(rho);
        let batch = sample_small_jumps(&m, t, &cfg).unwrap();
        let sq: Vec<f64> = batch.increments.iter().map(|x| x * x).collect();
        let (mean, se) = mean_and_se(&sq);
        let expected = t * m.truncation_moments(rho, r).unwrap().second_moment;
        assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected} (se {se})");
        let report = batch.scheme.unwrap();
        // s = u²: ∫_0^ρ s^{1/2}(1+s)^{-5/2} ds = ∫_0^{√ρ} 2u²(1+u²)^{-5/2} du, midpoint rule.
        let k = 4000;
        let du = rho.sqrt() / k as f64;
        let radial: f64 = (0..k)
            .map(|i| {
                let u = (i as f64 + 0.5) * du;
                2.0 * u * u * (1.0 + u * u).powf(-2.5) * du
            })
            .sum();
        let dropped = t * 2.0 * radial;
        assert!((report.variance - dropped).abs() < 1e-6 * dropped, "{report:?}");
    }

    #[test]
    fn discard_needs_rho_and_rho_below_r() {
        let m = reference::cauchy();
        assert!(matches!(
            sample_increment(&m, 1.0, &SimConfig::new("discard", 1, 10)),
            Err(Error::Precondition(_))
        ));
        let bad = SimConfig::new("discard", 1, 10).with_threshold(0.5).with_rho(0.5);
        assert!(sample_increment(&m, 1.0, &bad).is_err());
        assert!(matches!(
            sample_increment(&m, 1.0, &SimConfig::new("exact", 1, 10)),
            Err(Error::Unknown { .. })
        ));
    }

    #[test]
    fn hopeless_envelope_is_rejected() {
        let m = reference::tempered();
        assert!(matches!(sample_large_jumps(&m, 5000.0, 1.0, 10, 1), Err(Error::Numerical(_))));
    }

    #[test]
    fn histogram_mass_is_one_under_refinement() {
        let m = reference::tempered();
        let batch = sample_increment(&m, 1.0, &SimConfig::new("gaussian", 2, 5000)).unwrap();
        for bins in [10, 37, 400] {
            let h = empirical_density(&batch, bins).unwrap();
            let integral: f64 = h.density().iter().sum::<f64>() * h.width();
            assert!((integral - 1.0).abs() < 1e-12);
            assert_eq!(h.total_mass(), 1.0);
        }
        assert!(empirical_density(&batch, 9).is_err());
    }

    #[test]
    fn cauchy_histogram_matches_closed_form() {
        let m = reference::cauchy();
        let batch = sample_increment(&m, 1.0, &SimConfig::new("gaussian", 4, 200_000).with_threshold(0.05)).unwrap();
        let h = Histogram::new(&batch.increments, 100, -20.0, 20.0).unwrap();
        let l1 = h.l1_to_cdf(|x| 0.5 + x.atan() / PI);
        assert!(l1 < 0.015, "{l1}");
    }

    #[test]
    fn ks_detects_shift_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        let c: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.01);
        assert!(ks_two_sample(&a, &c).p_value < 1e-4);
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let l = cholesky(&a, 3);
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((v - a[i * 3 + j]).abs() < 1e-12);
            }
        }
    }
}
