//! Adaptive Gauss–Kronrod quadrature and the semi-infinite / singular-endpoint
//! schemes built on top of it.
//!
//! Every radial integral in the crate goes through one of four entry points:
//!
//! * [`adaptive`] on a finite interval,
//! * [`to_zero`] for `∫_0^a`, summing octaves `[a 2^{-j-1}, a 2^{-j}]`
//!   (the `s = e^u` substitution with unit panels in `u`),
//! * [`to_infinity`] for `∫_a^∞`, summing octaves upward,
//! * [`oscillatory_tail`] for `∫_a^∞ e^{iks} f(s) ds`, summing half periods
//!   and extrapolating the partial sums with Wynn's epsilon algorithm.
//!
//! The octave sums finish with a geometric tail correction, which is exact
//! for pure power laws and converges fast otherwise.

use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalar types the integrators can accumulate.
pub trait QuadValue:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn magnitude(self) -> f64;
}

impl QuadValue for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of interval bisections per adaptive call.
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_subdivisions: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

impl<T: QuadValue> Estimate<T> {
    fn zero() -> Self {
        Self {
            value: T::default(),
            error: 0.0,
            evaluations: 0,
        }
    }

    fn absorb(&mut self, other: Estimate<T>) {
        self.value = self.value + other.value;
        self.error += other.error;
        self.evaluations += other.evaluations;
    }
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, ..., 9).
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// One 21-point Gauss–Kronrod panel with QUADPACK-style error rescaling.
pub fn gk21<T, F>(f: &mut F, a: f64, b: f64) -> Estimate<T>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut kronrod = f_center * WGK[10];
    let mut gauss = T::default();
    let mut res_abs = WGK[10] * f_center.magnitude();
    let mut fv1 = [T::default(); 10];
    let mut fv2 = [T::default(); 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        let sum = f1 + f2;
        kronrod = kronrod + sum * WGK[j];
        res_abs += WGK[j] * (f1.magnitude() + f2.magnitude());
        if j % 2 == 1 {
            gauss = gauss + sum * WG[j / 2];
        }
    }
    let mean = kronrod * 0.5;
    let mut res_asc = WGK[10] * (f_center - mean).magnitude();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).magnitude() + (fv2[j] - mean).magnitude());
    }
    let scale = half.abs();
    let mut err = ((kronrod - gauss) * half).magnitude();
    let res_abs = res_abs * scale;
    let res_asc = res_asc * scale;
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Estimate {
        value: kronrod * half,
        error: err,
        evaluations: 21,
    }
}

struct Panel<T> {
    a: f64,
    b: f64,
    est: Estimate<T>,
}

impl<T> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl<T> Eq for Panel<T> {}
impl<T> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

/// Globally adaptive bisection on `[a, b]`.
pub fn adaptive<T, F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    if a == b {
        return Ok(Estimate::zero());
    }
    let first = gk21(&mut f, a, b);
    let mut evaluations = first.evaluations;
    let mut heap = BinaryHeap::new();
    let mut total = first.value;
    let mut total_err = first.error;
    heap.push(Panel { a, b, est: first });
    let mut splits = 0;
    while total_err > opts.target(total.magnitude()) {
        if splits >= opts.max_subdivisions {
            return Err(Error::Quadrature {
                what: format!("adaptive rule on [{a:e}, {b:e}]"),
                residual: total_err,
            });
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval collapsed to adjacent floats; accept what we have.
            heap.push(worst);
            break;
        }
        let left = gk21(&mut f, worst.a, mid);
        let right = gk21(&mut f, mid, worst.b);
        evaluations += 42;
        total = total - worst.est.value + left.value + right.value;
        total_err = total_err - worst.est.error + left.error + right.error;
        heap.push(Panel { a: worst.a, b: mid, est: left });
        heap.push(Panel { a: mid, b: worst.b, est: right });
        splits += 1;
    }
    // Re-sum in endpoint order so the result does not depend on heap history.
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut value = T::default();
    let mut error = 0.0;
    for p in &panels {
        value = value + p.est.value;
        error += p.est.error;
    }
    Ok(Estimate {
        value,
        error,
        evaluations,
    })
}

const MAX_OCTAVES: usize = 1000;

/// Sums geometric octave panels, stopping once the remainder predicted by
/// the last panel ratio is below tolerance.
fn octave_sum<T, F>(
    mut f: F,
    start: f64,
    upward: bool,
    opts: &QuadOptions,
    what: &str,
) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let mut acc = Estimate::zero();
    let panel_opts = QuadOptions {
        abs_tol: opts.abs_tol / 64.0,
        ..*opts
    };
    let mut prev_mag = f64::NAN;
    let mut prev_ratio = f64::NAN;
    let mut lo = start;
    for j in 0..MAX_OCTAVES {
        let (a, b) = if upward { (lo, 2.0 * lo) } else { (0.5 * lo, lo) };
        if !b.is_finite() || a <= 0.0 {
            return Ok(acc);
        }
        let panel = adaptive(&mut f, a, b, &panel_opts)?;
        let mag = panel.value.magnitude();
        let value = panel.value;
        acc.absorb(panel);
        lo = if upward { b } else { a };
        if mag == 0.0 {
            if j >= 2 {
                return Ok(acc);
            }
            prev_mag = mag;
            continue;
        }
        let ratio = mag / prev_mag;
        if j >= 3 && ratio.is_finite() && ratio < 1.0 {
            let tail = value * (ratio / (1.0 - ratio));
            let drift = (ratio - prev_ratio).abs();
            let tail_err = mag * drift / ((1.0 - ratio) * (1.0 - ratio)) + 1e-3 * tail.magnitude();
            if tail_err <= 0.1 * opts.target(acc.value.magnitude()) {
                acc.value = acc.value + tail;
                acc.error += tail_err;
                return Ok(acc);
            }
        }
        prev_ratio = ratio;
        prev_mag = mag;
    }
    Err(Error::Quadrature {
        what: format!("{what}: octave sum did not settle (integral may diverge)"),
        residual: f64::INFINITY,
    })
}

/// `∫_0^a f(s) ds` for integrands with an integrable power singularity at 0.
pub fn to_zero<T, F>(f: F, a: f64, opts: &QuadOptions) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    if a <= 0.0 {
        return Ok(Estimate::zero());
    }
    octave_sum(f, a, false, opts, "integral to 0")
}

/// `∫_a^∞ f(s) ds` for integrands decaying at least like a power `s^{-1-ε}`.
pub fn to_infinity<T, F>(f: F, a: f64, opts: &QuadOptions) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    if a.is_infinite() {
        return Ok(Estimate::zero());
    }
    assert!(a > 0.0, "to_infinity needs a positive lower limit");
    octave_sum(f, a, true, opts, "integral to infinity")
}

/// `∫_lo^hi f(s) ds` with `0 ≤ lo ≤ hi ≤ ∞`, splitting into octaves when the
/// range spans several scales.
pub fn integrate_range<T, F>(mut f: F, lo: f64, hi: f64, opts: &QuadOptions) -> Result<Estimate<T>>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    if !(hi > lo) {
        return Ok(Estimate::zero());
    }
    let mut acc = Estimate::zero();
    let mut a = lo;
    if lo == 0.0 {
        let first = if hi.is_finite() { hi.min(1.0) } else { 1.0 };
        acc.absorb(to_zero(&mut f, first, opts)?);
        a = first;
    }
    if hi.is_infinite() {
        acc.absorb(to_infinity(&mut f, a, opts)?);
        return Ok(acc);
    }
    let panel_opts = QuadOptions {
        abs_tol: opts.abs_tol / 16.0,
        ..*opts
    };
    while a < hi {
        let b = if hi > 4.0 * a { 2.0 * a } else { hi };
        acc.absorb(adaptive(&mut f, a, b, &panel_opts)?);
        a = b;
    }
    Ok(acc)
}

/// Wynn's epsilon algorithm; returns the highest even-order estimate.
pub fn wynn_epsilon(seq: &[Complex64]) -> Complex64 {
    let n = seq.len();
    if n < 3 {
        return *seq.last().unwrap_or(&Complex64::default());
    }
    // prev = column k-1, cur = column k; column k has n - k entries.
    let mut prev = vec![Complex64::default(); n + 1];
    let mut cur: Vec<Complex64> = seq.to_vec();
    let mut best = seq[n - 1];
    let mut best_delta = f64::INFINITY;
    let mut last_even = seq[n - 1];
    for k in 1..n {
        let len = n - k;
        let mut next = Vec::with_capacity(len);
        for i in 0..len {
            let diff = cur[i + 1] - cur[i];
            if diff.norm() == 0.0 {
                return if k % 2 == 1 { cur[i + 1] } else { best };
            }
            next.push(prev[i + 1] + diff.inv());
        }
        prev = cur;
        cur = next;
        if k % 2 == 0 {
            let estimate = cur[len - 1];
            let delta = (estimate - last_even).norm();
            if delta < best_delta {
                best_delta = delta;
                best = estimate;
            }
            last_even = estimate;
        }
    }
    best
}

/// `∫_a^∞ e^{iks} f(s) ds` for `k > 0` and `f` eventually monotone, decaying.
pub fn oscillatory_tail<F>(mut f: F, k: f64, a: f64, opts: &QuadOptions) -> Result<Estimate<Complex64>>
where
    F: FnMut(f64) -> f64,
{
    assert!(k > 0.0 && a >= 0.0);
    let half_period = std::f64::consts::PI / k;
    let panel_opts = QuadOptions {
        abs_tol: opts.abs_tol / 64.0,
        ..*opts
    };
    let mut g = |s: f64| {
        let (sin, cos) = (k * s).sin_cos();
        Complex64::new(cos, sin) * f(s)
    };
    let mut partial = Vec::with_capacity(128);
    let mut sum = Complex64::default();
    let mut error = 0.0;
    let mut evaluations = 0;
    let mut last_extrapolated = Complex64::new(f64::NAN, f64::NAN);
    const MAX_PANELS: usize = 120;
    for n in 0..MAX_PANELS {
        let lo = a + n as f64 * half_period;
        let hi = lo + half_period;
        let panel = adaptive(&mut g, lo, hi, &panel_opts)?;
        evaluations += panel.evaluations;
        error += panel.error;
        sum += panel.value;
        partial.push(sum);
        let target = opts.target(sum.norm());
        if n >= 2 && panel.value.norm() < 1e-3 * target {
            return Ok(Estimate {
                value: sum,
                error: error + panel.value.norm(),
                evaluations,
            });
        }
        if n >= 8 && n % 2 == 0 {
            // Skip the first few panels: the sequence is only asymptotically alternating.
            let skip = (n / 4).min(6);
            let extrapolated = wynn_epsilon(&partial[skip..]);
            let delta = (extrapolated - last_extrapolated).norm();
            if delta <= target {
                return Ok(Estimate {
                    value: extrapolated,
                    error: error + delta,
                    evaluations,
                });
            }
            last_extrapolated = extrapolated;
        }
    }
    Err(Error::Quadrature {
        what: format!("oscillatory tail (k = {k:e}, a = {a:e})"),
        residual: (partial[MAX_PANELS - 1] - partial[MAX_PANELS - 2]).norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk21_is_exact_on_polynomials() {
        let est = gk21(&mut |x: f64| x.powi(7) - 3.0 * x * x, 0.0, 2.0);
        let exact = 2f64.powi(8) / 8.0 - 8.0;
        assert!((est.value - exact).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let opts = QuadOptions::default();
        let est = adaptive(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, &opts).unwrap();
        let exact = 2.0 * (1.0 / 1e-4f64.sqrt()) * (1.0 / 1e-4f64.sqrt()).atan();
        assert!((est.value - exact).abs() / exact < 1e-11, "{}", est.value - exact);
    }

    #[test]
    fn power_singularity_at_zero() {
        let opts = QuadOptions::default();
        for p in [-0.9, -0.5, 0.0, 0.7] {
            let est = to_zero(|s: f64| s.powf(p), 1.0, &opts).unwrap();
            let exact = 1.0 / (p + 1.0);
            assert!((est.value - exact).abs() < 1e-10, "p = {p}: {}", est.value);
        }
    }

    #[test]
    fn slowly_decaying_tail() {
        let opts = QuadOptions::default();
        for alpha in [0.1, 0.5, 1.5] {
            let est = to_infinity(|s: f64| s.powf(-1.0 - alpha), 2.0, &opts).unwrap();
            let exact = 2f64.powf(-alpha) / alpha;
            assert!((est.value - exact).abs() < 1e-10, "alpha = {alpha}");
        }
        let est = to_infinity(|s: f64| (-s).exp() / s, 1.0, &opts).unwrap();
        // E1(1)
        assert!((est.value - 0.219_383_934_395_520_3).abs() < 1e-12);
    }

    #[test]
    fn wynn_accelerates_alternating_series() {
        // ln 2 = 1 - 1/2 + 1/3 - ...
        let mut s = 0.0;
        let seq: Vec<Complex64> = (1..=20)
            .map(|n| {
                s += if n % 2 == 1 { 1.0 } else { -1.0 } / n as f64;
                Complex64::new(s, 0.0)
            })
            .collect();
        let est = wynn_epsilon(&seq);
        assert!((est.re - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn fourier_tail_of_power_law() {
        // ∫_1^∞ e^{is} s^{-2} ds = cos1 - sin1... use the identity
        // ∫_0^∞ (1 - cos u) u^{-2} du = π/2 split at 1.
        let opts = QuadOptions::default().with_abs_tol(1e-12);
        let tail = oscillatory_tail(|s: f64| s.powi(-2), 1.0, 1.0, &opts).unwrap();
        let inner = adaptive(
            |u: f64| 2.0 * (0.5 * u).sin().powi(2) / (u * u),
            0.0,
            1.0,
            &opts,
        )
        .unwrap();
        let outer = 1.0 - tail.value.re;
        assert!((inner.value + outer - std::f64::consts::FRAC_PI_2).abs() < 1e-11);
    }
}
