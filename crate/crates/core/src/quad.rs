//! Adaptive Gauss–Kronrod quadrature with helpers for heavy and oscillatory
//! tails on the half line.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, max_intervals: 4000 }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-13, 1e-12)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate { value: self.value + rhs.value, error: self.error + rhs.error }
    }
}

impl std::ops::Mul<f64> for Estimate {
    type Output = Estimate;
    fn mul(self, rhs: f64) -> Estimate {
        Estimate { value: self.value * rhs, error: self.error * rhs.abs() }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut resabs = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    let round_off = 50.0 * f64::EPSILON * resabs;
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(round_off);
    }
    if !value.is_finite() {
        error = f64::INFINITY;
    }
    Segment { a, b, value, error }
}

/// Global adaptive integration over the consecutive pieces delimited by
/// `points` (which must be sorted ascending).
pub(crate) fn integrate_pieces<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    tol: Tolerance,
) -> Estimate {
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(gk15(&mut f, w[0], w[1]));
        }
    }
    let budget = heap.len() + tol.max_intervals;
    let mut intervals = heap.len();
    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        let target = tol.abs.max(tol.rel * value.abs());
        if error <= target || intervals >= budget {
            return Estimate { value, error };
        }
        let Some(worst) = heap.pop() else {
            return Estimate { value, error };
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            heap.push(Segment { error: 0.0, ..worst });
            continue;
        }
        heap.push(gk15(&mut f, worst.a, mid));
        heap.push(gk15(&mut f, mid, worst.b));
        intervals += 1;
    }
}

#[cfg(test)]
pub(crate) fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Estimate {
    if a == b {
        return Estimate::default();
    }
    if a > b {
        return integrate_pieces(f, &[b, a], tol) * -1.0;
    }
    integrate_pieces(f, &[a, b], tol)
}

/// `∫_start^∞ f(x) dx` for an integrand decaying like `x^{-decay}` with
/// `decay > 1`. Uses `x = start · t^{-q}` with `q = 1/(decay − 1)`, which makes
/// the transformed integrand roughly constant near `t = 0`.
pub(crate) fn integrate_power_tail<F: FnMut(f64) -> f64>(
    mut f: F,
    start: f64,
    decay: f64,
    tol: Tolerance,
) -> Estimate {
    debug_assert!(start > 0.0 && decay > 1.0);
    let q = (1.0 / (decay - 1.0)).clamp(0.2, 20.0);
    let g = |t: f64| {
        let x = start * t.powf(-q);
        if !x.is_finite() {
            return 0.0;
        }
        let fx = f(x);
        if fx == 0.0 {
            0.0
        } else {
            fx * q * x / t
        }
    };
    integrate_pieces(g, &[0.0, 0.25, 1.0], tol)
}

/// `∫_start^∞ f(x) dx` for `f(x) = g(x)·cos(ωx + φ)` with `g` smooth and
/// slowly decaying. Half-period pieces are summed with Wynn's epsilon
/// algorithm.
pub(crate) fn integrate_oscillatory_tail<F: FnMut(f64) -> f64>(
    mut f: F,
    start: f64,
    omega: f64,
    tol: Tolerance,
) -> Estimate {
    const MAX_PIECES: usize = 400;
    let step = std::f64::consts::PI / omega.abs();
    let piece_tol = Tolerance { abs: tol.abs * 1e-2, ..tol };
    let mut partial = Vec::with_capacity(MAX_PIECES);
    let mut total = 0.0;
    let mut quad_error = 0.0;
    let mut last_estimate = f64::NAN;
    let mut stable_rounds = 0;
    for k in 0..MAX_PIECES {
        let a = start + k as f64 * step;
        let piece = integrate_pieces(&mut f, &[a, a + step], piece_tol);
        total += piece.value;
        quad_error += piece.error;
        partial.push(total);
        if piece.value.abs() < 1e-3 * tol.abs && k > 4 {
            return Estimate { value: total, error: quad_error + piece.value.abs() };
        }
        if partial.len() >= 8 {
            let window = &partial[partial.len().saturating_sub(40)..];
            let est = wynn_epsilon(window);
            let diff = (est - last_estimate).abs();
            let target = tol.abs.max(tol.rel * est.abs());
            if diff < 0.1 * target {
                stable_rounds += 1;
                if stable_rounds >= 3 {
                    return Estimate { value: est, error: quad_error + diff };
                }
            } else {
                stable_rounds = 0;
            }
            last_estimate = est;
        }
    }
    let est = wynn_epsilon(&partial[partial.len() - 40..]);
    Estimate { value: est, error: quad_error + (est - last_estimate).abs() }
}

/// Wynn's epsilon extrapolation of a sequence of partial sums.
pub(crate) fn wynn_epsilon(sums: &[f64]) -> f64 {
    let n = sums.len();
    if n < 3 {
        return *sums.last().unwrap_or(&0.0);
    }
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = sums.to_vec();
    let mut best = sums[n - 1];
    let mut col = 1usize;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for j in 0..cur.len() - 1 {
            let d = cur[j + 1] - cur[j];
            if d == 0.0 || !d.is_finite() {
                return best;
            }
            next.push(prev[j + 1] + 1.0 / d);
        }
        if col.is_multiple_of(2) {
            if let Some(&v) = next.last() {
                if v.is_finite() {
                    best = v;
                }
            }
        }
        prev = cur;
        cur = next;
        col += 1;
    }
    best
}
