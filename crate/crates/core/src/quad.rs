//! Adaptive Gauss–Kronrod quadrature and tail integration toward a boundary.
//!
//! Finite intervals use a globally adaptive G7/K15 scheme with QUADPACK-style
//! error scaling. Integrals out to an infinite or singular endpoint are summed
//! over geometrically growing (or shrinking) panels; the panel increments
//! decide convergence, divergence, or an indeterminate verdict.

use crate::ext::ExtReal;

#[allow(clippy::excessive_precision)]
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
#[allow(clippy::excessive_precision)]
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
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances for finite-interval quadrature.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-300, rel_tol: 1e-12, max_subdivisions: 400 }
    }
}

/// Result of a vector-valued quadrature.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub converged: bool,
}

/// One G7/K15 panel for a vector-valued integrand.
fn gk15<const N: usize, F: FnMut(f64) -> [f64; N]>(f: &mut F, a: f64, b: f64) -> ([f64; N], [f64; N]) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    let mut abs = [0.0; N];
    let mut fv1 = [[0.0; N]; 7];
    let mut fv2 = [[0.0; N]; 7];
    for k in 0..N {
        kron[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
        abs[k] = (WGK[7] * fc[k]).abs();
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        for k in 0..N {
            kron[k] += WGK[j] * (f1[k] + f2[k]);
            abs[k] += WGK[j] * (f1[k].abs() + f2[k].abs());
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * (f1[k] + f2[k]);
            }
        }
    }
    let mut err = [0.0; N];
    for k in 0..N {
        let mean = 0.5 * kron[k];
        let mut asc = WGK[7] * (fc[k] - mean).abs();
        for j in 0..7 {
            asc += WGK[j] * ((fv1[j][k] - mean).abs() + (fv2[j][k] - mean).abs());
        }
        let asc = asc * h.abs();
        let resabs = abs[k] * h.abs();
        let mut e = ((kron[k] - gauss[k]) * h).abs();
        if asc != 0.0 && e != 0.0 {
            e = asc * (200.0 * e / asc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            e = e.max(50.0 * f64::EPSILON * resabs);
        }
        err[k] = e;
        kron[k] *= h;
    }
    (kron, err)
}

/// Adaptive integral of a vector-valued integrand over `[a, b]` (either order).
pub fn integrate_vec<const N: usize, F: FnMut(f64) -> [f64; N]>(
    mut f: F,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> QuadResult<N> {
    if a == b {
        return QuadResult { value: [0.0; N], error: [0.0; N], converged: true };
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut segs: Vec<(f64, f64, [f64; N], [f64; N])> = vec![(a, b, v, e)];
    let mut total = v;
    let mut total_err = e;
    let accept = |tot: &[f64; N], err: &[f64; N]| {
        (0..N).all(|k| err[k] <= opts.abs_tol.max(opts.rel_tol * tot[k].abs()))
    };
    if total.iter().any(|x| !x.is_finite()) {
        return QuadResult { value: total, error: total_err, converged: false };
    }
    while !accept(&total, &total_err) {
        if segs.len() >= opts.max_subdivisions {
            return QuadResult { value: total, error: total_err, converged: false };
        }
        let scale: [f64; N] =
            std::array::from_fn(|k| opts.abs_tol.max(opts.rel_tol * total[k].abs()));
        let worst = segs
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (0..N).map(|k| s.3[k] / scale[k]).fold(0.0, f64::max)))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, v, e) = segs.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            segs.push((lo, hi, v, e));
            return QuadResult { value: total, error: total_err, converged: false };
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        for k in 0..N {
            total[k] += v1[k] + v2[k] - v[k];
            total_err[k] += e1[k] + e2[k] - e[k];
        }
        if total.iter().any(|x| !x.is_finite()) {
            return QuadResult { value: total, error: total_err, converged: false };
        }
        segs.push((lo, mid, v1, e1));
        segs.push((mid, hi, v2, e2));
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for s in &segs {
        for k in 0..N {
            value[k] += s.2[k];
            error[k] += s.3[k];
        }
    }
    QuadResult { value, error, converged: true }
}

/// Scalar adaptive integral over `[a, b]`; returns the value only.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> f64 {
    integrate_vec(|x| [f(x)], a, b, opts).value[0]
}

/// Settings for integration out to a boundary.
#[derive(Debug, Clone, Copy)]
pub struct TailOptions {
    /// Width of the first panel when the boundary is infinite.
    pub first_panel: f64,
    pub rel_tol: f64,
    /// Partial sums beyond this with non-decreasing increments mean divergence.
    pub divergence_threshold: f64,
    /// Consecutive non-decaying panels that also signal divergence.
    pub stall_panels: usize,
    /// Consecutive panels whose increment grows by half or more.
    pub growth_panels: usize,
    pub quad: QuadOptions,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self {
            first_panel: 1.0,
            rel_tol: 1e-11,
            divergence_threshold: 1e12,
            stall_panels: 40,
            growth_panels: 10,
            quad: QuadOptions { rel_tol: 1e-12, ..QuadOptions::default() },
        }
    }
}

/// Integral of `f` over the interval between `start` and `boundary`.
///
/// The orientation is dropped: the result is the integral over
/// `[min, max]`, so measures come out nonnegative for nonnegative `f`.
/// `boundary` may be infinite or a finite point where `f` is singular.
pub fn integrate_to_boundary<F: FnMut(f64) -> f64>(mut f: F, start: f64, boundary: f64, opts: TailOptions) -> ExtReal {
    let q = opts.quad;
    sum_panels_to_boundary(
        |p0, p1| {
            let (lo, hi) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
            integrate_vec(|x| [f(x)], lo, hi, q).value[0]
        },
        start,
        boundary,
        opts,
    )
}

/// Sum panel contributions walking from `start` out to `boundary`.
///
/// `panel(near, far)` is called in order, nearest panel first, so callers
/// can carry cumulative state from one panel to the next.
pub fn sum_panels_to_boundary<P: FnMut(f64, f64) -> f64>(mut panel: P, start: f64, boundary: f64, opts: TailOptions) -> ExtReal {
    if start == boundary {
        return ExtReal::Finite(0.0);
    }
    let dir = if boundary > start { 1.0 } else { -1.0 };
    let infinite = boundary.is_infinite();
    let dist0 = (boundary - start).abs();
    let bounds = |k: i32| -> (f64, f64) {
        if infinite {
            let w = opts.first_panel;
            (start + dir * w * (2f64.powi(k) - 1.0), start + dir * w * (2f64.powi(k + 1) - 1.0))
        } else {
            (boundary - dir * dist0 * 2f64.powi(-k), boundary - dir * dist0 * 2f64.powi(-k - 1))
        }
    };
    let mut sum = 0.0;
    let mut prev_inc: Option<f64> = None;
    let mut nondecreasing_run = 0usize;
    let mut stall_run = 0usize;
    let mut growth_run = 0usize;
    let mut zero_run = 0usize;
    for k in 0..2100 {
        let (p0, p1) = bounds(k);
        if !p1.is_finite() || p0 == p1 || (!infinite && p1 == boundary) {
            break;
        }
        let inc = panel(p0, p1);
        if inc.is_nan() {
            return ExtReal::Indeterminate;
        }
        if inc.is_infinite() {
            return if inc > 0.0 { ExtReal::PosInf } else { ExtReal::Indeterminate };
        }
        sum += inc;
        let a = inc.abs();
        if a == 0.0 {
            zero_run += 1;
            if zero_run >= 4 && k >= 6 {
                return ExtReal::Finite(sum);
            }
        } else {
            zero_run = 0;
        }
        if let Some(p) = prev_inc {
            if a >= p {
                nondecreasing_run += 1;
            } else {
                nondecreasing_run = 0;
            }
            if sum.abs() > opts.divergence_threshold && nondecreasing_run >= 2 {
                return ExtReal::PosInf;
            }
            if p > 0.0 {
                let rho = a / p;
                if rho >= 1.5 {
                    growth_run += 1;
                    if growth_run >= opts.growth_panels {
                        return ExtReal::PosInf;
                    }
                } else {
                    growth_run = 0;
                }
                if rho >= 0.999 {
                    stall_run += 1;
                    if stall_run >= opts.stall_panels {
                        return ExtReal::PosInf;
                    }
                } else {
                    stall_run = 0;
                    let remainder = a * rho / (1.0 - rho);
                    if k >= 3 && remainder <= opts.rel_tol * sum.abs() {
                        return ExtReal::Finite(sum);
                    }
                }
            }
        }
        prev_inc = Some(a);
    }
    // Ran out of representable panels.
    match prev_inc {
        Some(p) if p <= 1e-8 * sum.abs() => ExtReal::Finite(sum),
        Some(_) if stall_run > 0 && sum.abs() > 1.0 => ExtReal::PosInf,
        None => ExtReal::Finite(sum),
        _ => ExtReal::Indeterminate,
    }
}
