//! Adaptive Gauss–Kronrod (10/21) integration with breakpoints, infinite
//! endpoints and optional logarithmic clustering at segment ends.

use crate::scalar::Scalar;

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
    0.123_491_976_262_065_851_077_208_067_789_727,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Stopping rule for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_intervals: usize,
}

impl<T: Scalar> QuadConfig<T> {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol: T::tol(rel_tol),
            abs_tol: T::lit(abs_tol).max(T::min_positive_value()),
            max_intervals: 2000,
        }
    }

    /// Relative tolerance 1e-10 with an absolute floor of 1e-300.
    pub fn fine() -> Self {
        Self::new(1e-10, 1e-300)
    }
}

impl<T: Scalar> Default for QuadConfig<T> {
    fn default() -> Self {
        Self::fine()
    }
}

/// Integral estimate for an `N`-component integrand.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<T, const N: usize> {
    pub value: [T; N],
    pub abs_error: [T; N],
    /// Integral of the absolute value of each component.
    pub abs_value: [T; N],
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy)]
enum Map<T> {
    Identity,
    /// x = a + t / (1 - t), t in [0, 1)
    UpperInfinite(T),
    /// x = b - (1 - t) / t, t in (0, 1]
    LowerInfinite(T),
    /// x = a + exp(s)
    LogFrom(T),
    /// x = b - exp(s)
    LogTo(T),
}

impl<T: Scalar> Map<T> {
    #[inline]
    fn apply(&self, t: T) -> (T, T) {
        let one = T::one();
        match *self {
            Map::Identity => (t, one),
            Map::UpperInfinite(a) => {
                let u = one - t;
                (a + t / u, one / (u * u))
            }
            Map::LowerInfinite(b) => (b - (one - t) / t, one / (t * t)),
            Map::LogFrom(a) => {
                let e = t.exp();
                (a + e, e)
            }
            Map::LogTo(b) => {
                let e = t.exp();
                (b - e, e)
            }
        }
    }
}

struct Interval<T, const N: usize> {
    a: T,
    b: T,
    map: Map<T>,
    value: [T; N],
    error: [T; N],
    abs_value: [T; N],
    exhausted: bool,
}

fn rescale_error<T: Scalar>(err: T, resabs: T, resasc: T) -> T {
    let mut e = err.abs();
    if resasc != T::zero() && e != T::zero() {
        let scale = (T::lit(200.0) * e / resasc).powf(T::lit(1.5));
        e = if scale < T::one() { resasc * scale } else { resasc };
    }
    let floor = T::lit(50.0) * T::epsilon() * resabs;
    if resabs > T::min_positive_value() / (T::lit(50.0) * T::epsilon()) && floor > e {
        e = floor;
    }
    e
}

fn gk21<T, const N: usize, F>(f: &F, map: Map<T>, a: T, b: T) -> Interval<T, N>
where
    T: Scalar,
    F: Fn(T) -> [T; N],
{
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let eval = |t: T| -> [T; N] {
        let (x, jac) = map.apply(t);
        let mut v = f(x);
        for c in v.iter_mut() {
            *c = if jac == T::zero() { T::zero() } else { *c * jac };
        }
        v
    };

    let mut fv1 = [[T::zero(); N]; 10];
    let mut fv2 = [[T::zero(); N]; 10];
    let fc = eval(center);
    let mut res_k = [T::zero(); N];
    let mut res_g = [T::zero(); N];
    let mut res_abs = [T::zero(); N];
    for c in 0..N {
        res_k[c] = fc[c] * T::lit(WGK[10]);
        res_abs[c] = res_k[c].abs();
    }
    for j in 0..10 {
        let dx = half_len * T::lit(XGK[j]);
        let f1 = eval(center - dx);
        let f2 = eval(center + dx);
        let wk = T::lit(WGK[j]);
        for c in 0..N {
            res_k[c] = res_k[c] + wk * (f1[c] + f2[c]);
            res_abs[c] = res_abs[c] + wk * (f1[c].abs() + f2[c].abs());
            if j % 2 == 1 {
                res_g[c] = res_g[c] + T::lit(WG[j / 2]) * (f1[c] + f2[c]);
            }
        }
        fv1[j] = f1;
        fv2[j] = f2;
    }
    let mut value = [T::zero(); N];
    let mut error = [T::zero(); N];
    let mut abs_value = [T::zero(); N];
    let abs_half = half_len.abs();
    for c in 0..N {
        let mean = res_k[c] * half;
        let mut asc = T::lit(WGK[10]) * (fc[c] - mean).abs();
        for j in 0..10 {
            asc = asc + T::lit(WGK[j]) * ((fv1[j][c] - mean).abs() + (fv2[j][c] - mean).abs());
        }
        value[c] = res_k[c] * half_len;
        abs_value[c] = res_abs[c] * abs_half;
        let err = (res_k[c] - res_g[c]) * half_len;
        error[c] = rescale_error(err, abs_value[c], asc * abs_half);
        if !value[c].is_finite() {
            value[c] = T::zero();
            error[c] = T::infinity();
        }
    }
    let tiny = T::lit(1000.0) * T::epsilon() * (a.abs().max(b.abs()).max(T::min_positive_value()));
    Interval { a, b, map, value, error, abs_value, exhausted: (b - a).abs() <= tiny }
}

/// Integrates an `N`-component function over the union of segments between
/// consecutive `points` (sorted; the first and last may be infinite).
pub fn integrate_vec<T, const N: usize, F>(f: F, points: &[T], cfg: &QuadConfig<T>) -> Quadrature<T, N>
where
    T: Scalar,
    F: Fn(T) -> [T; N],
{
    let segments = segment_maps(points, &[]);
    run_adaptive(&f, segments, cfg)
}

/// Like [`integrate_vec`], but every segment whose endpoint appears in
/// `cluster_at` is integrated in logarithmic distance from that endpoint,
/// which resolves integrable spikes located there.
pub fn integrate_vec_clustered<T, const N: usize, F>(
    f: F,
    points: &[T],
    cluster_at: &[T],
    cfg: &QuadConfig<T>,
) -> Quadrature<T, N>
where
    T: Scalar,
    F: Fn(T) -> [T; N],
{
    let segments = segment_maps(points, cluster_at);
    run_adaptive(&f, segments, cfg)
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<T, F>(f: F, points: &[T], cfg: &QuadConfig<T>) -> Quadrature<T, 1>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    integrate_vec(|x| [f(x)], points, cfg)
}

fn segment_maps<T: Scalar>(points: &[T], cluster_at: &[T]) -> Vec<(Map<T>, T, T)> {
    let mut pts: Vec<T> = points.iter().copied().filter(|p| !p.is_nan()).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    pts.dedup();
    if pts.len() == 2 && pts[0] == T::neg_infinity() && pts[1] == T::infinity() {
        pts.insert(1, T::zero());
    }
    let log_floor = T::min_positive_value().ln() + T::lit(10.0);
    let clustered = |p: T| cluster_at.contains(&p);
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        match (a.is_finite(), b.is_finite()) {
            (true, true) => {
                let (ca, cb) = (clustered(a), clustered(b));
                match (ca, cb) {
                    (false, false) => out.push((Map::Identity, a, b)),
                    (true, false) => push_log(&mut out, Map::LogFrom(a), (b - a).ln(), log_floor),
                    (false, true) => push_log(&mut out, Map::LogTo(b), (b - a).ln(), log_floor),
                    (true, true) => {
                        let ln_half = ((b - a) * T::lit(0.5)).ln();
                        push_log(&mut out, Map::LogFrom(a), ln_half, log_floor);
                        push_log(&mut out, Map::LogTo(b), ln_half, log_floor);
                    }
                }
            }
            (true, false) => out.push((Map::UpperInfinite(a), T::zero(), T::one())),
            (false, true) => out.push((Map::LowerInfinite(b), T::zero(), T::one())),
            (false, false) => {}
        }
    }
    out
}

/// Log-distance segment `[top + floor, top]`, pre-split at `top - 2^k` so
/// that a single rule never has to resolve hundreds of e-folds at once.
fn push_log<T: Scalar>(out: &mut Vec<(Map<T>, T, T)>, map: Map<T>, top: T, floor: T) {
    let bottom = top + floor;
    let mut hi = top;
    let mut step = T::one();
    while hi - step > bottom {
        out.push((map, hi - step, hi));
        hi = hi - step;
        step = step + step;
    }
    out.push((map, bottom, hi));
}

fn run_adaptive<T, const N: usize, F>(f: &F, segments: Vec<(Map<T>, T, T)>, cfg: &QuadConfig<T>) -> Quadrature<T, N>
where
    T: Scalar,
    F: Fn(T) -> [T; N],
{
    let mut intervals: Vec<Interval<T, N>> = segments.into_iter().map(|(m, a, b)| gk21(f, m, a, b)).collect();
    let mut evaluations = 21 * intervals.len();
    let totals = |iv: &[Interval<T, N>]| {
        let mut v = [T::zero(); N];
        let mut e = [T::zero(); N];
        let mut s = [T::zero(); N];
        for i in iv {
            for c in 0..N {
                v[c] = v[c] + i.value[c];
                e[c] = e[c] + i.error[c];
                s[c] = s[c] + i.abs_value[c];
            }
        }
        (v, e, s)
    };
    loop {
        let (value, error, abs_value) = totals(&intervals);
        let tol: [T; N] = std::array::from_fn(|c| cfg.abs_tol.max(cfg.rel_tol * abs_value[c]));
        let done = (0..N).all(|c| error[c] <= tol[c]);
        if done || intervals.len() >= cfg.max_intervals {
            return Quadrature { value, abs_error: error, abs_value, evaluations, converged: done };
        }
        // Worst interval relative to the per-component tolerance.
        let mut worst = None;
        let mut worst_score = T::zero();
        for (k, iv) in intervals.iter().enumerate() {
            if iv.exhausted {
                continue;
            }
            let score = (0..N).map(|c| iv.error[c] / tol[c]).fold(T::zero(), T::max);
            if score > worst_score {
                worst_score = score;
                worst = Some(k);
            }
        }
        let Some(k) = worst else {
            return Quadrature { value, abs_error: error, abs_value, evaluations, converged: false };
        };
        let iv = intervals.swap_remove(k);
        let mid = T::lit(0.5) * (iv.a + iv.b);
        let left = gk21(f, iv.map, iv.a, mid);
        let right = gk21(f, iv.map, mid, iv.b);
        evaluations += 42;
        intervals.push(left);
        intervals.push(right);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x: f64| x * x * x - 2.0 * x + 1.0, &[0.0, 2.0], &QuadConfig::fine());
        assert!((q.value[0] - 2.0).abs() < 1e-14);
        assert!(q.converged);
    }

    #[test]
    fn gaussian_over_real_line() {
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let q = integrate(phi, &[f64::NEG_INFINITY, f64::INFINITY], &QuadConfig::fine());
        assert!((q.value[0] - 1.0).abs() < 1e-12, "{}", q.value[0]);
        let q = integrate(phi, &[1.0, f64::INFINITY], &QuadConfig::fine());
        assert!((q.value[0] - 0.158_655_253_931_457_05).abs() < 1e-13);
    }

    #[test]
    fn narrow_peak_found_with_breakpoint() {
        let s = 1e-4;
        let f = |x: f64| (-0.5 * ((x - 0.3) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let pts = [0.0, 0.3 - 10.0 * s, 0.3 - 3.0 * s, 0.3, 0.3 + 3.0 * s, 0.3 + 10.0 * s, 1.0];
        let q = integrate(f, &pts, &QuadConfig::fine());
        assert!((q.value[0] - 1.0).abs() < 1e-10, "{} {:?} {}", q.value[0], q.abs_error, q.converged);
    }

    #[test]
    fn log_clustering_resolves_endpoint_spike() {
        // d/dx of -1/ln(x) on (0, 1/e): integrand 1/(x ln^2 x), integral 1.
        let f = |x: f64| if x > 0.0 { 1.0 / (x * x.ln().powi(2)) } else { 0.0 };
        let b = (-1.0f64).exp();
        let q = integrate_vec_clustered(|x| [f(x)], &[0.0, b], &[0.0], &QuadConfig::new(1e-10, 1e-300));
        // Mass below exp(-700) is 1/700; the floor of the log map cuts it.
        let floor = (f64::MIN_POSITIVE).ln() + 10.0 + b.ln();
        let expected = 1.0 + 1.0 / floor;
        assert!((q.value[0] - expected).abs() < 1e-9, "{} vs {}", q.value[0], expected);
    }

    #[test]
    fn vector_components_share_nodes() {
        let q = integrate_vec(|x: f64| [1.0, x, x * x], &[-1.0, 1.0], &QuadConfig::fine());
        assert!((q.value[0] - 2.0).abs() < 1e-15);
        assert!(q.value[1].abs() < 1e-15);
        assert!((q.value[2] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_precision_runs() {
        let q = integrate(|x: f32| x.sin(), &[0.0, std::f32::consts::PI], &QuadConfig::fine());
        assert!((q.value[0] - 2.0).abs() < 1e-5);
    }
}
