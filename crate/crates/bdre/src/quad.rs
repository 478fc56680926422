//! Quadrature building blocks: compensated summation, Gauss-Legendre rules,
//! adaptive Gauss-Kronrod (21 point) and panel-wise oscillatory integration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Sum in order of increasing magnitude with compensation.
pub fn sum_by_magnitude(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    values.iter().copied().collect::<NeumaierSum>().value()
}

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared instance, built once per process.
    pub fn cached(n: usize) -> &'static GaussLegendre {
        static RULES: OnceLock<Vec<GaussLegendre>> = OnceLock::new();
        let rules = RULES.get_or_init(|| (1..=64).map(GaussLegendre::new).collect());
        &rules[n - 1]
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = NeumaierSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s.add(w * f(c + h * x));
        }
        h * s.value()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

/// Result of a single 21-point Gauss-Kronrod rule on one interval.
fn qk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let hl = h.abs();
    let result = res_k * h;
    res_abs *= hl;
    res_asc *= hl;
    let mut err = ((res_k - res_g) * h).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (result, err)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOutcome {
    pub value: f64,
    pub abs_err: f64,
    /// Sum of absolute piece values; divided by |value| it measures cancellation.
    pub magnitude: f64,
    pub intervals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-13,
            rel: 1e-10,
            max_intervals: 500,
        }
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive bisection driven by the largest local error.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> QuadOutcome {
    if a == b {
        return QuadOutcome {
            value: 0.0,
            abs_err: 0.0,
            magnitude: 0.0,
            intervals: 0,
            converged: true,
        };
    }
    let (v, e) = qk21(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, err: e });
    let mut total = v;
    let mut total_err = e;
    loop {
        if total_err <= tol.abs.max(tol.rel * total.abs()) {
            break;
        }
        if heap.len() >= tol.max_intervals {
            break;
        }
        let worst = heap.pop().expect("heap is never empty here");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let (v1, e1) = qk21(&mut f, worst.a, mid);
        let (v2, e2) = qk21(&mut f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            err: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            err: e2,
        });
    }
    let pieces = heap.into_vec();
    let mut vals: Vec<f64> = pieces.iter().map(|p| p.value).collect();
    let value = sum_by_magnitude(&mut vals);
    let abs_err: f64 = pieces.iter().map(|p| p.err).sum();
    let magnitude: f64 = pieces.iter().map(|p| p.value.abs()).sum();
    QuadOutcome {
        value,
        abs_err,
        magnitude,
        intervals: pieces.len(),
        converged: abs_err <= tol.abs.max(tol.rel * value.abs()) * 1.0001,
    }
}

/// Integral over consecutive panels `[breaks[i], breaks[i+1]]`, each handled
/// adaptively with a tolerance relative to its own magnitude. Panel values
/// are accumulated smallest first.
pub fn panels<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], tol: Tolerance) -> QuadOutcome {
    let n = breaks.len().saturating_sub(1).max(1);
    let per_panel = Tolerance {
        abs: tol.abs / n as f64,
        ..tol
    };
    let mut vals = Vec::with_capacity(n);
    let mut err = 0.0;
    let mut magnitude = 0.0;
    let mut intervals = 0;
    let mut converged = true;
    for w in breaks.windows(2) {
        let o = adaptive(&mut f, w[0], w[1], per_panel);
        vals.push(o.value);
        err += o.abs_err;
        magnitude += o.magnitude;
        intervals += o.intervals;
        converged &= o.converged;
    }
    QuadOutcome {
        value: sum_by_magnitude(&mut vals),
        abs_err: err,
        magnitude,
        intervals,
        converged,
    }
}

/// Breakpoints `0, p, 2p, ...` up to and including `upper`, optionally
/// refined so that no panel is longer than `max_len`.
pub fn periodic_breaks(period: f64, upper: f64, max_len: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut k = 0usize;
    loop {
        let lo = k as f64 * period;
        if lo >= upper {
            break;
        }
        let hi = ((k + 1) as f64 * period).min(upper);
        let pieces = ((hi - lo) / max_len).ceil().max(1.0) as usize;
        for j in 1..=pieces {
            out.push(lo + (hi - lo) * j as f64 / pieces as f64);
        }
        k += 1;
    }
    out
}

/// Composite Gauss-Legendre rule on `[a, b]` split into `panels` pieces.
pub fn composite_nodes(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let gl = GaussLegendre::cached(order);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let c = lo + 0.5 * h;
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            xs.push(c + 0.5 * h * x);
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(10);
        let v = gl.integrate(|x| x.powi(19) + x.powi(18), -1.0, 1.0);
        assert!((v - 2.0 / 19.0).abs() < 1e-14);
        let w: f64 = gl.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let o = adaptive(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, Tolerance::default());
        assert!((o.value - 2.0).abs() < 1e-9, "{o:?}");
    }

    #[test]
    fn adaptive_gaussian() {
        let o = adaptive(|x: f64| (-x * x).exp(), -10.0, 10.0, Tolerance::default());
        assert!((o.value - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!(o.converged);
    }

    #[test]
    fn oscillatory_panels_match_closed_form() {
        // int_0^inf e^{-x} sin(10 x) dx = 10/101
        let b = periodic_breaks(std::f64::consts::PI / 10.0, 45.0, 1.0);
        let o = panels(|x: f64| (-x).exp() * (10.0 * x).sin(), &b, Tolerance::default());
        assert!((o.value - 10.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn neumaier_recovers_small_terms() {
        let s: NeumaierSum = [1e16, 1.0, -1e16].into_iter().collect();
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn composite_rule_weights_sum_to_length() {
        let (_, w) = composite_nodes(-3.0, 5.0, 7, 12);
        let s: f64 = w.iter().sum();
        assert!((s - 8.0).abs() < 1e-13);
    }
}
