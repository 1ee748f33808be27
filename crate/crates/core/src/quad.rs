//! Quadrature and small numeric helpers shared across the crate:
//! Gauss–Legendre rules, compensated (Kahan) sums, cumulative trapezoids,
//! least-squares line fits and log-log order fits.

/// A Gauss–Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights by Newton iteration on P_n; accurate to machine
    /// precision for the moderate orders used here (n <= 64).
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi-style initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            let (_, d) = legendre_with_derivative(n, 0.0);
            nodes[n / 2] = 0.0;
            weights[n / 2] = 2.0 / (d * d);
        }
        Self { nodes, weights }
    }

    /// ∫_a^b f(x) dx with this rule on a single panel.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = KahanSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(mid + half * x));
        }
        half * acc.value()
    }

    /// Composite rule: `panels` equal panels over [a, b].
    pub fn integrate_composite<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: F,
    ) -> f64 {
        let mut acc = KahanSum::new();
        let h = (b - a) / panels as f64;
        for k in 0..panels {
            acc.add(self.integrate(a + k as f64 * h, a + (k + 1) as f64 * h, &mut f));
        }
        acc.value()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Kahan–Babuška compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut acc = KahanSum::new();
    acc.add(0.5 * values[0]);
    for v in &values[1..values.len() - 1] {
        acc.add(*v);
    }
    acc.add(0.5 * values[values.len() - 1]);
    h * acc.value()
}

/// Cumulative trapezoid from the left end; out[0] = 0.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    let mut acc = KahanSum::new();
    for i in 1..values.len() {
        acc.add(0.5 * h * (values[i - 1] + values[i]));
        out[i] = acc.value();
    }
    out
}

/// Cumulative trapezoid accumulated from the right end; out[n-1] = 0.
pub fn cumulative_trapezoid_rev(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    let mut acc = KahanSum::new();
    for i in (0..n.saturating_sub(1)).rev() {
        acc.add(0.5 * h * (values[i] + values[i + 1]));
        out[i] = acc.value();
    }
    out
}

/// Discrete l2 inner product Σ f g h on a uniform grid (trapezoid weights).
pub fn inner_product(f: &[f64], g: &[f64], h: f64) -> f64 {
    assert_eq!(f.len(), g.len());
    let mut acc = KahanSum::new();
    for i in 0..f.len() {
        let w = if i == 0 || i == f.len() - 1 { 0.5 } else { 1.0 };
        acc.add(w * f[i] * g[i]);
    }
    h * acc.value()
}

/// Least-squares straight line y ≈ slope·x + intercept.
pub fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// RMS residual of a straight-line fit.
pub fn line_fit_residual(x: &[f64], y: &[f64], slope: f64, intercept: f64) -> f64 {
    let mut acc = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let r = yi - slope * xi - intercept;
        acc += r * r;
    }
    (acc / x.len() as f64).sqrt()
}

/// Log-log order fit: slope of log(err) against log(eps).
/// Pairs with a non-positive error are skipped.
pub fn order_fit(eps: &[f64], err: &[f64]) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&e, &r) in eps.iter().zip(err) {
        if r > 0.0 && e > 0.0 {
            xs.push(e.ln());
            ys.push(r.ln());
        }
    }
    if xs.len() < 2 {
        return f64::NAN;
    }
    line_fit(&xs, &ys).0
}

/// Two-level Richardson extrapolation assuming an O(h²) leading error:
/// combines a coarse value q_h and a refined q_{h/2}.
pub fn richardson_h2(q_h: f64, q_h2: f64) -> f64 {
    (4.0 * q_h2 - q_h) / 3.0
}
