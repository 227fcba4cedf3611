//! Gauss–Legendre rules and compensated summation.

use std::sync::OnceLock;

use num_complex::Complex64;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`,
/// by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
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
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached 16-point rule, the panel rule used throughout.
pub fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Cached 24-point rule, the error-estimate companion of [`gl16`].
pub fn gl24() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(24))
}

/// Composite rule on `[a, b]` split into `panels` equal panels.
pub fn composite(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * rule.0.len());
    let mut ws = Vec::with_capacity(panels * rule.0.len());
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            xs.push(mid + 0.5 * h * x);
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

/// Kahan–Babuška compensated complex accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanComplex {
    sum: Complex64,
    comp: Complex64,
}

impl KahanComplex {
    pub fn add(&mut self, v: Complex64) {
        self.sum.re = neumaier(self.sum.re, v.re, &mut self.comp.re);
        self.sum.im = neumaier(self.sum.im, v.im, &mut self.comp.im);
    }

    pub fn value(&self) -> Complex64 {
        self.sum + self.comp
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct KahanReal {
    sum: f64,
    comp: f64,
}

impl KahanReal {
    pub fn add(&mut self, v: f64) {
        self.sum = neumaier(self.sum, v, &mut self.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn neumaier(sum: f64, v: f64, comp: &mut f64) -> f64 {
    let t = sum + v;
    if sum.abs() >= v.abs() {
        *comp += (sum - t) + v;
    } else {
        *comp += (v - t) + sum;
    }
    t
}

/// Sums values in the given order with compensation.
pub fn kahan_sum_complex(values: impl IntoIterator<Item = Complex64>) -> Complex64 {
    let mut acc = KahanComplex::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for n in [1, 2, 5, 16, 24] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn composite_oscillatory() {
        let (x, w) = composite(gl16(), 0.0, 1.0, 8);
        let got: f64 = x.iter().zip(&w).map(|(x, w)| w * (40.0 * x).cos()).sum();
        assert_relative_eq!(got, (40.0f64).sin() / 40.0, epsilon = 1e-14);
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let mut acc = KahanReal::default();
        acc.add(1e16);
        for _ in 0..1000 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.value(), 1000.0);
    }
}
