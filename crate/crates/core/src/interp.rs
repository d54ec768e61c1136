//! Four-point Lagrange interpolation on monotone (possibly non-uniform) nodes.

/// Index of the first node of a four-point stencil containing `x`, clamped to
/// the grid. `nodes` must be strictly increasing with at least four entries.
pub(crate) fn stencil_start(nodes: &[f64], x: f64) -> usize {
    let n = nodes.len();
    let i = nodes.partition_point(|&t| t <= x);
    // x lies in [nodes[i-1], nodes[i]); centre the stencil on that interval.
    i.saturating_sub(2).min(n - 4)
}

/// Lagrange weights for the stencil `nodes[s..s+4]` at `x`.
#[inline]
pub(crate) fn lagrange4(nodes: &[f64], s: usize, x: f64) -> [f64; 4] {
    let t = [nodes[s], nodes[s + 1], nodes[s + 2], nodes[s + 3]];
    let mut w = [1.0; 4];
    for (i, wi) in w.iter_mut().enumerate() {
        for (j, &tj) in t.iter().enumerate() {
            if i != j {
                *wi *= (x - tj) / (t[i] - tj);
            }
        }
    }
    w
}

/// Derivative weights `d/dx` of [`lagrange4`].
#[inline]
pub(crate) fn lagrange4_deriv(nodes: &[f64], s: usize, x: f64) -> [f64; 4] {
    let t = [nodes[s], nodes[s + 1], nodes[s + 2], nodes[s + 3]];
    let mut w = [0.0; 4];
    for (i, wi) in w.iter_mut().enumerate() {
        let denom: f64 = (0..4).filter(|&j| j != i).map(|j| t[i] - t[j]).product();
        let mut acc = 0.0;
        for k in (0..4).filter(|&k| k != i) {
            acc += (0..4)
                .filter(|&j| j != i && j != k)
                .map(|j| x - t[j])
                .product::<f64>();
        }
        *wi = acc / denom;
    }
    w
}

/// Weights for a uniform grid `x0 + i h`, returned with the stencil start.
#[inline]
pub(crate) fn uniform_lagrange4(x0: f64, h: f64, n: usize, x: f64) -> (usize, [f64; 4]) {
    let pos = (x - x0) / h;
    let i = (pos.floor() as isize).clamp(1, n as isize - 3) as usize;
    let s = i - 1;
    let u = pos - s as f64; // stencil nodes at 0, 1, 2, 3
    let w = [
        -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
        u * (u - 2.0) * (u - 3.0) / 2.0,
        -u * (u - 1.0) * (u - 3.0) / 2.0,
        u * (u - 1.0) * (u - 2.0) / 6.0,
    ];
    (s, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_reproduced() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.25 * x * x * x;
        let nodes: Vec<f64> = (0..9).map(|i| (i as f64 * 0.3).powf(1.4)).collect();
        for &x in &[0.01, 0.5, 1.7, 3.9] {
            let s = stencil_start(&nodes, x);
            let w = lagrange4(&nodes, s, x);
            let v: f64 = (0..4).map(|k| w[k] * f(nodes[s + k])).sum();
            assert!((v - f(x)).abs() < 1e-12);
        }
        let df = |x: f64| -2.0 + x - 0.75 * x * x;
        for &x in &[0.01, 0.5, 1.7] {
            let s = stencil_start(&nodes, x);
            let w = lagrange4_deriv(&nodes, s, x);
            let d: f64 = (0..4).map(|k| w[k] * f(nodes[s + k])).sum();
            assert!((d - df(x)).abs() < 1e-11);
        }
        let (x0, h, n) = (-1.0, 0.25, 12);
        for &x in &[-1.0, -0.6, 0.3, 1.75] {
            let (s, w) = uniform_lagrange4(x0, h, n, x);
            let v: f64 = (0..4).map(|k| w[k] * f(x0 + (s + k) as f64 * h)).sum();
            assert!((v - f(x)).abs() < 1e-12);
        }
    }
}
