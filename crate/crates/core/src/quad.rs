//! Adaptive quadrature for the per-interval Carleman coefficient integrals.

/// Adaptive Simpson integration of `f` over [a, b] to the requested
/// relative tolerance. A 64-panel composite pre-pass sets the absolute
/// tolerance scale, so sharply peaked integrands (e.g. e^{lambda (s - b)}
/// with large lambda) neither under-resolve nor over-refine.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    const PANELS: usize = 64;
    let w = (b - a) / PANELS as f64;
    let mut rough = 0.0;
    let mut panels = Vec::with_capacity(PANELS);
    for k in 0..PANELS {
        let pa = a + k as f64 * w;
        let pb = if k + 1 == PANELS { b } else { a + (k + 1) as f64 * w };
        let (fa, fm, fb) = (f(pa), f(0.5 * (pa + pb)), f(pb));
        let s = simpson(pa, pb, fa, fm, fb);
        rough += s;
        panels.push((pa, pb, fa, fm, fb, s));
    }
    let eps = rel_tol * rough.abs().max(1e-300) / PANELS as f64;
    panels
        .into_iter()
        .map(|(pa, pb, fa, fm, fb, s)| adaptive(f, pa, pb, fa, fm, fb, s, eps, 40))
        .sum()
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, eps * 0.5, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, eps * 0.5, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness() {
        let v = integrate(&|x: f64| x * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sharp_exponential() {
        // e^{-lambda (b - s)} over (a, b): sharply peaked at b for large lambda
        let lambda = 1000.0;
        let v = integrate(&|s: f64| (lambda * (s - 1.0)).exp(), 0.0, 1.0, 1e-12);
        let exact = (1.0 - (-lambda).exp()) / lambda;
        assert!(((v - exact) / exact).abs() < 1e-10, "v={v}, exact={exact}");
    }

    #[test]
    fn oscillatory() {
        let v = integrate(&|x: f64| (10.0 * x).sin(), 0.0, 1.0, 1e-12);
        let exact = (1.0 - (10.0f64).cos()) / 10.0;
        assert!((v - exact).abs() < 1e-11);
    }
}
