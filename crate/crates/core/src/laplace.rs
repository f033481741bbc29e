//! Pseudo-frequency data pipeline: multiplicative noise injection, the
//! truncated Laplace transform
//!
//!   phi(x, s) = int_0^T u(x, t) e^{-s t} dt,
//!
//! the derived quantity
//!
//!   psi(x, s) = d/ds ln phi / s^2 - 2 ln phi / s^3,
//!
//! and its per-interval trapezoid average psi_n = (psi(s_n) + psi(s_{n-1})) / 2
//! on the descending grid s_bar = s_0 > s_1 > ... > s_N = s_low.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WaveError};
use crate::forward::TimeTraces;

/// Descending uniform pseudo-frequency partition plus the Carleman weight
/// parameter lambda and the regularization weight epsilon.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PseudoFreqGrid {
    pub s_low: f64,
    pub s_bar: f64,
    pub step: f64,
    pub lambda: f64,
    pub epsilon: f64,
}

impl PseudoFreqGrid {
    pub fn new(s_low: f64, s_bar: f64, step: f64, lambda: f64, epsilon: f64) -> Result<Self> {
        if !(s_low >= 1.0) {
            return Err(WaveError::InvalidGeometry(format!(
                "lowest pseudo frequency must be >= 1, got {s_low}"
            )));
        }
        if !(s_bar > s_low) || !(step > 0.0) {
            return Err(WaveError::InvalidGeometry(format!(
                "pseudo-frequency grid needs s_bar > s_low and step > 0, got [{s_low}, {s_bar}], step {step}"
            )));
        }
        let span = s_bar - s_low;
        let n = (span / step).round();
        if n < 1.0 || (span - n * step).abs() > 1e-9 {
            return Err(WaveError::InvalidGeometry(format!(
                "step {step} does not evenly partition [{s_low}, {s_bar}]"
            )));
        }
        if !(lambda > 0.0) || !(epsilon >= 0.0) {
            return Err(WaveError::InvalidGeometry(format!(
                "need lambda > 0 and epsilon >= 0, got lambda {lambda}, epsilon {epsilon}"
            )));
        }
        Ok(PseudoFreqGrid { s_low, s_bar, step, lambda, epsilon })
    }

    /// Number of intervals N.
    pub fn n_intervals(&self) -> usize {
        ((self.s_bar - self.s_low) / self.step).round() as usize
    }

    /// Grid values s_0 = s_bar down to s_N = s_low.
    pub fn s_values(&self) -> Vec<f64> {
        let n = self.n_intervals();
        (0..=n).map(|i| self.s_bar - i as f64 * self.step).collect()
    }

    /// Endpoints (s_n, s_{n-1}) of interval n (1-based).
    pub fn interval(&self, n: usize) -> (f64, f64) {
        let upper = self.s_bar - (n as f64 - 1.0) * self.step;
        (upper - self.step, upper)
    }
}

/// phi, psi and psi_n for every node of the reconstruction mesh, stored
/// node-major in the descending s order of the grid.
#[derive(Clone, Debug)]
pub struct PseudoFreqData {
    pub grid: PseudoFreqGrid,
    /// phi[node][i] at s = s_i.
    pub phi: Vec<Vec<f64>>,
    /// psi[node][i] at s = s_i.
    pub psi: Vec<Vec<f64>>,
    /// psi_n[node][n-1] on interval (s_n, s_{n-1}).
    pub psi_n: Vec<Vec<f64>>,
}

/// Multiplicative noise u (1 + alpha_j (u_max - u_min) sigma) with one
/// uniform [-1, 1] draw per time index, shared across nodes; the range is
/// per node.
pub fn add_noise(traces: &TimeTraces, sigma: f64, seed: u64) -> TimeTraces {
    if sigma == 0.0 {
        return traces.clone();
    }
    let n_samples = traces.samples.first().map_or(0, |s| s.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-1.0, 1.0);
    let alphas: Vec<f64> = (0..n_samples).map(|_| dist.sample(&mut rng)).collect();
    apply_noise(traces, sigma, &alphas)
}

/// Noise model with externally supplied draws (deterministic test hook).
pub fn apply_noise(traces: &TimeTraces, sigma: f64, alphas: &[f64]) -> TimeTraces {
    let mut out = traces.clone();
    for series in &mut out.samples {
        let (lo, hi) = series
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        for (u, &alpha) in series.iter_mut().zip(alphas) {
            *u *= 1.0 + alpha * range * sigma;
        }
    }
    out
}

/// Composite-trapezoid Laplace transform of one node's samples over [0, T],
/// with samples at t_j = j tau.
pub fn laplace(samples: &[f64], tau: f64, s: f64) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (j, &u) in samples.iter().enumerate() {
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        acc += w * u * (-s * j as f64 * tau).exp();
    }
    tau * acc
}

/// psi = d/ds ln phi / s^2 - 2 ln phi / s^3, with d/ds ln phi by central
/// differences on the uniform s grid (one-sided at the ends). `phi` is one
/// node's values in descending s order.
pub fn compute_psi(grid: &PseudoFreqGrid, phi: &[f64], node: usize) -> Result<Vec<f64>> {
    let s = grid.s_values();
    debug_assert_eq!(phi.len(), s.len());
    let mut lnphi = Vec::with_capacity(phi.len());
    for (i, &p) in phi.iter().enumerate() {
        if p <= 0.0 {
            return Err(WaveError::NonpositiveTransform { node, s: s[i], value: p });
        }
        lnphi.push(p.ln());
    }
    let m = s.len();
    let mut psi = Vec::with_capacity(m);
    for i in 0..m {
        let dln = if i == 0 {
            (lnphi[1] - lnphi[0]) / (s[1] - s[0])
        } else if i == m - 1 {
            (lnphi[m - 1] - lnphi[m - 2]) / (s[m - 1] - s[m - 2])
        } else {
            (lnphi[i + 1] - lnphi[i - 1]) / (s[i + 1] - s[i - 1])
        };
        psi.push(dln / (s[i] * s[i]) - 2.0 * lnphi[i] / (s[i] * s[i] * s[i]));
    }
    Ok(psi)
}

/// Interval averages psi_n = (psi(s_n) + psi(s_{n-1})) / 2 for n = 1..N.
pub fn discretize_psi(psi: &[f64]) -> Vec<f64> {
    psi.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Full pipeline from (possibly noisy) traces to phi, psi and psi_n at
/// every trace node.
pub fn build_pseudo_freq_data(grid: &PseudoFreqGrid, traces: &TimeTraces) -> Result<PseudoFreqData> {
    let s = grid.s_values();
    let mut phi = Vec::with_capacity(traces.samples.len());
    let mut psi = Vec::with_capacity(traces.samples.len());
    let mut psi_n = Vec::with_capacity(traces.samples.len());
    for (node, series) in traces.samples.iter().enumerate() {
        let phi_node: Vec<f64> = s.iter().map(|&si| laplace(series, traces.tau, si)).collect();
        let psi_node = compute_psi(grid, &phi_node, traces.node_ids[node])?;
        psi_n.push(discretize_psi(&psi_node));
        phi.push(phi_node);
        psi.push(psi_node);
    }
    Ok(PseudoFreqData { grid: *grid, phi, psi, psi_n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traces_from(series: Vec<Vec<f64>>, tau: f64) -> TimeTraces {
        let n = series.first().map_or(0, |s| s.len());
        TimeTraces {
            node_ids: (0..series.len()).collect(),
            tau,
            t_final: (n.saturating_sub(1)) as f64 * tau,
            samples: series,
        }
    }

    fn sampled<F: Fn(f64) -> f64>(f: F, tau: f64, t_final: f64) -> Vec<f64> {
        let n = (t_final / tau).round() as usize;
        (0..=n).map(|j| f(j as f64 * tau)).collect()
    }

    #[test]
    fn grid_reference_values() {
        let g = PseudoFreqGrid::new(1.0, 19.0, 1.0, 20.0, 0.01).unwrap();
        assert_eq!(g.n_intervals(), 18);
        let s = g.s_values();
        assert_eq!(s.len(), 19);
        assert_eq!(s[0], 19.0);
        assert_eq!(s[18], 1.0);
        assert_eq!(g.interval(1), (18.0, 19.0));
        assert_eq!(g.interval(18), (1.0, 2.0));
    }

    #[test]
    fn grid_rejects_bad_partitions() {
        assert!(PseudoFreqGrid::new(0.5, 19.0, 1.0, 20.0, 0.01).is_err());
        assert!(PseudoFreqGrid::new(1.0, 19.0, 0.7, 20.0, 0.01).is_err());
        assert!(PseudoFreqGrid::new(19.0, 1.0, 1.0, 20.0, 0.01).is_err());
    }

    #[test]
    fn laplace_of_zero_is_zero() {
        let u = vec![0.0; 2001];
        assert_eq!(laplace(&u, 0.001, 3.0), 0.0);
    }

    #[test]
    fn laplace_of_unit_trace() {
        // int_0^2 e^{-t} dt = 1 - e^{-2}
        let u = vec![1.0; 2001];
        let v = laplace(&u, 0.001, 1.0);
        let exact = 1.0 - (-2.0f64).exp();
        assert!((v - exact).abs() < 1e-6, "v={v}, exact={exact}");
    }

    #[test]
    fn laplace_of_t_exp_decay() {
        // int_0^inf t e^{-t} e^{-5t} dt = 1/36; truncation at T=2 is e^{-12}-sized
        let u = sampled(|t| t * (-t).exp(), 0.001, 2.0);
        let v = laplace(&u, 0.001, 5.0);
        let exact = 1.0 / 36.0;
        assert!(((v - exact) / exact).abs() < 1e-4, "v={v}");
    }

    #[test]
    fn laplace_is_linear() {
        let u = sampled(|t| (3.0 * t).sin(), 0.01, 1.0);
        let w = sampled(|t| t * t - 0.5, 0.01, 1.0);
        let combo: Vec<f64> = u.iter().zip(&w).map(|(a, b)| 2.5 * a - 1.25 * b).collect();
        let lhs = laplace(&combo, 0.01, 4.0);
        let rhs = 2.5 * laplace(&u, 0.01, 4.0) - 1.25 * laplace(&w, 0.01, 4.0);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn laplace_of_nonnegative_is_nonnegative() {
        let u = sampled(|t| (t - 0.4).abs(), 0.01, 1.0);
        assert!(laplace(&u, 0.01, 2.0) >= 0.0);
    }

    #[test]
    fn noise_sigma_zero_is_identity() {
        let t = traces_from(vec![sampled(|t| t.sin(), 0.01, 1.0)], 0.01);
        let out = add_noise(&t, 0.0, 7);
        assert_eq!(out.samples, t.samples);
    }

    #[test]
    fn noise_zero_draws_is_identity() {
        let t = traces_from(vec![sampled(|t| t.cos(), 0.01, 1.0)], 0.01);
        let alphas = vec![0.0; t.samples[0].len()];
        let out = apply_noise(&t, 0.05, &alphas);
        assert_eq!(out.samples, t.samples);
    }

    #[test]
    fn noise_on_constant_trace_is_identity() {
        let t = traces_from(vec![vec![0.75; 101]], 0.01);
        let out = add_noise(&t, 0.05, 42);
        assert_eq!(out.samples, t.samples);
    }

    #[test]
    fn noise_bounded_by_sample_range() {
        // |u_sigma - u| = |u alpha range sigma| <= sigma range |u|
        let t = traces_from(
            vec![sampled(|t| (7.0 * t).sin(), 0.001, 2.0), sampled(|t| 2.0 * t - 1.0, 0.001, 2.0)],
            0.001,
        );
        let sigma = 0.05;
        let out = add_noise(&t, sigma, 11);
        for (orig, noisy) in t.samples.iter().zip(&out.samples) {
            let (lo, hi) = orig
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let range = hi - lo;
            for (&u, &us) in orig.iter().zip(noisy) {
                assert!((us - u).abs() <= sigma * range * u.abs() + 1e-15);
            }
        }
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let t = traces_from(vec![sampled(|t| t.sin(), 0.01, 1.0)], 0.01);
        let a = add_noise(&t, 0.05, 3);
        let b = add_noise(&t, 0.05, 3);
        let c = add_noise(&t, 0.05, 4);
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn psi_of_exponential_phi() {
        // phi = e^{-s}: ln phi linear, differences exact, psi = 1/s^2
        let g = PseudoFreqGrid::new(1.0, 5.0, 1.0, 20.0, 0.01).unwrap();
        let s = g.s_values();
        let phi: Vec<f64> = s.iter().map(|&si| (-si).exp()).collect();
        let psi = compute_psi(&g, &phi, 0).unwrap();
        for (i, &si) in s.iter().enumerate() {
            assert!((psi[i] - 1.0 / (si * si)).abs() < 1e-12, "s={si}");
        }
        // s = 2 sits at index 3
        assert!((psi[3] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn psi_of_constant_phi() {
        let g = PseudoFreqGrid::new(1.0, 4.0, 1.0, 20.0, 0.01).unwrap();
        let c: f64 = 3.0;
        let phi = vec![c; 4];
        let psi = compute_psi(&g, &phi, 0).unwrap();
        for (i, &si) in g.s_values().iter().enumerate() {
            let exact = -2.0 * c.ln() / (si * si * si);
            assert!((psi[i] - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn psi_of_slow_exponential_matches_symbolic() {
        // phi = e^{-0.3 s}: psi = -0.3/s^2 + 0.6 s/s^3 = 0.3/s^2
        let g = PseudoFreqGrid::new(1.0, 19.0, 1.0, 20.0, 0.01).unwrap();
        let s = g.s_values();
        let phi: Vec<f64> = s.iter().map(|&si| (-0.3 * si).exp()).collect();
        let psi = compute_psi(&g, &phi, 0).unwrap();
        for (i, &si) in s.iter().enumerate() {
            assert!((psi[i] - 0.3 / (si * si)).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_rejects_nonpositive_phi() {
        let g = PseudoFreqGrid::new(1.0, 3.0, 1.0, 20.0, 0.01).unwrap();
        let res = compute_psi(&g, &[1.0, -0.5, 1.0], 9);
        match res {
            Err(WaveError::NonpositiveTransform { node, s, value }) => {
                assert_eq!(node, 9);
                assert_eq!(s, 2.0);
                assert_eq!(value, -0.5);
            }
            other => panic!("expected NonpositiveTransform, got {other:?}"),
        }
    }

    #[test]
    fn discretize_constant_and_linear() {
        let c = vec![0.7; 5];
        for v in discretize_psi(&c) {
            assert_eq!(v, 0.7);
        }
        // linear in s: trapezoid equals the exact interval mean
        let g = PseudoFreqGrid::new(1.0, 5.0, 1.0, 20.0, 0.01).unwrap();
        let s = g.s_values();
        let lin: Vec<f64> = s.iter().map(|&si| 2.0 * si - 3.0).collect();
        let d = discretize_psi(&lin);
        for (n, v) in d.iter().enumerate() {
            let (lo, hi) = g.interval(n + 1);
            let mean = 2.0 * 0.5 * (lo + hi) - 3.0;
            assert!((v - mean).abs() < 1e-14);
        }
    }

    #[test]
    fn discretize_inverse_square() {
        // psi = 1/s^2 on [18, 19]: (1/324 + 1/361)/2
        let g = PseudoFreqGrid::new(1.0, 19.0, 1.0, 20.0, 0.01).unwrap();
        let s = g.s_values();
        let psi: Vec<f64> = s.iter().map(|&si| 1.0 / (si * si)).collect();
        let d = discretize_psi(&psi);
        let exact = 0.5 * (1.0 / 324.0 + 1.0 / 361.0);
        assert!((d[0] - exact).abs() < 1e-15);
        assert!((d[0] - 0.0029284).abs() < 5e-7);
        // and close to the exact integral mean 1/(18 * 19)
        assert!((d[0] - 1.0 / (18.0 * 19.0)).abs() < 1e-5);
    }

    #[test]
    fn full_pipeline_shapes() {
        let g = PseudoFreqGrid::new(1.0, 5.0, 1.0, 20.0, 0.01).unwrap();
        let t = traces_from(
            vec![sampled(|t| (t * 8.0).sin().abs() + 0.1, 0.001, 2.0); 3],
            0.001,
        );
        let d = build_pseudo_freq_data(&g, &t).unwrap();
        assert_eq!(d.phi.len(), 3);
        assert_eq!(d.phi[0].len(), 5);
        assert_eq!(d.psi[0].len(), 5);
        assert_eq!(d.psi_n[0].len(), 4);
        for p in &d.phi[0] {
            assert!(*p > 0.0);
        }
    }
}
