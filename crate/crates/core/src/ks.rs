//! One-sample Kolmogorov–Smirnov test against U(0, 1).

const SWITCH: f64 = 1.18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub pvalue: f64,
    pub n: usize,
}

/// `D_n = sup_t |F_n(t) - t|` for a sample in `[0, 1]`.
pub fn ks_statistic(sample: &[f64]) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter().enumerate().fold(0.0f64, |d, (i, &u)| {
        let hi = (i + 1) as f64 / n - u;
        let lo = u - i as f64 / n;
        d.max(hi).max(lo)
    })
}

/// `P(K > x)` for the Kolmogorov distribution `K = sup |B(t)|`.
///
/// Two series are used: the alternating tail series converges fast for
/// large `x`, the Jacobi-theta form for small `x`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x >= SWITCH {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    } else {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut sum = 0.0;
        for k in 1..=100 {
            let m = (2 * k - 1) as f64;
            let term = (-m * m * pi2 / (8.0 * x * x)).exp();
            sum += term;
            if term < 1e-300 {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / x * sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    }
}

/// Statistic and asymptotic p-value `P(K > √n D_n)`.
pub fn ks_uniform(sample: &[f64]) -> KsResult {
    let statistic = ks_statistic(sample);
    let n = sample.len();
    KsResult {
        statistic,
        pvalue: kolmogorov_sf((n as f64).sqrt() * statistic),
        n,
    }
}

/// Sorted `(u_(i), i/n - u_(i))` pairs for a deviation-from-uniformity plot.
pub fn deviation_curve(sample: &[f64]) -> Vec<(f64, f64)> {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &u)| (u, (i + 1) as f64 / n - u))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;

    #[test]
    fn series_agree_at_switch() {
        // Evaluate both branches just around the switch point.
        let below = kolmogorov_sf(SWITCH - 1e-12);
        let above = kolmogorov_sf(SWITCH);
        assert!((below - above).abs() < 1e-12);
    }

    #[test]
    fn known_quantiles() {
        // Classical critical values of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_sf(1.2238) - 0.10).abs() < 1e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(kolmogorov_sf(0.2) > 0.999_999);
    }

    #[test]
    fn mean_is_root_half_pi_ln2() {
        // E[K] = √(π/2) ln 2 = ∫_0^∞ P(K > x) dx.
        let gl = GaussLegendre::new(40);
        let m: f64 = (0..40)
            .map(|i| {
                let a = i as f64 * 0.1;
                gl.integrate(a, a + 0.1, kolmogorov_sf)
            })
            .sum();
        let exact = (std::f64::consts::PI / 2.0).sqrt() * std::f64::consts::LN_2;
        assert!((m - exact).abs() < 1e-9, "{m} vs {exact}");
    }

    #[test]
    fn hand_statistic() {
        assert!((ks_statistic(&[0.5]) - 0.5).abs() < 1e-15);
        let d = ks_statistic(&[0.1, 0.2, 0.9]);
        // F_n jumps to 2/3 at 0.2, giving 2/3 - 0.2.
        assert!((d - (2.0 / 3.0 - 0.2)).abs() < 1e-15);
        let grid: Vec<f64> = (1..=10).map(|i| (i as f64 - 0.5) / 10.0).collect();
        assert!((ks_statistic(&grid) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn deviation_ends_at_zero_for_full_support() {
        let dev = deviation_curve(&[0.3, 1.0, 0.6]);
        assert_eq!(dev.last().unwrap().1, 0.0);
        assert_eq!(dev[0].0, 0.3);
    }
}
