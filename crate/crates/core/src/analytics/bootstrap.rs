use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::AnalyticsError;

/// Random stream for bootstrap draw `draw`, independent of evaluation order.
pub fn draw_rng(seed: u64, draw: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    rng
}

/// Standard error of `statistic` by resampling whole units with replacement.
///
/// The statistic receives the indices of the drawn units, so callers can
/// resample experiments while computing over their frames. The returned SE
/// is the sample standard deviation of the resampled statistic.
pub fn bootstrap_se<F>(n_units: usize, statistic: F, n_resamples: usize, seed: u64) -> Result<f64, AnalyticsError>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    if n_units < 2 {
        return Err(AnalyticsError::InsufficientData {
            what: "bootstrap units".into(),
            found: n_units,
            needed: 2,
        });
    }
    if n_resamples < 2 {
        return Err(AnalyticsError::InsufficientData {
            what: "bootstrap resamples".into(),
            found: n_resamples,
            needed: 2,
        });
    }
    let stats: Vec<f64> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|d| {
            let mut rng = draw_rng(seed, d);
            let idx: Vec<usize> = (0..n_units).map(|_| rng.random_range(0..n_units)).collect();
            statistic(&idx)
        })
        .collect();
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (stats.len() - 1) as f64;
    Ok(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_of(values: &[f64]) -> impl Fn(&[usize]) -> f64 + Sync + '_ {
        move |idx| idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
    }

    #[test]
    fn identical_units_have_zero_error() {
        let v = [3.5; 6];
        assert_eq!(bootstrap_se(6, mean_of(&v), 200, 1).unwrap(), 0.0);
    }

    /// Exact bootstrap SE of the mean: enumerate every multiset of draws.
    fn enumerated_se(values: &[f64]) -> f64 {
        let n = values.len();
        let total = n.pow(n as u32);
        let mut stats = Vec::with_capacity(total);
        for code in 0..total {
            let mut c = code;
            let mut s = 0.0;
            for _ in 0..n {
                s += values[c % n];
                c /= n;
            }
            stats.push(s / n as f64);
        }
        let m = stats.iter().sum::<f64>() / total as f64;
        (stats.iter().map(|x| (x - m).powi(2)).sum::<f64>() / total as f64).sqrt()
    }

    #[test]
    fn two_unit_mean_matches_enumeration() {
        let v = [0.0, 1.0];
        let exact = enumerated_se(&v);
        assert!((exact - 0.125f64.sqrt()).abs() < 1e-15);
        let se = bootstrap_se(2, mean_of(&v), 20_000, 9).unwrap();
        assert!((se - exact).abs() < 0.05 * exact, "{se} vs {exact}");
    }

    #[test]
    fn small_set_matches_enumeration() {
        let v = [1.0, 4.0, 2.5, 9.0, 0.5];
        let exact = enumerated_se(&v);
        let se = bootstrap_se(v.len(), mean_of(&v), 20_000, 3).unwrap();
        assert!((se - exact).abs() < 0.03 * exact, "{se} vs {exact}");
    }

    #[test]
    fn seeded_and_guarded() {
        let v = [1.0, 2.0, 7.0];
        assert_eq!(
            bootstrap_se(3, mean_of(&v), 500, 4).unwrap(),
            bootstrap_se(3, mean_of(&v), 500, 4).unwrap()
        );
        assert!(bootstrap_se(1, mean_of(&v), 500, 4).is_err());
    }
}
