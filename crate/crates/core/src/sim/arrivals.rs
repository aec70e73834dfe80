use rand::Rng;

use super::config::{ArrivalProcess, SimConfig};
use crate::model::Task;
use crate::seed::{self, stream};

/// Smallest `k` with `P(Poisson(λ) ≤ k) ≥ u`. The pmf recursion runs in log
/// space so large rates do not underflow.
pub fn poisson_quantile(lambda: f64, u: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let mut log_p = -lambda;
    let mut cdf = log_p.exp();
    let mut k = 0u64;
    // The upper cap only guards against u rounding to 1.
    let cap = (lambda + 40.0 * lambda.sqrt() + 40.0) as u64;
    while cdf < u && k < cap {
        k += 1;
        log_p += lambda.ln() - (k as f64).ln();
        cdf += log_p.exp();
    }
    k
}

fn task_count(config: &SimConfig, slot: u64, device: usize) -> u64 {
    let lambda = config.arrival_rate;
    match config.arrival_process {
        ArrivalProcess::Poisson => {
            let u: f64 = seed::rng(config.seed, &[stream::ARRIVALS, slot, device as u64]).gen();
            poisson_quantile(lambda, u)
        }
        ArrivalProcess::Periodic => {
            let s = slot as f64;
            ((s + 1.0) * lambda).floor() as u64 - (s * lambda).floor() as u64
        }
    }
}

/// Tasks arriving in `slot`, devices in id order, ids numbered from
/// `first_id`.
///
/// Counts come from inverting the Poisson CDF at one uniform per (seed,
/// slot, device), and the k-th task of a device draws its size from its own
/// stream. Runs that differ only in arrival rate therefore share their
/// randomness: a higher rate yields a superset of the same tasks.
pub fn generate_arrivals(config: &SimConfig, slot: u64, first_id: u64) -> Vec<Task> {
    let mut out = Vec::new();
    for device in 0..config.num_devices {
        for k in 0..task_count(config, slot, device) {
            let mut rng = seed::rng(config.seed, &[stream::SIZES, slot, device as u64, k]);
            let size = rng.gen_range(config.data_size_min..=config.data_size_max);
            out.push(Task {
                id: first_id + out.len() as u64,
                data_size: f64::from(size),
                deadline: config.deadline,
                energy_budget: config.energy_budget,
                origin_device: device,
                created_slot: slot,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_never_arrives() {
        let c = SimConfig {
            arrival_rate: 0.0,
            ..SimConfig::desk_scale()
        };
        assert!((0..200).all(|s| generate_arrivals(&c, s, 0).is_empty()));
    }

    #[test]
    fn data_size_mean_matches_uniform() {
        let c = SimConfig {
            arrival_rate: 5.0,
            ..SimConfig::desk_scale()
        };
        let mut sizes = Vec::new();
        let mut slot = 0;
        while sizes.len() < 100_000 {
            sizes.extend(generate_arrivals(&c, slot, 0).iter().map(|t| t.data_size));
            slot += 1;
        }
        let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
        assert!((mean - 250.5).abs() < 5.0, "{mean}");
        assert!(sizes.iter().all(|&s| (1.0..=500.0).contains(&s) && s.fract() == 0.0));
    }

    #[test]
    fn same_seed_same_stream() {
        let c = SimConfig::desk_scale();
        for s in 0..20 {
            assert_eq!(generate_arrivals(&c, s, 10), generate_arrivals(&c, s, 10));
        }
        let other = SimConfig { seed: 99, ..c.clone() };
        let a: Vec<_> = (0..20).flat_map(|s| generate_arrivals(&c, s, 0)).collect();
        let b: Vec<_> = (0..20).flat_map(|s| generate_arrivals(&other, s, 0)).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn poisson_count_mean() {
        let c = SimConfig {
            arrival_rate: 0.7,
            ..SimConfig::desk_scale()
        };
        let total: usize = (0..2000).map(|s| generate_arrivals(&c, s, 0).len()).sum();
        let mean = total as f64 / (2000.0 * 20.0);
        assert!((mean - 0.7).abs() < 0.03, "{mean}");
    }

    #[test]
    fn quantile_matches_poisson_cdf() {
        // P(X = 0) = e^-1 ≈ 0.3679, P(X ≤ 1) ≈ 0.7358, P(X ≤ 2) ≈ 0.9197.
        assert_eq!(poisson_quantile(1.0, 0.30), 0);
        assert_eq!(poisson_quantile(1.0, 0.50), 1);
        assert_eq!(poisson_quantile(1.0, 0.90), 2);
        assert_eq!(poisson_quantile(1.0, 0.95), 3);
        assert_eq!(poisson_quantile(0.0, 0.99), 0);
        let big = poisson_quantile(2000.0, 0.5);
        assert!((1990..=2010).contains(&big), "{big}");
    }

    #[test]
    fn higher_rate_is_a_superset() {
        let lo = SimConfig {
            arrival_rate: 0.4,
            ..SimConfig::desk_scale()
        };
        let hi = SimConfig { arrival_rate: 1.3, ..lo.clone() };
        for s in 0..50 {
            let key = |t: &Task| (t.origin_device, t.data_size as u64);
            let a: Vec<_> = generate_arrivals(&lo, s, 0).iter().map(key).collect();
            let b: Vec<_> = generate_arrivals(&hi, s, 0).iter().map(key).collect();
            for d in 0..20 {
                let da: Vec<_> = a.iter().filter(|x| x.0 == d).collect();
                let db: Vec<_> = b.iter().filter(|x| x.0 == d).collect();
                assert!(db.starts_with(&da));
            }
        }
    }

    #[test]
    fn periodic_process_is_exact() {
        let c = SimConfig {
            arrival_rate: 0.5,
            arrival_process: ArrivalProcess::Periodic,
            num_devices: 2,
            ..SimConfig::default()
        };
        let counts: Vec<usize> = (0..6).map(|s| generate_arrivals(&c, s, 0).len()).collect();
        assert_eq!(counts, vec![0, 2, 0, 2, 0, 2]);
    }
}
