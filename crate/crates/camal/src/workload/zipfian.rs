//! Bounded Zipfian rank generator, YCSB-style.
//!
//! Rejection-free inverse-CDF approximation after Gray et al. ("Quickly
//! generating billion-record synthetic databases"), the algorithm YCSB's
//! `ZipfianGenerator` uses. Rank i (0-based) is drawn with probability
//! proportional to 1/(i+1)^theta. theta = 0 degenerates to uniform; theta
//! must stay < 1 for the closed form to exist.

use rand::Rng;

#[derive(Debug, Clone)]
pub struct ZipfianRanks {
    n: u64,
    alpha: f64,
    zetan: f64,
    eta: f64,
    threshold1: f64, // 1 + 0.5^theta
}

impl ZipfianRanks {
    pub fn new(n: u64, theta: f64) -> Self {
        assert!(n >= 1, "zipfian needs a nonempty rank space");
        assert!((0.0..1.0).contains(&theta), "theta must lie in [0, 1)");
        let zetan = zeta(n, theta);
        let zeta2 = zeta(2.min(n), theta);
        let alpha = 1.0 / (1.0 - theta);
        let eta = if n == 1 {
            1.0
        } else {
            (1.0 - (2.0 / n as f64).powf(1.0 - theta)) / (1.0 - zeta2 / zetan)
        };
        ZipfianRanks {
            n,
            alpha,
            zetan,
            eta,
            threshold1: 1.0 + 0.5f64.powf(theta),
        }
    }

    pub fn next<R: Rng>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        let uz = u * self.zetan;
        if uz < 1.0 {
            return 0;
        }
        if self.n >= 2 && uz < self.threshold1 {
            return 1;
        }
        let rank = (self.n as f64 * (self.eta * u - self.eta + 1.0).powf(self.alpha)) as u64;
        rank.min(self.n - 1)
    }
}

fn zeta(n: u64, theta: f64) -> f64 {
    let mut sum = 0.0;
    for i in 1..=n {
        sum += 1.0 / (i as f64).powf(theta);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn theta_zero_is_uniform_over_ranks() {
        let z = ZipfianRanks::new(1000, 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut counts = vec![0u64; 1000];
        let draws = 200_000;
        for _ in 0..draws {
            counts[z.next(&mut rng) as usize] += 1;
        }
        let expect = draws as f64 / 1000.0;
        // 3-sigma binomial band per bucket would be too tight jointly; use a
        // chi-squared bound instead (df = 999, far tail at ~1156).
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        assert!(chi2 < 1156.0, "chi2 = {chi2}");
    }

    #[test]
    fn skewed_rank_frequency_ratio() {
        // Most frequent vs 100th most frequent share should follow the
        // Zipfian ratio 100^theta within 10%.
        let n = 10_000u64;
        let theta = 0.99;
        let z = ZipfianRanks::new(n, theta);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut counts = vec![0u64; n as usize];
        for _ in 0..1_000_000 {
            counts[z.next(&mut rng) as usize] += 1;
        }
        let mut sorted = counts.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let ratio = sorted[0] as f64 / sorted[99] as f64;
        let want = 100f64.powf(theta);
        assert!(
            (ratio - want).abs() / want < 0.10,
            "ratio {ratio} vs zipfian {want}"
        );
    }
}
