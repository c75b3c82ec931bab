//! Temporary measurement probes; deleted once constants are frozen.

use camal::analytic::{theoretical_opt_memory, theoretical_opt_t, Environment, LsmConfig, Policy};
use camal::learner::{FeatureVector, LabelKind, ModelParams, ANALYTIC_ANCHOR, BASIS_DIM};
use camal::tuner::{filter_grid, EngineEvaluator, Evaluator};
use camal::workload::training_workloads;

fn test_profile() -> Environment {
    Environment::new(100_000, 64, 4096, 256 << 10, 8 << 10).unwrap()
}

#[test]
fn probe_stage_one_fit() {
    let env = test_profile();
    let mixes = training_workloads();
    let mut ev = EngineEvaluator {
        ops: 20_000,
        zipf_theta: None,
    };
    for wi in [0usize, 1, 12] {
        let mix = mixes[wi];
        let policy = Policy::Leveling;
        let t_star = theoretical_opt_t(&env, &mix, policy).unwrap();
        let mut samples: Vec<(FeatureVector, f64)> = Vec::new();
        for off in [-1i64, 0, 1] {
            let t = (t_star as i64 + off).clamp(2, env.max_size_ratio() as i64) as u32;
            let (mb, mf) = theoretical_opt_memory(&env, &mix, t, policy).unwrap();
            let cfg = LsmConfig {
                policy,
                size_ratio: t,
                buf_bytes: mb,
                filter_bytes: mf,
                cache_bytes: 0,
            };
            let m = ev.evaluate(&env, &cfg, &mix, 20_240_814).unwrap();
            println!(
                "w{:02} T={t} mb={mb} mf={mf}: io_per_op {:.4}",
                wi + 1,
                m.io_per_op
            );
            samples.push((FeatureVector::from_parts(&env, &mix, &cfg).unwrap(), m.io_per_op));
        }
        // scaled anchor exactly as the tuner computes it
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in &samples {
            let c: f64 = ANALYTIC_ANCHOR.iter().zip(x.basis).map(|(a, b)| a * b).sum();
            num += y * c;
            den += c * c;
        }
        let alpha = num / den;
        let anchor = ANALYTIC_ANCHOR.map(|a| a * alpha);
        let model = camal::learner::fit_poly_anchored_probe(&samples, &anchor).unwrap();
        let ModelParams::Poly(p) = &model.params else {
            panic!()
        };
        let tilt: Vec<f64> = p
            .beta
            .iter()
            .zip(anchor)
            .map(|(b, a)| b - a)
            .collect();
        println!("w{:02} alpha {alpha:.4}", wi + 1);
        println!("  beta  {:?}", &p.beta[..8]);
        println!("  tilt  {:?}", &tilt[..8]);
        // model argmin over the full range at cache 0
        let grid = filter_grid(&env, 0);
        let mut best: Option<(u32, u64, f64)> = None;
        for t in 2..=env.max_size_ratio() {
            for &mf in &grid {
                let cfg = LsmConfig {
                    policy,
                    size_ratio: t,
                    buf_bytes: env.mem_bytes - mf,
                    filter_bytes: mf,
                    cache_bytes: 0,
                };
                let x = FeatureVector::from_parts(&env, &mix, &cfg).unwrap();
                let pr: f64 = p.beta.iter().zip(x.basis).map(|(b, v)| b * v).sum();
                if best.map_or(true, |(_, _, bp)| pr < bp) {
                    best = Some((t, mf, pr));
                }
            }
        }
        println!("  model argmin: {:?} (t_star was {t_star})", best);
        let _ = BASIS_DIM;
    }
}
