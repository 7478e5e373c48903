//! Parity of the Monte Carlo risk engine against a brute-force oracle built
//! on a completely separate RNG path (a 64-bit LCG instead of splitmix64),
//! so shared bugs in seeding or sampling cannot cancel out.

use oodle_core::risk::{expected_error, DataPlan, ErrorSpec};
use oodle_core::{LearnerKind, LearnerSpec, MixtureDraw, MixtureWorld, World, WorldPair};

/// Knuth's MMIX multiplier; deliberately not the generator the crate uses.
struct Lcg(u64);

impl Lcg {
    fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0
    }

    fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }
}

/// Oracle expected error of the max-zero-threshold learner: draw `m` samples
/// from `P_{z_data}` (or a two-component mixture), fit by direct scan, score
/// `|c - z_eval|` in closed form, average over trials.
fn oracle_expected_error(
    z_data: &[(f64, f64)], // (z, weight) components; single entry = plain world
    z_eval: f64,
    m: usize,
    trials: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = Lcg(seed);
    let mut risks = Vec::with_capacity(trials);
    for _ in 0..trials {
        let z = if z_data.len() == 1 {
            z_data[0].0
        } else {
            let coin = rng.uniform();
            let mut acc = 0.0;
            let mut picked = z_data[z_data.len() - 1].0;
            for &(z, w) in z_data {
                acc += w;
                if coin < acc {
                    picked = z;
                    break;
                }
            }
            picked
        };
        let risk = if m == 0 {
            0.5
        } else {
            let mut c = f64::NEG_INFINITY;
            let mut any_zero = false;
            for _ in 0..m {
                let x = rng.uniform();
                if x <= z {
                    any_zero = true;
                    c = c.max(x);
                }
            }
            let c = if any_zero { c } else { 0.0 };
            (c - z_eval).abs()
        };
        risks.push(risk);
    }
    let mean = risks.iter().sum::<f64>() / trials as f64;
    let var =
        risks.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (trials - 1) as f64;
    (mean, (var / trials as f64).sqrt())
}

fn engine_estimate(pair: WorldPair, m: usize, trials: usize, seed: u64) -> (f64, f64) {
    let est = expected_error(
        &ErrorSpec::new(pair, LearnerSpec::new(LearnerKind::MaxZeroThreshold), DataPlan {
            n: 0,
            m,
        })
        .with_trials(trials)
        .with_seed(seed),
    )
    .unwrap();
    (est.mean, est.std_err)
}

fn assert_parity(name: &str, a: (f64, f64), b: (f64, f64)) {
    let tol = 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt();
    assert!(
        (a.0 - b.0).abs() <= tol,
        "{name}: engine {} vs oracle {} (tol {tol})",
        a.0,
        b.0
    );
}

#[test]
fn in_distribution_parity() {
    let pair = WorldPair::in_distribution(World::threshold(0.6).unwrap());
    let engine = engine_estimate(pair, 1000, 1000, 77);
    let oracle = oracle_expected_error(&[(0.6, 1.0)], 0.6, 1000, 4000, 123);
    assert_parity("P_0.6 m=1000", engine, oracle);
}

#[test]
fn shifted_evaluation_parity() {
    let pair = WorldPair::new(World::threshold(0.8).unwrap(), World::threshold(0.7).unwrap());
    let engine = engine_estimate(pair, 50, 1500, 78);
    let oracle = oracle_expected_error(&[(0.7, 1.0)], 0.8, 50, 6000, 456);
    assert_parity("data P_0.7 eval P_0.8 m=50", engine, oracle);
}

#[test]
fn mixture_parity() {
    let mixture = World::Mixture(
        MixtureWorld::new(
            vec![
                (World::threshold(0.7).unwrap(), 0.5),
                (World::threshold(0.1).unwrap(), 0.5),
            ],
            MixtureDraw::PerDataset,
        )
        .unwrap(),
    );
    let pair = WorldPair::new(World::threshold(0.8).unwrap(), mixture);
    let engine = engine_estimate(pair, 200, 1500, 79);
    let oracle = oracle_expected_error(&[(0.7, 0.5), (0.1, 0.5)], 0.8, 200, 6000, 789);
    assert_parity("mixture m=200", engine, oracle);
}
