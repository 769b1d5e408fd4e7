//! The network baseline on deterministic block traffic.

use specpred::eval::{evaluate, EvalSpec};
use specpred::mlp::{build_nn_pairs, train, MlpConfig};
use specpred::traffic::{generate_synthetic, SyntheticSpec};
use specpred::{MarkovModel, StateSpace, Trace};

fn blocks(b: usize, n: usize, start: u8) -> Trace {
    generate_synthetic(&SyntheticSpec::periodic(b, n, start)).unwrap()
}

/// Success rate per horizon of the best possible predictor on periodic
/// traffic: enumerate every phase consistent with the sensed window and
/// predict the majority outcome (ties go to idle).
fn phase_oracle(period: &[u8], test: &Trace, m: usize, max_h: usize) -> Vec<f64> {
    let p = period.len();
    let at = |phase: usize, offset: isize| period[(phase as isize + offset).rem_euclid(p as isize) as usize];
    let positions: Vec<usize> = (m - 1..test.len() - max_h).collect();
    let mut correct = vec![0usize; max_h];
    for &t in &positions {
        let window = test.window(t, m);
        let phases: Vec<usize> = (0..p)
            .filter(|&ph| (0..m).all(|k| at(ph, -(k as isize)) == window[k]))
            .collect();
        assert!(!phases.is_empty());
        for h in 1..=max_h {
            let ones = phases.iter().filter(|&&ph| at(ph, h as isize) == 1).count();
            let guess = u8::from(2 * ones > phases.len());
            if guess == test.states()[t + h] {
                correct[h - 1] += 1;
            }
        }
    }
    correct.iter().map(|&c| c as f64 / positions.len() as f64).collect()
}

#[test]
fn small_blocks_match_markov_exactly() {
    let train_trace = blocks(3, 600, 1);
    let test = blocks(3, 300, 0);
    let cfg = MlpConfig {
        input_size: 3,
        output_size: 6,
        rng_seed: 1,
        ..MlpConfig::default()
    };
    let outcome = train(&cfg, &build_nn_pairs(&train_trace, 3, 6).unwrap()).unwrap();
    let markov = MarkovModel::estimate(StateSpace::full(3).unwrap(), &train_trace).unwrap();

    for t in 2..test.len() - 6 {
        let sensed = test.window(t, 3);
        for h in 1..=6 {
            let nn = specpred::mlp::predict_nn(&outcome.model, &sensed, h).unwrap();
            let mk = markov.predict(&sensed, h).unwrap();
            assert_eq!(nn.hard, mk.hard, "t={t} h={h}");
            assert_eq!(nn.hard, test.states()[t + h]);
        }
    }
}

#[test]
fn long_blocks_reach_the_phase_oracle() {
    let (b, m, t_train) = (16, 10, 32);
    let train_trace = blocks(b, 1200, 1);
    let test = blocks(b, 640, 0);
    let cfg = MlpConfig {
        input_size: m,
        output_size: t_train,
        rng_seed: 3,
        ..MlpConfig::default()
    };
    let outcome = train(&cfg, &build_nn_pairs(&train_trace, m, t_train).unwrap()).unwrap();
    let spec = EvalSpec::new("mlp", m, t_train, &test).trained_on(&train_trace);
    let report = evaluate(&spec, &outcome.model).unwrap();

    let period: Vec<u8> = blocks(b, 2 * b, 1).states().to_vec();
    let oracle = phase_oracle(&period, &test, m, t_train);
    // windows inside a constant run of 16 cannot reveal the phase, so the
    // oracle itself stays below 1 at most horizons
    assert!(oracle.iter().any(|&r| r < 1.0));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&report.success_rate) >= mean(&oracle) - 0.02,
        "network {:.4} vs oracle {:.4}",
        mean(&report.success_rate),
        mean(&oracle)
    );
    // every horizon the oracle gets fully right, the network does too
    for (h, (&nn, &or)) in report.success_rate.iter().zip(&oracle).enumerate() {
        if or == 1.0 {
            assert_eq!(nn, 1.0, "horizon {}", h + 1);
        }
    }
}
