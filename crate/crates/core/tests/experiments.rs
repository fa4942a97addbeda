use std::sync::Arc;

use v2i_core::harness::{bundled_scenario, run_trial, run_with_codebook, TrialContext, TrialRecord};

fn nmse_x(records: &[&TrialRecord]) -> f64 {
    let kept: Vec<f64> = records
        .iter()
        .filter(|r| r.truth.x.abs() >= 0.5)
        .map(|r| ((r.truth.x - r.estimate.x) / r.truth.x).powi(2))
        .collect();
    kept.iter().sum::<f64>() / kept.len() as f64
}

#[test]
fn aggregates_do_not_depend_on_trial_order() {
    let mut s = bundled_scenario("beam-dft2").unwrap();
    s.trials = 6;
    s.horizon = 120;
    let ctx = TrialContext::new(&s, s.array.tx_power_dbm, None).unwrap();
    let forward: Vec<Vec<TrialRecord>> = (0..6).map(|t| run_trial(&ctx, t).unwrap()).collect();
    let backward: Vec<Vec<TrialRecord>> = (0..6).rev().map(|t| run_trial(&ctx, t).unwrap()).collect();
    let a = nmse_x(&forward.iter().flatten().collect::<Vec<_>>());
    let b = nmse_x(&backward.iter().flatten().collect::<Vec<_>>());
    assert!((a - b).abs() <= 1e-12 * a);

    let summary = run_with_codebook(&s, s.array.tx_power_dbm, None, false).unwrap().summary;
    assert!((summary.nmse_x - a).abs() <= 1e-12 * a, "{} vs {a}", summary.nmse_x);
}

#[test]
fn codebook_trials_respect_the_gain_bound_and_switch_on_schedule() {
    let mut s = bundled_scenario("beam-codebook").unwrap();
    s.trials = 2;
    s.horizon = 200;
    s.array.antennas = 16;
    if let v2i_core::harness::Beamforming::Codebook { resolutions, .. } = &mut s.beamforming {
        *resolutions = vec![16];
    }
    let cb = Arc::new(s.codebook().unwrap().unwrap());
    let ctx = TrialContext::new(&s, s.array.tx_power_dbm, Some(cb.clone())).unwrap();
    for trial in 0..2 {
        let recs = run_trial(&ctx, trial).unwrap();
        for r in &recs {
            let g = r.gain.unwrap();
            assert!((0.0..=1.0 + 1e-6).contains(&g), "gain {g}");
            assert!(r.rate.unwrap() >= 0.0);
            let q = r.beam_index.unwrap();
            assert!((1..=cb.len()).contains(&q));
        }
        for block in recs.chunks(s.omega) {
            assert!(block.iter().all(|r| r.beam_index == block[0].beam_index));
        }
    }
}

#[test]
fn manifold_and_proposed_share_the_truth() {
    let mut p = bundled_scenario("tracking-proposed").unwrap();
    p.horizon = 50;
    let mut m = bundled_scenario("tracking-manifold").unwrap();
    m.horizon = 50;
    let tp = run_trial(&TrialContext::new(&p, 10.0, None).unwrap(), 4).unwrap();
    let tm = run_trial(&TrialContext::new(&m, 10.0, None).unwrap(), 4).unwrap();
    assert!(tp.iter().zip(&tm).all(|(a, b)| a.truth == b.truth));
    assert!(tm.iter().all(|r| r.alpha_hat.is_none() && r.estimate.is_finite()));
}
