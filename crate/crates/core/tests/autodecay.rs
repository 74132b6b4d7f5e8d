mod common;

use common::naive_controller;
use lrdecay::autodecay::{observe, step, AutoDecayConfig, Controller, ControllerState, Decision};
use proptest::prelude::*;

fn cfg(window: usize) -> AutoDecayConfig<f64> {
    AutoDecayConfig {
        window,
        ..AutoDecayConfig::default()
    }
}

fn decisions(c: &AutoDecayConfig<f64>, lr0: f64, stream: &[f64]) -> Vec<(&'static str, f64, u32)> {
    let mut ctl = Controller::new(*c, lr0).unwrap();
    let mut out = Vec::new();
    for &l in stream {
        let r = ctl.observe(l).unwrap();
        out.push((r.decision.label(), r.lr, r.stage));
        if r.decision == Decision::Terminate {
            break;
        }
    }
    out
}

fn naive(c: &AutoDecayConfig<f64>, lr0: f64, stream: &[f64]) -> Vec<(&'static str, f64, u32)> {
    naive_controller(
        stream,
        lr0,
        c.beta,
        c.window,
        c.eta_tol,
        c.zeta,
        c.eps,
        c.decay_factor,
        c.min_lr,
    )
}

/// 1.0 for ten epochs, then 0.5 forever.
fn drop_then_plateau(len: usize) -> Vec<f64> {
    (0..len).map(|i| if i < 10 { 1.0 } else { 0.5 }).collect()
}

#[test]
fn constant_stream_terminates_exactly_at_window() {
    for w in [2, 5, 10, 17] {
        let d = decisions(&cfg(w), 0.1, &vec![0.42; 100]);
        assert_eq!(d.len(), w);
        assert!(d[..w - 1].iter().all(|x| x.0 == "continue"));
        assert_eq!(d[w - 1].0, "terminate");
    }
}

#[test]
fn drop_then_plateau_hand_trace() {
    // beta 0.9, W 5, zeta 0.9. A 1.0 plateau of ten epochs is stable at epoch
    // 5 with no drop, so the controller terminates before the drop arrives.
    let c = AutoDecayConfig {
        beta: 0.9,
        window: 5,
        zeta: 0.9,
        ..AutoDecayConfig::default()
    };
    let d = decisions(&c, 0.1, &drop_then_plateau(200));
    assert_eq!(d.len(), 5);
    assert_eq!(d[4].0, "terminate");

    // With only three epochs at 1.0 the window cannot stabilize before the
    // drop; the smoothed loss settles near 0.5 and the first stable window at
    // epoch 24 decays. The fresh second stage sees a constant 0.5 and
    // terminates W epochs later.
    let stream: Vec<f64> = (0..200).map(|i| if i < 3 { 1.0 } else { 0.5 }).collect();
    let d = decisions(&c, 0.1, &stream);
    let decays: Vec<usize> = d
        .iter()
        .enumerate()
        .filter(|(_, x)| x.0 == "decay")
        .map(|(i, _)| i + 1)
        .collect();
    assert_eq!(decays, vec![24]);
    assert_eq!(
        d.len(),
        29,
        "second stage sees a constant stream and stops after W epochs"
    );
    assert_eq!(d.last().unwrap().0, "terminate");
    assert_eq!(d[23].1, 0.1);
    assert!((d[24].1 - 0.01).abs() < 1e-18);
    assert_eq!((d[23].2, d[24].2), (1, 2));
    assert_eq!(d, naive(&c, 0.1, &stream));
}

#[test]
fn decay_fully_resets_the_stage() {
    let c = AutoDecayConfig {
        window: 5,
        ..AutoDecayConfig::default()
    };
    let stream: Vec<f64> = (0..30).map(|i| if i < 3 { 1.0 } else { 0.5 }).collect();
    let mut s = ControllerState::new(&c, 0.1).unwrap();
    for &l in &stream {
        let (next, d) = observe(s, &c, l).unwrap();
        s = next;
        if let Decision::Decay { new_lr } = d {
            assert_eq!(s.edma().t(), 0);
            assert_eq!(s.window().len(), 0);
            assert_eq!(s.g_ref(), None);
            assert_eq!(s.stage(), 2);
            assert_eq!(s.current_lr(), new_lr);
            return;
        }
    }
    panic!("no decay");
}

#[test]
fn hundred_reruns_are_identical() {
    let c = cfg(6);
    let stream: Vec<f64> = (0..400)
        .map(|i| 2.0 / (1.0 + i as f64 / 15.0) + 0.01 * ((i * 7919) % 13) as f64)
        .collect();
    let first = decisions(&c, 0.5, &stream);
    for _ in 0..100 {
        assert_eq!(decisions(&c, 0.5, &stream), first);
    }
}

#[test]
fn step_report_matches_state() {
    let c = cfg(3);
    let s = ControllerState::new(&c, 0.2).unwrap();
    let (s, r) = step(s, &c, 1.0).unwrap();
    assert_eq!(
        (r.raw_loss, r.g_hat, r.stable, r.drop),
        (1.0, 1.0, false, false)
    );
    assert_eq!(s.g_ref(), Some(1.0));
}

#[test]
fn single_precision_controller_agrees() {
    let c32 = AutoDecayConfig::<f32> {
        window: 5,
        ..AutoDecayConfig::default()
    };
    let stream: Vec<f64> = (0..100).map(|i| if i < 3 { 1.0 } else { 0.5 }).collect();
    let mut ctl = Controller::new(c32, 0.1f32).unwrap();
    let mut labels = Vec::new();
    for &l in &stream {
        let r = ctl.observe(l as f32).unwrap();
        labels.push(r.decision.label());
        if r.decision == Decision::Terminate {
            break;
        }
    }
    let want: Vec<&str> = decisions(&cfg(5), 0.1, &stream)
        .iter()
        .map(|d| d.0)
        .collect();
    assert_eq!(labels, want);
}

proptest! {
    /// The incremental controller and the from-scratch oracle agree on every
    /// decision for arbitrary decaying-with-noise loss curves.
    #[test]
    fn matches_naive_oracle(
        start in 0.5f64..5.0,
        rate in 0.0f64..0.2,
        floor in 0.01f64..0.5,
        jitter in prop::collection::vec(-0.01f64..0.01, 300),
        w in 2usize..12,
        eta in 0.005f64..0.05,
    ) {
        let c = AutoDecayConfig { window: w, eta_tol: eta, ..AutoDecayConfig::default() };
        let stream: Vec<f64> = jitter
            .iter()
            .enumerate()
            .map(|(i, j)| floor + (start - floor) * (-rate * i as f64).exp() + j * floor)
            .collect();
        let got = decisions(&c, 1.0, &stream);
        let want = naive(&c, 1.0, &stream);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!(g.0, w.0);
            prop_assert_eq!(g.2, w.2);
            prop_assert!((g.1 - w.1).abs() <= 1e-12 * w.1);
        }
    }

    #[test]
    fn lr_never_increases_and_respects_floor(stream in prop::collection::vec(0.01f64..3.0, 1..300)) {
        let c = cfg(3);
        let d = decisions(&c, 0.1, &stream);
        for pair in d.windows(2) {
            prop_assert!(pair[1].1 <= pair[0].1);
            prop_assert!(pair[1].2 >= pair[0].2);
        }
        prop_assert!(d.iter().all(|x| x.1 >= c.min_lr));
        prop_assert!(d.iter().filter(|x| x.0 == "terminate").count() <= 1);
    }
}
