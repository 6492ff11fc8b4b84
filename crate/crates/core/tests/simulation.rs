use mudra::controller::target_condition;
use mudra::exec::ExecMode;
use mudra::export::{read_trace, trace_to_string};
use mudra::feedback::{estimates, FeedbackConfig, FeedbackState};
use mudra::sim::check_window_trace;
use mudra::sla::Thresholds;
use mudra::{parse_scenario, run, run_with, summarize, ControllerKind, RateAction};
use proptest::prelude::*;

fn small(nodes: usize, duration_s: f64) -> mudra::Scenario {
    mudra::Scenario {
        nodes,
        duration_s,
        ..mudra::Scenario::default()
    }
}

#[test]
fn runs_are_reproducible_and_mode_independent() {
    let s = small(60, 40.0);
    for kind in ControllerKind::ALL {
        let a = trace_to_string(&run_with(&s, kind, 11, ExecMode::Serial).unwrap()).unwrap();
        let b = trace_to_string(&run_with(&s, kind, 11, ExecMode::Parallel).unwrap()).unwrap();
        let c = trace_to_string(&run(&s, kind, 11).unwrap()).unwrap();
        assert_eq!(a, b, "{kind:?}");
        assert_eq!(a, c, "{kind:?}");
    }
}

#[test]
fn different_seeds_give_different_populations() {
    let s = small(60, 10.0);
    let a = run(&s, ControllerKind::Fixed, 1).unwrap();
    let b = run(&s, ControllerKind::Fixed, 2).unwrap();
    assert_ne!(a.frames[0].node_pdr, b.frames[0].node_pdr);
}

#[test]
fn scenario_text_drives_the_run() {
    let s = parse_scenario(
        "name = \"tiny\"\nnodes = 30\nduration_s = 5\ncontrollers = [\"sra\", \"fixed\"]\nfixed_rate_mbps = 12\n",
        "tiny.toml",
    )
    .unwrap();
    let t = run(&s, ControllerKind::Fixed, 3).unwrap();
    assert_eq!(t.frames.len() as u64, s.intervals());
    assert!(t.frames.iter().all(|f| f.rate.mbps() == 12));
    assert_eq!(t.scenario, "tiny");
}

#[test]
fn exported_trace_reproduces_summary() {
    let s = small(40, 30.0);
    let t = run(&s, ControllerKind::Mudra, 5).unwrap();
    let back = read_trace(trace_to_string(&t).unwrap().as_bytes()).unwrap();
    let a = summarize(&t, s.thresholds.low);
    let b = summarize(&back, s.thresholds.low);
    assert_eq!(a.rate_changes, b.rate_changes);
    assert_eq!(a.airtime, b.airtime);
    assert!((a.mean_throughput_mbps - b.mean_throughput_mbps).abs() < 1e-9);
    assert!((a.control_overhead_bps - b.control_overhead_bps).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn frames_respect_invariants(nodes in 20usize..200, seed in 0u64..1000, kind_ix in 0usize..4) {
        let s = small(nodes, 20.0);
        let kind = ControllerKind::ALL[kind_ix];
        let t = run(&s, kind, seed).unwrap();
        let a_max = s.thresholds.a_max(nodes);
        for f in &t.frames {
            prop_assert!(f.delivered_bits <= f.offered_bits);
            prop_assert_eq!(f.a_max, a_max);
            prop_assert!(f.true_abnormal + f.true_mid <= f.active);
            let (a, m) = match (f.est_abnormal, f.est_mid) {
                (Some(a), Some(m)) => (a, m),
                _ => (f.true_abnormal, f.true_mid),
            };
            prop_assert_eq!(f.target_condition, target_condition(a, m, a_max));
            prop_assert!(f.node_pdr.iter().flatten().all(|p| (0.0..=1.0).contains(p)));
            if let (Some(a), Some(m)) = (f.est_abnormal, f.est_mid) {
                prop_assert!(a + m <= a_max + s.thresholds.epsilon);
            }
            if kind == ControllerKind::Fixed {
                prop_assert_eq!(f.action, RateAction::Hold);
            }
        }
        if kind == ControllerKind::Mudra {
            prop_assert!(check_window_trace(&t.frames, &s.mudra).is_empty());
        }
    }

    #[test]
    fn feedback_estimates_settle_to_the_truncated_counts(
        pdrs in prop::collection::vec(0.0f64..=1.0, 50..300),
        k in 10u32..60,
    ) {
        let th = Thresholds::default();
        let a_max = 8;
        let cap = a_max + th.epsilon;
        prop_assume!(k >= cap);
        let cfg = FeedbackConfig { k, ..FeedbackConfig::default() };
        let measured: Vec<Option<f64>> = pdrs.iter().copied().map(Some).collect();
        let mut state = FeedbackState::new(pdrs.len(), &th);
        let mut last = None;
        for _ in 0..=cfg.volunteer_streak {
            last = Some(state.round(&measured, &cfg));
        }
        let est = estimates(&last.unwrap().fb_pdrs, &th, a_max);
        let abnormal = pdrs.iter().filter(|&&p| p < th.low).count() as u32;
        let below_high = pdrs.iter().filter(|&&p| p < th.high).count() as u32;
        prop_assert_eq!(est.abnormal, abnormal.min(cap));
        prop_assert_eq!(est.below_high(), below_high.min(cap));
    }
}
