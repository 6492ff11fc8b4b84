//! Interval-stepped simulation binding channel, feedback and controller,
//! plus ground-truth bookkeeping and run summaries.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::channel::{apply_churn, Channel};
use crate::controller::{
    target_condition, AckSample, ControllerKind, FixedRate, Mudra, MudraConfig, Observation, PseudoMulticast,
    RateAction, RateController, Sra,
};
use crate::error::Result;
use crate::exec::{self, ExecMode};
use crate::feedback::{delta_pdr, estimates, Estimate, FeedbackState};
use crate::rate::Rate;
use crate::scenario::Scenario;
use crate::sla::NodeClass;

/// Bytes of one unicast ACK frame, counted as control traffic.
const ACK_BYTES: u64 = 14;

/// Consecutive oracle-matching intervals that count as convergence.
pub const CONVERGENCE_RUN: usize = 10;

const STREAM_POPULATION: u64 = 0;
const STREAM_ENVIRONMENT: u64 = 1;
const STREAM_NODE_BASE: u64 = 1 << 16;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Everything recorded about one reporting interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFrame {
    pub interval: u64,
    pub time_s: f64,
    /// Rate used during this interval.
    pub rate: Rate,
    /// Decision taken at the end of the interval.
    pub action: RateAction,
    /// Window after the decision.
    pub window: Option<u32>,
    pub est_abnormal: Option<u32>,
    pub est_mid: Option<u32>,
    pub true_abnormal: u32,
    pub true_mid: u32,
    pub active: u32,
    pub a_max: u32,
    pub target_condition: bool,
    pub oracle_rate: Rate,
    /// False when even the lowest rate violates the SLA.
    pub oracle_feasible: bool,
    pub interference: bool,
    pub fb_nodes: u32,
    pub report_threshold: Option<f64>,
    pub offered_bits: u64,
    pub delivered_bits: u64,
    pub control_bits: u64,
    /// Measured PDR per receiver; `None` while not a member.
    pub node_pdr: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub scenario: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub interval_s: f64,
    pub nodes: usize,
    pub fec: f64,
    pub frames: Vec<MetricsFrame>,
}

/// Highest rate whose abnormal count stays within `a_max`, with a flag that
/// is false when no rate qualifies (the lowest rate is then returned).
pub fn oracle_target_rate(channel: &Channel, low: f64, a_max: u32) -> (Rate, bool) {
    let active: Vec<usize> = (0..channel.len()).filter(|&i| channel.nodes[i].active).collect();
    let t = channel.now();
    Rate::all()
        .rev()
        .find(|&r| {
            let abnormal = active
                .iter()
                .filter(|&&i| channel.pdr_unchecked(i, r, t) < low)
                .count();
            abnormal as u32 <= a_max
        })
        .map(|r| (r, true))
        .unwrap_or((Rate::LOWEST, false))
}

fn build_controller(scenario: &Scenario, kind: ControllerKind) -> Result<Box<dyn RateController>> {
    Ok(match kind {
        ControllerKind::Mudra => Box::new(Mudra::new(scenario.mudra, scenario.thresholds.epsilon)),
        ControllerKind::Sra => Box::new(Sra::new()),
        ControllerKind::Fixed => Box::new(FixedRate(scenario.fixed_rate()?)),
        ControllerKind::Pseudo => Box::new(PseudoMulticast::new(scenario.minstrel)),
    })
}

/// Packets sent per rate in one interval. Unicast carries ACK airtime.
fn plan_packets(scenario: &Scenario, shares: &[(Rate, f64)], unicast: bool) -> Vec<(Rate, u64)> {
    let t = scenario.interval_s();
    let bits = scenario.packet_bits();
    let ack = if unicast { scenario.unicast_ack_s } else { 0.0 };
    let per_packet: f64 = shares
        .iter()
        .map(|&(r, s)| s * (bits / (scenario.efficiency * r.bps()) + ack))
        .sum();
    if per_packet <= 0.0 {
        return Vec::new();
    }
    let total = (t / per_packet + 1e-9).floor();
    shares
        .iter()
        .map(|&(r, s)| (r, (total * s).round() as u64))
        .filter(|&(_, n)| n > 0)
        .collect()
}

/// Per-rate delivery counts for one receiver.
struct Reception {
    received: Vec<u64>,
    measured: Option<f64>,
}

/// Population, interference schedule and initial membership for a seed.
/// Returns the channel and the environment stream that drives churn and
/// interference from then on.
fn build_channel(scenario: &Scenario, seed: u64) -> (Channel, ChaCha8Rng) {
    let n = scenario.nodes;
    let mut population = stream(seed, STREAM_POPULATION);
    let mut env = stream(seed, STREAM_ENVIRONMENT);
    let mut channel = Channel::new(scenario.channel.generate(n, &mut population), scenario.channel.requirement);
    if let Some(cfg) = scenario.onoff {
        channel = channel.with_onoff(cfg, &mut population);
    }
    if let Some(cfg) = scenario.spikes {
        channel = channel.with_spikes(cfg, &mut env);
    }
    if let Some(churn) = scenario.churn {
        let members = (n as f64 * churn.initial_active_fraction).round() as usize;
        let chosen = index::sample(&mut env, n, members.min(n)).into_vec();
        channel.nodes.iter_mut().for_each(|c| c.active = false);
        for i in chosen {
            channel.nodes[i].active = true;
        }
    }
    (channel, env)
}

/// Noise-free class counts of the initial membership at one rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rate: Rate,
    pub abnormal: u32,
    pub mid: u32,
    pub a_max: u32,
}

/// Per-rate abnormal and mid-PDR counts at time `at_s`, with interference
/// episodes up to then materialised. Churn is not applied.
pub fn oracle_sweep(scenario: &Scenario, seed: u64, at_s: f64) -> Result<Vec<SweepRow>> {
    scenario.validate()?;
    let th = scenario.thresholds;
    let (mut channel, mut env) = build_channel(scenario, seed);
    channel.advance(at_s, &mut env);
    let a_max = th.a_max(channel.active_count());
    let active: Vec<usize> = (0..channel.len()).filter(|&i| channel.nodes[i].active).collect();
    Ok(Rate::all()
        .map(|rate| {
            let pdrs: Vec<f64> = active.iter().map(|&i| channel.pdr_unchecked(i, rate, at_s)).collect();
            let (abnormal, mid) = crate::sla::count_classes(&pdrs, &th);
            SweepRow {
                rate,
                abnormal,
                mid,
                a_max,
            }
        })
        .collect())
}

/// Runs one controller over one seed of a scenario.
pub fn run(scenario: &Scenario, kind: ControllerKind, seed: u64) -> Result<Trace> {
    run_with(scenario, kind, seed, ExecMode::default())
}

/// As [`run`], choosing how per-receiver sampling is executed. The trace
/// does not depend on `mode`.
pub fn run_with(scenario: &Scenario, kind: ControllerKind, seed: u64, mode: ExecMode) -> Result<Trace> {
    scenario.validate()?;
    let th = scenario.thresholds;
    let interval_s = scenario.interval_s();
    let n = scenario.nodes;

    let (mut channel, mut env) = build_channel(scenario, seed);
    let churn_every = scenario
        .churn
        .map(|c| ((c.epoch_s / interval_s).round() as u64).max(1));
    let mut node_rngs: Vec<ChaCha8Rng> = (0..n as u64).map(|i| stream(seed, STREAM_NODE_BASE + i)).collect();

    let penalty = if kind.uses_feedback() {
        delta_pdr(interval_s, &scenario.collision, scenario.feedback.k)?
    } else {
        0.0
    };
    let mut feedback = FeedbackState::new(n, &th);
    let mut controller = build_controller(scenario, kind)?;
    let mut removed = vec![false; n];
    let mut removal_pending = scenario.remove_fb_nodes_at_s;
    let mut leader: Option<usize> = None;

    let intervals = scenario.intervals();
    let mut frames = Vec::with_capacity(intervals as usize);
    for i in 0..intervals {
        let t = i as f64 * interval_s;

        if let (Some(p), Some(every)) = (scenario.churn.map(|c| c.p), churn_every) {
            if i > 0 && i % every == 0 {
                apply_churn(&mut channel.nodes, p, &mut env);
                for (node, &gone) in channel.nodes.iter_mut().zip(&removed) {
                    if gone {
                        node.active = false;
                    }
                }
            }
        }
        if removal_pending.is_some_and(|at| t + 1e-9 >= at) {
            removal_pending = None;
            for &id in feedback.fb_list() {
                removed[id as usize] = true;
                channel.nodes[id as usize].active = false;
            }
        }
        channel.advance(t, &mut env);
        feedback.drop_nodes(|id| !channel.nodes[id as usize].active);

        let rate = controller.rate();
        let unicast = kind == ControllerKind::Pseudo;
        let packets = if unicast {
            let current = channel.weakest_active();
            if current != leader {
                leader = current;
                controller.reset_link_stats();
            }
            if leader.is_some() {
                plan_packets(scenario, &controller.packet_shares(), true)
            } else {
                Vec::new()
            }
        } else {
            plan_packets(scenario, &controller.packet_shares(), false)
        };
        let sent: u64 = packets.iter().map(|p| p.1).sum();

        let chan = &channel;
        let receptions: Vec<Reception> = exec::map_mut(mode, &mut node_rngs, |node, rng| {
            if !chan.nodes[node].active {
                return Reception {
                    received: Vec::new(),
                    measured: None,
                };
            }
            let received: Vec<u64> = packets
                .iter()
                .map(|&(r, count)| {
                    let p = (chan.pdr_unchecked(node, r, t) * (1.0 - penalty)).clamp(0.0, 1.0);
                    binomial(count, p, rng)
                })
                .collect();
            let measured = if sent > 0 {
                received.iter().sum::<u64>() as f64 / sent as f64
            } else {
                chan.pdr_unchecked(node, rate, t)
            };
            Reception {
                received,
                measured: Some(measured),
            }
        });
        let measured: Vec<Option<f64>> = receptions.iter().map(|r| r.measured).collect();

        let active = channel.active_count();
        let a_max = th.a_max(active);
        let (mut true_abnormal, mut true_mid) = (0, 0);
        let mut normal_sum = 0.0;
        let mut normal_count = 0usize;
        for &m in measured.iter().flatten() {
            match th.classify(m)? {
                NodeClass::Abnormal => true_abnormal += 1,
                NodeClass::MidPdr => true_mid += 1,
                NodeClass::Normal => {
                    normal_sum += m;
                    normal_count += 1;
                }
            }
        }
        let mean_normal = if normal_count > 0 {
            normal_sum / normal_count as f64
        } else {
            0.0
        };
        let offered_bits = (sent as f64 * scenario.packet_bits()) as u64;
        let delivered_bits = (offered_bits as f64 * mean_normal).floor() as u64;

        let mut estimate: Option<Estimate> = None;
        let mut control_bits = 0;
        let mut acks: Option<Vec<AckSample>> = None;
        if kind.uses_feedback() {
            let outcome = feedback.round(&measured, &scenario.feedback);
            estimate = Some(estimates(&outcome.fb_pdrs, &th, a_max));
            control_bits = outcome.control_bits;
        } else if unicast {
            control_bits = sent * ACK_BYTES * 8;
            acks = leader.map(|l| {
                packets
                    .iter()
                    .zip(&receptions[l].received)
                    .map(|(&(rate, attempts), &successes)| AckSample {
                        rate,
                        attempts,
                        successes,
                    })
                    .collect()
            });
        }

        let target = match estimate {
            Some(e) => target_condition(e.abnormal, e.mid, a_max),
            None => target_condition(true_abnormal, true_mid, a_max),
        };
        let (oracle_rate, oracle_feasible) = oracle_target_rate(&channel, th.low, a_max);
        let action = controller.tick(&Observation {
            t: i,
            estimate,
            a_max,
            acks: acks.as_deref(),
        });

        frames.push(MetricsFrame {
            interval: i,
            time_s: t,
            rate,
            action,
            window: controller.window(),
            est_abnormal: estimate.map(|e| e.abnormal),
            est_mid: estimate.map(|e| e.mid),
            true_abnormal,
            true_mid,
            active: active as u32,
            a_max,
            target_condition: target,
            oracle_rate,
            oracle_feasible,
            interference: channel.interference_at(t),
            fb_nodes: if kind.uses_feedback() {
                feedback.fb_list().len() as u32
            } else {
                0
            },
            report_threshold: kind.uses_feedback().then(|| feedback.threshold()),
            offered_bits,
            delivered_bits,
            control_bits,
            node_pdr: measured,
        });
    }

    Ok(Trace {
        scenario: scenario.name.clone(),
        controller: kind,
        seed,
        interval_s,
        nodes: n,
        fec: scenario.fec,
        frames,
    })
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).map(|b| b.sample(rng)).unwrap_or(0)
    }
}

/// First interval from which the rate matches the oracle for at least
/// [`CONVERGENCE_RUN`] consecutive intervals.
pub fn convergence_interval(frames: &[MetricsFrame]) -> Option<usize> {
    let mut run_start = 0;
    let mut run_len = 0;
    for (i, f) in frames.iter().enumerate() {
        if f.rate == f.oracle_rate {
            if run_len == 0 {
                run_start = i;
            }
            run_len += 1;
            if run_len >= CONVERGENCE_RUN {
                return Some(run_start);
            }
        } else {
            run_len = 0;
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub intervals: usize,
    pub mean_throughput_mbps: f64,
    pub mean_goodput_mbps: f64,
    /// Share of intervals spent at each rate, keyed by Mbps.
    pub airtime: BTreeMap<u32, f64>,
    pub sla_violation_fraction: f64,
    pub control_overhead_bps: f64,
    pub rate_changes: usize,
    pub convergence_s: Option<f64>,
    pub target_condition_fraction: f64,
    pub oracle_match_fraction: f64,
    /// Receivers whose mean PDR is below the PDR threshold.
    pub nodes_below_low_fraction: f64,
    /// Mean measured PDR per receiver over the intervals it was a member.
    pub node_mean_pdr: Vec<Option<f64>>,
}

pub fn summarize(trace: &Trace, low: f64) -> Summary {
    let frames = &trace.frames;
    let count = frames.len();
    let denom = count.max(1) as f64;
    let duration = count as f64 * trace.interval_s;
    let delivered: f64 = frames.iter().map(|f| f.delivered_bits as f64).sum();
    let throughput = if duration > 0.0 { delivered / duration / 1e6 } else { 0.0 };
    let airtime: BTreeMap<u32, f64> = Rate::all()
        .map(|r| (r.mbps(), frames.iter().filter(|f| f.rate == r).count() as f64 / denom))
        .collect();
    let node_mean_pdr: Vec<Option<f64>> = (0..trace.nodes)
        .map(|i| {
            let (sum, n) = frames
                .iter()
                .filter_map(|f| f.node_pdr[i])
                .fold((0.0, 0usize), |(s, n), p| (s + p, n + 1));
            (n > 0).then(|| sum / n as f64)
        })
        .collect();
    let present: Vec<f64> = node_mean_pdr.iter().flatten().copied().collect();
    let below = present.iter().filter(|&&p| p < low).count();
    Summary {
        scenario: trace.scenario.clone(),
        controller: trace.controller,
        seed: trace.seed,
        intervals: count,
        mean_throughput_mbps: throughput,
        mean_goodput_mbps: throughput * (1.0 - trace.fec),
        airtime,
        sla_violation_fraction: frames.iter().filter(|f| f.true_abnormal > f.a_max).count() as f64 / denom,
        control_overhead_bps: if duration > 0.0 {
            frames.iter().map(|f| f.control_bits as f64).sum::<f64>() / duration
        } else {
            0.0
        },
        rate_changes: frames.iter().filter(|f| f.action != RateAction::Hold).count(),
        convergence_s: convergence_interval(frames).map(|i| i as f64 * trace.interval_s),
        target_condition_fraction: frames.iter().filter(|f| f.target_condition).count() as f64 / denom,
        oracle_match_fraction: frames.iter().filter(|f| f.rate == f.oracle_rate).count() as f64 / denom,
        nodes_below_low_fraction: below as f64 / present.len().max(1) as f64,
        node_mean_pdr,
    }
}

/// Checks the window discipline of a windowed-controller trace. Returns one
/// message per violation.
pub fn check_window_trace(frames: &[MetricsFrame], cfg: &MudraConfig) -> Vec<String> {
    let mut problems = Vec::new();
    let mut window = cfg.w_min;
    let mut ref_time = 0u64;
    let mut change_time = 0u64;
    for (idx, f) in frames.iter().enumerate() {
        let t = f.interval;
        let Some(after) = f.window else {
            problems.push(format!("interval {t}: no window recorded"));
            continue;
        };
        if !(cfg.w_min..=cfg.w_max).contains(&after) {
            problems.push(format!("interval {t}: window {after} outside [{}, {}]", cfg.w_min, cfg.w_max));
        }
        let expected = match f.action {
            RateAction::Decrease => {
                ref_time = t;
                cfg.w_max.min(2 * window)
            }
            RateAction::Increase => {
                ref_time = t;
                window
            }
            RateAction::Hold if t - ref_time > cfg.threshold_time => {
                ref_time = t;
                cfg.w_min.max(window - 1)
            }
            RateAction::Hold => window,
        };
        if after != expected {
            problems.push(format!(
                "interval {t}: {} moved window {window} -> {after}, expected {expected}",
                f.action.as_str()
            ));
        }
        if f.action != RateAction::Hold {
            if t - change_time <= u64::from(window) {
                problems.push(format!(
                    "interval {t}: rate change {} intervals after the previous one with window {window}",
                    t - change_time
                ));
            }
            change_time = t;
        }
        if let Some(next) = frames.get(idx + 1) {
            let moved = match f.action {
                RateAction::Hold => f.rate,
                RateAction::Increase => f.rate.next_higher().unwrap_or(f.rate),
                RateAction::Decrease => f.rate.next_lower().unwrap_or(f.rate),
            };
            if next.rate != moved {
                problems.push(format!("interval {}: rate does not follow the previous action", next.interval));
            }
        }
        window = after;
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelConfig, SnrGroup};

    fn small(nodes: usize, duration_s: f64) -> Scenario {
        Scenario {
            nodes,
            duration_s,
            ..Scenario::default()
        }
    }

    #[test]
    fn zero_duration_gives_empty_trace() {
        let trace = run(&small(20, 0.0), ControllerKind::Mudra, 1).unwrap();
        assert!(trace.frames.is_empty());
    }

    #[test]
    fn strong_population_reaches_top_rate() {
        let mut s = small(40, 60.0);
        s.channel = ChannelConfig {
            groups: vec![SnrGroup {
                share: 1.0,
                snr_db: [35.0, 40.0],
            }],
            ..ChannelConfig::default()
        };
        let trace = run(&s, ControllerKind::Mudra, 3).unwrap();
        assert!(trace.frames.iter().all(|f| f.oracle_rate == Rate::HIGHEST));
        assert_eq!(trace.frames.last().unwrap().rate, Rate::HIGHEST);
        assert!(check_window_trace(&trace.frames, &s.mudra).is_empty());
    }

    #[test]
    fn frames_respect_conservation_and_counts() {
        let s = small(60, 20.0);
        for kind in ControllerKind::ALL {
            let trace = run(&s, kind, 5).unwrap();
            for f in &trace.frames {
                assert!(f.delivered_bits <= f.offered_bits);
                if kind != ControllerKind::Pseudo {
                    let cap = f.rate.bps() * trace.interval_s * s.efficiency;
                    assert!(f.offered_bits as f64 <= cap + 1.0);
                }
                assert!(f.true_abnormal + f.true_mid <= f.active);
            }
        }
    }

    #[test]
    fn fixed_rate_never_changes() {
        let s = small(30, 30.0);
        let trace = run(&s, ControllerKind::Fixed, 2).unwrap();
        assert!(trace.frames.iter().all(|f| f.rate.mbps() == 36 && f.action == RateAction::Hold));
        let summary = summarize(&trace, 0.85);
        assert_eq!(summary.airtime[&36], 1.0);
        assert_eq!(summary.rate_changes, 0);
    }

    #[test]
    fn modes_produce_identical_traces() {
        let s = small(50, 15.0);
        let a = run_with(&s, ControllerKind::Mudra, 9, ExecMode::Serial).unwrap();
        let b = run_with(&s, ControllerKind::Mudra, 9, ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn convergence_needs_a_full_run() {
        let mut s = small(10, 20.0);
        s.controllers = vec![ControllerKind::Fixed];
        let mut trace = run(&s, ControllerKind::Fixed, 1).unwrap();
        for f in trace.frames.iter_mut() {
            f.oracle_rate = Rate::LOWEST;
        }
        assert_eq!(convergence_interval(&trace.frames), None);
        for f in trace.frames.iter_mut().skip(5) {
            f.oracle_rate = f.rate;
        }
        assert_eq!(convergence_interval(&trace.frames), Some(5));
    }

    #[test]
    fn validator_flags_tampering() {
        let s = small(40, 60.0);
        let mut trace = run(&s, ControllerKind::Mudra, 4).unwrap();
        assert!(check_window_trace(&trace.frames, &s.mudra).is_empty());
        trace.frames[3].window = Some(40);
        assert!(!check_window_trace(&trace.frames, &s.mudra).is_empty());
    }
}
