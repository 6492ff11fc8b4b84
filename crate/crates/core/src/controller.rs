//! Rate controllers. [`Mudra`] is the windowed target-rate controller; the
//! others are the comparison baselines.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::Estimate;
use crate::rate::Rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RateAction {
    Hold,
    Increase,
    Decrease,
}

impl RateAction {
    pub fn as_str(self) -> &'static str {
        match self {
            RateAction::Hold => "hold",
            RateAction::Increase => "increase",
            RateAction::Decrease => "decrease",
        }
    }

    fn apply(self, rate: Rate) -> Rate {
        match self {
            RateAction::Hold => rate,
            RateAction::Increase => rate.next_higher().unwrap_or(rate),
            RateAction::Decrease => rate.next_lower().unwrap_or(rate),
        }
    }
}

/// `abnormal <= a_max && abnormal + mid > a_max`: holding at the
/// target rate.
pub fn target_condition(abnormal: u32, mid: u32, a_max: u32) -> bool {
    abnormal <= a_max && abnormal + mid > a_max
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MudraConfig {
    /// Window bounds, in reporting intervals.
    pub w_min: u32,
    pub w_max: u32,
    /// Hold time, in reporting intervals, after which the window shrinks by one.
    pub threshold_time: u64,
}

impl Default for MudraConfig {
    fn default() -> Self {
        MudraConfig {
            w_min: 8,
            w_max: 32,
            threshold_time: 10,
        }
    }
}

impl MudraConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w_min == 0 || self.w_min > self.w_max {
            return Err(Error::config("mudra", "need 1 <= w_min <= w_max"));
        }
        Ok(())
    }
}

/// Window adjustment: multiplicative growth on a decrease, decay by one
/// after `threshold_time` without a change. Returns `(window, ref_time)`.
pub fn get_win_size(
    action: RateAction,
    window: u32,
    ref_time: u64,
    t: u64,
    cfg: &MudraConfig,
) -> (u32, u64) {
    match action {
        RateAction::Decrease => (cfg.w_max.min(2 * window), t),
        RateAction::Increase => (window, t),
        RateAction::Hold if t.saturating_sub(ref_time) > cfg.threshold_time => {
            (cfg.w_min.max(window.saturating_sub(1)), t)
        }
        RateAction::Hold => (window, ref_time),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Sample {
    abnormal: u32,
    mid: u32,
    a_max: u32,
}

/// Controller state: rate, window and the recent estimates.
#[derive(Debug, Clone)]
pub struct Mudra {
    cfg: MudraConfig,
    epsilon: u32,
    rate: Rate,
    window: u32,
    change_time: u64,
    ref_time: u64,
    history: VecDeque<Sample>,
}

impl Mudra {
    pub fn new(cfg: MudraConfig, epsilon: u32) -> Self {
        Mudra {
            cfg,
            epsilon,
            rate: Rate::LOWEST,
            window: cfg.w_min,
            change_time: 0,
            ref_time: 0,
            history: VecDeque::with_capacity(cfg.w_max as usize + 1),
        }
    }

    pub fn with_rate(mut self, rate: Rate) -> Self {
        self.rate = rate;
        self
    }

    pub fn rate(&self) -> Rate {
        self.rate
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    pub fn change_time(&self) -> u64 {
        self.change_time
    }

    pub fn ref_time(&self) -> u64 {
        self.ref_time
    }

    /// One reporting interval at time `t` (interval index).
    pub fn tick(&mut self, est: Estimate, a_max: u32, t: u64) -> RateAction {
        if self.history.len() > self.cfg.w_max as usize {
            self.history.pop_front();
        }
        self.history.push_back(Sample {
            abnormal: est.abnormal,
            mid: est.mid,
            a_max,
        });
        let action = self.get_rate(t);
        let (window, ref_time) = get_win_size(action, self.window, self.ref_time, t, &self.cfg);
        self.window = window;
        self.ref_time = ref_time;
        action
    }

    fn get_rate(&mut self, t: u64) -> RateAction {
        if t.saturating_sub(self.change_time) <= u64::from(self.window) {
            return RateAction::Hold;
        }
        let span = self.window as usize + 1;
        let recent = self.history.iter().rev().take(span);
        let mut can_decrease = true;
        let mut violated = false;
        let mut can_increase = true;
        for s in recent {
            if s.abnormal < s.a_max {
                can_decrease = false;
            }
            if s.abnormal > s.a_max {
                violated = true;
            }
            if s.abnormal + s.mid + self.epsilon > s.a_max {
                can_increase = false;
            }
        }
        let action = if can_decrease && violated && !self.rate.is_lowest() {
            RateAction::Decrease
        } else if can_increase && !self.rate.is_highest() {
            RateAction::Increase
        } else {
            RateAction::Hold
        };
        if action != RateAction::Hold {
            self.rate = action.apply(self.rate);
            self.change_time = t;
        }
        action
    }
}

/// Abnormal-count thermostat with no window and no mid-PDR logic.
#[derive(Debug, Clone)]
pub struct Sra {
    rate: Rate,
}

impl Sra {
    pub fn new() -> Self {
        Sra { rate: Rate::LOWEST }
    }

    pub fn rate(&self) -> Rate {
        self.rate
    }

    pub fn tick(&mut self, abnormal: u32, a_max: u32) -> RateAction {
        let action = if abnormal > a_max && !self.rate.is_lowest() {
            RateAction::Decrease
        } else if abnormal == 0 && !self.rate.is_highest() {
            RateAction::Increase
        } else {
            RateAction::Hold
        };
        self.rate = action.apply(self.rate);
        action
    }
}

impl Default for Sra {
    fn default() -> Self {
        Sra::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinstrelConfig {
    /// Weight of the newest sample in the success average.
    pub ewma_weight: f64,
    /// Share of packets sent at rates other than the current one.
    pub probe_ratio: f64,
}

impl Default for MinstrelConfig {
    fn default() -> Self {
        MinstrelConfig {
            ewma_weight: 0.25,
            probe_ratio: 0.10,
        }
    }
}

/// Per-rate unicast delivery outcome reported back by the leader's ACKs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckSample {
    pub rate: Rate,
    pub attempts: u64,
    pub successes: u64,
}

/// Unicast to a leader receiver with a Minstrel-style rate picker; everyone
/// else listens promiscuously.
#[derive(Debug, Clone)]
pub struct PseudoMulticast {
    cfg: MinstrelConfig,
    rate: Rate,
    success: [Option<f64>; Rate::COUNT],
}

impl PseudoMulticast {
    pub fn new(cfg: MinstrelConfig) -> Self {
        PseudoMulticast {
            cfg,
            rate: Rate::LOWEST,
            success: [None; Rate::COUNT],
        }
    }

    pub fn rate(&self) -> Rate {
        self.rate
    }

    pub fn success(&self, rate: Rate) -> Option<f64> {
        self.success[rate.index()]
    }

    /// Forget link statistics, e.g. after the leader changes.
    pub fn reset_stats(&mut self) {
        self.success = [None; Rate::COUNT];
    }

    /// Share of packets per rate for the coming interval.
    pub fn packet_shares(&self) -> Vec<(Rate, f64)> {
        let probe_each = self.cfg.probe_ratio / (Rate::COUNT - 1) as f64;
        Rate::all()
            .map(|r| {
                let share = if r == self.rate {
                    1.0 - self.cfg.probe_ratio
                } else {
                    probe_each
                };
                (r, share)
            })
            .collect()
    }

    /// Rate maximising expected goodput among sampled rates.
    pub fn best_rate(&self) -> Rate {
        Rate::all()
            .filter_map(|r| self.success[r.index()].map(|p| (r, p * r.mbps() as f64)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(r, _)| r)
            .unwrap_or(self.rate)
    }

    /// Folds in the leader's ACK outcomes and steps one rung toward the best
    /// rate. With no leader the controller idles.
    pub fn tick(&mut self, samples: Option<&[AckSample]>) -> RateAction {
        let Some(samples) = samples else {
            return RateAction::Hold;
        };
        let w = self.cfg.ewma_weight;
        for s in samples.iter().filter(|s| s.attempts > 0) {
            let observed = s.successes as f64 / s.attempts as f64;
            let slot = &mut self.success[s.rate.index()];
            *slot = Some(match *slot {
                Some(old) => (1.0 - w) * old + w * observed,
                None => observed,
            });
        }
        let best = self.best_rate();
        let action = match best.cmp(&self.rate) {
            std::cmp::Ordering::Greater => RateAction::Increase,
            std::cmp::Ordering::Less => RateAction::Decrease,
            std::cmp::Ordering::Equal => RateAction::Hold,
        };
        self.rate = action.apply(self.rate);
        action
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Mudra,
    Fixed,
    Pseudo,
    Sra,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Mudra,
        ControllerKind::Fixed,
        ControllerKind::Pseudo,
        ControllerKind::Sra,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Mudra => "mudra",
            ControllerKind::Fixed => "fixed",
            ControllerKind::Pseudo => "pseudo",
            ControllerKind::Sra => "sra",
        }
    }

    pub fn uses_feedback(self) -> bool {
        matches!(self, ControllerKind::Mudra | ControllerKind::Sra)
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mudra" => Ok(ControllerKind::Mudra),
            "fixed" => Ok(ControllerKind::Fixed),
            "pseudo" | "pseudo-multicast" => Ok(ControllerKind::Pseudo),
            "sra" => Ok(ControllerKind::Sra),
            other => Err(Error::config("controller", format!("unknown controller `{other}`"))),
        }
    }
}

/// What a controller sees at the end of an interval.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub t: u64,
    pub estimate: Option<Estimate>,
    pub a_max: u32,
    pub acks: Option<&'a [AckSample]>,
}

/// Common interface over the four schemes.
pub trait RateController: Send {
    fn kind(&self) -> ControllerKind;
    fn rate(&self) -> Rate;
    fn tick(&mut self, obs: &Observation<'_>) -> RateAction;

    /// Share of the interval's packets sent at each rate.
    fn packet_shares(&self) -> Vec<(Rate, f64)> {
        vec![(self.rate(), 1.0)]
    }

    /// Current stability window, for controllers that keep one.
    fn window(&self) -> Option<u32> {
        None
    }

    /// Called when the unicast leader changes.
    fn reset_link_stats(&mut self) {}
}

impl RateController for Mudra {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Mudra
    }

    fn rate(&self) -> Rate {
        self.rate
    }

    fn tick(&mut self, obs: &Observation<'_>) -> RateAction {
        Mudra::tick(self, obs.estimate.unwrap_or_default(), obs.a_max, obs.t)
    }

    fn window(&self) -> Option<u32> {
        Some(self.window)
    }
}

impl RateController for Sra {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Sra
    }

    fn rate(&self) -> Rate {
        self.rate
    }

    fn tick(&mut self, obs: &Observation<'_>) -> RateAction {
        Sra::tick(self, obs.estimate.unwrap_or_default().abnormal, obs.a_max)
    }
}

/// Always transmits at one configured rate.
#[derive(Debug, Clone)]
pub struct FixedRate(pub Rate);

impl RateController for FixedRate {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Fixed
    }

    fn rate(&self) -> Rate {
        self.0
    }

    fn tick(&mut self, _obs: &Observation<'_>) -> RateAction {
        RateAction::Hold
    }
}

impl RateController for PseudoMulticast {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Pseudo
    }

    fn rate(&self) -> Rate {
        self.rate
    }

    fn tick(&mut self, obs: &Observation<'_>) -> RateAction {
        PseudoMulticast::tick(self, obs.acks)
    }

    fn packet_shares(&self) -> Vec<(Rate, f64)> {
        PseudoMulticast::packet_shares(self)
    }

    fn reset_link_stats(&mut self) {
        PseudoMulticast::reset_stats(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(mbps: u32) -> Rate {
        Rate::from_mbps(mbps).unwrap()
    }

    fn est(abnormal: u32, mid: u32) -> Estimate {
        Estimate { abnormal, mid }
    }

    /// Runs `ticks` intervals with a constant estimate, returning the actions.
    fn drive(m: &mut Mudra, e: Estimate, a_max: u32, from: u64, ticks: u64) -> Vec<(u64, RateAction)> {
        (from..from + ticks)
            .map(|t| (t, m.tick(e, a_max, t)))
            .filter(|(_, a)| *a != RateAction::Hold)
            .collect()
    }

    #[test]
    fn target_condition_examples() {
        assert!(!target_condition(0, 0, 8));
        assert!(target_condition(3, 14, 8));
        assert!(!target_condition(9, 0, 8));
    }

    #[test]
    fn increases_after_a_clean_window() {
        let mut m = Mudra::new(MudraConfig::default(), 2).with_rate(r(24));
        // t - change_time must exceed the window of 8
        let changes = drive(&mut m, est(0, 0), 8, 0, 10);
        assert_eq!(changes, vec![(9, RateAction::Increase)]);
        assert_eq!(m.rate(), r(36));
        assert_eq!(m.change_time(), 9);
        assert_eq!(m.ref_time(), 9);
        assert_eq!(m.window(), 8);
    }

    #[test]
    fn decreases_and_doubles_window() {
        let mut m = Mudra::new(MudraConfig::default(), 2).with_rate(r(36));
        let changes = drive(&mut m, est(9, 0), 8, 0, 10);
        assert_eq!(changes, vec![(9, RateAction::Decrease)]);
        assert_eq!(m.rate(), r(24));
        assert_eq!(m.window(), 16);
    }

    #[test]
    fn one_busy_interval_blocks_increase() {
        let mut m = Mudra::new(MudraConfig::default(), 2).with_rate(r(24));
        for t in 0..9 {
            m.tick(est(0, 0), 8, t);
        }
        assert_eq!(m.tick(est(2, 5), 8, 9), RateAction::Hold);
        assert_eq!(m.rate(), r(24));
    }

    #[test]
    fn equality_alone_never_decreases() {
        // abnormal == a_max for the whole window is pressure, not a violation
        let mut m = Mudra::new(MudraConfig::default(), 2).with_rate(r(36));
        assert!(drive(&mut m, est(8, 5), 8, 0, 40).is_empty());
        // a single violation on top of a saturated window tips it over
        assert_eq!(m.tick(est(9, 0), 8, 40), RateAction::Decrease);
    }

    #[test]
    fn win_size_rules() {
        let cfg = MudraConfig::default();
        assert_eq!(get_win_size(RateAction::Decrease, 8, 0, 5, &cfg), (16, 5));
        assert_eq!(get_win_size(RateAction::Decrease, 32, 0, 5, &cfg), (32, 5));
        assert_eq!(get_win_size(RateAction::Increase, 12, 0, 5, &cfg), (12, 5));
        assert_eq!(get_win_size(RateAction::Hold, 16, 0, 11, &cfg), (15, 11));
        assert_eq!(get_win_size(RateAction::Hold, 16, 0, 10, &cfg), (16, 0));
        assert_eq!(get_win_size(RateAction::Hold, 8, 0, 50, &cfg), (8, 50));
    }

    #[test]
    fn burst_shorter_than_window_is_ignored() {
        let mut m = Mudra::new(MudraConfig::default(), 2).with_rate(r(36));
        let mut t = 0;
        for _ in 0..20 {
            assert_eq!(m.tick(est(3, 12), 8, t), RateAction::Hold);
            t += 1;
        }
        for _ in 0..8 {
            assert_eq!(m.tick(est(10, 0), 8, t), RateAction::Hold);
            t += 1;
        }
        for _ in 0..40 {
            assert_eq!(m.tick(est(3, 12), 8, t), RateAction::Hold);
            t += 1;
        }
        assert_eq!(m.rate(), r(36));
    }

    #[test]
    fn extremes_are_respected() {
        let mut m = Mudra::new(MudraConfig::default(), 2);
        assert!(drive(&mut m, est(20, 0), 8, 0, 30).is_empty());
        assert_eq!(m.rate(), Rate::LOWEST);
        let mut m = Mudra::new(MudraConfig::default(), 2).with_rate(Rate::HIGHEST);
        assert!(drive(&mut m, est(0, 0), 8, 0, 30).is_empty());
    }

    #[test]
    fn sra_law() {
        let mut s = Sra::new();
        let mut rates = vec![];
        for _ in 0..10 {
            s.tick(0, 8);
            rates.push(s.rate().mbps());
        }
        assert_eq!(rates, vec![9, 12, 18, 24, 36, 48, 54, 54, 54, 54]);
        assert_eq!(s.tick(9, 8), RateAction::Decrease);
        assert_eq!(s.tick(4, 8), RateAction::Hold);
        assert_eq!(s.tick(0, 8), RateAction::Increase);
    }

    #[test]
    fn sra_oscillates_under_alternating_interference() {
        let mut s = Sra::new();
        for _ in 0..4 {
            s.tick(0, 8);
        }
        let mut changes = 0;
        for i in 0..20 {
            let a = if i % 2 == 0 { 0 } else { 12 };
            if s.tick(a, 8) != RateAction::Hold {
                changes += 1;
            }
        }
        assert!(changes >= 10);
    }

    #[test]
    fn fixed_rate_never_moves() {
        let mut f = FixedRate(r(6));
        let obs = Observation {
            t: 0,
            estimate: Some(est(50, 0)),
            a_max: 8,
            acks: None,
        };
        assert_eq!(RateController::tick(&mut f, &obs), RateAction::Hold);
        assert_eq!(f.rate(), r(6));
    }

    fn perfect_acks(shares: &[(Rate, f64)]) -> Vec<AckSample> {
        shares
            .iter()
            .map(|&(rate, s)| AckSample {
                rate,
                attempts: (s * 1000.0) as u64,
                successes: (s * 1000.0) as u64,
            })
            .collect()
    }

    #[test]
    fn minstrel_climbs_to_top_on_a_perfect_link() {
        let mut p = PseudoMulticast::new(MinstrelConfig::default());
        for _ in 0..20 {
            let acks = perfect_acks(&p.packet_shares());
            p.tick(Some(&acks));
        }
        assert_eq!(p.rate(), Rate::HIGHEST);
    }

    #[test]
    fn minstrel_settles_below_a_lossy_rate() {
        let mut p = PseudoMulticast::new(MinstrelConfig::default());
        let ok = |rate: Rate| if rate.mbps() <= 18 { 1.0 } else { 0.3 };
        for _ in 0..40 {
            let acks: Vec<AckSample> = p
                .packet_shares()
                .iter()
                .map(|&(rate, s)| {
                    let n = (s * 1000.0) as u64;
                    AckSample {
                        rate,
                        attempts: n,
                        successes: (n as f64 * ok(rate)) as u64,
                    }
                })
                .collect();
            p.tick(Some(&acks));
        }
        assert_eq!(p.rate().mbps(), 18);
        // still probing above
        assert!(p.packet_shares().iter().any(|&(r, s)| r == Rate::HIGHEST && s > 0.0));
    }

    #[test]
    fn minstrel_idles_without_leader() {
        let mut p = PseudoMulticast::new(MinstrelConfig::default());
        assert_eq!(p.tick(None), RateAction::Hold);
    }

    #[test]
    fn shares_sum_to_one() {
        let p = PseudoMulticast::new(MinstrelConfig::default());
        let total: f64 = p.packet_shares().iter().map(|s| s.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
