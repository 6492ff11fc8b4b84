//! K-worst feedback node selection, the node-side volunteering automaton,
//! and the analytic cost of feedback collisions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sla::Thresholds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackConfig {
    /// Maximum number of feedback nodes.
    pub k: u32,
    /// Reporting interval in seconds.
    pub interval_s: f64,
    /// Offset of the reporting threshold below the worst-listed PDR when the
    /// list is full.
    pub below_margin: f64,
    /// Offset above the worst-listed PDR when the list has room.
    pub above_margin: f64,
    /// Consecutive intervals under the threshold before a node volunteers.
    pub volunteer_streak: u32,
    pub report_bytes: u32,
    pub list_base_bytes: u32,
    pub list_bytes_per_slot: u32,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig {
            k: 30,
            interval_s: 0.5,
            below_margin: 0.01,
            above_margin: 0.005,
            volunteer_streak: 3,
            report_bytes: 64,
            list_base_bytes: 16,
            list_bytes_per_slot: 8,
        }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("feedback.k", "must be at least 1"));
        }
        if self.interval_s <= 0.0 {
            return Err(Error::config("feedback.interval_s", "must be positive"));
        }
        if self.below_margin <= 0.0 || self.above_margin <= 0.0 {
            return Err(Error::config("feedback margins", "must be positive"));
        }
        if self.volunteer_streak == 0 {
            return Err(Error::config("feedback.volunteer_streak", "must be at least 1"));
        }
        Ok(())
    }

    /// Size of the AP's per-interval feedback-list announcement.
    pub fn list_message_bytes(&self) -> u32 {
        self.list_base_bytes + self.list_bytes_per_slot * self.k
    }
}

/// Airtime parameters of the feedback-collision estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollisionParams {
    /// Multicast packet airtime at the lowest rate, seconds.
    pub multicast_s: f64,
    /// Feedback report airtime, seconds.
    pub report_s: f64,
    pub cw_min: u32,
}

impl Default for CollisionParams {
    fn default() -> Self {
        CollisionParams {
            multicast_s: 0.003,
            report_s: 0.001,
            cw_min: 16,
        }
    }
}

impl CollisionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.multicast_s > self.report_s && self.report_s > 0.0) {
            return Err(Error::config(
                "collision",
                "need multicast_s > report_s > 0",
            ));
        }
        if self.cw_min < 2 {
            return Err(Error::config("collision.cw_min", "must be at least 2"));
        }
        Ok(())
    }
}

/// PDR lost by multicast packets colliding with `k` feedback reports per
/// interval of `interval_s` seconds, with a saturated AP:
/// `(2 / CW_min)^2 * k * D / (T - d * k)`.
pub fn delta_pdr(interval_s: f64, params: &CollisionParams, k: u32) -> Result<f64> {
    if k == 0 {
        return Ok(0.0);
    }
    let feedback_airtime = params.report_s * k as f64;
    if interval_s <= feedback_airtime {
        return Err(Error::InfeasibleInterval {
            interval: interval_s,
            reports: k,
            report_duration: params.report_s,
        });
    }
    let slot_share = 2.0 / params.cw_min as f64;
    Ok(slot_share * slot_share * k as f64 * params.multicast_s / (interval_s - feedback_airtime))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeMessage {
    Report(f64),
    Volunteer(f64),
    Silent,
}

/// Receiver side of the protocol: counts consecutive intervals spent under
/// the advertised threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeAgent {
    streak: u32,
}

impl NodeAgent {
    pub fn streak(&self) -> u32 {
        self.streak
    }

    pub fn reset(&mut self) {
        self.streak = 0;
    }

    pub fn tick(&mut self, pdr: f64, threshold: f64, is_fb: bool, cfg: &FeedbackConfig) -> NodeMessage {
        if pdr < threshold {
            self.streak = self.streak.saturating_add(1);
        } else {
            self.streak = 0;
        }
        if is_fb {
            NodeMessage::Report(pdr)
        } else if self.streak >= cfg.volunteer_streak {
            NodeMessage::Volunteer(pdr)
        } else {
            NodeMessage::Silent
        }
    }
}

/// A PDR report as seen by the AP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Report {
    pub node: u32,
    pub pdr: f64,
}

/// Picks the `k` lowest-PDR candidates (ties by node id) and the next
/// reporting threshold.
///
/// A full list puts the threshold just under its highest PDR so only
/// receivers clearly worse than a member volunteer. A list with free slots
/// puts it above 1 so every receiver volunteers and the list fills with the
/// `k` worst; a threshold pinned just above the list's own maximum can stall
/// forever in a gap of the PDR distribution.
pub fn ap_select(candidates: &[Report], cfg: &FeedbackConfig) -> (Vec<Report>, f64) {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.pdr.total_cmp(&b.pdr).then(a.node.cmp(&b.node)));
    sorted.dedup_by_key(|r| r.node);
    sorted.truncate(cfg.k as usize);
    let threshold = match sorted.last() {
        Some(worst) if sorted.len() == cfg.k as usize => worst.pdr - cfg.below_margin,
        _ => 1.0 + cfg.above_margin,
    };
    (sorted, threshold)
}

/// Abnormal and mid-PDR counts known to the AP.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Estimate {
    pub abnormal: u32,
    pub mid: u32,
}

impl Estimate {
    pub fn below_high(&self) -> u32 {
        self.abnormal + self.mid
    }
}

/// Counts abnormal and mid-PDR reports, each tally capped at
/// `a_max + epsilon`.
pub fn estimates(reports: &[f64], th: &Thresholds, a_max: u32) -> Estimate {
    let cap = a_max + th.epsilon;
    let (abnormal, mid) = crate::sla::count_classes(reports, th);
    let abnormal_est = abnormal.min(cap);
    let below_high = (abnormal + mid).min(cap);
    Estimate {
        abnormal: abnormal_est,
        mid: below_high - abnormal_est,
    }
}

/// What one reporting round produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundOutcome {
    pub reports: u32,
    pub volunteers: u32,
    /// PDRs of the newly selected feedback nodes.
    pub fb_pdrs: Vec<f64>,
    /// Nodes that entered the list this round.
    pub joined: u32,
    pub control_bits: u64,
}

/// AP-side protocol state plus every receiver's agent.
#[derive(Debug, Clone)]
pub struct FeedbackState {
    fb_list: Vec<u32>,
    is_fb: Vec<bool>,
    threshold: f64,
    agents: Vec<NodeAgent>,
}

impl FeedbackState {
    /// Empty list with the threshold at `low`.
    pub fn new(nodes: usize, th: &Thresholds) -> Self {
        FeedbackState {
            fb_list: Vec::new(),
            is_fb: vec![false; nodes],
            threshold: th.low,
            agents: vec![NodeAgent::default(); nodes],
        }
    }

    pub fn fb_list(&self) -> &[u32] {
        &self.fb_list
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_fb(&self, node: usize) -> bool {
        self.is_fb[node]
    }

    /// Forces nodes off the list, e.g. when they leave the group.
    pub fn drop_nodes(&mut self, gone: impl Fn(u32) -> bool) {
        self.fb_list.retain(|&n| !gone(n));
        self.is_fb.iter_mut().for_each(|f| *f = false);
        for &n in &self.fb_list {
            self.is_fb[n as usize] = true;
        }
    }

    /// Runs one interval. `measured[i]` is `None` for receivers not in the
    /// group.
    pub fn round(&mut self, measured: &[Option<f64>], cfg: &FeedbackConfig) -> RoundOutcome {
        let mut candidates = Vec::new();
        let mut reports = 0;
        let mut volunteers = 0;
        for (i, m) in measured.iter().enumerate() {
            let Some(pdr) = *m else {
                self.agents[i].reset();
                continue;
            };
            match self.agents[i].tick(pdr, self.threshold, self.is_fb[i], cfg) {
                NodeMessage::Report(p) => {
                    reports += 1;
                    candidates.push(Report { node: i as u32, pdr: p });
                }
                NodeMessage::Volunteer(p) => {
                    volunteers += 1;
                    candidates.push(Report { node: i as u32, pdr: p });
                }
                NodeMessage::Silent => {}
            }
        }
        let (selected, threshold) = ap_select(&candidates, cfg);
        let joined = selected.iter().filter(|r| !self.is_fb[r.node as usize]).count() as u32;
        self.is_fb.iter_mut().for_each(|f| *f = false);
        self.fb_list = selected.iter().map(|r| r.node).collect();
        for &n in &self.fb_list {
            self.is_fb[n as usize] = true;
        }
        self.threshold = threshold;
        let control_bits = 8 * (u64::from(reports + volunteers) * u64::from(cfg.report_bytes)
            + u64::from(cfg.list_message_bytes()));
        RoundOutcome {
            reports,
            volunteers,
            fb_pdrs: selected.iter().map(|r| r.pdr).collect(),
            joined,
            control_bits,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg() -> FeedbackConfig {
        FeedbackConfig::default()
    }

    #[test]
    fn delta_pdr_examples() {
        let p = CollisionParams::default();
        assert_abs_diff_eq!(delta_pdr(0.1, &p, 50).unwrap(), 0.046875, epsilon = 1e-12);
        assert_abs_diff_eq!(delta_pdr(0.5, &p, 50).unwrap(), 0.0052, epsilon = 1e-4);
        assert_eq!(delta_pdr(0.5, &p, 0).unwrap(), 0.0);
        assert!(matches!(
            delta_pdr(0.05, &p, 50),
            Err(Error::InfeasibleInterval { .. })
        ));
    }

    #[test]
    fn fb_node_always_reports() {
        let mut a = NodeAgent::default();
        for pdr in [0.1, 0.99, 1.0] {
            assert_eq!(a.tick(pdr, 0.9, true, &cfg()), NodeMessage::Report(pdr));
        }
    }

    #[test]
    fn volunteers_on_third_consecutive_tick() {
        let mut a = NodeAgent::default();
        assert_eq!(a.tick(0.5, 0.85, false, &cfg()), NodeMessage::Silent);
        assert_eq!(a.tick(0.5, 0.85, false, &cfg()), NodeMessage::Silent);
        assert_eq!(a.tick(0.5, 0.85, false, &cfg()), NodeMessage::Volunteer(0.5));
    }

    #[test]
    fn streak_resets_when_above_threshold() {
        let mut a = NodeAgent::default();
        a.tick(0.5, 0.85, false, &cfg());
        a.tick(0.5, 0.85, false, &cfg());
        assert_eq!(a.tick(0.9, 0.85, false, &cfg()), NodeMessage::Silent);
        assert_eq!(a.streak(), 0);
        assert_eq!(a.tick(0.5, 0.85, false, &cfg()), NodeMessage::Silent);
    }

    #[test]
    fn select_full_list_sets_threshold_below() {
        let cands: Vec<Report> = (0..40)
            .map(|i| Report {
                node: i,
                pdr: 0.5 + 0.01 * i as f64,
            })
            .collect();
        let (sel, r) = ap_select(&cands, &cfg());
        assert_eq!(sel.len(), 30);
        assert!(sel.iter().all(|s| s.node < 30));
        assert_abs_diff_eq!(r, 0.79 - 0.01, epsilon = 1e-12);
    }

    #[test]
    fn select_partial_list_invites_everyone() {
        let cands: Vec<Report> = (0..10)
            .map(|i| Report {
                node: i,
                pdr: 0.9 + 0.008 * i as f64,
            })
            .collect();
        let (sel, r) = ap_select(&cands, &cfg());
        assert_eq!(sel.len(), 10);
        assert_abs_diff_eq!(r, 1.005, epsilon = 1e-12);

        let low = [Report { node: 3, pdr: 0.4 }];
        let (_, r) = ap_select(&low, &cfg());
        assert_abs_diff_eq!(r, 1.005, epsilon = 1e-12);
    }

    #[test]
    fn select_empty() {
        let th = Thresholds::default();
        let (sel, r) = ap_select(&[], &cfg());
        assert!(sel.is_empty());
        assert!(r > 1.0);
        assert_eq!(FeedbackState::new(5, &th).threshold(), th.low);
    }

    #[test]
    fn ties_break_by_node_id() {
        let small = FeedbackConfig { k: 2, ..cfg() };
        let cands = [
            Report { node: 9, pdr: 0.5 },
            Report { node: 2, pdr: 0.5 },
            Report { node: 4, pdr: 0.5 },
        ];
        let (sel, _) = ap_select(&cands, &small);
        assert_eq!(sel.iter().map(|r| r.node).collect::<Vec<_>>(), vec![2, 4]);
    }

    #[test]
    fn estimates_examples() {
        let th = Thresholds::default();
        assert_eq!(estimates(&[0.99, 1.0, 0.97], &th, 8), Estimate::default());
        let e = estimates(&[0.5, 0.6, 0.9, 0.95, 1.0], &th, 8);
        assert_eq!((e.abnormal, e.mid), (2, 2));
        // caps at a_max + epsilon = 10
        let many: Vec<f64> = (0..12).map(|_| 0.5).chain((0..5).map(|_| 0.9)).collect();
        let e = estimates(&many, &th, 8);
        assert_eq!((e.abnormal, e.mid), (10, 0));
        let some: Vec<f64> = (0..4).map(|_| 0.5).chain((0..9).map(|_| 0.9)).collect();
        let e = estimates(&some, &th, 8);
        assert_eq!((e.abnormal, e.below_high()), (4, 10));
    }

    #[test]
    fn full_list_is_stable_under_static_pdrs() {
        let th = Thresholds::default();
        let c = FeedbackConfig { k: 10, ..cfg() };
        let pdrs: Vec<Option<f64>> = (0..60).map(|i| Some(0.6 + 0.4 * (i as f64 / 60.0))).collect();
        let mut st = FeedbackState::new(60, &th);
        for _ in 0..6 {
            st.round(&pdrs, &c);
        }
        let before = st.fb_list().to_vec();
        assert_eq!(before.len(), 10);
        for _ in 0..10 {
            let out = st.round(&pdrs, &c);
            assert_eq!(st.fb_list(), &before[..]);
            assert_eq!(out.joined, 0);
            assert_eq!(out.volunteers, 0);
        }
    }

    #[test]
    fn departed_nodes_leave_the_list() {
        let th = Thresholds::default();
        let mut pdrs: Vec<Option<f64>> = vec![Some(0.5), Some(0.6), Some(1.0)];
        let mut st = FeedbackState::new(3, &th);
        for _ in 0..4 {
            st.round(&pdrs, &cfg());
        }
        // free slots invite everyone, including the healthy receiver
        assert_eq!(st.fb_list(), &[0, 1, 2]);
        pdrs[0] = None;
        st.round(&pdrs, &cfg());
        assert_eq!(st.fb_list(), &[1, 2]);
    }

    #[test]
    fn control_bits_for_full_list() {
        let th = Thresholds::default();
        let pdrs: Vec<Option<f64>> = (0..30).map(|_| Some(0.5)).collect();
        let mut st = FeedbackState::new(30, &th);
        for _ in 0..3 {
            st.round(&pdrs, &cfg());
        }
        let out = st.round(&pdrs, &cfg());
        assert_eq!(out.reports, 30);
        // 30 * 64 B reports + (16 + 8 * 30) B list = 2176 B
        assert_eq!(out.control_bits, 2176 * 8);
    }
}
