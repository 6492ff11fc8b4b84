//! Synthetic per-receiver channel: an SNR-to-PDR transition band per node,
//! interference episodes and membership churn.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::Rate;

/// `2 ln 99`: the logistic climbs from 1% to 99% over this many scale units.
const LOGISTIC_SPAN: f64 = 9.190_239_700_179_55;

/// Required SNR per ladder rate: `lowest_db + index * step_db`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateSnrRequirement {
    pub lowest_db: f64,
    pub step_db: f64,
}

impl Default for RateSnrRequirement {
    fn default() -> Self {
        RateSnrRequirement {
            lowest_db: 6.0,
            step_db: 2.5,
        }
    }
}

impl RateSnrRequirement {
    pub fn required_db(&self, rate: Rate) -> f64 {
        self.lowest_db + rate.index() as f64 * self.step_db
    }

    pub fn validate(&self) -> Result<()> {
        if !(2.0..=3.0).contains(&self.step_db) {
            return Err(Error::config(
                "channel.requirement.step_db",
                format!("adjacent rates must differ by 2-3 dB, got {}", self.step_db),
            ));
        }
        Ok(())
    }
}

/// One receiver's channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeChannel {
    pub node_id: u32,
    pub base_snr: f64,
    pub sensitivity_offset: f64,
    /// Width in dB over which PDR falls from ~99% to ~1%.
    pub band_width: f64,
    pub active: bool,
}

impl NodeChannel {
    pub fn effective_snr(&self) -> f64 {
        self.base_snr + self.sensitivity_offset
    }
}

/// Logistic PDR as a function of SNR margin over the rate's requirement.
/// Crosses 0.5 at zero margin and spans 0.99..0.01 across `band_width` dB.
pub fn transition_pdr(margin_db: f64, band_width: f64) -> f64 {
    let scale = band_width / LOGISTIC_SPAN;
    1.0 / (1.0 + (-margin_db / scale).exp())
}

/// Measured PDR over `packets` transmissions.
pub fn sample_interval_pdr<R: Rng + ?Sized>(pdr: f64, packets: u64, rng: &mut R) -> f64 {
    if packets == 0 {
        return pdr;
    }
    let p = pdr.clamp(0.0, 1.0);
    let received = Binomial::new(packets, p).map(|b| b.sample(rng)).unwrap_or(0);
    received as f64 / packets as f64
}

/// Toggles each node's membership with probability `p`. Returns the number
/// of toggles.
pub fn apply_churn<R: Rng + ?Sized>(nodes: &mut [NodeChannel], p: f64, rng: &mut R) -> usize {
    let mut toggled = 0;
    for node in nodes.iter_mut() {
        if rng.random_bool(p.clamp(0.0, 1.0)) {
            node.active = !node.active;
            toggled += 1;
        }
    }
    toggled
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterferenceKind {
    SporadicSpike,
    PeriodicOnOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Effect {
    /// Affected receivers' PDR is capped at this value.
    Cap(f64),
    /// Affected receivers lose packets to collisions. The loss scales with
    /// per-packet airtime, so it is worst at low rates.
    Collision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceEvent {
    pub kind: InterferenceKind,
    pub start: f64,
    pub duration: f64,
    pub affected_fraction: f64,
    pub effect: Effect,
    affected: Vec<bool>,
}

impl InterferenceEvent {
    pub fn covers(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }

    pub fn affects(&self, node: usize) -> bool {
        self.affected.get(node).copied().unwrap_or(false)
    }

    pub fn affected_count(&self) -> usize {
        self.affected.iter().filter(|&&a| a).count()
    }
}

/// Sporadic interference bursts as a renewal process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpikeConfig {
    pub start_after_s: f64,
    pub mean_interarrival_s: f64,
    /// Quiet time forced between the end of one burst and the next.
    pub min_gap_s: f64,
    pub duration_s: [f64; 2],
    pub affected_fraction: f64,
    pub pdr_cap: f64,
}

impl Default for SpikeConfig {
    fn default() -> Self {
        SpikeConfig {
            start_after_s: 60.0,
            mean_interarrival_s: 30.0,
            min_gap_s: 5.0,
            duration_s: [1.0, 3.5],
            affected_fraction: 0.2,
            pdr_cap: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AffectedSelection {
    /// Receivers with the strongest signal, i.e. those closest to an
    /// interferer placed next to the AP.
    Strongest,
    Random,
}

/// A neighbouring transmitter alternating on and off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnOffConfig {
    pub start_s: f64,
    pub on_s: f64,
    pub off_s: f64,
    pub affected_fraction: f64,
    pub select: AffectedSelection,
    /// Range of per-receiver collision loss at the lowest rate.
    pub loss_at_lowest: [f64; 2],
}

impl Default for OnOffConfig {
    fn default() -> Self {
        OnOffConfig {
            start_s: 20.0,
            on_s: 20.0,
            off_s: 20.0,
            affected_fraction: 0.45,
            select: AffectedSelection::Strongest,
            loss_at_lowest: [0.36, 0.46],
        }
    }
}

/// Membership churn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChurnModel {
    pub p: f64,
    pub epoch_s: f64,
    pub initial_active_fraction: f64,
}

impl Default for ChurnModel {
    fn default() -> Self {
        ChurnModel {
            p: 0.0,
            epoch_s: 6.0,
            initial_active_fraction: 0.5,
        }
    }
}

impl ChurnModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::config("churn.p", "must lie in [0, 1]"));
        }
        if self.epoch_s <= 0.0 {
            return Err(Error::config("churn.epoch_s", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.initial_active_fraction) {
            return Err(Error::config("churn.initial_active_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A slice of the population with SNR uniform over a range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrGroup {
    pub share: f64,
    pub snr_db: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub requirement: RateSnrRequirement,
    pub sensitivity_sd_db: f64,
    pub band_width_db: [f64; 2],
    pub groups: Vec<SnrGroup>,
}

impl Default for ChannelConfig {
    // Calibrated so that with default thresholds 36 Mbps is the highest
    // rate with at most A_max abnormal receivers.
    fn default() -> Self {
        ChannelConfig {
            requirement: RateSnrRequirement::default(),
            sensitivity_sd_db: 0.3,
            band_width_db: [2.5, 4.5],
            groups: vec![
                SnrGroup {
                    share: 0.975,
                    snr_db: [19.0, 27.0],
                },
                SnrGroup {
                    share: 0.025,
                    snr_db: [16.9, 17.7],
                },
            ],
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        self.requirement.validate()?;
        let [lo, hi] = self.band_width_db;
        if !(2.0 <= lo && lo <= hi && hi <= 5.0) {
            return Err(Error::config(
                "channel.band_width_db",
                format!("transition band must lie within [2, 5] dB, got [{lo}, {hi}]"),
            ));
        }
        if self.sensitivity_sd_db < 0.0 {
            return Err(Error::config("channel.sensitivity_sd_db", "must be >= 0"));
        }
        if self.groups.is_empty() {
            return Err(Error::config("channel.groups", "at least one group is required"));
        }
        for (i, g) in self.groups.iter().enumerate() {
            if g.share <= 0.0 || g.snr_db[0] > g.snr_db[1] {
                return Err(Error::config(
                    format!("channel.groups[{i}]"),
                    "share must be positive and snr_db ordered",
                ));
            }
        }
        Ok(())
    }

    /// Splits `nodes` across groups by share using largest remainders.
    pub fn group_counts(&self, nodes: usize) -> Vec<usize> {
        let total: f64 = self.groups.iter().map(|g| g.share).sum();
        let exact: Vec<f64> = self
            .groups
            .iter()
            .map(|g| g.share / total * nodes as f64)
            .collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut left = nodes - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }

    pub fn generate<R: Rng + ?Sized>(&self, nodes: usize, rng: &mut R) -> Vec<NodeChannel> {
        let offsets = Normal::new(0.0, self.sensitivity_sd_db.max(0.0)).expect("finite sd");
        let [bw_lo, bw_hi] = self.band_width_db;
        let mut out = Vec::with_capacity(nodes);
        for (group, count) in self.groups.iter().zip(self.group_counts(nodes)) {
            let [lo, hi] = group.snr_db;
            for _ in 0..count {
                let base_snr = if hi > lo { rng.random_range(lo..hi) } else { lo };
                let sensitivity_offset = offsets.sample(rng);
                let band_width = if bw_hi > bw_lo { rng.random_range(bw_lo..bw_hi) } else { bw_lo };
                out.push(NodeChannel {
                    node_id: out.len() as u32,
                    base_snr,
                    sensitivity_offset,
                    band_width,
                    active: true,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct SpikeProcess {
    cfg: SpikeConfig,
    next_start: f64,
}

/// Channel state of one simulation run.
#[derive(Debug, Clone)]
pub struct Channel {
    pub nodes: Vec<NodeChannel>,
    requirement: RateSnrRequirement,
    collision_loss: Vec<f64>,
    spikes: Option<SpikeProcess>,
    onoff: Option<OnOffConfig>,
    events: Vec<InterferenceEvent>,
    now: f64,
}

impl Channel {
    pub fn new(nodes: Vec<NodeChannel>, requirement: RateSnrRequirement) -> Self {
        let n = nodes.len();
        Channel {
            nodes,
            requirement,
            collision_loss: vec![0.0; n],
            spikes: None,
            onoff: None,
            events: Vec::new(),
            now: 0.0,
        }
    }

    pub fn with_spikes<R: Rng + ?Sized>(mut self, cfg: SpikeConfig, rng: &mut R) -> Self {
        let first = cfg.start_after_s + Exp::new(1.0 / cfg.mean_interarrival_s).unwrap().sample(rng);
        self.spikes = Some(SpikeProcess {
            cfg,
            next_start: first,
        });
        self
    }

    pub fn with_onoff<R: Rng + ?Sized>(mut self, cfg: OnOffConfig, rng: &mut R) -> Self {
        let n = self.nodes.len();
        let k = ((n as f64) * cfg.affected_fraction).round() as usize;
        let chosen: Vec<usize> = match cfg.select {
            AffectedSelection::Strongest => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| {
                    self.nodes[b]
                        .base_snr
                        .total_cmp(&self.nodes[a].base_snr)
                        .then(a.cmp(&b))
                });
                order.truncate(k);
                order
            }
            AffectedSelection::Random => index::sample(rng, n, k.min(n)).into_vec(),
        };
        let [lo, hi] = cfg.loss_at_lowest;
        for i in chosen {
            self.collision_loss[i] = if hi > lo { rng.random_range(lo..hi) } else { lo };
        }
        self.onoff = Some(cfg);
        self
    }

    pub fn requirement(&self) -> &RateSnrRequirement {
        &self.requirement
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.active).count()
    }

    pub fn events(&self) -> &[InterferenceEvent] {
        &self.events
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Whether any interference episode covers time `t`.
    pub fn interference_at(&self, t: f64) -> bool {
        self.events.iter().any(|e| e.covers(t))
    }

    /// Moves the clock to `t`, materialising interference episodes that
    /// start on or before `t`. Spike victims are drawn from the receivers
    /// active when the spike begins.
    pub fn advance<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) {
        self.now = t;
        if let Some(cfg) = self.onoff {
            let period = cfg.on_s + cfg.off_s;
            let started = self
                .events
                .iter()
                .filter(|e| e.kind == InterferenceKind::PeriodicOnOff)
                .count();
            let next = cfg.start_s + started as f64 * period;
            if period > 0.0 && t >= next {
                let affected = self.collision_loss.iter().map(|&c| c > 0.0).collect();
                self.events.push(InterferenceEvent {
                    kind: InterferenceKind::PeriodicOnOff,
                    start: next,
                    duration: cfg.on_s,
                    affected_fraction: cfg.affected_fraction,
                    effect: Effect::Collision,
                    affected,
                });
            }
        }
        if let Some(proc_) = self.spikes.as_mut() {
            while t >= proc_.next_start {
                let cfg = proc_.cfg;
                let start = proc_.next_start;
                let [dlo, dhi] = cfg.duration_s;
                let duration = if dhi > dlo { rng.random_range(dlo..dhi) } else { dlo };
                let active: Vec<usize> = self
                    .nodes
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| n.active)
                    .map(|(i, _)| i)
                    .collect();
                let k = ((active.len() as f64) * cfg.affected_fraction).ceil() as usize;
                let mut affected = vec![false; self.nodes.len()];
                for j in index::sample(rng, active.len(), k.min(active.len())) {
                    affected[active[j]] = true;
                }
                self.events.push(InterferenceEvent {
                    kind: InterferenceKind::SporadicSpike,
                    start,
                    duration,
                    affected_fraction: cfg.affected_fraction,
                    effect: Effect::Cap(cfg.pdr_cap),
                    affected,
                });
                let gap = Exp::new(1.0 / cfg.mean_interarrival_s).unwrap().sample(rng);
                proc_.next_start = start + duration + cfg.min_gap_s + gap;
            }
        }
    }

    /// PDR of `node` at `rate` at time `t` before measurement noise.
    pub fn pdr_at(&self, node: usize, rate: Rate, t: f64) -> Result<f64> {
        let ch = &self.nodes[node];
        if !ch.active {
            return Err(Error::Membership(ch.node_id));
        }
        Ok(self.pdr_unchecked(node, rate, t))
    }

    /// PDR at the current clock.
    pub fn pdr_of(&self, node: usize, rate: Rate) -> Result<f64> {
        self.pdr_at(node, rate, self.now)
    }

    pub(crate) fn pdr_unchecked(&self, node: usize, rate: Rate, t: f64) -> f64 {
        let ch = &self.nodes[node];
        let margin = ch.effective_snr() - self.requirement.required_db(rate);
        let mut pdr = transition_pdr(margin, ch.band_width);
        for ev in self.events.iter().filter(|e| e.covers(t) && e.affects(node)) {
            match ev.effect {
                Effect::Cap(cap) => pdr = pdr.min(cap),
                Effect::Collision => {
                    let airtime_ratio = Rate::LOWEST.mbps() as f64 / rate.mbps() as f64;
                    pdr *= (1.0 - self.collision_loss[node] * airtime_ratio).max(0.0);
                }
            }
        }
        pdr
    }

    /// Active node with the weakest received signal, if any.
    pub fn weakest_active(&self) -> Option<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.active)
            .min_by(|a, b| a.1.base_snr.total_cmp(&b.1.base_snr).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    }
}
