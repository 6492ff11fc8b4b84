//! Scenario description: population, channel, protocol and controller
//! parameters for one experiment family, loaded from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, ChurnModel, OnOffConfig, SpikeConfig};
use crate::controller::{ControllerKind, MinstrelConfig, MudraConfig};
use crate::error::{Error, Result};
use crate::feedback::{delta_pdr, CollisionParams, FeedbackConfig};
use crate::rate::Rate;
use crate::sla::Thresholds;
use crate::video::VideoConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub name: String,
    pub nodes: usize,
    pub duration_s: f64,
    /// Seeds used when the caller does not supply any.
    pub seeds: Vec<u64>,
    /// Controllers compared by this scenario.
    pub controllers: Vec<ControllerKind>,
    pub fixed_rate_mbps: u32,
    /// Share of the nominal PHY rate left after MAC/PHY overhead.
    pub efficiency: f64,
    pub packet_bytes: u32,
    /// Share of the stream spent on forward error correction.
    pub fec: f64,
    /// Airtime added to every packet by a unicast ACK exchange.
    pub unicast_ack_s: f64,
    /// Switch off every receiver on the feedback list at this time.
    pub remove_fb_nodes_at_s: Option<f64>,
    pub thresholds: Thresholds,
    pub feedback: FeedbackConfig,
    pub collision: CollisionParams,
    pub mudra: MudraConfig,
    pub minstrel: MinstrelConfig,
    pub channel: ChannelConfig,
    pub churn: Option<ChurnModel>,
    pub spikes: Option<SpikeConfig>,
    pub onoff: Option<OnOffConfig>,
    pub video: Option<VideoConfig>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "default".to_string(),
            nodes: 160,
            duration_s: 300.0,
            seeds: vec![1],
            controllers: vec![ControllerKind::Mudra],
            fixed_rate_mbps: 36,
            efficiency: 0.70,
            packet_bytes: 1500,
            fec: 0.15,
            unicast_ack_s: 60e-6,
            remove_fb_nodes_at_s: None,
            thresholds: Thresholds::default(),
            feedback: FeedbackConfig::default(),
            collision: CollisionParams::default(),
            mudra: MudraConfig::default(),
            minstrel: MinstrelConfig::default(),
            channel: ChannelConfig::default(),
            churn: None,
            spikes: None,
            onoff: None,
            video: None,
        }
    }
}

impl Scenario {
    pub fn interval_s(&self) -> f64 {
        self.feedback.interval_s
    }

    /// Number of reporting intervals in the run.
    pub fn intervals(&self) -> u64 {
        (self.duration_s / self.interval_s()).round() as u64
    }

    pub fn fixed_rate(&self) -> Result<Rate> {
        Rate::from_mbps(self.fixed_rate_mbps)
            .map_err(|_| Error::config("fixed_rate_mbps", format!("{} is not a ladder rate", self.fixed_rate_mbps)))
    }

    pub fn packet_bits(&self) -> f64 {
        f64::from(self.packet_bytes) * 8.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::config("nodes", "at least one receiver is required"));
        }
        self.thresholds.validate()?;
        self.feedback.validate()?;
        self.collision.validate()?;
        self.mudra.validate()?;
        self.channel.validate()?;
        delta_pdr(self.interval_s(), &self.collision, self.feedback.k)?;
        if !(self.duration_s >= 0.0) || !self.duration_s.is_finite() {
            return Err(Error::config("duration_s", "must be a finite non-negative number"));
        }
        let steps = self.duration_s / self.interval_s();
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::config(
                "duration_s",
                format!("{} s is not a whole number of {} s intervals", self.duration_s, self.interval_s()),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.controllers.is_empty() {
            return Err(Error::config("controllers", "at least one controller is required"));
        }
        self.fixed_rate()?;
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::config("efficiency", "must lie in (0, 1]"));
        }
        if self.packet_bytes == 0 {
            return Err(Error::config("packet_bytes", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.fec) {
            return Err(Error::config("fec", "must lie in [0, 1)"));
        }
        if !(self.unicast_ack_s >= 0.0) {
            return Err(Error::config("unicast_ack_s", "must be >= 0"));
        }
        if let Some(t) = self.remove_fb_nodes_at_s {
            if !(t >= 0.0) {
                return Err(Error::config("remove_fb_nodes_at_s", "must be >= 0"));
            }
        }
        let m = &self.minstrel;
        if !(m.ewma_weight > 0.0 && m.ewma_weight <= 1.0) {
            return Err(Error::config("minstrel.ewma_weight", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&m.probe_ratio) {
            return Err(Error::config("minstrel.probe_ratio", "must lie in [0, 1)"));
        }
        if let Some(c) = &self.churn {
            c.validate()?;
        }
        if let Some(s) = &self.spikes {
            let [lo, hi] = s.duration_s;
            if !(s.mean_interarrival_s > 0.0 && s.min_gap_s >= 0.0 && lo > 0.0 && lo <= hi) {
                return Err(Error::config("spikes", "need positive inter-arrival and ordered positive durations"));
            }
            if !(0.0..=1.0).contains(&s.affected_fraction) || !(0.0..=1.0).contains(&s.pdr_cap) {
                return Err(Error::config("spikes", "affected_fraction and pdr_cap must lie in [0, 1]"));
            }
        }
        if let Some(o) = &self.onoff {
            let [lo, hi] = o.loss_at_lowest;
            if !(o.on_s > 0.0 && o.off_s >= 0.0 && o.start_s >= 0.0) {
                return Err(Error::config("onoff", "need positive on period and non-negative off period"));
            }
            if !(0.0..=1.0).contains(&o.affected_fraction) || !(0.0 <= lo && lo <= hi && hi < 1.0) {
                return Err(Error::config("onoff", "fractions must lie in [0, 1) and loss range be ordered"));
            }
        }
        if let Some(v) = &self.video {
            v.validate()?;
        }
        Ok(())
    }
}

/// Parses and validates a scenario. `source_name` labels diagnostics.
pub fn parse_scenario(text: &str, source_name: &str) -> Result<Scenario> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut scenario = parse_scenario(&text, &path.display().to_string())?;
    if scenario.name == Scenario::default().name {
        if let Some(stem) = path.file_stem() {
            scenario.name = stem.to_string_lossy().into_owned();
        }
    }
    Ok(scenario)
}
