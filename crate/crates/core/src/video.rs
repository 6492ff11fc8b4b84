//! Video segment planning: key frames go out reliably at the lowest rate,
//! the rest at the adapted rate, and per-receiver quality is graded from
//! residual loss after FEC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::Rate;
use crate::sim::Trace;

/// Video rate that exactly fills one segment's airtime when key data
/// (`f_k`) is sent at throughput `d_min` and the remainder at `d_r`.
pub fn plan_rate(d_min: f64, d_r: f64, f_k: f64) -> Result<f64> {
    if !(d_min > 0.0 && d_r > 0.0) || !d_min.is_finite() || !d_r.is_finite() {
        return Err(Error::InfeasiblePlan("throughput estimates must be positive"));
    }
    if !(0.0..=1.0).contains(&f_k) {
        return Err(Error::InputDomain {
            what: "f_k",
            value: f_k,
            domain: "[0, 1]",
        });
    }
    // the endpoints are exact identities; the closed form can be off by an ulp
    if f_k == 0.0 {
        return Ok(d_r);
    }
    if f_k == 1.0 {
        return Ok(d_min);
    }
    let f_nk = 1.0 - f_k;
    Ok(d_min * d_r / (d_min * f_nk + d_r * f_k))
}

/// Airtime fractions `(t_k, t_nk)` used by a plan.
pub fn time_budget(v_r: f64, d_min: f64, d_r: f64, f_k: f64) -> (f64, f64) {
    (v_r * f_k / d_min, v_r * (1.0 - f_k) / d_r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QualityGrade {
    Bad,
    Poor,
    Fair,
    Good,
    Excellent,
}

impl QualityGrade {
    pub const ALL: [QualityGrade; 5] = [
        QualityGrade::Excellent,
        QualityGrade::Good,
        QualityGrade::Fair,
        QualityGrade::Poor,
        QualityGrade::Bad,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QualityGrade::Excellent => "excellent",
            QualityGrade::Good => "good",
            QualityGrade::Fair => "fair",
            QualityGrade::Poor => "poor",
            QualityGrade::Bad => "bad",
        }
    }
}

/// Lower PSNR bounds (exclusive) of the four upper grades, in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradeThresholds {
    pub excellent: f64,
    pub good: f64,
    pub fair: f64,
    pub poor: f64,
}

impl Default for GradeThresholds {
    fn default() -> Self {
        GradeThresholds {
            excellent: 37.0,
            good: 31.0,
            fair: 25.0,
            poor: 20.0,
        }
    }
}

impl GradeThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.excellent > self.good && self.good > self.fair && self.fair > self.poor) {
            return Err(Error::config("video.grades", "thresholds must strictly decrease"));
        }
        Ok(())
    }

    pub fn grade(&self, psnr: f64) -> QualityGrade {
        if psnr > self.excellent {
            QualityGrade::Excellent
        } else if psnr > self.good {
            QualityGrade::Good
        } else if psnr > self.fair {
            QualityGrade::Fair
        } else if psnr > self.poor {
            QualityGrade::Poor
        } else {
            QualityGrade::Bad
        }
    }
}

/// Grade under the default thresholds.
pub fn grade(psnr: f64) -> QualityGrade {
    GradeThresholds::default().grade(psnr)
}

/// Piecewise-linear map from residual loss to PSNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PsnrMap(pub Vec<[f64; 2]>);

impl Default for PsnrMap {
    fn default() -> Self {
        PsnrMap(vec![
            [0.0, 42.0],
            [0.02, 36.0],
            [0.05, 30.0],
            [0.10, 24.0],
            [0.20, 18.0],
            [0.35, 14.0],
            [1.0, 5.0],
        ])
    }
}

impl PsnrMap {
    pub fn validate(&self) -> Result<()> {
        let pts = &self.0;
        if pts.len() < 2 || pts[0][0] != 0.0 || pts[pts.len() - 1][0] < 1.0 {
            return Err(Error::config("video.psnr_map", "points must span residual loss 0..1"));
        }
        for w in pts.windows(2) {
            if w[1][0] <= w[0][0] || w[1][1] > w[0][1] {
                return Err(Error::config(
                    "video.psnr_map",
                    "loss must increase and PSNR must not increase",
                ));
            }
        }
        Ok(())
    }

    pub fn psnr(&self, residual: f64) -> f64 {
        let pts = &self.0;
        let x = residual.clamp(0.0, pts[pts.len() - 1][0]);
        for w in pts.windows(2) {
            let ([x0, y0], [x1, y1]) = (w[0], w[1]);
            if x <= x1 {
                return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
            }
        }
        pts[pts.len() - 1][1]
    }
}

/// PSNR for a segment that lost `loss` of its packets, after FEC repairs up
/// to `fec`.
pub fn psnr_from_loss(loss: f64, fec: f64, map: &PsnrMap) -> Result<f64> {
    if !(0.0..=1.0).contains(&loss) {
        return Err(Error::InputDomain {
            what: "loss",
            value: loss,
            domain: "[0, 1]",
        });
    }
    Ok(map.psnr((loss - fec).max(0.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VideoConfig {
    /// Share of the stream's bytes in key frames.
    pub key_fraction: f64,
    pub segment_s: f64,
    pub grades: GradeThresholds,
    pub psnr_map: PsnrMap,
}

impl Default for VideoConfig {
    fn default() -> Self {
        VideoConfig {
            key_fraction: 0.175,
            segment_s: 1.0,
            grades: GradeThresholds::default(),
            psnr_map: PsnrMap::default(),
        }
    }
}

impl VideoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.key_fraction) {
            return Err(Error::config("video.key_fraction", "must lie in [0, 1]"));
        }
        if self.segment_s <= 0.0 {
            return Err(Error::config("video.segment_s", "must be positive"));
        }
        self.grades.validate()?;
        self.psnr_map.validate()
    }
}

/// Average of PSNR values taken in the mean-squared-error domain, so one
/// badly damaged segment weighs as much as it looks.
pub fn mean_psnr(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mse: f64 = values.iter().map(|p| 10f64.powf(-p / 10.0)).sum::<f64>() / values.len() as f64;
    Some(-10.0 * mse.log10())
}

/// Quality outcome of one receiver over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeQuality {
    pub node: u32,
    pub segments: u32,
    pub psnr: f64,
    pub grade: QualityGrade,
}

/// Segment-by-segment grading. `segment_pdrs[node]` holds the receiver's
/// non-key PDR for each segment it was present for.
pub fn grade_nodes(segment_pdrs: &[Vec<f64>], fec: f64, cfg: &VideoConfig) -> Result<Vec<NodeQuality>> {
    let f_nk = 1.0 - cfg.key_fraction;
    let mut out = Vec::new();
    for (node, pdrs) in segment_pdrs.iter().enumerate() {
        let psnrs = pdrs
            .iter()
            .map(|&pdr| psnr_from_loss(f_nk * (1.0 - pdr.clamp(0.0, 1.0)), fec, &cfg.psnr_map))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(psnr) = mean_psnr(&psnrs) {
            out.push(NodeQuality {
                node: node as u32,
                segments: psnrs.len() as u32,
                psnr,
                grade: cfg.grades.grade(psnr),
            });
        }
    }
    Ok(out)
}

/// Fraction of receivers per grade, in [`QualityGrade::ALL`] order.
pub fn grade_distribution(nodes: &[NodeQuality]) -> Vec<(QualityGrade, f64)> {
    let total = nodes.len().max(1) as f64;
    QualityGrade::ALL
        .iter()
        .map(|&g| (g, nodes.iter().filter(|n| n.grade == g).count() as f64 / total))
        .collect()
}

/// Video outcome of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub mean_video_rate_mbps: f64,
    pub nodes: Vec<NodeQuality>,
    pub distribution: Vec<(QualityGrade, f64)>,
}

impl VideoReport {
    pub fn share(&self, grades: &[QualityGrade]) -> f64 {
        self.distribution
            .iter()
            .filter(|(g, _)| grades.contains(g))
            .map(|(_, s)| s)
            .sum()
    }
}

/// Cuts a trace into segments, plans each segment's video rate from the
/// rate in force and grades every receiver. Key frames are assumed to
/// arrive intact; only non-key data sees the measured PDR.
pub fn evaluate_trace(trace: &Trace, cfg: &VideoConfig) -> Result<VideoReport> {
    let per_segment = ((cfg.segment_s / trace.interval_s).round() as usize).max(1);
    let mut segment_pdrs = vec![Vec::new(); trace.nodes];
    let mut planned = Vec::new();
    for seg in trace.frames.chunks(per_segment) {
        let first = &seg[0];
        if first.offered_bits > 0 {
            let d_r = first.offered_bits as f64 / trace.interval_s * (1.0 - trace.fec);
            let d_min = d_r * f64::from(Rate::LOWEST.mbps()) / f64::from(first.rate.mbps());
            planned.push(plan_rate(d_min, d_r, cfg.key_fraction)?);
        }
        for (node, out) in segment_pdrs.iter_mut().enumerate() {
            let seen: Vec<f64> = seg.iter().filter_map(|f| f.node_pdr[node]).collect();
            if !seen.is_empty() {
                out.push(seen.iter().sum::<f64>() / seen.len() as f64);
            }
        }
    }
    let nodes = grade_nodes(&segment_pdrs, trace.fec, cfg)?;
    let mean_video_rate_mbps = if planned.is_empty() {
        0.0
    } else {
        planned.iter().sum::<f64>() / planned.len() as f64 / 1e6
    };
    Ok(VideoReport {
        mean_video_rate_mbps,
        distribution: grade_distribution(&nodes),
        nodes,
    })
}
