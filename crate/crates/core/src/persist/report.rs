//! Row types of the CSV reports.

use serde::{Deserialize, Serialize};

use crate::adapter::PlayerId;
use crate::game::{Attribute, AttributeProfile};
use crate::pipeline::{InterpolationReport, SteeringReport};
use crate::stylelab::RocPoint;
use crate::trainer::CurvePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub stage: String,
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

pub fn curve_rows(stage: &str, curve: &[CurvePoint]) -> Vec<CurveRow> {
    curve
        .iter()
        .map(|c| CurveRow {
            stage: stage.into(),
            epoch: c.epoch,
            split: c.split.clone(),
            loss: c.loss,
            accuracy: c.accuracy,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub sample: String,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

/// Counts of `values` in `bins` equal-width bins over [-1, 1]; 1 falls in
/// the last bin.
pub fn cosine_histogram(sample: &str, values: &[f64], bins: usize) -> Vec<HistogramRow> {
    let width = 2.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = (((v + 1.0) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramRow {
            sample: sample.into(),
            bin_lo: -1.0 + i as f64 * width,
            bin_hi: -1.0 + (i + 1) as f64 * width,
            count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinrateRow {
    pub pair: usize,
    pub weak: PlayerId,
    pub strong: PlayerId,
    pub lambda: f64,
    pub games: usize,
    pub win_rate: f64,
    pub std_error: f64,
}

pub fn winrate_rows(report: &InterpolationReport) -> Vec<WinrateRow> {
    report
        .pairs
        .iter()
        .enumerate()
        .flat_map(|(k, p)| {
            p.curve.iter().map(move |c| WinrateRow {
                pair: k,
                weak: p.weak,
                strong: p.strong,
                lambda: c.lambda,
                games: c.games,
                win_rate: c.win_rate,
                std_error: c.std_error,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringCsvRow {
    pub steered: Attribute,
    pub player: PlayerId,
    pub measured: Attribute,
    pub before: f64,
    pub after: f64,
    pub normalized_change: f64,
}

pub fn steering_rows(report: &SteeringReport) -> Vec<SteeringCsvRow> {
    report
        .rows
        .iter()
        .flat_map(|r| {
            Attribute::ALL.iter().enumerate().map(move |(i, &a)| SteeringCsvRow {
                steered: report.attribute,
                player: r.player,
                measured: a,
                before: r.before.get(a),
                after: r.after.get(a),
                normalized_change: r.normalized_change[i],
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub setting: String,
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

pub fn roc_rows(setting: &str, points: &[RocPoint]) -> Vec<RocRow> {
    points
        .iter()
        .map(|p| RocRow {
            setting: setting.into(),
            threshold: p.threshold,
            fpr: p.fpr,
            tpr: p.tpr,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub player: PlayerId,
    pub cluster: usize,
    pub aggression: f64,
    pub goal_threat: f64,
    pub defensiveness: f64,
    pub kick_rate: f64,
}

pub fn profile_row(player: PlayerId, cluster: usize, p: &AttributeProfile) -> ProfileRow {
    ProfileRow {
        player,
        cluster,
        aggression: p.aggression,
        goal_threat: p.goal_threat,
        defensiveness: p.defensiveness,
        kick_rate: p.kick_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins_cover_the_range() {
        let rows = cosine_histogram("x", &[-1.0, -0.95, 0.0, 0.99, 1.0], 4);
        let counts: Vec<usize> = rows.iter().map(|r| r.count).collect();
        assert_eq!(counts, vec![2, 0, 1, 2]);
        assert_eq!((rows[0].bin_lo, rows[3].bin_hi), (-1.0, 1.0));
    }

    #[test]
    fn csv_output_has_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roc.csv");
        let pts = crate::stylelab::roc_curve(&[(0.5, true), (0.1, false)]);
        super::super::write_csv(&path, roc_rows("seen", &pts)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("setting,threshold,fpr,tpr\n"));
        assert_eq!(text.lines().count(), 1 + pts.len());
    }
}
