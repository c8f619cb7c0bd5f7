use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pixel::{auc, confusion, f1, iou, threshold_map, ConfusionCounts};
use crate::dataio::{Mask, ProbabilityMap};
use crate::error::{invalid, Error, Result};

/// Which model saw which kind of input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Situation {
    /// Plain-trained localizer on plain images.
    #[serde(rename = "M^P{I^P}")]
    PlainOnPlain,
    /// Plain-trained localizer on distorted images.
    #[serde(rename = "M^P{I^D}")]
    PlainOnDistorted,
    /// Fine-tuned localizer on distorted images.
    #[serde(rename = "M^{D|P}{I^D}")]
    FinetunedOnDistorted,
    /// Restorer plus localizer on distorted images.
    #[serde(rename = "M^ReLoc{I^D}")]
    RelocOnDistorted,
}

impl Situation {
    pub const ALL: [Situation; 4] = [
        Situation::PlainOnPlain,
        Situation::PlainOnDistorted,
        Situation::FinetunedOnDistorted,
        Situation::RelocOnDistorted,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Situation::PlainOnPlain => "M^P{I^P}",
            Situation::PlainOnDistorted => "M^P{I^D}",
            Situation::FinetunedOnDistorted => "M^{D|P}{I^D}",
            Situation::RelocOnDistorted => "M^ReLoc{I^D}",
        }
    }

    /// Whether inputs are JPEG-degraded before inference.
    /// File-name friendly form of the tag.
    pub fn slug(&self) -> &'static str {
        match self {
            Situation::PlainOnPlain => "mp_plain",
            Situation::PlainOnDistorted => "mp_distorted",
            Situation::FinetunedOnDistorted => "dp_distorted",
            Situation::RelocOnDistorted => "reloc_distorted",
        }
    }

    pub fn distorted_input(&self) -> bool {
        !matches!(self, Situation::PlainOnPlain)
    }
}

impl fmt::Display for Situation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Situation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Situation::ALL
            .into_iter()
            .find(|sit| sit.tag().to_ascii_lowercase() == key || sit.slug() == key)
            .or(match key.as_str() {
                "plain" | "p_on_p" => Some(Situation::PlainOnPlain),
                "mp" | "p_on_d" => Some(Situation::PlainOnDistorted),
                "finetuned" | "dp" | "dp_on_d" => Some(Situation::FinetunedOnDistorted),
                "reloc" | "reloc_on_d" => Some(Situation::RelocOnDistorted),
                _ => None,
            })
            .ok_or_else(|| invalid!("unknown situation `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub f1: f64,
    pub iou: f64,
    /// `None` when the ground truth holds a single class.
    pub auc: Option<f64>,
    pub counts: ConfusionCounts,
}

/// Scores one stitched prediction.
pub fn evaluate_image(
    id: impl Into<String>,
    prob: &ProbabilityMap,
    gt: &Mask,
    threshold: f64,
) -> Result<ImageMetrics> {
    let counts = confusion(&threshold_map(prob, threshold)?, gt)?;
    let auc = match auc(prob, gt) {
        Ok(v) => Some(v),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ImageMetrics {
        id: id.into(),
        f1: f1(&counts),
        iou: iou(&counts),
        auc,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub situation: Situation,
    pub images: Vec<ImageMetrics>,
    pub mean_f1: f64,
    pub mean_iou: f64,
    /// Mean over images whose ground truth holds both classes.
    pub mean_auc: Option<f64>,
    /// Images left out of the AUC mean.
    pub auc_excluded: Vec<String>,
}

/// Per-image means. Single-class images count for F1 and IOU but not AUC.
pub fn aggregate(situation: Situation, images: Vec<ImageMetrics>) -> Result<MetricsReport> {
    if images.is_empty() {
        return Err(invalid!("cannot aggregate an empty set of images"));
    }
    let n = images.len() as f64;
    let mean_f1 = images.iter().map(|m| m.f1).sum::<f64>() / n;
    let mean_iou = images.iter().map(|m| m.iou).sum::<f64>() / n;
    let aucs: Vec<f64> = images.iter().filter_map(|m| m.auc).collect();
    let mean_auc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
    let auc_excluded = images
        .iter()
        .filter(|m| m.auc.is_none())
        .map(|m| m.id.clone())
        .collect();
    Ok(MetricsReport {
        situation,
        images,
        mean_f1,
        mean_iou,
        mean_auc,
        auc_excluded,
    })
}

impl MetricsReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn summary(&self) -> String {
        let auc = self
            .mean_auc
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        format!(
            "{:<14} F1 {:.4}  IOU {:.4}  AUC {auc}  ({} images)",
            self.situation.tag(),
            self.mean_f1,
            self.mean_iou,
            self.images.len()
        )
    }
}

/// One CSV table with columns `id,situation,F1,IOU,AUC`; an empty AUC cell
/// marks a single-class image.
pub fn write_reports_csv(reports: &[MetricsReport], path: &Path) -> Result<()> {
    let mut out = String::from("id,situation,F1,IOU,AUC\n");
    for r in reports {
        for m in &r.images {
            let auc = m.auc.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{auc}\n",
                m.id, r.situation, m.f1, m.iou
            ));
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, f1: f64, auc: Option<f64>) -> ImageMetrics {
        ImageMetrics {
            id: id.into(),
            f1,
            iou: f1 / 2.0,
            auc,
            counts: ConfusionCounts::default(),
        }
    }

    #[test]
    fn means_and_exclusions() {
        let one = aggregate(Situation::PlainOnPlain, vec![record("a", 0.3, Some(0.7))]).unwrap();
        assert_eq!((one.mean_f1, one.mean_auc), (0.3, Some(0.7)));

        let two = aggregate(
            Situation::PlainOnDistorted,
            vec![
                record("a", 0.4, Some(0.9)),
                record("b", 0.6, None),
                record("c", 0.5, Some(0.7)),
            ],
        )
        .unwrap();
        assert!((two.mean_f1 - 0.5).abs() < 1e-15);
        assert!((two.mean_auc.unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(two.auc_excluded, vec!["b".to_string()]);
        assert!(aggregate(Situation::PlainOnPlain, vec![]).is_err());
    }

    #[test]
    fn situation_tags_round_trip() {
        for s in Situation::ALL {
            assert_eq!(s.tag().parse::<Situation>().unwrap(), s);
            assert_eq!(s.slug().parse::<Situation>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.tag()));
        }
        assert_eq!(
            "reloc".parse::<Situation>().unwrap(),
            Situation::RelocOnDistorted
        );
        assert_eq!(
            "mp-distorted".parse::<Situation>().unwrap(),
            Situation::PlainOnDistorted
        );
        assert!("other".parse::<Situation>().is_err());
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let r = aggregate(Situation::RelocOnDistorted, vec![record("x", 1.0, None)]).unwrap();
        write_reports_csv(&[r], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "id,situation,F1,IOU,AUC\nx,M^ReLoc{I^D},1,0.5,\n");
    }
}
