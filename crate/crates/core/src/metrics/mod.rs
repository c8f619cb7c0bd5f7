//! Pixel-level scores, per-image aggregation and feature separability.

mod features;
mod pixel;
mod report;

pub use features::{
    analyze_separability, feature_emd, feature_emd_with, project_2d, standardize, wasserstein_1d,
    FeatureAnalysis, PixelClass, ScatterPoint, EMD_DIRECTIONS, EMD_SEED,
};
pub use pixel::{auc, confusion, f1, iou, threshold_map, ConfusionCounts};
pub use report::{
    aggregate, evaluate_image, write_reports_csv, ImageMetrics, MetricsReport, Situation,
};
