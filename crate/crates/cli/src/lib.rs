//! Command line and HTTP front end for `voxsel`.

pub mod server;

use voxsel::eval::MetricRecord;

/// Aligned `scene  metric  value` table for terminal output.
pub fn metrics_table(records: &[MetricRecord]) -> String {
    let sw = records.iter().map(|r| r.scene.len()).max().unwrap_or(0).max(5);
    let mw = records.iter().map(|r| r.metric.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:<sw$}  {:<mw$}  value\n", "scene", "metric");
    for r in records {
        out.push_str(&format!("{:<sw$}  {:<mw$}  {:.4}\n", r.scene, r.metric, r.value));
    }
    out
}
