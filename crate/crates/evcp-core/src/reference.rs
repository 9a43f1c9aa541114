//! Published reference metrics, shipped as a versioned JSON resource so
//! evaluation reports can render side-by-side comparisons.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// task key -> model kind -> metric name -> value (fractions).
pub type ReferenceTasks = BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceMetrics {
    pub version: u32,
    pub description: String,
    pub tasks: ReferenceTasks,
}

const RESOURCE: &str = include_str!("../resources/reference_metrics.json");

/// The embedded reference table.
pub fn reference_metrics() -> &'static ReferenceMetrics {
    static CELL: OnceLock<ReferenceMetrics> = OnceLock::new();
    CELL.get_or_init(|| serde_json::from_str(RESOURCE).expect("embedded resource parses"))
}

/// Reference rows for one task key (e.g. `traffic_binary`), if present.
pub fn for_task(task_key: &str) -> Option<&'static BTreeMap<String, BTreeMap<String, f64>>> {
    reference_metrics().tasks.get(task_key)
}
