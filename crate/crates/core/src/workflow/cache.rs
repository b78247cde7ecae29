use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, read_text, WorkflowError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedAssignment {
    pub arm: usize,
    /// Randomized holdout unit rather than a policy-assigned one.
    pub holdout: bool,
}

/// Sticky unit → arm map: the first assignment a unit receives is the
/// one it keeps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssignmentCache {
    pub entries: BTreeMap<String, CachedAssignment>,
}

impl AssignmentCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, unit_id: &str) -> Option<CachedAssignment> {
        self.entries.get(unit_id).copied()
    }

    /// Returns the cached assignment, or stores and returns `assign()` on
    /// first exposure. The flag is true on a cache hit.
    pub fn get_or_assign(
        &mut self,
        unit_id: &str,
        assign: impl FnOnce() -> CachedAssignment,
    ) -> (CachedAssignment, bool) {
        if let Some(a) = self.entries.get(unit_id) {
            return (*a, true);
        }
        let a = assign();
        self.entries.insert(unit_id.to_string(), a);
        (a, false)
    }

    /// Loads the cache, or an empty one when the file does not exist.
    pub fn load(path: &Path) -> Result<Self, WorkflowError> {
        if !path.is_file() {
            return Ok(Self::default());
        }
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| WorkflowError::Json { path: path.to_path_buf(), source: e })
    }

    pub fn save(&self, path: &Path) -> Result<(), WorkflowError> {
        let text = serde_json::to_string_pretty(self).expect("cache serializes") + "\n";
        std::fs::write(path, text).map_err(|e| io_err(path, e))
    }
}
