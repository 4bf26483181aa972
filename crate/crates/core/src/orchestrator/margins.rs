//! Per-line progress colours.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MarginState {
    Idle,
    /// Edited in a snapshot not yet handed to the verifier (dark orange).
    EditedPending,
    /// Edited in the snapshot being verified (violet).
    BeingVerified,
}

impl MarginState {
    pub fn wire_name(self) -> &'static str {
        match self {
            MarginState::Idle => "idle",
            MarginState::EditedPending => "edited",
            MarginState::BeingVerified => "verifying",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Margins {
    pending: BTreeSet<u32>,
    verifying: BTreeSet<u32>,
}

impl Margins {
    pub fn edit(&mut self, lines: impl IntoIterator<Item = u32>) {
        self.pending.extend(lines);
    }

    /// A snapshot was handed to the verifier: everything edited so far is
    /// now being verified.
    pub fn start(&mut self) {
        let p = std::mem::take(&mut self.pending);
        self.verifying.extend(p);
    }

    pub fn finish(&mut self) {
        self.verifying.clear();
    }

    pub fn state(&self, line: u32) -> MarginState {
        if self.pending.contains(&line) {
            MarginState::EditedPending
        } else if self.verifying.contains(&line) {
            MarginState::BeingVerified
        } else {
            MarginState::Idle
        }
    }

    /// Non-idle lines.
    pub fn snapshot(&self) -> BTreeMap<u32, MarginState> {
        self.pending
            .iter()
            .chain(&self.verifying)
            .map(|l| (*l, self.state(*l)))
            .collect()
    }
}
