//! Append-only record of what the engine did.

use serde::{Deserialize, Serialize};

use crate::model::{NsiId, VerticalId, VsiId, VsiState};
use crate::{DeploymentFlavour, Resources};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum JournalEvent {
    VerticalRegistered {
        vertical_id: VerticalId,
        total: Resources,
    },
    BudgetChanged {
        vertical_id: VerticalId,
        total: Resources,
    },
    VsiRequested {
        vsi_id: VsiId,
        vertical_id: VerticalId,
    },
    Transition {
        vsi_id: VsiId,
        from: VsiState,
        to: VsiState,
    },
    FlavourChanged {
        vsi_id: VsiId,
        flavour: DeploymentFlavour,
    },
    NsiCreated {
        nsi_id: NsiId,
    },
    NsiJoined {
        nsi_id: NsiId,
        vsi_id: VsiId,
    },
    NsiLeft {
        nsi_id: NsiId,
        vsi_id: VsiId,
    },
    NsiRemoved {
        nsi_id: NsiId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub event: JournalEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Journal {
    entries: Vec<JournalEntry>,
}

impl Journal {
    pub fn push(&mut self, event: JournalEvent) -> &JournalEntry {
        let seq = self.entries.len() as u64;
        self.entries.push(JournalEntry { seq, event });
        self.entries.last().expect("just pushed")
    }

    pub fn entries(&self) -> &[JournalEntry] {
        &self.entries
    }

    /// Entries with `seq >= from`.
    pub fn since(&self, from: u64) -> &[JournalEntry] {
        let start = (from as usize).min(self.entries.len());
        &self.entries[start..]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
