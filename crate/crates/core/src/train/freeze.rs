use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::tensor::{ParamStore, Real};

/// Group that holds fitted constants; it is frozen under every policy.
pub const BUFFERS: &str = "buffers";

/// Which parameter groups are held fixed. Every other group trains.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezePolicy {
    pub frozen: BTreeSet<String>,
}

impl Default for FreezePolicy {
    /// The pretrained stand-ins: the RGB encoder and the backbone base.
    fn default() -> Self {
        FreezePolicy {
            frozen: ["encoder.rgb", "backbone.base"].into_iter().map(String::from).collect(),
        }
    }
}

impl FreezePolicy {
    pub fn none() -> Self {
        FreezePolicy { frozen: BTreeSet::new() }
    }

    pub fn is_frozen(&self, group: &str) -> bool {
        group == BUFFERS || self.frozen.contains(group)
    }

    /// Sets every parameter's flag from its group.
    pub fn apply<F: Real>(&self, store: &mut ParamStore<F>) {
        for g in store.groups() {
            store.set_group_frozen(&g, self.is_frozen(&g));
        }
    }

    /// `(frozen, trainable)` group names present in `store`. Disjoint, and
    /// together they list every group.
    pub fn partition<F: Real>(&self, store: &ParamStore<F>) -> (Vec<String>, Vec<String>) {
        store.groups().into_iter().partition(|g| self.is_frozen(g))
    }
}
