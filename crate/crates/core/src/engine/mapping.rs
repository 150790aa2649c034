//! VSI to slice mapping.

use std::collections::BTreeSet;

use crate::model::{NsiId, VnfId};
use crate::{NsiRecord, VsiRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NsiMapping {
    NewNsi,
    ShareWith { nsi_id: NsiId, shared: BTreeSet<VnfId> },
}

/// Picks an existing NSI to join, or asks for a new one. An NSI qualifies
/// when it runs at least one of the service's VNFs and neither side asks for
/// isolation. Among candidates the one sharing the most VNFs wins, ties going
/// to the smaller id.
pub fn map_to_nsi<'a>(
    vsi: &VsiRecord,
    existing: impl IntoIterator<Item = &'a NsiRecord>,
) -> NsiMapping {
    if vsi.isolation_required {
        return NsiMapping::NewNsi;
    }
    let wanted = vsi.vnffg.vnf_ids();
    let mut best: Option<(&NsiId, BTreeSet<VnfId>)> = None;
    for nsi in existing {
        if nsi.isolated || nsi.vsi_ids.is_empty() || nsi.vsi_ids.contains(&vsi.id) {
            continue;
        }
        let shared: BTreeSet<VnfId> = nsi
            .shared_vnf_instances
            .keys()
            .filter(|id| wanted.contains(*id))
            .cloned()
            .collect();
        if shared.is_empty() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((id, s)) => shared.len() > s.len() || (shared.len() == s.len() && nsi.id < **id),
        };
        if better {
            best = Some((&nsi.id, shared));
        }
    }
    match best {
        Some((nsi_id, shared)) => NsiMapping::ShareWith {
            nsi_id: nsi_id.clone(),
            shared,
        },
        None => NsiMapping::NewNsi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VsiId;
    use crate::{SharedVnfState, Slo, VnfSpec, Vnffg};

    fn vsi(id: &str, vnfs: &[&str]) -> VsiRecord {
        let n = vnfs.len() as f64;
        let graph = Vnffg::new(
            vnfs.iter().map(|v| VnfSpec::new(*v, 1.0 / n, 1.0)).collect(),
            vec![],
        );
        VsiRecord::new(id, "v", 0, graph, Slo::new(1.0, 1.0))
    }

    fn nsi(id: &str, member: &str, vnfs: &[&str], isolated: bool) -> NsiRecord {
        let mut nsi = NsiRecord::new(NsiId::from(id), isolated);
        nsi.vsi_ids.insert(VsiId::from(member));
        for v in vnfs {
            nsi.shared_vnf_instances
                .insert(VnfId::from(*v), SharedVnfState::new(VnfId::from(*v)));
        }
        nsi
    }

    #[test]
    fn shares_when_a_vnf_is_common() {
        let existing = [nsi("n1", "x", &["fw", "cache"], false)];
        let m = map_to_nsi(&vsi("s", &["cache", "dpi"]), &existing);
        assert_eq!(
            m,
            NsiMapping::ShareWith {
                nsi_id: NsiId::from("n1"),
                shared: [VnfId::from("cache")].into_iter().collect()
            }
        );
    }

    #[test]
    fn isolation_on_either_side_forces_new() {
        let existing = [nsi("n1", "x", &["cache"], true)];
        assert_eq!(map_to_nsi(&vsi("s", &["cache"]), &existing), NsiMapping::NewNsi);
        let existing = [nsi("n1", "x", &["cache"], false)];
        let lonely = vsi("s", &["cache"]).isolated(true);
        assert_eq!(map_to_nsi(&lonely, &existing), NsiMapping::NewNsi);
    }

    #[test]
    fn disjoint_graphs_get_new_nsi() {
        let existing = [nsi("n1", "x", &["fw"], false)];
        assert_eq!(map_to_nsi(&vsi("s", &["cache"]), &existing), NsiMapping::NewNsi);
    }

    #[test]
    fn largest_overlap_wins() {
        let existing = [
            nsi("n1", "x", &["a"], false),
            nsi("n2", "y", &["a", "b"], false),
        ];
        match map_to_nsi(&vsi("s", &["a", "b"]), &existing) {
            NsiMapping::ShareWith { nsi_id, .. } => assert_eq!(nsi_id, NsiId::from("n2")),
            other => panic!("{other:?}"),
        }
    }
}
