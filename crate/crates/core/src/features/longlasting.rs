use std::collections::BTreeMap;

use super::pagerank::{pagerank, PageRankParams};
use super::{FeatureError, RawFeatureTable};
use crate::event::{GraphEdge, NetworkName, ProfileSnapshot, UserId};
use crate::registry::{FeatureKey, FeatureRegistry, INLINK_RATIO_ATTR, PAGERANK_ATTR};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LongLastingReport {
    /// Profile attributes that the registry does not list for their network.
    pub skipped_attrs: u64,
    pub unconverged_pagerank: Vec<NetworkName>,
}

/// Rank of `value` within an ordered category list, 1-based; 0 when the
/// value is not listed.
pub fn ordinal_value(ordered: &[String], value: &str) -> f64 {
    ordered
        .iter()
        .position(|v| v == value)
        .map_or(0.0, |i| (i + 1) as f64)
}

/// Profile attributes copied through (categorical ones mapped to ordinal
/// ranks), plus PageRank and in/out-link ratio for graph networks.
pub fn aggregate_longlasting<'a>(
    profiles: impl IntoIterator<Item = &'a ProfileSnapshot>,
    edges: &[GraphEdge],
    registry: &FeatureRegistry,
    params: &PageRankParams,
) -> Result<(RawFeatureTable, LongLastingReport), FeatureError> {
    let mut table = RawFeatureTable::default();
    let mut report = LongLastingReport::default();

    for profile in profiles {
        let Some(spec) = registry.network(&profile.network) else {
            report.skipped_attrs +=
                (profile.numeric_attrs.len() + profile.categorical_attrs.len()) as u64;
            continue;
        };
        for (name, &value) in &profile.numeric_attrs {
            if spec.numeric_attrs.contains(name) {
                table.add(
                    &profile.user,
                    FeatureKey::longlasting(&spec.name, name),
                    value,
                );
            } else {
                report.skipped_attrs += 1;
            }
        }
        for (name, value) in &profile.categorical_attrs {
            match registry.ordinal_map(name) {
                Some(ordered) if spec.categorical_attrs.contains(name) => {
                    let rank = ordinal_value(ordered, value);
                    table.add(
                        &profile.user,
                        FeatureKey::longlasting(&spec.name, name),
                        rank,
                    );
                }
                _ => report.skipped_attrs += 1,
            }
        }
    }

    let mut by_network: BTreeMap<&NetworkName, Vec<&GraphEdge>> = BTreeMap::new();
    for e in edges {
        by_network.entry(&e.network).or_default().push(e);
    }
    for spec in registry.networks().iter().filter(|s| s.graph) {
        let Some(net_edges) = by_network.get(&spec.name) else {
            continue;
        };
        let pr = pagerank(net_edges.iter().copied(), [], params)?;
        if !pr.converged {
            report.unconverged_pagerank.push(spec.name.clone());
        }
        let mut degree: BTreeMap<&UserId, (u64, u64)> = BTreeMap::new();
        for e in net_edges {
            degree.entry(&e.from).or_default().1 += 1;
            degree.entry(&e.to).or_default().0 += 1;
        }
        let pr_key = FeatureKey::longlasting(&spec.name, PAGERANK_ATTR);
        let ratio_key = FeatureKey::longlasting(&spec.name, INLINK_RATIO_ATTR);
        for (user, score) in &pr.scores {
            table.add(user, pr_key.clone(), *score);
            let (inbound, outbound) = degree[user];
            table.add(
                user,
                ratio_key.clone(),
                inbound as f64 / outbound.max(1) as f64,
            );
        }
    }
    Ok((table, report))
}
