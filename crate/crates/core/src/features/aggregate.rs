use std::collections::HashMap;

use rayon::prelude::*;

use super::cohort::{conditional_emit, CohortContext, DayKey};
use super::sketch::{multiday_sketch, DayBuckets};
use super::{FeatureError, RawFeatureTable};
use crate::event::InteractionEvent;
use crate::ingest::{partition_by_author, IngestBatch};
use crate::registry::{DynamicKey, FeatureKey, FeatureRegistry};

/// Counts qualifying reactions for every (author, cohort, network, content,
/// action, window) tuple. Authors are split into `shards` disjoint groups
/// that aggregate in parallel and merge by addition; the result does not
/// depend on the shard count.
pub fn aggregate_dynamic(
    batch: &IngestBatch,
    cohorts: &CohortContext,
    registry: &FeatureRegistry,
    shards: usize,
) -> Result<RawFeatureTable, FeatureError> {
    let parts = partition_by_author(batch, shards)?;
    let tables: Vec<RawFeatureTable> = parts
        .par_iter()
        .map(|shard| {
            aggregate_events(
                shard.iter().flat_map(|(_, events)| events.iter()),
                cohorts,
                registry,
                batch.reference_time,
            )
        })
        .collect();
    Ok(tables
        .into_iter()
        .fold(RawFeatureTable::default(), |mut acc, t| {
            acc.merge(t);
            acc
        }))
}

/// Single pass over `events`: bucket each emission by day, then expand the
/// buckets into window counts.
pub fn aggregate_events<'a>(
    events: impl IntoIterator<Item = &'a InteractionEvent>,
    cohorts: &CohortContext,
    registry: &FeatureRegistry,
    reference_time: i64,
) -> RawFeatureTable {
    let mut buckets: HashMap<DayKey<'a>, DayBuckets> = HashMap::new();
    for event in events {
        for emission in conditional_emit(event, cohorts, reference_time) {
            if !registry.cohorts().contains(&emission.key.cohort) {
                continue;
            }
            *buckets
                .entry(emission.key)
                .or_default()
                .entry(emission.day_index)
                .or_insert(0) += 1;
        }
    }

    let windows = registry.windows();
    let mut table = RawFeatureTable::default();
    for (key, days) in buckets {
        for (&window_days, count) in windows.iter().zip(multiday_sketch(&days, windows)) {
            if count == 0 {
                continue;
            }
            let feature = FeatureKey::Dynamic(DynamicKey {
                network: key.network.clone(),
                content_type: key.content_type.to_string(),
                action: key.action.to_string(),
                cohort: key.cohort,
                window_days,
            });
            table.add(key.author, feature, count as f64);
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{NetworkName, UserId, SECONDS_PER_DAY};
    use crate::ingest::BatchBuilder;
    use crate::registry::Cohort;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use std::collections::HashMap as Map;

    const REF: i64 = 1_700_000_000;

    fn ev(
        actor: &str,
        author: &str,
        net: &str,
        content: &str,
        action: &str,
        age_secs: i64,
    ) -> InteractionEvent {
        InteractionEvent {
            actor: UserId::new(actor).unwrap(),
            author: UserId::new(author).unwrap(),
            network: NetworkName::new(net).unwrap(),
            content_type: content.into(),
            action: action.into(),
            timestamp: REF - age_secs,
        }
    }

    fn batch(events: Vec<InteractionEvent>) -> IngestBatch {
        let reg = FeatureRegistry::default_config();
        let mut b = BatchBuilder::new(REF, &reg).unwrap();
        for e in events {
            b.add_event(e);
        }
        b.finish().0
    }

    fn key(net: &str, content: &str, action: &str, cohort: Cohort, window_days: u32) -> FeatureKey {
        FeatureKey::Dynamic(DynamicKey {
            network: NetworkName::new(net).unwrap(),
            content_type: content.into(),
            action: action.into(),
            cohort,
            window_days,
        })
    }

    #[test]
    fn peer_comments_on_photos_within_a_week() {
        let reg = FeatureRegistry::default_config();
        let mut scores = Map::new();
        scores.insert(UserId::new("p").unwrap(), 50.0);
        for (i, s) in [51.0, 49.0, 53.0, 47.5, 80.0].iter().enumerate() {
            scores.insert(UserId::new(format!("r{i}")).unwrap(), *s);
        }
        let ctx = CohortContext::new(scores, 5.0).unwrap();
        let day = SECONDS_PER_DAY;
        let b = batch(vec![
            ev("r0", "p", "fb", "photo", "comment", day),
            ev("r1", "p", "fb", "photo", "comment", 2 * day),
            ev("r2", "p", "fb", "photo", "comment", 6 * day + 5),
            ev("r3", "p", "fb", "photo", "comment", 3 * day),
            // not a peer
            ev("r4", "p", "fb", "photo", "comment", day),
            // peer but outside the week
            ev("r0", "p", "fb", "photo", "comment", 8 * day),
            // peer, different action
            ev("r1", "p", "fb", "photo", "like", day),
        ]);
        let table = aggregate_dynamic(&b, &ctx, &reg, 1).unwrap();
        let p = UserId::new("p").unwrap();
        assert_eq!(
            table.get(&p, &key("fb", "photo", "comment", Cohort::Peers, 7)),
            4.0
        );
        assert_eq!(
            table.get(&p, &key("fb", "photo", "comment", Cohort::Peers, 14)),
            5.0
        );
        assert_eq!(
            table.get(&p, &key("fb", "photo", "comment", Cohort::All, 7)),
            5.0
        );
        assert_eq!(
            table.get(&p, &key("fb", "photo", "comment", Cohort::Higher, 7)),
            1.0
        );
        assert_eq!(
            table.get(&p, &key("fb", "photo", "like", Cohort::Peers, 3)),
            1.0
        );
    }

    #[test]
    fn empty_batch_gives_empty_table() {
        let reg = FeatureRegistry::default_config();
        let t = aggregate_dynamic(
            &IngestBatch::empty(REF),
            &CohortContext::bootstrap(),
            &reg,
            3,
        )
        .unwrap();
        assert!(t.is_empty());
    }

    fn arb_events() -> impl Strategy<Value = Vec<InteractionEvent>> {
        let one = (
            "[a-e]",
            "[a-e]",
            prop::sample::select(vec![
                ("tw", "message", "retweet"),
                ("tw", "photo", "like"),
                ("fb", "video", "comment"),
            ]),
            1i64..90 * SECONDS_PER_DAY,
        )
            .prop_map(|(a, b, (n, c, act), age)| ev(&a, &b, n, c, act, age));
        proptest::collection::vec(one, 0..80)
    }

    fn scores() -> CohortContext {
        let s = ["a", "b", "c", "d"]
            .iter()
            .zip([10.0, 12.0, 40.0, 90.0])
            .map(|(u, v)| (UserId::new(*u).unwrap(), v))
            .collect();
        CohortContext::new(s, 5.0).unwrap()
    }

    proptest! {
        #[test]
        fn invariant_under_order_and_sharding(events in arb_events(), seed in any::<u64>(), shards in 1usize..6) {
            let reg = FeatureRegistry::default_config();
            let ctx = scores();
            let base = aggregate_dynamic(&batch(events.clone()), &ctx, &reg, 1).unwrap();
            let mut shuffled: Vec<_> = events
                .into_iter()
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let direct = aggregate_events(shuffled.iter().filter(|e| e.actor != e.author), &ctx, &reg, REF);
            prop_assert_eq!(&direct, &base);
            let sharded = aggregate_dynamic(&batch(shuffled), &ctx, &reg, shards).unwrap();
            prop_assert_eq!(sharded, base);
        }

        #[test]
        fn windows_nest(events in arb_events()) {
            let reg = FeatureRegistry::default_config();
            let table = aggregate_dynamic(&batch(events), &scores(), &reg, 2).unwrap();
            for (user, row) in table.iter() {
                for (k, &v) in row {
                    if let FeatureKey::Dynamic(d) = k {
                        for &w in reg.windows().iter().filter(|&&w| w > d.window_days) {
                            let wider = FeatureKey::Dynamic(DynamicKey { window_days: w, ..d.clone() });
                            prop_assert!(table.get(user, &wider) >= v);
                        }
                    }
                }
            }
        }

        #[test]
        fn adding_an_event_never_decreases_a_feature(events in arb_events(), extra in arb_events()) {
            let reg = FeatureRegistry::default_config();
            let ctx = scores();
            let before = aggregate_dynamic(&batch(events.clone()), &ctx, &reg, 1).unwrap();
            let Some(first) = extra.into_iter().next() else { return Ok(()); };
            let mut more = events;
            more.push(first);
            let after = aggregate_dynamic(&batch(more), &ctx, &reg, 1).unwrap();
            for (user, row) in before.iter() {
                for (k, &v) in row {
                    prop_assert!(after.get(user, k) >= v);
                }
            }
        }
    }
}
