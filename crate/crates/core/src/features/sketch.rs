use std::collections::BTreeMap;

/// Reaction counts per day index (0 = the most recent day).
pub type DayBuckets = BTreeMap<u16, u64>;

/// Expands day buckets into trailing-window counts: the count for window `w`
/// is the sum of buckets with day index `< w`. `windows` must be ascending;
/// one pass over the buckets fills every window.
pub fn multiday_sketch(buckets: &DayBuckets, windows: &[u32]) -> Vec<u64> {
    debug_assert!(windows.windows(2).all(|w| w[0] < w[1]));
    let mut counts = vec![0u64; windows.len()];
    let mut running = 0u64;
    let mut next = 0usize;
    for (&day, &count) in buckets {
        while next < windows.len() && u32::from(day) >= windows[next] {
            counts[next] = running;
            next += 1;
        }
        if next == windows.len() {
            break;
        }
        running += count;
    }
    for c in &mut counts[next..] {
        *c = running;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::WINDOW_SPANS;
    use proptest::prelude::*;

    fn buckets(days: &[u16]) -> DayBuckets {
        let mut b = DayBuckets::new();
        for &d in days {
            *b.entry(d).or_insert(0) += 1;
        }
        b
    }

    #[test]
    fn single_event_at_day_five() {
        assert_eq!(
            multiday_sketch(&buckets(&[5]), &WINDOW_SPANS),
            vec![0, 1, 1, 1, 1, 1, 1]
        );
    }

    #[test]
    fn events_at_zero_zero_ten() {
        assert_eq!(
            multiday_sketch(&buckets(&[0, 0, 10]), &WINDOW_SPANS),
            vec![2, 2, 3, 3, 3, 3, 3]
        );
    }

    #[test]
    fn empty_buckets() {
        assert_eq!(
            multiday_sketch(&DayBuckets::new(), &WINDOW_SPANS),
            vec![0; 7]
        );
    }

    #[test]
    fn window_edges() {
        // day 2 is inside 3d, day 3 is not
        assert_eq!(multiday_sketch(&buckets(&[2]), &[3])[0], 1);
        assert_eq!(multiday_sketch(&buckets(&[3]), &[3])[0], 0);
        assert_eq!(multiday_sketch(&buckets(&[89]), &WINDOW_SPANS)[6], 1);
    }

    proptest! {
        #[test]
        fn matches_direct_sums_and_nests(days in proptest::collection::vec(0u16..90, 0..200)) {
            let b = buckets(&days);
            let counts = multiday_sketch(&b, &WINDOW_SPANS);
            for (i, &w) in WINDOW_SPANS.iter().enumerate() {
                let direct = days.iter().filter(|&&d| u32::from(d) < w).count() as u64;
                prop_assert_eq!(counts[i], direct);
            }
            prop_assert!(counts.windows(2).all(|c| c[0] <= c[1]));
        }
    }
}
