use chrono::NaiveDate;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEvent {
    pub date: NaiveDate,
    pub state_label: String,
}

impl RawEvent {
    pub fn new(date: NaiveDate, state_label: impl Into<String>) -> Self {
        Self {
            date,
            state_label: state_label.into(),
        }
    }
}

/// Reduced labels per window, starting at the first event date. Windows
/// without events are omitted.
pub fn reduce_windows(events: &[RawEvent], window_days: u32) -> Result<Vec<(NaiveDate, Vec<String>)>> {
    if window_days == 0 {
        return Err(Error::InvalidConfig("window_days must be positive".into()));
    }
    let mut sorted: Vec<&RawEvent> = events.iter().collect();
    sorted.sort_by_key(|e| e.date);
    let Some(first) = sorted.first().map(|e| e.date) else {
        return Err(Error::EmptyLog);
    };

    let mut out: Vec<(i64, NaiveDate, Vec<String>)> = Vec::new();
    for e in sorted {
        let w = (e.date - first).num_days() / window_days as i64;
        match out.last_mut() {
            Some((cur, _, labels)) if *cur == w => {
                if labels.last() != Some(&e.state_label) {
                    labels.push(e.state_label.clone());
                }
            }
            _ => {
                let start = first + chrono::Days::new(w as u64 * window_days as u64);
                out.push((w, start, vec![e.state_label.clone()]));
            }
        }
    }
    Ok(out.into_iter().map(|(_, d, l)| (d, l)).collect())
}

/// Buckets events into consecutive windows of `window_days` and drops
/// consecutive repeats within each window.
pub fn reduce_sequence(events: &[RawEvent], window_days: u32) -> Result<Vec<String>> {
    Ok(reduce_windows(events, window_days)?
        .into_iter()
        .flat_map(|(_, l)| l)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(d as u64)
    }

    fn events(spec: &[(u32, &str)]) -> Vec<RawEvent> {
        spec.iter().map(|&(d, s)| RawEvent::new(day(d), s)).collect()
    }

    #[test]
    fn collapses_within_a_window() {
        let e = events(&[(0, "A"), (3, "A"), (10, "A")]);
        assert_eq!(reduce_sequence(&e, 91).unwrap(), vec!["A"]);
        let e = events(&[(0, "A"), (1, "A"), (2, "B"), (3, "B"), (4, "A"), (5, "C"), (6, "C")]);
        assert_eq!(reduce_sequence(&e, 91).unwrap(), vec!["A", "B", "A", "C"]);
    }

    #[test]
    fn keeps_repeats_across_windows() {
        let e = events(&[(0, "A"), (91, "A")]);
        assert_eq!(reduce_sequence(&e, 91).unwrap(), vec!["A", "A"]);
        let e = events(&[(0, "A"), (90, "A")]);
        assert_eq!(reduce_sequence(&e, 91).unwrap(), vec!["A"]);
    }

    #[test]
    fn sorts_by_date_and_rejects_empty() {
        let e = events(&[(200, "B"), (0, "A")]);
        assert_eq!(reduce_sequence(&e, 91).unwrap(), vec!["A", "B"]);
        assert!(matches!(reduce_sequence(&[], 91), Err(Error::EmptyLog)));
    }

    proptest! {
        #[test]
        fn idempotent_on_reexpressed_output(
            raw in prop::collection::vec((0u32..600, 0usize..3), 1..40),
            window in 1u32..120,
        ) {
            let labels = ["A", "B", "C"];
            let e: Vec<RawEvent> = raw.iter().map(|&(d, s)| RawEvent::new(day(d), labels[s])).collect();
            let windows = reduce_windows(&e, window).unwrap();
            let again: Vec<RawEvent> = windows
                .iter()
                .flat_map(|(d, l)| l.iter().map(move |s| RawEvent::new(*d, s.clone())))
                .collect();
            prop_assert_eq!(reduce_windows(&again, window).unwrap(), windows);
        }
    }
}
