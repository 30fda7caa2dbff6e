//! Query-answer histories and their network encoding.

use thiserror::Error;

use crate::corpus::Answer;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("query {0} already appears in the history")]
    Duplicate(usize),
    #[error("query {query} is out of range for {n_queries} queries")]
    OutOfRange { query: usize, n_queries: usize },
}

/// Ordered (query, answer) pairs with no repeated query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    entries: Vec<(usize, Answer)>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (usize, Answer)>) -> Result<Self, HistoryError> {
        let mut h = Self::new();
        for (q, a) in entries {
            h.push(q, a)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, query: usize, answer: Answer) -> Result<(), HistoryError> {
        if self.contains(query) {
            return Err(HistoryError::Duplicate(query));
        }
        self.entries.push((query, answer));
        Ok(())
    }

    pub fn contains(&self, query: usize) -> bool {
        self.entries.iter().any(|&(q, _)| q == query)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, Answer)] {
        &self.entries
    }

    pub fn queries(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(q, _)| q)
    }

    pub fn truncate(&mut self, len: usize) {
        self.entries.truncate(len);
    }

    /// Per-query asked flags.
    pub fn asked_mask(&self, n_queries: usize) -> Vec<bool> {
        let mut mask = vec![false; n_queries];
        for &(q, _) in &self.entries {
            mask[q] = true;
        }
        mask
    }
}

/// `mask[i] = 1` where query `i` was asked; `answers[i]` holds its answer
/// there and 0 elsewhere. The mask keeps an asked "unknown" (answer 0)
/// distinct from an unasked query.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEncoding {
    pub mask: Vec<f32>,
    pub answers: Vec<f32>,
}

impl HistoryEncoding {
    pub fn n_queries(&self) -> usize {
        self.mask.len()
    }

    /// Network input: `mask ++ answers`.
    pub fn to_input(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(2 * self.mask.len());
        v.extend_from_slice(&self.mask);
        v.extend_from_slice(&self.answers);
        v
    }
}

pub fn encode_history(history: &History, n_queries: usize) -> Result<HistoryEncoding, HistoryError> {
    let mut mask = vec![0.0; n_queries];
    let mut answers = vec![0.0; n_queries];
    for &(q, a) in history.entries() {
        if q >= n_queries {
            return Err(HistoryError::OutOfRange { query: q, n_queries });
        }
        if mask[q] != 0.0 {
            return Err(HistoryError::Duplicate(q));
        }
        mask[q] = 1.0;
        answers[q] = a.value() as f32;
    }
    Ok(HistoryEncoding { mask, answers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history_encodes_to_zeros() {
        let e = encode_history(&History::new(), 4).unwrap();
        assert_eq!(e.to_input(), vec![0.0; 8]);
    }

    #[test]
    fn asked_unknown_differs_from_unasked() {
        let h = History::from_entries([(2, Answer::Unknown)]).unwrap();
        let e = encode_history(&h, 4).unwrap();
        assert_eq!(e.mask, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(e.answers, vec![0.0; 4]);
        assert_ne!(e, encode_history(&History::new(), 4).unwrap());
    }

    #[test]
    fn encoding_is_order_insensitive() {
        let a = History::from_entries([(1, Answer::Positive), (4, Answer::Negative)]).unwrap();
        let b = History::from_entries([(4, Answer::Negative), (1, Answer::Positive)]).unwrap();
        assert_eq!(encode_history(&a, 5).unwrap(), encode_history(&b, 5).unwrap());
    }

    #[test]
    fn duplicates_and_range_are_rejected() {
        let mut h = History::new();
        h.push(1, Answer::Positive).unwrap();
        assert_eq!(h.push(1, Answer::Negative), Err(HistoryError::Duplicate(1)));
        assert!(matches!(
            encode_history(&h, 1),
            Err(HistoryError::OutOfRange { query: 1, .. })
        ));
    }
}
