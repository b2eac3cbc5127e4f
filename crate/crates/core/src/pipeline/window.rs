use crate::ingest::PacketRecord;
use crate::matrix::HypersparseMatrix;

/// Packets per window used throughout the experiments.
pub const DEFAULT_WINDOW_SIZE: usize = 1 << 17;

/// A bounded batch of consecutive packets; the unit of matrix construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficWindow {
    records: Vec<PacketRecord>,
    capacity: usize,
}

impl TrafficWindow {
    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be at least 1");
        Self { records: Vec::with_capacity(capacity), capacity }
    }

    /// Panics if `records` exceeds `capacity`.
    pub fn from_records(records: Vec<PacketRecord>, capacity: usize) -> Self {
        assert!(
            records.len() <= capacity,
            "window holds {} records but capacity is {capacity}",
            records.len()
        );
        Self { records, capacity }
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [PacketRecord] {
        &mut self.records
    }

    pub fn into_records(self) -> Vec<PacketRecord> {
        self.records
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.records.len() == self.capacity
    }

    /// Returns false (and stores nothing) when the window is already full.
    pub fn push(&mut self, record: PacketRecord) -> bool {
        if self.is_full() {
            return false;
        }
        self.records.push(record);
        true
    }

    pub fn to_matrix(&self) -> HypersparseMatrix {
        HypersparseMatrix::from_pairs(self.records.iter().map(|r| r.pair()))
    }
}

/// Splits a record stream into consecutive non-overlapping windows.
pub struct WindowBatcher<I> {
    source: I,
    window_size: usize,
}

impl<I: Iterator<Item = PacketRecord>> Iterator for WindowBatcher<I> {
    type Item = TrafficWindow;

    fn next(&mut self) -> Option<TrafficWindow> {
        let records: Vec<PacketRecord> = self.source.by_ref().take(self.window_size).collect();
        if records.is_empty() {
            None
        } else {
            Some(TrafficWindow::from_records(records, self.window_size))
        }
    }
}

/// Every window but possibly the last holds exactly `window_size` records.
pub fn window_batcher<I>(source: I, window_size: usize) -> WindowBatcher<I::IntoIter>
where
    I: IntoIterator<Item = PacketRecord>,
{
    assert!(window_size >= 1, "window size must be at least 1");
    WindowBatcher { source: source.into_iter(), window_size }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synth_uniform;

    #[test]
    fn lengths() {
        let recs = synth_uniform(1, 5);
        let lens: Vec<usize> = window_batcher(recs, 2).map(|w| w.len()).collect();
        assert_eq!(lens, vec![2, 2, 1]);
        assert_eq!(window_batcher(Vec::new(), 4).count(), 0);
    }

    #[test]
    fn full_paper_sized_windows() {
        let recs = synth_uniform(2, 3 << 17);
        let windows: Vec<TrafficWindow> = window_batcher(recs, DEFAULT_WINDOW_SIZE).collect();
        assert_eq!(windows.len(), 3);
        assert!(windows.iter().all(|w| w.is_full()));
    }

    #[test]
    fn push_respects_capacity() {
        let mut w = TrafficWindow::with_capacity(2);
        assert!(w.push(PacketRecord::new(1, 1)));
        assert!(w.push(PacketRecord::new(1, 2)));
        assert!(!w.push(PacketRecord::new(1, 3)));
        assert_eq!(w.len(), 2);
        assert_eq!(w.to_matrix().nnz(), 2);
    }

    #[test]
    #[should_panic]
    fn overfull_window_rejected() {
        TrafficWindow::from_records(synth_uniform(1, 3), 2);
    }
}
