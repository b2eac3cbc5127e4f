//! Hypersparse 2^32 x 2^32 traffic matrices.
//!
//! A [`HypersparseMatrix`] stores only its nonzero `(row, col, count)` triples in
//! row-major order, so memory is proportional to the number of stored entries and
//! never to the logical dimension. Construction follows build-with-duplicates
//! semantics: repeated coordinates accumulate by addition.

use std::io::{BufRead, Write};

use rustc_hash::FxHashMap;
use thiserror::Error;

/// Logical row and column dimension (the full IPv4 address space).
pub const DIMENSION: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("count overflow: sum exceeds 64 bits")]
    Overflow,
    #[error("line {line}: malformed triple {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: value {text:?} out of range")]
    OutOfRange { line: usize, text: String },
    #[error("line {line}: coordinate ({row}, {col}) is not after the previous entry")]
    Unsorted { line: usize, row: u32, col: u32 },
    #[error("line {line}: duplicate coordinate ({row}, {col})")]
    Duplicate { line: usize, row: u32, col: u32 },
    #[error("line {line}: zero count at ({row}, {col})")]
    ZeroCount { line: usize, row: u32, col: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One stored nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Entry {
    pub row: u32,
    pub col: u32,
    pub count: u64,
}

impl Entry {
    #[inline]
    fn key(&self) -> u64 {
        pack(self.row, self.col)
    }
}

#[inline]
fn pack(row: u32, col: u32) -> u64 {
    (u64::from(row) << 32) | u64::from(col)
}

#[inline]
fn unpack(key: u64) -> (u32, u32) {
    ((key >> 32) as u32, key as u32)
}

/// A 2^32 x 2^32 matrix of packet counts holding only nonzero entries.
///
/// Entries are strictly increasing in `(row, col)` and never zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HypersparseMatrix {
    entries: Vec<Entry>,
}

impl HypersparseMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nrows(&self) -> u64 {
        DIMENSION
    }

    pub fn ncols(&self) -> u64 {
        DIMENSION
    }

    /// Builds a matrix where entry `(i, j)` counts the occurrences of `(i, j)` in `pairs`.
    ///
    /// Accumulates into a hash table keyed by the packed coordinate, then emits the
    /// sorted triple form.
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let iter = pairs.into_iter();
        let mut table: FxHashMap<u64, u64> =
            FxHashMap::with_capacity_and_hasher(iter.size_hint().0, Default::default());
        for (row, col) in iter {
            *table.entry(pack(row, col)).or_insert(0) += 1;
        }
        let mut keyed: Vec<(u64, u64)> = table.into_iter().collect();
        keyed.sort_unstable_by_key(|&(k, _)| k);
        let entries = keyed
            .into_iter()
            .map(|(k, count)| {
                let (row, col) = unpack(k);
                Entry { row, col, count }
            })
            .collect();
        Self { entries }
    }

    /// Wraps entries that are already canonical (sorted, unique, nonzero).
    ///
    /// Returns `None` if any invariant is violated.
    pub fn from_sorted_entries(entries: Vec<Entry>) -> Option<Self> {
        let ok = entries.iter().all(|e| e.count != 0)
            && entries.windows(2).all(|w| w[0].key() < w[1].key());
        ok.then_some(Self { entries })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &Entry> + '_ {
        self.entries.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> u64 {
        self.entries.len() as u64
    }

    /// Count at `(row, col)`, zero when not stored.
    pub fn get(&self, row: u32, col: u32) -> u64 {
        let key = pack(row, col);
        self.entries
            .binary_search_by_key(&key, Entry::key)
            .map(|i| self.entries[i].count)
            .unwrap_or(0)
    }

    /// Sum of all counts.
    pub fn total(&self) -> Result<u64, MatrixError> {
        self.entries
            .iter()
            .try_fold(0u64, |acc, e| acc.checked_add(e.count))
            .ok_or(MatrixError::Overflow)
    }

    /// Element-wise sum over the union of coordinates.
    pub fn add(&self, other: &HypersparseMatrix) -> Result<HypersparseMatrix, MatrixError> {
        let (a, b) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            let (ka, kb) = (a[i].key(), b[j].key());
            if ka < kb {
                out.push(a[i]);
                i += 1;
            } else if kb < ka {
                out.push(b[j]);
                j += 1;
            } else {
                let count = a[i].count.checked_add(b[j].count).ok_or(MatrixError::Overflow)?;
                out.push(Entry { count, ..a[i] });
                i += 1;
                j += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Ok(HypersparseMatrix { entries: out })
    }

    /// Per-source packet counts.
    pub fn row_sums(&self) -> SparseVector {
        let mut out: Vec<(u32, u64)> = Vec::new();
        for e in &self.entries {
            match out.last_mut() {
                Some((row, sum)) if *row == e.row => *sum += e.count,
                _ => out.push((e.row, e.count)),
            }
        }
        SparseVector { entries: out }
    }

    /// Per-destination packet counts.
    pub fn col_sums(&self) -> SparseVector {
        let mut sums: FxHashMap<u32, u64> = FxHashMap::default();
        for e in &self.entries {
            *sums.entry(e.col).or_insert(0) += e.count;
        }
        let mut out: Vec<(u32, u64)> = sums.into_iter().collect();
        out.sort_unstable_by_key(|&(i, _)| i);
        SparseVector { entries: out }
    }

    /// Writes `row\tcol\tcount\n` lines in canonical order.
    pub fn write_tsv<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(sink, "{}\t{}\t{}", e.row, e.col, e.count)?;
        }
        sink.flush()
    }

    /// Parses the output of [`write_tsv`](Self::write_tsv), rejecting anything non-canonical.
    pub fn read_tsv<R: BufRead>(source: R) -> Result<HypersparseMatrix, MatrixError> {
        let mut entries: Vec<Entry> = Vec::new();
        for (idx, line) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields.iter().any(|f| !is_decimal(f)) {
                return Err(MatrixError::Malformed { line: line_no, text: line });
            }
            let out_of_range = |f: &str| MatrixError::OutOfRange { line: line_no, text: f.to_string() };
            let row: u32 = fields[0].parse().map_err(|_| out_of_range(fields[0]))?;
            let col: u32 = fields[1].parse().map_err(|_| out_of_range(fields[1]))?;
            let count: u64 = fields[2].parse().map_err(|_| out_of_range(fields[2]))?;
            if count == 0 {
                return Err(MatrixError::ZeroCount { line: line_no, row, col });
            }
            let entry = Entry { row, col, count };
            if let Some(prev) = entries.last() {
                if prev.key() == entry.key() {
                    return Err(MatrixError::Duplicate { line: line_no, row, col });
                }
                if prev.key() > entry.key() {
                    return Err(MatrixError::Unsorted { line: line_no, row, col });
                }
            }
            entries.push(entry);
        }
        Ok(HypersparseMatrix { entries })
    }
}

fn is_decimal(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Sparse vector of `(index, value)` pairs, strictly increasing in index, no zeros.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SparseVector {
    entries: Vec<(u32, u64)>,
}

impl SparseVector {
    pub fn entries(&self) -> &[(u32, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> u64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|p| self.entries[p].1)
            .unwrap_or(0)
    }

    pub fn sum(&self) -> Result<u64, MatrixError> {
        self.entries
            .iter()
            .try_fold(0u64, |acc, &(_, v)| acc.checked_add(v))
            .ok_or(MatrixError::Overflow)
    }

    /// The `k` largest entries by value, ties broken by ascending index.
    pub fn top_k(&self, k: usize) -> Vec<(u32, u64)> {
        let mut sorted = self.entries.clone();
        sorted.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        sorted.truncate(k);
        sorted
    }
}
