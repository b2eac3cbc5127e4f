mod common;

use hypertraffic::matrix::Entry;
use hypertraffic::HypersparseMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{count_oracle, matrix_as_map};

fn narrow_pairs(max_len: usize) -> impl Strategy<Value = Vec<(u32, u32)>> {
    prop::collection::vec((0u32..32, 0u32..32), 0..max_len)
}

fn wide_pairs(max_len: usize) -> impl Strategy<Value = Vec<(u32, u32)>> {
    prop::collection::vec((any::<u32>(), any::<u32>()), 0..max_len)
}

fn small_matrix() -> impl Strategy<Value = HypersparseMatrix> {
    narrow_pairs(200).prop_map(HypersparseMatrix::from_pairs)
}

fn check_canonical(m: &HypersparseMatrix) {
    assert!(m.entries().iter().all(|e| e.count > 0));
    assert!(m.entries().windows(2).all(|w| (w[0].row, w[0].col) < (w[1].row, w[1].col)));
}

#[test]
fn ten_thousand_uniform_pairs_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pairs: Vec<(u32, u32)> = (0..10_000).map(|_| (rng.gen(), rng.gen())).collect();
    let m = HypersparseMatrix::from_pairs(pairs.iter().copied());
    check_canonical(&m);
    assert_eq!(matrix_as_map(&m), count_oracle(&pairs));
}

proptest! {
    #[test]
    fn matches_counting_oracle(pairs in prop_oneof![narrow_pairs(2000), wide_pairs(2000)]) {
        let m = HypersparseMatrix::from_pairs(pairs.iter().copied());
        check_canonical(&m);
        let oracle = count_oracle(&pairs);
        prop_assert_eq!(m.nnz(), oracle.len() as u64);
        prop_assert_eq!(matrix_as_map(&m), oracle);
    }

    #[test]
    fn conservation(pairs in narrow_pairs(3000)) {
        let m = HypersparseMatrix::from_pairs(pairs.iter().copied());
        let total = m.total().unwrap();
        prop_assert_eq!(total, pairs.len() as u64);
        prop_assert_eq!(m.row_sums().sum().unwrap(), total);
        prop_assert_eq!(m.col_sums().sum().unwrap(), total);
    }

    #[test]
    fn order_insensitive(pairs in narrow_pairs(500), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(
            HypersparseMatrix::from_pairs(pairs),
            HypersparseMatrix::from_pairs(shuffled)
        );
    }

    #[test]
    fn add_is_commutative(a in small_matrix(), b in small_matrix()) {
        prop_assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
    }

    #[test]
    fn add_is_associative(a in small_matrix(), b in small_matrix(), c in small_matrix()) {
        prop_assert_eq!(
            a.add(&b).unwrap().add(&c).unwrap(),
            a.add(&b.add(&c).unwrap()).unwrap()
        );
    }

    #[test]
    fn empty_is_identity(a in small_matrix()) {
        let empty = HypersparseMatrix::new();
        prop_assert_eq!(a.add(&empty).unwrap(), a.clone());
        prop_assert_eq!(empty.add(&a).unwrap(), a);
    }

    #[test]
    fn add_matches_concatenated_build(p in narrow_pairs(300), q in narrow_pairs(300)) {
        let joined: Vec<(u32, u32)> = p.iter().chain(&q).copied().collect();
        let sum = HypersparseMatrix::from_pairs(p).add(&HypersparseMatrix::from_pairs(q)).unwrap();
        check_canonical(&sum);
        prop_assert_eq!(sum, HypersparseMatrix::from_pairs(joined));
    }

    #[test]
    fn tsv_round_trip(pairs in wide_pairs(3000)) {
        let m = HypersparseMatrix::from_pairs(pairs);
        let mut buf = Vec::new();
        m.write_tsv(&mut buf).unwrap();
        prop_assert_eq!(HypersparseMatrix::read_tsv(buf.as_slice()).unwrap(), m);
    }
}

#[test]
fn tsv_round_trip_large() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = HypersparseMatrix::from_pairs((0..100_000).map(|_| (rng.gen(), rng.gen())));
    assert!(m.nnz() > 99_000);
    let mut buf = Vec::new();
    m.write_tsv(&mut buf).unwrap();
    assert_eq!(HypersparseMatrix::read_tsv(buf.as_slice()).unwrap(), m);
}

#[test]
fn fold_overflow_is_detected() {
    let big = HypersparseMatrix::from_sorted_entries(vec![Entry { row: 1, col: 1, count: u64::MAX }]).unwrap();
    let one = HypersparseMatrix::from_pairs([(1, 1)]);
    assert!(big.add(&one).is_err());
    let two = HypersparseMatrix::from_sorted_entries(vec![
        Entry { row: 0, col: 0, count: u64::MAX },
        Entry { row: 0, col: 1, count: 1 },
    ])
    .unwrap();
    assert!(two.total().is_err());
}
