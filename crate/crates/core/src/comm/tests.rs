use super::*;
use crate::dense::{gram, gram_accumulate, householder_qr, DenseMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config() -> SpmdConfig {
    SpmdConfig::default().with_deadlock_budget(Duration::from_millis(2000))
}

fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn serial_allreduce_is_identity_and_counts() {
    let c = Communicator::serial();
    let m = random(3, 2, 1);
    let out = c.allreduce_sum(&m, "gram/x").unwrap();
    assert!(out.bitwise_eq(&m));
    assert_eq!(c.stats().sync_count, 1);
    assert_eq!(c.stats().words_reduced, 6);
}

#[test]
fn run_spmd_single_rank_returns_rank() {
    let run = run_spmd(1, &config(), |c| c.rank()).unwrap();
    assert_eq!(run.results, vec![0]);
}

#[test]
fn four_ranks_sum_ones_and_ranks() {
    let run = run_spmd(4, &config(), |c| {
        let ones = c.allreduce_sum(&DenseMatrix::from_rows(&[&[1.0]]), "a").unwrap();
        let ranks = c
            .allreduce_sum(&DenseMatrix::from_rows(&[&[c.rank() as f64]]), "b")
            .unwrap();
        (ones[(0, 0)], ranks[(0, 0)])
    })
    .unwrap();
    assert!(run.results.iter().all(|&r| r == (4.0, 6.0)));
    assert_eq!(run.stats.sync_count, 2);
}

#[test]
fn three_rank_gram_shards_sum_to_serial_gram() {
    let a = random(17, 3, 2);
    let b = random(17, 2, 3);
    let dense = gram(&a, &b).unwrap();
    let bounds = [0, 6, 12, 17];
    let run = run_spmd(3, &config(), |c| {
        let r = c.rank();
        let (lo, hi) = (bounds[r], bounds[r + 1]);
        let (sa, sb) = (a.row_range(lo..hi), b.row_range(lo..hi));
        let summed = c.allreduce_sum(&gram(&sa, &sb).unwrap(), "gram/sum").unwrap();
        let chained = c
            .allreduce_accumulate((3, 2), "gram/chain", |acc| gram_accumulate(acc, &sa, &sb))
            .unwrap();
        (summed, chained)
    })
    .unwrap();
    for (summed, chained) in &run.results {
        assert!(summed.bitwise_eq(&run.results[0].0));
        assert!(summed.sub(&dense).unwrap().max_abs() < 1e-14);
        assert!(chained.bitwise_eq(&dense));
    }
}

fn stacked_r(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let (_, r) = householder_qr(&DenseMatrix::vstack(&[a, b])?)?;
    Ok(r.into_dense())
}

#[test]
fn tree_of_two_matches_stacked_factor() {
    let r0 = householder_qr(&random(6, 3, 4)).unwrap().1.into_dense();
    let r1 = householder_qr(&random(6, 3, 5)).unwrap().1.into_dense();
    let oracle = stacked_r(&r0, &r1).unwrap();
    let locals = [r0, r1];
    let run = run_spmd(2, &config(), |c| {
        c.reduce_factor_tree(&locals[c.rank()], "tsqr/r", stacked_r).unwrap()
    })
    .unwrap();
    assert!(run.results.iter().all(|r| r.bitwise_eq(&oracle)));
}

#[test]
fn tree_of_eight_is_one_sync_three_rounds() {
    let run = run_spmd(8, &config(), |c| {
        let local = DenseMatrix::from_rows(&[&[c.rank() as f64 + 1.0]]);
        c.reduce_factor_tree(&local, "tsqr/r", |x, y| x.add(y)).unwrap()
    })
    .unwrap();
    assert!(run.results.iter().all(|r| r[(0, 0)] == 36.0));
    assert_eq!(run.stats.sync_count, 1);
    assert_eq!(run.stats.tree_rounds, 3);
}

#[test]
fn serial_tree_is_unchanged() {
    let c = Communicator::serial();
    let m = random(2, 2, 9);
    let out = c.reduce_factor_tree(&m, "tsqr/r", |_, _| unreachable!()).unwrap();
    assert!(out.bitwise_eq(&m));
    assert_eq!(c.stats().sync_count, 1);
    assert_eq!(c.stats().tree_rounds, 0);
}

#[test]
fn tree_schedule_covers_every_rank_once() {
    for size in 1..=13 {
        assert_eq!(tree_steps(0, size).len() as u32, tree_rounds(size), "root of {size}");
        let mut received = vec![0; size];
        for rank in 0..size {
            let steps = tree_steps(rank, size);
            let sends = steps.iter().filter(|s| matches!(s, TreeStep::Send { .. })).count();
            assert_eq!(sends, usize::from(rank != 0));
            for s in steps {
                if let TreeStep::Receive { from, .. } = s {
                    received[from] += 1;
                }
            }
        }
        assert_eq!(received.iter().sum::<usize>(), size - 1);
        assert_eq!(received[0], 0);
    }
}

#[test]
fn gather_stacks_in_rank_order() {
    let x = random(10, 2, 6);
    let bounds = [0, 3, 6, 9, 10];
    let run = run_spmd(4, &config(), |c| {
        let r = c.rank();
        c.gather_rows(&x.row_range(bounds[r]..bounds[r + 1]), "gather").unwrap()
    })
    .unwrap();
    assert!(run.results.iter().all(|g| g.bitwise_eq(&x)));
    assert_eq!(run.stats.excluding("gather").sync_count, 0);
}

#[test]
fn shape_mismatch_aborts_everyone() {
    let run = run_spmd(3, &config(), |c| {
        let local = DenseMatrix::zeros(1, if c.rank() == 2 { 3 } else { 2 });
        c.allreduce_sum(&local, "gram/bad")
    })
    .unwrap();
    for r in &run.results {
        let msg = r.as_ref().unwrap_err().to_string();
        assert!(msg.contains("rank 2"), "{msg}");
    }
    assert!(matches!(run.results[0], Err(CommError::ShapeMismatch { rank: 2, .. })));
}

#[test]
fn missing_collective_trips_deadlock_detector() {
    let cfg = SpmdConfig::default().with_deadlock_budget(Duration::from_millis(150));
    let run = run_spmd(2, &cfg, |c| {
        if c.rank() == 0 {
            c.allreduce_sum(&DenseMatrix::zeros(1, 1), "gram/only-root").map(|_| ())
        } else {
            Ok(())
        }
    })
    .unwrap();
    assert!(matches!(
        run.results[0],
        Err(CommError::Deadlock { rank: 0, peer: 1, .. })
    ));
}

#[test]
fn mismatched_labels_are_reported() {
    let run = run_spmd(2, &config(), |c| {
        let label = if c.rank() == 0 { "gram/a" } else { "gram/b" };
        c.allreduce_sum(&DenseMatrix::zeros(1, 1), label)
    })
    .unwrap();
    assert!(run.results.iter().all(|r| r.is_err()));
    assert!(matches!(run.results[0], Err(CommError::CollectiveMismatch { .. })));
}

#[test]
fn panicking_rank_is_reported() {
    let err = run_spmd(4, &config(), |c| {
        if c.rank() == 2 {
            panic!("boom on two");
        }
        c.allreduce_sum(&DenseMatrix::zeros(1, 1), "gram/x").is_ok()
    })
    .unwrap_err();
    assert_eq!(
        err,
        SpmdError::Panicked {
            rank: 2,
            message: "boom on two".into()
        }
    );
}

#[test]
fn zero_processes_rejected() {
    assert_eq!(run_spmd(0, &config(), |_| ()).unwrap_err(), SpmdError::NoProcesses);
}

#[test]
fn budget_parsing() {
    assert_eq!(deadlock_budget_from(None), DEFAULT_DEADLOCK_BUDGET);
    assert_eq!(deadlock_budget_from(Some("250")), Duration::from_millis(250));
    assert_eq!(deadlock_budget_from(Some("soon")), DEFAULT_DEADLOCK_BUDGET);
    assert_eq!("tree".parse::<Reduction>().unwrap(), Reduction::Tree);
}

#[test]
fn pack_round_trip() {
    let a = random(2, 3, 1);
    let b = random(4, 1, 2);
    let parts = unpack(&pack(&[&a, &b]), &[(2, 3), (4, 1)]).unwrap();
    assert!(parts[0].bitwise_eq(&a) && parts[1].bitwise_eq(&b));
    assert!(unpack(&pack(&[&a]), &[(3, 3)]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Ranks interleave matched collectives with random amounts of local
    /// work and random sleeps; nothing may deadlock and every rank sees the
    /// same results.
    #[test]
    fn randomized_interleavings_never_deadlock(procs in 2usize..6, ops in proptest::collection::vec(0u8..3, 1..8), seed in any::<u64>()) {
        let run = run_spmd(procs, &config(), |c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ c.rank() as u64);
            let mut out = Vec::new();
            for (i, op) in ops.iter().enumerate() {
                if rng.random_bool(0.5) {
                    std::thread::sleep(Duration::from_micros(rng.random_range(0..300)));
                }
                let local = DenseMatrix::from_rows(&[&[c.rank() as f64 + i as f64]]);
                let r = match op {
                    0 => c.allreduce_sum(&local, "gram/p"),
                    1 => c.allreduce_accumulate((1, 1), "gram/c", |acc| {
                        acc[(0, 0)] += local[(0, 0)];
                        Ok(())
                    }),
                    _ => c.reduce_factor_tree(&local, "tsqr/p", |x, y| x.add(y)),
                };
                out.push(r.unwrap()[(0, 0)]);
            }
            out
        }).unwrap();
        for r in &run.results {
            prop_assert_eq!(r, &run.results[0]);
        }
        prop_assert_eq!(run.stats.sync_count, ops.len() as u64);
    }
}
