//! Segmentation behaviour on synthetic data with known sessions.

use kast_core::data::synthetic::{generate_synthetic, GroundTruth, SyntheticSpec};
use kast_core::data::BehaviorSequence;
use kast_core::session::{ass_pass, initial_segment, planted_recovery, AssConfig, SessionPartition, Similarity};
use proptest::prelude::*;

/// One-hot topic vector per event: the embedding of a perfectly trained model.
fn topic_vectors(spec: &SyntheticSpec, seq: &BehaviorSequence) -> Vec<Vec<f64>> {
    seq.events
        .iter()
        .map(|e| {
            let mut v = vec![0.0; spec.topics];
            v[spec.topic_of_item(e.item_id)] = 1.0;
            v
        })
        .collect()
}

fn spec(p_mis: f64) -> SyntheticSpec {
    SyntheticSpec {
        users: 300,
        p_mis,
        ..SyntheticSpec::default()
    }
}

/// Depth short of a whole session; at full depth the forward test may pull
/// an item from the far end of the next session.
fn border_cfg() -> AssConfig {
    AssConfig {
        k_depth: 2,
        ..AssConfig::default()
    }
}

fn data(p_mis: f64, seed: u64) -> (SyntheticSpec, Vec<BehaviorSequence>, GroundTruth) {
    let s = spec(p_mis);
    let (seqs, truth) = generate_synthetic(&s, seed).unwrap();
    (s, seqs, truth)
}

#[test]
fn topic_aligned_vectors_recover_planted_items() {
    let (s, seqs, truth) = data(0.2, 1);
    let cfg = border_cfg();
    let (mut planted, mut before, mut after) = (0, 0, 0);
    for (seq, t) in seqs.iter().zip(&truth.events) {
        let vecs = topic_vectors(&s, seq);
        let p0 = initial_segment(seq, cfg.gap_seconds);
        let (p1, _) = ass_pass(&p0, &vecs, &cfg).unwrap();
        let (n, r0) = planted_recovery(&p0, t);
        let (_, r1) = planted_recovery(&p1, t);
        planted += n;
        before += r0;
        after += r1;
    }
    assert!(planted > 300);
    assert_eq!(before, 0);
    let rate = after as f64 / planted as f64;
    assert!(rate >= 0.9, "recovered {after}/{planted}");
}

#[test]
fn topic_aligned_clean_partition_is_a_fixed_point() {
    let (s, seqs, _) = data(0.0, 2);
    for kind in [Similarity::Cosine, Similarity::NegEuclidean] {
        let cfg = AssConfig {
            similarity: kind,
            alpha: if kind == Similarity::Cosine { 0.5 } else { -0.5 },
            ..AssConfig::default()
        };
        for seq in &seqs {
            let vecs = topic_vectors(&s, seq);
            let p0 = initial_segment(seq, cfg.gap_seconds);
            let (p1, stats) = ass_pass(&p0, &vecs, &cfg).unwrap();
            assert_eq!(stats.moves(), 0);
            assert_eq!(p1, p0);
        }
    }
}

#[test]
fn planted_misdivisions_do_not_grow_over_passes() {
    let (s, seqs, truth) = data(0.3, 3);
    let cfg = border_cfg();
    for (seq, t) in seqs.iter().zip(&truth.events).take(100) {
        let vecs = topic_vectors(&s, seq);
        let mut p = initial_segment(seq, cfg.gap_seconds);
        let (n, r) = planted_recovery(&p, t);
        let mut wrong = n - r;
        for _ in 0..5 {
            p = ass_pass(&p, &vecs, &cfg).unwrap().0;
            let (n, r) = planted_recovery(&p, t);
            assert!(n - r <= wrong, "misdivisions grew from {wrong} to {}", n - r);
            wrong = n - r;
        }
    }
}

fn is_valid_refinement(before: &SessionPartition, after: &SessionPartition) -> bool {
    let mut a: Vec<usize> = before.sessions.concat();
    let mut b: Vec<usize> = after.sessions.concat();
    a.sort_unstable();
    b.sort_unstable();
    a == b
        && after
            .sessions
            .iter()
            .all(|s| !s.is_empty() && s.windows(2).all(|w| w[0] < w[1]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn pass_conserves_events_and_order(
        lens in prop::collection::vec(1usize..6, 1..6),
        raw in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 30),
        alpha in -1.0f64..1.0,
        k in 1usize..4,
    ) {
        let mut sessions = Vec::new();
        let mut pos = 0;
        for l in lens {
            sessions.push((pos..pos + l).collect::<Vec<_>>());
            pos += l;
        }
        let p0 = SessionPartition::new(sessions);
        let cfg = AssConfig { alpha, k_depth: k, ..AssConfig::default() };
        let (p1, _) = ass_pass(&p0, &raw, &cfg).unwrap();
        prop_assert!(is_valid_refinement(&p0, &p1));
    }
}
