mod common;

use common::{masked_attention, max_rel_diff, pattern_mask, random, rng};
use proptest::prelude::*;
use rand::Rng;
use sparse_ce::attention::{
    apply_pattern, cross_attention_cached, full_attention, segment_softmax, windowed_cross_attention, AttentionOptions,
    AttentionPattern, Group, Padding, PatternKind, Segment, SegmentScores, SubsequencePartition, Target, TargetSpec,
    Window,
};
use sparse_ce::band::BandMatrix;
use sparse_ce::{DenseMatrix, KernelPath};

fn pattern(kind: PatternKind, window: Window, stride: usize) -> AttentionPattern {
    match kind {
        PatternKind::Qds => AttentionPattern::qds(window, stride),
        other => AttentionPattern::preset(other, window),
    }
}

fn joined(parts: (DenseMatrix<f64>, DenseMatrix<f64>, DenseMatrix<f64>)) -> DenseMatrix<f64> {
    let (c, q, d) = parts;
    let mut data = c.as_slice().to_vec();
    data.extend_from_slice(q.as_slice());
    data.extend_from_slice(d.as_slice());
    DenseMatrix::from_vec(c.rows() + q.rows() + d.rows(), c.cols(), data).unwrap()
}

fn opts(dim: usize, path: KernelPath) -> AttentionOptions<f64> {
    AttentionOptions { path, ..AttentionOptions::for_dim(dim) }
}

#[test]
fn segment_softmax_matches_concatenated_dense_softmax() {
    let mut r = rng(3);
    let dense = random(4, 3, &mut r);
    let band = BandMatrix::from_fn(4, 6, 2, |_, _| r.random_range(-3.0..3.0)).unwrap();
    let scores =
        SegmentScores::new(vec![Segment::Dense { scores: dense.clone(), mask: None }, Segment::Band(band.clone())])
            .unwrap();
    let probs = segment_softmax(scores, 1.7, Padding::Exclude).unwrap();
    for i in 0..4 {
        let mut logits: Vec<f64> = dense.row(i).iter().map(|x| x / 1.7).collect();
        for j in 0..band.width() {
            logits.push(if band.is_valid(i, j) { band.get(i, j) / 1.7 } else { f64::NEG_INFINITY });
        }
        let z: f64 = logits.iter().map(|x| x.exp()).sum();
        let got: Vec<f64> = probs
            .segments()
            .iter()
            .flat_map(|s| match s {
                Segment::Dense { scores, .. } => scores.row(i).to_vec(),
                Segment::Band(b) => b.row(i).to_vec(),
            })
            .collect();
        for (g, l) in got.iter().zip(&logits) {
            assert!((g - l.exp() / z).abs() < 1e-14);
        }
        assert!((probs.row_sum(i) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn three_segment_attention_matches_masked_dense() {
    let mut r = rng(11);
    let h = 4;
    let q = random(6, h, &mut r);
    let (kc, vc) = (random(1, h, &mut r), random(1, h, &mut r));
    let (kq, vq) = (random(3, h, &mut r), random(3, h, &mut r));
    let (kd, vd) = (random(6, h, &mut r), random(6, h, &mut r));
    let targets = [
        Target::new(kc.view(), vc.view(), Window::Full),
        Target::new(kq.view(), vq.view(), Window::Full),
        Target::new(kd.view(), vd.view(), Window::Local(1)),
    ];
    let stack =
        |a: &DenseMatrix<f64>, b: &DenseMatrix<f64>, c: &DenseMatrix<f64>| joined((a.clone(), b.clone(), c.clone()));
    let k = stack(&kc, &kq, &kd);
    let v = stack(&vc, &vq, &vd);
    let mask: Vec<Vec<bool>> =
        (0..6usize).map(|i| (0..10usize).map(|t| t < 4 || (t - 4).abs_diff(i) <= 1).collect()).collect();
    let expected = masked_attention(&q, &k, &v, &mask, (h as f64).sqrt());
    for path in [KernelPath::Naive, KernelPath::Tiled] {
        let out = windowed_cross_attention(q.view(), &targets, &opts(h, path)).unwrap();
        assert!(max_rel_diff(&out, &expected) < 1e-12);
    }
}

#[test]
fn single_infinite_segment_is_full_attention() {
    let mut r = rng(5);
    let (q, k, v) = (random(6, 4, &mut r), random(6, 4, &mut r), random(6, 4, &mut r));
    let a = windowed_cross_attention(
        q.view(),
        &[Target::new(k.view(), v.view(), Window::Full)],
        &AttentionOptions::for_dim(4),
    )
    .unwrap();
    assert_eq!(a, full_attention(q.view(), k.view(), v.view()).unwrap());
    let all: Vec<Vec<bool>> = vec![vec![true; 6]; 6];
    assert!(max_rel_diff(&a, &masked_attention(&q, &k, &v, &all, 2.0)) < 1e-13);
}

#[test]
fn probabilities_are_row_stochastic() {
    let mut r = rng(8);
    let q = random(9, 3, &mut r);
    let (k1, v1) = (random(2, 3, &mut r), random(2, 3, &mut r));
    let (k2, v2) = (random(9, 3, &mut r), random(9, 3, &mut r));
    let targets =
        [Target::new(k1.view(), v1.view(), Window::Full), Target::new(k2.view(), v2.view(), Window::Local(0))];
    let (_, probs) = cross_attention_cached(q.view(), &targets, &AttentionOptions::for_dim(3)).unwrap();
    for i in 0..9 {
        assert!((probs.row_sum(i) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn document_rows_follow_the_three_target_tuple() {
    let (m, n, h) = (3, 7, 4);
    let part = SubsequencePartition::for_lengths(m, n);
    let mut r = rng(21);
    let s = part.seq_len();
    let (q, k, v) = (random(s, h, &mut r), random(s, h, &mut r), random(s, h, &mut r));
    let o = opts(h, KernelPath::Tiled);
    let (_, _, od) =
        apply_pattern(&part, q.view(), k.view(), v.view(), &AttentionPattern::sparse(Window::Local(2)), &o).unwrap();
    fn rows<'a>(part: &SubsequencePartition, g: Group, x: &'a DenseMatrix<f64>) -> sparse_ce::MatRef<'a, f64> {
        x.view().row_range(part.range(g))
    }
    let targets: Vec<_> = Group::ALL
        .into_iter()
        .map(|g| {
            Target::new(
                rows(&part, g, &k),
                rows(&part, g, &v),
                if g == Group::Document { Window::Local(2) } else { Window::Full },
            )
        })
        .collect();
    let direct = windowed_cross_attention(rows(&part, Group::Document, &q), &targets, &o).unwrap();
    assert_eq!(od, direct);
}

#[test]
fn full_pattern_equals_undivided_attention() {
    let part = SubsequencePartition::for_lengths(4, 6);
    let mut r = rng(2);
    let s = part.seq_len();
    let (q, k, v) = (random(s, 5, &mut r), random(s, 5, &mut r), random(s, 5, &mut r));
    let out = joined(
        apply_pattern(&part, q.view(), k.view(), v.view(), &AttentionPattern::full(), &AttentionOptions::for_dim(5))
            .unwrap(),
    );
    assert!(max_rel_diff(&out, &full_attention(q.view(), k.view(), v.view()).unwrap()) < 1e-13);
}

#[test]
fn longformer_s12_w1_matches_brute_force_mask() {
    let (m, n) = (3, 6);
    let part = SubsequencePartition::for_lengths(m, n);
    assert_eq!(part.seq_len(), 12);
    let mut r = rng(12);
    let (q, k, v) = (random(12, 4, &mut r), random(12, 4, &mut r), random(12, 4, &mut r));
    let pat = AttentionPattern::longformer(Window::Local(1));
    let out = joined(apply_pattern(&part, q.view(), k.view(), v.view(), &pat, &AttentionOptions::for_dim(4)).unwrap());
    let mask = pattern_mask(PatternKind::Longformer, Window::Local(1), m, n, 30);
    assert!(max_rel_diff(&out, &masked_attention(&q, &k, &v, &mask, 2.0)) < 1e-12);
}

#[test]
fn sparse_query_rows_ignore_document_and_cls() {
    let (m, n, h) = (4, 9, 6);
    let part = SubsequencePartition::for_lengths(m, n);
    let s = part.seq_len();
    let mut r = rng(99);
    let (q, k, v) = (random(s, h, &mut r), random(s, h, &mut r), random(s, h, &mut r));
    let pat = AttentionPattern::sparse(Window::Local(1));
    let o = AttentionOptions::for_dim(h);
    let (_, base, _) = apply_pattern(&part, q.view(), k.view(), v.view(), &pat, &o).unwrap();
    let query = part.range(Group::Query);
    for _ in 0..20 {
        let mut mutate = |x: &DenseMatrix<f64>| {
            DenseMatrix::from_fn(
                s,
                h,
                |i, j| if query.contains(&i) { x.get(i, j) } else { r.random_range(-50.0..50.0) },
            )
        };
        let (q2, k2, v2) = (mutate(&q), mutate(&k), mutate(&v));
        let (_, oq, _) = apply_pattern(&part, q2.view(), k2.view(), v2.view(), &pat, &o).unwrap();
        assert_eq!(oq.as_slice(), base.as_slice());
    }
}

#[test]
fn infinite_sparse_with_symmetric_query_is_full() {
    let part = SubsequencePartition::for_lengths(3, 5);
    let s = part.seq_len();
    let mut r = rng(4);
    let (q, k, v) = (random(s, 4, &mut r), random(s, 4, &mut r), random(s, 4, &mut r));
    let mut pat = AttentionPattern::sparse(Window::Full);
    pat.query = Group::ALL.iter().map(|&g| TargetSpec::new(g, Window::Full)).collect();
    let o = AttentionOptions::for_dim(4);
    let a = joined(apply_pattern(&part, q.view(), k.view(), v.view(), &pat, &o).unwrap());
    let b = joined(apply_pattern(&part, q.view(), k.view(), v.view(), &AttentionPattern::full(), &o).unwrap());
    assert_eq!(a, b);
}

#[test]
fn permuting_documents_permutes_outputs_under_infinite_window() {
    let (m, n) = (2, 7);
    let part = SubsequencePartition::for_lengths(m, n);
    let s = part.seq_len();
    let doc = part.range(Group::Document);
    let mut r = rng(31);
    let (q, k, v) = (random(s, 4, &mut r), random(s, 4, &mut r), random(s, 4, &mut r));
    // reverse the document group
    let perm: Vec<usize> = (0..s).map(|i| if doc.contains(&i) { doc.end - 1 - (i - doc.start) } else { i }).collect();
    let permute = |x: &DenseMatrix<f64>| DenseMatrix::from_fn(s, 4, |i, j| x.get(perm[i], j));
    for pat in [AttentionPattern::sparse(Window::Full), AttentionPattern::longformer(Window::Full)] {
        let o = AttentionOptions::for_dim(4);
        let (_, _, od) = apply_pattern(&part, q.view(), k.view(), v.view(), &pat, &o).unwrap();
        let (_, _, od2) =
            apply_pattern(&part, permute(&q).view(), permute(&k).view(), permute(&v).view(), &pat, &o).unwrap();
        let back = DenseMatrix::from_fn(od.rows(), 4, |i, j| od2.get(perm[doc.start + i] - doc.start, j));
        assert!(max_rel_diff(&od, &back) < 1e-13);
    }
}

#[test]
fn qds_globals_attend_and_are_attended_everywhere() {
    let (m, n) = (2, 11);
    let part = SubsequencePartition::for_lengths(m, n);
    let s = part.seq_len();
    let mut r = rng(6);
    let (q, k, v) = (random(s, 3, &mut r), random(s, 3, &mut r), random(s, 3, &mut r));
    let pat = AttentionPattern::qds(Window::Local(1), 4);
    let out = joined(apply_pattern(&part, q.view(), k.view(), v.view(), &pat, &AttentionOptions::for_dim(3)).unwrap());
    let mask = pattern_mask(PatternKind::Qds, Window::Local(1), m, n, 4);
    assert!(max_rel_diff(&out, &masked_attention(&q, &k, &v, &mask, 3f64.sqrt())) < 1e-12);
}

#[test]
fn absent_group_is_rejected() {
    let part = SubsequencePartition::from_group_lens(1, 3, 0);
    let q = DenseMatrix::<f64>::zeros(4, 2);
    let err = apply_pattern(
        &part,
        q.view(),
        q.view(),
        q.view(),
        &AttentionPattern::sparse(Window::Local(1)),
        &AttentionOptions::for_dim(2),
    );
    assert!(err.is_err());
}

fn kinds() -> impl Strategy<Value = PatternKind> {
    prop::sample::select(PatternKind::ALL.to_vec())
}

fn windows() -> impl Strategy<Value = Window> {
    prop_oneof![Just(Window::Full), (0usize..=4).prop_map(Window::Local)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn patterns_match_dense_masks(
        kind in kinds(),
        window in windows(),
        m in 1usize..=4,
        n in 0usize..=9,
        h in 1usize..=4,
        stride in 2usize..=5,
        seed in any::<u64>(),
        naive in any::<bool>(),
    ) {
        let part = SubsequencePartition::for_lengths(m, n);
        let s = part.seq_len();
        prop_assume!(s <= 16);
        let mut r = rng(seed);
        let (q, k, v) = (random(s, h, &mut r), random(s, h, &mut r), random(s, h, &mut r));
        let path = if naive { KernelPath::Naive } else { KernelPath::Tiled };
        let out = joined(apply_pattern(&part, q.view(), k.view(), v.view(), &pattern(kind, window, stride), &opts(h, path)).unwrap());
        let mask = pattern_mask(kind, window, m, n, stride);
        let expected = masked_attention(&q, &k, &v, &mask, (h as f64).sqrt());
        prop_assert!(max_rel_diff(&out, &expected) <= 1e-10);
    }
}

#[test]
fn plan_backward_matches_finite_differences() {
    use sparse_ce::attention::AttentionPlan;
    let (m, n, h) = (2, 9, 3);
    let part = SubsequencePartition::for_lengths(m, n);
    let s = part.seq_len();
    let mut r = rng(40);
    let (q, k, v, g) = (random(s, h, &mut r), random(s, h, &mut r), random(s, h, &mut r), random(s, h, &mut r));
    let o = AttentionOptions::for_dim(h);
    for kind in PatternKind::ALL {
        let plan = AttentionPlan::build(&pattern(kind, Window::Local(1), 4), &part).unwrap();
        let loss = |q: &DenseMatrix<f64>, k: &DenseMatrix<f64>, v: &DenseMatrix<f64>| {
            let (out, _) = plan.forward(q.view(), k.view(), v.view(), &o).unwrap();
            out.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, probs) = plan.forward(q.view(), k.view(), v.view(), &o).unwrap();
        let (gq, gk, gv) = plan.backward(g.view(), q.view(), k.view(), v.view(), &probs, &o).unwrap();
        for (which, analytic) in [(0, &gq), (1, &gk), (2, &gv)] {
            for idx in 0..s * h {
                let eps = 1e-6;
                let mut bumped = [q.clone(), k.clone(), v.clone()];
                bumped[which].as_mut_slice()[idx] += eps;
                let up = loss(&bumped[0], &bumped[1], &bumped[2]);
                bumped[which].as_mut_slice()[idx] -= 2.0 * eps;
                let down = loss(&bumped[0], &bumped[1], &bumped[2]);
                let numeric = (up - down) / (2.0 * eps);
                let a = analytic.as_slice()[idx];
                assert!(
                    (a - numeric).abs() <= 1e-7 * a.abs().max(1.0),
                    "{kind} tensor {which} idx {idx}: {a} vs {numeric}"
                );
            }
        }
    }
}
