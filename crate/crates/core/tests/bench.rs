mod common;

use common::{random, rng};
use rand::Rng;
use sparse_ce::attention::{AttentionPattern, AttentionPlan, PatternKind, SubsequencePartition, Window};
use sparse_ce::band::{band_pv_with, band_qk_with};
use sparse_ce::bench::{
    bench_model, emit_report, flop_count, gen_random_batch, measure, segment_macs, BenchModel, BenchSpec, ReportFormat,
    CSV_HEADER,
};
use sparse_ce::encoder::{assemble_input, Encoder, EncoderConfig, FIRST_WORD};
use sparse_ce::instrument::count_macs;
use sparse_ce::KernelPath;

const VOCAB: usize = 40;

fn pattern(kind: PatternKind, window: Window) -> AttentionPattern {
    match kind {
        PatternKind::Qds => AttentionPattern::qds(window, 7),
        k => AttentionPattern::preset(k, window),
    }
}

#[test]
fn flop_model_matches_naive_instrumented_encoder() {
    let mut r = rng(3);
    for kind in PatternKind::ALL {
        for window in [Window::Local(0), Window::Local(1), Window::Local(4), Window::Full] {
            for (m, n) in [(1, 5), (4, 20), (10, 50)] {
                let mut cfg = EncoderConfig::new(2, 8, 2, 12, 64, VOCAB, pattern(kind, window));
                cfg.kernel = KernelPath::Naive;
                let model = Encoder::<f64>::new(cfg.clone(), r.random()).unwrap();
                let ids = |len: usize, r: &mut rand_chacha::ChaCha8Rng| -> Vec<u32> {
                    (0..len).map(|_| r.random_range(FIRST_WORD..VOCAB as u32)).collect()
                };
                let seq = assemble_input(&ids(m, &mut r), &ids(n, &mut r), 64).unwrap();
                assert!(seq.len() <= 64);
                let (_, counted) = count_macs(|| model.forward(&seq).unwrap());
                let model_count = flop_count(&cfg.pattern, &seq.partition, 8, 2, 12, 2).unwrap();
                assert_eq!(model_count.total(), counted, "{kind} w={window} m={m} n={n}");
            }
        }
    }
}

#[test]
fn doc_segment_costs_sd_times_window_times_h() {
    let mut r = rng(4);
    for sd in [1, 7, 33, 64] {
        for w in [0, 1, 4, 8] {
            for h in [1, 8, 16] {
                let q = random(sd, h, &mut r);
                let k = random(sd, h, &mut r);
                let (band, qk) = count_macs(|| band_qk_with(q.view(), k.view(), w, KernelPath::Naive).unwrap());
                let (_, pv) = count_macs(|| band_pv_with(&band, k.view(), KernelPath::Naive).unwrap());
                let expected = (sd * (2 * w + 1) * h) as u64;
                assert_eq!(qk, expected);
                assert_eq!(pv, expected);
                assert_eq!(segment_macs(sd, sd, Window::Local(w), h), expected);
            }
        }
    }
}

#[test]
fn attention_flops_grow_linearly_when_windowed_and_quadratically_when_full() {
    let cost = |kind: PatternKind, window: Window, n: usize| {
        let p = SubsequencePartition::for_lengths(10, n);
        flop_count(&pattern(kind, window), &p, 64, 2, 256, 1).unwrap().attention as f64
    };
    for n in [500, 1000, 2000] {
        let sparse =
            cost(PatternKind::Sparse, Window::Local(4), 2 * n) / cost(PatternKind::Sparse, Window::Local(4), n);
        let full = cost(PatternKind::Full, Window::Full, 2 * n) / cost(PatternKind::Full, Window::Full, n);
        assert!((sparse - 2.0).abs() < 0.05, "{sparse}");
        let grow = (2 * n + 13) as f64 / (n + 13) as f64;
        assert!((full - grow * grow).abs() < 1e-9, "{full}");
    }
}

fn tiny_spec(kind: PatternKind, window: Window, doc_len: usize) -> BenchSpec {
    BenchSpec {
        pattern: kind,
        window,
        doc_lens: vec![doc_len],
        batch_size: 2,
        repetitions: 3,
        warmup: 1,
        model: BenchModel { embed_dim: 16, ff_dim: 32, max_positions: 64, vocab_size: 60, ..BenchModel::default() },
        ..BenchSpec::default()
    }
}

#[test]
fn attention_peak_equals_score_slots_of_one_head() {
    for kind in PatternKind::ALL {
        for window in [Window::Local(1), Window::Local(4), Window::Full] {
            let spec = tiny_spec(kind, window, 70);
            let model = bench_model::<f32>(&spec).unwrap();
            let batch = gen_random_batch(&spec, 70, 9).unwrap();
            let record = measure(&model, &batch, &spec).unwrap();
            let plan = AttentionPlan::build(&model.config.pattern, &batch[0].partition).unwrap();
            assert_eq!(record.attention_bytes, Some(plan.score_slots() * 4), "{kind} {window}");
            assert!(record.peak_bytes.unwrap() > record.weight_bytes + record.attention_bytes.unwrap());
        }
    }
}

#[test]
fn sparse_needs_less_memory_than_full() {
    let run = |kind, window| {
        let spec = tiny_spec(kind, window, 300);
        let model = bench_model::<f32>(&spec).unwrap();
        measure(&model, &gen_random_batch(&spec, 300, 1).unwrap(), &spec).unwrap()
    };
    let sparse = run(PatternKind::Sparse, Window::Local(4));
    let full = run(PatternKind::Full, Window::Full);
    assert!(sparse.peak_bytes < full.peak_bytes);
    assert!(sparse.flops < full.flops);
}

#[test]
fn report_round_trip_through_csv() {
    let spec = BenchSpec { doc_lens: vec![20, 40], ..tiny_spec(PatternKind::Longformer, Window::Local(2), 20) };
    let records = sparse_ce::bench::run_bench(&spec).unwrap();
    let text = emit_report(&records, ReportFormat::Csv, None).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with(CSV_HEADER));
    for (line, rec) in lines.zip(&records) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], "longformer");
        assert_eq!(cells[3].parse::<usize>().unwrap(), rec.doc_len);
        assert!(cells[5].parse::<f64>().unwrap() > 0.0);
        assert_eq!(cells[7].parse::<u64>().unwrap(), rec.flops);
    }
}
