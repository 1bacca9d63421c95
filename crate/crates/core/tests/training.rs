use sparse_ce::attention::{AttentionPattern, PatternKind, Window};
use sparse_ce::training::{train_toy, LossKind, SyntheticDataset, TaskSpec, TrainConfig};

fn small_task() -> SyntheticDataset {
    let spec = TaskSpec { train_triples: 256, validation_queries: 4, ..TaskSpec::default() };
    SyntheticDataset::generate(&spec, 3).unwrap()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn loss_decreases_for_every_pattern() {
    let data = small_task();
    let patterns = [
        AttentionPattern::full(),
        AttentionPattern::preset(PatternKind::Longformer, Window::Local(4)),
        AttentionPattern::preset(PatternKind::Qds, Window::Local(4)),
        AttentionPattern::sparse(Window::Local(4)),
        AttentionPattern::sparse(Window::Full),
    ];
    let train = TrainConfig { steps: 100, eval_every: 0, ..TrainConfig::default() };
    for pattern in patterns {
        let out = train_toy(data.spec.encoder_config(pattern.clone()), &data, &train).unwrap();
        let losses: Vec<f64> = out.trace.iter().map(|p| p.loss).collect();
        assert_eq!(losses.len(), 100);
        let (head, tail) = (mean(&losses[..20]), mean(&losses[80..]));
        assert!(tail < head, "{pattern:?}: {head} -> {tail}");
    }
}

#[test]
fn margin_mse_also_learns() {
    let data = small_task();
    let train = TrainConfig { steps: 100, eval_every: 0, loss: LossKind::MarginMse, ..TrainConfig::default() };
    let out = train_toy(data.spec.encoder_config(AttentionPattern::sparse(Window::Local(2))), &data, &train).unwrap();
    let losses: Vec<f64> = out.trace.iter().map(|p| p.loss).collect();
    assert!(mean(&losses[80..]) < mean(&losses[..20]));
}

#[test]
fn training_is_reproducible() {
    let data = small_task();
    let train = TrainConfig { steps: 30, eval_every: 15, ..TrainConfig::default() };
    let config = data.spec.encoder_config(AttentionPattern::sparse(Window::Local(1)));
    let a = train_toy(config.clone(), &data, &train).unwrap();
    let b = train_toy(config, &data, &train).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.validation, b.validation);
    assert_eq!(a.trace.iter().filter(|p| p.ndcg10.is_some()).count(), 2);
    assert_eq!(a.validation.len(), 4);
}

#[test]
fn bad_configuration_is_rejected() {
    let data = small_task();
    let config = data.spec.encoder_config(AttentionPattern::full());
    for train in [
        TrainConfig { steps: 0, ..TrainConfig::default() },
        TrainConfig { lr: f64::NAN, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
    ] {
        assert!(train_toy(config.clone(), &data, &train).is_err(), "{train:?}");
    }
}
