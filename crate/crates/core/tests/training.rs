use fearec_core::data::{pad_truncate, synthetic_periodic, SequenceBatch};
use fearec_core::encoder::{Encoder, ModelConfig, ModelParams};
use fearec_core::rng::stream;
use fearec_core::training::{
    contrastive_loss, freq_reg_loss, rec_loss, total_loss, train_step, Adam, LossWeights, TrainConfig, Trainer,
};
use ndarray::{array, Array1, Array2};
use rand::Rng as _;

fn small_model(num_items: usize) -> ModelConfig {
    ModelConfig {
        num_items,
        max_len: 10,
        dim: 8,
        num_layers: 2,
        num_heads: 2,
        ..Default::default()
    }
}

fn single_batch(ids: &[usize], target: usize, n: usize) -> SequenceBatch {
    SequenceBatch {
        ids: vec![pad_truncate(ids, n)],
        targets: vec![target],
        positive_ids: vec![pad_truncate(ids, n)],
        examples: vec![0],
    }
}

/// `-log softmax(z)[t]` evaluated term by term.
fn nll(z: &[f64], t: usize) -> f64 {
    let denom: f64 = z[1..].iter().map(|v| v.exp()).sum();
    -(z[t].exp() / denom).ln()
}

#[test]
fn rec_loss_matches_direct_formula() {
    let mut rng = stream(1, &[]);
    for _ in 0..50 {
        let mut z: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t = rng.random_range(1..12);
        let want = nll(&z, t);
        z[0] = f64::NEG_INFINITY;
        assert!((rec_loss(Array1::from(z).view(), t).unwrap() - want).abs() < 1e-9);
    }
    let mut uniform = Array1::zeros(11);
    uniform[0] = f64::NEG_INFINITY;
    assert!((rec_loss(uniform.view(), 3).unwrap() - 10f64.ln()).abs() < 1e-6);
    assert!(rec_loss(uniform.view(), 0).is_err());
}

/// Direct evaluation of the two-direction InfoNCE over `2B` views.
fn info_nce(hu: &Array2<f64>, hs: &Array2<f64>) -> f64 {
    let b = hu.nrows();
    let views: Vec<_> = hu.rows().into_iter().chain(hs.rows()).collect();
    let mut total = 0.0;
    for a in 0..2 * b {
        let pos = (a + b) % (2 * b);
        let denom: f64 = (0..2 * b).filter(|&j| j != a).map(|j| views[a].dot(&views[j]).exp()).sum();
        total -= (views[a].dot(&views[pos]).exp() / denom).ln();
    }
    total / b as f64
}

#[test]
fn contrastive_loss_matches_hand_evaluation() {
    let v = array![[0.3, -0.2, 0.5], [0.3, -0.2, 0.5]];
    let got = contrastive_loss(v.view(), v.view(), 1.0).unwrap();
    assert!((got - 2.0 * 3f64.ln()).abs() < 1e-6, "{got}");
    let mut rng = stream(2, &[]);
    let hu = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
    let hs = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
    assert!((contrastive_loss(hu.view(), hs.view(), 1.0).unwrap() - info_nce(&hu, &hs)).abs() < 1e-9);
    assert!(contrastive_loss(hu.slice(ndarray::s![..1, ..]), hs.slice(ndarray::s![..1, ..]), 1.0).is_err());
}

#[test]
fn contrastive_loss_falls_as_positives_align() {
    let hs = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let far = array![[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
    let near = array![[1.0, 0.0, 0.5], [0.0, 1.0, 0.0]];
    let l_far = contrastive_loss(far.view(), hs.view(), 1.0).unwrap();
    let l_near = contrastive_loss(near.view(), hs.view(), 1.0).unwrap();
    assert!(l_near < l_far);
}

#[test]
fn frequency_regularizer_examples() {
    let a = array![1.0, 0.0, 0.0, 0.0];
    let z = Array1::zeros(4);
    assert!((freq_reg_loss(a.view(), z.view()).unwrap() - 3.0).abs() < 1e-12);
    let x = array![0.2, -1.0, 0.7, 0.1, 0.4];
    assert!(freq_reg_loss(x.view(), x.view()).unwrap().abs() < 1e-12);
    let y = array![0.2, -1.0, 0.7, 0.1, 0.5];
    let base = freq_reg_loss(x.view(), y.view()).unwrap();
    assert!(base > 1e-3);
    let scaled = freq_reg_loss((&x * 2.5).view(), (&y * 2.5).view()).unwrap();
    assert!((scaled - 2.5 * base).abs() < 1e-12);
}

#[test]
fn total_is_linear_in_the_terms() {
    let w = LossWeights { lambda1: 0.1, lambda2: 0.01 };
    assert!((total_loss(1.0, 2.0, 3.0, &w).unwrap() - 1.23).abs() < 1e-12);
    let zero = LossWeights { lambda1: 0.0, lambda2: 0.0 };
    assert_eq!(total_loss(0.7, 5.0, 9.0, &zero).unwrap(), 0.7);
    assert!(total_loss(f64::NAN, 0.0, 0.0, &w).is_err());
}

#[test]
fn recommendation_loss_falls_on_a_fixed_example() {
    let model = small_model(20);
    let enc = Encoder::new(model.clone()).unwrap();
    let mut params = ModelParams::init(&model, &mut stream(3, &[])).unwrap();
    let cfg = TrainConfig::default();
    let mut adam = Adam::new(&params, &cfg);
    let batch = single_batch(&[3, 7, 1, 9], 12, model.max_len);
    let w = LossWeights { lambda1: 0.0, lambda2: 0.0 };
    let mut losses = Vec::new();
    for step in 0..50 {
        losses.push(train_step(&enc, &mut params, &mut adam, &batch, &w, &cfg, step).unwrap().rec);
        assert!(params.item_table.row(0).iter().all(|&v| v == 0.0));
    }
    assert!(losses[49] < losses[0] - 0.5, "{} -> {}", losses[0], losses[49]);
}

#[test]
fn identical_seeds_give_identical_updates() {
    let ds = synthetic_periodic(12, 20, 3, 10, 4).unwrap();
    let run = || {
        let mut t = Trainer::new(small_model(20), TrainConfig { batch_size: 4, ..Default::default() }, LossWeights::default(), &ds).unwrap();
        let logs: Vec<_> = (0..2).map(|_| t.run_epoch().unwrap()).collect();
        (logs.iter().map(|l| l.total).collect::<Vec<_>>(), t.into_params())
    };
    let (la, pa) = run();
    let (lb, pb) = run();
    assert_eq!(la, lb);
    assert_eq!(pa, pb);
}

#[test]
fn without_dropout_both_views_coincide() {
    let model = ModelConfig { dropout: 0.0, ..small_model(20) };
    let enc = Encoder::new(model.clone()).unwrap();
    let params = ModelParams::init(&model, &mut stream(5, &[])).unwrap();
    let ids = pad_truncate(&[4, 8, 15, 16], model.max_len);
    let a = enc.forward(&params, &ids, Some(&mut stream(1, &[])), None).unwrap();
    let b = enc.forward(&params, &ids, Some(&mut stream(2, &[])), None).unwrap();
    assert_eq!(a.hidden, b.hidden);

    let noisy = Encoder::new(small_model(20)).unwrap();
    let a = noisy.forward(&params, &ids, Some(&mut stream(1, &[])), None).unwrap();
    let b = noisy.forward(&params, &ids, Some(&mut stream(2, &[])), None).unwrap();
    assert_ne!(a.hidden, b.hidden);
}

#[test]
fn epoch_log_is_one_structured_line() {
    let ds = synthetic_periodic(6, 20, 3, 10, 4).unwrap();
    let mut t = Trainer::new(small_model(20), TrainConfig { batch_size: 4, ..Default::default() }, LossWeights::default(), &ds).unwrap();
    let line = t.run_epoch().unwrap().to_string();
    for key in ["epoch=1 ", "rec_loss=", "cl_loss=", "freg_loss=", "total=", "wall_seconds="] {
        assert!(line.contains(key), "{line}");
    }
    assert!(!line.contains('\n'));
}

#[test]
fn configuration_errors_are_caught_up_front() {
    let ds = synthetic_periodic(6, 20, 3, 10, 4).unwrap();
    let bad_batch = TrainConfig { batch_size: 1, ..Default::default() };
    assert!(Trainer::new(small_model(20), bad_batch, LossWeights::default(), &ds).is_err());
    assert!(Trainer::new(small_model(21), TrainConfig::default(), LossWeights::default(), &ds).is_err());
    let negative = LossWeights { lambda1: -0.1, lambda2: 0.1 };
    assert!(Trainer::new(small_model(20), TrainConfig::default(), negative, &ds).is_err());
}
