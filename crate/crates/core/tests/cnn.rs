use rand::Rng as _;
use tumorscope::cnn::{
    extract_features, random_search, train, Cnn, ModelSpec, SearchSpace, TrainConfig, EPOCH_CSV_HEADER,
};
use tumorscope::dataset::{synthesize, Dataset, ImageSet};
use tumorscope::engine::{Graph, Mode, Tensor};
use tumorscope::harness::gradcheck::check_gradients;
use tumorscope::rng::seeded;
use tumorscope::Error;

fn tiny() -> ModelSpec {
    ModelSpec::tiny(16, [4, 4, 6, 6])
}

fn synthetic(count: usize, seed: u64) -> Dataset {
    Dataset::from_synthetic(&synthesize(count, 32, seed).unwrap(), 16, 0.8, seed).unwrap()
}

fn random_images(n: usize, size: usize, seed: u64) -> Tensor<f64> {
    let mut rng = seeded(seed);
    let len = n * size * size;
    Tensor::new(vec![n, 1, size, size], (0..len).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

#[test]
fn zero_model_gives_uniform_softmax() {
    let model = Cnn::<f64>::zeros(tiny()).unwrap();
    let (logits, _) = model.infer(&random_images(3, 16, 1), 8).unwrap();
    assert!(logits.data().iter().all(|&v| v == 0.0));
    for p in logits.softmax_rows().unwrap().data() {
        assert!((p - 0.5).abs() < 1e-12);
    }
}

#[test]
fn eval_batch_of_one_and_chunking_agree() {
    let model = Cnn::<f64>::new(tiny(), 3).unwrap();
    let x = random_images(5, 16, 2);
    let (a, fa) = model.infer(&x, 1).unwrap();
    let (b, fb) = model.infer(&x, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(fa, fb);
    let (c, _) = model.infer(&x, 5).unwrap();
    assert_eq!(b, c);
}

#[test]
fn forward_rejects_wrong_input_size() {
    let model = Cnn::<f64>::new(tiny(), 3).unwrap();
    assert!(matches!(model.infer(&random_images(1, 32, 2), 1), Err(Error::Shape(_))));
}

#[test]
fn default_activation_shape() {
    let model = Cnn::<f32>::new(ModelSpec::default(), 0).unwrap();
    let mut g = Graph::new();
    let x = g.constant(random_images(2, 32, 0).cast());
    let (out, _) = model.forward(&mut g, x, Mode::Eval, &mut seeded(0), false).unwrap();
    assert_eq!(g.value(out.activations).shape(), &[2, 128, 4, 4]);
    assert_eq!(g.value(out.features).shape(), &[2, 512]);
    assert_eq!(g.value(out.logits).shape(), &[2, 2]);
}

#[test]
fn full_network_gradient_check() {
    for seed in 0..5 {
        let model = Cnn::<f64>::new(ModelSpec::tiny(16, [2, 2, 3, 3]), seed).unwrap();
        // Nonzero biases keep exact-zero pre-activations (ReLU kinks) away.
        let mut rng = seeded(seed + 50);
        let mut inputs: Vec<Tensor<f64>> = model
            .parameters()
            .iter()
            .zip(model.parameter_names())
            .map(|(p, name)| {
                if name.ends_with("bias") {
                    let values = (0..p.len()).map(|_| rng.gen_range(-0.2..0.2)).collect();
                    Tensor::new(p.shape().to_vec(), values).unwrap()
                } else {
                    p.clone()
                }
            })
            .collect();
        inputs.push(random_images(2, 16, seed + 100));
        let n = inputs.len();
        let errors = check_gradients(
            &inputs,
            |g, vars| {
                let (params, image) = vars.split_at(vars.len() - 1);
                let mut rng = seeded(seed);
                let (out, _) = model.forward_with(g, image[0], params.to_vec(), Mode::Train, &mut rng)?;
                g.softmax_cross_entropy(out.logits, &[0, 1])
            },
            1e-5,
        )
        .unwrap();
        assert_eq!(errors.len(), n);
        for (i, e) in errors.iter().enumerate() {
            assert!(*e <= 1e-3, "seed {seed} input {i}: {e}");
        }
    }
}

#[test]
fn memorizes_two_images() {
    let data = synthetic(1, 5);
    let set = data.set(None).unwrap();
    assert_eq!(set.labels.iter().filter(|&&l| l == 1).count(), 1);
    let config = TrainConfig {
        epochs: 50,
        batch_size: 2,
        learning_rate: 1e-2,
        deterministic: true,
        ..TrainConfig::default()
    };
    let outcome = train(Cnn::<f32>::new(tiny(), 1).unwrap(), &set, &set, &config, |_, _| Ok(())).unwrap();
    let last = outcome.logs.last().unwrap();
    assert!(last.train_loss < 0.01, "final train loss {}", last.train_loss);
    assert_eq!(outcome.model.epochs_trained(), 50);
}

fn short_run(seed: u64) -> tumorscope::cnn::TrainOutcome<f32> {
    let data = synthetic(40, 9);
    let config = TrainConfig {
        epochs: 3,
        batch_size: 8,
        seed,
        deterministic: true,
        ..TrainConfig::default()
    };
    let model = Cnn::<f32>::new(tiny(), seed).unwrap();
    train(model, &data.train().unwrap(), &data.val().unwrap(), &config, |_, _| Ok(())).unwrap()
}

#[test]
fn deterministic_training_repeats_exactly() {
    let a = short_run(7);
    let b = short_run(7);
    assert_eq!(a.logs, b.logs);
    assert_eq!(a.model, b.model);
    for log in &a.logs {
        assert!(log.train_loss >= 0.0 && log.val_loss >= 0.0);
        assert!((0.0..=1.0).contains(&log.train_acc) && (0.0..=1.0).contains(&log.val_acc));
    }
    let best = a.logs.iter().map(|l| l.val_acc).fold(0.0, f64::max);
    assert_eq!(a.best_val_accuracy(), best);
    assert_eq!(EPOCH_CSV_HEADER.split(',').count(), a.logs[0].csv_row().split(',').count());
}

#[test]
fn on_epoch_sees_every_epoch() {
    let data = synthetic(20, 2);
    let config = TrainConfig {
        epochs: 2,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let mut seen = Vec::new();
    train(Cnn::<f32>::new(tiny(), 0).unwrap(), &data.train().unwrap(), &data.val().unwrap(), &config, |log, m| {
        seen.push((log.epoch, m.epochs_trained()));
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![(1, 1), (2, 2)]);
}

#[test]
fn huge_learning_rate_reports_divergence() {
    let data = synthetic(20, 2);
    let config = TrainConfig {
        epochs: 3,
        batch_size: 4,
        learning_rate: 1e300,
        ..TrainConfig::default()
    };
    let r = train(Cnn::<f32>::new(tiny(), 0).unwrap(), &data.train().unwrap(), &data.val().unwrap(), &config, |_, _| Ok(()));
    assert!(matches!(r, Err(Error::Diverged { epoch: 1 })), "{:?}", r.err());
}

#[test]
fn single_class_training_set_is_rejected() {
    let data = synthetic(20, 2);
    let set = data.set(None).unwrap();
    let negatives: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == 0).collect();
    let only = set.select(&negatives);
    let r = train(Cnn::<f32>::new(tiny(), 0).unwrap(), &only, &set, &TrainConfig::default(), |_, _| Ok(()));
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

#[test]
fn features_follow_input_order_and_duplicates_match() {
    let outcome = short_run(3);
    let data = synthetic(40, 9);
    let set = data.val().unwrap();
    let dup = set.select(&[0, 1, 0]);
    let fm = extract_features(&outcome.model, &dup).unwrap();
    assert_eq!(fm.dim(), 6);
    assert_eq!(fm.rows(), 3);
    assert_eq!(fm.row(0), fm.row(2));
    assert_eq!(fm.ids[0], set.ids[0]);
    assert_eq!(fm.labels[1] as usize, set.labels[1]);
    assert!(fm.data().iter().all(|v| v.is_finite()));
    assert!(fm.data().iter().any(|&v| v != 0.0));
    let again = extract_features(&outcome.model, &dup).unwrap();
    assert_eq!(fm, again);
}

#[test]
fn untrained_model_cannot_extract() {
    let data = synthetic(4, 0);
    let set: ImageSet = data.set(None).unwrap();
    let model = Cnn::<f32>::new(tiny(), 0).unwrap();
    assert!(matches!(extract_features(&model, &set), Err(Error::Untrained)));
}

fn tiny_space() -> SearchSpace {
    SearchSpace {
        filters: vec![2, 4],
        kernels: vec![3, 5],
        batch_sizes: vec![8, 16],
        ..SearchSpace::default()
    }
}

#[test]
fn random_search_returns_argmax() {
    let data = synthetic(40, 4);
    let (tr, va) = (data.train().unwrap(), data.val().unwrap());
    let base = TrainConfig {
        deterministic: true,
        ..TrainConfig::default()
    };
    let out = random_search(&tiny_space(), &tiny(), &base, 5, 1, 11, &tr, &va).unwrap();
    assert_eq!(out.trials.len(), 5);
    let best = out.best_trial();
    for t in &out.trials {
        assert!(best.val_accuracy >= t.val_accuracy);
        if t.val_accuracy == best.val_accuracy {
            assert!(best.val_loss <= t.val_loss);
        }
    }
    let again = random_search(&tiny_space(), &tiny(), &base, 5, 1, 11, &tr, &va).unwrap();
    let specs = |o: &tumorscope::cnn::SearchOutcome| o.trials.iter().map(|t| (t.spec.clone(), t.config.clone())).collect::<Vec<_>>();
    assert_eq!(specs(&out), specs(&again));
    assert_eq!(out.best, again.best);

    let one = random_search(&tiny_space(), &tiny(), &base, 1, 1, 11, &tr, &va).unwrap();
    assert_eq!(one.best, 0);
    assert_eq!(one.trials[0].spec, out.trials[0].spec);
}

#[test]
fn random_search_rejects_zero_trials() {
    let data = synthetic(10, 4);
    let set = data.set(None).unwrap();
    let r = random_search(&tiny_space(), &tiny(), &TrainConfig::default(), 0, 1, 0, &set, &set);
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}
