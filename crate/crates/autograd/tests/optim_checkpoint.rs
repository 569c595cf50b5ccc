use mpe_autograd::{AdamW, AdamWConfig, Checkpoint, Error, Gradients, ParamStore, Schedule, Tape, Tensor};

#[test]
fn zero_gradients_leave_parameters_unchanged() {
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", Tensor::from_f64([3], &[1.0, -2.0, 3.0]).unwrap());
    let before = store.clone();
    let mut grads = Gradients::zeros_like(&store);
    grads.accumulate(w, &Tensor::zeros([3]));
    let mut opt = AdamW::new(AdamWConfig {
        weight_decay: 0.0,
        ..Default::default()
    });
    for _ in 0..10 {
        opt.step(&mut store, &grads).unwrap();
    }
    assert_eq!(store, before);
    assert_eq!(opt.step, 10);
}

#[test]
fn quadratic_converges_in_200_steps() {
    // f(x) = (x - 3)^2, minimum at 3.
    let mut store = ParamStore::<f64>::new();
    let x = store.add("x", Tensor::scalar(-2.0));
    let mut opt = AdamW::new(AdamWConfig {
        lr: 0.1,
        schedule: Schedule::Constant,
        clip_norm: None,
        ..Default::default()
    });
    for _ in 0..200 {
        let grads = {
            let mut tape = Tape::new(&store);
            let v = tape.param(x);
            let c = tape.constant(Tensor::scalar(3.0));
            let d = tape.sub(v, c).unwrap();
            let sq = tape.mul(d, d).unwrap();
            tape.backward(sq).unwrap()
        };
        opt.step(&mut store, &grads).unwrap();
    }
    let v = store.value(x).item();
    assert!((v - 3.0).abs() < 1e-2, "x = {v}");
}

#[test]
fn linear_decay_ends_at_zero() {
    let mut opt = AdamW::<f64>::new(AdamWConfig {
        schedule: Schedule::LinearDecay { warmup: 0, total: 50 },
        ..Default::default()
    });
    opt.step = 50;
    assert_eq!(opt.current_lr(), 0.0);
}

#[test]
fn non_finite_gradients_are_rejected() {
    let mut store = ParamStore::<f32>::new();
    let w = store.add("w", Tensor::zeros([2]));
    let mut grads = Gradients::zeros_like(&store);
    grads.accumulate(w, &Tensor::new([2], vec![1.0, f32::NAN]).unwrap());
    let err = AdamW::new(AdamWConfig::default()).step(&mut store, &grads).unwrap_err();
    assert!(matches!(err, Error::NonFinite(m) if m.contains('w')));
}

#[test]
fn checkpoint_round_trip_with_optimizer() {
    let mut store = ParamStore::<f32>::new();
    let a = store.add(
        "enc.w",
        Tensor::new([2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap(),
    );
    store.add("bias", Tensor::new([1], vec![-0.25]).unwrap());
    let mut opt = AdamW::new(AdamWConfig::default());
    let mut grads = Gradients::zeros_like(&store);
    grads.accumulate(a, &Tensor::full([2, 3], 0.5));
    opt.step(&mut store, &grads).unwrap();
    let ckpt = Checkpoint::new(store.clone(), serde_json::json!({"arch": "dual_source"})).with_optimizer(&opt);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::<f32>::load(&path).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.restore_optimizer(AdamWConfig::default()).unwrap(), opt);

    let bytes = ckpt.to_bytes();
    assert_eq!(&bytes[..8], b"MPECKPT\0");
    assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Checkpoint::<f32>::from_bytes(&bad).is_err());
}
