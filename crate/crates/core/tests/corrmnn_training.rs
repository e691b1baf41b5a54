use gaitfuse::corrmnn::{channel_accuracy, train_corrmnn, TrainConfig};
use gaitfuse::ingest::{synth_bimodal, BimodalSample, SynthSpec};
use gaitfuse::Error;

fn data(separation: f64, per_class: usize, seed: u64) -> Vec<BimodalSample> {
    synth_bimodal(&SynthSpec {
        classes: 4,
        samples_per_class: per_class,
        timesteps: 10,
        dim1: 4,
        dim2: 4,
        separation,
        seed,
    })
    .unwrap()
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        hidden: 16,
        batch_size: 64,
        epochs,
        seed: 7,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_data_is_learned() {
    let train = data(5.0, 100, 1);
    let (model, report) = train_corrmnn(&train, &cfg(20)).unwrap();
    let first = report.loss_curve.first().unwrap().total;
    let last = report.loss_curve.last().unwrap().total;
    eprintln!("loss {first} -> {last}, acc {:?}", report.train_accuracy);
    assert!(last < first);
    assert!(report.train_accuracy.iter().all(|&a| a >= 0.95));
    let test = data(5.0, 25, 2);
    let acc = channel_accuracy(&model, &test).unwrap();
    assert!(acc.iter().all(|&a| a >= 0.9), "{acc:?}");
}

#[test]
fn no_signal_stays_near_chance_on_held_out_data() {
    let train = data(0.0, 100, 3);
    let (model, _) = train_corrmnn(&train, &cfg(10)).unwrap();
    let test = data(0.0, 100, 4);
    let acc = channel_accuracy(&model, &test).unwrap();
    eprintln!("held-out accuracy {acc:?}");
    assert!(acc.iter().all(|&a| (a - 0.25).abs() <= 0.1), "{acc:?}");
}

#[test]
fn training_is_reproducible() {
    let train = data(2.0, 10, 5);
    let c = TrainConfig {
        batch_size: 16,
        ..cfg(3)
    };
    let (a, ra) = train_corrmnn(&train, &c).unwrap();
    let (b, rb) = train_corrmnn(&train, &c).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.loss_curve, rb.loss_curve);
    assert!(ra.loss_curve_csv().starts_with("epoch,l_total\n0,"));
}

#[test]
fn huge_learning_rate_reports_divergence_or_finishes() {
    let train = data(5.0, 10, 6);
    let c = TrainConfig {
        learning_rate: 1e300,
        batch_size: 8,
        ..cfg(5)
    };
    match train_corrmnn(&train, &c) {
        Ok((m, _)) => assert!(gaitfuse::corrmnn::ParamSet::all_finite(&m)),
        Err(e) => assert!(matches!(e, Error::Divergence { .. }), "{e}"),
    }
}

#[test]
fn empty_training_set_rejected() {
    assert!(train_corrmnn(&[], &cfg(1)).is_err());
}
