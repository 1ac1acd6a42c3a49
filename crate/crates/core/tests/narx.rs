mod common;

use common::*;
use narx_sysid::narx::*;
use narx_sysid::signals::Signal;
use proptest::prelude::*;

fn d(na: usize, nb: usize) -> DelayConfig {
    DelayConfig::new(na, nb).unwrap()
}

#[test]
fn regressor_examples() {
    let x = build_regressor(&[0.3, 0.5], &[1.0], d(2, 1)).unwrap();
    assert_eq!(x.0, vec![0.5, 0.3, 1.0]);
    assert_eq!(d(15, 7).regressor_len(), 22);
    let z = build_regressor(&[0.0; 15], &[0.0; 7], d(15, 7)).unwrap();
    assert!(z.0.iter().all(|&v| v == 0.0));
    assert!(build_regressor(&[1.0], &[1.0], d(2, 1)).is_err());
    assert!(DelayConfig::new(0, 1).is_err());
}

#[test]
fn neuron_examples() {
    assert_eq!(neuron(&[1.0, 2.0], &[0.5, -0.25], 0.0, Activation::Identity).unwrap(), 0.0);
    assert_eq!(neuron(&[0.0], &[1.0], 0.0, Activation::Logistic).unwrap(), 0.5);
    assert_eq!(neuron(&[0.0], &[1.0], 0.0, Activation::RadialBasis).unwrap(), 1.0);
    assert!(neuron(&[1.0], &[1.0, 2.0], 0.0, Activation::Identity).is_err());
}

#[test]
fn forward_examples() {
    for arch in [
        Architecture::SigmoidSingle { hidden: 3 },
        Architecture::FeedForwardTwo { h1: 2, h2: 3 },
        Architecture::CascadeForward { hidden: 4 },
    ] {
        let mut m = NarxModel::zeros(arch, d(3, 2)).unwrap();
        let last = m.layers().len() - 1;
        m.biases_mut(last)[0] = 0.7;
        assert_eq!(m.forward(&Regressor(vec![0.4, -1.0, 2.0, 3.0, 0.1])).unwrap(), 0.7);
    }
    let mut m = NarxModel::zeros(Architecture::SigmoidSingle { hidden: 1 }, d(15, 7)).unwrap();
    m.weights_mut(0)[0] = 1.0;
    m.weights_mut(1)[0] = 2.0;
    assert_eq!(m.forward(&Regressor(vec![0.0; 22])).unwrap(), 1.0);
    assert!(m.forward(&Regressor(vec![0.0; 21])).is_err());
}

#[test]
fn ffnn_forward_matches_hand_formula() {
    let m = init_weights(Architecture::FeedForwardTwo { h1: 3, h2: 2 }, d(2, 1), 7).unwrap();
    let x = [0.3, -0.2, 0.9];
    let (w1, b1, w2, b2, w3, b3) = (m.weights(0), m.biases(0), m.weights(1), m.biases(1), m.weights(2), m.biases(2));
    let h1: Vec<f64> = (0..3).map(|i| (w1[3 * i..3 * i + 3].iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + b1[i]).tanh()).collect();
    let h2: Vec<f64> = (0..2)
        .map(|i| {
            let n = w2[3 * i..3 * i + 3].iter().zip(&h1).map(|(w, v)| w * v).sum::<f64>() + b2[i];
            (-n * n).exp()
        })
        .collect();
    let expect = w3[0] * h2[0] + w3[1] * h2[1] + b3[0];
    assert!((m.forward(&Regressor(x.to_vec())).unwrap() - expect).abs() < 1e-15);
}

#[test]
fn arx_replica_one_step_predictions() {
    let u = arx_input(3000, 1);
    let y = arx_output(&u);
    let m = arx_replica();
    let p = predict_sp_record(&m, &u, &y).unwrap();
    assert_eq!(p.offset, 2);
    assert_eq!(p.len(), y.len() - 2);
    for (i, v) in p.values.iter().enumerate() {
        assert!((v - y[i + 2]).abs() <= 1e-12);
    }
}

#[test]
fn arx_replica_free_run() {
    let u = arx_input(1002, 3);
    let y = arx_output(&u);
    let sim = simulate_p(&arx_replica(), &Signal::new(u, DT).unwrap(), &y[..2]).unwrap();
    assert_eq!(sim.len(), 1002);
    assert_eq!(&sim.samples()[..2], &y[..2]);
    for (a, b) in sim.samples().iter().zip(&y) {
        assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn constant_model_predicts_its_bias() {
    let mut m = NarxModel::zeros(Architecture::SigmoidSingle { hidden: 4 }, d(3, 2)).unwrap();
    m.biases_mut(1)[0] = -0.25;
    let u: Vec<f64> = (0..50).map(|k| (k as f64).sin()).collect();
    let y: Vec<f64> = (0..50).map(|k| (k as f64).cos()).collect();
    let sp = predict_sp_record(&m, &u, &y).unwrap();
    assert!(sp.values.iter().all(|&v| v == -0.25));
    let p = simulate_p(&m, &Signal::new(u, DT).unwrap(), &y[..3]).unwrap();
    assert_eq!(&p.samples()[..3], &y[..3]);
    assert!(p.samples()[3..].iter().all(|&v| v == -0.25));
    assert!(predict_sp_record(&m, &[0.0; 3], &[0.0; 3]).is_err());
}

#[test]
fn initialization_contract() {
    let arch = Architecture::SigmoidSingle { hidden: 30 };
    let a = init_weights(arch, d(15, 7), 11).unwrap();
    assert_eq!(a, init_weights(arch, d(15, 7), 11).unwrap());
    assert_ne!(a.params(), init_weights(arch, d(15, 7), 12).unwrap().params());
    let shapes: Vec<(usize, usize)> = a.layers().iter().map(|l| (l.rows, l.cols)).collect();
    assert_eq!(shapes, vec![(30, 22), (1, 30)]);
    assert_eq!(a.n_params(), 30 * 22 + 30 + 30 + 1);
    for arch in [arch, Architecture::FeedForwardTwo { h1: 10, h2: 20 }, Architecture::CascadeForward { hidden: 20 }] {
        let m = init_weights(arch, d(15, 7), 5).unwrap();
        for (i, l) in m.layers().iter().enumerate() {
            let bound = 1.0 / (l.cols as f64).sqrt();
            assert!(m.weights(i).iter().all(|w| w.abs() <= bound));
        }
        assert_eq!(m.norm, Normalization::default());
    }
}

#[test]
fn model_text_round_trip_is_bit_exact() {
    let u: Vec<f64> = (0..400).map(|k| (0.1 * k as f64).sin()).collect();
    let y: Vec<f64> = (0..400).map(|k| (0.07 * k as f64).cos()).collect();
    for arch in [
        Architecture::Linear,
        Architecture::SigmoidSingle { hidden: 6 },
        Architecture::FeedForwardTwo { h1: 4, h2: 5 },
        Architecture::CascadeForward { hidden: 3 },
    ] {
        let mut m = init_weights(arch, d(4, 3), 2).unwrap();
        m.norm = Normalization::fit(&u, &y).unwrap();
        let text = m.to_text();
        let back = NarxModel::from_text(&text).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.to_text(), text);
        let a = predict_sp_record(&m, &u, &y).unwrap();
        let b = predict_sp_record(&back, &u, &y).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn model_header_records_architecture() {
    let m = init_weights(Architecture::SigmoidSingle { hidden: 30 }, d(15, 7), 1).unwrap();
    let text = m.to_text();
    let header: Vec<&str> = text.lines().take(8).collect();
    assert!(header.contains(&"arch=sigmoid"));
    assert!(header.contains(&"na=15"));
    assert!(header.contains(&"nb=7"));
    assert!(header.contains(&"layers=22,30,1"));
    assert!(header.contains(&"act=logistic,identity"));
    assert!(NarxModel::from_text(&text.replace("na=15", "na=15\nfoo=1")).is_err());
    assert!(NarxModel::from_text(&text[..text.len() / 2]).is_err());
}

fn random_model(arch: Architecture, seed: u64) -> NarxModel {
    init_weights(arch, d(3, 2), seed).unwrap()
}

proptest! {
    #[test]
    fn regressor_window_shift(
        y in prop::collection::vec(-5.0f64..5.0, 6..12),
        u in prop::collection::vec(-5.0f64..5.0, 6..12),
        ynew in -5.0f64..5.0, unew in -5.0f64..5.0,
    ) {
        let delays = d(4, 3);
        let x0 = build_regressor(&y, &u, delays).unwrap();
        let y1 = [y.clone(), vec![ynew]].concat();
        let u1 = [u.clone(), vec![unew]].concat();
        let x1 = build_regressor(&y1, &u1, delays).unwrap();
        let mut expect = vec![ynew];
        expect.extend_from_slice(&x0.0[..3]);
        expect.push(unew);
        expect.extend_from_slice(&x0.0[4..6]);
        prop_assert_eq!(x1.0, expect);
    }

    #[test]
    fn normalization_round_trip(v in -1e6f64..1e6, mean in -100.0f64..100.0, std in 1e-3f64..1e3) {
        let c = Channel { mean, std };
        let back = c.denormalize(c.normalize(v));
        prop_assert!((back - v).abs() <= 1e-14 * v.abs().max(1.0) * (1.0 + mean.abs() / std.max(1.0)));
    }

    #[test]
    fn sigmoid_output_is_bounded(seed in 0u64..500, x in prop::collection::vec(-50.0f64..50.0, 5)) {
        let m = random_model(Architecture::SigmoidSingle { hidden: 7 }, seed);
        let bound: f64 = m.weights(1).iter().map(|w| w.abs()).sum::<f64>() + m.biases(1)[0].abs();
        prop_assert!(m.forward(&Regressor(x)).unwrap().abs() <= bound);
    }

    #[test]
    fn cascade_without_bypass_is_tanh_single_layer(seed in 0u64..500, x in prop::collection::vec(-3.0f64..3.0, 5)) {
        let mut c = random_model(Architecture::CascadeForward { hidden: 4 }, seed);
        c.weights_mut(1)[..5].iter_mut().for_each(|w| *w = 0.0);
        let mut s = NarxModel::with_activations(Architecture::SigmoidSingle { hidden: 4 }, d(3, 2), vec![Activation::Tanh]).unwrap();
        s.weights_mut(0).copy_from_slice(c.weights(0));
        s.biases_mut(0).copy_from_slice(c.biases(0));
        s.weights_mut(1).copy_from_slice(&c.weights(1)[5..]);
        s.biases_mut(1).copy_from_slice(c.biases(1));
        let x = Regressor(x);
        prop_assert_eq!(c.forward(&x).unwrap().to_bits(), s.forward(&x).unwrap().to_bits());
    }

    #[test]
    fn sp_and_p_agree_on_self_generated_record(seed in 0u64..200, which in 0usize..3) {
        let arch = [
            Architecture::SigmoidSingle { hidden: 5 },
            Architecture::FeedForwardTwo { h1: 3, h2: 4 },
            Architecture::CascadeForward { hidden: 3 },
        ][which];
        let m = random_model(arch, seed);
        let u: Vec<f64> = (0..120).map(|k| ((k * 7 + seed as usize) % 11) as f64 / 5.0 - 1.0).collect();
        let init = [0.1, -0.2, 0.3];
        let y = simulate_p(&m, &Signal::new(u.clone(), DT).unwrap(), &init).unwrap();
        let sp = predict_sp_record(&m, &u, y.samples()).unwrap();
        prop_assert_eq!(&sp.values[..], &y.samples()[3..]);
    }
}
