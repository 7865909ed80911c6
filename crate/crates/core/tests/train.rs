use memgan::layers::{sigmoid, BIAS_VOLTS};
use memgan::network::Network;
use memgan::rng;
use memgan::train::{latent, softplus};
use memgan::*;
use rand::Rng;

fn small_state(seed: u64, analog: AnalogEffects) -> TrainState {
    let cfg = TrainConfig {
        seed,
        analog,
        ..TrainConfig::default()
    };
    TrainState::new(TopologyPair::reference_small(16).unwrap(), DeviceSpec::wo2(), cfg).unwrap()
}

fn random_image(seed: u64, amp: f64) -> Tensor {
    let mut r = rng::substream(seed, "test-image", 0);
    let data = (0..784).map(|_| amp * (2.0 * r.random::<f64>() - 1.0)).collect();
    Tensor::new(vec![28, 28, 1], data).unwrap()
}

// Direct-loop CNN with the same weights, independent of the patch gather.
fn oracle_layer(desc: &LayerDesc, w: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = desc.crossbar_shape().unwrap().1;
    let bias_row = desc.crossbar_shape().unwrap().0 - 1;
    let mut out = vec![0.0; desc.out_shape.iter().product()];
    if desc.kind == LayerKind::Dense {
        for j in 0..cols {
            let mut acc: f64 = x.iter().enumerate().map(|(i, v)| v * w[i * cols + j]).sum();
            if desc.bias {
                acc += BIAS_VOLTS * w[bias_row * cols + j];
            }
            out[j] = acc;
        }
        return out;
    }
    let (h, wd, c) = (desc.in_shape[0], desc.in_shape[1], desc.in_shape[2]);
    let (oh, ow) = (desc.out_shape[0], desc.out_shape[1]);
    let (kh, kw) = desc.kernel;
    let (s, p) = (desc.stride as i64, desc.padding as i64);
    assert_eq!(desc.kind, LayerKind::Conv);
    for oy in 0..oh {
        for ox in 0..ow {
            for f in 0..cols {
                let mut acc = 0.0;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = oy as i64 * s + ky as i64 - p;
                        let ix = ox as i64 * s + kx as i64 - p;
                        if iy < 0 || ix < 0 || iy >= h as i64 || ix >= wd as i64 {
                            continue;
                        }
                        for ci in 0..c {
                            let row = (ky * kw + kx) * c + ci;
                            acc += x[(iy as usize * wd + ix as usize) * c + ci] * w[row * cols + f];
                        }
                    }
                }
                if desc.bias {
                    acc += BIAS_VOLTS * w[bias_row * cols + f];
                }
                out[(oy * ow + ox) * cols + f] = acc;
            }
        }
    }
    out
}

fn oracle_logit(net: &Network, img: &Tensor, v_dd: f64) -> f64 {
    let mut x = img.data().to_vec();
    for (i, desc) in net.topology().layers.iter().enumerate() {
        x = match desc.kind {
            LayerKind::Conv | LayerKind::Dense => {
                oracle_layer(desc, net.layer(i).unwrap().effective_weights(), &x)
            }
            LayerKind::Relu => x.iter().map(|v| v.max(0.0).min(v_dd)).collect(),
            LayerKind::BatchNorm => {
                let n = x.len() as f64;
                let m = x.iter().sum::<f64>() / n;
                let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                x.iter().map(|v| (v - m) / (var + 1e-5).sqrt()).collect()
            }
            LayerKind::MeanPool => {
                let (h, w, c) = (desc.in_shape[0], desc.in_shape[1], desc.in_shape[2]);
                let (ph, pw) = desc.kernel;
                let (oh, ow) = (h / ph, w / pw);
                let mut o = vec![0.0; oh * ow * c];
                for y in 0..oh * ph {
                    for xx in 0..ow * pw {
                        for ci in 0..c {
                            o[((y / ph) * ow + xx / pw) * c + ci] +=
                                x[(y * w + xx) * c + ci] / (ph * pw) as f64;
                        }
                    }
                }
                o
            }
            k => panic!("oracle does not model {k:?}"),
        };
    }
    assert_eq!(x.len(), 1);
    x[0]
}

#[test]
fn ideal_logits_match_software_oracle() {
    for seed in 0..5 {
        let st = small_state(seed, AnalogEffects::ideal());
        for k in 0..4 {
            let img = random_image(seed * 10 + k, 0.9);
            let got = st.discriminator_logit(&img).unwrap();
            let want = oracle_logit(&st.discriminator, &img, st.config.v_dd);
            assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn quantized_logits_use_stored_conductances() {
    let st = small_state(3, AnalogEffects::default());
    let img = random_image(1, 0.9);
    let want = oracle_logit(&st.discriminator, &img, st.config.v_dd);
    assert!((st.discriminator_logit(&img).unwrap() - want).abs() < 1e-6);
}

fn zero_all(net: &mut Network) {
    let mut r = rng::substream(0, rng::VARIABILITY, 0);
    for i in 0..net.topology().layers.len() {
        let n = net.topology().layers[i].weight_count();
        if n > 0 {
            net.set_weights(i, &vec![0.0; n], &VariabilityModel::ideal(), &mut r)
                .unwrap();
        }
    }
}

#[test]
fn zero_weights_give_half_score_and_blank_image() {
    let mut st = small_state(0, AnalogEffects::default());
    zero_all(&mut st.generator);
    zero_all(&mut st.discriminator);
    let img = st.generator_forward(&Tensor::zeros(vec![16])).unwrap();
    assert_eq!(img.shape(), &[28, 28, 1]);
    assert!(img.data().iter().all(|&v| v == 0.0));
    assert_eq!(st.discriminator_forward(&random_image(2, 0.9)).unwrap(), 0.5);
}

#[test]
fn generator_output_within_swing() {
    let st = small_state(4, AnalogEffects::default());
    let vs = st.v_scale();
    for i in 0..100 {
        let z = latent(11, "range", i, 16);
        let img = st.generator_forward(&z).unwrap();
        assert!(img.data().iter().all(|v| v.abs() <= vs));
    }
}

#[test]
fn scores_strictly_inside_unit_interval() {
    let st = small_state(5, AnalogEffects::default());
    for k in 0..20 {
        let s = st.discriminator_forward(&random_image(k, 0.9)).unwrap();
        assert!(s > 0.0 && s < 1.0, "{s}");
    }
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let mut st = small_state(6, AnalogEffects::default());
    st.config.learning_rate = 0.0;
    let before_g: Vec<Vec<f64>> = st.generator.crossbar_layers().map(|l| l.effective_weights().to_vec()).collect();
    let before_d: Vec<Vec<f64>> = st.discriminator.crossbar_layers().map(|l| l.effective_weights().to_vec()).collect();
    let real = random_image(3, 1.0);
    let z = latent(st.config.seed, "fake", 0, 16);
    let fake = st.generator_forward(&z).unwrap();
    let l_r = st.discriminator_logit(&real.map(|v| v * st.v_scale())).unwrap();
    let l_f = st.discriminator_logit(&fake).unwrap();

    let losses = st.train_step(std::slice::from_ref(&real)).unwrap();
    assert!((losses.d_loss - (softplus(-l_r) + softplus(l_f))).abs() < 1e-12);
    assert!((losses.g_loss - softplus(-l_f)).abs() < 1e-12);
    let after_g: Vec<Vec<f64>> = st.generator.crossbar_layers().map(|l| l.effective_weights().to_vec()).collect();
    let after_d: Vec<Vec<f64>> = st.discriminator.crossbar_layers().map(|l| l.effective_weights().to_vec()).collect();
    assert_eq!(before_g, after_g);
    assert_eq!(before_d, after_d);
    assert_eq!(st.events, 1);
}

#[test]
fn event_counter_counts_images() {
    let mut st = small_state(7, AnalogEffects::default());
    st.config.batch_size = 3;
    let data: Vec<Tensor> = (0..7).map(|k| random_image(k, 1.0)).collect();
    st.train_epoch(&data).unwrap();
    st.train_epoch(&data).unwrap();
    assert_eq!(st.events, 14);
    assert_eq!(st.steps, 6);
    assert_eq!(st.epoch, 2);
    assert_eq!(st.history.len(), 2);
}

#[test]
fn step_errors() {
    let mut st = small_state(8, AnalogEffects::default());
    assert!(matches!(st.train_step(&[]), Err(Error::EmptyBatch)));
    let bad = Tensor::zeros(vec![10]);
    assert!(matches!(st.train_step(&[bad]), Err(Error::DimensionMismatch { .. })));
    let nan = Tensor::filled(vec![28, 28, 1], f64::NAN);
    let e = st.train_step(&[nan]).unwrap_err();
    assert!(e.to_string().contains("training diverged"), "{e}");
    assert!(st.generator_forward(&Tensor::zeros(vec![3])).is_err());
    assert!(st.discriminator_forward(&Tensor::zeros(vec![28, 28])).is_err());
}

#[test]
fn samples_reproducible() {
    let st = small_state(9, AnalogEffects::default());
    assert!(st.generate_samples(0, 1).unwrap().is_empty());
    let a = st.generate_samples(10, 42).unwrap();
    let b = st.generate_samples(10, 42).unwrap();
    let c = st.generate_samples(10, 43).unwrap();
    assert_eq!(a.len(), 10);
    let bits = |s: &[Tensor]| -> Vec<u64> { s.iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect() };
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn training_is_seed_deterministic() {
    let data: Vec<Tensor> = (0..6).map(|k| random_image(k, 1.0)).collect();
    let analog = AnalogEffects {
        sigma_pct: 0.2,
        leakage: 0.1,
        ..AnalogEffects::default()
    };
    let run = || {
        let mut st = small_state(10, analog);
        let l = st.train_epoch(&data).unwrap();
        let w: Vec<u64> = st
            .generator
            .crossbar_layers()
            .flat_map(|l| l.effective_weights().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect();
        (l.d_loss.to_bits(), l.g_loss.to_bits(), w)
    };
    assert_eq!(run(), run());
}

#[test]
fn variability_perturbs_written_weights() {
    let a = small_state(12, AnalogEffects { quantize: false, ..AnalogEffects::default() });
    let b = small_state(12, AnalogEffects { quantize: false, sigma_pct: 0.3, ..AnalogEffects::default() });
    let la = a.discriminator.layer(0).unwrap();
    let lb = b.discriminator.layer(0).unwrap();
    assert_eq!(la.master(), lb.master());
    assert_ne!(la.effective_weights(), lb.effective_weights());
}

#[test]
fn config_validation() {
    let pair = TopologyPair::reference_small(16).unwrap();
    for bad in [
        TrainConfig { epochs: 0, ..TrainConfig::default() },
        TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        TrainConfig { latent_dim: 8, ..TrainConfig::default() },
    ] {
        assert!(TrainState::new(pair.clone(), DeviceSpec::wo2(), bad).is_err());
    }
    assert_eq!(sigmoid(0.0), 0.5);
}
