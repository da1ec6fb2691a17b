mod common;

use common::{random_inputs, random_net, tiny_config};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tribe_core::datastore::Modality;
use tribe_core::tribenet::{
    count_params, load_checkpoint, save_checkpoint, Fusion, ModalityMask, TribeNet,
};

fn weighted_loss(net: &TribeNet<f64>, inputs: &std::collections::BTreeMap<Modality, Array2<f32>>, subject: usize, mask: &ModalityMask, weights: &Array2<f64>) -> f64 {
    let out = net.forward_inputs(inputs, subject, mask, false).unwrap();
    (&out.output * weights).sum()
}

#[test]
fn gradients_match_central_differences() {
    let cfg = tiny_config();
    let net = random_net(&cfg, 7);
    let inputs = random_inputs(&cfg, 8);
    let mask = ModalityMask::none();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let weights = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));

    let out = net.forward_inputs(&inputs, 1, &mask, true).unwrap();
    let mut grads = vec![0.0; net.num_params()];
    net.backward(&out, weights.view(), &mut grads).unwrap();

    let eps = 1e-5;
    let mut probe = net.clone();
    let mut worst = (0.0f64, String::new());
    for spec in net.layout().specs.clone() {
        for k in 0..spec.len() {
            let i = spec.offset + k;
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + eps;
            let up = weighted_loss(&probe, &inputs, 1, &mask, &weights);
            probe.params_mut()[i] = orig - eps;
            let down = weighted_loss(&probe, &inputs, 1, &mask, &weights);
            probe.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            let rel = (grads[i] - fd).abs() / grads[i].abs().max(fd.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, format!("{}[{k}]: analytic {} vs fd {fd}", spec.name, grads[i]));
            }
        }
    }
    assert!(worst.0 < 1e-4, "worst relative error {:.3e} at {}", worst.0, worst.1);
}

#[test]
fn masked_modality_weights_get_zero_gradient() {
    let cfg = tiny_config();
    let net = random_net(&cfg, 1);
    let inputs = random_inputs(&cfg, 2);
    let mask = ModalityMask::masking(&[Modality::Audio]);
    let out = net.forward_inputs(&inputs, 0, &mask, true).unwrap();
    let mut grads = vec![0.0; net.num_params()];
    net.backward(&out, Array2::ones((3, 4)).view(), &mut grads).unwrap();
    let spec = net.layout().find("proj.audio.weight").unwrap();
    assert!(grads[spec.offset..spec.offset + spec.len()].iter().all(|&g| g == 0.0));
    let text = net.layout().find("proj.text.weight").unwrap();
    assert!(grads[text.offset..text.offset + text.len()].iter().any(|&g| g != 0.0));
}

#[test]
fn readout_gradient_is_routed_to_the_window_subject() {
    let cfg = tiny_config();
    let net = random_net(&cfg, 3);
    let inputs = random_inputs(&cfg, 4);
    let out = net.forward_inputs(&inputs, 1, &ModalityMask::none(), true).unwrap();
    let mut grads = vec![0.0; net.num_params()];
    net.backward(&out, Array2::ones((3, 4)).view(), &mut grads).unwrap();
    let w = net.layout().find("readout.weight").unwrap();
    let per_subject = cfg.hidden_size * cfg.num_parcels;
    assert!(grads[w.offset..w.offset + per_subject].iter().all(|&g| g == 0.0));
    assert!(grads[w.offset + per_subject..w.offset + 2 * per_subject].iter().any(|&g| g != 0.0));
    let e = net.layout().find("subject_embedding").unwrap();
    assert!(grads[e.offset..e.offset + cfg.hidden_size].iter().all(|&g| g == 0.0));
}

#[test]
fn backward_without_cache_is_an_error() {
    let cfg = tiny_config();
    let net = random_net(&cfg, 3);
    let inputs = random_inputs(&cfg, 4);
    let out = net.forward_inputs(&inputs, 0, &ModalityMask::none(), false).unwrap();
    let mut grads = vec![0.0; net.num_params()];
    assert!(net.backward(&out, Array2::ones((3, 4)).view(), &mut grads).is_err());
}

#[test]
fn identity_initialized_net_outputs_readout_bias_on_zero_input() {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = TribeNet::<f64>::init(&cfg, &mut rng).unwrap();
    for name in ["pos_embedding", "subject_embedding"] {
        let spec = net.layout().find(name).unwrap().clone();
        net.params_mut()[spec.offset..spec.offset + spec.len()].fill(0.0);
    }
    let bias = net.layout().find("readout.bias").unwrap().clone();
    for (k, v) in net.params_mut()[bias.offset..bias.offset + bias.len()].iter_mut().enumerate() {
        *v = 0.1 * k as f64 - 0.3;
    }
    let mut inputs = random_inputs(&cfg, 1);
    inputs.values_mut().for_each(|x| x.fill(0.0));
    let out = net.forward_inputs(&inputs, 1, &ModalityMask::none(), false).unwrap();
    for row in out.output.outer_iter() {
        for (p, &v) in row.iter().enumerate() {
            let expected = 0.1 * (4 + p) as f64 - 0.3;
            assert!((v - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn masked_input_does_not_affect_output() {
    let cfg = tiny_config();
    let net = random_net(&cfg, 11);
    let inputs = random_inputs(&cfg, 12);
    let mask = ModalityMask::masking(&[Modality::Video]);
    let a = net.forward_inputs(&inputs, 0, &mask, false).unwrap().output;
    let mut doubled = inputs.clone();
    doubled.get_mut(&Modality::Video).unwrap().mapv_inplace(|v| 2.0 * v + 1.0);
    let b = net.forward_inputs(&doubled, 0, &mask, false).unwrap().output;
    assert_eq!(a, b);
}

#[test]
fn all_masked_is_rejected() {
    let cfg = tiny_config();
    let net = random_net(&cfg, 11);
    let inputs = random_inputs(&cfg, 12);
    let mask = ModalityMask::masking(&Modality::ALL);
    assert!(net.forward_inputs(&inputs, 0, &mask, false).is_err());
}

#[test]
fn encoder_is_permutation_equivariant_without_positions() {
    let cfg = tiny_config();
    let mut net = random_net(&cfg, 21);
    let pos = net.layout().find("pos_embedding").unwrap().clone();
    net.params_mut()[pos.offset..pos.offset + pos.len()].fill(0.0);
    let inputs = random_inputs(&cfg, 22);
    let perm = [3usize, 0, 7, 1, 6, 2, 5, 4];
    let permuted = inputs
        .iter()
        .map(|(&m, x)| (m, x.select(Axis(0), &perm)))
        .collect();
    let mask = ModalityMask::none();
    let a = net.encode(&inputs, 0, &mask).unwrap();
    let b = net.encode(&permuted, 0, &mask).unwrap();
    let a_perm = a.select(Axis(0), &perm);
    for (x, y) in a_perm.iter().zip(b.iter()) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn toy_parameter_count_matches_hand_expansion() {
    let mut cfg = tiny_config();
    cfg.num_layers = 1;
    cfg.num_heads = 1;
    cfg.feedforward_mult = 4;
    cfg.num_parcels = 5;
    for m in &mut cfg.modalities {
        m.input_dim = 2;
    }
    // per modality: weight 2x8 + bias 8 + norm 2x8
    let projections = 3 * (2 * 8 + 8 + 2 * 8);
    let positional = 8 * 24;
    let subjects = 2 * 24;
    let block = 2 * 24 + 4 * (24 * 24 + 24) + 2 * 24 + (24 * 96 + 96) + (96 * 24 + 24);
    let final_norm = 2 * 24;
    let readout = 2 * (24 * 5 + 5);
    let hand = projections + positional + subjects + block + final_norm + readout;
    assert_eq!(hand, 7882);
    assert_eq!(count_params(&cfg), hand);
    let net = TribeNet::<f32>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(net.num_params(), hand);
}

#[test]
fn parameter_count_scales_with_subjects_and_fusion() {
    let cfg = tiny_config();
    let base = count_params(&cfg);
    let mut doubled = cfg.clone();
    doubled.num_subjects *= 2;
    let added = cfg.num_subjects
        * (cfg.hidden_size * cfg.num_parcels + cfg.num_parcels + cfg.hidden_size);
    assert_eq!(count_params(&doubled), base + added);

    let mut avg = cfg.clone();
    avg.modality_aggregation = Fusion::Average;
    let avg = avg.with_derived_hidden();
    assert_eq!(avg.hidden_size, 8);
    assert!(count_params(&avg) < base);
    for c in [&cfg, &doubled, &avg] {
        let net = TribeNet::<f32>::init(c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(net.num_params(), count_params(c));
    }
}

#[test]
fn average_fusion_gradients_match_finite_differences() {
    let cfg = {
        let mut c = tiny_config();
        c.modality_aggregation = Fusion::Average;
        c.num_layers = 1;
        c.use_subject_embedding = false;
        c.with_derived_hidden()
    };
    let net = random_net(&cfg, 31);
    let inputs = random_inputs(&cfg, 32);
    let mask = ModalityMask::masking(&[Modality::Text]);
    let weights = Array2::from_elem((3, 4), 0.7);
    let out = net.forward_inputs(&inputs, 0, &mask, true).unwrap();
    let mut grads = vec![0.0; net.num_params()];
    net.backward(&out, weights.view(), &mut grads).unwrap();
    let mut probe = net.clone();
    for i in 0..net.num_params() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + 1e-5;
        let up = weighted_loss(&probe, &inputs, 0, &mask, &weights);
        probe.params_mut()[i] = orig - 1e-5;
        let down = weighted_loss(&probe, &inputs, 0, &mask, &weights);
        probe.params_mut()[i] = orig;
        let fd = (up - down) / 2e-5;
        let rel = (grads[i] - fd).abs() / grads[i].abs().max(fd.abs()).max(1e-6);
        assert!(rel < 1e-4, "param {i}: {} vs {fd}", grads[i]);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = tiny_config();
    let net = TribeNet::<f32>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(44)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("final");
    save_checkpoint(&net, &stem).unwrap();
    let back = load_checkpoint(&stem).unwrap();
    assert_eq!(back.config(), net.config());
    let a: Vec<u32> = net.params().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u32> = back.params().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
    let again = load_checkpoint(&dir.path().join("final.json")).unwrap();
    assert_eq!(again.params(), net.params());
}
