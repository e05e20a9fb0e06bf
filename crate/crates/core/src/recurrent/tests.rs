use rand::Rng;

use super::*;
use crate::ehr_model::PatientSequence;
use crate::num::{grad_check, write_checkpoint, Checkpoint, Parameterized, Tensor2};
use crate::rng::{rng_from, ChaCha8Rng};

fn random_params(nf: usize, nh: usize, nt: usize, att: bool, rng: &mut ChaCha8Rng) -> RecurrentParams {
    let mut p = RecurrentParams::zeros(nf, nh, nt, att);
    for (_, t) in p.blocks_mut() {
        for v in t.data_mut() {
            *v = rng.gen_range(-0.8..0.8);
        }
    }
    p
}

fn random_seq(id: &str, days: usize, pad: usize, nf: usize, rng: &mut ChaCha8Rng) -> PatientSequence {
    let rows = days + pad;
    let mut m = Tensor2::zeros(rows, nf);
    for r in pad..rows {
        for j in 0..nf {
            m.set(r, j, rng.gen());
        }
    }
    PatientSequence {
        patient_id: id.into(),
        days: (0..days as i64).map(|d| 10 + 3 * d).collect(),
        matrix: m,
        mask: (0..rows).map(|r| u8::from(r >= pad)).collect(),
    }
}

/// Same real rows behind a different amount of zero padding.
fn repad(seq: &PatientSequence, pad: usize) -> PatientSequence {
    let first = seq.first_real_row();
    let nf = seq.n_features();
    let real = seq.n_rows() - first;
    let mut m = Tensor2::zeros(real + pad, nf);
    for r in 0..real {
        m.row_mut(pad + r).copy_from_slice(seq.matrix.row(first + r));
    }
    PatientSequence {
        patient_id: seq.patient_id.clone(),
        days: seq.days.clone(),
        matrix: m,
        mask: (0..real + pad).map(|r| u8::from(r >= pad)).collect(),
    }
}

#[test]
fn cell_zero_params_give_zero_state() {
    let p = GruParams::zeros(3, 2);
    assert_eq!(gru_cell_forward(&[0.3, 0.1, 0.9], &[0.0, 0.0], &p), vec![0.0, 0.0]);
}

#[test]
fn saturated_update_gate_carries_state() {
    let mut rng = rng_from(1);
    let mut p = random_params(3, 2, 1, false, &mut rng).gru;
    p.b_z.fill(-1000.0);
    let h = [0.4, -0.7];
    let out = gru_cell_forward(&[5.0, -3.0, 1.0], &h, &p);
    for (a, b) in out.iter().zip(&h) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn cell_matches_scalar_oracle() {
    let mut rng = rng_from(2);
    for _ in 0..50 {
        let p = random_params(3, 2, 1, false, &mut rng).gru;
        let x: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
        let h: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.9..0.9)).collect();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut expect = [0.0; 2];
        let mut r = [0.0; 2];
        let mut z = [0.0; 2];
        for k in 0..2 {
            let mut az = p.b_z.get(0, k);
            let mut ar = p.b_r.get(0, k);
            for i in 0..3 {
                az += x[i] * p.w_z.get(i, k);
                ar += x[i] * p.w_r.get(i, k);
            }
            for i in 0..2 {
                az += h[i] * p.u_z.get(i, k);
                ar += h[i] * p.u_r.get(i, k);
            }
            z[k] = sig(az);
            r[k] = sig(ar);
        }
        for k in 0..2 {
            let mut ah = p.b_h.get(0, k);
            for i in 0..3 {
                ah += x[i] * p.w_h.get(i, k);
            }
            for i in 0..2 {
                ah += r[i] * h[i] * p.u_h.get(i, k);
            }
            expect[k] = (1.0 - z[k]) * h[k] + z[k] * ah.tanh();
        }
        let got = gru_cell_forward(&x, &h, &p);
        for k in 0..2 {
            assert!((got[k] - expect[k]).abs() < 1e-12);
            assert!(got[k].abs() < 1.0);
        }
    }
}

#[test]
fn sequence_masking_rules() {
    let mut rng = rng_from(3);
    let p = random_params(4, 3, 1, false, &mut rng).gru;
    let mut empty = random_seq("a", 0, 5, 4, &mut rng);
    empty.days.clear();
    assert_eq!(sequence_forward(&empty, &p).final_state, vec![0.0; 3]);

    let one = random_seq("b", 1, 6, 4, &mut rng);
    let direct = gru_cell_forward(one.matrix.row(6), &[0.0; 3], &p);
    assert_eq!(sequence_forward(&one, &p).final_state, direct);

    let s = random_seq("c", 5, 0, 4, &mut rng);
    let a = sequence_forward(&s, &p).final_state;
    let b = sequence_forward(&repad(&s, 10), &p).final_state;
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
    let states = sequence_forward(&repad(&s, 2), &p);
    assert_eq!(states.hiddens.len(), 7);
    assert_eq!(states.hiddens[0], vec![0.0; 3]);
}

#[test]
fn attention_examples() {
    let mut rng = rng_from(4);
    let att = random_params(2, 2, 1, true, &mut rng).attention.unwrap();
    let h = vec![vec![0.0, 0.0], vec![0.3, -0.2]];
    let single = attention_combine(&h, &[0, 1], &att).unwrap();
    assert_eq!(single.weights, vec![0.0, 1.0]);
    assert_eq!(single.context, h[1]);

    let same = vec![vec![0.2, 0.5]; 4];
    let uni = attention_combine(&same, &[0, 1, 1, 1], &att).unwrap();
    for w in &uni.weights[1..] {
        assert!((w - 1.0 / 3.0).abs() < 1e-15);
    }
    assert_eq!(uni.weights[0], 0.0);

    let mut one = AttentionParams {
        w_a: Tensor2::from_vec(1, 1, vec![2.0 * 2f64.ln()]).unwrap(),
        w_c: Tensor2::zeros(2, 1),
        b_c: Tensor2::zeros(1, 1),
    };
    let hs = vec![vec![0.0], vec![0.5], vec![1.0]];
    let w = attention_combine(&hs, &[1, 1, 1], &one).unwrap().weights;
    for (a, b) in w.iter().zip([1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]) {
        assert!((a - b).abs() < 1e-12);
    }
    one.w_c.fill(1.0);
    assert!(attention_combine(&hs, &[0, 0, 0], &one).is_err());
}

#[test]
fn heads_examples() {
    let zero = HeadParams {
        w: Tensor2::zeros(3, 4),
        b: Tensor2::zeros(1, 4),
    };
    assert_eq!(heads_forward(&[0.3, -0.1, 0.9], &zero), vec![0.5; 4]);
    let same = HeadParams {
        w: Tensor2::from_vec(2, 4, vec![0.3, 0.3, 0.3, 0.3, -1.0, -1.0, -1.0, -1.0]).unwrap(),
        b: Tensor2::row_vector(vec![0.2; 4]),
    };
    let p = heads_forward(&[0.5, 0.25], &same);
    assert_eq!(p.len(), 4);
    assert!(p.iter().all(|v| *v == p[0] && *v > 0.0 && *v < 1.0));
}

fn check_gradients(att: bool, nt: usize, dropout: bool) -> f64 {
    let mut rng = rng_from(5 + nt as u64 + att as u64);
    let nf = 3;
    let p = random_params(nf, 2, nt, att, &mut rng);
    let seqs = [random_seq("a", 3, 0, nf, &mut rng),
        random_seq("b", 2, 1, nf, &mut rng),
        random_seq("c", 3, 2, nf, &mut rng)];
    let refs: Vec<&PatientSequence> = seqs.iter().collect();
    let targets: Vec<Vec<f64>> = (0..3).map(|i| (0..nt).map(|k| ((i + k) % 2) as f64).collect()).collect();
    let masks: Vec<Vec<f64>> = (0..3).map(|i| (0..nt).map(|k| if i == 1 && k == nt - 1 { 0.0 } else { 1.0 }).collect()).collect();
    let drop: Option<Vec<Vec<f64>>> = dropout.then(|| vec![vec![2.0, 0.0], vec![0.0, 2.0], vec![2.0, 2.0]]);
    let report = grad_check(
        &p,
        |q| loss_and_grad(q, &refs, &targets, &masks, drop.as_deref()).unwrap().0,
        |q| loss_and_grad(q, &refs, &targets, &masks, drop.as_deref()).unwrap().1,
        1e-5,
    );
    report.max_rel_err
}

#[test]
fn gru_gradients_match_finite_differences() {
    let e = check_gradients(false, 1, false);
    assert!(e < 1e-5, "{e}");
}

#[test]
fn mt_gru_gradients_match_finite_differences() {
    let e = check_gradients(false, 4, false);
    assert!(e < 1e-5, "{e}");
    let e = check_gradients(false, 4, true);
    assert!(e < 1e-5, "{e}");
}

#[test]
fn mt_att_gru_gradients_match_finite_differences() {
    let e = check_gradients(true, 4, false);
    assert!(e < 1e-4, "{e}");
    let e = check_gradients(true, 4, true);
    assert!(e < 1e-4, "{e}");
}

#[test]
fn single_head_multi_task_equals_single_task() {
    let mut rng = rng_from(6);
    let p = random_params(3, 4, 1, false, &mut rng);
    let data: Vec<LabeledSequence> = (0..6)
        .map(|i| LabeledSequence {
            seq: random_seq(&i.to_string(), 1 + i % 3, 2, 3, &mut rng),
            labels: vec![(i % 2) as u8],
            label_mask: vec![1],
        })
        .collect();
    let gru = ModelConfig {
        variant: Variant::Gru,
        target_horizon: 0,
        n_horizons: 1,
        ..Default::default()
    };
    let mt = ModelConfig {
        variant: Variant::MtGru,
        n_horizons: 1,
        ..Default::default()
    };
    let seqs: Vec<&PatientSequence> = data.iter().map(|d| &d.seq).collect();
    let loss = |cfg: &ModelConfig| {
        let (t, m): (Vec<_>, Vec<_>) = data.iter().map(|d| cfg.targets(&d.labels, &d.label_mask)).unzip();
        loss_and_grad(&p, &seqs, &t, &m, None).unwrap().0
    };
    assert_eq!(loss(&gru).to_bits(), loss(&mt).to_bits());
}

fn toy_data(n: usize, seed: u64, all_zero: bool) -> Vec<LabeledSequence> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|i| {
            let days = 1 + i % 5;
            let seq = random_seq(&format!("p{i}"), days, 6 - days, 4, &mut rng);
            let signal = seq.matrix.row(5)[0];
            let y = u8::from(!all_zero && signal > 0.5);
            LabeledSequence {
                seq,
                labels: vec![y; 4],
                label_mask: vec![1; 4],
            }
        })
        .collect()
}

fn small_cfg(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        n_hidden: 4,
        n_days_pad: 6,
        learning_rate: 0.05,
        epochs: 30,
        batch_size: 8,
        target_horizon: 3,
        n_horizons: 4,
        dropout: 0.0,
        patience: 10,
        seed: 11,
    }
}

#[test]
fn all_negative_labels_collapse_to_low_probability() {
    let data = toy_data(40, 7, true);
    let out = train(&data, &[], &small_cfg(Variant::MtGru)).unwrap();
    for d in &data {
        let pred = predict(&out.params, &small_cfg(Variant::MtGru), &d.seq).unwrap();
        assert!(pred.probabilities.iter().all(|p| *p < 0.1));
    }
}

#[test]
fn seeded_training_is_bitwise_reproducible() {
    let data = toy_data(30, 8, false);
    let cfg = ModelConfig {
        dropout: 0.2,
        epochs: 5,
        ..small_cfg(Variant::MtAttGru)
    };
    let bytes = |o: &TrainOutput| {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &Checkpoint::from_params(&o.params)).unwrap();
        buf
    };
    let a = train(&data[..20], &data[20..], &cfg).unwrap();
    let b = train(&data[..20], &data[20..], &cfg).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_eq!(a.best_epoch, b.best_epoch);
    assert!(a.log.iter().all(|e| e.train_loss.is_finite() && e.val_loss.is_finite()));
}

#[test]
fn training_learns_a_simple_signal() {
    let data = toy_data(120, 9, false);
    let cfg = small_cfg(Variant::Gru);
    let out = train(&data[..90], &data[90..], &cfg).unwrap();
    let scores: Vec<f64> = data[90..]
        .iter()
        .map(|d| predict(&out.params, &cfg, &d.seq).unwrap().probabilities[0])
        .collect();
    let labels: Vec<u8> = data[90..].iter().map(|d| d.labels[3]).collect();
    let auc = crate::evaluator::roc_auc(&scores, &labels).unwrap();
    assert!(auc > 0.8, "{auc}");
}

#[test]
fn predictions_ignore_padding_and_attention_is_a_distribution() {
    let mut rng = rng_from(10);
    let cfg = small_cfg(Variant::MtAttGru);
    let p = RecurrentParams::init(4, &cfg);
    for i in 0..20 {
        let s = random_seq("x", 1 + i % 6, 0, 4, &mut rng);
        let a = predict(&p, &cfg, &s).unwrap();
        let b = predict(&p, &cfg, &repad(&s, 7)).unwrap();
        for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
            assert!((x - y).abs() < 1e-12);
        }
        let w = b.attention.unwrap();
        assert_eq!(w.len(), s.days.len());
        assert_eq!(w.iter().map(|(d, _)| *d).collect::<Vec<_>>(), s.days);
        assert!(w.iter().all(|(_, v)| *v >= 0.0));
        assert!((w.iter().map(|(_, v)| v).sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let one = random_seq("y", 1, 3, 4, &mut rng);
    let w = predict(&p, &cfg, &one).unwrap().attention.unwrap();
    assert_eq!(w, vec![(10, 1.0)]);
    let gru_cfg = small_cfg(Variant::Gru);
    let single = RecurrentParams::init(4, &gru_cfg);
    assert_eq!(predict(&single, &gru_cfg, &one).unwrap().probabilities.len(), 1);
    assert!(predict(&single, &gru_cfg, &random_seq("z", 2, 0, 5, &mut rng)).is_err());
}

#[test]
fn divergence_reports_last_good_checkpoint() {
    let mut data = toy_data(10, 12, false);
    data[3].seq.matrix.set(5, 0, f64::INFINITY);
    let err = train(&data, &[], &small_cfg(Variant::MtGru)).unwrap_err();
    match err {
        crate::Error::Diverged { epoch, last_good } => {
            assert_eq!(epoch, 1);
            assert!(!last_good.blocks.is_empty());
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn config_validation() {
    assert!(ModelConfig::default().validate().is_ok());
    assert!(ModelConfig { n_hidden: 0, ..Default::default() }.validate().is_err());
    assert!(ModelConfig { variant: Variant::Gru, target_horizon: 4, ..Default::default() }.validate().is_err());
    assert_eq!("mt_att_gru".parse::<Variant>().unwrap(), Variant::MtAttGru);
    assert!("lstm".parse::<Variant>().is_err());
}
