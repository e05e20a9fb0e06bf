use super::params::{AttentionParams, GruParams, HeadParams, RecurrentParams};
use super::ModelConfig;
use crate::ehr_model::PatientSequence;
use crate::error::{Error, Result};
use crate::num::{bce_with_logits, masked_softmax, sigmoid};

/// Intermediate values of one unmasked step, kept for BPTT.
#[derive(Debug, Clone)]
struct StepCache {
    row: usize,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    h_tilde: Vec<f64>,
}

fn cell(x: &[f64], h_prev: &[f64], p: &GruParams) -> StepCache {
    let nh = p.n_hidden();
    let mut az = p.b_z.data().to_vec();
    let mut ar = p.b_r.data().to_vec();
    let mut ah = p.b_h.data().to_vec();
    p.w_z.vecmat_acc(x, &mut az);
    p.w_r.vecmat_acc(x, &mut ar);
    p.w_h.vecmat_acc(x, &mut ah);
    p.u_z.vecmat_acc(h_prev, &mut az);
    p.u_r.vecmat_acc(h_prev, &mut ar);
    let z: Vec<f64> = az.iter().map(|&a| sigmoid(a)).collect();
    let r: Vec<f64> = ar.iter().map(|&a| sigmoid(a)).collect();
    let rh: Vec<f64> = (0..nh).map(|i| r[i] * h_prev[i]).collect();
    p.u_h.vecmat_acc(&rh, &mut ah);
    let h_tilde: Vec<f64> = ah.iter().map(|a| a.tanh()).collect();
    StepCache {
        row: 0,
        h_prev: h_prev.to_vec(),
        z,
        r,
        h_tilde,
    }
}

impl StepCache {
    fn output(&self) -> Vec<f64> {
        (0..self.z.len())
            .map(|i| (1.0 - self.z[i]) * self.h_prev[i] + self.z[i] * self.h_tilde[i])
            .collect()
    }
}

/// One GRU step: `h_t = (1−z)⊙h_prev + z⊙h̃`.
pub fn gru_cell_forward(x: &[f64], h_prev: &[f64], params: &GruParams) -> Vec<f64> {
    cell(x, h_prev, params).output()
}

/// Hidden state after every row (padding rows carry the previous state) and
/// the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStates {
    pub hiddens: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
}

struct SeqCache {
    steps: Vec<StepCache>,
    /// Hidden state after each unmasked step.
    outputs: Vec<Vec<f64>>,
    final_h: Vec<f64>,
}

fn run_sequence(seq: &PatientSequence, p: &GruParams) -> SeqCache {
    let mut h = vec![0.0; p.n_hidden()];
    let mut steps = Vec::with_capacity(seq.n_real());
    let mut outputs = Vec::with_capacity(seq.n_real());
    for row in 0..seq.n_rows() {
        if seq.mask[row] == 0 {
            continue;
        }
        let mut c = cell(seq.matrix.row(row), &h, p);
        c.row = row;
        h = c.output();
        steps.push(c);
        outputs.push(h.clone());
    }
    SeqCache {
        steps,
        outputs,
        final_h: h,
    }
}

pub fn sequence_forward(seq: &PatientSequence, params: &GruParams) -> SequenceStates {
    let cache = run_sequence(seq, params);
    let mut hiddens = Vec::with_capacity(seq.n_rows());
    let mut h = vec![0.0; params.n_hidden()];
    let mut next = cache.outputs.iter();
    for row in 0..seq.n_rows() {
        if seq.mask[row] == 1 {
            h = next.next().cloned().unwrap_or_default();
        }
        hiddens.push(h.clone());
    }
    SequenceStates {
        hiddens,
        final_state: cache.final_h,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: Vec<f64>,
    pub context: Vec<f64>,
    /// One weight per input row; masked rows get exactly 0.
    pub weights: Vec<f64>,
}

struct AttCache {
    u: Vec<f64>,
    alpha: Vec<f64>,
    v: Vec<f64>,
    out: Vec<f64>,
}

fn attend(hiddens: &[Vec<f64>], query: &[f64], att: &AttentionParams) -> AttCache {
    let nh = query.len();
    let mut u = vec![0.0; nh];
    att.w_a.vecmat_acc(query, &mut u);
    let scores: Vec<f64> = hiddens.iter().map(|h| crate::num::dot(&u, h)).collect();
    let alpha = crate::num::softmax(&scores);
    let mut v = vec![0.0; 2 * nh];
    for (a, h) in alpha.iter().zip(hiddens) {
        for i in 0..nh {
            v[i] += a * h[i];
        }
    }
    v[nh..].copy_from_slice(query);
    let mut out = att.b_c.data().to_vec();
    att.w_c.vecmat_acc(&v, &mut out);
    out.iter_mut().for_each(|o| *o = o.tanh());
    AttCache { u, alpha, v, out }
}

/// Luong "general" attention with the final state as query:
/// `score_t = h_N·W_a·h_t`, `c = Σ α_t h_t`, `out = tanh([c; h_N]·W_c + b)`.
pub fn attention_combine(hiddens: &[Vec<f64>], mask: &[u8], att: &AttentionParams) -> Result<AttentionOutput> {
    if hiddens.len() != mask.len() {
        return Err(Error::data("hidden states and mask differ in length"));
    }
    let last = mask
        .iter()
        .rposition(|&m| m == 1)
        .ok_or_else(|| Error::data("attention needs at least one unmasked day"))?;
    let query = &hiddens[last];
    let mut u = vec![0.0; query.len()];
    att.w_a.vecmat_acc(query, &mut u);
    let scores: Vec<f64> = hiddens.iter().map(|h| crate::num::dot(&u, h)).collect();
    let weights = masked_softmax(&scores, mask).expect("at least one unmasked day");
    let real: Vec<Vec<f64>> = hiddens
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m == 1)
        .map(|(h, _)| h.clone())
        .collect();
    let cache = attend(&real, query, att);
    let nh = query.len();
    Ok(AttentionOutput {
        output: cache.out,
        context: cache.v[..nh].to_vec(),
        weights,
    })
}

/// Per-horizon probabilities `σ(rep·w_k + b_k)`.
pub fn heads_forward(representation: &[f64], heads: &HeadParams) -> Vec<f64> {
    logits(representation, heads).into_iter().map(sigmoid).collect()
}

fn logits(rep: &[f64], heads: &HeadParams) -> Vec<f64> {
    let mut out = heads.b.data().to_vec();
    heads.w.vecmat_acc(rep, &mut out);
    out
}

struct PatientForward {
    seq: SeqCache,
    att: Option<AttCache>,
    /// Representation after dropout, as fed to the heads.
    rep: Vec<f64>,
    logits: Vec<f64>,
}

fn forward_patient(params: &RecurrentParams, seq: &PatientSequence, dropout: Option<&[f64]>) -> Result<PatientForward> {
    let sc = run_sequence(seq, &params.gru);
    let att = match &params.attention {
        Some(a) => {
            if sc.outputs.is_empty() {
                return Err(Error::data(format!(
                    "patient {} has no unmasked day to attend over",
                    seq.patient_id
                )));
            }
            Some(attend(&sc.outputs, &sc.final_h, a))
        }
        None => None,
    };
    let mut rep = match &att {
        Some(a) => a.out.clone(),
        None => sc.final_h.clone(),
    };
    if let Some(m) = dropout {
        rep.iter_mut().zip(m).for_each(|(r, k)| *r *= k);
    }
    let lg = logits(&rep, &params.heads);
    Ok(PatientForward {
        seq: sc,
        att,
        rep,
        logits: lg,
    })
}

fn add_row(t: &mut crate::num::Tensor2, v: &[f64]) {
    t.data_mut().iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

fn backward_patient(
    params: &RecurrentParams,
    seq: &PatientSequence,
    fwd: &PatientForward,
    dlogits: &[f64],
    dropout: Option<&[f64]>,
    grads: &mut RecurrentParams,
) {
    let nh = params.n_hidden();
    let p = &params.gru;
    grads.heads.w.add_outer(&fwd.rep, dlogits, 1.0);
    add_row(&mut grads.heads.b, dlogits);
    let mut drep = vec![0.0; nh];
    params.heads.w.matvec_acc(dlogits, &mut drep);
    if let Some(m) = dropout {
        drep.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
    }

    let n_steps = fwd.seq.steps.len();
    // gradient reaching each step's output from outside the recurrence
    let mut dh_out = vec![vec![0.0; nh]; n_steps];
    let mut dh_final = vec![0.0; nh];
    match (&params.attention, &fwd.att) {
        (Some(a), Some(c)) => {
            let ga = grads.attention.as_mut().expect("attention gradient block");
            let da: Vec<f64> = (0..nh).map(|i| drep[i] * (1.0 - c.out[i] * c.out[i])).collect();
            ga.w_c.add_outer(&c.v, &da, 1.0);
            add_row(&mut ga.b_c, &da);
            let mut dv = vec![0.0; 2 * nh];
            a.w_c.matvec_acc(&da, &mut dv);
            let dc = &dv[..nh];
            for i in 0..nh {
                dh_final[i] += dv[nh + i];
            }
            let dalpha: Vec<f64> = fwd.seq.outputs.iter().map(|h| crate::num::dot(dc, h)).collect();
            let mean: f64 = c.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
            let mut du = vec![0.0; nh];
            for t in 0..n_steps {
                let ds = c.alpha[t] * (dalpha[t] - mean);
                let h = &fwd.seq.outputs[t];
                for i in 0..nh {
                    dh_out[t][i] += c.alpha[t] * dc[i] + ds * c.u[i];
                    du[i] += ds * h[i];
                }
            }
            ga.w_a.add_outer(&fwd.seq.final_h, &du, 1.0);
            a.w_a.matvec_acc(&du, &mut dh_final);
        }
        _ => {
            for i in 0..nh {
                dh_final[i] += drep[i];
            }
        }
    }
    if n_steps == 0 {
        return;
    }
    let g = &mut grads.gru;
    let mut dh = dh_final;
    for t in (0..n_steps).rev() {
        for i in 0..nh {
            dh[i] += dh_out[t][i];
        }
        let s = &fwd.seq.steps[t];
        let x = seq.matrix.row(s.row);
        let mut daz = vec![0.0; nh];
        let mut dah = vec![0.0; nh];
        let mut dh_prev = vec![0.0; nh];
        for i in 0..nh {
            let dz = dh[i] * (s.h_tilde[i] - s.h_prev[i]);
            daz[i] = dz * s.z[i] * (1.0 - s.z[i]);
            dah[i] = dh[i] * s.z[i] * (1.0 - s.h_tilde[i] * s.h_tilde[i]);
            dh_prev[i] = dh[i] * (1.0 - s.z[i]);
        }
        let mut drh = vec![0.0; nh];
        p.u_h.matvec_acc(&dah, &mut drh);
        let mut dar = vec![0.0; nh];
        let mut rh = vec![0.0; nh];
        for i in 0..nh {
            dar[i] = drh[i] * s.h_prev[i] * s.r[i] * (1.0 - s.r[i]);
            dh_prev[i] += drh[i] * s.r[i];
            rh[i] = s.r[i] * s.h_prev[i];
        }
        p.u_z.matvec_acc(&daz, &mut dh_prev);
        p.u_r.matvec_acc(&dar, &mut dh_prev);

        g.w_z.add_outer(x, &daz, 1.0);
        g.w_r.add_outer(x, &dar, 1.0);
        g.w_h.add_outer(x, &dah, 1.0);
        g.u_z.add_outer(&s.h_prev, &daz, 1.0);
        g.u_r.add_outer(&s.h_prev, &dar, 1.0);
        g.u_h.add_outer(&rh, &dah, 1.0);
        add_row(&mut g.b_z, &daz);
        add_row(&mut g.b_r, &dar);
        add_row(&mut g.b_h, &dah);
        dh = dh_prev;
    }
}

/// Masked mean BCE over a batch and its gradient.
///
/// `targets[i]` and `masks[i]` hold one entry per model output. `dropout`
/// optionally gives a per-patient multiplier on the representation.
pub fn loss_and_grad(
    params: &RecurrentParams,
    seqs: &[&PatientSequence],
    targets: &[Vec<f64>],
    masks: &[Vec<f64>],
    dropout: Option<&[Vec<f64>]>,
) -> Result<(f64, RecurrentParams)> {
    let fwds: Vec<PatientForward> = seqs
        .iter()
        .enumerate()
        .map(|(i, s)| forward_patient(params, s, dropout.map(|d| d[i].as_slice())))
        .collect::<Result<_>>()?;
    let all_logits: Vec<f64> = fwds.iter().flat_map(|f| f.logits.iter().copied()).collect();
    let y: Vec<f64> = targets.concat();
    let m: Vec<f64> = masks.concat();
    let (loss, dl) = bce_with_logits(&all_logits, &y, &m)?;
    let mut grads = params.zeros_like();
    let k = params.n_outputs();
    for (i, f) in fwds.iter().enumerate() {
        let d = &dl[i * k..(i + 1) * k];
        if d.iter().all(|v| *v == 0.0) {
            continue;
        }
        backward_patient(params, seqs[i], f, d, dropout.map(|d| d[i].as_slice()), &mut grads);
    }
    Ok((loss, grads))
}

/// Loss only, without the backward pass.
pub(crate) fn batch_loss(
    params: &RecurrentParams,
    seqs: &[&PatientSequence],
    targets: &[Vec<f64>],
    masks: &[Vec<f64>],
) -> Result<f64> {
    let mut all = Vec::with_capacity(seqs.len() * params.n_outputs());
    for s in seqs {
        all.extend(forward_patient(params, s, None)?.logits);
    }
    Ok(bce_with_logits(&all, &targets.concat(), &masks.concat())?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    /// `(day, weight)` for each unmasked day, attention variant only.
    pub attention: Option<Vec<(i64, f64)>>,
}

pub fn predict(params: &RecurrentParams, cfg: &ModelConfig, seq: &PatientSequence) -> Result<Prediction> {
    if seq.n_features() != params.n_features() {
        return Err(Error::data(format!(
            "sequence has {} features, checkpoint expects {}",
            seq.n_features(),
            params.n_features()
        )));
    }
    if params.attention.is_some() != cfg.variant.has_attention() || params.n_outputs() != cfg.n_outputs() {
        return Err(Error::data("parameters do not match the model configuration"));
    }
    let f = forward_patient(params, seq, None)?;
    let attention = f.att.as_ref().map(|a| {
        let real_days = &seq.days[seq.days.len() - a.alpha.len()..];
        real_days.iter().copied().zip(a.alpha.iter().copied()).collect()
    });
    Ok(Prediction {
        probabilities: f.logits.iter().map(|&l| sigmoid(l)).collect(),
        attention,
    })
}
