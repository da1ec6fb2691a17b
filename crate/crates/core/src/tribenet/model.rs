use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::{Fusion, NetConfig};
use super::ops::{
    adaptive_avg_pool, adaptive_avg_pool_backward, c, gelu, gelu_backward, layer_norm,
    layer_norm_backward, linear, linear_backward, softmax_rows, LnCache,
};
use super::params::{ParamId, ParamLayout};
use super::Real;
use crate::alignment::AlignedWindow;
use crate::datastore::Modality;
use crate::error::{Result, TribeError};

/// Which modalities are zeroed at the input. `true` means masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ModalityMask {
    masked: [bool; 3],
}

impl ModalityMask {
    pub fn none() -> Self {
        Self::default()
    }

    /// Every modality except `keep` is masked.
    pub fn only(keep: Modality) -> Self {
        let mut masked = [true; 3];
        masked[keep.index()] = false;
        ModalityMask { masked }
    }

    pub fn masking(modalities: &[Modality]) -> Self {
        let mut mask = Self::none();
        for &m in modalities {
            mask.set(m, true);
        }
        mask
    }

    pub fn is_masked(&self, m: Modality) -> bool {
        self.masked[m.index()]
    }

    pub fn set(&mut self, m: Modality, masked: bool) {
        self.masked[m.index()] = masked;
    }

    /// At least one of `active` must remain unmasked.
    pub fn validate_for(&self, active: &[Modality]) -> Result<()> {
        if active.iter().all(|&m| self.is_masked(m)) {
            Err(TribeError::AllMasked)
        } else {
            Ok(())
        }
    }

    pub fn label(&self) -> String {
        let masked: Vec<&str> = Modality::ALL
            .iter()
            .filter(|&&m| self.is_masked(m))
            .map(|m| m.name())
            .collect();
        if masked.is_empty() {
            "none".to_string()
        } else {
            masked.join("+")
        }
    }
}

#[derive(Debug, Clone)]
struct ProjIds {
    weight: ParamId,
    bias: ParamId,
    gain: ParamId,
    beta: ParamId,
}

#[derive(Debug, Clone)]
struct BlockIds {
    ln1_g: ParamId,
    ln1_b: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone)]
struct NetIds {
    proj: Vec<ProjIds>,
    pos: ParamId,
    subject: Option<ParamId>,
    blocks: Vec<BlockIds>,
    final_norm: Option<(ParamId, ParamId)>,
    readout_w: ParamId,
    readout_b: ParamId,
}

fn build_layout(cfg: &NetConfig) -> (ParamLayout, NetIds) {
    let mut l = ParamLayout::default();
    let d = cfg.proj_dim;
    let h = cfg.hidden_size;
    let ff = cfg.ff_width();
    let proj = cfg
        .modalities
        .iter()
        .map(|m| {
            let n = m.modality.name();
            ProjIds {
                weight: l.push(format!("proj.{n}.weight"), &[m.input_dim, d]),
                bias: l.push(format!("proj.{n}.bias"), &[d]),
                gain: l.push(format!("proj.{n}.norm.gain"), &[d]),
                beta: l.push(format!("proj.{n}.norm.bias"), &[d]),
            }
        })
        .collect();
    let pos = l.push("pos_embedding", &[cfg.feature_steps(), h]);
    let subject = cfg
        .use_subject_embedding
        .then(|| l.push("subject_embedding", &[cfg.num_subjects, h]));
    let blocks = (0..cfg.num_layers)
        .map(|i| BlockIds {
            ln1_g: l.push(format!("blocks.{i}.attn_norm.gain"), &[h]),
            ln1_b: l.push(format!("blocks.{i}.attn_norm.bias"), &[h]),
            wq: l.push(format!("blocks.{i}.attn.q.weight"), &[h, h]),
            bq: l.push(format!("blocks.{i}.attn.q.bias"), &[h]),
            wk: l.push(format!("blocks.{i}.attn.k.weight"), &[h, h]),
            bk: l.push(format!("blocks.{i}.attn.k.bias"), &[h]),
            wv: l.push(format!("blocks.{i}.attn.v.weight"), &[h, h]),
            bv: l.push(format!("blocks.{i}.attn.v.bias"), &[h]),
            wo: l.push(format!("blocks.{i}.attn.out.weight"), &[h, h]),
            bo: l.push(format!("blocks.{i}.attn.out.bias"), &[h]),
            ln2_g: l.push(format!("blocks.{i}.ff_norm.gain"), &[h]),
            ln2_b: l.push(format!("blocks.{i}.ff_norm.bias"), &[h]),
            w1: l.push(format!("blocks.{i}.ff.in.weight"), &[h, ff]),
            b1: l.push(format!("blocks.{i}.ff.in.bias"), &[ff]),
            w2: l.push(format!("blocks.{i}.ff.out.weight"), &[ff, h]),
            b2: l.push(format!("blocks.{i}.ff.out.bias"), &[h]),
        })
        .collect();
    let final_norm = (cfg.num_layers > 0).then(|| {
        (
            l.push("final_norm.gain", &[h]),
            l.push("final_norm.bias", &[h]),
        )
    });
    let readout_w = l.push("readout.weight", &[cfg.num_subjects, h, cfg.num_parcels]);
    let readout_b = l.push("readout.bias", &[cfg.num_subjects, cfg.num_parcels]);
    (
        l,
        NetIds {
            proj,
            pos,
            subject,
            blocks,
            final_norm,
            readout_w,
            readout_b,
        },
    )
}

/// The encoder: per-modality projection and normalization, fusion,
/// positional and subject embeddings, pre-norm transformer, adaptive pooling
/// to the TR grid and a per-subject linear readout.
#[derive(Debug, Clone)]
pub struct TribeNet<T> {
    config: NetConfig,
    layout: Arc<ParamLayout>,
    ids: Arc<NetIds>,
    params: Vec<T>,
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    ln1: LnCache<T>,
    u1: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    attn: Array2<T>,
    ln2: LnCache<T>,
    u2: Array2<T>,
    hpre: Array2<T>,
    hact: Array2<T>,
}

/// Activations kept by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    subject: usize,
    inputs: Vec<Array2<T>>,
    proj_ln: Vec<LnCache<T>>,
    blocks: Vec<BlockCache<T>>,
    final_ln: Option<LnCache<T>>,
    encoded: Array2<T>,
    pooled: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// `[N, P]`
    pub output: Array2<T>,
    pub cache: Option<ForwardCache<T>>,
}

impl<T: Real> TribeNet<T> {
    /// Projections and readouts ~ U(±1/√fan_in), subject embeddings
    /// ~ N(0, 0.02²), positional embeddings sinusoidal plus N(0, 0.02²),
    /// normalization gains 1, biases 0. The output projection of each
    /// attention and feedforward sublayer starts at zero, so every block is
    /// the identity at initialization.
    pub fn init(config: &NetConfig, rng: &mut impl Rng) -> Result<TribeNet<T>> {
        config.validate()?;
        let (layout, ids) = build_layout(config);
        let mut params = vec![T::zero(); layout.total];
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        let fill_uniform = |params: &mut [T], id: ParamId, fan_in: usize, rng: &mut dyn rand::RngCore| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
            for v in &mut params[layout.range(id)] {
                *v = c(dist.sample(rng));
            }
        };
        for (p, m) in ids.proj.iter().zip(&config.modalities) {
            fill_uniform(&mut params, p.weight, m.input_dim, rng);
            params[layout.range(p.gain)].fill(T::one());
        }
        let h = config.hidden_size;
        for b in &ids.blocks {
            params[layout.range(b.ln1_g)].fill(T::one());
            params[layout.range(b.ln2_g)].fill(T::one());
            fill_uniform(&mut params, b.wq, h, rng);
            fill_uniform(&mut params, b.wk, h, rng);
            fill_uniform(&mut params, b.wv, h, rng);
            fill_uniform(&mut params, b.w1, h, rng);
        }
        if let Some((g, _)) = ids.final_norm {
            params[layout.range(g)].fill(T::one());
        }
        fill_uniform(&mut params, ids.readout_w, h, rng);
        let f = config.feature_steps();
        for (i, v) in params[layout.range(ids.pos)].iter_mut().enumerate() {
            let (t, j) = ((i / h) as f64, i % h);
            let freq = 10000f64.powf(-((j / 2 * 2) as f64) / h as f64);
            let angle = t * freq;
            let base = if j % 2 == 0 { angle.sin() } else { angle.cos() };
            *v = c(base + normal.sample(rng));
        }
        debug_assert_eq!(layout.range(ids.pos).len(), f * h);
        if let Some(id) = ids.subject {
            for v in &mut params[layout.range(id)] {
                *v = c(normal.sample(rng));
            }
        }
        Ok(TribeNet {
            config: config.clone(),
            layout: Arc::new(layout),
            ids: Arc::new(ids),
            params,
        })
    }

    /// Rebuilds a network from a flat parameter vector laid out for `config`.
    pub fn from_params(config: &NetConfig, params: Vec<T>) -> Result<TribeNet<T>> {
        config.validate()?;
        let (layout, ids) = build_layout(config);
        if params.len() != layout.total {
            return Err(TribeError::Checkpoint(format!(
                "{} parameters supplied, architecture needs {}",
                params.len(),
                layout.total
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(TribeError::Checkpoint("non-finite parameter".into()));
        }
        Ok(TribeNet {
            config: config.clone(),
            layout: Arc::new(layout),
            ids: Arc::new(ids),
            params,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn cast<U: Real>(&self) -> TribeNet<U> {
        TribeNet {
            config: self.config.clone(),
            layout: self.layout.clone(),
            ids: self.ids.clone(),
            params: self
                .params
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }

    pub fn forward(
        &self,
        window: &AlignedWindow,
        mask: &ModalityMask,
        train_mode: bool,
    ) -> Result<ForwardOutput<T>> {
        self.forward_inputs(&window.inputs, window.subject_index, mask, train_mode)
    }

    /// Transformer output before pooling, `[F, H]`.
    pub fn encode(
        &self,
        inputs: &BTreeMap<Modality, Array2<f32>>,
        subject: usize,
        mask: &ModalityMask,
    ) -> Result<Array2<T>> {
        let out = self.forward_inputs(inputs, subject, mask, true)?;
        Ok(out.cache.expect("train mode keeps cache").encoded)
    }

    pub fn forward_inputs(
        &self,
        inputs: &BTreeMap<Modality, Array2<f32>>,
        subject: usize,
        mask: &ModalityMask,
        train_mode: bool,
    ) -> Result<ForwardOutput<T>> {
        let cfg = &self.config;
        let l = &*self.layout;
        let p = &self.params;
        let ids = &*self.ids;
        let f = cfg.feature_steps();
        let h = cfg.hidden_size;
        let d = cfg.proj_dim;
        if subject >= cfg.num_subjects {
            return Err(TribeError::Shape(format!(
                "subject index {subject} out of range for {} subjects",
                cfg.num_subjects
            )));
        }
        mask.validate_for(&cfg.active_modalities())?;

        let mut masked_inputs = Vec::with_capacity(cfg.modalities.len());
        let mut proj_ln = Vec::with_capacity(cfg.modalities.len());
        let mut fused = Array2::<T>::zeros((f, h));
        let num_mod: T = c(cfg.modalities.len() as f64);
        for (j, (m, pid)) in cfg.modalities.iter().zip(&ids.proj).enumerate() {
            let raw = inputs.get(&m.modality).ok_or_else(|| {
                TribeError::Shape(format!("window lacks modality {}", m.modality))
            })?;
            if raw.dim() != (f, m.input_dim) {
                return Err(TribeError::Shape(format!(
                    "modality {}: input {:?}, expected ({f}, {})",
                    m.modality,
                    raw.dim(),
                    m.input_dim
                )));
            }
            let x: Array2<T> = if mask.is_masked(m.modality) {
                Array2::zeros((f, m.input_dim))
            } else {
                raw.mapv(|v| T::from_f32(v).unwrap())
            };
            let a = linear(x.view(), l.view2(p, pid.weight), l.view1(p, pid.bias));
            let (y, cache) = layer_norm(a.view(), l.view1(p, pid.gain), l.view1(p, pid.beta));
            match cfg.modality_aggregation {
                Fusion::Concatenate => fused.slice_mut(s![.., j * d..(j + 1) * d]).assign(&y),
                Fusion::Average => fused.scaled_add(T::one() / num_mod, &y),
            }
            masked_inputs.push(x);
            proj_ln.push(cache);
        }

        let mut z = fused;
        z += &l.view2(p, ids.pos);
        if let Some(sid) = ids.subject {
            z += &l.view2(p, sid).row(subject);
        }

        let heads = cfg.num_heads.max(1);
        let dh = h / heads;
        let scale: T = c(1.0 / (dh as f64).sqrt());
        let mut blocks = Vec::with_capacity(ids.blocks.len());
        for b in &ids.blocks {
            let (u1, ln1) = layer_norm(z.view(), l.view1(p, b.ln1_g), l.view1(p, b.ln1_b));
            let q = linear(u1.view(), l.view2(p, b.wq), l.view1(p, b.bq));
            let k = linear(u1.view(), l.view2(p, b.wk), l.view1(p, b.bk));
            let v = linear(u1.view(), l.view2(p, b.wv), l.view1(p, b.bv));
            let mut attn = Array2::<T>::zeros((f, h));
            let mut probs = Vec::with_capacity(heads);
            for hd in 0..heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t());
                scores *= scale;
                softmax_rows(&mut scores);
                attn.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
                probs.push(scores);
            }
            z += &linear(attn.view(), l.view2(p, b.wo), l.view1(p, b.bo));
            let (u2, ln2) = layer_norm(z.view(), l.view1(p, b.ln2_g), l.view1(p, b.ln2_b));
            let hpre = linear(u2.view(), l.view2(p, b.w1), l.view1(p, b.b1));
            let hact = gelu(&hpre);
            z += &linear(hact.view(), l.view2(p, b.w2), l.view1(p, b.b2));
            blocks.push(BlockCache {
                ln1,
                u1,
                q,
                k,
                v,
                probs,
                attn,
                ln2,
                u2,
                hpre,
                hact,
            });
        }

        let (encoded, final_ln) = match ids.final_norm {
            Some((g, bb)) => {
                let (y, cache) = layer_norm(z.view(), l.view1(p, g), l.view1(p, bb));
                (y, Some(cache))
            }
            None => (z, None),
        };
        let pooled = adaptive_avg_pool(encoded.view(), cfg.window.trs_per_window)?;
        let rw = l.view3(p, ids.readout_w);
        let rb = l.view2(p, ids.readout_b);
        let mut output = pooled.dot(&rw.index_axis(Axis(0), subject));
        output += &rb.row(subject);

        if output.iter().any(|v| !v.is_finite()) {
            return Err(TribeError::Shape("non-finite network output".into()));
        }
        let cache = train_mode.then(|| ForwardCache {
            subject,
            inputs: masked_inputs,
            proj_ln,
            blocks,
            final_ln,
            encoded,
            pooled,
        });
        Ok(ForwardOutput { output, cache })
    }

    /// Accumulates parameter gradients for `out` into `grads` (laid out like
    /// [`TribeNet::params`]).
    pub fn backward(
        &self,
        out: &ForwardOutput<T>,
        d_output: ArrayView2<T>,
        grads: &mut [T],
    ) -> Result<()> {
        let cache = out.cache.as_ref().ok_or(TribeError::MissingCache)?;
        let cfg = &self.config;
        let l = &*self.layout;
        let p = &self.params;
        let ids = &*self.ids;
        if grads.len() != p.len() {
            return Err(TribeError::Shape(format!(
                "gradient buffer of {} for {} parameters",
                grads.len(),
                p.len()
            )));
        }
        if d_output.dim() != out.output.dim() {
            return Err(TribeError::Shape(format!(
                "output gradient {:?} vs output {:?}",
                d_output.dim(),
                out.output.dim()
            )));
        }
        let f = cfg.feature_steps();
        let h = cfg.hidden_size;
        let d = cfg.proj_dim;
        let s_idx = cache.subject;
        let np = cfg.num_parcels;

        // readout, subject s only
        let rw = l.view3(p, ids.readout_w);
        let w_s = rw.index_axis(Axis(0), s_idx);
        let dw_s = cache.pooled.t().dot(&d_output);
        let db_s = d_output.sum_axis(Axis(0));
        let off = l.spec(ids.readout_w).offset + s_idx * h * np;
        add_at(grads, off, dw_s.iter());
        let off = l.spec(ids.readout_b).offset + s_idx * np;
        add_at(grads, off, db_s.iter());
        let d_pooled = d_output.dot(&w_s.t());

        let d_encoded = adaptive_avg_pool_backward(d_pooled.view(), f);
        let mut dz = match (ids.final_norm, &cache.final_ln) {
            (Some((g, bb)), Some(ln)) => {
                let (dx, dg, db) = layer_norm_backward(d_encoded.view(), ln, l.view1(p, g));
                add_param(grads, l, g, dg.iter());
                add_param(grads, l, bb, db.iter());
                dx
            }
            _ => d_encoded,
        };

        let heads = cfg.num_heads.max(1);
        let dh = h / heads;
        let scale: T = c(1.0 / (dh as f64).sqrt());
        for (b, bc) in ids.blocks.iter().zip(&cache.blocks).rev() {
            // feedforward sublayer
            let (d_hact, dw2, db2) =
                linear_backward(bc.hact.view(), l.view2(p, b.w2), dz.view(), true);
            add_param(grads, l, b.w2, dw2.iter());
            add_param(grads, l, b.b2, db2.iter());
            let d_hpre = gelu_backward(&bc.hpre, &d_hact.unwrap());
            let (d_u2, dw1, db1) = linear_backward(bc.u2.view(), l.view2(p, b.w1), d_hpre.view(), true);
            add_param(grads, l, b.w1, dw1.iter());
            add_param(grads, l, b.b1, db1.iter());
            let (dx, dg, dbb) = layer_norm_backward(d_u2.unwrap().view(), &bc.ln2, l.view1(p, b.ln2_g));
            add_param(grads, l, b.ln2_g, dg.iter());
            add_param(grads, l, b.ln2_b, dbb.iter());
            dz += &dx;

            // attention sublayer
            let (d_attn, dwo, dbo) =
                linear_backward(bc.attn.view(), l.view2(p, b.wo), dz.view(), true);
            add_param(grads, l, b.wo, dwo.iter());
            add_param(grads, l, b.bo, dbo.iter());
            let d_attn = d_attn.unwrap();
            let mut dq = Array2::<T>::zeros((f, h));
            let mut dk = Array2::<T>::zeros((f, h));
            let mut dv = Array2::<T>::zeros((f, h));
            for hd in 0..heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let probs = &bc.probs[hd];
                let d_o = d_attn.slice(cols);
                let d_probs = d_o.dot(&bc.v.slice(cols).t());
                dv.slice_mut(cols).assign(&probs.t().dot(&d_o));
                let mut d_scores = d_probs;
                for (mut ds, pr) in d_scores.outer_iter_mut().zip(probs.outer_iter()) {
                    let dot = ds.iter().zip(pr.iter()).fold(T::zero(), |a, (&x, &y)| a + x * y);
                    ndarray::Zip::from(&mut ds)
                        .and(&pr)
                        .for_each(|g, &pv| *g = pv * (*g - dot) * scale);
                }
                dq.slice_mut(cols).assign(&d_scores.dot(&bc.k.slice(cols)));
                dk.slice_mut(cols).assign(&d_scores.t().dot(&bc.q.slice(cols)));
            }
            let u1 = bc.u1.view();
            let (dxq, dwq, dbq) = linear_backward(u1, l.view2(p, b.wq), dq.view(), true);
            let (dxk, dwk, dbk) = linear_backward(u1, l.view2(p, b.wk), dk.view(), true);
            let (dxv, dwv, dbv) = linear_backward(u1, l.view2(p, b.wv), dv.view(), true);
            add_param(grads, l, b.wq, dwq.iter());
            add_param(grads, l, b.bq, dbq.iter());
            add_param(grads, l, b.wk, dwk.iter());
            add_param(grads, l, b.bk, dbk.iter());
            add_param(grads, l, b.wv, dwv.iter());
            add_param(grads, l, b.bv, dbv.iter());
            let mut d_u1 = dxq.unwrap();
            d_u1 += &dxk.unwrap();
            d_u1 += &dxv.unwrap();
            let (dx, dg, dbb) = layer_norm_backward(d_u1.view(), &bc.ln1, l.view1(p, b.ln1_g));
            add_param(grads, l, b.ln1_g, dg.iter());
            add_param(grads, l, b.ln1_b, dbb.iter());
            dz += &dx;
        }

        add_param(grads, l, ids.pos, dz.iter());
        if let Some(sid) = ids.subject {
            let row: Array1<T> = dz.sum_axis(Axis(0));
            add_at(grads, l.spec(sid).offset + s_idx * h, row.iter());
        }

        let num_mod: T = c(cfg.modalities.len() as f64);
        for (j, (pid, (x, ln))) in ids
            .proj
            .iter()
            .zip(cache.inputs.iter().zip(&cache.proj_ln))
            .enumerate()
        {
            let dy = match cfg.modality_aggregation {
                Fusion::Concatenate => dz.slice(s![.., j * d..(j + 1) * d]).to_owned(),
                Fusion::Average => dz.mapv(|v| v / num_mod),
            };
            let (da, dg, dbb) = layer_norm_backward(dy.view(), ln, l.view1(p, pid.gain));
            add_param(grads, l, pid.gain, dg.iter());
            add_param(grads, l, pid.beta, dbb.iter());
            let (_, dw, db) = linear_backward(x.view(), l.view2(p, pid.weight), da.view(), false);
            add_param(grads, l, pid.weight, dw.iter());
            add_param(grads, l, pid.bias, db.iter());
        }
        Ok(())
    }
}

fn add_at<'a, T: Real>(grads: &mut [T], offset: usize, values: impl Iterator<Item = &'a T>) {
    for (g, &v) in grads[offset..].iter_mut().zip(values) {
        *g += v;
    }
}

fn add_param<'a, T: Real>(
    grads: &mut [T],
    layout: &ParamLayout,
    id: ParamId,
    values: impl ExactSizeIterator<Item = &'a T>,
) {
    debug_assert_eq!(values.len(), layout.spec(id).len());
    add_at(grads, layout.spec(id).offset, values);
}
