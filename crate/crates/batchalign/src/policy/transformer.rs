//! Forward and backward passes for the attention-only policy network.
//!
//! Layout: residual stream h0 = embedding + position, then `n_blocks` of
//! multi-head causal self-attention with a residual add, then tied-embedding
//! logits. The backward pass mirrors the forward exactly and accumulates
//! into a flat gradient vector aligned with the parameter layout.

use super::{s, PolicyModel, Scalar};

/// Cached forward-pass state, enough to run a backward pass.
pub struct Activations<F> {
    pub(crate) tokens: Vec<u32>,
    /// Residual stream entering each block plus the final stream:
    /// (n_blocks + 1) entries of n*d values.
    pub(crate) h: Vec<Vec<F>>,
    /// Per block: query/key/value projections, each n*d.
    pub(crate) qkv: Vec<[Vec<F>; 3]>,
    /// Per block, per head: n*n row-major causal attention weights.
    pub(crate) attn: Vec<Vec<Vec<F>>>,
    /// Per block: concatenated head outputs before the output projection, n*d.
    pub(crate) ctx: Vec<Vec<F>>,
}

#[inline]
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// y = W x with W row-major (rows x cols).
#[inline]
fn matvec<F: Scalar>(w: &[F], x: &[F], y: &mut [F], rows: usize, cols: usize) {
    for r in 0..rows {
        y[r] = dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// y += W^T x.
#[inline]
fn matvec_transpose_add<F: Scalar>(w: &[F], x: &[F], y: &mut [F], rows: usize, cols: usize) {
    for r in 0..rows {
        let xr = x[r];
        if xr == F::zero() {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (yc, wc) in y.iter_mut().zip(row) {
            *yc += xr * *wc;
        }
    }
}

/// dW += dy ⊗ x (outer product).
#[inline]
fn outer_add<F: Scalar>(dw: &mut [F], dy: &[F], x: &[F], rows: usize, cols: usize) {
    for r in 0..rows {
        let dyr = dy[r];
        if dyr == F::zero() {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (w, xc) in row.iter_mut().zip(x) {
            *w += dyr * *xc;
        }
    }
}

pub(crate) fn forward<F: Scalar>(model: &PolicyModel<F>, tokens: &[u32]) -> Activations<F> {
    let n = tokens.len();
    let d = model.arch.embed_dim;
    let heads = model.arch.n_heads;
    let dh = model.arch.head_dim();
    let inv_sqrt = s::<F>(1.0 / (dh as f64).sqrt());
    let layout = model.layout();
    let p = &model.params;

    let mut h0 = vec![F::zero(); n * d];
    for (j, &tok) in tokens.iter().enumerate() {
        let e = layout.embedding(tok as usize);
        let pe = layout.position(j);
        for c in 0..d {
            h0[j * d + c] = p[e + c] + p[pe + c];
        }
    }

    let mut h = vec![h0];
    let mut qkv = Vec::with_capacity(model.arch.n_blocks);
    let mut attn = Vec::with_capacity(model.arch.n_blocks);
    let mut ctx_all = Vec::with_capacity(model.arch.n_blocks);

    for b in 0..model.arch.n_blocks {
        let base = layout.block(b);
        let d2 = d * d;
        let (wq, wk, wv, wo) = (
            &p[base..base + d2],
            &p[base + d2..base + 2 * d2],
            &p[base + 2 * d2..base + 3 * d2],
            &p[base + 3 * d2..base + 4 * d2],
        );
        let hin = h.last().expect("stream present").clone();

        let mut q = vec![F::zero(); n * d];
        let mut k = vec![F::zero(); n * d];
        let mut v = vec![F::zero(); n * d];
        for j in 0..n {
            let x = &hin[j * d..(j + 1) * d];
            matvec(wq, x, &mut q[j * d..(j + 1) * d], d, d);
            matvec(wk, x, &mut k[j * d..(j + 1) * d], d, d);
            matvec(wv, x, &mut v[j * d..(j + 1) * d], d, d);
        }

        let mut heads_attn = Vec::with_capacity(heads);
        let mut ctx = vec![F::zero(); n * d];
        for head in 0..heads {
            let hd = head * dh;
            let mut a = vec![F::zero(); n * n];
            let mut scores = vec![F::zero(); n];
            for j in 0..n {
                let qj = &q[j * d + hd..j * d + hd + dh];
                let mut max = F::neg_infinity();
                for (i, score) in scores.iter_mut().enumerate().take(j + 1) {
                    let sc = dot(qj, &k[i * d + hd..i * d + hd + dh]) * inv_sqrt;
                    *score = sc;
                    if sc > max {
                        max = sc;
                    }
                }
                let mut z = F::zero();
                for score in scores.iter_mut().take(j + 1) {
                    *score = (*score - max).exp();
                    z += *score;
                }
                for i in 0..=j {
                    let w = scores[i] / z;
                    a[j * n + i] = w;
                    let vi = &v[i * d + hd..i * d + hd + dh];
                    let cj = &mut ctx[j * d + hd..j * d + hd + dh];
                    for (c, val) in cj.iter_mut().zip(vi) {
                        *c += w * *val;
                    }
                }
            }
            heads_attn.push(a);
        }

        let mut hout = vec![F::zero(); n * d];
        let mut out = vec![F::zero(); d];
        for j in 0..n {
            matvec(wo, &ctx[j * d..(j + 1) * d], &mut out, d, d);
            for c in 0..d {
                hout[j * d + c] = hin[j * d + c] + out[c];
            }
        }

        qkv.push([q, k, v]);
        attn.push(heads_attn);
        ctx_all.push(ctx);
        h.push(hout);
    }

    Activations {
        tokens: tokens.to_vec(),
        h,
        qkv,
        attn,
        ctx: ctx_all,
    }
}

/// Raw tied-embedding logits at one position.
pub(crate) fn logits_at<F: Scalar>(
    model: &PolicyModel<F>,
    acts: &Activations<F>,
    pos: usize,
) -> Vec<F> {
    let d = model.arch.embed_dim;
    let layout = model.layout();
    let hfin = acts.h.last().expect("stream present");
    let hp = &hfin[pos * d..(pos + 1) * d];
    (0..model.vocab.len())
        .map(|v| dot(&model.params[layout.embedding(v)..layout.embedding(v) + d], hp))
        .collect()
}

/// Numerically stable log-softmax of the next-token distribution at `pos`.
pub(crate) fn log_softmax_at<F: Scalar>(
    model: &PolicyModel<F>,
    acts: &Activations<F>,
    pos: usize,
) -> Vec<F> {
    let mut logits = logits_at(model, acts, pos);
    let max = logits.iter().cloned().fold(F::neg_infinity(), F::max);
    let z: F = logits.iter().map(|&x| (x - max).exp()).sum();
    let log_z = z.ln() + max;
    for x in logits.iter_mut() {
        *x = *x - log_z;
    }
    logits
}

fn softmax_at<F: Scalar>(model: &PolicyModel<F>, acts: &Activations<F>, pos: usize) -> Vec<F> {
    let mut p = log_softmax_at(model, acts, pos);
    for x in p.iter_mut() {
        *x = x.exp();
    }
    p
}

/// Gradient of `sum_t w_t * log P(label_t | prompt)` for single-token labels
/// scored at the last prompt position, accumulated into `grad`.
pub(crate) fn accumulate_label_grad<F: Scalar>(
    model: &PolicyModel<F>,
    prompt: &[u32],
    weighted_labels: &[(u32, f64)],
    grad: &mut [F],
) {
    let acts = forward(model, prompt);
    let pos = prompt.len() - 1;
    let probs = softmax_at(model, &acts, pos);
    let wsum: f64 = weighted_labels.iter().map(|(_, w)| w).sum();
    let mut dlogits: Vec<F> = probs.iter().map(|&p| p * s(-wsum)).collect();
    for &(tok, w) in weighted_labels {
        dlogits[tok as usize] += s(w);
    }
    backward(model, &acts, &[(pos, dlogits)], grad);
}

/// Gradient of `w * log P(response | prompt)` for a multi-token response,
/// accumulated into `grad`.
pub(crate) fn accumulate_sequence_grad<F: Scalar>(
    model: &PolicyModel<F>,
    prompt: &[u32],
    response: &[u32],
    weight: f64,
    grad: &mut [F],
) {
    if response.is_empty() || weight == 0.0 {
        return;
    }
    let mut fed: Vec<u32> = Vec::with_capacity(prompt.len() + response.len() - 1);
    fed.extend_from_slice(prompt);
    fed.extend_from_slice(&response[..response.len() - 1]);
    let acts = forward(model, &fed);
    let mut dlogit_list = Vec::with_capacity(response.len());
    for (i, &tok) in response.iter().enumerate() {
        let pos = prompt.len() - 1 + i;
        let probs = softmax_at(model, &acts, pos);
        let mut dlogits: Vec<F> = probs.iter().map(|&p| p * s(-weight)).collect();
        dlogits[tok as usize] += s(weight);
        dlogit_list.push((pos, dlogits));
    }
    backward(model, &acts, &dlogit_list, grad);
}

/// Backpropagates logit gradients at the given positions through the network,
/// accumulating into the flat `grad` vector.
pub(crate) fn backward<F: Scalar>(
    model: &PolicyModel<F>,
    acts: &Activations<F>,
    dlogits_at: &[(usize, Vec<F>)],
    grad: &mut [F],
) {
    let n = acts.tokens.len();
    let d = model.arch.embed_dim;
    let heads = model.arch.n_heads;
    let dh = model.arch.head_dim();
    let inv_sqrt = s::<F>(1.0 / (dh as f64).sqrt());
    let layout = model.layout();
    let p = &model.params;
    let d2 = d * d;

    // Tied output projection: logits[v] = E[v] . h_final[pos].
    let hfin = acts.h.last().expect("stream present");
    let mut dh_stream = vec![F::zero(); n * d];
    for (pos, dlogits) in dlogits_at {
        let hp = &hfin[pos * d..(pos + 1) * d];
        let dhp = &mut dh_stream[pos * d..(pos + 1) * d];
        for (v, &dl) in dlogits.iter().enumerate() {
            if dl == F::zero() {
                continue;
            }
            let e = layout.embedding(v);
            let erow = &p[e..e + d];
            let grow = &mut grad[e..e + d];
            for c in 0..d {
                grow[c] += dl * hp[c];
                dhp[c] += dl * erow[c];
            }
        }
    }

    for b in (0..model.arch.n_blocks).rev() {
        let base = layout.block(b);
        let (wq, wk, wv, wo) = (
            &p[base..base + d2],
            &p[base + d2..base + 2 * d2],
            &p[base + 2 * d2..base + 3 * d2],
            &p[base + 3 * d2..base + 4 * d2],
        );
        let hin = &acts.h[b];
        let [q, k, v] = &acts.qkv[b];
        let ctx = &acts.ctx[b];

        // Residual: dhin starts as a copy of the downstream gradient.
        let mut dhin = dh_stream.clone();
        let mut dctx = vec![F::zero(); n * d];
        for j in 0..n {
            let doutj = &dh_stream[j * d..(j + 1) * d];
            outer_add(
                &mut grad[base + 3 * d2..base + 4 * d2],
                doutj,
                &ctx[j * d..(j + 1) * d],
                d,
                d,
            );
            matvec_transpose_add(wo, doutj, &mut dctx[j * d..(j + 1) * d], d, d);
        }

        let mut dq = vec![F::zero(); n * d];
        let mut dk = vec![F::zero(); n * d];
        let mut dv = vec![F::zero(); n * d];
        let mut dattn_row = vec![F::zero(); n];
        for head in 0..heads {
            let hd = head * dh;
            let a = &acts.attn[b][head];
            for j in 0..n {
                let duj = &dctx[j * d + hd..j * d + hd + dh];
                if duj.iter().all(|x| *x == F::zero()) {
                    continue;
                }
                // dv and d(attention weights).
                for i in 0..=j {
                    let aji = a[j * n + i];
                    let vi = &v[i * d + hd..i * d + hd + dh];
                    let dvi = &mut dv[i * d + hd..i * d + hd + dh];
                    let mut da = F::zero();
                    for (c, (dvc, vc)) in dvi.iter_mut().zip(vi).enumerate() {
                        *dvc += aji * duj[c];
                        da += duj[c] * *vc;
                    }
                    dattn_row[i] = da;
                }
                // Softmax backward over row j.
                let mut rowdot = F::zero();
                for i in 0..=j {
                    rowdot += a[j * n + i] * dattn_row[i];
                }
                let qj = &q[j * d + hd..j * d + hd + dh];
                for i in 0..=j {
                    let ds = a[j * n + i] * (dattn_row[i] - rowdot) * inv_sqrt;
                    if ds == F::zero() {
                        continue;
                    }
                    let ki = &k[i * d + hd..i * d + hd + dh];
                    let dqj = &mut dq[j * d + hd..j * d + hd + dh];
                    for c in 0..dh {
                        dqj[c] += ds * ki[c];
                    }
                    let dki = &mut dk[i * d + hd..i * d + hd + dh];
                    for c in 0..dh {
                        dki[c] += ds * qj[c];
                    }
                }
            }
        }

        // Projection weights and inputs.
        for j in 0..n {
            let x = &hin[j * d..(j + 1) * d];
            let dhj = &mut dhin[j * d..(j + 1) * d];
            let dqj = &dq[j * d..(j + 1) * d];
            outer_add(&mut grad[base..base + d2], dqj, x, d, d);
            matvec_transpose_add(wq, dqj, dhj, d, d);
            let dkj = &dk[j * d..(j + 1) * d];
            outer_add(&mut grad[base + d2..base + 2 * d2], dkj, x, d, d);
            matvec_transpose_add(wk, dkj, dhj, d, d);
            let dvj = &dv[j * d..(j + 1) * d];
            outer_add(&mut grad[base + 2 * d2..base + 3 * d2], dvj, x, d, d);
            matvec_transpose_add(wv, dvj, dhj, d, d);
        }

        dh_stream = dhin;
    }

    // Embedding and positional gradients.
    for (j, &tok) in acts.tokens.iter().enumerate() {
        let e = layout.embedding(tok as usize);
        let pe = layout.position(j);
        let dhj = &dh_stream[j * d..(j + 1) * d];
        for c in 0..d {
            grad[e + c] += dhj[c];
            grad[pe + c] += dhj[c];
        }
    }
}
