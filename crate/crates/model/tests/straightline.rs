//! Straight-line re-evaluation oracles: the adapter and predictor forward
//! passes are recomputed here with plain loops directly from the parameter
//! snapshots, independent of the layer and tape machinery.

use std::collections::BTreeMap;

use gpse_dsp::{AudioBuffer, Spectrogram, StftConfig};
use gpse_model::*;
use gpse_nn::tensor::{from_vec, Tensor};
use gpse_nn::HasParams;
use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Snap = BTreeMap<String, Tensor>;

fn t2(snap: &Snap, name: &str) -> Array2<f64> {
    snap[name].to_owned().into_dimensionality().unwrap()
}

fn t1(snap: &Snap, name: &str) -> Array1<f64> {
    snap[name].to_owned().into_dimensionality().unwrap()
}

fn t3(snap: &Snap, name: &str) -> Array3<f64> {
    snap[name].to_owned().into_dimensionality().unwrap()
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn layer_norm_rows(x: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> Array2<f64> {
    let (rows, d) = x.dim();
    let mut out = Array2::zeros((rows, d));
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rstd = 1.0 / (var + 1e-5).sqrt();
        for c in 0..d {
            out[(r, c)] = (x[(r, c)] - mean) * rstd * gamma[c] + beta[c];
        }
    }
    out
}

fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let (rows, d_in) = x.dim();
    let d_out = w.dim().1;
    let mut out = Array2::zeros((rows, d_out));
    for r in 0..rows {
        for o in 0..d_out {
            let mut acc = b[o];
            for i in 0..d_in {
                acc += x[(r, i)] * w[(i, o)];
            }
            out[(r, o)] = acc;
        }
    }
    out
}

/// 1-d convolution over the frame axis, same padding (3, 3) for k = 7.
fn conv_same7(x: &Array2<f64>, w: &Array3<f64>, b: &Array1<f64>, groups: usize) -> Array2<f64> {
    // x: [frames, c_in] row-major over frames; w: [c_out, c_in/groups, 7]
    let (frames, c_in) = x.dim();
    let (c_out, c_in_g, k) = w.dim();
    assert_eq!(c_in, c_in_g * groups);
    let c_out_g = c_out / groups;
    let pad = 3usize;
    let mut out = Array2::zeros((frames, c_out));
    for f in 0..frames {
        for g in 0..groups {
            for og in 0..c_out_g {
                let o = g * c_out_g + og;
                let mut acc = b[o];
                for ci in 0..c_in_g {
                    for kk in 0..k {
                        let t = f as isize + kk as isize - pad as isize;
                        if t >= 0 && (t as usize) < frames {
                            acc += x[(t as usize, g * c_in_g + ci)] * w[(o, ci, kk)];
                        }
                    }
                }
                out[(f, o)] = acc;
            }
        }
    }
    out
}

fn convnext_backbone(snap: &Snap, prefix: &str, n_blocks: usize, fused: &Array2<f64>) -> Array2<f64> {
    let mut h = conv_same7(
        fused,
        &t3(snap, &format!("{prefix}.embed.w")),
        &t1(snap, &format!("{prefix}.embed.b")),
        1,
    );
    h = layer_norm_rows(
        &h,
        &t1(snap, &format!("{prefix}.embed_norm.gamma")),
        &t1(snap, &format!("{prefix}.embed_norm.beta")),
    );
    let hidden = h.dim().1;
    for i in 0..n_blocks {
        let p = format!("{prefix}.block{i}");
        let t = conv_same7(
            &h,
            &t3(snap, &format!("{p}.dwconv.w")),
            &t1(snap, &format!("{p}.dwconv.b")),
            hidden,
        );
        let t = layer_norm_rows(
            &t,
            &t1(snap, &format!("{p}.norm.gamma")),
            &t1(snap, &format!("{p}.norm.beta")),
        );
        let t = linear(&t, &t2(snap, &format!("{p}.pw1.w")), &t1(snap, &format!("{p}.pw1.b")));
        let t = t.mapv(gelu);
        let t = linear(&t, &t2(snap, &format!("{p}.pw2.w")), &t1(snap, &format!("{p}.pw2.b")));
        let scale = t1(snap, &format!("{p}.layer_scale"));
        for f in 0..h.dim().0 {
            for c in 0..hidden {
                h[(f, c)] += t[(f, c)] * scale[c];
            }
        }
    }
    layer_norm_rows(
        &h,
        &t1(snap, &format!("{prefix}.final_norm.gamma")),
        &t1(snap, &format!("{prefix}.final_norm.beta")),
    )
}

#[test]
fn adapter_matches_straight_line_oracle() {
    let d_model = 24;
    let cfg = ConvNeXtBackboneConfig::toy_adapter(d_model);
    let mut adapter = Adapter::new(&cfg, d_model, 77).unwrap();
    let snap = adapter.snapshot();

    let mut rng = ChaCha20Rng::seed_from_u64(78);
    let frames = 13;
    let r_p = from_vec(
        &[frames, d_model],
        (0..frames * d_model).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );
    let r_a0 = from_vec(
        &[frames, d_model],
        (0..frames * d_model).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );
    let got = adapter.adapt(&r_p, &r_a0).unwrap();

    // Straight-line recomputation.
    let mut fused = Array2::zeros((frames, d_model));
    for f in 0..frames {
        for c in 0..d_model {
            fused[(f, c)] = r_p[[f, c]] + r_a0[[f, c]];
        }
    }
    let h = convnext_backbone(&snap, "adapter", cfg.n_blocks, &fused);
    let out = linear(&h, &t2(&snap, "adapter.out_proj.w"), &t1(&snap, "adapter.out_proj.b"));

    let mut max_err = 0.0f64;
    for f in 0..frames {
        for c in 0..d_model {
            max_err = max_err.max((got[[f, c]] - out[(f, c)]).abs());
        }
    }
    assert!(max_err < 1e-5, "adapter straight-line oracle max err {max_err}");
}

/// One LSTM direction with the (i, f, g, o) gate layout.
fn lstm_direction(
    xs: &[Array1<f64>],
    w_ih: &Array2<f64>,
    w_hh: &Array2<f64>,
    bias: &Array1<f64>,
) -> Vec<Array1<f64>> {
    let h4 = w_ih.dim().1;
    let hsz = h4 / 4;
    let mut h = Array1::<f64>::zeros(hsz);
    let mut cell = Array1::<f64>::zeros(hsz);
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let mut gates = bias.clone();
        for (i, xv) in x.iter().enumerate() {
            for j in 0..h4 {
                gates[j] += xv * w_ih[(i, j)];
            }
        }
        for (i, hv) in h.iter().enumerate() {
            for j in 0..h4 {
                gates[j] += hv * w_hh[(i, j)];
            }
        }
        let mut new_h = Array1::<f64>::zeros(hsz);
        for j in 0..hsz {
            let ig = sigmoid(gates[j]);
            let fg = sigmoid(gates[hsz + j]);
            let gg = gates[2 * hsz + j].tanh();
            let og = sigmoid(gates[3 * hsz + j]);
            cell[j] = fg * cell[j] + ig * gg;
            new_h[j] = og * cell[j].tanh();
        }
        h = new_h.clone();
        out.push(new_h);
    }
    out
}

fn bilstm_seq(
    xs: &[Array1<f64>],
    snap: &Snap,
    prefix: &str,
) -> Vec<Array1<f64>> {
    let fwd = lstm_direction(
        xs,
        &t2(snap, &format!("{prefix}.fwd.w_ih")),
        &t2(snap, &format!("{prefix}.fwd.w_hh")),
        &t1(snap, &format!("{prefix}.fwd.bias")),
    );
    let rev: Vec<Array1<f64>> = xs.iter().rev().cloned().collect();
    let mut bwd = lstm_direction(
        &rev,
        &t2(snap, &format!("{prefix}.bwd.w_ih")),
        &t2(snap, &format!("{prefix}.bwd.w_hh")),
        &t1(snap, &format!("{prefix}.bwd.bias")),
    );
    bwd.reverse();
    fwd.into_iter()
        .zip(bwd)
        .map(|(f, b)| {
            let mut v = Array1::zeros(f.len() + b.len());
            for (i, x) in f.iter().chain(b.iter()).enumerate() {
                v[i] = *x;
            }
            v
        })
        .collect()
}

#[test]
fn predictor_matches_straight_line_oracle() {
    let cfg = PredictorConfig {
        core: DualPathConfig { n_blocks: 1, lstm_hidden: 12, emb_dim: 8, attn_heads: 2, attn_qk_dim: 3 },
        stft: StftConfigSer { fft_size: 64, hop_size: 16 },
    };
    let mut predictor = Predictor::new(&cfg, 99).unwrap();
    // Randomize the (normally zero-initialized) output projection so the
    // oracle exercises the whole network.
    let mut rng = ChaCha20Rng::seed_from_u64(100);
    predictor.out_proj =
        gpse_nn::Linear::new(&mut rng, "predictor.out_proj", cfg.core.emb_dim, 2, true);
    let snap = predictor.snapshot();

    let n = 400;
    let x = AudioBuffer::new((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16000).unwrap();
    let got = predictor.predict(&x).unwrap();

    // ---- straight-line recomputation ----
    let stft_cfg = StftConfig::new(64, 16);
    let spec = gpse_dsp::stft(&x, &stft_cfg).unwrap();
    let (t_frames, f_bins) = spec.bins.dim();
    let d = cfg.core.emb_dim;

    // embed + norm
    let w_embed = t2(&snap, "predictor.embed.w");
    let b_embed = t1(&snap, "predictor.embed.b");
    let mut h = vec![Array2::<f64>::zeros((f_bins, d)); t_frames];
    for t in 0..t_frames {
        for f in 0..f_bins {
            let re = spec.bins[(t, f)].re;
            let im = spec.bins[(t, f)].im;
            for o in 0..d {
                h[t][(f, o)] = b_embed[o] + re * w_embed[(0, o)] + im * w_embed[(1, o)];
            }
        }
    }
    let g_en = t1(&snap, "predictor.embed_norm.gamma");
    let b_en = t1(&snap, "predictor.embed_norm.beta");
    for t in 0..t_frames {
        h[t] = layer_norm_rows(&h[t], &g_en, &b_en);
    }

    let p = "predictor.block0";
    // intra-frequency BiLSTM per frame
    {
        let g = t1(&snap, &format!("{p}.freq_norm.gamma"));
        let b = t1(&snap, &format!("{p}.freq_norm.beta"));
        let wp = t2(&snap, &format!("{p}.freq_proj.w"));
        let bp = t1(&snap, &format!("{p}.freq_proj.b"));
        for t in 0..t_frames {
            let normed = layer_norm_rows(&h[t], &g, &b);
            let xs: Vec<Array1<f64>> = (0..f_bins).map(|f| normed.row(f).to_owned()).collect();
            let ys = bilstm_seq(&xs, &snap, &format!("{p}.freq_lstm"));
            for f in 0..f_bins {
                let proj = {
                    let mut acc = bp.clone();
                    for (i, v) in ys[f].iter().enumerate() {
                        for o in 0..d {
                            acc[o] += v * wp[(i, o)];
                        }
                    }
                    acc
                };
                for o in 0..d {
                    h[t][(f, o)] += proj[o];
                }
            }
        }
    }
    // intra-time BiLSTM per bin
    {
        let g = t1(&snap, &format!("{p}.time_norm.gamma"));
        let b = t1(&snap, &format!("{p}.time_norm.beta"));
        let wp = t2(&snap, &format!("{p}.time_proj.w"));
        let bp = t1(&snap, &format!("{p}.time_proj.b"));
        let normed: Vec<Array2<f64>> = (0..t_frames).map(|t| layer_norm_rows(&h[t], &g, &b)).collect();
        for f in 0..f_bins {
            let xs: Vec<Array1<f64>> = (0..t_frames).map(|t| normed[t].row(f).to_owned()).collect();
            let ys = bilstm_seq(&xs, &snap, &format!("{p}.time_lstm"));
            for t in 0..t_frames {
                let mut acc = bp.clone();
                for (i, v) in ys[t].iter().enumerate() {
                    for o in 0..d {
                        acc[o] += v * wp[(i, o)];
                    }
                }
                for o in 0..d {
                    h[t][(f, o)] += acc[o];
                }
            }
        }
    }
    // frame attention
    {
        let g = t1(&snap, &format!("{p}.attn_norm.gamma"));
        let b = t1(&snap, &format!("{p}.attn_norm.beta"));
        let normed: Vec<Array2<f64>> = (0..t_frames).map(|t| layer_norm_rows(&h[t], &g, &b)).collect();
        let heads = cfg.core.attn_heads;
        let dv = d / heads;
        let e = f_bins * cfg.core.attn_qk_dim;
        let mut merged = vec![Array2::<f64>::zeros((f_bins, d)); t_frames];
        for hd in 0..heads {
            let hp = format!("{p}.attn.h{hd}");
            let wq = t2(&snap, &format!("{hp}.q.w"));
            let bq = t1(&snap, &format!("{hp}.q.b"));
            let wk = t2(&snap, &format!("{hp}.k.w"));
            let bk = t1(&snap, &format!("{hp}.k.b"));
            let wv = t2(&snap, &format!("{hp}.v.w"));
            let bv = t1(&snap, &format!("{hp}.v.b"));
            let flat = |w: &Array2<f64>, bias: &Array1<f64>, t: usize| -> Array1<f64> {
                let proj = linear(&normed[t], w, bias);
                let cols = proj.dim().1;
                let mut v = Array1::zeros(f_bins * cols);
                for f in 0..f_bins {
                    for c in 0..cols {
                        v[f * cols + c] = proj[(f, c)];
                    }
                }
                v
            };
            let qs: Vec<Array1<f64>> = (0..t_frames).map(|t| flat(&wq, &bq, t)).collect();
            let ks: Vec<Array1<f64>> = (0..t_frames).map(|t| flat(&wk, &bk, t)).collect();
            let vs: Vec<Array1<f64>> = (0..t_frames).map(|t| flat(&wv, &bv, t)).collect();
            for t in 0..t_frames {
                let mut scores = vec![0.0f64; t_frames];
                for (t2i, k) in ks.iter().enumerate() {
                    scores[t2i] = qs[t].dot(k) / (e as f64).sqrt();
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                let mut att = vec![0.0f64; t_frames];
                for (i, s) in scores.iter().enumerate() {
                    att[i] = (s - max).exp();
                    sum += att[i];
                }
                for a in att.iter_mut() {
                    *a /= sum;
                }
                for f in 0..f_bins {
                    for c in 0..dv {
                        let mut acc = 0.0;
                        for (t2i, a) in att.iter().enumerate() {
                            acc += a * vs[t2i][f * dv + c];
                        }
                        merged[t][(f, hd * dv + c)] = acc;
                    }
                }
            }
        }
        let wo = t2(&snap, &format!("{p}.attn.out.w"));
        let bo = t1(&snap, &format!("{p}.attn.out.b"));
        for t in 0..t_frames {
            let out = linear(&merged[t], &wo, &bo);
            for f in 0..f_bins {
                for o in 0..d {
                    h[t][(f, o)] += out[(f, o)];
                }
            }
        }
    }
    // output head + residual spectrum + synthesis
    let g_on = t1(&snap, "predictor.out_norm.gamma");
    let b_on = t1(&snap, "predictor.out_norm.beta");
    let wo = t2(&snap, "predictor.out_proj.w");
    let bo = t1(&snap, "predictor.out_proj.b");
    let mut out_bins = spec.bins.clone();
    for t in 0..t_frames {
        let normed = layer_norm_rows(&h[t], &g_on, &b_on);
        let proj = linear(&normed, &wo, &bo); // [F, 2]
        for f in 0..f_bins {
            out_bins[(t, f)] += num_complex::Complex64::new(proj[(f, 0)], proj[(f, 1)]);
        }
    }
    let wave = gpse_dsp::istft(&Spectrogram { bins: out_bins, config: stft_cfg, source_rate: 16000 })
        .unwrap();

    let mut max_err = 0.0f64;
    for i in 0..n {
        max_err = max_err.max((got.samples[i] - wave.samples[i]).abs());
    }
    assert!(max_err < 1e-4, "predictor straight-line oracle max err {max_err}");
}
