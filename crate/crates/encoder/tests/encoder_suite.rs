// Oracles are written as plain index loops on purpose.
#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urbangraph_core::geo::{haversine_m, initial_bearing_deg, Geometry};
use urbangraph_core::graph::build_graph;
use urbangraph_core::subgraph::{extract_subgraph, ExtractConfig};
use urbangraph_core::synth::fixture_city;
use urbangraph_encoder::fixtures::four_node_batch;
use urbangraph_encoder::*;

// ---------- naive oracles ----------

fn vm(v: &[f64], w: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (r, &x) in v.iter().enumerate() {
        for c in 0..cols {
            out[c] += x * w[r * cols + c];
        }
    }
    out
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn naive_infonce(q: &[Vec<f64>], t: &[Vec<f64>], temp: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..q.len() {
        let mut denom = 0.0;
        for j in 0..t.len() {
            denom += (cos(&q[i], &t[j]) / temp).exp();
        }
        total += -((cos(&q[i], &t[i]) / temp).exp() / denom).ln();
    }
    total / q.len() as f64
}

fn lrelu(x: f64, s: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        s * x
    }
}

fn block<'a>(p: &'a EncoderParams, name: &str) -> &'a [f64] {
    &p.block(name).unwrap().data
}

/// Straight transcription of the layer: plain softmax, no shifts.
fn dense_layer(
    p: &EncoderParams,
    l: usize,
    h: &[Vec<f64>],
    e: &[Vec<f64>],
    edges: &[(usize, usize)],
) -> Vec<Vec<f64>> {
    let cfg = p.config();
    let d = cfg.hidden_dim;
    let hd = d / cfg.num_heads;
    let name = |s: &str| format!("gat{l}.{s}");
    let (ws, wt, we) = (
        block(p, &name("w_s")),
        block(p, &name("w_t")),
        block(p, &name("w_e")),
    );
    let (att, wo) = (block(p, &name("att")), block(p, &name("w_o")));
    let (gamma, beta) = (block(p, &name("ln_gamma")), block(p, &name("ln_beta")));
    let mut out = Vec::new();
    for i in 0..h.len() {
        let mut msg = vec![0.0; d];
        for head in 0..cfg.num_heads {
            let cols = head * hd..(head + 1) * hd;
            let mut weights = Vec::new();
            for (k, &(j, dst)) in edges.iter().enumerate() {
                if dst != i {
                    continue;
                }
                let (si, tj, ek) = (vm(&h[i], ws, d), vm(&h[j], wt, d), vm(&e[k], we, d));
                let score: f64 = cols
                    .clone()
                    .map(|c| att[c] * lrelu(si[c] + tj[c] + ek[c], cfg.leaky_slope))
                    .sum();
                weights.push((j, score.exp()));
            }
            let z: f64 = weights.iter().map(|w| w.1).sum();
            for (j, w) in weights {
                let tj = vm(&h[j], wt, d);
                for c in cols.clone() {
                    msg[c] += w / z * tj[c];
                }
            }
        }
        let proj = vm(&msg, wo, d);
        let y: Vec<f64> = (0..d).map(|c| h[i][c] + proj[c]).collect();
        let mean = y.iter().sum::<f64>() / d as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let sd = (var + cfg.layer_norm_eps).sqrt();
        out.push(
            (0..d)
                .map(|c| gamma[c] * (y[c] - mean) / sd + beta[c])
                .collect(),
        );
    }
    out
}

fn dense_edges(p: &EncoderParams, raw: &[[f64; 5]]) -> Vec<Vec<f64>> {
    let ed = p.config().edge_dim;
    raw.iter()
        .map(|r| {
            let mut hidden = vm(r, block(p, "edge_mlp.w1"), ed);
            for (x, b) in hidden.iter_mut().zip(block(p, "edge_mlp.b1")) {
                *x = (*x + b).tanh();
            }
            let mut out = vm(&hidden, block(p, "edge_mlp.w2"), ed);
            for (x, b) in out.iter_mut().zip(block(p, "edge_mlp.b2")) {
                *x += b;
            }
            out
        })
        .collect()
}

fn rows(v: &[f64], width: usize) -> Vec<Vec<f64>> {
    v.chunks(width).map(|r| r.to_vec()).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

// ---------- fixtures ----------

fn small_cfg() -> EncoderConfig {
    EncoderConfig {
        hidden_dim: 8,
        pe_dim: 8,
        edge_dim: 6,
        token_dim: 4,
        vocab_size: 64,
        num_layers: 2,
        num_heads: 2,
        ..EncoderConfig::default()
    }
}

/// Parameters with hand-set small values that differ per block and entry.
fn hand_params(cfg: &EncoderConfig) -> EncoderParams {
    let mut p = EncoderParams::init(cfg, 0).unwrap();
    for (bi, b) in p.blocks.iter_mut().enumerate() {
        for (k, x) in b.data.iter_mut().enumerate() {
            *x = 0.3 * ((bi as f64 + 1.0) * 0.7 + k as f64 * 1.3).sin();
        }
        if b.name.ends_with("ln_gamma") {
            for x in &mut b.data {
                *x += 1.0;
            }
        }
    }
    p
}

fn random_graph(cfg: &EncoderConfig, n: usize, seed: u64) -> GraphInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.35) {
                pairs.push((a, b));
                pairs.push((b, a));
            }
        }
    }
    pairs.sort_by_key(|&(s, d)| (d, s));
    GraphInput {
        node_ids: (0..n).map(|i| format!("n{i}")).collect(),
        tokens: (0..n)
            .map(|_| {
                let len = rng.gen_range(0..4);
                (0..len)
                    .map(|_| rng.gen_range(0..cfg.vocab_size as u32))
                    .collect()
            })
            .collect(),
        text_override: vec![None; n],
        pe: (0..n * cfg.pe_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
        raw: pairs
            .iter()
            .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
            .collect(),
        edges: pairs,
        center: rng.gen_range(0..n),
    }
}

fn path_graph(cfg: &EncoderConfig, n: usize) -> GraphInput {
    let mut pairs: Vec<(usize, usize)> =
        (0..n - 1).flat_map(|i| [(i, i + 1), (i + 1, i)]).collect();
    pairs.sort_by_key(|&(s, d)| (d, s));
    GraphInput {
        node_ids: (0..n).map(|i| format!("n{i}")).collect(),
        tokens: (0..n)
            .map(|i| vec![i as u32, (i as u32 + 7) % 64])
            .collect(),
        text_override: vec![None; n],
        pe: (0..n * cfg.pe_dim)
            .map(|k| (k as f64 * 0.37).sin())
            .collect(),
        raw: pairs
            .iter()
            .map(|&(s, d)| [1.0, 0.0, 1.0, d as f64 - s as f64, 0.1])
            .collect(),
        edges: pairs,
        center: 0,
    }
}

// ---------- contrastive loss ----------

#[test]
fn uniform_batch_of_two_is_ln2() {
    let v = vec![vec![0.6, 0.8], vec![0.6, 0.8]];
    let l = infonce_loss(&v, &v, 0.05).unwrap();
    assert!((l - 2f64.ln()).abs() < 1e-10, "{l}");
}

#[test]
fn opposite_negative_closed_form() {
    let q = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
    let l = infonce_loss(&q, &q, 1.0).unwrap();
    let want = (1.0 + (-2f64).exp()).ln();
    assert!((l - want).abs() < 1e-10, "{l} vs {want}");
    assert!((want - 0.1269).abs() < 1e-4);
}

#[test]
fn batch_of_eight_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut draw = || -> Vec<Vec<f64>> {
        (0..8)
            .map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    };
    let (q, t) = (draw(), draw());
    for temp in [0.05, 0.5, 1.0] {
        let got = infonce_loss(&q, &t, temp).unwrap();
        let want = naive_infonce(&q, &t, temp);
        assert!((got - want).abs() < 1e-10, "T={temp}: {got} vs {want}");
    }
}

#[test]
fn loss_rejects_degenerate_batches() {
    let z = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
    assert!(matches!(
        infonce_loss(&z, &z, 0.05),
        Err(EncoderError::Numeric(_))
    ));
    let one = vec![vec![1.0, 0.0]];
    assert!(matches!(
        infonce_loss(&one, &one, 0.05),
        Err(EncoderError::Shape(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_cosines_give_ln_batch(b in 2usize..12, temp in 0.02f64..2.0) {
        let v: Vec<Vec<f64>> = (0..b).map(|_| vec![1.0, 2.0, -0.5]).collect();
        let l = infonce_loss(&v, &v, temp).unwrap();
        prop_assert!((l - (b as f64).ln()).abs() < 1e-10);
    }

    /// Targets are orthonormal and each query spends its spare norm on a
    /// private axis, so raising one positive cosine leaves every other
    /// cosine untouched.
    #[test]
    fn raising_a_positive_cosine_lowers_the_loss(
        c in proptest::collection::vec(-0.4f64..0.4, 9),
        i in 0usize..3,
        bump in 0.01f64..0.1,
        temp in 0.05f64..1.0,
    ) {
        let b = 3;
        let build = |cm: &[f64]| -> Vec<Vec<f64>> {
            (0..b).map(|r| {
                let mut v = vec![0.0; 2 * b];
                let mut used = 0.0;
                for j in 0..b {
                    v[j] = cm[r * b + j];
                    used += v[j] * v[j];
                }
                v[b + r] = (1.0 - used).sqrt();
                v
            }).collect()
        };
        let t: Vec<Vec<f64>> = (0..b).map(|j| {
            let mut v = vec![0.0; 2 * b];
            v[j] = 1.0;
            v
        }).collect();
        let before = infonce_loss(&build(&c), &t, temp).unwrap();
        let mut c2 = c.clone();
        c2[i * b + i] += bump;
        let after = infonce_loss(&build(&c2), &t, temp).unwrap();
        prop_assert!(after < before, "{} !< {}", after, before);
    }
}

#[test]
fn infonce_gradients_match_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let t: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let (_, dq, dt) = infonce_with_grads(&q, &t, 0.1).unwrap();
    let h = 1e-6;
    for i in 0..4 {
        for c in 0..5 {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[i][c] += h;
            qm[i][c] -= h;
            let n = (naive_infonce(&qp, &t, 0.1) - naive_infonce(&qm, &t, 0.1)) / (2.0 * h);
            assert!((n - dq[i][c]).abs() < 1e-6, "dq[{i}][{c}]");
            let (mut tp, mut tm) = (t.clone(), t.clone());
            tp[i][c] += h;
            tm[i][c] -= h;
            let n = (naive_infonce(&q, &tp, 0.1) - naive_infonce(&q, &tm, 0.1)) / (2.0 * h);
            assert!((n - dt[i][c]).abs() < 1e-6, "dt[{i}][{c}]");
        }
    }
}

// ---------- encoders and layers ----------

#[test]
fn node_rows_are_mean_pooled_tokens_plus_position() {
    let cfg = small_cfg();
    let p = hand_params(&cfg);
    let mut g = random_graph(&cfg, 6, 4);
    g.tokens[0] = vec![3, 3, 9, 17];
    g.tokens[1] = vec![];
    g.text_override[2] = Some(vec![0.5, -0.25, 1.0, 2.0]);
    let got = rows(&encode_nodes(&p, &g).unwrap(), cfg.hidden_dim);
    let table = block(&p, "token_table");
    for i in 0..g.len() {
        let pooled: Vec<f64> = match &g.text_override[i] {
            Some(v) => v.clone(),
            None => {
                let mut sum = vec![0.0; cfg.token_dim];
                for &t in &g.tokens[i] {
                    for c in 0..cfg.token_dim {
                        sum[c] += table[t as usize * cfg.token_dim + c];
                    }
                }
                let n = g.tokens[i].len().max(1) as f64;
                sum.iter().map(|s| s / n).collect()
            }
        };
        let mut x = pooled;
        x.extend_from_slice(&g.pe[i * cfg.pe_dim..(i + 1) * cfg.pe_dim]);
        let mut want = vm(&x, block(&p, "node_proj.w"), cfg.hidden_dim);
        for (w, b) in want.iter_mut().zip(block(&p, "node_proj.b")) {
            *w += b;
        }
        assert!(close(&got[i], &want, 1e-12), "node {i}");
    }
    // Empty text contributes nothing beyond the position code.
    let mut x = vec![0.0; cfg.token_dim];
    x.extend_from_slice(&g.pe[cfg.pe_dim..2 * cfg.pe_dim]);
    let want: Vec<f64> = vm(&x, block(&p, "node_proj.w"), cfg.hidden_dim)
        .iter()
        .zip(block(&p, "node_proj.b"))
        .map(|(a, b)| a + b)
        .collect();
    assert!(close(&got[1], &want, 1e-12));
}

#[test]
fn identical_nodes_get_identical_rows() {
    let cfg = small_cfg();
    let p = hand_params(&cfg);
    let mut g = random_graph(&cfg, 4, 9);
    g.tokens[3] = g.tokens[1].clone();
    let (a, b) = (cfg.pe_dim, 3 * cfg.pe_dim);
    let pe1 = g.pe[a..a + cfg.pe_dim].to_vec();
    g.pe[b..b + cfg.pe_dim].copy_from_slice(&pe1);
    let h = rows(&encode_nodes(&p, &g).unwrap(), cfg.hidden_dim);
    assert_eq!(h[1], h[3]);
}

#[test]
fn edge_encoder_matches_dense_mlp_with_zero_self_loops() {
    let cfg = small_cfg();
    let p = hand_params(&cfg);
    let g = random_graph(&cfg, 5, 2);
    let got = rows(&encode_edges(&p, &g).unwrap(), cfg.edge_dim);
    let mut raw = g.raw.clone();
    raw.extend(std::iter::repeat_n([0.0; 5], g.len()));
    let want = dense_edges(&p, &raw);
    assert_eq!(got.len(), g.edges.len() + g.len());
    for (a, b) in got.iter().zip(&want) {
        assert!(close(a, b, 1e-12));
    }
}

#[test]
fn two_node_layer_matches_dense_reference() {
    let cfg = small_cfg();
    let p = hand_params(&cfg);
    let g = GraphInput {
        node_ids: vec!["a".into(), "b".into()],
        tokens: vec![vec![1, 2], vec![5]],
        text_override: vec![None, None],
        pe: (0..2 * cfg.pe_dim).map(|k| (k as f64).cos()).collect(),
        edges: vec![(1, 0), (0, 1)],
        raw: vec![[2.3, 0.6, 0.8, 0.12, -0.05], [2.3, -0.6, -0.8, -0.12, 0.05]],
        center: 0,
    };
    let h: Vec<f64> = (0..2 * cfg.hidden_dim)
        .map(|k| 0.2 * (k as f64 * 0.9).sin())
        .collect();
    let e = encode_edges(&p, &g).unwrap();
    for layer in 0..cfg.num_layers {
        let got = rows(&gatv2_layer(&p, layer, &h, &e, &g).unwrap(), cfg.hidden_dim);
        let all_edges = [(1, 0), (0, 1), (0, 0), (1, 1)];
        let want = dense_layer(
            &p,
            layer,
            &rows(&h, cfg.hidden_dim),
            &rows(&e, cfg.edge_dim),
            &all_edges,
        );
        for (a, b) in got.iter().zip(&want) {
            assert!(close(a, b, 1e-10), "{a:?}\n{b:?}");
        }
    }
}

#[test]
fn lone_node_attends_only_to_itself() {
    let cfg = small_cfg();
    let p = hand_params(&cfg);
    let g = GraphInput {
        node_ids: vec!["solo".into()],
        tokens: vec![vec![4]],
        text_override: vec![None],
        pe: vec![0.1; cfg.pe_dim],
        edges: vec![],
        raw: vec![],
        center: 0,
    };
    let h: Vec<f64> = (0..cfg.hidden_dim).map(|k| k as f64 * 0.1 - 0.3).collect();
    let e = encode_edges(&p, &g).unwrap();
    let got = gatv2_layer(&p, 0, &h, &e, &g).unwrap();
    let d = cfg.hidden_dim;
    let msg = vm(&h, block(&p, "gat0.w_t"), d);
    let proj = vm(&msg, block(&p, "gat0.w_o"), d);
    let y: Vec<f64> = (0..d).map(|c| h[c] + proj[c]).collect();
    let mean = y.iter().sum::<f64>() / d as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
    let want: Vec<f64> = (0..d)
        .map(|c| {
            block(&p, "gat0.ln_gamma")[c] * (y[c] - mean) / (var + 1e-5).sqrt()
                + block(&p, "gat0.ln_beta")[c]
        })
        .collect();
    assert!(close(&got, &want, 1e-12));
}

#[test]
fn layer_rejects_mismatched_shapes() {
    let cfg = small_cfg();
    let p = hand_params(&cfg);
    let g = random_graph(&cfg, 3, 1);
    let e = encode_edges(&p, &g).unwrap();
    let h = vec![0.0; 3 * cfg.hidden_dim];
    assert!(matches!(
        gatv2_layer(&p, 0, &h[1..], &e, &g),
        Err(EncoderError::Shape(_))
    ));
    assert!(matches!(
        gatv2_layer(&p, 0, &h, &e[1..], &g),
        Err(EncoderError::Shape(_))
    ));
    assert!(gatv2_layer(&p, 9, &h, &e, &g).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relabeling_permutes_rows_and_keeps_embedding(seed in 0u64..1000) {
        let cfg = small_cfg();
        let p = EncoderParams::init(&cfg, seed ^ 0x55).unwrap();
        let g = random_graph(&cfg, 8, seed);
        let mut order: Vec<usize> = (0..8).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let gp = g.permuted(&order);
        let d = cfg.hidden_dim;

        // One layer on the encoded nodes.
        let (h, hp) = (encode_nodes(&p, &g).unwrap(), encode_nodes(&p, &gp).unwrap());
        let (e, ep) = (encode_edges(&p, &g).unwrap(), encode_edges(&p, &gp).unwrap());
        let out = rows(&gatv2_layer(&p, 0, &h, &e, &g).unwrap(), d);
        let outp = rows(&gatv2_layer(&p, 0, &hp, &ep, &gp).unwrap(), d);
        for (k, &o) in order.iter().enumerate() {
            prop_assert!(close(&outp[k], &out[o], 1e-10));
        }
        // The full stack.
        let s = rows(&node_states(&p, &g).unwrap(), d);
        let sp = rows(&node_states(&p, &gp).unwrap(), d);
        for (k, &o) in order.iter().enumerate() {
            prop_assert!(close(&sp[k], &s[o], 1e-10));
        }
        let a = graph_embedding_of(&p, &g).unwrap();
        let b = graph_embedding_of(&p, &gp).unwrap();
        prop_assert!(close(&a, &b, 1e-10));
    }
}

#[test]
fn receptive_field_is_num_layers_hops() {
    let cfg = small_cfg();
    let p = EncoderParams::init(&cfg, 21).unwrap();
    let g = path_graph(&cfg, 5);
    let base = graph_embedding_of(&p, &g).unwrap();
    for node in 1..5 {
        let mut changed = g.clone();
        changed.tokens[node] = vec![40, 41, 42];
        let emb = graph_embedding_of(&p, &changed).unwrap();
        if node <= cfg.num_layers {
            assert_ne!(emb, base, "node {node} is within reach");
        } else {
            assert_eq!(emb, base, "node {node} is out of reach");
        }
    }
    let one = EncoderConfig {
        num_layers: 1,
        ..small_cfg()
    };
    let p1 = EncoderParams::init(&one, 21).unwrap();
    let base = graph_embedding_of(&p1, &g).unwrap();
    let mut changed = g.clone();
    changed.tokens[2] = vec![40];
    assert_eq!(graph_embedding_of(&p1, &changed).unwrap(), base);
}

#[test]
fn embedding_from_subgraph_and_missing_center() {
    let city = fixture_city(7);
    let graph = build_graph(city.nodes.clone(), Default::default()).unwrap();
    let (vid, _) = &city.images[0];
    let sub = extract_subgraph(&graph, vid, &ExtractConfig::default()).unwrap();
    let cfg = EncoderConfig::default();
    let p = EncoderParams::init(&cfg, 1).unwrap();
    let a = graph_embedding(&sub, vid, &p).unwrap();
    assert_eq!(a.len(), cfg.hidden_dim);
    assert_eq!(a, graph_embedding(&sub, vid, &p).unwrap());
    assert!(a.iter().all(|x| x.is_finite()));
    assert!(matches!(
        graph_embedding(&sub, "no-such-node", &p),
        Err(EncoderError::MissingCenter(_))
    ));
}

#[test]
fn raw_edge_features_recompute_from_endpoints() {
    let city = fixture_city(7);
    let graph = build_graph(city.nodes.clone(), Default::default()).unwrap();
    let cfg = EncoderConfig::default();
    let mut point_pairs = 0;
    for (vid, _) in &city.images {
        let sub = extract_subgraph(&graph, vid, &ExtractConfig::default()).unwrap();
        let g = prepare_graph(&sub, vid, &cfg, None).unwrap();
        let nodes: Vec<_> = sub.all_nodes().collect();
        for (&(s, d), raw) in g.edges.iter().zip(&g.raw) {
            let (a, b) = (nodes[s], nodes[d]);
            // Reverse traversals reuse the stored bearing turned around.
            let forward = sub.edges.iter().any(|e| e.src == a.id && e.dst == b.id);
            let rel = |x: f64, y: f64| (x - y).abs() <= 1e-6 * x.abs().max(1.0);
            assert!(rel(
                raw[3],
                (b.anchor.lon() - a.anchor.lon()) * DISPLACEMENT_SCALE
            ));
            assert!(rel(
                raw[4],
                (b.anchor.lat() - a.anchor.lat()) * DISPLACEMENT_SCALE
            ));
            assert!((raw[1].powi(2) + raw[2].powi(2) - 1.0).abs() < 1e-12);
            let both_points = matches!(a.geometry, Geometry::Point(_))
                && matches!(b.geometry, Geometry::Point(_));
            if both_points && a.anchor != b.anchor {
                point_pairs += 1;
                let dist = haversine_m(a.anchor, b.anchor);
                let theta = if forward {
                    initial_bearing_deg(a.anchor, b.anchor).unwrap()
                } else {
                    (initial_bearing_deg(b.anchor, a.anchor).unwrap() + 180.0) % 360.0
                }
                .to_radians();
                assert!(rel(raw[0], dist.ln_1p()), "{} -> {}", a.id, b.id);
                assert!(rel(raw[1], theta.sin()) && rel(raw[2], theta.cos()));
            }
        }
    }
    assert!(point_pairs > 0, "fixture has point-to-point edges");
}

// ---------- gradients ----------

#[test]
fn grad_check_on_four_node_batch() {
    let cfg = EncoderConfig::default();
    let batch = four_node_batch(&cfg).unwrap();
    for q in &batch.queries {
        let Query::Graph { graph, .. } = q else {
            panic!()
        };
        assert_eq!(graph.len(), 4);
    }
    let p = EncoderParams::init(&cfg, 5).unwrap();
    let r = grad_check(&p, &batch, 1e-4, 230, 0).unwrap();
    assert!(r.sampled_params >= 100);
    assert_eq!(r.per_block.len(), p.blocks.len());
    assert!(r.per_block.iter().all(|b| b.samples > 0));
    assert!(r.max_rel_error < 1e-4, "{r:#?}");
}

#[test]
fn grad_check_without_attention_nonlinearity() {
    let cfg = EncoderConfig {
        num_heads: 1,
        layer_norm: false,
        leaky_slope: 1.0,
        temperature: 1.0,
        ..EncoderConfig::default()
    };
    let batch = four_node_batch(&cfg).unwrap();
    let p = EncoderParams::init(&cfg, 5).unwrap();
    let r = grad_check(&p, &batch, 1e-4, 230, 0).unwrap();
    assert_eq!(r.resampled, 0);
    // Layer-norm parameters are unused here: exact zeros on both sides.
    for b in r.per_block.iter().filter(|b| b.name.contains("ln_")) {
        assert_eq!(b.max_rel_error, 0.0, "{}", b.name);
    }
    assert!(r.max_rel_error < 1e-4, "{r:#?}");

    // The two-point difference is limited by roundoff on tiny entries. A
    // five-point stencil on entries of useful size pins the backward pass
    // down to 1e-8.
    let (_, g) = batch_loss_and_grads(&p, &batch).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-3;
    let mut checked = 0;
    for bi in 0..p.blocks.len() {
        for _ in 0..12 {
            let k = rng.gen_range(0..p.blocks[bi].data.len());
            let ga = g.blocks[bi][k];
            if ga.abs() < 1e-4 {
                continue;
            }
            let f = |d: f64| {
                let mut q = p.clone();
                q.blocks[bi].data[k] += d;
                batch_loss(&q, &batch).unwrap()
            };
            let gn = (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h);
            let rel = (ga - gn).abs() / ga.abs();
            assert!(rel < 1e-8, "{}[{k}]: {ga} vs {gn}", p.blocks[bi].name);
            checked += 1;
        }
    }
    assert!(checked >= 100, "{checked}");
}

// ---------- training ----------

fn toy_cfg() -> EncoderConfig {
    EncoderConfig::default()
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let cfg = EncoderConfig {
        vocab_size: 4096,
        ..toy_cfg()
    };
    let data = toy_dataset(&cfg, TrainStage::Two, 16, 2).unwrap();
    let p = EncoderParams::init(&cfg, 3).unwrap();
    let tc = TrainConfig {
        graph_lr: 0.0,
        steps: 6,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let out = train_toy(&data, p.clone(), &tc).unwrap();
    assert_eq!(out.params, p);
    let first = out.history[0].loss;
    assert!(out.history.iter().all(|h| (h.loss - first).abs() < 1e-12));
}

#[test]
fn toy_training_separates_pairs_and_is_reproducible() {
    let cfg = toy_cfg();
    let data = toy_dataset(&cfg, TrainStage::Two, 64, 7).unwrap();
    let p0 = EncoderParams::init(&cfg, 11).unwrap();
    let before = dataset_loss(&p0, &data).unwrap();
    let tc = TrainConfig::default();
    assert_eq!(
        (tc.steps, tc.graph_lr, tc.text_lr()),
        (200, 5e-5, 5e-5 * 0.1)
    );
    let a = train_toy(&data, p0.clone(), &tc).unwrap();
    let after = dataset_loss(&a.params, &data).unwrap();
    let hit = retrieval_hit_at_1(&a.params, &data).unwrap();
    assert_eq!(a.history.len(), 200);
    assert!(after <= 0.5 * before, "loss {before} -> {after}");
    assert!(hit >= 0.9, "hit@1 {hit}");
    let b = train_toy(&data, p0, &tc).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
    assert_eq!(write_checkpoint(&a.params), write_checkpoint(&b.params));
}

#[test]
fn stage_two_rates_keep_ten_to_one() {
    let cfg = EncoderConfig {
        vocab_size: 4096,
        ..toy_cfg()
    };
    let data = toy_dataset(&cfg, TrainStage::Two, 16, 4).unwrap();
    let p0 = EncoderParams::init(&cfg, 1).unwrap();
    let tc = TrainConfig {
        steps: 5,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let out = train_toy(&data, p0.clone(), &tc).unwrap();
    let rates = out.optimizer.applied_rates();
    assert_eq!(rates.len(), 5);
    for step in rates {
        for (b, &lr) in p0.blocks.iter().zip(step) {
            match b.group {
                BlockGroup::Graph => assert_eq!(lr, 5e-5),
                BlockGroup::Text => assert_eq!(lr, 5e-5 * 0.1),
            }
        }
    }
    for h in &out.history {
        assert!((h.lr_graph / h.lr_text - 10.0).abs() < 1e-12);
    }

    // The first Adam step moves each parameter by nearly its full rate, so
    // the largest move per block exposes the rate actually applied.
    let one = train_toy(&data, p0.clone(), &TrainConfig { steps: 1, ..tc }).unwrap();
    let mut graph_max: f64 = 0.0;
    let mut text_max: f64 = 0.0;
    for (b0, b1) in p0.blocks.iter().zip(&one.params.blocks) {
        let m = b0
            .data
            .iter()
            .zip(&b1.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        match b0.group {
            BlockGroup::Graph => graph_max = graph_max.max(m),
            BlockGroup::Text => text_max = text_max.max(m),
        }
        assert!(m <= 5e-5 * (1.0 + 1e-9), "{} moved {m}", b0.name);
    }
    assert!((graph_max / 5e-5 - 1.0).abs() < 1e-3, "{graph_max}");
    assert!((text_max / 5e-6 - 1.0).abs() < 1e-3, "{text_max}");
}

#[test]
fn stage_one_trains_text_queries() {
    let cfg = EncoderConfig {
        vocab_size: 4096,
        ..toy_cfg()
    };
    let data = toy_dataset(&cfg, TrainStage::One, 32, 5).unwrap();
    assert!(data.iter().all(|e| matches!(e.query, Query::Text(_))));
    let p0 = EncoderParams::init(&cfg, 2).unwrap();
    let before = dataset_loss(&p0, &data).unwrap();
    let tc = TrainConfig {
        stage: TrainStage::One,
        steps: 40,
        ..TrainConfig::default()
    };
    assert_eq!(tc.text_lr(), tc.graph_lr);
    let out = train_toy(&data, p0, &tc).unwrap();
    let after = dataset_loss(&out.params, &data).unwrap();
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn non_finite_parameters_abort_training() {
    let cfg = EncoderConfig {
        vocab_size: 4096,
        ..toy_cfg()
    };
    let data = toy_dataset(&cfg, TrainStage::Two, 8, 1).unwrap();
    let mut p = EncoderParams::init(&cfg, 1).unwrap();
    let last = p.blocks.len() - 1;
    p.blocks[last].data[0] = f64::NAN;
    let err = train_toy(&data, p, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, EncoderError::Numeric(_)), "{err}");
    assert!(err.to_string().contains("step 0"), "{err}");
}

#[test]
fn training_log_has_one_row_per_step() {
    let cfg = EncoderConfig {
        vocab_size: 4096,
        ..toy_cfg()
    };
    let data = toy_dataset(&cfg, TrainStage::Two, 8, 1).unwrap();
    let p = EncoderParams::init(&cfg, 1).unwrap();
    let tc = TrainConfig {
        steps: 3,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let out = train_toy(&data, p, &tc).unwrap();
    let csv = training_log_csv(&out.history).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,loss,lr_graph,lr_text");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,"));
    // A stray pair at the end of an epoch is skipped, not trained on.
    let odd = toy_dataset(&cfg, TrainStage::Two, 5, 1).unwrap();
    let tc = TrainConfig {
        steps: 4,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let p = EncoderParams::init(&cfg, 1).unwrap();
    assert_eq!(train_toy(&odd, p, &tc).unwrap().history.len(), 4);
}

#[test]
fn checkpoint_round_trips_trained_params() {
    let cfg = EncoderConfig {
        vocab_size: 4096,
        ..toy_cfg()
    };
    let data = toy_dataset(&cfg, TrainStage::Two, 8, 1).unwrap();
    let p = EncoderParams::init(&cfg, 1).unwrap();
    let tc = TrainConfig {
        steps: 2,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let trained = train_toy(&data, p, &tc).unwrap().params;
    let bytes = write_checkpoint(&trained);
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
    let back = read_checkpoint(&bytes).unwrap();
    assert_eq!(back, trained);
    assert_eq!(
        retrieval_hit_at_1(&back, &data).unwrap(),
        retrieval_hit_at_1(&trained, &data).unwrap()
    );
    let mut tampered = bytes.clone();
    let mid = bytes.len() / 2;
    tampered[mid] ^= 1;
    assert!(matches!(
        read_checkpoint(&tampered),
        Err(EncoderError::Checkpoint(_))
    ));
}

#[test]
fn batch_shape_errors() {
    let cfg = small_cfg();
    let p = hand_params(&cfg);
    let b = ContrastiveBatch {
        queries: vec![Query::Text(vec![1])],
        targets: vec![vec![2]],
    };
    assert!(matches!(batch_loss(&p, &b), Err(EncoderError::Shape(_))));
    let b = ContrastiveBatch {
        queries: vec![Query::Text(vec![1]), Query::Text(vec![999])],
        targets: vec![vec![2], vec![3]],
    };
    assert!(matches!(batch_loss(&p, &b), Err(EncoderError::Shape(_))));
    let ok = ContrastiveBatch {
        queries: vec![
            Query::Text(vec![1]),
            Query::Graph {
                graph: path_graph(&cfg, 3),
                instruction: vec![],
            },
        ],
        targets: vec![vec![2], vec![3, 4]],
    };
    let (l, g) = batch_loss_and_grads(&p, &ok).unwrap();
    assert!(l.is_finite() && g.is_finite());
    assert_eq!(l, batch_loss(&p, &ok).unwrap());
}
