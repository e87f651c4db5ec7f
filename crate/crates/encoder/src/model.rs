//! Forward and backward passes of the node encoder, edge encoder, GATv2
//! stack, readout and text encoder.

use urbangraph_core::subgraph::Subgraph;

use crate::features::{prepare_graph, GraphInput, RAW_EDGE_FEATURES};
use crate::loss::infonce_with_grads;
use crate::params::{EncoderParams, Grads, LayerIdx};
use crate::tensor::{acc_at_b, add_into, dot, matmul, matmul_bt};
use crate::EncoderError;

/// One side of a training pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    /// A subgraph around its center plus instruction tokens.
    Graph {
        graph: GraphInput,
        instruction: Vec<u32>,
    },
    /// Text-only query tokens.
    Text(Vec<u32>),
}

/// Queries paired by index with target token sequences; every other target
/// in the batch is a negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub queries: Vec<Query>,
    pub targets: Vec<Vec<u32>>,
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn check_tokens(p: &EncoderParams, tokens: &[u32]) -> Result<(), EncoderError> {
    let v = p.config().vocab_size;
    match tokens.iter().find(|&&t| t as usize >= v) {
        Some(t) => Err(EncoderError::Shape(format!(
            "token {t} outside vocabulary of {v}"
        ))),
        None => Ok(()),
    }
}

fn check_input(p: &EncoderParams, g: &GraphInput) -> Result<(), EncoderError> {
    let cfg = p.config();
    let n = g.len();
    let ok = n > 0
        && g.center < n
        && g.tokens.len() == n
        && g.text_override.len() == n
        && g.pe.len() == n * cfg.pe_dim
        && g.raw.len() == g.edges.len()
        && g.edges.iter().all(|&(a, b)| a < n && b < n);
    if !ok {
        return Err(EncoderError::Shape(format!(
            "inconsistent graph input with {n} nodes and {} edges",
            g.edges.len()
        )));
    }
    for t in &g.tokens {
        check_tokens(p, t)?;
    }
    if g.text_override
        .iter()
        .flatten()
        .any(|v| v.len() != cfg.token_dim)
    {
        return Err(EncoderError::Shape("text override of wrong width".into()));
    }
    Ok(())
}

fn pool(p: &EncoderParams, tokens: &[u32]) -> Vec<f64> {
    let td = p.config().token_dim;
    let table = p.data(p.layout.token_table);
    let mut v = vec![0.0; td];
    if tokens.is_empty() {
        return v;
    }
    for &t in tokens {
        let t = t as usize;
        add_into(&mut v, &table[t * td..(t + 1) * td]);
    }
    let count = tokens.len() as f64;
    for x in &mut v {
        *x /= count;
    }
    v
}

fn pool_backward(p: &EncoderParams, tokens: &[u32], dpool: &[f64], grads: &mut Grads) {
    let td = p.config().token_dim;
    let count = tokens.len() as f64;
    let table = &mut grads.blocks[p.layout.token_table];
    for &t in tokens {
        let t = t as usize;
        for (g, d) in table[t * td..(t + 1) * td].iter_mut().zip(dpool) {
            *g += d / count;
        }
    }
}

/// Pooled tokens projected into the embedding space.
pub fn embed_text(p: &EncoderParams, tokens: &[u32]) -> Result<Vec<f64>, EncoderError> {
    check_tokens(p, tokens)?;
    let cfg = p.config();
    Ok(matmul(
        &pool(p, tokens),
        p.data(p.layout.text_proj),
        1,
        cfg.token_dim,
        cfg.hidden_dim,
    ))
}

fn embed_text_backward(p: &EncoderParams, tokens: &[u32], dout: &[f64], grads: &mut Grads) {
    let cfg = p.config();
    let (td, d) = (cfg.token_dim, cfg.hidden_dim);
    let pooled = pool(p, tokens);
    acc_at_b(
        &mut grads.blocks[p.layout.text_proj],
        &pooled,
        dout,
        1,
        td,
        d,
    );
    if !tokens.is_empty() {
        let dpool = matmul_bt(dout, p.data(p.layout.text_proj), 1, d, td);
        pool_backward(p, tokens, &dpool, grads);
    }
}

/// Node input rows: pooled text (or its override) followed by the position
/// code.
fn node_inputs(p: &EncoderParams, g: &GraphInput) -> Vec<f64> {
    let cfg = p.config();
    let mut x = Vec::with_capacity(g.len() * (cfg.token_dim + cfg.pe_dim));
    for i in 0..g.len() {
        match &g.text_override[i] {
            Some(v) => x.extend_from_slice(v),
            None => x.extend(pool(p, &g.tokens[i])),
        }
        x.extend_from_slice(&g.pe[i * cfg.pe_dim..(i + 1) * cfg.pe_dim]);
    }
    x
}

/// Initial node states `[text ‖ pe] · W + b`, one row per node.
pub fn encode_nodes(p: &EncoderParams, g: &GraphInput) -> Result<Vec<f64>, EncoderError> {
    check_input(p, g)?;
    Ok(encode_nodes_from(p, g.len(), &node_inputs(p, g)))
}

fn encode_nodes_from(p: &EncoderParams, n: usize, x: &[f64]) -> Vec<f64> {
    let cfg = p.config();
    let d = cfg.hidden_dim;
    let mut h = matmul(x, p.data(p.layout.node_w), n, cfg.token_dim + cfg.pe_dim, d);
    let b = p.data(p.layout.node_b);
    for row in h.chunks_mut(d) {
        add_into(row, b);
    }
    h
}

/// Directed edges with self-loops appended, and their raw features (zero for
/// self-loops), flattened.
fn all_edges(g: &GraphInput) -> (Vec<(usize, usize)>, Vec<f64>) {
    let mut edges = g.edges.clone();
    edges.extend((0..g.len()).map(|i| (i, i)));
    let mut raw: Vec<f64> = g.raw.iter().flatten().copied().collect();
    raw.resize(edges.len() * RAW_EDGE_FEATURES, 0.0);
    (edges, raw)
}

/// Hidden activations and the output before its bias.
fn edge_mlp(p: &EncoderParams, raw: &[f64], ne: usize) -> (Vec<f64>, Vec<f64>) {
    let l = &p.layout;
    let ed = p.config().edge_dim;
    let mut u = matmul(raw, p.data(l.edge_w1), ne, RAW_EDGE_FEATURES, ed);
    for row in u.chunks_mut(ed) {
        add_into(row, p.data(l.edge_b1));
        for x in row.iter_mut() {
            *x = x.tanh();
        }
    }
    let out = matmul(&u, p.data(l.edge_w2), ne, ed, ed);
    (u, out)
}

fn add_rows(m: &mut [f64], bias: &[f64]) {
    for row in m.chunks_mut(bias.len()) {
        add_into(row, bias);
    }
}

/// Encoded edge features for `g.edges` followed by one self-loop per node.
pub fn encode_edges(p: &EncoderParams, g: &GraphInput) -> Result<Vec<f64>, EncoderError> {
    check_input(p, g)?;
    let (edges, raw) = all_edges(g);
    let mut e = edge_mlp(p, &raw, edges.len()).1;
    add_rows(&mut e, p.data(p.layout.edge_b2));
    Ok(e)
}

struct LayerTape {
    h_in: Vec<f64>,
    t: Vec<f64>,
    g: Vec<f64>,
    alpha: Vec<f64>,
    msg: Vec<f64>,
    yhat: Vec<f64>,
    inv_std: Vec<f64>,
}

fn incoming(edges: &[(usize, usize)], n: usize) -> Vec<Vec<usize>> {
    let mut inc = vec![Vec::new(); n];
    for (k, &(_, dst)) in edges.iter().enumerate() {
        inc[dst].push(k);
    }
    inc
}

#[allow(clippy::too_many_arguments)]
fn layer_forward(
    p: &EncoderParams,
    li: &LayerIdx,
    h: &[f64],
    e: &[f64],
    e_bias: Option<&[f64]>,
    edges: &[(usize, usize)],
    inc: &[Vec<usize>],
    mut signs: Option<&mut Vec<bool>>,
) -> (Vec<f64>, LayerTape) {
    let cfg = p.config();
    let (d, ed, heads, hd) = (cfg.hidden_dim, cfg.edge_dim, cfg.num_heads, cfg.head_dim());
    let n = h.len() / d;
    let ne = edges.len();
    let s = matmul(h, p.data(li.w_s), n, d, d);
    let t = matmul(h, p.data(li.w_t), n, d, d);
    let ee = matmul(e, p.data(li.w_e), ne, ed, d);
    let att = p.data(li.att);
    // The edge bias is shared by every edge, so it joins the per-node term.
    let mut s = s;
    if let Some(b) = e_bias {
        add_rows(&mut s, &matmul(b, p.data(li.w_e), 1, ed, d));
    }

    // u = W_t h_j + W_e e_ij and g = W_s h_i + u.
    let mut u = vec![0.0; ne * d];
    let mut g = vec![0.0; ne * d];
    for (k, &(src, dst)) in edges.iter().enumerate() {
        for c in 0..d {
            let uk = t[src * d + c] + ee[k * d + c];
            u[k * d + c] = uk;
            g[k * d + c] = s[dst * d + c] + uk;
        }
        // With slope 1 there is no kink to guard against.
        if let Some(sg) = signs.as_deref_mut().filter(|_| cfg.leaky_slope != 1.0) {
            sg.extend(g[k * d..(k + 1) * d].iter().map(|&x| x > 0.0));
        }
    }

    // Scores are taken relative to the first incoming edge. Where both
    // pre-activations share a sign the per-node term cancels, and dropping
    // it before rounding keeps the cancellation exact, so softmax sees
    // bitwise the same inputs whatever that term is.
    let slope = cfg.leaky_slope;
    let mut score = vec![0.0; ne * heads];
    for ks in inc {
        let Some(&k0) = ks.first() else { continue };
        for &k in ks {
            for hh in 0..heads {
                let mut acc = 0.0;
                for c in hh * hd..(hh + 1) * hd {
                    let (a, b) = (g[k * d + c], g[k0 * d + c]);
                    let delta = if slope == 1.0 || (a > 0.0) == (b > 0.0) {
                        let m = if a > 0.0 { 1.0 } else { slope };
                        m * (u[k * d + c] - u[k0 * d + c])
                    } else {
                        leaky(a, slope) - leaky(b, slope)
                    };
                    acc += att[c] * delta;
                }
                score[k * heads + hh] = acc;
            }
        }
    }

    let mut alpha = vec![0.0; ne * heads];
    for ks in inc {
        for hh in 0..heads {
            let m = ks
                .iter()
                .map(|&k| score[k * heads + hh])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &k in ks {
                let w = (score[k * heads + hh] - m).exp();
                alpha[k * heads + hh] = w;
                sum += w;
            }
            for &k in ks {
                alpha[k * heads + hh] /= sum;
            }
        }
    }

    let mut msg = vec![0.0; n * d];
    for (k, &(src, dst)) in edges.iter().enumerate() {
        for hh in 0..heads {
            let a = alpha[k * heads + hh];
            for c in hh * hd..(hh + 1) * hd {
                msg[dst * d + c] += a * t[src * d + c];
            }
        }
    }

    let mut y = matmul(&msg, p.data(li.w_o), n, d, d);
    add_into(&mut y, h);
    let mut yhat = Vec::new();
    let mut inv_std = Vec::new();
    if cfg.layer_norm {
        let (gamma, beta) = (p.data(li.ln_g), p.data(li.ln_b));
        yhat = vec![0.0; n * d];
        inv_std = vec![0.0; n];
        for i in 0..n {
            let row = &mut y[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + cfg.layer_norm_eps).sqrt();
            inv_std[i] = is;
            for c in 0..d {
                let yh = (row[c] - mean) * is;
                yhat[i * d + c] = yh;
                row[c] = gamma[c] * yh + beta[c];
            }
        }
    }
    (
        y,
        LayerTape {
            h_in: h.to_vec(),
            t,
            g,
            alpha,
            msg,
            yhat,
            inv_std,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn layer_backward(
    p: &EncoderParams,
    li: &LayerIdx,
    tape: &LayerTape,
    dout: &[f64],
    e: &[f64],
    edges: &[(usize, usize)],
    inc: &[Vec<usize>],
    grads: &mut Grads,
    de: &mut [f64],
) -> Vec<f64> {
    let cfg = p.config();
    let (d, ed, heads, hd) = (cfg.hidden_dim, cfg.edge_dim, cfg.num_heads, cfg.head_dim());
    let n = tape.h_in.len() / d;
    let ne = edges.len();

    let dy = if cfg.layer_norm {
        let gamma = p.data(li.ln_g);
        let mut dy = vec![0.0; n * d];
        for i in 0..n {
            let r = i * d..(i + 1) * d;
            let (dout_r, yhat_r) = (&dout[r.clone()], &tape.yhat[r.clone()]);
            for c in 0..d {
                grads.blocks[li.ln_g][c] += dout_r[c] * yhat_r[c];
                grads.blocks[li.ln_b][c] += dout_r[c];
            }
            let dyhat: Vec<f64> = (0..d).map(|c| dout_r[c] * gamma[c]).collect();
            let m1 = dyhat.iter().sum::<f64>() / d as f64;
            let m2 = dot(&dyhat, yhat_r) / d as f64;
            for c in 0..d {
                dy[i * d + c] = tape.inv_std[i] * (dyhat[c] - m1 - yhat_r[c] * m2);
            }
        }
        dy
    } else {
        dout.to_vec()
    };

    let mut dh = dy.clone();
    acc_at_b(&mut grads.blocks[li.w_o], &tape.msg, &dy, n, d, d);
    let dmsg = matmul_bt(&dy, p.data(li.w_o), n, d, d);

    let mut dt = vec![0.0; n * d];
    let mut ds = vec![0.0; n * d];
    let mut dee = vec![0.0; ne * d];
    let mut dalpha = vec![0.0; ne * heads];
    for (k, &(src, dst)) in edges.iter().enumerate() {
        for hh in 0..heads {
            let a = tape.alpha[k * heads + hh];
            let mut acc = 0.0;
            for c in hh * hd..(hh + 1) * hd {
                acc += dmsg[dst * d + c] * tape.t[src * d + c];
                dt[src * d + c] += a * dmsg[dst * d + c];
            }
            dalpha[k * heads + hh] = acc;
        }
    }
    let mut dscore = vec![0.0; ne * heads];
    for ks in inc {
        for hh in 0..heads {
            let inner: f64 = ks
                .iter()
                .map(|&k| tape.alpha[k * heads + hh] * dalpha[k * heads + hh])
                .sum();
            for &k in ks {
                dscore[k * heads + hh] =
                    tape.alpha[k * heads + hh] * (dalpha[k * heads + hh] - inner);
            }
        }
    }
    let att = p.data(li.att);
    for (k, &(src, dst)) in edges.iter().enumerate() {
        for c in 0..d {
            let ds_k = dscore[k * heads + c / hd];
            let gv = tape.g[k * d + c];
            grads.blocks[li.att][c] += ds_k * leaky(gv, cfg.leaky_slope);
            let slope = if gv > 0.0 { 1.0 } else { cfg.leaky_slope };
            let dg = ds_k * att[c] * slope;
            ds[dst * d + c] += dg;
            dt[src * d + c] += dg;
            dee[k * d + c] = dg;
        }
    }
    acc_at_b(&mut grads.blocks[li.w_e], e, &dee, ne, ed, d);
    add_into(de, &matmul_bt(&dee, p.data(li.w_e), ne, d, ed));
    acc_at_b(&mut grads.blocks[li.w_s], &tape.h_in, &ds, n, d, d);
    acc_at_b(&mut grads.blocks[li.w_t], &tape.h_in, &dt, n, d, d);
    add_into(&mut dh, &matmul_bt(&ds, p.data(li.w_s), n, d, d));
    add_into(&mut dh, &matmul_bt(&dt, p.data(li.w_t), n, d, d));
    dh
}

/// One attention layer applied to node states `h` (`n × d`) with encoded
/// edge features `e` laid out as [`encode_edges`] returns them.
pub fn gatv2_layer(
    p: &EncoderParams,
    layer: usize,
    h: &[f64],
    e: &[f64],
    g: &GraphInput,
) -> Result<Vec<f64>, EncoderError> {
    check_input(p, g)?;
    let cfg = p.config();
    let (edges, _) = all_edges(g);
    let li = p
        .layout
        .layers
        .get(layer)
        .ok_or_else(|| EncoderError::Shape(format!("no layer {layer}")))?;
    if h.len() != g.len() * cfg.hidden_dim || e.len() != edges.len() * cfg.edge_dim {
        return Err(EncoderError::Shape(format!(
            "layer input of {} states and {} edge values does not fit {} nodes and {} edges",
            h.len(),
            e.len(),
            g.len(),
            edges.len()
        )));
    }
    Ok(layer_forward(p, li, h, e, None, &edges, &incoming(&edges, g.len()), None).0)
}

struct GraphTape {
    x: Vec<f64>,
    raw: Vec<f64>,
    u: Vec<f64>,
    e: Vec<f64>,
    edges: Vec<(usize, usize)>,
    inc: Vec<Vec<usize>>,
    layers: Vec<LayerTape>,
    h: Vec<f64>,
}

fn graph_forward(
    p: &EncoderParams,
    g: &GraphInput,
    mut signs: Option<&mut Vec<bool>>,
) -> (Vec<f64>, GraphTape) {
    let cfg = p.config();
    let d = cfg.hidden_dim;
    let n = g.len();
    let x = node_inputs(p, g);
    let mut h = encode_nodes_from(p, n, &x);
    let (edges, raw) = all_edges(g);
    let (u, e_core) = edge_mlp(p, &raw, edges.len());
    let mut e = e_core.clone();
    add_rows(&mut e, p.data(p.layout.edge_b2));
    let inc = incoming(&edges, n);
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for li in &p.layout.layers {
        let (out, tape) = layer_forward(
            p,
            li,
            &h,
            &e_core,
            Some(p.data(p.layout.edge_b2)),
            &edges,
            &inc,
            signs.as_deref_mut(),
        );
        layers.push(tape);
        h = out;
    }
    let emb = matmul(
        &h[g.center * d..(g.center + 1) * d],
        p.data(p.layout.readout),
        1,
        d,
        d,
    );
    (
        emb,
        GraphTape {
            x,
            raw,
            u,
            e,
            edges,
            inc,
            layers,
            h,
        },
    )
}

fn graph_backward(
    p: &EncoderParams,
    g: &GraphInput,
    tape: &GraphTape,
    demb: &[f64],
    grads: &mut Grads,
) {
    let cfg = p.config();
    let (d, ed, td) = (cfg.hidden_dim, cfg.edge_dim, cfg.token_dim);
    let n = g.len();
    let ne = tape.edges.len();
    let l = &p.layout;

    let hc = &tape.h[g.center * d..(g.center + 1) * d];
    acc_at_b(&mut grads.blocks[l.readout], hc, demb, 1, d, d);
    let mut dh = vec![0.0; n * d];
    dh[g.center * d..(g.center + 1) * d].copy_from_slice(&matmul_bt(
        demb,
        p.data(l.readout),
        1,
        d,
        d,
    ));

    let mut de = vec![0.0; ne * ed];
    for (li, lt) in l.layers.iter().zip(&tape.layers).rev() {
        dh = layer_backward(
            p,
            li,
            lt,
            &dh,
            &tape.e,
            &tape.edges,
            &tape.inc,
            grads,
            &mut de,
        );
    }

    // Edge encoder.
    acc_at_b(&mut grads.blocks[l.edge_w2], &tape.u, &de, ne, ed, ed);
    for row in de.chunks(ed) {
        add_into(&mut grads.blocks[l.edge_b2], row);
    }
    let mut dz = matmul_bt(&de, p.data(l.edge_w2), ne, ed, ed);
    for (z, u) in dz.iter_mut().zip(&tape.u) {
        *z *= 1.0 - u * u;
    }
    acc_at_b(
        &mut grads.blocks[l.edge_w1],
        &tape.raw,
        &dz,
        ne,
        RAW_EDGE_FEATURES,
        ed,
    );
    for row in dz.chunks(ed) {
        add_into(&mut grads.blocks[l.edge_b1], row);
    }

    // Node encoder.
    let xin = td + cfg.pe_dim;
    acc_at_b(&mut grads.blocks[l.node_w], &tape.x, &dh, n, xin, d);
    for row in dh.chunks(d) {
        add_into(&mut grads.blocks[l.node_b], row);
    }
    let dx = matmul_bt(&dh, p.data(l.node_w), n, d, xin);
    for i in 0..n {
        if g.text_override[i].is_none() && !g.tokens[i].is_empty() {
            pool_backward(p, &g.tokens[i], &dx[i * xin..i * xin + td], grads);
        }
    }
}

/// Final node states after every attention layer (`n × d`).
pub fn node_states(p: &EncoderParams, g: &GraphInput) -> Result<Vec<f64>, EncoderError> {
    check_input(p, g)?;
    Ok(graph_forward(p, g, None).1.h)
}

/// Readout of the center node after message passing.
pub fn graph_embedding_of(p: &EncoderParams, g: &GraphInput) -> Result<Vec<f64>, EncoderError> {
    check_input(p, g)?;
    Ok(graph_forward(p, g, None).0)
}

/// Embedding of a subgraph as seen from `center`.
pub fn graph_embedding(
    s: &Subgraph,
    center: &str,
    p: &EncoderParams,
) -> Result<Vec<f64>, EncoderError> {
    let g = prepare_graph(s, center, p.config(), None)?;
    graph_embedding_of(p, &g)
}

/// Query embedding: graph readout plus instruction text, or text alone.
pub fn embed_query(p: &EncoderParams, q: &Query) -> Result<Vec<f64>, EncoderError> {
    match q {
        Query::Graph { graph, instruction } => {
            let mut v = graph_embedding_of(p, graph)?;
            add_into(&mut v, &embed_text(p, instruction)?);
            Ok(v)
        }
        Query::Text(t) => embed_text(p, t),
    }
}

fn check_batch(p: &EncoderParams, b: &ContrastiveBatch) -> Result<(), EncoderError> {
    if b.queries.len() != b.targets.len() || b.queries.len() < 2 {
        return Err(EncoderError::Shape(format!(
            "batch needs matching query/target counts of at least 2, got {} and {}",
            b.queries.len(),
            b.targets.len()
        )));
    }
    for q in &b.queries {
        match q {
            Query::Graph { graph, instruction } => {
                check_input(p, graph)?;
                check_tokens(p, instruction)?;
            }
            Query::Text(t) => check_tokens(p, t)?,
        }
    }
    for t in &b.targets {
        check_tokens(p, t)?;
    }
    Ok(())
}

enum QueryTape {
    Graph(GraphTape),
    Text,
}

/// Query embeddings, their tapes, and target embeddings.
type BatchForward = (Vec<Vec<f64>>, Vec<QueryTape>, Vec<Vec<f64>>);

fn forward_batch(
    p: &EncoderParams,
    b: &ContrastiveBatch,
    mut signs: Option<&mut Vec<bool>>,
) -> Result<BatchForward, EncoderError> {
    check_batch(p, b)?;
    let mut qs = Vec::with_capacity(b.queries.len());
    let mut tapes = Vec::with_capacity(b.queries.len());
    for q in &b.queries {
        match q {
            Query::Graph { graph, instruction } => {
                let (mut v, tape) = graph_forward(p, graph, signs.as_deref_mut());
                add_into(&mut v, &embed_text(p, instruction)?);
                qs.push(v);
                tapes.push(QueryTape::Graph(tape));
            }
            Query::Text(t) => {
                qs.push(embed_text(p, t)?);
                tapes.push(QueryTape::Text);
            }
        }
    }
    let ts = b
        .targets
        .iter()
        .map(|t| embed_text(p, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((qs, tapes, ts))
}

/// Batch InfoNCE loss.
pub fn batch_loss(p: &EncoderParams, b: &ContrastiveBatch) -> Result<f64, EncoderError> {
    let (qs, _, ts) = forward_batch(p, b, None)?;
    crate::loss::infonce_loss(&qs, &ts, p.config().temperature)
}

/// Loss plus the sign pattern of every attention pre-activation, so callers
/// can tell when a perturbation crossed a LeakyReLU kink.
pub(crate) fn batch_loss_signed(
    p: &EncoderParams,
    b: &ContrastiveBatch,
) -> Result<(f64, Vec<bool>), EncoderError> {
    let mut signs = Vec::new();
    let (qs, _, ts) = forward_batch(p, b, Some(&mut signs))?;
    Ok((
        crate::loss::infonce_loss(&qs, &ts, p.config().temperature)?,
        signs,
    ))
}

/// Batch loss and the analytic gradient of every parameter.
pub fn batch_loss_and_grads(
    p: &EncoderParams,
    b: &ContrastiveBatch,
) -> Result<(f64, Grads), EncoderError> {
    let (qs, tapes, ts) = forward_batch(p, b, None)?;
    let (loss, dq, dt) = infonce_with_grads(&qs, &ts, p.config().temperature)?;
    let mut grads = p.zero_grads();
    for ((q, tape), d) in b.queries.iter().zip(&tapes).zip(&dq) {
        match (q, tape) {
            (Query::Graph { graph, instruction }, QueryTape::Graph(gt)) => {
                graph_backward(p, graph, gt, d, &mut grads);
                embed_text_backward(p, instruction, d, &mut grads);
            }
            (Query::Text(t), _) => embed_text_backward(p, t, d, &mut grads),
            _ => unreachable!("tapes follow queries"),
        }
    }
    for (t, d) in b.targets.iter().zip(&dt) {
        embed_text_backward(p, t, d, &mut grads);
    }
    Ok((loss, grads))
}
