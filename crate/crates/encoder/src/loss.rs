//! InfoNCE over in-batch negatives with temperature-scaled cosine similarity.

use crate::EncoderError;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    crate::tensor::dot(a, b) / (norm(a) * norm(b))
}

fn check(q: &[Vec<f64>], t: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>), EncoderError> {
    if q.len() != t.len() || q.len() < 2 {
        return Err(EncoderError::Shape(format!(
            "need equal query and target counts of at least 2, got {} and {}",
            q.len(),
            t.len()
        )));
    }
    let dim = q[0].len();
    if q.iter().chain(t).any(|v| v.len() != dim) {
        return Err(EncoderError::Shape("embeddings differ in dimension".into()));
    }
    let qn: Vec<f64> = q.iter().map(|v| norm(v)).collect();
    let tn: Vec<f64> = t.iter().map(|v| norm(v)).collect();
    if let Some(i) = qn.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(EncoderError::Numeric(format!(
            "query embedding {i} has norm {}",
            qn[i]
        )));
    }
    if let Some(i) = tn.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(EncoderError::Numeric(format!(
            "target embedding {i} has norm {}",
            tn[i]
        )));
    }
    Ok((qn, tn))
}

/// Mean over queries of `-ln softmax_j(cos(q_i, t_j) / T)[i]`.
pub fn infonce_loss(q: &[Vec<f64>], t: &[Vec<f64>], temperature: f64) -> Result<f64, EncoderError> {
    Ok(infonce_with_grads(q, t, temperature)?.0)
}

/// Loss with its gradients with respect to every query and target vector.
#[allow(clippy::type_complexity)]
pub fn infonce_with_grads(
    q: &[Vec<f64>],
    t: &[Vec<f64>],
    temperature: f64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>), EncoderError> {
    let (qn, tn) = check(q, t)?;
    let b = q.len();
    let cos: Vec<Vec<f64>> = (0..b)
        .map(|i| {
            (0..b)
                .map(|j| crate::tensor::dot(&q[i], &t[j]) / (qn[i] * tn[j]))
                .collect()
        })
        .collect();
    let mut loss = 0.0;
    // dL/dcos
    let mut g = vec![vec![0.0; b]; b];
    for i in 0..b {
        let z: Vec<f64> = cos[i].iter().map(|c| c / temperature).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|x| (x - m).exp()).sum();
        loss += m + sum.ln() - z[i];
        for j in 0..b {
            let p = (z[j] - m).exp() / sum;
            let delta = if i == j { 1.0 } else { 0.0 };
            g[i][j] = (p - delta) / (b as f64 * temperature);
        }
    }
    loss /= b as f64;
    if !loss.is_finite() {
        return Err(EncoderError::Numeric(format!("loss is {loss}")));
    }
    let dim = q[0].len();
    let mut dq = vec![vec![0.0; dim]; b];
    let mut dt = vec![vec![0.0; dim]; b];
    for i in 0..b {
        for j in 0..b {
            let gij = g[i][j];
            let c = cos[i][j];
            for k in 0..dim {
                dq[i][k] += gij * (t[j][k] / (qn[i] * tn[j]) - c * q[i][k] / (qn[i] * qn[i]));
                dt[j][k] += gij * (q[i][k] / (qn[i] * tn[j]) - c * t[j][k] / (tn[j] * tn[j]));
            }
        }
    }
    Ok((loss, dq, dt))
}
