//! Training objective: weighted reconstruction of the next adjacency, KL
//! divergence to a unit Gaussian prior, and L2 weight decay.

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Tape, Var};
use crate::error::{Result, TnaError};
use crate::graph::Snapshot;
use crate::layers::{Bound, ParamStore};
use crate::tensor::{axpy, dot, exp, gemm, Matrix, Strided};

/// Per-epoch loss terms; every term is minimised.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub kl: f64,
    pub l2: f64,
    pub total: f64,
}

/// Positive-class weight and normaliser for a target adjacency whose
/// diagonal counts as positive: `w_pos = (|V|² - n_pos) / n_pos`, `1/|V|²`.
pub fn reconstruction_weights(target: &Snapshot) -> Result<(f64, f64)> {
    let n = target.vertex_count() as f64;
    let n_pos = (2 * target.edge_count() + target.vertex_count()) as f64;
    if n_pos == 0.0 {
        return Err(TnaError::Degenerate(
            "target adjacency has no positive entries".into(),
        ));
    }
    Ok(((n * n - n_pos) / n_pos, 1.0 / (n * n)))
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + exp(-x.abs()).ln_1p()
}

/// Weighted binary cross-entropy of decoded probabilities `p` against the
/// target adjacency (diagonal set to 1), averaged over all `|V|²` entries.
pub fn reconstruction_loss(p: &Matrix, target: &Snapshot) -> Result<f64> {
    let n = target.vertex_count();
    if p.shape() != (n, n) {
        return Err(TnaError::shape("reconstruction", p.shape(), (n, n)));
    }
    let (w_pos, norm) = reconstruction_weights(target)?;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p.get(i, j);
            total -= if i == j || target.has_edge(i, j) {
                w_pos * pij.ln()
            } else {
                (1.0 - pij).ln()
            };
        }
    }
    Ok(total * norm)
}

const ROW_BLOCK: usize = 64;
// products of at most this many factors (1 + e), e ≤ 1, stay finite
const LOG_CHUNK: usize = 512;
const LANES: usize = 8;

/// Fused decoder and reconstruction loss. Returns the loss of
/// `σ(Z Zᵀ)` against `target` and its gradient with respect to `Z`,
/// working on logits so saturated probabilities stay finite. Only the upper
/// triangle is visited; the matrix is symmetric.
pub fn inner_product_reconstruction(z: &Matrix, target: &Snapshot) -> Result<(f64, Matrix)> {
    let n = target.vertex_count();
    if z.rows() != n {
        return Err(TnaError::shape("reconstruction", z.shape(), (n, n)));
    }
    let (w_pos, norm) = reconstruction_weights(target)?;
    let d = z.cols();
    let zs = z.as_slice();
    // holds ∂/∂Z divided by 2·norm until the end
    let mut grad = Matrix::zeros(n, d);
    let mut total = 0.0;

    for i in 0..n {
        let zi = &zs[i * d..(i + 1) * d];
        let x = dot(zi, zi);
        total += w_pos * softplus(-x);
        axpy(w_pos * (sigmoid(x) - 1.0), zi, grad.row_mut(i));
    }

    let mut tile = vec![0.0; ROW_BLOCK * n];
    let mut exps = vec![0.0; n];
    let mut row_grad = vec![0.0; ROW_BLOCK * d];
    for i0 in (0..n.saturating_sub(1)).step_by(ROW_BLOCK) {
        let i1 = (i0 + ROW_BLOCK).min(n);
        let (rows, j0) = (i1 - i0, i0 + 1);
        let width = n - j0;
        let tile = &mut tile[..rows * width];
        // logits of rows i0..i1 against columns j0..n
        gemm(
            (rows, d, width),
            1.0,
            Strided::new(&zs[i0 * d..], d, 1),
            Strided::new(&zs[j0 * d..], 1, d),
            0.0,
            tile,
            (width, 1),
        );
        for i in i0..i1 {
            let row = &mut tile[(i - i0) * width..][..width];
            let start = i + 1 - j0;
            row[..start].fill(0.0);
            let nbrs = target.neighbors(i);
            let edges = &nbrs[nbrs.partition_point(|&j| j <= i)..];
            for &j in edges {
                let x = row[j - j0];
                total += 2.0 * (w_pos * softplus(-x) - softplus(x));
            }
            // every entry as a negative first; edges are corrected below
            let exps = &mut exps[start..width];
            for (e, x) in exps.iter_mut().zip(&row[start..]) {
                *e = exp(-x.abs());
            }
            // softplus(x) = max(x, 0) + ln(1 + e); the logs are taken of
            // lane-wise products to keep the loop vectorised
            let mut linear = [0.0; LANES];
            for (xs, es) in row[start..]
                .chunks_mut(LOG_CHUNK)
                .zip(exps.chunks(LOG_CHUNK))
            {
                let mut product = [1.0; LANES];
                for (xl, el) in xs.chunks_mut(LANES).zip(es.chunks(LANES)) {
                    for (k, (x, &e)) in xl.iter_mut().zip(el).enumerate() {
                        linear[k] += x.max(0.0);
                        product[k] *= 1.0 + e;
                        let s = 1.0 / (1.0 + e);
                        *x = if *x >= 0.0 { s } else { e * s };
                    }
                }
                total += 2.0 * product.iter().map(|p| p.ln()).sum::<f64>();
            }
            total += 2.0 * linear.iter().sum::<f64>();
            for &j in edges {
                let s = &mut row[j - j0];
                *s = w_pos * (*s - 1.0);
            }
        }
        // rows: G_i += C Z_j; rows and columns overlap, so staged separately
        gemm(
            (rows, width, d),
            1.0,
            Strided::new(tile, width, 1),
            Strided::new(&zs[j0 * d..], d, 1),
            0.0,
            &mut row_grad[..rows * d],
            (d, 1),
        );
        // columns: G_j += Cᵀ Z_i
        gemm(
            (width, rows, d),
            1.0,
            Strided::new(tile, 1, width),
            Strided::new(&zs[i0 * d..], d, 1),
            1.0,
            &mut grad.as_mut_slice()[j0 * d..],
            (d, 1),
        );
        for (g, r) in grad.as_mut_slice()[i0 * d..i1 * d]
            .iter_mut()
            .zip(&row_grad)
        {
            *g += r;
        }
    }

    for g in grad.as_mut_slice() {
        *g *= 2.0 * norm;
    }
    Ok((total * norm, grad))
}

/// Records the fused reconstruction loss of embeddings `z` on the tape.
pub fn reconstruction_term(tape: &mut Tape, z: Var, target: &Snapshot) -> Result<Var> {
    let (value, grad) = inner_product_reconstruction(tape.value(z), target)?;
    tape.custom_scalar(z, value, grad)
}

/// `(1/|V|) Σ ½(μ² + σ² - 1 - log σ²)` with `σ = exp(logσ)`.
pub fn kl_loss(mu: &Matrix, log_sigma: &Matrix) -> Result<f64> {
    if mu.shape() != log_sigma.shape() {
        return Err(TnaError::shape("kl", mu.shape(), log_sigma.shape()));
    }
    let sum: f64 = mu
        .as_slice()
        .iter()
        .zip(log_sigma.as_slice())
        .map(|(m, ls)| 0.5 * (m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls))
        .sum();
    Ok(sum / mu.rows() as f64)
}

pub fn kl_term(tape: &mut Tape, mu: Var, log_sigma: Var) -> Result<Var> {
    let n = tape.value(mu).rows() as f64;
    let mu_sq = tape.hadamard(mu, mu)?;
    let log_var = tape.scale(log_sigma, 2.0);
    let var = tape.exp(log_var);
    let a = tape.add(mu_sq, var)?;
    let b = tape.sub(a, log_var)?;
    let c = tape.add_scalar(b, -1.0);
    let s = tape.sum(c);
    Ok(tape.scale(s, 0.5 / n))
}

/// `λ Σ θ²` over every parameter element.
pub fn l2_loss(params: &ParamStore, lambda: f64) -> f64 {
    lambda
        * params
            .values()
            .iter()
            .flat_map(|m| m.as_slice())
            .map(|v| v * v)
            .sum::<f64>()
}

pub fn l2_term(tape: &mut Tape, params: &Bound, lambda: f64) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for &p in params.vars() {
        let sq = tape.hadamard(p, p)?;
        let s = tape.sum(sq);
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    let acc = match acc {
        Some(a) => a,
        None => tape.constant(Matrix::scalar(0.0)),
    };
    Ok(tape.scale(acc, lambda))
}
