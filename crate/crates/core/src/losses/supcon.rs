use ndarray::Array2;

use crate::embeddings::{dot, EmbeddingBatch};
use crate::error::{RefcalError, Result};
use crate::exec::{map_indexed, ordered_sum, ExecMode};

use super::LossValue;

/// Supervised contrastive loss, summed over anchors, with similarities
/// divided by `tau` inside the exponential.
///
/// The gradient, when requested, is taken with respect to the unit
/// embeddings; callers chain the normalization Jacobian themselves.
pub fn supcon_loss(batch: &EmbeddingBatch, tau: f64, want_gradient: bool) -> Result<LossValue> {
    supcon_loss_with(batch, tau, want_gradient, ExecMode::default())
}

struct AnchorTerm {
    loss: f64,
    // d loss_i / d s_ia for every a (zero at a = i), with s_ia = z_i . z_a / tau
    coeffs: Vec<f64>,
}

pub fn supcon_loss_with(batch: &EmbeddingBatch, tau: f64, want_gradient: bool, mode: ExecMode) -> Result<LossValue> {
    if !(tau > 0.0) {
        return Err(RefcalError::NonPositiveTemperature(tau));
    }
    batch.require_pairs(false)?;
    let n = batch.len();
    let labels = batch.labels();

    let terms = map_indexed(n, mode, |i| {
        let zi = batch.row(i);
        let sims: Vec<f64> = (0..n)
            .map(|a| if a == i { f64::NEG_INFINITY } else { dot(zi, batch.row(a)) / tau })
            .collect();
        let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = sims.iter().map(|&s| (s - max).exp()).sum();
        let lse = max + denom.ln();

        let mut pos_count = 0usize;
        let mut pos_sum = 0.0;
        for a in 0..n {
            if a != i && labels[a] == labels[i] {
                pos_count += 1;
                pos_sum += sims[a];
            }
        }
        let loss = lse - pos_sum / pos_count as f64;

        let coeffs = if want_gradient {
            let inv_p = 1.0 / pos_count as f64;
            (0..n)
                .map(|a| {
                    if a == i {
                        0.0
                    } else {
                        let q = (sims[a] - lse).exp();
                        if labels[a] == labels[i] {
                            q - inv_p
                        } else {
                            q
                        }
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        AnchorTerm { loss, coeffs }
    });

    let losses: Vec<f64> = terms.iter().map(|t| t.loss).collect();
    let value = ordered_sum(&losses);

    let gradient = if want_gradient {
        // dL/dz_k = (1/tau) sum_a (C_ka + C_ak) z_a
        let d = batch.dim();
        let rows = map_indexed(n, mode, |k| {
            let mut g = vec![0.0; d];
            for a in 0..n {
                let c = terms[k].coeffs[a] + terms[a].coeffs[k];
                if c != 0.0 {
                    for (gv, zv) in g.iter_mut().zip(batch.row(a)) {
                        *gv += c * zv;
                    }
                }
            }
            g.iter_mut().for_each(|v| *v /= tau);
            g
        });
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Some(Array2::from_shape_vec((n, d), flat).expect("gradient shape"))
    } else {
        None
    };

    Ok(LossValue { value, gradient })
}
