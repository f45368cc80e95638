//! Standalone network building blocks with plain (non-differentiating)
//! reference semantics. The training path in `graph.rs` reimplements these
//! on the tape; tests hold the two in agreement.

use ndarray::{Array1, Array2, Array3, Axis};

use crate::autodiff::sigmoid;
use crate::error::{Error, Result};

/// Causal temporal filter bank: one tap matrix (in-channels x out-channels)
/// per kernel position plus an output-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalFilter {
    pub taps: Vec<Array2<f64>>,
    pub bias: Array1<f64>,
}

impl TemporalFilter {
    pub fn kernel_width(&self) -> usize {
        self.taps.len()
    }

    pub fn zeros(kernel_width: usize, c_in: usize, c_out: usize) -> Self {
        TemporalFilter {
            taps: (0..kernel_width).map(|_| Array2::zeros((c_in, c_out))).collect(),
            bias: Array1::zeros(c_out),
        }
    }

    fn validate(&self, label: &str) -> Result<(usize, usize)> {
        if self.taps.is_empty() {
            return Err(Error::validation(format!("{label}: empty filter bank")));
        }
        let dim = self.taps[0].dim();
        if self.taps.iter().any(|t| t.dim() != dim) {
            return Err(Error::validation(format!("{label}: taps differ in shape")));
        }
        if self.bias.len() != dim.1 {
            return Err(Error::validation(format!(
                "{label}: bias length {} does not match {} output channels",
                self.bias.len(),
                dim.1
            )));
        }
        Ok(dim)
    }
}

/// Graph convolution: `relu(alpha_norm . features . weights)`.
pub fn graph_conv(
    features: &Array2<f64>,
    alpha_norm: &Array2<f64>,
    weights: &Array2<f64>,
) -> Result<Array2<f64>> {
    let (n, c) = features.dim();
    if alpha_norm.dim() != (n, n) {
        return Err(Error::validation(format!(
            "graph operator {:?} does not match {} feature rows",
            alpha_norm.dim(),
            n
        )));
    }
    if weights.nrows() != c {
        return Err(Error::validation(format!(
            "weights {:?} do not match {} feature channels",
            weights.dim(),
            c
        )));
    }
    let mixed = alpha_norm.dot(features).dot(weights);
    Ok(mixed.mapv(|x| x.max(0.0)))
}

/// Gated temporal convolution over a `(time, region, channel)` sequence:
/// causal 1-D convolutions produce branches U and V, combined as
/// `tanh(U) * sigmoid(V)`. Output length is `T - kernel_width + 1`.
pub fn gated_temporal_conv(
    sequence: &Array3<f64>,
    filter_u: &TemporalFilter,
    filter_v: &TemporalFilter,
) -> Result<Array3<f64>> {
    let (t_len, n, c_in) = sequence.dim();
    let (u_in, c_out) = filter_u.validate("U branch")?;
    let (v_in, v_out) = filter_v.validate("V branch")?;
    if u_in != c_in || v_in != c_in {
        return Err(Error::validation(format!(
            "filters expect {u_in}/{v_in} input channels, sequence has {c_in}"
        )));
    }
    if v_out != c_out {
        return Err(Error::validation(
            "U and V branches disagree on output channels",
        ));
    }
    let k = filter_u.kernel_width();
    if filter_v.kernel_width() != k {
        return Err(Error::validation("U and V branches disagree on kernel width"));
    }
    if t_len < k {
        return Err(Error::validation(format!(
            "sequence length {t_len} shorter than kernel width {k}"
        )));
    }
    let t_out = t_len - k + 1;
    let mut out = Array3::zeros((t_out, n, c_out));
    for t in 0..t_out {
        let mut u = filter_u
            .bias
            .broadcast((n, c_out))
            .expect("broadcast bias")
            .to_owned();
        let mut v = filter_v
            .bias
            .broadcast((n, c_out))
            .expect("broadcast bias")
            .to_owned();
        for j in 0..k {
            let x = sequence.index_axis(Axis(0), t + j);
            u = u + x.dot(&filter_u.taps[j]);
            v = v + x.dot(&filter_v.taps[j]);
        }
        let gated =
            ndarray::Zip::from(&u).and(&v).map_collect(|a, b| a.tanh() * sigmoid(*b));
        out.index_axis_mut(Axis(0), t).assign(&gated);
    }
    Ok(out)
}

/// Row-stochastic graph operator for the convolution: a unit self-loop is
/// added and each row is divided by its row sum plus that self-loop weight,
/// so rows sum to one and activations stay bounded. The raw coefficients
/// still drive the SIR rollout.
pub fn row_normalized(alpha: &Array2<f64>) -> Array2<f64> {
    let sums = alpha.sum_axis(Axis(1));
    let n = alpha.nrows();
    let mut out = alpha.clone();
    for i in 0..n {
        out[(i, i)] += 1.0;
    }
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let denom = sums[i] + 1.0;
        row.mapv_inplace(|x| x / denom);
    }
    out
}

/// Mean absolute error over all entries of two equally shaped matrices.
pub fn loss_mae(predicted: &Array2<f64>, observed: &Array2<f64>) -> Result<f64> {
    if predicted.dim() != observed.dim() {
        return Err(Error::validation(format!(
            "prediction {:?} and observation {:?} shapes differ",
            predicted.dim(),
            observed.dim()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::validation("cannot score empty matrices"));
    }
    let n = predicted.len() as f64;
    Ok(predicted
        .iter()
        .zip(observed.iter())
        .map(|(p, o)| (p - o).abs())
        .sum::<f64>()
        / n)
}
