//! Differentiable forward path on the autodiff tape: interaction build,
//! spatio-temporal layers, output heads, and the SIR rollout whose daily
//! infections feed the MAE loss. Rebuilt per window; gradients reach every
//! parameter, including the learned log-mobility.

use ndarray::{Array1, Array2};

use crate::autodiff::{NodeId, Tape};
use crate::domain::{EpiSeries, RegionSet};
use crate::error::{Error, Result};
use crate::sir::ParamTrack;

use super::ModelState;

pub(crate) struct LayerLeaves {
    pub u_taps: Vec<NodeId>,
    pub u_bias: NodeId,
    pub v_taps: Vec<NodeId>,
    pub v_bias: NodeId,
    pub graph_w: NodeId,
}

pub(crate) struct ParamLeaves {
    /// Leaves in the canonical parameter order used by
    /// [`ModelState::param_vector`].
    pub flat: Vec<NodeId>,
    pub layers: Vec<LayerLeaves>,
    pub head1_w: NodeId,
    pub head1_b: NodeId,
    pub head2_w: NodeId,
    pub head2_b: NodeId,
    pub mobility: NodeId,
}

pub(crate) fn insert_param_leaves(tape: &mut Tape, model: &ModelState) -> ParamLeaves {
    let mut flat = Vec::new();
    let mut layers = Vec::new();
    for layer in &model.layers {
        let u_taps: Vec<NodeId> = layer
            .u_taps
            .iter()
            .map(|t| {
                let id = tape.leaf2(t.clone());
                flat.push(id);
                id
            })
            .collect();
        let u_bias = tape.leaf1(layer.u_bias.clone());
        flat.push(u_bias);
        let v_taps: Vec<NodeId> = layer
            .v_taps
            .iter()
            .map(|t| {
                let id = tape.leaf2(t.clone());
                flat.push(id);
                id
            })
            .collect();
        let v_bias = tape.leaf1(layer.v_bias.clone());
        flat.push(v_bias);
        let graph_w = tape.leaf2(layer.graph_w.clone());
        flat.push(graph_w);
        layers.push(LayerLeaves {
            u_taps,
            u_bias,
            v_taps,
            v_bias,
            graph_w,
        });
    }
    let head1_w = tape.leaf2(model.head1_w.clone());
    flat.push(head1_w);
    let head1_b = tape.leaf1(model.head1_b.clone());
    flat.push(head1_b);
    let head2_w = tape.leaf2(model.head2_w.clone());
    flat.push(head2_w);
    let head2_b = tape.leaf1(model.head2_b.clone());
    flat.push(head2_b);
    let mobility = tape.leaf1(model.adaptive_log_mobility.clone());
    flat.push(mobility);
    ParamLeaves {
        flat,
        layers,
        head1_w,
        head1_b,
        head2_w,
        head2_b,
        mobility,
    }
}

pub(crate) struct NetworkNodes {
    pub beta: NodeId,
    pub gamma: NodeId,
    /// Raw (unnormalized) interaction coefficients from the learned mobility.
    pub alpha: NodeId,
}

/// Builds the network: learned interaction, stacked (gated temporal conv ->
/// graph conv) layers, time collapse by mean pooling, then the two heads.
pub(crate) fn network_graph(
    tape: &mut Tape,
    leaves: &ParamLeaves,
    model: &ModelState,
    features: &[Array2<f64>],
    populations: &Array1<f64>,
) -> NetworkNodes {
    let n = model.n_regions;

    let h_log = tape.symmetrize_pairs(leaves.mobility, n);
    let h = tape.exp(h_log);
    let p = tape.leaf1(populations.clone());
    let by_origin = tape.div_col(h, p); // h[m][n] / P_m
    let by_dest = tape.div_row(h, p); // h[m][n] / P_n (= h[n][m] / P_n, h symmetric)
    let alpha = tape.add(by_origin, by_dest);

    let eye = tape.leaf2(Array2::eye(n));
    let alpha_loop = tape.add(alpha, eye);
    let sums = tape.row_sum(alpha);
    let denom = tape.shift(sums, 1.0);
    let alpha_norm = tape.div_col(alpha_loop, denom);

    let mut seq: Vec<NodeId> = features.iter().map(|f| tape.leaf2(f.clone())).collect();
    for layer in &leaves.layers {
        let k = layer.u_taps.len();
        let t_out = seq.len() - k + 1;
        let mut next = Vec::with_capacity(t_out);
        for t in 0..t_out {
            let mut u_acc: Option<NodeId> = None;
            let mut v_acc: Option<NodeId> = None;
            for j in 0..k {
                let xu = tape.matmul(seq[t + j], layer.u_taps[j]);
                u_acc = Some(match u_acc {
                    None => xu,
                    Some(acc) => tape.add(acc, xu),
                });
                let xv = tape.matmul(seq[t + j], layer.v_taps[j]);
                v_acc = Some(match v_acc {
                    None => xv,
                    Some(acc) => tape.add(acc, xv),
                });
            }
            let u = tape.add_row(u_acc.expect("kernel width > 0"), layer.u_bias);
            let v = tape.add_row(v_acc.expect("kernel width > 0"), layer.v_bias);
            let tu = tape.tanh(u);
            let sv = tape.sigmoid(v);
            let gated = tape.mul(tu, sv);
            let mixed = tape.matmul(alpha_norm, gated);
            let mapped = tape.matmul(mixed, layer.graph_w);
            next.push(tape.relu(mapped));
        }
        seq = next;
    }

    let mut pooled = seq[0];
    for id in seq.iter().skip(1) {
        pooled = tape.add(pooled, *id);
    }
    let pooled = tape.scale(pooled, 1.0 / seq.len() as f64);

    let h1 = tape.matmul(pooled, leaves.head1_w);
    let h1 = tape.add_row(h1, leaves.head1_b);
    let h1 = tape.relu(h1);
    let h2 = tape.matmul(h1, leaves.head2_w);
    let h2 = tape.add_row(h2, leaves.head2_b);
    let raw = tape.sigmoid(h2);
    let beta_col = tape.column(raw, 0);
    let beta = tape.scale(beta_col, model.config.beta_max);
    let gamma = tape.column(raw, 1);
    NetworkNodes { beta, gamma, alpha }
}

/// Unrolls the Euler rollout on the tape. Step arithmetic mirrors
/// `sir::metapop_step` with dt = 1 exactly (same operation order), so the
/// trained dynamics and the production simulator agree bit for bit.
pub(crate) fn rollout_graph(
    tape: &mut Tape,
    net: &NetworkNodes,
    init_susceptible: &Array1<f64>,
    init_infected: &Array1<f64>,
    horizon: usize,
) -> Vec<NodeId> {
    let mut s = tape.leaf1(init_susceptible.clone());
    let mut i = tape.leaf1(init_infected.clone());
    let mut predictions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let force = tape.vecmat(i, net.alpha);
        let sb = tape.mul(s, net.beta);
        let raw = tape.mul(sb, force);
        let new_infections = tape.min(raw, s);
        let removal_raw = tape.mul(net.gamma, i);
        let infectious = tape.add(i, new_infections);
        let removal = tape.min(removal_raw, infectious);
        s = tape.sub(s, new_infections);
        i = tape.sub(infectious, removal);
        predictions.push(new_infections);
    }
    predictions
}

pub(crate) struct LossGraph {
    pub tape: Tape,
    pub loss: NodeId,
    pub flat_leaves: Vec<NodeId>,
}

/// Full training graph for one window: network, rollout from the window's
/// final state, MAE of predicted daily infections against `targets`
/// (`horizon x n_regions`).
pub(crate) fn build_loss_graph(
    model: &ModelState,
    features: &[Array2<f64>],
    populations: &Array1<f64>,
    init_susceptible: &Array1<f64>,
    init_infected: &Array1<f64>,
    targets: &Array2<f64>,
) -> LossGraph {
    let mut tape = Tape::new();
    let leaves = insert_param_leaves(&mut tape, model);
    let net = network_graph(&mut tape, &leaves, model, features, populations);
    let horizon = targets.nrows();
    let predictions = rollout_graph(&mut tape, &net, init_susceptible, init_infected, horizon);
    let pred_mat = tape.concat_rows(&predictions);
    let target_leaf = tape.leaf2(targets.clone());
    let diff = tape.sub(pred_mat, target_leaf);
    let abs = tape.abs(diff);
    let loss = tape.mean(abs);
    LossGraph {
        tape,
        loss,
        flat_leaves: leaves.flat,
    }
}

/// Per-region, per-day window features: S/P, I/P, R/P and new cases over P.
pub fn window_features(window: &EpiSeries, regions: &RegionSet) -> Result<Vec<Array2<f64>>> {
    if window.n_regions() != regions.len() {
        return Err(Error::validation(format!(
            "window covers {} regions, region set has {}",
            window.n_regions(),
            regions.len()
        )));
    }
    let n = regions.len();
    let mut out = Vec::with_capacity(window.n_days());
    for t in 0..window.n_days() {
        let mut f = Array2::zeros((n, super::INPUT_CHANNELS));
        for r in 0..n {
            let p = regions.populations()[r];
            f[(r, 0)] = window.susceptible()[(r, t)] / p;
            f[(r, 1)] = window.infected()[(r, t)] / p;
            f[(r, 2)] = window.removed()[(r, t)] / p;
            f[(r, 3)] = window.new_cases()[(r, t)] / p;
        }
        out.push(f);
    }
    Ok(out)
}

fn validate_window(model: &ModelState, window: &EpiSeries, regions: &RegionSet) -> Result<()> {
    if window.n_days() != model.config.window {
        return Err(Error::validation(format!(
            "window has {} days, model expects {}",
            window.n_days(),
            model.config.window
        )));
    }
    if window.n_regions() != model.n_regions || regions.len() != model.n_regions {
        return Err(Error::validation(format!(
            "window covers {} regions, model expects {}",
            window.n_regions(),
            model.n_regions
        )));
    }
    for w in window.dates().windows(2) {
        if w[1] != w[0] + 1 {
            return Err(Error::validation("window has a gap in its dates"));
        }
    }
    Ok(())
}

/// Network forward pass over one complete window. Returns one (beta, gamma)
/// pair per region, held constant over the model's forecast horizon.
pub fn forward(model: &ModelState, window: &EpiSeries, regions: &RegionSet) -> Result<ParamTrack> {
    forward_track(model, window, regions, model.config.horizon)
}

pub(crate) fn forward_track(
    model: &ModelState,
    window: &EpiSeries,
    regions: &RegionSet,
    horizon: usize,
) -> Result<ParamTrack> {
    validate_window(model, window, regions)?;
    if horizon == 0 {
        return Err(Error::validation("horizon must be at least one day"));
    }
    let features = window_features(window, regions)?;
    let mut tape = Tape::new();
    let leaves = insert_param_leaves(&mut tape, model);
    let net = network_graph(&mut tape, &leaves, model, &features, regions.populations());
    let beta = tape.value1(net.beta);
    let gamma = tape.value1(net.gamma);
    let n = model.n_regions;
    let mut beta_track = Array2::zeros((n, horizon));
    let mut gamma_track = Array2::zeros((n, horizon));
    for t in 0..horizon {
        beta_track.column_mut(t).assign(&beta);
        gamma_track.column_mut(t).assign(&gamma);
    }
    ParamTrack::new(beta_track, gamma_track)
}

#[derive(Debug, Clone)]
pub struct BackwardResult {
    pub loss: f64,
    /// Gradient of the loss with respect to every parameter, flattened in
    /// the canonical [`ModelState::param_vector`] order.
    pub gradients: Vec<f64>,
}

/// Exact reverse-mode gradients of the windowed loss
/// `mae(rollout(network(window)), observed)` for every model parameter.
pub fn backward(
    model: &ModelState,
    window: &EpiSeries,
    observed_new_cases: &Array2<f64>,
    regions: &RegionSet,
) -> Result<BackwardResult> {
    validate_window(model, window, regions)?;
    if observed_new_cases.dim() != (model.config.horizon, model.n_regions) {
        return Err(Error::validation(format!(
            "observed matrix {:?} does not match horizon {} x {} regions",
            observed_new_cases.dim(),
            model.config.horizon,
            model.n_regions
        )));
    }
    let features = window_features(window, regions)?;
    let last = window.n_days() - 1;
    let init_s = window.susceptible().column(last).to_owned();
    let init_i = window.infected().column(last).to_owned();
    let graph = build_loss_graph(
        model,
        &features,
        regions.populations(),
        &init_s,
        &init_i,
        observed_new_cases,
    );
    let loss = graph.tape.scalar_value(graph.loss);
    let grads = graph.tape.backward(graph.loss);
    let mut flat = Vec::with_capacity(model.param_count());
    for leaf in &graph.flat_leaves {
        flat.extend(grads.get(*leaf).iter().copied());
    }
    Ok(BackwardResult {
        loss,
        gradients: flat,
    })
}
