//! Relevance pruning of hidden units and input connections.
//!
//! An element's relevance is the validation damage done by zeroing it:
//! first the increase in misclassifications, then the increase in squared
//! error. Each round tries elements from least to most relevant; a removal
//! is kept, after a short retraining, only if the validation error count
//! does not grow. Pruning stops when a full round keeps nothing.

use serde::{Deserialize, Serialize};

use super::{fit_lm, sigmoid, LmConfig, MlpModel};
use crate::classifiers::Result;
use crate::data::Samples;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    /// LM iterations after each tentative removal.
    pub retrain_iters: usize,
    /// Candidates tried per round; `None` tries every element.
    pub max_candidates: Option<usize>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            retrain_iters: 5,
            max_candidates: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Element {
    Hidden(usize),
    Input(usize),
}

fn removable(net: &MlpModel) -> Vec<Element> {
    let mut out = Vec::new();
    if net.hidden > 1 {
        out.extend((0..net.hidden).map(Element::Hidden));
    }
    if net.active_input_count() > 1 {
        out.extend(
            (0..net.inputs)
                .filter(|&k| net.active_inputs[k])
                .map(Element::Input),
        );
    }
    out
}

/// `(misclassifications, squared error)` of `net` on `data` with every
/// candidate element zeroed in turn, reusing cached pre-activations.
fn relevance(net: &MlpModel, data: &Samples, elements: &[Element]) -> Vec<(usize, f64)> {
    let h = net.hidden;
    let stride = net.inputs + 1;
    let mut out = vec![(0usize, 0.0f64); elements.len()];
    let mut z = vec![0.0; h];
    for (x, &y) in data.x.iter().zip(&data.y) {
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = net.pre_activation(j, x);
        }
        let hidden: Vec<f64> = z.iter().map(|z| z.tanh()).collect();
        let a: f64 = net.w_out[h] + (0..h).map(|j| net.w_out[j] * hidden[j]).sum::<f64>();
        let target = y as f64;
        for (e, acc) in elements.iter().zip(out.iter_mut()) {
            let a_e = match *e {
                Element::Hidden(j) => a - net.w_out[j] * hidden[j],
                Element::Input(k) => {
                    net.w_out[h]
                        + (0..h)
                            .map(|j| net.w_out[j] * (z[j] - net.w_hidden[j * stride + k] * x[k]).tanh())
                            .sum::<f64>()
                }
            };
            let f = sigmoid(a_e);
            acc.0 += usize::from(u8::from(f >= 0.5) != y);
            acc.1 += (target - f) * (target - f);
        }
    }
    out
}

fn without(net: &MlpModel, e: Element) -> MlpModel {
    let mut trial = net.clone();
    match e {
        Element::Hidden(j) => trial.remove_hidden(j),
        Element::Input(k) => trial.remove_input(k),
    }
    trial
}

pub fn prune_mlp(
    model: &MlpModel,
    train: &Samples,
    validation: &Samples,
    lm: &LmConfig,
    config: &PruneConfig,
) -> Result<MlpModel> {
    let mut net = model.clone();
    if validation.is_empty() || train.is_empty() {
        return Ok(net);
    }
    let retrain = LmConfig {
        max_iter: config.retrain_iters,
        ..lm.clone()
    };
    loop {
        let base_errors = net.errors_on(validation);
        let elements = removable(&net);
        if elements.is_empty() {
            return Ok(net);
        }
        let scores = relevance(&net, validation, &elements);
        let mut order: Vec<usize> = (0..elements.len()).collect();
        order.sort_by(|&a, &b| {
            scores[a]
                .0
                .cmp(&scores[b].0)
                .then(scores[a].1.total_cmp(&scores[b].1))
                .then(a.cmp(&b))
        });
        let budget = config.max_candidates.unwrap_or(order.len());
        let mut kept = None;
        for &c in order.iter().take(budget) {
            let mut trial = without(&net, elements[c]);
            fit_lm(&mut trial, train, &retrain);
            if trial.errors_on(validation) <= base_errors {
                kept = Some(trial);
                break;
            }
        }
        match kept {
            Some(trial) => net = trial,
            None => return Ok(net),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::mlp::train_mlp;

    fn line(n: usize) -> Samples {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64 * 4.0 - 2.0 + 0.01]).collect();
        let y = x.iter().map(|r| u8::from(r[0] > 0.0)).collect();
        Samples::new(x, y)
    }

    #[test]
    fn duplicated_hidden_unit_is_removed() {
        let data = line(40);
        let mut net = MlpModel::zeros(1, 2);
        net.w_hidden = vec![1.5, 0.0, 1.5, 0.0];
        net.w_out = vec![2.0, 2.0, 0.0];
        let before = net.errors_on(&data);
        let pruned = prune_mlp(&net, &data, &data, &LmConfig::default(), &PruneConfig::default())
            .unwrap();
        assert!(pruned.hidden < net.hidden);
        assert!(pruned.errors_on(&data) <= before);
    }

    #[test]
    fn minimal_network_is_returned_unchanged() {
        let data = line(20);
        let (net, _) = train_mlp(&data, 1, 3, &LmConfig::default()).unwrap();
        let pruned =
            prune_mlp(&net, &data, &data, &LmConfig::default(), &PruneConfig::default()).unwrap();
        assert_eq!(pruned, net);
    }

    #[test]
    fn pruning_never_raises_validation_error() {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let t = i as f64 / 60.0;
                vec![t * 2.0 - 1.0, (t * 7.0).sin(), (t * 3.0).cos()]
            })
            .collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] + 0.3 * r[1] > 0.1)).collect();
        let data = Samples::new(x, y);
        let (train, val) = (data.subset(&(0..40).collect::<Vec<_>>()), data.subset(&(40..60).collect::<Vec<_>>()));
        let (net, _) = train_mlp(&train, 5, 8, &LmConfig::default()).unwrap();
        let pruned =
            prune_mlp(&net, &train, &val, &LmConfig::default(), &PruneConfig::default()).unwrap();
        assert!(pruned.errors_on(&val) <= net.errors_on(&val));
        assert!(pruned.hidden >= 1 && pruned.active_input_count() >= 1);
    }

    #[test]
    fn relevance_matches_direct_zeroing() {
        let data = line(15);
        let (net, _) = train_mlp(&data, 3, 2, &LmConfig::default()).unwrap();
        let elements = removable(&net);
        let fast = relevance(&net, &data, &elements);
        for (e, (errs, sse)) in elements.iter().zip(fast) {
            let mut zeroed = net.clone();
            match *e {
                Element::Hidden(j) => zeroed.w_out[j] = 0.0,
                Element::Input(k) => zeroed.remove_input(k),
            }
            let direct_sse: f64 = data
                .x
                .iter()
                .zip(&data.y)
                .map(|(x, &y)| (y as f64 - zeroed.forward(x)).powi(2))
                .sum();
            assert_eq!(errs, zeroed.errors_on(&data));
            assert!((sse - direct_sse).abs() < 1e-9);
        }
    }
}
