#![allow(dead_code)]

use flipsim::attack::{
    compute_direction, poisoned_objective, AttackConfig, AttackDirection, FlipPlan,
};
use flipsim::model::{BinaryParams, LabeledDataset, ModelParams, MulticlassParams};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    scale * rng.sample::<f64, _>(StandardNormal)
}

/// `n` Gaussian rows of dimension `d` (plus bias) with uniform labels.
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    c: usize,
    scale: f64,
) -> LabeledDataset {
    let rows = (0..n)
        .map(|_| {
            let mut r: Vec<f64> = (0..d).map(|_| normal(rng, scale)).collect();
            r.push(1.0);
            r
        })
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    LabeledDataset::new(rows, labels, c).unwrap()
}

pub fn random_binary_params(rng: &mut ChaCha8Rng, width: usize, scale: f64) -> BinaryParams {
    BinaryParams {
        alpha: (0..width).map(|_| normal(rng, scale)).collect(),
    }
}

pub fn random_multiclass_params(
    rng: &mut ChaCha8Rng,
    c: usize,
    width: usize,
    scale: f64,
) -> MulticlassParams {
    MulticlassParams {
        weights: (0..c)
            .map(|_| (0..width).map(|_| normal(rng, scale)).collect())
            .collect(),
    }
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| normal(rng, scale)).collect()
}

pub const FD_STEP: f64 = 1e-5;

/// Central difference of `f` along every coordinate of `x`.
pub fn central_difference(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = a
        .iter()
        .chain(b)
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(1e-8);
    diff / scale
}

/// One attack-selection problem: model, direction, data and controlled set.
pub struct Instance {
    pub params: ModelParams,
    pub delta: AttackDirection,
    pub data: LabeledDataset,
    pub controlled: Vec<usize>,
}

/// Random model, direction and controlled subset. Half of the instances use
/// an untargeted direction from an honest set, half a random target.
pub fn instance(rng: &mut ChaCha8Rng, c: usize, max_k: usize, max_d: usize) -> Instance {
    random_instance(rng, c, max_k, max_d, false)
}

/// Like [`instance`]; `softmax` forces the softmax model even for two classes.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    c: usize,
    max_k: usize,
    max_d: usize,
    softmax: bool,
) -> Instance {
    let d = rng.random_range(1..=max_d);
    let k = rng.random_range(1..=max_k);
    let extra = rng.random_range(0..4);
    let data = random_dataset(rng, k + extra, d, c, 1.0);
    let params = if c == 2 && !softmax && rng.random_bool(0.5) {
        ModelParams::Binary(random_binary_params(rng, d + 1, 1.0))
    } else {
        ModelParams::Multiclass(random_multiclass_params(rng, c, d + 1, 1.0))
    };
    let cfg = if rng.random_bool(0.5) {
        AttackConfig::untargeted(1.0)
    } else {
        let target = match &params {
            ModelParams::Binary(_) => ModelParams::Binary(random_binary_params(rng, d + 1, 1.0)),
            ModelParams::Multiclass(_) => {
                ModelParams::Multiclass(random_multiclass_params(rng, c, d + 1, 1.0))
            }
        };
        AttackConfig::targeted(target, 1.0)
    };
    let honest = random_dataset(rng, 10, d, c, 1.0);
    let delta = compute_direction(&cfg, &honest, &params).unwrap();
    let mut controlled: Vec<usize> = (0..data.len()).collect();
    controlled.shuffle(rng);
    controlled.truncate(k);
    Instance {
        params,
        delta,
        data,
        controlled,
    }
}

pub fn objective_with(inst: &Instance, labels: &[usize]) -> f64 {
    let sub = inst
        .data
        .subset(&inst.controlled)
        .unwrap()
        .with_labels(labels.to_vec())
        .unwrap();
    poisoned_objective(&inst.params, &inst.delta, &sub).unwrap()
}

pub fn labels_after(inst: &Instance, plan: &FlipPlan) -> Vec<usize> {
    let mut data = inst.data.clone();
    plan.apply(&mut data).unwrap();
    inst.controlled.iter().map(|&i| data.label(i)).collect()
}

/// Minimum objective over every labeling of the controlled points that
/// changes at most `budget` labels.
pub fn brute_force_min(inst: &Instance, budget: usize) -> f64 {
    let c = inst.data.num_classes();
    let clean: Vec<usize> = inst
        .controlled
        .iter()
        .map(|&i| inst.data.label(i))
        .collect();
    let total = c.pow(inst.controlled.len() as u32);
    let mut best = f64::INFINITY;
    for code in 0..total {
        let mut rest = code;
        let labels: Vec<usize> = clean
            .iter()
            .map(|_| {
                let l = rest % c;
                rest /= c;
                l
            })
            .collect();
        if labels.iter().zip(&clean).filter(|(a, b)| a != b).count() <= budget {
            best = best.min(objective_with(inst, &labels));
        }
    }
    best
}
