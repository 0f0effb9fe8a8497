//! Poisoned training loop.
//!
//! Each epoch the attacker receives a random subset `K` of the training
//! set, computes Δ from the clean data at the current parameters, relabels
//! part of `K`, and the server runs one epoch of mini-batch SGD on the
//! pooled poisoned data. Labels are restored before the next epoch.
//!
//! Mean aggregation over equally weighted workers is the same update as
//! training on the pooled batch, so workers are not simulated individually.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{
    check_fraction, compute_direction, flip_budget, plan_flips, poisoned_objective, AttackConfig,
    AttackMode, FlipPlan,
};
use crate::error::{Error, Result};
use crate::model::{self, LabeledDataset, ModelParams, SgdConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ThreatModel {
    /// Fraction `k` of the training set whose labels the attacker controls.
    pub write_access: f64,
    /// The local budget `b` lives in `attack.local_budget`.
    pub attack: AttackConfig,
    /// Draw `K` once for the whole run instead of every epoch.
    pub fixed_attacker_subset: bool,
}

impl ThreatModel {
    pub fn new(write_access: f64, attack: AttackConfig) -> Self {
        Self {
            write_access,
            attack,
            fixed_attacker_subset: false,
        }
    }

    /// No attacker at all.
    pub fn none() -> Self {
        Self::new(0.0, AttackConfig::untargeted(0.0))
    }

    pub fn local_budget(&self) -> f64 {
        self.attack.local_budget
    }

    /// Corrupted fraction `k·b`.
    pub fn global_budget(&self) -> f64 {
        self.write_access * self.attack.local_budget
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction("write_access", self.write_access)?;
        self.attack.validate()
    }

    /// Most labels that can change in one epoch on `n` samples.
    pub fn max_flips(&self, n: usize) -> usize {
        flip_budget(self.local_budget(), controlled_size(n, self.write_access))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub test_accuracy: f64,
    /// Mean loss on the clean training labels after the epoch's update.
    pub train_loss: f64,
    pub flips_used: usize,
    /// Attacker objective with the chosen flips, at the pre-update params.
    pub attack_objective: f64,
    /// Attacker objective had no label been flipped.
    pub unflipped_objective: f64,
    pub target_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub threat: ThreatModel,
    pub sgd: SgdConfig,
    pub records: Vec<EpochRecord>,
    pub final_params: ModelParams,
}

impl RunResult {
    pub fn accuracies(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.test_accuracy)
    }
}

#[derive(Clone, Copy, Debug)]
enum Stream {
    Subset = 0,
    Shuffle = 1,
}

/// Independent generator for one (epoch, purpose) pair of a run.
fn child_rng(seed: u64, epoch: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 2) | stream as u64);
    rng
}

/// `floor(k·n)`, with the same float slack as [`flip_budget`].
pub fn controlled_size(n: usize, write_access: f64) -> usize {
    flip_budget(write_access, n)
}

/// Uniform sample of `floor(k·n)` distinct indices, returned sorted.
pub fn sample_attacker_subset(n: usize, write_access: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = controlled_size(n, write_access);
    let mut picked = index::sample(rng, n, m).into_vec();
    picked.sort_unstable();
    picked
}

/// Runs the full poisoned training loop from zero-initialised parameters.
pub fn run_training(
    train: &LabeledDataset,
    test: &LabeledDataset,
    threat: &ThreatModel,
    sgd: &SgdConfig,
    seed: u64,
) -> Result<RunResult> {
    threat.validate()?;
    sgd.validate()?;
    if train.num_classes() != test.num_classes() || train.width() != test.width() {
        return Err(Error::DimensionMismatch {
            expected: train.width(),
            found: test.width(),
        });
    }
    let attack = &threat.attack;
    let mut params = ModelParams::zeros_for(train);
    if let Some(target) = &attack.target {
        if !target.same_shape(&params) {
            return Err(Error::DimensionMismatch {
                expected: params.width(),
                found: target.width(),
            });
        }
    }

    let fixed_subset = threat.fixed_attacker_subset.then(|| {
        sample_attacker_subset(
            train.len(),
            threat.write_access,
            &mut child_rng(seed, 0, Stream::Subset),
        )
    });
    let mut working = train.clone();
    let mut records = Vec::with_capacity(sgd.epochs);

    for epoch in 1..=sgd.epochs {
        let subset = match &fixed_subset {
            Some(s) => s.clone(),
            None => sample_attacker_subset(
                train.len(),
                threat.write_access,
                &mut child_rng(seed, epoch, Stream::Subset),
            ),
        };

        let mut flips_used = 0;
        let mut attack_objective = 0.0;
        let mut unflipped_objective = 0.0;
        let mut previous = Vec::new();
        if !subset.is_empty() {
            let delta = compute_direction(attack, train, &params)?;
            let plan = plan_flips(
                &params,
                &delta,
                train,
                &subset,
                attack.local_budget,
                attack.selection_rule,
            )?;
            unflipped_objective = poisoned_objective(&params, &delta, &train.subset(&subset)?)?;
            previous = plan.apply(&mut working)?;
            attack_objective = poisoned_objective(&params, &delta, &working.subset(&subset)?)?;
            flips_used = plan.flips_used;
        }

        params = model::sgd_epoch(
            &params,
            &working,
            sgd,
            &mut child_rng(seed, epoch, Stream::Shuffle),
        )?;
        FlipPlan::restore(&mut working, &previous);
        debug_assert_eq!(working.labels(), train.labels());

        let target_distance = match &attack.target {
            Some(t) if attack.mode == AttackMode::Targeted => Some(params.distance(t)?),
            _ => None,
        };
        records.push(EpochRecord {
            epoch,
            test_accuracy: model::accuracy(&params, test)?,
            train_loss: model::loss(&params, train)?,
            flips_used,
            attack_objective,
            unflipped_objective,
            target_distance,
        });
    }

    Ok(RunResult {
        seed,
        threat: threat.clone(),
        sgd: *sgd,
        records,
        final_params: params,
    })
}

/// Unattacked run with the same seed discipline as [`run_training`].
pub fn honest_baseline(
    train: &LabeledDataset,
    test: &LabeledDataset,
    sgd: &SgdConfig,
    seed: u64,
) -> Result<RunResult> {
    run_training(train, test, &ThreatModel::none(), sgd, seed)
}

/// `y ↦ (y + shift) mod C`. With `C = 2, shift = 1` this swaps the labels.
pub fn cyclic_label_map(num_classes: usize, shift: usize) -> Vec<usize> {
    (0..num_classes)
        .map(|y| (y + shift) % num_classes)
        .collect()
}

/// Trains an honest model on `train` with every label replaced by
/// `remap[label]`; the result serves as the targeted attack's goal.
pub fn make_target_params(
    train: &LabeledDataset,
    remap: &[usize],
    sgd: &SgdConfig,
    seed: u64,
) -> Result<ModelParams> {
    let c = train.num_classes();
    let mut seen = vec![false; c];
    if remap.len() != c {
        return Err(Error::NotBijective(c));
    }
    for &y in remap {
        if y >= c || std::mem::replace(&mut seen[y], true) {
            return Err(Error::NotBijective(c));
        }
    }
    sgd.validate()?;
    let relabeled = train.with_labels(train.labels().iter().map(|&y| remap[y]).collect())?;
    let mut params = ModelParams::zeros_for(&relabeled);
    for epoch in 1..=sgd.epochs {
        params = model::sgd_epoch(
            &params,
            &relabeled,
            sgd,
            &mut child_rng(seed, epoch, Stream::Shuffle),
        )?;
    }
    Ok(params)
}
