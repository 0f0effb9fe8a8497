//! Per-epoch label-flipping attack.
//!
//! The attacker picks labels for its controlled set `K` so that the
//! poisoned gradient is as anti-aligned as possible with a reference
//! direction Δ, changing at most `floor(b·|K|)` labels. For the binary
//! model the objective reduces to `Σ_{i∈K} ⟨Δ, x_i⟩ y_i`; for the softmax
//! model it reduces to `Σ_{n∈K} Z_{y_n n}`. Both are separable per point,
//! so ranking candidate flips by their individual improvement is optimal
//! for every budget.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, dot, LabeledDataset, ModelParams, MulticlassParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Untargeted,
    Targeted,
}

impl AttackMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackMode::Untargeted => "untargeted",
            AttackMode::Targeted => "targeted",
        }
    }
}

/// How candidate flips are ranked when the budget is binding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Largest objective improvement first. Optimal for any budget.
    #[default]
    Benefit,
    /// Smallest score first, skipping points already at their desired
    /// label, until the budget is spent.
    PaperLiteral,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackConfig {
    pub mode: AttackMode,
    pub target: Option<ModelParams>,
    pub local_budget: f64,
    pub selection_rule: SelectionRule,
}

impl AttackConfig {
    pub fn untargeted(local_budget: f64) -> Self {
        Self {
            mode: AttackMode::Untargeted,
            target: None,
            local_budget,
            selection_rule: SelectionRule::Benefit,
        }
    }

    pub fn targeted(target: ModelParams, local_budget: f64) -> Self {
        Self {
            mode: AttackMode::Targeted,
            target: Some(target),
            local_budget,
            selection_rule: SelectionRule::Benefit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction("local_budget", self.local_budget)?;
        if self.mode == AttackMode::Targeted && self.target.is_none() {
            return Err(Error::MissingTarget);
        }
        Ok(())
    }
}

pub(crate) fn check_fraction(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

/// Reference direction Δ: one row for the binary model, one per class
/// otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackDirection {
    pub rows: Vec<Vec<f64>>,
}

impl AttackDirection {
    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(|r| r.iter().all(|&v| v == 0.0))
    }

    fn check(&self, rows: usize, width: usize) -> Result<()> {
        if self.rows.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: self.rows.len(),
            });
        }
        if let Some(r) = self.rows.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: r.len(),
            });
        }
        Ok(())
    }
}

/// Scores for the controlled points, in the order of the controlled index
/// list they were computed for.
#[derive(Clone, Debug, PartialEq)]
pub enum ScoreTable {
    /// `s_i = ⟨Δ, x_i⟩`.
    Binary(Vec<f64>),
    /// `Z_{cn}` stored point-major: `values[n * num_classes + c]`.
    Multiclass {
        num_classes: usize,
        values: Vec<f64>,
    },
}

impl ScoreTable {
    pub fn num_points(&self) -> usize {
        match self {
            ScoreTable::Binary(s) => s.len(),
            ScoreTable::Multiclass {
                num_classes,
                values,
            } => values.len() / num_classes,
        }
    }
}

/// Label changes chosen for one epoch. Only entries that differ from the
/// current label are recorded.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipPlan {
    pub assignments: Vec<(usize, usize)>,
    pub flips_used: usize,
}

impl FlipPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    fn from_assignments(mut assignments: Vec<(usize, usize)>) -> Self {
        assignments.sort_unstable();
        let flips_used = assignments.len();
        Self {
            assignments,
            flips_used,
        }
    }

    /// Writes the new labels into `data` and returns the labels they
    /// replaced, for [`FlipPlan::restore`].
    pub fn apply(&self, data: &mut LabeledDataset) -> Result<Vec<(usize, usize)>> {
        let mut previous = Vec::with_capacity(self.assignments.len());
        for &(i, label) in &self.assignments {
            if i >= data.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: data.len(),
                });
            }
            if label >= data.num_classes() {
                return Err(Error::InvalidDataset(format!(
                    "flip label {label} outside [0, {})",
                    data.num_classes()
                )));
            }
            previous.push((i, data.label(i)));
        }
        for &(i, label) in &self.assignments {
            data.set_label(i, label);
        }
        Ok(previous)
    }

    pub fn restore(data: &mut LabeledDataset, previous: &[(usize, usize)]) {
        for &(i, label) in previous.iter().rev() {
            data.set_label(i, label);
        }
    }
}

/// Number of labels that may change: `floor(b·|K|)`.
///
/// A 1e-9 slack absorbs products such as `0.29 * 100` landing just under
/// an integer.
pub fn flip_budget(local_budget: f64, controlled: usize) -> usize {
    let raw = local_budget * controlled as f64;
    ((raw + 1e-9).floor() as usize).min(controlled)
}

/// Δ = −∇L_{D_H}(params) (untargeted) or params − target (targeted),
/// row by row.
pub fn compute_direction(
    cfg: &AttackConfig,
    honest: &LabeledDataset,
    params: &ModelParams,
) -> Result<AttackDirection> {
    let rows = match cfg.mode {
        AttackMode::Untargeted => {
            let grad = model::gradient(params, honest)?;
            grad.rows()
                .into_iter()
                .map(|r| r.iter().map(|g| -g).collect())
                .collect()
        }
        AttackMode::Targeted => {
            let target = cfg.target.as_ref().ok_or(Error::MissingTarget)?;
            if !target.same_shape(params) {
                return Err(Error::DimensionMismatch {
                    expected: params.width(),
                    found: target.width(),
                });
            }
            params
                .rows()
                .into_iter()
                .zip(target.rows())
                .map(|(cur, tgt)| cur.iter().zip(tgt).map(|(c, t)| c - t).collect())
                .collect()
        }
    };
    Ok(AttackDirection { rows })
}

fn check_controlled(data: &LabeledDataset, controlled: &[usize]) -> Result<()> {
    match controlled.iter().find(|&&i| i >= data.len()) {
        Some(&index) => Err(Error::IndexOutOfRange {
            index,
            len: data.len(),
        }),
        None => Ok(()),
    }
}

pub fn binary_scores(
    delta: &AttackDirection,
    data: &LabeledDataset,
    controlled: &[usize],
) -> Result<ScoreTable> {
    delta.check(1, data.width())?;
    check_controlled(data, controlled)?;
    let d = &delta.rows[0];
    Ok(ScoreTable::Binary(
        controlled.iter().map(|&i| dot(d, data.row(i))).collect(),
    ))
}

/// A point whose label the attacker would like to change.
struct Candidate {
    index: usize,
    label: usize,
    /// Decrease of the objective if the flip is made.
    gain: f64,
    /// Ranking key for [`SelectionRule::PaperLiteral`].
    score: f64,
}

fn pick(mut candidates: Vec<Candidate>, budget: usize, rule: SelectionRule) -> FlipPlan {
    match rule {
        SelectionRule::Benefit => candidates.sort_by(|a, b| {
            b.gain
                .partial_cmp(&a.gain)
                .unwrap_or(Ordering::Equal)
                .then(a.index.cmp(&b.index))
        }),
        SelectionRule::PaperLiteral => candidates.sort_by(|a, b| {
            a.score
                .partial_cmp(&b.score)
                .unwrap_or(Ordering::Equal)
                .then(a.index.cmp(&b.index))
        }),
    }
    FlipPlan::from_assignments(
        candidates
            .into_iter()
            .take(budget)
            .map(|c| (c.index, c.label))
            .collect(),
    )
}

/// Binary greedy selection. Each controlled point wants label 1 when
/// `s_i < 0` and 0 otherwise; the budget is spent on the points whose
/// current label differs from that. Points with `s_i = 0` are left alone.
pub fn select_flips_binary(
    scores: &ScoreTable,
    data: &LabeledDataset,
    controlled: &[usize],
    local_budget: f64,
    rule: SelectionRule,
) -> Result<FlipPlan> {
    check_fraction("local_budget", local_budget)?;
    let ScoreTable::Binary(s) = scores else {
        return Err(Error::InvalidConfig(
            "binary selection needs binary scores".into(),
        ));
    };
    if data.num_classes() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: data.num_classes(),
        });
    }
    if s.len() != controlled.len() {
        return Err(Error::DimensionMismatch {
            expected: controlled.len(),
            found: s.len(),
        });
    }
    check_controlled(data, controlled)?;

    let candidates = controlled
        .iter()
        .zip(s)
        .filter_map(|(&i, &si)| {
            let desired = usize::from(si < 0.0);
            // s_i = 0 flips gain nothing; skipping them keeps Δ = 0 a no-op.
            (desired != data.label(i) && si != 0.0).then_some(Candidate {
                index: i,
                label: desired,
                gain: si.abs(),
                score: si,
            })
        })
        .collect();
    Ok(pick(
        candidates,
        flip_budget(local_budget, controlled.len()),
        rule,
    ))
}

/// `Z_{cn} = ⟨x_n, Δ_c⟩ − Σ_j softmax(W x_n)_j ⟨x_n, Δ_j⟩` for every
/// controlled point `n` and class `c`.
pub fn multiclass_scores(
    params: &MulticlassParams,
    deltas: &AttackDirection,
    data: &LabeledDataset,
    controlled: &[usize],
) -> Result<ScoreTable> {
    let c = params.num_classes();
    if c != data.num_classes() || params.width() != data.width() {
        return Err(Error::DimensionMismatch {
            expected: params.width(),
            found: data.width(),
        });
    }
    deltas.check(c, data.width())?;
    check_controlled(data, controlled)?;

    let mut values = Vec::with_capacity(controlled.len() * c);
    let mut probs = vec![0.0; c];
    let mut aligned = vec![0.0; c];
    for &n in controlled {
        let x = data.row(n);
        for (p, w) in probs.iter_mut().zip(&params.weights) {
            *p = dot(w, x);
        }
        model::softmax_in_place(&mut probs);
        for (a, d) in aligned.iter_mut().zip(&deltas.rows) {
            *a = dot(x, d);
        }
        let mean: f64 = probs.iter().zip(&aligned).map(|(p, a)| p * a).sum();
        values.extend(aligned.iter().map(|a| a - mean));
    }
    Ok(ScoreTable::Multiclass {
        num_classes: c,
        values,
    })
}

/// Multiclass greedy selection: each point wants `argmin_c Z_{cn}`; points
/// already at a minimiser are left alone.
pub fn select_flips_multiclass(
    scores: &ScoreTable,
    data: &LabeledDataset,
    controlled: &[usize],
    local_budget: f64,
    rule: SelectionRule,
) -> Result<FlipPlan> {
    check_fraction("local_budget", local_budget)?;
    let ScoreTable::Multiclass {
        num_classes,
        values,
    } = scores
    else {
        return Err(Error::InvalidConfig(
            "multiclass selection needs multiclass scores".into(),
        ));
    };
    let c = *num_classes;
    if c != data.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: data.num_classes(),
            found: c,
        });
    }
    if values.len() != controlled.len() * c {
        return Err(Error::DimensionMismatch {
            expected: controlled.len() * c,
            found: values.len(),
        });
    }
    check_controlled(data, controlled)?;

    let candidates = controlled
        .iter()
        .zip(values.chunks_exact(c))
        .filter_map(|(&n, z)| {
            let best = model::first_best(z, |x, b| x < b);
            let current = data.label(n);
            (z[best] < z[current]).then(|| Candidate {
                index: n,
                label: best,
                gain: z[current] - z[best],
                score: z[best],
            })
        })
        .collect();
    Ok(pick(
        candidates,
        flip_budget(local_budget, controlled.len()),
        rule,
    ))
}

/// Scores and selects in one step, dispatching on the model kind.
pub fn plan_flips(
    params: &ModelParams,
    delta: &AttackDirection,
    data: &LabeledDataset,
    controlled: &[usize],
    local_budget: f64,
    rule: SelectionRule,
) -> Result<FlipPlan> {
    match params {
        ModelParams::Binary(_) => {
            let scores = binary_scores(delta, data, controlled)?;
            select_flips_binary(&scores, data, controlled, local_budget, rule)
        }
        ModelParams::Multiclass(p) => {
            let scores = multiclass_scores(p, delta, data, controlled)?;
            select_flips_multiclass(&scores, data, controlled, local_budget, rule)
        }
    }
}

/// `⟨−∇L_K(params), Δ⟩`, summed over rows for the softmax model. `∇L_K` is
/// the mean gradient over `controlled_data`, which carries the candidate
/// labels.
pub fn poisoned_objective(
    params: &ModelParams,
    delta: &AttackDirection,
    controlled_data: &LabeledDataset,
) -> Result<f64> {
    let grad = model::gradient(params, controlled_data)?;
    let rows = grad.rows();
    delta.check(rows.len(), params.width())?;
    Ok(-rows
        .iter()
        .zip(&delta.rows)
        .map(|(g, d)| dot(g, d))
        .sum::<f64>())
}

/// Largest search space [`oracle_best_flips`] will enumerate.
pub const ORACLE_LIMIT: usize = 1_000_000;

/// Exhaustive reference: tries every labeling of `K` with at most
/// `floor(b·|K|)` changes and returns one minimising
/// [`poisoned_objective`]. Ties go to the lexicographically smallest
/// labeling (in the order of `controlled`).
pub fn oracle_best_flips(
    params: &ModelParams,
    delta: &AttackDirection,
    data: &LabeledDataset,
    controlled: &[usize],
    local_budget: f64,
) -> Result<FlipPlan> {
    check_fraction("local_budget", local_budget)?;
    check_controlled(data, controlled)?;
    if controlled.is_empty() {
        return Ok(FlipPlan::empty());
    }
    let c = data.num_classes();
    let space = (c as f64).powi(controlled.len() as i32);
    if space > ORACLE_LIMIT as f64 {
        return Err(Error::InstanceTooLarge {
            assignments: space,
            limit: ORACLE_LIMIT,
        });
    }
    let budget = flip_budget(local_budget, controlled.len());
    let base = data.subset(controlled)?;
    let clean: Vec<usize> = base.labels().to_vec();

    let mut labels = vec![0usize; controlled.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let changes = labels.iter().zip(&clean).filter(|(a, b)| a != b).count();
        if changes <= budget {
            let value = poisoned_objective(params, delta, &base.with_labels(labels.clone())?)?;
            if best.as_ref().is_none_or(|(v, _)| value < *v) {
                best = Some((value, labels.clone()));
            }
        }
        // Odometer increment, last position fastest: lexicographic order.
        let mut pos = labels.len();
        loop {
            if pos == 0 {
                let (_, chosen) = best.expect("the unchanged labeling is always feasible");
                return Ok(FlipPlan::from_assignments(
                    controlled
                        .iter()
                        .zip(chosen.iter().zip(&clean))
                        .filter(|(_, (new, old))| new != old)
                        .map(|(&i, (&new, _))| (i, new))
                        .collect(),
                ));
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < c {
                break;
            }
            labels[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BinaryParams;

    fn binary_data(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> LabeledDataset {
        LabeledDataset::new(rows, labels, 2).unwrap()
    }

    #[test]
    fn budget_floor() {
        assert_eq!(flip_budget(0.25, 10), 2);
        assert_eq!(flip_budget(0.29, 100), 29);
        assert_eq!(flip_budget(1.0, 7), 7);
        assert_eq!(flip_budget(0.0, 7), 0);
        assert_eq!(flip_budget(0.5, 0), 0);
    }

    #[test]
    fn targeted_toward_current_params_is_zero() {
        let d = binary_data(vec![vec![1.0, 2.0, 1.0]], vec![1]);
        let p = ModelParams::Binary(BinaryParams {
            alpha: vec![0.5, -1.0, 2.0],
        });
        let cfg = AttackConfig::targeted(p.clone(), 0.5);
        assert!(compute_direction(&cfg, &d, &p).unwrap().is_zero());
    }

    #[test]
    fn targeted_direction_is_current_minus_target() {
        let d = binary_data(vec![vec![1.0, 1.0]], vec![1]);
        let p = ModelParams::Binary(BinaryParams {
            alpha: vec![1.0, 2.0],
        });
        let t = ModelParams::Binary(BinaryParams {
            alpha: vec![4.0, -1.0],
        });
        let delta = compute_direction(&AttackConfig::targeted(t, 1.0), &d, &p).unwrap();
        assert_eq!(delta.rows, vec![vec![-3.0, 3.0]]);
    }

    #[test]
    fn targeted_without_target_fails() {
        let d = binary_data(vec![vec![1.0, 1.0]], vec![1]);
        let p = ModelParams::Binary(BinaryParams::zeros(2));
        let cfg = AttackConfig {
            mode: AttackMode::Targeted,
            target: None,
            local_budget: 0.5,
            selection_rule: SelectionRule::Benefit,
        };
        assert!(matches!(
            compute_direction(&cfg, &d, &p),
            Err(Error::MissingTarget)
        ));
        assert!(matches!(cfg.validate(), Err(Error::MissingTarget)));

        let wrong = AttackConfig::targeted(ModelParams::Binary(BinaryParams::zeros(3)), 0.5);
        assert!(compute_direction(&wrong, &d, &p).is_err());
    }

    #[test]
    fn untargeted_at_stationary_point_is_zero() {
        // One point per label at the same x: σ(0) = 0.5 balances them.
        let d = binary_data(vec![vec![2.0, 1.0], vec![2.0, 1.0]], vec![0, 1]);
        let p = ModelParams::Binary(BinaryParams::zeros(2));
        let delta = compute_direction(&AttackConfig::untargeted(1.0), &d, &p).unwrap();
        assert!(delta.is_zero());
    }

    #[test]
    fn binary_score_examples() {
        let d = binary_data(vec![vec![-2.0, 5.0, 1.0], vec![0.0, 3.0, 1.0]], vec![0, 1]);
        let delta = AttackDirection {
            rows: vec![vec![1.0, 0.0, 0.0]],
        };
        let s = binary_scores(&delta, &d, &[0, 1]).unwrap();
        assert_eq!(s, ScoreTable::Binary(vec![-2.0, 0.0]));

        let zero = AttackDirection {
            rows: vec![vec![0.0; 3]],
        };
        assert_eq!(
            binary_scores(&zero, &d, &[1, 0]).unwrap(),
            ScoreTable::Binary(vec![0.0, 0.0])
        );
        assert!(matches!(
            binary_scores(&delta, &d, &[2]),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn unconstrained_binary_matches_sign_rule() {
        let d = binary_data(
            vec![
                vec![1.0, 1.0],
                vec![2.0, 1.0],
                vec![3.0, 1.0],
                vec![4.0, 1.0],
            ],
            vec![0, 0, 1, 1],
        );
        let s = ScoreTable::Binary(vec![-1.0, 2.0, 0.0, -3.0]);
        let plan = select_flips_binary(&s, &d, &[0, 1, 2, 3], 1.0, SelectionRule::Benefit).unwrap();
        // desired (1, 0, 0, 1): index 0 changes; index 2 has s = 0, so
        // relabeling it gains nothing and is skipped.
        assert_eq!(plan.assignments, vec![(0, 1)]);
        assert_eq!(plan.flips_used, 1);
    }

    #[test]
    fn single_flip_goes_to_largest_benefit() {
        let d = binary_data(
            vec![
                vec![1.0, 1.0],
                vec![2.0, 1.0],
                vec![3.0, 1.0],
                vec![4.0, 1.0],
            ],
            vec![0, 1, 1, 0],
        );
        // p = floor(0.34 * 3) = 1
        let s = ScoreTable::Binary(vec![-5.0, -1.0, 3.0]);
        let plan = select_flips_binary(&s, &d, &[0, 1, 2], 0.34, SelectionRule::Benefit).unwrap();
        assert_eq!(plan.assignments, vec![(0, 1)]);
        // Oracle by enumeration of all feasible one-flip plans on Σ s_i y_i.
        let y = [0.0, 1.0, 1.0];
        let sv = [-5.0, -1.0, 3.0];
        let base: f64 = sv.iter().zip(&y).map(|(s, y)| s * y).sum();
        let best_single = (0..3)
            .map(|i| base + sv[i] * ((1.0 - y[i]) - y[i]))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best_single, base - 5.0);
    }

    #[test]
    fn no_flips_when_labels_already_desired() {
        let d = binary_data(vec![vec![1.0, 1.0], vec![2.0, 1.0]], vec![0, 0]);
        let s = ScoreTable::Binary(vec![2.0, 4.0]);
        for b in [0.0, 0.5, 1.0] {
            for rule in [SelectionRule::Benefit, SelectionRule::PaperLiteral] {
                let plan = select_flips_binary(&s, &d, &[0, 1], b, rule).unwrap();
                assert_eq!(plan, FlipPlan::empty());
            }
        }
    }

    #[test]
    fn literal_rule_can_miss_positive_scores() {
        // p = 1. Literal rule takes the smallest s (−1, label 0 → 1, gain 1);
        // the benefit rule prefers index 1 (s = 10, label 1 → 0, gain 10).
        let d = binary_data(vec![vec![1.0, 1.0], vec![2.0, 1.0]], vec![0, 1]);
        let s = ScoreTable::Binary(vec![-1.0, 10.0]);
        let lit = select_flips_binary(&s, &d, &[0, 1], 0.5, SelectionRule::PaperLiteral).unwrap();
        let ben = select_flips_binary(&s, &d, &[0, 1], 0.5, SelectionRule::Benefit).unwrap();
        assert_eq!(lit.assignments, vec![(0, 1)]);
        assert_eq!(ben.assignments, vec![(1, 0)]);
    }

    #[test]
    fn multiclass_zero_direction_gives_zero_scores() {
        let d = LabeledDataset::new(
            vec![vec![1.0, 2.0, 1.0], vec![0.5, -1.0, 1.0]],
            vec![0, 2],
            3,
        )
        .unwrap();
        let w = MulticlassParams {
            weights: vec![
                vec![0.1, 0.2, 0.3],
                vec![-0.5, 0.0, 1.0],
                vec![0.0, 0.7, -0.2],
            ],
        };
        let zero = AttackDirection {
            rows: vec![vec![0.0; 3]; 3],
        };
        let ScoreTable::Multiclass { values, .. } =
            multiclass_scores(&w, &zero, &d, &[0, 1]).unwrap()
        else {
            unreachable!()
        };
        assert!(values.iter().all(|&v| v == 0.0));
        // b = 1 with all-zero scores: every class ties, so nothing moves.
        let scores = multiclass_scores(&w, &zero, &d, &[0, 1]).unwrap();
        let plan =
            select_flips_multiclass(&scores, &d, &[0, 1], 1.0, SelectionRule::Benefit).unwrap();
        assert!(plan.assignments.is_empty());
    }

    #[test]
    fn apply_and_restore_round_trip() {
        let mut d = binary_data(vec![vec![1.0, 1.0], vec![2.0, 1.0]], vec![0, 1]);
        let original = d.clone();
        let plan = FlipPlan::from_assignments(vec![(1, 0), (0, 1)]);
        let prev = plan.apply(&mut d).unwrap();
        assert_eq!(d.labels(), &[1, 0]);
        FlipPlan::restore(&mut d, &prev);
        assert_eq!(d, original);
        assert!(FlipPlan::from_assignments(vec![(5, 0)])
            .apply(&mut d)
            .is_err());
    }

    #[test]
    fn oracle_guard_and_trivial_budget() {
        let rows: Vec<Vec<f64>> = (0..21).map(|i| vec![i as f64, 1.0]).collect();
        let d = binary_data(rows, vec![0; 21]);
        let p = ModelParams::Binary(BinaryParams::zeros(2));
        let delta = AttackDirection {
            rows: vec![vec![1.0, -1.0]],
        };
        let all: Vec<usize> = (0..21).collect();
        assert!(matches!(
            oracle_best_flips(&p, &delta, &d, &all, 1.0),
            Err(Error::InstanceTooLarge { .. })
        ));
        let plan = oracle_best_flips(&p, &delta, &d, &all[..5], 0.0).unwrap();
        assert_eq!(plan, FlipPlan::empty());
    }

    #[test]
    fn oracle_matches_sign_rule_at_full_budget() {
        let d = binary_data(
            vec![vec![1.0, 1.0], vec![-2.0, 1.0], vec![0.5, 1.0]],
            vec![1, 1, 0],
        );
        let p = ModelParams::Binary(BinaryParams {
            alpha: vec![0.3, -0.2],
        });
        let delta = AttackDirection {
            rows: vec![vec![1.0, -0.8]],
        };
        // s = (0.2, -2.8, -0.3) → desired (0, 1, 1)
        let plan = oracle_best_flips(&p, &delta, &d, &[0, 1, 2], 1.0).unwrap();
        assert_eq!(plan.assignments, vec![(0, 0), (2, 1)]);
    }
}
