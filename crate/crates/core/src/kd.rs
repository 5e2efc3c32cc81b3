//! Knowledge-distillation answer assignment: bias-weighted fusion of an ID
//! and an OOD teacher, optionally anchored on a rule-based initial answer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::compose::Origin;
use crate::dist::AnswerDistribution;
use crate::relevance::percent_count;
use crate::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-12;

/// `-sum p(a) ln(max(q(a), eps))`.
pub fn cross_entropy(p: &AnswerDistribution, q: &AnswerDistribution, eps: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::VocabMismatch { left: p.len(), right: q.len() });
    }
    let mut acc = 0.0;
    for (&pa, &qa) in p.as_slice().iter().zip(q.as_slice()) {
        if pa != 0.0 {
            acc -= pa * libm::log(qa.max(eps));
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    BiasPrior,
    InitialAnswer,
}

impl Anchor {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BiasPrior => "bias_prior",
            Self::InitialAnswer => "initial_answer",
        }
    }
}

/// Teacher weights. `c_*` are inverse cross-entropies against the anchor;
/// the more a teacher agrees with the anchor the smaller its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub w_id: f64,
    pub w_ood: f64,
    pub c_id: f64,
    pub c_ood: f64,
    pub anchor: Anchor,
}

impl FusionWeights {
    /// Weights from confidences: `w_id = c_ood / (c_id + c_ood)`.
    pub fn from_confidences(c_id: f64, c_ood: f64, anchor: Anchor) -> Self {
        let total = c_id + c_ood;
        let w_id = c_ood / total;
        Self { w_id, w_ood: 1.0 - w_id, c_id, c_ood, anchor }
    }

    /// Replaces the weights by a fixed split, keeping the confidences.
    pub fn with_fixed(self, w_ood: f64) -> Self {
        Self { w_id: 1.0 - w_ood, w_ood, ..self }
    }
}

pub fn fuse_weights(
    anchor: &AnswerDistribution,
    pred_id: &AnswerDistribution,
    pred_ood: &AnswerDistribution,
    eps: f64,
    kind: Anchor,
) -> Result<FusionWeights> {
    let xe_id = cross_entropy(anchor, pred_id, eps)?.max(eps);
    let xe_ood = cross_entropy(anchor, pred_ood, eps)?.max(eps);
    Ok(FusionWeights::from_confidences(1.0 / xe_id, 1.0 / xe_ood, kind))
}

/// `sum_i w_i * pred_i` for any number of teachers.
pub fn weighted_sum(terms: &[(f64, &AnswerDistribution)]) -> Result<AnswerDistribution> {
    let Some((_, first)) = terms.first() else {
        return Err(Error::EmptyInput);
    };
    let mut out = vec![0.0; first.len()];
    for (w, d) in terms {
        if d.len() != out.len() {
            return Err(Error::VocabMismatch { left: out.len(), right: d.len() });
        }
        for (o, &x) in out.iter_mut().zip(d.as_slice()) {
            *o += w * x;
        }
    }
    Ok(AnswerDistribution::from_raw(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    SingleTeacher,
    MultiTeacher,
    MultiTeacherInit,
    /// Paraphrase pairs carry the source question's human labels.
    SourceGroundTruth,
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] =
        [Self::SingleTeacher, Self::MultiTeacher, Self::MultiTeacherInit, Self::SourceGroundTruth];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SingleTeacher => "single_teacher",
            Self::MultiTeacher => "multi_teacher",
            Self::MultiTeacherInit => "multi_teacher_init",
            Self::SourceGroundTruth => "source_ground_truth",
        }
    }
}

impl core::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Inconsistent(format!("unknown fusion mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoAnswer {
    pub pair_id: u64,
    pub distribution: AnswerDistribution,
    /// `None` for [`FusionMode::SourceGroundTruth`].
    pub weights: Option<FusionWeights>,
    pub mode: FusionMode,
}

fn mode_for(w: &FusionWeights, init: bool) -> FusionMode {
    if w.w_ood == 0.0 || w.w_ood == 1.0 {
        FusionMode::SingleTeacher
    } else if init {
        FusionMode::MultiTeacherInit
    } else {
        FusionMode::MultiTeacher
    }
}

pub fn fuse_multi(
    pair_id: u64,
    pred_id: &AnswerDistribution,
    pred_ood: &AnswerDistribution,
    weights: FusionWeights,
) -> Result<PseudoAnswer> {
    let distribution = weighted_sum(&[(weights.w_id, pred_id), (weights.w_ood, pred_ood)])?;
    Ok(PseudoAnswer { pair_id, distribution, weights: Some(weights), mode: mode_for(&weights, false) })
}

/// The initial answer replaces the ID teacher and anchors the weights.
pub fn fuse_with_init(
    pair_id: u64,
    a_init: &AnswerDistribution,
    pred_id: &AnswerDistribution,
    pred_ood: &AnswerDistribution,
    eps: f64,
) -> Result<PseudoAnswer> {
    let weights = fuse_weights(a_init, pred_id, pred_ood, eps, Anchor::InitialAnswer)?;
    fuse_init_with(pair_id, a_init, pred_ood, weights)
}

fn fuse_init_with(
    pair_id: u64,
    a_init: &AnswerDistribution,
    pred_ood: &AnswerDistribution,
    weights: FusionWeights,
) -> Result<PseudoAnswer> {
    let distribution = weighted_sum(&[(weights.w_id, a_init), (weights.w_ood, pred_ood)])?;
    Ok(PseudoAnswer { pair_id, distribution, weights: Some(weights), mode: mode_for(&weights, true) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    /// Weights from inverse cross-entropy to the anchor.
    Dynamic,
    /// Constant OOD weight in `[0, 1]`.
    Fixed { w_ood: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub eps: f64,
    pub weighting: Weighting,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { eps: DEFAULT_EPS, weighting: Weighting::Dynamic }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Inconsistent(format!("eps must be positive, got {}", self.eps)));
        }
        if let Weighting::Fixed { w_ood } = self.weighting {
            if !(0.0..=1.0).contains(&w_ood) {
                return Err(Error::Inconsistent(format!("fixed w_ood {w_ood} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Everything fusion needs for one pair.
#[derive(Debug, Clone, Copy)]
pub struct FusionInput<'a> {
    pub pair_id: u64,
    pub origin: Origin,
    pub bias: &'a AnswerDistribution,
    pub initial: Option<&'a AnswerDistribution>,
    /// Required for paraphrase pairs.
    pub ground_truth: Option<&'a AnswerDistribution>,
    pub pred_id: &'a AnswerDistribution,
    pub pred_ood: &'a AnswerDistribution,
}

pub fn assign_one(input: &FusionInput<'_>, use_init: bool, config: &FusionConfig) -> Result<PseudoAnswer> {
    if input.origin == Origin::Paraphrase {
        let gt = input
            .ground_truth
            .ok_or_else(|| Error::Inconsistent(format!("paraphrase pair {} has no ground truth", input.pair_id)))?;
        return Ok(PseudoAnswer {
            pair_id: input.pair_id,
            distribution: gt.clone(),
            weights: None,
            mode: FusionMode::SourceGroundTruth,
        });
    }
    let init = match (use_init, input.initial) {
        (true, Some(a)) => Some(a),
        (true, None) => {
            return Err(Error::Inconsistent(format!(
                "pair {} selected for init anchoring without a rule answer",
                input.pair_id
            )))
        }
        (false, _) => None,
    };
    let (anchor, kind) = match init {
        Some(a) => (a, Anchor::InitialAnswer),
        None => (input.bias, Anchor::BiasPrior),
    };
    let mut weights = fuse_weights(anchor, input.pred_id, input.pred_ood, config.eps, kind)?;
    if let Weighting::Fixed { w_ood } = config.weighting {
        weights = weights.with_fixed(w_ood);
    }
    match init {
        Some(a) => fuse_init_with(input.pair_id, a, input.pred_ood, weights),
        None => fuse_multi(input.pair_id, input.pred_id, input.pred_ood, weights),
    }
}

/// Mask over `len` pairs selecting the first `ceil(delta% * |ranking|)`
/// entries of `ranking`, which lists rule-covered pair indices best first.
pub fn top_delta_mask(len: usize, ranking: &[usize], delta_percent: f64) -> Result<Vec<bool>> {
    if !(0.0..=100.0).contains(&delta_percent) {
        return Err(Error::InvalidPercent(delta_percent));
    }
    let mut seen = vec![false; len];
    for &i in ranking {
        let slot = seen.get_mut(i).ok_or_else(|| Error::Inconsistent(format!("ranking index {i} out of range")))?;
        if core::mem::replace(slot, true) {
            return Err(Error::Inconsistent(format!("pair index {i} ranked twice")));
        }
    }
    let mut selected = vec![false; len];
    for &i in &ranking[..percent_count(ranking.len(), delta_percent)] {
        selected[i] = true;
    }
    Ok(selected)
}

/// [`top_delta_mask`] after checking that `ranking` lists exactly the
/// rule-covered, non-paraphrase inputs.
pub fn init_selection(inputs: &[FusionInput<'_>], ranking: &[usize], delta_percent: f64) -> Result<Vec<bool>> {
    let covered = |x: &FusionInput<'_>| x.initial.is_some() && x.origin != Origin::Paraphrase;
    for &i in ranking {
        if let Some(x) = inputs.get(i) {
            if !covered(x) {
                return Err(Error::Inconsistent(format!("ranked pair {} has no rule answer", x.pair_id)));
            }
        }
    }
    let mask = top_delta_mask(inputs.len(), ranking, delta_percent)?;
    let n = inputs.iter().filter(|x| covered(x)).count();
    if n != ranking.len() {
        return Err(Error::Inconsistent(format!("ranking covers {} of {n} rule-answered pairs", ranking.len())));
    }
    Ok(mask)
}

pub fn assign_all(
    inputs: &[FusionInput<'_>],
    ranking: &[usize],
    delta_percent: f64,
    config: &FusionConfig,
) -> Result<Vec<PseudoAnswer>> {
    config.validate()?;
    let selected = init_selection(inputs, ranking, delta_percent)?;
    inputs.iter().zip(selected).map(|(x, s)| assign_one(x, s, config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> AnswerDistribution {
        AnswerDistribution::from_raw(v.to_vec())
    }

    #[test]
    fn entropy_of_uniform_pair() {
        let u = d(&[0.5, 0.5]);
        assert!((cross_entropy(&u, &u, DEFAULT_EPS).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn one_hot_self_cross_entropy_is_zero() {
        let p = d(&[1.0, 0.0]);
        assert_eq!(cross_entropy(&p, &p, DEFAULT_EPS).unwrap(), 0.0);
    }

    #[test]
    fn cross_entropy_checks_vocab() {
        assert_eq!(
            cross_entropy(&d(&[1.0]), &d(&[0.5, 0.5]), DEFAULT_EPS),
            Err(Error::VocabMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn zero_mass_is_clamped() {
        let xe = cross_entropy(&d(&[0.5, 0.5]), &d(&[1.0, 0.0]), DEFAULT_EPS).unwrap();
        assert!(xe.is_finite() && xe > 13.0);
    }

    #[test]
    fn identical_teachers_split_evenly() {
        let a = d(&[0.6, 0.3, 0.1]);
        let p = d(&[0.2, 0.3, 0.5]);
        let w = fuse_weights(&a, &p, &p, DEFAULT_EPS, Anchor::BiasPrior).unwrap();
        assert_eq!((w.w_id, w.w_ood), (0.5, 0.5));
    }

    #[test]
    fn zero_cross_entropy_saturates() {
        let a = d(&[1.0, 0.0]);
        let w = fuse_weights(&a, &a, &d(&[0.5, 0.5]), DEFAULT_EPS, Anchor::BiasPrior).unwrap();
        assert!(w.c_id.is_finite() && w.w_id < 1e-9 && w.w_ood > 1.0 - 1e-9);
    }

    #[test]
    fn two_one_hots_average() {
        let w = FusionWeights::from_confidences(1.0, 1.0, Anchor::BiasPrior);
        let r = fuse_multi(0, &d(&[1.0, 0.0]), &d(&[0.0, 1.0]), w).unwrap();
        assert_eq!(r.distribution.as_slice(), &[0.5, 0.5]);
        assert_eq!(r.mode, FusionMode::MultiTeacher);
    }

    #[test]
    fn init_fixed_point() {
        let a = d(&[0.2, 0.5, 0.3]);
        let r = fuse_with_init(0, &a, &d(&[0.9, 0.05, 0.05]), &a, DEFAULT_EPS).unwrap();
        for (x, y) in r.distribution.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(r.mode, FusionMode::MultiTeacherInit);
    }

    #[test]
    fn one_hot_init_with_uniform_ood() {
        let a = d(&[1.0, 0.0, 0.0]);
        let u = AnswerDistribution::uniform(3);
        let r = fuse_with_init(0, &a, &a, &u, DEFAULT_EPS).unwrap();
        let w = r.weights.unwrap();
        // XE(a, a) = 0 saturates, XE(a, u) = ln 3
        assert_eq!(w.c_id, 1.0 / DEFAULT_EPS);
        assert!((w.c_ood - 1.0 / libm::log(3.0)).abs() < 1e-15);
        let expect = [w.w_id + w.w_ood / 3.0, w.w_ood / 3.0, w.w_ood / 3.0];
        for (x, y) in r.distribution.as_slice().iter().zip(expect) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    fn inputs<'a>(
        bias: &'a AnswerDistribution,
        init: &'a AnswerDistribution,
        p: &'a AnswerDistribution,
        q: &'a AnswerDistribution,
        n: usize,
    ) -> Vec<FusionInput<'a>> {
        (0..n)
            .map(|i| FusionInput {
                pair_id: i as u64,
                origin: Origin::Composed,
                bias,
                initial: (i % 2 == 0).then_some(init),
                ground_truth: None,
                pred_id: p,
                pred_ood: q,
            })
            .collect()
    }

    #[test]
    fn delta_split_counts() {
        let (b, a, p, q) = (d(&[0.5, 0.5]), d(&[1.0, 0.0]), d(&[0.7, 0.3]), d(&[0.2, 0.8]));
        let xs = inputs(&b, &a, &p, &q, 40);
        let ranking: Vec<usize> = (0..40).step_by(2).rev().collect();
        for (delta, expect) in [(0.0, 0), (50.0, 10), (100.0, 20), (1.0, 1)] {
            let out = assign_all(&xs, &ranking, delta, &FusionConfig::default()).unwrap();
            let init = out.iter().filter(|x| x.mode == FusionMode::MultiTeacherInit).count();
            assert_eq!(init, expect);
        }
        let out = assign_all(&xs, &ranking, 50.0, &FusionConfig::default()).unwrap();
        assert!(ranking[..10].iter().all(|&i| out[i].mode == FusionMode::MultiTeacherInit));
        assert!(ranking[10..].iter().all(|&i| out[i].mode == FusionMode::MultiTeacher));
    }

    #[test]
    fn ranking_must_cover_rule_pairs() {
        let (b, a, p, q) = (d(&[0.5, 0.5]), d(&[1.0, 0.0]), d(&[0.7, 0.3]), d(&[0.2, 0.8]));
        let xs = inputs(&b, &a, &p, &q, 4);
        assert!(assign_all(&xs, &[0], 50.0, &FusionConfig::default()).is_err());
        assert!(assign_all(&xs, &[0, 1], 50.0, &FusionConfig::default()).is_err());
        assert!(assign_all(&xs, &[0, 0], 50.0, &FusionConfig::default()).is_err());
        assert!(assign_all(&xs, &[2, 0], 50.0, &FusionConfig::default()).is_ok());
    }

    #[test]
    fn paraphrase_keeps_ground_truth() {
        let (b, p, q) = (d(&[0.5, 0.5]), d(&[0.7, 0.3]), d(&[0.2, 0.8]));
        let gt = d(&[0.25, 0.75]);
        let x = FusionInput {
            pair_id: 3,
            origin: Origin::Paraphrase,
            bias: &b,
            initial: None,
            ground_truth: Some(&gt),
            pred_id: &p,
            pred_ood: &q,
        };
        let r = assign_one(&x, false, &FusionConfig::default()).unwrap();
        assert_eq!(r.distribution, gt);
        assert_eq!(r.mode, FusionMode::SourceGroundTruth);
        assert!(r.weights.is_none());
    }

    #[test]
    fn fixed_weighting_rows() {
        let (b, p, q) = (d(&[0.5, 0.5]), d(&[0.7, 0.3]), d(&[0.2, 0.8]));
        let x = FusionInput {
            pair_id: 0,
            origin: Origin::Composed,
            bias: &b,
            initial: None,
            ground_truth: None,
            pred_id: &p,
            pred_ood: &q,
        };
        let run = |w_ood| {
            assign_one(&x, false, &FusionConfig { eps: DEFAULT_EPS, weighting: Weighting::Fixed { w_ood } }).unwrap()
        };
        assert_eq!(run(0.0).distribution, p);
        assert_eq!(run(1.0).distribution, q);
        assert_eq!(run(0.0).mode, FusionMode::SingleTeacher);
        let avg = run(0.5).distribution;
        assert!((avg.get(0) - 0.45).abs() < 1e-15 && (avg.get(1) - 0.55).abs() < 1e-15);
    }
}
