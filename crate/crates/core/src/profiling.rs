//! Head-set search with exact evaluation budgeting.
//!
//! Three strategies over an `L x H` model:
//!
//! | strategy       | evaluations |
//! |----------------|-------------|
//! | greedy         | `L*H`       |
//! | group of `g`   | `L*H/g`     |
//! | coarse-to-fine | `L + l*H`   |
//!
//! Coarse-to-fine first steers whole layers, keeps the `l` best, then scores
//! every head of those layers on its own. Candidates are ranked by token F1;
//! ties go to the lexicographically smaller `(layer, head)` / layer / group.
//!
//! Evaluation is abstracted behind [`HeadSetEvaluator`] so the search logic
//! can run against the real pipeline ([`PipelineEvaluator`]) or a synthetic
//! landscape ([`AdditiveLandscape`]).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{exact_match, token_f1, QAInstance};
use crate::matching::EmbeddingProvider;
use crate::model::ModelHandle;
use crate::pipeline::{identify, steered_answer_from, Identification, PipelineConfig};
use crate::steering::{HeadLocation, HeadSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelDims {
    pub num_layers: usize,
    pub num_heads: usize,
}

impl ModelDims {
    pub fn new(num_layers: usize, num_heads: usize) -> Self {
        Self { num_layers, num_heads }
    }

    pub fn of(model: &ModelHandle) -> Self {
        Self::new(model.config().num_layers, model.config().num_heads)
    }
}

/// Aggregate steering quality of one head set, metrics in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub token_f1: f64,
    pub em: f64,
    pub num_instances: usize,
}

pub trait HeadSetEvaluator: Sync {
    fn evaluate(&self, head_set: &HeadSet) -> Result<Score>;
}

/// What a candidate stands for at its search stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateLabel {
    Head { layer: usize, head: usize },
    Layer { layer: usize },
    Group { layer: usize, group: usize },
    HeadSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub label: CandidateLabel,
    pub head_set: HeadSet,
    pub token_f1: f64,
    pub em: f64,
    pub num_instances: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub evaluations_used: usize,
    pub evaluations_predicted: usize,
}

impl std::ops::AddAssign for SearchBudget {
    fn add_assign(&mut self, rhs: Self) {
        self.evaluations_used += rhs.evaluations_used;
        self.evaluations_predicted += rhs.evaluations_predicted;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub head_set: HeadSet,
    pub budget: SearchBudget,
    pub candidates: Vec<CandidateScore>,
}

/// How heads are picked after the coarse stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Best `i` heads from each selected layer.
    TopPerLayer(usize),
    /// Best `j` heads from all heads of the selected layers.
    TopFromPool(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "strategy")]
pub enum Strategy {
    Greedy { k: usize },
    Group { group_size: usize, k_groups: usize },
    CoarseToFine { layers: usize, selection: Selection },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Greedy { k } => write!(f, "greedy top-{k} heads"),
            Strategy::Group { group_size, k_groups } => {
                write!(f, "group search (size {group_size}) top-{k_groups} groups")
            }
            Strategy::CoarseToFine { layers, selection: Selection::TopPerLayer(i) } => {
                write!(f, "coarse-to-fine: {i} heads from each of top-{layers} layers")
            }
            Strategy::CoarseToFine { layers, selection: Selection::TopFromPool(j) } => {
                write!(f, "coarse-to-fine: top-{j} heads from top-{layers} layers")
            }
        }
    }
}

impl Strategy {
    /// Closed-form number of candidate evaluations.
    pub fn predicted_budget(&self, dims: ModelDims) -> usize {
        let (l_total, h) = (dims.num_layers, dims.num_heads);
        match *self {
            Strategy::Greedy { .. } => l_total * h,
            Strategy::Group { group_size, .. } => l_total * h / group_size,
            Strategy::CoarseToFine { layers, .. } => l_total + layers * h,
        }
    }

    pub fn validate(&self, dims: ModelDims) -> Result<()> {
        let (l_total, h) = (dims.num_layers, dims.num_heads);
        let bad = |m: String| Err(Error::Argument(m));
        match *self {
            Strategy::Greedy { k } => {
                if k == 0 || k > l_total * h {
                    return bad(format!("greedy k={k} must lie in 1..={}", l_total * h));
                }
            }
            Strategy::Group { group_size, k_groups } => {
                if group_size == 0 || h % group_size != 0 {
                    return bad(format!("group size {group_size} must divide {h} heads"));
                }
                let groups = l_total * h / group_size;
                if k_groups == 0 || k_groups > groups {
                    return bad(format!("k_groups={k_groups} must lie in 1..={groups}"));
                }
            }
            Strategy::CoarseToFine { layers, selection } => {
                if layers == 0 || layers > l_total {
                    return bad(format!("l={layers} must lie in 1..={l_total}"));
                }
                match selection {
                    Selection::TopPerLayer(i) if i == 0 || i > h => {
                        return bad(format!("top-i={i} must lie in 1..={h}"));
                    }
                    Selection::TopFromPool(j) if j == 0 || j > layers * h => {
                        return bad(format!("top-j={j} must lie in 1..={}", layers * h));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

struct Counted<'e, E: ?Sized> {
    inner: &'e E,
    calls: AtomicUsize,
}

impl<'e, E: HeadSetEvaluator + ?Sized> Counted<'e, E> {
    fn new(inner: &'e E) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    /// Scores candidates in parallel; output keeps input order.
    fn score_all(&self, candidates: Vec<(CandidateLabel, HeadSet)>) -> Result<Vec<CandidateScore>> {
        candidates
            .into_par_iter()
            .map(|(label, head_set)| {
                self.calls.fetch_add(1, Ordering::Relaxed);
                let s = self.inner.evaluate(&head_set)?;
                Ok(CandidateScore {
                    label,
                    head_set,
                    token_f1: s.token_f1,
                    em: s.em,
                    num_instances: s.num_instances,
                })
            })
            .collect()
    }

    fn used(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Candidate positions sorted by descending token F1; equal scores keep
/// their generation order, which is lexicographic.
fn ranked(scores: &[CandidateScore]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].token_f1.total_cmp(&scores[a].token_f1));
    order
}

fn single_heads(layers: &[usize], num_heads: usize) -> Vec<(CandidateLabel, HeadSet)> {
    layers
        .iter()
        .flat_map(|&layer| {
            (0..num_heads).map(move |head| {
                (
                    CandidateLabel::Head { layer, head },
                    [HeadLocation::new(layer, head)].into_iter().collect(),
                )
            })
        })
        .collect()
}

/// Scores every head on its own and keeps the best `k`.
pub fn greedy_search<E: HeadSetEvaluator + ?Sized>(dims: ModelDims, k: usize, evaluator: &E) -> Result<SearchOutcome> {
    let strategy = Strategy::Greedy { k };
    strategy.validate(dims)?;
    let counted = Counted::new(evaluator);
    let layers: Vec<usize> = (0..dims.num_layers).collect();
    let candidates = counted.score_all(single_heads(&layers, dims.num_heads))?;
    let head_set = ranked(&candidates)
        .into_iter()
        .take(k)
        .flat_map(|i| candidates[i].head_set.iter())
        .collect();
    Ok(SearchOutcome {
        head_set,
        budget: SearchBudget {
            evaluations_used: counted.used(),
            evaluations_predicted: strategy.predicted_budget(dims),
        },
        candidates,
    })
}

/// Scores groups of `group_size` adjacent heads within each layer and keeps
/// the union of the best `k_groups`.
pub fn group_search<E: HeadSetEvaluator + ?Sized>(
    dims: ModelDims,
    group_size: usize,
    k_groups: usize,
    evaluator: &E,
) -> Result<SearchOutcome> {
    let strategy = Strategy::Group { group_size, k_groups };
    strategy.validate(dims)?;
    let counted = Counted::new(evaluator);
    let groups: Vec<(CandidateLabel, HeadSet)> = (0..dims.num_layers)
        .flat_map(|layer| {
            (0..dims.num_heads / group_size).map(move |group| {
                (
                    CandidateLabel::Group { layer, group },
                    (group * group_size..(group + 1) * group_size)
                        .map(|h| HeadLocation::new(layer, h))
                        .collect(),
                )
            })
        })
        .collect();
    let candidates = counted.score_all(groups)?;
    let head_set = ranked(&candidates)
        .into_iter()
        .take(k_groups)
        .fold(HeadSet::new(), |acc, i| acc.union(&candidates[i].head_set));
    Ok(SearchOutcome {
        head_set,
        budget: SearchBudget {
            evaluations_used: counted.used(),
            evaluations_predicted: strategy.predicted_budget(dims),
        },
        candidates,
    })
}

/// Layer stage (`L` evaluations, all heads of one layer steered), then head
/// stage over the top `layers` layers (`layers * H` single-head
/// evaluations).
pub fn coarse_to_fine_search<E: HeadSetEvaluator + ?Sized>(
    dims: ModelDims,
    layers: usize,
    selection: Selection,
    evaluator: &E,
) -> Result<SearchOutcome> {
    let strategy = Strategy::CoarseToFine { layers, selection };
    strategy.validate(dims)?;
    let counted = Counted::new(evaluator);

    let layer_candidates: Vec<(CandidateLabel, HeadSet)> = (0..dims.num_layers)
        .map(|layer| (CandidateLabel::Layer { layer }, HeadSet::layer(layer, dims.num_heads)))
        .collect();
    let layer_scores = counted.score_all(layer_candidates)?;
    let mut top_layers: Vec<usize> = ranked(&layer_scores)
        .into_iter()
        .take(layers)
        .map(|i| match layer_scores[i].label {
            CandidateLabel::Layer { layer } => layer,
            _ => unreachable!("layer stage only yields layer candidates"),
        })
        .collect();
    top_layers.sort_unstable();

    let head_scores = counted.score_all(single_heads(&top_layers, dims.num_heads))?;
    let order = ranked(&head_scores);
    let head_set: HeadSet = match selection {
        Selection::TopFromPool(j) => order
            .into_iter()
            .take(j)
            .flat_map(|i| head_scores[i].head_set.iter())
            .collect(),
        Selection::TopPerLayer(per_layer) => {
            let mut taken: BTreeMap<usize, usize> = BTreeMap::new();
            let mut set = HeadSet::new();
            for i in order {
                if let CandidateLabel::Head { layer, head } = head_scores[i].label {
                    let n = taken.entry(layer).or_default();
                    if *n < per_layer {
                        *n += 1;
                        set.insert(HeadLocation::new(layer, head));
                    }
                }
            }
            set
        }
    };

    let mut candidates = layer_scores;
    candidates.extend(head_scores);
    Ok(SearchOutcome {
        head_set,
        budget: SearchBudget {
            evaluations_used: counted.used(),
            evaluations_predicted: strategy.predicted_budget(dims),
        },
        candidates,
    })
}

pub fn run_strategy<E: HeadSetEvaluator + ?Sized>(strategy: Strategy, dims: ModelDims, evaluator: &E) -> Result<SearchOutcome> {
    match strategy {
        Strategy::Greedy { k } => greedy_search(dims, k, evaluator),
        Strategy::Group { group_size, k_groups } => group_search(dims, group_size, k_groups, evaluator),
        Strategy::CoarseToFine { layers, selection } => coarse_to_fine_search(dims, layers, selection, evaluator),
    }
}

/// A hyperparameter grid for one strategy family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "strategy")]
pub enum StrategyGrid {
    Greedy { k: Vec<usize> },
    Group { group_size: usize, k_groups: Vec<usize> },
    CoarseToFine { layers: Vec<usize>, top_i: Vec<usize>, top_j: Vec<usize> },
}

impl StrategyGrid {
    /// `l` in {3, 4, 5, 6}, top-i in {4, 6, 8}, top-j in {16, 24, 32, 64}.
    pub fn coarse_to_fine_default() -> Self {
        StrategyGrid::CoarseToFine {
            layers: vec![3, 4, 5, 6],
            top_i: vec![4, 6, 8],
            top_j: vec![16, 24, 32, 64],
        }
    }

    pub fn points(&self) -> Vec<Strategy> {
        match self {
            StrategyGrid::Greedy { k } => k.iter().map(|&k| Strategy::Greedy { k }).collect(),
            StrategyGrid::Group { group_size, k_groups } => k_groups
                .iter()
                .map(|&k_groups| Strategy::Group {
                    group_size: *group_size,
                    k_groups,
                })
                .collect(),
            StrategyGrid::CoarseToFine { layers, top_i, top_j } => layers
                .iter()
                .flat_map(|&l| {
                    top_i
                        .iter()
                        .map(move |&i| Strategy::CoarseToFine { layers: l, selection: Selection::TopPerLayer(i) })
                        .chain(top_j.iter().map(move |&j| Strategy::CoarseToFine {
                            layers: l,
                            selection: Selection::TopFromPool(j),
                        }))
                })
                .collect(),
        }
    }

    /// Grid points valid for `dims`, in grid order.
    pub fn valid_points(&self, dims: ModelDims) -> Vec<Strategy> {
        self.points()
            .into_iter()
            .filter(|s| s.validate(dims).is_ok())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointResult {
    pub strategy: Strategy,
    pub description: String,
    pub head_set: HeadSet,
    pub budget: SearchBudget,
    /// Score of the selected head set itself.
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingReport {
    pub dims: ModelDims,
    pub grid: Vec<GridPointResult>,
    /// Every candidate scored during every search, in order.
    pub candidates: Vec<CandidateScore>,
    pub chosen: HeadSet,
    pub chosen_strategy: Strategy,
    pub chosen_score: Score,
    /// Search evaluations summed over the sweep.
    pub budget: SearchBudget,
    /// One extra evaluation per grid point to score its selected head set.
    pub selection_evaluations: usize,
}

impl ProfilingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Runs every grid point and keeps the head set with the best profiling
/// token F1 (earliest grid point on ties).
pub fn profile<E: HeadSetEvaluator + ?Sized>(dims: ModelDims, grid: &[Strategy], evaluator: &E) -> Result<ProfilingReport> {
    if grid.is_empty() {
        return Err(Error::Argument("profiling grid is empty".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut candidates = Vec::new();
    let mut budget = SearchBudget::default();
    for &strategy in grid {
        let outcome = run_strategy(strategy, dims, evaluator)?;
        let score = evaluator.evaluate(&outcome.head_set)?;
        budget += outcome.budget;
        candidates.extend(outcome.candidates);
        points.push(GridPointResult {
            strategy,
            description: strategy.to_string(),
            head_set: outcome.head_set,
            budget: outcome.budget,
            score,
        });
    }
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.score.token_f1 > points[best].score.token_f1 {
            best = i;
        }
    }
    Ok(ProfilingReport {
        dims,
        chosen: points[best].head_set.clone(),
        chosen_strategy: points[best].strategy,
        chosen_score: points[best].score,
        selection_evaluations: points.len(),
        grid: points,
        candidates,
        budget,
    })
}

/// Scores head sets by running the steered answering step over a fixed set
/// of profiling instances. Identification runs once per instance up front,
/// and scores are memoized per head set.
pub struct PipelineEvaluator<'a> {
    model: &'a ModelHandle,
    instances: &'a [QAInstance],
    identifications: Vec<Identification>,
    delta: f64,
    cfg: &'a PipelineConfig,
    memo: Mutex<HashMap<HeadSet, Score>>,
}

impl<'a> PipelineEvaluator<'a> {
    pub fn new(
        model: &'a ModelHandle,
        instances: &'a [QAInstance],
        delta: f64,
        cfg: &'a PipelineConfig,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Argument("profiling set is empty".into()));
        }
        let identifications = instances
            .par_iter()
            .map(|inst| identify(model, inst, cfg, provider))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            instances,
            identifications,
            delta,
            cfg,
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn identifications(&self) -> &[Identification] {
        &self.identifications
    }
}

impl HeadSetEvaluator for PipelineEvaluator<'_> {
    fn evaluate(&self, head_set: &HeadSet) -> Result<Score> {
        if let Some(s) = self.memo.lock().expect("memo lock").get(head_set) {
            return Ok(*s);
        }
        let per_instance = self
            .instances
            .par_iter()
            .zip(self.identifications.par_iter())
            .map(|(inst, ident)| {
                let r = steered_answer_from(self.model, inst, ident, head_set, self.delta, self.cfg)?;
                Ok((exact_match(&r.answer, &inst.answers), token_f1(&r.answer, &inst.answers)))
            })
            .collect::<Result<Vec<(f64, f64)>>>()?;
        let n = per_instance.len();
        let (em, f1) = per_instance
            .iter()
            .fold((0.0, 0.0), |(e, f), (ei, fi)| (e + ei, f + fi));
        let score = Score {
            token_f1: 100.0 * f1 / n as f64,
            em: 100.0 * em / n as f64,
            num_instances: n,
        };
        self.memo.lock().expect("memo lock").insert(head_set.clone(), score);
        Ok(score)
    }
}

/// Scores one head set on `instances` through the full pipeline.
pub fn evaluate_headset(
    model: &ModelHandle,
    head_set: &HeadSet,
    instances: &[QAInstance],
    delta: f64,
    cfg: &PipelineConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<CandidateScore> {
    let s = PipelineEvaluator::new(model, instances, delta, cfg, provider)?.evaluate(head_set)?;
    Ok(CandidateScore {
        label: CandidateLabel::HeadSet,
        head_set: head_set.clone(),
        token_f1: s.token_f1,
        em: s.em,
        num_instances: s.num_instances,
    })
}

/// Synthetic landscape: a head set's token F1 is `base` plus the sum of its
/// members' utilities, clamped to `[0, 100]`. Unlisted heads contribute 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdditiveLandscape {
    pub base: f64,
    pub utility: HashMap<HeadLocation, f64>,
}

impl HeadSetEvaluator for AdditiveLandscape {
    fn evaluate(&self, head_set: &HeadSet) -> Result<Score> {
        let total: f64 = head_set
            .iter()
            .map(|h| self.utility.get(&h).copied().unwrap_or(0.0))
            .sum();
        let f1 = (self.base + total).clamp(0.0, 100.0);
        Ok(Score {
            token_f1: f1,
            em: f1,
            num_instances: 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn landscape(entries: &[((usize, usize), f64)]) -> AdditiveLandscape {
        AdditiveLandscape {
            base: 10.0,
            utility: entries.iter().map(|&(h, u)| (h.into(), u)).collect(),
        }
    }

    fn hs(pairs: &[(usize, usize)]) -> HeadSet {
        HeadSet::try_from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn greedy_small_exhaustive() {
        let dims = ModelDims::new(2, 2);
        let land = landscape(&[((0, 1), 3.0), ((1, 0), 5.0), ((1, 1), -1.0)]);
        let out = greedy_search(dims, 1, &land).unwrap();
        assert_eq!(out.budget.evaluations_used, 4);
        assert_eq!(out.budget.evaluations_predicted, 4);
        assert_eq!(out.head_set, hs(&[(1, 0)]));
        assert_eq!(greedy_search(dims, 4, &land).unwrap().head_set, HeadSet::all(2, 2));
    }

    #[test]
    fn ties_break_lexicographically() {
        let dims = ModelDims::new(2, 2);
        let flat = AdditiveLandscape::default();
        assert_eq!(greedy_search(dims, 2, &flat).unwrap().head_set, hs(&[(0, 0), (0, 1)]));
        let out = coarse_to_fine_search(dims, 1, Selection::TopFromPool(1), &flat).unwrap();
        assert_eq!(out.head_set, hs(&[(0, 0)]));
    }

    #[test]
    fn group_search_finds_planted_group() {
        let dims = ModelDims::new(2, 4);
        let land = landscape(&[((1, 2), 4.0), ((1, 3), 4.0), ((0, 0), 1.0)]);
        let out = group_search(dims, 2, 1, &land).unwrap();
        assert_eq!(out.budget.evaluations_used, 4);
        assert_eq!(out.head_set, hs(&[(1, 2), (1, 3)]));
        assert_eq!(group_search(dims, 2, 4, &land).unwrap().head_set, HeadSet::all(2, 4));
        assert!(group_search(dims, 3, 1, &land).is_err());
    }

    #[test]
    fn coarse_to_fine_selections() {
        let dims = ModelDims::new(3, 3);
        let land = landscape(&[
            ((2, 0), 5.0),
            ((2, 1), 1.0),
            ((0, 2), 3.0),
            ((0, 1), 2.0),
            ((1, 0), -1.0),
        ]);
        let out = coarse_to_fine_search(dims, 2, Selection::TopPerLayer(1), &land).unwrap();
        assert_eq!(out.budget.evaluations_used, 3 + 2 * 3);
        assert_eq!(out.head_set, hs(&[(0, 2), (2, 0)]));
        let out = coarse_to_fine_search(dims, 2, Selection::TopFromPool(3), &land).unwrap();
        assert_eq!(out.head_set, hs(&[(0, 1), (0, 2), (2, 0)]));
        for h in out.head_set.iter() {
            assert!(h.layer == 0 || h.layer == 2);
        }
    }

    #[test]
    fn invalid_parameters() {
        let dims = ModelDims::new(4, 4);
        let land = AdditiveLandscape::default();
        assert!(coarse_to_fine_search(dims, 0, Selection::TopFromPool(1), &land).is_err());
        assert!(coarse_to_fine_search(dims, 5, Selection::TopFromPool(1), &land).is_err());
        assert!(coarse_to_fine_search(dims, 2, Selection::TopPerLayer(5), &land).is_err());
        assert!(coarse_to_fine_search(dims, 2, Selection::TopFromPool(9), &land).is_err());
        assert!(greedy_search(dims, 17, &land).is_err());
        assert!(profile(dims, &[], &land).is_err());
    }

    #[test]
    fn profile_single_point_matches_direct_call() {
        let dims = ModelDims::new(4, 4);
        let land = landscape(&[((3, 1), 2.0), ((3, 2), 1.0), ((1, 1), 0.5)]);
        let s = Strategy::CoarseToFine { layers: 2, selection: Selection::TopFromPool(2) };
        let report = profile(dims, &[s], &land).unwrap();
        let direct = run_strategy(s, dims, &land).unwrap();
        assert_eq!(report.chosen, direct.head_set);
        assert_eq!(report.budget, direct.budget);
        assert_eq!(report.candidates, direct.candidates);
    }

    #[test]
    fn profile_picks_best_grid_point() {
        let dims = ModelDims::new(4, 4);
        let land = landscape(&[((3, 1), 2.0), ((3, 2), 1.0), ((1, 1), 0.5), ((0, 0), -3.0)]);
        let grid = StrategyGrid::CoarseToFine {
            layers: vec![1, 2, 3],
            top_i: vec![1, 2],
            top_j: vec![1, 3, 16],
        };
        let points = grid.valid_points(dims);
        assert_eq!(points.len(), 3 * 4);
        let report = profile(dims, &points, &land).unwrap();
        for p in &report.grid {
            assert!(report.chosen_score.token_f1 >= p.score.token_f1);
        }
        let predicted: usize = points.iter().map(|s| s.predicted_budget(dims)).sum();
        assert_eq!(report.budget.evaluations_used, predicted);
        assert_eq!(report.budget.evaluations_predicted, predicted);
        assert_eq!(report.selection_evaluations, points.len());
        assert_eq!(report, profile(dims, &points, &land).unwrap());
    }

    #[test]
    fn default_grid_against_small_model() {
        let pts = StrategyGrid::coarse_to_fine_default().valid_points(ModelDims::new(4, 4));
        // l in {3, 4}; i = 4; j = 16 only when l = 4.
        assert_eq!(pts.len(), 3);
        assert_eq!(StrategyGrid::coarse_to_fine_default().points().len(), 4 * 7);
    }
}
