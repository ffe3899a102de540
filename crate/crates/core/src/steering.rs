//! Pre-softmax attention steering.
//!
//! A steered head adds a bias row `B_j = -delta` for every key position
//! `j` outside the highlight set and `0` inside it, then renormalizes with
//! softmax. The same weights arise from taking a plain softmax, scaling the
//! non-highlighted entries by `alpha = exp(-delta)` and renormalizing; that
//! second route is kept as [`post_softmax_scaling_oracle`] so the two can be
//! checked against each other.
//!
//! All functions are pure and operate on `f64`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bias magnitude, `ln 100`: non-highlighted keys lose a factor of
/// 100 before renormalization.
pub const DEFAULT_DELTA: f64 = 4.605_170_185_988_092;

/// A `(layer, head)` attention location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct HeadLocation {
    pub layer: usize,
    pub head: usize,
}

impl HeadLocation {
    pub const fn new(layer: usize, head: usize) -> Self {
        Self { layer, head }
    }
}

impl From<(usize, usize)> for HeadLocation {
    fn from((layer, head): (usize, usize)) -> Self {
        Self { layer, head }
    }
}

impl From<HeadLocation> for (usize, usize) {
    fn from(h: HeadLocation) -> Self {
        (h.layer, h.head)
    }
}

impl fmt::Display for HeadLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}H{}", self.layer, self.head)
    }
}

/// The set of heads that receive the steering bias. May be empty, in which
/// case steering is disabled.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct HeadSet(BTreeSet<HeadLocation>);

impl HeadSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a head set, rejecting duplicate members.
    pub fn try_from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        for pair in pairs {
            let loc = HeadLocation::from(pair);
            if !set.insert(loc) {
                return Err(Error::Argument(format!("duplicate head {loc} in head set")));
            }
        }
        Ok(Self(set))
    }

    /// Every head of every layer.
    pub fn all(num_layers: usize, num_heads: usize) -> Self {
        (0..num_layers)
            .flat_map(|l| (0..num_heads).map(move |h| HeadLocation::new(l, h)))
            .collect()
    }

    /// All heads of one layer.
    pub fn layer(layer: usize, num_heads: usize) -> Self {
        (0..num_heads).map(|h| HeadLocation::new(layer, h)).collect()
    }

    pub fn insert(&mut self, loc: HeadLocation) -> bool {
        self.0.insert(loc)
    }

    pub fn contains(&self, loc: HeadLocation) -> bool {
        self.0.contains(&loc)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Members in `(layer, head)` order.
    pub fn iter(&self) -> impl Iterator<Item = HeadLocation> + '_ {
        self.0.iter().copied()
    }

    pub fn union(&self, other: &HeadSet) -> HeadSet {
        self.0.union(&other.0).copied().collect()
    }

    /// Checks every member against model dimensions.
    pub fn validate(&self, num_layers: usize, num_heads: usize) -> Result<()> {
        for loc in self.iter() {
            if loc.layer >= num_layers || loc.head >= num_heads {
                return Err(Error::Bounds(format!(
                    "head {loc} outside model with {num_layers} layers x {num_heads} heads"
                )));
            }
        }
        Ok(())
    }

    /// Reads a head-set file: a JSON array of `[layer, head]` pairs.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let pairs: Vec<(usize, usize)> = serde_json::from_str(text)?;
        Self::try_from_pairs(pairs)
    }

    pub fn to_json(&self) -> String {
        let pairs: Vec<(usize, usize)> = self.iter().map(Into::into).collect();
        serde_json::to_string(&pairs).expect("pairs serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

impl<'de> Deserialize<'de> for HeadSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<(usize, usize)>::deserialize(d)?;
        HeadSet::try_from_pairs(pairs).map_err(serde::de::Error::custom)
    }
}

impl FromIterator<HeadLocation> for HeadSet {
    fn from_iter<I: IntoIterator<Item = HeadLocation>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl fmt::Display for HeadSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, loc) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{loc}")?;
        }
        f.write_str("}")
    }
}

/// Token positions to highlight within a sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HighlightIndexSet(BTreeSet<usize>);

impl HighlightIndexSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, index: usize) -> bool {
        self.0.insert(index)
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(&index)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// Largest highlighted index, if any.
    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Errors if any index is `>= n`.
    pub fn check_within(&self, n: usize) -> Result<()> {
        match self.max() {
            Some(m) if m >= n => Err(Error::Bounds(format!(
                "highlight index {m} outside sequence of length {n}"
            ))),
            _ => Ok(()),
        }
    }
}

impl FromIterator<usize> for HighlightIndexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// What to steer and how hard.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringSpec {
    delta: f64,
    pub head_set: HeadSet,
    pub highlight: HighlightIndexSet,
}

impl SteeringSpec {
    pub fn new(delta: f64, head_set: HeadSet, highlight: HighlightIndexSet) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self {
            delta,
            head_set,
            highlight,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn steers(&self, head: HeadLocation) -> bool {
        self.head_set.contains(head)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta > 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("delta must be finite and > 0, got {delta}")))
    }
}

/// Bias row over `n` key positions: `0` at highlighted positions, `-delta`
/// everywhere else. The same row applies to every query of a steered head.
pub fn build_bias_row(highlight: &HighlightIndexSet, n: usize, delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    highlight.check_within(n)?;
    let mut row = vec![-delta; n];
    for j in highlight.iter() {
        row[j] = 0.0;
    }
    Ok(row)
}

/// Softmax over the first `visible` entries of `scores (+ bias)`; entries at
/// `visible..` are written as exact zeros. The row maximum is taken after the
/// bias is added.
///
/// This is the single kernel shared by [`steered_attention_weights`] and the
/// transformer, so the two agree bit for bit.
pub fn softmax_row_into(scores: &[f64], bias: Option<&[f64]>, visible: usize, out: &mut [f64]) {
    debug_assert!(visible >= 1 && visible <= scores.len());
    debug_assert_eq!(out.len(), scores.len());
    let logit = |j: usize| match bias {
        Some(b) => scores[j] + b[j],
        None => scores[j],
    };
    let mut max = f64::NEG_INFINITY;
    for j in 0..visible {
        max = max.max(logit(j));
    }
    let mut sum = 0.0;
    for (j, o) in out[..visible].iter_mut().enumerate() {
        let e = (logit(j) - max).exp();
        *o = e;
        sum += e;
    }
    for v in &mut out[..visible] {
        *v /= sum;
    }
    for v in &mut out[visible..] {
        *v = 0.0;
    }
}

fn check_square(scores: &[Vec<f64>]) -> Result<usize> {
    let n = scores.len();
    for (i, row) in scores.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Argument(format!(
                "score matrix must be square: row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite score at ({i}, {j})")));
        }
    }
    Ok(n)
}

/// Row-wise softmax of an `n x n` score matrix, with the steering bias added
/// when `head` belongs to `spec.head_set`. With `causal_mask`, query `i`
/// only sees keys `0..=i`; masked entries come out as exact zeros even when
/// highlighted.
pub fn steered_attention_weights(
    scores: &[Vec<f64>],
    spec: &SteeringSpec,
    head: HeadLocation,
    causal_mask: bool,
) -> Result<Vec<Vec<f64>>> {
    let n = check_square(scores)?;
    let bias = if spec.steers(head) {
        Some(build_bias_row(&spec.highlight, n, spec.delta)?)
    } else {
        spec.highlight.check_within(n)?;
        None
    };
    Ok(scores
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let visible = if causal_mask { i + 1 } else { n };
            let mut out = vec![0.0; n];
            softmax_row_into(row, bias.as_deref(), visible, &mut out);
            out
        })
        .collect())
}

/// Post-softmax formulation: plain softmax per row, non-highlighted entries
/// multiplied by `alpha`, each row divided by its new total. With
/// `alpha = exp(-delta)` this equals [`steered_attention_weights`].
pub fn post_softmax_scaling_oracle(
    scores: &[Vec<f64>],
    highlight: &HighlightIndexSet,
    alpha: f64,
    causal_mask: bool,
) -> Result<Vec<Vec<f64>>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Argument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let n = check_square(scores)?;
    highlight.check_within(n)?;
    Ok(scores
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let visible = if causal_mask { i + 1 } else { n };
            let max = row[..visible].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row[..visible].iter().map(|a| (a - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let mut out = vec![0.0; n];
            let mut c = 0.0;
            for (j, e) in exps.iter().enumerate() {
                let p = e / z;
                out[j] = if highlight.contains(j) { p } else { alpha * p };
                c += out[j];
            }
            for v in &mut out[..visible] {
                *v /= c;
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(ix: &[usize]) -> HighlightIndexSet {
        ix.iter().copied().collect()
    }

    #[test]
    fn default_delta_is_ln_100() {
        assert_eq!(DEFAULT_DELTA, 100f64.ln());
    }

    #[test]
    fn bias_row_examples() {
        let d = DEFAULT_DELTA;
        assert_eq!(build_bias_row(&g(&[1]), 3, d).unwrap(), vec![-d, 0.0, -d]);
        assert_eq!(build_bias_row(&g(&[0, 1, 2]), 3, d).unwrap(), vec![0.0; 3]);
        assert_eq!(build_bias_row(&g(&[]), 3, d).unwrap(), vec![-d; 3]);
    }

    #[test]
    fn bias_row_rejects_out_of_range_and_bad_delta() {
        assert!(matches!(build_bias_row(&g(&[3]), 3, 1.0), Err(Error::Bounds(_))));
        assert!(matches!(build_bias_row(&g(&[0]), 3, 0.0), Err(Error::Argument(_))));
        assert!(matches!(build_bias_row(&g(&[0]), 3, -1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn two_by_two_steered_and_unsteered() {
        let scores = vec![vec![0.0; 2]; 2];
        let head = HeadLocation::new(0, 0);
        let steered = SteeringSpec::new(DEFAULT_DELTA, [head].into_iter().collect(), g(&[0])).unwrap();
        let w = steered_attention_weights(&scores, &steered, head, false).unwrap();
        for row in &w {
            assert!((row[0] - 100.0 / 101.0).abs() < 1e-12);
            assert!((row[1] - 1.0 / 101.0).abs() < 1e-12);
        }
        let w = steered_attention_weights(&scores, &steered, HeadLocation::new(0, 1), false).unwrap();
        for row in &w {
            assert_eq!(row, &vec![0.5, 0.5]);
        }
    }

    #[test]
    fn oracle_examples() {
        let scores = vec![vec![0.0; 2]; 2];
        let w = post_softmax_scaling_oracle(&scores, &g(&[0]), 0.01, false).unwrap();
        for row in &w {
            assert!((row[0] - 100.0 / 101.0).abs() < 1e-12);
            assert!((row[1] - 1.0 / 101.0).abs() < 1e-12);
        }
        let scores = vec![vec![0.3, -1.0, 2.0], vec![1.0, 1.0, 0.0], vec![-2.0, 0.5, 0.1]];
        let plain = post_softmax_scaling_oracle(&scores, &g(&[1]), 1.0, false).unwrap();
        for (row, s) in plain.iter().zip(&scores) {
            let z: f64 = s.iter().map(|v| v.exp()).sum();
            for (p, a) in row.iter().zip(s) {
                assert!((p - a.exp() / z).abs() < 1e-12);
            }
        }
        for alpha in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(
                post_softmax_scaling_oracle(&scores, &g(&[1]), alpha, false),
                Err(Error::Argument(_))
            ));
        }
    }

    #[test]
    fn non_finite_scores_rejected() {
        let head = HeadLocation::new(0, 0);
        let spec = SteeringSpec::new(1.0, HeadSet::new(), g(&[])).unwrap();
        let scores = vec![vec![0.0, f64::NAN], vec![0.0, 0.0]];
        assert!(matches!(
            steered_attention_weights(&scores, &spec, head, false),
            Err(Error::Numeric(_))
        ));
        let scores = vec![vec![0.0, f64::INFINITY], vec![0.0, 0.0]];
        assert!(matches!(
            steered_attention_weights(&scores, &spec, head, true),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn masked_positions_stay_zero_when_highlighted() {
        let head = HeadLocation::new(0, 0);
        let spec = SteeringSpec::new(DEFAULT_DELTA, [head].into_iter().collect(), g(&[2])).unwrap();
        let scores = vec![vec![0.1, 0.2, 0.3]; 3];
        let w = steered_attention_weights(&scores, &spec, head, true).unwrap();
        assert_eq!(w[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(w[1][2], 0.0);
    }

    #[test]
    fn large_scores_do_not_overflow() {
        let head = HeadLocation::new(0, 0);
        let spec = SteeringSpec::new(DEFAULT_DELTA, [head].into_iter().collect(), g(&[0])).unwrap();
        let scores = vec![vec![900.0, 1000.0], vec![-1000.0, 1000.0]];
        let w = steered_attention_weights(&scores, &spec, head, false).unwrap();
        for row in &w {
            assert!(row.iter().all(|v| v.is_finite()));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn head_set_file_format() {
        let hs = HeadSet::from_json("[[1, 2], [0, 3]]").unwrap();
        assert_eq!(hs.len(), 2);
        assert_eq!(hs.to_json(), "[[0,3],[1,2]]");
        assert!(HeadSet::from_json("[[1, 2], [1, 2]]").is_err());
        assert!(HeadSet::from_json("[[1]]").is_err());
        assert!(hs.validate(2, 4).is_ok());
        assert!(matches!(hs.validate(1, 4), Err(Error::Bounds(_))));
        assert!(matches!(hs.validate(2, 3), Err(Error::Bounds(_))));
    }

    #[test]
    fn spec_requires_positive_delta() {
        assert!(SteeringSpec::new(0.0, HeadSet::new(), g(&[])).is_err());
        assert!(SteeringSpec::new(f64::INFINITY, HeadSet::new(), g(&[])).is_err());
    }
}
