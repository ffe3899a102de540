//! Exact match and token-level F1 under extractive-QA answer normalization.

use std::collections::HashMap;

/// Lowercase, drop ASCII punctuation, drop the articles `a`, `an`, `the`,
/// collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `1.0` if the normalized prediction equals any normalized gold answer.
pub fn exact_match<S: AsRef<str>>(prediction: &str, answers: &[S]) -> f64 {
    let p = normalize_answer(prediction);
    if answers.iter().any(|a| normalize_answer(a.as_ref()) == p) {
        1.0
    } else {
        0.0
    }
}

fn f1_single(prediction: &str, gold: &str) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return if pt.is_empty() && gt.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best token F1 over the gold answers, in `[0, 1]`.
pub fn token_f1<S: AsRef<str>>(prediction: &str, answers: &[S]) -> f64 {
    answers
        .iter()
        .map(|a| f1_single(prediction, a.as_ref()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("July 2, 1776."), "july 2 1776");
        assert_eq!(normalize_answer("The Authority"), "authority");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("  An   apple\ta day "), "apple day");
        assert_eq!(normalize_answer("theory"), "theory");
    }

    #[test]
    fn exact_match_examples() {
        assert_eq!(exact_match("July 2, 1776.", &["July 2, 1776."]), 1.0);
        assert_eq!(exact_match("July 4, 1776", &["July 2, 1776."]), 0.0);
        assert_eq!(exact_match("x", &["y", "X!"]), 1.0);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(token_f1("110 miles", &["110 miles"]), 1.0);
        assert_eq!(token_f1("Long Island Sound", &["110 miles"]), 0.0);
        assert!((token_f1("on july 2 1776", &["july 2 1776"]) - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(token_f1("", &[""]), 1.0);
        assert_eq!(token_f1("the", &["a"]), 1.0);
        assert_eq!(token_f1("", &["x"]), 0.0);
        assert_eq!(token_f1("x", &[""]), 0.0);
        // multiset, not set
        assert!((token_f1("a b b", &["b c"]) - 0.5).abs() < 1e-12);
        assert!((token_f1("x x", &["x"]) - 2.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn em_bounds_f1(pred in "[a-c ,.]{0,12}", gold in "[a-c ,.]{0,12}") {
            let em = exact_match(&pred, &[&gold]);
            let f1 = token_f1(&pred, &[&gold]);
            prop_assert!((0.0..=1.0).contains(&f1));
            prop_assert!(f1 >= em);
            prop_assert_eq!(exact_match(&pred, &[&pred]), 1.0);
        }

        #[test]
        fn invariant_under_case_and_punctuation(pred in "[a-z ]{0,16}", gold in "[a-z ]{0,16}") {
            let shouted = format!("The {}!", pred.to_uppercase());
            prop_assert_eq!(exact_match(&shouted, &[&gold]), exact_match(&pred, &[&gold]));
            prop_assert_eq!(token_f1(&shouted, &[&gold]), token_f1(&pred, &[&gold]));
        }
    }
}
