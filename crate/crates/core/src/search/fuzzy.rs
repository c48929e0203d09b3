//! Character-level similarity used to rank fuzzy definition matches: a
//! weighted sum of n-gram Dice overlap, Jaro-Winkler and LCS ratio.

use std::collections::HashMap;

use crate::config::SearchConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzyParams {
    pub weights: [f64; 3],
    pub ngram: usize,
    pub prefix_scale: f64,
    pub prefix_cap: usize,
    pub boost_threshold: f64,
}

impl Default for FuzzyParams {
    fn default() -> Self {
        Self::from(&SearchConfig::default())
    }
}

impl From<&SearchConfig> for FuzzyParams {
    fn from(c: &SearchConfig) -> Self {
        Self {
            weights: c.weights,
            ngram: c.ngram,
            prefix_scale: c.jw_prefix_scale,
            prefix_cap: c.jw_prefix_cap,
            boost_threshold: c.jw_boost_threshold,
        }
    }
}

impl FuzzyParams {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "fuzzy weights must be non-negative and sum to 1, got {:?}",
                self.weights
            )));
        }
        if self.ngram == 0 {
            return Err(Error::Config("n-gram size must be at least 1".into()));
        }
        if !(0.0..=0.25).contains(&self.prefix_scale) {
            return Err(Error::Config("Jaro-Winkler prefix scale must be in [0, 0.25]".into()));
        }
        Ok(())
    }
}

/// Weighted similarity in [0, 1]; exactly 1.0 iff the strings are equal.
///
/// Every component is symmetric except that Jaro's greedy left-to-right
/// matching can, in rare inputs, count transpositions differently when the
/// arguments are swapped.
pub fn fuzzy_score(query: &str, candidate: &str, params: &FuzzyParams) -> Result<f64> {
    if query.is_empty() || candidate.is_empty() {
        return Err(Error::InvalidQuery("fuzzy_score needs two non-empty strings".into()));
    }
    if query == candidate {
        return Ok(1.0);
    }
    let [w1, w2, w3] = params.weights;
    let score = w1 * ngram_similarity(query, candidate, params.ngram)
        + w2 * jaro_winkler(query, candidate, params)
        + w3 * lcs_ratio(query, candidate);
    // unequal strings never reach 1 through rounding
    Ok(score.clamp(0.0, 1.0).min(1.0 - f64::EPSILON))
}

fn ngrams(s: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut grams = HashMap::new();
    if s.len() >= n {
        for w in s.windows(n) {
            *grams.entry(w).or_insert(0) += 1;
        }
    }
    grams
}

/// Dice coefficient over n-gram multisets. Strings too short to form an
/// n-gram compare by equality.
pub fn ngram_similarity(a: &str, b: &str, n: usize) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.len() < n || b.len() < n {
        return if a == b { 1.0 } else { 0.0 };
    }
    let ga = ngrams(&a, n);
    let gb = ngrams(&b, n);
    let shared: usize = ga.iter().map(|(g, ca)| gb.get(g).map_or(0, |cb| (*ca).min(*cb))).sum();
    let total = (a.len() + 1 - n) + (b.len() + 1 - n);
    2.0 * shared as f64 / total as f64
}

pub fn jaro(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_matched = vec![false; a.len()];
    let mut b_matched = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_matched[j] && b[j] == *ca {
                a_matched[i] = true;
                b_matched[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let a_seq = a.iter().zip(&a_matched).filter(|(_, m)| **m).map(|(c, _)| c);
    let b_seq = b.iter().zip(&b_matched).filter(|(_, m)| **m).map(|(c, _)| c);
    let out_of_order = a_seq.zip(b_seq).filter(|(x, y)| x != y).count();
    let m = matches as f64;
    // t is half the out-of-order count, kept fractional
    let t = out_of_order as f64 / 2.0;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro similarity with the Winkler common-prefix boost, applied only when
/// the Jaro score exceeds the boost threshold.
pub fn jaro_winkler(a: &str, b: &str, params: &FuzzyParams) -> f64 {
    let j = jaro(a, b);
    if j <= params.boost_threshold {
        return j;
    }
    let prefix = a
        .chars()
        .zip(b.chars())
        .take(params.prefix_cap)
        .take_while(|(x, y)| x == y)
        .count();
    j + prefix as f64 * params.prefix_scale * (1.0 - j)
}

/// Longest common subsequence length divided by the longer length.
pub fn lcs_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ca in &a {
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] as f64 / longest as f64
}
