//! BLEU-4 with the 13a tokenizer and exponential smoothing, computed the way
//! sacrebleu 2.x does (case-sensitive, corpus statistics summed before the
//! geometric mean).

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;

use super::MetricError;

pub const MAX_ORDER: usize = 4;

/// Label attached to every reported BLEU value.
pub const BLEU_SIGNATURE: &str = "nrefs:var|case:mixed|eff:no|tok:13a|smooth:exp|version:2.6.0";

static RULES: LazyLock<[(Regex, &'static str); 4]> = LazyLock::new(|| {
    [
        (
            Regex::new(r"([\x7B-\x7E\x5B-\x60\x20-\x26\x28-\x2B\x3A-\x40/])").unwrap(),
            " ${1} ",
        ),
        (Regex::new(r"([^0-9])([\.,])").unwrap(), "${1} ${2} "),
        (Regex::new(r"([\.,])([^0-9])").unwrap(), " ${1} ${2}"),
        (Regex::new(r"([0-9])(-)").unwrap(), "${1} ${2} "),
    ]
});

/// Whitespace as Python's `str.split()` sees it, which includes the ASCII
/// information separators.
fn is_split_space(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

fn rstrip(s: &str) -> &str {
    s.trim_end_matches(is_split_space)
}

/// mteval-v13a tokenization of one segment.
pub fn tokenize_13a(segment: &str) -> Vec<String> {
    let mut line = rstrip(segment)
        .replace("<skipped>", "")
        .replace("-\n", "")
        .replace('\n', " ");
    if line.contains('&') {
        line = line
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let mut line = format!(" {line} ");
    for (re, replacement) in RULES.iter() {
        line = re.replace_all(&line, *replacement).into_owned();
    }
    line.split(is_split_space)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String]) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for n in 1..=MAX_ORDER {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Sufficient statistics of one or more segments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub sys_len: usize,
    pub ref_len: usize,
    pub correct: [usize; MAX_ORDER],
    pub total: [usize; MAX_ORDER],
}

impl BleuStats {
    pub fn segment(candidate: &str, references: &[&str]) -> Result<BleuStats, MetricError> {
        if candidate.trim().is_empty() || references.is_empty() {
            return Err(MetricError::EmptyInput);
        }
        let hyp = tokenize_13a(candidate);
        let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize_13a(r)).collect();
        let mut ref_max: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (gram, c) in ngram_counts(r) {
                let slot = ref_max.entry(gram).or_insert(0);
                *slot = (*slot).max(c);
            }
        }
        let mut stats = BleuStats {
            sys_len: hyp.len(),
            ref_len: closest_ref_len(hyp.len(), refs.iter().map(Vec::len)),
            ..Default::default()
        };
        for (gram, c) in ngram_counts(&hyp) {
            let n = gram.len() - 1;
            stats.total[n] += c;
            stats.correct[n] += c.min(ref_max.get(gram).copied().unwrap_or(0));
        }
        Ok(stats)
    }

    pub fn add(&mut self, other: &BleuStats) {
        self.sys_len += other.sys_len;
        self.ref_len += other.ref_len;
        for n in 0..MAX_ORDER {
            self.correct[n] += other.correct[n];
            self.total[n] += other.total[n];
        }
    }

    /// Score in [0, 100]. With `effective_order`, orders the candidate is too
    /// short to contain are left out of the mean.
    pub fn score(&self, effective_order: bool) -> f64 {
        let bp = if self.sys_len < self.ref_len {
            if self.sys_len > 0 {
                (1.0 - self.ref_len as f64 / self.sys_len as f64).exp()
            } else {
                0.0
            }
        } else {
            1.0
        };
        if self.correct.iter().all(|&c| c == 0) {
            return 0.0;
        }
        let mut precisions = [0.0f64; MAX_ORDER];
        let mut smooth = 1.0;
        let mut eff_order = MAX_ORDER;
        for (n, precision) in precisions.iter_mut().enumerate() {
            if self.total[n] == 0 {
                break;
            }
            if effective_order {
                eff_order = n + 1;
            }
            *precision = if self.correct[n] == 0 {
                smooth *= 2.0;
                100.0 / (smooth * self.total[n] as f64)
            } else {
                100.0 * self.correct[n] as f64 / self.total[n] as f64
            };
        }
        let log_sum: f64 = precisions[..eff_order]
            .iter()
            .map(|&p| if p == 0.0 { -9_999_999_999.0 } else { p.ln() })
            .sum();
        // exp(ln 100) rounds to just above 100; keep the documented range.
        (bp * (log_sum / eff_order as f64).exp()).min(100.0)
    }
}

/// Closest reference length; ties go to the shorter reference.
fn closest_ref_len(hyp_len: usize, ref_lens: impl Iterator<Item = usize>) -> usize {
    let mut best: Option<(usize, usize)> = None;
    for len in ref_lens {
        let diff = hyp_len.abs_diff(len);
        best = match best {
            None => Some((diff, len)),
            Some((d, l)) if diff < d || (diff == d && len < l) => Some((diff, len)),
            keep => keep,
        };
    }
    best.map_or(0, |(_, l)| l)
}

/// BLEU of one candidate, scored as a one-segment corpus.
pub fn bleu(candidate: &str, references: &[&str]) -> Result<f64, MetricError> {
    Ok(BleuStats::segment(candidate, references)?.score(false))
}

/// Sentence-level variant with effective order, for per-example reporting.
pub fn sentence_bleu(candidate: &str, references: &[&str]) -> Result<f64, MetricError> {
    Ok(BleuStats::segment(candidate, references)?.score(true))
}

/// Corpus BLEU: statistics are pooled over every (candidate, references) pair.
pub fn corpus_bleu(pairs: &[(&str, Vec<&str>)]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut stats = BleuStats::default();
    for (candidate, refs) in pairs {
        stats.add(&BleuStats::segment(candidate, refs)?);
    }
    Ok(stats.score(false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation_but_not_numbers() {
        assert_eq!(
            tokenize_13a("Hello, world! It costs $3,000.50 (approx.) in 2021-2022."),
            [
                "Hello", ",", "world", "!", "It", "costs", "$", "3,000.50", "(", "approx", ".",
                ")", "in", "2021", "-", "2022", "."
            ]
        );
        assert_eq!(tokenize_13a("a &amp; b"), ["a", "&", "b"]);
    }

    #[test]
    fn identity_is_100() {
        let s = "The average project lasted 42 days .";
        assert_eq!(bleu(s, &[s]).unwrap(), 100.0);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(bleu("alpha beta", &["gamma delta"]).unwrap(), 0.0);
    }

    #[test]
    fn brevity_and_smoothing_by_hand() {
        // 3 tokens against 4: unigrams 3/3, bigrams 2/2, no trigram matches
        // beyond "a b c" (1/1), 4-grams 0 of 0 totals.
        let stats = BleuStats::segment("a b c", &["a b c d"]).unwrap();
        assert_eq!(stats.correct, [3, 2, 1, 0]);
        assert_eq!(stats.total, [3, 2, 1, 0]);
        let bp = (1.0f64 - 4.0 / 3.0).exp();
        // The empty 4-gram order stops the loop and contributes log(0).
        let expected = bp * ((100f64.ln() * 3.0 - 9_999_999_999.0) / 4.0).exp();
        assert_eq!(stats.score(false), expected);
        assert!((stats.score(true) - bp * 100.0).abs() < 1e-9);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert_eq!(bleu("", &["x"]), Err(MetricError::EmptyInput));
        assert_eq!(bleu("x", &[]), Err(MetricError::EmptyInput));
        assert_eq!(corpus_bleu(&[]), Err(MetricError::EmptyInput));
    }
}
