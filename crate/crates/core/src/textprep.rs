//! Bag-of-words tf-idf vectorization of bug report text.
//!
//! Cell values are `tf(d, t) * ln(N / df(t))` where `tf` is the raw count of
//! term `t` in document `d`, and `N` and `df` come from the corpus the
//! vocabulary was built on. No smoothing is applied, so a term present in
//! every document yields an all-zero column.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{BugReport, Features, LabeledMatrix};
use crate::error::{Error, Result};

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizeOptions {
    /// Keep tokens that mix letters and digits (`v8`, `cve2019`). Pure
    /// digit tokens are always dropped.
    pub keep_alphanumeric: bool,
}

/// Lowercase alphabetic tokens of length two or more.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with(text, TokenizeOptions::default())
}

pub fn tokenize_with(text: &str, opts: TokenizeOptions) -> Vec<String> {
    // Lowercasing first: case folding can emit combining marks, which then
    // act as separators.
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|tok| tok.chars().count() >= 2)
        .filter(|tok| {
            let has_digit = tok.chars().any(char::is_numeric);
            // Letter-numbers such as Roman numerals count as digits here.
            let has_letter = tok.chars().any(|c| c.is_alphabetic() && !c.is_numeric());
            if opts.keep_alphanumeric {
                has_letter
            } else {
                !has_digit
            }
        })
        .map(str::to_string)
        .collect()
}

/// Parses a one-word-per-line stopword file. Blank lines and lines starting
/// with `#` are ignored.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    Ok(parse_stopwords(&std::fs::read_to_string(path)?))
}

pub fn bundled_stopwords() -> BTreeSet<String> {
    parse_stopwords(BUNDLED_STOPWORDS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfConfig {
    pub stopwords: BTreeSet<String>,
    pub min_doc_freq: usize,
    /// Keep only the `max_terms` most frequent terms (by document
    /// frequency, ties lexicographic).
    pub max_terms: Option<usize>,
}

impl Default for TfIdfConfig {
    fn default() -> Self {
        TfIdfConfig {
            stopwords: bundled_stopwords(),
            min_doc_freq: 1,
            max_terms: None,
        }
    }
}

impl TfIdfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_doc_freq == 0 {
            return Err(Error::InvalidConfig("min_doc_freq must be at least 1".into()));
        }
        Ok(())
    }
}

/// Lexicographically ordered terms with their document frequencies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    /// Size of the corpus the frequencies were counted on.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok()
    }

    fn idf(&self) -> Vec<f64> {
        let n = self.n_docs as f64;
        self.doc_freq
            .iter()
            .map(|&df| if df == 0 { 0.0 } else { (n / df as f64).ln() })
            .collect()
    }

    /// Builds a vocabulary from explicit parts, re-sorting by term.
    pub fn from_parts(pairs: Vec<(String, usize)>, n_docs: usize) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (t, df) in pairs {
            if df == 0 || df > n_docs {
                return Err(Error::InvalidConfig(format!(
                    "document frequency {df} of {t:?} outside 1..={n_docs}"
                )));
            }
            if map.insert(t.clone(), df).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate term {t:?}")));
            }
        }
        let (terms, doc_freq) = map.into_iter().unzip();
        Ok(Vocabulary {
            terms,
            doc_freq,
            n_docs,
        })
    }
}

pub fn build_vocabulary<S: AsRef<str>>(docs: &[Vec<S>], cfg: &TfIdfConfig) -> Vocabulary {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let unique: BTreeSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for t in unique {
            if !cfg.stopwords.contains(t) {
                *df.entry(t).or_insert(0) += 1;
            }
        }
    }
    let mut kept: Vec<(&str, usize)> = df
        .into_iter()
        .filter(|&(_, n)| n >= cfg.min_doc_freq.max(1))
        .collect();
    if let Some(max) = cfg.max_terms {
        if kept.len() > max {
            kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            kept.truncate(max);
            kept.sort_by(|a, b| a.0.cmp(b.0));
        }
    }
    Vocabulary {
        terms: kept.iter().map(|(t, _)| t.to_string()).collect(),
        doc_freq: kept.iter().map(|&(_, n)| n).collect(),
        n_docs: docs.len(),
    }
}

/// One tf-idf row per document, one column per vocabulary term.
pub fn tfidf_matrix<S: AsRef<str> + Sync>(docs: &[Vec<S>], vocab: &Vocabulary) -> Features {
    let idf = vocab.idf();
    let index: HashMap<&str, usize> = vocab
        .terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let n_cols = vocab.len();
    let rows: Vec<Vec<f64>> = docs
        .par_iter()
        .map(|doc| {
            let mut row = vec![0.0; n_cols];
            for tok in doc {
                if let Some(&j) = index.get(tok.as_ref()) {
                    row[j] += 1.0;
                }
            }
            for (v, w) in row.iter_mut().zip(&idf) {
                *v *= w;
            }
            row
        })
        .collect();
    let mut data = Vec::with_capacity(docs.len() * n_cols);
    for r in rows {
        data.extend(r);
    }
    Features::from_flat(n_cols, data).expect("tf-idf values are finite")
}

/// Tokenizes and vectorizes reports against `vocab`. Reports with empty
/// text become all-zero rows.
pub fn vectorize_reports(
    reports: &[BugReport],
    vocab: &Vocabulary,
    opts: TokenizeOptions,
) -> LabeledMatrix {
    let docs: Vec<Vec<String>> = reports.iter().map(|r| tokenize_with(&r.text, opts)).collect();
    let features = tfidf_matrix(&docs, vocab);
    let labels = reports.iter().map(|r| r.label).collect();
    LabeledMatrix::new(features, labels, vocab.terms.clone()).expect("shapes agree by construction")
}

pub fn write_vocabulary_csv<W: Write>(vocab: &Vocabulary, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["term", "doc_freq"])?;
    for (t, df) in vocab.terms.iter().zip(&vocab.doc_freq) {
        w.write_record([t.as_str(), &df.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `term,doc_freq` CSV. The corpus size is not part of the file and
/// must be supplied.
pub fn read_vocabulary_csv<R: Read>(reader: R, n_docs: usize) -> Result<Vocabulary> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "term" || &headers[1] != "doc_freq" {
        return Err(Error::Schema("vocabulary header must be term,doc_freq".into()));
    }
    let mut pairs = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: None,
            message: e.to_string(),
        })?;
        let df = rec[1].trim().parse::<usize>().map_err(|_| Error::Parse {
            row,
            column: Some("doc_freq".into()),
            message: format!("{:?} is not a count", &rec[1]),
        })?;
        pairs.push((rec[0].to_string(), df));
    }
    Vocabulary::from_parts(pairs, n_docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("Buffer overflow in V8!"), toks(&["buffer", "overflow", "in"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("AAA aaa"), toks(&["aaa", "aaa"]));
        assert_eq!(tokenize("a b 42 x-y use-after-free"), toks(&["use", "after", "free"]));
    }

    #[test]
    fn tokenize_can_keep_identifiers() {
        let opts = TokenizeOptions {
            keep_alphanumeric: true,
        };
        assert_eq!(
            tokenize_with("Buffer overflow in V8 2019", opts),
            toks(&["buffer", "overflow", "in", "v8"])
        );
    }

    #[test]
    fn vocabulary_thresholds_and_stopwords() {
        let docs = vec![toks(&["bug"]), toks(&["bug"]), toks(&["rare"])];
        let cfg = TfIdfConfig {
            stopwords: BTreeSet::new(),
            min_doc_freq: 2,
            max_terms: None,
        };
        assert_eq!(build_vocabulary(&docs, &cfg).terms(), ["bug"]);

        let cfg = TfIdfConfig {
            stopwords: ["the".to_string()].into(),
            min_doc_freq: 1,
            max_terms: None,
        };
        let v = build_vocabulary(&[toks(&["the", "bug"])], &cfg);
        assert_eq!(v.terms(), ["bug"]);

        let empty: Vec<Vec<String>> = vec![];
        assert!(build_vocabulary(&empty, &cfg).is_empty());
    }

    #[test]
    fn vocabulary_is_sorted_and_capped() {
        let docs = vec![toks(&["zeta", "alpha", "mid"]), toks(&["zeta", "mid"]), toks(&["zeta"])];
        let cfg = TfIdfConfig {
            stopwords: BTreeSet::new(),
            min_doc_freq: 1,
            max_terms: Some(2),
        };
        let v = build_vocabulary(&docs, &cfg);
        assert_eq!(v.terms(), ["mid", "zeta"]);
        assert_eq!(v.doc_freq(), [2, 3]);
    }

    #[test]
    fn tfidf_values() {
        let cfg = TfIdfConfig {
            stopwords: BTreeSet::new(),
            min_doc_freq: 1,
            max_terms: None,
        };
        // "common" is in all docs, "pair" in two of four; doc 0 has pair twice.
        let docs = vec![
            toks(&["common", "pair", "pair"]),
            toks(&["common", "pair"]),
            toks(&["common"]),
            toks(&["common", "unknown"]),
        ];
        let vocab = build_vocabulary(&docs[..3], &cfg);
        let vocab = Vocabulary::from_parts(
            vocab.terms().iter().cloned().zip(vec![4, 2]).collect(),
            4,
        )
        .unwrap();
        let m = tfidf_matrix(&docs, &vocab);
        let common = vocab.index_of("common").unwrap();
        let pair = vocab.index_of("pair").unwrap();
        assert!(m.rows().all(|r| r[common] == 0.0));
        assert!((m.get(0, pair) - 1.386_294_361_119_890_6).abs() < 1e-12);
        assert_eq!(m.get(3, pair), 0.0);
        assert_eq!(m.n_cols(), 2);

        let single = vec![toks(&["x", "once", "once", "once"])];
        let v = build_vocabulary(&single, &cfg);
        assert!(tfidf_matrix(&single, &v).as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_report_is_zero_row() {
        let reports = vec![
            BugReport {
                id: "1".into(),
                text: "heap overflow".into(),
                label: 1,
            },
            BugReport {
                id: "2".into(),
                text: String::new(),
                label: 0,
            },
        ];
        let docs: Vec<Vec<String>> = reports.iter().map(|r| tokenize(&r.text)).collect();
        let vocab = build_vocabulary(&docs, &TfIdfConfig::default());
        let m = vectorize_reports(&reports, &vocab, TokenizeOptions::default());
        assert_eq!(m.n_rows(), 2);
        assert!(m.row(1).iter().all(|&v| v == 0.0));
        assert!(m.row(0).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn bundled_stopwords_parse() {
        let s = bundled_stopwords();
        assert!(s.contains("the") && s.contains("in"));
        assert!(!s.iter().any(|w| w.starts_with('#')));
    }

    #[test]
    fn vocabulary_csv_round_trip() {
        let v = Vocabulary::from_parts(vec![("b".into(), 1), ("a".into(), 3)], 3).unwrap();
        let mut buf = Vec::new();
        write_vocabulary_csv(&v, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "term,doc_freq\na,3\nb,1\n");
        assert_eq!(read_vocabulary_csv(buf.as_slice(), 3).unwrap(), v);
        assert!(read_vocabulary_csv("term,doc_freq\na,x\n".as_bytes(), 3).is_err());
    }
}
