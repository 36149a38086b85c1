//! Comment ingestion, tokenization and TF-IDF featurization.
//!
//! The input is a CSV with the columns `projectname`, `classification` and
//! `commenttext` (matched case-insensitively). A comment whose classification
//! is `WITHOUT_CLASSIFICATION` is non-SATD; any other non-empty category is
//! SATD.
//!
//! Features are term counts weighted by `ln(|D| / df) + 1` and scaled to unit
//! Euclidean length. The vocabulary keeps the `max_features` tokens with the
//! highest corpus-wide score `sum_d tf(t, d) * (ln(|D| / df(t)) + 1)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, RowId};

/// Classification value that marks a comment as not technical debt.
pub const NON_SATD_CLASS: &str = "WITHOUT_CLASSIFICATION";

pub const DEFAULT_MAX_FEATURES: usize = 4000;

/// Versioned English stop-word list shipped with the crate.
pub const STOP_WORDS_VERSION: &str = "en-v1";
static STOP_WORDS_SOURCE: &str = include_str!("../data/stopwords-en.txt");

fn stop_words() -> &'static BTreeSet<&'static str> {
    static WORDS: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| {
        STOP_WORDS_SOURCE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

pub fn is_stop_word(token: &str) -> bool {
    stop_words().contains(token)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub project: String,
    /// Position of the comment within its project, in file order.
    pub comment_id: u64,
    pub text: String,
    pub truth: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Labeled,
    Unlabeled,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    records: Vec<CommentRecord>,
    projects: BTreeSet<String>,
    /// Rows dropped because their text was blank.
    #[serde(default)]
    skipped_blank: usize,
    /// True when a classification column was present but ignored.
    #[serde(default)]
    ignored_labels: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectSummary {
    pub project: String,
    pub comments: usize,
    pub satd: Option<usize>,
}

impl Corpus {
    /// Builds a corpus from records, assigning nothing: ids are taken as given.
    pub fn from_records(records: Vec<CommentRecord>) -> Self {
        let projects = records.iter().map(|r| r.project.clone()).collect();
        Corpus {
            records,
            projects,
            skipped_blank: 0,
            ignored_labels: false,
        }
    }

    pub fn records(&self) -> &[CommentRecord] {
        &self.records
    }

    pub fn projects(&self) -> &BTreeSet<String> {
        &self.projects
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn skipped_blank(&self) -> usize {
        self.skipped_blank
    }

    pub fn ignored_labels(&self) -> bool {
        self.ignored_labels
    }

    pub fn is_labeled(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.truth.is_some())
    }

    /// Ground truth per record; `None` if any record is unlabeled.
    pub fn truth(&self) -> Option<Vec<bool>> {
        self.records.iter().map(|r| r.truth).collect()
    }

    /// Row indices (into `records`) belonging to `project`, in file order.
    pub fn rows_of(&self, project: &str) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.project == project)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn require_project(&self, project: &str) -> Result<()> {
        if self.projects.contains(project) {
            Ok(())
        } else {
            Err(Error::UnknownProject {
                name: project.to_string(),
                available: self.projects.iter().cloned().collect::<Vec<_>>().join(", "),
            })
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Corpus {
        Corpus::from_records(rows.iter().map(|&i| self.records[i].clone()).collect())
    }

    /// Writes the corpus in the input CSV layout. SATD rows get the
    /// classification `satd_class`; unlabeled rows an empty one.
    pub fn write_csv<W: Write>(&self, out: W, satd_class: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["projectname", "classification", "commenttext"])?;
        for r in &self.records {
            let class = match r.truth {
                Some(true) => satd_class,
                Some(false) => NON_SATD_CLASS,
                None => "",
            };
            w.write_record([r.project.as_str(), class, r.text.as_str()])?;
        }
        w.flush().map_err(|e| Error::Persistence(e.to_string()))?;
        Ok(())
    }

    pub fn summary(&self) -> Vec<ProjectSummary> {
        let mut by_project: BTreeMap<&str, (usize, Option<usize>)> = BTreeMap::new();
        for r in &self.records {
            let e = by_project.entry(&r.project).or_insert((0, Some(0)));
            e.0 += 1;
            e.1 = match (e.1, r.truth) {
                (Some(n), Some(t)) => Some(n + usize::from(t)),
                _ => None,
            };
        }
        by_project
            .into_iter()
            .map(|(p, (comments, satd))| ProjectSummary {
                project: p.to_string(),
                comments,
                satd,
            })
            .collect()
    }
}

pub fn load_corpus(path: impl AsRef<Path>, mode: LabelMode) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file, mode)
}

/// Parses a corpus from any reader; see [`load_corpus`].
pub fn read_corpus<R: Read>(reader: R, mode: LabelMode) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| {
            h.trim()
                .trim_start_matches('\u{feff}')
                .eq_ignore_ascii_case(name)
        })
    };
    let project_col = find("projectname").ok_or(Error::MissingColumn("projectname"))?;
    let text_col = find("commenttext").ok_or(Error::MissingColumn("commenttext"))?;
    let class_col = find("classification");
    if mode == LabelMode::Labeled && class_col.is_none() {
        return Err(Error::MissingColumn("classification"));
    }

    let mut records = Vec::new();
    let mut next_id: HashMap<String, u64> = HashMap::new();
    let mut skipped_blank = 0;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let project = row.get(project_col).unwrap_or("").trim().to_string();
        if project.is_empty() {
            return Err(Error::BadRow {
                line,
                reason: "empty projectname".into(),
            });
        }
        let text = row.get(text_col).unwrap_or("").to_string();
        if text.trim().is_empty() {
            log::warn!("line {line}: blank comment text, row skipped");
            skipped_blank += 1;
            continue;
        }
        let truth = match mode {
            LabelMode::Unlabeled => None,
            LabelMode::Labeled => {
                let class = class_col.and_then(|c| row.get(c)).unwrap_or("").trim();
                if class.is_empty() {
                    return Err(Error::BadRow {
                        line,
                        reason: "empty classification in labeled mode".into(),
                    });
                }
                Some(class != NON_SATD_CLASS)
            }
        };
        let id = next_id.entry(project.clone()).or_insert(0);
        records.push(CommentRecord {
            project,
            comment_id: *id,
            text,
            truth,
        });
        *id += 1;
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut corpus = Corpus::from_records(records);
    corpus.skipped_blank = skipped_blank;
    corpus.ignored_labels = mode == LabelMode::Unlabeled && class_col.is_some();
    Ok(corpus)
}

/// Lowercase alphabetic tokens of length >= 2 that are not stop words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| w.chars().count() >= 2 && !is_stop_word(w))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<u32>,
    /// Number of documents the vocabulary was built from.
    n_docs: usize,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn doc_freq(&self, token: &str) -> Option<u32> {
        self.index_of(token).map(|i| self.doc_freq[i as usize])
    }

    /// `ln(|D| / df) + 1` for column `col`.
    pub fn idf(&self, col: u32) -> f64 {
        idf(self.n_docs, self.doc_freq[col as usize])
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    /// One token per line.
    pub fn write_tokens<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.tokens {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut v: Vocabulary = serde_json::from_str(s)?;
        v.rebuild_index();
        Ok(v)
    }
}

fn idf(n_docs: usize, df: u32) -> f64 {
    (n_docs as f64 / f64::from(df)).ln() + 1.0
}

/// Ranks tokens over the union of `corpora` and keeps the top `max_features`.
pub fn build_vocabulary(corpora: &[&Corpus], max_features: usize) -> Result<Vocabulary> {
    if max_features == 0 {
        return Err(Error::Config("max_features must be at least 1".into()));
    }
    let mut n_docs = 0usize;
    let mut total_tf: HashMap<String, u64> = HashMap::new();
    let mut df: HashMap<String, u32> = HashMap::new();
    for corpus in corpora {
        for record in corpus.records() {
            n_docs += 1;
            let tokens = tokenize(&record.text);
            let mut seen = BTreeSet::new();
            for t in tokens {
                *total_tf.entry(t.clone()).or_insert(0) += 1;
                seen.insert(t);
            }
            for t in seen {
                *df.entry(t).or_insert(0) += 1;
            }
        }
    }
    if n_docs == 0 {
        return Err(Error::EmptyCorpus);
    }
    if df.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    // The per-document factor is constant for a token, so the corpus score is
    // the total count times the idf; this keeps the ranking order-independent.
    let mut scored: Vec<(String, f64, u32)> = df
        .into_iter()
        .map(|(t, d)| {
            let score = total_tf[&t] as f64 * idf(n_docs, d);
            (t, score, d)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(max_features);
    let mut vocab = Vocabulary {
        tokens: scored.iter().map(|(t, _, _)| t.clone()).collect(),
        doc_freq: scored.iter().map(|&(_, _, d)| d).collect(),
        n_docs,
        index: HashMap::new(),
    };
    vocab.rebuild_index();
    Ok(vocab)
}

/// Corpus-wide score of every vocabulary token, in vocabulary order.
pub fn token_scores(corpora: &[&Corpus], vocab: &Vocabulary) -> Vec<f64> {
    let mut tf = vec![0u64; vocab.len()];
    for corpus in corpora {
        for record in corpus.records() {
            for t in tokenize(&record.text) {
                if let Some(c) = vocab.index_of(&t) {
                    tf[c as usize] += 1;
                }
            }
        }
    }
    tf.iter()
        .enumerate()
        .map(|(c, &n)| n as f64 * vocab.idf(c as u32))
        .collect()
}

/// L2-normalized TF-IDF rows for `corpus`, one per record.
pub fn featurize(corpus: &Corpus, vocab: &Vocabulary) -> FeatureMatrix {
    let mut m = FeatureMatrix::empty(vocab.len());
    for record in corpus.records() {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for t in tokenize(&record.text) {
            if let Some(c) = vocab.index_of(&t) {
                *counts.entry(c).or_insert(0) += 1;
            }
        }
        let mut entries: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(c, n)| (c, f64::from(n) * vocab.idf(c)))
            .collect();
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        m.push_row(
            RowId {
                project: record.project.clone(),
                comment_id: record.comment_id,
            },
            entries,
        );
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(project: &str, text: &str, truth: Option<bool>) -> CommentRecord {
        CommentRecord {
            project: project.into(),
            comment_id: 0,
            text: text.into(),
            truth,
        }
    }

    #[test]
    fn tokenizer_rules() {
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("TODO: fix this HACK!!"),
            vec!["todo", "fix", "hack"]
        );
        assert!(tokenize("is a the").is_empty());
        assert_eq!(tokenize("x2y foo_bar 42 ok"), vec!["foo", "bar", "ok"]);
    }

    #[test]
    fn three_row_fixture() {
        let csv = "projectname,classification,commenttext\n\
                   ant,DESIGN,x\n\
                   ant,WITHOUT_CLASSIFICATION,y\n\
                   emf,DEFECT,z\n";
        let c = read_corpus(csv.as_bytes(), LabelMode::Labeled).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.truth().unwrap(), vec![true, false, true]);
        assert_eq!(
            c.projects().iter().cloned().collect::<Vec<_>>(),
            vec!["ant", "emf"]
        );
        let ids: Vec<u64> = c.records().iter().map(|r| r.comment_id).collect();
        assert_eq!(ids, vec![0, 1, 0]);
    }

    #[test]
    fn header_match_is_case_insensitive() {
        let csv = "ProjectName,Classification,CommentText\nant,DEFECT,\"a, quoted\"\"x\"\"\"\n";
        let c = read_corpus(csv.as_bytes(), LabelMode::Labeled).unwrap();
        assert_eq!(c.records()[0].text, "a, quoted\"x\"");
    }

    #[test]
    fn schema_errors() {
        let err =
            read_corpus("projectname,commenttext\n".as_bytes(), LabelMode::Labeled).unwrap_err();
        assert!(matches!(err, Error::MissingColumn("classification")));
        let err = read_corpus(
            "projectname,classification\n".as_bytes(),
            LabelMode::Labeled,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingColumn("commenttext")));
        let err = read_corpus(
            "projectname,classification,commenttext\n".as_bytes(),
            LabelMode::Labeled,
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus));
        let err = load_corpus("/nonexistent/file.csv", LabelMode::Labeled).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn unlabeled_mode_ignores_classification() {
        let csv = "projectname,classification,commenttext\nant,DESIGN,x\n";
        let c = read_corpus(csv.as_bytes(), LabelMode::Unlabeled).unwrap();
        assert_eq!(c.records()[0].truth, None);
        assert!(c.ignored_labels());
        let csv = "projectname,commenttext\nant,x\n";
        let c = read_corpus(csv.as_bytes(), LabelMode::Unlabeled).unwrap();
        assert!(!c.ignored_labels());
    }

    #[test]
    fn single_document_score() {
        let c = Corpus::from_records(vec![rec("p", "todo todo", None)]);
        let v = build_vocabulary(&[&c], 10).unwrap();
        assert_eq!(v.tokens(), &["todo".to_string()]);
        assert_eq!(token_scores(&[&c], &v), vec![2.0]);
    }

    #[test]
    fn two_document_score() {
        let c = Corpus::from_records(vec![rec("p", "todo", None), rec("p", "todo", None)]);
        let v = build_vocabulary(&[&c], 10).unwrap();
        assert_eq!(v.doc_freq("todo"), Some(2));
        assert_eq!(v.n_docs(), 2);
        assert_eq!(token_scores(&[&c], &v), vec![2.0]);
    }

    #[test]
    fn tie_break_is_lexicographic() {
        let c = Corpus::from_records(vec![rec("p", "bb aa", None)]);
        let v = build_vocabulary(&[&c], 1).unwrap();
        assert_eq!(v.tokens(), &["aa".to_string()]);
    }

    #[test]
    fn empty_vocabulary_error() {
        let c = Corpus::from_records(vec![rec("p", "the a is", None)]);
        assert!(matches!(
            build_vocabulary(&[&c], 10),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn featurize_normalizes_rows() {
        let train = Corpus::from_records(vec![
            rec("p", "todo", None),
            rec("p", "hack", None),
            rec("p", "todo hack", None),
            rec("p", "nothing relevant", None),
        ]);
        let v = build_vocabulary(&[&train], 2).unwrap();
        let test = Corpus::from_records(vec![
            rec("q", "todo", None),
            rec("q", "zebra", None),
            rec("q", "todo hack", None),
        ]);
        let m = featurize(&test, &v);
        let todo = v.index_of("todo").unwrap();
        assert_eq!(m.to_dense()[0][todo as usize], 1.0);
        assert_eq!(m.row_norm(1), 0.0);
        let half = 1.0 / 2f64.sqrt();
        for w in m.to_dense()[2].iter() {
            assert!((w - half).abs() < 1e-12);
        }
    }
}
