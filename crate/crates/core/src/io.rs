//! TSV ingestion: co-occurrence pairs, hierarchy edges, relation manifests,
//! evaluation test sets, and the corpus-to-pairs converter.
//!
//! All files are UTF-8, tab-separated, one record per line. Blank lines and
//! lines starting with `#` are skipped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: corpus contains no tokens")]
    EmptyCorpus { path: PathBuf },
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(idx, line)| (idx + 1, line.to_owned()))
        .filter(|(_, line)| !line.trim().is_empty() && !line.trim_start().starts_with('#'))
        .collect())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// `i <TAB> j <TAB> count` records.
pub fn read_cooccurrence(path: &Path) -> Result<Vec<(String, String, u32)>, IoError> {
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, line_no, format!("expected `i<TAB>j<TAB>count`, got {} fields", fields.len())));
        }
        let count: u32 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad count {:?}", fields[2])))?;
        if count == 0 {
            return Err(parse_err(path, line_no, "count must be >= 1"));
        }
        out.push((fields[0].to_owned(), fields[1].to_owned(), count));
    }
    Ok(out)
}

/// `child <TAB> parent` records.
pub fn read_hierarchy(path: &Path) -> Result<Vec<(String, String)>, IoError> {
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(path, line_no, format!("expected `child<TAB>parent`, got {} fields", fields.len())));
        }
        out.push((fields[0].to_owned(), fields[1].to_owned()));
    }
    Ok(out)
}

/// One line of the relations manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSpec {
    pub name: String,
    pub directed: bool,
    pub rank: usize,
    /// Pair file path, resolved against the manifest's directory.
    pub path: PathBuf,
}

/// `name <TAB> directed|undirected <TAB> rank <TAB> path` records.
pub fn read_relations_manifest(path: &Path) -> Result<Vec<RelationSpec>, IoError> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(path, line_no, format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let directed = match fields[1].trim() {
            "directed" => true,
            "undirected" => false,
            other => return Err(parse_err(path, line_no, format!("expected directed|undirected, got {other:?}"))),
        };
        let rank: usize = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad rank {:?}", fields[2])))?;
        if rank == 0 {
            return Err(parse_err(path, line_no, "rank must be >= 1"));
        }
        let rel_path = Path::new(fields[3].trim());
        let resolved = if rel_path.is_absolute() {
            rel_path.to_path_buf()
        } else {
            base.join(rel_path)
        };
        out.push(RelationSpec { name: fields[0].to_owned(), directed, rank, path: resolved });
    }
    Ok(out)
}

/// `i <TAB> j` records.
pub fn read_relation_pairs(path: &Path) -> Result<Vec<(String, String)>, IoError> {
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(path, line_no, format!("expected `i<TAB>j`, got {} fields", fields.len())));
        }
        out.push((fields[0].to_owned(), fields[1].to_owned()));
    }
    Ok(out)
}

/// One retrieval test case: comma-separated query ids and a hidden target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceCase {
    pub query: Vec<String>,
    pub target: String,
}

/// `q1,q2,... <TAB> target` records.
pub fn read_inference_cases(path: &Path) -> Result<Vec<InferenceCase>, IoError> {
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(path, line_no, format!("expected `queries<TAB>target`, got {} fields", fields.len())));
        }
        let query: Vec<String> = fields[0]
            .split(',')
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
            .collect();
        if query.is_empty() {
            return Err(parse_err(path, line_no, "empty query list"));
        }
        out.push(InferenceCase { query, target: fields[1].trim().to_owned() });
    }
    Ok(out)
}

/// `word1 <TAB> word2 <TAB> gold-score` records.
pub fn read_similarity_pairs(path: &Path) -> Result<Vec<(String, String, f64)>, IoError> {
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, line_no, format!("expected `w1<TAB>w2<TAB>score`, got {} fields", fields.len())));
        }
        let score: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad score {:?}", fields[2])))?;
        out.push((fields[0].to_owned(), fields[1].to_owned(), score));
    }
    Ok(out)
}

/// Extracts symmetric-window co-occurrence pairs from a corpus with one
/// whitespace-tokenized sentence per line; counts aggregate over the corpus.
pub fn pairs_from_text(path: &Path, window: usize) -> Result<Vec<(String, String, u32)>, IoError> {
    assert!(window >= 1, "window must be >= 1");
    let text = fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut counts: BTreeMap<(String, String), u32> = BTreeMap::new();
    let mut saw_token = false;
    for line in text.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if !tokens.is_empty() {
            saw_token = true;
        }
        for p in 0..tokens.len() {
            let lo = p.saturating_sub(window);
            let hi = (p + window).min(tokens.len().saturating_sub(1));
            for q in lo..=hi {
                if q != p {
                    *counts.entry((tokens[p].to_owned(), tokens[q].to_owned())).or_insert(0) += 1;
                }
            }
        }
    }
    if !saw_token {
        return Err(IoError::EmptyCorpus { path: path.to_path_buf() });
    }
    Ok(counts.into_iter().map(|((a, b), c)| (a, b, c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn cooccurrence_parses_and_validates() {
        let f = temp_file("a\tb\t3\n# comment\n\nb\tc\t1\n");
        let pairs = read_cooccurrence(f.path()).unwrap();
        assert_eq!(pairs, vec![("a".into(), "b".into(), 3), ("b".into(), "c".into(), 1)]);

        let bad = temp_file("a\tb\tzero\n");
        let err = read_cooccurrence(bad.path()).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("relations.tsv");
        fs::write(&manifest, "antonym\tundirected\t4\tantonym.tsv\n").unwrap();
        let specs = read_relations_manifest(&manifest).unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].name, "antonym");
        assert!(!specs[0].directed);
        assert_eq!(specs[0].rank, 4);
        assert_eq!(specs[0].path, dir.path().join("antonym.tsv"));
    }

    #[test]
    fn window_pairs_basic() {
        let f = temp_file("a b c\n");
        let pairs = pairs_from_text(f.path(), 1).unwrap();
        assert_eq!(
            pairs,
            vec![
                ("a".into(), "b".into(), 1),
                ("b".into(), "a".into(), 1),
                ("b".into(), "c".into(), 1),
                ("c".into(), "b".into(), 1),
            ]
        );
    }

    #[test]
    fn window_covers_sentence_when_large() {
        let f = temp_file("a b c\n");
        let pairs = pairs_from_text(f.path(), 10).unwrap();
        // All ordered within-sentence pairs.
        assert_eq!(pairs.len(), 6);
        assert!(pairs.iter().all(|&(_, _, c)| c == 1));
    }

    #[test]
    fn duplicate_sentences_double_counts() {
        let f = temp_file("a b\na b\n");
        let pairs = pairs_from_text(f.path(), 1).unwrap();
        assert_eq!(pairs, vec![("a".into(), "b".into(), 2), ("b".into(), "a".into(), 2)]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let f = temp_file("\n\n");
        assert!(matches!(pairs_from_text(f.path(), 1), Err(IoError::EmptyCorpus { .. })));
    }

    #[test]
    fn inference_cases_parse() {
        let f = temp_file("a,b\tc\nq\tt\n");
        let cases = read_inference_cases(f.path()).unwrap();
        assert_eq!(cases[0].query, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(cases[0].target, "c");
        assert_eq!(cases[1].query, vec!["q".to_string()]);
    }
}
