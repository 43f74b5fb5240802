//! Versioned text container for trained models.
//!
//! The format is line-oriented and human-inspectable: a version tag, then
//! `[section]` blocks of tab-separated records. Numeric arrays are written in
//! decimal at full round-trip precision, so save followed by load reproduces
//! every parameter bit-for-bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::factors::{GammaFactor, GaussianFactor};
use crate::graph::{EntityGraph, GraphError};
use crate::trainer::TrainConfig;
use crate::updates::ModelState;

pub const FORMAT_TAG: &str = "varembed-model/1";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported archive format {found:?} (expected {FORMAT_TAG:?})")]
    Version { found: String },
    #[error("archive line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("inconsistent archive: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Relation metadata persisted with the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMeta {
    pub name: String,
    pub directed: bool,
    pub rank: usize,
}

/// A trained model plus everything needed to serve queries against it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    pub state: ModelState,
    pub graph: EntityGraph,
    pub relations: Vec<RelationMeta>,
    pub config: TrainConfig,
    /// Per-leaf training occurrence counts (drives the rare-entity slice).
    pub frequencies: Vec<u64>,
}

impl ModelArchive {
    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }
}

fn push_floats(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
}

fn gaussian_section(out: &mut String, name: &str, factors: &[GaussianFactor]) {
    let _ = writeln!(out, "[gaussian {name}]");
    for (idx, f) in factors.iter().enumerate() {
        let _ = write!(out, "{idx}\t");
        push_floats(out, f.mean());
        out.push('\t');
        push_floats(out, f.precision_diag());
        out.push('\n');
    }
}

fn gamma_section(out: &mut String, name: &str, factors: &[GammaFactor]) {
    let _ = writeln!(out, "[gamma {name}]");
    for (idx, f) in factors.iter().enumerate() {
        let _ = writeln!(out, "{idx}\t{}\t{}", f.shape, f.rate);
    }
}

/// Renders the archive to its text format.
pub fn render(archive: &ModelArchive) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_TAG}");

    // The worker count is a runtime property, not part of the model: results
    // are identical at any parallelism, so it is not echoed.
    let c = &archive.config;
    let _ = writeln!(out, "[config]");
    let _ = writeln!(out, "dim\t{}", c.dim);
    let _ = writeln!(out, "neg_ratio\t{}", c.neg_ratio);
    let _ = writeln!(out, "epochs\t{}", c.epochs);
    let _ = writeln!(out, "alpha\t{}", c.alpha);
    let _ = writeln!(out, "beta\t{}", c.beta);
    let _ = writeln!(out, "subsample_rho\t{}", c.subsample_rho);
    let _ = writeln!(out, "seed\t{}", c.seed);
    let _ = writeln!(out, "elbo_tol\t{}", c.elbo_tol);

    let _ = writeln!(out, "[leaves]");
    for i in 0..archive.graph.n_leaves() as u32 {
        let _ = writeln!(out, "{i}\t{}", archive.graph.leaf_name(i));
    }
    let _ = writeln!(out, "[categories]");
    for i in 0..archive.graph.n_categories() as u32 {
        let _ = writeln!(out, "{i}\t{}", archive.graph.cat_name(i));
    }
    let _ = writeln!(out, "[edges]");
    for (child, parent) in archive.graph.edges() {
        let _ = writeln!(out, "{child}\t{parent}");
    }
    let _ = writeln!(out, "[frequencies]");
    for (i, f) in archive.frequencies.iter().enumerate() {
        let _ = writeln!(out, "{i}\t{f}");
    }
    let _ = writeln!(out, "[relations]");
    for (k, rel) in archive.relations.iter().enumerate() {
        let _ = writeln!(
            out,
            "{k}\t{}\t{}\t{}",
            rel.name,
            if rel.directed { "directed" } else { "undirected" },
            rel.rank
        );
    }

    let s = &archive.state;
    gaussian_section(&mut out, "u", &s.u);
    gaussian_section(&mut out, "v", &s.v);
    gaussian_section(&mut out, "hu", &s.hu);
    gaussian_section(&mut out, "hv", &s.hv);
    gaussian_section(&mut out, "b", &s.b);
    for (k, r) in s.r.iter().enumerate() {
        gaussian_section(&mut out, &format!("r:{k}"), r);
    }
    for (k, x) in s.x.iter().enumerate() {
        gaussian_section(&mut out, &format!("x:{k}"), x);
    }
    for (k, y) in s.y.iter().enumerate() {
        gaussian_section(&mut out, &format!("y:{k}"), y);
    }
    gamma_section(&mut out, "tau_u", &s.tau_u);
    gamma_section(&mut out, "tau_v", &s.tau_v);
    gamma_section(&mut out, "tau_hu", &s.tau_hu);
    gamma_section(&mut out, "tau_hv", &s.tau_hv);
    gamma_section(&mut out, "tau_b", &s.tau_b);
    for (k, t) in s.tau_r.iter().enumerate() {
        gamma_section(&mut out, &format!("tau_r:{k}"), t);
    }
    for (k, t) in s.tau_x.iter().enumerate() {
        gamma_section(&mut out, &format!("tau_x:{k}"), t);
    }
    for (k, t) in s.tau_y.iter().enumerate() {
        gamma_section(&mut out, &format!("tau_y:{k}"), t);
    }
    out
}

pub fn save(path: &Path, archive: &ModelArchive) -> Result<(), ArchiveError> {
    fs::write(path, render(archive)).map_err(|source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Sections {
    // section name -> (line number, fields) records
    by_name: BTreeMap<String, Vec<(usize, Vec<String>)>>,
    order: Vec<String>,
}

fn split_sections(text: &str) -> Result<Sections, ArchiveError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, tag)) if tag == FORMAT_TAG => {}
        Some((_, tag)) => return Err(ArchiveError::Version { found: tag.to_owned() }),
        None => return Err(ArchiveError::Version { found: String::new() }),
    }
    let mut sections = Sections { by_name: BTreeMap::new(), order: Vec::new() };
    let mut current: Option<String> = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if sections.by_name.contains_key(name) {
                return Err(ArchiveError::Parse { line: line_no, message: format!("duplicate section {name:?}") });
            }
            sections.by_name.insert(name.to_owned(), Vec::new());
            sections.order.push(name.to_owned());
            current = Some(name.to_owned());
            continue;
        }
        let Some(section) = current.as_ref() else {
            return Err(ArchiveError::Parse { line: line_no, message: "record before first section".into() });
        };
        let fields: Vec<String> = line.split('\t').map(str::to_owned).collect();
        sections.by_name.get_mut(section).unwrap().push((line_no, fields));
    }
    Ok(sections)
}

fn parse_f64(s: &str, line: usize) -> Result<f64, ArchiveError> {
    s.parse()
        .map_err(|_| ArchiveError::Parse { line, message: format!("bad float {s:?}") })
}

fn parse_indexed<T>(
    records: &[(usize, Vec<String>)],
    section: &str,
    mut parse: impl FnMut(&[String], usize) -> Result<T, ArchiveError>,
) -> Result<Vec<T>, ArchiveError> {
    let mut out = Vec::with_capacity(records.len());
    for (pos, (line, fields)) in records.iter().enumerate() {
        let idx: usize = fields
            .first()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| ArchiveError::Parse { line: *line, message: format!("bad index in {section}") })?;
        if idx != pos {
            return Err(ArchiveError::Inconsistent(format!(
                "{section}: index {idx} at position {pos}"
            )));
        }
        out.push(parse(&fields[1..], *line)?);
    }
    Ok(out)
}

fn parse_gaussians(records: &[(usize, Vec<String>)], section: &str) -> Result<Vec<GaussianFactor>, ArchiveError> {
    parse_indexed(records, section, |fields, line| {
        if fields.len() != 2 {
            return Err(ArchiveError::Parse { line, message: format!("{section}: expected mean and precision arrays") });
        }
        let mean = fields[0]
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| parse_f64(s, line))
            .collect::<Result<Vec<f64>, _>>()?;
        let precision = fields[1]
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| parse_f64(s, line))
            .collect::<Result<Vec<f64>, _>>()?;
        if mean.len() != precision.len() {
            return Err(ArchiveError::Parse { line, message: format!("{section}: mean/precision length mismatch") });
        }
        Ok(GaussianFactor::new(mean, precision))
    })
}

fn parse_gammas(records: &[(usize, Vec<String>)], section: &str) -> Result<Vec<GammaFactor>, ArchiveError> {
    parse_indexed(records, section, |fields, line| {
        if fields.len() != 2 {
            return Err(ArchiveError::Parse { line, message: format!("{section}: expected shape and rate") });
        }
        Ok(GammaFactor::new(parse_f64(&fields[0], line)?, parse_f64(&fields[1], line)?))
    })
}

/// Parses an archive from its text form.
pub fn parse(text: &str) -> Result<ModelArchive, ArchiveError> {
    let sections = split_sections(text)?;
    let get = |name: &str| -> Result<&Vec<(usize, Vec<String>)>, ArchiveError> {
        sections
            .by_name
            .get(name)
            .ok_or_else(|| ArchiveError::Inconsistent(format!("missing section {name:?}")))
    };

    let mut config = TrainConfig { workers: 1, ..TrainConfig::default() };
    for (line, fields) in get("config")? {
        if fields.len() != 2 {
            return Err(ArchiveError::Parse { line: *line, message: "config records are key<TAB>value".into() });
        }
        let value = &fields[1];
        let bad = |_| ArchiveError::Parse { line: *line, message: format!("bad config value {value:?}") };
        match fields[0].as_str() {
            "dim" => config.dim = value.parse().map_err(bad)?,
            "neg_ratio" => config.neg_ratio = value.parse().map_err(bad)?,
            "epochs" => config.epochs = value.parse().map_err(bad)?,
            "alpha" => config.alpha = parse_f64(value, *line)?,
            "beta" => config.beta = parse_f64(value, *line)?,
            "subsample_rho" => config.subsample_rho = parse_f64(value, *line)?,
            "seed" => config.seed = value.parse().map_err(bad)?,
            "elbo_tol" => config.elbo_tol = parse_f64(value, *line)?,
            other => return Err(ArchiveError::Parse { line: *line, message: format!("unknown config key {other:?}") }),
        }
    }

    let leaves: Vec<String> = parse_indexed(get("leaves")?, "leaves", |fields, line| {
        fields
            .first()
            .cloned()
            .ok_or_else(|| ArchiveError::Parse { line, message: "leaf record missing id".into() })
    })?;
    let categories: Vec<String> = parse_indexed(get("categories")?, "categories", |fields, line| {
        fields
            .first()
            .cloned()
            .ok_or_else(|| ArchiveError::Parse { line, message: "category record missing id".into() })
    })?;
    let edges: Vec<(String, String)> = get("edges")?
        .iter()
        .map(|(line, fields)| {
            if fields.len() == 2 {
                Ok((fields[0].clone(), fields[1].clone()))
            } else {
                Err(ArchiveError::Parse { line: *line, message: "edge records are child<TAB>parent".into() })
            }
        })
        .collect::<Result<_, _>>()?;

    let graph = EntityGraph::build(&leaves, &edges)?;
    if graph.n_leaves() != leaves.len() {
        return Err(ArchiveError::Inconsistent("duplicate leaf ids".into()));
    }
    for (i, name) in leaves.iter().enumerate() {
        if graph.leaf_name(i as u32) != name {
            return Err(ArchiveError::Inconsistent(format!("leaf table out of order at index {i}")));
        }
    }
    if graph.n_categories() != categories.len() {
        return Err(ArchiveError::Inconsistent("category table does not match edges".into()));
    }
    for (i, name) in categories.iter().enumerate() {
        if graph.cat_name(i as u32) != name {
            return Err(ArchiveError::Inconsistent(format!("category table out of order at index {i}")));
        }
    }

    let frequencies: Vec<u64> = parse_indexed(get("frequencies")?, "frequencies", |fields, line| {
        fields
            .first()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| ArchiveError::Parse { line, message: "bad frequency".into() })
    })?;

    let relations: Vec<RelationMeta> = parse_indexed(get("relations")?, "relations", |fields, line| {
        if fields.len() != 3 {
            return Err(ArchiveError::Parse { line, message: "relation records are name<TAB>direction<TAB>rank".into() });
        }
        let directed = match fields[1].as_str() {
            "directed" => true,
            "undirected" => false,
            other => return Err(ArchiveError::Parse { line, message: format!("bad direction {other:?}") }),
        };
        let rank = fields[2]
            .parse()
            .map_err(|_| ArchiveError::Parse { line, message: format!("bad rank {:?}", fields[2]) })?;
        Ok(RelationMeta { name: fields[0].clone(), directed, rank })
    })?;

    let n_rel = relations.len();
    let state = ModelState {
        dim: config.dim,
        u: parse_gaussians(get("gaussian u")?, "gaussian u")?,
        v: parse_gaussians(get("gaussian v")?, "gaussian v")?,
        hu: parse_gaussians(get("gaussian hu")?, "gaussian hu")?,
        hv: parse_gaussians(get("gaussian hv")?, "gaussian hv")?,
        b: parse_gaussians(get("gaussian b")?, "gaussian b")?,
        r: (0..n_rel)
            .map(|k| parse_gaussians(get(&format!("gaussian r:{k}"))?, "gaussian r"))
            .collect::<Result<_, _>>()?,
        x: (0..n_rel)
            .map(|k| parse_gaussians(get(&format!("gaussian x:{k}"))?, "gaussian x"))
            .collect::<Result<_, _>>()?,
        y: (0..n_rel)
            .map(|k| parse_gaussians(get(&format!("gaussian y:{k}"))?, "gaussian y"))
            .collect::<Result<_, _>>()?,
        tau_u: parse_gammas(get("gamma tau_u")?, "gamma tau_u")?,
        tau_v: parse_gammas(get("gamma tau_v")?, "gamma tau_v")?,
        tau_hu: parse_gammas(get("gamma tau_hu")?, "gamma tau_hu")?,
        tau_hv: parse_gammas(get("gamma tau_hv")?, "gamma tau_hv")?,
        tau_b: parse_gammas(get("gamma tau_b")?, "gamma tau_b")?,
        tau_r: (0..n_rel)
            .map(|k| parse_gammas(get(&format!("gamma tau_r:{k}"))?, "gamma tau_r"))
            .collect::<Result<_, _>>()?,
        tau_x: (0..n_rel)
            .map(|k| parse_gammas(get(&format!("gamma tau_x:{k}"))?, "gamma tau_x"))
            .collect::<Result<_, _>>()?,
        tau_y: (0..n_rel)
            .map(|k| parse_gammas(get(&format!("gamma tau_y:{k}"))?, "gamma tau_y"))
            .collect::<Result<_, _>>()?,
    };

    let archive = ModelArchive { state, graph, relations, config, frequencies };
    validate(&archive)?;
    Ok(archive)
}

fn validate(a: &ModelArchive) -> Result<(), ArchiveError> {
    let n = a.graph.n_leaves();
    let c = a.graph.n_categories();
    let s = &a.state;
    let check = |ok: bool, what: &str| -> Result<(), ArchiveError> {
        if ok {
            Ok(())
        } else {
            Err(ArchiveError::Inconsistent(what.to_owned()))
        }
    };
    check(s.u.len() == n && s.v.len() == n && s.b.len() == n, "leaf factor counts")?;
    check(s.hu.len() == c && s.hv.len() == c, "category factor counts")?;
    check(a.frequencies.len() == n, "frequency table length")?;
    check(s.tau_u.len() == n && s.tau_v.len() == n && s.tau_b.len() == n, "leaf precision counts")?;
    check(s.tau_hu.len() == c && s.tau_hv.len() == c, "category precision counts")?;
    for (k, rel) in a.relations.iter().enumerate() {
        check(s.x[k].len() == rel.rank && s.y[k].len() == rel.rank, "map column counts")?;
        check(s.r[k].len() == n && s.tau_r[k].len() == n, "relation bias counts")?;
        check(s.tau_x[k].len() == rel.rank && s.tau_y[k].len() == rel.rank, "map precision counts")?;
    }
    for f in s.u.iter().chain(&s.v).chain(&s.hu).chain(&s.hv) {
        check(f.dim() == s.dim, "factor dimension")?;
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelArchive, ArchiveError> {
    let text = fs::read_to_string(path).map_err(|source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{CoOccurrenceData, RelationData};
    use crate::trainer::{fit, TrainConfig};

    fn trained_archive() -> ModelArchive {
        let graph = EntityGraph::build(
            &["a", "b", "c", "d"],
            &[("a", "g"), ("b", "g"), ("c", "g2"), ("g", "top"), ("g2", "top")],
        )
        .unwrap();
        let cooc = CoOccurrenceData::new(vec![(0, 1, 2), (1, 2, 1), (2, 3, 4)], 4).unwrap();
        let rel = RelationData::new("opp".into(), false, 2, &[(0, 3)], 4).unwrap();
        let config = TrainConfig { dim: 3, epochs: 3, seed: 13, subsample_rho: 1.0, ..TrainConfig::default() };
        let (state, _) = fit(&graph, &cooc, std::slice::from_ref(&rel), &config).unwrap();
        let frequencies = (0..4).map(|i| cooc.count(i)).collect();
        ModelArchive {
            state,
            graph,
            relations: vec![RelationMeta { name: "opp".into(), directed: false, rank: 2 }],
            config,
            frequencies,
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let archive = trained_archive();
        let text = render(&archive);
        let reloaded = parse(&text).unwrap();
        assert_eq!(reloaded.state, archive.state);
        assert_eq!(reloaded.relations, archive.relations);
        assert_eq!(reloaded.frequencies, archive.frequencies);
        assert_eq!(reloaded.config, archive.config);
        assert_eq!(render(&reloaded), text, "render must be a fixed point");
    }

    #[test]
    fn version_is_checked() {
        let err = parse("other-format/9\n").unwrap_err();
        assert!(matches!(err, ArchiveError::Version { .. }));
    }

    #[test]
    fn truncated_archives_are_rejected() {
        let archive = trained_archive();
        let text = render(&archive);
        let cut = &text[..text.len() / 2];
        assert!(parse(cut).is_err());
    }
}
