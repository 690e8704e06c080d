//! Canonical dataset directory:
//!
//! ```text
//! meta.json     {"num_nodes":N,"num_features":F,"num_classes":C,"name":"..."}
//! edges.csv     "src,dst" per line, 0-based, src < dst, no header
//! features.csv  N lines of F comma-separated floats
//! labels.csv    N lines, one class index each
//! splits.json   {"train":[..],"val":[..],"test":[..],"inductive":[..],"observed":[..]}
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SplitSpec};
use crate::tensor::DenseMatrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub name: String,
}

/// Contents of `splits.json`.
pub type SplitsFile = SplitSpec;

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Loads a dataset directory. Edges are symmetrised and deduplicated and
/// every count is checked against `meta.json`.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(Graph, SplitSpec)> {
    let dir = dir.as_ref();
    let meta: DatasetMeta = serde_json::from_str(&read(dir, "meta.json")?).map_err(|e| Error::Format {
        file: "meta.json".into(),
        message: e.to_string(),
    })?;
    let n = meta.num_nodes;

    let mut edges = Vec::new();
    let text = read(dir, "edges.csv")?;
    for (line, l) in data_lines(&text) {
        let (a, b) = l
            .split_once(',')
            .ok_or_else(|| parse_err("edges.csv", line, "expected 'src,dst'"))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| parse_err("edges.csv", line, format!("bad node id '{s}': {e}")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if u >= n || v >= n {
            return Err(parse_err(
                "edges.csv",
                line,
                format!("node id {} out of range (num_nodes {n})", u.max(v)),
            ));
        }
        edges.push((u, v));
    }

    let text = read(dir, "features.csv")?;
    let mut values = Vec::with_capacity(n * meta.num_features);
    let mut rows = 0;
    for (line, l) in data_lines(&text) {
        let before = values.len();
        for tok in l.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|e| parse_err("features.csv", line, format!("bad float '{tok}': {e}")))?;
            values.push(v);
        }
        if values.len() - before != meta.num_features {
            return Err(parse_err(
                "features.csv",
                line,
                format!("expected {} values, found {}", meta.num_features, values.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Format {
            file: "features.csv".into(),
            message: format!("expected {n} rows, found {rows}"),
        });
    }
    let features = DenseMatrix::from_vec(n, meta.num_features, values)?;

    let text = read(dir, "labels.csv")?;
    let mut labels = Vec::with_capacity(n);
    for (line, l) in data_lines(&text) {
        let y: usize = l
            .parse()
            .map_err(|e| parse_err("labels.csv", line, format!("bad label '{l}': {e}")))?;
        if y >= meta.num_classes {
            return Err(parse_err(
                "labels.csv",
                line,
                format!("label {y} out of range (num_classes {})", meta.num_classes),
            ));
        }
        labels.push(y);
    }
    if labels.len() != n {
        return Err(Error::Format {
            file: "labels.csv".into(),
            message: format!("expected {n} labels, found {}", labels.len()),
        });
    }

    let graph = Graph::from_edges(meta.name.clone(), n, &edges, features, labels, meta.num_classes)?;

    let split: SplitSpec = serde_json::from_str(&read(dir, "splits.json")?).map_err(|e| Error::Format {
        file: "splits.json".into(),
        message: e.to_string(),
    })?;
    split.validate(n).map_err(|e| Error::Format {
        file: "splits.json".into(),
        message: e.to_string(),
    })?;
    Ok((graph, split))
}

/// Writes a dataset directory that [`load_dataset`] reads back bit-exactly.
pub fn save_dataset(dir: impl AsRef<Path>, g: &Graph, split: &SplitSpec) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = DatasetMeta {
        num_nodes: g.num_nodes(),
        num_features: g.num_features(),
        num_classes: g.num_classes(),
        name: g.name.clone(),
    };
    write_file(dir, "meta.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &meta).map_err(std::io::Error::other)?;
        writeln!(w)
    })?;
    write_file(dir, "edges.csv", |w| {
        for (u, v) in g.edges() {
            writeln!(w, "{u},{v}")?;
        }
        Ok(())
    })?;
    write_file(dir, "features.csv", |w| {
        for r in 0..g.num_nodes() {
            for (i, x) in g.features().row(r).iter().enumerate() {
                if i > 0 {
                    w.write_all(b",")?;
                }
                // Debug formatting is the shortest representation that
                // parses back to the same bits.
                write!(w, "{x:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write_file(dir, "labels.csv", |w| {
        for y in g.labels() {
            writeln!(w, "{y}")?;
        }
        Ok(())
    })?;
    write_file(dir, "splits.json", |w| {
        serde_json::to_writer(&mut *w, split).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

/// Reads a LINQS citation dataset (`<name>.content` and `<name>.cites`).
///
/// Content lines are `paper_id <binary attributes...> class_label`; cites
/// lines are `cited_id citing_id`. Nodes keep file order, classes are
/// numbered in order of first appearance, and citations naming unknown
/// papers are skipped. With `row_normalize`, each feature row is scaled to
/// sum to one (all-zero rows stay zero).
pub fn import_linqs(dir: impl AsRef<Path>, name: &str, row_normalize: bool) -> Result<Graph> {
    let dir = dir.as_ref();
    let content_name = format!("{name}.content");
    let cites_name = format!("{name}.cites");
    let content = read(dir, &content_name)?;

    let mut ids = std::collections::HashMap::new();
    let mut classes: Vec<String> = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (line, l) in data_lines(&content) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(parse_err(&content_name, line, "expected id, attributes and label"));
        }
        let attrs = &toks[1..toks.len() - 1];
        match width {
            None => width = Some(attrs.len()),
            Some(w) if w != attrs.len() => {
                return Err(parse_err(
                    &content_name,
                    line,
                    format!("expected {w} attributes, found {}", attrs.len()),
                ))
            }
            _ => {}
        }
        if ids.insert(toks[0].to_string(), labels.len()).is_some() {
            return Err(parse_err(&content_name, line, format!("duplicate paper id '{}'", toks[0])));
        }
        let class = toks[toks.len() - 1];
        let y = match classes.iter().position(|c| c == class) {
            Some(y) => y,
            None => {
                classes.push(class.to_string());
                classes.len() - 1
            }
        };
        labels.push(y);
        let start = values.len();
        for a in attrs {
            let v: f64 = a
                .parse()
                .map_err(|e| parse_err(&content_name, line, format!("bad attribute '{a}': {e}")))?;
            values.push(v);
        }
        if row_normalize {
            let sum: f64 = values[start..].iter().sum();
            if sum != 0.0 {
                values[start..].iter_mut().for_each(|v| *v /= sum);
            }
        }
    }
    let n = labels.len();
    let features = DenseMatrix::from_vec(n, width.unwrap_or(0), values)?;

    let cites = read(dir, &cites_name)?;
    let mut edges = Vec::new();
    let mut skipped = 0usize;
    for (line, l) in data_lines(&cites) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(&cites_name, line, "expected 'cited citing'"));
        }
        match (ids.get(toks[0]), ids.get(toks[1])) {
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{cites_name}: skipped {skipped} citations of unknown papers");
    }
    Graph::from_edges(name, n, &edges, features, labels, classes.len())
}

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))
}
