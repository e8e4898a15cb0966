use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Contents of `manifest.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
    /// Citation links before deduplication, when the source recorded them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_links: Option<usize>,
}

/// Node id lists from `split.json`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Deterministic split: the first `train` shuffled nodes, then `val`,
    /// then `test`.
    pub fn random(num_nodes: usize, train: usize, val: usize, seed: u64) -> Result<Self> {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        if train + val > num_nodes {
            return Err(Error::Parameter(format!(
                "split sizes {train}+{val} exceed {num_nodes} nodes"
            )));
        }
        let mut ids: Vec<usize> = (0..num_nodes).collect();
        ids.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let take = |range: std::ops::Range<usize>| {
            let mut v = ids[range].to_vec();
            v.sort_unstable();
            v
        };
        Ok(Self {
            train: take(0..train),
            val: take(train..train + val),
            test: take(train + val..num_nodes),
        })
    }

    fn check(&self, num_nodes: usize) -> Result<()> {
        for (name, ids) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            if let Some(&bad) = ids.iter().find(|&&i| i >= num_nodes) {
                return Err(Error::Integrity(format!(
                    "split {name} references node {bad} of {num_nodes}"
                )));
            }
        }
        Ok(())
    }
}

/// Summary counts of a loaded dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
    pub raw_links: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: Graph,
    /// `None` when the directory has no `split.json`.
    pub split: Option<Split>,
    pub stats: DatasetStats,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers. An empty file is a parse
/// error.
fn content_lines(path: &Path, text: &str) -> Result<Vec<(usize, String)>> {
    let lines: Vec<(usize, String)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect();
    if lines.is_empty() {
        return Err(parse_err(path, 1, "file is empty"));
    }
    Ok(lines)
}

fn parse_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    content_lines(path, &text)?
        .into_iter()
        .map(|(no, line)| {
            let mut it = line.split_whitespace();
            let mut id = || -> Result<usize> {
                let tok = it
                    .next()
                    .ok_or_else(|| parse_err(path, no, "expected two node ids"))?;
                tok.parse()
                    .map_err(|_| parse_err(path, no, format!("invalid node id {tok:?}")))
            };
            let (a, b) = (id()?, id()?);
            if it.next().is_some() {
                return Err(parse_err(path, no, "more than two fields"));
            }
            Ok((a, b))
        })
        .collect()
}

fn parse_features(path: &Path) -> Result<Matrix> {
    let text = read(path)?;
    let lines = content_lines(path, &text)?;
    let mut data = Vec::new();
    let mut width = None;
    for (no, line) in &lines {
        let before = data.len();
        for tok in line.split(',') {
            let tok = tok.trim();
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, *no, format!("invalid number {tok:?}")))?;
            data.push(v);
        }
        let w = data.len() - before;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(parse_err(
                    path,
                    *no,
                    format!("row has {w} values, expected {expected}"),
                ))
            }
            _ => {}
        }
    }
    Matrix::from_vec(lines.len(), width.unwrap_or(0), data)
}

fn parse_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    content_lines(path, &text)?
        .into_iter()
        .map(|(no, line)| {
            line.parse()
                .map_err(|_| parse_err(path, no, format!("invalid label {line:?}")))
        })
        .collect()
}

fn integrity(field: &str, manifest: usize, found: usize) -> Result<()> {
    if manifest == found {
        Ok(())
    } else {
        Err(Error::Integrity(format!(
            "manifest {field} = {manifest}, files contain {found}"
        )))
    }
}

/// Loads a dataset directory (`edges.txt`, `features.csv`, `labels.txt`,
/// `manifest.json`, optional `split.json`) and checks it against the
/// manifest.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let manifest_text = read(&manifest_path)?;
    if manifest_text.trim().is_empty() {
        return Err(parse_err(&manifest_path, 1, "file is empty"));
    }
    let manifest: Manifest = serde_json::from_str(&manifest_text)
        .map_err(|e| parse_err(&manifest_path, e.line(), e.to_string()))?;

    let edges = parse_edges(&dir.join("edges.txt"))?;
    let features = parse_features(&dir.join("features.csv"))?;
    let labels = parse_labels(&dir.join("labels.txt"))?;

    integrity("nodes", manifest.nodes, features.rows())?;
    integrity("nodes", manifest.nodes, labels.len())?;
    integrity("features", manifest.features, features.cols())?;
    integrity("edges", manifest.edges, edges.len())?;
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    if classes > manifest.classes {
        return Err(Error::Integrity(format!(
            "label {} exceeds manifest class count {}",
            classes - 1,
            manifest.classes
        )));
    }

    let graph = Graph::from_edges(manifest.nodes, &edges, features, labels, manifest.classes)
        .map_err(|e| Error::Integrity(format!("edge list: {e}")))?;
    integrity("edges", manifest.edges, graph.num_edges())?;

    let split_path = dir.join("split.json");
    let split = if split_path.exists() {
        let split: Split = serde_json::from_str(&read(&split_path)?)
            .map_err(|e| parse_err(&split_path, e.line(), e.to_string()))?;
        split.check(manifest.nodes)?;
        Some(split)
    } else {
        None
    };

    Ok(Dataset {
        stats: DatasetStats {
            nodes: graph.num_nodes(),
            edges: graph.num_edges(),
            features: graph.feature_dim(),
            classes: graph.num_classes(),
            raw_links: manifest.raw_links,
        },
        graph,
        split,
    })
}

/// Writes `graph` in the directory format read by [`load_dataset`].
/// Self-loops are not written.
pub fn write_dataset(dir: impl AsRef<Path>, graph: &Graph, split: Option<&Split>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: &[u8]| -> Result<PathBuf> {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(body).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };

    let edges = graph.edges();
    let mut buf = String::new();
    for &(a, b) in &edges {
        buf.push_str(&format!("{a} {b}\n"));
    }
    write("edges.txt", buf.as_bytes())?;

    let mut buf = String::new();
    for i in 0..graph.num_nodes() {
        let row: Vec<String> = graph
            .features()
            .row(i)
            .iter()
            .map(|v| format!("{v:?}"))
            .collect();
        buf.push_str(&row.join(","));
        buf.push('\n');
    }
    write("features.csv", buf.as_bytes())?;

    let mut buf = String::new();
    for y in graph.labels() {
        buf.push_str(&format!("{y}\n"));
    }
    write("labels.txt", buf.as_bytes())?;

    let manifest = Manifest {
        nodes: graph.num_nodes(),
        edges: edges.len(),
        features: graph.feature_dim(),
        classes: graph.num_classes(),
        raw_links: None,
    };
    write(
        "manifest.json",
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    if let Some(split) = split {
        write("split.json", serde_json::to_string(split)?.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sbm_generate, SbmParams};

    #[test]
    fn round_trip_preserves_digest() {
        let dir = tempfile::tempdir().unwrap();
        let g = sbm_generate(&SbmParams::new(40, 2, 0.2, 0.3, 3, 0.7), 4).unwrap();
        let split = Split::random(40, 10, 10, 1).unwrap();
        write_dataset(dir.path(), &g, Some(&split)).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.graph.digest(), g.digest());
        assert_eq!(ds.split.unwrap(), split);
        assert_eq!(ds.stats.edges, g.num_edges());
    }

    #[test]
    fn empty_and_malformed_files_report_lines() {
        let dir = tempfile::tempdir().unwrap();
        let g = sbm_generate(&SbmParams::new(10, 2, 0.5, 0.3, 2, 0.1), 1).unwrap();
        write_dataset(dir.path(), &g, None).unwrap();

        fs::write(dir.path().join("labels.txt"), "").unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::Parse { line: 1, .. })
        ));

        let labels: String = (0..10)
            .map(|i| {
                if i == 6 {
                    "x\n".into()
                } else {
                    "0\n".to_string()
                }
            })
            .collect();
        fs::write(dir.path().join("labels.txt"), labels).unwrap();
        match load_dataset(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_mismatch_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let g = sbm_generate(&SbmParams::new(12, 2, 0.5, 0.5, 2, 0.1), 2).unwrap();
        write_dataset(dir.path(), &g, None).unwrap();
        let mut m: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        m.edges += 1;
        fs::write(
            dir.path().join("manifest.json"),
            serde_json::to_string(&m).unwrap(),
        )
        .unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Integrity(_))));
    }
}
