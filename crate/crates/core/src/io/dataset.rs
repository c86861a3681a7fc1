//! On-disk datasets: a TOML schema file plus whitespace-separated text
//! files for edges, features, labels and splits.
//!
//! Data files are resolved relative to the data directory, which defaults
//! to the directory holding the schema file. In every data file, blank
//! lines and lines whose first non-blank character is `#` are ignored.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Features, GraphBuilder, HetGraph, Labels, Masks, NodeTypeDecl, NodeTypeId, RelationDecl, RelationId, Schema};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeTypeEntry {
    pub name: String,
    pub symbol: String,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    /// Number of classes; defaults to the largest label plus one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationEntry {
    pub name: String,
    pub source: String,
    pub target: String,
    pub edges: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_edges: Option<usize>,
}

/// Contents of a schema file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaFile {
    pub node_types: Vec<NodeTypeEntry>,
    #[serde(default)]
    pub relations: Vec<RelationEntry>,
}

impl SchemaFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?, path)
    }

    pub fn schema(&self) -> Result<Schema> {
        let types = self
            .node_types
            .iter()
            .map(|t| NodeTypeDecl {
                name: t.name.clone(),
                symbol: t.symbol.clone(),
            })
            .collect::<Vec<_>>();
        let find = |s: &str| {
            types
                .iter()
                .position(|t| t.symbol == s)
                .map(NodeTypeId)
                .ok_or_else(|| Error::Schema(format!("relation endpoint {s:?} is not a declared symbol")))
        };
        let mut rels = Vec::new();
        for r in &self.relations {
            if r.name.contains(['[', ']']) {
                return Err(Error::Schema(format!("relation name {:?} may not contain brackets", r.name)));
            }
            rels.push(RelationDecl {
                name: r.name.clone(),
                source: find(&r.source)?,
                target: find(&r.target)?,
            });
        }
        Schema::new(types, rels)
    }
}

/// A loaded graph with its observed sizes and any warnings.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: HetGraph,
    /// `(symbol, nodes)` per type.
    pub node_counts: Vec<(String, usize)>,
    /// `(relation name, edges)` per relation.
    pub edge_counts: Vec<(String, usize)>,
    pub warnings: Vec<String>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-comment lines as `(1-based line number, fields)`.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn index(path: &Path, line: usize, field: &str, what: &str, bound: usize) -> Result<usize> {
    let v: usize = field
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what} {field:?} is not a nonnegative integer")))?;
    if v >= bound {
        return Err(parse_err(path, line, format!("{what} {v} out of range (< {bound})")));
    }
    Ok(v)
}

fn expect_fields(path: &Path, line: usize, fields: &[&str], n: usize) -> Result<()> {
    if fields.len() != n {
        return Err(parse_err(
            path,
            line,
            format!("expected {n} fields, found {}: {:?}", fields.len(), fields.join(" ")),
        ));
    }
    Ok(())
}

/// Reads `u v` pairs. Duplicates (in either order for a self relation)
/// are errors naming both lines.
pub fn read_edges(path: &Path, n_source: usize, n_target: usize, self_relation: bool) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut out = Vec::new();
    for (line, f) in records(&text) {
        expect_fields(path, line, &f, 2)?;
        let u = index(path, line, f[0], "source node", n_source)?;
        let v = index(path, line, f[1], "target node", n_target)?;
        let key = if self_relation && v < u { (v, u) } else { (u, v) };
        if let Some(first) = seen.insert(key, line) {
            return Err(parse_err(path, line, format!("duplicate edge ({u}, {v}), first on line {first}")));
        }
        out.push((u, v));
    }
    Ok(out)
}

/// Reads one dense row per node.
pub fn read_features(path: &Path, count: usize) -> Result<Tensor> {
    let text = read(path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, f) in records(&text) {
        if *width.get_or_insert(f.len()) != f.len() {
            return Err(parse_err(
                path,
                line,
                format!("row has {} values, earlier rows have {}", f.len(), width.unwrap_or(0)),
            ));
        }
        for x in f {
            let v: f64 = x
                .parse()
                .map_err(|_| parse_err(path, line, format!("{x:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite feature {x:?}")));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows != count {
        return Err(Error::Dimension(format!(
            "{}: {rows} feature rows for {count} declared nodes",
            path.display()
        )));
    }
    Tensor::matrix(rows, width.unwrap_or(0), data)
}

/// Reads `node class` pairs; unlisted nodes are unlabeled.
pub fn read_labels(path: &Path, count: usize, classes: Option<usize>) -> Result<Labels> {
    let text = read(path)?;
    let mut out: Vec<Option<usize>> = vec![None; count];
    let mut first: Vec<usize> = vec![0; count];
    for (line, f) in records(&text) {
        expect_fields(path, line, &f, 2)?;
        let v = index(path, line, f[0], "node", count)?;
        let c = index(path, line, f[1], "class", classes.unwrap_or(usize::MAX))?;
        if out[v].is_some() {
            return Err(parse_err(path, line, format!("node {v} labeled twice, first on line {}", first[v])));
        }
        out[v] = Some(c);
        first[v] = line;
    }
    let num_classes = classes.unwrap_or_else(|| out.iter().flatten().max().map_or(0, |m| m + 1));
    Ok(Labels {
        classes: out,
        num_classes,
    })
}

/// Reads `node split` pairs with split one of `train`, `val`, `test`.
pub fn read_splits(path: &Path, count: usize) -> Result<Masks> {
    let text = read(path)?;
    let mut masks = Masks::default();
    let mut first: HashMap<usize, usize> = HashMap::new();
    for (line, f) in records(&text) {
        expect_fields(path, line, &f, 2)?;
        let v = index(path, line, f[0], "node", count)?;
        if let Some(prev) = first.insert(v, line) {
            return Err(parse_err(path, line, format!("node {v} assigned twice, first on line {prev}")));
        }
        match f[1] {
            "train" => masks.train.push(v),
            "val" => masks.val.push(v),
            "test" => masks.test.push(v),
            other => return Err(parse_err(path, line, format!("unknown split {other:?}"))),
        }
    }
    Ok(masks)
}

/// Loads the dataset described by `schema_path`. Files are looked up in
/// `data_dir`, or next to the schema file when `None`.
pub fn load_dataset(schema_path: &Path, data_dir: Option<&Path>) -> Result<Dataset> {
    let file = SchemaFile::load(schema_path)?;
    let schema = file.schema()?;
    let dir = match data_dir {
        Some(d) => d.to_path_buf(),
        None => schema_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let counts: Vec<usize> = file.node_types.iter().map(|t| t.count).collect();
    let mut warnings = Vec::new();
    let mut builder = GraphBuilder::new(schema.clone(), counts.clone());
    let mut edge_counts = Vec::new();
    for (ri, r) in file.relations.iter().enumerate() {
        let decl = schema.relation(RelationId(ri));
        let edges = read_edges(
            &dir.join(&r.edges),
            counts[decl.source.0],
            counts[decl.target.0],
            decl.is_self_relation(),
        )?;
        if edges.is_empty() {
            warnings.push(format!("relation {} has no edges", r.name));
        }
        if let Some(want) = r.expected_edges {
            if want != edges.len() {
                warnings.push(format!("relation {}: {} edges, schema expects {want}", r.name, edges.len()));
            }
        }
        edge_counts.push((r.name.clone(), edges.len()));
        builder = builder.edges(edges.into_iter().map(|(u, v)| (RelationId(ri), u, v)));
    }
    for (ti, t) in file.node_types.iter().enumerate() {
        let ty = NodeTypeId(ti);
        if let Some(f) = &t.features {
            builder = builder.features(ty, read_features(&dir.join(f), t.count)?);
        }
        if let Some(f) = &t.labels {
            builder = builder.labels(ty, read_labels(&dir.join(f), t.count, t.classes)?);
        }
        if let Some(f) = &t.splits {
            builder = builder.masks(ty, read_splits(&dir.join(f), t.count)?);
        }
    }
    let graph = builder.build()?;
    let node_counts = file.node_types.iter().map(|t| (t.symbol.clone(), t.count)).collect();
    Ok(Dataset {
        graph,
        node_counts,
        edge_counts,
        warnings,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// Writes `graph` as a schema file plus data files into `dir` and returns
/// the schema file path. Loading it back yields an identical graph.
pub fn write_dataset(graph: &HetGraph, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let schema = graph.schema();
    let mut file = SchemaFile {
        node_types: Vec::new(),
        relations: Vec::new(),
    };
    for (ti, decl) in schema.node_types().iter().enumerate() {
        let ty = NodeTypeId(ti);
        let stem = format!("{ti}_{}", file_stem(&decl.symbol));
        let mut entry = NodeTypeEntry {
            name: decl.name.clone(),
            symbol: decl.symbol.clone(),
            count: graph.num_nodes(ty),
            features: None,
            labels: None,
            classes: None,
            splits: None,
        };
        if let Features::Dense(x) = graph.features(ty) {
            let mut s = String::new();
            for r in 0..x.rows() {
                let row: Vec<String> = x.row(r).iter().map(|v| v.to_string()).collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
            let name = format!("{stem}.features");
            write(&dir.join(&name), &s)?;
            entry.features = Some(name);
        }
        if let Some(l) = graph.labels(ty) {
            let mut s = String::new();
            for (v, c) in l.classes.iter().enumerate() {
                if let Some(c) = c {
                    writeln!(s, "{v} {c}").expect("string write");
                }
            }
            let name = format!("{stem}.labels");
            write(&dir.join(&name), &s)?;
            entry.labels = Some(name);
            entry.classes = Some(l.num_classes);
        }
        if let Some(m) = graph.masks(ty) {
            let mut rows: Vec<(usize, &str)> = Vec::new();
            rows.extend(m.train.iter().map(|&v| (v, "train")));
            rows.extend(m.val.iter().map(|&v| (v, "val")));
            rows.extend(m.test.iter().map(|&v| (v, "test")));
            rows.sort_unstable();
            let mut s = String::new();
            for (v, split) in rows {
                writeln!(s, "{v} {split}").expect("string write");
            }
            let name = format!("{stem}.splits");
            write(&dir.join(&name), &s)?;
            entry.splits = Some(name);
        }
        file.node_types.push(entry);
    }
    for (ri, decl) in schema.relations().iter().enumerate() {
        let edges = graph.edges(RelationId(ri));
        let mut s = String::new();
        for (u, v) in &edges {
            writeln!(s, "{u} {v}").expect("string write");
        }
        let name = format!("{ri}_{}.edges", file_stem(&decl.name));
        write(&dir.join(&name), &s)?;
        file.relations.push(RelationEntry {
            name: decl.name.clone(),
            source: schema.node_type(decl.source).symbol.clone(),
            target: schema.node_type(decl.target).symbol.clone(),
            edges: name,
            expected_edges: Some(edges.len()),
        });
    }
    let path = dir.join("schema.toml");
    let text = toml::to_string(&file).map_err(|e| Error::Format(e.to_string()))?;
    write(&path, &text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn edge_parse_errors_name_the_line() {
        let d = tmp();
        let p = d.path().join("e.txt");
        fs::write(&p, "# header\n0 1\n\na b c\n").unwrap();
        match read_edges(&p, 3, 3, false).unwrap_err() {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 4);
                assert!(msg.contains("expected 2 fields"), "{msg}");
            }
            e => panic!("unexpected {e}"),
        }
        fs::write(&p, "0 1\n1 x\n").unwrap();
        assert!(matches!(read_edges(&p, 3, 3, false), Err(Error::Parse { line: 2, .. })));
        fs::write(&p, "0 1\n0 7\n").unwrap();
        assert!(matches!(read_edges(&p, 3, 3, false), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn duplicate_edges_are_reported_with_both_lines() {
        let d = tmp();
        let p = d.path().join("e.txt");
        fs::write(&p, "0 1\n2 2\n1 0\n").unwrap();
        assert_eq!(read_edges(&p, 3, 3, false).unwrap().len(), 3);
        let err = read_edges(&p, 3, 3, true).unwrap_err();
        assert!(err.to_string().contains(":3:") && err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn features_labels_splits() {
        let d = tmp();
        let f = d.path().join("x");
        fs::write(&f, "1 2.5\n-3e-2 0\n").unwrap();
        let x = read_features(&f, 2).unwrap();
        assert_eq!(x.data(), &[1.0, 2.5, -0.03, 0.0]);
        assert!(read_features(&f, 3).is_err());
        fs::write(&f, "1 2\n3\n").unwrap();
        assert!(matches!(read_features(&f, 2), Err(Error::Parse { line: 2, .. })));
        fs::write(&f, "1 NaN\n").unwrap();
        assert!(read_features(&f, 1).is_err());

        fs::write(&f, "0 1\n2 0\n").unwrap();
        let l = read_labels(&f, 3, None).unwrap();
        assert_eq!(l.classes, vec![Some(1), None, Some(0)]);
        assert_eq!(l.num_classes, 2);
        assert!(read_labels(&f, 3, Some(1)).is_err());
        fs::write(&f, "0 1\n0 0\n").unwrap();
        assert!(matches!(read_labels(&f, 3, None), Err(Error::Parse { line: 2, .. })));

        fs::write(&f, "0 train\n1 test\n2 val\n").unwrap();
        let m = read_splits(&f, 3).unwrap();
        assert_eq!((m.train, m.val, m.test), (vec![0], vec![2], vec![1]));
        fs::write(&f, "0 dev\n").unwrap();
        assert!(read_splits(&f, 3).is_err());
    }

    #[test]
    fn schema_errors_carry_a_line() {
        let text = "[[node_types]]\nname = \"a\"\nsymbol = \"A\"\ncount = -1\n";
        match SchemaFile::parse(text, Path::new("s.toml")).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_relation_and_count_mismatch_warn() {
        let d = tmp();
        fs::write(
            d.path().join("schema.toml"),
            r#"
[[node_types]]
name = "user"
symbol = "U"
count = 2

[[node_types]]
name = "artist"
symbol = "A"
count = 1

[[relations]]
name = "U-A"
source = "U"
target = "A"
edges = "ua.txt"
expected_edges = 2

[[relations]]
name = "U-U"
source = "U"
target = "U"
edges = "uu.txt"
"#,
        )
        .unwrap();
        fs::write(d.path().join("ua.txt"), "0 0\n").unwrap();
        fs::write(d.path().join("uu.txt"), "").unwrap();
        let ds = load_dataset(&d.path().join("schema.toml"), None).unwrap();
        assert_eq!(ds.warnings.len(), 2, "{:?}", ds.warnings);
        assert_eq!(ds.edge_counts, vec![("U-A".to_string(), 1), ("U-U".to_string(), 0)]);
        // featureless users get one-hot ids
        assert_eq!(ds.graph.features(NodeTypeId(0)).to_dense(), Tensor::identity(2));
    }

    #[test]
    fn written_datasets_load_back_identically() {
        let g = crate::eval::synth_hetgraph(&crate::eval::SynthConfig {
            movies: 40,
            directors: 10,
            actors: 12,
            p_in: 0.3,
            ..Default::default()
        })
        .unwrap();
        let d = tmp();
        let path = write_dataset(&g, d.path()).unwrap();
        let back = load_dataset(&path, None).unwrap();
        assert!(back.warnings.is_empty());
        let h = back.graph;
        assert_eq!(h.schema(), g.schema());
        for t in 0..3 {
            let ty = NodeTypeId(t);
            assert_eq!(h.features(ty), g.features(ty));
            assert_eq!(h.labels(ty), g.labels(ty));
            assert_eq!(h.masks(ty), g.masks(ty));
        }
        for r in 0..2 {
            assert_eq!(h.edges(RelationId(r)), g.edges(RelationId(r)));
        }
    }
}
