//! Node and edge CSV files and JSON artefacts.
//!
//! Nodes: `id,subnet,group,x1..xK[,y]` with 1-based groups. Edges:
//! `src,dst` meaning "dst is a friend of src". Ids and subnetwork labels are
//! arbitrary strings, remapped to dense indices in order of appearance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::effects::CounterfactualPoint;
use crate::error::{Error, Result};
use crate::network::GroupedNetwork;

const NODE_SCHEMA: &str = "id,subnet,group,x1..xK[,y]";
const EDGE_SCHEMA: &str = "src,dst";

#[derive(Debug, Clone)]
pub struct NodeTable {
    /// Original ids in file order; position is the internal index.
    pub ids: Vec<String>,
    pub subnet: Vec<usize>,
    pub subnet_labels: Vec<String>,
    /// 0-based.
    pub groups: Vec<usize>,
    pub n_groups: usize,
    pub x: DMatrix<f64>,
    pub x_names: Vec<String>,
    pub y: Option<Vec<usize>>,
}

impl NodeTable {
    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Csv {
        line,
        message: e.to_string(),
    }
}

fn is_covariate(name: &str) -> bool {
    name.strip_prefix('x')
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

pub fn read_nodes<R: Read>(input: R) -> Result<NodeTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut x_cols = Vec::new();
    let mut y_col = None;
    for (c, name) in header.iter().enumerate() {
        match (c, name.as_str()) {
            (0, "id") | (1, "subnet") | (2, "group") => {}
            (c, "y") if c + 1 == header.len() && c >= 3 => y_col = Some(c),
            (c, n) if c >= 3 && is_covariate(n) => x_cols.push(c),
            (_, n) => {
                return Err(Error::Schema {
                    found: n.to_string(),
                    expected: NODE_SCHEMA.into(),
                })
            }
        }
    }
    if header.len() < 3 {
        return Err(Error::Schema {
            found: header.join(","),
            expected: NODE_SCHEMA.into(),
        });
    }
    let mut ids = Vec::new();
    let mut seen = HashMap::new();
    let mut subnet = Vec::new();
    let mut subnet_labels: Vec<String> = Vec::new();
    let mut subnet_index: HashMap<String, usize> = HashMap::new();
    let mut groups = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Csv { line, message };
        let id = rec[0].to_string();
        if seen.insert(id.clone(), ids.len()).is_some() {
            return Err(bad(format!("duplicate id {id:?}")));
        }
        ids.push(id);
        let label = rec[1].to_string();
        let next = subnet_index.len();
        let s = *subnet_index.entry(label.clone()).or_insert_with(|| {
            subnet_labels.push(label);
            next
        });
        subnet.push(s);
        let g: usize = rec[2]
            .parse()
            .map_err(|_| bad(format!("group {:?} is not a positive integer", &rec[2])))?;
        if g == 0 {
            return Err(bad("groups are numbered from 1".into()));
        }
        groups.push(g - 1);
        for &c in &x_cols {
            let v: f64 = rec[c]
                .parse()
                .map_err(|_| bad(format!("{} = {:?} is not a number", header[c], &rec[c])))?;
            if !v.is_finite() {
                return Err(bad(format!("{} is not finite", header[c])));
            }
            xs.push(v);
        }
        if let Some(c) = y_col {
            let v: usize = rec[c]
                .parse()
                .map_err(|_| bad(format!("y = {:?} is not a non-negative integer", &rec[c])))?;
            y.push(v);
        }
    }
    let n = ids.len();
    let k = x_cols.len();
    let n_groups = groups.iter().max().map_or(1, |g| g + 1);
    Ok(NodeTable {
        ids,
        subnet,
        subnet_labels,
        groups,
        n_groups,
        x: DMatrix::from_row_slice(n, k, &xs),
        x_names: x_cols.iter().map(|&c| header[c].clone()).collect(),
        y: y_col.map(|_| y),
    })
}

pub fn read_edges<R: Read>(input: R, nodes: &NodeTable) -> Result<Vec<(usize, usize)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if let Some(bad) = header.iter().zip(["src", "dst"]).find(|(h, e)| h.as_str() != *e) {
        return Err(Error::Schema {
            found: bad.0.clone(),
            expected: EDGE_SCHEMA.into(),
        });
    }
    if header.len() != 2 {
        return Err(Error::Schema {
            found: header.get(2).cloned().unwrap_or_else(|| header.join(",")),
            expected: EDGE_SCHEMA.into(),
        });
    }
    let index = nodes.index_of();
    let mut edges = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| Error::Csv {
                line,
                message: format!("unknown node id {id:?}"),
            })
        };
        edges.push((lookup(&rec[0])?, lookup(&rec[1])?));
    }
    Ok(edges)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Network and covariates from the two CSV files.
pub fn load_network(nodes: &Path, edges: &Path) -> Result<(NodeTable, GroupedNetwork)> {
    let table = read_nodes(open(nodes)?)?;
    let e = read_edges(open(edges)?, &table)?;
    let net = GroupedNetwork::new(&e, table.groups.clone(), table.subnet.clone(), table.n_groups)?;
    Ok((table, net))
}

/// Dataset for estimation; `r` defaults to the largest observed outcome.
pub fn load_dataset(nodes: &Path, edges: &Path, r: Option<usize>, fixed_effects: bool) -> Result<(NodeTable, Dataset)> {
    let (table, net) = load_network(nodes, edges)?;
    let y = table.y.clone().ok_or_else(|| Error::Schema {
        found: "no y column".into(),
        expected: NODE_SCHEMA.into(),
    })?;
    let r = r.unwrap_or_else(|| y.iter().copied().max().unwrap_or(1).max(1));
    let data = Dataset::from_covariates(net, &table.x, y, r, fixed_effects, Some(&table.x_names))?;
    Ok((table, data))
}

/// Writes nodes with dense ids (or `ids` when given).
pub fn write_nodes<W: Write>(out: W, data: &Dataset, ids: Option<&[String]>, with_y: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let k = data.design.n_covariates();
    let mut header = vec!["id".to_string(), "subnet".into(), "group".into()];
    header.extend((1..=k).map(|j| format!("x{j}")));
    if with_y {
        header.push("y".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n() {
        let mut row = vec![
            ids.map_or_else(|| i.to_string(), |v| v[i].clone()),
            data.net.subnet(i).to_string(),
            (data.net.group(i) + 1).to_string(),
        ];
        row.extend((0..k).map(|c| data.design.x()[(i, c)].to_string()));
        if with_y {
            row.push(data.y[i].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_edges<W: Write>(out: W, net: &GroupedNetwork, ids: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["src", "dst"]).map_err(csv_err)?;
    let name = |i: usize| ids.map_or_else(|| i.to_string(), |v| v[i].clone());
    for (i, j) in net.edges() {
        w.write_record([name(i), name(j)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `counterfactual.csv`; failed points have empty `mean` and `se`.
pub fn write_counterfactual<W: Write>(out: W, points: &[CounterfactualPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["share", "mean", "se", "converged"]).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.10}"));
    for p in points {
        w.write_record([p.share.to_string(), opt(p.mean), opt(p.se), p.converged.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{builtin_dgp, simulate_dataset};

    #[test]
    fn reads_nodes_and_edges_with_remapping() {
        let nodes = "id,subnet,group,x1,x2,y\na,s1,1,0.5,2,1\nb,s1,2,1.5,0,0\nc,s2,1,2,1,3\n";
        let t = read_nodes(nodes.as_bytes()).unwrap();
        assert_eq!(t.ids, ["a", "b", "c"]);
        assert_eq!(t.subnet, [0, 0, 1]);
        assert_eq!(t.groups, [0, 1, 0]);
        assert_eq!(t.n_groups, 2);
        assert_eq!(t.x[(1, 0)], 1.5);
        assert_eq!(t.y.as_deref(), Some(&[1, 0, 3][..]));
        let e = read_edges("src,dst\na,b\nb,a\n".as_bytes(), &t).unwrap();
        assert_eq!(e, [(0, 1), (1, 0)]);
    }

    #[test]
    fn y_is_optional() {
        let t = read_nodes("id,subnet,group,x1\n1,0,1,3\n".as_bytes()).unwrap();
        assert!(t.y.is_none());
    }

    #[test]
    fn unknown_column_lists_schema() {
        let err = read_nodes("id,subnet,group,age\n1,0,1,3\n".as_bytes()).unwrap_err();
        match err {
            Error::Schema { found, expected } => {
                assert_eq!(found, "age");
                assert!(expected.contains("x1..xK"));
            }
            e => panic!("{e}"),
        }
        assert!(matches!(
            read_edges("from,to\n".as_bytes(), &read_nodes("id,subnet,group\n1,0,1\n".as_bytes()).unwrap()),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn malformed_rows_report_line() {
        let err = read_nodes("id,subnet,group,x1\n1,0,1,3\n2,0,1,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Csv { line: 3, .. }), "{err}");
        let err = read_nodes("id,subnet,group,x1\n1,0,1,3\n2,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Csv { line: 3, .. }), "{err}");
        let t = read_nodes("id,subnet,group\n1,0,1\n2,0,1\n".as_bytes()).unwrap();
        let err = read_edges("src,dst\n1,2\n1,9\n".as_bytes(), &t).unwrap_err();
        assert!(matches!(err, Error::Csv { line: 3, .. }), "{err}");
    }

    #[test]
    fn round_trip_simulated_data() {
        let sim = simulate_dataset(&builtin_dgp("C", 2, 30, 4).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (np, ep) = (dir.path().join("nodes.csv"), dir.path().join("edges.csv"));
        write_nodes(create_file(&np).unwrap(), &sim.data, None, true).unwrap();
        write_edges(create_file(&ep).unwrap(), &sim.data.net, None).unwrap();
        let (_, back) = load_dataset(&np, &ep, Some(sim.data.r), false).unwrap();
        assert_eq!(back.y, sim.data.y);
        assert_eq!(back.net.edges().collect::<Vec<_>>(), sim.data.net.edges().collect::<Vec<_>>());
        assert_eq!(back.net.groups(), sim.data.net.groups());
        assert!((back.design.z() - sim.data.design.z()).amax() < 1e-12);
    }
}
