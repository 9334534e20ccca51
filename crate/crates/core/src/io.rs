//! File formats: binary `.grid` slices, `.tmap` chains and headed CSV.
//!
//! Every file starts with a `key=value` header line carrying the model
//! parameters. CSV files put it on a leading `#` comment line, followed by
//! a single column-header row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::chaos::{DiscreteMeasure, MeasureMeta};
use crate::error::{Error, Result};
use crate::field::{cell_center, FieldSlice};
use crate::header::Header;
use crate::model::ModelParams;
use crate::transport::{
    ChainedMap, GridBinning, MapKind, MultiStepOptions, SinkhornOptions, Solver, SolverInfo, TransportMap,
    TransportStep,
};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Field,
    Measure,
}

impl GridKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GridKind::Field => "field",
            GridKind::Measure => "measure",
        }
    }
}

impl std::str::FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "field" => Ok(GridKind::Field),
            "measure" => Ok(GridKind::Measure),
            _ => Err(Error::Parse(format!("unknown grid kind `{s}`"))),
        }
    }
}

/// A full-grid slice with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub header: Header,
    pub params: ModelParams,
    pub grid_n: usize,
    pub cutoff_l: f64,
    pub replica: u64,
    pub kind: GridKind,
    /// Row-major, `grid_n^m` entries.
    pub values: Vec<f64>,
}

impl GridFile {
    pub fn new(
        params: &ModelParams,
        grid_n: usize,
        cutoff_l: f64,
        replica: u64,
        kind: GridKind,
        values: Vec<f64>,
        extra: &Header,
    ) -> Result<Self> {
        let expected = grid_n.pow(params.m as u32);
        if values.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {grid_n}^{} grid",
                values.len(),
                params.m
            )));
        }
        let mut header = extra.clone();
        header.merge(&params.to_header());
        header
            .set("grid_n", grid_n)
            .set("cutoff_l", cutoff_l)
            .set("replica", replica)
            .set("kind", kind.as_str());
        Ok(Self {
            header,
            params: *params,
            grid_n,
            cutoff_l,
            replica,
            kind,
            values,
        })
    }

    /// Field values; the header keeps the slice's own intermittency.
    pub fn from_field(field: &FieldSlice, extra: &Header) -> Result<Self> {
        Self::new(
            &field.params,
            field.grid_n,
            field.cutoff_l,
            field.replica,
            GridKind::Field,
            field.values.clone(),
            extra,
        )
    }

    pub fn from_measure(measure: &DiscreteMeasure, extra: &Header) -> Result<Self> {
        let grid_n = measure
            .meta
            .grid_n
            .ok_or_else(|| Error::InvalidArgument("measure atoms do not form a full grid".into()))?;
        Self::new(
            &measure.meta.params,
            grid_n,
            measure.meta.cutoff_l,
            measure.meta.replica,
            GridKind::Measure,
            measure.weights.clone(),
            extra,
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header.emit())?;
        let mut bytes = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if !line.ends_with('\n') {
            return Err(Error::Parse("grid header is not newline-terminated".into()));
        }
        let header = Header::parse(line.trim_end())?;
        let params = ModelParams::from_header(&header)?;
        let grid_n: usize = header.parse_value("grid_n")?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let expected = grid_n.pow(params.m as u32);
        if bytes.len() != 8 * expected {
            return Err(Error::Parse(format!(
                "expected {} payload bytes, found {}",
                8 * expected,
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            params,
            grid_n,
            cutoff_l: header.parse_value("cutoff_l")?,
            replica: header.parse_value("replica")?,
            kind: header.parse_value("kind")?,
            header,
            values,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }

    pub fn point(&self, index: usize) -> Point {
        cell_center(self.params.m, self.grid_n, self.params.r, index)
    }

    /// The measure stored in a `kind=measure` file.
    pub fn to_measure(&self) -> Result<DiscreteMeasure> {
        if self.kind != GridKind::Measure {
            return Err(Error::InvalidArgument("grid file holds a field, not a measure".into()));
        }
        DiscreteMeasure::new(
            self.params.m,
            (0..self.values.len()).map(|i| self.point(i)).collect(),
            self.values.clone(),
            MeasureMeta {
                params: self.params,
                layers: 1,
                cutoff_l: self.cutoff_l,
                grid_n: Some(self.grid_n),
                replica: self.replica,
            },
        )
    }

    /// `x,y,value` rows (`x,value` in dimension one).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let m = self.params.m;
        let mut cols = coord_columns(m, "");
        cols.push("value".into());
        let rows = self.values.iter().enumerate().map(|(i, v)| {
            let mut row = coords(m, &self.point(i));
            row.push(*v);
            row
        });
        write_csv(w, &self.header, &cols, rows)
    }
}

fn coord_columns(m: usize, prefix: &str) -> Vec<String> {
    ["x", "y"][..m].iter().map(|c| format!("{prefix}{c}")).collect()
}

fn coords(m: usize, p: &Point) -> Vec<f64> {
    p[..m].to_vec()
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("csv: {other:?}")),
    }
}

/// Header comment line, column row, then numeric rows.
pub fn write_csv<W, I, S>(mut w: W, header: &Header, columns: &[S], rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = Vec<f64>>,
    S: AsRef<str>,
{
    writeln!(w, "# {}", header.emit())?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(columns.iter().map(|c| c.as_ref())).map_err(csv_error)?;
    for row in rows {
        out.write_record(row.iter().map(|v| v.to_string())).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Parsed headed CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Header,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn read_csv<R: Read>(r: R) -> Result<CsvTable> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header = Header::parse(
        line.trim_end()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("missing `#` header line".into()))?,
    )?;
    let mut reader = csv::Reader::from_reader(r);
    let columns = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .records()
        .map(|rec| {
            rec.map_err(csv_error)?
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("non-numeric field `{f}`")))
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(CsvTable { header, columns, rows })
}

/// Atoms and weights as `x[,y],weight`.
pub fn write_measure_csv<W: Write>(w: W, measure: &DiscreteMeasure, header: &Header) -> Result<()> {
    let m = measure.m;
    let mut cols = coord_columns(m, "");
    cols.push("weight".into());
    let rows = measure.atoms.iter().zip(&measure.weights).map(|(a, wt)| {
        let mut row = coords(m, a);
        row.push(*wt);
        row
    });
    write_csv(w, header, &cols, rows)
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn split<T: std::str::FromStr>(h: &Header, key: &str) -> Result<Vec<T>> {
    let raw = h.require(key)?;
    raw.split(',')
        .map(|x| {
            x.parse()
                .map_err(|_| Error::Parse(format!("bad list entry `{x}` for key `{key}`")))
        })
        .collect()
}

/// Header line of a chain: solver settings, per-step diagnostics and the
/// quantities needed to rebuild the chart.
pub fn tmap_header(chain: &ChainedMap, extra: &Header) -> Header {
    let mut h = extra.clone();
    h.merge(&chain.params.to_header());
    let o = &chain.options;
    h.set("steps", chain.steps.len())
        .set("atom_count", chain.len())
        .set("solver", chain.kind.as_str())
        .set("epsilon", o.sinkhorn.epsilon)
        .set("tol", o.sinkhorn.tol)
        .set("max_iter", o.sinkhorn.max_iter)
        .set("halvings", o.sinkhorn.halvings)
        .set("exact_threshold", o.exact_threshold)
        .set("grid_n", chain.grid_n)
        .set("mass_b_r", chain.mass_b_r)
        .set("c_r", chain.c_r)
        .set("quantization_tv", chain.quantization_tv)
        .set("costs", join(chain.steps.iter().map(|s| s.map.cost)))
        .set("iterations", join(chain.steps.iter().map(|s| s.info.iterations)))
        .set("row_errors", join(chain.steps.iter().map(|s| s.info.row_error)))
        .set("col_errors", join(chain.steps.iter().map(|s| s.info.col_error)));
    h
}

/// `.tmap`: header line, then `step,atom,weight,x[,y],image_x[,image_y]`
/// rows. Block `0` holds the chain atoms and their composed images
/// `phi^(n)`; block `k` holds the input and output points of `S^(k)`.
pub fn write_tmap<W: Write>(w: W, chain: &ChainedMap, extra: &Header) -> Result<()> {
    let m = chain.m;
    let mut cols: Vec<String> = vec!["step".into(), "atom".into(), "weight".into()];
    cols.extend(coord_columns(m, ""));
    cols.extend(coord_columns(m, "image_"));
    let composed = (0..chain.len()).map(|i| (0, i, chain.weights[i], chain.atoms[i], chain.images[i]));
    let steps = chain.steps.iter().flat_map(|s| {
        (0..s.map.len()).map(move |i| (s.step, i, s.weights[i], s.map.sources[i], s.map.images[i]))
    });
    let rows = composed.chain(steps).map(|(k, i, w, x, y)| {
        let mut row = vec![k as f64, i as f64, w];
        row.extend(coords(m, &x));
        row.extend(coords(m, &y));
        row
    });
    // the header goes on the first line verbatim, not as a comment
    let mut buf = Vec::new();
    write_csv(&mut buf, &tmap_header(chain, extra), &cols, rows)?;
    let mut w = w;
    w.write_all(&buf[2..])?;
    w.flush()?;
    Ok(())
}

pub fn read_tmap<R: Read>(r: R) -> Result<ChainedMap> {
    let mut r = BufReader::new(r);
    let mut first = String::new();
    r.read_line(&mut first)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    let mut framed = format!("# {first}").into_bytes();
    framed.extend(rest);
    let table = read_csv(framed.as_slice())?;
    let h = &table.header;
    let params = ModelParams::from_header(h)?;
    let m = params.m;
    let steps: usize = h.parse_value("steps")?;
    let count: usize = h.parse_value("atom_count")?;
    let grid_n: usize = h.parse_value("grid_n")?;
    let kind = match h.require("solver")? {
        "exact" => MapKind::ExactAssignment,
        "sinkhorn" => MapKind::Barycentric,
        other => return Err(Error::Parse(format!("unknown solver `{other}`"))),
    };
    let options = MultiStepOptions {
        solver: match kind {
            MapKind::ExactAssignment => Solver::Exact,
            MapKind::Barycentric => Solver::Sinkhorn,
        },
        exact_threshold: h.parse_value("exact_threshold")?,
        sinkhorn: SinkhornOptions {
            epsilon: h.parse_value("epsilon")?,
            tol: h.parse_value("tol")?,
            max_iter: h.parse_value("max_iter")?,
            halvings: h.parse_value("halvings")?,
        },
    };
    let costs: Vec<f64> = split(h, "costs")?;
    let iterations: Vec<usize> = split(h, "iterations")?;
    let row_errors: Vec<f64> = split(h, "row_errors")?;
    let col_errors: Vec<f64> = split(h, "col_errors")?;
    if [costs.len(), iterations.len(), row_errors.len(), col_errors.len()]
        .iter()
        .any(|&n| n != steps)
    {
        return Err(Error::Parse("per-step lists do not match the step count".into()));
    }
    if table.rows.len() != (steps + 1) * count {
        return Err(Error::Parse(format!(
            "expected {} rows, found {}",
            (steps + 1) * count,
            table.rows.len()
        )));
    }
    let width = 3 + 2 * m;
    let point = |row: &[f64], at: usize| match m {
        1 => [row[at], 0.0],
        _ => [row[at], row[at + 1]],
    };
    let blocks: Vec<&[Vec<f64>]> = table.rows.chunks(count.max(1)).collect();
    for (k, block) in blocks.iter().enumerate() {
        for (i, row) in block.iter().enumerate() {
            if row.len() != width || row[0] as usize != k || row[1] as usize != i {
                return Err(Error::Parse(format!("row {i} of block {k} is out of order")));
            }
        }
    }
    let mut out_steps = Vec::with_capacity(steps);
    for k in 0..steps {
        let block = blocks[k + 1];
        out_steps.push(TransportStep {
            step: k + 1,
            map: TransportMap {
                sources: block.iter().map(|r| point(r, 3)).collect(),
                images: block.iter().map(|r| point(r, 3 + m)).collect(),
                kind,
                target_index: None,
                cost: costs[k],
            },
            weights: block.iter().map(|r| r[2]).collect(),
            info: SolverInfo {
                epsilon: if kind == MapKind::Barycentric { options.sinkhorn.epsilon } else { 0.0 },
                iterations: iterations[k],
                row_error: row_errors[k],
                col_error: col_errors[k],
                converged: true,
            },
        });
    }
    let base = DiscreteMeasure::lebesgue_grid(&params, grid_n);
    let cells: Vec<Point> = base
        .atoms
        .into_iter()
        .filter(|a| crate::chaos::norm(a) < params.r)
        .collect();
    let bin = GridBinning {
        m,
        grid_n,
        radius: params.r,
    };
    let mut cell_slot = std::collections::HashMap::new();
    for (k, c) in cells.iter().enumerate() {
        cell_slot.insert(bin.cell_of(c), k);
    }
    let composed: &[Vec<f64>] = if count == 0 { &[] } else { blocks[0] };
    let atoms: Vec<Point> = composed.iter().map(|r| point(r, 3)).collect();
    let images: Vec<Point> = composed.iter().map(|r| point(r, 3 + m)).collect();
    let weights: Vec<f64> = composed.iter().map(|r| r[2]).collect();
    let owner = atoms
        .iter()
        .map(|a| {
            cell_slot
                .get(&bin.cell_of(a))
                .copied()
                .ok_or_else(|| Error::Parse("chain atom outside the ball cells".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cell_weights = vec![0.0; cells.len()];
    for (&o, w) in owner.iter().zip(&weights) {
        cell_weights[o] += w;
    }
    Ok(ChainedMap {
        m,
        params,
        grid_n,
        spacing: 2.0 * params.r / grid_n as f64,
        kind,
        options,
        steps: out_steps,
        atoms,
        images,
        weights,
        owner,
        cells,
        cell_weights,
        mass_b_r: h.parse_value("mass_b_r")?,
        c_r: h.parse_value("c_r")?,
        quantization_tv: h.parse_value("quantization_tv")?,
    })
}

pub fn write_tmap_file(path: impl AsRef<Path>, chain: &ChainedMap, extra: &Header) -> Result<()> {
    write_tmap(BufWriter::new(File::create(path)?), chain, extra)
}

pub fn read_tmap_file(path: impl AsRef<Path>) -> Result<ChainedMap> {
    read_tmap(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::{compose_chaos, ChaosSimulator};
    use crate::transport::{multi_step, total_variation};

    #[test]
    fn grid_round_trip_is_bitwise() {
        let p = ModelParams::new(2, 1.5, 1.0, 1.0, 42).unwrap();
        let sim = ChaosSimulator::new(&p, 16).unwrap();
        let mut extra = Header::new();
        extra.set("cmd", "simulate");
        let file = GridFile::from_measure(&sim.measure(3), &extra).unwrap();
        let mut buf = Vec::new();
        file.write_to(&mut buf).unwrap();
        let back = GridFile::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.header.get("cmd"), Some("simulate"));
        assert_eq!(back.to_measure().unwrap(), sim.measure(3));
        let first_line = std::str::from_utf8(&buf[..buf.iter().position(|&b| b == b'\n').unwrap()]).unwrap();
        for key in ["m=2", "grid_n=16", "R=1", "T=1", "gamma2=1.5", "seed=42", "replica=3", "kind=measure"] {
            assert!(first_line.split(' ').any(|t| t == key), "{key} missing in {first_line}");
        }
        assert_eq!(buf.len(), first_line.len() + 1 + 8 * 256);
    }

    #[test]
    fn grid_rejects_truncated_payload() {
        let p = ModelParams::new(1, 0.0, 1.0, 1.0, 0).unwrap();
        let file = GridFile::from_measure(&DiscreteMeasure::lebesgue_grid(&p, 8), &Header::new()).unwrap();
        let mut buf = Vec::new();
        file.write_to(&mut buf).unwrap();
        buf.pop();
        assert!(GridFile::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut h = Header::new();
        h.set("m", 2).set("gamma2", 0.25);
        let rows = vec![vec![0.5, -1.0, 3.25], vec![1e-300, 2.0, f64::MAX]];
        let mut buf = Vec::new();
        write_csv(&mut buf, &h, &["x", "y", "value"], rows.clone()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# m=2 gamma2=0.25\nx,y,value\n"));
        let t = read_csv(buf.as_slice()).unwrap();
        assert_eq!(t.header, h);
        assert_eq!(t.rows, rows);
        assert_eq!(t.column("y"), Some(vec![-1.0, 2.0]));
    }

    #[test]
    fn tmap_round_trip() {
        for (m, grid, solver) in [(2, 16, Solver::Exact), (2, 8, Solver::Sinkhorn), (1, 32, Solver::Exact)] {
            let p = ModelParams::new(m, 1.0, 1.0, 1.0, 5).unwrap();
            let layers = compose_chaos(&p, 2, grid, 0).unwrap();
            let chain = multi_step(
                &layers,
                &MultiStepOptions {
                    solver,
                    ..Default::default()
                },
            )
            .unwrap();
            let mut buf = Vec::new();
            write_tmap(&mut buf, &chain, &Header::new()).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            let first = text.lines().next().unwrap();
            for key in ["steps=", "solver=", "epsilon=", "tol=", "atom_count="] {
                assert!(first.split(' ').any(|t| t.starts_with(key)));
            }
            let back = read_tmap(buf.as_slice()).unwrap();
            assert_eq!(back.atoms, chain.atoms);
            assert_eq!(back.images, chain.images);
            assert_eq!(back.weights, chain.weights);
            assert_eq!(back.owner, chain.owner);
            assert_eq!(back.cells, chain.cells);
            assert_eq!(back.mass_b_r, chain.mass_b_r);
            assert_eq!(back.options, chain.options);
            for (a, b) in back.steps.iter().zip(&chain.steps) {
                assert_eq!(a.map.sources, b.map.sources);
                assert_eq!(a.map.images, b.map.images);
                assert_eq!(a.map.cost, b.map.cost);
            }
            let tv = total_variation(&back.pushforward(true), &chain.pushforward(true));
            assert_eq!(tv, 0.0);
        }
    }
}
