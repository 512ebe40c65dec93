//! Model configuration files and CSV readers/writers for every artifact the
//! command-line tool produces.
//!
//! Observations and states are written with the shortest representation
//! that parses back to the same `f64`; probabilities and derived metrics use
//! 17 significant digits.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distributions::{DenseTable, FactorizedDistribution};
use crate::em::{EmParameters, TraceRow};
use crate::error::{Error, Result};
use crate::factor_graph::{format_graph, parse_graph, FactorGraph, Partition};
use crate::forecast::{MeanKind, MeanSeries};
use crate::model::{FhmmModel, GaussianEmission, ObservationSequence, Validate};

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(File::create(path)?))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(File::open(path)?))
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line() as usize);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::parse(line, format!("{other:?}")),
    }
}

fn flush(mut w: csv::Writer<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// Reads all records, checking each has `width` cells.
fn records(path: &Path, width: Option<usize>) -> Result<(csv::StringRecord, Vec<(usize, csv::StringRecord)>)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(Error::parse(1, "missing header row"));
    }
    let width = width.unwrap_or(header.len());
    if header.len() != width {
        return Err(Error::parse(1, format!("expected {width} columns, found {}", header.len())));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::parse(line, format!("expected {width} cells, found {}", rec.len())));
        }
        out.push((line, rec));
    }
    Ok((header, out))
}

fn cell<T: std::str::FromStr>(line: usize, rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    rec[i]
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("cannot parse {what} from {:?}", &rec[i])))
}

fn finite(line: usize, rec: &csv::StringRecord, i: usize, what: &str) -> Result<f64> {
    let x: f64 = cell(line, rec, i, what)?;
    if !x.is_finite() {
        return Err(Error::parse(line, format!("{what} is not finite")));
    }
    Ok(x)
}

/// Reads observations: a header of factor names, then one row per step.
pub fn load_observations_csv(path: &Path) -> Result<ObservationSequence> {
    let (header, rows) = records(path, None)?;
    let steps = rows
        .iter()
        .map(|(line, rec)| (0..header.len()).map(|i| finite(*line, rec, i, "observation")).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    ObservationSequence::new(header.len(), steps)
}

pub fn write_observations_csv(path: &Path, obs: &ObservationSequence) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record((0..obs.num_factors()).map(|f| format!("f{f}"))).map_err(csv_error)?;
    for row in obs.steps() {
        w.write_record(row.iter().map(|x| x.to_string())).map_err(csv_error)?;
    }
    flush(w)
}

/// Hidden states: columns `t, x0, ..., x{M-1}` for `t = 0..=T`.
pub fn write_states_csv(path: &Path, states: &[Vec<usize>]) -> Result<()> {
    let mut w = writer(path)?;
    let m = states.first().map_or(0, Vec::len);
    w.write_record(std::iter::once("t".to_string()).chain((0..m).map(|v| format!("x{v}"))))
        .map_err(csv_error)?;
    for (t, s) in states.iter().enumerate() {
        w.write_record(std::iter::once(t.to_string()).chain(s.iter().map(|x| x.to_string())))
            .map_err(csv_error)?;
    }
    flush(w)
}

pub fn load_states_csv(path: &Path) -> Result<Vec<Vec<usize>>> {
    let (header, rows) = records(path, None)?;
    rows.iter()
        .enumerate()
        .map(|(t, (line, rec))| {
            let at: usize = cell(*line, rec, 0, "time")?;
            if at != t {
                return Err(Error::parse(*line, format!("expected time {t}, found {at}")));
            }
            (1..header.len()).map(|i| cell(*line, rec, i, "state")).collect()
        })
        .collect()
}

/// Block tables: columns `t, block_id, configuration_index, probability`,
/// rows ordered by `(t, block, configuration)`.
pub fn write_marginals_csv(path: &Path, dists: &[FactorizedDistribution]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "block_id", "configuration_index", "probability"]).map_err(csv_error)?;
    for (t, d) in dists.iter().enumerate() {
        for (b, table) in d.blocks().iter().enumerate() {
            for (i, p) in table.values().iter().enumerate() {
                w.write_record([t.to_string(), b.to_string(), i.to_string(), sci(*p)]).map_err(csv_error)?;
            }
        }
    }
    flush(w)
}

/// Reads block tables as `tables[t][block][configuration]`.
pub fn load_marginals_csv(path: &Path) -> Result<Vec<Vec<Vec<f64>>>> {
    let (_, rows) = records(path, Some(4))?;
    let mut out: Vec<Vec<Vec<f64>>> = Vec::new();
    for (line, rec) in &rows {
        let (t, b, i): (usize, usize, usize) = (
            cell(*line, rec, 0, "t")?,
            cell(*line, rec, 1, "block_id")?,
            cell(*line, rec, 2, "configuration_index")?,
        );
        let p = finite(*line, rec, 3, "probability")?;
        if t == out.len() {
            out.push(Vec::new());
        }
        if t + 1 != out.len() {
            return Err(Error::parse(*line, "rows are not ordered by time"));
        }
        let step = out.last_mut().expect("non-empty");
        if b == step.len() {
            step.push(Vec::new());
        }
        if b + 1 != step.len() {
            return Err(Error::parse(*line, "rows are not ordered by block"));
        }
        let block = step.last_mut().expect("non-empty");
        if i != block.len() {
            return Err(Error::parse(*line, "rows are not ordered by configuration"));
        }
        block.push(p);
    }
    Ok(out)
}

/// Rebuilds factorized distributions from [`load_marginals_csv`] output.
pub fn marginals_to_distributions(
    tables: Vec<Vec<Vec<f64>>>,
    partition: Arc<Partition>,
    cardinality: usize,
) -> Result<Vec<FactorizedDistribution>> {
    tables
        .into_iter()
        .map(|step| {
            let blocks = step
                .into_iter()
                .enumerate()
                .map(|(b, values)| {
                    let vars = partition
                        .blocks()
                        .get(b)
                        .ok_or_else(|| Error::invalid(format!("block {b} is not in the partition")))?;
                    DenseTable::new(vars.clone(), cardinality, values)
                })
                .collect::<Result<Vec<_>>>()?;
            FactorizedDistribution::new(partition.clone(), blocks)
        })
        .collect()
}

/// EM trace: `iteration, mu0_hat_*, p_hat_*_* (row-major), c_hat, sigma2_hat, surrogate_loglik`.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = writer(path)?;
    let l = trace.first().map_or(0, |r| r.parameters.mu0.len());
    let mut header = vec!["iteration".to_string()];
    header.extend((0..l).map(|x| format!("mu0_hat_{x}")));
    header.extend((0..l * l).map(|i| format!("p_hat_{}_{}", i / l, i % l)));
    header.extend(["c_hat", "sigma2_hat", "surrogate_loglik"].map(String::from));
    w.write_record(&header).map_err(csv_error)?;
    for row in trace {
        let p = &row.parameters;
        let mut rec = vec![row.iteration.to_string()];
        rec.extend(p.mu0.iter().chain(&p.transition).map(|x| sci(*x)));
        rec.extend([p.c, p.sigma2, row.surrogate_log_likelihood].map(sci));
        w.write_record(&rec).map_err(csv_error)?;
    }
    flush(w)
}

pub fn load_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let (header, rows) = records(path, None)?;
    // 1 + L + L^2 + 3 columns
    let l = (1..=64)
        .find(|l| 4 + l + l * l == header.len())
        .ok_or_else(|| Error::parse(1, format!("{} columns do not fit an EM trace", header.len())))?;
    rows.iter()
        .map(|(line, rec)| {
            let vals = (1..header.len())
                .map(|i| finite(*line, rec, i, &header[i]))
                .collect::<Result<Vec<f64>>>()?;
            Ok(TraceRow {
                iteration: cell(*line, rec, 0, "iteration")?,
                parameters: EmParameters {
                    mu0: vals[..l].to_vec(),
                    transition: vals[l..l + l * l].to_vec(),
                    c: vals[l + l * l],
                    sigma2: vals[l + l * l + 1],
                },
                surrogate_log_likelihood: vals[l + l * l + 2],
            })
        })
        .collect()
}

/// One row of a means file.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRecord {
    pub t: usize,
    pub factor: usize,
    pub observed: Option<f64>,
    pub value: f64,
    pub kind: MeanKind,
}

/// Means file: `t, f, observed, value, tag`; `observed` is empty when the
/// observation for time `t` is not in `obs`.
pub fn write_means_csv(path: &Path, series: &[&MeanSeries], obs: Option<&ObservationSequence>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "f", "observed", "value", "tag"]).map_err(csv_error)?;
    for s in series {
        for (&t, row) in s.times.iter().zip(&s.values) {
            for (f, v) in row.iter().enumerate() {
                let observed = obs
                    .filter(|o| t >= 1 && t <= o.len())
                    .map_or(String::new(), |o| sci(o.at(t)[f]));
                w.write_record([t.to_string(), f.to_string(), observed, sci(*v), s.kind.as_str().to_string()])
                    .map_err(csv_error)?;
            }
        }
    }
    flush(w)
}

pub fn load_means_csv(path: &Path) -> Result<Vec<MeanRecord>> {
    let (_, rows) = records(path, Some(5))?;
    rows.iter()
        .map(|(line, rec)| {
            let kind = match rec[4].trim() {
                "smoothed" => MeanKind::Smoothed,
                "forecast" => MeanKind::Forecast,
                other => return Err(Error::parse(*line, format!("unknown tag {other:?}"))),
            };
            Ok(MeanRecord {
                t: cell(*line, rec, 0, "t")?,
                factor: cell(*line, rec, 1, "f")?,
                observed: if rec[2].trim().is_empty() {
                    None
                } else {
                    Some(finite(*line, rec, 2, "observed")?)
                },
                value: finite(*line, rec, 3, "value")?,
                kind,
            })
        })
        .collect()
}

/// Per-time, per-variable LTV between approximate and exact marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvRecord {
    pub t: usize,
    pub variable: usize,
    pub filter_ltv: f64,
    pub smoother_ltv: f64,
}

pub fn write_compare_csv(path: &Path, rows: &[LtvRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "variable", "filter_ltv", "smoother_ltv"]).map_err(csv_error)?;
    for r in rows {
        w.write_record([r.t.to_string(), r.variable.to_string(), sci(r.filter_ltv), sci(r.smoother_ltv)])
            .map_err(csv_error)?;
    }
    flush(w)
}

pub fn load_compare_csv(path: &Path) -> Result<Vec<LtvRecord>> {
    let (_, rows) = records(path, Some(4))?;
    rows.iter()
        .map(|(line, rec)| {
            Ok(LtvRecord {
                t: cell(*line, rec, 0, "t")?,
                variable: cell(*line, rec, 1, "variable")?,
                filter_ltv: finite(*line, rec, 2, "filter_ltv")?,
                smoother_ltv: finite(*line, rec, 3, "smoother_ltv")?,
            })
        })
        .collect()
}

/// One timing of filter plus smoother.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub method: String,
    pub num_variables: usize,
    pub radius: Option<usize>,
    pub seconds: f64,
    pub factor_evaluations: u64,
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method", "num_variables", "m", "seconds", "factor_evaluations"])
        .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.num_variables.to_string(),
            r.radius.map_or(String::new(), |m| m.to_string()),
            sci(r.seconds),
            r.factor_evaluations.to_string(),
        ])
        .map_err(csv_error)?;
    }
    flush(w)
}

pub fn load_bench_csv(path: &Path) -> Result<Vec<BenchRecord>> {
    let (_, rows) = records(path, Some(5))?;
    rows.iter()
        .map(|(line, rec)| {
            Ok(BenchRecord {
                method: rec[0].to_string(),
                num_variables: cell(*line, rec, 1, "num_variables")?,
                radius: if rec[2].trim().is_empty() {
                    None
                } else {
                    Some(cell(*line, rec, 2, "m")?)
                },
                seconds: finite(*line, rec, 3, "seconds")?,
                factor_evaluations: cell(*line, rec, 4, "factor_evaluations")?,
            })
        })
        .collect()
}

/// On-disk model description for a homogeneous Gaussian FHMM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_variables: usize,
    pub cardinality: usize,
    pub state_values: Vec<f64>,
    /// `L` rows of `L` entries.
    pub transition: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub c: f64,
    pub sigma2: f64,
    /// `"chain"` or a path to a factor-graph file, relative to the config.
    #[serde(default = "chain_name")]
    pub graph: String,
}

fn chain_name() -> String {
    "chain".into()
}

impl ModelConfig {
    pub fn from_model(model: &FhmmModel, graph: String) -> Result<Self> {
        let p = EmParameters::from_model(model)?;
        let l = model.cardinality();
        Ok(Self {
            num_variables: model.num_variables(),
            cardinality: l,
            state_values: model.emission().state_values().to_vec(),
            transition: p.transition.chunks(l).map(<[f64]>::to_vec).collect(),
            initial: p.mu0,
            c: p.c,
            sigma2: p.sigma2,
            graph,
        })
    }

    /// Builds and validates the model; `base` resolves a relative graph path.
    pub fn build(&self, base: &Path) -> Result<FhmmModel> {
        let graph = if self.graph == "chain" {
            FactorGraph::chain(self.num_variables)?
        } else {
            let path = base.join(&self.graph);
            let g = parse_graph(&std::fs::read_to_string(&path)?)?;
            if g.num_variables() != self.num_variables {
                return Err(Error::invalid(format!(
                    "graph file {} has {} variables, config says {}",
                    path.display(),
                    g.num_variables(),
                    self.num_variables
                )));
            }
            g
        };
        let l = self.cardinality;
        if self.transition.len() != l || self.transition.iter().any(|r| r.len() != l) {
            return Err(Error::invalid(format!("transition must have {l} rows of {l} entries")));
        }
        let model = FhmmModel::from_parts(
            graph,
            l,
            vec![self.transition.concat(); self.num_variables],
            vec![self.initial.clone(); self.num_variables],
            GaussianEmission::new(self.state_values.clone(), self.c, self.sigma2)?,
        )?;
        model.validate().map_err(|v| Error::invalid(v.0))?;
        Ok(model)
    }
}

fn toml_error(text: &str, err: toml::de::Error) -> Error {
    let line = err
        .span()
        .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    Error::parse(line, err.message().to_string())
}

pub fn parse_model_config(text: &str) -> Result<ModelConfig> {
    toml::from_str(text).map_err(|e| toml_error(text, e))
}

/// Loads and validates a model configuration file.
pub fn load_model(path: &Path) -> Result<FhmmModel> {
    let text = std::fs::read_to_string(path)?;
    let base: PathBuf = path.parent().map_or_else(PathBuf::new, Path::to_path_buf);
    parse_model_config(&text)?.build(&base)
}

/// Writes a homogeneous model. Non-chain graphs are written next to the
/// config as `<stem>.graph` and referenced by file name.
pub fn save_model(path: &Path, model: &FhmmModel) -> Result<()> {
    let graph = if model.graph().is_chain() {
        chain_name()
    } else {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        let name = format!("{stem}.graph");
        std::fs::write(path.with_file_name(&name), format_graph(model.graph()))?;
        name
    };
    let config = ModelConfig::from_model(model, graph)?;
    let text = toml::to_string(&config).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Parses `singleton`, `trivial`, or explicit blocks such as `0,1;2;3`.
pub fn parse_partition(spec: &str, num_variables: usize) -> Result<Partition> {
    match spec.trim() {
        "singleton" => Ok(Partition::singleton(num_variables)),
        "trivial" => Ok(Partition::trivial(num_variables)),
        blocks => {
            let blocks = blocks
                .split(';')
                .map(|b| {
                    b.split(',')
                        .map(|v| {
                            v.trim()
                                .parse::<usize>()
                                .map_err(|_| Error::invalid(format!("bad variable {v:?} in partition {spec:?}")))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Partition::new(num_variables, blocks)
        }
    }
}
