//! File formats: counts and covariate CSVs, adjacency lists, the area index
//! map and binary posterior draws.
//!
//! Area identifiers are canonicalised to lexicographic order; area index `i`
//! everywhere else refers to the `i`-th identifier in that order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{build_graph, AdjacencyGraph, Interactions};
use crate::model::{ModelKind, ModelVariant, PanelData, StationaryRange};
use crate::sampler::{AcceptanceLedger, BlockFamily, ParamLayout, PosteriorSamples};
use crate::simulate::POPULATION_SCALE;

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

fn csv_failure(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => parse_error(path, line, format!("{kind:?}")),
    }
}

/// Finds the named columns in a header row.
fn columns<const K: usize>(path: &Path, headers: &csv::StringRecord, names: [&str; K]) -> Result<[usize; K]> {
    let mut idx = [0; K];
    for (k, name) in names.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| parse_error(path, 1, format!("missing column '{name}'")))?;
    }
    Ok(idx)
}

fn field<'r>(path: &Path, record: &'r csv::StringRecord, col: usize, name: &str) -> Result<&'r str> {
    let line = record.position().map_or(0, |p| p.line() as usize);
    record
        .get(col)
        .ok_or_else(|| parse_error(path, line, format!("missing value in column '{name}'")))
}

fn numeric<T: std::str::FromStr>(path: &Path, record: &csv::StringRecord, col: usize, name: &str) -> Result<T> {
    let line = record.position().map_or(0, |p| p.line() as usize);
    let raw = field(path, record, col, name)?;
    raw.parse()
        .map_err(|_| parse_error(path, line, format!("column '{name}': '{raw}' is not a valid number")))
}

/// A dense counts table as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    /// Lexicographically sorted.
    pub area_ids: Vec<String>,
    /// Period labels in increasing order, contiguous.
    pub periods: Vec<i64>,
    /// Area-major.
    pub counts: Vec<u64>,
}

impl CountTable {
    pub fn n_areas(&self) -> usize {
        self.area_ids.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn count(&self, area: usize, period: usize) -> u64 {
        self.counts[area * self.periods.len() + period]
    }

    /// Builds a panel, optionally reserving the final period as holdout.
    pub fn into_panel(&self, covariate: Vec<f64>, holdout: bool) -> Result<PanelData> {
        let t_all = self.n_periods();
        if !holdout {
            return PanelData::new(self.n_areas(), t_all, self.counts.clone(), covariate);
        }
        let t = t_all - 1;
        let kept = (0..self.n_areas())
            .flat_map(|i| self.counts[i * t_all..i * t_all + t].iter().copied())
            .collect();
        let last = (0..self.n_areas()).map(|i| self.count(i, t)).collect();
        PanelData::new(self.n_areas(), t, kept, covariate)?.with_holdout(last)
    }
}

/// Reads `area_id,period,count`. Every (area, period) cell must appear once
/// and period labels must be contiguous integers.
pub fn read_counts(path: &Path) -> Result<CountTable> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_failure(path, e))?.clone();
    let [c_area, c_period, c_count] = columns(path, &headers, ["area_id", "period", "count"])?;
    let mut cells: HashMap<(String, i64), (u64, usize)> = HashMap::new();
    let mut areas = BTreeSet::new();
    let mut periods = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_failure(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let area = field(path, &record, c_area, "area_id")?.to_string();
        if area.is_empty() {
            return Err(parse_error(path, line, "column 'area_id': empty identifier"));
        }
        let period: i64 = numeric(path, &record, c_period, "period")?;
        let count: i64 = numeric(path, &record, c_count, "count")?;
        if count < 0 {
            return Err(parse_error(path, line, format!("column 'count': negative count {count}")));
        }
        if let Some((_, first)) = cells.get(&(area.clone(), period)) {
            return Err(parse_error(
                path,
                line,
                format!("duplicate cell (area {area}, period {period}); first seen on line {first}"),
            ));
        }
        areas.insert(area.clone());
        periods.insert(period);
        cells.insert((area, period), (count as u64, line));
    }
    if cells.is_empty() {
        return Err(parse_error(path, 1, "no data rows"));
    }
    let area_ids: Vec<String> = areas.into_iter().collect();
    let periods: Vec<i64> = periods.into_iter().collect();
    let (lo, hi) = (periods[0], periods[periods.len() - 1]);
    if (hi - lo + 1) as usize != periods.len() {
        let gap = (lo..=hi).find(|p| periods.binary_search(p).is_err()).unwrap_or(lo);
        return Err(parse_error(path, 0, format!("period {gap} is missing for every area")));
    }
    let mut counts = Vec::with_capacity(area_ids.len() * periods.len());
    for area in &area_ids {
        for &p in &periods {
            let (c, _) = cells.get(&(area.clone(), p)).ok_or_else(|| {
                parse_error(path, 0, format!("missing cell (area {area}, period {p})"))
            })?;
            counts.push(*c);
        }
    }
    Ok(CountTable {
        area_ids,
        periods,
        counts,
    })
}

/// Reads `area_id,population` and returns `population / 1e5` in the order of
/// `area_ids`. Centring happens when the panel is built.
pub fn read_covariate(path: &Path, area_ids: &[String]) -> Result<Vec<f64>> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_failure(path, e))?.clone();
    let [c_area, c_pop] = columns(path, &headers, ["area_id", "population"])?;
    let index: HashMap<&str, usize> = area_ids.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let mut values = vec![None; area_ids.len()];
    for record in reader.records() {
        let record = record.map_err(|e| csv_failure(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let area = field(path, &record, c_area, "area_id")?;
        let pop: f64 = numeric(path, &record, c_pop, "population")?;
        if !(pop > 0.0) || !pop.is_finite() {
            return Err(parse_error(path, line, format!("column 'population': must be positive, got {pop}")));
        }
        let &i = index
            .get(area)
            .ok_or_else(|| parse_error(path, line, format!("unknown area '{area}'")))?;
        if values[i].is_some() {
            return Err(parse_error(path, line, format!("duplicate area '{area}'")));
        }
        values[i] = Some(pop / POPULATION_SCALE);
    }
    values
        .into_iter()
        .zip(area_ids)
        .map(|(v, a)| v.ok_or_else(|| parse_error(path, 0, format!("no population for area '{a}'"))))
        .collect()
}

/// Reads an adjacency list: one `id_a id_b [h]` edge per line, whitespace or
/// comma separated, `#` starting a comment. Interaction weights `h` must be
/// given for every edge or for none.
pub fn read_adjacency(path: &Path, area_ids: &[String]) -> Result<(AdjacencyGraph, Option<Interactions>)> {
    let index: HashMap<&str, usize> = area_ids.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let reader = BufReader::new(open(path)?);
    let mut edges = Vec::new();
    let mut weights = Interactions::new();
    let mut n_weighted = 0usize;
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parts: Vec<&str> = content
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if parts.len() != 2 && parts.len() != 3 {
            return Err(parse_error(path, line_no, format!("expected 'id_a id_b [h]', got '{content}'")));
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| parse_error(path, line_no, format!("unknown area '{id}'")))
        };
        let (i, j) = (lookup(parts[0])?, lookup(parts[1])?);
        if i == j {
            return Err(parse_error(path, line_no, format!("self-loop on area '{}'", parts[0])));
        }
        edges.push((i, j));
        if let Some(raw) = parts.get(2) {
            let h: f64 = raw
                .parse()
                .map_err(|_| parse_error(path, line_no, format!("column 3: '{raw}' is not a valid number")))?;
            weights.insert(i, j, h);
            n_weighted += 1;
        }
    }
    if n_weighted != 0 && n_weighted != edges.len() {
        return Err(parse_error(path, 0, "interaction weights must be given for all edges or none"));
    }
    let graph = build_graph(&edges, area_ids.len())?;
    Ok((graph, (n_weighted > 0).then_some(weights)))
}

/// Writes `index,area_id`.
pub fn write_index_map(path: &Path, area_ids: &[String]) -> Result<()> {
    let mut out = create(path)?;
    let mut body = String::from("index,area_id\n");
    for (i, a) in area_ids.iter().enumerate() {
        body.push_str(&format!("{i},{a}\n"));
    }
    out.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes a counts file with 1-based period labels. A holdout, if present,
/// is written as the final period.
pub fn write_counts(path: &Path, area_ids: &[String], data: &PanelData) -> Result<()> {
    let mut out = create(path)?;
    let mut body = String::from("area_id,period,count\n");
    for (i, a) in area_ids.iter().enumerate() {
        for t in 0..data.n_periods() {
            body.push_str(&format!("{a},{},{}\n", t + 1, data.count(i, t)));
        }
        if let Some(h) = data.holdout() {
            body.push_str(&format!("{a},{},{}\n", data.n_periods() + 1, h[i]));
        }
    }
    out.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_covariate(path: &Path, area_ids: &[String], populations: &[f64]) -> Result<()> {
    let mut out = create(path)?;
    let mut body = String::from("area_id,population\n");
    for (a, p) in area_ids.iter().zip(populations) {
        body.push_str(&format!("{a},{p}\n"));
    }
    out.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_adjacency(path: &Path, area_ids: &[String], graph: &AdjacencyGraph) -> Result<()> {
    let mut out = create(path)?;
    let mut body = String::from("# area_a area_b\n");
    for (i, j) in graph.edges() {
        body.push_str(&format!("{} {}\n", area_ids[i], area_ids[j]));
    }
    out.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

const DRAWS_MAGIC: &[u8; 8] = b"EPMXDRW1";

fn kind_code(kind: ModelKind) -> u8 {
    ModelKind::ALL.iter().position(|&k| k == kind).unwrap() as u8
}

/// Stores posterior draws and acceptance counts in a little-endian binary
/// file that reloads to an identical [`PosteriorSamples`].
pub fn write_draws(path: &Path, samples: &PosteriorSamples) -> Result<()> {
    let layout = samples.layout();
    let mut buf = Vec::with_capacity(64 + samples.total_draws() * layout.len() * 8);
    buf.extend_from_slice(DRAWS_MAGIC);
    buf.push(kind_code(samples.variant().kind));
    buf.push(matches!(samples.variant().range, StationaryRange::Signed) as u8);
    for v in [layout.n_areas(), layout.n_periods(), samples.n_chains(), samples.n_draws()] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    let entries: Vec<_> = samples.acceptance().entries().collect();
    buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (family, a, n) in entries {
        let code = BlockFamily::ALL.iter().position(|&f| f == family).unwrap() as u8;
        buf.push(code);
        buf.extend_from_slice(&a.to_le_bytes());
        buf.extend_from_slice(&n.to_le_bytes());
    }
    for c in 0..samples.n_chains() {
        for v in samples.chain_values(c) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut out = create(path)?;
    out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(parse_error(self.path, 0, "draws file is truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_draws(path: &Path) -> Result<PosteriorSamples> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if cur.take(8)? != DRAWS_MAGIC {
        return Err(parse_error(path, 0, "not a draws file"));
    }
    let kind = *ModelKind::ALL
        .get(cur.u8()? as usize)
        .ok_or_else(|| parse_error(path, 0, "unknown model variant code"))?;
    let range = if cur.u8()? == 1 {
        StationaryRange::Signed
    } else {
        StationaryRange::Unit
    };
    let n_areas = cur.u64()? as usize;
    let n_periods = cur.u64()? as usize;
    let n_chains = cur.u64()? as usize;
    let n_draws = cur.u64()? as usize;
    let mut acceptance = AcceptanceLedger::default();
    for _ in 0..cur.u64()? {
        let family = *BlockFamily::ALL
            .get(cur.u8()? as usize)
            .ok_or_else(|| parse_error(path, 0, "unknown block family code"))?;
        let (a, n) = (cur.u64()?, cur.u64()?);
        acceptance.add(family, a, n);
    }
    let layout = ParamLayout::new(kind, n_areas, n_periods);
    let per_chain = n_draws * layout.len();
    let mut chains = Vec::with_capacity(n_chains);
    for _ in 0..n_chains {
        let raw = cur.take(per_chain * 8)?;
        chains.push(
            raw.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        );
    }
    if cur.pos != bytes.len() {
        return Err(parse_error(path, 0, "trailing bytes in draws file"));
    }
    PosteriorSamples::from_parts(ModelVariant { kind, range }, layout, chains, acceptance)
}

/// Reads `key = value` lines, skipping blanks and `#` comments.
pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    let reader = BufReader::new(open(path)?);
    let mut map = BTreeMap::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let content = line.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_error(path, k + 1, format!("expected 'key = value', got '{content}'")))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}
