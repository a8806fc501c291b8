//! Reader and writer for the TNTP text formats (`*_net.tntp`, `*_trips.tntp`)
//! used by the public TransportationNetworks collection.

use std::io::Write;

use thiserror::Error;

use crate::cost::travel_time_unchecked;
use crate::net::{DemandError, DemandMatrix, LinkRecord, Network};

#[derive(Debug, Error)]
pub enum TntpError {
    #[error("missing metadata key {0}")]
    MissingMetadataKey(&'static str),
    #[error("line {line}: expected {expected} fields, found {found}")]
    RowArity { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {column}: cannot parse `{text}` as a number")]
    NonNumericField { line: usize, column: usize, text: String },
    #[error("header declares {declared} links, file has {parsed} rows")]
    LinkCountMismatch { declared: usize, parsed: usize },
    #[error("line {line}: malformed entry `{text}`")]
    MalformedEntry { line: usize, text: String },
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error("flow vector has length {got}, network has {expected} links")]
    FlowLength { expected: usize, got: usize },
    #[error("flow on link {link} is negative or not finite: {flow}")]
    BadFlow { link: usize, flow: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Header block of a network file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetFileMetadata {
    pub n_zones: usize,
    pub n_nodes: usize,
    pub n_links: usize,
    pub first_thru_node: usize,
}

struct Metadata<'a> {
    pairs: Vec<(String, &'a str)>,
    body_start: usize,
}

impl Metadata<'_> {
    fn get(&self, key: &'static str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    fn count(&self, key: &'static str, line_of: usize) -> Result<usize, TntpError> {
        let raw = self.get(key).ok_or(TntpError::MissingMetadataKey(key))?;
        parse_count(raw, line_of, 1)
    }
}

fn parse_count(text: &str, line: usize, column: usize) -> Result<usize, TntpError> {
    let t = text.trim();
    if let Ok(v) = t.parse::<usize>() {
        return Ok(v);
    }
    // some files write integers as floats
    match t.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as usize),
        _ => Err(TntpError::NonNumericField { line, column, text: t.to_string() }),
    }
}

fn parse_number(text: &str, line: usize, column: usize) -> Result<f64, TntpError> {
    text.trim().parse::<f64>().map_err(|_| TntpError::NonNumericField { line, column, text: text.trim().to_string() })
}

/// Reads `<KEY> value` lines up to `<END OF METADATA>`. Returns the pairs and
/// the 0-based index of the first line after the header.
fn read_metadata<'a>(lines: &[&'a str]) -> Result<Metadata<'a>, TntpError> {
    let mut pairs = Vec::new();
    for (i, raw) in lines.iter().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        if !line.starts_with('<') {
            // data before the end marker
            break;
        }
        let Some(close) = line.find('>') else { break };
        let key = line[1..close].trim().to_ascii_uppercase();
        if key == "END OF METADATA" {
            return Ok(Metadata { pairs, body_start: i + 1 });
        }
        pairs.push((key, line[close + 1..].trim()));
    }
    Err(TntpError::MissingMetadataKey("END OF METADATA"))
}

fn split_lines(text: &str) -> Vec<&str> {
    text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)).collect()
}

const KNOWN_NET_KEYS: [&str; 4] = ["NUMBER OF ZONES", "NUMBER OF NODES", "FIRST THRU NODE", "NUMBER OF LINKS"];
const NET_FIELDS: usize = 10;

/// Parses a network file into its header and link rows (1-based node ids).
pub fn parse_net(text: &str) -> Result<(NetFileMetadata, Vec<LinkRecord>), TntpError> {
    let lines = split_lines(text);
    let meta = read_metadata(&lines)?;
    for (k, _) in &meta.pairs {
        if !KNOWN_NET_KEYS.contains(&k.as_str()) {
            log::warn!("ignoring unknown metadata key <{k}>");
        }
    }
    let header_line = meta.body_start;
    let n_zones = meta.count("NUMBER OF ZONES", header_line)?;
    let n_nodes = meta.count("NUMBER OF NODES", header_line)?;
    let first_thru_node = meta.count("FIRST THRU NODE", header_line)?;
    let n_links = meta.count("NUMBER OF LINKS", header_line)?;

    let mut links = Vec::with_capacity(n_links);
    for (i, raw) in lines.iter().enumerate().skip(meta.body_start) {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        let Some(body) = line.strip_suffix(';') else {
            return Err(TntpError::MalformedEntry { line: line_no, text: line.to_string() });
        };
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != NET_FIELDS {
            return Err(TntpError::RowArity { line: line_no, expected: NET_FIELDS, found: fields.len() });
        }
        let num = |c: usize| parse_number(fields[c], line_no, c + 1);
        links.push(LinkRecord {
            init_node: parse_count(fields[0], line_no, 1)?,
            term_node: parse_count(fields[1], line_no, 2)?,
            capacity: num(2)?,
            length: num(3)?,
            free_flow_time: num(4)?,
            b: num(5)?,
            power: num(6)?,
            speed: num(7)?,
            toll: num(8)?,
            link_type: num(9)? as i64,
        });
    }
    if links.len() != n_links {
        return Err(TntpError::LinkCountMismatch { declared: n_links, parsed: links.len() });
    }
    Ok((NetFileMetadata { n_zones, n_nodes, n_links, first_thru_node }, links))
}

/// Parses a network file straight into a [`Network`].
pub fn read_network(text: &str) -> Result<Network, Box<dyn std::error::Error + Send + Sync>> {
    let (meta, links) = parse_net(text)?;
    Ok(Network::build(&links, meta.n_nodes, meta.n_zones, meta.first_thru_node)?)
}

/// Relative tolerance for the declared `<TOTAL OD FLOW>`.
pub const TOTAL_FLOW_TOLERANCE: f64 = 1e-6;

/// Parsed trips file together with the header's declared total.
#[derive(Debug, Clone)]
pub struct TripsFile {
    pub demand: DemandMatrix,
    pub declared_total: Option<f64>,
    /// Sum of every entry as written, including zero and intrazonal ones.
    pub raw_total: f64,
}

impl TripsFile {
    /// True when the declared total disagrees with the parsed entries.
    pub fn total_mismatch(&self) -> bool {
        match self.declared_total {
            Some(t) => (self.raw_total - t).abs() > TOTAL_FLOW_TOLERANCE * t.abs().max(1.0),
            None => false,
        }
    }
}

/// Parses a trips file. Total-flow disagreement is logged, not fatal.
pub fn parse_trips(text: &str) -> Result<TripsFile, TntpError> {
    let lines = split_lines(text);
    let meta = read_metadata(&lines)?;
    let n_zones = meta.count("NUMBER OF ZONES", meta.body_start)?;
    let declared_total = match meta.get("TOTAL OD FLOW") {
        Some(v) => Some(parse_number(v, meta.body_start, 1)?),
        None => None,
    };

    let mut triples = Vec::new();
    let mut origin: Option<usize> = None;
    for (i, raw) in lines.iter().enumerate().skip(meta.body_start) {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("Origin") {
            origin = Some(parse_count(rest, line_no, 2)?);
            continue;
        }
        let Some(o) = origin else {
            return Err(TntpError::MalformedEntry { line: line_no, text: line.to_string() });
        };
        for chunk in line.split(';') {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            let Some((dest, value)) = chunk.split_once(':') else {
                return Err(TntpError::MalformedEntry { line: line_no, text: chunk.to_string() });
            };
            let dest = parse_count(dest, line_no, 1)
                .map_err(|_| TntpError::MalformedEntry { line: line_no, text: chunk.to_string() })?;
            let value = parse_number(value, line_no, 2)
                .map_err(|_| TntpError::MalformedEntry { line: line_no, text: chunk.to_string() })?;
            triples.push((o, dest, value));
        }
    }
    let raw_total: f64 = triples.iter().map(|t| t.2).sum();
    let demand = DemandMatrix::from_entries(n_zones, triples)?;
    let file = TripsFile { demand, declared_total, raw_total };
    if file.total_mismatch() {
        log::warn!(
            "declared total OD flow {} differs from parsed total {}",
            declared_total.unwrap_or_default(),
            raw_total
        );
    }
    Ok(file)
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Writes `tail head flow cost` per link after an objective header.
pub fn write_flows<W: Write>(network: &Network, flows: &[f64], objective: f64, sink: &mut W) -> Result<(), TntpError> {
    if flows.len() != network.n_links() {
        return Err(TntpError::FlowLength { expected: network.n_links(), got: flows.len() });
    }
    writeln!(sink, "<OBJECTIVE> {}", format_f64(objective))?;
    writeln!(sink, "~ tail head flow cost")?;
    for (id, (link, &f)) in network.links().iter().zip(flows).enumerate() {
        if !(f >= 0.0 && f.is_finite()) {
            return Err(TntpError::BadFlow { link: id, flow: f });
        }
        let cost = travel_time_unchecked(link, f);
        writeln!(sink, "{} {} {} {}", link.tail + 1, link.head + 1, format_f64(f), format_f64(cost))?;
    }
    Ok(())
}

/// One row of a flows file.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRow {
    pub tail: usize,
    pub head: usize,
    pub flow: f64,
    pub cost: f64,
}

/// Reads back the output of [`write_flows`].
pub fn parse_flows(text: &str) -> Result<(f64, Vec<FlowRow>), TntpError> {
    let mut objective = None;
    let mut rows = Vec::new();
    for (i, raw) in split_lines(text).iter().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("<OBJECTIVE>") {
            objective = Some(parse_number(rest, line_no, 2)?);
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(TntpError::RowArity { line: line_no, expected: 4, found: fields.len() });
        }
        rows.push(FlowRow {
            tail: parse_count(fields[0], line_no, 1)?,
            head: parse_count(fields[1], line_no, 2)?,
            flow: parse_number(fields[2], line_no, 3)?,
            cost: parse_number(fields[3], line_no, 4)?,
        });
    }
    let objective = objective.ok_or(TntpError::MissingMetadataKey("OBJECTIVE"))?;
    Ok((objective, rows))
}
