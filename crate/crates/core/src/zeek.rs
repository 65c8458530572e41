//! Zeek conn-log ingestion.
//!
//! Reads TSV (`#fields` header driven) and JSON-lines conn logs into
//! [`ConnRecord`]s and renders each record as the single line of
//! `name: value` text the language model is trained on. Per-flow identifiers
//! and timestamps (`uid`, `ts`) are always dropped; further columns can be
//! dropped through [`Exclusions`].

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;

use serde_json::Value;

use crate::{Error, Result};

pub const ORIG_H: &str = "id.orig_h";
pub const ORIG_P: &str = "id.orig_p";
pub const RESP_H: &str = "id.resp_h";
pub const RESP_P: &str = "id.resp_p";
pub const PROTO: &str = "proto";

/// Zeek's marker for an unset field.
pub const UNSET: &str = "-";
const EMPTY_SET: &str = "(empty)";

/// Column order of a default Zeek `conn.log`. JSON records carry no header,
/// so their retained fields are laid out in this order.
pub const CONN_FIELDS: &[&str] = &[
    "ts",
    "uid",
    ORIG_H,
    ORIG_P,
    RESP_H,
    RESP_P,
    PROTO,
    "service",
    "duration",
    "orig_bytes",
    "resp_bytes",
    "conn_state",
    "local_orig",
    "local_resp",
    "missed_bytes",
    "history",
    "orig_pkts",
    "orig_ip_bytes",
    "resp_pkts",
    "resp_ip_bytes",
    "tunnel_parents",
];

const TUPLE_FIELDS: [&str; 5] = [ORIG_H, ORIG_P, RESP_H, RESP_P, PROTO];
const ALWAYS_EXCLUDED: [&str; 2] = ["uid", "ts"];

/// Field names dropped during ingestion. Always contains `uid` and `ts`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusions(BTreeSet<String>);

impl Default for Exclusions {
    fn default() -> Self {
        Self(ALWAYS_EXCLUDED.iter().map(|s| s.to_string()).collect())
    }
}

impl Exclusions {
    /// Builds an exclusion list from extra names on top of `uid` and `ts`.
    /// The five-tuple fields cannot be excluded.
    pub fn with_extra<I, S>(extra: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = Self::default();
        for name in extra {
            let name = name.into();
            if TUPLE_FIELDS.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "five-tuple field `{name}` cannot be excluded"
                )));
            }
            set.0.insert(name);
        }
        Ok(set)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// Transport protocol of a connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Proto {
    Tcp,
    Udp,
    Icmp,
    Unknown,
}

impl Proto {
    pub fn as_str(self) -> &'static str {
        match self {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
            Proto::Icmp => "icmp",
            Proto::Unknown => "unknown_transport",
        }
    }
}

impl std::str::FromStr for Proto {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tcp" => Ok(Proto::Tcp),
            "udp" => Ok(Proto::Udp),
            "icmp" => Ok(Proto::Icmp),
            "unknown_transport" => Ok(Proto::Unknown),
            other => Err(Error::value(PROTO, format!("unknown protocol `{other}`"))),
        }
    }
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One parsed conn-log entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnRecord {
    pub orig_h: String,
    pub orig_p: u16,
    pub resp_h: String,
    pub resp_p: u16,
    pub proto: Proto,
    /// Retained non-tuple columns in log order.
    pub extras: Vec<(String, String)>,
    /// Names of the columns that were present but dropped.
    pub excluded: BTreeSet<String>,
}

/// Connection identity: originator and responder endpoints plus protocol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiveTuple {
    pub orig_h: String,
    pub orig_p: u16,
    pub resp_h: String,
    pub resp_p: u16,
    pub proto: Proto,
}

impl FiveTuple {
    /// Renders the tuple the way it appears inside a serialized conn line.
    pub fn to_line(&self) -> String {
        format!(
            "{ORIG_H}: {} {ORIG_P}: {} {RESP_H}: {} {RESP_P}: {} {PROTO}: {}",
            self.orig_h, self.orig_p, self.resp_h, self.resp_p, self.proto
        )
    }

    /// Inverse of [`FiveTuple::to_line`].
    pub fn parse_line(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 10 {
            return Err(Error::value(
                "five-tuple",
                format!("expected 5 `name: value` pairs, got `{line}`"),
            ));
        }
        let mut values = [""; 5];
        for (i, (pair, expected)) in parts.chunks(2).zip(TUPLE_FIELDS).enumerate() {
            if pair[0].strip_suffix(':') != Some(expected) {
                return Err(Error::value(
                    "five-tuple",
                    format!("expected `{expected}:` at pair {i}, found `{}`", pair[0]),
                ));
            }
            values[i] = pair[1];
        }
        Ok(FiveTuple {
            orig_h: parse_addr(ORIG_H, values[0])?,
            orig_p: parse_port(ORIG_P, values[1])?,
            resp_h: parse_addr(RESP_H, values[2])?,
            resp_p: parse_port(RESP_P, values[3])?,
            proto: values[4].parse()?,
        })
    }
}

impl fmt::Display for FiveTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

impl ConnRecord {
    pub fn five_tuple(&self) -> FiveTuple {
        FiveTuple {
            orig_h: self.orig_h.clone(),
            orig_p: self.orig_p,
            resp_h: self.resp_h.clone(),
            resp_p: self.resp_p,
            proto: self.proto,
        }
    }

    /// The training-text rendering: the five tuple followed by every retained
    /// extra column, `name: value` pairs separated by single spaces.
    pub fn to_training_line(&self) -> String {
        let mut line = self.five_tuple().to_line();
        for (name, value) in &self.extras {
            line.push(' ');
            line.push_str(name);
            line.push_str(": ");
            line.push_str(value);
        }
        line
    }

    pub fn extra(&self, name: &str) -> Option<&str> {
        self.extras
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }
}

pub fn serialize_training_line(rec: &ConnRecord) -> String {
    rec.to_training_line()
}

pub fn extract_five_tuple(rec: &ConnRecord) -> FiveTuple {
    rec.five_tuple()
}

fn parse_port(field: &str, value: &str) -> Result<u16> {
    value
        .parse::<u16>()
        .map_err(|_| Error::value(field, format!("`{value}` is not a port in 0..=65535")))
}

fn parse_addr(field: &str, value: &str) -> Result<String> {
    if value.is_empty() || value == UNSET || value.chars().any(char::is_whitespace) {
        return Err(Error::value(field, format!("`{value}` is not an address")));
    }
    Ok(value.to_string())
}

/// Column layout of a TSV conn log with the positions of the tuple fields.
#[derive(Debug, Clone)]
pub struct TsvHeader {
    fields: Vec<String>,
    tuple_idx: [usize; 5],
}

impl TsvHeader {
    pub fn new<S: AsRef<str>>(fields: &[S]) -> Result<Self> {
        let fields: Vec<String> = fields.iter().map(|f| f.as_ref().to_string()).collect();
        let mut tuple_idx = [0; 5];
        for (slot, name) in tuple_idx.iter_mut().zip(TUPLE_FIELDS) {
            *slot = fields.iter().position(|f| f == name).ok_or_else(|| {
                Error::Config(format!("conn log header lacks required field `{name}`"))
            })?;
        }
        Ok(Self { fields, tuple_idx })
    }

    /// Parses the value list of a `#fields` directive line.
    pub fn from_directive(line: &str) -> Result<Self> {
        let rest = line
            .strip_prefix("#fields")
            .ok_or_else(|| Error::Config(format!("not a #fields line: `{line}`")))?;
        let fields: Vec<&str> = rest.split('\t').filter(|f| !f.is_empty()).collect();
        Self::new(&fields)
    }

    pub fn fields(&self) -> &[String] {
        &self.fields
    }
}

/// Parses one tab-separated data line. `line_no` is only used for error
/// reporting.
pub fn parse_tsv_line(
    header: &TsvHeader,
    line: &str,
    line_no: usize,
    exclude: &Exclusions,
) -> Result<ConnRecord> {
    let values: Vec<&str> = line.split('\t').collect();
    if values.len() != header.fields.len() {
        return Err(Error::malformed(
            line_no,
            format!(
                "expected {} tab-separated values, found {}",
                header.fields.len(),
                values.len()
            ),
        ));
    }
    let [oh, op, rh, rp, pr] = header.tuple_idx;
    let mut rec = ConnRecord {
        orig_h: parse_addr(ORIG_H, values[oh])?,
        orig_p: parse_port(ORIG_P, values[op])?,
        resp_h: parse_addr(RESP_H, values[rh])?,
        resp_p: parse_port(RESP_P, values[rp])?,
        proto: values[pr].parse()?,
        extras: Vec::with_capacity(values.len()),
        excluded: BTreeSet::new(),
    };
    for (name, value) in header.fields.iter().zip(&values) {
        if TUPLE_FIELDS.contains(&name.as_str()) {
            continue;
        }
        if exclude.contains(name) {
            rec.excluded.insert(name.clone());
        } else {
            rec.extras.push((name.clone(), value.to_string()));
        }
    }
    Ok(rec)
}

fn json_scalar(value: &Value) -> String {
    match value {
        Value::Null => UNSET.to_string(),
        Value::Bool(true) => "T".to_string(),
        Value::Bool(false) => "F".to_string(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        Value::Array(items) if items.is_empty() => EMPTY_SET.to_string(),
        Value::Array(items) => items.iter().map(json_scalar).collect::<Vec<_>>().join(","),
        Value::Object(_) => value.to_string(),
    }
}

fn json_port(obj: &serde_json::Map<String, Value>, field: &str, line_no: usize) -> Result<u16> {
    match obj.get(field) {
        Some(Value::Number(n)) => n
            .as_u64()
            .and_then(|p| u16::try_from(p).ok())
            .ok_or_else(|| Error::value(field, format!("`{n}` is not a port in 0..=65535"))),
        Some(Value::String(s)) => parse_port(field, s),
        Some(other) => Err(Error::value(field, format!("`{other}` is not a port"))),
        None => Err(Error::malformed(line_no, format!("missing `{field}`"))),
    }
}

fn json_str<'a>(
    obj: &'a serde_json::Map<String, Value>,
    field: &str,
    line_no: usize,
) -> Result<&'a str> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(Error::value(field, format!("`{other}` is not a string"))),
        None => Err(Error::malformed(line_no, format!("missing `{field}`"))),
    }
}

/// Parses one JSON-lines conn record. Known conn columns are laid out in
/// [`CONN_FIELDS`] order with absent ones rendered as the unset marker;
/// unrecognized keys follow in lexicographic order.
pub fn parse_json_line(line: &str, line_no: usize, exclude: &Exclusions) -> Result<ConnRecord> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| Error::malformed(line_no, format!("invalid JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(Error::malformed(line_no, "expected a JSON object"));
    };
    let mut rec = ConnRecord {
        orig_h: parse_addr(ORIG_H, json_str(&obj, ORIG_H, line_no)?)?,
        orig_p: json_port(&obj, ORIG_P, line_no)?,
        resp_h: parse_addr(RESP_H, json_str(&obj, RESP_H, line_no)?)?,
        resp_p: json_port(&obj, RESP_P, line_no)?,
        proto: json_str(&obj, PROTO, line_no)?.parse()?,
        extras: Vec::new(),
        excluded: BTreeSet::new(),
    };
    let mut unknown: Vec<&String> = obj
        .keys()
        .filter(|k| !CONN_FIELDS.contains(&k.as_str()))
        .collect();
    unknown.sort();
    let names = CONN_FIELDS
        .iter()
        .copied()
        .chain(unknown.iter().map(|k| k.as_str()));
    for name in names {
        if TUPLE_FIELDS.contains(&name) {
            continue;
        }
        if exclude.contains(name) {
            if obj.contains_key(name) {
                rec.excluded.insert(name.to_string());
            }
            continue;
        }
        let rendered = obj.get(name).map_or_else(|| UNSET.to_string(), json_scalar);
        rec.extras.push((name.to_string(), rendered));
    }
    Ok(rec)
}

/// Reads a whole conn log, detecting TSV (`#` directives) or JSON lines from
/// the first non-empty line. TSV input without a `#fields` directive needs an
/// explicit `header`.
pub fn read_conn_log<R: BufRead>(
    reader: R,
    header: Option<&TsvHeader>,
    exclude: &Exclusions,
) -> Result<Vec<ConnRecord>> {
    let mut records = Vec::new();
    let mut tsv_header = header.cloned();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with("#fields") {
            tsv_header = Some(TsvHeader::from_directive(line)?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let rec = if line.starts_with('{') {
            parse_json_line(line, line_no, exclude)?
        } else {
            let h = tsv_header
                .as_ref()
                .ok_or_else(|| Error::malformed(line_no, "TSV data before any #fields header"))?;
            parse_tsv_line(h, line, line_no, exclude)?
        };
        records.push(rec);
    }
    Ok(records)
}
