//! Plain-text formats for placements, latency profiles, traces and valuation matrices.
//!
//! Every format is whitespace separated with one record per line. Blank lines and lines
//! starting with `#` are ignored, except for a leading `# geocache <kind> v1` header that
//! writers emit and readers check when present. All indices are zero-based.
//!
//! | kind      | columns                                   |
//! |-----------|-------------------------------------------|
//! | placement | item, `data` or `parity`, index, node, server |
//! | profile   | node, latency_ms                          |
//! | trace     | time_ms, item                             |
//! | tau       | tau_0 .. tau_K (one row per item)         |
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading a written
//! file gives back bit-identical values.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{LatencyProfile, PlacementMap, ServerLoc, ValuationArray};
use crate::sim::Trace;

pub const FORMAT_VERSION: u32 = 1;

fn header(kind: &str) -> String {
    format!("# geocache {kind} v{FORMAT_VERSION}\n")
}

/// Non-comment lines as `(line number, fields)`, checking the header if there is one.
fn records<'a>(text: &'a str, kind: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            let words: Vec<&str> = rest.split_whitespace().collect();
            if words.first() == Some(&"geocache") {
                if words.get(1) != Some(&kind) {
                    return Err(Error::parse(i + 1, format!("expected a {kind} file, found {}", words.get(1).unwrap_or(&"?"))));
                }
                if words.get(2) != Some(&format!("v{FORMAT_VERSION}").as_str()) {
                    return Err(Error::parse(i + 1, format!("unsupported version {}", words.get(2).unwrap_or(&"?"))));
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        out.push((i + 1, line.split_whitespace().collect()));
    }
    Ok(out)
}

fn field<T: FromStr>(line: usize, fields: &[&str], i: usize, name: &str) -> Result<T> {
    let raw = fields
        .get(i)
        .ok_or_else(|| Error::parse(line, format!("missing column `{name}`")))?;
    raw.parse()
        .map_err(|_| Error::parse(line, format!("bad {name} `{raw}`")))
}

fn expect_columns(line: usize, fields: &[&str], n: usize) -> Result<()> {
    if fields.len() != n {
        return Err(Error::parse(line, format!("expected {n} columns, found {}", fields.len())));
    }
    Ok(())
}

pub fn write_placement(p: &PlacementMap) -> String {
    let mut s = header("placement");
    let _ = writeln!(s, "# k_data {} r_parity {}", p.k_data(), p.r_parity());
    for m in 0..p.n_items() {
        for (i, l) in p.data_locs(m).iter().enumerate() {
            let _ = writeln!(s, "{m} data {i} {} {}", l.node, l.server);
        }
        for (i, l) in p.parity_locs(m).iter().enumerate() {
            let _ = writeln!(s, "{m} parity {i} {} {}", l.node, l.server);
        }
    }
    s
}

pub fn read_placement(text: &str) -> Result<PlacementMap> {
    let mut data: Vec<Vec<Option<ServerLoc>>> = Vec::new();
    let mut parity: Vec<Vec<Option<ServerLoc>>> = Vec::new();
    for (line, f) in records(text, "placement")? {
        expect_columns(line, &f, 5)?;
        let item: usize = field(line, &f, 0, "item")?;
        let index: usize = field(line, &f, 2, "index")?;
        let loc = ServerLoc::new(field(line, &f, 3, "node")?, field(line, &f, 4, "server")?);
        let table = match f[1] {
            "data" => &mut data,
            "parity" => &mut parity,
            other => return Err(Error::parse(line, format!("bad kind `{other}`"))),
        };
        if table.len() <= item {
            table.resize(item + 1, Vec::new());
        }
        if table[item].len() <= index {
            table[item].resize(index + 1, None);
        }
        if table[item][index].replace(loc).is_some() {
            return Err(Error::parse(line, format!("chunk {} {index} of item {item} listed twice", f[1])));
        }
    }
    let n = data.len().max(parity.len());
    data.resize(n, Vec::new());
    parity.resize(n, Vec::new());
    let k = data.first().map_or(0, Vec::len);
    let r = parity.first().map_or(0, Vec::len);
    let mut flat_data = Vec::with_capacity(n * k);
    let mut flat_parity = Vec::with_capacity(n * r);
    for m in 0..n {
        if data[m].len() != k || parity[m].len() != r {
            return Err(Error::parse(0, format!("item {m} does not have {k} data and {r} parity chunks")));
        }
        for (kind, chunks, out) in [("data", &data[m], &mut flat_data), ("parity", &parity[m], &mut flat_parity)] {
            for (i, c) in chunks.iter().enumerate() {
                out.push(c.ok_or_else(|| Error::parse(0, format!("item {m} is missing {kind} chunk {i}")))?);
            }
        }
    }
    PlacementMap::new(k, r, flat_data, flat_parity)
}

pub fn write_profile(p: &LatencyProfile) -> String {
    let mut s = header("profile");
    for (node, l) in p.latencies().iter().enumerate() {
        let _ = writeln!(s, "{node} {l}");
    }
    s
}

pub fn read_profile(text: &str) -> Result<LatencyProfile> {
    let mut lat: Vec<Option<f64>> = Vec::new();
    for (line, f) in records(text, "profile")? {
        expect_columns(line, &f, 2)?;
        let node: usize = field(line, &f, 0, "node")?;
        let l: f64 = field(line, &f, 1, "latency_ms")?;
        if lat.len() <= node {
            lat.resize(node + 1, None);
        }
        if lat[node].replace(l).is_some() {
            return Err(Error::parse(line, format!("node {node} listed twice")));
        }
    }
    let lat = lat
        .into_iter()
        .enumerate()
        .map(|(n, l)| l.ok_or_else(|| Error::parse(0, format!("node {n} has no latency"))))
        .collect::<Result<Vec<f64>>>()?;
    LatencyProfile::new(lat)
}

pub fn write_trace(t: &Trace) -> String {
    let mut s = header("trace");
    for (time, item) in t.times_ms.iter().zip(&t.items) {
        let _ = writeln!(s, "{time} {item}");
    }
    s
}

pub fn read_trace(text: &str) -> Result<Trace> {
    let mut t = Trace::default();
    for (line, f) in records(text, "trace")? {
        expect_columns(line, &f, 2)?;
        let time: f64 = field(line, &f, 0, "time_ms")?;
        if let Some(&prev) = t.times_ms.last() {
            if time < prev {
                return Err(Error::parse(line, "arrival times must be nondecreasing"));
            }
        }
        t.times_ms.push(time);
        t.items.push(field(line, &f, 1, "item")?);
    }
    Ok(t)
}

pub fn write_tau(v: &ValuationArray) -> String {
    let mut s = header("tau");
    for m in 0..v.n_items() {
        let row: Vec<String> = v.row(m).iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

pub fn read_tau(text: &str) -> Result<ValuationArray> {
    let mut rows = Vec::new();
    for (line, f) in records(text, "tau")? {
        let row = (0..f.len())
            .map(|i| field::<f64>(line, &f, i, "tau"))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            let first: &Vec<f64> = first;
            if first.len() != row.len() {
                return Err(Error::parse(line, format!("expected {} columns, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    ValuationArray::from_tau_rows(&rows)
}
