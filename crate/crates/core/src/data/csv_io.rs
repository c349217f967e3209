//! CSV ingestion and export for interaction logs and recommendation lists.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::log::InteractionLog;
use super::recs::{Recommendation, RecommendationList};
use crate::error::{Error, Result};

/// Header names of the source file for each interaction role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    pub query_id: String,
    pub item_id: String,
    #[serde(default)]
    pub timestamp: Option<String>,
    #[serde(default)]
    pub rating: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            query_id: "query_id".into(),
            item_id: "item_id".into(),
            timestamp: Some("timestamp".into()),
            rating: Some("rating".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    #[serde(default)]
    pub columns: ColumnMapping,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
}

fn default_delimiter() -> String {
    ",".into()
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { columns: ColumnMapping::default(), delimiter: default_delimiter() }
    }
}

/// Parses integer epoch seconds or `YYYY-MM-DD[ HH:MM:SS]` (UTC).
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(t) = raw.parse::<i64>() {
        return Some(t);
    }
    if let Ok(dt) = NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S") {
        return Some(dt.and_utc().timestamp());
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok().map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp())
}

/// Splits a delimited text source into a header and records. Single-byte
/// delimiters go through the `csv` crate (quoting honoured); longer ones,
/// such as `::`, use a plain split.
fn read_records<R: Read>(reader: R, delimiter: &str, name: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    if delimiter.is_empty() {
        return Err(Error::Config("delimiter must not be empty".into()));
    }
    if delimiter.len() == 1 {
        let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter.as_bytes()[0]).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse { path: name.into(), line: 1, message: e.to_string() })?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse { path: name.into(), line: n + 2, message: e.to_string() })?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok((header, rows))
    } else {
        let mut lines = BufReader::new(reader).lines();
        let header = match lines.next() {
            Some(l) => l.map_err(|e| Error::io(name, e))?.split(delimiter).map(|s| s.trim().to_string()).collect(),
            None => return Err(Error::Parse { path: name.into(), line: 1, message: "missing header row".into() }),
        };
        let mut rows = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(name, e))?;
            if line.is_empty() {
                continue;
            }
            rows.push(line.split(delimiter).map(str::to_string).collect());
        }
        Ok((header, rows))
    }
}

fn position(header: &[String], column: &str, name: &str) -> Result<usize> {
    header.iter().position(|h| h == column).ok_or_else(|| Error::MissingColumn(format!("{column} (header of {name})")))
}

pub fn read_interactions_from<R: Read>(reader: R, options: &CsvOptions, name: &str) -> Result<InteractionLog> {
    let (header, rows) = read_records(reader, &options.delimiter, name)?;
    let cols = &options.columns;
    let q = position(&header, &cols.query_id, name)?;
    let i = position(&header, &cols.item_id, name)?;
    let ts_name =
        cols.timestamp.as_deref().ok_or_else(|| Error::MissingColumn("timestamp mapping is required".into()))?;
    let t = position(&header, ts_name, name)?;
    let r = cols.rating.as_deref().map(|c| position(&header, c, name)).transpose()?;

    let mut log = InteractionLog::with_capacity(rows.len());
    for (n, row) in rows.iter().enumerate() {
        let line = n + 2;
        let field = |idx: usize| {
            row.get(idx).map(|s| s.trim()).ok_or_else(|| Error::Parse {
                path: name.into(),
                line,
                message: format!("expected at least {} fields, found {}", idx + 1, row.len()),
            })
        };
        let ts_raw = field(t)?;
        let timestamp = parse_timestamp(ts_raw).ok_or_else(|| Error::Parse {
            path: name.into(),
            line,
            message: format!("bad timestamp {ts_raw:?}"),
        })?;
        let rating = match r {
            Some(idx) => {
                let raw = field(idx)?;
                let v: f64 = raw.parse().map_err(|_| Error::Parse {
                    path: name.into(),
                    line,
                    message: format!("bad rating {raw:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFiniteRating { row: n });
                }
                v
            }
            None => 1.0,
        };
        log.push(field(q)?.to_string(), field(i)?.to_string(), timestamp, rating);
    }
    Ok(log)
}

pub fn read_interactions(path: impl AsRef<Path>, options: &CsvOptions) -> Result<InteractionLog> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&name, e))?;
    read_interactions_from(file, options, &name)
}

/// Writes `query_id,item_id,timestamp,rating` with a header row.
pub fn write_interactions(path: impl AsRef<Path>, log: &InteractionLog) -> Result<()> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&name, e))?;
    write_interactions_to(BufWriter::new(file), log).map_err(|e| Error::io(&name, e))
}

pub fn write_interactions_to<W: Write>(writer: W, log: &InteractionLog) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["query_id", "item_id", "timestamp", "rating"])?;
    for row in log.iter() {
        w.write_record([row.query.as_str(), row.item.as_str(), &row.timestamp.to_string(), &row.rating.to_string()])?;
    }
    w.flush()
}

/// Writes `query_id,item_id,rank,score`.
pub fn write_recommendations(path: impl AsRef<Path>, recs: &RecommendationList) -> Result<()> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&name, e))?;
    write_recommendations_to(BufWriter::new(file), recs).map_err(|e| Error::io(&name, e))
}

pub fn write_recommendations_to<W: Write>(writer: W, recs: &RecommendationList) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["query_id", "item_id", "rank", "score"])?;
    for e in recs.entries() {
        w.write_record([e.query.as_str(), e.item.as_str(), &e.rank.to_string(), &e.score.to_string()])?;
    }
    w.flush()
}

/// Reads a file written by [`write_recommendations`]; `k` is the largest rank seen.
pub fn read_recommendations(path: impl AsRef<Path>) -> Result<RecommendationList> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&name, e))?;
    let (header, rows) = read_records(file, ",", &name)?;
    let q = position(&header, "query_id", &name)?;
    let i = position(&header, "item_id", &name)?;
    let r = position(&header, "rank", &name)?;
    let s = position(&header, "score", &name)?;
    let mut entries = Vec::with_capacity(rows.len());
    let mut k = 0;
    for (n, row) in rows.iter().enumerate() {
        let bad = |what: &str| Error::Parse { path: name.clone(), line: n + 2, message: format!("bad {what}") };
        let get = |idx: usize, what: &str| row.get(idx).map(|s| s.trim()).ok_or_else(|| bad(what));
        let rank: usize = get(r, "rank")?.parse().map_err(|_| bad("rank"))?;
        let score: f64 = get(s, "score")?.parse().map_err(|_| bad("score"))?;
        k = k.max(rank);
        entries.push(Recommendation {
            query: get(q, "query_id")?.to_string(),
            item: get(i, "item_id")?.to_string(),
            rank,
            score,
        });
    }
    Ok(RecommendationList::from_entries(k, entries))
}

/// Reads an `item → category` map from a delimited file with a header.
pub fn read_item_categories(
    path: impl AsRef<Path>,
    key: &str,
    category: &str,
    delimiter: &str,
) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&name, e))?;
    let (header, rows) = read_records(file, delimiter, &name)?;
    let k = position(&header, key, &name)?;
    let c = position(&header, category, &name)?;
    let mut out = HashMap::with_capacity(rows.len());
    for (n, row) in rows.iter().enumerate() {
        match (row.get(k), row.get(c)) {
            (Some(key), Some(cat)) => {
                out.insert(key.trim().to_string(), cat.trim().to_string());
            }
            _ => {
                return Err(Error::Parse { path: name, line: n + 2, message: "short row".into() });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps_in_both_forms() {
        assert_eq!(parse_timestamp("978300760"), Some(978300760));
        assert_eq!(parse_timestamp("1970-01-02"), Some(86400));
        assert_eq!(parse_timestamp("2000-01-01 00:00:10"), Some(946684810));
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn reads_with_mapping_and_default_rating() {
        let text = "uid;mid;when\n1;10;5\n2;11;1970-01-01 00:01:00\n";
        let opts = CsvOptions {
            columns: ColumnMapping {
                query_id: "uid".into(),
                item_id: "mid".into(),
                timestamp: Some("when".into()),
                rating: None,
            },
            delimiter: ";".into(),
        };
        let log = read_interactions_from(text.as_bytes(), &opts, "mem").unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.timestamps(), &[5, 60]);
        assert_eq!(log.ratings(), &[1.0, 1.0]);
    }

    #[test]
    fn multi_char_delimiter() {
        let text = "u::i::r::t\n1::1193::5::978300760\n";
        let opts = CsvOptions {
            columns: ColumnMapping {
                query_id: "u".into(),
                item_id: "i".into(),
                timestamp: Some("t".into()),
                rating: Some("r".into()),
            },
            delimiter: "::".into(),
        };
        let log = read_interactions_from(text.as_bytes(), &opts, "mem").unwrap();
        assert_eq!(log.items(), &["1193".to_string()]);
        assert_eq!(log.ratings(), &[5.0]);
    }

    #[test]
    fn missing_timestamp_is_an_error() {
        let opts =
            CsvOptions { columns: ColumnMapping { timestamp: None, ..Default::default() }, ..Default::default() };
        let err = read_interactions_from("query_id,item_id\n1,2\n".as_bytes(), &opts, "mem").unwrap_err();
        assert!(matches!(err, Error::MissingColumn(_)));
    }

    #[test]
    fn bad_rating_reports_line() {
        let err = read_interactions_from(
            "query_id,item_id,timestamp,rating\n1,2,3,4\n1,2,3,x\n".as_bytes(),
            &CsvOptions::default(),
            "f.csv",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn recommendations_round_trip_with_infinite_scores() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("recs.csv");
        let entries = vec![
            Recommendation { query: "u".to_string(), item: "a".to_string(), rank: 1, score: f64::INFINITY },
            Recommendation { query: "u".to_string(), item: "b".to_string(), rank: 2, score: 0.25 },
        ];
        let recs = RecommendationList::from_entries(2, entries);
        write_recommendations(&path, &recs).unwrap();
        assert_eq!(read_recommendations(&path).unwrap(), recs);
    }
}
