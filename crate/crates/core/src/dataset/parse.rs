use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One raw interaction event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_ref: String,
    pub item_ref: String,
    pub rating: f64,
    pub timestamp: i64,
}

/// Column layout of a delimited interaction log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseConfig {
    pub user_col: String,
    pub item_col: String,
    /// `None` for implicit logs without a rating column; every row then gets rating 1.
    pub rating_col: Option<String>,
    pub time_col: String,
    pub delimiter: u8,
    /// Without a header row, columns are named by 0-based position (`"0"`, `"1"`, ...).
    pub has_header: bool,
    /// Number of malformed rows tolerated (and skipped) before parsing fails.
    pub max_malformed: usize,
}

impl Default for ParseConfig {
    fn default() -> Self {
        ParseConfig {
            user_col: "userId".into(),
            item_col: "movieId".into(),
            rating_col: Some("rating".into()),
            time_col: "timestamp".into(),
            delimiter: b',',
            has_header: true,
            max_malformed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub interactions: Vec<Interaction>,
    /// Rows skipped as malformed (always within the configured tolerance).
    pub malformed: usize,
}

fn column(headers: Option<&csv::StringRecord>, name: &str) -> Result<usize> {
    match headers {
        Some(headers) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("missing column `{name}` in header"))),
        None => name
            .parse()
            .map_err(|_| Error::Config(format!("without a header, columns are positions; got `{name}`"))),
    }
}

/// Parses a delimited UTF-8 log.
pub fn parse_interactions<R: Read>(source: R, config: &ParseConfig) -> Result<ParseOutcome> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .has_headers(config.has_header)
        .flexible(!config.has_header)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header_row = if config.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| Error::Parse {
                    line: 1,
                    message: e.to_string(),
                })?
                .clone(),
        )
    } else {
        None
    };
    let headers = header_row.as_ref();
    let user_idx = column(headers, &config.user_col)?;
    let item_idx = column(headers, &config.item_col)?;
    let rating_idx = config
        .rating_col
        .as_deref()
        .map(|c| column(headers, c))
        .transpose()?;
    let time_idx = column(headers, &config.time_col)?;

    let mut interactions = Vec::new();
    let mut malformed = 0usize;
    let mut first_error: Option<(u64, String)> = None;
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(line, |p| p.line());
                match parse_row(&record, user_idx, item_idx, rating_idx, time_idx) {
                    Ok(i) => interactions.push(i),
                    Err(message) => {
                        malformed += 1;
                        first_error.get_or_insert((line, message));
                    }
                }
            }
            Err(e) => {
                let line = e.position().map_or(line, |p| p.line());
                malformed += 1;
                first_error.get_or_insert((line, e.to_string()));
                if !matches!(e.kind(), csv::ErrorKind::UnequalLengths { .. }) {
                    // unrecoverable stream error (e.g. invalid UTF-8 / I/O)
                    let (line, message) = first_error.expect("just set");
                    return Err(Error::Parse { line, message });
                }
            }
        }
        if malformed > config.max_malformed {
            let (first_line, first_message) = first_error.clone().expect("error recorded");
            if config.max_malformed == 0 {
                return Err(Error::Parse {
                    line: first_line,
                    message: first_message,
                });
            }
            return Err(Error::TooManyMalformed {
                malformed,
                tolerance: config.max_malformed,
                first_line,
                first_message,
            });
        }
    }
    if malformed > 0 {
        log::warn!("skipped {malformed} malformed row(s)");
    }
    Ok(ParseOutcome {
        interactions,
        malformed,
    })
}

fn parse_row(
    record: &csv::StringRecord,
    user_idx: usize,
    item_idx: usize,
    rating_idx: Option<usize>,
    time_idx: usize,
) -> std::result::Result<Interaction, String> {
    let field = |i: usize, name: &str| {
        record
            .get(i)
            .ok_or_else(|| format!("missing field `{name}`"))
    };
    let user_ref = field(user_idx, "user")?;
    let item_ref = field(item_idx, "item")?;
    if user_ref.is_empty() || item_ref.is_empty() {
        return Err("empty user or item identifier".into());
    }
    let rating = match rating_idx {
        Some(i) => {
            let raw = field(i, "rating")?;
            let r: f64 = raw
                .parse()
                .map_err(|_| format!("non-numeric rating `{raw}`"))?;
            if !r.is_finite() {
                return Err(format!("non-finite rating `{raw}`"));
            }
            r
        }
        None => 1.0,
    };
    let raw_t = field(time_idx, "timestamp")?;
    let timestamp: i64 = raw_t
        .parse()
        .map_err(|_| format!("non-numeric timestamp `{raw_t}`"))?;
    if timestamp < 0 {
        return Err(format!("negative timestamp {timestamp}"));
    }
    Ok(Interaction {
        user_ref: user_ref.to_string(),
        item_ref: item_ref.to_string(),
        rating,
        timestamp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ParseOutcome> {
        parse_interactions(text.as_bytes(), &ParseConfig::default())
    }

    #[test]
    fn movielens_row_maps_fields() {
        let out = parse("userId,movieId,rating,timestamp\n1,31,2.5,1112486027\n").unwrap();
        assert_eq!(
            out.interactions,
            vec![Interaction {
                user_ref: "1".into(),
                item_ref: "31".into(),
                rating: 2.5,
                timestamp: 1112486027,
            }]
        );
    }

    #[test]
    fn header_only_is_empty() {
        let out = parse("userId,movieId,rating,timestamp\n").unwrap();
        assert!(out.interactions.is_empty());
        assert_eq!(out.malformed, 0);
    }

    #[test]
    fn bad_rating_names_line_two() {
        let err = parse("userId,movieId,rating,timestamp\n1,31,abc,5\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("rating"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_config_error() {
        let err = parse("user,movieId,rating,timestamp\n1,2,3,4\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn tolerance_counts_malformed_rows() {
        let text = "userId,movieId,rating,timestamp\n1,2,4,5\n1,x,y,z\n1,3,5\n2,2,4,9\n";
        let cfg = ParseConfig {
            max_malformed: 2,
            ..ParseConfig::default()
        };
        let out = parse_interactions(text.as_bytes(), &cfg).unwrap();
        assert_eq!(out.interactions.len(), 2);
        assert_eq!(out.malformed, 2);

        let strict = ParseConfig {
            max_malformed: 1,
            ..ParseConfig::default()
        };
        let err = parse_interactions(text.as_bytes(), &strict).unwrap_err();
        assert!(matches!(
            err,
            Error::TooManyMalformed {
                malformed: 2,
                first_line: 3,
                ..
            }
        ));
    }

    #[test]
    fn custom_delimiter_and_no_rating_column() {
        let cfg = ParseConfig {
            user_col: "u".into(),
            item_col: "i".into(),
            rating_col: None,
            time_col: "t".into(),
            delimiter: b'\t',
            has_header: true,
            max_malformed: 0,
        };
        let out = parse_interactions("u\ti\tt\nalice\tbook\t7\n".as_bytes(), &cfg).unwrap();
        assert_eq!(out.interactions[0].rating, 1.0);
        assert_eq!(out.interactions[0].item_ref, "book");
    }

    #[test]
    fn headerless_columns_by_position() {
        let cfg = ParseConfig {
            user_col: "0".into(),
            item_col: "1".into(),
            rating_col: Some("2".into()),
            time_col: "3".into(),
            has_header: false,
            ..ParseConfig::default()
        };
        let out = parse_interactions("A1,B9,5.0,1000\nA2,B9,3.0,999\n".as_bytes(), &cfg).unwrap();
        assert_eq!(out.interactions.len(), 2);
        assert_eq!(out.interactions[1].user_ref, "A2");
        assert_eq!(out.interactions[1].timestamp, 999);
        let named = ParseConfig {
            has_header: false,
            ..ParseConfig::default()
        };
        assert!(matches!(
            parse_interactions("1,2,3,4\n".as_bytes(), &named),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn negative_timestamp_rejected() {
        assert!(matches!(
            parse("userId,movieId,rating,timestamp\n1,2,4,-3\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
