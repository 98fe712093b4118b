use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use super::{Click, Polarity};
use crate::{Error, Result};

/// Clicks recorded for one image, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct ClickGroup {
    pub image_id: String,
    pub clicks: Vec<Click>,
}

#[derive(Deserialize)]
struct Row {
    image_id: String,
    x: f64,
    y: f64,
    polarity: String,
}

/// Reads an `image_id,x,y,polarity` CSV. Groups keep the order in which
/// their image ids first appear.
pub fn load_external_clicks(path: &Path, radius: f64) -> Result<Vec<ClickGroup>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_external_clicks(file, path, radius)
}

pub fn parse_external_clicks(reader: impl Read, path: &Path, radius: f64) -> Result<Vec<ClickGroup>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["image_id", "x", "y", "polarity"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            message: format!("expected header {}, found {:?}", expected.join(","), headers),
        });
    }

    let mut groups: Vec<ClickGroup> = Vec::new();
    for record in rdr.records() {
        let fail = |line: u64, message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            fail(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: Row = record
            .deserialize(Some(&headers))
            .map_err(|e| fail(line, e.to_string()))?;
        let polarity = match row.polarity.as_str() {
            "positive" => Polarity::Positive,
            "negative" => Polarity::Negative,
            other => return Err(fail(line, format!("unknown polarity {other:?}"))),
        };
        if !row.x.is_finite() || !row.y.is_finite() {
            return Err(fail(line, "non-finite coordinate".into()));
        }
        let click = Click {
            x: row.x,
            y: row.y,
            polarity,
            radius,
        };
        match groups.iter_mut().find(|g| g.image_id == row.image_id) {
            Some(g) => g.clicks.push(click),
            None => groups.push(ClickGroup {
                image_id: row.image_id,
                clicks: vec![click],
            }),
        }
    }
    Ok(groups)
}
