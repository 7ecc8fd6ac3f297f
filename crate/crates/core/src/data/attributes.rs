use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Number of attribute columns in the CelebA annotation file.
pub const CELEBA_ATTRIBUTE_COUNT: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeRow {
    pub image_id: String,
    /// One entry per attribute name, each 0 or 1.
    pub labels: Vec<u8>,
}

/// Attribute annotations in CelebA's `list_attr_celeba.txt` layout, with
/// the file's `-1 / 1` values re-encoded as `0 / 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeTable {
    names: Vec<String>,
    rows: Vec<AttributeRow>,
}

/// Selects an attribute column by name or by zero-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Attribute {
    Name(String),
    Index(usize),
}

impl From<&str> for Attribute {
    fn from(s: &str) -> Self {
        Attribute::Name(s.to_string())
    }
}

impl From<String> for Attribute {
    fn from(s: String) -> Self {
        Attribute::Name(s)
    }
}

impl From<usize> for Attribute {
    fn from(i: usize) -> Self {
        Attribute::Index(i)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attribute::Name(n) => f.write_str(n),
            Attribute::Index(i) => write!(f, "#{i}"),
        }
    }
}

impl AttributeTable {
    pub fn new(names: Vec<String>, rows: Vec<AttributeRow>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("attribute table has no attribute names".into()));
        }
        let mut seen = HashSet::with_capacity(rows.len());
        for row in &rows {
            if row.labels.len() != names.len() {
                return Err(Error::Shape(format!(
                    "row {} has {} labels for {} attributes",
                    row.image_id,
                    row.labels.len(),
                    names.len()
                )));
            }
            if row.labels.iter().any(|&l| l > 1) {
                return Err(Error::Domain(format!(
                    "row {} has a label outside {{0, 1}}",
                    row.image_id
                )));
            }
            if !seen.insert(row.image_id.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate image id {}",
                    row.image_id
                )));
            }
        }
        Ok(Self { names, rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses the CelebA layout: a row count, a line of attribute names, then
    /// one line per image holding the file name and one `-1`/`1` per name.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: PathBuf::from(origin),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        let (_, count_line) = lines
            .next()
            .ok_or_else(|| err(1, "missing row count".into()))?;
        let expected: usize = count_line
            .trim()
            .parse()
            .map_err(|_| err(1, format!("row count {:?} is not an integer", count_line.trim())))?;

        let (_, names_line) = lines
            .next()
            .ok_or_else(|| err(2, "missing attribute names".into()))?;
        let names: Vec<String> = names_line.split_whitespace().map(str::to_string).collect();
        if names.is_empty() {
            return Err(err(2, "no attribute names".into()));
        }

        let mut rows = Vec::with_capacity(expected);
        let mut seen = HashSet::with_capacity(expected);
        let mut last_line = 2;
        for (lineno, line) in lines {
            last_line = lineno;
            let mut tokens = line.split_whitespace();
            let Some(image_id) = tokens.next() else {
                continue;
            };
            let values: Vec<&str> = tokens.collect();
            if values.len() != names.len() {
                return Err(err(
                    lineno,
                    format!("expected {} values, found {}", names.len(), values.len()),
                ));
            }
            let labels = values
                .iter()
                .map(|tok| match *tok {
                    "1" => Ok(1u8),
                    "-1" => Ok(0u8),
                    other => Err(err(lineno, format!("value {other:?} is not -1 or 1"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if !seen.insert(image_id.to_string()) {
                return Err(err(lineno, format!("duplicate image id {image_id}")));
            }
            rows.push(AttributeRow {
                image_id: image_id.to_string(),
                labels,
            });
        }
        if rows.len() != expected {
            return Err(err(
                last_line,
                format!("header declares {expected} rows, file holds {}", rows.len()),
            ));
        }
        Ok(Self { names, rows })
    }

    /// Serializes back to the CelebA layout (0 written as -1).
    pub fn to_celeba_string(&self) -> String {
        let mut out = format!("{}\n{}\n", self.rows.len(), self.names.join(" "));
        for row in &self.rows {
            out.push_str(&row.image_id);
            for &l in &row.labels {
                out.push_str(if l == 1 { " 1" } else { " -1" });
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_celeba_string()).map_err(|e| Error::io(path, e))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[AttributeRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn resolve(&self, attribute: &Attribute) -> Result<usize> {
        match attribute {
            Attribute::Index(i) if *i < self.names.len() => Ok(*i),
            Attribute::Index(i) => Err(Error::Config(format!(
                "attribute index {i} out of range (table has {} attributes)",
                self.names.len()
            ))),
            Attribute::Name(name) => self.names.iter().position(|n| n == name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown attribute {name:?}; valid names: {}",
                    self.names.join(", ")
                ))
            }),
        }
    }

    /// The selected attribute's label for every row, in row order.
    pub fn labels(&self, attribute: &Attribute) -> Result<Vec<u8>> {
        let col = self.resolve(attribute)?;
        Ok(self.rows.iter().map(|r| r.labels[col]).collect())
    }

    /// Rows whose image id is in `ids`, keeping table order.
    pub fn subset(&self, ids: &[String]) -> Self {
        let keep: HashSet<&str> = ids.iter().map(String::as_str).collect();
        Self {
            names: self.names.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| keep.contains(r.image_id.as_str()))
                .cloned()
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<AttributeTable> {
        AttributeTable::parse(text, Path::new("fixture.txt"))
    }

    fn celeba_names() -> String {
        (0..CELEBA_ATTRIBUTE_COUNT)
            .map(|i| format!("Attr{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn parses_two_row_fixture() {
        let row_a: Vec<&str> = (0..40).map(|i| if i % 2 == 0 { "-1" } else { "1" }).collect();
        let row_b: Vec<&str> = (0..40).map(|i| if i < 3 { "1" } else { "-1" }).collect();
        let text = format!(
            "2\n{}\n000001.jpg {}\n000002.jpg  {}\n",
            celeba_names(),
            row_a.join(" "),
            row_b.join("  ")
        );
        let table = parse(&text).unwrap();
        assert_eq!(table.names().len(), 40);
        assert_eq!(table.rows()[0].image_id, "000001.jpg");
        let expect_a: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let expect_b: Vec<u8> = (0..40).map(|i| u8::from(i < 3)).collect();
        assert_eq!(table.rows()[0].labels, expect_a);
        assert_eq!(table.rows()[1].labels, expect_b);
    }

    #[test]
    fn all_positive_file_gives_all_ones() {
        let ones = vec!["1"; 40].join(" ");
        let text = format!("3\n{}\na.jpg {ones}\nb.jpg {ones}\nc.jpg {ones}\n", celeba_names());
        let table = parse(&text).unwrap();
        assert!(table.rows().iter().all(|r| r.labels.iter().all(|&l| l == 1)));
    }

    #[test]
    fn short_row_reports_its_line() {
        let ones = vec!["1"; 40].join(" ");
        let short = vec!["1"; 39].join(" ");
        let text = format!("2\n{}\na.jpg {ones}\nb.jpg {short}\n", celeba_names());
        match parse(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_token_and_bad_count() {
        let text = "1\nA B\nx.jpg 1 0\n";
        assert!(matches!(parse(text), Err(Error::Parse { line: 3, .. })));
        let text = "3\nA B\nx.jpg 1 -1\n";
        assert!(matches!(parse(text), Err(Error::Parse { .. })));
        let text = "two\nA B\n";
        assert!(matches!(parse(text), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn unknown_attribute_lists_names() {
        let table = parse("1\nSmiling Male\na.jpg 1 -1\n").unwrap();
        let msg = table.resolve(&"Hat".into()).unwrap_err().to_string();
        assert!(msg.contains("Smiling") && msg.contains("Male"));
        assert_eq!(table.resolve(&"Male".into()).unwrap(), 1);
        assert_eq!(table.labels(&1usize.into()).unwrap(), vec![0]);
    }

    proptest! {
        #[test]
        fn serialization_reproduces_token_stream(
            labels in prop::collection::vec(prop::collection::vec(0u8..2, 40), 1..12)
        ) {
            let rows: Vec<String> = labels
                .iter()
                .enumerate()
                .map(|(i, ls)| {
                    let vals: Vec<&str> = ls.iter().map(|&l| if l == 1 { "1" } else { "-1" }).collect();
                    format!("{i:06}.jpg   {}", vals.join("  "))
                })
                .collect();
            let text = format!("{}\n{}\n{}\n", rows.len(), celeba_names(), rows.join("\n"));
            let table = parse(&text).unwrap();
            let tokens = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
            prop_assert_eq!(tokens(&table.to_celeba_string()), tokens(&text));
        }
    }
}
