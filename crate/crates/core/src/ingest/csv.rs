use std::io::Read;

use super::IngestError;

/// A parsed comma-separated table with uniform arity.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Source identity (file name or `<stream>`).
    pub source: String,
    /// 1-based line number on which each row starts.
    pub row_lines: Vec<usize>,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Parses CSV with double-quote quoting and `""` escapes. Quoted cells may
/// contain commas and newlines. Blank lines are skipped.
pub fn parse_csv<R: Read>(mut input: R, has_header: bool) -> Result<RawTable, IngestError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let records = split_records(&text)?;

    let mut columns = Vec::new();
    let mut rows = Vec::new();
    let mut row_lines = Vec::new();
    let mut arity: Option<usize> = None;

    for (line, cells) in records {
        match arity {
            None => {
                arity = Some(cells.len());
                if has_header {
                    columns = cells;
                    continue;
                }
                columns = (0..cells.len()).map(|i| format!("c{i}")).collect();
            }
            Some(expected) if cells.len() != expected => {
                return Err(IngestError::FieldCountMismatch {
                    line,
                    expected,
                    found: cells.len(),
                });
            }
            Some(_) => {}
        }
        rows.push(cells);
        row_lines.push(line);
    }

    Ok(RawTable {
        columns,
        rows,
        source: "<stream>".to_string(),
        row_lines,
    })
}

fn split_records(text: &str) -> Result<Vec<(usize, Vec<String>)>, IngestError> {
    let mut out = Vec::new();
    let mut cells: Vec<String> = Vec::new();
    let mut cell = String::new();
    let mut in_quotes = false;
    let mut line = 1usize;
    let mut record_line = 1usize;
    let mut quote_line = 0usize;
    let mut record_has_content = false;

    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if in_quotes {
            match c {
                '"' if chars.peek() == Some(&'"') => {
                    chars.next();
                    cell.push('"');
                }
                '"' => in_quotes = false,
                '\n' => {
                    line += 1;
                    cell.push('\n');
                }
                _ => cell.push(c),
            }
            continue;
        }
        match c {
            '"' if cell.is_empty() => {
                in_quotes = true;
                quote_line = line;
                record_has_content = true;
            }
            ',' => {
                cells.push(std::mem::take(&mut cell));
                record_has_content = true;
            }
            '\r' if chars.peek() == Some(&'\n') => {}
            '\n' => {
                if record_has_content || !cell.is_empty() {
                    cells.push(std::mem::take(&mut cell));
                    out.push((record_line, std::mem::take(&mut cells)));
                }
                record_has_content = false;
                line += 1;
                record_line = line;
            }
            _ => {
                cell.push(c);
                record_has_content = true;
            }
        }
    }
    if in_quotes {
        return Err(IngestError::UnbalancedQuote { line: quote_line });
    }
    if record_has_content || !cell.is_empty() {
        cells.push(cell);
        out.push((record_line, cells));
    }
    Ok(out)
}

/// Quotes a cell when it contains a separator, quote or newline.
pub(crate) fn escape_cell(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_one_row() {
        let t = parse_csv("a,b\n1,2\n".as_bytes(), true).unwrap();
        assert_eq!(t.columns, vec!["a", "b"]);
        assert_eq!(t.rows, vec![vec!["1", "2"]]);
        assert_eq!(t.row_lines, vec![2]);
    }

    #[test]
    fn short_row_is_arity_error() {
        let err = parse_csv("a,b\n1\n".as_bytes(), true).unwrap_err();
        assert_eq!(
            err,
            IngestError::FieldCountMismatch {
                line: 2,
                expected: 2,
                found: 1
            }
        );
    }

    #[test]
    fn quoted_comma_stays_in_cell() {
        let t = parse_csv("a,b\n\"x,y\",2\n".as_bytes(), true).unwrap();
        assert_eq!(t.rows[0][0], "x,y");
        assert_eq!(t.rows[0][1], "2");
    }

    #[test]
    fn doubled_quote_escape_and_embedded_newline() {
        let t = parse_csv("a\n\"say \"\"hi\"\"\nthere\"\nz\n".as_bytes(), true).unwrap();
        assert_eq!(t.rows[0][0], "say \"hi\"\nthere");
        assert_eq!(t.rows[1][0], "z");
        assert_eq!(t.row_lines, vec![2, 4]);
    }

    #[test]
    fn unbalanced_quote_is_reported() {
        let err = parse_csv("a,b\n\"open,2\n".as_bytes(), true).unwrap_err();
        assert_eq!(err, IngestError::UnbalancedQuote { line: 2 });
    }

    #[test]
    fn headerless_gets_positional_names() {
        let t = parse_csv("1,2,3\n4,5,6".as_bytes(), false).unwrap();
        assert_eq!(t.columns, vec!["c0", "c1", "c2"]);
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn empty_trailing_cell_kept() {
        let t = parse_csv("a,b\n1,\n".as_bytes(), true).unwrap();
        assert_eq!(t.rows[0], vec!["1", ""]);
    }

    #[test]
    fn escape_round_trips_through_parser() {
        let cells = ["plain", "with,comma", "with \"quote\"", "multi\nline"];
        let line = cells.iter().map(|c| escape_cell(c)).collect::<Vec<_>>().join(",");
        let t = parse_csv(line.as_bytes(), false).unwrap();
        assert_eq!(t.rows[0], cells);
    }
}
