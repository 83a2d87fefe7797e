//! Comparison tables in two renderings: fixed-width text for the terminal
//! and comma-separated text with a one-line header for files.

/// Fixed-width text table: header row, a dashed rule, then one line per row.
/// Every row must have one cell per header.
pub fn render(headers: &[&str], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        assert_eq!(row.len(), cols, "table row width mismatch");
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for (i, h) in headers.iter().enumerate() {
        if i > 0 {
            out.push_str("  ");
        }
        out.push_str(&format!("{h:<width$}", width = widths[i]));
    }
    out.push('\n');
    for (i, w) in widths.iter().enumerate() {
        if i > 0 {
            out.push_str("  ");
        }
        out.push_str(&"-".repeat(*w));
    }
    out.push('\n');
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(&format!("{cell:<width$}", width = widths[i]));
        }
        out.push('\n');
    }
    out
}

/// The same table as comma-separated lines with a one-line header.
pub fn to_csv(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = headers.join(",");
    out.push('\n');
    for row in rows {
        assert_eq!(row.len(), headers.len(), "table row width mismatch");
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Vec<&'static str>, Vec<Vec<String>>) {
        (
            vec!["method", "oa"],
            vec![
                vec!["base".into(), "81.4".into()],
                vec!["full-method".into(), "90.1".into()],
            ],
        )
    }

    #[test]
    fn text_columns_align() {
        let (h, r) = sample();
        let text = render(&h, &r);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        // Every line is padded to the same column starts.
        assert!(lines[0].starts_with("method  "));
        assert!(lines[1].starts_with("-----------  --"));
        assert!(lines[2].starts_with("base         "));
        assert!(lines[3].starts_with("full-method  "));
    }

    #[test]
    fn csv_has_one_header_line() {
        let (h, r) = sample();
        let csv = to_csv(&h, &r);
        assert_eq!(csv, "method,oa\nbase,81.4\nfull-method,90.1\n");
    }
}
