//! Plain-text tables for the stdout summaries the commands print.

/// Renders a padded table: left-aligned first column, right-aligned rest.
pub fn render(headers: &[&str], rows: &[Vec<String>]) -> String {
    let columns = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        debug_assert_eq!(row.len(), columns);
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    push_row(&mut out, &widths, headers.iter().copied());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    push_row(&mut out, &widths, rule.iter().map(|s| s.as_str()));
    for row in rows {
        push_row(&mut out, &widths, row.iter().map(|s| s.as_str()));
    }
    out
}

fn push_row<'a>(out: &mut String, widths: &[usize], cells: impl Iterator<Item = &'a str>) {
    for (i, (cell, &w)) in cells.zip(widths).enumerate() {
        if i > 0 {
            out.push_str("  ");
        }
        if i == 0 {
            out.push_str(&format!("{cell:<w$}"));
        } else {
            out.push_str(&format!("{cell:>w$}"));
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out.push('\n');
}

/// Formats a hit rate as a percentage with two decimals.
pub fn fmt_rate(rate: f64) -> String {
    format!("{:.2}%", rate * 100.0)
}

/// Formats a signed error in percentage points.
pub fn fmt_pp(pp: f64) -> String {
    format!("{pp:+.2}pp")
}
