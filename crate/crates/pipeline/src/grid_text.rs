use softsql_core::{ResultGrid, SqlValue};

fn cell(v: &SqlValue) -> String {
    // Tabs and newlines inside a value would break the table shape.
    v.to_string().replace(['\t', '\n', '\r'], " ")
}

/// Plain-text table: a tab-separated header row, then one line per row in
/// grid order. NULL renders as `NULL`. An empty grid is the header alone.
pub fn render_grid(grid: &ResultGrid) -> String {
    let mut out = grid.columns().iter().map(|c| c.replace(['\t', '\n', '\r'], " ")).collect::<Vec<_>>().join("\t");
    for row in grid.rows() {
        out.push('\n');
        out.push_str(&row.iter().map(cell).collect::<Vec<_>>().join("\t"));
    }
    out
}
