use std::fmt;

/// Twelve significant digits; non-finite values are spelled out.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_owned()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_owned()
    } else {
        format!("{x:.11e}")
    }
}

pub fn nums(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Columns padded to a common width.
    Aligned,
    /// Tab-separated, for plotting tools.
    Tabs,
}

#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    layout: Layout,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>, layout: Layout) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new(), layout }
    }

    pub fn row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        self.rows.push(cells.into_iter().map(Into::into).collect());
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines = std::iter::once(&self.header).chain(&self.rows);
        match self.layout {
            Layout::Tabs => {
                for line in lines {
                    writeln!(f, "{}", line.join("\t"))?;
                }
            }
            Layout::Aligned => {
                let columns = self.rows.iter().map(Vec::len).chain([self.header.len()]).max().unwrap_or(0);
                let widths: Vec<usize> = (0..columns)
                    .map(|c| {
                        std::iter::once(&self.header)
                            .chain(&self.rows)
                            .filter_map(|r| r.get(c))
                            .map(|s| s.chars().count())
                            .max()
                            .unwrap_or(0)
                    })
                    .collect();
                for line in lines {
                    let padded: Vec<String> =
                        line.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
                    writeln!(f, "{}", padded.join("  ").trim_end())?;
                }
            }
        }
        Ok(())
    }
}

/// Human-readable tables followed by a `---` fence and flat `key=value`
/// lines.
#[derive(Debug, Clone)]
pub struct Report {
    title: String,
    tables: Vec<Table>,
    fields: Vec<(String, String)>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), tables: Vec::new(), fields: Vec::new() }
    }

    pub fn table(&mut self, table: Table) {
        self.tables.push(table);
    }

    pub fn field(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.fields.push((key.into(), value.into()));
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.title)?;
        for table in &self.tables {
            writeln!(f)?;
            write!(f, "{table}")?;
        }
        writeln!(f, "---")?;
        for (k, v) in &self.fields {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Turns a free-form label into a `key=value` key.
pub fn key(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_have_twelve_significant_digits() {
        assert_eq!(num(15.495867768595), "1.54958677686e1");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(nums(&[1.0, 0.5]), "1.00000000000e0,5.00000000000e-1");
    }

    #[test]
    fn report_layout() {
        let mut r = Report::new("title");
        let mut t = Table::new(["a", "bb"], Layout::Aligned);
        t.row(["xyz", "1"]);
        r.table(t);
        r.field("k", "v");
        assert_eq!(r.to_string(), "title\n\na    bb\nxyz  1\n---\nk=v\n");
        assert_eq!(key("global criticality"), "global_criticality");
    }
}
