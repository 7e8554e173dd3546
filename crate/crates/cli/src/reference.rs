//! Published reference values, embedded from `data/`.

const TABLES: [&str; 6] = [
    include_str!("../data/table1.csv"),
    include_str!("../data/table2.csv"),
    include_str!("../data/table3.csv"),
    include_str!("../data/table4.csv"),
    include_str!("../data/table5.csv"),
    include_str!("../data/table6.csv"),
];

#[derive(Debug, Clone)]
pub struct RefTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RefTable {
    pub fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("reference column {name} missing"))
    }

    pub fn text(&self, row: usize, name: &str) -> &str {
        &self.rows[row][self.col(name)]
    }

    /// Numeric cell; `None` when blank.
    pub fn num(&self, row: usize, name: &str) -> Option<f64> {
        let t = self.text(row, name).trim();
        if t.is_empty() {
            None
        } else {
            Some(t.parse().unwrap_or_else(|_| panic!("reference cell {name} = {t:?} is not numeric")))
        }
    }

    pub fn f(&self, row: usize, name: &str) -> f64 {
        self.num(row, name).unwrap_or_else(|| panic!("reference cell {name} is blank"))
    }
}

/// Table `n`, 1 to 6. Lines starting with `#` are provenance comments.
pub fn load(n: u8) -> RefTable {
    let text = TABLES[(n - 1) as usize];
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(text.as_bytes());
    let header = rdr.headers().expect("embedded header").iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.expect("embedded row").iter().map(str::to_string).collect())
        .collect();
    RefTable { header, rows }
}
