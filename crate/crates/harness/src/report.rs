//! Result reporting: CSV export, plain-text summaries, and the reference
//! testbed measurements used to sanity-check relative behavior.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

use crate::bench::BenchResult;
use crate::testcase::TestCase;
use crate::variant::Variant;

/// Mean total time per scenario, in milliseconds, observed on the reference
/// edge testbed (Raspberry Pi class hardware). Useful for comparing the
/// *shape* of results — absolute numbers depend entirely on the host.
pub const REFERENCE_TESTBED_MS: [(Variant, [f64; 5]); 5] = [
    (Variant::Conventional, [0.741, 3.201, 143.140, 155.388, 331.083]),
    (Variant::NoBc, [2.258, 4.180, 179.329, 490.825, 409.311]),
    (Variant::NoBcX4, [5.636, 6.645, 262.942, 1174.277, 716.013]),
    (Variant::ZtaBc, [2.407, 4.143, 180.462, 510.444, 416.399]),
    (Variant::ZtaBcX4, [6.349, 6.635, 266.591, 1239.961, 721.760]),
];

pub fn reference_ms(variant: Variant, case: TestCase) -> f64 {
    let index = TestCase::ALL.iter().position(|&c| c == case).expect("case is in ALL");
    REFERENCE_TESTBED_MS
        .iter()
        .find(|(v, _)| *v == variant)
        .map(|(_, row)| row[index])
        .expect("variant is in the table")
}

/// Writes results in long form: one row per individual run.
pub fn write_csv<W: Write>(results: &[BenchResult], writer: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["variant", "case", "engines", "run", "duration_ms"])?;
    for cell in results {
        for (run, duration) in cell.runs_ms.iter().enumerate() {
            out.write_record([
                cell.variant.label().to_string(),
                cell.case.label().to_string(),
                cell.engine_count.to_string(),
                run.to_string(),
                format!("{duration:.3}"),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Errors raised while reading back an exported results CSV.
#[derive(Debug, Error)]
pub enum ReadCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

/// Reads a long-form results CSV (as produced by [`write_csv`]) back into
/// per-cell results. Rows are grouped by (variant, case, engines) in
/// first-seen order; runs keep their file order.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<BenchResult>, ReadCsvError> {
    let mut input = csv::Reader::from_reader(reader);
    let mut cells: Vec<BenchResult> = Vec::new();
    for (index, record) in input.records().enumerate() {
        let record = record?;
        let row = index + 2; // 1-based line number, past the header
        let bad = |message: String| ReadCsvError::Row { row, message };
        if record.len() < 5 {
            return Err(bad(format!("expected 5 columns, found {}", record.len())));
        }
        let variant = record[0].parse::<Variant>().map_err(|e| bad(e.to_string()))?;
        let case = record[1].parse::<TestCase>().map_err(|e| bad(e.to_string()))?;
        let engine_count = record[2]
            .parse::<usize>()
            .map_err(|_| bad(format!("invalid engine count `{}`", &record[2])))?;
        let duration = record[4]
            .parse::<f64>()
            .map_err(|_| bad(format!("invalid duration `{}`", &record[4])))?;
        let cell = cells
            .iter_mut()
            .find(|c| c.variant == variant && c.case == case && c.engine_count == engine_count);
        match cell {
            Some(cell) => cell.runs_ms.push(duration),
            None => cells.push(BenchResult { variant, case, engine_count, runs_ms: vec![duration] }),
        }
    }
    Ok(cells)
}

fn mean_table(results: &[BenchResult]) -> BTreeMap<(Variant, TestCase), f64> {
    results.iter().map(|cell| ((cell.variant, cell.case), cell.mean_ms())).collect()
}

/// Renders an aligned table of mean durations (rows: variants, columns:
/// cases) followed by the ratio lines that characterize the architecture.
pub fn render_summary(results: &[BenchResult]) -> String {
    let means = mean_table(results);
    let variants: Vec<Variant> =
        Variant::ALL.into_iter().filter(|v| means.keys().any(|(mv, _)| mv == v)).collect();
    let cases: Vec<TestCase> =
        TestCase::ALL.into_iter().filter(|c| means.keys().any(|(_, mc)| mc == c)).collect();

    let mut out = String::new();
    out.push_str(&format!("{:<14}", "variant"));
    for case in &cases {
        out.push_str(&format!("{:>12}", case.label()));
    }
    out.push('\n');
    for variant in &variants {
        out.push_str(&format!("{:<14}", variant.label()));
        for case in &cases {
            match means.get(&(*variant, *case)) {
                Some(ms) => out.push_str(&format!("{ms:>12.3}")),
                None => out.push_str(&format!("{:>12}", "-")),
            }
        }
        out.push('\n');
    }

    let ratio = |a: Option<&f64>, b: Option<&f64>| -> Option<f64> {
        match (a, b) {
            (Some(&a), Some(&b)) if b > 0.0 => Some(a / b),
            _ => None,
        }
    };

    let mut lines = Vec::new();
    for variant in &variants {
        if let Some(r) = ratio(
            means.get(&(*variant, TestCase::Tc4)),
            means.get(&(*variant, TestCase::Tc3)),
        ) {
            lines.push(format!("  {} TC4/TC3 = {r:.2}", variant.label()));
        }
    }
    for case in &cases {
        if let Some(r) =
            ratio(means.get(&(Variant::ZtaBc, *case)), means.get(&(Variant::NoBc, *case)))
        {
            lines.push(format!("  {} ZTA_BC/NO_BC = {r:.3}", case.label()));
        }
    }
    for (x4, base) in [(Variant::NoBcX4, Variant::NoBc), (Variant::ZtaBcX4, Variant::ZtaBc)] {
        for case in &cases {
            if let Some(r) = ratio(means.get(&(x4, *case)), means.get(&(base, *case))) {
                lines.push(format!("  {} {}/{} = {:.2}", case.label(), x4.label(), base.label(), r));
            }
        }
    }
    if !lines.is_empty() {
        out.push_str("\nratios:\n");
        for line in lines {
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

/// Renders the reference testbed measurements in the same tabular shape.
pub fn render_reference() -> String {
    let mut out = String::new();
    out.push_str("reference testbed measurements (mean ms per scenario)\n");
    out.push_str(&format!("{:<14}", "variant"));
    for case in TestCase::ALL {
        out.push_str(&format!("{:>12}", case.label()));
    }
    out.push('\n');
    for (variant, row) in REFERENCE_TESTBED_MS {
        out.push_str(&format!("{:<14}", variant.label()));
        for ms in row {
            out.push_str(&format!("{ms:>12.3}"));
        }
        out.push('\n');
    }
    out
}
