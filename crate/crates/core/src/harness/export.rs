use super::{ErrorMatrix, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// One row per chart, one column per dataset; each cell is the total
    /// finding count over the conditions that ran, blank if none ran.
    Csv,
    /// The whole matrix with per-cell reports.
    Json,
}

pub fn export_matrix(matrix: &ErrorMatrix, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(matrix).expect("matrix serializes");
            out.push(b'\n');
            out
        }
        ExportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            let header = std::iter::once("chart").chain(matrix.datasets.iter().map(String::as_str));
            w.write_record(header).expect("in-memory write");
            for chart in &matrix.charts {
                let mut row = vec![chart.clone()];
                for dataset in &matrix.datasets {
                    let totals: Vec<usize> = matrix
                        .cells
                        .iter()
                        .filter(|c| &c.chart == chart && &c.dataset == dataset)
                        .filter_map(|c| c.total_errors())
                        .collect();
                    row.push(if totals.is_empty() {
                        String::new()
                    } else {
                        totals.iter().sum::<usize>().to_string()
                    });
                }
                w.write_record(&row).expect("in-memory write");
            }
            w.into_inner().expect("in-memory flush")
        }
    }
}

pub fn import_matrix(bytes: &[u8]) -> Result<ErrorMatrix, HarnessError> {
    serde_json::from_slice(bytes).map_err(|e| HarnessError::Import(e.to_string()))
}
