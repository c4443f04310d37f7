//! RFC-4180 CSV output for run metrics and sweep summaries. Files start with
//! one `#`-prefixed provenance line (the run config in `key=value` form),
//! followed by the CSV body: a header row and one row per record.

use smb::optimizer::RunRecord;
use std::borrow::Cow;
use std::io::Write;

/// Header of run-metrics files; one column per `RunRecord` field.
pub const RUN_HEADER: &str =
    "epoch,iter,train_loss,test_accuracy,alpha,model_step_fraction,oracle_evals,wall_time_s,diverged";

/// Quotes a field when RFC 4180 requires it (comma, quote, or newline).
pub fn csv_field(field: &str) -> Cow<'_, str> {
    if field.contains(',') || field.contains('"') || field.contains('\n') || field.contains('\r') {
        Cow::Owned(format!("\"{}\"", field.replace('"', "\"\"")))
    } else {
        Cow::Borrowed(field)
    }
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or_else(String::new, |v| v.to_string())
}

pub fn run_record_row(r: &RunRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.epoch,
        r.iter,
        r.train_loss,
        fmt_opt(r.test_accuracy),
        r.alpha,
        r.model_step_fraction,
        r.oracle_evals,
        r.wall_time_s,
        r.diverged
    )
}

/// The deterministic part of a metrics file: header plus rows with the
/// hardware-dependent wall-time column blanked. Tests compare these across
/// reruns.
pub fn run_body_without_wall_time(records: &[RunRecord]) -> String {
    let mut out = String::from(RUN_HEADER);
    out.push('\n');
    for r in records {
        let mut fields: Vec<String> =
            run_record_row(r).split(',').map(str::to_string).collect();
        fields[7] = String::new();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_run_csv(
    path: &std::path::Path,
    provenance: &str,
    records: &[RunRecord],
) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# {}", provenance)?;
    writeln!(file, "{RUN_HEADER}")?;
    for r in records {
        writeln!(file, "{}", run_record_row(r))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting_follows_rfc_4180() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }

    #[test]
    fn rows_serialize_optional_accuracy_as_empty() {
        let r = RunRecord {
            epoch: 1,
            iter: 10,
            train_loss: 0.5,
            test_accuracy: None,
            alpha: 0.1,
            model_step_fraction: 0.0,
            oracle_evals: 20,
            wall_time_s: 0.25,
            diverged: false,
        };
        assert_eq!(run_record_row(&r), "1,10,0.5,,0.1,0,20,0.25,false");
        let with_acc = RunRecord { test_accuracy: Some(0.875), ..r };
        assert!(run_record_row(&with_acc).contains(",0.875,"));
    }

    #[test]
    fn body_comparison_strips_wall_time() {
        let a = RunRecord {
            epoch: 1,
            iter: 5,
            train_loss: 1.0,
            test_accuracy: None,
            alpha: 0.1,
            model_step_fraction: 0.2,
            oracle_evals: 10,
            wall_time_s: 0.111,
            diverged: false,
        };
        let b = RunRecord { wall_time_s: 0.999, ..a.clone() };
        assert_eq!(run_body_without_wall_time(&[a]), run_body_without_wall_time(&[b]));
    }
}
