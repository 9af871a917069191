use std::collections::HashMap;
use std::path::Path;
use std::process::Command;

use super::ModelAdapter;
use crate::dataset::{Dataset, VarId};
use crate::error::{Error, Result};

/// A classifier living in another process.
///
/// Each batch is written as a headed CSV to a temporary file, the command is
/// run as `command... --predict in.csv out.csv`, and `out.csv` must hold one
/// label per line, LF-terminated, line `i` answering row `i`.
#[derive(Clone, Debug)]
pub struct ExternalModel {
    command: Vec<String>,
    labels: Vec<String>,
    features: Vec<String>,
}

impl ExternalModel {
    /// `labels` is the fixed label set the process may emit. `features`
    /// selects and orders the columns sent; empty sends every column.
    pub fn new(command: Vec<String>, labels: Vec<String>, features: Vec<String>) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::Config("external model command is empty".into()));
        }
        if labels.is_empty() {
            return Err(Error::Config(
                "external model needs a declared label set".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::Config(format!("duplicate label `{dup}`")));
        }
        Ok(ExternalModel {
            command,
            labels,
            features,
        })
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    fn payload(&self, data: &Dataset) -> Result<Dataset> {
        if self.features.is_empty() {
            return Ok(data.clone());
        }
        let cols = self
            .features
            .iter()
            .map(|f| {
                data.index_of(f)
                    .ok_or_else(|| Error::Model(format!("input lacks feature `{f}`")))
            })
            .collect::<Result<Vec<VarId>>>()?;
        Ok(data.select_columns(&cols))
    }

    fn parse_output(&self, text: &str, expected: usize) -> Result<Vec<String>> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        let lines: Vec<&str> = if body.is_empty() && expected == 0 {
            Vec::new()
        } else {
            body.split('\n').collect()
        };
        if lines.len() != expected {
            return Err(Error::Model(format!(
                "external model returned {} labels for {expected} rows",
                lines.len()
            )));
        }
        let known: HashMap<&str, ()> = self.labels.iter().map(|l| (l.as_str(), ())).collect();
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let l = l.strip_suffix('\r').unwrap_or(l);
                if known.contains_key(l) {
                    Ok(l.to_string())
                } else {
                    Err(Error::Model(format!(
                        "row {i}: external model emitted undeclared label `{l}`"
                    )))
                }
            })
            .collect()
    }
}

fn read_output(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|_| Error::Model("external model output is not UTF-8".into()))
}

impl ModelAdapter for ExternalModel {
    fn predict_batch(&self, data: &Dataset) -> Result<Vec<String>> {
        let payload = self.payload(data)?;
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let input = dir.path().join("in.csv");
        let output = dir.path().join("out.csv");
        payload.write_csv(&input)?;

        let result = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg("--predict")
            .arg(&input)
            .arg(&output)
            .output()
            .map_err(|e| Error::Model(format!("cannot run `{}`: {e}", self.command[0])))?;
        if !result.status.success() {
            let stderr = String::from_utf8_lossy(&result.stderr);
            return Err(Error::Model(format!(
                "external model exited with {}: {}",
                result.status,
                stderr.trim()
            )));
        }
        let text = read_output(&output).map_err(|e| {
            Error::Model(format!("external model produced no readable output: {e}"))
        })?;
        self.parse_output(&text, data.n_rows())
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn feature_names(&self) -> Vec<String> {
        self.features.clone()
    }

    fn concurrency_safe(&self) -> bool {
        false
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use crate::dataset::Variable;
    use std::os::unix::fs::PermissionsExt;

    fn stub(dir: &Path, body: &str) -> Vec<String> {
        let path = dir.join("stub.sh");
        std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
        vec![path.to_string_lossy().into_owned()]
    }

    fn data(n: usize) -> Dataset {
        let rows: Vec<Vec<u32>> = (0..n).map(|i| vec![(i % 2) as u32, 0]).collect();
        Dataset::from_rows(vec![Variable::binary("a"), Variable::binary("b")], &rows).unwrap()
    }

    fn labels() -> Vec<String> {
        vec!["no".into(), "yes".into()]
    }

    #[test]
    fn constant_stub() {
        let dir = tempfile::tempdir().unwrap();
        // skip the header, print one constant label per row
        let cmd = stub(dir.path(), r#"tail -n +2 "$2" | sed 's/.*/yes/' > "$3""#);
        let m = ExternalModel::new(cmd, labels(), vec![]).unwrap();
        assert_eq!(m.predict_batch(&data(5)).unwrap(), vec!["yes"; 5]);
        assert!(!m.concurrency_safe());
    }

    #[test]
    fn echoes_a_feature() {
        let dir = tempfile::tempdir().unwrap();
        let cmd = stub(
            dir.path(),
            r#"tail -n +2 "$2" | cut -d, -f1 | sed 's/^0$/no/;s/^1$/yes/' > "$3""#,
        );
        let m = ExternalModel::new(cmd, labels(), vec!["a".into()]).unwrap();
        assert_eq!(m.predict_batch(&data(3)).unwrap(), vec!["no", "yes", "no"]);
    }

    #[test]
    fn short_output_is_row_count_error() {
        let dir = tempfile::tempdir().unwrap();
        let cmd = stub(dir.path(), r#"tail -n +3 "$2" | sed 's/.*/yes/' > "$3""#);
        let m = ExternalModel::new(cmd, labels(), vec![]).unwrap();
        let err = m.predict_batch(&data(4)).unwrap_err().to_string();
        assert!(err.contains("3 labels for 4 rows"), "{err}");
    }

    #[test]
    fn nonzero_exit_carries_stderr() {
        let dir = tempfile::tempdir().unwrap();
        let cmd = stub(dir.path(), "echo boom >&2; exit 3");
        let m = ExternalModel::new(cmd, labels(), vec![]).unwrap();
        let err = m.predict_batch(&data(2)).unwrap_err().to_string();
        assert!(err.contains("boom"), "{err}");
    }

    #[test]
    fn undeclared_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cmd = stub(dir.path(), r#"tail -n +2 "$2" | sed 's/.*/maybe/' > "$3""#);
        let m = ExternalModel::new(cmd, labels(), vec![]).unwrap();
        assert!(matches!(m.predict_batch(&data(2)), Err(Error::Model(_))));
    }
}
