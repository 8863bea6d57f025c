use std::path::Path;

use super::{Split, TaskError, TaskSpec, TrainingExample, TrainingTable};

/// Contents of a training-table CSV without task metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ExamplesFile {
    pub link_level: bool,
    pub examples: Vec<TrainingExample>,
}

const NODE_HEADER: [&str; 3] = ["EntityID", "Time", "Label"];
const LINK_HEADER: [&str; 4] = ["SourceEntityID", "TargetEntityID", "Time", "Label"];

/// Writes `EntityID,Time,Label` (or the four-column link layout when any
/// example has a target). Times are epoch seconds.
pub fn write_table(tt: &TrainingTable, path: &Path) -> Result<(), TaskError> {
    let err = |e: csv::Error| TaskError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let link = tt.is_link_level();
    if link {
        w.write_record(LINK_HEADER).map_err(err)?;
    } else {
        w.write_record(NODE_HEADER).map_err(err)?;
    }
    for e in &tt.examples {
        let mut rec = vec![e.entity.to_string()];
        if link {
            rec.push(e.target.map(|t| t.to_string()).unwrap_or_default());
        }
        rec.push(e.time.to_string());
        rec.push(e.label.to_string());
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| TaskError::Io(path.display().to_string(), e))
}

pub fn read_examples(path: &Path) -> Result<ExamplesFile, TaskError> {
    let malformed = |message: String| TaskError::Malformed {
        path: path.display().to_string(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| malformed(e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let link_level = if header == NODE_HEADER {
        false
    } else if header == LINK_HEADER {
        true
    } else {
        return Err(malformed(format!("unexpected header {header:?}")));
    };
    let mut examples = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let int = |j: usize| {
            field(j)
                .parse::<i64>()
                .map_err(|_| malformed(format!("line {}: bad integer '{}'", i + 2, field(j))))
        };
        let (entity, target, tcol) = if link_level {
            (int(0)?, Some(int(1)?), 2)
        } else {
            (int(0)?, None, 1)
        };
        let time = int(tcol)?;
        let label = field(tcol + 1)
            .parse::<f64>()
            .map_err(|_| malformed(format!("line {}: bad label '{}'", i + 2, field(tcol + 1))))?;
        examples.push(TrainingExample {
            entity,
            target,
            time,
            label,
        });
    }
    Ok(ExamplesFile { link_level, examples })
}

pub fn read_table(path: &Path, spec: &TaskSpec, split: Split) -> Result<TrainingTable, TaskError> {
    let file = read_examples(path)?;
    Ok(TrainingTable {
        task: spec.name.clone(),
        entity_table: spec.entity_table.clone(),
        split,
        examples: file.examples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(examples: Vec<TrainingExample>) -> TrainingTable {
        TrainingTable {
            task: "t".into(),
            entity_table: "users".into(),
            split: Split::Val,
            examples,
        }
    }

    #[test]
    fn golden_three_rows() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.csv");
        let tt = table(vec![
            TrainingExample::node(3, 1000, 1.0),
            TrainingExample::node(7, 1000, 0.0),
            TrainingExample::node(11, 1000, 12.25),
        ]);
        write_table(&tt, &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "EntityID,Time,Label\n3,1000,1\n7,1000,0\n11,1000,12.25\n"
        );
        assert_eq!(read_examples(&p).unwrap().examples, tt.examples);
    }

    #[test]
    fn empty_table_is_header_only() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.csv");
        write_table(&table(vec![]), &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "EntityID,Time,Label\n");
        assert!(read_examples(&p).unwrap().examples.is_empty());
    }

    #[test]
    fn link_level_layout() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.csv");
        let mut ex = TrainingExample::node(1, 5, 1.0);
        ex.target = Some(9);
        write_table(&table(vec![ex.clone()]), &p).unwrap();
        let back = read_examples(&p).unwrap();
        assert!(back.link_level);
        assert_eq!(back.examples, vec![ex]);
    }

    #[test]
    fn malformed_files() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.csv");
        std::fs::write(&p, "A,B\n1,2\n").unwrap();
        assert!(matches!(read_examples(&p), Err(TaskError::Malformed { .. })));
        std::fs::write(&p, "EntityID,Time,Label\n1,x,0\n").unwrap();
        assert!(matches!(read_examples(&p), Err(TaskError::Malformed { .. })));
    }
}
