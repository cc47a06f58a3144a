use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Letter;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 4] = ["student_id", "term_index", "course_id", "letter_grade"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enrollment {
    pub course_id: String,
    pub term: u32,
    pub letter: Letter,
}

impl Enrollment {
    pub fn new(course_id: impl Into<String>, term: u32, letter: Letter) -> Self {
        Self {
            course_id: course_id.into(),
            term,
            letter,
        }
    }

    pub fn grade(&self) -> f64 {
        self.letter.value()
    }
}

/// One student's enrollments, sorted by term then course id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub student_id: String,
    enrollments: Vec<Enrollment>,
}

impl Transcript {
    pub fn new(student_id: impl Into<String>, mut enrollments: Vec<Enrollment>) -> Self {
        enrollments.sort_by(|a, b| (a.term, &a.course_id).cmp(&(b.term, &b.course_id)));
        // A course listed twice in the same term keeps its last row.
        let mut deduped: Vec<Enrollment> = Vec::with_capacity(enrollments.len());
        for e in enrollments {
            match deduped.last_mut() {
                Some(prev) if prev.term == e.term && prev.course_id == e.course_id => *prev = e,
                _ => deduped.push(e),
            }
        }
        Self {
            student_id: student_id.into(),
            enrollments: deduped,
        }
    }

    pub fn enrollments(&self) -> &[Enrollment] {
        &self.enrollments
    }

    pub fn first_term(&self) -> Option<u32> {
        self.enrollments.first().map(|e| e.term)
    }

    /// Enrollments strictly before `term`, keeping only the most recent
    /// attempt of each course.
    pub fn history_before(&self, term: u32) -> Vec<Enrollment> {
        let mut latest: BTreeMap<&str, &Enrollment> = BTreeMap::new();
        for e in self.enrollments.iter().filter(|e| e.term < term) {
            latest.insert(&e.course_id, e);
        }
        let mut out: Vec<Enrollment> = latest.into_values().cloned().collect();
        out.sort_by(|a, b| (a.term, &a.course_id).cmp(&(b.term, &b.course_id)));
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    transcripts: Vec<Transcript>,
    term_count: u32,
}

impl Dataset {
    /// Builds a dataset; student ids must be unique.
    pub fn new(mut transcripts: Vec<Transcript>) -> Result<Self> {
        transcripts.sort_by(|a, b| a.student_id.cmp(&b.student_id));
        if let Some(w) = transcripts
            .windows(2)
            .find(|w| w[0].student_id == w[1].student_id)
        {
            return Err(Error::Validation(format!(
                "duplicate student id '{}'",
                w[0].student_id
            )));
        }
        let term_count = transcripts
            .iter()
            .flat_map(|t| t.enrollments.iter().map(|e| e.term))
            .max()
            .unwrap_or(0);
        Ok(Self {
            transcripts,
            term_count,
        })
    }

    pub fn transcripts(&self) -> &[Transcript] {
        &self.transcripts
    }

    pub fn transcript(&self, student_id: &str) -> Option<&Transcript> {
        self.transcripts
            .binary_search_by(|t| t.student_id.as_str().cmp(student_id))
            .ok()
            .map(|i| &self.transcripts[i])
    }

    /// Largest term index present.
    pub fn term_count(&self) -> u32 {
        self.term_count
    }

    pub fn enrollment_count(&self) -> usize {
        self.transcripts.iter().map(|t| t.enrollments.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.transcripts.is_empty()
    }

    pub fn courses(&self) -> Vec<String> {
        let mut all: Vec<String> = self
            .transcripts
            .iter()
            .flat_map(|t| t.enrollments.iter().map(|e| e.course_id.clone()))
            .collect();
        all.sort();
        all.dedup();
        all
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut rows: BTreeMap<String, Vec<Enrollment>> = BTreeMap::new();
        let mut seen_header = false;
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if !seen_header {
                let fields: Vec<&str> = record.iter().map(str::trim).collect();
                if fields != CSV_HEADER {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected header '{}'", CSV_HEADER.join(",")),
                    });
                }
                seen_header = true;
                continue;
            }
            if record.len() != 4 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 4 fields, found {}", record.len()),
                });
            }
            let student = record[0].trim();
            let course = record[2].trim();
            if student.is_empty() || course.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "empty student or course id".into(),
                });
            }
            let term: u32 = record[1].trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("term_index '{}' is not a positive integer", &record[1]),
            })?;
            if term == 0 {
                return Err(Error::Parse {
                    line,
                    message: "term_index must be ≥ 1".into(),
                });
            }
            let letter: Letter = record[3].trim().parse().map_err(|_| {
                Error::Validation(format!(
                    "line {line}: unknown letter grade '{}'",
                    record[3].trim()
                ))
            })?;
            rows.entry(student.to_string())
                .or_default()
                .push(Enrollment::new(course, term, letter));
        }
        if !seen_header {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            });
        }
        Dataset::new(
            rows.into_iter()
                .map(|(student, enrollments)| Transcript::new(student, enrollments))
                .collect(),
        )
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Canonical CSV: header, then rows ordered by student, term, course.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let to_parse = |e: csv::Error| Error::Parse {
            line: 0,
            message: e.to_string(),
        };
        wtr.write_record(CSV_HEADER).map_err(to_parse)?;
        for t in &self.transcripts {
            for e in &t.enrollments {
                wtr.write_record([
                    t.student_id.as_str(),
                    &e.term.to_string(),
                    &e.course_id,
                    e.letter.symbol(),
                ])
                .map_err(to_parse)?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        Dataset::from_csv_reader(text.as_bytes())
    }

    #[test]
    fn single_row() {
        let d = parse("student_id,term_index,course_id,letter_grade\ns1,1,CS-211,B\n").unwrap();
        let e = &d.transcripts()[0].enrollments()[0];
        assert_eq!(e.course_id, "CS-211");
        assert_eq!(e.grade(), 3.0);
        assert_eq!(d.term_count(), 1);
    }

    #[test]
    fn unknown_letter_is_validation_error() {
        let err = parse("student_id,term_index,course_id,letter_grade\ns1,1,CS-211,Z\n").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("'Z'")), "{err}");
    }

    #[test]
    fn header_only_is_empty() {
        let d = parse("student_id,term_index,course_id,letter_grade\n").unwrap();
        assert!(d.is_empty());
        assert_eq!(d.enrollment_count(), 0);
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse("student_id,term_index,course_id,letter_grade\ns1,1,A,B\ns2,x,A,B\n")
            .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn wrong_header() {
        assert!(matches!(parse("a,b,c,d\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn history_keeps_latest_attempt() {
        let t = Transcript::new(
            "s",
            vec![
                Enrollment::new("M", 1, Letter::F),
                Enrollment::new("M", 2, Letter::B),
                Enrollment::new("P", 2, Letter::A),
                Enrollment::new("Q", 3, Letter::C),
            ],
        );
        let h = t.history_before(3);
        assert_eq!(h.len(), 2);
        assert_eq!(h[0], Enrollment::new("M", 2, Letter::B));
        assert!(t.history_before(1).is_empty());
    }

    #[test]
    fn duplicate_students_rejected() {
        let t = Transcript::new("s", vec![]);
        assert!(Dataset::new(vec![t.clone(), t]).is_err());
    }
}
