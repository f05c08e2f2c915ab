//! Sequence ingestion: FASTA, one-sequence-per-line text and labeled CSV.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nucleotide alphabet after cleaning. `N` stands for every unknown base.
pub const BASES: [u8; 5] = *b"ACGTN";

/// A cleaned nucleotide sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequence {
    pub id: String,
    bases: String,
}

impl Sequence {
    /// Cleans `raw` and wraps it.
    pub fn new(id: impl Into<String>, raw: &str) -> Result<Self> {
        Ok(Sequence {
            id: id.into(),
            bases: clean_sequence(raw)?,
        })
    }

    pub fn bases(&self) -> &str {
        &self.bases
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }
}

/// Upper-cases `raw` and maps anything outside `ACGT` to `N`.
pub fn clean_sequence(raw: &str) -> Result<String> {
    if raw.is_empty() {
        return Err(Error::Validation("empty sequence".into()));
    }
    Ok(raw
        .chars()
        .map(|c| match c.to_ascii_uppercase() {
            c @ ('A' | 'C' | 'G' | 'T') => c,
            _ => 'N',
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeqFormat {
    Fasta,
    Lines,
}

impl FromStr for SeqFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fasta" | "fa" => Ok(SeqFormat::Fasta),
            "lines" | "txt" => Ok(SeqFormat::Lines),
            other => Err(Error::Config(format!("unknown sequence format {other:?}"))),
        }
    }
}

/// Streaming reader yielding one [`Sequence`] at a time.
///
/// Only the record being assembled is held in memory.
pub struct SequenceReader<R> {
    reader: R,
    format: SeqFormat,
    line_no: usize,
    line: String,
    // FASTA header seen but not yet emitted, with its line number.
    pending: Option<(String, usize)>,
    buf: String,
    done: bool,
    peak_record_bytes: usize,
}

impl<R: BufRead> SequenceReader<R> {
    pub fn new(reader: R, format: SeqFormat) -> Self {
        SequenceReader {
            reader,
            format,
            line_no: 0,
            line: String::new(),
            pending: None,
            buf: String::new(),
            done: false,
            peak_record_bytes: 0,
        }
    }

    /// Largest record buffer observed so far, in bytes.
    pub fn peak_record_bytes(&self) -> usize {
        self.peak_record_bytes
    }

    fn read_line(&mut self) -> Result<bool> {
        self.line.clear();
        let n = self
            .reader
            .read_line(&mut self.line)
            .map_err(|e| Error::Parse {
                line: self.line_no + 1,
                msg: e.to_string(),
            })?;
        if n == 0 {
            return Ok(false);
        }
        self.line_no += 1;
        let trimmed = self.line.trim_end_matches(['\n', '\r']).len();
        self.line.truncate(trimmed);
        Ok(true)
    }

    fn next_line_record(&mut self) -> Result<Option<Sequence>> {
        loop {
            if !self.read_line()? {
                return Ok(None);
            }
            let text = self.line.trim();
            if text.is_empty() {
                continue;
            }
            self.peak_record_bytes = self.peak_record_bytes.max(text.len());
            return Sequence::new(self.line_no.to_string(), text).map(Some);
        }
    }

    fn parse_header(&self) -> Result<String> {
        let id = self.line[1..].split_whitespace().next().unwrap_or("");
        if id.is_empty() {
            return Err(Error::Parse {
                line: self.line_no,
                msg: "FASTA header without identifier".into(),
            });
        }
        Ok(id.to_string())
    }

    fn next_fasta_record(&mut self) -> Result<Option<Sequence>> {
        if self.pending.is_none() {
            // Skip leading blank lines up to the first header.
            loop {
                if !self.read_line()? {
                    return Ok(None);
                }
                if self.line.trim().is_empty() {
                    continue;
                }
                if !self.line.starts_with('>') {
                    return Err(Error::Parse {
                        line: self.line_no,
                        msg: "sequence data before first FASTA header".into(),
                    });
                }
                self.pending = Some((self.parse_header()?, self.line_no));
                break;
            }
        }
        let (id, header_line) = self.pending.take().expect("header present");
        self.buf.clear();
        loop {
            if !self.read_line()? {
                break;
            }
            if self.line.starts_with('>') {
                self.pending = Some((self.parse_header()?, self.line_no));
                break;
            }
            self.buf.push_str(self.line.trim());
        }
        self.peak_record_bytes = self.peak_record_bytes.max(self.buf.len());
        if self.buf.is_empty() {
            return Err(Error::Parse {
                line: header_line,
                msg: format!("FASTA record {id:?} has no sequence"),
            });
        }
        let seq = Sequence::new(id, &self.buf)?;
        // Keep the assembly buffer from growing without bound across records.
        if self.buf.capacity() > 4 * self.buf.len().max(1 << 16) {
            self.buf = String::new();
        }
        Ok(Some(seq))
    }
}

impl<R: BufRead> Iterator for SequenceReader<R> {
    type Item = Result<Sequence>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let res = match self.format {
            SeqFormat::Fasta => self.next_fasta_record(),
            SeqFormat::Lines => self.next_line_record(),
        };
        match res {
            Ok(Some(s)) => Some(Ok(s)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Opens `path` and streams its sequences in file order.
pub fn load_sequences(
    path: impl AsRef<Path>,
    format: SeqFormat,
) -> Result<SequenceReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(SequenceReader::new(BufReader::new(file), format))
}

/// Splits bases into consecutive windows of at most `chunk` bases.
pub fn chunk_sequence(seq: &Sequence, chunk: usize) -> Vec<Sequence> {
    assert!(chunk > 0, "chunk length must be positive");
    let bases = seq.bases();
    if bases.len() <= chunk {
        return vec![seq.clone()];
    }
    bases
        .as_bytes()
        .chunks(chunk)
        .enumerate()
        .map(|(i, part)| Sequence {
            id: format!("{}/{}", seq.id, i),
            bases: String::from_utf8(part.to_vec()).expect("ascii bases"),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// One split of a classification task.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<(Sequence, usize)>,
    pub num_classes: usize,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(records: Vec<(Sequence, usize)>, num_classes: usize, split: Split) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Validation(format!(
                "num_classes must be at least 2, got {num_classes}"
            )));
        }
        if let Some((seq, label)) = records.iter().find(|(_, l)| *l >= num_classes) {
            return Err(Error::Validation(format!(
                "label {label} of record {:?} is outside [0, {num_classes})",
                seq.id
            )));
        }
        Ok(LabeledDataset {
            records,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().map(|(_, l)| *l)
    }
}

#[derive(Deserialize)]
struct CsvRow {
    sequence: String,
    label: String,
}

/// Reads a `sequence,label` CSV.
///
/// `num_classes` defaults to `1 + max label`; passing a declared class count
/// validates every label against it instead.
pub fn load_labeled_dataset(
    path: impl AsRef<Path>,
    split: Split,
    num_classes: Option<usize>,
) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labeled_dataset(BufReader::new(file), split, num_classes)
}

pub fn read_labeled_dataset<R: std::io::Read>(
    reader: R,
    split: Split,
    num_classes: Option<usize>,
) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 || &headers[0] != "sequence" || &headers[1] != "label" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header \"sequence,label\", found {headers:?}"),
        });
    }
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let label: usize = row.label.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("label {:?} is not a non-negative integer", row.label),
        })?;
        let seq = Sequence::new((i + 1).to_string(), &row.sequence).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        records.push((seq, label));
    }
    let num_classes = match num_classes {
        Some(k) => k,
        None => records.iter().map(|(_, l)| l + 1).max().unwrap_or(0).max(2),
    };
    LabeledDataset::new(records, num_classes, split)
}

pub fn write_labeled_dataset(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "sequence,label")?;
        for (seq, label) in &dataset.records {
            writeln!(w, "{},{}", seq.bases(), label)?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Train/dev/test files of one task, loaded from `<dir>/{train,dev,test}.csv`.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub name: String,
    pub train: LabeledDataset,
    pub dev: LabeledDataset,
    pub test: LabeledDataset,
}

impl TaskData {
    pub fn load(dir: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = |split: Split| -> PathBuf { dir.join(format!("{split}.csv")) };
        let mut train = load_labeled_dataset(path(Split::Train), Split::Train, num_classes)?;
        let mut dev = load_labeled_dataset(path(Split::Dev), Split::Dev, num_classes)?;
        let mut test = load_labeled_dataset(path(Split::Test), Split::Test, num_classes)?;
        // Without a declared count, the widest split decides.
        let k = num_classes.unwrap_or_else(|| train.num_classes.max(dev.num_classes).max(test.num_classes));
        for ds in [&mut train, &mut dev, &mut test] {
            ds.num_classes = k;
        }
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "task".into());
        Ok(TaskData {
            name,
            train,
            dev,
            test,
        })
    }

    pub fn splits(&self) -> [&LabeledDataset; 3] {
        [&self.train, &self.dev, &self.test]
    }
}
