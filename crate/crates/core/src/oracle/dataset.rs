use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use super::{QueryCounter, TripletOracle};
use crate::error::{LoeError, Result};
use crate::triplet::{Comparison, Label, Triplet};

/// Oracle replaying recorded comparisons.
///
/// A query is answered from the recorded labels of the same triplet (either
/// tail order); repeated recordings are served round-robin by ordinal.
#[derive(Debug, Default)]
pub struct DatasetOracle {
    comparisons: Vec<Comparison>,
    n_items: usize,
    by_triplet: HashMap<Triplet, Vec<Label>>,
    by_head: HashMap<usize, Vec<usize>>,
    counter: QueryCounter,
}

impl DatasetOracle {
    /// Item count is taken as one past the largest index seen.
    pub fn new(comparisons: Vec<Comparison>) -> Self {
        let n_items = comparisons
            .iter()
            .map(|c| c.triplet.i.max(c.triplet.j).max(c.triplet.k) + 1)
            .max()
            .unwrap_or(0);
        Self::build(comparisons, n_items)
    }

    pub fn with_n_items(comparisons: Vec<Comparison>, n_items: usize) -> Result<Self> {
        for c in &comparisons {
            c.triplet.check_range(n_items)?;
        }
        Ok(Self::build(comparisons, n_items))
    }

    fn build(comparisons: Vec<Comparison>, n_items: usize) -> Self {
        let mut by_triplet: HashMap<Triplet, Vec<Label>> = HashMap::new();
        let mut by_head: HashMap<usize, Vec<usize>> = HashMap::new();
        for (idx, c) in comparisons.iter().enumerate() {
            let canon = c.canonical();
            by_triplet.entry(canon.triplet).or_default().push(canon.label);
            by_head.entry(c.triplet.i).or_default().push(idx);
        }
        Self {
            comparisons,
            n_items,
            by_triplet,
            by_head,
            counter: QueryCounter::default(),
        }
    }

    pub fn comparisons(&self) -> &[Comparison] {
        &self.comparisons
    }

    pub fn len(&self) -> usize {
        self.comparisons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comparisons.is_empty()
    }

    /// Recorded comparisons whose head is `head`.
    pub fn with_head(&self, head: usize) -> impl Iterator<Item = &Comparison> + '_ {
        self.by_head
            .get(&head)
            .into_iter()
            .flatten()
            .map(move |&idx| &self.comparisons[idx])
    }
}

impl TripletOracle for DatasetOracle {
    fn n_items(&self) -> usize {
        self.n_items
    }

    fn label_at(&self, t: Triplet, ordinal: u64) -> Result<Label> {
        t.check_range(self.n_items)?;
        let (canon, swapped) = t.canonical();
        let labels = self.by_triplet.get(&canon).ok_or(LoeError::NotRecorded {
            i: t.i,
            j: t.j,
            k: t.k,
        })?;
        let label = labels[(ordinal % labels.len() as u64) as usize];
        Ok(if swapped { label.flipped() } else { label })
    }

    fn counter(&self) -> &QueryCounter {
        &self.counter
    }
}

fn parse_index(field: &str, line: usize) -> Result<usize> {
    let value: usize = field.trim().parse().map_err(|_| LoeError::Parse {
        line,
        message: format!("`{}` is not a positive item index", field.trim()),
    })?;
    value.checked_sub(1).ok_or(LoeError::Parse {
        line,
        message: "item indices are 1-based".into(),
    })
}

fn parse_label(field: &str, line: usize) -> Result<Label> {
    match field.trim() {
        "+1" | "1" => Ok(Label::Farther),
        "-1" => Ok(Label::Closer),
        other => Err(LoeError::Parse {
            line,
            message: format!("`{other}` is not a label (+1, 1 or -1)"),
        }),
    }
}

/// Parses `i,j,k,label` lines (1-based indices). Blank lines, `#` comments and
/// an `i,j,k,label` header are skipped; line numbers in errors are 1-based
/// physical lines.
pub fn parse_triplets<R: BufRead>(reader: R) -> Result<Vec<Comparison>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if trimmed.eq_ignore_ascii_case("i,j,k,label") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(LoeError::Parse {
                line: line_no,
                message: format!("expected 4 comma-separated fields, found {}", fields.len()),
            });
        }
        let i = parse_index(fields[0], line_no)?;
        let j = parse_index(fields[1], line_no)?;
        let k = parse_index(fields[2], line_no)?;
        let label = parse_label(fields[3], line_no)?;
        let triplet = Triplet::new(i, j, k).map_err(|e| LoeError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(Comparison::new(triplet, label));
    }
    Ok(out)
}

/// Loads a triplet CSV, transparently decompressing gzip input.
pub fn load_triplet_file(path: impl AsRef<Path>) -> Result<DatasetOracle> {
    let mut file = File::open(path.as_ref())?;
    let mut magic = [0u8; 2];
    let read = file.read(&mut magic)?;
    let file = File::open(path.as_ref())?;
    let comparisons = if read == 2 && magic == [0x1f, 0x8b] {
        parse_triplets(BufReader::new(GzDecoder::new(file)))?
    } else {
        parse_triplets(BufReader::new(file))?
    };
    Ok(DatasetOracle::new(comparisons))
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    #[test]
    fn parses_one_line() {
        let c = parse_triplets("4,1,9,+1\n".as_bytes()).unwrap();
        assert_eq!(
            c,
            vec![Comparison::new(Triplet { i: 3, j: 0, k: 8 }, Label::Farther)]
        );
    }

    #[test]
    fn empty_input_is_an_empty_oracle() {
        let file = tempfile::NamedTempFile::new().unwrap();
        let oracle = load_triplet_file(file.path()).unwrap();
        assert!(oracle.is_empty());
        assert_eq!(oracle.n_items(), 0);
    }

    #[test]
    fn repeated_index_names_the_line() {
        let err = parse_triplets("4,4,9,+1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LoeError::Parse { line: 1, .. }), "{err}");
        let err = parse_triplets("# header\n1,2,3,1\n2,3,x,-1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LoeError::Parse { line: 3, .. }), "{err}");
        let err = parse_triplets("1,2,3,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LoeError::Parse { line: 1, .. }));
        let err = parse_triplets("0,2,3,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LoeError::Parse { line: 1, .. }));
    }

    #[test]
    fn counts_and_gzip() {
        let text = "i,j,k,label\n1,2,3,1\n2,3,1,-1\n\n3,1,2,+1\n";
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(text.as_bytes()).unwrap();
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(&enc.finish().unwrap()).unwrap();
        let oracle = load_triplet_file(file.path()).unwrap();
        assert_eq!(oracle.len(), 3);
        assert_eq!(oracle.n_items(), 3);
    }

    #[test]
    fn replays_recorded_labels_in_either_tail_order() {
        let oracle = DatasetOracle::new(parse_triplets("1,2,3,+1\n1,2,3,-1\n".as_bytes()).unwrap());
        let t = Triplet::new(0, 1, 2).unwrap();
        assert_eq!(oracle.compare_at(t, 0).unwrap(), Label::Farther);
        assert_eq!(oracle.compare_at(t, 1).unwrap(), Label::Closer);
        let swapped = Triplet::new(0, 2, 1).unwrap();
        assert_eq!(oracle.compare_at(swapped, 0).unwrap(), Label::Closer);
        assert!(matches!(
            oracle.compare(Triplet::new(1, 0, 2).unwrap()),
            Err(LoeError::NotRecorded { .. })
        ));
        assert_eq!(oracle.query_count(), 3);
        assert_eq!(oracle.with_head(0).count(), 2);
        assert_eq!(oracle.with_head(1).count(), 0);
    }
}
