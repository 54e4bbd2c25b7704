//! Bounded-memory sort of keyed text lines.
//!
//! Lines are buffered until a byte budget is reached, sorted, and spilled to
//! temporary run files; `finish` k-way merges the runs into the output.
//! Keys must be unique.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};

use thiserror::Error;

pub const DEFAULT_BUDGET_BYTES: usize = 128 << 20;

#[derive(Debug, Error)]
pub enum SortError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
}

pub struct ExternalSorter {
    budget: usize,
    buffered: usize,
    buffer: Vec<(String, String)>,
    runs: Vec<File>,
}

impl Default for ExternalSorter {
    fn default() -> Self {
        Self::with_budget(DEFAULT_BUDGET_BYTES)
    }
}

impl ExternalSorter {
    pub fn with_budget(budget: usize) -> Self {
        Self {
            budget: budget.max(1),
            buffered: 0,
            buffer: Vec::new(),
            runs: Vec::new(),
        }
    }

    pub fn push(&mut self, key: String, line: String) -> Result<(), SortError> {
        // per-entry overhead of two String headers
        self.buffered += key.len() + line.len() + 48;
        self.buffer.push((key, line));
        if self.buffered >= self.budget {
            self.spill()?;
        }
        Ok(())
    }

    pub fn spilled_runs(&self) -> usize {
        self.runs.len()
    }

    fn sort_buffer(&mut self) -> Result<(), SortError> {
        self.buffer.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = self.buffer.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(SortError::DuplicateKey(w[0].0.clone()));
        }
        Ok(())
    }

    fn spill(&mut self) -> Result<(), SortError> {
        self.sort_buffer()?;
        let mut file = tempfile::tempfile()?;
        {
            let mut w = BufWriter::new(&mut file);
            for (k, l) in self.buffer.drain(..) {
                write_frame(&mut w, &k)?;
                write_frame(&mut w, &l)?;
            }
            w.flush()?;
        }
        use std::io::Seek;
        file.seek(io::SeekFrom::Start(0))?;
        self.runs.push(file);
        self.buffered = 0;
        Ok(())
    }

    /// Writes every line, newline-terminated, in ascending key order.
    /// Returns the number of lines written.
    pub fn finish<W: Write>(mut self, out: W) -> Result<u64, SortError> {
        let mut out = BufWriter::new(out);
        let mut written = 0u64;
        if self.runs.is_empty() {
            self.sort_buffer()?;
            for (_, line) in &self.buffer {
                out.write_all(line.as_bytes())?;
                out.write_all(b"\n")?;
                written += 1;
            }
            out.flush()?;
            return Ok(written);
        }
        if !self.buffer.is_empty() {
            self.spill()?;
        }
        let mut readers: Vec<BufReader<File>> = self.runs.drain(..).map(BufReader::new).collect();
        let mut heap = BinaryHeap::new();
        let mut pending: Vec<Option<String>> = vec![None; readers.len()];
        for (i, r) in readers.iter_mut().enumerate() {
            if let Some((k, l)) = read_entry(r)? {
                pending[i] = Some(l);
                heap.push(Reverse((k, i)));
            }
        }
        let mut last: Option<String> = None;
        while let Some(Reverse((key, i))) = heap.pop() {
            if last.as_deref() == Some(key.as_str()) {
                return Err(SortError::DuplicateKey(key));
            }
            let line = pending[i].take().expect("entry pending for popped run");
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
            written += 1;
            if let Some((k, l)) = read_entry(&mut readers[i])? {
                pending[i] = Some(l);
                heap.push(Reverse((k, i)));
            }
            last = Some(key);
        }
        out.flush()?;
        Ok(written)
    }
}

fn write_frame<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u64).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<String>> {
    let mut len = [0u8; 8];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let mut buf = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

fn read_entry<R: Read>(r: &mut R) -> io::Result<Option<(String, String)>> {
    let Some(k) = read_frame(r)? else {
        return Ok(None);
    };
    let l = read_frame(r)?.ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "truncated run"))?;
    Ok(Some((k, l)))
}
