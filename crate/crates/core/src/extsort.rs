//! Disk-backed sorting: sorted-run spilling plus a streaming k-way merge.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Merges already-sorted fallible iterators into one sorted stream.
///
/// With `dedup` set, equal consecutive items are emitted once. The first
/// error from any input ends the merge.
pub struct KMerge<T, E, I> {
    sources: Vec<I>,
    heap: BinaryHeap<Reverse<(T, usize)>>,
    last: Option<T>,
    dedup: bool,
    failed: bool,
    primed: bool,
    _err: PhantomData<E>,
}

impl<T, E, I> KMerge<T, E, I>
where
    T: Ord + Clone,
    I: Iterator<Item = Result<T, E>>,
{
    pub fn new(sources: Vec<I>, dedup: bool) -> Self {
        KMerge {
            heap: BinaryHeap::with_capacity(sources.len()),
            sources,
            last: None,
            dedup,
            failed: false,
            primed: false,
            _err: PhantomData,
        }
    }

    fn pull(&mut self, idx: usize) -> Result<(), E> {
        if let Some(item) = self.sources[idx].next() {
            self.heap.push(Reverse((item?, idx)));
        }
        Ok(())
    }
}

impl<T, E, I> Iterator for KMerge<T, E, I>
where
    T: Ord + Clone,
    I: Iterator<Item = Result<T, E>>,
{
    type Item = Result<T, E>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if !self.primed {
            self.primed = true;
            for idx in 0..self.sources.len() {
                if let Err(e) = self.pull(idx) {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
        loop {
            let Reverse((item, idx)) = self.heap.pop()?;
            if let Err(e) = self.pull(idx) {
                self.failed = true;
                return Some(Err(e));
            }
            if self.dedup {
                if self.last.as_ref() == Some(&item) {
                    continue;
                }
                self.last = Some(item.clone());
            }
            return Some(Ok(item));
        }
    }
}

/// Sorts an unbounded stream of items with at most `run_capacity` of them
/// resident at a time. Full buffers are spilled as sorted runs into a private
/// temporary directory and merged back on [`finish`](Self::finish).
pub struct ExternalSorter<T> {
    dir: tempfile::TempDir,
    run_capacity: usize,
    buffer: Vec<T>,
    runs: Vec<PathBuf>,
}

impl<T> ExternalSorter<T>
where
    T: Ord + Clone + Serialize + DeserializeOwned,
{
    /// `scratch` is the parent of the run directory (system temp dir if `None`).
    pub fn new(scratch: Option<&Path>, run_capacity: usize) -> io::Result<Self> {
        let dir = match scratch {
            Some(root) => {
                std::fs::create_dir_all(root)?;
                tempfile::Builder::new().prefix("cg-sort-").tempdir_in(root)?
            }
            None => tempfile::Builder::new().prefix("cg-sort-").tempdir()?,
        };
        Ok(ExternalSorter {
            dir,
            run_capacity: run_capacity.max(1),
            buffer: Vec::new(),
            runs: Vec::new(),
        })
    }

    pub fn push(&mut self, item: T) -> io::Result<()> {
        self.buffer.push(item);
        if self.buffer.len() >= self.run_capacity {
            self.spill()?;
        }
        Ok(())
    }

    pub fn spilled_runs(&self) -> usize {
        self.runs.len()
    }

    fn spill(&mut self) -> io::Result<()> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        self.buffer.sort();
        let path = self.dir.path().join(format!("run-{:06}", self.runs.len()));
        let mut w = BufWriter::new(File::create(&path)?);
        for item in self.buffer.drain(..) {
            let bytes = serde_json::to_vec(&item)?;
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(&bytes)?;
        }
        w.flush()?;
        self.runs.push(path);
        Ok(())
    }

    /// Returns the items in ascending order. The temporary runs live as long
    /// as the returned iterator.
    pub fn finish(mut self) -> io::Result<SortedRuns<T>> {
        self.spill()?;
        let readers = self
            .runs
            .iter()
            .map(|p| File::open(p).map(|f| RunReader::new(BufReader::new(f))))
            .collect::<io::Result<Vec<_>>>()?;
        Ok(SortedRuns {
            merge: KMerge::new(readers, false),
            _dir: self.dir,
        })
    }
}

pub struct SortedRuns<T> {
    merge: KMerge<T, io::Error, RunReader<T>>,
    _dir: tempfile::TempDir,
}

impl<T> Iterator for SortedRuns<T>
where
    T: Ord + Clone + DeserializeOwned,
{
    type Item = io::Result<T>;

    fn next(&mut self) -> Option<Self::Item> {
        self.merge.next()
    }
}

pub struct RunReader<T> {
    reader: BufReader<File>,
    _item: PhantomData<T>,
}

impl<T> RunReader<T> {
    fn new(reader: BufReader<File>) -> Self {
        RunReader { reader, _item: PhantomData }
    }
}

impl<T: DeserializeOwned> Iterator for RunReader<T> {
    type Item = io::Result<T>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut len = [0u8; 4];
        match self.reader.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return None,
            Err(e) => return Some(Err(e)),
        }
        let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
        if let Err(e) = self.reader.read_exact(&mut buf) {
            return Some(Err(e));
        }
        Some(serde_json::from_slice(&buf).map_err(io::Error::from))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kmerge_dedups() {
        let a = vec![1, 3, 5, 7].into_iter().map(Ok::<_, ()>);
        let b = vec![1, 2, 3, 8].into_iter().map(Ok::<_, ()>);
        let c = Vec::new().into_iter().map(Ok::<i32, ()>);
        let merged: Vec<_> = KMerge::new(vec![a, b, c], true).map(Result::unwrap).collect();
        assert_eq!(merged, [1, 2, 3, 5, 7, 8]);
    }

    #[test]
    fn kmerge_stops_at_error() {
        let a = vec![Ok(1), Err("boom"), Ok(9)].into_iter();
        let b = vec![Ok(2), Ok(3)].into_iter();
        let out: Vec<_> = KMerge::new(vec![a, b], false).collect();
        assert!(out.iter().any(|r| r.is_err()));
        assert!(out.last().unwrap().is_err());
    }

    proptest! {
        #[test]
        fn external_sort_matches_in_memory(mut items in proptest::collection::vec(any::<(u16, String)>(), 0..300), cap in 1usize..40) {
            let mut sorter = ExternalSorter::new(None, cap).unwrap();
            for it in &items {
                sorter.push(it.clone()).unwrap();
            }
            let out: Vec<_> = sorter.finish().unwrap().map(Result::unwrap).collect();
            items.sort();
            prop_assert_eq!(out, items);
        }
    }
}
