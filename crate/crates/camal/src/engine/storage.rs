//! Storage backends: a directory of real files and an in-memory map with
//! identical semantics. Both count block transfers so tests can assert the
//! engine's accounting against the backend's ("counting shim").
//!
//! Run data moves in fixed-size blocks through `begin_run`/`append_block`/
//! `finish_run` and `read_block`, all counted. Blobs (filter files, the
//! manifest) are uncounted metadata.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::PathBuf;

use crate::error::{Error, Result};

pub trait Storage: Send {
    fn begin_run(&mut self, name: &str) -> Result<()>;
    fn append_block(&mut self, name: &str, block: &[u8]) -> Result<()>;
    fn finish_run(&mut self, name: &str) -> Result<()>;
    fn read_block(&mut self, name: &str, idx: u64) -> Result<Vec<u8>>;
    fn block_count(&mut self, name: &str) -> Result<u64>;
    fn remove(&mut self, name: &str) -> Result<()>;
    fn put_blob(&mut self, name: &str, bytes: &[u8]) -> Result<()>;
    fn get_blob(&mut self, name: &str) -> Result<Option<Vec<u8>>>;
    fn list(&mut self) -> Result<Vec<String>>;
    /// Blocks fetched via `read_block` since the last counter reset.
    fn block_fetches(&self) -> u64;
    /// Blocks written via `append_block` since the last counter reset.
    fn block_writes(&self) -> u64;
    fn reset_counters(&mut self);
    /// Whether state survives drop (directory backend) or not (memory).
    fn persistent(&self) -> bool;
}

/// Volatile backend: run files are vectors of blocks.
#[derive(Default)]
pub struct MemStorage {
    runs: HashMap<String, Vec<Vec<u8>>>,
    blobs: HashMap<String, Vec<u8>>,
    fetches: u64,
    writes: u64,
}

impl MemStorage {
    pub fn new() -> Self {
        MemStorage::default()
    }
}

impl Storage for MemStorage {
    fn begin_run(&mut self, name: &str) -> Result<()> {
        self.runs.insert(name.to_string(), Vec::new());
        Ok(())
    }

    fn append_block(&mut self, name: &str, block: &[u8]) -> Result<()> {
        let run = self
            .runs
            .get_mut(name)
            .ok_or_else(|| Error::engine(format!("append to unopened run {name}")))?;
        run.push(block.to_vec());
        self.writes += 1;
        Ok(())
    }

    fn finish_run(&mut self, _name: &str) -> Result<()> {
        Ok(())
    }

    fn read_block(&mut self, name: &str, idx: u64) -> Result<Vec<u8>> {
        let run = self
            .runs
            .get(name)
            .ok_or_else(|| Error::engine(format!("read from missing run {name}")))?;
        let block = run
            .get(idx as usize)
            .ok_or_else(|| Error::engine(format!("block {idx} out of range in {name}")))?;
        self.fetches += 1;
        Ok(block.clone())
    }

    fn block_count(&mut self, name: &str) -> Result<u64> {
        Ok(self
            .runs
            .get(name)
            .ok_or_else(|| Error::engine(format!("missing run {name}")))?
            .len() as u64)
    }

    fn remove(&mut self, name: &str) -> Result<()> {
        self.runs.remove(name);
        self.blobs.remove(name);
        Ok(())
    }

    fn put_blob(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        self.blobs.insert(name.to_string(), bytes.to_vec());
        Ok(())
    }

    fn get_blob(&mut self, name: &str) -> Result<Option<Vec<u8>>> {
        Ok(self.blobs.get(name).cloned())
    }

    fn list(&mut self) -> Result<Vec<String>> {
        let mut names: Vec<String> = self
            .runs
            .keys()
            .chain(self.blobs.keys())
            .cloned()
            .collect();
        names.sort();
        names.dedup();
        Ok(names)
    }

    fn block_fetches(&self) -> u64 {
        self.fetches
    }

    fn block_writes(&self) -> u64 {
        self.writes
    }

    fn reset_counters(&mut self) {
        self.fetches = 0;
        self.writes = 0;
    }

    fn persistent(&self) -> bool {
        false
    }
}

/// Directory backend: one file per run, blocks at fixed offsets.
pub struct FileStorage {
    dir: PathBuf,
    block_bytes: u64,
    handles: HashMap<String, File>,
    fetches: u64,
    writes: u64,
}

impl FileStorage {
    pub fn open(dir: PathBuf, block_bytes: u64) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(FileStorage {
            dir,
            block_bytes,
            handles: HashMap::new(),
            fetches: 0,
            writes: 0,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn handle(&mut self, name: &str) -> Result<&mut File> {
        if !self.handles.contains_key(name) {
            let path = self.path(name);
            let file = OpenOptions::new()
                .read(true)
                .write(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            self.handles.insert(name.to_string(), file);
        }
        Ok(self.handles.get_mut(name).unwrap())
    }
}

impl Storage for FileStorage {
    fn begin_run(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        self.handles.insert(name.to_string(), file);
        Ok(())
    }

    fn append_block(&mut self, name: &str, block: &[u8]) -> Result<()> {
        let path = self.path(name);
        let file = self.handle(name)?;
        file.seek(SeekFrom::End(0)).map_err(|e| Error::io(&path, e))?;
        file.write_all(block).map_err(|e| Error::io(&path, e))?;
        self.writes += 1;
        Ok(())
    }

    fn finish_run(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        let file = self.handle(name)?;
        file.sync_data().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    fn read_block(&mut self, name: &str, idx: u64) -> Result<Vec<u8>> {
        let path = self.path(name);
        let block_bytes = self.block_bytes;
        let file = self.handle(name)?;
        let mut buf = vec![0u8; block_bytes as usize];
        file.seek(SeekFrom::Start(idx * block_bytes))
            .map_err(|e| Error::io(&path, e))?;
        file.read_exact(&mut buf).map_err(|e| Error::io(&path, e))?;
        self.fetches += 1;
        Ok(buf)
    }

    fn block_count(&mut self, name: &str) -> Result<u64> {
        let path = self.path(name);
        let len = fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
        Ok(len / self.block_bytes)
    }

    fn remove(&mut self, name: &str) -> Result<()> {
        self.handles.remove(name);
        let path = self.path(name);
        if path.exists() {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    fn put_blob(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    fn get_blob(&mut self, name: &str) -> Result<Option<Vec<u8>>> {
        let path = self.path(name);
        if !path.exists() {
            return Ok(None);
        }
        fs::read(&path).map(Some).map_err(|e| Error::io(&path, e))
    }

    fn list(&mut self) -> Result<Vec<String>> {
        let mut names = Vec::new();
        let entries = fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            if let Some(name) = entry.file_name().to_str() {
                names.push(name.to_string());
            }
        }
        names.sort();
        Ok(names)
    }

    fn block_fetches(&self) -> u64 {
        self.fetches
    }

    fn block_writes(&self) -> u64 {
        self.writes
    }

    fn reset_counters(&mut self) {
        self.fetches = 0;
        self.writes = 0;
    }

    fn persistent(&self) -> bool {
        true
    }
}
