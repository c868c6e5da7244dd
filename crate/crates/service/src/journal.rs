//! Append-only JSON-lines journal with contiguous sequence numbers.
//!
//! Each record is one line `{"seq":n,"command":...}` written with a single
//! `write_all` and synced before `append` returns. A crash can leave at most
//! one torn line at the end of the file; `open` truncates it away.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("journal {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("journal {path} is corrupt at line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Serialize, Deserialize)]
struct Record<C> {
    seq: u64,
    command: C,
}

pub struct Journal<C> {
    path: PathBuf,
    file: File,
    next_seq: u64,
    _command: PhantomData<fn(C) -> C>,
}

/// What `open` found on disk.
pub struct Recovered<C> {
    pub commands: Vec<C>,
    /// Bytes of a torn trailing line that were discarded.
    pub truncated: u64,
}

impl<C: Serialize + DeserializeOwned> Journal<C> {
    pub fn open(path: &Path) -> Result<(Self, Recovered<C>), JournalError> {
        let io = |source| JournalError::Io {
            path: path.to_owned(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(io)?;

        let mut commands = Vec::new();
        let mut good_len: u64 = 0;
        let mut reader = BufReader::new(&file);
        let mut line = Vec::new();
        let mut index = 0usize;
        let mut torn = false;
        loop {
            line.clear();
            let n = reader.read_until(b'\n', &mut line).map_err(io)?;
            if n == 0 {
                break;
            }
            index += 1;
            let complete = line.last() == Some(&b'\n');
            match serde_json::from_slice::<Record<C>>(&line) {
                Ok(rec) if complete => {
                    let expected = commands.len() as u64 + 1;
                    if rec.seq != expected {
                        return Err(JournalError::Corrupt {
                            path: path.to_owned(),
                            line: index,
                            reason: format!("sequence {} where {expected} was expected", rec.seq),
                        });
                    }
                    commands.push(rec.command);
                    good_len += n as u64;
                }
                result => {
                    // Only the final line may be torn.
                    let mut rest = Vec::new();
                    let more = reader.read_until(b'\n', &mut rest).map_err(io)?;
                    if more > 0 {
                        let reason = match result {
                            Err(e) => e.to_string(),
                            Ok(_) => "missing line terminator".to_owned(),
                        };
                        return Err(JournalError::Corrupt {
                            path: path.to_owned(),
                            line: index,
                            reason,
                        });
                    }
                    torn = true;
                    break;
                }
            }
        }
        drop(reader);

        let len = file.metadata().map_err(io)?.len();
        let truncated = len - good_len;
        if torn || truncated > 0 {
            file.set_len(good_len).map_err(io)?;
            file.sync_all().map_err(io)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;

        let journal = Self {
            path: path.to_owned(),
            file,
            next_seq: commands.len() as u64 + 1,
            _command: PhantomData,
        };
        Ok((journal, Recovered { commands, truncated }))
    }

    /// Durably appends a command and returns its sequence number.
    pub fn append(&mut self, command: &C) -> Result<u64, JournalError> {
        let seq = self.next_seq;
        let mut line = serde_json::to_vec(&Record { seq, command }).expect("commands serialize");
        line.push(b'\n');
        let io = |source| JournalError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&line).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.next_seq += 1;
        Ok(seq)
    }

    /// Sequence number of the last durable record.
    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
