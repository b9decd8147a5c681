//! String key/value persistence for knowledge bases.
//!
//! Keys are namespaced: `kb:<name>` holds the record without weights,
//! `weights:<name>` the weight map and `graph:<name>` an optional graph dump.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::factors::WeightVector;
use crate::record::{KnowledgeBaseRecord, RecordError};

/// Endpoint: `memory`, `file:<path>` or `redis://host:port`.
pub const STORE_ENV: &str = "QBBN_STORE";

pub const KB_PREFIX: &str = "kb:";
pub const WEIGHTS_PREFIX: &str = "weights:";
pub const GRAPH_PREFIX: &str = "graph:";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot reach {endpoint} after {attempts} attempts: {message}")]
    Connect {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("server error: {0}")]
    Server(String),
    #[error("bad store endpoint {0:?}")]
    Endpoint(String),
    #[error("no entry {0}")]
    Missing(String),
    #[error("stored value for {key} is malformed: {message}")]
    Corrupt { key: String, message: String },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("round trip changed the record")]
    Mismatch,
}

pub trait KvStore {
    fn get(&mut self, key: &str) -> Result<Option<String>, StoreError>;
    fn set(&mut self, key: &str, value: &str) -> Result<(), StoreError>;
}

#[derive(Debug, Default)]
pub struct MemoryStore(BTreeMap<String, String>);

impl MemoryStore {
    pub fn new() -> Self {
        MemoryStore::default()
    }
}

impl KvStore for MemoryStore {
    fn get(&mut self, key: &str) -> Result<Option<String>, StoreError> {
        Ok(self.0.get(key).cloned())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), StoreError> {
        self.0.insert(key.to_string(), value.to_string());
        Ok(())
    }
}

/// One JSON object on disk, rewritten through a temporary file on each set.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
}

impl FileStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, source: std::io::Error) -> StoreError {
        StoreError::Io {
            path: self.path.display().to_string(),
            source,
        }
    }

    fn read_all(&self) -> Result<BTreeMap<String, String>, StoreError> {
        match std::fs::read_to_string(&self.path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                key: self.path.display().to_string(),
                message: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
            Err(e) => Err(self.io(e)),
        }
    }
}

impl KvStore for FileStore {
    fn get(&mut self, key: &str) -> Result<Option<String>, StoreError> {
        Ok(self.read_all()?.remove(key))
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), StoreError> {
        let mut all = self.read_all()?;
        all.insert(key.to_string(), value.to_string());
        let text = serde_json::to_string_pretty(&all).expect("string map serializes");
        let mut tmp = self.path.clone().into_os_string();
        tmp.push(".tmp");
        std::fs::write(&tmp, text).map_err(|e| self.io(e))?;
        std::fs::rename(&tmp, &self.path).map_err(|e| self.io(e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Simple(String),
    Bulk(Option<String>),
    Integer(i64),
    Error(String),
}

/// Minimal RESP client speaking `GET` and `SET`. A failed command drops the
/// connection and retries on a fresh one.
#[derive(Debug)]
pub struct RedisStore {
    endpoint: String,
    address: String,
    attempts: u32,
    timeout: Duration,
    conn: Option<BufReader<TcpStream>>,
}

impl RedisStore {
    pub fn new(endpoint: &str, attempts: u32) -> Result<Self, StoreError> {
        let address = endpoint
            .strip_prefix("redis://")
            .map(|a| a.trim_end_matches('/'))
            .filter(|a| !a.is_empty())
            .ok_or_else(|| StoreError::Endpoint(endpoint.to_string()))?;
        Ok(RedisStore {
            endpoint: endpoint.to_string(),
            address: address.to_string(),
            attempts: attempts.max(1),
            timeout: Duration::from_secs(2),
            conn: None,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn connect(&self) -> std::io::Result<BufReader<TcpStream>> {
        let mut last = None;
        for addr in self.address.to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, self.timeout) {
                Ok(s) => {
                    s.set_read_timeout(Some(self.timeout))?;
                    s.set_write_timeout(Some(self.timeout))?;
                    return Ok(BufReader::new(s));
                }
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, "no address")))
    }

    pub fn command(&mut self, args: &[&str]) -> Result<Reply, StoreError> {
        let mut frame = format!("*{}\r\n", args.len()).into_bytes();
        for a in args {
            frame.extend_from_slice(format!("${}\r\n", a.len()).as_bytes());
            frame.extend_from_slice(a.as_bytes());
            frame.extend_from_slice(b"\r\n");
        }
        let mut message = String::new();
        for _ in 0..self.attempts {
            let result = (|| {
                if self.conn.is_none() {
                    self.conn = Some(self.connect()?);
                }
                let conn = self.conn.as_mut().expect("connected above");
                conn.get_mut().write_all(&frame)?;
                read_reply(conn)
            })();
            match result {
                Ok(r) => return Ok(r),
                Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
                    self.conn = None;
                    return Err(StoreError::Protocol(e.to_string()));
                }
                Err(e) => {
                    self.conn = None;
                    message = e.to_string();
                }
            }
        }
        Err(StoreError::Connect {
            endpoint: self.endpoint.clone(),
            attempts: self.attempts,
            message,
        })
    }
}

fn bad(what: impl Into<String>) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, what.into())
}

fn read_line(r: &mut impl BufRead) -> std::io::Result<String> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            "connection closed",
        ));
    }
    line.strip_suffix("\r\n")
        .map(str::to_string)
        .ok_or_else(|| bad(format!("unterminated line {line:?}")))
}

/// Reads one reply. Arrays are not needed for `GET`/`SET`.
pub fn read_reply(r: &mut impl BufRead) -> std::io::Result<Reply> {
    let line = read_line(r)?;
    let (tag, body) = line.split_at(line.len().min(1));
    match tag {
        "+" => Ok(Reply::Simple(body.to_string())),
        "-" => Ok(Reply::Error(body.to_string())),
        ":" => body.parse().map(Reply::Integer).map_err(|_| bad(line.clone())),
        "$" => {
            let n: i64 = body.parse().map_err(|_| bad(line.clone()))?;
            if n < 0 {
                return Ok(Reply::Bulk(None));
            }
            let mut buf = vec![0; n as usize + 2];
            r.read_exact(&mut buf)?;
            if !buf.ends_with(b"\r\n") {
                return Err(bad("bulk string without terminator"));
            }
            buf.truncate(n as usize);
            String::from_utf8(buf)
                .map(|s| Reply::Bulk(Some(s)))
                .map_err(|_| bad("bulk string is not UTF-8"))
        }
        _ => Err(bad(format!("unexpected reply {line:?}"))),
    }
}

impl KvStore for RedisStore {
    fn get(&mut self, key: &str) -> Result<Option<String>, StoreError> {
        match self.command(&["GET", key])? {
            Reply::Bulk(v) => Ok(v),
            Reply::Error(e) => Err(StoreError::Server(e)),
            other => Err(StoreError::Protocol(format!("GET answered {other:?}"))),
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), StoreError> {
        match self.command(&["SET", key, value])? {
            Reply::Simple(s) if s == "OK" => Ok(()),
            Reply::Error(e) => Err(StoreError::Server(e)),
            other => Err(StoreError::Protocol(format!("SET answered {other:?}"))),
        }
    }
}

pub fn open_store(endpoint: &str) -> Result<Box<dyn KvStore>, StoreError> {
    if endpoint == "memory" {
        Ok(Box::new(MemoryStore::new()))
    } else if let Some(path) = endpoint.strip_prefix("file:") {
        if path.is_empty() {
            return Err(StoreError::Endpoint(endpoint.to_string()));
        }
        Ok(Box::new(FileStore::new(path)))
    } else if endpoint.starts_with("redis://") {
        Ok(Box::new(RedisStore::new(endpoint, 3)?))
    } else {
        Err(StoreError::Endpoint(endpoint.to_string()))
    }
}

pub fn save_kb(store: &mut dyn KvStore, name: &str, record: &KnowledgeBaseRecord) -> Result<(), StoreError> {
    let mut bare = record.clone();
    bare.weights = WeightVector::new();
    store.set(&format!("{KB_PREFIX}{name}"), &bare.to_json())?;
    let weights = serde_json::to_string(&record.weights).expect("weights serialize");
    store.set(&format!("{WEIGHTS_PREFIX}{name}"), &weights)
}

pub fn load_kb(store: &mut dyn KvStore, name: &str) -> Result<KnowledgeBaseRecord, StoreError> {
    let key = format!("{KB_PREFIX}{name}");
    let text = store.get(&key)?.ok_or(StoreError::Missing(key))?;
    let mut record = KnowledgeBaseRecord::from_json(&text)?;
    let key = format!("{WEIGHTS_PREFIX}{name}");
    if let Some(w) = store.get(&key)? {
        record.weights = serde_json::from_str(&w).map_err(|e| StoreError::Corrupt {
            key,
            message: e.to_string(),
        })?;
    }
    Ok(record)
}

/// Save then load, comparing canonical JSON.
pub fn kv_store_roundtrip(store: &mut dyn KvStore, record: &KnowledgeBaseRecord) -> Result<(), StoreError> {
    let name = if record.name.is_empty() {
        "default"
    } else {
        &record.name
    };
    save_kb(store, name, record)?;
    let back = load_kb(store, name)?;
    if back.to_json() == record.to_json() {
        Ok(())
    } else {
        Err(StoreError::Mismatch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_store() {
        let mut s = MemoryStore::new();
        assert_eq!(s.get("a").unwrap(), None);
        s.set("a", "1").unwrap();
        assert_eq!(s.get("a").unwrap().as_deref(), Some("1"));
    }

    #[test]
    fn parses_replies() {
        let mut r = &b"+OK\r\n$5\r\nhe\r\no\r\n$-1\r\n:42\r\n-ERR no\r\n"[..];
        assert_eq!(read_reply(&mut r).unwrap(), Reply::Simple("OK".into()));
        assert_eq!(read_reply(&mut r).unwrap(), Reply::Bulk(Some("he\r\no".into())));
        assert_eq!(read_reply(&mut r).unwrap(), Reply::Bulk(None));
        assert_eq!(read_reply(&mut r).unwrap(), Reply::Integer(42));
        assert_eq!(read_reply(&mut r).unwrap(), Reply::Error("ERR no".into()));
        let mut r = &b"?\r\n"[..];
        assert!(read_reply(&mut r).is_err());
    }

    #[test]
    fn endpoints() {
        assert!(open_store("memory").is_ok());
        assert!(open_store("file:/tmp/x.json").is_ok());
        assert!(open_store("redis://127.0.0.1:6379").is_ok());
        assert!(matches!(open_store("ftp://x"), Err(StoreError::Endpoint(_))));
        assert!(matches!(open_store("file:"), Err(StoreError::Endpoint(_))));
        assert!(matches!(RedisStore::new("redis://", 1), Err(StoreError::Endpoint(_))));
    }
}
