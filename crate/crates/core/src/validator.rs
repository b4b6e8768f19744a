//! Validator service: a loopback TCP server that judges candidate inputs.
//!
//! Harness clients open a connection, send one message, and close. A message
//! is the ASCII hex of the raw encoded message (either case), optionally
//! followed by a comma and a decimal status code where `-1` reports a
//! subject crash. The service runs the format oracle on the decoded bytes
//! and appends one JSON record per completed connection to a campaign log,
//! one object per line.
//!
//! Concurrency: the accept loop hands each connection to its own thread;
//! all records funnel through a single writer thread so lines never
//! interleave. [`ValidatorHandle::shutdown`] drains connections that were
//! already pending, joins every handler, flushes the log, and reports the
//! final record count.

use crate::pkcs1::{validate, OracleParams, ReasonCode};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Duration;
use thiserror::Error;

/// One validated input, as stored in the campaign log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    /// Arrival time, milliseconds since the Unix epoch.
    #[serde(with = "chrono::serde::ts_milliseconds")]
    pub timestamp: DateTime<Utc>,
    pub campaign_id: String,
    /// Lowercase hex of the exact bytes the oracle judged. Empty when the
    /// wire payload could not be decoded to bytes at all.
    pub hex: String,
    pub valid: bool,
    pub reasons: Vec<ReasonCode>,
    pub crashed: bool,
    /// Harness status code, when the message carried one. `-1` means crash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<i64>,
}

/// Crash status code on the wire.
pub const CRASH_STATUS: i64 = -1;

/// A decoded wire message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    /// Hex decoded successfully.
    Input { em: Vec<u8>, status: Option<i64> },
    /// Non-hex payload or unparseable status.
    Garbled,
}

/// Decode one wire message: `<hex>[,<status>]`, surrounding whitespace
/// ignored.
pub fn parse_wire_message(msg: &str) -> WireMessage {
    let msg = msg.trim();
    let (hex_part, status_part) = match msg.split_once(',') {
        Some((h, s)) => (h.trim(), Some(s.trim())),
        None => (msg, None),
    };
    let status = match status_part {
        Some(s) => match s.parse::<i64>() {
            Ok(v) => Some(v),
            Err(_) => return WireMessage::Garbled,
        },
        None => None,
    };
    match hex::decode(hex_part) {
        Ok(em) => WireMessage::Input { em, status },
        Err(_) => WireMessage::Garbled,
    }
}

/// Build the record for one completed connection.
fn record_for(msg: &str, params: &OracleParams, campaign_id: &str) -> InputRecord {
    let (hex_str, valid, reasons, status) = match parse_wire_message(msg) {
        WireMessage::Input { em, status } => {
            let verdict = validate(&em, params);
            (
                hex::encode(&em),
                verdict.valid(),
                verdict.reasons().to_vec(),
                status,
            )
        }
        WireMessage::Garbled => (String::new(), false, vec![ReasonCode::WireDecodeError], None),
    };
    // Truncate to the millisecond precision of the log format so a record
    // survives a write/read round trip unchanged.
    let now = Utc::now();
    let timestamp = DateTime::from_timestamp_millis(now.timestamp_millis()).unwrap_or(now);
    InputRecord {
        timestamp,
        campaign_id: campaign_id.to_string(),
        hex: hex_str,
        valid,
        reasons,
        crashed: status == Some(CRASH_STATUS),
        status,
    }
}

/// Running service. Dropping the handle shuts the service down; call
/// [`ValidatorHandle::shutdown`] to also learn the final record count.
#[derive(Debug)]
pub struct ValidatorHandle {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    written: Arc<AtomicU64>,
    accept_thread: Option<thread::JoinHandle<()>>,
}

impl ValidatorHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn port(&self) -> u16 {
        self.local_addr.port()
    }

    /// Records written and flushed so far.
    pub fn record_count(&self) -> u64 {
        self.written.load(Ordering::SeqCst)
    }

    /// Stop accepting, drain pending connections, flush the log, and return
    /// the total number of records written.
    pub fn shutdown(mut self) -> u64 {
        self.stop_and_join();
        self.record_count()
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ValidatorHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

/// Start the service on `127.0.0.1:port` (`0` picks a free port).
///
/// The log file is created if missing and appended to otherwise. Fails when
/// the port is taken or the log cannot be opened.
pub fn serve(
    port: u16,
    params: OracleParams,
    log_path: &Path,
    campaign_id: &str,
) -> std::io::Result<ValidatorHandle> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    listener.set_nonblocking(true)?;
    let local_addr = listener.local_addr()?;
    let log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(log_path)?;

    let stop = Arc::new(AtomicBool::new(false));
    let written = Arc::new(AtomicU64::new(0));

    let (tx, rx) = mpsc::channel::<InputRecord>();
    let writer_counter = Arc::clone(&written);
    let writer = thread::spawn(move || {
        let mut log = log;
        for record in rx {
            let line = serde_json::to_string(&record).expect("record serializes");
            if writeln!(log, "{line}").and_then(|_| log.flush()).is_ok() {
                writer_counter.fetch_add(1, Ordering::SeqCst);
            }
        }
        let _ = log.flush();
    });

    let accept_stop = Arc::clone(&stop);
    let campaign_id = campaign_id.to_string();
    let accept_thread = thread::spawn(move || {
        let mut handlers: Vec<thread::JoinHandle<()>> = Vec::new();
        loop {
            match listener.accept() {
                Ok((stream, _)) => {
                    let tx = tx.clone();
                    let campaign_id = campaign_id.clone();
                    handlers.push(thread::spawn(move || {
                        handle_connection(stream, &params, &campaign_id, &tx);
                    }));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    // Connections that finished their handshake before a
                    // shutdown request sit in the backlog; only stop once
                    // it has been drained dry.
                    if accept_stop.load(Ordering::SeqCst) {
                        break;
                    }
                    thread::sleep(Duration::from_millis(1));
                }
                Err(_) => break,
            }
        }
        drop(listener);
        for h in handlers {
            let _ = h.join();
        }
        // Dropping the last sender ends the writer, which flushes first.
        drop(tx);
        let _ = writer.join();
    });

    Ok(ValidatorHandle {
        local_addr,
        stop,
        written,
        accept_thread: Some(accept_thread),
    })
}

fn handle_connection(
    mut stream: TcpStream,
    params: &OracleParams,
    campaign_id: &str,
    tx: &mpsc::Sender<InputRecord>,
) {
    let _ = stream.set_nonblocking(false);
    let mut raw = Vec::new();
    // A reset or otherwise incomplete connection yields no record.
    if stream.read_to_end(&mut raw).is_err() {
        return;
    }
    let msg = String::from_utf8_lossy(&raw);
    let _ = tx.send(record_for(&msg, params, campaign_id));
}

/// Submit one input the way a harness does: connect, send the hex (plus
/// `,<status>` when given), close.
pub fn send_input(addr: SocketAddr, em: &[u8], status: Option<i64>) -> std::io::Result<()> {
    let mut stream = TcpStream::connect(addr)?;
    let mut msg = hex::encode(em);
    if let Some(s) = status {
        msg.push(',');
        msg.push_str(&s.to_string());
    }
    stream.write_all(msg.as_bytes())?;
    stream.shutdown(std::net::Shutdown::Write)?;
    // Wait for the service to close its side so the record is being
    // processed before we report success.
    let mut sink = [0u8; 8];
    let _ = stream.read(&mut sink);
    Ok(())
}

/// Log reading failure.
#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("read error in {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Read every record from a JSONL campaign log.
pub fn read_records(path: &Path) -> Result<Vec<InputRecord>, LogError> {
    let file = File::open(path).map_err(|source| LogError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| LogError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_plain_hex() {
        assert_eq!(
            parse_wire_message("00aaff"),
            WireMessage::Input {
                em: vec![0x00, 0xAA, 0xFF],
                status: None
            }
        );
    }

    #[test]
    fn wire_accepts_uppercase_and_whitespace() {
        assert_eq!(
            parse_wire_message("  00AAFF\n"),
            WireMessage::Input {
                em: vec![0x00, 0xAA, 0xFF],
                status: None
            }
        );
    }

    #[test]
    fn wire_crash_marker() {
        assert_eq!(
            parse_wire_message("0001ff00aa,-1"),
            WireMessage::Input {
                em: vec![0x00, 0x01, 0xFF, 0x00, 0xAA],
                status: Some(-1)
            }
        );
    }

    #[test]
    fn wire_other_status() {
        assert_eq!(
            parse_wire_message("00,7"),
            WireMessage::Input {
                em: vec![0x00],
                status: Some(7)
            }
        );
    }

    #[test]
    fn wire_rejects_non_hex_and_bad_status() {
        assert_eq!(parse_wire_message("zz"), WireMessage::Garbled);
        assert_eq!(parse_wire_message("00aa,x"), WireMessage::Garbled);
        assert_eq!(parse_wire_message("0f0"), WireMessage::Garbled);
    }

    #[test]
    fn wire_empty_message_is_zero_bytes() {
        assert_eq!(
            parse_wire_message(""),
            WireMessage::Input {
                em: vec![],
                status: None
            }
        );
    }

    #[test]
    fn record_normalizes_hex_and_judges() {
        let params = OracleParams::new(12).unwrap();
        let rec = record_for("0001FFFFFFFFFFFFFFFF00AA", &params, "c1");
        assert_eq!(rec.hex, "0001ffffffffffffffff00aa");
        assert!(rec.valid);
        assert!(rec.reasons.is_empty());
        assert!(!rec.crashed);
        assert_eq!(rec.campaign_id, "c1");
    }

    #[test]
    fn record_for_garbled_wire() {
        let params = OracleParams::new(12).unwrap();
        let rec = record_for("zz", &params, "c1");
        assert!(!rec.valid);
        assert_eq!(rec.reasons, vec![ReasonCode::WireDecodeError]);
        assert_eq!(rec.hex, "");
    }

    #[test]
    fn record_crash_flag_follows_status() {
        let params = OracleParams::new(12).unwrap();
        assert!(record_for("00,-1", &params, "c").crashed);
        assert!(!record_for("00,0", &params, "c").crashed);
        assert!(!record_for("00", &params, "c").crashed);
        assert_eq!(record_for("00,3", &params, "c").status, Some(3));
    }

    #[test]
    fn record_serde_round_trip() {
        let params = OracleParams::new(12).unwrap();
        let rec = record_for("0001ff00aa,-1", &params, "c9");
        let line = serde_json::to_string(&rec).unwrap();
        let back: InputRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
        // Status is omitted when absent.
        let plain = record_for("00", &params, "c9");
        assert!(!serde_json::to_string(&plain).unwrap().contains("status"));
    }
}
