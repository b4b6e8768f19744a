//! End-to-end tests of the validator service over real sockets.

use fuzzeval::pkcs1::{build_em, validate, OracleParams, ReasonCode};
use fuzzeval::validator::{read_records, send_input, serve, ValidatorHandle};
use std::io::Write;
use std::net::TcpStream;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

fn params12() -> OracleParams {
    OracleParams::new(12).unwrap()
}

fn start(dir: &tempfile::TempDir, name: &str) -> (ValidatorHandle, PathBuf) {
    let log = dir.path().join(name);
    let handle = serve(0, params12(), &log, "test-campaign").expect("service starts");
    (handle, log)
}

/// Send a raw wire string on a fresh connection.
fn send_raw(handle: &ValidatorHandle, msg: &str) {
    let mut stream = TcpStream::connect(handle.local_addr()).unwrap();
    stream.write_all(msg.as_bytes()).unwrap();
    stream.shutdown(std::net::Shutdown::Write).unwrap();
    use std::io::Read;
    let mut sink = [0u8; 1];
    let _ = stream.read(&mut sink);
}

fn wait_for_count(handle: &ValidatorHandle, want: u64) {
    for _ in 0..5000 {
        if handle.record_count() >= want {
            return;
        }
        thread::sleep(Duration::from_millis(1));
    }
    panic!(
        "timed out waiting for {want} records, have {}",
        handle.record_count()
    );
}

#[test]
fn valid_input_round_trips_to_log() {
    let dir = tempfile::tempdir().unwrap();
    let (handle, log) = start(&dir, "valid.jsonl");
    let em = build_em(&[0xAA], &params12()).unwrap();
    send_input(handle.local_addr(), &em, None).unwrap();
    wait_for_count(&handle, 1);
    assert_eq!(handle.shutdown(), 1);

    let records = read_records(&log).unwrap();
    assert_eq!(records.len(), 1);
    let rec = &records[0];
    assert_eq!(rec.hex, hex::encode(&em));
    assert!(rec.valid);
    assert!(rec.reasons.is_empty());
    assert!(!rec.crashed);
    assert_eq!(rec.campaign_id, "test-campaign");
    assert_eq!(rec.status, None);
}

#[test]
fn crash_marker_sets_crashed() {
    let dir = tempfile::tempdir().unwrap();
    let (handle, log) = start(&dir, "crash.jsonl");
    send_raw(&handle, "0001ff00aa,-1");
    wait_for_count(&handle, 1);
    handle.shutdown();

    let records = read_records(&log).unwrap();
    assert_eq!(records.len(), 1);
    assert!(records[0].crashed);
    assert_eq!(records[0].status, Some(-1));
    assert_eq!(records[0].hex, "0001ff00aa");
    assert!(!records[0].valid);
}

#[test]
fn non_hex_payload_is_a_wire_decode_error() {
    let dir = tempfile::tempdir().unwrap();
    let (handle, log) = start(&dir, "garbled.jsonl");
    send_raw(&handle, "zz");
    wait_for_count(&handle, 1);
    handle.shutdown();

    let records = read_records(&log).unwrap();
    assert_eq!(records[0].reasons, vec![ReasonCode::WireDecodeError]);
    assert!(!records[0].valid);
}

#[test]
fn no_records_lost_under_concurrent_clients() {
    let dir = tempfile::tempdir().unwrap();
    let (handle, log) = start(&dir, "concurrent.jsonl");
    let addr = handle.local_addr();

    let clients: Vec<_> = (0..100u16)
        .map(|i| {
            thread::spawn(move || {
                let em = build_em(&[i as u8], &params12()).unwrap();
                send_input(addr, &em, None).unwrap();
            })
        })
        .collect();
    for c in clients {
        c.join().unwrap();
    }
    wait_for_count(&handle, 100);
    assert_eq!(handle.shutdown(), 100);

    let records = read_records(&log).unwrap();
    assert_eq!(records.len(), 100);
    // Every payload arrived exactly once, whatever the order.
    let mut payloads: Vec<u8> = records
        .iter()
        .map(|r| *hex::decode(&r.hex).unwrap().last().unwrap())
        .collect();
    payloads.sort_unstable();
    assert_eq!(payloads, (0..100u8).collect::<Vec<_>>());
    assert!(records.iter().all(|r| r.valid));
}

#[test]
fn logged_verdicts_reproduce_under_revalidation() {
    let dir = tempfile::tempdir().unwrap();
    let (handle, log) = start(&dir, "reval.jsonl");
    let addr = handle.local_addr();
    let params = params12();

    send_input(addr, &build_em(&[0x01], &params).unwrap(), None).unwrap();
    send_input(addr, &[0x00, 0x01, 0xFF], None).unwrap();
    send_input(addr, &[0xAB; 12], Some(3)).unwrap();
    wait_for_count(&handle, 3);
    handle.shutdown();

    for rec in read_records(&log).unwrap() {
        let bytes = hex::decode(&rec.hex).unwrap();
        let verdict = validate(&bytes, &params);
        assert_eq!(rec.valid, verdict.valid(), "{}", rec.hex);
        assert_eq!(rec.reasons, verdict.reasons(), "{}", rec.hex);
    }
}

#[test]
fn shutdown_with_no_traffic_returns_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (handle, log) = start(&dir, "empty.jsonl");
    assert_eq!(handle.shutdown(), 0);
    assert_eq!(read_records(&log).unwrap().len(), 0);
}

#[test]
fn in_flight_connection_survives_shutdown() {
    let dir = tempfile::tempdir().unwrap();
    let (handle, log) = start(&dir, "race.jsonl");

    // Connect first, shut down second, send third: the record must still
    // be written before shutdown returns.
    let mut stream = TcpStream::connect(handle.local_addr()).unwrap();
    let sender = thread::spawn(move || {
        thread::sleep(Duration::from_millis(30));
        stream.write_all(b"0001ffffffffffffffff00aa").unwrap();
        stream.shutdown(std::net::Shutdown::Write).unwrap();
    });
    let total = handle.shutdown();
    sender.join().unwrap();

    assert_eq!(total, 1);
    let records = read_records(&log).unwrap();
    assert_eq!(records.len(), 1);
    assert!(records[0].valid);
}

#[test]
fn port_in_use_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    let (handle, _) = start(&dir, "first.jsonl");
    let err = serve(
        handle.port(),
        params12(),
        &dir.path().join("second.jsonl"),
        "other",
    );
    assert!(err.is_err());
    handle.shutdown();
}

#[test]
fn timestamps_lie_within_the_service_lifetime() {
    let dir = tempfile::tempdir().unwrap();
    let before = chrono::Utc::now() - chrono::Duration::milliseconds(1);
    let (handle, log) = start(&dir, "time.jsonl");
    for i in 0..5u8 {
        send_input(handle.local_addr(), &[i], None).unwrap();
    }
    wait_for_count(&handle, 5);
    handle.shutdown();
    let after = chrono::Utc::now() + chrono::Duration::milliseconds(1);

    let records = read_records(&log).unwrap();
    assert_eq!(records.len(), 5);
    for rec in &records {
        assert!(rec.timestamp >= before && rec.timestamp <= after);
    }
}

#[test]
fn empty_connection_still_counts_as_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let (handle, log) = start(&dir, "bare.jsonl");
    send_raw(&handle, "");
    wait_for_count(&handle, 1);
    handle.shutdown();

    let records = read_records(&log).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].hex, "");
    assert!(!records[0].valid);
    assert!(records[0].reasons.contains(&ReasonCode::LengthMismatch));
}
