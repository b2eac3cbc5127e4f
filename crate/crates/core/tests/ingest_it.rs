mod common;

use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant};

use hypertraffic::ingest::{
    encode_ipv4_frame, parse_ethernet_frame, parse_pcap, recv_records, send_records, synth_uniform, LinkReceiver,
    PcapWriter, SendOptions, Transport,
};
use hypertraffic::{IngestStats, PacketRecord};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn golden_capture() {
    let bytes = std::fs::read(fixture("golden.pcap")).unwrap();
    let (records, stats) = parse_pcap(bytes.as_slice()).unwrap();
    assert_eq!(
        records,
        vec![
            PacketRecord::new(0x0a00_0001, 0x0a00_0002),
            PacketRecord::new(0xc0a8_0101, 0x0a00_0002),
            PacketRecord::new(0x0a00_0001, 0x0a00_0002),
        ]
    );
    assert_eq!(stats, IngestStats { accepted: 3, dropped_non_ipv4: 1, ..Default::default() });
}

#[test]
fn writer_then_parser_round_trip() {
    for nanos in [false, true] {
        let records = synth_uniform(17, 2500);
        let mut w = PcapWriter::with_resolution(Vec::new(), nanos).unwrap();
        for (i, r) in records.iter().enumerate() {
            w.write_record(i as u32, (i % 1000) as u32, *r).unwrap();
        }
        let bytes = w.finish().unwrap();
        let (back, stats) = parse_pcap(bytes.as_slice()).unwrap();
        assert_eq!(back, records);
        assert_eq!(stats.accepted, 2500);
        assert_eq!(stats.dropped(), 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn frame_parser_is_total(frame in prop::collection::vec(any::<u8>(), 0..128)) {
        let mut stats = IngestStats::default();
        let got = stats.observe_frame(&frame);
        prop_assert_eq!(got, parse_ethernet_frame(&frame).ok());
        prop_assert_eq!(stats.examined(), 1);
        prop_assert_eq!(stats.accepted, u64::from(got.is_some()));
    }

    #[test]
    fn encoded_frames_parse_back(src in any::<u32>(), dst in any::<u32>()) {
        let r = PacketRecord::new(src, dst);
        prop_assert_eq!(parse_ethernet_frame(&encode_ipv4_frame(r)), Ok(r));
    }

    #[test]
    fn pcap_parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let mut data = vec![0xd4, 0xc3, 0xb2, 0xa1, 2, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xff, 0xff, 0, 0, 1, 0, 0, 0];
        data.extend_from_slice(&bytes);
        if let Ok((records, stats)) = parse_pcap(data.as_slice()) {
            prop_assert_eq!(records.len() as u64, stats.accepted);
        }
    }
}

#[test]
fn lossless_transport_preserves_sequence() {
    let rx = LinkReceiver::bind("127.0.0.1:0", Transport::Lossless).unwrap();
    let addr = rx.local_addr().to_string();
    let records = synth_uniform(4, 50_000);
    let expected = records.clone();
    let sender = thread::spawn(move || {
        send_records(&addr, records, &SendOptions { transport: Transport::Lossless, ..Default::default() }).unwrap()
    });
    let (got, stats) = hypertraffic::ingest::link::collect_stream(rx.open().unwrap()).unwrap();
    assert_eq!(sender.join().unwrap(), 50_000);
    assert_eq!(got, expected);
    assert_eq!(stats.accepted, 50_000);
    assert_eq!(stats.dropped(), 0);
}

#[test]
fn rate_limited_send_for_one_second() {
    let rx = LinkReceiver::bind("127.0.0.1:0", Transport::Lossless).unwrap();
    let addr = rx.local_addr().to_string();
    let receiver = thread::spawn(move || hypertraffic::ingest::link::collect_stream(rx.open().unwrap()).unwrap());
    let opts = SendOptions {
        transport: Transport::Lossless,
        rate_limit: Some(1e5),
        duration: Some(Duration::from_secs(1)),
    };
    let started = Instant::now();
    let sent = send_records(&addr, hypertraffic::ingest::SynthUniform::new(1), &opts).unwrap();
    let elapsed = started.elapsed();
    let (got, _) = receiver.join().unwrap();
    assert!((90_000..=110_000).contains(&sent), "sent {sent} in {elapsed:?}");
    assert_eq!(got.len() as u64, sent);
}

#[test]
fn recv_records_helper_with_idle_timeout() {
    let (records, stats) = recv_records("127.0.0.1:0", Transport::Datagram, Some(Duration::from_millis(200))).unwrap();
    assert!(records.is_empty());
    assert_eq!(stats, IngestStats::default());
}
