//! Pinned simulator output. Set `ATRELLIS_BLESS=1` to rewrite the golden files
//! after an intended change to generation.

use std::fs;
use std::net::Ipv4Addr;
use std::path::PathBuf;

use atrellis::synth::{generate, ActivitySpec, DeviceSpec, RemoteSpec, SizeWeight, SrcPortSpec};
use atrellis::traffic::{read_packets, write_packets, Proto};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn check(name: &str, actual: &[u8]) {
    let path = golden(name);
    if std::env::var_os("ATRELLIS_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from the golden file");
}

fn beacon() -> DeviceSpec {
    DeviceSpec {
        device_ip: Ipv4Addr::new(192, 168, 1, 20),
        activities: vec![ActivitySpec {
            name: "beacon".into(),
            remote: RemoteSpec::Ip {
                ip: Ipv4Addr::new(198, 51, 100, 7),
            },
            dst_port: 443,
            proto: Proto::Tcp,
            src_port: SrcPortSpec::Ephemeral,
            period: 10.0,
            jitter: 1.0,
            sizes: vec![SizeWeight { size: 120, prob: 1.0 }],
            packets_per_burst: [1, 1],
            intra_gap: 0.1,
            inbound_fraction: 0.0,
            duration: None,
        }],
    }
}

#[test]
fn one_activity_minute() {
    let packets = generate(&beacon(), 60.0, 42).unwrap();
    assert!((5..=7).contains(&packets.len()), "{} packets", packets.len());
    let mut bytes = Vec::new();
    write_packets(&mut bytes, &packets).unwrap();
    check("one_activity_60s.jsonl", &bytes);
    assert_eq!(read_packets(bytes.as_slice(), true).unwrap(), packets);
}
