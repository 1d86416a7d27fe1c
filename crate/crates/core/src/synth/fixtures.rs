use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ActivitySpec, AttackKind, AttackSpec, DeviceSpec, DomainHost, RemoteSpec, SizeWeight, SrcPortSpec};
use crate::error::{Error, Result};
use crate::traffic::Proto;

const GATEWAY: Ipv4Addr = Ipv4Addr::new(192, 168, 1, 1);

/// Bundled device profiles. Packet sizes never repeat across activities, in
/// any fixture, so activities stay separable by size alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    Camera,
    Plug,
    Speaker,
    Hub,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [Fixture::Camera, Fixture::Plug, Fixture::Speaker, Fixture::Hub];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Camera => "camera",
            Fixture::Plug => "plug",
            Fixture::Speaker => "speaker",
            Fixture::Hub => "hub",
        }
    }

    pub fn device_ip(self) -> Ipv4Addr {
        match self {
            Fixture::Camera => Ipv4Addr::new(192, 168, 1, 10),
            Fixture::Plug => Ipv4Addr::new(192, 168, 1, 11),
            Fixture::Speaker => Ipv4Addr::new(192, 168, 1, 12),
            Fixture::Hub => Ipv4Addr::new(192, 168, 1, 13),
        }
    }

    pub fn spec(self) -> DeviceSpec {
        let activities = match self {
            Fixture::Camera => vec![
                domain(
                    "video-upload",
                    &[("stream.camvendor.com", [198, 51, 100, 20])],
                    443,
                    Proto::Tcp,
                )
                .timing(60.0, 5.0, [10, 14], 0.02)
                .sizes(&[(1348, 0.3), (1400, 0.4), (1452, 0.3)])
                .inbound(0.2),
                ip("stun-keepalive", [203, 0, 113, 50], 3478, Proto::Udp)
                    .timing(30.0, 3.0, [2, 2], 0.05)
                    .sizes(&[(108, 0.5), (120, 0.5)])
                    .inbound(0.5),
                ip("dns", GATEWAY.octets(), 53, Proto::Udp)
                    .timing(45.0, 5.0, [2, 2], 0.01)
                    .sizes(&[(76, 0.5), (92, 0.5)])
                    .inbound(1.0),
                domain(
                    "firmware-check",
                    &[("fw.camvendor.com", [198, 51, 100, 21])],
                    80,
                    Proto::Tcp,
                )
                .timing(60.0, 6.0, [5, 7], 0.1)
                .sizes(&[(412, 0.4), (436, 0.3), (520, 0.3)])
                .inbound(0.4),
            ],
            Fixture::Plug => vec![
                domain(
                    "heartbeat",
                    &[
                        ("hb1.plugcloud.net", [198, 51, 100, 30]),
                        ("hb2.plugcloud.net", [198, 51, 100, 31]),
                    ],
                    8883,
                    Proto::Tcp,
                )
                .timing(30.0, 2.0, [3, 4], 0.08)
                .sizes(&[(140, 0.5), (156, 0.5)])
                .inbound(0.4),
                ip("ntp", [198, 51, 100, 123], 123, Proto::Udp)
                    .timing(64.0, 1.0, [2, 2], 0.03)
                    .sizes(&[(90, 1.0)])
                    .inbound(1.0)
                    .fixed_src(123),
                ip("dns", GATEWAY.octets(), 53, Proto::Udp)
                    .timing(50.0, 5.0, [2, 2], 0.01)
                    .sizes(&[(78, 0.5), (94, 0.5)])
                    .inbound(1.0),
                domain(
                    "status-report",
                    &[("api.plugcloud.net", [198, 51, 100, 32])],
                    80,
                    Proto::Tcp,
                )
                .timing(60.0, 6.0, [4, 6], 0.12)
                .sizes(&[(300, 0.4), (332, 0.3), (348, 0.3)])
                .inbound(0.4),
            ],
            Fixture::Speaker => vec![
                domain(
                    "audio-stream",
                    &[("audio.speakerco.com", [198, 51, 100, 40])],
                    443,
                    Proto::Tcp,
                )
                .timing(45.0, 4.0, [12, 16], 0.03)
                .sizes(&[(1024, 0.3), (1100, 0.4), (1180, 0.3)])
                .inbound(0.7),
                ip("ntp", [198, 51, 100, 124], 123, Proto::Udp)
                    .timing(64.0, 1.0, [2, 2], 0.03)
                    .sizes(&[(98, 1.0)])
                    .inbound(1.0)
                    .fixed_src(123),
                ip("dns", GATEWAY.octets(), 53, Proto::Udp)
                    .timing(40.0, 4.0, [2, 2], 0.01)
                    .sizes(&[(80, 0.5), (96, 0.5)])
                    .inbound(1.0),
                domain(
                    "update-check",
                    &[("update.speakerco.com", [198, 51, 100, 41])],
                    80,
                    Proto::Tcp,
                )
                .timing(60.0, 6.0, [5, 7], 0.1)
                .sizes(&[(610, 0.4), (660, 0.3), (700, 0.3)])
                .inbound(0.4),
            ],
            Fixture::Hub => vec![
                ip("ssdp", [239, 255, 255, 250], 1900, Proto::Udp)
                    .timing(60.0, 5.0, [2, 2], 0.2)
                    .sizes(&[(165, 0.5), (175, 0.5)]),
                domain(
                    "cloud-sync",
                    &[("mqtt.hubcloud.io", [198, 51, 100, 50])],
                    8883,
                    Proto::Tcp,
                )
                .timing(30.0, 3.0, [3, 5], 0.06)
                .sizes(&[(200, 0.4), (216, 0.3), (232, 0.3)])
                .inbound(0.5),
                ip("dns", GATEWAY.octets(), 53, Proto::Udp)
                    .timing(45.0, 5.0, [2, 2], 0.01)
                    .sizes(&[(82, 0.5), (100, 0.5)])
                    .inbound(1.0),
                domain(
                    "rules-fetch",
                    &[("api.hubcloud.io", [198, 51, 100, 51])],
                    80,
                    Proto::Tcp,
                )
                .timing(60.0, 6.0, [4, 6], 0.1)
                .sizes(&[(760, 0.4), (790, 0.3), (820, 0.3)])
                .inbound(0.4),
            ],
        };
        DeviceSpec {
            device_ip: self.device_ip(),
            activities,
        }
    }

    /// One attack of each kind, spread over `[duration / 4, duration)`.
    pub fn attacks(self, duration: f64) -> Vec<AttackSpec> {
        let src = self.device_ip();
        let (web_domain, flood) = match self {
            Fixture::Camera => ("fw.camvendor.com", Target::Ip([203, 0, 113, 50], 3478, Proto::Udp)),
            Fixture::Plug => ("api.plugcloud.net", Target::Domain("hb1.plugcloud.net", 8883)),
            Fixture::Speaker => ("update.speakerco.com", Target::Ip([192, 168, 1, 1], 53, Proto::Udp)),
            Fixture::Hub => ("api.hubcloud.io", Target::Domain("mqtt.hubcloud.io", 8883)),
        };
        let slot = duration / 16.0;
        let at = |k: f64| duration / 4.0 + k * 3.0 * slot;
        let base = |kind, start: f64, window: f64, rate| AttackSpec {
            kind,
            source: src,
            start,
            duration: window,
            rate,
            target_ip: None,
            target_domain: None,
            target_port: None,
            proto: None,
        };
        let mut scan = base(AttackKind::PortScan, at(0.0), slot, 100.0 / slot);
        scan.target_ip = Some(Ipv4Addr::new(192, 168, 1, 200));
        let mut brute = base(AttackKind::TelnetBrute, at(1.0), slot, 40.0 / slot);
        brute.target_ip = Some(Ipv4Addr::new(192, 168, 1, 201));
        let mut cnc = base(AttackKind::HttpMasqCnc, at(2.0), slot, 1.0 / 5.0);
        cnc.target_domain = Some(web_domain.to_string());
        let mut fl = base(AttackKind::Flood, at(3.0), slot, 40.0 / slot);
        match flood {
            Target::Ip(ip, port, proto) => {
                fl.target_ip = Some(Ipv4Addr::from(ip));
                fl.target_port = Some(port);
                fl.proto = Some(proto);
            }
            Target::Domain(name, port) => {
                fl.target_domain = Some(name.to_string());
                fl.target_port = Some(port);
                fl.proto = Some(Proto::Tcp);
            }
        }
        vec![scan, brute, cnc, fl]
    }
}

enum Target {
    Ip([u8; 4], u16, Proto),
    Domain(&'static str, u16),
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::BadSpec(format!("unknown fixture {s:?}")))
    }
}

fn activity(name: &str, remote: RemoteSpec, dst_port: u16, proto: Proto) -> ActivitySpec {
    ActivitySpec {
        name: name.to_string(),
        remote,
        dst_port,
        proto,
        src_port: SrcPortSpec::Ephemeral,
        period: 60.0,
        jitter: 0.0,
        sizes: Vec::new(),
        packets_per_burst: [1, 1],
        intra_gap: 0.1,
        inbound_fraction: 0.0,
        duration: None,
    }
}

fn domain(name: &str, hosts: &[(&str, [u8; 4])], dst_port: u16, proto: Proto) -> ActivitySpec {
    let hosts = hosts
        .iter()
        .map(|(n, ip)| DomainHost {
            name: n.to_string(),
            ip: Ipv4Addr::from(*ip),
        })
        .collect();
    activity(name, RemoteSpec::Domain { hosts }, dst_port, proto)
}

fn ip(name: &str, ip: [u8; 4], dst_port: u16, proto: Proto) -> ActivitySpec {
    activity(name, RemoteSpec::Ip { ip: Ipv4Addr::from(ip) }, dst_port, proto)
}

impl ActivitySpec {
    fn timing(mut self, period: f64, jitter: f64, burst: [u32; 2], gap: f64) -> Self {
        self.period = period;
        self.jitter = jitter;
        self.packets_per_burst = burst;
        self.intra_gap = gap;
        self
    }

    fn sizes(mut self, sizes: &[(u16, f64)]) -> Self {
        self.sizes = sizes.iter().map(|&(size, prob)| SizeWeight { size, prob }).collect();
        self
    }

    fn inbound(mut self, fraction: f64) -> Self {
        self.inbound_fraction = fraction;
        self
    }

    fn fixed_src(mut self, port: u16) -> Self {
        self.src_port = SrcPortSpec::Fixed(port);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn fixtures_are_valid_and_sizes_never_repeat() {
        let mut seen = BTreeSet::new();
        for f in Fixture::ALL {
            let spec = f.spec();
            spec.validate().unwrap();
            assert_eq!(spec.activities.len(), 4);
            assert!(spec
                .activities
                .iter()
                .any(|a| a.dst_port == 80 && a.proto == Proto::Tcp));
            for a in &spec.activities {
                for s in &a.sizes {
                    assert!(seen.insert(s.size), "{} reuses size {}", a.name, s.size);
                }
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for f in Fixture::ALL {
            assert_eq!(f.name().parse::<Fixture>().unwrap(), f);
        }
        assert!("toaster".parse::<Fixture>().is_err());
    }

    #[test]
    fn canned_attacks_fit_the_window() {
        for f in Fixture::ALL {
            for a in f.attacks(3600.0) {
                assert!(a.start >= 0.0 && a.start + a.duration <= 3600.0, "{a:?}");
            }
        }
    }
}
