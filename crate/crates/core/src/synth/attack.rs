use std::collections::BTreeSet;
use std::fmt;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{round_us, sort_by_time, EPHEMERAL_MIN};
use crate::error::{Error, Result};
use crate::traffic::{normalize_domain, Label, PacketRecord, Proto};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttackKind {
    PortScan,
    TelnetBrute,
    Flood,
    HttpMasqCnc,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [
        AttackKind::PortScan,
        AttackKind::TelnetBrute,
        AttackKind::Flood,
        AttackKind::HttpMasqCnc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::PortScan => "PortScan",
            AttackKind::TelnetBrute => "TelnetBrute",
            AttackKind::Flood => "Flood",
            AttackKind::HttpMasqCnc => "HttpMasqCnc",
        }
    }

    pub fn label(self) -> Label {
        Label::Attack(self.name().to_string())
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One attack episode launched from a compromised device.
///
/// `rate` counts events per second over `[start, start + duration)`: probed
/// ports for PortScan, login attempts for TelnetBrute, connections for Flood
/// and beacons for HttpMasqCnc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub source: Ipv4Addr,
    pub start: f64,
    pub duration: f64,
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_ip: Option<Ipv4Addr>,
    /// Resolved to an address through the trace's own DNS-annotated packets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_port: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proto: Option<Proto>,
}

const TELNET_PORT: u16 = 23;
const HTTP_PORT: u16 = 80;
const FLOOD_PACKETS: usize = 40;
const FLOOD_SIZES: [u16; 2] = [1480, 1500];
const BEACON_GAP: f64 = 0.25;
/// Candidate beacon sizes; the first four absent from the trace are used.
const BEACON_CANDIDATES: std::ops::RangeInclusive<u16> = 233..=299;

fn bad(msg: impl Into<String>) -> Error {
    Error::BadSpec(msg.into())
}

impl AttackSpec {
    fn validate(&self, trace_end: f64) -> Result<()> {
        if !(self.start >= 0.0) || !self.start.is_finite() {
            return Err(bad("attack start must be a non-negative time"));
        }
        if self.start > trace_end {
            return Err(bad(format!(
                "attack start {} is after the trace ends at {trace_end}",
                self.start
            )));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(bad("attack duration must be non-negative"));
        }
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(bad("attack rate must be positive"));
        }
        Ok(())
    }

    fn events(&self) -> usize {
        // Small slack so that e.g. 100 events over a float window stay 100.
        (self.duration * self.rate + 1e-9).floor() as usize
    }

    fn event_time(&self, i: usize) -> f64 {
        self.start + i as f64 / self.rate
    }
}

#[derive(Clone)]
struct Endpoint {
    ip: Ipv4Addr,
    dns_name: Option<String>,
    port: u16,
    proto: Proto,
}

fn resolve(trace: &[PacketRecord], atk: &AttackSpec, port: Option<u16>, proto: Option<Proto>) -> Result<Endpoint> {
    let (ip, dns_name) = match (&atk.target_domain, atk.target_ip) {
        (Some(name), _) => {
            let name = normalize_domain(name).ok_or_else(|| bad("empty target domain"))?;
            let ip = trace
                .iter()
                .find_map(|p| {
                    (p.dns_name.as_deref() == Some(name.as_str())).then(|| {
                        if p.src_ip == atk.source {
                            p.dst_ip
                        } else {
                            p.src_ip
                        }
                    })
                })
                .ok_or_else(|| bad(format!("target domain {name} never appears in the trace")))?;
            (ip, Some(name))
        }
        (None, Some(ip)) => (ip, None),
        (None, None) => return Err(bad(format!("{} needs target_ip or target_domain", atk.kind))),
    };
    let port = port
        .or(atk.target_port)
        .ok_or_else(|| bad(format!("{} needs target_port", atk.kind)))?;
    Ok(Endpoint {
        ip,
        dns_name,
        port,
        proto: proto.or(atk.proto).unwrap_or(Proto::Tcp),
    })
}

/// Source ports for attack flows, skipping any the device already uses so
/// attack packets never join a benign flow.
struct FreshPorts {
    used: BTreeSet<u16>,
    next: u16,
}

impl FreshPorts {
    fn new(trace: &[PacketRecord], device: Ipv4Addr, rng: &mut ChaCha8Rng) -> Self {
        let used = trace
            .iter()
            .map(|p| if p.src_ip == device { p.src_port } else { p.dst_port })
            .collect();
        FreshPorts {
            used,
            next: rng.random_range(EPHEMERAL_MIN..=u16::MAX),
        }
    }

    fn take(&mut self) -> u16 {
        loop {
            let p = self.next;
            self.next = if p == u16::MAX { EPHEMERAL_MIN } else { p + 1 };
            if self.used.insert(p) {
                return p;
            }
        }
    }
}

struct Emitter<'a> {
    atk: &'a AttackSpec,
    out: Vec<PacketRecord>,
}

impl Emitter<'_> {
    fn packet(&mut self, ts: f64, ep: &Endpoint, src_port: u16, length: u16, inbound: bool) {
        let pkt = PacketRecord {
            ts: round_us(ts),
            src_ip: self.atk.source,
            dst_ip: ep.ip,
            src_port,
            dst_port: ep.port,
            proto: ep.proto,
            length,
            dns_name: ep.dns_name.clone(),
            label: Some(self.atk.kind.label()),
        };
        self.out.push(if inbound { pkt.swapped() } else { pkt });
    }
}

/// Merges one attack episode into a time-ordered trace.
pub fn inject_attack(trace: &[PacketRecord], atk: &AttackSpec, seed: u64) -> Result<Vec<PacketRecord>> {
    let trace_end = trace.last().map_or(0.0, |p| p.ts);
    atk.validate(trace_end)?;
    if trace.windows(2).any(|w| w[1].ts < w[0].ts) {
        return Err(bad("trace must be time-ordered"));
    }
    let n = atk.events();
    if n == 0 {
        return Ok(trace.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ports = FreshPorts::new(trace, atk.source, &mut rng);
    let mut em = Emitter { atk, out: Vec::new() };

    match atk.kind {
        AttackKind::PortScan => {
            let ep = resolve(trace, atk, Some(1), Some(Proto::Tcp))?;
            let sport = ports.take();
            let probes = n.min(u16::MAX as usize);
            for i in 0..probes {
                let t = atk.event_time(i);
                let ep = Endpoint {
                    port: i as u16 + 1,
                    dns_name: None,
                    ..ep.clone()
                };
                em.packet(t, &ep, sport, 58, false);
                em.packet(t + 0.0005, &ep, sport, 54, true);
            }
        }
        AttackKind::TelnetBrute => {
            let ep = resolve(trace, atk, Some(TELNET_PORT), Some(Proto::Tcp))?;
            for i in 0..n {
                let sport = ports.take();
                let mut t = atk.event_time(i);
                for (k, len) in [74u16, 66, 88, 71, 95, 66].into_iter().enumerate() {
                    em.packet(t, &ep, sport, len, k % 2 == 1);
                    t += rng.random_range(0.02..0.06);
                }
            }
        }
        AttackKind::Flood => {
            let ep = resolve(trace, atk, None, None)?;
            for i in 0..n {
                let sport = ports.take();
                let mut t = atk.event_time(i);
                for _ in 0..FLOOD_PACKETS {
                    let len = FLOOD_SIZES[rng.random_range(0..FLOOD_SIZES.len())];
                    em.packet(t, &ep, sport, len, false);
                    t += rng.random_range(0.0005..0.0015);
                }
            }
        }
        AttackKind::HttpMasqCnc => {
            let ep = resolve(trace, atk, Some(HTTP_PORT), Some(Proto::Tcp))?;
            if ep.dns_name.is_none() {
                return Err(bad("HttpMasqCnc needs a target_domain"));
            }
            let benign: BTreeSet<u16> = trace.iter().map(|p| p.length).collect();
            let sizes: Vec<u16> = BEACON_CANDIDATES
                .filter(|s| !benign.contains(s))
                .step_by(7)
                .take(4)
                .collect();
            if sizes.len() < 4 {
                return Err(bad("no packet sizes left that the trace does not already use"));
            }
            for i in 0..n {
                let sport = ports.take();
                let t = atk.event_time(i);
                for (k, &len) in sizes.iter().enumerate() {
                    em.packet(t + k as f64 * BEACON_GAP, &ep, sport, len, k % 2 == 1);
                }
            }
        }
    }

    let mut merged = trace.to_vec();
    merged.extend(em.out);
    sort_by_time(&mut merged, |p| p.ts);
    Ok(merged)
}
