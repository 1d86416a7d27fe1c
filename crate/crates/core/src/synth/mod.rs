//! Seeded synthetic device traffic with labeled attack injection.

use std::net::Ipv4Addr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traffic::{Label, PacketRecord, Proto};

mod attack;
mod fixtures;

pub use attack::{inject_attack, AttackKind, AttackSpec};
pub use fixtures::Fixture;

const EPHEMERAL_MIN: u16 = 49152;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainHost {
    pub name: String,
    pub ip: Ipv4Addr,
}

/// Where an activity sends its traffic. Multicast groups are plain IPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RemoteSpec {
    /// One host is picked uniformly per burst.
    Domain {
        hosts: Vec<DomainHost>,
    },
    Ip {
        ip: Ipv4Addr,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SrcPortSpec {
    /// A fresh port from the device's allocator for every burst.
    Ephemeral,
    Fixed(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeWeight {
    pub size: u16,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivitySpec {
    pub name: String,
    pub remote: RemoteSpec,
    pub dst_port: u16,
    pub proto: Proto,
    pub src_port: SrcPortSpec,
    /// Seconds between bursts; each burst start is moved by up to `jitter`.
    pub period: f64,
    pub jitter: f64,
    pub sizes: Vec<SizeWeight>,
    /// Inclusive range.
    pub packets_per_burst: [u32; 2],
    /// Mean gap between packets of a burst; each gap varies by up to 20%.
    pub intra_gap: f64,
    /// Probability that a packet after the first travels toward the device.
    pub inbound_fraction: f64,
    /// Stop emitting after this many seconds; whole trace when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub device_ip: Ipv4Addr,
    pub activities: Vec<ActivitySpec>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadSpec(msg.into())
}

impl ActivitySpec {
    fn validate(&self) -> Result<()> {
        let n = &self.name;
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(bad(format!("{n}: period must be positive")));
        }
        if !(self.jitter >= 0.0 && self.jitter < self.period) {
            return Err(bad(format!("{n}: jitter must lie in [0, period)")));
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|s| s.size == 0 || !(s.prob >= 0.0)) {
            return Err(bad(format!("{n}: sizes must be non-empty with positive sizes")));
        }
        let total: f64 = self.sizes.iter().map(|s| s.prob).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(bad(format!("{n}: size probabilities sum to {total}")));
        }
        let [lo, hi] = self.packets_per_burst;
        if lo == 0 || lo > hi {
            return Err(bad(format!("{n}: packets_per_burst must satisfy 1 <= min <= max")));
        }
        if !(self.intra_gap >= 0.0) || !self.intra_gap.is_finite() {
            return Err(bad(format!("{n}: intra_gap must be non-negative")));
        }
        if !(0.0..=1.0).contains(&self.inbound_fraction) {
            return Err(bad(format!("{n}: inbound_fraction must lie in [0, 1]")));
        }
        if let RemoteSpec::Domain { hosts } = &self.remote {
            if hosts.is_empty() {
                return Err(bad(format!("{n}: domain remote needs at least one host")));
            }
        }
        if let Some(d) = self.duration {
            if !(d > 0.0) {
                return Err(bad(format!("{n}: duration must be positive")));
            }
        }
        Ok(())
    }
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.activities.is_empty() {
            return Err(bad("device needs at least one activity"));
        }
        self.activities.iter().try_for_each(ActivitySpec::validate)
    }
}

/// Hands out source ports in sequence from a random start, wrapping within
/// the dynamic range.
pub(crate) struct PortAllocator {
    next: u16,
}

impl PortAllocator {
    pub(crate) fn new(rng: &mut impl Rng) -> Self {
        PortAllocator {
            next: rng.random_range(EPHEMERAL_MIN..=u16::MAX),
        }
    }

    pub(crate) fn take(&mut self) -> u16 {
        let p = self.next;
        self.next = if p == u16::MAX { EPHEMERAL_MIN } else { p + 1 };
        p
    }
}

pub(crate) fn round_us(ts: f64) -> f64 {
    (ts * 1e6).round() / 1e6
}

/// Stable time sort; ties keep generation order.
pub(crate) fn sort_by_time<T>(items: &mut [T], ts: impl Fn(&T) -> f64) {
    items.sort_by(|a, b| ts(a).total_cmp(&ts(b)));
}

/// Packets plus, for each packet, the index of the activity that emitted it.
pub fn generate_annotated(spec: &DeviceSpec, duration: f64, seed: u64) -> Result<(Vec<PacketRecord>, Vec<usize>)> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(bad(format!("duration must be positive, got {duration}")));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ports = PortAllocator::new(&mut rng);
    let mut out: Vec<(PacketRecord, usize)> = Vec::new();

    for (idx, act) in spec.activities.iter().enumerate() {
        let end = act.duration.map_or(duration, |d| d.min(duration));
        let weights =
            WeightedIndex::new(act.sizes.iter().map(|s| s.prob)).map_err(|e| bad(format!("{}: {e}", act.name)))?;
        let fixed_port = match act.src_port {
            SrcPortSpec::Fixed(p) => Some(p),
            SrcPortSpec::Ephemeral => None,
        };
        let mut nominal = rng.random_range(0.0..act.period);
        while nominal < end {
            let start = if act.jitter > 0.0 {
                (nominal + rng.random_range(-act.jitter..=act.jitter)).max(0.0)
            } else {
                nominal
            };
            nominal += act.period;
            if start >= end {
                continue;
            }
            let (dst_ip, dns_name) = match &act.remote {
                RemoteSpec::Domain { hosts } => {
                    let h = &hosts[rng.random_range(0..hosts.len())];
                    (h.ip, Some(h.name.clone()))
                }
                RemoteSpec::Ip { ip } => (*ip, None),
            };
            let src_port = fixed_port.unwrap_or_else(|| ports.take());
            let count = rng.random_range(act.packets_per_burst[0]..=act.packets_per_burst[1]);
            let mut ts = start;
            for i in 0..count {
                if i > 0 {
                    ts += act.intra_gap * rng.random_range(0.8..=1.2);
                }
                let pkt = PacketRecord {
                    ts: round_us(ts),
                    src_ip: spec.device_ip,
                    dst_ip,
                    src_port,
                    dst_port: act.dst_port,
                    proto: act.proto,
                    length: act.sizes[weights.sample(&mut rng)].size,
                    dns_name: dns_name.clone(),
                    label: Some(Label::Benign),
                };
                let inbound = i > 0 && rng.random::<f64>() < act.inbound_fraction;
                out.push((if inbound { pkt.swapped() } else { pkt }, idx));
            }
        }
    }
    sort_by_time(&mut out, |(p, _)| p.ts);
    Ok(out.into_iter().unzip())
}

/// Time-ordered benign packets for one device; identical for identical seeds.
pub fn generate(spec: &DeviceSpec, duration: f64, seed: u64) -> Result<Vec<PacketRecord>> {
    generate_annotated(spec, duration, seed).map(|(p, _)| p)
}
