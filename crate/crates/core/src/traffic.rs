//! Packet, flow and address types shared by every stage of the pipeline.
//!
//! Packets arrive as JSON-lines records. Each record is oriented relative to a
//! monitored device: the device side always becomes the `src_*` half of the
//! [`FlowKey`], so a request and its reply land in the same bidirectional flow.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const SYSTEM_PORT_MAX: u16 = 1023;
pub const REGISTERED_PORT_MAX: u16 = 49151;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Proto {
    #[serde(rename = "TCP")]
    Tcp,
    #[serde(rename = "UDP")]
    Udp,
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Proto::Tcp => f.write_str("TCP"),
            Proto::Udp => f.write_str("UDP"),
        }
    }
}

/// Ground-truth annotation. Serialized as `"benign"` or `"attack:<kind>"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Benign,
    Attack(String),
}

impl Label {
    pub fn is_attack(&self) -> bool {
        matches!(self, Label::Attack(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Benign => f.write_str("benign"),
            Label::Attack(kind) => write!(f, "attack:{kind}"),
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "benign" {
            return Ok(Label::Benign);
        }
        match s.strip_prefix("attack:") {
            Some(kind) if !kind.is_empty() => Ok(Label::Attack(kind.to_string())),
            _ => Err(format!("unknown label `{s}`")),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One observed IP packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketRecord {
    pub ts: f64,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: Proto,
    pub length: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dns_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

const RECORD_FIELDS: [&str; 9] = [
    "ts", "src_ip", "dst_ip", "src_port", "dst_port", "proto", "length", "dns_name", "label",
];

impl PacketRecord {
    /// The same packet travelling the other way.
    pub fn swapped(&self) -> PacketRecord {
        PacketRecord {
            src_ip: self.dst_ip,
            dst_ip: self.src_ip,
            src_port: self.dst_port,
            dst_port: self.src_port,
            ..self.clone()
        }
    }

    fn validate(&mut self) -> std::result::Result<(), String> {
        if !self.ts.is_finite() || self.ts < 0.0 {
            return Err(format!("ts must be a finite non-negative number, got {}", self.ts));
        }
        if self.length == 0 {
            return Err("length must be at least 1".into());
        }
        self.dns_name = self.dns_name.as_deref().and_then(normalize_domain);
        Ok(())
    }
}

/// Lowercases and strips a trailing dot. Empty names become `None`.
pub fn normalize_domain(name: &str) -> Option<String> {
    let trimmed = name.trim().trim_end_matches('.').to_ascii_lowercase();
    (!trimmed.is_empty()).then_some(trimmed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "class", content = "name", rename_all = "snake_case")]
pub enum AddressClass {
    ResolvedDomain(String),
    RemoteIp,
    LocalIp,
    BroadcastMulticast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortClass {
    System(u16),
    Registered(u16),
    Dynamic,
}

impl PortClass {
    pub fn of(port: u16) -> PortClass {
        match port {
            0..=SYSTEM_PORT_MAX => PortClass::System(port),
            1024..=REGISTERED_PORT_MAX => PortClass::Registered(port),
            _ => PortClass::Dynamic,
        }
    }
}

impl fmt::Display for PortClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortClass::System(p) => write!(f, "sys-{p}"),
            PortClass::Registered(p) => write!(f, "reg-{p}"),
            PortClass::Dynamic => f.write_str("dyn"),
        }
    }
}

/// An IPv4 CIDR block such as `192.168.1.0/24`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ipv4Net {
    network: Ipv4Addr,
    prefix_len: u8,
}

impl Ipv4Net {
    pub fn new(addr: Ipv4Addr, prefix_len: u8) -> Result<Self> {
        if prefix_len > 32 {
            return Err(Error::MalformedAddress(format!("{addr}/{prefix_len}")));
        }
        let network = Ipv4Addr::from(u32::from(addr) & Self::mask_bits(prefix_len));
        Ok(Ipv4Net { network, prefix_len })
    }

    fn mask_bits(prefix_len: u8) -> u32 {
        if prefix_len == 0 {
            0
        } else {
            u32::MAX << (32 - prefix_len as u32)
        }
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        u32::from(ip) & Self::mask_bits(self.prefix_len) == u32::from(self.network)
    }

    /// Directed broadcast address; `None` for /31 and /32 which have none.
    pub fn broadcast(&self) -> Option<Ipv4Addr> {
        (self.prefix_len < 31).then(|| Ipv4Addr::from(u32::from(self.network) | !Self::mask_bits(self.prefix_len)))
    }
}

impl FromStr for Ipv4Net {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::MalformedAddress(s.to_string());
        let (addr, len) = s.split_once('/').ok_or_else(bad)?;
        let addr: Ipv4Addr = addr.parse().map_err(|_| bad())?;
        let len: u8 = len.parse().map_err(|_| bad())?;
        Ipv4Net::new(addr, len).map_err(|_| bad())
    }
}

impl fmt::Display for Ipv4Net {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.network, self.prefix_len)
    }
}

impl Serialize for Ipv4Net {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ipv4Net {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The `/24` around `ip`, used when no local prefixes are configured.
pub fn default_local_prefix(ip: Ipv4Addr) -> Ipv4Net {
    Ipv4Net::new(ip, 24).expect("24 is a valid prefix length")
}

pub fn classify_ipv4(ip: Ipv4Addr, dns_name: Option<&str>, local_prefixes: &[Ipv4Net]) -> AddressClass {
    let is_bcmc =
        ip.is_multicast() || ip.is_broadcast() || local_prefixes.iter().any(|net| net.broadcast() == Some(ip));
    if is_bcmc {
        return AddressClass::BroadcastMulticast;
    }
    if let Some(name) = dns_name.and_then(normalize_domain) {
        return AddressClass::ResolvedDomain(name);
    }
    if local_prefixes.iter().any(|net| net.contains(ip)) {
        AddressClass::LocalIp
    } else {
        AddressClass::RemoteIp
    }
}

/// Classifies a textual destination address. Broadcast/multicast wins over a
/// resolved name, which wins over local/remote membership.
pub fn classify_address(dst_ip: &str, dns_name: Option<&str>, local_prefixes: &[Ipv4Net]) -> Result<AddressClass> {
    let ip: Ipv4Addr = dst_ip
        .parse()
        .map_err(|_| Error::MalformedAddress(dst_ip.to_string()))?;
    Ok(classify_ipv4(ip, dns_name, local_prefixes))
}

/// Remote end of a flow: a resolved domain, or a concrete address tagged with its class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "class", content = "value", rename_all = "snake_case")]
pub enum Remote {
    Domain(String),
    RemoteIp(Ipv4Addr),
    LocalIp(Ipv4Addr),
    BcMc(Ipv4Addr),
}

/// Class-only view of [`Remote`]; the second level of the clustering tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddressKind {
    Domain,
    RemoteIp,
    LocalIp,
    BcMc,
}

impl fmt::Display for AddressKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AddressKind::Domain => "domain",
            AddressKind::RemoteIp => "remote-ip",
            AddressKind::LocalIp => "local-ip",
            AddressKind::BcMc => "bc/mc",
        })
    }
}

impl Remote {
    fn new(ip: Ipv4Addr, class: AddressClass) -> Remote {
        match class {
            AddressClass::ResolvedDomain(name) => Remote::Domain(name),
            AddressClass::RemoteIp => Remote::RemoteIp(ip),
            AddressClass::LocalIp => Remote::LocalIp(ip),
            AddressClass::BroadcastMulticast => Remote::BcMc(ip),
        }
    }

    pub fn kind(&self) -> AddressKind {
        match self {
            Remote::Domain(_) => AddressKind::Domain,
            Remote::RemoteIp(_) => AddressKind::RemoteIp,
            Remote::LocalIp(_) => AddressKind::LocalIp,
            Remote::BcMc(_) => AddressKind::BcMc,
        }
    }

    pub fn domain(&self) -> Option<&str> {
        match self {
            Remote::Domain(name) => Some(name),
            _ => None,
        }
    }
}

impl fmt::Display for Remote {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Remote::Domain(name) => f.write_str(name),
            Remote::RemoteIp(ip) | Remote::LocalIp(ip) | Remote::BcMc(ip) => write!(f, "{ip}"),
        }
    }
}

/// Canonical bidirectional 5-tuple, oriented from the device's side.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub device_ip: Ipv4Addr,
    pub remote: Remote,
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: Proto,
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} -> {}:{}/{}",
            self.device_ip, self.src_port, self.remote, self.dst_port, self.proto
        )
    }
}

fn foreign(pkt: &PacketRecord, device_ip: Ipv4Addr) -> Error {
    Error::ForeignPacket {
        src: pkt.src_ip.to_string(),
        dst: pkt.dst_ip.to_string(),
        device: device_ip.to_string(),
    }
}

pub fn direction_of(pkt: &PacketRecord, device_ip: Ipv4Addr) -> Result<Direction> {
    if pkt.src_ip == device_ip {
        Ok(Direction::Out)
    } else if pkt.dst_ip == device_ip {
        Ok(Direction::In)
    } else {
        Err(foreign(pkt, device_ip))
    }
}

pub fn flow_key_of(pkt: &PacketRecord, device_ip: Ipv4Addr, local_prefixes: &[Ipv4Net]) -> Result<FlowKey> {
    let (remote_ip, src_port, dst_port) = match direction_of(pkt, device_ip)? {
        Direction::Out => (pkt.dst_ip, pkt.src_port, pkt.dst_port),
        Direction::In => (pkt.src_ip, pkt.dst_port, pkt.src_port),
    };
    let class = classify_ipv4(remote_ip, pkt.dns_name.as_deref(), local_prefixes);
    Ok(FlowKey {
        device_ip,
        remote: Remote::new(remote_ip, class),
        src_port,
        dst_port,
        proto: pkt.proto,
    })
}

/// All packets of one bidirectional flow, in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub key: FlowKey,
    pub packets: Vec<PacketRecord>,
}

impl Flow {
    pub fn first_ts(&self) -> f64 {
        self.packets.first().map_or(0.0, |p| p.ts)
    }

    /// The attack label carried by any packet, otherwise benign.
    pub fn label(&self) -> Option<Label> {
        let mut saw_label = false;
        for pkt in &self.packets {
            match &pkt.label {
                Some(l @ Label::Attack(_)) => return Some(l.clone()),
                Some(Label::Benign) => saw_label = true,
                None => {}
            }
        }
        saw_label.then_some(Label::Benign)
    }
}

/// Groups packets into flows ordered by first-packet timestamp (ties by key).
/// Packets not involving the device are dropped; the second value counts them.
pub fn assemble_flows(packets: &[PacketRecord], device_ip: Ipv4Addr, local_prefixes: &[Ipv4Net]) -> (Vec<Flow>, usize) {
    let mut index: BTreeMap<FlowKey, usize> = BTreeMap::new();
    let mut flows: Vec<Flow> = Vec::new();
    let mut skipped = 0;
    for pkt in packets {
        let Ok(key) = flow_key_of(pkt, device_ip, local_prefixes) else {
            skipped += 1;
            continue;
        };
        match index.get(&key) {
            Some(&i) => flows[i].packets.push(pkt.clone()),
            None => {
                index.insert(key.clone(), flows.len());
                flows.push(Flow {
                    key,
                    packets: vec![pkt.clone()],
                });
            }
        }
    }
    flows.sort_by(|a, b| a.first_ts().total_cmp(&b.first_ts()).then_with(|| a.key.cmp(&b.key)));
    (flows, skipped)
}

/// Reads JSON-lines packet records. In strict mode unknown fields are an
/// error; otherwise they are dropped with a warning.
pub fn read_packets<R: BufRead>(reader: R, strict: bool) -> Result<Vec<PacketRecord>> {
    let mut packets = Vec::new();
    let mut warned: BTreeSet<String> = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |reason: String| Error::InvalidRecord { line: lineno, reason };
        let mut value: serde_json::Value = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| invalid("record is not a JSON object".into()))?;
        let unknown: Vec<String> = obj
            .keys()
            .filter(|k| !RECORD_FIELDS.contains(&k.as_str()))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            if strict {
                return Err(invalid(format!("unknown field `{}`", unknown[0])));
            }
            for field in unknown {
                obj.remove(&field);
                if warned.insert(field.clone()) {
                    log::warn!("ignoring unknown packet field `{field}` (first seen at line {lineno})");
                }
            }
        }
        let mut pkt: PacketRecord = serde_json::from_value(value).map_err(|e| invalid(e.to_string()))?;
        pkt.validate().map_err(invalid)?;
        packets.push(pkt);
    }
    Ok(packets)
}

pub fn write_packets<W: Write>(mut writer: W, packets: &[PacketRecord]) -> Result<()> {
    for pkt in packets {
        serde_json::to_writer(&mut writer, pkt).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ip(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    fn pkt(src: &str, sport: u16, dst: &str, dport: u16, proto: Proto, dns: Option<&str>) -> PacketRecord {
        PacketRecord {
            ts: 1.0,
            src_ip: ip(src),
            dst_ip: ip(dst),
            src_port: sport,
            dst_port: dport,
            proto,
            length: 80,
            dns_name: dns.map(str::to_string),
            label: None,
        }
    }

    #[test]
    fn port_classes_follow_iana_ranges() {
        assert_eq!(PortClass::of(22), PortClass::System(22));
        assert_eq!(PortClass::of(1900), PortClass::Registered(1900));
        assert_eq!(PortClass::of(55000), PortClass::Dynamic);
        assert_eq!(PortClass::of(1023), PortClass::System(1023));
        assert_eq!(PortClass::of(1024), PortClass::Registered(1024));
        assert_eq!(PortClass::of(49151), PortClass::Registered(49151));
        assert_eq!(PortClass::of(49152), PortClass::Dynamic);
    }

    #[test]
    fn address_classification_examples() {
        assert_eq!(
            classify_address("239.255.255.250", None, &[]).unwrap(),
            AddressClass::BroadcastMulticast
        );
        assert_eq!(
            classify_address("129.6.15.28", Some("time.nist.gov"), &[]).unwrap(),
            AddressClass::ResolvedDomain("time.nist.gov".into())
        );
        let local: Vec<Ipv4Net> = vec!["192.168.1.0/24".parse().unwrap()];
        assert_eq!(
            classify_address("203.0.113.5", None, &local).unwrap(),
            AddressClass::RemoteIp
        );
        assert_eq!(
            classify_address("192.168.1.7", None, &local).unwrap(),
            AddressClass::LocalIp
        );
        assert_eq!(
            classify_address("192.168.1.255", Some("x.local"), &local).unwrap(),
            AddressClass::BroadcastMulticast
        );
        assert_eq!(
            classify_address("224.0.0.251", Some("mdns.local"), &[]).unwrap(),
            AddressClass::BroadcastMulticast
        );
        assert!(matches!(
            classify_address("::1", None, &[]),
            Err(Error::MalformedAddress(_))
        ));
        assert!(matches!(
            classify_address("300.1.1.1", None, &[]),
            Err(Error::MalformedAddress(_))
        ));
    }

    #[test]
    fn domain_names_are_normalized() {
        assert_eq!(
            classify_address("8.8.8.8", Some("DNS.Google."), &[]).unwrap(),
            AddressClass::ResolvedDomain("dns.google".into())
        );
        assert_eq!(
            classify_address("8.8.8.8", Some("."), &[]).unwrap(),
            AddressClass::RemoteIp
        );
    }

    #[test]
    fn reply_maps_to_request_key() {
        let device = ip("192.168.1.10");
        let out = pkt("192.168.1.10", 50001, "8.8.8.8", 53, Proto::Udp, Some("dns.google"));
        let key = flow_key_of(&out, device, &[]).unwrap();
        assert_eq!(
            key,
            FlowKey {
                device_ip: device,
                remote: Remote::Domain("dns.google".into()),
                src_port: 50001,
                dst_port: 53,
                proto: Proto::Udp,
            }
        );
        assert_eq!(flow_key_of(&out.swapped(), device, &[]).unwrap(), key);
        assert_eq!(direction_of(&out, device).unwrap(), Direction::Out);
        assert_eq!(direction_of(&out.swapped(), device).unwrap(), Direction::In);
    }

    #[test]
    fn foreign_packets_are_rejected() {
        let p = pkt("10.0.0.1", 1000, "10.0.0.2", 80, Proto::Tcp, None);
        let device = ip("192.168.1.10");
        assert!(matches!(flow_key_of(&p, device, &[]), Err(Error::ForeignPacket { .. })));
        assert!(matches!(direction_of(&p, device), Err(Error::ForeignPacket { .. })));
    }

    #[test]
    fn cidr_parsing_and_broadcast() {
        let net: Ipv4Net = "10.1.2.3/16".parse().unwrap();
        assert_eq!(net.to_string(), "10.1.0.0/16");
        assert_eq!(net.broadcast(), Some(ip("10.1.255.255")));
        assert!(net.contains(ip("10.1.200.3")));
        assert!(!net.contains(ip("10.2.0.1")));
        assert_eq!("1.2.3.4/32".parse::<Ipv4Net>().unwrap().broadcast(), None);
        assert!("1.2.3.4/33".parse::<Ipv4Net>().is_err());
        assert!("1.2.3.4".parse::<Ipv4Net>().is_err());
    }

    #[test]
    fn labels_round_trip_as_strings() {
        assert_eq!("benign".parse::<Label>().unwrap(), Label::Benign);
        assert_eq!(
            "attack:PortScan".parse::<Label>().unwrap(),
            Label::Attack("PortScan".into())
        );
        assert!("attack:".parse::<Label>().is_err());
        assert!("evil".parse::<Label>().is_err());
        assert_eq!(Label::Attack("Flood".into()).to_string(), "attack:Flood");
    }

    #[test]
    fn strict_mode_rejects_unknown_fields() {
        let line = r#"{"ts":1.5,"src_ip":"192.168.1.10","dst_ip":"1.1.1.1","src_port":5000,"dst_port":443,"proto":"TCP","length":60,"vlan":7}"#;
        assert!(matches!(
            read_packets(line.as_bytes(), true),
            Err(Error::InvalidRecord { line: 1, .. })
        ));
        let pkts = read_packets(line.as_bytes(), false).unwrap();
        assert_eq!(pkts.len(), 1);
        assert_eq!(pkts[0].dst_port, 443);
    }

    #[test]
    fn record_validation() {
        let zero_len =
            r#"{"ts":1,"src_ip":"1.1.1.1","dst_ip":"2.2.2.2","src_port":1,"dst_port":2,"proto":"UDP","length":0}"#;
        assert!(read_packets(zero_len.as_bytes(), true).is_err());
        let neg_ts =
            r#"{"ts":-1,"src_ip":"1.1.1.1","dst_ip":"2.2.2.2","src_port":1,"dst_port":2,"proto":"UDP","length":3}"#;
        assert!(read_packets(neg_ts.as_bytes(), true).is_err());
        let v6 = r#"{"ts":1,"src_ip":"::1","dst_ip":"2.2.2.2","src_port":1,"dst_port":2,"proto":"UDP","length":3}"#;
        assert!(read_packets(v6.as_bytes(), true).is_err());
        let big_port =
            r#"{"ts":1,"src_ip":"1.1.1.1","dst_ip":"2.2.2.2","src_port":70000,"dst_port":2,"proto":"UDP","length":3}"#;
        assert!(read_packets(big_port.as_bytes(), true).is_err());
        let named = r#"{"ts":1,"src_ip":"1.1.1.1","dst_ip":"2.2.2.2","src_port":1,"dst_port":2,"proto":"UDP","length":3,"dns_name":"A.Example.COM.","label":"attack:Flood"}"#;
        let pkts = read_packets(named.as_bytes(), true).unwrap();
        assert_eq!(pkts[0].dns_name.as_deref(), Some("a.example.com"));
        assert_eq!(pkts[0].label, Some(Label::Attack("Flood".into())));
    }

    #[test]
    fn flows_assemble_bidirectionally_in_first_seen_order() {
        let device = ip("192.168.1.10");
        let mut a = pkt("192.168.1.10", 50001, "8.8.8.8", 53, Proto::Udp, Some("dns.google"));
        a.ts = 2.0;
        let mut b = a.swapped();
        b.ts = 2.1;
        let mut c = pkt("192.168.1.10", 50002, "1.2.3.4", 443, Proto::Tcp, None);
        c.ts = 1.0;
        let stray = pkt("10.0.0.1", 1, "10.0.0.2", 2, Proto::Tcp, None);
        let (flows, skipped) = assemble_flows(&[c.clone(), a, b, stray], device, &[]);
        assert_eq!(skipped, 1);
        assert_eq!(flows.len(), 2);
        assert_eq!(flows[0].packets, vec![c]);
        assert_eq!(flows[1].packets.len(), 2);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn arb_packet(device: Ipv4Addr) -> impl Strategy<Value = PacketRecord> {
        (
            any::<bool>(),
            any::<u32>(),
            any::<u16>(),
            any::<u16>(),
            prop_oneof![Just(Proto::Tcp), Just(Proto::Udp)],
            1u16..,
            proptest::option::of("[a-z]{1,8}(\\.[a-z]{1,8}){0,2}"),
        )
            .prop_map(move |(outbound, other, p1, p2, proto, length, dns)| {
                let other = Ipv4Addr::from(other);
                let (src_ip, dst_ip) = if outbound { (device, other) } else { (other, device) };
                PacketRecord {
                    ts: 0.0,
                    src_ip,
                    dst_ip,
                    src_port: p1,
                    dst_port: p2,
                    proto,
                    length,
                    dns_name: dns,
                    label: None,
                }
            })
    }

    proptest! {
        #[test]
        fn flow_key_is_direction_independent(p in arb_packet(Ipv4Addr::new(192, 168, 1, 10))) {
            let device = Ipv4Addr::new(192, 168, 1, 10);
            let local = [default_local_prefix(device)];
            prop_assert_eq!(
                flow_key_of(&p, device, &local).unwrap(),
                flow_key_of(&p.swapped(), device, &local).unwrap()
            );
        }

        #[test]
        fn port_classes_partition_the_range(port in any::<u16>()) {
            let class = PortClass::of(port);
            let expected = if port <= 1023 { 0 } else if port <= 49151 { 1 } else { 2 };
            let got = match class {
                PortClass::System(p) => { prop_assert_eq!(p, port); 0 }
                PortClass::Registered(p) => { prop_assert_eq!(p, port); 1 }
                PortClass::Dynamic => 2,
            };
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn naming_a_remote_ip_makes_it_a_domain(raw in any::<u32>(), name in "[a-z]{1,10}\\.[a-z]{2,5}") {
            let addr = Ipv4Addr::from(raw);
            let local = ["192.168.1.0/24".parse::<Ipv4Net>().unwrap()];
            let bare = classify_ipv4(addr, None, &local);
            let named = classify_ipv4(addr, Some(&name), &local);
            if bare == AddressClass::BroadcastMulticast {
                prop_assert_eq!(named, AddressClass::BroadcastMulticast);
            } else {
                prop_assert_eq!(named, AddressClass::ResolvedDomain(name));
            }
        }
    }
}
