//! Tree-structured activity clustering.
//!
//! Packets are routed through four rule levels (L4 protocol, address class,
//! source-port class, destination-port class). Each leaf keeps a table from
//! [`FlowKey`] to constant-size [`IncrementalStats`]. Once ingest is done,
//! flows inside a leaf are merged by packet-size similarity into abstract
//! [`ActivityKey`]s, which become the unit of matching and model ownership.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::artifact::SCHEMA_VERSION;
use crate::error::{Error, Result};
use crate::traffic::{
    direction_of, flow_key_of, AddressKind, Direction, FlowKey, Ipv4Net, PacketRecord, PortClass, Proto, Remote,
    SYSTEM_PORT_MAX,
};

/// Per-flow running statistics: packet counts and inter-arrival sums per
/// direction plus the set of distinct packet sizes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IncrementalStats {
    pub n_in: u64,
    pub n_out: u64,
    pub t_in: f64,
    pub t_out: f64,
    pub sizes: BTreeSet<u16>,
    pub last_ts_in: Option<f64>,
    pub last_ts_out: Option<f64>,
}

impl IncrementalStats {
    /// Folds one packet into the statistics. The first packet in a direction
    /// contributes a zero interval.
    pub fn update(&mut self, direction: Direction, size: u16, ts: f64) -> Result<()> {
        let (count, total, last) = match direction {
            Direction::In => (&mut self.n_in, &mut self.t_in, &mut self.last_ts_in),
            Direction::Out => (&mut self.n_out, &mut self.t_out, &mut self.last_ts_out),
        };
        let dt = match *last {
            Some(prev) if ts < prev => {
                return Err(Error::NonMonotonicTimestamp {
                    ts,
                    last: prev,
                    direction: direction.as_str(),
                })
            }
            Some(prev) => ts - prev,
            None => 0.0,
        };
        *count += 1;
        *total += dt;
        *last = Some(ts);
        self.sizes.insert(size);
        Ok(())
    }

    pub fn packets(&self) -> u64 {
        self.n_in + self.n_out
    }

    /// Mean gap between consecutive packets in one direction.
    pub fn mean_interarrival(&self, direction: Direction) -> Result<f64> {
        let (n, t) = match direction {
            Direction::In => (self.n_in, self.t_in),
            Direction::Out => (self.n_out, self.t_out),
        };
        if n == 0 {
            return Err(Error::NoPacketsInDirection(direction.as_str()));
        }
        Ok(t / (n.saturating_sub(1).max(1)) as f64)
    }
}

/// Level-3 node. Client-side ephemeral ports carry no activity information, so
/// registered and dynamic source ports share one branch; system ports keep
/// their number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SrcPortLevel {
    System(u16),
    RegDyn,
}

impl SrcPortLevel {
    pub fn of(port: u16) -> SrcPortLevel {
        match PortClass::of(port) {
            PortClass::System(p) => SrcPortLevel::System(p),
            _ => SrcPortLevel::RegDyn,
        }
    }
}

/// Route from the root to a leaf. Field order is level order, so the derived
/// ordering walks leaves depth-first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TreePath {
    pub l4: Proto,
    pub addr_class: AddressKind,
    pub src_class: SrcPortLevel,
    pub dst_class: PortClass,
}

impl TreePath {
    pub fn of(key: &FlowKey) -> TreePath {
        TreePath {
            l4: key.proto,
            addr_class: key.remote.kind(),
            src_class: SrcPortLevel::of(key.src_port),
            dst_class: PortClass::of(key.dst_port),
        }
    }
}

impl fmt::Display for TreePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let src = match self.src_class {
            SrcPortLevel::System(p) => format!("sys-{p}"),
            SrcPortLevel::RegDyn => "reg/dyn".to_string(),
        };
        write!(f, "{}/{}/{}/{}", self.l4, self.addr_class, src, self.dst_class)
    }
}

pub type Leaf = BTreeMap<FlowKey, IncrementalStats>;

/// Single-writer clustering tree for one monitored device.
#[derive(Debug, Clone)]
pub struct ClusterTree {
    device_ip: Ipv4Addr,
    local_prefixes: Vec<Ipv4Net>,
    leaves: BTreeMap<TreePath, Leaf>,
    inserted: u64,
}

impl ClusterTree {
    pub fn new(device_ip: Ipv4Addr, local_prefixes: Vec<Ipv4Net>) -> Self {
        ClusterTree {
            device_ip,
            local_prefixes,
            leaves: BTreeMap::new(),
            inserted: 0,
        }
    }

    pub fn device_ip(&self) -> Ipv4Addr {
        self.device_ip
    }

    pub fn local_prefixes(&self) -> &[Ipv4Net] {
        &self.local_prefixes
    }

    pub fn insert_packet(&mut self, pkt: &PacketRecord) -> Result<FlowKey> {
        let key = flow_key_of(pkt, self.device_ip, &self.local_prefixes)?;
        let direction = direction_of(pkt, self.device_ip)?;
        let leaf = self.leaves.entry(TreePath::of(&key)).or_default();
        match leaf.get_mut(&key) {
            Some(stats) => stats.update(direction, pkt.length, pkt.ts)?,
            None => {
                let mut stats = IncrementalStats::default();
                stats.update(direction, pkt.length, pkt.ts)?;
                leaf.insert(key.clone(), stats);
            }
        }
        self.inserted += 1;
        Ok(key)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (&TreePath, &Leaf)> {
        self.leaves.iter()
    }

    pub fn get(&self, key: &FlowKey) -> Option<&IncrementalStats> {
        self.leaves.get(&TreePath::of(key))?.get(key)
    }

    pub fn flow_count(&self) -> usize {
        self.leaves.values().map(BTreeMap::len).sum()
    }

    pub fn packets_inserted(&self) -> u64 {
        self.inserted
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }
}

pub fn jaccard(a: &BTreeSet<u16>, b: &BTreeSet<u16>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let common = a.intersection(b).count();
    let union = a.len() + b.len() - common;
    common as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub h_s: f64,
}

impl MergeConfig {
    pub fn new(h_s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&h_s) {
            return Err(Error::InvalidConfig(format!("h_s must lie in [0, 1], got {h_s}")));
        }
        Ok(MergeConfig { h_s })
    }
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig { h_s: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RemotePattern {
    ExactDomain(String),
    /// Suffix including its leading dot, e.g. `.vendor.com`.
    WildcardDomain(String),
    RemoteIpClass,
    LocalIpClass,
    BcMcClass,
}

impl RemotePattern {
    pub fn accepts(&self, remote: &Remote) -> bool {
        match (self, remote) {
            (RemotePattern::ExactDomain(name), Remote::Domain(d)) => name == d,
            (RemotePattern::WildcardDomain(suffix), Remote::Domain(d)) => {
                d.len() > suffix.len() && d.ends_with(suffix.as_str())
            }
            (RemotePattern::RemoteIpClass, Remote::RemoteIp(_)) => true,
            (RemotePattern::LocalIpClass, Remote::LocalIp(_)) => true,
            (RemotePattern::BcMcClass, Remote::BcMc(_)) => true,
            _ => false,
        }
    }

    pub fn kind(&self) -> AddressKind {
        match self {
            RemotePattern::ExactDomain(_) | RemotePattern::WildcardDomain(_) => AddressKind::Domain,
            RemotePattern::RemoteIpClass => AddressKind::RemoteIp,
            RemotePattern::LocalIpClass => AddressKind::LocalIp,
            RemotePattern::BcMcClass => AddressKind::BcMc,
        }
    }
}

impl fmt::Display for RemotePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RemotePattern::ExactDomain(name) => f.write_str(name),
            RemotePattern::WildcardDomain(suffix) => write!(f, "*{suffix}"),
            RemotePattern::RemoteIpClass => f.write_str("<remote-ip>"),
            RemotePattern::LocalIpClass => f.write_str("<local-ip>"),
            RemotePattern::BcMcClass => f.write_str("<bc/mc>"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortPattern {
    Exact(u16),
    /// Any registered or dynamic port (>= 1024).
    RegDyn,
}

impl PortPattern {
    pub fn accepts(self, port: u16) -> bool {
        match self {
            PortPattern::Exact(p) => p == port,
            PortPattern::RegDyn => port > SYSTEM_PORT_MAX,
        }
    }
}

impl fmt::Display for PortPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortPattern::Exact(p) => write!(f, "{p}"),
            PortPattern::RegDyn => f.write_str("reg/dyn"),
        }
    }
}

/// Tree level at which a flow first fails to match a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MatchLevel {
    Protocol,
    Address,
    SrcPort,
    DstPort,
}

impl MatchLevel {
    pub fn name(self) -> &'static str {
        match self {
            MatchLevel::Protocol => "protocol",
            MatchLevel::Address => "address",
            MatchLevel::SrcPort => "src-port",
            MatchLevel::DstPort => "dst-port",
        }
    }
}

/// Abstract flow rule identifying one device activity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActivityKey {
    pub proto: Proto,
    pub remote_pattern: RemotePattern,
    pub src_port_pattern: PortPattern,
    pub dst_port_pattern: PortPattern,
}

impl ActivityKey {
    pub fn accepts(&self, flow: &FlowKey) -> bool {
        self.first_mismatch(flow).is_none()
    }

    pub fn first_mismatch(&self, flow: &FlowKey) -> Option<MatchLevel> {
        if self.proto != flow.proto {
            Some(MatchLevel::Protocol)
        } else if !self.remote_pattern.accepts(&flow.remote) {
            Some(MatchLevel::Address)
        } else if !self.src_port_pattern.accepts(flow.src_port) {
            Some(MatchLevel::SrcPort)
        } else if !self.dst_port_pattern.accepts(flow.dst_port) {
            Some(MatchLevel::DstPort)
        } else {
            None
        }
    }
}

impl fmt::Display for ActivityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}:{} <- {}",
            self.proto, self.remote_pattern, self.dst_port_pattern, self.src_port_pattern
        )
    }
}

/// A key together with the training flows it was generalized from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    #[serde(flatten)]
    pub key: ActivityKey,
    pub member_flows: Vec<FlowKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityProfile {
    pub schema_version: String,
    pub device_ip: Ipv4Addr,
    pub local_prefixes: Vec<Ipv4Net>,
    #[serde(rename = "keys")]
    pub activities: Vec<Activity>,
}

impl ActivityProfile {
    pub fn keys(&self) -> impl Iterator<Item = &ActivityKey> {
        self.activities.iter().map(|a| &a.key)
    }

    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }

    /// Index of the activity whose members include `flow`.
    pub fn owner_of(&self, flow: &FlowKey) -> Option<usize> {
        self.activities.iter().position(|a| a.member_flows.contains(flow))
    }
}

/// Domains may only share a key when they agree on everything but the
/// leftmost label, and that shared tail has at least two labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum DomainFamily {
    Tail(String),
    Whole(String),
}

fn domain_family(name: &str) -> DomainFamily {
    match name.split_once('.') {
        Some((head, tail)) if !head.is_empty() && tail.contains('.') => DomainFamily::Tail(tail.to_string()),
        _ => DomainFamily::Whole(name.to_string()),
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so group order is stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn generalize(members: &[&FlowKey]) -> ActivityKey {
    let first = members[0];
    let remote_pattern = match &first.remote {
        Remote::Domain(name) => {
            if members.iter().all(|m| m.remote.domain() == Some(name)) {
                RemotePattern::ExactDomain(name.clone())
            } else {
                let tail = name.split_once('.').map(|(_, t)| t).unwrap_or(name);
                RemotePattern::WildcardDomain(format!(".{tail}"))
            }
        }
        Remote::RemoteIp(_) => RemotePattern::RemoteIpClass,
        Remote::LocalIp(_) => RemotePattern::LocalIpClass,
        Remote::BcMc(_) => RemotePattern::BcMcClass,
    };
    let src_port_pattern = if members.iter().all(|m| m.src_port == first.src_port) {
        PortPattern::Exact(first.src_port)
    } else {
        PortPattern::RegDyn
    };
    ActivityKey {
        proto: first.proto,
        remote_pattern,
        src_port_pattern,
        dst_port_pattern: PortPattern::Exact(first.dst_port),
    }
}

/// Merges the flows of one leaf into activities.
///
/// Two flows are linked when their size sets reach Jaccard >= `h_s`, their
/// destination ports are equal and their domains (if any) belong to the same
/// family. Linked components are generalized into keys; components that
/// generalize to an identical key are folded together.
pub fn merge_activities(leaf: &Leaf, cfg: &MergeConfig) -> Vec<Activity> {
    let mut activities: Vec<Activity> = Vec::new();
    let mut by_key: BTreeMap<ActivityKey, usize> = BTreeMap::new();
    for members in link_groups(leaf, cfg) {
        let key = generalize(&members);
        let flows = members.into_iter().cloned();
        match by_key.get(&key) {
            Some(&idx) => activities[idx].member_flows.extend(flows),
            None => {
                by_key.insert(key.clone(), activities.len());
                activities.push(Activity {
                    key,
                    member_flows: flows.collect(),
                });
            }
        }
    }
    activities
}

/// Connected components of the merge relation, before generalization.
pub(crate) fn link_groups<'a>(leaf: &'a Leaf, cfg: &MergeConfig) -> Vec<Vec<&'a FlowKey>> {
    let entries: Vec<(&FlowKey, &IncrementalStats)> = leaf.iter().collect();
    let compat: Vec<(Option<DomainFamily>, u16)> = entries
        .iter()
        .map(|(k, _)| (k.remote.domain().map(domain_family), k.dst_port))
        .collect();

    let mut sets = DisjointSet::new(entries.len());
    for i in 0..entries.len() {
        for j in (i + 1)..entries.len() {
            if compat[i] == compat[j] && jaccard(&entries[i].1.sizes, &entries[j].1.sizes) >= cfg.h_s {
                sets.union(i, j);
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<&FlowKey>> = BTreeMap::new();
    for (i, (key, _)) in entries.iter().enumerate() {
        groups.entry(sets.find(i)).or_default().push(key);
    }
    groups.into_values().collect()
}

pub fn build_profile(tree: &ClusterTree, cfg: &MergeConfig) -> Result<ActivityProfile> {
    if tree.is_empty() {
        return Err(Error::EmptyTree);
    }
    let activities = tree
        .leaves()
        .flat_map(|(_, leaf)| merge_activities(leaf, cfg))
        .collect();
    Ok(ActivityProfile {
        schema_version: SCHEMA_VERSION.to_string(),
        device_ip: tree.device_ip(),
        local_prefixes: tree.local_prefixes().to_vec(),
        activities,
    })
}
