//! Fixed-length flow features: the first `r` packet lengths followed by the
//! first `r` inter-arrival gaps, zero-filled and scaled into [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::quantile;
use crate::traffic::PacketRecord;

const LENGTH_FLOOR: f64 = 64.0;
const GAP_FLOOR: f64 = 1.0;
const FIT_QUANTILE: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Packets taken from the head of each flow.
    pub r: usize,
    /// Bytes mapping to 1.0.
    pub max_len: f64,
    /// Seconds mapping to 1.0 on the log scale.
    pub max_gap: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            r: 10,
            max_len: 1500.0,
            max_gap: 60.0,
        }
    }
}

impl FeatureConfig {
    pub fn new(r: usize, max_len: f64, max_gap: f64) -> Result<Self> {
        let cfg = FeatureConfig { r, max_len, max_gap };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 1 {
            return Err(Error::InvalidConfig("r must be at least 1".into()));
        }
        if !(self.max_len >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "max_len must be >= 1, got {}",
                self.max_len
            )));
        }
        if !(self.max_gap > 0.0) || !self.max_gap.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "max_gap must be > 0, got {}",
                self.max_gap
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.r
    }

    pub fn normalize_length(&self, length: f64) -> f64 {
        (length / self.max_len).clamp(0.0, 1.0)
    }

    pub fn normalize_gap(&self, gap: f64) -> f64 {
        (gap.ln_1p() / self.max_gap.ln_1p()).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub valid_count: usize,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_order(packets: &[PacketRecord]) -> Result<()> {
    match packets.windows(2).position(|w| w[1].ts < w[0].ts) {
        Some(i) => Err(Error::UnorderedTimestamps(i + 1)),
        None => Ok(()),
    }
}

pub fn featurize(packets: &[PacketRecord], cfg: &FeatureConfig) -> Result<FeatureVector> {
    if packets.is_empty() {
        return Err(Error::EmptyFlow);
    }
    let head = &packets[..packets.len().min(cfg.r)];
    check_order(head)?;
    let mut values = vec![0.0; cfg.dim()];
    for (i, pkt) in head.iter().enumerate() {
        values[i] = cfg.normalize_length(f64::from(pkt.length));
        if i > 0 {
            values[cfg.r + i] = cfg.normalize_gap(pkt.ts - head[i - 1].ts);
        }
    }
    Ok(FeatureVector {
        values,
        valid_count: head.len(),
    })
}

/// Derives normalization constants from the 99.9th percentile of observed
/// lengths and gaps.
pub fn fit_feature_config(flows: &[&[PacketRecord]], r: usize) -> Result<FeatureConfig> {
    if flows.is_empty() || flows.iter().all(|f| f.is_empty()) {
        return Err(Error::EmptyTrainingSet);
    }
    let lengths: Vec<f64> = flows
        .iter()
        .flat_map(|f| f.iter().map(|p| f64::from(p.length)))
        .collect();
    let gaps: Vec<f64> = flows
        .iter()
        .flat_map(|f| f.windows(2).map(|w| (w[1].ts - w[0].ts).max(0.0)))
        .collect();
    let max_len = quantile(&lengths, FIT_QUANTILE)
        .unwrap_or(LENGTH_FLOOR)
        .max(LENGTH_FLOOR);
    let max_gap = quantile(&gaps, FIT_QUANTILE).unwrap_or(GAP_FLOOR).max(GAP_FLOOR);
    FeatureConfig::new(r, max_len, max_gap)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::traffic::Proto;
    use proptest::collection::vec;
    use proptest::prelude::*;
    use std::net::Ipv4Addr;

    fn flow_from(gaps_and_lengths: &[(f64, u16)]) -> Vec<PacketRecord> {
        let mut ts = 0.0;
        gaps_and_lengths
            .iter()
            .map(|&(gap, length)| {
                ts += gap;
                PacketRecord {
                    ts,
                    src_ip: Ipv4Addr::new(10, 0, 0, 2),
                    dst_ip: Ipv4Addr::new(10, 0, 0, 3),
                    src_port: 1,
                    dst_port: 2,
                    proto: Proto::Udp,
                    length,
                    dns_name: None,
                    label: None,
                }
            })
            .collect()
    }

    proptest! {
        #[test]
        fn output_shape_and_range(
            pkts in vec((0.0f64..500.0, 1u16..), 1..40),
            r in 1usize..16,
            max_len in 1.0f64..3000.0,
            max_gap in 0.01f64..120.0,
        ) {
            let cfg = FeatureConfig::new(r, max_len, max_gap).unwrap();
            let flow = flow_from(&pkts);
            let v = featurize(&flow, &cfg).unwrap();
            prop_assert_eq!(v.len(), 2 * r);
            prop_assert!(v.values.iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert_eq!(v.valid_count, flow.len().min(r));
            for i in v.valid_count..r {
                prop_assert_eq!(v.values[i], 0.0);
                prop_assert_eq!(v.values[r + i], 0.0);
            }
        }

        #[test]
        fn tail_packets_do_not_matter(
            pkts in vec((0.0f64..50.0, 1u16..2000), 1..30),
            extra in vec((0.0f64..50.0, 1u16..2000), 0..10),
        ) {
            let cfg = FeatureConfig::default();
            let head = flow_from(&pkts);
            let mut all = pkts.clone();
            if pkts.len() >= cfg.r {
                all.extend(extra);
            }
            prop_assert_eq!(featurize(&head, &cfg).unwrap(), featurize(&flow_from(&all), &cfg).unwrap());
        }

        #[test]
        fn normalization_is_monotone(a in 0.0f64..5000.0, b in 0.0f64..5000.0) {
            let cfg = FeatureConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(cfg.normalize_length(lo) <= cfg.normalize_length(hi));
            prop_assert!(cfg.normalize_gap(lo) <= cfg.normalize_gap(hi));
        }
    }
}
