//! End-to-end stages shared by the command line and the test suites.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::autoencoder::TrainConfig;
use crate::ensemble::{evaluate, train_ensemble, Ensemble, Metrics, ThresholdConfig, Verdict};
use crate::error::{Error, Result};
use crate::features::{featurize, fit_feature_config, FeatureConfig};
use crate::metrics::{dunn_index, kmeans, purity, Clustering, Dataset, Metric};
use crate::traffic::{assemble_flows, default_local_prefix, Flow, FlowKey, Ipv4Net, Label, PacketRecord};
use crate::tree::{build_profile, ActivityProfile, ClusterTree, MergeConfig};

/// Epoch budget used by the pipeline and the `train` command. A submodel sees a
/// few hundred flows, so an epoch is only a handful of optimizer steps, and 50
/// epochs can leave it worse than predicting each feature's mean.
pub const PIPELINE_EPOCHS: usize = 500;

/// Every knob of one profile/train run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub device_ip: Ipv4Addr,
    pub local_prefixes: Vec<Ipv4Net>,
    pub merge: MergeConfig,
    pub r: usize,
    pub threshold: ThresholdConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl RunConfig {
    /// Defaults throughout, with the device's /24 as the local network and
    /// [`PIPELINE_EPOCHS`].
    pub fn for_device(device_ip: Ipv4Addr) -> Self {
        RunConfig {
            device_ip,
            local_prefixes: vec![default_local_prefix(device_ip)],
            merge: MergeConfig::default(),
            r: FeatureConfig::default().r,
            threshold: ThresholdConfig::default(),
            train: TrainConfig {
                epochs: PIPELINE_EPOCHS,
                ..TrainConfig::default()
            },
            seed: 0,
        }
    }
}

/// Feeds every packet involving the device into a fresh tree.
pub fn build_tree(packets: &[PacketRecord], device_ip: Ipv4Addr, local_prefixes: &[Ipv4Net]) -> Result<ClusterTree> {
    let mut tree = ClusterTree::new(device_ip, local_prefixes.to_vec());
    let mut foreign = 0usize;
    for pkt in packets {
        match tree.insert_packet(pkt) {
            Ok(_) => {}
            Err(Error::ForeignPacket { .. }) => foreign += 1,
            Err(e) => return Err(e),
        }
    }
    if foreign > 0 {
        log::warn!("skipped {foreign} packets not involving {device_ip}");
    }
    Ok(tree)
}

pub fn profile_trace(packets: &[PacketRecord], cfg: &RunConfig) -> Result<ActivityProfile> {
    let tree = build_tree(packets, cfg.device_ip, &cfg.local_prefixes)?;
    build_profile(&tree, &cfg.merge)
}

/// Flows of `packets` as the profile's device and local networks see them.
pub fn flows_for(profile: &ActivityProfile, packets: &[PacketRecord]) -> Vec<Flow> {
    let (flows, skipped) = assemble_flows(packets, profile.device_ip, &profile.local_prefixes);
    if skipped > 0 {
        log::warn!("skipped {skipped} packets not involving {}", profile.device_ip);
    }
    flows
}

/// Fits the feature scaling to the training flows, then one submodel per key.
pub fn train_trace(profile: &ActivityProfile, packets: &[PacketRecord], cfg: &RunConfig) -> Result<Ensemble> {
    let flows = flows_for(profile, packets);
    let heads: Vec<&[PacketRecord]> = flows.iter().map(|f| f.packets.as_slice()).collect();
    let fcfg = fit_feature_config(&heads, cfg.r)?;
    let training: BTreeMap<FlowKey, Vec<PacketRecord>> = flows.into_iter().map(|f| (f.key, f.packets)).collect();
    train_ensemble(profile, &training, &fcfg, &cfg.train, &cfg.threshold, cfg.seed)
}

/// One verdict per flow, ordered by first-packet time.
pub fn detect_trace(ensemble: &Ensemble, packets: &[PacketRecord]) -> Result<(Vec<Flow>, Vec<Verdict>)> {
    let flows = flows_for(&ensemble.profile, packets);
    let pairs: Vec<(FlowKey, Vec<PacketRecord>)> = flows.iter().map(|f| (f.key.clone(), f.packets.clone())).collect();
    let verdicts = ensemble.detect_all(&pairs)?;
    Ok((flows, verdicts))
}

/// Ground truth per flow, or `None` if any flow carries no label at all.
pub fn flow_labels(flows: &[Flow]) -> Option<Vec<Label>> {
    flows.iter().map(Flow::label).collect()
}

/// Matches verdicts to labeled flows by key.
pub fn evaluate_against(verdicts: &[Verdict], flows: &[Flow]) -> Result<Metrics> {
    let by_key: BTreeMap<&FlowKey, &Flow> = flows.iter().map(|f| (&f.key, f)).collect();
    let labels = verdicts
        .iter()
        .map(|v| {
            by_key
                .get(&v.flow_key)
                .and_then(|f| f.label())
                .ok_or_else(|| Error::InvalidDataset(format!("no labeled flow for verdict {}", v.flow_key)))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate(verdicts, &labels)
}

const QUALITY_KMEANS_ITERS: usize = 100;

/// How well the matched activities separate the evaluated flows in feature
/// space. Fields are `None` when the grouping is too degenerate to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    /// Flows that reached stage 2, grouped by the activity that scored them.
    pub clustered_flows: usize,
    pub clusters: usize,
    pub dunn_index: Option<f64>,
    /// k-means with k = `clusters` over the same feature vectors.
    pub kmeans_objective: Option<f64>,
    /// Purity of that k-means partition against the activity grouping.
    pub purity: Option<f64>,
}

pub fn cluster_quality(ensemble: &Ensemble, flows: &[Flow], verdicts: &[Verdict]) -> Result<ClusterQuality> {
    let by_key: BTreeMap<&FlowKey, &Flow> = flows.iter().map(|f| (&f.key, f)).collect();
    let mut points = Vec::new();
    let mut groups = Vec::new();
    for v in verdicts {
        let (Some(activity), Some(flow)) = (&v.activity, by_key.get(&v.flow_key)) else {
            continue;
        };
        points.push(featurize(&flow.packets, &ensemble.feature_config)?.values);
        groups.push(activity);
    }
    let clustering = Clustering::from_labels(&groups);
    let k = clustering.k();
    let mut q = ClusterQuality {
        clustered_flows: points.len(),
        clusters: k,
        dunn_index: None,
        kmeans_objective: None,
        purity: None,
    };
    if points.is_empty() {
        return Ok(q);
    }
    let data = Dataset::new(points)?;
    q.dunn_index = dunn_index(&data, &clustering, Metric::Euclidean).ok();
    if let Ok(km) = kmeans(&data, k, ensemble.seed, QUALITY_KMEANS_ITERS) {
        q.kmeans_objective = Some(km.objective);
        q.purity = purity(&km.clustering, clustering.assignment()).ok();
    }
    Ok(q)
}
