//! Two-stage detector.
//!
//! Stage 1 matches a flow against the profile's activity keys; a flow that
//! matches nothing is malicious outright. Stage 2 featurizes the flow once and
//! scores it with only the submodels whose keys matched (trigger-action). The
//! lowest reconstruction error wins and is compared with that submodel's
//! calibrated threshold.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{check_schema_version, SCHEMA_VERSION};
use crate::autoencoder::{fit, AEModel, Architecture, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{featurize, FeatureConfig};
use crate::traffic::{FlowKey, Label, PacketRecord};
use crate::tree::{ActivityKey, ActivityProfile, MatchLevel};

const EPSILON_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub quantile: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig { quantile: 0.995 }
    }
}

impl ThresholdConfig {
    pub fn new(quantile: f64) -> Result<Self> {
        if !(quantile > 0.0 && quantile < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "quantile must lie in (0, 1), got {quantile}"
            )));
        }
        Ok(ThresholdConfig { quantile })
    }
}

/// Linear-interpolation `q`-quantile of the training errors, floored at 1e-9.
pub fn calibrate_threshold(errors: &[f64], q: f64) -> Result<f64> {
    ThresholdConfig::new(q)?;
    let eps = crate::metrics::quantile(errors, q).ok_or(Error::EmptyErrors)?;
    Ok(eps.max(EPSILON_FLOOR))
}

/// Every key in `profile` that accepts `flow`, by index.
pub fn fuzzy_match_indices(profile: &ActivityProfile, flow: &FlowKey) -> Vec<usize> {
    profile
        .activities
        .iter()
        .enumerate()
        .filter(|(_, a)| a.key.accepts(flow))
        .map(|(i, _)| i)
        .collect()
}

pub fn fuzzy_match<'a>(profile: &'a ActivityProfile, flow: &FlowKey) -> Vec<&'a ActivityKey> {
    fuzzy_match_indices(profile, flow)
        .into_iter()
        .map(|i| &profile.activities[i].key)
        .collect()
}

/// Names the deepest tree level any key reached before rejecting the flow.
fn stage1_reason(profile: &ActivityProfile, flow: &FlowKey) -> String {
    let deepest = profile
        .keys()
        .filter_map(|k| k.first_mismatch(flow))
        .max()
        .unwrap_or(MatchLevel::Protocol);
    let passed: Vec<&str> = [MatchLevel::Protocol, MatchLevel::Address, MatchLevel::SrcPort]
        .into_iter()
        .filter(|l| *l < deepest)
        .map(MatchLevel::name)
        .collect();
    let detail = match deepest {
        MatchLevel::Protocol => format!("no {} activity", flow.proto),
        MatchLevel::Address => format!("unknown {} remote {}", flow.remote.kind(), flow.remote),
        MatchLevel::SrcPort => format!("source port {} not profiled for {}", flow.src_port, flow.remote),
        MatchLevel::DstPort => format!("destination port {} not profiled for {}", flow.dst_port, flow.remote),
    };
    if passed.is_empty() {
        format!("{} failed: {detail}", deepest.name())
    } else {
        format!("{} matched; {} failed: {detail}", passed.join(", "), deepest.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submodel {
    pub key: ActivityKey,
    #[serde(flatten)]
    pub model: AEModel,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ensemble {
    pub schema_version: String,
    pub profile: ActivityProfile,
    pub feature_config: FeatureConfig,
    pub train_config: TrainConfig,
    pub threshold: ThresholdConfig,
    pub seed: u64,
    pub submodels: Vec<Submodel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Stage1Malicious,
    Anomalous,
    Benign,
}

/// Outcome for one flow; serialized as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub flow_key: FlowKey,
    pub kind: VerdictKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<ActivityKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub models_triggered: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Verdict {
    pub fn is_flagged(&self) -> bool {
        self.kind != VerdictKind::Benign
    }

    /// Score relative to the deciding threshold; stage-1 rejections rank highest.
    pub fn ranking_score(&self) -> f64 {
        match (self.kind, self.score, self.epsilon) {
            (VerdictKind::Stage1Malicious, _, _) => f64::INFINITY,
            (_, Some(s), Some(e)) if e > 0.0 => s / e,
            (_, Some(s), _) => s,
            _ => f64::INFINITY,
        }
    }
}

/// Seeded initializations tried per submodel. A small share of inits collapse
/// into a basin no better than predicting the mean, so the one with the lowest
/// mean training error is kept.
pub const INIT_RESTARTS: usize = 3;

fn submodel_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn train_ensemble(
    profile: &ActivityProfile,
    training_flows: &BTreeMap<FlowKey, Vec<PacketRecord>>,
    fcfg: &FeatureConfig,
    tcfg: &TrainConfig,
    thcfg: &ThresholdConfig,
    seed: u64,
) -> Result<Ensemble> {
    fcfg.validate()?;
    tcfg.validate()?;
    ThresholdConfig::new(thcfg.quantile)?;
    let arch = Architecture::for_head_len(fcfg.r);
    arch.validate()?;

    let submodels = profile
        .activities
        .par_iter()
        .enumerate()
        .map(|(i, activity)| {
            let data = activity
                .member_flows
                .iter()
                .filter_map(|f| training_flows.get(f))
                .filter(|pkts| !pkts.is_empty())
                .map(|pkts| featurize(pkts, fcfg).map(|v| v.values))
                .collect::<Result<Vec<_>>>()?;
            if data.is_empty() {
                return Err(Error::EmptyActivity(activity.key.to_string()));
            }
            let fits = (0..INIT_RESTARTS)
                .into_par_iter()
                .map(|k| {
                    fit(
                        &AEModel::init(arch, submodel_seed(seed, i * INIT_RESTARTS + k))?,
                        &data,
                        tcfg,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let mean = |errs: &[f64]| errs.iter().sum::<f64>() / errs.len() as f64;
            let (model, errors) = fits
                .into_iter()
                .reduce(|best, next| if mean(&next.1) < mean(&best.1) { next } else { best })
                .expect("at least one restart");
            let epsilon = calibrate_threshold(&errors, thcfg.quantile)?;
            log::info!(
                "trained {} on {} flows, epsilon {:.3e}",
                activity.key,
                data.len(),
                epsilon
            );
            Ok(Submodel {
                key: activity.key.clone(),
                model,
                epsilon,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Ensemble {
        schema_version: SCHEMA_VERSION.to_string(),
        profile: profile.clone(),
        feature_config: *fcfg,
        train_config: *tcfg,
        threshold: *thcfg,
        seed,
        submodels,
    })
}

impl Ensemble {
    /// Structural checks after loading from disk.
    pub fn validate(&self) -> Result<()> {
        check_schema_version(&self.schema_version)?;
        check_schema_version(&self.profile.schema_version)?;
        self.feature_config.validate()?;
        if self.submodels.len() != self.profile.len() {
            return Err(Error::Mismatch(format!(
                "ensemble has {} submodels for {} profile keys",
                self.submodels.len(),
                self.profile.len()
            )));
        }
        for (i, (sub, act)) in self.submodels.iter().zip(&self.profile.activities).enumerate() {
            if sub.key != act.key {
                return Err(Error::Mismatch(format!(
                    "submodels[{i}].key {} does not match profile key {}",
                    sub.key, act.key
                )));
            }
            if !(sub.epsilon > 0.0) || !sub.epsilon.is_finite() {
                return Err(Error::Mismatch(format!("submodels[{i}].epsilon must be positive")));
            }
            if sub.model.architecture.input_len != self.feature_config.dim() {
                return Err(Error::Mismatch(format!(
                    "submodels[{i}].architecture.input_len {} != feature dimension {}",
                    sub.model.architecture.input_len,
                    self.feature_config.dim()
                )));
            }
            sub.model.validate()?;
        }
        Ok(())
    }

    pub fn detect(&self, flow_key: &FlowKey, packets: &[PacketRecord]) -> Result<Verdict> {
        self.detect_observed(flow_key, packets, &mut |_| {})
    }

    /// Like [`Ensemble::detect`], reporting the index of every submodel evaluated.
    pub fn detect_observed(
        &self,
        flow_key: &FlowKey,
        packets: &[PacketRecord],
        on_eval: &mut dyn FnMut(usize),
    ) -> Result<Verdict> {
        if packets.is_empty() {
            return Err(Error::EmptyFlow);
        }
        let matched = fuzzy_match_indices(&self.profile, flow_key);
        if matched.is_empty() {
            return Ok(Verdict {
                flow_key: flow_key.clone(),
                kind: VerdictKind::Stage1Malicious,
                activity: None,
                score: None,
                epsilon: None,
                models_triggered: 0,
                reason: Some(stage1_reason(&self.profile, flow_key)),
            });
        }
        let features = featurize(packets, &self.feature_config)?;
        let mut best: Option<(usize, f64)> = None;
        for &i in &matched {
            on_eval(i);
            let err = self.submodels[i].model.reconstruction_error(&features.values)?;
            if best.is_none_or(|(_, e)| err < e) {
                best = Some((i, err));
            }
        }
        let (idx, score) = best.expect("at least one key matched");
        let sub = &self.submodels[idx];
        let kind = if score > sub.epsilon {
            VerdictKind::Anomalous
        } else {
            VerdictKind::Benign
        };
        Ok(Verdict {
            flow_key: flow_key.clone(),
            kind,
            activity: Some(sub.key.clone()),
            score: Some(score),
            epsilon: Some(sub.epsilon),
            models_triggered: matched.len(),
            reason: None,
        })
    }

    /// Scores flows in parallel; output order follows the input.
    pub fn detect_all(&self, flows: &[(FlowKey, Vec<PacketRecord>)]) -> Result<Vec<Verdict>> {
        flows.par_iter().map(|(key, pkts)| self.detect(key, pkts)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackMetrics {
    pub flows: usize,
    pub detected: usize,
    pub tpr: f64,
    pub stage1_rate: f64,
    /// Against all benign flows; absent when there are none.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub flows: usize,
    pub benign: usize,
    pub attacks: usize,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub auc: Option<f64>,
    pub per_attack: BTreeMap<String, AttackMetrics>,
}

/// Probability that a random positive outranks a random negative, ties half.
pub fn auc(positives: &[f64], negatives: &[f64]) -> Option<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return None;
    }
    let mut neg = negatives.to_vec();
    neg.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &p in positives {
        let below = neg.partition_point(|&n| n < p);
        let not_above = neg.partition_point(|&n| n <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Some(wins / (positives.len() as f64 * neg.len() as f64))
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn evaluate(verdicts: &[Verdict], labels: &[Label]) -> Result<Metrics> {
    if verdicts.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: verdicts.len(),
            actual: labels.len(),
        });
    }
    let benign_scores: Vec<f64> = verdicts
        .iter()
        .zip(labels)
        .filter(|(_, l)| !l.is_attack())
        .map(|(v, _)| v.ranking_score())
        .collect();
    let false_pos = verdicts
        .iter()
        .zip(labels)
        .filter(|(v, l)| !l.is_attack() && v.is_flagged())
        .count();

    let mut by_kind: BTreeMap<String, Vec<&Verdict>> = BTreeMap::new();
    for (v, l) in verdicts.iter().zip(labels) {
        if let Label::Attack(kind) = l {
            by_kind.entry(kind.clone()).or_default().push(v);
        }
    }
    let per_attack = by_kind
        .iter()
        .map(|(kind, vs)| {
            let detected = vs.iter().filter(|v| v.is_flagged()).count();
            let stage1 = vs.iter().filter(|v| v.kind == VerdictKind::Stage1Malicious).count();
            let scores: Vec<f64> = vs.iter().map(|v| v.ranking_score()).collect();
            let m = AttackMetrics {
                flows: vs.len(),
                detected,
                tpr: detected as f64 / vs.len() as f64,
                stage1_rate: stage1 as f64 / vs.len() as f64,
                auc: auc(&scores, &benign_scores),
            };
            (kind.clone(), m)
        })
        .collect();

    let attack_scores: Vec<f64> = verdicts
        .iter()
        .zip(labels)
        .filter(|(_, l)| l.is_attack())
        .map(|(v, _)| v.ranking_score())
        .collect();
    let detected = verdicts
        .iter()
        .zip(labels)
        .filter(|(v, l)| l.is_attack() && v.is_flagged())
        .count();
    Ok(Metrics {
        flows: verdicts.len(),
        benign: benign_scores.len(),
        attacks: attack_scores.len(),
        tpr: ratio(detected, attack_scores.len()),
        fpr: ratio(false_pos, benign_scores.len()),
        auc: auc(&attack_scores, &benign_scores),
        per_attack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{Proto, Remote};
    use crate::tree::{Activity, PortPattern, RemotePattern};
    use std::net::Ipv4Addr;

    const DEVICE: Ipv4Addr = Ipv4Addr::new(192, 168, 1, 10);

    fn flow(name: &str, sport: u16, dport: u16) -> FlowKey {
        FlowKey {
            device_ip: DEVICE,
            remote: Remote::Domain(name.into()),
            src_port: sport,
            dst_port: dport,
            proto: Proto::Tcp,
        }
    }

    fn wildcard_key(dport: u16) -> ActivityKey {
        ActivityKey {
            proto: Proto::Tcp,
            remote_pattern: RemotePattern::WildcardDomain(".vendor.com".into()),
            src_port_pattern: PortPattern::RegDyn,
            dst_port_pattern: PortPattern::Exact(dport),
        }
    }

    fn profile(keys: Vec<(ActivityKey, Vec<FlowKey>)>) -> ActivityProfile {
        ActivityProfile {
            schema_version: SCHEMA_VERSION.into(),
            device_ip: DEVICE,
            local_prefixes: vec![],
            activities: keys
                .into_iter()
                .map(|(key, member_flows)| Activity { key, member_flows })
                .collect(),
        }
    }

    fn packets(key: &FlowKey, sizes: &[u16], gap: f64) -> Vec<PacketRecord> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, &length)| PacketRecord {
                ts: 100.0 + i as f64 * gap,
                src_ip: DEVICE,
                dst_ip: Ipv4Addr::new(203, 0, 113, 9),
                src_port: key.src_port,
                dst_port: key.dst_port,
                proto: key.proto,
                length,
                dns_name: key.remote.domain().map(str::to_string),
                label: None,
            })
            .collect()
    }

    fn small_training() -> TrainConfig {
        TrainConfig {
            epochs: 30,
            learning_rate: 1e-2,
            ..Default::default()
        }
    }

    #[test]
    fn fuzzy_match_examples() {
        let p = profile(vec![(wildcard_key(443), vec![])]);
        assert_eq!(fuzzy_match(&p, &flow("cam3.vendor.com", 50000, 443)).len(), 1);
        let p80 = profile(vec![(wildcard_key(80), vec![])]);
        assert!(fuzzy_match(&p80, &flow("cam3.vendor.com", 50000, 443)).is_empty());
        assert!(fuzzy_match(&p, &flow("cam3.vendor.com", 22, 443)).is_empty());
    }

    #[test]
    fn calibrate_examples() {
        let errors: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((calibrate_threshold(&errors, 0.9).unwrap() - 9.1).abs() < 1e-12);
        assert_eq!(calibrate_threshold(&[0.5; 100], 0.995).unwrap(), 0.5);
        assert!(matches!(calibrate_threshold(&[], 0.9), Err(Error::EmptyErrors)));
        assert_eq!(calibrate_threshold(&[0.0; 4], 0.5).unwrap(), 1e-9);
        assert!(calibrate_threshold(&[1.0], 1.0).is_err());
    }

    #[test]
    fn calibration_bounds_exceedances() {
        let errors: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 3.0).collect();
        for q in [0.5, 0.9, 0.99, 0.995] {
            let eps = calibrate_threshold(&errors, q).unwrap();
            let above = errors.iter().filter(|&&e| e > eps).count();
            assert!(above <= ((1.0 - q) * errors.len() as f64).ceil() as usize);
        }
    }

    fn trained_pair() -> (Ensemble, BTreeMap<FlowKey, Vec<PacketRecord>>) {
        let mut training = BTreeMap::new();
        let mut web = Vec::new();
        let mut api = Vec::new();
        for i in 0..40u16 {
            let f = flow("cam1.vendor.com", 50000 + i, 443);
            training.insert(f.clone(), packets(&f, &[1200, 1300, 1400, 1400], 0.05));
            web.push(f);
            let g = flow("cam2.vendor.com", 51000 + i, 8883);
            training.insert(g.clone(), packets(&g, &[90, 120], 1.0));
            api.push(g);
        }
        let p = profile(vec![(wildcard_key(443), web), (wildcard_key(8883), api)]);
        let fcfg = FeatureConfig::new(4, 1500.0, 5.0).unwrap();
        let ens = train_ensemble(&p, &training, &fcfg, &small_training(), &ThresholdConfig::default(), 3).unwrap();
        (ens, training)
    }

    #[test]
    fn kept_restart_is_no_worse_than_any_init() {
        let (ens, training) = trained_pair();
        for (i, sub) in ens.submodels.iter().enumerate() {
            let data: Vec<Vec<f64>> = ens.profile.activities[i]
                .member_flows
                .iter()
                .map(|f| featurize(&training[f], &ens.feature_config).unwrap().values)
                .collect();
            let mean =
                |m: &AEModel| data.iter().map(|x| m.reconstruction_error(x).unwrap()).sum::<f64>() / data.len() as f64;
            let kept = mean(&sub.model);
            for k in 0..INIT_RESTARTS {
                let init = AEModel::init(
                    Architecture::for_head_len(ens.feature_config.r),
                    submodel_seed(ens.seed, i * INIT_RESTARTS + k),
                )
                .unwrap();
                let (alt, _) = fit(&init, &data, &ens.train_config).unwrap();
                assert!(kept <= mean(&alt) + 1e-15);
            }
        }
    }

    #[test]
    fn one_submodel_per_key_and_deterministic() {
        let (a, training) = trained_pair();
        assert_eq!(a.submodels.len(), 2);
        assert!(a.submodels.iter().all(|s| s.epsilon > 0.0));
        a.validate().unwrap();
        let b = train_ensemble(
            &a.profile,
            &training,
            &a.feature_config,
            &small_training(),
            &ThresholdConfig::default(),
            3,
        )
        .unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn unknown_domain_is_stage1() {
        let (ens, _) = trained_pair();
        let f = flow("evil.example.net", 50000, 443);
        let v = ens.detect(&f, &packets(&f, &[100], 0.1)).unwrap();
        assert_eq!(v.kind, VerdictKind::Stage1Malicious);
        assert_eq!(v.models_triggered, 0);
        let reason = v.reason.unwrap();
        assert!(reason.contains("address failed"), "{reason}");
        assert!(reason.contains("protocol"), "{reason}");

        let telnet = flow("cam9.vendor.com", 50000, 23);
        let v = ens.detect(&telnet, &packets(&telnet, &[60], 0.1)).unwrap();
        assert!(v
            .reason
            .unwrap()
            .starts_with("protocol, address, src-port matched; dst-port failed"));
    }

    #[test]
    fn training_flows_replay_benign_and_only_matched_models_run() {
        let (ens, training) = trained_pair();
        let mut benign = 0;
        for (key, pkts) in &training {
            let mut evaluated = Vec::new();
            let v = ens.detect_observed(key, pkts, &mut |i| evaluated.push(i)).unwrap();
            assert_eq!(v.models_triggered, evaluated.len());
            assert_eq!(evaluated, fuzzy_match_indices(&ens.profile, key));
            assert_ne!(v.kind, VerdictKind::Stage1Malicious);
            if v.kind == VerdictKind::Benign {
                benign += 1;
            }
        }
        assert!(benign as f64 >= 0.995 * training.len() as f64 - 1.0);
    }

    #[test]
    fn alien_sizes_on_known_key_are_anomalous() {
        let (ens, _) = trained_pair();
        let f = flow("cam1.vendor.com", 60000, 443);
        let v = ens.detect(&f, &packets(&f, &[77, 81, 77, 81], 3.0)).unwrap();
        assert_eq!(v.models_triggered, 1);
        assert_eq!(v.kind, VerdictKind::Anomalous);
        assert!(v.score.unwrap() > v.epsilon.unwrap());
    }

    #[test]
    fn empty_inputs() {
        let (ens, _) = trained_pair();
        assert!(matches!(
            ens.detect(&flow("cam1.vendor.com", 60000, 443), &[]),
            Err(Error::EmptyFlow)
        ));
        let p = profile(vec![(wildcard_key(443), vec![flow("cam1.vendor.com", 1, 443)])]);
        let err = train_ensemble(
            &p,
            &BTreeMap::new(),
            &FeatureConfig::default(),
            &TrainConfig::default(),
            &ThresholdConfig::default(),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyActivity(_)));
    }

    #[test]
    fn validation_catches_tampering() {
        let (mut ens, _) = trained_pair();
        ens.submodels[0].epsilon = 0.0;
        assert!(ens.validate().is_err());
        let (mut ens, _) = trained_pair();
        ens.submodels.swap(0, 1);
        assert!(matches!(ens.validate(), Err(Error::Mismatch(_))));
    }

    fn verdict(kind: VerdictKind, score: f64) -> Verdict {
        Verdict {
            flow_key: flow("x.vendor.com", 1, 1),
            kind,
            activity: None,
            score: Some(score),
            epsilon: Some(1.0),
            models_triggered: 1,
            reason: None,
        }
    }

    #[test]
    fn evaluate_examples() {
        let atk = Label::Attack("Flood".into());
        let vs = vec![
            verdict(VerdictKind::Anomalous, 3.0),
            verdict(VerdictKind::Benign, 0.1),
            verdict(VerdictKind::Benign, 0.2),
        ];
        let m = evaluate(&vs, &[atk.clone(), Label::Benign, Label::Benign]).unwrap();
        assert_eq!(m.tpr, Some(1.0));
        assert_eq!(m.fpr, Some(0.0));
        assert_eq!(m.auc, Some(1.0));
        assert_eq!(m.per_attack["Flood"].detected, 1);

        let same: Vec<Verdict> = (0..4).map(|_| verdict(VerdictKind::Benign, 0.5)).collect();
        let m = evaluate(&same, &[atk.clone(), atk.clone(), Label::Benign, Label::Benign]).unwrap();
        assert_eq!(m.auc, Some(0.5));

        let mut vs: Vec<Verdict> = (0..10).map(|_| verdict(VerdictKind::Benign, 0.1)).collect();
        vs[3] = verdict(VerdictKind::Anomalous, 2.0);
        let m = evaluate(&vs, &vec![Label::Benign; 10]).unwrap();
        assert_eq!(m.fpr, Some(0.1));
        assert_eq!(m.tpr, None);

        assert!(matches!(
            evaluate(&vs, &[Label::Benign]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn stage1_ranks_above_everything() {
        let mut s1 = verdict(VerdictKind::Stage1Malicious, 0.0);
        s1.score = None;
        s1.epsilon = None;
        assert_eq!(s1.ranking_score(), f64::INFINITY);
        assert_eq!(auc(&[f64::INFINITY], &[1e300]), Some(1.0));
        assert_eq!(auc(&[f64::INFINITY], &[f64::INFINITY]), Some(0.5));
    }
}
