//! Signature IDS fed by router taps.
//!
//! Rules see every tapped frame. A packet keeps its id across hops, so
//! each rule reacts to a given packet once even when several taps (or
//! several hops past one tap) observe it.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::dnp3::{decode_frame, decode_message, CodecError, FunctionCode};
use crate::netsim::{ArpOp, Frame, LinkAddr, Protocol, DNP3_PORT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IdsError {
    #[error("invalid rule {id}: {reason}")]
    InvalidRule { id: String, reason: String },
    #[error("invalid ruleset: {0}")]
    Parse(String),
    #[error("histogram bucket must be positive")]
    BadBucket,
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    IcmpRate,
    ArpBindingChange,
    Dnp3Function,
    Dnp3CrcMismatch,
}

impl RuleKind {
    pub fn label(self) -> &'static str {
        match self {
            RuleKind::IcmpRate => "icmp_rate",
            RuleKind::ArpBindingChange => "arp_binding_change",
            RuleKind::Dnp3Function => "dnp3_function",
            RuleKind::Dnp3CrcMismatch => "dnp3_crc_mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub id: String,
    pub kind: RuleKind,
    /// Rate window in network seconds (IcmpRate).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_s: Option<f64>,
    /// Echo requests per window that raise an alert (IcmpRate).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u32>,
    /// Function codes that raise an alert (Dnp3Function).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub functions: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ruleset {
    pub rules: Vec<Rule>,
}

impl Default for Ruleset {
    /// ICMP flood at 50 echo requests per second, ARP spoof, DNP3
    /// select/operate/direct-operate, and CRC mismatch.
    fn default() -> Self {
        let rule = |id: &str, kind| Rule {
            id: id.into(),
            kind,
            window_s: None,
            threshold: None,
            functions: vec![],
        };
        Self {
            rules: vec![
                Rule {
                    window_s: Some(1.0),
                    threshold: Some(50),
                    ..rule("icmp-flood", RuleKind::IcmpRate)
                },
                rule("arp-spoof", RuleKind::ArpBindingChange),
                Rule {
                    functions: vec![
                        FunctionCode::Select.as_u8(),
                        FunctionCode::Operate.as_u8(),
                        FunctionCode::DirectOperate.as_u8(),
                    ],
                    ..rule("dnp3-operate", RuleKind::Dnp3Function)
                },
                rule("dnp3-crc", RuleKind::Dnp3CrcMismatch),
            ],
        }
    }
}

impl Ruleset {
    pub fn from_toml_str(s: &str) -> Result<Self, IdsError> {
        let r: Ruleset = toml::from_str(s).map_err(|e| IdsError::Parse(e.message().to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), IdsError> {
        let bad = |r: &Rule, reason: &str| {
            Err(IdsError::InvalidRule {
                id: r.id.clone(),
                reason: reason.into(),
            })
        };
        let mut ids = HashSet::new();
        for r in &self.rules {
            if !ids.insert(&r.id) {
                return bad(r, "duplicate id");
            }
            match r.kind {
                RuleKind::IcmpRate => {
                    if !r.window_s.is_some_and(|w| w > 0.0) {
                        return bad(r, "window_s must be > 0");
                    }
                    if !r.threshold.is_some_and(|t| t >= 1) {
                        return bad(r, "threshold must be >= 1");
                    }
                }
                RuleKind::Dnp3Function => {
                    if r.functions.is_empty() {
                        return bad(r, "functions must not be empty");
                    }
                }
                RuleKind::ArpBindingChange | RuleKind::Dnp3CrcMismatch => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    /// Scenario seconds.
    pub time: f64,
    pub rule_id: String,
    pub kind: RuleKind,
    pub sensor: String,
    pub src: String,
    pub dst: String,
    pub detail: String,
}

#[derive(Debug, Default)]
struct RuleState {
    seen: HashSet<u64>,
    /// IcmpRate: current window index and count.
    window: Option<(u64, u32)>,
}

#[derive(Debug)]
pub struct Ids {
    rules: Vec<(Rule, RuleState)>,
    bindings: BTreeMap<Ipv4Addr, LinkAddr>,
    alerts: Vec<AlertRecord>,
    time_scale: f64,
}

impl Ids {
    /// `bindings` seeds the known IP-to-link mapping; `time_scale` turns
    /// network seconds into the scenario seconds stamped on alerts.
    pub fn new(
        ruleset: &Ruleset,
        bindings: BTreeMap<Ipv4Addr, LinkAddr>,
        time_scale: f64,
    ) -> Result<Self, IdsError> {
        ruleset.validate()?;
        Ok(Self {
            rules: ruleset
                .rules
                .iter()
                .map(|r| (r.clone(), RuleState::default()))
                .collect(),
            bindings,
            alerts: Vec::new(),
            time_scale,
        })
    }

    pub fn alerts(&self) -> &[AlertRecord] {
        &self.alerts
    }

    pub fn into_alerts(self) -> Vec<AlertRecord> {
        self.alerts
    }

    /// Runs every rule over one tapped frame at network time `t`.
    pub fn inspect(&mut self, t: f64, sensor: &str, frame: &Frame) -> usize {
        let before = self.alerts.len();
        let p = &frame.packet;
        let dnp3 = (p.uses_port(DNP3_PORT) && !p.payload.is_empty()).then_some(&p.payload);
        for (rule, state) in self.rules.iter_mut() {
            let alert = |detail: String| AlertRecord {
                time: t * self.time_scale,
                rule_id: rule.id.clone(),
                kind: rule.kind,
                sensor: sensor.into(),
                src: p.src.to_string(),
                dst: p.dst.to_string(),
                detail,
            };
            match rule.kind {
                RuleKind::IcmpRate => {
                    if !p.is_echo_request() || !state.seen.insert(p.id) {
                        continue;
                    }
                    let w = (t / rule.window_s.expect("validated")).floor() as u64;
                    let threshold = rule.threshold.expect("validated");
                    let count = match state.window {
                        Some((cur, n)) if cur == w => n + 1,
                        _ => 1,
                    };
                    state.window = Some((w, count));
                    if count == threshold {
                        self.alerts.push(alert(format!(
                            "{threshold} echo requests within window {w}"
                        )));
                    }
                }
                RuleKind::ArpBindingChange => {
                    let Protocol::Arp {
                        op: ArpOp::Reply,
                        sender_ip,
                        sender_mac,
                        ..
                    } = p.protocol
                    else {
                        continue;
                    };
                    if !state.seen.insert(p.id) {
                        continue;
                    }
                    let old = self.bindings.insert(sender_ip, sender_mac);
                    if let Some(old) = old.filter(|o| *o != sender_mac) {
                        self.alerts
                            .push(alert(format!("{sender_ip}: {old} -> {sender_mac}")));
                    }
                }
                RuleKind::Dnp3Function => {
                    let Some(bytes) = dnp3 else { continue };
                    let Ok(msg) = decode_message(bytes) else {
                        continue;
                    };
                    let code = msg.fragment.function.as_u8();
                    if rule.functions.contains(&code) && state.seen.insert(p.id) {
                        self.alerts.push(alert(format!("function 0x{code:02x}")));
                    }
                }
                RuleKind::Dnp3CrcMismatch => {
                    let Some(bytes) = dnp3 else { continue };
                    if let Err(e @ (CodecError::BadHeaderCrc | CodecError::BadBlockCrc(_))) =
                        decode_frame(bytes)
                    {
                        if state.seen.insert(p.id) {
                            self.alerts.push(alert(e.to_string()));
                        }
                    }
                }
            }
        }
        self.alerts.len() - before
    }
}

/// Alert counts per (kind, floor(time / bucket)).
pub fn alert_histogram(
    alerts: &[AlertRecord],
    bucket_s: f64,
) -> Result<BTreeMap<(RuleKind, u64), usize>, IdsError> {
    if !(bucket_s > 0.0) {
        return Err(IdsError::BadBucket);
    }
    let mut h = BTreeMap::new();
    for a in alerts {
        *h.entry((a.kind, (a.time / bucket_s).floor() as u64))
            .or_insert(0) += 1;
    }
    Ok(h)
}

pub fn write_alerts_csv<W: Write>(w: W, alerts: &[AlertRecord]) -> Result<(), IdsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "rule_id", "kind", "sensor", "src", "dst", "detail"])
        .map_err(|e| IdsError::Csv(e.to_string()))?;
    for a in alerts {
        out.write_record([
            &a.time.to_string(),
            &a.rule_id,
            a.kind.label(),
            &a.sensor,
            &a.src,
            &a.dst,
            &a.detail,
        ])
        .map_err(|e| IdsError::Csv(e.to_string()))?;
    }
    out.flush().map_err(|e| IdsError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{IcmpKind, Packet, SimTime};

    fn packet(id: u64, protocol: Protocol, payload: Vec<u8>, port: u16) -> Frame {
        Frame {
            src_mac: LinkAddr(1),
            dst_mac: LinkAddr(2),
            packet: Packet {
                id,
                src: Ipv4Addr::new(10, 0, 0, 1),
                dst: Ipv4Addr::new(10, 0, 0, 2),
                src_port: 50000,
                dst_port: port,
                protocol,
                payload,
                is_retransmission: false,
                created_at: SimTime::ZERO,
            },
        }
    }

    fn echo(id: u64) -> Frame {
        packet(
            id,
            Protocol::Icmp {
                kind: IcmpKind::EchoRequest,
                ident: 0,
                seq: 0,
            },
            vec![0; 10],
            0,
        )
    }

    fn ids() -> Ids {
        Ids::new(&Ruleset::default(), BTreeMap::new(), 1.0).unwrap()
    }

    #[test]
    fn icmp_rate_alerts_once_per_window() {
        let mut ids = ids();
        for i in 0..100 {
            ids.inspect(i as f64 * 0.01, "r", &echo(i));
            // A second tap seeing the same packet does not double count.
            ids.inspect(i as f64 * 0.01, "r2", &echo(i));
        }
        for i in 0..30 {
            ids.inspect(1.0 + i as f64 * 0.01, "r", &echo(1000 + i));
        }
        let rate: Vec<_> = ids
            .alerts()
            .iter()
            .filter(|a| a.kind == RuleKind::IcmpRate)
            .collect();
        assert_eq!(rate.len(), 1);
    }

    fn arp(id: u64, ip: Ipv4Addr, mac: u32) -> Frame {
        packet(
            id,
            Protocol::Arp {
                op: ArpOp::Reply,
                sender_ip: ip,
                sender_mac: LinkAddr(mac),
                target_ip: Ipv4Addr::new(10, 0, 0, 9),
            },
            vec![],
            0,
        )
    }

    #[test]
    fn arp_binding_change_alerts() {
        let gw = Ipv4Addr::new(10, 10, 1, 1);
        let mut ids = Ids::new(
            &Ruleset::default(),
            BTreeMap::from([(gw, LinkAddr(7))]),
            1.0,
        )
        .unwrap();
        ids.inspect(0.0, "r", &arp(1, gw, 7));
        assert!(ids.alerts().is_empty());
        ids.inspect(0.1, "r", &arp(2, gw, 66));
        assert_eq!(ids.alerts().len(), 1);
        assert_eq!(ids.alerts()[0].kind, RuleKind::ArpBindingChange);
    }

    fn dnp3(function: FunctionCode) -> Vec<u8> {
        use crate::dnp3::*;
        encode_message(&Message {
            header: LinkHeader {
                control: CONTROL_MASTER_DATA,
                destination: 10,
                source: 1,
            },
            transport_seq: 0,
            fragment: AppFragment::request(0, function, vec![]),
        })
        .unwrap()
    }

    #[test]
    fn dnp3_operate_and_crc_rules() {
        let tcp = Protocol::MiniTcp {
            seq: 1,
            ack: 0,
            flags: Default::default(),
        };
        let mut ids = ids();
        ids.inspect(
            0.0,
            "r",
            &packet(1, tcp.clone(), dnp3(FunctionCode::Read), DNP3_PORT),
        );
        assert!(ids.alerts().is_empty());
        for f in [
            FunctionCode::Select,
            FunctionCode::Operate,
            FunctionCode::DirectOperate,
        ] {
            ids.inspect(
                0.0,
                "r",
                &packet(10 + f.as_u8() as u64, tcp.clone(), dnp3(f), DNP3_PORT),
            );
        }
        assert_eq!(ids.alerts().len(), 3);
        let mut bad = dnp3(FunctionCode::Read);
        bad[11] ^= 0x01;
        ids.inspect(0.0, "r", &packet(99, tcp, bad, DNP3_PORT));
        assert_eq!(ids.alerts().last().unwrap().kind, RuleKind::Dnp3CrcMismatch);
    }

    fn at(time: f64) -> AlertRecord {
        AlertRecord {
            time,
            rule_id: "dnp3-operate".into(),
            kind: RuleKind::Dnp3Function,
            sensor: "r".into(),
            src: String::new(),
            dst: String::new(),
            detail: String::new(),
        }
    }

    #[test]
    fn histogram_buckets() {
        assert!(alert_histogram(&[], 60.0).unwrap().is_empty());
        let h = alert_histogram(&[at(1.0), at(2.0), at(61.0)], 60.0).unwrap();
        assert_eq!(h[&(RuleKind::Dnp3Function, 0)], 2);
        assert_eq!(h[&(RuleKind::Dnp3Function, 1)], 1);
        assert!(alert_histogram(&[], 0.0).is_err());
    }

    #[test]
    fn ruleset_round_trip_and_validation() {
        let text = toml::to_string(&Ruleset::default()).unwrap();
        assert_eq!(Ruleset::from_toml_str(&text).unwrap(), Ruleset::default());
        let bad = "[[rules]]\nid = \"x\"\nkind = \"icmp_rate\"\nwindow_s = 0.0\nthreshold = 5\n";
        assert!(matches!(
            Ruleset::from_toml_str(bad),
            Err(IdsError::InvalidRule { .. })
        ));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut buf = Vec::new();
        write_alerts_csv(&mut buf, &[at(1.5)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "time,rule_id,kind,sensor,src,dst,detail\n1.5,dnp3-operate,dnp3_function"
        ));
    }
}
