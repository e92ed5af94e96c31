//! Logical-time publish/subscribe bus.
//!
//! A single serial event loop. Messages are scheduled per subscriber with a
//! sampled channel latency (or dropped), and delivered in
//! `(time, publication sequence, hop, subscriber)` order. Topics can be
//! remapped through an interceptor node; the interceptor forwards messages
//! with their original source, stamp and sequence, so downstream subscribers
//! see the same stream they would without it.

mod discovery;
mod queue;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::{hash_str, stream, Domain};

pub use discovery::{discover, Discovery, Membership};
pub use queue::{BoundedTimeQueue, DEFAULT_QUEUE_CAPACITY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BusError {
    #[error("topic `{0}` is not registered")]
    UnknownTopic(String),
    #[error("node `{0}` is not registered")]
    UnknownNode(String),
    #[error("remap of `{0}` would create a cycle")]
    RemapCycle(String),
    #[error("topic `{0}` is already remapped")]
    DuplicateRemap(String),
    #[error("invalid channel model: {0}")]
    InvalidChannel(String),
    #[error("negative timestamp {0}")]
    NegativeTimestamp(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Topic(pub String);

impl Topic {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Latency and loss model of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub latency_mean: f64,
    pub latency_jitter_std: f64,
    pub drop_prob: f64,
}

impl ChannelModel {
    /// In-process link: no delay, no loss.
    pub const fn local() -> Self {
        Self { latency_mean: 0.0, latency_jitter_std: 0.0, drop_prob: 0.0 }
    }

    /// Wired infrastructure uplink.
    pub const fn wired() -> Self {
        Self { latency_mean: 0.005, latency_jitter_std: 0.0, drop_prob: 0.0 }
    }

    /// Wireless mobile uplink.
    pub const fn wireless() -> Self {
        Self { latency_mean: 0.05, latency_jitter_std: 0.01, drop_prob: 0.01 }
    }

    pub fn validate(&self) -> Result<(), BusError> {
        if !(self.latency_mean >= 0.0) || !(self.latency_jitter_std >= 0.0) {
            return Err(BusError::InvalidChannel("latency must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(BusError::InvalidChannel("drop_prob must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Samples the link outcome: `None` when dropped, otherwise the delay.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Option<f64> {
        let u: f64 = rng.random();
        let z: f64 = StandardNormal.sample(rng);
        if self.drop_prob > 0.0 && u < self.drop_prob {
            return None;
        }
        Some((self.latency_mean + self.latency_jitter_std * z).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StampedMessage<P> {
    pub topic: Topic,
    pub source: NodeId,
    /// Sender logical time.
    pub timestamp: f64,
    pub payload: P,
}

/// Routes `original` through `interceptor`; raw messages travel on `republished`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemapRule {
    pub original: Topic,
    pub interceptor: NodeId,
    pub republished: Topic,
}

/// A message arriving at one subscriber.
#[derive(Debug, Clone)]
pub struct Delivery<P> {
    pub time: f64,
    pub seq: u64,
    pub hop: u32,
    pub subscriber: NodeId,
    /// Channel the message is travelling on end to end.
    pub channel: ChannelModel,
    pub msg: StampedMessage<P>,
}

#[derive(Debug)]
struct Scheduled<P> {
    time: f64,
    seq: u64,
    hop: u32,
    sub_index: usize,
    delivery: Delivery<P>,
}

impl<P> Scheduled<P> {
    fn key(&self) -> (f64, u64, u32, usize) {
        (self.time, self.seq, self.hop, self.sub_index)
    }
}

impl<P> PartialEq for Scheduled<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<P> Eq for Scheduled<P> {}

impl<P> PartialOrd for Scheduled<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Scheduled<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Subscription {
    node: NodeId,
    channel: Option<[u64; 3]>,
}

impl Subscription {
    fn channel(&self) -> Option<ChannelModel> {
        self.channel.map(|c| ChannelModel {
            latency_mean: f64::from_bits(c[0]),
            latency_jitter_std: f64::from_bits(c[1]),
            drop_prob: f64::from_bits(c[2]),
        })
    }
}

/// One delivered event, as written to the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub topic: String,
    pub source: String,
    pub subscriber: String,
    pub seq: u64,
    pub digest: String,
}

/// Hex SHA-256 prefix of the payload's JSON encoding.
pub fn payload_digest<P: Serialize>(payload: &P) -> String {
    let bytes = serde_json::to_vec(payload).unwrap_or_default();
    hex::encode(&Sha256::digest(&bytes)[..8])
}

/// Publications produced by a node callback.
#[derive(Debug)]
pub struct Outbox<P> {
    items: Vec<Outgoing<P>>,
}

#[derive(Debug)]
struct Outgoing<P> {
    msg: StampedMessage<P>,
    channel: ChannelModel,
    forwarded: Option<(NodeId, u64)>,
}

impl<P> Default for Outbox<P> {
    fn default() -> Self {
        Self { items: Vec::new() }
    }
}

impl<P> Outbox<P> {
    pub fn publish(&mut self, msg: StampedMessage<P>, channel: ChannelModel) {
        self.items.push(Outgoing { msg, channel, forwarded: None });
    }

    /// Re-emits an intercepted message on its original topic, preserving its
    /// source, stamp, sequence and end-to-end channel.
    pub fn forward(&mut self, delivery: &Delivery<P>, topic: Topic, payload: P) {
        self.items.push(Outgoing {
            msg: StampedMessage {
                topic,
                source: delivery.msg.source.clone(),
                timestamp: delivery.msg.timestamp,
                payload,
            },
            channel: delivery.channel,
            forwarded: Some((delivery.subscriber.clone(), delivery.seq)),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub struct Bus<P> {
    seed: u64,
    now: f64,
    nodes: BTreeSet<NodeId>,
    topics: BTreeMap<Topic, Vec<Subscription>>,
    remaps: BTreeMap<Topic, RemapRule>,
    pending: BinaryHeap<Reverse<Scheduled<P>>>,
    next_seq: u64,
    dropped: u64,
    log: Option<Vec<EventRecord>>,
}

impl<P: Clone + Serialize> Bus<P> {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            now: 0.0,
            nodes: BTreeSet::new(),
            topics: BTreeMap::new(),
            remaps: BTreeMap::new(),
            pending: BinaryHeap::new(),
            next_seq: 0,
            dropped: 0,
            log: None,
        }
    }

    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn events(&self) -> &[EventRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn write_event_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in self.events() {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn register_node(&mut self, node: NodeId) {
        self.nodes.insert(node);
    }

    pub fn register_topic(&mut self, topic: Topic) {
        self.topics.entry(topic).or_default();
    }

    pub fn subscribe(
        &mut self,
        topic: &Topic,
        node: NodeId,
        channel: Option<ChannelModel>,
    ) -> Result<(), BusError> {
        if let Some(c) = &channel {
            c.validate()?;
        }
        self.nodes.insert(node.clone());
        let subs = self
            .topics
            .get_mut(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.to_string()))?;
        let sub = Subscription {
            node,
            channel: channel.map(|c| {
                [c.latency_mean.to_bits(), c.latency_jitter_std.to_bits(), c.drop_prob.to_bits()]
            }),
        };
        if !subs.contains(&sub) {
            subs.push(sub);
        }
        Ok(())
    }

    pub fn unsubscribe(&mut self, topic: &Topic, node: &NodeId) {
        if let Some(subs) = self.topics.get_mut(topic) {
            subs.retain(|s| &s.node != node);
        }
    }

    pub fn subscribers(&self, topic: &Topic) -> Vec<NodeId> {
        self.topics
            .get(topic)
            .map(|s| s.iter().map(|s| s.node.clone()).collect())
            .unwrap_or_default()
    }

    pub fn remaps(&self) -> impl Iterator<Item = &RemapRule> {
        self.remaps.values()
    }

    /// Installs a remap; the interceptor becomes the sole subscriber of the
    /// republished topic.
    pub fn add_remap(&mut self, rule: RemapRule) -> Result<(), BusError> {
        if !self.topics.contains_key(&rule.original) {
            return Err(BusError::UnknownTopic(rule.original.to_string()));
        }
        if !self.nodes.contains(&rule.interceptor) {
            return Err(BusError::UnknownNode(rule.interceptor.to_string()));
        }
        if self.remaps.contains_key(&rule.original) {
            return Err(BusError::DuplicateRemap(rule.original.to_string()));
        }
        // Follow original → republished edges; reaching the new original again is a cycle.
        let mut cur = rule.republished.clone();
        let mut hops = 0;
        loop {
            if cur == rule.original {
                return Err(BusError::RemapCycle(rule.original.to_string()));
            }
            match self.remaps.get(&cur) {
                Some(r) if hops <= self.remaps.len() => {
                    cur = r.republished.clone();
                    hops += 1;
                }
                _ => break,
            }
        }
        self.register_topic(rule.republished.clone());
        self.subscribe(&rule.republished, rule.interceptor.clone(), Some(ChannelModel::local()))?;
        self.remaps.insert(rule.original.clone(), rule);
        Ok(())
    }

    /// Schedules deliveries of `msg`; returns the number of arrival events.
    pub fn publish(&mut self, msg: StampedMessage<P>, channel: ChannelModel) -> Result<usize, BusError> {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.route(msg, channel, seq, 0, None)
    }

    fn route(
        &mut self,
        mut msg: StampedMessage<P>,
        channel: ChannelModel,
        seq: u64,
        hop: u32,
        via: Option<&NodeId>,
    ) -> Result<usize, BusError> {
        channel.validate()?;
        if msg.timestamp < 0.0 {
            return Err(BusError::NegativeTimestamp(msg.timestamp));
        }
        if !self.topics.contains_key(&msg.topic) {
            return Err(BusError::UnknownTopic(msg.topic.to_string()));
        }
        if let Some(rule) = self.remaps.get(&msg.topic) {
            if via != Some(&rule.interceptor) {
                // Hop into the interceptor: co-located, no delay or loss.
                msg.topic = rule.republished.clone();
                let time = msg.timestamp.max(self.now);
                let delivery = Delivery {
                    time,
                    seq,
                    hop,
                    subscriber: rule.interceptor.clone(),
                    channel,
                    msg,
                };
                self.pending.push(Reverse(Scheduled { time, seq, hop, sub_index: 0, delivery }));
                return Ok(1);
            }
        }
        let subs = self.topics[&msg.topic].clone();
        let mut n = 0;
        for (i, sub) in subs.iter().enumerate() {
            let ch = sub.channel().unwrap_or(channel);
            let key = hash_str(&format!("{}|{}|{}", msg.source, msg.topic, sub.node));
            let mut rng = stream(self.seed, Domain::Channel, key, msg.timestamp.to_bits());
            let Some(delay) = ch.sample(&mut rng) else {
                self.dropped += 1;
                continue;
            };
            let time = (msg.timestamp + delay).max(self.now);
            let delivery = Delivery {
                time,
                seq,
                hop,
                subscriber: sub.node.clone(),
                channel,
                msg: msg.clone(),
            };
            self.pending.push(Reverse(Scheduled { time, seq, hop, sub_index: i, delivery }));
            n += 1;
        }
        Ok(n)
    }

    fn flush(&mut self, outbox: Outbox<P>, hop: u32) -> Result<(), BusError> {
        for o in outbox.items {
            match o.forwarded {
                Some((via, seq)) => {
                    self.route(o.msg, o.channel, seq, hop + 1, Some(&via))?;
                }
                None => {
                    self.publish(o.msg, o.channel)?;
                }
            }
        }
        Ok(())
    }

    /// Delivers every event with time ≤ `until` to `handler`, then advances the
    /// clock to `until`. Publications made by the handler are routed
    /// immediately and are delivered in the same call if due.
    pub fn step<F>(&mut self, until: f64, mut handler: F) -> Result<usize, BusError>
    where
        F: FnMut(&Delivery<P>, &mut Outbox<P>),
    {
        let mut processed = 0;
        while self.pending.peek().is_some_and(|Reverse(s)| s.time <= until) {
            let Reverse(s) = self.pending.pop().expect("peeked");
            self.now = self.now.max(s.time);
            if let Some(log) = &mut self.log {
                log.push(EventRecord {
                    time: s.time,
                    topic: s.delivery.msg.topic.to_string(),
                    source: s.delivery.msg.source.to_string(),
                    subscriber: s.delivery.subscriber.to_string(),
                    seq: s.seq,
                    digest: payload_digest(&s.delivery.msg.payload),
                });
            }
            let mut outbox = Outbox::default();
            handler(&s.delivery, &mut outbox);
            processed += 1;
            self.flush(outbox, s.hop)?;
        }
        self.now = self.now.max(until);
        Ok(processed)
    }
}
