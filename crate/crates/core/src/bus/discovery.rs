use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    Joined(AgentId),
    Left(AgentId),
}

/// Liveness bookkeeping from agent status heartbeats.
///
/// An agent is live while its latest status is newer than
/// `now - staleness_window`.
#[derive(Debug, Clone)]
pub struct Discovery {
    staleness_window: f64,
    last_seen: BTreeMap<AgentId, f64>,
    live: BTreeSet<AgentId>,
}

impl Discovery {
    pub fn new(staleness_window: f64) -> Self {
        Self { staleness_window, last_seen: BTreeMap::new(), live: BTreeSet::new() }
    }

    pub fn staleness_window(&self) -> f64 {
        self.staleness_window
    }

    /// Records a heartbeat stamped `t`. Reports a join when the agent was not live.
    pub fn observe(&mut self, agent: AgentId, t: f64) -> Option<Membership> {
        let e = self.last_seen.entry(agent).or_insert(t);
        if t > *e {
            *e = t;
        }
        self.live.insert(agent).then_some(Membership::Joined(agent))
    }

    /// Retires agents whose latest heartbeat has gone stale.
    pub fn refresh(&mut self, now: f64) -> Vec<Membership> {
        let cutoff = now - self.staleness_window;
        let stale: Vec<AgentId> = self
            .live
            .iter()
            .copied()
            .filter(|a| self.last_seen.get(a).is_none_or(|t| *t <= cutoff))
            .collect();
        for a in &stale {
            self.live.remove(a);
        }
        stale.into_iter().map(Membership::Left).collect()
    }

    pub fn is_live(&self, agent: AgentId) -> bool {
        self.live.contains(&agent)
    }

    pub fn live(&self) -> &BTreeSet<AgentId> {
        &self.live
    }
}

/// Stateless form: the live set implied by a batch of `(agent, stamp)` heartbeats.
pub fn discover(status: &[(AgentId, f64)], now: f64, staleness_window: f64) -> BTreeSet<AgentId> {
    let mut latest: BTreeMap<AgentId, f64> = BTreeMap::new();
    for &(a, t) in status {
        let e = latest.entry(a).or_insert(t);
        *e = e.max(t);
    }
    latest
        .into_iter()
        .filter(|(_, t)| *t > now - staleness_window && *t <= now)
        .map(|(a, _)| a)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_status_is_empty_set() {
        assert!(discover(&[], 1.0, 0.5).is_empty());
        let mut d = Discovery::new(0.5);
        assert!(d.refresh(10.0).is_empty());
        assert!(d.live().is_empty());
    }

    #[test]
    fn steady_heartbeat_stays_live() {
        let mut d = Discovery::new(0.5);
        for k in 0..50 {
            let t = k as f64 * 0.1;
            d.observe(AgentId(1), t);
            assert!(d.refresh(t).is_empty());
            assert!(d.is_live(AgentId(1)));
        }
    }

    #[test]
    fn silent_agent_leaves_then_rejoins() {
        // Heartbeats at 0.0..=1.0, silence until 2.0, then resume.
        let mut d = Discovery::new(0.5);
        let mut events = Vec::new();
        for k in 0..=30 {
            let t = k as f64 * 0.1;
            if !(11..20).contains(&k) {
                if let Some(m) = d.observe(AgentId(2), t) {
                    events.push((k, m));
                }
            }
            for m in d.refresh(t) {
                events.push((k, m));
            }
        }
        assert_eq!(
            events,
            vec![
                (0, Membership::Joined(AgentId(2))),
                (15, Membership::Left(AgentId(2))),
                (20, Membership::Joined(AgentId(2))),
            ]
        );
        let stamps = [(AgentId(2), 1.0), (AgentId(3), 1.9)];
        assert_eq!(discover(&stamps, 2.0, 0.5), BTreeSet::from([AgentId(3)]));
    }
}
