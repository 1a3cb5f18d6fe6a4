//! Simulated Zeroconf service-discovery bus.
//!
//! Machines advertise themselves while available and withdraw when they
//! leave that state. Announcements take `latency` to reach the bus. A
//! withdrawn machine stays visible for `staleness` more time units, which is
//! how two clients can both discover a machine that only one of them will
//! obtain.
//!
//! The bus itself never schedules events; the kernel turns the returned
//! epochs and notification lists into deliveries.

use std::collections::{BTreeMap, BTreeSet};

use crate::kernel::message::{ClientId, MachineId};
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BusConfig {
    pub latency: SimTime,
    pub staleness: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Visible {
    advertised_at: SimTime,
    epoch: u32,
    withdrawn: bool,
}

#[derive(Clone, Debug, Default)]
struct Subscription {
    id: u32,
    notified: BTreeSet<(MachineId, u32)>,
}

/// A discovery notification for one client.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Discovery {
    pub client: ClientId,
    pub machine: MachineId,
    pub epoch: u32,
    pub stale: bool,
}

#[derive(Clone, Debug)]
pub struct Bus {
    config: BusConfig,
    /// Machine-side view: which machines currently have a live advertisement
    /// out, and under which epoch.
    advertised: BTreeMap<MachineId, u32>,
    next_epoch: BTreeMap<MachineId, u32>,
    /// Bus-side view after propagation.
    visible: BTreeMap<MachineId, Visible>,
    subscribers: BTreeMap<ClientId, Subscription>,
    next_subscription: u32,
}

impl Bus {
    pub fn new(config: BusConfig) -> Self {
        Bus {
            config,
            advertised: BTreeMap::new(),
            next_epoch: BTreeMap::new(),
            visible: BTreeMap::new(),
            subscribers: BTreeMap::new(),
            next_subscription: 0,
        }
    }

    pub fn config(&self) -> BusConfig {
        self.config
    }

    pub fn is_advertised(&self, machine: MachineId) -> bool {
        self.advertised.contains_key(&machine)
    }

    /// Starts an advertisement. Returns the new epoch, or `None` when the
    /// machine is already advertised (idempotent).
    pub fn advertise(&mut self, machine: MachineId) -> Option<u32> {
        if self.advertised.contains_key(&machine) {
            return None;
        }
        let next = self.next_epoch.entry(machine).or_insert(1);
        let epoch = *next;
        *next += 1;
        self.advertised.insert(machine, epoch);
        Some(epoch)
    }

    /// Retracts the live advertisement. Returns its epoch, or `None` when
    /// nothing was advertised.
    pub fn withdraw(&mut self, machine: MachineId) -> Option<u32> {
        self.advertised.remove(&machine)
    }

    /// An advertisement reached the bus. Returns the subscribers to notify,
    /// in client order.
    pub fn advertisement_arrived(
        &mut self,
        machine: MachineId,
        epoch: u32,
        sent_at: SimTime,
    ) -> Vec<Discovery> {
        self.visible.insert(
            machine,
            Visible {
                advertised_at: sent_at,
                epoch,
                withdrawn: false,
            },
        );
        let mut out = Vec::new();
        for (&client, sub) in &mut self.subscribers {
            if sub.notified.insert((machine, epoch)) {
                out.push(Discovery {
                    client,
                    machine,
                    epoch,
                    stale: false,
                });
            }
        }
        out
    }

    /// A withdrawal reached the bus. Returns true when the entry lingers and
    /// an expiry must be scheduled after the staleness window.
    pub fn withdrawal_arrived(&mut self, machine: MachineId, epoch: u32) -> bool {
        match self.visible.get_mut(&machine) {
            Some(v) if v.epoch == epoch => {
                if self.config.staleness == SimTime::ZERO {
                    self.visible.remove(&machine);
                    false
                } else {
                    v.withdrawn = true;
                    true
                }
            }
            _ => false,
        }
    }

    /// End of the staleness window for `(machine, epoch)`.
    pub fn expire(&mut self, machine: MachineId, epoch: u32) {
        if let Some(v) = self.visible.get(&machine) {
            if v.epoch == epoch && v.withdrawn {
                self.visible.remove(&machine);
            }
        }
    }

    /// Registers (or re-registers) a listener with a fresh notification
    /// history. Returns the subscription id the snapshot must carry.
    pub fn subscribe(&mut self, client: ClientId) -> u32 {
        let id = self.next_subscription;
        self.next_subscription += 1;
        self.subscribers.insert(
            client,
            Subscription {
                id,
                notified: BTreeSet::new(),
            },
        );
        id
    }

    pub fn unsubscribe(&mut self, client: ClientId) {
        self.subscribers.remove(&client);
    }

    pub fn is_subscribed(&self, client: ClientId) -> bool {
        self.subscribers.contains_key(&client)
    }

    /// Snapshot delivery for a subscription: every visible machine the
    /// subscriber has not heard about yet, in advertisement order with ties
    /// broken by machine id. Stale subscriptions get nothing.
    pub fn snapshot(&mut self, client: ClientId, subscription: u32) -> Vec<Discovery> {
        let Some(sub) = self.subscribers.get_mut(&client) else {
            return Vec::new();
        };
        if sub.id != subscription {
            return Vec::new();
        }
        let mut entries: Vec<(SimTime, MachineId, Visible)> = self
            .visible
            .iter()
            .map(|(&m, &v)| (v.advertised_at, m, v))
            .collect();
        entries.sort_by_key(|&(at, m, _)| (at, m));
        entries
            .into_iter()
            .filter(|&(_, m, v)| sub.notified.insert((m, v.epoch)))
            .map(|(_, machine, v)| Discovery {
                client,
                machine,
                epoch: v.epoch,
                stale: v.withdrawn,
            })
            .collect()
    }

    /// Machines visible right now, in snapshot order.
    pub fn visible_machines(&self) -> Vec<MachineId> {
        let mut v: Vec<_> = self
            .visible
            .iter()
            .map(|(&m, v)| (v.advertised_at, m))
            .collect();
        v.sort();
        v.into_iter().map(|(_, m)| m).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bus(staleness: u64) -> Bus {
        Bus::new(BusConfig {
            latency: SimTime::from_units(1),
            staleness: SimTime::from_units(staleness),
        })
    }

    const M0: MachineId = MachineId(0);
    const M1: MachineId = MachineId(1);
    const C0: ClientId = ClientId(0);
    const C1: ClientId = ClientId(1);

    #[test]
    fn double_advertise_is_idempotent() {
        let mut b = bus(0);
        assert_eq!(b.advertise(M0), Some(1));
        assert_eq!(b.advertise(M0), None);
        assert_eq!(b.withdraw(M0), Some(1));
        assert_eq!(b.withdraw(M0), None);
        assert_eq!(b.advertise(M0), Some(2));
    }

    #[test]
    fn every_listener_hears_each_advertisement_once() {
        let mut b = bus(0);
        let s0 = b.subscribe(C0);
        b.subscribe(C1);
        let epoch = b.advertise(M0).unwrap();
        let notes = b.advertisement_arrived(M0, epoch, SimTime::ZERO);
        assert_eq!(
            notes.iter().map(|d| d.client).collect::<Vec<_>>(),
            vec![C0, C1]
        );
        // The snapshot must not repeat what the live notification delivered.
        assert!(b.snapshot(C0, s0).is_empty());
    }

    #[test]
    fn advertise_without_listeners_only_updates_state() {
        let mut b = bus(0);
        let epoch = b.advertise(M0).unwrap();
        assert!(b.advertisement_arrived(M0, epoch, SimTime::ZERO).is_empty());
        assert_eq!(b.visible_machines(), vec![M0]);
    }

    #[test]
    fn readvertised_machine_has_one_live_entry() {
        let mut b = bus(0);
        let e1 = b.advertise(M0).unwrap();
        b.advertisement_arrived(M0, e1, SimTime::ZERO);
        b.withdraw(M0);
        assert!(!b.withdrawal_arrived(M0, e1));
        let e2 = b.advertise(M0).unwrap();
        b.advertisement_arrived(M0, e2, SimTime::from_units(5));

        let sub = b.subscribe(C0);
        let snap = b.snapshot(C0, sub);
        assert_eq!(snap.len(), 1);
        assert_eq!(
            (snap[0].machine, snap[0].epoch, snap[0].stale),
            (M0, 2, false)
        );
    }

    #[test]
    fn zero_staleness_removes_immediately() {
        let mut b = bus(0);
        let e = b.advertise(M0).unwrap();
        b.advertisement_arrived(M0, e, SimTime::ZERO);
        b.withdraw(M0);
        assert!(!b.withdrawal_arrived(M0, e));
        let sub = b.subscribe(C0);
        assert!(b.snapshot(C0, sub).is_empty());
    }

    #[test]
    fn stale_entries_linger_until_expiry() {
        let mut b = bus(5);
        let e = b.advertise(M0).unwrap();
        b.advertisement_arrived(M0, e, SimTime::ZERO);
        b.withdraw(M0);
        assert!(b.withdrawal_arrived(M0, e));
        let sub = b.subscribe(C0);
        let snap = b.snapshot(C0, sub);
        assert_eq!(snap.len(), 1);
        assert!(snap[0].stale);
        b.expire(M0, e);
        let sub = b.subscribe(C1);
        assert!(b.snapshot(C1, sub).is_empty());
    }

    #[test]
    fn expiry_of_old_epoch_keeps_new_advertisement() {
        let mut b = bus(5);
        let e1 = b.advertise(M0).unwrap();
        b.advertisement_arrived(M0, e1, SimTime::ZERO);
        b.withdraw(M0);
        b.withdrawal_arrived(M0, e1);
        let e2 = b.advertise(M0).unwrap();
        b.advertisement_arrived(M0, e2, SimTime::from_units(2));
        b.expire(M0, e1);
        assert_eq!(b.visible_machines(), vec![M0]);
    }

    #[test]
    fn snapshot_order_follows_advertisement_time_then_id() {
        let mut b = bus(0);
        let e1 = b.advertise(M1).unwrap();
        b.advertisement_arrived(M1, e1, SimTime::ZERO);
        let e0 = b.advertise(M0).unwrap();
        b.advertisement_arrived(M0, e0, SimTime::from_units(3));
        let sub = b.subscribe(C0);
        let order: Vec<_> = b.snapshot(C0, sub).iter().map(|d| d.machine).collect();
        assert_eq!(order, vec![M1, M0]);
    }

    #[test]
    fn resubscribe_delivers_a_fresh_snapshot() {
        let mut b = bus(0);
        let e = b.advertise(M0).unwrap();
        b.advertisement_arrived(M0, e, SimTime::ZERO);
        let first = b.subscribe(C0);
        assert_eq!(b.snapshot(C0, first).len(), 1);
        b.unsubscribe(C0);
        let second = b.subscribe(C0);
        // The superseded subscription's snapshot is void.
        assert!(b.snapshot(C0, first).is_empty());
        assert_eq!(b.snapshot(C0, second).len(), 1);
    }

    #[test]
    fn unsubscribed_clients_hear_nothing() {
        let mut b = bus(0);
        b.subscribe(C0);
        b.unsubscribe(C0);
        let e = b.advertise(M0).unwrap();
        assert!(b.advertisement_arrived(M0, e, SimTime::ZERO).is_empty());
    }
}
