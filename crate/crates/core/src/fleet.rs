//! Device inventory and per-device lifecycle.
//!
//! Every device moves through `Free -> Programming -> Ready <-> Running`;
//! any state may drop to `Failed`, and only an explicit reset brings a
//! failed device back to `Free`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::mpsc;
use std::thread;

use crate::manifest::FleetSpec;
use crate::units::Seconds;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviceId {
    pub node: u32,
    pub slot: u32,
}

impl DeviceId {
    pub const fn new(node: u32, slot: u32) -> Self {
        DeviceId { node, slot }
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}d{}", self.node, self.slot)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid device id {0:?} (expected n<node>d<slot>)")]
pub struct ParseDeviceIdError(String);

impl FromStr for DeviceId {
    type Err = ParseDeviceIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseDeviceIdError(s.to_string());
        let rest = s.strip_prefix('n').ok_or_else(bad)?;
        let (node, slot) = rest.split_once('d').ok_or_else(bad)?;
        Ok(DeviceId {
            node: node.parse().map_err(|_| bad())?,
            slot: slot.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeviceState {
    Free,
    Programming { bitstream: String, until: Seconds },
    Ready { bitstream: String },
    Running { job: String },
    Failed { reason: String },
}

impl DeviceState {
    pub fn name(&self) -> &'static str {
        match self {
            DeviceState::Free => "free",
            DeviceState::Programming { .. } => "programming",
            DeviceState::Ready { .. } => "ready",
            DeviceState::Running { .. } => "running",
            DeviceState::Failed { .. } => "failed",
        }
    }
}

impl fmt::Display for DeviceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceState::Free => f.write_str("free"),
            DeviceState::Programming { bitstream, until } => {
                write!(f, "programming({bitstream}, until={until})")
            }
            DeviceState::Ready { bitstream } => write!(f, "ready({bitstream})"),
            DeviceState::Running { job } => write!(f, "running({job})"),
            DeviceState::Failed { reason } => write!(f, "failed({reason})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeviceEvent {
    StartProgram { bitstream: String, latency: Seconds },
    ProgramDone,
    StartJob { job: String },
    JobDone,
    Fail { reason: String },
    Reset,
}

impl DeviceEvent {
    pub fn name(&self) -> &'static str {
        match self {
            DeviceEvent::StartProgram { .. } => "start-program",
            DeviceEvent::ProgramDone => "program-done",
            DeviceEvent::StartJob { .. } => "start-job",
            DeviceEvent::JobDone => "job-done",
            DeviceEvent::Fail { .. } => "fail",
            DeviceEvent::Reset => "reset",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FleetError {
    #[error("fleet must have at least one node and one device per node")]
    ZeroSize,
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("illegal transition on {device}: {event} while {state}")]
    IllegalTransition {
        device: DeviceId,
        state: String,
        event: &'static str,
    },
    #[error("{device} is still programming until {until} (now {now})")]
    ProgrammingInProgress {
        device: DeviceId,
        until: Seconds,
        now: Seconds,
    },
    #[error("requested {requested} devices but only {available} are available")]
    InsufficientCapacity { requested: usize, available: usize },
    #[error("fleet owner has shut down")]
    OwnerGone,
}

/// Transition table. `loaded` is the bitstream left on the device, which a
/// finished job returns to.
fn next_state(
    device: DeviceId,
    state: &DeviceState,
    event: &DeviceEvent,
    loaded: Option<&str>,
    now: Seconds,
) -> Result<DeviceState, FleetError> {
    use DeviceEvent as E;
    use DeviceState as S;
    match (state, event) {
        (_, E::Fail { reason }) => Ok(S::Failed {
            reason: reason.clone(),
        }),
        (S::Free, E::StartProgram { bitstream, latency }) => Ok(S::Programming {
            bitstream: bitstream.clone(),
            until: now + *latency,
        }),
        (S::Programming { bitstream, until }, E::ProgramDone) => {
            if now < *until {
                Err(FleetError::ProgrammingInProgress {
                    device,
                    until: *until,
                    now,
                })
            } else {
                Ok(S::Ready {
                    bitstream: bitstream.clone(),
                })
            }
        }
        (S::Ready { .. }, E::StartJob { job }) => Ok(S::Running { job: job.clone() }),
        (S::Running { .. }, E::JobDone) if loaded.is_some() => Ok(S::Ready {
            bitstream: loaded.unwrap_or_default().to_string(),
        }),
        (S::Failed { .. }, E::Reset) => Ok(S::Free),
        (state, event) => Err(FleetError::IllegalTransition {
            device,
            state: state.to_string(),
            event: event.name(),
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fleet {
    spec: FleetSpec,
    states: Vec<DeviceState>,
    // bitstream loaded on each device; kept across Running
    loaded: Vec<Option<String>>,
    clock: Seconds,
}

impl Fleet {
    /// Creates a fleet with every device `Free`, ordered by (node, slot).
    pub fn new(spec: FleetSpec) -> Result<Self, FleetError> {
        if spec.nodes == 0 || spec.devices_per_node == 0 {
            return Err(FleetError::ZeroSize);
        }
        let n = spec.total_devices() as usize;
        Ok(Fleet {
            spec,
            states: vec![DeviceState::Free; n],
            loaded: vec![None; n],
            clock: Seconds::ZERO,
        })
    }

    pub fn spec(&self) -> &FleetSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn clock(&self) -> Seconds {
        self.clock
    }

    pub fn set_clock(&mut self, now: Seconds) {
        self.clock = now;
    }

    pub fn devices(&self) -> impl Iterator<Item = DeviceId> + '_ {
        let per_node = self.spec.devices_per_node;
        (0..self.states.len() as u32).map(move |i| DeviceId::new(i / per_node, i % per_node))
    }

    fn index(&self, device: DeviceId) -> Result<usize, FleetError> {
        if device.node < self.spec.nodes && device.slot < self.spec.devices_per_node {
            Ok((device.node * self.spec.devices_per_node + device.slot) as usize)
        } else {
            Err(FleetError::UnknownDevice(device))
        }
    }

    pub fn state(&self, device: DeviceId) -> Result<&DeviceState, FleetError> {
        Ok(&self.states[self.index(device)?])
    }

    /// Position of `device` in the fleet's (node, slot) ordering.
    pub fn ordinal(&self, device: DeviceId) -> Result<usize, FleetError> {
        self.index(device)
    }

    /// Applies `event` to `device`. Illegal events leave the fleet untouched.
    pub fn transition(
        &mut self,
        device: DeviceId,
        event: DeviceEvent,
    ) -> Result<DeviceState, FleetError> {
        let i = self.index(device)?;
        let next = next_state(
            device,
            &self.states[i],
            &event,
            self.loaded[i].as_deref(),
            self.clock,
        )?;
        match &next {
            DeviceState::Programming { bitstream, .. } | DeviceState::Ready { bitstream } => {
                self.loaded[i] = Some(bitstream.clone());
            }
            DeviceState::Free | DeviceState::Failed { .. } => self.loaded[i] = None,
            DeviceState::Running { .. } => {}
        }
        self.states[i] = next.clone();
        Ok(next)
    }

    /// Picks the `n` lowest-ordered devices that are `Free` or already
    /// `Ready(bitstream)`. Ordering is (node, slot), so a node is filled
    /// before spilling to the next one. Does not change any state.
    pub fn acquire(&self, n: usize, bitstream: &str) -> Result<Vec<DeviceId>, FleetError> {
        let candidates: Vec<DeviceId> = self
            .devices()
            .zip(&self.states)
            .filter(|(_, state)| match state {
                DeviceState::Free => true,
                DeviceState::Ready { bitstream: b } => b == bitstream,
                _ => false,
            })
            .map(|(id, _)| id)
            .collect();
        if n == 0 || candidates.len() < n {
            return Err(FleetError::InsufficientCapacity {
                requested: n,
                available: candidates.len(),
            });
        }
        Ok(candidates[..n].to_vec())
    }

    /// Device id `n{node}d{slot}` to state string, in fleet order.
    pub fn snapshot(&self) -> BTreeMap<DeviceId, String> {
        self.devices()
            .zip(&self.states)
            .map(|(id, state)| (id, state.to_string()))
            .collect()
    }

    /// YAML map of device id to state string.
    pub fn snapshot_yaml(&self) -> String {
        let mut out = String::new();
        for (id, state) in self.snapshot() {
            out.push_str(&format!("{id}: {}\n", crate::yaml::scalar(&state)));
        }
        out
    }
}

enum Command {
    Transition {
        device: DeviceId,
        event: DeviceEvent,
        now: Option<Seconds>,
        reply: mpsc::Sender<Result<DeviceState, FleetError>>,
    },
    Snapshot {
        reply: mpsc::Sender<Fleet>,
    },
}

/// Owns a fleet on a dedicated thread. Callers submit events through a
/// queue and observe snapshots; no caller touches the fleet directly.
pub struct FleetOwner {
    tx: mpsc::Sender<Command>,
    worker: Option<thread::JoinHandle<Fleet>>,
}

/// Cloneable handle for submitting events to a [`FleetOwner`].
#[derive(Clone)]
pub struct FleetHandle {
    tx: mpsc::Sender<Command>,
}

impl FleetOwner {
    pub fn spawn(mut fleet: Fleet) -> Self {
        let (tx, rx) = mpsc::channel::<Command>();
        let worker = thread::spawn(move || {
            for cmd in rx {
                match cmd {
                    Command::Transition {
                        device,
                        event,
                        now,
                        reply,
                    } => {
                        if let Some(now) = now {
                            fleet.set_clock(now.max(fleet.clock()));
                        }
                        let _ = reply.send(fleet.transition(device, event));
                    }
                    Command::Snapshot { reply } => {
                        let _ = reply.send(fleet.clone());
                    }
                }
            }
            fleet
        });
        FleetOwner {
            tx,
            worker: Some(worker),
        }
    }

    pub fn handle(&self) -> FleetHandle {
        FleetHandle {
            tx: self.tx.clone(),
        }
    }

    /// Stops the owner once every handle is dropped and returns the fleet.
    pub fn into_inner(mut self) -> Fleet {
        let worker = self.worker.take().expect("worker present until joined");
        drop(self.tx);
        worker.join().expect("fleet owner thread panicked")
    }
}

impl FleetHandle {
    /// Submits an event, optionally advancing the owner's clock to `now` first.
    pub fn submit(
        &self,
        device: DeviceId,
        event: DeviceEvent,
        now: Option<Seconds>,
    ) -> Result<DeviceState, FleetError> {
        let (reply, rx) = mpsc::channel();
        self.tx
            .send(Command::Transition {
                device,
                event,
                now,
                reply,
            })
            .map_err(|_| FleetError::OwnerGone)?;
        rx.recv().map_err(|_| FleetError::OwnerGone)?
    }

    pub fn snapshot(&self) -> Result<Fleet, FleetError> {
        let (reply, rx) = mpsc::channel();
        self.tx
            .send(Command::Snapshot { reply })
            .map_err(|_| FleetError::OwnerGone)?;
        rx.recv().map_err(|_| FleetError::OwnerGone)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fleet(nodes: u32, per_node: u32) -> Fleet {
        Fleet::new(FleetSpec::new(nodes, per_node)).unwrap()
    }

    fn program(f: &mut Fleet, d: DeviceId, b: &str) {
        f.transition(
            d,
            DeviceEvent::StartProgram {
                bitstream: b.into(),
                latency: Seconds::ZERO,
            },
        )
        .unwrap();
        f.transition(d, DeviceEvent::ProgramDone).unwrap();
    }

    #[test]
    fn init_sizes() {
        let f = fleet(12, 8);
        assert_eq!(f.len(), 96);
        assert!(f.snapshot().values().all(|s| s == "free"));
        assert_eq!(fleet(1, 8).len(), 8);
        assert_eq!(fleet(1, 1).len(), 1);
        assert_eq!(Fleet::new(FleetSpec::new(0, 8)), Err(FleetError::ZeroSize));
        assert_eq!(Fleet::new(FleetSpec::new(3, 0)), Err(FleetError::ZeroSize));
    }

    #[test]
    fn device_order_is_node_then_slot() {
        let f = fleet(2, 3);
        let ids: Vec<String> = f.devices().map(|d| d.to_string()).collect();
        assert_eq!(ids, ["n0d0", "n0d1", "n0d2", "n1d0", "n1d1", "n1d2"]);
    }

    #[test]
    fn device_id_parse() {
        assert_eq!("n11d7".parse::<DeviceId>(), Ok(DeviceId::new(11, 7)));
        assert!("d7".parse::<DeviceId>().is_err());
        assert!("n1dx".parse::<DeviceId>().is_err());
    }

    #[test]
    fn program_sets_deadline() {
        let mut f = fleet(1, 8);
        f.set_clock(Seconds::whole(100));
        let d = DeviceId::new(0, 0);
        let s = f
            .transition(
                d,
                DeviceEvent::StartProgram {
                    bitstream: "b".into(),
                    latency: Seconds::whole(30),
                },
            )
            .unwrap();
        assert_eq!(
            s,
            DeviceState::Programming {
                bitstream: "b".into(),
                until: Seconds::whole(130)
            }
        );
        assert!(matches!(
            f.transition(d, DeviceEvent::ProgramDone),
            Err(FleetError::ProgrammingInProgress { .. })
        ));
        f.set_clock(Seconds::whole(130));
        assert_eq!(
            f.transition(d, DeviceEvent::ProgramDone).unwrap(),
            DeviceState::Ready {
                bitstream: "b".into()
            }
        );
    }

    #[test]
    fn job_cycle_keeps_bitstream() {
        let mut f = fleet(1, 1);
        let d = DeviceId::new(0, 0);
        program(&mut f, d, "b");
        assert_eq!(
            f.transition(d, DeviceEvent::StartJob { job: "j".into() })
                .unwrap(),
            DeviceState::Running { job: "j".into() }
        );
        assert_eq!(
            f.transition(d, DeviceEvent::JobDone).unwrap(),
            DeviceState::Ready {
                bitstream: "b".into()
            }
        );
    }

    #[test]
    fn running_cannot_be_reprogrammed() {
        let mut f = fleet(1, 1);
        let d = DeviceId::new(0, 0);
        program(&mut f, d, "b");
        f.transition(d, DeviceEvent::StartJob { job: "j".into() })
            .unwrap();
        let before = f.clone();
        let err = f
            .transition(
                d,
                DeviceEvent::StartProgram {
                    bitstream: "b2".into(),
                    latency: Seconds::ZERO,
                },
            )
            .unwrap_err();
        assert_eq!(
            err,
            FleetError::IllegalTransition {
                device: d,
                state: "running(j)".into(),
                event: "start-program"
            }
        );
        assert_eq!(f, before);
    }

    #[test]
    fn failed_needs_reset() {
        let mut f = fleet(1, 1);
        let d = DeviceId::new(0, 0);
        f.transition(
            d,
            DeviceEvent::Fail {
                reason: "wedged".into(),
            },
        )
        .unwrap();
        assert!(f.acquire(1, "b").is_err());
        assert!(f
            .transition(
                d,
                DeviceEvent::StartProgram {
                    bitstream: "b".into(),
                    latency: Seconds::ZERO
                }
            )
            .is_err());
        assert_eq!(
            f.transition(d, DeviceEvent::Reset).unwrap(),
            DeviceState::Free
        );
        assert_eq!(f.acquire(1, "b").unwrap(), vec![d]);
    }

    #[test]
    fn unknown_device() {
        let mut f = fleet(1, 8);
        assert_eq!(
            f.transition(DeviceId::new(0, 8), DeviceEvent::Reset),
            Err(FleetError::UnknownDevice(DeviceId::new(0, 8)))
        );
        assert_eq!(
            f.state(DeviceId::new(1, 0)),
            Err(FleetError::UnknownDevice(DeviceId::new(1, 0)))
        );
    }

    #[test]
    fn acquire_fresh_node() {
        let f = fleet(1, 8);
        let got = f.acquire(8, "b").unwrap();
        assert_eq!(got, (0..8).map(|s| DeviceId::new(0, s)).collect::<Vec<_>>());
    }

    #[test]
    fn acquire_spills_to_next_node() {
        let mut f = fleet(12, 8);
        for slot in 0..4 {
            let d = DeviceId::new(0, slot);
            program(&mut f, d, "b");
            f.transition(d, DeviceEvent::StartJob { job: "x".into() })
                .unwrap();
        }
        let got = f.acquire(8, "b").unwrap();
        let want: Vec<DeviceId> = (4..8)
            .map(|s| DeviceId::new(0, s))
            .chain((0..4).map(|s| DeviceId::new(1, s)))
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn acquire_skips_other_bitstreams() {
        let mut f = fleet(1, 3);
        program(&mut f, DeviceId::new(0, 0), "other");
        program(&mut f, DeviceId::new(0, 1), "b");
        assert_eq!(
            f.acquire(2, "b").unwrap(),
            vec![DeviceId::new(0, 1), DeviceId::new(0, 2)]
        );
    }

    #[test]
    fn acquire_over_capacity() {
        let f = fleet(1, 8);
        assert_eq!(
            f.acquire(9, "b"),
            Err(FleetError::InsufficientCapacity {
                requested: 9,
                available: 8
            })
        );
    }

    #[test]
    fn snapshot_yaml_format() {
        let mut f = fleet(1, 2);
        program(&mut f, DeviceId::new(0, 1), "bzl");
        assert_eq!(f.snapshot_yaml(), "n0d0: free\nn0d1: \"ready(bzl)\"\n");
    }

    #[test]
    fn owner_serializes_events() {
        let owner = FleetOwner::spawn(fleet(1, 4));
        let handles: Vec<_> = (0..4u32)
            .map(|slot| {
                let h = owner.handle();
                thread::spawn(move || {
                    let d = DeviceId::new(0, slot);
                    h.submit(
                        d,
                        DeviceEvent::StartProgram {
                            bitstream: "b".into(),
                            latency: Seconds::whole(5),
                        },
                        Some(Seconds::ZERO),
                    )
                    .unwrap();
                    h.submit(d, DeviceEvent::ProgramDone, Some(Seconds::whole(5)))
                        .unwrap();
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let snap = owner.handle().snapshot().unwrap();
        assert!(snap.snapshot().values().all(|s| s == "ready(b)"));
        let f = owner.into_inner();
        assert_eq!(f.len(), 4);
    }

    fn arb_event() -> impl Strategy<Value = DeviceEvent> {
        prop_oneof![
            (0u64..50).prop_map(|l| DeviceEvent::StartProgram {
                bitstream: "b".into(),
                latency: Seconds::from_deci(l)
            }),
            Just(DeviceEvent::ProgramDone),
            Just(DeviceEvent::StartJob { job: "j".into() }),
            Just(DeviceEvent::JobDone),
            Just(DeviceEvent::Fail { reason: "x".into() }),
            Just(DeviceEvent::Reset),
        ]
    }

    fn legal(from: &DeviceState, to: &DeviceState) -> bool {
        use DeviceState as S;
        matches!(
            (from, to),
            (S::Free, S::Programming { .. })
                | (S::Programming { .. }, S::Ready { .. })
                | (S::Ready { .. }, S::Running { .. })
                | (S::Running { .. }, S::Ready { .. })
                | (_, S::Failed { .. })
                | (S::Failed { .. }, S::Free)
        )
    }

    proptest! {
        #[test]
        fn random_event_sequences_respect_table(
            steps in proptest::collection::vec((0u32..4, arb_event(), 0u64..20), 1..80)
        ) {
            let mut f = fleet(2, 2);
            let mut now = Seconds::ZERO;
            for (dev, event, tick) in steps {
                now += Seconds::from_deci(tick);
                f.set_clock(now);
                let d = DeviceId::new(dev / 2, dev % 2);
                let before = f.clone();
                let prev = f.state(d).unwrap().clone();
                match f.transition(d, event) {
                    Ok(next) => {
                        prop_assert!(legal(&prev, &next), "{prev} -> {next}");
                        prop_assert_eq!(f.state(d).unwrap(), &next);
                    }
                    Err(_) => prop_assert_eq!(&f, &before),
                }
                prop_assert_eq!(f.len(), 4);
            }
        }

        #[test]
        fn acquire_is_deterministic(busy in proptest::collection::vec(any::<bool>(), 16), n in 1usize..17) {
            let mut f = fleet(2, 8);
            for (i, b) in busy.iter().enumerate() {
                if *b {
                    let d = DeviceId::new(i as u32 / 8, i as u32 % 8);
                    f.transition(d, DeviceEvent::Fail { reason: "x".into() }).unwrap();
                }
            }
            let a = f.acquire(n, "b");
            let b = f.acquire(n, "b");
            prop_assert_eq!(&a, &b);
            if let Ok(list) = a {
                prop_assert_eq!(list.len(), n);
                prop_assert!(list.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
