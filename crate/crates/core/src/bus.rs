//! Brokered I²C/SPI buses.
//!
//! Every device transaction goes through a [`BusManager`] job: the caller
//! submits, the manager runs jobs one at a time per bus in FIFO order, and
//! the caller polls until its job is done. Transfer time is
//! `(1 addr + 1 reg + out + read_len) × bits_per_byte / clock_hz`.

use std::any::Any;
use std::cell::RefCell;
use std::rc::Rc;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::time::Duration;

use thiserror::Error;

use crate::runtime::Runtime;
use crate::scenario::World;
use crate::SimTime;

pub const DEFAULT_I2C_HZ: u64 = 100_000;
pub const DEFAULT_SPI_HZ: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    /// 9 bit-times per byte (8 data + ACK). Unanswered addresses NACK.
    I2c,
    /// 8 bit-times per byte. `addr` is a chip-select id; an unselected id
    /// reads back 0xFF (floating MISO) instead of failing.
    Spi,
}

impl BusKind {
    pub fn bits_per_byte(self) -> u64 {
        match self {
            BusKind::I2c => 9,
            BusKind::Spi => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JobKind {
    Write,
    Read,
    WriteThenRead,
}

impl JobKind {
    pub fn reads(self) -> bool {
        !matches!(self, JobKind::Write)
    }
}

impl fmt::Display for JobKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobKind::Write => "write",
            JobKind::Read => "read",
            JobKind::WriteThenRead => "write_then_read",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusFault {
    Nack,
    Timeout,
}

impl fmt::Display for BusFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BusFault::Nack => "nack",
            BusFault::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobStatus {
    Pending,
    Active,
    Done,
    Error(BusFault),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BusError {
    #[error("no bus {0}")]
    NoSuchBus(u8),
    #[error("address 0x{0:02X} outside 0x08-0x77")]
    BadAddress(u8),
    #[error("read jobs need read_len >= 1")]
    ZeroReadLen,
    #[error("no job {0}")]
    NoSuchJob(u64),
    #[error("bus {bus} address 0x{addr:02X} already in use")]
    AddrInUse { bus: u8, addr: u8 },
    #[error("bus {bus} address 0x{addr:02X}: {fault}")]
    Fault { bus: u8, addr: u8, fault: BusFault },
}

/// One wire transaction as seen by a device.
#[derive(Debug, Clone, Copy)]
pub struct Transaction<'a> {
    pub kind: JobKind,
    pub reg: u8,
    pub out: &'a [u8],
    pub read_len: usize,
}

pub trait Device: Any {
    fn name(&self) -> &'static str;

    /// Handle one transaction completing at `t`. Writes return no bytes;
    /// reads must return exactly `tx.read_len` bytes.
    fn transact(&mut self, tx: Transaction<'_>, world: &mut World, t: SimTime)
        -> Result<Vec<u8>, BusFault>;

    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusJob {
    pub id: u64,
    pub bus: u8,
    pub addr: u8,
    pub kind: JobKind,
    pub reg: u8,
    pub out: Vec<u8>,
    pub read_len: usize,
    pub status: JobStatus,
    pub result: Vec<u8>,
    pub submitted: SimTime,
    pub started: Option<SimTime>,
    pub finished: Option<SimTime>,
}

impl BusJob {
    /// Bytes on the wire: address, register, payload, read-back.
    pub fn wire_bytes(&self) -> u64 {
        2 + self.out.len() as u64 + self.read_len as u64
    }
}

/// What a poll observes.
#[derive(Debug, Clone, PartialEq)]
pub enum Poll {
    Pending,
    Active,
    Done(Vec<u8>),
    Failed(BusFault),
}

/// A finished job, kept for audits and the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub id: u64,
    pub bus: u8,
    pub addr: u8,
    pub kind: JobKind,
    pub bytes: u64,
    pub start: SimTime,
    pub end: SimTime,
    pub fault: Option<BusFault>,
}

struct Bus {
    kind: BusKind,
    clock_hz: u64,
    devices: BTreeMap<u8, Box<dyn Device>>,
    pending: VecDeque<u64>,
    active: Option<u64>,
    free_at: SimTime,
}

impl Bus {
    fn transfer_time(&self, bytes: u64) -> Duration {
        let ns = (bytes as u128 * self.kind.bits_per_byte() as u128 * 1_000_000_000
            + self.clock_hz as u128 / 2)
            / self.clock_hz as u128;
        Duration::from_nanos(ns as u64)
    }
}

#[derive(Default)]
pub struct BusManager {
    buses: Vec<Bus>,
    jobs: BTreeMap<u64, BusJob>,
    next_job: u64,
    trace: Vec<JobRecord>,
}

impl BusManager {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a bus and return its id (0, 1, ...). `clock_hz` must be positive.
    pub fn add_bus(&mut self, kind: BusKind, clock_hz: u64) -> u8 {
        assert!(clock_hz > 0, "bus clock must be positive");
        self.buses.push(Bus {
            kind,
            clock_hz,
            devices: BTreeMap::new(),
            pending: VecDeque::new(),
            active: None,
            free_at: SimTime::ZERO,
        });
        (self.buses.len() - 1) as u8
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    fn bus(&self, bus: u8) -> Result<&Bus, BusError> {
        self.buses.get(bus as usize).ok_or(BusError::NoSuchBus(bus))
    }

    fn bus_mut(&mut self, bus: u8) -> Result<&mut Bus, BusError> {
        self.buses.get_mut(bus as usize).ok_or(BusError::NoSuchBus(bus))
    }

    pub fn transfer_time(&self, bus: u8, bytes: u64) -> Result<Duration, BusError> {
        Ok(self.bus(bus)?.transfer_time(bytes))
    }

    pub fn attach(&mut self, bus: u8, addr: u8, device: Box<dyn Device>) -> Result<(), BusError> {
        let b = self.bus_mut(bus)?;
        check_addr(b.kind, addr)?;
        if b.devices.contains_key(&addr) {
            return Err(BusError::AddrInUse { bus, addr });
        }
        b.devices.insert(addr, device);
        Ok(())
    }

    pub fn detach(&mut self, bus: u8, addr: u8) -> Option<Box<dyn Device>> {
        self.buses.get_mut(bus as usize)?.devices.remove(&addr)
    }

    pub fn device<T: Device>(&self, bus: u8, addr: u8) -> Option<&T> {
        self.buses
            .get(bus as usize)?
            .devices
            .get(&addr)?
            .as_any()
            .downcast_ref()
    }

    pub fn device_mut<T: Device>(&mut self, bus: u8, addr: u8) -> Option<&mut T> {
        self.buses
            .get_mut(bus as usize)?
            .devices
            .get_mut(&addr)?
            .as_any_mut()
            .downcast_mut()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn submit(
        &mut self,
        bus: u8,
        addr: u8,
        kind: JobKind,
        reg: u8,
        out: &[u8],
        read_len: usize,
        now: SimTime,
    ) -> Result<u64, BusError> {
        let b = self.bus_mut(bus)?;
        check_addr(b.kind, addr)?;
        let read_len = if kind.reads() {
            if read_len == 0 {
                return Err(BusError::ZeroReadLen);
            }
            read_len
        } else {
            0
        };
        let id = self.next_job;
        self.next_job += 1;
        self.buses[bus as usize].pending.push_back(id);
        self.jobs.insert(
            id,
            BusJob {
                id,
                bus,
                addr,
                kind,
                reg,
                out: out.to_vec(),
                read_len,
                status: JobStatus::Pending,
                result: Vec::new(),
                submitted: now,
                started: None,
                finished: None,
            },
        );
        Ok(id)
    }

    pub fn job(&self, id: u64) -> Option<&BusJob> {
        self.jobs.get(&id)
    }

    /// Retrieve a job's state. Finished jobs are handed out once and then
    /// forgotten.
    pub fn poll(&mut self, id: u64) -> Result<Poll, BusError> {
        let job = self.jobs.get(&id).ok_or(BusError::NoSuchJob(id))?;
        match job.status {
            JobStatus::Pending => Ok(Poll::Pending),
            JobStatus::Active => Ok(Poll::Active),
            JobStatus::Done => {
                let job = self.jobs.remove(&id).expect("present");
                Ok(Poll::Done(job.result))
            }
            JobStatus::Error(f) => {
                self.jobs.remove(&id);
                Ok(Poll::Failed(f))
            }
        }
    }

    /// Completion time of a job, assuming nothing is cancelled. Later
    /// submissions cannot change it because each bus is strictly FIFO.
    pub fn eta(&self, id: u64) -> Option<SimTime> {
        let job = self.jobs.get(&id)?;
        if let Some(end) = job.finished {
            return Some(end);
        }
        let b = &self.buses[job.bus as usize];
        let mut t = b.free_at;
        if let Some(a) = b.active {
            let active = &self.jobs[&a];
            t = active.finished.unwrap_or(t);
            if a == id {
                return Some(t);
            }
        }
        for pid in &b.pending {
            let p = &self.jobs[pid];
            let start = t.max(p.submitted);
            t = start + b.transfer_time(p.wire_bytes());
            if *pid == id {
                return Some(t);
            }
        }
        None
    }

    /// Earliest pending or active job end across all buses.
    pub fn next_completion(&self) -> Option<SimTime> {
        (0..self.buses.len())
            .filter_map(|b| {
                let bus = &self.buses[b];
                bus.active.or_else(|| bus.pending.front().copied())
            })
            .filter_map(|id| self.eta(id))
            .min()
    }

    /// Run every bus forward to `now`: finish active jobs whose transfer has
    /// elapsed and start the next pending job when its bus is free. Returns
    /// the ids of jobs that finished.
    pub fn tick(&mut self, now: SimTime, world: &mut World) -> Vec<u64> {
        let mut finished = Vec::new();
        for bi in 0..self.buses.len() {
            loop {
                let bus = &mut self.buses[bi];
                if let Some(a) = bus.active {
                    let job = self.jobs.get_mut(&a).expect("active job");
                    let end = job.finished.expect("active job has end");
                    if end > now {
                        break;
                    }
                    let tx = Transaction {
                        kind: job.kind,
                        reg: job.reg,
                        out: &job.out,
                        read_len: job.read_len,
                    };
                    let outcome = match bus.devices.get_mut(&job.addr) {
                        Some(dev) => dev.transact(tx, world, end),
                        None if bus.kind == BusKind::Spi => Ok(vec![0xFF; job.read_len]),
                        None => Err(BusFault::Nack),
                    };
                    let fault = match outcome {
                        Ok(mut bytes) => {
                            bytes.resize(job.read_len, 0);
                            job.result = bytes;
                            job.status = JobStatus::Done;
                            None
                        }
                        Err(f) => {
                            job.status = JobStatus::Error(f);
                            Some(f)
                        }
                    };
                    self.trace.push(JobRecord {
                        id: a,
                        bus: bi as u8,
                        addr: job.addr,
                        kind: job.kind,
                        bytes: job.wire_bytes(),
                        start: job.started.expect("started"),
                        end,
                        fault,
                    });
                    bus.active = None;
                    bus.free_at = end;
                    finished.push(a);
                    continue;
                }
                let Some(&head) = bus.pending.front() else {
                    break;
                };
                let job = self.jobs.get_mut(&head).expect("pending job");
                let start = bus.free_at.max(job.submitted);
                if start > now {
                    break;
                }
                bus.pending.pop_front();
                job.status = JobStatus::Active;
                job.started = Some(start);
                job.finished = Some(start + bus.transfer_time(job.wire_bytes()));
                bus.active = Some(head);
            }
        }
        finished
    }

    /// Every finished job so far, in completion order per bus.
    pub fn trace(&self) -> &[JobRecord] {
        &self.trace
    }

    pub fn completed_count(&self) -> usize {
        self.trace.len()
    }
}

fn check_addr(kind: BusKind, addr: u8) -> Result<(), BusError> {
    let ok = match kind {
        BusKind::I2c => (0x08..=0x77).contains(&addr),
        BusKind::Spi => addr <= 0x7F,
    };
    if ok {
        Ok(())
    } else {
        Err(BusError::BadAddress(addr))
    }
}

/// Application state that owns buses and the world they sample.
pub trait BusHost {
    fn bus_parts(&mut self) -> (&mut BusManager, &mut World);
}

/// One job of a [`submit_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct JobRequest {
    pub addr: u8,
    pub kind: JobKind,
    pub reg: u8,
    pub out: Vec<u8>,
    pub read_len: usize,
}

impl JobRequest {
    pub fn write(addr: u8, reg: u8, out: &[u8]) -> Self {
        Self {
            addr,
            kind: JobKind::Write,
            reg,
            out: out.to_vec(),
            read_len: 0,
        }
    }

    pub fn read(addr: u8, reg: u8, read_len: usize) -> Self {
        Self {
            addr,
            kind: JobKind::WriteThenRead,
            reg,
            out: Vec::new(),
            read_len,
        }
    }
}

type BatchResults = Vec<Option<Result<Vec<u8>, BusError>>>;
type BatchDone<S> = Box<dyn FnOnce(&mut Runtime<S>, Vec<Result<Vec<u8>, BusError>>)>;

/// Queue several jobs back to back on one bus without blocking the caller.
/// Each job is collected (and logged) at its completion time; `on_done`
/// runs once the last one finishes, with results in request order.
pub fn submit_batch<S: BusHost + 'static>(
    rt: &mut Runtime<S>,
    bus: u8,
    jobs: Vec<JobRequest>,
    on_done: impl FnOnce(&mut Runtime<S>, Vec<Result<Vec<u8>, BusError>>) + 'static,
) {
    let now = rt.now();
    let n = jobs.len();
    let results: Rc<RefCell<BatchResults>> = Rc::new(RefCell::new(vec![None; n]));
    let done: Rc<RefCell<Option<BatchDone<S>>>> = Rc::new(RefCell::new(Some(Box::new(on_done))));
    let finish = {
        let results = results.clone();
        move |rt: &mut Runtime<S>| {
            if results.borrow().iter().all(Option::is_some) {
                if let Some(f) = done.borrow_mut().take() {
                    let out = results.borrow_mut().drain(..).map(Option::unwrap).collect();
                    f(rt, out);
                }
            }
        }
    };
    let finish = Rc::new(finish);
    if n == 0 {
        let f = finish.clone();
        rt.schedule_at(now, "", move |rt| f(rt));
        return;
    }
    let (mgr, world) = rt.state.bus_parts();
    mgr.tick(now, world);
    let mut pending = Vec::new();
    for (i, job) in jobs.into_iter().enumerate() {
        match mgr.submit(bus, job.addr, job.kind, job.reg, &job.out, job.read_len, now) {
            Ok(id) => pending.push((i, id, job)),
            Err(e) => results.borrow_mut()[i] = Some(Err(e)),
        }
    }
    let etas: Vec<SimTime> = pending
        .iter()
        .map(|(_, id, _)| mgr.eta(*id).unwrap_or(now))
        .collect();
    if pending.is_empty() {
        let f = finish.clone();
        rt.schedule_at(now, "", move |rt| f(rt));
        return;
    }
    for ((i, id, job), eta) in pending.into_iter().zip(etas) {
        let results = results.clone();
        let f = finish.clone();
        rt.schedule_at(eta, "", move |rt| {
            let r = collect(rt, bus, id, job.addr, job.kind);
            results.borrow_mut()[i] = Some(r);
            f(rt);
        });
    }
}

/// Tick the buses to now and retrieve a finished job, logging it.
fn collect<S: BusHost + 'static>(
    rt: &mut Runtime<S>,
    bus: u8,
    id: u64,
    addr: u8,
    kind: JobKind,
) -> Result<Vec<u8>, BusError> {
    let now = rt.now();
    let (mgr, world) = rt.state.bus_parts();
    mgr.tick(now, world);
    let bytes = mgr.job(id).map(BusJob::wire_bytes).unwrap_or(0);
    let us = mgr.transfer_time(bus, bytes).map(|d| d.as_micros()).unwrap_or(0);
    let target = format!("{bus} 0x{addr:02X}");
    match mgr.poll(id)? {
        Poll::Done(data) => {
            rt.record("BUS", &target, format!("{kind} {bytes} {us}"));
            Ok(data)
        }
        Poll::Failed(fault) => {
            rt.record("BUS", &target, format!("{kind} {bytes} {us} {fault}"));
            Err(BusError::Fault { bus, addr, fault })
        }
        Poll::Pending | Poll::Active => Err(BusError::Fault {
            bus,
            addr,
            fault: BusFault::Timeout,
        }),
    }
}

/// Submit a job and block (in virtual time) until it finishes, the way a
/// service node waits on the bus manager. Logs one `BUS` line.
pub fn transact<S: BusHost + 'static>(
    rt: &mut Runtime<S>,
    bus: u8,
    addr: u8,
    kind: JobKind,
    reg: u8,
    out: &[u8],
    read_len: usize,
) -> Result<Vec<u8>, BusError> {
    let now = rt.now();
    let id = {
        let (mgr, world) = rt.state.bus_parts();
        mgr.tick(now, world);
        mgr.submit(bus, addr, kind, reg, out, read_len, now)?
    };
    let eta = rt.state.bus_parts().0.eta(id).ok_or(BusError::NoSuchJob(id))?;
    if eta > rt.now() {
        rt.run_until(eta);
    }
    collect(rt, bus, id, addr, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl Device for Echo {
        fn name(&self) -> &'static str {
            "echo"
        }
        fn transact(
            &mut self,
            tx: Transaction<'_>,
            _: &mut World,
            _: SimTime,
        ) -> Result<Vec<u8>, BusFault> {
            Ok(vec![tx.reg; tx.read_len])
        }
        fn as_any(&self) -> &dyn Any {
            self
        }
        fn as_any_mut(&mut self) -> &mut dyn Any {
            self
        }
    }

    fn two_buses() -> BusManager {
        let mut m = BusManager::new();
        m.add_bus(BusKind::I2c, DEFAULT_I2C_HZ);
        m.add_bus(BusKind::I2c, DEFAULT_I2C_HZ);
        m
    }

    #[test]
    fn submit_validates() {
        let mut m = two_buses();
        let a = m.submit(0, 0x5A, JobKind::WriteThenRead, 0, &[], 2, SimTime::ZERO).unwrap();
        let b = m.submit(0, 0x5A, JobKind::WriteThenRead, 0, &[], 2, SimTime::ZERO).unwrap();
        assert!(b > a);
        assert_eq!(m.job(a).unwrap().status, JobStatus::Pending);
        assert_eq!(
            m.submit(9, 0x5A, JobKind::Read, 0, &[], 1, SimTime::ZERO),
            Err(BusError::NoSuchBus(9))
        );
        assert_eq!(
            m.submit(0, 0x78, JobKind::Read, 0, &[], 1, SimTime::ZERO),
            Err(BusError::BadAddress(0x78))
        );
        assert_eq!(
            m.submit(0, 0x5A, JobKind::Read, 0, &[], 0, SimTime::ZERO),
            Err(BusError::ZeroReadLen)
        );
    }

    #[test]
    fn poll_lifecycle_and_single_retrieval() {
        let mut m = two_buses();
        let mut w = World::default();
        m.attach(0, 0x29, Box::new(Echo)).unwrap();
        let id = m.submit(0, 0x29, JobKind::WriteThenRead, 7, &[], 2, SimTime::ZERO).unwrap();
        assert_eq!(m.poll(id), Ok(Poll::Pending));
        m.tick(SimTime::ZERO, &mut w);
        assert_eq!(m.poll(id), Ok(Poll::Active));
        let eta = m.eta(id).unwrap();
        assert_eq!(eta, SimTime::from_nanos(360_000));
        m.tick(eta, &mut w);
        assert_eq!(m.poll(id), Ok(Poll::Done(vec![7, 7])));
        assert_eq!(m.poll(id), Err(BusError::NoSuchJob(id)));
    }

    #[test]
    fn empty_address_nacks_and_detach_too() {
        let mut m = two_buses();
        let mut w = World::default();
        let id = m.submit(0, 0x70, JobKind::Read, 2, &[], 2, SimTime::ZERO).unwrap();
        m.tick(SimTime::from_secs(1), &mut w);
        assert_eq!(m.poll(id), Ok(Poll::Failed(BusFault::Nack)));

        m.attach(0, 0x29, Box::new(Echo)).unwrap();
        assert_eq!(
            m.attach(0, 0x29, Box::new(Echo)),
            Err(BusError::AddrInUse { bus: 0, addr: 0x29 })
        );
        assert!(m.detach(0, 0x29).is_some());
        let id = m.submit(0, 0x29, JobKind::Read, 0, &[], 1, SimTime::from_secs(1)).unwrap();
        m.tick(SimTime::from_secs(2), &mut w);
        assert_eq!(m.poll(id), Ok(Poll::Failed(BusFault::Nack)));
    }

    #[test]
    fn fifo_on_one_bus_overlap_across_buses() {
        let mut m = two_buses();
        let mut w = World::default();
        m.attach(0, 0x10, Box::new(Echo)).unwrap();
        m.attach(1, 0x10, Box::new(Echo)).unwrap();
        let ids: Vec<u64> = (0..3)
            .map(|_| m.submit(0, 0x10, JobKind::Read, 0, &[], 2, SimTime::ZERO).unwrap())
            .collect();
        let other = m.submit(1, 0x10, JobKind::Read, 0, &[], 2, SimTime::ZERO).unwrap();
        m.tick(SimTime::from_secs(1), &mut w);
        let bus0: Vec<u64> = m.trace().iter().filter(|r| r.bus == 0).map(|r| r.id).collect();
        assert_eq!(bus0, ids);
        let first = &m.trace()[0];
        let on1 = m.trace().iter().find(|r| r.id == other).unwrap();
        assert_eq!(first.start, on1.start);
        let ends: Vec<SimTime> = m.trace().iter().filter(|r| r.bus == 0).map(|r| r.end).collect();
        assert_eq!(ends[2], SimTime::from_nanos(3 * 360_000));
    }

    #[test]
    fn spi_has_no_nack() {
        let mut m = BusManager::new();
        let spi = m.add_bus(BusKind::Spi, DEFAULT_SPI_HZ);
        let mut w = World::default();
        let id = m.submit(spi, 3, JobKind::Read, 0, &[], 2, SimTime::ZERO).unwrap();
        // (2 + 2) bytes × 8 bits at 1 MHz
        assert_eq!(m.eta(id), Some(SimTime::from_nanos(32_000)));
        m.tick(SimTime::from_secs(1), &mut w);
        assert_eq!(m.poll(id), Ok(Poll::Done(vec![0xFF, 0xFF])));
    }
}
