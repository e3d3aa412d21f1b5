//! Single-threaded node runtime: topics, services, timers and a
//! discrete-event scheduler on a virtual clock.
//!
//! Every callback receives `&mut Runtime<S>`, so it can publish, call
//! services, schedule work, or block in virtual time with [`Runtime::sleep`].
//! Blocking is implemented by dispatching the intervening events from inside
//! the caller, which keeps the whole run on one stack and fully
//! deterministic. A callback that is already on the stack is never re-entered:
//! a timer that comes due while its own callback is blocked is counted as an
//! overrun, and a subscription delivery is retried once its callback returns.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::{SimTime, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("topic name must not be empty")]
    EmptyTopic,
    #[error("queue size must be at least 1")]
    ZeroQueue,
    #[error("publisher handle is stale")]
    StaleHandle,
    #[error("timer period must be positive")]
    ZeroPeriod,
    #[error("service {0} is already advertised")]
    ServiceExists(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("service {0} unavailable")]
    ServiceUnavailable(String),
    #[error("service {service} failed: {message}")]
    HandlerFailed { service: String, message: String },
    #[error("service {0} is busy (re-entrant call)")]
    Busy(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub topic: String,
    pub payload: Value,
    pub stamp: SimTime,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublisherId(u64);

/// Publishing handle returned by [`Runtime::advertise`]. Plain data, so it
/// can be moved to other threads even though the runtime cannot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publisher {
    id: PublisherId,
    topic: String,
}

impl Publisher {
    pub fn topic(&self) -> &str {
        &self.topic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubscriptionId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimerId(usize);

/// Handler result: a response or a failure message.
pub type ServiceResult = Result<Value, String>;

type SubCallback<S> = Box<dyn FnMut(&mut Runtime<S>, &Message)>;
type TimerCallback<S> = Box<dyn FnMut(&mut Runtime<S>)>;
type ServiceHandler<S> = Box<dyn FnMut(&mut Runtime<S>, Value) -> ServiceResult>;
type Action<S> = Box<dyn FnOnce(&mut Runtime<S>)>;

/// One dispatched event, rendered as `time<TAB>kind<TAB>target<TAB>summary`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub time: SimTime,
    pub kind: &'static str,
    pub target: String,
    pub summary: String,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t{}", self.time, self.kind, self.target, self.summary)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ServiceStats {
    pub calls: u64,
    pub failures: u64,
    pub total_latency: Duration,
}

struct SubSlot<S> {
    node: String,
    topic: String,
    queue_size: usize,
    buffer: VecDeque<Message>,
    callback: Option<SubCallback<S>>,
    retry: bool,
}

struct TimerSlot<S> {
    name: String,
    start: SimTime,
    period: Duration,
    fires: u64,
    overruns: u64,
    callback: Option<TimerCallback<S>>,
}

struct ServiceSlot<S> {
    node: String,
    handler: Option<ServiceHandler<S>>,
    stats: ServiceStats,
}

#[derive(Default)]
struct TopicState {
    next_seq: u64,
    publishers: Vec<PublisherId>,
    subscribers: Vec<SubscriptionId>,
    published: u64,
}

enum EventKind<S> {
    Timer(TimerId),
    Deliver(SubscriptionId),
    Action(String, Action<S>),
}

struct Scheduled<S> {
    due: SimTime,
    seq: u64,
    kind: EventKind<S>,
}

impl<S> PartialEq for Scheduled<S> {
    fn eq(&self, other: &Self) -> bool {
        (self.due, self.seq) == (other.due, other.seq)
    }
}
impl<S> Eq for Scheduled<S> {}
impl<S> PartialOrd for Scheduled<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S> Ord for Scheduled<S> {
    // reversed: BinaryHeap is a max-heap and we want the earliest (due, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.due, other.seq).cmp(&(self.due, self.seq))
    }
}

struct Realtime {
    scale: f64,
    wall_origin: Instant,
    sim_origin: SimTime,
}

/// The node graph and its scheduler. `state` is shared world data owned by
/// the application (devices, buses, transcripts, ...).
pub struct Runtime<S> {
    now: SimTime,
    next_event_seq: u64,
    next_publisher: u64,
    queue: BinaryHeap<Scheduled<S>>,
    topics: BTreeMap<String, TopicState>,
    publishers: BTreeMap<PublisherId, String>,
    subs: Vec<Option<SubSlot<S>>>,
    timers: Vec<Option<TimerSlot<S>>>,
    services: BTreeMap<String, ServiceSlot<S>>,
    params: BTreeMap<String, String>,
    log: Vec<LogEntry>,
    dispatched: u64,
    realtime: Option<Realtime>,
    pub state: S,
}

impl<S: 'static> Runtime<S> {
    pub fn new(state: S) -> Self {
        Self {
            now: SimTime::ZERO,
            next_event_seq: 0,
            next_publisher: 0,
            queue: BinaryHeap::new(),
            topics: BTreeMap::new(),
            publishers: BTreeMap::new(),
            subs: Vec::new(),
            timers: Vec::new(),
            services: BTreeMap::new(),
            params: BTreeMap::new(),
            log: Vec::new(),
            dispatched: 0,
            realtime: None,
            state,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Pace dispatch against the wall clock: one virtual second takes
    /// `scale` real seconds. Tests never enable this.
    pub fn set_realtime(&mut self, scale: Option<f64>) {
        self.realtime = scale.map(|scale| Realtime {
            scale,
            wall_origin: Instant::now(),
            sim_origin: self.now,
        });
    }

    // ---- topics ----------------------------------------------------------

    pub fn advertise(
        &mut self,
        node: &str,
        topic: &str,
        queue_size: usize,
    ) -> Result<Publisher, CoreError> {
        if topic.is_empty() {
            return Err(CoreError::EmptyTopic);
        }
        if queue_size == 0 {
            return Err(CoreError::ZeroQueue);
        }
        let id = PublisherId(self.next_publisher);
        self.next_publisher += 1;
        self.topics.entry(topic.to_string()).or_default().publishers.push(id);
        self.publishers.insert(id, topic.to_string());
        log::debug!("{node} advertises {topic}");
        Ok(Publisher {
            id,
            topic: topic.to_string(),
        })
    }

    pub fn unadvertise(&mut self, handle: &Publisher) {
        if self.publishers.remove(&handle.id).is_some() {
            if let Some(t) = self.topics.get_mut(&handle.topic) {
                t.publishers.retain(|p| *p != handle.id);
            }
        }
    }

    /// Stamp and fan out a message; returns how many subscriber buffers
    /// received it.
    pub fn publish(&mut self, handle: &Publisher, payload: Value) -> Result<usize, CoreError> {
        if self.publishers.get(&handle.id) != Some(&handle.topic) {
            return Err(CoreError::StaleHandle);
        }
        let topic = self.topics.get_mut(&handle.topic).expect("advertised topic");
        let msg = Message {
            topic: handle.topic.clone(),
            payload,
            stamp: self.now,
            seq: topic.next_seq,
        };
        topic.next_seq += 1;
        topic.published += 1;
        let targets = topic.subscribers.clone();
        for sub in &targets {
            let slot = self.subs[sub.0].as_mut().expect("live subscription");
            if slot.buffer.len() == slot.queue_size {
                slot.buffer.pop_front();
            }
            slot.buffer.push_back(msg.clone());
        }
        for sub in &targets {
            self.push(self.now, EventKind::Deliver(*sub));
        }
        Ok(targets.len())
    }

    pub fn subscribe(
        &mut self,
        node: &str,
        topic: &str,
        queue_size: usize,
        callback: impl FnMut(&mut Runtime<S>, &Message) + 'static,
    ) -> Result<SubscriptionId, CoreError> {
        if topic.is_empty() {
            return Err(CoreError::EmptyTopic);
        }
        if queue_size == 0 {
            return Err(CoreError::ZeroQueue);
        }
        let id = SubscriptionId(self.subs.len());
        self.subs.push(Some(SubSlot {
            node: node.to_string(),
            topic: topic.to_string(),
            queue_size,
            buffer: VecDeque::with_capacity(queue_size),
            callback: Some(Box::new(callback)),
            retry: false,
        }));
        self.topics.entry(topic.to_string()).or_default().subscribers.push(id);
        Ok(id)
    }

    pub fn unsubscribe(&mut self, id: SubscriptionId) {
        if let Some(slot) = self.subs.get_mut(id.0).and_then(Option::take) {
            if let Some(t) = self.topics.get_mut(&slot.topic) {
                t.subscribers.retain(|s| *s != id);
            }
        }
    }

    /// Messages waiting in a subscription buffer, oldest first.
    pub fn pending(&self, id: SubscriptionId) -> Vec<Message> {
        self.subs
            .get(id.0)
            .and_then(Option::as_ref)
            .map(|s| s.buffer.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Messages published on each topic so far.
    pub fn publish_counts(&self) -> BTreeMap<String, u64> {
        self.topics
            .iter()
            .filter(|(_, t)| t.published > 0)
            .map(|(k, t)| (k.clone(), t.published))
            .collect()
    }

    // ---- services --------------------------------------------------------

    pub fn advertise_service(
        &mut self,
        node: &str,
        name: &str,
        handler: impl FnMut(&mut Runtime<S>, Value) -> ServiceResult + 'static,
    ) -> Result<(), CoreError> {
        if self.services.contains_key(name) {
            return Err(CoreError::ServiceExists(name.to_string()));
        }
        self.services.insert(
            name.to_string(),
            ServiceSlot {
                node: node.to_string(),
                handler: Some(Box::new(handler)),
                stats: ServiceStats::default(),
            },
        );
        Ok(())
    }

    pub fn remove_service(&mut self, name: &str) {
        self.services.remove(name);
    }

    pub fn has_service(&self, name: &str) -> bool {
        self.services.contains_key(name)
    }

    /// Run a service handler to completion. The handler may block in
    /// virtual time, so `now()` can be later on return.
    pub fn call_service(&mut self, name: &str, request: Value) -> Result<Value, ServiceError> {
        let slot = self
            .services
            .get_mut(name)
            .ok_or_else(|| ServiceError::ServiceUnavailable(name.to_string()))?;
        let mut handler = slot
            .handler
            .take()
            .ok_or_else(|| ServiceError::Busy(name.to_string()))?;
        let caller = slot.node.clone();
        let started = self.now;
        self.record("CALL", name, format!("{request} ({caller})"));
        let result = handler(self, request);
        let elapsed = self.now - started;
        if let Some(slot) = self.services.get_mut(name) {
            slot.handler = Some(handler);
            slot.stats.calls += 1;
            slot.stats.total_latency += elapsed;
            if result.is_err() {
                slot.stats.failures += 1;
            }
        }
        result.map_err(|message| {
            self.record("FAIL", name, message.clone());
            ServiceError::HandlerFailed {
                service: name.to_string(),
                message,
            }
        })
    }

    pub fn service_stats(&self) -> BTreeMap<String, ServiceStats> {
        self.services
            .iter()
            .map(|(k, s)| (k.clone(), s.stats))
            .collect()
    }

    // ---- parameters ------------------------------------------------------

    pub fn set_param(&mut self, key: &str, value: impl Into<String>) {
        self.params.insert(key.to_string(), value.into());
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    // ---- scheduling ------------------------------------------------------

    fn push(&mut self, due: SimTime, kind: EventKind<S>) {
        let seq = self.next_event_seq;
        self.next_event_seq += 1;
        self.queue.push(Scheduled {
            due: due.max(self.now),
            seq,
            kind,
        });
    }

    /// Run `action` at `due` (or now, if `due` is in the past).
    pub fn schedule_at(
        &mut self,
        due: SimTime,
        label: impl Into<String>,
        action: impl FnOnce(&mut Runtime<S>) + 'static,
    ) {
        self.push(due, EventKind::Action(label.into(), Box::new(action)));
    }

    pub fn schedule_in(
        &mut self,
        delay: Duration,
        label: impl Into<String>,
        action: impl FnOnce(&mut Runtime<S>) + 'static,
    ) {
        self.schedule_at(self.now + delay, label, action);
    }

    /// Periodic timer firing at `start`, `start + period`, ...
    pub fn add_timer(
        &mut self,
        name: &str,
        start: SimTime,
        period: Duration,
        callback: impl FnMut(&mut Runtime<S>) + 'static,
    ) -> Result<TimerId, CoreError> {
        if period.is_zero() {
            return Err(CoreError::ZeroPeriod);
        }
        let id = TimerId(self.timers.len());
        self.timers.push(Some(TimerSlot {
            name: name.to_string(),
            start,
            period,
            fires: 0,
            overruns: 0,
            callback: Some(Box::new(callback)),
        }));
        self.push(start, EventKind::Timer(id));
        Ok(id)
    }

    pub fn cancel_timer(&mut self, id: TimerId) {
        if let Some(slot) = self.timers.get_mut(id.0) {
            *slot = None;
        }
    }

    /// Timer firings skipped because the previous firing was still blocked.
    pub fn timer_overruns(&self, id: TimerId) -> u64 {
        self.timers
            .get(id.0)
            .and_then(Option::as_ref)
            .map_or(0, |t| t.overruns)
    }

    pub fn next_due(&self) -> Option<SimTime> {
        self.queue.peek().map(|e| e.due)
    }

    /// Dispatch every event due at or before `t_end`, in (time, insertion)
    /// order, then advance the clock to `t_end`. Returns the number of
    /// events dispatched.
    ///
    /// A callback that blocks past `t_end` leaves the clock where it
    /// finished.
    pub fn run_until(&mut self, t_end: SimTime) -> u64 {
        self.run_inner(t_end, true)
    }

    /// Like [`Runtime::run_until`] but over the half-open span: events due
    /// exactly at `t_end` stay queued.
    pub fn run_before(&mut self, t_end: SimTime) -> u64 {
        self.run_inner(t_end, false)
    }

    fn run_inner(&mut self, t_end: SimTime, inclusive: bool) -> u64 {
        let mut count = 0;
        while self
            .queue
            .peek()
            .is_some_and(|e| e.due < t_end || (inclusive && e.due == t_end))
        {
            let ev = self.queue.pop().expect("peeked");
            if ev.due > self.now {
                self.pace(ev.due);
                self.now = ev.due;
            }
            self.dispatch(ev.kind);
            count += 1;
        }
        if t_end > self.now {
            self.pace(t_end);
            self.now = t_end;
        }
        count
    }

    pub fn run_for(&mut self, d: Duration) -> u64 {
        self.run_until(self.now + d)
    }

    /// Block the calling callback for `d` of virtual time while the rest of
    /// the graph keeps running.
    pub fn sleep(&mut self, d: Duration) {
        self.run_until(self.now + d);
    }

    fn pace(&self, to: SimTime) {
        if let Some(rt) = &self.realtime {
            let target = rt.wall_origin + (to - rt.sim_origin).mul_f64(rt.scale);
            let now = Instant::now();
            if target > now {
                std::thread::sleep(target - now);
            }
        }
    }

    fn dispatch(&mut self, kind: EventKind<S>) {
        self.dispatched += 1;
        match kind {
            EventKind::Action(label, f) => {
                if !label.is_empty() {
                    self.record("ACTION", &label, String::new());
                }
                f(self);
            }
            EventKind::Timer(id) => self.fire_timer(id),
            EventKind::Deliver(id) => self.deliver(id),
        }
    }

    fn fire_timer(&mut self, id: TimerId) {
        let Some(slot) = self.timers.get_mut(id.0).and_then(Option::as_mut) else {
            return;
        };
        slot.fires += 1;
        let next = slot.start
            + Duration::from_nanos(slot.period.as_nanos() as u64 * slot.fires);
        let name = slot.name.clone();
        let callback = slot.callback.take();
        if callback.is_none() {
            slot.overruns += 1;
        }
        self.push(next, EventKind::Timer(id));
        let Some(mut cb) = callback else {
            self.record("OVERRUN", &name, String::new());
            return;
        };
        self.record("TIMER", &name, String::new());
        cb(self);
        if let Some(slot) = self.timers.get_mut(id.0).and_then(Option::as_mut) {
            slot.callback = Some(cb);
        }
    }

    fn deliver(&mut self, id: SubscriptionId) {
        let Some(slot) = self.subs.get_mut(id.0).and_then(Option::as_mut) else {
            return;
        };
        if slot.buffer.is_empty() {
            return;
        }
        let Some(mut cb) = slot.callback.take() else {
            slot.retry = true;
            return;
        };
        let msg = slot.buffer.pop_front().expect("non-empty");
        let target = format!("{} ({})", msg.topic, slot.node);
        self.record("DELIVER", &target, format!("#{} {}", msg.seq, msg.payload));
        cb(self, &msg);
        if let Some(slot) = self.subs.get_mut(id.0).and_then(Option::as_mut) {
            slot.callback = Some(cb);
            if std::mem::take(&mut slot.retry) && !slot.buffer.is_empty() {
                self.push(self.now, EventKind::Deliver(id));
            }
        }
    }

    // ---- event log -------------------------------------------------------

    pub fn record(&mut self, kind: &'static str, target: &str, summary: impl Into<String>) {
        self.log.push(LogEntry {
            time: self.now,
            kind,
            target: target.to_string(),
            summary: summary.into(),
        });
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn log_text(&self) -> String {
        let mut s = String::new();
        for e in &self.log {
            s.push_str(&e.to_string());
            s.push('\n');
        }
        s
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }
}
