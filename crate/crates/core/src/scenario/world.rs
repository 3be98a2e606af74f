use std::collections::{BTreeMap, HashMap, HashSet};
use std::net::Ipv4Addr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ScenarioConfig;
use crate::adversary::{Adversary, AdversaryOutput};
use crate::analysis::{asn_key, GroundTruth, StreamTruth, UserTruth};
use crate::bt::{
    pex_exchange, Behavior, Catalog, DhtTracker, PexView, SubscriptionSource, Tracker,
};
use crate::sim::{
    rng_for, EventLog, HostId, HostRegistry, Labelled, LatencyModel, PopulationError, Scheduler,
    SimRng, SimTime,
};
use crate::tor::{AppTag, Directory, InsufficientRelays, RelayId, Roles, StreamId, TorOverlay};
use crate::wire::{AnnounceEvent, AnnounceRequest, AnnounceResponse, BtHandshake};
use crate::{Endpoint, InfoHash, PeerId};

const TRACKER_PORT: u16 = 6969;
const RELAY_PORT: u16 = 9001;
const DHT_PORT: u16 = 6881;
const ENCRYPTED_HANDSHAKE_LEN: usize = 96;

// Random streams; per-agent streams start at AGENT_STREAM_BASE.
const STREAM_HOSTS: u64 = 0;
const STREAM_CATALOG: u64 = 1;
const STREAM_ROLES: u64 = 2;
const STREAM_TOR: u64 = 3;
const AGENT_STREAM_BASE: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Relays(#[from] InsufficientRelays),
    #[error("invalid scenario: {0}")]
    Config(#[from] super::ConfigError),
}

/// Cumulative traced-address counts at one point of the run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub by_country: BTreeMap<String, u64>,
    pub by_asn: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub events: u64,
    pub downloads_started: u64,
    pub p2p_attempts: u64,
    pub p2p_established: u64,
    pub p2p_refused: u64,
    /// Connections initiated by Tor-using peers that reached a listening
    /// peer (including the malicious one).
    pub p2p_from_tor_users: u64,
    /// Of those, the ones arriving from an exit address.
    pub p2p_from_tor_users_via_exit: u64,
    pub dht_messages: u64,
    /// DHT datagrams whose source is an exit relay; the model never sends any.
    pub dht_messages_from_exits: u64,
    /// Swarm entries not equal to some peer's public endpoint.
    pub untruthful_subscriptions: u64,
}

/// Everything one run produced.
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub truth: GroundTruth,
    pub adversary: AdversaryOutput,
    pub catalog: Catalog,
    pub snapshots: Vec<Snapshot>,
    pub event_log: Option<EventLog>,
    pub stats: RunStats,
    pub exit_addresses: HashSet<Ipv4Addr>,
    geo: HashMap<Ipv4Addr, (String, u32)>,
}

impl RunOutput {
    /// Country and ASN of an address, as a geolocation database would give.
    pub fn locate(&self, ip: Ipv4Addr) -> Option<(&str, u32)> {
        self.geo.get(&ip).map(|(c, a)| (c.as_str(), *a))
    }

    /// Distinct traced addresses (after propagation) counted by country and
    /// by ASN.
    pub fn traced_counts(&self) -> (BTreeMap<String, u64>, BTreeMap<String, u64>) {
        let ips: std::collections::BTreeSet<Ipv4Addr> = self
            .adversary
            .propagation
            .circuits
            .values()
            .map(|(e, _)| e.ip)
            .collect();
        count_by_location(ips.into_iter(), &self.geo)
    }

    /// Content seen on traced circuits, one entry per (traced address,
    /// info_hash) pair.
    pub fn traced_downloads(&self) -> Vec<InfoHash> {
        let mut seen = std::collections::BTreeSet::new();
        for o in &self.adversary.observations {
            if let (Some((ep, _)), Some(ih)) = (
                self.adversary.propagation.circuits.get(&o.circuit),
                o.info_hash(),
            ) {
                seen.insert((ep.ip, ih));
            }
        }
        seen.into_iter().map(|(_, ih)| ih).collect()
    }
}

fn count_by_location(
    ips: impl Iterator<Item = Ipv4Addr>,
    geo: &HashMap<Ipv4Addr, (String, u32)>,
) -> (BTreeMap<String, u64>, BTreeMap<String, u64>) {
    let mut by_country = BTreeMap::new();
    let mut by_asn = BTreeMap::new();
    for ip in ips {
        if let Some((c, a)) = geo.get(&ip) {
            *by_country.entry(c.clone()).or_insert(0) += 1;
            *by_asn.entry(asn_key(*a)).or_insert(0) += 1;
        }
    }
    (by_country, by_asn)
}

#[derive(Clone, Debug)]
enum Ev {
    SessionStart {
        agent: usize,
    },
    SessionEnd {
        agent: usize,
        session: u32,
    },
    Announce {
        agent: usize,
        session: u32,
        dl: usize,
        event: AnnounceEvent,
    },
    TrackerAtExit {
        agent: usize,
        session: u32,
        dl: usize,
        stream: StreamId,
        bytes: Vec<u8>,
    },
    TrackerAtServer {
        agent: usize,
        session: u32,
        dl: usize,
        stream: Option<StreamId>,
        bytes: Vec<u8>,
    },
    ResponseAtExit {
        agent: usize,
        session: u32,
        dl: usize,
        stream: StreamId,
        bytes: Vec<u8>,
    },
    Candidates {
        agent: usize,
        session: u32,
        dl: usize,
        bytes: Vec<u8>,
    },
    ConnectAtExit {
        conn: Connection,
        stream: StreamId,
        wire: Vec<u8>,
    },
    ConnectArrive {
        conn: Connection,
        source: Endpoint,
    },
    TryConnect {
        agent: usize,
        session: u32,
        dl: usize,
    },
    Browse {
        agent: usize,
        session: u32,
    },
    WebAtExit {
        stream: StreamId,
        bytes: Vec<u8>,
    },
    Snapshot,
}

#[derive(Clone, Debug)]
struct Connection {
    agent: usize,
    session: u32,
    dl: usize,
    target: Endpoint,
    /// The handshake as the receiving peer reads it.
    plain: Vec<u8>,
}

impl Labelled for Ev {
    fn label(&self) -> &'static str {
        match self {
            Ev::SessionStart { .. } => "session_start",
            Ev::SessionEnd { .. } => "session_end",
            Ev::Announce { .. } => "announce",
            Ev::TrackerAtExit { .. } => "tracker_request_at_exit",
            Ev::TrackerAtServer { .. } => "tracker_request_at_tracker",
            Ev::ResponseAtExit { .. } => "tracker_response_at_exit",
            Ev::Candidates { .. } => "candidates",
            Ev::ConnectAtExit { .. } => "connect_at_exit",
            Ev::ConnectArrive { .. } => "connect_arrive",
            Ev::TryConnect { .. } => "try_connect",
            Ev::Browse { .. } => "browse",
            Ev::WebAtExit { .. } => "web_request_at_exit",
            Ev::Snapshot => "snapshot",
        }
    }
}

#[derive(Clone, Debug, Default)]
struct DownloadState {
    pex: PexView,
    candidates: Vec<Endpoint>,
    known: HashSet<Endpoint>,
    attempted: HashSet<Endpoint>,
    cursor: usize,
    pending: usize,
}

struct Agent {
    host: HostId,
    public: Endpoint,
    /// `None` for browse-only users.
    behavior: Option<Behavior>,
    browses: bool,
    downloads: Vec<InfoHash>,
    /// Sessions, announces and identities: the agent's own timeline.
    rng: SimRng,
    /// Browsing draws, kept apart so web traffic does not depend on how
    /// many P2P connections the agent happened to make.
    web_rng: SimRng,
    p2p_rng: SimRng,
    session: u32,
    active: bool,
    peer_id: PeerId,
    state: Vec<DownloadState>,
}

impl Agent {
    fn uses_tor(&self) -> bool {
        self.behavior.is_none_or(Behavior::tracker_via_tor)
    }
}

fn exp_sample<R: Rng + ?Sized>(rng: &mut R, mean_s: u64) -> SimTime {
    let u: f64 = rng.gen();
    SimTime::from_millis((-(1.0 - u).ln() * mean_s as f64 * 1000.0) as u64)
}

struct World {
    cfg: ScenarioConfig,
    latency: LatencyModel,
    overlay: TorOverlay,
    trackers: Vec<(HostId, Tracker)>,
    dht: DhtTracker,
    dht_host: HostId,
    adversary: Adversary,
    malicious: Option<(HostId, Endpoint)>,
    exit_list: HashSet<Ipv4Addr>,
    agents: Vec<Agent>,
    by_endpoint: HashMap<Endpoint, usize>,
    sites: Vec<(HostId, Ipv4Addr)>,
    web_ports: WeightedIndex<f64>,
    geo: HashMap<Ipv4Addr, (String, u32)>,
    snapshots: Vec<Snapshot>,
    stats: RunStats,
    deadline: SimTime,
}

/// Runs one scenario with its configured seed and policy.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let seed = cfg.seed;
    let mut rng = rng_for(seed, STREAM_HOSTS);
    let mut reg = HostRegistry::new();

    let mut directory = Directory::new();
    for (n, roles) in [
        (cfg.tor.n_entry, Roles::ENTRY),
        (cfg.tor.n_middle, Roles::MIDDLE),
        (cfg.tor.n_exit, Roles::EXIT),
    ] {
        for _ in 0..n {
            let h = reg.add(&mut rng, RELAY_PORT, "ZZ", 0);
            directory.add(h, reg.get(h).endpoint, roles);
        }
    }
    let exits: Vec<RelayId> = directory.exits().map(|r| r.id).collect();
    let instrumented: Vec<RelayId> = cfg
        .tor
        .instrumented_exits
        .iter()
        .map(|&i| exits[i])
        .collect();
    let hijack_exit = cfg.tor.hijack_exit.map(|i| exits[i]);
    let exit_list = directory.exit_addresses();

    let catalog = Catalog::generate(&cfg.bittorrent.catalog, &mut rng_for(seed, STREAM_CATALOG));
    let interval = SimTime::from_secs(cfg.bittorrent.announce_interval_s);
    let n_trackers = cfg.bittorrent.n_trackers;
    let mut tracker_items: Vec<Vec<InfoHash>> = vec![Vec::new(); n_trackers];
    for item in catalog.items() {
        tracker_items[tracker_index(&item.info_hash, n_trackers)].push(item.info_hash);
    }
    let trackers = tracker_items
        .into_iter()
        .map(|items| {
            let h = reg.add(&mut rng, TRACKER_PORT, "ZZ", 0);
            (
                h,
                Tracker::new(
                    reg.get(h).endpoint,
                    items,
                    interval,
                    cfg.bittorrent.max_peers,
                ),
            )
        })
        .collect();
    let dht_host = reg.add(&mut rng, DHT_PORT, "ZZ", 0);
    let dht = DhtTracker::new(rng.gen(), SimTime(interval.ticks() * 2), rng.gen());

    let port = rng.gen_range(crate::sim::PEER_PORT_RANGE);
    let mal_host = reg.add(&mut rng, port, "ZZ", 0);
    let mal_ep = reg.get(mal_host).endpoint;
    let adversary = Adversary::new(
        cfg.adversary.clone(),
        hijack_exit,
        mal_ep,
        exit_list.clone(),
    );
    let malicious = adversary.malicious_endpoint().map(|e| (mal_host, e));

    let sites: Vec<(HostId, Ipv4Addr)> = (0..cfg.web.n_sites)
        .map(|_| {
            let h = reg.add(&mut rng, 80, "ZZ", 0);
            (h, reg.get(h).endpoint.ip)
        })
        .collect();

    let bt = &cfg.bittorrent;
    let n_tor = (bt.n_peers as f64 * bt.tor_user_fraction).round() as usize;
    let tor_hosts = reg.sample_population(&cfg.population.tor, n_tor, &mut rng)?;
    let plain_hosts =
        reg.sample_population(&cfg.population.baseline, bt.n_peers - n_tor, &mut rng)?;
    let web_hosts =
        reg.sample_population(&cfg.population.tor, cfg.web.n_web_only_users, &mut rng)?;

    // Exact role counts, shuffled, so realised shares match the configuration.
    let mut roles_rng = rng_for(seed, STREAM_ROLES);
    let n_all = (n_tor as f64 * bt.behavior.all_via_tor).round() as usize;
    let mut behaviors: Vec<Behavior> = (0..n_tor)
        .map(|i| {
            if i < n_all {
                Behavior::AllViaTor
            } else {
                Behavior::TrackerOnlyViaTor
            }
        })
        .collect();
    behaviors.shuffle(&mut roles_rng);
    let n_browse = (n_tor as f64 * cfg.web.browse_fraction).round() as usize;
    let mut browses: Vec<bool> = (0..n_tor).map(|i| i < n_browse).collect();
    browses.shuffle(&mut roles_rng);

    let mut agents = Vec::new();
    let specs = tor_hosts
        .iter()
        .zip(behaviors.iter().zip(&browses))
        .map(|(&h, (&b, &w))| (h, Some(b), w))
        .chain(
            plain_hosts
                .iter()
                .map(|&h| (h, Some(Behavior::NoTor), false)),
        )
        .chain(web_hosts.iter().map(|&h| (h, None, true)));
    for (i, (host, behavior, browses)) in specs.enumerate() {
        let base = AGENT_STREAM_BASE + 3 * i as u64;
        let mut arng = rng_for(seed, base);
        let downloads = if behavior.is_some() {
            pick_downloads(&catalog, bt.max_downloads, &mut arng)
        } else {
            Vec::new()
        };
        agents.push(Agent {
            host,
            public: reg.get(host).endpoint,
            behavior,
            browses,
            downloads,
            rng: arng,
            web_rng: rng_for(seed, base + 1),
            p2p_rng: rng_for(seed, base + 2),
            session: 0,
            active: false,
            peer_id: PeerId([0; 20]),
            state: Vec::new(),
        });
    }
    let by_endpoint = agents
        .iter()
        .enumerate()
        .filter(|(_, a)| a.behavior.is_some())
        .map(|(i, a)| (a.public, i))
        .collect();
    let geo = reg
        .hosts()
        .iter()
        .map(|h| (h.endpoint.ip, (h.country.clone(), h.asn)))
        .collect();

    let overlay = TorOverlay::new(
        directory,
        cfg.tor.n_hops,
        SimTime::from_secs(cfg.tor.circuit_lifetime_s),
        cfg.tor.circuit_policy(),
        instrumented,
        rng_for(seed, STREAM_TOR),
    );
    let web_ports =
        WeightedIndex::new(cfg.web.ports.iter().map(|p| p.weight)).expect("validated port weights");

    let mut world = World {
        cfg: cfg.clone(),
        latency: LatencyModel::new(seed, cfg.sim.latency_min_ms, cfg.sim.latency_max_ms),
        overlay,
        trackers,
        dht,
        dht_host,
        adversary,
        malicious,
        exit_list,
        agents,
        by_endpoint,
        sites,
        web_ports,
        geo,
        snapshots: Vec::new(),
        stats: RunStats::default(),
        deadline: SimTime::from_secs(cfg.virtual_duration_s),
    };

    let mut sched: Scheduler<Ev> = Scheduler::new();
    if cfg.sim.event_log {
        sched = sched.with_log();
    }
    for i in 0..world.agents.len() {
        let a = &mut world.agents[i];
        let at = exp_sample(&mut a.rng, world.cfg.bittorrent.gap_mean_s);
        sched
            .schedule(at, a.host, Ev::SessionStart { agent: i })
            .expect("future");
    }
    let snap = SimTime::from_secs(cfg.analysis.snapshot_interval_s);
    sched
        .schedule(snap, world.dht_host, Ev::Snapshot)
        .expect("future");

    let deadline = world.deadline;
    world.stats.events = sched.run_until(deadline, |s, ev| world.handle(s, ev.payload));
    world.take_snapshot(deadline);
    let event_log = sched.take_log();
    Ok(world.finish(catalog, event_log))
}

fn tracker_index(h: &InfoHash, n: usize) -> usize {
    let b = h.as_bytes();
    (u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize) % n
}

fn pick_downloads(catalog: &Catalog, max: usize, rng: &mut SimRng) -> Vec<InfoHash> {
    let k = rng.gen_range(1..=max.min(catalog.len()));
    let mut out: Vec<InfoHash> = Vec::with_capacity(k);
    let mut tries = 0;
    while out.len() < k && tries < 100 * k {
        tries += 1;
        if let Some(item) = catalog.sample(rng) {
            if !out.contains(&item.info_hash) {
                out.push(item.info_hash);
            }
        }
    }
    out
}

impl World {
    fn handle(&mut self, s: &mut Scheduler<Ev>, ev: Ev) {
        let now = s.now();
        match ev {
            Ev::SessionStart { agent } => self.session_start(s, agent, now),
            Ev::SessionEnd { agent, session } => self.session_end(s, agent, session, now),
            Ev::Announce {
                agent,
                session,
                dl,
                event,
            } => self.announce(s, agent, session, dl, event, now),
            Ev::TrackerAtExit {
                agent,
                session,
                dl,
                stream,
                bytes,
            } => {
                self.deliver_at_exit(stream, &bytes, now);
                let exit_host = self.exit_host(stream);
                let tracker_host = self.tracker_host_for(agent, dl);
                let at = now + self.latency.between(exit_host, tracker_host);
                let host = self.agents[agent].host;
                s.schedule(
                    at,
                    host,
                    Ev::TrackerAtServer {
                        agent,
                        session,
                        dl,
                        stream: Some(stream),
                        bytes,
                    },
                )
                .expect("future");
            }
            Ev::TrackerAtServer {
                agent,
                session,
                dl,
                stream,
                bytes,
            } => self.tracker_request(s, agent, session, dl, stream, &bytes, now),
            Ev::ResponseAtExit {
                agent,
                session,
                dl,
                stream,
                bytes,
            } => {
                let exit = self.overlay.exit_of(stream);
                let bytes = if self.overlay.is_instrumented(exit) {
                    self.adversary.intercept_response(stream, &bytes, now)
                } else {
                    bytes
                };
                let path = self.overlay.path_hosts(self.overlay.stream(stream).circuit);
                let at = now + self.latency.along(&path);
                let host = self.agents[agent].host;
                s.schedule(
                    at,
                    host,
                    Ev::Candidates {
                        agent,
                        session,
                        dl,
                        bytes,
                    },
                )
                .expect("future");
            }
            Ev::Candidates {
                agent,
                session,
                dl,
                bytes,
            } => {
                if !self.is_live(agent, session) {
                    return;
                }
                if let Ok(resp) = AnnounceResponse::parse_http(&bytes) {
                    self.add_candidates(agent, dl, &resp.peers);
                    self.try_connect(s, agent, dl, now);
                }
            }
            Ev::ConnectAtExit { conn, stream, wire } => {
                self.deliver_at_exit(stream, &wire, now);
                let exit = self.overlay.directory().get(self.overlay.exit_of(stream));
                let (exit_host, exit_ep) = (exit.host, exit.endpoint);
                let at = now + self.latency.between(exit_host, self.host_of(conn.target));
                let host = self.agents[conn.agent].host;
                s.schedule(
                    at,
                    host,
                    Ev::ConnectArrive {
                        conn,
                        source: exit_ep,
                    },
                )
                .expect("future");
            }
            Ev::ConnectArrive { conn, source } => self.connect_arrive(s, conn, source, now),
            Ev::TryConnect { agent, session, dl } => {
                if self.is_live(agent, session) {
                    self.try_connect(s, agent, dl, now);
                }
            }
            Ev::Browse { agent, session } => self.browse(s, agent, session, now),
            Ev::WebAtExit { stream, bytes } => self.deliver_at_exit(stream, &bytes, now),
            Ev::Snapshot => {
                self.take_snapshot(now);
                let next = now + SimTime::from_secs(self.cfg.analysis.snapshot_interval_s);
                if next < self.deadline {
                    s.schedule(next, self.dht_host, Ev::Snapshot)
                        .expect("future");
                }
            }
        }
    }

    fn is_live(&self, agent: usize, session: u32) -> bool {
        let a = &self.agents[agent];
        a.active && a.session == session
    }

    fn host_of(&self, e: Endpoint) -> HostId {
        if let Some((h, m)) = self.malicious {
            if m == e {
                return h;
            }
        }
        self.by_endpoint
            .get(&e)
            .map_or(HostId(u32::MAX), |&i| self.agents[i].host)
    }

    fn exit_host(&self, stream: StreamId) -> HostId {
        self.overlay
            .directory()
            .get(self.overlay.exit_of(stream))
            .host
    }

    fn tracker_host_for(&self, agent: usize, dl: usize) -> HostId {
        let ih = self.agents[agent].downloads[dl];
        self.trackers[tracker_index(&ih, self.trackers.len())].0
    }

    fn deliver_at_exit(&mut self, stream: StreamId, payload: &[u8], now: SimTime) {
        if let Some(view) = self.overlay.exit_deliver(stream, payload, now) {
            self.adversary.observe(&view, &mut self.dht);
        }
    }

    fn session_start(&mut self, s: &mut Scheduler<Ev>, agent: usize, now: SimTime) {
        let bt = &self.cfg.bittorrent;
        let a = &mut self.agents[agent];
        if a.active {
            return;
        }
        a.session += 1;
        a.active = true;
        a.peer_id = PeerId::random(&mut a.rng);
        a.state = vec![DownloadState::default(); a.downloads.len()];
        for st in &mut a.state {
            st.pex = PexView::new(a.public);
        }
        let session = a.session;
        let host = a.host;
        for dl in 0..a.downloads.len() {
            let at = now + SimTime::from_millis(a.rng.gen_range(0..5000));
            s.schedule(
                at,
                host,
                Ev::Announce {
                    agent,
                    session,
                    dl,
                    event: AnnounceEvent::Started,
                },
            )
            .expect("future");
        }
        self.stats.downloads_started += a.downloads.len() as u64;
        if a.browses {
            let at = now + exp_sample(&mut a.web_rng, self.cfg.web.browse_mean_interval_s);
            s.schedule(at, host, Ev::Browse { agent, session })
                .expect("future");
        }
        let len = exp_sample(&mut a.rng, bt.session_mean_s).max(SimTime::from_secs(60));
        s.schedule(now + len, host, Ev::SessionEnd { agent, session })
            .expect("future");
    }

    fn session_end(&mut self, s: &mut Scheduler<Ev>, agent: usize, session: u32, now: SimTime) {
        if !self.is_live(agent, session) {
            return;
        }
        let a = &mut self.agents[agent];
        a.active = false;
        let host = a.host;
        for dl in 0..a.downloads.len() {
            s.schedule(
                now,
                host,
                Ev::Announce {
                    agent,
                    session,
                    dl,
                    event: AnnounceEvent::Stopped,
                },
            )
            .expect("future");
        }
        let gap = exp_sample(&mut a.rng, self.cfg.bittorrent.gap_mean_s);
        s.schedule(now + gap, host, Ev::SessionStart { agent })
            .expect("future");
    }

    fn announce(
        &mut self,
        s: &mut Scheduler<Ev>,
        agent: usize,
        session: u32,
        dl: usize,
        event: AnnounceEvent,
        now: SimTime,
    ) {
        let stopping = event == AnnounceEvent::Stopped;
        {
            let a = &self.agents[agent];
            if a.session != session || (!stopping && !a.active) {
                return;
            }
        }
        let ih = self.agents[agent].downloads[dl];
        if !stopping && self.cfg.bittorrent.dht_enabled {
            let public = self.agents[agent].public;
            let peers = self.dht.announce_and_lookup(ih, public, now);
            self.add_candidates(agent, dl, &peers);
            self.try_connect(s, agent, dl, now);
        }
        let tracker_idx = tracker_index(&ih, self.trackers.len());
        let (tracker_host, tracker_ep) = (
            self.trackers[tracker_idx].0,
            self.trackers[tracker_idx].1.endpoint,
        );
        let a = &mut self.agents[agent];
        let request = AnnounceRequest {
            info_hash: ih,
            peer_id: a.peer_id,
            port: a.public.port,
            event,
        };
        let bytes = request.encode_http(&tracker_ep.to_string());
        let host = a.host;
        if a.uses_tor() {
            let stream = self
                .overlay
                .open_stream(host, tracker_ep, AppTag::BitTorrent, now, false)
                .expect("relays validated");
            let path = self.overlay.path_hosts(self.overlay.stream(stream).circuit);
            let at = now + self.latency.along(&path);
            s.schedule(
                at,
                host,
                Ev::TrackerAtExit {
                    agent,
                    session,
                    dl,
                    stream,
                    bytes,
                },
            )
            .expect("future");
        } else {
            let at = now + self.latency.between(host, tracker_host);
            s.schedule(
                at,
                host,
                Ev::TrackerAtServer {
                    agent,
                    session,
                    dl,
                    stream: None,
                    bytes,
                },
            )
            .expect("future");
        }
        if !stopping {
            let a = &mut self.agents[agent];
            let base = self.cfg.bittorrent.announce_interval_s as f64 * 1000.0;
            let j = self.cfg.bittorrent.announce_jitter;
            let factor = if j > 0.0 {
                1.0 + a.rng.gen_range(-j..=j)
            } else {
                1.0
            };
            let at = now + SimTime::from_millis((base * factor).max(1000.0) as u64);
            s.schedule(
                at,
                host,
                Ev::Announce {
                    agent,
                    session,
                    dl,
                    event: AnnounceEvent::Periodic,
                },
            )
            .expect("future");
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn tracker_request(
        &mut self,
        s: &mut Scheduler<Ev>,
        agent: usize,
        session: u32,
        dl: usize,
        stream: Option<StreamId>,
        bytes: &[u8],
        now: SimTime,
    ) {
        let Ok(req) = AnnounceRequest::parse_http(bytes) else {
            return;
        };
        let idx = tracker_index(&req.info_hash, self.trackers.len());
        let tracker_host = self.trackers[idx].0;
        // The tracker registers the sender's public address with the
        // announced port, whichever path the request took.
        let declared = Endpoint::new(self.agents[agent].public.ip, req.port);
        let via = if stream.is_some() {
            SubscriptionSource::TorExit
        } else {
            SubscriptionSource::Direct
        };
        let tracker = &mut self.trackers[idx].1;
        let response = if req.event == AnnounceEvent::Stopped {
            let _ = tracker.remove(&req.info_hash, declared);
            AnnounceResponse {
                interval: self.cfg.bittorrent.announce_interval_s as u32,
                peers: Vec::new(),
            }
        } else {
            match tracker.announce(req.info_hash, declared, via, now) {
                Ok(r) => r,
                Err(_) => return,
            }
        };
        let bytes = response.encode_http();
        let host = self.agents[agent].host;
        match stream {
            Some(stream) => {
                let at = now + self.latency.between(tracker_host, self.exit_host(stream));
                s.schedule(
                    at,
                    host,
                    Ev::ResponseAtExit {
                        agent,
                        session,
                        dl,
                        stream,
                        bytes,
                    },
                )
                .expect("future");
            }
            None => {
                let at = now + self.latency.between(tracker_host, host);
                s.schedule(
                    at,
                    host,
                    Ev::Candidates {
                        agent,
                        session,
                        dl,
                        bytes,
                    },
                )
                .expect("future");
            }
        }
    }

    fn add_candidates(&mut self, agent: usize, dl: usize, peers: &[Endpoint]) {
        let a = &mut self.agents[agent];
        let own = a.public;
        let st = &mut a.state[dl];
        for &p in peers {
            if p != own && !st.pex.connected.contains(&p) && st.known.insert(p) {
                st.candidates.push(p);
            }
        }
    }

    fn try_connect(&mut self, s: &mut Scheduler<Ev>, agent: usize, dl: usize, now: SimTime) {
        let max = self.cfg.bittorrent.max_connections;
        let enc_frac = self.cfg.bittorrent.encryption_fraction;
        loop {
            let a = &mut self.agents[agent];
            let st = &mut a.state[dl];
            if st.pex.connected.len() + st.pending >= max {
                return;
            }
            let Some(&target) = st.candidates.get(st.cursor) else {
                return;
            };
            st.cursor += 1;
            if st.pex.connected.contains(&target) || !st.attempted.insert(target) {
                continue;
            }
            st.pending += 1;
            self.stats.p2p_attempts += 1;
            let encrypted = enc_frac > 0.0 && a.p2p_rng.gen_bool(enc_frac);
            let plain = BtHandshake::new(a.downloads[dl], a.peer_id, Some(a.public.port)).encode();
            let wire = if encrypted {
                let mut w = vec![0u8; ENCRYPTED_HANDSHAKE_LEN];
                a.p2p_rng.fill(&mut w[..]);
                w
            } else {
                plain.clone()
            };
            let conn = Connection {
                agent,
                session: a.session,
                dl,
                target,
                plain,
            };
            let host = a.host;
            let public = a.public;
            let via_tor = a.behavior.is_some_and(Behavior::p2p_via_tor);
            if via_tor {
                let stream = self
                    .overlay
                    .open_stream(host, target, AppTag::BitTorrent, now, encrypted)
                    .expect("relays validated");
                let path = self.overlay.path_hosts(self.overlay.stream(stream).circuit);
                let at = now + self.latency.along(&path);
                s.schedule(at, host, Ev::ConnectAtExit { conn, stream, wire })
                    .expect("future");
            } else {
                let at = now + self.latency.between(host, self.host_of(target));
                s.schedule(
                    at,
                    host,
                    Ev::ConnectArrive {
                        conn,
                        source: public,
                    },
                )
                .expect("future");
            }
        }
    }

    fn connect_arrive(
        &mut self,
        s: &mut Scheduler<Ev>,
        conn: Connection,
        source: Endpoint,
        now: SimTime,
    ) {
        let initiator_tor = self.agents[conn.agent]
            .behavior
            .is_some_and(|b| b != Behavior::NoTor);
        let is_malicious = self.malicious.is_some_and(|(_, m)| m == conn.target);
        // Only connections that reach some listening peer are counted; an
        // address gossiped from an exit has nobody behind it.
        if initiator_tor && (is_malicious || self.by_endpoint.contains_key(&conn.target)) {
            self.stats.p2p_from_tor_users += 1;
            if self.exit_list.contains(&source.ip) {
                self.stats.p2p_from_tor_users_via_exit += 1;
            }
        }
        let live = self.is_live(conn.agent, conn.session);
        if live {
            self.agents[conn.agent].state[conn.dl].pending -= 1;
        }
        let ih = self.agents[conn.agent].downloads[conn.dl];
        if is_malicious {
            // The malicious peer keeps the handshake and hangs up, so it never
            // shows up in anyone's connection list.
            self.adversary.accept_connection(source, &conn.plain, now);
            self.stats.p2p_established += 1;
            if live {
                self.try_connect(s, conn.agent, conn.dl, now);
            }
            return;
        }
        let target = self
            .by_endpoint
            .get(&conn.target)
            .copied()
            .filter(|&t| self.agents[t].active)
            .and_then(|t| {
                self.agents[t]
                    .downloads
                    .iter()
                    .position(|&h| h == ih)
                    .map(|d| (t, d))
            });
        let Some((t, tdl)) = target else {
            self.stats.p2p_refused += 1;
            if live {
                self.try_connect(s, conn.agent, conn.dl, now);
            }
            return;
        };
        self.stats.p2p_established += 1;
        if !live {
            return;
        }
        if self.cfg.bittorrent.pex_enabled {
            let mut mine = std::mem::take(&mut self.agents[conn.agent].state[conn.dl].pex);
            let mut theirs = std::mem::take(&mut self.agents[t].state[tdl].pex);
            // The target knows the initiator only by the connection's source
            // address, and neither side gossips the other back to itself.
            let own = mine.own.replace(source);
            pex_exchange(&mut mine, &mut theirs);
            mine.own = own;
            mine.candidates.remove(&conn.target);
            theirs.candidates.remove(&source);
            mine.connected.insert(conn.target);
            theirs.connected.insert(source);
            let learned_mine: Vec<Endpoint> = mine.candidates.iter().copied().collect();
            let learned_theirs: Vec<Endpoint> = theirs.candidates.iter().copied().collect();
            self.agents[conn.agent].state[conn.dl].pex = mine;
            self.agents[t].state[tdl].pex = theirs;
            self.add_candidates(conn.agent, conn.dl, &learned_mine);
            self.add_candidates(t, tdl, &learned_theirs);
            let (ha, ht) = (self.agents[conn.agent].host, self.agents[t].host);
            let at = now + self.latency.between(ha, ht);
            let session_t = self.agents[t].session;
            s.schedule(
                at,
                ht,
                Ev::TryConnect {
                    agent: t,
                    session: session_t,
                    dl: tdl,
                },
            )
            .expect("future");
        } else {
            self.agents[t].state[tdl].pex.connected.insert(source);
            self.agents[conn.agent].state[conn.dl]
                .pex
                .connected
                .insert(conn.target);
        }
        self.try_connect(s, conn.agent, conn.dl, now);
    }

    fn browse(&mut self, s: &mut Scheduler<Ev>, agent: usize, session: u32, now: SimTime) {
        if !self.is_live(agent, session) {
            return;
        }
        let a = &mut self.agents[agent];
        let (_, ip) = self.sites[a.web_rng.gen_range(0..self.sites.len())];
        let port = self.cfg.web.ports[self.web_ports.sample(&mut a.web_rng)].port;
        let dest = Endpoint::new(ip, port);
        let bytes = web_payload(dest, &mut a.web_rng);
        let host = a.host;
        let next = now + exp_sample(&mut a.web_rng, self.cfg.web.browse_mean_interval_s);
        let stream = self
            .overlay
            .open_stream(host, dest, AppTag::Browser, now, false)
            .expect("relays validated");
        let path = self.overlay.path_hosts(self.overlay.stream(stream).circuit);
        let at = now + self.latency.along(&path);
        s.schedule(at, host, Ev::WebAtExit { stream, bytes })
            .expect("future");
        s.schedule(next, host, Ev::Browse { agent, session })
            .expect("future");
    }

    fn take_snapshot(&mut self, now: SimTime) {
        let ips: std::collections::BTreeSet<Ipv4Addr> = self
            .adversary
            .results()
            .iter()
            .map(|r| r.traced_endpoint.ip)
            .collect();
        let (by_country, by_asn) = count_by_location(ips.into_iter(), &self.geo);
        if self.snapshots.last().is_some_and(|s| s.tick == now.ticks()) {
            return;
        }
        self.snapshots.push(Snapshot {
            tick: now.ticks(),
            by_country,
            by_asn,
        });
    }

    fn finish(mut self, catalog: Catalog, event_log: Option<EventLog>) -> RunOutput {
        let streams = self
            .overlay
            .streams()
            .iter()
            .filter_map(|st| {
                let c = self.overlay.circuit(st.circuit);
                Some(StreamTruth {
                    stream: st.id,
                    circuit: st.circuit,
                    owner: c.owner,
                    app: st.app,
                    class: st.class?,
                    dst_port: st.destination.port,
                    opened_at: st.opened_at,
                    instrumented: self.overlay.is_instrumented(c.exit()),
                })
            })
            .collect();
        let circuit_owners = self.overlay.circuits().iter().map(|c| c.owner).collect();
        let users = self
            .agents
            .iter()
            .map(|a| {
                let (country, asn) = self.geo[&a.public.ip].clone();
                (
                    a.host,
                    UserTruth {
                        host: a.host,
                        endpoint: a.public,
                        country,
                        asn,
                        behavior: a.behavior,
                    },
                )
            })
            .collect();

        let publics: HashSet<Endpoint> = self.agents.iter().map(|a| a.public).collect();
        let mut untruthful = 0;
        for swarm in self
            .trackers
            .iter()
            .flat_map(|(_, t)| t.swarms())
            .chain(self.dht.swarms())
        {
            untruthful += swarm
                .subscribers()
                .iter()
                .filter(|s| !publics.contains(&s.endpoint))
                .count() as u64;
        }
        self.stats.untruthful_subscriptions = untruthful;
        self.stats.dht_messages = self.dht.messages().len() as u64;
        self.stats.dht_messages_from_exits = self
            .dht
            .messages()
            .iter()
            .filter(|m| self.exit_list.contains(&m.from.ip))
            .count() as u64;

        RunOutput {
            config: self.cfg,
            truth: GroundTruth {
                streams,
                circuit_owners,
                users,
            },
            adversary: self.adversary.finish(),
            catalog,
            snapshots: self.snapshots,
            event_log,
            stats: self.stats,
            exit_addresses: self.exit_list,
            geo: self.geo,
        }
    }
}

fn web_payload(dest: Endpoint, rng: &mut SimRng) -> Vec<u8> {
    if dest.port == 443 {
        // TLS record header followed by an opaque hello.
        let mut v = vec![0x16, 0x03, 0x01, 0x00, 0xc8];
        let mut body = vec![0u8; 200];
        rng.fill(&mut body[..]);
        v.extend_from_slice(&body);
        v
    } else {
        let page: u32 = rng.gen_range(0..10_000);
        format!(
            "GET /page/{page} HTTP/1.1\r\nHost: {}\r\nAccept: */*\r\n\r\n",
            dest.ip
        )
        .into_bytes()
    }
}
