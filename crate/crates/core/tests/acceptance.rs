//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails.
//!
//! Memory, startup and CPU figures come from child processes (this binary
//! re-executed with `STGEN_ACCEPTANCE_PROBE` set) so each measurement sees
//! a clean process. The 60 s experiments share one time window.
//!
//! Run: `cargo test -p stgen-core --test acceptance`

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stgen_core::analytics::{
    compute_delay_stats, deltas_by_stream, read_ndjson, render_table, type_totals, CaptureRecord,
    TableRow,
};
use stgen_core::client::{subscribe_and_receive, ClientConfig, ClientReport};
use stgen_core::clock::Shutdown;
use stgen_core::impairment::{Bandwidth, ImpairmentConfig};
use stgen_core::node::{open_ndjson, ArchiveRecord, CoreConfig, CoreNode, CoreReport, NodeKind};
use stgen_core::sensor::{
    launch_fleet, BaseIntervals, FleetConfig, Generator, GeneratorConfig, RatePercent,
    SensorReport, SensorSpec, SensorType,
};
use stgen_core::wire::{decode_document, encode_document, json_size_ratio, Document, Value};

const PROBE_ENV: &str = "STGEN_ACCEPTANCE_PROBE";
const SEED: u64 = 20_240_601;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(name: &'static str, pass: bool, detail: String) -> Outcome {
    println!("{} {name:<26} {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { name, pass, detail }
}

fn loopback() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn spec(t: SensorType, count: usize, rate: u32) -> SensorSpec {
    SensorSpec {
        sensor_type: t,
        count,
        rate_percent: RatePercent::new(rate).unwrap(),
    }
}

/// `n` sensors split as evenly as possible over the five types.
fn mixed(n: usize) -> Vec<SensorSpec> {
    SensorType::ALL
        .iter()
        .enumerate()
        .map(|(i, t)| spec(*t, n / 5 + usize::from(i < n % 5), 100))
        .filter(|s| s.count > 0)
        .collect()
}

fn fleet(
    specs: Vec<SensorSpec>,
    core: SocketAddr,
    sim_time: Duration,
    base: BaseIntervals,
) -> FleetConfig {
    FleetConfig {
        specs,
        core_addr: core,
        sim_time,
        base_intervals: base,
        generator: GeneratorConfig::default(),
        seed: SEED,
        jitter: false,
        impairment: ImpairmentConfig::default(),
    }
}

async fn start_core(dir: &Path, impairment: ImpairmentConfig) -> CoreNode {
    let mut cfg = CoreConfig::new(loopback(), loopback(), dir);
    cfg.impairment = impairment;
    CoreNode::start(cfg).await.expect("core starts")
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    read_ndjson(open_ndjson(path).expect("output exists")).expect("output parses")
}

/// A client that runs until told to stop.
fn spawn_client(
    dir: &Path,
    core: SocketAddr,
    sensor_id: &str,
) -> (
    stgen_core::clock::ShutdownTrigger,
    tokio::task::JoinHandle<ClientReport>,
) {
    let mut cfg = ClientConfig::new(dir.join(format!("client-{sensor_id}")), core, sensor_id);
    cfg.sim_time = Some(Duration::from_secs(3600));
    let (trigger, shutdown) = Shutdown::new();
    let task = tokio::spawn(async move {
        subscribe_and_receive(&cfg, shutdown)
            .await
            .expect("client runs")
    });
    (trigger, task)
}

// ---------------------------------------------------------------- probes

fn proc_status_kib(field: &str) -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with(field))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

/// Child mode. Prints one JSON line on stdout.
fn run_probe(probe: &str) -> ExitCode {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let mut parts = probe.split(':');
    match (parts.next(), parts.next(), parts.next()) {
        (Some("fleet"), Some(n), None) => {
            let n: usize = n.parse().unwrap();
            rt.block_on(fleet_probe(n));
        }
        (Some("cpu"), Some(n), Some(core)) => {
            let n: usize = n.parse().unwrap();
            let core: SocketAddr = parts
                .fold(core.to_owned(), |a, p| a + ":" + p)
                .parse()
                .unwrap();
            rt.block_on(cpu_probe(n, core));
        }
        _ => {
            eprintln!("unknown probe {probe:?}");
            return ExitCode::FAILURE;
        }
    }
    // Skip teardown of thousands of tasks; the numbers are already out.
    std::process::exit(0);
}

/// Core, one client and `n` mixed sensors in this process.
async fn fleet_probe(n: usize) {
    let dir = tempfile::tempdir().unwrap();
    let core = start_core(dir.path(), ImpairmentConfig::default()).await;
    let (_stop, _client) = spawn_client(dir.path(), core.client_addr(), "temp_1");
    let cfg = fleet(
        mixed(n),
        core.sensor_addr(),
        Duration::from_secs(60),
        BaseIntervals::default(),
    );
    let f = launch_fleet(&cfg, Shutdown::never())
        .await
        .expect("fleet starts");
    let startup = f.report.startup_duration;
    tokio::time::sleep(Duration::from_secs(3)).await;
    let line = serde_json::json!({
        "n": n,
        "startup_s": startup.as_secs_f64(),
        "rss_kib": proc_status_kib("VmRSS:"),
        "hwm_kib": proc_status_kib("VmHWM:"),
    });
    println!("{line}");
}

/// Only the fleet lives here; the core is in the parent.
async fn cpu_probe(n: usize, core: SocketAddr) {
    let cfg = fleet(
        mixed(n),
        core,
        Duration::from_secs(120),
        BaseIntervals::default(),
    );
    let f = launch_fleet(&cfg, Shutdown::never())
        .await
        .expect("fleet starts");
    println!("{}", serde_json::json!({ "ready": f.report.node_count }));
    let _ = f.join().await;
}

fn spawn_probe(probe: &str) -> Child {
    Command::new(std::env::current_exe().unwrap())
        .env(PROBE_ENV, probe)
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .expect("spawn probe")
}

fn probe_line(child: &mut Child) -> serde_json::Value {
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap())
        .read_line(&mut line)
        .expect("probe output");
    serde_json::from_str(&line).unwrap_or_else(|e| panic!("bad probe line {line:?}: {e}"))
}

fn cpu_ticks(pid: u32) -> Option<u64> {
    let stat = std::fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    let rest = &stat[stat.rfind(')')? + 2..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    // utime and stime are fields 14 and 15 of the full line.
    Some(fields.get(11)?.parse::<u64>().ok()? + fields.get(12)?.parse::<u64>().ok()?)
}

fn self_cpu() -> Duration {
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut usage) };
    let tv = |t: libc::timeval| Duration::new(t.tv_sec as u64, t.tv_usec as u32 * 1000);
    tv(usage.ru_utime) + tv(usage.ru_stime)
}

// ------------------------------------------------------- phase 1: scaling

fn scaling() -> Vec<Outcome> {
    let mut probes: BTreeMap<usize, serde_json::Value> = BTreeMap::new();
    for n in [450, 500, 1000, 2000] {
        let mut child = spawn_probe(&format!("fleet:{n}"));
        probes.insert(n, probe_line(&mut child));
        let _ = child.wait();
    }
    let startup = |n: usize| probes[&n]["startup_s"].as_f64().unwrap();
    let rss = |n: usize| probes[&n]["rss_kib"].as_u64().unwrap() as f64 * 1024.0;
    let hwm = |n: usize| probes[&n]["hwm_kib"].as_u64().unwrap() as f64 * 1024.0;
    let mb = |b: f64| b / (1024.0 * 1024.0);
    let gib = 1024.0 * 1024.0 * 1024.0;

    let mut out = Vec::new();
    let (s500, s2000) = (startup(500), startup(2000));
    out.push(report(
        "startup_scaling",
        s500 <= 5.0 && s2000 <= 20.0,
        format!("500 sensors {s500:.3} s (limit 5), 2000 sensors {s2000:.3} s (limit 20)"),
    ));

    let r500_ratio = rss(1000) / rss(500);
    let r1000_ratio = rss(2000) / rss(1000);
    let pass =
        hwm(450) <= 2.56 * 1e9 && hwm(1000) <= gib && r500_ratio <= 2.2 && r1000_ratio <= 2.2;
    out.push(report(
        "memory_footprint",
        pass,
        format!(
            "peak RSS 450 {:.1} MiB (limit 2.56 GB), 1000 {:.1} MiB (limit 1 GiB); \
             RSS 500/1000/2000 = {:.1}/{:.1}/{:.1} MiB, ratios {r500_ratio:.3} {r1000_ratio:.3} (limit 2.2); \
             per-sensor increment 1000->2000 {:.1} KiB",
            mb(hwm(450)),
            mb(hwm(1000)),
            mb(rss(500)),
            mb(rss(1000)),
            mb(rss(2000)),
            (rss(2000) - rss(1000)) / 1000.0 / 1024.0,
        ),
    ));
    out
}

// ----------------------------------------------------------- phase 2: cpu

async fn idle_cpu() -> Outcome {
    const WARMUP: Duration = Duration::from_secs(30);
    const WINDOW: Duration = Duration::from_secs(60);
    let dir = tempfile::tempdir().unwrap();
    let core = start_core(dir.path(), ImpairmentConfig::default()).await;
    let mut child = spawn_probe(&format!("cpu:1000:{}", core.sensor_addr()));
    let ready = tokio::task::block_in_place(|| probe_line(&mut child));
    assert_eq!(ready["ready"], 1000);
    let pid = child.id();
    tokio::time::sleep(WARMUP).await;
    let (t0, c0, p0) = (Instant::now(), cpu_ticks(pid), self_cpu());
    tokio::time::sleep(WINDOW).await;
    let (t1, c1, p1) = (Instant::now(), cpu_ticks(pid), self_cpu());
    let _ = child.kill();
    let _ = child.wait();
    let report_core = core.shutdown().await;

    let hz = unsafe { libc::sysconf(libc::_SC_CLK_TCK) } as f64;
    let wall = (t1 - t0).as_secs_f64();
    let (Some(c0), Some(c1)) = (c0, c1) else {
        return report("idle_cpu", false, "cannot read /proc/<pid>/stat".into());
    };
    let fleet_pct = (c1 - c0) as f64 / hz / wall * 100.0;
    let core_pct = (p1 - p0).as_secs_f64() / wall * 100.0;
    report(
        "idle_cpu",
        fleet_pct < 10.0,
        format!(
            "1000-sensor fleet process {fleet_pct:.2}% of one core over {:.0} s after {:.0} s warmup \
             (limit 10%); core process {core_pct:.2}% while ingesting {} packets",
            wall,
            WARMUP.as_secs_f64(),
            report_core.packets_ingested
        ),
    )
}

// ------------------------------------------------- phase 3: experiments

struct DelayRun {
    label: &'static str,
    impairment: ImpairmentConfig,
    client: ClientReport,
}

async fn delay_rig(
    label: &'static str,
    bandwidth: Bandwidth,
    loss_prob: f64,
    dir: &Path,
) -> DelayRun {
    let impairment = ImpairmentConfig {
        bandwidth,
        loss_prob,
        base_latency: Duration::ZERO,
        rng_seed: SEED,
    };
    let core = start_core(&dir.join(label), impairment).await;
    let (stop, client) = spawn_client(&dir.join(label), core.client_addr(), "temp_1");
    tokio::time::sleep(Duration::from_millis(300)).await;
    let cfg = fleet(
        vec![spec(SensorType::Temp, 1, 100)],
        core.sensor_addr(),
        Duration::from_secs(60),
        BaseIntervals::default(),
    );
    let _ = launch_fleet(&cfg, Shutdown::never())
        .await
        .unwrap()
        .join()
        .await;
    tokio::time::sleep(Duration::from_secs(1)).await;
    stop.trigger();
    let client = client.await.unwrap();
    core.shutdown().await;
    DelayRun {
        label,
        impairment,
        client,
    }
}

fn delay_ordering(runs: &[DelayRun]) -> Outcome {
    let get = |label: &str| runs.iter().find(|r| r.label == label).unwrap();
    let stats = |label: &str| get(label).client.transit.expect("delay samples");
    let (u, a5, b5) = (stats("unbounded_0"), stats("100k_5"), stats("10k_5"));
    let var_100k = stats("100k_5").variance.max(stats("100k_10").variance);
    let var_10k = stats("10k_5").variance.min(stats("10k_10").variance);
    let rows: Vec<TableRow> = runs
        .iter()
        .enumerate()
        .map(|(i, r)| TableRow {
            client: format!("Client {}", i + 1),
            impairment: r.impairment,
            stats: r.client.transit.expect("delay samples"),
        })
        .collect();
    let mut detail = format!(
        "mean unbounded {:.6} s < 100k/5% {:.6} s < 10k/5% {:.6} s; unbounded limit 0.005 s; \
         min 10k variance {var_10k:.3e} > max 100k variance {var_100k:.3e}; samples {}/{}/{}",
        u.mean, a5.mean, b5.mean, u.count, a5.count, b5.count
    );
    for line in render_table(&rows).lines() {
        let _ = write!(detail, "\n      {line}");
    }
    report(
        "delay_ordering",
        u.mean < a5.mean && a5.mean < b5.mean && u.mean <= 0.005 && var_10k > var_100k,
        detail,
    )
}

async fn retrieval_latency(dir: &Path) -> Outcome {
    let core = start_core(&dir.join("retrieval"), ImpairmentConfig::default()).await;
    let mut base = BaseIntervals::default();
    base.set(SensorType::Temp, Duration::from_millis(100));
    let cfg = fleet(
        vec![spec(SensorType::Temp, 1, 100)],
        core.sensor_addr(),
        Duration::from_secs(30),
        base,
    );
    let f = launch_fleet(&cfg, Shutdown::never()).await.unwrap();
    tokio::time::sleep(Duration::from_millis(500)).await;
    let mut latencies = Vec::new();
    for trial in 0..20 {
        let mut ccfg = ClientConfig::new(
            dir.join(format!("retrieval-{trial}")),
            core.client_addr(),
            "temp_1",
        );
        ccfg.sim_time = Some(Duration::from_millis(400));
        let r = subscribe_and_receive(&ccfg, Shutdown::never())
            .await
            .unwrap();
        latencies.push(
            r.first_data_latency
                .map_or(f64::INFINITY, |d| d.as_secs_f64()),
        );
    }
    let mut sorted = latencies.clone();
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[9] + sorted[10]) / 2.0;
    let mut f = f;
    f.abort();
    core.shutdown().await;
    report(
        "retrieval_latency",
        median <= 0.150,
        format!(
            "median {:.1} ms over 20 trials at 10 Hz (limit 150 ms); min {:.1} ms, max {:.1} ms",
            median * 1e3,
            sorted[0] * 1e3,
            sorted[19] * 1e3
        ),
    )
}

const RATES: [u32; 4] = [100, 50, 25, 1];

/// Four temp sensors at P = 100/50/25/1 on a 1 s base interval. Returns
/// per-sensor counts seen by the core and the sensors' own reports.
async fn rate_rig(sim_secs: u64, dir: &Path) -> (Vec<SensorReport>, CoreReport) {
    let core = start_core(
        &dir.join(format!("rate-{sim_secs}")),
        ImpairmentConfig::default(),
    )
    .await;
    let specs = RATES
        .iter()
        .map(|p| spec(SensorType::Temp, 1, *p))
        .collect();
    let cfg = fleet(
        specs,
        core.sensor_addr(),
        Duration::from_secs(sim_secs),
        BaseIntervals::uniform(Duration::from_secs(1)),
    );
    let reports = launch_fleet(&cfg, Shutdown::never())
        .await
        .unwrap()
        .join()
        .await;
    tokio::time::sleep(Duration::from_millis(300)).await;
    (reports, core.shutdown().await)
}

fn rate_formula(reports: &[SensorReport], core: &CoreReport) -> Outcome {
    let s = 20.0;
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, p) in RATES.iter().enumerate() {
        let id = SensorType::Temp.sensor_id(i + 1);
        let seen = core
            .registry
            .iter()
            .find(|e| e.node_id == id)
            .map_or(0, |e| e.packets);
        let interval = 100.0 / *p as f64;
        let expected = (s / interval).floor() as i64;
        let ok = (seen as i64 - expected).abs() <= 1;
        pass &= ok;
        let sent = reports
            .iter()
            .find(|r| r.sensor_id == id)
            .map_or(0, |r| r.packets_sent);
        parts.push(format!(
            "P={p}: received {seen} sent {sent} expected {expected}±1"
        ));
    }
    report("rate_formula", pass, parts.join("; "))
}

fn exec_time(runs: &[(u64, Vec<SensorReport>)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (s, reports) in runs {
        for (i, p) in RATES.iter().enumerate() {
            let id = SensorType::Temp.sensor_id(i + 1);
            let r = reports.iter().find(|r| r.sensor_id == id).unwrap();
            let interval = 100.0 / *p as f64;
            let t = r.runtime.as_secs_f64();
            let ok = (t - *s as f64).abs() <= interval;
            pass &= ok;
            parts.push(format!("S={s} P={p}: {t:.3} s"));
        }
    }
    report(
        "execution_time",
        pass,
        format!("{} (tolerance ± I')", parts.join(", ")),
    )
}

async fn distribution(dir: &Path) -> Outcome {
    let core = start_core(&dir.join("distribution"), ImpairmentConfig::default()).await;
    let specs = SensorType::ALL.iter().map(|t| spec(*t, 4, 100)).collect();
    let cfg = fleet(
        specs,
        core.sensor_addr(),
        Duration::from_secs(60),
        BaseIntervals::default(),
    );
    let reports = launch_fleet(&cfg, Shutdown::never())
        .await
        .unwrap()
        .join()
        .await;
    tokio::time::sleep(Duration::from_millis(500)).await;
    let core_report = core.shutdown().await;
    let capture: Vec<CaptureRecord> = read(core_report.capture_path.as_ref().unwrap());
    let totals = type_totals(&capture);
    let camera = totals.get(&SensorType::Camera).map_or(0, |t| t.bytes);
    let dominant = totals
        .iter()
        .all(|(t, v)| *t == SensorType::Camera || v.bytes < camera);

    let mut per_sensor: HashMap<&str, i64> = HashMap::new();
    for r in &capture {
        *per_sensor.entry(&r.sensor_id).or_default() += 1;
    }
    let base = BaseIntervals::default();
    let mut counts_ok = true;
    for t in [SensorType::Gps, SensorType::Switch] {
        let expected = (60.0 / base.get(t).as_secs_f64()).floor() as i64;
        for i in 1..=4 {
            let got = per_sensor
                .get(t.sensor_id(i).as_str())
                .copied()
                .unwrap_or(0);
            counts_ok &= (got - expected).abs() <= 1;
        }
    }
    let mut detail = String::new();
    for (t, v) in &totals {
        let _ = write!(detail, "{}: {} pkts {} B; ", t.as_str(), v.packets, v.bytes);
    }
    let sent: u64 = reports.iter().map(|r| r.packets_sent).sum();
    let _ = write!(
        detail,
        "gps/switch per-sensor counts within ±1 of 120/12: {counts_ok}; {} captured of {sent} sent",
        capture.len()
    );
    report("distribution_dominance", dominant && counts_ok, detail)
}

async fn end_to_end(dir: &Path) -> Outcome {
    let core = start_core(&dir.join("e2e"), ImpairmentConfig::default()).await;
    let subscribed = ["temp_1", "gps_1", "camera_1"];
    let clients: Vec<_> = subscribed
        .iter()
        .map(|id| spawn_client(&dir.join("e2e"), core.client_addr(), id))
        .collect();
    tokio::time::sleep(Duration::from_millis(300)).await;
    let specs = vec![
        spec(SensorType::Temp, 3, 100),
        spec(SensorType::Humidity, 2, 50),
        spec(SensorType::Gps, 2, 100),
        spec(SensorType::Camera, 1, 100),
        spec(SensorType::Switch, 2, 100),
    ];
    let cfg = fleet(
        specs,
        core.sensor_addr(),
        Duration::from_secs(60),
        BaseIntervals::default(),
    );
    let reports = launch_fleet(&cfg, Shutdown::never())
        .await
        .unwrap()
        .join()
        .await;
    tokio::time::sleep(Duration::from_secs(1)).await;
    let mut client_reports = Vec::new();
    for (stop, task) in clients {
        stop.trigger();
        client_reports.push(task.await.unwrap());
    }
    let core_report = core.shutdown().await;

    let sent: u64 = reports.iter().map(|r| r.packets_sent).sum();
    let archive: Vec<ArchiveRecord> = read(core_report.archive_path.as_ref().unwrap());
    let capture: Vec<CaptureRecord> = read(core_report.capture_path.as_ref().unwrap());
    let mut pass = archive.len() as u64 == sent && capture.len() as u64 == sent;
    let mut parts = vec![format!(
        "archive {} lines, capture {} lines, sensors sent {sent}",
        archive.len(),
        capture.len()
    )];
    for c in &client_reports {
        let sensor_sent = reports
            .iter()
            .find(|r| r.sensor_id == c.sensor_id)
            .unwrap()
            .packets_sent;
        let lines = read::<serde_json::Value>(&c.log_path).len() as u64;
        pass &= c.packets_received == sensor_sent && lines == c.packets_received;
        parts.push(format!(
            "{} client {} / sensor {sensor_sent}",
            c.sensor_id, c.packets_received
        ));
    }
    let registry_ok = core_report
        .registry
        .iter()
        .filter(|e| e.kind == NodeKind::Sensor)
        .all(|e| archive.iter().filter(|r| r.sensor_id == e.node_id).count() as u64 == e.packets);
    pass &= registry_ok;
    let mut invariants = true;
    for deltas in deltas_by_stream(&capture).values() {
        let s = compute_delay_stats(deltas).unwrap();
        invariants &= s.min <= s.mean
            && s.mean <= s.max
            && s.variance >= 0.0
            && s.min <= s.p95
            && s.p95 <= s.max
            && (s.stddev * s.stddev - s.variance).abs() <= 1e-12 * s.variance.max(1e-300);
    }
    pass &= invariants;
    parts.push(format!("registry counters match archive: {registry_ok}; capture DelayStats invariants: {invariants}"));
    report("end_to_end_accounting", pass, parts.join("; "))
}

// ------------------------------------------------------ codec and sizes

fn json_ratio() -> Outcome {
    let mut corpus: BTreeMap<SensorType, Vec<Document>> = BTreeMap::new();
    for (k, t) in SensorType::ALL.iter().enumerate() {
        let mut g = Generator::new(t.sensor_id(1), *t, SEED + k as u64);
        let docs = (0..100)
            .map(|i| {
                stgen_core::wire::Packet::Data(g.next_packet(1_700_000_000_000 + i * 1000))
                    .to_document()
            })
            .collect();
        corpus.insert(*t, docs);
    }
    let all: Vec<&Document> = corpus.values().flatten().collect();
    let overall = json_size_ratio(all).unwrap();
    let per_type: Vec<String> = corpus
        .iter()
        .map(|(t, docs)| format!("{} {:.3}", t.as_str(), json_size_ratio(docs).unwrap()))
        .collect();
    report(
        "serialization_size",
        (0.61..=0.91).contains(&overall),
        format!(
            "mixed corpus ratio {overall:.3} (band 0.61..0.91); per type: {}",
            per_type.join(", ")
        ),
    )
}

fn random_value(rng: &mut ChaCha8Rng, depth: usize) -> Value {
    match rng.gen_range(0..if depth < 4 { 8 } else { 7 }) {
        0 => Value::Double(f64::from_bits(rng.gen())),
        1 => {
            let len = rng.gen_range(0..20);
            Value::String(
                (0..len)
                    .map(|_| rng.gen_range('\u{1}'..='\u{2FF}'))
                    .collect(),
            )
        }
        2 => {
            let mut b = vec![0u8; rng.gen_range(0..64)];
            rng.fill_bytes(&mut b);
            Value::Binary(b)
        }
        3 => Value::Boolean(rng.gen()),
        4 => Value::DateTime(rng.gen()),
        5 => Value::Int32(rng.gen()),
        6 => Value::Int64(rng.gen()),
        _ => Value::Document(random_document(rng, depth + 1)),
    }
}

fn random_document(rng: &mut ChaCha8Rng, depth: usize) -> Document {
    (0..rng.gen_range(0..8))
        .map(|i| {
            (
                format!("f{i}_{}", rng.gen::<u16>()),
                random_value(rng, depth),
            )
        })
        .collect()
}

fn codec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut round_trip_failures = 0;
    for _ in 0..10_000 {
        let doc = random_document(&mut rng, 0);
        let ok = encode_document(&doc)
            .ok()
            .and_then(|b| decode_document(&b).ok())
            .is_some_and(|back| back == doc);
        round_trip_failures += usize::from(!ok);
    }

    let valid = encode_document(&random_document(&mut rng, 0)).unwrap();
    let prev_hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut crashes = 0;
    for i in 0..100_000 {
        let input = if i % 2 == 0 {
            let mut b = vec![0u8; rng.gen_range(0..=128)];
            rng.fill_bytes(&mut b);
            b
        } else {
            let mut b = valid.clone();
            let at = rng.gen_range(0..b.len());
            b[at] = rng.gen();
            b
        };
        if panic::catch_unwind(AssertUnwindSafe(|| {
            let _ = decode_document(&input);
            let _ = stgen_core::wire::Packet::decode(&input);
        }))
        .is_err()
        {
            crashes += 1;
        }
    }
    panic::set_hook(prev_hook);

    let golden_empty = encode_document(&Document::new()).unwrap() == [0x05, 0, 0, 0, 0];
    let golden_a = encode_document(&Document::new().with("a", Value::Int32(1))).unwrap()
        == [0x0C, 0, 0, 0, 0x10, 0x61, 0, 0x01, 0, 0, 0, 0];
    report(
        "codec_correctness",
        round_trip_failures == 0 && crashes == 0 && golden_empty && golden_a,
        format!(
            "10000 round-trips, {round_trip_failures} failures; 100000 fuzz inputs, {crashes} crashes; \
             golden vectors {}",
            if golden_empty && golden_a { "match" } else { "MISMATCH" }
        ),
    )
}

// ------------------------------------------------------------------ main

async fn experiments() -> Vec<Outcome> {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let delays = async {
        let runs = tokio::join!(
            delay_rig("unbounded_0", Bandwidth::Unbounded, 0.0, d),
            delay_rig("100k_5", Bandwidth::Bps(100_000), 0.05, d),
            delay_rig("100k_10", Bandwidth::Bps(100_000), 0.10, d),
            delay_rig("10k_5", Bandwidth::Bps(10_000), 0.05, d),
            delay_rig("10k_10", Bandwidth::Bps(10_000), 0.10, d),
        );
        delay_ordering(&[runs.0, runs.1, runs.2, runs.3, runs.4])
    };
    let rates = async {
        let ((r20, core20), (r5, _)) = tokio::join!(rate_rig(20, d), rate_rig(5, d));
        let rate = rate_formula(&r20, &core20);
        let exec = exec_time(&[(5, r5), (20, r20)]);
        let latency = retrieval_latency(d).await;
        vec![rate, exec, latency]
    };
    let (delay, rates, dist, e2e) = tokio::join!(delays, rates, distribution(d), end_to_end(d));
    let mut out = vec![delay];
    out.extend(rates);
    out.push(dist);
    out.push(e2e);
    out
}

fn main() -> ExitCode {
    if let Ok(probe) = std::env::var(PROBE_ENV) {
        return run_probe(&probe);
    }
    let started = Instant::now();
    println!("acceptance: sensor traffic generator\n");
    let mut results = vec![codec(), json_ratio()];
    results.extend(scaling());
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    results.push(rt.block_on(idle_cpu()));
    results.extend(rt.block_on(experiments()));

    let failed: Vec<&Outcome> = results.iter().filter(|r| !r.pass).collect();
    println!(
        "\n{} criteria, {} passed, {} failed ({:.0} s)",
        results.len(),
        results.len() - failed.len(),
        failed.len(),
        started.elapsed().as_secs_f64()
    );
    for f in &failed {
        println!(
            "failed: {} ({})",
            f.name,
            f.detail.lines().next().unwrap_or("")
        );
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
