//! Local mock translation service and its black-box client.
//!
//! The service answers translate requests over a length-prefixed text
//! protocol on a loopback TCP socket, one request at a time. Server-side
//! latency is simulated (`server_time = c0 + c1 * decode_steps`, or a
//! near-zero constant on a cache hit); the client adds simulated network
//! latency on top, so a whole attack run is hermetic and reproducible. A
//! real-sleep mode exists for live demos only.
//!
//! Wire format, both directions: a big-endian u32 byte length followed by
//! that many bytes of UTF-8. Requests carry the text to translate.
//! Responses are `key=value` lines:
//!
//! ```text
//! status=ok
//! server_time=<seconds>
//! confidence=<0..1>
//! translation=<text>
//! ```
//!
//! or `status=rejected` with an `error=<message>` line.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use sponge_core::attacks::{Evaluation, FitnessSource, FitnessValue};
use sponge_core::defense::{guarded_infer, ConsumptionProfile, GuardedInference};
use sponge_core::measure::LatencySample;
use sponge_core::nlp::{detokenize, TextPipeline};
use sponge_core::SpongeRng;
use thiserror::Error;

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    /// LRU cache entries; 0 disables caching.
    pub cache_capacity: usize,
    /// One-way simulated network latency added by the client.
    pub base_network_latency_s: f64,
    /// Uniform client-side jitter in [0, jitter).
    pub network_jitter_s: f64,
    /// Fixed server cost per request (c0).
    pub service_base_latency_s: f64,
    /// Server cost per decode step (c1).
    pub per_decode_step_latency_s: f64,
    /// Server time reported on a cache hit.
    pub cache_hit_latency_s: f64,
    pub max_input_chars: usize,
    /// Sleep for the simulated durations (demo mode).
    pub real_sleep: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            cache_capacity: 1024,
            base_network_latency_s: 2.5e-4,
            network_jitter_s: 1e-4,
            service_base_latency_s: 5e-4,
            per_decode_step_latency_s: 1e-3,
            cache_hit_latency_s: 1e-6,
            max_input_chars: 50,
            real_sleep: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationResponse {
    pub translation: String,
    pub confidence: f64,
    /// Server-reported processing time, seconds.
    pub server_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServiceReply {
    Ok(TranslationResponse),
    Rejected { reason: String },
}

struct CacheEntry {
    translation: String,
    confidence: f64,
    last_used: u64,
}

/// Single-threaded request processor.
struct ServiceState {
    pipeline: TextPipeline,
    config: ServiceConfig,
    guard: Option<ConsumptionProfile>,
    cache: HashMap<String, CacheEntry>,
    tick: u64,
    served: u64,
}

impl ServiceState {
    fn respond(&mut self, text: &str) -> ServiceReply {
        self.tick += 1;
        self.served += 1;
        if text.chars().count() > self.config.max_input_chars {
            return ServiceReply::Rejected {
                reason: format!(
                    "input exceeds {} characters",
                    self.config.max_input_chars
                ),
            };
        }

        if self.config.cache_capacity > 0 {
            if let Some(entry) = self.cache.get_mut(text) {
                entry.last_used = self.tick;
                return ServiceReply::Ok(TranslationResponse {
                    translation: entry.translation.clone(),
                    confidence: entry.confidence,
                    server_time_s: self.config.cache_hit_latency_s,
                });
            }
        }

        // Cutoff guard, when configured, wraps inference on the serving path.
        if let Some(profile) = &self.guard {
            match guarded_infer(&self.pipeline, text, profile) {
                Ok(GuardedInference::Rejected { steps_completed, .. }) => {
                    return ServiceReply::Rejected {
                        reason: format!(
                            "cost threshold exceeded after {steps_completed} steps"
                        ),
                    };
                }
                Ok(GuardedInference::Completed { translation, .. }) => {
                    return self.reply_from(text, translation);
                }
                Err(e) => {
                    return ServiceReply::Rejected {
                        reason: e.to_string(),
                    }
                }
            }
        }

        match self.pipeline.evaluate(text) {
            Ok(run) => self.reply_from(text, run.translation),
            Err(e) => ServiceReply::Rejected {
                reason: e.to_string(),
            },
        }
    }

    fn reply_from(
        &mut self,
        text: &str,
        translation: sponge_core::nlp::Translation,
    ) -> ServiceReply {
        let rendered = detokenize(&translation.output.ids, &self.pipeline.vocab)
            .unwrap_or_default();
        let server_time = self.config.service_base_latency_s
            + self.config.per_decode_step_latency_s * translation.dims.l_tout as f64;
        if self.config.cache_capacity > 0 {
            self.cache.insert(
                text.to_string(),
                CacheEntry {
                    translation: rendered.clone(),
                    confidence: translation.confidence,
                    last_used: self.tick,
                },
            );
            if self.cache.len() > self.config.cache_capacity {
                if let Some(oldest) = self
                    .cache
                    .iter()
                    .min_by_key(|(_, e)| e.last_used)
                    .map(|(k, _)| k.clone())
                {
                    self.cache.remove(&oldest);
                }
            }
        }
        ServiceReply::Ok(TranslationResponse {
            translation: rendered,
            confidence: translation.confidence,
            server_time_s: server_time,
        })
    }
}

/// Handle to a running service; dropping it leaves the thread running, call
/// [`ServiceHandle::shutdown`] for a clean stop.
pub struct ServiceHandle {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<u64>>,
}

impl ServiceHandle {
    /// Stop the accept loop and return how many requests were served.
    pub fn shutdown(mut self) -> u64 {
        self.stop.store(true, Ordering::SeqCst);
        // Unblock accept() with a throwaway connection.
        let _ = TcpStream::connect(self.addr);
        self.thread
            .take()
            .map(|t| t.join().unwrap_or(0))
            .unwrap_or(0)
    }
}

/// Bind a loopback listener (port 0 for ephemeral) and serve requests one
/// at a time on a background thread.
pub fn serve(
    pipeline: TextPipeline,
    config: ServiceConfig,
    guard: Option<ConsumptionProfile>,
    port: u16,
) -> Result<ServiceHandle, ServiceError> {
    let listener = TcpListener::bind(("127.0.0.1", port)).map_err(ServiceError::Bind)?;
    let addr = listener.local_addr().map_err(ServiceError::Bind)?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = stop.clone();

    let mut state = ServiceState {
        pipeline,
        config,
        guard,
        cache: HashMap::new(),
        tick: 0,
        served: 0,
    };

    let thread = std::thread::spawn(move || {
        for stream in listener.incoming() {
            if stop_flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(mut stream) = stream else { continue };
            let Ok(text) = read_frame(&mut stream) else {
                continue;
            };
            let reply = state.respond(&text);
            if state.config.real_sleep {
                let server_time = match &reply {
                    ServiceReply::Ok(r) => r.server_time_s,
                    ServiceReply::Rejected { .. } => state.config.service_base_latency_s,
                };
                std::thread::sleep(Duration::from_secs_f64(server_time));
            }
            let _ = write_frame(&mut stream, &encode_reply(&reply));
        }
        state.served
    });

    Ok(ServiceHandle {
        addr,
        stop,
        thread: Some(thread),
    })
}

fn read_frame(stream: &mut TcpStream) -> std::io::Result<String> {
    let mut len_buf = [0u8; 4];
    stream.read_exact(&mut len_buf)?;
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > 1 << 20 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "oversized frame",
        ));
    }
    let mut body = vec![0u8; len];
    stream.read_exact(&mut body)?;
    String::from_utf8(body)
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidData, "invalid utf-8"))
}

fn write_frame(stream: &mut TcpStream, body: &str) -> std::io::Result<()> {
    let bytes = body.as_bytes();
    stream.write_all(&(bytes.len() as u32).to_be_bytes())?;
    stream.write_all(bytes)?;
    stream.flush()
}

fn encode_reply(reply: &ServiceReply) -> String {
    match reply {
        ServiceReply::Ok(r) => format!(
            "status=ok\nserver_time={:?}\nconfidence={:?}\ntranslation={}",
            r.server_time_s, r.confidence, r.translation
        ),
        ServiceReply::Rejected { reason } => {
            format!("status=rejected\nerror={reason}")
        }
    }
}

fn decode_reply(body: &str) -> Result<ServiceReply, ServiceError> {
    let mut status = None;
    let mut server_time = None;
    let mut confidence = None;
    let mut translation = None;
    let mut error = None;
    for line in body.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        match key {
            "status" => status = Some(value.to_string()),
            "server_time" => server_time = value.parse::<f64>().ok(),
            "confidence" => confidence = value.parse::<f64>().ok(),
            "translation" => translation = Some(value.to_string()),
            "error" => error = Some(value.to_string()),
            _ => {}
        }
    }
    match status.as_deref() {
        Some("ok") => Ok(ServiceReply::Ok(TranslationResponse {
            translation: translation.unwrap_or_default(),
            confidence: confidence.ok_or(ServiceError::MalformedReply)?,
            server_time_s: server_time.ok_or(ServiceError::MalformedReply)?,
        })),
        Some("rejected") => Ok(ServiceReply::Rejected {
            reason: error.unwrap_or_default(),
        }),
        _ => Err(ServiceError::MalformedReply),
    }
}

/// Black-box client. Refuses non-loopback endpoints unless explicitly
/// overridden; this tooling probes only services you run yourself.
pub struct Client {
    endpoint: SocketAddr,
    base_network_latency_s: f64,
    network_jitter_s: f64,
    rng: SpongeRng,
    allow_remote: bool,
    timeout: Duration,
    /// Simulated round-trips (default); false measures wall-clock instead.
    simulated_network: bool,
    clock_s: f64,
    request_counter: u64,
}

impl Client {
    pub fn new(endpoint: SocketAddr, config: &ServiceConfig, seed: u64) -> Self {
        Client {
            endpoint,
            base_network_latency_s: config.base_network_latency_s,
            network_jitter_s: config.network_jitter_s,
            rng: sponge_core::rng_from_seed(seed),
            allow_remote: false,
            timeout: Duration::from_secs(10),
            simulated_network: !config.real_sleep,
            clock_s: 0.0,
            request_counter: 0,
        }
    }

    /// Permit non-loopback endpoints. Off by default on purpose.
    pub fn allow_remote_endpoints(mut self) -> Self {
        self.allow_remote = true;
        self
    }

    /// One translate round trip: the reply plus the client-observed latency
    /// sample.
    pub fn translate(&mut self, text: &str) -> Result<(ServiceReply, LatencySample), ServiceError> {
        if !ip_is_loopback(&self.endpoint) && !self.allow_remote {
            return Err(ServiceError::NonLoopbackRefused(self.endpoint));
        }
        let wall_start = std::time::Instant::now();
        let mut stream =
            TcpStream::connect_timeout(&self.endpoint, self.timeout).map_err(ServiceError::Connect)?;
        stream
            .set_read_timeout(Some(self.timeout))
            .map_err(ServiceError::Connect)?;
        write_frame(&mut stream, text).map_err(ServiceError::Send)?;
        let body = read_frame(&mut stream).map_err(ServiceError::Recv)?;
        let reply = decode_reply(&body)?;

        let server_time = match &reply {
            ServiceReply::Ok(r) => r.server_time_s,
            ServiceReply::Rejected { .. } => 0.0,
        };
        let round_trip = if self.simulated_network {
            let jitter = if self.network_jitter_s > 0.0 {
                self.rng.gen_range(0.0..self.network_jitter_s)
            } else {
                0.0
            };
            server_time + 2.0 * self.base_network_latency_s + jitter
        } else {
            wall_start.elapsed().as_secs_f64()
        };

        let sample = LatencySample {
            duration_s: round_trip,
            input_id: self.request_counter,
            timestamp_s: self.clock_s,
            ok: matches!(reply, ServiceReply::Ok(_)),
        };
        self.clock_s += round_trip;
        self.request_counter += 1;
        Ok((reply, sample))
    }
}

fn ip_is_loopback(addr: &SocketAddr) -> bool {
    match addr {
        SocketAddr::V4(a) => a.ip().is_loopback(),
        SocketAddr::V6(a) => a.ip().is_loopback(),
    }
}

/// GA fitness over client round-trip latency: the median of `repeats`
/// round trips, damping network jitter. Failed or rejected requests yield
/// an error, which the GA scores as worst fitness.
pub fn blackbox_latency_fitness(
    client: &mut Client,
    repeats: usize,
) -> impl FnMut(&String) -> Result<Evaluation, ServiceError> + '_ {
    let repeats = repeats.max(1);
    move |text: &String| {
        let mut latencies = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let (reply, sample) = client.translate(text)?;
            if let ServiceReply::Rejected { reason } = reply {
                return Err(ServiceError::RequestRejected(reason));
            }
            latencies.push(sample.duration_s);
        }
        latencies.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = latencies[latencies.len() / 2];
        Ok(Evaluation {
            fitness: FitnessValue::new(median, FitnessSource::MeasuredLatency)
                .map_err(|e| ServiceError::RequestRejected(e.to_string()))?,
            class: None,
        })
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("failed to bind service socket: {0}")]
    Bind(#[source] std::io::Error),
    #[error("connect failed: {0}")]
    Connect(#[source] std::io::Error),
    #[error("send failed: {0}")]
    Send(#[source] std::io::Error),
    #[error("receive failed: {0}")]
    Recv(#[source] std::io::Error),
    #[error("malformed reply")]
    MalformedReply,
    #[error("refusing non-loopback endpoint {0} without explicit override")]
    NonLoopbackRefused(SocketAddr),
    #[error("request rejected: {0}")]
    RequestRejected(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use sponge_core::energy::AsicCostModel;
    use sponge_core::zoo;

    fn test_pipeline() -> TextPipeline {
        TextPipeline::new(
            zoo::default_vocab(),
            zoo::toy_translator(7),
            AsicCostModel::default(),
        )
    }

    #[test]
    fn cache_hit_reports_near_zero_server_time() {
        let config = ServiceConfig::default();
        let handle = serve(test_pipeline(), config.clone(), None, 0).unwrap();
        let mut client = Client::new(handle.addr, &config, 1);

        let (first, _) = client.translate("the cat runs far").unwrap();
        let (second, _) = client.translate("the cat runs far").unwrap();
        let (ServiceReply::Ok(a), ServiceReply::Ok(b)) = (first, second) else {
            panic!("expected ok replies");
        };
        assert!(b.server_time_s < a.server_time_s);
        assert_eq!(b.server_time_s, config.cache_hit_latency_s);
        assert_eq!(a.translation, b.translation);
        handle.shutdown();
    }

    #[test]
    fn cache_disabled_repeats_cost_the_same() {
        let config = ServiceConfig {
            cache_capacity: 0,
            ..ServiceConfig::default()
        };
        let handle = serve(test_pipeline(), config.clone(), None, 0).unwrap();
        let mut client = Client::new(handle.addr, &config, 1);
        let (first, _) = client.translate("the cat runs far").unwrap();
        let (second, _) = client.translate("the cat runs far").unwrap();
        let (ServiceReply::Ok(a), ServiceReply::Ok(b)) = (first, second) else {
            panic!("expected ok replies");
        };
        assert_eq!(a.server_time_s, b.server_time_s);
        handle.shutdown();
    }

    #[test]
    fn oversized_input_is_rejected() {
        let config = ServiceConfig::default();
        let handle = serve(test_pipeline(), config.clone(), None, 0).unwrap();
        let mut client = Client::new(handle.addr, &config, 1);
        let long: String = std::iter::repeat('a').take(51).collect();
        let (reply, sample) = client.translate(&long).unwrap();
        assert!(matches!(reply, ServiceReply::Rejected { .. }));
        assert!(!sample.ok);
        handle.shutdown();
    }

    #[test]
    fn zero_jitter_round_trip_is_server_time_plus_two_base_latencies() {
        let config = ServiceConfig {
            network_jitter_s: 0.0,
            cache_capacity: 0,
            ..ServiceConfig::default()
        };
        let handle = serve(test_pipeline(), config.clone(), None, 0).unwrap();
        let mut client = Client::new(handle.addr, &config, 1);
        let (reply, sample) = client.translate("sun and sea").unwrap();
        let ServiceReply::Ok(r) = reply else {
            panic!("expected ok");
        };
        let expected = r.server_time_s + 2.0 * config.base_network_latency_s;
        assert!((sample.duration_s - expected).abs() < 1e-15);
        handle.shutdown();
    }

    #[test]
    fn server_time_never_exceeds_round_trip() {
        let config = ServiceConfig::default();
        let handle = serve(test_pipeline(), config.clone(), None, 0).unwrap();
        let mut client = Client::new(handle.addr, &config, 3);
        let mut rng = sponge_core::rng_from_seed(5);
        let vocab = zoo::default_vocab();
        for _ in 0..20 {
            let text = sponge_core::corpus::random_string(&mut rng, 30, vocab.alphabet());
            let (reply, sample) = client.translate(&text).unwrap();
            if let ServiceReply::Ok(r) = reply {
                assert!(r.server_time_s <= sample.duration_s);
            }
        }
        handle.shutdown();
    }

    #[test]
    fn latency_grows_with_decode_length() {
        let config = ServiceConfig {
            network_jitter_s: 0.0,
            cache_capacity: 0,
            ..ServiceConfig::default()
        };
        let handle = serve(test_pipeline(), config.clone(), None, 0).unwrap();
        let mut client = Client::new(handle.addr, &config, 1);
        // Token bombs of growing length force longer decodes.
        let mut last = 0.0;
        for len in [4usize, 12, 24, 48] {
            let text: String = "q/zx".chars().cycle().take(len).collect();
            let (_, sample) = client.translate(&text).unwrap();
            assert!(
                sample.duration_s > last,
                "latency did not grow at len {len}"
            );
            last = sample.duration_s;
        }
        handle.shutdown();
    }

    #[test]
    fn non_loopback_endpoint_is_refused() {
        let config = ServiceConfig::default();
        let mut client = Client::new("192.0.2.1:9999".parse().unwrap(), &config, 1);
        match client.translate("hello") {
            Err(ServiceError::NonLoopbackRefused(_)) => {}
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn median_of_three_suppresses_one_outlier() {
        // First request misses the cache (slow), later ones hit (fast): the
        // median of three lands on the fast path.
        let config = ServiceConfig {
            network_jitter_s: 0.0,
            ..ServiceConfig::default()
        };
        let handle = serve(test_pipeline(), config.clone(), None, 0).unwrap();
        let mut client = Client::new(handle.addr, &config, 1);
        let mut fitness = blackbox_latency_fitness(&mut client, 3);
        let eval = fitness(&"the cat runs far".to_string()).unwrap();
        let cache_hit_round_trip =
            config.cache_hit_latency_s + 2.0 * config.base_network_latency_s;
        assert!((eval.fitness.value - cache_hit_round_trip).abs() < 1e-12);
        handle.shutdown();
    }

    #[test]
    fn concurrent_clients_are_serialized() {
        let config = ServiceConfig {
            cache_capacity: 0,
            network_jitter_s: 0.0,
            ..ServiceConfig::default()
        };
        let handle = serve(test_pipeline(), config.clone(), None, 0).unwrap();
        let addr = handle.addr;
        let threads: Vec<_> = (0..3)
            .map(|t| {
                let config = config.clone();
                std::thread::spawn(move || {
                    let mut client = Client::new(addr, &config, t);
                    let mut replies = Vec::new();
                    for i in 0..8 {
                        let text = format!("the cat number {i} and {t}");
                        let (reply, _) = client.translate(&text).unwrap();
                        replies.push(reply);
                    }
                    replies
                })
            })
            .collect();
        for thread in threads {
            for reply in thread.join().unwrap() {
                // With one in-flight request at a time, every reply is a
                // complete, well-formed frame.
                assert!(matches!(reply, ServiceReply::Ok(_)));
            }
        }
        handle.shutdown();
    }

    #[test]
    fn guard_wrapped_service_rejects_expensive_inputs() {
        let pipeline = test_pipeline();
        let mut rng = sponge_core::rng_from_seed(6);
        let corpus: Vec<String> = sponge_core::corpus::natural_sentences(&mut rng, 16, 50);
        let refs: Vec<&str> = corpus.iter().map(|s| s.as_str()).collect();
        let profile = sponge_core::defense::profile_natural(
            &pipeline,
            &refs,
            99.0,
            sponge_core::defense::CostSource::SimulatedEnergy,
        )
        .unwrap();
        let config = ServiceConfig::default();
        let handle = serve(pipeline, config.clone(), Some(profile), 0).unwrap();
        let mut client = Client::new(handle.addr, &config, 1);
        let (reply, _) = client.translate("q/z/x/j/k/v/w/y/").unwrap();
        assert!(matches!(reply, ServiceReply::Rejected { .. }));
        let (reply, _) = client.translate(&corpus[0]).unwrap();
        assert!(matches!(reply, ServiceReply::Ok(_)));
        handle.shutdown();
    }
}
