use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;
use stgen_core::impairment::{
    apply, Bandwidth, Decision, DeliveryScheduler, FanoutShaper, ImpairmentConfig, LinkState,
    SendOutcome,
};
use tokio::net::UdpSocket;

fn cfg(bandwidth: Bandwidth, loss_prob: f64, latency_ms: u64, rng_seed: u64) -> ImpairmentConfig {
    ImpairmentConfig {
        bandwidth,
        loss_prob,
        base_latency: Duration::from_millis(latency_ms),
        rng_seed,
    }
}

fn schedule(c: &ImpairmentConfig, arrivals: &[(u64, usize)]) -> Vec<Decision> {
    let mut link = LinkState::new(c.rng_seed);
    arrivals
        .iter()
        .map(|&(at_us, size)| apply(size, c, Duration::from_micros(at_us), &mut link))
        .collect()
}

fn arrivals() -> impl Strategy<Value = Vec<(u64, usize)>> {
    prop::collection::vec((0u64..50_000, 1usize..60_000), 1..200).prop_map(|mut v| {
        // Offer times are non-decreasing on a real link.
        let mut t = 0;
        for (gap, _) in v.iter_mut() {
            t += *gap;
            *gap = t;
        }
        v
    })
}

fn bandwidth() -> impl Strategy<Value = Bandwidth> {
    prop_oneof![
        Just(Bandwidth::Unbounded),
        (1_000u64..10_000_000).prop_map(Bandwidth::Bps)
    ]
}

proptest! {
    #[test]
    fn same_seed_same_schedule(
        bw in bandwidth(), loss in 0.0f64..=1.0, lat in 0u64..100, seed in any::<u64>(), xs in arrivals()
    ) {
        let c = cfg(bw, loss, lat, seed);
        prop_assert_eq!(schedule(&c, &xs), schedule(&c, &xs));
    }

    #[test]
    fn delivery_is_fifo(
        bw in bandwidth(), loss in 0.0f64..0.5, lat in 0u64..100, seed in any::<u64>(), xs in arrivals()
    ) {
        let c = cfg(bw, loss, lat, seed);
        let delivered: Vec<Duration> = schedule(&c, &xs)
            .into_iter()
            .filter_map(|d| match d {
                Decision::DeliverAt(t) => Some(t),
                Decision::Drop => None,
            })
            .collect();
        prop_assert!(delivered.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn never_delivers_before_offer(bw in bandwidth(), lat in 0u64..100, xs in arrivals()) {
        let c = cfg(bw, 0.0, lat, 1);
        for (d, (at_us, size)) in schedule(&c, &xs).into_iter().zip(&xs) {
            let Decision::DeliverAt(t) = d else { panic!("dropped without loss") };
            let floor = Duration::from_micros(*at_us) + c.base_latency + bw.serialization_delay(*size);
            prop_assert!(t >= floor);
        }
    }
}

#[test]
fn empirical_loss_rate_tracks_probability() {
    for &p in &[0.01, 0.05, 0.1, 0.5] {
        let c = cfg(Bandwidth::Unbounded, p, 0, 42);
        let mut link = LinkState::new(c.rng_seed);
        let n = 100_000;
        let dropped = (0..n)
            .filter(|_| apply(100, &c, Duration::ZERO, &mut link) == Decision::Drop)
            .count();
        let rate = dropped as f64 / n as f64;
        assert!((rate - p).abs() <= 0.01, "p={p} observed {rate}");
    }
}

#[test]
fn degenerate_configs() {
    let all = cfg(Bandwidth::Unbounded, 1.0, 0, 7);
    let mut link = LinkState::new(7);
    assert!((0..1000).all(|_| apply(64, &all, Duration::ZERO, &mut link) == Decision::Drop));

    let none = ImpairmentConfig::default();
    let mut link = LinkState::new(0);
    let now = Duration::from_millis(1234);
    assert_eq!(apply(1500, &none, now, &mut link), Decision::DeliverAt(now));
}

#[test]
fn serialization_delay_arithmetic() {
    assert_eq!(
        Bandwidth::Bps(10_000).serialization_delay(1000),
        Duration::from_millis(800)
    );
    assert_eq!(
        Bandwidth::Bps(100_000).serialization_delay(1000),
        Duration::from_millis(80)
    );
    assert_eq!(
        Bandwidth::Unbounded.serialization_delay(1000),
        Duration::ZERO
    );
}

#[test]
fn config_validation() {
    assert!(cfg(Bandwidth::Bps(0), 0.0, 0, 0).validate().is_err());
    assert!(cfg(Bandwidth::Unbounded, 1.5, 0, 0).validate().is_err());
    assert!(cfg(Bandwidth::Unbounded, -0.1, 0, 0).validate().is_err());
    assert!(cfg(Bandwidth::Bps(10_000), 0.05, 5, 0).validate().is_ok());
    assert_eq!(
        "unbounded".parse::<Bandwidth>().unwrap(),
        Bandwidth::Unbounded
    );
    assert_eq!(
        "10000".parse::<Bandwidth>().unwrap(),
        Bandwidth::Bps(10_000)
    );
    assert!("fast".parse::<Bandwidth>().is_err());
}

/// Two peers behind one shaper get independent links: a backlog towards one
/// does not delay the other.
#[tokio::test]
async fn fanout_links_are_independent() {
    let tx = Arc::new(UdpSocket::bind("127.0.0.1:0").await.unwrap());
    let a = UdpSocket::bind("127.0.0.1:0").await.unwrap();
    let b = UdpSocket::bind("127.0.0.1:0").await.unwrap();
    let shaper = FanoutShaper::new(
        cfg(Bandwidth::Bps(80_000), 0.0, 0, 1),
        Some(DeliveryScheduler::spawn()),
    );
    // 1000 bytes at 80 kbit/s is 100 ms each; queue three towards `a`.
    for _ in 0..3 {
        let out = shaper
            .send(&tx, a.local_addr().unwrap(), &[1u8; 1000])
            .await
            .unwrap();
        assert_ne!(out, SendOutcome::Dropped);
    }
    let start = tokio::time::Instant::now();
    shaper
        .send(&tx, b.local_addr().unwrap(), &[2u8; 1000])
        .await
        .unwrap();
    let mut buf = [0u8; 2000];
    b.recv_from(&mut buf).await.unwrap();
    let b_delay = start.elapsed();
    for _ in 0..3 {
        a.recv_from(&mut buf).await.unwrap();
    }
    let a_delay = start.elapsed();
    assert!(b_delay < Duration::from_millis(200), "{b_delay:?}");
    assert!(a_delay >= Duration::from_millis(250), "{a_delay:?}");
}
