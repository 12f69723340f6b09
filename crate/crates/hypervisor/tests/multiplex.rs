//! Temporal and spatial multiplexing, delegation, migration and isolation.

mod common;

use std::net::TcpListener;
use std::time::Duration;

use common::*;
use fpgavirt_core::bisim::Case;
use fpgavirt_core::corpus;
use fpgavirt_core::stimulus::Stimulus;
use fpgavirt_hypervisor::log::{lint, EventKind};
use fpgavirt_hypervisor::proto::{code, Message};
use fpgavirt_hypervisor::scenario::{self, Tenant, SPIN};
use fpgavirt_hypervisor::{Client, Config, DeviceModel};

#[test]
fn contending_streams_split_io_grants_evenly() {
    let h = start(config());
    let r = scenario::temporal(h.addr(), &|| h.events(), 400, 5).unwrap();
    assert!(r.outputs_match);
    assert_eq!(r.window, 400);
    assert!((r.share_a - 0.5).abs() <= 0.05, "{}", r.share_a);
    assert!(r.recovery <= 2);
    assert_eq!(r.survivor_share, 1.0);
    lint(&h.events()).unwrap();
}

fn tiered(capacity: u64) -> Config {
    let mut c = config();
    c.device = DeviceModel {
        compile_latency: Duration::from_millis(20),
        cycle_rate: None,
        ..DeviceModel::new(capacity, &[1.0, 0.5])
    };
    c
}

#[test]
fn a_third_tenant_past_the_budget_halves_the_clock_until_it_leaves() {
    let h = start(tiered(400));
    let spin = Case::new("spin", SPIN, Stimulus::default());
    let a = Tenant::spawn(scenario::remote_runtime(h.addr(), &spin).unwrap()).unwrap();
    let b = Tenant::spawn(scenario::remote_runtime(h.addr(), &spin).unwrap()).unwrap();
    let s = h
        .wait_for(Duration::from_secs(20), |s| s.image.len() == 2 && !s.rebuilding)
        .unwrap();
    assert_eq!((s.tier, s.factor), (0, 1.0));
    let cached = s.cached_images;

    let big = corpus::case("adpcm", 0).unwrap();
    let c = Tenant::spawn(scenario::remote_runtime(h.addr(), &big).unwrap()).unwrap();
    let s = h
        .wait_for(Duration::from_secs(20), |s| s.image.len() == 3)
        .unwrap();
    assert_eq!((s.tier, s.factor), (1, 0.5));
    c.stop().unwrap();
    let s = h
        .wait_for(Duration::from_secs(20), |s| s.image.len() == 2 && !s.rebuilding)
        .unwrap();
    assert_eq!((s.tier, s.factor), (0, 1.0));
    let ev = h.events();
    assert!(
        matches!(ev.iter().rev().find(|e| matches!(e.kind, EventKind::CacheHit { .. } | EventKind::CompileStart { .. })).map(|e| &e.kind), Some(EventKind::CacheHit { .. })),
        "returning to a built tenant set reuses its image"
    );
    assert_eq!(h.status().cached_images, cached + 1);
    let tiers: Vec<(usize, usize)> = ev
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Tier { from, to, .. } => Some((from, to)),
            _ => None,
        })
        .collect();
    assert_eq!(tiers, [(0, 1), (1, 0)]);
    assert!(a.ticks() > 0 && b.ticks() > 0);
    a.stop().unwrap();
    b.stop().unwrap();
    lint(&h.events()).unwrap();
}

#[test]
fn full_device_without_a_peer_rejects_registration() {
    let h = start(tiered(10));
    let mut c = Client::connect(h.addr()).unwrap();
    let r = c
        .request(&Message::Register {
            source: corpus::MIPS32.into(),
        })
        .unwrap();
    assert!(matches!(r, Message::Error { code: code::DEVICE_FULL, .. }));
}

fn with_peer(capacity: u64, peer: String) -> Config {
    let mut c = tiered(capacity);
    c.peer = Some(peer);
    c
}

#[test]
fn delegated_tenants_see_identical_semantics() {
    let far = start(config());
    let near = start(with_peer(10, far.addr().to_string()));
    let case = corpus::case("regex", 2).unwrap();
    assert_eq!(remote(near.addr(), &case), local(&case));
    assert!(near
        .events()
        .iter()
        .any(|e| matches!(e.kind, EventKind::Delegate { .. })));
    lint(&far.events()).unwrap();
    assert!(far.events().iter().any(|e| matches!(e.kind, EventKind::SaveSafe { .. })));
}

#[test]
fn delegation_chains_of_depth_two_stay_correct() {
    let h3 = start(config());
    let h2 = start(with_peer(10, h3.addr().to_string()));
    let h1 = start(with_peer(10, h2.addr().to_string()));
    let case = corpus::case("fig2", 4).unwrap();
    assert_eq!(remote(h1.addr(), &case), local(&case));
    for h in [&h1, &h2] {
        assert!(h.events().iter().any(|e| matches!(e.kind, EventKind::Delegate { .. })));
    }
}

#[test]
fn delegation_to_self_is_refused() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let h = fpgavirt_hypervisor::Hypervisor::start(
        ("127.0.0.1", port),
        with_peer(10, format!("127.0.0.1:{port}")),
    )
    .unwrap();
    let mut c = Client::connect(h.addr()).unwrap();
    let r = c
        .request(&Message::Register {
            source: corpus::FIG2.into(),
        })
        .unwrap();
    assert!(matches!(r, Message::Error { code: code::DEVICE_FULL, .. }));
}

#[test]
fn migration_between_hypervisors_preserves_the_run() {
    let a = start(config());
    let b = start(config());
    for (name, tick) in [("mips32", 37), ("bitcoin", 70)] {
        let case = corpus::case(name, 0).unwrap();
        let r = scenario::migration(a.addr(), b.addr(), &case, tick).unwrap();
        assert!(r.identical(), "{name}");
        let moved = r
            .runtime_log
            .iter()
            .find_map(|l| l.strip_prefix(&format!("migrate {} tick=", b.addr())))
            .unwrap_or_else(|| panic!("{name}: {:?}", r.runtime_log));
        let at: u64 = moved.parse().unwrap();
        assert!(at >= tick);
        if name == "bitcoin" {
            assert_eq!(at % 66, 0, "migrates only at a yield boundary");
        }
    }
    lint(&a.events()).unwrap();
    assert!(lint(&b.events()).unwrap() >= 1);
}

#[test]
fn cross_tenant_messages_are_all_rejected() {
    let h = start(config());
    let r = scenario::isolation(h.addr(), 2000, 9).unwrap();
    assert_eq!(r.errors, r.messages);
    assert!(r.changed.is_empty(), "{:?}", r.changed);
    lint(&h.events()).unwrap();
}

#[test]
fn halved_tier_halves_the_paced_virtual_frequency() {
    let mut cfg = tiered(400);
    cfg.device.cycle_rate = Some(600.0);
    let h = start(cfg);
    let r = scenario::spatial(h.addr(), &|| h.events(), Duration::from_millis(1500)).unwrap();
    assert_eq!((r.tier_before, r.tier_during, r.tier_after), (0, 1, 0));
    for ratio in r.ratios() {
        assert!((ratio - 0.5).abs() <= 0.2, "{:?} {:?}", r.before, r.during);
    }
    lint(&h.events()).unwrap();
}
