use std::sync::Arc;
use std::thread;
use std::time::Duration;

use halo_puf::bits::BitString;
use halo_puf::flash::{FlashChip, Geometry, VariationParams};
use halo_puf::halo::{enroll_pages, enrollment_order, MapStore, DEFAULT_MIN_QUOTA};
use halo_puf::net::{
    gateway_handle_connection, memory_pair, sensor_run_auth, CrpStore, Frame, GatewayPolicy,
    Message, NonceSource, SensorPolicy,
};

const SESSIONS: usize = 500;
/// Sessions served per enrollment batch. Maps are enrolled shortly before
/// use, as wear between enrollment and use slowly moves marginal bytes.
const BATCH: usize = 50;

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

#[test]
fn default_noise_sessions_succeed_and_never_leak_responses() {
    let mut chip =
        FlashChip::fabricate(Geometry::DESK_SCALE, VariationParams::default(), 2024).unwrap();
    let mut order = enrollment_order(&Geometry::DESK_SCALE);
    let store = Arc::new(CrpStore::new(MapStore::in_memory()));

    let gateway_policy = GatewayPolicy {
        retries: 0,
        telemetry_idle: Duration::from_millis(1),
        ..Default::default()
    };
    let sensor_policy = SensorPolicy {
        retries: 0,
        ..Default::default()
    };
    let mut nonces = NonceSource::seeded(1);
    let (mut established, mut scanned) = (0, 0);
    for n in 0..SESSIONS {
        if n % BATCH == 0 {
            let maps = enroll_pages(
                &mut chip,
                "chip",
                order.by_ref(),
                2 * BATCH,
                DEFAULT_MIN_QUOTA,
            )
            .unwrap();
            assert_eq!(maps.len(), 2 * BATCH);
            store.enroll(maps.into_iter().map(|e| e.map)).unwrap();
        }
        let (mut g, mut s) = memory_pair();
        let transcript = g.transcript();
        let (st, policy) = (store.clone(), gateway_policy.clone());
        let gw = thread::spawn(move || {
            let mut nonces = NonceSource::seeded(n as u64);
            gateway_handle_connection(&mut g, &st, &policy, &mut nonces, None)
        });
        let attempts = sensor_run_auth(&mut s, &mut chip, "chip", &sensor_policy, &mut nonces);
        drop(s);
        let report = gw.join().unwrap();
        let ok = attempts[0].is_established() && report.sessions[0].key() == attempts[0].key();
        established += usize::from(ok);

        let frames = transcript.frames();
        let reader = store.read();
        for (_, bytes) in &frames {
            let f = Frame::decode(bytes).unwrap();
            let (Message::C1 { challenge } | Message::C2 { challenge, .. }) =
                Message::from_frame(&f).unwrap()
            else {
                continue;
            };
            let map = reader.get("chip", challenge.block, challenge.page).unwrap();
            let expected: BitString = challenge
                .locations
                .iter()
                .map(|j| map.high_bytes.binary_search(j).is_ok())
                .collect();
            for (_, other) in &frames {
                assert!(
                    !contains(other, expected.as_packed()),
                    "response visible in session {n}"
                );
            }
            scanned += 1;
        }
    }
    println!("{established}/{SESSIONS} sessions established");
    assert_eq!(scanned, 2 * SESSIONS);
    assert!(
        established * 100 >= SESSIONS * 99,
        "{established}/{SESSIONS} sessions established"
    );
}

#[test]
fn map_store_survives_restart_after_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("maps.jsonl");
    let g = Geometry {
        blocks_per_chip: 4,
        pages_per_block: 4,
        data_bytes_per_page: 4096,
        spare_bytes_per_page: 224,
    };
    let mut chip = FlashChip::fabricate(g, VariationParams::default(), 5).unwrap();
    let store = CrpStore::open(&path).unwrap();
    let maps = enroll_pages(
        &mut chip,
        "chip",
        enrollment_order(&g),
        4,
        DEFAULT_MIN_QUOTA,
    )
    .unwrap();
    store.enroll(maps.into_iter().map(|e| e.map)).unwrap();
    let pair = store.issue_pair("chip", 512, [1, 2]).unwrap().unwrap();
    let reopened = CrpStore::open(&path).unwrap();
    let a: Vec<_> = store.read().maps().cloned().collect();
    let b: Vec<_> = reopened.read().maps().cloned().collect();
    assert_eq!(a, b);
    for c in [&pair.c1, &pair.c2] {
        let m = reopened
            .read()
            .get("chip", c.block, c.page)
            .unwrap()
            .clone();
        assert!(c.locations.iter().all(|&j| m.is_consumed(j)));
    }
}
