use cachemimo::config::ConfigBuilder;
use cachemimo::export::{write_metrics, write_run};
use cachemimo::rng::{self, tag};
use cachemimo::sim::{run_baseline, run_mixed_timescale, Scheme};
use cachemimo::{build_topology, draw_channel, SystemConfig};

const SMALL: &str = "K = 2\nM = 2\nL = 3\nrho = 0.6,0.3,0.1\nF0 = 1e9\nB_C = 1e9\nurp_hold = 20\nplacement = edge\n";

#[test]
fn config_text_round_trips() {
    let cfg = SystemConfig::from_str_kv(SMALL).unwrap();
    assert_eq!(cfg.file_bits, vec![1e9; 3]);
    assert_eq!(SystemConfig::from_str_kv(&cfg.to_kv()).unwrap(), cfg);
    let over = ConfigBuilder::new()
        .parse_str(SMALL)
        .unwrap()
        .set("B_C", "2e9")
        .unwrap()
        .build()
        .unwrap();
    assert_eq!(over.cache_bits, 2e9);
}

#[test]
fn channels_do_not_depend_on_draw_order() {
    let cfg = SystemConfig::from_str_kv(SMALL).unwrap();
    let topo = build_topology(&cfg, cfg.placement, &mut rng::stream(3, tag::TOPOLOGY, &[])).unwrap();
    let late = draw_channel(&topo, &cfg, 3, 17).unwrap();
    let _ = draw_channel(&topo, &cfg, 3, 16).unwrap();
    assert_eq!(draw_channel(&topo, &cfg, 3, 17).unwrap(), late);
    let mut csv = Vec::new();
    topo.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 2 + 2);
}

#[test]
fn proposed_run_sits_between_the_baselines() {
    let cfg = SystemConfig::from_str_kv(SMALL).unwrap();
    let prop = run_mixed_timescale(&cfg, 200).unwrap();
    let coord = run_baseline(&cfg, Scheme::Coordinated, 200).unwrap();
    let conv = run_baseline(&cfg, Scheme::ConventionalComp, 200).unwrap();
    assert!(conv.avg_power <= prop.avg_power && prop.avg_power <= coord.avg_power);
    assert!(prop.avg_backhaul_bps < coord.avg_backhaul_bps && coord.avg_backhaul_bps < conv.avg_backhaul_bps);
    assert!((prop.avg_power_db - 10.0 * prop.avg_power.log10()).abs() < 1e-12);
    assert_eq!(prop.lc_trace.len(), 10);
    assert!(prop.final_q.iter().any(|&q| q > 0.0));
    assert_eq!(prop.interruptions, 0);
}

#[test]
fn exported_numbers_parse_back() {
    let cfg = SystemConfig::from_str_kv(SMALL).unwrap();
    let r = run_mixed_timescale(&cfg, 40).unwrap();
    let mut buf = Vec::new();
    write_metrics(&r.slots, cfg.users, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    for (line, slot) in text.lines().skip(1).zip(&r.slots) {
        let power: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((power / slot.sum_power - 1.0).abs() < 1e-10);
    }
    let dir = tempfile::tempdir().unwrap();
    write_run(dir.path(), &r).unwrap();
    assert!(dir.path().join("lc_trace.csv").is_file());
}
