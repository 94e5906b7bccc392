mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use sdrplane::chain::{evaluate, parse_chain_spec, ChainManager, PlatformModel, UnitSpec};
use sdrplane::crossbar::Crossbar;
use sdrplane::unit::Sample;

const KINDS: [(&str, u64, u64); 4] = [("k1", 700, 2), ("k2", 1500, 0), ("k3", 300, 5), ("k4", 2500, 8)];

fn kinds() -> Vec<sdrplane::unit::UnitDescriptor> {
    KINDS
        .iter()
        .map(|&(n, cells, dsp)| common::modeled_kind(n, 3e8, 10, cells, dsp))
        .collect()
}

fn small_platform() -> PlatformModel {
    PlatformModel {
        logic_cells_total: 9000,
        dsp_slices_total: 20,
        ..PlatformModel::default()
    }
    .with_prr("p0", 1600, 6)
}

fn prr_chain(name: &str, kind: &str) -> String {
    format!(
        "[chain]\nname = \"{name}\"\nsample_rate_sps = 1e6\n\
         [[unit]]\nname = \"a\"\nkind = \"k1\"\n\
         [[unit]]\nname = \"b\"\nkind = \"{kind}\"\nprr = \"p0\"\n\
         [[link]]\nsrc = \"a\"\ndst = \"b\"\n"
    )
}

#[derive(Debug, Clone)]
enum Op {
    Deploy(Vec<usize>),
    DeployPrr,
    Teardown(usize),
    Swap(usize),
    Full(usize),
    SetWindow(usize, u32),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => prop::collection::vec(0..KINDS.len(), 1..4).prop_map(Op::Deploy),
        1 => Just(Op::DeployPrr),
        3 => (0usize..8).prop_map(Op::Teardown),
        1 => (0..2usize).prop_map(Op::Swap),
        1 => (0usize..3).prop_map(Op::Full),
        1 => ((0usize..8), prop_oneof![Just(16u32), Just(64), Just(128)]).prop_map(|(i, w)| Op::SetWindow(i, w)),
    ]
}

/// Cells and DSP the deployed units should hold, from the catalog costs.
fn expected_allocation(m: &ChainManager) -> (u64, u64) {
    let p = m.platform();
    let (mut cells, mut dsp) = (p.reserved_cells(), p.reserved_dsp());
    for c in m.list() {
        for u in c.units.iter().filter(|u| u.placement == "fabric") {
            let d = m.catalog().descriptor(&u.kind).unwrap();
            cells += d.cost_logic_cells;
            dsp += d.cost_dsp_slices;
        }
    }
    (cells, dsp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn budget_is_conserved(ops in prop::collection::vec(op(), 1..14)) {
        let m = ChainManager::new(common::catalog_with(&kinds()), small_platform(), Crossbar::new(0));
        m.set_time_scale(0.0);
        let start = m.budget();
        for (step, op) in ops.iter().enumerate() {
            let ids: Vec<String> = m.list().into_iter().map(|c| c.id).collect();
            match op {
                Op::Deploy(ks) => {
                    let units: Vec<(String, &str)> = ks.iter().enumerate().map(|(i, &k)| (format!("u{i}"), KINDS[k].0)).collect();
                    let refs: Vec<(&str, &str)> = units.iter().map(|(n, k)| (n.as_str(), *k)).collect();
                    let _ = m.deploy_text(&common::line_chain(&format!("c{}", step % 3), 1e6, None, &refs));
                }
                Op::DeployPrr => {
                    let _ = m.deploy_text(&prr_chain("p0", "k3"));
                }
                Op::Teardown(i) if !ids.is_empty() => {
                    m.teardown(&ids[i % ids.len()]).unwrap();
                }
                Op::Teardown(_) => {}
                Op::Swap(k) => {
                    let occupant = UnitSpec {
                        name: String::new(),
                        kind: ["k1", "k3"][*k].into(),
                        params: BTreeMap::new(),
                        prr: None,
                        node: None,
                        share: None,
                        clock: None,
                    };
                    let _ = m.reconfigure_prr("p0", &occupant, 1000);
                }
                Op::Full(n) => {
                    let set = (0..*n)
                        .map(|i| m.parse(&common::line_chain(&format!("f{i}"), 1e6, None, &[("x", "k2")])).unwrap())
                        .collect();
                    let _ = m.reconfigure_full(set, 1);
                }
                Op::SetWindow(i, w) if !ids.is_empty() => {
                    let _ = m.set_param(&ids[i % ids.len()], "u0", "window", *w);
                }
                Op::SetWindow(..) => {}
            }
            let b = m.budget();
            prop_assert_eq!(b.cells_allocated + b.cells_free, b.cells_total);
            prop_assert_eq!(b.dsp_allocated + b.dsp_free, b.dsp_total);
            prop_assert_eq!((b.cells_allocated, b.dsp_allocated), expected_allocation(&m));
        }
        m.teardown_all();
        prop_assert_eq!(m.budget(), start);
    }

    #[test]
    fn admission_is_monotone(
        chains in prop::collection::vec(
            (prop::collection::vec(0..KINDS.len(), 1..4), 1u32..200, prop::option::of(0.05f64..1.0), any::<bool>()),
            1..6,
        ),
    ) {
        let catalog = common::catalog_with(&[
            common::modeled_kind("k1", 2e8, 3000, 700, 2),
            common::modeled_kind("k2", 1e8, 100, 1500, 0),
            common::modeled_kind("k3", 3e8, 30, 300, 5),
            common::modeled_kind("k4", 5e7, 9000, 2500, 8),
        ]);
        let graphs: Vec<_> = chains
            .iter()
            .enumerate()
            .map(|(c, (ks, msps, budget, shared))| {
                let units: Vec<(String, &str)> = ks.iter().enumerate().map(|(i, &k)| (format!("u{i}"), KINDS[k].0)).collect();
                let refs: Vec<(&str, &str)> = units.iter().map(|(n, k)| (n.as_str(), *k)).collect();
                let mut text = common::line_chain(&format!("c{c}"), *msps as f64 * 1e6, budget.map(|b| b * 30.0), &refs);
                if *shared && ks.len() == 1 {
                    text = text.replace("kind = \"", "share = \"pool\"\nkind = \"");
                }
                parse_chain_spec(&text, &catalog).unwrap()
            })
            .collect();
        let platform = small_platform();
        let n = graphs.len();
        let verdict = |mask: u32| {
            let set: Vec<_> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| &graphs[i]).collect();
            evaluate(&platform, &set, 0).admitted()
        };
        let verdicts: Vec<bool> = (0..1u32 << n).map(verdict).collect();
        for sup in 0..1u32 << n {
            if !verdicts[sup as usize] {
                continue;
            }
            let mut sub = sup;
            loop {
                prop_assert!(verdicts[sub as usize], "{:b} admitted but subset {:b} is not", sup, sub);
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & sup;
            }
        }
    }

    #[test]
    fn downtime_is_bytes_over_pcap_rate(full in 0u64..2_000_000_000, partial in 0u64..50_000_000) {
        let platform = PlatformModel::default().with_prr("p0", 4000, 24);
        let m = ChainManager::new(common::catalog_with(&kinds()), platform, Crossbar::new(0));
        m.set_time_scale(0.0);
        let r = m.reconfigure_full(Vec::new(), full).unwrap();
        prop_assert_eq!(r.downtime_s, full as f64 / 128e6);
        m.deploy_text(&prr_chain("p", "k3")).unwrap();
        let occupant = UnitSpec {
            name: String::new(),
            kind: "k1".into(),
            params: BTreeMap::new(),
            prr: None,
            node: None,
            share: None,
            clock: None,
        };
        let r = m.reconfigure_prr("p0", &occupant, partial).unwrap();
        prop_assert_eq!(r.swap_time_s, partial as f64 / 128e6);
    }

    #[test]
    fn latency_verdict_is_a_pure_function(
        units in prop::collection::vec((1u64..4000, 0usize..3), 1..7),
        budget_us in 1.0f64..40.0,
    ) {
        const CLOCKS: [f64; 3] = [1e8, 2e8, 3e8];
        let extra: Vec<_> = units
            .iter()
            .enumerate()
            .map(|(i, &(lat, _))| common::modeled_kind(&format!("lat{i}"), 1e7, lat, 1, 0))
            .collect();
        let names: Vec<(String, String)> = (0..units.len()).map(|i| (format!("u{i}"), format!("lat{i}"))).collect();
        let refs: Vec<(&str, &str)> = names.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let mut text = common::line_chain("sifs", 1e6, Some(budget_us), &refs);
        text = text.replace("sample_rate_sps = 1e6\n", "sample_rate_sps = 1e6\nclocks = { c0 = 1e8, c1 = 2e8, c2 = 3e8 }\n");
        for (i, &(_, c)) in units.iter().enumerate() {
            text = text.replace(
                &format!("kind = \"lat{i}\"\n"),
                &format!("kind = \"lat{i}\"\nclock = \"c{c}\"\n"),
            );
        }
        let oracle: f64 = units.iter().map(|&(lat, c)| lat as f64 / CLOCKS[c]).sum();
        let verdicts: Vec<(bool, f64)> = (0..3)
            .map(|_| {
                let m = ChainManager::new(common::catalog_with(&extra), PlatformModel::default(), Crossbar::new(0));
                let r = m.check(&m.parse(&text).unwrap());
                (r.latency_ok, r.latency[0].critical_path_s)
            })
            .collect();
        prop_assert!(verdicts.windows(2).all(|w| w[0] == w[1]));
        prop_assert!((verdicts[0].1 - oracle).abs() <= 1e-18 * units.len() as f64);
        if (oracle - budget_us * 1e-6).abs() > 1e-15 {
            prop_assert_eq!(verdicts[0].0, oracle <= budget_us * 1e-6);
        }
    }
}

#[test]
fn stats_reads_do_not_stall_streaming() {
    let m = ChainManager::with_defaults(0);
    let (id, _) = m
        .deploy_text(&common::line_chain("s", 1e6, None, &[("a", "passthrough"), ("b", "passthrough")]))
        .unwrap();
    let io = m.io(&id).unwrap();
    let stop = std::sync::Arc::new(std::sync::atomic::AtomicBool::new(false));
    let reader = {
        let m = m.clone();
        let stop = std::sync::Arc::clone(&stop);
        std::thread::spawn(move || {
            let mut n = 0u64;
            while !stop.load(std::sync::atomic::Ordering::Acquire) {
                let _ = m.stats();
                let _ = m.list();
                n += 1;
                std::thread::yield_now();
            }
            n
        })
    };
    let x: Vec<Sample> = (0..1024 * 64).map(|i| Sample::new(i as f64, 0.5)).collect();
    assert_eq!(common::stream(&io, &x), x);
    stop.store(true, std::sync::atomic::Ordering::Release);
    assert!(reader.join().unwrap() > 0);
}

#[test]
fn live_window_change_must_fit_links() {
    let m = ChainManager::with_defaults(0);
    let text = common::line_chain("w", 1e6, None, &[("a", "passthrough"), ("b", "passthrough")])
        + "capacity = 1024\n";
    let (id, _) = m.deploy_text(&text).unwrap();
    // 1024 into a 1000-sample reader would wedge a 1024-deep link.
    let e = m.set_param(&id, "b", "window", 1000).unwrap_err();
    assert_eq!(e.code(), "CapacityTooSmall");
    m.set_param(&id, "b", "window", 512).unwrap();
    let x: Vec<Sample> = (0..1024 * 8).map(|i| Sample::new(i as f64, -1.0)).collect();
    assert_eq!(common::stream(&m.io(&id).unwrap(), &x), x);
}
