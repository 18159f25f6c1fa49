use conley_core::commands::Workspace;
use conley_core::config::RunConfig;
use conley_core::flow::BUILTIN_NAMES;
use conley_core::index_pair::{exit_time, quotient_flow, validate_index_pair, ExitTime, QuotientPoint};
use conley_core::recurrence::{ar_regions, check_r_equals_intersection, enumerate_down_sets};
use proptest::prelude::*;

fn small(name: &str) -> Workspace {
    let depth = if matches!(name, "hopf2d" | "gradient2d") { 32 } else { 128 };
    Workspace::new(&RunConfig {
        depth: vec![depth],
        ..RunConfig::builtin(name)
    })
    .unwrap()
}

#[test]
fn admissible_order_is_sound() {
    for name in BUILTIN_NAMES {
        let ws = small(name);
        let mg = ws.global_morse_graph().unwrap();
        for i in 0..mg.n() {
            for b in mg.morse_set(i).iter() {
                for j in mg.reachable_classes(b) {
                    assert!(j <= i, "{name}: M{} reaches M{}", i + 1, j + 1);
                }
            }
        }
        for b in mg.connecting_boxes().iter() {
            for hi in mg.coreachable_classes(b) {
                for lo in mg.reachable_classes(b) {
                    assert!(hi > lo, "{name}: box {b} links M{} to M{}", hi + 1, lo + 1);
                }
            }
        }
    }
}

#[test]
fn attractors_are_forward_invariant_and_dual_to_repellers() {
    for name in BUILTIN_NAMES {
        let ws = small(name);
        let mg = ws.global_morse_graph().unwrap();
        let recurrent = mg.recurrent();
        for d in enumerate_down_sets(&mg).unwrap() {
            let (a, r) = ar_regions(&mg, &d).unwrap();
            for b in a.iter() {
                for c in ws.graph.successors(b) {
                    if mg.invariant().contains(*c) {
                        assert!(a.contains(*c), "{name} {d:?}: {b} -> {c} leaves the attractor");
                    }
                }
            }
            assert!(a.intersection(&r).is_empty(), "{name} {d:?}");
            for b in recurrent.iter() {
                assert!(a.contains(b) != r.contains(b), "{name} {d:?}: box {b}");
            }
        }
    }
}

#[test]
fn recurrent_set_is_intersection_on_every_builtin() {
    for name in BUILTIN_NAMES {
        let ws = small(name);
        let r = check_r_equals_intersection(&ws.global_morse_graph().unwrap()).unwrap();
        assert!(r.equal && r.symmetric_difference.is_empty(), "{name}: {:?}", r.symmetric_difference);
    }
}

#[test]
fn pair_validation_is_reproducible() {
    let ws = small("doublewell1d");
    let (pair, _) = ws.pair().unwrap();
    let a = validate_index_pair(&ws.graph, &pair);
    let b = validate_index_pair(&ws.graph, &pair);
    assert_eq!(a, b);
    assert!(a.passed(), "{}", a.summary());
}

fn saddle() -> Workspace {
    small("saddle1d")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quotient_flow_is_a_semiflow(u in 0.0f64..1.0, s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let ws = saddle();
        let (pair, _) = ws.pair().unwrap();
        let boxes: Vec<usize> = pair.isolating().iter().collect();
        let b = boxes[((u * boxes.len() as f64) as usize).min(boxes.len() - 1)];
        let x = QuotientPoint::Point(ws.grid.center(b));
        let dt = 1e-2;
        let two = quotient_flow(&ws.system, &pair, &quotient_flow(&ws.system, &pair, &x, s, dt).unwrap(), t, dt).unwrap();
        let one = quotient_flow(&ws.system, &pair, &x, s + t, dt).unwrap();
        match (one, two) {
            (QuotientPoint::Basepoint, QuotientPoint::Basepoint) => {}
            (QuotientPoint::Point(p), QuotientPoint::Point(q)) => {
                prop_assert!((p[0] - q[0]).abs() <= ws.grid.max_width(), "{p:?} vs {q:?}");
            }
            (p, q) => {
                // Disagreement only right at the exit: the surviving point sits next to L.
                let QuotientPoint::Point(y) = (if matches!(p, QuotientPoint::Point(_)) { p } else { q }) else { unreachable!() };
                let c = ws.grid.box_of(&y).unwrap();
                prop_assert!(ws.grid.neighbors(c).iter().any(|n| pair.box_in_l(*n)), "mismatch far from L at {y:?}");
            }
        }
    }

    #[test]
    fn exit_time_decreases_along_the_flow(u in 0.0f64..1.0, frac in 0.05f64..0.95) {
        let ws = saddle();
        let (pair, _) = ws.pair().unwrap();
        let boxes: Vec<usize> = pair.isolating().iter().collect();
        let b = boxes[((u * boxes.len() as f64) as usize).min(boxes.len() - 1)];
        let x = ws.grid.center(b);
        let dt = 1e-2;
        if let ExitTime::Finite(tau) = exit_time(&ws.system, &pair, &x, dt, 20.0).unwrap() {
            let t = frac * tau;
            let y = ws.system.flow_map(&x, t).unwrap().inside().unwrap();
            if pair.point_in_isolating(&y) {
                let later = exit_time(&ws.system, &pair, &y, dt, 20.0).unwrap().finite().unwrap();
                prop_assert!((later - (tau - t)).abs() < 4.0 * dt, "tau {tau}, t {t}, later {later}");
            }
        }
    }
}
