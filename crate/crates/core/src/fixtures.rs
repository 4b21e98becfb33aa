//! Built-in sample feeders. Both are LV-typical trees: a resistive trunk
//! from the substation with short laterals, dimensioned so that evening
//! household peaks plus EV charging pull parts of the feeder below
//! 0.95 pu. The same grids ship as JSON documents under
//! `fixtures/grids/`, kept in sync by a test.

use crate::grid::{Bus, BusKind, GridModel, Line};

fn bus(id: &str, kind: BusKind) -> Bus {
    Bus {
        id: id.into(),
        kind,
        base_kv: 0.4,
    }
}

fn line(from: &str, to: &str, r: f64, x: f64) -> Line {
    Line {
        from: from.into(),
        to: to.into(),
        r_pu: r,
        x_pu: x,
    }
}

/// 20-bus feeder: a six-segment trunk with five laterals.
pub fn feeder_a() -> GridModel {
    let trunk = ["t1", "t2", "t3", "t4", "t5", "t6"];
    let laterals: [(&str, &[&str]); 5] = [
        ("t2", &["a1", "a2"]),
        ("t3", &["b1", "b2", "b3"]),
        ("t4", &["c1", "c2"]),
        ("t5", &["d1", "d2", "d3"]),
        ("t6", &["e1", "e2", "e3"]),
    ];
    let mut buses = vec![bus("slack", BusKind::Slack)];
    let mut lines = Vec::new();
    let mut prev = "slack".to_string();
    for t in trunk {
        buses.push(bus(t, BusKind::Pq));
        lines.push(line(&prev, t, 0.012, 0.005));
        prev = t.into();
    }
    for (root, chain) in laterals {
        let mut prev = root.to_string();
        for b in chain {
            buses.push(bus(b, BusKind::Pq));
            lines.push(line(&prev, b, 0.010, 0.004));
            prev = (*b).into();
        }
    }
    GridModel {
        name: "feeder_a".into(),
        base_mva: 0.4,
        buses,
        lines,
        devices: Vec::new(),
    }
}

/// 12-bus feeder: a four-segment trunk with three laterals.
pub fn feeder_b() -> GridModel {
    let trunk = ["t1", "t2", "t3", "t4"];
    let laterals: [(&str, &[&str]); 3] = [
        ("t2", &["a1", "a2"]),
        ("t3", &["b1", "b2"]),
        ("t4", &["c1", "c2", "c3"]),
    ];
    let mut buses = vec![bus("slack", BusKind::Slack)];
    let mut lines = Vec::new();
    let mut prev = "slack".to_string();
    for t in trunk {
        buses.push(bus(t, BusKind::Pq));
        lines.push(line(&prev, t, 0.014, 0.006));
        prev = t.into();
    }
    for (root, chain) in laterals {
        let mut prev = root.to_string();
        for b in chain {
            buses.push(bus(b, BusKind::Pq));
            lines.push(line(&prev, b, 0.011, 0.004));
            prev = (*b).into();
        }
    }
    GridModel {
        name: "feeder_b".into(),
        base_mva: 0.4,
        buses,
        lines,
        devices: Vec::new(),
    }
}
