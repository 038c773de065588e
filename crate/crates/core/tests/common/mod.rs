#![allow(dead_code)]

use std::collections::HashMap;
use std::io::Write;
use std::process::{Command, Stdio};

use proptest::prelude::*;
use vrpod_core::instance::{CompanyFleet, Customer, OccasionalDriver, Point, TimeWindow};
use vrpod_core::{DriverRef, Instance};

pub const RHO: f64 = 0.6;

#[derive(Debug, Clone)]
pub struct CustSpec {
    pub xy: (f64, f64),
    pub demand: u32,
    pub open: f64,
    pub width: f64,
    pub service: f64,
}

#[derive(Debug, Clone)]
pub struct OdSpec {
    pub xy: (f64, f64),
    pub capacity: u32,
    pub open: f64,
    pub width: f64,
}

#[derive(Debug, Clone)]
pub struct TinySpec {
    pub customers: Vec<CustSpec>,
    pub company: usize,
    pub capacity: u32,
    pub ods: Vec<OdSpec>,
    pub horizon: f64,
}

impl TinySpec {
    pub fn build(&self) -> Instance {
        let customers = self
            .customers
            .iter()
            .enumerate()
            .map(|(i, c)| Customer {
                id: i + 1,
                location: Point::new(c.xy.0, c.xy.1),
                demand: c.demand,
                window: TimeWindow::new(c.open, c.open + c.width),
                service_time: c.service,
            })
            .collect();
        let ods = self
            .ods
            .iter()
            .enumerate()
            .map(|(k, d)| OccasionalDriver {
                id: k + 1,
                destination: Point::new(d.xy.0, d.xy.1),
                capacity: d.capacity,
                window: TimeWindow::new(d.open, d.open + d.width),
            })
            .collect();
        Instance::new(
            "tiny",
            Point::new(25.0, 25.0),
            customers,
            CompanyFleet {
                count: self.company,
                capacity: self.capacity,
                depot_window: TimeWindow::new(0.0, self.horizon),
            },
            ods,
        )
        .expect("valid tiny instance")
    }
}

fn coord() -> impl Strategy<Value = f64> {
    (0u32..=50).prop_map(f64::from)
}

fn customer() -> impl Strategy<Value = CustSpec> {
    (coord(), coord(), 1u32..=5, 0u32..=60, 15u32..=200, 0u32..=4).prop_map(|(x, y, demand, open, width, service)| {
        CustSpec {
            xy: (x, y),
            demand,
            open: f64::from(open),
            width: f64::from(width),
            service: f64::from(service),
        }
    })
}

fn od() -> impl Strategy<Value = OdSpec> {
    (coord(), coord(), 2u32..=8, 0u32..=20, 40u32..=300).prop_map(|(x, y, capacity, open, width)| OdSpec {
        xy: (x, y),
        capacity,
        open: f64::from(open),
        width: f64::from(width),
    })
}

/// Tiny random instances; some are infeasible on purpose.
pub fn tiny_instance(max_customers: usize) -> impl Strategy<Value = TinySpec> {
    (
        prop::collection::vec(customer(), 1..=max_customers),
        0usize..=2,
        5u32..=12,
        prop::collection::vec(od(), 0..=2),
        150u32..=400,
    )
        .prop_map(|(customers, company, capacity, ods, horizon)| TinySpec {
            customers,
            company,
            capacity,
            ods,
            horizon: f64::from(horizon),
        })
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Cost of one route computed from coordinates, or `None` if infeasible.
pub fn route_cost_from_scratch(inst: &Instance, driver: DriverRef, visits: &[usize], rho: f64) -> Option<f64> {
    let depot = (inst.depot.x, inst.depot.y);
    let (dest, start, close, cap, factor, credit) = match driver {
        DriverRef::Company(_) => (
            depot,
            inst.fleet.depot_window.open,
            inst.fleet.depot_window.close,
            inst.fleet.capacity,
            1.0,
            0.0,
        ),
        DriverRef::Occasional(k) => {
            let od = &inst.ods[k];
            let d = (od.destination.x, od.destination.y);
            (d, od.window.open, od.window.close, od.capacity, rho, dist(depot, d))
        }
    };
    let load: u32 = visits.iter().map(|&c| inst.customers[c].demand).sum();
    if load > cap {
        return None;
    }
    let mut at = depot;
    let mut clock = start;
    let mut arcs = 0.0;
    for &c in visits {
        let cust = &inst.customers[c];
        let p = (cust.location.x, cust.location.y);
        let leg = dist(at, p);
        arcs += leg;
        let begin = (clock + leg).max(cust.window.open);
        if begin > cust.window.close + 1e-9 {
            return None;
        }
        clock = begin + cust.service_time;
        at = p;
    }
    let leg = dist(at, dest);
    if clock + leg > close + 1e-9 {
        return None;
    }
    arcs += leg;
    Some(factor * arcs - credit)
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Optimum by enumerating every customer-to-driver assignment and every
/// visiting order. Only usable for a handful of customers.
pub fn brute_force_optimum(inst: &Instance, rho: f64) -> Option<f64> {
    let n = inst.customers.len();
    let drivers: Vec<DriverRef> = (0..inst.fleet.count)
        .map(DriverRef::Company)
        .chain((0..inst.ods.len()).map(DriverRef::Occasional))
        .collect();
    if n == 0 {
        return Some(0.0);
    }
    if drivers.is_empty() {
        return None;
    }
    let mut memo: HashMap<(usize, u32), Option<f64>> = HashMap::new();
    let mut best_route = |d: usize, mask: u32| -> Option<f64> {
        if mask == 0 {
            return Some(0.0);
        }
        *memo.entry((d, mask)).or_insert_with(|| {
            let members: Vec<usize> = (0..n).filter(|&c| mask & (1 << c) != 0).collect();
            permutations(&members)
                .iter()
                .filter_map(|p| route_cost_from_scratch(inst, drivers[d], p, rho))
                .min_by(f64::total_cmp)
        })
    };
    let mut best: Option<f64> = None;
    let total = drivers.len().pow(n as u32);
    for code in 0..total {
        let mut masks = vec![0u32; drivers.len()];
        let mut rest = code;
        for c in 0..n {
            masks[rest % drivers.len()] |= 1 << c;
            rest /= drivers.len();
        }
        let mut sum = 0.0;
        let mut ok = true;
        for (d, &m) in masks.iter().enumerate() {
            match best_route(d, m) {
                Some(v) => sum += v,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && best.is_none_or(|b| sum < b) {
            best = Some(sum);
        }
    }
    best
}

pub fn highspy_available() -> bool {
    Command::new("python3")
        .args(["-c", "import highspy"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

const HIGHS_SCRIPT: &str = r#"
import sys, highspy
h = highspy.Highs()
h.setOptionValue("output_flag", False)
h.setOptionValue("mip_rel_gap", 0.0)
h.setOptionValue("mip_abs_gap", 1e-9)
h.readModel(sys.argv[1])
h.run()
status = h.modelStatusToString(h.getModelStatus())
if status == "Optimal":
    print(repr(h.getInfo().objective_function_value))
else:
    print(status)
"#;

/// Objective reported by HiGHS for an LP file, or its status text.
pub fn solve_with_highs(lp: &str) -> Result<f64, String> {
    let mut file = tempfile::Builder::new().suffix(".lp").tempfile().map_err(|e| e.to_string())?;
    file.write_all(lp.as_bytes()).map_err(|e| e.to_string())?;
    let out = Command::new("python3")
        .args(["-c", HIGHS_SCRIPT])
        .arg(file.path())
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout).trim().to_string();
    text.parse::<f64>().map_err(|_| format!("{text} {}", String::from_utf8_lossy(&out.stderr)))
}

#[derive(Debug, PartialEq)]
pub struct RefStep {
    pub evaluated: Vec<(usize, f64)>,
    pub skipped: Vec<usize>,
    pub committed: Option<usize>,
}

/// `I[r]` = 1-based position of the r-th smallest gene in `lo..=hi`.
pub fn sorted_positions(genes: &[f64], lo: usize, hi: usize) -> Vec<usize> {
    let mut pos: Vec<usize> = (lo..=hi).collect();
    pos.sort_by(|&a, &b| genes[a - 1].partial_cmp(&genes[b - 1]).unwrap());
    pos
}

/// Reference walk with 1-based index lists: same pruning, role exchange and
/// phase switch as the library walk, written out loop by loop.
pub fn reference_walk(
    base: &[f64],
    guide: &[f64],
    c: usize,
    pct_p: f64,
    decoder: &dyn Fn(&[f64]) -> f64,
) -> (Vec<f64>, f64, Vec<RefStep>) {
    let n = base.len();
    let mut path_size = (n as f64 * pct_p).ceil() as i64;
    let mut best = (base.to_vec(), f64::INFINITY);
    let mut ri: Vec<usize> = (1..=c).collect();
    // index 0 unused so that ib[i] reads like the 1-based lists
    let mut ib = vec![0];
    ib.extend(sorted_positions(base, 1, c));
    ib.extend(sorted_positions(base, c + 1, n));
    let mut ig = vec![0];
    ig.extend(sorted_positions(guide, 1, c));
    ig.extend(sorted_positions(guide, c + 1, n));
    let mut base = base.to_vec();
    let mut guide = guide.to_vec();
    let mut steps = Vec::new();
    let mut drivers = false;

    'outer: while path_size > 0 {
        let (mut i_best, mut val_best) = (0usize, f64::INFINITY);
        let mut evaluated = Vec::new();
        let mut skipped = Vec::new();
        for i in ri.clone() {
            if ib[i] == ig[i] {
                ri.retain(|&x| x != i);
                skipped.push(i);
                continue;
            }
            base.swap(ib[i] - 1, ig[i] - 1);
            let value = decoder(&base);
            base.swap(ib[i] - 1, ig[i] - 1);
            evaluated.push((i, value));
            if value < val_best {
                i_best = i;
                val_best = value;
            }
        }
        steps.push(RefStep {
            evaluated,
            skipped,
            committed: (i_best != 0).then_some(i_best),
        });
        if i_best == 0 {
            if drivers {
                break 'outer;
            }
            drivers = true;
            ri = (c + 1..=n).collect();
            continue;
        }
        base.swap(ib[i_best] - 1, ig[i_best] - 1);
        if val_best < best.1 {
            best = (base.clone(), val_best);
        }
        ri.retain(|&x| x != i_best);
        std::mem::swap(&mut base, &mut guide);
        path_size -= 1;
    }
    (best.0, best.1, steps)
}

