//! Problem data: depot, company fleet, occasional drivers, customers and the
//! derived cost/time matrices.
//!
//! Node layout of the matrices (`N = C ∪ V ∪ {o, b}`):
//!
//! | index            | node                        |
//! |------------------|-----------------------------|
//! | `0`              | depot origin `o`            |
//! | `1 ..= |C|`      | customers                   |
//! | `|C|+1 ..= |C|+|K|` | occasional driver destinations |
//! | `|C|+|K|+1`      | company destination `b`     |
//!
//! `o` and `b` share the depot location.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::solution::{check_feasible, DriverRef, Route, Solution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {record}: {message}")]
    Validation { record: String, message: String },
    #[error("cannot generate instance: {0}")]
    Generate(String),
}

fn invalid(record: impl Into<String>, message: impl Into<String>) -> InstanceError {
    InstanceError::Validation {
        record: record.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point<S = f64> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> Point<S> {
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> S {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow<S = f64> {
    pub open: S,
    pub close: S,
}

impl<S: Scalar> TimeWindow<S> {
    pub fn new(open: S, close: S) -> Self {
        Self { open, close }
    }

    /// `[0, +inf)`.
    pub fn unbounded() -> Self {
        Self::new(S::zero(), S::infinity())
    }

    fn validate(&self, record: &str) -> Result<(), InstanceError> {
        if self.open.is_nan() || self.close.is_nan() {
            return Err(invalid(record, "time window bound is NaN"));
        }
        if self.open < S::zero() || self.close < S::zero() {
            return Err(invalid(record, "time window bounds must be non-negative"));
        }
        if self.open > self.close {
            return Err(invalid(
                record,
                format!("window opens at {} after it closes at {}", self.open, self.close),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Customer<S = f64> {
    /// 1-based id as it appears in instance files.
    pub id: usize,
    pub location: Point<S>,
    pub demand: u32,
    pub window: TimeWindow<S>,
    pub service_time: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompanyFleet<S = f64> {
    pub count: usize,
    pub capacity: u32,
    pub depot_window: TimeWindow<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccasionalDriver<S = f64> {
    pub id: usize,
    pub destination: Point<S>,
    pub capacity: u32,
    pub window: TimeWindow<S>,
}

/// Dense square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    dim: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![S::zero(); dim * dim],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: S) {
        self.data[i * self.dim + j] = value;
    }

    pub fn max_entry(&self) -> S {
        self.data.iter().copied().fold(S::zero(), S::max)
    }
}

impl<S> std::ops::Index<(usize, usize)> for Matrix<S> {
    type Output = S;

    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.dim + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance<S = f64> {
    pub name: String,
    pub depot: Point<S>,
    pub customers: Vec<Customer<S>>,
    pub fleet: CompanyFleet<S>,
    pub ods: Vec<OccasionalDriver<S>>,
    pub cost: Matrix<S>,
    pub time: Matrix<S>,
}

const GRID: f64 = 1e9;

/// Euclidean cost and travel-time matrices over `N`, snapped to a 1e-9 grid.
pub fn build_matrices<S: Scalar>(
    depot: Point<S>,
    customers: &[Customer<S>],
    ods: &[OccasionalDriver<S>],
) -> (Matrix<S>, Matrix<S>) {
    let mut points = Vec::with_capacity(customers.len() + ods.len() + 2);
    points.push(depot);
    points.extend(customers.iter().map(|c| c.location));
    points.extend(ods.iter().map(|k| k.destination));
    points.push(depot);

    let dim = points.len();
    let mut cost = Matrix::zeros(dim);
    for i in 0..dim {
        for j in (i + 1)..dim {
            let exact = points[i].distance(&points[j]).as_f64();
            let snapped = S::of((exact * GRID).round() / GRID);
            cost.set(i, j, snapped);
            cost.set(j, i, snapped);
        }
    }
    let time = cost.clone();
    (cost, time)
}

impl<S: Scalar> Instance<S> {
    /// Validates the records and builds the matrices.
    pub fn new(
        name: impl Into<String>,
        depot: Point<S>,
        customers: Vec<Customer<S>>,
        fleet: CompanyFleet<S>,
        ods: Vec<OccasionalDriver<S>>,
    ) -> Result<Self, InstanceError> {
        if !depot.is_finite() {
            return Err(invalid("DEPOT", "coordinates must be finite"));
        }
        if fleet.capacity == 0 {
            return Err(invalid("FLEET", "capacity must be positive"));
        }
        fleet.depot_window.validate("FLEET")?;
        for (i, c) in customers.iter().enumerate() {
            let record = format!("CUST {}", c.id);
            if c.id != i + 1 {
                return Err(invalid(record, format!("expected id {}", i + 1)));
            }
            if !c.location.is_finite() {
                return Err(invalid(record, "coordinates must be finite"));
            }
            if !(c.service_time >= S::zero()) || !c.service_time.is_finite() {
                return Err(invalid(record, "service time must be finite and non-negative"));
            }
            c.window.validate(&record)?;
        }
        for (k, od) in ods.iter().enumerate() {
            let record = format!("OD {}", od.id);
            if od.id != k + 1 {
                return Err(invalid(record, format!("expected id {}", k + 1)));
            }
            if !od.destination.is_finite() {
                return Err(invalid(record, "coordinates must be finite"));
            }
            if od.capacity == 0 {
                return Err(invalid(record, "capacity must be positive"));
            }
            od.window.validate(&record)?;
        }
        let (cost, time) = build_matrices(depot, &customers, &ods);
        Ok(Self {
            name: name.into(),
            depot,
            customers,
            fleet,
            ods,
            cost,
            time,
        })
    }

    #[inline]
    pub fn num_customers(&self) -> usize {
        self.customers.len()
    }

    #[inline]
    pub fn num_company(&self) -> usize {
        self.fleet.count
    }

    #[inline]
    pub fn num_ods(&self) -> usize {
        self.ods.len()
    }

    /// `|C| + |D| + |K|`, the chromosome length.
    #[inline]
    pub fn num_genes(&self) -> usize {
        self.num_customers() + self.num_company() + self.num_ods()
    }

    /// `|N|`.
    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_customers() + self.num_ods() + 2
    }

    #[inline]
    pub fn origin_node(&self) -> usize {
        0
    }

    #[inline]
    pub fn customer_node(&self, customer: usize) -> usize {
        1 + customer
    }

    #[inline]
    pub fn od_node(&self, od: usize) -> usize {
        1 + self.num_customers() + od
    }

    #[inline]
    pub fn company_sink_node(&self) -> usize {
        1 + self.num_customers() + self.num_ods()
    }

    /// Capacity of the driver referenced.
    pub fn capacity_of(&self, driver: DriverRef) -> u32 {
        match driver {
            DriverRef::Company(_) => self.fleet.capacity,
            DriverRef::Occasional(k) => self.ods[k].capacity,
        }
    }

    /// Destination node of a driver (`b` or `v_k`).
    pub fn destination_node(&self, driver: DriverRef) -> usize {
        match driver {
            DriverRef::Company(_) => self.company_sink_node(),
            DriverRef::Occasional(k) => self.od_node(k),
        }
    }

    /// `(departure time from o, deadline at destination)` for a driver.
    pub fn operating_window(&self, driver: DriverRef) -> TimeWindow<S> {
        match driver {
            DriverRef::Company(_) => self.fleet.depot_window,
            DriverRef::Occasional(k) => self.ods[k].window,
        }
    }

    /// Does `driver` index an existing driver?
    pub fn has_driver(&self, driver: DriverRef) -> bool {
        match driver {
            DriverRef::Company(d) => d < self.num_company(),
            DriverRef::Occasional(k) => k < self.num_ods(),
        }
    }

    /// Serializes to the line-oriented instance format.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl<S: Scalar> fmt::Display for Instance<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "NAME {}", self.name)?;
        writeln!(
            f,
            "FLEET {} {} {} {}",
            self.fleet.count,
            self.fleet.capacity,
            self.fleet.depot_window.open,
            self.fleet.depot_window.close
        )?;
        writeln!(f, "DEPOT {} {}", self.depot.x, self.depot.y)?;
        for c in &self.customers {
            writeln!(
                f,
                "CUST {} {} {} {} {} {} {}",
                c.id, c.location.x, c.location.y, c.demand, c.window.open, c.window.close, c.service_time
            )?;
        }
        for k in &self.ods {
            writeln!(
                f,
                "OD {} {} {} {} {} {}",
                k.id, k.destination.x, k.destination.y, k.capacity, k.window.open, k.window.close
            )?;
        }
        Ok(())
    }
}

struct Fields<'a> {
    line: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn next<T: FromStr>(&mut self, what: &str) -> Result<T, InstanceError> {
        let token = self.tokens.next().ok_or_else(|| InstanceError::Parse {
            line: self.line,
            message: format!("missing {what}"),
        })?;
        token.parse().map_err(|_| InstanceError::Parse {
            line: self.line,
            message: format!("cannot parse {what} from {token:?}"),
        })
    }

    fn scalar<S: Scalar>(&mut self, what: &str) -> Result<S, InstanceError> {
        let v: f64 = self.next(what)?;
        if v.is_nan() {
            return Err(InstanceError::Parse {
                line: self.line,
                message: format!("{what} is NaN"),
            });
        }
        Ok(S::of(v))
    }

    fn finish(mut self) -> Result<(), InstanceError> {
        match self.tokens.next() {
            None => Ok(()),
            Some(extra) => Err(InstanceError::Parse {
                line: self.line,
                message: format!("unexpected trailing token {extra:?}"),
            }),
        }
    }
}

/// Parses the line-oriented instance format (`#` starts a comment).
pub fn parse_instance<S: Scalar>(text: &str) -> Result<Instance<S>, InstanceError> {
    let mut name: Option<String> = None;
    let mut fleet: Option<CompanyFleet<S>> = None;
    let mut depot: Option<Point<S>> = None;
    let mut customers: BTreeMap<usize, Customer<S>> = BTreeMap::new();
    let mut ods: BTreeMap<usize, OccasionalDriver<S>> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (keyword, rest) = content
            .split_once(char::is_whitespace)
            .unwrap_or((content, ""));
        let duplicate = |what: &str| InstanceError::Parse {
            line,
            message: format!("duplicate {what} record"),
        };
        match keyword {
            "NAME" => {
                if name.is_some() {
                    return Err(duplicate("NAME"));
                }
                name = Some(rest.trim().to_string());
            }
            "FLEET" => {
                if fleet.is_some() {
                    return Err(duplicate("FLEET"));
                }
                let mut f = Fields { line, tokens: rest.split_whitespace() };
                let count = f.next("vehicle count")?;
                let capacity = f.next("capacity")?;
                let open = f.scalar("depot window open")?;
                let close = f.scalar("depot window close")?;
                f.finish()?;
                fleet = Some(CompanyFleet {
                    count,
                    capacity,
                    depot_window: TimeWindow::new(open, close),
                });
            }
            "DEPOT" => {
                if depot.is_some() {
                    return Err(duplicate("DEPOT"));
                }
                let mut f = Fields { line, tokens: rest.split_whitespace() };
                let x = f.scalar("x")?;
                let y = f.scalar("y")?;
                f.finish()?;
                depot = Some(Point::new(x, y));
            }
            "CUST" => {
                let mut f = Fields { line, tokens: rest.split_whitespace() };
                let id: usize = f.next("customer id")?;
                let x = f.scalar("x")?;
                let y = f.scalar("y")?;
                let demand = f.next("demand")?;
                let open = f.scalar("window open")?;
                let close = f.scalar("window close")?;
                let service_time = f.scalar("service time")?;
                f.finish()?;
                if customers.contains_key(&id) {
                    return Err(invalid(format!("CUST {id}"), format!("duplicate customer id (line {line})")));
                }
                customers.insert(
                    id,
                    Customer {
                        id,
                        location: Point::new(x, y),
                        demand,
                        window: TimeWindow::new(open, close),
                        service_time,
                    },
                );
            }
            "OD" => {
                let mut f = Fields { line, tokens: rest.split_whitespace() };
                let id: usize = f.next("driver id")?;
                let x = f.scalar("destination x")?;
                let y = f.scalar("destination y")?;
                let capacity = f.next("capacity")?;
                let open = f.scalar("window open")?;
                let close = f.scalar("window close")?;
                f.finish()?;
                if ods.contains_key(&id) {
                    return Err(invalid(format!("OD {id}"), format!("duplicate driver id (line {line})")));
                }
                ods.insert(
                    id,
                    OccasionalDriver {
                        id,
                        destination: Point::new(x, y),
                        capacity,
                        window: TimeWindow::new(open, close),
                    },
                );
            }
            other => {
                return Err(InstanceError::Parse {
                    line,
                    message: format!("unknown record {other:?}"),
                })
            }
        }
    }

    let fleet = fleet.ok_or_else(|| invalid("FLEET", "missing record"))?;
    let depot = depot.ok_or_else(|| invalid("DEPOT", "missing record"))?;
    Instance::new(
        name.unwrap_or_default(),
        depot,
        customers.into_values().collect(),
        fleet,
        ods.into_values().collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetworkType {
    Clustered,
    Random,
    Mixed,
}

impl NetworkType {
    /// Solomon-style name prefix.
    pub fn prefix(&self) -> &'static str {
        match self {
            NetworkType::Clustered => "C",
            NetworkType::Random => "R",
            NetworkType::Mixed => "RC",
        }
    }
}

impl FromStr for NetworkType {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "clustered" | "c" => Ok(NetworkType::Clustered),
            "random" | "r" => Ok(NetworkType::Random),
            "mixed" | "rc" => Ok(NetworkType::Mixed),
            _ => Err(InstanceError::Generate(format!("unknown network type {s:?}"))),
        }
    }
}

/// One row of the instance-characteristics table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeClass {
    pub customers: usize,
    pub demand: (u32, u32),
    pub company: usize,
    pub occasional: usize,
    pub capacity: u32,
    pub od_capacity: (u32, u32),
}

pub const SIZE_CLASSES: [SizeClass; 6] = [
    SizeClass { customers: 5, demand: (4, 40), company: 3, occasional: 3, capacity: 80, od_capacity: (10, 25) },
    SizeClass { customers: 10, demand: (1, 40), company: 3, occasional: 3, capacity: 80, od_capacity: (10, 30) },
    SizeClass { customers: 15, demand: (1, 50), company: 3, occasional: 5, capacity: 80, od_capacity: (15, 35) },
    SizeClass { customers: 25, demand: (2, 40), company: 5, occasional: 10, capacity: 100, od_capacity: (20, 40) },
    SizeClass { customers: 50, demand: (1, 40), company: 8, occasional: 15, capacity: 200, od_capacity: (20, 40) },
    SizeClass { customers: 100, demand: (1, 50), company: 10, occasional: 30, capacity: 400, od_capacity: (20, 40) },
];

/// Row with the nearest customer count (ties go to the smaller row).
pub fn size_class_for(n_customers: usize) -> &'static SizeClass {
    SIZE_CLASSES
        .iter()
        .min_by_key(|row| (row.customers.abs_diff(n_customers), row.customers))
        .expect("table is non-empty")
}

/// Parameters for [`GeneratorConfig::generate`]. Driver counts default to the
/// size-class row.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_customers: usize,
    pub network: NetworkType,
    pub seed: u64,
    pub company_drivers: Option<usize>,
    pub occasional_drivers: Option<usize>,
}

impl GeneratorConfig {
    pub fn new(n_customers: usize, network: NetworkType, seed: u64) -> Self {
        Self {
            n_customers,
            network,
            seed,
            company_drivers: None,
            occasional_drivers: None,
        }
    }

    pub fn with_drivers(mut self, company: usize, occasional: usize) -> Self {
        self.company_drivers = Some(company);
        self.occasional_drivers = Some(occasional);
        self
    }

    pub fn generate<S: Scalar>(&self) -> Result<Instance<S>, InstanceError> {
        generate_with(self)
    }
}

/// Generates an instance from the size-class table for `n_customers`.
pub fn generate_instance<S: Scalar>(
    n_customers: usize,
    network: NetworkType,
    seed: u64,
) -> Result<Instance<S>, InstanceError> {
    GeneratorConfig::new(n_customers, network, seed).generate()
}

const SIDE: f64 = 100.0;
const MAX_DEMAND_DRAWS: usize = 64;

fn uniform_point(rng: &mut ChaCha8Rng) -> (f64, f64) {
    (rng.random_range(0.0..SIDE), rng.random_range(0.0..SIDE))
}

fn clustered_points(rng: &mut ChaCha8Rng, count: usize) -> Vec<(f64, f64)> {
    let centers: Vec<(f64, f64)> = (0..rng.random_range(3..=5))
        .map(|_| (rng.random_range(15.0..85.0), rng.random_range(15.0..85.0)))
        .collect();
    let spread = Normal::new(0.0, 6.0).expect("valid normal");
    (0..count)
        .map(|_| {
            let (cx, cy) = centers[rng.random_range(0..centers.len())];
            let x = (cx + spread.sample(rng)).clamp(0.0, SIDE);
            let y = (cy + spread.sample(rng)).clamp(0.0, SIDE);
            (x, y)
        })
        .collect()
}

/// Packs customers (in sweep order) into drivers in the given order. Returns
/// per-driver customer lists, or `None` when some customer does not fit.
fn pack(order: &[usize], demands: &[u32], capacities: &[u32]) -> Option<Vec<Vec<usize>>> {
    let mut routes = vec![Vec::new(); capacities.len()];
    let mut remaining = capacities.to_vec();
    let mut current = 0;
    for &c in order {
        while current < remaining.len() && remaining[current] < demands[c] {
            current += 1;
        }
        if current == remaining.len() {
            // fall back to any driver with room
            let slot = remaining.iter().position(|&r| r >= demands[c])?;
            remaining[slot] -= demands[c];
            routes[slot].push(c);
            current = 0;
            continue;
        }
        remaining[current] -= demands[c];
        routes[current].push(c);
    }
    Some(routes)
}

fn generate_with<S: Scalar>(config: &GeneratorConfig) -> Result<Instance<S>, InstanceError> {
    let n = config.n_customers;
    if n == 0 {
        return Err(InstanceError::Generate("n_customers must be positive".into()));
    }
    let row = size_class_for(n);
    let company = config.company_drivers.unwrap_or(row.company);
    let occasional = config.occasional_drivers.unwrap_or(row.occasional);
    if company == 0 {
        return Err(InstanceError::Generate("at least one company driver is required".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let depot = (SIDE / 2.0, SIDE / 2.0);
    let locations = match config.network {
        NetworkType::Random => (0..n).map(|_| uniform_point(&mut rng)).collect::<Vec<_>>(),
        NetworkType::Clustered => clustered_points(&mut rng, n),
        NetworkType::Mixed => {
            let clustered = n / 2;
            let mut pts = clustered_points(&mut rng, clustered);
            pts.extend((clustered..n).map(|_| uniform_point(&mut rng)));
            pts
        }
    };
    let destinations: Vec<(f64, f64)> = (0..occasional).map(|_| uniform_point(&mut rng)).collect();
    let od_capacities: Vec<u32> = (0..occasional)
        .map(|_| rng.random_range(row.od_capacity.0..=row.od_capacity.1))
        .collect();

    // Sweep order around the depot from a random starting angle.
    let start_angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut order: Vec<usize> = (0..n).collect();
    let angle = |c: usize| {
        let (x, y) = locations[c];
        ((y - depot.1).atan2(x - depot.0) - start_angle).rem_euclid(std::f64::consts::TAU)
    };
    order.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)));

    // Planned driver order: a random interleaving of company and OD drivers.
    let mut drivers: Vec<DriverRef> = (0..company)
        .map(DriverRef::Company)
        .chain((0..occasional).map(DriverRef::Occasional))
        .collect();
    for i in (1..drivers.len()).rev() {
        let j = rng.random_range(0..=i);
        drivers.swap(i, j);
    }
    let capacities: Vec<u32> = drivers
        .iter()
        .map(|d| match d {
            DriverRef::Company(_) => row.capacity,
            DriverRef::Occasional(k) => od_capacities[*k],
        })
        .collect();

    let mut demands: Vec<u32> = Vec::new();
    let mut plan = None;
    for _ in 0..MAX_DEMAND_DRAWS {
        demands = (0..n).map(|_| rng.random_range(row.demand.0..=row.demand.1)).collect();
        if let Some(p) = pack(&order, &demands, &capacities) {
            plan = Some(p);
            break;
        }
    }
    let plan = match plan {
        Some(p) => p,
        None => {
            // Scale demands down until the planned packing fits.
            let total_cap: u64 = capacities.iter().map(|&c| c as u64).sum();
            let mut scale = 0.9;
            loop {
                let scaled: Vec<u32> = demands
                    .iter()
                    .map(|&d| ((d as f64 * scale).floor() as u32).max(1))
                    .collect();
                if let Some(p) = pack(&order, &scaled, &capacities) {
                    demands = scaled;
                    break p;
                }
                if scale < 1e-3 || (n as u64) > total_cap {
                    return Err(InstanceError::Generate(
                        "driver capacities cannot cover customer demand".into(),
                    ));
                }
                scale *= 0.9;
            }
        }
    };

    // Time windows are placed around the planned service times.
    let dist = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
    let (half_min, half_max) = match config.network {
        NetworkType::Clustered => (10.0, 40.0),
        NetworkType::Random => (15.0, 60.0),
        NetworkType::Mixed => (12.0, 50.0),
    };
    let mut windows = vec![(0.0, 0.0); n];
    let mut od_windows: Vec<(f64, f64)> = vec![(0.0, 0.0); occasional];
    let mut latest_return: f64 = 0.0;
    for (driver, customers) in drivers.iter().zip(&plan) {
        let mut clock = match driver {
            DriverRef::Company(_) => 0.0,
            DriverRef::Occasional(_) => rng.random_range(0.0..40.0),
        };
        let departure = clock;
        let mut at = depot;
        for &c in customers {
            clock += dist(at, locations[c]);
            at = locations[c];
            let open = (clock - rng.random_range(half_min..half_max)).max(0.0);
            let close = clock + rng.random_range(half_min..half_max);
            windows[c] = (open.floor(), close.ceil());
        }
        match driver {
            DriverRef::Company(_) => {
                latest_return = latest_return.max(clock + dist(at, depot));
            }
            DriverRef::Occasional(k) => {
                let arrive = clock + dist(at, destinations[*k]);
                let slack = rng.random_range(10.0..60.0);
                od_windows[*k] = (departure.floor(), (arrive + slack).ceil());
            }
        }
    }
    // Every customer is individually reachable by a company vehicle.
    for (c, &(_, close)) in windows.iter().enumerate() {
        latest_return = latest_return.max(close + dist(locations[c], depot));
    }
    let horizon = (latest_return + 20.0).ceil();

    let customers: Vec<Customer<S>> = (0..n)
        .map(|c| Customer {
            id: c + 1,
            location: Point::new(S::of(locations[c].0), S::of(locations[c].1)),
            demand: demands[c],
            window: TimeWindow::new(S::of(windows[c].0), S::of(windows[c].1)),
            service_time: S::zero(),
        })
        .collect();
    let ods: Vec<OccasionalDriver<S>> = (0..occasional)
        .map(|k| OccasionalDriver {
            id: k + 1,
            destination: Point::new(S::of(destinations[k].0), S::of(destinations[k].1)),
            capacity: od_capacities[k],
            window: TimeWindow::new(S::of(od_windows[k].0), S::of(od_windows[k].1)),
        })
        .collect();
    let fleet = CompanyFleet {
        count: company,
        capacity: row.capacity,
        depot_window: TimeWindow::new(S::zero(), S::of(horizon)),
    };
    let name = format!("{}{}C{}s{}", config.network.prefix(), n, company, config.seed);
    let instance = Instance::new(name, Point::new(S::of(depot.0), S::of(depot.1)), customers, fleet, ods)?;

    let routes: Vec<Route<S>> = drivers
        .iter()
        .zip(&plan)
        .filter(|(_, visits)| !visits.is_empty())
        .map(|(&driver, visits)| Route::new(driver, visits.clone()))
        .collect();
    let planned = Solution::from_routes(routes, &instance, S::of(0.6));
    let report = check_feasible(&planned, &instance);
    if !report.is_feasible() {
        return Err(InstanceError::Generate(format!(
            "planned solution is infeasible: {report}"
        )));
    }
    Ok(instance)
}
