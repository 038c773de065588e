//! Routes, the cost function, an independent feasibility validator and the
//! solution-to-chromosome encoder.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genetics::Chromosome;
use crate::instance::Instance;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriverKind {
    Company,
    Occasional,
}

/// A company vehicle (`D`) or an occasional driver (`K`), by ordinal within its kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DriverRef {
    Company(usize),
    Occasional(usize),
}

impl DriverRef {
    pub fn kind(&self) -> DriverKind {
        match self {
            DriverRef::Company(_) => DriverKind::Company,
            DriverRef::Occasional(_) => DriverKind::Occasional,
        }
    }

    pub fn index(&self) -> usize {
        match *self {
            DriverRef::Company(i) | DriverRef::Occasional(i) => i,
        }
    }

    pub fn is_occasional(&self) -> bool {
        matches!(self, DriverRef::Occasional(_))
    }

    pub fn from_parts(kind: DriverKind, index: usize) -> Self {
        match kind {
            DriverKind::Company => DriverRef::Company(index),
            DriverKind::Occasional => DriverRef::Occasional(index),
        }
    }
}

impl fmt::Display for DriverRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriverRef::Company(d) => write!(f, "company driver {}", d + 1),
            DriverRef::Occasional(k) => write!(f, "occasional driver {}", k + 1),
        }
    }
}

/// One driver's visit sequence. `visits` holds 0-based customer indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Route<S = f64> {
    pub driver: DriverRef,
    pub visits: Vec<usize>,
    /// Service start at each visit.
    pub arrival_times: Vec<S>,
    pub load: u32,
}

impl<S: Scalar> Route<S> {
    /// A route without schedule data; see [`Solution::from_routes`].
    pub fn new(driver: DriverRef, visits: Vec<usize>) -> Self {
        Self {
            driver,
            visits,
            arrival_times: Vec::new(),
            load: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<S = f64> {
    pub routes: Vec<Route<S>>,
    pub objective: S,
}

impl<S: Scalar> Default for Solution<S> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<S: Scalar> Solution<S> {
    pub fn empty() -> Self {
        Self {
            routes: Vec::new(),
            objective: S::zero(),
        }
    }

    /// Fills schedules and loads, drops empty routes and evaluates the objective.
    pub fn from_routes(routes: Vec<Route<S>>, instance: &Instance<S>, rho: S) -> Self {
        let routes: Vec<Route<S>> = routes
            .into_iter()
            .filter(|r| !r.visits.is_empty())
            .map(|r| {
                let schedule = route_schedule(instance, r.driver, &r.visits);
                Route {
                    driver: r.driver,
                    visits: r.visits,
                    arrival_times: schedule.service_starts,
                    load: schedule.load,
                }
            })
            .collect();
        let mut solution = Self {
            routes,
            objective: S::zero(),
        };
        solution.objective = evaluate_objective(&solution, instance, rho);
        solution
    }

    pub fn num_served(&self) -> usize {
        self.routes.iter().map(|r| r.visits.len()).sum()
    }

    /// Same drivers visiting the same sequences, ignoring schedules.
    pub fn same_routes(&self, other: &Self) -> bool {
        self.routes.len() == other.routes.len()
            && self
                .routes
                .iter()
                .zip(&other.routes)
                .all(|(a, b)| a.driver == b.driver && a.visits == b.visits)
    }
}

/// Arc cost of a route including the OD compensation and direct-trip credit.
pub fn route_cost<S: Scalar>(instance: &Instance<S>, driver: DriverRef, visits: &[usize], rho: S) -> S {
    if visits.is_empty() {
        return S::zero();
    }
    let mut at = instance.origin_node();
    let mut arcs = S::zero();
    for &c in visits {
        let node = instance.customer_node(c);
        arcs = arcs + instance.cost.get(at, node);
        at = node;
    }
    let dest = instance.destination_node(driver);
    arcs = arcs + instance.cost.get(at, dest);
    match driver {
        DriverRef::Company(_) => arcs,
        DriverRef::Occasional(_) => rho * arcs - instance.cost.get(instance.origin_node(), dest),
    }
}

/// Company route arcs plus, for each used OD, `rho * arcs - c(o, v_k)`.
pub fn evaluate_objective<S: Scalar>(solution: &Solution<S>, instance: &Instance<S>, rho: S) -> S {
    solution
        .routes
        .iter()
        .map(|r| route_cost(instance, r.driver, &r.visits, rho))
        .fold(S::zero(), |acc, c| acc + c)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RouteSchedule<S> {
    pub service_starts: Vec<S>,
    /// Arrival at the driver's destination.
    pub end: S,
    pub load: u32,
}

/// Waiting-allowed schedule of `visits` for `driver`; does not check windows.
pub(crate) fn route_schedule<S: Scalar>(
    instance: &Instance<S>,
    driver: DriverRef,
    visits: &[usize],
) -> RouteSchedule<S> {
    let mut clock = instance.operating_window(driver).open;
    let mut at = instance.origin_node();
    let mut starts = Vec::with_capacity(visits.len());
    let mut load = 0u32;
    for &c in visits {
        let cust = &instance.customers[c];
        let node = instance.customer_node(c);
        let start = (clock + instance.time.get(at, node)).max(cust.window.open);
        starts.push(start);
        clock = start + cust.service_time;
        at = node;
        load = load.saturating_add(cust.demand);
    }
    let end = clock + instance.time.get(at, instance.destination_node(driver));
    RouteSchedule {
        service_starts: starts,
        end,
        load,
    }
}

/// Is `visits` a feasible sequence for `driver` (capacity and all windows)?
pub(crate) fn route_is_feasible<S: Scalar>(instance: &Instance<S>, driver: DriverRef, visits: &[usize]) -> bool {
    let mut clock = instance.operating_window(driver).open;
    let mut at = instance.origin_node();
    let mut load = 0u32;
    let capacity = instance.capacity_of(driver);
    for &c in visits {
        let cust = &instance.customers[c];
        load = load.saturating_add(cust.demand);
        if load > capacity {
            return false;
        }
        let node = instance.customer_node(c);
        let start = (clock + instance.time.get(at, node)).max(cust.window.open);
        if start > cust.window.close {
            return false;
        }
        clock = start + cust.service_time;
        at = node;
    }
    clock + instance.time.get(at, instance.destination_node(driver)) <= instance.operating_window(driver).close
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownDriver(DriverRef),
    UnknownCustomer { driver: DriverRef, customer: usize },
    DuplicateDriver(DriverRef),
    ServedTwice { customer: usize },
    Unserved { customer: usize },
    Capacity { driver: DriverRef, load: u32, capacity: u32 },
    TimeWindow { driver: DriverRef, customer: usize, start: f64, close: f64 },
    DepartureBound { driver: DriverRef, customer: usize, start: f64, bound: f64 },
    LateAtDestination { driver: DriverRef, arrival: f64, deadline: f64 },
    TooManyCompanyRoutes { used: usize, available: usize },
    ScheduleMismatch { driver: DriverRef, customer: usize, recorded: f64, computed: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownDriver(d) => write!(f, "unknown driver: {d}"),
            Violation::UnknownCustomer { driver, customer } => {
                write!(f, "unknown customer: index {customer} on {driver}")
            }
            Violation::DuplicateDriver(d) => write!(f, "duplicate driver: {d} has more than one route"),
            Violation::ServedTwice { customer } => write!(f, "served twice: customer {}", customer + 1),
            Violation::Unserved { customer } => write!(f, "unserved: customer {}", customer + 1),
            Violation::Capacity { driver, load, capacity } => {
                write!(f, "capacity: {driver} carries {load} > {capacity}")
            }
            Violation::TimeWindow { driver, customer, start, close } => write!(
                f,
                "time window: customer {} served at {start} after close {close} by {driver}",
                customer + 1
            ),
            Violation::DepartureBound { driver, customer, start, bound } => write!(
                f,
                "departure bound: customer {} served at {start} before {bound} by {driver}",
                customer + 1
            ),
            Violation::LateAtDestination { driver, arrival, deadline } => {
                write!(f, "late at destination: {driver} arrives {arrival} > {deadline}")
            }
            Violation::TooManyCompanyRoutes { used, available } => {
                write!(f, "fleet size: {used} company routes but only {available} vehicles")
            }
            Violation::ScheduleMismatch { driver, customer, recorded, computed } => write!(
                f,
                "schedule mismatch: customer {} recorded at {recorded}, computed {computed} on {driver}",
                customer + 1
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "feasible");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every routing constraint of the model. Violations are data: an
/// empty report means the solution is feasible. Times are compared with
/// [`Scalar::TOLERANCE`] slack.
pub fn check_feasible<S: Scalar>(solution: &Solution<S>, instance: &Instance<S>) -> FeasibilityReport {
    let tol = S::TOLERANCE;
    let mut violations = Vec::new();
    let n = instance.num_customers();
    let mut served = vec![0usize; n];
    let mut drivers_seen = std::collections::HashSet::new();
    let mut company_routes = 0usize;

    for route in solution.routes.iter().filter(|r| !r.visits.is_empty()) {
        let driver = route.driver;
        if !instance.has_driver(driver) {
            violations.push(Violation::UnknownDriver(driver));
            continue;
        }
        if !drivers_seen.insert(driver) {
            violations.push(Violation::DuplicateDriver(driver));
        }
        if !driver.is_occasional() {
            company_routes += 1;
        }
        if let Some(&bad) = route.visits.iter().find(|&&c| c >= n) {
            violations.push(Violation::UnknownCustomer { driver, customer: bad });
            continue;
        }

        let window = instance.operating_window(driver);
        let origin = instance.origin_node();
        let mut clock = window.open;
        let mut at = origin;
        let mut load = 0u32;
        for (pos, &c) in route.visits.iter().enumerate() {
            served[c] += 1;
            let cust = &instance.customers[c];
            load = load.saturating_add(cust.demand);
            let node = instance.customer_node(c);
            let start = (clock + instance.time.get(at, node)).max(cust.window.open);
            if start > cust.window.close + tol {
                violations.push(Violation::TimeWindow {
                    driver,
                    customer: c,
                    start: start.as_f64(),
                    close: cust.window.close.as_f64(),
                });
            }
            if driver.is_occasional() {
                // f_i >= e_{v_k} + t_{oi}
                let bound = window.open + instance.time.get(origin, node);
                if start + tol < bound {
                    violations.push(Violation::DepartureBound {
                        driver,
                        customer: c,
                        start: start.as_f64(),
                        bound: bound.as_f64(),
                    });
                }
            }
            if let Some(&recorded) = route.arrival_times.get(pos) {
                if !recorded.approx_eq(start) {
                    violations.push(Violation::ScheduleMismatch {
                        driver,
                        customer: c,
                        recorded: recorded.as_f64(),
                        computed: start.as_f64(),
                    });
                }
            }
            clock = start + cust.service_time;
            at = node;
        }
        let capacity = instance.capacity_of(driver);
        if load > capacity {
            violations.push(Violation::Capacity { driver, load, capacity });
        }
        let arrival = clock + instance.time.get(at, instance.destination_node(driver));
        if arrival > window.close + tol {
            violations.push(Violation::LateAtDestination {
                driver,
                arrival: arrival.as_f64(),
                deadline: window.close.as_f64(),
            });
        }
    }

    if company_routes > instance.num_company() {
        violations.push(Violation::TooManyCompanyRoutes {
            used: company_routes,
            available: instance.num_company(),
        });
    }
    for (c, &count) in served.iter().enumerate() {
        match count {
            0 => violations.push(Violation::Unserved { customer: c }),
            1 => {}
            _ => violations.push(Violation::ServedTwice { customer: c }),
        }
    }
    FeasibilityReport { violations }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("cannot encode an infeasible solution: {0}")]
    Infeasible(String),
}

/// Canonical chromosome for a feasible solution.
///
/// Customer keys increase with (route rank, position); the drivers of the
/// routes get the lowest driver keys in route order, unused drivers follow in
/// index order. Decoding with delivery forced to accept reproduces the routes
/// whenever no customer could have been appended to an earlier route at the
/// time it was appended to its own, which holds for every decode produced
/// under `prDel = 1`.
pub fn encode<S: Scalar>(solution: &Solution<S>, instance: &Instance<S>) -> Result<Chromosome<S>, EncodeError> {
    let report = check_feasible(solution, instance);
    if !report.is_feasible() {
        return Err(EncodeError::Infeasible(report.to_string()));
    }
    let c = instance.num_customers();
    let d = instance.num_company();
    let drivers = d + instance.num_ods();
    let mut genes = vec![0.0; c + drivers];

    let mut rank = 0usize;
    for route in solution.routes.iter().filter(|r| !r.visits.is_empty()) {
        for &customer in &route.visits {
            genes[customer] = (rank as f64 + 0.5) / c as f64;
            rank += 1;
        }
    }

    let slot = |driver: DriverRef| match driver {
        DriverRef::Company(i) => c + i,
        DriverRef::Occasional(k) => c + d + k,
    };
    let mut assigned = vec![false; drivers];
    let mut next = 0usize;
    for route in solution.routes.iter().filter(|r| !r.visits.is_empty()) {
        let g = slot(route.driver);
        genes[g] = (next as f64 + 0.5) / drivers as f64;
        assigned[g - c] = true;
        next += 1;
    }
    for (i, used) in assigned.iter().enumerate() {
        if !used {
            genes[c + i] = (next as f64 + 0.5) / drivers as f64;
            next += 1;
        }
    }
    Ok(Chromosome::new(genes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRecord {
    pub kind: DriverKind,
    /// 0-based ordinal within the driver kind.
    pub index: usize,
    /// Customer ids (1-based, as in the instance file).
    pub customers: Vec<usize>,
    #[serde(default)]
    pub arrival_times: Vec<f64>,
    #[serde(default)]
    pub load: u32,
}

/// On-disk JSON form of a [`Solution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    #[serde(default)]
    pub instance: String,
    pub objective: f64,
    pub routes: Vec<RouteRecord>,
}

#[derive(Debug, Error)]
pub enum SolutionIoError {
    #[error("malformed solution JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("customer id 0 is not valid (ids start at 1)")]
    ZeroCustomerId,
}

impl SolutionRecord {
    pub fn from_solution<S: Scalar>(solution: &Solution<S>, instance_name: &str) -> Self {
        Self {
            instance: instance_name.to_string(),
            objective: solution.objective.as_f64(),
            routes: solution
                .routes
                .iter()
                .map(|r| RouteRecord {
                    kind: r.driver.kind(),
                    index: r.driver.index(),
                    customers: r.visits.iter().map(|&c| c + 1).collect(),
                    arrival_times: r.arrival_times.iter().map(|t| t.as_f64()).collect(),
                    load: r.load,
                })
                .collect(),
        }
    }

    pub fn to_solution<S: Scalar>(&self) -> Result<Solution<S>, SolutionIoError> {
        let mut routes = Vec::with_capacity(self.routes.len());
        for r in &self.routes {
            let visits = r
                .customers
                .iter()
                .map(|&id| id.checked_sub(1).ok_or(SolutionIoError::ZeroCustomerId))
                .collect::<Result<Vec<_>, _>>()?;
            routes.push(Route {
                driver: DriverRef::from_parts(r.kind, r.index),
                visits,
                arrival_times: r.arrival_times.iter().map(|&t| S::of(t)).collect(),
                load: r.load,
            });
        }
        Ok(Solution {
            routes,
            objective: S::of(self.objective),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SolutionIoError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{CompanyFleet, Customer, OccasionalDriver, Point, TimeWindow};

    fn line_instance(windows: &[(f64, f64)]) -> Instance {
        let customers = windows
            .iter()
            .enumerate()
            .map(|(i, &(e, l))| Customer {
                id: i + 1,
                location: Point::new(3.0 * (i + 1) as f64, 4.0 * (i + 1) as f64),
                demand: 1,
                window: TimeWindow::new(e, l),
                service_time: 0.0,
            })
            .collect();
        Instance::new(
            "line",
            Point::new(0.0, 0.0),
            customers,
            CompanyFleet { count: 1, capacity: 10, depot_window: TimeWindow::new(0.0, 1000.0) },
            vec![OccasionalDriver {
                id: 1,
                destination: Point::new(6.0, 8.0),
                capacity: 5,
                window: TimeWindow::new(0.0, 1000.0),
            }],
        )
        .unwrap()
    }

    #[test]
    fn empty_solution_costs_nothing() {
        let inst = line_instance(&[]);
        let sol = Solution::empty();
        assert_eq!(evaluate_objective(&sol, &inst, 0.6), 0.0);
        assert!(check_feasible(&sol, &inst).is_feasible());
    }

    #[test]
    fn company_and_od_costs_match_hand_values() {
        let inst = line_instance(&[(0.0, 100.0)]);
        let company = Solution::from_routes(vec![Route::new(DriverRef::Company(0), vec![0])], &inst, 0.6);
        assert!((company.objective - 10.0).abs() < 1e-12);
        let od = Solution::from_routes(vec![Route::new(DriverRef::Occasional(0), vec![0])], &inst, 0.6);
        assert!((od.objective - (-4.0)).abs() < 1e-12);
    }

    #[test]
    fn second_customer_window_violation_is_named() {
        // c1 at distance 5, c2 at distance 10: c2 reached at t=10 but closes at 8.
        let inst = line_instance(&[(0.0, 100.0), (0.0, 8.0)]);
        let sol = Solution::from_routes(vec![Route::new(DriverRef::Company(0), vec![0, 1])], &inst, 0.6);
        let report = check_feasible(&sol, &inst);
        assert_eq!(report.violations.len(), 1, "{report}");
        let text = report.to_string();
        assert!(text.contains("time window") && text.contains("customer 2"), "{text}");
    }

    #[test]
    fn structural_violations_are_reported() {
        let inst = line_instance(&[(0.0, 100.0), (0.0, 100.0)]);
        let sol = Solution {
            routes: vec![
                Route::new(DriverRef::Company(0), vec![0]),
                Route::new(DriverRef::Company(0), vec![0]),
                Route::new(DriverRef::Occasional(3), vec![1]),
            ],
            objective: 0.0,
        };
        let report = check_feasible(&sol, &inst);
        let kinds: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        assert!(kinds.iter().any(|v| v.starts_with("duplicate driver")));
        assert!(kinds.iter().any(|v| v.starts_with("fleet size")));
        assert!(kinds.iter().any(|v| v.starts_with("unknown driver")));
        assert!(kinds.iter().any(|v| v.starts_with("served twice")));
        assert!(kinds.iter().any(|v| v.starts_with("unserved")));
    }

    #[test]
    fn od_departure_uses_its_window_open() {
        let mut inst = line_instance(&[(0.0, 20.0)]);
        inst.ods[0].window = TimeWindow::new(50.0, 1000.0);
        let sol = Solution::from_routes(vec![Route::new(DriverRef::Occasional(0), vec![0])], &inst, 0.6);
        assert_eq!(sol.routes[0].arrival_times, vec![55.0]);
        assert!(!check_feasible(&sol, &inst).is_feasible());
    }

    #[test]
    fn encode_orders_customer_keys_by_route_position() {
        let inst = line_instance(&[(0.0, 100.0), (0.0, 100.0)]);
        let sol = Solution::from_routes(vec![Route::new(DriverRef::Company(0), vec![1, 0])], &inst, 0.6);
        let chr = encode(&sol, &inst).unwrap();
        assert!(chr.genes[1] < chr.genes[0]);
        // driver of the route ranks ahead of the unused OD
        assert!(chr.genes[2] < chr.genes[3]);
        assert!(chr.genes.iter().all(|g| (0.0..1.0).contains(g)));
    }

    #[test]
    fn encode_rejects_infeasible() {
        let inst = line_instance(&[(0.0, 100.0)]);
        assert!(encode(&Solution::empty(), &inst).is_err());
    }

    #[test]
    fn json_round_trip() {
        let inst = line_instance(&[(0.0, 100.0), (0.0, 100.0)]);
        let sol = Solution::from_routes(
            vec![
                Route::new(DriverRef::Company(0), vec![1]),
                Route::new(DriverRef::Occasional(0), vec![0]),
            ],
            &inst,
            0.6,
        );
        let text = SolutionRecord::from_solution(&sol, &inst.name).to_json();
        let back: Solution = SolutionRecord::from_json(&text).unwrap().to_solution().unwrap();
        assert_eq!(back, sol);
    }
}
