//! Exact reference solvers for small instances.
//!
//! [`exhaustive_solve`] is a depth-first branch and bound over driver routes.
//! [`export_milp`] writes the arc-flow model in LP format so an external MILP
//! solver can cross-check the optimum.

use std::fmt::Write as _;

use thiserror::Error;

use crate::instance::Instance;
use crate::scalar::Scalar;
use crate::solution::{DriverRef, Route, Solution};

/// Largest instance the bitset search accepts.
pub const MAX_ORACLE_CUSTOMERS: usize = 63;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError<S: Scalar = f64> {
    /// The node budget ran out; `best` is the best solution seen so far.
    #[error("node budget of {nodes} exceeded")]
    BudgetExceeded { nodes: u64, best: Option<Solution<S>> },
    #[error("{0} customers is more than the exhaustive search supports")]
    TooLarge(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<S: Scalar = f64> {
    /// Optimal solution, `None` when the instance is infeasible.
    pub solution: Option<Solution<S>>,
    pub nodes: u64,
}

impl<S: Scalar> OracleResult<S> {
    pub fn cost(&self) -> Option<S> {
        self.solution.as_ref().map(|s| s.objective)
    }
}

struct Search<'a, S: Scalar> {
    inst: &'a Instance<S>,
    rho: S,
    /// Drivers in search order: occasional drivers, then company vehicles.
    drivers: Vec<DriverRef>,
    /// Cheapest arc into each customer from the depot or another customer.
    min_in: Vec<S>,
    /// `credit_from[s]`: sum of `c(o, v_k)` over occasional drivers at slots `>= s`.
    credit_from: Vec<S>,
    budget: u64,
    nodes: u64,
    best_cost: S,
    best: Option<Vec<(DriverRef, Vec<usize>)>>,
    routes: Vec<(DriverRef, Vec<usize>)>,
}

/// Route under construction.
#[derive(Clone, Copy)]
struct Open<S> {
    slot: usize,
    tail: usize,
    clock: S,
    room: u32,
    arcs: S,
}

struct OutOfBudget;

impl<'a, S: Scalar> Search<'a, S> {
    fn new(inst: &'a Instance<S>, rho: S, budget: u64) -> Self {
        let c = inst.num_customers();
        let drivers: Vec<DriverRef> = (0..inst.num_ods())
            .map(DriverRef::Occasional)
            .chain((0..inst.num_company()).map(DriverRef::Company))
            .collect();
        let min_in = (0..c)
            .map(|j| {
                let node = inst.customer_node(j);
                std::iter::once(inst.origin_node())
                    .chain((0..c).filter(|&i| i != j).map(|i| inst.customer_node(i)))
                    .map(|i| inst.cost.get(i, node))
                    .fold(S::infinity(), S::min)
            })
            .collect();
        let mut credit_from = vec![S::zero(); drivers.len() + 1];
        for s in (0..drivers.len()).rev() {
            let credit = match drivers[s] {
                DriverRef::Occasional(_) => inst.cost.get(inst.origin_node(), inst.destination_node(drivers[s])),
                DriverRef::Company(_) => S::zero(),
            };
            credit_from[s] = credit_from[s + 1] + credit;
        }
        Self {
            inst,
            rho,
            drivers,
            min_in,
            credit_from,
            budget,
            nodes: 0,
            best_cost: S::infinity(),
            best: None,
            routes: Vec::new(),
        }
    }

    fn factor(&self, driver: DriverRef) -> S {
        if driver.is_occasional() {
            self.rho
        } else {
            S::one()
        }
    }

    fn open(&self, slot: usize) -> Open<S> {
        let d = self.drivers[slot];
        Open {
            slot,
            tail: self.inst.origin_node(),
            clock: self.inst.operating_window(d).open,
            room: self.inst.capacity_of(d),
            arcs: S::zero(),
        }
    }

    /// Net objective contribution of closing `route` with `visits` customers.
    fn closing(&self, route: &Open<S>, nonempty: bool) -> S {
        if !nonempty {
            return S::zero();
        }
        let d = self.drivers[route.slot];
        let dest = self.inst.destination_node(d);
        let arcs = route.arcs + self.inst.cost.get(route.tail, dest);
        match d {
            DriverRef::Company(_) => arcs,
            DriverRef::Occasional(_) => self.rho * arcs - self.inst.cost.get(self.inst.origin_node(), dest),
        }
    }

    fn lower_bound(&self, closed: S, route: &Open<S>, unserved: u64) -> S {
        let factor = self.rho.min(S::one());
        let mut lb = closed + self.factor(self.drivers[route.slot]) * route.arcs;
        let mut rest = unserved;
        while rest != 0 {
            let c = rest.trailing_zeros() as usize;
            lb = lb + factor * self.min_in[c];
            rest &= rest - 1;
        }
        lb - self.credit_from[route.slot]
    }

    fn tick(&mut self) -> Result<(), OutOfBudget> {
        self.nodes += 1;
        if self.nodes > self.budget {
            Err(OutOfBudget)
        } else {
            Ok(())
        }
    }

    /// `closed` is the objective of finished routes; `route` is being extended.
    /// `company_floor` is the first customer of the previous company route,
    /// used to enumerate identical company vehicles only once.
    fn dfs(&mut self, closed: S, route: Open<S>, unserved: u64, company_floor: Option<usize>) -> Result<(), OutOfBudget> {
        self.tick()?;
        if self.lower_bound(closed, &route, unserved) >= self.best_cost {
            return Ok(());
        }
        let driver = self.drivers[route.slot];
        let visits_len = self.routes.last().map_or(0, |r| r.1.len());
        let nonempty = visits_len > 0;

        if unserved == 0 {
            let total = closed + self.closing(&route, nonempty);
            if total < self.best_cost {
                self.best_cost = total;
                self.best = Some(self.routes.iter().filter(|r| !r.1.is_empty()).cloned().collect());
            }
            return Ok(());
        }

        let mut candidates: Vec<usize> = (0..self.inst.num_customers())
            .filter(|&c| unserved & (1 << c) != 0)
            .collect();
        if let (DriverRef::Company(_), false, Some(floor)) = (driver, nonempty, company_floor) {
            candidates.retain(|&c| c > floor);
        }
        candidates.sort_by(|&a, &b| {
            let ca = self.inst.cost.get(route.tail, self.inst.customer_node(a));
            let cb = self.inst.cost.get(route.tail, self.inst.customer_node(b));
            ca.partial_cmp(&cb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });

        let deadline = self.inst.operating_window(driver).close;
        let dest = self.inst.destination_node(driver);
        for c in candidates {
            let cust = &self.inst.customers[c];
            if cust.demand > route.room {
                continue;
            }
            let node = self.inst.customer_node(c);
            let start = (route.clock + self.inst.time.get(route.tail, node)).max(cust.window.open);
            if start > cust.window.close || start + cust.service_time + self.inst.time.get(node, dest) > deadline {
                continue;
            }
            let next = Open {
                slot: route.slot,
                tail: node,
                clock: start + cust.service_time,
                room: route.room - cust.demand,
                arcs: route.arcs + self.inst.cost.get(route.tail, node),
            };
            self.routes.last_mut().expect("open route").1.push(c);
            let floor = company_floor;
            let result = self.dfs(closed, next, unserved & !(1 << c), floor);
            self.routes.last_mut().expect("open route").1.pop();
            result?;
        }

        // Close this route and move to the next driver.
        let next_slot = route.slot + 1;
        if next_slot < self.drivers.len() {
            if driver.is_occasional() || nonempty {
                let first = self.routes.last().and_then(|r| r.1.first().copied());
                let floor = match driver {
                    DriverRef::Company(_) => first,
                    DriverRef::Occasional(_) => None,
                };
                let closed = closed + self.closing(&route, nonempty);
                self.routes.push((self.drivers[next_slot], Vec::new()));
                let result = self.dfs(closed, self.open(next_slot), unserved, floor);
                self.routes.pop();
                result?;
            }
        }
        Ok(())
    }
}

/// Optimal solution by exhaustive branch and bound, or `None` if the
/// instance has no feasible solution. Fails when more than `node_budget`
/// search nodes are needed.
pub fn exhaustive_solve<S: Scalar>(
    instance: &Instance<S>,
    rho: S,
    node_budget: u64,
) -> Result<OracleResult<S>, OracleError<S>> {
    let c = instance.num_customers();
    if c > MAX_ORACLE_CUSTOMERS {
        return Err(OracleError::TooLarge(c));
    }
    if c == 0 {
        return Ok(OracleResult {
            solution: Some(Solution::empty()),
            nodes: 0,
        });
    }
    let mut search = Search::new(instance, rho, node_budget);
    if search.drivers.is_empty() {
        return Ok(OracleResult { solution: None, nodes: 0 });
    }
    let all = if c == 64 { u64::MAX } else { (1u64 << c) - 1 };
    search.routes.push((search.drivers[0], Vec::new()));
    let first = search.open(0);
    let outcome = search.dfs(S::zero(), first, all, None);
    let to_solution = |routes: Vec<(DriverRef, Vec<usize>)>| {
        Solution::from_routes(routes.into_iter().map(|(d, v)| Route::new(d, v)).collect(), instance, rho)
    };
    let best = search.best.take().map(to_solution);
    match outcome {
        Ok(()) => Ok(OracleResult {
            solution: best,
            nodes: search.nodes,
        }),
        Err(OutOfBudget) => Err(OracleError::BudgetExceeded {
            nodes: node_budget,
            best,
        }),
    }
}

/// Collects `coef name` terms and prints them in LP syntax, wrapped.
#[derive(Default)]
struct Expr {
    terms: Vec<(f64, String)>,
}

impl Expr {
    fn add(&mut self, coef: f64, var: impl Into<String>) -> &mut Self {
        self.terms.push((coef, var.into()));
        self
    }

    fn render(&self) -> String {
        if self.terms.is_empty() {
            return "0 x__zero".into();
        }
        let mut out = String::new();
        for (idx, (coef, var)) in self.terms.iter().enumerate() {
            if idx > 0 && idx % 8 == 0 {
                out.push_str("\n   ");
            }
            let sign = if *coef < 0.0 { "-" } else { "+" };
            let mag = coef.abs();
            if idx == 0 && sign == "+" {
                if mag == 1.0 {
                    let _ = write!(out, "{var}");
                } else {
                    let _ = write!(out, "{mag} {var}");
                }
            } else if mag == 1.0 {
                let _ = write!(out, " {sign} {var}");
            } else {
                let _ = write!(out, " {sign} {mag} {var}");
            }
        }
        out
    }
}

struct LpWriter {
    rows: String,
    count: usize,
}

impl LpWriter {
    fn comment(&mut self, text: &str) {
        let _ = writeln!(self.rows, "\\ {text}");
    }

    fn row(&mut self, name: String, expr: &Expr, sense: &str, rhs: f64) {
        let _ = writeln!(self.rows, " {name}: {} {sense} {}", expr.render(), fmt_num(rhs));
        self.count += 1;
    }
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

/// Node labels used in variable names: `o`, `b`, customer ids, `v<k>`.
struct Labels {
    customers: Vec<String>,
}

impl Labels {
    fn c(&self, i: usize) -> &str {
        &self.customers[i]
    }
}

fn v(k: usize) -> String {
    format!("v{}", k + 1)
}

/// Number of constraint rows written by [`export_milp`] for `instance`.
pub fn milp_row_count<S: Scalar>(instance: &Instance<S>, rho: S) -> usize {
    build_milp(instance, rho, None).1
}

/// The arc-flow model as LP-format text. `big_m` defaults to
/// `max l + max t`; rows that admit a smaller valid constant use it.
pub fn export_milp<S: Scalar>(instance: &Instance<S>, rho: S, big_m: Option<f64>) -> String {
    build_milp(instance, rho, big_m).0
}

fn build_milp<S: Scalar>(instance: &Instance<S>, rho: S, big_m: Option<f64>) -> (String, usize) {
    let inst = instance;
    let nc = inst.num_customers();
    let nk = inst.num_ods();
    let rho = rho.as_f64();
    let o = inst.origin_node();
    let labels = Labels {
        customers: inst.customers.iter().map(|c| c.id.to_string()).collect(),
    };
    let cost = |i: usize, j: usize| inst.cost.get(i, j).as_f64();
    let time = |i: usize, j: usize| inst.time.get(i, j).as_f64();
    let cn = |i: usize| inst.customer_node(i);
    let b = inst.company_sink_node();

    // Finite stand-in for unbounded windows.
    let finite_bounds: Vec<f64> = inst
        .customers
        .iter()
        .map(|c| c.window.close.as_f64())
        .chain(inst.ods.iter().map(|k| k.window.close.as_f64()))
        .chain(std::iter::once(inst.fleet.depot_window.close.as_f64()))
        .filter(|v| v.is_finite())
        .collect();
    let max_t = inst.time.max_entry().as_f64();
    let service_sum: f64 = inst.customers.iter().map(|c| c.service_time.as_f64()).sum();
    let horizon = finite_bounds.iter().copied().fold(0.0, f64::max) + service_sum + (nc as f64 + 1.0) * max_t;
    let fin = |v: f64| if v.is_finite() { v } else { horizon };
    let e = |i: usize| fin(inst.customers[i].window.open.as_f64());
    let l = |i: usize| fin(inst.customers[i].window.close.as_f64());
    let serv = |i: usize| inst.customers[i].service_time.as_f64();
    let global_m = big_m.unwrap_or_else(|| {
        let max_l = (0..nc).map(l).chain(inst.ods.iter().map(|k| fin(k.window.close.as_f64()))).fold(0.0, f64::max);
        max_l + max_t
    });
    let tight = |m: f64| m.max(0.0);

    let x = |i: &str, j: &str| format!("x_{i}_{j}");
    let r = |k: usize, i: &str, j: &str| format!("r_{}_{i}_{j}", k + 1);
    let mut binaries: Vec<String> = Vec::new();

    // Company arcs: i in C ∪ {o}, j in C ∪ {b}, i != j, no o -> b.
    let mut x_arcs: Vec<(Option<usize>, Option<usize>)> = Vec::new();
    for i in std::iter::once(None).chain((0..nc).map(Some)) {
        for j in (0..nc).map(Some).chain(std::iter::once(None)) {
            if i.is_some() && i == j || (i.is_none() && j.is_none()) {
                continue;
            }
            x_arcs.push((i, j));
        }
    }
    let from_label = |i: Option<usize>| i.map_or("o".to_string(), |i| labels.c(i).to_string());
    let to_label = |j: Option<usize>| j.map_or("b".to_string(), |j| labels.c(j).to_string());
    let from_node = |i: Option<usize>| i.map_or(o, cn);
    let to_node = |j: Option<usize>| j.map_or(b, cn);
    for &(i, j) in &x_arcs {
        binaries.push(x(&from_label(i), &to_label(j)));
    }
    // OD arcs: i in C ∪ {o}, j in C ∪ {v_k}, i != j.
    let mut r_arcs: Vec<(usize, Option<usize>, Option<usize>)> = Vec::new();
    for k in 0..nk {
        for i in std::iter::once(None).chain((0..nc).map(Some)) {
            for j in (0..nc).map(Some).chain(std::iter::once(None)) {
                if i.is_some() && i == j {
                    continue;
                }
                r_arcs.push((k, i, j));
            }
        }
    }
    let r_to_label = |k: usize, j: Option<usize>| j.map_or(v(k), |j| labels.c(j).to_string());
    let r_to_node = |k: usize, j: Option<usize>| j.map_or(inst.od_node(k), cn);
    let r_name = |k: usize, i: Option<usize>, j: Option<usize>| r(k, &from_label(i), &r_to_label(k, j));
    for &(k, i, j) in &r_arcs {
        binaries.push(r_name(k, i, j));
    }

    // Objective.
    let mut obj = Expr::default();
    for &(i, j) in &x_arcs {
        obj.add(cost(from_node(i), to_node(j)), x(&from_label(i), &to_label(j)));
    }
    for &(k, i, j) in &r_arcs {
        let mut coef = rho * cost(from_node(i), r_to_node(k, j));
        if i.is_none() && j.is_some() {
            coef -= cost(o, inst.od_node(k));
        }
        obj.add(coef, r_name(k, i, j));
    }

    let mut w = LpWriter {
        rows: String::new(),
        count: 0,
    };

    w.comment("(2) company flow conservation at customers");
    for i in 0..nc {
        let mut ex = Expr::default();
        for &(a, bb) in &x_arcs {
            if a == Some(i) {
                ex.add(1.0, x(&from_label(a), &to_label(bb)));
            }
        }
        for &(a, bb) in &x_arcs {
            if bb == Some(i) {
                ex.add(-1.0, x(&from_label(a), &to_label(bb)));
            }
        }
        w.row(format!("c2_{}", labels.c(i)), &ex, "=", 0.0);
    }

    w.comment("(2bis) company routes leaving o equal routes entering b");
    let mut ex = Expr::default();
    for j in 0..nc {
        ex.add(1.0, x("o", labels.c(j)));
    }
    for j in 0..nc {
        ex.add(-1.0, x(labels.c(j), "b"));
    }
    w.row("c2bis".into(), &ex, "=", 0.0);

    w.comment("(3) company load propagation, y_j >= y_i + q_j x_ij - Q (1 - x_ij)");
    let q_cap = inst.fleet.capacity as f64;
    let y = |n: Option<usize>, sink: bool| match (n, sink) {
        (Some(i), _) => format!("y_{}", labels.c(i)),
        (None, false) => "y_o".to_string(),
        (None, true) => "y_b".to_string(),
    };
    for &(i, j) in &x_arcs {
        let qj = j.map_or(0.0, |j| inst.customers[j].demand as f64);
        // y_j - y_i - (q_j + Q) x_ij >= -Q
        let mut ex = Expr::default();
        ex.add(1.0, y(j, true)).add(-1.0, y(i, false)).add(-(qj + q_cap), x(&from_label(i), &to_label(j)));
        w.row(format!("c3_{}_{}", from_label(i), to_label(j)), &ex, ">=", -q_cap);
    }

    w.comment("(5) company schedule, s_j >= s_i + (serv_i + t_ij) x_ij - M_ij (1 - x_ij)");
    for i in 0..nc {
        for j in (0..nc).filter(|&j| j != i) {
            let travel = serv(i) + time(cn(i), cn(j));
            let m = tight(l(i) + travel - e(j));
            let mut ex = Expr::default();
            ex.add(1.0, format!("s_{}", labels.c(j)))
                .add(-1.0, format!("s_{}", labels.c(i)))
                .add(-(travel + m), x(labels.c(i), labels.c(j)));
            w.row(format!("c5_{}_{}", labels.c(i), labels.c(j)), &ex, ">=", -m);
        }
    }
    let depot = &inst.fleet.depot_window;
    let (d_open, d_close) = (fin(depot.open.as_f64()), fin(depot.close.as_f64()));
    w.comment("(5a) company departure, s_j >= open_o + t_oj - M (1 - x_oj)");
    for j in 0..nc {
        let lb = d_open + time(o, cn(j));
        let m = tight(lb - e(j));
        let mut ex = Expr::default();
        ex.add(1.0, format!("s_{}", labels.c(j))).add(-m, x("o", labels.c(j)));
        w.row(format!("c5a_{}", labels.c(j)), &ex, ">=", lb - m);
    }
    w.comment("(5b) company return, s_i + serv_i + t_ib <= close_b + M (1 - x_ib)");
    for i in 0..nc {
        let reach = serv(i) + time(cn(i), b);
        let m = tight(l(i) + reach - d_close);
        let mut ex = Expr::default();
        ex.add(1.0, format!("s_{}", labels.c(i))).add(m, x(labels.c(i), "b"));
        w.row(format!("c5b_{}", labels.c(i)), &ex, "<=", d_close + m - reach);
    }

    w.comment("(6) customer windows for company service times");
    for i in 0..nc {
        let mut ex = Expr::default();
        ex.add(1.0, format!("s_{}", labels.c(i)));
        w.row(format!("c6lo_{}", labels.c(i)), &ex, ">=", e(i));
        w.row(format!("c6hi_{}", labels.c(i)), &ex, "<=", l(i));
    }

    w.comment("(7) fleet size");
    let mut ex = Expr::default();
    for j in 0..nc {
        ex.add(1.0, x("o", labels.c(j)));
    }
    w.row("c7".into(), &ex, "<=", inst.num_company() as f64);

    for k in 0..nk {
        let vk = v(k);
        let od = &inst.ods[k];
        let qk = od.capacity as f64;
        let e_vk = fin(od.window.open.as_f64());
        let l_vk = fin(od.window.close.as_f64());
        let arcs_k: Vec<(Option<usize>, Option<usize>)> =
            r_arcs.iter().filter(|a| a.0 == k).map(|&(_, i, j)| (i, j)).collect();

        w.comment(&format!("(8) flow conservation of occasional driver {}", k + 1));
        for i in 0..nc {
            let mut ex = Expr::default();
            for &(a, bb) in arcs_k.iter().filter(|(a, _)| *a == Some(i)) {
                ex.add(1.0, r_name(k, a, bb));
            }
            for &(a, bb) in arcs_k.iter().filter(|(_, bb)| *bb == Some(i)) {
                ex.add(-1.0, r_name(k, a, bb));
            }
            w.row(format!("c8_{}_{}", k + 1, labels.c(i)), &ex, "=", 0.0);
        }

        w.comment(&format!("(9) leaving o equals reaching {vk}; the direct arc o-{vk} cancels"));
        let mut ex = Expr::default();
        for j in 0..nc {
            ex.add(1.0, r(k, "o", labels.c(j)));
        }
        for i in 0..nc {
            ex.add(-1.0, r(k, labels.c(i), &vk));
        }
        w.row(format!("c9_{}", k + 1), &ex, "=", 0.0);

        w.comment(&format!("(11) occasional driver {} leaves o at most once", k + 1));
        let mut ex = Expr::default();
        for j in 0..nc {
            ex.add(1.0, r(k, "o", labels.c(j)));
        }
        w.row(format!("c11_{}", k + 1), &ex, "<=", 1.0);

        w.comment(&format!("(12) load propagation of occasional driver {}", k + 1));
        let wv = |n: Option<usize>, dest: bool| match (n, dest) {
            (Some(i), _) => format!("w_{}_{}", k + 1, labels.c(i)),
            (None, false) => format!("w_{}_o", k + 1),
            (None, true) => format!("w_{}_{}", k + 1, vk),
        };
        for &(i, j) in &arcs_k {
            let qi = i.map_or(0.0, |i| inst.customers[i].demand as f64);
            // w_j - w_i - (q_i + Q_k) r_ij >= -Q_k
            let mut ex = Expr::default();
            ex.add(1.0, wv(j, true)).add(-1.0, wv(i, false)).add(-(qi + qk), r_name(k, i, j));
            w.row(
                format!("c12_{}_{}_{}", k + 1, from_label(i), r_to_label(k, j)),
                &ex,
                ">=",
                -qk,
            );
        }

        w.comment(&format!("(13) initial load bound of occasional driver {}", k + 1));
        let mut ex = Expr::default();
        ex.add(1.0, format!("w_{}_o", k + 1));
        w.row(format!("c13_{}", k + 1), &ex, "<=", qk);

        w.comment(&format!("(14) schedule of occasional driver {}", k + 1));
        let fv = |n: Option<usize>| match n {
            Some(i) => format!("f_{}_{}", k + 1, labels.c(i)),
            None => format!("f_{}_{}", k + 1, vk),
        };
        for i in 0..nc {
            for j in (0..nc).filter(|&j| j != i).map(Some).chain(std::iter::once(None)) {
                let travel = serv(i) + time(cn(i), r_to_node(k, j));
                let lower_j = j.map_or(0.0, e);
                let m = tight(l(i) + travel - lower_j);
                let mut ex = Expr::default();
                ex.add(1.0, fv(j)).add(-1.0, fv(Some(i))).add(-(travel + m), r_name(k, Some(i), j));
                w.row(format!("c14_{}_{}_{}", k + 1, labels.c(i), r_to_label(k, j)), &ex, ">=", -m);
            }
        }

        w.comment(&format!(
            "(15) departure of occasional driver {} no earlier than e_{vk}, for customers it visits",
            k + 1
        ));
        for i in 0..nc {
            let lb = e_vk + time(o, cn(i));
            let m = tight(lb - e(i));
            let mut ex = Expr::default();
            ex.add(1.0, fv(Some(i)));
            for &(a, bb) in arcs_k.iter().filter(|(_, bb)| *bb == Some(i)) {
                ex.add(-m, r_name(k, a, bb));
            }
            w.row(format!("c15_{}_{}", k + 1, labels.c(i)), &ex, ">=", lb - m);
        }

        w.comment(&format!("(16) arrival at {vk}"));
        let mut ex = Expr::default();
        ex.add(1.0, fv(None));
        w.row(format!("c16_{}", k + 1), &ex, "<=", l_vk);

        w.comment(&format!("(17) customer windows for occasional driver {}", k + 1));
        for i in 0..nc {
            let mut ex = Expr::default();
            ex.add(1.0, fv(Some(i)));
            w.row(format!("c17lo_{}_{}", k + 1, labels.c(i)), &ex, ">=", e(i));
            w.row(format!("c17hi_{}_{}", k + 1, labels.c(i)), &ex, "<=", l(i));
        }
    }

    if nk > 0 {
        w.comment("(10) number of occasional drivers");
        let mut ex = Expr::default();
        for &(k, i, j) in &r_arcs {
            if i.is_none() {
                ex.add(1.0, r_name(k, i, j));
            }
        }
        w.row("c10".into(), &ex, "<=", nk as f64);
    }

    w.comment("(18) every customer is left exactly once");
    for i in 0..nc {
        let mut ex = Expr::default();
        for &(a, bb) in &x_arcs {
            if a == Some(i) {
                ex.add(1.0, x(&from_label(a), &to_label(bb)));
            }
        }
        for &(k, a, bb) in &r_arcs {
            if a == Some(i) {
                ex.add(1.0, r_name(k, a, bb));
            }
        }
        w.row(format!("c18_{}", labels.c(i)), &ex, "=", 1.0);
    }

    // Bounds and domains.
    let mut bounds = String::new();
    let mut generals = Vec::new();
    let bound = |bounds: &mut String, lo: f64, var: String, hi: Option<f64>| {
        let _ = match hi {
            Some(hi) => writeln!(bounds, " {} <= {var} <= {}", fmt_num(lo), fmt_num(hi)),
            None => writeln!(bounds, " {var} >= {}", fmt_num(lo)),
        };
    };
    let _ = writeln!(&mut bounds, "\\ (21) company loads");
    for name in std::iter::once("y_o".to_string())
        .chain(std::iter::once("y_b".to_string()))
        .chain((0..nc).map(|i| format!("y_{}", labels.c(i))))
    {
        bound(&mut bounds, 0.0, name.clone(), Some(q_cap));
        generals.push(name);
    }
    let _ = writeln!(&mut bounds, "\\ (22) occasional driver loads");
    for k in 0..nk {
        let qk = inst.ods[k].capacity as f64;
        for name in std::iter::once(format!("w_{}_o", k + 1))
            .chain((0..nc).map(|i| format!("w_{}_{}", k + 1, labels.c(i))))
            .chain(std::iter::once(format!("w_{}_{}", k + 1, v(k))))
        {
            bound(&mut bounds, 0.0, name.clone(), Some(qk));
            generals.push(name);
        }
    }
    let _ = writeln!(&mut bounds, "\\ (23) occasional driver times");
    for k in 0..nk {
        for name in std::iter::once(format!("f_{}_o", k + 1))
            .chain((0..nc).map(|i| format!("f_{}_{}", k + 1, labels.c(i))))
            .chain(std::iter::once(format!("f_{}_{}", k + 1, v(k))))
        {
            bound(&mut bounds, 0.0, name, None);
        }
    }
    let _ = writeln!(&mut bounds, "\\ (24) company times");
    for i in 0..nc {
        bound(&mut bounds, 0.0, format!("s_{}", labels.c(i)), None);
    }

    let mut out = String::new();
    let _ = writeln!(out, "\\ VRPODTW arc-flow model for instance {}", inst.name);
    let _ = writeln!(
        out,
        "\\ customers {nc}, company vehicles {}, occasional drivers {nk}, rho {rho}",
        inst.num_company()
    );
    let _ = writeln!(out, "\\ global big-M {} (max l + max t); rows use the smallest valid constant", fmt_num(global_m));
    let _ = writeln!(out, "\\ constraint rows {}", w.count);
    let _ = writeln!(out, "Minimize");
    let _ = writeln!(out, " obj: {}", obj.render());
    let _ = writeln!(out, "Subject To");
    out.push_str(&w.rows);
    let _ = writeln!(out, "Bounds");
    out.push_str(&bounds);
    let _ = writeln!(out, "\\ (19) (20) arc variables are binary");
    if !generals.is_empty() {
        let _ = writeln!(out, "General");
        for chunk in generals.chunks(10) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    if !binaries.is_empty() {
        let _ = writeln!(out, "Binary");
        for chunk in binaries.chunks(10) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    let _ = writeln!(out, "End");
    (out, w.count)
}
