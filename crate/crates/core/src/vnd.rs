//! Variable neighborhood descent over feasible solutions.
//!
//! Six neighborhoods are explored in a fixed order with best improvement.
//! Any improvement sends the search back to the first neighborhood. Moves are
//! scanned in lexicographic (route, position) order and only a strictly
//! better move replaces the current choice, so results are deterministic.

use std::fmt;
use std::time::Instant;

use thiserror::Error;

use crate::instance::Instance;
use crate::scalar::Scalar;
use crate::solution::{check_feasible, route_cost, route_is_feasible, DriverRef, Route, Solution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VndError {
    #[error("local search needs a feasible start: {0}")]
    Infeasible(String),
}

/// The neighborhoods, in the order the descent visits them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighborhood {
    TwoOpt,
    MoveNode,
    SwapInter,
    SwapIntra,
    NewPath,
    NewPathBest,
}

impl Neighborhood {
    pub const ALL: [Neighborhood; 6] = [
        Neighborhood::TwoOpt,
        Neighborhood::MoveNode,
        Neighborhood::SwapInter,
        Neighborhood::SwapIntra,
        Neighborhood::NewPath,
        Neighborhood::NewPathBest,
    ];
}

impl fmt::Display for Neighborhood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Neighborhood::TwoOpt => "2-opt",
            Neighborhood::MoveNode => "move node",
            Neighborhood::SwapInter => "swap inter",
            Neighborhood::SwapIntra => "swap intra",
            Neighborhood::NewPath => "new path",
            Neighborhood::NewPathBest => "new path best",
        })
    }
}

/// Instance and compensation factor shared by all neighborhoods.
#[derive(Debug, Clone, Copy)]
pub struct LocalSearch<'a, S: Scalar = f64> {
    pub instance: &'a Instance<S>,
    pub rho: S,
}

/// Working copy: visit lists with cached costs.
#[derive(Debug, Clone)]
struct Plan<S> {
    routes: Vec<(DriverRef, Vec<usize>)>,
    costs: Vec<S>,
}

/// A candidate replacement of up to two routes.
struct Change<S> {
    delta: S,
    first: (usize, Vec<usize>),
    second: Option<(usize, Vec<usize>)>,
}

impl<'a, S: Scalar> LocalSearch<'a, S> {
    pub fn new(instance: &'a Instance<S>, rho: S) -> Self {
        Self { instance, rho }
    }

    /// Cost of `visits` for `driver`, `None` if infeasible. Empty routes cost 0.
    fn eval(&self, driver: DriverRef, visits: &[usize]) -> Option<S> {
        if visits.is_empty() {
            return Some(S::zero());
        }
        route_is_feasible(self.instance, driver, visits).then(|| route_cost(self.instance, driver, visits, self.rho))
    }

    fn plan(&self, solution: &Solution<S>) -> Plan<S> {
        let routes: Vec<(DriverRef, Vec<usize>)> = solution
            .routes
            .iter()
            .filter(|r| !r.visits.is_empty())
            .map(|r| (r.driver, r.visits.clone()))
            .collect();
        let costs = routes
            .iter()
            .map(|(d, v)| route_cost(self.instance, *d, v, self.rho))
            .collect();
        Plan { routes, costs }
    }

    fn finish(&self, plan: Plan<S>) -> Solution<S> {
        let routes = plan.routes.into_iter().map(|(d, v)| Route::new(d, v)).collect();
        Solution::from_routes(routes, self.instance, self.rho)
    }

    /// Keeps `best` unless `cand` improves on it by more than the tolerance.
    fn consider(&self, best: &mut Option<Change<S>>, cand: Change<S>) {
        let bound = best.as_ref().map_or(S::zero(), |b| b.delta);
        if cand.delta < bound - S::TOLERANCE {
            *best = Some(cand);
        }
    }

    fn one(&self, plan: &Plan<S>, r: usize, visits: Vec<usize>) -> Option<Change<S>> {
        let cost = self.eval(plan.routes[r].0, &visits)?;
        Some(Change {
            delta: cost - plan.costs[r],
            first: (r, visits),
            second: None,
        })
    }

    fn two(&self, plan: &Plan<S>, r1: usize, v1: Vec<usize>, r2: usize, v2: Vec<usize>) -> Option<Change<S>> {
        let c1 = self.eval(plan.routes[r1].0, &v1)?;
        let c2 = self.eval(plan.routes[r2].0, &v2)?;
        Some(Change {
            delta: c1 + c2 - plan.costs[r1] - plan.costs[r2],
            first: (r1, v1),
            second: Some((r2, v2)),
        })
    }

    fn apply(&self, plan: &mut Plan<S>, change: Change<S>) {
        for (r, visits) in std::iter::once(change.first).chain(change.second) {
            plan.costs[r] = self.eval(plan.routes[r].0, &visits).expect("committed move is feasible");
            plan.routes[r].1 = visits;
        }
        let keep: Vec<bool> = plan.routes.iter().map(|(_, v)| !v.is_empty()).collect();
        let mut it = keep.iter();
        plan.routes.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        plan.costs.retain(|_| *it.next().unwrap());
    }

    fn best_two_opt(&self, plan: &Plan<S>) -> Option<Change<S>> {
        let mut best = None;
        let routes = &plan.routes;
        for r1 in 0..routes.len() {
            let v1 = &routes[r1].1;
            for i in 0..v1.len() {
                for j in i + 1..v1.len() {
                    let mut cand = v1.clone();
                    cand[i..=j].reverse();
                    if let Some(ch) = self.one(plan, r1, cand) {
                        self.consider(&mut best, ch);
                    }
                }
            }
            for r2 in r1 + 1..routes.len() {
                let v2 = &routes[r2].1;
                for a in 0..=v1.len() {
                    for b in 0..=v2.len() {
                        if (a == 0 && b == 0) || (a == v1.len() && b == v2.len()) {
                            continue;
                        }
                        let n1: Vec<usize> = v1[..a].iter().chain(&v2[b..]).copied().collect();
                        let n2: Vec<usize> = v2[..b].iter().chain(&v1[a..]).copied().collect();
                        if let Some(ch) = self.two(plan, r1, n1, r2, n2) {
                            self.consider(&mut best, ch);
                        }
                    }
                }
            }
        }
        best
    }

    fn best_move_node(&self, plan: &Plan<S>) -> Option<Change<S>> {
        let mut best = None;
        let routes = &plan.routes;
        for r1 in 0..routes.len() {
            for p in 0..routes[r1].1.len() {
                let mut from = routes[r1].1.clone();
                let customer = from.remove(p);
                for r2 in (0..routes.len()).filter(|&r| r != r1) {
                    for q in 0..=routes[r2].1.len() {
                        let mut to = routes[r2].1.clone();
                        to.insert(q, customer);
                        if let Some(ch) = self.two(plan, r1, from.clone(), r2, to) {
                            self.consider(&mut best, ch);
                        }
                    }
                }
            }
        }
        best
    }

    fn best_swap_inter(&self, plan: &Plan<S>) -> Option<Change<S>> {
        let mut best = None;
        let routes = &plan.routes;
        for r1 in 0..routes.len() {
            for r2 in r1 + 1..routes.len() {
                for p in 0..routes[r1].1.len() {
                    for q in 0..routes[r2].1.len() {
                        let mut v1 = routes[r1].1.clone();
                        let mut v2 = routes[r2].1.clone();
                        std::mem::swap(&mut v1[p], &mut v2[q]);
                        if let Some(ch) = self.two(plan, r1, v1, r2, v2) {
                            self.consider(&mut best, ch);
                        }
                    }
                }
            }
        }
        best
    }

    fn best_swap_intra(&self, plan: &Plan<S>) -> Option<Change<S>> {
        let mut best = None;
        for (r, (_, visits)) in plan.routes.iter().enumerate() {
            for p in 0..visits.len() {
                for q in p + 1..visits.len() {
                    let mut cand = visits.clone();
                    cand.swap(p, q);
                    if let Some(ch) = self.one(plan, r, cand) {
                        self.consider(&mut best, ch);
                    }
                }
            }
        }
        best
    }

    fn free_company_driver(&self, plan: &Plan<S>) -> Option<DriverRef> {
        (0..self.instance.num_company())
            .map(DriverRef::Company)
            .find(|d| plan.routes.iter().all(|(used, _)| used != d))
    }

    /// Every feasible relocation of one customer into a new route for `driver`,
    /// with its cost change, in (route, position) order.
    fn openings(&self, plan: &Plan<S>, driver: DriverRef) -> Vec<(usize, usize, S)> {
        let mut out = Vec::new();
        for (r, (_, visits)) in plan.routes.iter().enumerate() {
            for p in 0..visits.len() {
                let mut from = visits.clone();
                let customer = from.remove(p);
                let (Some(c_from), Some(c_new)) = (self.eval(plan.routes[r].0, &from), self.eval(driver, &[customer]))
                else {
                    continue;
                };
                out.push((r, p, c_from + c_new - plan.costs[r]));
            }
        }
        out
    }

    /// Opens a route for `driver` seeded by the customer at `(r, p)`, then
    /// keeps moving customers into it while that strictly improves.
    /// Returns the resulting plan and its total cost change.
    fn grow_new_route(&self, plan: &Plan<S>, driver: DriverRef, r: usize, p: usize, seed_delta: S) -> (Plan<S>, S) {
        let mut work = plan.clone();
        let customer = work.routes[r].1[p];
        work.routes.push((driver, Vec::new()));
        work.costs.push(S::zero());
        let fresh = work.routes.len() - 1;
        let mut from = work.routes[r].1.clone();
        from.remove(p);
        let change = self
            .two(&work, r, from, fresh, vec![customer])
            .expect("opening move was checked feasible");
        self.apply(&mut work, change);
        let mut total = seed_delta;
        loop {
            let fresh = work.routes.iter().position(|(d, _)| *d == driver).expect("new route is non-empty");
            let mut best = None;
            for r1 in (0..work.routes.len()).filter(|&r| r != fresh) {
                for p1 in 0..work.routes[r1].1.len() {
                    let mut from = work.routes[r1].1.clone();
                    let c = from.remove(p1);
                    for q in 0..=work.routes[fresh].1.len() {
                        let mut to = work.routes[fresh].1.clone();
                        to.insert(q, c);
                        if let Some(ch) = self.two(&work, r1, from.clone(), fresh, to) {
                            self.consider(&mut best, ch);
                        }
                    }
                }
            }
            match best {
                Some(ch) => {
                    total = total + ch.delta;
                    self.apply(&mut work, ch);
                }
                None => return (work, total),
            }
        }
    }

    /// New Path: the cheapest single opening, grown greedily; kept if the
    /// compound move strictly improves.
    fn new_path_plan(&self, plan: &Plan<S>) -> Option<Plan<S>> {
        let driver = self.free_company_driver(plan)?;
        let mut seed: Option<(usize, usize, S)> = None;
        for cand in self.openings(plan, driver) {
            if seed.is_none_or(|s| cand.2 < s.2) {
                seed = Some(cand);
            }
        }
        let (r, p, d) = seed?;
        let (work, total) = self.grow_new_route(plan, driver, r, p, d);
        (total < -S::TOLERANCE).then_some(work)
    }

    /// New Path best: every opening is grown and the best strictly improving result kept.
    fn new_path_best_plan(&self, plan: &Plan<S>) -> Option<Plan<S>> {
        let driver = self.free_company_driver(plan)?;
        let mut best: Option<(Plan<S>, S)> = None;
        for (r, p, d) in self.openings(plan, driver) {
            let (work, total) = self.grow_new_route(plan, driver, r, p, d);
            let bound = best.as_ref().map_or(S::zero(), |b| b.1);
            if total < bound - S::TOLERANCE {
                best = Some((work, total));
            }
        }
        best.map(|b| b.0)
    }

    /// One step of `neighborhood` on the working plan; true if it improved.
    fn step(&self, plan: &mut Plan<S>, neighborhood: Neighborhood) -> bool {
        let change = match neighborhood {
            Neighborhood::TwoOpt => self.best_two_opt(plan),
            Neighborhood::MoveNode => self.best_move_node(plan),
            Neighborhood::SwapInter => self.best_swap_inter(plan),
            Neighborhood::SwapIntra => self.best_swap_intra(plan),
            Neighborhood::NewPath | Neighborhood::NewPathBest => {
                let next = if neighborhood == Neighborhood::NewPath {
                    self.new_path_plan(plan)
                } else {
                    self.new_path_best_plan(plan)
                };
                return match next {
                    Some(next) => {
                        *plan = next;
                        true
                    }
                    None => false,
                };
            }
        };
        match change {
            Some(ch) => {
                self.apply(plan, ch);
                true
            }
            None => false,
        }
    }

    /// Applies the best move of one neighborhood, or returns the input unchanged.
    pub fn apply_neighborhood(&self, solution: &Solution<S>, neighborhood: Neighborhood) -> Solution<S> {
        let mut plan = self.plan(solution);
        if self.step(&mut plan, neighborhood) {
            self.finish(plan)
        } else {
            solution.clone()
        }
    }

    pub fn two_opt(&self, solution: &Solution<S>) -> Solution<S> {
        self.apply_neighborhood(solution, Neighborhood::TwoOpt)
    }

    pub fn move_node(&self, solution: &Solution<S>) -> Solution<S> {
        self.apply_neighborhood(solution, Neighborhood::MoveNode)
    }

    pub fn swap_inter(&self, solution: &Solution<S>) -> Solution<S> {
        self.apply_neighborhood(solution, Neighborhood::SwapInter)
    }

    pub fn swap_intra(&self, solution: &Solution<S>) -> Solution<S> {
        self.apply_neighborhood(solution, Neighborhood::SwapIntra)
    }

    pub fn new_path(&self, solution: &Solution<S>) -> Solution<S> {
        self.apply_neighborhood(solution, Neighborhood::NewPath)
    }

    pub fn new_path_best(&self, solution: &Solution<S>) -> Solution<S> {
        self.apply_neighborhood(solution, Neighborhood::NewPathBest)
    }

    /// Full descent. Stops at a local optimum of all six neighborhoods or at `deadline`.
    pub fn vnd(&self, solution: &Solution<S>, deadline: Option<Instant>) -> Result<Solution<S>, VndError> {
        let report = check_feasible(solution, self.instance);
        if !report.is_feasible() {
            return Err(VndError::Infeasible(report.to_string()));
        }
        let mut plan = self.plan(solution);
        let mut k = 0;
        while k < Neighborhood::ALL.len() {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                break;
            }
            if self.step(&mut plan, Neighborhood::ALL[k]) {
                k = 0;
            } else {
                k += 1;
            }
        }
        Ok(self.finish(plan))
    }
}

/// Convenience wrapper around [`LocalSearch::vnd`].
pub fn vnd<S: Scalar>(
    solution: &Solution<S>,
    instance: &Instance<S>,
    rho: S,
    deadline: Option<Instant>,
) -> Result<Solution<S>, VndError> {
    LocalSearch::new(instance, rho).vnd(solution, deadline)
}
