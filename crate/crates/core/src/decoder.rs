//! Chromosome decoder.
//!
//! The customer half of a chromosome fixes the order in which customers are
//! handled; the driver half fixes the order in which drivers are offered each
//! customer. A customer goes to the first driver that has room, can serve it
//! inside both windows, and whose delivery draw succeeds. Delivery draws come
//! from a SplitMix64 stream seeded by [`seed_gen`], so a chromosome always
//! decodes to the same routes.

use crate::instance::Instance;
use crate::scalar::Scalar;
use crate::solution::{DriverRef, Route, Solution};

/// `sum_i 2^(n-i) * floor(100 * gene_i)`, wrapping modulo 2^64.
pub fn seed_gen(genes: &[f64]) -> u64 {
    genes.iter().fold(0u64, |seed, &g| {
        seed.wrapping_mul(2).wrapping_add((100.0 * g).floor() as u64)
    })
}

/// SplitMix64: `state += 0x9E3779B97F4A7C15`, then the standard finalizer.
/// Uniform doubles take the top 53 bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryStream {
    state: u64,
}

impl DeliveryStream {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn for_genes(genes: &[f64]) -> Self {
        Self::new(seed_gen(genes))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Next draw accepted with probability `pr_del`.
    pub fn delivery(&mut self, pr_del: f64) -> bool {
        self.next_f64() < pr_del
    }
}

/// Everything the decoder needs besides the chromosome.
#[derive(Debug, Clone, Copy)]
pub struct DecoderContext<'a, S: Scalar = f64> {
    pub instance: &'a Instance<S>,
    /// Probability that an otherwise valid assignment is accepted.
    pub pr_del: f64,
    /// OD compensation factor.
    pub rho: S,
    /// Rescan with delivery forced when a customer was refused only by draws.
    pub rescan: bool,
}

impl<'a, S: Scalar> DecoderContext<'a, S> {
    pub fn new(instance: &'a Instance<S>, pr_del: f64, rho: S) -> Self {
        Self {
            instance,
            pr_del,
            rho,
            rescan: true,
        }
    }

    pub fn without_rescan(mut self) -> Self {
        self.rescan = false;
        self
    }

    fn compensation(&self, driver: DriverRef) -> S {
        if driver.is_occasional() {
            self.rho
        } else {
            S::one()
        }
    }

    /// Driver at position `slot` of the driver sub-chromosome: company drivers
    /// first, then occasional drivers.
    pub fn driver_at(&self, slot: usize) -> DriverRef {
        let d = self.instance.num_company();
        if slot < d {
            DriverRef::Company(slot)
        } else {
            DriverRef::Occasional(slot - d)
        }
    }

    pub fn decode(&self, genes: &[f64]) -> Decoded<S> {
        decode(genes, self)
    }

    /// Fitness only; identical to `decode(genes).fitness`.
    pub fn fitness(&self, genes: &[f64]) -> S {
        run(genes, self, false).0
    }
}

/// Route-building state of one driver.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverState<S: Scalar = f64> {
    pub driver: DriverRef,
    /// Last visited node.
    pub tail: usize,
    /// Time at which the driver is ready to leave `tail`.
    pub clock: S,
    pub remaining_capacity: u32,
    pub visits: Vec<usize>,
    pub service_starts: Vec<S>,
}

impl<S: Scalar> DriverState<S> {
    pub fn new(instance: &Instance<S>, driver: DriverRef) -> Self {
        Self {
            driver,
            tail: instance.origin_node(),
            clock: instance.operating_window(driver).open,
            remaining_capacity: instance.capacity_of(driver),
            visits: Vec::new(),
            service_starts: Vec::new(),
        }
    }

    /// Service start at `customer` if appended now.
    fn start_at(&self, instance: &Instance<S>, customer: usize) -> S {
        let node = instance.customer_node(customer);
        (self.clock + instance.time.get(self.tail, node)).max(instance.customers[customer].window.open)
    }

    pub fn capacity_check(&self, instance: &Instance<S>, customer: usize) -> bool {
        self.remaining_capacity >= instance.customers[customer].demand
    }

    /// Customer window and the driver's own deadline at its destination.
    pub fn time_check(&self, instance: &Instance<S>, customer: usize) -> bool {
        let cust = &instance.customers[customer];
        let start = self.start_at(instance, customer);
        if start > cust.window.close {
            return false;
        }
        let node = instance.customer_node(customer);
        let back = start + cust.service_time + instance.time.get(node, instance.destination_node(self.driver));
        back <= instance.operating_window(self.driver).close
    }

    /// Appends `customer` and returns the arc cost travelled.
    fn append(&mut self, instance: &Instance<S>, customer: usize) -> S {
        let node = instance.customer_node(customer);
        let start = self.start_at(instance, customer);
        let arc = instance.cost.get(self.tail, node);
        self.clock = start + instance.customers[customer].service_time;
        self.tail = node;
        self.remaining_capacity -= instance.customers[customer].demand;
        self.visits.push(customer);
        self.service_starts.push(start);
        arc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<S: Scalar = f64> {
    /// Routes of the used drivers, in driver-priority order. Partial when infeasible.
    pub solution: Solution<S>,
    /// Objective value, `+inf` when some customer could not be served.
    pub fitness: S,
}

impl<S: Scalar> Decoded<S> {
    pub fn is_feasible(&self) -> bool {
        self.fitness.is_finite()
    }
}

/// Indices `0..keys.len()` sorted by non-decreasing key, ties by lower index.
pub(crate) fn argsort(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    idx
}

/// Decodes a chromosome of length `|C| + |D| + |K|`.
pub fn decode<S: Scalar>(genes: &[f64], ctx: &DecoderContext<'_, S>) -> Decoded<S> {
    let (fitness, states) = run(genes, ctx, true);
    let routes = states
        .into_iter()
        .filter(|s| !s.visits.is_empty())
        .map(|s| {
            let load = ctx.instance.capacity_of(s.driver) - s.remaining_capacity;
            Route {
                driver: s.driver,
                visits: s.visits,
                arrival_times: s.service_starts,
                load,
            }
        })
        .collect();
    Decoded {
        solution: Solution {
            routes,
            objective: fitness,
        },
        fitness,
    }
}

fn run<S: Scalar>(genes: &[f64], ctx: &DecoderContext<'_, S>, keep_states: bool) -> (S, Vec<DriverState<S>>) {
    let inst = ctx.instance;
    let c = inst.num_customers();
    let drivers = inst.num_company() + inst.num_ods();
    assert_eq!(genes.len(), c + drivers, "chromosome length must be |C|+|D|+|K|");

    let (customer_keys, driver_keys) = genes.split_at(c);
    let customer_order = argsort(customer_keys);
    let driver_order = argsort(driver_keys);

    let mut states: Vec<DriverState<S>> = driver_order
        .iter()
        .map(|&slot| DriverState::new(inst, ctx.driver_at(slot)))
        .collect();
    let mut stream = DeliveryStream::for_genes(genes);
    let mut total = S::zero();

    for &customer in &customer_order {
        let mut chosen = None;
        let mut refused_by_draw = false;
        for (pos, state) in states.iter().enumerate() {
            if state.capacity_check(inst, customer) && state.time_check(inst, customer) {
                if stream.delivery(ctx.pr_del) {
                    chosen = Some(pos);
                    break;
                }
                refused_by_draw = true;
            }
        }
        if chosen.is_none() && refused_by_draw && ctx.rescan {
            chosen = states
                .iter()
                .position(|s| s.capacity_check(inst, customer) && s.time_check(inst, customer));
        }
        match chosen {
            Some(pos) => {
                let comp = ctx.compensation(states[pos].driver);
                let arc = states[pos].append(inst, customer);
                total = total + arc * comp;
            }
            None => return (S::infinity(), if keep_states { states } else { Vec::new() }),
        }
    }

    // Closing arcs and the direct-trip credit of every used OD.
    let origin = inst.origin_node();
    for state in states.iter().filter(|s| !s.visits.is_empty()) {
        let dest = inst.destination_node(state.driver);
        total = total + inst.cost.get(state.tail, dest) * ctx.compensation(state.driver);
        if state.driver.is_occasional() {
            total = total - inst.cost.get(origin, dest);
        }
    }
    (total, if keep_states { states } else { Vec::new() })
}
