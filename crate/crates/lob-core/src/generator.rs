//! The infinitesimal generator of the book process and its factorization
//! through order flow and clearing.
//!
//! The order-flow generator acts on functions of arbitrary configurations by
//! summing `rate * (f(perturbed) - f(state))` over all events. The book
//! process generator is obtained by composing each perturbation with
//! clearing: restrict-to-admissible of the flow generator applied to
//! `f ∘ clear`. [`apply_l_explicit`] evaluates the same operator from the
//! closed-form per-event clearing formulas, providing an independent code
//! path; [`transition_distribution`] materializes the jump rates, which also
//! drives the adjoint (forward-equation) action and dense truncations used
//! by operator-level tests.

use crate::book::{BookState, Depth};
use crate::centred::{clear_centred, pad_outside_window, CentredError, CentredSides};
use crate::event::Event;
use crate::expm::expm;
use crate::flow::{Frame, IntensityModel};
use crate::matching::clear;
use nalgebra::DMatrix;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Debug;
use std::hash::Hash;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeneratorError {
    #[error("state must be admissible")]
    NotAdmissible,
    #[error("model frame {model:?} does not match the state frame {state:?}")]
    FrameMismatch { model: Frame, state: Frame },
    #[error("truncation exceeded the budget of {0} states")]
    BudgetExceeded(usize),
    #[error(transparent)]
    Centred(#[from] CentredError),
}

/// A bounded real-valued function of states: finitely many explicit values
/// plus a default everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFunction<S: Ord> {
    values: BTreeMap<S, f64>,
    default: f64,
}

impl<S: Ord> StateFunction<S> {
    pub fn constant(default: f64) -> Self {
        Self { values: BTreeMap::new(), default }
    }

    pub fn from_pairs(default: f64, pairs: impl IntoIterator<Item = (S, f64)>) -> Self {
        Self { values: pairs.into_iter().collect(), default }
    }

    /// Indicator of a finite set (1 on the set, 0 elsewhere).
    pub fn indicator(set: impl IntoIterator<Item = S>) -> Self {
        Self::from_pairs(0.0, set.into_iter().map(|s| (s, 1.0)))
    }

    pub fn set(&mut self, state: S, value: f64) {
        self.values.insert(state, value);
    }

    pub fn get(&self, state: &S) -> f64 {
        self.values.get(state).copied().unwrap_or(self.default)
    }

    pub fn default_value(&self) -> f64 {
        self.default
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .values()
            .map(|v| v.abs())
            .fold(self.default.abs(), f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, &f64)> {
        self.values.iter()
    }
}

/// A non-negative finite measure on states.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateMeasure<S: Ord> {
    masses: BTreeMap<S, f64>,
}

impl<S: Ord> StateMeasure<S> {
    pub fn new() -> Self {
        Self { masses: BTreeMap::new() }
    }

    pub fn point_mass(state: S, mass: f64) -> Self {
        let mut m = Self::new();
        m.set(state, mass);
        m
    }

    pub fn set(&mut self, state: S, mass: f64) {
        assert!(mass >= 0.0, "measures carry non-negative mass");
        self.masses.insert(state, mass);
    }

    pub fn mass(&self, state: &S) -> f64 {
        self.masses.get(state).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, &f64)> {
        self.masses.iter()
    }
}

/// A signed finite measure, the output of the adjoint generator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignedMeasure<S: Ord> {
    masses: BTreeMap<S, f64>,
}

impl<S: Ord> SignedMeasure<S> {
    pub fn new() -> Self {
        Self { masses: BTreeMap::new() }
    }

    pub fn add(&mut self, state: S, delta: f64) {
        *self.masses.entry(state).or_insert(0.0) += delta;
    }

    pub fn value(&self, state: &S) -> f64 {
        self.masses.get(state).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.masses.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, &f64)> {
        self.masses.iter()
    }
}

/// Pairing `<f, m> = sum_s f(s) m(s)` of a function with a signed measure.
pub fn pair<S: Ord>(f: &StateFunction<S>, m: &SignedMeasure<S>) -> f64 {
    m.iter().map(|(s, mass)| f.get(s) * mass).sum()
}

/// The jump dynamics a generator acts through: event rates on the ambient
/// configuration space, the flow perturbation, and the clearing projection.
pub trait JumpDynamics {
    type State: Clone + Ord + Hash + Debug;

    fn for_each_event(&self, state: &Self::State, f: &mut dyn FnMut(Event, f64));

    fn total_rate(&self, state: &Self::State) -> f64 {
        let mut total = 0.0;
        self.for_each_event(state, &mut |_, r| total += r);
        total
    }

    /// Apply the flow event without clearing; `None` if it leaves the
    /// configuration space (never happens for events with positive rate).
    fn perturb(&self, state: &Self::State, event: &Event) -> Option<Self::State>;

    fn clear_state(&self, state: &Self::State) -> Result<Self::State, GeneratorError>;

    fn is_admissible(&self, state: &Self::State) -> bool;
}

/// Fixed-coordinate dynamics of a model over raw book configurations.
pub struct AbsoluteDynamics<'a> {
    model: &'a IntensityModel,
}

impl<'a> AbsoluteDynamics<'a> {
    pub fn new(model: &'a IntensityModel) -> Result<Self, GeneratorError> {
        if model.frame() != Frame::Absolute {
            return Err(GeneratorError::FrameMismatch { model: model.frame(), state: Frame::Absolute });
        }
        Ok(Self { model })
    }

    pub fn model(&self) -> &IntensityModel {
        self.model
    }
}

impl JumpDynamics for AbsoluteDynamics<'_> {
    type State = BookState;

    fn for_each_event(&self, state: &BookState, f: &mut dyn FnMut(Event, f64)) {
        self.model.for_each_event(state, |e, r| f(e, r));
    }

    fn perturb(&self, state: &BookState, event: &Event) -> Option<BookState> {
        event.apply_to(state)
    }

    fn clear_state(&self, state: &BookState) -> Result<BookState, GeneratorError> {
        Ok(clear(state).cleared)
    }

    fn is_admissible(&self, state: &BookState) -> bool {
        state.is_admissible()
    }
}

/// A centred configuration: window sides plus twice-the-mid-price. The flow
/// leaves the price part untouched; clearing re-centres it.
pub type CentredConfig = (CentredSides, i64);

/// Mid-price-centred dynamics. For the state-dependent-width model the
/// clearing step is followed by the resting-depth padding map.
pub struct CentredDynamics<'a> {
    model: &'a IntensityModel,
}

impl<'a> CentredDynamics<'a> {
    pub fn new(model: &'a IntensityModel) -> Result<Self, GeneratorError> {
        if model.frame() != Frame::Centred {
            return Err(GeneratorError::FrameMismatch { model: model.frame(), state: Frame::Centred });
        }
        Ok(Self { model })
    }
}

impl JumpDynamics for CentredDynamics<'_> {
    type State = CentredConfig;

    fn for_each_event(&self, state: &CentredConfig, f: &mut dyn FnMut(Event, f64)) {
        self.model.for_each_event(&state.0, |e, r| f(e, r));
    }

    fn perturb(&self, state: &CentredConfig, event: &Event) -> Option<CentredConfig> {
        let (sides, p) = state;
        let dp = sides.d_prime() as i32;
        if event.price < -dp || event.price > dp || event.size < 1 {
            return None;
        }
        let mut out = sides.clone();
        let queue = if event.kind.is_buy_side() { out.buy_mut(event.price) } else { out.sell_mut(event.price) };
        if event.kind.is_cancel() {
            if event.size > *queue {
                return None;
            }
            *queue -= event.size;
        } else {
            *queue += event.size;
        }
        Some((out, *p))
    }

    fn clear_state(&self, state: &CentredConfig) -> Result<CentredConfig, GeneratorError> {
        let cleared = clear_centred(&state.0, state.1)?;
        let cleared = match self.model {
            IntensityModel::Model3 { window, default_sell, default_buy, .. } => {
                pad_outside_window(&cleared, *window, *default_sell, *default_buy)
            }
            _ => cleared,
        };
        Ok(cleared.into_parts())
    }

    fn is_admissible(&self, state: &CentredConfig) -> bool {
        match clear_centred(&state.0, state.1) {
            Ok(c) => {
                let fixed = match self.model {
                    IntensityModel::Model3 { window, default_sell, default_buy, .. } => {
                        pad_outside_window(&c, *window, *default_sell, *default_buy)
                    }
                    _ => c,
                };
                fixed.into_parts() == *state
            }
            Err(_) => false,
        }
    }
}

/// Order-flow generator applied to `f` at `state`: events perturb the
/// configuration without clearing.
pub fn apply_lo<D: JumpDynamics>(dynamics: &D, f: &StateFunction<D::State>, state: &D::State) -> f64 {
    let fx = f.get(state);
    let mut acc = 0.0;
    dynamics.for_each_event(state, &mut |e, r| {
        let y = dynamics
            .perturb(state, &e)
            .expect("events with positive rate stay inside the configuration space");
        acc += r * (f.get(&y) - fx);
    });
    acc
}

/// Book-process generator applied to `f` at an admissible `state`: the flow
/// generator evaluated on `f ∘ clear`.
pub fn apply_l<D: JumpDynamics>(
    dynamics: &D,
    f: &StateFunction<D::State>,
    state: &D::State,
) -> Result<f64, GeneratorError> {
    if !dynamics.is_admissible(state) {
        return Err(GeneratorError::NotAdmissible);
    }
    let fx = f.get(state);
    let mut acc = 0.0;
    let mut err = None;
    dynamics.for_each_event(state, &mut |e, r| {
        if err.is_some() {
            return;
        }
        let y = dynamics
            .perturb(state, &e)
            .expect("events with positive rate stay inside the configuration space");
        match dynamics.clear_state(&y) {
            Ok(cleared) => acc += r * (f.get(&cleared) - fx),
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(acc),
    }
}

/// One merged jump: a representative event, the summed rate, and the cleared
/// successor.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub event: Event,
    pub rate: f64,
    pub successor: S,
}

/// All jumps out of one admissible state, merged by cleared successor. Rates
/// are accumulated in the fixed event scan order, so the distribution is
/// deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDistribution<S> {
    pub transitions: Vec<Transition<S>>,
    pub total_rate: f64,
}

impl<S> TransitionDistribution<S> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Push every flow event through clearing and merge equal successors.
pub fn transition_distribution<D: JumpDynamics>(
    dynamics: &D,
    state: &D::State,
) -> Result<TransitionDistribution<D::State>, GeneratorError> {
    if !dynamics.is_admissible(state) {
        return Err(GeneratorError::NotAdmissible);
    }
    let mut transitions: Vec<Transition<D::State>> = Vec::new();
    let mut index: HashMap<D::State, usize> = HashMap::new();
    let mut total = 0.0;
    let mut err = None;
    dynamics.for_each_event(state, &mut |e, r| {
        if err.is_some() {
            return;
        }
        let y = dynamics
            .perturb(state, &e)
            .expect("events with positive rate stay inside the configuration space");
        match dynamics.clear_state(&y) {
            Ok(succ) => {
                total += r;
                match index.get(&succ) {
                    Some(&i) => transitions[i].rate += r,
                    None => {
                        index.insert(succ.clone(), transitions.len());
                        transitions.push(Transition { event: e, rate: r, successor: succ });
                    }
                }
            }
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(TransitionDistribution { transitions, total_rate: total }),
    }
}

/// Forward-equation action of the generator on a measure over admissible
/// states: mass flows out of each state at its total rate and into each
/// cleared successor at the jump rate. By duality this is the adjoint of
/// [`apply_l`].
pub fn apply_l_adjoint<D: JumpDynamics>(
    dynamics: &D,
    mu: &StateMeasure<D::State>,
) -> Result<SignedMeasure<D::State>, GeneratorError> {
    let mut out = SignedMeasure::new();
    for (state, &mass) in mu.iter() {
        if mass == 0.0 {
            continue;
        }
        let td = transition_distribution(dynamics, state)?;
        out.add(state.clone(), -td.total_rate * mass);
        for t in &td.transitions {
            out.add(t.successor.clone(), t.rate * mass);
        }
    }
    Ok(out)
}

/// Book-process generator from the closed-form per-event clearing formulas
/// (no clearing call): the three-way split of crossing buy arrivals, its
/// sell mirror, and the two cancellation sums, all read off the cumulative
/// profile of the current state. Fixed-coordinate models only; requires both
/// sides non-empty.
pub fn apply_l_explicit(
    model: &IntensityModel,
    f: &StateFunction<BookState>,
    state: &BookState,
) -> Result<f64, GeneratorError> {
    use crate::book::{truncate_above, truncate_below, BookProfile};
    use crate::event::EventKind;

    if model.frame() != Frame::Absolute {
        return Err(GeneratorError::FrameMismatch { model: model.frame(), state: Frame::Absolute });
    }
    if !state.is_admissible() || !state.both_sides_nonempty() {
        return Err(GeneratorError::NotAdmissible);
    }
    let profile = BookProfile::new(state);
    let d = state.d();
    let (a, b) = state.ask_bid();
    let fx = f.get(state);
    let mut acc = 0.0;

    let buy_with = |price: u32, delta: Depth, sell: Vec<Depth>| -> BookState {
        let mut buy = state.buy().to_vec();
        buy[price as usize - 1] += delta;
        BookState::new(buy, sell).expect("depths stay non-negative")
    };
    let sell_with = |price: u32, delta: Depth, buy: Vec<Depth>| -> BookState {
        let mut sell = state.sell().to_vec();
        sell[price as usize - 1] += delta;
        BookState::new(buy, sell).expect("depths stay non-negative")
    };

    for z in 1..=model.max_size() {
        let sinv = profile.sell_inverse(z);
        let binv = profile.buy_inverse(z);

        // buy arrivals resting below the ask
        for i in 1..a {
            let r = model.rate(state, EventKind::LimitBuy, i as i32, z);
            if r > 0.0 {
                acc += r * (f.get(&buy_with(i, z, state.sell().to_vec())) - fx);
            }
        }
        // buy arrivals at or above the ask, partially executed
        for i in a..sinv.min(d + 1) {
            let r = model.rate(state, EventKind::LimitBuy, i as i32, z);
            if r > 0.0 {
                let filled = profile.cum_sell_below(i);
                let y = buy_with(i, z - filled, truncate_above(state.sell(), i as i64 + 1));
                acc += r * (f.get(&y) - fx);
            }
        }
        // buy arrivals fully executed against the cheapest sells
        for i in sinv..=d {
            let r = model.rate(state, EventKind::LimitBuy, i as i32, z);
            if r > 0.0 {
                let mut sell = truncate_above(state.sell(), sinv as i64 + 1);
                sell[sinv as usize - 1] = profile.cum_sell_below(sinv) - z;
                let y = BookState::new(state.buy().to_vec(), sell).unwrap();
                acc += r * (f.get(&y) - fx);
            }
        }
        // sell arrivals resting above the bid
        for i in (b + 1)..=d {
            let r = model.rate(state, EventKind::LimitSell, i as i32, z);
            if r > 0.0 {
                acc += r * (f.get(&sell_with(i, z, state.buy().to_vec())) - fx);
            }
        }
        // sell arrivals at or below the bid, partially executed
        for i in (binv + 1)..=b {
            let r = model.rate(state, EventKind::LimitSell, i as i32, z);
            if r > 0.0 {
                let filled = profile.cum_buy_above(i);
                let y = sell_with(i, z - filled, truncate_below(state.buy(), i as i64 - 1));
                acc += r * (f.get(&y) - fx);
            }
        }
        // sell arrivals fully executed against the best buys
        for i in 1..=binv.min(d) {
            let r = model.rate(state, EventKind::LimitSell, i as i32, z);
            if r > 0.0 {
                let mut buy = truncate_below(state.buy(), binv as i64 - 1);
                buy[binv as usize - 1] = profile.cum_buy_above(binv) - z;
                let y = BookState::new(buy, state.sell().to_vec()).unwrap();
                acc += r * (f.get(&y) - fx);
            }
        }
        // cancellations leave the book admissible as-is
        for i in 1..=b {
            let r = model.rate(state, EventKind::CancelBuy, i as i32, z);
            if r > 0.0 {
                acc += r * (f.get(&buy_with(i, -z, state.sell().to_vec())) - fx);
            }
        }
        for i in a..=d {
            let r = model.rate(state, EventKind::CancelSell, i as i32, z);
            if r > 0.0 {
                acc += r * (f.get(&sell_with(i, -z, state.buy().to_vec())) - fx);
            }
        }
    }
    Ok(acc)
}

/// Wrap dynamics so that arrivals pushing any queue past `cap` get rate
/// zero. The capped flow is itself a legal model, which keeps finite
/// truncations closed.
pub struct CappedDynamics<D> {
    inner: D,
    cap: Depth,
}

impl<D> CappedDynamics<D> {
    pub fn new(inner: D, cap: Depth) -> Self {
        Self { inner, cap }
    }
}

impl<D: JumpDynamics> JumpDynamics for CappedDynamics<D>
where
    D::State: WithinCap,
{
    type State = D::State;

    fn for_each_event(&self, state: &Self::State, f: &mut dyn FnMut(Event, f64)) {
        let cap = self.cap;
        let inner = &self.inner;
        inner.for_each_event(state, &mut |e, r| {
            if e.kind.is_cancel() || state.queue_after_arrival(&e) <= cap {
                f(e, r);
            }
        });
    }

    fn perturb(&self, state: &Self::State, event: &Event) -> Option<Self::State> {
        self.inner.perturb(state, event)
    }

    fn clear_state(&self, state: &Self::State) -> Result<Self::State, GeneratorError> {
        self.inner.clear_state(state)
    }

    fn is_admissible(&self, state: &Self::State) -> bool {
        self.inner.is_admissible(state)
    }
}

/// Queue occupancy after an arrival, for depth capping.
pub trait WithinCap {
    fn queue_after_arrival(&self, event: &Event) -> Depth;
}

impl WithinCap for BookState {
    fn queue_after_arrival(&self, event: &Event) -> Depth {
        let q = if event.kind.is_buy_side() {
            self.buy_at(event.price as u32)
        } else {
            self.sell_at(event.price as u32)
        };
        q + event.size
    }
}

impl WithinCap for CentredConfig {
    fn queue_after_arrival(&self, event: &Event) -> Depth {
        let q = if event.kind.is_buy_side() {
            self.0.buy_at(event.price)
        } else {
            self.0.sell_at(event.price)
        };
        q + event.size
    }
}

/// Indexed finite state list with the dense generator matrix
/// `matrix[(i, j)] = rate(i -> j)`, diagonal minus the total rate. Rows sum
/// to zero.
#[derive(Debug, Clone)]
pub struct Truncation<S> {
    pub states: Vec<S>,
    pub index: HashMap<S, usize>,
    pub matrix: DMatrix<f64>,
}

impl<S: serde::Serialize> Truncation<S> {
    /// Edge list `src,dst,rate` for external inspection.
    pub fn edges_csv(&self) -> String {
        let mut out = String::from("src,dst,rate\n");
        for i in 0..self.states.len() {
            for j in 0..self.states.len() {
                if i != j && self.matrix[(i, j)] != 0.0 {
                    out.push_str(&format!("{},{},{}\n", i, j, self.matrix[(i, j)]));
                }
            }
        }
        out
    }

    /// State table `index,state` with the state as escaped JSON.
    pub fn states_csv(&self) -> String {
        let mut out = String::from("index,state\n");
        for (i, s) in self.states.iter().enumerate() {
            let json = serde_json::to_string(s).expect("truncation states serialize");
            out.push_str(&format!("{},\"{}\"\n", i, json.replace('"', "\"\"")));
        }
        out
    }
}

/// Breadth-first closure of admissible states reachable from `seed` under
/// the depth-capped dynamics, with the dense generator on that set. The cap
/// makes the closure finite; exceeding `max_states` is an error.
pub fn enumerate_truncation<D: JumpDynamics>(
    dynamics: &D,
    seed: &D::State,
    cap: Depth,
    max_states: usize,
) -> Result<Truncation<D::State>, GeneratorError>
where
    D::State: WithinCap,
{
    let capped = CappedDynamics::new(DynRef(dynamics), cap);
    let start = dynamics.clear_state(seed)?;
    let mut states = vec![start.clone()];
    let mut index = HashMap::from([(start, 0usize)]);
    let mut queue = VecDeque::from([0usize]);
    let mut rows: Vec<TransitionDistribution<D::State>> = Vec::new();
    while let Some(i) = queue.pop_front() {
        let td = transition_distribution(&capped, &states[i].clone())?;
        for t in &td.transitions {
            if !index.contains_key(&t.successor) {
                if states.len() >= max_states {
                    return Err(GeneratorError::BudgetExceeded(max_states));
                }
                index.insert(t.successor.clone(), states.len());
                queue.push_back(states.len());
                states.push(t.successor.clone());
            }
        }
        rows.push(td);
    }
    let n = states.len();
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    for (i, td) in rows.iter().enumerate() {
        for t in &td.transitions {
            let j = index[&t.successor];
            matrix[(i, j)] += t.rate;
        }
        matrix[(i, i)] -= td.total_rate;
    }
    Ok(Truncation { states, index, matrix })
}

/// Borrowed-dynamics shim so capping can wrap a reference.
pub struct DynRef<'a, D>(pub &'a D);

impl<D: JumpDynamics> JumpDynamics for DynRef<'_, D> {
    type State = D::State;

    fn for_each_event(&self, state: &Self::State, f: &mut dyn FnMut(Event, f64)) {
        self.0.for_each_event(state, f)
    }

    fn perturb(&self, state: &Self::State, event: &Event) -> Option<Self::State> {
        self.0.perturb(state, event)
    }

    fn clear_state(&self, state: &Self::State) -> Result<Self::State, GeneratorError> {
        self.0.clear_state(state)
    }

    fn is_admissible(&self, state: &Self::State) -> bool {
        self.0.is_admissible(state)
    }
}

/// Finite closure of the ambient configuration space under capped flow
/// events and clearing, with the dense flow-generator matrix and the
/// restriction/composition matrices that factor the book generator:
/// `book_generator = restrict * flow_generator * compose_with_clearing`.
#[derive(Debug, Clone)]
pub struct FlowTruncation<S> {
    /// All configurations (admissible or not), BFS order from the seed.
    pub states: Vec<S>,
    pub index: HashMap<S, usize>,
    /// Indices (into `states`) of the admissible configurations.
    pub admissible: Vec<usize>,
    /// Flow generator on the full configuration list.
    pub flow_matrix: DMatrix<f64>,
    /// `compose[(x, k)] = 1` iff clearing maps configuration `x` to the
    /// admissible state with admissible-index `k`.
    pub compose: DMatrix<f64>,
    /// `restrict[(k, x)] = 1` iff configuration `x` is the admissible state
    /// with admissible-index `k`.
    pub restrict: DMatrix<f64>,
}

impl<S> FlowTruncation<S> {
    /// The book generator factored through the flow truncation.
    pub fn book_matrix(&self) -> DMatrix<f64> {
        &self.restrict * &self.flow_matrix * &self.compose
    }
}

/// Close the ambient space from `seed` under capped flow perturbations and
/// clearing, and build the dense factor matrices.
pub fn enumerate_flow_truncation<D: JumpDynamics>(
    dynamics: &D,
    seed: &D::State,
    cap: Depth,
    max_states: usize,
) -> Result<FlowTruncation<D::State>, GeneratorError>
where
    D::State: WithinCap,
{
    let capped = CappedDynamics::new(DynRef(dynamics), cap);
    let start = dynamics.clear_state(seed)?;
    let mut states = vec![start.clone()];
    let mut index = HashMap::from([(start, 0usize)]);
    let mut queue = VecDeque::from([0usize]);
    let mut events_per_state: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut cleared_of: Vec<usize> = Vec::new();
    while let Some(i) = queue.pop_front() {
        let state = states[i].clone();
        let mut intern = |s: D::State, states: &mut Vec<D::State>, queue: &mut VecDeque<usize>| -> Result<usize, GeneratorError> {
            if let Some(&j) = index.get(&s) {
                return Ok(j);
            }
            if states.len() >= max_states {
                return Err(GeneratorError::BudgetExceeded(max_states));
            }
            let j = states.len();
            index.insert(s.clone(), j);
            states.push(s);
            queue.push_back(j);
            Ok(j)
        };
        let mut row = Vec::new();
        let mut err = None;
        capped.for_each_event(&state, &mut |e, r| {
            if err.is_some() {
                return;
            }
            let y = capped
                .perturb(&state, &e)
                .expect("events with positive rate stay inside the configuration space");
            match intern(y, &mut states, &mut queue) {
                Ok(j) => row.push((j, r)),
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        let cl = capped.clear_state(&state)?;
        let cj = intern(cl, &mut states, &mut queue)?;
        events_per_state.push(row);
        cleared_of.push(cj);
    }
    let n = states.len();
    let admissible: Vec<usize> = (0..n).filter(|&i| dynamics.is_admissible(&states[i])).collect();
    let adm_index: HashMap<usize, usize> = admissible.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let m = admissible.len();
    let mut flow_matrix = DMatrix::<f64>::zeros(n, n);
    for (i, row) in events_per_state.iter().enumerate() {
        for &(j, r) in row {
            flow_matrix[(i, j)] += r;
            flow_matrix[(i, i)] -= r;
        }
    }
    let mut compose = DMatrix::<f64>::zeros(n, m);
    for (i, &cj) in cleared_of.iter().enumerate() {
        compose[(i, adm_index[&cj])] = 1.0;
    }
    let mut restrict = DMatrix::<f64>::zeros(m, n);
    for (k, &i) in admissible.iter().enumerate() {
        restrict[(k, i)] = 1.0;
    }
    Ok(FlowTruncation { states, index, admissible, flow_matrix, compose, restrict })
}

/// Sup-norm error between repeated exact steps of the book semigroup and
/// repeated split steps (restrict, flow semigroup, clearing composition),
/// over `steps` applications of step size `dt`. Both semigroups are built
/// from dense exponentials on the truncation.
pub fn splitting_error<S: Clone + Ord + Hash + Debug>(ft: &FlowTruncation<S>, dt: f64, steps: u32) -> f64 {
    let book = ft.book_matrix();
    let exact_step = expm(&(book * -dt));
    let flow_step = expm(&(ft.flow_matrix.clone() * -dt));
    let split_step = &ft.restrict * flow_step * &ft.compose;
    let mut exact = exact_step.clone();
    let mut split = split_step.clone();
    for _ in 1..steps {
        exact *= &exact_step;
        split *= &split_step;
    }
    crate::expm::sup_operator_norm(&(exact - split))
}
