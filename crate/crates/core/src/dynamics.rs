//! Schrödinger evolution under a truncated scope, probability currents into
//! ready components, the stochastic trigger and collapse.
//!
//! Ready components act as sinks: a sink of rate `k` on realized component
//! `j` drains `k |c_j|^2` per unit time out of the realized block and adds
//! it to the ready component's square modulus. The realized block evolves
//! under `A = -iH - (1/2) sum_k k |j><j|`, independent of every ready
//! amplitude, and total square modulus is conserved exactly.
//!
//! Each step uses the exact propagator `exp(A dt)` together with the exact
//! sink integrals `Q_k = int_0^dt exp(A^H t) k |j><j| exp(A t) dt`
//! (obtained from one block-matrix exponential), so the inflow into each
//! ready component over the step is `c^H Q_k c`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{
    launch, BasisLabel, Component, Coupling, EmissionTag, GraphError, HamiltonianScope, Status,
    TransitionRules,
};
use crate::models::{build_configuration, ModelProgram};
use crate::record::{Emission, EmissionRecord};
use crate::scheme::LevelScheme;

/// Largest per-step trigger probability accepted by the integrator.
pub const TRIGGER_CAP: f64 = 0.1;
/// Steps per fastest Rabi period.
pub const RABI_STEPS: f64 = 50.0;
const GROW_BELOW: f64 = 0.025;
const MAX_HALVINGS: i32 = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("step rejected: trigger probability {p_max} exceeds {TRIGGER_CAP} at dt = {dt}")]
    StepRejected { p_max: f64, dt: f64 },
    #[error("step size underflow at t = {time}")]
    StepUnderflow { time: f64 },
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("time horizon must be nonnegative, got {0}")]
    InvalidHorizon(f64),
    #[error("trigger precondition violated: {0}")]
    TriggerPrecondition(String),
    #[error("component {0} not found")]
    NotFound(usize),
    #[error("component {0} is not ready")]
    NotReady(usize),
    #[error("realized square modulus vanished at t = {0}")]
    Exhausted(f64),
}

/// A sink from a realized component into a ready one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkChannel {
    /// Position of the source in [`ScopeOperator::realized`].
    pub source: usize,
    /// Component id of the ready target.
    pub target: usize,
    pub rate: f64,
}

/// Matrix form of a truncated scope.
#[derive(Clone, Debug, PartialEq)]
pub struct ScopeOperator {
    /// Component ids of the realized block, in matrix order.
    pub realized: Vec<usize>,
    /// Row-major generator `A` of the realized block.
    pub generator: Vec<Complex64>,
    pub sinks: Vec<SinkChannel>,
    /// Largest step allowed by the Rabi resolution floor.
    pub dt_max: f64,
    key: Vec<u64>,
}

impl ScopeOperator {
    pub fn from_scope(scope: &HamiltonianScope) -> Self {
        let realized: Vec<usize> = scope.realized_nodes().collect();
        let n = realized.len();
        let mut pos = vec![usize::MAX; scope.nodes.len()];
        for (k, &id) in realized.iter().enumerate() {
            pos[id] = k;
        }
        let mut generator = vec![Complex64::new(0.0, 0.0); n * n];
        let mut sinks = Vec::new();
        let mut max_coupling: f64 = 0.0;
        for e in &scope.edges {
            let src = pos[e.source];
            if src == usize::MAX {
                continue;
            }
            match e.coupling {
                Coupling::Coherent(v) => {
                    let tgt = pos[e.target];
                    if tgt != usize::MAX {
                        generator[src * n + tgt] += Complex64::new(0.0, -v);
                        max_coupling = max_coupling.max(v.abs());
                    }
                }
                Coupling::Sink(rate) => {
                    generator[src * n + src] -= Complex64::new(0.5 * rate, 0.0);
                    sinks.push(SinkChannel {
                        source: src,
                        target: e.target,
                        rate,
                    });
                }
            }
        }
        let total_rate: f64 = sinks.iter().map(|s| s.rate).sum();
        let dt_max = if max_coupling > 0.0 {
            // Coherent element is half the Rabi coupling.
            2.0 * std::f64::consts::PI / (2.0 * max_coupling) / RABI_STEPS
        } else if total_rate > 0.0 {
            TRIGGER_CAP / total_rate
        } else {
            f64::INFINITY
        };
        let mut key = vec![n as u64];
        for z in &generator {
            key.push(z.re.to_bits());
            key.push(z.im.to_bits());
        }
        for s in &sinks {
            key.push(s.source as u64);
            key.push(s.rate.to_bits());
        }
        ScopeOperator {
            realized,
            generator,
            sinks,
            dt_max,
            key,
        }
    }

    pub fn dim(&self) -> usize {
        self.realized.len()
    }

    pub fn has_sinks(&self) -> bool {
        !self.sinks.is_empty()
    }
}

/// Exact one-step maps for a scope operator and step size.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub dt: f64,
    n: usize,
    u: Vec<Complex64>,
    q: Vec<Vec<Complex64>>,
}

impl Propagator {
    pub fn new(op: &ScopeOperator, dt: f64) -> Self {
        let n = op.dim();
        let a = DMatrix::from_row_slice(n, n, &op.generator);
        let u = (&a * Complex64::new(dt, 0.0)).exp();
        let mut q = Vec::with_capacity(op.sinks.len());
        for sink in &op.sinks {
            let mut block = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
            block.view_mut((0, 0), (n, n)).copy_from(&(-a.adjoint()));
            block[(sink.source, n + sink.source)] = Complex64::new(sink.rate, 0.0);
            block.view_mut((n, n), (n, n)).copy_from(&a);
            let e = (block * Complex64::new(dt, 0.0)).exp();
            let f12 = e.view((0, n), (n, n)).into_owned();
            let f22 = e.view((n, n), (n, n)).into_owned();
            let qk = f22.adjoint() * f12;
            q.push(row_major(&qk));
        }
        Propagator {
            dt,
            n,
            u: row_major(&u),
            q,
        }
    }

    /// `U^H U + sum_k Q_k`, which equals the identity.
    pub fn conservation_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut z = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    z += self.u[k * n + i].conj() * self.u[k * n + j];
                }
                for qk in &self.q {
                    z += qk[i * n + j];
                }
                if i == j {
                    z -= 1.0;
                }
                worst = worst.max(z.norm());
            }
        }
        worst
    }
}

fn row_major(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Current into one ready component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadyCurrent {
    pub component: usize,
    pub current: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurrentReport {
    pub time: f64,
    pub currents: Vec<ReadyCurrent>,
    pub total: f64,
    /// Square modulus still held by realized components; currents are
    /// divided by this to give trigger rates.
    pub normalizer: f64,
}

impl CurrentReport {
    pub fn max_trigger_probability(&self, dt: f64) -> f64 {
        self.currents
            .iter()
            .map(|c| c.current * dt / self.normalizer)
            .fold(0.0, f64::max)
    }
}

/// Live components of one trajectory.
#[derive(Clone, Debug)]
pub struct SystemState {
    pub time: f64,
    pub components: Vec<Component>,
    pub scope: Arc<HamiltonianScope>,
    pub operator: Arc<ScopeOperator>,
    pub rng: ChaCha8Rng,
}

impl SystemState {
    pub fn from_launch(
        components: Vec<Component>,
        scope: HamiltonianScope,
        time: f64,
        rng: ChaCha8Rng,
    ) -> Self {
        let operator = Arc::new(ScopeOperator::from_scope(&scope));
        SystemState {
            time,
            components,
            scope: Arc::new(scope),
            operator,
            rng,
        }
    }

    /// State holding `label` alone, realized, with unit square modulus.
    pub fn initial(
        label: BasisLabel,
        rules: &dyn TransitionRules,
        time: f64,
        rng: ChaCha8Rng,
    ) -> Result<Self, DynamicsError> {
        let seed = Component {
            label,
            amplitude: Complex64::new(1.0, 0.0),
            status: Status::Ready,
            gap_id: None,
        };
        let (components, scope) = launch(&seed, rules, time, 0)?;
        Ok(Self::from_launch(components, scope, time, rng))
    }

    /// Total square modulus, recomputed from the amplitudes.
    pub fn square_modulus(&self) -> f64 {
        self.components.iter().map(Component::square_modulus).sum()
    }

    pub fn realized_square_modulus(&self) -> f64 {
        self.components
            .iter()
            .filter(|c| c.status == Status::Realized)
            .map(Component::square_modulus)
            .sum()
    }

    pub fn ready_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.components.len()).filter(move |&i| self.components[i].status == Status::Ready)
    }

    pub fn amplitudes(&self) -> Vec<Complex64> {
        self.components.iter().map(|c| c.amplitude).collect()
    }

    fn sink_current(&self, sink: &SinkChannel) -> f64 {
        sink.rate * self.components[self.operator.realized[sink.source]].square_modulus()
    }
}

/// Instantaneous currents into every ready component.
pub fn compute_currents(state: &SystemState) -> CurrentReport {
    let currents: Vec<ReadyCurrent> = state
        .operator
        .sinks
        .iter()
        .map(|s| ReadyCurrent {
            component: s.target,
            current: state.sink_current(s).max(0.0),
        })
        .collect();
    CurrentReport {
        time: state.time,
        total: currents.iter().map(|c| c.current).sum(),
        currents,
        normalizer: state.realized_square_modulus(),
    }
}

/// Steps states with cached propagators.
#[derive(Default)]
pub struct Integrator {
    cache: HashMap<Vec<u64>, Arc<Propagator>>,
    last: Option<(Arc<ScopeOperator>, u64, Arc<Propagator>)>,
    amps: Vec<Complex64>,
    inflow: Vec<f64>,
}

impl Integrator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn propagator(&mut self, op: &Arc<ScopeOperator>, dt: f64) -> Arc<Propagator> {
        if let Some((last_op, bits, prop)) = &self.last {
            if Arc::ptr_eq(last_op, op) && *bits == dt.to_bits() {
                return prop.clone();
            }
        }
        let mut key = op.key.clone();
        key.push(dt.to_bits());
        let prop = self
            .cache
            .entry(key)
            .or_insert_with(|| Arc::new(Propagator::new(op, dt)))
            .clone();
        self.last = Some((op.clone(), dt.to_bits(), prop.clone()));
        prop
    }

    /// Advances `state` in place by `dt`. On rejection the state is left
    /// untouched. The report carries step-averaged currents stamped at
    /// mid-step.
    pub fn advance(&mut self, state: &mut SystemState, dt: f64) -> Result<CurrentReport, DynamicsError> {
        let mut report = CurrentReport {
            time: state.time,
            currents: Vec::new(),
            total: 0.0,
            normalizer: 0.0,
        };
        self.advance_into(state, dt, &mut report)?;
        Ok(report)
    }

    /// [`Integrator::advance`] writing into a reused report.
    pub fn advance_into(
        &mut self,
        state: &mut SystemState,
        dt: f64,
        report: &mut CurrentReport,
    ) -> Result<(), DynamicsError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DynamicsError::InvalidStep(dt));
        }
        let op = state.operator.clone();
        let prop = self.propagator(&op, dt);
        let n = op.dim();
        let mut c = std::mem::take(&mut self.amps);
        c.clear();
        c.extend(op.realized.iter().map(|&i| state.components[i].amplitude));
        let s_realized: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        let mut inflow = std::mem::take(&mut self.inflow);
        inflow.clear();
        let mut p_max: f64 = 0.0;
        let mut outcome = Ok(());
        for qk in &prop.q {
            let mut acc = 0.0;
            for i in 0..n {
                let row: Complex64 = qk[i * n..(i + 1) * n].iter().zip(&c).map(|(q, z)| q * z).sum();
                acc += (c[i].conj() * row).re;
            }
            let dp = acc.max(0.0);
            if dp > 0.0 {
                if !(s_realized > 0.0) {
                    outcome = Err(DynamicsError::Exhausted(state.time));
                    break;
                }
                p_max = p_max.max(dp / s_realized);
            }
            inflow.push(dp);
        }
        if outcome.is_ok() && p_max > TRIGGER_CAP {
            outcome = Err(DynamicsError::StepRejected { p_max, dt });
        }
        if outcome.is_ok() {
            for (i, &id) in op.realized.iter().enumerate() {
                state.components[id].amplitude = prop.u[i * n..(i + 1) * n].iter().zip(&c).map(|(u, z)| u * z).sum();
            }
            report.currents.clear();
            for (sink, &dp) in op.sinks.iter().zip(&inflow) {
                let ready = &mut state.components[sink.target];
                ready.amplitude = Complex64::new((ready.amplitude.norm_sqr() + dp).sqrt(), 0.0);
                report.currents.push(ReadyCurrent {
                    component: sink.target,
                    current: dp / dt,
                });
            }
            report.time = state.time + 0.5 * dt;
            report.total = report.currents.iter().map(|c| c.current).sum();
            report.normalizer = s_realized;
            state.time += dt;
        }
        self.amps = c;
        self.inflow = inflow;
        outcome
    }

    /// Functional form of [`Integrator::advance`].
    pub fn step(
        &mut self,
        state: &SystemState,
        dt: f64,
    ) -> Result<(SystemState, CurrentReport), DynamicsError> {
        let mut next = state.clone();
        let report = self.advance(&mut next, dt)?;
        Ok((next, report))
    }
}

/// Fires ready component `k` with probability `J_k dt / s`, the events
/// being mutually exclusive: a single uniform draw is laid against the
/// cumulative probabilities, so the chosen components stand in the ratio
/// of their currents.
pub fn sample_trigger<R: Rng + ?Sized>(
    report: &CurrentReport,
    s: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Option<usize>, DynamicsError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(DynamicsError::TriggerPrecondition(format!("normalizer must be positive, got {s}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::TriggerPrecondition(format!("dt must be positive, got {dt}")));
    }
    let mut total = 0.0;
    for c in &report.currents {
        if !(c.current >= 0.0 && c.current.is_finite()) {
            return Err(DynamicsError::TriggerPrecondition(format!(
                "current into component {} is {}",
                c.component, c.current
            )));
        }
        let p = c.current * dt / s;
        if p > TRIGGER_CAP * (1.0 + 1e-9) {
            return Err(DynamicsError::TriggerPrecondition(format!(
                "trigger probability {p} exceeds {TRIGGER_CAP}"
            )));
        }
        total += p;
    }
    if total > 1.0 {
        return Err(DynamicsError::TriggerPrecondition(format!(
            "trigger probabilities sum to {total}"
        )));
    }
    if total == 0.0 {
        return Ok(None);
    }
    let mut u: f64 = rng.random();
    for c in &report.currents {
        let p = c.current * dt / s;
        if u < p {
            return Ok(Some(c.component));
        }
        u -= p;
    }
    Ok(None)
}

/// Selects `chosen` and discards every other component. Returns the chosen
/// component, still ready, with its emission tag stamped at `time`.
pub fn collapse(state: &SystemState, chosen: usize, time: f64) -> Result<Component, DynamicsError> {
    let c = state.components.get(chosen).ok_or(DynamicsError::NotFound(chosen))?;
    if c.status != Status::Ready {
        return Err(DynamicsError::NotReady(chosen));
    }
    let mut out = c.clone();
    let launch_emitted = state.scope.nodes[0].label.emitted.len();
    if out.label.emitted.len() > launch_emitted {
        if let Some(tag) = out.label.emitted.last() {
            out.label.emitted = out.label.emitted.parent().push(EmissionTag { time, ..tag });
        }
    }
    Ok(out)
}

/// Fraction of a step at which the integrated current reaches `u` times
/// its step total, with the current interpolated by the quadratic matching
/// its endpoint values and step mean.
pub fn refine_fraction(j_start: f64, j_end: f64, mean: f64, u: f64) -> f64 {
    if !(mean > 0.0) {
        return u;
    }
    let a = j_start;
    let b = -4.0 * j_start - 2.0 * j_end + 6.0 * mean;
    let c = 3.0 * j_start + 3.0 * j_end - 6.0 * mean;
    let target = u * mean;
    let f = |x: f64| x * (a + x * (0.5 * b + x * c / 3.0)) - target;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepEvent {
    Advanced { dt: f64, p_max: f64 },
    Rejected { dt: f64 },
    Collapsed { time: f64, label: BasisLabel, emission: Option<Emission> },
    Finished,
}

/// One trajectory of a model program.
pub struct Trajectory<'p> {
    program: &'p ModelProgram,
    state: SystemState,
    integrator: Integrator,
    dt: f64,
    serial: u64,
    record: EmissionRecord,
    report: CurrentReport,
    j_start: Vec<f64>,
}

pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl<'p> Trajectory<'p> {
    pub fn new(program: &'p ModelProgram, seed: u64, stream: u64) -> Result<Self, DynamicsError> {
        let state = SystemState::initial(program.initial.clone(), program, 0.0, trajectory_rng(seed, stream))?;
        let dt = state.operator.dt_max;
        Ok(Trajectory {
            program,
            state,
            integrator: Integrator::new(),
            dt,
            serial: 0,
            record: EmissionRecord::new(0.0),
            report: CurrentReport {
                time: 0.0,
                currents: Vec::new(),
                total: 0.0,
                normalizer: 0.0,
            },
            j_start: Vec::new(),
        })
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn record(&self) -> &EmissionRecord {
        &self.record
    }

    /// Number of collapses so far.
    pub fn launches(&self) -> u64 {
        self.serial
    }

    /// Takes one integrator step, firing the trigger and relaunching if a
    /// ready component is chosen.
    pub fn step_once(&mut self, t_max: f64) -> Result<StepEvent, DynamicsError> {
        let remaining = t_max - self.state.time;
        if remaining <= 0.0 || !self.state.operator.has_sinks() {
            return Ok(StepEvent::Finished);
        }
        let h = self.dt.min(remaining);
        let op = self.state.operator.clone();
        self.j_start.clear();
        for s in &op.sinks {
            self.j_start.push(self.state.sink_current(s));
        }
        let t0 = self.state.time;
        match self.integrator.advance_into(&mut self.state, h, &mut self.report) {
            Ok(()) => {}
            Err(DynamicsError::StepRejected { .. }) => {
                self.dt *= 0.5;
                if self.dt < op.dt_max.min(1.0) * 0.5f64.powi(MAX_HALVINGS) {
                    return Err(DynamicsError::StepUnderflow { time: t0 });
                }
                return Ok(StepEvent::Rejected { dt: h });
            }
            Err(e) => return Err(e),
        }
        let report = &self.report;
        let p_max = report.max_trigger_probability(h);
        let fired = sample_trigger(report, report.normalizer, h, &mut self.state.rng)?;
        let Some(chosen) = fired else {
            if p_max < GROW_BELOW && h == self.dt && self.dt < op.dt_max {
                self.dt = (self.dt * 2.0).min(op.dt_max);
            }
            return Ok(StepEvent::Advanced { dt: h, p_max });
        };
        let k = op.sinks.iter().position(|s| s.target == chosen).expect("fired component is a sink target");
        let j_end = self.state.sink_current(&op.sinks[k]);
        let mean = report.currents[k].current;
        let u: f64 = self.state.rng.random();
        let tau = (t0 + refine_fraction(self.j_start[k], j_end, mean, u) * h).min(t0 + h);
        let chosen = collapse(&self.state, chosen, tau)?;
        let launch_emitted = self.state.scope.nodes[0].label.emitted.len();
        let emission = if chosen.label.emitted.len() > launch_emitted {
            chosen.label.emitted.last().map(|tag| Emission {
                time: tag.time,
                channel: tag.channel,
            })
        } else {
            None
        };
        self.serial += 1;
        let (components, scope) = launch(&chosen, self.program, tau, self.serial)?;
        let rng = self.state.rng.clone();
        self.state = SystemState::from_launch(components, scope, tau, rng);
        self.dt = self.state.operator.dt_max;
        if let Some(e) = emission {
            self.record.events.push(e);
        }
        Ok(StepEvent::Collapsed {
            time: tau,
            label: chosen.label,
            emission,
        })
    }

    pub fn run(mut self, t_max: f64) -> Result<EmissionRecord, DynamicsError> {
        if !(t_max >= 0.0) {
            return Err(DynamicsError::InvalidHorizon(t_max));
        }
        while self.step_once(t_max)? != StepEvent::Finished {}
        self.record.t_max = if t_max.is_finite() { t_max } else { self.state.time };
        Ok(self.record)
    }
}

/// Runs a program from `t = 0` to `t_max`.
pub fn run_program(
    program: &ModelProgram,
    t_max: f64,
    seed: u64,
    stream: u64,
) -> Result<EmissionRecord, DynamicsError> {
    Trajectory::new(program, seed, stream)?.run(t_max)
}

/// Runs the scheme's configured model from `t = 0` to `t_max`.
pub fn run_trajectory(scheme: &LevelScheme, t_max: f64, seed: u64) -> Result<EmissionRecord, DynamicsError> {
    run_program(&build_configuration(scheme), t_max, seed, 0)
}
