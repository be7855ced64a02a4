//! C ABI over the `firedispatch` library.
//!
//! Objects are opaque heap handles released with their `_free` function.
//! Every call returns an [`FdStatus`]; on failure the thread's last error
//! message is available from [`fd_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use firedispatch::costs::{build_cost_table, CostTable, Dispatch};
use firedispatch::erlang;
use firedispatch::heuristics::{osi_policy, osia_policy, OsiaConfig};
use firedispatch::mdp::{closest_first_policy, evaluate_policy, flar, policy_iteration, Policy};
use firedispatch::{generate_grid_graph, generate_instance, seeds, sim, Error, Instance};

/// Status codes returned by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidInstance = 3,
    Solver = 4,
    NonConvergence = 5,
    Io = 6,
    Panic = 7,
}

/// Policy construction method.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdMethod {
    ClosestFirst = 0,
    Optimal = 1,
    OneStepImprovement = 2,
    ApproximateImprovement = 3,
}

/// Opaque problem instance.
pub struct FdInstance(Instance);

/// Opaque tardiness-probability table.
pub struct FdCostTable(CostTable);

/// Opaque dispatch policy.
pub struct FdPolicy(Policy);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FdSimResult {
    pub incidents: u64,
    pub late: u64,
    pub flar_hat: f64,
    pub ci_halfwidth: f64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> FdStatus {
    match e {
        Error::InvalidArgument(_) | Error::UnknownStation(_) | Error::MissingPolicyEntry { .. } => {
            FdStatus::InvalidArgument
        }
        Error::MalformedGraph(_) | Error::InvalidInstance { .. } | Error::Json(_) => FdStatus::InvalidInstance,
        Error::Solver(_) => FdStatus::Solver,
        Error::NonConvergence { .. } => FdStatus::NonConvergence,
        Error::Io(_) | Error::Csv(_) => FdStatus::Io,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), (FdStatus, String)>) -> FdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FdStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FdStatus::Panic
        }
    }
}

fn lib<T>(r: firedispatch::Result<T>) -> Result<T, (FdStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (FdStatus, String) {
    (FdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, (FdStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), (FdStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generates a random instance. A negative `sparseness` draws it from the seed.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fd_instance_generate(
    d: usize,
    stations: usize,
    rho: f64,
    gamma: f64,
    sparseness: f64,
    correlated: bool,
    seed: u64,
    out: *mut *mut FdInstance,
) -> FdStatus {
    guard(|| {
        let s = if sparseness < 0.0 {
            0.4 + 0.6 * seeds::unit_interval(seeds::split(seed, seeds::STREAM_SPARSENESS))
        } else {
            sparseness
        };
        let g = lib(generate_grid_graph(d, s, seeds::split(seed, seeds::STREAM_GRAPH)))?;
        let inst = lib(generate_instance(
            &g,
            stations,
            rho,
            gamma,
            correlated,
            seeds::split(seed, seeds::STREAM_INSTANCE),
        ))?;
        put(out, Box::into_raw(Box::new(FdInstance(inst))), "out")
    })
}

/// Parses an instance from a NUL-terminated JSON document.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fd_instance_from_json(json: *const c_char, out: *mut *mut FdInstance) -> FdStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| (FdStatus::InvalidArgument, "json is not UTF-8".to_string()))?;
        let inst = lib(Instance::from_json(text))?;
        put(out, Box::into_raw(Box::new(FdInstance(inst))), "out")
    })
}

/// Serializes an instance; release the result with [`fd_string_free`].
///
/// # Safety
/// `inst` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fd_instance_to_json(inst: *const FdInstance, out: *mut *mut c_char) -> FdStatus {
    guard(|| {
        let inst = get(inst, "inst")?;
        let s = CString::new(inst.0.to_json()).map_err(|e| (FdStatus::Io, e.to_string()))?;
        put(out, s.into_raw(), "out")
    })
}

/// Number of stations and demand nodes.
///
/// # Safety
/// `inst` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fd_instance_sizes(
    inst: *const FdInstance,
    stations: *mut usize,
    nodes: *mut usize,
) -> FdStatus {
    guard(|| {
        let inst = get(inst, "inst")?;
        put(stations, inst.0.station_count(), "stations")?;
        put(nodes, inst.0.node_count(), "nodes")
    })
}

/// # Safety
/// `inst` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fd_instance_free(inst: *mut FdInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Builds the cost table in the instance's correlation mode.
///
/// # Safety
/// `inst` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fd_cost_table_build(inst: *const FdInstance, out: *mut *mut FdCostTable) -> FdStatus {
    guard(|| {
        let inst = get(inst, "inst")?;
        put(out, Box::into_raw(Box::new(FdCostTable(build_cost_table(&inst.0)))), "out")
    })
}

/// Tardiness probability of dispatching from `a` and `b` (0 = outside,
/// 1..=I stations) to node `j`.
///
/// # Safety
/// `table` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fd_cost_table_get(
    table: *const FdCostTable,
    a: usize,
    b: usize,
    j: usize,
    out: *mut f64,
) -> FdStatus {
    guard(|| {
        let t = &get(table, "table")?.0;
        if a > t.stations() || b > t.stations() || j >= t.locations() {
            return Err((FdStatus::InvalidArgument, format!("index out of range: ({a}, {b}, {j})")));
        }
        put(out, t.get(Dispatch::new(a, b), j), "out")
    })
}

/// # Safety
/// `table` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fd_cost_table_free(table: *mut FdCostTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Computes a policy. `osia_horizon <= 0` selects the default `10/μ`.
///
/// # Safety
/// `inst` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fd_policy_solve(
    inst: *const FdInstance,
    method: FdMethod,
    osia_horizon: f64,
    out: *mut *mut FdPolicy,
) -> FdStatus {
    guard(|| {
        let inst = &get(inst, "inst")?.0;
        let costs = build_cost_table(inst);
        let cf = closest_first_policy(inst);
        let pol = match method {
            FdMethod::ClosestFirst => cf,
            FdMethod::Optimal => lib(policy_iteration(inst, &costs, &cf))?.policy,
            FdMethod::OneStepImprovement => {
                let eval = lib(evaluate_policy(inst, &costs, &cf))?;
                lib(osi_policy(inst, &costs, &eval))?
            }
            FdMethod::ApproximateImprovement => {
                let mut cfg = OsiaConfig::for_instance(inst);
                if osia_horizon > 0.0 {
                    cfg.horizon = osia_horizon;
                }
                lib(osia_policy(inst, &costs, &cfg))?
            }
        };
        put(out, Box::into_raw(Box::new(FdPolicy(pol))), "out")
    })
}

/// Dispatch pair for state index `state` and node `j`, as labels (0 = outside).
///
/// # Safety
/// `pol` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fd_policy_action(
    pol: *const FdPolicy,
    state: usize,
    j: usize,
    lo: *mut usize,
    hi: *mut usize,
) -> FdStatus {
    guard(|| {
        let p = &get(pol, "pol")?.0;
        if state >= p.space().size() || j >= p.locations() {
            return Err((FdStatus::InvalidArgument, format!("index out of range: ({state}, {j})")));
        }
        let a = lib(p.action(state, j))?;
        put(lo, a.lo, "lo")?;
        put(hi, a.hi, "hi")
    })
}

/// Number of states of a policy.
///
/// # Safety
/// `pol` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fd_policy_state_count(pol: *const FdPolicy, out: *mut usize) -> FdStatus {
    guard(|| put(out, get(pol, "pol")?.0.space().size(), "out"))
}

/// # Safety
/// `pol` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fd_policy_free(pol: *mut FdPolicy) {
    if !pol.is_null() {
        drop(Box::from_raw(pol));
    }
}

/// Late-arrival rate `g` and fraction of late arrivals of a policy.
///
/// # Safety
/// Handles must be live; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fd_evaluate(
    inst: *const FdInstance,
    pol: *const FdPolicy,
    g: *mut f64,
    flar_out: *mut f64,
) -> FdStatus {
    guard(|| {
        let inst = &get(inst, "inst")?.0;
        let pol = &get(pol, "pol")?.0;
        let eval = lib(evaluate_policy(inst, &build_cost_table(inst), pol))?;
        let fl = lib(flar(&eval, inst))?;
        put(g, eval.g, "g")?;
        put(flar_out, fl, "flar")
    })
}

/// Discrete-event simulation of `incidents` arrivals.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fd_simulate(
    inst: *const FdInstance,
    pol: *const FdPolicy,
    incidents: u64,
    seed: u64,
    out: *mut FdSimResult,
) -> FdStatus {
    guard(|| {
        let inst = &get(inst, "inst")?.0;
        let pol = &get(pol, "pol")?.0;
        let r = lib(sim::simulate(inst, pol, incidents, seed))?;
        put(
            out,
            FdSimResult {
                incidents: r.incidents,
                late: r.late,
                flar_hat: r.flar_hat,
                ci_halfwidth: r.ci_halfwidth,
                seed: r.seed,
            },
            "out",
        )
    })
}

/// `P(Y > t)` for `Y` Erlang with `w` unit-mean phases.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fd_erlang_tail(w: u32, t: f64, out: *mut f64) -> FdStatus {
    guard(|| put(out, lib(erlang::erlang_tail(w, t))?, "out"))
}

/// `P(min{Y1, Y2} > t)` for independent Erlang variables.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fd_min_tail(w1: u32, w2: u32, t: f64, out: *mut f64) -> FdStatus {
    guard(|| put(out, lib(erlang::min_tail(w1, w2, t))?, "out"))
}

/// `P(Y0 + min{Y1, Y2} > t)` for independent Erlang variables.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fd_sum_min_tail(w0: u32, w1: u32, w2: u32, t: f64, out: *mut f64) -> FdStatus {
    guard(|| put(out, lib(erlang::sum_min_tail(w0, w1, w2, t))?, "out"))
}
