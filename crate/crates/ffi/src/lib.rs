//! C interface to the pedestrian predictor.
//!
//! Objects cross the boundary as opaque handles created by `*_new` /
//! `*_from_json` and released by the matching `*_free`. Every function
//! returns a [`PedpredStatus`]; on failure a description is available from
//! [`pedpred_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix4, Matrix4x2, SMatrix};
use pedpred::dynamics::PedestrianState;
use pedpred::lqr::{solve_dare, LqrError, LqrWeights, Weights};
use pedpred::map::MapDocument;
use pedpred::predictor::{
    confidence_ellipse, BranchStatus, PredictError, PredictionDocument, PredictionTree, Predictor,
    PredictorParams,
};
use pedpred::roadgraph::{build_graph, RoadGraph};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PedpredStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed map JSON or text encoding.
    Parse = 3,
    /// The map does not form a valid road graph.
    Graph = 4,
    NoConvergence = 5,
    NotStabilizable = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Parsed road graph.
pub struct PedpredGraph {
    graph: Arc<RoadGraph>,
}

/// Predictor with its per-edge gains solved.
pub struct PedpredPredictor {
    predictor: Predictor,
}

/// Result of one prediction.
pub struct PedpredTree {
    tree: PredictionTree,
}

/// Predictor settings. Matrices are row-major.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PedpredParams {
    pub t_s: f64,
    /// At least 1; `pedpred_predict` takes its own horizon.
    pub horizon: usize,
    pub max_branches: usize,
    pub q: [f64; 16],
    pub r: [f64; 4],
    pub s: [f64; 8],
    /// Per-step process noise.
    pub w: [f64; 16],
    pub allow_uturn: bool,
    pub lqr_tol: f64,
    pub lqr_max_iter: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PedpredBranchInfo {
    pub id: u32,
    /// Parent branch id, or -1 for a root.
    pub parent: i64,
    pub edge: u32,
    pub spawn_step: usize,
    /// Number of beliefs, spawn step included.
    pub steps: usize,
    /// Still open at the horizon.
    pub is_leaf: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PedpredEllipse {
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Angle of the major axis from +x, radians.
    pub orientation: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PedpredStatus, String);

impl From<PredictError> for Failure {
    fn from(e: PredictError) -> Self {
        let status = match &e {
            PredictError::Lqr(l) => return l.clone().into(),
            PredictError::Graph(_) => PedpredStatus::Graph,
            _ => PedpredStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<LqrError> for Failure {
    fn from(e: LqrError) -> Self {
        let status = match e {
            LqrError::NoConvergence { .. } => PedpredStatus::NoConvergence,
            LqrError::NotStabilizable(_) => PedpredStatus::NotStabilizable,
            _ => PedpredStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PedpredStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, turning errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PedpredStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PedpredStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {message}"));
            PedpredStatus::Panic
        }
    }
}

unsafe fn read<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn array<const N: usize>(p: *const f64, what: &str) -> Result<[f64; N], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let mut out = [0.0; N];
    out.copy_from_slice(std::slice::from_raw_parts(p, N));
    Ok(out)
}

unsafe fn write_array(p: *mut f64, values: &[f64], what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    std::slice::from_raw_parts_mut(p, values.len()).copy_from_slice(values);
    Ok(())
}

fn row_major<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

fn from_row_major<const R: usize, const C: usize>(v: &[f64]) -> SMatrix<f64, R, C> {
    SMatrix::from_fn(|i, j| v[i * C + j])
}

fn string_out(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|e| Failure(PedpredStatus::Parse, e.to_string()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Description of the last failure on this thread, or null after a
/// success. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn pedpred_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pedpred_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn pedpred_params_default() -> PedpredParams {
    let p = PredictorParams::default();
    let mut out = PedpredParams {
        t_s: p.t_s,
        horizon: p.horizon,
        max_branches: p.max_branches,
        q: [0.0; 16],
        r: [0.0; 4],
        s: [0.0; 8],
        w: [0.0; 16],
        allow_uturn: p.allow_uturn,
        lqr_tol: p.lqr_tol,
        lqr_max_iter: p.lqr_max_iter,
    };
    out.q.copy_from_slice(&row_major(&p.weights.q));
    out.r.copy_from_slice(&row_major(&p.weights.r));
    out.s.copy_from_slice(&row_major(&p.weights.s));
    out.w.copy_from_slice(&row_major(&p.w));
    out
}

impl From<&PedpredParams> for PredictorParams {
    fn from(p: &PedpredParams) -> Self {
        PredictorParams {
            w: from_row_major(&p.w),
            horizon: p.horizon,
            t_s: p.t_s,
            max_branches: p.max_branches,
            weights: LqrWeights {
                q: from_row_major(&p.q),
                r: from_row_major(&p.r),
                s: from_row_major(&p.s),
            },
            allow_uturn: p.allow_uturn,
            lqr_tol: p.lqr_tol,
            lqr_max_iter: p.lqr_max_iter,
        }
    }
}

/// Build a road graph from a map document in JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pedpred_graph_from_json(json: *const c_char, out: *mut *mut PedpredGraph) -> PedpredStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Failure(PedpredStatus::Parse, e.to_string()))?;
        let doc = MapDocument::from_json_str(text).map_err(|e| Failure(PedpredStatus::Parse, e.to_string()))?;
        let graph = build_graph(&doc).map_err(|e| Failure(PedpredStatus::Graph, e.to_string()))?;
        *out = Box::into_raw(Box::new(PedpredGraph { graph: Arc::new(graph) }));
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a live handle from [`pedpred_graph_from_json`].
#[no_mangle]
pub unsafe extern "C" fn pedpred_graph_free(graph: *mut PedpredGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle; `nodes` and `edges` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pedpred_graph_counts(
    graph: *const PedpredGraph,
    nodes: *mut usize,
    edges: *mut usize,
) -> PedpredStatus {
    guard(|| {
        let g = &read(graph, "graph")?.graph;
        if nodes.is_null() || edges.is_null() {
            return Err(null("output"));
        }
        *nodes = g.nodes().len();
        *edges = g.edges().len();
        Ok(())
    })
}

/// Solve the tracking gains for every edge of `graph`. The predictor keeps
/// its own reference to the graph, so the graph handle may be freed after.
///
/// # Safety
/// `graph` and `params` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pedpred_predictor_new(
    graph: *const PedpredGraph,
    params: *const PedpredParams,
    out: *mut *mut PedpredPredictor,
) -> PedpredStatus {
    guard(|| {
        let graph = read(graph, "graph")?;
        let params = read(params, "params")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let predictor = Predictor::new(graph.graph.clone(), params.into())?;
        *out = Box::into_raw(Box::new(PedpredPredictor { predictor }));
        Ok(())
    })
}

/// # Safety
/// `predictor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pedpred_predictor_free(predictor: *mut PedpredPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// Predict `horizon` steps from `state = [x, y, v, theta]`. `cov` is the
/// row-major 4x4 initial covariance and may be null for zero.
///
/// # Safety
/// `state` must point at 4 doubles, `cov` at 16 or be null; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pedpred_predict(
    predictor: *const PedpredPredictor,
    state: *const f64,
    cov: *const f64,
    horizon: usize,
    out: *mut *mut PedpredTree,
) -> PedpredStatus {
    guard(|| {
        let predictor = &read(predictor, "predictor")?.predictor;
        let [x, y, v, theta] = array::<4>(state, "state")?;
        let cov = if cov.is_null() {
            Matrix4::zeros()
        } else {
            from_row_major(&array::<16>(cov, "cov")?)
        };
        if out.is_null() {
            return Err(null("out"));
        }
        let tree = predictor.predict_horizon(&PedestrianState { x, y, v, theta }, &cov, horizon)?;
        *out = Box::into_raw(Box::new(PedpredTree { tree }));
        Ok(())
    })
}

/// # Safety
/// `tree` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pedpred_tree_free(tree: *mut PedpredTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Number of branches; 0 for a null handle.
///
/// # Safety
/// `tree` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pedpred_tree_branch_count(tree: *const PedpredTree) -> usize {
    tree.as_ref().map_or(0, |t| t.tree.branches.len())
}

/// Whether the branch budget cut off any spawns.
///
/// # Safety
/// `tree` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pedpred_tree_truncated(tree: *const PedpredTree) -> bool {
    tree.as_ref().is_some_and(|t| t.tree.truncated)
}

/// # Safety
/// `tree` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pedpred_tree_branch_info(
    tree: *const PedpredTree,
    index: usize,
    out: *mut PedpredBranchInfo,
) -> PedpredStatus {
    guard(|| {
        let tree = &read(tree, "tree")?.tree;
        let b = tree.branches.get(index).ok_or_else(|| {
            Failure(
                PedpredStatus::OutOfRange,
                format!("branch index {index} of {}", tree.branches.len()),
            )
        })?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = PedpredBranchInfo {
            id: b.id.0,
            parent: b.parent.map_or(-1, |p| p.0 as i64),
            edge: b.edge.0,
            spawn_step: b.spawn_step,
            steps: b.beliefs.len(),
            is_leaf: b.status == BranchStatus::Open,
        };
        Ok(())
    })
}

/// Belief number `step` of branch `index` (global step `spawn_step + step`).
/// `mean` receives 4 doubles; `cov`, if not null, 16 in row-major order.
///
/// # Safety
/// `tree` must be a live handle; output pointers sized as above.
#[no_mangle]
pub unsafe extern "C" fn pedpred_tree_belief(
    tree: *const PedpredTree,
    index: usize,
    step: usize,
    mean: *mut f64,
    cov: *mut f64,
) -> PedpredStatus {
    guard(|| {
        let tree = &read(tree, "tree")?.tree;
        let belief = tree
            .branches
            .get(index)
            .and_then(|b| b.beliefs.get(step))
            .ok_or_else(|| Failure(PedpredStatus::OutOfRange, format!("branch {index} step {step}")))?;
        let m = belief.mean;
        write_array(mean, &[m.x, m.y, m.v, m.theta], "mean")?;
        if !cov.is_null() {
            write_array(cov, &row_major(&belief.cov), "cov")?;
        }
        Ok(())
    })
}

/// Serialize the tree. Release the string with [`pedpred_string_free`].
///
/// # Safety
/// `tree` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pedpred_tree_to_json(tree: *const PedpredTree, out: *mut *mut c_char) -> PedpredStatus {
    guard(|| {
        let tree = &read(tree, "tree")?.tree;
        string_out(PredictionDocument::from_tree(tree).to_json(), out)
    })
}

/// Discrete Riccati solution for a 4-state, 2-input system. All matrices
/// row-major: `a` 4x4, `b` 4x2, `q` 4x4, `r` 2x2, `s` 4x2 (null for zero).
/// Writes `p` (4x4) and the gain `k` (2x4, `u = -K x`).
///
/// # Safety
/// Every non-null pointer must reference the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn pedpred_solve_dare(
    a: *const f64,
    b: *const f64,
    q: *const f64,
    r: *const f64,
    s: *const f64,
    tol: f64,
    max_iter: usize,
    p: *mut f64,
    k: *mut f64,
) -> PedpredStatus {
    guard(|| {
        let a: Matrix4<f64> = from_row_major(&array::<16>(a, "a")?);
        let b: Matrix4x2<f64> = from_row_major(&array::<8>(b, "b")?);
        let weights = Weights {
            q: from_row_major(&array::<16>(q, "q")?),
            r: from_row_major::<2, 2>(&array::<4>(r, "r")?),
            s: if s.is_null() {
                Matrix4x2::zeros()
            } else {
                from_row_major(&array::<8>(s, "s")?)
            },
        };
        let sol = solve_dare(&a, &b, &weights, tol, max_iter)?;
        write_array(p, &row_major(&sol.p), "p")?;
        write_array(k, &row_major(&sol.k), "k")
    })
}

/// Ellipse holding `percentile` of the mass of a 2-D Gaussian with
/// row-major covariance `cov` (4 doubles).
///
/// # Safety
/// `cov` must point at 4 doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pedpred_confidence_ellipse(
    cov: *const f64,
    percentile: f64,
    out: *mut PedpredEllipse,
) -> PedpredStatus {
    guard(|| {
        let cov: Matrix2<f64> = from_row_major(&array::<4>(cov, "cov")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let e = confidence_ellipse(&cov, percentile)?;
        *out = PedpredEllipse {
            semi_major: e.semi_major,
            semi_minor: e.semi_minor,
            orientation: e.orientation,
        };
        Ok(())
    })
}
