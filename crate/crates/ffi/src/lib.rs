//! C ABI over the gatqec toolkit.
//!
//! Objects are opaque handles created by `*_new`/`*_parse`/`*_load` and
//! released by the matching `*_free`. Every fallible call returns a
//! [`GqStatus`]; on failure a message is kept per thread and can be read
//! with [`gq_last_error_message`]. Bit arrays cross the boundary unpacked,
//! one byte (0 or 1) per bit, shots row-major.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use gatqec::formats::{self, DetectorModel};
use gatqec::graph::{self, SpatialLayout};
use gatqec::matching::{self, DecodingGraph};
use gatqec::model::{self, ModelParams, Topology};
use gatqec::{sampler, Error};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Validation = 4,
    Dimension = 5,
    Capacity = 6,
    Unsupported = 7,
    Io = 8,
    Checkpoint = 9,
    Internal = 10,
}

/// A parsed detector error model with its time-flattened layout.
pub struct GqDem {
    model: DetectorModel,
    layout: Option<SpatialLayout>,
}

/// A matching decoder built from a detector error model.
pub struct GqDecoder {
    graph: DecodingGraph,
}

/// A trained network bound to the layout it predicts on.
pub struct GqModel {
    params: ModelParams,
    layout: SpatialLayout,
    teacher: Arc<[f64]>,
    topology: Topology,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GqStatus {
    match e {
        Error::Parse { .. } | Error::Format(_) | Error::Json(_) | Error::Csv(_) => GqStatus::Parse,
        Error::Unsupported { .. } | Error::UnsupportedModel(_) => GqStatus::Unsupported,
        Error::Validation(_) | Error::Layout(_) | Error::Config(_) | Error::NoMatching(_) => GqStatus::Validation,
        Error::Dimension(_) => GqStatus::Dimension,
        Error::Capacity { .. } => GqStatus::Capacity,
        Error::Io { .. } => GqStatus::Io,
        Error::Checkpoint(_) => GqStatus::Checkpoint,
        Error::Contract(_) => GqStatus::Internal,
    }
}

/// Failure inside an entry point, before conversion to a status.
enum Fail {
    Status(GqStatus, String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(GqStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: String) -> Fail {
    Fail::Status(GqStatus::InvalidArgument, message)
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GqStatus::Ok,
        Ok(Err(Fail::Status(s, m))) => {
            set_error(m);
            s
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            GqStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn check_bits(bits: &[u8], what: &str) -> Result<(), Fail> {
    match bits.iter().position(|&b| b > 1) {
        Some(i) => Err(invalid(format!("{what}[{i}] = {} is not 0 or 1", bits[i]))),
        None => Ok(()),
    }
}

/// Message of the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Forgets the stored error message of this thread.
#[no_mangle]
pub extern "C" fn gq_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses detector error model text. Layout extraction may fail without
/// failing the parse; layout queries then report the reason.
#[no_mangle]
pub unsafe extern "C" fn gq_dem_parse(text: *const c_char, out: *mut *mut GqDem) -> GqStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let model = formats::parse_dem(str_arg(text, "text")?)?;
        let layout = graph::extract_layout(&model).ok();
        *out = Box::into_raw(Box::new(GqDem { model, layout }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gq_dem_free(dem: *mut GqDem) {
    if !dem.is_null() {
        drop(Box::from_raw(dem));
    }
}

/// Detector, observable and mechanism counts; any output may be null.
#[no_mangle]
pub unsafe extern "C" fn gq_dem_counts(
    dem: *const GqDem,
    n_detectors: *mut usize,
    n_observables: *mut usize,
    n_mechanisms: *mut usize,
) -> GqStatus {
    guard(|| {
        let m = &handle(dem, "dem")?.model;
        for (p, v) in [
            (n_detectors, m.n_detectors),
            (n_observables, m.n_observables),
            (n_mechanisms, m.mechanisms.len()),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

fn layout_of(dem: &GqDem) -> Result<&SpatialLayout, Fail> {
    match &dem.layout {
        Some(l) => Ok(l),
        None => Err(Fail::Lib(
            graph::extract_layout(&dem.model)
                .err()
                .unwrap_or_else(|| Error::Layout("layout unavailable".into())),
        )),
    }
}

/// Spatial node count, round count and complete-graph edge count.
#[no_mangle]
pub unsafe extern "C" fn gq_dem_layout(
    dem: *const GqDem,
    n_nodes: *mut usize,
    n_rounds: *mut usize,
    n_edges: *mut usize,
) -> GqStatus {
    guard(|| {
        let l = layout_of(handle(dem, "dem")?)?;
        *out_arg(n_nodes, "n_nodes")? = l.n_nodes();
        *out_arg(n_rounds, "n_rounds")? = l.rounds();
        *out_arg(n_edges, "n_edges")? = l.edges.len();
        Ok(())
    })
}

/// Writes the endpoints (`2 * n_edges` values, `i < j`) and teacher
/// probabilities (`n_edges` values) of the layout edges. `len` is `n_edges`.
#[no_mangle]
pub unsafe extern "C" fn gq_dem_teacher_probs(
    dem: *const GqDem,
    endpoints: *mut usize,
    probs: *mut f64,
    len: usize,
) -> GqStatus {
    guard(|| {
        let dem = handle(dem, "dem")?;
        let l = layout_of(dem)?;
        if len != l.edges.len() {
            return Err(invalid(format!("len {len} but the layout has {} edges", l.edges.len())));
        }
        let teacher = graph::teacher_edge_probs(&dem.model, l);
        let ends = slice_out(endpoints, 2 * len, "endpoints")?;
        let probs = slice_out(probs, len, "probs")?;
        for (k, &(i, j)) in l.edges.iter().enumerate() {
            ends[2 * k] = i;
            ends[2 * k + 1] = j;
        }
        probs.copy_from_slice(&teacher.probs);
        Ok(())
    })
}

/// Samples `n_shots` shots into `detections` (`n_shots * n_detectors`
/// bytes) and `observables` (`n_shots * n_observables` bytes).
#[no_mangle]
pub unsafe extern "C" fn gq_sample(
    dem: *const GqDem,
    n_shots: usize,
    seed: u64,
    detections: *mut u8,
    detections_len: usize,
    observables: *mut u8,
    observables_len: usize,
) -> GqStatus {
    guard(|| {
        let m = &handle(dem, "dem")?.model;
        let (nd, no) = (n_shots * m.n_detectors, n_shots * m.n_observables);
        if detections_len != nd || observables_len != no {
            return Err(invalid(format!(
                "buffers of {detections_len} and {observables_len} bytes, need {nd} and {no}"
            )));
        }
        let d_out = slice_out(detections, nd, "detections")?;
        let o_out = slice_out(observables, no, "observables")?;
        let (d, o) = sampler::sample(m, n_shots, seed)?;
        d_out.copy_from_slice(d.bits());
        o_out.copy_from_slice(o.bits());
        Ok(())
    })
}

/// Unpacks b8 data (`len` bytes, `n_bits` per shot) into `out`, which holds
/// `capacity` bytes. The shot count is written to `n_shots`.
#[no_mangle]
pub unsafe extern "C" fn gq_b8_unpack(
    data: *const u8,
    len: usize,
    n_bits: usize,
    out: *mut u8,
    capacity: usize,
    n_shots: *mut usize,
) -> GqStatus {
    guard(|| {
        let n_shots = out_arg(n_shots, "n_shots")?;
        let table = formats::parse_b8(slice_arg(data, len, "data")?, n_bits)?;
        let bits = table.bits();
        if bits.len() > capacity {
            return Err(invalid(format!("{} bits do not fit in {capacity} bytes", bits.len())));
        }
        slice_out(out, bits.len(), "out")?.copy_from_slice(bits);
        *n_shots = table.n_shots();
        Ok(())
    })
}

/// Builds the matching decoder of a model.
#[no_mangle]
pub unsafe extern "C" fn gq_mwpm_new(dem: *const GqDem, out: *mut *mut GqDecoder) -> GqStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let graph = matching::build_decoding_graph(&handle(dem, "dem")?.model)?;
        *out = Box::into_raw(Box::new(GqDecoder { graph }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gq_mwpm_free(decoder: *mut GqDecoder) {
    if !decoder.is_null() {
        drop(Box::from_raw(decoder));
    }
}

/// Decodes one syndrome (`len` = detector count) into an observable bitmask.
#[no_mangle]
pub unsafe extern "C" fn gq_mwpm_decode(
    decoder: *const GqDecoder,
    syndrome: *const u8,
    len: usize,
    observables: *mut u64,
) -> GqStatus {
    guard(|| {
        let d = handle(decoder, "decoder")?;
        let out = out_arg(observables, "observables")?;
        let syn = slice_arg(syndrome, len, "syndrome")?;
        check_bits(syn, "syndrome")?;
        *out = matching::decode(&d.graph, syn)?;
        Ok(())
    })
}

/// Loads a checkpoint and binds it to the layout of `dem`.
#[no_mangle]
pub unsafe extern "C" fn gq_model_load(path: *const c_char, dem: *const GqDem, out: *mut *mut GqModel) -> GqStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dem = handle(dem, "dem")?;
        let params = model::load_checkpoint(str_arg(path, "path")?)?;
        let layout = layout_of(dem)?.clone();
        let teacher: Arc<[f64]> = graph::teacher_edge_probs(&dem.model, &layout).probs.into();
        let probe = graph::build_flat_graph(&vec![0; layout.n_detectors()], &layout, &teacher, 0)?;
        let topology = Topology::for_graph(&params, &probe)?;
        *out = Box::into_raw(Box::new(GqModel {
            params,
            layout,
            teacher,
            topology,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gq_model_free(model: *mut GqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Graph logit of one syndrome (`len` = detector count); positive predicts
/// a flip. `edge_logits` may be null, otherwise it receives `n_edges` values.
#[no_mangle]
pub unsafe extern "C" fn gq_model_predict(
    model: *const GqModel,
    syndrome: *const u8,
    len: usize,
    logit: *mut f64,
    edge_logits: *mut f64,
    n_edges: usize,
) -> GqStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let logit = out_arg(logit, "logit")?;
        let syn = slice_arg(syndrome, len, "syndrome")?;
        check_bits(syn, "syndrome")?;
        let g = graph::build_flat_graph(syn, &m.layout, &m.teacher, 0)?;
        let (l, edges) = model::predict(&m.params, &m.topology, &g)?;
        if !edge_logits.is_null() {
            if n_edges != edges.len() {
                return Err(invalid(format!("n_edges {n_edges} but the model has {}", edges.len())));
            }
            slice_out(edge_logits, n_edges, "edge_logits")?.copy_from_slice(&edges);
        }
        *logit = l;
        Ok(())
    })
}
