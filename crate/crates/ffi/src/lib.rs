//! C ABI over the patentforge pipeline.
//!
//! Every fallible function returns a [`PfStatus`]. On failure a message is kept per
//! thread and can be read with [`pf_last_error`]. Strings handed out through `out`
//! parameters are owned by the caller and must be released with [`pf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use patentforge::claims::{all_features, parse_claims, Claim, FeatureId};
use patentforge::drawings::{ingest_drawing_text, ComponentPair, ComponentRef, DrawingFigure, DrawingPage};
use patentforge::enrichment::{build_tuple, clean_specification, render_specification, GeneratedSpecification};
use patentforge::generation::{generate_project, BackendRegistry, GenerationOptions, MOCK_BACKEND_ID};
use patentforge::mapper::{confirm_mapping, suggest_mappings, MappingSet, SuggestConfig};
use patentforge::similarity::score_texts;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidArgument = 4,
    NotFound = 5,
    GenerationFailed = 6,
    Panic = 99,
}

/// Similarity of one feature/component pair.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PfScore {
    pub cosine: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub combined: f64,
}

/// Claims, figures and confirmed mappings of one drafting session.
pub struct PfPipeline {
    config: SuggestConfig,
    claims: Vec<Claim>,
    figures: Vec<DrawingFigure>,
    mappings: MappingSet,
}

impl PfPipeline {
    fn components(&self) -> Vec<ComponentPair> {
        self.figures.iter().flat_map(|f| f.components.iter().cloned()).collect()
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PfStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail(status: PfStatus, message: impl ToString) -> Failure {
    Failure(status, message.to_string())
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording errors and turning panics into [`PfStatus::Panic`].
fn guard(f: impl FnOnce() -> FfiResult<()>) -> PfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PfStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal error: {msg}"));
            PfStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(fail(PfStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(PfStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn pipeline<'a>(p: *mut PfPipeline) -> FfiResult<&'a mut PfPipeline> {
    p.as_mut().ok_or_else(|| fail(PfStatus::NullArgument, "pipeline is null"))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> FfiResult<()> {
    if out.is_null() {
        return Err(fail(PfStatus::NullArgument, "output pointer is null"));
    }
    let c = CString::new(s).map_err(|e| fail(PfStatus::InvalidArgument, e))?;
    *out = c.into_raw();
    Ok(())
}

/// Library version as a static NUL-terminated string. Do not free.
#[no_mangle]
pub extern "C" fn pf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the next
/// call into the library from the same thread. Do not free.
#[no_mangle]
pub extern "C" fn pf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned through an `out` parameter of this library,
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Scores a feature against a component name.
///
/// # Safety
/// `feature` and `component` must be valid NUL-terminated strings; `out` must point
/// to writable memory for one [`PfScore`].
#[no_mangle]
pub unsafe extern "C" fn pf_score_pair(feature: *const c_char, component: *const c_char, out: *mut PfScore) -> PfStatus {
    guard(|| {
        let (f, c) = (input(feature, "feature")?, input(component, "component")?);
        let out = out.as_mut().ok_or_else(|| fail(PfStatus::NullArgument, "output pointer is null"))?;
        let s = score_texts(f, c);
        *out = PfScore {
            cosine: s.cosine,
            bleu1: s.bleu1,
            bleu2: s.bleu2,
            combined: s.combined,
        };
        Ok(())
    })
}

/// Parses claim text into a JSON array of claims.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_parse_claims_json(text: *const c_char, out: *mut *mut c_char) -> PfStatus {
    guard(|| {
        let claims = parse_claims(input(text, "text")?).map_err(|e| fail(PfStatus::ParseError, e))?;
        write_string(out, serde_json::to_string(&claims).expect("serializable"))
    })
}

/// Strips markup from generated text, returning plain specification text.
///
/// # Safety
/// `raw` must be a valid NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_clean_specification(raw: *const c_char, out: *mut *mut c_char) -> PfStatus {
    guard(|| write_string(out, clean_specification(input(raw, "raw")?).cleaned))
}

/// Creates an empty pipeline. `threshold` must lie in [0, 1] and `k` be at least 1.
///
/// # Safety
/// `out` must be a writable pointer. Release the handle with [`pf_pipeline_free`].
#[no_mangle]
pub unsafe extern "C" fn pf_pipeline_new(threshold: f64, k: usize, out: *mut *mut PfPipeline) -> PfStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(PfStatus::NullArgument, "output pointer is null"));
        }
        let config = SuggestConfig { threshold, k };
        config.validate().map_err(|e| fail(PfStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(PfPipeline {
            config,
            claims: Vec::new(),
            figures: Vec::new(),
            mappings: MappingSet::default(),
        }));
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a handle from [`pf_pipeline_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pf_pipeline_free(p: *mut PfPipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Replaces the claims. Confirmed mappings are cleared.
///
/// # Safety
/// `p` must be a live handle and `text` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pf_pipeline_load_claims(p: *mut PfPipeline, text: *const c_char) -> PfStatus {
    guard(|| {
        let p = pipeline(p)?;
        p.claims = parse_claims(input(text, "text")?).map_err(|e| fail(PfStatus::ParseError, e))?;
        p.mappings = MappingSet::default();
        Ok(())
    })
}

/// Replaces the figures from a JSON array of `{"source_label", "raw_text"}` pages.
/// Confirmed mappings are cleared.
///
/// # Safety
/// `p` must be a live handle and `pages_json` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pf_pipeline_load_drawings_json(p: *mut PfPipeline, pages_json: *const c_char) -> PfStatus {
    guard(|| {
        let p = pipeline(p)?;
        let pages: Vec<DrawingPage> =
            serde_json::from_str(input(pages_json, "pages_json")?).map_err(|e| fail(PfStatus::ParseError, e))?;
        p.figures = ingest_drawing_text(&pages).map_err(|e| fail(PfStatus::ParseError, e))?.figures;
        p.mappings = MappingSet::default();
        Ok(())
    })
}

/// Ranked mapping suggestions as JSON (`{"entries": [...]}`). Nothing is stored.
///
/// # Safety
/// `p` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_pipeline_suggest(p: *mut PfPipeline, out: *mut *mut c_char) -> PfStatus {
    guard(|| {
        let p = pipeline(p)?;
        let set = suggest_mappings(&all_features(&p.claims), &p.components(), p.config)
            .map_err(|e| fail(PfStatus::InvalidArgument, e))?;
        write_string(out, serde_json::to_string(&set).expect("serializable"))
    })
}

/// Confirms `feature_id` (e.g. "1-0") -> `component_ref` (e.g. "1:104").
///
/// # Safety
/// `p` must be a live handle; both ids must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn pf_pipeline_confirm(
    p: *mut PfPipeline,
    feature_id: *const c_char,
    component_ref: *const c_char,
) -> PfStatus {
    guard(|| {
        let p = pipeline(p)?;
        let fid: FeatureId = input(feature_id, "feature_id")?
            .parse()
            .map_err(|e: String| fail(PfStatus::InvalidArgument, e))?;
        let cref: ComponentRef = input(component_ref, "component_ref")?
            .parse()
            .map_err(|e: String| fail(PfStatus::InvalidArgument, e))?;
        p.mappings = confirm_mapping(p.mappings.clone(), &all_features(&p.claims), &p.components(), fid, &cref)
            .map_err(|e| fail(PfStatus::NotFound, e))?;
        Ok(())
    })
}

/// Generates with the built-in mock backend and returns the cleaned specification.
/// Features without a confirmed mapping are skipped unless `allow_unmapped`.
///
/// # Safety
/// `p` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_pipeline_generate_mock(
    p: *mut PfPipeline,
    allow_unmapped: bool,
    numbered: bool,
    out: *mut *mut c_char,
) -> PfStatus {
    guard(|| {
        let p = pipeline(p)?;
        let components = p.components();
        let links = p.mappings.by_feature();
        let mut tuples = Vec::new();
        for feature in all_features(&p.claims) {
            let mapped: Vec<ComponentPair> = links
                .get(&feature.id())
                .into_iter()
                .flatten()
                .filter_map(|r| components.iter().find(|c| c.reference() == *r).cloned())
                .collect();
            if mapped.is_empty() && !allow_unmapped {
                continue;
            }
            tuples.push(build_tuple(&feature, &mapped, &p.figures, false).map_err(|e| fail(PfStatus::InvalidArgument, e))?);
        }
        if tuples.is_empty() {
            return Err(fail(PfStatus::InvalidArgument, "no mapped features to generate from"));
        }
        let generated = generate_project(&tuples, MOCK_BACKEND_ID, &BackendRegistry::with_mock(), GenerationOptions::default())
            .map_err(|e| fail(PfStatus::GenerationFailed, e))?;
        let specs: Vec<GeneratedSpecification> = generated
            .results
            .iter()
            .filter(|r| r.is_ok())
            .map(|r| GeneratedSpecification::from_raw(r.feature_id, &r.raw_output))
            .collect();
        if specs.is_empty() {
            return Err(fail(PfStatus::GenerationFailed, "every feature failed to generate"));
        }
        write_string(out, render_specification(&specs, numbered))
    })
}
