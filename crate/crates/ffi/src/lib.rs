//! C ABI over `rrg-uq`.
//!
//! Every fallible call returns an [`RrgStatus`] and writes its result through
//! out-pointers. On failure the message is kept per thread and can be fetched
//! with [`rrg_last_error_message`]. Handles are opaque and must be released
//! with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rrg_uq::eval::{self, EvalError};
use rrg_uq::factuality::{self, GreenCounts};
use rrg_uq::parser::{self, EntityLabel, Lexicon, NodeLabelPair, NodeLabelSet};
use rrg_uq::prior;
use rrg_uq::uq;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    DegenerateInput = 4,
    InsufficientData = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrgLabel {
    AnatDp = 0,
    ObsDp = 1,
    ObsU = 2,
    ObsDa = 3,
}

impl From<RrgLabel> for EntityLabel {
    fn from(l: RrgLabel) -> Self {
        match l {
            RrgLabel::AnatDp => EntityLabel::AnatDp,
            RrgLabel::ObsDp => EntityLabel::ObsDp,
            RrgLabel::ObsU => EntityLabel::ObsU,
            RrgLabel::ObsDa => EntityLabel::ObsDa,
        }
    }
}

/// Opaque lexicon handle.
pub struct RrgLexicon(Lexicon);

/// Opaque set of entity-label pairs.
pub struct RrgLabelSet(NodeLabelSet);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RrgEntityF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

struct Failure(RrgStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(RrgStatus::InvalidArgument, msg.into())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let status = match e {
            EvalError::DegenerateInput(_) => RrgStatus::DegenerateInput,
            EvalError::InsufficientData { .. } => RrgStatus::InsufficientData,
            _ => RrgStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<uq::UqError> for Failure {
    fn from(e: uq::UqError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<prior::PriorError> for Failure {
    fn from(e: prior::PriorError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<parser::AnnotationError> for Failure {
    fn from(e: parser::AnnotationError) -> Self {
        Failure::invalid(e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RrgStatus {
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(Failure(RrgStatus::Panic, msg))
    });
    match result {
        Ok(()) => {
            LAST_ERROR.with(|l| *l.borrow_mut() = None);
            RrgStatus::Ok
        }
        Err(Failure(status, msg)) => {
            LAST_ERROR.with(|l| *l.borrow_mut() = Some(msg));
            status
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(RrgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RrgStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Copy of the last error raised on this thread, or null. Free with
/// [`rrg_string_free`].
#[no_mangle]
pub extern "C" fn rrg_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|l| match l.borrow().as_deref() {
        Some(m) => CString::new(m.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    })
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rrg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The bundled radiology lexicon. Never null.
#[no_mangle]
pub extern "C" fn rrg_lexicon_default() -> *mut RrgLexicon {
    Box::into_raw(Box::new(RrgLexicon(Lexicon::default_radiology())))
}

/// # Safety
/// `json` must be a NUL-terminated string; `out_lexicon` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rrg_lexicon_from_json(json: *const c_char, out_lexicon: *mut *mut RrgLexicon) -> RrgStatus {
    guard(|| {
        let slot = out(out_lexicon, "out_lexicon")?;
        let lex = Lexicon::from_json(text(json, "json")?)?;
        *slot = Box::into_raw(Box::new(RrgLexicon(lex)));
        Ok(())
    })
}

/// # Safety
/// `lexicon` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rrg_lexicon_free(lexicon: *mut RrgLexicon) {
    if !lexicon.is_null() {
        drop(Box::from_raw(lexicon));
    }
}

/// An empty label set. Never null.
#[no_mangle]
pub extern "C" fn rrg_label_set_new() -> *mut RrgLabelSet {
    Box::into_raw(Box::new(RrgLabelSet(NodeLabelSet::new())))
}

/// # Safety
/// `set` must be a live handle; `entity` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rrg_label_set_insert(set: *mut RrgLabelSet, entity: *const c_char, label: RrgLabel) -> RrgStatus {
    guard(|| {
        let set = out(set, "set")?;
        let entity = text(entity, "entity")?;
        if entity.trim().is_empty() {
            return Err(Failure::invalid("entity is blank"));
        }
        set.0.insert(NodeLabelPair::new(entity, label.into()));
        Ok(())
    })
}

/// Number of distinct pairs; 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rrg_label_set_len(set: *const RrgLabelSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.len())
}

/// The set as a JSON array of `{"entity", "label"}` objects. Free the string
/// with [`rrg_string_free`].
///
/// # Safety
/// `set` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rrg_label_set_to_json(set: *const RrgLabelSet, out_json: *mut *mut c_char) -> RrgStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        let set = handle(set, "set")?;
        let pairs: Vec<&NodeLabelPair> = set.0.iter().collect();
        let json = serde_json::to_string(&pairs).map_err(|e| Failure::invalid(e.to_string()))?;
        *slot = CString::new(json).map_err(|e| Failure::invalid(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `set` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rrg_label_set_free(set: *mut RrgLabelSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Extracts entity-label pairs from `input` into a new set.
///
/// # Safety
/// `lexicon` must be a live handle, `input` NUL-terminated, `out_set` writable.
#[no_mangle]
pub unsafe extern "C" fn rrg_extract(
    lexicon: *const RrgLexicon,
    input: *const c_char,
    out_set: *mut *mut RrgLabelSet,
) -> RrgStatus {
    guard(|| {
        let slot = out(out_set, "out_set")?;
        let lexicon = handle(lexicon, "lexicon")?;
        let set = parser::extract_entities(text(input, "text")?, &lexicon.0);
        *slot = Box::into_raw(Box::new(RrgLabelSet(set)));
        Ok(())
    })
}

/// One minus the mean of `n` pairwise scores.
///
/// # Safety
/// `scores` must point to `n` doubles; `out_u` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rrg_report_vro(scores: *const f64, n: usize, out_u: *mut f64) -> RrgStatus {
    guard(|| {
        let slot = out(out_u, "out_u")?;
        *slot = uq::report_vro(slice(scores, n, "scores")?)?;
        Ok(())
    })
}

/// Sentence uncertainty against `n` sample sets.
///
/// # Safety
/// `samples` must point to `n` live handles; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rrg_sentence_vro(
    sentence: *const RrgLabelSet,
    samples: *const *const RrgLabelSet,
    n: usize,
    out_u: *mut f64,
    out_empty_parse: *mut bool,
) -> RrgStatus {
    guard(|| {
        let u_slot = out(out_u, "out_u")?;
        let empty_slot = out(out_empty_parse, "out_empty_parse")?;
        let sentence = handle(sentence, "sentence")?;
        let sets = slice(samples, n, "samples")?
            .iter()
            .map(|p| handle(*p, "sample").map(|s| s.0.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let v = uq::sentence_vro(&sentence.0, &sets)?;
        *u_slot = v.u;
        *empty_slot = v.empty_parse;
        Ok(())
    })
}

/// Fraction of the sentence's pairs found in the reference; -1 when the
/// sentence is empty.
///
/// # Safety
/// Both handles must be live; `out_p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rrg_sentence_precision(
    sentence: *const RrgLabelSet,
    reference: *const RrgLabelSet,
    out_p: *mut f64,
) -> RrgStatus {
    guard(|| {
        let slot = out(out_p, "out_p")?;
        *slot = uq::sentence_precision(&handle(sentence, "sentence")?.0, &handle(reference, "reference")?.0);
        Ok(())
    })
}

/// # Safety
/// Both handles must be live; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rrg_entity_f1(
    pred: *const RrgLabelSet,
    reference: *const RrgLabelSet,
    out_score: *mut RrgEntityF1,
) -> RrgStatus {
    guard(|| {
        let slot = out(out_score, "out_score")?;
        let s = factuality::entity_f1(&handle(pred, "pred")?.0, &handle(reference, "reference")?.0);
        *slot = RrgEntityF1 {
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
        };
        Ok(())
    })
}

/// GREEN score from the matched count and six error counts.
///
/// # Safety
/// `errors` must point to 6 integers; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rrg_green_from_counts(
    matched: u64,
    errors: *const u64,
    out_score: *mut f64,
    out_degenerate: *mut bool,
) -> RrgStatus {
    guard(|| {
        let score_slot = out(out_score, "out_score")?;
        let degenerate_slot = out(out_degenerate, "out_degenerate")?;
        let e = slice(errors, 6, "errors")?;
        let counts = GreenCounts {
            matched,
            errors: [e[0], e[1], e[2], e[3], e[4], e[5]],
        };
        let g = factuality::green_from_counts(&counts);
        *score_slot = g.score;
        *degenerate_slot = g.degenerate;
        Ok(())
    })
}

/// ROUGE-L F-measure between two texts.
///
/// # Safety
/// `a` and `b` must be NUL-terminated; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rrg_lexical_similarity(a: *const c_char, b: *const c_char, out_score: *mut f64) -> RrgStatus {
    guard(|| {
        let slot = out(out_score, "out_score")?;
        *slot = factuality::lexical_similarity(text(a, "a")?, text(b, "b")?);
        Ok(())
    })
}

/// # Safety
/// `u` and `f` must each point to `n` doubles; `out_r` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rrg_pearson(u: *const f64, f: *const f64, n: usize, out_r: *mut f64) -> RrgStatus {
    guard(|| {
        let slot = out(out_r, "out_r")?;
        *slot = eval::pearson(slice(u, n, "u")?, slice(f, n, "f")?)?;
        Ok(())
    })
}

/// # Safety
/// `u` and `f` must each point to `n` doubles; `out_rce` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rrg_empirical_rce(
    u: *const f64,
    f: *const f64,
    n: usize,
    bins: usize,
    out_rce: *mut f64,
) -> RrgStatus {
    guard(|| {
        let slot = out(out_rce, "out_rce")?;
        *slot = eval::empirical_rce(slice(u, n, "u")?, slice(f, n, "f")?, bins)?;
        Ok(())
    })
}

/// Counts prior-exam substring matches in `input`.
///
/// # Safety
/// `substrings` must point to `n` NUL-terminated strings; out-pointers must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn rrg_detect_priors(
    input: *const c_char,
    substrings: *const *const c_char,
    n: usize,
    out_flagged: *mut bool,
    out_match_count: *mut usize,
) -> RrgStatus {
    guard(|| {
        let flag_slot = out(out_flagged, "out_flagged")?;
        let count_slot = out(out_match_count, "out_match_count")?;
        let list = slice(substrings, n, "substrings")?
            .iter()
            .map(|p| text(*p, "substring"))
            .collect::<Result<Vec<_>, _>>()?;
        let d = prior::detect_priors("", text(input, "text")?, &list)?;
        *flag_slot = d.flagged;
        *count_slot = d.match_count;
        Ok(())
    })
}
