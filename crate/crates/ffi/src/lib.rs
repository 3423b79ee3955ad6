// SPDX-License-Identifier: MIT OR Apache-2.0

//! C ABI over `xattrib`.
//!
//! Every fallible function returns an [`XattribStatus`] code; on failure a
//! message is available from [`xattrib_last_error`] on the same thread.
//! Handles are opaque and owned by the caller until passed to the matching
//! `*_free` function. Output buffers follow one pattern: the caller passes a
//! buffer and its capacity, the required length is always written to
//! `out_len`, and `XATTRIB_STATUS_BUFFER_TOO_SMALL` is returned when the
//! capacity is short (pass a null buffer with capacity 0 to query).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use xattrib::harness::{run_method, Method, MethodSettings};
use xattrib::metrics::{bleu, probability_ratio, rouge_l, sequence_kl};
use xattrib::model::{generate, ModelRegistry, ModelSpec};
use xattrib::search::AttributionResult;
use xattrib::{AttribError, MaskState, ScoredGenerator, TokenSequence};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XattribStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad k, lengths, token ids, method, or option values.
    InvalidArgument = 3,
    UnknownModel = 4,
    /// The model lacks a capability the method needs (e.g. gradients).
    Unsupported = 5,
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
    Other = 8,
}

/// Attribution methods accepted in [`XattribExplainOptions::method`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XattribMethod {
    Xprompt = 0,
    Random = 1,
    Loo = 2,
    Ig = 3,
    /// Exhaustive search; small prompts only.
    Oracle = 4,
}

/// Options for [`xattrib_explain`]. Start from
/// [`xattrib_explain_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct XattribExplainOptions {
    /// One of the [`XattribMethod`] values.
    pub method: i32,
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
    pub temperature: f64,
    pub ig_steps: usize,
}

/// Opaque model handle.
pub struct XattribModel {
    inner: Box<dyn ScoredGenerator>,
}

/// Opaque explanation handle.
pub struct XattribResult {
    inner: AttributionResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(XattribStatus, String);

impl From<AttribError> for Failure {
    fn from(e: AttribError) -> Self {
        let status = match &e {
            AttribError::UnknownModel(_) => XattribStatus::UnknownModel,
            AttribError::UnsupportedCapability(_) => XattribStatus::Unsupported,
            AttribError::LengthMismatch { .. }
            | AttribError::EmptyTarget
            | AttribError::EmptySequence
            | AttribError::TokenOutOfRange { .. }
            | AttribError::PromptTooLong { .. }
            | AttribError::InvalidCardinality { .. }
            | AttribError::OracleBudget { .. }
            | AttribError::InvalidArgument(_)
            | AttribError::UnknownMethod(_)
            | AttribError::Config { .. } => XattribStatus::InvalidArgument,
            _ => XattribStatus::Other,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> XattribStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => XattribStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {message}"));
            XattribStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(XattribStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn model_ref<'a>(model: *const XattribModel) -> Result<&'a XattribModel, Failure> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn result_ref<'a>(result: *const XattribResult) -> Result<&'a XattribResult, Failure> {
    result.as_ref().ok_or_else(|| null("result"))
}

unsafe fn sequence(model: &XattribModel, ptr: *const u32, len: usize, what: &str) -> Result<TokenSequence, Failure> {
    let ids = slice(ptr, len, what)?.to_vec();
    Ok(TokenSequence::new(ids, model.inner.vocabulary_size())?)
}

unsafe fn mask_from(ptr: *const u8, len: usize) -> Result<Option<MaskState>, Failure> {
    if ptr.is_null() {
        return Ok(None);
    }
    let bits = std::slice::from_raw_parts(ptr, len).iter().map(|&b| b != 0).collect();
    Ok(Some(MaskState::from_bits(bits)))
}

unsafe fn fill<T: Copy>(values: &[T], out: *mut T, capacity: usize, out_len: *mut usize) -> Result<(), Failure> {
    if out_len.is_null() {
        return Err(null("out_len"));
    }
    *out_len = values.len();
    if values.len() > capacity {
        return Err(Failure(
            XattribStatus::BufferTooSmall,
            format!("need {} elements, capacity {capacity}", values.len()),
        ));
    }
    if !values.is_empty() {
        if out.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = value;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn xattrib_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn xattrib_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a registered model (`"toy-controlled"`, `"toy-redundancy"`,
/// `"toy-keyword"`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xattrib_model_new(
    name: *const c_char,
    seed: u64,
    out: *mut *mut XattribModel,
) -> XattribStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        let name = CStr::from_ptr(name).to_str().map_err(|e| Failure(XattribStatus::InvalidUtf8, e.to_string()))?;
        let inner = ModelRegistry::with_builtins().build(&ModelSpec::new(name, seed))?;
        write(out, Box::into_raw(Box::new(XattribModel { inner })), "out")
    })
}

/// # Safety
/// `model` must come from [`xattrib_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn xattrib_model_free(model: *mut XattribModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn xattrib_model_vocabulary_size(model: *const XattribModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.vocabulary_size())
}

/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn xattrib_model_max_prompt_length(model: *const XattribModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.max_prompt_length())
}

/// Tokenizes `text` with the model's tokenizer.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must hold `capacity` ids.
#[no_mangle]
pub unsafe extern "C" fn xattrib_tokenize(
    model: *const XattribModel,
    text: *const c_char,
    out: *mut u32,
    capacity: usize,
    out_len: *mut usize,
) -> XattribStatus {
    guard(|| {
        let model = model_ref(model)?;
        if text.is_null() {
            return Err(null("text"));
        }
        let text = CStr::from_ptr(text).to_str().map_err(|e| Failure(XattribStatus::InvalidUtf8, e.to_string()))?;
        fill(&model.inner.tokenize(text)?, out, capacity, out_len)
    })
}

/// Greedy generation. `mask` may be null (keep everything); otherwise it has
/// `prompt_len` bytes, nonzero meaning kept.
///
/// # Safety
/// Pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn xattrib_generate(
    model: *const XattribModel,
    prompt: *const u32,
    prompt_len: usize,
    mask: *const u8,
    max_new_tokens: usize,
    out: *mut u32,
    capacity: usize,
    out_len: *mut usize,
) -> XattribStatus {
    guard(|| {
        let model = model_ref(model)?;
        let prompt = sequence(model, prompt, prompt_len, "prompt")?;
        let mask = mask_from(mask, prompt_len)?;
        let output = generate(model.inner.as_ref(), &prompt, mask.as_ref(), max_new_tokens)?;
        fill(output.ids(), out, capacity, out_len)
    })
}

/// `log p(target | mask ⊙ prompt)`; `mask` may be null.
///
/// # Safety
/// Pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn xattrib_log_likelihood(
    model: *const XattribModel,
    prompt: *const u32,
    prompt_len: usize,
    mask: *const u8,
    target: *const u32,
    target_len: usize,
    out: *mut f64,
) -> XattribStatus {
    guard(|| {
        let model = model_ref(model)?;
        let prompt = sequence(model, prompt, prompt_len, "prompt")?;
        let target = sequence(model, target, target_len, "target")?;
        let mask = mask_from(mask, prompt_len)?;
        let value = model.inner.log_likelihood(&prompt, mask.as_ref(), &target)?;
        write(out, value, "out")
    })
}

/// Probability ratio and mean per-position KL for a mask (`mask` required).
///
/// # Safety
/// Pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn xattrib_mask_metrics(
    model: *const XattribModel,
    prompt: *const u32,
    prompt_len: usize,
    mask: *const u8,
    target: *const u32,
    target_len: usize,
    out_probability_ratio: *mut f64,
    out_kl: *mut f64,
) -> XattribStatus {
    guard(|| {
        let model = model_ref(model)?;
        let prompt = sequence(model, prompt, prompt_len, "prompt")?;
        let target = sequence(model, target, target_len, "target")?;
        let mask = mask_from(mask, prompt_len)?.ok_or_else(|| null("mask"))?;
        let pr = probability_ratio(model.inner.as_ref(), &prompt, &target, &mask)?;
        let kl = sequence_kl(model.inner.as_ref(), &prompt, &target, &mask)?;
        write(out_probability_ratio, pr, "out_probability_ratio")?;
        write(out_kl, kl, "out_kl")
    })
}

#[no_mangle]
pub extern "C" fn xattrib_explain_options_default() -> XattribExplainOptions {
    let settings = MethodSettings::default();
    XattribExplainOptions {
        method: XattribMethod::Xprompt as i32,
        k: 3,
        iterations: settings.iterations,
        seed: 0,
        temperature: settings.temperature,
        ig_steps: settings.ig_steps,
    }
}

/// Runs one attribution method for a fixed target.
///
/// # Safety
/// Pointers must be valid for their stated lengths; `options` and `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn xattrib_explain(
    model: *const XattribModel,
    prompt: *const u32,
    prompt_len: usize,
    target: *const u32,
    target_len: usize,
    options: *const XattribExplainOptions,
    out: *mut *mut XattribResult,
) -> XattribStatus {
    guard(|| {
        let model = model_ref(model)?;
        let options = options.as_ref().ok_or_else(|| null("options"))?;
        let prompt = sequence(model, prompt, prompt_len, "prompt")?;
        let target = sequence(model, target, target_len, "target")?;
        let method = match options.method {
            0 => Method::Xprompt,
            1 => Method::Random,
            2 => Method::Loo,
            3 => Method::Ig,
            4 => Method::Oracle,
            other => {
                return Err(Failure(XattribStatus::InvalidArgument, format!("unknown method code {other}")));
            }
        };
        if options.k == 0 || options.k >= prompt.len() {
            return Err(AttribError::InvalidCardinality { k: options.k, len: prompt.len() }.into());
        }
        if options.iterations == 0
            || options.ig_steps == 0
            || options.temperature.is_nan()
            || options.temperature <= 0.0
        {
            return Err(Failure(
                XattribStatus::InvalidArgument,
                "iterations, ig_steps and temperature must be positive".into(),
            ));
        }
        let settings = MethodSettings {
            iterations: options.iterations,
            temperature: options.temperature,
            ig_steps: options.ig_steps,
            ..MethodSettings::default()
        };
        let inner = run_method(model.inner.as_ref(), &prompt, &target, method, options.k, options.seed, &settings)?;
        write(out, Box::into_raw(Box::new(XattribResult { inner })), "out")
    })
}

/// # Safety
/// `result` must come from [`xattrib_explain`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn xattrib_result_free(result: *mut XattribResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn xattrib_result_k(result: *const XattribResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.k)
}

/// Explanatory positions, ascending.
///
/// # Safety
/// `out` must hold `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn xattrib_result_indices(
    result: *const XattribResult,
    out: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> XattribStatus {
    guard(|| fill(&result_ref(result)?.inner.indices, out, capacity, out_len))
}

/// Masked log-likelihood after each search iteration (empty for
/// non-search methods).
///
/// # Safety
/// `out` must hold `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn xattrib_result_trace(
    result: *const XattribResult,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> XattribStatus {
    guard(|| fill(&result_ref(result)?.inner.trace, out, capacity, out_len))
}

/// # Safety
/// Output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn xattrib_result_calls(
    result: *const XattribResult,
    out_forward: *mut u64,
    out_gradient: *mut u64,
) -> XattribStatus {
    guard(|| {
        let r = &result_ref(result)?.inner;
        write(out_forward, r.forward_calls, "out_forward")?;
        write(out_gradient, r.gradient_calls, "out_gradient")
    })
}

/// JSON record of the result; free with [`xattrib_string_free`].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xattrib_result_to_json(result: *const XattribResult, out: *mut *mut c_char) -> XattribStatus {
    guard(|| {
        let json = serde_json::to_string(&result_ref(result)?.inner).map_err(AttribError::from)?;
        let c = CString::new(json).map_err(|e| Failure(XattribStatus::Other, e.to_string()))?;
        write(out, c.into_raw(), "out")
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn xattrib_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Sentence BLEU over token ids (no smoothing).
///
/// # Safety
/// Pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn xattrib_bleu(
    candidate: *const u32,
    candidate_len: usize,
    reference: *const u32,
    reference_len: usize,
    max_n: usize,
    out: *mut f64,
) -> XattribStatus {
    guard(|| {
        let c = slice(candidate, candidate_len, "candidate")?;
        let r = slice(reference, reference_len, "reference")?;
        if max_n == 0 {
            return Err(Failure(XattribStatus::InvalidArgument, "max_n must be at least 1".into()));
        }
        write(out, bleu(c, r, max_n), "out")
    })
}

/// ROUGE-L precision, recall and F1 over token ids.
///
/// # Safety
/// Pointers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn xattrib_rouge_l(
    candidate: *const u32,
    candidate_len: usize,
    reference: *const u32,
    reference_len: usize,
    out_precision: *mut f64,
    out_recall: *mut f64,
    out_f1: *mut f64,
) -> XattribStatus {
    guard(|| {
        let (p, r, f) =
            rouge_l(slice(candidate, candidate_len, "candidate")?, slice(reference, reference_len, "reference")?);
        write(out_precision, p, "out_precision")?;
        write(out_recall, r, "out_recall")?;
        write(out_f1, f, "out_f1")
    })
}
