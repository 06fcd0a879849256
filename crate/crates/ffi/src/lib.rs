//! C ABI over the `multiref` library.
//!
//! Conventions:
//! - Every fallible function returns an [`MrStatus`]; on failure the message
//!   is available from [`mr_last_error`] on the same thread.
//! - Handles ([`MrCorpus`], [`MrModel`]) are opaque and released with their
//!   `*_free` function. Freeing NULL is a no-op.
//! - Strings returned through `char **` out-parameters are owned by the
//!   caller and released with [`mr_string_free`].
//! - Structured inputs and outputs (configs, hypothesis lists, reports) are
//!   JSON using the library's field names.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use multiref::cli::eval_records;
use multiref::corpus::{compute_stats, synth_fixture, Corpus, Split, SynthConfig};
use multiref::decoding::{decode_corpus, DecodeConfig, DecodeRecord};
use multiref::metrics::{corpus_bleu, pairwise_bleu, rouge_l, sentence_bleu, BleuConfig};
use multiref::model::{load_checkpoint, save_checkpoint, Translator};
use multiref::semantic::SurrogateScorer;
use multiref::text::Sentence;
use multiref::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidConfig = 5,
    InvalidInput = 6,
    Model = 7,
    External = 8,
    Panic = 9,
}

/// A loaded corpus.
pub struct MrCorpus {
    inner: Corpus,
}

/// A trained translator.
pub struct MrModel {
    inner: Translator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).expect("interior NULs were replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(MrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.kind() {
            "io" => MrStatus::Io,
            "parse" => MrStatus::Parse,
            "invalid_config" => MrStatus::InvalidConfig,
            "checkpoint" | "version_mismatch" | "shape_mismatch" | "token_out_of_range" | "missing_eos"
            | "non_finite" => MrStatus::Model,
            "transport" | "malformed_response" | "timeout" | "unparseable_response" => MrStatus::External,
            _ => MrStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(MrStatus::Parse, e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> MrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            MrStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(MrStatus::NullArgument, format!("{name} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(MrStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn str_array(p: *const *const c_char, n: usize, name: &str) -> FfiResult<Vec<Sentence>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(null(name));
    }
    std::slice::from_raw_parts(p, n)
        .iter()
        .enumerate()
        .map(|(i, &s)| str_arg(s, &format!("{name}[{i}]")).map(Sentence::new))
        .collect()
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(name))
}

fn to_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| Failure(MrStatus::InvalidInput, e.to_string()))
}

fn parse_json_or_default<T: serde::de::DeserializeOwned + Default>(text: Option<&str>) -> FfiResult<T> {
    match text {
        Some(t) if !t.trim().is_empty() => Ok(serde_json::from_str(t)?),
        _ => Ok(T::default()),
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mr_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn mr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a JSONL corpus. `split` is "train", "dev" or "test".
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mr_corpus_load(
    path: *const c_char,
    split: *const c_char,
    out: *mut *mut MrCorpus,
) -> MrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = str_arg(path, "path")?;
        let split: Split = str_arg(split, "split")?.parse()?;
        let corpus = Corpus::load(path, split)?;
        *out = Box::into_raw(Box::new(MrCorpus { inner: corpus }));
        Ok(())
    })
}

/// Builds the synthetic corpus; `config_json` may be NULL for defaults.
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mr_synth(config_json: *const c_char, out: *mut *mut MrCorpus) -> MrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg: SynthConfig = parse_json_or_default(opt_str_arg(config_json, "config_json")?)?;
        *out = Box::into_raw(Box::new(MrCorpus {
            inner: synth_fixture(&cfg)?,
        }));
        Ok(())
    })
}

/// Writes a corpus as JSONL.
///
/// # Safety
/// `corpus` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mr_corpus_save(corpus: *const MrCorpus, path: *const c_char) -> MrStatus {
    guard(|| {
        let corpus = handle(corpus, "corpus")?;
        corpus.inner.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of examples in a corpus.
///
/// # Safety
/// `corpus` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_corpus_len(corpus: *const MrCorpus, out: *mut usize) -> MrStatus {
    guard(|| {
        *out_ptr(out, "out")? = handle(corpus, "corpus")?.inner.len();
        Ok(())
    })
}

/// # Safety
/// `corpus` must be NULL or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn mr_corpus_free(corpus: *mut MrCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Corpus statistics as JSON. `train` may be NULL for a training corpus;
/// `k == 0` skips the generated-reference measures.
///
/// # Safety
/// Handles must be live or NULL where allowed; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_corpus_stats(
    corpus: *const MrCorpus,
    train: *const MrCorpus,
    k: usize,
    out_json: *mut *mut c_char,
) -> MrStatus {
    guard(|| {
        let out = out_ptr(out_json, "out_json")?;
        let corpus = handle(corpus, "corpus")?;
        let train = train.as_ref().map(|t| &t.inner);
        let stats = compute_stats(&corpus.inner, train, (k > 0).then_some(k), &SurrogateScorer::default())?;
        *out = to_c_string(serde_json::to_string(&stats)?)?;
        Ok(())
    })
}

/// Smoothed sentence BLEU of `hyp` against `n_refs` references.
///
/// # Safety
/// `refs` must point to `n_refs` NUL-terminated strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_sentence_bleu(
    hyp: *const c_char,
    refs: *const *const c_char,
    n_refs: usize,
    out: *mut f64,
) -> MrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let hyp = Sentence::new(str_arg(hyp, "hyp")?);
        let refs = str_array(refs, n_refs, "refs")?;
        *out = sentence_bleu(&hyp, &refs, &BleuConfig::sentence())?;
        Ok(())
    })
}

/// Corpus BLEU. `hyps_json` is a JSON array of strings, `refsets_json` an
/// array of arrays of strings, aligned by position.
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_corpus_bleu(
    hyps_json: *const c_char,
    refsets_json: *const c_char,
    out: *mut f64,
) -> MrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let hyps: Vec<String> = serde_json::from_str(str_arg(hyps_json, "hyps_json")?)?;
        let refsets: Vec<Vec<String>> = serde_json::from_str(str_arg(refsets_json, "refsets_json")?)?;
        let hyps: Vec<Sentence> = hyps.iter().map(|h| Sentence::new(h)).collect();
        let refsets: Vec<Vec<Sentence>> = refsets
            .iter()
            .map(|rs| rs.iter().map(|r| Sentence::new(r)).collect())
            .collect();
        *out = corpus_bleu(&hyps, &refsets, &BleuConfig::corpus())?;
        Ok(())
    })
}

/// ROUGE-L of `hyp`, best over `n_refs` references.
///
/// # Safety
/// As [`mr_sentence_bleu`].
#[no_mangle]
pub unsafe extern "C" fn mr_rouge_l(
    hyp: *const c_char,
    refs: *const *const c_char,
    n_refs: usize,
    out: *mut f64,
) -> MrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let hyp = Sentence::new(str_arg(hyp, "hyp")?);
        let refs = str_array(refs, n_refs, "refs")?;
        *out = rouge_l(&hyp, &refs)?;
        Ok(())
    })
}

/// Mean pairwise BLEU among `n` sentences (n >= 2).
///
/// # Safety
/// `sentences` must point to `n` NUL-terminated strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_pairwise_bleu(sentences: *const *const c_char, n: usize, out: *mut f64) -> MrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let sents = str_array(sentences, n, "sentences")?;
        *out = pairwise_bleu(&sents, &BleuConfig::sentence())?;
        Ok(())
    })
}

/// Loads a checkpoint.
///
/// # Safety
/// `path` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_model_load(path: *const c_char, out: *mut *mut MrModel) -> MrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = load_checkpoint(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(MrModel { inner: model }));
        Ok(())
    })
}

/// Writes a checkpoint.
///
/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mr_model_save(model: *const MrModel, path: *const c_char) -> MrStatus {
    guard(|| {
        let model = handle(model, "model")?;
        save_checkpoint(&model.inner, Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn mr_model_free(model: *mut MrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Decodes one source sequence. `config_json` (nullable) holds decoding
/// parameters; the result is a JSON object with `hypotheses`, `log_probs`
/// and `groups`.
///
/// # Safety
/// `source` must point to `n_source` NUL-terminated strings; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_decode(
    model: *const MrModel,
    source: *const *const c_char,
    n_source: usize,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> MrStatus {
    guard(|| {
        let out = out_ptr(out_json, "out_json")?;
        let model = handle(model, "model")?;
        let cfg: DecodeConfig = parse_json_or_default(opt_str_arg(config_json, "config_json")?)?;
        let tokens: Vec<String> = str_array(source, n_source, "source")?
            .iter()
            .map(|s| s.raw().to_owned())
            .collect();
        let corpus = Corpus::new(
            Split::Test,
            vec![multiref::corpus::MultiRefExample {
                id: String::new(),
                source: tokens,
                references: vec![Sentence::new("-")],
            }],
        )?;
        let rec = decode_corpus(&model.inner, &corpus, &cfg)?
            .pop()
            .ok_or_else(|| Failure(MrStatus::InvalidInput, "nothing decoded".into()))?;
        let body = serde_json::json!({
            "hypotheses": rec.hypotheses,
            "log_probs": rec.log_probs,
            "groups": rec.groups,
        });
        *out = to_c_string(body.to_string())?;
        Ok(())
    })
}

/// Decodes a corpus; the result is JSONL in the hypotheses file format.
///
/// # Safety
/// Handles must be live; `config_json` NULL or NUL-terminated; `out_jsonl` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_decode_corpus(
    model: *const MrModel,
    corpus: *const MrCorpus,
    config_json: *const c_char,
    out_jsonl: *mut *mut c_char,
) -> MrStatus {
    guard(|| {
        let out = out_ptr(out_jsonl, "out_jsonl")?;
        let model = handle(model, "model")?;
        let corpus = handle(corpus, "corpus")?;
        let cfg: DecodeConfig = parse_json_or_default(opt_str_arg(config_json, "config_json")?)?;
        let mut text = String::new();
        for rec in decode_corpus(&model.inner, &corpus.inner, &cfg)? {
            text.push_str(&serde_json::to_string(&rec)?);
            text.push('\n');
        }
        *out = to_c_string(text)?;
        Ok(())
    })
}

/// Scores JSONL hypotheses against a corpus with the surrogate scorer and
/// returns the metric report as JSON. `topk == 0` keeps every hypothesis.
///
/// # Safety
/// `corpus` must be live; `hyps_jsonl` NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_eval(
    corpus: *const MrCorpus,
    hyps_jsonl: *const c_char,
    topk: usize,
    out_json: *mut *mut c_char,
) -> MrStatus {
    guard(|| {
        let out = out_ptr(out_json, "out_json")?;
        let corpus = handle(corpus, "corpus")?;
        let records: Vec<DecodeRecord> = str_arg(hyps_jsonl, "hyps_jsonl")?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        let report = eval_records(
            &corpus.inner,
            &records,
            (topk > 0).then_some(topk),
            &SurrogateScorer::default(),
        )?;
        *out = to_c_string(serde_json::to_string(&report)?)?;
        Ok(())
    })
}
