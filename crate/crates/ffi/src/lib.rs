//! C ABI over the secmine core.
//!
//! Conventions:
//! - every fallible function returns a [`SecmineStatus`]; on failure a
//!   message is available from [`secmine_last_error`] on the same thread;
//! - results are written through out-pointers;
//! - strings passed in are NUL-terminated UTF-8;
//! - strings handed out are JSON documents owned by the caller and released
//!   with [`secmine_string_free`];
//! - lexicons are opaque handles released with [`secmine_lexicon_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use secmine::bot::diff_indicators;
use secmine::comments::{extract_comments, normalize_comment, ExtensionMap};
use secmine::lexicon::{Lexicon, SourceKind};
use secmine::repo::RepoMiner;
use secmine::sampler::{required_sample_size, SampleSpec};
use secmine::tracker::SurvivalTable;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecmineStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Io = 4,
    Repository = 5,
    InvalidArgument = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecmineSourceKind {
    Comment = 0,
    CommitMessage = 1,
    Issue = 2,
}

impl From<SecmineSourceKind> for SourceKind {
    fn from(k: SecmineSourceKind) -> Self {
        match k {
            SecmineSourceKind::Comment => SourceKind::Comment,
            SecmineSourceKind::CommitMessage => SourceKind::CommitMessage,
            SecmineSourceKind::Issue => SourceKind::Issue,
        }
    }
}

/// Removed and retained counts of one lifetime bucket.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SecmineBucketCounts {
    pub k: usize,
    pub removed: usize,
    pub retained: usize,
}

/// Opaque lexicon handle.
pub struct SecmineLexicon(Lexicon);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = CString::new(message.into().replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

type Failure = (SecmineStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SecmineStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SecmineStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SecmineStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((SecmineStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (SecmineStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| (SecmineStatus::NullArgument, format!("{name} is null")))
}

unsafe fn lexicon_arg<'a>(p: *const SecmineLexicon) -> Result<&'a Lexicon, Failure> {
    p.as_ref()
        .map(|l| &l.0)
        .ok_or_else(|| (SecmineStatus::NullArgument, "lexicon is null".to_string()))
}

fn json_out(out: &mut *mut c_char, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string(value).expect("value serializes");
    *out = CString::new(text).expect("JSON has no NULs").into_raw();
    Ok(())
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn secmine_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn secmine_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn secmine_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The bundled lexicon.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn secmine_lexicon_default(out: *mut *mut SecmineLexicon) -> SecmineStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(SecmineLexicon(Lexicon::default_lexicon())));
        Ok(())
    })
}

/// Parses lexicon text in the tab-separated lexicon format.
///
/// # Safety
/// `text` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn secmine_lexicon_parse(
    text: *const c_char,
    out: *mut *mut SecmineLexicon,
) -> SecmineStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let lex = Lexicon::parse(text).map_err(|e| (SecmineStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(SecmineLexicon(lex)));
        Ok(())
    })
}

/// Loads a lexicon file.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn secmine_lexicon_load(
    path: *const c_char,
    out: *mut *mut SecmineLexicon,
) -> SecmineStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let lex = secmine::lexicon::load_lexicon(path).map_err(|e| match e {
            secmine::lexicon::LexiconError::Io { .. } => (SecmineStatus::Io, e.to_string()),
            e => (SecmineStatus::Parse, e.to_string()),
        })?;
        *out = Box::into_raw(Box::new(SecmineLexicon(lex)));
        Ok(())
    })
}

/// # Safety
/// `lexicon` must come from this library and not be freed twice. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn secmine_lexicon_free(lexicon: *mut SecmineLexicon) {
    if !lexicon.is_null() {
        drop(Box::from_raw(lexicon));
    }
}

/// Number of phrases, 0 for null.
///
/// # Safety
/// `lexicon` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn secmine_lexicon_len(lexicon: *const SecmineLexicon) -> usize {
    lexicon.as_ref().map_or(0, |l| l.0.len())
}

/// Matches `text` and writes a JSON array of matches (phrase, byte offsets)
/// to `out_json`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn secmine_match_text(
    lexicon: *const SecmineLexicon,
    text: *const c_char,
    source_kind: SecmineSourceKind,
    document_id: *const c_char,
    out_json: *mut *mut c_char,
) -> SecmineStatus {
    guard(|| {
        let lex = lexicon_arg(lexicon)?;
        let text = str_arg(text, "text")?;
        let doc = str_arg(document_id, "document_id")?;
        let out = out_arg(out_json, "out_json")?;
        json_out(out, &lex.match_text(text, source_kind.into(), doc))
    })
}

/// Extracts the comments of a file, choosing the language by the
/// extension of `path`, and writes a JSON array of normalized comments.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn secmine_extract_comments(
    content: *const c_char,
    path: *const c_char,
    out_json: *mut *mut c_char,
) -> SecmineStatus {
    guard(|| {
        let content = str_arg(content, "content")?;
        let path = str_arg(path, "path")?;
        let out = out_arg(out_json, "out_json")?;
        let map = ExtensionMap::default();
        let profile = map
            .detect(path)
            .ok_or_else(|| (SecmineStatus::InvalidArgument, format!("no language profile for {path}")))?;
        let comments: Vec<_> = extract_comments(content, profile, path)
            .into_iter()
            .map(normalize_comment)
            .collect();
        json_out(out, &comments)
    })
}

/// Cochran sample size with finite-population correction.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn secmine_required_sample_size(
    population: u64,
    confidence: f64,
    margin: f64,
    proportion: f64,
    out: *mut u64,
) -> SecmineStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec = SampleSpec {
            confidence,
            margin,
            proportion,
            seed: 0,
        };
        *out = required_sample_size(population, &spec)
            .map_err(|e| (SecmineStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Breaking point of a survival table given as raw bucket counts.
/// `*out_present` is false when the removed share never drops below 50%.
///
/// # Safety
/// `buckets` must point to `len` elements (or be null with `len == 0`);
/// the out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn secmine_breaking_point(
    buckets: *const SecmineBucketCounts,
    len: usize,
    out_value: *mut f64,
    out_present: *mut bool,
) -> SecmineStatus {
    guard(|| {
        let value = out_arg(out_value, "out_value")?;
        let present = out_arg(out_present, "out_present")?;
        let counts = if len == 0 {
            &[][..]
        } else if buckets.is_null() {
            return Err((SecmineStatus::NullArgument, "buckets is null".into()));
        } else {
            std::slice::from_raw_parts(buckets, len)
        };
        let table = SurvivalTable::from_counts(counts.iter().map(|b| (b.k, b.removed, b.retained)));
        *present = table.breaking_point.is_some();
        *value = table.breaking_point.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Indicator comments introduced and removed between two revisions, as a
/// JSON document.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn secmine_diff_indicators(
    repo_path: *const c_char,
    base: *const c_char,
    head: *const c_char,
    lexicon: *const SecmineLexicon,
    out_json: *mut *mut c_char,
) -> SecmineStatus {
    guard(|| {
        let repo_path = str_arg(repo_path, "repo_path")?;
        let base = str_arg(base, "base")?;
        let head = str_arg(head, "head")?;
        let lex = lexicon_arg(lexicon)?;
        let out = out_arg(out_json, "out_json")?;
        let repo_err = |e: secmine::repo::RepoError| (SecmineStatus::Repository, e.to_string());
        let miner = RepoMiner::open(repo_path).map_err(repo_err)?;
        let findings =
            diff_indicators(&miner, base, head, lex, &ExtensionMap::default()).map_err(repo_err)?;
        json_out(out, &findings)
    })
}
