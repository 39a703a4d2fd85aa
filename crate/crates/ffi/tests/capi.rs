use std::ffi::{CStr, CString};
use std::ptr;

use secmine_ffi::*;

fn take_json(p: *mut std::ffi::c_char) -> serde_json::Value {
    assert!(!p.is_null());
    let v = serde_json::from_str(unsafe { CStr::from_ptr(p) }.to_str().unwrap()).unwrap();
    unsafe { secmine_string_free(p) };
    v
}

fn last_error() -> String {
    let p = secmine_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn lexicon_lifecycle_and_matching() {
    let mut lex = ptr::null_mut();
    assert_eq!(unsafe { secmine_lexicon_default(&mut lex) }, SecmineStatus::Ok);
    assert!(unsafe { secmine_lexicon_len(lex) } > 0);

    let text = CString::new("LDAP login broken").unwrap();
    let doc = CString::new("c1").unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe {
        secmine_match_text(lex, text.as_ptr(), SecmineSourceKind::CommitMessage, doc.as_ptr(), &mut out)
    };
    assert_eq!(status, SecmineStatus::Ok);
    let v = take_json(out);
    let phrases: Vec<&str> = v.as_array().unwrap().iter().map(|m| m["phrase"].as_str().unwrap()).collect();
    assert_eq!(phrases, ["ldap", "login"]);
    assert_eq!(v[0]["source_kind"], "commit_message");
    unsafe { secmine_lexicon_free(lex) };
    unsafe { secmine_lexicon_free(ptr::null_mut()) };
}

#[test]
fn parse_errors_carry_messages() {
    let bad = CString::new("xss\tmaybe\t0\n").unwrap();
    let mut lex = ptr::null_mut();
    assert_eq!(unsafe { secmine_lexicon_parse(bad.as_ptr(), &mut lex) }, SecmineStatus::Parse);
    assert!(lex.is_null());
    assert!(last_error().contains("line 1"), "{}", last_error());

    assert_eq!(unsafe { secmine_lexicon_parse(ptr::null(), &mut lex) }, SecmineStatus::NullArgument);
    let missing = CString::new("/nonexistent/lexicon.tsv").unwrap();
    assert_eq!(unsafe { secmine_lexicon_load(missing.as_ptr(), &mut lex) }, SecmineStatus::Io);
}

#[test]
fn sample_size_and_breaking_point() {
    let mut n = 0u64;
    assert_eq!(unsafe { secmine_required_sample_size(1000, 0.95, 0.05, 0.5, &mut n) }, SecmineStatus::Ok);
    assert_eq!(n, 278);
    assert_eq!(
        unsafe { secmine_required_sample_size(1000, 1.5, 0.05, 0.5, &mut n) },
        SecmineStatus::InvalidArgument
    );

    let buckets = [
        SecmineBucketCounts { k: 2, removed: 3, retained: 2 },
        SecmineBucketCounts { k: 3, removed: 2, retained: 3 },
    ];
    let (mut value, mut present) = (0.0, false);
    let status = unsafe { secmine_breaking_point(buckets.as_ptr(), buckets.len(), &mut value, &mut present) };
    assert_eq!(status, SecmineStatus::Ok);
    assert!(present && (value - 2.5).abs() < 1e-9);
    let status = unsafe { secmine_breaking_point(ptr::null(), 0, &mut value, &mut present) };
    assert_eq!(status, SecmineStatus::Ok);
    assert!(!present);
}

#[test]
fn comment_extraction() {
    let src = CString::new("<?php\n$a = \"// no\"; // XSS  here\n").unwrap();
    let path = CString::new("a.php").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { secmine_extract_comments(src.as_ptr(), path.as_ptr(), &mut out) }, SecmineStatus::Ok);
    let v = take_json(out);
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["key"], "xss here");

    let path = CString::new("a.sql").unwrap();
    assert_eq!(
        unsafe { secmine_extract_comments(src.as_ptr(), path.as_ptr(), &mut out) },
        SecmineStatus::InvalidArgument
    );
}

#[test]
fn diff_over_demo_repository() {
    let dir = tempfile::tempdir().unwrap();
    secmine::fixture::build_demo_repo(dir.path()).unwrap();
    let mut lex = ptr::null_mut();
    unsafe { secmine_lexicon_default(&mut lex) };
    let repo = CString::new(dir.path().to_str().unwrap()).unwrap();
    let (base, head) = (CString::new("v1.0").unwrap(), CString::new("v1.1").unwrap());
    let mut out = ptr::null_mut();
    let status = unsafe { secmine_diff_indicators(repo.as_ptr(), base.as_ptr(), head.as_ptr(), lex, &mut out) };
    assert_eq!(status, SecmineStatus::Ok, "{}", last_error());
    let v = take_json(out);
    assert_eq!(v["removed"][0]["key"], "hack for ldap login");
    assert_eq!(v["introduced"][0]["path"], "src/session.php");

    let bogus = CString::new("no-such-rev").unwrap();
    let status = unsafe { secmine_diff_indicators(repo.as_ptr(), bogus.as_ptr(), head.as_ptr(), lex, &mut out) };
    assert_eq!(status, SecmineStatus::Repository);
    unsafe { secmine_lexicon_free(lex) };
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/secmine.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["secmine_lexicon_default", "secmine_match_text", "secmine_diff_indicators", "SECMINE_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler available, syntax check skipped");
        return;
    };
    assert!(status.success());
}
