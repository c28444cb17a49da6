use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use gbias::corpus::{Label, Sample, Vocabulary};
use gbias::model::{Arch, ModelConfig};
use gbias::train::{init_params, Checkpoint};
use gbias_ffi::*;

fn last_error() -> String {
    let p = gbias_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn auc_and_threshold() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    let mut auc = 0.0;
    assert_eq!(unsafe { gbias_roc_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut auc) }, GbiasStatus::Ok);
    assert_eq!(auc, 0.75);
    assert!(gbias_last_error_message().is_null());

    let mut t = f64::NAN;
    assert_eq!(unsafe { gbias_eer_threshold(scores.as_ptr(), labels.as_ptr(), 4, &mut t) }, GbiasStatus::Ok);
    assert!(t.is_finite());
}

#[test]
fn single_class_is_undefined() {
    let scores = [0.1, 0.4];
    let labels = [1u8, 1];
    let mut auc = -1.0;
    let st = unsafe { gbias_roc_auc(scores.as_ptr(), labels.as_ptr(), 2, &mut auc) };
    assert_eq!(st, GbiasStatus::Undefined);
    assert_eq!(auc, -1.0);
    assert!(last_error().contains("negative"));
}

#[test]
fn bad_arguments() {
    let scores = [0.1, 0.4];
    let labels = [0u8, 2];
    let mut out = 0.0;
    assert_eq!(unsafe { gbias_roc_auc(scores.as_ptr(), labels.as_ptr(), 2, &mut out) }, GbiasStatus::InvalidArgument);
    assert!(last_error().contains("labels[1]"));
    assert_eq!(unsafe { gbias_roc_auc(ptr::null(), labels.as_ptr(), 2, &mut out) }, GbiasStatus::NullPointer);
    let labels = [0u8, 1];
    assert_eq!(unsafe { gbias_roc_auc(scores.as_ptr(), labels.as_ptr(), 2, ptr::null_mut()) }, GbiasStatus::NullPointer);
    let s = unsafe { CStr::from_ptr(gbias_status_string(GbiasStatus::BufferTooSmall)) };
    assert_eq!(s.to_str().unwrap(), "output buffer too small");
}

#[test]
fn equality_differences_by_hand() {
    // Threshold 0.5: male has one false negative out of two positives,
    // female none. Overall FNR 1/4, so FNED = 1/4 + 1/4. No false positives.
    let scores = [0.9, 0.2, 0.1, 0.9, 0.8, 0.3];
    let labels = [1u8, 1, 0, 1, 1, 0];
    let groups = [GBIAS_GROUP_MALE, GBIAS_GROUP_MALE, GBIAS_GROUP_MALE, GBIAS_GROUP_FEMALE, GBIAS_GROUP_FEMALE, GBIAS_GROUP_FEMALE];
    let (mut fned, mut fped) = (0.0, 0.0);
    let st = unsafe {
        gbias_equality_differences(scores.as_ptr(), labels.as_ptr(), groups.as_ptr(), 6, 0.5, &mut fned, &mut fped)
    };
    assert_eq!(st, GbiasStatus::Ok);
    assert!((fned - 0.5).abs() < 1e-12);
    assert_eq!(fped, 0.0);

    let bad = [0, 1, 7, 0, 1, 1];
    let st = unsafe {
        gbias_equality_differences(scores.as_ptr(), labels.as_ptr(), bad.as_ptr(), 6, 0.5, &mut fned, &mut fped)
    };
    assert_eq!(st, GbiasStatus::InvalidArgument);
}

#[test]
fn gender_swap_into_buffer() {
    let mut lex = ptr::null_mut();
    assert_eq!(unsafe { gbias_swap_lexicon_new_default(&mut lex) }, GbiasStatus::Ok);
    let text = CString::new("He told Her brother.").unwrap();
    let mut needed = 0usize;
    let st = unsafe { gbias_gender_swap(lex, text.as_ptr(), ptr::null_mut(), 0, &mut needed) };
    assert_eq!(st, GbiasStatus::BufferTooSmall);
    let expected = "She told His sister.";
    assert_eq!(needed, expected.len() + 1);

    let mut buf = vec![0 as std::ffi::c_char; needed];
    let st = unsafe { gbias_gender_swap(lex, text.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut needed) };
    assert_eq!(st, GbiasStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), expected);
    unsafe { gbias_swap_lexicon_free(lex) };
}

#[test]
fn invalid_utf8_text() {
    let mut lex = ptr::null_mut();
    unsafe { gbias_swap_lexicon_new_default(&mut lex) };
    let bytes = [0xffu8, 0x61, 0];
    let mut needed = 0;
    let st = unsafe { gbias_gender_swap(lex, bytes.as_ptr().cast(), ptr::null_mut(), 0, &mut needed) };
    assert_eq!(st, GbiasStatus::InvalidUtf8);
    unsafe { gbias_swap_lexicon_free(lex) };
}

#[test]
fn missing_lexicon_file_is_io() {
    let path = CString::new("/nonexistent/swap.txt").unwrap();
    let mut lex = ptr::null_mut();
    assert_eq!(unsafe { gbias_swap_lexicon_load(path.as_ptr(), &mut lex) }, GbiasStatus::Io);
    assert!(lex.is_null());
}

#[test]
fn default_test_set() {
    let mut set = ptr::null_mut();
    let st = unsafe { gbias_test_set_generate(ptr::null(), ptr::null(), ptr::null(), &mut set) };
    assert_eq!(st, GbiasStatus::Ok);
    unsafe {
        assert_eq!(gbias_test_set_pair_count(set), 576);
        assert_eq!(gbias_test_set_len(set), 1152);
        let (mut text, mut label, mut group) = (ptr::null(), 9u8, -1i32);
        assert_eq!(gbias_test_set_get(set, 1, &mut text, &mut label, &mut group), GbiasStatus::Ok);
        assert_eq!(group, GBIAS_GROUP_FEMALE);
        assert!(label <= 1);
        assert!(!CStr::from_ptr(text).to_str().unwrap().is_empty());
        assert_eq!(gbias_test_set_get(set, 1152, &mut text, ptr::null_mut(), ptr::null_mut()), GbiasStatus::InvalidArgument);
        gbias_test_set_free(set);
    }
}

#[test]
fn model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let samples = [Sample::new("you are a good woman", Label::NonAbusive)];
    let vocab = Vocabulary::build(samples.iter());
    let config = ModelConfig::toy(Arch::Gru);
    let params = init_params(&config, vocab.len(), None, 5).unwrap();
    Checkpoint { params, epoch: 1, valid_auc: 0.5 }.save(dir.path().join("checkpoint")).unwrap();
    vocab.save(dir.path().join("vocab.txt")).unwrap();

    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { gbias_model_load(path.as_ptr(), &mut model) }, GbiasStatus::Ok);
    let text = CString::new("You are a good woman!").unwrap();
    let (mut p, mut q) = (-1.0, -1.0);
    unsafe {
        assert_eq!(gbias_model_predict(model, text.as_ptr(), &mut p), GbiasStatus::Ok);
        assert_eq!(gbias_model_predict(model, text.as_ptr(), &mut q), GbiasStatus::Ok);
    }
    assert!(p > 0.0 && p < 1.0);
    assert_eq!(p, q);

    let mut set = ptr::null_mut();
    let (mut auc, mut fned, mut fped) = (-1.0, -1.0, -1.0);
    unsafe {
        gbias_test_set_generate(ptr::null(), ptr::null(), ptr::null(), &mut set);
        assert_eq!(gbias_model_measure_bias(model, set, &mut auc, &mut fned, &mut fped), GbiasStatus::Ok);
        gbias_test_set_free(set);
        gbias_model_free(model);
    }
    assert!((0.0..=1.0).contains(&auc));
    assert!((0.0..=2.0).contains(&fned) && (0.0..=2.0).contains(&fped));
}

#[test]
fn model_load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { gbias_model_load(path.as_ptr(), &mut model) }, GbiasStatus::Io);
    assert!(model.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn free_accepts_null() {
    unsafe {
        gbias_model_free(ptr::null_mut());
        gbias_test_set_free(ptr::null_mut());
        gbias_swap_lexicon_free(ptr::null_mut());
        assert_eq!(gbias_test_set_len(ptr::null()), 0);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(gbias_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/gbias.h");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let Ok(out) = Command::new(&cc).args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).output() else {
        eprintln!("skipping: no C compiler ({cc})");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
