//! C interface to the gbias library.
//!
//! Every fallible function returns a [`GbiasStatus`]. On failure a
//! description is kept per thread and can be read with
//! [`gbias_last_error_message`]. Objects are handed out as opaque pointers
//! and must be released with the matching `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use gbias::corpus::{encode, Group, Label, Sample, Vocabulary};
use gbias::identity::{gender_swap, generate_test_set, FillLexicon, IdentityPairLexicon, Template};
use gbias::metrics::{eer_threshold, equality_differences, group_rates, roc_auc, PredictionRecord};
use gbias::model::predict;
use gbias::train::Checkpoint;
use gbias::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbiasStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    /// The data admits no answer, e.g. AUC over a single class.
    Undefined = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

pub const GBIAS_GROUP_MALE: i32 = 0;
pub const GBIAS_GROUP_FEMALE: i32 = 1;
pub const GBIAS_GROUP_NONE: i32 = 2;

/// A trained classifier together with its vocabulary.
pub struct GbiasModel {
    checkpoint: Checkpoint,
    vocab: Vocabulary,
}

/// A gender swap word list.
pub struct GbiasSwapLexicon {
    lexicon: IdentityPairLexicon,
}

/// A generated, gender-paired test set. Samples alternate male, female.
pub struct GbiasTestSet {
    pairs: usize,
    texts: Vec<CString>,
    samples: Vec<Sample>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: GbiasStatus,
    message: String,
}

impl Failure {
    fn new(status: GbiasStatus, message: impl Into<String>) -> Failure {
        Failure { status, message: message.into() }
    }
}

fn status_of(e: &Error) -> GbiasStatus {
    match e {
        Error::Io(_) => GbiasStatus::Io,
        Error::Parse { .. } | Error::Json(_) => GbiasStatus::Parse,
        Error::SingleClass(_)
        | Error::EmptyGroup { .. }
        | Error::DegenerateNeutralize(_)
        | Error::DegenerateEqualize(..) => GbiasStatus::Undefined,
        Error::Stage { source, .. } => status_of(source),
        _ => GbiasStatus::InvalidArgument,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::new(status_of(&e), e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GbiasStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            GbiasStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(fail.message);
            fail.status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            GbiasStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(GbiasStatus::NullPointer, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(GbiasStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn opt_path(p: *const c_char, what: &str) -> Result<Option<PathBuf>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(|s| Some(PathBuf::from(s)))
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, n))
}

fn label_of(v: u8, i: usize) -> Result<Label, Failure> {
    Label::from_u8(v).ok_or_else(|| Failure::new(GbiasStatus::InvalidArgument, format!("labels[{i}] is {v}, expected 0 or 1")))
}

fn group_of(v: i32, i: usize) -> Result<Group, Failure> {
    match v {
        GBIAS_GROUP_MALE => Ok(Group::Male),
        GBIAS_GROUP_FEMALE => Ok(Group::Female),
        GBIAS_GROUP_NONE => Ok(Group::None),
        _ => Err(Failure::new(GbiasStatus::InvalidArgument, format!("groups[{i}] is {v}, not a GBIAS_GROUP_* value"))),
    }
}

fn group_code(g: Group) -> i32 {
    match g {
        Group::Male => GBIAS_GROUP_MALE,
        Group::Female => GBIAS_GROUP_FEMALE,
        Group::None => GBIAS_GROUP_NONE,
    }
}

unsafe fn records(
    scores: *const f64,
    labels: *const u8,
    groups: *const i32,
    n: usize,
) -> Result<Vec<PredictionRecord>, Failure> {
    let scores = slice_arg(scores, n, "scores")?;
    let labels = slice_arg(labels, n, "labels")?;
    let groups = if groups.is_null() { None } else { Some(slice_arg(groups, n, "groups")?) };
    (0..n)
        .map(|i| {
            let group = match groups {
                Some(g) => group_of(g[i], i)?,
                None => Group::None,
            };
            Ok(PredictionRecord::new(scores[i], label_of(labels[i], i)?, group))
        })
        .collect()
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    non_null(out, what)?;
    out.write(value);
    Ok(())
}

/// Message for the last failed call on this thread, or NULL after a
/// successful one. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn gbias_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn gbias_status_string(status: GbiasStatus) -> *const c_char {
    let s: &'static CStr = match status {
        GbiasStatus::Ok => c"ok",
        GbiasStatus::NullPointer => c"null pointer argument",
        GbiasStatus::InvalidUtf8 => c"string is not valid UTF-8",
        GbiasStatus::InvalidArgument => c"invalid argument",
        GbiasStatus::Io => c"I/O error",
        GbiasStatus::Parse => c"malformed input file",
        GbiasStatus::Undefined => c"result undefined for this data",
        GbiasStatus::BufferTooSmall => c"output buffer too small",
        GbiasStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Library version as a NUL-terminated string.
#[no_mangle]
pub extern "C" fn gbias_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// ROC AUC of `n` scores against 0/1 labels.
#[no_mangle]
pub unsafe extern "C" fn gbias_roc_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> GbiasStatus {
    guard(|| {
        let recs = records(scores, labels, std::ptr::null(), n)?;
        write_out(out, roc_auc(&recs)?, "out")
    })
}

/// Threshold at which false positive and false negative rates are closest.
#[no_mangle]
pub unsafe extern "C" fn gbias_eer_threshold(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> GbiasStatus {
    guard(|| {
        let recs = records(scores, labels, std::ptr::null(), n)?;
        write_out(out, eer_threshold(&recs)?, "out")
    })
}

/// False negative and false positive equality differences at `threshold`.
/// `groups` holds GBIAS_GROUP_* codes; every identity group needs both
/// classes.
#[no_mangle]
pub unsafe extern "C" fn gbias_equality_differences(
    scores: *const f64,
    labels: *const u8,
    groups: *const i32,
    n: usize,
    threshold: f64,
    out_fned: *mut f64,
    out_fped: *mut f64,
) -> GbiasStatus {
    guard(|| {
        non_null(groups, "groups")?;
        non_null(out_fned, "out_fned")?;
        non_null(out_fped, "out_fped")?;
        let recs = records(scores, labels, groups, n)?;
        let (fned, fped) = equality_differences(&group_rates(&recs, threshold)?);
        out_fned.write(fned);
        out_fped.write(fped);
        Ok(())
    })
}

/// The built-in swap list.
#[no_mangle]
pub unsafe extern "C" fn gbias_swap_lexicon_new_default(out: *mut *mut GbiasSwapLexicon) -> GbiasStatus {
    guard(|| {
        let lex = Box::new(GbiasSwapLexicon { lexicon: IdentityPairLexicon::default_swap() });
        write_out(out, Box::into_raw(lex), "out")
    })
}

/// Reads a swap list file.
#[no_mangle]
pub unsafe extern "C" fn gbias_swap_lexicon_load(path: *const c_char, out: *mut *mut GbiasSwapLexicon) -> GbiasStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = str_arg(path, "path")?;
        let lexicon = IdentityPairLexicon::load(path)?;
        out.write(Box::into_raw(Box::new(GbiasSwapLexicon { lexicon })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gbias_swap_lexicon_free(lexicon: *mut GbiasSwapLexicon) {
    if !lexicon.is_null() {
        drop(Box::from_raw(lexicon));
    }
}

/// Writes `text` with every gendered word swapped into `buf`.
///
/// `*out_len` always receives the size needed, NUL included. When
/// `buf_len` is smaller, nothing is written and BufferTooSmall is returned;
/// `buf` may be NULL in that case.
#[no_mangle]
pub unsafe extern "C" fn gbias_gender_swap(
    lexicon: *const GbiasSwapLexicon,
    text: *const c_char,
    buf: *mut c_char,
    buf_len: usize,
    out_len: *mut usize,
) -> GbiasStatus {
    guard(|| {
        non_null(lexicon, "lexicon")?;
        non_null(out_len, "out_len")?;
        let text = str_arg(text, "text")?;
        let swapped = gender_swap(&Sample::new(text, Label::NonAbusive), &(*lexicon).lexicon).text;
        let needed = swapped.len() + 1;
        out_len.write(needed);
        if buf_len < needed {
            return Err(Failure::new(
                GbiasStatus::BufferTooSmall,
                format!("swapped text needs {needed} bytes, buffer has {buf_len}"),
            ));
        }
        non_null(buf, "buf")?;
        std::ptr::copy_nonoverlapping(swapped.as_ptr(), buf.cast::<u8>(), swapped.len());
        buf.add(swapped.len()).write(0);
        Ok(())
    })
}

/// Generates the paired test set. Each path may be NULL for the built-in
/// templates, fill words or identity pairs.
#[no_mangle]
pub unsafe extern "C" fn gbias_test_set_generate(
    templates: *const c_char,
    fill: *const c_char,
    identities: *const c_char,
    out: *mut *mut GbiasTestSet,
) -> GbiasStatus {
    guard(|| {
        non_null(out, "out")?;
        let templates = match opt_path(templates, "templates")? {
            Some(p) => Template::load(p)?,
            None => Template::defaults(),
        };
        let fill = match opt_path(fill, "fill")? {
            Some(p) => FillLexicon::load(p)?,
            None => FillLexicon::default(),
        };
        let ids = match opt_path(identities, "identities")? {
            Some(p) => IdentityPairLexicon::load(p)?,
            None => IdentityPairLexicon::default_test_pairs(),
        };
        let set = generate_test_set(&templates, &fill, &ids)?;
        let samples: Vec<Sample> = set.samples().cloned().collect();
        let texts = samples
            .iter()
            .map(|s| CString::new(s.text.clone()).map_err(|_| Failure::new(GbiasStatus::InvalidArgument, "sample text contains NUL")))
            .collect::<Result<_, _>>()?;
        out.write(Box::into_raw(Box::new(GbiasTestSet { pairs: set.pair_count(), texts, samples })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gbias_test_set_free(set: *mut GbiasTestSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Number of samples, twice the number of pairs. 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn gbias_test_set_len(set: *const GbiasTestSet) -> usize {
    set.as_ref().map_or(0, |s| s.samples.len())
}

#[no_mangle]
pub unsafe extern "C" fn gbias_test_set_pair_count(set: *const GbiasTestSet) -> usize {
    set.as_ref().map_or(0, |s| s.pairs)
}

/// Sample `index`. `*text` stays valid until the set is freed. Any output
/// pointer may be NULL.
#[no_mangle]
pub unsafe extern "C" fn gbias_test_set_get(
    set: *const GbiasTestSet,
    index: usize,
    text: *mut *const c_char,
    label: *mut u8,
    group: *mut i32,
) -> GbiasStatus {
    guard(|| {
        non_null(set, "set")?;
        let set = &*set;
        let sample = set.samples.get(index).ok_or_else(|| {
            Failure::new(GbiasStatus::InvalidArgument, format!("index {index} out of range for {} samples", set.samples.len()))
        })?;
        if !text.is_null() {
            text.write(set.texts[index].as_ptr());
        }
        if !label.is_null() {
            label.write(sample.label.as_u8());
        }
        if !group.is_null() {
            group.write(group_code(sample.group));
        }
        Ok(())
    })
}

/// Loads a model directory written by `gbias train` or `gbias finetune`.
#[no_mangle]
pub unsafe extern "C" fn gbias_model_load(dir: *const c_char, out: *mut *mut GbiasModel) -> GbiasStatus {
    guard(|| {
        non_null(out, "out")?;
        let dir = Path::new(str_arg(dir, "dir")?);
        let checkpoint = Checkpoint::load(dir.join("checkpoint"))?;
        let vocab = Vocabulary::load(dir.join("vocab.txt"))?;
        if vocab.len() != checkpoint.params.vocab_size() {
            return Err(Failure::new(
                GbiasStatus::Parse,
                format!("vocabulary has {} entries, model expects {}", vocab.len(), checkpoint.params.vocab_size()),
            ));
        }
        out.write(Box::into_raw(Box::new(GbiasModel { checkpoint, vocab })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gbias_model_free(model: *mut GbiasModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn score(model: &GbiasModel, sample: &Sample) -> Result<f64, Failure> {
    let params = &model.checkpoint.params;
    let config = params.config();
    Ok(predict(params, config, &encode(sample, &model.vocab, config.max_len))?)
}

/// Probability that `text` is abusive.
#[no_mangle]
pub unsafe extern "C" fn gbias_model_predict(model: *const GbiasModel, text: *const c_char, out: *mut f64) -> GbiasStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let text = str_arg(text, "text")?;
        let p = score(&*model, &Sample::new(text, Label::NonAbusive))?;
        out.write(p);
        Ok(())
    })
}

/// Scores the test set and reports its AUC and the equality differences at
/// the set's own equal-error-rate threshold.
#[no_mangle]
pub unsafe extern "C" fn gbias_model_measure_bias(
    model: *const GbiasModel,
    set: *const GbiasTestSet,
    out_auc: *mut f64,
    out_fned: *mut f64,
    out_fped: *mut f64,
) -> GbiasStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(set, "set")?;
        for (p, what) in [(out_auc, "out_auc"), (out_fned, "out_fned"), (out_fped, "out_fped")] {
            non_null(p, what)?;
        }
        let model = &*model;
        let recs = (*set)
            .samples
            .iter()
            .map(|s| Ok(PredictionRecord::new(score(model, s)?, s.label, s.group)))
            .collect::<Result<Vec<_>, Failure>>()?;
        let auc = roc_auc(&recs)?;
        let (fned, fped) = equality_differences(&group_rates(&recs, eer_threshold(&recs)?)?);
        out_auc.write(auc);
        out_fned.write(fned);
        out_fped.write(fped);
        Ok(())
    })
}
