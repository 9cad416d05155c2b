//! C interface to the LAGAN pipeline.
//!
//! Every fallible function returns a [`LaganStatus`]. On failure a message is
//! kept per thread and read back with [`lagan_last_error`]. Handles are
//! created by the library and released with the matching `_free` function;
//! passing NULL to a `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use lagan_core::data::{read_images, synth_images, write_images};
use lagan_core::eval::minimax_score;
use lagan_core::jet::{JetImage, Label, Origin, NUM_PIXELS};
use lagan_core::model::{generate_class, Lagan, LaganConfig, Mode};
use lagan_core::observables::observables;
use lagan_core::preprocess::PreprocessConfig;
use lagan_core::{Error, Tensor};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LaganStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotFound = 3,
    /// Wrong magic, version or a truncated file.
    Format = 4,
    Config = 5,
    Dimension = 6,
    /// Non-finite values or an observable that is undefined for the input.
    Numeric = 7,
    Io = 8,
    /// A Rust panic was caught at the boundary.
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LaganClass {
    Background = 0,
    Signal = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LaganPreset {
    Full = 0,
    Narrow = 1,
    /// Full sizes with shared-weight convolutions.
    Dcgan = 2,
    Toy = 3,
}

/// Observables of one 25x25 image. Undefined n-subjettiness values are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct LaganObservables {
    pub pt: f64,
    pub mass: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau21: f64,
    /// Set when the squared mass was negative and clamped to zero.
    pub mass_clamped: bool,
}

/// A trained or freshly initialized generator/discriminator pair.
pub struct LaganModel(Lagan);

/// An ordered set of labeled 25x25 images.
pub struct LaganImages(Vec<JetImage>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(LaganStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => LaganStatus::NotFound,
            Error::BadMagic { .. } | Error::Version { .. } | Error::Truncated(_) => LaganStatus::Format,
            Error::Config(_) => LaganStatus::Config,
            Error::Dimension(_) | Error::IndexOutOfRange(_) => LaganStatus::Dimension,
            Error::NonFinite { .. } | Error::UndefinedObservable(_) | Error::DegenerateAxis(_) => LaganStatus::Numeric,
            Error::Io(_) => LaganStatus::Io,
            _ => LaganStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LaganStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LaganStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LaganStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(LaganStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(LaganStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lagan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lagan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Initializes a model from a preset with the given seed.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn lagan_model_new(preset: LaganPreset, seed: u64, out: *mut *mut LaganModel) -> LaganStatus {
    guard(|| {
        let config = match preset {
            LaganPreset::Full => LaganConfig::full(),
            LaganPreset::Narrow => LaganConfig::narrow(),
            LaganPreset::Dcgan => LaganConfig::full().dcgan(),
            LaganPreset::Toy => LaganConfig::toy(),
        };
        put(out, LaganModel(Lagan::new(config, seed)?))
    })
}

/// Loads a checkpoint written by `lagan train` or [`lagan_model_save`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn lagan_model_load(path: *const c_char, out: *mut *mut LaganModel) -> LaganStatus {
    guard(|| {
        let p = path_arg(path)?;
        if !p.is_file() {
            return Err(Error::NotFound(p).into());
        }
        put(out, LaganModel(Lagan::load(&p)?))
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lagan_model_save(model: *const LaganModel, path: *const c_char) -> LaganStatus {
    guard(|| {
        let m = deref(model, "model")?;
        Ok(m.0.save(&path_arg(path)?)?)
    })
}

/// # Safety
/// `model` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lagan_model_free(model: *mut LaganModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side length of the images the model produces.
///
/// # Safety
/// `model` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lagan_model_image_size(model: *const LaganModel, out: *mut usize) -> LaganStatus {
    guard(|| {
        let m = deref(model, "model")?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.0.config.image_size;
        Ok(())
    })
}

/// Generates `count` images of one class.
///
/// # Safety
/// `model` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lagan_model_generate(
    model: *const LaganModel,
    class: LaganClass,
    count: usize,
    seed: u64,
    out: *mut *mut LaganImages,
) -> LaganStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if m.0.config.image_size * m.0.config.image_size != NUM_PIXELS {
            return Err(Fail(LaganStatus::Config, "model does not produce 25x25 images".into()));
        }
        let label = Label::from_index(class as usize)?;
        put(out, LaganImages(generate_class(&m.0, label, count, seed, 250)?))
    })
}

/// Inference-mode discriminator outputs for `count` images of
/// `size * size` pixels each (GeV), row-major. Writes `count` values to each
/// of `p_real` and `p_signal`.
///
/// # Safety
/// `pixels` must hold `count * size * size` doubles; the outputs `count` each.
#[no_mangle]
pub unsafe extern "C" fn lagan_model_discriminate(
    model: *const LaganModel,
    pixels: *const f64,
    count: usize,
    p_real: *mut f64,
    p_signal: *mut f64,
) -> LaganStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if pixels.is_null() || p_real.is_null() || p_signal.is_null() {
            return Err(null("buffer"));
        }
        if count == 0 {
            return Err(Fail(LaganStatus::InvalidArgument, "count must be positive".into()));
        }
        let s = m.0.config.image_size;
        let data = std::slice::from_raw_parts(pixels, count * s * s).to_vec();
        let (pr, ps) = m.0.discriminate(&Tensor::new(&[count, s, s, 1], data)?, Mode::Inference)?;
        std::slice::from_raw_parts_mut(p_real, count).copy_from_slice(&pr);
        std::slice::from_raw_parts_mut(p_signal, count).copy_from_slice(&ps);
        Ok(())
    })
}

/// Synthetic, preprocessed images: `per_class` signal then `per_class`
/// background.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lagan_images_synth(per_class: usize, seed: u64, out: *mut *mut LaganImages) -> LaganStatus {
    guard(|| put(out, LaganImages(synth_images(per_class, seed, &PreprocessConfig::default())?)))
}

/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lagan_images_read(path: *const c_char, out: *mut *mut LaganImages) -> LaganStatus {
    guard(|| {
        let p = path_arg(path)?;
        if !p.is_file() {
            return Err(Error::NotFound(p).into());
        }
        put(out, LaganImages(read_images(&p)?))
    })
}

/// # Safety
/// `images` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lagan_images_write(images: *const LaganImages, path: *const c_char) -> LaganStatus {
    guard(|| {
        let set = deref(images, "images")?;
        Ok(write_images(&path_arg(path)?, &set.0)?)
    })
}

/// # Safety
/// `images` must come from this library; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lagan_images_len(images: *const LaganImages, out: *mut usize) -> LaganStatus {
    guard(|| {
        let set = deref(images, "images")?;
        *out.as_mut().ok_or_else(|| null("out"))? = set.0.len();
        Ok(())
    })
}

/// Copies image `index` into `pixels` (625 doubles, row = eta) and, when
/// `class` is not NULL, stores its class.
///
/// # Safety
/// `pixels` must have room for 625 doubles.
#[no_mangle]
pub unsafe extern "C" fn lagan_images_get(
    images: *const LaganImages,
    index: usize,
    pixels: *mut f64,
    class: *mut LaganClass,
) -> LaganStatus {
    guard(|| {
        let set = deref(images, "images")?;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        let img = set
            .0
            .get(index)
            .ok_or_else(|| Fail(LaganStatus::Dimension, format!("index {index} out of {} images", set.0.len())))?;
        std::slice::from_raw_parts_mut(pixels, NUM_PIXELS).copy_from_slice(img.pixels());
        if let Some(c) = class.as_mut() {
            *c = match img.label {
                Label::Background => LaganClass::Background,
                Label::Signal => LaganClass::Signal,
            };
        }
        Ok(())
    })
}

/// # Safety
/// `images` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lagan_images_free(images: *mut LaganImages) {
    if !images.is_null() {
        drop(Box::from_raw(images));
    }
}

/// Observables of one 625-pixel image.
///
/// # Safety
/// `pixels` must hold 625 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lagan_observables(pixels: *const f64, out: *mut LaganObservables) -> LaganStatus {
    guard(|| {
        if pixels.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        let px = std::slice::from_raw_parts(pixels, NUM_PIXELS).to_vec();
        let img = JetImage::from_pixels(px, Label::Signal, Origin::Real)?;
        let o = observables(&img);
        *out = LaganObservables {
            pt: o.pt,
            mass: o.mass,
            tau1: o.tau1.unwrap_or(f64::NAN),
            tau2: o.tau2.unwrap_or(f64::NAN),
            tau21: o.tau21.unwrap_or(f64::NAN),
            mass_clamped: o.mass_clamped,
        };
        Ok(())
    })
}

/// Worst-case per-class EMD between the `(mass, tau21)` distributions of two
/// image sets on their pooled window. When `emd` is not NULL it receives two
/// values indexed by [`LaganClass`].
///
/// # Safety
/// Handles must come from this library; `emd` needs room for 2 doubles.
#[no_mangle]
pub unsafe extern "C" fn lagan_score(
    real: *const LaganImages,
    generated: *const LaganImages,
    sigma: *mut f64,
    emd: *mut f64,
) -> LaganStatus {
    guard(|| {
        let r = deref(real, "real")?;
        let g = deref(generated, "generated")?;
        let report = minimax_score(&r.0, &g.0, None)?;
        *sigma.as_mut().ok_or_else(|| null("sigma"))? = report.sigma;
        if !emd.is_null() {
            let out = std::slice::from_raw_parts_mut(emd, 2);
            for c in &report.per_class {
                out[c.label.index()] = c.emd;
            }
        }
        Ok(())
    })
}
