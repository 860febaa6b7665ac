use std::collections::BTreeMap;
use std::ffi::{CStr, CString};
use std::ptr;

use pneumoseg::imaging;
use pneumoseg::model::{save_checkpoint, ModelConfig, UNet};
use pneumoseg_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(pseg_last_error()) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    pseg_string_free(s);
    out
}

fn tiny_checkpoint() -> Vec<u8> {
    let model = UNet::build(ModelConfig {
        depth: 2,
        base_channels: 4,
        blocks_per_stage: 1,
        image_size: 16,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    save_checkpoint(&model, BTreeMap::new())
}

#[test]
fn rle_round_trip_through_c_abi() {
    let mask = [1u8, 0, 0, 1, 1, 0];
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(pseg_rle_encode(mask.as_ptr(), 3, 2, &mut out), PsegStatus::Ok);
        let text = take(out);
        // column-major: (0,0)=1, (1,0)=1, (0,1)=0, (1,1)=1, (0,2)=0, (1,2)=0
        assert_eq!(text, "1 2 4 1");
        let c = CString::new(text).unwrap();
        let mut back = [9u8; 6];
        assert_eq!(pseg_rle_decode(c.as_ptr(), 3, 2, back.as_mut_ptr()), PsegStatus::Ok);
        assert_eq!(back, mask);

        let messy = CString::new(" 1  1\n2 1  4 1 ").unwrap();
        assert_eq!(pseg_rle_canonicalize(messy.as_ptr(), 3, 2, &mut out), PsegStatus::Ok);
        assert_eq!(take(out), "1 2 4 1");
    }
}

#[test]
fn errors_set_status_and_message() {
    let bad = CString::new("1 x").unwrap();
    let mut buf = [0u8; 4];
    unsafe {
        assert_eq!(pseg_rle_decode(bad.as_ptr(), 2, 2, buf.as_mut_ptr()), PsegStatus::Rle);
        assert!(last_error().contains("token 1"), "{}", last_error());
        assert_eq!(pseg_rle_decode(ptr::null(), 2, 2, buf.as_mut_ptr()), PsegStatus::NullPointer);
        let ok = CString::new("-1").unwrap();
        assert_eq!(pseg_rle_decode(ok.as_ptr(), 2, 2, buf.as_mut_ptr()), PsegStatus::Ok);
        assert_eq!(last_error(), "");
        let mut out = ptr::null_mut();
        assert_eq!(pseg_rle_encode(buf.as_ptr(), 0, 2, &mut out), PsegStatus::InvalidArgument);
    }
}

#[test]
fn metrics_match_the_worked_pair() {
    // |x| = 4, |y| = 6, overlap 3
    let mut x = [0u8; 16];
    let mut y = [0u8; 16];
    x[..4].fill(1);
    y[..3].fill(1);
    y[4..7].fill(1);
    let (mut d, mut j) = (0.0f32, 0.0f32);
    unsafe {
        assert_eq!(pseg_dice(x.as_ptr(), y.as_ptr(), 4, 4, &mut d), PsegStatus::Ok);
        assert_eq!(pseg_iou(x.as_ptr(), y.as_ptr(), 4, 4, &mut j), PsegStatus::Ok);
        assert!((d - 0.6).abs() < 1e-6);
        assert!((j - 3.0 / 7.0).abs() < 1e-6);
        let empty = [0u8; 16];
        assert_eq!(pseg_dice(empty.as_ptr(), empty.as_ptr(), 4, 4, &mut d), PsegStatus::Ok);
        assert_eq!(d, 1.0);
        assert_eq!(pseg_iou(x.as_ptr(), y.as_ptr(), 4, 4, ptr::null_mut()), PsegStatus::NullPointer);
    }
}

#[test]
fn model_handle_lifecycle() {
    let ckpt = tiny_checkpoint();
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(pseg_model_load_bytes(ckpt.as_ptr(), ckpt.len(), &mut model), PsegStatus::Ok);
        assert!(!model.is_null());
        let mut size = 0usize;
        assert_eq!(pseg_model_image_size(model, &mut size), PsegStatus::Ok);
        assert_eq!(size, 16);

        let png = imaging::encode_gray_png(20, 20, &(0..400).map(|i| (i % 256) as u8).collect::<Vec<_>>()).unwrap();
        let mut rle_out = ptr::null_mut();
        assert_eq!(
            pseg_predict_png(model, png.as_ptr(), png.len(), 0.5, 0, &mut rle_out),
            PsegStatus::Ok
        );
        let text = take(rle_out);
        let expected = pneumoseg::infer::predict(&pneumoseg::model::load_checkpoint(&ckpt).unwrap(), &png, 0.5, 0)
            .unwrap()
            .rle;
        assert_eq!(text, expected);

        assert_eq!(
            pseg_predict_png(model, b"nope".as_ptr(), 4, 0.5, 0, &mut rle_out),
            PsegStatus::Image
        );
        assert_eq!(
            pseg_predict_png(model, png.as_ptr(), png.len(), 2.0, 0, &mut rle_out),
            PsegStatus::InvalidArgument
        );
        pseg_model_free(model);
        pseg_model_free(ptr::null_mut());
    }
}

#[test]
fn bad_checkpoints_are_rejected() {
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(pseg_model_load_bytes(b"XXXX".as_ptr(), 4, &mut model), PsegStatus::Checkpoint);
        assert!(model.is_null());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        std::fs::write(&path, tiny_checkpoint()).unwrap();
        let c = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(pseg_model_load_file(c.as_ptr(), &mut model), PsegStatus::Ok);
        pseg_model_free(model);
        let missing = CString::new(dir.path().join("absent").to_str().unwrap()).unwrap();
        assert_eq!(pseg_model_load_file(missing.as_ptr(), &mut model), PsegStatus::Io);
    }
}

#[test]
fn version_is_reported() {
    let v = unsafe { CStr::from_ptr(pseg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
