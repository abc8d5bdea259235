use std::ffi::{c_char, CString};
use std::process::Command;
use std::ptr;

use randscat::domain::{GridSpec, MediumScene, Phantom};
use randscat::forward::{ForwardModel, IncidentConfig};
use randscat::greens::WaveNumber;
use randscat_ffi::*;

fn cstr(s: &std::path::Path) -> CString {
    CString::new(s.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; randscat_last_error_length() + 1];
    let n = unsafe { randscat_last_error_message(buf.as_mut_ptr(), buf.len()) };
    buf[..n].iter().map(|&c| c as u8 as char).collect()
}

#[test]
fn far_field_matches_the_library() {
    let grid = GridSpec::cube(0.5, 10).unwrap();
    let scene = MediumScene::builder(grid)
        .sigma(Phantom::ball(0.3, 0.5))
        .potential(Phantom::ball(0.3, 0.1))
        .source(Phantom::bump(0.3, 1.0))
        .build()
        .unwrap();
    let n = [10usize; 3];
    let o = grid.origin();
    let e = grid.extent();
    let mut handle = ptr::null_mut();
    let s = unsafe {
        randscat_scene_new(
            o.as_ptr(),
            e.as_ptr(),
            n.as_ptr(),
            scene.sigma().as_ptr(),
            scene.potential().as_ptr(),
            scene.source().as_ptr(),
            grid.len(),
            &mut handle,
        )
    };
    assert_eq!(s, RandscatStatus::Ok, "{}", last_error());
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { randscat_model_new(handle, &mut model) }, RandscatStatus::Ok);
    let xhat = [0.0, 0.6, 0.8];
    let d = [1.0, 0.0, 0.0];
    let (mut re, mut im) = (0.0, 0.0);
    let s = unsafe { randscat_far_field(model, 4.0, xhat.as_ptr(), d.as_ptr(), true, 9, &mut re, &mut im) };
    assert_eq!(s, RandscatStatus::Ok, "{}", last_error());

    let lib = ForwardModel::new(scene, Default::default()).unwrap();
    let noise = randscat::noise::draw_noise(&grid, 9);
    let want = lib
        .at(WaveNumber::new(4.0).unwrap())
        .unwrap()
        .far_field(xhat, &IncidentConfig::active(d).unwrap(), Some(&noise))
        .unwrap()
        .value;
    assert_eq!((re, im), (want.re, want.im));

    let bad = [1.0, 1.0, 0.0];
    let s = unsafe { randscat_far_field(model, 4.0, bad.as_ptr(), ptr::null(), false, 0, &mut re, &mut im) };
    assert_eq!(s, RandscatStatus::InvalidArgument);
    assert!(last_error().contains("unit"));
    unsafe {
        randscat_model_free(model);
        randscat_scene_free(handle);
    }
}

#[test]
fn pipeline_and_dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
version = 1
mode = "potential"

[scene]
grid = { origin = [-0.5, -0.5, -0.5], extent = [1.0, 1.0, 1.0], n = [8, 8, 8] }
potential = [{ shape = "ball", center = [0.0, 0.0, 0.0], radius = 0.3, amplitude = 0.1 }]

[potential]
seed = 2
k_list = [4.0, 6.0]
points = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
"#;
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, config).unwrap();
    let out = dir.path().join("out");
    let mut flags = 99u32;
    let s = unsafe { randscat_run_pipeline(cstr(&path).as_ptr(), cstr(&out).as_ptr(), &mut flags) };
    assert_eq!(s, RandscatStatus::Ok, "{}", last_error());
    assert_eq!(flags, 0);

    let mut data = ptr::null_mut();
    assert_eq!(unsafe { randscat_dataset_read(cstr(&out.join("farfield.bin")).as_ptr(), &mut data) }, RandscatStatus::Ok);
    let mut len = 0;
    assert_eq!(unsafe { randscat_dataset_len(data, &mut len) }, RandscatStatus::Ok);
    assert_eq!(len, 8);
    let mut rec = RandscatRecord::default();
    assert_eq!(unsafe { randscat_dataset_record(data, 0, &mut rec) }, RandscatStatus::Ok);
    assert!(rec.has_d && rec.has_seed && rec.seed == 2);
    assert_eq!(unsafe { randscat_dataset_record(data, len, &mut rec) }, RandscatStatus::IndexOutOfRange);
    unsafe { randscat_dataset_free(data) };

    std::fs::write(out.join("farfield.bin"), b"garbage").unwrap();
    let s = unsafe { randscat_run_pipeline(cstr(&path).as_ptr(), cstr(&out).as_ptr(), ptr::null_mut()) };
    assert_eq!(s, RandscatStatus::Checksum);
    assert!(last_error().contains("farfield.bin"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/randscat.h");
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).output() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
