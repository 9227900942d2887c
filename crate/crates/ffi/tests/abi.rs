use std::ffi::{CStr, CString};
use std::ptr;

use gatqec_ffi::*;

const DEM: &str = "detector(0, 0, 0) D0\ndetector(2, 0, 0) D1\ndetector(4, 0, 0) D2\n\
error(0.05) D0 L0\nerror(0.02) D0 D1\nerror(0.03) D1 D2\nerror(0.01) D2\n\
shift_detectors(0, 0, 1) 3\ndetector(0, 0, 0) D0\ndetector(2, 0, 0) D1\ndetector(4, 0, 0) D2\n";

fn last_error() -> String {
    let p = gq_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn parse(text: &str) -> *mut GqDem {
    let c = CString::new(text).unwrap();
    let mut dem = ptr::null_mut();
    assert_eq!(unsafe { gq_dem_parse(c.as_ptr(), &mut dem) }, GqStatus::Ok);
    dem
}

#[test]
fn dem_queries() {
    let dem = parse(DEM);
    let (mut d, mut o, mut m) = (0, 0, 0);
    unsafe {
        assert_eq!(gq_dem_counts(dem, &mut d, &mut o, &mut m), GqStatus::Ok);
        assert_eq!((d, o, m), (6, 1, 4));
        let (mut nodes, mut rounds, mut edges) = (0, 0, 0);
        assert_eq!(gq_dem_layout(dem, &mut nodes, &mut rounds, &mut edges), GqStatus::Ok);
        assert_eq!((nodes, rounds, edges), (3, 2, 3));
        let mut ends = [0usize; 6];
        let mut probs = [0.0; 3];
        assert_eq!(
            gq_dem_teacher_probs(dem, ends.as_mut_ptr(), probs.as_mut_ptr(), 3),
            GqStatus::Ok
        );
        assert_eq!(ends, [0, 1, 0, 2, 1, 2]);
        assert_eq!(probs, [0.02, 0.0, 0.03]);
        assert_eq!(
            gq_dem_teacher_probs(dem, ends.as_mut_ptr(), probs.as_mut_ptr(), 2),
            GqStatus::InvalidArgument
        );
        gq_dem_free(dem);
    }
}

#[test]
fn sample_and_decode() {
    let dem = parse(DEM);
    let mut dec = ptr::null_mut();
    unsafe {
        assert_eq!(gq_mwpm_new(dem, &mut dec), GqStatus::Ok);
        let n = 200;
        let mut dets = vec![0u8; n * 6];
        let mut obs = vec![0u8; n];
        assert_eq!(
            gq_sample(dem, n, 3, dets.as_mut_ptr(), dets.len(), obs.as_mut_ptr(), n),
            GqStatus::Ok
        );
        let mut correct = 0;
        for s in 0..n {
            let mut mask = 0u64;
            assert_eq!(gq_mwpm_decode(dec, dets[s * 6..].as_ptr(), 6, &mut mask), GqStatus::Ok);
            correct += usize::from(mask == u64::from(obs[s]));
        }
        assert!(correct > 180, "{correct}");
        let mut mask = 0;
        assert_eq!(
            gq_mwpm_decode(dec, [1u8, 0, 0, 0, 0, 0].as_ptr(), 6, &mut mask),
            GqStatus::Ok
        );
        assert_eq!(mask, 1);
        assert_eq!(
            gq_mwpm_decode(dec, [1u8, 0].as_ptr(), 2, &mut mask),
            GqStatus::Dimension
        );
        assert!(last_error().contains("detectors"));
        assert_eq!(
            gq_mwpm_decode(dec, [2u8, 0, 0, 0, 0, 0].as_ptr(), 6, &mut mask),
            GqStatus::InvalidArgument
        );
        gq_mwpm_free(dec);
        gq_dem_free(dem);
    }
}

#[test]
fn b8_unpack() {
    let mut out = [9u8; 16];
    let mut n = 0;
    unsafe {
        assert_eq!(
            gq_b8_unpack([0b101u8, 0x01].as_ptr(), 2, 3, out.as_mut_ptr(), 16, &mut n),
            GqStatus::Ok
        );
        assert_eq!(n, 2);
        assert_eq!(&out[..6], &[1, 0, 1, 1, 0, 0]);
        assert_eq!(
            gq_b8_unpack([0u8; 3].as_ptr(), 3, 9, out.as_mut_ptr(), 16, &mut n),
            GqStatus::Parse
        );
        assert_eq!(
            gq_b8_unpack([0u8; 4].as_ptr(), 4, 1, out.as_mut_ptr(), 2, &mut n),
            GqStatus::InvalidArgument
        );
    }
}

#[test]
fn model_round_trip_through_checkpoint() {
    let dem = parse(DEM);
    let dir = std::env::temp_dir().join(format!("gatqec-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("ckpt.bin");
    let model_dem = gatqec::formats::parse_dem(DEM).unwrap();
    let layout = gatqec::graph::extract_layout(&model_dem).unwrap();
    let params = gatqec::model::init_params(&Default::default(), &layout).unwrap();
    gatqec::model::save_checkpoint(&params, &path).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(gq_model_load(cpath.as_ptr(), dem, &mut model), GqStatus::Ok);
        let syn = [1u8, 0, 0, 0, 1, 0];
        let (mut logit, mut edges) = (0.0, [0.0; 3]);
        assert_eq!(
            gq_model_predict(model, syn.as_ptr(), 6, &mut logit, edges.as_mut_ptr(), 3),
            GqStatus::Ok
        );
        let teacher: std::sync::Arc<[f64]> = vec![0.0; 3].into();
        let g = gatqec::graph::build_flat_graph(&syn, &layout, &teacher, 0).unwrap();
        let topo = gatqec::model::Topology::for_graph(&params, &g).unwrap();
        let (want, want_edges) = gatqec::model::predict(&params, &topo, &g).unwrap();
        assert_eq!(logit, want);
        assert_eq!(edges.to_vec(), want_edges);
        assert_eq!(
            gq_model_predict(model, syn.as_ptr(), 6, &mut logit, ptr::null_mut(), 0),
            GqStatus::Ok
        );
        gq_model_free(model);

        let missing = CString::new(dir.join("none.bin").to_str().unwrap()).unwrap();
        assert_eq!(gq_model_load(missing.as_ptr(), dem, &mut model), GqStatus::Io);
        gq_dem_free(dem);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn errors_are_reported_per_thread() {
    let bad = CString::new("repeat 2 {\n}\n").unwrap();
    let mut dem = ptr::null_mut();
    unsafe {
        assert_eq!(gq_dem_parse(bad.as_ptr(), &mut dem), GqStatus::Unsupported);
        assert!(dem.is_null());
        assert!(last_error().contains("repeat"));
        assert_eq!(gq_dem_parse(ptr::null(), &mut dem), GqStatus::NullPointer);
        assert_eq!(
            gq_dem_counts(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()),
            GqStatus::NullPointer
        );
        let wide = CString::new("error(0.1) D0 D1 D2\n").unwrap();
        assert_eq!(gq_dem_parse(wide.as_ptr(), &mut dem), GqStatus::Ok);
        let mut dec = ptr::null_mut();
        assert_eq!(gq_mwpm_new(dem, &mut dec), GqStatus::Unsupported);
        let mut n = 0;
        assert_eq!(gq_dem_layout(dem, &mut n, &mut n, &mut n), GqStatus::Validation);
        gq_dem_free(dem);
        gq_dem_free(ptr::null_mut());
    }
    let msg = last_error();
    std::thread::spawn(|| {
        gq_clear_error();
        assert!(gq_last_error_message().is_null());
    })
    .join()
    .unwrap();
    assert_eq!(last_error(), msg);
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(gq_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
