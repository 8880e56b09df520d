use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use magnn::dataset::{read_dataset, write_dataset};
use magnn::evaluator::{evaluate, rank_items, EvalMode};
use magnn::itemgraph::ItemGraph;
use magnn::model::{save_checkpoint, ModelConfig, ModelParams, Variant};
use magnn::synthetic::{synthetic_split, SyntheticConfig};
use magnn::Precision;
use magnn_ffi::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Fixture {
    _dir: tempfile::TempDir,
    dataset: PathBuf,
    checkpoint: PathBuf,
    config: ModelConfig,
    params: ModelParams<f64>,
}

fn fixture(users: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let split = synthetic_split(&SyntheticConfig {
        users,
        items: 25,
        length: 18,
        seed: 4,
        ..SyntheticConfig::default()
    });
    let dataset = dir.path().join("dataset.bin");
    write_dataset(&split, &dataset).unwrap();
    let config = ModelConfig {
        dim: 8,
        variant: Variant::Full,
        precision: Precision::F64,
        ..ModelConfig::default()
    };
    let params = ModelParams::<f64>::init(&config, users, 25, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let checkpoint = dir.path().join("model.ckpt");
    save_checkpoint(&params, &config, &checkpoint).unwrap();
    Fixture {
        _dir: dir,
        dataset,
        checkpoint,
        config,
        params,
    }
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = magnn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn open_both(f: &Fixture) -> (*mut MagnnDataset, *mut MagnnModel) {
    let mut data = ptr::null_mut();
    assert_eq!(magnn_dataset_open(cpath(&f.dataset).as_ptr(), &mut data), MagnnStatus::Ok);
    let mut model = ptr::null_mut();
    assert_eq!(magnn_model_load(cpath(&f.checkpoint).as_ptr(), data, &mut model), MagnnStatus::Ok);
    (data, model)
}

#[test]
fn evaluate_and_recommend_match_the_library() {
    let f = fixture(12);
    let split = read_dataset(&f.dataset).unwrap();
    let graph = ItemGraph::build(&split.train, split.num_items(), &f.config.graph).unwrap();
    unsafe {
        let (data, model) = open_both(&f);
        assert_eq!(magnn_dataset_num_users(data), 12);
        assert_eq!(magnn_dataset_num_items(data), 25);
        for (split_c, mode) in [(MagnnSplit::Val, EvalMode::Val), (MagnnSplit::Test, EvalMode::Test)] {
            let mut m = MagnnMetrics::default();
            assert_eq!(magnn_evaluate(model, data, split_c, 10, &mut m), MagnnStatus::Ok);
            let want = evaluate(&f.params, &split, &graph, &f.config, mode, 10).unwrap();
            assert_eq!((m.recall, m.ndcg), (want.recall, want.ndcg));
            assert_eq!((m.evaluated_users, m.skipped_users), (want.evaluated_users, want.skipped_users));

            for user in 0..12 {
                let mut top = [u32::MAX; 7];
                let mut n = 0usize;
                assert_eq!(
                    magnn_recommend(model, data, split_c, user, 7, top.as_mut_ptr(), &mut n),
                    MagnnStatus::Ok
                );
                let ranked = rank_items(&f.params, &graph, &split, &f.config, user, mode).unwrap();
                assert_eq!(&top[..n], &ranked[..7]);
            }
        }
        magnn_model_free(model);
        magnn_dataset_free(data);
    }
}

#[test]
fn recommend_returns_fewer_when_candidates_run_out() {
    let f = fixture(5);
    unsafe {
        let (data, model) = open_both(&f);
        let mut top = vec![0u32; 100];
        let mut n = 0usize;
        assert_eq!(
            magnn_recommend(model, data, MagnnSplit::Test, 1, 100, top.as_mut_ptr(), &mut n),
            MagnnStatus::Ok
        );
        assert!(n < 25 && n > 0);
        let mut sorted = top[..n].to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), n);
        assert_eq!(
            magnn_recommend(model, data, MagnnSplit::Test, 1, 0, ptr::null_mut(), &mut n),
            MagnnStatus::Ok
        );
        assert_eq!(n, 0);
        magnn_model_free(model);
        magnn_dataset_free(data);
    }
}

#[test]
fn item_ids_round_trip() {
    let f = fixture(5);
    let split = read_dataset(&f.dataset).unwrap();
    unsafe {
        let (data, model) = open_both(&f);
        let s = magnn_dataset_item_id(data, 3);
        assert_eq!(CStr::from_ptr(s).to_str().unwrap(), split.items.get_index(3).unwrap());
        magnn_string_free(s);
        assert!(magnn_dataset_item_id(data, 25).is_null());
        magnn_model_free(model);
        magnn_dataset_free(data);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let f = fixture(6);
    let other = fixture(7);
    unsafe {
        let mut data = ptr::null_mut();
        let missing = CString::new("/no/such/dataset.bin").unwrap();
        assert_eq!(magnn_dataset_open(missing.as_ptr(), &mut data), MagnnStatus::NotFound);
        assert!(data.is_null());
        assert!(last_error().contains("/no/such/dataset.bin"));
        assert_eq!(magnn_dataset_open(ptr::null(), &mut data), MagnnStatus::NullPointer);
        assert_eq!(
            magnn_dataset_open(cpath(&f.dataset).as_ptr(), ptr::null_mut()),
            MagnnStatus::NullPointer
        );
        // a checkpoint is not a dataset
        assert_eq!(magnn_dataset_open(cpath(&f.checkpoint).as_ptr(), &mut data), MagnnStatus::Format);

        let (data, model) = open_both(&f);
        let (other_data, other_model) = open_both(&other);
        let mut wrong = ptr::null_mut();
        assert_eq!(
            magnn_model_load(cpath(&f.checkpoint).as_ptr(), other_data, &mut wrong),
            MagnnStatus::Incompatible
        );
        assert!(wrong.is_null());
        let mut m = MagnnMetrics::default();
        assert_eq!(magnn_evaluate(model, other_data, MagnnSplit::Test, 10, &mut m), MagnnStatus::Incompatible);
        assert_eq!(magnn_evaluate(model, data, MagnnSplit::Test, 0, &mut m), MagnnStatus::InvalidArgument);
        assert_eq!(magnn_evaluate(ptr::null(), data, MagnnSplit::Test, 10, &mut m), MagnnStatus::NullPointer);
        let mut top = [0u32; 3];
        let mut n = 0;
        assert_eq!(
            magnn_recommend(model, data, MagnnSplit::Test, 6, 3, top.as_mut_ptr(), &mut n),
            MagnnStatus::InvalidArgument
        );
        assert!(last_error().contains("user 6"));
        assert_eq!(
            magnn_recommend(model, data, MagnnSplit::Test, 0, 3, ptr::null_mut(), &mut n),
            MagnnStatus::NullPointer
        );
        magnn_model_free(other_model);
        magnn_dataset_free(other_data);
        magnn_model_free(model);
        magnn_dataset_free(data);
        magnn_model_free(ptr::null_mut());
        magnn_dataset_free(ptr::null_mut());
    }
}

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_shared_library() {
    let lib_dir = target_dir();
    let so = lib_dir.join("libmagnn_ffi.so");
    if !so.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or shared library at {}", so.display());
        return;
    }
    let f = fixture(9);
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = f._dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lmagnn_ffi")
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe)
        .arg(&f.dataset)
        .arg(&f.checkpoint)
        .env("LD_LIBRARY_PATH", &lib_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let split = read_dataset(&f.dataset).unwrap();
    let graph = ItemGraph::build(&split.train, split.num_items(), &f.config.graph).unwrap();
    let want = evaluate(&f.params, &split, &graph, &f.config, EvalMode::Test, 10).unwrap();
    let top = rank_items(&f.params, &graph, &split, &f.config, 0, EvalMode::Test).unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(fields[0].parse::<f64>().unwrap(), want.recall);
    assert_eq!(fields[1].parse::<f64>().unwrap(), want.ndcg);
    assert_eq!(fields[2].parse::<usize>().unwrap(), want.evaluated_users);
    let got: Vec<u32> = fields[3..].iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(got, top[..5]);
}
