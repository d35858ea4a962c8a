use crate::data::ConditionTag;
use crate::encoders::Variant;

use super::*;

fn write_config(contents: &str) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, contents).unwrap();
    (dir, path)
}

#[test]
fn defaults_follow_the_standard_recipe() {
    let config = RunConfig::default();
    assert_eq!(config.seed, 0);
    assert_eq!(config.n_per_combo, 50);
    assert_eq!(config.batch_size, 64);
    assert_eq!(config.epochs, 20);
    assert_eq!(config.lr, 3e-3);
    assert_eq!(config.weight_decay, 0.0);
    assert_eq!(config.warmup_ratio, 0.03);
    assert_eq!(config.k_shots, vec![5, 10, 15]);
    assert_eq!(
        config.resolved_conditions(),
        vec![ConditionTag::Color, ConditionTag::Shape, ConditionTag::Both]
    );
    assert_eq!(config.train_config(), crate::train::TrainConfig::new(0));
}

#[test]
fn files_override_defaults_and_flags_override_files() {
    let (_dir, path) = write_config(
        "# run settings\n\
         seed = 7\n\
         \n\
         variant = mllm\n\
         conditions = color, both\n\
         lr = 0.001\n\
         k_shots = 5,15\n",
    );
    let mut config = RunConfig::from_file(&path).unwrap();
    assert_eq!(config.seed, 7);
    assert_eq!(config.variant, Variant::Mllm);
    assert_eq!(config.conditions, vec![ConditionTag::Color, ConditionTag::Both]);
    assert_eq!(config.lr, 0.001);
    assert_eq!(config.k_shots, vec![5, 15]);
    assert_eq!(config.epochs, 20, "untouched keys keep defaults");

    // A later CLI flag beats the file.
    config.set("seed", "9").unwrap();
    assert_eq!(config.seed, 9);
}

#[test]
fn continuous_runs_get_the_continuous_condition_set() {
    let mut config = RunConfig::default();
    config.set("continuous", "true").unwrap();
    assert_eq!(
        config.resolved_conditions(),
        vec![ConditionTag::Continuous, ConditionTag::Shape]
    );
    config.set("conditions", "continuous").unwrap();
    assert_eq!(config.resolved_conditions(), vec![ConditionTag::Continuous]);
}

#[test]
fn unknown_keys_and_bad_values_are_named() {
    let mut config = RunConfig::default();
    let err = config.set("learning_rate", "0.01").unwrap_err().to_string();
    assert!(err.contains("unknown key") && err.contains("learning_rate"), "{err}");

    let err = config.set("epochs", "twenty").unwrap_err().to_string();
    assert!(err.contains("epochs") && err.contains("twenty"), "{err}");

    let err = config.set("conditions", "color,sound").unwrap_err().to_string();
    assert!(err.contains("sound"), "{err}");

    let err = config.set("variant", "resnet").unwrap_err().to_string();
    assert!(err.contains("clip"), "{err}");

    let (_dir, path) = write_config("seed 7\n");
    let err = RunConfig::from_file(&path).unwrap_err().to_string();
    assert!(err.contains("line 1"), "{err}");

    let (_dir, path) = write_config("seed = 7\nmystery = 3\n");
    assert!(RunConfig::from_file(&path).is_err());
}
