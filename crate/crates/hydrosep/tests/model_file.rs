use std::path::Path;

use hydrosep::model_file::{ModelFile, SCHEMA_VERSION};
use hydrosep_core::discriminative::build_aggregate;
use hydrosep_core::inference::train_device;
use hydrosep_core::shapes::Span;
use hydrosep_core::{ConsumptionMatrix, Device, DeviceModel, Dictionary, GibbsConfig, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trained_96x8() -> DeviceModel {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cols: Vec<Vec<f64>> = (0..8)
        .map(|j| {
            (0..96)
                .map(|i| {
                    if i / 12 == j {
                        rng.random::<f64>() + 0.1
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut init = Dictionary::from_dense_columns(96, &cols).unwrap();
    init.normalize_columns();
    let days: Vec<Vec<f64>> = (0..6)
        .map(|_| {
            (0..96)
                .map(|i| {
                    if i % 7 == 0 {
                        rng.random::<f64>() * 2.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let y =
        ConsumptionMatrix::new(Device::Shower, Matrix::from_columns(96, &days).unwrap()).unwrap();
    let cfg = GibbsConfig {
        samples: 30,
        burn_in: 10,
        em_iters: 2,
        ..GibbsConfig::default()
    };
    let (model, _) = train_device(&y, init, &cfg).unwrap();
    assert_eq!(model.dictionary.cols(), 8);
    model
}

#[test]
fn round_trip_is_bitwise() {
    let model = trained_96x8();
    let mut file = ModelFile::new(&[(model.clone(), Some(Span::new([1, 2]).unwrap()))]);
    file.set_compound(&build_aggregate(std::slice::from_ref(&model)).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.hsmodel.json");
    file.save(&path).unwrap();
    let back = ModelFile::load(&path).unwrap();
    assert_eq!(back, file);
    let models = back.device_models(&path).unwrap();
    assert_eq!(models[0], model);
    let agg = back.compound_model(&path).unwrap().unwrap();
    assert_eq!(agg, build_aggregate(&[model]).unwrap());
    assert_eq!(back.devices[0].span, vec![1, 2]);
}

fn saved_text() -> String {
    let file = ModelFile::new(&[(trained_96x8(), None)]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.hsmodel.json");
    file.save(&path).unwrap();
    std::fs::read_to_string(&path).unwrap()
}

#[test]
fn newer_version_is_rejected() {
    let text = saved_text().replacen(
        &format!("\"schema_version\":{SCHEMA_VERSION}"),
        &format!("\"schema_version\":{}", SCHEMA_VERSION + 1),
        1,
    );
    let err = ModelFile::parse(&text, Path::new("m")).unwrap_err();
    assert!(err.to_string().contains("schema version"), "{err}");
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn truncated_file_is_corrupt() {
    let text = saved_text();
    let err = ModelFile::parse(&text[..text.len() / 2], Path::new("m")).unwrap_err();
    assert!(err.to_string().contains("corrupt"), "{err}");
}

#[test]
fn non_unit_column_is_rejected() {
    let mut file = ModelFile::new(&[(trained_96x8(), None)]);
    let d = &mut file.devices[0].dictionary;
    let k = d.support[0][0];
    d.values[k] *= 1.01;
    let text = serde_json::to_string(&file).unwrap();
    let err = ModelFile::parse(&text, Path::new("m")).unwrap_err();
    assert!(err.to_string().contains("norm"), "{err}");
}
