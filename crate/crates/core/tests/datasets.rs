use std::collections::HashSet;
use std::io::Write;

use lsx_autodiff::Tensor;
use lsx_core::datasets::*;
use rand::Rng;

fn write(dir: &std::path::Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::File::create(&p).unwrap().write_all(bytes).unwrap();
    p
}

fn fixture(n: usize) -> (Vec<u8>, Vec<u8>) {
    let pixels: Vec<u8> = (0..n * 28 * 28).map(|i| (i * 37 % 256) as u8).collect();
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    (
        encode_idx(IMAGES_MAGIC, &[n, 28, 28], &pixels),
        encode_idx(LABELS_MAGIC, &[n], &labels),
    )
}

/// Upper 1% point of chi-square via the Wilson-Hilferty approximation.
fn chi2_critical_99(df: f64) -> f64 {
    let z = 2.326_347_874;
    let c = 2.0 / (9.0 * df);
    df * (1.0 - c + z * c.sqrt()).powi(3)
}

fn chi2_independence(table: &[Vec<f64>]) -> (f64, f64) {
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..table[0].len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = rows.iter().sum();
    let mut stat = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &o) in r.iter().enumerate() {
            let e = rows[i] * cols[j] / total;
            stat += (o - e).powi(2) / e;
        }
    }
    let df = ((rows.len() - 1) * (cols.len() - 1)) as f64;
    (stat, df)
}

fn synthetic_digits(n: usize, seed: u64) -> LabeledSet {
    let mut rng = lsx_core::seed::rng(seed, "test/digits");
    let data = (0..n * 784).map(|_| if rng.gen_bool(0.2) { rng.gen::<f64>() } else { 0.0 }).collect();
    LabeledSet::new(
        Tensor::new(vec![n, 1, 28, 28], data).unwrap(),
        (0..n).map(|i| i % 10).collect(),
        (0..n as u64).collect(),
        Meta {
            kind: DatasetKind::Mnist,
            classes: 10,
            confounded: false,
        },
    )
    .unwrap()
}

#[test]
fn idx_fixture_pixels_are_bytes_over_255() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = fixture(10);
    let ip = write(dir.path(), "img", &img);
    let lp = write(dir.path(), "lab", &lab);
    let set = load_idx(&ip, &lp).unwrap();
    assert_eq!(set.inputs().shape(), &[10, 1, 28, 28]);
    assert_eq!(set.inputs().data()[0], img[16] as f64 / 255.0);
    assert_eq!(set.inputs().data()[5], img[21] as f64 / 255.0);
    assert_eq!(set.labels()[3], 3);
}

#[test]
fn idx_gzip_is_transparent() {
    use flate2::write::GzEncoder;
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = fixture(4);
    let mut gz = GzEncoder::new(Vec::new(), flate2::Compression::default());
    gz.write_all(&img).unwrap();
    let ip = write(dir.path(), "img.gz", &gz.finish().unwrap());
    let lp = write(dir.path(), "lab", &lab);
    assert_eq!(load_idx(&ip, &lp).unwrap().len(), 4);
}

#[test]
fn idx_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = fixture(10);
    let ip = write(dir.path(), "img", &img);
    let lp = write(dir.path(), "lab", &lab);
    // labels file carrying the image magic
    let wrong = write(dir.path(), "wrong", &encode_idx(IMAGES_MAGIC, &[10], &[0; 10]));
    let err = load_idx(&ip, &wrong).unwrap_err().to_string();
    assert!(err.contains("bad magic"), "{err}");
    let short = write(dir.path(), "short", &img[..img.len() - 5]);
    assert!(load_idx(&short, &lp).unwrap_err().to_string().contains("truncated"));
    let (_, lab9) = fixture(9);
    let lp9 = write(dir.path(), "lab9", &lab9);
    assert!(load_idx(&ip, &lp9).unwrap_err().to_string().contains("9 labels for 10 images"));
}

#[test]
fn bundled_digits_load() {
    let set = load_dir(&default_dir()).unwrap();
    assert_eq!(set.inputs().shape()[1..], [1, 28, 28]);
    assert!(set.len() == 10_000 || set.len() == 60_000);
    let (pool, test) = holdout(&set, 2000, 0);
    assert_eq!(pool.len() + test.len(), set.len());
    let ids: HashSet<u64> = pool.ids().iter().copied().collect();
    assert!(test.ids().iter().all(|id| !ids.contains(id)));
}

#[test]
fn decoy_train_shades() {
    let base = synthetic_digits(40, 1);
    let d = make_decoy(&base, Mode::Train, 3).unwrap();
    assert!(d.meta().confounded);
    for i in 0..d.len() {
        let img = d.sample(i);
        let y = d.labels()[i];
        let corners = [(0, 0), (0, 24), (24, 0), (24, 24)];
        let hits: Vec<_> = corners
            .iter()
            .filter(|&&(r, c)| (0..4).all(|a| (0..4).all(|b| img[(r + a) * 28 + c + b] == decoy_shade(y))))
            .collect();
        assert!(!hits.is_empty(), "sample {i}");
    }
    assert_eq!(decoy_shade(0), 1.0);
    assert!((decoy_shade(9) - 30.0 / 255.0).abs() < 1e-15);
    assert!((decoy_shade(9) - 0.1176).abs() < 1e-4);
}

#[test]
fn decoy_test_shades_vary_with_seed_and_ignore_label() {
    let base = synthetic_digits(10_000, 2);
    let a = make_decoy(&base.select(&[0]), Mode::Test, 1).unwrap();
    let b = make_decoy(&base.select(&[0]), Mode::Test, 2).unwrap();
    assert_ne!(a.inputs(), b.inputs());
    let d = make_decoy(&base, Mode::Test, 5).unwrap();
    // Recover the shade from the corner whose 16 cells agree.
    let mut table = vec![vec![0.0; 8]; 10];
    for i in 0..d.len() {
        let img = d.sample(i);
        let shade = [(0, 0), (0, 24), (24, 0), (24, 24)]
            .iter()
            .map(|&(r, c)| img[r * 28 + c])
            .find(|&v| {
                [(0, 0), (0, 24), (24, 0), (24, 24)]
                    .iter()
                    .any(|&(r, c)| (0..16).all(|k| img[(r + k / 4) * 28 + c + k % 4] == v))
            })
            .unwrap();
        let bin = ((shade * 255.0).round() as usize / 32).min(7);
        table[d.labels()[i]][bin] += 1.0;
    }
    let (stat, df) = chi2_independence(&table);
    assert!(stat < chi2_critical_99(df), "chi2 {stat} df {df}");
}

#[test]
fn color_train_and_test() {
    let base = synthetic_digits(10_000, 4);
    let c = make_color(&base, Mode::Train, 0).unwrap();
    assert_eq!(c.inputs().shape(), &[10_000, 3, 28, 28]);
    for i in 0..50 {
        let src = base.sample(i);
        let dst = c.sample(i);
        let tint = PALETTE[base.labels()[i]];
        for p in 0..784 {
            for ch in 0..3 {
                assert_eq!(dst[ch * 784 + p], src[p] * tint[ch]);
            }
        }
    }
    let t = make_color(&base, Mode::Test, 0).unwrap();
    let mut table = vec![vec![0.0; 10]; 10];
    for i in 0..t.len() {
        let src = base.sample(i);
        let p = src.iter().position(|&v| v > 0.0).unwrap();
        let rgb: Vec<f64> = (0..3).map(|ch| t.sample(i)[ch * 784 + p] / src[p]).collect();
        let color = PALETTE.iter().position(|c| c.iter().zip(&rgb).all(|(a, b)| (a - b).abs() < 1e-12)).unwrap();
        table[t.labels()[i]][color] += 1.0;
    }
    let (stat, df) = chi2_independence(&table);
    assert!(stat < chi2_critical_99(df), "chi2 {stat} df {df}");
}

fn objects_of(set: &LabeledSet, i: usize, schema: &ConceptSchema) -> Vec<Object> {
    let a = schema.attributes();
    set.sample(i)
        .chunks(a)
        .filter(|row| row[a - 1] == 1.0)
        .map(|row| {
            (0..schema.groups.len())
                .map(|g| {
                    let off = schema.group_offset(g);
                    (0..schema.groups[g].values.len()).find(|&v| row[off + v] == 1.0).unwrap()
                })
                .collect()
        })
        .collect()
}

#[test]
fn concept_hans_structure() {
    let spec = ConceptHansSpec::clevr_hans3();
    let schema = &spec.schema;
    assert_eq!(schema.attributes(), 16);
    let train = make_concept_hans(&spec, 200, Mode::Train, 9).unwrap();
    assert_eq!(train.inputs().shape(), &[600, 10, 16]);
    assert!(train.meta().confounded);
    let a = schema.attributes();
    for i in 0..train.len() {
        for row in train.sample(i).chunks(a) {
            for g in 0..schema.groups.len() {
                let off = schema.group_offset(g);
                let s: f64 = row[off..off + schema.groups[g].values.len()].iter().sum();
                assert_eq!(s, row[a - 1]);
            }
        }
        let objs = objects_of(&train, i, schema);
        let y = train.labels()[i];
        for r in &spec.rules {
            assert_eq!(r.satisfied_by(&objs), r.class == y);
        }
        if y == 0 {
            // every large cube of class 0 is gray in training data
            assert!(objs.iter().filter(|o| o[0] == 0 && o[1] == 0).all(|o| o[3] == 0));
            assert!(objs.iter().any(|o| o[0] == 0 && o[1] == 0));
        }
    }
    let test = make_concept_hans(&spec, 600, Mode::Test, 9).unwrap();
    assert!(!test.meta().confounded);
    let mut colors = [0usize; 8];
    for i in (0..test.len()).filter(|&i| test.labels()[i] == 0) {
        for o in objects_of(&test, i, schema).iter().filter(|o| o[0] == 0 && o[1] == 0) {
            colors[o[3]] += 1;
        }
    }
    assert!(colors.iter().all(|&c| c > 30), "{colors:?}");
    assert_eq!(make_concept_hans(&spec, 3000, Mode::Train, 1).unwrap().len(), 9000);
}

#[test]
fn concept_hans_is_seed_deterministic_and_rejects_bad_rules() {
    let spec = ConceptHansSpec::clevr_hans3();
    let a = make_concept_hans(&spec, 20, Mode::Train, 4).unwrap();
    let b = make_concept_hans(&spec, 20, Mode::Train, 4).unwrap();
    assert_eq!(a, b);
    let mut bad = spec.clone();
    bad.rules[0].objects[0].push(Condition::new(0, 2));
    assert!(matches!(
        make_concept_hans(&bad, 5, Mode::Train, 0),
        Err(lsx_core::Error::Unsatisfiable(_))
    ));
}

#[test]
fn cub_noise_statistics() {
    let protos = cub_prototypes(10, 28, 0);
    assert!(protos.iter().all(|p| p.len() == 112 && p.iter().map(|&b| b as usize).sum::<usize>() == 28));
    let set = make_cub_noisy(&protos, 1000, 3).unwrap();
    assert_eq!(set.len(), 10_000);
    let (mut zeros, mut flipped) = (0usize, 0usize);
    for i in 0..set.len() {
        let p = &protos[set.labels()[i]];
        for (j, &v) in set.sample(i).iter().enumerate() {
            if p[j] == 1 {
                assert_eq!(v, 1.0);
            } else {
                zeros += 1;
                flipped += (v == 1.0) as usize;
            }
        }
    }
    let freq = flipped as f64 / zeros as f64;
    assert!((freq - 0.25).abs() < 0.02, "{freq}");
    assert_eq!(make_cub_noisy(&protos, 30, 0).unwrap().len(), 300);
}

#[test]
fn split_relations() {
    let pool = synthetic_digits(400, 7);
    let held = synthetic_digits(100, 8);
    let held = LabeledSet::new(
        held.inputs().clone(),
        held.labels().to_vec(),
        (1000..1100).collect(),
        held.meta(),
    )
    .unwrap();
    for relation in [CriticRelation::Subset, CriticRelation::Disjoint, CriticRelation::DeconfoundedHeldout] {
        let policy = SplitPolicy {
            learner_size: 200,
            critic_size: 50,
            relation,
        };
        let s = policy.apply(&pool, Some(&held), 1).unwrap();
        assert_eq!((s.learner.len(), s.critic.len()), (200, 50));
        assert_eq!(s.critic.class_counts(), vec![5; 10]);
        let l: HashSet<u64> = s.learner.ids().iter().copied().collect();
        let inside = s.critic.ids().iter().filter(|id| l.contains(id)).count();
        match relation {
            CriticRelation::Subset => assert_eq!(inside, 50),
            _ => assert_eq!(inside, 0),
        }
        assert_eq!(s.union(0).unwrap().len(), 250);
    }
}

#[test]
fn cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let set = make_concept_hans(&ConceptHansSpec::clevr_hans3(), 5, Mode::Test, 11).unwrap();
    let path = dir.path().join("hans.bin");
    cache::save(&path, &set, 11).unwrap();
    let (back, seed) = cache::load(&path).unwrap();
    assert_eq!(back, set);
    assert_eq!(seed, 11);
    let meta = std::fs::read_to_string(dir.path().join("hans.bin.meta")).unwrap();
    assert_eq!(meta, "kind=concept-hans\nseed=11\nN=15\nK=3\nconfounded=false\n");
}
