use lsx_autodiff::Tensor;
use lsx_core::datasets::*;
use lsx_core::logic::*;
use proptest::prelude::*;

fn schema(slots: usize) -> ConceptSchema {
    let mut s = ConceptSchema::clevr();
    s.slots = slots;
    s
}

const SHAPE: usize = 0;
const SIZE: usize = 1;
const MATERIAL: usize = 2;
const COLOR: usize = 3;
const PRESENCE: usize = 15;

fn c(g: usize, v: usize) -> Condition {
    Condition::new(g, v)
}

fn col(s: &ConceptSchema, g: usize, v: usize) -> usize {
    s.column(c(g, v))
}

/// Exhaustive injective assignments.
fn brute_validity(rule: &Rule, z: &[f64], s: &ConceptSchema) -> f64 {
    fn go(rule: &Rule, z: &[f64], s: &ConceptSchema, o: usize, used: &mut Vec<bool>) -> f64 {
        if o == rule.objects().len() {
            return 1.0;
        }
        let a = s.attributes();
        let mut best: f64 = 0.0;
        for slot in 0..s.slots {
            if used[slot] {
                continue;
            }
            let row = &z[slot * a..(slot + 1) * a];
            let mut v = row[PRESENCE];
            for &cond in &rule.objects()[o] {
                v *= row[s.column(cond)];
            }
            used[slot] = true;
            best = best.max(v * go(rule, z, s, o + 1, used));
            used[slot] = false;
        }
        best
    }
    go(rule, z, s, 0, &mut vec![false; s.slots])
}

#[test]
fn text_round_trip_and_paper_notation() {
    let s = schema(10);
    let r = Rule::new(1, vec![vec![c(COLOR, 3), c(SHAPE, 0)]]).unwrap();
    assert_eq!(r.to_text(&s), "class1(X):-in(O1,X),shape(O1,cube),color(O1,green)");
    let parsed = Rule::parse("class1(X):- in(O1,X),color(O1,green),shape(O1,cube).", &s).unwrap();
    assert_eq!(parsed, r);
    let two = Rule::new(0, vec![vec![c(COLOR, 1)], vec![c(SIZE, 0), c(SHAPE, 1)]]).unwrap();
    assert_eq!(Rule::parse(&two.to_text(&s), &s).unwrap(), two);
    for bad in [
        "class1(X) in(O1,X)",
        "class1(X):-color(O1,green)",
        "class1(X):-in(O1,X),color(O1,pink)",
        "class1(X):-in(O1,X),color(O1,red),color(O1,blue)",
        "klass1(X):-in(O1,X),color(O1,red)",
    ] {
        assert!(Rule::parse(bad, &s).is_err(), "{bad}");
    }
}

#[test]
fn rule_invariants() {
    assert!(Rule::new(0, vec![]).is_err());
    assert!(Rule::new(0, vec![vec![]]).is_err());
    assert!(Rule::new(0, vec![vec![c(COLOR, 1), c(COLOR, 2)]]).is_err());
    let a = Rule::new(0, vec![vec![c(COLOR, 1)], vec![c(SHAPE, 2), c(SIZE, 0)]]).unwrap();
    let b = Rule::new(0, vec![vec![c(SIZE, 0), c(SHAPE, 2)], vec![c(COLOR, 1)]]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn propositionalize_worked_example() {
    let s = schema(10);
    let a = s.attributes();
    let mut mask = vec![0.0; 10 * a];
    mask[col(&s, COLOR, 3)] = 1.0; // green
    mask[col(&s, SHAPE, 0)] = 1.0; // cube
    mask[PRESENCE] = 1.0;
    mask[4 * a + col(&s, COLOR, 1)] = 1.0; // red
    let rules = propositionalize(&mask, 1, &s, Caps::default());
    assert_eq!(rules.len(), 7);
    let texts: Vec<String> = rules.iter().map(|r| r.to_text(&s)).collect();
    assert!(texts.contains(&"class1(X):-in(O1,X),shape(O1,cube),color(O1,green),in(O2,X),color(O2,red)".into())
        || texts.contains(&"class1(X):-in(O1,X),color(O1,red),in(O2,X),shape(O2,cube),color(O2,green)".into()));
    // one object, one attribute
    let mut one = vec![0.0; 10 * a];
    one[col(&s, SIZE, 1)] = 1.0;
    assert_eq!(propositionalize(&one, 0, &s, Caps::default()).len(), 1);
    assert!(propositionalize(&vec![0.0; 10 * a], 0, &s, Caps::default()).is_empty());
    // presence alone never yields a rule
    let mut p = vec![0.0; 10 * a];
    p[PRESENCE] = 1.0;
    assert!(propositionalize(&p, 0, &s, Caps::default()).is_empty());
}

#[test]
fn propositionalize_attribute_cap() {
    let s = schema(10);
    let a = s.attributes();
    let mut mask = vec![0.0; 10 * a];
    mask[col(&s, COLOR, 1)] = 1.0;
    mask[col(&s, SHAPE, 2)] = 1.0;
    mask[a + col(&s, SIZE, 0)] = 1.0;
    mask[a + col(&s, MATERIAL, 1)] = 1.0;
    let caps = Caps {
        max_objects: 4,
        max_attrs: 1,
    };
    assert_eq!(propositionalize(&mask, 0, &s, caps).len(), 8);
}

/// Independent count: sum over object subsets of the product of capped
/// attribute-subset counts.
fn closed_form(marks: &[usize], caps: Caps) -> usize {
    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }
    let per: Vec<usize> = marks.iter().map(|&m| (1..=m.min(caps.max_attrs)).map(|k| binom(m, k)).sum()).collect();
    let n = marks.len();
    (1u32..(1 << n))
        .filter(|b| b.count_ones() as usize <= caps.max_objects)
        .map(|b| (0..n).filter(|i| b & (1 << i) != 0).map(|i| per[i]).product::<usize>())
        .sum()
}

#[test]
fn ground_rule_examples() {
    let s = schema(3);
    let a = s.attributes();
    let mut z = vec![0.0; 3 * a];
    for slot in 0..3 {
        z[slot * a + PRESENCE] = 1.0;
    }
    z[2 * a + col(&s, COLOR, 1)] = 0.8;
    z[col(&s, COLOR, 1)] = 0.3;
    let r = Rule::new(0, vec![vec![c(COLOR, 1)]]).unwrap();
    let target = ground_rule(&r, &z, &s);
    assert_eq!(target.iter().sum::<f64>(), 1.0);
    assert_eq!(target[2 * a + col(&s, COLOR, 1)], 1.0);
}

#[test]
fn validity_examples() {
    let s = schema(2);
    let a = s.attributes();
    let mut z = vec![0.0; 2 * a];
    z[PRESENCE] = 1.0;
    z[a + PRESENCE] = 1.0;
    z[col(&s, COLOR, 1)] = 0.9;
    z[a + col(&s, COLOR, 1)] = 0.2;
    let red = Rule::new(0, vec![vec![c(COLOR, 1)]]).unwrap();
    assert!((rule_validity(&red, &z, &s) - 0.9).abs() < 1e-15);
    let mut single = vec![0.0; 2 * a];
    single[PRESENCE] = 1.0;
    single[col(&s, COLOR, 1)] = 1.0;
    let two = Rule::new(0, vec![vec![c(COLOR, 1)], vec![c(COLOR, 1)]]).unwrap();
    assert_eq!(rule_validity(&two, &single, &s), 0.0);
    let mut exact = vec![0.0; 2 * a];
    exact[PRESENCE] = 1.0;
    exact[col(&s, SHAPE, 0)] = 1.0;
    exact[col(&s, COLOR, 3)] = 1.0;
    let gc = Rule::new(0, vec![vec![c(COLOR, 3), c(SHAPE, 0)]]).unwrap();
    assert_eq!(rule_validity(&gc, &exact, &s), 1.0);
}

fn toy_set(s: &ConceptSchema, rows: Vec<(usize, Vec<usize>)>) -> LabeledSet {
    let a = s.attributes();
    let n = rows.len();
    let mut data = vec![0.0; n * s.slots * a];
    let mut labels = Vec::new();
    for (i, (y, cols)) in rows.into_iter().enumerate() {
        data[i * s.slots * a + PRESENCE] = 1.0;
        for cc in cols {
            data[i * s.slots * a + cc] = 1.0;
        }
        labels.push(y);
    }
    LabeledSet::new(
        Tensor::new(vec![n, s.slots, a], data).unwrap(),
        labels,
        (0..n as u64).collect(),
        Meta {
            kind: DatasetKind::ConceptHans,
            classes: 2,
            confounded: false,
        },
    )
    .unwrap()
}

#[test]
fn scoring_and_selection() {
    let s = schema(1);
    let red = col(&s, COLOR, 1);
    let cube = col(&s, SHAPE, 0);
    let set = toy_set(&s, vec![(0, vec![red, cube]), (0, vec![red]), (1, vec![cube])]);
    let r_red = Rule::new(0, vec![vec![c(COLOR, 1)]]).unwrap();
    let r_cube = Rule::new(0, vec![vec![c(SHAPE, 0)]]).unwrap();
    let r_both = Rule::new(0, vec![vec![c(SHAPE, 0), c(COLOR, 1)]]).unwrap();
    let mut cands = CandidateSet::new(2, Caps::default());
    cands.extend([r_red.clone(), r_cube.clone(), r_both.clone(), r_red.clone()]);
    cands.extend([Rule::new(1, vec![vec![c(SHAPE, 0)]]).unwrap()]);
    assert_eq!(cands.len(0), 3);
    let scores = score_candidates(&cands, &set, &s, Aggregation::Mean).unwrap();
    let get = |r: &Rule| scores[0].iter().find(|x| &x.rule == r).unwrap().clone();
    // hand values: red 1,1 | 0 ; cube 1,0 | 1 ; both 1,0 | 0
    assert!((get(&r_red).rho - 1.0).abs() < 1e-12);
    assert!((get(&r_cube).rho - (0.5 - 1.0)).abs() < 1e-12);
    assert!((get(&r_both).rho - 0.5).abs() < 1e-12);
    let best = select_best(&scores).unwrap();
    assert_eq!(best[0], r_red);
    // a single candidate is selected whatever its score
    assert_eq!(best[1], Rule::new(1, vec![vec![c(SHAPE, 0)]]).unwrap());
    let everywhere = toy_set(&s, vec![(0, vec![red]), (1, vec![red])]);
    let sc = score_candidates(&cands, &everywhere, &s, Aggregation::Mean).unwrap();
    assert_eq!(sc[0].iter().find(|x| x.rule == r_red).unwrap().rho, 0.0);
    let only0 = toy_set(&s, vec![(0, vec![red])]);
    assert!(matches!(
        score_candidates(&cands, &only0, &s, Aggregation::Mean),
        Err(lsx_core::Error::ClassAbsent(1))
    ));
    assert!(matches!(
        select_best(&[vec![]]),
        Err(lsx_core::Error::EmptyCandidates(0))
    ));
}

#[test]
fn tie_break_prefers_fewer_conditions() {
    let short = Rule::new(0, vec![vec![c(COLOR, 2)]]).unwrap();
    let long = Rule::new(0, vec![vec![c(COLOR, 1), c(SHAPE, 0), c(SIZE, 1)]]).unwrap();
    let score = |rule: &Rule, rho: f64| RuleScore {
        rule: rule.clone(),
        rho_pos: rho,
        rho_neg: 0.0,
        rho,
    };
    let picked = select_best(&[vec![score(&long, 0.9), score(&short, 0.9)]]).unwrap();
    assert_eq!(picked[0], short);
    let picked = select_best(&[vec![score(&long, 0.2), score(&short, 0.9), score(&long, 0.1)]]).unwrap();
    assert_eq!(picked[0], short);
}

#[test]
fn aggregation_variants_bound_the_mean() {
    let s = schema(1);
    let red = col(&s, COLOR, 1);
    let set = toy_set(&s, vec![(0, vec![red]), (0, vec![]), (1, vec![red]), (1, vec![])]);
    let mut cands = CandidateSet::new(2, Caps::default());
    cands.extend([Rule::new(0, vec![vec![c(COLOR, 1)]]).unwrap(), Rule::new(1, vec![vec![c(COLOR, 1)]]).unwrap()]);
    let mean = &score_candidates(&cands, &set, &s, Aggregation::Mean).unwrap()[0][0];
    let min = &score_candidates(&cands, &set, &s, Aggregation::Min).unwrap()[0][0];
    let soft = &score_candidates(&cands, &set, &s, Aggregation::SoftMin(0.1)).unwrap()[0][0];
    assert_eq!((mean.rho_pos, mean.rho_neg), (0.5, 0.5));
    assert_eq!((min.rho_pos, min.rho_neg), (0.0, 1.0));
    assert!(soft.rho_pos < mean.rho_pos && soft.rho_pos >= min.rho_pos);
}

fn arb_rule(max_objects: usize) -> impl Strategy<Value = Rule> {
    let obj = proptest::collection::btree_map(0usize..4, 0usize..8, 1..=3).prop_map(|m| {
        m.into_iter()
            .map(|(g, v)| c(g, v % [3, 2, 2, 8][g]))
            .collect::<Vec<_>>()
    });
    proptest::collection::vec(obj, 1..=max_objects).prop_map(|o| Rule::new(0, o).unwrap())
}

fn arb_z(slots: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..=1.0, slots * 16)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn validity_matches_brute_force(slots in 1usize..=5, rule in arb_rule(3), seed in any::<u64>()) {
        let s = schema(slots);
        let mut rng = lsx_core::seed::rng(seed, "z");
        let z: Vec<f64> = (0..slots * 16).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
        let v = rule_validity(&rule, &z, &s);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - brute_validity(&rule, &z, &s)).abs() < 1e-12);
    }

    #[test]
    fn validity_is_slot_permutation_invariant(z in arb_z(4), rule in arb_rule(3), perm in Just(vec![2usize, 0, 3, 1])) {
        let s = schema(4);
        let a = 16;
        let mut p = vec![0.0; z.len()];
        for (i, &j) in perm.iter().enumerate() {
            p[i * a..(i + 1) * a].copy_from_slice(&z[j * a..(j + 1) * a]);
        }
        prop_assert!((rule_validity(&rule, &z, &s) - rule_validity(&rule, &p, &s)).abs() < 1e-12);
    }

    #[test]
    fn grounding_is_permutation_equivariant(z in arb_z(3), rule in arb_rule(2)) {
        let s = schema(3);
        let a = 16;
        let perm = [1usize, 2, 0];
        let mut p = vec![0.0; z.len()];
        for (i, &j) in perm.iter().enumerate() {
            p[i * a..(i + 1) * a].copy_from_slice(&z[j * a..(j + 1) * a]);
        }
        let gz = ground_rule(&rule, &z, &s);
        let gp = ground_rule(&rule, &p, &s);
        // only meaningful when the best assignment is unique
        let v = rule_validity(&rule, &z, &s);
        let unique = {
            let mut second: f64 = 0.0;
            let mut count = 0;
            let objs = rule.objects().len();
            let mut slots: Vec<usize> = (0..objs).collect();
            fn perms(n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
                if cur.len() == k { out.push(cur.clone()); return; }
                for i in 0..n { if !cur.contains(&i) { cur.push(i); perms(n, k, cur, out); cur.pop(); } }
            }
            let mut all = Vec::new();
            perms(3, objs, &mut Vec::new(), &mut all);
            for asg in all {
                let val: f64 = asg.iter().zip(rule.objects()).map(|(&sl, conds)| {
                    conds.iter().fold(z[sl * a + PRESENCE], |acc, &cc| acc * z[sl * a + s.column(cc)])
                }).product();
                if (val - v).abs() < 1e-12 { count += 1; } else { second = second.max(val); }
            }
            slots.clear();
            count == 1 && v - second > 1e-9
        };
        if unique {
            for (i, &j) in perm.iter().enumerate() {
                prop_assert_eq!(&gp[i * a..(i + 1) * a], &gz[j * a..(j + 1) * a]);
            }
        }
    }

    #[test]
    fn adding_a_condition_never_increases_validity(z in arb_z(3), rule in arb_rule(2), g in 0usize..4, v in 0usize..8) {
        let s = schema(3);
        let mut objects = rule.objects().to_vec();
        if objects[0].iter().all(|cc| cc.group != g) {
            objects[0].push(c(g, v % [3, 2, 2, 8][g]));
            let bigger = Rule::new(0, objects).unwrap();
            prop_assert!(rule_validity(&bigger, &z, &s) <= rule_validity(&rule, &z, &s) + 1e-15);
        }
    }

    #[test]
    fn candidate_count_matches_closed_form(marks in proptest::collection::vec(1usize..=4, 1..=5), max_objects in 1usize..=4, max_attrs in 1usize..=3) {
        // Object o marks value o in its first groups, so no two objects share
        // a condition and no two enumerated rules coincide.
        let vals: &[&str] = &["a", "b", "c", "d", "e"];
        let s = ConceptSchema::new(5, &[("p", vals), ("q", vals), ("r", vals), ("t", vals)], true);
        let a = s.attributes();
        let mut mask = vec![0.0; 5 * a];
        for (o, &m) in marks.iter().enumerate() {
            for g in 0..m {
                mask[o * a + s.column(c(g, o))] = 1.0;
            }
        }
        let caps = Caps { max_objects, max_attrs };
        let rules = propositionalize(&mask, 0, &s, caps);
        let mut dedup = rules.clone();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), rules.len());
        prop_assert_eq!(rules.len(), closed_form(&marks, caps));
    }
}
