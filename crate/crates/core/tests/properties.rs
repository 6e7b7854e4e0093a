use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use ndarray::{s, Array2};
use proptest::prelude::*;
use seafloor::atr::{associate, BernoulliStub, Contact, Detector, DetectorConfig, TemplateDetector};
use seafloor::cluster::*;
use seafloor::grid::{GeoGrid, GridGeometry};
use seafloor::image::{straight_track, Side, SidescanImage};
use seafloor::insert::{insert_contact, InsertConfig, InsertionRecord, ObjectModel, ObjectSpec, Placement};
use seafloor::perfmap::{run_monte_carlo, MonteCarloConfig, Tally};
use seafloor::repair::{flag_cells, flagged_set, in_swath, plan_revisit, FlagRule};
use seafloor::sim::{generate_mission_set, MissionConfig, SensorModel};
use seafloor::snippet::{extract_snippets, SnippetMode, SnippetSpec};

fn flat(pings: usize, bins: usize) -> SidescanImage<f64> {
    SidescanImage::new(
        "flat",
        Array2::from_elem((pings, bins), 0.4),
        0.05,
        0.1,
        Some(10.0),
        straight_track([0.0, 0.0], 0.0, pings, 0.1),
        Side::Starboard,
    )
    .unwrap()
}

fn cylinder() -> ObjectModel {
    ObjectModel::from_spec(&ObjectSpec::cylinder(), 0.02).unwrap()
}

fn small_missions() -> &'static Vec<seafloor::sim::Mission> {
    static M: OnceLock<Vec<seafloor::sim::Mission>> = OnceLock::new();
    M.get_or_init(|| generate_mission_set(4, &MissionConfig { pings: 200, ..Default::default() }).unwrap())
}

fn small_model() -> &'static (ClusterModel<f64>, TextureBank) {
    static M: OnceLock<(ClusterModel<f64>, TextureBank)> = OnceLock::new();
    M.get_or_init(|| {
        let bank = TextureBank::default();
        let spec = SnippetSpec::default();
        let snippets: Vec<_> =
            small_missions().iter().flat_map(|m| extract_snippets(&m.rendered.image, &spec, SnippetMode::Grid).unwrap()).collect();
        let f = feature_matrix(&snippets, &bank).unwrap();
        let cfg = KMeansConfig { clusters: 8, seed: 2, ..Default::default() };
        (train_clusterer(f.view(), FeatureExtractor::<f64>::info(&bank), &cfg).unwrap(), bank)
    })
}

// ---- rendering ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn rendered_intensity_stays_in_unit_range(seed in 0u64..1000, speckle in 0.0f64..2.0, gain in 0.5f64..4.0) {
        let sensor = SensorModel { max_slant_range: 20.0, speckle_strength: speckle, gain, ..Default::default() };
        let missions = generate_mission_set(seed, &MissionConfig { pings: 20, sensor }).unwrap();
        for m in missions {
            prop_assert!(m.rendered.image.intensities().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

// ---- detector ----

#[test]
fn detection_shifts_with_content() {
    let img = flat(400, 1200);
    let quiet = InsertConfig { respeckle: false, ..Default::default() };
    let place = |ping| Placement { ping, side: Side::Starboard, ground_range: 25.0, yaw: 0.3 };
    let (a, _) = insert_contact(&img, &cylinder(), place(150), 0, &quiet).unwrap();
    let k = 37;
    let (b, _) = insert_contact(&img, &cylinder(), place(150 + k), 0, &quiet).unwrap();
    let det = TemplateDetector::new(DetectorConfig { threshold: 0.3, ..Default::default() }).unwrap();
    let ca = det.detect(&a);
    let cb = det.detect(&b);
    assert!(!ca.is_empty());
    let key = |c: &Contact| (c.ping, c.bin);
    let shifted: Vec<_> = ca.iter().map(|c| (c.ping + k, c.bin)).collect();
    assert_eq!(shifted, cb.iter().map(key).collect::<Vec<_>>());
}

#[test]
fn raising_threshold_never_adds_contacts() {
    let m = &small_missions()[4].rendered.image;
    let counts: Vec<usize> = [0.2, 0.3, 0.4, 0.5, 0.6, 0.8]
        .iter()
        .map(|&t| TemplateDetector::new(DetectorConfig { threshold: t, ..Default::default() }).unwrap().detect(m).len())
        .collect();
    assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
}

fn record(e: f64, n: f64) -> InsertionRecord {
    InsertionRecord { name: "x".into(), ping: 0, side: Side::Starboard, ground_range: e, yaw: 0.0, pass_id: 0, e, n, shadow_length: 0.0 }
}

proptest! {
    #[test]
    fn association_books_each_contact_once(
        cs in proptest::collection::vec((0.0f64..20.0, 0.0f64..20.0), 0..12),
        rs in proptest::collection::vec((0.0f64..20.0, 0.0f64..20.0), 0..12),
        radius in 0.1f64..6.0,
    ) {
        let contacts: Vec<Contact> =
            cs.iter().map(|&(e, n)| Contact { ping: 0, bin: 0, e, n, confidence: 1.0, class: "x".into() }).collect();
        let records: Vec<_> = rs.iter().map(|&(e, n)| record(e, n)).collect();
        let a = associate(&contacts, &records, radius).unwrap();
        let used: Vec<usize> = a.matches.iter().filter_map(|m| m.contact).collect();
        let mut dedup = used.clone();
        dedup.sort_unstable();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), used.len());
        prop_assert_eq!(used.len() + a.false_alarms.len(), contacts.len());
        for m in &a.matches {
            if let (Some(c), Some(d)) = (m.contact, m.distance) {
                prop_assert!(d <= radius);
                let r = &records[m.insertion];
                prop_assert!(((contacts[c].e - r.e).hypot(contacts[c].n - r.n) - d).abs() < 1e-12);
            }
        }
    }
}

// ---- Monte-Carlo ----

#[test]
fn cell_tallies_do_not_depend_on_pass_order() {
    let img = flat(300, 1200);
    let cfg = MonteCarloConfig { passes: 6, contacts_per_pass: 5, seed: 9, ..Default::default() };
    let models = [cylinder()];
    let map = run_monte_carlo(&img, &models, &BernoulliStub { p: 0.5 }, &cfg).unwrap();
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_monte_carlo(&img, &models, &BernoulliStub { p: 0.5 }, &cfg).unwrap());
    assert_eq!(map, serial);

    // re-tally the trials from the last pass backwards
    let g = map.grid.geometry;
    let mut grid: GeoGrid<Tally> = GeoGrid::empty(g);
    for t in map.trials.iter().rev() {
        let (i, j) = g.cell_of(t.record.e, t.record.n).unwrap();
        let cell = grid.get_mut(i, j).unwrap().get_or_insert_with(Tally::default);
        cell.trials += 1;
        cell.successes += u32::from(t.detected);
    }
    assert_eq!(grid, map.grid);
}

#[test]
fn stub_pd_converges_within_three_sigma() {
    let img = flat(200, 1200);
    let p = 0.7;
    let runs = 100;
    let (mut misses, mut checked) = (0, 0);
    for seed in 0..runs {
        let cfg = MonteCarloConfig { passes: 30, contacts_per_pass: 10, cell_size: 1000.0, seed, ..Default::default() };
        let map = run_monte_carlo(&img, &[cylinder()], &BernoulliStub { p }, &cfg).unwrap();
        for t in map.grid.values().iter().flatten().filter(|t| t.trials >= 300) {
            checked += 1;
            let sigma = (p * (1.0 - p) / f64::from(t.trials)).sqrt();
            if (t.pd().unwrap() - p).abs() > 3.0 * sigma {
                misses += 1;
            }
        }
    }
    assert_eq!(checked, runs);
    assert!(misses <= 1, "{misses} of {runs} runs outside 3 sigma");
}

// ---- clustering ----

proptest! {
    #[test]
    fn z_scored_training_set(rows in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 4), 2..60)) {
        let data = Array2::from_shape_fn((rows.len(), 4), |(i, j)| rows[i][j]);
        let norm = Normalization::fit(data.view());
        let z = norm.apply_all(data.view());
        for d in 0..4 {
            let col = z.column(d);
            let mean = col.mean().unwrap();
            prop_assert!(mean.abs() < 1e-6);
            let sd = (col.mapv(|v| (v - mean) * (v - mean)).mean().unwrap()).sqrt();
            let constant = data.column(d).iter().all(|&v| v == data[[0, d]]);
            if constant {
                prop_assert!(sd < 1e-6);
            } else {
                prop_assert!((sd - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn texture_is_blind_to_brightness_offsets(seed in 0u64..10_000, offset in -0.2f64..0.2) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let base = Array2::from_shape_fn((30, 60), |_| 0.3 + 0.4 * rng.random::<f64>());
        let bank = TextureBank::default();
        let a = FeatureExtractor::<f64>::extract(&bank, base.view());
        let b = FeatureExtractor::<f64>::extract(&bank, base.mapv(|v| v + offset).view());
        prop_assert!((b[0] - a[0] - offset).abs() < 1e-9);
        for d in 1..a.len() {
            prop_assert!((a[d] - b[d]).abs() < 1e-9 * a[d].abs().max(1.0), "dim {}: {} vs {}", d, a[d], b[d]);
        }
    }

    #[test]
    fn max_complexity_rank_is_max_of_inputs(
        ranks in proptest::sample::subsequence((0i64..20).collect::<Vec<_>>(), 3).prop_shuffle(),
        cells in proptest::collection::vec(proptest::collection::vec(proptest::option::of(0u16..3), 1..5), 6),
    ) {
        let mapping = LabelMapping {
            p: 3,
            c: 3,
            map: vec![0, 1, 2],
            classes: ranks.iter().enumerate().map(|(i, &r)| ClassInfo { name: format!("c{i}"), complexity_rank: r }).collect(),
        };
        let passes = cells[0].len();
        let g = GridGeometry::new([0.0, 0.0], 1.0, 3, 2).unwrap();
        let maps: Vec<TerrainLabelMap> = (0..passes)
            .map(|k| TerrainLabelMap {
                grid: GeoGrid::from_values(g, cells.iter().map(|c| c.get(k).copied().flatten()).collect()).unwrap(),
                provenance: vec![k as u32],
                policy: None,
            })
            .collect();
        let merged = merge_maps(&maps, &mapping, MergePolicy::MaxComplexity).unwrap();
        for (cell, out) in cells.iter().zip(merged.grid.values()) {
            let expected = cell.iter().take(passes).flatten().map(|&c| ranks[usize::from(c)]).max();
            prop_assert_eq!(out.map(|c| ranks[usize::from(c)]), expected);
        }
    }
}

#[test]
fn classify_is_deterministic_and_order_free() {
    let (model, bank) = small_model();
    let image = &small_missions()[3].rendered.image;
    let spec = SnippetSpec::default();
    let mapping = LabelMapping {
        p: 8,
        c: 3,
        map: vec![0, 1, 2, 0, 1, 2, 0, 1],
        classes: (0..3).map(|i| ClassInfo { name: format!("c{i}"), complexity_rank: i }).collect(),
    };
    let geometry = default_geometry(image, &spec).unwrap();
    let a = classify(image, model, bank, &mapping, &spec, &geometry, 0).unwrap();
    let b = classify(image, model, bank, &mapping, &spec, &geometry, 0).unwrap();
    assert_eq!(a, b);

    // vote again from the snippets in reverse order
    let mut snippets = extract_snippets(image, &spec, SnippetMode::Grid).unwrap();
    snippets.reverse();
    let assigned = assign_snippets(&snippets, model, bank).unwrap();
    let mut votes: BTreeMap<(usize, usize), BTreeMap<usize, usize>> = BTreeMap::new();
    for (s, (cluster, _)) in snippets.iter().zip(&assigned) {
        let cell = geometry.cell_of(s.geo_center[0], s.geo_center[1]).unwrap();
        *votes.entry(cell).or_default().entry(mapping.map[*cluster]).or_default() += 1;
    }
    for ((i, j), v) in votes {
        let best = v.iter().max_by_key(|(&c, &n)| (n, mapping.classes[c].complexity_rank)).map(|(&c, _)| c as u16);
        assert_eq!(a.grid.get(i, j).copied(), best);
    }
}

// ---- repair ----

fn pd_grid() -> impl Strategy<Value = GeoGrid<f64>> {
    (1usize..10, 1usize..10, -20.0f64..20.0, -20.0f64..20.0).prop_flat_map(|(w, h, e, n)| {
        proptest::collection::vec(proptest::option::weighted(0.85, 0.0f64..=1.0), w * h).prop_map(move |values| {
            GeoGrid::from_values(GridGeometry::new([e, n], 5.0, w, h).unwrap(), values).unwrap()
        })
    })
}

fn orthogonal(leg_heading: f64, heading: f64) -> bool {
    let r = (leg_heading - heading - FRAC_PI_2).rem_euclid(PI);
    r.min(PI - r) < 1e-9
}

proptest! {
    #[test]
    fn flagged_cells_are_swept(pd in pd_grid(), cs in prop::sample::select(vec![5.0, 10.0, 20.0]), t in 0.0f64..=1.0, heading in 0.0f64..(2.0 * PI)) {
        let flags = flag_cells(&pd, cs, t, FlagRule::MeanBelow).unwrap();
        let plan = plan_revisit(&flags, heading, [0.0, 0.0], true);
        let g = flags.geometry;
        for (i, j) in g.cells().filter(|&(i, j)| flags.get(i, j) == Some(&true)) {
            let c = g.center(i, j);
            let h = 0.5 * g.cell_size;
            for p in [c, [c[0] - h, c[1] - h], [c[0] + h, c[1] - h], [c[0] - h, c[1] + h], [c[0] + h, c[1] + h]] {
                prop_assert!(in_swath(&plan, p), "cell ({}, {}) point {:?} outside every swath", i, j, p);
            }
        }
        for leg in &plan.legs {
            prop_assert!(orthogonal(leg.heading, heading));
        }
        prop_assert_eq!(&plan, &plan_revisit(&flags, heading, [0.0, 0.0], true));
    }

    #[test]
    fn lower_threshold_flags_a_subset(pd in pd_grid(), a in 0.0f64..=1.0, b in 0.0f64..=1.0, frac in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        for rule in [FlagRule::MeanBelow, FlagRule::FractionBelow { fraction: frac }] {
            let low = flagged_set(&flag_cells(&pd, 10.0, lo, rule).unwrap());
            let high = flagged_set(&flag_cells(&pd, 10.0, hi, rule).unwrap());
            prop_assert!(low.is_subset(&high));
        }
    }
}

#[test]
fn window_slices_stay_inside() {
    let m = &small_missions()[0].rendered.image;
    let spec = SnippetSpec { side_m: 2.5, stride_m: 1.7, exclude_nadir: false };
    for s in extract_snippets(m, &spec, SnippetMode::Grid).unwrap() {
        let (p, c) = s.origin;
        let (wp, wb) = s.pixels.dim();
        assert_eq!(m.intensities().slice(s![p..p + wp, c..c + wb]), s.pixels);
    }
}
