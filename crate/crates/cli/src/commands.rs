use std::fs;
use std::path::Path;

use seafloor::atr::{BernoulliStub, Detector, PassDetector, TemplateDetector};
use seafloor::cluster::{
    assign_snippets, classify, default_geometry, evaluate_precision, export_bundle, feature_matrix, labelled_snippets, merge_maps,
    representatives, train_clusterer, validate_mapping, FeatureExtractor, LabelMapping, MergePolicy, TerrainLabelMap, TextureBank,
    TextureConfig,
};
use seafloor::grid::{GeoGrid, GridGeometry};
use seafloor::image::ground_to_slant;
use seafloor::insert::{insert_random_contacts, insertion_altitude, ObjectModel};
use seafloor::perfmap::{densify, run_monte_carlo, PerfReport, Trial};
use seafloor::raster::{self, sidecar_path};
use seafloor::repair::{plan_overlay, repair, FlagRule};
use seafloor::sim::{generate_mission_set, load_mission_set, write_mission_set, TerrainClass};
use seafloor::snippet::{extract_snippets, SnippetMode, SnippetSpec};
use seafloor::{ClusterModel, Image, Snippet};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{Cli, Command, ImageSource, Policy, Rule};

type Result<T> = std::result::Result<T, CliError>;

/// Heightfield sampling used for object models built from specs.
const MODEL_RESOLUTION: f64 = 0.02;

/// Sidecar of a rendered grid raster.
#[derive(Serialize)]
struct GridRasterMeta {
    #[serde(flatten)]
    geometry: GridGeometry,
    /// Values mapped linearly so that `lo` is 0 and `hi` is the PGM maxval.
    lo: f64,
    hi: f64,
    /// Rows run north to south; empty cells are written as 0.
    north_up: bool,
}

pub fn run(cli: Cli) -> Result<Value> {
    let mut cfg = match &cli.config {
        Some(path) => {
            need_file(path)?;
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let seed = cli.seed.or(cfg.seed);
    if let Some(s) = seed {
        cfg.montecarlo.seed = s;
        cfg.kmeans.seed = s;
    }
    let seed = seed.unwrap_or(0);

    match cli.command {
        Command::Simulate { out, pings } => {
            let mut mission = cfg.mission;
            if let Some(p) = pings {
                mission.pings = p;
            }
            if mission.pings == 0 {
                return Err(CliError::Usage("--pings must be at least 1".into()));
            }
            let missions = generate_mission_set(seed, &mission)?;
            let manifest = write_mission_set(&out, &missions, seed, &mission)?;
            let files: Vec<&str> = manifest.missions.iter().map(|m| m.image.as_str()).collect();
            Ok(json!({ "command": "simulate", "seed": seed, "missions": files.len(), "images": files, "out": out }))
        }
        Command::Insert { image, out, records, count, min_separation, pass_id } => {
            need_file(&image)?;
            if count == 0 {
                return Err(CliError::Usage("--count must be at least 1".into()));
            }
            positive_opt("--min-separation", min_separation)?;
            let img: Image = raster::read_image(&image)?;
            let models = object_models(&cfg)?;
            let (augmented, mut recs) = insert_random_contacts(&img, &models, count, min_separation, seed, &cfg.montecarlo.insert)?;
            for r in &mut recs {
                r.pass_id = pass_id;
            }
            make_parent(&out)?;
            make_parent(&records)?;
            raster::write_image(&out, &augmented)?;
            raster::write_json(&records, &recs)?;
            Ok(json!({ "command": "insert", "seed": seed, "inserted": recs.len(), "out": out, "records": records }))
        }
        Command::AtrRun { image, out, threshold } => {
            need_file(&image)?;
            let mut det = cfg.detector;
            if let Some(t) = threshold {
                unit("--threshold", t)?;
                det.threshold = t;
            }
            let detector = TemplateDetector::new(det)?;
            let img: Image = raster::read_image(&image)?;
            let contacts = detector.detect(&img);
            make_parent(&out)?;
            raster::write_json(&out, &contacts)?;
            Ok(json!({ "command": "atr-run", "contacts": contacts.len(), "out": out }))
        }
        Command::Perfmap { image, out, truth, passes, contacts, cell_size, radius, stub, densify: k } => {
            need_file(&image)?;
            if let Some(t) = &truth {
                need_file(t)?;
            }
            let mut mc = cfg.montecarlo.clone();
            if let Some(n) = passes {
                mc.passes = n;
            }
            if let Some(n) = contacts {
                mc.contacts_per_pass = n;
            }
            positive_opt("--cell-size", cell_size)?;
            positive_opt("--radius", radius)?;
            mc.cell_size = cell_size.unwrap_or(mc.cell_size);
            mc.radius = radius.unwrap_or(mc.radius);
            if mc.passes == 0 || mc.contacts_per_pass == 0 {
                return Err(CliError::Usage("--passes and --contacts must be at least 1".into()));
            }
            let detector: Box<dyn PassDetector<f64>> = match stub {
                Some(p) => {
                    unit("--stub", p)?;
                    Box::new(BernoulliStub { p })
                }
                None => Box::new(TemplateDetector::new(cfg.detector.clone())?),
            };
            let img: Image = raster::read_image(&image)?;
            let truth = truth.map(|t| raster::read_labels(&t)).transpose()?;
            if let Some(t) = &truth {
                if t.dim() != img.intensities().dim() {
                    return Err(CliError::Domain(format!("truth raster {:?} does not match image {:?}", t.dim(), img.intensities().dim())));
                }
            }
            let models = object_models(&cfg)?;
            let map = run_monte_carlo(&img, &models, detector.as_ref(), &mc)?;
            let altitude = insertion_altitude(&img)?;
            let report = PerfReport::new(&map, |trial: &Trial| {
                let t = truth.as_ref()?;
                let r = &trial.record;
                let k = (ground_to_slant(r.ground_range, altitude) / img.bin_resolution()).floor() as usize;
                let label = t[[r.ping, img.column(r.side, k.min(img.swath_bins() - 1))]];
                TerrainClass::from_id(label).ok().map(|c| c.name().to_string())
            });
            let pd = if k > 0 { densify(&map.pd_grid(), k)? } else { map.pd_grid() };
            fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
            raster::write_grid(&out.join("pd.json"), &pd)?;
            let pgm = out.join("pd.pgm");
            raster::write_grid_pgm(&pgm, &pd, 0.0, 1.0)?;
            raster::write_json(&sidecar_path(&pgm), &GridRasterMeta { geometry: pd.geometry, lo: 0.0, hi: 1.0, north_up: true })?;
            raster::write_json(&out.join("report.json"), &report)?;
            raster::write_json(&out.join("trials.json"), &map.trials)?;
            Ok(json!({
                "command": "perfmap",
                "seed": mc.seed,
                "N": report.passes,
                "trials": report.trials,
                "mean_pd": report.mean_pd,
                "fad": report.fad,
                "out": out,
            }))
        }
        Command::ClusterTrain { source, out, clusters, batch_size, max_epochs, tolerance } => {
            let images = load_images(&source)?;
            let mut km = cfg.kmeans.clone();
            km.clusters = clusters.unwrap_or(km.clusters);
            km.batch_size = batch_size.unwrap_or(km.batch_size);
            km.max_epochs = max_epochs.unwrap_or(km.max_epochs);
            km.tolerance = tolerance.unwrap_or(km.tolerance);
            km.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let bank = TextureBank::new(cfg.texture.clone())?;
            let snippets = grid_snippets(&images, &cfg.snippet)?;
            let features = feature_matrix(&snippets, &bank)?;
            let model = train_clusterer(features.view(), FeatureExtractor::<f64>::info(&bank), &km)?;
            make_parent(&out)?;
            raster::write_json(&out, &model)?;
            Ok(json!({
                "command": "cluster-train",
                "seed": km.seed,
                "snippets": snippets.len(),
                "P": model.p,
                "epochs": model.log.epochs,
                "converged": model.log.converged,
                "extractor": model.extractor.hash,
                "out": out,
            }))
        }
        Command::ClusterReps { model, source, out, k } => {
            let (model, bank) = load_model(&model)?;
            let images = load_images(&source)?;
            let snippets = grid_snippets(&images, &cfg.snippet)?;
            let features = feature_matrix(&snippets, &bank)?;
            let reps = representatives(&model, features.view(), k);
            let clusters: Vec<Value> = reps
                .iter()
                .enumerate()
                .map(|(id, list)| {
                    let members: Vec<Value> = list
                        .iter()
                        .map(|r| {
                            let s = &snippets[r.index];
                            json!({ "source": s.source, "origin": [s.origin.0, s.origin.1], "center": s.geo_center, "distance": r.distance })
                        })
                        .collect();
                    json!({ "id": id, "count": model.counts[id], "members": members })
                })
                .collect();
            make_parent(&out)?;
            raster::write_json(&out, &json!({ "P": model.p, "k": k, "clusters": clusters }))?;
            Ok(json!({ "command": "cluster-reps", "P": model.p, "snippets": snippets.len(), "out": out }))
        }
        Command::Classify { model, mapping, image, out, grid, pgm, pass_id } => {
            need_file(&image)?;
            need_file(&mapping)?;
            if let Some(g) = &grid {
                need_file(g)?;
            }
            let (model, bank) = load_model(&model)?;
            let mapping: LabelMapping = raster::read_json(&mapping)?;
            validate_mapping(&mapping)?;
            let img: Image = raster::read_image(&image)?;
            let geometry = match &grid {
                Some(g) => geometry_of(g)?,
                None => default_geometry(&img, &cfg.snippet)?,
            };
            let map = classify(&img, &model, &bank, &mapping, &cfg.snippet, &geometry, pass_id)?;
            make_parent(&out)?;
            raster::write_json(&out, &map)?;
            if let Some(p) = &pgm {
                write_label_pgm(p, &map, mapping.c)?;
            }
            Ok(json!({
                "command": "classify",
                "cells": map.grid.count_data(),
                "class_cells": class_histogram(&map, &mapping),
                "out": out,
            }))
        }
        Command::Merge { mapping, maps, policy, out } => {
            need_file(&mapping)?;
            for m in &maps {
                need_file(m)?;
            }
            let mapping: LabelMapping = raster::read_json(&mapping)?;
            let loaded = maps.iter().map(|m| raster::read_json::<TerrainLabelMap>(m)).collect::<std::result::Result<Vec<_>, _>>()?;
            let policy = match policy {
                Policy::MaxVotes => MergePolicy::MaxVotes,
                Policy::MaxComplexity => MergePolicy::MaxComplexity,
            };
            let merged = merge_maps(&loaded, &mapping, policy)?;
            make_parent(&out)?;
            raster::write_json(&out, &merged)?;
            Ok(json!({
                "command": "merge",
                "maps": loaded.len(),
                "cells": merged.grid.count_data(),
                "class_cells": class_histogram(&merged, &mapping),
                "out": out,
            }))
        }
        Command::Evaluate { model, missions, out } => {
            need_dir(&missions)?;
            let (model, bank) = load_model(&model)?;
            let (_, loaded) = load_mission_set(&missions)?;
            let mut assigned = Vec::new();
            let mut truth = Vec::new();
            for m in &loaded {
                let (snippets, labels) = labelled_snippets(&m.image, &m.truth, &cfg.snippet)?;
                assigned.extend(assign_snippets(&snippets, &model, &bank)?.into_iter().map(|a| a.0));
                truth.extend(labels);
            }
            let report = evaluate_precision(&assigned, &truth)?;
            if let Some(out) = &out {
                make_parent(out)?;
                raster::write_json(out, &report)?;
            }
            Ok(json!({ "command": "evaluate", "precision": report.precision, "snippets": report.snippets, "P": model.p, "out": out }))
        }
        Command::RepairPlan { pd, out, cell_size, threshold, rule, fraction, heading, image, start, same_heading, overlay, oversample } => {
            need_file(&pd)?;
            if let Some(i) = &image {
                need_file(i)?;
            }
            let mut rc = cfg.repair.clone();
            if let Some(t) = threshold {
                unit("--threshold", t)?;
                rc.threshold = t;
            }
            positive_opt("--cell-size", cell_size)?;
            rc.cell_size = cell_size.unwrap_or(rc.cell_size);
            match rule {
                Some(Rule::Mean) => rc.rule = FlagRule::MeanBelow,
                Some(Rule::Fraction) => {
                    unit("--fraction", fraction)?;
                    rc.rule = FlagRule::FractionBelow { fraction };
                }
                None => {}
            }
            if same_heading {
                rc.orthogonal = false;
            }
            if oversample == 0 {
                return Err(CliError::Usage("--oversample must be at least 1".into()));
            }
            let grid: GeoGrid<f64> = raster::read_grid(&pd)?;
            let nav = match &image {
                Some(i) => {
                    let img: Image = raster::read_image(i)?;
                    Some((img.nav()[0].heading, img.nav().last().map(|p| [p.e, p.n]).unwrap_or(grid.geometry.origin)))
                }
                None => None,
            };
            let heading = heading.or(nav.map(|n| n.0)).unwrap_or(0.0);
            let start = start.or(nav.map(|n| n.1)).unwrap_or(grid.geometry.origin);
            let (flags, plan) = repair(&grid, &rc, heading, start, &file_name(&pd))?;
            make_parent(&out)?;
            raster::write_json(&out, &plan)?;
            if let Some(o) = &overlay {
                make_parent(o)?;
                let g = plan_overlay(&flags, &plan, oversample)?;
                raster::write_grid_pgm(o, &g, 0.0, 1.0)?;
                raster::write_json(&sidecar_path(o), &GridRasterMeta { geometry: g.geometry, lo: 0.0, hi: 1.0, north_up: true })?;
            }
            Ok(json!({
                "command": "repair-plan",
                "flagged": seafloor::repair::flagged_set(&flags).len(),
                "legs": plan.legs.len(),
                "total_transit": plan.total_transit,
                "out": out,
            }))
        }
        Command::LabelExport { model, source, out, k } => {
            if k == 0 {
                return Err(CliError::Usage("-k must be at least 1".into()));
            }
            let (model, bank) = load_model(&model)?;
            let images = load_images(&source)?;
            let snippets = grid_snippets(&images, &cfg.snippet)?;
            let features = feature_matrix(&snippets, &bank)?;
            let reps = representatives(&model, features.view(), k);
            let manifest = export_bundle(&out, &model, &snippets, &reps)?;
            let exported: usize = manifest.clusters.iter().map(|c| c.snippets.len()).sum();
            Ok(json!({ "command": "label-export", "P": manifest.p, "snippets": exported, "out": out }))
        }
    }
}

fn need_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::missing(path.to_path_buf()))
    }
}

fn need_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::missing(path.to_path_buf()))
    }
}

fn make_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| CliError::io(p, e)),
        _ => Ok(()),
    }
}

fn unit(flag: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{flag} must lie in [0, 1], got {v}")))
    }
}

fn positive_opt(flag: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if x.is_nan() || x <= 0.0 => Err(CliError::Usage(format!("{flag} must be positive, got {x}"))),
        _ => Ok(()),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn object_models(cfg: &RunConfig) -> Result<Vec<ObjectModel>> {
    if cfg.detector.objects.is_empty() {
        return Err(CliError::Usage("detector.objects must list at least one object".into()));
    }
    cfg.detector.objects.iter().map(|o| Ok(ObjectModel::from_spec(o, MODEL_RESOLUTION)?)).collect()
}

/// Images named by `--missions` (in manifest order) followed by every `--image`.
fn load_images(source: &ImageSource) -> Result<Vec<Image>> {
    if source.missions.is_none() && source.images.is_empty() {
        return Err(CliError::Usage("give --missions and/or at least one --image".into()));
    }
    if let Some(d) = &source.missions {
        need_dir(d)?;
    }
    for i in &source.images {
        need_file(i)?;
    }
    let mut out = Vec::new();
    if let Some(d) = &source.missions {
        out.extend(load_mission_set(d)?.1.into_iter().map(|m| m.image));
    }
    for i in &source.images {
        out.push(raster::read_image(i)?);
    }
    Ok(out)
}

fn grid_snippets(images: &[Image], spec: &SnippetSpec) -> Result<Vec<Snippet>> {
    let mut out = Vec::new();
    for img in images {
        out.extend(extract_snippets(img, spec, SnippetMode::Grid)?);
    }
    if out.is_empty() {
        return Err(CliError::Domain("no snippets fit the given images".into()));
    }
    Ok(out)
}

/// Loads a model and rebuilds the extractor it was trained with.
fn load_model(path: &Path) -> Result<(ClusterModel, TextureBank)> {
    need_file(path)?;
    let model: ClusterModel = raster::read_json(path)?;
    model.validate()?;
    let info = &model.extractor;
    if info.id != TextureBank::ID {
        return Err(CliError::Domain(format!("model uses unknown extractor {:?}", info.id)));
    }
    let config: TextureConfig =
        serde_json::from_value(info.config.clone()).map_err(|e| CliError::Domain(format!("extractor config: {e}")))?;
    let bank = TextureBank::new(config)?;
    if FeatureExtractor::<f64>::info(&bank).hash != info.hash {
        return Err(CliError::Domain("extractor hash does not match its config".into()));
    }
    Ok((model, bank))
}

/// Grid geometry from a label map (`grid` member) or a bare grid JSON.
fn geometry_of(path: &Path) -> Result<GridGeometry> {
    let value: Value = raster::read_json(path)?;
    let node = value.get("grid").unwrap_or(&value);
    let g: GridGeometry = serde_json::from_value(node.clone()).map_err(|e| CliError::Domain(format!("{}: no grid geometry: {e}", path.display())))?;
    Ok(GridGeometry::new(g.origin, g.cell_size, g.width, g.height)?)
}

fn class_histogram(map: &TerrainLabelMap, mapping: &LabelMapping) -> Value {
    let mut counts = vec![0usize; mapping.c];
    for &c in map.grid.values().iter().flatten() {
        if let Some(n) = counts.get_mut(usize::from(c)) {
            *n += 1;
        }
    }
    mapping.classes.iter().zip(counts).map(|(cls, n)| (cls.name.clone(), json!(n))).collect::<serde_json::Map<_, _>>().into()
}

fn write_label_pgm(path: &Path, map: &TerrainLabelMap, classes: usize) -> Result<()> {
    make_parent(path)?;
    let values = map.grid.map(|&c| f64::from(c));
    let hi = (classes.max(2) - 1) as f64;
    raster::write_grid_pgm(path, &values, 0.0, hi)?;
    raster::write_json(&sidecar_path(path), &GridRasterMeta { geometry: values.geometry, lo: 0.0, hi, north_up: true })?;
    Ok(())
}
