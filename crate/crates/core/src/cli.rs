//! The command implementations behind the `fdcam` binary. Each command
//! writes its artifacts into `RunConfig::out` and returns their paths.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cam::{fd_cam_explained, Method, SaliencyMap};
use crate::config::RunConfig;
use crate::dataset::load_dataset;
use crate::error::{Error, Result};
use crate::grouping::{all_groups, similarity_matrix, GroupDump};
use crate::metrics::{evaluate_faithfulness, pointing_accuracy, ClassChoice, FaithfulnessReport, PointingReport};
use crate::model::{LayerModel, ModelHandle, ScoreModel};
use crate::render::{contact_sheet, load_image_file, overlay, plot_curves, save_png, save_saliency_png, OVERLAY_ALPHA};
use crate::shapes::{generate_shapes, write_dataset, ShapesDatasetSpec};
use crate::train::{train_tiny as fit_tiny, TrainConfig, TrainReport, ACCURACY_GATE};
use crate::weighting::WeightDump;

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "image".to_string(), |s| s.to_string_lossy().into_owned())
}

/// Loads an image file and resizes it (bilinear) to the model input size.
pub fn load_model_input(model: &ModelHandle, path: &Path) -> Result<crate::raster::Image> {
    let img = load_image_file(path)?;
    let (h, w) = model.input_size();
    Ok(if (img.height, img.width) == (h, w) { img } else { img.resize_bilinear(h, w) })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExplainSidecar {
    pub image: String,
    pub method: String,
    pub method_tag: String,
    pub class: usize,
    pub class_name: String,
    pub score_mode: String,
    pub scores: Vec<f64>,
    pub layer: String,
    pub height: usize,
    pub width: usize,
    pub interpolation: &'static str,
    pub map_normalization: &'static str,
    pub saliency_png: String,
    pub model_hash: String,
    pub config: RunConfig,
    pub weights: Option<WeightDump>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOutputs {
    pub saliency: SaliencyMap,
    pub saliency_png: PathBuf,
    pub sidecar: PathBuf,
    pub overlay: PathBuf,
}

/// Explains one image; `class` defaults to the top-1 prediction.
pub fn explain(cfg: &RunConfig, image_path: &Path, class: Option<usize>) -> Result<ExplainOutputs> {
    cfg.validate()?;
    let model = cfg.load_model()?;
    let image = load_model_input(&model, image_path)?;
    let scores = model.forward_scores(&image)?;
    let class = class.unwrap_or_else(|| scores.argmax());
    if class >= model.num_classes() {
        return Err(Error::input(format!("class {class} out of range (model has {} classes)", model.num_classes())));
    }
    let method = cfg.method();
    let (saliency, weights) = match method {
        Method::FdCam(combine) => {
            let ex = fd_cam_explained(&model, &image, class, &combine)?;
            (ex.saliency, Some(ex.weights.dump()))
        }
        _ => (method.explain(&model, &image, class)?, None),
    };

    create_dir(&cfg.out)?;
    let stem = format!("{}.{}", file_stem(image_path), method.name());
    let saliency_png = cfg.out.join(format!("{stem}.png"));
    let sidecar = cfg.out.join(format!("{stem}.json"));
    let overlay_path = cfg.out.join(format!("{stem}.overlay.png"));
    save_saliency_png(&saliency.map, &saliency_png)?;
    save_png(&overlay(&image, &saliency.map, OVERLAY_ALPHA)?, &overlay_path)?;
    write_json(
        &sidecar,
        &ExplainSidecar {
            image: image_path.display().to_string(),
            method: method.name().to_string(),
            method_tag: saliency.method.clone(),
            class,
            class_name: model.class_names()[class].clone(),
            score_mode: model.score_mode().to_string(),
            scores: scores.values,
            layer: model.target_layer().to_string(),
            height: image.height,
            width: image.width,
            interpolation: "bilinear, corner-aligned",
            map_normalization: "relu at native resolution, then min-max after upsampling",
            saliency_png: saliency_png.file_name().unwrap().to_string_lossy().into_owned(),
            model_hash: model.parameter_hash(),
            config: cfg.clone(),
            weights,
        },
    )?;
    Ok(ExplainOutputs { saliency, saliency_png, sidecar, overlay: overlay_path })
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupsReport {
    #[serde(flatten)]
    pub dump: GroupDump,
    pub layer: String,
    pub image: String,
    pub channels: Vec<usize>,
    pub model_hash: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupsOutputs {
    pub json: PathBuf,
    pub sheets: Vec<PathBuf>,
    pub dump: GroupDump,
}

/// Writes the group-membership JSON and one contact sheet per requested
/// channel (all channels when `channels` is empty).
pub fn groups(cfg: &RunConfig, image_path: &Path, channels: &[usize]) -> Result<GroupsOutputs> {
    cfg.validate()?;
    let model = cfg.load_model()?;
    let image = load_model_input(&model, image_path)?;
    let acts = model.capture_activations(&image)?;
    let groups = all_groups(&similarity_matrix(&acts), cfg.theta)?;
    let channels: Vec<usize> = if channels.is_empty() { (0..acts.channels).collect() } else { channels.to_vec() };
    if let Some(&bad) = channels.iter().find(|&&c| c >= acts.channels) {
        return Err(Error::input(format!("channel {bad} out of range (layer has {} channels)", acts.channels)));
    }

    create_dir(&cfg.out)?;
    let stem = file_stem(image_path);
    let mut sheets = Vec::new();
    for &k in &channels {
        let path = cfg.out.join(format!("{stem}.group{k}.png"));
        save_png(&contact_sheet(&acts, &groups[k], 4), &path)?;
        sheets.push(path);
    }
    let dump = GroupDump::new(cfg.theta, &groups);
    let json = cfg.out.join(format!("{stem}.groups.json"));
    write_json(
        &json,
        &GroupsReport {
            dump: dump.clone(),
            layer: model.target_layer().to_string(),
            image: image_path.display().to_string(),
            channels,
            model_hash: model.parameter_hash(),
            config: cfg.clone(),
        },
    )?;
    Ok(GroupsOutputs { json, sheets, dump })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Faithfulness,
    Pointing,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "faithfulness" => Ok(Metric::Faithfulness),
            "pointing" => Ok(Metric::Pointing),
            other => Err(Error::config(format!("unknown metric `{other}` (faithfulness, pointing)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct EvaluationFile<'a, R> {
    metric: Metric,
    method: &'static str,
    dataset: String,
    model_hash: String,
    config: &'a RunConfig,
    report: &'a R,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvaluationReport {
    Faithfulness(FaithfulnessReport),
    Pointing(PointingReport),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOutputs {
    pub report: EvaluationReport,
    pub json: PathBuf,
    pub csv: PathBuf,
    pub plots: Vec<PathBuf>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e))
}

fn csv_row<I, T>(w: &mut csv::Writer<std::fs::File>, path: &Path, row: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| Error::format(path, e))
}

/// Runs the chosen metric with the configured method over a dataset.
pub fn evaluate(cfg: &RunConfig, dataset: &Path, metric: Metric) -> Result<EvaluateOutputs> {
    cfg.validate()?;
    let model = cfg.load_model()?;
    let items = load_dataset(dataset, model.input_size())?;
    if items.is_empty() {
        return Err(Error::input(format!("dataset {} contains no annotated images", dataset.display())));
    }
    let method = cfg.method();
    create_dir(&cfg.out)?;
    let model_hash = model.parameter_hash();
    fn header<'a, R>(
        metric: Metric,
        method: &'static str,
        dataset: &Path,
        model_hash: &str,
        cfg: &'a RunConfig,
        report: &'a R,
    ) -> EvaluationFile<'a, R> {
        EvaluationFile { metric, method, dataset: dataset.display().to_string(), model_hash: model_hash.to_string(), config: cfg, report }
    }

    match metric {
        Metric::Faithfulness => {
            let images: Vec<_> = items.iter().map(|it| (it.name.clone(), it.image.clone())).collect();
            let report = evaluate_faithfulness(&model, &images, ClassChoice::TopPredicted, &cfg.perturbation_config(), |img, c| {
                Ok(method.explain(&model, img, c)?.map)
            })?;
            let json = cfg.out.join("faithfulness.json");
            write_json(&json, &header(metric, method.name(), dataset, &model_hash, cfg, &report))?;
            let csv_path = cfg.out.join("faithfulness.csv");
            let mut w = csv_writer(&csv_path)?;
            csv_row(&mut w, &csv_path, ["image", "class", "insertion_auc", "deletion_auc", "overall"])?;
            for r in &report.images {
                csv_row(
                    &mut w,
                    &csv_path,
                    [r.image.clone(), r.class.to_string(), r.insertion_auc.to_string(), r.deletion_auc.to_string(), r.overall.to_string()],
                )?;
            }
            csv_row(
                &mut w,
                &csv_path,
                [
                    "mean".to_string(),
                    String::new(),
                    report.mean_insertion_auc.to_string(),
                    report.mean_deletion_auc.to_string(),
                    report.overall.to_string(),
                ],
            )?;
            w.flush().map_err(|e| Error::io(&csv_path, e))?;
            let plot_dir = cfg.out.join("curves");
            create_dir(&plot_dir)?;
            let mut plots = Vec::new();
            for r in &report.images {
                let p = plot_dir.join(format!("{}.png", r.image));
                save_png(&plot_curves(&[&r.deletion, &r.insertion]), &p)?;
                plots.push(p);
            }
            Ok(EvaluateOutputs { report: EvaluationReport::Faithfulness(report), json, csv: csv_path, plots })
        }
        Metric::Pointing => {
            let report = pointing_accuracy(&items, model.class_names(), |it, c| Ok(method.explain(&model, &it.image, c)?.map))?;
            let json = cfg.out.join("pointing.json");
            write_json(&json, &header(metric, method.name(), dataset, &model_hash, cfg, &report))?;
            let csv_path = cfg.out.join("pointing.csv");
            let mut w = csv_writer(&csv_path)?;
            csv_row(&mut w, &csv_path, ["image", "label", "x", "y", "outcome"])?;
            for r in &report.records {
                let outcome = match r.outcome {
                    crate::metrics::PointingOutcome::Hit => "hit",
                    crate::metrics::PointingOutcome::Miss => "miss",
                };
                csv_row(
                    &mut w,
                    &csv_path,
                    [r.image.clone(), r.label.clone(), r.point.0.to_string(), r.point.1.to_string(), outcome.to_string()],
                )?;
            }
            csv_row(&mut w, &csv_path, ["accuracy".to_string(), String::new(), String::new(), String::new(), report.accuracy.to_string()])?;
            w.flush().map_err(|e| Error::io(&csv_path, e))?;
            Ok(EvaluateOutputs { report: EvaluationReport::Pointing(report), json, csv: csv_path, plots: Vec::new() })
        }
    }
}

/// Generates the shapes dataset into `out`.
pub fn make_shapes(spec: &ShapesDatasetSpec, out: &Path) -> Result<PathBuf> {
    let ds = generate_shapes(spec)?;
    create_dir(out)?;
    write_dataset(&ds, out)?;
    Ok(out.to_path_buf())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainMetrics {
    pub dataset: ShapesDatasetSpec,
    pub report: TrainReport,
    pub gate: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub model: ModelHandle,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub report: TrainReport,
}

/// Trains the tiny CNN on a freshly generated shapes dataset. Metrics are
/// always written; the checkpoint only when validation accuracy clears the
/// gate, otherwise a numeric error is returned.
pub fn train_tiny(spec: &ShapesDatasetSpec, train: &TrainConfig, out: &Path) -> Result<TrainOutputs> {
    let ds = generate_shapes(spec)?;
    let (model, report) = fit_tiny(&ds, train)?;
    create_dir(out)?;
    let passed = report.val_accuracy >= ACCURACY_GATE;
    let metrics = out.join("train_metrics.json");
    write_json(&metrics, &TrainMetrics { dataset: *spec, report: report.clone(), gate: ACCURACY_GATE, passed })?;
    if !passed {
        return Err(Error::numeric(format!(
            "validation accuracy {:.4} below the {ACCURACY_GATE} gate",
            report.val_accuracy
        )));
    }
    let checkpoint = out.join("tiny_cnn.json");
    model.save_checkpoint(&checkpoint)?;
    Ok(TrainOutputs { model, checkpoint, metrics, report })
}
