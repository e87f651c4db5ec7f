//! Dataset build stages and the all-in-one `full-build`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use urbangraph_core::geo::GeoPoint;
use urbangraph_core::graph::{
    build_graph, load_geojson, read_graph, write_graph, GraphNode, SpatialGraph,
};
use urbangraph_core::srp::{
    annotate_path, discover_destinations, emit_training_samples, render_srp, select_paths,
    AnnotatedPath, Stage, TrainingSample,
};
use urbangraph_core::subgraph::{
    build_caption_prompt, describe_subgraph, extract_subgraph, parse_subgraph, serialize_subgraph,
    Subgraph,
};

use crate::config::PipelineConfig;
use crate::error::{Classify, CliError};
use crate::io::{count_lines, jsonl, pretty_json, read_images, read_jsonl, write_file};

pub const MANIFEST_FORMAT: &str = "urbangraph.manifest/1";
pub const GRAPH_DIR: &str = "graph";
pub const SUBGRAPH_DIR: &str = "subgraphs";
pub const SRP_FILE: &str = "srp.jsonl";
pub const CAPTION_FILE: &str = "caption_prompts.jsonl";
pub const STAGE1_FILE: &str = "stage1.jsonl";
pub const STAGE2_FILE: &str = "stage2.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUBGRAPH_EXT: &str = "subgraph";

/// One reasoning path as stored in `srp.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrpRecord {
    pub image_id: String,
    pub destination: String,
    pub hops: usize,
    pub length_m: f64,
    pub nodes: Vec<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub schema_version: String,
    pub prompt: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub nodes: usize,
    pub edges: usize,
    pub subgraphs: usize,
    pub srps: usize,
    pub stage1_samples: usize,
    pub stage2_samples: usize,
    pub caption_prompts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub format: String,
    pub tool: String,
    pub version: String,
    pub city: String,
    pub seed: u64,
    pub counts: ManifestCounts,
    /// Mean triples per path, 0 when there are none.
    pub avg_srp_hops: f64,
    pub rejected_features: usize,
    /// Paths relative to the build root.
    pub files: BTreeMap<String, String>,
    pub config: serde_json::Value,
}

pub fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

/// Reads and concatenates every configured GeoJSON file. Rejected features
/// are logged and counted, not fatal.
pub fn load_nodes(cfg: &PipelineConfig) -> Result<(Vec<GraphNode>, usize), CliError> {
    const STAGE: &str = "build-graph";
    if cfg.geojson.is_empty() {
        return Err(CliError::Config("no geojson inputs configured".into()));
    }
    let mut nodes = Vec::new();
    let mut rejected = 0;
    for p in &cfg.geojson {
        let path = cfg.resolve(p);
        let bytes = fs::read(&path).map_err(|e| CliError::io(STAGE, &path, e))?;
        let (mut n, report) = load_geojson(&bytes)
            .map_err(|e| CliError::data(STAGE, format!("{}: {e}", path.display())))?;
        for r in &report.rejected {
            log::warn!("{}: rejected feature {r:?}", path.display());
        }
        rejected += report.rejected.len();
        nodes.append(&mut n);
    }
    Ok((nodes, rejected))
}

pub fn build(cfg: &PipelineConfig) -> Result<(SpatialGraph, usize), CliError> {
    let (nodes, rejected) = load_nodes(cfg)?;
    let graph = build_graph(nodes, cfg.graph).map_err(|e| e.classify("build-graph"))?;
    log::info!(
        "graph: {} nodes, {} edges",
        graph.node_count(),
        graph.edge_count()
    );
    Ok((graph, rejected))
}

pub fn images(cfg: &PipelineConfig) -> Result<Vec<(String, GeoPoint)>, CliError> {
    match &cfg.images {
        Some(p) => read_images(&cfg.resolve(p)),
        None => Ok(Vec::new()),
    }
}

pub fn anchor(graph: &mut SpatialGraph, images: &[(String, GeoPoint)]) -> Result<(), CliError> {
    for (id, p) in images {
        graph
            .anchor_image(id, *p)
            .map_err(|e| e.classify("anchor-images"))?;
    }
    Ok(())
}

pub fn image_subgraph(
    graph: &SpatialGraph,
    id: &str,
    cfg: &PipelineConfig,
) -> Result<Subgraph, CliError> {
    extract_subgraph(graph, id, &cfg.extract)
        .map_err(|e| CliError::data("extract-subgraphs", format!("image {id}: {e}")))
}

pub fn caption_record(id: &str, sub: &Subgraph) -> CaptionRecord {
    let prompt = build_caption_prompt(&describe_subgraph(sub));
    CaptionRecord {
        image_id: id.to_string(),
        schema_version: prompt.schema_version,
        prompt: prompt.full_text,
    }
}

pub fn image_paths(
    graph: &SpatialGraph,
    id: &str,
    cfg: &PipelineConfig,
) -> Result<Vec<AnnotatedPath>, CliError> {
    let wrap = |e: urbangraph_core::srp::SrpError| match e.classify("gen-srp") {
        CliError::Data { stage, message } => CliError::Data {
            stage,
            message: format!("image {id}: {message}"),
        },
        other => other,
    };
    let cands = discover_destinations(graph, id, &cfg.srp).map_err(wrap)?;
    select_paths(graph, &cands, &cfg.srp)
        .map_err(wrap)?
        .iter()
        .map(|p| annotate_path(graph, p).map_err(wrap))
        .collect()
}

pub fn srp_record(p: &AnnotatedPath) -> SrpRecord {
    SrpRecord {
        image_id: p.image_id.clone(),
        destination: p.destination.clone(),
        hops: p.hops,
        length_m: p.length_m(),
        nodes: p.nodes.clone(),
        text: render_srp(p),
    }
}

/// Re-annotates stored paths against the graph.
pub fn paths_from_records(
    graph: &SpatialGraph,
    records: &[SrpRecord],
) -> Result<Vec<AnnotatedPath>, CliError> {
    records
        .iter()
        .map(|r| {
            annotate_path(graph, &r.nodes).map_err(|e| {
                CliError::data("emit-samples", format!("path to {}: {e}", r.destination))
            })
        })
        .collect()
}

pub fn image_samples(
    graph: &SpatialGraph,
    id: &str,
    paths: &[AnnotatedPath],
    cfg: &PipelineConfig,
) -> Result<(Vec<TrainingSample>, Vec<TrainingSample>), CliError> {
    let wrap = |e| CliError::data("emit-samples", format!("image {id}: {e}"));
    let image = cfg.bench.image_ref(id);
    let sub = cfg.bench.graph_ref(id);
    let s1 = emit_training_samples(graph, paths, &image, None, Stage::One).map_err(wrap)?;
    let s2 = emit_training_samples(graph, paths, &image, Some(&sub), Stage::Two).map_err(wrap)?;
    Ok((s1, s2))
}

/// Everything one image contributes to a build.
struct ImageOutputs {
    id: String,
    subgraph: Vec<u8>,
    caption: CaptionRecord,
    srps: Vec<SrpRecord>,
    stage1: Vec<TrainingSample>,
    stage2: Vec<TrainingSample>,
}

fn process_image(
    graph: &SpatialGraph,
    id: &str,
    cfg: &PipelineConfig,
) -> Result<ImageOutputs, CliError> {
    let sub = image_subgraph(graph, id, cfg)?;
    let paths = image_paths(graph, id, cfg)?;
    let (stage1, stage2) = image_samples(graph, id, &paths, cfg)?;
    Ok(ImageOutputs {
        id: id.to_string(),
        subgraph: serialize_subgraph(&sub),
        caption: caption_record(id, &sub),
        srps: paths.iter().map(srp_record).collect(),
        stage1,
        stage2,
    })
}

/// Runs `f` for every id in parallel and returns results in id order. The
/// first failure in id order wins, so errors are deterministic too.
pub fn per_image<T: Send>(
    pool: &rayon::ThreadPool,
    ids: &[&str],
    f: impl Fn(&str) -> Result<T, CliError> + Sync,
) -> Result<Vec<T>, CliError> {
    let results: Vec<Result<T, CliError>> =
        pool.install(|| ids.par_iter().map(|id| f(id)).collect());
    results.into_iter().collect()
}

fn subgraph_path(root: &Path, id: &str) -> PathBuf {
    root.join(SUBGRAPH_DIR).join(format!("{id}.{SUBGRAPH_EXT}"))
}

fn graph_dir(root: &Path) -> PathBuf {
    root.join(GRAPH_DIR)
}

fn write_graph_dir(graph: &SpatialGraph, root: &Path, seed: u64) -> Result<(), CliError> {
    let dir = graph_dir(root);
    write_graph(graph, &dir, Some(seed)).map_err(|e| CliError::io("write-graph", &dir, e))?;
    Ok(())
}

pub fn read_graph_dir(stage: &str, root: &Path) -> Result<SpatialGraph, CliError> {
    let dir = graph_dir(root);
    if !dir.join("meta.json").is_file() {
        return Err(CliError::data(
            stage,
            format!("no graph at {}; run build-graph first", dir.display()),
        ));
    }
    read_graph(&dir)
        .map(|(g, _)| g)
        .map_err(|e| CliError::data(stage, format!("{}: {e}", dir.display())))
}

fn image_ids(images: &[(String, GeoPoint)]) -> Vec<&str> {
    images.iter().map(|(id, _)| id.as_str()).collect()
}

// ---- stage commands: each reads the previous stage's files under `out` ----

pub fn cmd_build_graph(cfg: &PipelineConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let (graph, rejected) = build(cfg)?;
    let root = cfg.out_dir();
    write_graph_dir(&graph, &root, cfg.seed)?;
    Ok(format!(
        "graph: {} nodes, {} edges ({rejected} features rejected)",
        graph.node_count(),
        graph.edge_count()
    ))
}

pub fn cmd_anchor_images(cfg: &PipelineConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let root = cfg.out_dir();
    let mut graph = read_graph_dir("anchor-images", &root)?;
    let imgs = images(cfg)?;
    anchor(&mut graph, &imgs)?;
    write_graph_dir(&graph, &root, cfg.seed)?;
    Ok(format!("anchored {} images", imgs.len()))
}

pub fn cmd_extract_subgraphs(cfg: &PipelineConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let root = cfg.out_dir();
    let graph = read_graph_dir("extract-subgraphs", &root)?;
    let imgs = images(cfg)?;
    let pool = thread_pool(cfg.jobs)?;
    let docs = per_image(&pool, &image_ids(&imgs), |id| {
        Ok(serialize_subgraph(&image_subgraph(&graph, id, cfg)?))
    })?;
    for ((id, _), doc) in imgs.iter().zip(&docs) {
        write_file("extract-subgraphs", &subgraph_path(&root, id), doc)?;
    }
    Ok(format!("wrote {} subgraphs", docs.len()))
}

pub fn cmd_gen_captions_prompts(cfg: &PipelineConfig) -> Result<String, CliError> {
    const STAGE: &str = "gen-captions-prompts";
    cfg.validate()?;
    let root = cfg.out_dir();
    let imgs = images(cfg)?;
    let pool = thread_pool(cfg.jobs)?;
    let records = per_image(&pool, &image_ids(&imgs), |id| {
        let path = subgraph_path(&root, id);
        let bytes = fs::read(&path).map_err(|e| CliError::io(STAGE, &path, e))?;
        let sub = parse_subgraph(&bytes)
            .map_err(|e| CliError::data(STAGE, format!("{}: {e}", path.display())))?;
        Ok(caption_record(id, &sub))
    })?;
    write_file(STAGE, &root.join(CAPTION_FILE), &jsonl(&records))?;
    Ok(format!("wrote {} caption prompts", records.len()))
}

pub fn cmd_gen_srp(cfg: &PipelineConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let root = cfg.out_dir();
    let graph = read_graph_dir("gen-srp", &root)?;
    let imgs = images(cfg)?;
    let pool = thread_pool(cfg.jobs)?;
    let per = per_image(&pool, &image_ids(&imgs), |id| {
        Ok(image_paths(&graph, id, cfg)?
            .iter()
            .map(srp_record)
            .collect::<Vec<_>>())
    })?;
    let records: Vec<SrpRecord> = per.into_iter().flatten().collect();
    write_file("gen-srp", &root.join(SRP_FILE), &jsonl(&records))?;
    Ok(format!("wrote {} reasoning paths", records.len()))
}

pub fn cmd_emit_samples(cfg: &PipelineConfig) -> Result<String, CliError> {
    const STAGE: &str = "emit-samples";
    cfg.validate()?;
    let root = cfg.out_dir();
    let graph = read_graph_dir(STAGE, &root)?;
    let records: Vec<SrpRecord> = read_jsonl(STAGE, &root.join(SRP_FILE))?;
    let mut by_image: BTreeMap<&str, Vec<SrpRecord>> = BTreeMap::new();
    for r in &records {
        by_image
            .entry(r.image_id.as_str())
            .or_default()
            .push(r.clone());
    }
    let ids: Vec<&str> = by_image.keys().copied().collect();
    let pool = thread_pool(cfg.jobs)?;
    let per = per_image(&pool, &ids, |id| {
        let paths = paths_from_records(&graph, &by_image[id])?;
        image_samples(&graph, id, &paths, cfg)
    })?;
    let (s1, s2): (Vec<_>, Vec<_>) = per.into_iter().unzip();
    let s1: Vec<TrainingSample> = s1.into_iter().flatten().collect();
    let s2: Vec<TrainingSample> = s2.into_iter().flatten().collect();
    write_file(STAGE, &root.join(STAGE1_FILE), &jsonl(&s1))?;
    write_file(STAGE, &root.join(STAGE2_FILE), &jsonl(&s2))?;
    Ok(format!(
        "wrote {} stage-1 and {} stage-2 samples",
        s1.len(),
        s2.len()
    ))
}

// ---- full build ----

/// Writes a complete build into `dir`, which must be empty.
fn write_build(cfg: &PipelineConfig, dir: &Path) -> Result<BuildManifest, CliError> {
    let (mut graph, rejected) = build(cfg)?;
    let imgs = images(cfg)?;
    anchor(&mut graph, &imgs)?;
    let pool = thread_pool(cfg.jobs)?;
    let outputs = per_image(&pool, &image_ids(&imgs), |id| {
        process_image(&graph, id, cfg)
    })?;

    write_graph_dir(&graph, dir, cfg.seed)?;
    fs::create_dir_all(dir.join(SUBGRAPH_DIR)).map_err(|e| CliError::io("full-build", dir, e))?;
    let mut captions = Vec::new();
    let mut srps = Vec::new();
    let mut stage1 = Vec::new();
    let mut stage2 = Vec::new();
    for o in outputs {
        write_file("full-build", &subgraph_path(dir, &o.id), &o.subgraph)?;
        captions.push(o.caption);
        srps.extend(o.srps);
        stage1.extend(o.stage1);
        stage2.extend(o.stage2);
    }
    write_file("full-build", &dir.join(CAPTION_FILE), &jsonl(&captions))?;
    write_file("full-build", &dir.join(SRP_FILE), &jsonl(&srps))?;
    write_file("full-build", &dir.join(STAGE1_FILE), &jsonl(&stage1))?;
    write_file("full-build", &dir.join(STAGE2_FILE), &jsonl(&stage2))?;

    let hops: usize = srps.iter().map(|r| r.hops).sum();
    let files: BTreeMap<String, String> = [
        ("nodes", format!("{GRAPH_DIR}/nodes.jsonl")),
        ("edges", format!("{GRAPH_DIR}/edges.jsonl")),
        ("graph_meta", format!("{GRAPH_DIR}/meta.json")),
        ("subgraphs", format!("{SUBGRAPH_DIR}/")),
        ("srps", SRP_FILE.to_string()),
        ("caption_prompts", CAPTION_FILE.to_string()),
        ("stage1_samples", STAGE1_FILE.to_string()),
        ("stage2_samples", STAGE2_FILE.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let manifest = BuildManifest {
        format: MANIFEST_FORMAT.into(),
        tool: "urbangraph".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        city: cfg.city.clone(),
        seed: cfg.seed,
        counts: ManifestCounts {
            nodes: graph.node_count(),
            edges: graph.edge_count(),
            subgraphs: imgs.len(),
            srps: srps.len(),
            stage1_samples: stage1.len(),
            stage2_samples: stage2.len(),
            caption_prompts: captions.len(),
        },
        avg_srp_hops: if srps.is_empty() {
            0.0
        } else {
            hops as f64 / srps.len() as f64
        },
        rejected_features: rejected,
        files,
        config: cfg.echo(),
    };
    let recount = recount(dir).map_err(|e| CliError::io("full-build", dir, e))?;
    if recount != manifest.counts {
        return Err(CliError::data(
            "full-build",
            format!(
                "manifest counts {:?} disagree with files {recount:?}",
                manifest.counts
            ),
        ));
    }
    write_file(
        "full-build",
        &dir.join(MANIFEST_FILE),
        &pretty_json(&manifest),
    )?;
    Ok(manifest)
}

/// Counts read back from the files of a build tree.
pub fn recount(dir: &Path) -> std::io::Result<ManifestCounts> {
    let subgraphs = match fs::read_dir(dir.join(SUBGRAPH_DIR)) {
        Ok(rd) => rd
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == SUBGRAPH_EXT))
            .count(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
        Err(e) => return Err(e),
    };
    Ok(ManifestCounts {
        nodes: count_lines(&dir.join(GRAPH_DIR).join("nodes.jsonl"))?,
        edges: count_lines(&dir.join(GRAPH_DIR).join("edges.jsonl"))?,
        subgraphs,
        srps: count_lines(&dir.join(SRP_FILE))?,
        stage1_samples: count_lines(&dir.join(STAGE1_FILE))?,
        stage2_samples: count_lines(&dir.join(STAGE2_FILE))?,
        caption_prompts: count_lines(&dir.join(CAPTION_FILE))?,
    })
}

/// Builds into a temporary sibling of the output directory and renames it
/// into place only when every stage succeeded. A failed build leaves no
/// partial tree; an earlier build at `out` is replaced.
pub fn run_dataset_build(cfg: &PipelineConfig) -> Result<BuildManifest, CliError> {
    cfg.validate()?;
    let out = cfg.out_dir();
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    if out.exists() {
        let previous_build = out.join(MANIFEST_FILE).is_file();
        let empty = fs::read_dir(&out)
            .map(|mut d| d.next().is_none())
            .unwrap_or(false);
        if !previous_build && !empty {
            return Err(CliError::Config(format!(
                "{} exists and is not a previous build; refusing to replace it",
                out.display()
            )));
        }
    }
    fs::create_dir_all(&parent).map_err(|e| CliError::io("full-build", &parent, e))?;
    let tmp = tempfile::Builder::new()
        .prefix(".urbangraph-build-")
        .tempdir_in(&parent)
        .map_err(|e| CliError::io("full-build", &parent, e))?;
    let manifest = write_build(cfg, tmp.path())?;
    if out.exists() {
        fs::remove_dir_all(&out).map_err(|e| CliError::io("full-build", &out, e))?;
    }
    let staged = tmp.keep();
    fs::rename(&staged, &out).map_err(|e| {
        let _ = fs::remove_dir_all(&staged);
        CliError::io("full-build", &out, e)
    })?;
    Ok(manifest)
}
