//! The policy comparison experiment. Every (object, policy, seed) cell
//! runs one recognition episode; the cells aggregate into per-episode
//! CSVs, per-group median curves, a summary table, and SVG plots, all
//! byte-deterministic for a given configuration.

use rayon::prelude::*;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::contact_sim::Mesh;
use crate::model::{save_library, Library};
use crate::planner::{run_episode, EpisodeResult, Policy};

use super::csv::write_episode_csv;
use super::svg::{plot_lines, PlotSeries, PlotStyle};
use super::{cell_seed, check_library, median, ExperimentConfig, HarnessError};

pub const POLICIES: [Policy; 3] = [Policy::Tree, Policy::Greedy, Policy::Random];

#[derive(Debug, Clone)]
pub struct CellResult {
    pub object: usize,
    pub policy: Policy,
    pub seed_index: u32,
    pub seed_value: u64,
    pub episode: EpisodeResult,
}

#[derive(Debug, Clone)]
pub struct CompareResults {
    pub cells: Vec<CellResult>,
}

fn policy_tag(p: Policy) -> u64 {
    POLICIES.iter().position(|&q| q == p).unwrap() as u64
}

/// Runs every cell of the experiment. Episodes execute in parallel but
/// the result order (object-major, then policy, then seed) and every
/// random stream are fixed by the configuration alone.
pub fn run_compare(
    config: &ExperimentConfig,
    lib: &Library,
) -> Result<CompareResults, HarnessError> {
    config.validate()?;
    check_library(config, lib)?;
    let meshes: Vec<Mesh> = (0..config.objects.len())
        .map(|i| config.mesh(i))
        .collect::<Result<_, _>>()?;

    let mut specs = Vec::new();
    for object in 0..config.objects.len() {
        for &policy in &POLICIES {
            for rep in 0..config.seeds {
                specs.push((object, policy, rep));
            }
        }
    }
    let cells = specs
        .par_iter()
        .map(|&(object, policy, rep)| {
            let seed = cell_seed(
                config.seed_base,
                object as u64,
                policy_tag(policy),
                rep as u64,
            );
            let episode = run_episode(
                lib,
                &meshes[object],
                object,
                policy,
                &config.planner,
                config.max_iterations,
                seed,
            )?;
            Ok(CellResult {
                object,
                policy,
                seed_index: rep,
                seed_value: seed,
                episode,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(CompareResults { cells })
}

/// Per-iteration aggregates over one (object, policy) group. Episodes
/// contribute for as long as they have a record at that iteration; `n`
/// says how many did.
#[derive(Debug, Clone)]
pub struct GroupCurve {
    pub iters: Vec<u32>,
    pub n: Vec<usize>,
    pub median_dist: Vec<f64>,
    pub frac_correct: Vec<f64>,
}

pub fn group_curve(results: &CompareResults, object: usize, policy: Policy) -> GroupCurve {
    let group: Vec<&CellResult> = results
        .cells
        .iter()
        .filter(|c| c.object == object && c.policy == policy)
        .collect();
    let max_len = group
        .iter()
        .map(|c| c.episode.records.len())
        .max()
        .unwrap_or(0);
    let mut out = GroupCurve {
        iters: Vec::new(),
        n: Vec::new(),
        median_dist: Vec::new(),
        frac_correct: Vec::new(),
    };
    for k in 0..max_len {
        let mut dists = Vec::new();
        let mut correct = 0usize;
        for c in &group {
            if let Some(r) = c.episode.records.get(k) {
                dists.push(r.distances[c.episode.true_class]);
                if r.correct {
                    correct += 1;
                }
            }
        }
        // records are contiguous from iteration 0, so index == iteration
        out.iters.push(k as u32);
        out.n.push(dists.len());
        out.median_dist.push(median(&dists));
        out.frac_correct.push(correct as f64 / dists.len() as f64);
    }
    out
}

fn policy_look(p: Policy) -> (&'static str, PlotStyle) {
    match p {
        Policy::Tree => ("#1f77b4", PlotStyle::Solid),
        Policy::Greedy => ("#ff7f0e", PlotStyle::Dashed),
        Policy::Random => ("#2ca02c", PlotStyle::Dashed),
    }
}

/// Early planning iterations render light, late ones dark.
fn shade(i: usize, n: usize) -> String {
    let t = if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    };
    let lerp = |a: u8, b: u8| (f64::from(a) + t * (f64::from(b) - f64::from(a))).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(0xae, 0x08),
        lerp(0xc7, 0x30),
        lerp(0xe8, 0x6b)
    )
}

/// Writes the whole output tree:
///
/// ```text
/// out_dir/
///   model.json
///   medians.csv
///   summary.csv
///   episodes/<label>_<policy>_<seed>.csv
///   plots/distance_<label>.svg
///   plots/rewards_<label>_tree_seed0.svg
/// ```
pub fn write_compare_outputs(
    config: &ExperimentConfig,
    lib: &Library,
    results: &CompareResults,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    let episodes_dir = out_dir.join("episodes");
    let plots_dir = out_dir.join("plots");
    fs::create_dir_all(&episodes_dir)?;
    fs::create_dir_all(&plots_dir)?;
    let provenance = config.provenance();

    save_library(lib, &out_dir.join("model.json"))?;

    for cell in &results.cells {
        let name = format!(
            "{}_{}_{}.csv",
            config.objects[cell.object].label,
            cell.policy.name(),
            cell.seed_index
        );
        write_episode_csv(
            &episodes_dir.join(name),
            &provenance,
            lib,
            &cell.episode.records,
        )?;
    }

    let mut w = BufWriter::new(File::create(out_dir.join("medians.csv"))?);
    writeln!(w, "# config: {provenance}")?;
    writeln!(w, "object,policy,iter,n,median_true_distance,frac_correct")?;
    for object in 0..config.objects.len() {
        for &policy in &POLICIES {
            let curve = group_curve(results, object, policy);
            for k in 0..curve.iters.len() {
                writeln!(
                    w,
                    "{},{},{},{},{:.6},{:.6}",
                    config.objects[object].label,
                    policy.name(),
                    curve.iters[k],
                    curve.n[k],
                    curve.median_dist[k],
                    curve.frac_correct[k]
                )?;
            }
        }
    }
    w.flush()?;
    drop(w);

    let mut w = BufWriter::new(File::create(out_dir.join("summary.csv"))?);
    writeln!(w, "# config: {provenance}")?;
    writeln!(
        w,
        "object,policy,seed,seed_value,iterations,final_correct,first_correct_iter,first_correct_moves,total_moves,total_contacts,depleted"
    )?;
    for cell in &results.cells {
        let recs = &cell.episode.records;
        let last = recs.last().expect("episodes always record the initial grasp");
        let first = recs.iter().find(|r| r.correct);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            config.objects[cell.object].label,
            cell.policy.name(),
            cell.seed_index,
            cell.seed_value,
            last.iter,
            u8::from(last.correct),
            first.map_or(-1, |r| i64::from(r.iter)),
            first.map_or(-1, |r| i64::from(r.moves)),
            last.moves,
            last.contacts,
            u8::from(cell.episode.depleted),
        )?;
    }
    w.flush()?;
    drop(w);

    for (object, spec) in config.objects.iter().enumerate() {
        let series: Vec<PlotSeries> = POLICIES
            .iter()
            .map(|&policy| {
                let curve = group_curve(results, object, policy);
                let (color, style) = policy_look(policy);
                PlotSeries {
                    name: policy.name().to_owned(),
                    color: color.to_owned(),
                    style,
                    points: curve
                        .iters
                        .iter()
                        .zip(&curve.median_dist)
                        .map(|(&i, &d)| (f64::from(i), d))
                        .collect(),
                }
            })
            .collect();
        plot_lines(
            &plots_dir.join(format!("distance_{}.svg", spec.label)),
            &format!("{}: median true-class distance", spec.label),
            "iteration",
            "true-class distance",
            &series,
            &provenance,
        )?;

        if let Some(cell) = results.cells.iter().find(|c| {
            c.object == object && c.policy == Policy::Tree && c.seed_index == 0
        }) {
            let recs: Vec<_> = cell
                .episode
                .records
                .iter()
                .filter(|r| !r.rewards.is_empty())
                .collect();
            let series: Vec<PlotSeries> = recs
                .iter()
                .enumerate()
                .map(|(i, r)| PlotSeries {
                    name: String::new(),
                    color: shade(i, recs.len()),
                    style: PlotStyle::Solid,
                    points: r
                        .rewards
                        .iter()
                        .enumerate()
                        .map(|(s, &v)| ((s + 1) as f64, v))
                        .collect(),
                })
                .collect();
            plot_lines(
                &plots_dir.join(format!("rewards_{}_tree_seed0.svg", spec.label)),
                &format!("{}: planning rewards, first tree episode", spec.label),
                "simulation",
                "reward",
                &series,
                &provenance,
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_sim::PrimitiveKind;
    use crate::harness::{train_library, ObjectSpec, ShapeSpec};
    use crate::planner::IterationRecord;
    use std::sync::OnceLock;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            objects: vec![
                ObjectSpec {
                    label: "sphere".into(),
                    shape: ShapeSpec::Primitive(PrimitiveKind::Sphere { radius: 0.035 }),
                },
                ObjectSpec {
                    label: "box".into(),
                    shape: ShapeSpec::Primitive(PrimitiveKind::Box {
                        x: 0.07,
                        y: 0.07,
                        z: 0.07,
                    }),
                },
            ],
            spacing: 0.05,
            seeds: 2,
            ..ExperimentConfig::default()
        }
    }

    fn small_run() -> &'static (ExperimentConfig, Library, CompareResults) {
        static RUN: OnceLock<(ExperimentConfig, Library, CompareResults)> = OnceLock::new();
        RUN.get_or_init(|| {
            let cfg = small_config();
            let lib = train_library(&cfg).unwrap();
            let results = run_compare(&cfg, &lib).unwrap();
            (cfg, lib, results)
        })
    }

    #[test]
    fn all_cells_run_in_declared_order() {
        let (cfg, _, results) = small_run();
        assert_eq!(results.cells.len(), 2 * 3 * 2);
        let mut k = 0;
        for object in 0..cfg.objects.len() {
            for &policy in &POLICIES {
                for rep in 0..cfg.seeds {
                    let cell = &results.cells[k];
                    assert_eq!(cell.object, object);
                    assert_eq!(cell.policy, policy);
                    assert_eq!(cell.seed_index, rep);
                    assert!(!cell.episode.records.is_empty());
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn group_curves_cover_every_recorded_iteration() {
        let (cfg, _, results) = small_run();
        for object in 0..cfg.objects.len() {
            for &policy in &POLICIES {
                let curve = group_curve(results, object, policy);
                assert!(!curve.iters.is_empty());
                assert_eq!(curve.iters[0], 0);
                // first iteration has every episode on board
                assert_eq!(curve.n[0], cfg.seeds as usize);
                for d in &curve.median_dist {
                    assert!((0.0..=1.0).contains(d));
                }
                for f in &curve.frac_correct {
                    assert!((0.0..=1.0).contains(f));
                }
            }
        }
    }

    #[test]
    fn output_tree_is_complete_and_deterministic() {
        let (cfg, lib, results) = small_run();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        write_compare_outputs(cfg, lib, results, out).unwrap();

        for name in ["model.json", "medians.csv", "summary.csv"] {
            assert!(out.join(name).is_file(), "{name} missing");
        }
        for spec in &cfg.objects {
            assert!(out
                .join("plots")
                .join(format!("distance_{}.svg", spec.label))
                .is_file());
            assert!(out
                .join("plots")
                .join(format!("rewards_{}_tree_seed0.svg", spec.label))
                .is_file());
            for policy in ["tree", "greedy", "random"] {
                for rep in 0..cfg.seeds {
                    assert!(out
                        .join("episodes")
                        .join(format!("{}_{}_{}.csv", spec.label, policy, rep))
                        .is_file());
                }
            }
        }

        // summary rows: header + one per cell
        let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 2 + results.cells.len());

        // a second write into the same directory reproduces every byte
        let mut before = std::collections::BTreeMap::new();
        for entry in walk(out) {
            before.insert(entry.clone(), std::fs::read(&entry).unwrap());
        }
        write_compare_outputs(cfg, lib, results, out).unwrap();
        for (path, bytes) in &before {
            assert_eq!(&std::fs::read(path).unwrap(), bytes, "{path:?} changed");
        }
    }

    fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn rerunning_episodes_reproduces_rewards() {
        let (cfg, lib, results) = small_run();
        let cell = &results.cells[0];
        let mesh = cfg.mesh(cell.object).unwrap();
        let again = run_episode(
            lib,
            &mesh,
            cell.object,
            cell.policy,
            &cfg.planner,
            cfg.max_iterations,
            cell.seed_value,
        )
        .unwrap();
        let flat = |e: &crate::planner::EpisodeResult| -> Vec<f64> {
            e.records.iter().flat_map(|r| r.rewards.clone()).collect()
        };
        assert_eq!(flat(&cell.episode), flat(&again));
        let moves = |e: &crate::planner::EpisodeResult| -> Vec<u32> {
            e.records.iter().map(|r: &IterationRecord| r.moves).collect()
        };
        assert_eq!(moves(&cell.episode), moves(&again));
    }

    #[test]
    fn shade_spans_light_to_dark() {
        assert_eq!(shade(0, 10), "#aec7e8");
        assert_eq!(shade(9, 10), "#08306b");
        assert_eq!(shade(0, 1), "#aec7e8");
    }
}
