use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fol_core::deeponet::{DeepOnet, DeepOnetDataset, DeepOnetTrainer};
use fol_core::fol::{FolDataset, FolModel, FolProblem, FolTrainer, InputEncoding};
use fol_core::io::{
    checkpoint_kind, hash_json, load_json, save_json, solution_point_data, write_deeponet_history,
    write_fol_history, write_solution_csv, write_vtk, DeepOnetCheckpoint, FolCheckpoint, ModelKind, PointData,
};
use fol_core::metrics::compare_fields;
use fol_core::microstructure::{
    fourier_field, generate_two_phase_samples, sample_fourier_coeffs, ElasticityField, Sample, SampleKind,
    SampleSet,
};
use fol_core::solver::{recover_stress, solve_displacement, solve_with_operator, CgStats, SolutionField};
use fol_core::{Mesh, StiffnessOperator};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, Sampling};

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    config_hash: String,
    inputs: Vec<String>,
    config: &'a RunConfig,
}

/// Echoes the resolved config so the run can be repeated from the manifest alone.
fn write_manifest(cfg: &RunConfig, command: &str, inputs: &[&Path]) -> anyhow::Result<()> {
    let manifest = Manifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: hash_json(cfg)?,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        config: cfg,
    };
    let path = cfg.out.join(format!("manifest_{command}.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn prepare_out(cfg: &RunConfig) -> anyhow::Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn default_samples_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("samples.csv")
}

fn read_samples(path: &Path, seed: u64) -> anyhow::Result<SampleSet> {
    let file = File::open(path).with_context(|| format!("opening samples {}", path.display()))?;
    Ok(SampleSet::read_csv(file, seed)?)
}

/// Nodal moduli for one stored sample.
fn sample_field(cfg: &RunConfig, mesh: &Mesh, kind: SampleKind, values: &[f64]) -> anyhow::Result<ElasticityField> {
    match kind {
        SampleKind::Field => {
            if values.len() != mesh.n_nodes() {
                bail!("sample has {} values but the mesh has {} nodes", values.len(), mesh.n_nodes());
            }
            Ok(ElasticityField::new(values.to_vec(), cfg.material.nu))
        }
        SampleKind::Fourier => {
            let spec = cfg
                .fourier_template(mesh.dim())
                .context("Fourier samples need Fourier sampling in the config")?
                .with_coeffs(values.to_vec());
            Ok(fourier_field(&spec, mesh, cfg.material.nu)?)
        }
    }
}

/// The same samples as nodal modulus fields.
fn nodal_samples(cfg: &RunConfig, mesh: &Mesh, set: SampleSet) -> anyhow::Result<SampleSet> {
    if set.kind == SampleKind::Field {
        return Ok(set);
    }
    let samples = set
        .samples
        .iter()
        .map(|s| {
            let field = sample_field(cfg, mesh, set.kind, &s.values)?;
            Ok(Sample { id: s.id, phase_fraction: None, values: field.e })
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(SampleSet { kind: SampleKind::Field, seed: set.seed, samples })
}

pub fn generate(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    cfg.validate()?;
    let mesh = cfg.build_mesh()?;
    let set = match &cfg.sampling {
        Sampling::TwoPhase { n_samples } => {
            let n = mesh.grid().context("two-phase sampling needs a grid")?.n;
            generate_two_phase_samples(*n_samples, n, cfg.material.e_hard, cfg.material.e_soft, cfg.seed)?
        }
        Sampling::Fourier { n_samples, range, .. } => {
            let m = cfg.fourier_template(mesh.dim()).expect("fourier sampling").n_coeffs();
            sample_fourier_coeffs(*n_samples, &vec![*range; m], cfg.seed)?
        }
    };
    prepare_out(cfg)?;
    let path = default_samples_path(cfg);
    set.write_csv(create(&path)?)?;
    write_manifest(cfg, "generate", &[])?;
    Ok(path)
}

fn write_solution(dir: &Path, stem: &str, mesh: &Mesh, field: &ElasticityField, sol: &SolutionField) -> anyhow::Result<()> {
    write_solution_csv(create(&dir.join(format!("{stem}.csv")))?, mesh, sol)?;
    write_vtk(create(&dir.join(format!("{stem}.vtk")))?, mesh, stem, &solution_point_data(sol, Some(&field.e)))?;
    Ok(())
}

/// Reference FEM solve of every sample. Per-sample failures are reported in
/// the summary and do not stop the run.
pub fn solve(cfg: &RunConfig, samples: &Path) -> anyhow::Result<usize> {
    cfg.validate()?;
    let set = read_samples(samples, cfg.seed)?;
    let mesh = cfg.build_mesh()?;
    let dofs = cfg.build_dofs(&mesh)?;
    let op = StiffnessOperator::new(&mesh, cfg.material.nu)?;
    prepare_out(cfg)?;
    let dir = cfg.out.join("solutions");
    fs::create_dir_all(&dir)?;
    let results: Vec<(u64, Result<(CgStats, f64), String>)> = set
        .samples
        .par_iter()
        .map(|s| {
            let r = (|| {
                let field = sample_field(cfg, &mesh, set.kind, &s.values)?;
                let (u, stats) = solve_displacement(&op, &dofs, &field.e)?;
                let energy = op.energy(&field.e, &u)?;
                let stress = recover_stress(&mesh, &field, &u)?;
                let sol = SolutionField { dim: mesh.dim(), u, stress };
                write_solution(&dir, &format!("sample_{}", s.id), &mesh, &field, &sol)?;
                Ok((stats, energy))
            })();
            (s.id, r.map_err(|e: anyhow::Error| format!("{e:#}")))
        })
        .collect();
    let mut summary = String::from("id,status,cg_iterations,relative_residual,energy\n");
    let mut failed = 0;
    for (id, r) in &results {
        match r {
            Ok((stats, energy)) => summary.push_str(&format!(
                "{id},ok,{},{},{energy}\n",
                stats.iterations, stats.relative_residual
            )),
            Err(e) => {
                failed += 1;
                eprintln!("sample {id}: {e}");
                summary.push_str(&format!("{id},\"{}\",,,\n", e.replace('"', "'")));
            }
        }
    }
    fs::write(cfg.out.join("solve_summary.csv"), summary)?;
    write_manifest(cfg, "solve", &[samples])?;
    Ok(results.len() - failed)
}

fn fol_problem(cfg: &RunConfig) -> anyhow::Result<FolProblem> {
    let mesh = cfg.build_mesh()?;
    let dofs = cfg.build_dofs(&mesh)?;
    Ok(FolProblem::new(mesh, dofs, cfg.material.nu)?)
}

/// Trains until `fol.epochs` epochs are done, optionally continuing from a
/// checkpoint whose config matches in everything but the epoch count.
pub fn train_fol(cfg: &RunConfig, samples: &Path, resume: Option<&Path>) -> anyhow::Result<PathBuf> {
    cfg.validate()?;
    let fol_cfg = cfg.fol.clone().context("config has no `fol` section")?;
    let problem = fol_problem(cfg)?;
    let set = read_samples(samples, cfg.seed)?;
    let fourier = match fol_cfg.encoding {
        InputEncoding::FourierCoeffs => {
            Some(cfg.fourier_template(problem.mesh.dim()).context("Fourier encoding needs Fourier sampling")?)
        }
        InputEncoding::NodalE => None,
    };
    let mut trainer = match resume {
        Some(path) => {
            let ck: FolCheckpoint = load_json(path)?;
            let mut t = ck.to_trainer()?;
            let mut expected = t.model.config.clone();
            expected.epochs = fol_cfg.epochs;
            if expected != fol_cfg || t.model.fourier != fourier {
                bail!("checkpoint {} was trained with a different configuration", path.display());
            }
            if t.epochs_done > fol_cfg.epochs {
                bail!("checkpoint already has {} epochs (> {})", t.epochs_done, fol_cfg.epochs);
            }
            t.model.config = fol_cfg.clone();
            t
        }
        None => FolTrainer::new(FolModel::init(&fol_cfg, &problem, fourier)?),
    };
    let set = match fol_cfg.encoding {
        InputEncoding::NodalE => nodal_samples(cfg, &problem.mesh, set)?,
        InputEncoding::FourierCoeffs => set,
    };
    let data = FolDataset::from_samples(&trainer.model, &problem, &set)?;
    let remaining = fol_cfg.epochs - trainer.epochs_done;
    let every = (fol_cfg.epochs / 20).max(1);
    trainer.train(&problem, &data, remaining, |e, l| {
        if e % every == 0 {
            eprintln!("epoch {e}: energy {:.6e} dirichlet {:.6e} total {:.6e}", l.energy, l.dirichlet, l.total);
        }
    })?;
    prepare_out(cfg)?;
    let ck_path = cfg.out.join("fol_checkpoint.json");
    save_json(&ck_path, &FolCheckpoint::from_trainer(&trainer, &hash_json(&(&trainer.model.config, &trainer.model.fourier))?))?;
    write_fol_history(create(&cfg.out.join("fol_history.csv"))?, &trainer.history)?;
    let mut inputs = vec![samples];
    inputs.extend(resume);
    write_manifest(cfg, "train-fol", &inputs)?;
    Ok(ck_path)
}

fn reference_solutions(
    cfg: &RunConfig,
    mesh: &Mesh,
    set: &SampleSet,
) -> anyhow::Result<Vec<(ElasticityField, SolutionField)>> {
    let dofs = cfg.build_dofs(mesh)?;
    let op = StiffnessOperator::new(mesh, cfg.material.nu)?;
    set.samples
        .par_iter()
        .map(|s| {
            let field = sample_field(cfg, mesh, set.kind, &s.values)?;
            let sol = solve_with_operator(&op, mesh, &dofs, &field)
                .with_context(|| format!("reference solve of sample {}", s.id))?;
            Ok((field, sol))
        })
        .collect()
}

/// Data-driven baseline; FEM targets are computed from the samples.
pub fn train_deeponet(cfg: &RunConfig, samples: &Path, resume: Option<&Path>) -> anyhow::Result<PathBuf> {
    cfg.validate()?;
    let d_cfg = cfg.deeponet.clone().context("config has no `deeponet` section")?;
    let mesh = cfg.build_mesh()?;
    let set = read_samples(samples, cfg.seed)?;
    let refs = reference_solutions(cfg, &mesh, &set)?;
    let data = DeepOnetDataset {
        ids: set.samples.iter().map(|s| s.id).collect(),
        e_fields: refs.iter().map(|(f, _)| f.e.clone()).collect(),
        targets: refs.into_iter().map(|(_, s)| s.u).collect(),
    };
    let mut trainer = match resume {
        Some(path) => {
            let ck: DeepOnetCheckpoint = load_json(path)?;
            let mut t = ck.to_trainer()?;
            let mut expected = t.config.clone();
            expected.epochs = d_cfg.epochs;
            if expected != d_cfg || t.epochs_done > d_cfg.epochs {
                bail!("checkpoint {} does not match this configuration", path.display());
            }
            t.config = d_cfg.clone();
            t
        }
        None => DeepOnetTrainer::new(d_cfg.clone(), DeepOnet::init(&d_cfg, mesh.n_nodes(), mesh.dim())?),
    };
    let every = (d_cfg.epochs / 20).max(1);
    let remaining = d_cfg.epochs - trainer.epochs_done;
    trainer.train(&mesh, &data, remaining, |e, l| {
        if e % every == 0 {
            eprintln!("epoch {e}: mse {:.6e}", l.total);
        }
    })?;
    prepare_out(cfg)?;
    let ck_path = cfg.out.join("deeponet_checkpoint.json");
    save_json(&ck_path, &DeepOnetCheckpoint::from_trainer(&trainer, &hash_json(&trainer.config)?))?;
    write_deeponet_history(create(&cfg.out.join("deeponet_history.csv"))?, &trainer.history)?;
    let mut inputs = vec![samples];
    inputs.extend(resume);
    write_manifest(cfg, "train-deeponet", &inputs)?;
    Ok(ck_path)
}

enum Surrogate {
    Fol(FolModel),
    DeepOnet(DeepOnet),
}

/// Error reports and prediction/reference/difference VTK files per test input.
pub fn evaluate(cfg: &RunConfig, checkpoint: &Path, inputs: &Path) -> anyhow::Result<PathBuf> {
    cfg.validate()?;
    let kind = checkpoint_kind(checkpoint).with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    let model = match kind {
        ModelKind::Fol => Surrogate::Fol(load_json::<FolCheckpoint>(checkpoint)?.to_trainer()?.model),
        ModelKind::Deeponet => Surrogate::DeepOnet(load_json::<DeepOnetCheckpoint>(checkpoint)?.to_trainer()?.net),
    };
    let problem = fol_problem(cfg)?;
    let set = read_samples(inputs, cfg.seed)?;
    let refs = reference_solutions(cfg, &problem.mesh, &set)?;
    prepare_out(cfg)?;
    let dir = cfg.out.join("evaluation");
    fs::create_dir_all(&dir)?;
    let mut table = String::from("id,component,err_mse,err_max,homogenized_rel,homogenized_absolute\n");
    for (s, (field, reference)) in set.samples.iter().zip(&refs) {
        let pred = match &model {
            Surrogate::Fol(m) => {
                let input = match m.config.encoding {
                    InputEncoding::NodalE => field.e.clone(),
                    InputEncoding::FourierCoeffs if set.kind == SampleKind::Fourier => s.values.clone(),
                    enc => bail!("{:?} inputs cannot feed a {enc:?} model", set.kind),
                };
                m.predict(&problem, &input)?
            }
            Surrogate::DeepOnet(n) => n.predict(&problem.mesh, field)?,
        };
        let report = compare_fields(&pred, reference)?;
        report.write_csv(create(&dir.join(format!("sample_{}_errors.csv", s.id)))?)?;
        for c in &report.components {
            table.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.id, c.component, c.err_mse, c.err_max, c.homogenized_rel, c.homogenized_absolute
            ));
        }
        let diff = SolutionField {
            dim: pred.dim,
            u: pred.u.iter().zip(&reference.u).map(|(a, b)| (a - b).abs()).collect(),
            stress: pred.stress.iter().zip(&reference.stress).map(|(a, b)| (a - b).abs()).collect(),
        };
        for (tag, f) in [("prediction", &pred), ("reference", reference), ("difference", &diff)] {
            let path = dir.join(format!("sample_{}_{tag}.vtk", s.id));
            write_vtk(create(&path)?, &problem.mesh, tag, &solution_point_data(f, Some(&field.e)))?;
        }
    }
    let path = cfg.out.join("evaluation_errors.csv");
    fs::write(&path, table)?;
    write_manifest(cfg, "evaluate", &[checkpoint, inputs])?;
    Ok(path)
}

/// VTK of each sample's modulus field.
pub fn export(cfg: &RunConfig, samples: &Path) -> anyhow::Result<usize> {
    cfg.validate()?;
    let mesh = cfg.build_mesh()?;
    let set = read_samples(samples, cfg.seed)?;
    prepare_out(cfg)?;
    let dir = cfg.out.join("fields");
    fs::create_dir_all(&dir)?;
    for s in &set.samples {
        let field = sample_field(cfg, &mesh, set.kind, &s.values)?;
        let path = dir.join(format!("sample_{}.vtk", s.id));
        write_vtk(create(&path)?, &mesh, "E", &[PointData::Scalar("E".into(), field.e)])?;
    }
    write_manifest(cfg, "export", &[samples])?;
    Ok(set.len())
}
