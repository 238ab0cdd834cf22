use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use bonefrac::adaptation::{AdaptationModel, AdaptationSettings, RunOutcome};
use bonefrac::bench::{self, CheckResult, ConvergenceTable, OracleConfig, PlateBenchConfig};
use bonefrac::fe::{Density, DirichletBc, QuadratureSettings};
use bonefrac::fracture::{assess, FractureProblem, FractureReport};
use bonefrac::io::{self, PointField};
use bonefrac::mesh::generate::{self, PennySpec, PlateSpec, TubeSpec};
use bonefrac::mesh::{assign_orders, extract_crack_front, parse_msh, write_msh, Mesh, Point};
use bonefrac::mwls::{CalibrationCurve, DensityField, DensitySamples};
use bonefrac::solver::{NewtonOptions, StepperOptions};
use serde::Serialize;
use serde_json::json;

use crate::config::{DensitySource, Generator, Mwls, RunConfig};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

#[derive(Clone, Debug, Default, Serialize)]
pub struct Overrides {
    pub singular: Option<bool>,
    pub pg: Option<usize>,
    pub pl: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.singular {
            cfg.orders.singular = s;
        }
        if let Some(p) = self.pg {
            cfg.orders.pg = p;
        }
        if let Some(p) = self.pl {
            cfg.orders.pl = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Plate,
    Oracle,
    Fd,
    Patch,
    All,
}

fn write(out: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out).map_err(|source| CliError::Output {
        path: out.display().to_string(),
        source,
    })?;
    let path = out.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

fn manifest(out: &Path, command: &str, args: &[String], body: serde_json::Value) -> Result<()> {
    let mut m = json!({
        "tool": "bonefrac",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "args": args,
    });
    if let (Some(obj), serde_json::Value::Object(extra)) = (m.as_object_mut(), body) {
        obj.extend(extra);
    }
    let text = serde_json::to_string_pretty(&m).expect("manifest serialises");
    write(out, "manifest.json", &text).map(|_| ())
}

pub fn generated_mesh(kind: Generator) -> bonefrac::Result<Mesh> {
    match kind {
        Generator::Plate => generate::plate(&PlateSpec::benchmark()),
        Generator::PlateCoarse => generate::plate(&PlateSpec::coarse()),
        Generator::Penny => generate::penny(&PennySpec::default()),
        Generator::Tube => generate::tube(&TubeSpec::default()),
        Generator::TubeCracked => generate::tube(&TubeSpec {
            crack_half_angle: Some(0.8),
            ..TubeSpec::default()
        }),
    }
}

fn load_mesh(cfg: &RunConfig) -> Result<Mesh> {
    if let Some(kind) = cfg.mesh.generate {
        return Ok(generated_mesh(kind)?);
    }
    let path = cfg.mesh.path.as_ref().expect("validated config has a mesh source");
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("mesh not found: {}: {e}", path.display())))?;
    Ok(parse_msh(&text)?)
}

fn mwls_field(samples: DensitySamples, mwls: &Mwls) -> Result<DensityField> {
    let radius = mwls.radius.unwrap_or(3.0 * samples.spacing());
    if !(radius > 0.0) {
        return Err(CliError::Input("cannot infer an MWLS radius from a single sample; set density.mwls.radius".into()));
    }
    let field = DensityField::build(samples, radius, mwls.order)?;
    log::info!(
        "MWLS field: radius {}, order {}, neighbours {:?}",
        field.radius(),
        field.order(),
        field.neighbour_range
    );
    Ok(field)
}

fn read_samples(path: &Path, voxel: bool, calibration: Option<&Path>) -> Result<DensitySamples> {
    let samples = if voxel {
        DensitySamples::read_voxels(path)?
    } else {
        DensitySamples::read_csv(path)?
    };
    Ok(match calibration {
        Some(c) => samples.calibrated(&CalibrationCurve::read_csv(c)?),
        None => samples,
    })
}

fn density(cfg: &RunConfig) -> Result<(Density, serde_json::Value)> {
    Ok(match &cfg.density {
        DensitySource::Uniform => (Density::Uniform(cfg.material.rho0), json!({"uniform": cfg.material.rho0})),
        DensitySource::Value { value } => {
            if !(*value > 0.0) {
                return Err(CliError::Config(format!("density value must be positive, got {value}")));
            }
            (Density::Uniform(*value), json!({"uniform": value}))
        }
        DensitySource::Samples { path, calibration, mwls } | DensitySource::Voxel { path, calibration, mwls } => {
            let voxel = matches!(cfg.density, DensitySource::Voxel { .. });
            let field = mwls_field(read_samples(path, voxel, calibration.as_deref())?, mwls)?;
            let info = json!({"mwls_radius": field.radius(), "mwls_order": field.order(), "samples": field.samples().len()});
            (Density::Mwls(Arc::new(field)), info)
        }
        DensitySource::Snapshot { path, mwls } => {
            let field = mwls_field(DensitySamples::read_csv(path)?, mwls)?;
            let info = json!({"mwls_radius": field.radius(), "mwls_order": field.order(), "samples": field.samples().len()});
            (Density::Mwls(Arc::new(field)), info)
        }
    })
}

fn dirichlet(cfg: &RunConfig, mesh: &Mesh) -> Vec<DirichletBc> {
    cfg.dirichlet.clone().unwrap_or_else(|| DirichletBc::from_groups(mesh))
}

fn newton_options(cfg: &RunConfig) -> NewtonOptions {
    NewtonOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        ..NewtonOptions::default()
    }
}

fn prepare(config: &Path, ov: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(config)?;
    ov.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

pub fn adapt(config: &Path, out: &Path, ov: &Overrides, args: &[String]) -> Result<()> {
    let cfg = prepare(config, ov)?;
    let mesh = load_mesh(&cfg)?;
    let orders = assign_orders(&mesh, cfg.orders.pg, 0, &[])?;
    let bcs = dirichlet(&cfg, &mesh);
    let model = AdaptationModel::new(
        &mesh,
        &orders,
        cfg.material.clone(),
        &bcs,
        &cfg.traction,
        cfg.adapt.influx,
        QuadratureSettings::default(),
    )?;
    let t = &cfg.time;
    let settings = AdaptationSettings {
        stepper: StepperOptions {
            dt0: t.dt0,
            dt_min: t.dt_min,
            dt_max: t.dt_max,
            grow: t.grow,
            t_end: t.t_end,
            max_steps: t.max_steps,
            ..StepperOptions::default()
        },
        newton: newton_options(&cfg),
        equilibrium_tol: t.equilibrium_tol,
        snapshot_times: t.snapshot_times.clone(),
    };
    let start = Instant::now();
    let run = model.run(model.initial_state(), &settings)?;
    let nn = mesh.nodes.len();
    let mut outputs = vec![write(out, "mass_history.csv", &io::mass_history_csv(&run.history))?];
    let mut snaps: Vec<(String, f64, &[f64], &[f64])> = run
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| (format!("snapshot_{i:02}"), s.t, s.rho.as_slice(), s.u.as_slice()))
        .collect();
    snaps.push(("final".into(), run.state.t, &run.state.rho, &run.state.u));
    for (name, time, rho, u) in snaps {
        let nodal = &rho[..nn];
        outputs.push(write(out, &format!("{name}_density.csv"), &io::nodal_csv(&mesh, nodal))?);
        let disp = io::nodal_displacements(&mesh, u);
        let energy = io::nodal_energy_density(&model.disc, u, &model.params, |t, q| {
            let el = model.disc.element(t).expect("element data");
            model.disc.density_at(&el, &el.qps[q], rho).0
        })?;
        let vtk = io::vtk(
            &mesh,
            &format!("adaptation t = {time}"),
            &[
                PointField::Scalar("density", nodal.to_vec()),
                PointField::Vector("displacement", disp),
                PointField::Scalar("energy_density", energy),
            ],
        )?;
        outputs.push(write(out, &format!("{name}.vtk"), &vtk)?);
    }
    let last = run.history.last().expect("history starts with t = 0");
    let first = &run.history[0];
    println!(
        "adapt: outcome {:?}, t = {:.6}, steps {}, mass {:.8} -> {:.8} ({} s)",
        run.outcome,
        last.t,
        run.history.len() - 1,
        first.mass,
        last.mass,
        start.elapsed().as_secs()
    );
    manifest(
        out,
        "adapt",
        args,
        json!({
            "config": cfg,
            "overrides": ov,
            "seed": cfg.seed,
            "dofs": model.n_total(),
            "outcome": run.outcome,
            "final_time": last.t,
            "initial_mass": first.mass,
            "final_mass": last.mass,
            "outputs": outputs,
        }),
    )?;
    match run.outcome {
        RunOutcome::Failed(msg) => Err(CliError::Numerical(format!("adaptation stopped early: {msg}"))),
        _ => Ok(()),
    }
}

fn fracture_summary(rep: &FractureReport, units: &crate::config::Units) -> String {
    let mut s = String::new();
    for (i, f) in rep.fronts.iter().enumerate() {
        s += &format!(
            "front {i}: nodes {}, length {:.6} {}, G {:.6e}, K_I {}, phi {:.6e}, margin (g_c/G) {:.4}, margin sqrt {:.4}\n",
            f.nodes.len(),
            f.length,
            units.length,
            f.g,
            f.k_i.map_or("n/a".into(), |k| format!("{k:.6e}")),
            f.griffith.phi,
            f.griffith.margin_linear,
            f.griffith.margin_sqrt
        );
    }
    s += &format!(
        "overall: G_max {:.6e}, margin (g_c/G) {:.4}, margin sqrt {:.4}, dofs {}, Newton iterations {}\n",
        rep.g_max, rep.griffith.margin_linear, rep.griffith.margin_sqrt, rep.dofs, rep.newton_iterations
    );
    s
}

pub fn fracture(config: &Path, out: &Path, ov: &Overrides, args: &[String]) -> Result<()> {
    let cfg = prepare(config, ov)?;
    let mesh = load_mesh(&cfg)?;
    let front = extract_crack_front(&mesh, &cfg.fracture.crack_group)?;
    let (density, density_info) = density(&cfg)?;
    let problem = FractureProblem {
        mesh: &mesh,
        front,
        density,
        material: cfg.material.clone(),
        dirichlet: dirichlet(&cfg, &mesh),
        tractions: cfg.traction.clone(),
        load_factor: cfg.fracture.load_factor,
        pg: cfg.orders.pg,
        pl: cfg.orders.pl,
        singular: cfg.orders.singular,
        quadrature: QuadratureSettings::default(),
        newton: newton_options(&cfg),
    };
    let start = Instant::now();
    let (sol, rep) = assess(&problem)?;
    let mut outputs = vec![
        write(out, "front_nodes.csv", &io::front_csv(&rep))?,
        write(out, "fronts.csv", &io::front_summary_csv(&rep))?,
    ];
    let nodal_density: Vec<f64> = match &problem.density {
        Density::Uniform(r) => vec![*r; mesh.nodes.len()],
        Density::Mwls(f) => mesh.nodes.iter().map(|p| f.eval(p)).collect::<bonefrac::Result<_>>()?,
        _ => unreachable!("the CLI builds uniform or MWLS densities"),
    };
    let energy = io::nodal_energy_density(&sol.disc, &sol.u, &problem.material, |t, q| sol.density_at(t, q).0)?;
    let vtk = io::vtk(
        &mesh,
        "fracture assessment",
        &[
            PointField::Vector("displacement", io::nodal_displacements(&mesh, &sol.u)),
            PointField::Scalar("density", nodal_density),
            PointField::Scalar("energy_density", energy),
        ],
    )?;
    outputs.push(write(out, "fields.vtk", &vtk)?);
    let summary = fracture_summary(&rep, &cfg.units);
    outputs.push(write(out, "summary.txt", &summary)?);
    print!("{summary}");
    log::info!("fracture assessment took {:.2} s", start.elapsed().as_secs_f64());
    manifest(
        out,
        "fracture",
        args,
        json!({
            "config": cfg,
            "overrides": ov,
            "seed": cfg.seed,
            "density": density_info,
            "report": rep,
            "outputs": outputs,
        }),
    )
}

fn check_lines(checks: &[CheckResult]) -> String {
    checks
        .iter()
        .map(|c| {
            format!(
                "{} {}: {:.4e} (tolerance {:.1e})\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.error,
                c.tolerance
            )
        })
        .collect()
}

fn checks_csv(checks: &[CheckResult]) -> String {
    let mut s = String::from("name,error,tolerance,passed\n");
    for c in checks {
        s += &format!("\"{}\",{:.6e},{:.1e},{}\n", c.name.replace('"', "'"), c.error, c.tolerance, c.passed);
    }
    s
}

/// Budget for one plate sweep, in seconds.
const SWEEP_BUDGET: f64 = 600.0;

pub fn bench(suite: Suite, out: &Path, cap: usize, ov: &Overrides, args: &[String]) -> Result<()> {
    let mut checks: Vec<CheckResult> = Vec::new();
    let mut outputs = Vec::new();
    let seed = ov.seed.unwrap_or(1);
    let run = |s: Suite| suite == s || suite == Suite::All;
    if run(Suite::Plate) {
        let mut orders = PlateBenchConfig::sweep(cap);
        if let Some(pg) = ov.pg {
            orders.retain(|o| o.0 == pg);
        }
        if let Some(pl) = ov.pl {
            orders.retain(|o| o.1 <= pl);
        }
        let flags = match ov.singular {
            Some(s) => vec![s],
            None => vec![false, true],
        };
        let mut tables: Vec<ConvergenceTable> = Vec::new();
        for singular in flags {
            let cfg = PlateBenchConfig {
                orders: orders.clone(),
                singular,
                ..PlateBenchConfig::default()
            };
            let table = bench::plate_benchmark(&cfg)?;
            let name = if singular { "plate_singular.csv" } else { "plate_standard.csv" };
            outputs.push(write(out, name, &table.to_csv())?);
            checks.extend(bench::plate_checks(&table, cap, SWEEP_BUDGET));
            tables.push(table);
        }
        if let [standard, singular] = tables.as_slice() {
            checks.extend(bench::singular_checks(standard, singular, 3.0));
        }
    }
    if run(Suite::Oracle) {
        let mut cfg = OracleConfig::default();
        if let Some(s) = ov.singular {
            cfg.plate.singular = s;
        }
        let table = bench::oracle_benchmark(&cfg)?;
        outputs.push(write(out, "oracle.csv", &table.to_csv())?);
        checks.extend(bench::oracle_checks(&table, 1.0));
    }
    if run(Suite::Fd) {
        let fd = bench::fd_suite(seed)?;
        outputs.push(write(out, "fd.csv", &checks_csv(&fd))?);
        checks.extend(fd);
    }
    if run(Suite::Patch) {
        let patch = bench::patch_suite()?;
        outputs.push(write(out, "patch.csv", &checks_csv(&patch))?);
        checks.extend(patch);
    }
    let summary = check_lines(&checks);
    outputs.push(write(out, "summary.txt", &summary)?);
    print!("{summary}");
    manifest(
        out,
        "bench",
        args,
        json!({"suite": suite, "cap": cap, "seed": seed, "overrides": ov, "checks": checks, "outputs": outputs}),
    )?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}

pub struct MwlsFitArgs {
    pub samples: Option<PathBuf>,
    pub voxels: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub radius: Option<f64>,
    pub order: usize,
    pub query: Option<PathBuf>,
}

fn read_query(path: &Path) -> Result<Vec<Point>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("query {}: {e}", path.display())))?;
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.chars().any(|c| c.is_ascii_alphabetic())) {
            continue;
        }
        let v: std::result::Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match v.as_deref() {
            Ok([x, y, z, ..]) => pts.push(Point::new(*x, *y, *z)),
            _ => return Err(CliError::Input(format!("query {} line {}: expected x,y,z", path.display(), i + 1))),
        }
    }
    Ok(pts)
}

pub fn mwls_fit(a: MwlsFitArgs, out: &Path, args: &[String]) -> Result<()> {
    let (path, voxel) = match (&a.samples, &a.voxels) {
        (Some(p), _) => (p, false),
        (None, Some(p)) => (p, true),
        (None, None) => return Err(CliError::Input("give --samples or --voxels".into())),
    };
    let samples = read_samples(path, voxel, a.calibration.as_deref())?;
    let field = mwls_field(samples, &Mwls { radius: a.radius, order: a.order })?;
    let points = match &a.query {
        Some(q) => read_query(q)?,
        None => field.samples().points.clone(),
    };
    let mut csv = String::from("x,y,z,value,dx,dy,dz\n");
    for p in &points {
        let (v, g) = field.eval_grad(p)?;
        csv += &format!("{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n", p.x, p.y, p.z, v, g.x, g.y, g.z);
    }
    let outputs = vec![write(out, "mwls_query.csv", &csv)?];
    println!(
        "mwls-fit: {} samples, radius {}, order {}, neighbours {:?}, {} query points",
        field.samples().len(),
        field.radius(),
        field.order(),
        field.neighbour_range,
        points.len()
    );
    manifest(
        out,
        "mwls-fit",
        args,
        json!({
            "samples": a.samples, "voxels": a.voxels, "calibration": a.calibration, "query": a.query,
            "radius_requested": a.radius, "radius_used": field.radius(), "order": field.order(),
            "neighbour_range": field.neighbour_range, "outputs": outputs,
        }),
    )
}

pub fn validate_mesh(path: &Path, crack_group: &str) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("mesh not found: {}: {e}", path.display())))?;
    let mesh = parse_msh(&text)?;
    let diag = mesh.validate();
    print!("{diag}");
    if mesh.groups.contains_key(crack_group) {
        let front = extract_crack_front(&mesh, crack_group)?;
        println!(
            "crack group {crack_group}: {} front nodes, {} front edges, {} polylines",
            front.nodes.len(),
            front.edges.len(),
            front.polylines.len()
        );
    } else {
        println!("crack group {crack_group}: absent");
    }
    if diag.all_passed() {
        Ok(())
    } else {
        Err(CliError::Core(bonefrac::Error::Topology("mesh validation failed".into())))
    }
}

pub fn generate(kind: Generator, out: &Path) -> Result<()> {
    let mesh = generated_mesh(kind)?;
    let dir = out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = out.file_name().ok_or_else(|| CliError::Input(format!("not a file path: {}", out.display())))?;
    write(dir, &name.to_string_lossy(), &write_msh(&mesh))?;
    println!("{kind:?}: {} nodes, {} tets -> {}", mesh.nodes.len(), mesh.tets.len(), out.display());
    Ok(())
}
