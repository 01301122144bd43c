use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Matrix4;

use pedpred::config::{ConfigError, RunConfig};
use pedpred::dynamics::PedestrianState;
use pedpred::evaluation::{
    benchmark, covariance_metrics, error_scatter_csv, estimate_states, load_trajectories,
    prediction_errors, synth_dataset, write_trajectories, BenchConfig, EvalError, EvalOptions,
    LqrPathPredictor, MetricsReport, PositionPredictor, RlPathPredictor, SynthConfig,
};
use pedpred::lqr::LqrError;
use pedpred::map::{MapDocument, MapError};
use pedpred::plot::{render_svg, tree_csv};
use pedpred::predictor::{PredictError, PredictionDocument, Predictor};
use pedpred::rl_baseline::{RlError, RlModel, ValueCache};
use pedpred::roadgraph::{build_graph, GraphError};
use pedpred::scenario::{four_way_intersection, IntersectionLayout, INTERSECTION_START};

#[derive(Parser)]
#[command(name = "pedpred", version, about = "Road-graph pedestrian motion prediction")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Map document (JSON); the built-in four-way intersection by default.
    #[arg(long, global = true)]
    map: Option<PathBuf>,
    /// Seed for synthetic data and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Horizons in steps, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    tau: Option<Vec<usize>>,
}

#[derive(Subcommand)]
enum Command {
    /// Predict from one initial state and write the prediction tree.
    Predict {
        /// Initial state `x,y,v,theta`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        state: Option<Vec<f64>>,
        /// Steps to predict (overrides --tau and the config horizon).
        #[arg(long)]
        horizon: Option<usize>,
        /// Also write an SVG plot.
        #[arg(long)]
        svg: bool,
    },
    /// Compute error and covariance statistics on a trajectory file.
    Evaluate {
        /// Trajectory file (`t,x,y[,id,label]`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
        /// Evaluate every n-th start step
        #[arg(long)]
        stride: Option<usize>,
        /// Add the root-mean-square error column to the text report.
        #[arg(long)]
        rms: bool,
    },
    /// Time both predictors.
    Bench {
        /// Predictions timed per horizon and method
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Write a synthetic trajectory file.
    Synth {
        /// Number of trajectories
        #[arg(long, default_value_t = 46)]
        count: usize,
        /// Trajectories that use a crosswalk (29 of 46 by default).
        #[arg(long)]
        crossing: Option<usize>,
        /// Multiplier on the process noise driving the walkers
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Lqr,
    Rl,
    Both,
}

enum Failure {
    Input(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<MapError> for Failure {
    fn from(e: MapError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<PredictError> for Failure {
    fn from(e: PredictError) -> Self {
        match e {
            PredictError::Lqr(LqrError::NoConvergence { .. } | LqrError::NotStabilizable(_)) => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<RlError> for Failure {
    fn from(e: RlError) -> Self {
        match e {
            RlError::NoConvergence { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Predict(p) => p.into(),
            EvalError::Rl(r) => r.into(),
            EvalError::NoValidWindows { .. } | EvalError::InsufficientSamples { .. } | EvalError::TooShort { .. } => {
                Failure::Data(e.to_string())
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

struct Setup {
    config: RunConfig,
    doc: MapDocument,
}

impl Setup {
    fn new(common: &Common) -> Result<Self, Failure> {
        let mut config = match &common.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(map) = &common.map {
            config.map = Some(map.clone());
        }
        if let Some(seed) = common.seed {
            config.seeds.synth = seed;
            config.seeds.rl = seed;
        }
        if let Some(tau) = &common.tau {
            config.taus = tau.clone();
        }
        config.validate()?;
        let mut doc = match &config.map {
            Some(path) => MapDocument::load(path)?,
            None => four_way_intersection(&IntersectionLayout::default()),
        };
        for e in &mut doc.edges {
            e.d.get_or_insert(config.switch_distance);
        }
        Ok(Self { config, doc })
    }

    fn predictor(&self) -> Result<Predictor, Failure> {
        let graph = build_graph(&self.doc)?;
        for w in graph.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(Predictor::new(graph, self.config.predictor_params())?)
    }

    fn rl_model(&self) -> Result<RlModel, Failure> {
        let rl = &self.config.rl;
        Ok(match &rl.cache_dir {
            Some(dir) => RlModel::solve_cached(&self.doc, rl.cell_size, rl.rewards, rl.tolerance, &ValueCache::new(dir))?,
            None => RlModel::solve(&self.doc, rl.cell_size, rl.rewards, rl.tolerance)?,
        })
    }
}

fn cmd_predict(common: &Common, state: Option<Vec<f64>>, horizon: Option<usize>, svg: bool) -> Result<(), Failure> {
    let setup = Setup::new(common)?;
    let predictor = setup.predictor()?;
    let [x, y, v, theta] = match state.as_deref() {
        Some(&[x, y, v, theta]) => [x, y, v, theta],
        Some(_) => return Err(Failure::Input("--state takes x,y,v,theta".into())),
        None => INTERSECTION_START,
    };
    let horizon = horizon
        .or(common.tau.as_ref().and_then(|t| t.iter().max().copied()))
        .unwrap_or(setup.config.horizon);
    let tree = predictor.predict_horizon(&PedestrianState { x, y, v, theta }, &Matrix4::zeros(), horizon)?;
    if tree.truncated {
        eprintln!("warning: branch budget reached, {} spawns dropped", tree.pruned);
    }
    let out = common.out.clone().unwrap_or_else(|| "prediction.json".into());
    write(&out, &PredictionDocument::from_tree(&tree).to_json())?;
    write(&out.with_extension("csv"), &tree_csv(&tree))?;
    if svg {
        write(&out.with_extension("svg"), &render_svg(&setup.doc, Some(&tree), None, 10)?)?;
    }
    println!(
        "{} branches, {} leaves, horizon {} -> {}",
        tree.branches.len(),
        tree.leaves().count(),
        horizon,
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(common: &Common, data: &Path, method: Method, stride: Option<usize>, rms: bool) -> Result<(), Failure> {
    let setup = Setup::new(common)?;
    let config = &setup.config;
    let trajectories = load_trajectories(data)?;
    if trajectories.is_empty() {
        return Err(Failure::Data(format!("{} contains no trajectories", data.display())));
    }
    let tracks = trajectories
        .iter()
        .map(|t| estimate_states(t, config.t_s))
        .collect::<Result<Vec<_>, _>>()?;
    let options = EvalOptions {
        stride: stride.unwrap_or(config.stride),
    };
    let predictor = setup.predictor()?;
    let lqr = LqrPathPredictor {
        predictor: &predictor,
        initial_cov: Matrix4::zeros(),
    };
    let model = match method {
        Method::Lqr => None,
        _ => Some(setup.rl_model()?),
    };
    let rl = model.as_ref().map(|model| RlPathPredictor {
        model,
        alpha: config.rl.alpha,
        samples: config.rl.samples,
        t_s: config.t_s,
        seed: config.seeds.rl,
    });
    let mut methods: Vec<&dyn PositionPredictor> = Vec::new();
    if method != Method::Rl {
        methods.push(&lqr);
    }
    if let Some(rl) = &rl {
        methods.push(rl);
    }

    let out = common.out.clone().unwrap_or_else(|| "metrics".into());
    let mut reports = Vec::new();
    let mut tables = Vec::new();
    for m in methods {
        let table = prediction_errors(&tracks, m, &config.taus, options)?;
        let cov = covariance_metrics(&table)?;
        let report = MetricsReport::new(&table, &cov);
        print!("{}", report.to_text(rms));
        write(&out.join(format!("metrics_{}.txt", report.method)), &report.to_text(rms))?;
        write(&out.join(format!("metrics_{}.json", report.method)), &report.to_json())?;
        reports.push(report);
        tables.push(table);
    }
    write(&out.join("metrics.csv"), &MetricsReport::to_csv(&reports)?)?;
    write(&out.join("errors.csv"), &error_scatter_csv(&tables)?)?;
    Ok(())
}

fn cmd_bench(common: &Common, iterations: Option<usize>) -> Result<(), Failure> {
    let setup = Setup::new(common)?;
    let config = &setup.config;
    let predictor = setup.predictor()?;
    let model = setup.rl_model()?;
    let [x, y, v, theta] = config.bench.start;
    let bench = BenchConfig {
        taus: common.tau.clone().unwrap_or_else(|| config.bench.taus.clone()),
        iterations: iterations.unwrap_or(config.bench.iterations),
        rl_samples: config.rl.samples,
        alpha: config.rl.alpha,
        start: PedestrianState { x, y, v, theta },
        goal: config.bench.goal,
        seed: config.seeds.rl,
    };
    let table = benchmark(&predictor, &model, &bench)?;
    print!("{}", table.to_text());
    let out = common.out.clone().unwrap_or_else(|| "runtime".into());
    write(&out.join("runtime.txt"), &table.to_text())?;
    write(&out.join("runtime.csv"), &table.to_csv()?)?;
    Ok(())
}

fn cmd_synth(common: &Common, count: usize, crossing: Option<usize>, noise_scale: f64) -> Result<(), Failure> {
    let setup = Setup::new(common)?;
    let predictor = setup.predictor()?;
    let mut synth = SynthConfig::with_count(count, setup.config.seeds.synth);
    if let Some(c) = crossing {
        synth.crossing = c;
    }
    synth.noise_scale = noise_scale;
    let data = synth_dataset(&predictor, &synth);
    let mut buf = Vec::new();
    write_trajectories(&mut buf, &data)?;
    let out = common.out.clone().unwrap_or_else(|| "trajectories.csv".into());
    write(&out, &String::from_utf8(buf).expect("csv output is utf-8"))?;
    println!("{} trajectories -> {}", data.len(), out.display());
    Ok(())
}

fn init_threads() {
    if let Some(n) = std::env::var("PEDPRED_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Command::Predict { state, horizon, svg } => cmd_predict(&cli.common, state, horizon, svg),
        Command::Evaluate {
            data,
            method,
            stride,
            rms,
        } => cmd_evaluate(&cli.common, &data, method, stride, rms),
        Command::Bench { iterations } => cmd_bench(&cli.common, iterations),
        Command::Synth {
            count,
            crossing,
            noise_scale,
        } => cmd_synth(&cli.common, count, crossing, noise_scale),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
