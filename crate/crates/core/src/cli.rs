//! Command-line front end: scene generation, single matches, sweeps,
//! matcher comparison, ablation and timing.
//!
//! Exit status is 0 on success, 1 when a solve or file operation fails and
//! 2 for usage errors, including out-of-range numeric flags.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cost::{pairwise_cost_matrix, BackgroundCost, ClassCost, CostWeights};
use crate::harness::{
    ablation_grid, compare_matchers, epsilon_sweep, linspace, timing_benchmark, write_ablation_csv,
    write_bench_csv, write_comparison, write_csv, write_matrix_csv, CompareConfig, SweepConfig,
};
use crate::numfmt::g17;
use crate::scenes::{generate_scene, load_scene, save_scene, scene_to_json, Scene, SceneConfig};
use crate::solvers::{
    adaptive_epsilon, assignment_plan, extract_hard_matches, hungarian_augmented, rtp_unbalanced,
    sinkhorn_balanced, sinkhorn_log_domain, HardenMode, Kappa, Marginals, RtpParams, RtpVariant,
    SinkhornParams,
};

const DEFAULT_EPS0: f64 = 0.2;
const DEFAULT_KAPPA2: f64 = 0.01;

#[derive(Debug, Parser)]
#[command(
    name = "rtpmatch",
    version,
    about = "Set matching with regularized transport plans"
)]
pub struct Cli {
    /// Worker threads for parallel drivers (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene and write it as JSON.
    Gen(GenCmd),
    /// Match one scene with a single solver and write the plan.
    Match(MatchCmd),
    /// Solve the regularized plan over a grid of ε values.
    Sweep(SweepCmd),
    /// Run every matcher on one scene; write tables and heatmaps.
    Compare(CompareCmd),
    /// Mean hardened F1 over an (ε₀, κ₂) grid on generated scenes.
    Ablate(AblateCmd),
    /// Time Sinkhorn sweeps against problem size.
    Bench(BenchCmd),
}

#[derive(Debug, Clone, Args)]
pub struct GeneratorArgs {
    #[arg(long, default_value_t = 4)]
    pub objects: usize,
    /// Mean number of duplicate predictions per object.
    #[arg(long, default_value_t = 0.5, value_parser = non_negative)]
    pub duplicates: f64,
    #[arg(long, default_value_t = 0.0, value_parser = unit_interval)]
    pub miss_rate: f64,
    #[arg(long, default_value_t = 0.02, value_parser = non_negative)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0.2, value_parser = unit_interval)]
    pub class_noise: f64,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 1)]
    pub clutter: usize,
    /// Append a no-object probability slot to each prediction.
    #[arg(long)]
    pub no_object: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl GeneratorArgs {
    fn config(&self) -> SceneConfig {
        SceneConfig {
            n_objects: self.objects,
            duplicates_per_object: self.duplicates,
            miss_rate: self.miss_rate,
            box_jitter: self.jitter,
            class_noise: self.class_noise,
            num_classes: self.classes,
            clutter: self.clutter,
            no_object: self.no_object,
        }
    }
}

#[derive(Debug, Clone, Args)]
#[group(id = "scene_source", required = true, multiple = false, args = ["scene", "generate"])]
pub struct SceneArgs {
    /// Scene JSON file.
    pub scene: Option<PathBuf>,
    /// Generate the scene from the generator flags instead of reading a file.
    #[arg(long)]
    pub generate: bool,
    #[command(flatten)]
    pub generator: GeneratorArgs,
}

impl SceneArgs {
    fn load(&self) -> anyhow::Result<Scene> {
        match &self.scene {
            Some(path) => Ok(load_scene(path)?),
            None => Ok(generate_scene(
                &self.generator.config(),
                self.generator.seed,
            )?),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct WeightArgs {
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    pub lambda_class: f64,
    #[arg(long, default_value_t = 5.0, value_parser = non_negative)]
    pub lambda_bbox: f64,
    #[arg(long, default_value_t = 2.0, value_parser = non_negative)]
    pub lambda_giou: f64,
    /// Classification term: -log p or 1 - p.
    #[arg(long, value_enum, default_value_t = ClassCostArg::NegLog)]
    pub class_cost: ClassCostArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassCostArg {
    NegLog,
    OneMinus,
}

impl WeightArgs {
    fn weights(&self) -> anyhow::Result<CostWeights> {
        let class_cost = match self.class_cost {
            ClassCostArg::NegLog => ClassCost::NegLog,
            ClassCostArg::OneMinus => ClassCost::OneMinus,
        };
        Ok(
            CostWeights::new(self.lambda_class, self.lambda_bbox, self.lambda_giou)?
                .with_class_cost(class_cost),
        )
    }
}

#[derive(Debug, Clone, Args)]
pub struct EpsArgs {
    /// Adaptive entropy weight: ε = ε₀ / ln M (the default, with ε₀ = 0.2).
    #[arg(long, value_parser = positive, conflicts_with = "eps")]
    pub eps0: Option<f64>,
    /// Fixed entropy weight.
    #[arg(long, value_parser = positive)]
    pub eps: Option<f64>,
}

impl EpsArgs {
    fn resolve(&self, m: usize) -> anyhow::Result<f64> {
        match self.eps {
            Some(eps) => Ok(eps),
            None => Ok(adaptive_epsilon(self.eps0.unwrap_or(DEFAULT_EPS0), m)?),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RtpArgs {
    /// Ground-truth marginal weight; κ₁ = 1 − κ₂.
    #[arg(long, default_value_t = DEFAULT_KAPPA2, value_parser = unit_interval)]
    pub kappa2: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::Damped)]
    pub variant: VariantArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Damped,
    Literal,
}

impl From<VariantArg> for RtpVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Damped => RtpVariant::Damped,
            VariantArg::Literal => RtpVariant::Literal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Hungarian,
    Sinkhorn,
    SinkhornLog,
    Rtp,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Directory receiving CSV and SVG outputs.
    #[arg(long, env = "RTPMATCH_OUT_DIR", default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenCmd {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Output file; the scene is printed to stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatchCmd {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, value_enum, default_value_t = SolverArg::Rtp)]
    pub solver: SolverArg,
    #[command(flatten)]
    pub eps: EpsArgs,
    #[command(flatten)]
    pub rtp: RtpArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Constant background cost for Hungarian; defaults to the no-object rule.
    #[arg(long, value_parser = non_negative)]
    pub bg_cost: Option<f64>,
    #[arg(long, default_value_t = 1e-9, value_parser = positive)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iter: usize,
    /// Prediction weights ν: uniform, or proportional to max class probability.
    #[arg(long, value_enum, default_value_t = MarginalsArg::Uniform)]
    pub marginals: MarginalsArg,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MarginalsArg {
    Uniform,
    Confidence,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// ε grid as `start:stop:count` or a comma-separated list.
    #[arg(long, default_value = "0.01:1.0:10", value_parser = eps_grid)]
    pub eps: EpsGrid,
    #[command(flatten)]
    pub rtp: RtpArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CompareCmd {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub eps: EpsArgs,
    #[command(flatten)]
    pub rtp: RtpArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long, value_parser = non_negative)]
    pub bg_cost: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct AblateCmd {
    /// Number of generated scenes, seeded `seed .. seed + scenes`.
    #[arg(long, default_value_t = 100)]
    pub scenes: usize,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long, value_delimiter = ',', value_parser = positive,
          default_value = "0.05,0.1,0.15,0.2,0.25,0.35,0.5")]
    pub eps0_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_parser = unit_interval,
          default_value = "0.001,0.01,0.1,0.5")]
    pub kappa2_grid: Vec<f64>,
    #[arg(long, value_enum, default_value_t = VariantArg::Damped)]
    pub variant: VariantArg,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BenchCmd {
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Parsed `--eps` grid for the sweep command.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsGrid(pub Vec<f64>);

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be nonnegative, got {v}"))
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must lie in [0, 1], got {v}"))
    }
}

fn eps_grid(s: &str) -> Result<EpsGrid, String> {
    let grid = match s.split(':').collect::<Vec<_>>().as_slice() {
        [a, b, n] => {
            let count: usize = n
                .trim()
                .parse()
                .map_err(|_| format!("`{n}` is not a count"))?;
            linspace(positive(a)?, positive(b)?, count)
        }
        [_] => s.split(',').map(positive).collect::<Result<_, _>>()?,
        _ => return Err(format!("`{s}` is neither start:stop:count nor a list")),
    };
    if grid.len() < 2 {
        return Err("the grid needs at least 2 points".into());
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err("the grid must be strictly increasing".into());
    }
    Ok(EpsGrid(grid))
}

fn background(bg_cost: Option<f64>) -> BackgroundCost {
    bg_cost.map_or_else(BackgroundCost::default, BackgroundCost::Constant)
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

enum Failure {
    Usage(String),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::Run(e.into()))?;
    }
    match cli.command {
        Command::Gen(c) => {
            let config = c.generator.config();
            config
                .validate()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let scene = generate_scene(&config, c.generator.seed).map_err(anyhow::Error::from)?;
            match c.output {
                Some(path) => {
                    save_scene(&scene, &path).map_err(anyhow::Error::from)?;
                    println!("{}", path.display());
                }
                None => print!("{}", scene_to_json(&scene)),
            }
            Ok(())
        }
        Command::Match(c) => Ok(run_match(c)?),
        Command::Sweep(c) => Ok(run_sweep(c)?),
        Command::Compare(c) => Ok(run_compare(c)?),
        Command::Ablate(c) => {
            if c.scenes == 0 {
                return Err(Failure::Usage("--scenes must be at least 1".into()));
            }
            c.generator
                .config()
                .validate()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            Ok(run_ablate(c)?)
        }
        Command::Bench(c) => Ok(run_bench(c)?),
    }
}

fn run_match(c: MatchCmd) -> anyhow::Result<()> {
    let scene = c.scene.load()?;
    let weights = c.weights.weights()?;
    let cost = pairwise_cost_matrix(&scene, &weights)?;
    let marg = match c.marginals {
        MarginalsArg::Uniform => Marginals::uniform(scene.m(), scene.n())?,
        MarginalsArg::Confidence => Marginals::confidence_weighted(&scene)?,
    };
    let eps = c.eps.resolve(scene.m())?;
    let plan = match c.solver {
        SolverArg::Hungarian => {
            let bg = background(c.bg_cost).per_prediction(&scene, &weights);
            let aug = crate::cost::background_augmented_cost_per_row(&cost, &bg)?;
            assignment_plan(&hungarian_augmented(&aug)?, &marg)?
        }
        SolverArg::Sinkhorn | SolverArg::SinkhornLog => {
            let params = SinkhornParams::new(eps)
                .with_tol(c.tol)
                .with_max_iter(c.max_iter);
            if c.solver == SolverArg::Sinkhorn {
                sinkhorn_balanced(&cost, &marg, &params)?
            } else {
                sinkhorn_log_domain(&cost, &marg, &params)?
            }
        }
        SolverArg::Rtp => {
            let params = RtpParams::new(Kappa::from_kappa2(c.rtp.kappa2)?, eps)
                .with_variant(c.rtp.variant.into())
                .with_tol(c.tol)
                .with_max_iter(c.max_iter);
            rtp_unbalanced(&cost, &marg, &params)?
        }
    };
    let hard = extract_hard_matches(&plan, &cost, HardenMode::ArgmaxPerGt)?;

    ensure_dir(&c.out.out_dir)?;
    let plan_path = c.out.out_dir.join("plan.csv");
    write_matrix_csv(
        &plan_path,
        plan.gamma().view(),
        &crate::harness::pred_labels(scene.m()),
        &crate::harness::gt_labels(scene.n()),
    )?;
    let matches_path = c.out.out_dir.join("matches.csv");
    let mut rows: Vec<Vec<String>> = (0..scene.m())
        .map(|j| {
            let gt = hard.ground_truth_of(j);
            vec![
                j.to_string(),
                gt.map_or_else(|| "bg".into(), |i| i.to_string()),
                gt.map_or_else(|| "0".into(), |i| g17(plan.gamma()[[j, i]])),
                gt.map_or_else(|| "0".into(), |i| g17(cost.values()[[j, i]])),
            ]
        })
        .collect();
    rows.sort_by_key(|r| r[0].parse::<usize>().unwrap_or(usize::MAX));
    write_csv(
        &matches_path,
        &["prediction", "ground_truth", "mass", "cost"],
        &rows,
    )?;

    let d = plan.diagnostics();
    println!(
        "solver={:?} eps={} iterations={} converged={} transport_cost={}",
        c.solver,
        g17(eps),
        d.iterations,
        d.converged,
        g17(crate::solvers::transport_cost(&plan, &cost)?)
    );
    println!("{}", plan_path.display());
    println!("{}", matches_path.display());
    if !d.converged {
        eprintln!(
            "warning: solver stopped at {} iterations with residual {}",
            d.iterations,
            g17(d.marginal_residual)
        );
    }
    Ok(())
}

fn run_sweep(c: SweepCmd) -> anyhow::Result<()> {
    let scene = c.scene.load()?;
    let weights = c.weights.weights()?;
    let config = SweepConfig {
        kappa2: c.rtp.kappa2,
        variant: c.rtp.variant.into(),
        ..SweepConfig::default()
    };
    let records = epsilon_sweep(&scene, &weights, &c.eps.0, &config)?;
    ensure_dir(&c.out.out_dir)?;
    let path = c.out.out_dir.join("sweep.csv");
    crate::harness::write_sweep_csv(&records, &path)?;
    for r in records.iter().filter(|r| !r.converged) {
        eprintln!(
            "warning: eps={} did not converge in {} iterations",
            g17(r.eps),
            r.iterations
        );
    }
    println!("{}", path.display());
    Ok(())
}

fn run_compare(c: CompareCmd) -> anyhow::Result<()> {
    let scene = c.scene.load()?;
    let weights = c.weights.weights()?;
    let config = CompareConfig {
        eps: c.eps.resolve(scene.m())?,
        kappa2: c.rtp.kappa2,
        variant: c.rtp.variant.into(),
        background: background(c.bg_cost),
    };
    let comparison = compare_matchers(&scene, &weights, &config)?;
    for note in &comparison.notes {
        eprintln!("note: {note}");
    }
    for path in write_comparison(&scene, &comparison, &c.out.out_dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn run_ablate(c: AblateCmd) -> anyhow::Result<()> {
    let weights = c.weights.weights()?;
    let config = c.generator.config();
    let scenes: Vec<Scene> = (0..c.scenes as u64)
        .map(|k| generate_scene(&config, c.generator.seed.wrapping_add(k)))
        .collect::<crate::Result<_>>()?;
    let table = ablation_grid(
        &scenes,
        &weights,
        &c.eps0_grid,
        &c.kappa2_grid,
        c.variant.into(),
    )?;
    ensure_dir(&c.out.out_dir)?;
    let path = c.out.out_dir.join("ablation.csv");
    write_ablation_csv(&table, &path)?;
    let best = table.best_cell();
    println!(
        "best eps0={} kappa2={} mean_f1={}",
        g17(best.eps0),
        g17(best.kappa2),
        g17(best.mean_f1)
    );
    println!("{}", path.display());
    Ok(())
}

fn run_bench(c: BenchCmd) -> anyhow::Result<()> {
    let report = timing_benchmark(&c.sizes, c.iters, c.repeats)?;
    ensure_dir(&c.out.out_dir)?;
    let path = c.out.out_dir.join("bench.csv");
    write_bench_csv(&report, &path)?;
    for r in &report.records {
        println!("{}x{}: {:.3e} s/iter", r.m, r.n, r.seconds_per_iter);
    }
    if let Some(slope) = report.slope {
        println!("log-log slope vs M*N: {slope:.3}");
    }
    println!("{}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn eps_grid_forms() {
        assert_eq!(eps_grid("0.01:1.0:10").unwrap().0.len(), 10);
        assert_eq!(eps_grid("0.1,0.2,0.5").unwrap().0, vec![0.1, 0.2, 0.5]);
        assert!(eps_grid("0.1").is_err());
        assert!(eps_grid("0:1:5").is_err());
        assert!(eps_grid("0.5,0.1").is_err());
        assert!(eps_grid("1:2").is_err());
    }

    #[test]
    fn scene_source_is_exclusive() {
        assert!(Cli::try_parse_from(["rtpmatch", "compare"]).is_err());
        assert!(Cli::try_parse_from(["rtpmatch", "compare", "s.json", "--generate"]).is_err());
        assert!(Cli::try_parse_from(["rtpmatch", "compare", "--generate"]).is_ok());
        assert!(Cli::try_parse_from([
            "rtpmatch", "match", "s.json", "--eps", "0.1", "--eps0", "0.2"
        ])
        .is_err());
        assert!(Cli::try_parse_from(["rtpmatch", "match", "s.json", "--kappa2", "1.5"]).is_err());
    }
}
