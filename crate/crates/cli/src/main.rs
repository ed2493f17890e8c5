use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cogconn::config::PipelineConfig;
use cogconn::data::{validate_dataset, LabelKind};
use cogconn::io::{load_manifest, read_feature_store, write_feature_store};
use cogconn::pipeline::{
    labels_path, read_labels, run_curves, run_eval, run_extract, write_curves, write_eval_outputs, write_labels,
    FeatureTable,
};
use cogconn::synth::{generate_dataset, MANIFEST_NAME};
use cogconn::Error;

#[derive(Parser)]
#[command(name = "cogconn", version, about = "Coherence-network features and recall-failure detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Label {
    Digit,
    Sentence,
}

impl From<Label> for LabelKind {
    fn from(l: Label) -> Self {
        match l {
            Label::Digit => LabelKind::Digit,
            Label::Sentence => LabelKind::Sentence,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (manifest plus signal files).
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter every trial and write the long-format feature store.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Drop trials whose extraction fails instead of stopping.
        #[arg(long)]
        skip_bad: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Leave-one-subject-out evaluation and the band by family report.
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        label: Label,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Labels file; defaults to the one written beside the features.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Class-mean z-scored eigenvalue and graph-variability curves.
    Curves {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        label: Label,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Error> {
    path.map_or_else(|| Ok(PipelineConfig::default()), PipelineConfig::from_file)
}

fn set_threads(threads: Option<usize>) -> Result<(), Error> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("--threads {n}: {e}")))?;
    }
    Ok(())
}

fn load_table(features: &Path, labels: Option<&Path>) -> Result<(FeatureTable, Vec<cogconn::pipeline::TrialLabels>), Error> {
    let table = FeatureTable::from_records(&read_feature_store(features)?)?;
    let labels = read_labels(&labels.map_or_else(|| labels_path(features), Path::to_path_buf))?;
    Ok((table, labels))
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth { config, out } => {
            let config = load_config(config.as_deref())?;
            let dataset = generate_dataset(&config.synth, &out)?;
            let digit_fail = dataset.trials.iter().filter(|t| !t.digit_correct).count();
            let sentence_fail = dataset.trials.iter().filter(|t| !t.sentence_correct).count();
            println!(
                "wrote {} trials for {} subjects to {}",
                dataset.len(),
                dataset.subjects.len(),
                out.join(MANIFEST_NAME).display()
            );
            println!("digit failures: {digit_fail}, sentence failures: {sentence_fail}");
        }
        Command::Extract { manifest, config, out, skip_bad, threads } => {
            set_threads(threads)?;
            let config = load_config(config.as_deref())?;
            let dataset = load_manifest(&manifest)?;
            for w in validate_dataset(&dataset) {
                log::warn!("{w}");
            }
            let extraction = run_extract(&dataset, &config, skip_bad)?;
            write_feature_store(&out, &extraction.records)?;
            write_labels(&labels_path(&out), &extraction.labels)?;
            for (trial, reason) in &extraction.skipped {
                eprintln!("warning: skipped {trial}: {reason}");
            }
            println!(
                "extracted {} trials ({} skipped) to {}",
                extraction.labels.len(),
                extraction.skipped.len(),
                out.display()
            );
        }
        Command::Eval { features, label, config, out, labels, threads } => {
            set_threads(threads)?;
            let config = load_config(config.as_deref())?;
            let (table, trial_labels) = load_table(&features, labels.as_deref())?;
            let evaluation = run_eval(&table, &trial_labels, &config)?;
            let label = LabelKind::from(label);
            write_eval_outputs(&out, &evaluation, &table, label, &config)?;
            print!("{}", evaluation.report.table_csv);
            let f = evaluation.fusion_for(label);
            println!("{label} all-family fusion: AUC {:.4}, p = {:.3e}", f.auc, f.p_value);
        }
        Command::Curves { features, label, out, labels } => {
            let (table, trial_labels) = load_table(&features, labels.as_deref())?;
            let curves = run_curves(&table, &trial_labels, label.into())?;
            write_curves(&out, &curves)?;
            println!("wrote curves for {} bands to {}", curves.eigen.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
