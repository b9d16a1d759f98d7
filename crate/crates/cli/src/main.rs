use std::process::ExitCode;

use clap::Parser;
use diffmel_cli::args::{BenchArgs, Cli, Command, VerifyArgs};
use diffmel_cli::bench::{bench_predictor, run_bench, to_csv, BenchConfig};
use diffmel_cli::commands::{
    grad_check_cmd, read_schedule, sample_cmd, schedule_cmd, train_toy_cmd,
};
use diffmel_cli::verify::{report, run_all, NUM_CRITERIA};
use diffmel_cli::{CliError, CliResult};
use diffmel_core::NoiseSchedule;

fn bench(args: &BenchArgs) -> CliResult<()> {
    let schedule = NoiseSchedule::default();
    let predictor = bench_predictor(args.predictor, args.channels, &schedule)?;
    let config = BenchConfig {
        channels: args.channels,
        frames: args.frames,
        repeats: args.repeats,
        warmup: args.warmup,
        seed: args.seed,
    };
    let csv = to_csv(&run_bench(
        predictor.as_ref(),
        &schedule,
        &args.gammas,
        &config,
    )?);
    let path = args
        .output
        .clone()
        .unwrap_or_else(|| args.out.out_dir.join("bench.csv"));
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::File {
            path: dir.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(&path, &csv).map_err(|e| CliError::File {
        path: path.display().to_string(),
        source: e,
    })?;
    print!("{csv}");
    Ok(())
}

fn verify(args: &VerifyArgs) -> CliResult<()> {
    let schedule = match &args.schedule {
        Some(path) => read_schedule(path)?,
        None => NoiseSchedule::default(),
    };
    if let Some(bad) = args.only.iter().find(|&&i| i == 0 || i > NUM_CRITERIA) {
        return Err(CliError::Usage(format!("no criterion {bad}")));
    }
    let results = run_all(&schedule, &args.only);
    print!("{}", report(&results, args.seed));
    let failed = results.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(CliError::VerifyFailed {
            failed,
            total: results.len(),
        });
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Schedule(args) => {
            println!("{}", schedule_cmd(&args)?.display());
        }
        Command::Sample(args) => {
            let out = sample_cmd(&args)?;
            for f in &out.files {
                println!("{}", f.display());
            }
            println!("{}", out.manifest.display());
        }
        Command::TrainToy(args) => {
            let out = train_toy_cmd(&args)?;
            println!("params {}", out.params.display());
            println!("loss curve {}", out.curve.display());
            println!("final loss {:.6}", out.final_loss);
        }
        Command::Bench(args) => bench(&args)?,
        Command::Verify(args) => verify(&args)?,
        Command::GradCheck(args) => {
            let r = grad_check_cmd(&args)?;
            println!(
                "max_rel_error={:e} checked={} skipped={}",
                r.max_rel_error, r.checked, r.skipped
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap uses 2 for usage errors; here 2 is reserved for numerical failures
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
