// A short coverage run: 20 x 30 two-component signal at three noise levels.

use fepca::{
    run_coverage_experiment, Alignment, InferenceOptions, Method, NoiseLevel, SignalSpec,
    SimulationConfig, TruthMap,
};

fn run_example() -> fepca::Result<String> {
    let cfg = SimulationConfig {
        signal: SignalSpec::Generated {
            n: 20,
            p: 30,
            ratio: 4.0,
        },
        rank: 2,
        noise: vec![
            NoiseLevel::Snr(4.0),
            NoiseLevel::Snr(2.0),
            NoiseLevel::Snr(1.0),
        ],
        replicates: 20,
        methods: vec![
            Method::Asymptotic,
            Method::Bootstrap,
            Method::ApproxJackknife,
        ],
        level: 0.95,
        seed: 2024,
        inference: InferenceOptions {
            asymptotic_draws: 200,
            bootstrap_draws: 200,
            ..InferenceOptions::default()
        },
        alignment: Alignment::None,
        truth: TruthMap::Projection,
    };
    let table = run_coverage_experiment(&cfg)?;
    let mut out = format!("{:<8}", "");
    for m in &table.methods {
        out += &format!("{:>18}", m.name());
    }
    out.push('\n');
    for c in &table.conditions {
        out += &format!("{c:<8}");
        for m in &table.methods {
            let cell = table.get(c, *m).expect("cell present");
            out += &format!("{:>11.3} ±{:.3}", cell.coverage, cell.std_error);
        }
        out.push('\n');
    }
    Ok(out)
}

fn main() -> fepca::Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
