// Bootstrap confidence ellipses for the decathlon athletes on the first
// plane, written as results files plus an SVG factor map.

use fepca::{
    infer, read_csv, render_svg, write_results, CsvOptions, InferRequest, Method, SvgOptions,
};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/decathlon.csv");

fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let data = read_csv(DATA, &CsvOptions::default())?;
    let mut req = InferRequest::new(4);
    req.scale = true;
    req.method = Some(Method::Bootstrap);
    req.options.bootstrap_draws = 200;
    req.seed = 42;
    let bundle = infer(&data, &req)?;

    let dir = std::env::temp_dir().join("fepca-ellipses-example");
    write_results(&bundle, &dir)?;
    let svg = render_svg(&bundle, [1, 2], &SvgOptions::default())?;
    std::fs::write(dir.join("map_1_2.svg"), &svg)?;

    let mut widest: Vec<_> = bundle
        .ellipses
        .iter()
        .map(|e| (e.cov[0][0] + e.cov[1][1], &e.label))
        .collect();
    widest.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = format!(
        "{} ellipses written to {}\n",
        bundle.ellipses.len(),
        dir.display()
    );
    for (t, label) in widest.iter().take(3) {
        out += &format!("{label:>12}  total variance {t:.4}\n");
    }
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
