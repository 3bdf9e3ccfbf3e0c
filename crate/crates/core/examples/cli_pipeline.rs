//! The command-line pipeline driven in-process: synthesize data, train,
//! calibrate at three x-slices and export a quantile band.
//!
//! Same as running the `nss` binary with these arguments.

fn main() {
    let out = std::env::temp_dir().join("nss-cli-example");
    let out = out.to_str().expect("utf-8 temp path");
    let steps: [&[&str]; 4] = [
        &["synth", "--n", "2000"],
        &[
            "train",
            "--plan",
            "nss-sum",
            "--data",
            &format!("{out}/synth.csv"),
            "--epochs",
            "30",
        ],
        &["calibrate", "--x", "0.5,1.0,1.5"],
        &["quantiles", "--points", "50", "--levels", "19"],
    ];
    for step in steps {
        let mut args = vec!["nss", "--out", out, "--seed", "7"];
        args.extend_from_slice(step);
        println!("$ {}", args.join(" "));
        let code = nss::cli::run(args);
        if code != 0 {
            eprintln!("exit status {code}");
            std::process::exit(code);
        }
    }
    let manifest = std::fs::read_to_string(format!("{out}/train.manifest.toml")).unwrap_or_default();
    println!("\ntrain manifest:\n{manifest}");
}
