//! Regenerate the bundled applications, traces and scenarios under `data/`.
//!
//! cargo run -p hgscale-core --example gen_data -- [out_dir]

use std::path::PathBuf;

use hgscale::model::AppSpec;
use hgscale::workload::{synthetic_trace, TraceShape};

const APPS: [(&str, usize, u64); 5] = [
    ("a11", 11, 11),
    ("a12", 12, 12),
    ("a13", 13, 13),
    ("a14", 14, 14),
    ("a30", 30, 30),
];

fn main() -> hgscale::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"));
    for sub in ["apps", "traces", "scenarios"] {
        std::fs::create_dir_all(out.join(sub))?;
    }

    for (name, n, seed) in APPS {
        let spec = AppSpec::synthetic(name, n, (50.0, 400.0), seed);
        std::fs::write(out.join(format!("apps/{name}.json")), spec.to_json_string()? + "\n")?;
    }
    let toy = AppSpec::chain("toy", &[200.0, 300.0, 250.0, 400.0, 150.0]);
    std::fs::write(out.join("apps/toy.json"), toy.to_json_string()? + "\n")?;

    // Smooth and light, spiky and bursty.
    let shapes = [
        (
            "nasa",
            TraceShape {
                base: 350.0,
                amplitude: 0.6,
                noise: 0.15,
                burst_prob: 0.02,
                ..TraceShape::default()
            },
        ),
        (
            "wiki",
            TraceShape {
                base: 600.0,
                amplitude: 0.35,
                noise: 0.05,
                burst_prob: 0.0,
                ..TraceShape::default()
            },
        ),
        (
            "alibaba",
            TraceShape {
                base: 500.0,
                amplitude: 0.45,
                noise: 0.2,
                burst_prob: 0.03,
                burst_factor: 3.0,
                ..TraceShape::default()
            },
        ),
    ];
    for (i, (name, shape)) in shapes.iter().enumerate() {
        synthetic_trace(name, 960, shape, 100 + i as u64)?.write_csv(out.join(format!("traces/{name}.csv")))?;
    }
    let toy_shape = TraceShape {
        base: 150.0,
        amplitude: 0.4,
        period: 40,
        burst_prob: 0.05,
        ..TraceShape::default()
    };
    synthetic_trace("toy", 80, &toy_shape, 7)?.write_csv(out.join("traces/toy.csv"))?;

    let scenario = |name: &str, app: &str, trace: &str, extra: &str| {
        format!(
            "{{\n  \"name\": \"{name}\",\n  \"app_file\": \"../apps/{app}.json\",\n  \"trace_file\": \"../traces/{trace}.csv\"{extra}\n}}\n"
        )
    };
    for (app, _, _) in APPS {
        for (trace, _) in &shapes {
            let name = format!("{trace}-{app}");
            std::fs::write(
                out.join(format!("scenarios/{name}.json")),
                scenario(&name, app, trace, ",\n  \"jitter_seed\": 1"),
            )?;
        }
    }
    std::fs::write(
        out.join("scenarios/toy.json"),
        scenario("toy", "toy", "toy", ",\n  \"budget_usd\": 20,\n  \"horizon_steps\": 40"),
    )?;
    println!("wrote {}", out.display());
    Ok(())
}
