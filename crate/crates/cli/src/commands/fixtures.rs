use chrono::{NaiveDate, TimeZone, Utc};
use serde_json::json;

use credigraph_core::fixtures::{generate_crawl, CrawlFixtureConfig};

use super::{settings, Context, GenFixturesArgs};
use crate::config::ensure_dir;
use crate::error::{input_error, InputContext};
use crate::job::{dir_manifest, run_job, Counters, JobOutput, JobSpec};

pub fn gen_fixtures(args: GenFixturesArgs, ctx: &Context) -> anyhow::Result<()> {
    let seed = args.seed.unwrap_or(ctx.config.seed);
    let day = NaiveDate::parse_from_str(&args.crawl_start, "%Y-%m-%d")
        .input(|| format!("--crawl-start `{}` is not YYYY-MM-DD", args.crawl_start))?;
    if args.domains < 2 || args.records_per_file == 0 {
        return Err(input_error("need at least 2 domains and 1 record per file"));
    }
    let config = CrawlFixtureConfig {
        domains: args.domains,
        links: args.links,
        seed,
        crawl_start: Utc.from_utc_datetime(&day.and_hms_opt(0, 0, 0).unwrap()),
        records_per_file: args.records_per_file,
        ..CrawlFixtureConfig::default()
    };
    ensure_dir(&args.out)?;
    let spec = JobSpec {
        command: "gen-fixtures",
        inputs: Vec::new(),
        config: settings(&args, json!({ "seed": seed, "label_fraction": config.label_fraction })),
        manifest_path: dir_manifest(&args.out, "gen-fixtures"),
        force: ctx.force,
    };
    run_job(spec, || {
        let truth = generate_crawl(config).write(&args.out)?;
        let mut outputs: Vec<_> = truth.wat_files.iter().chain(&truth.wet_files).map(|f| f.path.clone()).collect();
        outputs.extend([truth.labels_csv.clone(), truth.homepages_json.clone(), args.out.join("ground_truth.json")]);
        let records = truth.wat_files.iter().chain(&truth.wet_files).map(|f| f.records.len() as u64).sum();
        println!(
            "wrote {} pages, {} nodes, {} edges, {} label rows to {}",
            truth.pages,
            truth.graph.nodes,
            truth.graph.edges,
            truth.label_rows,
            args.out.display()
        );
        Ok(JobOutput { outputs, counters: Counters { records, ..Counters::default() } })
    })?;
    Ok(())
}
