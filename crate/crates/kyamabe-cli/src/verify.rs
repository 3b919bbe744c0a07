use crate::{display, Ctx, Failure, EXIT_OK, EXIT_VERIFY};
use kyamabe::suites::{run_suites, CheckReport, SUITES};
use serde::Serialize;
use std::fmt::Write;

#[derive(Serialize)]
struct Summary<'a> {
    seed: u64,
    threads: usize,
    suites: Vec<&'a str>,
    checks: usize,
    failed: usize,
    cases: usize,
    reports: &'a [CheckReport],
}

fn escape(s: &str) -> String {
    let mut o = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => o.push_str("&amp;"),
            '<' => o.push_str("&lt;"),
            '>' => o.push_str("&gt;"),
            '"' => o.push_str("&quot;"),
            '\'' => o.push_str("&apos;"),
            _ => o.push(c),
        }
    }
    o
}

/// JUnit-style XML without timing attributes, so equal runs give equal bytes.
pub fn junit(reports: &[CheckReport], suites: &[&str]) -> String {
    let failed = reports.iter().filter(|r| !r.passed).count();
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(s, "<testsuites name=\"kyamabe-verify\" tests=\"{}\" failures=\"{failed}\">", reports.len());
    for suite in suites {
        let rs: Vec<_> = reports.iter().filter(|r| r.suite == *suite).collect();
        let f = rs.iter().filter(|r| !r.passed).count();
        let _ = writeln!(s, "  <testsuite name=\"{suite}\" tests=\"{}\" failures=\"{f}\">", rs.len());
        for r in rs {
            let _ = writeln!(s, "    <testcase classname=\"{suite}\" name=\"{}\">", escape(&r.name));
            if !r.passed {
                let msg = r.failure.as_deref().unwrap_or("failed");
                let _ = writeln!(s, "      <failure message=\"{}\"/>", escape(msg));
            }
            let _ = writeln!(s, "      <system-out>cases={} worst={:e} {}</system-out>", r.cases, r.worst, escape(&r.detail));
            s.push_str("    </testcase>\n");
        }
        s.push_str("  </testsuite>\n");
    }
    s.push_str("</testsuites>\n");
    s
}

pub fn run(ctx: &Ctx) -> Result<u8, Failure> {
    let filter = ctx.cfg.texts("suite");
    if let Some(bad) = filter.iter().find(|s| !SUITES.contains(&s.as_str())) {
        return Err(Failure::Config(format!("unknown suite `{bad}`; known: {}", SUITES.join(", "))));
    }
    let reports = run_suites(&filter, ctx.seed)?;
    let suites: Vec<&str> = SUITES.iter().copied().filter(|s| filter.is_empty() || filter.iter().any(|f| f == s)).collect();
    let failed = reports.iter().filter(|r| !r.passed).count();
    let summary = Summary {
        seed: ctx.seed,
        threads: ctx.threads,
        suites: suites.clone(),
        checks: reports.len(),
        failed,
        cases: reports.iter().map(|r| r.cases).sum(),
        reports: &reports,
    };
    let xml = ctx.write("verify.xml", &junit(&reports, &suites))?;
    let json = ctx.write_json("verify.json", &summary)?;
    for r in &reports {
        println!("{} {}/{} ({} cases, worst {:e})", if r.passed { "PASS" } else { "FAIL" }, r.suite, r.name, r.cases, r.worst);
    }
    println!("{} checks, {failed} failed; wrote {} and {}", reports.len(), display(&xml), display(&json));
    if failed == 0 {
        return Ok(EXIT_OK);
    }
    for r in reports.iter().filter(|r| !r.passed) {
        eprintln!(
            "reproduce {}/{}: kyamabe verify --suite {} --seed {} ({})",
            r.suite,
            r.name,
            r.suite,
            ctx.seed,
            r.failure.as_deref().unwrap_or("")
        );
    }
    Ok(EXIT_VERIFY)
}
